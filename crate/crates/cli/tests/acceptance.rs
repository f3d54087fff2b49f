//! Acceptance criteria, one line per criterion. Runs without the libtest
//! harness so the report is printed even when every check passes.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::Parser;
use embtag::corpus::{Corpus, Sentence, Vocabulary};
use embtag::crfae::{
    self, objective_and_gradient, CrfAeConfig, CrfAeModel, FeatureExtractor, Reconstruction, ReconstructionLabels,
    Targets, Template,
};
use embtag::embeddings::{
    embed_corpus, load_word2vec_binary, load_word2vec_text, Coverage, EmbeddedCorpus, EmbeddedSentence,
};
use embtag::eval::{build_contingency, many_to_one, v_measure, ContingencyTable};
use embtag::hmm::{
    self, e_step, m_step_gaussian_covariance, m_step_gaussian_mean, CovarianceMode, GaussianEmission, GaussianStats,
    HmmConfig, HmmModel, Observations,
};
use embtag::lattice::{brute_force_posteriors, forward_backward, ChainPotentials, DecodeMode};
use embtag::rng::{substream, Rng as ChaCha};
use embtag::synthetic::{generate, SyntheticConfig};
use embtag_cli::config::{RunConfig, Settings};
use embtag_cli::pipeline::{self, Inputs, Metrics};
use ndarray::{Array1, Array2};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(
        elapsed <= Duration::from_secs(limit_secs),
        format!("took {:.1} s, limit {limit_secs} s", elapsed.as_secs_f64()),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn uniform(r: &mut ChaCha, scale: f64) -> f64 {
    (r.random::<f64>() * 2.0 - 1.0) * scale
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let mut r = substream(1, "acceptance.lattice");
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let k = r.random_range(2..=3);
        let len = r.random_range(1..=6);
        let scale = 0.1 + r.random::<f64>() * 20.0;
        let p = ChainPotentials {
            start: Array1::from_shape_fn(k, |_| uniform(&mut r, scale)),
            transition: Array2::from_shape_fn((k, k), |_| uniform(&mut r, scale)),
            stop: Array1::from_shape_fn(k, |_| uniform(&mut r, scale)),
            emission: Array2::from_shape_fn((len, k), |_| uniform(&mut r, scale)),
        };
        let fb = forward_backward(&p).map_err(|e| e.to_string())?;
        let bf = brute_force_posteriors(&p).map_err(|e| e.to_string())?;
        worst = worst.max((fb.log_partition - bf.log_partition).abs());
        for (a, b) in fb
            .unary
            .iter()
            .zip(&bf.unary)
            .chain(fb.pairwise.iter().zip(&bf.pairwise))
        {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-10, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 10)?;
    Ok(format!("200 instances, max deviation {worst:.1e}"))
}

fn hundred_sentences(seed: u64) -> (Corpus, EmbeddedCorpus<f64>) {
    let data = generate(
        &SyntheticConfig {
            num_tokens: 1600,
            ..SyntheticConfig::default()
        },
        seed,
    )
    .expect("synthetic data");
    let mut corpus = data.corpus;
    corpus.sentences.truncate(100);
    let emb = embed_corpus(&corpus, &data.table).expect("embedding");
    (corpus, emb)
}

fn worst_drop(mut model: HmmModel<f64>, obs: Observations<'_, f64>) -> Result<f64, String> {
    let mut prev = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let stats = e_step(&model, obs).map_err(|e| e.to_string())?;
        worst = worst.max(prev - stats.log_likelihood);
        prev = stats.log_likelihood;
        model.m_step(&stats);
    }
    Ok(worst)
}

fn em_monotonicity() -> Check {
    let start = Instant::now();
    let (corpus, emb) = hundred_sentences(21);
    let gaussian = HmmConfig::gaussian(3);
    let g0 = hmm::initialize(&gaussian, Observations::Vectors(&emb), 2).map_err(|e| e.to_string())?;
    let g = worst_drop(g0, Observations::Vectors(&emb))?;
    let multinomial = HmmConfig::multinomial(3);
    let m0 = hmm::initialize(&multinomial, Observations::<f64>::Words(&corpus), 2).map_err(|e| e.to_string())?;
    let m = worst_drop(m0, Observations::Words(&corpus))?;
    ensure(
        g <= 1e-8 && m <= 1e-8,
        format!("largest drop gaussian {g:e}, multinomial {m:e}"),
    )?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "50 iterations, largest step decrease gaussian {g:.1e}, multinomial {m:.1e}"
    ))
}

fn m_step_hand_examples() -> Check {
    let mut cases: Vec<(&str, f64, f64)> = Vec::new();
    let mut st = GaussianStats::<f64>::zeros(1, 2);
    st.accumulate(0, &[1.0, 0.0], 0.25);
    st.accumulate(0, &[0.0, 1.0], 0.75);
    let mu = m_step_gaussian_mean(&st, &Array2::zeros((1, 2)));
    cases.push(("mean[0]", mu[[0, 0]], 0.25));
    cases.push(("mean[1]", mu[[0, 1]], 0.75));

    let mut st = GaussianStats::<f64>::zeros(1, 1);
    st.accumulate(0, &[-1.0], 0.5);
    st.accumulate(0, &[1.0], 0.5);
    let mu = m_step_gaussian_mean(&st, &Array2::zeros((1, 1)));
    let var = m_step_gaussian_covariance(&st, &mu, &Array2::ones((1, 1)), 1e-4);
    cases.push(("symmetric mean", mu[[0, 0]], 0.0));
    cases.push(("symmetric variance", var[[0, 0]], 1.0));

    let mut st = GaussianStats::<f64>::zeros(1, 1);
    st.accumulate(0, &[0.0], 1.0);
    st.accumulate(0, &[4.0], 3.0);
    let mu = m_step_gaussian_mean(&st, &Array2::zeros((1, 1)));
    let var = m_step_gaussian_covariance(&st, &mu, &Array2::ones((1, 1)), 1e-4);
    cases.push(("weighted mean", mu[[0, 0]], 3.0));
    cases.push(("weighted variance", var[[0, 0]], 3.0));

    let mut st = GaussianStats::<f64>::zeros(1, 1);
    st.accumulate(0, &[0.3], 1.0);
    let mu = m_step_gaussian_mean(&st, &Array2::zeros((1, 1)));
    let var = m_step_gaussian_covariance(&st, &mu, &Array2::ones((1, 1)), 1e-4);
    cases.push(("floored variance", var[[0, 0]], 1e-4));

    for (name, got, want) in &cases {
        ensure((got - want).abs() <= 1e-12, format!("{name}: {got} vs {want}"))?;
    }
    Ok(format!("{} hand values exact to 1e-12", cases.len()))
}

fn v_of(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<f64, String> {
    Ok(v_measure(&build_contingency(gold, pred).map_err(|e| e.to_string())?).v_measure)
}

fn parameter_recovery() -> Check {
    let start = Instant::now();
    let data = generate(&SyntheticConfig::default(), 7).map_err(|e| e.to_string())?;
    let emb = embed_corpus(&data.corpus, &data.table).map_err(|e| e.to_string())?;
    let obs = Observations::Vectors(&emb);
    let out = hmm::train_with_restarts(&HmmConfig::gaussian(3), obs, 11, 5).map_err(|e| e.to_string())?;
    let pred = hmm::decode(&out.model, obs, DecodeMode::Viterbi).map_err(|e| e.to_string())?;
    let v = v_of(&data.corpus.gold().map_err(|e| e.to_string())?, &pred)?;
    ensure(v >= 0.95, format!("V-measure {v:.4}"))?;
    within(start.elapsed(), 120)?;
    Ok(format!("{} tokens, V-measure {v:.4}", data.corpus.num_tokens()))
}

fn toy_batch(r: &mut ChaCha) -> (Corpus, EmbeddedCorpus<f64>) {
    let lens: Vec<usize> = (0..3).map(|_| r.random_range(1..=5)).collect();
    let mut vocabulary = Vocabulary::new();
    for j in 0..5 {
        vocabulary.add(&format!("w{j}"));
    }
    let sentences = lens
        .iter()
        .map(|&l| Sentence {
            tokens: (0..l).map(|_| r.random_range(0..5)).collect(),
            gold_tags: None,
        })
        .collect();
    let corpus = Corpus {
        sentences,
        vocabulary,
        tag_inventory: Vec::new(),
    };
    let rows: Vec<EmbeddedSentence<f64>> = lens
        .iter()
        .map(|&l| {
            let v: Vec<Vec<f64>> = (0..l).map(|_| (0..3).map(|_| uniform(r, 1.5)).collect()).collect();
            EmbeddedSentence::from_rows(3, &v)
        })
        .collect();
    let tokens = lens.iter().sum();
    let emb = EmbeddedCorpus {
        sentences: rows,
        coverage: Coverage {
            tokens,
            oov_tokens: 0,
            types: tokens,
            oov_types: 0,
        },
    };
    (corpus, emb)
}

fn relative_gradient_error(
    model: &CrfAeModel<f64>,
    corpus: &Corpus,
    targets: Targets<'_, f64>,
    l2: f64,
) -> Result<f64, String> {
    let h = 1e-5;
    let encoded = model.extractor.encode(corpus);
    let f = |m: &CrfAeModel<f64>| objective_and_gradient(m, &encoded, targets, l2).map_err(|e| e.to_string());
    let (_, grad) = f(model)?;
    let mut probe = model.clone();
    let mut fd = Array1::zeros(grad.len());
    for j in 0..grad.len() {
        let w = model.weights[j];
        probe.weights[j] = w + h;
        let up = f(&probe)?.0;
        probe.weights[j] = w - h;
        let down = f(&probe)?.0;
        probe.weights[j] = w;
        fd[j] = (up - down) / (2.0 * h);
    }
    let norm = |a: &Array1<f64>| a.mapv(|x| x * x).sum().sqrt();
    Ok(norm(&(&grad - &fd)) / norm(&grad).max(norm(&fd)).max(1e-8))
}

fn gradient_check() -> Check {
    let start = Instant::now();
    let mut r = substream(5, "acceptance.gradient");
    let mut worst = 0.0f64;
    let mut max_features = 0;
    for batch in 0..20 {
        let (corpus, emb) = toy_batch(&mut r);
        let k = r.random_range(2..=3);
        let extractor = FeatureExtractor::build(&Template::ALL, k, &corpus);
        max_features = max_features.max(extractor.num_features());
        let weights = Array1::from_shape_fn(extractor.num_features(), |_| uniform(&mut r, 1.0));
        let labelled = batch % 2 == 1;
        let (reconstruction, labels) = if labelled {
            let labels = ReconstructionLabels {
                sentences: corpus
                    .sentences
                    .iter()
                    .map(|s| s.tokens.iter().map(|_| r.random_range(0..4)).collect())
                    .collect(),
                inventory: (0..4).map(|i| format!("c{i}")).collect(),
            };
            let mut probs = Array2::from_shape_fn((k, 4), |_| r.random::<f64>() + 0.1);
            for mut row in probs.rows_mut() {
                let s = row.sum();
                row.mapv_inplace(|p| p / s);
            }
            (
                Reconstruction::Multinomial {
                    labels: labels.inventory.clone(),
                    probs,
                },
                Some(labels),
            )
        } else {
            let means = Array2::from_shape_fn((k, 3), |_| uniform(&mut r, 1.0));
            (
                Reconstruction::Gaussian(GaussianEmission::with_fixed_variance(
                    means,
                    0.45,
                    CovarianceMode::Fixed,
                    1e-4,
                )),
                None,
            )
        };
        let model = CrfAeModel {
            extractor,
            weights,
            reconstruction,
        };
        let targets = match &labels {
            Some(l) => Targets::Labels(l),
            None => Targets::Vectors(&emb),
        };
        let l2 = if batch % 4 == 0 { 0.1 } else { 0.0 };
        worst = worst.max(relative_gradient_error(&model, &corpus, targets, l2)?);
    }
    ensure(max_features <= 200, format!("{max_features} features"))?;
    ensure(worst < 1e-6, format!("relative error {worst:e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "20 batches, up to {max_features} features, worst relative error {worst:.1e}"
    ))
}

fn crfae_recovery() -> Check {
    let start = Instant::now();
    let data = generate(&SyntheticConfig::default(), 7).map_err(|e| e.to_string())?;
    let emb = embed_corpus(&data.corpus, &data.table).map_err(|e| e.to_string())?;
    let mut config = CrfAeConfig::gaussian(3);
    config.templates = vec![Template::Word];
    let out =
        crfae::train_with_restarts(&config, &data.corpus, Targets::Vectors(&emb), 11, 5).map_err(|e| e.to_string())?;
    let encoded = out.model.extractor.encode(&data.corpus);
    let pred = out
        .model
        .decode(&encoded, Targets::Vectors(&emb), DecodeMode::Viterbi)
        .map_err(|e| e.to_string())?;
    let v = v_of(&data.corpus.gold().map_err(|e| e.to_string())?, &pred)?;
    ensure(v >= 0.95, format!("V-measure {v:.4}"))?;
    within(start.elapsed(), 300)?;
    Ok(format!("word-identity features, V-measure {v:.4}"))
}

fn entropy(ps: impl Iterator<Item = f64>) -> f64 {
    -ps.filter(|&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

fn oracle_metrics(counts: &[Vec<u64>]) -> (f64, f64, f64, f64) {
    let n = counts.iter().flatten().sum::<u64>() as f64;
    let clusters = counts[0].len();
    let hc = entropy(counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n));
    let hk = entropy((0..clusters).map(|k| counts.iter().map(|r| r[k]).sum::<u64>() as f64 / n));
    let joint = entropy(counts.iter().flatten().map(|&c| c as f64 / n));
    let hom = if hc == 0.0 {
        1.0
    } else {
        (1.0 - (joint - hk) / hc).clamp(0.0, 1.0)
    };
    let com = if hk == 0.0 {
        1.0
    } else {
        (1.0 - (joint - hc) / hk).clamp(0.0, 1.0)
    };
    let v = if hom + com == 0.0 {
        0.0
    } else {
        2.0 * hom * com / (hom + com)
    };
    let majority: u64 = (0..clusters)
        .map(|k| counts.iter().map(|r| r[k]).max().unwrap_or(0))
        .sum();
    (hom, com, v, majority as f64 / n)
}

fn metric_oracle() -> Check {
    let mut r = substream(7, "acceptance.metrics");
    let mut worst = 0.0f64;
    let mut tables = 0;
    while tables < 100 {
        let (c, k) = (r.random_range(1..=6), r.random_range(1..=6));
        let counts: Vec<Vec<u64>> = (0..c)
            .map(|_| (0..k).map(|_| r.random_range(0..20)).collect())
            .collect();
        if counts.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        tables += 1;
        let t = ContingencyTable::from_counts(counts.clone()).map_err(|e| e.to_string())?;
        let got = v_measure(&t);
        let (hom, com, v, m1) = oracle_metrics(&counts);
        for (a, b) in [
            (got.homogeneity, hom),
            (got.completeness, com),
            (got.v_measure, v),
            (many_to_one(&t), m1),
        ] {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    Ok(format!("100 tables, max deviation {worst:.1e}"))
}

fn determinism() -> Check {
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    let conf = fixture("train.conf");
    for d in &dirs {
        let cli = embtag_cli::Cli::try_parse_from([
            "embtag",
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--output",
            d.path().to_str().unwrap(),
        ])
        .map_err(|e| e.to_string())?;
        embtag_cli::run(&cli).map_err(|e| e.to_string())?;
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).map_err(|e| e.to_string());
    let trace = read(&dirs[0], "trace.tsv")?;
    ensure(trace == read(&dirs[1], "trace.tsv")?, "trace.tsv differs")?;
    ensure(
        read(&dirs[0], "model.json")? == read(&dirs[1], "model.json")?,
        "model.json differs",
    )?;
    Ok(format!(
        "trace.tsv identical ({} bytes), model.json identical",
        trace.len()
    ))
}

fn fixture_mean_v(model: &str) -> Result<f64, String> {
    let mut total = 0.0;
    for seed in 1..=5u64 {
        let mut s = Settings::default();
        s.set("model", model);
        s.set("corpus", fixture("corpus.conll").display().to_string());
        s.set("tag-map", fixture("tags.map").display().to_string());
        s.set("embeddings", fixture("vectors.txt").display().to_string());
        s.set("lowercase", "true");
        s.set("max-iterations", "50");
        s.set("seed", seed.to_string());
        let cfg = RunConfig::from_settings(&s).map_err(|e| e.to_string())?;
        let corpus = pipeline::load_corpus(&cfg).map_err(|e| e.to_string())?;
        let gold = corpus.gold().map_err(|e| e.to_string())?;
        let inputs =
            Inputs::<f64>::load(&cfg, corpus, cfg.model.needs_embeddings(), false).map_err(|e| e.to_string())?;
        let fit = pipeline::fit(&cfg, &inputs).map_err(|e| e.to_string())?;
        let pred = fit.model.predict(&inputs, cfg.decode).map_err(|e| e.to_string())?;
        total += Metrics::compute(&gold, &pred, None)
            .map_err(|e| e.to_string())?
            .v_measure;
    }
    Ok(total / 5.0)
}

fn fixture_ordering() -> Check {
    let gaussian = fixture_mean_v("hmm-gaussian")?;
    let multinomial = fixture_mean_v("hmm-multinomial")?;
    ensure(
        gaussian > multinomial,
        format!("gaussian {gaussian:.4} does not beat multinomial {multinomial:.4}"),
    )?;
    Ok(format!(
        "mean V over 5 seeds: gaussian {gaussian:.4} > multinomial {multinomial:.4} (published figures not claimed)"
    ))
}

fn format_fidelity() -> Check {
    let open = |name: &str| {
        std::fs::File::open(fixture(name))
            .map(std::io::BufReader::new)
            .map_err(|e| e.to_string())
    };
    let text = load_word2vec_text::<f64, _>(open("vectors.txt")?).map_err(|e| e.to_string())?;
    let binary = load_word2vec_binary::<f64, _>(open("vectors.bin")?).map_err(|e| e.to_string())?;
    ensure(text.words() == binary.words(), "vocabularies differ")?;
    ensure(text.dim() == binary.dim(), "dimensions differ")?;
    let mut worst = 0.0f64;
    for i in 0..text.len() {
        for (a, b) in text.row(i).iter().zip(binary.row(i)) {
            let err = (a - b).abs();
            ensure(
                err <= f64::from(f32::EPSILON) * a.abs().max(1.0),
                format!("{}: {a} vs {b}", text.words()[i]),
            )?;
            worst = worst.max(err);
        }
    }
    Ok(format!(
        "{} words x {} dims, max difference {worst:.1e}",
        text.len(),
        text.dim()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("forward-backward matches enumeration", oracle_equivalence),
        ("EM log-likelihood is monotone", em_monotonicity),
        ("M-step hand examples", m_step_hand_examples),
        ("Gaussian HMM parameter recovery", parameter_recovery),
        ("CRF-AE gradient check", gradient_check),
        ("CRF-AE parameter recovery", crfae_recovery),
        ("V-measure and many-to-one oracle", metric_oracle),
        ("train is byte-deterministic", determinism),
        ("Gaussian beats multinomial HMM on the fixture", fixture_ordering),
        ("word2vec text and binary agree", format_fidelity),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} [{secs:.2} s]: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{secs:.2} s]: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
