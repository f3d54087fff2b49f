#![allow(dead_code)]

use embtag::corpus::{Corpus, Sentence, Vocabulary};
use embtag::embeddings::{Coverage, EmbeddedCorpus, EmbeddedSentence};
use embtag::hmm::{CovarianceMode, Emission, GaussianEmission, HmmModel, MultinomialEmission, TransitionParams};
use embtag::synthetic::{generate, SyntheticConfig, SyntheticData};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn random_transitions(rng: &mut ChaCha8Rng, k: usize) -> TransitionParams<f64> {
    let start = Array1::from_vec(simplex(rng, k));
    let mut trans = Array2::zeros((k, k));
    let mut stop = Array1::zeros(k);
    for s in 0..k {
        let row = simplex(rng, k + 1);
        for t in 0..k {
            trans[[s, t]] = row[t];
        }
        stop[s] = row[k];
    }
    TransitionParams { start, trans, stop }
}

pub fn random_gaussian_hmm(rng: &mut ChaCha8Rng, k: usize, d: usize, estimated: bool) -> HmmModel<f64> {
    let means = Array2::from_shape_fn((k, d), |_| rng.random::<f64>() * 2.0 - 1.0);
    let mut g = GaussianEmission::with_fixed_variance(means, 0.45, CovarianceMode::Fixed, 1e-4);
    if estimated {
        g.covariance_mode = CovarianceMode::Estimated;
        g.variances = Array2::from_shape_fn((k, d), |_| 0.2 + rng.random::<f64>());
    }
    HmmModel {
        transitions: random_transitions(rng, k),
        emission: Emission::Gaussian(g),
    }
}

pub fn random_multinomial_hmm(rng: &mut ChaCha8Rng, k: usize, words: &[String]) -> HmmModel<f64> {
    let mut probs = Array2::zeros((k, words.len()));
    for t in 0..k {
        for (j, p) in simplex(rng, words.len()).into_iter().enumerate() {
            probs[[t, j]] = p;
        }
    }
    HmmModel {
        transitions: random_transitions(rng, k),
        emission: Emission::Multinomial(MultinomialEmission {
            words: words.to_vec(),
            probs,
        }),
    }
}

/// Random vectors with no corpus behind them.
pub fn random_vectors(rng: &mut ChaCha8Rng, lens: &[usize], d: usize) -> EmbeddedCorpus<f64> {
    let sentences: Vec<EmbeddedSentence<f64>> = lens
        .iter()
        .map(|&l| {
            let rows: Vec<Vec<f64>> = (0..l)
                .map(|_| (0..d).map(|_| rng.random::<f64>() * 3.0 - 1.5).collect())
                .collect();
            EmbeddedSentence::from_rows(d, &rows)
        })
        .collect();
    let tokens = lens.iter().sum();
    EmbeddedCorpus {
        sentences,
        coverage: Coverage {
            tokens,
            oov_tokens: 0,
            types: tokens,
            oov_types: 0,
        },
    }
}

/// Random word corpus over `v` types named `w0..`.
pub fn random_words(rng: &mut ChaCha8Rng, lens: &[usize], v: usize) -> Corpus {
    let mut vocabulary = Vocabulary::new();
    for j in 0..v {
        vocabulary.add(&format!("w{j}"));
    }
    let sentences = lens
        .iter()
        .map(|&l| Sentence {
            tokens: (0..l).map(|_| rng.random_range(0..v)).collect(),
            gold_tags: None,
        })
        .collect();
    Corpus {
        sentences,
        vocabulary,
        tag_inventory: Vec::new(),
    }
}

pub fn synthetic(num_tokens: usize, seed: u64) -> SyntheticData {
    let cfg = SyntheticConfig {
        num_tokens,
        ..SyntheticConfig::default()
    };
    generate(&cfg, seed).unwrap()
}
