mod common;

use common::*;
use embtag::corpus::Corpus;
use embtag::crfae::{
    objective_and_gradient, reconstruction_step, train, train_with_restarts, CrfAeConfig, CrfAeModel, FeatureExtractor,
    Reconstruction, ReconstructionLabels, Targets, Template,
};
use embtag::embeddings::{embed_corpus, EmbeddedCorpus};
use embtag::eval::{build_contingency, v_measure};
use embtag::hmm::{CovarianceMode, GaussianEmission};
use embtag::lattice::{brute_force_posteriors, forward_backward, DecodeMode};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_templates(r: &mut ChaCha8Rng) -> Vec<Template> {
    let mut t: Vec<Template> = Template::ALL.into_iter().filter(|_| r.random_bool(0.5)).collect();
    if t.is_empty() {
        t.push(Template::Word);
    }
    t
}

fn gaussian_model(r: &mut ChaCha8Rng, corpus: &Corpus, k: usize, d: usize, estimated: bool) -> CrfAeModel<f64> {
    let extractor = FeatureExtractor::build(&random_templates(r), k, corpus);
    let weights = Array1::from_shape_fn(extractor.num_features(), |_| r.random::<f64>() * 2.0 - 1.0);
    let means = Array2::from_shape_fn((k, d), |_| r.random::<f64>() * 2.0 - 1.0);
    let mut g = GaussianEmission::with_fixed_variance(means, 0.45, CovarianceMode::Fixed, 1e-4);
    if estimated {
        g.covariance_mode = CovarianceMode::Estimated;
        g.variances = Array2::from_shape_fn((k, d), |_| 0.3 + r.random::<f64>());
    }
    CrfAeModel {
        extractor,
        weights,
        reconstruction: Reconstruction::Gaussian(g),
    }
}

fn random_labels(r: &mut ChaCha8Rng, corpus: &Corpus, n: usize) -> ReconstructionLabels {
    ReconstructionLabels {
        sentences: corpus
            .sentences
            .iter()
            .map(|s| s.tokens.iter().map(|_| r.random_range(0..n)).collect())
            .collect(),
        inventory: (0..n).map(|i| format!("c{i}")).collect(),
    }
}

fn labels_model(r: &mut ChaCha8Rng, corpus: &Corpus, k: usize, labels: &ReconstructionLabels) -> CrfAeModel<f64> {
    let extractor = FeatureExtractor::build(&random_templates(r), k, corpus);
    let weights = Array1::from_shape_fn(extractor.num_features(), |_| r.random::<f64>() * 2.0 - 1.0);
    let n = labels.inventory.len();
    let mut probs = Array2::from_shape_fn((k, n), |_| r.random::<f64>() + 0.1);
    for mut row in probs.rows_mut() {
        let s = row.sum();
        row.mapv_inplace(|p| p / s);
    }
    CrfAeModel {
        extractor,
        weights,
        reconstruction: Reconstruction::Multinomial {
            labels: labels.inventory.clone(),
            probs,
        },
    }
}

/// Norm-wise relative error between the analytic gradient and central differences.
fn gradient_error(model: &CrfAeModel<f64>, corpus: &Corpus, targets: Targets<'_, f64>, l2: f64) -> (f64, usize) {
    let h = 1e-5;
    let encoded = model.extractor.encode(corpus);
    let (_, grad) = objective_and_gradient(model, &encoded, targets, l2).unwrap();
    let mut fd = Array1::zeros(grad.len());
    let mut probe = model.clone();
    for j in 0..grad.len() {
        let w = model.weights[j];
        probe.weights[j] = w + h;
        let up = objective_and_gradient(&probe, &encoded, targets, l2).unwrap().0;
        probe.weights[j] = w - h;
        let down = objective_and_gradient(&probe, &encoded, targets, l2).unwrap().0;
        probe.weights[j] = w;
        fd[j] = (up - down) / (2.0 * h);
    }
    let diff = (&grad - &fd).mapv(|x| x * x).sum().sqrt();
    let scale = grad
        .mapv(|x| x * x)
        .sum()
        .sqrt()
        .max(fd.mapv(|x| x * x).sum().sqrt())
        .max(1e-8);
    (diff / scale, grad.len())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn gaussian_gradient_matches_finite_differences(seed in any::<u64>(), estimated in any::<bool>(), l2 in prop_oneof![Just(0.0), 0.0f64..0.5]) {
        let mut r = rng(seed);
        let k = r.random_range(2..=3);
        let lens: Vec<usize> = (0..3).map(|_| r.random_range(1..=5)).collect();
        let corpus = random_words(&mut r, &lens, 5);
        let data = random_vectors(&mut r, &lens, 3);
        let model = gaussian_model(&mut r, &corpus, k, 3, estimated);
        let (err, f) = gradient_error(&model, &corpus, Targets::Vectors(&data), l2);
        prop_assert!(f <= 200);
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn labels_gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.random_range(2..=3);
        let lens: Vec<usize> = (0..3).map(|_| r.random_range(1..=5)).collect();
        let corpus = random_words(&mut r, &lens, 5);
        let labels = random_labels(&mut r, &corpus, 4);
        let model = labels_model(&mut r, &corpus, k, &labels);
        let (err, _) = gradient_error(&model, &corpus, Targets::Labels(&labels), 0.0);
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn joint_posteriors_match_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.random_range(2..=3);
        let lens: Vec<usize> = (0..2).map(|_| r.random_range(1..=4)).collect();
        let corpus = random_words(&mut r, &lens, 4);
        let data = random_vectors(&mut r, &lens, 2);
        let model = gaussian_model(&mut r, &corpus, k, 2, false);
        let encoded = model.extractor.encode(&corpus);
        let targets = Targets::Vectors(&data);
        for i in 0..lens.len() {
            let post = model.joint_posteriors(&encoded, targets, i).unwrap();
            let oracle = brute_force_posteriors(&model.joint_potentials(&encoded, targets, i).unwrap()).unwrap();
            for (a, b) in post.unary.iter().zip(oracle.unary.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            for (a, b) in post.pairwise.iter().zip(oracle.pairwise.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            for row in post.unary.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reconstruction_update_never_lowers_the_objective(seed in any::<u64>(), estimated in any::<bool>()) {
        let mut r = rng(seed);
        let lens: Vec<usize> = (0..4).map(|_| r.random_range(1..=6)).collect();
        let corpus = random_words(&mut r, &lens, 5);
        let data = random_vectors(&mut r, &lens, 3);
        let mut model = gaussian_model(&mut r, &corpus, 3, 3, estimated);
        let encoded = model.extractor.encode(&corpus);
        let targets = Targets::Vectors(&data);
        let before = objective_and_gradient(&model, &encoded, targets, 0.0).unwrap().0;
        model.reconstruction = reconstruction_step(&model, &encoded, targets).unwrap();
        let after = objective_and_gradient(&model, &encoded, targets, 0.0).unwrap().0;
        prop_assert!(after >= before - 1e-10, "{before} -> {after}");
    }

    #[test]
    fn label_reconstruction_update_never_lowers_the_objective(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lens: Vec<usize> = (0..4).map(|_| r.random_range(1..=6)).collect();
        let corpus = random_words(&mut r, &lens, 5);
        let labels = random_labels(&mut r, &corpus, 3);
        let mut model = labels_model(&mut r, &corpus, 3, &labels);
        let encoded = model.extractor.encode(&corpus);
        let targets = Targets::Labels(&labels);
        let before = objective_and_gradient(&model, &encoded, targets, 0.0).unwrap().0;
        model.reconstruction = reconstruction_step(&model, &encoded, targets).unwrap();
        let after = objective_and_gradient(&model, &encoded, targets, 0.0).unwrap().0;
        prop_assert!(after >= before - 1e-10, "{before} -> {after}");
    }
}

#[test]
fn tag_constant_reconstruction_gives_zero_objective() {
    let mut r = rng(3);
    let lens = [3, 4];
    let corpus = random_words(&mut r, &lens, 4);
    let data = random_vectors(&mut r, &lens, 2);
    let mut model = gaussian_model(&mut r, &corpus, 3, 2, false);
    if let Reconstruction::Gaussian(g) = &mut model.reconstruction {
        g.means.fill(0.2);
    }
    let encoded = model.extractor.encode(&corpus);
    let targets = Targets::Vectors(&data);
    // the objective is then Σ log p(x̂) under one shared density
    let (obj, grad) = objective_and_gradient(&model, &encoded, targets, 0.0).unwrap();
    let shared: f64 = data
        .sentences
        .iter()
        .flat_map(|s| s.vectors())
        .map(|v| embtag::hmm::gaussian_log_density(v, &[0.2, 0.2], &[0.45, 0.45]).unwrap())
        .sum();
    assert!((obj - shared).abs() < 1e-10);
    assert!(grad.iter().all(|g| g.abs() < 1e-10));
    for i in 0..lens.len() {
        let joint = model.joint_posteriors(&encoded, targets, i).unwrap();
        let enc = forward_backward(&model.encoder_potentials(&encoded.sentences[i])).unwrap();
        for (a, b) in joint.unary.iter().zip(enc.unary.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn l2_shifts_gradient() {
    let mut r = rng(6);
    let corpus = random_words(&mut r, &[3, 2], 4);
    let data = random_vectors(&mut r, &[3, 2], 2);
    let mut model = gaussian_model(&mut r, &corpus, 2, 2, false);
    model.weights.fill(0.0);
    model.weights[3] = 1.0;
    let encoded = model.extractor.encode(&corpus);
    let (o0, g0) = objective_and_gradient(&model, &encoded, Targets::Vectors(&data), 0.0).unwrap();
    let (o1, g1) = objective_and_gradient(&model, &encoded, Targets::Vectors(&data), 0.1).unwrap();
    assert!((o0 - o1 - 0.1).abs() < 1e-12);
    for j in 0..g0.len() {
        let expected = if j == 3 { -0.2 } else { 0.0 };
        assert!((g1[j] - g0[j] - expected).abs() < 1e-12);
    }
}

fn synthetic_targets(tokens: usize, seed: u64) -> (Corpus, EmbeddedCorpus<f64>) {
    let data = synthetic(tokens, seed);
    let emb = embed_corpus(&data.corpus, &data.table).unwrap();
    (data.corpus, emb)
}

#[test]
fn zero_rounds_return_the_initialization() {
    let (corpus, emb) = synthetic_targets(200, 2);
    let mut config = CrfAeConfig::gaussian(3);
    config.outer_iterations = 0;
    let out = train(&config, &corpus, Targets::Vectors(&emb), 4).unwrap();
    let init = embtag::crfae::initialize(&config, &corpus, Targets::Vectors(&emb), 4).unwrap();
    assert_eq!(out.model, init);
    assert!(out.trace.is_empty());
    assert!(init.weights.iter().all(|w| (-1.0..=1.0).contains(w)));
}

#[test]
fn training_is_deterministic() {
    let (corpus, emb) = synthetic_targets(300, 3);
    let mut config = CrfAeConfig::gaussian(3);
    config.outer_iterations = 5;
    let a = train(&config, &corpus, Targets::Vectors(&emb), 8).unwrap();
    let b = train(&config, &corpus, Targets::Vectors(&emb), 8).unwrap();
    let objectives =
        |o: &embtag::crfae::CrfTrainOutcome<f64>| o.trace.iter().map(|e| e.objective.to_bits()).collect::<Vec<_>>();
    assert_eq!(objectives(&a), objectives(&b));
    assert_eq!(a.model, b.model);
}

#[test]
fn recovers_separated_gaussian_tags() {
    let (corpus, emb) = synthetic_targets(2000, 7);
    let mut config = CrfAeConfig::gaussian(3);
    config.templates = vec![Template::Word];
    let out = train_with_restarts(&config, &corpus, Targets::Vectors(&emb), 11, 5).unwrap();
    let encoded = out.model.extractor.encode(&corpus);
    let pred = out
        .model
        .decode(&encoded, Targets::Vectors(&emb), DecodeMode::Viterbi)
        .unwrap();
    let v = v_measure(&build_contingency(&corpus.gold().unwrap(), &pred).unwrap());
    assert!(v.v_measure >= 0.95, "V-measure {}", v.v_measure);
}

#[test]
fn decode_modes_agree_on_single_positions() {
    let mut r = rng(10);
    let lens = [1, 1, 1, 1];
    let corpus = random_words(&mut r, &lens, 3);
    let data = random_vectors(&mut r, &lens, 2);
    let model = gaussian_model(&mut r, &corpus, 3, 2, false);
    let encoded = model.extractor.encode(&corpus);
    let t = Targets::Vectors(&data);
    assert_eq!(
        model.decode(&encoded, t, DecodeMode::Viterbi).unwrap(),
        model.decode(&encoded, t, DecodeMode::Posterior).unwrap()
    );
}
