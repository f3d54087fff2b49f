use std::time::Instant;

use log::{debug, info, warn};
use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, Uniform};

use super::{objective_and_gradient, CrfAeModel, FeatureExtractor, Reconstruction, Targets, Template};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::hmm::{
    m_step_gaussian_covariance, m_step_gaussian_mean, m_step_multinomial, CovarianceMode, GaussianEmission,
    GaussianStats, DEFAULT_FIXED_VARIANCE, DEFAULT_VARIANCE_FLOOR,
};
use crate::lattice;
use crate::parallel::chunked_fold;
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionKind {
    Gaussian,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfAeConfig {
    pub num_tags: usize,
    pub templates: Vec<Template>,
    pub reconstruction: ReconstructionKind,
    pub covariance_mode: CovarianceMode,
    pub fixed_variance: f64,
    pub variance_floor: f64,
    /// Block coordinate ascent rounds.
    pub outer_iterations: usize,
    /// Gradient steps on λ per round.
    pub inner_steps: usize,
    /// Step applied to the per-token average gradient.
    pub step_size: f64,
    pub l2: f64,
    /// Stop once the relative objective change falls below this.
    pub tolerance: f64,
}

impl CrfAeConfig {
    pub fn gaussian(num_tags: usize) -> Self {
        Self {
            num_tags,
            templates: Template::ALL.to_vec(),
            reconstruction: ReconstructionKind::Gaussian,
            covariance_mode: CovarianceMode::Fixed,
            fixed_variance: DEFAULT_FIXED_VARIANCE,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            outer_iterations: 100,
            inner_steps: 5,
            step_size: 0.1,
            l2: 0.0,
            tolerance: 1e-5,
        }
    }

    pub fn multinomial(num_tags: usize) -> Self {
        Self {
            reconstruction: ReconstructionKind::Multinomial,
            ..Self::gaussian(num_tags)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tags < 2 {
            return Err(Error::Config("num_tags must be at least 2".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("at least one feature template is required".into()));
        }
        if !(self.fixed_variance > 0.0 && self.variance_floor > 0.0) {
            return Err(Error::Config("variances must be positive".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config("step size must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.tolerance >= 0.0) {
            return Err(Error::Config("l2 and tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfTraceEntry {
    pub iteration: usize,
    /// Objective under the parameters entering this round.
    pub objective: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfTrainOutcome<T> {
    pub model: CrfAeModel<T>,
    pub trace: Vec<CrfTraceEntry>,
    pub final_objective: f64,
    pub converged: bool,
}

/// Builds the frozen feature index over `corpus`, draws λ from `U[-1, 1]`
/// and initializes the reconstruction model: Gaussian means from
/// `U[-1, 1]^d` with the fixed variance, or Dirichlet(1) label rows.
pub fn initialize<T: Real>(
    config: &CrfAeConfig,
    corpus: &Corpus,
    targets: Targets<'_, T>,
    seed: u64,
) -> Result<CrfAeModel<T>> {
    config.validate()?;
    let k = config.num_tags;
    let extractor = FeatureExtractor::build(&config.templates, k, corpus);
    let mut rng = rng::substream(seed, "crfae.init");
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let weights = Array1::from_shape_fn(extractor.num_features(), |_| T::lit(unit.sample(&mut rng)));
    let reconstruction = match (config.reconstruction, targets) {
        (ReconstructionKind::Gaussian, Targets::Vectors(e)) => {
            let means = Array2::from_shape_fn((k, e.dim()), |_| T::lit(unit.sample(&mut rng)));
            Reconstruction::Gaussian(GaussianEmission::with_fixed_variance(
                means,
                T::lit(config.fixed_variance),
                config.covariance_mode,
                T::lit(config.variance_floor),
            ))
        }
        (ReconstructionKind::Multinomial, Targets::Labels(l)) => {
            let r = l.inventory.len();
            let mut probs = Array2::zeros((k, r));
            for mut row in probs.rows_mut() {
                let draws: Vec<f64> = (0..r).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                for (p, x) in row.iter_mut().zip(draws) {
                    *p = T::lit(x / total);
                }
            }
            Reconstruction::Multinomial {
                labels: l.inventory.clone(),
                probs,
            }
        }
        (ReconstructionKind::Gaussian, _) => {
            return Err(Error::Precondition(
                "Gaussian reconstruction needs embedding targets".into(),
            ))
        }
        (ReconstructionKind::Multinomial, _) => {
            return Err(Error::Precondition(
                "multinomial reconstruction needs label targets".into(),
            ))
        }
    };
    Ok(CrfAeModel {
        extractor,
        weights,
        reconstruction,
    })
}

enum ReconStats<T> {
    Gaussian(GaussianStats<T>),
    Labels(Array2<T>),
}

impl<T: Real> ReconStats<T> {
    fn merge(&mut self, other: Self) {
        match (self, other) {
            (ReconStats::Gaussian(a), ReconStats::Gaussian(b)) => a.merge(&b),
            (ReconStats::Labels(a), ReconStats::Labels(b)) => *a += &b,
            _ => unreachable!("one reconstruction kind per model"),
        }
    }
}

/// Closed-form reconstruction update with λ held fixed: posterior-weighted
/// means (and variances, when estimated) or normalized expected label counts,
/// using posteriors conditioned on both tokens and targets.
pub fn reconstruction_step<T: Real>(
    model: &CrfAeModel<T>,
    encoded: &super::EncodedCorpus,
    targets: Targets<'_, T>,
) -> Result<Reconstruction<T>> {
    super::check_alignment(encoded, targets)?;
    let scorer = model.recon_scorer(targets)?;
    let k = model.num_tags();
    let init = || match &model.reconstruction {
        Reconstruction::Gaussian(g) => ReconStats::Gaussian(GaussianStats::zeros(k, g.dim())),
        Reconstruction::Multinomial { probs, .. } => ReconStats::Labels(Array2::zeros(probs.dim())),
    };
    let stats = chunked_fold(
        encoded.len(),
        init,
        |acc, i| {
            let post = lattice::forward_backward(&model.joint_with(&scorer, encoded, targets, i))
                .map_err(|e| e.in_sentence(i))?;
            match (acc, targets, &scorer) {
                (ReconStats::Gaussian(st), Targets::Vectors(e), _) => {
                    for (pos, v) in e.sentences[i].vectors().enumerate() {
                        for t in 0..k {
                            st.accumulate(t, v, post.unary[[pos, t]]);
                        }
                    }
                }
                (ReconStats::Labels(counts), Targets::Labels(l), super::ReconScorer::Labels { columns, .. }) => {
                    for (pos, &lab) in l.sentences[i].iter().enumerate() {
                        if let Some(c) = columns[lab] {
                            let mut col = counts.column_mut(c);
                            col += &post.unary.row(pos);
                        }
                    }
                }
                _ => unreachable!("scorer matches targets"),
            }
            Ok(())
        },
        ReconStats::merge,
    )?;
    Ok(match (&model.reconstruction, stats) {
        (Reconstruction::Gaussian(g), ReconStats::Gaussian(st)) => {
            let means = m_step_gaussian_mean(&st, &g.means);
            let variances = if g.covariance_mode == CovarianceMode::Estimated {
                m_step_gaussian_covariance(&st, &means, &g.variances, g.variance_floor)
            } else {
                g.variances.clone()
            };
            Reconstruction::Gaussian(GaussianEmission {
                means,
                variances,
                ..g.clone()
            })
        }
        (Reconstruction::Multinomial { labels, .. }, ReconStats::Labels(counts)) => Reconstruction::Multinomial {
            labels: labels.clone(),
            probs: m_step_multinomial(&counts),
        },
        _ => unreachable!("stats follow the model"),
    })
}

/// Block coordinate ascent: per round, `inner_steps` gradient steps on λ
/// followed by one closed-form reconstruction update.
pub fn train<T: Real>(
    config: &CrfAeConfig,
    corpus: &Corpus,
    targets: Targets<'_, T>,
    seed: u64,
) -> Result<CrfTrainOutcome<T>> {
    let mut model = initialize(config, corpus, targets, seed)?;
    let encoded = model.extractor.encode(corpus);
    let tokens = encoded.num_tokens().max(1);
    let scale = T::lit(config.step_size / tokens as f64);
    let l2 = T::lit(config.l2);

    let started = Instant::now();
    let mut trace = Vec::new();
    let mut prev: Option<f64> = None;
    let mut converged = false;
    for iteration in 0..config.outer_iterations {
        let (objective, mut grad) = objective_and_gradient(&model, &encoded, targets, l2)?;
        let objective = objective.as_f64();
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is {objective} at iteration {iteration}"
            )));
        }
        trace.push(CrfTraceEntry {
            iteration,
            objective,
            seconds: started.elapsed().as_secs_f64(),
        });
        debug!("round {iteration}: objective {objective}");
        if let Some(p) = prev {
            if objective < p - 1e-6 {
                warn!("objective decreased at iteration {iteration}: {p} -> {objective}");
            }
            if ((objective - p) / p.abs().max(f64::MIN_POSITIVE)).abs() < config.tolerance {
                converged = true;
                break;
            }
        }
        prev = Some(objective);
        for step in 0..config.inner_steps {
            if step > 0 {
                grad = objective_and_gradient(&model, &encoded, targets, l2)?.1;
            }
            model.weights.zip_mut_with(&grad, |w, &g| *w += scale * g);
        }
        model.reconstruction = reconstruction_step(&model, &encoded, targets)?;
    }
    let final_objective = if converged {
        trace.last().map_or(f64::NEG_INFINITY, |e| e.objective)
    } else {
        objective_and_gradient(&model, &encoded, targets, l2)?.0.as_f64()
    };
    info!(
        "CRF autoencoder finished after {} rounds (converged: {converged}), objective {final_objective}",
        trace.len()
    );
    Ok(CrfTrainOutcome {
        model,
        trace,
        final_objective,
        converged,
    })
}

/// Best of `restarts` independent runs by final objective.
pub fn train_with_restarts<T: Real>(
    config: &CrfAeConfig,
    corpus: &Corpus,
    targets: Targets<'_, T>,
    seed: u64,
    restarts: usize,
) -> Result<CrfTrainOutcome<T>> {
    let mut seeds = rng::substream(seed, "crfae.restarts");
    let mut best: Option<CrfTrainOutcome<T>> = None;
    for r in 0..restarts.max(1) {
        let run = train(config, corpus, targets, seeds.random())?;
        debug!("restart {r}: objective {}", run.final_objective);
        if best.as_ref().is_none_or(|b| run.final_objective > b.final_objective) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
