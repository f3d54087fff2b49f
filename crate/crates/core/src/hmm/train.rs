use std::time::Instant;

use log::{debug, info};
use ndarray::{Array1, Array2};
use rand::{Rng as _, RngCore};
use rand_distr::{Distribution, Exp1, Uniform};

use super::{
    e_step, CovarianceMode, Emission, GaussianEmission, HmmModel, MultinomialEmission, Observations, TransitionParams,
    DEFAULT_FIXED_VARIANCE, DEFAULT_VARIANCE_FLOOR,
};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionKind {
    Multinomial,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmConfig {
    pub num_tags: usize,
    pub emission: EmissionKind,
    pub covariance_mode: CovarianceMode,
    pub fixed_variance: f64,
    pub variance_floor: f64,
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood improvement falls below this.
    pub tolerance: f64,
}

impl HmmConfig {
    pub fn gaussian(num_tags: usize) -> Self {
        Self {
            num_tags,
            emission: EmissionKind::Gaussian,
            covariance_mode: CovarianceMode::Fixed,
            fixed_variance: DEFAULT_FIXED_VARIANCE,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
            max_iterations: 100,
            tolerance: 1e-5,
        }
    }

    pub fn multinomial(num_tags: usize) -> Self {
        Self {
            emission: EmissionKind::Multinomial,
            ..Self::gaussian(num_tags)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tags < 2 {
            return Err(Error::Config("num_tags must be at least 2".into()));
        }
        if !(self.fixed_variance > 0.0 && self.fixed_variance.is_finite()) {
            return Err(Error::Config("fixed variance must be positive".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::Config("variance floor must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Log-likelihood under the parameters entering this iteration.
    pub log_likelihood: f64,
    /// Wall-clock seconds since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub model: HmmModel<T>,
    pub trace: Vec<TraceEntry>,
    /// Log-likelihood under the returned parameters.
    pub final_log_likelihood: f64,
    pub converged: bool,
}

/// Uniform probabilities with +-1% multiplicative jitter, renormalized.
fn jittered(rng: &mut impl RngCore, n: usize) -> Vec<f64> {
    let jitter = Uniform::new_inclusive(-0.01, 0.01).expect("valid range");
    let w: Vec<f64> = (0..n).map(|_| 1.0 + jitter.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

fn init_transitions<T: Real>(rng: &mut impl RngCore, k: usize) -> TransitionParams<T> {
    let start = Array1::from_vec(jittered(rng, k).into_iter().map(T::lit).collect());
    let mut trans = Array2::zeros((k, k));
    let mut stop = Array1::zeros(k);
    for s in 0..k {
        // k transitions plus stop
        let row = jittered(rng, k + 1);
        for t in 0..k {
            trans[[s, t]] = T::lit(row[t]);
        }
        stop[s] = T::lit(row[k]);
    }
    TransitionParams { start, trans, stop }
}

/// Random initial model: jittered uniform transitions; Gaussian means drawn
/// from `U[-1, 1]^d` with the configured fixed variance, or multinomial rows
/// drawn from a symmetric Dirichlet(1).
pub fn initialize<T: Real>(config: &HmmConfig, obs: Observations<'_, T>, seed: u64) -> Result<HmmModel<T>> {
    config.validate()?;
    let k = config.num_tags;
    let mut rng = rng::substream(seed, "hmm.init");
    let transitions = init_transitions(&mut rng, k);
    let emission = match (config.emission, obs) {
        (EmissionKind::Gaussian, Observations::Vectors(e)) => {
            let d = e.dim();
            let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
            let means = Array2::from_shape_fn((k, d), |_| T::lit(unit.sample(&mut rng)));
            Emission::Gaussian(GaussianEmission::with_fixed_variance(
                means,
                T::lit(config.fixed_variance),
                config.covariance_mode,
                T::lit(config.variance_floor),
            ))
        }
        (EmissionKind::Multinomial, Observations::Words(c)) => {
            let v = c.vocabulary.len();
            let mut probs = Array2::zeros((k, v));
            for mut row in probs.rows_mut() {
                // Dirichlet(1): normalized unit exponentials
                let draws: Vec<f64> = (0..v).map(|_| Exp1.sample(&mut rng)).collect();
                let total: f64 = draws.iter().sum();
                for (p, x) in row.iter_mut().zip(draws) {
                    *p = T::lit(x / total);
                }
            }
            Emission::Multinomial(MultinomialEmission {
                words: c.vocabulary.words().to_vec(),
                probs,
            })
        }
        (EmissionKind::Gaussian, _) => {
            return Err(Error::Precondition(
                "Gaussian emissions need embedded observations".into(),
            ))
        }
        (EmissionKind::Multinomial, _) => {
            return Err(Error::Precondition(
                "multinomial emissions need word observations".into(),
            ))
        }
    };
    Ok(HmmModel { transitions, emission })
}

/// Baum-Welch from `model` until the relative improvement drops below
/// `config.tolerance` or `config.max_iterations` iterations have run.
pub fn run_em<T: Real>(
    mut model: HmmModel<T>,
    config: &HmmConfig,
    obs: Observations<'_, T>,
) -> Result<TrainOutcome<T>> {
    let started = Instant::now();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev: Option<f64> = None;
    for iteration in 0..config.max_iterations {
        let stats = e_step(&model, obs)?;
        let ll = stats.log_likelihood.as_f64();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!(
                "log-likelihood is {ll} at iteration {iteration}"
            )));
        }
        trace.push(TraceEntry {
            iteration,
            log_likelihood: ll,
            seconds: started.elapsed().as_secs_f64(),
        });
        debug!("iteration {iteration}: log-likelihood {ll}");
        if let Some(p) = prev {
            if (ll - p) / p.abs().max(f64::MIN_POSITIVE) < config.tolerance {
                converged = true;
                break;
            }
        }
        prev = Some(ll);
        model.m_step(&stats);
    }
    let final_log_likelihood = if converged {
        trace.last().map_or(f64::NEG_INFINITY, |e| e.log_likelihood)
    } else {
        let ll = e_step(&model, obs)?.log_likelihood.as_f64();
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("final log-likelihood is {ll}")));
        }
        ll
    };
    info!(
        "EM finished after {} iterations (converged: {converged}), log-likelihood {final_log_likelihood}",
        trace.len()
    );
    Ok(TrainOutcome {
        model,
        trace,
        final_log_likelihood,
        converged,
    })
}

/// Random initialization followed by Baum-Welch; deterministic in `seed`.
pub fn train<T: Real>(config: &HmmConfig, obs: Observations<'_, T>, seed: u64) -> Result<TrainOutcome<T>> {
    let model = initialize(config, obs, seed)?;
    run_em(model, config, obs)
}

/// Best of `restarts` independent runs by final log-likelihood.
pub fn train_with_restarts<T: Real>(
    config: &HmmConfig,
    obs: Observations<'_, T>,
    seed: u64,
    restarts: usize,
) -> Result<TrainOutcome<T>> {
    let mut seeds = rng::substream(seed, "hmm.restarts");
    let mut best: Option<TrainOutcome<T>> = None;
    for r in 0..restarts.max(1) {
        let run = train(config, obs, seeds.random())?;
        debug!("restart {r}: log-likelihood {}", run.final_log_likelihood);
        if best
            .as_ref()
            .is_none_or(|b| run.final_log_likelihood > b.final_log_likelihood)
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
