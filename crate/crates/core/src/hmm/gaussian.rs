//! Diagonal-covariance Gaussian emissions and their closed-form updates.

use log::warn;
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::real::Real;

/// Whether EM re-estimates the diagonal variances or keeps them fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceMode {
    #[default]
    Fixed,
    Estimated,
}

impl std::str::FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(CovarianceMode::Fixed),
            "estimated" => Ok(CovarianceMode::Estimated),
            _ => Err(Error::Config(format!("unknown covariance mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CovarianceMode::Fixed => "fixed",
            CovarianceMode::Estimated => "estimated",
        })
    }
}

pub const DEFAULT_FIXED_VARIANCE: f64 = 0.45;
pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-4;

/// `ln N(v; mean, diag(variance))`.
pub fn gaussian_log_density<T: Real>(v: &[T], mean: &[T], variance: &[T]) -> Result<T> {
    if mean.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            found: mean.len(),
        });
    }
    if variance.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            found: variance.len(),
        });
    }
    if let Some(bad) = variance.iter().find(|&&s| !(s > T::zero())) {
        return Err(Error::InvalidParameter(format!(
            "variance component {bad} is not positive"
        )));
    }
    let two_pi = T::lit(std::f64::consts::TAU);
    let half = T::lit(0.5);
    let mut acc = T::zero();
    for ((&x, &m), &s) in v.iter().zip(mean).zip(variance) {
        let d = x - m;
        acc += (two_pi * s).ln() + d * d / s;
    }
    Ok(-half * acc)
}

/// Per-tag diagonal Gaussians, `means[[t, k]]` and `variances[[t, k]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmission<T> {
    pub means: Array2<T>,
    pub variances: Array2<T>,
    pub covariance_mode: CovarianceMode,
    pub variance_floor: T,
}

impl<T: Real> GaussianEmission<T> {
    /// Given means with a shared constant variance on every component.
    pub fn with_fixed_variance(means: Array2<T>, variance: T, mode: CovarianceMode, floor: T) -> Self {
        let variances = Array2::from_elem(means.dim(), variance);
        Self {
            means,
            variances,
            covariance_mode: mode,
            variance_floor: floor,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.dim() != self.variances.dim() {
            return Err(Error::InvalidParameter("means and variances differ in shape".into()));
        }
        if self.means.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite Gaussian mean".into()));
        }
        if !(self.variance_floor > T::zero()) {
            return Err(Error::InvalidParameter("variance floor must be positive".into()));
        }
        if self.variances.iter().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::InvalidParameter("variances must be positive and finite".into()));
        }
        Ok(())
    }

    /// Precomputed per-tag constants for repeated density evaluation.
    pub fn scorer(&self) -> GaussianScorer<T> {
        let two_pi = T::lit(std::f64::consts::TAU);
        let half = T::lit(0.5);
        let log_norm = self
            .variances
            .rows()
            .into_iter()
            .map(|row| -half * row.iter().map(|&s| (two_pi * s).ln()).sum::<T>())
            .collect();
        GaussianScorer {
            means: self.means.clone(),
            inv_var: self.variances.mapv(|s| T::one() / s),
            log_norm,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaussianScorer<T> {
    means: Array2<T>,
    inv_var: Array2<T>,
    log_norm: Array1<T>,
}

impl<T: Real> GaussianScorer<T> {
    pub fn log_density(&self, tag: usize, v: &[T]) -> T {
        let half = T::lit(0.5);
        let mean = self.means.row(tag);
        let inv = self.inv_var.row(tag);
        let mut q = T::zero();
        for ((&x, &m), &w) in v.iter().zip(mean.iter()).zip(inv.iter()) {
            let d = x - m;
            q += d * d * w;
        }
        self.log_norm[tag] - half * q
    }

    /// Fills `out[[i, t]]` with the log-density of the `i`-th vector under tag `t`.
    pub fn fill<'a>(&self, vectors: impl Iterator<Item = &'a [T]>, out: &mut Array2<T>) {
        for (i, v) in vectors.enumerate() {
            for t in 0..self.means.nrows() {
                out[[i, t]] = self.log_density(t, v);
            }
        }
    }
}

/// Posterior-weighted sums for the Gaussian M-step.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats<T> {
    /// Total posterior mass per tag.
    pub weight: Array1<T>,
    /// Weighted sum of vectors per tag.
    pub sum: Array2<T>,
    /// Weighted sum of squared components per tag.
    pub sum_sq: Array2<T>,
}

impl<T: Real> GaussianStats<T> {
    pub fn zeros(num_tags: usize, dim: usize) -> Self {
        Self {
            weight: Array1::zeros(num_tags),
            sum: Array2::zeros((num_tags, dim)),
            sum_sq: Array2::zeros((num_tags, dim)),
        }
    }

    pub fn accumulate(&mut self, tag: usize, v: &[T], w: T) {
        self.weight[tag] += w;
        let mut sum = self.sum.row_mut(tag);
        for (acc, &x) in sum.iter_mut().zip(v) {
            *acc += w * x;
        }
        let mut sq = self.sum_sq.row_mut(tag);
        for (acc, &x) in sq.iter_mut().zip(v) {
            *acc += w * x * x;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.weight += &other.weight;
        self.sum += &other.sum;
        self.sum_sq += &other.sum_sq;
    }
}

/// Weighted mean per tag. Tags with no posterior mass keep `current`.
pub fn m_step_gaussian_mean<T: Real>(stats: &GaussianStats<T>, current: &Array2<T>) -> Array2<T> {
    let mut means = current.clone();
    for (t, &w) in stats.weight.iter().enumerate() {
        if !(w > T::zero()) {
            warn!("tag {t} has zero expected occupancy; keeping its mean");
            continue;
        }
        for (m, &s) in means.row_mut(t).iter_mut().zip(stats.sum.row(t).iter()) {
            *m = s / w;
        }
    }
    means
}

/// Weighted average of `(v - new_mean)^2` per component, clamped below at
/// `floor`. Tags with no posterior mass keep `current`.
pub fn m_step_gaussian_covariance<T: Real>(
    stats: &GaussianStats<T>,
    new_means: &Array2<T>,
    current: &Array2<T>,
    floor: T,
) -> Array2<T> {
    let two = T::lit(2.0);
    let mut vars = current.clone();
    for (t, &w) in stats.weight.iter().enumerate() {
        if !(w > T::zero()) {
            warn!("tag {t} has zero expected occupancy; keeping its variances");
            continue;
        }
        for k in 0..vars.ncols() {
            let mu = new_means[[t, k]];
            // sum_i w_i (v_i - mu)^2 = S2 - 2 mu S1 + mu^2 W
            let s = (stats.sum_sq[[t, k]] - two * mu * stats.sum[[t, k]] + mu * mu * w) / w;
            vars[[t, k]] = if s > floor { s } else { floor };
        }
    }
    vars
}
