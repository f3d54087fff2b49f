//! Versioned JSON model files.
//!
//! Parameters are written as `f64` arrays in row-major order. JSON numbers
//! round-trip `f64` (and therefore `f32`) values exactly, so save/load is
//! bit-exact for either scalar type.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{CovarianceMode, Emission, GaussianEmission, HmmModel, MultinomialEmission, TransitionParams};
use crate::error::{Error, Result};
use crate::real::Real;

pub const MODEL_FORMAT: &str = "embtag-hmm";
pub const MODEL_VERSION: u32 = 1;

pub(crate) fn scalar_name<T: Real>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

pub(crate) fn flat<T: Real>(values: impl IntoIterator<Item = T>) -> Vec<f64> {
    values.into_iter().map(Real::as_f64).collect()
}

pub(crate) fn vector<T: Real>(values: &[f64], len: usize, what: &str) -> Result<Array1<T>> {
    if values.len() != len {
        return Err(Error::Format(format!(
            "{what}: expected {len} values, found {}",
            values.len()
        )));
    }
    Ok(values.iter().map(|&x| T::lit(x)).collect())
}

pub(crate) fn matrix<T: Real>(values: &[f64], shape: (usize, usize), what: &str) -> Result<Array2<T>> {
    let v = vector(values, shape.0 * shape.1, what)?;
    Ok(v.into_shape_with_order(shape).expect("length checked"))
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct TransitionsFile {
    pub start: Vec<f64>,
    pub trans: Vec<f64>,
    pub stop: Vec<f64>,
}

impl TransitionsFile {
    pub fn from_params<T: Real>(p: &TransitionParams<T>) -> Self {
        Self {
            start: flat(p.start.iter().copied()),
            trans: flat(p.trans.iter().copied()),
            stop: flat(p.stop.iter().copied()),
        }
    }

    pub fn to_params<T: Real>(&self, k: usize) -> Result<TransitionParams<T>> {
        Ok(TransitionParams {
            start: vector(&self.start, k, "start")?,
            trans: matrix(&self.trans, (k, k), "trans")?,
            stop: vector(&self.stop, k, "stop")?,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub(crate) enum EmissionFile {
    Multinomial {
        words: Vec<String>,
        probs: Vec<f64>,
    },
    Gaussian {
        dim: usize,
        covariance_mode: String,
        variance_floor: f64,
        means: Vec<f64>,
        variances: Vec<f64>,
    },
}

impl EmissionFile {
    pub fn from_gaussian<T: Real>(g: &GaussianEmission<T>) -> Self {
        EmissionFile::Gaussian {
            dim: g.dim(),
            covariance_mode: g.covariance_mode.to_string(),
            variance_floor: g.variance_floor.as_f64(),
            means: flat(g.means.iter().copied()),
            variances: flat(g.variances.iter().copied()),
        }
    }

    pub fn from_multinomial<T: Real>(m: &MultinomialEmission<T>) -> Self {
        EmissionFile::Multinomial {
            words: m.words.clone(),
            probs: flat(m.probs.iter().copied()),
        }
    }

    pub fn to_emission<T: Real>(&self, k: usize) -> Result<Emission<T>> {
        Ok(match self {
            EmissionFile::Multinomial { words, probs } => Emission::Multinomial(MultinomialEmission {
                words: words.clone(),
                probs: matrix(probs, (k, words.len()), "probs")?,
            }),
            EmissionFile::Gaussian {
                dim,
                covariance_mode,
                variance_floor,
                means,
                variances,
            } => Emission::Gaussian(GaussianEmission {
                means: matrix(means, (k, *dim), "means")?,
                variances: matrix(variances, (k, *dim), "variances")?,
                covariance_mode: covariance_mode.parse::<CovarianceMode>()?,
                variance_floor: T::lit(*variance_floor),
            }),
        })
    }
}

/// Checks the self-describing header shared by every model file.
pub(crate) fn check_header<T: Real>(format: &str, expected_format: &str, version: u32, scalar: &str) -> Result<()> {
    if format != expected_format {
        return Err(Error::Format(format!(
            "expected a {expected_format:?} file, found {format:?}"
        )));
    }
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version} (this build reads version {MODEL_VERSION})"
        )));
    }
    if scalar != scalar_name::<T>() {
        return Err(Error::Format(format!(
            "file stores {scalar} parameters, loader expects {}",
            scalar_name::<T>()
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct HmmFile {
    format: String,
    version: u32,
    scalar: String,
    num_tags: usize,
    transitions: TransitionsFile,
    emission: EmissionFile,
}

impl<T: Real> HmmModel<T> {
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let file = HmmFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            scalar: scalar_name::<T>().into(),
            num_tags: self.num_tags(),
            transitions: TransitionsFile::from_params(&self.transitions),
            emission: match &self.emission {
                Emission::Multinomial(m) => EmissionFile::from_multinomial(m),
                Emission::Gaussian(g) => EmissionFile::from_gaussian(g),
            },
        };
        serde_json::to_writer(out, &file).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load<R: Read>(input: R) -> Result<Self> {
        let file: HmmFile = serde_json::from_reader(input).map_err(|e| Error::Format(e.to_string()))?;
        check_header::<T>(&file.format, MODEL_FORMAT, file.version, &file.scalar)?;
        let k = file.num_tags;
        let model = HmmModel {
            transitions: file.transitions.to_params(k)?,
            emission: file.emission.to_emission(k)?,
        };
        model.validate()?;
        Ok(model)
    }
}
