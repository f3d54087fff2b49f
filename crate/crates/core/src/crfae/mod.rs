//! CRF autoencoder.
//!
//! A linear-chain CRF encoder `p(y | x) ∝ exp(λ · Σ_i f(y_i, y_{i-1}, x))`
//! proposes tags; a per-token reconstruction model `p(x̂_i | y_i)`
//! regenerates either the token's embedding (diagonal Gaussian) or a
//! discrete label such as a word-cluster id (categorical). Training maximizes
//! `Σ log Σ_y p(y | x) p(x̂ | y)`.
//!
//! Both the encoder-only and the joint (encoder plus reconstruction) lattices
//! are ordinary [`ChainPotentials`], so inference reuses [`crate::lattice`].

mod features;
mod io;
mod labels;
mod train;

use std::collections::HashMap;

use ndarray::{Array1, Array2};

use crate::embeddings::EmbeddedCorpus;
use crate::error::{Error, Result};
use crate::hmm::{GaussianEmission, GaussianScorer};
use crate::lattice::{self, ChainPotentials, DecodeMode, Posteriors};
use crate::parallel::chunked_fold;
use crate::real::Real;

pub use features::{word_shape, EncodedCorpus, FeatureExtractor, Template};
pub use io::CRFAE_FORMAT;
pub use labels::{load_reconstruction_labels, ReconstructionLabels};
pub use train::{
    initialize, reconstruction_step, train, train_with_restarts, CrfAeConfig, CrfTraceEntry, CrfTrainOutcome,
    ReconstructionKind,
};

/// Per-tag generative model of the reconstruction target.
#[derive(Debug, Clone, PartialEq)]
pub enum Reconstruction<T> {
    Gaussian(GaussianEmission<T>),
    Multinomial {
        /// Label strings; columns of `probs`.
        labels: Vec<String>,
        /// `probs[[tag, label]]`, rows sum to one.
        probs: Array2<T>,
    },
}

impl<T: Real> Reconstruction<T> {
    pub fn num_tags(&self) -> usize {
        match self {
            Reconstruction::Gaussian(g) => g.num_tags(),
            Reconstruction::Multinomial { probs, .. } => probs.nrows(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Reconstruction::Gaussian(g) => g.validate(),
            Reconstruction::Multinomial { labels, probs } => {
                if labels.is_empty() || probs.ncols() != labels.len() {
                    return Err(Error::InvalidParameter(
                        "reconstruction matrix does not match labels".into(),
                    ));
                }
                for (t, row) in probs.rows().into_iter().enumerate() {
                    if row.iter().any(|&p| p < T::zero()) || (row.sum() - T::one()).abs() > T::lit(1e-6) {
                        return Err(Error::InvalidParameter(format!(
                            "reconstruction row {t} is not a distribution"
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Per-token reconstruction targets for a corpus.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a, T> {
    Vectors(&'a EmbeddedCorpus<T>),
    Labels(&'a ReconstructionLabels),
}

impl<T: Real> Targets<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Vectors(e) => e.sentences.len(),
            Targets::Labels(l) => l.sentences.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn sentence_len(&self, i: usize) -> usize {
        match self {
            Targets::Vectors(e) => e.sentences[i].len(),
            Targets::Labels(l) => l.sentences[i].len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfAeModel<T> {
    pub extractor: FeatureExtractor,
    /// Encoder weights λ, one per feature id.
    pub weights: Array1<T>,
    pub reconstruction: Reconstruction<T>,
}

pub(crate) enum ReconScorer<T> {
    Gaussian(GaussianScorer<T>),
    Labels {
        /// Target label id -> model column.
        columns: Vec<Option<usize>>,
        log_probs: Array2<T>,
        unknown: T,
    },
}

impl<T: Real> ReconScorer<T> {
    fn add_to(&self, targets: Targets<'_, T>, i: usize, emission: &mut Array2<T>) {
        let k = emission.ncols();
        match (self, targets) {
            (ReconScorer::Gaussian(g), Targets::Vectors(e)) => {
                for (pos, v) in e.sentences[i].vectors().enumerate() {
                    for t in 0..k {
                        emission[[pos, t]] += g.log_density(t, v);
                    }
                }
            }
            (
                ReconScorer::Labels {
                    columns,
                    log_probs,
                    unknown,
                },
                Targets::Labels(l),
            ) => {
                for (pos, &lab) in l.sentences[i].iter().enumerate() {
                    for t in 0..k {
                        emission[[pos, t]] += columns[lab].map_or(*unknown, |c| log_probs[[t, c]]);
                    }
                }
            }
            _ => unreachable!("scorer is built for matching targets"),
        }
    }
}

impl<T: Real> CrfAeModel<T> {
    pub fn num_tags(&self) -> usize {
        self.extractor.num_tags()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tags() < 2 {
            return Err(Error::InvalidParameter("the encoder needs at least two tags".into()));
        }
        if self.weights.len() != self.extractor.num_features() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} features",
                self.weights.len(),
                self.extractor.num_features()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical("non-finite encoder weight".into()));
        }
        if self.reconstruction.num_tags() != self.num_tags() {
            return Err(Error::InvalidParameter(
                "reconstruction and encoder tag counts differ".into(),
            ));
        }
        self.reconstruction.validate()
    }

    /// Encoder-only log-potentials `λ · f` for one sentence of predicate ids.
    /// Stop potentials are zero.
    pub fn encoder_potentials(&self, positions: &[Vec<usize>]) -> ChainPotentials<T> {
        let fx = &self.extractor;
        let k = self.num_tags();
        let w = &self.weights;
        let mut p = ChainPotentials::zeros(positions.len(), k);
        for t in 0..k {
            p.start[t] = w[fx.transition_feature(None, t)];
            for s in 0..k {
                p.transition[[s, t]] = w[fx.transition_feature(Some(s), t)];
            }
        }
        for (i, preds) in positions.iter().enumerate() {
            for t in 0..k {
                p.emission[[i, t]] = preds.iter().map(|&q| w[fx.observation_feature(q, t)]).sum();
            }
        }
        p
    }

    pub(crate) fn recon_scorer(&self, targets: Targets<'_, T>) -> Result<ReconScorer<T>> {
        match (&self.reconstruction, targets) {
            (Reconstruction::Gaussian(g), Targets::Vectors(e)) => {
                let dim = e.sentences.first().map_or(g.dim(), |s| s.dim());
                if dim != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        found: dim,
                    });
                }
                Ok(ReconScorer::Gaussian(g.scorer()))
            }
            (Reconstruction::Multinomial { labels, probs }, Targets::Labels(l)) => {
                let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
                Ok(ReconScorer::Labels {
                    columns: l.inventory.iter().map(|s| index.get(s.as_str()).copied()).collect(),
                    log_probs: probs.mapv(T::ln),
                    unknown: -T::lit(labels.len() as f64).ln(),
                })
            }
            (Reconstruction::Gaussian(_), _) => Err(Error::Precondition(
                "Gaussian reconstruction needs embedding targets".into(),
            )),
            (Reconstruction::Multinomial { .. }, _) => Err(Error::Precondition(
                "multinomial reconstruction needs label targets".into(),
            )),
        }
    }

    /// Encoder potentials with per-position reconstruction log-densities
    /// added to the emission entries.
    pub fn joint_potentials(
        &self,
        encoded: &EncodedCorpus,
        targets: Targets<'_, T>,
        i: usize,
    ) -> Result<ChainPotentials<T>> {
        check_alignment(encoded, targets)?;
        let scorer = self.recon_scorer(targets)?;
        Ok(self.joint_with(&scorer, encoded, targets, i))
    }

    pub(crate) fn joint_with(
        &self,
        scorer: &ReconScorer<T>,
        encoded: &EncodedCorpus,
        targets: Targets<'_, T>,
        i: usize,
    ) -> ChainPotentials<T> {
        let mut p = self.encoder_potentials(&encoded.sentences[i]);
        scorer.add_to(targets, i, &mut p.emission);
        p
    }

    /// Tag posteriors given both the tokens and their reconstruction targets.
    pub fn joint_posteriors(
        &self,
        encoded: &EncodedCorpus,
        targets: Targets<'_, T>,
        i: usize,
    ) -> Result<Posteriors<T>> {
        lattice::forward_backward(&self.joint_potentials(encoded, targets, i)?)
    }

    /// Adds `sign` times the expected feature counts under `post` to `grad`.
    fn add_expectations(&self, positions: &[Vec<usize>], post: &Posteriors<T>, sign: T, grad: &mut Array1<T>) {
        let fx = &self.extractor;
        let k = self.num_tags();
        for t in 0..k {
            grad[fx.transition_feature(None, t)] += sign * post.unary[[0, t]];
        }
        for slice in post.pairwise.outer_iter() {
            for s in 0..k {
                for t in 0..k {
                    grad[fx.transition_feature(Some(s), t)] += sign * slice[[s, t]];
                }
            }
        }
        for (i, preds) in positions.iter().enumerate() {
            for t in 0..k {
                let m = sign * post.unary[[i, t]];
                for &q in preds {
                    grad[fx.observation_feature(q, t)] += m;
                }
            }
        }
    }

    /// Tags every sentence from the joint lattice.
    pub fn decode(
        &self,
        encoded: &EncodedCorpus,
        targets: Targets<'_, T>,
        mode: DecodeMode,
    ) -> Result<Vec<Vec<usize>>> {
        use rayon::prelude::*;
        check_alignment(encoded, targets)?;
        let scorer = self.recon_scorer(targets)?;
        (0..encoded.len())
            .into_par_iter()
            .map(|i| {
                lattice::decode(&self.joint_with(&scorer, encoded, targets, i), mode).map_err(|e| e.in_sentence(i))
            })
            .collect()
    }
}

fn check_alignment<T: Real>(encoded: &EncodedCorpus, targets: Targets<'_, T>) -> Result<()> {
    if encoded.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} sentences but {} target sequences",
            encoded.len(),
            targets.len()
        )));
    }
    for (i, s) in encoded.sentences.iter().enumerate() {
        if s.len() != targets.sentence_len(i) {
            return Err(Error::ShapeMismatch(format!(
                "sentence {i}: {} tokens but {} targets",
                s.len(),
                targets.sentence_len(i)
            )));
        }
    }
    Ok(())
}

/// `Σ_s [log Z_joint(s) − log Z_encoder(s)] − l2 ‖λ‖²` and its gradient in λ.
///
/// The gradient is `Σ_s (E_joint[f] − E_encoder[f]) − 2 l2 λ`.
pub fn objective_and_gradient<T: Real>(
    model: &CrfAeModel<T>,
    encoded: &EncodedCorpus,
    targets: Targets<'_, T>,
    l2: T,
) -> Result<(T, Array1<T>)> {
    check_alignment(encoded, targets)?;
    let scorer = model.recon_scorer(targets)?;
    let f = model.weights.len();
    let (mut objective, mut grad) = chunked_fold(
        encoded.len(),
        || (T::zero(), Array1::zeros(f)),
        |(obj, grad), i| {
            let positions = &encoded.sentences[i];
            let enc = model.encoder_potentials(positions);
            let mut joint = enc.clone();
            scorer.add_to(targets, i, &mut joint.emission);
            let enc_post = lattice::forward_backward(&enc).map_err(|e| e.in_sentence(i))?;
            let joint_post = lattice::forward_backward(&joint).map_err(|e| e.in_sentence(i))?;
            let contribution = joint_post.log_partition - enc_post.log_partition;
            if !contribution.is_finite() {
                return Err(Error::Numerical(format!("objective is {contribution} at sentence {i}")));
            }
            *obj += contribution;
            model.add_expectations(positions, &joint_post, T::one(), grad);
            model.add_expectations(positions, &enc_post, -T::one(), grad);
            Ok(())
        },
        |(obj, grad), (o, g)| {
            *obj += o;
            *grad += &g;
        },
    )?;
    if l2 != T::zero() {
        let two = T::lit(2.0);
        objective -= l2 * model.weights.iter().map(|&w| w * w).sum::<T>();
        grad.zip_mut_with(&model.weights, |g, &w| *g -= two * l2 * w);
    }
    Ok((objective, grad))
}
