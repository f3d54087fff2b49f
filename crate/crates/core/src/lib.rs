//! Unsupervised part-of-speech induction with Gaussian word-embedding emissions.
//!
//! Two models share one log-space chain inference engine ([`lattice`]):
//!
//! * a first-order HMM ([`hmm`]) whose emissions are either multinomial over
//!   word types or diagonal Gaussians over pre-trained embeddings, trained
//!   with Baum-Welch;
//! * a CRF autoencoder ([`crfae`]) with a feature-rich linear-chain encoder
//!   and a Gaussian (or multinomial) per-token reconstruction model, trained
//!   by block coordinate ascent.
//!
//! Model code is generic over the scalar type through [`Real`]; the aliases
//! at the crate root pin the common choices.

// `!(x > 0)` deliberately rejects NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod crfae;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod hmm;
pub mod lattice;
mod parallel;
pub mod real;
pub mod rng;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
pub use real::Real;

/// Chain potentials in double precision.
pub type ChainPotentials64 = lattice::ChainPotentials<f64>;
/// Chain posteriors in double precision.
pub type Posteriors64 = lattice::Posteriors<f64>;
/// Embedding table in double precision (the default working precision).
pub type EmbeddingTable64 = embeddings::EmbeddingTable<f64>;
/// Embedding table in single precision.
pub type EmbeddingTable32 = embeddings::EmbeddingTable<f32>;
/// Double-precision HMM.
pub type HmmModel64 = hmm::HmmModel<f64>;
/// Single-precision HMM.
pub type HmmModel32 = hmm::HmmModel<f32>;
/// Double-precision CRF autoencoder.
pub type CrfAeModel64 = crfae::CrfAeModel<f64>;
/// Single-precision CRF autoencoder.
pub type CrfAeModel32 = crfae::CrfAeModel<f32>;
