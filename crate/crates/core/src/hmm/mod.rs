//! First-order HMM with multinomial or diagonal-Gaussian emissions.
//!
//! The joint probability of tags `t` and observations is
//! `p(t_1) * prod_i p(t_i | t_{i-1}) p(o_i | t_i) * p(stop | t_l)`, where
//! `o_i` is either a word type (multinomial) or that word's embedding
//! (Gaussian). Parameters are fit with Baum-Welch ([`train`]).

mod gaussian;
pub(crate) mod io;
mod train;

use std::collections::{BTreeMap, HashMap};

use log::warn;
use ndarray::{Array1, Array2};
use rand::seq::index::sample;

use crate::corpus::Corpus;
use crate::embeddings::{EmbeddedCorpus, EmbeddingTable};
use crate::error::{Error, Result};
use crate::lattice::{self, ChainPotentials, DecodeMode, Posteriors};
use crate::parallel::chunked_fold;
use crate::real::Real;
use crate::rng;

pub use gaussian::{
    gaussian_log_density, m_step_gaussian_covariance, m_step_gaussian_mean, CovarianceMode, GaussianEmission,
    GaussianScorer, GaussianStats, DEFAULT_FIXED_VARIANCE, DEFAULT_VARIANCE_FLOOR,
};
pub use io::{MODEL_FORMAT, MODEL_VERSION};
pub use train::{initialize, run_em, train, train_with_restarts, EmissionKind, HmmConfig, TraceEntry, TrainOutcome};

/// Smoothing mass added to every outcome of an all-zero count row.
pub const SMOOTHING_EPSILON: f64 = 1e-6;

/// Start, transition and stop probabilities.
///
/// Each `trans` row together with that tag's `stop` entry is a distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionParams<T> {
    pub start: Array1<T>,
    pub trans: Array2<T>,
    pub stop: Array1<T>,
}

impl<T: Real> TransitionParams<T> {
    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_tags();
        if self.trans.dim() != (k, k) || self.stop.len() != k {
            return Err(Error::InvalidParameter("transition shapes disagree".into()));
        }
        let in_unit = |x: &T| *x >= T::zero() && *x <= T::one();
        if !(self.start.iter().all(in_unit) && self.trans.iter().all(in_unit) && self.stop.iter().all(in_unit)) {
            return Err(Error::InvalidParameter(
                "transition probabilities outside [0, 1]".into(),
            ));
        }
        let tol = T::lit(1e-6);
        if (self.start.sum() - T::one()).abs() > tol {
            return Err(Error::InvalidParameter("start distribution does not sum to 1".into()));
        }
        for s in 0..k {
            if (self.trans.row(s).sum() + self.stop[s] - T::one()).abs() > tol {
                return Err(Error::InvalidParameter(format!("transition row {s} does not sum to 1")));
            }
        }
        Ok(())
    }

    fn logs(&self) -> (Array1<T>, Array2<T>, Array1<T>) {
        (self.start.mapv(T::ln), self.trans.mapv(T::ln), self.stop.mapv(T::ln))
    }
}

/// Expected start, transition and stop counts.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionStats<T> {
    pub start: Array1<T>,
    pub trans: Array2<T>,
    pub stop: Array1<T>,
}

impl<T: Real> TransitionStats<T> {
    pub fn zeros(num_tags: usize) -> Self {
        Self {
            start: Array1::zeros(num_tags),
            trans: Array2::zeros((num_tags, num_tags)),
            stop: Array1::zeros(num_tags),
        }
    }

    pub fn accumulate(&mut self, post: &Posteriors<T>) {
        let n = post.unary.nrows();
        self.start += &post.unary.row(0);
        self.stop += &post.unary.row(n - 1);
        for slice in post.pairwise.outer_iter() {
            self.trans += &slice;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.start += &other.start;
        self.trans += &other.trans;
        self.stop += &other.stop;
    }
}

/// Count normalization. A row with no expected mass gets [`SMOOTHING_EPSILON`]
/// added to each of its outcomes (all transitions and stop), i.e. becomes uniform.
pub fn m_step_transitions<T: Real>(stats: &TransitionStats<T>) -> TransitionParams<T> {
    let k = stats.start.len();
    let eps = T::lit(SMOOTHING_EPSILON);
    let mut start = stats.start.clone();
    let total = start.sum();
    if total > T::zero() {
        start.mapv_inplace(|c| c / total);
    } else {
        warn!("no expected start mass; smoothing start distribution");
        start.fill(T::one() / T::lit(k as f64));
    }
    let mut trans = stats.trans.clone();
    let mut stop = stats.stop.clone();
    for s in 0..k {
        let mut total = trans.row(s).sum() + stop[s];
        if !(total > T::zero()) {
            warn!("tag {s} has zero expected occupancy; smoothing its transition row with eps = {SMOOTHING_EPSILON}");
            trans.row_mut(s).mapv_inplace(|c| c + eps);
            stop[s] += eps;
            total = trans.row(s).sum() + stop[s];
        }
        trans.row_mut(s).mapv_inplace(|c| c / total);
        stop[s] /= total;
    }
    TransitionParams { start, trans, stop }
}

/// Per-tag categorical distributions over a fixed word list.
#[derive(Debug, Clone, PartialEq)]
pub struct MultinomialEmission<T> {
    pub words: Vec<String>,
    /// `probs[[tag, word]]`, rows sum to one.
    pub probs: Array2<T>,
}

impl<T: Real> MultinomialEmission<T> {
    pub fn validate(&self) -> Result<()> {
        if self.probs.ncols() != self.words.len() || self.words.is_empty() {
            return Err(Error::InvalidParameter(
                "emission matrix does not match word list".into(),
            ));
        }
        for (t, row) in self.probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| p < T::zero() || !p.is_finite()) || (row.sum() - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::InvalidParameter(format!(
                    "emission row {t} is not a distribution"
                )));
            }
        }
        Ok(())
    }
}

/// Row normalization of expected tag-word counts; empty rows become uniform.
pub fn m_step_multinomial<T: Real>(counts: &Array2<T>) -> Array2<T> {
    let mut probs = counts.clone();
    let v = T::lit(counts.ncols() as f64);
    for (t, mut row) in probs.rows_mut().into_iter().enumerate() {
        let total = row.sum();
        if total > T::zero() {
            row.mapv_inplace(|c| c / total);
        } else {
            warn!("tag {t} has zero expected occupancy; using a uniform emission row");
            row.fill(T::one() / v);
        }
    }
    probs
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emission<T> {
    Multinomial(MultinomialEmission<T>),
    Gaussian(GaussianEmission<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel<T> {
    pub transitions: TransitionParams<T>,
    pub emission: Emission<T>,
}

/// What the model reads at each position.
#[derive(Debug, Clone, Copy)]
pub enum Observations<'a, T> {
    Words(&'a Corpus),
    Vectors(&'a EmbeddedCorpus<T>),
}

impl<T: Real> Observations<'_, T> {
    pub fn len(&self) -> usize {
        match self {
            Observations::Words(c) => c.len(),
            Observations::Vectors(e) => e.sentences.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sentence_len(&self, i: usize) -> usize {
        match self {
            Observations::Words(c) => c.sentences[i].len(),
            Observations::Vectors(e) => e.sentences[i].len(),
        }
    }
}

/// Expected emission statistics, matching the emission kind.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionStats<T> {
    /// `counts[[tag, word]]` over the model's word list.
    Words(Array2<T>),
    Gaussian(GaussianStats<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats<T> {
    pub transitions: TransitionStats<T>,
    pub emission: EmissionStats<T>,
    /// Expected number of positions labeled with each tag.
    pub occupancy: Array1<T>,
    /// Sum of per-sentence `log p(observations)`.
    pub log_likelihood: T,
}

impl<T: Real> SufficientStats<T> {
    fn zeros_like(model: &HmmModel<T>) -> Self {
        let k = model.num_tags();
        let emission = match &model.emission {
            Emission::Multinomial(m) => EmissionStats::Words(Array2::zeros(m.probs.dim())),
            Emission::Gaussian(g) => EmissionStats::Gaussian(GaussianStats::zeros(k, g.dim())),
        };
        Self {
            transitions: TransitionStats::zeros(k),
            emission,
            occupancy: Array1::zeros(k),
            log_likelihood: T::zero(),
        }
    }

    fn merge(&mut self, other: Self) {
        self.transitions.merge(&other.transitions);
        self.occupancy += &other.occupancy;
        self.log_likelihood += other.log_likelihood;
        match (&mut self.emission, &other.emission) {
            (EmissionStats::Words(a), EmissionStats::Words(b)) => *a += b,
            (EmissionStats::Gaussian(a), EmissionStats::Gaussian(b)) => a.merge(b),
            _ => unreachable!("statistics of one model share an emission kind"),
        }
    }
}

enum EmissionScorer<T> {
    Words {
        /// Corpus vocabulary id -> model column.
        columns: Vec<Option<usize>>,
        log_probs: Array2<T>,
        unknown: T,
    },
    Gaussian(GaussianScorer<T>),
}

/// Log-space view of a model, specialized to one observation set.
struct Scorer<'a, T> {
    obs: Observations<'a, T>,
    start: Array1<T>,
    trans: Array2<T>,
    stop: Array1<T>,
    emission: EmissionScorer<T>,
}

impl<T: Real> Scorer<'_, T> {
    fn potentials(&self, i: usize) -> ChainPotentials<T> {
        let k = self.start.len();
        let mut emission = Array2::zeros((self.obs.sentence_len(i), k));
        match (&self.emission, self.obs) {
            (
                EmissionScorer::Words {
                    columns,
                    log_probs,
                    unknown,
                },
                Observations::Words(c),
            ) => {
                for (pos, &w) in c.sentences[i].tokens.iter().enumerate() {
                    match columns[w] {
                        Some(col) => emission.row_mut(pos).assign(&log_probs.column(col)),
                        None => emission.row_mut(pos).fill(*unknown),
                    }
                }
            }
            (EmissionScorer::Gaussian(g), Observations::Vectors(e)) => {
                g.fill(e.sentences[i].vectors(), &mut emission);
            }
            _ => unreachable!("scorer is built for matching observations"),
        }
        ChainPotentials {
            start: self.start.clone(),
            transition: self.trans.clone(),
            stop: self.stop.clone(),
            emission,
        }
    }
}

impl<T: Real> HmmModel<T> {
    pub fn num_tags(&self) -> usize {
        self.transitions.num_tags()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tags() < 2 {
            return Err(Error::InvalidParameter("an HMM needs at least two tags".into()));
        }
        self.transitions.validate()?;
        let rows = match &self.emission {
            Emission::Multinomial(m) => {
                m.validate()?;
                m.probs.nrows()
            }
            Emission::Gaussian(g) => {
                g.validate()?;
                g.num_tags()
            }
        };
        if rows != self.num_tags() {
            return Err(Error::InvalidParameter(
                "emission and transition tag counts differ".into(),
            ));
        }
        Ok(())
    }

    pub fn gaussian(&self) -> Option<&GaussianEmission<T>> {
        match &self.emission {
            Emission::Gaussian(g) => Some(g),
            Emission::Multinomial(_) => None,
        }
    }

    fn scorer<'a>(&self, obs: Observations<'a, T>) -> Result<Scorer<'a, T>> {
        if obs.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let emission = match (&self.emission, obs) {
            (Emission::Multinomial(m), Observations::Words(c)) => {
                let index: HashMap<&str, usize> = m.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
                EmissionScorer::Words {
                    columns: c
                        .vocabulary
                        .words()
                        .iter()
                        .map(|w| index.get(w.as_str()).copied())
                        .collect(),
                    log_probs: m.probs.mapv(T::ln),
                    unknown: -T::lit(m.words.len() as f64).ln(),
                }
            }
            (Emission::Gaussian(g), Observations::Vectors(e)) => {
                if e.dim() != g.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: g.dim(),
                        found: e.dim(),
                    });
                }
                EmissionScorer::Gaussian(g.scorer())
            }
            (Emission::Multinomial(_), _) => {
                return Err(Error::Precondition(
                    "multinomial emissions need word observations".into(),
                ))
            }
            (Emission::Gaussian(_), _) => {
                return Err(Error::Precondition(
                    "Gaussian emissions need embedded observations".into(),
                ))
            }
        };
        let (start, trans, stop) = self.transitions.logs();
        Ok(Scorer {
            obs,
            start,
            trans,
            stop,
            emission,
        })
    }

    /// Generative log-potentials of sentence `i`; `log Z` of this lattice is
    /// `log p(observations)`.
    pub fn potentials(&self, obs: Observations<'_, T>, i: usize) -> Result<ChainPotentials<T>> {
        Ok(self.scorer(obs)?.potentials(i))
    }

    /// Maximizes each parameter block given expected counts.
    pub fn m_step(&mut self, stats: &SufficientStats<T>) {
        self.transitions = m_step_transitions(&stats.transitions);
        match (&mut self.emission, &stats.emission) {
            (Emission::Multinomial(m), EmissionStats::Words(counts)) => {
                m.probs = m_step_multinomial(counts);
            }
            (Emission::Gaussian(g), EmissionStats::Gaussian(st)) => {
                let means = m_step_gaussian_mean(st, &g.means);
                if g.covariance_mode == CovarianceMode::Estimated {
                    g.variances = m_step_gaussian_covariance(st, &means, &g.variances, g.variance_floor);
                }
                g.means = means;
            }
            _ => unreachable!("statistics come from this model"),
        }
    }
}

/// Forward-backward over every sentence, accumulating expected counts.
pub fn e_step<T: Real>(model: &HmmModel<T>, obs: Observations<'_, T>) -> Result<SufficientStats<T>> {
    let scorer = model.scorer(obs)?;
    chunked_fold(
        obs.len(),
        || SufficientStats::zeros_like(model),
        |acc, i| {
            let pot = scorer.potentials(i);
            let post = lattice::forward_backward(&pot).map_err(|e| e.in_sentence(i))?;
            acc.log_likelihood += post.log_partition;
            acc.transitions.accumulate(&post);
            for row in post.unary.rows() {
                acc.occupancy += &row;
            }
            match (&mut acc.emission, &scorer.emission, obs) {
                (EmissionStats::Words(counts), EmissionScorer::Words { columns, .. }, Observations::Words(c)) => {
                    for (pos, &w) in c.sentences[i].tokens.iter().enumerate() {
                        if let Some(col) = columns[w] {
                            let mut column = counts.column_mut(col);
                            column += &post.unary.row(pos);
                        }
                    }
                }
                (EmissionStats::Gaussian(st), _, Observations::Vectors(e)) => {
                    for (pos, v) in e.sentences[i].vectors().enumerate() {
                        for t in 0..post.unary.ncols() {
                            st.accumulate(t, v, post.unary[[pos, t]]);
                        }
                    }
                }
                _ => unreachable!("scorer matches observations"),
            }
            Ok(())
        },
        SufficientStats::merge,
    )
}

/// Tags every sentence of `obs`.
pub fn decode<T: Real>(model: &HmmModel<T>, obs: Observations<'_, T>, mode: DecodeMode) -> Result<Vec<Vec<usize>>> {
    use rayon::prelude::*;
    let scorer = model.scorer(obs)?;
    (0..obs.len())
        .into_par_iter()
        .map(|i| lattice::decode(&scorer.potentials(i), mode).map_err(|e| e.in_sentence(i)))
        .collect()
}

/// Replaces each listed tag's mean with the average vector of `k` words
/// sampled without replacement from that tag's list.
///
/// Only words present in `table` are eligible.
pub fn seed_means<T: Real>(
    model: &HmmModel<T>,
    labeled: &BTreeMap<usize, Vec<String>>,
    table: &EmbeddingTable<T>,
    k: usize,
    seed: u64,
) -> Result<HmmModel<T>> {
    let mut out = model.clone();
    let Emission::Gaussian(g) = &mut out.emission else {
        return Err(Error::Precondition("seeding needs Gaussian emissions".into()));
    };
    if table.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: table.dim(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidParameter("seed sample size must be positive".into()));
    }
    let mut rng = rng::substream(seed, "hmm.seed_means");
    for (&tag, words) in labeled {
        if tag >= g.num_tags() {
            return Err(Error::Precondition(format!(
                "tag {tag} is outside the model's {} tags",
                g.num_tags()
            )));
        }
        let mut available: Vec<&str> = words.iter().map(String::as_str).filter(|w| table.contains(w)).collect();
        available.dedup();
        if available.len() < k {
            return Err(Error::Precondition(format!(
                "tag {tag} has {} words in the embedding table, {k} required",
                available.len()
            )));
        }
        let mut mean = vec![T::zero(); g.dim()];
        for idx in sample(&mut rng, available.len(), k).into_iter() {
            let v = table.lookup(available[idx]);
            for (m, &x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let kk = T::lit(k as f64);
        for (m, x) in g.means.row_mut(tag).iter_mut().zip(mean) {
            *m = x / kk;
        }
    }
    Ok(out)
}

/// The `n` table words closest (Euclidean) to a tag's mean, nearest first;
/// equal distances are ordered by word.
pub fn nearest_words<T: Real>(
    model: &HmmModel<T>,
    table: &EmbeddingTable<T>,
    tag: usize,
    n: usize,
) -> Result<Vec<String>> {
    let g = model
        .gaussian()
        .ok_or_else(|| Error::Precondition("nearest words need Gaussian emissions".into()))?;
    if tag >= g.num_tags() {
        return Err(Error::Precondition(format!(
            "tag {tag} is outside the model's {} tags",
            g.num_tags()
        )));
    }
    if table.dim() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: table.dim(),
        });
    }
    let mean = g.means.row(tag);
    let mut scored: Vec<(T, &String)> = table
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let d: T = table
                .row(i)
                .iter()
                .zip(mean.iter())
                .map(|(&x, &m)| (x - m) * (x - m))
                .sum();
            (d, w)
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite distances")
            .then_with(|| a.1.cmp(b.1))
    });
    Ok(scored.into_iter().take(n).map(|(_, w)| w.clone()).collect())
}
