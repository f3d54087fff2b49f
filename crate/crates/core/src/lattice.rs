//! Log-space inference on first-order chains.
//!
//! A chain of length `len` over `num_tags` tags scores a tag sequence `y` as
//!
//! ```text
//! start[y_0] + emission[0][y_0]
//!   + sum_{i>0} (transition[y_{i-1}][y_i] + emission[i][y_i])
//!   + stop[y_{len-1}]
//! ```
//!
//! and normalizes globally over all `num_tags^len` sequences. Every quantity
//! is kept in log space; `-inf` marks an inadmissible choice.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::real::{argmax, log_sum_exp, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotentials<T> {
    pub start: Array1<T>,
    /// `transition[[prev, next]]`, shared by every position.
    pub transition: Array2<T>,
    pub stop: Array1<T>,
    /// `emission[[position, tag]]`.
    pub emission: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posteriors<T> {
    /// `unary[[i, t]] = p(y_i = t)`.
    pub unary: Array2<T>,
    /// `pairwise[[i, s, t]] = p(y_i = s, y_{i+1} = t)`.
    pub pairwise: Array3<T>,
    pub log_partition: T,
}

impl<T: Real> ChainPotentials<T> {
    /// All-zero potentials: every sequence scores 0.
    pub fn zeros(len: usize, num_tags: usize) -> Self {
        Self {
            start: Array1::zeros(num_tags),
            transition: Array2::zeros((num_tags, num_tags)),
            stop: Array1::zeros(num_tags),
            emission: Array2::zeros((len, num_tags)),
        }
    }

    pub fn len(&self) -> usize {
        self.emission.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.start.len()
    }

    /// Checks shapes, rejects NaN and `+inf`, and requires at least one
    /// admissible tag per position.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_tags();
        if k == 0 || self.is_empty() {
            return Err(Error::InvalidParameter("empty lattice".into()));
        }
        if self.transition.dim() != (k, k) || self.stop.len() != k || self.emission.ncols() != k {
            return Err(Error::InvalidParameter("inconsistent lattice shapes".into()));
        }
        let bad = |x: &T| x.is_nan() || *x == T::infinity();
        if self.start.iter().any(bad)
            || self.transition.iter().any(bad)
            || self.stop.iter().any(bad)
            || self.emission.iter().any(bad)
        {
            return Err(Error::Numerical("lattice contains NaN or +inf".into()));
        }
        for (i, row) in self.emission.rows().into_iter().enumerate() {
            if row.iter().all(|&x| x == T::neg_infinity()) {
                return Err(Error::DegenerateLattice(format!("position {i} has no admissible tag")));
            }
        }
        Ok(())
    }

    /// Score of one tag sequence.
    pub fn score(&self, tags: &[usize]) -> T {
        assert_eq!(tags.len(), self.len(), "sequence length must match lattice");
        let mut s = self.start[tags[0]] + self.emission[[0, tags[0]]];
        for i in 1..tags.len() {
            s += self.transition[[tags[i - 1], tags[i]]] + self.emission[[i, tags[i]]];
        }
        s + self.stop[tags[tags.len() - 1]]
    }

    /// Forward log-messages: `alpha[[i, t]]` sums over prefixes ending in `t` at `i`.
    pub fn forward(&self) -> Array2<T> {
        let (n, k) = (self.len(), self.num_tags());
        let mut alpha = Array2::from_elem((n, k), T::neg_infinity());
        for t in 0..k {
            alpha[[0, t]] = self.start[t] + self.emission[[0, t]];
        }
        for i in 1..n {
            for t in 0..k {
                let incoming = log_sum_exp((0..k).map(|s| alpha[[i - 1, s]] + self.transition[[s, t]]));
                alpha[[i, t]] = incoming + self.emission[[i, t]];
            }
        }
        alpha
    }

    /// Backward log-messages: `beta[[i, t]]` sums over suffixes after `t` at `i`, including stop.
    pub fn backward(&self) -> Array2<T> {
        let (n, k) = (self.len(), self.num_tags());
        let mut beta = Array2::from_elem((n, k), T::neg_infinity());
        for t in 0..k {
            beta[[n - 1, t]] = self.stop[t];
        }
        for i in (0..n - 1).rev() {
            for s in 0..k {
                beta[[i, s]] =
                    log_sum_exp((0..k).map(|t| self.transition[[s, t]] + self.emission[[i + 1, t]] + beta[[i + 1, t]]));
            }
        }
        beta
    }

    /// `log Z` computed right to left.
    pub fn log_partition_backward(&self) -> Result<T> {
        self.validate()?;
        let beta = self.backward();
        Ok(log_sum_exp(
            (0..self.num_tags()).map(|t| self.start[t] + self.emission[[0, t]] + beta[[0, t]]),
        ))
    }
}

/// Exact unary and pairwise marginals plus `log Z`.
pub fn forward_backward<T: Real>(p: &ChainPotentials<T>) -> Result<Posteriors<T>> {
    p.validate()?;
    let (n, k) = (p.len(), p.num_tags());
    let alpha = p.forward();
    let beta = p.backward();
    let log_z = log_sum_exp((0..k).map(|t| alpha[[n - 1, t]] + p.stop[t]));
    if log_z == T::neg_infinity() {
        return Err(Error::DegenerateLattice("every tag sequence has zero weight".into()));
    }
    if !log_z.is_finite() {
        return Err(Error::Numerical(format!("log partition is {log_z}")));
    }
    let unary = Array2::from_shape_fn((n, k), |(i, t)| (alpha[[i, t]] + beta[[i, t]] - log_z).exp());
    let pairwise = Array3::from_shape_fn((n.saturating_sub(1), k, k), |(i, s, t)| {
        (alpha[[i, s]] + p.transition[[s, t]] + p.emission[[i + 1, t]] + beta[[i + 1, t]] - log_z).exp()
    });
    Ok(Posteriors {
        unary,
        pairwise,
        log_partition: log_z,
    })
}

/// Highest-scoring tag sequence and its score.
///
/// Among equally scoring sequences the lexicographically smallest one is
/// returned: max-sum messages run right to left, and decoding walks left to
/// right taking the lowest tag id that attains the maximum at each step.
pub fn viterbi<T: Real>(p: &ChainPotentials<T>) -> Result<(Vec<usize>, T)> {
    p.validate()?;
    let (n, k) = (p.len(), p.num_tags());
    // best[[i, t]]: best suffix score from position i given y_i = t, excluding emission at i.
    let mut best = Array2::from_elem((n, k), T::neg_infinity());
    for t in 0..k {
        best[[n - 1, t]] = p.stop[t];
    }
    for i in (0..n - 1).rev() {
        for s in 0..k {
            let mut m = T::neg_infinity();
            for t in 0..k {
                let v = p.transition[[s, t]] + p.emission[[i + 1, t]] + best[[i + 1, t]];
                if v > m {
                    m = v;
                }
            }
            best[[i, s]] = m;
        }
    }
    let first = (0..k).map(|t| p.start[t] + p.emission[[0, t]] + best[[0, t]]);
    let y0 = argmax(first.clone()).expect("at least one tag");
    let score = first.clone().nth(y0).expect("index in range");
    if score == T::neg_infinity() {
        return Err(Error::DegenerateLattice("every tag sequence has zero weight".into()));
    }
    let mut tags = Vec::with_capacity(n);
    tags.push(y0);
    for i in 1..n {
        let prev = tags[i - 1];
        let next = argmax((0..k).map(|t| p.transition[[prev, t]] + p.emission[[i, t]] + best[[i, t]]))
            .expect("at least one tag");
        tags.push(next);
    }
    Ok((tags, score))
}

/// How a tag sequence is read off a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    /// Single best sequence.
    #[default]
    Viterbi,
    /// Per-position argmax of the posterior marginals.
    Posterior,
}

impl std::str::FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "viterbi" => Ok(DecodeMode::Viterbi),
            "posterior" => Ok(DecodeMode::Posterior),
            _ => Err(Error::Config(format!("unknown decode mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DecodeMode::Viterbi => "viterbi",
            DecodeMode::Posterior => "posterior",
        })
    }
}

/// Decodes one lattice.
pub fn decode<T: Real>(p: &ChainPotentials<T>, mode: DecodeMode) -> Result<Vec<usize>> {
    match mode {
        DecodeMode::Viterbi => viterbi(p).map(|(tags, _)| tags),
        DecodeMode::Posterior => forward_backward(p).map(|post| posterior_decode(&post)),
    }
}

/// Per-position argmax of the unary marginals; ties go to the lower tag id.
pub fn posterior_decode<T: Real>(post: &Posteriors<T>) -> Vec<usize> {
    post.unary
        .rows()
        .into_iter()
        .map(|row| argmax(row.iter().copied()).expect("at least one tag"))
        .collect()
}

/// Largest lattice the enumeration oracle accepts, in tag sequences.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// Calls `f` on every tag sequence of length `len` over `num_tags` tags, in
/// lexicographic order.
pub fn for_each_sequence(len: usize, num_tags: usize, mut f: impl FnMut(&[usize])) {
    let mut tags = vec![0usize; len];
    loop {
        f(&tags);
        let mut i = len;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            tags[i] += 1;
            if tags[i] < num_tags {
                break;
            }
            tags[i] = 0;
        }
    }
}

/// Marginals by explicit summation over all `num_tags^len` sequences.
///
/// Testing oracle; refuses lattices with more than [`ENUMERATION_LIMIT`] sequences.
pub fn brute_force_posteriors<T: Real>(p: &ChainPotentials<T>) -> Result<Posteriors<T>> {
    p.validate()?;
    let (n, k) = (p.len(), p.num_tags());
    let count = (k as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let mut scores = Vec::with_capacity(count as usize);
    for_each_sequence(n, k, |y| scores.push(p.score(y)));
    let log_z = log_sum_exp(scores.iter().copied());
    if log_z == T::neg_infinity() {
        return Err(Error::DegenerateLattice("every tag sequence has zero weight".into()));
    }
    let mut unary = Array2::zeros((n, k));
    let mut pairwise = Array3::zeros((n.saturating_sub(1), k, k));
    let mut idx = 0;
    for_each_sequence(n, k, |y| {
        let w = (scores[idx] - log_z).exp();
        idx += 1;
        for (i, &t) in y.iter().enumerate() {
            unary[[i, t]] += w;
        }
        for i in 0..n.saturating_sub(1) {
            pairwise[[i, y[i], y[i + 1]]] += w;
        }
    });
    Ok(Posteriors {
        unary,
        pairwise,
        log_partition: log_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn uniform(len: usize, k: usize) -> ChainPotentials<f64> {
        ChainPotentials::zeros(len, k)
    }

    #[test]
    fn single_position_normalizes_emissions() {
        let mut p = uniform(1, 2);
        p.emission = array![[0.8f64.ln(), 0.2f64.ln()]];
        let post = forward_backward(&p).unwrap();
        assert!((post.unary[[0, 0]] - 0.8).abs() < 1e-15);
        assert!((post.unary[[0, 1]] - 0.2).abs() < 1e-15);
        assert!(post.log_partition.abs() < 1e-15);
    }

    #[test]
    fn uniform_potentials_give_uniform_marginals() {
        let post = forward_backward(&uniform(4, 3)).unwrap();
        for &u in post.unary.iter() {
            assert!((u - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((post.log_partition - 4.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_two_position_case() {
        // start weights [.5,.5], transition [[.9,.1],[.5,.5]], flat emissions:
        // p(y_1 = 0) = .5*.9 + .5*.5 = .7
        let mut p = uniform(2, 2);
        p.start = array![0.5f64.ln(), 0.5f64.ln()];
        p.transition = array![[0.9f64.ln(), 0.1f64.ln()], [0.5f64.ln(), 0.5f64.ln()]];
        let oracle = brute_force_posteriors(&p).unwrap();
        assert!((oracle.unary[[1, 0]] - 0.7).abs() < 1e-15);
        assert!((oracle.unary[[1, 1]] - 0.3).abs() < 1e-15);
        assert!((oracle.pairwise[[0, 0, 0]] - 0.45).abs() < 1e-15);
        let fb = forward_backward(&p).unwrap();
        assert!((fb.unary[[1, 0]] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn brute_force_refuses_large_lattices() {
        assert!(matches!(
            brute_force_posteriors(&uniform(13, 3)),
            Err(Error::TooLarge(_))
        ));
        assert!(brute_force_posteriors(&uniform(12, 3)).is_ok());
    }

    #[test]
    fn degenerate_position_is_rejected() {
        let mut p = uniform(2, 2);
        p.emission[[1, 0]] = f64::NEG_INFINITY;
        p.emission[[1, 1]] = f64::NEG_INFINITY;
        assert!(matches!(forward_backward(&p), Err(Error::DegenerateLattice(_))));
        assert!(matches!(viterbi(&p), Err(Error::DegenerateLattice(_))));
    }

    #[test]
    fn blocked_transitions_are_degenerate() {
        let mut p = uniform(2, 2);
        p.transition.fill(f64::NEG_INFINITY);
        assert!(matches!(forward_backward(&p), Err(Error::DegenerateLattice(_))));
    }

    #[test]
    fn nan_is_rejected() {
        let mut p = uniform(2, 2);
        p.stop[0] = f64::NAN;
        assert!(matches!(forward_backward(&p), Err(Error::Numerical(_))));
    }

    #[test]
    fn viterbi_single_position() {
        let mut p = uniform(1, 3);
        p.start = array![0.0, 1.0, 0.0];
        p.emission = array![[0.5, -0.2, 1.0]];
        p.stop = array![0.0, 0.0, 0.1];
        let (tags, score) = viterbi(&p).unwrap();
        assert_eq!(tags, [2]);
        assert!((score - 1.1).abs() < 1e-15);
    }

    #[test]
    fn viterbi_ties_return_lexicographically_smallest() {
        // (0,1) and (1,0) both score 1; everything else scores 0.
        let mut p = uniform(2, 2);
        p.transition = array![[0.0, 1.0], [1.0, 0.0]];
        let (tags, score) = viterbi(&p).unwrap();
        assert_eq!(tags, [0, 1]);
        assert_eq!(score, 1.0);
        // all sequences tie
        let (tags, _) = viterbi(&uniform(3, 3)).unwrap();
        assert_eq!(tags, [0, 0, 0]);
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let mut p = uniform(3, 2);
        p.emission = array![[0.1, -0.3], [2.0, 0.5], [-1.0, 0.0]];
        p.transition = array![[0.2, -0.1], [0.0, 0.7]];
        let p32 = ChainPotentials::<f32> {
            start: p.start.mapv(|x| x as f32),
            transition: p.transition.mapv(|x| x as f32),
            stop: p.stop.mapv(|x| x as f32),
            emission: p.emission.mapv(|x| x as f32),
        };
        let a = forward_backward(&p).unwrap();
        let b = forward_backward(&p32).unwrap();
        for (x, y) in a.unary.iter().zip(b.unary.iter()) {
            assert!((x - f64::from(*y)).abs() < 1e-5);
        }
    }
}
