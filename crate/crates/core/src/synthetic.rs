//! Samples tagged corpora from a known diagonal-Gaussian HMM.
//!
//! Each tag owns a set of word types whose embeddings are drawn around the
//! tag's mean; sentences are generated by the tag chain, emitting a
//! uniformly chosen word of the current tag. The result pairs a corpus whose
//! gold tags are the generating states with the embedding table.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal, Uniform};

use crate::corpus::{Corpus, Sentence, Vocabulary};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_tags: usize,
    pub dim: usize,
    pub words_per_tag: usize,
    /// Per-component variance of word vectors around their tag mean.
    pub variance: f64,
    /// Minimum distance between tag means, in standard deviations.
    pub separation_sigmas: f64,
    pub num_tokens: usize,
    pub min_len: usize,
    pub max_len: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_tags: 3,
            dim: 5,
            words_per_tag: 10,
            variance: 0.45,
            separation_sigmas: 10.0,
            num_tokens: 2000,
            min_len: 5,
            max_len: 15,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub table: EmbeddingTable<f64>,
    pub means: Array2<f64>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    let k = config.num_tags;
    let d = config.dim;
    if k < 2 || d == 0 || config.words_per_tag == 0 || config.num_tokens == 0 {
        return Err(Error::InvalidParameter(
            "synthetic corpus needs k >= 2, d, words and tokens".into(),
        ));
    }
    if config.min_len == 0 || config.min_len > config.max_len || !(config.variance > 0.0) {
        return Err(Error::InvalidParameter("bad sentence length range or variance".into()));
    }
    let sigma = config.variance.sqrt();
    let min_sep = config.separation_sigmas * sigma;

    // means: rejection sampling in a box that grows until they fit
    let mut rng = rng::substream(seed, "synthetic.means");
    let mut half_width = min_sep;
    let means = 'outer: loop {
        let box_ = Uniform::new_inclusive(-half_width, half_width).expect("valid range");
        for _ in 0..1000 {
            let m = Array2::from_shape_fn((k, d), |_| box_.sample(&mut rng));
            let ok = (0..k).all(|a| {
                (a + 1..k).all(|b| dist(m.row(a).as_slice().unwrap(), m.row(b).as_slice().unwrap()) >= min_sep)
            });
            if ok {
                break 'outer m;
            }
        }
        half_width *= 1.5;
    };

    let mut rng = rng::substream(seed, "synthetic.words");
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let mut entries = Vec::with_capacity(k * config.words_per_tag);
    for t in 0..k {
        for j in 0..config.words_per_tag {
            let v: Vec<f64> = means.row(t).iter().map(|&m| m + noise.sample(&mut rng)).collect();
            entries.push((format!("t{t}w{j}"), v));
        }
    }
    let table = EmbeddingTable::from_entries(d, entries.clone())?;

    // Dirichlet(1) transition rows
    let mut rng = rng::substream(seed, "synthetic.chain");
    let trans: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let draw = |rng: &mut rng::Rng, p: &[f64]| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &x) in p.iter().enumerate() {
            acc += x;
            if u < acc {
                return i;
            }
        }
        p.len() - 1
    };

    let mut vocabulary = Vocabulary::new();
    let mut sentences = Vec::new();
    let mut remaining = config.num_tokens;
    while remaining > 0 {
        let len = rng.random_range(config.min_len..=config.max_len).min(remaining);
        remaining -= len;
        let mut tokens = Vec::with_capacity(len);
        let mut tags = Vec::with_capacity(len);
        let mut tag = rng.random_range(0..k);
        for i in 0..len {
            if i > 0 {
                tag = draw(&mut rng, &trans[tag]);
            }
            let j = rng.random_range(0..config.words_per_tag);
            tokens.push(vocabulary.add(&entries[tag * config.words_per_tag + j].0));
            tags.push(tag);
        }
        sentences.push(Sentence {
            tokens,
            gold_tags: Some(tags),
        });
    }
    Ok(SyntheticData {
        corpus: Corpus {
            sentences,
            vocabulary,
            tag_inventory: (0..k).map(|t| format!("T{t}")).collect(),
        },
        table,
        means,
    })
}
