//! Token-level clustering metrics: V-measure and many-to-one accuracy.

use crate::error::{Error, Result};

/// `counts[class][cluster]` over gold classes and predicted clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ContingencyTable {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let width = counts.first().map_or(0, Vec::len);
        if counts.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch("contingency rows differ in length".into()));
        }
        let n = counts.iter().flatten().sum();
        if n == 0 {
            return Err(Error::Precondition("contingency table is empty".into()));
        }
        Ok(Self { counts, n })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    fn class_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn cluster_totals(&self) -> Vec<u64> {
        (0..self.num_clusters())
            .map(|k| self.counts.iter().map(|r| r[k]).sum())
            .collect()
    }
}

/// Tallies aligned gold and predicted label sequences.
pub fn build_contingency(gold: &[Vec<usize>], pred: &[Vec<usize>]) -> Result<ContingencyTable> {
    if gold.len() != pred.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gold sentences but {} predicted",
            gold.len(),
            pred.len()
        )));
    }
    if let Some(i) = (0..gold.len()).find(|&i| gold[i].len() != pred[i].len()) {
        return Err(Error::ShapeMismatch(format!(
            "sentence {i}: {} gold tags but {} predicted",
            gold[i].len(),
            pred[i].len()
        )));
    }
    let classes = gold.iter().flatten().max().map_or(0, |m| m + 1);
    let clusters = pred.iter().flatten().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0u64; clusters]; classes];
    for (g, p) in gold.iter().flatten().zip(pred.iter().flatten()) {
        counts[*g][*p] += 1;
    }
    ContingencyTable::from_counts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VMeasure {
    pub homogeneity: f64,
    pub completeness: f64,
    pub v_measure: f64,
}

fn entropy(totals: &[u64], n: f64) -> f64 {
    -totals
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.ln()
        })
        .sum::<f64>()
}

/// Homogeneity, completeness and their harmonic mean (entropies in nats).
pub fn v_measure(table: &ContingencyTable) -> VMeasure {
    let n = table.n as f64;
    let class_totals = table.class_totals();
    let cluster_totals = table.cluster_totals();
    let h_c = entropy(&class_totals, n);
    let h_k = entropy(&cluster_totals, n);
    // H(C|K) and H(K|C) from the joint counts
    let mut h_c_given_k = 0.0;
    let mut h_k_given_c = 0.0;
    for (c, row) in table.counts.iter().enumerate() {
        for (k, &nck) in row.iter().enumerate() {
            if nck == 0 {
                continue;
            }
            let joint = nck as f64 / n;
            h_c_given_k -= joint * (nck as f64 / cluster_totals[k] as f64).ln();
            h_k_given_c -= joint * (nck as f64 / class_totals[c] as f64).ln();
        }
    }
    let homogeneity = if h_c == 0.0 { 1.0 } else { 1.0 - h_c_given_k / h_c };
    let completeness = if h_k == 0.0 { 1.0 } else { 1.0 - h_k_given_c / h_k };
    // rounding can leave tiny excursions outside [0, 1]
    let homogeneity = homogeneity.clamp(0.0, 1.0);
    let completeness = completeness.clamp(0.0, 1.0);
    let denom = homogeneity + completeness;
    let v = if denom == 0.0 {
        0.0
    } else {
        2.0 * homogeneity * completeness / denom
    };
    VMeasure {
        homogeneity,
        completeness,
        v_measure: v,
    }
}

/// Accuracy after mapping each cluster to its majority gold class
/// (ties to the lowest class index).
pub fn many_to_one(table: &ContingencyTable) -> f64 {
    let correct: u64 = (0..table.num_clusters())
        .map(|k| {
            let mut best = 0u64;
            for row in &table.counts {
                if row[k] > best {
                    best = row[k];
                }
            }
            best
        })
        .sum();
    correct as f64 / table.n as f64
}
