//! Token-aligned discrete reconstruction targets (e.g. word-cluster ids).

use std::io::BufRead;

use crate::corpus::{Corpus, Vocabulary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReconstructionLabels {
    /// Label ids per token, indexing `inventory`.
    pub sentences: Vec<Vec<usize>>,
    pub inventory: Vec<String>,
}

/// Reads one whitespace-separated label sequence per non-blank line, aligned
/// sentence-by-sentence and token-by-token with `corpus`.
pub fn load_reconstruction_labels<R: BufRead>(reader: R, corpus: &Corpus) -> Result<ReconstructionLabels> {
    let mut inventory = Vocabulary::new();
    let mut sentences = Vec::with_capacity(corpus.len());
    let mut last_line = 0;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        last_line = n + 1;
        let labels: Vec<&str> = line.split_whitespace().collect();
        if labels.is_empty() {
            continue;
        }
        let s = sentences.len();
        let Some(sentence) = corpus.sentences.get(s) else {
            return Err(Error::parse(
                n + 1,
                format!("more label lines than the corpus's {} sentences", corpus.len()),
            ));
        };
        if labels.len() != sentence.len() {
            return Err(Error::parse(
                n + 1,
                format!("{} labels for a sentence of {} tokens", labels.len(), sentence.len()),
            ));
        }
        sentences.push(labels.into_iter().map(|l| inventory.add(l)).collect());
    }
    if sentences.len() != corpus.len() {
        return Err(Error::parse(
            last_line + 1,
            format!("{} label lines for {} sentences", sentences.len(), corpus.len()),
        ));
    }
    Ok(ReconstructionLabels {
        sentences,
        inventory: inventory.words().to_vec(),
    })
}
