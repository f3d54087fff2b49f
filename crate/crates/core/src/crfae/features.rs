//! Sparse binary encoder features.
//!
//! Every feature is either a transition feature `(prev, tag)`, where `prev`
//! may be the start symbol, or an observation predicate of the current word
//! (identity, suffix, shape, ...) conjoined with the current tag. Ids are
//! laid out as
//!
//! ```text
//! [0, (T+1)*T)             transitions, prev-major (start symbol first)
//! [(T+1)*T, (T+1)*T + P*T) predicate-major observation features
//! ```

use std::collections::HashMap;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Template {
    Word,
    Lowercase,
    Suffix1,
    Suffix2,
    Suffix3,
    Prefix1,
    HasDigit,
    HasHyphen,
    Capitalized,
    Shape,
}

impl Template {
    pub const ALL: [Template; 10] = [
        Template::Word,
        Template::Lowercase,
        Template::Suffix1,
        Template::Suffix2,
        Template::Suffix3,
        Template::Prefix1,
        Template::HasDigit,
        Template::HasHyphen,
        Template::Capitalized,
        Template::Shape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Word => "word",
            Template::Lowercase => "lower",
            Template::Suffix1 => "suffix1",
            Template::Suffix2 => "suffix2",
            Template::Suffix3 => "suffix3",
            Template::Prefix1 => "prefix1",
            Template::HasDigit => "digit",
            Template::HasHyphen => "hyphen",
            Template::Capitalized => "cap",
            Template::Shape => "shape",
        }
    }

    /// The predicate this template contributes for `word`, if it fires.
    fn predicate(self, word: &str) -> Option<String> {
        let name = self.name();
        match self {
            Template::Word => Some(format!("{name}={word}")),
            Template::Lowercase => Some(format!("{name}={}", word.to_lowercase())),
            Template::Suffix1 | Template::Suffix2 | Template::Suffix3 => {
                let n = match self {
                    Template::Suffix1 => 1,
                    Template::Suffix2 => 2,
                    _ => 3,
                };
                let chars: Vec<char> = word.chars().collect();
                let tail: String = chars[chars.len().saturating_sub(n)..].iter().collect();
                Some(format!("{name}={tail}"))
            }
            Template::Prefix1 => word.chars().next().map(|c| format!("{name}={c}")),
            Template::HasDigit => word.chars().any(|c| c.is_numeric()).then(|| name.to_owned()),
            Template::HasHyphen => word.contains('-').then(|| name.to_owned()),
            Template::Capitalized => word
                .chars()
                .next()
                .is_some_and(char::is_uppercase)
                .then(|| name.to_owned()),
            Template::Shape => Some(format!("{name}={}", word_shape(word))),
        }
    }
}

impl std::str::FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feature template {s:?}")))
    }
}

/// Character classes (`X` upper, `x` lower, `d` digit, anything else kept)
/// with runs collapsed: `McDonald's` -> `XxXx'x`.
pub fn word_shape(word: &str) -> String {
    let mut out = String::new();
    let mut last = None;
    for c in word.chars() {
        let class = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if last != Some(class) {
            out.push(class);
            last = Some(class);
        }
    }
    out
}

/// Feature templates plus the frozen predicate index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureExtractor {
    templates: Vec<Template>,
    num_tags: usize,
    predicates: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureExtractor {
    /// Indexes every predicate that fires on some word of `corpus`, in order
    /// of first occurrence. The index is frozen afterwards.
    pub fn build(templates: &[Template], num_tags: usize, corpus: &Corpus) -> Self {
        let mut fx = Self {
            templates: templates.to_vec(),
            num_tags,
            predicates: Vec::new(),
            index: HashMap::new(),
        };
        for s in &corpus.sentences {
            for &w in &s.tokens {
                for p in fx.predicate_strings(corpus.vocabulary.word(w)) {
                    if !fx.index.contains_key(&p) {
                        fx.index.insert(p.clone(), fx.predicates.len());
                        fx.predicates.push(p);
                    }
                }
            }
        }
        fx
    }

    /// Rebuilds an extractor from a stored predicate list.
    pub fn from_parts(templates: Vec<Template>, num_tags: usize, predicates: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(predicates.len());
        for (i, p) in predicates.iter().enumerate() {
            if index.insert(p.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate predicate {p:?}")));
            }
        }
        Ok(Self {
            templates,
            num_tags,
            predicates,
            index,
        })
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn predicates(&self) -> &[String] {
        &self.predicates
    }

    pub fn num_tags(&self) -> usize {
        self.num_tags
    }

    pub fn num_features(&self) -> usize {
        (self.num_tags + 1) * self.num_tags + self.predicates.len() * self.num_tags
    }

    fn predicate_strings(&self, word: &str) -> Vec<String> {
        self.templates.iter().filter_map(|t| t.predicate(word)).collect()
    }

    /// Indexed predicates firing on `word`; unseen predicates are dropped.
    pub fn predicate_ids(&self, word: &str) -> Vec<usize> {
        self.predicate_strings(word)
            .iter()
            .filter_map(|p| self.index.get(p).copied())
            .collect()
    }

    /// Id of the transition feature into `tag`; `prev = None` is the start symbol.
    pub fn transition_feature(&self, prev: Option<usize>, tag: usize) -> usize {
        prev.map_or(0, |p| p + 1) * self.num_tags + tag
    }

    pub fn observation_feature(&self, predicate: usize, tag: usize) -> usize {
        (self.num_tags + 1) * self.num_tags + predicate * self.num_tags + tag
    }

    /// Active features for tag `tag` at position `i` of `words` after
    /// `prev_tag`. At `i = 0` the start symbol replaces `prev_tag`.
    pub fn extract_features(&self, words: &[&str], i: usize, tag: usize, prev_tag: Option<usize>) -> Vec<usize> {
        let prev = if i == 0 { None } else { prev_tag };
        let mut ids = vec![self.transition_feature(prev, tag)];
        ids.extend(
            self.predicate_ids(words[i])
                .into_iter()
                .map(|p| self.observation_feature(p, tag)),
        );
        ids
    }

    /// Predicate ids for every position of every sentence.
    pub fn encode(&self, corpus: &Corpus) -> EncodedCorpus {
        let per_type: Vec<Vec<usize>> = corpus
            .vocabulary
            .words()
            .iter()
            .map(|w| self.predicate_ids(w))
            .collect();
        EncodedCorpus {
            sentences: corpus
                .sentences
                .iter()
                .map(|s| s.tokens.iter().map(|&w| per_type[w].clone()).collect())
                .collect(),
        }
    }
}

/// `sentences[s][i]` lists the predicate ids firing at position `i` of sentence `s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub sentences: Vec<Vec<Vec<usize>>>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}
