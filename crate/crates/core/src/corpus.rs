//! Treebank and plain-text ingestion.

use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Interned word types with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    types: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `word`, interning it and bumping its count.
    pub fn add(&mut self, word: &str) -> usize {
        if let Some(&id) = self.index.get(word) {
            self.counts[id] += 1;
            return id;
        }
        let id = self.types.len();
        self.types.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        self.counts.push(1);
        id
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.types[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn words(&self) -> &[String] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<usize>,
    pub gold_tags: Option<Vec<usize>>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Sentences over a shared vocabulary, optionally with gold tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub vocabulary: Vocabulary,
    pub tag_inventory: Vec<String>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn has_gold_tags(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(|s| s.gold_tags.is_some())
    }

    /// Surface forms of sentence `i`.
    pub fn words(&self, i: usize) -> Vec<&str> {
        self.sentences[i]
            .tokens
            .iter()
            .map(|&id| self.vocabulary.word(id))
            .collect()
    }

    /// Gold tag ids per sentence; errors if any sentence lacks them.
    pub fn gold(&self) -> Result<Vec<Vec<usize>>> {
        self.sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.gold_tags
                    .clone()
                    .ok_or_else(|| Error::Precondition(format!("sentence {i} has no gold tags")))
            })
            .collect()
    }

    /// Builds a corpus from raw token strings and optional tag strings.
    pub fn from_raw(raw: Vec<(Vec<String>, Option<Vec<String>>)>) -> Result<Self> {
        let mut builder = CorpusBuilder::default();
        for (tokens, tags) in raw {
            builder.push(&tokens, tags.as_deref())?;
        }
        builder.finish()
    }
}

#[derive(Default)]
struct CorpusBuilder {
    sentences: Vec<Sentence>,
    vocabulary: Vocabulary,
    tags: Vocabulary,
}

impl CorpusBuilder {
    fn push(&mut self, tokens: &[String], tags: Option<&[String]>) -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        if let Some(tags) = tags {
            if tags.len() != tokens.len() {
                return Err(Error::Precondition(format!(
                    "sentence {} has {} tokens but {} tags",
                    self.sentences.len(),
                    tokens.len(),
                    tags.len()
                )));
            }
        }
        let ids = tokens.iter().map(|w| self.vocabulary.add(w)).collect();
        let gold = tags.map(|ts| ts.iter().map(|t| self.tags.add(t)).collect());
        self.sentences.push(Sentence {
            tokens: ids,
            gold_tags: gold,
        });
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        if self.sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Corpus {
            sentences: self.sentences,
            vocabulary: self.vocabulary,
            tag_inventory: self.tags.types,
        })
    }
}

/// Column layout and case handling for CoNLL ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConllColumns {
    pub token: usize,
    pub tag: Option<usize>,
    pub lowercase: bool,
}

impl Default for ConllColumns {
    /// CoNLL-X layout: FORM in column 1, POSTAG in column 4.
    fn default() -> Self {
        Self {
            token: 1,
            tag: Some(4),
            lowercase: false,
        }
    }
}

fn fold(word: &str, lowercase: bool) -> String {
    if lowercase {
        word.to_lowercase()
    } else {
        word.to_owned()
    }
}

/// Reads a column-per-token file. Blank lines end sentences; `#` lines are comments.
pub fn parse_conll<R: BufRead>(reader: R, columns: ConllColumns) -> Result<Corpus> {
    let needed = columns.tag.map_or(columns.token, |t| t.max(columns.token)) + 1;
    let mut builder = CorpusBuilder::default();
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.starts_with('#') {
            continue;
        }
        if trimmed.is_empty() {
            builder.push(&tokens, columns.tag.map(|_| tags.as_slice()))?;
            tokens.clear();
            tags.clear();
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < needed {
            return Err(Error::parse(
                n + 1,
                format!("expected at least {needed} columns, found {}", fields.len()),
            ));
        }
        tokens.push(fold(fields[columns.token], columns.lowercase));
        if let Some(t) = columns.tag {
            tags.push(fields[t].to_owned());
        }
    }
    builder.push(&tokens, columns.tag.map(|_| tags.as_slice()))?;
    builder.finish()
}

/// Reads one whitespace-tokenized sentence per line. Blank lines are skipped.
pub fn parse_plain_text<R: BufRead>(reader: R, lowercase: bool) -> Result<Corpus> {
    let mut builder = CorpusBuilder::default();
    for line in reader.lines() {
        let line = line?;
        let tokens: Vec<String> = line.split_whitespace().map(|w| fold(w, lowercase)).collect();
        builder.push(&tokens, None)?;
    }
    builder.finish()
}

/// Deterministic fine-grained to universal tag mapping, in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagMap {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl TagMap {
    pub fn insert(&mut self, fine: &str, universal: &str) -> Result<()> {
        match self.index.get(fine) {
            Some(&i) if self.entries[i].1 == universal => Ok(()),
            Some(&i) => Err(Error::TagMapConflict {
                tag: fine.to_owned(),
                first: self.entries[i].1.clone(),
                second: universal.to_owned(),
            }),
            None => {
                self.index.insert(fine.to_owned(), self.entries.len());
                self.entries.push((fine.to_owned(), universal.to_owned()));
                Ok(())
            }
        }
    }

    pub fn get(&self, fine: &str) -> Option<&str> {
        self.index.get(fine).map(|&i| self.entries[i].1.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct universal tags in order of first appearance.
    pub fn universal_inventory(&self) -> Vec<String> {
        let mut seen = Vocabulary::new();
        for (_, u) in &self.entries {
            seen.add(u);
        }
        seen.types
    }
}

pub fn load_tag_map<R: BufRead>(reader: R) -> Result<TagMap> {
    let mut map = TagMap::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::parse(
                n + 1,
                format!("expected 2 columns, found {}", fields.len()),
            ));
        }
        map.insert(fields[0], fields[1])?;
    }
    Ok(map)
}

/// Rewrites gold tags through `map`. The new inventory is the map's image.
pub fn apply_tag_map(corpus: &Corpus, map: &TagMap) -> Result<Corpus> {
    if !corpus.has_gold_tags() {
        return Err(Error::Precondition("corpus has no gold tags".into()));
    }
    let inventory = map.universal_inventory();
    let position: HashMap<&str, usize> = inventory.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let translate = corpus
        .tag_inventory
        .iter()
        .map(|fine| {
            map.get(fine)
                .map(|u| position[u])
                .ok_or_else(|| Error::UnmappedTag(fine.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let sentences = corpus
        .sentences
        .iter()
        .map(|s| Sentence {
            tokens: s.tokens.clone(),
            gold_tags: s.gold_tags.as_ref().map(|g| g.iter().map(|&t| translate[t]).collect()),
        })
        .collect();
    Ok(Corpus {
        sentences,
        vocabulary: corpus.vocabulary.clone(),
        tag_inventory: inventory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(token: usize, tag: Option<usize>) -> ConllColumns {
        ConllColumns {
            token,
            tag,
            lowercase: false,
        }
    }

    fn gold_strings(c: &Corpus, i: usize) -> Vec<&str> {
        c.sentences[i]
            .gold_tags
            .as_ref()
            .unwrap()
            .iter()
            .map(|&t| c.tag_inventory[t].as_str())
            .collect()
    }

    #[test]
    fn conll_two_tokens() {
        let c = parse_conll("The DT\ndog NN\n\n".as_bytes(), cols(0, Some(1))).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.words(0), ["The", "dog"]);
        assert_eq!(gold_strings(&c, 0), ["DT", "NN"]);
    }

    #[test]
    fn conll_two_sentences_and_comments() {
        let text = "# sent 1\nThe DT\ndog NN\n\n# sent 2\nIt PRP\nran VBD\n";
        let c = parse_conll(text.as_bytes(), cols(0, Some(1))).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.words(1), ["It", "ran"]);
        assert_eq!(c.num_tokens(), 4);
    }

    #[test]
    fn conll_ragged_line_names_line() {
        let text = "1 The DT DT\n2\n";
        match parse_conll(text.as_bytes(), cols(1, Some(3))) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conll_empty_file() {
        assert!(matches!(
            parse_conll("".as_bytes(), cols(0, Some(1))),
            Err(Error::EmptyCorpus)
        ));
        assert!(matches!(
            parse_conll("\n\n# only comment\n".as_bytes(), cols(0, None)),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn conll_lowercase_folds_tokens() {
        let c = parse_conll(
            "The DT\nthe DT\n".as_bytes(),
            ConllColumns {
                token: 0,
                tag: Some(1),
                lowercase: true,
            },
        )
        .unwrap();
        assert_eq!(c.vocabulary.len(), 1);
        assert_eq!(c.vocabulary.count(0), 2);
    }

    #[test]
    fn plain_text() {
        let c = parse_plain_text("a b c\n".as_bytes(), false).unwrap();
        assert_eq!((c.len(), c.num_tokens()), (1, 3));
        assert!(!c.has_gold_tags());
        let c = parse_plain_text("a b\n\nc\n".as_bytes(), false).unwrap();
        assert_eq!(c.len(), 2);
        assert!(matches!(
            parse_plain_text("".as_bytes(), false),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn vocabulary_ids_are_dense() {
        let c = parse_plain_text("a b a\nc a\n".as_bytes(), false).unwrap();
        let v = &c.vocabulary;
        assert_eq!(v.len(), 3);
        for (i, w) in v.words().iter().enumerate() {
            assert_eq!(v.id(w), Some(i));
            assert!(v.count(i) >= 1);
        }
        assert_eq!(v.count(v.id("a").unwrap()), 3);
    }

    #[test]
    fn tag_map_loading() {
        assert_eq!(load_tag_map("NN NOUN\nVB VERB".as_bytes()).unwrap().len(), 2);
        match load_tag_map("NN NOUN\nNN VERB".as_bytes()) {
            Err(Error::TagMapConflict { tag, .. }) => assert_eq!(tag, "NN"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(load_tag_map("NN NOUN\nNN NOUN".as_bytes()).unwrap().len(), 1);
        assert!(matches!(
            load_tag_map("NN NOUN X\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tag_map_application() {
        let c = parse_conll("The DT\ndog NN\n".as_bytes(), cols(0, Some(1))).unwrap();
        let map = load_tag_map("DT DET\nNN NOUN\n".as_bytes()).unwrap();
        let mapped = apply_tag_map(&c, &map).unwrap();
        assert_eq!(gold_strings(&mapped, 0), ["DET", "NOUN"]);
        assert_eq!(mapped.words(0), c.words(0));

        let plain = parse_plain_text("a b\n".as_bytes(), false).unwrap();
        assert!(matches!(apply_tag_map(&plain, &map), Err(Error::Precondition(_))));

        let c = parse_conll("x XX\n".as_bytes(), cols(0, Some(1))).unwrap();
        match apply_tag_map(&c, &map) {
            Err(Error::UnmappedTag(t)) => assert_eq!(t, "XX"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tag_map_application_is_idempotent_on_identity_image() {
        let c = parse_conll("The DT\ndog NN\nbark VB\n".as_bytes(), cols(0, Some(1))).unwrap();
        let map = load_tag_map("DT DET\nNN NOUN\nVB VERB\nDET DET\nNOUN NOUN\nVERB VERB\n".as_bytes()).unwrap();
        let once = apply_tag_map(&c, &map).unwrap();
        let twice = apply_tag_map(&once, &map).unwrap();
        assert_eq!(once, twice);
    }
}
