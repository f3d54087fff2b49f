//! word2vec text/binary vector files and corpus-to-vector resolution.
//!
//! Words missing from the table resolve to a single shared out-of-vocabulary
//! vector: the arithmetic mean of every loaded vector.

use std::collections::HashMap;
use std::io::{BufRead, Read};

use log::warn;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<T>,
    oov: Vec<T>,
}

impl<T: Real> EmbeddingTable<T> {
    /// Builds a table from `(word, vector)` pairs; a repeated word keeps its last vector.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<T>)>,
    {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        let mut table = Self {
            dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            oov: vec![T::zero(); dim],
        };
        let mut loaded = 0usize;
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: vector.len(),
                });
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("non-finite component in vector for {word:?}")));
            }
            for (acc, &x) in table.oov.iter_mut().zip(&vector) {
                *acc += x;
            }
            loaded += 1;
            table.insert(word, &vector);
        }
        if loaded == 0 {
            return Err(Error::EmptyTable);
        }
        let n = T::lit(loaded as f64);
        for x in &mut table.oov {
            *x /= n;
        }
        Ok(table)
    }

    fn insert(&mut self, word: String, vector: &[T]) {
        if let Some(&id) = self.index.get(&word) {
            warn!("duplicate embedding for {word:?}; keeping the last occurrence");
            self.data[id * self.dim..(id + 1) * self.dim].copy_from_slice(vector);
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.data.extend_from_slice(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<&[T]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn oov_vector(&self) -> &[T] {
        &self.oov
    }

    /// Stored vector for `word`, or the shared OOV vector.
    pub fn lookup(&self, word: &str) -> &[T] {
        self.get(word).unwrap_or(&self.oov)
    }

    /// Folds keys to lowercase. Colliding keys keep the later entry; the OOV
    /// vector stays the mean of everything originally loaded.
    pub fn into_lowercased(self) -> Self {
        let mut out = Self {
            dim: self.dim,
            words: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            oov: self.oov.clone(),
        };
        for (i, w) in self.words.iter().enumerate() {
            let folded = w.to_lowercase();
            let v = self.row(i);
            if let Some(&id) = out.index.get(&folded) {
                out.data[id * out.dim..(id + 1) * out.dim].copy_from_slice(v);
            } else {
                out.insert(folded, v);
            }
        }
        out
    }

    /// Converts to another scalar type.
    pub fn cast<U: Real>(&self) -> EmbeddingTable<U> {
        EmbeddingTable {
            dim: self.dim,
            words: self.words.clone(),
            index: self.index.clone(),
            data: self.data.iter().map(|&x| U::lit(x.as_f64())).collect(),
            oov: self.oov.iter().map(|&x| U::lit(x.as_f64())).collect(),
        }
    }
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::parse(line_no, "header must be \"<vocab_size> <dim>\""));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|e| Error::parse(line_no, format!("bad header field {s:?}: {e}")))
    };
    let (n, dim) = (parse(fields[0])?, parse(fields[1])?);
    if n == 0 {
        return Err(Error::EmptyTable);
    }
    if dim == 0 {
        return Err(Error::parse(line_no, "dimension must be positive"));
    }
    Ok((n, dim))
}

/// Reads the word2vec text format: a `<vocab_size> <dim>` header, then one
/// `word x_1 .. x_dim` row per entry.
pub fn load_word2vec_text<T: Real, R: BufRead>(reader: R) -> Result<EmbeddingTable<T>> {
    let mut lines = reader.lines().enumerate();
    let (n, dim) = match lines.next() {
        Some((_, line)) => parse_header(&line?, 1)?,
        None => return Err(Error::parse(1, "missing header")),
    };
    let mut entries = Vec::with_capacity(n);
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if entries.len() == n {
            return Err(Error::parse(line_no, format!("more than {n} entries")));
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-blank line has a field").to_owned();
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::parse(line_no, format!("bad value {f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != dim {
            return Err(Error::parse(
                line_no,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(line_no, "non-finite value"));
        }
        entries.push((word, values.into_iter().map(T::lit).collect()));
    }
    if entries.len() < n {
        return Err(Error::Truncated(format!(
            "header declares {n} entries, found {}",
            entries.len()
        )));
    }
    EmbeddingTable::from_entries(dim, entries)
}

fn read_byte<R: Read>(reader: &mut R) -> Result<Option<u8>> {
    let mut b = [0u8; 1];
    loop {
        match reader.read(&mut b) {
            Ok(0) => return Ok(None),
            Ok(_) => return Ok(Some(b[0])),
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Reads the word2vec binary format: an ASCII `<vocab_size> <dim>\n` header,
/// then per entry the word, a space, and `dim` little-endian `f32`s,
/// optionally followed by a newline.
pub fn load_word2vec_binary<T: Real, R: BufRead>(mut reader: R) -> Result<EmbeddingTable<T>> {
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    if header.is_empty() {
        return Err(Error::parse(1, "missing header"));
    }
    let header = String::from_utf8(header).map_err(|_| Error::parse(1, "header is not UTF-8"))?;
    let (n, dim) = parse_header(&header, 1)?;

    let mut entries = Vec::with_capacity(n);
    let mut buf = vec![0u8; 4 * dim];
    for i in 0..n {
        let mut word = Vec::new();
        loop {
            match read_byte(&mut reader)? {
                None => return Err(Error::Truncated(format!("stream ended inside the word of entry {i}"))),
                Some(b' ') => break,
                Some(b'\n') if word.is_empty() => {}
                Some(b) => word.push(b),
            }
        }
        let word = String::from_utf8(word).map_err(|_| Error::Truncated(format!("entry {i} word is not UTF-8")))?;
        reader.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Truncated(format!("stream ended inside the vector of entry {i}"))
            } else {
                e.into()
            }
        })?;
        let values: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!("non-finite value in entry {i} ({word:?})")));
        }
        entries.push((word, values.into_iter().map(|x| T::lit(f64::from(x))).collect()));
    }
    EmbeddingTable::from_entries(dim, entries)
}

/// Writes the binary format read by [`load_word2vec_binary`].
pub fn write_word2vec_binary<T: Real, W: std::io::Write>(table: &EmbeddingTable<T>, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (i, w) in table.words().iter().enumerate() {
        out.write_all(w.as_bytes())?;
        out.write_all(b" ")?;
        for &x in table.row(i) {
            out.write_all(&(x.as_f64() as f32).to_le_bytes())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Writes the text format read by [`load_word2vec_text`].
pub fn write_word2vec_text<T: Real, W: std::io::Write>(table: &EmbeddingTable<T>, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (i, w) in table.words().iter().enumerate() {
        write!(out, "{w}")?;
        for &x in table.row(i) {
            write!(out, " {}", x.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// One sentence's vectors, row-major `len x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSentence<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddedSentence<T> {
    pub fn from_rows(dim: usize, rows: &[Vec<T>]) -> Self {
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            assert_eq!(r.len(), dim, "row length must equal dim");
            data.extend_from_slice(r);
        }
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coverage {
    pub tokens: usize,
    pub oov_tokens: usize,
    pub types: usize,
    pub oov_types: usize,
}

impl Coverage {
    pub fn token_oov_rate(&self) -> f64 {
        self.oov_tokens as f64 / self.tokens as f64
    }

    pub fn type_oov_rate(&self) -> f64 {
        self.oov_types as f64 / self.types as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCorpus<T> {
    pub sentences: Vec<EmbeddedSentence<T>>,
    pub coverage: Coverage,
}

impl<T: Real> EmbeddedCorpus<T> {
    pub fn dim(&self) -> usize {
        self.sentences.first().map_or(0, EmbeddedSentence::dim)
    }
}

/// Resolves every token of `corpus` to its vector.
pub fn embed_corpus<T: Real>(corpus: &Corpus, table: &EmbeddingTable<T>) -> Result<EmbeddedCorpus<T>> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let vocab = &corpus.vocabulary;
    let known: Vec<bool> = vocab.words().iter().map(|w| table.contains(w)).collect();
    let dim = table.dim();
    let sentences = corpus
        .sentences
        .iter()
        .map(|s| {
            let mut data = Vec::with_capacity(dim * s.len());
            for &id in &s.tokens {
                data.extend_from_slice(table.lookup(vocab.word(id)));
            }
            EmbeddedSentence { dim, data }
        })
        .collect();
    let tokens = corpus.num_tokens();
    let oov_tokens = corpus
        .sentences
        .iter()
        .flat_map(|s| &s.tokens)
        .filter(|&&id| !known[id])
        .count();
    let coverage = Coverage {
        tokens,
        oov_tokens,
        types: vocab.len(),
        oov_types: known.iter().filter(|k| !**k).count(),
    };
    Ok(EmbeddedCorpus { sentences, coverage })
}
