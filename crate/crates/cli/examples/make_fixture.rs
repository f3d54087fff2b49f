//! Regenerates the bundled fixture under `fixtures/` (or the directory given
//! as the first argument).

use std::fmt::Write as _;
use std::path::PathBuf;

use embtag::embeddings::{write_word2vec_binary, write_word2vec_text, EmbeddingTable};
use embtag::rng::substream;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const DIM: usize = 5;

/// Fine tag, universal tag, words.
const LEXICON: &[(&str, &str, &[&str])] = &[
    ("DT", "DET", &["the", "a", "this", "every"]),
    ("NN", "NOUN", &["dog", "cat", "house", "river", "tree"]),
    ("NNS", "NOUN", &["dogs", "birds", "stones"]),
    ("VBZ", "VERB", &["sees", "likes", "finds"]),
    ("VBD", "VERB", &["saw", "liked", "crossed"]),
    ("JJ", "ADJ", &["big", "old", "green", "quiet"]),
    ("IN", "ADP", &["near", "under", "with"]),
];

/// Words deliberately missing from the embedding table.
const UNEMBEDDED: &[&str] = &["zebra"];

fn universal_index(u: &str) -> usize {
    ["DET", "NOUN", "VERB", "ADJ", "ADP"]
        .iter()
        .position(|x| *x == u)
        .unwrap()
}

fn pick(rng: &mut impl Rng, fine: &str) -> (String, &'static str) {
    let (tag, _, words) = LEXICON.iter().find(|(f, _, _)| *f == fine).unwrap();
    (words.choose(rng).unwrap().to_string(), tag)
}

fn noun_phrase(rng: &mut impl Rng, out: &mut Vec<(String, &'static str)>) {
    out.push(pick(rng, "DT"));
    if rng.random_bool(0.5) {
        out.push(pick(rng, "JJ"));
    }
    let fine = if rng.random_bool(0.3) { "NNS" } else { "NN" };
    out.push(pick(rng, fine));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&dir)?;
    let mut rng = substream(2024, "fixture");

    let mut sentences = Vec::new();
    for i in 0..20 {
        let mut s = Vec::new();
        noun_phrase(&mut rng, &mut s);
        let verb = if rng.random_bool(0.5) { "VBZ" } else { "VBD" };
        s.push(pick(&mut rng, verb));
        noun_phrase(&mut rng, &mut s);
        if rng.random_bool(0.5) {
            s.push(pick(&mut rng, "IN"));
            noun_phrase(&mut rng, &mut s);
        }
        if i == 7 {
            let last = s.len() - 1;
            s[last] = (UNEMBEDDED[0].to_owned(), "NN");
        }
        let mut first: Vec<char> = s[0].0.chars().collect();
        first[0] = first[0].to_ascii_uppercase();
        s[0].0 = first.into_iter().collect();
        sentences.push(s);
    }

    let mut conll = String::new();
    let mut labels = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let _ = writeln!(conll, "# sent_id = {}", i + 1);
        for (j, (w, fine)) in s.iter().enumerate() {
            let _ = writeln!(conll, "{}\t{w}\t_\t_\t{fine}\t_\t_\t_\t_\t_", j + 1);
        }
        conll.push('\n');
        let line: Vec<String> = s
            .iter()
            .map(|(_, f)| format!("c{}", LEXICON.iter().position(|(t, _, _)| t == f).unwrap()))
            .collect();
        let _ = writeln!(labels, "{}", line.join(" "));
    }
    std::fs::write(dir.join("corpus.conll"), conll)?;
    std::fs::write(dir.join("labels.txt"), labels)?;

    let mut map = String::new();
    for (fine, universal, _) in LEXICON {
        let _ = writeln!(map, "{fine}\t{universal}");
    }
    std::fs::write(dir.join("tags.map"), map)?;

    // Cluster centres three units apart per universal tag; coordinates are
    // multiples of 1/64 so the text and binary files hold identical values.
    let noise = Normal::new(0.0, 0.3)?;
    let mut entries = Vec::new();
    for (_, universal, words) in LEXICON {
        let u = universal_index(universal);
        for w in *words {
            let v: Vec<f64> = (0..DIM)
                .map(|d| {
                    let centre: f64 = if d == u { 3.0 } else { 0.0 };
                    ((centre + noise.sample(&mut rng)) * 64.0).round() / 64.0
                })
                .collect();
            entries.push((w.to_string(), v));
        }
    }
    let table = EmbeddingTable::<f64>::from_entries(DIM, entries)?;
    write_word2vec_text(&table, std::fs::File::create(dir.join("vectors.txt"))?)?;
    write_word2vec_binary(&table, std::fs::File::create(dir.join("vectors.bin"))?)?;

    std::fs::write(
        dir.join("train.conf"),
        "# Gaussian HMM on the bundled fixture\n\
         model = hmm-gaussian\n\
         corpus = corpus.conll\n\
         tag-map = tags.map\n\
         embeddings = vectors.txt\n\
         lowercase = true\n\
         max-iterations = 50\n\
         restarts = 2\n\
         seed = 1\n",
    )?;
    std::fs::write(
        dir.join("sweep.conf"),
        "model = hmm-gaussian\n\
         corpus = corpus.conll\n\
         tag-map = tags.map\n\
         lowercase = true\n\
         max-iterations = 30\n\
         seeds = 1,2\n\
         embedding = skipgram 2 5 vectors.txt\n\
         embedding = skipgram 2 5 vectors.bin\n",
    )?;
    Ok(())
}
