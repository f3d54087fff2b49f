//! Flat `key = value` run configuration.
//!
//! A config file holds one `key = value` per line; `#` starts a comment.
//! Keys are the long flag names, so any key can be overridden on the command
//! line and flags always win. Relative paths in a file are resolved against
//! the file's directory; paths given as flags are used as-is.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use embtag::crfae::Template;
use embtag::hmm::CovarianceMode;
use embtag::lattice::DecodeMode;

use crate::error::{CliError, CliResult};

/// Every run key, in the order `config.resolved` lists them.
pub const KEYS: &[&str] = &[
    "model",
    "corpus",
    "corpus-format",
    "token-column",
    "tag-column",
    "lowercase",
    "tag-map",
    "embeddings",
    "embeddings-format",
    "labels",
    "num-tags",
    "covariance",
    "fixed-variance",
    "variance-floor",
    "max-iterations",
    "tolerance",
    "restarts",
    "seed",
    "decode",
    "templates",
    "inner-steps",
    "step-size",
    "l2",
    "precision",
    "output",
    "model-file",
    "predictions",
    "metrics",
    "results",
];

const PATH_KEYS: &[&str] = &[
    "corpus",
    "tag-map",
    "embeddings",
    "labels",
    "output",
    "model-file",
    "predictions",
    "metrics",
    "results",
];

/// Command-line overrides; one flag per config key.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// hmm-gaussian, hmm-multinomial, crfae-gaussian or crfae-multinomial.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub corpus: Option<String>,
    /// conll or text.
    #[arg(long)]
    pub corpus_format: Option<String>,
    /// 0-based token column of a CoNLL file.
    #[arg(long)]
    pub token_column: Option<String>,
    /// 0-based gold tag column of a CoNLL file, or `none`.
    #[arg(long)]
    pub tag_column: Option<String>,
    #[arg(long)]
    pub lowercase: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub tag_map: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<String>,
    /// auto, text or binary.
    #[arg(long)]
    pub embeddings_format: Option<String>,
    /// Reconstruction label file (crfae-multinomial).
    #[arg(long, value_name = "PATH")]
    pub labels: Option<String>,
    /// Tag count; `auto` uses the gold inventory.
    #[arg(long)]
    pub num_tags: Option<String>,
    /// fixed or estimated.
    #[arg(long)]
    pub covariance: Option<String>,
    #[arg(long)]
    pub fixed_variance: Option<String>,
    #[arg(long)]
    pub variance_floor: Option<String>,
    #[arg(long)]
    pub max_iterations: Option<String>,
    #[arg(long)]
    pub tolerance: Option<String>,
    #[arg(long)]
    pub restarts: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// viterbi or posterior.
    #[arg(long)]
    pub decode: Option<String>,
    /// Comma-separated CRF feature templates.
    #[arg(long)]
    pub templates: Option<String>,
    #[arg(long)]
    pub inner_steps: Option<String>,
    #[arg(long)]
    pub step_size: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
    /// f64 or f32.
    #[arg(long)]
    pub precision: Option<String>,
    /// Training output directory.
    #[arg(long, value_name = "PATH")]
    pub output: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub model_file: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub metrics: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub results: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        let fields: [(&'static str, &Option<String>); 29] = [
            ("model", &self.model),
            ("corpus", &self.corpus),
            ("corpus-format", &self.corpus_format),
            ("token-column", &self.token_column),
            ("tag-column", &self.tag_column),
            ("lowercase", &self.lowercase),
            ("tag-map", &self.tag_map),
            ("embeddings", &self.embeddings),
            ("embeddings-format", &self.embeddings_format),
            ("labels", &self.labels),
            ("num-tags", &self.num_tags),
            ("covariance", &self.covariance),
            ("fixed-variance", &self.fixed_variance),
            ("variance-floor", &self.variance_floor),
            ("max-iterations", &self.max_iterations),
            ("tolerance", &self.tolerance),
            ("restarts", &self.restarts),
            ("seed", &self.seed),
            ("decode", &self.decode),
            ("templates", &self.templates),
            ("inner-steps", &self.inner_steps),
            ("step-size", &self.step_size),
            ("l2", &self.l2),
            ("precision", &self.precision),
            ("output", &self.output),
            ("model-file", &self.model_file),
            ("predictions", &self.predictions),
            ("metrics", &self.metrics),
            ("results", &self.results),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
            .collect()
    }
}

/// One `key = value` line of a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

pub fn parse_entries(text: &str) -> CliResult<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::config(format!(
                "config line {}: expected `key = value`",
                i + 1
            )));
        };
        out.push(Entry {
            key: key.trim().to_owned(),
            value: value.trim().to_owned(),
            line: i + 1,
        });
    }
    Ok(out)
}

/// Raw string settings after merging a config file with flag overrides.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// Reads `args.config` (if any), keeps entries whose key is in `extra`
    /// aside, and applies flag overrides. An empty flag value unsets the key.
    pub fn load(args: &RunArgs, extra: &[&str]) -> CliResult<(Self, Vec<Entry>)> {
        let mut settings = Settings::default();
        let mut kept = Vec::new();
        if let Some(path) = &args.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new(""));
            for entry in parse_entries(&text)? {
                if extra.contains(&entry.key.as_str()) {
                    let value = if entry.key == "embedding" {
                        relative_to(base, &entry.value, true)
                    } else {
                        entry.value.clone()
                    };
                    kept.push(Entry { value, ..entry });
                    continue;
                }
                if !KEYS.contains(&entry.key.as_str()) {
                    return Err(CliError::config(format!(
                        "config line {}: unknown key {:?}",
                        entry.line, entry.key
                    )));
                }
                if settings.values.contains_key(&entry.key) {
                    return Err(CliError::config(format!(
                        "config line {}: duplicate key {:?}",
                        entry.line, entry.key
                    )));
                }
                let value = if PATH_KEYS.contains(&entry.key.as_str()) {
                    relative_to(base, &entry.value, false)
                } else {
                    entry.value
                };
                settings.values.insert(entry.key, value);
            }
        }
        for (key, value) in args.overrides() {
            if value.is_empty() {
                settings.values.remove(key);
            } else {
                settings.values.insert(key.to_owned(), value.clone());
            }
        }
        Ok((settings, kept))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_owned(), value.into());
    }

    fn parse<V: std::str::FromStr>(&self, key: &str, default: V) -> CliResult<V>
    where
        V::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e| CliError::config(format!("{key}: cannot parse {s:?}: {e}"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }
}

/// Joins a relative path onto `base`. For sweep `embedding` lines only the
/// last whitespace field is a path.
fn relative_to(base: &Path, value: &str, last_field: bool) -> String {
    let join = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() || base.as_os_str().is_empty() {
            p.display().to_string()
        } else {
            base.join(p).display().to_string()
        }
    };
    if !last_field {
        return join(value);
    }
    match value.rsplit_once(char::is_whitespace) {
        Some((head, tail)) => format!("{head} {}", join(tail.trim())),
        None => value.to_owned(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    HmmGaussian,
    HmmMultinomial,
    CrfAeGaussian,
    CrfAeMultinomial,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::HmmGaussian => "hmm-gaussian",
            ModelKind::HmmMultinomial => "hmm-multinomial",
            ModelKind::CrfAeGaussian => "crfae-gaussian",
            ModelKind::CrfAeMultinomial => "crfae-multinomial",
        }
    }

    pub fn needs_embeddings(self) -> bool {
        matches!(self, ModelKind::HmmGaussian | ModelKind::CrfAeGaussian)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            ModelKind::HmmGaussian,
            ModelKind::HmmMultinomial,
            ModelKind::CrfAeGaussian,
            ModelKind::CrfAeMultinomial,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown model {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Conll,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingsFormat {
    Auto,
    Text,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NumTags {
    Auto,
    Fixed(usize),
}

/// Typed, validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
    pub token_column: usize,
    pub tag_column: Option<usize>,
    pub lowercase: bool,
    pub tag_map: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub embeddings_format: EmbeddingsFormat,
    pub labels: Option<PathBuf>,
    pub num_tags: NumTags,
    pub covariance: CovarianceMode,
    pub fixed_variance: f64,
    pub variance_floor: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub decode: DecodeMode,
    pub templates: Vec<Template>,
    pub inner_steps: usize,
    pub step_size: f64,
    pub l2: f64,
    pub precision: Precision,
    pub output: Option<PathBuf>,
    pub model_file: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub results: Option<PathBuf>,
}

fn choice<V: Copy>(s: &Settings, key: &str, options: &[(&str, V)], default: V) -> CliResult<V> {
    match s.get(key) {
        None => Ok(default),
        Some(v) => options
            .iter()
            .find(|(name, _)| *name == v)
            .map(|(_, x)| *x)
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                CliError::config(format!("{key}: expected one of {}, found {v:?}", names.join(", ")))
            }),
    }
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> CliResult<Self> {
        let bool_of = |key: &str| s.parse::<bool>(key, false);
        let tag_column = match s.get("tag-column") {
            Some("none") => None,
            _ => Some(s.parse("tag-column", 4usize)?),
        };
        let num_tags = match s.get("num-tags") {
            None | Some("auto") => NumTags::Auto,
            Some(_) => NumTags::Fixed(s.parse("num-tags", 0usize)?),
        };
        let templates = match s.get("templates") {
            None => Template::ALL.to_vec(),
            Some(list) => list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<Template>()
                        .map_err(|e| CliError::config(format!("templates: {e}")))
                })
                .collect::<CliResult<Vec<_>>>()?,
        };
        let cfg = RunConfig {
            model: s.parse("model", ModelKind::HmmGaussian)?,
            corpus: s.path("corpus"),
            corpus_format: choice(
                s,
                "corpus-format",
                &[("conll", CorpusFormat::Conll), ("text", CorpusFormat::Text)],
                CorpusFormat::Conll,
            )?,
            token_column: s.parse("token-column", 1)?,
            tag_column,
            lowercase: bool_of("lowercase")?,
            tag_map: s.path("tag-map"),
            embeddings: s.path("embeddings"),
            embeddings_format: choice(
                s,
                "embeddings-format",
                &[
                    ("auto", EmbeddingsFormat::Auto),
                    ("text", EmbeddingsFormat::Text),
                    ("binary", EmbeddingsFormat::Binary),
                ],
                EmbeddingsFormat::Auto,
            )?,
            labels: s.path("labels"),
            num_tags,
            covariance: s.parse("covariance", CovarianceMode::Fixed)?,
            fixed_variance: s.parse("fixed-variance", embtag::hmm::DEFAULT_FIXED_VARIANCE)?,
            variance_floor: s.parse("variance-floor", embtag::hmm::DEFAULT_VARIANCE_FLOOR)?,
            max_iterations: s.parse("max-iterations", 100)?,
            tolerance: s.parse("tolerance", 1e-5)?,
            restarts: s.parse("restarts", 1)?,
            seed: s.parse("seed", 0)?,
            decode: s.parse("decode", DecodeMode::Viterbi)?,
            templates,
            inner_steps: s.parse("inner-steps", 5)?,
            step_size: s.parse("step-size", 0.1)?,
            l2: s.parse("l2", 0.0)?,
            precision: choice(
                s,
                "precision",
                &[("f64", Precision::F64), ("f32", Precision::F32)],
                Precision::F64,
            )?,
            output: s.path("output"),
            model_file: s.path("model-file"),
            predictions: s.path("predictions"),
            metrics: s.path("metrics"),
            results: s.path("results"),
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::config(m.to_owned()));
        if let NumTags::Fixed(k) = self.num_tags {
            if k < 2 {
                return bad("num-tags must be at least 2");
            }
        }
        if !(self.fixed_variance > 0.0 && self.fixed_variance.is_finite()) {
            return bad("fixed-variance must be positive");
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return bad("variance-floor must be positive");
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be non-negative");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step-size must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.templates.is_empty() {
            return bad("templates must not be empty");
        }
        Ok(())
    }

    /// Checks that every input the model needs is configured and exists.
    pub fn check_inputs(&self) -> CliResult<()> {
        let corpus = self
            .corpus
            .as_ref()
            .ok_or_else(|| CliError::config("corpus is required"))?;
        exists("corpus", corpus)?;
        if let Some(p) = &self.tag_map {
            exists("tag-map", p)?;
        }
        if self.model.needs_embeddings() {
            let p = self
                .embeddings
                .as_ref()
                .ok_or_else(|| CliError::config(format!("{} needs embeddings", self.model.name())))?;
            exists("embeddings", p)?;
        }
        if self.model == ModelKind::CrfAeMultinomial {
            let p = self
                .labels
                .as_ref()
                .ok_or_else(|| CliError::config("crfae-multinomial needs labels"))?;
            exists("labels", p)?;
        }
        Ok(())
    }

    /// `key = value` lines for every key, defaults filled in.
    pub fn resolved(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let pick = |b: bool, yes: &str, no: &str| if b { yes.to_owned() } else { no.to_owned() };
        let values: Vec<(&str, String)> = vec![
            ("model", self.model.name().to_owned()),
            ("corpus", path(&self.corpus)),
            (
                "corpus-format",
                pick(self.corpus_format == CorpusFormat::Conll, "conll", "text"),
            ),
            ("token-column", self.token_column.to_string()),
            (
                "tag-column",
                self.tag_column.map_or("none".to_owned(), |c| c.to_string()),
            ),
            ("lowercase", self.lowercase.to_string()),
            ("tag-map", path(&self.tag_map)),
            ("embeddings", path(&self.embeddings)),
            (
                "embeddings-format",
                match self.embeddings_format {
                    EmbeddingsFormat::Auto => "auto",
                    EmbeddingsFormat::Text => "text",
                    EmbeddingsFormat::Binary => "binary",
                }
                .to_owned(),
            ),
            ("labels", path(&self.labels)),
            (
                "num-tags",
                match self.num_tags {
                    NumTags::Auto => "auto".to_owned(),
                    NumTags::Fixed(k) => k.to_string(),
                },
            ),
            ("covariance", self.covariance.to_string()),
            ("fixed-variance", self.fixed_variance.to_string()),
            ("variance-floor", self.variance_floor.to_string()),
            ("max-iterations", self.max_iterations.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("restarts", self.restarts.to_string()),
            ("seed", self.seed.to_string()),
            ("decode", self.decode.to_string()),
            (
                "templates",
                self.templates.iter().map(|t| t.name()).collect::<Vec<_>>().join(","),
            ),
            ("inner-steps", self.inner_steps.to_string()),
            ("step-size", self.step_size.to_string()),
            ("l2", self.l2.to_string()),
            ("precision", pick(self.precision == Precision::F64, "f64", "f32")),
            ("output", path(&self.output)),
            ("model-file", path(&self.model_file)),
            ("predictions", path(&self.predictions)),
            ("metrics", path(&self.metrics)),
            ("results", path(&self.results)),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        let mut out = String::new();
        for (k, v) in values {
            if !v.is_empty() {
                let _ = writeln!(out, "{k} = {v}");
            }
        }
        out
    }
}

fn exists(key: &str, path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::config(format!("{key}: {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_skip_comments_and_blank_lines() {
        let e = parse_entries("# header\nmodel = hmm-gaussian  # trailing\n\nseed=4\n").unwrap();
        assert_eq!(e.len(), 2);
        assert_eq!(
            (e[0].key.as_str(), e[0].value.as_str(), e[0].line),
            ("model", "hmm-gaussian", 2)
        );
        assert_eq!(e[1].value, "4");
        assert!(parse_entries("model hmm").is_err());
    }

    #[test]
    fn defaults_and_ranges() {
        let cfg = RunConfig::from_settings(&Settings::default()).unwrap();
        assert_eq!(cfg.model, ModelKind::HmmGaussian);
        assert_eq!(cfg.fixed_variance, 0.45);
        assert_eq!(cfg.decode, DecodeMode::Viterbi);
        assert_eq!(cfg.tag_column, Some(4));
        let mut s = Settings::default();
        s.set("num-tags", "1");
        assert!(RunConfig::from_settings(&s).is_err());
        s.set("num-tags", "three");
        assert!(RunConfig::from_settings(&s).is_err());
    }

    #[test]
    fn resolved_round_trips() {
        let mut s = Settings::default();
        s.set("model", "crfae-gaussian");
        s.set("templates", "word,suffix2");
        s.set("tag-column", "none");
        s.set("corpus", "x.conll");
        let cfg = RunConfig::from_settings(&s).unwrap();
        let mut again = Settings::default();
        for e in parse_entries(&cfg.resolved()).unwrap() {
            again.set(&e.key, e.value);
        }
        assert_eq!(RunConfig::from_settings(&again).unwrap(), cfg);
    }

    #[test]
    fn sweep_paths_join_last_field() {
        assert_eq!(relative_to(Path::new("cfg"), "sg 2 5 v.txt", true), "sg 2 5 cfg/v.txt");
        assert_eq!(relative_to(Path::new("cfg"), "/abs/c.conll", false), "/abs/c.conll");
    }
}
