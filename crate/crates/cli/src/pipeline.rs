//! Loading inputs, fitting, decoding and scoring, shared by every command.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use embtag::corpus::{apply_tag_map, load_tag_map, parse_conll, parse_plain_text, ConllColumns, Corpus};
use embtag::crfae::{
    self, load_reconstruction_labels, CrfAeConfig, CrfAeModel, Reconstruction, ReconstructionLabels, Targets,
};
use embtag::embeddings::{embed_corpus, load_word2vec_binary, load_word2vec_text, EmbeddedCorpus, EmbeddingTable};
use embtag::eval::{build_contingency, many_to_one, v_measure};
use embtag::hmm::{self, HmmConfig, HmmModel, Observations};
use embtag::lattice::DecodeMode;
use embtag::Real;

use crate::config::{CorpusFormat, EmbeddingsFormat, ModelKind, NumTags, RunConfig};
use crate::error::{CliError, CliResult};

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn in_file(path: &Path) -> impl FnOnce(embtag::Error) -> CliError + '_ {
    move |e| CliError::from(e).context(path.display())
}

/// Reads the corpus and rewrites gold tags through the tag map, if any.
pub fn load_corpus(cfg: &RunConfig) -> CliResult<Corpus> {
    let path = cfg
        .corpus
        .as_deref()
        .ok_or_else(|| CliError::config("corpus is required"))?;
    let corpus = match cfg.corpus_format {
        CorpusFormat::Conll => parse_conll(
            open(path)?,
            ConllColumns {
                token: cfg.token_column,
                tag: cfg.tag_column,
                lowercase: cfg.lowercase,
            },
        ),
        CorpusFormat::Text => parse_plain_text(open(path)?, cfg.lowercase),
    }
    .map_err(in_file(path))?;
    match &cfg.tag_map {
        Some(map_path) => {
            let map = load_tag_map(open(map_path)?).map_err(in_file(map_path))?;
            Ok(apply_tag_map(&corpus, &map).map_err(in_file(map_path))?)
        }
        None => Ok(corpus),
    }
}

pub fn load_embeddings<T: Real>(
    path: &Path,
    format: EmbeddingsFormat,
    lowercase: bool,
) -> CliResult<EmbeddingTable<T>> {
    let binary = match format {
        EmbeddingsFormat::Binary => true,
        EmbeddingsFormat::Text => false,
        EmbeddingsFormat::Auto => path.extension().is_some_and(|e| e == "bin"),
    };
    let table = if binary {
        load_word2vec_binary(open(path)?)
    } else {
        load_word2vec_text(open(path)?)
    }
    .map_err(in_file(path))?;
    Ok(if lowercase { table.into_lowercased() } else { table })
}

/// Everything a model reads besides its parameters.
pub struct Inputs<T> {
    pub corpus: Corpus,
    pub embedded: Option<EmbeddedCorpus<T>>,
    pub labels: Option<ReconstructionLabels>,
}

impl<T: Real> Inputs<T> {
    pub fn load(cfg: &RunConfig, corpus: Corpus, embeddings: bool, labels: bool) -> CliResult<Self> {
        let embedded = if embeddings {
            let path = cfg
                .embeddings
                .as_deref()
                .ok_or_else(|| CliError::config("embeddings are required"))?;
            let table = load_embeddings::<T>(path, cfg.embeddings_format, cfg.lowercase)?;
            Some(embed_corpus(&corpus, &table)?)
        } else {
            None
        };
        let labels = if labels {
            let path = cfg
                .labels
                .as_deref()
                .ok_or_else(|| CliError::config("labels are required"))?;
            Some(load_reconstruction_labels(open(path)?, &corpus).map_err(in_file(path))?)
        } else {
            None
        };
        Ok(Self {
            corpus,
            embedded,
            labels,
        })
    }

    pub fn oov_rate(&self) -> Option<f64> {
        self.embedded.as_ref().map(|e| e.coverage.token_oov_rate())
    }

    fn vectors(&self) -> CliResult<&EmbeddedCorpus<T>> {
        self.embedded
            .as_ref()
            .ok_or_else(|| CliError::config("embeddings are required"))
    }

    fn targets(&self) -> CliResult<Targets<'_, T>> {
        match (&self.embedded, &self.labels) {
            (_, Some(l)) => Ok(Targets::Labels(l)),
            (Some(e), None) => Ok(Targets::Vectors(e)),
            (None, None) => Err(CliError::config("a CRF autoencoder needs embeddings or labels")),
        }
    }
}

pub fn resolve_num_tags(cfg: &RunConfig, corpus: &Corpus) -> CliResult<usize> {
    match cfg.num_tags {
        NumTags::Fixed(k) => Ok(k),
        NumTags::Auto if corpus.has_gold_tags() && corpus.tag_inventory.len() >= 2 => Ok(corpus.tag_inventory.len()),
        NumTags::Auto => Err(CliError::config(
            "num-tags is auto but the corpus has fewer than two gold tags; set num-tags",
        )),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trained<T> {
    Hmm(HmmModel<T>),
    CrfAe(CrfAeModel<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Fit<T> {
    pub model: Trained<T>,
    pub trace: Vec<TracePoint>,
    pub final_objective: f64,
    pub converged: bool,
}

pub fn fit<T: Real>(cfg: &RunConfig, inputs: &Inputs<T>) -> CliResult<Fit<T>> {
    let k = resolve_num_tags(cfg, &inputs.corpus)?;
    match cfg.model {
        ModelKind::HmmGaussian | ModelKind::HmmMultinomial => {
            let mut hc = if cfg.model == ModelKind::HmmGaussian {
                HmmConfig::gaussian(k)
            } else {
                HmmConfig::multinomial(k)
            };
            hc.covariance_mode = cfg.covariance;
            hc.fixed_variance = cfg.fixed_variance;
            hc.variance_floor = cfg.variance_floor;
            hc.max_iterations = cfg.max_iterations;
            hc.tolerance = cfg.tolerance;
            hc.validate()?;
            let obs = match cfg.model {
                ModelKind::HmmGaussian => Observations::Vectors(inputs.vectors()?),
                _ => Observations::Words(&inputs.corpus),
            };
            let out = hmm::train_with_restarts(&hc, obs, cfg.seed, cfg.restarts)?;
            Ok(Fit {
                trace: out
                    .trace
                    .iter()
                    .map(|e| TracePoint {
                        iteration: e.iteration,
                        objective: e.log_likelihood,
                        seconds: e.seconds,
                    })
                    .collect(),
                model: Trained::Hmm(out.model),
                final_objective: out.final_log_likelihood,
                converged: out.converged,
            })
        }
        ModelKind::CrfAeGaussian | ModelKind::CrfAeMultinomial => {
            let mut cc = if cfg.model == ModelKind::CrfAeGaussian {
                CrfAeConfig::gaussian(k)
            } else {
                CrfAeConfig::multinomial(k)
            };
            cc.templates = cfg.templates.clone();
            cc.covariance_mode = cfg.covariance;
            cc.fixed_variance = cfg.fixed_variance;
            cc.variance_floor = cfg.variance_floor;
            cc.outer_iterations = cfg.max_iterations;
            cc.inner_steps = cfg.inner_steps;
            cc.step_size = cfg.step_size;
            cc.l2 = cfg.l2;
            cc.tolerance = cfg.tolerance;
            let out = crfae::train_with_restarts(&cc, &inputs.corpus, inputs.targets()?, cfg.seed, cfg.restarts)?;
            Ok(Fit {
                trace: out
                    .trace
                    .iter()
                    .map(|e| TracePoint {
                        iteration: e.iteration,
                        objective: e.objective,
                        seconds: e.seconds,
                    })
                    .collect(),
                model: Trained::CrfAe(out.model),
                final_objective: out.final_objective,
                converged: out.converged,
            })
        }
    }
}

impl<T: Real> Trained<T> {
    pub fn needs_embeddings(&self) -> bool {
        match self {
            Trained::Hmm(m) => m.gaussian().is_some(),
            Trained::CrfAe(m) => matches!(m.reconstruction, Reconstruction::Gaussian(_)),
        }
    }

    pub fn needs_labels(&self) -> bool {
        matches!(self, Trained::CrfAe(m) if matches!(m.reconstruction, Reconstruction::Multinomial { .. }))
    }

    pub fn predict(&self, inputs: &Inputs<T>, mode: DecodeMode) -> CliResult<Vec<Vec<usize>>> {
        Ok(match self {
            Trained::Hmm(m) => {
                let obs = if m.gaussian().is_some() {
                    Observations::Vectors(inputs.vectors()?)
                } else {
                    Observations::Words(&inputs.corpus)
                };
                hmm::decode(m, obs, mode)?
            }
            Trained::CrfAe(m) => {
                let encoded = m.extractor.encode(&inputs.corpus);
                m.decode(&encoded, inputs.targets()?, mode)?
            }
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        let mut out = create(path)?;
        match self {
            Trained::Hmm(m) => m.save(&mut out)?,
            Trained::CrfAe(m) => m.save(&mut out)?,
        }
        out.flush()?;
        Ok(())
    }

    pub fn from_json(text: &str, format: &str) -> embtag::Result<Self> {
        if format == hmm::MODEL_FORMAT {
            Ok(Trained::Hmm(HmmModel::load(text.as_bytes())?))
        } else {
            Ok(Trained::CrfAe(CrfAeModel::load(text.as_bytes())?))
        }
    }
}

/// Format and scalar type recorded in a model file header.
pub fn model_header(text: &str) -> CliResult<(String, String)> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::data(format!("model file is not JSON: {e}")))?;
    let field = |k: &str| value.get(k).and_then(|v| v.as_str()).map(str::to_owned);
    match (field("format"), field("scalar")) {
        (Some(f), Some(s)) if f == hmm::MODEL_FORMAT || f == crfae::CRFAE_FORMAT => Ok((f, s)),
        (Some(f), Some(_)) => Err(CliError::data(format!("unknown model format {f:?}"))),
        _ => Err(CliError::data("model file lacks a format/scalar header")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub v_measure: f64,
    pub homogeneity: f64,
    pub completeness: f64,
    pub many_to_one: f64,
    pub token_count: usize,
    pub oov_rate: Option<f64>,
}

impl Metrics {
    pub fn compute(gold: &[Vec<usize>], pred: &[Vec<usize>], oov_rate: Option<f64>) -> CliResult<Self> {
        let table = build_contingency(gold, pred)?;
        let v = v_measure(&table);
        Ok(Self {
            v_measure: v.v_measure,
            homogeneity: v.homogeneity,
            completeness: v.completeness,
            many_to_one: many_to_one(&table),
            token_count: table.n() as usize,
            oov_rate,
        })
    }

    /// `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = format!(
            "v_measure\t{}\nhomogeneity\t{}\ncompleteness\t{}\nmany_to_one\t{}\ntoken_count\t{}\n",
            self.v_measure, self.homogeneity, self.completeness, self.many_to_one, self.token_count
        );
        if let Some(r) = self.oov_rate {
            out.push_str(&format!("oov_rate\t{r}\n"));
        }
        out
    }
}

/// Reads one sentence of whitespace-separated tag ids per line.
pub fn read_predictions(path: &Path) -> CliResult<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.split_whitespace()
                .map(|t| {
                    t.parse::<usize>()
                        .map_err(|_| CliError::data(format!("{} line {}: bad tag id {t:?}", path.display(), i + 1)))
                })
                .collect()
        })
        .collect()
}

pub fn format_predictions(pred: &[Vec<usize>]) -> String {
    let mut out = String::new();
    for s in pred {
        let line: Vec<String> = s.iter().map(usize::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}
