//! The `train`, `tag`, `eval` and `sweep` subcommands.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use embtag::Real;
use log::info;
use rayon::prelude::*;

use crate::config::{ModelKind, Precision, RunArgs, RunConfig, Settings};
use crate::error::{CliError, CliResult};
use crate::pipeline::{self, Fit, Inputs, Metrics, Trained};

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    let mut out = pipeline::create(path)?;
    out.write_all(contents.as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Writes to `explicit`, else `<output>/<name>`, else stdout.
fn emit(explicit: Option<&Path>, output: Option<&Path>, name: &str, contents: &str) -> CliResult<()> {
    match explicit.map(Path::to_path_buf).or_else(|| output.map(|o| o.join(name))) {
        Some(path) => write_file(&path, contents),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn load_config(args: &RunArgs) -> CliResult<RunConfig> {
    let (settings, _) = Settings::load(args, &[])?;
    RunConfig::from_settings(&settings)
}

pub fn train(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    cfg.check_inputs()?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| CliError::config("train needs an output directory"))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    let corpus = pipeline::load_corpus(&cfg)?;
    match cfg.precision {
        Precision::F64 => train_typed::<f64>(&cfg, corpus, &out),
        Precision::F32 => train_typed::<f32>(&cfg, corpus, &out),
    }
}

fn train_typed<T: Real>(cfg: &RunConfig, corpus: embtag::corpus::Corpus, out: &Path) -> CliResult<()> {
    let inputs = Inputs::<T>::load(
        cfg,
        corpus,
        cfg.model.needs_embeddings(),
        cfg.model == ModelKind::CrfAeMultinomial,
    )?;
    let fit = pipeline::fit(cfg, &inputs)?;
    write_outputs(cfg, &fit, out)?;
    info!(
        "{}: {} iterations, objective {}, converged {}",
        cfg.model.name(),
        fit.trace.len(),
        fit.final_objective,
        fit.converged
    );
    Ok(())
}

fn write_outputs<T: Real>(cfg: &RunConfig, fit: &Fit<T>, out: &Path) -> CliResult<()> {
    let model_path = cfg.model_file.clone().unwrap_or_else(|| out.join("model.json"));
    fit.model.save(&model_path)?;
    let mut trace = String::from("iteration\tobjective\n");
    let mut timing = String::from("iteration\tseconds\n");
    for p in &fit.trace {
        let _ = writeln!(trace, "{}\t{}", p.iteration, p.objective);
        let _ = writeln!(timing, "{}\t{:.6}", p.iteration, p.seconds);
    }
    write_file(&out.join("trace.tsv"), &trace)?;
    write_file(&out.join("timing.tsv"), &timing)?;
    write_file(&out.join("config.resolved"), &cfg.resolved())
}

pub fn tag(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let model_path = cfg
        .model_file
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.join("model.json")))
        .ok_or_else(|| CliError::config("tag needs model-file or output"))?;
    let text = std::fs::read_to_string(&model_path)
        .map_err(|e| CliError::config(format!("model-file {}: {e}", model_path.display())))?;
    let (format, scalar) = pipeline::model_header(&text)?;
    let corpus = pipeline::load_corpus(&cfg)?;
    let pred = match scalar.as_str() {
        "f64" => tag_typed::<f64>(&cfg, &text, &format, corpus)?,
        "f32" => tag_typed::<f32>(&cfg, &text, &format, corpus)?,
        other => {
            return Err(CliError::data(format!(
                "unsupported scalar type {other:?} in model file"
            )))
        }
    };
    emit(
        cfg.predictions.as_deref(),
        cfg.output.as_deref(),
        "predictions.txt",
        &pipeline::format_predictions(&pred),
    )
}

fn tag_typed<T: Real>(
    cfg: &RunConfig,
    text: &str,
    format: &str,
    corpus: embtag::corpus::Corpus,
) -> CliResult<Vec<Vec<usize>>> {
    let model = Trained::<T>::from_json(text, format)?;
    let inputs = Inputs::<T>::load(cfg, corpus, model.needs_embeddings(), model.needs_labels())?;
    model.predict(&inputs, cfg.decode)
}

pub fn eval(args: &RunArgs) -> CliResult<()> {
    let cfg = load_config(args)?;
    let pred_path = cfg
        .predictions
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.join("predictions.txt")))
        .ok_or_else(|| CliError::config("eval needs predictions or output"))?;
    let pred = pipeline::read_predictions(&pred_path)?;
    let corpus = pipeline::load_corpus(&cfg)?;
    let gold = corpus.gold().map_err(CliError::from)?;
    let oov = match &cfg.embeddings {
        Some(path) => {
            let table = pipeline::load_embeddings::<f64>(path, cfg.embeddings_format, cfg.lowercase)?;
            Some(
                embtag::embeddings::embed_corpus(&corpus, &table)?
                    .coverage
                    .token_oov_rate(),
            )
        }
        None => None,
    };
    let metrics = Metrics::compute(&gold, &pred, oov)?;
    emit(
        cfg.metrics.as_deref(),
        cfg.output.as_deref(),
        "metrics.tsv",
        &metrics.to_tsv(),
    )
}

/// One embedding configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub embedding_type: String,
    pub window: usize,
    pub dimension: usize,
    pub path: PathBuf,
}

impl std::str::FromStr for Cell {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let fields: Vec<&str> = s.splitn(4, char::is_whitespace).map(str::trim).collect();
        let bad = || CliError::config(format!("embedding: expected `type window dim path`, found {s:?}"));
        if fields.len() != 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(bad());
        }
        Ok(Cell {
            embedding_type: fields[0].to_owned(),
            window: fields[1].parse().map_err(|_| bad())?,
            dimension: fields[2].parse().map_err(|_| bad())?,
            path: PathBuf::from(fields[3]),
        })
    }
}

/// One line of the sweep results table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: Cell,
    pub seed: u64,
    pub metrics: Option<Metrics>,
    pub iterations: Option<usize>,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "embedding_type",
    "window",
    "dimension",
    "seed",
    "v_measure",
    "homogeneity",
    "completeness",
    "many_to_one",
    "iterations",
    "wall_seconds",
    "error",
];

impl SweepRow {
    fn record(&self) -> Vec<String> {
        let num = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        let m = self.metrics.as_ref();
        vec![
            self.cell.embedding_type.clone(),
            self.cell.window.to_string(),
            self.cell.dimension.to_string(),
            self.seed.to_string(),
            num(m.map(|m| m.v_measure)),
            num(m.map(|m| m.homogeneity)),
            num(m.map(|m| m.completeness)),
            num(m.map(|m| m.many_to_one)),
            self.iterations.map_or(String::new(), |i| i.to_string()),
            format!("{:.3}", self.wall_seconds),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

fn parse_seeds(s: &str) -> CliResult<Vec<u64>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::config(format!("seeds: bad seed {t:?}")))
        })
        .collect()
}

pub fn sweep(args: &RunArgs, seeds: Option<&str>) -> CliResult<()> {
    let (settings, extra) = Settings::load(args, &["embedding", "seeds"])?;
    let cfg = RunConfig::from_settings(&settings)?;
    if !cfg.model.needs_embeddings() {
        return Err(CliError::config(format!(
            "sweep needs an embedding model, not {}",
            cfg.model.name()
        )));
    }
    let cells = extra
        .iter()
        .filter(|e| e.key == "embedding")
        .map(|e| {
            e.value
                .parse::<Cell>()
                .map_err(|err| err.context(format!("config line {}", e.line)))
        })
        .collect::<CliResult<Vec<_>>>()?;
    if cells.is_empty() {
        return Err(CliError::config(
            "sweep needs at least one `embedding = type window dim path` line",
        ));
    }
    let seed_list = match seeds.or_else(|| extra.iter().rev().find(|e| e.key == "seeds").map(|e| e.value.as_str())) {
        Some(s) => parse_seeds(s)?,
        None => vec![cfg.seed],
    };
    if seed_list.is_empty() {
        return Err(CliError::config("seeds must not be empty"));
    }
    let corpus = pipeline::load_corpus(&cfg)?;
    let gold = corpus.gold().map_err(CliError::from)?;

    let jobs: Vec<(&Cell, u64)> = cells
        .iter()
        .flat_map(|c| seed_list.iter().map(move |&s| (c, s)))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(cell, seed)| run_cell(&cfg, &corpus, &gold, cell, seed))
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::data(format!("writing sweep results: {e}"));
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for row in &rows {
        w.write_record(row.record()).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(out) = &cfg.output {
        std::fs::create_dir_all(out).map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))?;
    }
    emit(cfg.results.as_deref(), cfg.output.as_deref(), "sweep.csv", &text)
}

fn run_cell(cfg: &RunConfig, corpus: &embtag::corpus::Corpus, gold: &[Vec<usize>], cell: &Cell, seed: u64) -> SweepRow {
    let start = Instant::now();
    let mut cell_cfg = cfg.clone();
    cell_cfg.embeddings = Some(cell.path.clone());
    cell_cfg.seed = seed;
    let result = match cfg.precision {
        Precision::F64 => fit_cell::<f64>(&cell_cfg, corpus, gold),
        Precision::F32 => fit_cell::<f32>(&cell_cfg, corpus, gold),
    };
    let (metrics, iterations, error) = match result {
        Ok((m, it)) => (Some(m), Some(it), None),
        Err(e) => {
            log::warn!("sweep cell {} seed {seed}: {e}", cell.path.display());
            (None, None, Some(e.to_string()))
        }
    };
    SweepRow {
        cell: cell.clone(),
        seed,
        metrics,
        iterations,
        wall_seconds: start.elapsed().as_secs_f64(),
        error,
    }
}

fn fit_cell<T: Real>(
    cfg: &RunConfig,
    corpus: &embtag::corpus::Corpus,
    gold: &[Vec<usize>],
) -> CliResult<(Metrics, usize)> {
    let path = cfg.embeddings.as_deref().expect("cell embeddings are set");
    if !path.exists() {
        return Err(CliError::data(format!("{} does not exist", path.display())));
    }
    let inputs = Inputs::<T>::load(cfg, corpus.clone(), true, false)?;
    let fit = pipeline::fit(cfg, &inputs)?;
    let pred = fit.model.predict(&inputs, cfg.decode)?;
    Ok((Metrics::compute(gold, &pred, inputs.oov_rate())?, fit.trace.len()))
}
