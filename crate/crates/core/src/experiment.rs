//! Experiment driver: cohort loading, dataset construction, the
//! signal-set × smoothing × reduction × model grid, and report export.
//!
//! A grid run writes one JSON report per cell to `<out>/cells/` and then
//! `summary.csv` (all cells ranked by accuracy) and `best_by_signal_set.csv`.
//! Cells whose report already exists are reloaded instead of recomputed
//! unless `force` is set.
//!
//! Configuration is TOML:
//!
//! ```toml
//! data_dir = "data"
//! out_dir = "results"
//! seed = 42
//! signal_sets = ["all", "head_pose", "eeg_hr"]
//! smoothing = [0, 10, 20]
//! reductions = ["none", "kbest:40", "pca"]
//! models = ["rf", "svm_linear", "svm_rbf"]
//!
//! # Extra cells outside the Cartesian product.
//! [[cells]]
//! signal_set = "attention"
//! smoothing = 20
//! reduction = "pca"
//! model = "svm_linear"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::classifiers::{ModelKind, ModelSpec};
use crate::dimreduce::ReductionSpec;
use crate::evaluation::{
    run_loo, write_densities_csv, write_predictions_csv, write_roc_csv, EvalError,
    EvaluationReport, FittedPipeline, FoldId, PipelineConfig,
};
use crate::features::{fuse, fused_dim, resolve_signal_set, FeatureError, FusedVector};
use crate::preprocess::{build_windows, PreprocessError, SmoothingSpec};
use crate::session::{load_session, Session, SessionError, WindowPolicy};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config{}: field `{field}`: {message}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },
    #[error("no usable sessions in {0}")]
    NoSessions(PathBuf),
    #[error("no cell reports found in {0}")]
    NoResults(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl ExperimentError {
    /// Errors caused by the input data rather than by usage or by a bug.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, ExperimentError::Config { .. })
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub const CELLS_DIR: &str = "cells";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BEST_FILE: &str = "best_by_signal_set.csv";

/// Loads every session directory (one containing `participant.json`) below
/// `data_dir`, in name order. Sessions that fail validation are returned
/// separately with the reason.
pub fn load_cohort(data_dir: &Path) -> Result<(Vec<Session>, Vec<(String, String)>), ExperimentError> {
    let entries = fs::read_dir(data_dir).map_err(ExperimentError::io(data_dir))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.join("participant.json").is_file())
        .collect();
    dirs.sort();
    let loaded: Vec<_> = dirs.par_iter().map(|d| (d, load_session(d))).collect();
    let mut sessions = Vec::new();
    let mut excluded = Vec::new();
    for (dir, r) in loaded {
        match r {
            Ok(s) => sessions.push(s),
            Err(e) => {
                let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                excluded.push((name, e.to_string()));
            }
        }
    }
    if sessions.is_empty() {
        return Err(ExperimentError::NoSessions(data_dir.to_path_buf()));
    }
    Ok((sessions, excluded))
}

/// Fused vectors of every retained participant for one signal set and
/// smoothing width, plus participants dropped during windowing.
pub fn build_dataset(
    sessions: &[Session],
    signal_set: &str,
    smoothing: SmoothingSpec,
    policy: &WindowPolicy,
) -> Result<(Vec<FusedVector>, Vec<(String, String)>), ExperimentError> {
    let channels = resolve_signal_set(signal_set)?;
    let windows = build_windows(sessions, policy, smoothing);
    let vectors = windows
        .samples
        .par_iter()
        .map(|w| fuse(w, &channels))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((vectors, windows.rejected))
}

/// One grid cell as written in the config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellEntry {
    signal_set: Spanned<String>,
    smoothing: Spanned<usize>,
    reduction: Spanned<String>,
    model: Spanned<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data_dir: PathBuf,
    out_dir: PathBuf,
    #[serde(default = "default_seed")]
    seed: u64,
    #[serde(default)]
    signal_sets: Vec<Spanned<String>>,
    #[serde(default)]
    smoothing: Vec<Spanned<usize>>,
    #[serde(default)]
    reductions: Vec<Spanned<String>>,
    #[serde(default)]
    models: Vec<Spanned<String>>,
    #[serde(default)]
    cells: Vec<CellEntry>,
    #[serde(default)]
    allow_custom_smoothing: bool,
    match_activities: Option<Vec<String>>,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Deduplicated cells in config order. Model seeds are left at 0 and
    /// filled from [`ExperimentConfig::seed`] when the grid runs.
    pub cells: Vec<PipelineConfig>,
    pub match_activities: Vec<String>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Validator<'a> {
    text: &'a str,
    allow_custom: bool,
}

impl Validator<'_> {
    fn err<T>(&self, field: &str, span: std::ops::Range<usize>, message: String) -> Result<T, ExperimentError> {
        Err(ExperimentError::Config {
            line: Some(line_of(self.text, span.start)),
            field: field.to_string(),
            message,
        })
    }

    fn signal_set(&self, field: &str, v: &Spanned<String>) -> Result<String, ExperimentError> {
        match resolve_signal_set(v.get_ref()) {
            Ok(_) => Ok(v.get_ref().clone()),
            Err(e) => self.err(field, v.span(), e.to_string()),
        }
    }

    fn smoothing(&self, field: &str, v: &Spanned<usize>) -> Result<SmoothingSpec, ExperimentError> {
        let w = *v.get_ref();
        if self.allow_custom {
            return Ok(SmoothingSpec::custom(w));
        }
        SmoothingSpec::new(w).or_else(|e| {
            self.err(
                field,
                v.span(),
                format!("{e} (set allow_custom_smoothing to permit it)"),
            )
        })
    }

    fn reduction(&self, field: &str, v: &Spanned<String>) -> Result<ReductionSpec, ExperimentError> {
        v.get_ref()
            .parse()
            .or_else(|e: crate::dimreduce::ReduceError| self.err(field, v.span(), e.to_string()))
    }

    fn model(&self, field: &str, v: &Spanned<String>) -> Result<ModelSpec, ExperimentError> {
        v.get_ref()
            .parse()
            .or_else(|e: crate::classifiers::ClassifierError| self.err(field, v.span(), e.to_string()))
    }
}

/// Clips `kbest:k` to the fused width of the signal set so that equivalent
/// cells share one name.
pub fn normalise_cell(mut cell: PipelineConfig) -> Result<PipelineConfig, FeatureError> {
    let d = fused_dim(resolve_signal_set(&cell.signal_set)?.len());
    cell.reduction = cell.reduction.clipped(d);
    Ok(cell)
}

impl ExperimentConfig {
    pub fn parse(text: &str, allow_custom_smoothing: bool) -> Result<Self, ExperimentError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ExperimentError::Config {
            line: e.span().map(|s| line_of(text, s.start)),
            field: e
                .message()
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string(),
            message: e.message().trim().to_string(),
        })?;
        let v = Validator {
            text,
            allow_custom: allow_custom_smoothing || raw.allow_custom_smoothing,
        };
        let signal_sets = raw
            .signal_sets
            .iter()
            .map(|s| v.signal_set("signal_sets", s))
            .collect::<Result<Vec<_>, _>>()?;
        let smoothing = raw
            .smoothing
            .iter()
            .map(|s| v.smoothing("smoothing", s))
            .collect::<Result<Vec<_>, _>>()?;
        let reductions = raw
            .reductions
            .iter()
            .map(|s| v.reduction("reductions", s))
            .collect::<Result<Vec<_>, _>>()?;
        let models = raw
            .models
            .iter()
            .map(|s| v.model("models", s))
            .collect::<Result<Vec<_>, _>>()?;

        let mut cells = Vec::new();
        for s in &signal_sets {
            for &sm in &smoothing {
                for &r in &reductions {
                    for &m in &models {
                        cells.push(PipelineConfig {
                            signal_set: s.clone(),
                            smoothing: sm,
                            reduction: r,
                            model: m,
                        });
                    }
                }
            }
        }
        for c in &raw.cells {
            cells.push(PipelineConfig {
                signal_set: v.signal_set("cells.signal_set", &c.signal_set)?,
                smoothing: v.smoothing("cells.smoothing", &c.smoothing)?,
                reduction: v.reduction("cells.reduction", &c.reduction)?,
                model: v.model("cells.model", &c.model)?,
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut unique = Vec::new();
        for c in cells {
            let c = normalise_cell(c)?;
            if seen.insert(c.fingerprint()) {
                unique.push(c);
            }
        }
        if unique.is_empty() {
            return Err(ExperimentError::Config {
                line: None,
                field: "cells".into(),
                message: "the grid is empty; give signal_sets, smoothing, reductions and models, or [[cells]]"
                    .into(),
            });
        }
        Ok(ExperimentConfig {
            data_dir: raw.data_dir,
            out_dir: raw.out_dir,
            seed: raw.seed,
            cells: unique,
            match_activities: raw
                .match_activities
                .unwrap_or_else(|| WindowPolicy::default().match_activities),
        })
    }

    pub fn load(path: &Path, allow_custom_smoothing: bool) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(ExperimentError::io(path))?;
        let mut cfg = Self::parse(&text, allow_custom_smoothing)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.data_dir, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn policy(&self) -> WindowPolicy {
        WindowPolicy {
            match_activities: self.match_activities.clone(),
            seed: self.seed,
        }
    }
}

/// Applies the experiment seed to seeded models.
pub fn seeded(mut cell: PipelineConfig, seed: u64) -> PipelineConfig {
    if let ModelKind::Rf { .. } = cell.model.kind {
        cell.model.seed = seed;
    }
    cell
}

fn json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(ExperimentError::io(parent))?;
    }
    fs::write(path, json_pretty(value)).map_err(ExperimentError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(ExperimentError::io(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Computed,
    Reused,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: PipelineConfig,
    pub status: CellStatus,
    pub report: Option<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    /// Ranked: by accuracy (descending), then by cell name; failures last.
    pub cells: Vec<CellOutcome>,
    /// Participants excluded at load or windowing time, with reasons.
    pub excluded: Vec<(String, String)>,
}

/// Evaluates every cell by participant-level LOO and persists the reports.
pub fn run_grid(config: &ExperimentConfig, force: bool) -> Result<GridOutcome, ExperimentError> {
    let cells_dir = config.out_dir.join(CELLS_DIR);
    fs::create_dir_all(&cells_dir).map_err(ExperimentError::io(&cells_dir))?;
    let cells: Vec<PipelineConfig> = config.cells.iter().map(|c| seeded(c.clone(), config.seed)).collect();
    let path_of = |c: &PipelineConfig| cells_dir.join(format!("{}.json", c.fingerprint()));

    let pending: Vec<&PipelineConfig> = cells.iter().filter(|c| force || !path_of(c).is_file()).collect();
    let mut excluded = Vec::new();
    let mut datasets: BTreeMap<(String, SmoothingSpec), Result<Vec<FusedVector>, String>> = BTreeMap::new();
    if !pending.is_empty() {
        let (sessions, load_excluded) = load_cohort(&config.data_dir)?;
        excluded.extend(load_excluded);
        let policy = config.policy();
        let keys: std::collections::BTreeSet<(String, SmoothingSpec)> =
            pending.iter().map(|c| (c.signal_set.clone(), c.smoothing)).collect();
        for (set, sm) in keys {
            let built = build_dataset(&sessions, &set, sm, &policy);
            let entry = match built {
                Ok((v, rejected)) => {
                    for (p, why) in rejected {
                        let reason = format!("smoothing {sm}: {why}");
                        if !excluded.iter().any(|(q, r)| *q == p && *r == reason) {
                            excluded.push((p, reason));
                        }
                    }
                    Ok(v)
                }
                Err(e) => Err(e.to_string()),
            };
            datasets.insert((set, sm), entry);
        }
    }

    let mut outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|cell| {
            let path = path_of(cell);
            if !force && path.is_file() {
                return match read_json::<EvaluationReport>(&path) {
                    Ok(r) => CellOutcome {
                        cell: cell.clone(),
                        status: CellStatus::Reused,
                        report: Some(r),
                    },
                    Err(e) => CellOutcome {
                        cell: cell.clone(),
                        status: CellStatus::Failed(e.to_string()),
                        report: None,
                    },
                };
            }
            let result = match &datasets[&(cell.signal_set.clone(), cell.smoothing)] {
                Ok(data) => run_loo(data, cell)
                    .map_err(|e| e.to_string())
                    .and_then(|r| write_json(&path, &r).map(|_| r).map_err(|e| e.to_string())),
                Err(e) => Err(e.clone()),
            };
            match result {
                Ok(r) => CellOutcome {
                    cell: cell.clone(),
                    status: CellStatus::Computed,
                    report: Some(r),
                },
                Err(e) => {
                    log::warn!("cell {} failed: {e}", cell.fingerprint());
                    CellOutcome {
                        cell: cell.clone(),
                        status: CellStatus::Failed(e),
                        report: None,
                    }
                }
            }
        })
        .collect();
    rank(&mut outcomes);
    excluded.sort();

    write_summary(&config.out_dir, &outcomes)?;
    if !excluded.is_empty() {
        let path = config.out_dir.join("excluded.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["participant_id", "reason"]).map_err(|e| csv_err(&path, e))?;
        for (p, r) in &excluded {
            w.write_record([p, r]).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(ExperimentError::io(&path))?;
    }
    Ok(GridOutcome {
        cells: outcomes,
        excluded,
    })
}

fn rank(outcomes: &mut [CellOutcome]) {
    outcomes.sort_by(|a, b| {
        let acc = |o: &CellOutcome| o.report.as_ref().map(|r| r.accuracy);
        match (acc(a), acc(b)) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        }
        .then_with(|| a.cell.fingerprint().cmp(&b.cell.fingerprint()))
    });
}

fn csv_err(path: &Path, e: csv::Error) -> ExperimentError {
    ExperimentError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// Writes `summary.csv` (every cell, ranked) and `best_by_signal_set.csv`
/// (the most accurate cell of each signal set) into `dir`.
pub fn write_summary(dir: &Path, ranked: &[CellOutcome]) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(ExperimentError::io(dir))?;
    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record([
        "rank",
        "cell",
        "signal_set",
        "smoothing",
        "reduction",
        "model",
        "accuracy",
        "auc",
        "kl_symmetric",
        "status",
    ])
    .map_err(|e| csv_err(&path, e))?;
    for (i, o) in ranked.iter().enumerate() {
        let (acc, auc, kl) = match &o.report {
            Some(r) => (r.accuracy.to_string(), r.auc.to_string(), r.kl.symmetric.to_string()),
            None => Default::default(),
        };
        let status = match &o.status {
            CellStatus::Computed => "computed".to_string(),
            CellStatus::Reused => "reused".to_string(),
            CellStatus::Failed(e) => format!("failed: {e}"),
        };
        w.write_record([
            (i + 1).to_string(),
            o.cell.fingerprint(),
            o.cell.signal_set.clone(),
            o.cell.smoothing.to_string(),
            o.cell.reduction.to_string(),
            o.cell.model.to_string(),
            acc,
            auc,
            kl,
            status,
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(ExperimentError::io(&path))?;

    let path = dir.join(BEST_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["signal_set", "cell", "accuracy", "auc"])
        .map_err(|e| csv_err(&path, e))?;
    let mut best: BTreeMap<&str, (&CellOutcome, &EvaluationReport)> = BTreeMap::new();
    for o in ranked {
        if let Some(r) = &o.report {
            best.entry(o.cell.signal_set.as_str()).or_insert((o, r));
        }
    }
    let mut rows: Vec<_> = best.into_values().collect();
    rows.sort_by(|a, b| b.1.accuracy.total_cmp(&a.1.accuracy).then(a.0.cell.signal_set.cmp(&b.0.cell.signal_set)));
    for (o, r) in rows {
        w.write_record([
            o.cell.signal_set.clone(),
            o.cell.fingerprint(),
            r.accuracy.to_string(),
            r.auc.to_string(),
        ])
        .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(ExperimentError::io(&path))
}

/// Reads every cell report in `<results_dir>/cells`, sorted by name.
pub fn load_reports(results_dir: &Path) -> Result<Vec<EvaluationReport>, ExperimentError> {
    let dir = results_dir.join(CELLS_DIR);
    let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if paths.is_empty() {
        return Err(ExperimentError::NoResults(results_dir.to_path_buf()));
    }
    paths.sort();
    paths.iter().map(|p| read_json(p)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Aggregate written by [`export_report`] in JSON form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub cells: Vec<EvaluationReport>,
}

/// CSV: `summary.csv`, `best_by_signal_set.csv` and per-cell `roc.csv`,
/// `densities.csv`, `predictions.csv` under `<out>/<cell>/`.
/// JSON: a single `report.json` with every cell report.
pub fn export_report(results_dir: &Path, out: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, ExperimentError> {
    let reports = load_reports(results_dir)?;
    fs::create_dir_all(out).map_err(ExperimentError::io(out))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = out.join("report.json");
            write_json(&path, &AggregateReport { cells: reports })?;
            written.push(path);
        }
        ReportFormat::Csv => {
            let mut outcomes: Vec<CellOutcome> = reports
                .iter()
                .map(|r| CellOutcome {
                    cell: r.config.clone(),
                    status: CellStatus::Reused,
                    report: Some(r.clone()),
                })
                .collect();
            rank(&mut outcomes);
            write_summary(out, &outcomes)?;
            written.push(out.join(SUMMARY_FILE));
            written.push(out.join(BEST_FILE));
            for r in &reports {
                let dir = out.join(&r.fingerprint);
                fs::create_dir_all(&dir).map_err(ExperimentError::io(&dir))?;
                let files: [(&str, Box<dyn Fn(&mut Vec<u8>) -> std::io::Result<()>>); 3] = [
                    ("roc.csv", Box::new(|b| write_roc_csv(&r.roc_points, b))),
                    ("densities.csv", Box::new(|b| write_densities_csv(&r.score_densities, b))),
                    ("predictions.csv", Box::new(|b| write_predictions_csv(&r.records, b))),
                ];
                for (name, write) in files {
                    let path = dir.join(name);
                    let mut buf = Vec::new();
                    write(&mut buf).map_err(ExperimentError::io(&path))?;
                    fs::write(&path, buf).map_err(ExperimentError::io(&path))?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Writes a single cell's report with its plot-ready CSVs into `out`.
pub fn write_cell_outputs(report: &EvaluationReport, out: &Path) -> Result<(), ExperimentError> {
    write_json(&out.join("report.json"), report)?;
    let mut buf = Vec::new();
    write_roc_csv(&report.roc_points, &mut buf).map_err(ExperimentError::io(out))?;
    fs::write(out.join("roc.csv"), &buf).map_err(ExperimentError::io(out))?;
    buf.clear();
    write_densities_csv(&report.score_densities, &mut buf).map_err(ExperimentError::io(out))?;
    fs::write(out.join("densities.csv"), &buf).map_err(ExperimentError::io(out))?;
    buf.clear();
    write_predictions_csv(&report.records, &mut buf).map_err(ExperimentError::io(out))?;
    fs::write(out.join("predictions.csv"), &buf).map_err(ExperimentError::io(out))
}

/// Fits the whole pipeline on every participant of `data`.
pub fn train_pipeline(data: &[FusedVector], cell: &PipelineConfig) -> Result<FittedPipeline, ExperimentError> {
    let x: Vec<Vec<f64>> = data.iter().map(|v| v.values.clone()).collect();
    let y: Vec<u8> = data.iter().map(|v| v.label).collect();
    Ok(FittedPipeline::fit(cell, &x, &y, FoldId::all())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "data_dir = \"d\"\nout_dir = \"o\"\n";

    #[test]
    fn grid_product_and_extra_cells() {
        let text = format!(
            "{BASE}seed = 7\nsignal_sets = [\"all\", \"pitch\"]\nsmoothing = [0, 20]\nreductions = [\"none\", \"kbest:250\"]\nmodels = [\"rf\"]\n\n[[cells]]\nsignal_set = \"attention\"\nsmoothing = 20\nreduction = \"pca\"\nmodel = \"svm_linear\"\n"
        );
        let cfg = ExperimentConfig::parse(&text, false).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.cells.len(), 9);
        let names: Vec<String> = cfg.cells.iter().map(|c| c.fingerprint()).collect();
        assert!(names.contains(&"pitch__s0__kbest65__rf250".to_string()));
        assert!(names.contains(&"all__s20__kbest250__rf250".to_string()));
        assert_eq!(names.last().unwrap(), "attention__s20__pca0.95__svm_linear");
    }

    #[test]
    fn off_grid_smoothing_needs_opt_in() {
        let text = format!("{BASE}signal_sets = [\"all\"]\nsmoothing = [0,\n  7]\nreductions = [\"none\"]\nmodels = [\"rf\"]\n");
        match ExperimentConfig::parse(&text, false) {
            Err(ExperimentError::Config { line, field, .. }) => {
                assert_eq!(line, Some(5));
                assert_eq!(field, "smoothing");
            }
            other => panic!("{other:?}"),
        }
        let cfg = ExperimentConfig::parse(&text, true).unwrap();
        assert_eq!(cfg.cells[1].smoothing.window_s(), 7);
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = format!("{BASE}seed = \"x\"\n");
        match ExperimentConfig::parse(&text, false) {
            Err(ExperimentError::Config { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
        let text = format!("{BASE}models = [\"tree\"]\nsignal_sets=[\"all\"]\n");
        assert!(matches!(
            ExperimentConfig::parse(&text, false),
            Err(ExperimentError::Config { line: Some(3), .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse(BASE, false),
            Err(ExperimentError::Config { line: None, .. })
        ));
        assert!(ExperimentConfig::parse("out_dir = \"o\"\n", false).is_err());
    }

    #[test]
    fn missing_results_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_reports(dir.path()), Err(ExperimentError::NoResults(_))));
    }
}
