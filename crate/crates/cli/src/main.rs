use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use phonesense::classifiers::{ClassifierError, ModelSpec};
use phonesense::dimreduce::{ReduceError, ReductionSpec};
use phonesense::evaluation::{compare_reports, run_loo, EvalError, EvaluationReport, FittedPipeline, PipelineConfig};
use phonesense::experiment::{
    build_dataset, export_report, load_cohort, normalise_cell, read_json, run_grid, seeded,
    train_pipeline, write_cell_outputs, write_json, CellStatus, ExperimentConfig, ExperimentError,
    ReportFormat,
};
use phonesense::features::{read_feature_csv, write_feature_csv};
use phonesense::preprocess::{write_windows_csv, SmoothingSpec};
use phonesense::session::WindowPolicy;
use phonesense::synthgen::{generate_dataset, GeneratorPreset, PresetName, MANIFEST_FILE};

const SEED_ENV: &str = "PHONESENSE_SEED";

#[derive(Parser)]
#[command(name = "phonesense", version, about = "Phone-usage detection from EEG, heart rate and head pose")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Window a cohort and write its fused feature table.
    Extract(ExtractArgs),
    /// Fit one pipeline on the whole cohort and save it.
    Train(CellArgs),
    /// Leave-one-participant-out evaluation of one pipeline.
    Evaluate(CellArgs),
    /// Evaluate every cell of an experiment config.
    Grid(GridArgs),
    /// Score a feature table with a saved pipeline.
    Predict(PredictArgs),
    /// Relative improvement and McNemar's test between two reports.
    Compare(CompareArgs),
    /// Export plot-ready tables from grid results.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "strong")]
    preset: String,
    #[arg(long, default_value_t = 33)]
    phone: usize,
    #[arg(long, default_value_t = 33)]
    nophone: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "all")]
    signal_set: String,
    #[arg(long, default_value_t = 0)]
    smoothing: usize,
    #[arg(long)]
    allow_custom_smoothing: bool,
    /// Seed for placing no-phone windows.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Also write the raw window segments.
    #[arg(long)]
    windows: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CellArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "all")]
    signal_set: String,
    #[arg(long, default_value_t = 0)]
    smoothing: usize,
    #[arg(long)]
    allow_custom_smoothing: bool,
    /// `none`, `kbest:<k>` or `pca[:<target>]`.
    #[arg(long, default_value = "none")]
    reduction: String,
    /// `rf[:<trees>]`, `svm_linear[:<C>]` or `svm_rbf[:<C>]`.
    #[arg(long, default_value = "rf")]
    model: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GridArgs {
    config: PathBuf,
    /// Overrides `out_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Recompute cells that already have a report.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    allow_custom_smoothing: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    report_a: PathBuf,
    report_b: PathBuf,
    /// Also write `comparison.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    results: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Defaults to `<results>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Exit codes: 1 usage, 2 data, 3 internal.
enum Failure {
    Usage(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_data_error() {
            Failure::Data(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn io_failure(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn env_seed(default: u64) -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(default),
    }
}

fn smoothing(window: usize, allow_custom: bool) -> Result<SmoothingSpec, Failure> {
    if allow_custom {
        Ok(SmoothingSpec::custom(window))
    } else {
        SmoothingSpec::new(window)
            .map_err(|e| Failure::Usage(format!("{e}; pass --allow-custom-smoothing to use it")))
    }
}

fn policy(seed: u64) -> WindowPolicy {
    WindowPolicy {
        seed,
        ..WindowPolicy::default()
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_failure(dir))
}

fn cmd_synth(a: SynthArgs) -> Result<(), Failure> {
    let preset: PresetName = a.preset.parse().map_err(|e: phonesense::synthgen::SynthError| Failure::Usage(e.to_string()))?;
    if a.phone == 0 || a.nophone == 0 {
        return Err(Failure::Usage("--phone and --nophone must be at least 1".into()));
    }
    let seed = env_seed(a.seed)?;
    let manifest = generate_dataset(&GeneratorPreset::new(preset, seed), a.phone, a.nophone, &a.out)
        .map_err(|e| Failure::Data(e.to_string()))?;
    println!("{}", a.out.join(MANIFEST_FILE).display());
    eprintln!(
        "{} sessions, {} expected window samples",
        manifest.sessions.len(),
        manifest.expected_window_samples
    );
    Ok(())
}

fn cmd_extract(a: ExtractArgs) -> Result<(), Failure> {
    let sm = smoothing(a.smoothing, a.allow_custom_smoothing)?;
    let seed = env_seed(a.seed)?;
    let (sessions, excluded) = load_cohort(&a.data)?;
    for (p, why) in &excluded {
        eprintln!("excluded {p}: {why}");
    }
    let policy = policy(seed);
    let (vectors, rejected) = build_dataset(&sessions, &a.signal_set, sm, &policy)?;
    for (p, why) in &rejected {
        eprintln!("dropped {p}: {why}");
    }
    create_dir(&a.out)?;
    let path = a.out.join("features.csv");
    let mut buf = Vec::new();
    write_feature_csv(&vectors, &mut buf).map_err(|e| Failure::Internal(e.to_string()))?;
    fs::write(&path, buf).map_err(io_failure(&path))?;
    println!("{}", path.display());
    if a.windows {
        let windows = phonesense::preprocess::build_windows(&sessions, &policy, sm);
        let path = a.out.join("windows.csv");
        let mut buf = Vec::new();
        write_windows_csv(&windows.samples, &mut buf).map_err(io_failure(&path))?;
        fs::write(&path, buf).map_err(io_failure(&path))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cell_of(a: &CellArgs, seed: u64) -> Result<PipelineConfig, Failure> {
    let reduction: ReductionSpec = a.reduction.parse().map_err(|e: ReduceError| Failure::Usage(e.to_string()))?;
    let model: ModelSpec = a.model.parse().map_err(|e: ClassifierError| Failure::Usage(e.to_string()))?;
    let cell = PipelineConfig {
        signal_set: a.signal_set.clone(),
        smoothing: smoothing(a.smoothing, a.allow_custom_smoothing)?,
        reduction,
        model,
    };
    let cell = normalise_cell(cell).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(seeded(cell, seed))
}

fn cell_dataset(a: &CellArgs) -> Result<(PipelineConfig, Vec<phonesense::features::FusedVector>), Failure> {
    let seed = env_seed(a.seed)?;
    let cell = cell_of(a, seed)?;
    let (sessions, excluded) = load_cohort(&a.data)?;
    for (p, why) in &excluded {
        eprintln!("excluded {p}: {why}");
    }
    let (data, rejected) = build_dataset(&sessions, &cell.signal_set, cell.smoothing, &policy(seed))?;
    for (p, why) in &rejected {
        eprintln!("dropped {p}: {why}");
    }
    Ok((cell, data))
}

fn cmd_train(a: CellArgs) -> Result<(), Failure> {
    let (cell, data) = cell_dataset(&a)?;
    let pipeline = train_pipeline(&data, &cell)?;
    if !pipeline.converged {
        eprintln!("warning: SVM solver stopped before reaching its tolerance");
    }
    let path = a.out.join("pipeline.json");
    write_json(&path, &pipeline)?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_evaluate(a: CellArgs) -> Result<(), Failure> {
    let (cell, data) = cell_dataset(&a)?;
    let report = run_loo(&data, &cell)?;
    create_dir(&a.out)?;
    write_cell_outputs(&report, &a.out)?;
    println!(
        "{}\taccuracy {}\tauc {}\tkl {}",
        report.fingerprint, report.accuracy, report.auc, report.kl.symmetric
    );
    Ok(())
}

fn cmd_grid(a: GridArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(&a.config, a.allow_custom_smoothing)?;
    config.seed = env_seed(config.seed)?;
    if let Some(out) = a.out {
        config.out_dir = out;
    }
    let outcome = run_grid(&config, a.force)?;
    let mut failed = 0;
    for c in &outcome.cells {
        match (&c.status, &c.report) {
            (CellStatus::Failed(e), _) => {
                failed += 1;
                eprintln!("{}\tfailed: {e}", c.cell.fingerprint());
            }
            (_, Some(r)) => println!("{}\t{}", r.fingerprint, r.accuracy),
            _ => {}
        }
    }
    println!("{}", config.out_dir.join(phonesense::experiment::SUMMARY_FILE).display());
    if failed == outcome.cells.len() {
        return Err(Failure::Data("every cell failed".into()));
    }
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<(), Failure> {
    let pipeline: FittedPipeline = read_json(&a.model)?;
    let file = fs::File::open(&a.features).map_err(io_failure(&a.features))?;
    let vectors = read_feature_csv(file).map_err(|e| Failure::Data(format!("{}: {e}", a.features.display())))?;
    create_dir(&a.out)?;
    let path = a.out.join("predictions.csv");
    let mut buf = Vec::new();
    writeln!(buf, "participant_id,label,score,predicted").map_err(io_failure(&path))?;
    for v in &vectors {
        let score = pipeline.score(&v.values)?;
        writeln!(buf, "{},{},{},{}", v.participant_id, v.label, score, (score >= 0.5) as u8)
            .map_err(io_failure(&path))?;
    }
    fs::write(&path, buf).map_err(io_failure(&path))?;
    println!("{}", path.display());
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), Failure> {
    let ra: EvaluationReport = read_json(&a.report_a)?;
    let rb: EvaluationReport = read_json(&a.report_b)?;
    let c = compare_reports(&ra, &rb)?;
    println!("accuracy_a\t{}", c.accuracy_a);
    println!("accuracy_b\t{}", c.accuracy_b);
    println!("improvement_pct\t{:.2}", c.improvement_pct);
    println!("mcnemar_b\t{}", c.mcnemar.b);
    println!("mcnemar_c\t{}", c.mcnemar.c);
    println!("chi2\t{:.4}", c.mcnemar.chi2);
    println!("p\t{:.4}", c.mcnemar.p);
    if let Some(out) = a.out {
        write_json(&out.join("comparison.json"), &c)?;
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let out = a.out.unwrap_or_else(|| a.results.join("report"));
    let format = match a.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Json => ReportFormat::Json,
    };
    for p in export_report(&a.results, &out, format)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
