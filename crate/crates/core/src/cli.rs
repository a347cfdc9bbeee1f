//! Command-line front end: `synth`, `preprocess`, `fit`, `train`, `predict`,
//! `eval` and `bench`. Exit codes: 0 success (failed fits are flagged per
//! row), 2 usage or configuration error, 1 internal error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CestError, Result};
use crate::eval::{
    extract_contrast, format_r2_table, format_runtime_table, runtime_bench, scatter_svg, solute_report,
    ContrastMode, EvalReport, StdKind, BENCH_REPEATS, BENCH_WARMUPS,
};
use crate::io::{self, Dataset, FitRow, FitTable};
use crate::models::{ModelConfig, ModelKind, ModelProblem};
use crate::neural::{self, NetworkConfig, NetworkData, NetworkState, Preset, TrainConfig};
use crate::presets;
use crate::solvers::{fit, InitMode, SolverConfig, SolverKind};
use crate::spectrum::{b0_correct, SpectrumSet, DEFAULT_B0_WINDOW_PPM};
use crate::synth::{generate, inject_b0_shift, PhantomSpec};

pub const DEFAULT_SEED: u64 = 0;
pub const FITS_FILE: &str = "fits.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const MODEL_FILE: &str = "model.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_FILE: &str = "report.json";
pub const BENCH_FILE: &str = "bench.json";

#[derive(Debug, Parser)]
#[command(name = "cestfit", version, about = "Quantify CEST Z-spectra with classical solvers or a self-supervised network")]
pub struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset and its manifest.
    Synth(SynthArgs),
    /// B0-correct every spectrum of a dataset.
    Preprocess(PreprocessArgs),
    /// Fit every spectrum set with a solver (or a trained network).
    Fit(FitArgs),
    /// Cross-validated self-supervised training.
    Train(TrainArgs),
    /// Predict parameters with a trained checkpoint.
    Predict(PredictArgs),
    /// Regress fitted contrast on manifest concentrations.
    Eval(EvalArgs),
    /// Per-datapoint runtime of solvers and network.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Lorentzian,
    Z,
    Mtrrex,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lorentzian => ModelKind::Lorentzian,
            ModelArg::Z => ModelKind::AnalyticalZ,
            ModelArg::Mtrrex => ModelKind::MtrRex,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverArg {
    NelderMead,
    Powell,
    Lbfgsb,
    Network,
}

impl SolverArg {
    fn classical(self) -> Option<SolverKind> {
        match self {
            SolverArg::NelderMead => Some(SolverKind::NelderMead),
            SolverArg::Powell => Some(SolverKind::Powell),
            SolverArg::Lbfgsb => Some(SolverKind::Lbfgsb),
            SolverArg::Network => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Paper,
    Desk,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Paper => Preset::Paper,
            PresetArg::Desk => Preset::Desk,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContrastArg {
    Amplitude,
    Area,
}

/// Model selection shared by the fitting commands.
#[derive(Debug, Clone, Args)]
pub struct ModelSelect {
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    /// Model/bounds JSON; overrides the built-in preset for the model.
    #[arg(long, value_name = "FILE")]
    pub bounds: Option<PathBuf>,
}

impl ModelSelect {
    fn config(&self, fallback: Option<&Path>) -> Result<ModelConfig> {
        let path = self
            .bounds
            .clone()
            .or_else(|| fallback.map(Path::to_path_buf).filter(|p| self.model.is_none() && p.is_file()));
        let cfg = match (path, self.model) {
            (Some(p), m) => {
                let cfg = ModelConfig::load(&p)?;
                if let Some(m) = m {
                    if ModelKind::from(m) != cfg.model {
                        return Err(CestError::InvalidConfig(format!(
                            "--model {} disagrees with {} in {}",
                            ModelKind::from(m),
                            cfg.model,
                            p.display()
                        )));
                    }
                }
                cfg
            }
            (None, Some(m)) => presets::model_config(m.into()),
            (None, None) => return Err(CestError::InvalidConfig("one of --model or --bounds is required".into())),
        };
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Phantom spec JSON; the built-in default when omitted.
    #[arg(long, value_name = "FILE")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Move the water resonance by this many ppm.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub b0_shift: f64,
    /// Uniform per-set jitter (ppm) around the B0 shift.
    #[arg(long, default_value_t = 0.0)]
    pub b0_jitter: f64,
    /// Write the default spec JSON here and exit.
    #[arg(long, value_name = "FILE")]
    pub dump_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Half-width (ppm) of the water-minimum search.
    #[arg(long, default_value_t = DEFAULT_B0_WINDOW_PPM)]
    pub window: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelSelect,
    #[arg(long, value_enum, default_value = "lbfgsb")]
    pub solver: SolverArg,
    /// Network checkpoint, for `--solver network`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Start from a seeded random point of the box instead of its centre.
    #[arg(long)]
    pub random_init: bool,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Only the first N spectrum sets.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub model: ModelSelect,
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    pub dataset: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub checkpoint: PathBuf,
    /// Defaults to the model.json saved next to the checkpoint.
    #[command(flatten)]
    pub model: ModelSelect,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    /// Fit or prediction table.
    #[arg(long, value_name = "FILE")]
    pub fits: PathBuf,
    /// Per-set fold assignment JSON; defaults to folds.json next to the fits,
    /// else a seeded split into `--folds` folds.
    #[arg(long, value_name = "FILE")]
    pub fold_file: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "amplitude")]
    pub contrast: ContrastArg,
    /// Average replicates of each phantom before regressing.
    #[arg(long)]
    pub per_phantom: bool,
    /// Population instead of sample standard deviation across folds.
    #[arg(long)]
    pub population_std: bool,
    /// Also write one SVG scatter plot per solute.
    #[arg(long)]
    pub svg: bool,
    /// Model/bounds JSON the fits were made with, if not a built-in preset.
    #[arg(long, value_name = "FILE")]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub dataset: PathBuf,
    /// Models to time; all three when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub model: Vec<ModelArg>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "nelder-mead,powell,lbfgsb,network")]
    pub solver: Vec<SolverArg>,
    /// Network architecture (weights are freshly initialized; runtime does
    /// not depend on their values).
    #[arg(long, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    #[arg(long, default_value_t = BENCH_REPEATS)]
    pub repeats: usize,
    #[arg(long, default_value_t = BENCH_WARMUPS)]
    pub warmups: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit code for an error: 2 for configuration and input problems, 1 otherwise.
pub fn exit_code(err: &CestError) -> i32 {
    match err {
        CestError::InvalidConfig(_)
        | CestError::InvalidBounds(_)
        | CestError::Io { .. }
        | CestError::Parse { .. }
        | CestError::Json(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the command; returns the exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let v = cli.verbose;
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Fit(a) => cmd_fit(a, v),
        Command::Train(a) => cmd_train(a, v),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a, v),
    }
}

fn load_dataset(dir: &Path, limit: Option<usize>) -> Result<Dataset> {
    let mut d = io::read_dataset(dir)?;
    if let Some(n) = limit {
        d.sets.truncate(n);
        d.names.truncate(n);
    }
    if d.is_empty() {
        return Err(CestError::InvalidConfig(format!("{} holds no spectrum sets", dir.display())));
    }
    Ok(d)
}

/// Compiles the model against the dataset's field strength.
fn compile(mut cfg: ModelConfig, data: &Dataset) -> Result<ModelProblem> {
    cfg.field = data.field;
    cfg.compile()
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if let Some(p) = &a.dump_spec {
        return io::write_json(p, &PhantomSpec::default());
    }
    let mut spec = match &a.spec {
        Some(p) => io::read_json::<PhantomSpec>(p)?,
        None => PhantomSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.replicates {
        spec.replicates = r;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    spec.validate().map_err(as_config)?;
    let data = if a.b0_shift != 0.0 || a.b0_jitter != 0.0 {
        inject_b0_shift(&spec, a.b0_shift, a.b0_jitter, spec.seed).map_err(as_config)?
    } else {
        generate(&spec)?
    };
    io::write_synth(&a.out, &spec, &data)?;
    let phantoms = spec.combinations().len();
    println!(
        "{} phantoms x {} replicates = {} spectrum sets, {} spectra ({} B1 curves each) -> {}",
        phantoms,
        spec.replicates,
        data.sets.len(),
        data.sets.len() * spec.b1.len(),
        spec.b1.len(),
        a.out.display()
    );
    Ok(())
}

/// Spec and precondition failures of user-supplied input are configuration errors.
fn as_config(e: CestError) -> CestError {
    match e {
        CestError::InvalidConfig(_) => e,
        other => CestError::InvalidConfig(other.to_string()),
    }
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<()> {
    if a.out == a.dataset {
        return Err(CestError::InvalidConfig("--out must differ from the input dataset".into()));
    }
    let mut data = load_dataset(&a.dataset, None)?;
    let mut shifts = Vec::with_capacity(data.len());
    for set in data.sets.iter_mut() {
        let mut spectra = Vec::with_capacity(set.spectra().len());
        for s in set.spectra() {
            let c = b0_correct(s, a.window)?;
            shifts.push(c.shift_ppm);
            spectra.push(c.spectrum);
        }
        *set = SpectrumSet::new(spectra, set.label.clone())?;
    }
    io::write_dataset(&a.out, &data)?;
    let manifest = a.dataset.join(io::MANIFEST_FILE);
    if manifest.is_file() {
        let target = a.out.join(io::MANIFEST_FILE);
        std::fs::copy(&manifest, &target).map_err(|e| CestError::io(&target, e))?;
    }
    let mean = shifts.iter().sum::<f64>() / shifts.len() as f64;
    let max = shifts.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    println!(
        "corrected {} spectra: mean shift {mean:+.4} ppm, max |shift| {max:.4} ppm -> {}",
        shifts.len(),
        a.out.display()
    );
    Ok(())
}

/// Fits every set in input order, fanning out over `jobs` threads.
pub fn fit_dataset(
    problem: &ModelProblem,
    data: &Dataset,
    solver: SolverKind,
    cfg: &SolverConfig,
    init: InitMode,
    jobs: usize,
) -> Vec<FitRow> {
    let fit_one = |i: usize| {
        let init = match init {
            InitMode::Random { seed } => InitMode::Random {
                seed: seed.wrapping_add(i as u64),
            },
            c => c,
        };
        match fit(problem, &data.sets[i], solver, cfg, init) {
            Ok(r) => FitRow::from_result(&data.names[i], r),
            Err(e) => FitRow::failed(&data.names[i], &e),
        }
    };
    let n = data.len();
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(fit_one).collect();
    }
    let mut rows: Vec<Option<FitRow>> = vec![None; n];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let fit_one = &fit_one;
                s.spawn(move || (j..n).step_by(jobs).map(|i| (i, fit_one(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("fit worker panicked") {
                rows[i] = Some(r);
            }
        }
    });
    rows.into_iter().map(|r| r.expect("every index fitted")).collect()
}

fn param_names(problem: &ModelProblem) -> Vec<String> {
    problem.bounds().names.clone()
}

fn print_fit_summary(table: &FitTable) {
    let ok: Vec<&FitRow> = table.rows.iter().filter(|r| r.error.is_none()).collect();
    let converged = ok.iter().filter(|r| r.converged).count();
    println!(
        "{} / {}: {} sets, {} converged, {} not converged, {} failed",
        table.model,
        table.method,
        table.rows.len(),
        converged,
        ok.len() - converged,
        table.rows.len() - ok.len()
    );
    if ok.is_empty() {
        return;
    }
    println!("{:<22}{:>14}{:>14}{:>14}", "parameter", "min", "median", "max");
    for (j, name) in table.param_names.iter().enumerate() {
        let mut v: Vec<f64> = ok.iter().map(|r| r.params[j]).collect();
        v.sort_by(f64::total_cmp);
        println!(
            "{name:<22}{:>14.6e}{:>14.6e}{:>14.6e}",
            v[0],
            v[v.len() / 2],
            v[v.len() - 1]
        );
    }
    for r in table.rows.iter().filter(|r| r.error.is_some() || !r.converged) {
        match &r.error {
            Some(e) => println!("  {}: failed: {e}", r.id),
            None => println!("  {}: not converged ({:?})", r.id, r.termination),
        }
    }
}

fn cmd_fit(a: &FitArgs, verbose: u8) -> Result<()> {
    if a.jobs == 0 {
        return Err(CestError::InvalidConfig("--jobs must be at least 1".into()));
    }
    let Some(solver) = a.solver.classical() else {
        let checkpoint = a
            .checkpoint
            .clone()
            .ok_or_else(|| CestError::InvalidConfig("--solver network needs --checkpoint".into()))?;
        return cmd_predict(&PredictArgs {
            dataset: a.dataset.clone(),
            checkpoint,
            model: a.model.clone(),
            limit: a.limit,
            out: a.out.clone(),
        });
    };
    let data = load_dataset(&a.dataset, a.limit)?;
    let problem = compile(a.model.config(None)?, &data)?;
    let init = if a.random_init {
        InitMode::Random { seed: a.seed }
    } else {
        InitMode::Center
    };
    if verbose > 0 {
        eprintln!("fitting {} sets with {} on {} thread(s)", data.len(), solver, a.jobs);
    }
    let rows = fit_dataset(&problem, &data, solver, &SolverConfig::default(), init, a.jobs);
    let table = FitTable {
        model: problem.kind(),
        method: solver.name().to_string(),
        param_names: param_names(&problem),
        rows,
    };
    if let Some(out) = &a.out {
        table.save(&out.join(FITS_FILE))?;
        io::write_json(&out.join(MODEL_FILE), problem.config())?;
    }
    print_fit_summary(&table);
    Ok(())
}

fn prediction_rows(problem: &ModelProblem, names: &[String], data: &NetworkData, p: &neural::Prediction) -> Vec<FitRow> {
    (0..data.len())
        .map(|i| {
            let sse: f64 = p.reconstructed[i]
                .iter()
                .zip(&data.x[i])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            FitRow {
                id: names[i].clone(),
                params: p.params[i].clone(),
                objective_value: sse,
                iterations: 0,
                function_evals: 1,
                converged: problem.bounds().contains(&p.params[i], 0.0),
                termination: None,
                gradient: None,
                error: None,
            }
        })
        .collect()
}

fn cmd_train(a: &TrainArgs, verbose: u8) -> Result<()> {
    let data = load_dataset(&a.dataset, a.limit)?;
    let problem = compile(a.model.config(None)?, &data)?;
    let net_data = NetworkData::from_sets(&problem, &data.sets)?;
    let net = NetworkConfig::preset(a.preset.into(), net_data.tokens(), net_data.channels(), problem.bounds().len());
    let mut cfg = TrainConfig::for_preset(a.preset.into(), problem.kind());
    cfg.seed = a.seed;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(f) = a.folds {
        cfg.folds = f;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    cfg.validate().map_err(as_config)?;
    if verbose > 0 {
        eprintln!(
            "training {} folds x {} epochs on {} sets ({} weights)",
            cfg.folds,
            cfg.epochs,
            net_data.len(),
            NetworkState::init(net.clone(), 0)?.parameter_count()
        );
    }
    let results = neural::train(&net_data, &problem, &net, &cfg)?;

    let mut fold_of = vec![0usize; net_data.len()];
    let mut rows: Vec<Option<FitRow>> = vec![None; net_data.len()];
    for r in &results {
        r.state.save(&a.out.join(format!("checkpoint_fold{}.json", r.fold)))?;
        let p = neural::predict(&r.state, &problem, &net_data)?;
        let all = prediction_rows(&problem, &data.names, &net_data, &p);
        for &i in &r.held_out {
            fold_of[i] = r.fold;
            rows[i] = Some(all[i].clone());
        }
    }
    io::write_loss_csv(&a.out.join(LOSS_FILE), &results)?;
    io::write_json(&a.out.join(FOLDS_FILE), &fold_of)?;
    io::write_json(&a.out.join(MODEL_FILE), problem.config())?;
    FitTable {
        model: problem.kind(),
        method: "network".into(),
        param_names: param_names(&problem),
        rows: rows.into_iter().map(|r| r.expect("every set held out once")).collect(),
    }
    .save(&a.out.join(PREDICTIONS_FILE))?;

    println!("{:<6}{:>16}{:>16}{:>16}{:>12}", "fold", "first loss", "final train", "final val", "violations");
    for r in &results {
        let first = r.history.first().map_or(f64::NAN, |h| h.train_loss);
        let last = r.history.last().expect("at least one epoch");
        println!(
            "{:<6}{:>16.6e}{:>16.6e}{:>16.6e}{:>12}",
            r.fold, first, last.train_loss, last.val_loss, r.bound_violations
        );
    }
    println!("-> {}", a.out.display());
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let data = load_dataset(&a.dataset, a.limit)?;
    let sibling = a.checkpoint.parent().map(|d| d.join(MODEL_FILE));
    let problem = compile(a.model.config(sibling.as_deref())?, &data)?;
    let state = NetworkState::load(&a.checkpoint)?;
    let net_data = NetworkData::from_sets(&problem, &data.sets)?;
    let p = neural::predict(&state, &problem, &net_data)?;
    let table = FitTable {
        model: problem.kind(),
        method: "network".into(),
        param_names: param_names(&problem),
        rows: prediction_rows(&problem, &data.names, &net_data, &p),
    };
    if let Some(out) = &a.out {
        table.save(&out.join(PREDICTIONS_FILE))?;
    }
    println!("reconstruction loss {:.6e}", p.loss);
    print_fit_summary(&table);
    Ok(())
}

/// Labels and phantom index per set, from the manifest or else set metadata.
fn labels_for(dir: &Path, data: &Dataset) -> Result<(Vec<BTreeMap<String, f64>>, Vec<usize>)> {
    let manifest = io::read_manifest(dir).ok();
    let mut labels = Vec::with_capacity(data.len());
    let mut groups = Vec::with_capacity(data.len());
    for (i, (name, set)) in data.names.iter().zip(&data.sets).enumerate() {
        let rec = manifest.as_ref().and_then(|m| m.phantoms.iter().find(|r| &r.id == name));
        let l = rec
            .map(|r| r.labels.clone())
            .or_else(|| set.label.clone())
            .ok_or_else(|| CestError::InvalidConfig(format!("no concentration labels for set '{name}'")))?;
        labels.push(l);
        groups.push(rec.map_or(i, |r| r.phantom));
    }
    Ok((labels, groups))
}

pub fn evaluate_table(
    problem: &ModelProblem,
    table: &FitTable,
    labels: &[BTreeMap<String, f64>],
    fold_of: &[usize],
    groups: Option<&[usize]>,
    contrast: ContrastMode,
    std_kind: StdKind,
) -> Result<(EvalReport, Vec<(String, Vec<f64>, Vec<f64>)>)> {
    let keep: Vec<usize> = (0..table.rows.len())
        .filter(|&i| table.rows[i].error.is_none() && table.rows[i].params.iter().all(|v| v.is_finite()))
        .collect();
    let params: Vec<Vec<f64>> = keep.iter().map(|&i| table.rows[i].params.clone()).collect();
    let folds: Vec<usize> = keep.iter().map(|&i| fold_of[i]).collect();
    let grouped: Option<Vec<usize>> = groups.map(|g| keep.iter().map(|&i| g[i]).collect());
    let mut solutes = Vec::new();
    let mut scatter = Vec::new();
    for (pool, name) in problem.config().pool_names().iter().enumerate() {
        let values = extract_contrast(problem, &params, pool, contrast)?;
        let x: Vec<f64> = keep
            .iter()
            .map(|&i| {
                labels[i]
                    .get(name)
                    .copied()
                    .ok_or_else(|| CestError::InvalidConfig(format!("no label for pool '{name}'")))
            })
            .collect::<Result<_>>()?;
        solutes.push(solute_report(name, contrast, &x, &values, &folds, grouped.as_deref(), std_kind)?);
        scatter.push((name.clone(), x, values));
    }
    Ok((
        EvalReport {
            method: table.method.clone(),
            model: table.model,
            solutes,
            runtime: None,
            excluded: table
                .rows
                .iter()
                .enumerate()
                .filter(|(i, _)| !keep.contains(i))
                .map(|(_, r)| r.id.clone())
                .collect(),
        },
        scatter,
    ))
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let data = load_dataset(&a.dataset, None)?;
    let table = FitTable::load(&a.fits)?;
    if table.rows.len() > data.len() || table.rows.iter().zip(&data.names).any(|(r, n)| &r.id != n) {
        return Err(CestError::InvalidConfig(format!(
            "{} does not match the sets of {}",
            a.fits.display(),
            a.dataset.display()
        )));
    }
    let n = table.rows.len();
    let sibling = a.fits.parent().map(|d| d.join(MODEL_FILE));
    let cfg = match (a.bounds.clone(), sibling.filter(|p| p.is_file())) {
        (Some(p), _) | (None, Some(p)) => ModelConfig::load(&p)?,
        (None, None) => presets::model_config(table.model),
    };
    let problem = compile(cfg, &data)?;
    let fold_path = a
        .fold_file
        .clone()
        .or_else(|| a.fits.parent().map(|d| d.join(FOLDS_FILE)).filter(|p| p.is_file()));
    let fold_of: Vec<usize> = match fold_path {
        Some(p) => io::read_json(&p)?,
        None => neural::fold_assignment(n, a.folds, a.seed).map_err(as_config)?,
    };
    if fold_of.len() < n {
        return Err(CestError::InvalidConfig("fold assignment shorter than the fit table".into()));
    }
    let (labels, groups) = labels_for(&a.dataset, &data)?;
    let contrast = match a.contrast {
        ContrastArg::Amplitude => ContrastMode::Amplitude,
        ContrastArg::Area => ContrastMode::Area,
    };
    let std_kind = if a.population_std { StdKind::Population } else { StdKind::Sample };
    let (report, scatter) = evaluate_table(
        &problem,
        &table,
        &labels[..n],
        &fold_of[..n],
        a.per_phantom.then_some(&groups[..n]),
        contrast,
        std_kind,
    )?;
    println!("{}", format_r2_table(std::slice::from_ref(&report)));
    for s in &report.solutes {
        println!(
            "{}: slope {:.6e}, folds [{}]",
            s.solute,
            s.slope,
            s.r2_folds.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(", ")
        );
    }
    if !report.excluded.is_empty() {
        println!("excluded {} failed rows: {}", report.excluded.len(), report.excluded.join(", "));
    }
    if let Some(out) = &a.out {
        io::write_json(&out.join(REPORT_FILE), &report)?;
        if a.svg {
            for (name, x, y) in &scatter {
                let title = format!("{} {} {}", report.method, report.model, name);
                io::write_file(&out.join(format!("scatter_{name}.svg")), &scatter_svg(&title, x, y)?)?;
            }
        }
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs, verbose: u8) -> Result<()> {
    let data = load_dataset(&a.dataset, Some(a.limit))?;
    let models: Vec<ModelKind> = if a.model.is_empty() {
        vec![ModelKind::Lorentzian, ModelKind::AnalyticalZ, ModelKind::MtrRex]
    } else {
        a.model.iter().map(|&m| m.into()).collect()
    };
    let mut reports = Vec::new();
    for kind in models {
        let problem = compile(presets::model_config(kind), &data)?;
        for &solver in &a.solver {
            if verbose > 0 {
                eprintln!("timing {kind} / {solver:?} on {} sets", data.len());
            }
            let (method, stats) = match solver.classical() {
                Some(s) => {
                    let cfg = SolverConfig::default();
                    let stats = runtime_bench(
                        || {
                            std::hint::black_box(fit_dataset(&problem, &data, s, &cfg, InitMode::Center, 1));
                        },
                        data.len(),
                        a.repeats,
                        a.warmups,
                    )?;
                    (s.name().to_string(), stats)
                }
                None => {
                    let net_data = NetworkData::from_sets(&problem, &data.sets)?;
                    let net = NetworkConfig::preset(
                        a.preset.into(),
                        net_data.tokens(),
                        net_data.channels(),
                        problem.bounds().len(),
                    );
                    let state = NetworkState::init(net, a.seed)?;
                    let mut err = None;
                    let stats = runtime_bench(
                        || {
                            if let Err(e) = neural::infer(&state, &problem, &net_data) {
                                err = Some(e);
                            }
                        },
                        data.len(),
                        a.repeats,
                        a.warmups,
                    )?;
                    if let Some(e) = err {
                        return Err(e);
                    }
                    ("network".to_string(), stats)
                }
            };
            reports.push(EvalReport {
                method,
                model: kind,
                solutes: Vec::new(),
                runtime: Some(stats),
                excluded: Vec::new(),
            });
        }
    }
    println!("runtime per datapoint ({} sets, {} timed repeats)", data.len(), a.repeats);
    print!("{}", format_runtime_table(&reports));
    if let Some(out) = &a.out {
        io::write_json(&out.join(BENCH_FILE), &reports)?;
    }
    Ok(())
}
