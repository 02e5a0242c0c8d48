//! Command-line front end: knowledgebase checks, training runs, analysis
//! tables and gradient checks.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use logltn::analysis::{
    demorgan_grid_csv, demorgan_summary, existential_gradient_support, stability_csv, stability_table,
    verify_lme_bounds, GapKind, GradientSupport, STABILITY_INPUTS,
};
use logltn::experiments::{
    build_cluster_kb, build_digitadd_kb, initial_digitadd_env, run_cluster_with, run_digitadd_with, ClusterOptions,
    ClusterTask, DigitAddOptions, DigitAddTask, ExperimentError, CLUSTER_KB, DIGITADD_KB,
};
use logltn::formula::{parse_kb, pretty_print, Knowledgebase};
use logltn::nnf::to_nnf;
use logltn::predicates::GroundingEnv;
use logltn::semantics::{infer_space, SemanticsConfig, SemanticsError, SemanticsKind};
use logltn::training::{loss_gradcheck, RunRecord, TrainError};

use config::{parse_precision, Dataset, Effective, FileConfig, Overrides};

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Output root when neither `--out` nor the environment names one.
const OUT_ENV: &str = "LOGLTN_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Train(t) => t.into(),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            e => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<SemanticsError> for CliError {
    fn from(e: SemanticsError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "logltn", version, about = "Log-space fuzzy logic: check, train, analyze")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a knowledgebase and list each formula's normal form and symbols.
    Check {
        file: PathBuf,
        /// Also check that every formula grounds under this configuration.
        #[arg(long)]
        semantics: Option<String>,
    },
    /// Train on a built-in task or on a knowledgebase file over a built-in dataset.
    Train(TrainArgs),
    /// Numerical analyses of the semantics.
    Analyze {
        #[command(subcommand)]
        which: Analysis,
    },
    /// Compare the loss gradient against finite differences.
    Gradcheck {
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "logltn")]
        semantics: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        /// Training step whose schedules are used.
        #[arg(long, default_value_t = 3)]
        step: usize,
    },
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// `clustering`, `digitadd`, or a knowledgebase file.
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    semantics: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// `f64` or `f32`.
    #[arg(long)]
    precision: Option<String>,
    /// Output directory; defaults to a run-named folder under $LOGLTN_OUT or `runs`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeded repetitions `seed, seed + 1, ...`, run on separate threads.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum GapArg {
    And,
    Or,
}

#[derive(Subcommand)]
enum Analysis {
    /// Naive versus fused `log(1 - sigmoid(x))` and their derivatives.
    Stability {
        #[arg(long, default_value = "f32")]
        precision: String,
        #[arg(long, value_delimiter = ',')]
        inputs: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// De Morgan inequality gaps: peak and averages.
    Demorgan {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, value_enum, default_value = "and")]
        kind: GapArg,
        /// Grid points per axis; 4000 for n = 2, 10 otherwise.
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the two-variable gap grid with this many points per axis.
        #[arg(long)]
        heatmap: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the LogMeanExp bounds.
    LmeBounds {
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha_min: f64,
        #[arg(long, default_value_t = 10.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { file, semantics } => check(&file, semantics.as_deref()),
        Command::Train(args) => train(&args),
        Command::Analyze { which } => analyze(which),
        Command::Gradcheck {
            task,
            semantics,
            seed,
            eps,
            step,
        } => gradcheck(&task, &semantics, seed, eps, step),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_kb(path: &Path) -> Result<Knowledgebase, CliError> {
    let src =
        std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_kb(&src).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn join<I: IntoIterator<Item = String>>(items: I) -> String {
    let v: Vec<String> = items.into_iter().collect();
    if v.is_empty() {
        "none".into()
    } else {
        v.join(", ")
    }
}

fn check(path: &Path, semantics: Option<&str>) -> Result<(), CliError> {
    let kb = read_kb(path)?;
    let kind: Option<SemanticsKind> = semantics
        .map(|s| s.parse().map_err(|e: SemanticsError| CliError::Invalid(e.to_string())))
        .transpose()?;
    let mut warnings = 0;
    for (i, nf) in kb.formulas().iter().enumerate() {
        let f = &nf.formula;
        let nnf = to_nnf(f);
        println!("{}: {}", kb.label(i), pretty_print(f));
        println!("  nnf: {}", pretty_print(&nnf));
        println!("  free variables: {}", join(f.free_variables()));
        println!("  predicates: {}", join(f.predicates()));
        println!(
            "  constants: {}",
            join(f.constants().into_iter().map(|c| format!("@{c}")))
        );
        println!("  guards: {}", join(f.guards()));
        if let Some(kind) = kind {
            let target = if kind.is_log() { &nnf } else { f };
            match infer_space(target, kind) {
                Ok(space) => println!("  {kind}: grounds to {space:?} space"),
                Err(e) => {
                    warnings += 1;
                    let why = if kind == SemanticsKind::ProdRl {
                        "; the product configuration's universal quantifier yields log-truths, which its linear \
                         connectives and existential cannot take"
                    } else {
                        ""
                    };
                    eprintln!("warning: {} cannot be grounded under {kind}: {e}{why}", kb.label(i));
                }
            }
        }
    }
    println!("{} formula(s), {warnings} warning(s)", kb.len());
    Ok(())
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn manifest(command: &str, body: &str) -> String {
    format!("# {command}\nversion = \"{VERSION}\"\n\n{body}")
}

fn support_text(s: &[(String, GradientSupport)]) -> String {
    let mut out = String::from("formula,existential,groups,min_nonzero,mean_nonzero,max_nonzero\n");
    for (label, g) in s {
        out.push_str(&format!(
            "{label},\"{}\",{},{},{},{}\n",
            g.formula, g.groups, g.min_nonzero, g.mean_nonzero, g.max_nonzero
        ));
    }
    out
}

/// Gradient support of every existential at step 0.
fn diagnose(kb: &Knowledgebase, env: &GroundingEnv, sem: &SemanticsConfig) -> Result<String, CliError> {
    let mut rows = Vec::new();
    for (i, nf) in kb.formulas().iter().enumerate() {
        let f = if sem.kind.is_log() {
            to_nnf(&nf.formula)
        } else {
            nf.formula.clone()
        };
        for s in existential_gradient_support(&f, env, sem, 0)? {
            if s.is_one_hot() {
                eprintln!(
                    "note: {}: `{}` passes gradient to exactly one entry in each of its {} groups",
                    kb.label(i),
                    s.formula,
                    s.groups
                );
            }
            rows.push((kb.label(i), s));
        }
    }
    Ok(support_text(&rows))
}

/// One seeded run, writing its artifacts to `dir`.
fn train_one(eff: &Effective, dir: &Path) -> Result<RunRecord, CliError> {
    let sem = eff.semantics_config()?;
    let tc = eff.train_config()?;
    let kb = match &eff.task.kb_file {
        Some(path) => read_kb(Path::new(path))?,
        None => parse_kb(match eff.dataset() {
            Dataset::Clustering => CLUSTER_KB,
            Dataset::DigitAdd => DIGITADD_KB,
        })
        .map_err(|e| CliError::Invalid(e.to_string()))?,
    };
    let (record, data, diagnostics) = match eff.dataset() {
        Dataset::Clustering => {
            let task = ClusterTask::generate(&eff.cluster_options(), tc.seed)?;
            let (_, env) = build_cluster_kb(&task, tc.seed)?;
            let diagnostics = diagnose(&kb, &env, &sem)?;
            (run_cluster_with(&task, &kb, &sem, &tc)?, task.to_csv(), diagnostics)
        }
        Dataset::DigitAdd => {
            let task = DigitAddTask::generate(&eff.digitadd_options(), tc.seed)?;
            let env = initial_digitadd_env(&task, &tc)?;
            let diagnostics = diagnose(&kb, &env, &sem)?;
            (run_digitadd_with(&task, &kb, &sem, &tc)?, task.to_csv(), diagnostics)
        }
    };
    write(dir, "run.csv", &record.to_csv())?;
    write(dir, "metrics.txt", &record.metrics_text())?;
    write(dir, "data.csv", &data)?;
    write(dir, "gradient_support.csv", &diagnostics)?;
    write(dir, "manifest.toml", &manifest("train", &eff.to_toml()))?;
    Ok(record)
}

fn train(args: &TrainArgs) -> Result<(), CliError> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        task: args.task.clone(),
        semantics: args.semantics.clone(),
        seed: args.seed,
        steps: args.steps,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        precision: args.precision.clone(),
    };
    let eff = Effective::resolve(&file, &overrides)?;
    if args.repeats == 0 {
        return Err(CliError::Invalid("--repeats must be at least 1".into()));
    }
    let task_tag = match &eff.task.kb_file {
        Some(p) => Path::new(p)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "kb".into()),
        None => eff.task.data.clone(),
    };
    let base = args.out.clone();
    let runs: Vec<(Effective, PathBuf)> = (0..args.repeats)
        .map(|k| {
            let e = eff.with_seed(eff.train.seed + k);
            let name = format!("{task_tag}-{}-seed{}", e.semantics.kind, e.train.seed);
            let dir = match (&base, args.repeats) {
                (Some(b), 1) => b.clone(),
                (Some(b), _) => b.join(name),
                (None, _) => out_root().join(name),
            };
            (e, dir)
        })
        .collect();
    let results: Vec<Result<RunRecord, CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = runs.iter().map(|(e, d)| s.spawn(move || train_one(e, d))).collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Numerical("training thread panicked".into())))
            })
            .collect()
    });
    let mut first_err = None;
    for ((e, dir), r) in runs.iter().zip(results) {
        match r {
            Ok(rec) => {
                let last = rec.final_row().map(|r| (r.loss, r.sat)).unwrap_or((f64::NAN, f64::NAN));
                println!(
                    "seed {}: loss {:.6} sat {:.6} -> {}",
                    e.train.seed,
                    last.0,
                    last.1,
                    dir.display()
                );
                for (k, v) in &rec.metrics {
                    println!("  {k} = {v}");
                }
            }
            Err(err) => {
                eprintln!("seed {}: {err}", e.train.seed);
                first_err.get_or_insert(err);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn emit(out: &Option<PathBuf>, name: &str, text: &str, command: &str, settings: &str) -> Result<(), CliError> {
    print!("{text}");
    if let Some(dir) = out {
        write(dir, name, text)?;
        write(dir, "manifest.toml", &manifest(command, settings))?;
    }
    Ok(())
}

fn analyze(which: Analysis) -> Result<(), CliError> {
    match which {
        Analysis::Stability { precision, inputs, out } => {
            let p = parse_precision(&precision)?;
            let inputs = inputs.unwrap_or_else(|| STABILITY_INPUTS.to_vec());
            let csv = stability_csv(&stability_table(&inputs, p));
            let settings = format!("precision = \"{precision}\"\ninputs = {inputs:?}\n");
            emit(&out, "stability.csv", &csv, "analyze stability", &settings)
        }
        Analysis::Demorgan {
            n,
            kind,
            grid_points,
            samples,
            seed,
            heatmap,
            out,
        } => {
            let kind = match kind {
                GapArg::And => GapKind::And,
                GapArg::Or => GapKind::Or,
            };
            let points = grid_points.unwrap_or(if n == 2 { 4000 } else { 10 });
            let s = demorgan_summary(n, kind, points, samples, seed).map_err(|e| CliError::Invalid(e.to_string()))?;
            let settings = format!("n = {n}\ngrid_points = {points}\nsamples = {samples}\nseed = {seed}\n");
            emit(&out, "demorgan.txt", &s.to_text(), "analyze demorgan", &settings)?;
            if let (Some(h), Some(dir)) = (heatmap, &out) {
                let csv = demorgan_grid_csv(h, kind).map_err(|e| CliError::Invalid(e.to_string()))?;
                write(dir, "demorgan_grid.csv", &csv)?;
            }
            Ok(())
        }
        Analysis::LmeBounds {
            trials,
            n_max,
            alpha_min,
            alpha_max,
            seed,
            out,
        } => {
            let r = verify_lme_bounds(trials, n_max, (alpha_min, alpha_max), seed, 1e-9)
                .map_err(|e| CliError::Invalid(e.to_string()))?;
            let settings = format!(
                "trials = {trials}\nn_max = {n_max}\nalpha_min = {alpha_min}\nalpha_max = {alpha_max}\nseed = {seed}\n"
            );
            emit(&out, "lme_bounds.txt", &r.to_text(), "analyze lme-bounds", &settings)?;
            if r.violations > 0 || r.max_value > 0.0 {
                return Err(CliError::Numerical(format!("{} bound violation(s)", r.violations)));
            }
            Ok(())
        }
    }
}

/// Finite-difference check on a small instance of a built-in task.
fn gradcheck(task: &str, semantics: &str, seed: u64, eps: f64, step: usize) -> Result<(), CliError> {
    let kind: SemanticsKind = semantics.parse()?;
    let sem = SemanticsConfig::new(kind, 10);
    let (kb, env) = match task {
        "clustering" | "cluster" => {
            let opts = ClusterOptions {
                points: 16,
                hidden: vec![4],
                ..ClusterOptions::default()
            };
            build_cluster_kb(&ClusterTask::generate(&opts, seed)?, seed)?
        }
        "digitadd" | "digit-add" => {
            let opts = DigitAddOptions {
                train_samples: 4,
                test_digits: 1,
                test_samples: 1,
                hidden: vec![8],
                ..DigitAddOptions::default()
            };
            let t = DigitAddTask::generate(&opts, seed)?;
            build_digitadd_kb(&t.train, &t.hidden, seed)?
        }
        other => return Err(CliError::Invalid(format!("unknown task `{other}`"))),
    };
    let r = loss_gradcheck(&kb, &env, &sem, step, eps)?;
    println!(
        "task = {task}\nsemantics = {kind}\nmax_relative_error = {:e}",
        r.max_rel_error
    );
    if r.max_rel_error > 1e-3 {
        return Err(CliError::Numerical(format!(
            "gradient check failed: relative error {:e}",
            r.max_rel_error
        )));
    }
    Ok(())
}
