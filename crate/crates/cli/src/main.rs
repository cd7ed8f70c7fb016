//! `sgldvr`: single trajectories, theory reports, hyperparameter validation,
//! verification campaigns and the subset-variance oracle.
//!
//! Exit codes: 0 success, 1 a campaign verdict failed, 2 usage or config error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::Value;

use sgldvr::dynamics::{gaussian_init, run_method, RunOptions};
use sgldvr::experiments::CampaignSpec;
use sgldvr::rng::DEFAULT_SEED;
use sgldvr::theory::{subset_variance, subset_variance_oracle, theory_report, validate_hyperparams, ReportInputs};
use sgldvr::trace::{summarize, write_trace};
use sgldvr::{Method, ObjectiveSpec, SgldVrConfig};

#[derive(Parser)]
#[command(name = "sgldvr", version, about = "Variance-reduced Langevin dynamics: runs, theory and campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides any seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for parallel trials.
    #[arg(long)]
    jobs: Option<usize>,
    /// Record every n-th iterate of a run.
    #[arg(long, default_value_t = 1)]
    stride: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write its trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// sgd, sgld or sgld-vr; overrides the config file.
        #[arg(long)]
        method: Option<Method>,
    },
    /// Print every derived constant as JSON.
    Theory {
        #[command(flatten)]
        common: Common,
    },
    /// Check the sufficient condition on the stepsize and weights.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification campaign: first-order, recurrence, reachability,
    /// saddle, classify or variance.
    Campaign {
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Exact subset-mean variance by enumeration next to the closed form.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
}

/// Config file of `run`, `theory` and `validate`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    objective: ObjectiveSpec,
    config: SgldVrConfig,
    #[serde(default)]
    method: Option<Method>,
    #[serde(default)]
    seed: Option<u64>,
    /// Explicit start; otherwise Gaussian with `init_scale`.
    #[serde(default)]
    x0: Option<Vec<f64>>,
    #[serde(default = "default_init_scale")]
    init_scale: f64,
    #[serde(default)]
    theory: Option<ReportInputs>,
}

fn default_init_scale() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleFile {
    values: Vec<Vec<f64>>,
    b: usize,
}

enum Failure {
    Config(String),
    Verdict(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

fn read_json(path: Option<&Path>) -> Result<Value, Failure> {
    let path = path.ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value, what: &str) -> Result<T, Failure> {
    serde_json::from_value(v).map_err(|e| Failure::Config(format!("invalid {what} config: {e}")))
}

fn pick_seed(flag: Option<u64>, file: Option<u64>) -> u64 {
    flag.or(file).unwrap_or(DEFAULT_SEED)
}

fn start_point(rf: &RunFile, d: usize, seed: u64) -> Result<Vec<f64>, Failure> {
    match &rf.x0 {
        Some(x) if x.len() != d => Err(Failure::Config(format!("x0 has length {}, objective has d={d}", x.len()))),
        Some(x) => Ok(x.clone()),
        None => Ok(gaussian_init(d, rf.init_scale, seed)),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // a closed pipe (`| head`) is not an error
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn cmd_run(common: &Common, method: Option<Method>) -> Result<(), Failure> {
    let rf: RunFile = parse(read_json(common.config.as_deref())?, "run")?;
    let problem = rf.objective.build()?;
    let seed = pick_seed(common.seed, rf.seed);
    let method = method.or(rf.method).unwrap_or(Method::SgldVr);
    let x0 = start_point(&rf, problem.objective.dim(), seed)?;
    let opts = RunOptions {
        stride: common.stride,
        record_iterates: true,
        objective_id: rf.objective.id(),
    };
    let trace = run_method(problem.objective.as_ref(), &rf.config, method, &x0, seed, &opts)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join(format!("run_{}_{seed}.csv", method.name()));
    write_trace(&trace, &path)?;
    let summary = summarize(&trace, &[])?;
    eprintln!("wrote {}", path.display());
    print_json(&summary)
}

fn cmd_theory(common: &Common) -> Result<(), Failure> {
    let rf: RunFile = parse(read_json(common.config.as_deref())?, "theory")?;
    let problem = rf.objective.build()?;
    let seed = pick_seed(common.seed, rf.seed);
    let x0 = start_point(&rf, problem.objective.dim(), seed)?;
    let inputs = rf.theory.clone().unwrap_or_default();
    let report = theory_report(&rf.objective.id(), &problem, &rf.config, &x0, &inputs)?;
    print_json(&report)
}

fn cmd_validate(common: &Common) -> Result<(), Failure> {
    let rf: RunFile = parse(read_json(common.config.as_deref())?, "validate")?;
    let problem = rf.objective.build()?;
    let beta = rf.theory.clone().unwrap_or_default().beta_tilde;
    let l = problem.metadata.grad_lipschitz;
    let f = validate_hyperparams(rf.config.schedule.eta0(), beta, l, rf.config.epoch_length)?;
    if f.is_feasible() {
        println!("feasible: lhs = {:.6e} < 1", f.lhs());
    } else {
        println!(
            "infeasible: c0*(1/beta + 2*eta0) + eta0*L = {:.6e} must be < 1 with every gamma > 0",
            f.lhs()
        );
    }
    print_json(&f)
}

fn cmd_campaign(name: &str, common: &Common) -> Result<(), Failure> {
    let (spec, file_seed) = match &common.config {
        Some(p) => {
            let mut v = read_json(Some(p))?;
            let seed = v.as_object_mut().and_then(|o| o.remove("seed")).and_then(|s| s.as_u64());
            if let Some(o) = v.as_object_mut() {
                o.entry("campaign").or_insert(Value::String(name.replace('-', "_")));
            }
            let spec: CampaignSpec = parse(v, "campaign")?;
            if CampaignSpec::default_for(name).map(|d| d.name()) != Some(spec.name()) {
                return Err(Failure::Config(format!(
                    "config describes campaign {:?}, not {name:?}",
                    spec.name()
                )));
            }
            (spec, seed)
        }
        None => (
            CampaignSpec::default_for(name).ok_or_else(|| {
                Failure::Config(format!(
                    "unknown campaign {name:?} (expected first-order, recurrence, reachability, saddle, classify or variance)"
                ))
            })?,
            None,
        ),
    };
    let seed = pick_seed(common.seed, file_seed);
    let report = spec.run(seed)?;
    for p in report.write(&common.out)? {
        eprintln!("wrote {}", p.display());
    }
    for v in &report.verdicts {
        println!(
            "{} {}: {:.6e} {} {:.6e} (margin {:+.3e}, n = {})",
            if v.passed { "PASS" } else { "FAIL" },
            v.metric,
            v.value,
            serde_json::to_value(v.comparator)?.as_str().unwrap_or("?"),
            v.threshold,
            v.margin,
            v.n_trials
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verdict(format!("campaign {} failed", report.name)))
    }
}

fn cmd_oracle(common: &Common) -> Result<(), Failure> {
    let of: OracleFile = parse(read_json(common.config.as_deref())?, "oracle")?;
    let exact = subset_variance_oracle(&of.values, of.b)?;
    let closed = subset_variance(&of.values, of.b)?;
    print_json(&serde_json::json!({
        "b": of.b,
        "n": of.values.len(),
        "enumerated": exact,
        "closed_form": closed,
        "abs_diff": (exact - closed).abs(),
    }))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::Theory { common }
        | Command::Validate { common }
        | Command::Campaign { common, .. }
        | Command::Oracle { common } => common.clone(),
    };
    if let Some(j) = common.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Run { method, .. } => cmd_run(&common, *method),
        Command::Theory { .. } => cmd_theory(&common),
        Command::Validate { .. } => cmd_validate(&common),
        Command::Campaign { name, .. } => cmd_campaign(name, &common),
        Command::Oracle { .. } => cmd_oracle(&common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
