//! Command-line surface: `solve`, `simulate`, `sweep`, `inspect`.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use srn_core::analysis::{format_value, solve_net, sweep, SweepSpec};
use srn_core::markov::build_generator;
use srn_core::mtd::{build_mtd_net, default_rewards, MtdParams};
use srn_core::rewards::{metric_name, metric_value};
use srn_core::{explore, simulate, ExploreConfig, Net, NetDef, RewardSpec, SimConfig, SolverConfig, SolverMethod};

use crate::model::parse_model;

/// Name of the built-in cloud MTD model.
pub const BUILTIN_MTD: &str = "mtd-cloud";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_MODEL: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Solver(_) => EXIT_SOLVER,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "srn", version, about = "Stochastic reward net solver and simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state solution and reward values.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write `name,value` CSV here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Discrete-event simulation estimates.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Simulated hours per replication.
        #[arg(long, default_value_t = 100_000.0)]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Hours discarded at the start of each replication (default: 10% of the horizon).
        #[arg(long)]
        warmup: Option<f64>,
        /// Write `name,mean,std_error` CSV here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve across values of one parameter.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// `name=start:stop:step`, inclusive.
        #[arg(long, conflicts_with = "values", required_unless_present = "values")]
        range: Option<String>,
        /// `name=v1,v2,...`
        #[arg(long)]
        values: Option<String>,
        /// Write the CSV table here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Structure and state-space summary.
    Inspect {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = ExploreConfig::default().max_states)]
        max_states: usize,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file, or `mtd-cloud` for the built-in model.
    pub model: String,
    /// Parameter override, `name=value`. Repeatable.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// auto, direct or iterative.
    #[arg(long, default_value = "auto")]
    pub method: SolverMethod,
    #[arg(long, default_value_t = SolverConfig::default().tolerance)]
    pub tolerance: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iterations)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = ExploreConfig::default().max_states)]
    pub max_states: usize,
}

impl SolverArgs {
    fn configs(&self) -> Result<(ExploreConfig, SolverConfig), CliError> {
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(CliError::Usage(format!("--tolerance must be positive, got {}", self.tolerance)));
        }
        let explore = ExploreConfig { max_states: self.max_states, ..ExploreConfig::default() };
        let solver = SolverConfig {
            method: self.method,
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            ..SolverConfig::default()
        };
        Ok((explore, solver))
    }
}

/// A loaded model with overrides applied.
#[derive(Clone)]
enum Loaded {
    Builtin(MtdParams),
    File(NetDef, Vec<RewardSpec>),
}

impl Loaded {
    fn net(&self) -> Result<(Net, Vec<RewardSpec>), CliError> {
        match self {
            Loaded::Builtin(p) => Ok((build_mtd_net(p).map_err(model_err)?, default_rewards())),
            Loaded::File(def, rewards) => Ok((Net::new(def.clone()).map_err(model_err)?, rewards.clone())),
        }
    }

    fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        match self {
            Loaded::Builtin(p) => p.set(name, value).map_err(|e| e.to_string()),
            Loaded::File(def, _) => def.set_param(name, value).map_err(|e| e.to_string()),
        }
    }
}

fn model_err(e: impl std::fmt::Display) -> CliError {
    CliError::Model(e.to_string())
}

fn solver_err(e: impl std::fmt::Display) -> CliError {
    CliError::Solver(e.to_string())
}

fn split_pair<'a>(arg: &'a str, flag: &str) -> Result<(&'a str, &'a str), CliError> {
    arg.split_once('=')
        .map(|(n, v)| (n.trim(), v.trim()))
        .filter(|(n, v)| !n.is_empty() && !v.is_empty())
        .ok_or_else(|| CliError::Usage(format!("{flag} expects NAME=VALUE, got `{arg}`")))
}

fn parse_number(s: &str, flag: &str) -> Result<f64, CliError> {
    s.parse().map_err(|_| CliError::Usage(format!("{flag}: `{s}` is not a number")))
}

fn load(args: &ModelArgs) -> Result<Loaded, CliError> {
    let mut loaded = if args.model == BUILTIN_MTD {
        Loaded::Builtin(MtdParams::default())
    } else {
        let text = std::fs::read_to_string(&args.model)
            .map_err(|e| CliError::Model(format!("cannot read {}: {e}", args.model)))?;
        let m = parse_model(&text).map_err(|e| CliError::Model(format!("{}: {e}", args.model)))?;
        Loaded::File(m.def, m.rewards)
    };
    for p in &args.params {
        let (name, value) = split_pair(p, "--param")?;
        let value = parse_number(value, "--param")?;
        loaded.set(name, value).map_err(CliError::Model)?;
    }
    if let Loaded::Builtin(p) = &loaded {
        p.validate().map_err(model_err)?;
    }
    Ok(loaded)
}

fn write_output(path: &PathBuf, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

/// `name,value` rows: raw rewards, then the derived metric for each reward
/// whose metric name differs.
fn report_rows(rewards: &[(String, f64)]) -> Vec<(String, f64)> {
    let mut rows = rewards.to_vec();
    for (n, v) in rewards {
        let m = metric_name(n);
        if m != *n {
            rows.push((m, metric_value(n, *v)));
        }
    }
    rows
}

fn cmd_solve(
    model: &ModelArgs,
    solver: &SolverArgs,
    output: &Option<PathBuf>,
    out: &mut String,
) -> Result<(), CliError> {
    let (explore_cfg, solver_cfg) = solver.configs()?;
    let (net, rewards) = load(model)?.net()?;
    let sol = solve_net(&net, &rewards, &explore_cfg, &solver_cfg).map_err(solver_err)?;
    let mut csv = String::from("name,value\n");
    for (n, v) in report_rows(&sol.report.rewards) {
        let _ = writeln!(csv, "{n},{}", format_value(v));
    }
    let _ = writeln!(out, "tangible_states={}", sol.graph.len());
    let _ = writeln!(out, "residual={:e}", sol.steady_state.residual);
    let _ = writeln!(out, "method={} iterations={}", sol.steady_state.method, sol.steady_state.iterations);
    out.push_str(&csv);
    if let Some(path) = output {
        write_output(path, &csv)?;
    }
    Ok(())
}

fn cmd_simulate(model: &ModelArgs, cfg: SimConfig, output: &Option<PathBuf>, out: &mut String) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (net, rewards) = load(model)?.net()?;
    let est = simulate(&net, &rewards, &cfg).map_err(solver_err)?;
    let mut csv = String::from("name,mean,std_error\n");
    for e in &est.estimates {
        let _ = writeln!(csv, "{},{},{}", e.name, format_value(e.mean), format_value(e.std_error));
        let m = metric_name(&e.name);
        if m != e.name {
            let _ = writeln!(csv, "{m},{},{}", format_value(metric_value(&e.name, e.mean)), format_value(e.std_error));
        }
    }
    let _ = writeln!(
        out,
        "seed={} horizon={} warmup={} replications={} events={} deadlocked_replications={}",
        cfg.seed, cfg.horizon, cfg.warmup, cfg.replications, est.events, est.deadlocked_replications
    );
    for e in &est.estimates {
        let _ = writeln!(out, "{} = {} +/- {:.3e}", e.name, format_value(e.mean), e.std_error);
    }
    out.push_str(&csv);
    if let Some(path) = output {
        write_output(path, &csv)?;
    }
    Ok(())
}

fn parse_sweep(range: &Option<String>, values: &Option<String>) -> Result<SweepSpec, CliError> {
    let usage = CliError::Usage;
    match (range, values) {
        (Some(r), None) => {
            let (name, spec) = split_pair(r, "--range")?;
            let parts: Vec<&str> = spec.split(':').collect();
            let [a, b, s] = parts[..] else {
                return Err(usage(format!("--range expects NAME=START:STOP:STEP, got `{r}`")));
            };
            let n = |x: &str| parse_number(x, "--range");
            SweepSpec::range(name, n(a)?, n(b)?, n(s)?).map_err(usage)
        }
        (None, Some(v)) => {
            let (name, list) = split_pair(v, "--values")?;
            let vals = list.split(',').map(|x| parse_number(x.trim(), "--values")).collect::<Result<_, _>>()?;
            SweepSpec::values(name, vals).map_err(usage)
        }
        _ => Err(usage("give exactly one of --range or --values".into())),
    }
}

fn cmd_sweep(
    model: &ModelArgs,
    solver: &SolverArgs,
    spec: SweepSpec,
    output: &Option<PathBuf>,
    out: &mut String,
) -> Result<(), CliError> {
    let (explore_cfg, solver_cfg) = solver.configs()?;
    let loaded = load(model)?;
    let (_, rewards) = loaded.net()?;
    if rewards.is_empty() {
        return Err(CliError::Model("model declares no rewards to sweep".into()));
    }
    loaded.clone().set(&spec.parameter, spec.values[0]).map_err(CliError::Model)?;
    let table = sweep(&spec, &explore_cfg, &solver_cfg, |value| {
        let mut point = loaded.clone();
        point.set(&spec.parameter, value)?;
        point.net().map_err(|e| e.to_string())
    })
    .map_err(solver_err)?;
    let csv = table.to_csv();
    match output {
        Some(path) => write_output(path, &csv)?,
        None => out.push_str(&csv),
    }
    match table.argmin("unavailability") {
        Some(v) => {
            let u = table.column("unavailability").unwrap_or_default();
            let best = u.iter().copied().fold(f64::INFINITY, f64::min);
            let _ =
                writeln!(out, "minimizer {}={} unavailability={}", spec.parameter, format_value(v), format_value(best));
        }
        None => {
            let _ = writeln!(out, "minimizer none (no `up` reward)");
        }
    }
    Ok(())
}

fn cmd_inspect(model: &ModelArgs, max_states: usize, out: &mut String) -> Result<(), CliError> {
    let (net, _) = load(model)?.net()?;
    let cfg = ExploreConfig { max_states, ..ExploreConfig::default() };
    let graph = explore(&net, &cfg).map_err(solver_err)?;
    let def = net.def();
    let _ = writeln!(
        out,
        "places={} transitions={} tangible={} vanishing_ratio={}",
        def.places.len(),
        def.transitions.len(),
        graph.len(),
        graph.vanishing_ratio()
    );
    let reducible = build_generator(&graph).map_err(solver_err)?.recurrent_classes().len() > 1;
    let absorbing = graph.absorbing_states().len();
    let _ = writeln!(out, "arcs={} vanishing={} edges={}", def.arcs.len(), graph.vanishing_count, graph.edges.len());
    let _ = writeln!(out, "deadlocks={} absorbing_states={absorbing}", if absorbing > 0 { "yes" } else { "no" });
    let _ = writeln!(out, "reducible={}", if reducible { "yes" } else { "no" });
    Ok(())
}

/// Executes a parsed command, returning the text for standard output.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    let mut out = String::new();
    match &cli.command {
        Command::Solve { model, solver, output } => cmd_solve(model, solver, output, &mut out)?,
        Command::Simulate { model, seed, horizon, reps, warmup, output } => {
            let mut cfg = SimConfig::new(*seed, *horizon, *reps);
            if let Some(w) = warmup {
                cfg.warmup = *w;
            }
            cmd_simulate(model, cfg, output, &mut out)?
        }
        Command::Sweep { model, solver, range, values, output } => {
            let spec = parse_sweep(range, values)?;
            cmd_sweep(model, solver, spec, output, &mut out)?
        }
        Command::Inspect { model, max_states } => cmd_inspect(model, *max_states, &mut out)?,
    }
    Ok(out)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `stdout`, diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let help = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            return if help {
                let _ = stdout.write_all(text.as_bytes());
                EXIT_OK
            } else {
                let _ = stderr.write_all(text.as_bytes());
                EXIT_USAGE
            };
        }
    };
    match execute(&cli) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
