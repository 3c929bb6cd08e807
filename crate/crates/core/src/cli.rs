//! The `polq` command line: `validate`, `solve`, `simulate` and `verify`
//! on a scenario file.
//!
//! Exit codes: 0 success, 2 invalid input (syntax, unknown field, shape,
//! failed assumption), 3 numerical breakdown, 4 a verification check
//! failed, 5 I/O.
//!
//! The seed is taken from `--seed`, else `POLQ_SEED`, else the scenario.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::detsolve::solve_all;
use crate::error::Error;
use crate::export::{
    path_csv, report_csv, solution_document, solution_plot_csv, suite_document, suite_plot_csv,
    to_json, value_document, write_files,
};
use crate::model::validate;
use crate::noise::draw_noise;
use crate::scenario::{load_scenario, OutputFormat, Scenario};
use crate::simulate::SimulationPlan;
use crate::value::{estimation_cost, filtered_cost_floor, optimal_value};
use crate::verify::{run_suite, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Paths rendered and written per batch by `simulate`.
const WRITE_CHUNK: usize = 256;

#[derive(Debug, Parser)]
#[command(
    name = "polq",
    version,
    about = "Partially observed LQ control: solve, simulate, verify"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario against the model assumptions.
    Validate(CommonArgs),
    /// Solve the Riccati and auxiliary equations and print the optimal value.
    Solve(CommonArgs),
    /// Write closed-loop sample paths as CSV.
    Simulate(CommonArgs),
    /// Run the Monte Carlo verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory; overrides the scenario.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the scenario.
    #[arg(long, env = "POLQ_SEED")]
    pub seed: Option<u64>,
    /// Number of Monte Carlo paths; overrides the scenario.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Number of grid intervals; overrides the scenario.
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Multiply the error covariance by this factor after solving (for
    /// checking that the suite detects a wrong filter).
    #[arg(long, default_value_t = 1.0)]
    pub debug_sigma_scale: f64,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Error(Error),
    /// Names of the verification checks that failed.
    Checks(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Checks(_) => EXIT_CHECK_FAILED,
            Failure::Error(Error::Io { .. }) => EXIT_IO,
            Failure::Error(e) if e.is_numerical() => EXIT_NUMERICAL,
            Failure::Error(_) => EXIT_INVALID,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Error(e) => write!(f, "error: {e}"),
            Failure::Checks(names) => write!(f, "failed checks: {}", names.join(", ")),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

struct Context {
    scenario: Scenario,
    out_dir: PathBuf,
    seed: u64,
    n_paths: usize,
}

fn load(args: &CommonArgs) -> std::result::Result<Context, Failure> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(steps) = args.steps {
        scenario = scenario.with_steps(steps)?;
    }
    Ok(Context {
        out_dir: args
            .out
            .clone()
            .unwrap_or_else(|| scenario.output.directory.clone()),
        seed: args.seed.unwrap_or(scenario.mc.seed),
        n_paths: args.paths.unwrap_or(scenario.mc.n_paths),
        scenario,
    })
}

fn wants(scenario: &Scenario, format: OutputFormat) -> bool {
    scenario.output.formats.contains(&format)
}

fn io(e: std::io::Error) -> Failure {
    Failure::Error(Error::Io {
        path: "<stdout>".into(),
        source: e,
    })
}

fn cmd_validate(args: &CommonArgs, out: &mut dyn Write) -> Outcome {
    match load_scenario(&args.scenario) {
        Ok(s) => {
            let report = validate(&s.model, &s.model.tol)?;
            write!(out, "{report}").map_err(io)?;
            writeln!(out, "scenario is valid").map_err(io)?;
            Ok(())
        }
        Err(Error::Validation(report)) => {
            write!(out, "{report}").map_err(io)?;
            Err(Failure::Error(Error::Validation(report)))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_solve(args: &CommonArgs, out: &mut dyn Write) -> Outcome {
    let ctx = load(args)?;
    let s = &ctx.scenario;
    let model = &s.model;
    let sol = solve_all(model, &s.grid)?;
    let value = optimal_value(&model.x0, &sol, model)?;
    let estimation = estimation_cost(&sol, model)?;
    let floor = filtered_cost_floor(&model.x0, &sol, model)?;

    let mut files = Vec::new();
    if wants(s, OutputFormat::Json) {
        files.push((
            "solution.json".to_string(),
            to_json(&solution_document(&sol, model)?),
        ));
        files.push((
            "value.json".to_string(),
            to_json(&value_document(&value, estimation, floor)),
        ));
    }
    if wants(s, OutputFormat::Csv) {
        files.push(("plot.csv".to_string(), solution_plot_csv(&sol)));
    }
    write_files(&ctx.out_dir, &files)?;

    writeln!(out, "optimal value: {}", value.total).map_err(io)?;
    for (name, v) in &value.entries()[..7] {
        writeln!(out, "  {name}: {v}").map_err(io)?;
    }
    writeln!(out, "estimation cost: {estimation}").map_err(io)?;
    writeln!(out, "filtered cost floor: {floor}").map_err(io)?;
    Ok(())
}

fn path_file_name(index: usize, total: usize) -> String {
    let width = total.saturating_sub(1).to_string().len().max(5);
    format!("path_{index:0width$}.csv")
}

fn cmd_simulate(args: &CommonArgs, out: &mut dyn Write) -> Outcome {
    let ctx = load(args)?;
    let s = &ctx.scenario;
    let n = ctx.n_paths;
    if n == 0 {
        writeln!(out, "simulated 0 paths").map_err(io)?;
        return Ok(());
    }
    let sol = solve_all(&s.model, &s.grid)?;
    let plan = SimulationPlan::new(&s.model, &sol)?;
    let policy = s.control_policy()?;
    let dims = s.model.dims;
    let simulate =
        |p: usize| plan.simulate(&policy, &draw_noise(ctx.seed, p as u64, &s.grid, &dims));

    // a first pass finds numerical failures before anything is written
    let costs = (0..n)
        .into_par_iter()
        .map(|p| simulate(p).map(|b| b.cost))
        .collect::<crate::Result<Vec<f64>>>()?;

    let mut written: Vec<PathBuf> = Vec::new();
    for start in (0..n).step_by(WRITE_CHUNK) {
        let end = (start + WRITE_CHUNK).min(n);
        let files = (start..end)
            .into_par_iter()
            .map(|p| simulate(p).map(|b| (path_file_name(p, n), path_csv(&b))))
            .collect::<crate::Result<Vec<_>>>()?;
        match write_files(&ctx.out_dir, &files) {
            Ok(paths) => written.extend(paths),
            Err(e) => {
                for path in &written {
                    let _ = std::fs::remove_file(path);
                }
                return Err(e.into());
            }
        }
    }
    let mean = costs.iter().sum::<f64>() / n as f64;
    writeln!(out, "simulated {n} paths into {}", ctx.out_dir.display()).map_err(io)?;
    writeln!(out, "mean realized cost: {mean}").map_err(io)?;
    Ok(())
}

fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Outcome {
    let ctx = load(&args.common)?;
    let s = &ctx.scenario;
    let config = SuiteConfig {
        n_paths: ctx.n_paths,
        seed: ctx.seed,
        probe_nodes: s.probe_nodes(),
        perturbation: s.mc.perturbation,
        sigma_scale: args.debug_sigma_scale,
    };
    let report = run_suite(&s.model, s.grid.steps(), &config)?;

    let mut files = Vec::new();
    if wants(s, OutputFormat::Json) {
        files.push(("report.json".to_string(), to_json(&suite_document(&report))));
    }
    if wants(s, OutputFormat::Csv) {
        files.push(("report.csv".to_string(), report_csv(&report.checks)));
        files.push(("plot.csv".to_string(), suite_plot_csv(&report)));
    }
    write_files(&ctx.out_dir, &files)?;

    for c in &report.checks {
        writeln!(
            out,
            "{} {}: estimate {} target {} tolerance {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.estimate,
            c.target,
            c.tolerance
        )
        .map_err(io)?;
    }
    let failed: Vec<String> = report.failures().map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        writeln!(out, "all {} checks passed", report.checks.len()).map_err(io)?;
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

/// Runs a parsed command line, printing results to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, out),
        Command::Solve(a) => cmd_solve(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Verify(a) => cmd_verify(a, out),
    }
}

/// Parses `std::env::args`, runs, reports failures on stderr and returns
/// the exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(&cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{f}");
            f.exit_code()
        }
    }
}
