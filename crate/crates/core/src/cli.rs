//! Command-line front end. JSON goes to stdout, human-readable summaries to
//! stderr. Exit codes: 0 success, 1 usage or input error, 2 numerical
//! non-convergence.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::oracle_solve;
use crate::channel::{eigen_reduce, generate_channels, ChannelMatrices, SystemParams};
use crate::ellipsoid::{solve_traced, SolveResult};
use crate::error::SolverError;
use crate::harness::{
    aggregate, cell_seed, export_records, export_summary, run_experiment, run_method, ExperimentConfig,
    Format, Method, SummaryRow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Fraction of converged records below which a sweep exits with code 2.
const MIN_CONVERGED: f64 = 0.95;
const ORACLE_TOL: f64 = 5e-3;

#[derive(Debug, Parser)]
#[command(name = "swipt-relay", version, about = "Rate optimization for a wirelessly powered MIMO relay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one channel realization and print the result as JSON.
    Solve(SolveArgs),
    /// Monte Carlo sweep over antenna counts and source powers.
    Sweep(SweepArgs),
    /// Timing comparison (defaults: primal_dual vs split_grid, n = 2,4,8).
    Bench(SweepArgs),
    /// Rate comparison (defaults: primal_dual, uniform, split_grid).
    Compare(SweepArgs),
    /// Compare the solver against the brute-force oracle.
    OracleCheck(SweepArgs),
}

#[derive(Debug, Args)]
struct PhysicalArgs {
    /// Noise floor in dBm (both receivers).
    #[arg(long)]
    n0_dbm: Option<f64>,
    /// Energy harvesting efficiency in [0, 1].
    #[arg(long)]
    eta: Option<f64>,
    /// Path loss exponent.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    d_sr: Option<f64>,
    #[arg(long)]
    d_rd: Option<f64>,
    /// Ellipsoid stopping width in nats.
    #[arg(long)]
    eps0: Option<f64>,
}

impl PhysicalArgs {
    fn apply(&self, mut p: SystemParams) -> SystemParams {
        if let Some(n0) = self.n0_dbm {
            p = p.with_noise_floor(n0);
        }
        if let Some(v) = self.eta {
            p.eta = v;
        }
        if let Some(v) = self.gamma {
            p.gamma = v;
        }
        if let Some(v) = self.d_sr {
            p.d_sr = v;
        }
        if let Some(v) = self.d_rd {
            p.d_rd = v;
        }
        p
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Antennas at every node.
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 30.0, allow_negative_numbers = true)]
    ps_dbm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Read H and G from a JSON file instead of drawing them.
    #[arg(long)]
    channel_file: Option<PathBuf>,
    /// Write one JSON line per solver iteration to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    physical: PhysicalArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    ps_dbm: Option<Vec<f64>>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Record file; the summary goes next to it with a `.summary` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[command(flatten)]
    physical: PhysicalArgs,
}

impl SweepArgs {
    fn config(&self, defaults: ExperimentConfig) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_json_file(path).map_err(|e| e.to_string())?,
            None => defaults,
        };
        cfg.params = self.physical.apply(cfg.params);
        if let Some(v) = self.physical.eps0 {
            cfg.solver.eps0 = v;
        }
        if let Some(v) = &self.n {
            cfg.n_values = v.clone();
        }
        if let Some(v) = &self.ps_dbm {
            cfg.ps_dbm_values = v.clone();
        }
        if let Some(v) = self.realizations {
            cfg.realizations = v;
        }
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a, ExperimentConfig::default()),
        Command::Bench(a) => cmd_sweep(
            &a,
            ExperimentConfig {
                n_values: vec![2, 4, 8],
                ps_dbm_values: vec![30.0],
                realizations: 50,
                methods: vec![Method::PrimalDual, Method::SplitGrid],
                ..ExperimentConfig::default()
            },
        ),
        Command::Compare(a) => cmd_sweep(
            &a,
            ExperimentConfig {
                realizations: 100,
                methods: vec![Method::PrimalDual, Method::Uniform, Method::SplitGrid],
                ..ExperimentConfig::default()
            },
        ),
        Command::OracleCheck(a) => cmd_oracle_check(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), String> {
    let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
    println!("{text}");
    Ok(())
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, String> {
    let mut params = a.physical.apply(SystemParams::symmetric(a.n, a.ps_dbm));
    let channel = match &a.channel_file {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let ch = ChannelMatrices::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            params.n_r = ch.h.nrows();
            params.n_s = ch.h.ncols();
            params.n_d = ch.g.nrows();
            ch
        }
        None => {
            params.validate().map_err(|e| e.to_string())?;
            generate_channels(&params, a.seed)
        }
    };
    params.validate().map_err(|e| e.to_string())?;
    let ec = eigen_reduce(&channel, &params).map_err(|e| e.to_string())?;
    let mut solver = crate::ellipsoid::SolverConfig::default();
    if let Some(v) = a.physical.eps0 {
        solver.eps0 = v;
    }

    let mut trace_out = match &a.trace {
        Some(path) => Some(BufWriter::new(
            File::create(path).map_err(|e| format!("{}: {e}", path.display()))?,
        )),
        None => None,
    };
    let mut trace_err = None;
    let mut sink = |ev: &crate::ellipsoid::TraceEvent| {
        if let Some(w) = trace_out.as_mut() {
            let line = serde_json::to_string(ev).expect("trace events serialize");
            if let Err(e) = writeln!(w, "{line}") {
                trace_err.get_or_insert(e);
            }
        }
    };
    let outcome = solve_traced(&ec, params.p_s(), &solver, &mut sink);
    if let Some(mut w) = trace_out {
        w.flush().map_err(|e| e.to_string())?;
    }
    if let Some(e) = trace_err {
        return Err(format!("trace: {e}"));
    }
    let (result, code) = match outcome {
        Ok(r) => (r, EXIT_OK),
        Err(SolverError::NotConverged(r)) => (*r, EXIT_NOT_CONVERGED),
        Err(e) => return Err(e.to_string()),
    };
    print_json(&result)?;
    describe_solve(&result);
    Ok(code)
}

fn describe_solve(r: &SolveResult) {
    eprintln!(
        "rate {:.6} bps/Hz  gap {:.2e}  iters {}  time {:.3} ms  {}",
        r.primal.rate,
        r.gap,
        r.iters,
        r.wall_time * 1e3,
        if r.converged { "converged" } else { "NOT converged" }
    );
}

/// `out.csv` -> `out.summary.csv`.
fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = out.extension().map(|s| s.to_string_lossy().into_owned());
    let name = match ext {
        Some(ext) => format!("{stem}.summary.{ext}"),
        None => format!("{stem}.summary"),
    };
    out.with_file_name(name)
}

fn cmd_sweep(a: &SweepArgs, defaults: ExperimentConfig) -> Result<i32, String> {
    let cfg = a.config(defaults)?;
    let records = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let summary = aggregate(&records);
    if let Some(out) = &a.out {
        export_records(out, &records, a.format).map_err(|e| e.to_string())?;
        export_summary(&summary_path(out), &summary, a.format).map_err(|e| e.to_string())?;
    }
    print_json(&summary)?;
    describe_summary(&summary);
    let converged = records.iter().filter(|r| r.converged).count() as f64 / records.len() as f64;
    if converged < MIN_CONVERGED {
        eprintln!("only {:.1}% of records converged", 100.0 * converged);
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(EXIT_OK)
}

fn describe_summary(rows: &[SummaryRow]) {
    eprintln!(
        "{:>3} {:>7} {:<12} {:>6} {:>10} {:>9} {:>12} {:>6}",
        "n", "ps_dBm", "method", "count", "mean_rate", "std", "median_ms", "conv"
    );
    for r in rows {
        eprintln!(
            "{:>3} {:>7.1} {:<12} {:>6} {:>10.5} {:>9.5} {:>12.4} {:>6.3}",
            r.n,
            r.ps_dbm,
            r.method.name(),
            r.count,
            r.mean_rate,
            r.std_rate,
            r.median_wall_time * 1e3,
            r.converged_fraction
        );
    }
}

#[derive(Debug, Serialize)]
struct OracleCheckReport {
    instances: usize,
    tolerance: f64,
    max_abs_diff: f64,
    mean_abs_diff: f64,
    /// Instances where the oracle beat the solver by more than the tolerance.
    violations: usize,
    records: Vec<OracleCheckRow>,
}

#[derive(Debug, Serialize)]
struct OracleCheckRow {
    n: usize,
    ps_dbm: f64,
    seed: u64,
    solver_rate: f64,
    oracle_rate: f64,
}

fn cmd_oracle_check(a: &SweepArgs) -> Result<i32, String> {
    let cfg = a.config(ExperimentConfig {
        n_values: vec![2],
        ps_dbm_values: vec![30.0],
        realizations: 20,
        methods: vec![Method::PrimalDual],
        ..ExperimentConfig::default()
    })?;
    let mut rows = Vec::new();
    for &n in &cfg.n_values {
        for (pi, &ps_dbm) in cfg.ps_dbm_values.iter().enumerate() {
            for r in 0..cfg.realizations {
                let params = SystemParams {
                    n_s: n,
                    n_r: n,
                    n_d: n,
                    p_s_dbm: ps_dbm,
                    ..cfg.params.clone()
                };
                let seed = cell_seed(cfg.base_seed, n, pi, r);
                let ec = eigen_reduce(&generate_channels(&params, seed), &params).map_err(|e| e.to_string())?;
                let solved = run_method(Method::PrimalDual, &ec, params.p_s(), &cfg)?;
                let oracle =
                    oracle_solve(&ec, params.p_s(), &cfg.oracle, cfg.solver.eps_rho).map_err(|e| e.to_string())?;
                rows.push(OracleCheckRow {
                    n,
                    ps_dbm,
                    seed,
                    solver_rate: solved.primal.rate,
                    oracle_rate: oracle.rate,
                });
            }
        }
    }
    let diffs: Vec<f64> = rows.iter().map(|r| (r.solver_rate - r.oracle_rate).abs()).collect();
    let report = OracleCheckReport {
        instances: rows.len(),
        tolerance: ORACLE_TOL,
        max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
        mean_abs_diff: crate::harness::mean(&diffs),
        violations: rows
            .iter()
            .filter(|r| r.oracle_rate - r.solver_rate > ORACLE_TOL)
            .count(),
        records: rows,
    };
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
        std::fs::write(out, text).map_err(|e| format!("{}: {e}", out.display()))?;
    }
    print_json(&report)?;
    eprintln!(
        "{} instances, max |solve - oracle| = {:.3e} bps/Hz (tolerance {:.0e})",
        report.instances, report.max_abs_diff, ORACLE_TOL
    );
    Ok(if report.max_abs_diff <= ORACLE_TOL {
        EXIT_OK
    } else {
        EXIT_NOT_CONVERGED
    })
}
