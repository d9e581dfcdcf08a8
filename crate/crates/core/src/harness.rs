//! Seeded Monte Carlo sweeps over antenna count and source power.
//!
//! Every `(n, ps, realization)` cell draws one channel and runs each selected
//! method on it, so method comparisons are paired. Cells run in parallel;
//! records come back in a fixed order regardless of scheduling.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{oracle_solve, split_grid_solve, uniform_solve, OracleConfig};
use crate::channel::{eigen_reduce, generate_channels, EigenChannel, SystemParams};
use crate::ellipsoid::{solve, SolveResult, SolverConfig};
use crate::error::{HarnessError, SolverError};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SWIPT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PrimalDual,
    Uniform,
    SplitGrid,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::PrimalDual, Method::Uniform, Method::SplitGrid, Method::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Method::PrimalDual => "primal_dual",
            Method::Uniform => "uniform",
            Method::SplitGrid => "split_grid",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected one of primal_dual, uniform, split_grid, oracle)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            _ => Err(format!("unknown format `{s}` (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Template; antenna counts and source power are overridden per cell.
    pub params: SystemParams,
    pub n_values: Vec<usize>,
    pub ps_dbm_values: Vec<f64>,
    pub realizations: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
    pub solver: SolverConfig,
    pub split_grid_points: usize,
    pub oracle: OracleConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            n_values: vec![2, 4, 6],
            ps_dbm_values: vec![25.0, 40.0],
            realizations: 500,
            base_seed: 0,
            methods: vec![Method::PrimalDual, Method::Uniform],
            solver: SolverConfig::default(),
            split_grid_points: 101,
            oracle: OracleConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_owned(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.n_values.is_empty() || self.ps_dbm_values.is_empty() {
            return bad("n_values and ps_dbm_values must be non-empty".into());
        }
        if self.split_grid_points < 2 {
            return bad("split_grid_points must be at least 2".into());
        }
        for &n in &self.n_values {
            self.cell_params(n, 0.0)
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if let Some(ps) = self.ps_dbm_values.iter().find(|p| !p.is_finite()) {
            return bad(format!("source power {ps} dBm is not finite"));
        }
        Ok(())
    }

    fn cell_params(&self, n: usize, ps_dbm: f64) -> SystemParams {
        SystemParams {
            n_s: n,
            n_r: n,
            n_d: n,
            p_s_dbm: ps_dbm,
            ..self.params.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub ps_dbm: f64,
    pub method: Method,
    pub seed: u64,
    /// bits/s/Hz
    pub rate: f64,
    /// Solver time only, seconds.
    pub wall_time: f64,
    pub iters: usize,
    /// Absent for methods without a dual certificate.
    pub gap: Option<f64>,
    pub converged: bool,
}

/// Column order of record CSV files.
pub const RECORD_COLUMNS: [&str; 9] = [
    "n", "ps_dbm", "method", "seed", "rate", "wall_time", "iters", "gap", "converged",
];

/// Column order of summary CSV files.
pub const SUMMARY_COLUMNS: [&str; 9] = [
    "n",
    "ps_dbm",
    "method",
    "count",
    "mean_rate",
    "std_rate",
    "mean_wall_time",
    "median_wall_time",
    "converged_fraction",
];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Channel seed of one cell. Independent of the method so all methods see
/// the same channel.
pub fn cell_seed(base_seed: u64, n: usize, ps_index: usize, realization: usize) -> u64 {
    let mut h = splitmix64(n as u64);
    h = splitmix64(h ^ ps_index as u64);
    h = splitmix64(h ^ realization as u64);
    base_seed ^ h
}

/// Runs one method on one reduced channel.
pub fn run_method(
    method: Method,
    ec: &EigenChannel,
    ps: f64,
    cfg: &ExperimentConfig,
) -> Result<SolveResult, String> {
    let start = Instant::now();
    let out = match method {
        Method::PrimalDual => solve(ec, ps, &cfg.solver),
        Method::Uniform => uniform_solve(ec, ps, &cfg.solver).map(|u| u.result),
        Method::SplitGrid => Ok(split_grid_solve(ec, ps, cfg.split_grid_points, cfg.solver.eps_rho)),
        Method::Oracle => {
            return oracle_solve(ec, ps, &cfg.oracle, cfg.solver.eps_rho)
                .map(|primal| SolveResult {
                    primal,
                    dual: crate::duals::DualPoint::new(0.0, 0.0, 0.0),
                    dual_value: f64::NAN,
                    gap: f64::NAN,
                    iters: 0,
                    wall_time: start.elapsed().as_secs_f64(),
                    converged: true,
                })
                .map_err(|e| e.to_string())
        }
    };
    match out {
        Ok(r) => Ok(r),
        Err(SolverError::NotConverged(r)) => Ok(*r),
        Err(e) => Err(e.to_string()),
    }
}

fn run_cell(cfg: &ExperimentConfig, n: usize, ps_index: usize, r: usize) -> Vec<ExperimentRecord> {
    let ps_dbm = cfg.ps_dbm_values[ps_index];
    let params = cfg.cell_params(n, ps_dbm);
    let seed = cell_seed(cfg.base_seed, n, ps_index, r);
    let channel = generate_channels(&params, seed);
    let ec = eigen_reduce(&channel, &params);
    cfg.methods
        .iter()
        .map(|&method| {
            let failed = ExperimentRecord {
                n,
                ps_dbm,
                method,
                seed,
                rate: 0.0,
                wall_time: f64::MIN_POSITIVE,
                iters: 0,
                gap: None,
                converged: false,
            };
            let Ok(ec) = ec.as_ref() else { return failed };
            let start = Instant::now();
            match run_method(method, ec, params.p_s(), cfg) {
                Ok(res) => ExperimentRecord {
                    rate: res.primal.rate.max(0.0),
                    wall_time: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
                    iters: res.iters,
                    gap: res.gap.is_finite().then_some(res.gap),
                    converged: res.converged,
                    ..failed
                },
                Err(_) => ExperimentRecord {
                    wall_time: start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE),
                    ..failed
                },
            }
        })
        .collect()
}

fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs the full sweep. Records are ordered by `n`, then source power, then
/// realization, then method as listed in the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, HarnessError> {
    cfg.validate()?;
    let cells: Vec<(usize, usize, usize)> = cfg
        .n_values
        .iter()
        .flat_map(|&n| {
            (0..cfg.ps_dbm_values.len()).flat_map(move |pi| (0..cfg.realizations).map(move |r| (n, pi, r)))
        })
        .collect();
    let work = || -> Vec<ExperimentRecord> {
        cells
            .par_iter()
            .flat_map_iter(|&(n, pi, r)| run_cell(cfg, n, pi, r))
            .collect()
    };
    match thread_cap() {
        Some(threads) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub ps_dbm: f64,
    pub method: Method,
    pub count: usize,
    pub mean_rate: f64,
    pub std_rate: f64,
    pub mean_wall_time: f64,
    pub median_wall_time: f64,
    pub converged_fraction: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Groups by `(n, ps_dbm, method)` in order of first appearance.
pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut index: HashMap<(usize, u64, Method), usize> = HashMap::new();
    let mut groups: Vec<Vec<&ExperimentRecord>> = Vec::new();
    for rec in records {
        let key = (rec.n, rec.ps_dbm.to_bits(), rec.method);
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(rec);
    }
    groups
        .into_iter()
        .map(|g| {
            let rates: Vec<f64> = g.iter().map(|r| r.rate).collect();
            let times: Vec<f64> = g.iter().map(|r| r.wall_time).collect();
            let ok = g.iter().filter(|r| r.converged).count();
            SummaryRow {
                n: g[0].n,
                ps_dbm: g[0].ps_dbm,
                method: g[0].method,
                count: g.len(),
                mean_rate: mean(&rates),
                std_rate: std_dev(&rates),
                mean_wall_time: mean(&times),
                median_wall_time: median(&times),
                converged_fraction: ok as f64 / g.len() as f64,
            }
        })
        .collect()
}

fn write_rows<T: Serialize>(
    path: &Path,
    rows: &[T],
    columns: &[&str],
    format: Format,
) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    match format {
        Format::Csv => {
            let csv_err = |source| HarnessError::Csv {
                path: path.to_owned(),
                source,
            };
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(columns).map_err(csv_err)?;
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(io_err)
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(file);
            for row in rows {
                let line = serde_json::to_string(row).map_err(|source| HarnessError::Json {
                    path: path.to_owned(),
                    source,
                })?;
                writeln!(w, "{line}").map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, format: Format) -> Result<Vec<T>, HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    match format {
        Format::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|source| HarnessError::Csv {
                path: path.to_owned(),
                source,
            }),
        Format::Jsonl => {
            let mut out = Vec::new();
            for line in BufReader::new(file).lines() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                out.push(serde_json::from_str(&line).map_err(|source| HarnessError::Json {
                    path: path.to_owned(),
                    source,
                })?);
            }
            Ok(out)
        }
    }
}

pub fn export_records(path: &Path, records: &[ExperimentRecord], format: Format) -> Result<(), HarnessError> {
    write_rows(path, records, &RECORD_COLUMNS, format)
}

pub fn import_records(path: &Path, format: Format) -> Result<Vec<ExperimentRecord>, HarnessError> {
    read_rows(path, format)
}

pub fn export_summary(path: &Path, rows: &[SummaryRow], format: Format) -> Result<(), HarnessError> {
    write_rows(path, rows, &SUMMARY_COLUMNS, format)
}

pub fn import_summary(path: &Path, format: Format) -> Result<Vec<SummaryRow>, HarnessError> {
    read_rows(path, format)
}
