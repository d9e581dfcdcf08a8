//! Reference solvers: the best single split ratio, the split-grid heuristic
//! that solves each hop on its own, and a brute-force grid oracle.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::EigenChannel;
use crate::duals::DualPoint;
use crate::ellipsoid::{solve_fixed_rho, SolveResult, SolverConfig};
use crate::error::{OracleError, SolverError};
use crate::rates::{first_hop_nats, harvest_sum, second_hop_nats, waterfill, PrimalPoint};

const GOLDEN: f64 = 0.618_033_988_749_894_8;
const GOLDEN_TOL: f64 = 1e-4;
const COARSE_POINTS: usize = 11;
const FALLBACK_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformResult {
    pub result: SolveResult,
    pub rho_star: f64,
}

/// Best uniform split ratio, found by golden-section search on the rate of
/// [`solve_fixed_rho`].
///
/// An 11-point scan brackets the maximum first; if the scan is not unimodal
/// the search falls back to a 101-point grid before refining.
pub fn uniform_solve(ec: &EigenChannel, ps: f64, cfg: &SolverConfig) -> Result<UniformResult, SolverError> {
    let start = Instant::now();
    let eps = cfg.eps_rho;
    let (lo_end, hi_end) = (eps, 1.0 - eps);
    let mut iters = 0;
    let mut evaluate = |rho: f64| -> Result<SolveResult, SolverError> {
        let res = match solve_fixed_rho(ec, ps, rho, cfg) {
            Ok(r) => r,
            Err(SolverError::NotConverged(r)) => *r,
            Err(e) => return Err(e),
        };
        iters += res.iters;
        Ok(res)
    };

    let grid = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|k| lo_end + (hi_end - lo_end) * k as f64 / (n - 1) as f64)
            .collect()
    };
    let mut samples: Vec<(f64, SolveResult)> = Vec::new();
    for rho in grid(COARSE_POINTS) {
        samples.push((rho, evaluate(rho)?));
    }
    if !is_unimodal(samples.iter().map(|(_, r)| r.primal.rate)) {
        samples.clear();
        for rho in grid(FALLBACK_POINTS) {
            samples.push((rho, evaluate(rho)?));
        }
    }
    let top = argmax(samples.iter().map(|(_, r)| r.primal.rate));
    let mut a = samples[top.saturating_sub(1)].0;
    let mut b = samples[(top + 1).min(samples.len() - 1)].0;

    let mut best = samples.swap_remove(top);
    let consider = |rho: f64, res: SolveResult, best: &mut (f64, SolveResult)| {
        if res.primal.rate > best.1.primal.rate {
            *best = (rho, res);
        }
    };
    let mut x1 = b - GOLDEN * (b - a);
    let mut x2 = a + GOLDEN * (b - a);
    let mut f1 = evaluate(x1)?;
    let mut f2 = evaluate(x2)?;
    while b - a > GOLDEN_TOL {
        if f1.primal.rate >= f2.primal.rate {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - GOLDEN * (b - a);
            f1 = evaluate(x1)?;
            consider(x2, f2.clone(), &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + GOLDEN * (b - a);
            f2 = evaluate(x2)?;
            consider(x1, f1.clone(), &mut best);
        }
    }
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);

    let (rho_star, mut result) = best;
    result.iters = iters;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(UniformResult { result, rho_star })
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Nondecreasing then nonincreasing (ties tolerated at the 1e-12 level).
fn is_unimodal(values: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = values.collect();
    let mut descending = false;
    for w in v.windows(2) {
        let step = w[1] - w[0];
        if step < -1e-12 {
            descending = true;
        } else if step > 1e-12 && descending {
            return false;
        }
    }
    true
}

/// Rate of the split heuristic at one uniform ratio: the first hop is
/// water-filled alone, the relay then water-fills whatever was harvested.
fn split_point(ec: &EigenChannel, ps: f64, rho: f64) -> PrimalPoint {
    let gains: Vec<f64> = ec.lambda_h.iter().map(|l| (1.0 - rho) * l).collect();
    let p = waterfill(ps, &gains);
    let rho_v = vec![rho; ec.k1()];
    let budget = ec.harvest_scale() * harvest_sum(&rho_v, &p, &ec.lambda_h);
    let q = fit_budget(waterfill(budget, &ec.lambda_g), budget);
    let rate = first_hop_nats(&rho_v, &p, &ec.lambda_h).min(second_hop_nats(&q, &ec.lambda_g))
        / std::f64::consts::LN_2;
    PrimalPoint {
        rho: rho_v,
        p,
        q,
        rate,
    }
}

fn fit_budget(mut q: Vec<f64>, budget: f64) -> Vec<f64> {
    let total: f64 = q.iter().sum();
    if total > budget && total > 0.0 {
        q.iter_mut().for_each(|x| *x *= budget / total);
    }
    q
}

/// Grid search over a uniform ratio with each hop solved separately.
pub fn split_grid_solve(ec: &EigenChannel, ps: f64, grid_points: usize, eps: f64) -> SolveResult {
    let start = Instant::now();
    let n = grid_points.max(2);
    let mut best: Option<PrimalPoint> = None;
    for k in 0..n {
        let rho = eps + (1.0 - 2.0 * eps) * k as f64 / (n - 1) as f64;
        let pt = split_point(ec, ps, rho);
        if best.as_ref().is_none_or(|b| pt.rate > b.rate) {
            best = Some(pt);
        }
    }
    SolveResult {
        primal: best.expect("grid has at least two points"),
        dual: DualPoint::new(0.0, 0.0, 0.0),
        dual_value: f64::NAN,
        gap: f64::NAN,
        iters: n,
        wall_time: start.elapsed().as_secs_f64(),
        converged: true,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub rho_grid: usize,
    pub p_grid: usize,
    pub refine_rounds: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            rho_grid: 41,
            p_grid: 41,
            refine_rounds: 2,
        }
    }
}

/// Evaluates one candidate; `q` water-fills the harvested power.
fn oracle_point(ec: &EigenChannel, rho: &[f64], p: &[f64]) -> (f64, f64) {
    let budget = ec.harvest_scale() * harvest_sum(rho, p, &ec.lambda_h);
    let q = waterfill(budget, &ec.lambda_g);
    let r1 = first_hop_nats(rho, p, &ec.lambda_h);
    let r2 = second_hop_nats(&q, &ec.lambda_g);
    (r1.min(r2), budget)
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi <= lo {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// All index tuples of length `dims` over `0..n`.
fn cartesian(dims: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

struct Region {
    rho: Vec<(f64, f64)>,
    /// Ranges for all but the last power; the last takes what is left.
    p: Vec<(f64, f64)>,
}

fn search_region(
    ec: &EigenChannel,
    ps: f64,
    region: &Region,
    cfg: &OracleConfig,
) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let k1 = ec.k1();
    let rho_axes: Vec<Vec<f64>> = region.rho.iter().map(|&(a, b)| axis(a, b, cfg.rho_grid)).collect();
    let p_axes: Vec<Vec<f64>> = region.p.iter().map(|&(a, b)| axis(a, b, cfg.p_grid)).collect();
    let powers: Vec<Vec<f64>> = cartesian(k1 - 1, cfg.p_grid)
        .into_iter()
        .filter_map(|idx| {
            let mut p: Vec<f64> = idx
                .iter()
                .enumerate()
                .map(|(d, &i)| p_axes[d][i.min(p_axes[d].len() - 1)])
                .collect();
            let used: f64 = p.iter().sum();
            let last = ps - used;
            (last >= -1e-12 * ps).then(|| {
                p.push(last.max(0.0));
                p
            })
        })
        .collect();
    let splits: Vec<Vec<f64>> = cartesian(k1, cfg.rho_grid)
        .into_iter()
        .map(|idx| {
            idx.iter()
                .enumerate()
                .map(|(d, &i)| rho_axes[d][i.min(rho_axes[d].len() - 1)])
                .collect()
        })
        .collect();
    // Max-reduction; ties go to the lowest (split, power) index so the result
    // does not depend on thread scheduling.
    splits
        .par_iter()
        .enumerate()
        .filter_map(|(si, rho)| {
            let mut best: Option<(f64, usize, usize)> = None;
            for (pi, p) in powers.iter().enumerate() {
                let (r, _) = oracle_point(ec, rho, p);
                if best.is_none_or(|(b, _, _)| r > b) {
                    best = Some((r, si, pi));
                }
            }
            best
        })
        .reduce_with(|a, b| {
            if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
                b
            } else {
                a
            }
        })
        .map(|(r, si, pi)| (r, splits[si].clone(), powers[pi].clone()))
}

/// Exhaustive grid over per-mode split ratios and budget-saturating source
/// powers, followed by local refinement around the incumbent.
pub fn oracle_solve(
    ec: &EigenChannel,
    ps: f64,
    cfg: &OracleConfig,
    eps: f64,
) -> Result<PrimalPoint, OracleError> {
    let k1 = ec.k1();
    if k1 > 3 {
        return Err(OracleError::OracleTooLarge(k1));
    }
    let cfg = OracleConfig {
        rho_grid: cfg.rho_grid.max(3),
        p_grid: cfg.p_grid.max(3),
        refine_rounds: cfg.refine_rounds,
    };
    let mut region = Region {
        rho: vec![(eps, 1.0 - eps); k1],
        p: vec![(0.0, ps); k1 - 1],
    };
    let mut rho_step = (1.0 - 2.0 * eps) / (cfg.rho_grid - 1) as f64;
    let mut p_step = ps / (cfg.p_grid - 1) as f64;
    let mut best = search_region(ec, ps, &region, &cfg).expect("grid is non-empty");
    for _ in 0..cfg.refine_rounds {
        region = Region {
            rho: best
                .1
                .iter()
                .map(|&r| ((r - rho_step).max(eps), (r + rho_step).min(1.0 - eps)))
                .collect(),
            p: best.2[..k1 - 1]
                .iter()
                .map(|&p| ((p - p_step).max(0.0), (p + p_step).min(ps)))
                .collect(),
        };
        rho_step *= 2.0 / (cfg.rho_grid - 1) as f64;
        p_step *= 2.0 / (cfg.p_grid - 1) as f64;
        if let Some(found) = search_region(ec, ps, &region, &cfg) {
            if found.0 > best.0 {
                best = found;
            }
        }
    }
    let (_, rho, p) = best;
    let budget = ec.harvest_scale() * harvest_sum(&rho, &p, &ec.lambda_h);
    let q = fit_budget(waterfill(budget, &ec.lambda_g), budget);
    Ok(PrimalPoint::with_min_rate(rho, p, q, ec).expect("dimensions match channel"))
}
