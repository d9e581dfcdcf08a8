//! Ellipsoid method over the three dual variables and the full primal-dual
//! solve built on it.
//!
//! The ellipsoid lives in scaled coordinates `z = (alpha, nu * P_s, mu * Q)`
//! where `Q` is the largest power the relay could harvest. In these units the
//! optimal multipliers are of order one regardless of the absolute power
//! levels, so a single default initial ellipsoid works across scenarios.

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::channel::EigenChannel;
use crate::duals::{eval_dual_with, DualEval, DualPoint, Splitting, RHO_EPS};
use crate::error::{DualError, SolverError};
use crate::rates::{harvest_sum, waterfill, PrimalPoint};
use crate::recovery::balanced_primal;

const DIM: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidState {
    pub center: Vector3<f64>,
    /// Shape matrix `P`; the ellipsoid is `{x : (x-c)' P^-1 (x-c) <= 1}`.
    pub shape: Matrix3<f64>,
    pub iter: usize,
}

impl EllipsoidState {
    pub fn new(center: Vector3<f64>, shape: Matrix3<f64>) -> Self {
        Self {
            center,
            shape,
            iter: 0,
        }
    }

    /// Width of the ellipsoid along `g`: `sqrt(g' P g)`.
    pub fn width(&self, g: &Vector3<f64>) -> f64 {
        g.dot(&(self.shape * g)).max(0.0).sqrt()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.shape.cholesky().is_some()
    }
}

/// Central-cut update keeping the half-ellipsoid `{x : g'(x - c) <= 0}`.
pub fn ellipsoid_cut(state: &EllipsoidState, g: &Vector3<f64>) -> Result<EllipsoidState, SolverError> {
    let pg = state.shape * g;
    let gpg = g.dot(&pg);
    if !(gpg > 0.0) || !gpg.is_finite() {
        return Err(SolverError::DegenerateCut(gpg));
    }
    let b = pg / gpg.sqrt();
    let center = state.center - b / (DIM + 1.0);
    let mut shape =
        (state.shape - b * b.transpose() * (2.0 / (DIM + 1.0))) * (DIM * DIM / (DIM * DIM - 1.0));
    shape = (shape + shape.transpose()) * 0.5;
    Ok(EllipsoidState {
        center,
        shape,
        iter: state.iter + 1,
    })
}

/// Determinant ratio of one central cut in three dimensions.
pub fn central_cut_volume_ratio() -> f64 {
    (DIM * DIM / (DIM * DIM - 1.0)).powi(3) * (DIM - 1.0) / (DIM + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop once the ellipsoid width along the last objective cut is below
    /// this (nats).
    pub eps0: f64,
    pub eps_rho: f64,
    pub max_iter: usize,
    /// Initial center in scaled coordinates; defaults to
    /// `(0.5, K1 / 2, K1 / 2)`.
    pub init_center: Option<[f64; 3]>,
    /// The initial ellipsoid covers `[0,1] x [0, init_radius * K1]^2` in
    /// scaled coordinates.
    pub init_radius: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps0: 1e-5,
            eps_rho: RHO_EPS,
            max_iter: 2000,
            init_center: None,
            init_radius: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub primal: PrimalPoint,
    pub dual: DualPoint,
    /// Best dual bound found, bits/s/Hz.
    pub dual_value: f64,
    /// `|dual_value - primal.rate|`.
    pub gap: f64,
    pub iters: usize,
    pub wall_time: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    Box,
    Domain,
    Objective,
}

/// One solver iteration, as written to the JSON-lines trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iter: usize,
    pub dual: DualPoint,
    /// Dual value in bits/s/Hz, absent for feasibility cuts.
    pub value: Option<f64>,
    pub cut: CutKind,
    pub width: f64,
}

/// Non-uniform split: every eigenmode gets its own ratio.
pub fn solve(ec: &EigenChannel, ps: f64, cfg: &SolverConfig) -> Result<SolveResult, SolverError> {
    run(ec, ps, cfg, Splitting::PerMode { eps: cfg.eps_rho }, &mut |_| {})
}

pub fn solve_traced(
    ec: &EigenChannel,
    ps: f64,
    cfg: &SolverConfig,
    trace: &mut dyn FnMut(&TraceEvent),
) -> Result<SolveResult, SolverError> {
    run(ec, ps, cfg, Splitting::PerMode { eps: cfg.eps_rho }, trace)
}

/// Same machinery with `rho` pinned to `rho_fixed` on every mode.
pub fn solve_fixed_rho(
    ec: &EigenChannel,
    ps: f64,
    rho_fixed: f64,
    cfg: &SolverConfig,
) -> Result<SolveResult, SolverError> {
    if !(rho_fixed > 0.0 && rho_fixed < 1.0) {
        return Err(SolverError::InvalidInput(format!(
            "fixed split ratio must lie in (0, 1), got {rho_fixed}"
        )));
    }
    run(ec, ps, cfg, Splitting::Uniform(rho_fixed), &mut |_| {})
}

struct Scaling {
    nu: f64,
    mu: f64,
}

impl Scaling {
    fn to_dual(&self, z: &Vector3<f64>) -> DualPoint {
        DualPoint::new(z[0], z[1] / self.nu, z[2] / self.mu)
    }

    /// Gradient with respect to `z` of a function with gradient `g` in
    /// `(alpha, nu, mu)`.
    fn gradient(&self, g: [f64; 3]) -> Vector3<f64> {
        Vector3::new(g[0], g[1] / self.nu, g[2] / self.mu)
    }
}

fn initial_state(ec: &EigenChannel, cfg: &SolverConfig) -> EllipsoidState {
    let k = ec.k1() as f64;
    let center = cfg
        .init_center
        .map(Vector3::from)
        .unwrap_or_else(|| Vector3::new(0.5, 0.5 * k, 0.5 * k));
    let top = cfg.init_radius * k;
    // Axis-aligned ellipsoid through the far corner of the box, scaled by
    // sqrt(3) per axis so it contains the whole box.
    let reach = |c: f64, lo: f64, hi: f64| (c - lo).abs().max((hi - c).abs());
    let axes = Vector3::new(
        reach(center[0], 0.0, 1.0),
        reach(center[1], 0.0, top),
        reach(center[2], 0.0, top),
    );
    EllipsoidState::new(center, Matrix3::from_diagonal(&axes.map(|a| DIM * a * a)))
}

fn box_normal(d: &DualPoint) -> Option<[f64; 3]> {
    if d.alpha < 0.0 {
        Some([-1.0, 0.0, 0.0])
    } else if d.alpha > 1.0 {
        Some([1.0, 0.0, 0.0])
    } else if d.nu < 0.0 {
        Some([0.0, -1.0, 0.0])
    } else if d.mu < 0.0 {
        Some([0.0, 0.0, -1.0])
    } else {
        None
    }
}

/// The raw maximizer pushed onto the budgets: `p` rescaled to `P_s`, `q`
/// rescaled to the power it harvests.
fn project(raw: &PrimalPoint, ec: &EigenChannel, ps: f64) -> PrimalPoint {
    let mut p = raw.p.clone();
    let p_sum: f64 = p.iter().sum();
    if p_sum > 0.0 {
        p.iter_mut().for_each(|x| *x *= ps / p_sum);
    }
    let budget = ec.harvest_scale() * harvest_sum(&raw.rho, &p, &ec.lambda_h);
    let mut q = raw.q.clone();
    let q_sum: f64 = q.iter().sum();
    if q_sum > 0.0 {
        q.iter_mut().for_each(|x| *x *= budget / q_sum);
    } else {
        q = waterfill(budget, &ec.lambda_g);
    }
    PrimalPoint::with_min_rate(raw.rho.clone(), p, q, ec).expect("dimensions match channel")
}

fn run(
    ec: &EigenChannel,
    ps: f64,
    cfg: &SolverConfig,
    split: Splitting,
    trace: &mut dyn FnMut(&TraceEvent),
) -> Result<SolveResult, SolverError> {
    if !(ps.is_finite() && ps > 0.0) {
        return Err(SolverError::InvalidInput(format!("source power must be positive, got {ps}")));
    }
    if ec.k1() == 0 || ec.k2() == 0 {
        return Err(SolverError::InvalidInput("channel has no active modes".into()));
    }
    let start = Instant::now();
    let init_rho = match split {
        Splitting::PerMode { .. } => 0.5,
        Splitting::Uniform(r) => r,
    };
    let h = ec.harvest_scale();
    if h <= 0.0 {
        // Nothing is harvested, the relay cannot transmit.
        let primal = PrimalPoint::zero(ec, init_rho);
        return Ok(SolveResult {
            primal,
            dual: DualPoint::new(0.0, 0.0, 0.0),
            dual_value: 0.0,
            gap: 0.0,
            iters: 0,
            wall_time: start.elapsed().as_secs_f64(),
            converged: true,
        });
    }
    let scaling = Scaling {
        nu: ps,
        mu: h * split.rho_max() * ec.lambda_h[0] * ps,
    };
    let mut state = initial_state(ec, cfg);
    let mut warm = PrimalPoint {
        rho: vec![init_rho; ec.k1()],
        p: vec![ps / ec.k1() as f64; ec.k1()],
        q: vec![0.0; ec.k2()],
        rate: 0.0,
    };
    let mut best: Option<(DualPoint, DualEval)> = None;
    let mut stopped = false;

    while state.iter < cfg.max_iter {
        let d = scaling.to_dual(&state.center);
        let (g, cut, value) = match box_normal(&d) {
            Some(n) => (scaling.gradient(n), CutKind::Box, None),
            None => match eval_dual_with(&d, ec, ps, &warm, split) {
                Err(DualError::UnboundedLagrangian { normal }) => {
                    (scaling.gradient(normal), CutKind::Domain, None)
                }
                Err(e) => return Err(e.into()),
                Ok(ev) => {
                    let g = scaling.gradient(ev.subgrad);
                    let value = ev.value;
                    warm = ev.primal.clone();
                    if best.as_ref().is_none_or(|(_, b)| value < b.value) {
                        best = Some((d, ev));
                    }
                    (g, CutKind::Objective, Some(value))
                }
            },
        };
        let width = state.width(&g);
        trace(&TraceEvent {
            iter: state.iter,
            dual: d,
            value: value.map(|v| v / std::f64::consts::LN_2),
            cut,
            width,
        });
        if cut == CutKind::Objective && (width <= cfg.eps0 || g.norm() == 0.0) {
            stopped = true;
            break;
        }
        state = ellipsoid_cut(&state, &g)?;
    }

    let Some((dual, ev)) = best else {
        return Err(SolverError::NotConverged(Box::new(SolveResult {
            primal: warm,
            dual: scaling.to_dual(&state.center),
            dual_value: f64::INFINITY,
            gap: f64::INFINITY,
            iters: state.iter,
            wall_time: start.elapsed().as_secs_f64(),
            converged: false,
        })));
    };
    let theta_hint = (dual.alpha > 0.0).then(|| dual.mu / dual.alpha);
    let balanced = balanced_primal(ec, ps, split, theta_hint);
    let projected = project(&ev.primal, ec, ps);
    let primal = if projected.rate > balanced.rate {
        projected
    } else {
        balanced
    };
    let dual_value = ev.value_bits();
    let gap = (dual_value - primal.rate).abs();
    let result = SolveResult {
        primal,
        dual,
        dual_value,
        gap,
        iters: state.iter,
        wall_time: start.elapsed().as_secs_f64(),
        converged: stopped && gap <= 10.0 * cfg.eps0,
    };
    if result.converged {
        Ok(result)
    } else {
        Err(SolverError::NotConverged(Box::new(result)))
    }
}
