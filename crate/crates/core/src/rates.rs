//! Signal-model quantities in the eigenmode domain: hop rates, harvested
//! power, water-filling, precoder reconstruction and constraint residuals.
//!
//! Rates are reported in bits/s/Hz and include the half-duplex factor 1/2.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::EigenChannel;
use crate::error::RateError;

/// Absolute tolerance for every residual in [`FeasibilityReport`].
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A candidate allocation: per-mode split ratios, source and relay powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalPoint {
    pub rho: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// End-to-end rate in bits/s/Hz.
    pub rate: f64,
}

impl PrimalPoint {
    /// Builds a point and sets `rate` to the smaller recomputed hop rate.
    pub fn with_min_rate(
        rho: Vec<f64>,
        p: Vec<f64>,
        q: Vec<f64>,
        ec: &EigenChannel,
    ) -> Result<Self, RateError> {
        let mut pt = Self {
            rho,
            p,
            q,
            rate: 0.0,
        };
        let (r1, r2) = hop_rates(&pt, ec)?;
        pt.rate = r1.min(r2);
        Ok(pt)
    }

    pub fn zero(ec: &EigenChannel, rho: f64) -> Self {
        Self {
            rho: vec![rho; ec.k1()],
            p: vec![0.0; ec.k1()],
            q: vec![0.0; ec.k2()],
            rate: 0.0,
        }
    }
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), RateError> {
    if got == expected {
        Ok(())
    } else {
        Err(RateError::DimensionMismatch {
            what,
            got,
            expected,
        })
    }
}

fn check_dims(pt: &PrimalPoint, ec: &EigenChannel) -> Result<(), RateError> {
    check_len("rho", pt.rho.len(), ec.k1())?;
    check_len("p", pt.p.len(), ec.k1())?;
    check_len("q", pt.q.len(), ec.k2())
}

/// First-hop rate in nats (with the 1/2 factor).
pub(crate) fn first_hop_nats(rho: &[f64], p: &[f64], lambda_h: &[f64]) -> f64 {
    0.5 * rho
        .iter()
        .zip(p)
        .zip(lambda_h)
        .map(|((r, p), l)| ((1.0 - r) * p * l).ln_1p())
        .sum::<f64>()
}

/// Second-hop rate in nats (with the 1/2 factor).
pub(crate) fn second_hop_nats(q: &[f64], lambda_g: &[f64]) -> f64 {
    0.5 * q
        .iter()
        .zip(lambda_g)
        .map(|(q, l)| (q * l).ln_1p())
        .sum::<f64>()
}

/// `sum_i rho_i p_i lambda_h_i`, the harvested power before scaling.
pub(crate) fn harvest_sum(rho: &[f64], p: &[f64], lambda_h: &[f64]) -> f64 {
    rho.iter()
        .zip(p)
        .zip(lambda_h)
        .map(|((r, p), l)| r * p * l)
        .sum()
}

/// Per-hop achievable rates `(r1, r2)` in bits/s/Hz.
pub fn hop_rates(pt: &PrimalPoint, ec: &EigenChannel) -> Result<(f64, f64), RateError> {
    check_dims(pt, ec)?;
    Ok((
        first_hop_nats(&pt.rho, &pt.p, &ec.lambda_h) / std::f64::consts::LN_2,
        second_hop_nats(&pt.q, &ec.lambda_g) / std::f64::consts::LN_2,
    ))
}

/// Power harvested at the relay, which is also the relay's transmit budget
/// over a unit half slot.
pub fn harvested_power(pt: &PrimalPoint, ec: &EigenChannel, eta: f64) -> Result<f64, RateError> {
    check_len("rho", pt.rho.len(), ec.k1())?;
    check_len("p", pt.p.len(), ec.k1())?;
    Ok(eta * ec.sigma_r_sq * harvest_sum(&pt.rho, &pt.p, &ec.lambda_h))
}

/// Water-filling over parallel channels with the given gains.
///
/// Returns `q_i = (w - 1/gain_i)^+` with `sum q_i = budget`.
pub fn waterfill(budget: f64, gains: &[f64]) -> Vec<f64> {
    waterfill_with_level(budget, gains).0
}

/// Like [`waterfill`], also returning the water level `w`.
pub fn waterfill_with_level(budget: f64, gains: &[f64]) -> (Vec<f64>, f64) {
    if !(budget > 0.0) || gains.is_empty() {
        return (vec![0.0; gains.len()], 0.0);
    }
    let inv: Vec<f64> = gains
        .iter()
        .map(|&g| if g > 0.0 { 1.0 / g } else { f64::INFINITY })
        .collect();
    let filled = |w: f64| inv.iter().map(|&v| (w - v).max(0.0)).sum::<f64>();
    let finite_max = inv
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max);
    let mut lo = inv.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = budget + finite_max;
    let tol = 1e-12 * budget.max(1.0);
    let mut w = 0.5 * (lo + hi);
    for _ in 0..200 {
        w = 0.5 * (lo + hi);
        let s = filled(w);
        if (s - budget).abs() <= tol {
            break;
        }
        if s > budget {
            hi = w;
        } else {
            lo = w;
        }
    }
    // With the active set known, the level has a closed form.
    let active: Vec<f64> = inv.iter().copied().filter(|&v| v < w).collect();
    if !active.is_empty() {
        let exact = (budget + active.iter().sum::<f64>()) / active.len() as f64;
        let consistent = inv
            .iter()
            .all(|&v| (v < w) == (v < exact) || (v - exact).abs() <= tol);
        if consistent {
            w = exact;
        }
    }
    (inv.iter().map(|&v| (w - v).max(0.0)).collect(), w)
}

/// Source and relay transmit covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoders {
    pub w_s: DMatrix<Complex64>,
    pub w_r: DMatrix<Complex64>,
}

fn eigen_to_covariance(v: &DMatrix<Complex64>, powers: &[f64]) -> DMatrix<Complex64> {
    let mut scaled = v.clone();
    for (j, &pw) in powers.iter().enumerate() {
        scaled.column_mut(j).scale_mut(pw);
    }
    scaled * v.adjoint()
}

/// `W_s = V_H diag(p) V_H^*`, `W_r = V_G diag(q) V_G^*`.
pub fn reconstruct_precoders(pt: &PrimalPoint, ec: &EigenChannel) -> Result<Precoders, RateError> {
    check_dims(pt, ec)?;
    check_len("v_h columns", ec.v_h.ncols(), ec.k1())?;
    check_len("v_g columns", ec.v_g.ncols(), ec.k2())?;
    Ok(Precoders {
        w_s: eigen_to_covariance(&ec.v_h, &pt.p),
        w_r: eigen_to_covariance(&ec.v_g, &pt.q),
    })
}

/// Signed residuals of every constraint; positive means violated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `R - R1`
    pub first_hop_rate: f64,
    /// `R - R2`
    pub second_hop_rate: f64,
    /// `sum p - P_s`
    pub source_power: f64,
    /// `sum q - harvested power`
    pub relay_power: f64,
    /// `max_i max(rho_i - 1, -rho_i)`
    pub rho_box: f64,
    /// `max_i -p_i`
    pub p_nonneg: f64,
    /// `max_i -q_i`
    pub q_nonneg: f64,
}

impl FeasibilityReport {
    pub fn max_violation(&self) -> f64 {
        [
            self.first_hop_rate,
            self.second_hop_rate,
            self.source_power,
            self.relay_power,
            self.rho_box,
            self.p_nonneg,
            self.q_nonneg,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_violation() <= FEASIBILITY_TOL
    }
}

/// Constraint residuals of `pt` for source budget `ps`. Mismatched vector
/// lengths report infinite residuals.
pub fn check_feasibility(pt: &PrimalPoint, ec: &EigenChannel, ps: f64) -> FeasibilityReport {
    let Ok((r1, r2)) = hop_rates(pt, ec) else {
        let inf = f64::INFINITY;
        return FeasibilityReport {
            first_hop_rate: inf,
            second_hop_rate: inf,
            source_power: inf,
            relay_power: inf,
            rho_box: inf,
            p_nonneg: inf,
            q_nonneg: inf,
        };
    };
    let harvest = ec.harvest_scale() * harvest_sum(&pt.rho, &pt.p, &ec.lambda_h);
    let worst = |xs: &[f64], f: &dyn Fn(f64) -> f64| {
        xs.iter().map(|&x| f(x)).fold(f64::NEG_INFINITY, f64::max)
    };
    FeasibilityReport {
        first_hop_rate: pt.rate - r1,
        second_hop_rate: pt.rate - r2,
        source_power: pt.p.iter().sum::<f64>() - ps,
        relay_power: pt.q.iter().sum::<f64>() - harvest,
        rho_box: worst(&pt.rho, &|r| (r - 1.0).max(-r)),
        p_nonneg: worst(&pt.p, &|p| -p),
        q_nonneg: worst(&pt.q, &|q| -q),
    }
}
