//! Lagrangian dual of the rate problem: closed-form dual-to-primal maps, the
//! dual function and its subgradient.
//!
//! The closed forms are stationary points of a Lagrangian whose hop rates are
//! measured in nats, so [`DualEval::value`] and the first subgradient entry are
//! in nats as well. [`DualEval::value_bits`] converts the bound to bits/s/Hz.
//! Harvested power carries the channel's `eta * sigma_r^2` factor, written `h`
//! below; with unit noise and efficiency `h = 1`.

use serde::{Deserialize, Serialize};

use crate::channel::EigenChannel;
use crate::error::DualError;
use crate::rates::{first_hop_nats, harvest_sum, second_hop_nats, PrimalPoint};

/// Clamp margin for split ratios: `rho` stays in `[RHO_EPS, 1 - RHO_EPS]`.
pub const RHO_EPS: f64 = 1e-6;

/// Multipliers of the first-hop rate (`alpha`), source power (`nu`) and relay
/// power (`mu`) constraints. The second-hop multiplier is `1 - alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub alpha: f64,
    pub nu: f64,
    pub mu: f64,
}

impl DualPoint {
    pub fn new(alpha: f64, nu: f64, mu: f64) -> Self {
        Self { alpha, nu, mu }
    }

    pub fn in_box(&self) -> bool {
        (0.0..=1.0).contains(&self.alpha) && self.nu >= 0.0 && self.mu >= 0.0
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.alpha, self.nu, self.mu]
    }
}

/// How split ratios are chosen when maximizing the Lagrangian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Splitting {
    /// One ratio per eigenmode, clamped to `[eps, 1 - eps]`.
    PerMode { eps: f64 },
    /// A single ratio pinned on every mode.
    Uniform(f64),
}

impl Splitting {
    /// Largest split ratio any mode can take.
    pub fn rho_max(&self) -> f64 {
        match *self {
            Splitting::PerMode { eps } => 1.0 - eps,
            Splitting::Uniform(rho) => rho,
        }
    }
}

/// Dual function value, subgradient and the Lagrangian maximizer behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEval {
    /// `g(alpha, nu, mu)` in nats.
    pub value: f64,
    /// `(d alpha, d nu, d mu)`; the first entry is in nats.
    pub subgrad: [f64; 3],
    pub primal: PrimalPoint,
}

impl DualEval {
    pub fn value_bits(&self) -> f64 {
        self.value / std::f64::consts::LN_2
    }
}

/// Source powers from the dual point at fixed split ratios:
/// `p_i = (alpha / (2 nu - 2 mu h rho_i lambda_i) - 1 / ((1 - rho_i) lambda_i))^+`.
pub fn p_from_dual(d: &DualPoint, rho: &[f64], ec: &EigenChannel) -> Result<Vec<f64>, DualError> {
    let h = ec.harvest_scale();
    rho.iter()
        .zip(&ec.lambda_h)
        .map(|(&r, &l)| mode_power(d, h, l, r))
        .collect()
}

fn mode_power(d: &DualPoint, h: f64, lambda: f64, rho: f64) -> Result<f64, DualError> {
    let den = 2.0 * d.nu - 2.0 * d.mu * h * rho * lambda;
    if d.alpha == 0.0 && den >= 0.0 {
        return Ok(0.0);
    }
    if den <= 0.0 {
        return Err(DualError::UnboundedLagrangian {
            normal: [0.0, -1.0, h * rho * lambda],
        });
    }
    Ok((d.alpha / den - 1.0 / ((1.0 - rho) * lambda)).max(0.0))
}

/// Relay powers: water-filling with the common level `(1 - alpha) / (2 mu)`.
pub fn q_from_dual(d: &DualPoint, ec: &EigenChannel) -> Result<Vec<f64>, DualError> {
    if d.alpha >= 1.0 {
        return Ok(vec![0.0; ec.k2()]);
    }
    if d.mu <= 0.0 {
        return Err(DualError::UnboundedLagrangian {
            normal: [0.0, 0.0, -1.0],
        });
    }
    let level = (1.0 - d.alpha) / (2.0 * d.mu);
    Ok(ec
        .lambda_g
        .iter()
        .map(|&l| (level - 1.0 / l).max(0.0))
        .collect())
}

/// Split ratios from the dual point at fixed source powers,
/// `rho_i = 1 - (alpha / (2 mu h) - 1) / (p_i lambda_i)` clamped to
/// `[eps, 1 - eps]`. Modes carrying no power are set to harvest only.
pub fn rho_from_dual(d: &DualPoint, p: &[f64], ec: &EigenChannel, eps: f64) -> Vec<f64> {
    let mu_h = d.mu * ec.harvest_scale();
    p.iter()
        .zip(&ec.lambda_h)
        .map(|(&p, &l)| {
            if p <= 0.0 {
                1.0 - eps
            } else if mu_h <= 0.0 {
                // Harvesting earns nothing, so the decoder takes everything.
                eps
            } else {
                let raw = 1.0 - (d.alpha / (2.0 * mu_h) - 1.0) / (p * l);
                raw.clamp(eps, 1.0 - eps)
            }
        })
        .collect()
}

/// Lagrangian terms contributed by one S-R eigenmode.
fn mode_lagrangian(d: &DualPoint, h: f64, lambda: f64, rho: f64, p: f64) -> f64 {
    0.5 * d.alpha * ((1.0 - rho) * p * lambda).ln_1p() - d.nu * p + d.mu * h * rho * p * lambda
}

/// Checks that the Lagrangian is bounded above at `d`; otherwise returns the
/// normal of the violated domain constraint.
pub(crate) fn check_domain(
    d: &DualPoint,
    ec: &EigenChannel,
    splitting: Splitting,
) -> Result<(), DualError> {
    if !d.in_box() {
        return Err(DualError::OutsideBox);
    }
    let slope = ec.harvest_scale() * splitting.rho_max() * ec.lambda_h[0];
    let harvest_value = d.mu * slope;
    if harvest_value > d.nu || (harvest_value == d.nu && d.alpha > 0.0) {
        return Err(DualError::UnboundedLagrangian {
            normal: [0.0, -1.0, slope],
        });
    }
    if d.alpha < 1.0 && d.mu <= 0.0 {
        return Err(DualError::UnboundedLagrangian {
            normal: [0.0, 0.0, -1.0],
        });
    }
    Ok(())
}

/// Exact per-mode maximizer of the Lagrangian over `rho` in `[eps, 1 - eps]`.
///
/// At fixed decoder power the Lagrangian is linear in the harvested power, so
/// the maximum sits at a clamp boundary; the swept candidate is kept when it
/// does at least as well.
fn best_split(
    d: &DualPoint,
    h: f64,
    lambda: f64,
    eps: f64,
    swept: (f64, f64),
) -> Result<(f64, f64), DualError> {
    let mut best = swept;
    let mut best_val = mode_lagrangian(d, h, lambda, swept.0, swept.1);
    for rho in [eps, 1.0 - eps] {
        let p = mode_power(d, h, lambda, rho)?;
        let val = mode_lagrangian(d, h, lambda, rho, p);
        if val > best_val {
            best = (rho, p);
            best_val = val;
        }
    }
    Ok(best)
}

/// Evaluates the dual function at `d` with per-mode splitting.
///
/// One closed-form sweep from the warm start (`rho` from the warm powers, then
/// `p` from that `rho`), followed by an exact per-mode comparison against the
/// clamp boundaries, then `q` by its closed form.
pub fn eval_dual(
    d: &DualPoint,
    ec: &EigenChannel,
    ps: f64,
    warm: &PrimalPoint,
    eps: f64,
) -> Result<DualEval, DualError> {
    eval_dual_with(d, ec, ps, warm, Splitting::PerMode { eps })
}

pub fn eval_dual_with(
    d: &DualPoint,
    ec: &EigenChannel,
    ps: f64,
    warm: &PrimalPoint,
    splitting: Splitting,
) -> Result<DualEval, DualError> {
    check_domain(d, ec, splitting)?;
    let h = ec.harvest_scale();
    let (rho, p) = match splitting {
        Splitting::Uniform(r) => {
            let rho = vec![r; ec.k1()];
            let p = p_from_dual(d, &rho, ec)?;
            (rho, p)
        }
        Splitting::PerMode { eps } => {
            let warm_p: Vec<f64> = if warm.p.len() == ec.k1() {
                warm.p.clone()
            } else {
                vec![ps / ec.k1() as f64; ec.k1()]
            };
            let rho = rho_from_dual(d, &warm_p, ec, eps);
            let p = p_from_dual(d, &rho, ec)?;
            let mut rho_best = Vec::with_capacity(ec.k1());
            let mut p_best = Vec::with_capacity(ec.k1());
            for ((&r, &pw), &l) in rho.iter().zip(&p).zip(&ec.lambda_h) {
                let (r, pw) = best_split(d, h, l, eps, (r, pw))?;
                rho_best.push(r);
                p_best.push(pw);
            }
            (rho_best, p_best)
        }
    };
    let q = q_from_dual(d, ec)?;

    let r1 = first_hop_nats(&rho, &p, &ec.lambda_h);
    let r2 = second_hop_nats(&q, &ec.lambda_g);
    let p_sum: f64 = p.iter().sum();
    let q_sum: f64 = q.iter().sum();
    let harvest = h * harvest_sum(&rho, &p, &ec.lambda_h);
    let value = d.alpha * r1 + (1.0 - d.alpha) * r2 - d.nu * (p_sum - ps) - d.mu * (q_sum - harvest);
    let subgrad = [r1 - r2, ps - p_sum, harvest - q_sum];
    let rate = r1.min(r2) / std::f64::consts::LN_2;
    Ok(DualEval {
        value,
        subgrad,
        primal: PrimalPoint { rho, p, q, rate },
    })
}
