//! Primal recovery from the dual solution.
//!
//! At the dual optimum the Lagrangian is linear in the power a harvesting mode
//! diverts to the energy harvester, so the closed forms do not pin that power
//! down. Recovery walks the trade-off between first-hop rate and harvested
//! power: for a harvest price `theta` (the ratio `mu / alpha`) and a power
//! price `nu'` (`nu / alpha`) the closed forms give every `(rho_i, p_i)`;
//! `nu'` is set so the source budget is met exactly and `theta` so that the
//! two hop rates balance.

use crate::channel::EigenChannel;
use crate::duals::Splitting;
use crate::rates::{first_hop_nats, harvest_sum, second_hop_nats, waterfill, PrimalPoint};

const MAX_BISECT: usize = 200;
const REL_WIDTH: f64 = 1e-15;

struct Frontier<'a> {
    ec: &'a EigenChannel,
    ps: f64,
    h: f64,
    split: Splitting,
}

struct Allocation {
    rho: Vec<f64>,
    p: Vec<f64>,
}

impl Frontier<'_> {
    /// Smallest admissible power price at harvest price `theta`.
    fn floor(&self, theta: f64) -> f64 {
        theta * self.h * self.split.rho_max() * self.ec.lambda_h[0]
    }

    /// `(rho_i, p_i)` at power price `floor + delta`.
    fn mode(&self, i: usize, theta: f64, floor: f64, delta: f64) -> (f64, f64) {
        let l = self.ec.lambda_h[i];
        let rho = match self.split {
            Splitting::Uniform(r) => r,
            Splitting::PerMode { eps } => {
                if (theta * self.h * l - floor) > delta {
                    1.0 - eps
                } else {
                    eps
                }
            }
        };
        let offset = floor - theta * self.h * rho * l;
        let den = 2.0 * (delta + offset);
        let p = (1.0 / den - 1.0 / ((1.0 - rho) * l)).max(0.0);
        (rho, p)
    }

    fn allocation_at(&self, theta: f64, floor: f64, delta: f64) -> Allocation {
        let (rho, p) = (0..self.ec.k1())
            .map(|i| self.mode(i, theta, floor, delta))
            .unzip();
        Allocation { rho, p }
    }

    fn total(&self, theta: f64, floor: f64, delta: f64) -> f64 {
        (0..self.ec.k1())
            .map(|i| self.mode(i, theta, floor, delta).1)
            .sum()
    }

    /// Allocation on the trade-off curve at harvest price `theta` that spends
    /// exactly the source budget.
    fn allocate(&self, theta: f64, delta_hint: Option<f64>) -> Allocation {
        let floor = self.floor(theta);
        let k = self.ec.k1() as f64;
        // Each p_i <= 1 / (2 delta), so this price never overspends.
        let cap = k / (2.0 * self.ps);
        let (mut lo, mut hi) = bracket_down(
            |delta| self.total(theta, floor, delta) > self.ps,
            delta_hint.filter(|d| *d > 0.0 && *d < cap).unwrap_or(cap),
            cap,
        );
        for _ in 0..MAX_BISECT {
            if hi / lo - 1.0 <= REL_WIDTH {
                break;
            }
            let mid = (lo * hi).sqrt();
            if self.total(theta, floor, mid) > self.ps {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let at_lo = self.allocation_at(theta, floor, lo);
        let mut alloc = self.allocation_at(theta, floor, hi);
        // A mode switching between the clamp boundaries inside [lo, hi] is at
        // its tie point and absorbs whatever budget is left.
        if let Some(i) = (0..alloc.rho.len()).find(|&i| alloc.rho[i] != at_lo.rho[i]) {
            let nu = theta * self.h * self.ec.lambda_h[i];
            let l = self.ec.lambda_h[i];
            let decoder = (0.5 / nu - 1.0 / l).max(0.0);
            let rest: f64 = (0..alloc.p.len())
                .filter(|&j| j != i)
                .map(|j| alloc.p[j])
                .sum();
            let p_i = self.ps - rest;
            if p_i > 0.0 {
                let eps = 1.0 - self.split.rho_max();
                alloc.p[i] = p_i;
                alloc.rho[i] = (1.0 - decoder / p_i).clamp(eps, 1.0 - eps);
            }
        }
        let total: f64 = alloc.p.iter().sum();
        if total > 0.0 {
            let s = self.ps / total;
            alloc.p.iter_mut().for_each(|p| *p *= s);
        }
        alloc
    }

    fn finish(&self, alloc: Allocation) -> PrimalPoint {
        let budget = self.h * harvest_sum(&alloc.rho, &alloc.p, &self.ec.lambda_h);
        let mut q = waterfill(budget, &self.ec.lambda_g);
        let q_sum: f64 = q.iter().sum();
        if q_sum > budget {
            let s = budget / q_sum;
            q.iter_mut().for_each(|x| *x *= s);
        }
        let mut p = alloc.p;
        let p_sum: f64 = p.iter().sum();
        if p_sum > self.ps {
            let s = self.ps / p_sum;
            p.iter_mut().for_each(|x| *x *= s);
        }
        PrimalPoint::with_min_rate(alloc.rho, p, q, self.ec).expect("dimensions match channel")
    }

    /// First-hop minus second-hop rate (nats) at harvest price `theta`.
    fn imbalance(&self, theta: f64) -> f64 {
        let a = self.allocate(theta, None);
        let r1 = first_hop_nats(&a.rho, &a.p, &self.ec.lambda_h);
        let budget = self.h * harvest_sum(&a.rho, &a.p, &self.ec.lambda_h);
        let r2 = second_hop_nats(&waterfill(budget, &self.ec.lambda_g), &self.ec.lambda_g);
        r1 - r2
    }
}

/// Shrinks `start` geometrically until `above(lo)` holds, returning
/// `(lo, hi)` with `above(lo)` and `!above(hi)`.
fn bracket_down(above: impl Fn(f64) -> bool, start: f64, cap: f64) -> (f64, f64) {
    let mut hi = start;
    if above(hi) {
        let mut lo = hi;
        hi = (hi * 2.0).min(cap);
        while above(hi) && hi < cap {
            lo = hi;
            hi = (hi * 2.0).min(cap);
        }
        return (lo, hi);
    }
    let mut lo = hi * 0.5;
    for _ in 0..4000 {
        if above(lo) || lo == 0.0 {
            break;
        }
        hi = lo;
        lo *= 0.5;
    }
    (lo, hi)
}

/// Balanced primal point for the given splitting rule. `theta_hint` seeds the
/// harvest-price search (typically `mu / alpha` from the dual solution).
pub(crate) fn balanced_primal(
    ec: &EigenChannel,
    ps: f64,
    split: Splitting,
    theta_hint: Option<f64>,
) -> PrimalPoint {
    let fr = Frontier {
        ec,
        ps,
        h: ec.harvest_scale(),
        split,
    };
    if fr.h <= 0.0 || fr.imbalance(0.0) <= 0.0 {
        // No harvest, or the first hop is the bottleneck even with every
        // decoder at full share.
        return fr.finish(fr.allocate(0.0, None));
    }
    let seed = theta_hint
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or(1.0 / (fr.h * ec.lambda_h[0] * ps));
    // F(theta) = R1 - R2 is nonincreasing; find lo with F > 0, hi with F <= 0.
    let (mut lo, mut hi);
    if fr.imbalance(seed) > 0.0 {
        lo = seed;
        hi = seed * 1.001;
        let mut found = false;
        for _ in 0..400 {
            if fr.imbalance(hi) <= 0.0 {
                found = true;
                break;
            }
            lo = hi;
            hi *= 4.0;
        }
        if !found {
            // Second hop stays the bottleneck at maximum harvest.
            return fr.finish(fr.allocate(hi, None));
        }
    } else {
        hi = seed;
        lo = seed / 1.001;
        loop {
            if fr.imbalance(lo) > 0.0 {
                break;
            }
            hi = lo;
            lo /= 4.0;
            if lo < f64::MIN_POSITIVE * 1e10 {
                lo = 0.0;
                break;
            }
        }
    }
    for _ in 0..MAX_BISECT {
        if lo > 0.0 && hi / lo - 1.0 <= 1e-14 {
            break;
        }
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * hi };
        if mid <= lo || mid >= hi {
            break;
        }
        if fr.imbalance(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = fr.finish(fr.allocate(lo, None));
    let b = fr.finish(fr.allocate(hi, None));
    if b.rate > a.rate {
        b
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duals::RHO_EPS;
    use crate::rates::check_feasibility;

    #[test]
    fn siso_balance_matches_closed_form() {
        for (lh, lg, ps) in [(1.0, 1.0, 1.0), (3.0, 0.5, 2.0), (0.2, 7.0, 10.0)] {
            let ec = EigenChannel::from_gains(vec![lh], vec![lg]).unwrap();
            let pt = balanced_primal(&ec, ps, Splitting::PerMode { eps: RHO_EPS }, None);
            let rho = 1.0 / (1.0 + lg);
            let rate = 0.5 * (1.0 + ps * lh * lg / (1.0 + lg)).log2();
            assert!((pt.rho[0] - rho).abs() < 1e-9, "{} vs {rho}", pt.rho[0]);
            assert!((pt.rate - rate).abs() < 1e-12);
            assert!(check_feasibility(&pt, &ec, ps).is_feasible());
        }
    }

    #[test]
    fn uniform_siso_with_pinned_ratio() {
        let ec = EigenChannel::from_gains(vec![2.0], vec![1.0]).unwrap();
        let pt = balanced_primal(&ec, 1.0, Splitting::Uniform(0.25), None);
        // p = P_s, R1 = 0.5 log2(1 + 0.75 * 2), R2 = 0.5 log2(1 + 0.25 * 2)
        assert!((pt.p[0] - 1.0).abs() < 1e-12);
        assert!((pt.rate - 0.5 * 1.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn budgets_are_spent_exactly() {
        let ec = EigenChannel::from_gains(vec![5.0, 2.0, 0.3], vec![4.0, 1.0]).unwrap();
        let pt = balanced_primal(&ec, 3.0, Splitting::PerMode { eps: RHO_EPS }, None);
        let rep = check_feasibility(&pt, &ec, 3.0);
        assert!(rep.is_feasible(), "{rep:?}");
        assert!(rep.source_power.abs() < 1e-12);
        assert!(rep.relay_power.abs() < 1e-9);
    }
}
