#![allow(dead_code)]

use rand::Rng;
use serde_json::Value;
use swipt_relay::duals::DualPoint;
use swipt_relay::EigenChannel;

pub const LN2: f64 = std::f64::consts::LN_2;

pub fn half_log2(x: f64) -> f64 {
    0.5 * (1.0 + x).log2()
}

/// SISO optimum derived by balancing the hops: with `q = h rho P lambda_h`
/// the rates meet at `rho = 1 / (1 + h lambda_g)`. Both rates are monotone in
/// `rho`, so clamping the balance point to the box keeps it optimal.
pub fn siso_optimum(lh: f64, lg: f64, ps: f64, h: f64, eps: f64) -> (f64, f64) {
    let rho = (1.0 / (1.0 + h * lg)).clamp(eps, 1.0 - eps);
    let r1 = half_log2((1.0 - rho) * ps * lh);
    let r2 = half_log2(h * rho * ps * lh * lg);
    (rho, r1.min(r2))
}

/// Brute-force SISO maximizer over an even grid of `rho` (full budgets).
pub fn siso_grid(lh: f64, lg: f64, ps: f64, h: f64, points: usize) -> (f64, f64) {
    (0..points)
        .map(|k| {
            let rho = k as f64 / (points - 1) as f64;
            let r = half_log2((1.0 - rho) * ps * lh).min(half_log2(h * rho * ps * lh * lg));
            (rho, r)
        })
        .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
}

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

pub fn random_channel<R: Rng>(rng: &mut R, max_k1: usize, max_k2: usize) -> EigenChannel {
    let k1 = rng.gen_range(1..=max_k1);
    let k2 = rng.gen_range(1..=max_k2);
    let lh = (0..k1).map(|_| log_uniform(rng, 0.05, 20.0)).collect();
    let lg = (0..k2).map(|_| log_uniform(rng, 0.05, 20.0)).collect();
    let eta = rng.gen_range(0.2..=1.0);
    EigenChannel::from_gains(lh, lg).unwrap().with_eta(eta)
}

/// A dual point inside the region where the Lagrangian is bounded.
pub fn random_dual<R: Rng>(rng: &mut R, ec: &EigenChannel, rho_max: f64) -> DualPoint {
    let alpha = rng.gen_range(0.0..=1.0);
    let mu = log_uniform(rng, 1e-2, 5.0);
    let floor = mu * ec.harvest_scale() * rho_max * ec.lambda_h[0];
    let nu = floor + log_uniform(rng, 1e-2, 5.0);
    DualPoint::new(alpha, nu, mu)
}

/// Lagrangian in nats at an arbitrary primal point, written out directly.
pub fn lagrangian(d: &DualPoint, ec: &EigenChannel, ps: f64, rho: &[f64], p: &[f64], q: &[f64]) -> f64 {
    let r1: f64 = rho
        .iter()
        .zip(p)
        .zip(&ec.lambda_h)
        .map(|((r, p), l)| 0.5 * (1.0 + (1.0 - r) * p * l).ln())
        .sum();
    let r2: f64 = q.iter().zip(&ec.lambda_g).map(|(q, l)| 0.5 * (1.0 + q * l).ln()).sum();
    let harvest: f64 = ec.harvest_scale()
        * rho
            .iter()
            .zip(p)
            .zip(&ec.lambda_h)
            .map(|((r, p), l)| r * p * l)
            .sum::<f64>();
    d.alpha * r1 + (1.0 - d.alpha) * r2 - d.nu * (p.iter().sum::<f64>() - ps) - d.mu * (q.iter().sum::<f64>() - harvest)
}

/// Removes every timing field so outputs can be compared byte for byte.
pub fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !k.contains("wall_time"));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

pub fn schema(name: &str) -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/");
    let text = std::fs::read_to_string(format!("{path}{name}")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn validate(schema_name: &str, instance: &Value) -> Result<(), String> {
    let schema = schema(schema_name);
    let compiled = jsonschema::JSONSchema::compile(&schema).map_err(|e| e.to_string())?;
    let result = compiled.validate(instance);
    match result {
        Ok(()) => Ok(()),
        Err(errors) => Err(errors.map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
    }
}
