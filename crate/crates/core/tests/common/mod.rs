//! Invariant checks shared by the property tests and the acceptance report.

#![allow(dead_code)]

use pdmp_core::bps::{refresh_velocity, simulate_bps, BpsConfig, StopRule};
use pdmp_core::coupling::Metric;
use pdmp_core::phase::{norm_sq, PhasePoint};
use pdmp_core::potential::{hamiltonian, make_product_potential, GaussianPotential, PowerPotential};
use pdmp_core::rhmc::{hamiltonian_flow, FlowSpec};
use pdmp_core::stats::{ks_one_sample, normal_cdf};
use pdmp_core::tuning::equivalence_constant;
use pdmp_core::RngStream;
use proptest::prelude::*;

pub type Check = Result<(), String>;

pub fn ulps(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / (f64::EPSILON * a.abs().max(b.abs()))
}

fn point(x: Vec<f64>, v: Vec<f64>) -> PhasePoint {
    PhasePoint::new(x, v).expect("matching lengths")
}

/// Without refreshment every bounce keeps `|v|` to rounding, with no drift
/// over the run.
pub fn speed_conservation(dim: usize, scale: f64, events: usize, seed: u64) -> Check {
    let p = GaussianPotential::isotropic(dim, scale).map_err(|e| e.to_string())?;
    let mut rng = RngStream::new(seed, 0);
    let z0 = point(rng.normal_vec(dim), rng.normal_vec(dim));
    let speed = z0.speed();
    let cfg = BpsConfig::new(0.0, 0.0, StopRule::Events(events));
    let path = simulate_bps(&p, &z0, &cfg, &mut rng).map_err(|e| e.to_string())?;
    for ev in &path.events {
        let err = ulps(norm_sq(&ev.state.v).sqrt(), speed);
        if err > 8.0 {
            return Err(format!("speed drifted by {err} ulps at t = {}", ev.time));
        }
    }
    Ok(())
}

/// Closed-form Gaussian flow keeps `H` within 64 ulps.
pub fn exact_flow_energy(x: Vec<f64>, v: Vec<f64>, scale: f64, t: f64) -> Check {
    let p = GaussianPotential::isotropic(x.len(), scale).map_err(|e| e.to_string())?;
    let flow = FlowSpec::exact_for(&p).ok_or("no exact flow")?;
    let z = point(x, v);
    let h0 = hamiltonian(&p, &z).map_err(|e| e.to_string())?;
    let zt = hamiltonian_flow(&p, &z, t, &flow).map_err(|e| e.to_string())?;
    let h1 = hamiltonian(&p, &zt).map_err(|e| e.to_string())?;
    let err = ulps(h0, h1);
    if err > 64.0 {
        return Err(format!("energy moved by {err} ulps ({h0} -> {h1})"));
    }
    Ok(())
}

/// Leapfrog forward for `t`, then backward, returns to the start.
pub fn leapfrog_reversibility(x: Vec<f64>, v: Vec<f64>, t: f64) -> Check {
    let p = make_product_potential(PowerPotential::new(4.0).map_err(|e| e.to_string())?, x.len())
        .map_err(|e| e.to_string())?;
    let flow = FlowSpec::Leapfrog { step: 1e-3 };
    let z = point(x, v);
    let there = hamiltonian_flow(&p, &z, t, &flow).map_err(|e| e.to_string())?;
    let back = hamiltonian_flow(&p, &there, -t, &flow).map_err(|e| e.to_string())?;
    let err = z
        .x
        .iter()
        .chain(&z.v)
        .zip(back.x.iter().chain(&back.v))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if err > 1e-10 {
        return Err(format!("round trip error {err:e}"));
    }
    Ok(())
}

/// Refreshing a standard normal velocity leaves it standard normal, with
/// lag-one correlation `alpha`.
pub fn ar_refresh_stationarity(alpha: f64, seed: u64) -> Check {
    let n = 4000;
    let dim = 3;
    let mut rng = RngStream::new(seed, 0);
    let mut after = Vec::with_capacity(n * dim);
    let mut cross = 0.0;
    for _ in 0..n {
        let v = rng.normal_vec(dim);
        let w = refresh_velocity(&v, alpha, &mut rng).map_err(|e| e.to_string())?;
        cross += v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        after.extend(w);
    }
    let total = (n * dim) as f64;
    // Both cutoffs sit near the 1e-6 tail.
    let ks = ks_one_sample(&after, normal_cdf);
    if ks > 2.7 / total.sqrt() {
        return Err(format!("KS {ks} against N(0, 1)"));
    }
    let corr = cross / total;
    if (corr - alpha).abs() > 5.0 * (1.0 + alpha * alpha).sqrt() / total.sqrt() {
        return Err(format!("lag correlation {corr} against {alpha}"));
    }
    Ok(())
}

/// The forward and adjoint forms bound each other by `C` on every pair.
pub fn metric_equivalence(a: f64, c: f64, shrink: f64, sign: f64, pairs: usize, seed: u64) -> Check {
    let b = sign * shrink * (a * c).sqrt();
    let constant = equivalence_constant(a, b, c).map_err(|e| e.to_string())?;
    let fwd = Metric::WeightedAbc { a, b, c };
    let adj = fwd.adjoint();
    let mut rng = RngStream::new(seed, 0);
    for _ in 0..pairs {
        let dim = 1 + rng.below(4);
        let dx = rng.normal_vec(dim);
        let dv = rng.normal_vec(dim);
        let f = fwd.eval_difference(&dx, &dv);
        let g = adj.eval_difference(&dx, &dv);
        let ratio = (g / f).max(f / g);
        if ratio > constant * (1.0 + 1e-9) {
            return Err(format!("ratio {ratio} exceeds C = {constant}"));
        }
    }
    // The bound is attained on the extreme direction.
    let (dx, dv) = extreme_direction(a, b, c);
    let f = fwd.eval_difference(&[dx], &[dv]);
    let g = adj.eval_difference(&[dx], &[dv]);
    let ratio = (g / f).max(f / g);
    if (ratio / constant - 1.0).abs() > 1e-6 {
        return Err(format!("extreme ratio {ratio} differs from C = {constant}"));
    }
    Ok(())
}

fn extreme_direction(a: f64, b: f64, c: f64) -> (f64, f64) {
    // Ratio of the two forms is extremal at dv = -sign(b) sqrt(a / c) dx.
    (1.0, -b.signum() * (a / c).sqrt())
}

pub fn bounded_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, dim)
}

pub fn phase_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|d| (bounded_vec(d), bounded_vec(d)))
}

pub fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

pub fn stationary_dims() -> impl Strategy<Value = usize> {
    1usize..20
}
