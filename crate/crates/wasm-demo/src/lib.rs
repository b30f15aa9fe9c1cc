//! Browser bindings: BPS and RHMC trajectories side by side, tuning
//! certificates, and the decay of coupled RHMC pairs.

use pdmp_core::bps::{simulate_bps, BpsConfig, StopRule};
use pdmp_core::coupling::{couple_ensemble, summarize, Metric};
use pdmp_core::path::{eval_path, EventKind, PathSkeleton};
use pdmp_core::potential::{sample_stationary, GaussianPotential};
use pdmp_core::rhmc::{simulate_rhmc, FlowSpec, RhmcConfig};
use pdmp_core::tuning::{tune_gaussian, tune_wasserstein, verify_hypoco_certificate};
use pdmp_core::RngStream;
use wasm_bindgen::prelude::*;

fn js(e: pdmp_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn first_two(path: &PathSkeleton, points: usize, out: &mut Vec<f64>) -> Result<(), JsError> {
    let end = path.end_time();
    for k in 0..points {
        let t = path.t0 + (end - path.t0) * k as f64 / (points - 1) as f64;
        let z = eval_path(path, t).map_err(js)?;
        out.push(z.x[0]);
        out.push(*z.x.get(1).unwrap_or(&0.0));
    }
    Ok(())
}

/// Two trajectories from the same start on the standard Gaussian in `d`
/// dimensions, sampled at `points` equally spaced times in `[0, horizon]`.
/// Layout: `[bounces, refreshes_bps, refreshes_rhmc]`, then `points`
/// `(x1, x2)` pairs for BPS followed by `points` pairs for RHMC.
#[wasm_bindgen]
pub fn sample_paths(d: usize, lambda_ref: f64, horizon: f64, seed: u64, points: usize) -> Result<Vec<f64>, JsError> {
    if d == 0 || points < 2 {
        return Err(JsError::new("need d >= 1 and at least two points"));
    }
    let p = GaussianPotential::standard(d);
    let mut rng = RngStream::new(seed, 0);
    let z0 = sample_stationary(&p, &mut rng).map_err(js)?;
    let bps = simulate_bps(&p, &z0, &BpsConfig::new(lambda_ref, 0.0, StopRule::Horizon(horizon)), &mut rng)
        .map_err(js)?;
    let cfg = RhmcConfig {
        lambda_ref,
        alpha: 0.0,
        stop: StopRule::Horizon(horizon),
        flow: FlowSpec::exact_for(&p).expect("Gaussian target"),
    };
    let rhmc = simulate_rhmc(&p, &z0, &cfg, &mut rng).map_err(js)?;
    let mut out = vec![
        bps.count(EventKind::Bounce) as f64,
        bps.count(EventKind::Refresh) as f64,
        rhmc.count(EventKind::Refresh) as f64,
    ];
    first_two(&bps, points, &mut out)?;
    first_two(&rhmc, points, &mut out)?;
    Ok(out)
}

/// Certificate for `(m, M, alpha)` as JSON text. The log-concave family also
/// carries the hypocoercive margins.
#[wasm_bindgen]
pub fn certify(m: f64, big_m: f64, alpha: f64, gaussian: bool) -> Result<String, JsError> {
    if gaussian {
        return Ok(tune_gaussian(m, alpha).map_err(js)?.to_json().to_string());
    }
    let mut v = tune_wasserstein(m, big_m, alpha).map_err(js)?.to_json();
    let h = verify_hypoco_certificate(m, big_m, alpha).map_err(js)?;
    let margins: serde_json::Map<String, serde_json::Value> =
        h.margins.iter().map(|g| (g.name.to_string(), g.value.into())).collect();
    v["hypocoercive"] = serde_json::json!({ "certified": h.certified, "margins": margins });
    Ok(v.to_string())
}

/// Mean squared coupling distance of `pairs` RHMC pairs on the standard
/// Gaussian in two dimensions, under the Gaussian tuning at `alpha`.
/// Layout: `[mu, lambda_ref]`, then `(t, mean d2)` pairs every 0.1.
#[wasm_bindgen]
pub fn coupling_decay(alpha: f64, pairs: usize, horizon: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let p = GaussianPotential::standard(2);
    let cert = tune_gaussian(1.0, alpha).map_err(js)?;
    let cfg = RhmcConfig {
        lambda_ref: cert.lambda_ref,
        alpha,
        stop: StopRule::Horizon(horizon),
        flow: FlowSpec::exact_for(&p).expect("Gaussian target"),
    };
    let metric = Metric::BlockGaussian {
        a: cert.a,
        b: cert.b,
        c: cert.c,
        precision: p.form().clone(),
    };
    let traces = couple_ensemble(&p, &cfg, &metric, 0.1, pairs, seed, 0).map_err(js)?;
    let summary = summarize(&traces).map_err(js)?;
    let mut out = vec![cert.mu, cert.lambda_ref];
    for (t, m) in summary.times.iter().zip(&summary.mean_d2) {
        out.push(*t);
        out.push(*m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_layout() {
        let out = sample_paths(5, 1.0, 10.0, 3, 50).unwrap();
        assert_eq!(out.len(), 3 + 4 * 50);
        // same start for both processes
        assert_eq!(out[3], out[3 + 100]);
        assert!(out[0] > 0.0);
    }

    #[test]
    fn certificate_json() {
        let text = certify(1.0, 1.0, 0.0, true).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["lambda_ref"].as_f64(), Some(2.0));
        let text = certify(0.1, 1.0, 0.5, false).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["hypocoercive"]["certified"], serde_json::Value::Bool(true));
    }

    #[test]
    fn decay_is_decreasing_on_average() {
        let out = coupling_decay(0.0, 200, 5.0, 1).unwrap();
        assert!((out[0] - 1.0 / 3.0).abs() < 1e-12);
        let first = out[3];
        let last = out[out.len() - 1];
        assert!(last < 0.1 * first);
    }
}
