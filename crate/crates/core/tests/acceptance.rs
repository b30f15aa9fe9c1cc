//! One PASS/FAIL line per acceptance criterion. `ACCEPTANCE_ONLY=3,5`
//! restricts the run to the listed criteria.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::*;
use pdmp_core::bps::{sample_bounce_time_gaussian, sample_bounce_time_thinning, simulate_bps, BpsConfig, StopRule};
use pdmp_core::coupling::{couple_ensemble, envelope_check, fit_contraction_rate, FitOptions, Metric};
use pdmp_core::diagnostics::{
    realized_bounce_rate, run_scaling_study, weak_convergence_distance, LambdaPolicy, ScalingOptions, WeakLimitOptions,
};
use pdmp_core::potential::{sample_stationary, GaussianPotential};
use pdmp_core::rhmc::{FlowSpec, RhmcConfig};
use pdmp_core::stats::ks_two_sample;
use pdmp_core::testfn::TestFunction;
use pdmp_core::tuning::{
    estimate_lambda_b, gamma_ratio, gamma_ratio_check, lambda_b_bounds, tune_gaussian, tune_wasserstein,
    verify_hypoco_certificate, verify_wasserstein_inequalities,
};
use pdmp_core::RngStream;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestRunner};

type Outcome = Result<String, String>;

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{what} = {got:.15} expected {want:.15}"))
    }
}

fn tuning_formulas() -> Outcome {
    let w = tune_wasserstein(1.0, 1.0, 0.0).map_err(|e| e.to_string())?;
    close(w.lambda_ref, 3.0 / 2f64.sqrt(), 1e-12, "lambda_ref")?;
    close(w.mu, 1.0 / 2f64.sqrt(), 1e-12, "mu")?;
    close(w.equivalence, 3.0, 1e-12, "C")?;
    let g = tune_gaussian(1.0, 0.0).map_err(|e| e.to_string())?;
    close(g.lambda_ref, 2.0, 1e-12, "gaussian lambda_ref")?;
    close(g.mu, 1.0 / 3.0, 1e-12, "gaussian mu")?;
    if !(w.certified && g.certified) {
        return Err("certificate not certified".into());
    }
    Ok(format!(
        "lambda_ref={:.12} mu={:.12} C={:.12}; gaussian lambda_ref={:.12} mu={:.12}",
        w.lambda_ref, w.mu, w.equivalence, g.lambda_ref, g.mu
    ))
}

fn certificate_grid() -> Outcome {
    let n_ratio = 100;
    let n_scale = 100;
    let n_alpha = 20;
    let ratio = |i: usize| 10f64.powf(-3.0 + 3.0 * i as f64 / (n_ratio - 1) as f64);
    let scale = |j: usize| 10f64.powf(-2.0 + 4.0 * j as f64 / (n_scale - 1) as f64);
    let alpha = |k: usize| 0.99 * k as f64 / (n_alpha - 1) as f64;
    let mut worst_w = f64::INFINITY;
    let mut worst_h = f64::INFINITY;
    let mut failures = 0usize;
    for i in 0..n_ratio {
        for k in 0..n_alpha {
            // The hypocoercive check rescales to M = 1 internally, so its
            // margins only depend on (m / M, alpha).
            let h = verify_hypoco_certificate(ratio(i), 1.0, alpha(k)).map_err(|e| e.to_string())?;
            worst_h = worst_h.min(h.min_margin);
            failures += usize::from(!h.certified);
            for j in 0..n_scale {
                let big_m = scale(j);
                let m = ratio(i) * big_m;
                let c = tune_wasserstein(m, big_m, alpha(k)).map_err(|e| e.to_string())?;
                let (ok, margin) =
                    verify_wasserstein_inequalities(m, big_m, alpha(k), c.lambda_ref, c.mu, c.a, c.b, c.c);
                worst_w = worst_w.min(margin);
                failures += usize::from(!ok);
            }
        }
    }
    // Spot check that the scale invariance holds for the full report.
    for j in [0, n_scale / 2, n_scale - 1] {
        let big_m = scale(j);
        let h = verify_hypoco_certificate(0.01 * big_m, big_m, 0.5).map_err(|e| e.to_string())?;
        worst_h = worst_h.min(h.min_margin);
        failures += usize::from(!h.certified);
    }
    let msg = format!(
        "{} points, worst wasserstein margin {worst_w:.3e}, worst hypocoercive margin {worst_h:.3e}",
        n_ratio * n_scale * n_alpha
    );
    if failures == 0 {
        Ok(msg)
    } else {
        Err(format!("{failures} failures; {msg}"))
    }
}

fn bps_bounce_rate(d: usize, events: usize, seed: u64) -> Result<(f64, f64), String> {
    let p = GaussianPotential::standard(d);
    let mut rng = RngStream::new(seed, d as u64);
    let z0 = sample_stationary(&p, &mut rng).map_err(|e| e.to_string())?;
    let cfg = BpsConfig::new(1.0, 0.0, StopRule::Events(events));
    let path = simulate_bps(&p, &z0, &cfg, &mut rng).map_err(|e| e.to_string())?;
    realized_bounce_rate(&path, 50).map_err(|e| e.to_string())
}

fn bounce_rate_bracket() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut rng = RngStream::new(3, 0);
    for d in [1usize, 10, 100] {
        let (lo, hi) = lambda_b_bounds(1.0, 1.0, d).map_err(|e| e.to_string())?;
        let (est, se) = estimate_lambda_b(&GaussianPotential::standard(d), 1_000_000, &mut rng)
            .map_err(|e| e.to_string())?;
        let (rate, rate_se) = bps_bounce_rate(d, 100_000, 3)?;
        let inside = |x: f64, s: f64| x >= lo - 3.0 * s && x <= hi + 3.0 * s;
        ok &= inside(est, se) && inside(rate, rate_se);
        if d == 1 {
            let pi_target = 1.0 / std::f64::consts::PI;
            ok &= (est - pi_target).abs() <= 3.0 * se;
        }
        parts.push(format!(
            "d={d}: [{lo:.6}, {hi:.6}] mc={est:.6}±{se:.1e} bps={rate:.6}±{rate_se:.1e}"
        ));
    }
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sampler_equivalence() -> Outcome {
    let n = 100_000;
    let mut pick = RngStream::new(4, 0);
    let mut worst: f64 = 0.0;
    for pair in 0..10u64 {
        let a = 6.0 * pick.uniform() - 3.0;
        let s = (0.1f64.ln() + pick.uniform() * 100f64.ln()).exp();
        // Unit velocity at x = a / s gives rate a + s t.
        let p = GaussianPotential::isotropic(1, s).map_err(|e| e.to_string())?;
        let z = pdmp_core::PhasePoint::new(vec![a / s], vec![1.0]).map_err(|e| e.to_string())?;
        let slice = 1.0 / s.sqrt();
        let mut rng_inv = RngStream::new(4, 2 * pair + 1);
        let mut rng_thin = RngStream::new(4, 2 * pair + 2);
        let exact: Vec<f64> = (0..n)
            .map(|_| sample_bounce_time_gaussian(a, s, &mut rng_inv))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let thinned: Vec<f64> = (0..n)
            .map(|_| sample_bounce_time_thinning(&p, &z, slice, &mut rng_thin))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        worst = worst.max(ks_two_sample(&exact, &thinned));
    }
    let msg = format!("worst KS over 10 pairs {worst:.5}");
    if worst < 0.01 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn coupling_contraction() -> Outcome {
    let p = GaussianPotential::standard(2);
    let cert = tune_gaussian(1.0, 0.0).map_err(|e| e.to_string())?;
    let cfg = RhmcConfig {
        lambda_ref: cert.lambda_ref,
        alpha: 0.0,
        stop: StopRule::Horizon(10.0),
        flow: FlowSpec::exact_for(&p).ok_or("no exact flow")?,
    };
    let metric = Metric::BlockGaussian {
        a: cert.a,
        b: cert.b,
        c: cert.c,
        precision: p.form().clone(),
    };
    let traces = couple_ensemble(&p, &cfg, &metric, 0.25, 1000, 5, 0).map_err(|e| e.to_string())?;
    let fit = fit_contraction_rate(
        &traces,
        &FitOptions {
            t_min: 1.0 / cfg.lambda_ref,
            n_boot: 500,
            seed: 5,
        },
    )
    .map_err(|e| e.to_string())?;
    let env = envelope_check(&traces, cert.mu, 3.0).map_err(|e| e.to_string())?;
    let msg = format!(
        "metric=({}, {}, {}) mu_hat={:.4} ci=[{:.4}, {:.4}] mu={:.4} envelope worst z={:.2}",
        cert.a, cert.b, cert.c, fit.mu_hat, fit.ci.0, fit.ci.1, cert.mu, env.worst_z
    );
    if fit.mu_hat >= cert.mu - 2.0 * fit.half_width && env.passed {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn scaling_reproduction() -> Outcome {
    let opts = ScalingOptions::default();
    let dims = [10, 100, 1000];
    let cases = [
        ("f1 lambda=1", TestFunction::F1, LambdaPolicy::Constant(1.0), 0.35, 0.65),
        ("f1 lambda=sqrt(d)", TestFunction::F1, LambdaPolicy::SqrtD, 0.8, 1.2),
        ("f5 lambda=1", TestFunction::F5, LambdaPolicy::Constant(1.0), 1.0, f64::INFINITY),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, f, policy, lo, hi) in cases {
        let fit = run_scaling_study(&dims, policy, f, 100_000, 20, &opts).map_err(|e| e.to_string())?;
        let pass = if hi.is_finite() {
            fit.slope >= lo && fit.slope <= hi
        } else {
            fit.slope > lo
        };
        ok &= pass;
        let values: Vec<String> = fit.values.iter().map(|v| format!("{v:.3}")).collect();
        parts.push(format!(
            "{name}: slope {:.3} ci [{:.3}, {:.3}] {} (events/ESS {})",
            fit.slope,
            fit.slope_ci.0,
            fit.slope_ci.1,
            if pass { "ok" } else { "out of range" },
            values.join(", ")
        ));
    }
    let msg = parts.join("; ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn weak_convergence() -> Outcome {
    let report = weak_convergence_distance(&[10, 100, 1000], 2.0, 5.0, 2000, &WeakLimitOptions::default())
        .map_err(|e| e.to_string())?;
    let parts: Vec<String> = report
        .points
        .iter()
        .map(|p| {
            format!(
                "d={} ED={:.5}±{:.5} H-rms={:.4}",
                p.d, p.distance.value, p.distance.se, p.hamiltonian_rms
            )
        })
        .collect();
    let msg = format!(
        "{}; null ED={:.5}±{:.5}",
        parts.join(", "),
        report.null.value,
        report.null.se
    );
    if report.strictly_decreasing(2.0) && report.hamiltonian_decreasing() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gamma_ratio_lemma() -> Outcome {
    for d in 1..=10_000u32 {
        let s = (d as f64 - 0.5) / 2.0;
        if !gamma_ratio_check(s).map_err(|e| e.to_string())? {
            return Err(format!("inequality fails at d = {d}"));
        }
    }
    let r = gamma_ratio(1e6).map_err(|e| e.to_string())?;
    let msg = format!("d=1..10000 ok; |ratio - 1| at s=1e6 is {:.3e}", (r - 1.0).abs());
    if (r - 1.0).abs() < 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Check,
) -> Result<String, String> {
    let mut runner = TestRunner::new(Config {
        cases,
        rng_seed: RngSeed::Fixed(9),
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&strategy, |v| test(v).map_err(TestCaseError::fail))
        .map(|_| format!("{name} ({cases} cases)"))
        .map_err(|e| format!("{name}: {e}"))
}

fn invariant_suites() -> Outcome {
    let results = [
        run_property(
            "speed conservation",
            32,
            (1usize..8, log_uniform(0.1, 10.0), any::<u64>()),
            |(d, scale, seed)| speed_conservation(d, scale, 2000, seed),
        ),
        run_property(
            "exact flow energy",
            256,
            (phase_strategy(), log_uniform(0.01, 100.0), -50.0f64..50.0),
            |((x, v), scale, t)| exact_flow_energy(x, v, scale, t),
        ),
        run_property(
            "leapfrog reversibility",
            32,
            (phase_strategy(), 0.01f64..2.0),
            |((x, v), t)| leapfrog_reversibility(x, v, t),
        ),
        run_property(
            "refresh stationarity",
            32,
            (0.0f64..0.999, any::<u64>()),
            |(alpha, seed)| ar_refresh_stationarity(alpha, seed),
        ),
        // 50 cases of 200 pairs each: 10^4 pairs.
        run_property(
            "metric equivalence",
            50,
            (
                log_uniform(0.01, 100.0),
                log_uniform(0.01, 100.0),
                0.0f64..0.99,
                any::<bool>(),
                any::<u64>(),
            ),
            |(a, c, shrink, neg, seed)| metric_equivalence(a, c, shrink, if neg { -1.0 } else { 1.0 }, 200, seed),
        ),
    ];
    let (ok, failed): (Vec<_>, Vec<_>) = results.into_iter().partition(Result::is_ok);
    let ok: Vec<String> = ok.into_iter().map(Result::unwrap).collect();
    if failed.is_empty() {
        Ok(ok.join(", "))
    } else {
        Err(failed.into_iter().map(|r| r.unwrap_err()).collect::<Vec<_>>().join("; "))
    }
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("tuning formulas", tuning_formulas),
        ("certificate grid", certificate_grid),
        ("bounce-rate bracket", bounce_rate_bracket),
        ("sampler-oracle equivalence", sampler_equivalence),
        ("coupling contraction", coupling_contraction),
        ("scaling reproduction", scaling_reproduction),
        ("weak convergence", weak_convergence),
        ("gamma-ratio lemma", gamma_ratio_lemma),
        ("invariant suites", invariant_suites),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {id} {name} [{secs:.1}s]: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {id} {name} [{secs:.1}s]: {msg}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
