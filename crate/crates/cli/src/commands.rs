//! Subcommand implementations.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};

use pdmp_core::bps::{simulate_bps, BpsConfig, StopRule};
use pdmp_core::coupling::{
    couple_ensemble, couple_rhmc, envelope_check, fit_contraction_rate, write_summary_csv, summarize,
    write_trace_csv, CouplingTrace, FitOptions, Metric,
};
use pdmp_core::diagnostics::{
    estimate_ess, realized_bounce_rate, run_scaling_study, streaming_ess, weak_convergence_distance, write_ess_csv, EssReport,
    LambdaPolicy, ScalingOptions, WeakLimitOptions,
};
use pdmp_core::path::{write_event_log, EventKind, LogMeta};
use pdmp_core::potential::{sample_stationary, GaussianPotential};
use pdmp_core::rhmc::{simulate_rhmc, FlowSpec, RhmcConfig};
use pdmp_core::testfn::TestFunction;
use pdmp_core::tuning::{
    lambda_b_bounds, tune_gaussian, tune_wasserstein, verify_hypoco_certificate, verify_wasserstein_inequalities,
    TuningCertificate,
};
use pdmp_core::{par, Error, RngStream};

use crate::target::{flow_for, Target};
use crate::{CertifyArgs, CoupleArgs, EssBenchArgs, SampleArgs, ScalingArgs, TuneArgs, WeakLimitArgs};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DOMAIN: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VERIFICATION: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(Error),
    Io(String),
    Verification(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_DOMAIN,
            Failure::Verification(_) => EXIT_VERIFICATION,
            Failure::Core(e) => match e {
                Error::DegenerateBounce
                | Error::Numerical(_)
                | Error::DegenerateEnsemble(_)
                | Error::TooFewSamples { .. } => EXIT_NUMERICAL,
                _ => EXIT_DOMAIN,
            },
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Verification(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

/// Six significant digits for human-readable summaries.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exponent) {
        format!("{:.*}", (5 - exponent) as usize, x)
    } else {
        format!("{x:.5e}")
    }
}

fn open_out(path: Option<&str>) -> Result<Box<dyn Write>, Failure> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout().lock()))),
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Io(format!("cannot write {p}: {e}"))),
    }
}

fn io_err(path: Option<&str>) -> impl Fn(io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("writing {}: {e}", path.unwrap_or("standard output")))
}

fn parse_core<T: std::str::FromStr<Err = Error>>(s: &str) -> Result<T, Failure> {
    s.parse().map_err(|e: Error| Failure::Usage(e.to_string()))
}

pub fn sample(a: SampleArgs) -> Outcome {
    let p = a.target.build(a.d)?;
    let stop = match (a.horizon, a.events) {
        (Some(t), None) => StopRule::Horizon(t),
        (None, Some(n)) => StopRule::Events(n),
        _ => return Err(Failure::Usage("give exactly one of --horizon and --events".into())),
    };
    let mut rng = RngStream::new(a.seed, a.stream);
    let z0 = sample_stationary(p.as_ref(), &mut rng)?;
    let path = if a.process == "bps" {
        let mut cfg = BpsConfig::new(a.lambda_ref, a.alpha, stop);
        cfg.thinning_slice = a.slice;
        simulate_bps(p.as_ref(), &z0, &cfg, &mut rng)?
    } else {
        let cfg = RhmcConfig {
            lambda_ref: a.lambda_ref,
            alpha: a.alpha,
            stop,
            flow: flow_for(&a.flow, p.as_ref())?,
        };
        simulate_rhmc(p.as_ref(), &z0, &cfg, &mut rng)?
    };
    let meta = LogMeta {
        lambda_ref: a.lambda_ref,
        alpha: a.alpha,
        seed: a.seed,
        stream: a.stream,
    };
    let out = a.out.as_deref();
    let mut w = open_out(out)?;
    write_event_log(&path, &meta, &mut w).map_err(io_err(out))?;
    w.flush().map_err(io_err(out))?;
    drop(w);

    let bounces = path.count(EventKind::Bounce);
    let horizon = path.end_time();
    let mut lines = vec![
        format!("events={}", path.events.len()),
        format!("bounces={bounces}"),
        format!("refreshes={}", path.count(EventKind::Refresh)),
        format!("horizon={}", sig6(horizon)),
    ];
    if a.process == "bps" {
        let (rate, se) = realized_bounce_rate(&path, 50)?;
        lines.push(format!("bounce_rate={} se={}", sig6(rate), sig6(se)));
        if let Some(h) = p.hessian_bounds() {
            let (lo, hi) = lambda_b_bounds(h.lower, h.upper, a.d)?;
            lines.push(format!("bounce_rate_bounds=[{}, {}]", sig6(lo), sig6(hi)));
            let inside = rate >= lo - 3.0 * se && rate <= hi + 3.0 * se;
            lines.push(format!("within_bounds_3se={inside}"));
        }
    }
    let summary = lines.join("\n");
    // The log owns standard output when no file is given.
    if out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn certificate_for(m: f64, big_m: f64, alpha: f64, gaussian: bool) -> Result<TuningCertificate, Failure> {
    if gaussian {
        if m != big_m {
            return Err(Failure::Core(Error::Domain(
                "--gaussian needs an isotropic target: m must equal M".into(),
            )));
        }
        Ok(tune_gaussian(m, alpha)?)
    } else {
        Ok(tune_wasserstein(m, big_m, alpha)?)
    }
}

fn print_certificate(cert: &TuningCertificate, json: bool) {
    if json {
        println!("{}", cert.to_json());
    } else {
        print!("{}", cert.to_record());
    }
}

pub fn tune(a: TuneArgs) -> Outcome {
    let cert = certificate_for(a.m, a.big_m, a.alpha, a.gaussian)?;
    print_certificate(&cert, a.json);
    if cert.certified {
        Ok(())
    } else {
        Err(Failure::Verification(format!(
            "certificate fails with margin {:e}",
            cert.min_margin
        )))
    }
}

pub fn certify(a: CertifyArgs) -> Outcome {
    if a.grid {
        return certify_grid(&a);
    }
    let (m, big_m) = (a.m.unwrap_or(f64::NAN), a.big_m.unwrap_or(f64::NAN));
    let cert = certificate_for(m, big_m, a.alpha, a.gaussian)?;
    let mut certified = cert.certified;
    if a.gaussian {
        print_certificate(&cert, a.json);
    } else {
        let h = verify_hypoco_certificate(m, big_m, a.alpha)?;
        certified &= h.certified;
        if a.json {
            let mut v = cert.to_json();
            v["hypocoercive"] = serde_json::json!({
                "certified": h.certified,
                "min_margin": h.min_margin,
                "source": h.source.as_str(),
                "margins": h.margins.iter().map(|m| serde_json::json!({"name": m.name, "value": m.value})).collect::<Vec<_>>(),
            });
            println!("{v}");
        } else {
            print!("{}", cert.to_record());
            println!("hypoco.source={}", h.source.as_str());
            for m in &h.margins {
                println!("hypoco.margin.{}={:e}", m.name, m.value);
            }
            println!("hypoco.certified={}", h.certified);
        }
    }
    if certified {
        Ok(())
    } else {
        Err(Failure::Verification("certificate inequalities fail".into()))
    }
}

fn certify_grid(a: &CertifyArgs) -> Outcome {
    if a.grid_ratio < 2 || a.grid_alpha < 2 || a.grid_scale < 1 {
        return Err(Failure::Usage("grid sizes must be >= 2 (scale >= 1)".into()));
    }
    if !(a.min_ratio > 0.0 && a.min_ratio <= 1.0) || !(0.0..1.0).contains(&a.max_alpha) {
        return Err(Failure::Core(Error::Domain("need 0 < min-ratio <= 1 and 0 <= max-alpha < 1".into())));
    }
    let lr = a.min_ratio.log10();
    let ratio = |i: usize| 10f64.powf(lr - lr * i as f64 / (a.grid_ratio - 1) as f64);
    let scale = |j: usize| {
        if a.grid_scale == 1 {
            1.0
        } else {
            10f64.powf(-2.0 + 4.0 * j as f64 / (a.grid_scale - 1) as f64)
        }
    };
    let alpha = |k: usize| a.max_alpha * k as f64 / (a.grid_alpha - 1) as f64;
    let mut worst_w = (f64::INFINITY, 0.0, 0.0, 0.0);
    let mut worst_h = (f64::INFINITY, 0.0, 0.0);
    let mut failures = 0usize;
    for i in 0..a.grid_ratio {
        for k in 0..a.grid_alpha {
            let h = verify_hypoco_certificate(ratio(i), 1.0, alpha(k))?;
            failures += usize::from(!h.certified);
            if h.min_margin < worst_h.0 {
                worst_h = (h.min_margin, ratio(i), alpha(k));
            }
            for j in 0..a.grid_scale {
                let big_m = scale(j);
                let m = ratio(i) * big_m;
                let c = tune_wasserstein(m, big_m, alpha(k))?;
                let (ok, margin) =
                    verify_wasserstein_inequalities(m, big_m, alpha(k), c.lambda_ref, c.mu, c.a, c.b, c.c);
                failures += usize::from(!ok);
                if margin < worst_w.0 {
                    worst_w = (margin, m, big_m, alpha(k));
                }
            }
        }
    }
    let points = a.grid_ratio * a.grid_scale * a.grid_alpha;
    println!("points={points}");
    println!(
        "wasserstein.min_margin={:e} at m={} M={} alpha={}",
        worst_w.0,
        sig6(worst_w.1),
        sig6(worst_w.2),
        sig6(worst_w.3)
    );
    println!(
        "hypoco.min_margin={:e} at m/M={} alpha={}",
        worst_h.0,
        sig6(worst_h.1),
        sig6(worst_h.2)
    );
    println!("failures={failures}");
    if failures == 0 {
        Ok(())
    } else {
        Err(Failure::Verification(format!("{failures} grid points fail")))
    }
}

fn write_file(path: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Outcome {
    let mut w = open_out(Some(path))?;
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(Some(path)))
}

pub fn couple(a: CoupleArgs) -> Outcome {
    let Target::Gaussian { scale } = a.target else {
        return Err(Failure::Core(Error::Unsupported("coupling needs an isotropic Gaussian target".into())));
    };
    let p = GaussianPotential::isotropic(a.d.max(1), scale)?;
    if a.d == 0 {
        return Err(Failure::Core(Error::Domain("dimension must be >= 1".into())));
    }
    if a.replicates < 2 {
        return Err(Failure::Usage("--replicates must be >= 2".into()));
    }
    let cert = certificate_for(scale, scale, a.alpha, a.family == "gaussian")?;
    let lambda_ref = a.lambda_ref.unwrap_or(cert.lambda_ref);
    let cfg = RhmcConfig {
        lambda_ref,
        alpha: a.alpha,
        stop: StopRule::Horizon(a.horizon),
        flow: FlowSpec::exact_for(&p).expect("Gaussian target"),
    };
    let metric = if a.family == "gaussian" {
        Metric::BlockGaussian {
            a: cert.a,
            b: cert.b,
            c: cert.c,
            precision: p.form().clone(),
        }
    } else {
        Metric::WeightedAbc {
            a: cert.a,
            b: cert.b,
            c: cert.c,
        }
    };
    let traces: Vec<CouplingTrace> = if a.identical {
        par::map_indexed(a.replicates, |r| {
            let mut rng = RngStream::new(a.seed, a.stream_base + r as u64);
            let z = sample_stationary(&p, &mut rng)?;
            couple_rhmc(&p, &z, &z, &cfg, &metric, a.grid_step, &mut rng)
        })
        .into_iter()
        .collect::<Result<_, _>>()?
    } else {
        couple_ensemble(&p, &cfg, &metric, a.grid_step, a.replicates, a.seed, a.stream_base)?
    };
    if let Some(path) = a.out.as_deref() {
        write_file(path, |w| write_trace_csv(&traces, &mut { w }))?;
    }
    if let Some(path) = a.summary.as_deref() {
        let s = summarize(&traces)?;
        write_file(path, |w| write_summary_csv(&s, &mut { w }))?;
    }
    let fit = fit_contraction_rate(
        &traces,
        &FitOptions {
            t_min: a.t_min.unwrap_or(1.0 / lambda_ref),
            n_boot: a.n_boot,
            seed: a.seed,
        },
    )?;
    let env = envelope_check(&traces, cert.mu, 3.0)?;
    let rate_ok = fit.mu_hat >= cert.mu - 2.0 * fit.half_width;
    println!("lambda_ref={}", sig6(lambda_ref));
    println!("mu={}", sig6(cert.mu));
    println!("mu_hat={}", sig6(fit.mu_hat));
    println!("ci=[{}, {}]", sig6(fit.ci.0), sig6(fit.ci.1));
    println!("window=[{}, {}] points={}", sig6(fit.window.0), sig6(fit.window.1), fit.points);
    println!("envelope_worst_z={}", sig6(env.worst_z));
    println!("verdict mu_hat >= mu - 2*ci: {}", if rate_ok { "PASS" } else { "FAIL" });
    println!("verdict envelope non-increasing: {}", if env.passed { "PASS" } else { "FAIL" });
    if rate_ok && env.passed {
        Ok(())
    } else {
        Err(Failure::Verification("contraction check failed".into()))
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || Failure::Usage(format!("expected lo:hi, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let num = |v: &str| -> Result<f64, Failure> {
        if v.is_empty() || v == "inf" {
            Ok(f64::INFINITY)
        } else {
            v.parse().map_err(|_| bad())
        }
    };
    let lo = if lo.is_empty() { f64::NEG_INFINITY } else { num(lo)? };
    Ok((lo, num(hi)?))
}

pub fn scaling(a: ScalingArgs) -> Outcome {
    let f: TestFunction = parse_core(&a.f)?;
    let policy: LambdaPolicy = parse_core(&a.policy)?;
    let expect = a.expect_slope.as_deref().map(parse_range).transpose()?;
    let opts = ScalingOptions {
        dt: a.dt,
        n_boot: a.n_boot,
        seed: a.seed,
        aggregate: parse_core(&a.aggregate)?,
    };
    let fit = run_scaling_study(&a.dims, policy, f, a.budget, a.replicates, &opts)?;
    let out = a.out.as_deref();
    let mut w = open_out(out)?;
    writeln!(w, "{}", fit.to_json()).and_then(|_| w.flush()).map_err(io_err(out))?;
    drop(w);
    if let Some(path) = a.csv.as_deref() {
        write_file(path, |w| write_ess_csv(&fit.reports, &mut { w }))?;
    }
    let summary: Vec<String> = fit
        .dims
        .iter()
        .zip(&fit.values)
        .map(|(d, v)| format!("d={d} events_per_ess={}", sig6(*v)))
        .collect();
    let report = format!(
        "{}\nslope={} ci=[{}, {}]",
        summary.join("\n"),
        sig6(fit.slope),
        sig6(fit.slope_ci.0),
        sig6(fit.slope_ci.1)
    );
    if out.is_some() {
        println!("{report}");
    } else {
        eprintln!("{report}");
    }
    match expect {
        Some((lo, hi)) if !(fit.slope >= lo && fit.slope <= hi) => Err(Failure::Verification(format!(
            "slope {} outside [{lo}, {hi}]",
            sig6(fit.slope)
        ))),
        _ => Ok(()),
    }
}

pub fn weaklimit(a: WeakLimitArgs) -> Outcome {
    let opts = WeakLimitOptions {
        lambda_ref: a.lambda_ref,
        alpha: a.alpha,
        statistic: parse_core(&a.statistic)?,
        snapshots: a.snapshots,
        residual_step: a.residual_step,
        n_boot: a.n_boot,
        seed: a.seed,
        ..WeakLimitOptions::default()
    };
    let report = weak_convergence_distance(&a.dims, a.b, a.horizon, a.replicates, &opts)?;
    if let Some(path) = a.out.as_deref() {
        write_file(path, |w| {
            writeln!(w, "d,distance,se,hamiltonian_rms")?;
            for p in &report.points {
                writeln!(
                    w,
                    "{},{:.16e},{:.16e},{:.16e}",
                    p.d, p.distance.value, p.distance.se, p.hamiltonian_rms
                )?;
            }
            Ok(())
        })?;
    }
    for p in &report.points {
        println!(
            "d={} distance={} se={} hamiltonian_rms={}",
            p.d,
            sig6(p.distance.value),
            sig6(p.distance.se),
            sig6(p.hamiltonian_rms)
        );
    }
    println!("null distance={} se={}", sig6(report.null.value), sig6(report.null.se));
    let decreasing = report.strictly_decreasing(2.0);
    let hamiltonian = report.hamiltonian_decreasing();
    println!("strictly decreasing beyond 2 SE: {}", if decreasing { "PASS" } else { "FAIL" });
    println!("hamiltonian deviation decreasing: {}", if hamiltonian { "PASS" } else { "FAIL" });
    if decreasing && hamiltonian {
        Ok(())
    } else {
        Err(Failure::Verification("distances do not decrease with d".into()))
    }
}

pub fn ess_bench(a: EssBenchArgs) -> Outcome {
    let p = a.target.build(a.d)?;
    let functions: Vec<TestFunction> = if a.functions.is_empty() {
        TestFunction::ALL.iter().copied().filter(|f| f.check_dim(a.d).is_ok()).collect()
    } else {
        a.functions.iter().map(|s| parse_core(s)).collect::<Result<_, _>>()?
    };
    for f in &functions {
        f.check_dim(a.d)?;
    }
    let flow = if a.process == "rhmc" { Some(flow_for(&a.flow, p.as_ref())?) } else { None };
    let policy = LambdaPolicy::Constant(a.lambda_ref);
    let jobs = functions.len() * a.replicates;
    let potential = p.as_ref();
    let reports: Vec<EssReport> = par::map_indexed(jobs, |j| -> pdmp_core::Result<EssReport> {
        let (fi, r) = (j / a.replicates, j % a.replicates);
        let f = functions[fi];
        // Every function of replicate r sees the same chain.
        let mut rng = RngStream::new(a.seed, r as u64);
        let z0 = sample_stationary(potential, &mut rng)?;
        let (ess, stderr, n_samples) = match &flow {
            None => {
                let s = streaming_ess(potential, &z0, a.lambda_ref, a.alpha, a.events, f, a.dt, &mut rng)?;
                (s.ess, s.stderr, s.n)
            }
            Some(flow) => {
                let cfg = RhmcConfig {
                    lambda_ref: a.lambda_ref,
                    alpha: a.alpha,
                    stop: StopRule::Events(a.events),
                    flow: flow.clone(),
                };
                let path = simulate_rhmc(potential, &z0, &cfg, &mut rng)?;
                let (ess, stderr) = estimate_ess(&path, f, a.dt)?;
                (ess, stderr, (path.end_time() / a.dt).ceil() as usize)
            }
        };
        Ok(EssReport {
            function: f,
            d: a.d,
            policy,
            replicate: r,
            n_events: a.events,
            n_samples,
            ess,
            events_per_ess: a.events as f64 / ess,
            stderr,
        })
    })
    .into_iter()
    .collect::<Result<_, _>>()?;
    let out = a.out.as_deref();
    let mut w = open_out(out)?;
    write_ess_csv(&reports, &mut w).and_then(|_| w.flush()).map_err(io_err(out))?;
    drop(w);
    let lines: Vec<String> = functions
        .iter()
        .map(|f| {
            let vals: Vec<f64> = reports.iter().filter(|r| r.function == *f).map(|r| r.events_per_ess).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            format!("{} mean_events_per_ess={}", f.id(), sig6(mean))
        })
        .collect();
    if out.is_some() {
        println!("{}", lines.join("\n"));
    } else {
        eprintln!("{}", lines.join("\n"));
    }
    Ok(())
}
