//! Synchronous coupling of two RHMC paths: one refreshment clock and one
//! Gaussian innovation per refreshment, shared by both copies.

use std::io::Write;

use crate::bps::StopRule;
use crate::error::{check_dim, domain, Error, Result};
use crate::path::{Dynamics, Event, EventKind, PathSkeleton};
use crate::phase::{dot, PhasePoint};
use crate::potential::{sample_stationary, GaussianForm, Potential};
use crate::rhmc::{flow_unchecked, FlowSpec, RhmcConfig};
use crate::rng::RngStream;
use crate::stats::{fit_line, mean, std_error};

/// Quadratic form on phase-space differences.
#[derive(Clone, Debug)]
pub enum Metric {
    /// `a |dx|^2 + 2b <dx, dv> + c |dv|^2`
    WeightedAbc { a: f64, b: f64, c: f64 },
    /// `a <dx, H dx> + 2b <dx, dv> + c |dv|^2`
    BlockGaussian { a: f64, b: f64, c: f64, precision: GaussianForm },
}

impl Metric {
    pub fn weights(&self) -> (f64, f64, f64) {
        match self {
            Metric::WeightedAbc { a, b, c } | Metric::BlockGaussian { a, b, c, .. } => (*a, *b, *c),
        }
    }

    /// Same form with the cross weight negated.
    pub fn adjoint(&self) -> Metric {
        match self {
            Metric::WeightedAbc { a, b, c } => Metric::WeightedAbc { a: *a, b: -b, c: *c },
            Metric::BlockGaussian { a, b, c, precision } => Metric::BlockGaussian {
                a: *a,
                b: -b,
                c: *c,
                precision: precision.clone(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.weights();
        let floor = match self {
            Metric::WeightedAbc { .. } => 1.0,
            Metric::BlockGaussian { precision, .. } => match precision {
                GaussianForm::Isotropic { scale } => *scale,
                GaussianForm::Dense(g) => g.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min),
            },
        };
        if !(a > 0.0 && c > 0.0 && b * b < a * c * floor) {
            return Err(domain(format!("metric ({a}, {b}, {c}) is not positive definite")));
        }
        Ok(())
    }

    /// Form evaluated on a difference `(dx, dv)`.
    pub fn eval_difference(&self, dx: &[f64], dv: &[f64]) -> f64 {
        let (a, b, c) = self.weights();
        let position = match self {
            Metric::WeightedAbc { .. } => dot(dx, dx),
            Metric::BlockGaussian { precision, .. } => match precision {
                GaussianForm::Isotropic { scale } => scale * dot(dx, dx),
                GaussianForm::Dense(g) => {
                    let mut hx = vec![0.0; dx.len()];
                    g.apply(dx, &mut hx);
                    dot(dx, &hx)
                }
            },
        };
        a * position + 2.0 * b * dot(dx, dv) + c * dot(dv, dv)
    }
}

pub fn weighted_distance_sq(z1: &PhasePoint, z2: &PhasePoint, metric: &Metric) -> Result<f64> {
    check_dim(z1.dim(), z2.dim())?;
    metric.validate()?;
    let dx: Vec<f64> = z2.x.iter().zip(&z1.x).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = z2.v.iter().zip(&z1.v).map(|(a, b)| a - b).collect();
    Ok(metric.eval_difference(&dx, &dv))
}

#[derive(Clone, Debug)]
pub struct CouplingTrace {
    pub times: Vec<f64>,
    pub d2: Vec<f64>,
    /// `true` for the uniform grid points, `false` for refreshment records.
    pub on_grid: Vec<bool>,
    pub metric: Metric,
    /// Distances below this carry no information: rounding in the two
    /// integrated copies. Zero for difference-process flows.
    pub floor: f64,
    /// The first copy, as a standalone RHMC trajectory.
    pub first: PathSkeleton,
}

impl CouplingTrace {
    /// `(t, d2)` at the grid points only.
    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times
            .iter()
            .zip(&self.d2)
            .zip(&self.on_grid)
            .filter(|(_, &g)| g)
            .map(|((&t, &d), _)| (t, d))
    }
}

fn is_linear(flow: &FlowSpec) -> bool {
    !matches!(flow, FlowSpec::Leapfrog { .. })
}

/// Couples two RHMC copies started at `z1`, `z2` over `[0, T]`, recording
/// the distance every `grid_step` and right after every refreshment.
pub fn couple_rhmc(
    p: &dyn Potential,
    z1: &PhasePoint,
    z2: &PhasePoint,
    cfg: &RhmcConfig,
    metric: &Metric,
    grid_step: f64,
    rng: &mut RngStream,
) -> Result<CouplingTrace> {
    check_dim(p.dim(), z1.dim())?;
    check_dim(z1.dim(), z2.dim())?;
    cfg.validate(p)?;
    metric.validate()?;
    let StopRule::Horizon(horizon) = cfg.stop else {
        return Err(domain("coupling runs need a time horizon"));
    };
    if !(grid_step > 0.0) {
        return Err(domain(format!("grid step must be positive, got {grid_step}")));
    }
    let linear = is_linear(&cfg.flow);
    let diff = |a: &PhasePoint, b: &PhasePoint| -> PhasePoint {
        PhasePoint {
            x: b.x.iter().zip(&a.x).map(|(u, w)| u - w).collect(),
            v: b.v.iter().zip(&a.v).map(|(u, w)| u - w).collect(),
        }
    };
    // For linear flows the difference obeys the same flow as each copy.
    let second_or_diff = |z1: &PhasePoint, z2: &PhasePoint| if linear { diff(z1, z2) } else { z2.clone() };
    let distance = |first: &PhasePoint, other: &PhasePoint| {
        let d = if linear { other.clone() } else { diff(first, other) };
        metric.eval_difference(&d.x, &d.v)
    };

    let mut trace = CouplingTrace {
        times: vec![0.0],
        d2: vec![metric.eval_difference(
            &diff(z1, z2).x,
            &diff(z1, z2).v,
        )],
        on_grid: vec![true],
        metric: metric.clone(),
        floor: if linear {
            0.0
        } else {
            let scale = crate::phase::norm_sq(&z1.x) + crate::phase::norm_sq(&z1.v) + 1.0;
            let (a, b, c) = metric.weights();
            let step = match cfg.flow {
                FlowSpec::Leapfrog { step } => step,
                _ => 1.0,
            };
            1e3 * f64::EPSILON * scale * (a + b.abs() + c) * (horizon / step).max(1.0)
        },
        first: PathSkeleton {
            t0: 0.0,
            z0: z1.clone(),
            events: Vec::new(),
            dynamics: Dynamics::Hamiltonian(cfg.flow.clone()),
            horizon,
        },
    };
    let mut anchor_t = 0.0;
    let mut first = z1.clone();
    let mut other = second_or_diff(z1, z2);
    let mut next_grid = 1usize;
    let grid_time = |k: usize| k as f64 * grid_step;
    let mut xi = vec![0.0; p.dim()];
    loop {
        let tau = if cfg.lambda_ref > 0.0 {
            rng.exp1() / cfg.lambda_ref
        } else {
            f64::INFINITY
        };
        let refresh_at = anchor_t + tau;
        let stop = refresh_at.min(horizon);
        while grid_time(next_grid) <= stop * (1.0 + 1e-15) && grid_time(next_grid) <= horizon * (1.0 + 1e-12) {
            let dt = grid_time(next_grid) - anchor_t;
            let a = flow_unchecked(p, &first, dt, &cfg.flow);
            let b = flow_unchecked(p, &other, dt, &cfg.flow);
            trace.times.push(grid_time(next_grid));
            trace.d2.push(distance(&a, &b));
            trace.on_grid.push(true);
            next_grid += 1;
        }
        if refresh_at > horizon {
            break;
        }
        first = flow_unchecked(p, &first, tau, &cfg.flow);
        other = flow_unchecked(p, &other, tau, &cfg.flow);
        // one innovation shared by both copies
        rng.fill_normal(&mut xi);
        let k = (1.0 - cfg.alpha * cfg.alpha).sqrt();
        for (v, e) in first.v.iter_mut().zip(&xi) {
            *v = cfg.alpha * *v + k * e;
        }
        if linear {
            other.v.iter_mut().for_each(|v| *v *= cfg.alpha);
        } else {
            for (v, e) in other.v.iter_mut().zip(&xi) {
                *v = cfg.alpha * *v + k * e;
            }
        }
        anchor_t = refresh_at;
        trace.times.push(anchor_t);
        trace.d2.push(distance(&first, &other));
        trace.on_grid.push(false);
        trace.first.events.push(Event {
            time: anchor_t,
            kind: EventKind::Refresh,
            state: first.clone(),
        });
    }
    Ok(trace)
}

/// Independent coupled pairs, both copies started from the target.
/// Replicate `r` uses stream `stream_base + r` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn couple_ensemble(
    p: &dyn Potential,
    cfg: &RhmcConfig,
    metric: &Metric,
    grid_step: f64,
    pairs: usize,
    seed: u64,
    stream_base: u64,
) -> Result<Vec<CouplingTrace>> {
    crate::par::map_indexed(pairs, |r| {
        let mut rng = RngStream::new(seed, stream_base + r as u64);
        let z1 = sample_stationary(p, &mut rng)?;
        let z2 = sample_stationary(p, &mut rng)?;
        couple_rhmc(p, &z1, &z2, cfg, metric, grid_step, &mut rng)
    })
    .into_iter()
    .collect()
}

/// Ensemble mean of `d2` per grid time with its standard error.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub times: Vec<f64>,
    pub mean_d2: Vec<f64>,
    pub se: Vec<f64>,
}

fn grid_matrix(traces: &[CouplingTrace]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let first = traces
        .first()
        .ok_or_else(|| Error::DegenerateEnsemble("no traces".into()))?;
    let times: Vec<f64> = first.grid().map(|(t, _)| t).collect();
    let mut rows = Vec::with_capacity(traces.len());
    for tr in traces {
        let row: Vec<f64> = tr.grid().map(|(_, d)| d).collect();
        if row.len() != times.len() {
            return Err(Error::DegenerateEnsemble("traces use different grids".into()));
        }
        rows.push(row);
    }
    Ok((times, rows))
}

pub fn summarize(traces: &[CouplingTrace]) -> Result<EnsembleSummary> {
    let (times, rows) = grid_matrix(traces)?;
    let column = |k: usize| rows.iter().map(|r| r[k]).collect::<Vec<f64>>();
    Ok(EnsembleSummary {
        mean_d2: (0..times.len()).map(|k| mean(&column(k))).collect(),
        se: (0..times.len())
            .map(|k| if rows.len() > 1 { std_error(&column(k)) } else { f64::NAN })
            .collect(),
        times,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Start of the fitting window.
    pub t_min: f64,
    pub n_boot: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContractionFit {
    pub mu_hat: f64,
    /// 95% percentile bootstrap interval.
    pub ci: (f64, f64),
    /// Half the interval length.
    pub half_width: f64,
    pub window: (f64, f64),
    pub points: usize,
}

fn log_slope(times: &[f64], means: &[f64], t_min: f64, floor: f64) -> Result<(f64, (f64, f64), usize)> {
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(means)
        .filter(|(&t, &m)| t >= t_min && m > floor)
        .map(|(&t, &m)| (t, m.ln()))
        .unzip();
    if t.len() < 3 {
        return Err(Error::DegenerateEnsemble(format!(
            "only {} grid points above the noise floor inside the window",
            t.len()
        )));
    }
    let fit = fit_line(&t, &y)?;
    Ok((-fit.slope, (t[0], t[t.len() - 1]), t.len()))
}

/// Exponential decay rate of the ensemble-mean distance: least-squares
/// slope of `log mean d2` over grid times `t >= t_min` where the mean stays
/// above `max(1e3 eps * mean d2(0), trace floor)`. Replicates are resampled
/// for the bootstrap interval.
pub fn fit_contraction_rate(traces: &[CouplingTrace], opts: &FitOptions) -> Result<ContractionFit> {
    let (times, rows) = grid_matrix(traces)?;
    if rows.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: rows.len() });
    }
    let means = |idx: &[usize]| -> Vec<f64> {
        (0..times.len())
            .map(|k| idx.iter().map(|&r| rows[r][k]).sum::<f64>() / idx.len() as f64)
            .collect()
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    let base = means(&all);
    if base.iter().all(|&m| m == 0.0) {
        return Err(Error::DegenerateEnsemble("all distances are zero".into()));
    }
    let trace_floor = traces.iter().map(|t| t.floor).fold(0.0, f64::max);
    let floor = (1e3 * f64::EPSILON * base[0]).max(trace_floor);
    let (mu_hat, window, points) = log_slope(&times, &base, opts.t_min, floor)?;
    let mut rng = RngStream::new(opts.seed, 0);
    let mut reps: Vec<f64> = (0..opts.n_boot)
        .filter_map(|_| {
            let idx: Vec<usize> = (0..rows.len()).map(|_| rng.below(rows.len())).collect();
            log_slope(&times, &means(&idx), opts.t_min, floor).ok().map(|r| r.0)
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    let ci = if reps.len() >= 20 {
        let q = |p: f64| reps[((reps.len() - 1) as f64 * p).round() as usize];
        (q(0.025), q(0.975))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ContractionFit {
        mu_hat,
        ci,
        half_width: 0.5 * (ci.1 - ci.0),
        window,
        points,
    })
}

/// Whether `mean(d2(t) e^{mu t})` is non-increasing up to noise: each
/// consecutive increment, and each increment relative to `t = 0`, must stay
/// below `z_max` standard errors of the per-replicate increments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeCheck {
    pub passed: bool,
    /// Largest standardized increase found.
    pub worst_z: f64,
}

pub fn envelope_check(traces: &[CouplingTrace], mu: f64, z_max: f64) -> Result<EnvelopeCheck> {
    let (times, rows) = grid_matrix(traces)?;
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&times).map(|(d, t)| d * (mu * t).exp()).collect())
        .collect();
    let mut worst = f64::NEG_INFINITY;
    let mut check = |j: usize, k: usize| {
        let inc: Vec<f64> = scaled.iter().map(|r| r[k] - r[j]).collect();
        let se = std_error(&inc);
        let m = mean(&inc);
        let z = if se > 0.0 { m / se } else if m > 0.0 { f64::INFINITY } else { 0.0 };
        worst = worst.max(z);
    };
    for k in 1..times.len() {
        check(k - 1, k);
        check(0, k);
    }
    Ok(EnvelopeCheck {
        passed: worst <= z_max,
        worst_z: worst,
    })
}

pub fn write_trace_csv(traces: &[CouplingTrace], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "replicate,t,d2")?;
    for (r, tr) in traces.iter().enumerate() {
        for (t, d) in tr.times.iter().zip(&tr.d2) {
            writeln!(w, "{r},{t:.16e},{d:.16e}")?;
        }
    }
    Ok(())
}

pub fn write_summary_csv(summary: &EnsembleSummary, w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "t,mean_d2,se")?;
    for ((t, m), s) in summary.times.iter().zip(&summary.mean_d2).zip(&summary.se) {
        writeln!(w, "{t:.16e},{m:.16e},{s:.16e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::{make_product_potential, GaussianPotential, PowerPotential};
    use crate::tuning::{equivalence_constant, tune_gaussian};

    fn gaussian_cfg(p: &GaussianPotential, lambda_ref: f64, alpha: f64, horizon: f64) -> RhmcConfig {
        RhmcConfig {
            lambda_ref,
            alpha,
            stop: StopRule::Horizon(horizon),
            flow: FlowSpec::exact_for(p).unwrap(),
        }
    }

    #[test]
    fn distance_examples() {
        let z1 = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let z2 = PhasePoint::new(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let euclid = Metric::WeightedAbc { a: 1.0, b: 0.0, c: 1.0 };
        assert_eq!(weighted_distance_sq(&z1, &z2, &euclid).unwrap(), 2.0);
        let m = Metric::WeightedAbc { a: 1.0, b: 0.25, c: 1.0 };
        assert_eq!(weighted_distance_sq(&z1, &z2, &m).unwrap(), 2.0);
        let bad = Metric::WeightedAbc { a: 1.0, b: 1.0, c: 1.0 };
        assert!(weighted_distance_sq(&z1, &z2, &bad).is_err());
        // near the boundary the form almost vanishes along dv = -(a/b) dx
        let near = Metric::WeightedAbc { a: 1.0, b: 0.999_999, c: 1.0 };
        let z3 = PhasePoint::new(vec![1.0, 0.0], vec![-1.0, 0.0]).unwrap();
        assert!(weighted_distance_sq(&z1, &z3, &near).unwrap() < 1e-5);
    }

    #[test]
    fn identical_starts_stay_coupled() {
        let p = GaussianPotential::standard(3);
        let cfg = gaussian_cfg(&p, 1.0, 0.3, 5.0);
        let mut rng = RngStream::new(1, 0);
        let z = sample_stationary(&p, &mut rng).unwrap();
        let metric = Metric::WeightedAbc { a: 1.0, b: 0.2, c: 1.0 };
        let tr = couple_rhmc(&p, &z, &z, &cfg, &metric, 0.5, &mut rng).unwrap();
        assert!(tr.d2.iter().all(|&d| d == 0.0));
        let quartic = make_product_potential(PowerPotential::new(4.0).unwrap(), 2).unwrap();
        let lf = RhmcConfig {
            flow: FlowSpec::Leapfrog { step: 1e-2 },
            ..gaussian_cfg(&p, 1.0, 0.3, 2.0)
        };
        let z = PhasePoint::new(vec![0.5, -0.5], vec![1.0, 0.0]).unwrap();
        let tr = couple_rhmc(&quartic, &z, &z, &lf, &metric, 0.5, &mut rng).unwrap();
        assert!(tr.d2.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn refreshment_scales_velocity_difference() {
        // Frozen flow isolates the jump: dv -> alpha dv, dx unchanged
        let p = GaussianPotential::standard(2);
        let cfg = RhmcConfig {
            lambda_ref: 3.0,
            alpha: 0.4,
            stop: StopRule::Horizon(2.0),
            flow: FlowSpec::Frozen,
        };
        let metric = Metric::WeightedAbc { a: 1.0, b: 0.0, c: 1.0 };
        let z1 = PhasePoint::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let z2 = PhasePoint::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let mut rng = RngStream::new(2, 0);
        let tr = couple_rhmc(&p, &z1, &z2, &cfg, &metric, 0.5, &mut rng).unwrap();
        let refresh: Vec<f64> = tr
            .d2
            .iter()
            .zip(&tr.on_grid)
            .filter(|(_, &g)| !g)
            .map(|(&d, _)| d)
            .collect();
        assert!(!refresh.is_empty());
        let mut expect = 5.0;
        for d in refresh {
            expect *= 0.16;
            assert!((d / expect - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trace_contains_grid_and_refreshes() {
        let p = GaussianPotential::standard(2);
        let cfg = gaussian_cfg(&p, 2.0, 0.0, 10.0);
        let metric = Metric::WeightedAbc { a: 1.0, b: 0.25, c: 1.0 };
        let mut rng = RngStream::new(3, 0);
        let z1 = sample_stationary(&p, &mut rng).unwrap();
        let z2 = sample_stationary(&p, &mut rng).unwrap();
        let tr = couple_rhmc(&p, &z1, &z2, &cfg, &metric, 0.25, &mut rng).unwrap();
        assert_eq!(tr.grid().count(), 41);
        assert!(tr.times.windows(2).all(|w| w[0] <= w[1]));
        let refresh_times: Vec<f64> = tr.first.events.iter().map(|e| e.time).collect();
        for t in refresh_times {
            assert!(tr.times.contains(&t));
        }
        assert!(tr.d2.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn pure_refresh_rate() {
        let p = GaussianPotential::standard(1);
        let (lambda, alpha) = (2.0, 0.5);
        let cfg = RhmcConfig {
            lambda_ref: lambda,
            alpha,
            stop: StopRule::Horizon(3.0),
            flow: FlowSpec::Frozen,
        };
        let metric = Metric::WeightedAbc { a: 1.0, b: 0.0, c: 1.0 };
        let traces: Vec<CouplingTrace> = (0..2000)
            .map(|r| {
                let mut rng = RngStream::new(4, r);
                let z1 = PhasePoint::new(vec![0.0], vec![0.0]).unwrap();
                let z2 = PhasePoint::new(vec![0.0], vec![1.0]).unwrap();
                couple_rhmc(&p, &z1, &z2, &cfg, &metric, 0.1, &mut rng).unwrap()
            })
            .collect();
        let fit = fit_contraction_rate(
            &traces,
            &FitOptions {
                t_min: 0.0,
                n_boot: 200,
                seed: 1,
            },
        )
        .unwrap();
        let want = lambda * (1.0 - alpha * alpha);
        assert!((fit.mu_hat - want).abs() < 3.0 * fit.half_width.max(0.02), "{fit:?} vs {want}");
        // doubling every distance leaves the fitted rate unchanged
        let doubled: Vec<CouplingTrace> = traces
            .iter()
            .map(|t| CouplingTrace {
                d2: t.d2.iter().map(|d| 2.0 * d).collect(),
                ..t.clone()
            })
            .collect();
        let again = fit_contraction_rate(
            &doubled,
            &FitOptions {
                t_min: 0.0,
                n_boot: 0,
                seed: 1,
            },
        )
        .unwrap();
        assert!((again.mu_hat - fit.mu_hat).abs() < 1e-12);
    }

    #[test]
    fn gaussian_contraction_and_envelope() {
        let p = GaussianPotential::standard(2);
        let cert = tune_gaussian(1.0, 0.0).unwrap();
        let cfg = gaussian_cfg(&p, cert.lambda_ref, 0.0, 10.0);
        let metric = Metric::BlockGaussian {
            a: cert.a,
            b: cert.b,
            c: cert.c,
            precision: p.form().clone(),
        };
        let traces = couple_ensemble(&p, &cfg, &metric, 0.25, 400, 5, 0).unwrap();
        let fit = fit_contraction_rate(
            &traces,
            &FitOptions {
                t_min: 1.0 / cfg.lambda_ref,
                n_boot: 100,
                seed: 2,
            },
        )
        .unwrap();
        assert!(fit.mu_hat >= cert.mu - 2.0 * fit.half_width, "{fit:?}");
        assert!(envelope_check(&traces, cert.mu, 3.0).unwrap().passed);
    }

    #[test]
    fn adjoint_metric_equivalence() {
        let cert = tune_gaussian(1.0, 0.3).unwrap();
        let forward = Metric::WeightedAbc { a: cert.a, b: cert.b, c: cert.c };
        let back = forward.adjoint();
        let c = equivalence_constant(cert.a, cert.b, cert.c).unwrap();
        let mut rng = RngStream::new(6, 0);
        for _ in 0..10_000 {
            let z1 = PhasePoint::new(rng.normal_vec(3), rng.normal_vec(3)).unwrap();
            let z2 = PhasePoint::new(rng.normal_vec(3), rng.normal_vec(3)).unwrap();
            let f = weighted_distance_sq(&z1, &z2, &forward).unwrap();
            let b = weighted_distance_sq(&z1, &z2, &back).unwrap();
            assert!(b <= c * f * (1.0 + 1e-12) && f <= c * b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn csv_headers() {
        let p = GaussianPotential::standard(1);
        let cfg = gaussian_cfg(&p, 1.0, 0.0, 1.0);
        let metric = Metric::WeightedAbc { a: 1.0, b: 0.0, c: 1.0 };
        let traces = couple_ensemble(&p, &cfg, &metric, 0.5, 3, 7, 0).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&traces, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("replicate,t,d2\n0,"));
        let mut buf = Vec::new();
        write_summary_csv(&summarize(&traces).unwrap(), &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,mean_d2,se\n"));
        assert_eq!(s.lines().count(), 4);
    }
}
