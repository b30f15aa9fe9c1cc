//! Bouncy Particle Sampler: straight-line motion, reflections off the level
//! sets of `U` at rate `<grad U(x), v>_+`, and autoregressive velocity
//! refreshment at a constant rate.

use crate::error::{check_dim, domain, Error, Result};
use crate::path::{Dynamics, Event, EventKind, PathSkeleton};
use crate::phase::{axpy, dot, norm_sq, PhasePoint};
use crate::poly::{bisect, Poly};
use crate::potential::Potential;
use crate::rng::RngStream;

/// When a simulation ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Run over `[0, T]`.
    Horizon(f64),
    /// Run until this many events have happened; the realized horizon is the
    /// time of the last event.
    Events(usize),
}

impl StopRule {
    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            StopRule::Horizon(t) if !(t > 0.0 && t.is_finite()) => {
                Err(domain(format!("horizon must be positive and finite, got {t}")))
            }
            StopRule::Events(0) => Err(domain("event budget must be >= 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpsConfig {
    /// Refreshment rate; `0` disables refreshment.
    pub lambda_ref: f64,
    pub alpha: f64,
    pub stop: StopRule,
    /// Thinning window length. `None` picks `1 / (|v| sqrt(M) + eps)` per draw.
    pub thinning_slice: Option<f64>,
}

impl BpsConfig {
    pub fn new(lambda_ref: f64, alpha: f64, stop: StopRule) -> Self {
        Self {
            lambda_ref,
            alpha,
            stop,
            thinning_slice: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_refresh(self.lambda_ref, self.alpha)?;
        self.stop.validate()?;
        if let Some(s) = self.thinning_slice {
            if !(s > 0.0 && s.is_finite()) {
                return Err(domain(format!("thinning slice must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_refresh(lambda_ref: f64, alpha: f64) -> Result<()> {
    if !(lambda_ref >= 0.0 && lambda_ref.is_finite()) {
        return Err(domain(format!("lambda_ref must be >= 0 and finite, got {lambda_ref}")));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

/// Reflection of `v` in the hyperplane orthogonal to `grad`.
pub fn bounce_reflect(grad: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_dim(grad.len(), v.len())?;
    let mut out = v.to_vec();
    reflect_in_place(grad, &mut out)?;
    Ok(out)
}

pub(crate) fn reflect_in_place(grad: &[f64], v: &mut [f64]) -> Result<()> {
    let g2 = norm_sq(grad);
    if !(g2 > 0.0) {
        return Err(Error::DegenerateBounce);
    }
    let speed2 = norm_sq(v);
    let c = 2.0 * dot(grad, v) / g2;
    axpy(-c, grad, v);
    pin_speed(v, speed2);
    Ok(())
}

/// Rescales `v` to squared norm `speed2`; the reflection is an isometry only
/// up to rounding.
fn pin_speed(v: &mut [f64], speed2: f64) {
    let after = norm_sq(v);
    if after > 0.0 && speed2 > 0.0 {
        let k = (speed2 / after).sqrt();
        v.iter_mut().for_each(|e| *e *= k);
    }
}

/// `<grad U(x), v>_+`
pub fn bounce_rate(p: &dyn Potential, z: &PhasePoint) -> Result<f64> {
    check_dim(p.dim(), z.dim())?;
    Ok(dot(&p.gradient_vec(&z.x), &z.v).max(0.0))
}

/// First time `tau` with `int_0^tau (a + s t)_+ dt = e` for `s > 0`.
pub fn invert_linear_rate(a: f64, s: f64, e: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain(format!("rate slope must be positive, got {s}")));
    }
    let ap = a.max(0.0);
    let root = (ap * ap + 2.0 * s * e).sqrt();
    Ok(if a > 0.0 {
        // (root - a) / s without cancellation
        2.0 * e / (root + a)
    } else {
        (root - a) / s
    })
}

/// Bounce time for a Gaussian target from `a = <Hx, v>` and `s = <Hv, v>`.
pub fn sample_bounce_time_gaussian(a: f64, s: f64, rng: &mut RngStream) -> Result<f64> {
    invert_linear_rate(a, s, rng.exp1())
}

/// First `tau` with `int_0^tau rate(t)_+ dt = e`, or infinity if the
/// integrated rate never reaches `e`.
pub fn invert_polynomial_rate(rate: &Poly, e: f64) -> f64 {
    let c = &rate.0;
    match rate.degree() {
        0 => {
            return if c[0] > 0.0 { e / c[0] } else { f64::INFINITY };
        }
        1 if c[1] > 0.0 => return invert_linear_rate(c[0], c[1], e).unwrap(),
        _ => {}
    }
    let anti = rate.integral();
    let bound = rate.cauchy_bound();
    let mut knots = vec![0.0];
    knots.extend(rate.roots_in(0.0, bound));
    let mut acc = 0.0;
    for (i, &a) in knots.iter().enumerate() {
        let b = knots.get(i + 1).copied();
        let probe = match b {
            Some(b) => 0.5 * (a + b),
            None => a.max(bound) + 1.0,
        };
        if rate.eval(probe) <= 0.0 {
            continue;
        }
        let base = anti.eval(a);
        let need = e - acc;
        let b = match b {
            Some(b) => {
                let mass = anti.eval(b) - base;
                if mass < need {
                    acc += mass;
                    continue;
                }
                b
            }
            None => {
                let mut hi = a.max(1e-300) * 2.0 + 1.0;
                while anti.eval(hi) - base < need {
                    hi *= 2.0;
                    if !hi.is_finite() {
                        return f64::INFINITY;
                    }
                }
                hi
            }
        };
        return bisect(|t| anti.eval(t) - base - need, a, b);
    }
    f64::INFINITY
}

/// Dominating rate `intercept + slope t` for `t -> <grad U(x + t v), v>_+`,
/// valid for all `t >= 0` when `grad U` is `M`-Lipschitz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearEnvelope {
    pub intercept: f64,
    pub slope: f64,
}

impl LinearEnvelope {
    pub fn at(p: &dyn Potential, z: &PhasePoint) -> Result<Self> {
        let upper = p.hessian_bounds().ok_or(Error::MissingHessianBounds)?.upper;
        Ok(Self {
            intercept: dot(&p.gradient_vec(&z.x), &z.v).max(0.0),
            slope: upper * norm_sq(&z.v),
        })
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

fn default_slice(speed2: f64, upper: f64) -> f64 {
    1.0 / (speed2.sqrt() * upper.sqrt() + 1e-12)
}

/// Bounce time by thinning against piecewise linear envelopes.
pub fn sample_bounce_time_thinning(
    p: &dyn Potential,
    z: &PhasePoint,
    slice: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    check_dim(p.dim(), z.dim())?;
    if !(slice > 0.0) {
        return Err(domain(format!("thinning slice must be positive, got {slice}")));
    }
    let mut buf = vec![0.0; p.dim()];
    Ok(thinning_time(p, &z.x, &z.v, Some(slice), f64::INFINITY, rng, &mut buf)?.unwrap_or(f64::INFINITY))
}

fn thinning_time(
    p: &dyn Potential,
    x: &[f64],
    v: &[f64],
    slice: Option<f64>,
    limit: f64,
    rng: &mut RngStream,
    buf: &mut [f64],
) -> Result<Option<f64>> {
    let upper = p.hessian_bounds().ok_or(Error::MissingHessianBounds)?.upper;
    let speed2 = norm_sq(v);
    if speed2 == 0.0 {
        return Ok(None);
    }
    let slice = slice.unwrap_or_else(|| default_slice(speed2, upper));
    let slope = upper * speed2;
    let rate_at = |t: f64, buf: &mut [f64]| {
        let xt: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + t * b).collect();
        p.gradient(&xt, buf);
        dot(buf, v)
    };
    let mut start = 0.0;
    while start < limit {
        let intercept = rate_at(start, buf).max(0.0);
        // Integrated envelope inside the window: intercept s + slope s^2 / 2.
        let mut mass = 0.0;
        loop {
            mass += rng.exp1();
            let s = 2.0 * mass / (intercept + (intercept * intercept + 2.0 * slope * mass).sqrt());
            if s > slice {
                break;
            }
            let t = start + s;
            if t > limit {
                return Ok(None);
            }
            let envelope = intercept + slope * s;
            let rate = rate_at(t, buf).max(0.0);
            if rng.uniform() * envelope < rate {
                return Ok(Some(t));
            }
        }
        start += slice;
    }
    Ok(None)
}

/// Autoregressive refreshment `alpha v + sqrt(1 - alpha^2) xi`.
pub fn refresh_velocity(v: &[f64], alpha: f64, rng: &mut RngStream) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let mut out = v.to_vec();
    refresh_in_place(&mut out, alpha, rng);
    Ok(out)
}

pub(crate) fn refresh_in_place(v: &mut [f64], alpha: f64, rng: &mut RngStream) {
    let k = (1.0 - alpha * alpha).sqrt();
    if alpha == 0.0 {
        rng.fill_normal(v);
    } else {
        for e in v.iter_mut() {
            *e = alpha * *e + k * rng.normal();
        }
    }
}

/// Stepwise BPS driver. Holds the current state and advances one event at a
/// time so that long runs can be reduced on the fly instead of stored.
pub struct BpsProcess<'p> {
    potential: &'p dyn Potential,
    lambda_ref: f64,
    alpha: f64,
    slice: Option<f64>,
    time: f64,
    x: Vec<f64>,
    v: Vec<f64>,
    grad: Vec<f64>,
    /// Squared speed set at the last refreshment; bounces restore it so that
    /// rounding does not accumulate.
    speed2: f64,
    bounces: usize,
    refreshes: usize,
}

impl<'p> BpsProcess<'p> {
    pub fn new(potential: &'p dyn Potential, z0: &PhasePoint, cfg: &BpsConfig) -> Result<Self> {
        validate_refresh(cfg.lambda_ref, cfg.alpha)?;
        check_dim(potential.dim(), z0.dim())?;
        let d = potential.dim();
        Ok(Self {
            potential,
            lambda_ref: cfg.lambda_ref,
            alpha: cfg.alpha,
            slice: cfg.thinning_slice,
            time: 0.0,
            x: z0.x.clone(),
            v: z0.v.clone(),
            grad: vec![0.0; d],
            speed2: norm_sq(&z0.v),
            bounces: 0,
            refreshes: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn state(&self) -> PhasePoint {
        PhasePoint {
            x: self.x.clone(),
            v: self.v.clone(),
        }
    }

    pub fn bounces(&self) -> usize {
        self.bounces
    }

    pub fn refreshes(&self) -> usize {
        self.refreshes
    }

    fn bounce_clock(&mut self, limit: f64, rng: &mut RngStream) -> Result<Option<f64>> {
        if let Some(rate) = self.potential.line_rate(&self.x, &self.v) {
            let tau = invert_polynomial_rate(&rate, rng.exp1());
            return Ok((tau <= limit).then_some(tau));
        }
        thinning_time(self.potential, &self.x, &self.v, self.slice, limit, rng, &mut self.grad)
    }

    /// Moves to the next event, or to `until` if none happens first.
    pub fn advance(&mut self, until: f64, rng: &mut RngStream) -> Result<Option<EventKind>> {
        self.advance_observed(until, rng, |_, _, _, _| {})
    }

    /// Like [`advance`](Self::advance); `segment(t, x, v, dt)` sees the
    /// straight piece about to be traversed before the state changes.
    pub fn advance_observed(
        &mut self,
        until: f64,
        rng: &mut RngStream,
        mut segment: impl FnMut(f64, &[f64], &[f64], f64),
    ) -> Result<Option<EventKind>> {
        let limit = until - self.time;
        let refresh = if self.lambda_ref > 0.0 {
            rng.exp1() / self.lambda_ref
        } else {
            f64::INFINITY
        };
        let bounce = self.bounce_clock(limit.min(refresh), rng)?;
        let next = match bounce {
            // ties go to refreshment
            Some(b) if b < refresh => Some((b, EventKind::Bounce)),
            _ if refresh <= limit => Some((refresh, EventKind::Refresh)),
            _ => None,
        };
        let Some((tau, kind)) = next else {
            segment(self.time, &self.x, &self.v, limit);
            axpy(limit, &self.v, &mut self.x);
            self.time = until;
            return Ok(None);
        };
        segment(self.time, &self.x, &self.v, tau);
        axpy(tau, &self.v, &mut self.x);
        self.time += tau;
        match kind {
            EventKind::Refresh => {
                refresh_in_place(&mut self.v, self.alpha, rng);
                self.speed2 = norm_sq(&self.v);
                self.refreshes += 1;
            }
            EventKind::Bounce => {
                self.potential.gradient(&self.x, &mut self.grad);
                reflect_in_place(&self.grad, &mut self.v)?;
                pin_speed(&mut self.v, self.speed2);
                self.bounces += 1;
            }
        }
        Ok(Some(kind))
    }
}

/// Exact BPS trajectory from `z0`.
pub fn simulate_bps(
    p: &dyn Potential,
    z0: &PhasePoint,
    cfg: &BpsConfig,
    rng: &mut RngStream,
) -> Result<PathSkeleton> {
    cfg.validate()?;
    let mut process = BpsProcess::new(p, z0, cfg)?;
    let mut events = Vec::new();
    let horizon = match cfg.stop {
        StopRule::Horizon(t) => {
            while let Some(kind) = process.advance(t, rng)? {
                events.push(Event {
                    time: process.time(),
                    kind,
                    state: process.state(),
                });
            }
            t
        }
        StopRule::Events(n) => {
            while events.len() < n {
                let kind = process
                    .advance(f64::INFINITY, rng)?
                    .ok_or_else(|| Error::Numerical("process stalled: no further events".into()))?;
                events.push(Event {
                    time: process.time(),
                    kind,
                    state: process.state(),
                });
            }
            process.time()
        }
    };
    Ok(PathSkeleton {
        t0: 0.0,
        z0: z0.clone(),
        events,
        dynamics: Dynamics::Linear,
        horizon,
    })
}
