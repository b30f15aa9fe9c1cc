//! Randomized Hamiltonian Monte Carlo: Hamiltonian flow for
//! `H(x, v) = U(x) + |v|^2 / 2`, interrupted by autoregressive velocity
//! refreshments at the arrivals of a homogeneous Poisson clock.

use std::sync::Arc;

use crate::bps::{refresh_in_place, validate_refresh, StopRule};
use crate::error::{check_dim, domain, Error, Result};
use crate::path::{Dynamics, Event, EventKind, PathSkeleton};
use crate::phase::PhasePoint;
use crate::potential::{DenseGaussian, GaussianForm, Potential};
use crate::rng::RngStream;

/// How the deterministic motion between refreshments is computed.
#[derive(Clone, Debug)]
pub enum FlowSpec {
    /// Closed-form rotation for precision `scale * I`.
    ExactIsotropicGaussian { scale: f64 },
    /// Mode-wise rotation in the eigenbasis of a dense precision.
    ExactGaussian(Arc<DenseGaussian>),
    /// Velocity Verlet with step `step`; the last step of every stretch is
    /// shortened so that it ends exactly on the requested time.
    Leapfrog { step: f64 },
    /// No motion at all: only the refreshment jumps act.
    Frozen,
}

impl FlowSpec {
    /// Exact flow matching a Gaussian potential, if it has one.
    pub fn exact_for(p: &dyn Potential) -> Option<Self> {
        match p.gaussian()? {
            GaussianForm::Isotropic { scale } => Some(FlowSpec::ExactIsotropicGaussian { scale: *scale }),
            GaussianForm::Dense(g) => Some(FlowSpec::ExactGaussian(g.clone())),
        }
    }

    /// Compact token used in event-log headers.
    pub fn tag(&self) -> String {
        match self {
            FlowSpec::ExactIsotropicGaussian { scale } => format!("exact-isotropic:{scale:e}"),
            FlowSpec::ExactGaussian(_) => "exact-gaussian".into(),
            FlowSpec::Leapfrog { step } => format!("leapfrog:{step:e}"),
            FlowSpec::Frozen => "frozen".into(),
        }
    }

    pub fn from_tag(tag: &str, dense: Option<Arc<DenseGaussian>>) -> Result<Self> {
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{tag}: {e}")));
        if let Some(rest) = tag.strip_prefix("exact-isotropic:") {
            return Ok(FlowSpec::ExactIsotropicGaussian { scale: parse(rest)? });
        }
        if let Some(rest) = tag.strip_prefix("leapfrog:") {
            return Ok(FlowSpec::Leapfrog { step: parse(rest)? });
        }
        match tag {
            "frozen" => Ok(FlowSpec::Frozen),
            "exact-gaussian" => dense
                .map(FlowSpec::ExactGaussian)
                .ok_or_else(|| Error::Parse("exact-gaussian log needs its precision matrix".into())),
            _ => Err(Error::Parse(format!("unknown dynamics tag '{tag}'"))),
        }
    }

    /// Checks that this flow is meaningful for `p`.
    pub fn validate(&self, p: &dyn Potential) -> Result<()> {
        match self {
            FlowSpec::ExactIsotropicGaussian { scale } => match p.gaussian() {
                Some(GaussianForm::Isotropic { scale: s }) if s == scale => Ok(()),
                _ => Err(domain(format!(
                    "exact isotropic flow with scale {scale} does not match the potential"
                ))),
            },
            FlowSpec::ExactGaussian(g) => match p.gaussian() {
                Some(GaussianForm::Dense(h)) if Arc::ptr_eq(g, h) || g.precision() == h.precision() => Ok(()),
                _ => Err(domain("exact Gaussian flow does not match the potential")),
            },
            FlowSpec::Leapfrog { step } => {
                if !(*step > 0.0 && step.is_finite()) {
                    return Err(domain(format!("leapfrog step must be positive, got {step}")));
                }
                if let Some(b) = p.hessian_bounds() {
                    if step * b.upper.sqrt() >= 2.0 {
                        return Err(domain(format!(
                            "leapfrog step {step} violates h sqrt(M) < 2 for M = {}",
                            b.upper
                        )));
                    }
                }
                Ok(())
            }
            FlowSpec::Frozen => Ok(()),
        }
    }

    /// Closed-form evaluation; `None` for leapfrog.
    pub fn evaluate_exact(&self, z: &PhasePoint, t: f64) -> Option<PhasePoint> {
        match self {
            FlowSpec::ExactIsotropicGaussian { scale } => {
                let w = scale.sqrt();
                let (s, c) = (w * t).sin_cos();
                let x = z.x.iter().zip(&z.v).map(|(x, v)| x * c + v * s / w).collect();
                let v = z.x.iter().zip(&z.v).map(|(x, v)| -x * w * s + v * c).collect();
                Some(PhasePoint { x, v })
            }
            FlowSpec::ExactGaussian(g) => {
                let mut ym = g.to_modes(&z.x);
                let mut wm = g.to_modes(&z.v);
                for ((y, u), lambda) in ym.iter_mut().zip(wm.iter_mut()).zip(g.eigenvalues()) {
                    let w = lambda.sqrt();
                    let (s, c) = (w * t).sin_cos();
                    let (y0, u0) = (*y, *u);
                    *y = y0 * c + u0 * s / w;
                    *u = -y0 * w * s + u0 * c;
                }
                Some(PhasePoint {
                    x: g.from_modes(&ym),
                    v: g.from_modes(&wm),
                })
            }
            FlowSpec::Frozen => Some(z.clone()),
            FlowSpec::Leapfrog { .. } => None,
        }
    }
}

/// Flow `z` for time `t` (negative `t` runs backwards; for leapfrog the
/// backward run inverts the forward one step by step).
pub fn hamiltonian_flow(p: &dyn Potential, z: &PhasePoint, t: f64, flow: &FlowSpec) -> Result<PhasePoint> {
    check_dim(p.dim(), z.dim())?;
    flow.validate(p)?;
    if !t.is_finite() {
        return Err(domain(format!("flow time must be finite, got {t}")));
    }
    Ok(flow_unchecked(p, z, t, flow))
}

pub(crate) fn flow_unchecked(p: &dyn Potential, z: &PhasePoint, t: f64, flow: &FlowSpec) -> PhasePoint {
    if let Some(out) = flow.evaluate_exact(z, t) {
        return out;
    }
    let FlowSpec::Leapfrog { step } = flow else {
        unreachable!("exact flows handled above")
    };
    let mut out = z.clone();
    leapfrog(p, &mut out, t, *step);
    out
}

fn leapfrog(p: &dyn Potential, z: &mut PhasePoint, t: f64, h: f64) {
    if t == 0.0 {
        return;
    }
    let total = t.abs();
    let n = (total / h).ceil().max(1.0) as usize;
    let last = total - (n - 1) as f64 * h;
    let sign = t.signum();
    let mut grad = p.gradient_vec(&z.x);
    let steps = (0..n).map(|i| {
        // Backward runs take the short step first to mirror the forward run.
        let short = if sign > 0.0 { i == n - 1 } else { i == 0 };
        sign * if short { last } else { h }
    });
    for s in steps {
        for (v, g) in z.v.iter_mut().zip(&grad) {
            *v -= 0.5 * s * g;
        }
        for (x, v) in z.x.iter_mut().zip(&z.v) {
            *x += s * v;
        }
        p.gradient(&z.x, &mut grad);
        for (v, g) in z.v.iter_mut().zip(&grad) {
            *v -= 0.5 * s * g;
        }
    }
}

#[derive(Clone, Debug)]
pub struct RhmcConfig {
    pub lambda_ref: f64,
    pub alpha: f64,
    pub stop: StopRule,
    pub flow: FlowSpec,
}

impl RhmcConfig {
    pub fn validate(&self, p: &dyn Potential) -> Result<()> {
        validate_refresh(self.lambda_ref, self.alpha)?;
        self.stop.validate()?;
        if matches!(self.stop, StopRule::Events(_)) && self.lambda_ref == 0.0 {
            return Err(domain("an event budget needs lambda_ref > 0"));
        }
        self.flow.validate(p)
    }
}

/// RHMC trajectory from `z0`; every event is a refreshment.
pub fn simulate_rhmc(
    p: &dyn Potential,
    z0: &PhasePoint,
    cfg: &RhmcConfig,
    rng: &mut RngStream,
) -> Result<PathSkeleton> {
    check_dim(p.dim(), z0.dim())?;
    cfg.validate(p)?;
    let (limit, budget) = match cfg.stop {
        StopRule::Horizon(t) => (t, usize::MAX),
        StopRule::Events(n) => (f64::INFINITY, n),
    };
    let mut events: Vec<Event> = Vec::new();
    let mut time = 0.0;
    let mut z = z0.clone();
    while events.len() < budget && cfg.lambda_ref > 0.0 {
        let tau = rng.exp1() / cfg.lambda_ref;
        if time + tau > limit {
            break;
        }
        z = flow_unchecked(p, &z, tau, &cfg.flow);
        refresh_in_place(&mut z.v, cfg.alpha, rng);
        time += tau;
        events.push(Event {
            time,
            kind: EventKind::Refresh,
            state: z.clone(),
        });
    }
    let horizon = if limit.is_finite() { limit } else { time };
    Ok(PathSkeleton {
        t0: 0.0,
        z0: z0.clone(),
        events,
        dynamics: Dynamics::Hamiltonian(cfg.flow.clone()),
        horizon,
    })
}
