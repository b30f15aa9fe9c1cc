//! Exact continuous-time trajectories and their line-oriented event log.
//!
//! Log layout (LF line endings, floats with 17 significant digits):
//!
//! ```text
//! d=2 lambda_ref=1 alpha=0 horizon=... seed=7 stream=0 dynamics=linear
//! <t0> init x_0 .. x_{d-1} v_0 .. v_{d-1}
//! <time> bounce|refresh x_0 .. x_{d-1} v_0 .. v_{d-1}
//! ```

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::phase::{axpy, PhasePoint};
use crate::potential::{DenseGaussian, Potential};
use crate::rhmc::{hamiltonian_flow, FlowSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Bounce,
    Refresh,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Bounce => "bounce",
            EventKind::Refresh => "refresh",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    /// State immediately after the jump.
    pub state: PhasePoint,
}

/// Deterministic motion between events.
#[derive(Clone, Debug)]
pub enum Dynamics {
    /// `x(t) = x + t v`, `v` constant.
    Linear,
    Hamiltonian(FlowSpec),
}

impl Dynamics {
    pub fn tag(&self) -> String {
        match self {
            Dynamics::Linear => "linear".into(),
            Dynamics::Hamiltonian(flow) => flow.tag(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PathSkeleton {
    pub t0: f64,
    pub z0: PhasePoint,
    pub events: Vec<Event>,
    pub dynamics: Dynamics,
    /// Length of the covered time window `[t0, t0 + horizon]`.
    pub horizon: f64,
}

impl PathSkeleton {
    pub fn dim(&self) -> usize {
        self.z0.dim()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.horizon
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// `(start time, start state, duration)` for every deterministic piece.
    pub fn segments(&self) -> impl Iterator<Item = (f64, &PhasePoint, f64)> + '_ {
        let starts = std::iter::once((self.t0, &self.z0))
            .chain(self.events.iter().map(|e| (e.time, &e.state)));
        let ends = self
            .events
            .iter()
            .map(|e| e.time)
            .chain(std::iter::once(self.end_time()));
        starts.zip(ends).map(|((t, z), e)| (t, z, e - t))
    }

    fn anchor(&self, t: f64) -> Result<(f64, &PhasePoint)> {
        let (start, end) = (self.t0, self.end_time());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfRange { t, start, end });
        }
        let k = self.events.partition_point(|e| e.time <= t);
        Ok(if k == 0 {
            (self.t0, &self.z0)
        } else {
            (self.events[k - 1].time, &self.events[k - 1].state)
        })
    }
}

/// State at time `t`. Leapfrog paths need the potential; use
/// [`eval_path_with`] for those.
pub fn eval_path(path: &PathSkeleton, t: f64) -> Result<PhasePoint> {
    let (ta, za) = path.anchor(t)?;
    let dt = t - ta;
    if dt == 0.0 {
        return Ok(za.clone());
    }
    match &path.dynamics {
        Dynamics::Linear => Ok(linear_move(za, dt)),
        Dynamics::Hamiltonian(flow) => flow.evaluate_exact(za, dt).ok_or_else(|| {
            Error::Unsupported("evaluating a leapfrog path needs its potential".into())
        }),
    }
}

pub fn eval_path_with(path: &PathSkeleton, p: &dyn Potential, t: f64) -> Result<PhasePoint> {
    let (ta, za) = path.anchor(t)?;
    let dt = t - ta;
    if dt == 0.0 {
        return Ok(za.clone());
    }
    match &path.dynamics {
        Dynamics::Linear => Ok(linear_move(za, dt)),
        Dynamics::Hamiltonian(flow) => hamiltonian_flow(p, za, dt, flow),
    }
}

fn linear_move(z: &PhasePoint, dt: f64) -> PhasePoint {
    let mut x = z.x.clone();
    axpy(dt, &z.v, &mut x);
    PhasePoint { x, v: z.v.clone() }
}

/// Run metadata that is not part of the trajectory itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogMeta {
    pub lambda_ref: f64,
    pub alpha: f64,
    pub seed: u64,
    pub stream: u64,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_state(out: &mut String, z: &PhasePoint) {
    for e in z.x.iter().chain(&z.v) {
        out.push(' ');
        out.push_str(&fmt17(*e));
    }
}

pub fn write_event_log(path: &PathSkeleton, meta: &LogMeta, w: &mut impl Write) -> std::io::Result<()> {
    let mut line = format!(
        "d={} lambda_ref={} alpha={} horizon={} seed={} stream={} dynamics={}\n",
        path.dim(),
        fmt17(meta.lambda_ref),
        fmt17(meta.alpha),
        fmt17(path.horizon),
        meta.seed,
        meta.stream,
        path.dynamics.tag()
    );
    line.push_str(&fmt17(path.t0));
    line.push_str(" init");
    write_state(&mut line, &path.z0);
    line.push('\n');
    w.write_all(line.as_bytes())?;
    for e in &path.events {
        line.clear();
        line.push_str(&fmt17(e.time));
        line.push(' ');
        line.push_str(e.kind.as_str());
        write_state(&mut line, &e.state);
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

pub fn event_log_string(path: &PathSkeleton, meta: &LogMeta) -> String {
    let mut buf = Vec::new();
    write_event_log(path, meta, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

/// Parses a log written by [`write_event_log`]. Exact Gaussian flows with a
/// dense precision cannot be reconstructed from the tag alone, so `dense` is
/// consulted for `exact-gaussian` logs.
pub fn read_event_log(
    r: impl BufRead,
    dense: Option<Arc<DenseGaussian>>,
) -> Result<(PathSkeleton, LogMeta)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty event log".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let field = |key: &str| -> Result<&str> {
        header
            .split_whitespace()
            .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| Error::Parse(format!("header lacks '{key}'")))
    };
    let num = |s: &str| -> Result<f64> { f64::from_str(s).map_err(|e| Error::Parse(format!("{s}: {e}"))) };
    let int = |s: &str| -> Result<u64> { u64::from_str(s).map_err(|e| Error::Parse(format!("{s}: {e}"))) };
    let d = int(field("d")?)? as usize;
    let meta = LogMeta {
        lambda_ref: num(field("lambda_ref")?)?,
        alpha: num(field("alpha")?)?,
        seed: int(field("seed")?)?,
        stream: int(field("stream")?)?,
    };
    let horizon = num(field("horizon")?)?;
    let tag = field("dynamics")?;
    let dynamics = if tag == "linear" {
        Dynamics::Linear
    } else {
        Dynamics::Hamiltonian(FlowSpec::from_tag(tag, dense)?)
    };

    let parse_record = |line: &str| -> Result<(f64, String, PhasePoint)> {
        let mut it = line.split_whitespace();
        let t = num(it.next().ok_or_else(|| Error::Parse("empty record".into()))?)?;
        let kind = it
            .next()
            .ok_or_else(|| Error::Parse("record lacks kind".into()))?
            .to_string();
        let vals = it.map(num).collect::<Result<Vec<f64>>>()?;
        if vals.len() != 2 * d {
            return Err(Error::Parse(format!("record has {} values, expected {}", vals.len(), 2 * d)));
        }
        let (x, v) = vals.split_at(d);
        Ok((t, kind, PhasePoint { x: x.to_vec(), v: v.to_vec() }))
    };

    let first = lines
        .next()
        .ok_or_else(|| Error::Parse("missing init record".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let (t0, kind, z0) = parse_record(&first)?;
    if kind != "init" {
        return Err(Error::Parse("second line must be the init record".into()));
    }
    let mut events = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let (time, kind, state) = parse_record(&line)?;
        let kind = match kind.as_str() {
            "bounce" => EventKind::Bounce,
            "refresh" => EventKind::Refresh,
            other => return Err(Error::Parse(format!("unknown event kind '{other}'"))),
        };
        events.push(Event { time, kind, state });
    }
    Ok((
        PathSkeleton {
            t0,
            z0,
            events,
            dynamics,
            horizon,
        },
        meta,
    ))
}
