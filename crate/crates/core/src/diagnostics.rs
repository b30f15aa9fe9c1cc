//! Efficiency and convergence diagnostics: time averages and effective sample
//! sizes along BPS paths, events-per-ESS scaling studies, distances between
//! the BPS first-coordinate law and its one-dimensional RHMC limit, and the
//! self-normalized CLT check.

use std::fmt;
use std::str::FromStr;

use crate::bps::{BpsConfig, BpsProcess, StopRule};
use crate::error::{domain, Error, Result};
use crate::par::map_indexed;
use crate::path::{eval_path, eval_path_with, Dynamics, EventKind, PathSkeleton};
use crate::phase::{dot, PhasePoint};
use crate::poly::Poly;
use crate::potential::{
    make_product_potential, sample_stationary, GaussianPotential, Potential, PowerPotential,
    ScalarPotential,
};
use crate::quadrature::GaussLegendre;
use crate::rhmc::{simulate_rhmc, FlowSpec, RhmcConfig};
use crate::rng::RngStream;
use crate::stats::{energy_distance, fit_line, ks_one_sample, mean, normal_cdf, variance, EnergyDistance};
use crate::testfn::TestFunction;

/// Fewest discretized samples accepted by the ESS estimators.
pub const MIN_ESS_SAMPLES: usize = 1000;

/// Default discretization step for ESS estimation.
pub const DEFAULT_DT: f64 = 0.25;

const GL_NODES: usize = 64;

/// Standard errors a longer block level may exceed the chosen one by.
const PLATEAU_Z: f64 = 2.0;

/// Time average of `f` over the whole skeleton.
pub fn path_time_average(path: &PathSkeleton, f: TestFunction) -> Result<f64> {
    f.check_dim(path.dim())?;
    if path.horizon <= 0.0 {
        return Ok(f.evaluate(&path.z0.x));
    }
    let gl = GaussLegendre::new(GL_NODES);
    let mut total = 0.0;
    for (t, z, dt) in path.segments() {
        if dt <= 0.0 {
            continue;
        }
        total += match &path.dynamics {
            Dynamics::Linear => match f.along_line(&z.x, &z.v) {
                Some(c) => Poly::new(c).integral().eval(dt),
                None => {
                    let obs = LineObservable::new(f, &z.x, &z.v);
                    gl.integrate(|s| obs.at(s), 0.0, dt)
                }
            },
            Dynamics::Hamiltonian(_) => {
                let err = std::cell::RefCell::new(None);
                let v = gl.integrate(
                    |s| match eval_path(path, (t + s).min(path.end_time())) {
                        Ok(p) => f.evaluate(&p.x),
                        Err(e) => {
                            *err.borrow_mut() = Some(e);
                            f64::NAN
                        }
                    },
                    0.0,
                    dt,
                );
                if let Some(e) = err.into_inner() {
                    return Err(e);
                }
                v
            }
        };
    }
    Ok(total / path.horizon)
}

/// `f(x + s v)` for one straight segment, precomputed so that many offsets
/// are cheap.
enum LineObservable<'a> {
    Poly(Poly),
    Radius(Poly),
    Direct {
        f: TestFunction,
        x: &'a [f64],
        v: &'a [f64],
        buf: std::cell::RefCell<Vec<f64>>,
    },
}

impl<'a> LineObservable<'a> {
    fn new(f: TestFunction, x: &'a [f64], v: &'a [f64]) -> Self {
        if let Some(c) = f.along_line(x, v) {
            return LineObservable::Poly(Poly::new(c));
        }
        match f {
            TestFunction::F4 => LineObservable::Radius(Poly::new(vec![dot(x, x), 2.0 * dot(x, v), dot(v, v)])),
            _ => LineObservable::Direct {
                f,
                x,
                v,
                buf: std::cell::RefCell::new(vec![0.0; x.len()]),
            },
        }
    }

    fn at(&self, s: f64) -> f64 {
        match self {
            LineObservable::Poly(p) => p.eval(s),
            LineObservable::Radius(p) => p.eval(s).max(0.0).sqrt(),
            LineObservable::Direct { f, x, v, buf } => {
                let mut b = buf.borrow_mut();
                for ((o, xi), vi) in b.iter_mut().zip(x.iter()).zip(v.iter()) {
                    *o = xi + s * vi;
                }
                f.evaluate(&b)
            }
        }
    }
}

/// Batch-means ESS of an already discretized series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesEss {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub ess: f64,
    /// Monte Carlo standard error of the series mean.
    pub stderr: f64,
}

/// `n * var / lrv` with the long-run variance from `floor(sqrt n)` batches,
/// capped at `n`.
pub fn batch_means_ess(series: &[f64]) -> Result<SeriesEss> {
    let n = series.len();
    if n < MIN_ESS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_ESS_SAMPLES,
            got: n,
        });
    }
    let batches = (n as f64).sqrt().floor() as usize;
    let len = n / batches;
    let used = &series[..batches * len];
    let means: Vec<f64> = used.chunks_exact(len).map(mean).collect();
    let var = variance(series);
    let lrv = len as f64 * variance(&means);
    if !(var > 0.0) || !lrv.is_finite() {
        return Err(Error::DegenerateEnsemble("observable is constant along the path".into()));
    }
    let ess = if lrv > 0.0 {
        (n as f64 * var / lrv).min(n as f64)
    } else {
        n as f64
    };
    Ok(SeriesEss {
        n,
        mean: mean(series),
        variance: var,
        ess,
        stderr: (var / ess).sqrt(),
    })
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(domain(format!("discretization step must be positive, got {dt}")));
    }
    Ok(())
}

/// Values of `f` at `t0 + k dt` for every grid time before the end.
pub fn discretize(path: &PathSkeleton, f: TestFunction, dt: f64) -> Result<Vec<f64>> {
    check_dt(dt)?;
    f.check_dim(path.dim())?;
    let n = (path.horizon / dt).floor() as usize;
    match path.dynamics {
        Dynamics::Linear => {
            let mut out = Vec::with_capacity(n);
            let mut sampler = GridSampler::new(f, dt, path.t0);
            for (t, z, len) in path.segments() {
                sampler.segment(t, &z.x, &z.v, len, &mut out);
            }
            out.truncate(n);
            Ok(out)
        }
        Dynamics::Hamiltonian(_) => (0..n)
            .map(|k| eval_path(path, path.t0 + k as f64 * dt).map(|z| f.evaluate(&z.x)))
            .collect(),
    }
}

/// Records `f` at grid times as straight segments stream past.
struct GridSampler {
    f: TestFunction,
    dt: f64,
    t0: f64,
    next: usize,
}

impl GridSampler {
    fn new(f: TestFunction, dt: f64, t0: f64) -> Self {
        Self { f, dt, t0, next: 0 }
    }

    fn segment(&mut self, t: f64, x: &[f64], v: &[f64], len: f64, out: &mut Vec<f64>) {
        let end = t + len;
        let grid = |k: usize| self.t0 + k as f64 * self.dt;
        if grid(self.next) >= end {
            return;
        }
        let obs = LineObservable::new(self.f, x, v);
        while grid(self.next) < end {
            out.push(obs.at(grid(self.next) - t));
            self.next += 1;
        }
    }
}

/// ESS of `f` along a stored path discretized at step `dt`.
pub fn estimate_ess(path: &PathSkeleton, f: TestFunction, dt: f64) -> Result<(f64, f64)> {
    let s = batch_means_ess(&discretize(path, f, dt)?)?;
    Ok((s.ess, s.stderr))
}

/// Bounces per unit time over the path, with a standard error from
/// `batches` equal time windows.
pub fn realized_bounce_rate(path: &PathSkeleton, batches: usize) -> Result<(f64, f64)> {
    if batches < 2 {
        return Err(domain("need at least two batches"));
    }
    let width = path.horizon / batches as f64;
    if !(width > 0.0) {
        return Err(Error::DegenerateEnsemble("path has zero length".into()));
    }
    let mut rates = vec![0.0; batches];
    for ev in path.events.iter().filter(|e| e.kind == EventKind::Bounce) {
        let k = (((ev.time - path.t0) / width) as usize).min(batches - 1);
        rates[k] += 1.0 / width;
    }
    Ok((mean(&rates), (variance(&rates) / batches as f64).sqrt()))
}

/// Runs BPS for `n_events` events from `z0` and records `f` on the grid
/// without storing the skeleton.
pub fn streaming_series(
    p: &dyn Potential,
    z0: &PhasePoint,
    lambda_ref: f64,
    alpha: f64,
    n_events: usize,
    f: TestFunction,
    dt: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    check_dt(dt)?;
    f.check_dim(p.dim())?;
    let cfg = BpsConfig::new(lambda_ref, alpha, StopRule::Events(n_events));
    cfg.validate()?;
    let mut process = BpsProcess::new(p, z0, &cfg)?;
    let mut sampler = GridSampler::new(f, dt, 0.0);
    let mut series = Vec::new();
    for _ in 0..n_events {
        let event = process.advance_observed(f64::INFINITY, rng, |t, x, v, len| {
            sampler.segment(t, x, v, len, &mut series)
        })?;
        if event.is_none() {
            return Err(Error::Numerical("process stalled: no further events".into()));
        }
    }
    Ok(series)
}

/// [`streaming_series`] followed by [`batch_means_ess`].
pub fn streaming_ess(
    p: &dyn Potential,
    z0: &PhasePoint,
    lambda_ref: f64,
    alpha: f64,
    n_events: usize,
    f: TestFunction,
    dt: f64,
    rng: &mut RngStream,
) -> Result<SeriesEss> {
    batch_means_ess(&streaming_series(p, z0, lambda_ref, alpha, n_events, f, dt, rng)?)
}

/// How the refreshment rate grows with dimension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaPolicy {
    Constant(f64),
    SqrtD,
}

impl LambdaPolicy {
    pub fn rate(&self, d: usize) -> f64 {
        match *self {
            LambdaPolicy::Constant(l) => l,
            LambdaPolicy::SqrtD => (d as f64).sqrt(),
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaPolicy::Constant(l) if *l == 1.0 => f.write_str("const1"),
            LambdaPolicy::Constant(l) => write!(f, "const:{l}"),
            LambdaPolicy::SqrtD => f.write_str("sqrtd"),
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "const1" | "constant" | "const" => Ok(LambdaPolicy::Constant(1.0)),
            "sqrtd" | "sqrt" => Ok(LambdaPolicy::SqrtD),
            other => {
                let value = other
                    .strip_prefix("const:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse(format!("unknown policy '{other}' (const1, const:<rate>, sqrtd)")))?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(domain("constant refreshment rate must be positive"));
                }
                Ok(LambdaPolicy::Constant(value))
            }
        }
    }
}

/// One replicate of a scaling study.
#[derive(Clone, Debug, PartialEq)]
pub struct EssReport {
    pub function: TestFunction,
    pub d: usize,
    pub policy: LambdaPolicy,
    pub replicate: usize,
    pub n_events: usize,
    pub n_samples: usize,
    pub ess: f64,
    pub events_per_ess: f64,
    pub stderr: f64,
}

/// How replicate chains are combined into one events-per-ESS value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EssAggregate {
    /// Mean of the per-chain batch-means values.
    BatchMeans,
    /// Blocking analysis of the pooled replicate sample: block lengths
    /// `1, 2, 4, ...` up to one block per chain, keeping the first level
    /// that no longer level exceeds by more than two standard errors.
    Blocking,
}

impl fmt::Display for EssAggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EssAggregate::BatchMeans => "batch-means",
            EssAggregate::Blocking => "blocking",
        })
    }
}

impl FromStr for EssAggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "batch-means" | "batch" => Ok(EssAggregate::BatchMeans),
            "blocking" => Ok(EssAggregate::Blocking),
            other => Err(Error::Parse(format!("unknown ESS aggregate '{other}' (batch-means, blocking)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingOptions {
    pub dt: f64,
    pub n_boot: usize,
    pub seed: u64,
    pub aggregate: EssAggregate,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            n_boot: 2000,
            seed: 1,
            aggregate: EssAggregate::Blocking,
        }
    }
}

/// Block sums of one chain at one block length.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Level {
    /// Samples per block; `n` for the whole-chain level.
    len: f64,
    blocks: f64,
    /// `sum len * mean`, `sum len * mean^2` over blocks.
    weighted_sum: f64,
    weighted_sq: f64,
}

/// Sufficient statistics of one chain for blocking and its bootstrap.
#[derive(Clone, Debug, PartialEq)]
struct ChainBlocks {
    events: f64,
    /// Per-chain batch-means ESS.
    ess: f64,
    n: f64,
    sum: f64,
    sum_sq: f64,
    levels: Vec<Level>,
}

impl ChainBlocks {
    /// `lengths` are the shared block lengths; a whole-chain level is
    /// appended.
    fn new(events: usize, series: &[f64], lengths: &[usize], ess: f64) -> Self {
        let mut levels: Vec<Level> = lengths
            .iter()
            .map(|&len| {
                let used = &series[..series.len() / len * len];
                let (mut ws, mut wq, mut k) = (0.0, 0.0, 0.0);
                for chunk in used.chunks_exact(len) {
                    let m = mean(chunk);
                    ws += len as f64 * m;
                    wq += len as f64 * m * m;
                    k += 1.0;
                }
                Level {
                    len: len as f64,
                    blocks: k,
                    weighted_sum: ws,
                    weighted_sq: wq,
                }
            })
            .collect();
        let m = mean(series);
        let n = series.len() as f64;
        levels.push(Level {
            len: n,
            blocks: 1.0,
            weighted_sum: n * m,
            weighted_sq: n * m * m,
        });
        Self {
            events: events as f64,
            ess,
            n,
            sum: series.iter().sum(),
            sum_sq: series.iter().map(|x| x * x).sum(),
            levels,
        }
    }
}

/// Block lengths `1, 2, 4, ...` that fit at least twice in every chain.
fn block_lengths(lengths: impl Iterator<Item = usize>) -> Result<Vec<usize>> {
    let mut total = 0;
    let mut shortest = usize::MAX;
    for n in lengths {
        total += n;
        shortest = shortest.min(n);
    }
    if total < MIN_ESS_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_ESS_SAMPLES,
            got: total,
        });
    }
    Ok(std::iter::successors(Some(1usize), |l| Some(l * 2))
        .take_while(|l| 2 * l <= shortest)
        .collect())
}

/// Long-run variance estimate and its standard error at every level.
fn level_estimates(chains: &[&ChainBlocks]) -> (f64, f64, Vec<(f64, f64)>) {
    let n: f64 = chains.iter().map(|c| c.n).sum();
    let grand = chains.iter().map(|c| c.sum).sum::<f64>() / n;
    let var = (chains.iter().map(|c| c.sum_sq).sum::<f64>() - n * grand * grand) / (n - 1.0);
    let levels = chains[0].levels.len();
    let est = (0..levels)
        .map(|j| {
            let (mut k, mut ws, mut wq, mut weight) = (0.0, 0.0, 0.0, 0.0);
            for c in chains {
                let l = c.levels[j];
                k += l.blocks;
                ws += l.weighted_sum;
                wq += l.weighted_sq;
                weight += l.blocks * l.len;
            }
            // sum_b len_b (mean_b - grand)^2 / (k - 1)
            let lrv = (wq - 2.0 * grand * ws + grand * grand * weight).max(0.0) / (k - 1.0).max(1.0);
            (lrv, lrv * (2.0 / (k - 1.0).max(1.0)).sqrt())
        })
        .collect();
    (n, var, est)
}

/// ESS of independent stationary series treated as one sample, by blocking.
pub fn blocking_ess(chains: &[&[f64]]) -> Result<SeriesEss> {
    if chains.len() < 2 {
        return Err(domain("blocking across replicates needs at least two chains"));
    }
    let lengths = block_lengths(chains.iter().map(|c| c.len()))?;
    let stats: Vec<ChainBlocks> = chains.iter().map(|c| ChainBlocks::new(0, c, &lengths, 0.0)).collect();
    blocking_from(&stats.iter().collect::<Vec<_>>())
}

fn blocking_from(chains: &[&ChainBlocks]) -> Result<SeriesEss> {
    let (n, var, est) = level_estimates(chains);
    if !(var > 0.0) {
        return Err(Error::DegenerateEnsemble("observable is constant across chains".into()));
    }
    let plateau = (0..est.len())
        .find(|&j| est[j + 1..].iter().all(|&(lrv, se)| lrv <= est[j].0 + PLATEAU_Z * se))
        .unwrap_or(est.len() - 1);
    let lrv = est[plateau].0;
    let ess = if lrv > 0.0 { (n * var / lrv).min(n) } else { n };
    let grand = chains.iter().map(|c| c.sum).sum::<f64>() / n;
    Ok(SeriesEss {
        n: n as usize,
        mean: grand,
        variance: var,
        ess,
        stderr: (var / ess).sqrt(),
    })
}

fn aggregate_events_per_ess(chains: &[&ChainBlocks], how: EssAggregate) -> Result<f64> {
    match how {
        EssAggregate::BatchMeans => {
            Ok(chains.iter().map(|c| c.events / c.ess).sum::<f64>() / chains.len() as f64)
        }
        EssAggregate::Blocking => {
            let events: f64 = chains.iter().map(|c| c.events).sum();
            Ok(events / blocking_from(chains)?.ess)
        }
    }
}

/// Log-log fit of mean events-per-ESS against dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub function: TestFunction,
    pub policy: LambdaPolicy,
    pub dims: Vec<usize>,
    /// Mean events per ESS for each dimension.
    pub values: Vec<f64>,
    /// 95% bootstrap interval of each mean.
    pub value_ci: Vec<(f64, f64)>,
    pub slope: f64,
    /// 95% bootstrap interval of the slope.
    pub slope_ci: (f64, f64),
    pub aggregate: EssAggregate,
    /// Per-chain batch-means results.
    pub reports: Vec<EssReport>,
}

impl ScalingFit {
    /// Structured text with the dims, values, slope and CI.
    pub fn to_json(&self) -> String {
        fit_json(self)
    }
}

fn fit_json(fit: &ScalingFit) -> String {
    let list = |xs: &mut dyn Iterator<Item = String>| xs.collect::<Vec<_>>().join(", ");
    format!(
        "{{\"function\": \"{}\", \"policy\": \"{}\", \"aggregate\": \"{}\", \"dims\": [{}], \"values\": [{}], \"value_ci\": [{}], \"slope\": {:.16e}, \"ci\": [{:.16e}, {:.16e}]}}",
        fit.function,
        fit.policy,
        fit.aggregate,
        list(&mut fit.dims.iter().map(|d| d.to_string())),
        list(&mut fit.values.iter().map(|v| format!("{v:.16e}"))),
        list(&mut fit.value_ci.iter().map(|(a, b)| format!("[{a:.16e}, {b:.16e}]"))),
        fit.slope,
        fit.slope_ci.0,
        fit.slope_ci.1,
    )
}

/// Percentile interval from unsorted draws.
fn percentile_interval(mut xs: Vec<f64>, level: f64) -> (f64, f64) {
    xs.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (xs.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        xs[lo] + (pos - lo as f64) * (xs[hi] - xs[lo])
    };
    let tail = 0.5 * (1.0 - level);
    (q(tail), q(1.0 - tail))
}

/// Replicate BPS chains on the standard Gaussian for every dimension,
/// started from stationarity with `alpha = 0`.
pub fn run_scaling_study(
    dims: &[usize],
    policy: LambdaPolicy,
    f: TestFunction,
    budget_events: usize,
    replicates: usize,
    opts: &ScalingOptions,
) -> Result<ScalingFit> {
    if dims.len() < 2 {
        return Err(domain("a scaling fit needs at least two dimensions"));
    }
    if dims.windows(2).any(|w| w[0] >= w[1]) {
        return Err(domain("dimensions must be strictly increasing"));
    }
    if replicates < 2 {
        return Err(domain("a scaling study needs at least two replicates"));
    }
    for &d in dims {
        f.check_dim(d)?;
    }
    let jobs: Vec<(usize, usize, usize)> = dims
        .iter()
        .enumerate()
        .flat_map(|(k, &d)| (0..replicates).map(move |r| (k, d, r)))
        .collect();
    let results = map_indexed(jobs.len(), |j| -> Result<(EssReport, Vec<f64>)> {
        let (k, d, r) = jobs[j];
        let mut rng = RngStream::new(opts.seed, ((k as u64) << 32) | r as u64);
        let p = GaussianPotential::standard(d);
        let z0 = sample_stationary(&p, &mut rng)?;
        let lambda = policy.rate(d);
        let series = streaming_series(&p, &z0, lambda, 0.0, budget_events, f, opts.dt, &mut rng)?;
        let s = batch_means_ess(&series)?;
        let report = EssReport {
            function: f,
            d,
            policy,
            replicate: r,
            n_events: budget_events,
            n_samples: s.n,
            ess: s.ess,
            events_per_ess: budget_events as f64 / s.ess,
            stderr: s.stderr,
        };
        Ok((report, series))
    });
    let (reports, series): (Vec<EssReport>, Vec<Vec<f64>>) =
        results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    let mut per_dim = Vec::with_capacity(dims.len());
    for k in 0..dims.len() {
        let rows = &series[k * replicates..(k + 1) * replicates];
        let lengths = block_lengths(rows.iter().map(Vec::len))?;
        let chains: Vec<ChainBlocks> = rows
            .iter()
            .zip(&reports[k * replicates..])
            .map(|(s, rep)| ChainBlocks::new(budget_events, s, &lengths, rep.ess))
            .collect();
        per_dim.push(chains);
    }
    drop(series);
    let log_dims: Vec<f64> = dims.iter().map(|&d| (d as f64).ln()).collect();
    let values = per_dim
        .iter()
        .map(|chains| aggregate_events_per_ess(&chains.iter().collect::<Vec<_>>(), opts.aggregate))
        .collect::<Result<Vec<f64>>>()?;
    let slope_of = |vals: &[f64]| -> Result<f64> {
        let ly: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        Ok(fit_line(&log_dims, &ly)?.slope)
    };
    let slope = slope_of(&values)?;

    let mut rng = RngStream::new(opts.seed, u64::MAX);
    let mut slopes = Vec::with_capacity(opts.n_boot);
    let mut boot_means: Vec<Vec<f64>> = vec![Vec::with_capacity(opts.n_boot); dims.len()];
    for _ in 0..opts.n_boot.max(2) {
        let resampled: Vec<f64> = per_dim
            .iter()
            .map(|chains| {
                let pick: Vec<_> = (0..chains.len()).map(|_| &chains[rng.below(chains.len())]).collect();
                aggregate_events_per_ess(&pick, opts.aggregate)
            })
            .collect::<Result<Vec<f64>>>()?;
        for (k, m) in resampled.iter().enumerate() {
            boot_means[k].push(*m);
        }
        slopes.push(slope_of(&resampled)?);
    }
    Ok(ScalingFit {
        function: f,
        policy,
        dims: dims.to_vec(),
        values,
        value_ci: boot_means.into_iter().map(|m| percentile_interval(m, 0.95)).collect(),
        slope,
        slope_ci: percentile_interval(slopes, 0.95),
        aggregate: opts.aggregate,
        reports,
    })
}

pub const ESS_CSV_HEADER: &str = "function,d,policy,replicate,n_events,ess,events_per_ess";

pub fn write_ess_csv(reports: &[EssReport], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "{ESS_CSV_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{:.16e},{:.16e}",
            r.function, r.d, r.policy, r.replicate, r.n_events, r.ess, r.events_per_ess
        )?;
    }
    Ok(())
}

/// Path functional whose law is compared.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeakLimitStatistic {
    /// `(x1, v1)` at the snapshot times `0, T/k, ..., T`.
    Snapshots,
    /// `z(T) - flow_h(z(T - h))` with `flow_h` the 1-D Hamiltonian flow over
    /// the residual step `h`. Exactly zero for RHMC unless a refreshment
    /// falls in the window, so the distance grows linearly in the size of
    /// the BPS departure from the contour.
    FlowResidual,
}

impl fmt::Display for WeakLimitStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeakLimitStatistic::Snapshots => "snapshots",
            WeakLimitStatistic::FlowResidual => "residuals",
        })
    }
}

impl FromStr for WeakLimitStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snapshots" => Ok(WeakLimitStatistic::Snapshots),
            "residuals" => Ok(WeakLimitStatistic::FlowResidual),
            other => Err(Error::Parse(format!("unknown statistic '{other}' (snapshots, residuals)"))),
        }
    }
}

/// Settings for comparing BPS on a product target with its 1-D RHMC limit.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakLimitOptions {
    pub lambda_ref: f64,
    pub alpha: f64,
    pub statistic: WeakLimitStatistic,
    /// Number of equal steps between snapshot times `0, T/k, ..., T`.
    pub snapshots: usize,
    /// Window length `h` of the flow residual.
    pub residual_step: f64,
    /// Leapfrog step for the RHMC limit when `u1` is not quadratic.
    pub leapfrog_step: f64,
    pub n_boot: usize,
    pub seed: u64,
}

impl Default for WeakLimitOptions {
    fn default() -> Self {
        Self {
            lambda_ref: 1.0,
            alpha: 0.0,
            statistic: WeakLimitStatistic::FlowResidual,
            snapshots: 10,
            residual_step: 0.5,
            leapfrog_step: 1e-3,
            n_boot: 200,
            seed: 1,
        }
    }
}

impl WeakLimitOptions {
    fn snapshot_times(&self, horizon: f64) -> Vec<f64> {
        match self.statistic {
            WeakLimitStatistic::Snapshots => (0..=self.snapshots)
                .map(|k| horizon * k as f64 / self.snapshots as f64)
                .collect(),
            WeakLimitStatistic::FlowResidual => vec![horizon - self.residual_step, horizon],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakLimitPoint {
    pub d: usize,
    pub distance: EnergyDistance,
    /// RMS change of `u1(x1) + v1^2/2` between refreshments.
    pub hamiltonian_rms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakLimitReport {
    pub b: f64,
    pub horizon: f64,
    pub replicates: usize,
    pub points: Vec<WeakLimitPoint>,
    /// Distance between two independent RHMC ensembles.
    pub null: EnergyDistance,
}

impl WeakLimitReport {
    pub fn distances(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.distance.value).collect()
    }

    /// Whether each distance exceeds the next by more than `z` combined SEs.
    pub fn strictly_decreasing(&self, z: f64) -> bool {
        self.points.windows(2).all(|w| {
            let (a, b) = (w[0].distance, w[1].distance);
            a.value - b.value > z * (a.se * a.se + b.se * b.se).sqrt()
        })
    }

    pub fn hamiltonian_decreasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].hamiltonian_rms < w[0].hamiltonian_rms)
    }
}

/// First-coordinate path functional for one replicate. `p1` is the 1-D
/// factor target used by the residual flow.
fn path_features(
    opts: &WeakLimitOptions,
    times: &[f64],
    p1: &dyn Potential,
    mut at: impl FnMut(f64) -> Result<PhasePoint>,
) -> Result<Vec<f64>> {
    let mut snaps = Vec::with_capacity(times.len());
    for &t in times {
        let z = at(t)?;
        snaps.push(PhasePoint {
            x: vec![z.x[0]],
            v: vec![z.v[0]],
        });
    }
    let mut out = Vec::with_capacity(2 * times.len());
    match opts.statistic {
        WeakLimitStatistic::Snapshots => {
            for z in &snaps {
                out.push(z.x[0]);
                out.push(z.v[0]);
            }
        }
        WeakLimitStatistic::FlowResidual => {
            let flow = rhmc_flow(p1, opts.leapfrog_step);
            for (k, pair) in snaps.windows(2).enumerate() {
                let step = times[k + 1] - times[k];
                let pred = crate::rhmc::hamiltonian_flow(p1, &pair[0], step, &flow)?;
                out.push(pair[1].x[0] - pred.x[0]);
                out.push(pair[1].v[0] - pred.v[0]);
            }
        }
    }
    Ok(out)
}

/// Sum of squared first-coordinate energy changes along inter-refreshment
/// pieces, sampled on a grid of `steps` points, and the number of samples.
fn hamiltonian_deviation<S: ScalarPotential>(u1: &S, path: &PathSkeleton, steps: usize) -> Result<(f64, usize)> {
    let energy = |z: &PhasePoint| u1.value(z.x[0]) + 0.5 * z.v[0] * z.v[0];
    let dt = path.horizon / steps as f64;
    let mut reference = energy(&path.z0);
    let mut k_event = 0;
    let (mut sum, mut count) = (0.0, 0);
    for k in 1..=steps {
        let t = path.t0 + k as f64 * dt;
        while k_event < path.events.len() && path.events[k_event].time <= t {
            if path.events[k_event].kind == EventKind::Refresh {
                reference = energy(&path.events[k_event].state);
            }
            k_event += 1;
        }
        let z = eval_path(path, t.min(path.end_time()))?;
        let dev = energy(&z) - reference;
        sum += dev * dev;
        count += 1;
    }
    Ok((sum, count))
}

fn rhmc_flow(p1: &dyn Potential, step: f64) -> FlowSpec {
    FlowSpec::exact_for(p1).unwrap_or(FlowSpec::Leapfrog { step })
}

/// Snapshots of the 1-D RHMC process on `u1` started from stationarity.
fn rhmc_ensemble<S: ScalarPotential>(
    u1: &S,
    horizon: f64,
    replicates: usize,
    opts: &WeakLimitOptions,
    stream_base: u64,
) -> Result<Vec<Vec<f64>>> {
    let p = make_product_potential(u1.clone(), 1)?;
    let cfg = RhmcConfig {
        lambda_ref: opts.lambda_ref,
        alpha: opts.alpha,
        stop: StopRule::Horizon(horizon),
        flow: rhmc_flow(&p, opts.leapfrog_step),
    };
    let times = opts.snapshot_times(horizon);
    map_indexed(replicates, |r| {
        let mut rng = RngStream::new(opts.seed, stream_base + r as u64);
        let z0 = sample_stationary(&p, &mut rng)?;
        let path = simulate_rhmc(&p, &z0, &cfg, &mut rng)?;
        path_features(opts, &times, &p, |t| eval_path_with(&path, &p, t))
    })
    .into_iter()
    .collect()
}

/// Energy distance between the BPS first-coordinate path law on the
/// `d`-fold product of `u1 = |x|^b / 2` and the 1-D RHMC law, for each `d`.
/// Both are started from stationarity and compared through the path
/// functional chosen in `opts`.
pub fn weak_convergence_distance(
    dims: &[usize],
    b: f64,
    horizon: f64,
    replicates: usize,
    opts: &WeakLimitOptions,
) -> Result<WeakLimitReport> {
    if !(b == 2.0 || b == 4.0) {
        return Err(domain(format!("weak-limit study supports b in {{2, 4}}, got {b}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(domain("horizon must be positive"));
    }
    if replicates < 2 {
        return Err(domain("need at least two replicates"));
    }
    if opts.snapshots == 0 {
        return Err(domain("need at least one snapshot time"));
    }
    if !(opts.residual_step > 0.0 && opts.residual_step <= horizon) {
        return Err(domain("residual step must lie in (0, T]"));
    }
    let u1 = PowerPotential::new(b)?;
    let times = opts.snapshot_times(horizon);
    let p1 = make_product_potential(u1, 1)?;
    let limit = rhmc_ensemble(&u1, horizon, replicates, opts, 1 << 40)?;
    let control = rhmc_ensemble(&u1, horizon, replicates, opts, 2 << 40)?;
    let mut boot_rng = RngStream::new(opts.seed, 3 << 40);
    let null = energy_distance(&limit, &control, opts.n_boot, &mut boot_rng)?;

    let mut points = Vec::with_capacity(dims.len());
    for (k, &d) in dims.iter().enumerate() {
        let p = make_product_potential(u1, d)?;
        let cfg = BpsConfig::new(opts.lambda_ref, opts.alpha, StopRule::Horizon(horizon));
        let runs = map_indexed(replicates, |r| -> Result<(Vec<f64>, f64, usize)> {
            let mut rng = RngStream::new(opts.seed, ((k as u64 + 4) << 40) + r as u64);
            let z0 = sample_stationary(&p, &mut rng)?;
            let path = crate::bps::simulate_bps(&p, &z0, &cfg, &mut rng)?;
            let snap = path_features(opts, &times, &p1, |t| eval_path(&path, t))?;
            let (sum, count) = hamiltonian_deviation(&u1, &path, 200)?;
            Ok((snap, sum, count))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let (sum, count) = runs.iter().fold((0.0, 0), |(s, c), r| (s + r.1, c + r.2));
        let sample: Vec<Vec<f64>> = runs.into_iter().map(|r| r.0).collect();
        let distance = energy_distance(&sample, &limit, opts.n_boot, &mut boot_rng)?;
        points.push(WeakLimitPoint {
            d,
            distance,
            hamiltonian_rms: (sum / count as f64).sqrt(),
        });
    }
    Ok(WeakLimitReport {
        b,
        horizon,
        replicates,
        points,
        null,
    })
}

/// What the self-normalized statistic is conditioned on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conditioning {
    /// `(X1, V1)` drawn from the target along with everything else.
    None,
    /// `(X1, V1)` held at the given values.
    FirstCoordinate { x1: f64, v1: f64 },
}

/// KS distance between `<grad U(X), V> / |grad U(X)|` and `N(0, 1)` for
/// the `d`-fold product of `u1`, one value per dimension.
pub fn self_normalized_clt_check<S: ScalarPotential>(
    u1: &S,
    dims: &[usize],
    n: usize,
    conditioning: Conditioning,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(dims.len());
    for &d in dims {
        let p = make_product_potential(u1.clone(), d)?;
        let mut stats = Vec::with_capacity(n);
        for _ in 0..n {
            let mut z = sample_stationary(&p, rng)?;
            if let Conditioning::FirstCoordinate { x1, v1 } = conditioning {
                z.x[0] = x1;
                z.v[0] = v1;
            }
            let g = p.gradient_vec(&z.x);
            let norm = dot(&g, &g).sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateBounce);
            }
            stats.push(dot(&g, &z.v) / norm);
        }
        out.push(ks_one_sample(&stats, normal_cdf));
    }
    Ok(out)
}

/// Approximate 95% KS null band half-width for `n` draws.
pub fn ks_null_band(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bps::simulate_bps;
    use crate::path::Event;

    fn straight(x: Vec<f64>, v: Vec<f64>, horizon: f64) -> PathSkeleton {
        PathSkeleton {
            t0: 0.0,
            z0: PhasePoint { x, v },
            events: vec![],
            dynamics: Dynamics::Linear,
            horizon,
        }
    }

    #[test]
    fn constant_path_average() {
        let path = straight(vec![0.3, -1.2, 2.0], vec![0.0; 3], 7.0);
        for f in TestFunction::ALL {
            let avg = path_time_average(&path, f).unwrap();
            assert!((avg - f.evaluate(&path.z0.x)).abs() < 1e-12, "{f}");
        }
    }

    #[test]
    fn polynomial_segment_average() {
        let path = straight(vec![0.0], vec![1.0], 1.0);
        assert!((path_time_average(&path, TestFunction::F6).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn radius_matches_fine_quadrature() {
        let path = straight(vec![1.0, -2.0, 0.5], vec![-0.7, 1.1, 0.3], 3.0);
        let oracle = crate::quadrature::adaptive_simpson(
            &|t: f64| {
                let x: Vec<f64> = path.z0.x.iter().zip(&path.z0.v).map(|(a, b)| a + t * b).collect();
                TestFunction::F4.evaluate(&x)
            },
            0.0,
            3.0,
            1e-12,
        ) / 3.0;
        let avg = path_time_average(&path, TestFunction::F4).unwrap();
        assert!((avg - oracle).abs() < 1e-9, "{avg} vs {oracle}");
    }

    #[test]
    fn multi_segment_average() {
        // x goes 0 -> 1 over [0,1] then back to 0 over [1,2]
        let path = PathSkeleton {
            t0: 0.0,
            z0: PhasePoint::new(vec![0.0], vec![1.0]).unwrap(),
            events: vec![Event {
                time: 1.0,
                kind: EventKind::Bounce,
                state: PhasePoint::new(vec![1.0], vec![-1.0]).unwrap(),
            }],
            dynamics: Dynamics::Linear,
            horizon: 2.0,
        };
        assert!((path_time_average(&path, TestFunction::F1).unwrap() - 0.5).abs() < 1e-15);
        assert!((path_time_average(&path, TestFunction::F6).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iid_series_ess() {
        let mut rng = RngStream::new(5, 0);
        let xs = rng.normal_vec(100_000);
        let s = batch_means_ess(&xs).unwrap();
        assert!((s.ess / s.n as f64 - 1.0).abs() < 0.1, "{}", s.ess);
        assert!(s.ess <= s.n as f64);
    }

    #[test]
    fn ar1_series_ess() {
        let rho: f64 = 0.9;
        let mut rng = RngStream::new(6, 0);
        let mut x = rng.normal() / (1.0 - rho * rho).sqrt();
        let xs: Vec<f64> = (0..100_000)
            .map(|_| {
                x = rho * x + rng.normal();
                x
            })
            .collect();
        let s = batch_means_ess(&xs).unwrap();
        let expected = (1.0 - rho) / (1.0 + rho);
        let ratio = s.ess / s.n as f64;
        assert!((ratio / expected - 1.0).abs() < 0.2, "{ratio} vs {expected}");
    }

    #[test]
    fn blocking_matches_single_chain_for_iid() {
        let mut rng = RngStream::new(8, 0);
        let chains: Vec<Vec<f64>> = (0..10).map(|_| rng.normal_vec(10_000)).collect();
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let s = blocking_ess(&refs).unwrap();
        assert_eq!(s.n, 100_000);
        assert!((s.ess / 1e5 - 1.0).abs() < 0.1, "{}", s.ess);
    }

    fn ar1_chains(rho: f64, chains: usize, len: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = RngStream::new(seed, 0);
        (0..chains)
            .map(|_| {
                let mut x = rng.normal() / (1.0 - rho * rho).sqrt();
                (0..len)
                    .map(|_| {
                        x = rho * x + rng.normal();
                        x
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn blocking_recovers_ar1_ess() {
        let rho = 0.99;
        let chains = ar1_chains(rho, 20, 20_000, 12);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let ess = blocking_ess(&refs).unwrap().ess;
        let expected = 4e5 * (1.0 - rho) / (1.0 + rho);
        // level selection on ~100 correlation times per chain costs up to ~30%
        assert!((ess / expected - 1.0).abs() < 0.35, "{ess} vs {expected}");
    }

    #[test]
    fn blocking_beats_per_chain_batches_on_short_chains() {
        // each chain spans about five autocorrelation times
        let rho = 0.999;
        let chains = ar1_chains(rho, 40, 10_000, 13);
        let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
        let pooled = blocking_ess(&refs).unwrap().ess;
        let expected = 4e5 * (1.0 - rho) / (1.0 + rho);
        let per_chain: f64 = chains.iter().map(|c| batch_means_ess(c).unwrap().ess).sum();
        assert!(pooled / expected < 2.0 && pooled / expected > 0.5, "{pooled} vs {expected}");
        assert!(per_chain > pooled, "{per_chain} vs {pooled}");
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            batch_means_ess(&[1.0; 999]),
            Err(Error::TooFewSamples { .. })
        ));
        let path = straight(vec![0.0], vec![1.0], 10.0);
        assert!(estimate_ess(&path, TestFunction::F1, 0.25).is_err());
    }

    #[test]
    fn discretization_hits_grid() {
        let path = straight(vec![0.0], vec![2.0], 1000.0);
        let xs = discretize(&path, TestFunction::F1, 0.5).unwrap();
        assert_eq!(xs.len(), 2000);
        for (k, x) in xs.iter().enumerate() {
            assert!((x - k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn streaming_matches_stored_path() {
        let p = GaussianPotential::standard(5);
        let mut rng = RngStream::new(9, 0);
        let z0 = sample_stationary(&p, &mut rng).unwrap();
        let cfg = BpsConfig::new(1.0, 0.0, StopRule::Events(20_000));
        let path = simulate_bps(&p, &z0, &cfg, &mut RngStream::new(9, 1)).unwrap();
        for f in [TestFunction::F1, TestFunction::F3, TestFunction::F4] {
            let stored = discretize(&path, f, 0.25).unwrap();
            let streamed = {
                let mut sampler = GridSampler::new(f, 0.25, 0.0);
                let mut out = Vec::new();
                let mut proc = BpsProcess::new(&p, &z0, &cfg).unwrap();
                let mut r = RngStream::new(9, 1);
                for _ in 0..20_000 {
                    proc.advance_observed(f64::INFINITY, &mut r, |t, x, v, len| {
                        sampler.segment(t, x, v, len, &mut out)
                    })
                    .unwrap();
                }
                out
            };
            let n = stored.len().min(streamed.len());
            assert!(stored.len().abs_diff(streamed.len()) <= 1);
            for k in 0..n {
                assert!((stored[k] - streamed[k]).abs() < 1e-9 * (1.0 + stored[k].abs()), "{f} at {k}");
            }
        }
    }

    #[test]
    fn ess_is_discretization_stable() {
        let p = GaussianPotential::standard(10);
        let per_dt: Vec<f64> = [0.1, 0.25, 0.5]
            .iter()
            .map(|&dt| {
                let reps: Vec<f64> = (0..8)
                    .map(|r| {
                        let mut rng = RngStream::new(21, r);
                        let z0 = sample_stationary(&p, &mut rng).unwrap();
                        let s = streaming_ess(&p, &z0, 1.0, 0.0, 100_000, TestFunction::F1, dt, &mut rng).unwrap();
                        100_000.0 / s.ess
                    })
                    .collect();
                mean(&reps)
            })
            .collect();
        let reference = per_dt[1];
        for v in &per_dt {
            assert!((v / reference - 1.0).abs() < 0.2, "{per_dt:?}");
        }
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("const1".parse::<LambdaPolicy>().unwrap(), LambdaPolicy::Constant(1.0));
        assert_eq!("sqrtd".parse::<LambdaPolicy>().unwrap(), LambdaPolicy::SqrtD);
        assert_eq!("const:2.5".parse::<LambdaPolicy>().unwrap(), LambdaPolicy::Constant(2.5));
        assert!("const:-1".parse::<LambdaPolicy>().is_err());
        assert!("other".parse::<LambdaPolicy>().is_err());
        assert_eq!(LambdaPolicy::SqrtD.rate(100), 10.0);
        assert_eq!(LambdaPolicy::Constant(1.0).to_string(), "const1");
    }

    #[test]
    fn scaling_study_validates_dims() {
        let opts = ScalingOptions::default();
        assert!(run_scaling_study(&[10], LambdaPolicy::SqrtD, TestFunction::F1, 100_000, 4, &opts).is_err());
        assert!(run_scaling_study(&[100, 10], LambdaPolicy::SqrtD, TestFunction::F1, 100_000, 4, &opts).is_err());
    }

    #[test]
    fn clt_gaussian_unconditional_is_exact() {
        let mut rng = RngStream::new(3, 0);
        let n = 20_000;
        let ks = self_normalized_clt_check(
            &PowerPotential::new(2.0).unwrap(),
            &[1, 10, 100],
            n,
            Conditioning::None,
            &mut rng,
        )
        .unwrap();
        for k in ks {
            assert!(k < 1.5 * ks_null_band(n), "{k}");
        }
    }

    #[test]
    fn clt_quartic_conditional_improves() {
        let mut rng = RngStream::new(4, 0);
        let ks = self_normalized_clt_check(
            &PowerPotential::new(4.0).unwrap(),
            &[10, 100, 1000],
            20_000,
            Conditioning::FirstCoordinate { x1: 1.0, v1: 1.0 },
            &mut rng,
        )
        .unwrap();
        assert!(ks[0] > ks[1] && ks[1] > ks[2], "{ks:?}");
    }

    #[test]
    fn clt_small_n_still_returns() {
        let mut rng = RngStream::new(4, 1);
        let ks = self_normalized_clt_check(&PowerPotential::new(2.0).unwrap(), &[5], 10, Conditioning::None, &mut rng)
            .unwrap();
        assert!(ks[0] > 0.0 && ks[0] <= 1.0);
        assert!(ks_null_band(10) > 0.4);
    }

    #[test]
    fn weak_limit_rejects_bad_input() {
        let opts = WeakLimitOptions::default();
        assert!(weak_convergence_distance(&[10], 3.0, 5.0, 100, &opts).is_err());
        assert!(weak_convergence_distance(&[10], 2.0, -1.0, 100, &opts).is_err());
    }

    #[test]
    fn weak_limit_null_is_small() {
        let opts = WeakLimitOptions {
            n_boot: 50,
            ..Default::default()
        };
        let rep = weak_convergence_distance(&[10], 2.0, 2.0, 300, &opts).unwrap();
        assert!(rep.null.value.abs() < 3.0 * rep.null.se, "{:?}", rep.null);
    }
}
