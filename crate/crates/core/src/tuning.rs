//! Refreshment-rate formulas, contraction-rate certificates and bounce-rate
//! bounds.
//!
//! A certificate bundles the rate pair `(lambda_ref, mu)` with the weights
//! `(a, b, c)` of the quadratic form `a |dx|^2 + 2 b <dx, dv> + c |dv|^2` and
//! the smallest slack found while checking the matrix inequalities behind
//! the rate.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};

use nalgebra::{Matrix3, Vector3};
use serde_json::json;

use crate::error::{domain, Error, Result};
use crate::phase::norm;
use crate::potential::{HessianBounds, Potential};
use crate::rng::RngStream;
use crate::sym2::Sym2;

/// Slack below which a matrix inequality counts as violated.
pub const CERT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertFamily {
    /// Synchronous-coupling contraction for strongly log-concave targets.
    Wasserstein,
    /// The sharper rate available for Gaussian targets.
    Gaussian,
    /// Decay of the modified Sobolev norm.
    Hypocoercive,
}

impl CertFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertFamily::Wasserstein => "wasserstein",
            CertFamily::Gaussian => "gaussian",
            CertFamily::Hypocoercive => "hypocoercive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuningCertificate {
    pub family: CertFamily,
    pub bounds: HessianBounds,
    pub alpha: f64,
    pub lambda_ref: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Factor relating the forward and adjoint metrics.
    pub equivalence: f64,
    pub certified: bool,
    pub min_margin: f64,
    pub margins: Vec<Margin>,
}

impl TuningCertificate {
    fn fields(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("family".to_string(), self.family.as_str().to_string()),
            ("m".into(), format!("{:e}", self.bounds.lower)),
            ("M".into(), format!("{:e}", self.bounds.upper)),
            ("alpha".into(), format!("{:e}", self.alpha)),
            ("lambda_ref".into(), format!("{:.16e}", self.lambda_ref)),
            ("mu".into(), format!("{:.16e}", self.mu)),
            ("a".into(), format!("{:.16e}", self.a)),
            ("b".into(), format!("{:.16e}", self.b)),
            ("c".into(), format!("{:.16e}", self.c)),
            ("C".into(), format!("{:.16e}", self.equivalence)),
            ("certified".into(), self.certified.to_string()),
            ("min_margin".into(), format!("{:e}", self.min_margin)),
        ];
        for m in &self.margins {
            out.push((format!("margin.{}", m.name), format!("{:e}", m.value)));
        }
        out
    }

    /// One `key=value` line per field.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        let margins: serde_json::Map<String, serde_json::Value> = self
            .margins
            .iter()
            .map(|m| (m.name.to_string(), json!(m.value)))
            .collect();
        json!({
            "family": self.family.as_str(),
            "m": self.bounds.lower,
            "M": self.bounds.upper,
            "alpha": self.alpha,
            "lambda_ref": self.lambda_ref,
            "mu": self.mu,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "C": self.equivalence,
            "certified": self.certified,
            "min_margin": self.min_margin,
            "margins": margins,
        })
    }
}

impl fmt::Display for TuningCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_record())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(domain(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

/// `(sqrt(ac) + |b|) / (sqrt(ac) - |b|)`, the metric-equivalence factor.
pub fn equivalence_constant(a: f64, b: f64, c: f64) -> Result<f64> {
    let ac = a * c;
    if !(a > 0.0 && c > 0.0 && b * b < ac) {
        return Err(domain(format!("(a, b, c) = ({a}, {b}, {c}) is not a metric: need a, c > 0 and b^2 < ac")));
    }
    let b2 = b * b;
    Ok((ac + b2 + 2.0 * (ac * b2).sqrt()) / (ac - b2))
}

/// Closed-form parameters of the log-concave contraction result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParameters {
    pub lambda_ref: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn wasserstein_parameters(m: f64, big_m: f64, alpha: f64) -> Result<RateParameters> {
    HessianBounds::new(m, big_m)?;
    check_alpha(alpha)?;
    let s = m + big_m;
    let rs = s.sqrt();
    let ratio = m / s;
    Ok(RateParameters {
        lambda_ref: (2.0 * rs - (1.0 - alpha) * m / rs) / (1.0 - alpha * alpha),
        mu: (1.0 + alpha) * m / rs - alpha * m.powf(1.5) / (2.0 * s),
        a: 1.0,
        b: (1.0 + alpha - alpha * ratio.powf(0.75) + 0.75 * alpha * ratio) / (2.0 * rs),
        c: (1.0 + alpha - 0.5 * alpha * ratio.sqrt()) / s,
    })
}

fn normalized(value: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        value / scale
    }
}

/// Slacks of the five scalar inequalities equivalent to `V + mW >= 0` and
/// `V + MW >= 0`, each divided by the sum of magnitudes of its terms. When
/// `m == M` the two `m` conditions duplicate the `M` ones and are omitted.
#[allow(clippy::too_many_arguments)]
pub fn wasserstein_slacks(
    m: f64,
    big_m: f64,
    alpha: f64,
    lambda_ref: f64,
    mu: f64,
    a: f64,
    b: f64,
    c: f64,
) -> Vec<Margin> {
    let damped = lambda_ref * (1.0 - alpha * alpha);
    let diag_v = -c * mu + c * damped - 2.0 * b;
    let diag_scale = (c * mu).abs() + (c * damped).abs() + (2.0 * b).abs();
    let corner = |k: f64| -mu * a + 2.0 * k * b;
    let corner_scale = |k: f64| (mu * a).abs() + (2.0 * k * b).abs();
    let cross = |k: f64| -a + b * lambda_ref * (1.0 - alpha) - mu * b + k * c;
    let cross_scale = |k: f64| a.abs() + (b * lambda_ref * (1.0 - alpha)).abs() + (mu * b).abs() + (k * c).abs();
    let det = |k: f64| {
        normalized(
            corner(k) * diag_v - cross(k).powi(2),
            corner_scale(k) * diag_scale + cross_scale(k).powi(2),
        )
    };
    let mut out = vec![
        Margin {
            name: "ineq1",
            value: normalized(corner(big_m), corner_scale(big_m)),
        },
        Margin {
            name: "ineq3",
            value: normalized(diag_v, diag_scale),
        },
        Margin {
            name: "ineq4",
            value: det(big_m),
        },
    ];
    if m != big_m {
        out.insert(
            1,
            Margin {
                name: "ineq2",
                value: normalized(corner(m), corner_scale(m)),
            },
        );
        out.push(Margin {
            name: "ineq5",
            value: det(m),
        });
    }
    out
}

/// `(all inequalities hold, smallest normalized slack)`.
#[allow(clippy::too_many_arguments)]
pub fn verify_wasserstein_inequalities(
    m: f64,
    big_m: f64,
    alpha: f64,
    lambda_ref: f64,
    mu: f64,
    a: f64,
    b: f64,
    c: f64,
) -> (bool, f64) {
    let worst = wasserstein_slacks(m, big_m, alpha, lambda_ref, mu, a, b, c)
        .iter()
        .map(|s| s.value)
        .fold(f64::INFINITY, f64::min);
    (worst >= -CERT_TOL, worst)
}

/// Log-concave-target rates with their certificate.
pub fn tune_wasserstein(m: f64, big_m: f64, alpha: f64) -> Result<TuningCertificate> {
    let p = wasserstein_parameters(m, big_m, alpha)?;
    let margins = wasserstein_slacks(m, big_m, alpha, p.lambda_ref, p.mu, p.a, p.b, p.c);
    let min_margin = margins.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    Ok(TuningCertificate {
        family: CertFamily::Wasserstein,
        bounds: HessianBounds::new(m, big_m)?,
        alpha,
        lambda_ref: p.lambda_ref,
        mu: p.mu,
        a: p.a,
        b: p.b,
        c: p.c,
        equivalence: equivalence_constant(p.a, p.b, p.c)?,
        certified: min_margin >= -CERT_TOL,
        min_margin,
        margins,
    })
}

/// Matrices `(V, W)` of the Gaussian-target argument, in the frame where the
/// smallest precision eigenvalue is 1.
fn gaussian_matrices(alpha: f64) -> (Sym2, Sym2, RateParameters) {
    let p = RateParameters {
        lambda_ref: 2.0 / (1.0 - alpha),
        mu: 1.0 / 3.0,
        a: 1.0,
        b: 0.25,
        c: 1.0,
    };
    let off = p.b * p.lambda_ref * (1.0 - alpha) - p.mu * p.b;
    let v = Sym2::new(0.0, off, -p.c * p.mu + p.c * p.lambda_ref * (1.0 - alpha * alpha) - 2.0 * p.b);
    let w = Sym2::new(2.0 * p.b - p.mu * p.a, p.c - p.a, 0.0);
    (v, w, p)
}

fn psd_margin(s: &Sym2) -> f64 {
    s.min_eigenvalue() / s.frobenius().max(1.0)
}

/// Gaussian-target rates for precision bounded below by `m`. The
/// certificate holds for every upper bound `M >= m` because `W >= 0`.
pub fn tune_gaussian(m: f64, alpha: f64) -> Result<TuningCertificate> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(domain(format!("m must be positive and finite, got {m}")));
    }
    check_alpha(alpha)?;
    let (v, w, unit) = gaussian_matrices(alpha);
    let margins = vec![
        Margin {
            name: "V+mW",
            value: psd_margin(&(v + w)),
        },
        Margin {
            name: "W",
            value: psd_margin(&w),
        },
    ];
    let min_margin = margins.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
    let root = m.sqrt();
    let (b, c) = (unit.b / root, unit.c / m);
    Ok(TuningCertificate {
        family: CertFamily::Gaussian,
        bounds: HessianBounds::new(m, m)?,
        alpha,
        lambda_ref: unit.lambda_ref * root,
        mu: unit.mu * root,
        a: 1.0,
        b,
        c,
        equivalence: equivalence_constant(1.0, b, c)?,
        certified: min_margin >= -CERT_TOL,
        min_margin,
        margins,
    })
}

/// The four matrices of the hypocoercivity argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertMatrices {
    pub v: Sym2,
    pub w: Sym2,
    pub z: Sym2,
    pub a: Sym2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ASource {
    /// The closed-form `A` with the `(-3 + 2m - 2M)(-1 + alpha)` factor.
    Printed,
    /// Maximizer of the smallest eigenvalue margin, found numerically.
    Optimized,
}

impl ASource {
    pub fn as_str(&self) -> &'static str {
        match self {
            ASource::Printed => "printed",
            ASource::Optimized => "optimized",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypocoReport {
    pub params: RateParameters,
    pub bounds: HessianBounds,
    pub alpha: f64,
    /// Matrices at the original scale, `A` being the one used.
    pub matrices: CertMatrices,
    pub source: ASource,
    /// Eigenvalue margins of `A`, `Z + A`, `V + mW - A`, `V + MW - A`,
    /// evaluated after rescaling to `M = 1`.
    pub margins: [Margin; 4],
    pub min_margin: f64,
    pub certified: bool,
}

impl HypocoReport {
    pub fn certificate(&self) -> Result<TuningCertificate> {
        let p = self.params;
        let margins = self.margins.to_vec();
        Ok(TuningCertificate {
            family: CertFamily::Hypocoercive,
            bounds: self.bounds,
            alpha: self.alpha,
            lambda_ref: p.lambda_ref,
            mu: p.mu,
            a: p.a,
            b: p.b,
            c: p.c,
            equivalence: equivalence_constant(p.a, p.b, p.c)?,
            certified: self.certified,
            min_margin: self.min_margin,
            margins,
        })
    }
}

/// `V`, `W`, `Z` and the closed-form `A` at `(m, M, alpha)`.
pub fn hypoco_matrices(m: f64, big_m: f64, alpha: f64) -> Result<CertMatrices> {
    let p = wasserstein_parameters(m, big_m, alpha)?;
    let (lam, mu, a, b, c) = (p.lambda_ref, p.mu, p.a, p.b, p.c);
    let v = Sym2::new(
        2.0 * a * (1.0 - alpha) * lam - a * mu,
        -a - (1.0 - alpha) * b * lam + b * mu,
        2.0 * b - c * mu,
    );
    let w = Sym2::new(-2.0 * b, c, 0.0);
    let z = Sym2::new(2.0 * a * alpha * lam, -(1.0 + alpha) * b * lam, 2.0 * c * lam);
    let k = (-3.0 + 2.0 * m - 2.0 * big_m) * (-1.0 + alpha);
    let s = m + big_m;
    let printed = Sym2::new(
        4.0 * k / (3.0 * s.sqrt() * (1.0 + alpha)),
        -k / (3.0 * s),
        -k * (1.0 + alpha) / (3.0 * s.powf(1.5)),
    );
    Ok(CertMatrices { v, w, z, a: printed })
}

/// `[A, Z + A, V + mW - A, V + MW - A]`
fn lemma_matrices(cm: &CertMatrices, m: f64, big_m: f64) -> [Sym2; 4] {
    [
        cm.a,
        cm.z + cm.a,
        cm.v + cm.w * m - cm.a,
        cm.v + cm.w * big_m - cm.a,
    ]
}

const LEMMA_NAMES: [&str; 4] = ["A", "Z+A", "V+mW-A", "V+MW-A"];

fn lemma_margins(cm: &CertMatrices, m: f64, big_m: f64) -> [f64; 4] {
    lemma_matrices(cm, m, big_m).map(|s| s.min_eigenvalue())
}

/// Maximizes `min_i lambda_min(S_i(A))` over symmetric `A` by the ellipsoid
/// method; the objective is concave, so the best iterate converges to the
/// global optimum. Returns `(A, margin)`.
pub fn optimize_hypoco_a(v: Sym2, w: Sym2, z: Sym2, m: f64, big_m: f64) -> (Sym2, f64) {
    let objective = |a: Sym2| -> (f64, Vector3<f64>) {
        let cm = CertMatrices { v, w, z, a };
        let mats = lemma_matrices(&cm, m, big_m);
        let (k, s) = mats
            .iter()
            .enumerate()
            .map(|(k, s)| (k, s.min_eigenvalue()))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("four matrices");
        let u = mats[k].min_eigenvector();
        let dir = Vector3::new(u[0] * u[0], 2.0 * u[0] * u[1], u[1] * u[1]);
        // A enters the first two with +, the last two with -
        (s, if k < 2 { dir } else { -dir })
    };
    let to_sym = |x: &Vector3<f64>| Sym2::new(x[0], x[1], x[2]);
    let upper = (v + w * m).frobenius().max((v + w * big_m).frobenius());
    let radius = 2.0 * upper + z.frobenius() + 1.0;
    let start = (v + w * m) * 0.5;
    let mut center = Vector3::new(start.xx, start.xv, start.vv);
    let mut shape = Matrix3::identity() * (radius * radius);
    let (mut best_a, mut best) = (to_sym(&center), objective(to_sym(&center)).0);
    let n = 3.0;
    for _ in 0..4000 {
        let (value, grad) = objective(to_sym(&center));
        if value > best {
            best = value;
            best_a = to_sym(&center);
        }
        // discard the half-space where the objective cannot improve
        let h = -grad;
        let ph = shape * h;
        let width = h.dot(&ph);
        if !(width > 0.0) || width.sqrt() < 1e-15 * radius {
            break;
        }
        let step = ph / width.sqrt();
        center -= step / (n + 1.0);
        shape = (shape - step * step.transpose() * (2.0 / (n + 1.0))) * (n * n / (n * n - 1.0));
        shape = (shape + shape.transpose()) * 0.5;
    }
    (best_a, best)
}

/// Checks the four lemma conditions. The closed-form `A` is tried first;
/// if it fails, an optimized `A` is used. All checks run after rescaling to
/// `M = 1`, under which the conditions are invariant.
pub fn verify_hypoco_certificate(m: f64, big_m: f64, alpha: f64) -> Result<HypocoReport> {
    let bounds = HessianBounds::new(m, big_m)?;
    check_alpha(alpha)?;
    let params = wasserstein_parameters(m, big_m, alpha)?;
    let original = hypoco_matrices(m, big_m, alpha)?;
    // Congruence by diag(k^{1/4}, k^{-1/4}) maps the matrices at (km, kM) to
    // k^0-scaled copies of those at (m, M); with k = 1/M we land on M = 1.
    let unit = hypoco_matrices(m / big_m, 1.0, alpha)?;
    let (dx, dv) = (big_m.powf(0.25), big_m.powf(-0.25));
    let back = |s: Sym2| s.congruence_diag(dx, dv);

    let printed_in_unit = original.a.congruence_diag(1.0 / dx, 1.0 / dv);
    let printed_margins = lemma_margins(&CertMatrices { a: printed_in_unit, ..unit }, m / big_m, 1.0);
    let printed_ok = printed_margins.iter().all(|&x| x >= -CERT_TOL);

    let (source, a_unit, margins) = if printed_ok {
        (ASource::Printed, printed_in_unit, printed_margins)
    } else {
        let (a, _) = optimize_hypoco_a(unit.v, unit.w, unit.z, m / big_m, 1.0);
        (ASource::Optimized, a, lemma_margins(&CertMatrices { a, ..unit }, m / big_m, 1.0))
    };
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let margins = std::array::from_fn(|i| Margin {
        name: LEMMA_NAMES[i],
        value: margins[i],
    });
    Ok(HypocoReport {
        params,
        bounds,
        alpha,
        matrices: CertMatrices {
            a: if source == ASource::Printed { original.a } else { back(a_unit) },
            ..original
        },
        source,
        margins,
        min_margin,
        certified: min_margin >= -CERT_TOL,
    })
}

/// Outcome of a randomized search for a violation of
/// `Tr(VX + WP + ZQ) >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceCheck {
    pub passed: bool,
    /// Smallest normalized trace seen.
    pub worst: f64,
    pub trials: usize,
}

fn random_contraction(rng: &mut RngStream) -> Sym2 {
    // O diag(u1, u2) O^T with eigenvalues in [0, 1]
    let t = 2.0 * PI * rng.uniform();
    let u = [t.cos(), t.sin()];
    let w = [-u[1], u[0]];
    Sym2::outer(u) * rng.uniform() + Sym2::outer(w) * rng.uniform()
}

/// Samples `X >= 0`, `0 <= Q <= X`, `mX <= P <= MX` and evaluates the trace.
/// Besides random draws, rank-one `X` along the least eigenvectors of the
/// lemma matrices are tried, with `P` and `Q` at the extremes.
pub fn trace_inequality_check(
    cm: &CertMatrices,
    m: f64,
    big_m: f64,
    trials: usize,
    rng: &mut RngStream,
) -> TraceCheck {
    let scale = cm.v.frobenius() + big_m * cm.w.frobenius() + cm.z.frobenius();
    let value = |x: &Sym2, p: &Sym2, q: &Sym2| {
        (cm.v.inner(x) + cm.w.inner(p) + cm.z.inner(q)) / (scale * x.trace()).max(f64::MIN_POSITIVE)
    };
    let mut worst = f64::INFINITY;
    let mut targeted: Vec<Sym2> = lemma_matrices(cm, m, big_m).to_vec();
    targeted.push(cm.v + cm.w * m);
    targeted.push(cm.v + cm.w * big_m);
    for s in &targeted {
        let x = Sym2::outer(s.min_eigenvector());
        for p in [x * m, x * big_m] {
            for q in [Sym2::ZERO, x] {
                worst = worst.min(value(&x, &p, &q));
            }
        }
    }
    for _ in 0..trials {
        let g = [[rng.normal(), rng.normal()], [rng.normal(), rng.normal()]];
        let x = Sym2::identity().congruence(g);
        let root = x.sqrt_psd();
        let r = [[root.xx, root.xv], [root.xv, root.vv]];
        let q = random_contraction(rng).congruence(r);
        let p = (Sym2::identity() * m + random_contraction(rng) * (big_m - m)).congruence(r);
        worst = worst.min(value(&x, &p, &q));
    }
    TraceCheck {
        passed: worst >= -CERT_TOL,
        worst,
        trials,
    }
}

/// Bracket `[sqrt(m (d - 1/2)), sqrt(M d)] / sqrt(2 pi)` for the stationary
/// bounce rate.
pub fn lambda_b_bounds(m: f64, big_m: f64, d: usize) -> Result<(f64, f64)> {
    HessianBounds::new(m, big_m)?;
    if d == 0 {
        return Err(domain("dimension must be >= 1"));
    }
    let d = d as f64;
    let two_pi = (2.0 * PI).sqrt();
    Ok(((m * (d - 0.5)).sqrt() / two_pi, (big_m * d).sqrt() / two_pi))
}

/// `Gamma(s + 3/4) / (Gamma(s + 1/4) sqrt(s))`.
pub fn gamma_ratio(s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(domain(format!("s must be positive and finite, got {s}")));
    }
    Ok((libm::lgamma(s + 0.75) - libm::lgamma(s + 0.25) - 0.5 * s.ln()).exp())
}

/// Whether `Gamma(s + 3/4) / Gamma(s + 1/4) > sqrt(s)`.
pub fn gamma_ratio_check(s: f64) -> Result<bool> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(domain(format!("s must be positive and finite, got {s}")));
    }
    Ok(libm::lgamma(s + 0.75) - libm::lgamma(s + 0.25) > 0.5 * s.ln())
}

/// Monte Carlo estimate of the stationary bounce rate with its standard
/// error. Integrating out the Gaussian velocity leaves
/// `E |grad U(X)| / sqrt(2 pi)`.
pub fn estimate_lambda_b(p: &dyn Potential, n_samples: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: n_samples,
        });
    }
    let mut grad = vec![0.0; p.dim()];
    let (mut sum, mut sum2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let x = p.sample_position(rng)?;
        p.gradient(&x, &mut grad);
        let g = norm(&grad);
        sum += g;
        sum2 += g * g;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean) * n / (n - 1.0);
    let k = 1.0 / (2.0 * PI).sqrt();
    Ok((k * mean, k * (var.max(0.0) / n).sqrt()))
}

/// Largest certifiable `mu` found by bisection, with the `(b, c)` achieving it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MuSearch {
    pub mu: f64,
    pub b: f64,
    pub c: f64,
}

/// Numerical search for the largest `mu` for which some `(b, c)` (with
/// `a = 1`) satisfies the five inequalities at the given `lambda_ref`.
/// Not a certificate: only a grid of `(b, c)` is explored.
pub fn maximize_mu(m: f64, big_m: f64, alpha: f64, lambda_ref: f64) -> Result<MuSearch> {
    let base = wasserstein_parameters(m, big_m, alpha)?;
    if !(lambda_ref > 0.0 && lambda_ref.is_finite()) {
        return Err(domain(format!("lambda_ref must be positive, got {lambda_ref}")));
    }
    let n = 61;
    let factors: Vec<f64> = (0..n)
        .map(|i| (0.05f64.ln() + (100.0f64.ln()) * i as f64 / (n - 1) as f64).exp())
        .chain(std::iter::once(1.0))
        .collect();
    let feasible = |mu: f64| -> Option<(f64, f64)> {
        for &fb in &factors {
            for &fc in &factors {
                let (b, c) = (base.b * fb, base.c * fc);
                if b * b >= c {
                    continue;
                }
                if verify_wasserstein_inequalities(m, big_m, alpha, lambda_ref, mu, 1.0, b, c).0 {
                    return Some((b, c));
                }
            }
        }
        None
    };
    let mut lo = 0.0;
    let mut arg = feasible(0.0).ok_or_else(|| Error::Numerical("no feasible (b, c) even at mu = 0".into()))?;
    let mut hi = lambda_ref * (1.0 - alpha * alpha);
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        match feasible(mid) {
            Some(bc) => {
                lo = mid;
                arg = bc;
            }
            None => hi = mid,
        }
    }
    Ok(MuSearch {
        mu: lo,
        b: arg.0,
        c: arg.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::GaussianPotential;
    use std::f64::consts::SQRT_2;

    #[test]
    fn wasserstein_reference_point() {
        let cert = tune_wasserstein(1.0, 1.0, 0.0).unwrap();
        assert!((cert.lambda_ref - 3.0 / SQRT_2).abs() < 1e-12);
        assert!((cert.mu - 1.0 / SQRT_2).abs() < 1e-12);
        assert_eq!(cert.a, 1.0);
        assert!((cert.b - 1.0 / (2.0 * SQRT_2)).abs() < 1e-12);
        assert!((cert.c - 0.5).abs() < 1e-12);
        assert!((cert.equivalence - 3.0).abs() < 1e-12);
        assert!(cert.b * cert.b < cert.a * cert.c);
        assert!(cert.certified, "{cert}");
        // m == M drops the duplicated conditions
        assert_eq!(cert.margins.len(), 3);
    }

    #[test]
    fn inflated_mu_breaks_the_certificate() {
        let p = wasserstein_parameters(1.0, 1.0, 0.0).unwrap();
        let (ok, margin) = verify_wasserstein_inequalities(1.0, 1.0, 0.0, p.lambda_ref, 1.2 * p.mu, p.a, p.b, p.c);
        assert!(!ok && margin < 0.0);
        // no (b, c) on a dense grid rescues it at fixed lambda_ref
        let mut rescued = false;
        for i in 1..200 {
            for j in 1..200 {
                let (b, c) = (i as f64 * 0.01, j as f64 * 0.01);
                if b * b < c
                    && verify_wasserstein_inequalities(1.0, 1.0, 0.0, p.lambda_ref, 1.2 * p.mu, 1.0, b, c).0
                {
                    rescued = true;
                }
            }
        }
        assert!(!rescued);
    }

    #[test]
    fn wasserstein_grid_certifies() {
        for i in 0..50 {
            let r = 1e-3 + (1.0 - 1e-3) * i as f64 / 49.0;
            for j in 0..20 {
                let alpha = 0.99 * j as f64 / 19.0;
                let cert = tune_wasserstein(r, 1.0, alpha).unwrap();
                assert!(cert.certified && cert.lambda_ref > 0.0 && cert.mu > 0.0, "{cert}");
                assert!(cert.b * cert.b < cert.a * cert.c);
            }
        }
    }

    #[test]
    fn homogeneity_of_rates() {
        let base = tune_wasserstein(0.3, 2.0, 0.4).unwrap();
        for &k in &[0.01, 7.0, 1e3] {
            let s = tune_wasserstein(0.3 * k, 2.0 * k, 0.4).unwrap();
            let r = k.sqrt();
            assert!((s.lambda_ref / (base.lambda_ref * r) - 1.0).abs() < 1e-12);
            assert!((s.mu / (base.mu * r) - 1.0).abs() < 1e-12);
            assert!((s.b * r / base.b - 1.0).abs() < 1e-12);
            assert!((s.c * k / base.c - 1.0).abs() < 1e-12);
            assert_eq!(s.certified, base.certified);
        }
    }

    #[test]
    fn gaussian_examples() {
        let g = tune_gaussian(1.0, 0.0).unwrap();
        assert!((g.lambda_ref - 2.0).abs() < 1e-15 && (g.mu - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.equivalence - 5.0 / 3.0).abs() < 1e-12);
        assert!(g.certified && g.b * g.b < g.a * g.c);
        let g4 = tune_gaussian(4.0, 0.0).unwrap();
        assert!((g4.lambda_ref - 4.0).abs() < 1e-15 && (g4.mu - 2.0 / 3.0).abs() < 1e-15);
        for j in 0..20 {
            assert!(tune_gaussian(2.5, 0.99 * j as f64 / 19.0).unwrap().certified);
        }
        assert!(tune_gaussian(0.0, 0.0).is_err());
        assert!(tune_gaussian(1.0, 1.0).is_err());
    }

    #[test]
    fn printed_a_is_not_positive_semidefinite() {
        let cm = hypoco_matrices(1.0, 2.0, 0.5).unwrap();
        assert!(cm.a.min_eigenvalue() < 0.0);
    }

    #[test]
    fn hypoco_reference_point() {
        let r = verify_hypoco_certificate(1.0, 2.0, 0.5).unwrap();
        assert!(r.certified, "{r:?}");
        assert_eq!(r.source, ASource::Optimized);
        let [lo, _] = r.matrices.a.eigenvalues();
        assert!(lo >= -CERT_TOL);
        let mut rng = RngStream::new(12, 0);
        let check = trace_inequality_check(&r.matrices, 1.0, 2.0, 100_000, &mut rng);
        assert!(check.passed, "{check:?}");
    }

    #[test]
    fn hypoco_tight_point_and_scale_invariance() {
        let tight = verify_hypoco_certificate(1.0, 1.0, 0.0).unwrap();
        assert!(tight.certified && tight.min_margin.abs() < 1e-9, "{tight:?}");
        let a = verify_hypoco_certificate(0.2, 1.0, 0.3).unwrap();
        let b = verify_hypoco_certificate(20.0, 100.0, 0.3).unwrap();
        assert!((a.min_margin - b.min_margin).abs() < 1e-12);
        assert!(a.min_margin > 0.0);
        // the rescaled-back A satisfies the conditions at the original scale
        let orig = lemma_margins(&b.matrices, 20.0, 100.0);
        assert!(orig.iter().all(|&x| x >= -1e-9), "{orig:?}");
    }

    #[test]
    fn trace_check_examples() {
        let mut rng = RngStream::new(13, 0);
        let identity = CertMatrices {
            v: Sym2::identity(),
            w: Sym2::ZERO,
            z: Sym2::ZERO,
            a: Sym2::ZERO,
        };
        assert!(trace_inequality_check(&identity, 1.0, 3.0, 10_000, &mut rng).passed);
        // break V + mW >= 0 on purpose
        let good = verify_hypoco_certificate(1.0, 2.0, 0.5).unwrap().matrices;
        let bad = CertMatrices {
            v: good.v - (good.v + good.w * 1.0) * 2.0,
            ..good
        };
        assert!(!trace_inequality_check(&bad, 1.0, 2.0, 1000, &mut rng).passed);
        // Q = 0 and P = mX reduce the trace to Tr((V + mW) X)
        for _ in 0..10_000 {
            let g = [[rng.normal(), rng.normal()], [rng.normal(), rng.normal()]];
            let x = Sym2::identity().congruence(g);
            let t = good.v.inner(&x) + good.w.inner(&(x * 1.0));
            assert!(t >= -1e-12 * x.trace());
        }
    }

    #[test]
    fn margins_vary_smoothly() {
        let n = 60;
        let margins: Vec<f64> = (0..n)
            .map(|i| {
                let r = 1e-3 + (1.0 - 1e-3) * i as f64 / (n - 1) as f64;
                verify_hypoco_certificate(r, 1.0, 0.5).unwrap().min_margin
            })
            .collect();
        let steps: Vec<f64> = margins.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let mut sorted = steps.clone();
        sorted.sort_by(f64::total_cmp);
        let typical = sorted[sorted.len() / 2].max(1e-12);
        assert!(steps.iter().all(|&s| s <= 10.0 * typical + 1e-9), "{steps:?}");
    }

    #[test]
    fn bounce_rate_bounds() {
        let (lo, hi) = lambda_b_bounds(1.0, 1.0, 1).unwrap();
        assert!((lo - 0.28209479177387814).abs() < 1e-12);
        assert!((hi - 0.3989422804014327).abs() < 1e-12);
        assert!(lo < 1.0 / PI && 1.0 / PI < hi);
        let mut prev = 0.0;
        for d in 1..50 {
            let (l, _) = lambda_b_bounds(1.0, 2.0, d).unwrap();
            assert!(l > prev);
            prev = l;
        }
        assert!(lambda_b_bounds(2.0, 2.0, 5).unwrap().0 > lambda_b_bounds(1.0, 2.0, 5).unwrap().0);
        assert!(lambda_b_bounds(2.0, 1.0, 5).is_err());
    }

    #[test]
    fn gamma_lemma() {
        for d in 1..=10_000 {
            assert!(gamma_ratio_check((d as f64 - 0.5) / 2.0).unwrap());
        }
        let one = libm::tgamma(1.75) / libm::tgamma(1.25);
        assert!((one - 1.013967360100927).abs() < 1e-12);
        assert!((gamma_ratio(1.0).unwrap() - one).abs() < 1e-12);
        assert!((gamma_ratio(1e6).unwrap() - 1.0).abs() < 1e-4);
        assert!(gamma_ratio_check(0.0).is_err());
    }

    #[test]
    fn lambda_b_estimate_in_one_dimension() {
        let p = GaussianPotential::standard(1);
        let mut rng = RngStream::new(14, 0);
        let (est, se) = estimate_lambda_b(&p, 200_000, &mut rng).unwrap();
        assert!((est - 1.0 / PI).abs() < 3.0 * se, "{est} ± {se}");
    }

    #[test]
    fn mu_search_beats_closed_form() {
        let p = wasserstein_parameters(0.5, 1.0, 0.2).unwrap();
        let s = maximize_mu(0.5, 1.0, 0.2, p.lambda_ref).unwrap();
        assert!(s.mu >= p.mu * (1.0 - 1e-9), "{} vs {}", s.mu, p.mu);
        assert!(verify_wasserstein_inequalities(0.5, 1.0, 0.2, p.lambda_ref, s.mu, 1.0, s.b, s.c).0);
    }

    #[test]
    fn record_lists_fields() {
        let rec = tune_wasserstein(1.0, 2.0, 0.1).unwrap().to_record();
        for key in ["family=", "lambda_ref=", "mu=", "C=", "certified=", "margin.ineq5="] {
            assert!(rec.contains(key), "{rec}");
        }
        let j = tune_gaussian(1.0, 0.0).unwrap().to_json();
        assert_eq!(j["family"], "gaussian");
    }
}
