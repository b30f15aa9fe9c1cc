//! Target potentials `U = -log density` and stationary sampling.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{check_dim, domain, Error, Result};
use crate::phase::{dot, PhasePoint};
use crate::poly::Poly;
use crate::quadrature::GaussLegendre;
use crate::rng::RngStream;

/// Uniform bounds `lower I <= Hess U <= upper I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HessianBounds {
    pub lower: f64,
    pub upper: f64,
}

impl HessianBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(domain(format!(
                "Hessian bounds need 0 < m <= M < inf, got m={lower}, M={upper}"
            )));
        }
        Ok(Self { lower, upper })
    }
}

/// Closed-form representation of a centred Gaussian target, used to dispatch
/// to exact dynamics.
#[derive(Clone, Debug)]
pub enum GaussianForm {
    /// Precision `scale * I`.
    Isotropic { scale: f64 },
    Dense(Arc<DenseGaussian>),
}

/// Dense precision matrix with its eigendecomposition, computed once.
#[derive(Debug)]
pub struct DenseGaussian {
    precision: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DenseGaussian {
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        let d = precision.nrows();
        if d == 0 || precision.ncols() != d {
            return Err(domain("precision matrix must be square and non-empty"));
        }
        let asym = (&precision - precision.transpose()).abs().max();
        if asym > 1e-12 * precision.abs().max().max(1.0) {
            return Err(domain("precision matrix must be symmetric"));
        }
        let eig = SymmetricEigen::new(precision.clone());
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(domain("precision matrix must be positive definite"));
        }
        Ok(Self {
            precision,
            eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are orthonormal eigenvectors, ordered like `eigenvalues`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d).map(|j| self.precision[(i, j)] * x[j]).sum();
        }
    }

    /// Coordinates of `x` in the eigenbasis.
    pub fn to_modes(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|k| (0..d).map(|i| self.eigenvectors[(i, k)] * x[i]).sum())
            .collect()
    }

    pub fn from_modes(&self, y: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|i| (0..d).map(|k| self.eigenvectors[(i, k)] * y[k]).sum())
            .collect()
    }
}

/// Negative log-density of a target on `R^d`.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], out: &mut [f64]);

    fn hessian_bounds(&self) -> Option<HessianBounds> {
        None
    }

    fn gaussian(&self) -> Option<&GaussianForm> {
        None
    }

    /// The directional derivative `t -> <grad U(x + t v), v>` as a polynomial,
    /// when it has one. Potentials returning `Some` get exact bounce-time
    /// inversion instead of thinning.
    fn line_rate(&self, _x: &[f64], _v: &[f64]) -> Option<Poly> {
        None
    }

    /// Exact draw from `exp(-U)`.
    fn sample_position(&self, _rng: &mut RngStream) -> Result<Vec<f64>> {
        Err(Error::Unsupported(
            "exact stationary sampling for this potential".into(),
        ))
    }

    fn gradient_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.gradient(x, &mut g);
        g
    }
}

/// `U(x) + |v|^2 / 2`.
pub fn hamiltonian(p: &dyn Potential, z: &PhasePoint) -> Result<f64> {
    check_dim(p.dim(), z.x.len())?;
    check_dim(p.dim(), z.v.len())?;
    Ok(p.value(&z.x) + 0.5 * dot(&z.v, &z.v))
}

/// Draws `x ~ exp(-U)` and `v ~ N(0, I)` independently.
pub fn sample_stationary(p: &dyn Potential, rng: &mut RngStream) -> Result<PhasePoint> {
    let x = p.sample_position(rng)?;
    let v = rng.normal_vec(p.dim());
    Ok(PhasePoint { x, v })
}

/// Centred Gaussian target.
#[derive(Clone, Debug)]
pub struct GaussianPotential {
    dim: usize,
    form: GaussianForm,
    bounds: HessianBounds,
}

impl GaussianPotential {
    pub fn standard(dim: usize) -> Self {
        Self::isotropic(dim, 1.0).expect("unit precision is valid")
    }

    pub fn isotropic(dim: usize, scale: f64) -> Result<Self> {
        if dim == 0 {
            return Err(domain("dimension must be >= 1"));
        }
        Ok(Self {
            dim,
            form: GaussianForm::Isotropic { scale },
            bounds: HessianBounds::new(scale, scale)?,
        })
    }

    pub fn with_precision(precision: DMatrix<f64>) -> Result<Self> {
        let dense = DenseGaussian::new(precision)?;
        let lo = dense.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dense.eigenvalues.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            dim: dense.dim(),
            bounds: HessianBounds::new(lo, hi)?,
            form: GaussianForm::Dense(Arc::new(dense)),
        })
    }

    pub fn form(&self) -> &GaussianForm {
        &self.form
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match &self.form {
            GaussianForm::Isotropic { scale } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = scale * xi;
                }
            }
            GaussianForm::Dense(g) => g.apply(x, out),
        }
    }
}

impl Potential for GaussianPotential {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        match &self.form {
            GaussianForm::Isotropic { scale } => 0.5 * scale * dot(x, x),
            GaussianForm::Dense(_) => {
                let mut hx = vec![0.0; self.dim];
                self.apply(x, &mut hx);
                0.5 * dot(x, &hx)
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.apply(x, out)
    }

    fn hessian_bounds(&self) -> Option<HessianBounds> {
        Some(self.bounds)
    }

    fn gaussian(&self) -> Option<&GaussianForm> {
        Some(&self.form)
    }

    fn line_rate(&self, x: &[f64], v: &[f64]) -> Option<Poly> {
        let (a, s) = match &self.form {
            GaussianForm::Isotropic { scale } => (scale * dot(x, v), scale * dot(v, v)),
            GaussianForm::Dense(g) => {
                let mut hv = vec![0.0; self.dim];
                g.apply(v, &mut hv);
                (dot(x, &hv), dot(v, &hv))
            }
        };
        Some(Poly(vec![a, s]))
    }

    fn sample_position(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        match &self.form {
            GaussianForm::Isotropic { scale } => {
                let sd = 1.0 / scale.sqrt();
                Ok((0..self.dim).map(|_| sd * rng.normal()).collect())
            }
            GaussianForm::Dense(g) => {
                let y: Vec<f64> = g
                    .eigenvalues
                    .iter()
                    .map(|l| rng.normal() / l.sqrt())
                    .collect();
                Ok(g.from_modes(&y))
            }
        }
    }
}

/// One-dimensional potential used as the factor of a product target.
pub trait ScalarPotential: Send + Sync + Clone + 'static {
    fn value(&self, x: f64) -> f64;

    fn derivative(&self, x: f64) -> f64;

    fn curvature_bounds(&self) -> Option<HessianBounds> {
        None
    }

    /// `u'` as a polynomial, when it is one.
    fn derivative_poly(&self) -> Option<Poly> {
        None
    }

    /// `Some(s)` when `u(x) = s x^2 / 2`.
    fn quadratic_scale(&self) -> Option<f64> {
        None
    }

    /// Direct sampler for `exp(-u)`, bypassing the inverse-CDF table.
    fn sample_exact(&self, _rng: &mut RngStream) -> Option<f64> {
        None
    }
}

/// `u(x) = |x|^b / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerPotential {
    b: f64,
    /// Law of `|x|^b / 2`.
    radial: rand_distr::Gamma<f64>,
}

impl PowerPotential {
    pub fn new(b: f64) -> Result<Self> {
        if !(b > 1.0 && b.is_finite()) {
            return Err(domain(format!("power exponent must be > 1, got {b}")));
        }
        let radial = rand_distr::Gamma::new(1.0 / b, 1.0)
            .map_err(|e| Error::Numerical(format!("radial law for power {b}: {e}")))?;
        Ok(Self { b, radial })
    }

    pub fn exponent(&self) -> f64 {
        self.b
    }

    fn even_integer(&self) -> Option<usize> {
        let k = self.b.round();
        (k == self.b && (k as usize).is_multiple_of(2)).then_some(k as usize)
    }
}

impl ScalarPotential for PowerPotential {
    fn value(&self, x: f64) -> f64 {
        0.5 * x.abs().powf(self.b)
    }

    fn derivative(&self, x: f64) -> f64 {
        0.5 * self.b * x.abs().powf(self.b - 1.0) * x.signum()
    }

    fn curvature_bounds(&self) -> Option<HessianBounds> {
        (self.b == 2.0).then(|| HessianBounds::new(1.0, 1.0).unwrap())
    }

    fn derivative_poly(&self) -> Option<Poly> {
        let k = self.even_integer()?;
        let mut c = vec![0.0; k];
        c[k - 1] = 0.5 * k as f64;
        Some(Poly(c))
    }

    fn quadratic_scale(&self) -> Option<f64> {
        (self.b == 2.0).then_some(1.0)
    }

    fn sample_exact(&self, rng: &mut RngStream) -> Option<f64> {
        use rand_distr::Distribution;
        if self.b == 2.0 {
            return Some(rng.normal());
        }
        let r = (2.0 * self.radial.sample(rng)).powf(1.0 / self.b);
        Some(if rng.uniform() < 0.5 { -r } else { r })
    }
}

/// `U_d(x) = sum_i u(x_i)`.
pub struct ProductPotential<S> {
    factor: S,
    dim: usize,
    gaussian: Option<GaussianForm>,
    table: OnceLock<std::result::Result<Arc<InverseCdf>, Error>>,
}

impl<S: ScalarPotential> ProductPotential<S> {
    pub fn factor(&self) -> &S {
        &self.factor
    }

    /// Shared inverse-CDF table for the factor's density.
    pub fn inverse_cdf(&self) -> Result<Arc<InverseCdf>> {
        self.table
            .get_or_init(|| {
                let f = self.factor.clone();
                InverseCdf::build(move |x| f.value(x), |x| self.factor.derivative(x)).map(Arc::new)
            })
            .clone()
    }
}

/// Product target from the scalar factor `u1` repeated `d` times.
pub fn make_product_potential<S: ScalarPotential>(u1: S, d: usize) -> Result<ProductPotential<S>> {
    if d == 0 {
        return Err(domain("dimension must be >= 1"));
    }
    let gaussian = u1
        .quadratic_scale()
        .map(|scale| GaussianForm::Isotropic { scale });
    Ok(ProductPotential {
        factor: u1,
        dim: d,
        gaussian,
        table: OnceLock::new(),
    })
}

impl<S: ScalarPotential> Potential for ProductPotential<S> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&xi| self.factor.value(xi)).sum()
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.factor.derivative(xi);
        }
    }

    fn hessian_bounds(&self) -> Option<HessianBounds> {
        self.factor.curvature_bounds()
    }

    fn gaussian(&self) -> Option<&GaussianForm> {
        self.gaussian.as_ref()
    }

    fn line_rate(&self, x: &[f64], v: &[f64]) -> Option<Poly> {
        // sum_i v_i q(x_i + t v_i), expanding each power binomially.
        let q = self.factor.derivative_poly()?;
        let deg = q.degree();
        let mut out = vec![0.0; deg + 1];
        let mut binom = vec![vec![1.0; deg + 1]; deg + 1];
        for k in 1..=deg {
            for j in 1..k {
                binom[k][j] = binom[k - 1][j - 1] + binom[k - 1][j];
            }
        }
        let mut xp = vec![0.0; deg + 1];
        let mut vp = vec![0.0; deg + 2];
        for (&xi, &vi) in x.iter().zip(v) {
            xp[0] = 1.0;
            vp[0] = 1.0;
            for k in 1..=deg {
                xp[k] = xp[k - 1] * xi;
            }
            for k in 1..=deg + 1 {
                vp[k] = vp[k - 1] * vi;
            }
            for (k, &qk) in q.0.iter().enumerate() {
                if qk == 0.0 {
                    continue;
                }
                for j in 0..=k {
                    out[j] += qk * binom[k][j] * xp[k - j] * vp[j + 1];
                }
            }
        }
        Some(Poly(out))
    }

    fn sample_position(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        if let Some(first) = self.factor.sample_exact(rng) {
            let mut x = Vec::with_capacity(self.dim);
            x.push(first);
            for _ in 1..self.dim {
                x.push(self.factor.sample_exact(rng).expect("sampler is deterministic in support"));
            }
            return Ok(x);
        }
        let table = self.inverse_cdf()?;
        Ok((0..self.dim).map(|_| table.sample(rng)).collect())
    }
}

const TAIL_MASS: f64 = 1e-12;
const CELLS: usize = 4096;

/// Tabulated inverse CDF of a one-dimensional density `exp(-u)` on a
/// truncated domain `[-R, R]` whose tails hold less than `1e-12` of the mass.
pub struct InverseCdf {
    lo: f64,
    width: f64,
    offset: f64,
    cumulative: Vec<f64>,
    rule: GaussLegendre,
    density: Box<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for InverseCdf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InverseCdf")
            .field("radius", &self.radius())
            .field("cells", &CELLS)
            .finish()
    }
}

impl InverseCdf {
    /// `u` must be convex enough for `exp(-u(R)) / |u'(R)|` to bound the tail.
    pub fn build<U, D>(u: U, du: D) -> Result<Self>
    where
        U: Fn(f64) -> f64 + Send + Sync + Clone + 'static,
        D: Fn(f64) -> f64,
    {
        let rule = GaussLegendre::new(16);
        let offset = (-200..=200)
            .map(|k| u(k as f64 * 0.05))
            .fold(f64::INFINITY, f64::min);
        let dens = {
            let u = u.clone();
            move |x: f64| (-(u(x) - offset)).exp()
        };
        let mut r = 1.0f64;
        loop {
            let total = rule.integrate(&dens, -r, 0.0) + rule.integrate(&dens, 0.0, r);
            let tail = |y: f64| {
                let g = du(y).abs();
                if g > 0.0 {
                    dens(y) / g
                } else {
                    f64::INFINITY
                }
            };
            if tail(r) + tail(-r) < TAIL_MASS * total && du(r) > 0.0 && du(-r) < 0.0 {
                break;
            }
            r *= 1.25;
            if r > 1e6 {
                return Err(Error::Numerical(
                    "could not locate a truncation radius for inverse-CDF sampling".into(),
                ));
            }
        }
        let width = 2.0 * r / CELLS as f64;
        let lo = -r;
        let mut cumulative = Vec::with_capacity(CELLS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for k in 0..CELLS {
            let a = lo + k as f64 * width;
            acc += rule.integrate(&dens, a, a + width);
            cumulative.push(acc);
        }
        Ok(Self {
            lo,
            width,
            offset,
            cumulative,
            rule,
            density: Box::new(dens),
        })
    }

    pub fn radius(&self) -> f64 {
        -self.lo
    }

    pub fn total_mass(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Normalizing constant `int exp(-u)`.
    pub fn normalizer(&self) -> f64 {
        self.total_mass() * (-self.offset).exp()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let target = p.clamp(0.0, 1.0) * self.total_mass();
        let k = match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&target).unwrap())
        {
            Ok(k) => return self.lo + k as f64 * self.width,
            Err(k) => k.clamp(1, CELLS) - 1,
        };
        let a = self.lo + k as f64 * self.width;
        let b = a + self.width;
        let need = target - self.cumulative[k];
        // Newton with bisection safeguard on F(x) - F(a) = need.
        let (mut l, mut h) = (a, b);
        let mut x = a + self.width * need / (self.cumulative[k + 1] - self.cumulative[k]).max(f64::MIN_POSITIVE);
        for _ in 0..60 {
            let fx = self.rule.integrate(&self.density, a, x) - need;
            if fx > 0.0 {
                h = x;
            } else {
                l = x;
            }
            let step = fx / (self.density)(x).max(f64::MIN_POSITIVE);
            let mut next = x - step;
            if !(next > l && next < h) {
                next = 0.5 * (l + h);
            }
            if (next - x).abs() < 1e-15 * (1.0 + x.abs()) {
                x = next;
                break;
            }
            x = next;
        }
        x
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.quantile(rng.uniform())
    }
}
