//! Symmetric 2x2 matrices with closed-form spectra.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sym2 {
    pub xx: f64,
    pub xv: f64,
    pub vv: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xv: 0.0, vv: 0.0 };

    pub const fn new(xx: f64, xv: f64, vv: f64) -> Self {
        Self { xx, xv, vv }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    /// `u u^T`
    pub fn outer(u: [f64; 2]) -> Self {
        Self::new(u[0] * u[0], u[0] * u[1], u[1] * u[1])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.vv
    }

    pub fn det(&self) -> f64 {
        self.xx * self.vv - self.xv * self.xv
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let mid = 0.5 * (self.xx + self.vv);
        let rad = (0.5 * (self.xx - self.vv)).hypot(self.xv);
        let hi = mid + rad;
        // det / hi avoids cancellation in mid - rad when both share a sign
        let lo = if mid > 0.0 && hi != 0.0 {
            self.det() / hi
        } else {
            mid - rad
        };
        [lo, hi]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Unit eigenvector for the smallest eigenvalue.
    pub fn min_eigenvector(&self) -> [f64; 2] {
        let lo = self.min_eigenvalue();
        // rows of (S - lo I) are orthogonal to the eigenvector
        let r1 = [self.xx - lo, self.xv];
        let r2 = [self.xv, self.vv - lo];
        let r = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) { r1 } else { r2 };
        let n = r[0].hypot(r[1]);
        if n == 0.0 {
            return [1.0, 0.0];
        }
        [-r[1] / n, r[0] / n]
    }

    pub fn frobenius(&self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xv * self.xv + self.vv * self.vv).sqrt()
    }

    /// `sum_ij self_ij other_ij`, i.e. `Tr(self other)`.
    pub fn inner(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xv * other.xv + self.vv * other.vv
    }

    /// `D S D` with `D = diag(dx, dv)`.
    pub fn congruence_diag(&self, dx: f64, dv: f64) -> Self {
        Self::new(self.xx * dx * dx, self.xv * dx * dv, self.vv * dv * dv)
    }

    /// `S^T K S` for a general (not necessarily symmetric) `S` given row-wise.
    pub fn congruence(&self, s: [[f64; 2]; 2]) -> Self {
        let k = [[self.xx, self.xv], [self.xv, self.vv]];
        let mut out = [[0.0; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, o) in row.iter_mut().enumerate() {
                *o = (0..2)
                    .flat_map(|p| (0..2).map(move |q| (p, q)))
                    .map(|(p, q)| s[p][i] * k[p][q] * s[q][j])
                    .sum();
            }
        }
        Self::new(out[0][0], 0.5 * (out[0][1] + out[1][0]), out[1][1])
    }

    /// Symmetric square root of a positive semidefinite matrix.
    pub fn sqrt_psd(&self) -> Self {
        let [lo, hi] = self.eigenvalues();
        let (rl, rh) = (lo.max(0.0).sqrt(), hi.max(0.0).sqrt());
        let u = self.min_eigenvector();
        let w = [-u[1], u[0]];
        Sym2::outer(u) * rl + Sym2::outer(w) * rh
    }

    /// `x^T S x`
    pub fn quad(&self, x: [f64; 2]) -> f64 {
        self.xx * x[0] * x[0] + 2.0 * self.xv * x[0] * x[1] + self.vv * x[1] * x[1]
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xv + o.xv, self.vv + o.vv)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xv - o.xv, self.vv - o.vv)
    }
}

impl Neg for Sym2 {
    type Output = Sym2;
    fn neg(self) -> Sym2 {
        Sym2::new(-self.xx, -self.xv, -self.vv)
    }
}

impl Mul<f64> for Sym2 {
    type Output = Sym2;
    fn mul(self, k: f64) -> Sym2 {
        Sym2::new(self.xx * k, self.xv * k, self.vv * k)
    }
}
