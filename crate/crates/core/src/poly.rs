//! Real polynomials in one variable, used for closed-form event rates along
//! straight lines.

/// Coefficients in increasing degree: `c[0] + c[1] t + c[2] t^2 + ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Poly {
        if self.0.len() <= 1 {
            return Poly::new(vec![0.0]);
        }
        Poly::new(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    /// Antiderivative vanishing at 0.
    pub fn integral(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(k, a)| a / (k + 1) as f64));
        Poly::new(c)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0.0)
    }

    pub fn leading(&self) -> f64 {
        *self.0.last().unwrap()
    }

    /// Sorted real roots strictly inside `(lo, hi)`.
    ///
    /// Roots of the derivative split the interval into monotone pieces, each
    /// of which holds at most one root located by bisection.
    pub fn roots_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        if self.is_zero() || self.degree() == 0 {
            return Vec::new();
        }
        if self.degree() == 1 {
            let r = -self.0[0] / self.0[1];
            return if r > lo && r < hi { vec![r] } else { Vec::new() };
        }
        let mut knots = vec![lo];
        knots.extend(self.derivative().roots_in(lo, hi));
        knots.push(hi);
        let mut roots = Vec::new();
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fa == 0.0 && a > lo {
                if roots.last() != Some(&a) {
                    roots.push(a);
                }
                continue;
            }
            if fa.signum() != fb.signum() && fb != 0.0 {
                roots.push(bisect(|t| self.eval(t), a, b));
            }
        }
        roots
    }

    /// Bound on the magnitude of all real roots.
    pub fn cauchy_bound(&self) -> f64 {
        let lead = self.leading();
        1.0 + self.0[..self.degree()]
            .iter()
            .map(|c| (c / lead).abs())
            .fold(0.0, f64::max)
    }
}

/// Root of a continuous function with a sign change on `[a, b]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_roots() {
        // (t-1)(t-2)(t+3) = t^3 - 7t + 6
        let p = Poly::new(vec![6.0, -7.0, 0.0, 1.0]);
        let r = p.roots_in(-10.0, 10.0);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        assert_eq!(p.roots_in(0.0, 1.5).len(), 1);
    }

    #[test]
    fn integral_and_derivative() {
        let p = Poly::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.integral(), Poly::new(vec![0.0, 1.0, 1.0, 1.0]));
        assert_eq!(p.integral().derivative(), p);
        assert_eq!(p.eval(2.0), 17.0);
    }

    #[test]
    fn no_roots_for_positive_quadratic() {
        let p = Poly::new(vec![1.0, 0.0, 1.0]);
        assert!(p.roots_in(-5.0, 5.0).is_empty());
    }
}
