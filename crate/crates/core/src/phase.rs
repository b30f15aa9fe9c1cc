use crate::error::{check_dim, domain, Result};

/// Position-velocity pair in `R^d x R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(domain("phase point needs dimension d >= 1"));
        }
        check_dim(x.len(), v.len())?;
        if x.iter().chain(v.iter()).any(|e| !e.is_finite()) {
            return Err(domain("phase point entries must be finite"));
        }
        Ok(Self { x, v })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            x: vec![0.0; d],
            v: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn speed(&self) -> f64 {
        norm(&self.v)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_points() {
        assert!(PhasePoint::new(vec![], vec![]).is_err());
        assert!(PhasePoint::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(PhasePoint::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(PhasePoint::new(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(PhasePoint::new(vec![1.0, 2.0], vec![0.5, -1.0]).is_ok());
    }
}
