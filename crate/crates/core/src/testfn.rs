use std::fmt;
use std::str::FromStr;

use crate::error::{domain, Error, Result};

/// Observables used to measure sampler efficiency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestFunction {
    /// `x_1`
    F1,
    /// `sum x_i`
    F2,
    /// `sum_{i<d} sin(x_i + x_{i+1})`
    F3,
    /// `|x|`
    F4,
    /// `|x|^2 / 2`
    F5,
    /// `x_1^2`
    F6,
    /// `x_1 x_2`
    F7,
}

impl TestFunction {
    pub const ALL: [TestFunction; 7] = [
        TestFunction::F1,
        TestFunction::F2,
        TestFunction::F3,
        TestFunction::F4,
        TestFunction::F5,
        TestFunction::F6,
        TestFunction::F7,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            TestFunction::F1 => "f1",
            TestFunction::F2 => "f2",
            TestFunction::F3 => "f3",
            TestFunction::F4 => "f4",
            TestFunction::F5 => "f5",
            TestFunction::F6 => "f6",
            TestFunction::F7 => "f7",
        }
    }

    pub fn min_dim(&self) -> usize {
        match self {
            TestFunction::F7 => 2,
            _ => 1,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if d < self.min_dim() {
            return Err(domain(format!("{} needs d >= {}", self.id(), self.min_dim())));
        }
        Ok(())
    }

    /// Expects `x.len() >= self.min_dim()`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            TestFunction::F1 => x[0],
            TestFunction::F2 => x.iter().sum(),
            TestFunction::F3 => x.windows(2).map(|w| (w[0] + w[1]).sin()).sum(),
            TestFunction::F4 => x.iter().map(|e| e * e).sum::<f64>().sqrt(),
            TestFunction::F5 => 0.5 * x.iter().map(|e| e * e).sum::<f64>(),
            TestFunction::F6 => x[0] * x[0],
            TestFunction::F7 => x[0] * x[1],
        }
    }

    /// Value at `x + t v` as a polynomial in `t`, for the polynomial observables.
    pub fn along_line(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        use crate::phase::dot;
        Some(match self {
            TestFunction::F1 => vec![x[0], v[0]],
            TestFunction::F2 => vec![x.iter().sum(), v.iter().sum()],
            TestFunction::F5 => vec![0.5 * dot(x, x), dot(x, v), 0.5 * dot(v, v)],
            TestFunction::F6 => vec![x[0] * x[0], 2.0 * x[0] * v[0], v[0] * v[0]],
            TestFunction::F7 => vec![x[0] * x[1], x[0] * v[1] + v[0] * x[1], v[0] * v[1]],
            TestFunction::F3 | TestFunction::F4 => return None,
        })
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestFunction::ALL
            .into_iter()
            .find(|f| f.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown test function '{s}' (expected f1..f7)")))
    }
}
