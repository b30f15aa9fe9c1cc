//! Small statistical toolkit: moments, Kolmogorov-Smirnov statistics, energy
//! distance with bootstrap error, least squares.

use crate::error::{Error, Result};
use crate::rng::RngStream;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// `sup_x |F_n(x) - F(x)|`.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let s = sorted(xs);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut worst) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / na - j as f64 / nb).abs());
    }
    worst
}

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (NaN for two points).
    pub slope_se: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: x.len() });
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Numerical("regressor has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let n = x.len() as f64;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_se = (rss / (n - 2.0) / sxx).sqrt();
    Ok(LineFit {
        slope,
        intercept,
        slope_se,
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise distances stored once so that bootstrap resamples are index
/// lookups.
struct Distances {
    na: usize,
    nb: usize,
    aa: Vec<f32>,
    bb: Vec<f32>,
    ab: Vec<f32>,
}

impl Distances {
    fn new(a: &[Vec<f64>], b: &[Vec<f64>]) -> Self {
        let block = |p: &[Vec<f64>], q: &[Vec<f64>]| -> Vec<f32> {
            p.iter()
                .flat_map(|x| q.iter().map(move |y| euclid(x, y) as f32))
                .collect()
        };
        Self {
            na: a.len(),
            nb: b.len(),
            aa: block(a, a),
            bb: block(b, b),
            ab: block(a, b),
        }
    }

    /// U-statistic estimate on the index multisets `ia`, `ib`.
    fn statistic(&self, ia: &[usize], ib: &[usize]) -> f64 {
        let within = |m: &[f32], n: usize, idx: &[usize]| -> f64 {
            let mut s = 0.0f64;
            for (p, &i) in idx.iter().enumerate() {
                let row = &m[i * n..(i + 1) * n];
                for &j in &idx[p + 1..] {
                    s += row[j] as f64;
                }
            }
            let k = idx.len() as f64;
            2.0 * s / (k * (k - 1.0))
        };
        let mut cross = 0.0f64;
        for &i in ia {
            let row = &self.ab[i * self.nb..(i + 1) * self.nb];
            for &j in ib {
                cross += row[j] as f64;
            }
        }
        cross /= (ia.len() * ib.len()) as f64;
        2.0 * cross - within(&self.aa, self.na, ia) - within(&self.bb, self.nb, ib)
    }
}

/// Energy distance `2 E|X - Y| - E|X - X'| - E|Y - Y'|` (unbiased form),
/// with a bootstrap standard error from `n_boot` resamples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyDistance {
    pub value: f64,
    pub se: f64,
}

pub fn energy_distance(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    n_boot: usize,
    rng: &mut RngStream,
) -> Result<EnergyDistance> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: a.len().min(b.len()),
        });
    }
    let dist = Distances::new(a, b);
    let ia: Vec<usize> = (0..a.len()).collect();
    let ib: Vec<usize> = (0..b.len()).collect();
    let value = dist.statistic(&ia, &ib);
    let se = if n_boot >= 2 {
        let reps: Vec<f64> = (0..n_boot)
            .map(|_| {
                let ra: Vec<usize> = (0..a.len()).map(|_| rng.below(a.len())).collect();
                let rb: Vec<usize> = (0..b.len()).map(|_| rng.below(b.len())).collect();
                dist.statistic(&ra, &rb)
            })
            .collect();
        variance(&reps).sqrt()
    } else {
        f64::NAN
    };
    Ok(EnergyDistance { value, se })
}

/// Standard deviation of `stat` over bootstrap resamples of `xs`.
pub fn bootstrap_se<T>(xs: &[T], n_boot: usize, rng: &mut RngStream, stat: impl Fn(&[&T]) -> f64) -> f64 {
    let reps: Vec<f64> = (0..n_boot)
        .map(|_| {
            let sample: Vec<&T> = (0..xs.len()).map(|_| &xs[rng.below(xs.len())]).collect();
            stat(&sample)
        })
        .collect();
    variance(&reps).sqrt()
}
