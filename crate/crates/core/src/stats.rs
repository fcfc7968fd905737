//! Small statistics toolkit: running moments, Wilson intervals, z-scores and
//! a deterministic chunked parallel map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Mean and standard error of a sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

/// Welford accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. merge of two accumulators.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        self.mean += delta * other.n as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn summary(&self) -> MeanSe {
        MeanSe {
            mean: self.mean,
            se: (self.variance() / self.n.max(1) as f64).sqrt(),
            n: self.n,
        }
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let mut m = Moments::default();
    for &x in xs {
        m.push(x);
    }
    m.summary()
}

/// Two-sample z-score `(a - b) / sqrt(se_a^2 + se_b^2)`; zero when both are exact.
pub fn z_score(a: MeanSe, b: MeanSe) -> f64 {
    let se = (a.se * a.se + b.se * b.se).sqrt();
    let diff = a.mean - b.mean;
    if se == 0.0 {
        if diff.abs() < 1e-12 {
            0.0
        } else {
            f64::INFINITY * diff.signum()
        }
    } else {
        diff / se
    }
}

/// Wilson score interval for `k` successes out of `n` at normal quantile `z`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// One-sided 95% upper bound for a zero-hit binomial run.
pub fn rule_of_three(n: usize) -> f64 {
    (3.0 / n.max(1) as f64).min(1.0)
}

/// Replicas are processed in fixed-size chunks; each chunk is folded
/// sequentially and the per-chunk results are combined in index order.
pub const CHUNK: usize = 1024;

/// Deterministic parallel map over replica indices `0..n`.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().with_min_len(64).map(f).collect()
}

/// Deterministic parallel fold: chunks in index order, merged left to right.
pub fn par_fold<A, F, M>(n: usize, init: impl Fn() -> A + Sync + Send, fold: F, merge: M) -> A
where
    A: Send,
    F: Fn(&mut A, usize) + Sync + Send,
    M: Fn(&mut A, A),
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<A> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = init();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                fold(&mut acc, i);
            }
            acc
        })
        .collect();
    let mut total = init();
    for p in parts {
        merge(&mut total, p);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_merge_matches_direct() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let direct = mean_se(&xs);
        let mut a = Moments::default();
        let mut b = Moments::default();
        for &x in &xs[..333] {
            a.push(x);
        }
        for &x in &xs[333..] {
            b.push(x);
        }
        a.merge(&b);
        assert!((a.mean() - direct.mean).abs() < 1e-12);
        assert!((a.summary().se - direct.se).abs() < 1e-12);
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(10, 1000, 1.96);
        assert!(lo < 0.01 && hi > 0.01);
        let (lo0, hi0) = wilson_interval(0, 1000, 1.96);
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0);
    }

    #[test]
    fn par_fold_is_order_stable() {
        let s = par_fold(10_000, || 0.0f64, |a, i| *a += (i as f64).sqrt(), |a, b| *a += b);
        let t = par_fold(10_000, || 0.0f64, |a, i| *a += (i as f64).sqrt(), |a, b| *a += b);
        assert_eq!(s.to_bits(), t.to_bits());
    }
}
