//! Gauss–Legendre rules and the singularity-adapted spectral quadrature used
//! for free-space Fourier integrals over the Brillouin zone `[-1/2, 1/2)^d`.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Nodes and weights mapped to `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.mapped(lo, hi).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// One quadrature node in the positive orthant `[0, 1/2]^d` of the
/// Brillouin zone; the weight already carries the `2^d` orthant factor and
/// the pyramid Jacobian.
#[derive(Clone, Debug)]
pub struct SpectralNode {
    pub theta: Vec<f64>,
    pub weight: f64,
}

/// Node set for integrals `∫_{[-1/2,1/2)^d} F(θ) Π_i cos(2π θ_i x_i) dθ`
/// where `F` is even in each coordinate and may carry an integrable point
/// singularity `|θ|^{-α}` at the origin.
///
/// The orthant is split into `d` pyramids (coordinate `j` is the largest),
/// parameterised by `θ_j = r`, `θ_i = r t_i`; the radial variable uses
/// dyadic panels down to `r_min` and every panel is subdivided so that each
/// sub-panel spans at most about one period of the highest frequency.
///
/// Nodes come in consecutive groups of `d` that differ only by the
/// position of the largest coordinate, so any function invariant under
/// coordinate permutations needs one evaluation per group.
#[derive(Clone, Debug)]
pub struct SpectralQuadrature {
    pub d: usize,
    pub nodes: Vec<SpectralNode>,
    /// Radius below which the integrand is replaced by its leading asymptotics.
    pub r_min: f64,
    /// `∫_{[0,1]^{d-1}} |u(t)|^{-α} dt` summed over pyramids, with
    /// `u = (1, t)`; used for the analytic core correction.
    pub core_angular: Vec<(Vec<f64>, f64)>,
}

impl SpectralQuadrature {
    pub fn new(d: usize, max_freq: f64, order: usize, dyadic_levels: usize) -> Self {
        let gl = GaussLegendre::new(order);
        let orthant = 2f64.powi(d as i32);
        let mut nodes = Vec::new();
        let r_min = 0.5 * 2f64.powi(-(dyadic_levels as i32));
        let diag = (d as f64).sqrt();

        // angular rule for the (d-1) transverse coordinates, possibly refined
        let angular_rule = |r_hi: f64| -> Vec<(Vec<f64>, f64)> {
            if d == 1 {
                return vec![(vec![], 1.0)];
            }
            let sub = 1 + (r_hi * max_freq * 1.5).floor() as usize;
            let mut one_d = Vec::new();
            for p in 0..sub {
                let lo = p as f64 / sub as f64;
                let hi = (p + 1) as f64 / sub as f64;
                one_d.extend(gl.mapped(lo, hi));
            }
            let mut out: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
            for _ in 0..d - 1 {
                let mut next = Vec::with_capacity(out.len() * one_d.len());
                for (t, w) in &out {
                    for &(x, wx) in &one_d {
                        let mut tt = t.clone();
                        tt.push(x);
                        next.push((tt, w * wx));
                    }
                }
                out = next;
            }
            out
        };

        for level in 0..dyadic_levels {
            let r_hi = 0.5 * 2f64.powi(-(level as i32));
            let r_lo = 0.5 * r_hi;
            let sub = 1 + ((r_hi - r_lo) * max_freq * diag * 1.5).floor() as usize;
            let angular = angular_rule(r_hi);
            for p in 0..sub {
                let lo = r_lo + (r_hi - r_lo) * p as f64 / sub as f64;
                let hi = r_lo + (r_hi - r_lo) * (p + 1) as f64 / sub as f64;
                for (r, wr) in gl.mapped(lo, hi) {
                    let jac = r.powi(d as i32 - 1);
                    for (t, wt) in &angular {
                        for j in 0..d {
                            let mut theta = Vec::with_capacity(d);
                            let mut ti = t.iter();
                            for i in 0..d {
                                if i == j {
                                    theta.push(r);
                                } else {
                                    theta.push(r * ti.next().copied().unwrap_or(0.0));
                                }
                            }
                            nodes.push(SpectralNode {
                                theta,
                                weight: orthant * wr * wt * jac,
                            });
                        }
                    }
                }
            }
        }
        let core_angular = angular_rule(0.0);
        SpectralQuadrature {
            d,
            nodes,
            r_min,
            core_angular,
        }
    }

    /// `∫_{|θ|_∞ < r_min} |θ|^{-α} dθ` over the full zone core, used with the
    /// leading symbol asymptotics `ψ(θ) ~ C0 |θ|^α`.
    pub fn core_singular_integral(&self, alpha: f64) -> f64 {
        let d = self.d;
        let orthant = 2f64.powi(d as i32);
        let angular: f64 = self
            .core_angular
            .iter()
            .map(|(t, w)| {
                let u2 = 1.0 + t.iter().map(|x| x * x).sum::<f64>();
                w * u2.powf(-alpha / 2.0)
            })
            .sum();
        orthant * d as f64 * angular * self.r_min.powf(d as f64 - alpha) / (d as f64 - alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact for 8 points
        let v = gl.integrate(-1.0, 2.0, |x| x.powi(15) - 3.0 * x.powi(4) + 1.0);
        let exact = (2f64.powi(16) - 1.0) / 16.0 - 3.0 * (32.0 + 1.0) / 5.0 + 3.0;
        assert!((v - exact).abs() < 1e-9 * exact.abs());
        assert!((gl.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn spectral_quadrature_volume_and_singular_integral() {
        for d in 1..=2 {
            let q = SpectralQuadrature::new(d, 4.0, 12, 40);
            let vol: f64 = q.nodes.iter().map(|n| n.weight).sum();
            assert!((vol - 1.0).abs() < 1e-10, "d={d} vol={vol}");
            let alpha = 0.5;
            // ∫ |θ|^{-α} over [-1/2,1/2)^d, d=1: 2 * (1/2)^{1-α}/(1-α)
            let s: f64 = q
                .nodes
                .iter()
                .map(|n| {
                    let r2: f64 = n.theta.iter().map(|t| t * t).sum();
                    n.weight * r2.powf(-alpha / 2.0)
                })
                .sum::<f64>()
                + q.core_singular_integral(alpha);
            if d == 1 {
                let exact = 2.0 * 0.5f64.powf(1.0 - alpha) / (1.0 - alpha);
                assert!((s - exact).abs() < 1e-12, "got {s} want {exact}");
            } else {
                assert!(s.is_finite() && s > 1.0);
            }
        }
    }

    #[test]
    fn oscillatory_integral_d1() {
        let q = SpectralQuadrature::new(1, 40.0, 16, 30);
        // ∫ cos(2π θ 37) dθ over the zone = 0
        let v: f64 = q
            .nodes
            .iter()
            .map(|n| n.weight * (2.0 * PI * n.theta[0] * 37.0).cos())
            .sum::<f64>()
            + 2.0 * q.r_min;
        assert!(v.abs() < 1e-12);
    }
}
