//! Ewald-type evaluation of the power-law lattice sums behind the jump law:
//! the Epstein zeta function `Σ'_z |z|^{-2s}`, its shifted version (which
//! gives the torus-folded law exactly), and the Fourier symbol
//! `ψ(θ) = Σ_z μ(z) (1 - cos 2πθ·z)`.
//!
//! Every sum is split with the Mellin/theta trick at `t = 1`; both halves
//! converge like `exp(-π r^2)`, so terms with `π r^2 > CUTOFF` are dropped.

use std::f64::consts::PI;

use crate::lattice::{box_sites, Site};
use crate::special::{exp_integral_e1, gamma, upper_gamma};

/// Terms with `π |z|^2` above this are below `e^{-46} ≈ 1e-20` and skipped.
const CUTOFF: f64 = 46.0;

fn box_radius() -> i64 {
    (CUTOFF / PI).sqrt().ceil() as i64 + 1
}

fn centered_box(d: usize, r: i64) -> impl Iterator<Item = Site> {
    let side = (2 * r + 1) as usize;
    box_sites(d, side).into_iter().map(move |s| {
        let mut c = s.0;
        for slot in c.iter_mut().take(d) {
            *slot -= r;
        }
        Site(c)
    })
}

/// `x^{-a} Γ(a, x)`, the reciprocal-space kernel; `W(0) = -1/a` for `a < 0`.
fn w_kernel(a: f64, x: f64) -> f64 {
    if x == 0.0 {
        return -1.0 / a;
    }
    (-a * x.ln()).exp() * upper_gamma(a, x)
}

/// Epstein zeta `Z_d(s) = Σ_{z ≠ 0} |z|^{-2s}` (analytically continued for
/// `0 < s <= d/2`, `s ≠ d/2`).
pub fn epstein_zeta(d: usize, s: f64) -> f64 {
    assert!(s > 0.0 && (s - d as f64 / 2.0).abs() > 1e-12);
    let a = d as f64 / 2.0 - s;
    let mut total = 1.0 / (s - d as f64 / 2.0) - 1.0 / s;
    for z in centered_box(d, box_radius()) {
        let r2 = z.norm2();
        if r2 == 0 {
            continue;
        }
        let x = PI * r2 as f64;
        if x > CUTOFF {
            continue;
        }
        total += (-s * x.ln()).exp() * upper_gamma(s, x) + w_kernel(a, x);
    }
    total * PI.powf(s) / gamma(s)
}

/// Shifted lattice sum `Σ_k |k + β|^{-2s}` over `k ∈ Z^d`, omitting the
/// singular term when `β ∈ Z^d`; requires `s > d/2`.
///
/// The torus law is `μ_R(x) = c R^{-2s} · shifted_zeta(s, x/R)`.
pub fn shifted_zeta(d: usize, s: f64, beta: &[f64]) -> f64 {
    let a = d as f64 / 2.0 - s;
    // reduce β to [0, 1)^d
    let b: Vec<f64> = beta.iter().map(|v| v - v.floor()).collect();
    let at_lattice_point = b.iter().all(|v| *v == 0.0);
    let m = box_radius();
    let mut total = 1.0 / (s - d as f64 / 2.0);
    if at_lattice_point {
        total -= 1.0 / s;
    }
    for k in centered_box(d, m + 1) {
        let r2: f64 = (0..d).map(|i| (k.0[i] as f64 + b[i]).powi(2)).sum();
        if r2 == 0.0 {
            continue;
        }
        let x = PI * r2;
        if x > CUTOFF {
            continue;
        }
        total += (-s * x.ln()).exp() * upper_gamma(s, x);
    }
    for k in centered_box(d, m) {
        let r2 = k.norm2();
        if r2 == 0 {
            continue;
        }
        let x = PI * r2 as f64;
        if x > CUTOFF {
            continue;
        }
        let phase: f64 = (0..d).map(|i| k.0[i] as f64 * b[i]).sum();
        total += (2.0 * PI * phase).cos() * w_kernel(a, x);
    }
    total * PI.powf(s) / gamma(s)
}

/// Leading constant `C0` in `ψ(θ) ~ C0 |θ|^α` as `θ → 0` (α < 2).
pub fn leading_symbol_constant(d: usize, alpha: f64, c: f64) -> f64 {
    let s = (d as f64 + alpha) / 2.0;
    -c * PI.powf(s + alpha / 2.0) * gamma(-alpha / 2.0) / gamma(s)
}

/// Amplitude `A` in `G(0, x) ~ A |x|^{α - d}` for `α < d`.
pub fn green_decay_amplitude(d: usize, alpha: f64, c: f64) -> f64 {
    let df = d as f64;
    PI.powf(alpha - df / 2.0) * gamma((df - alpha) / 2.0)
        / (gamma(alpha / 2.0) * leading_symbol_constant(d, alpha, c))
}

/// Evaluator for `ψ(θ) = c Σ_{z≠0} |z|^{-(d+α)} (1 - cos 2π θ·z)` on `R^d`.
#[derive(Clone, Debug)]
pub struct SymbolEvaluator {
    d: usize,
    alpha: f64,
    a: f64,
    prefactor: f64,
    real_terms: Vec<(Site, f64)>,
    recip_terms: Vec<(Site, f64)>,
}

impl SymbolEvaluator {
    pub fn new(d: usize, alpha: f64, c: f64) -> Self {
        let s = (d as f64 + alpha) / 2.0;
        let a = -alpha / 2.0;
        let mut real_terms = Vec::new();
        let mut recip_terms = Vec::new();
        // a reciprocal term matters whenever the shifted point m - θ can come
        // within the cutoff for some θ in the zone
        let half_diag = (d as f64).sqrt() / 2.0;
        for z in centered_box(d, box_radius() + 1) {
            let r2 = z.norm2();
            if r2 == 0 {
                continue;
            }
            let x = PI * r2 as f64;
            if x <= CUTOFF {
                real_terms.push((z, (-s * x.ln()).exp() * upper_gamma(s, x)));
            }
            let near = ((r2 as f64).sqrt() - half_diag).max(0.0);
            if PI * near * near <= CUTOFF {
                recip_terms.push((z, w_kernel(a, x)));
            }
        }
        SymbolEvaluator {
            d,
            alpha,
            a,
            prefactor: c * PI.powf(s) / gamma(s),
            real_terms,
            recip_terms,
        }
    }

    /// `W(0) - W(x)`, accurate for small `x`.
    fn origin_deficit(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        if self.alpha == 2.0 {
            return -(-x).exp_m1() + x * exp_integral_e1(x);
        }
        if x < 1.0 {
            let a = self.a;
            let mut sum = -gamma(a) * (-a * x.ln()).exp();
            let mut term = 1.0;
            for n in 1..60 {
                term *= -x / n as f64;
                let add = term / (a + n as f64);
                sum += add;
                if add.abs() < 1e-17 * sum.abs() {
                    break;
                }
            }
            return sum;
        }
        -1.0 / self.a - w_kernel(self.a, x)
    }

    pub fn psi(&self, theta: &[f64]) -> f64 {
        let d = self.d;
        let th: Vec<f64> = theta.iter().map(|v| v - (v + 0.5).floor()).collect();
        let mut total = 0.0;
        for (z, az) in &self.real_terms {
            let ph: f64 = (0..d).map(|i| th[i] * z.0[i] as f64).sum();
            let one_minus_cos = 2.0 * (PI * ph).sin().powi(2);
            total += one_minus_cos * az;
        }
        let t2: f64 = th.iter().map(|v| v * v).sum();
        total += self.origin_deficit(PI * t2);
        for (m, wm) in &self.recip_terms {
            let r2: f64 = (0..d).map(|i| (m.0[i] as f64 - th[i]).powi(2)).sum();
            let x = PI * r2;
            total += wm - w_kernel(self.a, x);
        }
        (total * self.prefactor).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{hurwitz_zeta, zeta};

    /// Dirichlet beta `β(s) = Σ_n (-1)^n (2n+1)^{-s}` via Hurwitz zeta.
    fn dirichlet_beta(s: f64) -> f64 {
        4f64.powf(-s) * (hurwitz_zeta(s, 0.25) - hurwitz_zeta(s, 0.75))
    }

    #[test]
    fn epstein_d1_is_twice_riemann_zeta() {
        for &alpha in &[0.5, 1.0, 1.5, 2.0] {
            let s = (1.0 + alpha) / 2.0;
            let got = epstein_zeta(1, s);
            let want = 2.0 * zeta(1.0 + alpha);
            assert!((got - want).abs() < 1e-12 * want, "α={alpha}: {got} vs {want}");
        }
        // continuation below the abscissa: 2ζ(1/2) = -2.920709...
        let cont = epstein_zeta(1, 0.25);
        assert!((cont - 2.0 * -1.460_354_508_809_586_8).abs() < 1e-11);
    }

    #[test]
    fn epstein_d2_is_four_zeta_times_beta() {
        for &s in &[1.25, 1.5, 2.0] {
            let want = 4.0 * zeta(s) * dirichlet_beta(s);
            let got = epstein_zeta(2, s);
            assert!((got - want).abs() < 1e-11 * want, "s={s}: {got} vs {want}");
        }
    }

    #[test]
    fn shifted_sum_matches_hurwitz_in_d1() {
        let s = 0.75;
        for &b in &[0.125, 0.3, 0.5, 0.9] {
            let want = hurwitz_zeta(2.0 * s, b) + hurwitz_zeta(2.0 * s, 1.0 - b);
            let got = shifted_zeta(1, s, &[b]);
            assert!((got - want).abs() < 1e-11 * want);
        }
        let at_zero = shifted_zeta(1, s, &[0.0]);
        assert!((at_zero - 2.0 * zeta(1.5)).abs() < 1e-11);
    }

    #[test]
    fn symbol_matches_brute_force_d1() {
        let alpha = 0.5;
        let c = 1.0 / (2.0 * zeta(1.5));
        let ev = SymbolEvaluator::new(1, alpha, c);
        for &th in &[0.5, 0.25, 0.1, 1.0 / 32.0] {
            // periodic in z with period 1/θ: fold exactly by Hurwitz sums
            let period = (1.0f64 / th).round() as i64;
            let mut want = 0.0;
            for r in 1..period {
                let frac = r as f64 / period as f64;
                let w = period as f64;
                let mass = c * w.powf(-1.5) * (hurwitz_zeta(1.5, frac) + hurwitz_zeta(1.5, 1.0 - frac));
                want += mass * (1.0 - (2.0 * PI * th * r as f64).cos());
            }
            let got = ev.psi(&[th]);
            assert!((got - want).abs() < 1e-12, "θ={th}: {got} vs {want}");
        }
        assert!(ev.psi(&[0.0]) == 0.0);
    }

    #[test]
    fn symbol_small_theta_asymptotics() {
        let alpha = 0.5;
        let c = 1.0 / (2.0 * zeta(1.5));
        let c0 = leading_symbol_constant(1, alpha, c);
        assert!((c0 - 2.405_161_766).abs() < 1e-8);
        let ev = SymbolEvaluator::new(1, alpha, c);
        let th: f64 = 1e-7;
        let ratio = ev.psi(&[th]) / (c0 * th.powf(alpha));
        assert!((ratio - 1.0).abs() < 1e-6);
    }

    #[test]
    fn symbol_alpha_two_branch_is_continuous() {
        let d = 3;
        let c = 1.0 / epstein_zeta(d, 2.5);
        let ev = SymbolEvaluator::new(d, 2.0, c);
        let lo = ev.psi(&[0.2, 0.1 - 1e-9, 0.0]);
        let hi = ev.psi(&[0.2, 0.1, 0.0]);
        assert!((lo - hi).abs() < 1e-8);
        assert!(lo > 0.0);
    }
}
