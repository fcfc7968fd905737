//! Special functions not covered by `statrs`: the upper incomplete gamma
//! function for arbitrary real (including negative) first argument, the
//! exponential integral, and the Hurwitz zeta function.

use std::f64::consts::PI;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const FPMIN: f64 = 1e-300;
const EPS: f64 = 1e-16;

/// `Γ(a)` for any non-integer-or-positive real `a`.
pub fn gamma(a: f64) -> f64 {
    if a > 0.0 {
        statrs::function::gamma::gamma(a)
    } else {
        // reflection
        PI / ((PI * a).sin() * statrs::function::gamma::gamma(1.0 - a))
    }
}

/// Upper incomplete gamma `Γ(a, x) = ∫_x^∞ t^{a-1} e^{-t} dt`, `x > 0`, any real `a`.
pub fn upper_gamma(a: f64, x: f64) -> f64 {
    assert!(x > 0.0, "upper_gamma requires x > 0, got {x}");
    if a > 0.0 && x < a + 1.0 {
        return gamma(a) - lower_gamma_series(a, x);
    }
    if a <= 0.0 && x < 0.5 {
        if a == 0.0 {
            return exp_integral_e1(x);
        }
        let up = upper_gamma(a + 1.0, x);
        return (up - (a * x.ln() - x).exp()) / a;
    }
    upper_gamma_cf(a, x)
}

/// Lower incomplete gamma `γ(a, x)` by its power series, `a > 0`.
fn lower_gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * (a * x.ln() - x).exp()
}

/// Legendre continued fraction evaluated by the modified Lentz method.
fn upper_gamma_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..20_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    (a * x.ln() - x).exp() * h
}

/// Exponential integral `E_1(x) = Γ(0, x)`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0);
    if x >= 1.0 {
        return upper_gamma_cf(0.0, x);
    }
    let mut sum = 0.0;
    let mut term = 1.0;
    for n in 1..200 {
        term *= -x / n as f64;
        let add = term / n as f64;
        sum += add;
        if add.abs() < EPS * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// Hurwitz zeta `ζ(σ, a) = Σ_{n≥0} (n + a)^{-σ}` for `σ > 1`, `a > 0`,
/// by Euler–Maclaurin summation.
pub fn hurwitz_zeta(sigma: f64, a: f64) -> f64 {
    assert!(sigma > 1.0 && a > 0.0);
    const N: usize = 24;
    // B_{2j} / (2j)!
    const B2J_OVER_FACT: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
        -691.0 / 1_307_674_368_000.0,
        1.0 / 74_724_249_600.0,
        -3617.0 / 10_670_622_842_880_000.0,
    ];
    let mut sum: f64 = (0..N).map(|n| (n as f64 + a).powf(-sigma)).sum();
    let w = N as f64 + a;
    sum += w.powf(1.0 - sigma) / (sigma - 1.0) + 0.5 * w.powf(-sigma);
    // rising factorial σ(σ+1)...(σ+2j-2) times w^{-σ-2j+1}
    let mut rising = sigma;
    let mut wpow = w.powf(-sigma - 1.0);
    for (j, coeff) in B2J_OVER_FACT.iter().enumerate() {
        sum += coeff * rising * wpow;
        let k = 2 * j as u32 + 1;
        rising *= (sigma + k as f64) * (sigma + k as f64 + 1.0);
        wpow /= w * w;
    }
    sum
}

/// Riemann zeta for `σ > 1`.
pub fn zeta(sigma: f64) -> f64 {
    hurwitz_zeta(sigma, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;

    /// Oracle: `Γ(a,x) = ∫_0^1 (x/v)^{a-1} e^{-x/v} x / v^2 dv`, composite GL.
    fn upper_gamma_quadrature(a: f64, x: f64) -> f64 {
        let gl = GaussLegendre::new(40);
        let panels = 400;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = p as f64 / panels as f64;
            let hi = (p + 1) as f64 / panels as f64;
            total += gl.integrate(lo, hi, |v| {
                if v <= 0.0 {
                    0.0
                } else {
                    let t = x / v;
                    t.powf(a - 1.0) * (-t).exp() * x / (v * v)
                }
            });
        }
        total
    }

    #[test]
    fn upper_gamma_matches_statrs_for_positive_a() {
        for &a in &[0.25, 0.75, 1.25, 1.5, 2.5, 3.0] {
            for &x in &[0.01, 0.3, 0.9, 1.7, 3.1, 8.0, 25.0] {
                let reference = statrs::function::gamma::gamma_ur(a, x) * gamma(a);
                let got = upper_gamma(a, x);
                assert!(
                    ((got - reference) / reference).abs() < 1e-12,
                    "a={a} x={x} got={got} ref={reference}"
                );
            }
        }
    }

    #[test]
    fn upper_gamma_negative_a_matches_quadrature() {
        for &a in &[-0.25, -0.5, -0.75, -1.0] {
            for &x in &[0.6, 0.785, 1.2, 3.14, 9.0] {
                let reference = upper_gamma_quadrature(a, x);
                let got = upper_gamma(a, x);
                assert!(
                    ((got - reference) / reference).abs() < 1e-10,
                    "a={a} x={x} got={got} ref={reference}"
                );
            }
        }
    }

    #[test]
    fn upper_gamma_small_x_negative_a_satisfies_recurrence() {
        // Γ(a+1,x) = a Γ(a,x) + x^a e^{-x}
        for &a in &[-0.25, -0.6] {
            for &x in &[1e-6, 1e-3, 0.1, 0.45] {
                let lhs = upper_gamma(a + 1.0, x);
                let rhs = a * upper_gamma(a, x) + x.powf(a) * (-x).exp();
                assert!(((lhs - rhs) / lhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn e1_is_continuous_across_branch() {
        let lo = exp_integral_e1(1.0 - 1e-12);
        let hi = exp_integral_e1(1.0);
        assert!((lo - hi).abs() < 1e-10);
        assert!((hi - 0.219_383_934_395_520_3).abs() < 1e-13);
    }

    #[test]
    fn zeta_known_values() {
        assert!((zeta(2.0) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
        // ζ(σ, 1/2) = (2^σ - 1) ζ(σ)
        let s = 2.7;
        assert!((hurwitz_zeta(s, 0.5) - (2f64.powf(s) - 1.0) * zeta(s)).abs() < 1e-12);
    }
}
