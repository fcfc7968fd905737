//! Fixed values computed independently of the library code paths.

use silt_core::gaussian::{Functional, eisenbaum_test};
use silt_core::green::green_torus;
use silt_core::ldp::classify_regime;
use silt_core::model::{normalizer, ModelParams, Regime, TorusLaw};
use silt_core::variational::{solve_kappa, solve_rho, solve_rho1, SolverOptions};
use silt_core::JumpLaw;

// ζ(3/2), mpmath at 30 digits.
const ZETA_3_2: f64 = 2.612_375_348_685_488_3;

fn p(d: usize, a: f64, q: f64) -> ModelParams {
    ModelParams::new(d, a, q).unwrap()
}

#[test]
fn one_dimensional_normalizer() {
    // Σ_{z≠0} |z|^{-3/2} = 2 ζ(3/2)
    let c = normalizer(1, 0.5);
    assert!((c - 1.0 / (2.0 * ZETA_3_2)).abs() < 1e-13);
}

#[test]
fn two_site_torus_weights() {
    // even lifts: c Σ_{k≠0} |2k|^{-3/2} = 2^{-3/2}
    let t = TorusLaw::from_params(p(1, 0.5, 2.0), 2, 0).unwrap();
    let even = 2f64.powf(-1.5);
    assert!((t.weights[0] - even).abs() < 1e-13);
    assert!((t.weights[1] - (1.0 - even)).abs() < 1e-13);
}

#[test]
fn two_site_green_function() {
    // G = (λ - A)^{-1} on two sites with flip rate w = μ_2(1)
    let t = TorusLaw::from_params(p(1, 0.5, 2.0), 2, 0).unwrap();
    let w = 1.0 - 2f64.powf(-1.5);
    let lambda = 0.5;
    let g = green_torus(&t, lambda).unwrap();
    let g00 = 0.5 * (1.0 / lambda + 1.0 / (lambda + 2.0 * w));
    let g01 = 0.5 * (1.0 / lambda - 1.0 / (lambda + 2.0 * w));
    assert!((g.values[0] - g00).abs() < 1e-13);
    assert!((g.values[1] - g01).abs() < 1e-13);
}

#[test]
fn single_site_problems() {
    let opts = SolverOptions { starts: 2, ..SolverOptions::default() };
    let t = TorusLaw::from_params(p(1, 0.5, 2.0), 1, 0).unwrap();
    let g = green_torus(&t, 0.25).unwrap();
    assert!((solve_rho1(&g, 2.0, &opts).unwrap().value - 4.0).abs() < 1e-12);
    // box {0}: E = 1, so κ = 1 and ρ = G(0,0)
    let law = JumpLaw::new(p(1, 0.5, 2.0), 64).unwrap();
    assert!((solve_kappa(&law, 2.0, 0, &opts).unwrap().value - 1.0).abs() < 1e-12);
    let g00 = silt_core::green::green_free(&law, silt_core::Site::ORIGIN).unwrap().quadrature;
    assert!((solve_rho(&law, 2.0, 0, &opts).unwrap().value - g00).abs() < 1e-10);
}

#[test]
fn coordinate_functional_closed_form() {
    // E[l(x) + ½(Z_x + s)²] = G(0,x) + ½(G(x,x) + s²)
    let t = TorusLaw::from_params(p(1, 0.5, 2.0), 4, 0).unwrap();
    let battery = vec![Functional::Coordinate { site: 2, clip: Some(80.0) }];
    let rep = eisenbaum_test(&t, 1.0, 1.0, &battery, 40_000, 11, 4.0).unwrap();
    let g = green_torus(&t, 1.0).unwrap();
    let exact = g.values[2] + 0.5 * (g.values[0] + 1.0);
    let r = &rep.results[0];
    assert!((r.left_mean - exact).abs() < 4.0 * r.se_left, "{r:?} vs {exact}");
    assert!(rep.pass);
}

#[test]
fn regime_examples() {
    let c = classify_regime(&p(1, 0.5, 2.0), 1e4, 1e2).unwrap();
    assert_eq!((c.regime, c.r_star), (Regime::Critical, None));
    let s = classify_regime(&p(2, 0.5, 2.0), 1e4, 1e2).unwrap();
    assert_eq!((s.regime, s.r_star), (Regime::Supercritical, Some(1.0)));
    let sub = classify_regime(&p(3, 2.0, 2.0), 1e4, 1e2).unwrap();
    assert_eq!(sub.regime, Regime::Subcritical);
    // 100^{2/3}
    assert!((sub.r_star.unwrap() - 21.544_346_900_318_84).abs() < 1e-9);
}
