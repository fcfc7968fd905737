//! Green functions and heat kernels: the killed torus kernel `G_{R,λ}`
//! (spectral sum, cross-checked by a dense solve), the free kernel `G` on
//! `Z^d` (singularity-adapted quadrature, cross-checked by torus
//! extrapolation), and numerical checks of the heat-kernel and Green bounds.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{box_sites, Site, Torus};
use crate::lattice_sums::{epstein_zeta, leading_symbol_constant, SymbolEvaluator};
use crate::model::{JumpLaw, TorusLaw};
use crate::output::Csv;
use crate::quadrature::SpectralQuadrature;

/// `R^{-d} Σ_k w_k cos(2πk·x/R)` for every `x ∈ T_R`.
pub fn spectral_row(torus: &Torus, mode_weights: &[f64]) -> Vec<f64> {
    let n = torus.len();
    let norm = 1.0 / n as f64;
    (0..n)
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            for (k, w) in mode_weights.iter().enumerate() {
                acc += w * torus.cos_phase(k, x);
            }
            acc * norm
        })
        .collect()
}

/// Killed Green function `G_{R,λ}` on a torus, stored by displacement.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    pub torus: Torus,
    pub lambda: f64,
    /// `1 / (λ + ψ_R(k))`.
    pub mode_weights: Vec<f64>,
    /// `G_{R,λ}(0, x)` indexed by torus site.
    pub values: Vec<f64>,
}

pub fn green_torus(law: &TorusLaw, lambda: f64) -> Result<GreenKernel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::param("lambda", format!("killing rate must be > 0, got {lambda}")));
    }
    let mode_weights: Vec<f64> = law.symbol.iter().map(|p| 1.0 / (lambda + p)).collect();
    let values = spectral_row(&law.torus, &mode_weights);
    Ok(GreenKernel {
        torus: law.torus.clone(),
        lambda,
        mode_weights,
        values,
    })
}

/// Dense `(λ I - A_R)^{-1}` as a row-major matrix.
pub fn green_torus_dense_solve(law: &TorusLaw, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "killing rate must be > 0"));
    }
    let n = law.len();
    let a = law.generator_dense();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { lambda } else { 0.0 };
        diag - a[i * n + j]
    });
    let inv = m
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::numerical("green_kernel", "singular killed generator"))?;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

impl GreenKernel {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.values[self.torus.sub(x, y)]
    }

    pub fn at_origin(&self) -> f64 {
        self.values[0]
    }

    pub fn row_sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.mode_weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn dense(&self) -> Vec<f64> {
        self.torus
            .difference_table()
            .iter()
            .map(|&i| self.values[i])
            .collect()
    }

    /// `(G f)(x) = Σ_y G(x, y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.torus.convolve(&self.values, f)
    }

    pub fn quadratic_form(&self, f: &[f64]) -> f64 {
        self.apply(f).iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&["displacement", "value"]);
        for (i, v) in self.values.iter().enumerate() {
            csv.push(vec![self.torus.site(i).render(self.torus.d).into(), (*v).into()]);
        }
        csv
    }
}

/// Quadrature nodes for Fourier integrals on `Z^d` with the symbol cached.
#[derive(Clone, Debug)]
pub struct FreeSpectral {
    pub d: usize,
    pub alpha: f64,
    pub c0: f64,
    quad: SpectralQuadrature,
    psi: Vec<f64>,
    core_green: f64,
}

const QUAD_ORDER: usize = 16;
const DYADIC_LEVELS: usize = 44;

impl FreeSpectral {
    /// `max_freq` is the largest coordinate `|x_i|` that will be queried.
    pub fn new(law: &JumpLaw, max_freq: f64) -> Self {
        let d = law.d();
        let alpha = law.params.alpha;
        let quad = SpectralQuadrature::new(d, max_freq.max(1.0), QUAD_ORDER, DYADIC_LEVELS);
        let ev = law.symbol_evaluator();
        let groups: Vec<f64> = (0..quad.nodes.len() / d)
            .into_par_iter()
            .map(|g| ev.psi(&quad.nodes[g * d].theta))
            .collect();
        let psi: Vec<f64> = groups.iter().flat_map(|p| std::iter::repeat_n(*p, d)).collect();
        let c0 = if alpha < 2.0 {
            leading_symbol_constant(d, alpha, law.c)
        } else {
            f64::NAN
        };
        let core_green = if alpha < 2.0 && alpha < d as f64 {
            quad.core_singular_integral(alpha) / c0
        } else {
            0.0
        };
        FreeSpectral {
            d,
            alpha,
            c0,
            quad,
            psi,
            core_green,
        }
    }

    fn cos_product(theta: &[f64], x: &[i64]) -> f64 {
        theta
            .iter()
            .zip(x)
            .map(|(t, xi)| if *xi == 0 { 1.0 } else { (2.0 * PI * t * *xi as f64).cos() })
            .product()
    }

    /// `G(0, x) = ∫ Π cos(2πθ_i x_i) / ψ(θ) dθ` (requires `α < d`).
    pub fn green(&self, x: &[i64]) -> f64 {
        let body: f64 = self
            .quad
            .nodes
            .iter()
            .zip(&self.psi)
            .map(|(n, p)| n.weight * Self::cos_product(&n.theta, x) / p)
            .sum();
        body + self.core_green
    }

    /// Free heat kernel `p_t(0, x) = ∫ e^{-tψ(θ)} Π cos(2πθ_i x_i) dθ`.
    pub fn heat(&self, t: f64, x: &[i64]) -> f64 {
        let body: f64 = self
            .quad
            .nodes
            .iter()
            .zip(&self.psi)
            .map(|(n, p)| n.weight * (-t * p).exp() * Self::cos_product(&n.theta, x))
            .sum();
        body + (2.0 * self.quad.r_min).powi(self.d as i32)
    }

    /// `∫_0^S e^{-λt} p_t(0, 0) dt`, in closed form per node.
    pub fn killed_occupation(&self, lambda: f64, horizon: f64) -> f64 {
        let body: f64 = self
            .quad
            .nodes
            .iter()
            .zip(&self.psi)
            .map(|(n, p)| {
                let r = lambda + p;
                n.weight * (-(-r * horizon).exp_m1()) / r
            })
            .sum();
        let core_rate = lambda;
        let core = if core_rate > 0.0 {
            -(-core_rate * horizon).exp_m1() / core_rate
        } else {
            horizon
        };
        body + core * (2.0 * self.quad.r_min).powi(self.d as i32)
    }
}

/// Free Green value with the two-method discrepancy as error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeGreenEstimate {
    pub site: Vec<i64>,
    pub quadrature: f64,
    pub extrapolated: f64,
    pub discrepancy: f64,
}

fn require_transient(law: &JumpLaw) -> Result<()> {
    if !law.params.transient() {
        return Err(Error::param(
            "alpha",
            format!(
                "free Green function needs alpha < d (transience), got alpha={} d={}",
                law.params.alpha,
                law.d()
            ),
        ));
    }
    Ok(())
}

pub fn green_free(law: &JumpLaw, x: Site) -> Result<FreeGreenEstimate> {
    let d = law.d();
    let coords = x.coords(d).to_vec();
    let q = green_free_table(law, &[x])?[0];
    let e = green_free_extrapolated(law, &[x])?[0];
    Ok(FreeGreenEstimate {
        site: coords,
        quadrature: q,
        extrapolated: e,
        discrepancy: (q - e).abs(),
    })
}

/// Quadrature values `G(0, x)` for every site in `sites`.
pub fn green_free_table(law: &JumpLaw, sites: &[Site]) -> Result<Vec<f64>> {
    require_transient(law)?;
    let d = law.d();
    let max_freq = sites
        .iter()
        .flat_map(|s| s.coords(d).iter().map(|v| v.unsigned_abs()))
        .max()
        .unwrap_or(0) as f64;
    let fs = FreeSpectral::new(law, max_freq);
    Ok(sites.par_iter().map(|s| fs.green(s.coords(d))).collect())
}

/// Canonical representative of a mode under sign flips and permutations.
fn canonical_mode(k: &Site, d: usize, side: i64) -> [i64; 4] {
    let mut c = [0i64; 4];
    for i in 0..d {
        let v = k.0[i].rem_euclid(side);
        c[i] = v.min(side - v);
    }
    c[..d].sort_unstable();
    c
}

/// Torus estimate `R^{-d} Σ_{k≠0} Π cos(2πk_i x_i/R) / ψ(k/R)` minus the
/// leading finite-size term `Z_d(α/2) R^{α-d} / C0`.
pub fn torus_green_corrected(law: &JumpLaw, side: usize, sites: &[Site]) -> Vec<f64> {
    let d = law.d();
    let alpha = law.params.alpha;
    let torus = Torus::new(d, side).expect("valid torus");
    let ev: &SymbolEvaluator = law.symbol_evaluator();
    let n = torus.len();
    let mut keys: Vec<[i64; 4]> = (1..n).map(|k| canonical_mode(&torus.site(k), d, side as i64)).collect();
    keys.sort_unstable();
    keys.dedup();
    let values: Vec<f64> = keys
        .par_iter()
        .map(|key| {
            let theta: Vec<f64> = key[..d].iter().map(|v| *v as f64 / side as f64).collect();
            ev.psi(&theta)
        })
        .collect();
    let cache: HashMap<[i64; 4], f64> = keys.into_iter().zip(values).collect();
    let inv: Vec<f64> = (0..n)
        .map(|k| {
            if k == 0 {
                0.0
            } else {
                1.0 / cache[&canonical_mode(&torus.site(k), d, side as i64)]
            }
        })
        .collect();
    let c0 = leading_symbol_constant(d, alpha, law.c);
    let finite_size = epstein_zeta(d, alpha / 2.0) / c0 * (side as f64).powf(alpha - d as f64);
    sites
        .par_iter()
        .map(|s| {
            let x = torus.index(*s);
            let sum: f64 = inv.iter().enumerate().map(|(k, w)| w * torus.cos_phase(k, x)).sum();
            sum / n as f64 - finite_size
        })
        .collect()
}

/// Richardson elimination of the next finite-size exponents.
fn correction_exponents(d: usize, alpha: f64) -> Vec<f64> {
    let df = d as f64;
    let mut e = vec![
        df + 2.0 - 2.0 * alpha,
        df + 2.0 - alpha,
        df + 4.0 - 3.0 * alpha,
        df + 4.0 - 2.0 * alpha,
    ];
    e.retain(|p| *p > 0.0);
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    e
}

/// Free Green values by torus extrapolation along `R = R0 2^j`.
pub fn green_free_extrapolated(law: &JumpLaw, sites: &[Site]) -> Result<Vec<f64>> {
    require_transient(law)?;
    let d = law.d();
    let alpha = law.params.alpha;
    let exps = correction_exponents(d, alpha);
    let reach = sites
        .iter()
        .flat_map(|s| s.coords(d).iter().map(|v| v.unsigned_abs()))
        .max()
        .unwrap_or(0) as usize;
    let base = match d {
        1 => 256usize,
        2 => 32,
        _ => 8,
    }
    .max((8 * reach).next_power_of_two());
    let levels = exps.len() + 1;
    let sides: Vec<usize> = (0..levels).map(|j| base << j).collect();
    let estimates: Vec<Vec<f64>> = sides
        .iter()
        .map(|&r| torus_green_corrected(law, r, sites))
        .collect();
    let m = levels;
    let a = DMatrix::from_fn(m, m, |i, j| {
        if j == 0 {
            1.0
        } else {
            (sides[i] as f64).powf(-exps[j - 1])
        }
    });
    let lu = a.lu();
    let mut out = Vec::with_capacity(sites.len());
    for s in 0..sites.len() {
        let b = nalgebra::DVector::from_fn(m, |i, _| estimates[i][s]);
        let sol = lu
            .solve(&b)
            .ok_or_else(|| Error::numerical("green_kernel", "singular Richardson system"))?;
        out.push(sol[0]);
    }
    Ok(out)
}

/// `‖G(0,·)‖_q = (Σ_x G(0,x)^q)^{1/q}` with an asymptotic tail beyond `|x|∞ > X`.
pub fn free_green_q_norm(law: &JumpLaw, q: f64, reach: i64) -> Result<f64> {
    require_transient(law)?;
    let d = law.d();
    let alpha = law.params.alpha;
    if q * (d as f64 - alpha) <= d as f64 {
        return Ok(f64::INFINITY);
    }
    let side = (2 * reach + 1) as usize;
    let sites: Vec<Site> = box_sites(d, side)
        .into_iter()
        .map(|s| {
            let mut c = s.0;
            for v in c.iter_mut().take(d) {
                *v -= reach;
            }
            Site(c)
        })
        .collect();
    // by symmetry evaluate one canonical representative per orbit
    let canon = |s: &Site| -> Site {
        let mut c = [0i64; 4];
        for i in 0..d {
            c[i] = s.0[i].abs();
        }
        c[..d].sort_unstable();
        Site(c)
    };
    let mut reps: Vec<Site> = sites.iter().map(canon).collect();
    reps.sort();
    reps.dedup();
    let vals = green_free_table(law, &reps)?;
    let table: HashMap<Site, f64> = reps.into_iter().zip(vals).collect();
    let inner: f64 = sites.iter().map(|s| table[&canon(s)].powf(q)).sum();
    // tail: G ≈ A' |x|^{α-d}, with A' matched at the edge of the box along an axis
    let edge = table[&canon(&Site::from_slice(&{
        let mut e = vec![0i64; d];
        e[d - 1] = reach;
        e
    }))];
    let amp = edge * (reach as f64).powf(d as f64 - alpha);
    let p = q * (d as f64 - alpha);
    // Σ_{|x|∞ > X} |x|^{-p} ≈ ∫_{|x|∞ > X+1/2} |x|^{-p} dx, continuum estimate
    let tail = amp.powf(q) * tail_integral_outside_cube(d, p, reach as f64 + 0.5);
    Ok((inner + tail).powf(1.0 / q))
}

/// `∫_{|x|∞ > a} |x|_2^{-p} dx` for `p > d`.
fn tail_integral_outside_cube(d: usize, p: f64, a: f64) -> f64 {
    // homogeneity: equals a^{d-p} times the value at a = 1, which is
    // (angular integral) / (p - d); the angular factor is computed as
    // ∫_{∂[-1,1]^d} |u|^{-p} (u · n) dS = 2d ∫_{[-1,1]^{d-1}} (1 + |v|^2)^{-p/2} dv
    let angular = if d == 1 {
        2.0
    } else {
        let gl = crate::quadrature::GaussLegendre::new(24);
        let pts: Vec<(f64, f64)> = gl.mapped(-1.0, 1.0).collect();
        let mut total = 0.0;
        let mut idx = vec![0usize; d - 1];
        loop {
            let mut w = 1.0;
            let mut r2 = 1.0;
            for &i in &idx {
                w *= pts[i].1;
                r2 += pts[i].0 * pts[i].0;
            }
            total += w * r2.powf(-p / 2.0);
            let mut j = 0;
            while j < d - 1 {
                idx[j] += 1;
                if idx[j] < pts.len() {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d - 1 {
                break;
            }
        }
        2.0 * d as f64 * total
    };
    angular * a.powf(d as f64 - p) / (p - d as f64)
}

/// Torus heat kernel row with clipping diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatKernel {
    pub t: f64,
    pub values: Vec<f64>,
    /// Entries in `[-1e-10, 0)` set to zero.
    pub clipped: usize,
    pub min_raw: f64,
}

pub const RINGING_TOL: f64 = 1e-10;

pub fn heat_kernel_torus(law: &TorusLaw, t: f64) -> Result<HeatKernel> {
    if !(t >= 0.0) {
        return Err(Error::param("t", "time must be >= 0"));
    }
    let w: Vec<f64> = law.symbol.iter().map(|p| (-t * p).exp()).collect();
    let mut values = spectral_row(&law.torus, &w);
    let min_raw = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_raw < -RINGING_TOL {
        return Err(Error::numerical(
            "green_kernel",
            format!("heat kernel entry {min_raw:e} below ringing tolerance at t={t}"),
        ));
    }
    let mut clipped = 0;
    for v in &mut values {
        if *v < 0.0 {
            *v = 0.0;
            clipped += 1;
        }
    }
    Ok(HeatKernel {
        t,
        values,
        clipped,
        min_raw,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HeatBoundReport {
    pub t_grid: Vec<f64>,
    pub x_max: i64,
    pub c_star: f64,
    pub c_star_refined: f64,
    pub refinement_change: f64,
    pub on_diagonal: Vec<(f64, f64)>,
    pub on_diagonal_band: f64,
    pub stable: bool,
    pub band_ok: bool,
}

fn heat_envelope(d: usize, alpha: f64, t: f64, x: &[i64]) -> f64 {
    let on = t.powf(-(d as f64) / alpha);
    let r2: i64 = x.iter().map(|v| v * v).sum();
    if r2 == 0 {
        on
    } else {
        on.min(t * (r2 as f64).powf(-(d as f64 + alpha) / 2.0))
    }
}

fn heat_envelope_ratio_max(fs: &FreeSpectral, d: usize, alpha: f64, ts: &[f64], xs: &[Site]) -> f64 {
    let mut best: f64 = 0.0;
    for &t in ts {
        for x in xs {
            let p = fs.heat(t, x.coords(d));
            best = best.max(p / heat_envelope(d, alpha, t, x.coords(d)));
        }
    }
    best
}

/// Fitted constant `C* = max p_t(0,x) / (t^{-d/α} ∧ t|x|^{-(d+α)})` on a grid
/// and on a once-refined grid, plus the on-diagonal band over `t ∈ [1, 64]`.
pub fn check_heat_kernel_bounds(law: &JumpLaw, t_grid: &[f64], x_max: i64) -> Result<HeatBoundReport> {
    let d = law.d();
    let alpha = law.params.alpha;
    let fs = FreeSpectral::new(law, x_max as f64);
    let xs: Vec<Site> = box_sites(d, x_max as usize + 1);
    let c_star = heat_envelope_ratio_max(&fs, d, alpha, t_grid, &xs);
    let mut refined: Vec<f64> = Vec::new();
    for w in t_grid.windows(2) {
        refined.push(w[0]);
        refined.push((w[0] * w[1]).sqrt());
    }
    refined.extend(t_grid.last());
    let c_star_refined = heat_envelope_ratio_max(&fs, d, alpha, &refined, &xs);
    let on_diagonal: Vec<(f64, f64)> = (0..=12)
        .map(|j| {
            let t = 2f64.powf(j as f64 / 2.0);
            (t, fs.heat(t, &vec![0; d]) * t.powf(d as f64 / alpha))
        })
        .collect();
    let hi = on_diagonal.iter().map(|p| p.1).fold(0.0, f64::max);
    let lo = on_diagonal.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let change = (c_star_refined - c_star).abs() / c_star;
    Ok(HeatBoundReport {
        t_grid: t_grid.to_vec(),
        x_max,
        c_star,
        c_star_refined,
        refinement_change: change,
        on_diagonal,
        on_diagonal_band: hi / lo,
        stable: c_star.is_finite() && change <= 0.10,
        band_ok: hi / lo <= 2.0,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenComparisonRow {
    #[serde(rename = "R")]
    pub side: usize,
    pub lambda: f64,
    /// `λR^d max (G_{R,λ} - G)^+` with minimal-image displacements.
    pub c_fit: f64,
    /// Same with displacements taken literally in `[0, R)^d`.
    pub c_fit_literal: f64,
    pub g_torus_00: f64,
    pub g_free_00: f64,
    pub gap_00: f64,
    /// `∫_0^10 e^{-λt} p_t(0,0) dt`.
    pub occupation_lower_bound: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenComparisonReport {
    pub rows: Vec<GreenComparisonRow>,
    pub c_fit_spread: f64,
    pub gap_decreases: bool,
    pub lower_bound_holds: bool,
}

pub fn check_green_comparison(
    law: &JumpLaw,
    r_grid: &[usize],
    lambda_rule: impl Fn(usize) -> f64,
) -> Result<GreenComparisonReport> {
    require_transient(law)?;
    let d = law.d();
    let r_max = *r_grid.iter().max().ok_or_else(|| Error::param("R_grid", "empty"))?;
    // free values on [0, R_max)^d cover both conventions
    let all: Vec<Site> = box_sites(d, r_max);
    let free = green_free_table(law, &all)?;
    let free_at = |s: Site| -> f64 {
        let mut c = [0i64; 4];
        for i in 0..d {
            c[i] = s.0[i].abs();
        }
        let idx = all.iter().position(|a| a.0 == c).expect("site in table");
        free[idx]
    };
    let fs = FreeSpectral::new(law, 1.0);
    let mut rows = Vec::new();
    for &r in r_grid {
        let lambda = lambda_rule(r);
        let tl = TorusLaw::from_params(law.params, r, law.cutoff)?;
        let g = green_torus(&tl, lambda)?;
        let scale = lambda * (r as f64).powi(d as i32);
        let mut gap_min_image: f64 = 0.0;
        let mut gap_literal: f64 = 0.0;
        for idx in 0..g.len() {
            let v = g.values[idx];
            gap_min_image = gap_min_image.max(v - free_at(g.torus.min_image(idx)));
            gap_literal = gap_literal.max(v - free_at(g.torus.site(idx)));
        }
        let g00 = free_at(Site::ORIGIN);
        rows.push(GreenComparisonRow {
            side: r,
            lambda,
            c_fit: scale * gap_min_image,
            c_fit_literal: scale * gap_literal,
            g_torus_00: g.at_origin(),
            g_free_00: g00,
            gap_00: (g.at_origin() - g00).abs(),
            occupation_lower_bound: fs.killed_occupation(lambda, 10.0),
        });
    }
    let hi = rows.iter().map(|r| r.c_fit).fold(0.0, f64::max);
    let lo = rows.iter().map(|r| r.c_fit).fold(f64::INFINITY, f64::min);
    let gap_decreases = rows.first().map(|f| f.gap_00) > rows.last().map(|l| l.gap_00);
    let lower_bound_holds = rows.iter().all(|r| r.g_torus_00 >= r.occupation_lower_bound);
    Ok(GreenComparisonReport {
        rows,
        c_fit_spread: hi / lo,
        gap_decreases,
        lower_bound_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn crit_law() -> JumpLaw {
        JumpLaw::new(ModelParams::new(1, 0.5, 2.0).unwrap(), 64).unwrap()
    }

    #[test]
    fn torus_green_matches_dense_solve() {
        let params = ModelParams::new(1, 0.5, 2.0).unwrap();
        let t = TorusLaw::from_params(params, 16, 0).unwrap();
        let g = green_torus(&t, 0.1).unwrap();
        let dense = green_torus_dense_solve(&t, 0.1).unwrap();
        let spectral = g.dense();
        let err = spectral
            .iter()
            .zip(&dense)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "err {err}");
        assert!((g.row_sum() - 10.0).abs() < 1e-10);
        assert!(g.at_origin() <= 10.0);
    }

    #[test]
    fn heat_kernel_matches_poisson_series() {
        let params = ModelParams::new(1, 0.5, 2.0).unwrap();
        let t = TorusLaw::from_params(params, 16, 0).unwrap();
        let h = heat_kernel_torus(&t, 2.0).unwrap();
        // Σ_n e^{-t} t^n / n! μ_R^{*n}(0)
        let n = 16;
        let mut conv = vec![0.0; n];
        conv[0] = 1.0;
        let mut total = 0.0;
        let mut coef = (-2.0f64).exp();
        for step in 0..80 {
            total += coef * conv[0];
            let mut next = vec![0.0; n];
            for x in 0..n {
                for y in 0..n {
                    next[(x + y) % n] += conv[x] * t.weights[y];
                }
            }
            conv = next;
            coef *= 2.0 / (step + 1) as f64;
        }
        assert!((h.values[0] - total).abs() < 1e-8);
        assert!((h.values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let h0 = heat_kernel_torus(&t, 0.0).unwrap();
        assert!((h0.values[0] - 1.0).abs() < 1e-12);
        assert!(h0.values[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn free_green_two_methods_agree() {
        let law = crit_law();
        let sites: Vec<Site> = (0..4).map(|x| Site::from_slice(&[x])).collect();
        let q = green_free_table(&law, &sites).unwrap();
        let e = green_free_extrapolated(&law, &sites).unwrap();
        let reference = [1.25642454, 0.40342007, 0.29068733, 0.23854947];
        for i in 0..4 {
            assert!((q[i] - e[i]).abs() < 1e-8, "x={i}: {} vs {}", q[i], e[i]);
            assert!((q[i] - reference[i]).abs() < 1e-7, "x={i}: {}", q[i]);
        }
    }

    #[test]
    fn free_green_rejects_recurrent() {
        let law = JumpLaw::new(ModelParams::new(1, 1.5, 2.0).unwrap(), 8).unwrap();
        assert!(green_free(&law, Site::ORIGIN).is_err());
    }

    #[test]
    fn exponents_dedupe() {
        assert_eq!(correction_exponents(2, 1.0), vec![2.0, 3.0, 4.0]);
        assert_eq!(correction_exponents(1, 0.5), vec![2.0, 2.5, 3.5, 4.0]);
    }
}
