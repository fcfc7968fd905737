//! Variational constants: `ρ₁` on the killed torus, box truncations
//! `ρ(q;L)` and `κ(q;L)`, their duality, the Donsker–Varadhan rate, and the
//! `inf_M M κ₁(y/M)` scaling identity.
//!
//! All problems are posed on a finite site set with a dense symmetric
//! kernel. Maximizing `<f, K f>` over `‖f‖_{(2q)'} = 1` uses the damped
//! fixed point `f ← (K f)^{2q-1}` (normalized) with an ascent watchdog; a
//! projected gradient solver is the independent cross-check.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{green_free_table, GreenKernel};
use crate::lattice::{box_sites, conjugate_exponent, p_norm, LatticeFunction, Site, SpaceTag};
use crate::model::{dirichlet_form, dirichlet_form_torus, JumpLaw, TorusLaw};
use crate::output::Csv;
use crate::rng::{substream, Stream};
use crate::stats::par_map;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Euler–Lagrange residual at which an iteration counts as converged.
    pub tol: f64,
    pub damping: f64,
    pub starts: usize,
    pub seed: u64,
    /// Run the projected-gradient solver from the same starts.
    pub cross_check: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iter: 100_000,
            tol: 1e-10,
            damping: 0.5,
            starts: 20,
            seed: 0,
            cross_check: true,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::param("starts", "need at least one start"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::param("damping", "must lie in (0, 1]"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Box { d: usize, side: usize },
    Torus { d: usize, side: usize, lambda: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalResult {
    pub problem: String,
    pub q: f64,
    pub domain: Domain,
    pub value: f64,
    #[serde(skip)]
    pub optimizer: LatticeFunction,
    pub iterations: usize,
    pub residual: f64,
    /// `|‖f‖ - 1|` in the constraint norm.
    pub constraint_residual: f64,
    pub converged: bool,
    pub starts: usize,
    pub watchdog_fallbacks: usize,
    /// Value found by projected gradient from the same starts.
    pub cross_check: Option<f64>,
    /// Relative gap between the two solvers.
    pub cross_check_gap: Option<f64>,
    /// `(iteration, objective, residual)` of the winning start.
    #[serde(skip)]
    pub trace: Vec<(usize, f64, f64)>,
}

impl VariationalResult {
    pub fn trace_csv(&self) -> Csv {
        let mut csv = Csv::new(&["iteration", "objective", "residual"]);
        for &(i, v, r) in &self.trace {
            csv.push(vec![i.into(), v.into(), r.into()]);
        }
        csv
    }
}

fn require_q(q: f64) -> Result<()> {
    if !(q > 1.0) || !q.is_finite() {
        return Err(Error::param("q", format!("need q > 1, got {q}")));
    }
    Ok(())
}

fn matvec(k: &[f64], n: usize, f: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| k[i * n..(i + 1) * n].iter().zip(f).map(|(a, b)| a * b).sum())
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn scaled(mut f: Vec<f64>, p: f64) -> Vec<f64> {
    let n = p_norm(&f, p);
    if n > 0.0 {
        for v in &mut f {
            *v /= n;
        }
    }
    f
}

/// Relative objective drop tolerated before the watchdog intervenes; near
/// convergence the damped step can lose a few ulps without being a real
/// descent.
const ROUNDOFF: f64 = 1e-13;

#[derive(Clone, Debug)]
struct Run {
    f: Vec<f64>,
    value: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    fallbacks: usize,
    trace: Vec<(usize, f64, f64)>,
}

/// `sup <f, K f>` over `f >= 0`, `‖f‖_{p'} = 1`, with `p' = (2q)'`.
struct FormMax<'a> {
    k: &'a [f64],
    n: usize,
    power: f64,
    dual: f64,
}

impl<'a> FormMax<'a> {
    fn new(k: &'a [f64], n: usize, q: f64) -> Self {
        FormMax {
            k,
            n,
            power: 2.0 * q - 1.0,
            dual: conjugate_exponent(2.0 * q),
        }
    }

    fn project(&self, f: Vec<f64>) -> Vec<f64> {
        scaled(f.into_iter().map(|v| v.max(0.0)).collect(), self.dual)
    }

    /// `max_x |(Kf)_x - <f,Kf> f_x^{p'-1}| / <f,Kf>`.
    fn residual(&self, f: &[f64], kf: &[f64], val: f64) -> f64 {
        let e = self.dual - 1.0;
        f.iter()
            .zip(kf)
            .map(|(fx, kx)| (kx - val * fx.powf(e)).abs())
            .fold(0.0, f64::max)
            / val
    }

    /// One projected-gradient ascent step with backtracking on `eta`.
    fn pg_step(&self, f: &[f64], kf: &[f64], val: f64, eta: &mut f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
        let e = self.dual - 1.0;
        let grad: Vec<f64> = f.iter().zip(kf).map(|(fx, kx)| 2.0 * (kx - val * fx.powf(e))).collect();
        for _ in 0..80 {
            let cand = self.project(f.iter().zip(&grad).map(|(a, g)| a + *eta * g).collect());
            let kc = matvec(self.k, self.n, &cand);
            let vc = dot(&cand, &kc);
            if vc > val {
                *eta = (*eta * 2.0).min(1e6);
                return Some((cand, kc, vc));
            }
            *eta *= 0.5;
            if *eta < 1e-300 {
                break;
            }
        }
        None
    }

    fn fixed_point(&self, start: &[f64], opts: &SolverOptions) -> Run {
        let mut f = self.project(start.to_vec());
        let mut kf = matvec(self.k, self.n, &f);
        let mut val = dot(&f, &kf);
        let mut eta = 1.0 / val.max(1e-300);
        let mut fallbacks = 0;
        let mut trace = Vec::new();
        let mut res = self.residual(&f, &kf, val);
        let mut it = 0;
        let mut stall = 0;
        while it < opts.max_iter {
            if res <= opts.tol {
                break;
            }
            it += 1;
            let target = self.project(kf.iter().map(|v| v.max(0.0).powf(self.power)).collect());
            let mixed: Vec<f64> = f
                .iter()
                .zip(&target)
                .map(|(a, b)| (1.0 - opts.damping) * a + opts.damping * b)
                .collect();
            let cand = self.project(mixed);
            let kc = matvec(self.k, self.n, &cand);
            let vc = dot(&cand, &kc);
            let (nf, nk, nv) = if vc >= val * (1.0 - ROUNDOFF) {
                (cand, kc, vc)
            } else {
                fallbacks += 1;
                match self.pg_step(&f, &kf, val, &mut eta) {
                    Some(s) => s,
                    None => break,
                }
            };
            stall = if (nv - val).abs() <= 1e-16 * val { stall + 1 } else { 0 };
            f = nf;
            kf = nk;
            val = nv;
            res = self.residual(&f, &kf, val);
            if it % 16 == 0 || it < 16 {
                trace.push((it, val, res));
            }
            if stall > 200 {
                break;
            }
        }
        trace.push((it, val, res));
        Run {
            f,
            value: val,
            iterations: it,
            residual: res,
            converged: res <= opts.tol,
            fallbacks,
            trace,
        }
    }

    fn gradient(&self, start: &[f64], opts: &SolverOptions) -> Run {
        let mut f = self.project(start.to_vec());
        let mut kf = matvec(self.k, self.n, &f);
        let mut val = dot(&f, &kf);
        let mut eta = 1.0 / val.max(1e-300);
        let mut res = self.residual(&f, &kf, val);
        let mut it = 0;
        let mut stall = 0;
        while it < opts.max_iter && res > opts.tol {
            it += 1;
            match self.pg_step(&f, &kf, val, &mut eta) {
                Some((nf, nk, nv)) => {
                    stall = if nv - val <= 1e-15 * val { stall + 1 } else { 0 };
                    f = nf;
                    kf = nk;
                    val = nv;
                    res = self.residual(&f, &kf, val);
                }
                None => break,
            }
            if stall > 50 {
                break;
            }
        }
        Run {
            f,
            value: val,
            iterations: it,
            residual: res,
            converged: res <= opts.tol,
            fallbacks: 0,
            trace: vec![(it, val, res)],
        }
    }
}

/// Starts: `δ` at `anchor`, `δ` at the middle site, uniform, then random.
fn starting_points(n: usize, count: usize, seed: u64, signed: bool) -> Vec<Vec<f64>> {
    let mut starts = Vec::with_capacity(count);
    let mut delta0 = vec![0.0; n];
    delta0[0] = 1.0;
    starts.push(delta0);
    if count > 1 {
        starts.push(vec![1.0; n]);
    }
    if count > 2 && n > 1 {
        let mut mid = vec![0.0; n];
        mid[n / 2] = 1.0;
        starts.push(mid);
    }
    let mut r = 0u64;
    while starts.len() < count {
        let mut rng = substream(seed, r, Stream::Start);
        let v: Vec<f64> = if signed {
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        } else {
            (0..n).map(|_| rng.random::<f64>()).collect()
        };
        starts.push(v);
        r += 1;
    }
    starts
}

struct Solved {
    best: Run,
    cross: Option<Run>,
    starts: usize,
}

fn maximize_form(k: &[f64], n: usize, q: f64, opts: &SolverOptions) -> Solved {
    let fm = FormMax::new(k, n, q);
    let starts = starting_points(n, opts.starts, opts.seed, false);
    let runs = par_map(starts.len(), |i| fm.fixed_point(&starts[i], opts));
    let best = pick_best(runs, |a, b| a > b);
    let cross = opts.cross_check.then(|| {
        let runs = par_map(starts.len(), |i| fm.gradient(&starts[i], opts));
        pick_best(runs, |a, b| a > b)
    });
    Solved {
        best,
        cross,
        starts: starts.len(),
    }
}

/// First run with the best value (ties keep the earlier start).
fn pick_best(runs: Vec<Run>, better: impl Fn(f64, f64) -> bool) -> Run {
    let mut it = runs.into_iter();
    let mut best = it.next().expect("at least one start");
    for r in it {
        if better(r.value, best.value) {
            best = r;
        }
    }
    best
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// `ρ₁ = sup { <f, G_{R,λ} f> : ‖f‖_{(2q)',R} = 1 }`.
pub fn solve_rho1(kernel: &GreenKernel, q: f64, opts: &SolverOptions) -> Result<VariationalResult> {
    require_q(q)?;
    opts.validate()?;
    if kernel.min_eigenvalue() <= 0.0 {
        return Err(Error::numerical("variational_solver", "kernel is not positive definite"));
    }
    let n = kernel.len();
    let k = kernel.dense();
    let solved = maximize_form(&k, n, q, opts);
    let torus = &kernel.torus;
    let sites = (0..n).map(|i| torus.site(i)).collect();
    finish_form("rho1", q, Domain::Torus { d: torus.d, side: torus.side, lambda: kernel.lambda }, torus.d, torus.tag(), sites, solved)
}

fn finish_form(
    problem: &str,
    q: f64,
    domain: Domain,
    d: usize,
    space: SpaceTag,
    sites: Vec<Site>,
    solved: Solved,
) -> Result<VariationalResult> {
    let dual = conjugate_exponent(2.0 * q);
    let best = solved.best;
    let cross_value = solved.cross.as_ref().map(|r| r.value);
    let constraint_residual = (p_norm(&best.f, dual) - 1.0).abs();
    Ok(VariationalResult {
        problem: problem.into(),
        q,
        domain,
        value: best.value,
        optimizer: LatticeFunction::new(d, space, sites, best.f)?,
        iterations: best.iterations,
        residual: best.residual,
        constraint_residual,
        converged: best.converged,
        starts: solved.starts,
        watchdog_fallbacks: best.fallbacks,
        cross_check: cross_value,
        cross_check_gap: cross_value.map(|c| rel_gap(best.value, c)),
        trace: best.trace,
    })
}

/// Free Green values `G(0, x)` for `|x_i| <= reach`, stored by orbit under
/// sign flips and coordinate permutations.
#[derive(Clone, Debug)]
pub struct FreeGreenTable {
    pub d: usize,
    pub reach: i64,
    values: HashMap<[i64; 4], f64>,
}

fn orbit_key(z: Site, d: usize) -> [i64; 4] {
    let mut c = [0i64; 4];
    for i in 0..d {
        c[i] = z.0[i].abs();
    }
    c[..d].sort_unstable();
    c
}

impl FreeGreenTable {
    pub fn new(law: &JumpLaw, reach: i64) -> Result<Self> {
        let d = law.d();
        let mut keys: Vec<[i64; 4]> = box_sites(d, reach as usize + 1)
            .into_iter()
            .map(|s| orbit_key(s, d))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let sites: Vec<Site> = keys.iter().map(|k| Site(*k)).collect();
        let vals = green_free_table(law, &sites)?;
        Ok(FreeGreenTable {
            d,
            reach,
            values: keys.into_iter().zip(vals).collect(),
        })
    }

    pub fn get(&self, z: Site) -> f64 {
        self.values[&orbit_key(z, self.d)]
    }

    pub fn origin(&self) -> f64 {
        self.get(Site::ORIGIN)
    }

    /// Dense `G(x - y)` over the given sites.
    pub fn matrix(&self, sites: &[Site]) -> Vec<f64> {
        let n = sites.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = self.get(sites[i].sub(sites[j]));
            }
        }
        k
    }
}

/// Sites of the box `[0, L]^d` (`L + 1` per side).
pub fn box_domain(d: usize, l: usize) -> Vec<Site> {
    box_sites(d, l + 1)
}

/// `ρ(q; L)`: the torus problem's analogue on `[0, L]^d` with the free Green function.
pub fn solve_rho(law: &JumpLaw, q: f64, l: usize, opts: &SolverOptions) -> Result<VariationalResult> {
    let table = FreeGreenTable::new(law, l as i64)?;
    solve_rho_with(law, &table, q, l, opts)
}

pub fn solve_rho_with(
    law: &JumpLaw,
    table: &FreeGreenTable,
    q: f64,
    l: usize,
    opts: &SolverOptions,
) -> Result<VariationalResult> {
    require_q(q)?;
    opts.validate()?;
    if !law.params.transient() {
        return Err(Error::param("alpha", "rho(q) needs alpha < d"));
    }
    if table.reach < l as i64 {
        return Err(Error::param("L", "Green table does not cover the box"));
    }
    let d = law.d();
    let sites = box_domain(d, l);
    let k = table.matrix(&sites);
    let solved = maximize_form(&k, sites.len(), q, opts);
    finish_form("rho", q, Domain::Box { d, side: l }, d, SpaceTag::Free, sites, solved)
}

/// Killed energy matrix `E = I - M_B` on the box: `<f, E f>` is the
/// Dirichlet form of `f` supported in `B`.
pub fn box_energy_matrix(law: &JumpLaw, sites: &[Site]) -> Vec<f64> {
    let n = sites.len();
    let mut e = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            e[i * n + j] = if i == j { 1.0 } else { -law.mu(sites[j].sub(sites[i])) };
        }
    }
    e
}

fn spd_inverse(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::numerical("variational_solver", "energy matrix is not positive definite"))?;
    let inv = chol.inverse();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// Minimizer of `<f, E f> / ‖f‖²_{2q}` (sign unconstrained).
struct QuotientMin<'a> {
    e: &'a [f64],
    n: usize,
    q: f64,
}

impl QuotientMin<'_> {
    fn eval(&self, f: &[f64]) -> (Vec<f64>, f64) {
        let ef = matvec(self.e, self.n, f);
        let num = dot(f, &ef);
        let den = p_norm(f, 2.0 * self.q).powi(2);
        (ef, num / den)
    }

    /// With `‖f‖_{2q} = 1`: `max |Ef - Q sgn(f)|f|^{2q-1}| / Q`.
    fn residual(&self, f: &[f64], ef: &[f64], val: f64) -> f64 {
        f.iter()
            .zip(ef)
            .map(|(fx, ex)| (ex - val * fx.signum() * fx.abs().powf(2.0 * self.q - 1.0)).abs())
            .fold(0.0, f64::max)
            / val
    }

    fn descend(&self, start: &[f64], opts: &SolverOptions) -> Run {
        let p = 2.0 * self.q;
        let mut f = scaled(start.to_vec(), p);
        let (mut ef, mut val) = self.eval(&f);
        let mut res = self.residual(&f, &ef, val);
        let mut eta = 0.5;
        let mut it = 0;
        let mut stall = 0;
        'outer: while it < opts.max_iter && res > opts.tol {
            it += 1;
            let grad: Vec<f64> = f
                .iter()
                .zip(&ef)
                .map(|(fx, ex)| 2.0 * (ex - val * fx.signum() * fx.abs().powf(p - 1.0)))
                .collect();
            loop {
                let cand = scaled(f.iter().zip(&grad).map(|(a, g)| a - eta * g).collect(), p);
                let (ec, vc) = self.eval(&cand);
                if vc < val {
                    stall = if val - vc <= 1e-15 * val { stall + 1 } else { 0 };
                    f = cand;
                    ef = ec;
                    val = vc;
                    res = self.residual(&f, &ef, val);
                    eta = (eta * 2.0).min(1e6);
                    break;
                }
                eta *= 0.5;
                if eta < 1e-300 {
                    break 'outer;
                }
            }
            if stall > 50 {
                break;
            }
        }
        Run {
            f,
            value: val,
            iterations: it,
            residual: res,
            converged: res <= opts.tol,
            fallbacks: 0,
            trace: vec![(it, val, res)],
        }
    }
}

/// `κ(q; L) = inf { <f, -A f> / ‖f‖²_{2q} : supp f ⊂ [0, L]^d, ‖f‖_2 = 1 }`.
///
/// Solved as `1 / sup <g, E^{-1} g>` over `‖g‖_{(2q)'} = 1` with the same
/// fixed point, then mapped back through `f ∝ E^{-1} g`; the cross-check
/// descends the quotient directly.
pub fn solve_kappa(law: &JumpLaw, q: f64, l: usize, opts: &SolverOptions) -> Result<VariationalResult> {
    require_q(q)?;
    opts.validate()?;
    let d = law.d();
    let sites = box_domain(d, l);
    let n = sites.len();
    let e = box_energy_matrix(law, &sites);
    let (f, run, fallbacks, starts, cross) = kappa_core(&e, n, q, opts)?;
    let fun = LatticeFunction::new(d, SpaceTag::Free, sites, f)?;
    let value = dirichlet_form(law, &fun)? / fun.p_norm(2.0 * q).powi(2);
    Ok(VariationalResult {
        problem: "kappa".into(),
        q,
        domain: Domain::Box { d, side: l },
        value,
        constraint_residual: (fun.p_norm(2.0) - 1.0).abs(),
        optimizer: fun,
        iterations: run.iterations,
        residual: run.residual,
        converged: run.converged,
        starts,
        watchdog_fallbacks: fallbacks,
        cross_check: cross,
        cross_check_gap: cross.map(|c| rel_gap(value, c)),
        trace: run.trace,
    })
}

/// Returns the `ℓ²`-normalized minimizer, the run record (residual of the
/// quotient problem), fallbacks, start count and the cross-check value.
fn kappa_core(
    e: &[f64],
    n: usize,
    q: f64,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, Run, usize, usize, Option<f64>)> {
    let green = spd_inverse(e, n)?;
    let solved = maximize_form(&green, n, q, &SolverOptions { cross_check: false, ..opts.clone() });
    let g = &solved.best.f;
    let f = scaled(matvec(&green, n, g), 2.0 * q);
    let qm = QuotientMin { e, n, q };
    let (ef, val) = qm.eval(&f);
    let residual = qm.residual(&f, &ef, val);
    let run = Run {
        f: f.clone(),
        value: val,
        iterations: solved.best.iterations,
        residual,
        converged: residual <= opts.tol.max(10.0 * solved.best.residual),
        fallbacks: solved.best.fallbacks,
        trace: solved.best.trace.iter().map(|&(i, v, r)| (i, 1.0 / v, r)).collect(),
    };
    let cross = opts.cross_check.then(|| {
        let starts = starting_points(n, opts.starts, opts.seed, true);
        let runs = par_map(starts.len(), |i| qm.descend(&starts[i], opts));
        pick_best(runs, |a, b| a < b).value
    });
    Ok((scaled(f, 2.0), run, solved.best.fallbacks, solved.starts, cross))
}

/// `κ·ρ₁` on the killed torus, where `κ` uses the energy `<f, (λ - A_R) f>`;
/// it equals one exactly since `G_{R,λ} = (λ - A_R)^{-1}`.
#[derive(Clone, Debug, Serialize)]
pub struct TorusDuality {
    pub side: usize,
    pub lambda: f64,
    pub rho1: f64,
    pub kappa: f64,
    pub product: f64,
}

pub fn check_torus_duality(law: &TorusLaw, lambda: f64, q: f64, opts: &SolverOptions) -> Result<TorusDuality> {
    let kernel = crate::green::green_torus(law, lambda)?;
    let rho = solve_rho1(&kernel, q, &SolverOptions { cross_check: false, ..opts.clone() })?;
    let n = law.len();
    let a = law.generator_dense();
    let e: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(i, v)| if i / n == i % n { lambda - v } else { -v })
        .collect();
    let qm = QuotientMin { e: &e, n, q };
    let starts = starting_points(n, opts.starts.min(8), opts.seed, true);
    let runs = par_map(starts.len(), |i| qm.descend(&starts[i], opts));
    let kappa = pick_best(runs, |a, b| a < b).value;
    Ok(TorusDuality {
        side: law.side(),
        lambda,
        rho1: rho.value,
        kappa,
        product: kappa * rho.value,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityRow {
    pub side: usize,
    pub rho: f64,
    pub kappa: f64,
    pub product: f64,
    pub rho_residual: f64,
    pub kappa_residual: f64,
    /// `<g, G g> / ‖G g‖²_{2q}` over an enlarged box, an upper bound for `κ(q)`.
    pub constructive_bound: f64,
    pub constructive_holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
    pub delta: f64,
    pub rows: Vec<DualityRow>,
    pub within_tolerance: bool,
    pub monotone_trend: bool,
    pub rho_nondecreasing: bool,
    pub kappa_nonincreasing: bool,
    pub pass: bool,
}

/// `κ(q;L) ρ(q;L)` along `l_grid` (sorted ascending).
pub fn check_duality(
    law: &JumpLaw,
    q: f64,
    l_grid: &[usize],
    delta: f64,
    opts: &SolverOptions,
) -> Result<DualityReport> {
    require_q(q)?;
    if l_grid.is_empty() {
        return Err(Error::param("L_grid", "empty box grid"));
    }
    let mut grid = l_grid.to_vec();
    grid.sort_unstable();
    let l_max = *grid.last().unwrap();
    let d = law.d();
    let table = FreeGreenTable::new(law, 2 * l_max as i64)?;
    let p = 2.0 * q;
    let mut rows = Vec::new();
    for &l in &grid {
        let rho = solve_rho_with(law, &table, q, l, opts)?;
        let kappa = solve_kappa(law, q, l, opts)?;
        // f = G g on the box widened by L/2 on each side
        let margin = l.div_ceil(2) as i64;
        let wide: Vec<Site> = box_sites(d, l + 1 + 2 * margin as usize)
            .into_iter()
            .map(|s| {
                let mut c = s.0;
                for v in c.iter_mut().take(d) {
                    *v -= margin;
                }
                Site(c)
            })
            .collect();
        let g = &rho.optimizer;
        let gg: Vec<f64> = wide
            .iter()
            .map(|x| {
                g.sites
                    .iter()
                    .zip(&g.values)
                    .map(|(y, gy)| table.get(x.sub(*y)) * gy)
                    .sum()
            })
            .collect();
        let form: f64 = g
            .sites
            .iter()
            .zip(&g.values)
            .map(|(x, gx)| gx * g.sites.iter().zip(&g.values).map(|(y, gy)| table.get(x.sub(*y)) * gy).sum::<f64>())
            .sum();
        let bound = form / p_norm(&gg, p).powi(2);
        let slack = 1e-8 + rho.residual.max(kappa.residual);
        rows.push(DualityRow {
            side: l,
            rho: rho.value,
            kappa: kappa.value,
            product: rho.value * kappa.value,
            rho_residual: rho.residual,
            kappa_residual: kappa.residual,
            constructive_bound: bound,
            constructive_holds: bound <= 1.0 / form + slack,
        });
    }
    let last = rows.last().unwrap();
    let within_tolerance = (last.product - 1.0).abs() <= delta;
    let tail = &rows[rows.len().saturating_sub(3)..];
    let monotone_trend = tail
        .windows(2)
        .all(|w| (w[1].product - 1.0).abs() <= (w[0].product - 1.0).abs());
    let rel = 1e-9;
    let rho_nondecreasing = rows.windows(2).all(|w| w[1].rho >= w[0].rho * (1.0 - rel));
    let kappa_nonincreasing = rows.windows(2).all(|w| w[1].kappa <= w[0].kappa * (1.0 + rel));
    let pass = within_tolerance
        && monotone_trend
        && rows.iter().all(|r| r.constructive_holds)
        && rho_nondecreasing
        && kappa_nonincreasing;
    Ok(DualityReport {
        d,
        alpha: law.params.alpha,
        q,
        delta,
        rows,
        within_tolerance,
        monotone_trend,
        rho_nondecreasing,
        kappa_nonincreasing,
        pass,
    })
}

fn check_probability(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::param("nu", "probability weights must be >= 0"));
    }
    let total: f64 = values.iter().sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::param("nu", format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `J(ν) = <√ν, -A √ν>` for a finitely supported probability on `Z^d`.
pub fn dv_rate(law: &JumpLaw, nu: &LatticeFunction) -> Result<f64> {
    check_probability(&nu.values)?;
    let root = LatticeFunction::new(nu.d, nu.space, nu.sites.clone(), nu.values.iter().map(|v| v.sqrt()).collect())?;
    dirichlet_form(law, &root)
}

pub fn dv_rate_torus(law: &TorusLaw, nu: &[f64]) -> Result<f64> {
    check_probability(nu)?;
    let root: Vec<f64> = nu.iter().map(|v| v.sqrt()).collect();
    dirichlet_form_torus(law, &root)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConstrainedPoint {
    /// Lower bound `u` on `‖f‖²_{2q}`.
    pub u: f64,
    pub kappa1: f64,
    /// `‖f‖²_{2q}` at the minimizer.
    pub achieved: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub y: f64,
    pub inf_value: f64,
    pub argmin_m: f64,
    pub target: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MScalingReport {
    pub q: f64,
    pub side: usize,
    pub kappa: f64,
    pub curve: Vec<ConstrainedPoint>,
    pub kappa1_nondecreasing: bool,
    pub rows: Vec<ScalingRow>,
    pub tolerance: f64,
    pub pass: bool,
}

/// `κ₁(u) = inf { <f, E f> : ‖f‖_2 = 1, ‖f‖²_{2q} >= u }` by an augmented
/// Lagrangian with gradient steps on the unit sphere.
fn kappa1(e: &[f64], n: usize, q: f64, u: f64, starts: &[Vec<f64>]) -> (f64, f64) {
    let p = 2.0 * q;
    let norm_sq = |f: &[f64]| p_norm(f, p).powi(2);
    let energy = |f: &[f64]| dot(f, &matvec(e, n, f));
    // grad of ‖f‖²_{2q} = 2 ‖f‖^{2-2q} sgn(f)|f|^{2q-1}
    let norm_sq_grad = |f: &[f64]| -> Vec<f64> {
        let nn = p_norm(f, p);
        f.iter()
            .map(|x| 2.0 * nn.powf(2.0 - p) * x.signum() * x.abs().powf(p - 1.0))
            .collect()
    };
    let mut best = (f64::INFINITY, 0.0);
    for s in starts {
        let mut f = scaled(s.clone(), 2.0);
        let mut mult = 0.0;
        let mut pen = 10.0;
        let mut prev_viol = f64::INFINITY;
        for _outer in 0..60 {
            let aug = |f: &[f64]| -> f64 {
                let c = u - norm_sq(f);
                let t = (c + mult / pen).max(0.0);
                energy(f) + 0.5 * pen * t * t
            };
            let mut eta = 0.1;
            let mut val = aug(&f);
            for _ in 0..4000 {
                let ef = matvec(e, n, &f);
                let c = u - norm_sq(&f);
                let t = (c + mult / pen).max(0.0);
                let ng = norm_sq_grad(&f);
                let mut grad: Vec<f64> = ef.iter().zip(&ng).map(|(a, b)| 2.0 * a - pen * t * b).collect();
                let radial = dot(&grad, &f);
                for (g, x) in grad.iter_mut().zip(&f) {
                    *g -= radial * x;
                }
                let gnorm = dot(&grad, &grad).sqrt();
                if gnorm < 1e-12 {
                    break;
                }
                let mut moved = false;
                for _ in 0..60 {
                    let cand = scaled(f.iter().zip(&grad).map(|(a, g)| a - eta * g).collect(), 2.0);
                    let vc = aug(&cand);
                    if vc < val {
                        moved = val - vc > 1e-16 * val.abs().max(1e-300);
                        f = cand;
                        val = vc;
                        eta = (eta * 1.5).min(10.0);
                        break;
                    }
                    eta *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            let c = u - norm_sq(&f);
            mult = (mult + pen * c).max(0.0);
            let viol = c.max(0.0);
            if viol > 0.25 * prev_viol {
                pen *= 4.0;
            }
            prev_viol = viol;
            if viol < 1e-12 && (mult == 0.0 || c.abs() < 1e-10) {
                break;
            }
        }
        let en = energy(&f);
        let ach = norm_sq(&f);
        if ach >= u * (1.0 - 1e-9) && en < best.0 {
            best = (en, ach);
        }
    }
    best
}

/// `inf_M M κ₁(y/M)` against `y κ(q;L)` on `[0, L]^d`.
///
/// Since `M κ₁(y/M) = y · κ₁(u)/u` with `u = y/M`, `κ₁` is computed once on
/// a geometric grid of `u ∈ (0, 1)` and every `y` scans `M = y/u`.
pub fn check_m_scaling(
    law: &JumpLaw,
    q: f64,
    l: usize,
    y_grid: &[f64],
    n_grid: usize,
    tolerance: f64,
    opts: &SolverOptions,
) -> Result<MScalingReport> {
    require_q(q)?;
    if n_grid < 2 {
        return Err(Error::param("n_grid", "need at least two grid points"));
    }
    if y_grid.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::param("y", "scaling levels must be > 0"));
    }
    let d = law.d();
    let sites = box_domain(d, l);
    let n = sites.len();
    let e = box_energy_matrix(law, &sites);
    let kap = solve_kappa(law, q, l, &SolverOptions { cross_check: false, ..opts.clone() })?;
    let mut starts = vec![kap.optimizer.values.clone()];
    starts.extend(starting_points(n, 6, opts.seed, true));
    let (lo, hi): (f64, f64) = (0.01, 0.99);
    let us: Vec<f64> = (0..n_grid)
        .map(|j| lo * (hi / lo).powf(j as f64 / (n_grid - 1) as f64))
        .collect();
    let vals = par_map(us.len(), |j| kappa1(&e, n, q, us[j], &starts));
    let curve: Vec<ConstrainedPoint> = us
        .iter()
        .zip(&vals)
        .map(|(&u, &(k1, ach))| ConstrainedPoint {
            u,
            kappa1: k1,
            achieved: ach,
        })
        .collect();
    let kappa1_nondecreasing = curve
        .windows(2)
        .all(|w| w[1].kappa1 >= w[0].kappa1 * (1.0 - 1e-6));
    let rows: Vec<ScalingRow> = y_grid
        .iter()
        .map(|&y| {
            let (inf_value, argmin_m) = curve
                .iter()
                .map(|c| (y / c.u * c.kappa1, y / c.u))
                .fold((f64::INFINITY, f64::NAN), |a, b| if b.0 < a.0 { b } else { a });
            let target = y * kap.value;
            let relative_error = (inf_value - target).abs() / target;
            ScalingRow {
                y,
                inf_value,
                argmin_m,
                target,
                relative_error,
                pass: relative_error <= tolerance,
            }
        })
        .collect();
    let pass = kappa1_nondecreasing && rows.iter().all(|r| r.pass);
    Ok(MScalingReport {
        q,
        side: l,
        kappa: kap.value,
        curve,
        kappa1_nondecreasing,
        rows,
        tolerance,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::green_torus;
    use crate::model::ModelParams;
    use crate::special::hurwitz_zeta;

    fn law1(q: f64) -> JumpLaw {
        JumpLaw::new(ModelParams::new(1, 0.5, q).unwrap(), 64).unwrap()
    }

    fn quick() -> SolverOptions {
        SolverOptions {
            starts: 6,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn rho1_single_site_is_inverse_rate() {
        let tl = TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), 1, 0).unwrap();
        let k = green_torus(&tl, 0.5).unwrap();
        let r = solve_rho1(&k, 2.0, &quick()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-14);
        let dual = check_torus_duality(&tl, 0.5, 2.0, &quick()).unwrap();
        assert!((dual.product - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rho1_sandwich_and_cross_check() {
        let tl = TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), 16, 0).unwrap();
        let k = green_torus(&tl, 0.1).unwrap();
        let r = solve_rho1(&k, 2.0, &SolverOptions::default()).unwrap();
        let g00 = k.at_origin();
        assert!(r.value >= g00 && r.value <= 16f64.powf(0.5) * g00);
        assert!(r.converged, "{r:?}");
        assert!(r.constraint_residual < 1e-10);
        assert!(r.cross_check_gap.unwrap() < 1e-6, "{r:?}");
        assert!(r.optimizer.values.iter().all(|v| *v >= -1e-10));
        let dual = check_torus_duality(&tl, 0.1, 2.0, &quick()).unwrap();
        assert!((dual.product - 1.0).abs() < 1e-6, "{dual:?}");
    }

    #[test]
    fn kappa_solvers_agree_and_respect_bounds() {
        let law = law1(2.0);
        let k = solve_kappa(&law, 2.0, 16, &SolverOptions::default()).unwrap();
        assert!(k.value <= 1.0 && k.value > 0.0);
        assert!(k.cross_check_gap.unwrap() < 1e-6, "{k:?}");
        assert!(k.constraint_residual < 1e-10);
        // quotient of the reported optimizer equals the value
        let f = &k.optimizer;
        let direct = dirichlet_form(&law, f).unwrap() / f.p_norm(4.0).powi(2);
        assert!((direct - k.value).abs() < 1e-12);
    }

    #[test]
    fn rho_box_bounds() {
        let law = law1(3.0);
        let table = FreeGreenTable::new(&law, 16).unwrap();
        let mut prev = 0.0;
        for l in [4, 8, 16] {
            let r = solve_rho_with(&law, &table, 3.0, l, &quick()).unwrap();
            assert!(r.value >= table.origin() - 1e-12);
            assert!(r.value >= prev);
            prev = r.value;
        }
        let gq = crate::green::free_green_q_norm(&law, 3.0, 128).unwrap();
        assert!(prev <= gq + 1e-3, "{prev} vs {gq}");
    }

    #[test]
    fn product_is_at_least_one_and_decreases() {
        let law = law1(2.0);
        let rep = check_duality(&law, 2.0, &[4, 8], 0.5, &quick()).unwrap();
        for r in &rep.rows {
            assert!(r.product >= 1.0 - 1e-9, "{r:?}");
            assert!(r.constructive_holds, "{r:?}");
        }
        assert!(rep.rows[1].product < rep.rows[0].product);
        assert!(rep.rho_nondecreasing && rep.kappa_nonincreasing);
    }

    #[test]
    fn dv_rate_examples() {
        let law = law1(2.0);
        let d0 = LatticeFunction::delta(1, SpaceTag::Free, Site::ORIGIN);
        assert!((dv_rate(&law, &d0).unwrap() - 1.0).abs() < 1e-15);
        let tl = TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), 8, 0).unwrap();
        assert!(dv_rate_torus(&tl, &[0.125; 8]).unwrap().abs() < 1e-15);
        // uniform on {0..7}: only jumps leaving the block cost, h² per unit
        // of exit rate; the exit rate from x is c(ζ(1.5, 8-x) + ζ(1.5, x+1))
        let sites: Vec<Site> = (0..8).map(|i| Site::from_slice(&[i])).collect();
        let nu = LatticeFunction::new(1, SpaceTag::Free, sites, vec![0.125; 8]).unwrap();
        let got = dv_rate(&law, &nu).unwrap();
        let exit: f64 = (0..8)
            .map(|x| law.c * (hurwitz_zeta(1.5, (8 - x) as f64) + hurwitz_zeta(1.5, (x + 1) as f64)))
            .sum();
        let want = 0.125 * exit;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(dv_rate(&law, &LatticeFunction::new(1, SpaceTag::Free, vec![Site::ORIGIN], vec![0.5]).unwrap()).is_err());
    }

    #[test]
    fn m_scaling_matches_kappa() {
        let law = law1(2.0);
        let rep = check_m_scaling(&law, 2.0, 8, &[0.25, 0.5, 1.0], 24, 0.05, &quick()).unwrap();
        assert!(rep.pass, "{rep:#?}");
        let a = rep.rows[0].inf_value;
        let b = rep.rows[1].inf_value;
        assert!((b - 2.0 * a).abs() < 1e-12 * b);
    }

    #[test]
    fn rejects_degenerate_q() {
        let law = law1(2.0);
        assert!(solve_kappa(&law, 1.0, 4, &quick()).is_err());
    }
}
