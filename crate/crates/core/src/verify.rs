//! The acceptance suite behind `verify-all`: fifteen numbered criteria, each
//! with its tolerance pinned below, each writing its tables under
//! `tables/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::config::VerifyScale;
use crate::error::{Error, Result};
use crate::gaussian::{default_battery, eisenbaum_test};
use crate::green::{
    check_heat_kernel_bounds, check_green_comparison, green_free, green_torus, green_torus_dense_solve,
    free_green_q_norm,
};
use crate::lattice::Site;
use crate::ldp::{
    classify_regime, estimate_naive, estimate_tilted, rate_curve, DeviationSchedule, WalkModel,
    WindowGuards,
};
use crate::model::{JumpLaw, ModelParams, Regime, TorusLaw};
use crate::output::{Cell, Csv};
use crate::rng::child_seed;
use crate::stats::par_fold;
use crate::variational::{
    check_duality, check_m_scaling, solve_rho, solve_rho1, DualityReport, SolverOptions,
};
use crate::walk::{simulate_local_times, StopRule, WalkSampler};

pub const CLOCK_TOL: f64 = 1e-9;
pub const GREEN_EQUIV_TOL: f64 = 1e-10;
pub const ROW_SUM_TOL: f64 = 1e-10;
pub const C_FIT_SPREAD_MAX: f64 = 2.0;
pub const FREE_CROSS_TOL: f64 = 1e-4;
pub const ON_DIAGONAL_BAND: f64 = 2.0;
pub const C_STAR_CHANGE: f64 = 0.10;
pub const EISENBAUM_Z: f64 = 4.0;
pub const CONSTANT_SIGMAS: f64 = 3.0;
pub const SANDWICH_SLACK: f64 = 1e-12;
pub const SOLVER_AGREEMENT: f64 = 1e-6;
pub const DUALITY_DELTA: f64 = 0.05;
pub const NORM_SLACK: f64 = 1e-3;
pub const SCALING_TOL: f64 = 0.05;
pub const CONSISTENCY_SIGMAS: f64 = 3.0;
pub const RATE_SLACK: f64 = 0.5;
/// Naive `p_hat` must land in this range for the overlap threshold to count.
pub const OVERLAP_RANGE: (f64, f64) = (3e-4, 3e-3);

/// One line of the pass/fail table.
#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub measured: String,
    pub tolerance: String,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {} (tolerance {}){}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.tolerance,
            if self.detail.is_empty() {
                String::new()
            } else {
                format!("; {}", self.detail)
            }
        )
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub scale: VerifyScale,
    pub criteria: Vec<Criterion>,
    pub pass: bool,
}

impl SuiteReport {
    pub fn table(&self) -> Csv {
        let mut csv = Csv::new(&["id", "name", "pass", "measured", "tolerance", "detail"]);
        for c in &self.criteria {
            csv.push(vec![
                (c.id as u64).into(),
                c.name.clone().into(),
                c.pass.into(),
                c.measured.clone().into(),
                c.tolerance.clone().into(),
                c.detail.clone().into(),
            ]);
        }
        csv
    }

    pub fn render(&self) -> String {
        let mut s: String = self.criteria.iter().map(|c| c.line() + "\n").collect();
        let failed = self.criteria.iter().filter(|c| !c.pass).count();
        s.push_str(&format!(
            "{} of {} criteria passed\n",
            self.criteria.len() - failed,
            self.criteria.len()
        ));
        s
    }
}

/// Problem sizes for one scale.
#[derive(Clone, Debug)]
struct Sizes {
    clock_paths: usize,
    eisenbaum_n: usize,
    rho1_starts: usize,
    crit_boxes: Vec<usize>,
    super_boxes: Vec<usize>,
    super_starts: usize,
    norm_boxes: Vec<usize>,
    scaling_box: usize,
    ldp_n: usize,
    curve_n: usize,
}

impl Sizes {
    fn of(scale: VerifyScale) -> Sizes {
        match scale {
            VerifyScale::Full => Sizes {
                clock_paths: 100_000,
                eisenbaum_n: 1_000_000,
                rho1_starts: 20,
                crit_boxes: vec![8, 16, 32, 48],
                super_boxes: vec![6, 10, 14],
                super_starts: 4,
                norm_boxes: vec![8, 16, 32],
                scaling_box: 16,
                ldp_n: 100_000,
                curve_n: 100_000,
            },
            VerifyScale::Smoke => Sizes {
                clock_paths: 2_000,
                eisenbaum_n: 20_000,
                rho1_starts: 4,
                crit_boxes: vec![4, 6, 8, 10],
                super_boxes: vec![3, 4, 5],
                super_starts: 2,
                norm_boxes: vec![4, 8],
                scaling_box: 6,
                ldp_n: 5_000,
                curve_n: 5_000,
            },
        }
    }
}

fn params(d: usize, alpha: f64, q: f64) -> Result<ModelParams> {
    ModelParams::new(d, alpha, q)
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

struct Suite {
    seed: u64,
    sizes: Sizes,
    tables: PathBuf,
    crit_duality: Option<DualityReport>,
    super_duality: Option<DualityReport>,
}

impl Suite {
    fn write(&self, name: &str, csv: &Csv) -> Result<()> {
        csv.write(&self.tables.join(name))
    }

    fn seed_for(&self, tag: &str) -> u64 {
        child_seed(self.seed, tag)
    }

    fn clock(&mut self) -> Result<Criterion> {
        let tl = TorusLaw::from_params(params(1, 0.5, 2.0)?, 16, 0)?;
        let sampler = WalkSampler::torus(&tl)?;
        let stop = StopRule::Fixed { t: 100.0 };
        let seed = self.seed_for("clock");
        let n = self.sizes.clock_paths;
        let (err, jumps, failures) = par_fold(
            n,
            || (0.0f64, 0u64, 0usize),
            |acc, i| match simulate_local_times(&sampler, stop, seed, i as u64) {
                Ok((f, j)) => {
                    acc.0 = acc.0.max((f.total() - 100.0).abs());
                    acc.1 += j as u64;
                }
                Err(_) => acc.2 += 1,
            },
            |a, b| {
                a.0 = a.0.max(b.0);
                a.1 += b.1;
                a.2 += b.2;
            },
        );
        let mut csv = Csv::new(&["paths", "T", "max_abs_error", "mean_jumps"]);
        csv.push(vec![n.into(), 100.0.into(), err.into(), (jumps as f64 / n as f64).into()]);
        self.write("c01_clock.csv", &csv)?;
        Ok(Criterion {
            id: 1,
            name: "clock conservation".into(),
            pass: failures == 0 && err <= CLOCK_TOL,
            measured: format!("max |sum l - T| = {} over {n} paths", fmt(err)),
            tolerance: fmt(CLOCK_TOL),
            detail: String::new(),
            seconds: 0.0,
        })
    }

    fn green_instances(&mut self) -> Result<(Criterion, Criterion)> {
        let mut csv = Csv::new(&[
            "d", "R", "lambda", "max_abs_diff", "row_sum", "row_sum_error", "G00", "inv_lambda",
        ]);
        let mut worst_diff: f64 = 0.0;
        let mut worst_row: f64 = 0.0;
        let mut diag_ok = true;
        let mut count = 0;
        for (d, r_max) in [(1usize, 16usize), (2, 8)] {
            for r in 1..=r_max {
                let tl = TorusLaw::from_params(params(d, 0.5, 2.0)?, r, 0)?;
                for lambda in [0.1, 0.5, 2.0] {
                    let g = green_torus(&tl, lambda)?;
                    let dense = green_torus_dense_solve(&tl, lambda)?;
                    let diff = g
                        .dense()
                        .iter()
                        .zip(&dense)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    let row = g.row_sum();
                    let row_err = (row - 1.0 / lambda).abs();
                    worst_diff = worst_diff.max(diff);
                    worst_row = worst_row.max(row_err);
                    diag_ok &= g.at_origin() <= 1.0 / lambda * (1.0 + 1e-12);
                    count += 1;
                    csv.push(vec![
                        d.into(),
                        r.into(),
                        lambda.into(),
                        diff.into(),
                        row.into(),
                        row_err.into(),
                        g.at_origin().into(),
                        (1.0 / lambda).into(),
                    ]);
                }
            }
        }
        self.write("c02_c03_green_instances.csv", &csv)?;
        let c2 = Criterion {
            id: 2,
            name: "spectral vs dense Green".into(),
            pass: worst_diff <= GREEN_EQUIV_TOL,
            measured: format!("max entry gap {} over {count} instances", fmt(worst_diff)),
            tolerance: fmt(GREEN_EQUIV_TOL),
            detail: String::new(),
            seconds: 0.0,
        };
        let c3 = Criterion {
            id: 3,
            name: "row sums 1/lambda, G00 <= 1/lambda".into(),
            pass: worst_row <= ROW_SUM_TOL && diag_ok,
            measured: format!("max row-sum error {}, diagonal bound {}", fmt(worst_row), diag_ok),
            tolerance: fmt(ROW_SUM_TOL),
            detail: String::new(),
            seconds: 0.0,
        };
        Ok((c2, c3))
    }

    fn green_comparison(&mut self) -> Result<(Criterion, Criterion)> {
        let law = JumpLaw::new(params(1, 0.5, 2.0)?, 64)?;
        let rep = check_green_comparison(&law, &[8, 16, 32, 64], |r| (r as f64).powf(-0.5))?;
        let mut csv = Csv::new(&[
            "R", "lambda", "c_fit", "c_fit_literal", "G_torus_00", "G_free_00", "gap_00",
        ]);
        for r in &rep.rows {
            csv.push(vec![
                r.side.into(),
                r.lambda.into(),
                r.c_fit.into(),
                r.c_fit_literal.into(),
                r.g_torus_00.into(),
                r.g_free_00.into(),
                r.gap_00.into(),
            ]);
        }
        self.write("c04_c05_green_comparison.csv", &csv)?;
        let lit_hi = rep.rows.iter().map(|r| r.c_fit_literal).fold(0.0, f64::max);
        let lit_lo = rep.rows.iter().map(|r| r.c_fit_literal).fold(f64::INFINITY, f64::min);
        let c4 = Criterion {
            id: 4,
            name: "torus-vs-free Green constant C(R)".into(),
            pass: rep.c_fit_spread < C_FIT_SPREAD_MAX,
            measured: format!("max/min C(R) = {:.4} over R in {{8,16,32,64}}", rep.c_fit_spread),
            tolerance: format!("< {C_FIT_SPREAD_MAX}"),
            detail: format!("literal-displacement variant spread {:.3}", lit_hi / lit_lo),
            seconds: 0.0,
        };

        let mut cross = Csv::new(&["x", "quadrature", "extrapolated", "discrepancy"]);
        let mut worst: f64 = 0.0;
        for x in 0..=8 {
            let e = green_free(&law, Site::from_slice(&[x]))?;
            worst = worst.max(e.discrepancy);
            cross.push(vec![x.into(), e.quadrature.into(), e.extrapolated.into(), e.discrepancy.into()]);
        }
        self.write("c05_free_green_cross_check.csv", &cross)?;
        let first = rep.rows.first().map(|r| r.gap_00).unwrap_or(f64::NAN);
        let last = rep.rows.last().map(|r| r.gap_00).unwrap_or(f64::NAN);
        let c5 = Criterion {
            id: 5,
            name: "torus Green converges, free Green two-method agreement".into(),
            pass: rep.gap_decreases && worst <= FREE_CROSS_TOL,
            measured: format!(
                "|G_R(0,0) - G(0,0)|: R=8 {} > R=64 {}; max method gap {}",
                fmt(first),
                fmt(last),
                fmt(worst)
            ),
            tolerance: fmt(FREE_CROSS_TOL),
            detail: String::new(),
            seconds: 0.0,
        };
        Ok((c4, c5))
    }

    fn heat_bounds(&mut self) -> Result<Criterion> {
        let law = JumpLaw::new(params(1, 0.5, 2.0)?, 64)?;
        let ts: Vec<f64> = (0..=6).map(|j| 2f64.powi(j)).collect();
        let rep = check_heat_kernel_bounds(&law, &ts, 64)?;
        let mut csv = Csv::new(&["t", "p_t00_scaled"]);
        for (t, v) in &rep.on_diagonal {
            csv.push(vec![(*t).into(), (*v).into()]);
        }
        self.write("c06_heat_on_diagonal.csv", &csv)?;
        Ok(Criterion {
            id: 6,
            name: "heat kernel two-sided bound surrogate".into(),
            pass: rep.band_ok && rep.stable,
            measured: format!(
                "on-diagonal band {:.4}; C* {:.6} -> {:.6} (change {:.4})",
                rep.on_diagonal_band, rep.c_star, rep.c_star_refined, rep.refinement_change
            ),
            tolerance: format!("band <= {ON_DIAGONAL_BAND}, change <= {C_STAR_CHANGE}"),
            detail: String::new(),
            seconds: 0.0,
        })
    }

    fn isomorphism(&mut self) -> Result<Criterion> {
        let tl = TorusLaw::from_params(params(1, 0.5, 2.0)?, 8, 0)?;
        let battery = default_battery(1, 8, 2.0);
        let mut csv = Csv::new(&[
            "s", "functional", "left_mean", "se_left", "right_mean", "se_right", "z", "pass",
        ]);
        let mut pass = true;
        let mut worst_z: f64 = 0.0;
        let mut weight_note = Vec::new();
        for s in [1.0, 0.25] {
            let rep = eisenbaum_test(
                &tl,
                0.5,
                s,
                &battery,
                self.sizes.eisenbaum_n,
                self.seed_for(&format!("eisenbaum/{s}")),
                EISENBAUM_Z,
            )?;
            for r in &rep.results {
                worst_z = worst_z.max(r.z.abs());
                csv.push(vec![
                    s.into(),
                    r.name.clone().into(),
                    r.left_mean.into(),
                    r.se_left.into(),
                    r.right_mean.into(),
                    r.se_right.into(),
                    r.z.into(),
                    r.pass.into(),
                ]);
            }
            let w_ok = (rep.weight.mean - 1.0).abs() <= CONSTANT_SIGMAS * rep.weight.se;
            weight_note.push(format!("s={s}: E[1+Z0/s] = {:.5} +- {:.5}", rep.weight.mean, rep.weight.se));
            pass &= rep.pass && w_ok;
        }
        self.write("c07_eisenbaum.csv", &csv)?;
        Ok(Criterion {
            id: 7,
            name: "Eisenbaum isomorphism".into(),
            pass,
            measured: format!(
                "max |z| = {worst_z:.3} over {} functionals x 2 shifts, N = {}",
                battery.len(),
                self.sizes.eisenbaum_n
            ),
            tolerance: format!("|z| <= {EISENBAUM_Z}, constant within {CONSTANT_SIGMAS} sigma"),
            detail: weight_note.join(", "),
            seconds: 0.0,
        })
    }

    fn rho1_sandwich(&mut self) -> Result<Criterion> {
        let opts = SolverOptions {
            starts: self.sizes.rho1_starts,
            seed: self.seed_for("rho1"),
            ..SolverOptions::default()
        };
        let q = 2.0;
        let mut csv = Csv::new(&[
            "d", "R", "lambda", "G00", "rho1", "upper", "cross_check_gap", "residual", "converged",
        ]);
        let mut pass = true;
        let mut worst_gap: f64 = 0.0;
        for (d, r, lambda) in [(1usize, 8usize, 0.5), (1, 16, 0.1), (1, 32, 0.1), (2, 4, 0.5), (2, 6, 0.2)] {
            let tl = TorusLaw::from_params(params(d, 0.5, q)?, r, 0)?;
            let g = green_torus(&tl, lambda)?;
            let res = solve_rho1(&g, q, &opts)?;
            let g00 = g.at_origin();
            let upper = (r as f64).powf(d as f64 / q) * g00;
            let gap = res.cross_check_gap.unwrap_or(f64::INFINITY);
            worst_gap = worst_gap.max(gap);
            pass &= g00 <= res.value * (1.0 + SANDWICH_SLACK)
                && res.value <= upper * (1.0 + SANDWICH_SLACK)
                && gap <= SOLVER_AGREEMENT
                && res.converged;
            csv.push(vec![
                d.into(),
                r.into(),
                lambda.into(),
                g00.into(),
                res.value.into(),
                upper.into(),
                gap.into(),
                res.residual.into(),
                res.converged.into(),
            ]);
        }
        self.write("c08_rho1.csv", &csv)?;
        Ok(Criterion {
            id: 8,
            name: "rho1 sandwich and solver agreement".into(),
            pass,
            measured: format!("5 instances, max fixed-point vs gradient gap {}", fmt(worst_gap)),
            tolerance: format!("sandwich exact, gap <= {}", fmt(SOLVER_AGREEMENT)),
            detail: format!("{} starts", self.sizes.rho1_starts),
            seconds: 0.0,
        })
    }

    fn duality(&mut self) -> Result<Criterion> {
        let crit_law = JumpLaw::new(params(1, 0.5, 2.0)?, 64)?;
        let opts = SolverOptions {
            seed: self.seed_for("duality/critical"),
            ..SolverOptions::default()
        };
        let crit = check_duality(&crit_law, 2.0, &self.sizes.crit_boxes, DUALITY_DELTA, &opts)?;
        let sup_law = JumpLaw::new(params(2, 1.0, 3.0)?, 64)?;
        let opts = SolverOptions {
            starts: self.sizes.super_starts,
            seed: self.seed_for("duality/supercritical"),
            ..SolverOptions::default()
        };
        let sup = check_duality(&sup_law, 3.0, &self.sizes.super_boxes, DUALITY_DELTA, &opts)?;
        let mut csv = Csv::new(&[
            "case", "L", "rho", "kappa", "product", "rho_residual", "kappa_residual", "constructive_bound",
        ]);
        for (name, rep) in [("critical", &crit), ("supercritical", &sup)] {
            for r in &rep.rows {
                csv.push(vec![
                    name.into(),
                    r.side.into(),
                    r.rho.into(),
                    r.kappa.into(),
                    r.product.into(),
                    r.rho_residual.into(),
                    r.kappa_residual.into(),
                    r.constructive_bound.into(),
                ]);
            }
        }
        self.write("c09_duality.csv", &csv)?;
        let last = |r: &DualityReport| r.rows.last().map(|x| x.product).unwrap_or(f64::NAN);
        let c = Criterion {
            id: 9,
            name: "kappa * rho duality on boxes".into(),
            pass: crit.pass && sup.pass,
            measured: format!(
                "critical L={}: {:.5}, supercritical L={}: {:.5}",
                self.sizes.crit_boxes.last().unwrap(),
                last(&crit),
                self.sizes.super_boxes.last().unwrap(),
                last(&sup)
            ),
            tolerance: format!("|product - 1| <= {DUALITY_DELTA}, monotone over last three L"),
            detail: format!(
                "trend critical {}, supercritical {}",
                crit.monotone_trend, sup.monotone_trend
            ),
            seconds: 0.0,
        };
        self.crit_duality = Some(crit);
        self.super_duality = Some(sup);
        Ok(c)
    }

    fn box_bounds(&mut self) -> Result<Criterion> {
        let crit = self.crit_duality.as_ref().ok_or_else(|| Error::numerical("verify", "duality not run"))?;
        let sup = self.super_duality.as_ref().ok_or_else(|| Error::numerical("verify", "duality not run"))?;
        let crit_law = JumpLaw::new(params(1, 0.5, 2.0)?, 64)?;
        let sup_law = JumpLaw::new(params(2, 1.0, 3.0)?, 64)?;
        let g00_crit = green_free(&crit_law, Site::ORIGIN)?.quadrature;
        let g00_sup = green_free(&sup_law, Site::ORIGIN)?.quadrature;
        let norm_sup = free_green_q_norm(&sup_law, 3.0, 24)?;
        let mut csv = Csv::new(&["case", "L", "kappa", "rho", "G00", "G_q_norm"]);
        let mut pass = true;
        let mut max_kappa: f64 = 0.0;
        let mut min_margin = f64::INFINITY;
        for r in &crit.rows {
            pass &= r.kappa <= 1.0 && r.rho >= g00_crit;
            max_kappa = max_kappa.max(r.kappa);
            csv.push(vec!["d1_a0.5_q2".into(), r.side.into(), r.kappa.into(), r.rho.into(), g00_crit.into(), f64::NAN.into()]);
        }
        for r in &sup.rows {
            pass &= r.kappa <= 1.0 && r.rho >= g00_sup && r.rho <= norm_sup + NORM_SLACK;
            max_kappa = max_kappa.max(r.kappa);
            min_margin = min_margin.min(norm_sup + NORM_SLACK - r.rho);
            csv.push(vec!["d2_a1_q3".into(), r.side.into(), r.kappa.into(), r.rho.into(), g00_sup.into(), norm_sup.into()]);
        }
        let law3 = JumpLaw::new(params(1, 0.5, 3.0)?, 64)?;
        let g00_3 = green_free(&law3, Site::ORIGIN)?.quadrature;
        let norm3 = free_green_q_norm(&law3, 3.0, 128)?;
        let opts = SolverOptions {
            starts: 8,
            cross_check: false,
            seed: self.seed_for("bounds"),
            ..SolverOptions::default()
        };
        for &l in &self.sizes.norm_boxes {
            let r = solve_rho(&law3, 3.0, l, &opts)?;
            pass &= r.value >= g00_3 && r.value <= norm3 + NORM_SLACK;
            min_margin = min_margin.min(norm3 + NORM_SLACK - r.value);
            csv.push(vec!["d1_a0.5_q3".into(), l.into(), f64::NAN.into(), r.value.into(), g00_3.into(), norm3.into()]);
        }
        self.write("c10_box_bounds.csv", &csv)?;
        Ok(Criterion {
            id: 10,
            name: "box bounds on kappa and rho".into(),
            pass,
            measured: format!(
                "max kappa {:.5}; min margin to ||G||_q + slack {}",
                max_kappa,
                fmt(min_margin)
            ),
            tolerance: format!("kappa <= 1, rho >= G(0,0), rho <= ||G||_q + {NORM_SLACK}"),
            detail: format!("||G||_3: d=2 a=1 {norm_sup:.6}, d=1 a=0.5 {norm3:.6}"),
            seconds: 0.0,
        })
    }

    fn m_scaling(&mut self) -> Result<Criterion> {
        let law = JumpLaw::new(params(1, 0.5, 2.0)?, 64)?;
        let opts = SolverOptions {
            starts: 6,
            seed: self.seed_for("m_scaling"),
            ..SolverOptions::default()
        };
        let l = self.sizes.scaling_box;
        let rep = check_m_scaling(&law, 2.0, l, &[0.25, 0.5, 1.0], 60, SCALING_TOL, &opts)?;
        let mut csv = Csv::new(&["y", "inf_value", "argmin_M", "target", "relative_error"]);
        for r in &rep.rows {
            csv.push(vec![
                r.y.into(),
                r.inf_value.into(),
                r.argmin_m.into(),
                r.target.into(),
                r.relative_error.into(),
            ]);
        }
        self.write("c11_m_scaling.csv", &csv)?;
        let worst = rep.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
        Ok(Criterion {
            id: 11,
            name: "M-scaling identity".into(),
            pass: rep.pass,
            measured: format!("max relative error {worst:.5} at L={l}"),
            tolerance: format!("{SCALING_TOL}"),
            detail: format!("kappa(2;{l}) = {:.7}", rep.kappa),
            seconds: 0.0,
        })
    }

    fn consistency(&mut self) -> Result<Criterion> {
        let law = JumpLaw::new(params(1, 0.5, 2.0)?, 100_000)?;
        let sch = DeviationSchedule::new(200.0, 27.5, 2.0, 1.0, WindowGuards::default())?;
        let n = self.sizes.ldp_n;
        let naive = estimate_naive(WalkModel::Free(&law), &sch, n, self.seed_for("ldp/naive"))?;
        let tilted = estimate_tilted(WalkModel::Free(&law), &sch, 1.0, n, self.seed_for("ldp/tilted"))?;
        let combined = (naive.se.powi(2) + tilted.se.powi(2)).sqrt();
        let z = if combined > 0.0 {
            (naive.p_hat - tilted.p_hat) / combined
        } else {
            f64::INFINITY
        };
        let mut csv = Csv::new(&["method", "T", "b", "n", "p_hat", "se", "ess"]);
        for e in [&naive, &tilted] {
            let m = if e.ess.is_some() { "tilted" } else { "naive" };
            csv.push(vec![
                m.into(),
                e.t.into(),
                e.b.into(),
                e.n.into(),
                e.p_hat.into(),
                e.se.into(),
                e.ess.map(Cell::F).unwrap_or(Cell::S(String::new())),
            ]);
        }
        self.write("c12_estimators.csv", &csv)?;
        let in_range = naive.p_hat >= OVERLAP_RANGE.0 && naive.p_hat <= OVERLAP_RANGE.1;
        Ok(Criterion {
            id: 12,
            name: "naive vs tilted tail estimate".into(),
            pass: z.abs() <= CONSISTENCY_SIGMAS && in_range,
            measured: format!(
                "naive {} +- {}, tilted {} +- {}, z = {z:.3}",
                fmt(naive.p_hat),
                fmt(naive.se),
                fmt(tilted.p_hat),
                fmt(tilted.se)
            ),
            tolerance: format!(
                "|z| <= {CONSISTENCY_SIGMAS}, naive p in [{}, {}]",
                OVERLAP_RANGE.0, OVERLAP_RANGE.1
            ),
            detail: format!("T=200, b=27.5, N={n}"),
            seconds: 0.0,
        })
    }

    fn rate_curve(&mut self) -> Result<Criterion> {
        let crit = self.crit_duality.as_ref().ok_or_else(|| Error::numerical("verify", "duality not run"))?;
        let top = crit.rows.last().ok_or_else(|| Error::numerical("verify", "empty duality table"))?;
        let (kappa, rho) = (top.kappa, top.rho);
        let law = JumpLaw::new(params(1, 0.5, 2.0)?, 100_000)?;
        let grid = vec![
            (100.0, vec![17.0, 18.0, 19.0, 20.0, 21.0]),
            (200.0, vec![24.0, 25.0, 26.0, 27.0, 28.0]),
            (400.0, vec![33.0, 34.0, 35.0, 36.0, 37.0]),
        ];
        let rep = rate_curve(
            WalkModel::Free(&law),
            &grid,
            kappa,
            rho,
            RATE_SLACK,
            self.sizes.curve_n,
            self.seed_for("rate_curve"),
            WindowGuards::default(),
        )?;
        self.write("c13_rate_curve.csv", &rep.to_csv())?;
        let rates: Vec<f64> = rep.points.iter().filter_map(|p| p.log_rate).collect();
        let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Criterion {
            id: 13,
            name: "empirical rate curve".into(),
            pass: rep.pass,
            measured: format!(
                "log rates in [{lo:.4}, {hi:.4}] over {} points; -kappa = {:.5}",
                rates.len(),
                -kappa
            ),
            tolerance: format!("in [-{:.5}, 0), nonincreasing within 3 sigma", kappa * (1.0 + RATE_SLACK)),
            detail: format!(
                "negative {}, band {}, monotone {}, trend toward line {}",
                rep.negative, rep.within_band, rep.monotone, rep.trend_toward_line
            ),
            seconds: 0.0,
        })
    }

    fn regimes(&mut self) -> Result<Criterion> {
        let (t, b) = (1e4, 1e2);
        let expected: [(usize, f64, f64, Regime, f64, Option<f64>); 3] = [
            (1, 0.5, 2.0, Regime::Critical, 0.0, None),
            (2, 0.5, 2.0, Regime::Supercritical, 0.5, Some(1.0)),
            (3, 2.0, 2.0, Regime::Subcritical, -0.5, Some(100f64.powf(2.0 / 3.0))),
        ];
        let mut csv = Csv::new(&["d", "alpha", "q", "exponent", "regime", "R_star"]);
        let mut pass = true;
        for (d, a, q, regime, exponent, r_star) in expected {
            let rep = classify_regime(&params(d, a, q)?, t, b)?;
            let r_ok = match (rep.r_star, r_star) {
                (None, None) => true,
                (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * y,
                _ => false,
            };
            pass &= rep.regime == regime && (rep.exponent - exponent).abs() <= 1e-12 && r_ok;
            csv.push(vec![
                d.into(),
                a.into(),
                q.into(),
                rep.exponent.into(),
                rep.regime.as_str().into(),
                rep.r_star.map(Cell::F).unwrap_or(Cell::S("any".into())),
            ]);
        }
        self.write("c14_regimes.csv", &csv)?;
        Ok(Criterion {
            id: 14,
            name: "regime classifier".into(),
            pass,
            measured: "critical / supercritical R*=1 / subcritical R*=(T/b)^(q/(d(q-1)))".into(),
            tolerance: "exact".into(),
            detail: format!("T={t}, b={b}"),
            seconds: 0.0,
        })
    }
}

type Step = fn(&mut Suite) -> Result<Vec<Criterion>>;

fn steps() -> Vec<Step> {
    vec![
        |s| s.clock().map(|c| vec![c]),
        |s| s.green_instances().map(|(a, b)| vec![a, b]),
        |s| s.green_comparison().map(|(a, b)| vec![a, b]),
        |s| s.heat_bounds().map(|c| vec![c]),
        |s| s.isomorphism().map(|c| vec![c]),
        |s| s.rho1_sandwich().map(|c| vec![c]),
        |s| s.duality().map(|c| vec![c]),
        |s| s.box_bounds().map(|c| vec![c]),
        |s| s.m_scaling().map(|c| vec![c]),
        |s| s.consistency().map(|c| vec![c]),
        |s| s.rate_curve().map(|c| vec![c]),
        |s| s.regimes().map(|c| vec![c]),
    ]
}

/// Criteria 1 to 14, tables written under `dir/tables`. A criterion whose
/// computation errors is recorded as failed with the error text.
fn run_once(seed: u64, scale: VerifyScale, dir: &Path, log: &mut dyn FnMut(&Criterion)) -> Result<Vec<Criterion>> {
    let tables = dir.join("tables");
    fs::create_dir_all(&tables)?;
    let mut suite = Suite {
        seed,
        sizes: Sizes::of(scale),
        tables,
        crit_duality: None,
        super_duality: None,
    };
    let mut out = Vec::new();
    let mut next_id = 1;
    for step in steps() {
        let t0 = Instant::now();
        match step(&mut suite) {
            Ok(cs) => {
                let secs = t0.elapsed().as_secs_f64();
                let k = cs.len() as f64;
                for mut c in cs {
                    c.seconds = secs / k;
                    next_id = c.id + 1;
                    log(&c);
                    out.push(c);
                }
            }
            Err(e) => {
                let c = Criterion {
                    id: next_id,
                    name: "computation error".into(),
                    pass: false,
                    measured: e.to_string(),
                    tolerance: String::new(),
                    detail: String::new(),
                    seconds: t0.elapsed().as_secs_f64(),
                };
                next_id += 1;
                log(&c);
                out.push(c);
            }
        }
    }
    Ok(out)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Byte comparison of every CSV in two table directories; returns the
/// number of files compared and the names that differ.
pub fn compare_tables(a: &Path, b: &Path) -> Result<(usize, Vec<String>)> {
    let fa = csv_files(a)?;
    let fb = csv_files(b)?;
    let mut differ = Vec::new();
    let names = |v: &[PathBuf]| -> Vec<String> {
        v.iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    };
    let (na, nb) = (names(&fa), names(&fb));
    for n in &na {
        if !nb.contains(n) || fs::read(a.join(n))? != fs::read(b.join(n))? {
            differ.push(n.clone());
        }
    }
    for n in nb.iter().filter(|n| !na.contains(n)) {
        differ.push(n.clone());
    }
    Ok((na.len(), differ))
}

/// Run the suite into `dir`. With `determinism`, the suite runs a second
/// time into `dir/rerun` on a worker pool of a different size and the CSV
/// tables are compared byte for byte (criterion 15).
pub fn run_suite(
    seed: u64,
    scale: VerifyScale,
    dir: &Path,
    determinism: bool,
    log: &mut dyn FnMut(&Criterion),
) -> Result<SuiteReport> {
    let mut criteria = run_once(seed, scale, dir, log)?;
    let t0 = Instant::now();
    let c15 = if determinism {
        let rerun = dir.join("rerun");
        let current = rayon::current_num_threads();
        let other = if current == 1 { 2 } else { current / 2 };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(other)
            .build()
            .map_err(|e| Error::numerical("verify", e.to_string()))?;
        let mut quiet = |_: &Criterion| {};
        let second = pool.install(|| run_once(seed, scale, &rerun, &mut quiet))?;
        let (n, differ) = compare_tables(&dir.join("tables"), &rerun.join("tables"))?;
        let same_verdicts = criteria.iter().zip(&second).all(|(a, b)| a.pass == b.pass && a.measured == b.measured);
        Criterion {
            id: 15,
            name: "determinism across reruns".into(),
            pass: differ.is_empty() && n > 0 && same_verdicts,
            measured: format!("{n} CSV tables compared, {} differ", differ.len()),
            tolerance: "byte-identical".into(),
            detail: format!("workers {current} vs {other}{}", if differ.is_empty() { String::new() } else { format!("; differing: {}", differ.join(" ")) }),
            seconds: t0.elapsed().as_secs_f64(),
        }
    } else {
        Criterion {
            id: 15,
            name: "determinism across reruns".into(),
            pass: false,
            measured: "not run".into(),
            tolerance: "byte-identical".into(),
            detail: "disabled in config".into(),
            seconds: 0.0,
        }
    };
    log(&c15);
    criteria.push(c15);
    let report = SuiteReport {
        seed,
        scale,
        pass: criteria.iter().all(|c| c.pass),
        criteria,
    };
    report.table().write(&dir.join("criteria.csv"))?;
    Ok(report)
}
