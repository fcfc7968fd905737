//! Command dispatch: runs one configured experiment, writes its tables and a
//! manifest into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Command, ExperimentConfig, LdpMethod, Problem};
use crate::error::{Error, Result};
use crate::gaussian::{check_covariance, default_battery, eisenbaum_test};
use crate::green::{
    check_heat_kernel_bounds, green_free_table, green_torus, heat_kernel_torus, free_green_q_norm,
};
use crate::lattice::box_sites;
use crate::ldp::{
    classify_regime, estimate_tilted, naive_from_sample, rate_curve, sample_silt, tilt_plan,
    DeviationSchedule, WalkModel,
};
use crate::model::{JumpLaw, ModelParams, TorusLaw};
use crate::output::{write_json, Cell, Csv};
use crate::rng::child_seed;
use crate::stats::par_map;
use crate::variational::{
    check_duality, check_m_scaling, solve_kappa, solve_rho, solve_rho1, VariationalResult,
};
use crate::verify::run_suite;
use crate::walk::{replica_csv, silt, simulate_local_times, simulate_path, ReplicaRow, WalkSampler};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub wall_seconds: f64,
    pub success: bool,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub success: bool,
    pub manifest: Manifest,
    /// Human-readable summary printed by the CLI.
    pub summary: String,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(cfg.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        csv.write(&self.dir.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        write_json(&self.dir.join(name), v)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
# Plot every CSV in this directory: first numeric column against the rest.
import csv, pathlib, sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
for path in sorted(here.rglob("*.csv")):
    with path.open() as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        continue
    head, body = rows[0], rows[1:]
    cols = []
    for j, name in enumerate(head):
        try:
            cols.append((name, [float(r[j]) for r in body]))
        except ValueError:
            pass
    if len(cols) < 2:
        continue
    fig, ax = plt.subplots()
    x_name, x = cols[0]
    for name, y in cols[1:4]:
        ax.plot(x, y, marker="o", label=name)
    ax.set_xlabel(x_name)
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
"#;

fn model_params(cfg: &ExperimentConfig) -> Result<ModelParams> {
    let m = &cfg.params.model;
    ModelParams::new(m.d, m.alpha, m.q)
}

fn free_law(cfg: &ExperimentConfig) -> Result<JumpLaw> {
    JumpLaw::new(model_params(cfg)?, cfg.params.model.cutoff)
}

fn torus_law(cfg: &ExperimentConfig, side: usize) -> Result<TorusLaw> {
    TorusLaw::from_params(model_params(cfg)?, side, 0)
}

/// Run under a pool of `workers` threads (all cores when `None`).
pub fn run(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Config(vec!["workers = 0: need >= 1".into()]));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::numerical("runner", e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let t0 = Instant::now();
    fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Out {
        dir: cfg.output_dir.clone(),
        files: Vec::new(),
    };
    out.text("config.toml", &cfg.to_toml())?;
    let (success, summary) = match cfg.command {
        Command::Model => cmd_model(cfg, &mut out)?,
        Command::Simulate => cmd_simulate(cfg, &mut out)?,
        Command::Green => cmd_green(cfg, &mut out)?,
        Command::Eisenbaum => cmd_eisenbaum(cfg, &mut out)?,
        Command::Variational => cmd_variational(cfg, &mut out)?,
        Command::Ldp => cmd_ldp(cfg, &mut out)?,
        Command::Regimes => cmd_regimes(cfg, &mut out)?,
        Command::VerifyAll => cmd_verify(cfg, &mut out)?,
    };
    out.text("plot.py", PLOT_SCRIPT)?;
    let manifest = Manifest {
        command: cfg.command.as_str().to_string(),
        config_sha256: config_hash(cfg),
        version: VERSION.to_string(),
        seed: cfg.seed,
        workers: rayon::current_num_threads(),
        wall_seconds: t0.elapsed().as_secs_f64(),
        success,
        files: out.files.clone(),
    };
    write_json(&out.dir.join("manifest.json"), &manifest)?;
    Ok(RunOutcome {
        success,
        manifest,
        summary,
    })
}

fn cmd_model(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let law = free_law(cfg)?;
    let desc = law.describe();
    out.json("law.json", &desc)?;
    out.csv("symbol.csv", &law.symbol_csv(64))?;
    let mut summary = format!(
        "d={} alpha={} q={} ({}), K={}: c={:.12}, tail mass {:.3e}, total mass {:.15}",
        desc.d,
        desc.alpha,
        desc.q,
        desc.regime.as_str(),
        desc.cutoff,
        desc.c,
        desc.tail_mass,
        desc.total_mass
    );
    let mut ok = (desc.total_mass - 1.0).abs() <= 1e-12;
    if let Some(side) = cfg.params.model.side {
        let tl = torus_law(cfg, side)?;
        let td = tl.describe();
        ok &= (td.total_mass - 1.0).abs() <= 1e-12;
        summary.push_str(&format!("\ntorus R={side}: total mass {:.15}", td.total_mass));
        out.json("torus_law.json", &td)?;
        out.csv("torus_symbol.csv", &tl.symbol_csv())?;
    }
    Ok((ok, summary))
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let s = &cfg.params.simulate;
    let q = cfg.params.model.q;
    let sampler = match cfg.params.model.side {
        Some(side) => WalkSampler::torus(&torus_law(cfg, side)?)?,
        None => WalkSampler::free(&free_law(cfg)?)?,
    };
    let seed = cfg.seed;
    let rows: Vec<Result<ReplicaRow>> = par_map(s.replicas, |i| {
        let (field, n_jumps) = simulate_local_times(&sampler, s.stop, seed, i as u64)?;
        Ok(ReplicaRow {
            seed,
            replica: i as u64,
            horizon: field.horizon,
            n_jumps,
            n_sites: field.n_sites(),
            silt: silt(&field, q)?.value,
            mutual: None,
        })
    });
    let rows: Vec<ReplicaRow> = rows.into_iter().collect::<Result<_>>()?;
    out.csv("replicas.csv", &replica_csv(&rows))?;
    for i in 0..s.keep_paths.min(s.replicas) {
        let path = simulate_path(&sampler, s.stop, seed, i as u64)?;
        out.json(&format!("path_{i}.json"), &path)?;
    }
    let mean = rows.iter().map(|r| r.silt).sum::<f64>() / rows.len() as f64;
    Ok((
        true,
        format!("{} replicas, mean I_T = {mean:.6}", rows.len()),
    ))
}

fn cmd_green(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let g = &cfg.params.green;
    let tl = torus_law(cfg, g.side)?;
    let kernel = green_torus(&tl, g.lambda)?;
    out.csv("green_torus.csv", &kernel.to_csv())?;
    let mut summary = format!(
        "torus R={} lambda={}: G(0,0) = {:.12}, row sum {:.12} (1/lambda = {})",
        g.side,
        g.lambda,
        kernel.at_origin(),
        kernel.row_sum(),
        1.0 / g.lambda
    );
    let mut heat = Csv::new(&["t", "displacement", "value"]);
    for &t in &g.heat_times {
        let h = heat_kernel_torus(&tl, t)?;
        for (i, v) in h.values.iter().enumerate() {
            heat.push(vec![t.into(), tl.torus.site(i).render(tl.params.d).into(), (*v).into()]);
        }
    }
    out.csv("heat_torus.csv", &heat)?;
    let law = free_law(cfg)?;
    if law.params.transient() {
        let sites = box_sites(law.d(), g.free_reach as usize + 1);
        let vals = green_free_table(&law, &sites)?;
        let mut csv = Csv::new(&["site", "G"]);
        for (s, v) in sites.iter().zip(&vals) {
            csv.push(vec![s.render(law.d()).into(), (*v).into()]);
        }
        out.csv("green_free.csv", &csv)?;
        summary.push_str(&format!("\nfree G(0,0) = {:.12}", vals[0]));
        if law.params.q * (law.d() as f64 - law.params.alpha) > law.d() as f64 {
            let norm = free_green_q_norm(&law, law.params.q, 24)?;
            summary.push_str(&format!(", ||G||_q = {norm:.9}"));
        }
        let ts: Vec<f64> = (0..=6).map(|j| 2f64.powi(j)).collect();
        let bl = check_heat_kernel_bounds(&law, &ts, 32)?;
        out.json("heat_bounds.json", &bl)?;
    }
    Ok((true, summary))
}

fn cmd_eisenbaum(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let e = &cfg.params.eisenbaum;
    let tl = torus_law(cfg, e.side)?;
    let kernel = green_torus(&tl, e.lambda)?;
    let cov = check_covariance(&kernel, e.replicas, child_seed(cfg.seed, "covariance"), e.z_max)?;
    out.json("covariance.json", &cov)?;
    let battery = default_battery(tl.params.d, e.side, tl.params.q);
    let mut csv = Csv::new(&[
        "s", "functional", "left_mean", "se_left", "right_mean", "se_right", "z", "closed_form", "pass",
    ]);
    let mut ok = cov.pass;
    let mut summary = Vec::new();
    for &s in &e.shifts {
        let rep = eisenbaum_test(&tl, e.lambda, s, &battery, e.replicas, child_seed(cfg.seed, &format!("eisenbaum/{s}")), e.z_max)?;
        for r in &rep.results {
            csv.push(vec![
                s.into(),
                r.name.clone().into(),
                r.left_mean.into(),
                r.se_left.into(),
                r.right_mean.into(),
                r.se_right.into(),
                r.z.into(),
                r.closed_form.map(Cell::F).unwrap_or(Cell::S(String::new())),
                r.pass.into(),
            ]);
        }
        let worst = rep.results.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
        summary.push(format!("s={s}: max |z| = {worst:.3}, pass {}", rep.pass));
        ok &= rep.pass;
        out.json(&format!("eisenbaum_s{s}.json"), &rep)?;
    }
    out.csv("eisenbaum.csv", &csv)?;
    Ok((ok, summary.join("\n")))
}

fn result_summary(r: &VariationalResult) -> String {
    format!(
        "{} q={}: value {:.12}, residual {:.2e}, converged {}, cross-check gap {}",
        r.problem,
        r.q,
        r.value,
        r.residual,
        r.converged,
        r.cross_check_gap.map(|g| format!("{g:.2e}")).unwrap_or_else(|| "-".into())
    )
}

fn cmd_variational(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let v = &cfg.params.variational;
    let q = cfg.params.model.q;
    let opts = crate::variational::SolverOptions {
        seed: cfg.seed,
        ..v.solver.clone()
    };
    match v.problem {
        Problem::Rho1 => {
            let tl = torus_law(cfg, v.side)?;
            let kernel = green_torus(&tl, v.lambda)?;
            let r = solve_rho1(&kernel, q, &opts)?;
            out.json("rho1.json", &r)?;
            out.text("optimizer.csv", &r.optimizer.to_csv())?;
            out.csv("trace.csv", &r.trace_csv())?;
            Ok((r.converged, result_summary(&r)))
        }
        Problem::Rho | Problem::Kappa => {
            let law = free_law(cfg)?;
            let mut lines = Vec::new();
            let mut ok = true;
            let mut csv = Csv::new(&["L", "value", "residual", "converged"]);
            for &l in &v.box_sizes {
                let r = if v.problem == Problem::Rho {
                    solve_rho(&law, q, l, &opts)?
                } else {
                    solve_kappa(&law, q, l, &opts)?
                };
                ok &= r.converged;
                csv.push(vec![l.into(), r.value.into(), r.residual.into(), r.converged.into()]);
                lines.push(format!("L={l}: {}", result_summary(&r)));
                out.text(&format!("optimizer_L{l}.csv"), &r.optimizer.to_csv())?;
            }
            out.csv(if v.problem == Problem::Rho { "rho.csv" } else { "kappa.csv" }, &csv)?;
            Ok((ok, lines.join("\n")))
        }
        Problem::Duality => {
            let law = free_law(cfg)?;
            let rep = check_duality(&law, q, &v.box_sizes, v.duality_tolerance, &opts)?;
            let mut csv = Csv::new(&["L", "rho", "kappa", "product", "constructive_bound"]);
            for r in &rep.rows {
                csv.push(vec![r.side.into(), r.rho.into(), r.kappa.into(), r.product.into(), r.constructive_bound.into()]);
            }
            out.csv("duality.csv", &csv)?;
            out.json("duality.json", &rep)?;
            let last = rep.rows.last().map(|r| r.product).unwrap_or(f64::NAN);
            Ok((rep.pass, format!("kappa*rho at largest L = {last:.6}, pass {}", rep.pass)))
        }
        Problem::MScaling => {
            let law = free_law(cfg)?;
            let l = v.box_sizes[0];
            let rep = check_m_scaling(&law, q, l, &v.y_grid, v.u_points, v.scaling_tolerance, &opts)?;
            let mut csv = Csv::new(&["u", "kappa1", "achieved"]);
            for c in &rep.curve {
                csv.push(vec![c.u.into(), c.kappa1.into(), c.achieved.into()]);
            }
            out.csv("kappa1_curve.csv", &csv)?;
            out.json("m_scaling.json", &rep)?;
            let worst = rep.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max);
            Ok((rep.pass, format!("max relative error {worst:.5}, pass {}", rep.pass)))
        }
    }
}

fn cmd_ldp(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let l = &cfg.params.ldp;
    let q = cfg.params.model.q;
    let free;
    let torus;
    let walk = match cfg.params.model.side {
        Some(side) => {
            torus = torus_law(cfg, side)?;
            WalkModel::Torus(&torus)
        }
        None => {
            free = free_law(cfg)?;
            WalkModel::Free(&free)
        }
    };
    let mut estimates = Vec::new();
    let sample = if l.method != LdpMethod::Tilted {
        Some(sample_silt(walk, l.t, q, l.replicas, child_seed(cfg.seed, "ldp/naive"))?)
    } else {
        None
    };
    for &b in &l.thresholds {
        let sch = DeviationSchedule::new(l.t, b, q, l.a, l.guards)?;
        if let Some(s) = &sample {
            estimates.push(naive_from_sample(s, &sch));
        }
        if l.method != LdpMethod::Naive {
            estimates.push(estimate_tilted(walk, &sch, l.ball_radius, l.replicas, child_seed(cfg.seed, &format!("ldp/tilted/{b}")))?);
            if b == l.thresholds[0] {
                out.json("tilt_plan.json", &tilt_plan(walk, &sch, l.ball_radius)?)?;
            }
        }
    }
    let mut csv = Csv::new(&["T", "b_T", "p_hat", "se", "log_rate", "method", "ess", "in_window"]);
    let mut lines = Vec::new();
    for e in &estimates {
        let m = if e.ess.is_some() { "tilted" } else { "naive" };
        csv.push(vec![
            e.t.into(),
            e.b.into(),
            e.p_hat.into(),
            e.se.into(),
            e.log_rate.map(Cell::F).unwrap_or(Cell::S(String::new())),
            m.into(),
            e.ess.map(Cell::F).unwrap_or(Cell::S(String::new())),
            e.in_window.into(),
        ]);
        lines.push(format!("{m} b={}: p = {:.4e} +- {:.2e}", e.b, e.p_hat, e.se));
    }
    out.csv("estimates.csv", &csv)?;
    out.json("estimates.json", &estimates)?;
    let mut ok = estimates.iter().all(|e| e.pathwise_violations == 0);
    if !l.curve.is_empty() {
        let law = free_law(cfg)?;
        let opts = crate::variational::SolverOptions {
            starts: 8,
            cross_check: false,
            seed: cfg.seed,
            ..Default::default()
        };
        let kappa = solve_kappa(&law, q, l.overlay_box, &opts)?.value;
        let rho = solve_rho(&law, q, l.overlay_box, &opts)?.value;
        let grid: Vec<(f64, Vec<f64>)> = l.curve.iter().map(|r| (r.t, r.b.clone())).collect();
        let rep = rate_curve(walk, &grid, kappa, rho, l.slack, l.replicas, child_seed(cfg.seed, "ldp/curve"), l.guards)?;
        out.csv("rate_curve.csv", &rep.to_csv())?;
        out.json("rate_curve.json", &rep)?;
        lines.push(format!(
            "rate curve against -kappa = {:.6}, -1/rho = {:.6}: pass {}",
            -kappa,
            -1.0 / rho,
            rep.pass
        ));
        ok &= rep.pass;
    }
    Ok((ok, lines.join("\n")))
}

fn cmd_regimes(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let r = &cfg.params.regimes;
    let mut csv = Csv::new(&["d", "alpha", "q", "exponent", "regime", "R_star"]);
    let mut lines = Vec::new();
    let mut reports = Vec::new();
    for t in &r.triples {
        let rep = classify_regime(&ModelParams::new(t.d, t.alpha, t.q)?, r.t, r.b)?;
        csv.push(vec![
            t.d.into(),
            t.alpha.into(),
            t.q.into(),
            rep.exponent.into(),
            rep.regime.as_str().into(),
            rep.r_star.map(Cell::F).unwrap_or(Cell::S("any".into())),
        ]);
        lines.push(format!(
            "d={} alpha={} q={}: exponent {:+.4}, {}",
            t.d,
            t.alpha,
            t.q,
            rep.exponent,
            rep.regime.as_str()
        ));
        reports.push(rep);
    }
    out.csv("regimes.csv", &csv)?;
    out.json("regimes.json", &reports)?;
    Ok((reports.iter().all(|r| r.consistent), lines.join("\n")))
}

fn cmd_verify(cfg: &ExperimentConfig, out: &mut Out) -> Result<(bool, String)> {
    let v = &cfg.params.verify;
    let mut log = |c: &crate::verify::Criterion| eprintln!("{}", c.line());
    let rep = run_suite(cfg.seed, v.scale, &out.dir, v.determinism, &mut log)?;
    out.files.push("criteria.csv".into());
    for name in fs::read_dir(out.dir.join("tables"))?.filter_map(|e| e.ok()) {
        out.files.push(format!("tables/{}", name.file_name().to_string_lossy()));
    }
    out.files.sort();
    out.json("verify.json", &rep)?;
    Ok((rep.pass, rep.render()))
}

/// Resolve `--out` and `--seed` overrides onto a loaded config.
pub fn apply_overrides(cfg: &mut ExperimentConfig, seed: Option<u64>, out: Option<&Path>) {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_path_buf();
    }
}
