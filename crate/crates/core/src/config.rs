//! Experiment configuration: one TOML document naming a command, a seed, an
//! output directory and per-command parameter sections.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp::WindowGuards;
use crate::lattice::MAX_DIM;
use crate::variational::SolverOptions;
use crate::walk::StopRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Model,
    Simulate,
    Green,
    Eisenbaum,
    Variational,
    Ldp,
    Regimes,
    VerifyAll,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Model => "model",
            Command::Simulate => "simulate",
            Command::Green => "green",
            Command::Eisenbaum => "eisenbaum",
            Command::Variational => "variational",
            Command::Ldp => "ldp",
            Command::Regimes => "regimes",
            Command::VerifyAll => "verify-all",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub params: Params,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub model: ModelSection,
    pub simulate: SimulateSection,
    pub green: GreenSection,
    pub eisenbaum: EisenbaumSection,
    pub variational: VariationalSection,
    pub ldp: LdpSection,
    pub regimes: RegimesSection,
    pub verify: VerifySection,
}

/// Jump law parameters shared by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
    /// Enumeration radius `K` of the free law.
    pub cutoff: usize,
    /// Torus side; absent means free space.
    pub side: Option<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            d: 1,
            alpha: 0.5,
            q: 2.0,
            cutoff: 100_000,
            side: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub stop: StopRule,
    pub replicas: usize,
    /// Paths written out in full (jump lists).
    pub keep_paths: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            stop: StopRule::Fixed { t: 100.0 },
            replicas: 1000,
            keep_paths: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreenSection {
    pub side: usize,
    pub lambda: f64,
    /// Free Green values are tabulated for `|x|∞ <= free_reach`.
    pub free_reach: i64,
    pub heat_times: Vec<f64>,
}

impl Default for GreenSection {
    fn default() -> Self {
        GreenSection {
            side: 16,
            lambda: 0.5,
            free_reach: 8,
            heat_times: vec![1.0, 4.0, 16.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EisenbaumSection {
    pub side: usize,
    pub lambda: f64,
    pub shifts: Vec<f64>,
    pub replicas: usize,
    pub z_max: f64,
}

impl Default for EisenbaumSection {
    fn default() -> Self {
        EisenbaumSection {
            side: 8,
            lambda: 0.5,
            shifts: vec![1.0, 0.25],
            replicas: 100_000,
            z_max: 4.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Rho1,
    Rho,
    Kappa,
    Duality,
    MScaling,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VariationalSection {
    pub problem: Problem,
    /// Torus side and killing rate for `rho1`.
    pub side: usize,
    pub lambda: f64,
    /// Box sizes `L` for `rho`, `kappa` and `duality`; the first is used by
    /// `m_scaling`.
    pub box_sizes: Vec<usize>,
    pub duality_tolerance: f64,
    pub y_grid: Vec<f64>,
    pub u_points: usize,
    pub scaling_tolerance: f64,
    pub solver: SolverOptions,
}

impl Default for VariationalSection {
    fn default() -> Self {
        VariationalSection {
            problem: Problem::Duality,
            side: 8,
            lambda: 0.5,
            box_sizes: vec![8, 16, 32, 48],
            duality_tolerance: 0.05,
            y_grid: vec![0.25, 0.5, 1.0],
            u_points: 60,
            scaling_tolerance: 0.05,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdpMethod {
    Naive,
    Tilted,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRow {
    #[serde(rename = "T")]
    pub t: f64,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpSection {
    #[serde(rename = "T")]
    pub t: f64,
    pub thresholds: Vec<f64>,
    pub method: LdpMethod,
    pub ball_radius: f64,
    pub replicas: usize,
    pub a: f64,
    pub guards: WindowGuards,
    /// Rate-curve grid; empty skips the curve.
    pub curve: Vec<CurveRow>,
    /// Box size used for the κ/ρ overlay lines.
    pub overlay_box: usize,
    pub slack: f64,
}

impl Default for LdpSection {
    fn default() -> Self {
        LdpSection {
            t: 200.0,
            thresholds: vec![27.5],
            method: LdpMethod::Both,
            ball_radius: 1.0,
            replicas: 100_000,
            a: 1.0,
            guards: WindowGuards::default(),
            curve: Vec::new(),
            overlay_box: 48,
            slack: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Triple {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesSection {
    pub triples: Vec<Triple>,
    #[serde(rename = "T")]
    pub t: f64,
    pub b: f64,
}

impl Default for RegimesSection {
    fn default() -> Self {
        RegimesSection {
            triples: vec![
                Triple { d: 1, alpha: 0.5, q: 2.0 },
                Triple { d: 2, alpha: 0.5, q: 2.0 },
                Triple { d: 3, alpha: 2.0, q: 2.0 },
            ],
            t: 1e4,
            b: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyScale {
    /// Acceptance sizes.
    Full,
    /// Reduced replica counts and grids; exercises the plumbing only.
    Smoke,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub scale: VerifyScale,
    /// Rerun the suite and compare CSV bytes.
    pub determinism: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            scale: VerifyScale::Full,
            determinism: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Every violated bound, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        let p = &self.params;
        let m = &p.model;
        if m.d == 0 || m.d > MAX_DIM {
            v.push(format!("params.model.d = {}: need 1 <= d <= {MAX_DIM}", m.d));
        }
        if !(m.alpha > 0.0 && m.alpha <= 2.0) {
            v.push(format!("params.model.alpha = {}: need 0 < alpha <= 2", m.alpha));
        }
        if !(m.q > 1.0) || !m.q.is_finite() {
            v.push(format!("params.model.q = {}: need q > 1", m.q));
        }
        if m.cutoff < 2 {
            v.push(format!("params.model.cutoff = {}: need K >= 2", m.cutoff));
        }
        if m.side == Some(0) {
            v.push("params.model.side = 0: need R >= 1".into());
        }
        let s = &p.simulate;
        if let Err(e) = s.stop.validate() {
            v.push(format!("params.simulate.stop: {e}"));
        }
        if s.replicas == 0 {
            v.push("params.simulate.replicas = 0: need >= 1".into());
        }
        let g = &p.green;
        if g.side == 0 {
            v.push("params.green.side = 0: need R >= 1".into());
        }
        if !(g.lambda > 0.0) {
            v.push(format!("params.green.lambda = {}: need lambda > 0", g.lambda));
        }
        if g.free_reach < 0 {
            v.push("params.green.free_reach: need >= 0".into());
        }
        if g.heat_times.iter().any(|t| !(*t >= 0.0)) {
            v.push("params.green.heat_times: times must be >= 0".into());
        }
        let e = &p.eisenbaum;
        if e.side == 0 {
            v.push("params.eisenbaum.side = 0: need R >= 1".into());
        }
        if !(e.lambda > 0.0) {
            v.push(format!("params.eisenbaum.lambda = {}: need lambda > 0", e.lambda));
        }
        if e.shifts.is_empty() || e.shifts.iter().any(|s| *s == 0.0 || !s.is_finite()) {
            v.push("params.eisenbaum.shifts: need at least one finite nonzero shift".into());
        }
        if e.replicas < 2 {
            v.push("params.eisenbaum.replicas: need >= 2".into());
        }
        if !(e.z_max > 0.0) {
            v.push("params.eisenbaum.z_max: need > 0".into());
        }
        let va = &p.variational;
        if va.side == 0 {
            v.push("params.variational.side = 0: need R >= 1".into());
        }
        if !(va.lambda > 0.0) {
            v.push(format!("params.variational.lambda = {}: need lambda > 0", va.lambda));
        }
        if va.box_sizes.is_empty() || va.box_sizes.contains(&0) {
            v.push("params.variational.box_sizes: need nonempty list of L >= 1".into());
        }
        if va.y_grid.iter().any(|y| !(*y > 0.0)) {
            v.push("params.variational.y_grid: levels must be > 0".into());
        }
        if va.u_points < 2 {
            v.push("params.variational.u_points: need >= 2".into());
        }
        if va.solver.starts == 0 {
            v.push("params.variational.solver.starts = 0: need >= 1".into());
        }
        if !(va.solver.damping > 0.0 && va.solver.damping <= 1.0) {
            v.push(format!(
                "params.variational.solver.damping = {}: need 0 < damping <= 1",
                va.solver.damping
            ));
        }
        if !(va.solver.tol > 0.0) {
            v.push("params.variational.solver.tol: need > 0".into());
        }
        let l = &p.ldp;
        if !(l.t > 0.0) {
            v.push(format!("params.ldp.T = {}: need T > 0", l.t));
        }
        if l.thresholds.iter().any(|b| !(*b >= 0.0)) {
            v.push("params.ldp.thresholds: b must be >= 0".into());
        }
        if l.replicas < 1000 {
            v.push(format!("params.ldp.replicas = {}: need >= 1000", l.replicas));
        }
        if !(l.ball_radius >= 1.0) {
            v.push(format!("params.ldp.ball_radius = {}: need >= 1", l.ball_radius));
        }
        if !(l.slack >= 0.0) {
            v.push("params.ldp.slack: need >= 0".into());
        }
        if l.overlay_box == 0 {
            v.push("params.ldp.overlay_box = 0: need L >= 1".into());
        }
        for (i, row) in l.curve.iter().enumerate() {
            if !(row.t > 0.0) || row.b.iter().any(|b| !(*b >= 0.0)) {
                v.push(format!("params.ldp.curve[{i}]: need T > 0 and b >= 0"));
            }
        }
        let r = &p.regimes;
        for (i, t) in r.triples.iter().enumerate() {
            if t.d == 0 || t.d > MAX_DIM || !(t.alpha > 0.0 && t.alpha <= 2.0) || !(t.q > 1.0) {
                v.push(format!(
                    "params.regimes.triples[{i}] = (d={}, alpha={}, q={}): need 1 <= d <= {MAX_DIM}, 0 < alpha <= 2, q > 1",
                    t.d, t.alpha, t.q
                ));
            }
        }
        if !(r.b > 0.0 && r.t > r.b) {
            v.push("params.regimes: need 0 < b < T".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml("command = \"model\"").unwrap();
        assert_eq!(c.command, Command::Model);
        assert_eq!(c.params.model.d, 1);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_violation_is_listed() {
        let text = "command = \"model\"\n[params.model]\nalpha = 3.0\nq = 0.5\n";
        let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("alpha = 3"), "{err}");
        assert!(err.contains("0 < alpha <= 2"), "{err}");
        assert!(err.contains("q = 0.5"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("command = \"model\"\nsed = 1").is_err());
        let t = "command = \"ldp\"\n[params.ldp]\nthreshold = [1.0]\n";
        assert!(ExperimentConfig::from_toml(t).is_err());
        assert!(ExperimentConfig::from_toml("command = \"plot\"").is_err());
    }
}
