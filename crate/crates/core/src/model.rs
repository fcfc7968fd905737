//! The symmetric power-law jump law `μ(z) = c |z|^{-(d+α)}` on `Z^d`, its
//! projection onto the torus `T_R`, the Fourier symbols and the Dirichlet
//! form of the generator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ball_sites, LatticeFunction, Site, SpaceTag, Torus, MAX_DIM};
use crate::lattice_sums::{epstein_zeta, shifted_zeta, SymbolEvaluator};
use crate::output::{Cell, Csv};
use crate::special::gamma;

/// Tolerance used when the critical identity `q(d-α) = d` is tested in floats.
pub const REGIME_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    /// Classify from the sign of `q(d - α) - d`.
    pub fn classify(d: usize, alpha: f64, q: f64) -> Regime {
        let gap = q * (d as f64 - alpha) - d as f64;
        let scale = (q * d as f64).max(1.0);
        if gap.abs() <= REGIME_TOL * scale {
            Regime::Critical
        } else if gap > 0.0 {
            Regime::Supercritical
        } else {
            Regime::Subcritical
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
    pub regime: Regime,
}

impl ModelParams {
    pub fn new(d: usize, alpha: f64, q: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if d == 0 || d > MAX_DIM {
            problems.push(format!("d must lie in 1..={MAX_DIM}, got {d}"));
        }
        if !(alpha > 0.0 && alpha <= 2.0) {
            problems.push(format!("alpha must lie in (0, 2], got {alpha}"));
        }
        if !(q > 1.0) || !q.is_finite() {
            problems.push(format!("q must be a finite real > 1, got {q}"));
        }
        match problems.len() {
            0 => Ok(ModelParams {
                d,
                alpha,
                q,
                regime: Regime::classify(d, alpha, q),
            }),
            1 => Err(Error::param("ModelParams", problems.remove(0))),
            _ => Err(Error::Config(problems)),
        }
    }

    /// Half the decay exponent, `s = (d + α) / 2`.
    pub fn s(&self) -> f64 {
        (self.d as f64 + self.alpha) / 2.0
    }

    pub fn transient(&self) -> bool {
        self.alpha < self.d as f64
    }
}

/// Exact normalizer `c = 1 / Σ_{z≠0} |z|^{-(d+α)}`.
pub fn normalizer(d: usize, alpha: f64) -> f64 {
    1.0 / epstein_zeta(d, (d as f64 + alpha) / 2.0)
}

/// Rigorous upper bound on `Σ_{|z|>K} |z|^{-(d+α)}` by comparison with
/// `∫_{|x|>K-h} (|x|-h)^{-(d+α)} dx`, `h = √d / 2` the cube half-diagonal.
pub fn tail_sum_bound(d: usize, alpha: f64, k: usize) -> f64 {
    let h = (d as f64).sqrt() / 2.0;
    let u0 = k as f64 - 2.0 * h;
    if u0 <= 0.0 {
        return f64::INFINITY;
    }
    let df = d as f64;
    let surface = 2.0 * PI.powf(df / 2.0) / gamma(df / 2.0);
    let mut total = 0.0;
    let mut binom = 1.0;
    for j in 0..d {
        if j > 0 {
            binom *= (d - j) as f64 / j as f64;
        }
        let e = df + alpha - 1.0 - j as f64;
        total += binom * h.powi((d - 1 - j) as i32) * u0.powf(-e) / e;
    }
    surface * total
}

/// Serializable law summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawDescription {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
    pub regime: Regime,
    #[serde(rename = "K")]
    pub cutoff: usize,
    #[serde(rename = "R", skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    pub c: f64,
    pub tail_mass: f64,
    pub tail_bound: f64,
    /// Σ of stored weights plus `tail_mass`.
    pub total_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub redistributed_remainder: Option<f64>,
}

/// The free-space jump law truncated for enumeration at radius `K`.
#[derive(Clone, Debug)]
pub struct JumpLaw {
    pub params: ModelParams,
    pub cutoff: usize,
    pub c: f64,
    /// Exact mass `Σ_{|z|>K} μ(z)`.
    pub tail_mass: f64,
    /// Analytic upper bound on `tail_mass`.
    pub tail_bound: f64,
    pub sites: Vec<Site>,
    pub weights: Vec<f64>,
    symbol: SymbolEvaluator,
}

pub fn build_jump_law(params: ModelParams, cutoff: usize) -> Result<JumpLaw> {
    JumpLaw::new(params, cutoff)
}

impl JumpLaw {
    pub fn new(params: ModelParams, cutoff: usize) -> Result<Self> {
        let params = ModelParams::new(params.d, params.alpha, params.q)?;
        if cutoff < 2 {
            return Err(Error::param("K", format!("cutoff must be >= 2, got {cutoff}")));
        }
        let d = params.d;
        let c = normalizer(d, params.alpha);
        let sites = ball_sites(d, cutoff as f64, false);
        let expo = -(d as f64 + params.alpha) / 2.0;
        let weights: Vec<f64> = sites
            .iter()
            .map(|z| c * (z.norm2() as f64).powf(expo))
            .collect();
        // pairwise-stable sum, small terms first
        let mut sorted = weights.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ball_mass: f64 = sorted.iter().sum();
        let tail_mass = (1.0 - ball_mass).max(0.0);
        let tail_bound = c * tail_sum_bound(d, params.alpha, cutoff);
        Ok(JumpLaw {
            params,
            cutoff,
            c,
            tail_mass,
            tail_bound,
            sites,
            weights,
            symbol: SymbolEvaluator::new(d, params.alpha, c),
        })
    }

    pub fn d(&self) -> usize {
        self.params.d
    }

    /// `μ(z)` for any `z`, inside or beyond the cutoff.
    #[inline]
    pub fn mu(&self, z: Site) -> f64 {
        let r2 = z.norm2();
        if r2 == 0 {
            0.0
        } else {
            self.c * (r2 as f64).powf(-self.params.s())
        }
    }

    pub fn ball_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Fourier symbol `ψ(θ) = Σ_z μ(z)(1 - cos 2πθ·z)`.
    pub fn psi(&self, theta: &[f64]) -> f64 {
        self.symbol.psi(theta)
    }

    pub fn symbol_evaluator(&self) -> &SymbolEvaluator {
        &self.symbol
    }

    pub fn describe(&self) -> LawDescription {
        LawDescription {
            d: self.params.d,
            alpha: self.params.alpha,
            q: self.params.q,
            regime: self.params.regime,
            cutoff: self.cutoff,
            side: None,
            c: self.c,
            tail_mass: self.tail_mass,
            tail_bound: self.tail_bound,
            total_mass: self.ball_mass() + self.tail_mass,
            redistributed_remainder: None,
        }
    }

    /// Free symbol on the grid `θ = k / n`, `k ∈ {0..n-1}^d`.
    pub fn symbol_csv(&self, n: usize) -> Csv {
        let t = Torus::new(self.d(), n).expect("valid torus");
        let mut csv = Csv::new(&["k", "psi"]);
        for idx in 0..t.len() {
            let k = t.site(idx);
            let theta: Vec<f64> = k.coords(self.d()).iter().map(|v| *v as f64 / n as f64).collect();
            csv.push(vec![k.render(self.d()).into(), self.psi(&theta).into()]);
        }
        csv
    }
}

/// The law folded onto `T_R`, `μ_R(x) = Σ_k μ(x + kR)`, with its symbol.
#[derive(Clone, Debug)]
pub struct TorusLaw {
    pub params: ModelParams,
    pub torus: Torus,
    pub c: f64,
    pub weights: Vec<f64>,
    /// `ψ_R(k)` indexed like the torus sites.
    pub symbol: Vec<f64>,
    /// Mass `1 - Σ_x μ_R(x)` spread uniformly before use.
    pub remainder: f64,
    pub cutoff: usize,
}

/// Threshold above which a redistributed remainder is reported.
pub const REMAINDER_WARN: f64 = 1e-8;

pub fn project_to_torus(law: &JumpLaw, side: usize) -> Result<TorusLaw> {
    TorusLaw::from_params(law.params, side, law.cutoff)
}

impl TorusLaw {
    pub fn from_params(params: ModelParams, side: usize, cutoff: usize) -> Result<Self> {
        let params = ModelParams::new(params.d, params.alpha, params.q)?;
        if side < 1 {
            return Err(Error::param("R", "torus side must be >= 1"));
        }
        let d = params.d;
        let torus = Torus::new(d, side)?;
        let c = normalizer(d, params.alpha);
        let s = params.s();
        let rf = side as f64;
        let scale = c * rf.powf(-2.0 * s);
        let mut weights: Vec<f64> = (0..torus.len())
            .map(|idx| {
                let x = torus.site(idx);
                let beta: Vec<f64> = x.coords(d).iter().map(|v| *v as f64 / rf).collect();
                scale * shifted_zeta(d, s, &beta)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let remainder = 1.0 - total;
        let share = remainder / torus.len() as f64;
        for w in &mut weights {
            *w += share;
        }
        if remainder.abs() > REMAINDER_WARN {
            eprintln!(
                "warning: torus R={side} redistributed folded remainder {remainder:.3e} exceeds {REMAINDER_WARN:e}"
            );
        }
        let symbol = torus_symbol(&torus, &weights);
        Ok(TorusLaw {
            params,
            torus,
            c,
            weights,
            symbol,
            remainder,
            cutoff,
        })
    }

    pub fn side(&self) -> usize {
        self.torus.side
    }

    pub fn len(&self) -> usize {
        self.torus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn describe(&self) -> LawDescription {
        LawDescription {
            d: self.params.d,
            alpha: self.params.alpha,
            q: self.params.q,
            regime: self.params.regime,
            cutoff: self.cutoff,
            side: Some(self.side()),
            c: self.c,
            tail_mass: 0.0,
            tail_bound: 0.0,
            total_mass: self.weights.iter().sum(),
            redistributed_remainder: Some(self.remainder),
        }
    }

    pub fn symbol_csv(&self) -> Csv {
        let d = self.params.d;
        let mut csv = Csv::new(&["k", "psi_R"]);
        for (idx, v) in self.symbol.iter().enumerate() {
            csv.push(vec![self.torus.site(idx).render(d).into(), Cell::F(*v)]);
        }
        csv
    }

    /// Dense generator matrix entries `A_R(x, y) = μ_R(y - x) - δ_{xy}`.
    pub fn generator_dense(&self) -> Vec<f64> {
        let n = self.len();
        let diff = self.torus.difference_table();
        let mut a = vec![0.0; n * n];
        for x in 0..n {
            for y in 0..n {
                a[x * n + y] = self.weights[diff[y * n + x]];
            }
            a[x * n + x] -= 1.0;
        }
        a
    }
}

/// `ψ_R(k) = Σ_x μ_R(x) (1 - cos 2πk·x/R)`.
fn torus_symbol(torus: &Torus, weights: &[f64]) -> Vec<f64> {
    let n = torus.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let v: f64 = (0..n)
                .map(|x| weights[x] * (1.0 - torus.cos_phase(k, x)))
                .sum();
            v.max(0.0)
        })
        .collect()
}

/// `<f, -A f> = ½ Σ_{x,y} μ(y-x)(f(y)-f(x))^2` for a finitely supported `f`.
///
/// On `Z^d` jumps leaving the support contribute `f(x)^2 Σ_{y∉S} μ(y-x)`;
/// since the law has unit mass this equals `f(x)^2 (1 - Σ_{y∈S} μ(y-x))`,
/// so the form is `Σ f^2 - Σ_{x≠y∈S} μ(y-x) f(x) f(y)` exactly.
pub fn dirichlet_form(law: &JumpLaw, f: &LatticeFunction) -> Result<f64> {
    if f.space != SpaceTag::Free {
        return Err(Error::SpaceMismatch("free-space law with torus function".into()));
    }
    if f.d != law.d() {
        return Err(Error::SpaceMismatch(format!(
            "law has d={}, function has d={}",
            law.d(),
            f.d
        )));
    }
    let mut energy: f64 = f.values.iter().map(|v| v * v).sum();
    for (i, (xi, fi)) in f.sites.iter().zip(&f.values).enumerate() {
        for (yj, fj) in f.sites.iter().zip(&f.values).skip(i + 1) {
            energy -= 2.0 * law.mu(yj.sub(*xi)) * fi * fj;
        }
    }
    Ok(energy.max(0.0))
}

/// Torus variant of [`dirichlet_form`]; `f` is given by its values on all of `T_R`.
pub fn dirichlet_form_torus(law: &TorusLaw, values: &[f64]) -> Result<f64> {
    let n = law.len();
    if values.len() != n {
        return Err(Error::SpaceMismatch(format!(
            "torus has {n} sites, function has {}",
            values.len()
        )));
    }
    let diff = law.torus.difference_table();
    let mut energy = 0.0;
    for x in 0..n {
        for y in 0..n {
            let dv = values[y] - values[x];
            energy += law.weights[diff[y * n + x]] * dv * dv;
        }
    }
    Ok(0.5 * energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{hurwitz_zeta, zeta};

    fn p(d: usize, alpha: f64, q: f64) -> ModelParams {
        ModelParams::new(d, alpha, q).unwrap()
    }

    #[test]
    fn regimes_from_sign() {
        assert_eq!(p(1, 0.5, 2.0).regime, Regime::Critical);
        assert_eq!(p(2, 0.5, 2.0).regime, Regime::Supercritical);
        assert_eq!(p(3, 2.0, 2.0).regime, Regime::Subcritical);
        assert_eq!(p(2, 1.0, 2.0).regime, Regime::Critical);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(ModelParams::new(1, 3.0, 2.0).is_err());
        assert!(ModelParams::new(1, 0.0, 2.0).is_err());
        assert!(ModelParams::new(0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(1, 1.0, 1.0).is_err());
        assert!(JumpLaw::new(p(1, 0.5, 2.0), 1).is_err());
        match ModelParams::new(0, 3.0, 0.5) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 3),
            other => panic!("expected all violations, got {other:?}"),
        }
    }

    #[test]
    fn d1_normalizer_and_weights() {
        let law = JumpLaw::new(p(1, 0.5, 2.0), 10_000).unwrap();
        let c = 1.0 / (2.0 * zeta(1.5));
        assert!((law.c - c).abs() < 1e-14);
        assert_eq!(law.mu(Site::from_slice(&[1])), law.c);
        assert!((law.mu(Site::from_slice(&[-2])) - c * 2f64.powf(-1.5)).abs() < 1e-16);
        // exact tail 2c ζ(1.5, K+1)
        let tail = 2.0 * c * hurwitz_zeta(1.5, 10_001.0);
        assert!((law.tail_mass - tail).abs() < 1e-10);
        assert!(law.tail_mass <= law.tail_bound);
        let total = law.ball_mass() + law.tail_mass;
        assert!((total - 1.0).abs() < 1e-10);
        let bigger = JumpLaw::new(p(1, 0.5, 2.0), 100_000).unwrap();
        assert!((bigger.c - law.c).abs() < 1e-8);
        for (z, w) in law.sites.iter().zip(&law.weights) {
            let mz = Site([-z.0[0], 0, 0, 0]);
            assert_eq!(*w, law.mu(mz));
        }
    }

    #[test]
    fn d2_tail_bound_against_shells() {
        let law = JumpLaw::new(p(2, 1.0, 3.0), 200).unwrap();
        let shell: f64 = ball_sites(2, 400.0, false)
            .into_iter()
            .filter(|z| z.norm2() > 200 * 200)
            .map(|z| law.mu(z))
            .sum();
        assert!(shell < law.tail_mass);
        assert!(law.tail_mass <= law.tail_bound);
        // continuum estimate c 2π / K
        let crude = law.c * 2.0 * PI / 200.0;
        assert!((law.tail_mass / crude - 1.0).abs() < 0.02);
        assert!((law.ball_mass() + law.tail_mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_point_torus() {
        let params = p(1, 0.5, 2.0);
        let t = TorusLaw::from_params(params, 2, 0).unwrap();
        let c = normalizer(1, 0.5);
        // odd z: 2c Σ_{n odd ≥1} n^{-1.5} = 2c (1 - 2^{-1.5}) ζ(1.5)
        let odd = 2.0 * c * (1.0 - 2f64.powf(-1.5)) * zeta(1.5);
        let even = 2.0 * c * 2f64.powf(-1.5) * zeta(1.5);
        assert!((t.weights[1] - odd).abs() < 1e-13);
        assert!((t.weights[0] - even).abs() < 1e-13);
        assert!((t.symbol[1] - 2.0 * t.weights[1]).abs() < 1e-13);
        assert_eq!(t.symbol[0], 0.0);
    }

    #[test]
    fn torus_symbol_matches_unfolded_sum() {
        let params = p(1, 0.5, 2.0);
        let r = 32;
        let t = TorusLaw::from_params(params, r, 0).unwrap();
        let law = JumpLaw::new(params, 2).unwrap();
        assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        // Σ_z μ(z)(1 - cos πz) over |z| ≤ K, plus tail mass, at k = 16
        let kmax: i64 = 1 << 22;
        let mut direct = 0.0;
        for z in 1..=kmax {
            direct += 2.0 * law.mu(Site::from_slice(&[z])) * (1.0 - (PI * z as f64).cos());
        }
        direct += 2.0 * law.c * hurwitz_zeta(1.5, kmax as f64 + 1.0);
        assert!((t.symbol[16] - direct).abs() < 1e-8, "{} vs {direct}", t.symbol[16]);
        // the symbol on T_R is the free symbol sampled at k/R
        for k in 0..r {
            let free = law.psi(&[k as f64 / r as f64]);
            assert!((t.symbol[k] - free).abs() < 1e-12);
            assert!((t.symbol[k] - t.symbol[(r - k) % r]).abs() < 1e-12);
        }
    }

    #[test]
    fn d2_folding_matches_brute_force() {
        let params = p(2, 1.0, 3.0);
        let t = TorusLaw::from_params(params, 4, 0).unwrap();
        let c = t.c;
        let m = 400i64;
        let mut brute = vec![0.0; 16];
        for x in -m..=m {
            for y in -m..=m {
                if x == 0 && y == 0 {
                    continue;
                }
                let w = c * ((x * x + y * y) as f64).powf(-1.5);
                brute[t.torus.index(Site::from_slice(&[x, y]))] += w;
            }
        }
        // truncated square misses ~ c 8/m beyond |x|∞ > m, spread evenly
        let missing = 1.0 - brute.iter().sum::<f64>();
        for (i, b) in brute.iter().enumerate() {
            assert!((t.weights[i] - b - missing / 16.0).abs() < 1e-5);
        }
    }

    #[test]
    fn dirichlet_form_examples() {
        let law = JumpLaw::new(p(1, 0.5, 2.0), 16).unwrap();
        let delta = LatticeFunction::delta(1, SpaceTag::Free, Site::ORIGIN);
        assert!((dirichlet_form(&law, &delta).unwrap() - 1.0).abs() < 1e-15);
        let f = LatticeFunction::new(
            1,
            SpaceTag::Free,
            vec![Site::ORIGIN, Site::unit(0)],
            vec![1.0, -1.0],
        )
        .unwrap();
        // brute force: exit terms over |y| ≤ N plus Hurwitz tail, plus the internal pair
        let n: i64 = 200_000;
        let c = law.c;
        let mut exit = 0.0;
        for y in -n..=n {
            if y == 0 || y == 1 {
                continue;
            }
            exit += law.mu(Site::from_slice(&[y])) + law.mu(Site::from_slice(&[y - 1]));
        }
        let nf = n as f64;
        exit += c * (4.0 * hurwitz_zeta(1.5, nf) - 3.0 * nf.powf(-1.5) - (nf + 1.0).powf(-1.5));
        let brute = exit + law.mu(Site::unit(0)) * 4.0;
        let got = dirichlet_form(&law, &f).unwrap();
        assert!((got - brute).abs() < 1e-8, "{got} vs {brute}");
        assert!((got - 2.0 * (1.0 + c)).abs() < 1e-14);
    }

    #[test]
    fn torus_constants_are_harmonic() {
        let t = TorusLaw::from_params(p(2, 1.0, 2.0), 5, 0).unwrap();
        let e = dirichlet_form_torus(&t, &vec![0.7; 25]).unwrap();
        assert!(e.abs() < 1e-14);
    }

    #[test]
    fn description_serializes() {
        let law = JumpLaw::new(p(1, 0.5, 2.0), 100).unwrap();
        let js = serde_json::to_value(law.describe()).unwrap();
        assert_eq!(js["K"], 100);
        assert!(js.get("R").is_none());
        let t = project_to_torus(&law, 8).unwrap();
        let js = serde_json::to_value(t.describe()).unwrap();
        assert_eq!(js["R"], 8);
    }
}
