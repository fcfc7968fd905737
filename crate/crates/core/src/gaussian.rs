//! Centered Gaussian field on `T_R` with covariance `G_{R,λ}`, the
//! two-sample check of the local-time / squared-Gaussian isomorphism, and
//! tail and exponential-moment probes of `‖Z‖_{2q,R}`.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{green_torus, spectral_row, GreenKernel};
use crate::lattice::{p_norm, Site};
use crate::model::TorusLaw;
use crate::rng::{substream, Stream};
use crate::stats::{par_fold, z_score, MeanSe, Moments};
use crate::walk::{simulate_local_times, StopRule, WalkSampler};

/// Sampler for `Z` with `Cov(Z_x, Z_y) = G_{R,λ}(x, y)`.
///
/// The field is `h * ξ` with `ξ` white noise and `h` the circulant square
/// root of the kernel, i.e. the inverse transform of `(λ + ψ_R(k))^{-1/2}`.
/// Then `h * h = G` exactly.
#[derive(Clone, Debug)]
pub struct FieldSampler {
    pub kernel: GreenKernel,
    sqrt_row: Vec<f64>,
}

/// One field realization.
#[derive(Clone, Debug, Serialize)]
pub struct GaussianField {
    pub side: usize,
    pub values: Vec<f64>,
    pub seed: u64,
    pub replica: u64,
}

impl FieldSampler {
    pub fn new(kernel: &GreenKernel) -> Result<Self> {
        if kernel.min_eigenvalue() <= 0.0 {
            return Err(Error::numerical("gaussian_bridge", "kernel is not positive definite"));
        }
        let roots: Vec<f64> = kernel.mode_weights.iter().map(|w| w.sqrt()).collect();
        let sqrt_row = spectral_row(&kernel.torus, &roots);
        Ok(FieldSampler {
            kernel: kernel.clone(),
            sqrt_row,
        })
    }

    pub fn len(&self) -> usize {
        self.sqrt_row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sqrt_row.is_empty()
    }

    pub fn sample_into(&self, rng: &mut ChaCha8Rng, noise: &mut Vec<f64>, out: &mut Vec<f64>) {
        let n = self.len();
        noise.clear();
        noise.extend((0..n).map(|_| -> f64 { StandardNormal.sample(rng) }));
        out.clear();
        out.resize(n, 0.0);
        let torus = &self.kernel.torus;
        for (y, &xi) in noise.iter().enumerate() {
            for (x, slot) in out.iter_mut().enumerate() {
                *slot += self.sqrt_row[torus.sub(x, y)] * xi;
            }
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut noise = Vec::new();
        let mut out = Vec::new();
        self.sample_into(rng, &mut noise, &mut out);
        out
    }
}

pub fn sample_field(kernel: &GreenKernel, seed: u64, replica: u64) -> Result<GaussianField> {
    let sampler = FieldSampler::new(kernel)?;
    let mut rng = substream(seed, replica, Stream::Field);
    Ok(GaussianField {
        side: kernel.torus.side,
        values: sampler.sample(&mut rng),
        seed,
        replica,
    })
}

/// Empirical covariance against the kernel, entry by entry.
#[derive(Clone, Debug, Serialize)]
pub struct CovarianceCheck {
    pub n: usize,
    pub max_abs_error: f64,
    /// Largest `|error| / σ_MC` over all entries.
    pub max_z: f64,
    pub mean_z0: MeanSe,
    pub var_z0: f64,
    pub g00: f64,
    pub pass: bool,
}

pub fn check_covariance(kernel: &GreenKernel, n: usize, seed: u64, max_z: f64) -> Result<CovarianceCheck> {
    let sampler = FieldSampler::new(kernel)?;
    let m = sampler.len();
    struct Acc {
        sum: Vec<f64>,
        prod: Vec<f64>,
        z0: Moments,
        noise: Vec<f64>,
        z: Vec<f64>,
    }
    let init = || Acc {
        sum: vec![0.0; m],
        prod: vec![0.0; m * m],
        z0: Moments::default(),
        noise: Vec::new(),
        z: Vec::new(),
    };
    let acc = par_fold(
        n,
        init,
        |a, i| {
            let mut rng = substream(seed, i as u64, Stream::Field);
            let (mut noise, mut z) = (std::mem::take(&mut a.noise), std::mem::take(&mut a.z));
            sampler.sample_into(&mut rng, &mut noise, &mut z);
            for x in 0..m {
                a.sum[x] += z[x];
                for y in 0..m {
                    a.prod[x * m + y] += z[x] * z[y];
                }
            }
            a.z0.push(z[0]);
            a.noise = noise;
            a.z = z;
        },
        |t, p| {
            for (a, b) in t.sum.iter_mut().zip(&p.sum) {
                *a += b;
            }
            for (a, b) in t.prod.iter_mut().zip(&p.prod) {
                *a += b;
            }
            t.z0.merge(&p.z0);
        },
    );
    let nf = n as f64;
    let mut max_abs: f64 = 0.0;
    let mut max_zs: f64 = 0.0;
    for x in 0..m {
        for y in 0..m {
            let emp = acc.prod[x * m + y] / nf - acc.sum[x] * acc.sum[y] / (nf * nf);
            let g = kernel.entry(x, y);
            let sigma = ((kernel.at_origin().powi(2) + g * g) / nf).sqrt();
            let err = (emp - g).abs();
            max_abs = max_abs.max(err);
            max_zs = max_zs.max(err / sigma);
        }
    }
    Ok(CovarianceCheck {
        n,
        max_abs_error: max_abs,
        max_z: max_zs,
        mean_z0: acc.z0.summary(),
        var_z0: acc.z0.variance(),
        g00: kernel.at_origin(),
        pass: max_zs <= max_z,
    })
}

/// Bounded test functionals of the field `v = (S_x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    Constant,
    /// `exp(-γ ‖v‖_p)`.
    ExpNorm { gamma: f64, p: f64 },
    /// `1{max_x v_x <= threshold}`.
    SupBelow { threshold: f64 },
    /// `1 / (1 + Σ_{x ∈ sites} v_x)`.
    Rational { sites: Vec<usize> },
    /// `min(v_site, clip)`; rejected without a clip.
    Coordinate { site: usize, clip: Option<f64> },
}

impl Functional {
    pub fn name(&self) -> String {
        match self {
            Functional::Constant => "constant".into(),
            Functional::ExpNorm { gamma, p } => format!("exp_norm(gamma={gamma},p={p})"),
            Functional::SupBelow { threshold } => format!("sup_below({threshold})"),
            Functional::Rational { sites } => format!("rational({sites:?})"),
            Functional::Coordinate { site, clip } => match clip {
                Some(c) => format!("coordinate({site},clip={c})"),
                None => format!("coordinate({site})"),
            },
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        match self {
            Functional::Constant => Ok(()),
            Functional::ExpNorm { gamma, p } => {
                if !(*gamma >= 0.0) || !(*p >= 1.0) {
                    return Err(Error::param("functional", "exp_norm needs gamma >= 0 and p >= 1"));
                }
                Ok(())
            }
            Functional::SupBelow { threshold } => {
                if threshold.is_nan() {
                    return Err(Error::param("functional", "sup_below threshold is NaN"));
                }
                Ok(())
            }
            Functional::Rational { sites } => {
                if sites.iter().any(|s| *s >= n_sites) {
                    return Err(Error::param("functional", "rational site outside the torus"));
                }
                Ok(())
            }
            Functional::Coordinate { site, clip } => {
                if *site >= n_sites {
                    return Err(Error::param("functional", "coordinate site outside the torus"));
                }
                match clip {
                    Some(c) if c.is_finite() => Ok(()),
                    _ => Err(Error::param(
                        "functional",
                        format!("{} is unbounded; give a finite clip", self.name()),
                    )),
                }
            }
        }
    }

    /// Evaluate on a nonnegative field.
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Functional::Constant => 1.0,
            Functional::ExpNorm { gamma, p } => (-gamma * p_norm(v, *p)).exp(),
            Functional::SupBelow { threshold } => {
                if v.iter().all(|x| x <= threshold) {
                    1.0
                } else {
                    0.0
                }
            }
            Functional::Rational { sites } => 1.0 / (1.0 + sites.iter().map(|&s| v[s]).sum::<f64>()),
            Functional::Coordinate { site, clip } => v[*site].min(clip.unwrap_or(f64::INFINITY)),
        }
    }

    /// Unclipped mean of a coordinate, `G(0,x) + ½(G(0,0) + s²)`.
    pub fn closed_form(&self, kernel: &GreenKernel, s: f64) -> Option<f64> {
        match self {
            Functional::Constant => Some(1.0),
            Functional::Coordinate { site, .. } => {
                Some(kernel.values[*site] + 0.5 * (kernel.at_origin() + s * s))
            }
            _ => None,
        }
    }
}

/// The fixed battery on a torus of the given side (sites indexed as in
/// [`Torus`](crate::lattice::Torus)).
pub fn default_battery(d: usize, side: usize, q: f64) -> Vec<Functional> {
    let half = if side > 1 {
        let mut c = [0i64; crate::lattice::MAX_DIM];
        c[0] = (side / 2) as i64;
        crate::lattice::Torus::new(d, side)
            .map(|t| t.index(Site(c)))
            .unwrap_or(0)
    } else {
        0
    };
    vec![
        Functional::Constant,
        Functional::ExpNorm { gamma: 0.1, p: 1.0 },
        Functional::ExpNorm { gamma: 0.5, p: 2.0 },
        Functional::ExpNorm { gamma: 0.5, p: 2.0 * q },
        Functional::SupBelow { threshold: 3.0 },
        Functional::Rational { sites: vec![0, half] },
        Functional::Coordinate { site: 0, clip: Some(60.0) },
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionalResult {
    pub name: String,
    pub left_mean: f64,
    pub right_mean: f64,
    pub se_left: f64,
    pub se_right: f64,
    pub z: f64,
    pub pass: bool,
    pub closed_form: Option<f64>,
    /// `(left - closed_form) / se_left`.
    pub closed_form_z: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EisenbaumReport {
    pub side: usize,
    pub lambda: f64,
    pub s: f64,
    pub n: usize,
    pub z_max: f64,
    pub g00: f64,
    pub results: Vec<FunctionalResult>,
    pub weight: MeanSe,
    pub weight_variance: f64,
    /// `G_{R,λ}(0,0) / s²`.
    pub weight_variance_expected: f64,
    pub min_left_value: f64,
    pub pass: bool,
}

/// Two-sample check of
/// `E[F(l_τ + ½(Z+s)²)] = E[F(½(Z+s)²)(1 + Z_0/s)]`
/// with the walk started at the origin and stopped at `τ ~ Exp(λ)`.
///
/// The left side uses the walk, stop-time and `Field` substreams; the
/// right side uses the `FieldRight` substream, so the samples are
/// independent.
pub fn eisenbaum_test(
    law: &TorusLaw,
    lambda: f64,
    s: f64,
    battery: &[Functional],
    n: usize,
    seed: u64,
    z_max: f64,
) -> Result<EisenbaumReport> {
    if s == 0.0 || !s.is_finite() {
        return Err(Error::param("s", "shift must be finite and nonzero"));
    }
    if n < 2 {
        return Err(Error::param("N", "need at least two replicas"));
    }
    for f in battery {
        f.validate(law.len())?;
    }
    let kernel = green_torus(law, lambda)?;
    let sampler = FieldSampler::new(&kernel)?;
    let walker = WalkSampler::torus(law)?;
    let torus = &law.torus;
    let m = law.len();
    let k = battery.len();
    let stop = StopRule::Exponential { lambda };

    struct Acc {
        f: Vec<Moments>,
        min_s: f64,
        noise: Vec<f64>,
        z: Vec<f64>,
        sv: Vec<f64>,
        weight: Moments,
        err: Option<String>,
    }
    let init = || Acc {
        f: vec![Moments::default(); k],
        min_s: f64::INFINITY,
        noise: Vec::new(),
        z: Vec::new(),
        sv: vec![0.0; m],
        weight: Moments::default(),
        err: None,
    };
    let merge = |t: &mut Acc, p: Acc| {
        for (a, b) in t.f.iter_mut().zip(&p.f) {
            a.merge(b);
        }
        t.weight.merge(&p.weight);
        t.min_s = t.min_s.min(p.min_s);
        if t.err.is_none() {
            t.err = p.err;
        }
    };

    let left = par_fold(
        n,
        init,
        |a, i| {
            let (field, _) = match simulate_local_times(&walker, stop, seed, i as u64) {
                Ok(v) => v,
                Err(e) => {
                    a.err.get_or_insert(e.to_string());
                    return;
                }
            };
            let mut rng = substream(seed, i as u64, Stream::Field);
            let (mut noise, mut z) = (std::mem::take(&mut a.noise), std::mem::take(&mut a.z));
            sampler.sample_into(&mut rng, &mut noise, &mut z);
            for x in 0..m {
                a.sv[x] = 0.5 * (z[x] + s).powi(2);
            }
            for (site, t) in field.sorted() {
                a.sv[torus.index(site)] += t;
            }
            for x in 0..m {
                a.min_s = a.min_s.min(a.sv[x]);
            }
            for (j, f) in battery.iter().enumerate() {
                a.f[j].push(f.eval(&a.sv));
            }
            a.noise = noise;
            a.z = z;
        },
        merge,
    );
    if let Some(e) = left.err {
        return Err(Error::numerical("gaussian_bridge", e));
    }

    let right = par_fold(
        n,
        init,
        |a, i| {
            let mut rng = substream(seed, i as u64, Stream::FieldRight);
            let (mut noise, mut z) = (std::mem::take(&mut a.noise), std::mem::take(&mut a.z));
            sampler.sample_into(&mut rng, &mut noise, &mut z);
            for x in 0..m {
                a.sv[x] = 0.5 * (z[x] + s).powi(2);
            }
            let w = 1.0 + z[0] / s;
            a.weight.push(w);
            for (j, f) in battery.iter().enumerate() {
                a.f[j].push(f.eval(&a.sv) * w);
            }
            a.noise = noise;
            a.z = z;
        },
        merge,
    );

    let mut results = Vec::with_capacity(k);
    for (j, f) in battery.iter().enumerate() {
        let l = left.f[j].summary();
        let r = right.f[j].summary();
        let z = z_score(l, r);
        let closed_form = f.closed_form(&kernel, s);
        let closed_form_z = closed_form.map(|c| {
            let dev = l.mean - c;
            if l.se > 0.0 {
                dev / l.se
            } else if dev.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            }
        });
        results.push(FunctionalResult {
            name: f.name(),
            left_mean: l.mean,
            right_mean: r.mean,
            se_left: l.se,
            se_right: r.se,
            z,
            pass: z.abs() <= z_max,
            closed_form,
            closed_form_z,
        });
    }
    let pass = results.iter().all(|r| r.pass) && left.min_s >= 0.0;
    let g00 = kernel.at_origin();
    Ok(EisenbaumReport {
        side: law.side(),
        lambda,
        s,
        n,
        z_max,
        g00,
        results,
        weight: right.weight.summary(),
        weight_variance: right.weight.variance(),
        weight_variance_expected: g00 / (s * s),
        min_left_value: left.min_s,
        pass,
    })
}

/// Tail lower bound `√ρ₁/√(2πb) (1 - ρ₁/b) exp(-b/(2ρ₁))`, clamped at 0.
pub fn gaussian_tail_lower_bound(rho1: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return 0.0;
    }
    let v = (rho1 / (2.0 * std::f64::consts::PI * b)).sqrt() * (1.0 - rho1 / b) * (-b / (2.0 * rho1)).exp();
    v.max(0.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct TailRow {
    pub b: f64,
    pub probability: f64,
    pub se: f64,
    pub lower_bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub gamma: f64,
    /// Running means at `N/4`, `N/2`, `N`.
    pub running: Vec<MeanSe>,
    pub bounded: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationReport {
    pub q: f64,
    pub rho1: f64,
    pub n: usize,
    pub tails: Vec<TailRow>,
    pub moments: Vec<MomentRow>,
    pub pass: bool,
}

/// Empirical `P[‖Z‖_{2q,R} >= √b]` against the Gaussian lower bound with
/// `ρ₁`, and running means of `exp(γ‖Z‖²_{2q,R}/2)` for `γ < 1/ρ₁`.
pub fn norm_concentration_probe(
    kernel: &GreenKernel,
    q: f64,
    b_grid: &[f64],
    gammas: &[f64],
    rho1: f64,
    n: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    if !(q >= 1.0) {
        return Err(Error::param("q", "need q >= 1"));
    }
    if n < 4 {
        return Err(Error::param("N", "need at least four replicas"));
    }
    let sampler = FieldSampler::new(kernel)?;
    let norms: Vec<f64> = crate::stats::par_map(n, |i| {
        let mut rng = substream(seed, i as u64, Stream::Aux);
        p_norm(&sampler.sample(&mut rng), 2.0 * q)
    });
    let nf = n as f64;
    let tails: Vec<TailRow> = b_grid
        .iter()
        .map(|&b| {
            let thr = b.max(0.0).sqrt();
            let hits = norms.iter().filter(|&&v| v >= thr).count();
            let p = hits as f64 / nf;
            let se = (p * (1.0 - p) / nf).sqrt();
            let lower_bound = gaussian_tail_lower_bound(rho1, b);
            TailRow {
                b,
                probability: p,
                se,
                lower_bound,
                holds: p + 3.0 * se >= lower_bound,
            }
        })
        .collect();
    let moments: Vec<MomentRow> = gammas
        .iter()
        .map(|&g| {
            let mut running = Vec::new();
            let mut acc = Moments::default();
            let marks = [n / 4, n / 2, n];
            let mut next = 0;
            for (i, v) in norms.iter().enumerate() {
                acc.push((0.5 * g * v * v).exp());
                if i + 1 == marks[next] {
                    running.push(acc.summary());
                    next += 1;
                    if next == marks.len() {
                        break;
                    }
                }
            }
            let last = running[running.len() - 1];
            let bounded = g * rho1 < 1.0
                && last.mean.is_finite()
                && running
                    .iter()
                    .all(|r| (r.mean - last.mean).abs() <= 5.0 * (r.se.max(last.se)) + 1e-12);
            MomentRow {
                gamma: g,
                running,
                bounded,
            }
        })
        .collect();
    let pass = tails.iter().all(|t| t.holds) && moments.iter().all(|m| m.bounded);
    Ok(ConcentrationReport {
        q,
        rho1,
        n,
        tails,
        moments,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn law(side: usize) -> TorusLaw {
        TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), side, 0).unwrap()
    }

    #[test]
    fn sqrt_kernel_squares_to_green() {
        let l = law(8);
        let k = green_torus(&l, 0.5).unwrap();
        let fs = FieldSampler::new(&k).unwrap();
        let sq = k.torus.convolve(&fs.sqrt_row, &fs.sqrt_row);
        for (a, b) in sq.iter().zip(&k.values) {
            assert!((a - b).abs() < 1e-13);
        }
        assert!(k.at_origin() <= 1.0 / k.lambda);
    }

    #[test]
    fn empirical_covariance_matches_kernel() {
        let l = law(8);
        let k = green_torus(&l, 0.5).unwrap();
        let chk = check_covariance(&k, 100_000, 11, 5.0).unwrap();
        assert!(chk.pass, "{chk:?}");
        assert!(chk.mean_z0.mean.abs() <= 3.0 * chk.mean_z0.se);
        // Cov(Z_0, Z_3) at N=1e6 within 4σ
        let n = 1_000_000;
        let fs = FieldSampler::new(&k).unwrap();
        let m = par_fold(
            n,
            Moments::default,
            |a, i| {
                let z = fs.sample(&mut substream(5, i as u64, Stream::Field));
                a.push(z[0] * z[3]);
            },
            |t, p| t.merge(&p),
        );
        let g03 = k.values[3];
        let sigma = ((k.at_origin().powi(2) + g03 * g03) / n as f64).sqrt();
        assert!((m.mean() - g03).abs() <= 4.0 * sigma);
    }

    #[test]
    fn functional_validation_and_values() {
        let unbounded = Functional::Coordinate { site: 0, clip: None };
        assert!(unbounded.validate(4).is_err());
        assert!(Functional::Rational { sites: vec![9] }.validate(4).is_err());
        let v = [1.0, 2.0, 0.5, 4.0];
        assert_eq!(Functional::SupBelow { threshold: 3.0 }.eval(&v), 0.0);
        assert_eq!(Functional::Rational { sites: vec![0, 2] }.eval(&v), 1.0 / 2.5);
        assert_eq!(Functional::Coordinate { site: 3, clip: Some(3.0) }.eval(&v), 3.0);
        let e = Functional::ExpNorm { gamma: 0.1, p: 1.0 }.eval(&v);
        assert!((e - (-0.75f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn isomorphism_holds_at_moderate_n() {
        let l = law(8);
        let battery = default_battery(1, 8, 2.0);
        let rep = eisenbaum_test(&l, 0.5, 1.0, &battery, 40_000, 3, 4.0).unwrap();
        assert!(rep.pass, "{rep:#?}");
        let c = &rep.results[0];
        assert!((c.left_mean - 1.0).abs() < 1e-12);
        assert!((c.right_mean - 1.0).abs() <= 3.0 * c.se_right);
        let coord = rep.results.last().unwrap();
        assert!(coord.closed_form_z.unwrap().abs() < 4.0);
        assert!(rep.min_left_value >= 0.0);
        let rel = rep.weight_variance / rep.weight_variance_expected - 1.0;
        assert!(rel.abs() < 0.05);
        assert!(eisenbaum_test(&l, 0.5, 0.0, &battery, 10, 3, 4.0).is_err());
    }

    #[test]
    fn one_point_torus_tail_is_scalar_gaussian() {
        let l = law(1);
        let k = green_torus(&l, 0.5).unwrap();
        assert!((k.at_origin() - 2.0).abs() < 1e-14);
        let rep = norm_concentration_probe(&k, 2.0, &[0.0, 1.0, 4.0], &[0.25], 2.0, 200_000, 1).unwrap();
        assert_eq!(rep.tails[0].probability, 1.0);
        for t in &rep.tails[1..] {
            let exact = statrs::function::erf::erfc((t.b / (2.0 * 2.0)).sqrt());
            assert!((t.probability - exact).abs() <= 4.0 * t.se, "{t:?} vs {exact}");
        }
        // E exp(γ Z²/2) = (1 - γ G)^{-1/2}
        let m = rep.moments[0].running.last().unwrap();
        assert!((m.mean - (0.5f64).powf(-0.5)).abs() <= 5.0 * m.se);
        assert!(rep.pass);
    }
}
