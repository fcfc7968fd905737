//! Tail probabilities `P[I_T >= b^q]`: plain Monte Carlo, confinement
//! tilting, empirical rate curves, and the localization-cost regime
//! classifier.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ball_sites, Site};
use crate::model::{JumpLaw, ModelParams, Regime, TorusLaw};
use crate::output::Csv;
use crate::rng::{substream, Stream};
use crate::stats::{par_fold, par_map, rule_of_three, wilson_interval, Moments};
use crate::walk::{silt, simulate_local_times, LocalTimeField, StopRule, WalkSampler};

/// Ratio guards standing in for `T >> b >> T^{1/q}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowGuards {
    pub max_b_over_t: f64,
    pub min_b_over_root: f64,
}

impl Default for WindowGuards {
    fn default() -> Self {
        WindowGuards {
            max_b_over_t: 0.2,
            min_b_over_root: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationSchedule {
    pub t: f64,
    pub b: f64,
    pub q: f64,
    pub a: f64,
    /// `a b / T`.
    pub lambda: f64,
    /// `b^q`.
    pub threshold: f64,
    pub b_over_t: f64,
    pub b_over_root: f64,
    /// Inside the guarded window `b/T <= 0.2`, `b/T^{1/q} >= 5` (defaults).
    pub in_window: bool,
    /// `b / T^{1/(q+1)} >= min_b_over_root` and `b/T <= max_b_over_t`.
    pub in_wide_window: bool,
}

impl DeviationSchedule {
    pub fn new(t: f64, b: f64, q: f64, a: f64, guards: WindowGuards) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::param("T", "horizon must be > 0"));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::param("b", "scale must be >= 0"));
        }
        if !(q > 1.0) {
            return Err(Error::param("q", "q = 1 is degenerate (I_T = T); need q > 1"));
        }
        let b_over_t = b / t;
        let b_over_root = b / t.powf(1.0 / q);
        let b_over_wide = b / t.powf(1.0 / (q + 1.0));
        Ok(DeviationSchedule {
            t,
            b,
            q,
            a,
            lambda: a * b / t,
            threshold: b.powf(q),
            b_over_t,
            b_over_root,
            in_window: b_over_t <= guards.max_b_over_t && b_over_root >= guards.min_b_over_root,
            in_wide_window: b_over_t <= guards.max_b_over_t && b_over_wide >= guards.min_b_over_root,
        })
    }
}

/// The walk a tail estimate runs on.
#[derive(Clone, Copy, Debug)]
pub enum WalkModel<'a> {
    Free(&'a JumpLaw),
    Torus(&'a TorusLaw),
}

impl WalkModel<'_> {
    pub fn params(&self) -> ModelParams {
        match self {
            WalkModel::Free(l) => l.params,
            WalkModel::Torus(l) => l.params,
        }
    }

    pub fn sampler(&self) -> Result<WalkSampler> {
        match self {
            WalkModel::Free(l) => WalkSampler::free(l),
            WalkModel::Torus(l) => WalkSampler::torus(l),
        }
    }

    /// Sites visited by the sampler within distance `radius` of the origin.
    fn ball(&self, radius: f64) -> Vec<Site> {
        match self {
            WalkModel::Free(l) => ball_sites(l.d(), radius, true),
            WalkModel::Torus(l) => {
                let t = &l.torus;
                (0..t.len())
                    .filter(|&i| t.min_image(i).norm() <= radius + 1e-9)
                    .map(|i| t.site(i))
                    .collect()
            }
        }
    }

    /// Jump kernel of the simulated walk (truncated and renormalized on `Z^d`).
    fn kernel(&self, from: Site, to: Site, free_mass: f64) -> f64 {
        match self {
            WalkModel::Free(l) => {
                let z = to.sub(from);
                let k = l.cutoff as i64;
                if z.norm2() == 0 || z.norm2() > k * k {
                    0.0
                } else {
                    l.mu(z) / free_mass
                }
            }
            WalkModel::Torus(l) => {
                let t = &l.torus;
                l.weights[t.index(to.sub(from))]
            }
        }
    }
}

/// `I_T` over `n` independent paths started at the origin.
#[derive(Clone, Debug)]
pub struct SiltSample {
    pub t: f64,
    pub q: f64,
    pub values: Vec<f64>,
    /// Replicas outside `T^q n_sites^{1-q} <= I_T <= T^q`.
    pub pathwise_violations: usize,
}

pub fn sample_silt(walk: WalkModel, t: f64, q: f64, n: usize, seed: u64) -> Result<SiltSample> {
    let sampler = walk.sampler()?;
    let stop = StopRule::Fixed { t };
    stop.validate()?;
    let rows: Vec<Result<(f64, bool)>> = par_map(n, |i| {
        let (field, _) = simulate_local_times(&sampler, stop, seed, i as u64)?;
        let v = silt(&field, q)?;
        Ok((v.value, v.within_pathwise_bounds(field.n_sites())))
    });
    let mut values = Vec::with_capacity(n);
    let mut pathwise_violations = 0;
    for r in rows {
        let (v, ok) = r?;
        values.push(v);
        if !ok {
            pathwise_violations += 1;
        }
    }
    Ok(SiltSample {
        t,
        q,
        values,
        pathwise_violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Naive,
    Tilted { ball_radius: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct RateEstimate {
    pub method: Method,
    pub t: f64,
    pub b: f64,
    pub threshold: f64,
    pub n: usize,
    pub hits: usize,
    pub p_hat: f64,
    pub se: f64,
    /// `log(p_hat) / b` when `p_hat > 0`.
    pub log_rate: Option<f64>,
    /// Delta-method standard error of the log rate.
    pub log_rate_se: Option<f64>,
    /// 95% Wilson interval (naive runs only).
    pub interval: Option<(f64, f64)>,
    /// One-sided 95% upper bound for zero-hit runs.
    pub upper_bound: Option<f64>,
    /// Effective sample size of the weights (tilted runs only).
    pub ess: Option<f64>,
    pub degenerate: bool,
    pub pathwise_violations: usize,
    pub in_window: bool,
}

fn log_rate_of(p: f64, se: f64, b: f64) -> (Option<f64>, Option<f64>) {
    if p > 0.0 && b > 0.0 {
        (Some(p.ln() / b), Some(se / (p * b)))
    } else {
        (None, None)
    }
}

/// Tail estimate from an existing sample, so thresholds share replicas.
pub fn naive_from_sample(sample: &SiltSample, schedule: &DeviationSchedule) -> RateEstimate {
    let n = sample.values.len();
    let hits = sample.values.iter().filter(|v| **v >= schedule.threshold).count();
    let p = hits as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    let (log_rate, log_rate_se) = log_rate_of(p, se, schedule.b);
    RateEstimate {
        method: Method::Naive,
        t: schedule.t,
        b: schedule.b,
        threshold: schedule.threshold,
        n,
        hits,
        p_hat: p,
        se,
        log_rate,
        log_rate_se,
        interval: Some(wilson_interval(hits, n, 1.96)),
        upper_bound: (hits == 0).then(|| rule_of_three(n)),
        ess: None,
        degenerate: false,
        pathwise_violations: sample.pathwise_violations,
        in_window: schedule.in_window,
    }
}

pub fn estimate_naive(walk: WalkModel, schedule: &DeviationSchedule, n: usize, seed: u64) -> Result<RateEstimate> {
    if n < 1000 {
        return Err(Error::param("N", format!("need at least 1000 replicas, got {n}")));
    }
    let sample = sample_silt(walk, schedule.t, schedule.q, n, seed)?;
    Ok(naive_from_sample(&sample, schedule))
}

/// Principal eigenpair of the walk kernel restricted to a ball, with the
/// transformed jump tables `x → y ∝ p(y - x) h(y)`.
#[derive(Clone, Debug)]
pub struct Confinement {
    pub sites: Vec<Site>,
    pub theta: f64,
    /// Normalized so that `h(origin) = 1`.
    pub h: Vec<f64>,
    origin: usize,
    alias: Vec<WeightedAliasIndex<f64>>,
}

impl Confinement {
    pub fn new(walk: WalkModel, radius: f64) -> Result<Self> {
        if !(radius >= 1.0) {
            return Err(Error::param("R_ball", format!("ball radius must be >= 1, got {radius}")));
        }
        let sites = walk.ball(radius);
        let n = sites.len();
        let free_mass = match walk {
            WalkModel::Free(l) => l.ball_mass(),
            WalkModel::Torus(_) => 1.0,
        };
        let m = DMatrix::from_fn(n, n, |i, j| walk.kernel(sites[i], sites[j], free_mass));
        let eig = SymmetricEigen::new(m.clone());
        let (top, theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        let origin = sites
            .iter()
            .position(|s| *s == Site::ORIGIN)
            .ok_or_else(|| Error::numerical("ldp_estimator", "ball misses the origin"))?;
        let mut h: Vec<f64> = eig.eigenvectors.column(top).iter().copied().collect();
        let sign = h[origin].signum();
        for v in &mut h {
            *v *= sign;
        }
        if h.iter().any(|v| *v <= 0.0) {
            return Err(Error::numerical("ldp_estimator", "principal eigenvector is not positive"));
        }
        let h0 = h[origin];
        for v in &mut h {
            *v /= h0;
        }
        let alias = (0..n)
            .map(|i| {
                let w: Vec<f64> = (0..n).map(|j| m[(i, j)] * h[j]).collect();
                WeightedAliasIndex::new(w)
                    .map_err(|e| Error::numerical("ldp_estimator", format!("tilted jump table: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Confinement {
            sites,
            theta,
            h,
            origin,
            alias,
        })
    }

    fn index_of(&self, s: Site) -> Option<usize> {
        self.sites.iter().position(|x| *x == s)
    }
}

/// Mixture of the plain walk (weight `w0`) and walks confined to the ball by
/// the h-transform over `[0, S_k]`, free afterwards.
#[derive(Clone, Debug, Serialize)]
pub struct TiltPlan {
    pub ball_radius: f64,
    pub theta: f64,
    pub ball_sites: usize,
    pub confinement_times: Vec<f64>,
    pub plain_weight: f64,
}

/// Confinement times as fractions of `S*`, the time after which the
/// confined walk (occupation profile `π ∝ h²`) has `S*^q ‖π‖_q^q = b^q`.
fn confinement_times(schedule: &DeviationSchedule, conf: &Confinement) -> Vec<f64> {
    let q = schedule.q;
    let total: f64 = conf.h.iter().map(|v| v * v).sum();
    let pq: f64 = conf.h.iter().map(|v| (v * v / total).powf(q)).sum();
    let full = schedule.b / pq.powf(1.0 / q);
    [0.5, 0.75, 1.0, 1.25]
        .iter()
        .map(|f| (f * full).min(schedule.t))
        .collect()
}

const PLAIN_WEIGHT: f64 = 0.2;

pub fn estimate_tilted(
    walk: WalkModel,
    schedule: &DeviationSchedule,
    ball_radius: f64,
    n: usize,
    seed: u64,
) -> Result<RateEstimate> {
    if n < 1000 {
        return Err(Error::param("N", format!("need at least 1000 replicas, got {n}")));
    }
    let conf = Confinement::new(walk, ball_radius)?;
    let sampler = walk.sampler()?;
    let times = confinement_times(schedule, &conf);
    let k = times.len();
    let comp_weight = (1.0 - PLAIN_WEIGHT) / k as f64;
    let t_end = schedule.t;
    let q = schedule.q;
    let d = walk.params().d;

    struct Acc {
        est: Moments,
        w_sum: f64,
        w_sq: f64,
        hits: usize,
        violations: usize,
    }
    let acc = par_fold(
        n,
        || Acc {
            est: Moments::default(),
            w_sum: 0.0,
            w_sq: 0.0,
            hits: 0,
            violations: 0,
        },
        |a, i| {
            let mut mix = substream(seed, i as u64, Stream::Mixture);
            let u: f64 = mix.random();
            let comp = if u < PLAIN_WEIGHT {
                None
            } else {
                Some((((u - PLAIN_WEIGHT) / comp_weight) as usize).min(k - 1))
            };
            let confine_until = comp.map(|c| times[c]).unwrap_or(0.0);
            let mut rng = substream(seed, i as u64, Stream::Tilt);
            let (field, exit, at_times) =
                tilted_path(&sampler, &conf, confine_until, &times, t_end, &mut rng, d);
            let lik: f64 = times
                .iter()
                .zip(&at_times)
                .map(|(&s, pos)| {
                    if exit.is_some_and(|e| e <= s) {
                        return 0.0;
                    }
                    match pos.and_then(|p| conf.index_of(p)) {
                        Some(j) => ((1.0 - conf.theta) * s).exp() * conf.h[j] / conf.h[conf.origin],
                        None => 0.0,
                    }
                })
                .map(|l| comp_weight * l)
                .sum();
            let w = 1.0 / (PLAIN_WEIGHT + lik);
            let v = silt(&field, q).expect("q validated");
            if !v.within_pathwise_bounds(field.n_sites()) {
                a.violations += 1;
            }
            let hit = v.value >= schedule.threshold;
            if hit {
                a.hits += 1;
            }
            a.est.push(if hit { w } else { 0.0 });
            a.w_sum += w;
            a.w_sq += w * w;
        },
        |t, p| {
            t.est.merge(&p.est);
            t.w_sum += p.w_sum;
            t.w_sq += p.w_sq;
            t.hits += p.hits;
            t.violations += p.violations;
        },
    );
    let s = acc.est.summary();
    let ess = acc.w_sum * acc.w_sum / acc.w_sq;
    let (log_rate, log_rate_se) = log_rate_of(s.mean, s.se, schedule.b);
    Ok(RateEstimate {
        method: Method::Tilted { ball_radius },
        t: schedule.t,
        b: schedule.b,
        threshold: schedule.threshold,
        n,
        hits: acc.hits,
        p_hat: s.mean,
        se: s.se,
        log_rate,
        log_rate_se,
        interval: None,
        upper_bound: (acc.hits == 0).then(|| rule_of_three(n)),
        ess: Some(ess),
        degenerate: ess < 0.01 * n as f64,
        pathwise_violations: acc.violations,
        in_window: schedule.in_window,
    })
}

pub fn tilt_plan(walk: WalkModel, schedule: &DeviationSchedule, ball_radius: f64) -> Result<TiltPlan> {
    let conf = Confinement::new(walk, ball_radius)?;
    Ok(TiltPlan {
        ball_radius,
        theta: conf.theta,
        ball_sites: conf.sites.len(),
        confinement_times: confinement_times(schedule, &conf),
        plain_weight: PLAIN_WEIGHT,
    })
}

/// One path: h-transformed inside the ball up to `confine_until`, plain
/// afterwards. Returns local times, the first exit time from the ball and
/// the position at each time in `marks`.
fn tilted_path(
    sampler: &WalkSampler,
    conf: &Confinement,
    confine_until: f64,
    marks: &[f64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
    d: usize,
) -> (LocalTimeField, Option<f64>, Vec<Option<Site>>) {
    let mut field = LocalTimeField::new(d, sampler.space, horizon);
    let mut at = vec![None; marks.len()];
    let mut t = 0.0;
    let mut pos = Site::ORIGIN;
    let mut ball_idx = Some(conf.origin);
    let mut exit = None;
    loop {
        let confined = t < confine_until;
        let rate = if confined { conf.theta } else { 1.0 };
        let hold: f64 = Exp1.sample(rng);
        let mut end = t + hold / rate;
        let switching = confined && end >= confine_until;
        if switching {
            end = confine_until;
        }
        let last = end >= horizon;
        if last {
            end = horizon;
        }
        for (slot, &m) in at.iter_mut().zip(marks) {
            if m >= t && (m < end || (last && m <= end)) {
                *slot = Some(pos);
            }
        }
        field.add(pos, end - t);
        t = end;
        if last {
            break;
        }
        if switching {
            continue;
        }
        if confined {
            let i = ball_idx.expect("confined walk stays in the ball");
            let j = conf.alias[i].sample(rng);
            pos = conf.sites[j];
            ball_idx = Some(j);
        } else {
            pos = sampler.step(pos, rng);
            ball_idx = conf.index_of(pos);
            if ball_idx.is_none() && exit.is_none() {
                exit = Some(t);
            }
        }
    }
    (field, exit, at)
}

#[derive(Clone, Debug, Serialize)]
pub struct RateCurveReport {
    pub kappa: f64,
    pub rho: f64,
    pub slack: f64,
    pub points: Vec<RateEstimate>,
    pub negative: bool,
    pub within_band: bool,
    /// Log rates nonincreasing in the threshold at each `T`, up to 3σ.
    pub monotone: bool,
    /// Mean distance to `-κ` nonincreasing in `T`.
    pub trend_toward_line: bool,
    pub pass: bool,
}

impl RateCurveReport {
    pub fn to_csv(&self) -> Csv {
        let mut csv = Csv::new(&[
            "T",
            "b_T",
            "threshold",
            "p_hat",
            "se",
            "log_rate",
            "method",
            "minus_inv_rho",
            "minus_kappa",
        ]);
        for p in &self.points {
            let m = match p.method {
                Method::Naive => "naive".to_string(),
                Method::Tilted { ball_radius } => format!("tilted({ball_radius})"),
            };
            csv.push(vec![
                p.t.into(),
                p.b.into(),
                p.threshold.into(),
                p.p_hat.into(),
                p.se.into(),
                p.log_rate.unwrap_or(f64::NAN).into(),
                m.into(),
                (-1.0 / self.rho).into(),
                (-self.kappa).into(),
            ]);
        }
        csv
    }
}

/// Empirical log rates over `(T, b)` pairs against the lines `-1/ρ(q)` and
/// `-κ(q)`. Naive estimates at one `T` share one sample of `I_T`.
#[allow(clippy::too_many_arguments)]
pub fn rate_curve(
    walk: WalkModel,
    grid: &[(f64, Vec<f64>)],
    kappa: f64,
    rho: f64,
    slack: f64,
    n: usize,
    seed: u64,
    guards: WindowGuards,
) -> Result<RateCurveReport> {
    let q = walk.params().q;
    if !(q > 1.0) {
        return Err(Error::param("q", "q = 1 is degenerate (I_T = T)"));
    }
    let mut points = Vec::new();
    let mut monotone = true;
    let mut per_t = Vec::new();
    for (j, (t, bs)) in grid.iter().enumerate() {
        let sample = sample_silt(walk, *t, q, n, crate::rng::child_seed(seed, &format!("rate_curve/{j}")))?;
        let mut bs = bs.clone();
        bs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut prev: Option<(f64, f64)> = None;
        let mut dist = Vec::new();
        for b in bs {
            let sch = DeviationSchedule::new(*t, b, q, 1.0, guards)?;
            let est = naive_from_sample(&sample, &sch);
            if let (Some(l), Some(se)) = (est.log_rate, est.log_rate_se) {
                if let Some((pl, pse)) = prev {
                    if l > pl + 3.0 * (se * se + pse * pse).sqrt() {
                        monotone = false;
                    }
                }
                prev = Some((l, se));
                dist.push((l + kappa).abs());
            }
            points.push(est);
        }
        per_t.push(dist.iter().sum::<f64>() / dist.len().max(1) as f64);
    }
    let rated: Vec<f64> = points.iter().filter_map(|p| p.log_rate).collect();
    let negative = !rated.is_empty() && rated.iter().all(|l| *l < 0.0);
    let within_band = !rated.is_empty() && rated.iter().all(|l| *l >= -kappa * (1.0 + slack) && *l < 0.0);
    let trend_toward_line = per_t.windows(2).all(|w| w[1] <= w[0]);
    Ok(RateCurveReport {
        kappa,
        rho,
        slack,
        pass: negative && within_band && monotone,
        points,
        negative,
        within_band,
        monotone,
        trend_toward_line,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RegimeReport {
    pub d: usize,
    pub alpha: f64,
    pub q: f64,
    /// `d(q-1)/q - α`.
    pub exponent: f64,
    pub regime: Regime,
    /// Optimal ball radius; `None` when the radius does not matter.
    pub r_star: Option<f64>,
    /// `(R, b R^{exponent})`.
    pub cost_curve: Vec<(f64, f64)>,
    pub consistent: bool,
}

/// Localization cost `b R^{d(q-1)/q - α}` of a ball of radius `R`.
pub fn classify_regime(params: &ModelParams, t: f64, b: f64) -> Result<RegimeReport> {
    if !(b > 0.0) || !(t > b) {
        return Err(Error::param("b", "need 0 < b < T"));
    }
    let (d, alpha, q) = (params.d, params.alpha, params.q);
    let exponent = d as f64 * (q - 1.0) / q - alpha;
    let regime = Regime::classify(d, alpha, q);
    let max_radius = *[(t / b).powf(q / (d as f64 * (q - 1.0))), 1.0]
        .iter()
        .fold(&0.0, |a, b| if b > a { b } else { a });
    let r_star = match regime {
        Regime::Supercritical => Some(1.0),
        Regime::Critical => None,
        Regime::Subcritical => Some(max_radius),
    };
    let top = max_radius.max(32.0).ceil() as usize;
    let cost_curve: Vec<(f64, f64)> = (1..=top)
        .map(|r| (r as f64, b * (r as f64).powf(exponent)))
        .collect();
    let sign_ok = match regime {
        Regime::Supercritical => exponent > 0.0,
        Regime::Critical => exponent.abs() <= 1e-9,
        Regime::Subcritical => exponent < 0.0,
    };
    Ok(RegimeReport {
        d,
        alpha,
        q,
        exponent,
        regime,
        r_star,
        cost_curve,
        consistent: sign_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> JumpLaw {
        JumpLaw::new(ModelParams::new(1, 0.5, 2.0).unwrap(), 4096).unwrap()
    }

    #[test]
    fn schedule_window_flags() {
        let g = WindowGuards::default();
        let s = DeviationSchedule::new(200.0, 30.0, 2.0, 1.0, g).unwrap();
        assert!(!s.in_window);
        assert_eq!(s.threshold, 900.0);
        assert!((s.lambda - 0.15).abs() < 1e-15);
        let wide = DeviationSchedule::new(1e6, 1e4, 2.0, 1.0, g).unwrap();
        assert!(wide.in_window && wide.in_wide_window);
        assert!(DeviationSchedule::new(10.0, 1.0, 1.0, 1.0, g).is_err());
    }

    #[test]
    fn boundary_thresholds() {
        let l = law();
        let g = WindowGuards::default();
        let zero = DeviationSchedule::new(20.0, 0.0, 2.0, 1.0, g).unwrap();
        let e = estimate_naive(WalkModel::Free(&l), &zero, 1000, 1).unwrap();
        assert_eq!(e.p_hat, 1.0);
        let over = DeviationSchedule::new(20.0, 20.5, 2.0, 1.0, g).unwrap();
        let e = estimate_naive(WalkModel::Free(&l), &over, 1000, 1).unwrap();
        assert_eq!(e.p_hat, 0.0);
        assert_eq!(e.upper_bound, Some(0.003));
        assert_eq!(e.pathwise_violations, 0);
        assert!(estimate_naive(WalkModel::Free(&l), &over, 10, 1).is_err());
    }

    #[test]
    fn covering_ball_reduces_to_naive() {
        let tl = TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), 8, 0).unwrap();
        let conf = Confinement::new(WalkModel::Torus(&tl), 8.0).unwrap();
        assert_eq!(conf.sites.len(), 8);
        assert!((conf.theta - 1.0).abs() < 1e-12);
        assert!(conf.h.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let g = WindowGuards::default();
        let s = DeviationSchedule::new(20.0, 8.0, 2.0, 1.0, g).unwrap();
        let est = estimate_tilted(WalkModel::Torus(&tl), &s, 8.0, 2000, 4).unwrap();
        // all likelihood ratios are one, so every weight is one
        assert!((est.ess.unwrap() - 2000.0).abs() < 1e-6);
        assert!((est.p_hat - est.hits as f64 / 2000.0).abs() < 1e-12);
    }

    #[test]
    fn tilted_agrees_with_naive() {
        let l = law();
        let g = WindowGuards::default();
        let s = DeviationSchedule::new(50.0, 11.5, 2.0, 1.0, g).unwrap();
        let nv = estimate_naive(WalkModel::Free(&l), &s, 20_000, 2).unwrap();
        let tl = estimate_tilted(WalkModel::Free(&l), &s, 1.0, 20_000, 3).unwrap();
        let comb = (nv.se.powi(2) + tl.se.powi(2)).sqrt();
        assert!(nv.hits > 20, "{nv:?}");
        assert!((nv.p_hat - tl.p_hat).abs() <= 3.0 * comb, "{nv:?} {tl:?}");
        assert!(!tl.degenerate);
    }

    #[test]
    fn regimes_match_the_three_cases() {
        let p = |d, a, q| ModelParams::new(d, a, q).unwrap();
        let c = classify_regime(&p(1, 0.5, 2.0), 1e4, 1e2).unwrap();
        assert_eq!(c.regime, Regime::Critical);
        assert!(c.exponent.abs() < 1e-15 && c.r_star.is_none());
        let s = classify_regime(&p(2, 0.5, 2.0), 1e4, 1e2).unwrap();
        assert_eq!(s.regime, Regime::Supercritical);
        assert!((s.exponent - 0.5).abs() < 1e-15);
        assert_eq!(s.r_star, Some(1.0));
        let sub = classify_regime(&p(3, 2.0, 2.0), 1e4, 1e2).unwrap();
        assert_eq!(sub.regime, Regime::Subcritical);
        assert!((sub.exponent + 0.5).abs() < 1e-15);
        assert!((sub.r_star.unwrap() - 100f64.powf(2.0 / 3.0)).abs() < 1e-9);
        assert!(c.consistent && s.consistent && sub.consistent);
    }
}
