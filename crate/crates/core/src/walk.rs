//! Continuous-time jump-rate-1 walk on `Z^d` or `T_R`, its local times, the
//! q-fold self-intersection local time, torus folding, and mutual
//! intersections of independent walks.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, DefaultHasher};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{p_norm, LatticeFunction, Site, SpaceTag, Torus};
use crate::model::{JumpLaw, TorusLaw};
use crate::output::{Cell, Csv};
use crate::rng::{substream, Stream};

/// Hash map with a fixed hasher so iteration order is reproducible.
pub type SiteMap<V> = HashMap<Site, V, BuildHasherDefault<DefaultHasher>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StopRule {
    Fixed { t: f64 },
    Exponential { lambda: f64 },
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::Fixed { t } if !(t > 0.0) || !t.is_finite() => {
                Err(Error::param("T", format!("horizon must be > 0, got {t}")))
            }
            StopRule::Exponential { lambda } if !(lambda > 0.0) || !lambda.is_finite() => {
                Err(Error::param("lambda", format!("killing rate must be > 0, got {lambda}")))
            }
            _ => Ok(()),
        }
    }
}

/// Increment sampler over either the truncated free law or the torus law.
#[derive(Clone, Debug)]
pub struct WalkSampler {
    pub d: usize,
    pub space: SpaceTag,
    torus: Option<Torus>,
    steps: Vec<Site>,
    alias: WeightedAliasIndex<f64>,
    /// Free-space mass dropped by truncation (zero on the torus).
    pub truncation_mass: f64,
}

impl WalkSampler {
    /// Free walk with jumps drawn from the law restricted to `0 < |z| <= K`
    /// and renormalized.
    pub fn free(law: &JumpLaw) -> Result<Self> {
        let alias = WeightedAliasIndex::new(law.weights.clone())
            .map_err(|e| Error::numerical("walk_simulator", format!("alias table: {e}")))?;
        Ok(WalkSampler {
            d: law.d(),
            space: SpaceTag::Free,
            torus: None,
            steps: law.sites.clone(),
            alias,
            truncation_mass: law.tail_mass,
        })
    }

    /// Exact torus walk.
    pub fn torus(law: &TorusLaw) -> Result<Self> {
        let alias = WeightedAliasIndex::new(law.weights.clone())
            .map_err(|e| Error::numerical("walk_simulator", format!("alias table: {e}")))?;
        let steps = (0..law.len()).map(|i| law.torus.site(i)).collect();
        Ok(WalkSampler {
            d: law.params.d,
            space: law.torus.tag(),
            torus: Some(law.torus.clone()),
            steps,
            alias,
            truncation_mass: 0.0,
        })
    }

    pub fn torus_geometry(&self) -> Option<&Torus> {
        self.torus.as_ref()
    }

    #[inline]
    pub fn step(&self, from: Site, rng: &mut ChaCha8Rng) -> Site {
        let z = self.steps[self.alias.sample(rng)];
        let to = from.add(z);
        match &self.torus {
            Some(t) => t.site(t.index(to)),
            None => to,
        }
    }
}

/// One simulated path: jump times with the site entered at each jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub d: usize,
    pub space: SpaceTag,
    pub jumps: Vec<(f64, Site)>,
    pub seed: u64,
    pub replica: u64,
    pub stop: StopRule,
    pub realized_horizon: f64,
}

/// Draw the horizon: fixed, or `τ ~ Exp(λ)` from its own substream.
pub fn draw_horizon(stop: StopRule, seed: u64, replica: u64) -> Result<f64> {
    stop.validate()?;
    Ok(match stop {
        StopRule::Fixed { t } => t,
        StopRule::Exponential { lambda } => {
            let mut rng = substream(seed, replica, Stream::StopTime);
            let e: f64 = Exp1.sample(&mut rng);
            e / lambda
        }
    })
}

pub fn simulate_path(
    sampler: &WalkSampler,
    stop: StopRule,
    seed: u64,
    replica: u64,
) -> Result<PathSample> {
    let horizon = draw_horizon(stop, seed, replica)?;
    let mut rng = substream(seed, replica, Stream::Walk);
    let mut jumps = Vec::new();
    let mut t = 0.0;
    let mut pos = Site::ORIGIN;
    loop {
        let hold: f64 = Exp1.sample(&mut rng);
        t += hold;
        if t >= horizon {
            break;
        }
        pos = sampler.step(pos, &mut rng);
        jumps.push((t, pos));
    }
    Ok(PathSample {
        d: sampler.d,
        space: sampler.space,
        jumps,
        seed,
        replica,
        stop,
        realized_horizon: horizon,
    })
}

/// Occupation times of one path.
#[derive(Clone, Debug, Default)]
pub struct LocalTimeField {
    pub d: usize,
    pub space: SpaceTag,
    pub horizon: f64,
    pub occupation: SiteMap<f64>,
}

/// Value of `Σ_x l(x)^q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiltValue {
    pub value: f64,
    pub q: f64,
    pub horizon: f64,
}

impl LocalTimeField {
    pub fn new(d: usize, space: SpaceTag, horizon: f64) -> Self {
        LocalTimeField {
            d,
            space,
            horizon,
            occupation: SiteMap::default(),
        }
    }

    /// Build from explicit `(site, time)` pairs; repeated sites are summed.
    pub fn from_pairs(d: usize, space: SpaceTag, pairs: &[(Site, f64)]) -> Self {
        let mut f = LocalTimeField::new(d, space, 0.0);
        for &(s, v) in pairs {
            *f.occupation.entry(s).or_insert(0.0) += v;
            f.horizon += v;
        }
        f
    }

    #[inline]
    pub fn add(&mut self, site: Site, dt: f64) {
        *self.occupation.entry(site).or_insert(0.0) += dt;
    }

    pub fn get(&self, site: Site) -> f64 {
        self.occupation.get(&site).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.sorted().iter().map(|p| p.1).sum()
    }

    pub fn n_sites(&self) -> usize {
        self.occupation.len()
    }

    /// Entries in site order.
    pub fn sorted(&self) -> Vec<(Site, f64)> {
        let mut v: Vec<(Site, f64)> = self.occupation.iter().map(|(s, t)| (*s, *t)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn q_norm(&self, q: f64) -> f64 {
        let vals: Vec<f64> = self.sorted().iter().map(|p| p.1).collect();
        p_norm(&vals, q)
    }

    pub fn to_function(&self) -> LatticeFunction {
        let (sites, values) = self.sorted().into_iter().unzip();
        LatticeFunction {
            d: self.d,
            space: self.space,
            sites,
            values,
        }
    }
}

pub fn local_times(path: &PathSample) -> LocalTimeField {
    let mut field = LocalTimeField::new(path.d, path.space, path.realized_horizon);
    let mut prev = 0.0;
    let mut pos = Site::ORIGIN;
    for &(t, next) in &path.jumps {
        field.add(pos, t - prev);
        prev = t;
        pos = next;
    }
    field.add(pos, path.realized_horizon - prev);
    field
}

/// Simulate and accumulate local times directly, without storing the path.
/// Returns the field and the number of jumps.
pub fn simulate_local_times(
    sampler: &WalkSampler,
    stop: StopRule,
    seed: u64,
    replica: u64,
) -> Result<(LocalTimeField, usize)> {
    let horizon = draw_horizon(stop, seed, replica)?;
    let mut rng = substream(seed, replica, Stream::Walk);
    let mut field = LocalTimeField::new(sampler.d, sampler.space, horizon);
    let mut t = 0.0;
    let mut pos = Site::ORIGIN;
    let mut n = 0;
    loop {
        let hold: f64 = Exp1.sample(&mut rng);
        if t + hold >= horizon {
            field.add(pos, horizon - t);
            break;
        }
        field.add(pos, hold);
        t += hold;
        pos = sampler.step(pos, &mut rng);
        n += 1;
    }
    Ok((field, n))
}

pub fn silt(field: &LocalTimeField, q: f64) -> Result<SiltValue> {
    if !(q >= 1.0) {
        return Err(Error::param("q", format!("SILT order must be >= 1, got {q}")));
    }
    let value = field.sorted().iter().map(|p| p.1.powf(q)).sum();
    Ok(SiltValue {
        value,
        q,
        horizon: field.horizon,
    })
}

impl SiltValue {
    /// `horizon^q · n^{1-q} <= value <= horizon^q`, with relative slack.
    pub fn within_pathwise_bounds(&self, n_sites: usize) -> bool {
        let top = self.horizon.powf(self.q);
        let floor = top * (n_sites.max(1) as f64).powf(1.0 - self.q);
        let tol = 1e-9 * top.max(1e-300);
        self.value <= top + tol && self.value >= floor - tol
    }
}

/// Fold a free field onto `T_R`: `l_R(x) = Σ_k l(x + kR)`.
pub fn fold_field(field: &LocalTimeField, side: usize) -> Result<LocalTimeField> {
    if field.space != SpaceTag::Free {
        return Err(Error::SpaceMismatch("fold_field expects a free-space field".into()));
    }
    let torus = Torus::new(field.d, side)?;
    let mut out = LocalTimeField::new(field.d, torus.tag(), field.horizon);
    for (s, v) in field.sorted() {
        out.add(torus.site(torus.index(s)), v);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MutualIntersection {
    pub value: f64,
    /// `(1/q) Σ_i ‖l^{(i)}‖_q`.
    pub holder_bound: f64,
    pub holds: bool,
}

/// `Q = Σ_x Π_i l^{(i)}(x)` and the bound `Q^{1/q} <= (1/q) Σ_i ‖l^{(i)}‖_q`.
pub fn mutual_intersection(fields: &[LocalTimeField], q: usize) -> Result<MutualIntersection> {
    if q < 2 {
        return Err(Error::param("q", "mutual intersection needs integer q >= 2"));
    }
    if fields.len() != q {
        return Err(Error::param("fields", format!("expected {q} fields, got {}", fields.len())));
    }
    let space = fields[0].space;
    if fields.iter().any(|f| f.space != space || f.d != fields[0].d) {
        return Err(Error::SpaceMismatch("mutual intersection of fields on different spaces".into()));
    }
    let mut value = 0.0;
    for (site, v0) in fields[0].sorted() {
        let mut prod = v0;
        for f in &fields[1..] {
            prod *= f.get(site);
            if prod == 0.0 {
                break;
            }
        }
        value += prod;
    }
    let qf = q as f64;
    let holder_bound = fields.iter().map(|f| f.q_norm(qf)).sum::<f64>() / qf;
    let holds = value.powf(1.0 / qf) <= holder_bound * (1.0 + 1e-12) + 1e-300;
    Ok(MutualIntersection {
        value,
        holder_bound,
        holds,
    })
}

/// One replica summary row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRow {
    pub seed: u64,
    pub replica: u64,
    pub horizon: f64,
    pub n_jumps: usize,
    pub n_sites: usize,
    pub silt: f64,
    pub mutual: Option<f64>,
}

pub fn replica_csv(rows: &[ReplicaRow]) -> Csv {
    let mut csv = Csv::new(&["seed", "replica", "horizon", "n_jumps", "n_sites", "I_T", "Q_T"]);
    for r in rows {
        csv.push(vec![
            r.seed.into(),
            r.replica.into(),
            r.horizon.into(),
            r.n_jumps.into(),
            r.n_sites.into(),
            r.silt.into(),
            match r.mutual {
                Some(v) => Cell::F(v),
                None => Cell::S(String::new()),
            },
        ]);
    }
    csv
}

/// Uniform draw helper used by randomized fixtures.
pub fn random_field(d: usize, n: usize, spread: i64, rng: &mut ChaCha8Rng) -> LocalTimeField {
    let mut f = LocalTimeField::new(d, SpaceTag::Free, 0.0);
    for _ in 0..n {
        let mut c = [0i64; 4];
        for v in c.iter_mut().take(d) {
            *v = rng.random_range(-spread..=spread);
        }
        let t: f64 = rng.random_range(0.01..2.0);
        f.add(Site(c), t);
        f.horizon += t;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn torus_sampler(side: usize) -> (TorusLaw, WalkSampler) {
        let t = TorusLaw::from_params(ModelParams::new(1, 0.5, 2.0).unwrap(), side, 0).unwrap();
        let s = WalkSampler::torus(&t).unwrap();
        (t, s)
    }

    #[test]
    fn hand_fixture_local_times() {
        let a = Site::from_slice(&[3]);
        let b = Site::from_slice(&[-2]);
        let path = PathSample {
            d: 1,
            space: SpaceTag::Free,
            jumps: vec![(0.5, a), (1.2, Site::ORIGIN), (2.0, b)],
            seed: 0,
            replica: 0,
            stop: StopRule::Fixed { t: 3.0 },
            realized_horizon: 3.0,
        };
        let f = local_times(&path);
        assert!((f.get(Site::ORIGIN) - 1.3).abs() < 1e-15);
        assert!((f.get(a) - 0.7).abs() < 1e-15);
        assert!((f.get(b) - 1.0).abs() < 1e-15);
        assert!((f.total() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn lazy_path_and_silt_examples() {
        let path = PathSample {
            d: 1,
            space: SpaceTag::Free,
            jumps: vec![],
            seed: 0,
            replica: 0,
            stop: StopRule::Fixed { t: 4.0 },
            realized_horizon: 4.0,
        };
        let f = local_times(&path);
        assert_eq!(f.sorted(), vec![(Site::ORIGIN, 4.0)]);
        assert!((silt(&f, 2.5).unwrap().value - 32.0).abs() < 1e-12);
        let g = LocalTimeField::from_pairs(
            1,
            SpaceTag::Free,
            &[(Site::from_slice(&[1]), 2.0), (Site::from_slice(&[5]), 1.0)],
        );
        let v = silt(&g, 2.5).unwrap().value;
        assert!((v - (2f64.powf(2.5) + 1.0)).abs() < 1e-12);
        assert!((v - 6.656_854_249_492_38).abs() < 1e-12);
        assert!((silt(&g, 1.0).unwrap().value - 3.0).abs() < 1e-15);
    }

    #[test]
    fn folding_examples() {
        let f = LocalTimeField::from_pairs(
            1,
            SpaceTag::Free,
            &[(Site::ORIGIN, 1.0), (Site::from_slice(&[8]), 2.0)],
        );
        let g = fold_field(&f, 8).unwrap();
        assert_eq!(g.sorted(), vec![(Site::ORIGIN, 3.0)]);
        let inside = LocalTimeField::from_pairs(
            1,
            SpaceTag::Free,
            &[(Site::from_slice(&[2]), 1.0), (Site::from_slice(&[5]), 2.0)],
        );
        assert_eq!(fold_field(&inside, 8).unwrap().sorted(), inside.sorted());
    }

    #[test]
    fn mutual_intersection_examples() {
        let a = LocalTimeField::from_pairs(1, SpaceTag::Free, &[(Site::ORIGIN, 1.0)]);
        let b = LocalTimeField::from_pairs(1, SpaceTag::Free, &[(Site::unit(0), 1.0)]);
        let m = mutual_intersection(&[a.clone(), b], 2).unwrap();
        assert_eq!(m.value, 0.0);
        let l = LocalTimeField::from_pairs(
            1,
            SpaceTag::Free,
            &[(Site::ORIGIN, 1.5), (Site::unit(0), 0.5)],
        );
        let m = mutual_intersection(&[l.clone(), l.clone(), l.clone()], 3).unwrap();
        assert!((m.value - silt(&l, 3.0).unwrap().value).abs() < 1e-14);
        assert!((m.value.powf(1.0 / 3.0) - m.holder_bound).abs() < 1e-12);
        let t = LocalTimeField::new(1, SpaceTag::Torus { side: 4 }, 0.0);
        assert!(mutual_intersection(&[a, t], 2).is_err());
    }

    #[test]
    fn jump_counts_and_exponential_horizon() {
        let (_, s) = torus_sampler(16);
        let n = 20_000;
        let mut jumps = 0.0;
        let mut horizon = 0.0;
        for r in 0..n {
            jumps += simulate_path(&s, StopRule::Fixed { t: 5.0 }, 11, r).unwrap().jumps.len() as f64;
            horizon += draw_horizon(StopRule::Exponential { lambda: 2.0 }, 11, r).unwrap();
        }
        let mean_j = jumps / n as f64;
        let mean_h = horizon / n as f64;
        assert!((mean_j - 5.0).abs() < 3.0 * (5.0 / n as f64).sqrt());
        assert!((mean_h - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt());
        assert!(StopRule::Fixed { t: 0.0 }.validate().is_err());
        assert!(StopRule::Exponential { lambda: -1.0 }.validate().is_err());
    }

    #[test]
    fn streaming_matches_path_based_and_is_deterministic() {
        let (_, s) = torus_sampler(8);
        for r in 0..50 {
            let p = simulate_path(&s, StopRule::Exponential { lambda: 0.5 }, 3, r).unwrap();
            let (f, n) = simulate_local_times(&s, StopRule::Exponential { lambda: 0.5 }, 3, r).unwrap();
            assert_eq!(p.jumps.len(), n);
            let lf = local_times(&p);
            for (site, v) in lf.sorted() {
                assert!((f.get(site) - v).abs() < 1e-12);
            }
            let p2 = simulate_path(&s, StopRule::Exponential { lambda: 0.5 }, 3, r).unwrap();
            assert_eq!(p, p2);
        }
    }

    #[test]
    fn torus_walk_mixes_towards_heat_kernel() {
        let (t, s) = torus_sampler(16);
        let n = 40_000;
        let mut hist = vec![0.0; 16];
        for r in 0..n {
            let p = simulate_path(&s, StopRule::Fixed { t: 100.0 }, 5, r).unwrap();
            let end = p.jumps.last().map(|j| j.1).unwrap_or(Site::ORIGIN);
            hist[t.torus.index(end)] += 1.0 / n as f64;
        }
        let exact = crate::green::heat_kernel_torus(&t, 100.0).unwrap();
        let tv: f64 = hist.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        // statistical floor ≈ Σ sqrt(p/n) / 2 ≈ 0.4 * sqrt(16 / n)
        assert!(tv < 0.02, "tv {tv}");
    }
}
