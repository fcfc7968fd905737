//! Sites of `Z^d`, the discrete torus `T_R`, and finitely supported lattice
//! functions with real-exponent norms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 4;

/// A point of `Z^d` for `d <= MAX_DIM`; unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site(pub [i64; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn from_slice(coords: &[i64]) -> Site {
        assert!(coords.len() <= MAX_DIM, "dimension exceeds MAX_DIM");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Unit vector along axis `i`.
    pub fn unit(i: usize) -> Site {
        let mut c = [0; MAX_DIM];
        c[i] = 1;
        Site(c)
    }

    #[inline]
    pub fn add(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a += b;
        }
        Site(c)
    }

    #[inline]
    pub fn sub(self, other: Site) -> Site {
        let mut c = self.0;
        for (a, b) in c.iter_mut().zip(other.0) {
            *a -= b;
        }
        Site(c)
    }

    #[inline]
    pub fn norm2(self) -> i64 {
        self.0.iter().map(|c| c * c).sum()
    }

    #[inline]
    pub fn norm(self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    pub fn coords(&self, d: usize) -> &[i64] {
        &self.0[..d]
    }

    /// `a;b;c` rendering used in CSV output.
    pub fn render(&self, d: usize) -> String {
        self.coords(d)
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(";")
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Site{:?}", self.0)
    }
}

/// All sites of `{0..n-1}^d` in lexicographic order.
pub fn box_sites(d: usize, n: usize) -> Vec<Site> {
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut c = [0i64; MAX_DIM];
            for slot in c.iter_mut().take(d) {
                *slot = (idx % n) as i64;
                idx /= n;
            }
            Site(c)
        })
        .collect()
}

/// Sites with Euclidean norm at most `radius`, with or without the origin.
pub fn ball_sites(d: usize, radius: f64, include_origin: bool) -> Vec<Site> {
    let r = radius.floor() as i64;
    let side = (2 * r + 1) as usize;
    let r2 = radius * radius;
    box_sites(d, side)
        .into_iter()
        .map(|s| {
            let mut c = s.0;
            for slot in c.iter_mut().take(d) {
                *slot -= r;
            }
            Site(c)
        })
        .filter(|s| (s.norm2() as f64) <= r2 + 1e-9)
        .filter(|s| include_origin || *s != Site::ORIGIN)
        .collect()
}

/// Which space a field or function lives on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "space", rename_all = "lowercase")]
pub enum SpaceTag {
    #[default]
    Free,
    Torus { side: usize },
}

/// The discrete torus `T_R = (Z / R Z)^d` with sites indexed `0..R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Torus {
    pub d: usize,
    pub side: usize,
    cos_table: Vec<f64>,
}

impl Torus {
    pub fn new(d: usize, side: usize) -> Result<Torus> {
        if d == 0 || d > MAX_DIM {
            return Err(Error::param("d", format!("must lie in 1..={MAX_DIM}, got {d}")));
        }
        if side == 0 {
            return Err(Error::param("R", "torus side must be positive"));
        }
        let cos_table = (0..side)
            .map(|m| (2.0 * std::f64::consts::PI * m as f64 / side as f64).cos())
            .collect();
        Ok(Torus { d, side, cos_table })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.side.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tag(&self) -> SpaceTag {
        SpaceTag::Torus { side: self.side }
    }

    /// Index of the residue class of `site`.
    #[inline]
    pub fn index(&self, site: Site) -> usize {
        let r = self.side as i64;
        let mut idx = 0usize;
        for i in (0..self.d).rev() {
            idx = idx * self.side + site.0[i].rem_euclid(r) as usize;
        }
        idx
    }

    /// Representative of index `idx` in `[0, R)^d`.
    #[inline]
    pub fn site(&self, mut idx: usize) -> Site {
        let mut c = [0i64; MAX_DIM];
        for slot in c.iter_mut().take(self.d) {
            *slot = (idx % self.side) as i64;
            idx /= self.side;
        }
        Site(c)
    }

    /// Minimal-image representative of index `idx` in `(-R/2, R/2]^d`.
    pub fn min_image(&self, idx: usize) -> Site {
        let r = self.side as i64;
        let mut s = self.site(idx);
        for slot in s.0.iter_mut().take(self.d) {
            if 2 * *slot > r {
                *slot -= r;
            }
        }
        s
    }

    #[inline]
    pub fn add(&self, a: usize, b: usize) -> usize {
        self.index(self.site(a).add(self.site(b)))
    }

    #[inline]
    pub fn sub(&self, a: usize, b: usize) -> usize {
        self.index(self.site(a).sub(self.site(b)))
    }

    /// `cos(2π k·x / R)` via an exact integer phase lookup.
    #[inline]
    pub fn cos_phase(&self, k: usize, x: usize) -> f64 {
        let ks = self.site(k);
        let xs = self.site(x);
        let mut phase = 0i64;
        for i in 0..self.d {
            phase += ks.0[i] * xs.0[i];
        }
        self.cos_table[phase.rem_euclid(self.side as i64) as usize]
    }

    /// Dense `R^d x R^d` table of `cos(2π k·x / R)`.
    pub fn cos_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            for x in 0..n {
                m[k * n + x] = self.cos_phase(k, x);
            }
        }
        m
    }

    /// Circulant convolution `out(x) = Σ_y kernel(x - y) v(y)`.
    pub fn convolve(&self, kernel: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.len();
        let diff = self.difference_table();
        (0..n)
            .map(|x| (0..n).map(|y| kernel[diff[x * n + y]] * v[y]).sum())
            .collect()
    }

    /// Table with entry `[x * n + y] = index(x - y)`.
    pub fn difference_table(&self) -> Vec<usize> {
        let n = self.len();
        let mut t = vec![0usize; n * n];
        for x in 0..n {
            for y in 0..n {
                t[x * n + y] = self.sub(x, y);
            }
        }
        t
    }
}

/// Conjugate Hölder exponent `p / (p - 1)`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `(Σ |v|^p)^{1/p}` for real `p >= 1`.
pub fn p_norm(values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    values
        .iter()
        .map(|v| v.abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

/// A finitely supported real function on `Z^d` or on a torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeFunction {
    pub d: usize,
    pub space: SpaceTag,
    pub sites: Vec<Site>,
    pub values: Vec<f64>,
}

impl LatticeFunction {
    pub fn new(d: usize, space: SpaceTag, sites: Vec<Site>, values: Vec<f64>) -> Result<Self> {
        if sites.len() != values.len() {
            return Err(Error::param(
                "LatticeFunction",
                format!("{} sites but {} values", sites.len(), values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("LatticeFunction", "non-finite value"));
        }
        Ok(LatticeFunction {
            d,
            space,
            sites,
            values,
        })
    }

    pub fn delta(d: usize, space: SpaceTag, at: Site) -> Self {
        LatticeFunction {
            d,
            space,
            sites: vec![at],
            values: vec![1.0],
        }
    }

    pub fn p_norm(&self, p: f64) -> f64 {
        p_norm(&self.values, p)
    }

    /// Rescale so that the `p`-norm equals one. No-op on the zero function.
    pub fn normalized(mut self, p: f64) -> Self {
        let n = self.p_norm(p);
        if n > 0.0 {
            for v in &mut self.values {
                *v /= n;
            }
        }
        self
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("site,value\n");
        for (s, v) in self.sites.iter().zip(&self.values) {
            out.push_str(&format!("{},{}\n", s.render(self.d), crate::output::sig12(*v)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_index_roundtrip_and_min_image() {
        let t = Torus::new(2, 5).unwrap();
        for i in 0..t.len() {
            assert_eq!(t.index(t.site(i)), i);
            let m = t.min_image(i);
            assert_eq!(t.index(m), i);
            assert!(m.0[..2].iter().all(|c| 2 * c.abs() <= 5));
        }
        assert_eq!(t.index(Site::from_slice(&[-1, 6])), t.index(Site::from_slice(&[4, 1])));
    }

    #[test]
    fn ball_excludes_origin_and_respects_radius() {
        let b = ball_sites(2, 2.0, false);
        assert_eq!(b.len(), 12);
        assert!(b.iter().all(|s| s.norm() <= 2.0 && *s != Site::ORIGIN));
    }

    #[test]
    fn conjugate_of_2q() {
        let q = 2.5;
        let p = conjugate_exponent(2.0 * q);
        assert!((p - 2.0 * q / (2.0 * q - 1.0)).abs() < 1e-15);
        assert!((1.0 / p + 1.0 / (2.0 * q) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norms_decrease_in_p() {
        let v = [0.3, -1.2, 2.0, 0.0, 0.7];
        let mut last = f64::INFINITY;
        for p in [1.0, 1.5, 2.0, 4.0, 8.0] {
            let n = p_norm(&v, p);
            assert!(n <= last + 1e-14);
            last = n;
        }
        assert_eq!(p_norm(&v, f64::INFINITY), 2.0);
    }
}
