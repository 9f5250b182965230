//! Lattice geometry shared by every module: dimensions, sites, and
//! finite-box fields on `[-R, R]^d`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{PamError, Result};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 5;

/// Lattice dimension `d`, `1 ≤ d ≤ 5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Dimension(u8);

impl Dimension {
    pub fn new(d: usize) -> Result<Self> {
        if (1..=MAX_DIM).contains(&d) {
            Ok(Dimension(d as u8))
        } else {
            Err(PamError::domain(format!("dimension {d} outside 1..={MAX_DIM}")))
        }
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Number of nearest neighbours, `2d`.
    #[inline]
    pub fn coordination(self) -> usize {
        2 * self.get()
    }

    /// Rejects `d ≤ 2` for quantities that only exist in transient dimensions.
    pub fn require_transient(self, what: &str) -> Result<()> {
        if self.get() >= 3 {
            Ok(())
        } else {
            Err(PamError::domain(format!("{what} requires d >= 3 (got d = {})", self.0)))
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A point of `Z^d`. Coordinates beyond the active dimension are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Site(pub [i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    pub fn from_coords(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "too many coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    pub fn coords(&self, d: Dimension) -> &[i32] {
        &self.0[..d.get()]
    }

    /// Neighbour number `k` in `0..2d`: axis `k / 2`, direction `+1` for even `k`.
    #[inline]
    pub fn neighbor(mut self, k: usize) -> Site {
        let axis = k / 2;
        self.0[axis] += if k % 2 == 0 { 1 } else { -1 };
        self
    }

    pub fn neighbors(self, d: Dimension) -> impl Iterator<Item = Site> {
        (0..d.coordination()).map(move |k| self.neighbor(k))
    }

    #[inline]
    pub fn sup_norm(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn l1_distance(&self, other: &Site) -> i32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn squared_norm(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn is_neighbor(&self, other: &Site) -> bool {
        self.l1_distance(other) == 1
    }

    pub fn negated(mut self) -> Site {
        for c in self.0.iter_mut() {
            *c = -*c;
        }
        self
    }

    pub fn offset(mut self, other: &Site) -> Site {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += b;
        }
        self
    }
}

impl Serialize for Site {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        // trailing zeros are dimension padding
        let last = self.0.iter().rposition(|&c| c != 0).map_or(1, |i| i + 1);
        self.0[..last].serialize(s)
    }
}

/// A real number or `+∞`, kept as a tag rather than an IEEE overflow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub fn is_infinite(self) -> bool {
        matches!(self, ExtReal::Infinite)
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    /// The value as `f64`, mapping the tag to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::Infinite => None,
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

/// Real-valued field on the box `[-radius, radius]^d`, zero outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeField {
    dim: Dimension,
    radius: i32,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(dim: Dimension, radius: i32) -> Self {
        assert!(radius >= 0, "negative box radius");
        let side = (2 * radius + 1) as usize;
        LatticeField { dim, radius, values: vec![0.0; side.pow(dim.get() as u32)] }
    }

    pub fn from_fn(dim: Dimension, radius: i32, mut f: impl FnMut(Site) -> f64) -> Self {
        let mut field = Self::zeros(dim, radius);
        for i in 0..field.values.len() {
            field.values[i] = f(field.site_of(i));
        }
        field
    }

    pub fn dim(&self) -> Dimension {
        self.dim
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn contains(&self, site: &Site) -> bool {
        site.coords(self.dim).iter().all(|c| c.abs() <= self.radius)
            && site.0[self.dim.get()..].iter().all(|&c| c == 0)
    }

    pub fn index_of(&self, site: &Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let side = 2 * self.radius as usize + 1;
        let mut idx = 0usize;
        for &c in site.coords(self.dim).iter().rev() {
            idx = idx * side + (c + self.radius) as usize;
        }
        Some(idx)
    }

    pub fn site_of(&self, mut index: usize) -> Site {
        let side = 2 * self.radius as usize + 1;
        let mut s = Site::ORIGIN;
        for a in 0..self.dim.get() {
            s.0[a] = (index % side) as i32 - self.radius;
            index /= side;
        }
        s
    }

    /// Value at `site`; zero outside the box.
    pub fn get(&self, site: &Site) -> f64 {
        self.index_of(site).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, site: &Site, value: f64) {
        let i = self.index_of(site).expect("site outside field box");
        self.values[i] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.site_of(i), v))
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scales to unit ℓ² norm. Returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.l2_norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        n
    }

    /// Sites with all coordinates at most `radius / 2` in absolute value.
    pub fn is_inner_half(&self, site: &Site) -> bool {
        site.sup_norm() <= self.radius / 2
    }

    /// `(Δf)(x) = Σ_{y ~ x} [f(y) − f(x)]` with `f = 0` outside the box.
    pub fn laplacian_at(&self, site: &Site) -> f64 {
        let fx = self.get(site);
        site.neighbors(self.dim).map(|y| self.get(&y) - fx).sum()
    }
}
