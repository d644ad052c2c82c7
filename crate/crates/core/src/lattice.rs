//! Lattice sites, finite boxes, sparse multi-indices and weighted sup-norms.
//!
//! All computation lives on a finite box `{ j : |j|_inf <= L }` inside `Z^d`.
//! Sites order lexicographically, and every sparse index keeps its entries
//! sorted by site with no stored zeros, so two equal indices are equal
//! structurally and hash identically.

use std::fmt;

use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::state::StateVector;

/// Largest lattice dimension supported by the fixed-size [`Site`] layout.
pub const MAX_DIM: usize = 4;

/// A point of `Z^d`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    dim: u8,
    coords: [i32; MAX_DIM],
}

impl Site {
    pub fn new(coords: &[i32]) -> Self {
        assert!(
            !coords.is_empty() && coords.len() <= MAX_DIM,
            "site dimension must be in 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site {
            dim: coords.len() as u8,
            coords: c,
        }
    }

    pub fn origin(dim: usize) -> Self {
        Site::new(&vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords[..self.dim as usize]
    }

    pub fn l1(&self) -> u32 {
        l1_norm(self)
    }

    /// `<j> = max(|j|_1, 1)`.
    pub fn bracket_radius(&self) -> u32 {
        self.l1().max(1)
    }

    pub fn l1_distance(&self, other: &Site) -> u32 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub fn l1_norm(j: &Site) -> u32 {
    j.coords().iter().map(|c| c.unsigned_abs()).sum()
}

/// The finite box `{ j in Z^d : |j|_inf <= radius }`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxSpec {
    dim: usize,
    radius: u32,
}

impl BoxSpec {
    pub fn new(dim: usize, radius: u32) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidBox(format!(
                "dimension {dim} not in 1..={MAX_DIM}"
            )));
        }
        if radius == 0 {
            return Err(Error::InvalidBox("radius must be positive".into()));
        }
        let side = 2 * radius as u64 + 1;
        if side.checked_pow(dim as u32).is_none_or(|n| n > u32::MAX as u64) {
            return Err(Error::InvalidBox("too many sites".into()));
        }
        Ok(BoxSpec { dim, radius })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn num_sites(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn contains(&self, j: &Site) -> bool {
        j.dim() == self.dim && j.coords().iter().all(|c| c.unsigned_abs() <= self.radius)
    }

    /// Position of `j` in the canonical (lexicographic) site order.
    pub fn index_of(&self, j: &Site) -> Option<usize> {
        if !self.contains(j) {
            return None;
        }
        let r = self.radius as i64;
        let side = self.side() as i64;
        let idx = j
            .coords()
            .iter()
            .fold(0i64, |acc, &c| acc * side + (c as i64 + r));
        Some(idx as usize)
    }

    pub fn site(&self, mut index: usize) -> Site {
        debug_assert!(index < self.num_sites());
        let side = self.side();
        let mut c = [0i32; MAX_DIM];
        for slot in (0..self.dim).rev() {
            c[slot] = (index % side) as i32 - self.radius as i32;
            index /= side;
        }
        Site::new(&c[..self.dim])
    }

    /// Sites in canonical order.
    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.num_sites()).map(move |i| self.site(i))
    }

    /// Sites with `|j|_inf == radius`, where truncation affects the dynamics.
    pub fn is_boundary(&self, j: &Site) -> bool {
        j.coords().iter().any(|c| c.unsigned_abs() == self.radius)
    }
}

/// Largest pairwise l1 distance in a support; zero for an empty or singleton support.
fn spread_of<'a>(sites: impl Iterator<Item = &'a Site> + Clone) -> u32 {
    let mut best = 0;
    for (i, a) in sites.clone().enumerate() {
        for b in sites.clone().skip(i + 1) {
            best = best.max(a.l1_distance(b));
        }
    }
    best
}

/// Sparse `Site -> positive exponent` map in canonical form.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    entries: SmallVec<[(Site, u32); 4]>,
}

impl MultiIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a canonical index, merging repeated sites and dropping zeros.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Site, u32)>) -> Self {
        let mut entries: SmallVec<[(Site, u32); 4]> = pairs.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: SmallVec<[(Site, u32); 4]> = SmallVec::new();
        for (s, e) in entries {
            match out.last_mut() {
                Some(last) if last.0 == s => last.1 += e,
                _ => out.push((s, e)),
            }
        }
        out.retain(|e| e.1 != 0);
        MultiIndex { entries: out }
    }

    pub fn unit(site: Site, exp: u32) -> Self {
        Self::from_pairs([(site, exp)])
    }

    pub fn canonical(&self) -> Self {
        Self::from_pairs(self.entries.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, site: &Site) -> u32 {
        self.entries
            .binary_search_by(|e| e.0.cmp(site))
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, u32)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = &Site> + Clone {
        self.entries.iter().map(|e| &e.0)
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.1).sum()
    }

    pub fn spread(&self) -> u32 {
        spread_of(self.support())
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex::from_pairs(self.iter().chain(other.iter()))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.entries.iter().map(|(s, e)| (s, e))).finish()
    }
}

/// Sparse `Site -> nonzero integer` map, the `k` of the small divisors.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KVector {
    entries: SmallVec<[(Site, i32); 4]>,
}

impl KVector {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Site, i32)>) -> Self {
        let mut entries: SmallVec<[(Site, i32); 4]> = pairs.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: SmallVec<[(Site, i32); 4]> = SmallVec::new();
        for (s, e) in entries {
            match out.last_mut() {
                Some(last) if last.0 == s => last.1 += e,
                _ => out.push((s, e)),
            }
        }
        out.retain(|e| e.1 != 0);
        KVector { entries: out }
    }

    /// `beta - gamma` for a monomial's q and q-bar exponents.
    pub fn difference(beta: &MultiIndex, gamma: &MultiIndex) -> Self {
        Self::from_pairs(
            beta.iter()
                .map(|(s, e)| (s, e as i32))
                .chain(gamma.iter().map(|(s, e)| (s, -(e as i32)))),
        )
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Site, i32)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = &Site> + Clone {
        self.entries.iter().map(|e| &e.0)
    }

    /// `|k| = sum |k_j|`.
    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.1.unsigned_abs()).sum()
    }

    pub fn spread(&self) -> u32 {
        spread_of(self.support())
    }
}

impl fmt::Debug for KVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.entries.iter().map(|(s, e)| (s, e))).finish()
    }
}

impl fmt::Display for KVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (s, k)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{s}: {k}")?;
        }
        write!(f, "}}")
    }
}

/// Anything with a finite set of lattice sites as support.
pub trait Supported {
    fn support_sites(&self) -> Vec<Site>;
}

impl Supported for MultiIndex {
    fn support_sites(&self) -> Vec<Site> {
        self.support().copied().collect()
    }
}

impl Supported for KVector {
    fn support_sites(&self) -> Vec<Site> {
        self.support().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexStats {
    pub supp: Vec<Site>,
    pub spread: u32,
    pub total: u32,
}

pub fn index_stats(a: &MultiIndex) -> IndexStats {
    IndexStats {
        supp: a.support().copied().collect(),
        spread: a.spread(),
        total: a.total(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Radii {
    /// Smallest l1 radius over the support (`k^-`).
    pub k_minus: u32,
    /// Largest l1 radius over the support (`n^+`).
    pub n_plus: u32,
}

pub fn extremal_radii<S: Supported + ?Sized>(a: &S) -> Result<Radii> {
    let sites = a.support_sites();
    let k_minus = sites.iter().map(l1_norm).min().ok_or(Error::EmptySupport)?;
    let n_plus = sites.iter().map(l1_norm).max().ok_or(Error::EmptySupport)?;
    Ok(Radii { k_minus, n_plus })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormVariant {
    /// Weight `(1 + |j|_1)^sigma`.
    Plain,
    /// Weight `(1 + <j>)^sigma` with `<j> = max(|j|_1, 1)`.
    Tilde,
}

impl NormVariant {
    pub fn weight(self, j: &Site, sigma: f64) -> f64 {
        let r = match self {
            NormVariant::Plain => j.l1(),
            NormVariant::Tilde => j.bracket_radius(),
        };
        (1.0 + r as f64).powf(sigma)
    }
}

pub fn sigma_norm(q: &StateVector, sigma: f64, variant: NormVariant) -> f64 {
    q.iter()
        .map(|(j, z)| z.norm() * variant.weight(&j, sigma))
        .fold(0.0, f64::max)
}
