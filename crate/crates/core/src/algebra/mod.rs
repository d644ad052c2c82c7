//! Sparse polynomials in the monomials `J^alpha q^beta qbar^gamma`.
//!
//! `J_j = (|q_j|^2 - zeta_j) / eps` is an independent symbol inside the
//! algebra; it only becomes a function of `q` at evaluation time. A key
//! `n = (alpha, beta, gamma)` has degree `|n| = |2 alpha + beta + gamma|`.

mod bracket;
mod eval;
mod io;
mod model;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::lattice::{l1_norm, MultiIndex, Site};

pub use bracket::{bracket_bound_margin, lemma_bound, poisson_bracket, BracketMargin};
pub(crate) use bracket::{poisson_bracket_with, BracketKernel};
pub use eval::{evaluate, wirtinger_gradient, wirtinger_gradient_q, CompiledPoly};
pub use io::TermRecord;
pub use model::{
    build_model_hamiltonian, build_original_hamiltonian, nearest_neighbour_coupling,
    short_range_family,
};

/// Exponents of one site inside a monomial key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Factor {
    pub site: Site,
    pub alpha: u16,
    pub beta: u16,
    pub gamma: u16,
}

impl Factor {
    fn is_zero(&self) -> bool {
        self.alpha == 0 && self.beta == 0 && self.gamma == 0
    }

    fn degree(&self) -> u32 {
        2 * self.alpha as u32 + self.beta as u32 + self.gamma as u32
    }
}

/// Canonical key `(alpha, beta, gamma)`: factors sorted by site, none all-zero.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MonoKey {
    factors: SmallVec<[Factor; 4]>,
}

impl MonoKey {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn from_indices(alpha: &MultiIndex, beta: &MultiIndex, gamma: &MultiIndex) -> Self {
        let mut map: BTreeMap<Site, Factor> = BTreeMap::new();
        let mut put = |s: Site, f: &dyn Fn(&mut Factor)| {
            let e = map.entry(s).or_insert(Factor {
                site: s,
                alpha: 0,
                beta: 0,
                gamma: 0,
            });
            f(e);
        };
        for (s, e) in alpha.iter() {
            put(s, &|f| f.alpha += e as u16);
        }
        for (s, e) in beta.iter() {
            put(s, &|f| f.beta += e as u16);
        }
        for (s, e) in gamma.iter() {
            put(s, &|f| f.gamma += e as u16);
        }
        MonoKey {
            factors: map.into_values().filter(|f| !f.is_zero()).collect(),
        }
    }

    /// Builds a key from factors in any order, merging repeated sites.
    pub fn from_factors(factors: impl IntoIterator<Item = Factor>) -> Self {
        let mut v: SmallVec<[Factor; 4]> = factors.into_iter().collect();
        v.sort_by(|a, b| a.site.cmp(&b.site));
        let mut out: SmallVec<[Factor; 4]> = SmallVec::new();
        for f in v {
            match out.last_mut() {
                Some(last) if last.site == f.site => {
                    last.alpha += f.alpha;
                    last.beta += f.beta;
                    last.gamma += f.gamma;
                }
                _ => out.push(f),
            }
        }
        out.retain(|f| !f.is_zero());
        MonoKey { factors: out }
    }

    /// `|q_j|^2`.
    pub fn action(site: Site) -> Self {
        Self::from_factors([Factor {
            site,
            alpha: 0,
            beta: 1,
            gamma: 1,
        }])
    }

    /// `J_j^power`.
    pub fn j_power(site: Site, power: u16) -> Self {
        Self::from_factors([Factor {
            site,
            alpha: power,
            beta: 0,
            gamma: 0,
        }])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn alpha(&self) -> MultiIndex {
        MultiIndex::from_pairs(self.factors.iter().map(|f| (f.site, f.alpha as u32)))
    }

    pub fn beta(&self) -> MultiIndex {
        MultiIndex::from_pairs(self.factors.iter().map(|f| (f.site, f.beta as u32)))
    }

    pub fn gamma(&self) -> MultiIndex {
        MultiIndex::from_pairs(self.factors.iter().map(|f| (f.site, f.gamma as u32)))
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(Factor::degree).sum()
    }

    pub fn alpha_total(&self) -> u32 {
        self.factors.iter().map(|f| f.alpha as u32).sum()
    }

    /// `Delta(n)`: l1 diameter of `supp(alpha + beta + gamma)`.
    pub fn spread(&self) -> u32 {
        let mut best = 0;
        for (i, a) in self.factors.iter().enumerate() {
            for b in &self.factors[i + 1..] {
                best = best.max(a.site.l1_distance(&b.site));
            }
        }
        best
    }

    /// `n^+`: largest l1 radius over the support, zero for the constant key.
    pub fn n_plus(&self) -> u32 {
        self.factors.iter().map(|f| l1_norm(&f.site)).max().unwrap_or(0)
    }

    pub fn support(&self) -> impl Iterator<Item = Site> + '_ {
        self.factors.iter().map(|f| f.site)
    }

    /// `beta == gamma`: the monomial depends on actions (and `J`) only.
    pub fn is_action_only(&self) -> bool {
        self.factors.iter().all(|f| f.beta == f.gamma)
    }

    /// Swaps `beta` and `gamma`.
    pub fn conjugate(&self) -> Self {
        MonoKey {
            factors: self
                .factors
                .iter()
                .map(|f| Factor {
                    beta: f.gamma,
                    gamma: f.beta,
                    ..*f
                })
                .collect(),
        }
    }
}

impl fmt::Debug for MonoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for MonoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for fac in &self.factors {
            for (sym, e) in [("J", fac.alpha), ("q", fac.beta), ("qb", fac.gamma)] {
                if e == 0 {
                    continue;
                }
                if !first {
                    write!(f, " ")?;
                }
                first = false;
                write!(f, "{sym}{}", fac.site)?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
        }
        Ok(())
    }
}

/// Sparse complex polynomial plus a ledger of coefficient mass dropped by truncation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HamPoly {
    terms: BTreeMap<MonoKey, Complex64>,
    dropped_mass: f64,
}

impl HamPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(key: MonoKey, coeff: Complex64) -> Self {
        let mut p = Self::zero();
        p.add_term(key, coeff);
        p
    }

    /// Sums coefficients of repeated keys, then prunes.
    pub fn from_terms(terms: impl IntoIterator<Item = (MonoKey, Complex64)>) -> Self {
        let mut p = Self::zero();
        for (k, c) in terms {
            *p.terms.entry(k).or_default() += c;
        }
        p.prune();
        p
    }

    pub(crate) fn from_hash_map(map: HashMap<MonoKey, Complex64>) -> Self {
        let mut p = HamPoly {
            terms: map.into_iter().collect(),
            dropped_mass: 0.0,
        };
        p.prune();
        p
    }

    /// Only exact cancellations are removed: at small `eps` genuine
    /// coefficients are far below any fixed absolute cutoff.
    fn prune(&mut self) {
        self.terms.retain(|_, c| *c != Complex64::new(0.0, 0.0));
    }

    pub fn add_term(&mut self, key: MonoKey, coeff: Complex64) {
        let c = self.terms.entry(key.clone()).or_default();
        *c += coeff;
        if *c == Complex64::new(0.0, 0.0) {
            self.terms.remove(&key);
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, key: &MonoKey) -> Complex64 {
        self.terms.get(key).copied().unwrap_or_default()
    }

    /// Terms in canonical key order.
    pub fn iter(&self) -> impl Iterator<Item = (&MonoKey, &Complex64)> {
        self.terms.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &MonoKey> {
        self.terms.keys()
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    pub fn with_dropped_mass(mut self, mass: f64) -> Self {
        self.dropped_mass = mass;
        self
    }

    pub fn add(&self, other: &HamPoly) -> HamPoly {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &HamPoly) {
        for (k, c) in &other.terms {
            *self.terms.entry(k.clone()).or_default() += c;
        }
        self.prune();
        self.dropped_mass = self.dropped_mass.max(other.dropped_mass);
    }

    pub fn sub(&self, other: &HamPoly) -> HamPoly {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, factor: Complex64) -> HamPoly {
        let mut out = HamPoly {
            terms: self
                .terms
                .iter()
                .map(|(k, c)| (k.clone(), c * factor))
                .collect(),
            dropped_mass: self.dropped_mass * factor.norm(),
        };
        out.prune();
        out
    }

    pub fn scale_real(&self, factor: f64) -> HamPoly {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn filter(&self, mut keep: impl FnMut(&MonoKey) -> bool) -> HamPoly {
        HamPoly {
            terms: self
                .terms
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, c)| (k.clone(), *c))
                .collect(),
            dropped_mass: 0.0,
        }
    }

    /// Splits into the action-only part `Z` (beta == gamma) and the rest `R`.
    pub fn split_resonant(&self) -> (HamPoly, HamPoly) {
        (
            self.filter(MonoKey::is_action_only),
            self.filter(|k| !k.is_action_only()),
        )
    }

    /// Keeps keys with `|n| <= max_degree` and `Delta(n) <= max_spread`;
    /// returns the kept part and the sup of the dropped coefficients.
    pub fn truncate(&self, max_degree: u32, max_spread: u32) -> (HamPoly, f64) {
        let mut kept = HamPoly::zero();
        let mut ledger: f64 = 0.0;
        for (k, c) in &self.terms {
            if k.degree() <= max_degree && k.spread() <= max_spread {
                kept.terms.insert(k.clone(), *c);
            } else {
                ledger = ledger.max(c.norm());
            }
        }
        kept.dropped_mass = self.dropped_mass.max(ledger);
        (kept, ledger)
    }

    pub fn degree_part(&self, degree: u32) -> HamPoly {
        self.filter(|k| k.degree() == degree)
    }

    pub fn min_degree(&self) -> Option<u32> {
        self.terms.keys().map(MonoKey::degree).min()
    }

    pub fn max_degree(&self) -> Option<u32> {
        self.terms.keys().map(MonoKey::degree).max()
    }

    /// Sup-norm of the coefficients.
    pub fn max_abs(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Coefficientwise complex conjugate with `beta`/`gamma` swapped; equals
    /// `self` for a real-valued polynomial.
    pub fn conjugate(&self) -> HamPoly {
        HamPoly::from_terms(self.terms.iter().map(|(k, c)| (k.conjugate(), c.conj())))
    }

    /// Largest deviation from `coeff(n) == conj(coeff(conj n))`.
    pub fn reality_defect(&self) -> f64 {
        self.sub(&self.conjugate()).max_abs()
    }

    /// Symmetrises to the real-valued polynomial `(P + conj P) / 2`.
    pub fn real_part(&self) -> HamPoly {
        self.add(&self.conjugate()).scale_real(0.5)
    }
}

impl FromIterator<(MonoKey, Complex64)> for HamPoly {
    fn from_iter<I: IntoIterator<Item = (MonoKey, Complex64)>>(iter: I) -> Self {
        HamPoly::from_terms(iter)
    }
}
