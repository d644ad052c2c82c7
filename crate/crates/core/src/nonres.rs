//! Small divisors: thresholds, enumeration of admissible `k`, the
//! non-resonance check and a Monte-Carlo estimate of the resonant measure.

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lattice::{extremal_radii, BoxSpec, KVector, Site};
use crate::media::{frequencies, sample_inner_trial, FrequencyMap, Media};

/// `eta / ((1 + k^-)^{3 sigma} (2 + 10 Delta(k))^{2 d |k|})`.
pub fn nonres_threshold(k: &KVector, eta: f64, sigma: f64, d: usize) -> Result<f64> {
    let radii = extremal_radii(k)?;
    let inner = (1.0 + radii.k_minus as f64).powf(3.0 * sigma);
    let spread = (2.0 + 10.0 * k.spread() as f64).powf((2 * d) as f64 * k.total() as f64);
    Ok(eta / (inner * spread))
}

/// Every nonzero `k` supported in the box with `|k| <= m` and `Delta(k) <= m`,
/// ordered by `|k|`, then `Delta(k)`, then entries.
pub fn enumerate_kvectors(bx: BoxSpec, m: u32) -> Vec<KVector> {
    let sites: Vec<Site> = bx.sites().collect();
    let mut out = Vec::new();
    let mut current: Vec<(Site, i32)> = Vec::new();
    fill(&sites, 0, m as i32, &mut current, &mut |entries| {
        let k = KVector::from_pairs(entries.iter().copied());
        if k.spread() <= m {
            out.push(k);
        }
    });
    out.sort_by(|a, b| {
        (a.total(), a.spread())
            .cmp(&(b.total(), b.spread()))
            .then_with(|| a.cmp(b))
    });
    out
}

fn fill(
    sites: &[Site],
    pos: usize,
    budget: i32,
    current: &mut Vec<(Site, i32)>,
    emit: &mut impl FnMut(&[(Site, i32)]),
) {
    if pos == sites.len() {
        if !current.is_empty() {
            emit(current);
        }
        return;
    }
    fill(sites, pos + 1, budget, current, emit);
    for v in 1..=budget {
        for val in [v, -v] {
            current.push((sites[pos], val));
            fill(sites, pos + 1, budget - v, current, emit);
            current.pop();
        }
    }
}

fn serialize_k<S: Serializer>(k: &KVector, s: S) -> std::result::Result<S::Ok, S::Error> {
    let entries: Vec<(Vec<i32>, i32)> = k.iter().map(|(j, v)| (j.coords().to_vec(), v)).collect();
    entries.serialize(s)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    #[serde(serialize_with = "serialize_k")]
    pub k: KVector,
    pub divisor: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NonResReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
    /// Smallest `divisor / threshold` over all checked `k`.
    pub min_margin: f64,
}

impl NonResReport {
    pub fn is_nonresonant(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The admissible `k` and their thresholds, lowered onto box indices so the
/// same table can be reused across frequency draws.
#[derive(Clone, Debug)]
pub struct NonResTable {
    bx: BoxSpec,
    ks: Vec<KVector>,
    starts: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<f64>,
    thresholds: Vec<f64>,
}

impl NonResTable {
    pub fn new(bx: BoxSpec, eta: f64, m: u32, sigma: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("M must be at least 1".into()));
        }
        let ks = enumerate_kvectors(bx, m);
        let mut starts = Vec::with_capacity(ks.len() + 1);
        let (mut idx, mut val, mut thresholds) = (Vec::new(), Vec::new(), Vec::with_capacity(ks.len()));
        starts.push(0);
        for k in &ks {
            for (j, v) in k.iter() {
                idx.push(bx.index_of(&j).expect("enumerated inside the box"));
                val.push(v as f64);
            }
            starts.push(idx.len());
            thresholds.push(nonres_threshold(k, eta, sigma, bx.dim())?);
        }
        Ok(NonResTable {
            bx,
            ks,
            starts,
            idx,
            val,
            thresholds,
        })
    }

    pub fn len(&self) -> usize {
        self.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ks.is_empty()
    }

    pub fn kvectors(&self) -> &[KVector] {
        &self.ks
    }

    fn divisor(&self, n: usize, omega: &[f64]) -> f64 {
        let (a, b) = (self.starts[n], self.starts[n + 1]);
        self.idx[a..b]
            .iter()
            .zip(&self.val[a..b])
            .map(|(i, v)| v * omega[*i])
            .sum::<f64>()
            .abs()
    }

    pub fn check(&self, omega: &FrequencyMap) -> Result<NonResReport> {
        self.box_matches(omega)?;
        let w = omega.values();
        let mut violations = Vec::new();
        let mut min_margin = f64::INFINITY;
        for (n, k) in self.ks.iter().enumerate() {
            let divisor = self.divisor(n, w);
            let threshold = self.thresholds[n];
            min_margin = min_margin.min(divisor / threshold);
            // Ties count as violations.
            if divisor <= threshold {
                violations.push(Violation {
                    k: k.clone(),
                    divisor,
                    threshold,
                });
            }
        }
        Ok(NonResReport {
            checked: self.ks.len(),
            violations,
            min_margin,
        })
    }

    /// Early-exit variant of [`check`](Self::check).
    pub fn is_resonant(&self, omega: &FrequencyMap) -> Result<bool> {
        self.box_matches(omega)?;
        let w = omega.values();
        Ok((0..self.ks.len()).any(|n| self.divisor(n, w) <= self.thresholds[n]))
    }

    fn box_matches(&self, omega: &FrequencyMap) -> Result<()> {
        if omega.box_spec() != self.bx {
            return Err(Error::InvalidInput("frequency map lives on a different box".into()));
        }
        Ok(())
    }
}

pub fn check_nonresonance(
    omega: &FrequencyMap,
    eta: f64,
    m: u32,
    sigma: f64,
    bx: BoxSpec,
) -> Result<NonResReport> {
    NonResTable::new(bx, eta, m, sigma)?.check(omega)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureResult {
    pub fraction_resonant: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Fraction of inner-parameter draws (media held fixed) whose frequencies
/// violate `(eta, M)`-non-resonance.
#[allow(clippy::too_many_arguments)]
pub fn measure_mc(
    eta: f64,
    m: u32,
    bx: BoxSpec,
    sigma: f64,
    eps: f64,
    media: &Media,
    trials: u64,
    seed: u64,
) -> Result<MeasureResult> {
    if trials < 100 {
        return Err(Error::PreconditionViolated(format!(
            "at least 100 trials needed, got {trials}"
        )));
    }
    if media.box_spec() != bx {
        return Err(Error::InvalidInput("media box mismatch".into()));
    }
    let table = NonResTable::new(bx, eta, m, sigma)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| {
            let zeta = sample_inner_trial(seed, bx, sigma, t);
            let omega = frequencies(media, &zeta, eps)?;
            table.is_resonant(&omega).map(u64::from)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let p = hits as f64 / trials as f64;
    Ok(MeasureResult {
        fraction_resonant: p,
        stderr: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
        seed,
    })
}
