use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;

use super::{Factor, HamPoly, MonoKey};

/// Per-site coefficient rule used by the bracket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BracketKernel {
    Canonical,
    /// Symmetric q/qbar term; only used to check that the self-test catches it.
    CorruptedSign,
}

/// Pairs per rayon task; fixed so the merge order never depends on the thread count.
const CHUNK: usize = 64;

/// `{H, G} = i sum_j (dH/dq_j dG/dqbar_j - dH/dqbar_j dG/dq_j)` on monomial keys,
/// with `dJ_j/dq_j = qbar_j / eps` and `dJ_j/dqbar_j = q_j / eps`.
pub fn poisson_bracket(h: &HamPoly, g: &HamPoly, eps: f64) -> HamPoly {
    poisson_bracket_with(h, g, eps, BracketKernel::Canonical)
}

pub(crate) fn poisson_bracket_with(
    h: &HamPoly,
    g: &HamPoly,
    eps: f64,
    kernel: BracketKernel,
) -> HamPoly {
    let hs: Vec<(&MonoKey, &Complex64)> = h.iter().collect();
    let gs: Vec<(&MonoKey, &Complex64)> = g.iter().collect();
    let inv_eps = 1.0 / eps;

    let accumulate = |chunk: &[(&MonoKey, &Complex64)]| {
        let mut acc: HashMap<MonoKey, Complex64> = HashMap::new();
        for (mu, hc) in chunk {
            for (m, gc) in &gs {
                let w = Complex64::i() * **hc * **gc;
                pair_terms(mu, m, inv_eps, kernel, |key, c| {
                    *acc.entry(key).or_default() += w * c;
                });
            }
        }
        acc
    };

    let partials: Vec<HashMap<MonoKey, Complex64>> = if hs.len() * gs.len() > 4096 {
        hs.par_chunks(CHUNK).map(accumulate).collect()
    } else {
        hs.chunks(CHUNK).map(accumulate).collect()
    };

    let mut total: HashMap<MonoKey, Complex64> = HashMap::new();
    for part in partials {
        // Each chunk's map is drained in canonical key order.
        let mut entries: Vec<_> = part.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, c) in entries {
            *total.entry(k).or_default() += c;
        }
    }
    HamPoly::from_hash_map(total)
}

/// Emits `(key, c)` such that `{mu, m} = i * sum c * key` (unit coefficients).
fn pair_terms(
    mu: &MonoKey,
    m: &MonoKey,
    inv_eps: f64,
    kernel: BracketKernel,
    mut emit: impl FnMut(MonoKey, f64),
) {
    let (a, b) = (mu.factors(), m.factors());
    // Only sites present in both monomials contribute.
    let mut common: smallvec::SmallVec<[(Factor, Factor); 4]> = smallvec::SmallVec::new();
    let (mut i, mut k) = (0, 0);
    while i < a.len() && k < b.len() {
        match a[i].site.cmp(&b[k].site) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => k += 1,
            std::cmp::Ordering::Equal => {
                common.push((a[i], b[k]));
                i += 1;
                k += 1;
            }
        }
    }
    if common.is_empty() {
        return;
    }
    let product = MonoKey::from_factors(a.iter().chain(b.iter()).copied());

    for (hf, gf) in common {
        let (ah, bh, gh) = (hf.alpha as i64, hf.beta as i64, hf.gamma as i64);
        let (at, bt, gt) = (gf.alpha as i64, gf.beta as i64, gf.gamma as i64);

        let j_coeff = ah * (gt - bt) + at * (bh - gh);
        if j_coeff != 0 {
            emit(
                lower(&product, hf.site, 1, 0, 0),
                inv_eps * j_coeff as f64,
            );
        }

        let q_coeff = match kernel {
            BracketKernel::Canonical => bh * gt - bt * gh,
            BracketKernel::CorruptedSign => bh * gt + bt * gh,
        };
        if q_coeff != 0 {
            emit(lower(&product, hf.site, 0, 1, 1), q_coeff as f64);
        }
    }
}

fn lower(key: &MonoKey, site: crate::lattice::Site, da: u16, db: u16, dg: u16) -> MonoKey {
    let mut out = key.clone();
    for f in out.factors.iter_mut() {
        if f.site == site {
            f.alpha -= da;
            f.beta -= db;
            f.gamma -= dg;
        }
    }
    out.factors.retain(|f| !f.is_zero());
    out
}

/// Right-hand side of the pairwise bracket estimate
/// `2 eps^-1 2^|n| max(1, Delta(mu) + Delta(m)) (|n| + 2)^2 |H(mu)| |G(m)|`.
///
/// The spread factor is floored at one: for two single-site monomials on the
/// same site the unfloored form is zero while the bracket is not.
pub fn lemma_bound(mu: &MonoKey, m: &MonoKey, n: &MonoKey, eps: f64, h_abs: f64, g_abs: f64) -> f64 {
    let nd = n.degree() as f64;
    let spread = (mu.spread() + m.spread()).max(1) as f64;
    2.0 / eps * 2f64.powf(nd) * spread * (nd + 2.0).powi(2) * h_abs * g_abs
}

#[derive(Clone, Debug, PartialEq)]
pub struct BracketMargin {
    pub mu: MonoKey,
    pub m: MonoKey,
    pub n: MonoKey,
    /// `|{H,G}(n)|` over [`lemma_bound`]; must not exceed one.
    pub ratio: f64,
}

/// Per-output-key ratios of the bracket to its pairwise bound, over every
/// pair of input terms.
pub fn bracket_bound_margin(h: &HamPoly, g: &HamPoly, eps: f64) -> Vec<BracketMargin> {
    let mut out = Vec::new();
    for (mu, hc) in h.iter() {
        for (m, gc) in g.iter() {
            let pair = poisson_bracket(
                &HamPoly::monomial(mu.clone(), *hc),
                &HamPoly::monomial(m.clone(), *gc),
                eps,
            );
            for (n, c) in pair.iter() {
                let rhs = lemma_bound(mu, m, n, eps, hc.norm(), gc.norm());
                out.push(BracketMargin {
                    mu: mu.clone(),
                    m: m.clone(),
                    n: n.clone(),
                    ratio: c.norm() / rhs,
                });
            }
        }
    }
    out
}
