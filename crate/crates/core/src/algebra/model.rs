use num_complex::Complex64;

use super::{Factor, HamPoly, MonoKey};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, Site};
use crate::media::{frequencies, InnerParams, Media};

fn validate_perturbation(bx: BoxSpec, r: &HamPoly) -> Result<()> {
    for (key, c) in r.iter() {
        let bad = |why: &str| Err(Error::InvalidPerturbation(format!("{key}: {why}")));
        if key.alpha_total() != 0 {
            return bad("contains J factors");
        }
        if key.degree() != 6 {
            return bad("degree is not 6");
        }
        if key.spread() > 1 {
            return bad("spread exceeds 1");
        }
        if c.norm() > 1.0 {
            return bad("coefficient modulus exceeds 1");
        }
        if !key.support().all(|j| bx.contains(&j)) {
            return bad("support leaves the box");
        }
    }
    Ok(())
}

/// The rescaled Hamiltonian `D + Jcal + eps^2 R` with
/// `D = sum omega_j |q_j|^2` and `Jcal = (eps^2 / 2) sum J_j^2`.
pub fn build_model_hamiltonian(
    bx: BoxSpec,
    eps: f64,
    r: &HamPoly,
    zeta: &InnerParams,
    media: &Media,
) -> Result<HamPoly> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1)")));
    }
    if media.box_spec() != bx || zeta.box_spec() != bx {
        return Err(Error::InvalidInput("media/zeta box mismatch".into()));
    }
    validate_perturbation(bx, r)?;
    let omega = frequencies(media, zeta, eps)?;
    let mut terms: Vec<(MonoKey, Complex64)> = Vec::new();
    for (j, w) in bx.sites().zip(omega.values()) {
        terms.push((MonoKey::action(j), Complex64::new(*w, 0.0)));
        terms.push((MonoKey::j_power(j, 2), Complex64::new(eps * eps / 2.0, 0.0)));
    }
    let mut h = HamPoly::from_terms(terms);
    h.add_assign(&r.scale_real(eps * eps));
    Ok(h)
}

/// The unscaled Hamiltonian `sum v_j |q_j|^2 + (1/2) sum |q_j|^4 + R`.
///
/// `R` is validated like [`build_model_hamiltonian`] unless `unchecked` is set.
pub fn build_original_hamiltonian(
    bx: BoxSpec,
    media: &Media,
    r: &HamPoly,
    unchecked: bool,
) -> Result<HamPoly> {
    if media.box_spec() != bx {
        return Err(Error::InvalidInput("media box mismatch".into()));
    }
    if !unchecked {
        validate_perturbation(bx, r)?;
    }
    let mut terms: Vec<(MonoKey, Complex64)> = Vec::new();
    for (j, v) in bx.sites().zip(media.values()) {
        terms.push((MonoKey::action(j), Complex64::new(*v, 0.0)));
        terms.push((
            MonoKey::from_factors([Factor {
                site: j,
                alpha: 0,
                beta: 2,
                gamma: 2,
            }]),
            Complex64::new(0.5, 0.0),
        ));
    }
    let mut h = HamPoly::from_terms(terms);
    h.add_assign(r);
    Ok(h)
}

fn neighbours_forward(bx: BoxSpec, j: &Site) -> Vec<Site> {
    let mut out = Vec::new();
    for axis in 0..bx.dim() {
        let mut c = j.coords().to_vec();
        c[axis] += 1;
        let s = Site::new(&c);
        if bx.contains(&s) {
            out.push(s);
        }
    }
    out
}

/// Every `q^beta qbar^gamma` with `|beta + gamma| = 6` and spread at most one
/// inside the box, each with coefficient `coeff`.
pub fn short_range_family(bx: BoxSpec, coeff: f64) -> HamPoly {
    let c = Complex64::new(coeff, 0.0);
    let mut terms = Vec::new();
    for j in bx.sites() {
        for b in 0..=6u16 {
            terms.push((
                MonoKey::from_factors([Factor {
                    site: j,
                    alpha: 0,
                    beta: b,
                    gamma: 6 - b,
                }]),
                c,
            ));
        }
        for nb in neighbours_forward(bx, &j) {
            // Split the six exponents over (beta_j, gamma_j, beta_nb, gamma_nb),
            // both sites present.
            for b1 in 0..=6u16 {
                for g1 in 0..=(6 - b1) {
                    for b2 in 0..=(6 - b1 - g1) {
                        let g2 = 6 - b1 - g1 - b2;
                        if b1 + g1 == 0 || b2 + g2 == 0 {
                            continue;
                        }
                        terms.push((
                            MonoKey::from_factors([
                                Factor {
                                    site: j,
                                    alpha: 0,
                                    beta: b1,
                                    gamma: g1,
                                },
                                Factor {
                                    site: nb,
                                    alpha: 0,
                                    beta: b2,
                                    gamma: g2,
                                },
                            ]),
                            c,
                        ));
                    }
                }
            }
        }
    }
    HamPoly::from_terms(terms)
}

/// `sum_{|i - j|_1 = 1} coeff (q_i^2 qbar_i qbar_j |q_j|^2 + c.c.)`, a real
/// degree-6 nearest-neighbour coupling with no action-only part.
pub fn nearest_neighbour_coupling(bx: BoxSpec, coeff: f64) -> HamPoly {
    let c = Complex64::new(coeff, 0.0);
    let mut terms = Vec::new();
    for i in bx.sites() {
        for j in neighbours_forward(bx, &i) {
            let key = MonoKey::from_factors([
                Factor {
                    site: i,
                    alpha: 0,
                    beta: 2,
                    gamma: 1,
                },
                Factor {
                    site: j,
                    alpha: 0,
                    beta: 1,
                    gamma: 2,
                },
            ]);
            terms.push((key.conjugate(), c));
            terms.push((key, c));
        }
    }
    HamPoly::from_terms(terms)
}
