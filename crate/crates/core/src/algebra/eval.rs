use std::collections::HashMap;

use num_complex::Complex64;
use smallvec::SmallVec;

use super::HamPoly;
use crate::error::{Error, Result};
use crate::lattice::BoxSpec;
use crate::media::InnerParams;
use crate::state::StateVector;

#[derive(Clone, Copy, Debug)]
struct CFactor {
    idx: u32,
    alpha: u16,
    beta: u16,
    gamma: u16,
}

#[derive(Clone, Debug)]
struct CTerm {
    coeff: Complex64,
    /// Indices into the shared factor table.
    factors: SmallVec<[u32; 4]>,
}

/// A polynomial lowered onto box indices for repeated evaluation.
///
/// `J_j` is substituted as `(|q_j|^2 - zeta_j) / eps`, so the compiled form
/// carries `zeta` and `eps`.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    bx: BoxSpec,
    terms: Vec<CTerm>,
    // Distinct single-site factors; terms of a coupled polynomial share most of them.
    table: Vec<CFactor>,
    max_alpha: usize,
    max_q: usize,
    zeta: Vec<f64>,
    inv_eps: f64,
}

struct Powers {
    stride_q: usize,
    stride_j: usize,
    q: Vec<Complex64>,
    qb: Vec<Complex64>,
    j: Vec<f64>,
    amps: Vec<Complex64>,
}

impl CompiledPoly {
    pub fn new(p: &HamPoly, bx: BoxSpec, zeta: &[f64], eps: f64) -> Result<Self> {
        if zeta.len() != bx.num_sites() {
            return Err(Error::InvalidInput("zeta does not match the box".into()));
        }
        let mut terms = Vec::with_capacity(p.len());
        let mut table: Vec<CFactor> = Vec::new();
        let mut slots: HashMap<(u32, u16, u16, u16), u32> = HashMap::new();
        let (mut max_alpha, mut max_q) = (0usize, 0usize);
        for (key, coeff) in p.iter() {
            let mut factors = SmallVec::new();
            for f in key.factors() {
                let idx = bx.index_of(&f.site).ok_or_else(|| {
                    Error::InvalidInput(format!("monomial {key} leaves the box"))
                })? as u32;
                max_alpha = max_alpha.max(f.alpha as usize);
                max_q = max_q.max(f.beta.max(f.gamma) as usize);
                let slot = *slots.entry((idx, f.alpha, f.beta, f.gamma)).or_insert_with(|| {
                    table.push(CFactor {
                        idx,
                        alpha: f.alpha,
                        beta: f.beta,
                        gamma: f.gamma,
                    });
                    table.len() as u32 - 1
                });
                factors.push(slot);
            }
            terms.push(CTerm {
                coeff: *coeff,
                factors,
            });
        }
        Ok(CompiledPoly {
            bx,
            terms,
            table,
            max_alpha,
            max_q,
            zeta: zeta.to_vec(),
            inv_eps: 1.0 / eps,
        })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn powers(&self, amps: &[Complex64]) -> Powers {
        let n = amps.len();
        let sq = self.max_q + 1;
        let sj = self.max_alpha + 1;
        let mut q = vec![Complex64::new(1.0, 0.0); n * sq];
        let mut qb = vec![Complex64::new(1.0, 0.0); n * sq];
        let mut j = vec![1.0; n * sj];
        for (i, z) in amps.iter().enumerate() {
            for k in 1..sq {
                q[i * sq + k] = q[i * sq + k - 1] * z;
                qb[i * sq + k] = qb[i * sq + k - 1] * z.conj();
            }
            let jv = (z.norm_sqr() - self.zeta[i]) * self.inv_eps;
            for k in 1..sj {
                j[i * sj + k] = j[i * sj + k - 1] * jv;
            }
        }
        Powers {
            stride_q: sq,
            stride_j: sj,
            q,
            qb,
            j,
            amps: amps.to_vec(),
        }
    }

    pub fn eval(&self, amps: &[Complex64]) -> Complex64 {
        let pw = self.powers(amps);
        let fv: Vec<Complex64> = self.table.iter().map(|f| factor_value(&pw, f)).collect();
        let mut total = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut prod = t.coeff;
            for &k in &t.factors {
                prod *= fv[k as usize];
            }
            total += prod;
        }
        total
    }

    /// Accumulates `dP/dqbar_j` (or `dP/dq_j` when `wrt_q`) into `out`.
    fn gradient_into(&self, amps: &[Complex64], out: &mut [Complex64], wrt_q: bool) {
        assert_eq!(out.len(), amps.len());
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        let pw = self.powers(amps);
        let fv: Vec<Complex64> = self.table.iter().map(|f| factor_value(&pw, f)).collect();
        let fd: Vec<Complex64> = self
            .table
            .iter()
            .map(|f| factor_derivative(&pw, f, self.inv_eps, wrt_q))
            .collect();
        let site = |k: u32| self.table[k as usize].idx as usize;
        for t in &self.terms {
            match t.factors[..] {
                [a] => out[site(a)] += t.coeff * fd[a as usize],
                [a, b] => {
                    let (a, b) = (a as usize, b as usize);
                    out[site(a as u32)] += t.coeff * fd[a] * fv[b];
                    out[site(b as u32)] += t.coeff * fv[a] * fd[b];
                }
                _ => {
                    for (i, &k) in t.factors.iter().enumerate() {
                        let d = fd[k as usize];
                        if d == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        let mut rest = t.coeff;
                        for (l, &m) in t.factors.iter().enumerate() {
                            if l != i {
                                rest *= fv[m as usize];
                            }
                        }
                        out[site(k)] += rest * d;
                    }
                }
            }
        }
    }

    pub fn grad_qbar_into(&self, amps: &[Complex64], out: &mut [Complex64]) {
        self.gradient_into(amps, out, false);
    }

    pub fn grad_q_into(&self, amps: &[Complex64], out: &mut [Complex64]) {
        self.gradient_into(amps, out, true);
    }

    pub fn grad_qbar(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); amps.len()];
        self.grad_qbar_into(amps, &mut out);
        out
    }

    pub fn grad_q(&self, amps: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); amps.len()];
        self.grad_q_into(amps, &mut out);
        out
    }
}

#[inline]
fn factor_value(pw: &Powers, f: &CFactor) -> Complex64 {
    let i = f.idx as usize;
    pw.q[i * pw.stride_q + f.beta as usize]
        * pw.qb[i * pw.stride_q + f.gamma as usize]
        * pw.j[i * pw.stride_j + f.alpha as usize]
}

/// Derivative of `J^a q^b qbar^c` at one site.
#[inline]
fn factor_derivative(pw: &Powers, f: &CFactor, inv_eps: f64, wrt_q: bool) -> Complex64 {
    let i = f.idx as usize;
    let (sq, sj) = (pw.stride_q, pw.stride_j);
    let (a, b, c) = (f.alpha as usize, f.beta as usize, f.gamma as usize);
    let z = pw.amps[i];
    let mut d = Complex64::new(0.0, 0.0);
    if a > 0 {
        // dJ/dqbar = q / eps, dJ/dq = qbar / eps
        let chain = if wrt_q { z.conj() } else { z };
        d += chain
            * (a as f64 * inv_eps * pw.j[i * sj + a - 1])
            * pw.q[i * sq + b]
            * pw.qb[i * sq + c];
    }
    let jv = pw.j[i * sj + a];
    if wrt_q {
        if b > 0 {
            d += pw.q[i * sq + b - 1] * pw.qb[i * sq + c] * (b as f64 * jv);
        }
    } else if c > 0 {
        d += pw.q[i * sq + b] * pw.qb[i * sq + c - 1] * (c as f64 * jv);
    }
    d
}

pub fn evaluate(p: &HamPoly, q: &StateVector, zeta: &InnerParams, eps: f64) -> Result<Complex64> {
    let cp = CompiledPoly::new(p, q.box_spec(), zeta.values(), eps)?;
    Ok(cp.eval(q.amplitudes()))
}

/// `dP/dqbar_j` at every site, chain rule through `J` included.
pub fn wirtinger_gradient(
    p: &HamPoly,
    q: &StateVector,
    zeta: &InnerParams,
    eps: f64,
) -> Result<StateVector> {
    let cp = CompiledPoly::new(p, q.box_spec(), zeta.values(), eps)?;
    Ok(StateVector::from_amplitudes(
        q.box_spec(),
        cp.grad_qbar(q.amplitudes()),
    ))
}

/// `dP/dq_j` at every site.
pub fn wirtinger_gradient_q(
    p: &HamPoly,
    q: &StateVector,
    zeta: &InnerParams,
    eps: f64,
) -> Result<StateVector> {
    let cp = CompiledPoly::new(p, q.box_spec(), zeta.values(), eps)?;
    Ok(StateVector::from_amplitudes(q.box_spec(), cp.grad_q(q.amplitudes())))
}
