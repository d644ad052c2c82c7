#![allow(dead_code)]

//! Reference evaluation written directly from the monomial definition, kept
//! apart from the library's compiled evaluator so the two can check each other.

use latticenf::algebra::{Factor, HamPoly, MonoKey};
use latticenf::lattice::{BoxSpec, Site};
use num_complex::Complex64 as C;
use rand::rngs::StdRng;
use rand::Rng;

fn cpow(z: C, n: u16) -> C {
    let mut out = C::new(1.0, 0.0);
    for _ in 0..n {
        out *= z;
    }
    out
}

struct Local {
    value: C,
    d_q: C,
    d_qbar: C,
}

fn factor_local(f: &Factor, z: C, zeta: f64, eps: f64) -> Local {
    let j = C::new((z.norm_sqr() - zeta) / eps, 0.0);
    let (a, b, c) = (f.alpha, f.beta, f.gamma);
    let qa = cpow(z, b) * cpow(z.conj(), c);
    let value = cpow(j, a) * qa;
    let mut d_q = C::default();
    let mut d_qbar = C::default();
    if a > 0 {
        let ja1 = cpow(j, a - 1) * a as f64;
        d_q += ja1 * (z.conj() / eps) * qa;
        d_qbar += ja1 * (z / eps) * qa;
    }
    if b > 0 {
        d_q += cpow(j, a) * cpow(z, b - 1) * cpow(z.conj(), c) * b as f64;
    }
    if c > 0 {
        d_qbar += cpow(j, a) * cpow(z, b) * cpow(z.conj(), c - 1) * c as f64;
    }
    Local { value, d_q, d_qbar }
}

pub struct Reference {
    pub bx: BoxSpec,
    pub zeta: Vec<f64>,
    pub eps: f64,
}

impl Reference {
    pub fn new(bx: BoxSpec, zeta: Vec<f64>, eps: f64) -> Self {
        Reference { bx, zeta, eps }
    }

    fn idx(&self, s: &Site) -> usize {
        self.bx.index_of(s).expect("key leaves the box")
    }

    pub fn monomial(&self, key: &MonoKey, q: &[C]) -> C {
        key.factors()
            .iter()
            .map(|f| {
                let i = self.idx(&f.site);
                factor_local(f, q[i], self.zeta[i], self.eps).value
            })
            .product()
    }

    pub fn value(&self, p: &HamPoly, q: &[C]) -> C {
        p.iter().map(|(k, c)| c * self.monomial(k, q)).sum()
    }

    /// `sum |c| |monomial(q)|`, the natural size of `value`.
    pub fn abs_value(&self, p: &HamPoly, q: &[C]) -> f64 {
        p.iter().map(|(k, c)| c.norm() * self.monomial(k, q).norm()).sum()
    }

    /// `(dP/dq_j, dP/dqbar_j)` for every site.
    pub fn gradients(&self, p: &HamPoly, q: &[C]) -> (Vec<C>, Vec<C>) {
        let n = q.len();
        let (mut gq, mut gqb) = (vec![C::default(); n], vec![C::default(); n]);
        for (k, c) in p.iter() {
            let locals: Vec<(usize, Local)> = k
                .factors()
                .iter()
                .map(|f| {
                    let i = self.idx(&f.site);
                    (i, factor_local(f, q[i], self.zeta[i], self.eps))
                })
                .collect();
            for (a, (i, la)) in locals.iter().enumerate() {
                let others: C = locals
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| *b != a)
                    .map(|(_, (_, l))| l.value)
                    .product();
                gq[*i] += c * others * la.d_q;
                gqb[*i] += c * others * la.d_qbar;
            }
        }
        (gq, gqb)
    }

    /// `i sum_j (dH/dq_j dG/dqbar_j - dH/dqbar_j dG/dq_j)` and the sum of the
    /// moduli of its products.
    pub fn bracket(&self, h: &HamPoly, g: &HamPoly, q: &[C]) -> (C, f64) {
        let (hq, hqb) = self.gradients(h, q);
        let (gq, gqb) = self.gradients(g, q);
        let mut v = C::default();
        let mut scale = 0.0;
        for j in 0..q.len() {
            v += hq[j] * gqb[j] - hqb[j] * gq[j];
            scale += (hq[j] * gqb[j]).norm() + (hqb[j] * gq[j]).norm();
        }
        (C::i() * v, scale)
    }

    /// Classical RK4 for `q' = i dF/dqbar` over unit time.
    pub fn generator_flow(&self, f: &HamPoly, q: &[C], steps: usize) -> Vec<C> {
        let h = 1.0 / steps as f64;
        let rhs = |y: &[C]| -> Vec<C> {
            self.gradients(f, y).1.into_iter().map(|g| C::i() * g).collect()
        };
        let mut y = q.to_vec();
        for _ in 0..steps {
            let k1 = rhs(&y);
            let y2: Vec<C> = y.iter().zip(&k1).map(|(a, k)| a + k * (h / 2.0)).collect();
            let k2 = rhs(&y2);
            let y3: Vec<C> = y.iter().zip(&k2).map(|(a, k)| a + k * (h / 2.0)).collect();
            let k3 = rhs(&y3);
            let y4: Vec<C> = y.iter().zip(&k3).map(|(a, k)| a + k * h).collect();
            let k4 = rhs(&y4);
            for i in 0..y.len() {
                y[i] += (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0);
            }
        }
        y
    }
}

/// Key of exact degree `degree` on at most two sites at l1 distance
/// `<= max_spread`.
pub fn random_key(rng: &mut StdRng, bx: BoxSpec, degree: u32, max_spread: u32) -> MonoKey {
    let base = bx.site(rng.random_range(0..bx.num_sites()));
    let mut other = base;
    for _ in 0..rng.random_range(0..=max_spread) {
        let mut c = other.coords().to_vec();
        let axis = rng.random_range(0..c.len());
        c[axis] += if rng.random_bool(0.5) { 1 } else { -1 };
        let cand = Site::new(&c);
        if bx.contains(&cand) {
            other = cand;
        }
    }
    let mut sites = vec![base];
    if other != base && degree >= 2 {
        sites.push(other);
    }
    let mut fs: Vec<Factor> = sites.iter().map(|&site| Factor { site, alpha: 0, beta: 0, gamma: 0 }).collect();
    let mut left = degree;
    for f in fs.iter_mut() {
        if rng.random_bool(0.5) {
            f.beta += 1;
        } else {
            f.gamma += 1;
        }
        left -= 1;
    }
    while left > 0 {
        let k = rng.random_range(0..fs.len());
        let f = &mut fs[k];
        let u: f64 = rng.random();
        if left >= 2 && u < 0.25 {
            f.alpha += 1;
            left -= 2;
        } else if u < 0.625 {
            f.beta += 1;
            left -= 1;
        } else {
            f.gamma += 1;
            left -= 1;
        }
    }
    MonoKey::from_factors(fs)
}

pub fn random_poly(rng: &mut StdRng, bx: BoxSpec, degrees: &[u32], terms: usize, max_spread: u32) -> HamPoly {
    let mut p = HamPoly::zero();
    for _ in 0..terms {
        let deg = degrees[rng.random_range(0..degrees.len())];
        let c = C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        p.add_term(random_key(rng, bx, deg, max_spread), c);
    }
    p
}

pub fn random_amps(rng: &mut StdRng, n: usize, scale: f64) -> Vec<C> {
    (0..n)
        .map(|_| C::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale)))
        .collect()
}
