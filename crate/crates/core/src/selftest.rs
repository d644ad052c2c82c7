//! Property suites run by the `selftest` command: bracket identities checked
//! against independent numeric evaluation, the pairwise bracket estimate and
//! the degree/spread/radius bookkeeping, and the homological equation.

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{
    bracket_bound_margin, poisson_bracket_with, BracketKernel, CompiledPoly, Factor, HamPoly, MonoKey,
};
use crate::lattice::{BoxSpec, Site};
use crate::media::{frequencies, Media, InnerParams};
use crate::normal_form::solve_homological;

#[derive(Clone, Debug)]
pub struct SelfTestOptions {
    pub seed: u64,
    /// Swap in a bracket with a symmetric q/qbar term; the suites must notice.
    pub corrupt_bracket_sign: bool,
}

impl Default for SelfTestOptions {
    fn default() -> Self {
        SelfTestOptions { seed: 20240917, corrupt_bracket_sign: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest normalised residual seen (ratio for the bound suite, count of
    /// exceptions for the law suites).
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SelfTestSummary {
    pub passed: bool,
    pub first_failure: Option<&'static str>,
    pub suites: Vec<SuiteResult>,
}

struct Draw(ChaCha8Rng);

impl Draw {
    fn new(seed: u64, tag: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(tag);
        Draw(rng)
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn sym(&mut self) -> f64 {
        2.0 * self.unit() - 1.0
    }

    fn below(&mut self, n: usize) -> usize {
        ((self.unit() * n as f64) as usize).min(n - 1)
    }

    fn coeff(&mut self) -> Complex64 {
        Complex64::new(self.sym(), self.sym())
    }
}

fn random_key(dr: &mut Draw, bx: BoxSpec, degree: u32, max_spread: u32) -> MonoKey {
    let base = bx.site(dr.below(bx.num_sites()));
    let mut other = base;
    let steps = dr.below(max_spread as usize + 1);
    for _ in 0..steps {
        let mut c = other.coords().to_vec();
        let axis = dr.below(c.len());
        c[axis] += if dr.unit() < 0.5 { 1 } else { -1 };
        let cand = Site::new(&c);
        if bx.contains(&cand) {
            other = cand;
        }
    }
    let mut sites = vec![base];
    if other != base && degree >= 2 {
        sites.push(other);
    }
    let mut f: Vec<Factor> = sites
        .iter()
        .map(|&site| Factor { site, alpha: 0, beta: 0, gamma: 0 })
        .collect();
    let mut left = degree;
    for fi in f.iter_mut() {
        if dr.unit() < 0.5 {
            fi.beta += 1;
        } else {
            fi.gamma += 1;
        }
        left -= 1;
    }
    while left > 0 {
        let fi = &mut f[dr.below(sites.len())];
        let u = dr.unit();
        if left >= 2 && u < 0.25 {
            fi.alpha += 1;
            left -= 2;
        } else if u < 0.625 {
            fi.beta += 1;
            left -= 1;
        } else {
            fi.gamma += 1;
            left -= 1;
        }
    }
    MonoKey::from_factors(f)
}

fn random_poly(dr: &mut Draw, bx: BoxSpec, degrees: &[u32], terms: usize, max_spread: u32) -> HamPoly {
    let mut p = HamPoly::zero();
    for _ in 0..terms {
        let deg = degrees[dr.below(degrees.len())];
        let c = dr.coeff();
        p.add_term(random_key(dr, bx, deg, max_spread), c);
    }
    p
}

fn random_amps(dr: &mut Draw, bx: BoxSpec, scale: f64) -> Vec<Complex64> {
    (0..bx.num_sites())
        .map(|_| Complex64::new(scale * dr.sym(), scale * dr.sym()))
        .collect()
}

/// Upper bound for `sum |c| |monomial(q)|`: absolute coefficients evaluated at
/// `|q|` with `J` replaced by `(|q|^2 + zeta) / eps`.
fn majorant(p: &HamPoly, bx: BoxSpec, zeta: &[f64], eps: f64, amps: &[Complex64]) -> f64 {
    let abs = HamPoly::from_terms(p.iter().map(|(k, c)| (k.clone(), Complex64::new(c.norm(), 0.0))));
    let neg: Vec<f64> = zeta.iter().map(|z| -z).collect();
    let mods: Vec<Complex64> = amps.iter().map(|z| Complex64::new(z.norm(), 0.0)).collect();
    CompiledPoly::new(&abs, bx, &neg, eps)
        .map(|cp| cp.eval(&mods).re)
        .unwrap_or(f64::INFINITY)
}

struct Ctx {
    seed: u64,
    kernel: BracketKernel,
}

impl Ctx {
    fn bracket(&self, h: &HamPoly, g: &HamPoly, eps: f64) -> HamPoly {
        poisson_bracket_with(h, g, eps, self.kernel)
    }
}

fn antisymmetry(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(1, 3).unwrap();
    let mut dr = Draw::new(ctx.seed, 1);
    let tol = 4.0 * f64::EPSILON;
    let mut worst: f64 = 0.0;
    let cases = 200;
    for _ in 0..cases {
        let h = random_poly(&mut dr, bx, &[2, 3, 4, 5, 6], 4, 2);
        let g = random_poly(&mut dr, bx, &[2, 3, 4, 5, 6], 4, 2);
        let hg = ctx.bracket(&h, &g, 0.7);
        let gh = ctx.bracket(&g, &h, 0.7);
        if hg.len() != gh.len() || hg.keys().any(|k| gh.get(k) == Complex64::default()) {
            worst = f64::INFINITY;
            continue;
        }
        for (k, c) in hg.iter() {
            let r = (c + gh.get(k)).norm() / c.norm();
            worst = worst.max(r);
        }
    }
    SuiteResult { name: "antisymmetry", passed: worst <= tol, cases, worst, tolerance: tol }
}

fn wirtinger_oracle(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(1, 3).unwrap();
    let mut dr = Draw::new(ctx.seed, 2);
    let eps = 0.6;
    let zeta: Vec<f64> = (0..bx.num_sites()).map(|_| 0.1 * dr.unit()).collect();
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let (pairs, states) = (50, 20);
    for _ in 0..pairs {
        let h = random_poly(&mut dr, bx, &[2, 3, 4, 5, 6, 7, 8], 5, 2);
        let g = random_poly(&mut dr, bx, &[2, 3, 4, 5, 6, 7, 8], 5, 2);
        let b = ctx.bracket(&h, &g, eps);
        let (ch, cg, cb) = (
            CompiledPoly::new(&h, bx, &zeta, eps).unwrap(),
            CompiledPoly::new(&g, bx, &zeta, eps).unwrap(),
            CompiledPoly::new(&b, bx, &zeta, eps).unwrap(),
        );
        for _ in 0..states {
            let q = random_amps(&mut dr, bx, 0.8);
            let (hq, hqb, gq, gqb) = (ch.grad_q(&q), ch.grad_qbar(&q), cg.grad_q(&q), cg.grad_qbar(&q));
            let mut numeric = Complex64::default();
            let mut scale = majorant(&b, bx, &zeta, eps, &q);
            for j in 0..q.len() {
                numeric += hq[j] * gqb[j] - hqb[j] * gq[j];
                scale += (hq[j] * gqb[j]).norm() + (hqb[j] * gq[j]).norm();
            }
            numeric *= Complex64::i();
            let r = (cb.eval(&q) - numeric).norm() / scale.max(f64::MIN_POSITIVE);
            worst = worst.max(r);
        }
    }
    SuiteResult { name: "wirtinger_oracle", passed: worst <= tol, cases: pairs * states, worst, tolerance: tol }
}

fn jacobi(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(1, 2).unwrap();
    let mut dr = Draw::new(ctx.seed, 3);
    let eps = 0.5;
    let zeta: Vec<f64> = (0..bx.num_sites()).map(|_| 0.1 * dr.unit()).collect();
    let tol = 1e-9;
    let mut worst: f64 = 0.0;
    let (triples, states) = (20, 10);
    for _ in 0..triples {
        let h = random_poly(&mut dr, bx, &[2, 3, 4], 3, 1);
        let g = random_poly(&mut dr, bx, &[2, 3, 4], 3, 1);
        let k = random_poly(&mut dr, bx, &[2, 3, 4], 3, 1);
        let parts = [
            ctx.bracket(&h, &ctx.bracket(&g, &k, eps), eps),
            ctx.bracket(&g, &ctx.bracket(&k, &h, eps), eps),
            ctx.bracket(&k, &ctx.bracket(&h, &g, eps), eps),
        ];
        let compiled: Vec<CompiledPoly> =
            parts.iter().map(|p| CompiledPoly::new(p, bx, &zeta, eps).unwrap()).collect();
        for _ in 0..states {
            let q = random_amps(&mut dr, bx, 0.8);
            let sum: Complex64 = compiled.iter().map(|c| c.eval(&q)).sum();
            let scale: f64 = parts.iter().map(|p| majorant(p, bx, &zeta, eps, &q)).sum();
            worst = worst.max(sum.norm() / scale.max(f64::MIN_POSITIVE));
        }
    }
    SuiteResult { name: "jacobi", passed: worst <= tol, cases: triples * states, worst, tolerance: tol }
}

fn lemma_margins(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(1, 3).unwrap();
    let mut dr = Draw::new(ctx.seed, 4);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for i in 0..300 {
        let (dh, dg) = (2 + (i % 7) as u32, 2 + ((i / 7) % 7) as u32);
        let h = random_poly(&mut dr, bx, &[dh], 2, 3);
        let g = random_poly(&mut dr, bx, &[dg], 2, 3);
        let eps = 0.05 + 0.9 * dr.unit();
        for m in bracket_bound_margin(&h, &g, eps) {
            cases += 1;
            worst = worst.max(m.ratio);
        }
    }
    SuiteResult { name: "lemma_margins", passed: worst <= 1.0, cases, worst, tolerance: 1.0 }
}

/// Monomial pairs with their bracket, for the bookkeeping laws.
fn law_pairs(ctx: &Ctx, tag: u64, bx: BoxSpec) -> Vec<(MonoKey, MonoKey, HamPoly)> {
    let mut dr = Draw::new(ctx.seed, tag);
    (0..500)
        .map(|_| {
            let (dh, dg) = (2 + dr.below(9) as u32, 2 + dr.below(9) as u32);
            let mu = random_key(&mut dr, bx, dh, 3);
            let m = random_key(&mut dr, bx, dg, 3);
            let b = ctx.bracket(
                &HamPoly::monomial(mu.clone(), Complex64::new(1.0, 0.0)),
                &HamPoly::monomial(m.clone(), Complex64::new(1.0, 0.0)),
                0.5,
            );
            (mu, m, b)
        })
        .collect()
}

fn law_suite(name: &'static str, cases: usize, exceptions: usize) -> SuiteResult {
    SuiteResult { name, passed: exceptions == 0, cases, worst: exceptions as f64, tolerance: 0.0 }
}

fn degree_law(ctx: &Ctx) -> SuiteResult {
    let pairs = law_pairs(ctx, 5, BoxSpec::new(1, 3).unwrap());
    let mut bad = 0;
    for (mu, m, b) in &pairs {
        bad += b.keys().filter(|n| n.degree() + 2 != mu.degree() + m.degree()).count();
    }
    law_suite("degree_law", pairs.len(), bad)
}

fn spread_law(ctx: &Ctx) -> SuiteResult {
    let pairs = law_pairs(ctx, 6, BoxSpec::new(2, 2).unwrap());
    let mut bad = 0;
    for (mu, m, b) in &pairs {
        let short = |k: &MonoKey| 4 * k.spread() + 2 <= k.degree();
        for n in b.keys() {
            if n.spread() > mu.spread() + m.spread() {
                bad += 1;
            }
            if short(mu) && short(m) && !short(n) {
                bad += 1;
            }
        }
    }
    law_suite("spread_law", pairs.len(), bad)
}

fn radius_law(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(2, 2).unwrap();
    let d = bx.dim() as u32;
    let pairs = law_pairs(ctx, 7, bx);
    let mut bad = 0;
    for (mu, m, b) in &pairs {
        for n in b.keys() {
            let slack = n.n_plus() + d * (mu.spread() + m.spread());
            if mu.n_plus() > slack || m.n_plus() > slack {
                bad += 1;
            }
        }
    }
    law_suite("radius_law", pairs.len(), bad)
}

fn homological(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(1, 2).unwrap();
    let mut dr = Draw::new(ctx.seed, 8);
    let (eps, eta, m, sigma) = (0.1, 1e-3, 6, 1.0);
    let zeta_inner = InnerParams::zeros(bx, sigma);
    let tol = 1e-10;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..10 {
        let r = random_poly(&mut dr, bx, &[4, 6], 6, 1).filter(|k| !k.is_action_only());
        // Redraw the media until every divisor clears its threshold.
        let (omega, f) = loop {
            let v: Vec<f64> = (0..bx.num_sites()).map(|_| dr.unit()).collect();
            let omega = frequencies(&Media::from_values(bx, v).unwrap(), &zeta_inner, eps).unwrap();
            if let Ok(f) = solve_homological(&r, &omega, eta, m, sigma) {
                break (omega, f);
            }
        };
        let d = HamPoly::from_terms(
            bx.sites()
                .zip(omega.values())
                .map(|(j, w)| (MonoKey::action(j), Complex64::new(*w, 0.0))),
        );
        let residual = ctx.bracket(&d, &f, eps).add(&r);
        let cr = CompiledPoly::new(&residual, bx, zeta_inner.values(), eps).unwrap();
        for _ in 0..20 {
            let q = random_amps(&mut dr, bx, 1.0);
            let scale = majorant(&r, bx, zeta_inner.values(), eps, &q);
            worst = worst.max(cr.eval(&q).norm() / scale.max(f64::MIN_POSITIVE));
            cases += 1;
        }
    }
    SuiteResult { name: "homological", passed: worst <= tol, cases, worst, tolerance: tol }
}

fn json_round_trip(ctx: &Ctx) -> SuiteResult {
    let bx = BoxSpec::new(2, 2).unwrap();
    let mut dr = Draw::new(ctx.seed, 9);
    let cases = 50;
    let mut bad = 0;
    for _ in 0..cases {
        let p = random_poly(&mut dr, bx, &[2, 4, 6, 8], 8, 2);
        let ok = p.to_json().and_then(|t| HamPoly::from_json(&t)).map(|b| b == p).unwrap_or(false);
        if !ok {
            bad += 1;
        }
    }
    law_suite("json_round_trip", cases, bad)
}

pub fn run_selftest(opts: &SelfTestOptions) -> SelfTestSummary {
    let ctx = Ctx {
        seed: opts.seed,
        kernel: if opts.corrupt_bracket_sign { BracketKernel::CorruptedSign } else { BracketKernel::Canonical },
    };
    let suites: Vec<SuiteResult> = [
        antisymmetry,
        wirtinger_oracle,
        jacobi,
        lemma_margins,
        degree_law,
        spread_law,
        radius_law,
        homological,
        json_round_trip,
    ]
    .iter()
    .map(|suite| suite(&ctx))
    .collect();
    let first_failure = suites.iter().find(|s| !s.passed).map(|s| s.name);
    SelfTestSummary { passed: first_failure.is_none(), first_failure, suites }
}
