//! Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset, e.g. `cargo test --test acceptance -- 3 4`.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{random_amps, random_poly, Reference};
use latticenf::algebra::{
    bracket_bound_margin, build_model_hamiltonian, build_original_hamiltonian, lemma_bound, poisson_bracket,
    short_range_family, CompiledPoly, HamPoly, MonoKey,
};
use latticenf::dynamics::{
    action_drift_report, derivative_bound_check_with, evolve, integrate, sample_admissible_state, ActionBrackets,
    IntegratorConfig, Scheme,
};
use latticenf::lattice::{BoxSpec, NormVariant, Site};
use latticenf::media::{frequencies, sample_inner, sample_media, InnerParams, Media};
use latticenf::nonres::{check_nonresonance, measure_mc};
use latticenf::normal_form::{lie_transform, resume_bnf, BnfConfig, BnfStage};
use num_complex::Complex64 as C;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn all(parts: &[(bool, String)]) -> Outcome {
    outcome(
        parts.iter().all(|p| p.0),
        parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; "),
    )
}

fn bracket_oracle() -> Outcome {
    let bx = BoxSpec::new(1, 3).unwrap();
    let mut rng = StdRng::seed_from_u64(101);
    let eps = 0.4;
    let zeta: Vec<f64> = (0..bx.num_sites()).map(|_| rng.random_range(0.0..0.2)).collect();
    let oracle = Reference::new(bx, zeta.clone(), eps);
    let degrees: Vec<u32> = (1..=8).collect();

    let (mut worst_rel, mut antisym_bad, mut worst_jacobi) = (0.0f64, 0usize, 0.0f64);
    for _ in 0..50 {
        let h = random_poly(&mut rng, bx, &degrees, 6, 2);
        let g = random_poly(&mut rng, bx, &degrees, 6, 2);
        let hg = poisson_bracket(&h, &g, eps);
        let gh = poisson_bracket(&g, &h, eps);
        let keys_match = hg.len() == gh.len() && hg.iter().all(|(k, c)| gh.get(k) == -*c);
        if !keys_match {
            antisym_bad += 1;
        }
        let compiled = CompiledPoly::new(&hg, bx, &zeta, eps).unwrap();
        for _ in 0..100 {
            let q = random_amps(&mut rng, bx.num_sites(), 0.9);
            let (want, scale) = oracle.bracket(&h, &g, &q);
            worst_rel = worst_rel.max((compiled.eval(&q) - want).norm() / scale);
        }
    }

    let small = BoxSpec::new(1, 2).unwrap();
    let zeta_s: Vec<f64> = (0..small.num_sites()).map(|_| rng.random_range(0.0..0.2)).collect();
    let oracle_s = Reference::new(small, zeta_s, eps);
    for _ in 0..20 {
        let [h, g, k] = [0, 1, 2].map(|_| random_poly(&mut rng, small, &[2, 3, 4], 3, 1));
        let parts = [
            poisson_bracket(&h, &poisson_bracket(&g, &k, eps), eps),
            poisson_bracket(&g, &poisson_bracket(&k, &h, eps), eps),
            poisson_bracket(&k, &poisson_bracket(&h, &g, eps), eps),
        ];
        for _ in 0..10 {
            let q = random_amps(&mut rng, small.num_sites(), 0.9);
            let sum: C = parts.iter().map(|p| oracle_s.value(p, &q)).sum();
            let scale: f64 = parts.iter().map(|p| oracle_s.abs_value(p, &q)).sum();
            worst_jacobi = worst_jacobi.max(sum.norm() / scale);
        }
    }
    all(&[
        (worst_rel < 1e-9, format!("oracle rel {worst_rel:.2e} < 1e-9")),
        (antisym_bad == 0, format!("antisymmetry mismatches {antisym_bad}")),
        (worst_jacobi < 1e-9, format!("Jacobi {worst_jacobi:.2e} < 1e-9")),
    ])
}

fn bracket_laws() -> Outcome {
    let bx = BoxSpec::new(1, 3).unwrap();
    let mut rng = StdRng::seed_from_u64(202);
    let (mut worst_margin, mut recomputed_gap, mut degree_bad, mut spread_bad) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..1000 {
        let (dh, dg) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let h = random_poly(&mut rng, bx, &[dh], 3, 3);
        let g = random_poly(&mut rng, bx, &[dg], 3, 3);
        let eps = rng.random_range(0.01..1.0);
        for m in bracket_bound_margin(&h, &g, eps) {
            worst_margin = worst_margin.max(m.ratio);
            let rhs = 2.0 / eps
                * 2f64.powi(m.n.degree() as i32)
                * (m.mu.spread() + m.m.spread()).max(1) as f64
                * (m.n.degree() as f64 + 2.0).powi(2)
                * h.get(&m.mu).norm()
                * g.get(&m.m).norm();
            let rel = (rhs / lemma_bound(&m.mu, &m.m, &m.n, eps, h.get(&m.mu).norm(), g.get(&m.m).norm()) - 1.0).abs();
            recomputed_gap = recomputed_gap.max(rel);
        }
        for (mu, _) in h.iter() {
            for (mm, _) in g.iter() {
                let b = poisson_bracket(
                    &HamPoly::monomial(mu.clone(), C::new(1.0, 0.0)),
                    &HamPoly::monomial(mm.clone(), C::new(1.0, 0.0)),
                    eps,
                );
                for n in b.keys() {
                    if n.degree() + 2 != mu.degree() + mm.degree() {
                        degree_bad += 1;
                    }
                    if n.spread() > mu.spread() + mm.spread() {
                        spread_bad += 1;
                    }
                }
            }
        }
    }
    all(&[
        (worst_margin <= 1.0, format!("max margin {worst_margin:.3e} <= 1")),
        (recomputed_gap < 1e-12, format!("bound recomputation gap {recomputed_gap:.1e}")),
        (degree_bad == 0, format!("degree exceptions {degree_bad}")),
        (spread_bad == 0, format!("spread exceptions {spread_bad}")),
    ])
}

struct DeskRun {
    cfg: BnfConfig,
    stages: Vec<BnfStage>,
    z_final: HamPoly,
    seed: u64,
}

fn desk_run() -> DeskRun {
    let bx = BoxSpec::new(1, 4).unwrap();
    let (sigma, eps, eta, m) = (2.0, 1e-3, 0.1, 8);
    let cfg = BnfConfig::new(eps, eta, sigma, m, bx).unwrap();
    let (seed, media, zeta, omega) = (1u64..)
        .find_map(|seed| {
            let media = sample_media(seed, bx);
            let zeta = sample_inner(seed, bx, sigma);
            let omega = frequencies(&media, &zeta, eps).ok()?;
            let rep = check_nonresonance(&omega, eta, m, sigma, bx).ok()?;
            rep.is_nonresonant().then_some((seed, media, zeta, omega))
        })
        .unwrap();
    let h = build_model_hamiltonian(bx, eps, &short_range_family(bx, 1.0), &zeta, &media).unwrap();
    let first = BnfStage::initial(&h, &cfg).unwrap();
    let mut stages = vec![first.clone()];
    let res = resume_bnf(first, &omega, &cfg, |st| {
        stages.push(st.clone());
        Ok(())
    })
    .unwrap();
    DeskRun { cfg, stages, z_final: res.z_final, seed }
}

fn normal_form_desk(run: &DeskRun) -> Outcome {
    let cfg = &run.cfg;
    let mut worst_leftover = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for pair in run.stages.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let s = prev.s;
        let f = next.generators.last().unwrap();
        // Redo the transform and inspect it directly.
        let t = lie_transform(&prev.hamiltonian(), f, cfg.m_star(), cfg.eps, cfg.m, cfg.m_star()).transformed;
        let leftover = t
            .iter()
            .filter(|(k, _)| k.degree() == 2 * s + 4 && !k.is_action_only())
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        worst_leftover = worst_leftover.max(leftover);
        for (k, c) in next.z.iter().chain(next.r.iter()) {
            let n = k.degree() as f64;
            let log_bound = (1.0 + (n - 2.0) / 4.0) * (cfg.eps / cfg.eta).ln()
                + 4.0 * cfg.sigma * n * (n - 4.0) * (6.0 * n).ln()
                + cfg.sigma * (n - 6.0 + k.alpha_total() as f64) * (1.0 + k.n_plus() as f64).ln();
            worst_ratio = worst_ratio.max((c.norm().ln() - log_bound).exp());
        }
    }
    let z_diag = run.z_final.keys().all(MonoKey::is_action_only);
    all(&[
        (run.stages.len() == cfg.steps() as usize + 1, format!("seed {}, {} stages", run.seed, run.stages.len() - 1)),
        (worst_leftover <= 1e-12, format!("max non-resonant leftover {worst_leftover:.2e} <= 1e-12")),
        (z_diag, format!("Z_final action-only over {} keys", run.z_final.len())),
        (worst_ratio <= 1.0, format!("max bound ratio {worst_ratio:.3e} <= 1")),
    ])
}

fn homological_identity(run: &DeskRun) -> Outcome {
    let mut worst = 0.0f64;
    for pair in run.stages.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let low = prev.r.filter(|k| k.degree() == 2 * prev.s + 4 && !k.is_action_only());
        let f = next.generators.last().unwrap();
        worst = worst.max(poisson_bracket(&prev.d, f, run.cfg.eps).add(&low).max_abs());
    }

    // Lie series against the time-one map of the generator on three sites.
    let bx = BoxSpec::new(1, 1).unwrap();
    let mut rng = StdRng::seed_from_u64(404);
    let (eps, m_star) = (0.5, 10);
    let zeta = vec![0.05, 0.3, 0.02];
    let oracle = Reference::new(bx, zeta.clone(), eps);
    let s = |i: i32| Site::new(&[i]);
    let mut worst_lie = 0.0f64;
    for _ in 0..5 {
        let mut h = HamPoly::from_terms(
            [(-1, 1.3), (0, 0.7), (1, 2.1)].map(|(j, w)| (MonoKey::action(s(j)), C::new(w, 0.0))),
        );
        h.add_term(MonoKey::j_power(s(0), 2), C::new(0.5 * eps * eps, 0.0));
        h.add_assign(&random_poly(&mut rng, bx, &[4, 6], 4, 2));
        let f = random_poly(&mut rng, bx, &[3, 4], 3, 2).real_part().scale_real(0.1);
        let lie = lie_transform(&h, &f, m_star, eps, 200, 2).transformed;
        let compiled = CompiledPoly::new(&lie, bx, &zeta, eps).unwrap();
        for _ in 0..10 {
            let q = random_amps(&mut rng, 3, 0.5);
            let moved = oracle.generator_flow(&f, &q, 400);
            let want = oracle.value(&h, &moved);
            let rel = (compiled.eval(&q) - want).norm() / want.norm().max(oracle.abs_value(&h, &moved) * 1e-3);
            worst_lie = worst_lie.max(rel);
        }
    }
    all(&[
        (worst < 1e-12, format!("homological residual {worst:.2e} < 1e-12")),
        (worst_lie < 1e-5, format!("Lie vs flow rel {worst_lie:.2e} < 1e-5")),
    ])
}

fn dynamics_localization() -> Outcome {
    let bx = BoxSpec::new(1, 16).unwrap();
    let (sigma, eps) = (2.0, 1e-2);
    let media = sample_media(5, bx);
    let r = short_range_family(bx, 1.0);
    let h = build_original_hamiltonian(bx, &media, &r, false).unwrap();
    let q0 = sample_admissible_state(5, 0, bx, sigma, eps);
    let zeta = InnerParams::zeros(bx, sigma);
    let cfg = IntegratorConfig { dt: 1e-3, t_end: 1e3, scheme: Scheme::Strang, sample_every: 1000 };
    let traj = integrate(&h, &q0, &cfg, &zeta, eps).unwrap();

    let weights: Vec<f64> = bx.sites().map(|j| NormVariant::Tilde.weight(&j, 3.0 * sigma)).collect();
    let i0 = q0.actions();
    let mut direct = 0.0f64;
    for st in &traj.states {
        for ((a, b), w) in st.actions().iter().zip(&i0).zip(&weights) {
            direct = direct.max((a - b).abs() * w);
        }
    }
    let rep = action_drift_report(&traj, sigma, eps);
    let oracle = Reference::new(bx, vec![0.0; bx.num_sites()], eps);
    let e0 = oracle.value(&h, q0.amplitudes()).re;
    let energy = traj
        .states
        .iter()
        .map(|st| (oracle.value(&h, st.amplitudes()).re - e0).abs() / e0.abs())
        .fold(0.0, f64::max);
    all(&[
        (traj.times.len() == 1001, format!("{} samples", traj.times.len())),
        (direct < eps * eps, format!("weighted drift {direct:.3e} < eps^2")),
        (rep.escape_time.is_none() && rep.weighted_sup < eps * eps, format!("report sup {:.3e}", rep.weighted_sup)),
        (energy < 1e-8, format!("energy drift {energy:.2e} < 1e-8")),
    ])
}

fn derivative_bound() -> Outcome {
    let bx = BoxSpec::new(1, 8).unwrap();
    let (sigma, eps) = (3.0, 2f64.powi(-22));
    let r = short_range_family(bx, 1.0);
    let table = ActionBrackets::new(&r, bx).unwrap();
    let oracle = Reference::new(bx, vec![0.0; bx.num_sites()], 1.0);
    let log_base = 5.0 * eps.ln() - sigma * 2f64.ln();
    let (mut exceptions, mut worst, mut cross) = (0usize, 0.0f64, 0.0f64);
    for trial in 0..1000 {
        let q = sample_admissible_state(77, trial, bx, sigma, eps);
        let check = derivative_bound_check_with(&q, &table, sigma, eps, 1).unwrap();
        let lib = table.eval(&q);
        // {I_j, H} = i (qbar_j dR/dqbar_j - q_j dR/dq_j): the action-only part of H drops out.
        let (gq, gqb) = oracle.gradients(&r, q.amplitudes());
        for (i, j) in bx.sites().enumerate() {
            let z = q.amplitudes()[i];
            let v = C::i() * (z.conj() * gqb[i] - z * gq[i]);
            let scale = (z * gq[i]).norm() * 2.0 + f64::MIN_POSITIVE;
            cross = cross.max((v - lib[i]).norm() / scale);
            let lw = 3.0 * sigma * NormVariant::Tilde.weight(&j, 1.0).ln();
            let ratio = if v.norm() == 0.0 { 0.0 } else { (v.norm().ln() + lw - log_base).exp() };
            worst = worst.max(ratio);
            if ratio > 1.0 {
                exceptions += 1;
            }
        }
        if !check.pass {
            exceptions += 1;
        }
    }
    all(&[
        (exceptions == 0, format!("exceptions {exceptions}")),
        (worst <= 1.0, format!("max ratio {worst:.3e}")),
        (cross < 1e-9, format!("library vs reference {cross:.1e}")),
    ])
}

fn measure_estimate() -> Outcome {
    let bx = BoxSpec::new(1, 4).unwrap();
    let (eta, m, sigma) = (0.1, 4, 2.0);
    let media = Media::constant(bx, 0.0).unwrap();
    let res = measure_mc(eta, m, bx, sigma, 0.1, &media, 10_000, 7).unwrap();
    outcome(
        res.fraction_resonant <= eta + 3.0 * res.stderr,
        format!("fraction {:.4} (stderr {:.4}) <= eta + 3 stderr", res.fraction_resonant, res.stderr),
    )
}

fn integrator_order() -> Outcome {
    let bx = BoxSpec::new(1, 2).unwrap();
    let media = sample_media(3, bx);
    let h = build_original_hamiltonian(bx, &media, &short_range_family(bx, 1.0), false).unwrap();
    let mut q0 = sample_admissible_state(11, 0, bx, 1.0, 0.25);
    q0.set(&Site::origin(1), C::new(0.25, 0.0));
    let zeta = InnerParams::zeros(bx, 1.0);
    let oracle = Reference::new(bx, vec![0.0; bx.num_sites()], 1.0);
    let e0 = oracle.value(&h, q0.amplitudes()).re;
    let max_err = |dt: f64| {
        let cfg = IntegratorConfig { dt, t_end: 10.0, scheme: Scheme::Strang, sample_every: 1 };
        let traj = integrate(&h, &q0, &cfg, &zeta, 1.0).unwrap();
        traj.states
            .iter()
            .map(|s| (oracle.value(&h, s.amplitudes()).re - e0).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (max_err(0.02), max_err(0.01));
    let ratio = coarse / fine;

    let steps = 2000;
    let there = evolve(&h, &q0, 0.005, steps, Scheme::Strang, &zeta, 1.0).unwrap();
    let back = evolve(&h, &there, -0.005, steps, Scheme::Strang, &zeta, 1.0).unwrap();
    let round = back.sup_distance(&q0);
    all(&[
        ((3.0..=5.0).contains(&ratio), format!("error ratio {ratio:.3} ({coarse:.2e} / {fine:.2e}) in [3, 5]")),
        (round < 1e-9, format!("round trip {round:.2e} < 1e-9")),
    ])
}

fn main() {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);
    std::panic::set_hook(Box::new(|_| {}));

    let mut failures = 0;
    let mut report = |n: u32, name: &str, limit: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let pass = out.pass && took < limit;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {n} [{}] {name}: {} ({:.1}s / limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };

    let min = |m: u64| Duration::from_secs(60 * m);
    if wanted(1) {
        report(1, "bracket oracle", min(1), &mut bracket_oracle);
    }
    if wanted(2) {
        report(2, "bracket bound and bookkeeping laws", min(1), &mut bracket_laws);
    }
    if wanted(3) || wanted(4) {
        let start = Instant::now();
        let run = catch_unwind(desk_run).map_err(|e| {
            e.downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default()
        });
        let build = start.elapsed();
        match run {
            Ok(run) => {
                if wanted(3) {
                    report(3, "normal form desk instance", min(10), &mut || {
                        let mut o = normal_form_desk(&run);
                        o.detail = format!("{}; construction {:.1}s", o.detail, build.as_secs_f64());
                        o.pass &= build < min(10);
                        o
                    });
                }
                if wanted(4) {
                    report(4, "homological identity and Lie series", min(10), &mut || homological_identity(&run));
                }
            }
            Err(msg) => {
                for n in [3u32, 4] {
                    if wanted(n) {
                        report(n, "normal form desk instance", min(10), &mut || {
                            outcome(false, format!("normal-form construction failed: {msg}"))
                        });
                    }
                }
            }
        }
    }
    if wanted(5) {
        report(5, "dynamics localization", min(15), &mut dynamics_localization);
    }
    if wanted(6) {
        report(6, "derivative bound", min(2), &mut derivative_bound);
    }
    if wanted(7) {
        report(7, "measure estimate", min(5), &mut measure_estimate);
    }
    if wanted(8) {
        report(8, "integrator order and reversibility", min(1), &mut integrator_order);
    }
    if failures > 0 {
        println!("acceptance: {failures} criterion/criteria FAILED");
        std::process::exit(1);
    }
    println!("acceptance: all selected criteria PASS");
}
