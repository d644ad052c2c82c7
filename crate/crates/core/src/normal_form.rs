//! Iterative Birkhoff normal form in the rescaled variables.
//!
//! A stage holds `H = D + Jcal + Z_s + R_s`, with `D = sum omega_j |q_j|^2`
//! and `Jcal = (eps^2/2) sum J_j^2`. Step `s` removes the non-resonant part
//! of `R_s` at degree `2s + 4` with the generator `F_s` solving
//! `{D, F_s} = -R_s^(2s+4)`, then Lie-transforms and re-splits.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{poisson_bracket, CompiledPoly, HamPoly, MonoKey, TermRecord};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, KVector, NormVariant};
use crate::media::{FrequencyMap, InnerParams};
use crate::nonres::nonres_threshold;
use crate::ode::{dopri5, DEFAULT_TOL};
use crate::state::StateVector;

/// Non-resonant residue left by the homological step above this is an error.
pub const ANNIHILATION_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnfConfig {
    pub eps: f64,
    pub eta: f64,
    pub sigma: f64,
    pub m: u32,
    pub bx: BoxSpec,
}

impl BnfConfig {
    pub fn new(eps: f64, eta: f64, sigma: f64, m: u32, bx: BoxSpec) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidInput(format!("eps = {eps} must lie in (0, 1)")));
        }
        if !(eta > 0.0) || !(sigma > 0.0) {
            return Err(Error::InvalidInput("eta and sigma must be positive".into()));
        }
        if m < 6 {
            return Err(Error::InvalidInput(format!("M = {m} must be at least 6")));
        }
        Ok(BnfConfig { eps, eta, sigma, m, bx })
    }

    /// `M* = floor(M / 4)`: Lie-series order, also the spread cap.
    pub fn m_star(&self) -> u32 {
        self.m / 4
    }

    pub fn steps(&self) -> u32 {
        (self.m - 4) / 2
    }

    pub fn d(&self) -> usize {
        self.bx.dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MChoice {
    pub m: u32,
    /// `ln(1/eps) / (100 sigma ln ln(1/eps))` before rounding.
    pub formula: f64,
    /// `0.24 M`, the exponent of the remainder scale `eps^{0.24 M}`.
    pub remainder_exponent: f64,
    pub clamped: bool,
}

/// Nearest even integer to the formula value, but never below 6.
pub fn choose_m(eps: f64, sigma: f64) -> Result<MChoice> {
    let limit = (-std::f64::consts::E).exp();
    if !(eps > 0.0 && eps < limit) {
        return Err(Error::EpsTooLarge { eps });
    }
    let l = (1.0 / eps).ln();
    let formula = l / (100.0 * sigma * l.ln());
    let even = 2.0 * (formula / 2.0).round();
    let clamped = even < 6.0;
    let m = if clamped { 6 } else { even as u32 };
    Ok(MChoice {
        m,
        formula,
        remainder_exponent: 0.24 * m as f64,
        clamped,
    })
}

/// `F(n) = R(n) / (i <beta - gamma, omega>)`, so that `{D, F} = -R`.
pub fn solve_homological(
    r: &HamPoly,
    omega: &FrequencyMap,
    eta: f64,
    m: u32,
    sigma: f64,
) -> Result<HamPoly> {
    let bx = omega.box_spec();
    let mut out = Vec::with_capacity(r.len());
    for (key, c) in r.iter() {
        let k = KVector::difference(&key.beta(), &key.gamma());
        if k.is_empty() {
            return Err(Error::ResonantTerm(key.to_string()));
        }
        let mut div = 0.0;
        for (j, v) in k.iter() {
            let idx = bx
                .index_of(&j)
                .ok_or_else(|| Error::InvalidInput(format!("{key} leaves the box")))?;
            div += v as f64 * omega.values()[idx];
        }
        let threshold = if k.total() <= m && k.spread() <= m {
            nonres_threshold(&k, eta, sigma, bx.dim())?
        } else {
            0.0
        };
        if div.abs() <= threshold || div == 0.0 {
            return Err(Error::SmallDivisorViolation {
                k: k.to_string(),
                divisor: div.abs(),
                threshold,
            });
        }
        out.push((key.clone(), c / Complex64::new(0.0, div)));
    }
    Ok(HamPoly::from_terms(out))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LieResult {
    pub transformed: HamPoly,
    /// Sup of coefficients dropped by the caps plus sup of the first omitted
    /// series term.
    pub remainder: f64,
}

/// `sum_{l <= m_star} {H, F}^(l) / l!` with `{H, F}^(l) = {{H, F}^(l-1), F}`,
/// truncated to `|n| <= cap_degree`, `Delta(n) <= cap_spread`.
pub fn lie_transform(
    h: &HamPoly,
    f: &HamPoly,
    m_star: u32,
    eps: f64,
    cap_degree: u32,
    cap_spread: u32,
) -> LieResult {
    let (mut total, mut dropped) = h.truncate(cap_degree, cap_spread);
    if f.is_empty() {
        return LieResult {
            transformed: total,
            remainder: dropped,
        };
    }
    let mut term = total.clone();
    for l in 1..=m_star {
        let next = poisson_bracket(&term, f, eps).scale_real(1.0 / l as f64);
        let (kept, lost) = next.truncate(cap_degree, cap_spread);
        dropped = dropped.max(lost);
        total.add_assign(&kept);
        term = kept;
    }
    let tail = poisson_bracket(&term, f, eps).scale_real(1.0 / (m_star + 1) as f64);
    LieResult {
        transformed: total,
        remainder: dropped + tail.max_abs(),
    }
}

/// Natural log of the per-key coefficient bound
/// `(eps/eta)^{1+(|n|-2)/4} (6d|n|)^{4 sigma |n|(|n|-4)} (1+n^+)^{sigma(|n|-6+|alpha|)}`.
pub fn log_coefficient_bound(key: &MonoKey, cfg: &BnfConfig) -> f64 {
    let n = key.degree() as f64;
    let alpha = key.alpha_total() as f64;
    let d = cfg.d() as f64;
    (1.0 + (n - 2.0) / 4.0) * (cfg.eps / cfg.eta).ln()
        + 4.0 * cfg.sigma * n * (n - 4.0) * (6.0 * d * n).ln()
        + cfg.sigma * (n - 6.0 + alpha) * (1.0 + key.n_plus() as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub key: String,
    pub degree: u32,
    pub actual: f64,
    pub log_theoretical: f64,
    pub ratio: f64,
}

/// Actual-versus-theoretical ratios for every key of `polys`, worst first.
pub fn bound_ledger(polys: &[&HamPoly], cfg: &BnfConfig) -> Vec<BoundEntry> {
    let mut out: Vec<BoundEntry> = polys
        .iter()
        .flat_map(|p| p.iter())
        .map(|(k, c)| {
            let lt = log_coefficient_bound(k, cfg);
            BoundEntry {
                key: k.to_string(),
                degree: k.degree(),
                actual: c.norm(),
                log_theoretical: lt,
                ratio: (c.norm().ln() - lt).exp(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then_with(|| a.key.cmp(&b.key)));
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub s: u32,
    pub generator_terms: usize,
    /// `max |({D, F_s} + R_s^(2s+4))(n)|`.
    pub identity_residual: f64,
    /// Largest non-resonant degree-`(2s+4)` coefficient left after the transform.
    pub annihilation_residual: f64,
    pub remainder_increment: f64,
    pub max_bound_ratio: f64,
    pub worst_key: Option<String>,
    pub z_terms: usize,
    pub r_terms: usize,
}

mod poly_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &HamPoly, s: S) -> std::result::Result<S::Ok, S::Error> {
        p.to_records().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<HamPoly, D::Error> {
        let recs = Vec::<TermRecord>::deserialize(d)?;
        HamPoly::from_records(&recs).map_err(serde::de::Error::custom)
    }
}

mod poly_list_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ps: &[HamPoly], s: S) -> std::result::Result<S::Ok, S::Error> {
        ps.iter().map(|p| p.to_records()).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<HamPoly>, D::Error> {
        Vec::<Vec<TermRecord>>::deserialize(d)?
            .iter()
            .map(|r| HamPoly::from_records(r).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Snapshot before step `s`. Serializes as a checkpoint: the header fields
/// `s`, `remainder_ledger`, `max_bound_ratio` followed by the polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BnfStage {
    pub s: u32,
    pub remainder_ledger: f64,
    pub max_bound_ratio: f64,
    #[serde(with = "poly_serde")]
    pub d: HamPoly,
    #[serde(with = "poly_serde")]
    pub jcal: HamPoly,
    #[serde(with = "poly_serde")]
    pub z: HamPoly,
    #[serde(with = "poly_serde")]
    pub r: HamPoly,
    #[serde(with = "poly_list_serde")]
    pub generators: Vec<HamPoly>,
    pub history: Vec<StageReport>,
}

impl BnfStage {
    /// Splits a model Hamiltonian into `D` (degree 2), `Jcal` (degree 4) and
    /// `Z_1`, `R_1` (degree 6 and up).
    pub fn initial(h: &HamPoly, cfg: &BnfConfig) -> Result<Self> {
        if let Some(bad) = h.keys().find(|k| k.degree() <= 4 && !k.is_action_only()) {
            return Err(Error::InvalidInput(format!("low-degree key {bad} is not action-only")));
        }
        if let Some(bad) = h.keys().find(|k| k.degree() < 2 || k.degree() == 3 || k.degree() == 5) {
            return Err(Error::InvalidInput(format!("unexpected degree in key {bad}")));
        }
        let d = h.filter(|k| k.degree() == 2);
        let jcal = h.filter(|k| k.degree() == 4);
        let upper = h.filter(|k| k.degree() > 4);
        let z = upper.filter(|k| k.is_action_only() && k.degree() <= 6);
        let r = upper.filter(|k| !(k.is_action_only() && k.degree() <= 6));
        let ledger = bound_ledger(&[&z, &r], cfg);
        let max_bound_ratio = ledger.first().map_or(0.0, |e| e.ratio);
        if max_bound_ratio > 1.0 {
            let worst = &ledger[0];
            return Err(Error::BoundViolation {
                stage: 1,
                key: worst.key.clone(),
                ratio: worst.ratio,
            });
        }
        Ok(BnfStage {
            s: 1,
            remainder_ledger: 0.0,
            max_bound_ratio,
            d,
            jcal,
            z,
            r,
            generators: Vec::new(),
            history: Vec::new(),
        })
    }

    pub fn hamiltonian(&self) -> HamPoly {
        let mut h = self.d.add(&self.jcal);
        h.add_assign(&self.z);
        h.add_assign(&self.r);
        h
    }

    pub fn to_checkpoint_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// One pass of the scheme at `stage.s`.
pub fn bnf_step(stage: &BnfStage, omega: &FrequencyMap, cfg: &BnfConfig) -> Result<BnfStage> {
    let s = stage.s;
    if s > cfg.steps() {
        return Err(Error::PreconditionViolated(format!(
            "step {s} beyond the planned {} steps",
            cfg.steps()
        )));
    }
    let target = 2 * s + 4;
    let low = stage.r.filter(|k| k.degree() == target && !k.is_action_only());
    let f = solve_homological(&low, omega, cfg.eta, cfg.m, cfg.sigma)?;
    let identity_residual = poisson_bracket(&stage.d, &f, cfg.eps).add(&low).max_abs();

    let lie = lie_transform(&stage.hamiltonian(), &f, cfg.m_star(), cfg.eps, cfg.m, cfg.m_star());
    let t = lie.transformed;
    debug_assert_eq!(t.filter(|k| k.degree() <= 4), stage.d.add(&stage.jcal));

    let upper = t.filter(|k| k.degree() > 4);
    let residue = upper.filter(|k| k.degree() <= target && !k.is_action_only());
    let annihilation_residual = residue.max_abs();
    if annihilation_residual >= ANNIHILATION_TOL {
        return Err(Error::PreconditionViolated(format!(
            "step {s}: non-resonant degree-{target} residue {annihilation_residual:e} survived"
        )));
    }
    let kept = upper.filter(|k| !(k.degree() <= target && !k.is_action_only()));
    let z = kept.filter(|k| k.is_action_only() && k.degree() <= target + 2);
    let r = kept.filter(|k| !(k.is_action_only() && k.degree() <= target + 2));

    let ledger = bound_ledger(&[&z, &r], cfg);
    let (max_ratio, worst_key) = ledger
        .first()
        .map_or((0.0, None), |e| (e.ratio, Some(e.key.clone())));
    if max_ratio > 1.0 {
        return Err(Error::BoundViolation {
            stage: s as usize,
            key: worst_key.unwrap_or_default(),
            ratio: max_ratio,
        });
    }

    let increment = lie.remainder + annihilation_residual;
    let mut generators = stage.generators.clone();
    generators.push(f.clone());
    let mut history = stage.history.clone();
    history.push(StageReport {
        s,
        generator_terms: f.len(),
        identity_residual,
        annihilation_residual,
        remainder_increment: increment,
        max_bound_ratio: max_ratio,
        worst_key,
        z_terms: z.len(),
        r_terms: r.len(),
    });
    Ok(BnfStage {
        s: s + 1,
        remainder_ledger: stage.remainder_ledger + increment,
        max_bound_ratio: stage.max_bound_ratio.max(max_ratio),
        d: stage.d.clone(),
        jcal: stage.jcal.clone(),
        z,
        r,
        generators,
        history,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BnfReport {
    pub steps: u32,
    pub max_bound_ratio: f64,
    pub remainder_bound: f64,
    /// `eps^{0.24 M}`, reported next to the measured remainder.
    pub target_scale: f64,
    pub stages: Vec<StageReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnfResult {
    /// `Jcal + Z`: action-only.
    pub z_final: HamPoly,
    pub remainder_bound: f64,
    pub generators: Vec<HamPoly>,
    pub report: BnfReport,
    pub final_stage: BnfStage,
}

pub fn run_bnf(h1: &HamPoly, omega: &FrequencyMap, cfg: &BnfConfig) -> Result<BnfResult> {
    resume_bnf(BnfStage::initial(h1, cfg)?, omega, cfg, |_| Ok(()))
}

/// Continues from `stage` to the end, calling `on_stage` with every new stage.
pub fn resume_bnf(
    mut stage: BnfStage,
    omega: &FrequencyMap,
    cfg: &BnfConfig,
    mut on_stage: impl FnMut(&BnfStage) -> Result<()>,
) -> Result<BnfResult> {
    while stage.s <= cfg.steps() {
        stage = bnf_step(&stage, omega, cfg)?;
        on_stage(&stage)?;
    }
    // Anything still in R sits above the degree cap of the last step.
    let leftover = stage.r.max_abs();
    let remainder_bound = stage.remainder_ledger + leftover;
    let z_final = stage.jcal.add(&stage.z);
    Ok(BnfResult {
        report: BnfReport {
            steps: cfg.steps(),
            max_bound_ratio: stage.max_bound_ratio,
            remainder_bound,
            target_scale: cfg.eps.powf(0.24 * cfg.m as f64),
            stages: stage.history.clone(),
        },
        z_final,
        remainder_bound,
        generators: stage.generators.clone(),
        final_stage: stage,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Original to normal-form coordinates.
    Forward,
    Inverse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transported {
    pub state: StateVector,
    /// `sup_j |q'_j - q_j| (1 + |j|_1)^sigma`.
    pub displacement: f64,
}

/// Unit-time flow of `q' = -i dF/dqbar` for `F_1, F_2, ...` in order
/// (forward), or of the reversed list backwards in time (inverse).
pub fn transport_state(
    q: &StateVector,
    generators: &[HamPoly],
    direction: Direction,
    zeta: &InnerParams,
    eps: f64,
    sigma: f64,
) -> Result<Transported> {
    let bx = q.box_spec();
    let mut amps = q.amplitudes().to_vec();
    let order: Vec<&HamPoly> = match direction {
        Direction::Forward => generators.iter().collect(),
        Direction::Inverse => generators.iter().rev().collect(),
    };
    let t_end = match direction {
        Direction::Forward => 1.0,
        Direction::Inverse => -1.0,
    };
    for f in order {
        if f.is_empty() {
            continue;
        }
        let cp = CompiledPoly::new(f, bx, zeta.values(), eps)?;
        amps = dopri5(
            |y, out| {
                cp.grad_qbar_into(y, out);
                for z in out.iter_mut() {
                    *z = Complex64::new(z.im, -z.re);
                }
            },
            &amps,
            t_end,
            DEFAULT_TOL,
        )?;
    }
    let state = StateVector::from_amplitudes(bx, amps);
    let displacement = state.weighted_distance(q, |j| NormVariant::Plain.weight(j, sigma));
    Ok(Transported { state, displacement })
}
