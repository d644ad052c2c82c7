//! Time integration of `i q' = dH/dqbar` and action-drift diagnostics.
//!
//! The Strang scheme rotates each site exactly under the single-site
//! action-only part of `H` and takes an RK4 step on everything else.
//! Action drift is accumulated from the RK4 increments as
//! `2 Re(qbar dq) + |dq|^2`, which keeps its relative accuracy even when
//! `|q|^2` itself is many orders of magnitude larger than the drift.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::algebra::{CompiledPoly, HamPoly, MonoKey};
use crate::error::{Error, Result};
use crate::lattice::{BoxSpec, NormVariant, Site};
use crate::media::{keyed_uniform, InnerParams, Stream};
use crate::state::StateVector;

/// Relative energy change per step above which a run is declared unstable.
pub const STEP_ENERGY_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Strang,
    Rk4Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub scheme: Scheme,
    pub sample_every: usize,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end >= self.dt) {
            return Err(Error::InvalidInput(format!(
                "need 0 < dt <= T, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidInput("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub energies: Vec<f64>,
    /// `I_j(t) - I_j(0)` per sample, accumulated step by step.
    pub drift: Vec<Vec<f64>>,
    /// Largest `|Im H|` seen at a sample.
    pub energy_imag_max: f64,
}

impl Trajectory {
    /// Samples supplied directly; drift is taken as `|q_j(t)|^2 - |q_j(0)|^2`.
    pub fn from_states(times: Vec<f64>, states: Vec<StateVector>, energies: Vec<f64>) -> Result<Self> {
        if times.len() != states.len() || times.len() != energies.len() || times.is_empty() {
            return Err(Error::InvalidInput("trajectory columns must be nonempty and equally long".into()));
        }
        let i0 = states[0].actions();
        let drift = states
            .iter()
            .map(|s| s.actions().iter().zip(&i0).map(|(a, b)| a - b).collect())
            .collect();
        Ok(Trajectory {
            times,
            states,
            energies,
            drift,
            energy_imag_max: 0.0,
        })
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.states[0].box_spec()
    }

    pub fn max_relative_energy_error(&self) -> f64 {
        let e0 = self.energies[0];
        let scale = if e0 != 0.0 { e0.abs() } else { 1.0 };
        self.energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / scale
    }
}

fn minus_i(z: Complex64) -> Complex64 {
    Complex64::new(z.im, -z.re)
}

/// `-i dH/dqbar_j` at every site.
pub fn eom_rhs(h: &HamPoly, q: &StateVector, zeta: &InnerParams, eps: f64) -> Result<StateVector> {
    let cp = CompiledPoly::new(h, q.box_spec(), zeta.values(), eps)?;
    let g = cp.grad_qbar(q.amplitudes());
    Ok(StateVector::from_amplitudes(q.box_spec(), g.into_iter().map(minus_i).collect()))
}

/// Single-site `J^a |q|^{2b}` terms, grouped by site index.
#[derive(Clone, Debug)]
struct DiagonalPart {
    per_site: Vec<Vec<(u16, u16, f64)>>,
    zeta: Vec<f64>,
    inv_eps: f64,
}

fn is_diagonal_key(k: &MonoKey) -> bool {
    k.factors().len() == 1 && k.is_action_only()
}

impl DiagonalPart {
    fn new(h: &HamPoly, bx: BoxSpec, zeta: &[f64], eps: f64) -> Result<Self> {
        let mut per_site = vec![Vec::new(); bx.num_sites()];
        for (k, c) in h.iter() {
            if !is_diagonal_key(k) {
                return Err(Error::NotDiagonal(k.to_string()));
            }
            let f = k.factors()[0];
            let idx = bx
                .index_of(&f.site)
                .ok_or_else(|| Error::InvalidInput(format!("{k} leaves the box")))?;
            per_site[idx].push((f.alpha, f.beta, c.re));
        }
        Ok(DiagonalPart {
            per_site,
            zeta: zeta.to_vec(),
            inv_eps: 1.0 / eps,
        })
    }

    /// `dH/dI_j` at `I_j = action`.
    fn frequency(&self, idx: usize, action: f64) -> f64 {
        let jv = (action - self.zeta[idx]) * self.inv_eps;
        let mut theta = 0.0;
        for &(a, b, c) in &self.per_site[idx] {
            let (a, b) = (a as i32, b as i32);
            if a > 0 {
                theta += c * a as f64 * self.inv_eps * jv.powi(a - 1) * action.powi(b);
            }
            if b > 0 {
                theta += c * b as f64 * jv.powi(a) * action.powi(b - 1);
            }
        }
        theta
    }

    fn rotate(&self, amps: &mut [Complex64], dt: f64) {
        for (i, z) in amps.iter_mut().enumerate() {
            if self.per_site[i].is_empty() {
                continue;
            }
            let (r, phi) = z.to_polar();
            let theta = self.frequency(i, z.norm_sqr());
            // Polar update: multiplying by e^{i phi} lets |z| drift by rounding over long runs.
            *z = Complex64::from_polar(r, phi - theta * dt);
        }
    }
}

/// `q_j <- q_j exp(-i theta_j dt)` with `theta_j = dH_diag/dI_j`; every key of
/// `h_diag` must be single-site and action-only.
pub fn diagonal_flow_exact(
    q: &StateVector,
    h_diag: &HamPoly,
    dt: f64,
    zeta: &InnerParams,
    eps: f64,
) -> Result<StateVector> {
    let diag = DiagonalPart::new(h_diag, q.box_spec(), zeta.values(), eps)?;
    let mut out = q.clone();
    diag.rotate(out.amplitudes_mut(), dt);
    Ok(out)
}

struct Rk4 {
    cp: CompiledPoly,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
}

impl Rk4 {
    fn new(cp: CompiledPoly, n: usize) -> Self {
        let z = vec![Complex64::default(); n];
        Rk4 {
            cp,
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
        }
    }

    fn rhs(cp: &CompiledPoly, y: &[Complex64], out: &mut [Complex64]) {
        cp.grad_qbar_into(y, out);
        for z in out.iter_mut() {
            *z = minus_i(*z);
        }
    }

    /// Advances `y` by `dt` and adds the per-site action change to `drift`.
    fn step(&mut self, y: &mut [Complex64], dt: f64, drift: &mut [f64]) {
        if self.cp.is_empty() {
            return;
        }
        let n = y.len();
        let [k1, k2, k3, k4] = &mut self.k;
        Self::rhs(&self.cp, y, k1);
        for i in 0..n {
            self.tmp[i] = y[i] + k1[i] * (0.5 * dt);
        }
        Self::rhs(&self.cp, &self.tmp, k2);
        for i in 0..n {
            self.tmp[i] = y[i] + k2[i] * (0.5 * dt);
        }
        Self::rhs(&self.cp, &self.tmp, k3);
        for i in 0..n {
            self.tmp[i] = y[i] + k3[i] * dt;
        }
        Self::rhs(&self.cp, &self.tmp, k4);
        for i in 0..n {
            let dq = (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0);
            drift[i] += 2.0 * (y[i].conj() * dq).re + dq.norm_sqr();
            y[i] += dq;
        }
    }
}

/// Splits `H` into its single-site action-only part and the rest.
pub fn split_diagonal(h: &HamPoly) -> (HamPoly, HamPoly) {
    (h.filter(is_diagonal_key), h.filter(|k| !is_diagonal_key(k)))
}

struct Stepper {
    scheme: Scheme,
    diag: Option<DiagonalPart>,
    rk: Rk4,
}

impl Stepper {
    fn new(h: &HamPoly, bx: BoxSpec, scheme: Scheme, zeta: &InnerParams, eps: f64) -> Result<Self> {
        let n = bx.num_sites();
        Ok(match scheme {
            Scheme::Strang => {
                let (d, rest) = split_diagonal(h);
                Stepper {
                    scheme,
                    diag: Some(DiagonalPart::new(&d, bx, zeta.values(), eps)?),
                    rk: Rk4::new(CompiledPoly::new(&rest, bx, zeta.values(), eps)?, n),
                }
            }
            Scheme::Rk4Reference => Stepper {
                scheme,
                diag: None,
                rk: Rk4::new(CompiledPoly::new(h, bx, zeta.values(), eps)?, n),
            },
        })
    }

    fn step(&mut self, y: &mut [Complex64], dt: f64, drift: &mut [f64]) {
        match (self.scheme, &self.diag) {
            (Scheme::Strang, Some(d)) => {
                d.rotate(y, 0.5 * dt);
                self.rk.step(y, dt, drift);
                d.rotate(y, 0.5 * dt);
            }
            _ => self.rk.step(y, dt, drift),
        }
    }
}

/// `steps` steps of size `dt` (negative runs backwards), no sampling.
pub fn evolve(
    h: &HamPoly,
    q0: &StateVector,
    dt: f64,
    steps: usize,
    scheme: Scheme,
    zeta: &InnerParams,
    eps: f64,
) -> Result<StateVector> {
    let bx = q0.box_spec();
    let mut stepper = Stepper::new(h, bx, scheme, zeta, eps)?;
    let mut y = q0.amplitudes().to_vec();
    let mut drift = vec![0.0; y.len()];
    for _ in 0..steps {
        stepper.step(&mut y, dt, &mut drift);
    }
    Ok(StateVector::from_amplitudes(bx, y))
}

pub fn integrate(
    h: &HamPoly,
    q0: &StateVector,
    cfg: &IntegratorConfig,
    zeta: &InnerParams,
    eps: f64,
) -> Result<Trajectory> {
    cfg.validate()?;
    let bx = q0.box_spec();
    let energy = CompiledPoly::new(h, bx, zeta.values(), eps)?;
    let e0 = energy.eval(q0.amplitudes());
    if !e0.re.is_finite() || !e0.im.is_finite() {
        return Err(Error::PreconditionViolated("initial energy is not finite".into()));
    }
    let scale = e0.norm().max(f64::MIN_POSITIVE);
    let mut stepper = Stepper::new(h, bx, cfg.scheme, zeta, eps)?;
    let mut y = q0.amplitudes().to_vec();
    let mut drift = vec![0.0; y.len()];

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![q0.clone()],
        energies: vec![e0.re],
        drift: vec![drift.clone()],
        energy_imag_max: e0.im.abs(),
    };
    let steps = cfg.steps();
    let mut last_energy = e0.re;
    let mut last_step = 0usize;
    for n in 1..=steps {
        stepper.step(&mut y, cfg.dt, &mut drift);
        if n % cfg.sample_every == 0 || n == steps {
            let t = n as f64 * cfg.dt;
            let e = energy.eval(&y);
            // Average change per step since the previous sample.
            let jump = (e.re - last_energy).abs() / scale / (n - last_step) as f64;
            if !e.re.is_finite() || jump > STEP_ENERGY_TOL {
                return Err(Error::StepUnstable { time: t, jump });
            }
            last_energy = e.re;
            last_step = n;
            traj.times.push(t);
            traj.states.push(StateVector::from_amplitudes(bx, y.clone()));
            traj.energies.push(e.re);
            traj.drift.push(drift.clone());
            traj.energy_imag_max = traj.energy_imag_max.max(e.im.abs());
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    /// `max_t max_j |I_j(t) - I_j(0)| (1 + <j>)^{3 sigma}`.
    pub weighted_sup: f64,
    /// First sampled time with weighted drift `>= eps^2`.
    pub escape_time: Option<f64>,
    /// `max_t |I_j(t) - I_j(0)|` in canonical site order.
    pub per_site: Vec<f64>,
}

fn log_weight(j: &Site, sigma: f64, variant: NormVariant) -> f64 {
    let r = match variant {
        NormVariant::Plain => j.l1(),
        NormVariant::Tilde => j.bracket_radius(),
    };
    3.0 * sigma * (1.0 + r as f64).ln()
}

/// `|x| * exp(lw)` without overflowing the weight on its own.
fn weighted(x: f64, lw: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        (x.abs().ln() + lw).exp()
    }
}

pub fn action_drift_report(traj: &Trajectory, sigma: f64, eps: f64) -> DriftReport {
    let bx = traj.box_spec();
    let lw: Vec<f64> = bx.sites().map(|j| log_weight(&j, sigma, NormVariant::Tilde)).collect();
    let mut per_site = vec![0.0f64; bx.num_sites()];
    let mut weighted_sup = 0.0f64;
    let mut escape_time = None;
    let threshold = eps * eps;
    for (t, row) in traj.times.iter().zip(&traj.drift) {
        let mut now = 0.0f64;
        for (i, d) in row.iter().enumerate() {
            per_site[i] = per_site[i].max(d.abs());
            now = now.max(weighted(*d, lw[i]));
        }
        weighted_sup = weighted_sup.max(now);
        if escape_time.is_none() && now >= threshold {
            escape_time = Some(*t);
        }
    }
    DriftReport {
        weighted_sup,
        escape_time,
        per_site,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalityRow {
    pub site: Vec<i32>,
    pub max_drift: f64,
    /// `max_drift / (eps^2 (1 + |j|_1)^{-3 sigma})`.
    pub ratio: f64,
    /// Boundary sites feel the missing couplings outside the box.
    pub boundary: bool,
}

pub fn locality_profile(traj: &Trajectory, sigma: f64, eps: f64) -> Vec<LocalityRow> {
    let bx = traj.box_spec();
    let rep = action_drift_report(traj, sigma, eps);
    bx.sites()
        .zip(rep.per_site)
        .map(|(j, d)| LocalityRow {
            site: j.coords().to_vec(),
            max_drift: d,
            ratio: weighted(d, log_weight(&j, sigma, NormVariant::Plain)) / (eps * eps),
            boundary: bx.is_boundary(&j),
        })
        .collect()
}

fn site_label(j: &Site) -> String {
    j.coords().iter().map(i32::to_string).collect::<Vec<_>>().join(";")
}

pub fn locality_csv(rows: &[LocalityRow]) -> String {
    let mut out = String::from("site,max_drift,ratio,boundary\n");
    for r in rows {
        let label = r.site.iter().map(i32::to_string).collect::<Vec<_>>().join(";");
        out.push_str(&format!("{label},{:e},{:e},{}\n", r.max_drift, r.ratio, r.boundary));
    }
    out
}

/// `#`-prefixed header lines, then `t,energy,re[j],im[j]...,I[j]...` rows.
pub fn trajectory_csv(traj: &Trajectory, header: &[String]) -> String {
    let bx = traj.box_spec();
    let labels: Vec<String> = bx.sites().map(|j| site_label(&j)).collect();
    let mut out = String::new();
    for line in header {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("t,energy");
    for l in &labels {
        out.push_str(&format!(",re[{l}],im[{l}]"));
    }
    for l in &labels {
        out.push_str(&format!(",I[{l}]"));
    }
    out.push('\n');
    for ((t, s), e) in traj.times.iter().zip(&traj.states).zip(&traj.energies) {
        out.push_str(&format!("{t},{e:e}"));
        for z in s.amplitudes() {
            out.push_str(&format!(",{:e},{:e}", z.re, z.im));
        }
        for z in s.amplitudes() {
            out.push_str(&format!(",{:e}", z.norm_sqr()));
        }
        out.push('\n');
    }
    out
}

/// Random state with `q_0 = 0` and `|q_j| <= 2 eps (1 + <j>)^{-sigma}`.
pub fn sample_admissible_state(seed: u64, trial: u64, bx: BoxSpec, sigma: f64, eps: f64) -> StateVector {
    let amps = bx
        .sites()
        .map(|j| {
            if j.l1() == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let r = keyed_uniform(seed, Stream::State, trial, &j);
            let phi = keyed_uniform(seed, Stream::Phase, trial, &j) * std::f64::consts::TAU;
            let cap = 2.0 * eps / NormVariant::Tilde.weight(&j, sigma);
            Complex64::from_polar(r * cap, phi)
        })
        .collect();
    StateVector::from_amplitudes(bx, amps)
}

/// `{I_j, R}` for every site, lowered for repeated evaluation.
#[derive(Clone, Debug)]
pub struct ActionBrackets {
    bx: BoxSpec,
    per_site: Vec<CompiledPoly>,
}

impl ActionBrackets {
    pub fn new(r: &HamPoly, bx: BoxSpec) -> Result<Self> {
        let zeta = vec![0.0; bx.num_sites()];
        let per_site = bx
            .sites()
            .map(|j| {
                let touching = r.filter(|k| k.support().any(|s| s == j));
                let b = crate::algebra::poisson_bracket(
                    &HamPoly::monomial(MonoKey::action(j), Complex64::new(1.0, 0.0)),
                    &touching,
                    1.0,
                );
                CompiledPoly::new(&b, bx, &zeta, 1.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ActionBrackets { bx, per_site })
    }

    pub fn eval(&self, q: &StateVector) -> Vec<Complex64> {
        self.per_site.iter().map(|p| p.eval(q.amplitudes())).collect()
    }

    pub fn box_spec(&self) -> BoxSpec {
        self.bx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeCheck {
    /// `|{I_j, R}(q)| / (eps^5 (1 + <j>)^{-3 sigma} 2^{-sigma})`.
    pub ratios: Vec<f64>,
    pub pass: bool,
}

fn check_derivative_preconditions(q: &StateVector, sigma: f64, eps: f64, d: usize) -> Result<()> {
    let bx = q.box_spec();
    if bx.dim() != d {
        return Err(Error::InvalidInput(format!("state has dimension {}, expected {d}", bx.dim())));
    }
    let eps_cap = 2f64.powi(-(12 * d as i32) - 9);
    if !(eps > 0.0 && eps < eps_cap) {
        return Err(Error::PreconditionViolated(format!("eps = {eps:e} is not below 2^-(12d+9) = {eps_cap:e}")));
    }
    if q.get(&Site::origin(d)) != Complex64::new(0.0, 0.0) {
        return Err(Error::PreconditionViolated("amplitude at the origin is nonzero".into()));
    }
    let norm = crate::lattice::sigma_norm(q, sigma, NormVariant::Tilde);
    if norm > 2.0 * eps {
        return Err(Error::PreconditionViolated(format!("tilde sigma-norm {norm:e} exceeds 2 eps")));
    }
    Ok(())
}

pub fn derivative_bound_check_with(
    q: &StateVector,
    brackets: &ActionBrackets,
    sigma: f64,
    eps: f64,
    d: usize,
) -> Result<DerivativeCheck> {
    check_derivative_preconditions(q, sigma, eps, d)?;
    let log_base = 5.0 * eps.ln() - sigma * 2f64.ln();
    let ratios: Vec<f64> = brackets
        .eval(q)
        .iter()
        .zip(q.box_spec().sites())
        .map(|(b, j)| weighted(b.norm(), log_weight(&j, sigma, NormVariant::Tilde) - log_base))
        .collect();
    let pass = ratios.iter().all(|r| *r <= 1.0);
    Ok(DerivativeCheck { ratios, pass })
}

pub fn derivative_bound_check(
    q: &StateVector,
    r: &HamPoly,
    sigma: f64,
    eps: f64,
    d: usize,
) -> Result<DerivativeCheck> {
    check_derivative_preconditions(q, sigma, eps, d)?;
    derivative_bound_check_with(q, &ActionBrackets::new(r, q.box_spec())?, sigma, eps, d)
}
