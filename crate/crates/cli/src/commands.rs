use std::fs;
use std::path::{Path, PathBuf};

use latticenf::algebra::{
    build_model_hamiltonian, build_original_hamiltonian, nearest_neighbour_coupling, short_range_family, HamPoly,
    TermRecord,
};
use latticenf::dynamics::{
    action_drift_report, integrate, locality_profile, sample_admissible_state, trajectory_csv, DriftReport,
    IntegratorConfig, LocalityRow,
};
use latticenf::lattice::BoxSpec;
use latticenf::media::{frequencies, sample_inner, sample_media, InnerParams, Media};
use latticenf::nonres::{check_nonresonance, measure_mc, MeasureResult, NonResReport};
use latticenf::normal_form::{bound_ledger, choose_m, resume_bnf, BnfConfig, BnfReport, BnfStage, BoundEntry};
use latticenf::selftest::{run_selftest, SelfTestOptions, SelfTestSummary};
use serde::{Deserialize, Serialize};

use crate::config::{MediaChoice, Perturbation, RunConfig};
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub struct Context {
    config: Option<PathBuf>,
    output: Option<PathBuf>,
    seed: Option<u64>,
}

impl Context {
    pub fn new(config: Option<&Path>, output: Option<PathBuf>, seed: Option<u64>) -> Self {
        Context { config: config.map(Path::to_path_buf), output, seed }
    }

    fn load(&self) -> Result<RunConfig, CliError> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| CliError::Config("--config <path> is required for this command".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.output.clone().unwrap_or_else(|| PathBuf::from("out"));
        fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

/// Common header of every output file.
#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format_version: u32,
    command: String,
    config: RunConfig,
    #[serde(flatten)]
    body: T,
}

fn envelope<T>(command: &str, config: &RunConfig, body: T) -> Envelope<T> {
    Envelope { format_version: FORMAT_VERSION, command: command.into(), config: config.clone(), body }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

struct Instance {
    bx: BoxSpec,
    media: Media,
    zeta: InnerParams,
    r: HamPoly,
}

fn instance(cfg: &RunConfig) -> Result<Instance, CliError> {
    let bx = BoxSpec::new(cfg.d, cfg.l)?;
    let media = match cfg.media {
        MediaChoice::Random => sample_media(cfg.seed, bx),
        MediaChoice::Zero => Media::constant(bx, 0.0)?,
    };
    let zeta = match cfg.inner {
        MediaChoice::Random => sample_inner(cfg.seed, bx, cfg.sigma),
        MediaChoice::Zero => InnerParams::zeros(bx, cfg.sigma),
    };
    let r = match cfg.perturbation {
        Perturbation::ShortRange => short_range_family(bx, 1.0),
        Perturbation::NearestNeighbour => nearest_neighbour_coupling(bx, 1.0),
        Perturbation::None => HamPoly::zero(),
    };
    Ok(Instance { bx, media, zeta, r })
}

fn resolve_m(cfg: &RunConfig) -> Result<u32, CliError> {
    match cfg.m {
        Some(m) => Ok(m),
        None => choose_m(cfg.eps, cfg.sigma)
            .map(|c| c.m)
            .map_err(|e| CliError::Config(format!("config field `M` is absent and cannot be chosen: {e}"))),
    }
}

#[derive(Serialize)]
struct SelftestFile<'a> {
    format_version: u32,
    command: &'static str,
    seed: u64,
    #[serde(flatten)]
    summary: &'a SelfTestSummary,
}

pub fn selftest(ctx: &Context, corrupt_bracket_sign: bool) -> Result<(), CliError> {
    let mut opts = SelfTestOptions { corrupt_bracket_sign, ..Default::default() };
    if let Some(seed) = ctx.seed {
        opts.seed = seed;
    }
    let summary = run_selftest(&opts);
    let file = SelftestFile { format_version: FORMAT_VERSION, command: "selftest", seed: opts.seed, summary: &summary };
    println!("{}", serde_json::to_string_pretty(&file).map_err(|e| CliError::Config(e.to_string()))?);
    if ctx.output.is_some() {
        write_json(&ctx.out_dir()?.join("selftest.json"), &file)?;
    }
    match summary.first_failure {
        None => Ok(()),
        Some(name) => Err(CliError::Property(format!("self-test suite `{name}` failed"))),
    }
}

#[derive(Serialize)]
struct NonresBody {
    #[serde(rename = "M")]
    m: u32,
    omega: Vec<f64>,
    report: NonResReport,
}

pub fn nonres(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.load()?;
    let inst = instance(&cfg)?;
    let m = resolve_m(&cfg)?;
    let omega = frequencies(&inst.media, &inst.zeta, cfg.eps)?;
    let report = check_nonresonance(&omega, cfg.eta, m, cfg.sigma, inst.bx)?;
    let resonant = !report.is_nonresonant();
    let count = report.violations.len();
    let body = NonresBody { m, omega: omega.values().to_vec(), report };
    write_json(&ctx.out_dir()?.join("nonres_report.json"), &envelope("nonres", &cfg, body))?;
    if resonant {
        return Err(CliError::Property(format!("{count} small-divisor violations")));
    }
    Ok(())
}

#[derive(Serialize)]
struct MeasureBody {
    #[serde(rename = "M")]
    m: u32,
    result: MeasureResult,
    eta_target: f64,
    pass: bool,
}

pub fn measure(ctx: &Context) -> Result<(), CliError> {
    let cfg = ctx.load()?;
    cfg.require_trials()?;
    let inst = instance(&cfg)?;
    let m = resolve_m(&cfg)?;
    let result = measure_mc(cfg.eta, m, inst.bx, cfg.sigma, cfg.eps, &inst.media, cfg.trials, cfg.seed)?;
    let pass = result.fraction_resonant <= cfg.eta + 3.0 * result.stderr;
    let fraction = result.fraction_resonant;
    let body = MeasureBody { m, result, eta_target: cfg.eta, pass };
    write_json(&ctx.out_dir()?.join("measure_mc.json"), &envelope("measure", &cfg, body))?;
    if !pass {
        return Err(CliError::Property(format!("resonant fraction {fraction} exceeds eta + 3 stderr")));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointBody {
    stage: BnfStage,
}

#[derive(Serialize)]
struct LedgerBody {
    #[serde(rename = "M")]
    m: u32,
    report: BnfReport,
    z_final_action_only: bool,
    ledger: Vec<BoundEntry>,
    z_final: Vec<TermRecord>,
}

fn checkpoint_path(dir: &Path, s: u32) -> PathBuf {
    dir.join(format!("stage_{s:03}.json"))
}

pub fn normal_form(ctx: &Context, resume: Option<&Path>) -> Result<(), CliError> {
    let cfg = ctx.load()?;
    let inst = instance(&cfg)?;
    let m = resolve_m(&cfg)?;
    if m % 2 != 0 {
        return Err(CliError::Config(format!("config field `M`: the normal form needs an even value, got {m}")));
    }
    let bnf = BnfConfig::new(cfg.eps, cfg.eta, cfg.sigma, m, inst.bx)?;
    let omega = frequencies(&inst.media, &inst.zeta, cfg.eps)?;
    let nr = check_nonresonance(&omega, cfg.eta, m, cfg.sigma, inst.bx)?;
    if !nr.is_nonresonant() {
        return Err(CliError::Property(format!(
            "frequencies are resonant ({} violations); run `nonres` for details",
            nr.violations.len()
        )));
    }

    let start = match resume {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let file: Envelope<CheckpointBody> = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            if file.config != cfg {
                return Err(CliError::Config(format!("{} was written for a different configuration", path.display())));
            }
            file.body.stage
        }
        None => {
            let h = build_model_hamiltonian(inst.bx, cfg.eps, &inst.r, &inst.zeta, &inst.media)?;
            BnfStage::initial(&h, &bnf)?
        }
    };

    let out = ctx.out_dir()?;
    let dir = out.join("checkpoints");
    fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let save = |stage: &BnfStage| {
        let file = envelope("normal-form", &cfg, CheckpointBody { stage: stage.clone() });
        write_json(&checkpoint_path(&dir, stage.s), &file)
    };
    save(&start)?;
    let mut current = start.s;
    let result = resume_bnf(start, &omega, &bnf, |stage| {
        current = stage.s;
        save(stage).map_err(|e| latticenf::Error::InvalidInput(e.to_string()))
    })
    .map_err(|e| {
        let inner = CliError::from(e);
        let msg = format!("stage {current}: {inner}");
        match inner {
            CliError::Config(_) => CliError::Config(msg),
            CliError::Property(_) => CliError::Property(msg),
            CliError::Numerical(_) => CliError::Numerical(msg),
        }
    })?;

    let fin = &result.final_stage;
    let ledger = bound_ledger(&[&fin.z, &fin.r], &bnf);
    let action_only = result.z_final.keys().all(|k| k.is_action_only());
    let ratio = result.report.max_bound_ratio;
    let body = LedgerBody {
        m,
        report: result.report.clone(),
        z_final_action_only: action_only,
        ledger,
        z_final: result.z_final.to_records(),
    };
    write_json(&out.join("bound_ledger.json"), &envelope("normal-form", &cfg, body))?;
    if !action_only {
        return Err(CliError::Property("final normal form is not action-only".into()));
    }
    if ratio > 1.0 {
        return Err(CliError::Property(format!("coefficient bound exceeded (ratio {ratio:e})")));
    }
    Ok(())
}

#[derive(Serialize)]
struct DriftBody {
    report: DriftReport,
    max_relative_energy_error: f64,
    energy_imag_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_perturbation_scale: Option<f64>,
    locality: Vec<LocalityRow>,
}

pub fn simulate(ctx: &Context, perturbation_scale: Option<f64>) -> Result<(), CliError> {
    let cfg = ctx.load()?;
    let inst = instance(&cfg)?;
    let r = match perturbation_scale {
        Some(s) => inst.r.scale_real(s),
        None => inst.r.clone(),
    };
    let h = build_original_hamiltonian(inst.bx, &inst.media, &r, perturbation_scale.is_some())?;
    let q0 = sample_admissible_state(cfg.seed, 0, inst.bx, cfg.sigma, cfg.eps);
    let icfg = IntegratorConfig { dt: cfg.dt, t_end: cfg.t_end, scheme: cfg.scheme, sample_every: cfg.sample_every };
    let traj = integrate(&h, &q0, &icfg, &inst.zeta, cfg.eps)?;

    let out = ctx.out_dir()?;
    let header = vec![
        format!("format_version {FORMAT_VERSION}"),
        "command simulate".to_string(),
        format!("config {}", serde_json::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?),
    ];
    write_text(&out.join("trajectory.csv"), &trajectory_csv(&traj, &header))?;

    let report = action_drift_report(&traj, cfg.sigma, cfg.eps);
    let escape = report.escape_time;
    let body = DriftBody {
        report,
        max_relative_energy_error: traj.max_relative_energy_error(),
        energy_imag_max: traj.energy_imag_max,
        test_perturbation_scale: perturbation_scale,
        locality: locality_profile(&traj, cfg.sigma, cfg.eps),
    };
    write_json(&out.join("drift_report.json"), &envelope("simulate", &cfg, body))?;
    match escape {
        None => Ok(()),
        Some(t) => Err(CliError::Property(format!("weighted action drift reached eps^2 at t = {t}"))),
    }
}
