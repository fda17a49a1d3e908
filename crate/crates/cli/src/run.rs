//! Pipelines behind `run`, `sweep` and `verify-fock`, and their artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use bosedyn::diagnostics::{
    closeness_run, closeness_runs, fmt_f64, pairing_bound_gap, positivity_margin, sup_kernel, ClosenessConfig,
    ClosenessRun, SweepResult, DENSE_FALLBACK_MAX, SWEEP_COLUMNS,
};
use bosedyn::fock::{
    assemble_generator, random_generator_input, verify_bogoliubov_pdm, verify_bogoliubov_relations,
    verify_commutator_identity, verify_weyl_shift, verify_wick, CMat, FockSpace, IdentityReport, ToyQuasiFree,
};
use bosedyn::grid::{Field, Grid, TrapSpec};
use bosedyn::heat_kernel::{radial_heat_kernel_check, RadialOptions};
use bosedyn::hfb::{Complement, DenseHfb, DensePdm, DenseState, HfbEnergy, ModeHfb, ModeOptions, ModeState};
use bosedyn::interaction::InteractionSpec;
use bosedyn::spectral::{lowest_eigenpairs, SpectralData};
use bosedyn::thermal::{
    assumption_diagnostics, build_thermal_pdm_capped, condensate, condensate_fraction, ThermalModel, ThermalPdm,
};
use bosedyn::Error;
use num_complex::Complex64 as C;
use serde::Serialize;
use serde_json::Value;

use crate::config::{ConfigError, ExperimentConfig, Method, Mode};

pub const SCHEMA_VERSION: u32 = 1;
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const HFB_COLUMNS: [&str; 11] = [
    "t",
    "number",
    "energy",
    "one_body",
    "condensate_cloud",
    "cloud_cloud",
    "pairing",
    "alpha_hs",
    "positivity_margin",
    "pairing_gap",
    "sup_kernel",
];
pub const THERMAL_COLUMNS: [&str; 3] = ["j", "energy", "weight"];
pub const FOCK_COLUMNS: [&str; 5] = ["identity", "max_deviation", "tolerance", "truncation_estimate", "pass"];
pub const HEAT_KERNEL_COLUMNS: [&str; 9] =
    ["s", "t", "l1_mass", "bound", "min_kernel_value", "truncation_estimate", "signed_mass", "outside_mass", "pass"];

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Run,
    /// `N` values from the command line; the config's list otherwise.
    Sweep(Option<Vec<f64>>),
    VerifyFock,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Sweep(_) => "sweep",
            Command::VerifyFock => "verify-fock",
        }
    }
}

/// One asserted quantity: `value ≤ limit` (or `≥` for lower bounds).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub bound: &'static str,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, bound: "max", pass: value <= limit }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check { name: name.into(), value, limit, bound: "min", pass: value >= limit }
    }
}

/// Outputs of a pipeline before they are written.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub mode: Mode,
    pub csv_name: &'static str,
    pub csv: String,
    pub result: Value,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
    pub partial: Option<Artifacts>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NormDrift { .. }
            | Error::TraceDrift { .. }
            | Error::SymmetryDrift { .. }
            | Error::ProbeDisagreement { .. }
            | Error::NotHermitian { .. }
            | Error::NonConvergence { .. }
            | Error::EnergyIncrease { .. }
            | Error::Oscillation { .. } => EXIT_VIOLATION,
            _ => EXIT_CONFIG,
        };
        Failure { code, message: e.to_string(), partial: None }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: EXIT_CONFIG, message: e.to_string(), partial: None }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Complete,
    InvariantViolation,
    ConfigError,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub status: Status,
    pub command: String,
    pub mode: Option<String>,
    pub config_hash: Option<String>,
    pub code_version: String,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub frames_csv: Option<String>,
    pub summary_json: Option<String>,
    pub warnings: Vec<String>,
    pub failure: Option<String>,
    pub exit_code: Option<i32>,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    command: &'a str,
    mode: &'a str,
    config_hash: &'a str,
    pass: bool,
    checks: &'a [Check],
    warnings: &'a [String],
    /// Set when a member run failed and only part of the results exist.
    #[serde(skip_serializing_if = "Option::is_none")]
    partial_failure: Option<&'a str>,
    result: &'a Value,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Writes through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn write_manifest(dir: &Path, m: &RunManifest) -> std::io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(m).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &bytes)
}

/// Output directory: the flag, then `BOSEDYN_OUTPUT_DIR`, then the config,
/// then `bosedyn-out`.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os("BOSEDYN_OUTPUT_DIR").filter(|p| !p.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.and_then(|c| c.output_dir.clone()).unwrap_or_else(|| PathBuf::from("bosedyn-out"))
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub manifest: RunManifest,
    pub output_dir: PathBuf,
}

/// Runs `command` and writes the manifest (always), CSV and summary JSON
/// into `output_dir`.
pub fn execute(command: &Command, config: Result<ExperimentConfig, ConfigError>, output_dir: &Path) -> RunOutcome {
    let mut manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        status: Status::Running,
        command: command.name().into(),
        mode: None,
        config_hash: None,
        code_version: env!("CARGO_PKG_VERSION").into(),
        started_at_unix: now_unix(),
        finished_at_unix: None,
        frames_csv: None,
        summary_json: None,
        warnings: vec![],
        failure: None,
        exit_code: None,
    };
    let finish = |mut manifest: RunManifest, status: Status, code: i32, failure: Option<String>| {
        manifest.status = status;
        manifest.exit_code = Some(code);
        manifest.failure = failure;
        manifest.finished_at_unix = Some(now_unix());
        if let Err(e) = write_manifest(output_dir, &manifest) {
            eprintln!("cannot write manifest in {}: {e}", output_dir.display());
        }
        RunOutcome { exit_code: code, manifest, output_dir: output_dir.to_path_buf() }
    };
    if let Err(e) = fs::create_dir_all(output_dir).and_then(|_| write_manifest(output_dir, &manifest)) {
        let msg = format!("output directory {} is not writable: {e}", output_dir.display());
        manifest.status = Status::ConfigError;
        manifest.exit_code = Some(EXIT_CONFIG);
        manifest.failure = Some(msg);
        return RunOutcome { exit_code: EXIT_CONFIG, manifest, output_dir: output_dir.to_path_buf() };
    }
    let cfg = match config.and_then(|c| c.validate().map(|_| c)) {
        Ok(c) => c,
        Err(e) => return finish(manifest, Status::ConfigError, EXIT_CONFIG, Some(e.to_string())),
    };
    let hash = cfg.hash();
    manifest.config_hash = Some(hash.clone());
    manifest.mode = Some(match command {
        Command::VerifyFock => Mode::FockVerify.as_str().into(),
        _ => cfg.mode.as_str().into(),
    });
    let produced = dispatch(command, &cfg);
    let (artifacts, failure) = match produced {
        Ok(a) => (Some(a), None),
        Err(f) => (f.partial.clone(), Some(f)),
    };
    if let Some(a) = &artifacts {
        let pass = a.checks.iter().all(|c| c.pass);
        let summary = Summary {
            schema_version: SCHEMA_VERSION,
            command: command.name(),
            mode: a.mode.as_str(),
            config_hash: &hash,
            pass: pass && failure.is_none(),
            checks: &a.checks,
            warnings: &a.warnings,
            partial_failure: failure.as_ref().map(|f| f.message.as_str()),
            result: &a.result,
        };
        let mut json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
        json.push(b'\n');
        let written = write_atomic(&output_dir.join(a.csv_name), a.csv.as_bytes())
            .and_then(|_| write_atomic(&output_dir.join(SUMMARY_FILE), &json));
        if let Err(e) = written {
            return finish(manifest, Status::Failed, EXIT_CONFIG, Some(format!("cannot write outputs: {e}")));
        }
        manifest.frames_csv = Some(a.csv_name.into());
        manifest.summary_json = Some(SUMMARY_FILE.into());
        manifest.warnings = a.warnings.clone();
    }
    if let Some(f) = failure {
        let status = if f.code == EXIT_CONFIG && f.partial.is_none() { Status::ConfigError } else { Status::Failed };
        return finish(manifest, status, f.code, Some(f.message));
    }
    let a = artifacts.expect("artifacts on success");
    let failed: Vec<String> = a.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    if failed.is_empty() {
        finish(manifest, Status::Complete, EXIT_OK, None)
    } else {
        let msg = format!("checks failed: {}", failed.join(", "));
        finish(manifest, Status::InvariantViolation, EXIT_VIOLATION, Some(msg))
    }
}

fn dispatch(command: &Command, cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    match command {
        Command::VerifyFock => fock_verify(cfg),
        Command::Sweep(ns) => {
            if cfg.mode != Mode::ClosenessSweep {
                return Err(ConfigError::Invalid { field: "mode", reason: "`sweep` needs mode closeness_sweep".into() }.into());
            }
            let ns = ns.clone().or_else(|| cfg.closeness.n_values.clone()).ok_or_else(|| ConfigError::Invalid {
                field: "closeness.N_values",
                reason: "no N values given (use --n-values)".into(),
            })?;
            closeness_sweep(cfg, &ns)
        }
        Command::Run => match cfg.mode {
            Mode::ThermalBuild => thermal_build(cfg),
            Mode::HfbRun => hfb_run(cfg),
            Mode::ClosenessSweep => closeness_single(cfg),
            Mode::FockVerify => fock_verify(cfg),
            Mode::HeatKernelCheck => heat_kernel_check(cfg),
        },
    }
}

fn csv_table(columns: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = columns.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn to_value(x: &impl Serialize) -> Value {
    serde_json::to_value(x).expect("result serializes")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

struct Initial {
    grid: Grid<f64>,
    spec: SpectralData<f64>,
    model: ThermalModel<f64>,
    pdm: ThermalPdm<f64>,
    phi: Field<f64>,
    warnings: Vec<String>,
}

fn initial_data(cfg: &ExperimentConfig) -> Outcome<Initial> {
    let grid = cfg.grid()?;
    let trap = cfg.trap_spec()?;
    let spec = lowest_eigenpairs(&grid, &trap, cfg.thermal.eig_count, 1e-10)?;
    let n = cfg.thermal.n_total;
    let model = match (cfg.thermal.lambda_over_tc, cfg.thermal.temperature) {
        (Some(r), _) => ThermalModel::from_lambda_ratio(&spec, n, r)?,
        (None, Some(t)) => ThermalModel::from_temperature(&spec, n, t)?,
        (None, None) => unreachable!("validated"),
    };
    let pdm = build_thermal_pdm_capped(&model, &spec, cfg.integrator.m_cap)?;
    let phi = condensate(&pdm, n, &spec.eigenfunctions[0])?;
    let mut warnings = vec![];
    if spec.boundary_warning {
        warnings.push("eigenfunctions carry mass near the box boundary; enlarge half_length".into());
    }
    if model.formula_only {
        warnings.push("critical temperature and condensate fraction use the three-dimensional formulas".into());
    }
    Ok(Initial { grid, spec, model, pdm, phi, warnings })
}

#[derive(Serialize)]
struct ThermalResult {
    #[serde(rename = "N_total")]
    n_total: f64,
    #[serde(rename = "T_c")]
    t_c: f64,
    temperature: f64,
    lambda_over_tc: f64,
    chemical_potential: f64,
    modes: usize,
    trace_gamma: f64,
    retained_trace: f64,
    discarded_trace: f64,
    phi_norm_sq: f64,
    number_rel_error: f64,
    top_weight: f64,
    op_norm: f64,
    condensate_fraction: f64,
    formula_condensate_fraction: f64,
    formula_only: bool,
    fourier_l1: f64,
    h3_trace: f64,
    ground_energy: f64,
}

fn thermal_build(cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    let init = initial_data(cfg)?;
    let (pdm, model) = (&init.pdm, &init.model);
    let n = cfg.thermal.n_total;
    let phi_sq = init.phi.norm_sq();
    let number_rel_error = rel(pdm.trace() + phi_sq, n);
    let top_weight = pdm.weights.iter().copied().fold(0.0, f64::max);
    let diag = assumption_diagnostics(pdm, &init.grid)?;
    let t_c = model.critical_temperature();
    let result = ThermalResult {
        n_total: n,
        t_c,
        temperature: model.temperature,
        lambda_over_tc: model.temperature / t_c,
        chemical_potential: model.chemical_potential,
        modes: pdm.rank(),
        trace_gamma: pdm.trace(),
        retained_trace: pdm.retained_trace(),
        discarded_trace: pdm.discarded_trace,
        phi_norm_sq: phi_sq,
        number_rel_error,
        top_weight,
        op_norm: diag.op_norm,
        condensate_fraction: phi_sq / n,
        formula_condensate_fraction: condensate_fraction(model.lambda_scaled, cfg.trap.s, cfg.trap.prefactor)?,
        formula_only: model.formula_only,
        fourier_l1: diag.fourier_l1,
        h3_trace: diag.h3_trace,
        ground_energy: init.spec.eigenvalues[0],
    };
    let checks = vec![
        Check::at_most("number_rel_error", number_rel_error, cfg.tolerances.number_rel),
        Check::at_most("op_norm_minus_top_weight", (diag.op_norm - top_weight).abs(), 1e-12 * top_weight.max(1.0)),
    ];
    let rows = pdm
        .weights
        .iter()
        .zip(&pdm.energies)
        .enumerate()
        .map(|(j, (w, e))| vec![(j + 1).to_string(), fmt_f64(*e), fmt_f64(*w)]);
    Ok(Artifacts {
        mode: Mode::ThermalBuild,
        csv_name: "modes.csv",
        csv: csv_table(&THERMAL_COLUMNS, rows),
        result: to_value(&result),
        checks,
        warnings: init.warnings,
    })
}

struct FrameRow {
    t: f64,
    number: f64,
    energy: HfbEnergy<f64>,
    dense: Option<(f64, f64, f64, f64)>,
}

impl FrameRow {
    fn new(t: f64, number: f64, energy: HfbEnergy<f64>, pdm: Option<&DensePdm<f64>>) -> Self {
        let dense = pdm.map(|p| (p.alpha_hs_norm(), positivity_margin(p), pairing_bound_gap(p), sup_kernel(p)));
        FrameRow { t, number, energy, dense }
    }

    fn cells(&self) -> Vec<String> {
        let e = &self.energy;
        let mut v: Vec<String> = [self.t, self.number, e.total(), e.one_body, e.condensate_cloud, e.cloud_cloud, e.pairing]
            .iter()
            .map(|x| fmt_f64(*x))
            .collect();
        match self.dense {
            Some((a, m, g, s)) => v.extend([a, m, g, s].iter().map(|x| fmt_f64(*x))),
            None => v.extend(std::iter::repeat_n(String::new(), 4)),
        }
        v
    }
}

#[derive(Serialize)]
struct HfbResult {
    method: Method,
    frames: usize,
    modes: usize,
    number_initial: f64,
    energy_initial: f64,
    energy_groups_initial: [f64; 4],
    max_number_drift: f64,
    max_energy_drift: f64,
    min_positivity_margin: Option<f64>,
    min_pairing_gap: Option<f64>,
    final_alpha_hs: Option<f64>,
    hermiticity_drift: Option<f64>,
    symmetry_drift: Option<f64>,
    probes: Option<usize>,
    antisymmetry_defect: Option<f64>,
}

fn hfb_run(cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    let init = initial_data(cfg)?;
    let grid = &init.grid;
    let v = InteractionSpec::gaussian(cfg.interaction.v0, cfg.interaction.sigma, cfg.n_scale())?;
    let flow_trap = if cfg.integrator.trap_in_flow { cfg.trap_spec()? } else { TrapSpec::off() };
    let it = &cfg.integrator;
    let dense_ok = grid.len() <= DENSE_FALLBACK_MAX;
    let mut warnings = init.warnings.clone();
    let mut result = HfbResult {
        method: it.dense_or_modes,
        frames: 0,
        modes: init.pdm.rank(),
        number_initial: 0.0,
        energy_initial: 0.0,
        energy_groups_initial: [0.0; 4],
        max_number_drift: 0.0,
        max_energy_drift: 0.0,
        min_positivity_margin: None,
        min_pairing_gap: None,
        final_alpha_hs: None,
        hermiticity_drift: None,
        symmetry_drift: None,
        probes: None,
        antisymmetry_defect: None,
    };
    let rows: Vec<FrameRow> = match it.dense_or_modes {
        Method::Dense => {
            if !dense_ok {
                return Err(Error::Budget { what: "dense HFB grid", size: grid.len(), budget: DENSE_FALLBACK_MAX }.into());
            }
            let pdm = DensePdm::from_modes(grid, &init.pdm.weights, &init.pdm.modes)?;
            let s0 = DenseState::new(init.phi.clone(), pdm, v.clone())?;
            let prop = DenseHfb::new(grid, &v, &flow_trap)?;
            let (traj, rep) = prop.propagate(&s0, it.dt, it.t_end, it.frames)?;
            result.hermiticity_drift = Some(rep.hermiticity_drift);
            result.symmetry_drift = Some(rep.symmetry_drift);
            traj.times
                .iter()
                .zip(&traj.frames)
                .map(|(t, s)| Ok(FrameRow::new(*t, s.number(), prop.energy(s)?, Some(&s.pdm))))
                .collect::<Result<_, Error>>()?
        }
        Method::Modes => {
            if !dense_ok {
                warnings.push("grid too large for dense diagnostics; pairing and positivity columns are empty".into());
            }
            let s0 = ModeState::from_thermal(init.phi.clone(), &init.pdm, v.clone(), Complement::Full)?;
            let prop = ModeHfb::new(grid, &v, &flow_trap, ModeOptions::default())?;
            let (traj, rep) = prop.propagate(&s0, it.dt, it.t_end, it.frames)?;
            result.probes = Some(rep.probes);
            result.antisymmetry_defect = Some(rep.antisymmetry_defect);
            traj.times
                .iter()
                .zip(&traj.frames)
                .map(|(t, s)| {
                    let dense = dense_ok.then(|| s.to_dense());
                    Ok(FrameRow::new(*t, s.number(), prop.energy(s)?, dense.as_ref()))
                })
                .collect::<Result<_, Error>>()?
        }
    };
    let first = &rows[0];
    let (n0, e0) = (first.number, first.energy.total());
    result.frames = rows.len();
    result.number_initial = n0;
    result.energy_initial = e0;
    let g = &first.energy;
    result.energy_groups_initial = [g.one_body, g.condensate_cloud, g.cloud_cloud, g.pairing];
    result.max_number_drift = rows.iter().map(|r| rel(r.number, n0)).fold(0.0, f64::max);
    result.max_energy_drift = rows.iter().map(|r| (r.energy.total() - e0).abs() / e0.abs().max(1.0)).fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_most("max_number_drift", result.max_number_drift, cfg.tolerances.number_rel),
        Check::at_most("max_energy_drift", result.max_energy_drift, cfg.tolerances.energy_rel),
    ];
    if dense_ok {
        let dense: Vec<_> = rows.iter().filter_map(|r| r.dense).collect();
        let margin = dense.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
        let gap = dense.iter().map(|d| d.2).fold(f64::INFINITY, f64::min);
        result.min_positivity_margin = Some(margin);
        result.min_pairing_gap = Some(gap);
        result.final_alpha_hs = dense.last().map(|d| d.0);
        checks.push(Check::at_least("min_positivity_margin", margin, -cfg.tolerances.positivity));
        checks.push(Check::at_least("min_pairing_gap", gap, -cfg.tolerances.positivity));
    }
    Ok(Artifacts {
        mode: Mode::HfbRun,
        csv_name: "frames.csv",
        csv: csv_table(&HFB_COLUMNS, rows.iter().map(FrameRow::cells)),
        result: to_value(&result),
        checks,
        warnings,
    })
}

fn closeness_config(cfg: &ExperimentConfig) -> Outcome<ClosenessConfig> {
    let lambda_over_tc = cfg.thermal.lambda_over_tc.ok_or_else(|| ConfigError::Invalid {
        field: "thermal.lambda_over_tc",
        reason: "closeness experiments are parametrized by lambda_over_tc".into(),
    })?;
    if cfg.interaction.n_scale.is_some() {
        return Err(ConfigError::Invalid {
            field: "interaction.N_scale",
            reason: "closeness experiments scale v by N_total; remove N_scale".into(),
        }
        .into());
    }
    Ok(ClosenessConfig {
        dim: cfg.grid.dim,
        points: cfg.grid.points,
        half_length: cfg.grid.half_length,
        trap: cfg.trap_spec()?,
        n_total: cfg.thermal.n_total,
        lambda_over_tc,
        v0: cfg.interaction.v0,
        sigma: cfg.interaction.sigma,
        dt: cfg.integrator.dt,
        t_end: cfg.integrator.t_end,
        save_every: cfg.integrator.frames,
        c_hat: cfg.closeness.c_hat,
        eig_count: cfg.thermal.eig_count,
        max_modes: cfg.integrator.m_cap,
        with_omega: cfg.closeness.with_omega,
        condensate_phase: cfg.closeness.condensate_phase,
    })
}

#[derive(Serialize)]
struct ClosenessResult<'a> {
    ratio_gamma: f64,
    ratio_phi: f64,
    modes: usize,
    number_drift: f64,
    normalizers: &'a bosedyn::diagnostics::Normalizers,
    final_gamma_trace_dist: f64,
    final_phi_l2_dist: f64,
    final_omega_trace_dist: Option<f64>,
    min_positivity_margin: f64,
}

fn closeness_result(run: &ClosenessRun) -> Value {
    let r = &run.report;
    to_value(&ClosenessResult {
        ratio_gamma: run.ratio_gamma,
        ratio_phi: run.ratio_phi,
        modes: run.modes,
        number_drift: run.number_drift,
        normalizers: &r.normalizers,
        final_gamma_trace_dist: *r.gamma_trace_dist.last().unwrap_or(&0.0),
        final_phi_l2_dist: *r.phi_l2_dist.last().unwrap_or(&0.0),
        final_omega_trace_dist: r.omega_trace_dist.as_ref().and_then(|o| o.last().copied()),
        min_positivity_margin: r.positivity_margin.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

fn closeness_single(cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    let run = closeness_run(&closeness_config(cfg)?)?;
    let checks = vec![Check::at_most("number_drift", run.number_drift, cfg.tolerances.number_rel)];
    Ok(Artifacts {
        mode: Mode::ClosenessSweep,
        csv_name: "frames.csv",
        csv: run.report.to_csv(),
        result: closeness_result(&run),
        checks,
        warnings: vec![],
    })
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    sweep: &'a SweepResult,
    runs: Vec<Value>,
}

fn closeness_sweep(cfg: &ExperimentConfig, n_values: &[f64]) -> Outcome<Artifacts> {
    if n_values.len() < 3 {
        return Err(ConfigError::Invalid { field: "N_values", reason: "at least three values of N are required".into() }.into());
    }
    if let Some(&n) = n_values.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
        return Err(ConfigError::Invalid { field: "N_values", reason: format!("must be positive (got {n})") }.into());
    }
    let base = closeness_config(cfg)?;
    let results = closeness_runs(&base, n_values);
    if results.iter().any(|r| r.is_err()) {
        let mut rows = vec![];
        let mut errors = vec![];
        for (n, r) in n_values.iter().zip(&results) {
            match r {
                Ok(run) => rows.push(vec![
                    fmt_f64(*n),
                    fmt_f64(run.report.normalizers.t_c),
                    fmt_f64(run.ratio_gamma),
                    fmt_f64(run.ratio_phi),
                    String::new(),
                ]),
                Err(e) => errors.push(format!("N = {}: {e}", fmt_f64(*n))),
            }
        }
        let first = results.into_iter().find_map(|r| r.err()).expect("a failed run");
        let mut failure = Failure::from(first);
        failure.message = format!("sweep member failed: {}", errors.join("; "));
        failure.partial = Some(Artifacts {
            mode: Mode::ClosenessSweep,
            csv_name: "sweep.csv",
            csv: csv_table(&SWEEP_COLUMNS, rows),
            result: Value::Null,
            checks: vec![],
            warnings: errors,
        });
        return Err(failure);
    }
    let runs: Vec<ClosenessRun> = results.into_iter().map(|r| r.expect("checked")).collect();
    let sweep = SweepResult::from_runs(n_values, &runs)?;
    let checks = vec![
        Check::at_most("slope_gamma", sweep.slope_gamma, bosedyn::diagnostics::SLOPE_LIMIT),
        Check::at_most("slope_phi", sweep.slope_phi, bosedyn::diagnostics::SLOPE_LIMIT),
    ];
    let result = to_value(&SweepSummary { sweep: &sweep, runs: runs.iter().map(closeness_result).collect() });
    Ok(Artifacts {
        mode: Mode::ClosenessSweep,
        csv_name: "sweep.csv",
        csv: sweep.to_csv(),
        result,
        checks,
        warnings: vec![],
    })
}

fn cplx(z: [f64; 2]) -> C {
    C::new(z[0], z[1])
}

fn scalar_gamma(g: f64) -> CMat {
    CMat::from_element(1, 1, C::new(g, 0.0))
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |w, z| w.max(z.norm()))
}

fn fock_verify(cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    let f = &cfg.fock;
    let tol = &cfg.tolerances;
    let mut reports: Vec<IdentityReport> = vec![];
    let weyl_space = FockSpace::new(1, f.weyl_n_max)?;
    reports.push(verify_weyl_shift(&weyl_space, &[cplx(f.weyl_phi)], tol.weyl)?);

    let pair_space = FockSpace::new(1, 2 * f.pair_max)?;
    let squeezed = ToyQuasiFree::new(scalar_gamma(f.gamma), vec![C::new(0.0, 0.0)])?;
    reports.extend(verify_bogoliubov_pdm(&pair_space, &squeezed, tol.bogoliubov)?);
    let rel_space = FockSpace::new(1, f.relations_n_max)?;
    reports.push(verify_bogoliubov_relations(&rel_space, &squeezed, tol.relations)?);

    let with_condensate = ToyQuasiFree::new(scalar_gamma(f.gamma), vec![cplx(f.condensate_phi)])?;
    reports.push(verify_wick(&pair_space, &with_condensate, tol.wick, cfg.seed, f.wick_samples)?);
    let cloud = ToyQuasiFree::new(scalar_gamma(f.condensate_gamma), vec![cplx(f.condensate_phi)])?;
    for mut r in verify_bogoliubov_pdm(&pair_space, &cloud, tol.condensate_pdm)? {
        r.name = format!("condensate_{}", r.name);
        reports.push(r);
    }

    let gen_space = FockSpace::new(f.generator_m, f.generator_n_max)?;
    let mut commutators = vec![];
    for k in 0..f.generator_seeds as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let input = random_generator_input(f.generator_m, f.generator_n_scale, seed);
        let blocks = assemble_generator(&gen_space, &input)?;
        let herm = max_abs(&(&blocks.g - blocks.g.adjoint()));
        reports.push(IdentityReport {
            name: format!("generator_hermitian_seed_{seed}"),
            max_deviation: herm,
            tolerance: tol.generator,
            truncation_estimate: 0.0,
            pass: herm <= tol.generator,
        });
        let rep = verify_commutator_identity(&gen_space, &blocks, tol.generator);
        reports.push(IdentityReport {
            name: format!("commutator_seed_{seed}"),
            max_deviation: rep.max_deviation,
            tolerance: rep.tolerance,
            truncation_estimate: 0.0,
            pass: rep.pass && rep.constant_insensitive,
        });
        commutators.push(rep);
    }
    let mut degenerate = random_generator_input(f.generator_m, f.generator_n_scale, cfg.seed);
    degenerate.v = CMat::zeros(2 * f.generator_m, 2 * f.generator_m);
    degenerate.phi = vec![C::new(0.0, 0.0); f.generator_m];
    let rep = verify_commutator_identity(&gen_space, &assemble_generator(&gen_space, &degenerate)?, 0.0);
    reports.push(IdentityReport {
        name: "commutator_degenerate".into(),
        max_deviation: rep.max_deviation,
        tolerance: 0.0,
        truncation_estimate: 0.0,
        pass: rep.max_deviation == 0.0,
    });

    let checks: Vec<Check> =
        reports.iter().map(|r| Check::at_most(r.name.clone(), r.max_deviation, r.tolerance)).collect();
    let rows = reports.iter().map(|r| {
        vec![
            r.name.clone(),
            fmt_f64(r.max_deviation),
            fmt_f64(r.tolerance),
            fmt_f64(r.truncation_estimate),
            r.pass.to_string(),
        ]
    });
    let csv = csv_table(&FOCK_COLUMNS, rows);
    #[derive(Serialize)]
    struct FockResult<'a> {
        identities: &'a [IdentityReport],
        commutators: Vec<(usize, usize)>,
    }
    let result =
        to_value(&FockResult { identities: &reports, commutators: commutators.iter().map(|c| c.worst_entry).collect() });
    Ok(Artifacts { mode: Mode::FockVerify, csv_name: "identities.csv", csv, result, checks, warnings: vec![] })
}

fn heat_kernel_check(cfg: &ExperimentConfig) -> Outcome<Artifacts> {
    let hk = &cfg.heat_kernel;
    let factor = cfg.tolerances.heat_kernel_factor;
    let opts = RadialOptions::default();
    let mut rows = vec![];
    let mut checks = vec![];
    #[derive(Serialize)]
    struct Row {
        s: f64,
        t: f64,
        l1_mass: f64,
        bound: f64,
        min_kernel_value: f64,
        truncation_estimate: f64,
        signed_mass: f64,
        outside_mass: f64,
    }
    let mut table = vec![];
    for &s in &hk.exponents {
        let reports = radial_heat_kernel_check(s, cfg.trap.prefactor, &hk.times, &opts)?;
        for (&t, r) in hk.times.iter().zip(&reports) {
            let mass = Check::at_most(format!("l1_mass_s{s}_t{t}"), r.l1_mass, factor * r.bound);
            let min = Check::at_least(format!("min_kernel_s{s}_t{t}"), r.min_kernel_value, -r.truncation_estimate);
            let pass = mass.pass && min.pass;
            rows.push(vec![
                fmt_f64(s),
                fmt_f64(t),
                fmt_f64(r.l1_mass),
                fmt_f64(r.bound),
                fmt_f64(r.min_kernel_value),
                fmt_f64(r.truncation_estimate),
                fmt_f64(r.signed_mass),
                fmt_f64(r.outside_mass),
                pass.to_string(),
            ]);
            checks.extend([mass, min]);
            table.push(Row {
                s,
                t,
                l1_mass: r.l1_mass,
                bound: r.bound,
                min_kernel_value: r.min_kernel_value,
                truncation_estimate: r.truncation_estimate,
                signed_mass: r.signed_mass,
                outside_mass: r.outside_mass,
            });
        }
    }
    Ok(Artifacts {
        mode: Mode::HeatKernelCheck,
        csv_name: "heat_kernel.csv",
        csv: csv_table(&HEAT_KERNEL_COLUMNS, rows),
        result: to_value(&table),
        checks,
        warnings: vec![],
    })
}
