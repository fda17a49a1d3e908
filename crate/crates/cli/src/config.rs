//! Experiment configuration: one JSON document per experiment.

use std::path::{Path, PathBuf};

use bosedyn::grid::{Grid, TrapSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    HfbRun,
    ClosenessSweep,
    ThermalBuild,
    FockVerify,
    HeatKernelCheck,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::HfbRun => "hfb_run",
            Mode::ClosenessSweep => "closeness_sweep",
            Mode::ThermalBuild => "thermal_build",
            Mode::FockVerify => "fock_verify",
            Mode::HeatKernelCheck => "heat_kernel_check",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub trap: TrapConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub thermal: ThermalConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub closeness: ClosenessOptions,
    #[serde(default)]
    pub fock: FockConfig,
    #[serde(default)]
    pub heat_kernel: HeatKernelConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub dim: usize,
    /// Per axis; a power of two.
    pub points: usize,
    pub half_length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dim: 1, points: 64, half_length: 6.0 }
    }
}

/// `w(x) = prefactor·|x|^s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapConfig {
    pub s: f64,
    pub prefactor: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig { s: 2.0, prefactor: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Gaussian,
}

/// `v(x) = v0·exp(−|x|²/(2σ²))`, entering the dynamics as `v/N_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionConfig {
    pub shape: Shape,
    pub v0: f64,
    pub sigma: f64,
    /// Defaults to `thermal.n_total`.
    #[serde(rename = "N_scale", skip_serializing_if = "Option::is_none")]
    pub n_scale: Option<f64>,
}

impl Default for InteractionConfig {
    fn default() -> Self {
        InteractionConfig { shape: Shape::Gaussian, v0: 1.0, sigma: 1.0, n_scale: None }
    }
}

/// Exactly one of `lambda_over_tc` and `temperature` must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalConfig {
    #[serde(rename = "N_total")]
    pub n_total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_over_tc: Option<f64>,
    #[serde(default, rename = "T", skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Eigenpairs of `−Δ + w` computed for the thermal state.
    #[serde(default = "default_eig_count")]
    pub eig_count: usize,
}

fn default_eig_count() -> usize {
    40
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig { n_total: 100.0, lambda_over_tc: Some(0.5), temperature: None, eig_count: default_eig_count() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    Modes,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between saved frames.
    pub frames: usize,
    pub dense_or_modes: Method,
    /// Largest number of thermal modes kept.
    #[serde(rename = "M_cap", skip_serializing_if = "Option::is_none")]
    pub m_cap: Option<usize>,
    /// Keep the trap in the HFB flow; by default the gas is released.
    pub trap_in_flow: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { dt: 0.005, t_end: 1.0, frames: 20, dense_or_modes: Method::Dense, m_cap: None, trap_in_flow: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosenessOptions {
    pub c_hat: f64,
    pub with_omega: bool,
    pub condensate_phase: f64,
    /// Used by `sweep` when `--n-values` is not given.
    #[serde(rename = "N_values", skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<f64>>,
}

impl Default for ClosenessOptions {
    fn default() -> Self {
        ClosenessOptions { c_hat: 1.0, with_omega: false, condensate_phase: 0.0, n_values: None }
    }
}

/// Instances of the Fock-space checks. Complex numbers are `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub weyl_phi: [f64; 2],
    pub weyl_n_max: usize,
    /// `γ` of the single-mode Bogoliubov and Wick checks.
    pub gamma: f64,
    /// Largest pair occupation kept; the total cap is twice this.
    pub pair_max: usize,
    pub condensate_phi: [f64; 2],
    pub condensate_gamma: f64,
    /// Total cap for the Bogoliubov relations on few-particle vectors.
    pub relations_n_max: usize,
    pub wick_samples: usize,
    pub generator_m: usize,
    pub generator_n_max: usize,
    pub generator_seeds: usize,
    pub generator_n_scale: f64,
}

impl Default for FockConfig {
    fn default() -> Self {
        FockConfig {
            weyl_phi: [0.3, 0.0],
            weyl_n_max: 16,
            gamma: 0.25,
            pair_max: 20,
            condensate_phi: [0.3, -0.1],
            condensate_gamma: 0.1,
            relations_n_max: 64,
            wick_samples: 4,
            generator_m: 2,
            generator_n_max: 6,
            generator_seeds: 5,
            generator_n_scale: 10.0,
        }
    }
}

/// Radial three-dimensional heat-kernel check; the trap prefactor comes from
/// `trap`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatKernelConfig {
    pub exponents: Vec<f64>,
    pub times: Vec<f64>,
}

impl Default for HeatKernelConfig {
    fn default() -> Self {
        HeatKernelConfig { exponents: vec![1.0, 1.5, 2.0], times: vec![0.5, 1.0, 2.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub number_rel: f64,
    pub energy_rel: f64,
    pub positivity: f64,
    pub weyl: f64,
    pub bogoliubov: f64,
    pub relations: f64,
    pub wick: f64,
    pub condensate_pdm: f64,
    pub generator: f64,
    /// Allowed factor over `(π/t)^{3/2}`.
    pub heat_kernel_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            number_rel: 1e-6,
            energy_rel: 1e-6,
            positivity: 1e-8,
            weyl: 1e-8,
            bogoliubov: 1e-9,
            relations: 1e-9,
            wick: 1e-8,
            condensate_pdm: 1e-8,
            generator: 1e-10,
            heat_kernel_factor: 1.001,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: `{field}` {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn bad(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

fn positive(field: &'static str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive (got {x})")))
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical serialization, without `output_dir`.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { output_dir: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<Grid<f64>, ConfigError> {
        Grid::new(self.grid.dim, self.grid.points, self.grid.half_length).map_err(|e| bad("grid", e.to_string()))
    }

    pub fn trap_spec(&self) -> Result<TrapSpec<f64>, ConfigError> {
        TrapSpec::new(self.trap.s, self.trap.prefactor).map_err(|e| bad("trap", e.to_string()))
    }

    pub fn n_scale(&self) -> f64 {
        self.interaction.n_scale.unwrap_or(self.thermal.n_total)
    }

    /// Rejects non-physical parameters before anything is written.
    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("trap.s", self.trap.s)?;
        if !(self.trap.prefactor >= 0.0) {
            return Err(bad("trap.prefactor", "must be non-negative"));
        }
        self.trap_spec()?;
        self.grid()?;
        if !(self.interaction.v0 >= 0.0) || !self.interaction.v0.is_finite() {
            return Err(bad("interaction.v0", "must be non-negative"));
        }
        positive("interaction.sigma", self.interaction.sigma)?;
        positive("interaction.N_scale", self.n_scale())?;
        positive("thermal.N_total", self.thermal.n_total)?;
        match (self.thermal.lambda_over_tc, self.thermal.temperature) {
            (Some(r), None) if r >= 0.0 && r.is_finite() => {}
            (None, Some(t)) if t >= 0.0 && t.is_finite() => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(bad("thermal", "give exactly one of `lambda_over_tc` and `T`"));
            }
            _ => return Err(bad("thermal", "temperature parameters must be non-negative")),
        }
        if self.thermal.eig_count < 2 {
            return Err(bad("thermal.eig_count", "must be at least 2"));
        }
        positive("integrator.dt", self.integrator.dt)?;
        positive("integrator.t_end", self.integrator.t_end)?;
        if self.integrator.frames == 0 {
            return Err(bad("integrator.frames", "must be at least 1"));
        }
        if self.integrator.m_cap == Some(0) {
            return Err(bad("integrator.M_cap", "must be at least 1"));
        }
        if !(self.closeness.c_hat >= 0.0) {
            return Err(bad("closeness.c_hat", "must be non-negative"));
        }
        if let Some(ns) = &self.closeness.n_values {
            for &n in ns {
                positive("closeness.N_values", n)?;
            }
        }
        let f = &self.fock;
        if !(f.gamma >= 0.0) || !(f.condensate_gamma >= 0.0) {
            return Err(bad("fock.gamma", "must be non-negative"));
        }
        if f.weyl_n_max == 0 || f.pair_max == 0 || f.relations_n_max == 0 || f.generator_n_max == 0 {
            return Err(bad("fock", "occupation cutoffs must be positive"));
        }
        if f.generator_m == 0 || f.generator_seeds == 0 || f.wick_samples == 0 {
            return Err(bad("fock", "generator_m, generator_seeds and wick_samples must be positive"));
        }
        positive("fock.generator_n_scale", f.generator_n_scale)?;
        for &s in &self.heat_kernel.exponents {
            if !(s > 0.0 && s <= 2.0) {
                return Err(bad("heat_kernel.exponents", format!("need 0 < s ≤ 2 (got {s})")));
            }
        }
        for &t in &self.heat_kernel.times {
            positive("heat_kernel.times", t)?;
        }
        let tol = &self.tolerances;
        for (name, x) in [
            ("tolerances.number_rel", tol.number_rel),
            ("tolerances.energy_rel", tol.energy_rel),
            ("tolerances.positivity", tol.positivity),
            ("tolerances.weyl", tol.weyl),
            ("tolerances.bogoliubov", tol.bogoliubov),
            ("tolerances.relations", tol.relations),
            ("tolerances.wick", tol.wick),
            ("tolerances.condensate_pdm", tol.condensate_pdm),
            ("tolerances.generator", tol.generator),
            ("tolerances.heat_kernel_factor", tol.heat_kernel_factor),
        ] {
            positive(name, x)?;
        }
        Ok(())
    }
}
