//! Trace-norm distances, positivity, diluteness and the closeness-of-dynamics
//! comparison with its N-sweep.

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fft::FourierOps;
use crate::grid::{Grid, TrapSpec};
use crate::hartree::propagate_hartree_with;
use crate::hartree::HartreeOptions;
use crate::hfb::{free_conjugate_dense, free_propagate_field, to_orthonormal, CMat, CVec, DenseHfb, DensePdm, DenseState, ModeState};
use crate::interaction::InteractionSpec;
use crate::scalar::{cabs, creal, lit, to_f64, Real};
use crate::spectral::lowest_eigenpairs;
use crate::thermal::{build_thermal_pdm_capped, condensate, ThermalModel, ThermalPdm};
use crate::trajectory::{log_growth_rate, Trajectory};

/// Largest grid for which a low-rank operand is materialized densely.
pub const DENSE_FALLBACK_MAX: usize = 2048;

/// A 1-pdm in any of the supported representations.
#[derive(Clone, Copy, Debug)]
pub enum PdmView<'a, T: Real> {
    Dense(&'a DensePdm<T>),
    Modes(&'a ModeState<T>),
    Thermal(&'a ThermalPdm<T>),
}

impl<'a, T: Real> From<&'a DensePdm<T>> for PdmView<'a, T> {
    fn from(p: &'a DensePdm<T>) -> Self {
        PdmView::Dense(p)
    }
}

impl<'a, T: Real> From<&'a ModeState<T>> for PdmView<'a, T> {
    fn from(p: &'a ModeState<T>) -> Self {
        PdmView::Modes(p)
    }
}

impl<'a, T: Real> From<&'a ThermalPdm<T>> for PdmView<'a, T> {
    fn from(p: &'a ThermalPdm<T>) -> Self {
        PdmView::Thermal(p)
    }
}

impl<T: Real> PdmView<'_, T> {
    fn grid(&self) -> Option<&Grid<T>> {
        match self {
            PdmView::Dense(p) => Some(p.grid()),
            PdmView::Modes(m) => Some(m.grid()),
            PdmView::Thermal(t) => t.grid(),
        }
    }

    /// `γ = Σ c_k f_k f_k*` with orthonormal-basis vectors `f_k`.
    fn factors(&self) -> Option<(Vec<T>, Vec<CVec<T>>)> {
        let mut c = Vec::new();
        let mut f = Vec::new();
        match self {
            PdmView::Dense(_) => return None,
            PdmView::Modes(m) => {
                for ((w, a), b) in m.weights.iter().zip(&m.modes_a).zip(&m.modes_b) {
                    if *w != T::zero() {
                        c.push(*w);
                        f.push(to_orthonormal(a));
                    }
                    if b.norm_sq() > T::zero() {
                        c.push(T::one() + *w);
                        f.push(to_orthonormal(b));
                    }
                }
            }
            PdmView::Thermal(t) => {
                for (w, m) in t.weights.iter().zip(&t.modes) {
                    c.push(*w);
                    f.push(to_orthonormal(m));
                }
            }
        }
        Some((c, f))
    }

    fn dense_gamma(&self, n: usize, budget: usize) -> Result<CMat<T>> {
        match self {
            PdmView::Dense(p) => Ok(p.gamma.clone()),
            _ => {
                if n > budget {
                    return Err(Error::Budget { what: "dense fallback grid (subsample with a coarser probe grid)", size: n, budget });
                }
                let (c, f) = self.factors().expect("low-rank view");
                let mut g = CMat::zeros(n, n);
                for (c, f) in c.iter().zip(&f) {
                    g += f * f.adjoint() * creal(*c);
                }
                Ok(g)
            }
        }
    }
}

fn hermitian_abs_sum<T: Real>(m: CMat<T>) -> T {
    let h = (&m + m.adjoint()) * creal(lit::<T>(0.5));
    SymmetricEigen::new(h).eigenvalues.iter().fold(T::zero(), |a, x| a + x.abs())
}

/// `‖γ_A − γ_B‖₁`. Two low-rank operands go through a QR of the stacked
/// factors; otherwise the Hermitian difference is diagonalized densely.
pub fn trace_distance<'a, 'b, T: Real>(a: impl Into<PdmView<'a, T>>, b: impl Into<PdmView<'b, T>>) -> Result<T> {
    trace_distance_with_budget(a, b, DENSE_FALLBACK_MAX)
}

/// [`trace_distance`] with an explicit limit on the dense fallback size.
pub fn trace_distance_with_budget<'a, 'b, T: Real>(
    a: impl Into<PdmView<'a, T>>,
    b: impl Into<PdmView<'b, T>>,
    budget: usize,
) -> Result<T> {
    let (a, b) = (a.into(), b.into());
    let grid = match (a.grid(), b.grid()) {
        (Some(x), Some(y)) => {
            x.check_same(y)?;
            x.clone()
        }
        (Some(x), None) | (None, Some(x)) => x.clone(),
        // two empty thermal operators
        (None, None) => return Ok(T::zero()),
    };
    let n = grid.len();
    if let (Some((ca, fa)), Some((cb, fb))) = (a.factors(), b.factors()) {
        let r = fa.len() + fb.len();
        if r == 0 {
            return Ok(T::zero());
        }
        if r < n {
            let cols: Vec<CVec<T>> = fa.into_iter().chain(fb).collect();
            let coef: Vec<T> = ca.into_iter().chain(cb.into_iter().map(|c| -c)).collect();
            let qr = CMat::from_columns(&cols).qr();
            let rr = qr.r();
            let c = CMat::from_diagonal(&CVec::from_iterator(r, coef.iter().map(|&x| creal(x))));
            return Ok(hermitian_abs_sum(&rr * c * rr.adjoint()));
        }
    }
    Ok(hermitian_abs_sum(a.dense_gamma(n, budget)? - b.dense_gamma(n, budget)?))
}

/// Smallest eigenvalue of `[[γ, α], [ᾱ, 1 + γ̄]]`.
pub fn positivity_margin<T: Real>(pdm: &DensePdm<T>) -> T {
    let m = pdm.generalized_block();
    let h = (&m + m.adjoint()) * creal(lit::<T>(0.5));
    SymmetricEigen::new(h).eigenvalues.iter().copied().fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
}

/// `(1 + tr γ)·tr γ − ‖α‖²₂`, non-negative for admissible states.
pub fn pairing_bound_gap<T: Real>(pdm: &DensePdm<T>) -> T {
    let tr = pdm.trace();
    let a = pdm.alpha_hs_norm();
    (T::one() + tr) * tr - a * a
}

fn sup_field<T: Real>(f: &crate::grid::Field<T>) -> T {
    f.values().iter().fold(T::zero(), |a, z| a.max(z.norm_sqr()))
}

/// `sup_{x,y}|γ(x,y)|`: exact for dense input, the factor bound
/// `Σ λ‖a‖²_∞ + (1+λ)‖b‖²_∞` for modes.
pub fn sup_kernel<'a, T: Real>(pdm: impl Into<PdmView<'a, T>>) -> T {
    match pdm.into() {
        PdmView::Dense(p) => {
            let inv = T::one() / p.grid().measure();
            p.gamma.iter().fold(T::zero(), |a, z| a.max(cabs(*z))) * inv
        }
        PdmView::Modes(m) => m
            .weights
            .iter()
            .zip(&m.modes_a)
            .zip(&m.modes_b)
            .fold(T::zero(), |s, ((w, a), b)| s + *w * sup_field(a) + (T::one() + *w) * sup_field(b)),
        PdmView::Thermal(t) => t.weights.iter().zip(&t.modes).fold(T::zero(), |s, (w, m)| s + *w * sup_field(m)),
    }
}

/// `∫∫|γ̂(p,q)| dp dq`; the kernel satisfies `sup|γ| ≤ (2π)^{-d}` times this.
pub fn fourier_l1_kernel<T: Real>(pdm: &DensePdm<T>) -> T {
    let grid = pdm.grid();
    let ops = FourierOps::new(grid);
    let n = grid.len();
    let k = pdm.gamma_kernel();
    let mut a = CMat::zeros(n, n);
    for j in 0..n {
        let col: Vec<_> = k.column(j).iter().copied().collect();
        for (i, z) in ops.fourier_transform(&col).into_iter().enumerate() {
            a[(i, j)] = z;
        }
    }
    let dp = grid.momentum_measure();
    let mut total = T::zero();
    for i in 0..n {
        let row: Vec<_> = a.row(i).iter().map(|z| z.conj()).collect();
        total += ops.fourier_transform(&row).iter().fold(T::zero(), |s, z| s + cabs(*z));
    }
    total * dp * dp
}

/// `sup|γ_t| / T_c^{3/2}` per frame.
pub fn diluteness_trajectory<'a, T: Real + 'a, P>(frames: impl IntoIterator<Item = P>, t_c: f64) -> Vec<f64>
where
    P: Into<PdmView<'a, T>>,
{
    let norm = t_c.powf(1.5);
    frames.into_iter().map(|p| to_f64(sup_kernel(p)) / norm).collect()
}

/// Largest eigenvalues of the Gram matrices of `{a_j}` and `{b_j}`.
pub fn mode_gram_norms<T: Real>(state: &ModeState<T>) -> (T, T) {
    let top = |fs: &[crate::grid::Field<T>]| {
        if fs.is_empty() {
            return T::zero();
        }
        let cols: Vec<CVec<T>> = fs.iter().map(to_orthonormal).collect();
        let m = CMat::from_columns(&cols);
        let g = m.adjoint() * m;
        SymmetricEigen::new(g).eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b))
    };
    (top(&state.modes_a), top(&state.modes_b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Normalizers {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    pub s: f64,
}

/// Per-frame comparison of HFB against the free cloud and the Hartree
/// condensate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    /// `‖γ_t − γ_t^F‖₁`.
    pub gamma_trace_dist: Vec<f64>,
    /// `‖φ_t − φ_t^H‖`.
    pub phi_l2_dist: Vec<f64>,
    pub alpha_hs_norm: Vec<f64>,
    /// `‖|φ_t⟩⟨φ_t| + γ_t − ω_t‖₁` when the one-body flow was run.
    pub omega_trace_dist: Option<Vec<f64>>,
    /// `sup|γ_t(x,y)|`.
    pub sup_kernel: Vec<f64>,
    pub positivity_margin: Vec<f64>,
    pub normalizers: Normalizers,
}

pub const REPORT_COLUMNS: [&str; 6] =
    ["t", "gamma_trace_dist", "phi_l2_dist", "alpha_hs", "sup_kernel_bound", "positivity_margin"];

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for i in 0..self.times.len() {
            let row = [
                self.times[i],
                self.gamma_trace_dist[i],
                self.phi_l2_dist[i],
                self.alpha_hs_norm[i],
                self.sup_kernel[i],
                self.positivity_margin[i],
            ];
            out.push_str(&row.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    /// `max_t ‖γ_t − γ_t^F‖₁ / (N^{1/2} T_c^{3/4} t e^{ĉt})` over `t > 0`.
    pub fn ratio_gamma(&self, c_hat: f64) -> f64 {
        let k = self.normalizers.n.sqrt() * self.normalizers.t_c.powf(0.75);
        self.max_ratio(&self.gamma_trace_dist, k, c_hat)
    }

    /// `max_t ‖φ_t − φ_t^H‖ / (T_c^{3/4} t e^{ĉt})` over `t > 0`.
    pub fn ratio_phi(&self, c_hat: f64) -> f64 {
        let k = self.normalizers.t_c.powf(0.75);
        self.max_ratio(&self.phi_l2_dist, k, c_hat)
    }

    fn max_ratio(&self, values: &[f64], k: f64, c_hat: f64) -> f64 {
        self.times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t > 0.0)
            .map(|(t, v)| v / (k * t * (c_hat * t).exp()))
            .fold(0.0, f64::max)
    }
}

/// One closeness experiment on a 1-pdm small enough for dense HFB.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosenessConfig {
    pub dim: usize,
    pub points: usize,
    pub half_length: f64,
    pub trap: TrapSpec<f64>,
    pub n_total: f64,
    pub lambda_over_tc: f64,
    pub v0: f64,
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub save_every: usize,
    /// `ĉ` in the normalizer `t·e^{ĉt}`.
    pub c_hat: f64,
    /// Eigenpairs computed for the thermal state.
    pub eig_count: usize,
    pub max_modes: Option<usize>,
    pub with_omega: bool,
    /// Global phase applied to the initial condensate.
    pub condensate_phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosenessRun {
    pub report: ComparisonReport,
    pub ratio_gamma: f64,
    pub ratio_phi: f64,
    pub modes: usize,
    pub number_drift: f64,
}

pub fn closeness_run(cfg: &ClosenessConfig) -> Result<ClosenessRun> {
    let grid = Grid::new(cfg.dim, cfg.points, cfg.half_length)?;
    if grid.len() > DENSE_FALLBACK_MAX {
        return Err(Error::Budget { what: "dense HFB grid", size: grid.len(), budget: DENSE_FALLBACK_MAX });
    }
    let spec = lowest_eigenpairs(&grid, &cfg.trap, cfg.eig_count, 1e-10)?;
    let model = ThermalModel::from_lambda_ratio(&spec, cfg.n_total, cfg.lambda_over_tc)?;
    let thermal = build_thermal_pdm_capped(&model, &spec, cfg.max_modes)?;
    let phi0 = condensate(&thermal, cfg.n_total, &spec.eigenfunctions[0])?.scaled(crate::scalar::expi(cfg.condensate_phase));
    let v = InteractionSpec::gaussian(cfg.v0, cfg.sigma, cfg.n_total)?;
    let pdm0 = DensePdm::from_modes(&grid, &thermal.weights, &thermal.modes)?;
    let s0 = DenseState::new(phi0.clone(), pdm0.clone(), v.clone())?;

    let mut hartree = propagate_hartree_with(&phi0, &v, cfg.dt, cfg.t_end, &HartreeOptions { trap: None, save_every: cfg.save_every })?;
    let traj = if v.is_zero() {
        // all three flows are the free flow; evaluate it once so the distances vanish exactly
        let mut frames = Vec::with_capacity(hartree.times.len());
        for t in &hartree.times {
            let phi = free_propagate_field(&phi0, *t);
            frames.push(DenseState::new(phi, free_conjugate_dense(&pdm0, *t)?, v.clone())?);
        }
        hartree.frames = frames.iter().map(|s| s.phi.clone()).collect();
        Trajectory { times: hartree.times.clone(), frames }
    } else {
        let hfb = DenseHfb::new(&grid, &v, &TrapSpec::off())?;
        hfb.propagate(&s0, cfg.dt, cfg.t_end, cfg.save_every)?.0
    };
    if hartree.times.len() != traj.times.len() {
        return Err(invalid("save_every", "Hartree and HFB frames disagree"));
    }
    let omega = if cfg.with_omega {
        let p = to_orthonormal(&phi0);
        let w0 = DensePdm::new(&grid, &pdm0.gamma + &p * p.adjoint(), CMat::zeros(grid.len(), grid.len()))?;
        let full = crate::hartree::propagate_onebody_hartree(&w0, &v, cfg.dt, cfg.t_end)?;
        let keep: Vec<DensePdm<f64>> =
            full.times.iter().zip(full.frames).filter(|(t, _)| traj.times.iter().any(|s| (*s - **t).abs() < 1e-12)).map(|x| x.1).collect();
        Some(keep)
    } else {
        None
    };

    let n0 = s0.number();
    let mut number_drift: f64 = 0.0;
    let mut report = ComparisonReport {
        times: traj.times.clone(),
        gamma_trace_dist: vec![],
        phi_l2_dist: vec![],
        alpha_hs_norm: vec![],
        omega_trace_dist: omega.as_ref().map(|_| vec![]),
        sup_kernel: vec![],
        positivity_margin: vec![],
        normalizers: Normalizers { n: cfg.n_total, t_c: model.critical_temperature(), s: cfg.trap.exponent_s },
    };
    for (k, (t, s)) in traj.times.iter().zip(&traj.frames).enumerate() {
        let free = free_conjugate_dense(&pdm0, *t)?;
        report.gamma_trace_dist.push(trace_distance(&s.pdm, &free)?);
        report.phi_l2_dist.push(s.phi.distance(&hartree.frames[k]));
        report.alpha_hs_norm.push(s.pdm.alpha_hs_norm());
        report.sup_kernel.push(sup_kernel(&s.pdm));
        report.positivity_margin.push(positivity_margin(&s.pdm));
        if let (Some(om), Some(out)) = (&omega, report.omega_trace_dist.as_mut()) {
            let p = to_orthonormal(&s.phi);
            let mine = DensePdm::new(&grid, &s.pdm.gamma + &p * p.adjoint(), CMat::zeros(grid.len(), grid.len()))?;
            out.push(trace_distance(&mine, &om[k])?);
        }
        number_drift = number_drift.max((s.number() - n0).abs() / n0);
    }
    let ratio_gamma = report.ratio_gamma(cfg.c_hat);
    let ratio_phi = report.ratio_phi(cfg.c_hat);
    Ok(ClosenessRun { report, ratio_gamma, ratio_phi, modes: thermal.rank(), number_drift })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "T_c")]
    pub t_c: f64,
    pub ratio_gamma_max: f64,
    pub ratio_phi_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `log ratio_gamma` against `log N`.
    pub slope_gamma: f64,
    pub slope_phi: f64,
    /// Both slopes are at most [`SLOPE_LIMIT`].
    pub slope_flag: bool,
}

pub const SLOPE_LIMIT: f64 = 0.1;

pub const SWEEP_COLUMNS: [&str; 5] = ["N", "T_c", "ratio_gamma_max", "ratio_phi_max", "slope_flag"];

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut out = SWEEP_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt_f64(r.n),
                fmt_f64(r.t_c),
                fmt_f64(r.ratio_gamma_max),
                fmt_f64(r.ratio_phi_max),
                self.slope_flag
            ));
        }
        out
    }
}

/// Slope of `log y` against `log N`; identically vanishing ratios have
/// slope 0.
pub fn log_log_slope(ns: &[f64], ys: &[f64]) -> Result<f64> {
    if ys.iter().all(|y| *y == 0.0) {
        return Ok(0.0);
    }
    let ln: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    log_growth_rate(&ln, ys)
}

/// Runs `base` once per `N`, in parallel; results keep the order of
/// `n_values`.
pub fn closeness_runs(base: &ClosenessConfig, n_values: &[f64]) -> Vec<Result<ClosenessRun>> {
    n_values.par_iter().map(|&n| closeness_run(&ClosenessConfig { n_total: n, ..base.clone() })).collect()
}

impl SweepResult {
    /// Ratio table and slopes from completed runs, one per `N`.
    pub fn from_runs(n_values: &[f64], runs: &[ClosenessRun]) -> Result<Self> {
        if n_values.len() < 3 || runs.len() != n_values.len() {
            return Err(invalid("n_values", "at least three values of N, one run each, are required"));
        }
        let rows: Vec<SweepRow> = runs
            .iter()
            .zip(n_values)
            .map(|(run, &n)| SweepRow {
                n,
                t_c: run.report.normalizers.t_c,
                ratio_gamma_max: run.ratio_gamma,
                ratio_phi_max: run.ratio_phi,
            })
            .collect();
        let g: Vec<f64> = rows.iter().map(|r| r.ratio_gamma_max).collect();
        let p: Vec<f64> = rows.iter().map(|r| r.ratio_phi_max).collect();
        let slope_gamma = log_log_slope(n_values, &g)?;
        let slope_phi = log_log_slope(n_values, &p)?;
        let slope_flag = slope_gamma <= SLOPE_LIMIT && slope_phi <= SLOPE_LIMIT;
        Ok(SweepResult { rows, slope_gamma, slope_phi, slope_flag })
    }
}

/// Runs `base` for every `N` in `n_values` and fits the ratio slopes.
pub fn closeness_scaling_sweep(base: &ClosenessConfig, n_values: &[f64]) -> Result<(SweepResult, Vec<ClosenessRun>)> {
    if n_values.len() < 3 {
        return Err(invalid("n_values", "at least three values of N are required"));
    }
    let runs: Vec<ClosenessRun> = closeness_runs(base, n_values).into_iter().collect::<Result<_>>()?;
    Ok((SweepResult::from_runs(n_values, &runs)?, runs))
}
