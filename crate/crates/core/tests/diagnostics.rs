use bosedyn::diagnostics::{
    closeness_run, closeness_scaling_sweep, diluteness_trajectory, fourier_l1_kernel, log_log_slope, pairing_bound_gap,
    positivity_margin, sup_kernel, trace_distance, trace_distance_with_budget, ClosenessConfig, ComparisonReport, Normalizers,
};
use bosedyn::error::Error;
use bosedyn::grid::{Field, Grid, TrapSpec};
use bosedyn::hfb::{free_conjugate_dense, Complement, DenseHfb, DensePdm, DenseState, ModeHfb, ModeOptions, ModeState};
use bosedyn::interaction::InteractionSpec;
use bosedyn::spectral::lowest_eigenpairs;
use bosedyn::thermal::{assumption_diagnostics, ThermalPdm};
use num_complex::Complex64;
use proptest::prelude::*;

const WEIGHTS: [f64; 4] = [0.6, 0.3, 0.15, 0.08];

fn harmonic(n: usize, half: f64, count: usize) -> (Grid<f64>, Vec<Field<f64>>) {
    let grid = Grid::new(1, n, half).unwrap();
    let spec = lowest_eigenpairs(&grid, &TrapSpec::power(2.0).unwrap(), count, 1e-12).unwrap();
    (grid, spec.eigenfunctions)
}

fn thermal(weights: &[f64], modes: &[Field<f64>]) -> ThermalPdm<f64> {
    ThermalPdm {
        weights: weights.to_vec(),
        energies: vec![0.0; weights.len()],
        modes: modes.to_vec(),
        discarded_trace: 0.0,
        temperature: 1.0,
        chemical_potential: 0.0,
    }
}

fn small_closeness(v0: f64, n_total: f64) -> ClosenessConfig {
    ClosenessConfig {
        dim: 1,
        points: 64,
        half_length: 12.0,
        trap: TrapSpec::power(1.0).unwrap(),
        n_total,
        lambda_over_tc: 0.5,
        v0,
        sigma: 1.0,
        dt: 0.005,
        t_end: 0.2,
        save_every: 10,
        c_hat: 1.0,
        eig_count: 40,
        max_modes: Some(30),
        with_omega: false,
        condensate_phase: 0.0,
    }
}

#[test]
fn low_rank_path_matches_dense() {
    let (grid, f) = harmonic(32, 6.0, 6);
    let v = InteractionSpec::gaussian(1.5, 0.8, 6.0).unwrap();
    // no condensate, so no pairing is generated and the modes stay low rank
    let m0 = ModeState::from_modes(Field::zeros(&grid), &WEIGHTS, &f[1..5], v.clone(), Complement::None).unwrap();
    let p = ModeHfb::new(&grid, &v, &TrapSpec::off(), ModeOptions::default()).unwrap();
    let m = p.propagate(&m0, 0.01, 0.2, 20).unwrap().0.last().unwrap().clone();
    let th = thermal(&[0.5, 0.2], &[f[1].clone(), f[5].clone()]);
    let fast = trace_distance(&m, &th).unwrap();
    let slow = trace_distance(&m.to_dense(), &DensePdm::from_modes(&grid, &th.weights, &th.modes).unwrap()).unwrap();
    assert!((fast - slow).abs() < 1e-10, "{fast} {slow}");
    assert!(fast > 0.1);
}

#[test]
fn orthogonal_projectors_are_two_apart() {
    let (_, f) = harmonic(32, 6.0, 2);
    let a = thermal(&[1.0], &f[..1]);
    let b = thermal(&[1.0], &f[1..2]);
    assert!((trace_distance(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    assert!(trace_distance(&a, &a).unwrap().abs() < 1e-12);
}

#[test]
fn dense_fallback_has_a_budget() {
    let (grid, f) = harmonic(32, 6.0, 2);
    let a = thermal(&[1.0], &f[..1]);
    let b = DensePdm::zeros(&grid);
    assert!(matches!(trace_distance_with_budget(&a, &b, 16), Err(Error::Budget { .. })));
    assert!((trace_distance_with_budget(&a, &b, 32).unwrap() - 1.0).abs() < 1e-12);
}

fn random_pdm(grid: &Grid<f64>, w: &[f64], re: &[f64], im: &[f64]) -> DensePdm<f64> {
    let n = grid.len();
    let modes: Vec<Field<f64>> = (0..w.len())
        .map(|k| Field::new(grid.clone(), (0..n).map(|j| Complex64::new(re[k * n + j], im[k * n + j])).collect()).unwrap())
        .collect();
    DensePdm::from_modes(grid, w, &modes).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn trace_distance_is_a_metric(
        w in prop::collection::vec(0.0f64..2.0, 6),
        re in prop::collection::vec(-1.0f64..1.0, 48),
        im in prop::collection::vec(-1.0f64..1.0, 48),
    ) {
        let grid = Grid::new(1, 8, 2.0).unwrap();
        let a = random_pdm(&grid, &w[0..2], &re[0..16], &im[0..16]);
        let b = random_pdm(&grid, &w[2..4], &re[16..32], &im[16..32]);
        let c = random_pdm(&grid, &w[4..6], &re[32..48], &im[32..48]);
        let ab = trace_distance(&a, &b).unwrap();
        let ba = trace_distance(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        let ac = trace_distance(&a, &c).unwrap();
        let cb = trace_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-10);
    }
}

#[test]
fn positivity_of_simple_states() {
    let (grid, f) = harmonic(32, 6.0, 5);
    assert_eq!(positivity_margin(&DensePdm::zeros(&grid)), 0.0);
    let th = DensePdm::from_modes(&grid, &WEIGHTS, &f[1..5]).unwrap();
    assert!(positivity_margin(&th).abs() < 1e-12);
}

#[test]
fn hfb_trajectory_stays_positive() {
    let (grid, f) = harmonic(32, 6.0, 5);
    let v = InteractionSpec::gaussian(1.5, 0.8, 6.0).unwrap();
    let pdm = DensePdm::from_modes(&grid, &WEIGHTS, &f[1..5]).unwrap();
    let s0 = DenseState::new(f[0].scaled(Complex64::new(2.0, 0.0)), pdm, v.clone()).unwrap();
    let prop = DenseHfb::new(&grid, &v, &TrapSpec::off()).unwrap();
    // the RK4 defect in the block's null space is O(dt⁴): -1.2e-8 at dt = 0.005
    let (traj, _) = prop.propagate(&s0, 0.0025, 1.0, 10).unwrap();
    for s in &traj.frames {
        assert!(positivity_margin(&s.pdm) >= -1e-8, "{}", positivity_margin(&s.pdm));
        assert!(pairing_bound_gap(&s.pdm) >= 0.0);
    }
    assert!(traj.last().unwrap().pdm.alpha_hs_norm() > 1e-3);
    // short-horizon diluteness stays within an order of magnitude
    let d = diluteness_trajectory(traj.frames.iter().map(|s| &s.pdm), 2.0);
    assert!(d.iter().all(|x| *x <= 10.0 * d[0]));
}

#[test]
fn sup_kernel_bounds() {
    let (grid, f) = harmonic(32, 6.0, 5);
    let th = thermal(&WEIGHTS, &f[1..5]);
    let dense = DensePdm::from_modes(&grid, &WEIGHTS, &f[1..5]).unwrap();
    let exact = sup_kernel(&dense);
    assert!(sup_kernel(&th) >= exact);
    // rank one: factor bound is attained on the diagonal
    let one = thermal(&[0.7], &f[1..2]);
    let one_d = DensePdm::from_modes(&grid, &[0.7], &f[1..2]).unwrap();
    assert!((sup_kernel(&one) - sup_kernel(&one_d)).abs() < 1e-12);
    // Fourier-L¹ bound: rank one matches the thermal diagnostic, sums are dominated by it
    let diag_one = assumption_diagnostics(&one, &grid).unwrap().fourier_l1;
    assert!((fourier_l1_kernel(&one_d) - diag_one).abs() < 1e-10 * diag_one);
    let fl1 = fourier_l1_kernel(&dense);
    assert!(fl1 <= assumption_diagnostics(&th, &grid).unwrap().fourier_l1 + 1e-12);
    assert!(exact <= fl1 / (2.0 * std::f64::consts::PI) + 1e-12);
}

#[test]
fn free_flow_keeps_fourier_bound() {
    let (grid, f) = harmonic(32, 6.0, 5);
    let dense = DensePdm::from_modes(&grid, &WEIGHTS, &f[1..5]).unwrap();
    let b0 = fourier_l1_kernel(&dense);
    for t in [0.25, 0.5, 1.0] {
        let b = fourier_l1_kernel(&free_conjugate_dense(&dense, t).unwrap());
        assert!((b - b0).abs() < 1e-3 * b0);
    }
}

#[test]
fn mode_factor_bound_dominates_dense_kernel() {
    let (grid, f) = harmonic(32, 6.0, 5);
    let v = InteractionSpec::gaussian(1.5, 0.8, 6.0).unwrap();
    let m0 = ModeState::from_modes(f[0].clone(), &WEIGHTS, &f[1..5], v.clone(), Complement::Full).unwrap();
    let p = ModeHfb::new(&grid, &v, &TrapSpec::off(), ModeOptions::default()).unwrap();
    let m = p.propagate(&m0, 0.01, 0.3, 30).unwrap().0.last().unwrap().clone();
    assert!(sup_kernel(&m) >= sup_kernel(&m.to_dense()) - 1e-12);
}

#[test]
fn free_dynamics_give_zero_ratios() {
    let run = closeness_run(&small_closeness(0.0, 100.0)).unwrap();
    assert_eq!(run.ratio_gamma, 0.0);
    assert_eq!(run.ratio_phi, 0.0);
    assert!(run.report.gamma_trace_dist.iter().all(|x| *x == 0.0));
}

#[test]
fn ratios_ignore_condensate_phase() {
    let a = closeness_run(&small_closeness(1.0, 100.0)).unwrap();
    let b = closeness_run(&ClosenessConfig { condensate_phase: 1.1, ..small_closeness(1.0, 100.0) }).unwrap();
    assert!(a.ratio_gamma > 0.0 && a.ratio_phi > 0.0);
    assert!((a.ratio_gamma - b.ratio_gamma).abs() < 1e-9 * a.ratio_gamma);
    assert!((a.ratio_phi - b.ratio_phi).abs() < 1e-9 * a.ratio_phi);
    assert!(a.number_drift < 1e-8);
}

#[test]
fn sweep_needs_three_values() {
    let cfg = small_closeness(1.0, 100.0);
    assert!(closeness_scaling_sweep(&cfg, &[100.0, 200.0]).is_err());
    let (sweep, runs) = closeness_scaling_sweep(&cfg, &[100.0, 200.0, 400.0]).unwrap();
    assert_eq!(runs.len(), 3);
    assert_eq!(sweep.rows.len(), 3);
    let csv = sweep.to_csv();
    assert!(csv.starts_with("N,T_c,ratio_gamma_max,ratio_phi_max,slope_flag\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn slope_fit() {
    let ns = [100.0, 200.0, 400.0];
    let ys: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
    assert!((log_log_slope(&ns, &ys).unwrap() + 0.5).abs() < 1e-12);
    assert_eq!(log_log_slope(&ns, &[0.0; 3]).unwrap(), 0.0);
}

#[test]
fn report_csv_round_trips() {
    let r = ComparisonReport {
        times: vec![0.0, 0.1],
        gamma_trace_dist: vec![0.0, 1.0 / 3.0],
        phi_l2_dist: vec![0.0, 1e-17],
        alpha_hs_norm: vec![0.0, 2.5],
        omega_trace_dist: None,
        sup_kernel: vec![1.0, 1.0],
        positivity_margin: vec![0.0, -1e-12],
        normalizers: Normalizers { n: 100.0, t_c: 2.0, s: 1.0 },
    };
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,gamma_trace_dist,phi_l2_dist,alpha_hs,sup_kernel_bound,positivity_margin");
    let row: Vec<f64> = lines.nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(row, vec![0.1, 1.0 / 3.0, 1e-17, 2.5, 1.0, -1e-12]);
    // ratio uses N^{1/2} T_c^{3/4} t e^{ĉt}
    let want = (1.0 / 3.0) / (10.0 * 2f64.powf(0.75) * 0.1 * 0.1f64.exp());
    assert!((r.ratio_gamma(1.0) - want).abs() < 1e-15);
}
