use bosedyn::grid::{Field, Grid, TrapSpec};
use bosedyn::hartree::{
    fourier_l1_trajectory, hartree_energy, hartree_flow_energy, minimize_hartree, propagate_hartree,
    propagate_hartree_with, propagate_onebody_hartree, HartreeOptions,
};
use bosedyn::hfb::{free_conjugate_dense, to_orthonormal, CMat, DensePdm};
use bosedyn::interaction::InteractionSpec;
use bosedyn::spectral::lowest_eigenpairs;
use bosedyn::Error;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

fn gaussian(grid: &Grid<f64>, s: f64, x0: f64) -> Field<f64> {
    Field::from_real_fn(grid, |x: [f64; 3]| (-(x[0] - x0).powi(2) / (2.0 * s * s)).exp()).normalized()
}

fn harmonic() -> TrapSpec<f64> {
    TrapSpec::power(2.0).unwrap()
}

#[test]
fn linear_energy_of_harmonic_gaussian() {
    let grid = Grid::new(1, 128, 10.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    let e = hartree_energy(&gaussian(&grid, 1.0, 0.0), &harmonic(), &v, 0.0).unwrap();
    assert!((e - 1.0).abs() < 1e-8, "{e}");
    let bad = gaussian(&grid, 1.0, 0.0).scaled(Complex64::new(1.1, 0.0));
    assert!(matches!(hartree_energy(&bad, &harmonic(), &v, 0.0), Err(Error::NotNormalized { .. })));
}

#[test]
fn quartic_term_matches_double_sum() {
    let grid = Grid::new(1, 64, 8.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    let phi = gaussian(&grid, 0.9, 0.3);
    let e1 = hartree_energy(&phi, &harmonic(), &v, 1.0).unwrap();
    let e0 = hartree_energy(&phi, &harmonic(), &v, 0.0).unwrap();
    let dx = grid.spacing();
    let mut q = 0.0;
    for i in 0..64 {
        for j in 0..64 {
            // the densities are negligible near the box edge, so the plain
            // (non-periodic) distance is exact enough here
            let r = grid.point(i)[0] - grid.point(j)[0];
            q += phi.values()[i].norm_sqr() * (-r * r / 2.0).exp() * phi.values()[j].norm_sqr() * dx * dx;
        }
    }
    assert!((e1 - e0 - 0.5 * q).abs() < 1e-12);
}

#[test]
fn minimizer_without_coupling_is_ground_state() {
    let grid = Grid::new(1, 64, 8.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    let r = minimize_hartree(&grid, &harmonic(), &v, 0.0, 1e-10).unwrap();
    let spec = lowest_eigenpairs(&grid, &harmonic(), 1, 1e-12).unwrap();
    assert!(r.minimizer.inner(&spec.eigenfunctions[0]).norm() >= 1.0 - 1e-8);
    assert!((r.energy - spec.eigenvalues[0]).abs() < 1e-10);
    assert!((r.minimizer.norm() - 1.0).abs() < 1e-10);
    assert!(r.residual <= 1e-10);
    // momentum density of e^{-x²/2} has ⟨k²⟩ = 1/2, ⟨k⁴⟩ = 3/4, ⟨k⁶⟩ = 15/8
    let h3 = (1.0f64 + 1.5 + 2.25 + 1.875).sqrt();
    let want = h3 / (1.0f64 + 1.0 + 1.0).powf(1.5);
    assert!((r.h3_ratio - want).abs() < 1e-8, "{} vs {want}", r.h3_ratio);
}

/// Self-consistent field iteration on the dense matrix `−Δ + w + g v∗ρ`.
fn scf(grid: &Grid<f64>, v: &InteractionSpec<f64>, g: f64) -> (f64, Vec<f64>) {
    let n = grid.len();
    let lap = bosedyn::fft::FourierOps::new(grid).neg_laplacian_matrix();
    let w = harmonic().sample(grid);
    let vm = v.pair_matrix(grid).unwrap();
    let mut rho = vec![1.0 / n as f64; n]; // ON-basis weights |φ̃_j|²
    let mut vec = vec![0.0; n];
    for _ in 0..500 {
        let mut h = lap.clone();
        for i in 0..n {
            h[(i, i)] += w[i] + g * (0..n).map(|j| vm[(i, j)] * rho[j]).sum::<f64>();
        }
        let eig = SymmetricEigen::new(h);
        let k = eig.eigenvalues.imin();
        vec = eig.eigenvectors.column(k).iter().copied().collect();
        let change: f64 = rho.iter().zip(&vec).map(|(r, x)| (r - x * x).abs()).sum();
        for (r, x) in rho.iter_mut().zip(&vec) {
            *r = 0.5 * *r + 0.5 * x * x;
        }
        if change < 1e-14 {
            break;
        }
    }
    let phi = DMatrix::from_column_slice(n, 1, &vec);
    let mut lin = (phi.transpose() * &lap * &phi)[(0, 0)];
    let mut quart = 0.0;
    for i in 0..n {
        lin += w[i] * vec[i] * vec[i];
        for j in 0..n {
            quart += vec[i] * vec[i] * vm[(i, j)] * vec[j] * vec[j];
        }
    }
    (lin + 0.5 * g * quart, vec)
}

#[test]
fn interacting_minimizer_matches_scf_oracle() {
    let grid = Grid::new(1, 64, 8.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    let r = minimize_hartree(&grid, &harmonic(), &v, 1.0, 1e-10).unwrap();
    let (e_scf, _) = scf(&grid, &v, 1.0);
    assert!((r.energy - e_scf).abs() < 1e-9, "{} vs {}", r.energy, e_scf);
    assert!(r.energy >= 1.0 - 1e-9);
    assert!(r.mu_h >= r.energy);
    assert!(r.dt_imag > 0.0);
    assert!(minimize_hartree(&grid, &harmonic(), &v, 1.5, 1e-10).is_err());
    let neg = InteractionSpec::gaussian(-1.0, 1.0, 1.0).unwrap();
    assert!(minimize_hartree(&grid, &harmonic(), &neg, 0.5, 1e-10).is_err());
}

fn second_moment(f: &Field<f64>) -> f64 {
    let g = f.grid();
    (0..g.len()).map(|i| g.point(i)[0].powi(2) * f.values()[i].norm_sqr()).sum::<f64>() * g.spacing()
        / f.norm_sq()
}

#[test]
fn free_gaussian_spreads_by_closed_form() {
    // i∂ψ = −ψ'' from e^{−x²/(2s²)}: ⟨x²⟩_t = s²/2 + 2t²/s²
    let grid = Grid::new(1, 256, 20.0).unwrap();
    let v = InteractionSpec::gaussian(0.0, 1.0, 1.0).unwrap();
    let phi0 = gaussian(&grid, 1.0, 0.0);
    let traj = propagate_hartree_with(&phi0, &v, 0.005, 1.0, &HartreeOptions { trap: None, save_every: 40 }).unwrap();
    for (t, f) in traj.times.iter().zip(&traj.frames) {
        assert!((second_moment(f) - (0.5 + 2.0 * t * t)).abs() < 1e-9, "t={t}");
    }
    let l1 = fourier_l1_trajectory(&traj);
    let direct = bosedyn::fft::FourierOps::new(&grid).fourier_l1(phi0.values());
    assert!((l1[0] - direct).abs() == 0.0);
    for x in &l1 {
        assert!((x - l1[0]).abs() < 1e-10 * l1[0]);
    }
}

#[test]
fn interacting_flow_conserves_norm_and_energy() {
    let grid = Grid::new(1, 128, 12.0).unwrap();
    let v = InteractionSpec::gaussian(2.0, 0.7, 0.5).unwrap();
    let phi0 = gaussian(&grid, 1.0, 0.5).scaled(Complex64::new(1.5, 0.0));
    let traj = propagate_hartree(&phi0, &v, 0.001, 1.0).unwrap();
    let e0 = hartree_flow_energy(&phi0, &v).unwrap();
    for f in &traj.frames {
        assert!((f.norm_sq() - phi0.norm_sq()).abs() < 1e-10 * phi0.norm_sq());
        let e = hartree_flow_energy(f, &v).unwrap();
        assert!((e - e0).abs() < 1e-6 * e0.abs(), "{e} {e0}");
    }
}

#[test]
fn strang_splitting_is_second_order() {
    let grid = Grid::new(1, 64, 10.0).unwrap();
    let v = InteractionSpec::gaussian(3.0, 0.8, 1.0).unwrap();
    let phi0 = gaussian(&grid, 1.0, 0.0);
    let end = |dt: f64| propagate_hartree(&phi0, &v, dt, 0.5).unwrap().last().unwrap().clone();
    let reference = end(0.0005);
    let e1 = end(0.02).distance(&reference);
    let e2 = end(0.01).distance(&reference);
    let ratio = e1 / e2;
    assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
}

#[test]
fn phase_budget_is_enforced() {
    let grid = Grid::new(1, 128, 10.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    assert!(propagate_hartree(&gaussian(&grid, 1.0, 0.0), &v, 0.1, 1.0).is_err());
}

fn trace_norm(m: &CMat<f64>) -> f64 {
    SymmetricEigen::new((m + m.adjoint()) * Complex64::new(0.5, 0.0)).eigenvalues.iter().map(|x| x.abs()).sum()
}

fn thermal_like(grid: &Grid<f64>) -> DensePdm<f64> {
    let spec = lowest_eigenpairs(grid, &harmonic(), 4, 1e-12).unwrap();
    DensePdm::from_modes(grid, &[0.9, 0.5, 0.2, 0.1], &spec.eigenfunctions).unwrap()
}

#[test]
fn onebody_flow_without_interaction_is_free_conjugation() {
    let grid = Grid::new(1, 32, 6.0).unwrap();
    let v = InteractionSpec::gaussian(0.0, 1.0, 1.0).unwrap();
    let w0 = thermal_like(&grid);
    let traj = propagate_onebody_hartree(&w0, &v, 0.025, 0.5).unwrap();
    let want = free_conjugate_dense(&w0, 0.5).unwrap();
    assert!((&traj.last().unwrap().gamma - &want.gamma).camax() < 1e-10);
}

#[test]
fn onebody_flow_is_isospectral_and_matches_rank_one() {
    let grid = Grid::new(1, 32, 6.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 0.8, 4.0).unwrap();
    let w0 = thermal_like(&grid);
    let spec0 = SymmetricEigen::new(w0.gamma.clone()).eigenvalues;
    let mut e0: Vec<f64> = spec0.iter().copied().collect();
    e0.sort_by(f64::total_cmp);
    let traj = propagate_onebody_hartree(&w0, &v, 0.01, 1.0).unwrap();
    for w in &traj.frames {
        let mut e: Vec<f64> = SymmetricEigen::new(w.gamma.clone()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        for (a, b) in e.iter().zip(&e0) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(e[0] >= -1e-10);
        assert!(w.hermiticity_defect() <= 1e-10);
        assert!((w.trace() - w0.trace()).abs() < 1e-9);
    }

    // rank one: ω = |φ⟩⟨φ| follows the Hartree equation
    let phi0 = gaussian(&grid, 1.0, 0.3).scaled(Complex64::new(2.0, 0.0));
    let p = to_orthonormal(&phi0);
    let omega = DensePdm::new(&grid, &p * p.adjoint(), CMat::zeros(32, 32)).unwrap();
    let dt = 0.001;
    let a = propagate_onebody_hartree(&omega, &v, dt, 0.5).unwrap();
    let b = propagate_hartree(&phi0, &v, dt, 0.5).unwrap();
    let q = to_orthonormal(b.last().unwrap());
    let dist = trace_norm(&(&a.last().unwrap().gamma - &q * q.adjoint()));
    assert!(dist < 1e-8, "trace distance {dist}");
}

#[test]
fn minimizer_is_stationary_with_trap_on() {
    let grid = Grid::new(1, 64, 8.0).unwrap();
    let v = InteractionSpec::gaussian(1.0, 1.0, 1.0).unwrap();
    let r = minimize_hartree(&grid, &harmonic(), &v, 1.0, 1e-10).unwrap();
    // g = 1 ⇔ N = 1 in the time-dependent flow
    let opts = HartreeOptions { trap: Some(harmonic()), save_every: 100 };
    let traj = propagate_hartree_with(&r.minimizer, &v, 0.005, 0.5, &opts).unwrap();
    let end = traj.last().unwrap();
    let overlap = r.minimizer.inner(end).norm();
    assert!(overlap > 1.0 - 1e-8, "{overlap}");
}
