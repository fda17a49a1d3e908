use bosedyn::grid::{Field, Grid, TrapSpec};
use bosedyn::hfb::{
    free_conjugate_dense, free_propagate_field, mean_field_exchange_apply, pairing_apply, to_orthonormal, CMat, Complement,
    DenseHfb, DensePdm, DenseState, HfbState, ModeHfb, ModeOptions, ModeState,
};
use bosedyn::interaction::InteractionSpec;
use bosedyn::spectral::lowest_eigenpairs;
use nalgebra::SymmetricEigen;
use num_complex::Complex64;

const WEIGHTS: [f64; 4] = [0.6, 0.3, 0.15, 0.08];

struct Instance {
    grid: Grid<f64>,
    phi: Field<f64>,
    modes: Vec<Field<f64>>,
    v: InteractionSpec<f64>,
}

/// 1D, 32 points, four thermal modes of the harmonic trap, Gaussian `v`.
fn instance(v0: f64) -> Instance {
    let grid = Grid::new(1, 32, 6.0).unwrap();
    let spec = lowest_eigenpairs(&grid, &TrapSpec::power(2.0).unwrap(), 5, 1e-12).unwrap();
    let phi = spec.eigenfunctions[0].scaled(Complex64::new(2.0, 0.0));
    let modes = spec.eigenfunctions[1..5].to_vec();
    let v = InteractionSpec::gaussian(v0, 0.8, 6.0).unwrap();
    Instance { grid, phi, modes, v }
}

fn dense_state(i: &Instance) -> DenseState<f64> {
    let pdm = DensePdm::from_modes(&i.grid, &WEIGHTS, &i.modes).unwrap();
    DenseState::new(i.phi.clone(), pdm, i.v.clone()).unwrap()
}

fn mode_state(i: &Instance) -> ModeState<f64> {
    ModeState::from_modes(i.phi.clone(), &WEIGHTS, &i.modes, i.v.clone(), Complement::Full).unwrap()
}

fn trace_norm(m: &CMat<f64>) -> f64 {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().map(|x| x.abs()).sum()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

#[test]
fn free_case_is_conjugation() {
    let i = instance(0.0);
    let s0 = dense_state(&i);
    let prop = DenseHfb::new(&i.grid, &i.v, &TrapSpec::off()).unwrap();
    let (traj, _) = prop.propagate(&s0, 1e-3, 0.5, 500).unwrap();
    let end = traj.last().unwrap();
    let want = free_conjugate_dense(&s0.pdm, 0.5).unwrap();
    assert!((&end.pdm.gamma - &want.gamma).camax() < 1e-9);
    assert!(end.pdm.alpha.camax() == 0.0);
    assert!(end.phi.distance(&free_propagate_field(&i.phi, 0.5)) < 1e-9);
}

#[test]
fn dense_and_mode_fields_agree() {
    let i = instance(1.5);
    let s = dense_state(&i);
    let prop = DenseHfb::new(&i.grid, &i.v, &TrapSpec::off()).unwrap();
    let (traj, _) = prop.propagate(&s, 0.01, 0.2, 20).unwrap();
    let d = traj.last().unwrap();
    let m = {
        let p = ModeHfb::new(&i.grid, &i.v, &TrapSpec::off(), ModeOptions::default()).unwrap();
        p.propagate(&mode_state(&i), 0.01, 0.2, 20).unwrap().0.last().unwrap().clone()
    };
    let md = m.to_dense();
    let f = Field::from_fn(&i.grid, |x: [f64; 3]| Complex64::new((-x[0] * x[0] / 3.0).exp(), 0.3 * x[0].sin()));
    let a = mean_field_exchange_apply(&m, &i.v, &f).unwrap();
    let b = mean_field_exchange_apply(&md, &i.v, &f).unwrap();
    assert!(a.distance(&b) < 1e-10, "{}", a.distance(&b));
    let a = pairing_apply(&m, Some(&m.phi), &i.v, &f).unwrap();
    let b = pairing_apply(&md, Some(&m.phi), &i.v, &f).unwrap();
    assert!(a.distance(&b) < 1e-10);
    // the evolved state has pairing, so all four energy groups are exercised
    assert!(d.pdm.alpha_hs_norm() > 1e-3);
    let ds = DenseState::new(m.phi.clone(), md, i.v.clone()).unwrap();
    let em = m.energy_terms(&TrapSpec::off()).unwrap();
    let ed = ds.energy_terms(&TrapSpec::off()).unwrap();
    for (x, y) in [
        (em.one_body, ed.one_body),
        (em.condensate_cloud, ed.condensate_cloud),
        (em.cloud_cloud, ed.cloud_cloud),
        (em.pairing, ed.pairing),
    ] {
        assert!(rel(x, y) < 1e-9, "{x} {y}");
    }
}

#[test]
fn constant_potential_energy_is_explicit() {
    // v ≡ v0 (σ huge): cloud-cloud = v0/(2N)[(tr γ)² + tr γ²]
    let grid = Grid::new(1, 16, 3.0).unwrap();
    let spec = lowest_eigenpairs(&grid, &TrapSpec::power(2.0).unwrap(), 3, 1e-12).unwrap();
    let v = InteractionSpec::gaussian(0.7, 1e9, 4.0).unwrap();
    let w = [0.5, 0.25];
    let pdm = DensePdm::from_modes(&grid, &w, &spec.eigenfunctions[1..3]).unwrap();
    let s = DenseState::new(Field::zeros(&grid), pdm, v).unwrap();
    let e = s.energy_terms(&TrapSpec::off()).unwrap();
    let tr: f64 = w.iter().sum();
    let tr2: f64 = w.iter().map(|x| x * x).sum();
    assert!((e.cloud_cloud - 0.7 / 8.0 * (tr * tr + tr2)).abs() < 1e-12);
    assert_eq!(e.pairing, 0.0);
}

#[test]
fn dense_conserves_number_and_energy() {
    let i = instance(1.5);
    let s0 = dense_state(&i);
    let prop = DenseHfb::new(&i.grid, &i.v, &TrapSpec::off()).unwrap();
    let e0 = prop.energy(&s0).unwrap().total();
    let (traj, rep) = prop.propagate(&s0, 0.005, 1.0, 20).unwrap();
    assert!(rep.hermiticity_drift < 1e-8 && rep.symmetry_drift < 1e-8);
    for s in &traj.frames {
        assert!(rel(s.number(), s0.number()) < 1e-6);
        assert!(rel(prop.energy(s).unwrap().total(), e0) < 1e-6);
    }
    assert!(traj.last().unwrap().pdm.alpha_hs_norm() > 1e-3);
}

#[test]
fn modes_conserve_and_match_dense() {
    let i = instance(1.5);
    let p = ModeHfb::new(&i.grid, &i.v, &TrapSpec::off(), ModeOptions::default()).unwrap();
    let m0 = mode_state(&i);
    let e0 = p.energy(&m0).unwrap().total();
    let (traj, rep) = p.propagate(&m0, 0.01, 0.5, 10).unwrap();
    assert!(rep.probes > 0 && rep.antisymmetry_defect < 1e-8, "{rep:?}");
    for s in &traj.frames {
        assert!(rel(s.number(), m0.number()) < 1e-6);
        assert!(rel(p.energy(s).unwrap().total(), e0) < 1e-6);
    }
    let d = DenseHfb::new(&i.grid, &i.v, &TrapSpec::off()).unwrap();
    let (dt, _) = d.propagate(&dense_state(&i), 0.0025, 0.5, 200).unwrap();
    let dense = &dt.last().unwrap().pdm;
    let modes = traj.last().unwrap().to_dense();
    let dist = trace_norm(&(&dense.gamma - &modes.gamma));
    assert!(dist < 1e-6, "trace distance {dist}");
    assert!((dense.alpha_hs_norm() - modes.alpha_hs_norm()).abs() < 1e-6);
    let phi_gap = to_orthonormal(&dt.last().unwrap().phi) - to_orthonormal(&traj.last().unwrap().phi);
    assert!(phi_gap.norm() < 1e-6);
}

#[test]
fn empty_cloud_generates_pairing_from_condensate() {
    let i = instance(1.5);
    let s0 = DenseState::new(i.phi.clone(), DensePdm::zeros(&i.grid), i.v.clone()).unwrap();
    let prop = DenseHfb::new(&i.grid, &i.v, &TrapSpec::off()).unwrap();
    let (traj, _) = prop.propagate(&s0, 0.005, 0.1, 20).unwrap();
    let end = traj.last().unwrap();
    assert!(end.pdm.alpha_hs_norm() > 0.0);
    assert!(rel(end.number(), s0.number()) < 1e-8);
}

#[test]
fn no_modes_reduces_to_hartree() {
    let i = instance(1.5);
    let s = ModeState::from_modes(i.phi.clone(), &[], &[], i.v.clone(), Complement::None).unwrap();
    let p = ModeHfb::new(&i.grid, &i.v, &TrapSpec::off(), ModeOptions::default()).unwrap();
    let m = p.propagate(&s, 0.005, 0.5, 100).unwrap().0;
    let h = bosedyn::hartree::propagate_hartree(&i.phi, &i.v, 0.0005, 0.5).unwrap();
    let gap = m.last().unwrap().phi.distance(h.last().unwrap());
    assert!(gap < 1e-6, "{gap}");
}
