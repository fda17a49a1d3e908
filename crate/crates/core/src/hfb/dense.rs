//! Dense-matrix HFB integrator (classical RK4), the small-grid oracle.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fft::FourierOps;
use crate::grid::{Grid, TrapSpec};
use crate::interaction::InteractionSpec;
use crate::scalar::{cplx, creal, from_usize, lit, to_f64, Real};
use crate::trajectory::{step_count, Trajectory};

use super::{from_orthonormal, to_orthonormal, CMat, CVec, DensePdm, DenseState, HfbEnergy};

/// Largest Hermiticity/symmetry defect removed in one step before failing.
pub const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DenseStepReport {
    /// `max|γ − γ*|` removed by re-symmetrization.
    pub hermiticity_drift: f64,
    /// `max|α − αᵀ|` removed by re-symmetrization.
    pub symmetry_drift: f64,
}

/// Precomputed matrices for one grid, interaction and trap.
#[derive(Clone, Debug)]
pub struct DenseHfb<T: Real> {
    grid: Grid<T>,
    interaction: InteractionSpec<T>,
    /// `-Δ + w` in the orthonormal basis.
    one_body: CMat<T>,
    pair: DMatrix<T>,
    inv_n: T,
}

struct Fields<T: Real> {
    h_gamma: CMat<T>,
    h_phi: CMat<T>,
    k: CMat<T>,
}

impl<T: Real> DenseHfb<T> {
    pub fn new(grid: &Grid<T>, interaction: &InteractionSpec<T>, trap: &TrapSpec<T>) -> Result<Self> {
        let lap = FourierOps::new(grid).neg_laplacian_matrix();
        let w = trap.sample(grid);
        let one_body = CMat::from_fn(lap.nrows(), lap.ncols(), |i, j| {
            creal(if i == j { lap[(i, j)] + w[i] } else { lap[(i, j)] })
        });
        Ok(DenseHfb {
            grid: grid.clone(),
            interaction: interaction.clone(),
            one_body,
            pair: interaction.pair_matrix(grid)?,
            inv_n: T::one() / interaction.n_scale,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// `N^{-1} V ∘ M`.
    fn weighted(&self, m: &CMat<T>) -> CMat<T> {
        CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * creal(self.pair[(i, j)] * self.inv_n))
    }

    /// `N^{-1} Σ_j V_ij d_j`.
    fn direct(&self, d: &[T]) -> Vec<T> {
        let n = d.len();
        (0..n).map(|i| (0..n).fold(T::zero(), |a, j| a + self.pair[(i, j)] * d[j]) * self.inv_n).collect()
    }

    fn fields(&self, phi: &CVec<T>, g: &CMat<T>, a: &CMat<T>) -> Fields<T> {
        let n = phi.len();
        let rho_g: Vec<T> = (0..n).map(|i| g[(i, i)].re).collect();
        let rho_p: Vec<T> = phi.iter().map(|z| z.norm_sqr()).collect();
        let (u_g, u_p) = (self.direct(&rho_g), self.direct(&rho_p));
        let mut h_gamma = &self.one_body + self.weighted(g);
        for i in 0..n {
            h_gamma[(i, i)] += creal(u_g[i]);
        }
        let mut h_phi = &h_gamma + self.weighted(&(phi * phi.adjoint()));
        for i in 0..n {
            h_phi[(i, i)] += creal(u_p[i]);
        }
        let k = self.weighted(&(a + phi * phi.transpose()));
        Fields { h_gamma, h_phi, k }
    }

    /// Right-hand side of the HFB system in the orthonormal basis.
    fn rhs(&self, phi: &CVec<T>, g: &CMat<T>, a: &CMat<T>) -> (CVec<T>, CMat<T>, CMat<T>) {
        let f = self.fields(phi, g, a);
        let mi = cplx(T::zero(), -T::one());
        let dphi = (&f.h_gamma * phi + &f.k * phi.map(|z| z.conj())) * mi;
        let hg = &f.h_phi * g;
        let ka = &f.k * a.adjoint();
        let dg = (&hg - hg.adjoint() + &ka - ka.adjoint()) * mi;
        let ha = &f.h_phi * a;
        let kg = &f.k * g.transpose();
        let da = (&ha + ha.transpose() + &kg + kg.transpose() + &f.k) * mi;
        (dphi, dg, da)
    }

    /// One classical RK4 step followed by re-symmetrization.
    pub fn step(&self, state: &DenseState<T>, dt: T) -> Result<(DenseState<T>, DenseStepReport)> {
        let phi = to_orthonormal(&state.phi);
        let (g, a) = (&state.pdm.gamma, &state.pdm.alpha);
        let h = creal(dt);
        let half = creal(dt * lit(0.5));
        let (k1p, k1g, k1a) = self.rhs(&phi, g, a);
        let (k2p, k2g, k2a) = self.rhs(&(&phi + &k1p * half), &(g + &k1g * half), &(a + &k1a * half));
        let (k3p, k3g, k3a) = self.rhs(&(&phi + &k2p * half), &(g + &k2g * half), &(a + &k2a * half));
        let (k4p, k4g, k4a) = self.rhs(&(&phi + &k3p * h), &(g + &k3g * h), &(a + &k3a * h));
        let sixth = creal(dt / lit(6.0));
        let two = creal(lit::<T>(2.0));
        let phi_new = &phi + (k1p + &k2p * two + &k3p * two + k4p) * sixth;
        let g_new = g + (k1g + &k2g * two + &k3g * two + k4g) * sixth;
        let a_new = a + (k1a + &k2a * two + &k3a * two + k4a) * sixth;
        let mut pdm = DensePdm::new(&self.grid, g_new, a_new)?;
        let (dh, ds) = pdm.symmetrize();
        let report = DenseStepReport { hermiticity_drift: to_f64(dh), symmetry_drift: to_f64(ds) };
        let drift = report.hermiticity_drift.max(report.symmetry_drift);
        if drift > SYMMETRY_TOL {
            return Err(Error::SymmetryDrift { drift, limit: SYMMETRY_TOL });
        }
        let next = DenseState { phi: from_orthonormal(&self.grid, &phi_new), pdm, interaction: state.interaction.clone() };
        Ok((next, report))
    }

    /// Conserved HFB energy, split into its four groups.
    pub fn energy(&self, state: &DenseState<T>) -> Result<HfbEnergy<T>> {
        self.grid.check_same(state.grid())?;
        let phi = to_orthonormal(&state.phi);
        let (g, a) = (&state.pdm.gamma, &state.pdm.alpha);
        let n = phi.len();
        let one_body = (phi.adjoint() * &self.one_body * &phi)[(0, 0)].re + (&self.one_body * g).trace().re;
        let rho_g: Vec<T> = (0..n).map(|i| g[(i, i)].re).collect();
        let rho_p: Vec<T> = phi.iter().map(|z| z.norm_sqr()).collect();
        let (u_g, u_p) = (self.direct(&rho_g), self.direct(&rho_p));
        let mut cc = T::zero();
        let mut gg = T::zero();
        let mut pair = T::zero();
        for i in 0..n {
            cc += u_p[i] * rho_g[i];
            gg += u_g[i] * rho_g[i];
            for j in 0..n {
                let v = self.pair[(i, j)] * self.inv_n;
                cc += v * (phi[i] * phi[j].conj() * g[(j, i)]).re;
                gg += v * g[(i, j)].norm_sqr();
                pair += v * (a[(i, j)] + phi[i] * phi[j]).norm_sqr();
            }
        }
        let half = lit::<T>(0.5);
        Ok(HfbEnergy { one_body, condensate_cloud: cc, cloud_cloud: gg * half, pairing: pair * half })
    }

    /// RK4 trajectory on `[0, t_end]`, keeping every `save_every`-th state.
    pub fn propagate(
        &self,
        state: &DenseState<T>,
        dt: T,
        t_end: T,
        save_every: usize,
    ) -> Result<(Trajectory<T, DenseState<T>>, DenseStepReport)> {
        self.grid.check_same(state.grid())?;
        if state.interaction != self.interaction {
            return Err(crate::error::invalid("interaction", "state and propagator disagree"));
        }
        let (steps, h) = step_count(dt, t_end)?;
        let save_every = save_every.max(1);
        let mut traj = Trajectory::new();
        traj.push(T::zero(), state.clone());
        let mut cur = state.clone();
        let mut worst = DenseStepReport { hermiticity_drift: 0.0, symmetry_drift: 0.0 };
        for k in 1..=steps {
            let (next, rep) = self.step(&cur, h)?;
            worst.hermiticity_drift = worst.hermiticity_drift.max(rep.hermiticity_drift);
            worst.symmetry_drift = worst.symmetry_drift.max(rep.symmetry_drift);
            cur = next;
            if k % save_every == 0 || k == steps {
                traj.push(h * from_usize(k), cur.clone());
            }
        }
        Ok((traj, worst))
    }
}

/// One RK4 step of the trap-free HFB system.
pub fn step_dense<T: Real>(state: &DenseState<T>, dt: T) -> Result<(DenseState<T>, DenseStepReport)> {
    DenseHfb::new(state.grid(), &state.interaction, &TrapSpec::off())?.step(state, dt)
}

/// Trap-free dense trajectory on `[0, t_end]`.
pub fn propagate_dense<T: Real>(
    state: &DenseState<T>,
    dt: T,
    t_end: T,
    save_every: usize,
) -> Result<Trajectory<T, DenseState<T>>> {
    Ok(DenseHfb::new(state.grid(), &state.interaction, &TrapSpec::off())?.propagate(state, dt, t_end, save_every)?.0)
}
