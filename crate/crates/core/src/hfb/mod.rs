//! Hartree–Fock–Bogoliubov states `(φ, γ, α)` and their propagators.
//!
//! Dense matrices live in the orthonormal grid basis: the matrix of an
//! operator with kernel `k(x,y)` is `k(x_i,x_j)·dx`, a field `f` becomes
//! `f·√dx`. Products and traces of these matrices are then plain linear
//! algebra.

mod dense;
mod fields;
mod free;
mod modes;

pub use dense::{propagate_dense, step_dense, DenseHfb, DenseStepReport};
pub use fields::{mean_field_exchange_apply, pairing_apply, HfbRepr};
pub use free::{free_conjugate, free_conjugate_dense, free_propagate_field};
pub use modes::{propagate_modes, step_modes, ModeHfb, ModeOptions, ModeStepReport};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::grid::{Field, Grid, TrapSpec};
use crate::interaction::InteractionSpec;
use crate::scalar::{cabs, cone, creal, czero, from_usize, lit, Cplx, Real};
use crate::thermal::ThermalPdm;

pub type CMat<T> = DMatrix<Cplx<T>>;
pub type CVec<T> = DVector<Cplx<T>>;

/// `f·√dx`.
pub fn to_orthonormal<T: Real>(f: &Field<T>) -> CVec<T> {
    let s = f.grid().measure().sqrt();
    CVec::from_iterator(f.values().len(), f.values().iter().map(|z| *z * s))
}

/// Inverse of [`to_orthonormal`].
pub fn from_orthonormal<T: Real>(grid: &Grid<T>, v: &CVec<T>) -> Field<T> {
    let s = T::one() / grid.measure().sqrt();
    Field::new(grid.clone(), v.iter().map(|z| *z * s).collect()).expect("length matches grid")
}

/// HFB energy split into its groups; the groups are conserved only in sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HfbEnergy<T: Real> {
    /// `⟨φ,(−Δ+w)φ⟩ + tr((−Δ+w)γ)`.
    pub one_body: T,
    /// `N^{-1}[∫(v∗|φ|²)ρ_γ + ∫∫ v φ(x)φ̄(y)γ(y,x)]`.
    pub condensate_cloud: T,
    /// `(2N)^{-1}[∫(v∗ρ_γ)ρ_γ + ∫∫ v|γ|²]`.
    pub cloud_cloud: T,
    /// `(2N)^{-1}∫∫ v|α + φ⊗φ|²`.
    pub pairing: T,
}

impl<T: Real> HfbEnergy<T> {
    pub fn total(&self) -> T {
        self.one_body + self.condensate_cloud + self.cloud_cloud + self.pairing
    }
}

/// States whose HFB energy can be evaluated.
pub trait HfbState<T: Real> {
    fn energy_terms(&self, trap: &TrapSpec<T>) -> Result<HfbEnergy<T>>;
}

impl<T: Real> HfbState<T> for DenseState<T> {
    fn energy_terms(&self, trap: &TrapSpec<T>) -> Result<HfbEnergy<T>> {
        DenseHfb::new(self.grid(), &self.interaction, trap)?.energy(self)
    }
}

impl<T: Real> HfbState<T> for ModeState<T> {
    fn energy_terms(&self, trap: &TrapSpec<T>) -> Result<HfbEnergy<T>> {
        ModeHfb::new(self.grid(), &self.interaction, trap, ModeOptions::default())?.energy(self)
    }
}

/// Total trap-free HFB energy.
pub fn hfb_energy<T: Real, S: HfbState<T>>(state: &S) -> Result<T> {
    Ok(state.energy_terms(&TrapSpec::off())?.total())
}

pub(crate) fn max_abs<T: Real>(m: &CMat<T>) -> T {
    m.iter().fold(T::zero(), |a, z| a.max(cabs(*z)))
}

/// `(γ, α)` as dense matrices in the orthonormal grid basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePdm<T: Real> {
    grid: Grid<T>,
    pub gamma: CMat<T>,
    pub alpha: CMat<T>,
}

impl<T: Real> DensePdm<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        let n = grid.len();
        DensePdm { grid: grid.clone(), gamma: CMat::zeros(n, n), alpha: CMat::zeros(n, n) }
    }

    /// From orthonormal-basis matrices.
    pub fn new(grid: &Grid<T>, gamma: CMat<T>, alpha: CMat<T>) -> Result<Self> {
        let n = grid.len();
        if gamma.shape() != (n, n) || alpha.shape() != (n, n) {
            return Err(invalid("gamma", format!("matrices must be {n}×{n}")));
        }
        Ok(DensePdm { grid: grid.clone(), gamma, alpha })
    }

    /// From kernel samples `γ(x_i, x_j)` and `α(x_i, x_j)`.
    pub fn from_kernels(grid: &Grid<T>, gamma: CMat<T>, alpha: CMat<T>) -> Result<Self> {
        let dx = creal(grid.measure());
        Self::new(grid, gamma * dx, alpha * dx)
    }

    /// `γ = Σ_j λ_j |ψ_j⟩⟨ψ_j|`, `α = 0`.
    pub fn from_modes(grid: &Grid<T>, weights: &[T], modes: &[Field<T>]) -> Result<Self> {
        if weights.len() != modes.len() {
            return Err(invalid("weights", "one weight per mode required"));
        }
        let mut pdm = Self::zeros(grid);
        for (w, m) in weights.iter().zip(modes) {
            grid.check_same(m.grid())?;
            let v = to_orthonormal(m);
            pdm.gamma += &v * v.adjoint() * creal(*w);
        }
        Ok(pdm)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn gamma_kernel(&self) -> CMat<T> {
        &self.gamma * creal(T::one() / self.grid.measure())
    }

    pub fn alpha_kernel(&self) -> CMat<T> {
        &self.alpha * creal(T::one() / self.grid.measure())
    }

    pub fn trace(&self) -> T {
        self.gamma.diagonal().iter().fold(T::zero(), |a, z| a + z.re)
    }

    /// `ρ_γ(x_i) = γ(x_i, x_i)`.
    pub fn density(&self) -> Vec<T> {
        let inv = T::one() / self.grid.measure();
        self.gamma.diagonal().iter().map(|z| z.re * inv).collect()
    }

    /// `max |γ − γ*|`.
    pub fn hermiticity_defect(&self) -> T {
        max_abs(&(&self.gamma - self.gamma.adjoint()))
    }

    /// `max |α − αᵀ|`.
    pub fn symmetry_defect(&self) -> T {
        max_abs(&(&self.alpha - self.alpha.transpose()))
    }

    /// Replaces `γ` by `(γ+γ*)/2` and `α` by `(α+αᵀ)/2`; returns the defects
    /// removed.
    pub fn symmetrize(&mut self) -> (T, T) {
        let defects = (self.hermiticity_defect(), self.symmetry_defect());
        let half = creal(lit::<T>(0.5));
        self.gamma = (&self.gamma + self.gamma.adjoint()) * half;
        self.alpha = (&self.alpha + self.alpha.transpose()) * half;
        defects
    }

    /// `[[γ, α], [ᾱ, 1 + γ̄]]`.
    pub fn generalized_block(&self) -> CMat<T> {
        let n = self.grid.len();
        let mut m = CMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&self.gamma);
        m.view_mut((0, n), (n, n)).copy_from(&self.alpha);
        m.view_mut((n, 0), (n, n)).copy_from(&self.alpha.map(|z| z.conj()));
        let mut lower = self.gamma.map(|z| z.conj());
        for i in 0..n {
            lower[(i, i)] += cone();
        }
        m.view_mut((n, n), (n, n)).copy_from(&lower);
        m
    }

    /// Hilbert–Schmidt norm of `α`.
    pub fn alpha_hs_norm(&self) -> T {
        self.alpha.iter().fold(T::zero(), |a, z| a + z.norm_sqr()).sqrt()
    }
}

/// `(φ, γ, α)` with dense `γ, α`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState<T: Real> {
    pub phi: Field<T>,
    pub pdm: DensePdm<T>,
    pub interaction: InteractionSpec<T>,
}

impl<T: Real> DenseState<T> {
    pub fn new(phi: Field<T>, pdm: DensePdm<T>, interaction: InteractionSpec<T>) -> Result<Self> {
        phi.grid().check_same(pdm.grid())?;
        Ok(DenseState { phi, pdm, interaction })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.pdm.grid()
    }

    /// `‖φ‖² + tr γ`.
    pub fn number(&self) -> T {
        self.phi.norm_sq() + self.pdm.trace()
    }
}

/// Modes kept alongside the thermal ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Complement {
    /// Complete the thermal modes to an orthonormal basis of the grid with
    /// zero-weight modes. Needed for the exact `θ*θ` contribution as soon as
    /// pairing is generated.
    Full,
    /// Keep only the weighted modes; exact only while `b_j` stay in their span.
    None,
}

/// `(φ, γ, α)` through modes: `γ = Σ_j λ_j a_j a_j* + (1+λ_j) b_j b_j*`,
/// `α = Σ_j λ_j a_j ⊗ b_j + (1+λ_j) b_j ⊗ a_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeState<T: Real> {
    pub phi: Field<T>,
    pub weights: Vec<T>,
    pub modes_a: Vec<Field<T>>,
    pub modes_b: Vec<Field<T>>,
    pub interaction: InteractionSpec<T>,
    /// Trace carried by thermal modes that were not retained.
    pub discarded_trace: T,
}

impl<T: Real> ModeState<T> {
    /// `a_j = ψ_j`, `b_j = 0`.
    pub fn from_modes(
        phi: Field<T>,
        weights: &[T],
        modes: &[Field<T>],
        interaction: InteractionSpec<T>,
        complement: Complement,
    ) -> Result<Self> {
        if weights.len() != modes.len() {
            return Err(invalid("weights", "one weight per mode required"));
        }
        if weights.iter().any(|w| !(*w >= T::zero())) {
            return Err(invalid("weights", "must be non-negative"));
        }
        let grid = phi.grid().clone();
        for m in modes {
            grid.check_same(m.grid())?;
        }
        let mut a: Vec<Field<T>> = modes.to_vec();
        let mut w: Vec<T> = weights.to_vec();
        if complement == Complement::Full {
            for extra in orthonormal_completion(&grid, modes) {
                a.push(extra);
                w.push(T::zero());
            }
        }
        let b = vec![Field::zeros(&grid); a.len()];
        Ok(ModeState { phi, weights: w, modes_a: a, modes_b: b, interaction, discarded_trace: T::zero() })
    }

    pub fn from_thermal(
        phi: Field<T>,
        pdm: &ThermalPdm<T>,
        interaction: InteractionSpec<T>,
        complement: Complement,
    ) -> Result<Self> {
        let mut s = Self::from_modes(phi, &pdm.weights, &pdm.modes, interaction, complement)?;
        s.discarded_trace = pdm.discarded_trace;
        Ok(s)
    }

    pub fn grid(&self) -> &Grid<T> {
        self.phi.grid()
    }

    pub fn mode_count(&self) -> usize {
        self.weights.len()
    }

    /// `‖φ‖² + Σ_j λ_j‖a_j‖² + (1+λ_j)‖b_j‖²`, plus the discarded trace.
    pub fn number(&self) -> T {
        let mut n = self.phi.norm_sq() + self.discarded_trace;
        for ((w, a), b) in self.weights.iter().zip(&self.modes_a).zip(&self.modes_b) {
            n += *w * a.norm_sq() + (T::one() + *w) * b.norm_sq();
        }
        n
    }

    /// Dense `(γ, α)` rebuilt from the modes.
    pub fn to_dense(&self) -> DensePdm<T> {
        let grid = self.grid();
        let mut pdm = DensePdm::zeros(grid);
        for ((w, a), b) in self.weights.iter().zip(&self.modes_a).zip(&self.modes_b) {
            let (va, vb) = (to_orthonormal(a), to_orthonormal(b));
            let (ca, cb) = (creal(*w), creal(T::one() + *w));
            if *w != T::zero() {
                pdm.gamma += &va * va.adjoint() * ca;
                pdm.alpha += &va * vb.transpose() * ca;
            }
            pdm.gamma += &vb * vb.adjoint() * cb;
            pdm.alpha += &vb * va.transpose() * cb;
        }
        pdm
    }

    /// Hilbert–Schmidt norm of `Σ_j b_j ⊗ a_j − a_j ⊗ b_j`, which vanishes
    /// for every state reachable from `b_j = 0`. Evaluated on every
    /// `stride`-th grid point in each variable.
    pub fn antisymmetry_defect(&self, stride: usize) -> T {
        let stride = stride.max(1);
        let dx = self.grid().measure();
        let idx: Vec<usize> = (0..self.grid().len()).step_by(stride).collect();
        let mut sum = T::zero();
        for &x in &idx {
            for &y in &idx {
                let mut z = czero::<T>();
                for (a, b) in self.modes_a.iter().zip(&self.modes_b) {
                    z += b.values()[x] * a.values()[y] - a.values()[x] * b.values()[y];
                }
                sum += z.norm_sqr();
            }
        }
        let scale = from_usize::<T>(stride * stride);
        (sum * dx * dx * scale).sqrt()
    }
}

/// Orthonormal fields spanning the complement of `modes` (assumed
/// orthonormal) in the grid space.
fn orthonormal_completion<T: Real>(grid: &Grid<T>, modes: &[Field<T>]) -> Vec<Field<T>> {
    let n = grid.len();
    let mut basis: Vec<CVec<T>> = modes.iter().map(to_orthonormal).collect();
    let start = basis.len();
    for i in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = CVec::zeros(n);
        v[i] = cone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dotc(&v);
                v -= q * c;
            }
        }
        let norm = v.norm();
        if norm > lit(0.1) {
            basis.push(v / creal(norm));
        }
    }
    basis[start..].iter().map(|v| from_orthonormal(grid, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_is_orthonormal_and_complete() {
        let grid = Grid::new(1, 8, 3.0).unwrap();
        let f = Field::from_real_fn(&grid, |x: [f64; 3]| (-x[0] * x[0]).exp()).normalized();
        let extra = orthonormal_completion(&grid, std::slice::from_ref(&f));
        assert_eq!(extra.len(), 7);
        let mut all = vec![f];
        all.extend(extra);
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((a.inner(b) - Cplx::new(e, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_round_trip_of_modes() {
        let grid = Grid::new(1, 8, 3.0).unwrap();
        let f = Field::from_real_fn(&grid, |x: [f64; 3]| (-x[0] * x[0]).exp()).normalized();
        let v = InteractionSpec::gaussian(1.0, 1.0, 10.0).unwrap();
        let s = ModeState::from_modes(Field::zeros(&grid), &[0.5], std::slice::from_ref(&f), v, Complement::Full).unwrap();
        let d = s.to_dense();
        assert!((d.trace() - 0.5).abs() < 1e-12);
        assert!((s.number() - 0.5).abs() < 1e-12);
        let direct = DensePdm::from_modes(&grid, &[0.5], &[f]).unwrap();
        assert!(max_abs(&(d.gamma - direct.gamma)) < 1e-14);
        assert_eq!(s.antisymmetry_defect(1), 0.0);
    }
}
