//! Two-body interaction `v` with the mean-field prefactor `1/N`.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::fft::{Convolver, FourierOps};
use crate::grid::Grid;
use crate::scalar::{cabs, lit, Cplx, Real};

/// Radial profile of `v`.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape<T: Real> {
    /// `v(x) = v0·exp(-|x|²/(2σ²))`.
    Gaussian { v0: T, sigma: T },
    /// Values at the grid points `x_j`, in flat grid order. Only usable on a
    /// grid with the same number of points.
    Table { values: Vec<T> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct InteractionSpec<T: Real> {
    pub shape: Shape<T>,
    /// The `N` in the mean-field prefactor `1/N`.
    pub n_scale: T,
}

/// Relative tolerance of the evenness check for tabulated potentials.
pub const EVEN_TOL: f64 = 1e-12;

impl<T: Real> InteractionSpec<T> {
    pub fn gaussian(v0: T, sigma: T, n_scale: T) -> Result<Self> {
        if !v0.is_finite() {
            return Err(invalid("v0", "must be finite"));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(invalid("sigma", "must be positive"));
        }
        Self::with_scale(Shape::Gaussian { v0, sigma }, n_scale)
    }

    /// Tabulated potential; must satisfy `v(x) = v(-x)` on `grid`.
    pub fn table(grid: &Grid<T>, values: Vec<T>, n_scale: T) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("values", format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "must be finite"));
        }
        let scale = values.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let n = grid.points_per_axis();
        for i in 0..grid.len() {
            let mi = grid.multi_index(i);
            let mut mirror = [0usize; 3];
            for a in 0..grid.dim() {
                // x_j = -L + jh mirrors to x_{n-j}; x_0 = -L is its own image.
                mirror[a] = (n - mi[a]) % n;
            }
            let j = grid.flat_index(mirror);
            if (values[i] - values[j]).abs() > lit::<T>(EVEN_TOL) * scale {
                return Err(invalid("values", "tabulated potential must be even"));
            }
        }
        Self::with_scale(Shape::Table { values }, n_scale)
    }

    fn with_scale(shape: Shape<T>, n_scale: T) -> Result<Self> {
        if !(n_scale > T::zero()) || !n_scale.is_finite() {
            return Err(invalid("n_scale", "must be positive"));
        }
        Ok(InteractionSpec { shape, n_scale })
    }

    /// True when `v` vanishes identically.
    pub fn is_zero(&self) -> bool {
        match &self.shape {
            Shape::Gaussian { v0, .. } => *v0 == T::zero(),
            Shape::Table { values } => values.iter().all(|v| *v == T::zero()),
        }
    }

    /// Copy with a different `N`.
    pub fn with_n_scale(&self, n_scale: T) -> Result<Self> {
        Self::with_scale(self.shape.clone(), n_scale)
    }

    /// `v` at every periodic offset, indexed like the grid's DFT layout.
    pub fn offsets(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        match &self.shape {
            Shape::Gaussian { v0, sigma } => {
                let two_s2 = lit::<T>(2.0) * *sigma * *sigma;
                Ok((0..grid.len())
                    .map(|i| {
                        let r = grid.offset_radius(i);
                        *v0 * (-(r * r) / two_s2).exp()
                    })
                    .collect())
            }
            Shape::Table { values } => {
                if values.len() != grid.len() {
                    return Err(invalid("values", "table does not match the grid"));
                }
                let n = grid.points_per_axis();
                Ok((0..grid.len())
                    .map(|i| {
                        let mi = grid.multi_index(i);
                        let mut p = [0usize; 3];
                        for a in 0..grid.dim() {
                            // offset index m has displacement σ(m)h = x_{σ(m)+n/2}
                            p[a] = (mi[a] + n / 2) % n;
                        }
                        values[grid.flat_index(p)]
                    })
                    .collect())
            }
        }
    }

    /// Dense pair matrix `V_ij = v(x_i - x_j)` with minimum-image offsets.
    pub fn pair_matrix(&self, grid: &Grid<T>) -> Result<DMatrix<T>> {
        let off = self.offsets(grid)?;
        let n = grid.points_per_axis();
        let len = grid.len();
        let idx: Vec<[usize; 3]> = (0..len).map(|i| grid.multi_index(i)).collect();
        Ok(DMatrix::from_fn(len, len, |i, j| {
            let mut d = [0usize; 3];
            for a in 0..grid.dim() {
                d[a] = (idx[i][a] + n - idx[j][a]) % n;
            }
            off[grid.flat_index(d)]
        }))
    }

    /// `sup |v|` over the grid offsets.
    pub fn sup_norm(&self, grid: &Grid<T>) -> Result<T> {
        Ok(self.offsets(grid)?.iter().fold(T::zero(), |a, &v| a.max(v.abs())))
    }

    /// `‖v̂‖₁ = ∫|v̂(p)| dp` on the momentum lattice.
    pub fn fourier_l1(&self, grid: &Grid<T>) -> Result<T> {
        let ops = FourierOps::new(grid);
        let mut buf: Vec<Cplx<T>> = self.offsets(grid)?.into_iter().map(|x| Cplx::new(x, T::zero())).collect();
        ops.dft_inverse(&mut buf);
        let two_pi = lit::<T>(2.0) * T::pi();
        let c = grid.measure() / two_pi.powi(grid.dim() as i32).sqrt();
        Ok(buf.iter().fold(T::zero(), |a, z| a + cabs(*z)) * c * grid.momentum_measure())
    }

    /// `∫ v dx` on the grid.
    pub fn integral(&self, grid: &Grid<T>) -> Result<T> {
        Ok(self.offsets(grid)?.iter().fold(T::zero(), |a, &v| a + v) * grid.measure())
    }

    pub fn convolver(&self, grid: &Grid<T>) -> Result<Convolver<T>> {
        Ok(Convolver::new(FourierOps::new(grid), &self.offsets(grid)?))
    }
}

/// `N^{-1}(v∗ρ)` for a real density.
pub fn mean_field_direct<T: Real>(rho: &[T], grid: &Grid<T>, v: &InteractionSpec<T>) -> Result<Vec<T>> {
    if rho.len() != grid.len() {
        return Err(invalid("rho", "length does not match the grid"));
    }
    let inv_n = T::one() / v.n_scale;
    Ok(v.convolver(grid)?.convolve_real(rho).into_iter().map(|x| x * inv_n).collect())
}
