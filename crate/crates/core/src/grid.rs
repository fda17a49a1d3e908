//! Uniform periodic grids, fields on them, power-law traps and the one-body
//! operator `h = -Δ + w`.

use crate::error::{invalid, Error, Result};
use crate::fft::FourierOps;
use crate::scalar::{cplx, from_usize, lit, norm_sqr, Cplx, Real};

/// Uniform periodic grid on `[-L, L)^dim` with `n` points per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T: Real> {
    dim: usize,
    n: usize,
    half_length: T,
    spacing: T,
}

impl<T: Real> Grid<T> {
    pub fn new(dim: usize, points_per_axis: usize, box_half_length: T) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid("dim", format!("must be 1, 2 or 3, got {dim}")));
        }
        if points_per_axis < 2 || !points_per_axis.is_power_of_two() {
            return Err(invalid(
                "points_per_axis",
                format!("must be a power of two >= 2, got {points_per_axis}"),
            ));
        }
        if !(box_half_length > T::zero()) || !box_half_length.is_finite() {
            return Err(invalid("box_half_length", "must be positive and finite"));
        }
        let spacing = lit::<T>(2.0) * box_half_length / from_usize::<T>(points_per_axis);
        Ok(Grid { dim, n: points_per_axis, half_length: box_half_length, spacing })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn points_per_axis(&self) -> usize {
        self.n
    }
    pub fn box_half_length(&self) -> T {
        self.half_length
    }
    pub fn spacing(&self) -> T {
        self.spacing
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `dx^dim`.
    pub fn measure(&self) -> T {
        self.spacing.powi(self.dim as i32)
    }

    /// Momentum lattice spacing `π/L`.
    pub fn momentum_spacing(&self) -> T {
        T::pi() / self.half_length
    }

    /// Volume element `dp^dim` on the momentum lattice.
    pub fn momentum_measure(&self) -> T {
        self.momentum_spacing().powi(self.dim as i32)
    }

    /// Coordinate of point `j` along one axis.
    pub fn axis_coord(&self, j: usize) -> T {
        -self.half_length + from_usize::<T>(j) * self.spacing
    }

    /// Signed integer frequency of DFT index `m`.
    pub fn signed_index(&self, m: usize) -> i64 {
        if m < self.n / 2 {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Momentum `2πk/(2L)` of DFT index `m`, with `k ∈ [-n/2, n/2)`.
    pub fn axis_momentum(&self, m: usize) -> T {
        lit::<T>(self.signed_index(m) as f64) * self.momentum_spacing()
    }

    /// Periodic minimum-image displacement for DFT offset index `m`.
    pub fn axis_offset(&self, m: usize) -> T {
        lit::<T>(self.signed_index(m) as f64) * self.spacing
    }

    /// Per-axis indices of flat index `i` (last axis fastest).
    pub fn multi_index(&self, i: usize) -> [usize; 3] {
        let n = self.n;
        match self.dim {
            1 => [i, 0, 0],
            2 => [i / n, i % n, 0],
            _ => [i / (n * n), (i / n) % n, i % n],
        }
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        let n = self.n;
        match self.dim {
            1 => idx[0],
            2 => idx[0] * n + idx[1],
            _ => (idx[0] * n + idx[1]) * n + idx[2],
        }
    }

    /// Position of flat point `i`; unused components are zero.
    pub fn point(&self, i: usize) -> [T; 3] {
        let idx = self.multi_index(i);
        let mut p = [T::zero(); 3];
        for a in 0..self.dim {
            p[a] = self.axis_coord(idx[a]);
        }
        p
    }

    pub fn radius(&self, i: usize) -> T {
        let p = self.point(i);
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Length of the minimum-image displacement encoded by flat offset index `i`.
    pub fn offset_radius(&self, i: usize) -> T {
        let idx = self.multi_index(i);
        let mut r2 = T::zero();
        for &m in idx.iter().take(self.dim) {
            let x = self.axis_offset(m);
            r2 += x * x;
        }
        r2.sqrt()
    }

    /// Minimum-image distance between flat points `i` and `j`.
    pub fn periodic_distance(&self, i: usize, j: usize) -> T {
        let a = self.multi_index(i);
        let b = self.multi_index(j);
        let mut idx = [0usize; 3];
        for ax in 0..self.dim {
            idx[ax] = (a[ax] + self.n - b[ax]) % self.n;
        }
        self.offset_radius(self.flat_index(idx))
    }

    /// True if flat point `i` lies in the outermost 10% shell of the box.
    pub fn in_boundary_shell(&self, i: usize) -> bool {
        let p = self.point(i);
        let edge = lit::<T>(0.9) * self.half_length;
        p.iter().take(self.dim).any(|&x| x.abs() >= edge)
    }

    pub(crate) fn check_same(&self, other: &Grid<T>) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "dim {} n {} L {} vs dim {} n {} L {}",
                self.dim,
                self.n,
                crate::scalar::to_f64(self.half_length),
                other.dim,
                other.n,
                crate::scalar::to_f64(other.half_length)
            )))
        }
    }
}

/// Complex scalar field sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T: Real> {
    grid: Grid<T>,
    values: Vec<Cplx<T>>,
}

impl<T: Real> Field<T> {
    pub fn new(grid: Grid<T>, values: Vec<Cplx<T>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values, grid has {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Field { grid: grid.clone(), values: vec![cplx(T::zero(), T::zero()); grid.len()] }
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn([T; 3]) -> Cplx<T>) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Field { grid: grid.clone(), values }
    }

    pub fn from_real_fn(grid: &Grid<T>, f: impl Fn([T; 3]) -> T) -> Self {
        Self::from_fn(grid, |x| cplx(f(x), T::zero()))
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }
    pub fn values(&self) -> &[Cplx<T>] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<Cplx<T>> {
        self.values
    }

    /// `⟨f, g⟩ = Σ conj(f) g dx`.
    pub fn inner(&self, other: &Field<T>) -> Cplx<T> {
        inner(&self.values, &other.values) * self.grid.measure()
    }

    pub fn norm_sq(&self) -> T {
        self.values.iter().fold(T::zero(), |a, z| a + norm_sqr(*z)) * self.grid.measure()
    }

    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn scaled(&self, c: Cplx<T>) -> Field<T> {
        Field { grid: self.grid.clone(), values: self.values.iter().map(|z| *z * c).collect() }
    }

    /// `self - other` in weighted ℓ².
    pub fn distance(&self, other: &Field<T>) -> T {
        let s = self
            .values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |a, (x, y)| a + norm_sqr(*x - *y));
        (s * self.grid.measure()).sqrt()
    }

    pub fn normalized(&self) -> Field<T> {
        let n = self.norm();
        self.scaled(cplx(T::one() / n, T::zero()))
    }

    /// Fraction of ℓ² mass in the outermost 10% shell.
    pub fn boundary_mass(&self) -> T {
        let total = self.values.iter().fold(T::zero(), |a, z| a + norm_sqr(*z));
        if total == T::zero() {
            return T::zero();
        }
        let shell = (0..self.grid.len())
            .filter(|&i| self.grid.in_boundary_shell(i))
            .fold(T::zero(), |a, i| a + norm_sqr(self.values[i]));
        shell / total
    }
}

impl<T: Real> AsRef<[Cplx<T>]> for Field<T> {
    fn as_ref(&self) -> &[Cplx<T>] {
        &self.values
    }
}

/// Unweighted `Σ conj(a) b`.
pub fn inner<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
    a.iter().zip(b).fold(cplx(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * *y)
}

/// Power-law trap `w(x) = prefactor·|x|^s`.
///
/// A zero prefactor switches the trap off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrapSpec<T: Real> {
    pub exponent_s: T,
    pub prefactor: T,
}

impl<T: Real> TrapSpec<T> {
    pub fn new(exponent_s: T, prefactor: T) -> Result<Self> {
        if !(exponent_s > T::zero()) || exponent_s > lit(2.0) {
            return Err(invalid("exponent_s", "must lie in (0, 2]"));
        }
        if !(prefactor >= T::zero()) || !prefactor.is_finite() {
            return Err(invalid("prefactor", "must be finite and non-negative"));
        }
        Ok(TrapSpec { exponent_s, prefactor })
    }

    /// `|x|^s` with unit prefactor.
    pub fn power(exponent_s: T) -> Result<Self> {
        Self::new(exponent_s, T::one())
    }

    pub fn off() -> Self {
        TrapSpec { exponent_s: T::one(), prefactor: T::zero() }
    }

    pub fn value(&self, r: T) -> T {
        if self.prefactor == T::zero() {
            T::zero()
        } else {
            self.prefactor * r.powf(self.exponent_s)
        }
    }

    /// Trap values at every grid point.
    pub fn sample(&self, grid: &Grid<T>) -> Vec<T> {
        (0..grid.len()).map(|i| self.value(grid.radius(i))).collect()
    }
}

/// `h = -Δ + w` with the Laplacian applied spectrally.
#[derive(Clone, Debug)]
pub struct Hamiltonian<T: Real> {
    ops: FourierOps<T>,
    trap: TrapSpec<T>,
    potential: Vec<T>,
}

impl<T: Real> Hamiltonian<T> {
    pub fn new(grid: &Grid<T>, trap: TrapSpec<T>) -> Self {
        Hamiltonian { ops: FourierOps::new(grid), potential: trap.sample(grid), trap }
    }

    pub fn grid(&self) -> &Grid<T> {
        self.ops.grid()
    }
    pub fn ops(&self) -> &FourierOps<T> {
        &self.ops
    }
    pub fn trap(&self) -> &TrapSpec<T> {
        &self.trap
    }
    pub fn potential(&self) -> &[T] {
        &self.potential
    }

    /// Upper bound on the spectrum of the grid operator.
    pub fn spectral_upper_bound(&self) -> T {
        let wmax = self.potential.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
        self.ops.k2_max() + wmax
    }

    pub fn apply_into(&self, f: &[Cplx<T>], out: &mut [Cplx<T>]) {
        out.copy_from_slice(f);
        self.ops.neg_laplacian(out);
        for ((o, x), &w) in out.iter_mut().zip(f).zip(&self.potential) {
            *o += *x * w;
        }
    }

    pub fn apply(&self, f: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut out = vec![cplx(T::zero(), T::zero()); f.len()];
        self.apply_into(f, &mut out);
        out
    }

    /// Applies `h` to real vectors (the result is real up to round-off).
    pub fn apply_real(&self, f: &[T]) -> Vec<T> {
        let buf: Vec<Cplx<T>> = f.iter().map(|&x| cplx(x, T::zero())).collect();
        self.apply(&buf).into_iter().map(|z| z.re).collect()
    }

    pub fn apply_field(&self, f: &Field<T>) -> Result<Field<T>> {
        self.grid().check_same(f.grid())?;
        Field::new(self.grid().clone(), self.apply(f.values()))
    }
}

/// `(-Δ + w) f` on `grid`.
pub fn apply_h<T: Real>(grid: &Grid<T>, trap: &TrapSpec<T>, f: &Field<T>) -> Result<Field<T>> {
    grid.check_same(f.grid())?;
    Hamiltonian::new(grid, *trap).apply_field(f)
}
