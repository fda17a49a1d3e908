//! Multi-dimensional FFTs on a [`Grid`] and the derived spectral operators.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;
use crate::scalar::{cplx, creal, expi, from_usize, lit, Cplx, Real};

/// FFT plans for one grid plus the `|p|^2` multiplier in DFT index order.
#[derive(Clone)]
pub struct FourierOps<T: Real> {
    grid: Grid<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    k2: Vec<T>,
    parity: Vec<bool>,
}

impl<T: Real> std::fmt::Debug for FourierOps<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierOps").field("grid", &self.grid).finish()
    }
}

impl<T: Real> FourierOps<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        let mut planner = FftPlanner::new();
        let n = grid.points_per_axis();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = grid.len();
        let mut k2 = Vec::with_capacity(len);
        let mut parity = Vec::with_capacity(len);
        for i in 0..len {
            let idx = grid.multi_index(i);
            let mut s = T::zero();
            let mut odd = false;
            for &m in idx.iter().take(grid.dim()) {
                let p = grid.axis_momentum(m);
                s += p * p;
                odd ^= m % 2 == 1;
            }
            k2.push(s);
            parity.push(odd);
        }
        FourierOps { grid: grid.clone(), forward, inverse, k2, parity }
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// `|p|^2` for each DFT index.
    pub fn k2(&self) -> &[T] {
        &self.k2
    }

    pub fn k2_max(&self) -> T {
        self.k2.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a })
    }

    fn transform(&self, data: &mut [Cplx<T>], plan: &Arc<dyn Fft<T>>) {
        let n = self.grid.points_per_axis();
        let dim = self.grid.dim();
        let len = data.len();
        debug_assert_eq!(len, self.grid.len());
        plan.process(data);
        if dim == 1 {
            return;
        }
        let mut buf = vec![Cplx::new(T::zero(), T::zero()); len];
        for axis in 0..dim - 1 {
            let stride = n.pow((dim - 1 - axis) as u32);
            let block = stride * n;
            let mut line = 0;
            for b in 0..len / block {
                for s in 0..stride {
                    let base = b * block + s;
                    for k in 0..n {
                        buf[line * n + k] = data[base + k * stride];
                    }
                    line += 1;
                }
            }
            plan.process(&mut buf);
            line = 0;
            for b in 0..len / block {
                for s in 0..stride {
                    let base = b * block + s;
                    for k in 0..n {
                        data[base + k * stride] = buf[line * n + k];
                    }
                    line += 1;
                }
            }
        }
    }

    /// Unnormalized forward DFT (`e^{-2πi jk/n}` on every axis).
    pub fn dft_forward(&self, data: &mut [Cplx<T>]) {
        self.transform(data, &self.forward);
    }

    /// Unnormalized inverse DFT (`e^{+2πi jk/n}` on every axis).
    pub fn dft_inverse(&self, data: &mut [Cplx<T>]) {
        self.transform(data, &self.inverse);
    }

    /// Applies the Fourier multiplier `m(|p|^2)` in place.
    pub fn apply_multiplier(&self, data: &mut [Cplx<T>], m: impl Fn(T) -> Cplx<T>) {
        self.dft_forward(data);
        let inv = T::one() / from_usize::<T>(data.len());
        for (z, &k2) in data.iter_mut().zip(&self.k2) {
            *z = *z * m(k2) * inv;
        }
        self.dft_inverse(data);
    }

    /// `-Δ f` in place.
    pub fn neg_laplacian(&self, data: &mut [Cplx<T>]) {
        self.apply_multiplier(data, creal);
    }

    /// Free Schrödinger propagation `e^{iΔt}` in place.
    pub fn free_propagate(&self, data: &mut [Cplx<T>], t: T) {
        self.apply_multiplier(data, |k2| expi(-k2 * t));
    }

    /// Continuum Fourier transform `(2π)^{-d/2} ∫ e^{ip·x} f(x) dx` sampled on the
    /// momentum lattice, returned in DFT index order.
    pub fn fourier_transform(&self, f: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut out = f.to_vec();
        self.dft_inverse(&mut out);
        let d = self.grid.dim() as i32;
        let two_pi = lit::<T>(2.0) * T::pi();
        let c = self.grid.measure() / two_pi.powi(d).sqrt();
        for (z, &odd) in out.iter_mut().zip(&self.parity) {
            *z = if odd { -*z * c } else { *z * c };
        }
        out
    }

    /// Inverse of [`FourierOps::fourier_transform`].
    pub fn inverse_fourier_transform(&self, fhat: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut out: Vec<Cplx<T>> = fhat
            .iter()
            .zip(&self.parity)
            .map(|(z, &odd)| if odd { -*z } else { *z })
            .collect();
        self.dft_forward(&mut out);
        let d = self.grid.dim() as i32;
        let two_pi = lit::<T>(2.0) * T::pi();
        let c = self.grid.momentum_measure() / two_pi.powi(d).sqrt();
        for z in out.iter_mut() {
            *z = *z * c;
        }
        out
    }

    /// Momentum-space L¹ norm `∫|f̂(p)| dp`.
    pub fn fourier_l1(&self, f: &[Cplx<T>]) -> T {
        let fh = self.fourier_transform(f);
        fh.iter().fold(T::zero(), |a, z| a + crate::scalar::cabs(*z)) * self.grid.momentum_measure()
    }

    /// Dense real symmetric matrix of `-Δ` in the orthonormal grid basis.
    pub fn neg_laplacian_matrix(&self) -> nalgebra::DMatrix<T> {
        let len = self.grid.len();
        let mut m = nalgebra::DMatrix::<T>::zeros(len, len);
        let mut col = vec![cplx(T::zero(), T::zero()); len];
        for j in 0..len {
            col.iter_mut().for_each(|z| *z = cplx(T::zero(), T::zero()));
            col[j] = cplx(T::one(), T::zero());
            self.neg_laplacian(&mut col);
            for i in 0..len {
                m[(i, j)] = col[i].re;
            }
        }
        let mt = m.transpose();
        (m + mt) * lit::<T>(0.5)
    }
}

/// Circular convolution with a fixed even kernel, including the measure weight:
/// `(v*f)(x_i) = Σ_j v(x_i - x_j) f(x_j) dx`.
#[derive(Clone, Debug)]
pub struct Convolver<T: Real> {
    ops: FourierOps<T>,
    kernel_hat: Vec<Cplx<T>>,
}

impl<T: Real> Convolver<T> {
    /// `offsets[m]` is the kernel at the periodic offset with DFT index `m`.
    pub fn new(ops: FourierOps<T>, offsets: &[T]) -> Self {
        let mut kh: Vec<Cplx<T>> = offsets.iter().map(|&x| creal(x)).collect();
        ops.dft_forward(&mut kh);
        let c = ops.grid().measure() / from_usize::<T>(offsets.len());
        for z in kh.iter_mut() {
            *z = *z * c;
        }
        Convolver { ops, kernel_hat: kh }
    }

    pub fn ops(&self) -> &FourierOps<T> {
        &self.ops
    }

    pub fn convolve_in_place(&self, data: &mut [Cplx<T>]) {
        self.ops.dft_forward(data);
        for (z, k) in data.iter_mut().zip(&self.kernel_hat) {
            *z = *z * *k;
        }
        self.ops.dft_inverse(data);
    }

    pub fn convolve(&self, f: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut out = f.to_vec();
        self.convolve_in_place(&mut out);
        out
    }

    /// Convolution of a real density; the imaginary round-off is dropped.
    pub fn convolve_real(&self, rho: &[T]) -> Vec<T> {
        let mut buf: Vec<Cplx<T>> = rho.iter().map(|&x| creal(x)).collect();
        self.convolve_in_place(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }
}
