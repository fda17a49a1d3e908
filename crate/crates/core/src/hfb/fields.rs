//! Exchange `N^{-1} v♯γ` and pairing `N^{-1} v♯(α + φ⊗φ)` applied to fields.

use crate::error::Result;
use crate::fft::Convolver;
use crate::grid::{Field, Grid};
use crate::interaction::InteractionSpec;
use crate::scalar::{creal, czero, Cplx, Real};

use super::{from_orthonormal, to_orthonormal, CMat, DensePdm, ModeState};

/// One term `c·u ⊗ w` of a low-rank kernel.
pub(crate) type Term<'a, T> = (T, &'a [Cplx<T>], &'a [Cplx<T>]);

/// Convolution with `v/N` and the low-rank contractions built on it.
#[derive(Clone, Debug)]
pub(crate) struct MeanField<T: Real> {
    conv: Convolver<T>,
    inv_n: T,
}

impl<T: Real> MeanField<T> {
    pub(crate) fn new(grid: &Grid<T>, v: &InteractionSpec<T>) -> Result<Self> {
        Ok(MeanField { conv: v.convolver(grid)?, inv_n: T::one() / v.n_scale })
    }

    /// `N^{-1} v∗ρ`.
    pub(crate) fn direct(&self, rho: &[T]) -> Vec<T> {
        self.conv.convolve_real(rho).into_iter().map(|x| x * self.inv_n).collect()
    }

    /// `out += N^{-1} Σ c·u(x) (v∗(w̃ f))(x)`, with `w̃ = w̄` when `conj_w`.
    pub(crate) fn contract_into(&self, terms: &[Term<'_, T>], conj_w: bool, f: &[Cplx<T>], out: &mut [Cplx<T>]) {
        let mut buf = vec![czero::<T>(); f.len()];
        for &(c, u, w) in terms {
            for ((b, wi), fi) in buf.iter_mut().zip(w).zip(f) {
                *b = if conj_w { wi.conj() * *fi } else { *wi * *fi };
            }
            self.conv.convolve_in_place(&mut buf);
            let s = c * self.inv_n;
            for ((o, ui), bi) in out.iter_mut().zip(u).zip(&buf) {
                *o += *ui * *bi * s;
            }
        }
    }
}

pub(crate) fn is_zero<T: Real>(f: &[Cplx<T>]) -> bool {
    f.iter().all(|z| z.re == T::zero() && z.im == T::zero())
}

/// Terms `(c, u, u)` of `γ = Σ c u u*`, skipping zero contributions.
pub(crate) fn gamma_terms<'a, T: Real, F: AsRef<[Cplx<T>]>>(weights: &[T], a: &'a [F], b: &'a [F]) -> Vec<Term<'a, T>> {
    let mut t = Vec::new();
    for ((w, a), b) in weights.iter().zip(a).zip(b) {
        if *w != T::zero() {
            t.push((*w, a.as_ref(), a.as_ref()));
        }
        if !is_zero(b.as_ref()) {
            t.push((T::one() + *w, b.as_ref(), b.as_ref()));
        }
    }
    t
}

/// Terms `(c, f, h)` of `α = Σ c f ⊗ h`, skipping zero contributions.
pub(crate) fn alpha_terms<'a, T: Real, F: AsRef<[Cplx<T>]>>(weights: &[T], a: &'a [F], b: &'a [F]) -> Vec<Term<'a, T>> {
    let mut t = Vec::new();
    for ((w, a), b) in weights.iter().zip(a).zip(b) {
        if is_zero(b.as_ref()) {
            continue;
        }
        if *w != T::zero() {
            t.push((*w, a.as_ref(), b.as_ref()));
        }
        t.push((T::one() + *w, b.as_ref(), a.as_ref()));
    }
    t
}

/// Representations of `(γ, α)` that can apply the exchange and pairing
/// operators.
pub trait HfbRepr<T: Real> {
    fn repr_grid(&self) -> &Grid<T>;
    /// `N^{-1}(v♯γ) f`.
    fn exchange_apply(&self, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>>;
    /// `N^{-1}(v♯α^φ) f` with `α^φ = α + φ⊗φ`.
    fn pairing_apply(&self, phi: Option<&Field<T>>, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>>;
}

fn dense_apply<T: Real>(grid: &Grid<T>, v: &InteractionSpec<T>, kernel: &CMat<T>, f: &Field<T>) -> Result<Field<T>> {
    let vm = v.pair_matrix(grid)?;
    let inv_n = T::one() / v.n_scale;
    let m = CMat::from_fn(kernel.nrows(), kernel.ncols(), |i, j| kernel[(i, j)] * creal(vm[(i, j)] * inv_n));
    Ok(from_orthonormal(grid, &(m * to_orthonormal(f))))
}

impl<T: Real> HfbRepr<T> for DensePdm<T> {
    fn repr_grid(&self) -> &Grid<T> {
        self.grid()
    }

    fn exchange_apply(&self, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>> {
        self.grid().check_same(f.grid())?;
        dense_apply(self.grid(), v, &self.gamma, f)
    }

    fn pairing_apply(&self, phi: Option<&Field<T>>, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>> {
        self.grid().check_same(f.grid())?;
        let mut k = self.alpha.clone();
        if let Some(p) = phi {
            self.grid().check_same(p.grid())?;
            let vp = to_orthonormal(p);
            k += &vp * vp.transpose();
        }
        dense_apply(self.grid(), v, &k, f)
    }
}

impl<T: Real> HfbRepr<T> for ModeState<T> {
    fn repr_grid(&self) -> &Grid<T> {
        self.grid()
    }

    fn exchange_apply(&self, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>> {
        self.grid().check_same(f.grid())?;
        let mf = MeanField::new(self.grid(), v)?;
        let mut out = vec![czero::<T>(); f.values().len()];
        mf.contract_into(&gamma_terms(&self.weights, &self.modes_a, &self.modes_b), true, f.values(), &mut out);
        Field::new(self.grid().clone(), out)
    }

    fn pairing_apply(&self, phi: Option<&Field<T>>, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>> {
        self.grid().check_same(f.grid())?;
        let mf = MeanField::new(self.grid(), v)?;
        let mut terms = alpha_terms(&self.weights, &self.modes_a, &self.modes_b);
        if let Some(p) = phi {
            self.grid().check_same(p.grid())?;
            terms.push((T::one(), p.values(), p.values()));
        }
        let mut out = vec![czero::<T>(); f.values().len()];
        mf.contract_into(&terms, false, f.values(), &mut out);
        Field::new(self.grid().clone(), out)
    }
}

/// `N^{-1}∫ v(x−y) γ(x,y) f(y) dy`.
pub fn mean_field_exchange_apply<T: Real, R: HfbRepr<T>>(rep: &R, v: &InteractionSpec<T>, f: &Field<T>) -> Result<Field<T>> {
    rep.exchange_apply(v, f)
}

/// `N^{-1}∫ v(x−y) (α(x,y) + φ(x)φ(y)) f(y) dy`; the HFB equations apply it
/// to conjugated fields.
pub fn pairing_apply<T: Real, R: HfbRepr<T>>(
    rep: &R,
    phi: Option<&Field<T>>,
    v: &InteractionSpec<T>,
    f: &Field<T>,
) -> Result<Field<T>> {
    rep.pairing_apply(phi, v, f)
}
