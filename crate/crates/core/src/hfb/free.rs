//! Free evolution `e^{itΔ}` of fields and pair matrices.

use crate::error::Result;
use crate::fft::FourierOps;
use crate::grid::Field;
use crate::scalar::Real;
use crate::thermal::ThermalPdm;

use super::{CMat, DensePdm};

/// `e^{itΔ} f`.
pub fn free_propagate_field<T: Real>(f: &Field<T>, t: T) -> Field<T> {
    let ops = FourierOps::new(f.grid());
    let mut out = f.clone();
    ops.free_propagate(out.values_mut(), t);
    out
}

/// `e^{itΔ} γ e^{-itΔ}` for a mode-decomposed 1-pdm.
pub fn free_conjugate<T: Real>(pdm: &ThermalPdm<T>, t: T) -> ThermalPdm<T> {
    let mut out = pdm.clone();
    if let Some(grid) = pdm.grid() {
        let ops = FourierOps::new(grid);
        for m in &mut out.modes {
            ops.free_propagate(m.values_mut(), t);
        }
    }
    out
}

fn propagate_columns<T: Real>(ops: &FourierOps<T>, m: &mut CMat<T>, t: T) {
    for mut col in m.column_iter_mut() {
        let mut buf: Vec<_> = col.iter().copied().collect();
        ops.free_propagate(&mut buf, t);
        for (c, b) in col.iter_mut().zip(buf) {
            *c = b;
        }
    }
}

/// `γ ↦ UγU*`, `α ↦ UαUᵀ` with `U = e^{itΔ}`.
pub fn free_conjugate_dense<T: Real>(pdm: &DensePdm<T>, t: T) -> Result<DensePdm<T>> {
    let ops = FourierOps::new(pdm.grid());
    let mut g = pdm.gamma.clone();
    propagate_columns(&ops, &mut g, t);
    let mut g = g.adjoint();
    propagate_columns(&ops, &mut g, t);
    let mut a = pdm.alpha.clone();
    propagate_columns(&ops, &mut a, t);
    let mut a = a.transpose();
    propagate_columns(&ops, &mut a, t);
    DensePdm::new(pdm.grid(), g.adjoint(), a.transpose())
}
