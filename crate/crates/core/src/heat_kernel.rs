//! Momentum-space heat kernel `k_t(p,q)` of `e^{-th}` and its L¹ mass.
//!
//! [`heat_kernel_fourier_check`] works on Cartesian grids from computed
//! eigenpairs. [`radial_heat_kernel_check`] treats three-dimensional radial
//! traps through a partial-wave expansion in oscillator functions, whose
//! momentum transforms are known in closed form.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::fft::FourierOps;
use crate::grid::{Grid, TrapSpec};
use crate::scalar::{cabs, to_f64, Real};
use crate::spectral::{required_count, SpectralData};

/// Spectral tail allowed before the kernel is assembled.
pub const TAIL_LIMIT: f64 = 1e-8;
/// Largest Cartesian grid for which the dense `(p,q)` kernel is assembled.
pub const CARTESIAN_BUDGET: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatKernelReport {
    pub min_kernel_value: f64,
    pub l1_mass: f64,
    /// `(π/t)^{dim/2}`.
    pub bound: f64,
    /// Estimated size of the neglected contributions (spectral tail, partial
    /// waves, round-off) to any single kernel value.
    pub truncation_estimate: f64,
    /// Signed integral `∫∫ k_t dp dq`; equals `l1_mass` when `k_t ≥ 0`.
    pub signed_mass: f64,
    /// Estimated mass outside the momentum window (zero on a full lattice).
    pub outside_mass: f64,
}

/// `(π/t)^{dim/2}`.
pub fn kernel_bound(dim: usize, t: f64) -> f64 {
    (std::f64::consts::PI / t).powf(dim as f64 / 2.0)
}

/// Builds `k_t(p,q) = Σ_j e^{-t e_j} ψ̂_j(p) conj(ψ̂_j(q))` on the momentum
/// lattice and reports its minimum real part and L¹ mass.
pub fn heat_kernel_fourier_check<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    spec: &SpectralData<T>,
    t: f64,
) -> Result<HeatKernelReport> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    if spec.trap != *trap {
        return Err(invalid("spec", "eigenpairs belong to a different trap"));
    }
    grid.check_same(spec.grid())?;
    let len = grid.len();
    if len > CARTESIAN_BUDGET {
        return Err(Error::Budget { what: "Cartesian heat-kernel grid", size: len, budget: CARTESIAN_BUDGET });
    }
    let m = spec.count();
    let weight = |e: f64| (-t * e).exp();
    let tail = if m == len {
        0.0
    } else {
        let law = spec
            .growth_law()
            .ok_or_else(|| invalid("spec", "too few eigenpairs to estimate the spectral tail"))?;
        let tail = law.tail_sum(m, 1.0 / t, weight);
        if tail >= TAIL_LIMIT {
            let required = required_count(&law, 1.0 / t, TAIL_LIMIT, weight);
            return Err(Error::InsufficientSpectrum { tail, required, have: m });
        }
        tail
    };

    let ops = FourierOps::new(grid);
    let mut phat = DMatrix::<num_complex::Complex<f64>>::zeros(len, m);
    let mut sup_sq: f64 = 0.0;
    let mut rounding = 0.0;
    for (j, (psi, &e)) in spec.eigenfunctions.iter().zip(&spec.eigenvalues).enumerate() {
        let w = weight(to_f64(e));
        let fh = ops.fourier_transform(psi.values());
        let mut sup: f64 = 0.0;
        for (i, z) in fh.iter().enumerate() {
            let zz = num_complex::Complex::new(to_f64(z.re), to_f64(z.im));
            sup = sup.max(to_f64(cabs(*z)));
            phat[(i, j)] = zz * w.sqrt();
        }
        sup_sq = sup_sq.max(sup * sup);
        rounding += w * sup * sup;
    }
    let k = &phat * phat.adjoint();
    let dp = to_f64(grid.momentum_measure());
    let mut min_kernel_value = f64::INFINITY;
    let mut l1 = 0.0;
    let mut signed = 0.0;
    for z in k.iter() {
        min_kernel_value = min_kernel_value.min(z.re);
        l1 += z.norm();
        signed += z.re;
    }
    // Continuum eigenfunctions obey ‖ψ̂‖∞ ≤ (2π)^{-d/2}‖ψ‖₁ ≤ (L/π)^{d/2}.
    let lbox = to_f64(grid.box_half_length());
    let psi_hat_sup = (lbox / std::f64::consts::PI).powf(grid.dim() as f64 / 2.0);
    let eps = f64::EPSILON * (m as f64).sqrt() * 16.0;
    Ok(HeatKernelReport {
        min_kernel_value,
        l1_mass: l1 * dp * dp,
        bound: kernel_bound(grid.dim(), t),
        truncation_estimate: tail * psi_hat_sup * psi_hat_sup + eps * rounding.max(sup_sq),
        signed_mass: signed * dp * dp,
        outside_mass: 0.0,
    })
}

/// Discretization of the radial heat-kernel computation.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialOptions {
    /// Energies above `-ln(weight_floor)/t_min` only size the basis; every
    /// basis state is still kept in the sums.
    pub weight_floor: f64,
    /// Multiplies the number of oscillator shells per partial wave.
    pub basis_scale: f64,
    /// Size of the comparison basis relative to the main one; the kernel
    /// difference between the two is the reported discretization error.
    pub coarse_ratio: f64,
    /// Gauss–Legendre nodes for each of `|p|` and `|q|`.
    pub momentum_nodes: usize,
    /// Gauss–Legendre nodes per panel of the momentum-transfer integral.
    pub transfer_nodes: usize,
    /// Hard cap on the angular momentum.
    pub max_l: usize,
}

impl Default for RadialOptions {
    fn default() -> Self {
        RadialOptions {
            weight_floor: 1e-16,
            basis_scale: 1.0,
            coarse_ratio: 0.5,
            momentum_nodes: 160,
            transfer_nodes: 8,
            max_l: 2000,
        }
    }
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        x[i] = c - h * z;
        x[n - 1 - i] = c + h * z;
        w[i] = h * wi;
        w[n - 1 - i] = h * wi;
    }
    (x, w)
}

/// Legendre polynomials `P_0(c) … P_lmax(c)`.
fn legendre_all(lmax: usize, c: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if lmax >= 1 {
        out[1] = c;
    }
    for l in 1..lmax {
        out[l + 1] = ((2 * l + 1) as f64 * c * out[l] - l as f64 * out[l - 1]) / (l + 1) as f64;
    }
}

/// Nodes of the `q`-point Gauss rule for the weight `y^α e^{-y}` on `(0,∞)`,
/// by bisection on the Sturm sequence of the Jacobi matrix.
fn laguerre_nodes(alpha: f64, q: usize) -> Vec<f64> {
    let diag = |n: usize| 2.0 * n as f64 + alpha + 1.0;
    let off2 = |n: usize| (n as f64 + 1.0) * (n as f64 + alpha + 1.0);
    let count_below = |x: f64| {
        let mut c = 0;
        let mut d = diag(0) - x;
        if d < 0.0 {
            c += 1;
        }
        for n in 1..q {
            let prev = if d == 0.0 { 1e-300 } else { d };
            d = diag(n) - x - off2(n - 1) / prev;
            if d < 0.0 {
                c += 1;
            }
        }
        c
    };
    let upper = diag(q - 1) + 2.0 * off2(q - 1).sqrt() + 1.0;
    let mut nodes = Vec::with_capacity(q);
    let mut lo_start = 0.0;
    for k in 0..q {
        let (mut lo, mut hi) = (lo_start, upper);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        nodes.push(x);
        lo_start = x;
    }
    nodes
}

/// Orthonormal Laguerre polynomials `ℓ_0(y) … ℓ_{n-1}(y)` for the weight
/// `y^α e^{-y}`, as `out[m]·e^{log_scale}`.
fn laguerre_scaled(alpha: f64, y: f64, out: &mut [f64]) -> f64 {
    let mut log_scale = -0.5 * statrs::function::gamma::ln_gamma(alpha + 1.0);
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = (alpha + 1.0 - y) / (alpha + 1.0).sqrt();
    }
    for m in 1..out.len().saturating_sub(1) {
        let mf = m as f64;
        out[m + 1] = ((2.0 * mf + 1.0 + alpha - y) * out[m] - (mf * (mf + alpha)).sqrt() * out[m - 1])
            / ((mf + 1.0) * (mf + alpha + 1.0)).sqrt();
        if out[m + 1].abs() > 1e150 {
            out[..=m + 1].iter_mut().for_each(|v| *v *= 1e-150);
            log_scale += 150.0 * std::f64::consts::LN_10;
        }
    }
    log_scale
}

/// Energies and oscillator-basis eigenvectors of one partial wave.
struct Wave {
    energies: Vec<f64>,
    /// Column k holds the expansion of state k.
    vectors: DMatrix<f64>,
}

/// Radial eigenpairs of `-d²/dr² + l(l+1)/r² + prefactor·r^s` in the basis
/// `u_n(r) = b^{-1/2} g_n(r/b)`, `g_n(x) = √2 x^{l+1} e^{-x²/2} ℓ_n(x²)`,
/// `α = l + 1/2`.
struct OscillatorBasis {
    b: f64,
    waves: Vec<Wave>,
}

fn shells_for(shells: f64, l: usize) -> usize {
    (((shells - 2.0 * l as f64 - 3.0) / 4.0).ceil().max(0.0) as usize) + 8
}

fn solve_wave(s: f64, prefactor: f64, b: f64, l: usize, n: usize) -> Wave {
    let alpha = l as f64 + 0.5;
    let q = n + n / 2 + 8;
    let nodes = laguerre_nodes(alpha, q);
    // Φ_kn = √w_k ℓ_n(y_k) through the Christoffel weights.
    let mut phi = DMatrix::<f64>::zeros(q, n);
    let mut buf = vec![0.0; q];
    let mut pot = vec![0.0; q];
    for (k, &y) in nodes.iter().enumerate() {
        laguerre_scaled(alpha, y, &mut buf);
        let norm = buf.iter().map(|v| v * v).sum::<f64>().sqrt();
        for m in 0..n {
            phi[(k, m)] = buf[m] / norm;
        }
        pot[k] = prefactor * b.powf(s) * y.powf(0.5 * s) - y / (b * b);
    }
    let mut weighted = phi.clone();
    for k in 0..q {
        for m in 0..n {
            weighted[(k, m)] *= pot[k];
        }
    }
    let mut h = phi.transpose() * weighted;
    for m in 0..n {
        h[(m, m)] += (4 * m + 2 * l + 3) as f64 / (b * b);
    }
    let h = 0.5 * (&h + h.transpose());
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Wave {
        energies: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        vectors: eig.eigenvectors.select_columns(&order),
    }
}

impl OscillatorBasis {
    /// Partial waves up to and including the first whose ground energy
    /// exceeds `e_cut`, or exactly `0..=lmax` when given.
    fn build(s: f64, prefactor: f64, e_cut: f64, scale: f64, lmax: Option<usize>, max_l: usize) -> Result<Self> {
        // Radial and momentum reach of the states below the cut, with padding.
        let reach_r = (e_cut / prefactor).powf(1.0 / s) * 1.1 + 3.0;
        let reach_p = e_cut.sqrt() * 1.25 + 3.0;
        let b = (reach_r / reach_p).sqrt();
        let shells = reach_r * reach_p * scale;
        let mut waves = Vec::new();
        for l in 0..=max_l {
            let wave = solve_wave(s, prefactor, b, l, shells_for(shells, l));
            let above = wave.energies[0] > e_cut;
            waves.push(wave);
            match lmax {
                Some(m) if l == m => return Ok(OscillatorBasis { b, waves }),
                None if above => return Ok(OscillatorBasis { b, waves }),
                _ => {}
            }
        }
        Err(invalid("max_l", "partial-wave expansion did not terminate below the cap"))
    }

    fn lmax(&self) -> usize {
        self.waves.len() - 1
    }

    /// `Ũ_k(p) = Σ_n c_nk (-1)^n √b g_n(bp) / p`, so that
    /// `κ_l(p,q) = Σ_k e^{-tE_k} Ũ_k(p) Ũ_k(q)`; one (states × nodes) matrix
    /// per l.
    fn transforms(&self, nodes: &[f64]) -> Vec<DMatrix<f64>> {
        let b = self.b;
        self.waves
            .iter()
            .enumerate()
            .map(|(l, wave)| {
                let n = wave.vectors.nrows();
                let alpha = l as f64 + 0.5;
                let mut buf = vec![0.0; n];
                let mut g = DMatrix::zeros(n, nodes.len());
                for (i, &p) in nodes.iter().enumerate() {
                    let x = b * p;
                    let log_scale = laguerre_scaled(alpha, x * x, &mut buf);
                    let log_pref = log_scale + 0.5 * (2.0 * b).ln() + (l as f64 + 1.0) * x.ln() - 0.5 * x * x - p.ln();
                    let pref = log_pref.exp();
                    for m in 0..n {
                        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                        g[(m, i)] = sign * buf[m] * pref;
                    }
                }
                wave.vectors.transpose() * g
            })
            .collect()
    }

    fn radial_kernels(&self, u_hat: &[DMatrix<f64>], t: f64) -> Vec<DMatrix<f64>> {
        self.waves
            .iter()
            .zip(u_hat)
            .map(|(wave, uh)| {
                let mut w = uh.clone();
                for (k, mut row) in w.row_iter_mut().enumerate() {
                    row *= (-0.5 * t * wave.energies[k]).exp();
                }
                w.transpose() * w
            })
            .collect()
    }

    /// `Σ_k e^{-tE_k} u_k'(0)²` over the s-wave states.
    fn origin_density(&self, t: f64) -> f64 {
        let wave = &self.waves[0];
        let n = wave.vectors.nrows();
        let mut buf = vec![0.0; n];
        let log_scale = laguerre_scaled(0.5, 0.0, &mut buf);
        let d: Vec<f64> = buf.iter().map(|v| v * log_scale.exp() * 2f64.sqrt() * self.b.powf(-1.5)).collect();
        (0..n)
            .map(|k| {
                let du: f64 = (0..n).map(|m| wave.vectors[(m, k)] * d[m]).sum();
                (-t * wave.energies[k]).exp() * du * du
            })
            .sum()
    }
}

/// Partial-wave representation of `e^{-th}` for a radial three-dimensional
/// trap, valid for all `t ≥ t_min`, together with a coarser copy used to
/// estimate the discretization error.
pub struct RadialHeatKernel {
    fine: OscillatorBasis,
    coarse: OscillatorBasis,
    t_min: f64,
    e_cut: f64,
}

impl RadialHeatKernel {
    pub fn new(s: f64, prefactor: f64, t_min: f64, opts: &RadialOptions) -> Result<Self> {
        if !(s > 0.0 && s <= 2.0) {
            return Err(invalid("exponent_s", "must lie in (0, 2]"));
        }
        if !(prefactor > 0.0) {
            return Err(invalid("prefactor", "radial heat kernel needs a confining trap"));
        }
        if !(t_min > 0.0) {
            return Err(invalid("t", "must be positive"));
        }
        if !(opts.coarse_ratio > 0.0 && opts.coarse_ratio < 1.0) {
            return Err(invalid("coarse_ratio", "must lie in (0, 1)"));
        }
        let e_cut = -opts.weight_floor.ln() / t_min;
        let fine = OscillatorBasis::build(s, prefactor, e_cut, opts.basis_scale, None, opts.max_l)?;
        let coarse = OscillatorBasis::build(
            s,
            prefactor,
            e_cut,
            opts.basis_scale * opts.coarse_ratio,
            Some(fine.lmax()),
            opts.max_l,
        )?;
        Ok(RadialHeatKernel { fine, coarse, t_min, e_cut })
    }

    pub fn lmax(&self) -> usize {
        self.fine.lmax()
    }

    pub fn energy_cut(&self) -> f64 {
        self.e_cut
    }

    /// Radial energies of partial wave `l`, ascending.
    pub fn energies(&self, l: usize) -> &[f64] {
        self.fine.waves.get(l).map(|w| w.energies.as_slice()).unwrap_or(&[])
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t < self.t_min * (1.0 - 1e-12) {
            return Err(invalid("t", "below the t_min this kernel was built for"));
        }
        Ok(())
    }

    /// `k_t(p, q)` for `|p|`, `|q|` and `cos∠(p, q)`.
    pub fn value(&self, t: f64, p: f64, q: f64, c: f64) -> Result<f64> {
        self.check_time(t)?;
        if !(p > 0.0 && q > 0.0) {
            return Err(invalid("p", "momenta must be positive"));
        }
        let kap = self.fine.radial_kernels(&self.fine.transforms(&[p, q]), t);
        let lmax = self.lmax();
        let mut pl = vec![0.0; lmax + 1];
        legendre_all(lmax, c, &mut pl);
        Ok((0..=lmax).map(|l| (2 * l + 1) as f64 * pl[l] * kap[l][(0, 1)]).sum::<f64>() / (4.0 * std::f64::consts::PI))
    }

    /// `(2π)³ K_t(0,0)`, the position-space kernel at the origin; equals the
    /// L¹ mass when `k_t ≥ 0`.
    pub fn origin_mass(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok((2.0 * std::f64::consts::PI).powi(3) * self.fine.origin_density(t) / (4.0 * std::f64::consts::PI))
    }

    /// Minimum, L¹ mass and signed mass of `k_t` over `|p|, |q| ≤ √E_cut`.
    /// The truncation estimate bounds the change of any kernel value between
    /// the main and the coarse basis, which overstates the main basis error
    /// as long as it converges faster than linearly in the basis size.
    pub fn check(&self, times: &[f64], opts: &RadialOptions) -> Result<Vec<HeatKernelReport>> {
        let lmax = self.lmax();
        let four_pi = 4.0 * std::f64::consts::PI;
        let p_max = self.e_cut.sqrt();
        let (pn, pw_w) = gauss_legendre(opts.momentum_nodes, 0.0, p_max);
        let np = pn.len();
        let u_fine = self.fine.transforms(&pn);
        let u_coarse = self.coarse.transforms(&pn);
        let panels = transfer_panels(p_max);
        let mut reports = Vec::with_capacity(times.len());
        for &t in times {
            self.check_time(t)?;
            let kappas = self.fine.radial_kernels(&u_fine, t);
            let kappas_coarse = self.coarse.radial_kernels(&u_coarse, t);
            // |P_l| ≤ 1 turns per-wave differences into a pointwise bound.
            let mut discretization = 0.0;
            let mut magnitude = 0.0;
            for l in 0..=lmax {
                let diff = (&kappas[l] - &kappas_coarse[l]).amax();
                discretization += (2 * l + 1) as f64 * diff / four_pi;
                magnitude += (2 * l + 1) as f64 * kappas[l].amax() / four_pi;
            }
            // The last wave sits above the cut; the ones after it are smaller
            // still, so a few times its size covers them.
            let l_tail = 4.0 * (2 * lmax + 1) as f64 * kappas[lmax].amax() / four_pi;
            let mut pl = vec![0.0; lmax + 1];
            let mut l1 = 0.0;
            let mut signed = 0.0;
            let mut min_val = f64::INFINITY;
            for a in 0..np {
                for b in 0..=a {
                    let (p, q) = (pn[a], pn[b]);
                    let lo = (p - q).abs();
                    let hi = p + q;
                    let mut acc = 0.0;
                    let mut acc_signed = 0.0;
                    for &(x0, x1) in panels.iter() {
                        let (x0, x1) = (x0.max(lo), x1.min(hi));
                        if x1 <= x0 {
                            continue;
                        }
                        let (kn, kw) = gauss_legendre(opts.transfer_nodes, x0, x1);
                        for (&k, &w) in kn.iter().zip(&kw) {
                            let c = ((p * p + q * q - k * k) / (2.0 * p * q)).clamp(-1.0, 1.0);
                            legendre_all(lmax, c, &mut pl);
                            let mut val = 0.0;
                            for l in 0..=lmax {
                                val += (2 * l + 1) as f64 * pl[l] * kappas[l][(a, b)];
                            }
                            val /= four_pi;
                            min_val = min_val.min(val);
                            // dc = k dk/(pq)
                            let jac = w * k / (p * q);
                            acc += val.abs() * jac;
                            acc_signed += val * jac;
                        }
                    }
                    let sym = if a == b { 1.0 } else { 2.0 };
                    let weight = sym * pw_w[a] * pw_w[b] * p * p * q * q * 8.0 * std::f64::consts::PI.powi(2);
                    l1 += weight * acc;
                    signed += weight * acc_signed;
                }
            }
            reports.push(HeatKernelReport {
                min_kernel_value: min_val,
                l1_mass: l1,
                bound: kernel_bound(3, t),
                truncation_estimate: discretization + l_tail + 64.0 * f64::EPSILON * magnitude,
                signed_mass: signed,
                outside_mass: (self.origin_mass(t)? - signed).max(0.0),
            });
        }
        Ok(reports)
    }
}

/// Three-dimensional heat-kernel check of `-Δ + prefactor·|x|^s` for each
/// `t`, through partial waves: `k(p,q) = Σ_l (2l+1)/(4π) P_l(p̂·q̂) κ_l(|p|,|q|)`
/// with `κ_l = (2/π) Σ_n e^{-tE_nl} U_nl(|p|) U_nl(|q|)` and
/// `U_nl(p) = ∫ j_l(pr) u_nl(r) r dr`.
pub fn radial_heat_kernel_check(s: f64, prefactor: f64, times: &[f64], opts: &RadialOptions) -> Result<Vec<HeatKernelReport>> {
    let t_min = times.iter().copied().fold(f64::INFINITY, f64::min);
    RadialHeatKernel::new(s, prefactor, t_min, opts)?.check(times, opts)
}

/// Panels for the momentum-transfer integral, narrow near zero transfer
/// where the kernel peaks.
fn transfer_panels(p_max: f64) -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    let mut a = 0.0;
    let mut w = 0.05;
    while a < 2.0 * p_max {
        v.push((a, a + w));
        a += w;
        w *= 1.35;
    }
    v
}
