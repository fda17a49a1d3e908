//! Lowest eigenpairs of `h = -Δ + w` by block Lanczos with full
//! reorthogonalization, and eigenvalue growth-law fits for tail estimates.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid, Hamiltonian, TrapSpec};
use crate::scalar::{cplx, lit, to_f64, Real};

/// Boundary mass above which a retained eigenfunction is flagged.
pub const BOUNDARY_MASS_WARNING: f64 = 1e-6;

/// Solver knobs for [`lowest_eigenpairs_with`].
#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Maximum number of eigenpairs a caller may request.
    pub max_count: usize,
    /// Krylov basis size before a restart.
    pub max_basis: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_count: 4096, max_basis: 240, max_restarts: 400, seed: 0x5eed }
    }
}

/// Ascending eigenvalues and orthonormal eigenfunctions of `h` on a grid.
#[derive(Clone, Debug)]
pub struct SpectralData<T: Real> {
    pub eigenvalues: Vec<T>,
    pub eigenfunctions: Vec<Field<T>>,
    /// `‖hψ_j − e_jψ_j‖` per pair.
    pub residuals: Vec<T>,
    /// Fraction of ℓ² mass of each eigenfunction in the outermost 10% shell.
    pub boundary_mass: Vec<T>,
    /// Set when some boundary mass exceeds [`BOUNDARY_MASS_WARNING`].
    pub boundary_warning: bool,
    pub trap: TrapSpec<T>,
}

impl<T: Real> SpectralData<T> {
    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &Grid<T> {
        self.eigenfunctions[0].grid()
    }

    /// Keeps only the lowest `m` pairs.
    pub fn truncated(&self, m: usize) -> SpectralData<T> {
        let m = m.min(self.count());
        let boundary_mass = self.boundary_mass[..m].to_vec();
        let boundary_warning = boundary_mass.iter().any(|&b| to_f64(b) > BOUNDARY_MASS_WARNING);
        SpectralData {
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenfunctions: self.eigenfunctions[..m].to_vec(),
            residuals: self.residuals[..m].to_vec(),
            boundary_mass,
            boundary_warning,
            trap: self.trap,
        }
    }

    /// Fitted growth law of the retained eigenvalues.
    pub fn growth_law(&self) -> Option<GrowthLaw> {
        let e: Vec<f64> = self.eigenvalues.iter().map(|&x| to_f64(x)).collect();
        GrowthLaw::fit(&e)
    }
}

/// `lowest_eigenpairs_with` using default options.
pub fn lowest_eigenpairs<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    count: usize,
    eig_tol: T,
) -> Result<SpectralData<T>> {
    lowest_eigenpairs_with(grid, trap, count, eig_tol, &LanczosOptions::default())
}

pub fn lowest_eigenpairs_with<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    count: usize,
    eig_tol: T,
    opts: &LanczosOptions,
) -> Result<SpectralData<T>> {
    let len = grid.len();
    if count == 0 {
        return Err(invalid("count", "must be positive"));
    }
    if count > opts.max_count || count > len {
        return Err(invalid(
            "count",
            format!("{count} exceeds cap {} or grid size {len}", opts.max_count),
        ));
    }
    if !(eig_tol > T::zero()) {
        return Err(invalid("eig_tol", "must be positive"));
    }
    let h = Hamiltonian::new(grid, *trap);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let block = (count + 2).max(4).min(len);
    let max_basis = opts.max_basis.max(4 * block).min(len);
    let keep = (max_basis / 3).max(block);
    let apply_block = |x: &DMatrix<T>| -> DMatrix<T> {
        let mut out = DMatrix::<T>::zeros(len, x.ncols());
        for c in 0..x.ncols() {
            let col: Vec<T> = x.column(c).iter().copied().collect();
            out.set_column(c, &nalgebra::DVector::from_vec(h.apply_real(&col)));
        }
        out
    };

    let mut q = DMatrix::<T>::zeros(len, max_basis);
    let mut hq = DMatrix::<T>::zeros(len, max_basis);
    let mut start = DMatrix::<T>::from_fn(len, block, |_, _| lit::<T>(rng.gen::<f64>() - 0.5));
    orthonormalize_block(&q, 0, &mut start, &mut rng);
    let hstart = apply_block(&start);
    q.columns_mut(0, block).copy_from(&start);
    hq.columns_mut(0, block).copy_from(&hstart);
    let mut used = block;
    let mut last = (0, block);
    let mut best_residual = f64::INFINITY;
    let mut iterations = block;

    for _restart in 0..opts.max_restarts {
        while used < max_basis {
            let nb = last.1.min(max_basis - used);
            let mut w = hq.columns(last.0, nb).clone_owned();
            orthonormalize_block(&q, used, &mut w, &mut rng);
            let hw = apply_block(&w);
            iterations += nb;
            q.columns_mut(used, nb).copy_from(&w);
            hq.columns_mut(used, nb).copy_from(&hw);
            last = (used, nb);
            used += nb;
        }

        let qu = q.columns(0, used);
        let hqu = hq.columns(0, used);
        let t = qu.transpose() * hqu;
        let t = (&t + t.transpose()) * lit::<T>(0.5);
        let eig = nalgebra::SymmetricEigen::new(t);
        let mut order: Vec<usize> = (0..used).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let k = keep.min(used);
        let mut s = DMatrix::<T>::zeros(used, k);
        let mut theta = Vec::with_capacity(k);
        for (c, &o) in order.iter().take(k).enumerate() {
            s.set_column(c, &eig.eigenvectors.column(o));
            theta.push(eig.eigenvalues[o]);
        }
        let y = &qu * &s;
        let hy = &hqu * &s;
        let res: Vec<T> = (0..count).map(|c| (hy.column(c) - y.column(c) * theta[c]).norm()).collect();
        let worst = res.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
        best_residual = best_residual.min(to_f64(worst));
        if worst <= eig_tol || used == len {
            return Ok(finish(grid, trap, &y, &theta, &res, count));
        }
        // Thick restart: keep the lowest Ritz pairs and continue the Krylov
        // recurrence from the images of the wanted block.
        q.columns_mut(0, k).copy_from(&y);
        hq.columns_mut(0, k).copy_from(&hy);
        used = k;
        last = (0, block.min(k));
    }
    Err(Error::NonConvergence { iterations, best_residual })
}

fn finish<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    y: &DMatrix<T>,
    theta: &[T],
    res: &[T],
    count: usize,
) -> SpectralData<T> {
    let scale = T::one() / grid.measure().sqrt();
    let mut eigenfunctions = Vec::with_capacity(count);
    let mut boundary_mass = Vec::with_capacity(count);
    for c in 0..count {
        let col = y.column(c);
        let mut imax = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[imax].abs() {
                imax = i;
            }
        }
        let sign = if col[imax] < T::zero() { -scale } else { scale };
        let values = col.iter().map(|&x| cplx(x * sign, T::zero())).collect();
        let f = Field::new(grid.clone(), values).expect("sizes match");
        boundary_mass.push(f.boundary_mass());
        eigenfunctions.push(f);
    }
    let boundary_warning = boundary_mass.iter().any(|&b| to_f64(b) > BOUNDARY_MASS_WARNING);
    SpectralData {
        eigenvalues: theta[..count].to_vec(),
        eigenfunctions,
        residuals: res[..count].to_vec(),
        boundary_mass,
        boundary_warning,
        trap: *trap,
    }
}

/// Orthonormalizes the columns of `w` against the first `used` columns of `q`
/// and among themselves; numerically dependent columns are replaced by random
/// directions.
fn orthonormalize_block<T: Real>(q: &DMatrix<T>, used: usize, w: &mut DMatrix<T>, rng: &mut ChaCha8Rng) {
    let qb = q.columns(0, used);
    let norms_before: Vec<T> = (0..w.ncols()).map(|c| w.column(c).norm()).collect();
    if used > 0 {
        for _ in 0..2 {
            let coeff = qb.transpose() * &*w;
            *w -= &qb * coeff;
        }
    }
    let len = w.nrows();
    for c in 0..w.ncols() {
        let mut before = norms_before[c];
        let mut attempts = 0;
        loop {
            for _ in 0..2 {
                for p in 0..c {
                    let d = w.column(p).dot(&w.column(c));
                    let pc = w.column(p).clone_owned();
                    w.column_mut(c).axpy(-d, &pc, T::one());
                }
            }
            let after = w.column(c).norm();
            if after > lit::<T>(1e-8) * before && after > T::zero() {
                let inv = T::one() / after;
                w.column_mut(c).scale_mut(inv);
                break;
            }
            attempts += 1;
            assert!(attempts < 50, "cannot extend orthonormal basis");
            for r in 0..len {
                w[(r, c)] = lit::<T>(rng.gen::<f64>() - 0.5);
            }
            before = w.column(c).norm();
            if used > 0 {
                for _ in 0..2 {
                    let coeff = qb.transpose() * w.column(c);
                    let upd = &qb * coeff;
                    let mut col = w.column_mut(c);
                    col -= upd;
                }
            }
        }
    }
}

/// Power-law fit `e_j ≈ offset + c·j^p` used to estimate spectral tails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthLaw {
    pub offset: f64,
    pub c: f64,
    pub p: f64,
}

impl GrowthLaw {
    /// Fits `e_j - e_0 ≈ c·j^p` on the upper half of `j ≥ 1`.
    pub fn fit(e: &[f64]) -> Option<GrowthLaw> {
        if e.len() < 4 {
            return None;
        }
        let e0 = e[0];
        let lo = (e.len() / 2).max(1);
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (j, &ej) in e.iter().enumerate().skip(lo) {
            let d = ej - e0;
            if d <= 0.0 {
                continue;
            }
            let x = (j as f64).ln();
            let y = d.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1.0;
        }
        if n < 2.0 {
            return None;
        }
        let denom = n * sxx - sx * sx;
        if denom.abs() < 1e-300 {
            return None;
        }
        let p = (n * sxy - sx * sy) / denom;
        let c = ((sy - p * sx) / n).exp();
        if !(p > 0.0) || !c.is_finite() {
            return None;
        }
        Some(GrowthLaw { offset: e0, c, p })
    }

    pub fn eigenvalue(&self, j: f64) -> f64 {
        self.offset + self.c * j.powf(self.p)
    }

    /// Estimates `Σ_{j ≥ from} f(e_j)` for a non-negative `f` decaying on the
    /// energy scale `scale`: explicit summation over the fitted levels, then
    /// `∫ f(e(x)) dx` once the summand varies slowly.
    pub fn tail_sum(&self, from: usize, scale: f64, f: impl Fn(f64) -> f64) -> f64 {
        const EXPLICIT: usize = 200_000;
        let mut s = 0.0;
        let mut j = from;
        let mut last = f64::INFINITY;
        while j < from + EXPLICIT {
            let term = f(self.eigenvalue(j as f64));
            s += term;
            j += 1;
            if term <= 1e-18 * s && term <= last {
                return s;
            }
            last = term;
        }
        s + self.tail_integral(j as f64 - 0.5, scale, f)
    }

    fn tail_integral(&self, x0: f64, scale: f64, f: impl Fn(f64) -> f64) -> f64 {
        let e_start = self.eigenvalue(x0);
        let dxde = |e: f64| {
            let d = ((e - self.offset) / self.c).max(1e-300);
            d.powf(1.0 / self.p - 1.0) / (self.p * self.c)
        };
        // e = e_start + scale·u/(1-u), midpoint rule in u.
        let n = 4000usize;
        let h = 1.0 / n as f64;
        let mut s = 0.0;
        for k in 0..n {
            let u = (k as f64 + 0.5) * h;
            let e = e_start + scale * u / (1.0 - u);
            let jac = scale / ((1.0 - u) * (1.0 - u));
            s += f(e) * dxde(e) * jac;
        }
        s * h
    }
}

/// Number of eigenpairs needed before `tail_sum(M, ..) < threshold`.
pub fn required_count(law: &GrowthLaw, scale: f64, threshold: f64, f: impl Fn(f64) -> f64 + Copy) -> usize {
    let mut m = 1usize;
    while law.tail_sum(m, scale, f) >= threshold {
        m *= 2;
        if m > 1 << 30 {
            return m;
        }
    }
    let (mut lo, mut hi) = (m / 2, m);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if law.tail_sum(mid, scale, f) >= threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lowest eigenvalue of the second-order finite-difference
    /// `-d²/dx² + |x|^s` with Dirichlet ends, by Sturm-sequence bisection.
    fn fd_ground_energy(s: f64, l: f64, n: usize) -> f64 {
        let h = 2.0 * l / n as f64;
        let diag: Vec<f64> = (1..n).map(|i| 2.0 / (h * h) + (-l + i as f64 * h).abs().powf(s)).collect();
        let off = -1.0 / (h * h);
        let below = |x: f64| {
            let mut count = 0;
            let mut q = 1.0;
            for (i, &d) in diag.iter().enumerate() {
                q = d - x - if i == 0 { 0.0 } else { off * off / q };
                if q == 0.0 {
                    q = 1e-300;
                }
                if q < 0.0 {
                    count += 1;
                }
            }
            count
        };
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if below(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn harmonic_1d_spectrum() {
        let g = Grid::new(1, 128, 10.0).unwrap();
        let sd = lowest_eigenpairs(&g, &TrapSpec::power(2.0).unwrap(), 5, 1e-8).unwrap();
        for (j, e) in sd.eigenvalues.iter().enumerate() {
            assert!((e - (2 * j + 1) as f64).abs() < 1e-6, "e_{j} = {e}");
        }
        for i in 0..5 {
            for j in 0..5 {
                let ip = sd.eigenfunctions[i].inner(&sd.eigenfunctions[j]);
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((ip.re - d).abs() < 1e-10 && ip.im.abs() < 1e-10);
            }
        }
        assert!(!sd.boundary_warning);
    }

    #[test]
    fn linear_trap_ground_state_matches_dense_fd() {
        let g = Grid::new(1, 1024, 16.0).unwrap();
        let sd = lowest_eigenpairs(&g, &TrapSpec::power(1.0).unwrap(), 3, 1e-8).unwrap();
        // Second-order FD with Richardson extrapolation over two fine grids.
        let e1 = fd_ground_energy(1.0, 16.0, 20000);
        let e2 = fd_ground_energy(1.0, 16.0, 40000);
        let e_ref = (4.0 * e2 - e1) / 3.0;
        // The kink of |x| at 0 limits the grid to O(h²) accuracy.
        assert!((sd.eigenvalues[0] - e_ref).abs() < 2e-4, "{} vs {}", sd.eigenvalues[0], e_ref);
        assert!(sd.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn small_box_raises_boundary_warning() {
        let g = Grid::new(1, 64, 3.0).unwrap();
        let sd = lowest_eigenpairs(&g, &TrapSpec::power(2.0).unwrap(), 4, 1e-8).unwrap();
        assert!(sd.boundary_warning);
    }

    #[test]
    fn growth_law_recovers_power() {
        let e: Vec<f64> = (0..40).map(|j| 1.0 + 2.0 * (j as f64).powf(1.5)).collect();
        let law = GrowthLaw::fit(&e).unwrap();
        assert!((law.p - 1.5).abs() < 1e-10 && (law.c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn tail_sum_matches_direct_sum() {
        let law = GrowthLaw { offset: 1.0, c: 2.0, p: 1.0 };
        let t = 0.7;
        let direct: f64 = (50..100000).map(|j| (-t * law.eigenvalue(j as f64)).exp()).sum();
        let est = law.tail_sum(50, 1.0 / t, |e| (-t * e).exp());
        assert!((est - direct).abs() < 1e-3 * direct);
    }

    #[test]
    fn rejects_bad_requests() {
        let g = Grid::new(1, 16, 3.0).unwrap();
        let trap = TrapSpec::power(2.0).unwrap();
        assert!(lowest_eigenpairs(&g, &trap, 0, 1e-8).is_err());
        assert!(lowest_eigenpairs(&g, &trap, 17, 1e-8).is_err());
    }
}
