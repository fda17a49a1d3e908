//! Hartree functional and minimizer, time-dependent Hartree equation and the
//! one-body Hartree flow of a density matrix.

use crate::error::{invalid, Error, Result};
use crate::fft::{Convolver, FourierOps};
use crate::grid::{Field, Grid, Hamiltonian, TrapSpec};
use crate::hfb::{free_conjugate_dense, CMat, DensePdm};
use crate::interaction::{InteractionSpec, Shape};
use crate::scalar::{creal, expi, from_usize, lit, to_f64, Cplx, Real};
use crate::trajectory::{step_count, Trajectory};

/// Norm tolerance of the Hartree functional's input.
pub const NORM_TOL: f64 = 1e-8;
/// Largest norm drift per unit time of the Hartree propagator.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;
/// Largest trace drift of the one-body flow.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-7;
/// Iterations without a new smallest residual before the minimizer gives up.
pub const STALL_ITERATIONS: usize = 500;

fn density<T: Real>(f: &[Cplx<T>]) -> Vec<T> {
    f.iter().map(|z| z.norm_sqr()).collect()
}

fn quartic<T: Real>(conv: &Convolver<T>, phi: &Field<T>) -> T {
    let rho = density(phi.values());
    let u = conv.convolve_real(&rho);
    rho.iter().zip(&u).fold(T::zero(), |a, (r, u)| a + *r * *u) * phi.grid().measure()
}

/// `⟨φ,(−Δ+w)φ⟩ + (g/2)∫∫|φ(x)|²v(x−y)|φ(y)|²` for unit-norm `φ`.
pub fn hartree_energy<T: Real>(phi: &Field<T>, trap: &TrapSpec<T>, v: &InteractionSpec<T>, g: T) -> Result<T> {
    let norm = to_f64(phi.norm_sq());
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: norm.sqrt() });
    }
    let h = Hamiltonian::new(phi.grid(), *trap);
    let kin = crate::grid::inner(phi.values(), &h.apply(phi.values())).re * phi.grid().measure();
    Ok(kin + g * lit(0.5) * quartic(&v.convolver(phi.grid())?, phi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HartreeResult<T: Real> {
    pub minimizer: Field<T>,
    pub energy: T,
    pub mu_h: T,
    pub g_coupling: T,
    /// `‖(−Δ+w+g v∗|φ|²)φ − μφ‖` at exit.
    pub residual: T,
    pub iterations: usize,
    /// Initial descent step `0.5/e_max`.
    pub dt_imag: T,
    /// `‖φ‖_{H³} / (1 + ‖v‖_∞ + μ^H)^{3/2}`. Reported only; the constant in
    /// the corresponding bound is not known.
    pub h3_ratio: T,
}

#[derive(Clone, Debug)]
pub struct MinimizeOptions<T: Real> {
    pub grad_tol: T,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Starting profile; a normalized Gaussian when absent.
    pub initial: Option<Field<T>>,
}

impl<T: Real> MinimizeOptions<T> {
    pub fn new(grad_tol: T) -> Self {
        MinimizeOptions { grad_tol, max_iter: 200_000, max_halvings: 40, initial: None }
    }
}

/// Minimizer of the Hartree functional on `grid`.
pub fn minimize_hartree<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    v: &InteractionSpec<T>,
    g: T,
    grad_tol: T,
) -> Result<HartreeResult<T>> {
    minimize_hartree_with(grid, trap, v, g, &MinimizeOptions::new(grad_tol))
}

struct Functional<T: Real> {
    h: Hamiltonian<T>,
    conv: Convolver<T>,
    g: T,
}

impl<T: Real> Functional<T> {
    /// Energy, `Hφ` with the self-consistent potential, and the quartic term.
    fn eval(&self, phi: &[Cplx<T>]) -> (T, Vec<Cplx<T>>, T) {
        let dx = self.h.grid().measure();
        let rho = density(phi);
        let u = self.conv.convolve_real(&rho);
        let mut hphi = self.h.apply(phi);
        let lin = crate::grid::inner(phi, &hphi).re * dx;
        let q = rho.iter().zip(&u).fold(T::zero(), |a, (r, u)| a + *r * *u) * dx;
        for ((o, z), u) in hphi.iter_mut().zip(phi).zip(&u) {
            *o += *z * (self.g * *u);
        }
        (lin + self.g * lit(0.5) * q, hphi, q)
    }

    fn normalize(&self, f: &mut [Cplx<T>]) {
        let n = f.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) * self.h.grid().measure();
        let s = T::one() / n.sqrt();
        f.iter_mut().for_each(|z| *z = *z * s);
    }
}

fn norm<T: Real>(f: &[Cplx<T>], dx: T) -> T {
    (f.iter().fold(T::zero(), |a, z| a + z.norm_sqr()) * dx).sqrt()
}

/// `‖Hφ − ⟨φ,Hφ⟩φ‖` for normalized `φ`.
fn residual<T: Real>(phi: &[Cplx<T>], hphi: &[Cplx<T>], dx: T) -> T {
    let mu = crate::grid::inner(phi, hphi).re * dx;
    let r: Vec<Cplx<T>> = hphi.iter().zip(phi).map(|(a, b)| *a - *b * mu).collect();
    norm(&r, dx)
}

pub fn minimize_hartree_with<T: Real>(
    grid: &Grid<T>,
    trap: &TrapSpec<T>,
    v: &InteractionSpec<T>,
    g: T,
    opts: &MinimizeOptions<T>,
) -> Result<HartreeResult<T>> {
    if !(g >= T::zero() && g <= T::one()) {
        return Err(invalid("g", "must lie in [0, 1]"));
    }
    if !(opts.grad_tol > T::zero()) {
        return Err(invalid("grad_tol", "must be positive"));
    }
    match &v.shape {
        Shape::Gaussian { v0, .. } if *v0 < T::zero() => {
            return Err(invalid("v0", "a negative Gaussian is not admitted for minimization"));
        }
        _ => {}
    }
    let h = Hamiltonian::new(grid, *trap);
    let e_max = h.spectral_upper_bound();
    let dt_imag = lit::<T>(0.5) / e_max;
    let f = Functional { h, conv: v.convolver(grid)?, g };
    let ops = f.h.ops().clone();

    let mut phi: Vec<Cplx<T>> = match &opts.initial {
        Some(p) => {
            grid.check_same(p.grid())?;
            p.values().to_vec()
        }
        None => Field::from_real_fn(grid, |x| {
            let r2 = x.iter().take(grid.dim()).fold(T::zero(), |a, &c| a + c * c);
            (-r2 * lit(0.5)).exp()
        })
        .into_values(),
    };
    f.normalize(&mut phi);
    let dx = grid.measure();
    let (mut energy, mut hphi, _) = f.eval(&phi);
    // step in units of the preconditioned operator, whose spectrum is
    // bounded by max((k²+w+g·sup v∗ρ)/(1+k²)) ≤ 1 + e_max
    let mut tau = dt_imag * (T::one() + e_max);
    // energies within this slack count as non-increasing (round-off floor)
    let slack = lit::<T>(16.0) * T::default_epsilon();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut previous = energy;
    for iter in 0..opts.max_iter {
        let mu = crate::grid::inner(&phi, &hphi).re * dx;
        let r: Vec<Cplx<T>> = hphi.iter().zip(&phi).map(|(a, b)| *a - *b * mu).collect();
        let res = norm(&r, dx);
        if res <= opts.grad_tol {
            let fh = ops.fourier_transform(&phi);
            let h3 = fh.iter().zip(ops.k2()).fold(T::zero(), |a, (z, &k2)| a + (T::one() + k2).powi(3) * z.norm_sqr());
            let h3 = (h3 * grid.momentum_measure()).sqrt();
            let scale = (T::one() + v.sup_norm(grid)? + mu).powf(lit(1.5));
            return Ok(HartreeResult {
                minimizer: Field::new(grid.clone(), phi)?,
                energy,
                mu_h: mu,
                g_coupling: g,
                residual: res,
                iterations: iter,
                dt_imag,
                h3_ratio: h3 / scale,
            });
        }
        if to_f64(res) < best {
            best = to_f64(res);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_ITERATIONS {
                return Err(Error::Oscillation { previous: to_f64(previous), current: to_f64(energy) });
            }
        }
        // descent along the H¹ gradient (1 − Δ)^{-1} r
        let mut d = r;
        ops.apply_multiplier(&mut d, |k2| creal(T::one() / (T::one() + k2)));
        let mut halvings = 0;
        loop {
            let mut trial: Vec<Cplx<T>> = phi.iter().zip(&d).map(|(p, d)| *p - *d * tau).collect();
            f.normalize(&mut trial);
            let (e, hp, _) = f.eval(&trial);
            let floor = slack * energy.abs().max(T::one());
            // below the round-off floor of E the residual decides
            let accept = e < energy - floor || (e <= energy + floor && residual(&trial, &hp, dx) < res);
            if accept {
                previous = energy;
                phi = trial;
                energy = e;
                hphi = hp;
                tau *= lit(1.25);
                break;
            }
            halvings += 1;
            tau *= lit(0.5);
            if halvings > opts.max_halvings {
                return Err(Error::EnergyIncrease { halvings, previous: to_f64(energy), current: to_f64(e) });
            }
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, best_residual: best })
}

#[derive(Clone, Debug)]
pub struct HartreeOptions<T: Real> {
    /// Keeps `w` in the flow (stationarity checks); the release dynamics run
    /// without it.
    pub trap: Option<TrapSpec<T>>,
    pub save_every: usize,
}

impl<T: Real> Default for HartreeOptions<T> {
    fn default() -> Self {
        HartreeOptions { trap: None, save_every: 1 }
    }
}

/// `dt·max|p|² ≤ π`, so the kinetic phase per step is resolved.
pub fn check_phase_budget<T: Real>(grid: &Grid<T>, dt: T) -> Result<()> {
    let k2 = FourierOps::new(grid).k2_max();
    if dt * k2 > T::pi() {
        return Err(invalid(
            "dt",
            format!("dt·max|p|² = {:.3} exceeds π; use dt ≤ {:.3e}", to_f64(dt * k2), to_f64(T::pi() / k2)),
        ));
    }
    Ok(())
}

/// Trap-free Strang-split Hartree flow `i∂φ = (−Δ + N^{-1}v∗|φ|²)φ`.
pub fn propagate_hartree<T: Real>(
    phi0: &Field<T>,
    v: &InteractionSpec<T>,
    dt: T,
    t_end: T,
) -> Result<Trajectory<T, Field<T>>> {
    propagate_hartree_with(phi0, v, dt, t_end, &HartreeOptions::default())
}

pub fn propagate_hartree_with<T: Real>(
    phi0: &Field<T>,
    v: &InteractionSpec<T>,
    dt: T,
    t_end: T,
    opts: &HartreeOptions<T>,
) -> Result<Trajectory<T, Field<T>>> {
    let grid = phi0.grid();
    let (steps, h) = step_count(dt, t_end)?;
    check_phase_budget(grid, h)?;
    let ops = FourierOps::new(grid);
    let conv = v.convolver(grid)?;
    let inv_n = T::one() / v.n_scale;
    let w = opts.trap.map(|t| t.sample(grid)).unwrap_or_else(|| vec![T::zero(); grid.len()]);
    let half = h * lit(0.5);
    let potential = |f: &mut [Cplx<T>], tau: T| {
        let u = conv.convolve_real(&density(f));
        for ((z, u), w) in f.iter_mut().zip(&u).zip(&w) {
            *z *= expi(-(*w + *u * inv_n) * tau);
        }
    };
    let save_every = opts.save_every.max(1);
    let n0 = phi0.norm_sq();
    let mut traj = Trajectory::new();
    traj.push(T::zero(), phi0.clone());
    let mut cur = phi0.values().to_vec();
    for k in 1..=steps {
        potential(&mut cur, half);
        ops.free_propagate(&mut cur, h);
        potential(&mut cur, half);
        if k % save_every == 0 || k == steps {
            let t = h * from_usize(k);
            let f = Field::new(grid.clone(), cur.clone())?;
            let drift = to_f64((f.norm_sq() - n0).abs() / n0.max(T::default_epsilon()) / t.max(T::one()));
            if drift > NORM_DRIFT_LIMIT {
                return Err(Error::NormDrift { drift, limit: NORM_DRIFT_LIMIT });
            }
            traj.push(t, f);
        }
    }
    Ok(traj)
}

/// `⟨φ,−Δφ⟩ + (2N)^{-1}∫∫|φ|²v|φ|²`, conserved by the trap-free flow.
pub fn hartree_flow_energy<T: Real>(phi: &Field<T>, v: &InteractionSpec<T>) -> Result<T> {
    let h = Hamiltonian::new(phi.grid(), TrapSpec::off());
    let kin = crate::grid::inner(phi.values(), &h.apply(phi.values())).re * phi.grid().measure();
    Ok(kin + quartic(&v.convolver(phi.grid())?, phi) * lit(0.5) / v.n_scale)
}

/// `‖φ̂_t‖₁` per frame.
pub fn fourier_l1_trajectory<T: Real>(traj: &Trajectory<T, Field<T>>) -> Vec<T> {
    let Some(first) = traj.frames.first() else { return vec![] };
    let ops = FourierOps::new(first.grid());
    traj.frames.iter().map(|f| ops.fourier_l1(f.values())).collect()
}

/// One-body Hartree flow `i∂ω = [−Δ + N^{-1}v∗ρ_ω, ω]` by the same Strang
/// splitting as [`propagate_hartree`], applied as unitary conjugations:
/// potential half step, exact kinetic step, potential half step with the
/// updated density. Only `γ` of the input is used.
pub fn propagate_onebody_hartree<T: Real>(
    omega0: &DensePdm<T>,
    v: &InteractionSpec<T>,
    dt: T,
    t_end: T,
) -> Result<Trajectory<T, DensePdm<T>>> {
    let grid = omega0.grid();
    let (steps, h) = step_count(dt, t_end)?;
    check_phase_budget(grid, h)?;
    let conv = v.convolver(grid)?;
    let inv_n = T::one() / v.n_scale;
    let n = grid.len();
    let zero = CMat::zeros(n, n);
    let half = h * lit(0.5);
    let potential = |g: &mut CMat<T>| {
        let rho = DensePdm::new(grid, g.clone(), zero.clone()).expect("square").density();
        let u: Vec<Cplx<T>> = conv.convolve_real(&rho).into_iter().map(|u| expi(-u * inv_n * half)).collect();
        for j in 0..n {
            for i in 0..n {
                g[(i, j)] = g[(i, j)] * u[i] * u[j].conj();
            }
        }
    };
    let tr0 = omega0.trace();
    let mut traj = Trajectory::new();
    traj.push(T::zero(), DensePdm::new(grid, omega0.gamma.clone(), zero.clone())?);
    let mut g = omega0.gamma.clone();
    for k in 1..=steps {
        potential(&mut g);
        g = free_conjugate_dense(&DensePdm::new(grid, g, zero.clone())?, h)?.gamma;
        potential(&mut g);
        g = (&g + g.adjoint()) * creal(lit::<T>(0.5));
        let pdm = DensePdm::new(grid, g.clone(), zero.clone())?;
        let drift = to_f64((pdm.trace() - tr0).abs() / tr0.abs().max(T::one()));
        if drift > TRACE_DRIFT_LIMIT {
            return Err(Error::TraceDrift { drift, limit: TRACE_DRIFT_LIMIT });
        }
        traj.push(h * from_usize(k), pdm);
    }
    Ok(traj)
}
