//! Mode-wise HFB propagation by kinetic/potential splitting.
//!
//! One step is a fourth-order composition (triple jump) of Strang steps. Each
//! Strang step treats `-Δ` exactly in Fourier space and integrates the
//! remaining self-consistent mean-field/pairing flow with one RK4 step, the
//! fields being rebuilt from the current functions at every stage.

use crate::error::{invalid, Error, Result};
use crate::fft::FourierOps;
use crate::grid::{Field, Grid, TrapSpec};
use crate::interaction::InteractionSpec;
use crate::scalar::{cplx, czero, from_usize, lit, to_f64, Cplx, Real};
use crate::trajectory::{step_count, Trajectory};

use super::fields::{alpha_terms, gamma_terms, is_zero, MeanField, Term};
use super::{HfbEnergy, ModeState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeOptions {
    /// Steps between invariant probes; 0 disables them.
    pub probe_every: usize,
    /// Largest relative number drift and antisymmetry defect accepted by a
    /// probe.
    pub probe_tol: f64,
    /// Grid stride of the antisymmetry probe.
    pub probe_stride: usize,
}

impl Default for ModeOptions {
    fn default() -> Self {
        ModeOptions { probe_every: 25, probe_tol: 1e-6, probe_stride: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeStepReport {
    /// Largest relative particle-number drift seen by a probe.
    pub number_drift: f64,
    /// Largest `‖Σ b⊗a − a⊗b‖₂` seen by a probe.
    pub antisymmetry_defect: f64,
    pub probes: usize,
}

/// Raw function values of `(φ, a_j, b_j)`.
#[derive(Clone)]
struct Raw<T: Real> {
    phi: Vec<Cplx<T>>,
    a: Vec<Vec<Cplx<T>>>,
    b: Vec<Vec<Cplx<T>>>,
}

impl<T: Real> Raw<T> {
    fn of(s: &ModeState<T>) -> Self {
        Raw {
            phi: s.phi.values().to_vec(),
            a: s.modes_a.iter().map(|f| f.values().to_vec()).collect(),
            b: s.modes_b.iter().map(|f| f.values().to_vec()).collect(),
        }
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut Vec<Cplx<T>>)) {
        f(&mut self.phi);
        self.a.iter_mut().for_each(&mut f);
        self.b.iter_mut().for_each(&mut f);
    }

    /// `self + c·k`.
    fn axpy(&self, c: T, k: &Raw<T>) -> Raw<T> {
        let add = |x: &Vec<Cplx<T>>, y: &Vec<Cplx<T>>| x.iter().zip(y).map(|(u, v)| *u + *v * c).collect();
        Raw {
            phi: add(&self.phi, &k.phi),
            a: self.a.iter().zip(&k.a).map(|(x, y)| add(x, y)).collect(),
            b: self.b.iter().zip(&k.b).map(|(x, y)| add(x, y)).collect(),
        }
    }
}

/// Propagator for [`ModeState`] on one grid, interaction and trap.
#[derive(Clone, Debug)]
pub struct ModeHfb<T: Real> {
    grid: Grid<T>,
    interaction: InteractionSpec<T>,
    ops: FourierOps<T>,
    mf: MeanField<T>,
    trap: Vec<T>,
    opts: ModeOptions,
}

impl<T: Real> ModeHfb<T> {
    pub fn new(grid: &Grid<T>, interaction: &InteractionSpec<T>, trap: &TrapSpec<T>, opts: ModeOptions) -> Result<Self> {
        if !(opts.probe_tol > 0.0) {
            return Err(invalid("probe_tol", "must be positive"));
        }
        Ok(ModeHfb {
            grid: grid.clone(),
            interaction: interaction.clone(),
            ops: FourierOps::new(grid),
            mf: MeanField::new(grid, interaction)?,
            trap: trap.sample(grid),
            opts,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    fn check(&self, s: &ModeState<T>) -> Result<()> {
        self.grid.check_same(s.grid())?;
        if s.interaction != self.interaction {
            return Err(invalid("interaction", "state and propagator disagree"));
        }
        if s.modes_a.len() != s.weights.len() || s.modes_b.len() != s.weights.len() {
            return Err(invalid("modes", "one a and one b per weight required"));
        }
        Ok(())
    }

    fn density(weights: &[T], s: &Raw<T>) -> Vec<T> {
        let mut rho = vec![T::zero(); s.phi.len()];
        for ((w, a), b) in weights.iter().zip(&s.a).zip(&s.b) {
            for ((r, x), y) in rho.iter_mut().zip(a).zip(b) {
                *r += *w * x.norm_sqr() + (T::one() + *w) * y.norm_sqr();
            }
        }
        rho
    }

    /// `-i` times the mean-field and pairing part of the right-hand side,
    /// including the trap.
    fn potential_rhs(&self, weights: &[T], s: &Raw<T>) -> Raw<T> {
        let n = s.phi.len();
        let rho_g = Self::density(weights, s);
        let rho_p: Vec<T> = s.phi.iter().map(|z| z.norm_sqr()).collect();
        let u_g = self.mf.direct(&rho_g);
        let u_p = self.mf.direct(&rho_p);
        let g_terms = gamma_terms(weights, &s.a, &s.b);
        let mut gp_terms = g_terms.clone();
        gp_terms.push((T::one(), &s.phi[..], &s.phi[..]));
        let mut k_terms = alpha_terms(weights, &s.a, &s.b);
        k_terms.push((T::one(), &s.phi[..], &s.phi[..]));
        let mi = cplx(T::zero(), -T::one());

        // i∂φ = (w + U_γ)φ + X_γ φ + K φ̄
        let mut dphi: Vec<Cplx<T>> = (0..n).map(|i| s.phi[i] * (self.trap[i] + u_g[i])).collect();
        self.mf.contract_into(&g_terms, true, &s.phi, &mut dphi);
        let conj: Vec<Cplx<T>> = s.phi.iter().map(|z| z.conj()).collect();
        self.mf.contract_into(&k_terms, false, &conj, &mut dphi);

        let pot: Vec<T> = (0..n).map(|i| self.trap[i] + u_g[i] + u_p[i]).collect();
        let apply = |f: &[Cplx<T>], partner: &[Cplx<T>]| -> Vec<Cplx<T>> {
            let mut out: Vec<Cplx<T>> = f.iter().zip(&pot).map(|(z, p)| *z * *p).collect();
            if !is_zero(f) {
                self.mf.contract_into(&gp_terms, true, f, &mut out);
            }
            if !is_zero(partner) {
                let c: Vec<Cplx<T>> = partner.iter().map(|z| z.conj()).collect();
                self.mf.contract_into(&k_terms, false, &c, &mut out);
            }
            out
        };
        let da: Vec<_> = s.a.iter().zip(&s.b).map(|(a, b)| apply(a, b)).collect();
        let db: Vec<_> = s.a.iter().zip(&s.b).map(|(a, b)| apply(b, a)).collect();
        let mut out = Raw { phi: dphi, a: da, b: db };
        out.for_each_mut(|v| v.iter_mut().for_each(|z| *z *= mi));
        out
    }

    fn potential_flow(&self, weights: &[T], s: &Raw<T>, tau: T) -> Raw<T> {
        let half = tau * lit(0.5);
        let k1 = self.potential_rhs(weights, s);
        let k2 = self.potential_rhs(weights, &s.axpy(half, &k1));
        let k3 = self.potential_rhs(weights, &s.axpy(half, &k2));
        let k4 = self.potential_rhs(weights, &s.axpy(tau, &k3));
        let sixth = tau / lit(6.0);
        let third = tau / lit(3.0);
        s.axpy(sixth, &k1).axpy(third, &k2).axpy(third, &k3).axpy(sixth, &k4)
    }

    fn kinetic(&self, s: &mut Raw<T>, tau: T) {
        s.for_each_mut(|v| {
            if !is_zero(v) {
                self.ops.free_propagate(v, tau)
            }
        });
    }

    fn strang(&self, weights: &[T], s: &mut Raw<T>, tau: T) {
        self.kinetic(s, tau * lit(0.5));
        *s = self.potential_flow(weights, s, tau);
        self.kinetic(s, tau * lit(0.5));
    }

    fn raw_step(&self, weights: &[T], s: &mut Raw<T>, dt: T) {
        let cbrt2 = lit::<T>(2.0).powf(T::one() / lit(3.0));
        let w1 = T::one() / (lit::<T>(2.0) - cbrt2);
        let w0 = T::one() - lit::<T>(2.0) * w1;
        self.strang(weights, s, w1 * dt);
        self.strang(weights, s, w0 * dt);
        self.strang(weights, s, w1 * dt);
    }

    fn rebuild(&self, template: &ModeState<T>, raw: Raw<T>) -> ModeState<T> {
        let field = |v: Vec<Cplx<T>>| Field::new(self.grid.clone(), v).expect("length matches grid");
        ModeState {
            phi: field(raw.phi),
            weights: template.weights.clone(),
            modes_a: raw.a.into_iter().map(field).collect(),
            modes_b: raw.b.into_iter().map(field).collect(),
            interaction: template.interaction.clone(),
            discarded_trace: template.discarded_trace,
        }
    }

    /// One fourth-order splitting step.
    pub fn step(&self, state: &ModeState<T>, dt: T) -> Result<ModeState<T>> {
        self.check(state)?;
        if !dt.is_finite() {
            return Err(invalid("dt", "must be finite"));
        }
        let mut raw = Raw::of(state);
        self.raw_step(&state.weights, &mut raw, dt);
        Ok(self.rebuild(state, raw))
    }

    /// Trajectory on `[0, t_end]` with invariant probes every
    /// `probe_every` steps.
    pub fn propagate(
        &self,
        state: &ModeState<T>,
        dt: T,
        t_end: T,
        save_every: usize,
    ) -> Result<(Trajectory<T, ModeState<T>>, ModeStepReport)> {
        self.check(state)?;
        let (steps, h) = step_count(dt, t_end)?;
        let save_every = save_every.max(1);
        let n0 = to_f64(state.number());
        let mut report = ModeStepReport { number_drift: 0.0, antisymmetry_defect: 0.0, probes: 0 };
        let mut traj = Trajectory::new();
        traj.push(T::zero(), state.clone());
        let mut raw = Raw::of(state);
        for k in 1..=steps {
            self.raw_step(&state.weights, &mut raw, h);
            let probe = self.opts.probe_every > 0 && (k % self.opts.probe_every == 0 || k == steps);
            let save = k % save_every == 0 || k == steps;
            if !(probe || save) {
                continue;
            }
            let cur = self.rebuild(state, raw.clone());
            if probe {
                report.probes += 1;
                let drift = (to_f64(cur.number()) - n0).abs() / n0.abs().max(1.0);
                report.number_drift = report.number_drift.max(drift);
                if drift > self.opts.probe_tol {
                    return Err(Error::ProbeDisagreement { step: k, what: "particle number".into(), deviation: drift });
                }
                let anti = to_f64(cur.antisymmetry_defect(self.opts.probe_stride));
                report.antisymmetry_defect = report.antisymmetry_defect.max(anti);
                if anti > self.opts.probe_tol {
                    return Err(Error::ProbeDisagreement { step: k, what: "pair antisymmetry".into(), deviation: anti });
                }
            }
            if save {
                traj.push(h * from_usize(k), cur);
            }
        }
        Ok((traj, report))
    }

    /// HFB energy by mode contractions, without building `γ` or `α`.
    pub fn energy(&self, state: &ModeState<T>) -> Result<HfbEnergy<T>> {
        self.check(state)?;
        let s = Raw::of(state);
        let w = &state.weights;
        let dx = self.grid.measure();
        let n = s.phi.len();
        let ip = |f: &[Cplx<T>], g: &[Cplx<T>]| crate::grid::inner(f, g) * dx;

        let one = |f: &[Cplx<T>]| -> T {
            if is_zero(f) {
                return T::zero();
            }
            let mut h = f.to_vec();
            self.ops.neg_laplacian(&mut h);
            for i in 0..n {
                h[i] += f[i] * self.trap[i];
            }
            ip(f, &h).re
        };
        let mut one_body = one(&s.phi);
        for ((wj, a), b) in w.iter().zip(&s.a).zip(&s.b) {
            if *wj != T::zero() {
                one_body += *wj * one(a);
            }
            one_body += (T::one() + *wj) * one(b);
        }

        let rho_g = Self::density(w, &s);
        let rho_p: Vec<T> = s.phi.iter().map(|z| z.norm_sqr()).collect();
        let u_g = self.mf.direct(&rho_g);
        let u_p = self.mf.direct(&rho_p);
        let direct = |u: &[T], r: &[T]| u.iter().zip(r).fold(T::zero(), |a, (x, y)| a + *x * *y) * dx;

        let g_terms = gamma_terms(w, &s.a, &s.b);
        let exch = |f: &[Cplx<T>]| -> Vec<Cplx<T>> {
            let mut out = vec![czero::<T>(); n];
            self.mf.contract_into(&g_terms, true, f, &mut out);
            out
        };
        let condensate_cloud = direct(&u_p, &rho_g) + ip(&s.phi, &exch(&s.phi)).re;
        let mut gg = direct(&u_g, &rho_g);
        for &(c, u, _) in &g_terms {
            gg += c * ip(u, &exch(u)).re;
        }

        let mut k_terms: Vec<Term<'_, T>> = alpha_terms(w, &s.a, &s.b);
        k_terms.push((T::one(), &s.phi[..], &s.phi[..]));
        let mut pair = T::zero();
        for &(c, f, h) in &k_terms {
            let hc: Vec<Cplx<T>> = h.iter().map(|z| z.conj()).collect();
            let mut kh = vec![czero::<T>(); n];
            self.mf.contract_into(&k_terms, false, &hc, &mut kh);
            pair += c * ip(&kh, f).re;
        }
        let half = lit::<T>(0.5);
        Ok(HfbEnergy { one_body, condensate_cloud, cloud_cloud: gg * half, pairing: pair * half })
    }
}

/// One trap-free splitting step with default probe settings.
pub fn step_modes<T: Real>(state: &ModeState<T>, dt: T) -> Result<ModeState<T>> {
    ModeHfb::new(state.grid(), &state.interaction, &TrapSpec::off(), ModeOptions::default())?.step(state, dt)
}

/// Trap-free mode trajectory on `[0, t_end]` with default probes.
pub fn propagate_modes<T: Real>(
    state: &ModeState<T>,
    dt: T,
    t_end: T,
    save_every: usize,
) -> Result<Trajectory<T, ModeState<T>>> {
    let prop = ModeHfb::new(state.grid(), &state.interaction, &TrapSpec::off(), ModeOptions::default())?;
    Ok(prop.propagate(state, dt, t_end, save_every)?.0)
}
