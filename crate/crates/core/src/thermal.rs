//! Ideal-gas thermal initial data: critical temperature and condensate
//! fraction formulas, the chemical potential matching a particle budget, the
//! projected Gibbs 1-pdm, and the regularity diagnostics of the thermal cloud.

use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::fft::FourierOps;
use crate::grid::{Field, Grid, TrapSpec};
use crate::scalar::{cplx, lit, norm_sqr, to_f64, Real};
use crate::spectral::{GrowthLaw, SpectralData};

/// Relative cutoff for retaining thermal modes.
pub const WEIGHT_CUTOFF: f64 = 1e-10;
/// Maximal discarded trace relative to the retained trace.
pub const MAX_DISCARDED_FRACTION: f64 = 1e-3;

/// `α = (6 + 3s)/(2s)`.
pub fn alpha_exponent(s: f64) -> f64 {
    (6.0 + 3.0 * s) / (2.0 * s)
}

/// `∫₀¹ (1 − y^s)^{3/2} y² dy = B(3/s, 5/2)/s`, the phase-space volume
/// factor of `{p² + |x|^s ≤ 1}`.
pub fn phase_space_integral(s: f64) -> f64 {
    statrs::function::beta::beta(3.0 / s, 2.5) / s
}

/// Semiclassical density-of-states constant: the number of one-particle
/// states below energy `E` is `κ E^α`.
pub fn kappa(s: f64, prefactor: f64) -> f64 {
    2.0 * prefactor.powf(-3.0 / s) / (3.0 * std::f64::consts::PI) * phase_space_integral(s)
}

/// Riemann zeta function for real argument `a > 1`.
pub fn riemann_zeta(a: f64) -> f64 {
    assert!(a > 1.0, "zeta needs a > 1");
    let n = 30usize;
    let nf = n as f64;
    let mut s: f64 = (1..n).map(|k| (k as f64).powf(-a)).sum();
    // Euler–Maclaurin remainder.
    s += nf.powf(1.0 - a) / (a - 1.0) + 0.5 * nf.powf(-a);
    let mut term = a * nf.powf(-a - 1.0) / 12.0;
    s += term;
    term = a * (a + 1.0) * (a + 2.0) * nf.powf(-a - 3.0) / 720.0;
    s -= term;
    term = a * (a + 1.0) * (a + 2.0) * (a + 3.0) * (a + 4.0) * nf.powf(-a - 5.0) / 30240.0;
    s += term;
    s
}

/// Critical-temperature data of the three-dimensional ideal gas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalTemperature {
    pub t_c: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// `t_c(s)` with `T_c = t_c(s)·N^{1/α}`.
    pub t_c_const: f64,
}

/// `T_c = N^{1/α} / (κ α Γ(α) ζ(α))^{1/α}`.
pub fn critical_temperature(s: f64, prefactor: f64, n: f64) -> Result<CriticalTemperature> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(invalid("exponent_s", "must be positive"));
    }
    if !(prefactor > 0.0) {
        return Err(invalid("prefactor", "critical temperature needs a confining trap"));
    }
    if !(n > 0.0) {
        return Err(invalid("N", "must be positive"));
    }
    let alpha = alpha_exponent(s);
    let k = kappa(s, prefactor);
    let t_c_const = (k * alpha * gamma(alpha) * riemann_zeta(alpha)).powf(-1.0 / alpha);
    Ok(CriticalTemperature { t_c: t_c_const * n.powf(1.0 / alpha), alpha, kappa: k, t_c_const })
}

/// [`critical_temperature`] for a [`TrapSpec`].
pub fn critical_temperature_for<T: Real>(trap: &TrapSpec<T>, n: f64) -> Result<CriticalTemperature> {
    critical_temperature(to_f64(trap.exponent_s), to_f64(trap.prefactor), n)
}

/// `g = [1 − (λ/t_c(s))^α]_+`.
pub fn condensate_fraction(lambda_scaled: f64, s: f64, prefactor: f64) -> Result<f64> {
    if !(lambda_scaled >= 0.0) {
        return Err(invalid("lambda_scaled", "must be non-negative"));
    }
    let tc = critical_temperature(s, prefactor, 1.0)?;
    Ok((1.0 - (lambda_scaled / tc.t_c_const).powf(tc.alpha)).max(0.0))
}

/// Semiclassical excited-particle count `κα ∫₀^∞ E^{α−1}/(e^{(E−μ)/T} − 1) dE`
/// evaluated by quadrature (μ ≤ 0).
pub fn semiclassical_excited_count(s: f64, prefactor: f64, temperature: f64, mu: f64) -> f64 {
    let alpha = alpha_exponent(s);
    let k = kappa(s, prefactor);
    // E = T·u²  removes the E^{α−1} endpoint behaviour; u ∈ [0, 12].
    let n = 20000usize;
    let umax = 12.0f64;
    let h = umax / n as f64;
    let f = |u: f64| {
        if u == 0.0 {
            return 0.0;
        }
        let e = temperature * u * u;
        let occ = 1.0 / (((e - mu) / temperature).exp_m1());
        e.powf(alpha - 1.0) * occ * 2.0 * temperature * u
    };
    let mut s_sum = f(0.0) + f(umax);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s_sum += w * f(i as f64 * h);
    }
    k * alpha * s_sum * h / 3.0
}

/// Bose occupation `1/(e^{(e−μ)/T} − 1)`.
#[inline]
pub fn bose(e: f64, mu: f64, temperature: f64) -> f64 {
    1.0 / ((e - mu) / temperature).exp_m1()
}

/// Options for [`solve_chemical_potential_levels`].
#[derive(Clone, Copy, Debug, Default)]
pub struct MuOptions {
    /// Upper bound on the occupation of the first excited level.
    pub occupation_cap: Option<f64>,
    /// Growth law used to add the unretained tail.
    pub tail: Option<GrowthLaw>,
}

fn excited_count(levels: &[f64], mu: f64, t: f64, tail: Option<&GrowthLaw>) -> f64 {
    let mut s: f64 = levels.iter().skip(1).map(|&e| bose(e, mu, t)).sum();
    if let Some(law) = tail {
        s += law.tail_sum(levels.len(), t, |e| bose(e, mu, t));
    }
    s
}

/// Chemical potential below `levels[0]` at which the excited levels `j ≥ 1`
/// (plus an optional tail) hold `target_excited` particles.
pub fn solve_chemical_potential_levels(
    levels: &[f64],
    temperature: f64,
    target_excited: f64,
    opts: &MuOptions,
) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(invalid("T", "must be positive"));
    }
    if !(target_excited > 0.0) {
        return Err(invalid("target_excited", "must be positive"));
    }
    if levels.len() < 2 {
        return Err(invalid("levels", "need the condensate level and at least one excited level"));
    }
    let e0 = levels[0];
    let t = temperature;
    let mut mu_hi = e0 - 1e-12 * t.max(e0.abs()).max(1.0);
    if let Some(cap) = opts.occupation_cap {
        mu_hi = mu_hi.min(levels[1] - t * (1.0 / cap).ln_1p());
    }
    let count = |mu: f64| excited_count(levels, mu, t, opts.tail.as_ref());
    let max_reachable = count(mu_hi);
    if max_reachable < target_excited {
        return Err(Error::Unreachable { target: target_excited, max_reachable });
    }
    let mut mu_lo = e0 - 50.0 * t;
    while count(mu_lo) > target_excited {
        mu_lo -= 2.0 * (mu_hi - mu_lo);
    }
    let mut hi = mu_hi;
    for _ in 0..300 {
        let mid = 0.5 * (mu_lo + hi);
        let c = count(mid);
        if c > target_excited {
            hi = mid;
        } else {
            mu_lo = mid;
        }
        if (c - target_excited).abs() <= 1e-12 * target_excited || hi - mu_lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (mu_lo + hi))
}

/// [`solve_chemical_potential_levels`] on grid eigenvalues, with the tail
/// beyond the retained pairs estimated from the fitted growth law.
pub fn solve_chemical_potential<T: Real>(spec: &SpectralData<T>, temperature: f64, target_excited: f64) -> Result<f64> {
    let levels: Vec<f64> = spec.eigenvalues.iter().map(|&e| to_f64(e)).collect();
    let opts = MuOptions { occupation_cap: None, tail: GrowthLaw::fit(&levels) };
    solve_chemical_potential_levels(&levels, temperature, target_excited, &opts)
}

/// Chemical potential of the full ideal gas (condensate level included) with
/// `n_total` particles.
pub fn ideal_gas_chemical_potential(levels: &[f64], tail: Option<&GrowthLaw>, temperature: f64, n_total: f64) -> Result<f64> {
    if !(temperature > 0.0) || !(n_total > 0.0) {
        return Err(invalid("T/N", "must be positive"));
    }
    let e0 = levels[0];
    let t = temperature;
    let total = |y: f64| {
        let mu = e0 - y;
        bose(e0, mu, t) + excited_count(levels, mu, t, tail)
    };
    // Bisection in log(e0 − μ); the count decreases in e0 − μ.
    let mut lo = (t * 1e-15).ln();
    let mut hi = (60.0 * t + 1.0).ln();
    while total(hi.exp()) > n_total {
        hi += 1.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if total(mid.exp()) > n_total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(e0 - (0.5 * (lo + hi)).exp())
}

/// Thermodynamic state of the trapped ideal gas on a given spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalModel<T: Real> {
    pub trap: TrapSpec<T>,
    pub n_total: f64,
    pub temperature: f64,
    /// `λ` with `T = λ·N^{1/α}`.
    pub lambda_scaled: f64,
    pub alpha_exp: f64,
    pub kappa_const: f64,
    pub t_c_const: f64,
    pub chemical_potential: f64,
    /// Set when the three-dimensional formulas are evaluated for a grid of
    /// another dimension.
    pub formula_only: bool,
}

impl<T: Real> ThermalModel<T> {
    /// Model at temperature `T = (λ/t_c)·T_c(N)`.
    pub fn from_lambda_ratio(spec: &SpectralData<T>, n_total: f64, lambda_over_tc: f64) -> Result<Self> {
        if !(lambda_over_tc >= 0.0) {
            return Err(invalid("lambda_over_tc", "must be non-negative"));
        }
        let tc = critical_temperature_for(&spec.trap, n_total)?;
        Self::from_temperature(spec, n_total, lambda_over_tc * tc.t_c)
    }

    /// Model at a given temperature; μ solves `tr γ^id = N` on the spectrum.
    pub fn from_temperature(spec: &SpectralData<T>, n_total: f64, temperature: f64) -> Result<Self> {
        if !(temperature >= 0.0) {
            return Err(invalid("temperature", "must be non-negative"));
        }
        if !(n_total > 0.0) {
            return Err(invalid("N_total", "must be positive"));
        }
        let tc = critical_temperature_for(&spec.trap, n_total)?;
        let levels: Vec<f64> = spec.eigenvalues.iter().map(|&e| to_f64(e)).collect();
        let e0 = levels[0];
        let chemical_potential = if temperature == 0.0 {
            e0 - 1.0
        } else {
            let law = GrowthLaw::fit(&levels);
            ideal_gas_chemical_potential(&levels, law.as_ref(), temperature, n_total)?
        };
        Ok(ThermalModel {
            trap: spec.trap,
            n_total,
            temperature,
            lambda_scaled: temperature / n_total.powf(1.0 / tc.alpha),
            alpha_exp: tc.alpha,
            kappa_const: tc.kappa,
            t_c_const: tc.t_c_const,
            chemical_potential,
            formula_only: spec.grid().dim() != 3,
        })
    }

    pub fn critical_temperature(&self) -> f64 {
        self.t_c_const * self.n_total.powf(1.0 / self.alpha_exp)
    }

    /// Ideal-gas occupation of the condensate level.
    pub fn condensate_occupation(&self, e0: f64) -> f64 {
        if self.temperature == 0.0 {
            self.n_total
        } else {
            bose(e0, self.chemical_potential, self.temperature)
        }
    }
}

/// `γ = (e^{(h−μ)/T} − 1)^{-1} Q` restricted to retained modes.
#[derive(Clone, Debug)]
pub struct ThermalPdm<T: Real> {
    /// `λ_j` for the retained excited modes `j ≥ 1`.
    pub weights: Vec<T>,
    pub energies: Vec<T>,
    pub modes: Vec<Field<T>>,
    /// Estimated trace of the unretained modes.
    pub discarded_trace: T,
    pub temperature: f64,
    pub chemical_potential: f64,
}

impl<T: Real> ThermalPdm<T> {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    /// Trace of the retained part.
    pub fn retained_trace(&self) -> T {
        self.weights.iter().fold(T::zero(), |a, &w| a + w)
    }

    /// Retained trace plus the discarded estimate.
    pub fn trace(&self) -> T {
        self.retained_trace() + self.discarded_trace
    }

    pub fn op_norm(&self) -> T {
        self.weights.first().copied().unwrap_or_else(T::zero)
    }

    pub fn grid(&self) -> Option<&Grid<T>> {
        self.modes.first().map(|m| m.grid())
    }
}

/// Builds the projected Gibbs 1-pdm, retaining modes while
/// `λ_j ≥ 1e-10·λ_1`, at most `max_modes` of them.
pub fn build_thermal_pdm_capped<T: Real>(
    model: &ThermalModel<T>,
    spec: &SpectralData<T>,
    max_modes: Option<usize>,
) -> Result<ThermalPdm<T>> {
    let levels: Vec<f64> = spec.eigenvalues.iter().map(|&e| to_f64(e)).collect();
    if levels.len() < 2 {
        return Err(invalid("spec", "need at least two eigenpairs"));
    }
    let t = model.temperature;
    let mu = model.chemical_potential;
    if !(mu < levels[0]) {
        return Err(invalid("chemical_potential", "must lie below the lowest eigenvalue"));
    }
    let empty = |discarded: f64| ThermalPdm {
        weights: vec![],
        energies: vec![],
        modes: vec![],
        discarded_trace: lit(discarded),
        temperature: t,
        chemical_potential: mu,
    };
    if t == 0.0 {
        return Ok(empty(0.0));
    }
    let all: Vec<f64> = levels[1..].iter().map(|&e| bose(e, mu, t)).collect();
    let top = all[0];
    let cap = max_modes.unwrap_or(usize::MAX);
    let mut retained = 0;
    while retained < all.len() && retained < cap && all[retained] >= WEIGHT_CUTOFF * top {
        retained += 1;
    }
    let mut discarded: f64 = all[retained..].iter().sum();
    if let Some(law) = GrowthLaw::fit(&levels) {
        discarded += law.tail_sum(levels.len(), t, |e| bose(e, mu, t));
    }
    let kept: f64 = all[..retained].iter().sum();
    if discarded > MAX_DISCARDED_FRACTION * kept {
        return Err(Error::TooFewModes { discarded, limit: MAX_DISCARDED_FRACTION * kept });
    }
    if top == 0.0 {
        return Ok(empty(0.0));
    }
    Ok(ThermalPdm {
        weights: all[..retained].iter().map(|&w| lit(w)).collect(),
        energies: spec.eigenvalues[1..=retained].to_vec(),
        modes: spec.eigenfunctions[1..=retained].to_vec(),
        discarded_trace: lit(discarded),
        temperature: t,
        chemical_potential: mu,
    })
}

pub fn build_thermal_pdm<T: Real>(model: &ThermalModel<T>, spec: &SpectralData<T>) -> Result<ThermalPdm<T>> {
    build_thermal_pdm_capped(model, spec, None)
}

/// Condensate `φ = √(N − tr γ)·profile` for a unit-norm profile.
pub fn condensate<T: Real>(pdm: &ThermalPdm<T>, n_total: f64, profile: &Field<T>) -> Result<Field<T>> {
    let mass = n_total - to_f64(pdm.trace());
    if !(mass >= 0.0) {
        return Err(invalid("N_total", "thermal cloud exceeds the particle budget"));
    }
    let norm = to_f64(profile.norm());
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(profile.scaled(cplx(lit(mass.sqrt()), T::zero())))
}

/// Operator norm, Fourier-L¹ bound and `(1−Δ)^{3/2}` trace of a thermal 1-pdm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AssumptionDiagnostics {
    pub op_norm: f64,
    /// `Σ_j λ_j ‖ψ̂_j‖₁²`, an upper bound on `∫∫|γ̂(p,q)| dp dq`.
    pub fourier_l1: f64,
    pub h3_trace: f64,
}

pub fn assumption_diagnostics<T: Real>(pdm: &ThermalPdm<T>, grid: &Grid<T>) -> Result<AssumptionDiagnostics> {
    let ops = FourierOps::new(grid);
    let dp = to_f64(grid.momentum_measure());
    let mut fourier_l1 = 0.0;
    let mut h3_trace = 0.0;
    for (w, m) in pdm.weights.iter().zip(&pdm.modes) {
        grid.check_same(m.grid())?;
        let fh = ops.fourier_transform(m.values());
        let l1: f64 = fh.iter().map(|z| to_f64(norm_sqr(*z)).sqrt()).sum::<f64>() * dp;
        let h3: f64 = fh
            .iter()
            .zip(ops.k2())
            .map(|(z, &k2)| (1.0 + to_f64(k2)).powi(3) * to_f64(norm_sqr(*z)))
            .sum::<f64>()
            * dp;
        fourier_l1 += to_f64(*w) * l1 * l1;
        h3_trace += to_f64(*w) * h3;
    }
    Ok(AssumptionDiagnostics { op_norm: to_f64(pdm.op_norm()), fourier_l1, h3_trace })
}

/// Ideal-gas solution on a separable spectrum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdealGasSolution {
    pub chemical_potential: f64,
    pub condensate: f64,
    pub excited: f64,
    pub condensate_fraction: f64,
}

/// Ideal gas with `n_total` particles whose `dim`-dimensional levels are sums
/// of the one-dimensional `levels_1d` (a separable trap such as `|x|²`).
///
/// The excited count uses the fugacity expansion
/// `Σ_k e^{kμ/T} (Z₁(k/T)^dim − e^{−k·dim·e₀/T})`.
pub fn separable_ideal_gas(levels_1d: &[f64], dim: usize, temperature: f64, n_total: f64) -> Result<IdealGasSolution> {
    if !(temperature > 0.0) || !(n_total > 0.0) {
        return Err(invalid("T/N", "must be positive"));
    }
    if levels_1d.len() < 2 {
        return Err(invalid("levels_1d", "need at least two levels"));
    }
    let t = temperature;
    let e0 = levels_1d[0];
    let ground = dim as f64 * e0;
    // Reduced partition sums z(k) = Σ_a e^{−k(e_a − e0)/T}.
    let z = |k: f64| levels_1d.iter().map(|&e| (-k * (e - e0) / t).exp()).sum::<f64>();
    let excited = |y: f64| {
        // y = ground − μ > 0; terms decay like e^{−k(gap + y)/T}.
        let mut s = 0.0;
        let mut k = 1.0;
        loop {
            let zk = z(k);
            let term = (-k * y / t).exp() * (zk.powi(dim as i32) - 1.0);
            s += term;
            if term <= 1e-17 * s || k > 1e7 {
                break;
            }
            k += 1.0;
        }
        s
    };
    let top = levels_1d[levels_1d.len() - 1] - e0;
    if (-top / t).exp() > 1e-12 {
        return Err(invalid("levels_1d", "spectrum too short for this temperature"));
    }
    let total = |y: f64| 1.0 / (y / t).exp_m1() + excited(y);
    let mut lo = (t * 1e-15).ln();
    let mut hi = (60.0 * t).ln();
    while total(hi.exp()) > n_total {
        hi += 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid.exp()) > n_total {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let y = (0.5 * (lo + hi)).exp();
    let n0 = 1.0 / (y / t).exp_m1();
    let ex = excited(y);
    Ok(IdealGasSolution {
        chemical_potential: ground - y,
        condensate: n0,
        excited: ex,
        condensate_fraction: n0 / n_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lowest_eigenpairs;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn exponents() {
        assert_eq!(alpha_exponent(2.0), 3.0);
        assert_eq!(alpha_exponent(1.5), 3.5);
        assert!(critical_temperature(0.0, 1.0, 10.0).is_err());
        assert!(critical_temperature(-1.0, 1.0, 10.0).is_err());
    }

    #[test]
    fn phase_space_integrals() {
        let q1 = simpson(|x| (1.0 - x).powf(1.5) * x * x, 0.0, 1.0, 200_000);
        assert!((q1 - 16.0 / 315.0).abs() < 1e-12);
        assert!((phase_space_integral(1.0) - 16.0 / 315.0).abs() < 1e-13);
        assert!((statrs::function::beta::beta(3.0, 2.5) - 16.0 / 315.0).abs() < 1e-13);
        let q2 = simpson(|x| (1.0 - x * x).powf(1.5) * x * x, 0.0, 1.0, 200_000);
        assert!((phase_space_integral(2.0) - q2).abs() < 1e-10);
        assert!((q2 - std::f64::consts::PI / 32.0).abs() < 1e-10);
        let q15 = simpson(|x| (1.0 - x.powf(1.5)).powf(1.5) * x * x, 0.0, 1.0, 200_000);
        assert!((phase_space_integral(1.5) - q15).abs() < 1e-9);
    }

    #[test]
    fn harmonic_kappa_matches_level_counting() {
        // Levels 2(a+b+c)+3: about E³/48 states below E.
        assert!((kappa(2.0, 1.0) - 1.0 / 48.0).abs() < 1e-15);
    }

    #[test]
    fn zeta_values() {
        assert!((riemann_zeta(3.0) - 1.202_056_903_159_594_2).abs() < 1e-14);
        assert!((riemann_zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-13);
        assert!((riemann_zeta(4.0) - std::f64::consts::PI.powi(4) / 90.0).abs() < 1e-14);
    }

    #[test]
    fn condensate_fraction_examples() {
        let tc = critical_temperature(2.0, 1.0, 1.0).unwrap().t_c_const;
        assert_eq!(condensate_fraction(0.0, 2.0, 1.0).unwrap(), 1.0);
        assert!(condensate_fraction(tc, 2.0, 1.0).unwrap().abs() < 1e-14);
        assert!((condensate_fraction(tc / 2.0, 2.0, 1.0).unwrap() - 0.875).abs() < 1e-14);
        assert_eq!(condensate_fraction(2.0 * tc, 2.0, 1.0).unwrap(), 0.0);
        assert!(condensate_fraction(-1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn critical_count_by_quadrature() {
        for s in [1.0, 1.5, 2.0] {
            let tc = critical_temperature(s, 1.0, 1000.0).unwrap();
            let n = semiclassical_excited_count(s, 1.0, tc.t_c, 0.0);
            assert!((n - 1000.0).abs() < 1e-6 * 1000.0, "s = {s}: {n}");
        }
    }

    #[test]
    fn doubling_n_scales_tc() {
        for s in [1.0, 1.5] {
            let a = critical_temperature(s, 1.0, 500.0).unwrap();
            let b = critical_temperature(s, 1.0, 1000.0).unwrap();
            let expect = 2f64.powf(1.0 / a.alpha);
            assert!((b.t_c / a.t_c - expect).abs() < 1e-2 * expect);
        }
    }

    #[test]
    fn single_mode_closed_form() {
        let (t, n) = (1.0, 0.1);
        let mu = solve_chemical_potential_levels(&[1.0, 3.0], t, n, &MuOptions::default()).unwrap();
        let expect = 3.0 - t * (1.0 + 1.0 / n).ln();
        assert!((mu - expect).abs() < 1e-10);
        let err = solve_chemical_potential_levels(&[1.0, 3.0], t, 5.0, &MuOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }

    #[test]
    fn mu_is_monotone_in_target() {
        let levels: Vec<f64> = (0..60).map(|j| 2.0 * j as f64 + 1.0).collect();
        let mut prev = f64::NEG_INFINITY;
        for target in [1e-6, 1e-3, 0.1, 1.0, 2.0, 2.7] {
            let mu = solve_chemical_potential_levels(&levels, 4.0, target, &MuOptions::default()).unwrap();
            assert!(mu > prev && mu < 1.0);
            prev = mu;
        }
        let tiny = solve_chemical_potential_levels(&levels, 4.0, 1e-12, &MuOptions::default()).unwrap();
        assert!(tiny < -50.0);
    }

    fn direct_count(mu: f64, t: f64, from: usize) -> f64 {
        (from..2000).map(|j| 1.0 / (((2.0 * j as f64 + 1.0 - mu) / t).exp() - 1.0)).sum()
    }

    fn direct_bisect(t: f64, target: f64, from: usize) -> f64 {
        let (mut lo, mut hi) = (-200.0, 1.0 - 1e-13);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if direct_count(mid, t, from) > target {
                hi = mid
            } else {
                lo = mid
            }
        }
        lo
    }

    #[test]
    fn mu_against_direct_summation() {
        let t = 4.0;
        let levels: Vec<f64> = (0..40).map(|j| 2.0 * j as f64 + 1.0).collect();
        let law = GrowthLaw::fit(&levels);
        let opts = MuOptions { occupation_cap: None, tail: law };

        // Ten excited particles exceed what the 1D spectrum holds below e_0.
        match solve_chemical_potential_levels(&levels, t, 10.0, &opts) {
            Err(Error::Unreachable { max_reachable, .. }) => {
                let oracle = direct_count(1.0, t, 1);
                assert!((max_reachable - oracle).abs() < 1e-6 * oracle);
            }
            other => panic!("expected unreachable, got {other:?}"),
        }

        let mu = solve_chemical_potential_levels(&levels, t, 2.0, &opts).unwrap();
        let oracle = direct_bisect(t, 2.0, 1);
        assert!((mu - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{mu} vs {oracle}");

        // Full gas with ten particles, condensate level included.
        let mu = ideal_gas_chemical_potential(&levels, law.as_ref(), t, 10.0).unwrap();
        let oracle = direct_bisect(t, 10.0, 0);
        assert!((mu - oracle).abs() < 1e-8 * oracle.abs().max(1.0), "{mu} vs {oracle}");
    }

    #[test]
    fn occupation_cap_limits_mu() {
        let levels = [1.0, 3.0, 5.0, 7.0];
        let opts = MuOptions { occupation_cap: Some(0.05), tail: None };
        let err = solve_chemical_potential_levels(&levels, 1.0, 1.0, &opts).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }

    fn harmonic_1d() -> SpectralData<f64> {
        let g = Grid::new(1, 128, 12.0).unwrap();
        lowest_eigenpairs(&g, &TrapSpec::power(2.0).unwrap(), 40, 1e-9).unwrap()
    }

    #[test]
    fn pdm_and_particle_budget() {
        let spec = harmonic_1d();
        let model = ThermalModel::from_temperature(&spec, 100.0, 3.0).unwrap();
        assert!(model.chemical_potential < spec.eigenvalues[0]);
        assert!(model.formula_only);
        let pdm = build_thermal_pdm(&model, &spec).unwrap();
        assert!(pdm.weights.windows(2).all(|w| w[0] > w[1]) && pdm.weights.iter().all(|&w| w > 0.0));
        let lambda1 = bose(spec.eigenvalues[1], model.chemical_potential, 3.0);
        assert!((pdm.op_norm() - lambda1).abs() < 1e-14 * lambda1);
        let n0 = model.condensate_occupation(spec.eigenvalues[0]);
        assert!((pdm.trace() + n0 - 100.0).abs() < 1e-6 * 100.0);
        let phi = condensate(&pdm, 100.0, &spec.eigenfunctions[0]).unwrap();
        let budget = phi.norm_sq() + pdm.trace();
        assert!((budget - 100.0).abs() < 1e-6 * 100.0);
    }

    #[test]
    fn zero_temperature_gives_empty_cloud() {
        let spec = harmonic_1d();
        let model = ThermalModel::from_temperature(&spec, 100.0, 0.0).unwrap();
        let pdm = build_thermal_pdm(&model, &spec).unwrap();
        assert_eq!(pdm.rank(), 0);
        assert_eq!(pdm.trace(), 0.0);
        let model = ThermalModel::from_temperature(&spec, 100.0, 1e-3).unwrap();
        let pdm = build_thermal_pdm(&model, &spec).unwrap();
        assert!(pdm.trace() < 1e-300);
    }

    #[test]
    fn weights_grow_with_temperature_at_fixed_mu() {
        for e in [3.0, 5.0, 9.0] {
            assert!(bose(e, 0.5, 2.0) < bose(e, 0.5, 2.5));
        }
    }

    #[test]
    fn too_few_modes_is_an_error() {
        let spec = harmonic_1d().truncated(6);
        let model = ThermalModel::from_temperature(&spec, 100.0, 20.0).unwrap();
        assert!(matches!(build_thermal_pdm(&model, &spec), Err(Error::TooFewModes { .. })));
    }

    #[test]
    fn assumption_diagnostics_examples() {
        let spec = harmonic_1d();
        let g = spec.grid().clone();
        let empty = ThermalPdm::<f64> {
            weights: vec![],
            energies: vec![],
            modes: vec![],
            discarded_trace: 0.0,
            temperature: 1.0,
            chemical_potential: 0.0,
        };
        let d = assumption_diagnostics(&empty, &g).unwrap();
        assert_eq!((d.op_norm, d.fourier_l1, d.h3_trace), (0.0, 0.0, 0.0));

        let single = ThermalPdm {
            weights: vec![2.0],
            energies: vec![3.0],
            modes: vec![spec.eigenfunctions[1].clone()],
            discarded_trace: 0.0,
            temperature: 1.0,
            chemical_potential: 0.0,
        };
        let d = assumption_diagnostics(&single, &g).unwrap();
        let ops = FourierOps::new(&g);
        let fh = ops.fourier_transform(spec.eigenfunctions[1].values());
        let dp = g.momentum_measure();
        let mut direct = 0.0;
        for a in &fh {
            for b in &fh {
                direct += (a * b.conj() * 2.0).norm() * dp * dp;
            }
        }
        assert!((d.fourier_l1 - direct).abs() < 1e-10 * direct);
        assert_eq!(d.op_norm, 2.0);
    }

    #[test]
    fn separable_gas_matches_brute_force() {
        let levels: Vec<f64> = (0..80).map(|a| 2.0 * a as f64 + 1.0).collect();
        let (t, n) = (3.0, 200.0);
        let sol = separable_ideal_gas(&levels, 3, t, n).unwrap();
        let mu = sol.chemical_potential;
        let mut ex = 0.0;
        for a in 0..80 {
            for b in 0..80 {
                for c in 0..80 {
                    if a + b + c > 0 {
                        ex += bose(levels[a] + levels[b] + levels[c], mu, t);
                    }
                }
            }
        }
        assert!((ex - sol.excited).abs() < 1e-9 * ex, "{ex} vs {}", sol.excited);
        assert!((sol.condensate + sol.excited - n).abs() < 1e-8 * n);
    }
}
