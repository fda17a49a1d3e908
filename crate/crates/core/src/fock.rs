//! Truncated doubled Fock space: ladder operators, Weyl and Bogoliubov
//! transformations, quasi-free identities and the fluctuation generator.
//!
//! Slots `0..m` are the ℓ-sector, `m..2m` the r-sector. The basis holds all
//! occupation tuples with total occupation at most `n_max`, in lexicographic
//! order. Everything here is `f64`: the identities are checked at 1e-10.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};

pub type CMat = DMatrix<C>;
pub type CVec = DVector<C>;

/// Largest Fock dimension for sparse operators.
pub const MAX_DIM: usize = 20_000;
/// Largest Fock dimension for dense operator matrices.
pub const MAX_DENSE_DIM: usize = 3_000;
/// Hermiticity tolerance for assembled generator pieces.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Constant in `𝒩 = 𝒩_ℓ + 𝒩_r + 5`.
pub const NUMBER_SHIFT: f64 = 5.0;

const ZERO: C = C { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct FockSpace {
    m: usize,
    n_max: usize,
    basis: Vec<Vec<u16>>,
    index: HashMap<Vec<u16>, usize>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl FockSpace {
    /// `m` one-particle modes per sector, total occupation at most `n_max`.
    pub fn new(m: usize, n_max: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("m", "need at least one mode"));
        }
        let dim = binomial(2 * m + n_max, n_max);
        if dim > MAX_DIM as f64 {
            return Err(Error::Budget { what: "Fock space dimension", size: dim as usize, budget: MAX_DIM });
        }
        let mut basis = Vec::with_capacity(dim as usize);
        let mut cur = vec![0u16; 2 * m];
        fn fill(slot: usize, left: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
            if slot == cur.len() {
                out.push(cur.clone());
                return;
            }
            for k in 0..=left {
                cur[slot] = k as u16;
                fill(slot + 1, left - k, cur, out);
            }
            cur[slot] = 0;
        }
        fill(0, n_max, &mut cur, &mut basis);
        let index = basis.iter().enumerate().map(|(i, b)| (b.clone(), i)).collect();
        Ok(FockSpace { m, n_max, basis, index })
    }

    pub fn modes(&self) -> usize {
        self.m
    }

    pub fn slots(&self) -> usize {
        2 * self.m
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn occupation(&self, i: usize) -> &[u16] {
        &self.basis[i]
    }

    pub fn total(&self, i: usize) -> usize {
        self.basis[i].iter().map(|&n| n as usize).sum()
    }

    /// Index of the vacuum.
    pub fn vacuum(&self) -> usize {
        0
    }

    pub fn vacuum_vector(&self) -> Vec<C> {
        let mut v = vec![ZERO; self.dim()];
        v[0] = C::new(1.0, 0.0);
        v
    }

    /// `a_s`.
    pub fn annihilation(&self, s: usize) -> SparseOp {
        let cols = self
            .basis
            .iter()
            .map(|b| {
                if b[s] == 0 {
                    return vec![];
                }
                let mut t = b.clone();
                t[s] -= 1;
                vec![(self.index[&t], C::new((b[s] as f64).sqrt(), 0.0))]
            })
            .collect();
        SparseOp { cols }
    }

    /// `a_s*` (zero on the top shell).
    pub fn creation(&self, s: usize) -> SparseOp {
        self.annihilation(s).adjoint()
    }

    /// `a(f) = Σ f̄_s a_s` over all `2m` slots.
    pub fn annihilator(&self, f: &[C]) -> SparseOp {
        SparseOp::combine(self.dim(), f.iter().enumerate().map(|(s, c)| (c.conj(), self.annihilation(s))))
    }

    /// `a*(f) = Σ f_s a_s*`.
    pub fn creator(&self, f: &[C]) -> SparseOp {
        self.annihilator(f).adjoint()
    }

    /// Diagonal of `𝒩_ℓ` and `𝒩_r`.
    pub fn sector_numbers(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m;
        self.basis
            .iter()
            .map(|b| {
                let l: u32 = b[..m].iter().map(|&n| n as u32).sum();
                let r: u32 = b[m..].iter().map(|&n| n as u32).sum();
                (l as f64, r as f64)
            })
            .unzip()
    }

    /// Diagonal of `𝒩 = 𝒩_ℓ + 𝒩_r + 5`.
    pub fn number_operator(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.total(i) as f64 + NUMBER_SHIFT).collect()
    }
}

/// Sparse operator stored by columns: `A e_j = Σ v e_i` over `(i, v)` in
/// column `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    cols: Vec<Vec<(usize, C)>>,
}

fn push_merge(col: &mut Vec<(usize, C)>, i: usize, v: C) {
    match col.iter_mut().find(|(r, _)| *r == i) {
        Some((_, w)) => *w += v,
        None => col.push((i, v)),
    }
}

impl SparseOp {
    pub fn zeros(dim: usize) -> Self {
        SparseOp { cols: vec![vec![]; dim] }
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    fn combine(dim: usize, terms: impl IntoIterator<Item = (C, SparseOp)>) -> Self {
        let mut out = SparseOp::zeros(dim);
        for (c, op) in terms {
            if c == ZERO {
                continue;
            }
            for (j, col) in op.cols.iter().enumerate() {
                for &(i, v) in col {
                    push_merge(&mut out.cols[j], i, c * v);
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> Self {
        let mut cols = vec![vec![]; self.dim()];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                cols[i].push((j, v.conj()));
            }
        }
        SparseOp { cols }
    }

    pub fn scaled(&self, c: C) -> Self {
        SparseOp { cols: self.cols.iter().map(|col| col.iter().map(|&(i, v)| (i, c * v)).collect()).collect() }
    }

    pub fn sub(&self, other: &SparseOp) -> Self {
        Self::combine(self.dim(), [(C::new(1.0, 0.0), self.clone()), (C::new(-1.0, 0.0), other.clone())])
    }

    /// `self · other`.
    pub fn mul(&self, other: &SparseOp) -> Self {
        let mut cols = vec![vec![]; self.dim()];
        for (j, col) in other.cols.iter().enumerate() {
            for &(k, v) in col {
                for &(i, w) in &self.cols[k] {
                    push_merge(&mut cols[j], i, w * v);
                }
            }
        }
        SparseOp { cols }
    }

    pub fn apply(&self, x: &[C]) -> Vec<C> {
        let mut out = vec![ZERO; self.dim()];
        for (j, col) in self.cols.iter().enumerate() {
            if x[j] == ZERO {
                continue;
            }
            for &(i, v) in col {
                out[i] += v * x[j];
            }
        }
        out
    }

    /// `self · m` for a dense `m`.
    pub fn mul_dense(&self, m: &CMat) -> CMat {
        let mut out = CMat::zeros(self.dim(), m.ncols());
        for c in 0..m.ncols() {
            for (j, col) in self.cols.iter().enumerate() {
                let x = m[(j, c)];
                if x == ZERO {
                    continue;
                }
                for &(i, v) in col {
                    out[(i, c)] += v * x;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMat {
        let mut out = CMat::zeros(self.dim(), self.dim());
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                out[(i, j)] += v;
            }
        }
        out
    }

    /// Largest column absolute sum.
    pub fn norm_one(&self) -> f64 {
        self.cols.iter().map(|c| c.iter().map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }
}

fn vnorm(x: &[C]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn vdot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn vdist(a: &[C], b: &[C]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// `e^{B} x` by scaled Taylor series.
pub fn expm_apply(gen: &SparseOp, x: &[C]) -> Vec<C> {
    let steps = (gen.norm_one() / 0.5).ceil().max(1.0) as usize;
    let h = C::new(1.0 / steps as f64, 0.0);
    let mut acc = x.to_vec();
    for _ in 0..steps {
        let mut term = acc.clone();
        let mut sum = acc.clone();
        for k in 1..80 {
            term = gen.apply(&term).into_iter().map(|z| z * h / k as f64).collect();
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
            if vnorm(&term) <= 1e-18 * vnorm(&sum) {
                break;
            }
        }
        acc = sum;
    }
    acc
}

/// Dense `e^{B}` column by column.
pub fn expm_dense(gen: &SparseOp) -> Result<CMat> {
    let n = gen.dim();
    if n > MAX_DENSE_DIM {
        return Err(Error::Budget { what: "dense Fock matrix", size: n, budget: MAX_DENSE_DIM });
    }
    let mut out = CMat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![ZERO; n];
        e[j] = C::new(1.0, 0.0);
        for (i, z) in expm_apply(gen, &e).into_iter().enumerate() {
            out[(i, j)] = z;
        }
    }
    Ok(out)
}

/// Largest deviation from the CCR: `[a_i, a_j*] = δ_ij` on columns below
/// the top shell, `[a_i, a_j] = 0` everywhere.
pub fn ccr_defect(space: &FockSpace) -> f64 {
    let a: Vec<SparseOp> = (0..space.slots()).map(|s| space.annihilation(s)).collect();
    let ad: Vec<SparseOp> = a.iter().map(SparseOp::adjoint).collect();
    let below: Vec<bool> = (0..space.dim()).map(|i| space.total(i) < space.n_max()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        for j in 0..a.len() {
            let c = a[i].mul(&ad[j]).sub(&ad[j].mul(&a[i])).to_dense();
            for col in 0..space.dim() {
                if !below[col] {
                    continue;
                }
                for row in 0..space.dim() {
                    let want = if i == j && row == col { 1.0 } else { 0.0 };
                    worst = worst.max((c[(row, col)] - want).norm());
                }
            }
            let c = a[i].mul(&a[j]).sub(&a[j].mul(&a[i]));
            worst = worst.max(c.to_dense().iter().fold(0.0, |w, z| w.max(z.norm())));
        }
    }
    worst
}

/// Pass/fail record for one identity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub truncation_estimate: f64,
    pub pass: bool,
}

impl IdentityReport {
    fn new(name: &str, max_deviation: f64, tolerance: f64, truncation_estimate: f64) -> Self {
        IdentityReport {
            name: name.to_string(),
            max_deviation,
            tolerance,
            truncation_estimate,
            pass: max_deviation <= tolerance,
        }
    }
}

/// `P(K ≥ k0)` for `K ~ Poisson(mu)`.
fn poisson_tail(mu: f64, k0: usize) -> f64 {
    if mu == 0.0 {
        return if k0 == 0 { 1.0 } else { 0.0 };
    }
    // log-space start avoids underflow of e^{-μ}μ^k/k! for large k0
    let ln_first = -mu + k0 as f64 * mu.ln() - (1..=k0).map(|k| (k as f64).ln()).sum::<f64>();
    let mut q = ln_first.exp();
    let mut tail = 0.0;
    for k in k0..k0 + 400 {
        tail += q;
        q *= mu / (k + 1) as f64;
        if q < 1e-300 || q < 1e-17 * tail {
            break;
        }
    }
    tail.min(1.0)
}

/// `φ ↦ (φ, φ̄)` on the doubled slots.
pub fn doubled_phi(phi: &[C]) -> Vec<C> {
    phi.iter().copied().chain(phi.iter().map(|z| z.conj())).collect()
}

/// Generator `a_ℓ*(φ) + a_r*(φ̄) − h.c.` of the Weyl operator.
pub fn weyl_generator(space: &FockSpace, phi: &[C]) -> Result<SparseOp> {
    if phi.len() != space.modes() {
        return Err(invalid("phi", "length must equal the mode count"));
    }
    let c = space.creator(&doubled_phi(phi));
    Ok(c.sub(&c.adjoint()))
}

/// Coherent tail estimate for `𝒲(φ)` acting on vectors with at most `level`
/// particles.
fn weyl_truncation_estimate(space: &FockSpace, phi: &[C], level: usize) -> f64 {
    let mu = 2.0 * phi.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if space.n_max() <= level {
        return if mu == 0.0 { 0.0 } else { 1.0 };
    }
    let k0 = space.n_max() - level;
    (binomial(space.n_max(), level) * space.n_max() as f64 * poisson_tail(mu, k0)).sqrt()
}

/// Checks `𝒲(φ)* a_s 𝒲(φ) = a_s + 𝛟_s` on all basis vectors with at most
/// `min(4, n_max/4)` particles, and the vacuum occupancies `|𝛟_s|²`.
pub fn verify_weyl_shift(space: &FockSpace, phi: &[C], tol: f64) -> Result<IdentityReport> {
    let level = (space.n_max() / 8).min(2);
    let est = weyl_truncation_estimate(space, phi, level);
    if est > tol {
        return Err(Error::Truncation {
            estimate: est,
            tol,
            advice: "increase n_max or reduce |phi|".into(),
        });
    }
    let gen = weyl_generator(space, phi)?;
    let back = gen.scaled(C::new(-1.0, 0.0));
    let shift = doubled_phi(phi);
    let a: Vec<SparseOp> = (0..space.slots()).map(|s| space.annihilation(s)).collect();
    let mut worst: f64 = 0.0;
    for j in (0..space.dim()).filter(|&j| space.total(j) <= level) {
        let mut e = vec![ZERO; space.dim()];
        e[j] = C::new(1.0, 0.0);
        let we = expm_apply(&gen, &e);
        for (s, op) in a.iter().enumerate() {
            let lhs = expm_apply(&back, &op.apply(&we));
            let mut rhs = op.apply(&e);
            rhs[j] += shift[s];
            worst = worst.max(vdist(&lhs, &rhs));
        }
    }
    let w0 = expm_apply(&gen, &space.vacuum_vector());
    for (s, op) in a.iter().enumerate() {
        let x = op.apply(&w0);
        worst = worst.max((vdot(&x, &x).re - shift[s].norm_sqr()).abs());
    }
    Ok(IdentityReport::new("weyl_shift", worst, tol, est))
}

/// Quasi-free data: `γ`, `k_γ = arcsinh √γ`, `u = √(1+γ)`, `v = √γ`, and a
/// condensate `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyQuasiFree {
    pub gamma: CMat,
    pub k: CMat,
    pub u: CMat,
    pub v: CMat,
    pub phi: Vec<C>,
    top_weight: f64,
}

impl ToyQuasiFree {
    pub fn new(gamma: CMat, phi: Vec<C>) -> Result<Self> {
        let m = gamma.nrows();
        if gamma.ncols() != m || phi.len() != m {
            return Err(invalid("gamma", "must be square and match phi"));
        }
        if (&gamma - gamma.adjoint()).iter().any(|z| z.norm() > 1e-12) {
            return Err(invalid("gamma", "must be Hermitian"));
        }
        let eig = SymmetricEigen::new(gamma.clone());
        if eig.eigenvalues.iter().any(|&l| l < -1e-12) {
            return Err(invalid("gamma", "must be positive semidefinite"));
        }
        let lam: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).collect();
        let q = &eig.eigenvectors;
        let calc = |f: &dyn Fn(f64) -> f64| {
            let d = CMat::from_diagonal(&CVec::from_iterator(m, lam.iter().map(|&l| C::new(f(l), 0.0))));
            q * d * q.adjoint()
        };
        let k = calc(&|l| l.sqrt().asinh());
        let u = calc(&|l| (1.0 + l).sqrt());
        let v = calc(&|l| l.sqrt());
        let top_weight = lam.iter().copied().fold(0.0, f64::max);
        Ok(ToyQuasiFree { gamma, k, u, v, phi, top_weight })
    }

    pub fn modes(&self) -> usize {
        self.gamma.nrows()
    }

    /// Generator `Σ k(i,j) a_{ℓ,i}* a_{r,j}* − h.c.` of `𝒯(γ)`.
    pub fn bogoliubov_generator(&self, space: &FockSpace) -> Result<SparseOp> {
        let m = self.modes();
        if space.modes() != m {
            return Err(invalid("space", "mode count must match gamma"));
        }
        let cr: Vec<SparseOp> = (0..2 * m).map(|s| space.creation(s)).collect();
        let mut terms = Vec::new();
        for i in 0..m {
            for j in 0..m {
                terms.push((self.k[(i, j)], cr[i].mul(&cr[m + j])));
            }
        }
        let pair = SparseOp::combine(space.dim(), terms);
        Ok(pair.sub(&pair.adjoint()))
    }

    /// `𝒲(φ)𝒯(γ)Ω`.
    pub fn state(&self, space: &FockSpace) -> Result<Vec<C>> {
        let t = expm_apply(&self.bogoliubov_generator(space)?, &space.vacuum_vector());
        Ok(expm_apply(&weyl_generator(space, &self.phi)?, &t))
    }

    /// `⟨a_{ℓ,j}* a_{ℓ,i}⟩ = γ(i,j) + φ_i φ̄_j`.
    pub fn expected_pdm(&self) -> CMat {
        let p = CVec::from_column_slice(&self.phi);
        &self.gamma + &p * p.adjoint()
    }

    /// `⟨a_{ℓ,i} a_{r,j}⟩ = (u v)(i,j) + φ_i φ̄_j`.
    pub fn expected_pairing(&self) -> CMat {
        let p = CVec::from_column_slice(&self.phi);
        &self.u * &self.v + &p * p.adjoint()
    }
}

/// Weight of `psi` in the top four shells of the cutoff. Quadratic
/// expectations are off by at most about `n_max` times this, quartic ones by
/// `n_max²` times this (checked against larger cutoffs in the tests).
pub fn cutoff_weight(space: &FockSpace, psi: &[C]) -> f64 {
    (0..space.dim()).filter(|&j| space.total(j) + 4 > space.n_max()).map(|j| psi[j].norm_sqr()).sum()
}

/// Checks the 1-pdm and pairing function of `𝒲(φ)𝒯(γ)Ω`.
pub fn verify_bogoliubov_pdm(space: &FockSpace, qf: &ToyQuasiFree, tol: f64) -> Result<Vec<IdentityReport>> {
    let psi = qf.state(space)?;
    let est = space.n_max() as f64 * cutoff_weight(space, &psi);
    if est > tol {
        return Err(Error::Truncation { estimate: est, tol, advice: "increase n_max or reduce the weights of gamma".into() });
    }
    let m = qf.modes();
    let al: Vec<Vec<C>> = (0..m).map(|i| space.annihilation(i).apply(&psi)).collect();
    let ar: Vec<Vec<C>> = (0..m).map(|i| space.annihilation(m + i).apply(&psi)).collect();
    let (want_pdm, want_pair) = (qf.expected_pdm(), qf.expected_pairing());
    let mut pdm_dev: f64 = 0.0;
    let mut pair_dev: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            pdm_dev = pdm_dev.max((vdot(&al[j], &al[i]) - want_pdm[(i, j)]).norm());
            // ⟨a_ℓ,i a_r,j⟩ = ⟨a_ℓ,i* Ψ, a_r,j Ψ⟩
            let lhs = vdot(&space.creation(i).apply(&psi), &ar[j]);
            pair_dev = pair_dev.max((lhs - want_pair[(i, j)]).norm());
        }
    }
    Ok(vec![
        IdentityReport::new("bogoliubov_one_pdm", pdm_dev, tol, est),
        IdentityReport::new("bogoliubov_pairing", pair_dev, tol, est),
    ])
}

/// Bogoliubov relations of `𝒯(γ)` on the vacuum and one-particle vectors:
/// `𝒯* a_ℓ(f) 𝒯 = a_ℓ(u f) + a_r*(conj(v f))` and
/// `𝒯* a_r(f) 𝒯 = a_r(ū f) + a_ℓ*(v f)`.
///
/// These are vector identities, so the cutoff error is much larger than for
/// the expectations; the estimate `m n_max q^{n_max/4}` is calibrated on
/// single-mode runs.
pub fn verify_bogoliubov_relations(space: &FockSpace, qf: &ToyQuasiFree, tol: f64) -> Result<IdentityReport> {
    let m = qf.modes();
    let q = qf.top_weight / (1.0 + qf.top_weight);
    let est = m as f64 * space.n_max() as f64 * q.powf(space.n_max() as f64 / 4.0);
    if est > tol {
        return Err(Error::Truncation { estimate: est, tol, advice: "increase n_max or reduce the weights of gamma".into() });
    }
    let gen = qf.bogoliubov_generator(space)?;
    let back = gen.scaled(C::new(-1.0, 0.0));
    let level = 1;
    let mut rel_dev: f64 = 0.0;
    for i in 0..m {
        let col = |mat: &CMat, conj: bool| -> Vec<C> {
            (0..m).map(|x| if conj { mat[(x, i)].conj() } else { mat[(x, i)] }).collect()
        };
        let pad_l = |f: Vec<C>| -> Vec<C> { f.into_iter().chain(std::iter::repeat_n(ZERO, m)).collect() };
        let pad_r = |f: Vec<C>| -> Vec<C> { std::iter::repeat_n(ZERO, m).chain(f).collect() };
        // a_ℓ(u e_i) + a_r*(conj(v e_i))
        let rhs_l = SparseOp::combine(
            space.dim(),
            [
                (C::new(1.0, 0.0), space.annihilator(&pad_l(col(&qf.u, false)))),
                (C::new(1.0, 0.0), space.creator(&pad_r(col(&qf.v, true)))),
            ],
        );
        // a_r(ū e_i) + a_ℓ*(v e_i)
        let rhs_r = SparseOp::combine(
            space.dim(),
            [
                (C::new(1.0, 0.0), space.annihilator(&pad_r(col(&qf.u, true)))),
                (C::new(1.0, 0.0), space.creator(&pad_l(col(&qf.v, false)))),
            ],
        );
        for (lhs_op, rhs) in [(space.annihilation(i), rhs_l), (space.annihilation(m + i), rhs_r)] {
            for j in (0..space.dim()).filter(|&j| space.total(j) <= level) {
                let mut e = vec![ZERO; space.dim()];
                e[j] = C::new(1.0, 0.0);
                let lhs = expm_apply(&back, &lhs_op.apply(&expm_apply(&gen, &e)));
                rel_dev = rel_dev.max(vdist(&lhs, &rhs.apply(&e)));
            }
        }
    }
    Ok(IdentityReport::new("bogoliubov_relations", rel_dev, tol, est))
}

/// One ladder operator in a correlation function: `a_s` or `a_s*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ladder {
    pub slot: usize,
    pub dagger: bool,
}

/// `⟨Ψ, O_1 ⋯ O_k Ψ⟩` with every `O` centered by `shift` (the Weyl shift).
pub fn correlation(space: &FockSpace, psi: &[C], ops: &[Ladder], shift: &[C]) -> C {
    let mut x = psi.to_vec();
    for op in ops.iter().rev() {
        let (mat, c) = if op.dagger {
            (space.creation(op.slot), shift[op.slot].conj())
        } else {
            (space.annihilation(op.slot), shift[op.slot])
        };
        let y = mat.apply(&x);
        x = y.into_iter().zip(&x).map(|(a, b)| a - c * b).collect();
    }
    vdot(psi, &x)
}

/// Wick's theorem for the four-point functions of `𝒲(φ)𝒯(γ)Ω`, over all
/// 16 creation/annihilation patterns with `samples` random slot choices each.
pub fn verify_wick(space: &FockSpace, qf: &ToyQuasiFree, tol: f64, seed: u64, samples: usize) -> Result<IdentityReport> {
    let psi = qf.state(space)?;
    let est = (space.n_max() as f64).powi(2) * cutoff_weight(space, &psi);
    if est > tol {
        return Err(Error::Truncation { estimate: est, tol, advice: "increase n_max or reduce gamma and phi".into() });
    }
    let shift = doubled_phi(&qf.phi);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for pattern in 0..16u32 {
        for _ in 0..samples {
            let ops: Vec<Ladder> =
                (0..4).map(|b| Ladder { slot: rng.gen_range(0..space.slots()), dagger: pattern >> b & 1 == 1 }).collect();
            let four = correlation(space, &psi, &ops, &shift);
            let two = |i: usize, j: usize| correlation(space, &psi, &[ops[i], ops[j]], &shift);
            let wick = two(0, 1) * two(2, 3) + two(0, 2) * two(1, 3) + two(0, 3) * two(1, 2);
            worst = worst.max((four - wick).norm());
        }
    }
    Ok(IdentityReport::new("wick_four_point", worst, tol, est))
}

/// Which function a ladder operator in a generator term is smeared with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    /// `U_𝐳`.
    U,
    /// `\overline{V_𝐳}`.
    VBar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Point {
    X,
    Y,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Factor {
    pub dagger: bool,
    pub family: Family,
    pub point: Point,
}

const fn cr(family: Family, point: Point) -> Factor {
    Factor { dagger: true, family, point }
}

const fn an(family: Family, point: Point) -> Factor {
    Factor { dagger: false, family, point }
}

/// A normal-ordered monomial with its coefficient in each display.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Term {
    pub coeff: f64,
    /// Coefficient in the commutator form `𝓘̃`.
    pub tilde_coeff: f64,
    pub factors: &'static [Factor],
}

use Family::{VBar, U};
use Point::{X, Y};

/// Quartic terms commuting with `𝒩`; prefactor `1/(2N)`.
pub const I1_TERMS: &[Term] = &[
    Term { coeff: 1.0, tilde_coeff: 0.0, factors: &[cr(U, X), cr(U, Y), an(U, Y), an(U, X)] },
    Term { coeff: 1.0, tilde_coeff: 0.0, factors: &[cr(U, X), cr(VBar, Y), an(VBar, Y), an(U, X)] },
    Term { coeff: 1.0, tilde_coeff: 0.0, factors: &[cr(U, Y), cr(VBar, X), an(VBar, X), an(U, Y)] },
    Term { coeff: 1.0, tilde_coeff: 0.0, factors: &[cr(VBar, X), cr(VBar, Y), an(VBar, Y), an(VBar, X)] },
    Term { coeff: 2.0, tilde_coeff: 0.0, factors: &[cr(U, X), cr(VBar, Y), an(VBar, Y), an(U, X)] },
];

/// Quartic terms not commuting with `𝒩`; prefactor `1/(2N)`, plus h.c.
/// The commutator form has prefactor `−1/N`, minus h.c.
pub const I2_TERMS: &[Term] = &[
    Term { coeff: 1.0, tilde_coeff: 2.0, factors: &[cr(U, X), cr(U, Y), cr(VBar, Y), cr(VBar, X)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, X), cr(U, Y), cr(VBar, Y), an(U, X)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, X), cr(VBar, Y), cr(VBar, X), an(VBar, Y)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, X), cr(U, Y), cr(VBar, X), an(U, Y)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, Y), cr(VBar, Y), cr(VBar, X), an(VBar, X)] },
];

/// Cubic terms, each multiplied by `𝛟(𝐱)`; prefactor `1/N`, plus h.c.
/// The commutator form has prefactor `−1/N`, minus h.c.
pub const I3_TERMS: &[Term] = &[
    Term { coeff: 1.0, tilde_coeff: 3.0, factors: &[cr(U, X), cr(U, Y), cr(VBar, Y)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, X), cr(U, Y), an(U, Y)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, X), cr(VBar, Y), an(VBar, Y)] },
    Term { coeff: 1.0, tilde_coeff: 1.0, factors: &[cr(U, Y), cr(VBar, Y), an(VBar, X)] },
    Term { coeff: 1.0, tilde_coeff: -1.0, factors: &[cr(VBar, Y), an(VBar, X), an(VBar, Y)] },
    Term { coeff: 1.0, tilde_coeff: -1.0, factors: &[cr(U, X), an(VBar, Y), an(U, Y)] },
    Term { coeff: 1.0, tilde_coeff: -1.0, factors: &[cr(U, Y), an(VBar, X), an(U, Y)] },
    Term { coeff: 1.0, tilde_coeff: -3.0, factors: &[an(VBar, X), an(VBar, Y), an(U, Y)] },
];

/// Inputs of the generator on `m` modes per sector.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorInput {
    /// `U` on the doubled one-particle space, `2m × 2m`.
    pub u: CMat,
    /// `V`, `2m × 2m`.
    pub v: CMat,
    /// Condensate, `m` entries.
    pub phi: Vec<C>,
    /// Real symmetric `m × m` interaction `v(x, y)`.
    pub interaction: DMatrix<f64>,
    pub n_scale: f64,
    /// One-body operator playing `−Δ` in the constant term, `m × m`.
    pub kinetic: CMat,
    /// Keep only `𝒩 ≤ level` on the right of every term.
    pub cutoff: Option<f64>,
}

/// Assembled generator pieces and the commutator forms `𝓘̃^(2)`, `𝓘̃^(3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorBlocks {
    pub i1: CMat,
    pub i2: CMat,
    pub i3: CMat,
    pub i4: f64,
    pub g: CMat,
    pub i2_tilde: CMat,
    pub i3_tilde: CMat,
}

/// `v(𝐱, 𝐲)`: `v(x−y)` on ℓℓ, `−v(x−y)` on rr, zero across sectors.
fn v_bold(inter: &DMatrix<f64>, m: usize, sx: usize, sy: usize) -> f64 {
    match (sx < m, sy < m) {
        (true, true) => inter[(sx, sy)],
        (false, false) => -inter[(sx - m, sy - m)],
        _ => 0.0,
    }
}

fn hermiticity_defect(a: &CMat) -> f64 {
    (a - a.adjoint()).iter().fold(0.0, |w, z| w.max(z.norm()))
}

struct Smeared {
    cu: Vec<SparseOp>,
    au: Vec<SparseOp>,
    cv: Vec<SparseOp>,
    av: Vec<SparseOp>,
}

impl Smeared {
    fn new(space: &FockSpace, u: &CMat, v: &CMat) -> Self {
        let n = space.slots();
        let (mut cu, mut au, mut cv, mut av) = (vec![], vec![], vec![], vec![]);
        for x in 0..n {
            // U_𝐱(𝐲) = U(𝐲, 𝐱)
            let ux: Vec<C> = (0..n).map(|y| u[(y, x)]).collect();
            let vbx: Vec<C> = (0..n).map(|y| v[(y, x)].conj()).collect();
            let a_u = space.annihilator(&ux);
            let a_v = space.annihilator(&vbx);
            cu.push(a_u.adjoint());
            cv.push(a_v.adjoint());
            au.push(a_u);
            av.push(a_v);
        }
        Smeared { cu, au, cv, av }
    }

    fn op(&self, f: Factor, x: usize, y: usize) -> &SparseOp {
        let p = if f.point == Point::X { x } else { y };
        match (f.family, f.dagger) {
            (Family::U, true) => &self.cu[p],
            (Family::U, false) => &self.au[p],
            (Family::VBar, true) => &self.cv[p],
            (Family::VBar, false) => &self.av[p],
        }
    }

    fn product(&self, factors: &[Factor], x: usize, y: usize) -> CMat {
        let (last, rest) = factors.split_last().expect("non-empty term");
        let mut m = self.op(*last, x, y).to_dense();
        for f in rest.iter().rev() {
            m = self.op(*f, x, y).mul_dense(&m);
        }
        m
    }
}

/// Builds `𝓘^(1..4)`, `𝓖 = Σ 𝓘^(i)` and `𝓘̃^(2)`, `𝓘̃^(3)`.
pub fn assemble_generator(space: &FockSpace, input: &GeneratorInput) -> Result<GeneratorBlocks> {
    let m = space.modes();
    let n = space.slots();
    let dim = space.dim();
    if dim > MAX_DENSE_DIM {
        return Err(Error::Budget { what: "dense Fock matrix", size: dim, budget: MAX_DENSE_DIM });
    }
    let shapes_ok = input.u.shape() == (n, n)
        && input.v.shape() == (n, n)
        && input.phi.len() == m
        && input.interaction.shape() == (m, m)
        && input.kinetic.shape() == (m, m);
    if !shapes_ok {
        return Err(invalid("input", format!("blocks must be {n}×{n}, phi and v sized for m = {m}")));
    }
    if !(input.n_scale > 0.0) {
        return Err(invalid("n_scale", "must be positive"));
    }
    let sm = Smeared::new(space, &input.u, &input.v);
    let phi = doubled_phi(&input.phi);
    let mut i1 = CMat::zeros(dim, dim);
    let mut i2 = CMat::zeros(dim, dim);
    let mut i3 = CMat::zeros(dim, dim);
    let mut i2t = CMat::zeros(dim, dim);
    let mut i3t = CMat::zeros(dim, dim);
    let half = 0.5 / input.n_scale;
    let full = 1.0 / input.n_scale;
    for x in 0..n {
        for y in 0..n {
            let vxy = v_bold(&input.interaction, m, x, y);
            if vxy == 0.0 {
                continue;
            }
            for t in I1_TERMS {
                i1 += sm.product(t.factors, x, y) * C::new(half * vxy * t.coeff, 0.0);
            }
            for t in I2_TERMS {
                let p = sm.product(t.factors, x, y);
                i2 += &p * C::new(half * vxy * t.coeff, 0.0);
                i2t += p * C::new(-full * vxy * t.tilde_coeff, 0.0);
            }
            if phi[x] != ZERO {
                for t in I3_TERMS {
                    let p = sm.product(t.factors, x, y) * phi[x];
                    i3 += &p * C::new(full * vxy * t.coeff, 0.0);
                    i3t += p * C::new(-full * vxy * t.tilde_coeff, 0.0);
                }
            }
        }
    }
    if let Some(level) = input.cutoff {
        let keep: Vec<bool> = space.number_operator().iter().map(|&k| k <= level).collect();
        for mat in [&mut i1, &mut i2, &mut i3, &mut i2t, &mut i3t] {
            for (j, &k) in keep.iter().enumerate() {
                if !k {
                    mat.column_mut(j).fill(ZERO);
                }
            }
        }
    }
    let i2 = &i2 + i2.adjoint();
    let i3 = &i3 + i3.adjoint();
    let i2_tilde = &i2t - i2t.adjoint();
    let i3_tilde = &i3t - i3t.adjoint();

    // tr(V L V*) with L = diag(K, −K), plus the condensate self-energy
    let mut l = CMat::zeros(n, n);
    l.view_mut((0, 0), (m, m)).copy_from(&input.kinetic);
    l.view_mut((m, m), (m, m)).copy_from(&(-&input.kinetic));
    let i4_trace = (&input.v * l * input.v.adjoint()).trace().re;
    let mut i4_self = 0.0;
    for x in 0..n {
        for y in 0..n {
            i4_self += v_bold(&input.interaction, m, x, y) * phi[x].norm_sqr() * phi[y].norm_sqr();
        }
    }
    let i4 = i4_trace + half * i4_self;

    for (name, mat) in [("I1", &i1), ("I2", &i2), ("I3", &i3)] {
        let d = hermiticity_defect(mat);
        if d > HERMITICITY_TOL {
            return Err(Error::NotHermitian { which: name.into(), defect: d });
        }
    }
    let g = &i1 + &i2 + &i3 + CMat::identity(dim, dim) * C::new(i4, 0.0);
    Ok(GeneratorBlocks { i1, i2, i3, i4, g, i2_tilde, i3_tilde })
}

/// `[𝓖, 𝒩]` against `𝓘̃^(2) + 𝓘̃^(3)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub max_deviation: f64,
    /// Row and column of the worst entry.
    pub worst_entry: (usize, usize),
    /// `[𝓖, 𝒩]` is bitwise unchanged when the `+5` is dropped.
    pub constant_insensitive: bool,
    pub tolerance: f64,
    pub pass: bool,
}

/// `[A, D]` for diagonal `D`.
fn commutator_diag(a: &CMat, d: &[f64]) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * C::new(d[j] - d[i], 0.0))
}

pub fn verify_commutator_identity(space: &FockSpace, blocks: &GeneratorBlocks, tol: f64) -> CommutatorReport {
    let number = space.number_operator();
    let bare: Vec<f64> = (0..space.dim()).map(|i| space.total(i) as f64).collect();
    let lhs = commutator_diag(&blocks.g, &number);
    let constant_insensitive = lhs == commutator_diag(&blocks.g, &bare);
    let diff = lhs - &blocks.i2_tilde - &blocks.i3_tilde;
    let (mut worst, mut at) = (0.0, (0, 0));
    for j in 0..diff.ncols() {
        for i in 0..diff.nrows() {
            let d = diff[(i, j)].norm();
            if d > worst {
                worst = d;
                at = (i, j);
            }
        }
    }
    CommutatorReport { max_deviation: worst, worst_entry: at, constant_insensitive, tolerance: tol, pass: worst <= tol }
}

/// `ν = exp(i𝒮H)` with `H = [[A, B], [B̄, Ā]]`, `A` Hermitian and `B`
/// symmetric with entries of size `scale`. Returns `(U, V)` from
/// `ν = [[U, V̄], [V, Ū]]`.
pub fn random_symplectic(n: usize, scale: f64, rng: &mut impl Rng) -> (CMat, CMat) {
    let mut draw = || C::new(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
    let mut a = CMat::from_fn(n, n, |_, _| draw());
    a = (&a + a.adjoint()) * C::new(0.5, 0.0);
    let mut b = CMat::from_fn(n, n, |_, _| draw());
    b = (&b + b.transpose()) * C::new(0.5, 0.0);
    let mut x = CMat::zeros(2 * n, 2 * n);
    let i = C::new(0.0, 1.0);
    x.view_mut((0, 0), (n, n)).copy_from(&(&a * i));
    x.view_mut((0, n), (n, n)).copy_from(&(&b * i));
    x.view_mut((n, 0), (n, n)).copy_from(&(b.map(|z| z.conj()) * (-i)));
    x.view_mut((n, n), (n, n)).copy_from(&(a.map(|z| z.conj()) * (-i)));
    let nu = x.exp();
    (nu.view((0, 0), (n, n)).into_owned(), nu.view((n, 0), (n, n)).into_owned())
}

/// `‖ν*𝒮ν − 𝒮‖_max` for `ν = [[U, V̄], [V, Ū]]`.
pub fn symplectic_defect(u: &CMat, v: &CMat) -> f64 {
    let n = u.nrows();
    let mut nu = CMat::zeros(2 * n, 2 * n);
    nu.view_mut((0, 0), (n, n)).copy_from(u);
    nu.view_mut((0, n), (n, n)).copy_from(&v.map(|z| z.conj()));
    nu.view_mut((n, 0), (n, n)).copy_from(v);
    nu.view_mut((n, n), (n, n)).copy_from(&u.map(|z| z.conj()));
    let s = CMat::from_diagonal(&CVec::from_iterator(2 * n, (0..2 * n).map(|k| C::new(if k < n { 1.0 } else { -1.0 }, 0.0))));
    let d = nu.adjoint() * &s * &nu - &s;
    d.iter().fold(0.0, |w, z| w.max(z.norm()))
}

/// Random generator inputs on `m` modes: symplectic `(U, V)`, condensate,
/// symmetric interaction and kinetic matrix.
pub fn random_generator_input(m: usize, n_scale: f64, seed: u64) -> GeneratorInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, v) = random_symplectic(2 * m, 0.3, &mut rng);
    let phi = (0..m).map(|_| C::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6))).collect();
    let mut inter = DMatrix::from_fn(m, m, |_, _| rng.gen_range(0.0..1.0));
    inter = (&inter + inter.transpose()) * 0.5;
    let mut kin = CMat::from_fn(m, m, |_, _| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    kin = (&kin + kin.adjoint()) * C::new(0.5, 0.0);
    GeneratorInput { u, v, phi, interaction: inter, n_scale, kinetic: kin, cutoff: None }
}
