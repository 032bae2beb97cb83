//! R-matrices, qKZ operators restricted to weight subspaces, and the
//! closed-form side of the determinant formula.

use num_complex::Complex;
use serde::Serialize;

use crate::combinatorics::{
    diagonal_phase_count, enumerate_z, lambda_invariants, mu_tilde, shifted_mu_sum, JTuple, NuVector,
};
use crate::error::{QkzError, Result};
use crate::linalg::CMatrix;
use crate::scalar::{im, re, Cx, Real};
use crate::special_functions::{DoubleSine, Periods};

/// Global problem data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params<T> {
    pub n: usize,
    pub sites: usize,
    pub rho: T,
    pub lambda: T,
    pub mu: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> Params<T> {
    pub fn new(n: usize, sites: usize, rho: T, lambda: T, mu: Vec<T>, beta: Vec<T>) -> Result<Self> {
        if n < 2 {
            return Err(QkzError::InvalidParams("n must be at least 2".into()));
        }
        if sites == 0 {
            return Err(QkzError::InvalidParams("N must be positive".into()));
        }
        if mu.len() != n || beta.len() != sites {
            return Err(QkzError::InvalidParams(format!(
                "expected {n} μ values and {sites} β values, got {} and {}",
                mu.len(),
                beta.len()
            )));
        }
        Periods::new(rho, lambda)?;
        Ok(Self { n, sites, rho, lambda, mu, beta })
    }

    pub fn periods(&self) -> Periods<T> {
        Periods { omega1: self.rho, omega2: self.lambda }
    }

    pub fn double_sine(&self) -> DoubleSine<T> {
        DoubleSine::new(self.periods())
    }

    pub fn nf(&self) -> T {
        T::from_usize(self.n).unwrap()
    }

    /// q = exp(−2π²i/(ρn)).
    pub fn q(&self) -> Cx<T> {
        im(-T::cst(2.0) * T::PI() * T::PI() / (self.rho * self.nf())).exp()
    }

    /// q′ = exp(−2π²i/(λn)).
    pub fn q_prime(&self) -> Cx<T> {
        im(-T::cst(2.0) * T::PI() * T::PI() / (self.lambda * self.nf())).exp()
    }

    /// 2π/(ρλ).
    pub fn coupling(&self) -> T {
        T::TAU() / (self.rho * self.lambda)
    }

    /// Window for absolute convergence: some ε with ε < (2π/ρλ)(μ_{j+1}−μ_j)
    /// for all j and (2π/ρλ)(μ_n−μ_1) < nε. Returns the admissible ε range.
    pub fn convergence_window(&self) -> Option<(T, T)> {
        let c = self.coupling();
        let gaps: Vec<T> = self.mu.windows(2).map(|w| c * (w[1] - w[0])).collect();
        let lo = c * (self.mu[self.n - 1] - self.mu[0]) / self.nf();
        let hi = gaps.iter().fold(T::infinity(), |m, &g| m.min(g));
        if hi > lo && hi > T::zero() {
            Some((lo.max(T::zero()), hi))
        } else {
            None
        }
    }

    pub fn check_window(&self) -> Result<()> {
        self.convergence_window().map(|_| ()).ok_or_else(|| {
            QkzError::InvalidParams(format!("μ = {:?} violates the convergence window", self.mu))
        })
    }

    pub fn with_beta(&self, beta: Vec<T>) -> Self {
        Self { beta, ..self.clone() }
    }

    pub fn swapped_periods(&self) -> Self {
        Self { rho: self.lambda, lambda: self.rho, ..self.clone() }
    }

    pub fn step_value(&self, s: Step) -> T {
        match s {
            Step::Rho => self.rho,
            Step::Lambda => self.lambda,
        }
    }
}

/// Which period plays the role of the R-matrix step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
pub enum Step {
    Rho,
    Lambda,
}

impl Step {
    pub fn other(self) -> Step {
        match self {
            Step::Rho => Step::Lambda,
            Step::Lambda => Step::Rho,
        }
    }
}

/// R^{lm}_{jk}(β): coefficient of v_j⊗v_k in R(v_l⊗v_m).
pub fn r_entry<T: Real>(
    beta: Cx<T>,
    step: T,
    n: usize,
    input: (usize, usize),
    output: (usize, usize),
) -> Result<Cx<T>> {
    let (l, m) = input;
    let (j, k) = output;
    let one = re(T::one());
    let zero = re(T::zero());
    if l == m {
        return Ok(if (j, k) == (l, m) { one } else { zero });
    }
    let s = T::PI() / step;
    let tpn = T::TAU() / T::from_usize(n).unwrap();
    let den = ((beta - im(tpn)) * s).sinh();
    if den.norm() <= T::epsilon() * T::cst(16.0) {
        return Err(QkzError::DegenerateSpectral(format!(
            "R-matrix denominator vanishes at β = {beta}"
        )));
    }
    if (j, k) == (l, m) {
        return Ok((beta * s).sinh() / den);
    }
    if (j, k) != (m, l) {
        return Ok(zero);
    }
    let c = im(T::cst(2.0) * T::PI() * T::PI() / (step * T::from_usize(n).unwrap())).sinh();
    let e = if l < m { (beta * s).exp() } else { (-beta * s).exp() };
    Ok(-e * c / den)
}

/// Dense n²×n² matrix of R(β), row (j,k), column (l,m), index j·n+k.
pub fn r_matrix<T: Real>(beta: Cx<T>, step: T, n: usize) -> Result<CMatrix<T>> {
    let mut m = CMatrix::zeros(n * n, n * n);
    for l in 0..n {
        for mm in 0..n {
            for j in 0..n {
                for k in 0..n {
                    m[(j * n + k, l * n + mm)] = r_entry(beta, step, n, (l, mm), (j, k))?;
                }
            }
        }
    }
    Ok(m)
}

/// Operator on a span of basis tensors v_J.
#[derive(Clone, Debug)]
pub struct TensorOperator<T> {
    pub basis: Vec<Vec<usize>>,
    pub matrix: CMatrix<T>,
}

impl<T: Real> TensorOperator<T> {
    pub fn det(&self) -> Cx<T> {
        self.matrix.det()
    }

    /// Restriction to the listed basis vectors.
    pub fn restrict(&self, sub: &[Vec<usize>]) -> TensorOperator<T> {
        let idx: Vec<usize> = sub
            .iter()
            .map(|v| self.basis.iter().position(|b| b == v).expect("basis vector"))
            .collect();
        let mut m = CMatrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m[(a, b)] = self.matrix[(i, j)];
            }
        }
        TensorOperator { basis: sub.to_vec(), matrix: m }
    }

    /// Largest entry mapping the sub-basis outside itself.
    pub fn leakage(&self, sub: &[Vec<usize>]) -> T {
        let mut worst = T::zero();
        for (j, bj) in self.basis.iter().enumerate() {
            if !sub.contains(bj) {
                continue;
            }
            for (i, bi) in self.basis.iter().enumerate() {
                if !sub.contains(bi) {
                    worst = worst.max(self.matrix[(i, j)].norm());
                }
            }
        }
        worst
    }
}

fn site_r_operator<T: Real>(
    basis: &[Vec<usize>],
    a: usize,
    b: usize,
    beta: Cx<T>,
    step: T,
    n: usize,
) -> Result<CMatrix<T>> {
    let mut m = CMatrix::zeros(basis.len(), basis.len());
    for (col, v) in basis.iter().enumerate() {
        for j in 0..n {
            for k in 0..n {
                let c = r_entry(beta, step, n, (v[a], v[b]), (j, k))?;
                if c.norm() == T::zero() {
                    continue;
                }
                let mut w = v.clone();
                w[a] = j;
                w[b] = k;
                if let Some(row) = basis.iter().position(|x| *x == w) {
                    m[(row, col)] = m[(row, col)] + c;
                }
            }
        }
    }
    Ok(m)
}

/// All n^N basis tensors in lexicographic order.
pub fn full_basis(n: usize, sites: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..sites {
        let mut next = Vec::new();
        for v in &out {
            for l in 0..n {
                let mut w = v.clone();
                w.push(l);
                next.push(w);
            }
        }
        out = next;
    }
    out
}

/// K_m for site m (1-based) on the given basis:
/// R_{m,m−1}(β_m−β_{m−1}−s i)⋯R_{m,1}(β_m−β_1−s i) D_m(−μ̄/t) R_{m,N}(β_m−β_N)⋯R_{m,m+1}(β_m−β_{m+1}),
/// with t the step period and s the other one.
pub fn k_operator_on<T: Real>(
    basis: &[Vec<usize>],
    m: usize,
    params: &Params<T>,
    step: Step,
) -> Result<TensorOperator<T>> {
    let n = params.n;
    let big_n = params.sites;
    if m == 0 || m > big_n {
        return Err(QkzError::ShapeMismatch(format!("site {m} out of 1..={big_n}")));
    }
    let t = params.step_value(step);
    let s = params.step_value(step.other());
    let bm = params.beta[m - 1];
    let mut k = CMatrix::identity(basis.len());
    for mp in (1..m).rev() {
        let arg = Complex::new(bm - params.beta[mp - 1], -s);
        k = k.mul(&site_r_operator(basis, m - 1, mp - 1, arg, t, n)?);
    }
    let mut d = CMatrix::zeros(basis.len(), basis.len());
    for (i, v) in basis.iter().enumerate() {
        d[(i, i)] = im(-T::TAU() * params.mu[v[m - 1]] / t).exp();
    }
    k = k.mul(&d);
    for mp in (m + 1..=big_n).rev() {
        let arg = re(bm - params.beta[mp - 1]);
        k = k.mul(&site_r_operator(basis, m - 1, mp - 1, arg, t, n)?);
    }
    Ok(TensorOperator { basis: basis.to_vec(), matrix: k })
}

/// K_m restricted to the weight subspace of ν, basis in canonical order.
pub fn k_operator<T: Real>(m: usize, params: &Params<T>, nu: &NuVector, step: Step) -> Result<TensorOperator<T>> {
    check_shape(params, nu)?;
    let basis: Vec<Vec<usize>> = enumerate_z(nu).iter().map(|j| j.entries().to_vec()).collect();
    k_operator_on(&basis, m, params, step)
}

fn check_shape<T: Real>(params: &Params<T>, nu: &NuVector) -> Result<()> {
    if nu.n() != params.n || nu.sites() != params.sites {
        return Err(QkzError::ShapeMismatch(format!(
            "ν has (n, N) = ({}, {}), parameters have ({}, {})",
            nu.n(),
            nu.sites(),
            params.n,
            params.sites
        )));
    }
    Ok(())
}

/// Closed form of det K_m on the weight subspace.
pub fn det_k_closed<T: Real>(m: usize, params: &Params<T>, nu: &NuVector, step: Step) -> Result<Cx<T>> {
    check_shape(params, nu)?;
    let lw = nu.lambda();
    let inv = lambda_invariants(&lw);
    let t = params.step_value(step);
    let s = params.step_value(step.other());
    let sc = T::PI() / t;
    let tpn = T::TAU() / params.nf();
    let mut ratio = re(T::one());
    let bm = params.beta[m - 1];
    for mp in 1..=params.sites {
        if mp == m {
            continue;
        }
        let shift = if mp < m { -s } else { T::zero() };
        let b = Complex::new(bm - params.beta[mp - 1], shift);
        let den = ((b - im(tpn)) * sc).sinh();
        if den.norm() == T::zero() {
            return Err(QkzError::DegenerateSpectral(format!("sinh zero at β = {b}")));
        }
        ratio = ratio * ((b + im(tpn)) * sc).sinh() / den;
    }
    let mu_sum = shifted_mu_sum(&lw, &params.mu);
    let pre = im(-T::TAU() * mu_sum / t).exp();
    Ok(pre * ratio.powi(inv.lambda2 as i32))
}

/// log E(β) for a possibly complex β vector.
pub fn log_e_function<T: Real>(
    params: &Params<T>,
    nu: &NuVector,
    beta: &[Cx<T>],
    ds: &DoubleSine<T>,
) -> Result<Cx<T>> {
    check_shape(params, nu)?;
    let lw = nu.lambda();
    let inv = lambda_invariants(&lw);
    let mu_sum = shifted_mu_sum(&lw, &params.mu);
    let bsum = beta.iter().fold(re(T::zero()), |a, &b| a + b);
    let mut acc = bsum * (params.coupling() * mu_sum);
    if inv.lambda2 > 0 {
        let tpn = T::TAU() / params.nf();
        let l2 = T::from_u64(inv.lambda2).unwrap();
        for r in 0..beta.len() {
            for s in r + 1..beta.len() {
                let x = im(T::one()) * (beta[r] - beta[s]);
                acc = acc + (ds.log_s2(x + re(tpn))? - ds.log_s2(x - re(tpn))?) * l2;
            }
        }
    }
    Ok(acc)
}

pub fn e_function<T: Real>(params: &Params<T>, nu: &NuVector) -> Result<Cx<T>> {
    let beta: Vec<Cx<T>> = params.beta.iter().map(|&b| re(b)).collect();
    Ok(log_e_function(params, nu, &beta, &params.double_sine())?.exp())
}

/// log G_k(μ) from the product of closed-form one-point functions.
pub fn log_g_k_closed<T: Real>(mu: &[T], k: usize, n: usize, ds: &DoubleSine<T>) -> Result<Cx<T>> {
    if k == 0 {
        return Ok(re(T::zero()));
    }
    if k + 1 > mu.len() {
        return Err(QkzError::ShapeMismatch(format!("G_{k} needs at least {} μ values", k + 1)));
    }
    let mut acc = re(T::zero());
    for j in 0..k {
        acc = acc + ds.log_h_closed(re(mu[k] - mu[j]), n)?;
    }
    Ok(acc)
}

pub fn g_k_closed<T: Real>(mu: &[T], k: usize, params: &Params<T>) -> Result<Cx<T>> {
    Ok(log_g_k_closed(mu, k, params.n, &params.double_sine())?.exp())
}

/// log of (N²−N−2)(1/ρ+1/λ)(π²i/n)Λ2 − dΛ0 log 2.
fn log_common_prefactor<T: Real>(params: &Params<T>, nu: &NuVector) -> Cx<T> {
    let inv = lambda_invariants(&nu.lambda());
    let big_n = T::from_usize(params.sites).unwrap();
    let ph = (big_n * big_n - big_n - T::cst(2.0))
        * (T::one() / params.rho + T::one() / params.lambda)
        * T::PI()
        * T::PI()
        / params.nf()
        * T::from_u64(inv.lambda2).unwrap();
    let mag = -T::from_i64(inv.d).unwrap() * T::from_u64(inv.lambda0).unwrap() * T::LN_2();
    Complex::new(mag, ph)
}

/// log c from the product of one-point functions over Z.
pub fn log_c_constant<T: Real>(params: &Params<T>, nu: &NuVector, ds: &DoubleSine<T>) -> Result<Cx<T>> {
    check_shape(params, nu)?;
    let mut acc = log_common_prefactor(params, nu);
    for jt in enumerate_z(nu) {
        for r in 1..=params.sites {
            let mt = mu_tilde(&jt, r, &params.mu, params.rho, params.lambda);
            acc = acc + log_g_k_closed(&mt, jt.entries()[r - 1], params.n, ds)?;
        }
    }
    Ok(acc)
}

pub fn c_constant<T: Real>(params: &Params<T>, nu: &NuVector) -> Result<Cx<T>> {
    Ok(log_c_constant(params, nu, &params.double_sine())?.exp())
}

/// log of the full closed-form determinant, written with the double
/// product over pairs of weights.
pub fn log_rhs_theorem<T: Real>(params: &Params<T>, nu: &NuVector, ds: &DoubleSine<T>) -> Result<Cx<T>> {
    check_shape(params, nu)?;
    let lw = nu.lambda();
    let inv = lambda_invariants(&lw);
    let n = params.n;
    let mut acc = log_common_prefactor(params, nu);
    let weight_sum: usize = (1..=n).map(|j| (j - 1) * lw.lambda[j - 1]).sum();
    let pref_pow = T::from_u64(inv.lambda0 * weight_sum as u64).unwrap();
    if weight_sum > 0 {
        acc = acc + ds.log_h_prefactor(n)? * pref_pow;
    }
    let pin = T::PI() / params.nf();
    for r in 1..=n {
        for rp in 1..r {
            let lr = lw.lambda[r - 1] as i64;
            let lrp = lw.lambda[rp - 1] as i64;
            let s = lr + lrp;
            let outer = inv.lambda0 / crate::combinatorics::binomial(s, lr);
            let dm = params.mu[r - 1] - params.mu[rp - 1];
            for a in 0..=(lr - 1).min(lrp) {
                let e = crate::combinatorics::binomial(s, a) * outer;
                let off = pin * T::from_i64(s - 2 * a).unwrap();
                let v = ds.log_s2(re(dm - off))? - ds.log_s2(re(dm + off))?;
                acc = acc + v * T::from_u64(e).unwrap();
            }
        }
    }
    let beta: Vec<Cx<T>> = params.beta.iter().map(|&b| re(b)).collect();
    Ok(acc + log_e_function(params, nu, &beta, ds)?)
}

pub fn rhs_theorem<T: Real>(params: &Params<T>, nu: &NuVector) -> Result<Cx<T>> {
    Ok(log_rhs_theorem(params, nu, &params.double_sine())?.exp())
}

/// log of the limit of P_J·(identity-permutation diagonal term):
/// phase · 2^{−d} · Π_r G_{J_r}(μ̃^J_{·,r}).
pub fn log_diagonal_limit<T: Real>(jt: &JTuple, params: &Params<T>, ds: &DoubleSine<T>) -> Result<Cx<T>> {
    let nu = jt.nu();
    let inv = lambda_invariants(&nu.lambda());
    let ph = (T::one() / params.rho + T::one() / params.lambda) * T::PI() * T::PI() / params.nf()
        * T::from_i64(diagonal_phase_count(&nu)).unwrap();
    let mut acc = Complex::new(-T::from_i64(inv.d).unwrap() * T::LN_2(), ph);
    for r in 1..=params.sites {
        let mt = mu_tilde(jt, r, &params.mu, params.rho, params.lambda);
        acc = acc + log_g_k_closed(&mt, jt.entries()[r - 1], params.n, ds)?;
    }
    Ok(acc)
}
