//! Weight functions g_J, their skew-symmetrizations w_J, the kernel K and
//! the per-permutation integrand terms.

use num_complex::Complex;

use crate::combinatorics::{JTuple, NuVector};
use crate::contours::{Anchor, PoleFamily, PoleSpec};
use crate::error::{QkzError, Result};
use crate::qkz_operators::{r_entry, Params, Step};
use crate::scalar::{im, re, Cx, Real};
use crate::special_functions::DoubleSine;

pub const MAX_PERMUTATIONS: u64 = 10_000;

/// Integration variables γ_{j,m} (j ≥ 1) with the fixed row γ_{0,m} = β_m.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaAssignment<T> {
    /// levels[j−1][m−1] = γ_{j,m}.
    pub levels: Vec<Vec<Cx<T>>>,
    pub beta: Vec<Cx<T>>,
}

impl<T: Real> GammaAssignment<T> {
    pub fn new(nu: &NuVector, levels: Vec<Vec<Cx<T>>>, beta: &[T]) -> Result<Self> {
        if levels.len() + 1 != nu.n() || beta.len() != nu.sites() {
            return Err(QkzError::ShapeMismatch("γ levels or β length do not match ν".into()));
        }
        for (j, row) in levels.iter().enumerate() {
            if row.len() != nu.get(j + 1) {
                return Err(QkzError::ShapeMismatch(format!(
                    "level {} has {} variables, ν requires {}",
                    j + 1,
                    row.len(),
                    nu.get(j + 1)
                )));
            }
        }
        Ok(Self {
            levels,
            beta: beta.iter().map(|&b| re(b)).collect(),
        })
    }

    /// From a flat list ordered level by level.
    pub fn from_flat(nu: &NuVector, flat: &[Cx<T>], beta: &[T]) -> Result<Self> {
        if flat.len() != nu.dimension() {
            return Err(QkzError::ShapeMismatch("flat γ length".into()));
        }
        let mut levels = Vec::new();
        let mut pos = 0;
        for j in 1..nu.n() {
            levels.push(flat[pos..pos + nu.get(j)].to_vec());
            pos += nu.get(j);
        }
        Self::new(nu, levels, beta)
    }

    /// γ_{j,m} with 1-based m; j = 0 gives β_m.
    pub fn get(&self, j: usize, m: usize) -> Cx<T> {
        if j == 0 {
            self.beta[m - 1]
        } else {
            self.levels[j - 1][m - 1]
        }
    }

    pub fn len_at(&self, j: usize) -> usize {
        if j == 0 {
            self.beta.len()
        } else {
            self.levels[j - 1].len()
        }
    }

    /// γ_σ: slot m of level j receives γ_{j,σ_j(m)}.
    pub fn permuted(&self, sigma: &PermTuple) -> Self {
        let levels = self
            .levels
            .iter()
            .zip(&sigma.perms)
            .map(|(row, p)| p.iter().map(|&i| row[i]).collect())
            .collect();
        Self { levels, beta: self.beta.clone() }
    }
}

/// σ = (σ₁, …, σ_{n−1}) with 0-based images.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PermTuple {
    pub perms: Vec<Vec<usize>>,
    pub sign: i32,
}

impl PermTuple {
    pub fn identity(nu: &NuVector) -> Self {
        Self {
            perms: (1..nu.n()).map(|j| (0..nu.get(j)).collect()).collect(),
            sign: 1,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(i, &v)| i == v))
    }

    /// Slot of variable `var` at level j (1-based j), i.e. σ_j⁻¹(var).
    pub fn slot_of(&self, j: usize, var: usize) -> usize {
        self.perms[j - 1].iter().position(|&v| v == var).expect("permutation")
    }
}

fn permutations(k: usize) -> Vec<(Vec<usize>, i32)> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    fn heap(k: usize, cur: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, i32)>) {
        if k <= 1 {
            out.push((cur.clone(), sign_of(cur)));
            return;
        }
        for i in 0..k {
            heap(k - 1, cur, out);
            if k % 2 == 0 {
                cur.swap(i, k - 1);
            } else {
                cur.swap(0, k - 1);
            }
        }
    }
    heap(k, &mut cur, &mut out);
    out.sort();
    out.dedup();
    out
}

fn sign_of(p: &[usize]) -> i32 {
    let mut s = 1;
    for a in 0..p.len() {
        for b in a + 1..p.len() {
            if p[a] > p[b] {
                s = -s;
            }
        }
    }
    s
}

/// S_{ν₁} × ⋯ × S_{ν_{n−1}}, identity first, deterministic order.
pub fn perm_tuples(nu: &NuVector) -> Result<Vec<PermTuple>> {
    let count = nu.permutation_count();
    if count > MAX_PERMUTATIONS {
        return Err(QkzError::PermutationLimit(format!("Πν_j! = {count} exceeds {MAX_PERMUTATIONS}")));
    }
    let mut out = vec![PermTuple { perms: vec![], sign: 1 }];
    for j in 1..nu.n() {
        let ps = permutations(nu.get(j));
        let mut next = Vec::with_capacity(out.len() * ps.len());
        for t in &out {
            for (p, s) in &ps {
                let mut perms = t.perms.clone();
                perms.push(p.clone());
                next.push(PermTuple { perms, sign: t.sign * s });
            }
        }
        out = next;
    }
    Ok(out)
}

fn check_shape<T: Real>(jt: &JTuple, g: &GammaAssignment<T>) -> Result<()> {
    if g.levels.len() + 1 != jt.n() || g.beta.len() != jt.sites() {
        return Err(QkzError::ShapeMismatch("γ assignment does not fit J".into()));
    }
    for j in 1..jt.n() {
        if g.len_at(j) != jt.level_sites(j).len() {
            return Err(QkzError::ShapeMismatch(format!("level {j} size differs from ν_j of J")));
        }
    }
    Ok(())
}

/// g_J^{(step)} at γ (slots in the given order).
pub fn eval_g<T: Real>(jt: &JTuple, g: &GammaAssignment<T>, step: T) -> Result<Cx<T>> {
    check_shape(jt, g)?;
    let n = jt.n();
    let s = T::PI() / step;
    let pin = im(T::PI() / T::from_usize(n).unwrap());
    let mut val = re(T::one());
    for j in 1..n {
        let nj = g.len_at(j);
        for m in 1..=nj {
            for mp in m + 1..=nj {
                val = val * ((g.get(j, mp) - g.get(j, m) - pin * T::cst(2.0)) * s).sinh();
            }
        }
        for m in 1..=nj {
            let r = jt.r(j, m);
            let ms = jt.m_star(j, m);
            val = val * (-(g.get(j, m) - g.get(j - 1, ms)) * s).exp();
            for mp in 1..=g.len_at(j - 1) {
                let rp = jt.r(j - 1, mp);
                if rp < r {
                    val = val * ((g.get(j, m) - g.get(j - 1, mp) + pin) * s).sinh();
                } else if r < rp {
                    val = val * ((g.get(j, m) - g.get(j - 1, mp) - pin) * s).sinh();
                }
            }
        }
    }
    Ok(val)
}

/// w_J^{(step)} = Skew_{n−1}∘⋯∘Skew_1 g_J.
pub fn eval_w<T: Real>(jt: &JTuple, g: &GammaAssignment<T>, step: T) -> Result<Cx<T>> {
    check_shape(jt, g)?;
    let mut acc = re(T::zero());
    for sigma in perm_tuples(&jt.nu())? {
        let v = eval_g(jt, &g.permuted(&sigma), step)?;
        acc = acc + v * T::from_i32(sigma.sign).unwrap();
    }
    Ok(acc)
}

/// log K(γ): exponential prefactor (μ₀ = 0) plus log φ and log ψ factors.
pub fn log_kernel<T: Real>(g: &GammaAssignment<T>, params: &Params<T>, ds: &DoubleSine<T>) -> Result<Cx<T>> {
    let n = params.n;
    let c = params.coupling();
    let mut acc = re(T::zero());
    for j in 0..n {
        let lo = if j == 0 { T::zero() } else { params.mu[j - 1] };
        let d = params.mu[j] - lo;
        for m in 1..=g.len_at(j) {
            acc = acc + g.get(j, m) * (c * d);
        }
    }
    for j in 1..n {
        for m in 1..=g.len_at(j) {
            for mp in 1..=g.len_at(j - 1) {
                acc = acc + ds.log_phi(g.get(j, m) - g.get(j - 1, mp), n)?;
            }
            for mp in m + 1..=g.len_at(j) {
                acc = acc + ds.log_psi(g.get(j, m) - g.get(j, mp), n)?;
            }
        }
    }
    Ok(acc)
}

pub fn eval_kernel<T: Real>(g: &GammaAssignment<T>, params: &Params<T>) -> Result<Cx<T>> {
    Ok(log_kernel(g, params, &params.double_sine())?.exp())
}

/// F_{J,J′,σ,σ′}(γ) = K(γ)·g_J^{(ρ)}(γ_σ)·g_{J′}^{(λ)}(γ_{σ′}).
pub fn eval_term<T: Real>(
    jt: &JTuple,
    jp: &JTuple,
    sigma: &PermTuple,
    sigmap: &PermTuple,
    g: &GammaAssignment<T>,
    params: &Params<T>,
) -> Result<Cx<T>> {
    let k = eval_kernel(g, params)?;
    Ok(k * eval_g(jt, &g.permuted(sigma), params.rho)? * eval_g(jp, &g.permuted(sigmap), params.lambda)?)
}

/// One factor of a term, attached to the latest variable it involves
/// (the owner, written x below).
#[derive(Clone, Debug, PartialEq)]
enum Factor<T> {
    /// exp(a·x + b·y).
    Exp { a: Cx<T>, other: Option<(Anchor, Cx<T>)> },
    /// sinh(scale·(x − y + shift)).
    Sinh { scale: T, other: Anchor, shift: Cx<T> },
    /// φ(x − y).
    Phi { other: Anchor },
    /// ψ(x − y).
    Psi { other: Anchor },
}

/// F_{J,J′,σ,σ′} split into per-variable factor groups, variables ordered
/// level by level (γ_{1,1}, …, γ_{1,ν₁}, γ_{2,1}, …).
#[derive(Clone, Debug)]
pub struct TermFactors<T> {
    n: usize,
    offsets: Vec<usize>,
    dim: usize,
    by_owner: Vec<Vec<Factor<T>>>,
    constant: Cx<T>,
    beta: Vec<Cx<T>>,
    ds: DoubleSine<T>,
}

impl<T: Real> TermFactors<T> {
    pub fn new(jt: &JTuple, jp: &JTuple, sigma: &PermTuple, sigmap: &PermTuple, params: &Params<T>) -> Result<Self> {
        let nu = jt.nu();
        if jp.nu() != nu || jt.n() != params.n || jt.sites() != params.sites {
            return Err(QkzError::ShapeMismatch("J, J′ and parameters disagree".into()));
        }
        let n = params.n;
        let mut offsets = vec![0; n];
        for j in 1..n {
            offsets[j] = if j == 1 { 0 } else { offsets[j - 1] + nu.get(j - 1) };
        }
        let dim = nu.dimension();
        let mut t = Self {
            n,
            offsets,
            dim,
            by_owner: vec![Vec::new(); dim],
            constant: re(T::zero()),
            beta: params.beta.iter().map(|&b| re(b)).collect(),
            ds: params.double_sine(),
        };
        let c = params.coupling();
        for b in &t.beta.clone() {
            t.constant = t.constant + *b * (c * params.mu[0]);
        }
        for j in 1..n {
            for m in 0..nu.get(j) {
                let v = t.offsets[j] + m;
                t.by_owner[v].push(Factor::Exp { a: re(c * (params.mu[j] - params.mu[j - 1])), other: None });
                for mp in 0..nu.get(j - 1) {
                    let other = t.anchor(j - 1, mp);
                    t.by_owner[v].push(Factor::Phi { other });
                }
                for mp in 0..m {
                    t.by_owner[v].push(Factor::Psi { other: Anchor::Var(t.offsets[j] + mp) });
                }
            }
        }
        t.add_weight(jt, sigma, params.rho)?;
        t.add_weight(jp, sigmap, params.lambda)?;
        Ok(t)
    }

    fn anchor(&self, j: usize, k: usize) -> Anchor {
        if j == 0 {
            Anchor::Beta(k)
        } else {
            Anchor::Var(self.offsets[j] + k)
        }
    }

    fn slot(&self, sigma: &PermTuple, j: usize, m: usize) -> Anchor {
        if j == 0 {
            Anchor::Beta(m - 1)
        } else {
            Anchor::Var(self.offsets[j] + sigma.perms[j - 1][m - 1])
        }
    }

    fn later(a: Anchor, b: Anchor) -> bool {
        match (a, b) {
            (Anchor::Var(x), Anchor::Var(y)) => x > y,
            (Anchor::Var(_), _) => true,
            _ => false,
        }
    }

    fn owner(a: Anchor) -> usize {
        match a {
            Anchor::Var(v) => v,
            _ => unreachable!("weight factors always involve an integration variable"),
        }
    }

    fn push_sinh(&mut self, a: Anchor, b: Anchor, scale: T, shift: Cx<T>) {
        if Self::later(a, b) {
            self.by_owner[Self::owner(a)].push(Factor::Sinh { scale, other: b, shift });
        } else {
            self.by_owner[Self::owner(b)].push(Factor::Sinh { scale, other: a, shift: -shift });
            self.constant = self.constant + im(T::PI());
        }
    }

    fn push_exp(&mut self, a: Anchor, ca: Cx<T>, b: Anchor, cb: Cx<T>) {
        let (own, co, oth, cot) = if Self::later(a, b) { (a, ca, b, cb) } else { (b, cb, a, ca) };
        let other = match oth {
            Anchor::Beta(m) => {
                self.constant = self.constant + self.beta[m] * cot;
                None
            }
            _ => Some((oth, cot)),
        };
        self.by_owner[Self::owner(own)].push(Factor::Exp { a: co, other });
    }

    fn add_weight(&mut self, jt: &JTuple, sigma: &PermTuple, step: T) -> Result<()> {
        let s = T::PI() / step;
        let pin = im(T::PI() / T::from_usize(self.n).unwrap());
        for j in 1..self.n {
            let nj = jt.level_sites(j).len();
            for m in 1..=nj {
                for mp in m + 1..=nj {
                    let (a, b) = (self.slot(sigma, j, mp), self.slot(sigma, j, m));
                    self.push_sinh(a, b, s, -pin * T::cst(2.0));
                }
            }
            let prev = if j == 1 { self.beta.len() } else { jt.level_sites(j - 1).len() };
            for m in 1..=nj {
                let r = jt.r(j, m);
                let x = self.slot(sigma, j, m);
                let y = self.slot(sigma, j - 1, jt.m_star(j, m));
                self.push_exp(x, re(-s), y, re(s));
                for mp in 1..=prev {
                    let rp = jt.r(j - 1, mp);
                    let y = self.slot(sigma, j - 1, mp);
                    if rp < r {
                        self.push_sinh(x, y, s, pin);
                    } else if r < rp {
                        self.push_sinh(x, y, s, -pin);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// (level j ≥ 1, index m ≥ 1) of flat variable v.
    pub fn level_of(&self, v: usize) -> (usize, usize) {
        let mut j = 1;
        while j + 1 < self.n && self.offsets[j + 1] <= v && self.offsets[j + 1] < self.dim {
            j += 1;
        }
        (j, v - self.offsets[j] + 1)
    }

    fn value(&self, a: Anchor, vals: &[Cx<T>]) -> Cx<T> {
        match a {
            Anchor::Beta(m) => self.beta[m],
            Anchor::Var(u) => vals[u],
            Anchor::Origin => re(T::zero()),
        }
    }

    /// Sum of the logs of the factors owned by variable v; `vals` holds
    /// variables 0..=v.
    pub fn log_factor(&self, v: usize, vals: &[Cx<T>]) -> Result<Cx<T>> {
        let x = vals[v];
        let mut acc = re(T::zero());
        for f in &self.by_owner[v] {
            acc = acc
                + match f {
                    Factor::Exp { a, other } => {
                        *a * x + other.map(|(o, b)| b * self.value(o, vals)).unwrap_or(re(T::zero()))
                    }
                    Factor::Sinh { scale, other, shift } => log_sinh((x - self.value(*other, vals) + *shift) * *scale),
                    Factor::Phi { other } => self.ds.log_phi(x - self.value(*other, vals), self.n)?,
                    Factor::Psi { other } => self.ds.log_psi(x - self.value(*other, vals), self.n)?,
                };
        }
        Ok(acc)
    }

    pub fn log_constant(&self) -> Cx<T> {
        self.constant
    }

    /// Near poles of the factors owned by v, marked inactive when a sinh zero
    /// of the weights cancels them. `outer` holds variables 0..v.
    pub fn pole_candidates(&self, v: usize, outer: &[Cx<T>]) -> Vec<PoleSpec<T>> {
        let nf = T::from_usize(self.n).unwrap();
        let mut out = Vec::new();
        for f in &self.by_owner[v] {
            let (other, family, base) = match f {
                Factor::Phi { other } => (*other, PoleFamily::Phi, T::PI() / nf),
                Factor::Psi { other } => (*other, PoleFamily::Psi, T::TAU() / nf),
                _ => continue,
            };
            let anchor_value = self.value(other, outer);
            for off in [-base, base] {
                let zeros = self.by_owner[v]
                    .iter()
                    .filter(|g| match g {
                        Factor::Sinh { scale, other: o, shift } if *o == other => {
                            let period = T::PI() / *scale;
                            let d = (-shift.im - off) / period;
                            shift.re == T::zero() && (d - d.round()).abs() < T::cst(1e-9)
                        }
                        _ => false,
                    })
                    .count();
                out.push(PoleSpec::near(other, family, anchor_value, off, zeros == 0));
            }
        }
        out
    }
}

/// log sinh z without overflow.
pub fn log_sinh<T: Real>(z: Cx<T>) -> Cx<T> {
    let (w, extra) = if z.re >= T::zero() { (z, re(T::zero())) } else { (-z, im(T::PI())) };
    let e = (w * (-T::cst(2.0))).exp();
    let one_minus = if (w * T::cst(2.0)).norm() < T::cst(1e-3) {
        let u = w * T::cst(2.0);
        u * (re(T::one()) - u * T::cst(0.5) + u * u / T::cst(6.0))
    } else {
        re(T::one()) - e
    };
    w + one_minus.ln() - re(T::LN_2()) + extra
}

/// Residual of the exchange relation for sites (k, k+1), k 1-based:
/// w_{…J_{k+1},J_k…}(…β_{k+1},β_k…) = Σ R(β_k−β_{k+1})[(J′_k,J′_{k+1})→(J_k,J_{k+1})] w_{J′}(β).
pub fn exchange_check<T: Real>(jt: &JTuple, k: usize, g: &GammaAssignment<T>, step: Step, params: &Params<T>) -> Result<T> {
    check_shape(jt, g)?;
    if k == 0 || k >= jt.sites() {
        return Err(QkzError::ShapeMismatch(format!("swap position {k} out of range")));
    }
    let t = params.step_value(step);
    let n = jt.n();
    let e = jt.entries();
    let swapped = jt.with_entries_swapped(k - 1);
    let mut gs = g.clone();
    gs.beta.swap(k - 1, k);
    let lhs = eval_w(&swapped, &gs, t)?;
    let beta = g.beta[k - 1] - g.beta[k];
    let mut rhs = Complex::new(T::zero(), T::zero());
    for a in 0..n {
        for b in 0..n {
            let coeff = r_entry(beta, t, n, (a, b), (e[k - 1], e[k]))?;
            if coeff.norm() == T::zero() {
                continue;
            }
            let mut ent = e.to_vec();
            ent[k - 1] = a;
            ent[k] = b;
            let jp = JTuple::new(ent, n)?;
            rhs = rhs + coeff * eval_w(&jp, g, t)?;
        }
    }
    let scale = lhs.norm().max(rhs.norm()).max(T::cst(1e-30));
    Ok((lhs - rhs).norm() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::enumerate_z;
    use crate::scalar::{cx, rel_err};

    fn params(n: usize, big_n: usize) -> Params<f64> {
        let mu: Vec<f64> = (0..n).map(|j| 0.2 + 4.0 * j as f64).collect();
        let beta: Vec<f64> = (0..big_n).map(|j| -0.5 + 1.1 * j as f64).collect();
        Params::new(n, big_n, 7.3, 9.4, mu, beta).unwrap()
    }

    #[test]
    fn single_variable_weight() {
        let nu = NuVector::new(1, &[1]).unwrap();
        let jt = JTuple::new(vec![1], 2).unwrap();
        let gam = cx(0.3, 0.2);
        let g = GammaAssignment::new(&nu, vec![vec![gam]], &[0.1]).unwrap();
        let v = eval_g(&jt, &g, 7.3).unwrap();
        let want = (-(gam - re(0.1)) * (std::f64::consts::PI / 7.3)).exp();
        assert!(rel_err(v, want) < 1e-15);
    }

    #[test]
    fn hand_value() {
        let nu = NuVector::new(2, &[1]).unwrap();
        let jt = JTuple::new(vec![1, 0], 2).unwrap();
        let gam = cx(0.0, 0.4);
        let g = GammaAssignment::new(&nu, vec![vec![gam]], &[0.0, 1.0]).unwrap();
        let s = std::f64::consts::PI / 7.3;
        let pin = cx(0.0, std::f64::consts::FRAC_PI_2);
        let want = (-(gam - re(0.0)) * s).exp() * ((gam - re(1.0) - pin) * s).sinh();
        assert!(rel_err(eval_g(&jt, &g, 7.3).unwrap(), want) < 1e-15);
    }

    #[test]
    fn cancellation_zero() {
        let nu = NuVector::new(2, &[1]).unwrap();
        let jt = JTuple::new(vec![0, 1], 2).unwrap();
        let pin = std::f64::consts::FRAC_PI_2;
        let g = GammaAssignment::new(&nu, vec![vec![cx(0.0, -pin)]], &[0.0, 1.0]).unwrap();
        assert!(eval_g(&jt, &g, 7.3).unwrap().norm() < 1e-15);
    }

    #[test]
    fn antisymmetry_and_diagonal() {
        let nu = NuVector::new(2, &[2]).unwrap();
        let jt = JTuple::new(vec![1, 1], 2).unwrap();
        let a = GammaAssignment::new(&nu, vec![vec![cx(0.3, 0.1), cx(-0.7, 0.2)]], &[0.0, 1.0]).unwrap();
        let b = GammaAssignment::new(&nu, vec![vec![cx(-0.7, 0.2), cx(0.3, 0.1)]], &[0.0, 1.0]).unwrap();
        let wa = eval_w(&jt, &a, 7.3).unwrap();
        let wb = eval_w(&jt, &b, 7.3).unwrap();
        assert!(rel_err(wa, -wb) < 1e-14);
        let d = GammaAssignment::new(&nu, vec![vec![cx(0.3, 0.1), cx(0.3, 0.1)]], &[0.0, 1.0]).unwrap();
        assert!(eval_w(&jt, &d, 7.3).unwrap().norm() < 1e-14);
    }

    #[test]
    fn exchange_relation_small() {
        let p = params(3, 2);
        let nu = NuVector::new(2, &[1, 1]).unwrap();
        for jt in enumerate_z(&nu) {
            let g = GammaAssignment::new(&nu, vec![vec![cx(0.3, 0.1)], vec![cx(-0.6, -0.2)]], &p.beta).unwrap();
            for step in [Step::Rho, Step::Lambda] {
                assert!(exchange_check(&jt, 1, &g, step, &p).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn perm_tuple_counts() {
        let nu = NuVector::new(3, &[2, 1]).unwrap();
        let t = perm_tuples(&nu).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].is_identity());
        assert_eq!(t.iter().map(|p| p.sign).sum::<i32>(), 0);
        let nu = NuVector::new(3, &[3]).unwrap();
        assert_eq!(perm_tuples(&nu).unwrap().len(), 6);
    }

    #[test]
    fn term_sum_unfolds_to_product() {
        let p = params(2, 2);
        let nu = NuVector::new(2, &[2]).unwrap();
        let jt = JTuple::new(vec![1, 1], 2).unwrap();
        let g = GammaAssignment::new(&nu, vec![vec![cx(0.3, 0.05), cx(-0.8, -0.1)]], &p.beta).unwrap();
        let perms = perm_tuples(&nu).unwrap();
        let mut acc = re(0.0);
        for s in &perms {
            for sp in &perms {
                acc = acc + eval_term(&jt, &jt, s, sp, &g, &p).unwrap() * (s.sign * sp.sign) as f64;
            }
        }
        let want = eval_kernel(&g, &p).unwrap() * eval_w(&jt, &g, 7.3).unwrap() * eval_w(&jt, &g, 9.4).unwrap();
        assert!(rel_err(acc, want) < 1e-11);
    }

    #[test]
    fn factor_groups_reassemble_the_term() {
        let p = params(3, 2);
        let nu = NuVector::new(2, &[2, 1]).unwrap();
        let flat = [cx(0.3, 0.05), cx(-0.8, -0.1), cx(0.45, 0.2)];
        let g = GammaAssignment::from_flat(&nu, &flat, &p.beta).unwrap();
        let perms = perm_tuples(&nu).unwrap();
        let zs = enumerate_z(&nu);
        for jt in &zs {
            for jp in &zs {
                for s in &perms {
                    for sp in &perms {
                        let tf = TermFactors::new(jt, jp, s, sp, &p).unwrap();
                        let mut l = tf.log_constant();
                        for v in 0..tf.dim() {
                            l = l + tf.log_factor(v, &flat[..=v]).unwrap();
                        }
                        let want = eval_term(jt, jp, s, sp, &g, &p).unwrap();
                        assert!(rel_err(l.exp(), want) < 1e-11, "{jt:?} {jp:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn cancellation_table_for_one_variable() {
        let p = params(2, 2);
        let nu = NuVector::new(2, &[1]).unwrap();
        let id = PermTuple::identity(&nu);
        let j10 = JTuple::new(vec![1, 0], 2).unwrap();
        let j01 = JTuple::new(vec![0, 1], 2).unwrap();
        let active = |jt: &JTuple, jp: &JTuple| {
            TermFactors::new(jt, jp, &id, &id, &p)
                .unwrap()
                .pole_candidates(0, &[])
                .iter()
                .map(|q| (q.anchor, q.offset > 0.0, q.active))
                .collect::<Vec<_>>()
        };
        // variable at point 1: the +πi/n pole of β₂ is cancelled
        let a = active(&j10, &j10);
        assert!(a.contains(&(Anchor::Beta(1), true, false)));
        assert!(a.contains(&(Anchor::Beta(1), false, true)));
        assert!(a.contains(&(Anchor::Beta(0), false, true)));
        assert!(a.contains(&(Anchor::Beta(0), true, true)));
        // variable at point 2: the −πi/n pole of β₁ is cancelled
        let b = active(&j01, &j01);
        assert!(b.contains(&(Anchor::Beta(0), false, false)));
        // mixed: each weight cancels its own instance
        let c = active(&j10, &j01);
        assert_eq!(c.iter().filter(|x| !x.2).count(), 2);
    }

    #[test]
    fn log_sinh_matches_direct() {
        for z in [cx::<f64>(0.3, 0.2), cx(-2.0, 1.0), cx(1e-5, -1e-5), cx(40.0, 3.0), cx(-700.0, 0.1)] {
            let l = log_sinh(z);
            if z.re.abs() < 300.0 {
                assert!(rel_err(l.exp(), z.sinh()) < 1e-12, "{z}");
            } else {
                assert!((l.re - (z.re.abs() - std::f64::consts::LN_2)).abs() < 1e-12);
            }
        }
    }
}
