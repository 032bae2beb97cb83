//! Index sets Z_ν, their index tables, the partial order, and the
//! multinomial invariants of a weight.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{QkzError, Result};
use crate::scalar::Real;

pub const MAX_SITES: usize = 20;

/// ν₀ = N ≥ ν₁ ≥ … ≥ ν_{n−1} (ν_n = 0 implicit).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct NuVector {
    nu: Vec<usize>,
}

impl NuVector {
    /// Builds ν from N and the tail (ν₁, …, ν_{n−1}); n = tail.len() + 1.
    pub fn new(big_n: usize, tail: &[usize]) -> Result<Self> {
        if big_n == 0 || big_n > MAX_SITES {
            return Err(QkzError::InvalidNu(format!("N must lie in 1..={MAX_SITES}, got {big_n}")));
        }
        if tail.is_empty() {
            return Err(QkzError::InvalidNu("n must be at least 2".into()));
        }
        let mut nu = vec![big_n];
        nu.extend_from_slice(tail);
        for w in nu.windows(2) {
            if w[1] > w[0] {
                return Err(QkzError::InvalidNu(format!("not non-increasing: {nu:?}")));
            }
        }
        Ok(Self { nu })
    }

    pub fn from_lambda(lw: &LambdaWeights) -> Result<Self> {
        let n = lw.lambda.len();
        let big_n: usize = lw.lambda.iter().sum();
        let tail: Vec<usize> = (1..n).map(|j| lw.lambda[j..].iter().sum()).collect();
        Self::new(big_n, &tail)
    }

    pub fn n(&self) -> usize {
        self.nu.len()
    }

    pub fn sites(&self) -> usize {
        self.nu[0]
    }

    /// ν_j for 0 ≤ j ≤ n (ν_n = 0).
    pub fn get(&self, j: usize) -> usize {
        self.nu.get(j).copied().unwrap_or(0)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.nu
    }

    pub fn lambda(&self) -> LambdaWeights {
        let n = self.n();
        LambdaWeights {
            lambda: (1..=n).map(|j| self.get(j - 1) - self.get(j)).collect(),
        }
    }

    /// Number of integration variables Σ_{j≥1} ν_j.
    pub fn dimension(&self) -> usize {
        self.nu[1..].iter().sum()
    }

    /// Π_{j≥1} ν_j!.
    pub fn permutation_count(&self) -> u64 {
        self.nu[1..].iter().map(|&k| factorial(k as u64)).product()
    }
}

/// λ_j = ν_{j−1} − ν_j.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct LambdaWeights {
    pub lambda: Vec<usize>,
}

impl LambdaWeights {
    pub fn new(lambda: Vec<usize>) -> Result<Self> {
        if lambda.len() < 2 {
            return Err(QkzError::InvalidNu("need at least two weights".into()));
        }
        let s: usize = lambda.iter().sum();
        if s == 0 || s > MAX_SITES {
            return Err(QkzError::InvalidNu(format!("Σλ must lie in 1..={MAX_SITES}")));
        }
        Ok(Self { lambda })
    }

    pub fn sites(&self) -> usize {
        self.lambda.iter().sum()
    }
}

pub fn factorial(k: u64) -> u64 {
    (1..=k).product()
}

/// Multinomial N!/(k₁!⋯k_n!) with negative parts giving 0.
pub fn multinomial(total: i64, parts: &[i64]) -> u64 {
    if total < 0 || parts.iter().any(|&k| k < 0) || parts.iter().sum::<i64>() != total {
        return 0;
    }
    assert!(total as usize <= MAX_SITES, "multinomial beyond N = {MAX_SITES}");
    let mut acc: u64 = 1;
    let mut placed: u64 = 0;
    for &k in parts {
        for i in 1..=k as u64 {
            placed += 1;
            acc = acc.checked_mul(placed).expect("multinomial overflow") / i;
        }
    }
    acc
}

pub fn binomial(n: i64, k: i64) -> u64 {
    if k < 0 || k > n {
        0
    } else {
        multinomial(n, &[k, n - k])
    }
}

/// An element J of Z_ν with its index tables.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct JTuple {
    entries: Vec<usize>,
    n: usize,
    /// r[j][m] = r_{j,m+1} (1-based site numbers), 0 ≤ j ≤ n−1.
    r: Vec<Vec<usize>>,
    /// mstar[j][m] = m*(J, j, m+1) − 1 for j ≥ 1 (index into level j−1).
    mstar: Vec<Vec<usize>>,
}

impl JTuple {
    pub fn new(entries: Vec<usize>, n: usize) -> Result<Self> {
        if entries.iter().any(|&e| e >= n) {
            return Err(QkzError::InvalidNu(format!("entries of {entries:?} must be < {n}")));
        }
        if entries.is_empty() || entries.len() > MAX_SITES {
            return Err(QkzError::InvalidNu("tuple length out of range".into()));
        }
        let r: Vec<Vec<usize>> = (0..n)
            .map(|j| (1..=entries.len()).filter(|&s| entries[s - 1] >= j).collect())
            .collect();
        let mut mstar = vec![Vec::new()];
        for j in 1..n {
            let row = r[j]
                .iter()
                .map(|site| r[j - 1].iter().position(|s| s == site).expect("nested sets"))
                .collect();
            mstar.push(row);
        }
        Ok(Self { entries, n, r, mstar })
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.entries.len()
    }

    pub fn nu(&self) -> NuVector {
        let tail: Vec<usize> = (1..self.n).map(|j| self.r[j].len()).collect();
        NuVector::new(self.sites(), &tail).expect("valid by construction")
    }

    /// r_{j,m} with 1-based m.
    pub fn r(&self, j: usize, m: usize) -> usize {
        self.r[j][m - 1]
    }

    /// Row of sites at level j, i.e. the ordered set N_j.
    pub fn level_sites(&self, j: usize) -> &[usize] {
        if j < self.n {
            &self.r[j]
        } else {
            &[]
        }
    }

    /// m*(J, j, m) with 1-based m and 1-based result.
    pub fn m_star(&self, j: usize, m: usize) -> usize {
        self.mstar[j][m - 1] + 1
    }

    pub fn with_entries_swapped(&self, k: usize) -> JTuple {
        let mut e = self.entries.clone();
        e.swap(k, k + 1);
        JTuple::new(e, self.n).expect("swap preserves validity")
    }
}

/// All J ∈ Z_ν in lexicographic order.
pub fn enumerate_z(nu: &NuVector) -> Vec<JTuple> {
    let n = nu.n();
    let big_n = nu.sites();
    let mut counts: Vec<usize> = nu.lambda().lambda;
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(big_n);
    fn rec(n: usize, big_n: usize, counts: &mut [usize], cur: &mut Vec<usize>, out: &mut Vec<JTuple>) {
        if cur.len() == big_n {
            out.push(JTuple::new(cur.clone(), n).expect("valid"));
            return;
        }
        for letter in 0..n {
            if counts[letter] > 0 {
                counts[letter] -= 1;
                cur.push(letter);
                rec(n, big_n, counts, cur, out);
                cur.pop();
                counts[letter] += 1;
            }
        }
    }
    rec(n, big_n, &mut counts, &mut cur, &mut out);
    out
}

fn suffix_sums(e: &[usize]) -> Vec<usize> {
    let mut s = vec![0; e.len()];
    let mut acc = 0;
    for i in (0..e.len()).rev() {
        acc += e[i];
        s[i] = acc;
    }
    s
}

/// J ≤ J′ iff every suffix sum of J is bounded by the one of J′.
pub fn partial_order_leq(j: &JTuple, jp: &JTuple) -> Result<bool> {
    if j.n != jp.n || j.nu() != jp.nu() {
        return Err(QkzError::ShapeMismatch("tuples from different index sets".into()));
    }
    let a = suffix_sums(&j.entries);
    let b = suffix_sums(&jp.entries);
    Ok(a.iter().zip(&b).all(|(x, y)| x <= y))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LambdaInvariants {
    pub lambda0: u64,
    pub lambda2: u64,
    pub d: i64,
}

/// Λ⁽⁰⁾, Λ⁽²⁾ and d_ν; panics if the counting identity relating them fails.
pub fn lambda_invariants(lw: &LambdaWeights) -> LambdaInvariants {
    let n = lw.lambda.len();
    let big_n = lw.sites() as i64;
    let lam: Vec<i64> = lw.lambda.iter().map(|&x| x as i64).collect();
    let lambda0 = multinomial(big_n, &lam);
    let mut lambda2 = 0;
    for j in 0..n {
        for k in j + 1..n {
            let mut l = lam.clone();
            l[j] -= 1;
            l[k] -= 1;
            lambda2 += multinomial(big_n - 2, &l);
        }
    }
    let nu = NuVector::from_lambda(lw).expect("valid weights");
    let mut d = 0i64;
    for j in 1..n {
        let (a, b) = (nu.get(j) as i64, nu.get(j - 1) as i64);
        d += 2 * a * b + a * a - 3 * a;
    }
    let sq: i64 = lam.iter().map(|x| x * x).sum();
    assert_eq!(
        (big_n * big_n - sq) as u64 * lambda0,
        2 * (big_n * (big_n - 1)) as u64 * lambda2,
        "counting identity between Λ0 and Λ2"
    );
    LambdaInvariants { lambda0, lambda2, d }
}

/// Σ_j multinomial(N−1; λ with λ_j−1) μ_j.
pub fn shifted_mu_sum<T: Real>(lw: &LambdaWeights, mu: &[T]) -> T {
    let big_n = lw.sites() as i64;
    let lam: Vec<i64> = lw.lambda.iter().map(|&x| x as i64).collect();
    let mut s = T::zero();
    for j in 0..lam.len() {
        let mut l = lam.clone();
        l[j] -= 1;
        s += T::from_u64(multinomial(big_n - 1, &l)).unwrap() * mu[j];
    }
    s
}

/// (ν⁺, ν⁻) = (#{s ∈ N_j : r < s}, #{s ∈ N_j : s < r}); empty for j ≥ n.
pub fn nu_pm(jt: &JTuple, j: usize, r: usize) -> (usize, usize) {
    let sites = jt.level_sites(j);
    (
        sites.iter().filter(|&&s| r < s).count(),
        sites.iter().filter(|&&s| s < r).count(),
    )
}

/// μ̃^J_{·,r}: the n shifted parameters feeding G_{J_r}.
pub fn mu_tilde<T: Real>(jt: &JTuple, r: usize, mu: &[T], rho: T, lam: T) -> Vec<T> {
    let n = jt.n();
    let step = T::PI() / T::from_usize(n).unwrap();
    (1..=n)
        .map(|j| {
            let (p1, m1) = nu_pm(jt, j, r);
            let (p0, m0) = nu_pm(jt, j - 1, r);
            let c = (p1 as i64 - m1 as i64) - (p0 as i64 - m0 as i64);
            let mut v = mu[j - 1] + step * T::from_i64(c).unwrap();
            if j == jt.entries()[r - 1] + 1 {
                v -= (rho + lam) * T::cst(0.5);
            }
            v
        })
        .collect()
}

/// (M⁺, M⁻) = (#{r : J_r = j, k < r}, #{r : J_r = j, r < k}).
pub fn m_pm(jt: &JTuple, j: usize, k: usize) -> (usize, usize) {
    let e = jt.entries();
    let plus = (k + 1..=e.len()).filter(|&r| e[r - 1] == j).count();
    let minus = (1..k).filter(|&r| e[r - 1] == j).count();
    (plus, minus)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MultTable {
    pub rp: usize,
    pub r: usize,
    /// Brute-force multiplicities mult(a).
    pub mult: BTreeMap<i64, u64>,
    /// a ↦ (mult(a) − mult(a+1) by enumeration, closed-form value).
    pub differences: BTreeMap<i64, (i64, i64)>,
}

impl MultTable {
    pub fn agrees(&self) -> bool {
        self.differences.values().all(|(a, b)| a == b)
    }
}

/// Closed form of mult(a) − mult(a+1). The first range uses the upper
/// bound min{−1, λ_{r′} − λ_r}; see the unit test below for why.
pub fn mult_difference_closed(a: i64, rp: usize, r: usize, lw: &LambdaWeights) -> i64 {
    mult_difference_with_bound(a, rp, r, lw, false)
}

fn mult_difference_with_bound(a: i64, rp: usize, r: usize, lw: &LambdaWeights, literal: bool) -> i64 {
    let inv = lambda_invariants(lw);
    let lr = lw.lambda[r - 1] as i64;
    let lrp = lw.lambda[rp - 1] as i64;
    let s = lr + lrp;
    let base = binomial(s, lr) as i64;
    let l0 = inv.lambda0 as i64;
    let upper1 = if literal { (-1).min(lr - lrp) } else { (-1).min(lrp - lr) };
    if -lr <= a && a <= upper1 {
        -(l0 * binomial(s, lr + a) as i64) / base
    } else if (0.max(lrp - lr + 1)..=lrp).contains(&a) {
        (l0 * binomial(s, lrp - a) as i64) / base
    } else {
        0
    }
}

pub fn mult_table(rp: usize, r: usize, lw: &LambdaWeights) -> Result<MultTable> {
    let n = lw.lambda.len();
    if !(1 <= rp && rp < r && r <= n) {
        return Err(QkzError::ShapeMismatch(format!("need 1 ≤ r′ < r ≤ {n}")));
    }
    let nu = NuVector::from_lambda(lw)?;
    let mut mult: BTreeMap<i64, u64> = BTreeMap::new();
    for jt in enumerate_z(&nu) {
        for k in 1..=jt.sites() {
            if jt.entries()[k - 1] + 1 == r {
                let a = m_pm(&jt, rp - 1, k).1 as i64 - m_pm(&jt, r - 1, k).1 as i64;
                *mult.entry(a).or_default() += 1;
            }
        }
    }
    let big_n = nu.sites() as i64;
    let get = |a: i64| mult.get(&a).copied().unwrap_or(0) as i64;
    let differences = (-big_n - 2..=big_n + 2)
        .map(|a| (a, (get(a) - get(a + 1), mult_difference_closed(a, rp, r, lw))))
        .collect();
    Ok(MultTable { rp, r, mult, differences })
}

/// P_J = exp(2π²/(ρλn) Σ_{r<s}(1−δ_{J_r,J_s})(β_s−β_r) − (2π/ρλ) Σ_r μ_{J_r+1} β_r), as a logarithm.
pub fn log_p_j_factor<T: Real>(jt: &JTuple, beta: &[T], mu: &[T], rho: T, lam: T) -> T {
    let e = jt.entries();
    let n = T::from_usize(jt.n()).unwrap();
    let pi = T::PI();
    let mut pair = T::zero();
    for r in 0..e.len() {
        for s in r + 1..e.len() {
            if e[r] != e[s] {
                pair += beta[s] - beta[r];
            }
        }
    }
    let lin: T = (0..e.len()).map(|r| mu[e[r]] * beta[r]).sum();
    T::cst(2.0) * pi * pi / (rho * lam * n) * pair - T::cst(2.0) * pi / (rho * lam) * lin
}

pub fn p_j_factor<T: Real>(jt: &JTuple, beta: &[T], mu: &[T], rho: T, lam: T) -> T {
    log_p_j_factor(jt, beta, mu, rho, lam).exp()
}

/// Σ_{j≥1}{ν_j(ν_{j−1}−1) − ν_j(ν_j−1)}, the exponent in the diagonal-limit phase.
pub fn diagonal_phase_count(nu: &NuVector) -> i64 {
    (1..nu.n())
        .map(|j| {
            let (a, b) = (nu.get(j) as i64, nu.get(j - 1) as i64);
            a * (b - 1) - a * (a - 1)
        })
        .sum()
}

/// Enumerates all valid ν for given n and N.
pub fn all_nu(n: usize, big_n: usize) -> Vec<NuVector> {
    let mut out = Vec::new();
    let mut tail = vec![0usize; n - 1];
    fn rec(pos: usize, bound: usize, tail: &mut Vec<usize>, big_n: usize, out: &mut Vec<NuVector>) {
        if pos == tail.len() {
            out.push(NuVector::new(big_n, tail).unwrap());
            return;
        }
        for v in 0..=bound {
            tail[pos] = v;
            rec(pos + 1, v, tail, big_n, out);
        }
    }
    rec(0, big_n, &mut tail, big_n, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jt(e: &[usize], n: usize) -> JTuple {
        JTuple::new(e.to_vec(), n).unwrap()
    }

    #[test]
    fn enumeration_small_cases() {
        let z = enumerate_z(&NuVector::new(2, &[1]).unwrap());
        let e: Vec<_> = z.iter().map(|j| j.entries().to_vec()).collect();
        assert_eq!(e, vec![vec![0, 1], vec![1, 0]]);
        let z = enumerate_z(&NuVector::new(2, &[2, 1]).unwrap());
        let e: Vec<_> = z.iter().map(|j| j.entries().to_vec()).collect();
        assert_eq!(e, vec![vec![1, 2], vec![2, 1]]);
        let z = enumerate_z(&NuVector::new(2, &[1, 1]).unwrap());
        let e: Vec<_> = z.iter().map(|j| j.entries().to_vec()).collect();
        assert_eq!(e, vec![vec![0, 2], vec![2, 0]]);
        assert_eq!(enumerate_z(&NuVector::new(4, &[2]).unwrap()).len(), 6);
    }

    #[test]
    fn invalid_nu() {
        assert!(NuVector::new(2, &[1, 2]).is_err());
        assert!(NuVector::new(2, &[3]).is_err());
    }

    #[test]
    fn index_tables() {
        let j = jt(&[2, 0, 1], 3);
        assert_eq!(j.level_sites(0), &[1, 2, 3]);
        assert_eq!(j.level_sites(1), &[1, 3]);
        assert_eq!(j.level_sites(2), &[1]);
        assert_eq!(j.m_star(1, 2), 3);
        assert_eq!(j.m_star(2, 1), 1);
    }

    #[test]
    fn partial_order_examples() {
        assert!(partial_order_leq(&jt(&[1, 0], 2), &jt(&[0, 1], 2)).unwrap());
        assert!(!partial_order_leq(&jt(&[0, 1], 2), &jt(&[1, 0], 2)).unwrap());
        assert!(partial_order_leq(&jt(&[2, 1], 3), &jt(&[1, 2], 3)).unwrap());
        assert!(partial_order_leq(&jt(&[1, 0], 2), &jt(&[1, 1], 2)).is_err());
    }

    #[test]
    fn invariants_examples() {
        let i = lambda_invariants(&LambdaWeights::new(vec![1, 1]).unwrap());
        assert_eq!((i.lambda0, i.lambda2, i.d), (2, 1, 2));
        let i = lambda_invariants(&LambdaWeights::new(vec![3, 0, 0]).unwrap());
        assert_eq!((i.lambda0, i.lambda2, i.d), (1, 0, 0));
        let i = lambda_invariants(&LambdaWeights::new(vec![0, 1, 1]).unwrap());
        assert_eq!((i.lambda0, i.lambda2, i.d), (2, 1, 8));
    }

    #[test]
    fn nu_pm_examples() {
        assert_eq!(nu_pm(&jt(&[0, 1], 2), 1, 1), (1, 0));
        assert_eq!(nu_pm(&jt(&[1, 0], 2), 1, 2), (0, 1));
        assert_eq!(nu_pm(&jt(&[1, 0, 1], 2), 0, 2), (1, 1));
    }

    #[test]
    fn m_pm_examples() {
        assert_eq!(m_pm(&jt(&[1, 0], 2), 0, 1), (1, 0));
        assert_eq!(m_pm(&jt(&[1, 0, 0], 2), 0, 3).0, 0);
    }

    #[test]
    fn mu_tilde_single_site() {
        let j = jt(&[0], 2);
        let m: Vec<f64> = mu_tilde(&j, 1, &[0.3, 0.9], 7.3, 9.4);
        assert!((m[0] - (0.3 - 8.35)).abs() < 1e-14);
        assert!((m[1] - 0.9).abs() < 1e-14);
    }

    #[test]
    fn mult_closed_form_matches_enumeration() {
        for n in 2..=3 {
            for big_n in 1..=4 {
                for nu in all_nu(n, big_n) {
                    let lw = nu.lambda();
                    for r in 2..=n {
                        for rp in 1..r {
                            let t = mult_table(rp, r, &lw).unwrap();
                            assert!(t.agrees(), "{lw:?} {rp} {r} {:?}", t.differences);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn literal_first_range_disagrees_with_enumeration() {
        let lw = LambdaWeights::new(vec![0, 2]).unwrap();
        let t = mult_table(1, 2, &lw).unwrap();
        let brute = t.differences[&-1].0;
        assert_eq!(brute, mult_difference_closed(-1, 1, 2, &lw));
        assert_ne!(brute, mult_difference_with_bound(-1, 1, 2, &lw, true));
    }

    #[test]
    fn p_j_single_site() {
        let j = jt(&[1], 2);
        let v = p_j_factor(&j, &[0.7], &[0.3, 0.9], 7.3, 9.4);
        let want = (-2.0 * std::f64::consts::PI / (7.3 * 9.4) * 0.9 * 0.7).exp();
        assert!((v - want).abs() < 1e-15);
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(multinomial(4, &[2, 1, 1]), 12);
        assert_eq!(multinomial(4, &[2, -1, 3]), 0);
        assert_eq!(multinomial(20, &[10, 10]), 184_756);
        assert_eq!(binomial(5, 2), 10);
    }
}
