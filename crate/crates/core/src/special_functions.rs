//! Double sine function S₂(x|ω₁,ω₂) and the kernel factors built from it.
//!
//! Conventions: S₂ has zeros on ω₁Z≤0 + ω₂Z≤0, poles on ω₁Z≥1 + ω₂Z≥1,
//! satisfies S₂(x+ω₁)/S₂(x) = 1/(2 sin(πx/ω₂)) (and the mirror relation),
//! S₂((ω₁+ω₂)/2) = 1 and S₂(x) ≈ 2πx/√(ω₁ω₂) near the origin.
//!
//! Inside the strip 0 < Re x < ω₁+ω₂ the logarithm is computed from
//!
//! log S₂(x) = −∫₀^∞ dt/t [ sinh(at) / (2 sinh ω₁t sinh ω₂t) − a/(2ω₁ω₂t) ],
//! a = ω₁+ω₂−2x,
//!
//! truncated at a finite L with the algebraic tail of the subtracted term
//! restored exactly. Arguments outside the strip are moved into it with the
//! shift relation in the smaller period.

use num_complex::Complex;

use crate::error::{QkzError, Result};
use crate::scalar::{cx, im, re, Cx, KahanSum, Real};

/// Two positive real periods.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Periods<T> {
    pub omega1: T,
    pub omega2: T,
}

impl<T: Real> Periods<T> {
    /// Checked constructor: positive periods whose ratio keeps away from
    /// p/q with p, q ≤ 50.
    pub fn new(omega1: T, omega2: T) -> Result<Self> {
        let p = Self { omega1, omega2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega1 > T::zero() && self.omega2 > T::zero())
            || !self.omega1.is_finite()
            || !self.omega2.is_finite()
        {
            return Err(QkzError::InvalidPeriods(format!(
                "periods must be positive and finite, got ({}, {})",
                self.omega1, self.omega2
            )));
        }
        let ratio = (self.omega1 / self.omega2).to_f64_lossy();
        for q in 1..=50u32 {
            let p = (ratio * q as f64).round();
            if (1.0..=50.0).contains(&p) && (ratio - p / q as f64).abs() <= 1e-6 {
                return Err(QkzError::InvalidPeriods(format!(
                    "period ratio {ratio} is within 1e-6 of {p}/{q}"
                )));
            }
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.omega1 + self.omega2
    }

    pub fn swapped(&self) -> Self {
        Self {
            omega1: self.omega2,
            omega2: self.omega1,
        }
    }

    fn small_large(&self) -> (T, T) {
        if self.omega1 <= self.omega2 {
            (self.omega1, self.omega2)
        } else {
            (self.omega2, self.omega1)
        }
    }

    pub fn pole_tolerance(&self) -> T {
        T::cst(1e-12) * self.sum()
    }
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(m: usize) -> Self {
        let mut nodes = vec![T::zero(); m];
        let mut weights = vec![T::zero(); m];
        let mf = T::from_usize(m).unwrap();
        let half = T::cst(0.5);
        for i in 0..(m + 1) / 2 {
            let k = T::from_usize(i).unwrap();
            let mut x = (T::PI() * (k + T::cst(0.75)) / (mf + half)).cos();
            let mut dp = T::one();
            for _ in 0..100 {
                let (p, d) = legendre(m, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= T::epsilon() * T::cst(4.0) {
                    let (_, d) = legendre(m, x);
                    dp = d;
                    break;
                }
            }
            let w = T::cst(2.0) / ((T::one() - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        Self { nodes, weights }
    }
}

fn legendre<T: Real>(m: usize, x: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = x;
    for k in 2..=m {
        let kf = T::from_usize(k).unwrap();
        let p2 = ((T::cst(2.0) * kf - T::one()) * x * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let mf = T::from_usize(m).unwrap();
    let d = mf * (x * p1 - p0) / (x * x - T::one());
    (p1, d)
}

/// log(2 sin z), evaluated without overflow for large |Im z|.
pub fn log_two_sin<T: Real>(z: Cx<T>) -> Cx<T> {
    let one = re(T::one());
    if z.im > T::one() {
        let e = (im(T::cst(2.0)) * z).exp();
        im(T::FRAC_PI_2()) - im(T::one()) * z + ln_1p(-e)
    } else if z.im < -T::one() {
        let e = (im(-T::cst(2.0)) * z).exp();
        im(-T::FRAC_PI_2()) + im(T::one()) * z + ln_1p(-e)
    } else {
        ((one + one) * z.sin()).ln()
    }
}

fn ln_1p<T: Real>(w: Cx<T>) -> Cx<T> {
    if w.norm() < T::cst(1e-4) {
        let w2 = w * w;
        w - w2 * T::cst(0.5) + w2 * w / T::cst(3.0) - w2 * w2 * T::cst(0.25)
    } else {
        (re(T::one()) + w).ln()
    }
}

/// Evaluator for S₂ with fixed periods; holds the quadrature rule.
#[derive(Clone, Debug)]
pub struct DoubleSine<T> {
    pub periods: Periods<T>,
    rule: GaussLegendre<T>,
}

const STRIP_DECAY_UNITS: f64 = 45.0;
const MAX_PANEL: f64 = 0.4;
const PANEL_OSC: f64 = 2.5;
const FAR_UNITS: f64 = 0.75;

impl<T: Real> DoubleSine<T> {
    pub fn new(periods: Periods<T>) -> Self {
        Self {
            periods,
            rule: GaussLegendre::new(20),
        }
    }

    /// log S₂ for x in the open strip 0 < Re x < ω₁+ω₂.
    pub fn log_s2_strip(&self, x: Cx<T>) -> Cx<T> {
        let (w1, w2) = (self.periods.omega1, self.periods.omega2);
        let om = w1 + w2;
        let a = re(om) - x * T::cst(2.0);
        let decay = om - a.re.abs();
        let len = T::cst(STRIP_DECAY_UNITS) / decay;
        let mut h = T::cst(MAX_PANEL);
        if a.im != T::zero() {
            h = h.min(T::cst(PANEL_OSC) / a.im.abs());
        }
        let npan = (len / h).ceil().to_usize().unwrap_or(1).max(1);
        let h = len / T::from_usize(npan).unwrap();
        let c0 = a / (T::cst(2.0) * w1 * w2);
        let mag = a.norm().max(om);
        let d1 = (w1 * w1 + w2 * w2) / T::cst(6.0);
        let d2 = (w1.powi(4) + w2.powi(4)) / T::cst(120.0) + w1 * w1 * w2 * w2 / T::cst(36.0);
        let a2 = a * a;
        let s1 = a2 / T::cst(6.0) - d1;
        let s2 = a2 * a2 / T::cst(120.0) - a2 / T::cst(6.0) * d1 + re(d1 * d1 - d2);
        let half = h * T::cst(0.5);
        let mut acc = KahanSum::default();
        for p in 0..npan {
            let left = h * T::from_usize(p).unwrap();
            let mut panel = Complex::new(T::zero(), T::zero());
            for (xi, wi) in self.rule.nodes.iter().zip(self.rule.weights.iter()) {
                let t = left + half * (*xi + T::one());
                let g = if t * mag < T::cst(1e-3) {
                    c0 * (s1 + s2 * (t * t))
                } else {
                    let ep = (a * t).exp();
                    let eo = (-om * t).exp();
                    let den = (-(-T::cst(2.0) * w1 * t).exp_m1()) * (-(-T::cst(2.0) * w2 * t).exp_m1());
                    let num = ep * eo - re(eo) / ep;
                    (num / den - c0 / t) / t
                };
                panel = panel + g * *wi;
            }
            acc.add(panel * half);
        }
        -(acc.value() - c0 / len)
    }

    fn check_pole(&self, x: Cx<T>) -> Result<()> {
        let tol = self.periods.pole_tolerance();
        if x.im.abs() > tol {
            return Ok(());
        }
        let (w1, w2) = (self.periods.omega1, self.periods.omega2);
        let mut a = 1;
        loop {
            let base = w1 * T::from_i32(a).unwrap();
            if base + w2 > x.re + tol {
                break;
            }
            let b = ((x.re - base) / w2).round();
            if b >= T::one() && (x.re - base - b * w2).abs() <= tol {
                return Err(QkzError::PoleProximity {
                    re: x.re.to_f64_lossy(),
                    im: x.im.to_f64_lossy(),
                });
            }
            a += 1;
            if a > 100_000 {
                break;
            }
        }
        Ok(())
    }

    fn is_zero(&self, x: Cx<T>) -> bool {
        let tol = self.periods.pole_tolerance();
        if x.im.abs() > tol || x.re > tol {
            return false;
        }
        let (w1, w2) = (self.periods.omega1, self.periods.omega2);
        let mut a = 0;
        loop {
            let base = -w1 * T::from_i32(a).unwrap();
            if base < x.re - tol {
                break;
            }
            let b = ((base - x.re) / w2).round();
            if b >= T::zero() && (base - b * w2 - x.re).abs() <= tol {
                return true;
            }
            a += 1;
            if a > 100_000 {
                break;
            }
        }
        false
    }

    /// Exponentially convergent expansion for Im x far from the real axis,
    /// valid for any Re x. `None` when the series converges too slowly.
    pub fn log_s2_far(&self, x: Cx<T>) -> Option<Cx<T>> {
        if x.im < T::zero() {
            return self.log_s2_far(x.conj()).map(|v| v.conj());
        }
        let (w1, w2) = (self.periods.omega1, self.periods.omega2);
        let prod = w1 * w2;
        let lead = x * x / (T::cst(2.0) * prod) - x * (w1 + w2) / (T::cst(2.0) * prod)
            + re((w1 / w2 + w2 / w1 + T::cst(3.0)) / T::cst(12.0));
        let mut acc = KahanSum::default();
        acc.add(im(T::PI()) * lead);
        let floor = T::cst(1e-17) * (T::one() + lead.norm());
        for (wa, wb) in [(w1, w2), (w2, w1)] {
            let ratio = (-T::TAU() * x.im / wa).exp();
            if ratio > T::cst(0.2) {
                return None;
            }
            let mut k = 1;
            loop {
                let kf = T::from_i32(k).unwrap();
                let s = (T::PI() * kf * wb / wa).sin();
                let mag = ratio.powi(k) / (T::cst(2.0) * kf * s.abs());
                if mag < floor {
                    break;
                }
                if k >= 80 {
                    return None;
                }
                let phase = (im(T::TAU() * kf / wa) * x - im(T::PI() * kf * wb / wa)).exp();
                acc.add(-(im(T::one()) * phase) / (T::cst(2.0) * kf * s));
                k += 1;
            }
        }
        Some(acc.value())
    }

    /// Branch of log S₂(x) obtained by shift reduction into the strip
    /// centred at (ω₁+ω₂)/2 with half width min(ω₁,ω₂)/2.
    pub fn log_s2(&self, x: Cx<T>) -> Result<Cx<T>> {
        let (_, wl) = self.periods.small_large();
        if x.im.abs() >= T::cst(FAR_UNITS) * wl {
            if let Some(v) = self.log_s2_far(x) {
                return Ok(v);
            }
        }
        self.log_s2_reduced(x)
    }

    fn log_s2_reduced(&self, x: Cx<T>) -> Result<Cx<T>> {
        let (ws, wl) = self.periods.small_large();
        let c = self.periods.sum() * T::cst(0.5);
        let kf = ((c - ws * T::cst(0.5) - x.re) / ws).floor() + T::one();
        if !(kf.abs() <= T::cst(1e4)) {
            return Err(QkzError::NonconvergentReduction {
                steps: kf.to_f64_lossy() as i64,
            });
        }
        self.check_pole(x)?;
        if self.is_zero(x) {
            return Err(QkzError::ZeroProximity {
                re: x.re.to_f64_lossy(),
                im: x.im.to_f64_lossy(),
            });
        }
        let k = kf.to_i64().unwrap();
        let xs = x + re(ws * kf);
        let mut acc = KahanSum::default();
        acc.add(self.log_s2_strip(xs));
        let scale = T::PI() / wl;
        if k > 0 {
            for i in 0..k {
                let z = (x + re(ws * T::from_i64(i).unwrap())) * scale;
                acc.add(log_two_sin(z));
            }
        } else {
            for i in 1..=(-k) {
                let z = (x - re(ws * T::from_i64(i).unwrap())) * scale;
                acc.add(-log_two_sin(z));
            }
        }
        let v = acc.value();
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(QkzError::ZeroProximity {
                re: x.re.to_f64_lossy(),
                im: x.im.to_f64_lossy(),
            });
        }
        Ok(v)
    }

    /// S₂(x); exactly zero on the zero lattice.
    pub fn s2(&self, x: Cx<T>) -> Result<Cx<T>> {
        match self.log_s2(x) {
            Ok(l) => Ok(l.exp()),
            Err(QkzError::ZeroProximity { .. }) => Ok(Complex::new(T::zero(), T::zero())),
            Err(e) => Err(e),
        }
    }

    /// log φ(x), φ(x) = 1/(S₂(ix−π/n) S₂(−ix−π/n)).
    pub fn log_phi(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        let c = T::PI() / T::from_usize(n).unwrap();
        let ix = im(T::one()) * x;
        Ok(-(self.log_s2(ix - re(c))? + self.log_s2(-ix - re(c))?))
    }

    pub fn phi(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        let c = T::PI() / T::from_usize(n).unwrap();
        let ix = im(T::one()) * x;
        let den = self.s2(ix - re(c))? * self.s2(-ix - re(c))?;
        pole_or_inverse(den, x)
    }

    /// log ψ(x), ψ(x) = 1/(S₂(ix+2π/n) S₂(−ix+2π/n)).
    pub fn log_psi(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        let c = T::TAU() / T::from_usize(n).unwrap();
        let ix = im(T::one()) * x;
        Ok(-(self.log_s2(ix + re(c))? + self.log_s2(-ix + re(c))?))
    }

    pub fn psi(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        let c = T::TAU() / T::from_usize(n).unwrap();
        let ix = im(T::one()) * x;
        let den = self.s2(ix + re(c))? * self.s2(-ix + re(c))?;
        pole_or_inverse(den, x)
    }

    /// log of √(ω₁ω₂)/S₂(−2π/n).
    pub fn log_h_prefactor(&self, n: usize) -> Result<Cx<T>> {
        let c = T::TAU() / T::from_usize(n).unwrap();
        let lp = (self.periods.omega1 * self.periods.omega2).sqrt().ln();
        Ok(re(lp) - self.log_s2(re(-c))?)
    }

    /// log H(x) for the closed form
    /// √(ω₁ω₂)/S₂(−2π/n) · S₂(x+(ω₁+ω₂)/2−π/n) / S₂(x+(ω₁+ω₂)/2+π/n).
    pub fn log_h_closed(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        let c = T::PI() / T::from_usize(n).unwrap();
        let shift = self.periods.sum() * T::cst(0.5);
        Ok(self.log_h_prefactor(n)? + self.log_s2(x + re(shift - c))?
            - self.log_s2(x + re(shift + c))?)
    }

    pub fn h_closed(&self, x: Cx<T>, n: usize) -> Result<Cx<T>> {
        Ok(self.log_h_closed(x, n)?.exp())
    }
}

fn pole_or_inverse<T: Real>(den: Cx<T>, x: Cx<T>) -> Result<Cx<T>> {
    if den.norm() == T::zero() {
        return Err(QkzError::PoleProximity {
            re: x.re.to_f64_lossy(),
            im: x.im.to_f64_lossy(),
        });
    }
    Ok(den.inv())
}

/// Quadratic asymptote of log S₂ for Im x → ±∞ (`upper` selects Im x > 0).
/// The constant term enters with a plus sign; the corrections are
/// O(exp(−2π|Im x|/max(ω₁,ω₂))).
pub fn s2_asymptotic<T: Real>(x: Cx<T>, upper: bool, p: &Periods<T>) -> Cx<T> {
    asymptote_with_constant(x, upper, p, T::one())
}

fn asymptote_with_constant<T: Real>(x: Cx<T>, upper: bool, p: &Periods<T>, sign: T) -> Cx<T> {
    let (w1, w2) = (p.omega1, p.omega2);
    let prod = w1 * w2;
    let poly = x * x / (T::cst(2.0) * prod) - x * (w1 + w2) / (T::cst(2.0) * prod)
        + re(sign * (w1 / w2 + w2 / w1 + T::cst(3.0)) / T::cst(12.0));
    let s = if upper { T::one() } else { -T::one() };
    im(s * T::PI()) * poly
}

pub fn log_s2<T: Real>(x: Cx<T>, p: &Periods<T>) -> Result<Cx<T>> {
    DoubleSine::new(*p).log_s2(x)
}

pub fn s2<T: Real>(x: Cx<T>, p: &Periods<T>) -> Result<Cx<T>> {
    DoubleSine::new(*p).s2(x)
}

pub fn phi<T: Real>(x: Cx<T>, n: usize, p: &Periods<T>) -> Result<Cx<T>> {
    DoubleSine::new(*p).phi(x, n)
}

pub fn psi<T: Real>(x: Cx<T>, n: usize, p: &Periods<T>) -> Result<Cx<T>> {
    DoubleSine::new(*p).psi(x, n)
}

pub fn h_closed<T: Real>(x: Cx<T>, n: usize, p: &Periods<T>) -> Result<Cx<T>> {
    DoubleSine::new(*p).h_closed(x, n)
}

/// Rows (x, S₂(x)) over a rectangular grid, for the `s2-table` subcommand.
pub fn s2_table<T: Real>(
    p: &Periods<T>,
    re_range: (T, T),
    im_range: (T, T),
    steps: (usize, usize),
) -> Vec<(Cx<T>, Result<Cx<T>>)> {
    let ev = DoubleSine::new(*p);
    let mut rows = Vec::new();
    let lerp = |lo: T, hi: T, i: usize, n: usize| {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * T::from_usize(i).unwrap() / T::from_usize(n - 1).unwrap()
        }
    };
    for i in 0..steps.0 {
        for j in 0..steps.1 {
            let x = cx(lerp(re_range.0, re_range.1, i, steps.0), lerp(im_range.0, im_range.1, j, steps.1));
            rows.push((x, ev.s2(x)));
        }
    }
    rows
}
