//! Adaptive quadrature along contours, iterated term integrals, the pairing
//! matrix and the numeric one-point functions.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{enumerate_z, JTuple, NuVector};
use crate::contours::{build_contour, Anchor, ContourConfig, PathSpec, PoleFamily, PoleSpec};
use crate::error::{QkzError, Result};
use crate::linalg::CMatrix;
use crate::qkz_operators::Params;
use crate::scalar::{cx, im, re, Cx, KahanSum, Real};
use crate::special_functions::DoubleSine;
use crate::weights::{perm_tuples, PermTuple, TermFactors};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    /// Maximal bisection depth of a line panel.
    pub max_depth: usize,
    /// Multiplier on the initial truncation 3·max(ρ,λ).
    pub truncation_margin: T,
    /// Multiplier on the default loop radius.
    pub delta_scale: T,
    /// Hard limit for tail extension.
    pub max_truncation: T,
    pub parallel: bool,
}

impl<T: Real> QuadratureConfig<T> {
    pub fn standard() -> Self {
        Self {
            rel_tol: T::cst(1e-9),
            abs_tol: T::zero(),
            max_depth: 40,
            truncation_margin: T::one(),
            delta_scale: T::one(),
            max_truncation: T::cst(5000.0),
            parallel: true,
        }
    }

    pub fn with_rel_tol(self, rel_tol: T) -> Self {
        Self { rel_tol, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol >= T::cst(1e-12) && self.rel_tol <= T::cst(1e-2)) {
            return Err(QkzError::Config(format!("rel_tol {} outside [1e-12, 1e-2]", self.rel_tol)));
        }
        if !(self.abs_tol >= T::zero()) || !(self.truncation_margin > T::zero()) || !(self.delta_scale > T::zero()) {
            return Err(QkzError::Config("abs_tol, truncation_margin and delta_scale must be positive".into()));
        }
        if self.max_depth == 0 || self.max_depth > 60 {
            return Err(QkzError::Config(format!("max_depth {} outside 1..=60", self.max_depth)));
        }
        Ok(())
    }

    pub fn contour(&self, params: &Params<T>) -> ContourConfig<T> {
        ContourConfig::for_params(params).scaled(self.delta_scale, self.truncation_margin)
    }
}

/// A value with an absolute error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: Cx<T>,
    pub err: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathIntegral<T> {
    pub value: Cx<T>,
    pub err: T,
    /// Final extent of the base line after tail extension.
    pub left: T,
    pub right: T,
    pub evaluations: u64,
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const INITIAL_PANELS: usize = 16;
const MAX_PANELS: usize = 20_000;
const TAIL_PROBE: f64 = 2.0;

#[derive(Clone, Copy, Debug)]
struct Panel<T> {
    a: Cx<T>,
    b: Cx<T>,
    depth: usize,
    value: Cx<T>,
    err: T,
    inner_err: T,
    l1: T,
}

fn gk15<T: Real, F>(f: &F, a: Cx<T>, b: Cx<T>, depth: usize) -> Result<Panel<T>>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    let c = (a + b) * T::cst(0.5);
    let h = (b - a) * T::cst(0.5);
    let mid = f(c)?;
    let mut k = mid.value * T::cst(WGK[7]);
    let mut g = mid.value * T::cst(WG[3]);
    let mut l1 = mid.value.norm() * T::cst(WGK[7]);
    let mut ie = mid.err * T::cst(WGK[7]);
    for i in 0..7 {
        let x = T::cst(XGK[i]);
        let lo = f(c - h * x)?;
        let hi = f(c + h * x)?;
        let s = lo.value + hi.value;
        k = k + s * T::cst(WGK[i]);
        l1 = l1 + (lo.value.norm() + hi.value.norm()) * T::cst(WGK[i]);
        ie = ie + (lo.err + hi.err) * T::cst(WGK[i]);
        if i % 2 == 1 {
            g = g + s * T::cst(WG[i / 2]);
        }
    }
    let hn = h.norm();
    Ok(Panel {
        a,
        b,
        depth,
        value: k * h,
        err: ((k - g) * h).norm(),
        inner_err: ie * hn,
        l1: l1 * hn,
    })
}

fn eval_panels<T: Real, F>(f: &F, spans: &[(Cx<T>, Cx<T>, usize)], parallel: bool) -> Result<Vec<Panel<T>>>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    if parallel && spans.len() > 1 {
        spans.par_iter().map(|&(a, b, d)| gk15(f, a, b, d)).collect()
    } else {
        spans.iter().map(|&(a, b, d)| gk15(f, a, b, d)).collect()
    }
}

struct SegmentResult<T> {
    value: Cx<T>,
    err: T,
    evaluations: u64,
}

fn target<T: Real>(cfg: &QuadratureConfig<T>, value: Cx<T>, l1: T, floor: T) -> T {
    cfg.abs_tol
        .max(cfg.rel_tol * value.norm())
        .max(T::cst(64.0) * T::epsilon() * l1)
        .max(floor)
}

/// Globally adaptive Gauss–Kronrod (7, 15) on the segment [a, b].
fn integrate_segment<T: Real, F>(f: &F, a: Cx<T>, b: Cx<T>, cfg: &QuadratureConfig<T>, floor: T) -> Result<SegmentResult<T>>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    let spans: Vec<_> = (0..INITIAL_PANELS)
        .map(|i| {
            let t0 = T::from_usize(i).unwrap() / T::from_usize(INITIAL_PANELS).unwrap();
            let t1 = T::from_usize(i + 1).unwrap() / T::from_usize(INITIAL_PANELS).unwrap();
            (a + (b - a) * t0, a + (b - a) * t1, 0)
        })
        .collect();
    let mut panels = eval_panels(f, &spans, cfg.parallel)?;
    let mut evaluations = 15 * panels.len() as u64;
    loop {
        let mut total = KahanSum::default();
        let (mut qerr, mut l1) = (T::zero(), T::zero());
        for p in &panels {
            total.add(p.value);
            qerr += p.err;
            l1 += p.l1;
        }
        let value = total.value();
        let tol = target(cfg, value, l1, floor);
        if qerr <= tol {
            let inner: T = panels.iter().map(|p| p.inner_err).sum();
            return Ok(SegmentResult {
                value,
                err: qerr + inner,
                evaluations,
            });
        }
        let thresh = tol / T::from_usize(panels.len()).unwrap();
        let mut split: Vec<usize> = (0..panels.len()).filter(|&i| panels[i].err > thresh).collect();
        if split.is_empty() {
            let worst = (0..panels.len())
                .max_by(|&i, &j| panels[i].err.partial_cmp(&panels[j].err).unwrap())
                .unwrap();
            split.push(worst);
        }
        if panels.len() + split.len() > MAX_PANELS {
            return Err(QkzError::ToleranceNotMet(format!(
                "panel limit reached; error {} above target {}",
                qerr.to_f64_lossy(),
                tol.to_f64_lossy()
            )));
        }
        let mut spans = Vec::with_capacity(2 * split.len());
        for &i in &split {
            let p = panels[i];
            if p.depth >= cfg.max_depth {
                return Err(QkzError::ToleranceNotMet(format!(
                    "depth limit at [{}, {}]; error {} above target {}",
                    p.a,
                    p.b,
                    qerr.to_f64_lossy(),
                    tol.to_f64_lossy()
                )));
            }
            let m = (p.a + p.b) * T::cst(0.5);
            spans.push((p.a, m, p.depth + 1));
            spans.push((m, p.b, p.depth + 1));
        }
        let fresh = eval_panels(f, &spans, cfg.parallel)?;
        evaluations += 15 * fresh.len() as u64;
        let mut next = Vec::with_capacity(panels.len() + split.len());
        let mut fresh_iter = fresh.into_iter();
        let mut s = 0;
        for (i, p) in panels.into_iter().enumerate() {
            if s < split.len() && split[s] == i {
                next.push(fresh_iter.next().unwrap());
                next.push(fresh_iter.next().unwrap());
                s += 1;
            } else {
                next.push(p);
            }
        }
        panels = next;
    }
}

/// Counter-clockwise trapezoid rule on a circle with point doubling.
fn integrate_circle<T: Real, F>(f: &F, center: Cx<T>, radius: T, cfg: &QuadratureConfig<T>, scale: T) -> Result<SegmentResult<T>>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    let point = |k: usize, m: usize| -> Result<(Cx<T>, T)> {
        let th = T::TAU() * T::from_usize(k).unwrap() / T::from_usize(m).unwrap();
        let e = cx(th.cos(), th.sin());
        let v = f(center + e * radius)?;
        Ok((v.value * e * im(radius), v.err * radius))
    };
    let eval = |ks: Vec<usize>, m: usize| -> Result<Vec<(Cx<T>, T)>> {
        if cfg.parallel {
            ks.into_par_iter().map(|k| point(k, m)).collect()
        } else {
            ks.into_iter().map(|k| point(k, m)).collect()
        }
    };
    let mut m = 16;
    let mut sum = KahanSum::default();
    let mut inner = T::zero();
    for (v, e) in eval((0..m).collect(), m)? {
        sum.add(v);
        inner += e;
    }
    let mut evaluations = m as u64;
    let mut prev = sum.value() * (T::TAU() / T::from_usize(m).unwrap());
    loop {
        let m2 = 2 * m;
        for (v, e) in eval((0..m).map(|k| 2 * k + 1).collect(), m2)? {
            sum.add(v);
            inner += e;
        }
        evaluations += m as u64;
        let cur = sum.value() * (T::TAU() / T::from_usize(m2).unwrap());
        let diff = (cur - prev).norm();
        let tol = cfg.abs_tol.max(cfg.rel_tol * cur.norm().max(scale));
        m = m2;
        if diff <= tol {
            return Ok(SegmentResult {
                value: cur,
                err: diff + inner * (T::TAU() / T::from_usize(m).unwrap()),
                evaluations,
            });
        }
        if m >= 4096 {
            return Err(QkzError::ToleranceNotMet(format!(
                "circle around {center} radius {radius}: trapezoid difference {}",
                diff.to_f64_lossy()
            )));
        }
        prev = cur;
    }
}

fn tail_estimate<T: Real, F>(f: &F, end: Cx<T>, inward: T) -> Result<(T, T)>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    let m1 = f(end)?.value.norm();
    let m0 = f(end + re(inward * T::cst(TAIL_PROBE)))?.value.norm();
    if m1 == T::zero() {
        return Ok((T::zero(), T::infinity()));
    }
    let kappa = (m0 / m1).ln() / T::cst(TAIL_PROBE);
    if kappa > T::cst(0.02) {
        Ok((m1 / kappa, kappa))
    } else {
        Ok((T::infinity(), kappa))
    }
}

/// Integral along a path: base line with tail extension, then the loops.
pub fn integrate_path<T: Real, F>(f: &F, path: &PathSpec<T>, cfg: &QuadratureConfig<T>) -> Result<PathIntegral<T>>
where
    F: Fn(Cx<T>) -> Result<Estimate<T>> + Sync,
{
    let h = path.base_height;
    let t = path.truncation;
    let core = integrate_segment(f, cx(-t, h), cx(t, h), cfg, T::zero())?;
    let mut value = KahanSum::default();
    value.add(core.value);
    let mut err = core.err;
    let mut evaluations = core.evaluations + 4;
    let mut ends = [t, t];
    for (side, dir) in [(0usize, -T::one()), (1, T::one())] {
        loop {
            let end = ends[side];
            let tol = target(cfg, value.value(), T::zero(), T::zero()) * T::cst(0.1);
            let (tail, kappa) = tail_estimate(f, cx(dir * end, h), -dir)?;
            evaluations += 2;
            if tail <= tol {
                err += tail;
                break;
            }
            if end >= cfg.max_truncation {
                return Err(QkzError::ToleranceNotMet(format!(
                    "integrand tail {} not below {} at |Re| = {}",
                    tail.to_f64_lossy(),
                    tol.to_f64_lossy(),
                    end.to_f64_lossy()
                )));
            }
            let ext = if kappa.is_finite() && kappa > T::cst(0.02) && tail.is_finite() {
                ((tail / tol).ln() / kappa + T::cst(TAIL_PROBE)).min(end).max(T::cst(TAIL_PROBE))
            } else {
                end
            };
            let ext = ext.min(cfg.max_truncation - end).max(T::cst(TAIL_PROBE));
            let (a, b) = if side == 0 {
                (cx(-(end + ext), h), cx(-end, h))
            } else {
                (cx(end, h), cx(end + ext, h))
            };
            let seg = integrate_segment(f, a, b, cfg, tol)?;
            value.add(seg.value);
            err += seg.err;
            evaluations += seg.evaluations;
            ends[side] = end + ext;
        }
    }
    let scale = value.value().norm();
    for l in &path.loops {
        let c = integrate_circle(f, l.center, l.radius, cfg, scale)?;
        value.add(c.value * T::from_i32(l.orientation).unwrap());
        err += c.err;
        evaluations += c.evaluations;
    }
    Ok(PathIntegral {
        value: value.value(),
        err,
        left: ends[0],
        right: ends[1],
        evaluations,
    })
}

/// An integrand split into factors attached to the variable of integration
/// order in which they first become fully determined.
pub trait IteratedIntegrand<T: Real>: Sync {
    fn dim(&self) -> usize;
    /// Sum of logs of the factors owned by variable v; `vals` holds 0..=v.
    fn log_factor(&self, v: usize, vals: &[Cx<T>]) -> Result<Cx<T>>;
    /// Near poles in variable v, given the outer values 0..v.
    fn pole_candidates(&self, v: usize, outer: &[Cx<T>]) -> Vec<PoleSpec<T>>;
    fn log_constant(&self) -> Cx<T>;
}

impl<T: Real> IteratedIntegrand<T> for TermFactors<T> {
    fn dim(&self) -> usize {
        TermFactors::dim(self)
    }
    fn log_factor(&self, v: usize, vals: &[Cx<T>]) -> Result<Cx<T>> {
        TermFactors::log_factor(self, v, vals)
    }
    fn pole_candidates(&self, v: usize, outer: &[Cx<T>]) -> Vec<PoleSpec<T>> {
        TermFactors::pole_candidates(self, v, outer)
    }
    fn log_constant(&self) -> Cx<T> {
        TermFactors::log_constant(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IteratedResult<T> {
    pub value: Cx<T>,
    pub err: T,
    pub evaluations: u64,
    /// Outermost base line after tail extension.
    pub outer_path: PathSpec<T>,
    pub outer_extent: (T, T),
}

fn level<T: Real, I: IteratedIntegrand<T>>(
    f: &I,
    v: usize,
    prefix: &[Cx<T>],
    cfg: &QuadratureConfig<T>,
    ccfg: &ContourConfig<T>,
    counter: &AtomicU64,
) -> Result<(PathIntegral<T>, PathSpec<T>)> {
    let poles = f.pole_candidates(v, prefix);
    let path = build_contour(&poles, ccfg)?;
    let last = v + 1 == f.dim();
    let g = |x: Cx<T>| -> Result<Estimate<T>> {
        let mut vals = prefix.to_vec();
        vals.push(x);
        let lf = f.log_factor(v, &vals)?;
        counter.fetch_add(1, Ordering::Relaxed);
        let s = lf.exp();
        if !s.re.is_finite() || !s.im.is_finite() {
            if lf.re == T::neg_infinity() {
                return Ok(Estimate { value: re(T::zero()), err: T::zero() });
            }
            return Err(QkzError::ToleranceNotMet(format!("non-finite integrand at {x}")));
        }
        if last || s.norm() == T::zero() {
            return Ok(Estimate { value: s, err: T::zero() });
        }
        let (inner, _) = level(f, v + 1, &vals, cfg, ccfg, counter)?;
        Ok(Estimate {
            value: s * inner.value,
            err: s.norm() * inner.err,
        })
    };
    let res = integrate_path(&g, &path, cfg)?;
    Ok((res, path))
}

/// Iterated contour integral of exp(Σ log factors), outermost variable first.
pub fn integrate_iterated<T: Real, I: IteratedIntegrand<T>>(
    f: &I,
    cfg: &QuadratureConfig<T>,
    ccfg: &ContourConfig<T>,
) -> Result<IteratedResult<T>> {
    cfg.validate()?;
    let k = f.log_constant().exp();
    if f.dim() == 0 {
        return Ok(IteratedResult {
            value: k,
            err: T::zero(),
            evaluations: 0,
            outer_path: PathSpec::straight(T::zero(), T::zero()),
            outer_extent: (T::zero(), T::zero()),
        });
    }
    let counter = AtomicU64::new(0);
    let (res, path) = level(f, 0, &[], cfg, ccfg, &counter)?;
    Ok(IteratedResult {
        value: res.value * k,
        err: res.err * k.norm(),
        evaluations: counter.load(Ordering::Relaxed),
        outer_path: path,
        outer_extent: (res.left, res.right),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    /// dγ
    Plain,
    /// dγ/(2πi)
    OverTwoPiI,
}

/// Π_j φ(γ_j − γ_{j−1}) exp((2π/ρλ) Σ a_j γ_j) with γ₀ = 0.
#[derive(Clone, Debug)]
pub struct ChainIntegrand<T> {
    coeffs: Vec<Cx<T>>,
    n: usize,
    coupling: T,
    measure: Measure,
    ds: DoubleSine<T>,
}

impl<T: Real> ChainIntegrand<T> {
    pub fn new(coeffs: Vec<Cx<T>>, params: &Params<T>, measure: Measure) -> Self {
        Self {
            coeffs,
            n: params.n,
            coupling: params.coupling(),
            measure,
            ds: params.double_sine(),
        }
    }
}

impl<T: Real> IteratedIntegrand<T> for ChainIntegrand<T> {
    fn dim(&self) -> usize {
        self.coeffs.len()
    }
    fn log_factor(&self, v: usize, vals: &[Cx<T>]) -> Result<Cx<T>> {
        let prev = if v == 0 { re(T::zero()) } else { vals[v - 1] };
        Ok(self.coeffs[v] * vals[v] * self.coupling + self.ds.log_phi(vals[v] - prev, self.n)?)
    }
    fn pole_candidates(&self, v: usize, outer: &[Cx<T>]) -> Vec<PoleSpec<T>> {
        let (anchor, prev) = if v == 0 { (Anchor::Origin, re(T::zero())) } else { (Anchor::Var(v - 1), outer[v - 1]) };
        let c = T::PI() / T::from_usize(self.n).unwrap();
        vec![
            PoleSpec::near(anchor, PoleFamily::Phi, prev, -c, true),
            PoleSpec::near(anchor, PoleFamily::Phi, prev, c, true),
        ]
    }
    fn log_constant(&self) -> Cx<T> {
        match self.measure {
            Measure::Plain => re(T::zero()),
            Measure::OverTwoPiI => -(cx(T::TAU().ln(), T::FRAC_PI_2()) * T::from_usize(self.coeffs.len()).unwrap()),
        }
    }
}

fn chain_contour<T: Real>(params: &Params<T>, cfg: &QuadratureConfig<T>) -> ContourConfig<T> {
    ContourConfig {
        delta: T::PI() / (T::cst(4.0) * params.nf()),
        truncation: T::cst(3.0) * params.rho.max(params.lambda),
        band: params.rho.min(params.lambda) / T::cst(2.0),
        base_height: T::zero(),
    }
    .scaled(cfg.delta_scale, cfg.truncation_margin)
}

fn strip_half_width<T: Real>(params: &Params<T>) -> T {
    (params.rho + params.lambda) / T::cst(2.0) + T::PI() / params.nf()
}

/// H(x) = ∫ φ(u) e^{(2π/ρλ) x u} du.
pub fn h_numeric<T: Real>(x: Cx<T>, params: &Params<T>, cfg: &QuadratureConfig<T>) -> Result<Estimate<T>> {
    let w = strip_half_width(params);
    if !(x.re.abs() < w) {
        return Err(QkzError::DomainViolation(format!("|Re x| = {} not below {}", x.re.abs(), w)));
    }
    let chain = ChainIntegrand::new(vec![x], params, Measure::Plain);
    let r = integrate_iterated(&chain, cfg, &chain_contour(params, cfg))?;
    Ok(Estimate { value: r.value, err: r.err })
}

/// G_k(μ) as the iterated k-fold integral with exponent Σ(μ_{j+1}−μ_j)γ_j.
pub fn g_k_numeric<T: Real>(
    mu: &[T],
    k: usize,
    params: &Params<T>,
    cfg: &QuadratureConfig<T>,
    measure: Measure,
) -> Result<Estimate<T>> {
    if k + 1 > mu.len() {
        return Err(QkzError::ShapeMismatch(format!("G_{k} needs at least {} μ values", k + 1)));
    }
    let w = strip_half_width(params);
    for j in 0..k {
        let x = mu[k] - mu[j];
        if !(x.abs() < w) {
            return Err(QkzError::DomainViolation(format!("μ_{}−μ_{} = {} outside the strip", k + 1, j + 1, x)));
        }
    }
    let coeffs = (0..k).map(|j| re(mu[j + 1] - mu[j])).collect();
    let chain = ChainIntegrand::new(coeffs, params, measure);
    let r = integrate_iterated(&chain, cfg, &chain_contour(params, cfg))?;
    Ok(Estimate { value: r.value, err: r.err })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermResult<T> {
    pub sigma: Vec<Vec<usize>>,
    pub sigmap: Vec<Vec<usize>>,
    pub sign: i32,
    pub value: Cx<T>,
    pub err: T,
    pub evaluations: u64,
}

/// Unsigned integral of F_{J,J′,σ,σ′} over the per-variable contours.
pub fn integrate_term<T: Real>(
    jt: &JTuple,
    jp: &JTuple,
    sigma: &PermTuple,
    sigmap: &PermTuple,
    params: &Params<T>,
    cfg: &QuadratureConfig<T>,
) -> Result<TermResult<T>> {
    let tf = TermFactors::new(jt, jp, sigma, sigmap, params)?;
    let r = integrate_iterated(&tf, cfg, &cfg.contour(params))?;
    Ok(TermResult {
        sigma: sigma.perms.clone(),
        sigmap: sigmap.perms.clone(),
        sign: sigma.sign * sigmap.sign,
        value: r.value,
        err: r.err,
        evaluations: r.evaluations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairingEntry<T> {
    pub j: Vec<usize>,
    pub jp: Vec<usize>,
    pub value: Cx<T>,
    pub err: T,
    pub terms: Vec<TermResult<T>>,
}

/// I(w_J^{(ρ)}, w_{J′}^{(λ)}) as the signed sum over (σ, σ′).
pub fn pairing<T: Real>(jt: &JTuple, jp: &JTuple, params: &Params<T>, cfg: &QuadratureConfig<T>) -> Result<PairingEntry<T>> {
    params.check_window()?;
    let perms = perm_tuples(&jt.nu())?;
    let pairs: Vec<(&PermTuple, &PermTuple)> = perms.iter().flat_map(|s| perms.iter().map(move |sp| (s, sp))).collect();
    let terms: Vec<TermResult<T>> = if cfg.parallel {
        pairs
            .par_iter()
            .map(|(s, sp)| integrate_term(jt, jp, s, sp, params, cfg))
            .collect::<Result<_>>()?
    } else {
        pairs
            .iter()
            .map(|(s, sp)| integrate_term(jt, jp, s, sp, params, cfg))
            .collect::<Result<_>>()?
    };
    let mut acc = KahanSum::default();
    let mut err = T::zero();
    for t in &terms {
        acc.add(t.value * T::from_i32(t.sign).unwrap());
        err += t.err;
    }
    Ok(PairingEntry {
        j: jt.entries().to_vec(),
        jp: jp.entries().to_vec(),
        value: acc.value(),
        err,
        terms,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairingMatrix<T> {
    pub basis: Vec<JTuple>,
    pub values: CMatrix<T>,
    /// Row-major absolute error estimates.
    pub errors: Vec<T>,
    pub entries: Vec<PairingEntry<T>>,
}

impl<T: Real> PairingMatrix<T> {
    pub fn det(&self) -> Cx<T> {
        self.values.det()
    }

    pub fn error(&self, i: usize, j: usize) -> T {
        self.errors[i * self.basis.len() + j]
    }

    /// First-order bound on the relative error of the determinant from the
    /// entry errors, via the adjugate of the computed matrix.
    pub fn det_rel_error(&self) -> T {
        let n = self.basis.len();
        let d = self.det();
        if d.norm() == T::zero() {
            return T::infinity();
        }
        let mut acc = T::zero();
        for i in 0..n {
            for j in 0..n {
                let mut m = self.values.clone();
                m[(i, j)] = m[(i, j)] + re(T::one());
                let cof = m.det() - d;
                acc += cof.norm() * self.error(i, j);
            }
        }
        acc / d.norm()
    }
}

/// All entries I(w_J, w_{J′}) for J, J′ in Z_ν, rows in enumeration order.
pub fn pairing_matrix<T: Real>(params: &Params<T>, nu: &NuVector, cfg: &QuadratureConfig<T>) -> Result<PairingMatrix<T>> {
    let basis = enumerate_z(nu);
    let n = basis.len();
    let idx: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let entries: Vec<PairingEntry<T>> = if cfg.parallel {
        idx.par_iter()
            .map(|&(i, j)| pairing(&basis[i], &basis[j], params, cfg))
            .collect::<Result<_>>()?
    } else {
        idx.iter()
            .map(|&(i, j)| pairing(&basis[i], &basis[j], params, cfg))
            .collect::<Result<_>>()?
    };
    let mut values = CMatrix::zeros(n, n);
    let mut errors = vec![T::zero(); n * n];
    for (k, e) in entries.iter().enumerate() {
        values[(k / n, k % n)] = e.value;
        errors[k] = e.err;
    }
    Ok(PairingMatrix { basis, values, errors, entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qkz_operators::{g_k_closed, log_rhs_theorem};
    use crate::scalar::rel_err;
    use crate::special_functions::Periods;

    fn params(n: usize, sites: usize, beta: Vec<f64>) -> Params<f64> {
        let step = (7.3 + 9.4) / 2.0;
        let mu = (0..n).map(|j| j as f64 * step).collect();
        Params::new(n, sites, 7.3, 9.4, mu, beta).unwrap()
    }

    fn cfg() -> QuadratureConfig<f64> {
        QuadratureConfig::standard()
    }

    #[test]
    fn gaussian_calibration() {
        let f = |z: Cx<f64>| Ok(Estimate { value: (-(z * z)).exp(), err: 0.0 });
        let r = integrate_path(&f, &PathSpec::straight(0.0, 10.0), &cfg()).unwrap();
        assert!((r.value - cx(std::f64::consts::PI.sqrt(), 0.0)).norm() < 1e-10);
    }

    #[test]
    fn shifted_line_agrees() {
        let f = |z: Cx<f64>| Ok(Estimate { value: (-(z * z) + z * 0.3).exp(), err: 0.0 });
        let a = integrate_path(&f, &PathSpec::straight(0.0, 10.0), &cfg()).unwrap();
        let b = integrate_path(&f, &PathSpec::straight(0.7, 10.0), &cfg()).unwrap();
        assert!((a.value - b.value).norm() < 1e-10);
    }

    #[test]
    fn loop_picks_up_residue() {
        let f = |z: Cx<f64>| Ok(Estimate { value: (z - cx(0.2, 0.1)).inv(), err: 0.0 });
        let r = integrate_circle(&f, cx(0.2, 0.1), 0.3, &cfg(), 0.0).unwrap();
        assert!((r.value - cx(0.0, std::f64::consts::TAU)).norm() < 1e-12);
    }

    #[test]
    fn h_numeric_matches_closed_form() {
        let p = params(2, 1, vec![0.0]);
        for x in [0.0, 2.5, -4.0] {
            let h = h_numeric(re(x), &p, &cfg()).unwrap();
            let want = p.double_sine().h_closed(re(x), 2).unwrap();
            assert!(rel_err(h.value, want) < 1e-8, "x={x}: {} vs {want}", h.value);
        }
    }

    #[test]
    fn h_numeric_outside_strip() {
        let p = params(2, 1, vec![0.0]);
        assert!(matches!(h_numeric(re(10.0), &p, &cfg()), Err(QkzError::DomainViolation(_))));
    }

    #[test]
    fn g_k_measures_differ_by_two_pi_i() {
        let p = params(3, 1, vec![0.0]);
        let mu = [0.0, 2.0, 5.0];
        let plain = g_k_numeric(&mu, 1, &p, &cfg(), Measure::Plain).unwrap().value;
        let lit = g_k_numeric(&mu, 1, &p, &cfg(), Measure::OverTwoPiI).unwrap().value;
        assert!(rel_err(plain, g_k_closed(&mu, 1, &p).unwrap()) < 1e-7);
        assert!(rel_err(lit * cx(0.0, std::f64::consts::TAU), plain) < 1e-12);
        let _ = Periods::new(7.3, 9.4).unwrap();
    }

    #[test]
    fn one_dimensional_theorem_instance() {
        let p = params(2, 2, vec![0.0, 1.0]);
        let nu = NuVector::new(2, &[1]).unwrap();
        let m = pairing_matrix(&p, &nu, &cfg()).unwrap();
        let rhs = log_rhs_theorem(&p, &nu, &p.double_sine()).unwrap().exp();
        assert!(rel_err(m.det(), rhs) < 1e-6, "{} vs {rhs}", m.det());
    }
}
