//! Pole bookkeeping and per-variable contours.
//!
//! A contour is a horizontal base line Im γ = h on [−T, T] together with
//! small residue loops. A pole that must lie above the contour but sits
//! below the line gets a counter-clockwise loop; a pole that must lie below
//! but sits above gets a clockwise loop. Line plus loops is homologous to a
//! deformation of the real line passing on the required side of every pole.

use serde::Serialize;

use crate::error::{QkzError, Result};
use crate::qkz_operators::Params;
use crate::scalar::{cx, Cx, Real};

/// What a pole position is measured from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Anchor {
    /// β_m, 0-based.
    Beta(usize),
    /// Integration variable, flat 0-based index in integration order.
    Var(usize),
    /// The fixed point γ₀ = 0 of one-point integrals.
    Origin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Above,
    Below,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PoleFamily {
    Phi,
    Psi,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoleSpec<T> {
    pub anchor: Anchor,
    pub family: PoleFamily,
    /// Imaginary part of the offset from the anchor (±π/n or ±2π/n).
    pub offset: T,
    /// Lattice indices (a, b): the pole sits at offset ± i(aρ + bλ).
    pub lattice: (u32, u32),
    pub side: Side,
    pub position: Cx<T>,
    /// False when a zero of a weight factor cancels this instance.
    pub active: bool,
}

impl<T: Real> PoleSpec<T> {
    pub fn near(anchor: Anchor, family: PoleFamily, anchor_value: Cx<T>, offset: T, active: bool) -> Self {
        let side = if offset < T::zero() {
            match family {
                PoleFamily::Phi => Side::Above,
                PoleFamily::Psi => Side::Below,
            }
        } else {
            match family {
                PoleFamily::Phi => Side::Below,
                PoleFamily::Psi => Side::Above,
            }
        };
        Self {
            anchor,
            family,
            offset,
            lattice: (0, 0),
            side,
            position: anchor_value + cx(T::zero(), offset),
            active,
        }
    }

    /// The lattice instance (a, b) of this pole family member.
    pub fn lattice_instance(&self, a: u32, b: u32, rho: T, lambda: T) -> Self {
        let shift = rho * T::from_u32(a).unwrap() + lambda * T::from_u32(b).unwrap();
        let dir = match self.side {
            Side::Above => T::one(),
            Side::Below => -T::one(),
        };
        let mut p = self.clone();
        p.lattice = (a, b);
        p.position = self.position + cx(T::zero(), dir * shift);
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContourConfig<T> {
    /// Loop radius and line clearance.
    pub delta: T,
    /// Initial half length T of the base line.
    pub truncation: T,
    /// Loops must stay within |Im γ| < band.
    pub band: T,
    pub base_height: T,
}

impl<T: Real> ContourConfig<T> {
    /// δ = min(π/(4n), gap/4) with gap the smallest distance between distinct β,
    /// T = 3·max(ρ,λ), band = min(ρ,λ)/2.
    pub fn for_params(params: &Params<T>) -> Self {
        let mut delta = T::PI() / (T::cst(4.0) * params.nf());
        let mut b = params.beta.clone();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for w in b.windows(2) {
            let gap = w[1] - w[0];
            if gap > T::cst(1e-9) {
                delta = delta.min(gap / T::cst(4.0));
            }
        }
        Self {
            delta,
            truncation: T::cst(3.0) * params.rho.max(params.lambda),
            band: params.rho.min(params.lambda) / T::cst(2.0),
            base_height: T::zero(),
        }
    }

    pub fn scaled(&self, delta_scale: T, truncation_scale: T) -> Self {
        Self {
            delta: self.delta * delta_scale,
            truncation: self.truncation * truncation_scale,
            ..*self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidueLoop<T> {
    pub center: Cx<T>,
    pub radius: T,
    /// +1 counter-clockwise, −1 clockwise.
    pub orientation: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSpec<T> {
    pub base_height: T,
    pub loops: Vec<ResidueLoop<T>>,
    pub truncation: T,
}

impl<T: Real> PathSpec<T> {
    pub fn straight(base_height: T, truncation: T) -> Self {
        Self {
            base_height,
            loops: Vec::new(),
            truncation,
        }
    }
}

const COINCIDE: f64 = 1e-9;

fn check_pinch<T: Real>(poles: &[PoleSpec<T>]) -> Result<()> {
    for a in poles.iter().filter(|p| p.active && p.side == Side::Above) {
        for b in poles.iter().filter(|p| p.active && p.side == Side::Below) {
            if (a.position - b.position).norm() < T::cst(COINCIDE) {
                return Err(QkzError::UnresolvedPinch(format!(
                    "{:?} above and {:?} below coincide at {}",
                    a.anchor, b.anchor, a.position
                )));
            }
        }
    }
    Ok(())
}

fn line_clearance<T: Real>(poles: &[PoleSpec<T>], h: T) -> T {
    poles
        .iter()
        .filter(|p| p.active)
        .fold(T::infinity(), |m, p| m.min((p.position.im - h).abs()))
}

/// Base line plus residue loops putting every active pole on its side.
pub fn build_contour<T: Real>(poles: &[PoleSpec<T>], cfg: &ContourConfig<T>) -> Result<PathSpec<T>> {
    check_pinch(poles)?;
    let want = cfg.delta * T::cst(0.5);
    let mut h = cfg.base_height;
    if line_clearance(poles, h) < want {
        let mut best = (line_clearance(poles, h), h);
        for k in 1..=8 {
            for s in [T::one(), -T::one()] {
                let cand = cfg.base_height + s * want * T::from_i32(k).unwrap();
                let c = line_clearance(poles, cand);
                if c > best.0 {
                    best = (c, cand);
                }
            }
            if best.0 >= want {
                break;
            }
        }
        h = best.1;
    }
    let mut loops: Vec<ResidueLoop<T>> = Vec::new();
    for p in poles.iter().filter(|p| p.active) {
        let orientation = match p.side {
            Side::Above if p.position.im < h => 1,
            Side::Below if p.position.im > h => -1,
            _ => continue,
        };
        if loops.iter().any(|l| (l.center - p.position).norm() < T::cst(COINCIDE)) {
            continue;
        }
        let mut r = cfg.delta;
        for q in poles {
            let d = (q.position - p.position).norm();
            if d >= T::cst(COINCIDE) {
                r = r.min(d * T::cst(0.45));
            }
        }
        if p.position.im.abs() + r >= cfg.band {
            return Err(QkzError::BandOverflow(format!(
                "loop around {} leaves the band |Im| < {}",
                p.position, cfg.band
            )));
        }
        loops.push(ResidueLoop {
            center: p.position,
            radius: r,
            orientation,
        });
    }
    Ok(PathSpec {
        base_height: h,
        loops,
        truncation: cfg.truncation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourCheck<T> {
    pub valid: bool,
    pub min_margin: T,
    pub misplaced: usize,
}

/// Checks every active pole lies on its required side, with at least
/// `required_margin` distance to the line and to every loop.
pub fn validate_contour<T: Real>(path: &PathSpec<T>, poles: &[PoleSpec<T>], required_margin: T) -> ContourCheck<T> {
    let mut min_margin = T::infinity();
    let mut misplaced = 0;
    for p in poles.iter().filter(|p| p.active) {
        let mut level = if p.position.im > path.base_height { 1 } else { 0 };
        let mut margin = (p.position.im - path.base_height).abs();
        for l in &path.loops {
            let d = (p.position - l.center).norm();
            margin = margin.min((d - l.radius).abs());
            if d < l.radius {
                level += l.orientation;
            }
        }
        let want = match p.side {
            Side::Above => 1,
            Side::Below => 0,
        };
        if level != want {
            misplaced += 1;
        }
        min_margin = min_margin.min(margin);
    }
    ContourCheck {
        valid: misplaced == 0 && min_margin >= required_margin,
        min_margin,
        misplaced,
    }
}

/// Polylines for plotting: the base segment followed by each loop.
pub fn polyline<T: Real>(path: &PathSpec<T>, points_per_loop: usize) -> Vec<Vec<[f64; 2]>> {
    let h = path.base_height.to_f64_lossy();
    let t = path.truncation.to_f64_lossy();
    let mut out = vec![vec![[-t, h], [t, h]]];
    for l in &path.loops {
        let (c, r) = (l.center, l.radius.to_f64_lossy());
        let pts = (0..=points_per_loop)
            .map(|k| {
                let th = std::f64::consts::TAU * k as f64 / points_per_loop as f64 * l.orientation as f64;
                [c.re.to_f64_lossy() + r * th.cos(), c.im.to_f64_lossy() + r * th.sin()]
            })
            .collect();
        out.push(pts);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> ContourConfig<f64> {
        ContourConfig {
            delta: PI / 8.0,
            truncation: 28.2,
            band: 3.65,
            base_height: 0.0,
        }
    }

    fn phi_pair(beta: f64, n: f64, active: (bool, bool)) -> Vec<PoleSpec<f64>> {
        vec![
            PoleSpec::near(Anchor::Beta(0), PoleFamily::Phi, cx(beta, 0.0), -PI / n, active.0),
            PoleSpec::near(Anchor::Beta(0), PoleFamily::Phi, cx(beta, 0.0), PI / n, active.1),
        ]
    }

    #[test]
    fn no_poles_gives_straight_line() {
        let p = build_contour::<f64>(&[], &cfg()).unwrap();
        assert_eq!(p, PathSpec::straight(0.0, 28.2));
        assert!(validate_contour(&p, &[], 0.1).valid);
    }

    #[test]
    fn sides_of_near_poles() {
        let poles = phi_pair(0.5, 2.0, (true, true));
        assert_eq!(poles[0].side, Side::Above);
        assert_eq!(poles[1].side, Side::Below);
        let psi = PoleSpec::near(Anchor::Var(0), PoleFamily::Psi, cx(0.0, 0.0), 2.0 * PI / 3.0, true);
        assert_eq!(psi.side, Side::Above);
    }

    #[test]
    fn loops_force_sides_and_validate() {
        let poles = phi_pair(0.5, 2.0, (true, true));
        let path = build_contour(&poles, &cfg()).unwrap();
        assert_eq!(path.loops.len(), 2);
        assert_eq!(path.loops[0].orientation, 1);
        assert_eq!(path.loops[1].orientation, -1);
        let chk = validate_contour(&path, &poles, cfg().delta / 2.0);
        assert!(chk.valid, "{chk:?}");
    }

    #[test]
    fn cancelled_pole_needs_no_loop() {
        let poles = phi_pair(0.5, 2.0, (false, true));
        let path = build_contour(&poles, &cfg()).unwrap();
        assert_eq!(path.loops.len(), 1);
        assert_eq!(path.loops[0].orientation, -1);
    }

    #[test]
    fn moving_a_loop_away_breaks_validation() {
        let poles = phi_pair(0.5, 2.0, (true, false));
        let mut path = build_contour(&poles, &cfg()).unwrap();
        assert!(validate_contour(&path, &poles, 0.0).valid);
        path.loops[0].center = path.loops[0].center - cx(0.0, 2.0 * cfg().delta);
        assert!(!validate_contour(&path, &poles, 0.0).valid);
    }

    #[test]
    fn distinct_betas_have_disjoint_loops() {
        let mut poles = phi_pair(0.0, 2.0, (true, true));
        poles.extend(phi_pair(0.8, 2.0, (true, true)));
        let path = build_contour(&poles, &cfg()).unwrap();
        for (i, a) in path.loops.iter().enumerate() {
            for b in &path.loops[i + 1..] {
                assert!((a.center - b.center).norm() > a.radius + b.radius);
            }
        }
        assert!(validate_contour(&path, &poles, 0.0).valid);
    }

    #[test]
    fn opposite_requirements_at_one_point_pinch() {
        let a = PoleSpec::near(Anchor::Beta(0), PoleFamily::Phi, cx(0.0, 0.0), -PI / 2.0, true);
        let b = PoleSpec::near(Anchor::Var(0), PoleFamily::Psi, cx(0.0, -PI / 2.0 + PI), -PI, true);
        assert!(matches!(build_contour(&[a, b], &cfg()), Err(QkzError::UnresolvedPinch(_))));
    }

    #[test]
    fn far_lattice_instances_leave_the_band() {
        for n in [2.0, 3.0] {
            for p in phi_pair(0.0, n, (true, true)) {
                for (a, b) in [(1, 0), (0, 1), (1, 1)] {
                    let q = p.lattice_instance(a, b, 7.3, 9.4);
                    assert!(q.position.im.abs() >= 7.3 - 2.0 * PI / n);
                    assert!(q.position.im.abs() > cfg().band);
                }
            }
        }
    }

    #[test]
    fn base_line_moves_off_a_close_pole() {
        let p = PoleSpec::near(Anchor::Var(0), PoleFamily::Phi, cx(0.0, 1.5), -1.5 + 0.01, true);
        let path = build_contour(&[p.clone()], &cfg()).unwrap();
        assert!((path.base_height - 0.01).abs() >= cfg().delta / 2.0);
        assert!(validate_contour(&path, &[p], 0.0).valid);
    }
}
