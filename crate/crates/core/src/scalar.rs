use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real scalar used throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn cst(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Cx<T> = Complex<T>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

#[inline]
pub fn re<T: Real>(x: T) -> Cx<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub fn im<T: Real>(y: T) -> Cx<T> {
    Complex::new(T::zero(), y)
}

pub fn is_finite<T: Real>(z: Cx<T>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}

/// Relative distance `|a-b| / max(|a|,|b|,floor)`.
pub fn rel_err<T: Real>(a: Cx<T>, b: Cx<T>) -> T {
    let scale = a.norm().max(b.norm()).max(T::cst(1e-30));
    (a - b).norm() / scale
}

/// Relative comparison of two values given as complex logarithms: the
/// magnitude is compared exactly and the phase modulo 2π.
pub fn log_rel_err<T: Real>(la: Cx<T>, lb: Cx<T>) -> T {
    let d = la - lb;
    let two_pi = T::TAU();
    let ph = d.im - two_pi * (d.im / two_pi).round();
    (Complex::new(d.re, ph).exp() - Complex::new(T::one(), T::zero())).norm()
}

/// Neumaier-compensated complex accumulator.
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<T: Real> {
    sum: Cx<T>,
    comp: Cx<T>,
}

impl<T: Real> Default for KahanSum<T> {
    fn default() -> Self {
        Self {
            sum: Complex::new(T::zero(), T::zero()),
            comp: Complex::new(T::zero(), T::zero()),
        }
    }
}

impl<T: Real> KahanSum<T> {
    pub fn add(&mut self, x: Cx<T>) {
        self.sum.re = neumaier(self.sum.re, x.re, &mut self.comp.re);
        self.sum.im = neumaier(self.sum.im, x.im, &mut self.comp.im);
    }

    pub fn value(&self) -> Cx<T> {
        self.sum + self.comp
    }
}

fn neumaier<T: Real>(s: T, x: T, c: &mut T) -> T {
    let t = s + x;
    if s.abs() >= x.abs() {
        *c += (s - t) + x;
    } else {
        *c += (x - t) + s;
    }
    t
}
