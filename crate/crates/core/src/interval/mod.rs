//! Compact real intervals and interval boxes with outward-rounded arithmetic.
//!
//! Arithmetic endpoints are rounded in the safe direction (see [`round`]), so
//! every result contains the exact real range of its operands. Elementary
//! functions from the platform libm are not correctly rounded; their
//! endpoints are pushed outward by a few ulps instead.

mod boxes;
pub mod round;

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boxes::IntervalBox;

use round::{add_down, add_up, div_down, div_up, mul_down, mul_up, sub_down, sub_up};

/// Outward steps applied to tanh/exp/sin/cos results.
pub const LIBM_ULPS: u32 = 2;
/// Outward steps applied to the logistic function (three rounded operations).
pub const LOGISTIC_ULPS: u32 = 4;

/// Closed interval `[lo, hi]` with finite endpoints, `lo <= hi`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    /// Panics if the endpoints are not finite or out of order; use
    /// [`Interval::try_new`] for untrusted input.
    pub fn new(lo: f64, hi: f64) -> Self {
        Self::try_new(lo, hi).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_finite() && hi.is_finite() && lo <= hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::InvalidInterval { lo, hi })
        }
    }

    pub fn point(x: f64) -> Self {
        Self::new(x, x)
    }

    /// Internal constructor for results known to be ordered; endpoints may
    /// only be non-finite on floating-point overflow.
    #[inline]
    pub(crate) fn raw(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi || lo.is_nan() || hi.is_nan(), "[{lo}, {hi}]");
        Self { lo, hi }
    }

    #[inline]
    pub fn lo(&self) -> f64 {
        self.lo
    }

    #[inline]
    pub fn hi(&self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    #[inline]
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::raw(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then(|| Interval::raw(lo, hi))
    }

    /// Grows the interval about its midpoint: radius scaled by `factor`,
    /// then padded by `pad` on each side. Endpoints never move inward.
    pub fn inflate(&self, factor: f64, pad: f64) -> Interval {
        let m = self.mid();
        let r = 0.5 * self.width() * factor + pad;
        Interval::raw(sub_down(m, r).min(self.lo), add_up(m, r).max(self.hi))
    }

    pub fn checked_div(&self, rhs: &Interval) -> Result<Interval> {
        if rhs.contains_zero() {
            return Err(Error::DivisionByZeroInterval(format!("{self} / {rhs}")));
        }
        let (a, b) = (self, rhs);
        let lo = div_down(a.lo, b.lo)
            .min(div_down(a.lo, b.hi))
            .min(div_down(a.hi, b.lo))
            .min(div_down(a.hi, b.hi));
        let hi = div_up(a.lo, b.lo)
            .max(div_up(a.lo, b.hi))
            .max(div_up(a.hi, b.lo))
            .max(div_up(a.hi, b.hi));
        Ok(Interval::raw(lo, hi))
    }

    /// Applies one of the four basic operations.
    pub fn arith(op: ArithOp, x: &Interval, y: &Interval) -> Result<Interval> {
        Ok(match op {
            ArithOp::Add => *x + *y,
            ArithOp::Sub => *x - *y,
            ArithOp::Mul => *x * *y,
            ArithOp::Div => x.checked_div(y)?,
        })
    }

    /// Interval extension of a scalar function.
    pub fn map(&self, f: ScalarFn) -> Interval {
        f.eval_interval(self)
    }

    pub fn sqr(&self) -> Interval {
        let (lo, hi) = (self.lo, self.hi);
        if lo >= 0.0 {
            Interval::raw(mul_down(lo, lo), mul_up(hi, hi))
        } else if hi <= 0.0 {
            Interval::raw(mul_down(hi, hi), mul_up(lo, lo))
        } else {
            Interval::raw(0.0, mul_up(lo, lo).max(mul_up(hi, hi)))
        }
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}, {:?}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;
    fn try_from(v: [f64; 2]) -> Result<Self> {
        Interval::try_new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(iv: Interval) -> Self {
        [iv.lo, iv.hi]
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Add for Interval {
    type Output = Interval;
    #[inline]
    fn add(self, rhs: Interval) -> Interval {
        Interval::raw(add_down(self.lo, rhs.lo), add_up(self.hi, rhs.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    #[inline]
    fn sub(self, rhs: Interval) -> Interval {
        Interval::raw(sub_down(self.lo, rhs.hi), sub_up(self.hi, rhs.lo))
    }
}

impl Mul for Interval {
    type Output = Interval;
    #[inline]
    fn mul(self, rhs: Interval) -> Interval {
        let (a, b) = (self, rhs);
        let lo = mul_down(a.lo, b.lo)
            .min(mul_down(a.lo, b.hi))
            .min(mul_down(a.hi, b.lo))
            .min(mul_down(a.hi, b.hi));
        let hi = mul_up(a.lo, b.lo)
            .max(mul_up(a.lo, b.hi))
            .max(mul_up(a.hi, b.lo))
            .max(mul_up(a.hi, b.hi));
        Interval::raw(lo, hi)
    }
}

impl Mul<f64> for Interval {
    type Output = Interval;
    fn mul(self, rhs: f64) -> Interval {
        if rhs >= 0.0 {
            Interval::raw(mul_down(self.lo, rhs), mul_up(self.hi, rhs))
        } else {
            Interval::raw(mul_down(self.hi, rhs), mul_up(self.lo, rhs))
        }
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval::raw(-self.hi, -self.lo)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// Scalar functions with interval extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarFn {
    Tanh,
    Logistic,
    Relu,
    Exp,
    Identity,
    Sqr,
    Sin,
    Cos,
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ScalarFn {
    /// Point evaluation, using exactly the floating-point operations the
    /// interval extension brackets.
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ScalarFn::Tanh => x.tanh(),
            ScalarFn::Logistic => logistic(x),
            ScalarFn::Relu => x.max(0.0),
            ScalarFn::Exp => x.exp(),
            ScalarFn::Identity => x,
            ScalarFn::Sqr => x * x,
            ScalarFn::Sin => x.sin(),
            ScalarFn::Cos => x.cos(),
        }
    }

    /// True when the function is non-decreasing on the whole real line.
    pub fn is_monotone(self) -> bool {
        matches!(
            self,
            ScalarFn::Tanh | ScalarFn::Logistic | ScalarFn::Relu | ScalarFn::Exp | ScalarFn::Identity
        )
    }

    /// Lower bound of `f(x)` for monotone `f`.
    #[inline]
    pub fn eval_down(self, x: f64) -> f64 {
        match self {
            ScalarFn::Tanh => {
                if x == 0.0 {
                    0.0
                } else {
                    round::widen_down(x.tanh(), LIBM_ULPS).max(-1.0)
                }
            }
            ScalarFn::Logistic => {
                if x == 0.0 {
                    0.5
                } else {
                    round::widen_down(logistic(x), LOGISTIC_ULPS).max(0.0)
                }
            }
            ScalarFn::Exp => {
                if x == 0.0 {
                    1.0
                } else {
                    round::widen_down(x.exp(), LIBM_ULPS).max(0.0)
                }
            }
            ScalarFn::Relu | ScalarFn::Identity => self.eval(x),
            _ => unreachable!("eval_down on non-monotone {self:?}"),
        }
    }

    /// Upper bound of `f(x)` for monotone `f`.
    #[inline]
    pub fn eval_up(self, x: f64) -> f64 {
        match self {
            ScalarFn::Tanh => {
                if x == 0.0 {
                    0.0
                } else {
                    round::widen_up(x.tanh(), LIBM_ULPS).min(1.0)
                }
            }
            ScalarFn::Logistic => {
                if x == 0.0 {
                    0.5
                } else {
                    round::widen_up(logistic(x), LOGISTIC_ULPS).min(1.0)
                }
            }
            ScalarFn::Exp => {
                if x == 0.0 {
                    1.0
                } else {
                    round::widen_up(x.exp(), LIBM_ULPS)
                }
            }
            ScalarFn::Relu | ScalarFn::Identity => self.eval(x),
            _ => unreachable!("eval_up on non-monotone {self:?}"),
        }
    }

    pub fn eval_interval(self, x: &Interval) -> Interval {
        match self {
            ScalarFn::Sqr => x.sqr(),
            ScalarFn::Sin => trig_hull(x, 0.0),
            ScalarFn::Cos => trig_hull(x, FRAC_PI_2),
            _ => Interval::raw(self.eval_down(x.lo), self.eval_up(x.hi)),
        }
    }
}

/// Hull of `sin(x + shift)` over `x`; `shift = pi/2` gives cosine.
///
/// Endpoint values are widened, then saturated to +-1 whenever an extremum
/// `pi/2 + k*pi` of the shifted sine may lie inside the interval. The
/// membership test is padded so rounding in `k*pi` can only add extrema.
fn trig_hull(x: &Interval, shift: f64) -> Interval {
    if x.width() >= 2.0 * PI || x.lo.abs().max(x.hi.abs()) > 1.0e12 {
        return Interval::raw(-1.0, 1.0);
    }
    let f = |t: f64| if shift == 0.0 { t.sin() } else { t.cos() };
    let endpoint = |t: f64| -> (f64, f64) {
        if t == 0.0 {
            let v = f(0.0);
            (v, v)
        } else {
            let v = f(t);
            (
                round::widen_down(v, LIBM_ULPS).max(-1.0),
                round::widen_up(v, LIBM_ULPS).min(1.0),
            )
        }
    };
    let (a_lo, a_hi) = endpoint(x.lo);
    let (b_lo, b_hi) = endpoint(x.hi);
    let mut lo = a_lo.min(b_lo);
    let mut hi = a_hi.max(b_hi);

    // extrema of sin(t + shift) sit at t = pi/2 - shift + k*pi
    let base = FRAC_PI_2 - shift;
    let pad = 1.0e-12 * (1.0 + x.lo.abs().max(x.hi.abs()));
    let k_first = ((x.lo - base - pad) / PI).ceil() as i64;
    let k_last = ((x.hi - base + pad) / PI).floor() as i64;
    for k in k_first..=k_last {
        if k.rem_euclid(2) == 0 {
            hi = 1.0;
        } else {
            lo = -1.0;
        }
    }
    Interval::raw(lo, hi)
}
