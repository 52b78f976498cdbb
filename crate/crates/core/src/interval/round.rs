//! Directed rounding for the four basic operations.
//!
//! Each result is computed in round-to-nearest and then the exact rounding
//! error is recovered with an error-free transformation (TwoSum for `+`/`-`,
//! exact product residuals for `*` and `/`). The nearest result is stepped one ulp only
//! when the error points the wrong way, so `down(a, b)` is the largest float
//! `<=` the exact result and `up(a, b)` the smallest float `>=` it.
//!
//! When the error-free transformation is not exact (overflow, or results
//! deep in the subnormal range) we fall back to an unconditional one-ulp
//! step, which is still an enclosure.

/// Below this magnitude product residuals may themselves be rounded.
const TINY: f64 = 1.0e-290;
/// Above this magnitude Dekker's split may overflow.
const HUGE: f64 = 1.0e290;

/// `a*b - p` exactly, where `p = fl(a*b)`.
#[cfg(target_feature = "fma")]
#[inline]
fn prod_err(a: f64, b: f64, p: f64) -> f64 {
    a.mul_add(b, -p)
}

/// `a*b - p` exactly, where `p = fl(a*b)` (Dekker's product; a software
/// `mul_add` is far slower when FMA is not a compile-time target feature).
#[cfg(not(target_feature = "fma"))]
#[inline]
fn prod_err(a: f64, b: f64, p: f64) -> f64 {
    #[inline]
    fn split(x: f64) -> (f64, f64) {
        let c = 134_217_729.0 * x;
        let hi = c - (c - x);
        (hi, x - hi)
    }
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    ((ah * bh - p) + ah * bl + al * bh) + al * bl
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn step_down(s: f64, err: f64) -> f64 {
    if err < 0.0 {
        s.next_down()
    } else {
        s
    }
}

#[inline]
fn step_up(s: f64, err: f64) -> f64 {
    if err > 0.0 {
        s.next_up()
    } else {
        s
    }
}

#[inline]
pub fn add_down(a: f64, b: f64) -> f64 {
    let (s, err) = two_sum(a, b);
    if !s.is_finite() {
        return s;
    }
    step_down(s, err)
}

#[inline]
pub fn add_up(a: f64, b: f64) -> f64 {
    let (s, err) = two_sum(a, b);
    if !s.is_finite() {
        return s;
    }
    step_up(s, err)
}

#[inline]
pub fn sub_down(a: f64, b: f64) -> f64 {
    add_down(a, -b)
}

#[inline]
pub fn sub_up(a: f64, b: f64) -> f64 {
    add_up(a, -b)
}

#[inline]
pub fn mul_down(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return p;
    }
    if !p.is_finite() || p.abs() < TINY || a.abs() > HUGE || b.abs() > HUGE {
        return p.next_down();
    }
    step_down(p, prod_err(a, b, p))
}

#[inline]
pub fn mul_up(a: f64, b: f64) -> f64 {
    let p = a * b;
    if a == 0.0 || b == 0.0 {
        return p;
    }
    if !p.is_finite() || p.abs() < TINY || a.abs() > HUGE || b.abs() > HUGE {
        return p.next_up();
    }
    step_up(p, prod_err(a, b, p))
}

/// Sign of `a / b - q` where `q` is the rounded quotient.
#[inline]
fn div_err(a: f64, b: f64, q: f64) -> f64 {
    // a - q*b is representable; a - p is exact since p is within an ulp of a.
    let p = q * b;
    let r = (a - p) - prod_err(q, b, p);
    if b > 0.0 {
        r
    } else {
        -r
    }
}

#[inline]
pub fn div_down(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a == 0.0 {
        return q;
    }
    if !q.is_finite() || q.abs() < TINY || a.abs() < TINY || a.abs() > HUGE || b.abs() > HUGE {
        return q.next_down();
    }
    step_down(q, div_err(a, b, q))
}

#[inline]
pub fn div_up(a: f64, b: f64) -> f64 {
    let q = a / b;
    if a == 0.0 {
        return q;
    }
    if !q.is_finite() || q.abs() < TINY || a.abs() < TINY || a.abs() > HUGE || b.abs() > HUGE {
        return q.next_up();
    }
    step_up(q, div_err(a, b, q))
}

/// Steps `x` down by `n` ulps.
#[inline]
pub fn widen_down(mut x: f64, n: u32) -> f64 {
    for _ in 0..n {
        x = x.next_down();
    }
    x
}

/// Steps `x` up by `n` ulps.
#[inline]
pub fn widen_up(mut x: f64, n: u32) -> f64 {
    for _ in 0..n {
        x = x.next_up();
    }
    x
}
