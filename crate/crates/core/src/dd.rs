//! Double-double arithmetic, enough to form phases `t * tau` to ~32 digits
//! and reduce them modulo 2*pi before handing them to f64 trigonometry.

use num_complex::Complex64;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Dd = Dd { hi: 0.6931471805599453, lo: 2.3190468138462996e-17 };
const TWO_PI: Dd = Dd { hi: 6.283185307179586, lo: 2.4492935982947064e-16 };
const PI_F: f64 = std::f64::consts::PI;

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Dd {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        Dd { hi, lo }
    }

    pub fn div_f64(self, b: f64) -> Dd {
        let q1 = self.hi / b;
        let r = self - Dd::new(b).mul_f64(q1);
        let q2 = r.hi / b;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    pub fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b * Dd::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * Dd::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::new(q3)
    }

    fn scale_pow2(self, k: i32) -> Dd {
        // split so that neither factor overflows on its own
        let (a, b) = (k / 2, k - k / 2);
        let fa = 2f64.powi(a);
        let fb = 2f64.powi(b);
        Dd { hi: self.hi * fa * fb, lo: self.lo * fa * fb }
    }

    pub fn exp(self) -> Dd {
        if self.hi > 709.7 {
            return Dd::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).div_f64(1024.0);
        // expm1 on the reduced argument
        let mut s = r;
        let mut term = r;
        for i in 2..=11 {
            term = (term * r).div_f64(i as f64);
            s = s + term;
            if term.hi.abs() < 1e-36 {
                break;
            }
        }
        for _ in 0..10 {
            s = s.mul_f64(2.0) + s * s;
        }
        (s + Dd::ONE).scale_pow2(k as i32)
    }

    /// Natural log of a positive number.
    pub fn ln(self) -> Dd {
        let x = Dd::new(self.hi.ln());
        x + self * (-x).exp() - Dd::ONE
    }

    /// Representative of `self` modulo 2*pi in [-pi, pi].
    pub fn rem_2pi(self) -> Dd {
        let mut r = self;
        for _ in 0..8 {
            if r.hi.abs() <= PI_F {
                break;
            }
            let k = (r.hi / TWO_PI.hi).round();
            r = r - TWO_PI.mul_f64(k);
        }
        r
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, b: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

/// e^{iu} - 1 with u given in double-double.
pub fn cis_m1(u: Dd) -> Complex64 {
    let th = u.rem_2pi().to_f64();
    let h = (0.5 * th).sin();
    Complex64::new(-2.0 * h * h, th.sin())
}

/// e^{iu} - 1 - iu with u given in double-double.
pub fn cis_m1_mi(u: Dd) -> Complex64 {
    let x = u.to_f64();
    if x.abs() < 0.5 {
        let h = (0.5 * x).sin();
        let x2 = x * x;
        // sin x - x
        let mut s = 0.0;
        let mut term = -x * x2 / 6.0;
        let mut i = 3.0;
        while term.abs() > 1e-40 {
            s += term;
            term *= -x2 / ((i + 1.0) * (i + 2.0));
            i += 2.0;
        }
        return Complex64::new(-2.0 * h * h, s);
    }
    let c = cis_m1(u);
    Complex64::new(c.re, c.im - x)
}

/// e^{ix} - 1 for an f64 argument.
pub fn cis_m1_f64(x: f64) -> Complex64 {
    let h = (0.5 * x).sin();
    Complex64::new(-2.0 * h * h, x.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_ln_round_trip() {
        for &x in &[1e-3, 0.5, 1.0, 2.0, 3.7, 100.0, 1e10, 1e-10] {
            let y = Dd::new(x).ln().exp();
            let rel = ((y - Dd::new(x)).to_f64() / x).abs();
            assert!(rel < 1e-30, "x={x} rel={rel}");
        }
    }

    #[test]
    fn ln2_and_exp1() {
        let l = Dd::new(2.0).ln();
        assert!((l - LN2).to_f64().abs() < 1e-31);
        // e = 2.718281828459045 + 1.4456468917292502e-16
        let e = Dd::ONE.exp();
        assert_eq!(e.hi, 2.718281828459045);
        assert!((e.lo - 1.4456468917292502e-16).abs() < 1e-31);
    }

    #[test]
    fn powers_of_two_are_exact() {
        let l2 = Dd::new(2.0).ln();
        for k in [-60i32, -7, 0, 5, 40, 100] {
            let v = l2.mul_f64(k as f64).exp();
            let want = 2f64.powi(k);
            assert!(((v.to_f64() - want) / want).abs() < 1e-30);
        }
    }

    #[test]
    fn reduce_large_phase() {
        // 2^60 mod 2pi, reference from a 60-digit computation
        let u = Dd::new(2f64.powi(60));
        let r = u.rem_2pi().to_f64();
        assert!((r - (-2.161319993139727)).abs() < 1e-13, "{r}");
    }

    #[test]
    fn compensated_small_argument() {
        let x = 1e-4;
        let c = cis_m1_mi(Dd::new(x));
        let want = -x * x * x / 6.0 + x.powi(5) / 120.0;
        assert!(((c.im - want) / want).abs() < 1e-15);
    }
}
