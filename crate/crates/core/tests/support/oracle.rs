//! Arbitrary-precision reference values for J0, Y0, J1, Y1 and H0⁽²⁾.
//!
//! Everything is summed from the ascending series in binary fixed point
//! on `BigInt`, with the working precision raised in proportion to |z| so
//! that the cancellation inside the series (and in J0 − iY0) stays far
//! below f64 resolution. Slow, but independent of the production code.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::sync::OnceLock;

const PMAX: u64 = 3400;

struct Constants {
    pi: BigInt,
    gamma: BigInt,
    ln2: BigInt,
}

fn constants() -> &'static Constants {
    static C: OnceLock<Constants> = OnceLock::new();
    C.get_or_init(|| {
        let p = PMAX;
        let pi = (atan_inv(5, p) << 4u32) - (atan_inv(239, p) << 2u32);
        let ln2 = atanh_inv(3, p) << 1u32;
        let gamma = euler_gamma(p, &ln2);
        Constants { pi, gamma, ln2 }
    })
}

fn one(p: u64) -> BigInt {
    BigInt::one() << p
}

/// Right shift rounding toward zero, so that series terms reach exactly 0.
fn shr(x: BigInt, s: u64) -> BigInt {
    if x.is_negative() {
        -((-x) >> s)
    } else {
        x >> s
    }
}

fn mul(a: &BigInt, b: &BigInt, p: u64) -> BigInt {
    shr(a * b, p)
}

fn div(a: &BigInt, b: &BigInt, p: u64) -> BigInt {
    (a << p) / b
}

fn reduce(x: &BigInt, p: u64) -> BigInt {
    shr(x.clone(), PMAX - p)
}

fn from_f64(x: f64, p: u64) -> BigInt {
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let m = BigInt::from(mant) * sign;
    let shift = e + p as i64;
    if shift >= 0 {
        m << shift as u64
    } else {
        shr(m, (-shift) as u64)
    }
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 900 {
        x *= 2f64.powi(900);
        e -= 900;
    }
    while e < -900 {
        x *= 2f64.powi(-900);
        e += 900;
    }
    x * 2f64.powi(e as i32)
}

fn to_f64(a: &BigInt, p: u64) -> f64 {
    if a.is_zero() {
        return 0.0;
    }
    let bits = a.bits() as i64;
    let shift = (bits - 62).max(0);
    let top = shr(a.clone(), shift as u64).to_i64().unwrap() as f64;
    ldexp(top, shift - p as i64)
}

/// atan(1/n)
fn atan_inv(n: u64, p: u64) -> BigInt {
    let n2 = BigInt::from(n * n);
    let mut x = one(p + 16) / n;
    let mut sum = x.clone();
    let mut k = 1u64;
    while !x.is_zero() {
        x /= &n2;
        let t = &x / (2 * k + 1);
        if k % 2 == 1 {
            sum -= t;
        } else {
            sum += t;
        }
        k += 1;
    }
    sum >> 16u32
}

/// atanh(1/n)
fn atanh_inv(n: u64, p: u64) -> BigInt {
    let n2 = BigInt::from(n * n);
    let mut x = one(p + 16) / n;
    let mut sum = x.clone();
    let mut k = 1u64;
    while !x.is_zero() {
        x /= &n2;
        sum += &x / (2 * k + 1);
        k += 1;
    }
    sum >> 16u32
}

/// atanh(y) for |y| well below 1.
fn atanh_series(y: &BigInt, p: u64) -> BigInt {
    let y2 = mul(y, y, p);
    let mut pw = y.clone();
    let mut sum = y.clone();
    let mut k = 1u64;
    while !pw.is_zero() {
        pw = mul(&pw, &y2, p);
        sum += &pw / (2 * k + 1);
        k += 1;
    }
    sum
}

/// Natural log of a positive fixed-point number.
fn ln(x: &BigInt, p: u64, ln2: &BigInt) -> BigInt {
    assert!(x.is_positive());
    let k = x.bits() as i64 - p as i64 - 1;
    let m = if k >= 0 { shr(x.clone(), k as u64) } else { x << (-k) as u64 };
    let o = one(p);
    let y = div(&(&m - &o), &(&m + &o), p);
    ln2 * k + (atanh_series(&y, p) << 1u32)
}

fn sqrt(x: &BigInt, p: u64) -> BigInt {
    (x << p).sqrt()
}

/// atan(t) for |t| ≤ 1.
fn atan(t: &BigInt, p: u64) -> BigInt {
    let o = one(p);
    let mut t = t.clone();
    let halvings = 10u32;
    for _ in 0..halvings {
        let r = sqrt(&(&o + mul(&t, &t, p)), p);
        t = div(&t, &(&o + r), p);
    }
    let t2 = mul(&t, &t, p);
    let mut pw = t.clone();
    let mut sum = t.clone();
    let mut k = 1u64;
    while !pw.is_zero() {
        pw = mul(&pw, &t2, p);
        let term = &pw / (2 * k + 1);
        if k % 2 == 1 {
            sum -= term;
        } else {
            sum += term;
        }
        k += 1;
    }
    sum << halvings
}

/// arg(x + iy) in (−π, π].
fn arg(x: &BigInt, y: &BigInt, p: u64, pi: &BigInt) -> BigInt {
    if x.is_zero() && y.is_zero() {
        return BigInt::zero();
    }
    if y.abs() <= x.abs() {
        let a = atan(&div(y, x, p), p);
        if x.is_positive() {
            a
        } else if y.is_negative() {
            a - pi
        } else {
            a + pi
        }
    } else {
        let a = atan(&div(x, y, p), p);
        let half = shr(pi.clone(), 1);
        if y.is_positive() {
            half - a
        } else {
            -half - a
        }
    }
}

/// Brent–McMillan with A_0 = −ln n, so γ = U/V up to O(e^(−4n)).
fn euler_gamma(p: u64, ln2: &BigInt) -> BigInt {
    let n = (p as f64 * std::f64::consts::LN_2 / 4.0).ceil() as u64 + 8;
    let n2 = BigInt::from(n) * BigInt::from(n);
    let lnn = ln(&(BigInt::from(n) << p), p, ln2);
    let mut a = -lnn;
    let mut b = one(p);
    let mut u = a.clone();
    let mut v = b.clone();
    let mut k = 1u64;
    loop {
        let kk = BigInt::from(k);
        b = &b * &n2 / (&kk * &kk);
        a = (&a * &n2 / &kk + &b) / &kk;
        u += &a;
        v += &b;
        if a.is_zero() && b.is_zero() && k > n {
            break;
        }
        k += 1;
    }
    div(&u, &v, p)
}

#[derive(Clone, Debug)]
struct Cx {
    re: BigInt,
    im: BigInt,
}

impl Cx {
    fn new(re: BigInt, im: BigInt) -> Self {
        Cx { re, im }
    }
    fn zero() -> Self {
        Cx::new(BigInt::zero(), BigInt::zero())
    }
    fn real(re: BigInt) -> Self {
        Cx::new(re, BigInt::zero())
    }
    fn add(&self, o: &Cx) -> Cx {
        Cx::new(&self.re + &o.re, &self.im + &o.im)
    }
    fn sub(&self, o: &Cx) -> Cx {
        Cx::new(&self.re - &o.re, &self.im - &o.im)
    }
    fn mul(&self, o: &Cx, p: u64) -> Cx {
        Cx::new(
            shr(&self.re * &o.re - &self.im * &o.im, p),
            shr(&self.re * &o.im + &self.im * &o.re, p),
        )
    }
    fn scale(&self, s: &BigInt, p: u64) -> Cx {
        Cx::new(mul(&self.re, s, p), mul(&self.im, s, p))
    }
    fn div_int(&self, d: u64) -> Cx {
        Cx::new(&self.re / d, &self.im / d)
    }
    fn neg(&self) -> Cx {
        Cx::new(-&self.re, -&self.im)
    }
    fn times_i(&self) -> Cx {
        Cx::new(-&self.im, self.re.clone())
    }
    fn recip(&self, p: u64) -> Cx {
        let den = mul(&self.re, &self.re, p) + mul(&self.im, &self.im, p);
        Cx::new(div(&self.re, &den, p), div(&(-&self.im), &den, p))
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
    fn to_c64(&self, p: u64) -> Complex64 {
        Complex64::new(to_f64(&self.re, p), to_f64(&self.im, p))
    }
}

/// Reference values at one argument.
#[derive(Clone, Copy, Debug)]
pub struct Reference {
    pub j0: Complex64,
    pub y0: Complex64,
    pub j1: Complex64,
    pub y1: Complex64,
    pub h2: Complex64,
}

/// Fraction bits needed at |z| = r: largest series term ~ e^r, smallest
/// result of interest (H0⁽²⁾ on the lower ray) ~ e^(−0.71 r).
fn precision_for(r: f64) -> u64 {
    let p = (2.6 * r + 160.0).ceil() as u64;
    p.clamp(200, PMAX - 64)
}

/// Reference J0, Y0, J1, Y1, H0⁽²⁾ at `z` (z ≠ 0, |z| ≤ 1200).
pub fn reference(z: Complex64) -> Reference {
    assert!(z.norm() > 0.0 && z.norm() <= 1200.0);
    let c = constants();
    let p = precision_for(z.norm());
    let pi = reduce(&c.pi, p);
    let gamma = reduce(&c.gamma, p);
    let ln2 = reduce(&c.ln2, p);
    let o = one(p);

    let zf = Cx::new(from_f64(z.re, p), from_f64(z.im, p));
    let half_z = Cx::new(shr(zf.re.clone(), 1), shr(zf.im.clone(), 1));
    let q = half_z.mul(&half_z, p).neg(); // −z²/4

    // J0 and Σ H_k t_k
    let mut t = Cx::real(o.clone());
    let mut j0 = t.clone();
    let mut sh0 = Cx::zero();
    let mut h = BigInt::zero();
    let mut k = 1u64;
    loop {
        t = t.mul(&q, p).div_int(k * k);
        h += &o / k;
        j0 = j0.add(&t);
        sh0 = sh0.add(&t.scale(&h, p));
        if t.is_zero() {
            break;
        }
        k += 1;
    }

    // J1/(z/2) and Σ (H_k + H_{k+1}) u_k
    let mut u = Cx::real(o.clone());
    let mut s1 = u.clone();
    let mut hk = BigInt::zero();
    let mut hk1 = o.clone();
    let mut sh1 = u.scale(&(&hk + &hk1), p);
    let mut k = 1u64;
    loop {
        u = u.mul(&q, p).div_int(k * (k + 1));
        hk = hk1.clone();
        hk1 += &o / (k + 1);
        s1 = s1.add(&u);
        sh1 = sh1.add(&u.scale(&(&hk + &hk1), p));
        if u.is_zero() {
            break;
        }
        k += 1;
    }
    let j1 = half_z.mul(&s1, p);

    let modulus = sqrt(&(mul(&half_z.re, &half_z.re, p) + mul(&half_z.im, &half_z.im, p)), p);
    let log = Cx::new(ln(&modulus, p, &ln2) + &gamma, arg(&zf.re, &zf.im, p, &pi));
    let two_over_pi = div(&(&o << 1u32), &pi, p);
    let one_over_pi = div(&o, &pi, p);

    let y0 = log.mul(&j0, p).sub(&sh0).scale(&two_over_pi, p);
    let y1 = log
        .mul(&j1, p)
        .scale(&two_over_pi, p)
        .sub(&zf.recip(p).scale(&two_over_pi, p))
        .sub(&half_z.mul(&sh1, p).scale(&one_over_pi, p));
    let h2 = j0.sub(&y0.times_i());

    Reference {
        j0: j0.to_c64(p),
        y0: y0.to_c64(p),
        j1: j1.to_c64(p),
        y1: y1.to_c64(p),
        h2: h2.to_c64(p),
    }
}

/// Relative error |a − b| / |b|.
pub fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm()
}
