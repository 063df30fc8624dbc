//! Complex Bessel functions of order zero: J0, Y0 and the Hankel function
//! H0⁽²⁾ = J0 − iY0.
//!
//! Small arguments (|z| < 12) use the ascending series, large arguments the
//! Hankel asymptotic expansion with optimal truncation. In the lower half
//! plane H0⁽²⁾ is exponentially smaller than J0 and Y0, so there it is
//! evaluated through K0 instead of by subtraction.

use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};

pub type ComplexValue = Complex64;

/// Largest supported |z|.
pub const MAX_ABS_ARG: f64 = 1e4;

/// Switch from ascending series to the asymptotic expansion.
pub const SERIES_LIMIT: f64 = 12.0;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn check_arg(z: Complex64) -> Result<()> {
    if !(z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::domain(format!("non-finite argument {z}")));
    }
    if z.norm() > MAX_ABS_ARG {
        return Err(Error::domain(format!("|z| = {:.4e} exceeds {MAX_ABS_ARG:e}", z.norm())));
    }
    Ok(())
}

fn check_log_arg(z: Complex64) -> Result<()> {
    check_arg(z)?;
    if z == Complex64::new(0.0, 0.0) {
        return Err(Error::domain("logarithmic singularity at z = 0"));
    }
    if z.im == 0.0 && z.re < 0.0 {
        return Err(Error::domain(format!("z = {z} lies on the branch cut")));
    }
    Ok(())
}

fn finite(v: Complex64, what: &str, z: Complex64) -> Result<Complex64> {
    if v.re.is_finite() && v.im.is_finite() {
        Ok(v)
    } else {
        Err(Error::domain(format!("{what}({z}) overflows f64")))
    }
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(z: ComplexValue) -> Result<ComplexValue> {
    check_arg(z)?;
    let v = if z.norm() < SERIES_LIMIT {
        j0_series(z)
    } else {
        // J0 is even, keep the expansion in the right half plane.
        let w = if z.re < 0.0 { -z } else { z };
        let (h1, h2) = hankel_pair_asymptotic(w);
        0.5 * (h1 + h2)
    };
    finite(v, "J0", z)
}

/// Bessel function of the second kind, order zero, principal branch.
pub fn bessel_y0(z: ComplexValue) -> Result<ComplexValue> {
    check_log_arg(z)?;
    let v = if z.norm() < SERIES_LIMIT {
        y0_series(z)
    } else if z.re >= 0.0 {
        let (h1, h2) = hankel_pair_asymptotic(z);
        (h1 - h2) / (2.0 * I)
    } else {
        // Y0(-w) = Y0(w) ± 2i J0(w), + in the upper half plane.
        let w = -z;
        let (h1, h2) = hankel_pair_asymptotic(w);
        let j = 0.5 * (h1 + h2);
        let y = (h1 - h2) / (2.0 * I);
        let sign = if z.im > 0.0 { 1.0 } else { -1.0 };
        y + sign * 2.0 * I * j
    };
    finite(v, "Y0", z)
}

/// Hankel function of the second kind, order zero.
pub fn hankel2_0(z: ComplexValue) -> Result<ComplexValue> {
    check_log_arg(z)?;
    let v = hankel2_0_unchecked(z);
    finite(v, "H0(2)", z)
}

fn hankel2_0_unchecked(z: Complex64) -> Complex64 {
    let r = z.norm();
    if r < SERIES_LIMIT {
        if z.im < -1.0 && r >= 2.0 {
            // H0(2)(z) = (2i/π) K0(iz), Re(iz) > 1 here.
            return 2.0 * I / PI * k0_cf2(I * z);
        }
        return j0_series(z) - I * y0_series(z);
    }
    if z.re >= 0.0 {
        hankel_pair_asymptotic(z).1
    } else {
        // H0(2)(z) = -H0(1)(-z) = -conj(H0(2)(-conj z)).
        -hankel_pair_asymptotic(-z.conj()).1.conj()
    }
}

/// Ascending series for J0. Accurate for |z| up to about 15.
pub fn j0_series(z: Complex64) -> Complex64 {
    let q = -0.25 * z * z;
    let mut term = Complex64::new(1.0, 0.0);
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        sum += term;
        if term.norm() <= 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// Ascending series for Y0 (principal logarithm).
pub fn y0_series(z: Complex64) -> Complex64 {
    let q = -0.25 * z * z;
    let mut term = Complex64::new(1.0, 0.0);
    let mut j0 = term;
    let mut tail = Complex64::new(0.0, 0.0);
    let mut harmonic = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= q / (kf * kf);
        harmonic += 1.0 / kf;
        j0 += term;
        let t = harmonic * term;
        tail += t;
        if term.norm() <= 1e-17 * j0.norm() && t.norm() <= 1e-17 * tail.norm() {
            break;
        }
    }
    2.0 / PI * (((0.5 * z).ln() + EULER_GAMMA) * j0 - tail)
}

/// Hankel asymptotic expansion, returning (H0⁽¹⁾(z), H0⁽²⁾(z)).
///
/// Valid for Re z ≥ 0 and |z| large; the series is summed up to its
/// smallest term.
pub fn hankel_pair_asymptotic(z: Complex64) -> (Complex64, Complex64) {
    let inv = 1.0 / z;
    let mut a = Complex64::new(1.0, 0.0); // a_k / z^k
    let mut s1 = a;
    let mut s2 = a;
    let mut ik = Complex64::new(1.0, 0.0); // i^k
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let m = (2 * k - 1) as f64;
        let next = a * (-(m * m) / (8.0 * k as f64)) * inv;
        let size = next.norm();
        if size >= last {
            break;
        }
        last = size;
        a = next;
        ik *= I;
        s1 += ik * a;
        s2 += ik.conj() * a;
        if size <= 1e-17 {
            break;
        }
    }
    let pref = (2.0 / (PI * z)).sqrt();
    let phase = z - FRAC_PI_4;
    let h1 = pref * (I * phase).exp() * s1;
    let h2 = pref * (-I * phase).exp() * s2;
    (h1, h2)
}

/// Leading-order asymptotic form √(2/(πz))·e^(−i(z−π/4)).
pub fn hankel2_0_leading(z: Complex64) -> Complex64 {
    (2.0 / (PI * z)).sqrt() * (-I * (z - FRAC_PI_4)).exp()
}

/// Modified Bessel K0 by Steed's continued fraction (Temme's CF2).
/// Intended for Re w ≳ 1 and |w| ≥ 2.
fn k0_cf2(w: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    let mut b = 2.0 * (one + w);
    let mut d = one / b;
    let mut delh = d;
    let mut q1 = Complex64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25;
    let mut q = Complex64::new(a1, 0.0);
    let mut c = Complex64::new(a1, 0.0);
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 2..100_000 {
        a -= 2.0 * (i - 1) as f64;
        c = -a * c / i as f64;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = one / (b + a * d);
        delh = (b * d - 1.0) * delh;
        let dels = q * delh;
        s += dels;
        if dels.norm() < 1e-17 * s.norm() {
            break;
        }
    }
    (PI / (2.0 * w)).sqrt() * (-w).exp() / s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn j0_at_zero_is_one() {
        assert_eq!(bessel_j0(c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
    }

    #[test]
    fn known_values_at_one() {
        let j = bessel_j0(c(1.0, 0.0)).unwrap();
        let y = bessel_y0(c(1.0, 0.0)).unwrap();
        assert!((j.re - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((y.re - 0.088_256_964_215_676_96).abs() < 1e-15);
        let h = hankel2_0(c(1.0, 0.0)).unwrap();
        assert!((h - (j - I * y)).norm() < 1e-15);
    }

    #[test]
    fn y0_domain_errors() {
        assert!(bessel_y0(c(0.0, 0.0)).is_err());
        assert!(bessel_y0(c(-2.0, 0.0)).is_err());
        assert!(hankel2_0(c(-2.0, 0.0)).is_err());
        assert!(bessel_j0(c(2e4, 0.0)).is_err());
        assert!(bessel_j0(c(f64::NAN, 0.0)).is_err());
    }

    #[test]
    fn k0_route_matches_subtraction_where_both_are_good() {
        let z = c(3.0, -1.5);
        let a = 2.0 * I / PI * k0_cf2(I * z);
        let b = j0_series(z) - I * y0_series(z);
        assert!((a - b).norm() / b.norm() < 1e-13);
    }

    #[test]
    fn reflection_for_negative_real_part() {
        let z = c(-15.0, -3.0);
        let h = hankel2_0(z).unwrap();
        let j = bessel_j0(z).unwrap();
        let y = bessel_y0(z).unwrap();
        let scale = j.norm().max(y.norm());
        assert!((h - (j - I * y)).norm() / scale < 1e-12);
    }
}
