//! Globally adaptive 7/15-point Gauss–Kronrod quadrature for complex
//! integrands on finite intervals.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { rel_tol: 1e-8, abs_tol: 0.0, max_intervals: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub intervals: usize,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += s * WGK[j];
        if j % 2 == 1 {
            g += s * WG[j / 2];
        }
    }
    let value = k * h;
    let error = ((k - g) * h).norm();
    Segment { a, b, value, error }
}

/// Integrate `f` over the consecutive intervals defined by `points`
/// (at least two, increasing). Interior points are used as initial
/// breakpoints, which helps when the integrand varies on very different
/// scales across the range.
pub fn integrate_with_breaks<F>(f: F, points: &[f64], opts: QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    if points.len() < 2 || points.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("quadrature breakpoints must be strictly increasing"));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::domain("quadrature limits must be finite"));
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        heap.push(kronrod(&f, w[0], w[1]));
    }
    let mut evaluations = 15 * heap.len();
    loop {
        let (value, error) = heap
            .iter()
            .fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), s| (v + s.value, e + s.error));
        if !(value.re.is_finite() && value.im.is_finite()) {
            return Err(Error::domain("integrand is not finite"));
        }
        let target = opts.abs_tol.max(opts.rel_tol * value.norm());
        if error <= target {
            return Ok(QuadResult { value, error_estimate: error, intervals: heap.len(), evaluations });
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::NoConvergence {
                what: format!("adaptive quadrature (error {error:.3e} > target {target:.3e})"),
                iterations: heap.len(),
            });
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // Interval can no longer be split in f64.
            heap.push(worst);
            let (value, error) = heap
                .iter()
                .fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), s| (v + s.value, e + s.error));
            if error <= 1e3 * target {
                return Ok(QuadResult { value, error_estimate: error, intervals: heap.len(), evaluations });
            }
            return Err(Error::NoConvergence {
                what: "adaptive quadrature hit f64 interval resolution".into(),
                iterations: heap.len(),
            });
        }
        heap.push(kronrod(&f, worst.a, mid));
        heap.push(kronrod(&f, mid, worst.b));
        evaluations += 30;
    }
}

/// Integrate `f` over [a, b].
pub fn integrate<F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult>
where
    F: Fn(f64) -> Complex64,
{
    integrate_with_breaks(f, &[a, b], opts)
}

/// Real-valued convenience wrapper.
pub fn integrate_real<F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate(|x| Complex64::new(f(x), 0.0), a, b, opts).map(|r| r.value.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate_real(|x| x.powi(5) - 3.0 * x * x, -1.0, 2.0, QuadOptions::default()).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0);
        assert!((r - exact).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_complex() {
        let r = integrate(|x| Complex64::new(0.0, 20.0 * x).exp(), 0.0, 1.0, QuadOptions::default()).unwrap();
        let exact = (Complex64::new(0.0, 20.0).exp() - 1.0) / Complex64::new(0.0, 20.0);
        assert!((r.value - exact).norm() < 1e-10);
    }

    #[test]
    fn endpoint_singularity_with_breaks() {
        let opts = QuadOptions { rel_tol: 1e-10, ..Default::default() };
        let r = integrate_with_breaks(|x| Complex64::new(1.0 / x.sqrt(), 0.0), &[0.0, 1e-6, 1e-3, 1.0], opts)
            .unwrap();
        assert!((r.value.re - 2.0).abs() < 1e-8);
    }

    #[test]
    fn bad_limits() {
        assert!(integrate_real(|x| x, 1.0, 1.0, QuadOptions::default()).is_err());
        assert!(integrate_real(|x| x, 0.0, f64::INFINITY, QuadOptions::default()).is_err());
    }

    #[test]
    fn interval_budget_reports_no_convergence() {
        let opts = QuadOptions { rel_tol: 1e-14, abs_tol: 0.0, max_intervals: 3 };
        let e = integrate_real(|x| (1.0 / x).sin(), 1e-4, 1.0, opts).unwrap_err();
        assert!(matches!(e, Error::NoConvergence { .. }));
    }
}
