use cqed_chip::quad::QuadOptions;
use cqed_chip::thermal::*;
use num_complex::Complex64;
use proptest::prelude::*;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

fn sapphire() -> MaterialProps {
    MaterialProps::sapphire()
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Line source as a sum of point sources along x ∈ [−half_len, half_len],
/// composite Simpson in u with x = ρ·sinh(u).
fn integrated_points(a0: f64, rho: f64, omega: f64, half_len: f64) -> Complex64 {
    let m = sapphire();
    let umax = (half_len / rho).asinh();
    let n = 40_000;
    let h = umax / n as f64;
    let f = |u: f64| {
        let x = rho * u.sinh();
        let dx = rho * u.cosh();
        point_response(a0, rho.hypot(x), omega, &m).unwrap() * dx
    };
    let mut s = f(0.0) + f(umax);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += f(i as f64 * h) * w;
    }
    2.0 * s * h / 3.0
}

#[test]
fn point_examples() {
    let m = sapphire();
    let dc = point_response(1.0, 100e-6, 0.0, &m).unwrap();
    assert!((dc.re - 39.79).abs() < 0.005);
    let omega = m.diffusivity / (100e-6f64).powi(2);
    let t = point_response(1.0, 100e-6, omega, &m).unwrap();
    assert!((t.norm() - 39.79 * (-FRAC_1_SQRT_2).exp()).abs() < 0.01);
    assert!((t.norm() - 19.6).abs() < 0.05);
    assert!((t.arg() + FRAC_1_SQRT_2).abs() < 1e-14);
    assert_eq!(point_response(0.0, 100e-6, omega, &m).unwrap(), Complex64::new(0.0, 0.0));
}

#[test]
fn line_matches_integrated_points_example() {
    let omega = 2.0 * PI * 1000.0;
    let line = line_response(500.0, 100e-6, omega, &sapphire()).unwrap();
    let pts = integrated_points(500.0, 100e-6, omega, 0.1);
    assert!((line - pts).norm() / line.norm() < 0.01);
    assert_eq!(line_response(0.0, 100e-6, omega, &sapphire()).unwrap(), Complex64::new(0.0, 0.0));
}

#[test]
fn line_high_frequency_asymptote() {
    let m = sapphire();
    let rho = 100e-6;
    let omega = 100.0 * m.diffusivity / (rho * rho);
    let t = line_response(1.0, rho, omega, &m).unwrap().norm();
    let x = (omega * rho * rho / m.diffusivity).sqrt();
    let approx = 1.0 / (2.0 * m.conductivity) * (2.0 / (PI * x)).sqrt() * (-x * FRAC_1_SQRT_2).exp();
    assert!((t - approx).abs() / approx < 0.05);
}

#[test]
fn dc_line_examples() {
    let m = sapphire();
    let a0 = line_power_from_current(3.0, 300e-12, COPPER_RESISTIVITY).unwrap();
    assert!((a0 - 510.0).abs() < 1e-9);
    let t = dc_line_estimate(a0, 100e-6, 4e-3, &m).unwrap();
    assert!((t - 15.0).abs() < 0.05, "{t}");
    let t = dc_line_estimate(300.0, 100e-6, 4e-3, &m).unwrap();
    assert!((t - 8.8).abs() < 0.01, "{t}");
}

#[test]
fn cutoff_examples() {
    let (w, tau) = thermal_cutoff(100e-6, &sapphire()).unwrap();
    assert!((w - 1300.0).abs() < 1e-9);
    assert!((w / (2.0 * PI) - 207.0).abs() < 0.5);
    assert!((tau - 0.77e-3).abs() < 0.005e-3);
    let (_, tau2) = thermal_cutoff(200e-6, &sapphire()).unwrap();
    assert!((tau2 / tau - 4.0).abs() < 1e-12);
}

#[test]
fn slew_examples() {
    assert!((slew_estimate(125e-9, 1e-3).unwrap() - 125e-6).abs() < 1e-18);
    assert!((slew_estimate(90e-9, 0.77e-3).unwrap() - 117e-6).abs() < 0.2e-6);
    assert_eq!(slew_estimate(0.0, 1e-3).unwrap(), 0.0);
}

#[test]
fn dc_line_lift_matches_closed_form() {
    let m = sapphire();
    let (o, d, a0) = (100e-6, m.thickness, 510.0);
    // ∫ ln(D/√(o²+z²)) dz up to z* = √(D² − o²), beyond which it is clamped.
    let zs = (d * d - o * o).sqrt();
    let anti = |z: f64| z * d.ln() - (z * o.hypot(z).ln() - z + o * (z / o).atan());
    let exact = m.expansion_coeff * a0 / (PI * m.conductivity) * (anti(zs) - anti(0.0));
    let u = surface_lift(&HeatSource::line(a0, 0.0), o, 0.0, &m).unwrap();
    assert!((u.re - exact).abs() < 1e-8 * exact, "{:e} vs {exact:e}", u.re);
    assert!((u.re - 85.8e-9).abs() < 0.5e-9, "{}", u.re);
}

#[test]
fn dc_point_lift_matches_asinh() {
    let m = sapphire();
    for o in [10e-6, 30e-6, 100e-6] {
        let exact = m.expansion_coeff / (2.0 * PI * m.conductivity) * (m.thickness / o).asinh();
        let u = surface_lift(&HeatSource::point(1.0, 0.0), o, 0.0, &m).unwrap();
        assert!((u.re - exact).abs() < 1e-8 * exact);
    }
}

#[test]
fn lift_is_suppressed_above_cutoff() {
    let m = sapphire();
    let o = 100e-6;
    let omega = 10.0 * m.diffusivity / (o * o);
    for src in [HeatSource::point(1.0, 0.0), HeatSource::line(510.0, 0.0)] {
        let dc = surface_lift(&src, o, 0.0, &m).unwrap().norm();
        let ac = surface_lift(&src, o, omega, &m).unwrap().norm();
        assert!(ac < 0.1 * dc, "{:?}: {ac:e} vs {dc:e}", src.kind);
    }
}

#[test]
fn point_lift_converges_with_depth() {
    let m = sapphire();
    let m = MaterialProps { thickness: 40e-3, ..m };
    let deep = MaterialProps { thickness: 400e-3, ..m };
    let omega = 2.0 * PI * 10.0;
    let a = surface_lift(&HeatSource::point(1.0, 0.0), 30e-6, omega, &m).unwrap();
    let b = surface_lift(&HeatSource::point(1.0, 0.0), 30e-6, omega, &deep).unwrap();
    assert!((a - b).norm() < 1e-6 * b.norm());
}

#[test]
fn quadrature_tolerance_is_honoured() {
    let m = sapphire();
    let src = HeatSource::line(1.0, 0.0);
    let omega = 2.0 * PI * 50.0;
    let reference = surface_lift_with(
        &src,
        100e-6,
        omega,
        &m,
        LiftOptions { quad: QuadOptions { rel_tol: 1e-12, ..Default::default() }, dc_line_cutoff: None },
    )
    .unwrap();
    for tol in [1e-4, 1e-6, 1e-8] {
        let u = surface_lift_with(
            &src,
            100e-6,
            omega,
            &m,
            LiftOptions { quad: QuadOptions { rel_tol: tol, ..Default::default() }, dc_line_cutoff: None },
        )
        .unwrap();
        assert!((u - reference).norm() <= tol * reference.norm());
    }
}

#[test]
fn monotone_decay_over_four_decades() {
    let m = sapphire();
    let freqs = log_grid(0.1, 1e3, 60);
    let dists = [30e-6, 60e-6, 100e-6, 200e-6, 400e-6];
    for &d in &dists {
        let mut prev_p = f64::INFINITY;
        let mut prev_l = f64::INFINITY;
        for &f in &freqs {
            let w = 2.0 * PI * f;
            let p = point_response(1.0, d, w, &m).unwrap().norm();
            let l = line_response(1.0, d, w, &m).unwrap().norm();
            assert!(p <= prev_p && l <= prev_l);
            prev_p = p;
            prev_l = l;
        }
    }
    for &f in &freqs {
        let w = 2.0 * PI * f;
        let mut prev_p = f64::INFINITY;
        let mut prev_l = f64::INFINITY;
        for &d in &dists {
            let p = point_response(1.0, d, w, &m).unwrap().norm();
            let l = line_response(1.0, d, w, &m).unwrap().norm();
            assert!(p < prev_p && l < prev_l);
            prev_p = p;
            prev_l = l;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn linearity_and_superposition(p1 in 0.0f64..10.0, p2 in 0.0f64..10.0, r in 5e-6f64..1e-3, f in 0.01f64..1e5) {
        let m = sapphire();
        let w = 2.0 * PI * f;
        for kernel in [point_response, line_response] {
            let a = kernel(p1, r, w, &m).unwrap();
            let b = kernel(p2, r, w, &m).unwrap();
            let s = kernel(p1 + p2, r, w, &m).unwrap();
            prop_assert!((s - (a + b)).norm() <= 1e-14 * s.norm().max(1e-300));
            let unit = kernel(1.0, r, w, &m).unwrap();
            prop_assert!((a - unit * p1).norm() <= 1e-14 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn point_phase_is_analytic(r in 5e-6f64..1e-3, f in 0.0f64..1e5) {
        let m = sapphire();
        let w = 2.0 * PI * f;
        let t = point_response(1.0, r, w, &m).unwrap();
        let phase = -(w * r * r / (2.0 * m.diffusivity)).sqrt();
        // compare as a unit phasor so that wrapping does not matter
        let expected = Complex64::from_polar(1.0, phase);
        prop_assert!((t / t.norm() - expected).norm() < 1e-12);
    }

    #[test]
    fn response_bounded_by_dc(r in 5e-6f64..1e-3, f in 0.0f64..1e5) {
        let m = sapphire();
        let t = point_response(1.0, r, 2.0 * PI * f, &m).unwrap().norm();
        prop_assert!(t <= point_response(1.0, r, 0.0, &m).unwrap().re * (1.0 + 1e-15));
    }
}
