//! Exit-gate checks. Runs as a plain binary (no libtest harness) so that
//! every line below is printed by `cargo test`; exits non-zero if any
//! check fails.

mod support;

use cqed_chip::config::load_scenario;
use cqed_chip::magnetics::*;
use cqed_chip::optics::*;
use cqed_chip::plant::*;
use cqed_chip::servo::*;
use cqed_chip::specfun::{bessel_j0, bessel_y0, hankel2_0};
use cqed_chip::thermal::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_PI_4, PI};
use std::path::Path;
use std::time::Instant;
use support::oracle::{reference, rel};

// pinned tolerances
const CUTOFF_COMPUTED_TOL: f64 = 0.05;
const CUTOFF_QUOTED_TOL: f64 = 0.20;
const DC_FACTOR: f64 = 3.0;
const FINESSE_TOL: f64 = 0.01;
const COOP_ABS_TOL: f64 = 0.1;
const COOP_QUOTED_TOL: f64 = 0.25;
const DISPLACEMENT_TOL: f64 = 0.05;
const FIT_RADIUS_TOL: f64 = 0.02;
const FIT_LOSS_TOL: f64 = 0.10;
const FIT_SUCCESS_RATE: f64 = 0.95;
const LINE_ORACLE_TOL: f64 = 0.01;
const SPECFUN_TOL: f64 = 1e-9;
const WRONSKIAN_TOL: f64 = 1e-10;
const SURROGATE_MAG_TOL: f64 = 0.05;
const SURROGATE_PHASE_TOL_DEG: f64 = 5.0;
const SURROGATE_MAX_POLES: usize = 16;
const LINEWIDTH_HZ: f64 = 35e6;
const HOLD_TIME_S: f64 = 0.1;
const SCHEME3_LIMIT_HZ: f64 = 3.5e6;
const SCHEME3_HOLDOFF_S: f64 = 1e-3;
const FF_RATIO: f64 = 10.0;
const FF_MATCHED_RATIO: f64 = 100.0;
const HEATER_CROSSOVER_HZ: f64 = 1e5;
const HEATER_PM_DEG: f64 = 30.0;
const RTD_CROSSOVER_BAND_HZ: (f64, f64) = (1e3, 1e4);
const FORTY_MG_TOL_G: f64 = 1e-15;
const GRADIENT_FACTOR: f64 = 2.0;
const DT_HALVING_TOL: f64 = 1e-9;

type Outcome = (bool, String);

fn within(x: f64, target: f64, rel_tol: f64) -> bool {
    (x / target - 1.0).abs() <= rel_tol
}

fn within_factor(x: f64, target: f64, f: f64) -> bool {
    x >= target / f && x <= target * f
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn shipped(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name);
    load_scenario(&p).unwrap_or_else(|e| panic!("{name}: {e}")).scenario
}

fn cutoff_and_timescale() -> Outcome {
    let (w, tau) = thermal_cutoff(100e-6, &MaterialProps::sapphire()).unwrap();
    let f = w / (2.0 * PI);
    let ok = [
        within(f, 207.0, CUTOFF_COMPUTED_TOL),
        within(tau, 0.77e-3, CUTOFF_COMPUTED_TOL),
        within(f, 200.0, CUTOFF_QUOTED_TOL),
        within(tau, 1e-3, CUTOFF_QUOTED_TOL),
    ];
    (
        ok.iter().all(|&b| b),
        format!(
            "f_c = {f:.1} Hz ({:+.1}% vs 200 Hz), tau = {:.3} ms ({:+.1}% vs 1 ms)",
            100.0 * (f / 200.0 - 1.0),
            tau * 1e3,
            100.0 * (tau / 1e-3 - 1.0)
        ),
    )
}

fn dc_estimates() -> Outcome {
    let m = MaterialProps::sapphire();
    let (_, tau) = thermal_cutoff(100e-6, &m).unwrap();
    let mut ok = true;
    let mut worst = String::new();
    for a0 in [300.0, 420.0, 510.0, 750.0, 1020.0] {
        let t = dc_line_estimate(a0, 100e-6, 4e-3, &m).unwrap();
        let lift = surface_lift(&HeatSource::line(a0, 0.0), 100e-6, 0.0, &m).unwrap().re;
        let slew = slew_estimate(lift, tau).unwrap();
        ok &= within_factor(t, 20.0, DC_FACTOR);
        ok &= within_factor(lift, 125e-9, DC_FACTOR);
        ok &= within_factor(slew, 100e-9 / 1e-3, DC_FACTOR);
        ok &= slew == lift / tau;
        if a0 == 300.0 || a0 == 1020.0 {
            worst.push_str(&format!(
                "A0 = {a0} W/m: {t:.1} K, {:.0} nm, {:.0} nm/ms; ",
                lift * 1e9,
                slew * 1e9 * 1e-3
            ));
        }
    }
    (ok, worst.trim_end_matches("; ").to_string())
}

fn optics_figures() -> Outcome {
    let (l, r, lambda, a, d1) = (25e-6, 0.05, 780e-9, 47e-6, 20e-6);
    let w0 = mode_waist(l, r, lambda).unwrap();
    let target = 2.0e5;
    let d2 = 2.0 * PI / target - d1 - diffraction_loss(a, w0).unwrap();
    let f = finesse_from_losses(d1, d2, a, w0).unwrap();
    let dc = round_trip_loss(d1, d2, a, w0).unwrap();
    let c = cooperativity(l, r, lambda, f).unwrap();
    let dx = displacement_per_linewidth(lambda, 1e5).unwrap();
    let ok = within(f, target, FINESSE_TOL)
        && (f * dc - 2.0 * PI).abs() < 1e-12
        && (c - 42.4).abs() <= COOP_ABS_TOL
        && within(c, 50.0, COOP_QUOTED_TOL)
        && within(dx, 3.9e-12, DISPLACEMENT_TOL)
        && within(dx, 4e-12, DISPLACEMENT_TOL);
    (ok, format!("F = {f:.0} (delta2 = {:.2} ppm), C = {c:.2}, lambda/2F = {:.2} pm", d2 * 1e6, dx * 1e12))
}

fn synthetic(a: f64, fixed: f64, noise: f64, seed: u64) -> Vec<FinesseSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..8)
        .map(|i| {
            let l = 25e-6 * 10f64.powf(i as f64 / 7.0);
            let f = model_finesse(l, 0.05, 780e-9, a, fixed).unwrap();
            let n: f64 = rng.sample(StandardNormal);
            FinesseSample::new(l, f * (1.0 + noise * n))
        })
        .collect()
}

fn radius_recovery() -> Outcome {
    let fixed = 31.4e-6;
    let mut ok = true;
    let mut detail = Vec::new();
    for a in [47e-6, 65e-6] {
        let good = (0..100u64)
            .filter(|&seed| match fit_mirror_radius(&synthetic(a, fixed, 0.03, seed), 0.05, 780e-9) {
                Ok(f) => within(f.aperture_radius, a, FIT_RADIUS_TOL) && within(f.fixed_loss, fixed, FIT_LOSS_TOL),
                Err(_) => false,
            })
            .count();
        ok &= good as f64 / 100.0 >= FIT_SUCCESS_RATE;
        detail.push(format!("a = {:.0} um: {good}/100", a * 1e6));
    }
    (ok, detail.join(", "))
}

/// Sum of point sources along the line, Simpson in u with x = ρ·sinh(u).
fn integrated_points(a0: f64, rho: f64, omega: f64, m: &MaterialProps) -> Complex64 {
    let umax = (0.1 / rho).asinh();
    let n = 40_000;
    let h = umax / n as f64;
    let f = |u: f64| point_response(a0, rho.hypot(rho * u.sinh()), omega, m).unwrap() * (rho * u.cosh());
    let mut s = f(0.0) + f(umax);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * s * h / 3.0
}

fn line_vs_points() -> Outcome {
    let m = MaterialProps::sapphire();
    let mut worst = 0.0f64;
    for rho in [50e-6, 100e-6, 300e-6] {
        for f in log_grid(1.0, 1e4, 13) {
            let w = 2.0 * PI * f;
            let line = line_response(1.0, rho, w, &m).unwrap();
            worst = worst.max((line - integrated_points(1.0, rho, w, &m)).norm() / line.norm());
        }
    }
    (worst <= LINE_ORACLE_TOL, format!("worst relative difference {worst:.2e} over 1 Hz-10 kHz"))
}

fn special_functions() -> Outcome {
    let ray = |t: f64| Complex64::from_polar(t, -FRAC_PI_4);
    let mut worst = 0.0f64;
    for t in log_grid(1e-3, 1e3, 500) {
        let z = ray(t);
        let r = reference(z);
        worst = worst.max(rel(bessel_j0(z).unwrap(), r.j0));
        worst = worst.max(rel(bessel_y0(z).unwrap(), r.y0));
        worst = worst.max(rel(hankel2_0(z).unwrap(), r.h2));
    }
    // J1·Y0 − J0·Y1 cancels like e^(2|Im z|), so the ray part stays short
    let mut pts: Vec<Complex64> = log_grid(0.01, 60.0, 70).into_iter().map(|t| Complex64::new(t, 0.0)).collect();
    pts.extend(log_grid(1e-3, 8.0, 30).into_iter().map(ray));
    let mut wr = 0.0f64;
    for z in pts {
        let r = reference(z);
        let w = r.j1 * bessel_y0(z).unwrap() - bessel_j0(z).unwrap() * r.y1;
        wr = wr.max(rel(w, 2.0 / (PI * z)));
    }
    (worst <= SPECFUN_TOL && wr <= WRONSKIAN_TOL, format!("oracle {worst:.1e} on 500 points, Wronskian {wr:.1e} on 100"))
}

fn surrogate_fidelity() -> Outcome {
    let cfg = PlantConfig::default();
    let resp = |f: f64| thermal_actuator_response(&cfg, 2.0 * PI * f).unwrap();
    let grid = log_grid(0.1, 1e6, 200);
    // the surrogate the simulator actually uses
    let model = PlantModel::build(&cfg).unwrap();
    let m = &model.heater;
    let n = m.poles.len();
    // judged on the fitting grid and between its nodes
    let (mut mag, mut ph) = (0.0f64, 0.0f64);
    for f in grid.iter().copied().chain(grid.windows(2).map(|w| (w[0] * w[1]).sqrt())) {
        let q = m.eval(2.0 * PI * f) / resp(f);
        mag = mag.max((q.norm() - 1.0).abs());
        ph = ph.max(q.arg().abs().to_degrees());
    }
    let ok = n <= SURROGATE_MAX_POLES && m.is_stable() && mag <= SURROGATE_MAG_TOL && ph <= SURROGATE_PHASE_TOL_DEG;
    (ok, format!("{n} poles: {:.2}% magnitude, {ph:.2} deg phase, 0.1 Hz-1 MHz", mag * 100.0))
}

fn scheme1_pulse() -> Outcome {
    let tr = run_scenario(&shipped("fig4_scheme1.toml")).unwrap();
    let s = tr.summary;
    let ok = s.peak_abs_offset_hz > LINEWIDTH_HZ && longest_above(&tr, LINEWIDTH_HZ) > HOLD_TIME_S;
    (
        ok,
        format!(
            "peak {:.1} MHz, continuously above 35 MHz for {:.0} ms",
            s.peak_abs_offset_hz * 1e-6,
            longest_above(&tr, LINEWIDTH_HZ) * 1e3
        ),
    )
}

fn longest_above(tr: &Trace, level: f64) -> f64 {
    let (mut run, mut best) = (0usize, 0usize);
    for x in &tr.offset {
        run = if x.abs() > level { run + 1 } else { 0 };
        best = best.max(run);
    }
    best as f64 * tr.sample_interval
}

fn scheme3_and_ordering() -> Outcome {
    let mut s3 = shipped("fig4_scheme3.toml");
    s3.run.sample_interval = None;
    let tr = run_scenario(&s3).unwrap();
    let after = tr.max_abs_offset_after_holdoff(SCHEME3_HOLDOFF_S);
    // ordering on the 0.5 A pulse, each scheme with its committed gains
    let s1 = shipped("fig4_scheme1.toml");
    let s2 = shipped("fig4_scheme2.toml");
    let mut s3p = shipped("fig4_scheme3.toml");
    s3p.disturbance = s1.disturbance.clone();
    s3p.run.duration = s1.run.duration;
    s3p.run.sample_interval = s1.run.sample_interval;
    let p: Vec<f64> = [&s1, &s2, &s3p].iter().map(|sc| peak_offset(sc, 0.0, f64::INFINITY).unwrap()).collect();
    let ok = after < SCHEME3_LIMIT_HZ && p[2] < p[1] && p[1] < p[0];
    (
        ok,
        format!(
            "3 A: max {:.2} MHz beyond 1 ms; 0.5 A peaks (iii) {:.3} < (ii) {:.1} < (i) {:.1} MHz",
            after * 1e-6,
            p[2] * 1e-6,
            p[1] * 1e-6,
            p[0] * 1e-6
        ),
    )
}

fn feedforward() -> Outcome {
    let r = tune_feedforward(&shipped("fig4_scheme2.toml"), TuneOptions::default()).unwrap();
    let mut scheme = SchemeConfig::feed_forward();
    scheme.rtd_loop = Some(ControllerConfig::pi(0.0, 0.0, 100.0));
    scheme.pzt_loop = Some(ControllerConfig::pi(0.0, 0.0, 100.0));
    scheme.ff_filter = Some(FeedForwardFilter { gain: -10.0, corner_hz: None, offset: 0.0, injection: FfInjection::Heater });
    let matched = Scenario {
        plant: PlantConfig { disturbance_geometry: DisturbanceGeometry::MatchHeater, ..PlantConfig::default() },
        scheme,
        disturbance: CurrentTimeline { pulses: vec![Pulse { t_start: 0.01, t_end: 0.31, amps: 0.5, ramp: 0.0 }] },
        run: RunConfig { dt: 5e-6, duration: 0.4, ..Default::default() },
    };
    let m = tune_feedforward(&matched, TuneOptions::default()).unwrap();
    (
        r.suppression_ratio >= FF_RATIO && m.suppression_ratio >= FF_MATCHED_RATIO,
        format!("0.5 A pulse x{:.1}, matched plant x{:.0}", r.suppression_ratio, m.suppression_ratio),
    )
}

fn bandwidth() -> Outcome {
    let h = open_loop_bode(&shipped("fig4_scheme3.toml"), LoopPath::Heater).unwrap();
    let t = open_loop_bode(&shipped("fig4_scheme1.toml"), LoopPath::Heater).unwrap();
    let (hc, pm) = (h.crossover_hz.unwrap_or(0.0), h.phase_margin_deg.unwrap_or(0.0));
    let tc = t.crossover_hz.unwrap_or(0.0);
    let ok = hc >= HEATER_CROSSOVER_HZ
        && pm >= HEATER_PM_DEG
        && tc >= RTD_CROSSOVER_BAND_HZ.0
        && tc <= RTD_CROSSOVER_BAND_HZ.1;
    (ok, format!("heater loop {:.1} kHz / {pm:.1} deg, temperature loop {:.2} kHz", hc * 1e-3, tc * 1e-3))
}

fn magnetics() -> Outcome {
    let b = wire_field(1e-3, 50e-6).unwrap() * GAUSS_PER_TESLA;
    let fg = waveguide_field_and_gradient(&WireSet::default_waveguide(), [0.0, DEFAULT_EVAL_HEIGHT]).unwrap();
    let g = fg.transverse_gradient() * GAUSS_PER_CM_PER_TESLA_PER_M;
    (
        (b - 0.040).abs() <= FORTY_MG_TOL_G && within_factor(g, 4000.0, GRADIENT_FACTOR),
        format!("{:.6} mG at 50 um, gradient {g:.0} G/cm", b * 1e3),
    )
}

fn determinism_and_exactness() -> Outcome {
    let mut ok = true;
    for name in ["fig4_scheme1.toml", "fig4_scheme2.toml", "fig4_scheme3.toml"] {
        let mut sc = shipped(name);
        sc.run.sensor_noise_rms = 1e5;
        sc.run.rng_seed = 7;
        ok &= run_scenario(&sc).unwrap() == run_scenario(&sc).unwrap();
    }
    // open loop so that only the plant discretization depends on dt
    let mut sc = shipped("fig4_scheme1.toml");
    sc.scheme.rtd_loop = Some(ControllerConfig::pi(0.0, 0.0, 1.0));
    sc.scheme.pzt_loop = Some(ControllerConfig::pi(0.0, 0.0, 1.0));
    sc.run.dt = 1e-5;
    let coarse = run_scenario(&sc).unwrap();
    sc.run.dt = 5e-6;
    let fine = run_scenario(&sc).unwrap();
    let peak = coarse.offset.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let worst = coarse.offset.iter().zip(&fine.offset).fold(0.0f64, |a, (x, y)| a.max((x - y).abs())) / peak;
    ok &= coarse.t == fine.t && worst < DT_HALVING_TOL;
    (ok, format!("repeat runs identical: {ok}; dt halving changes trace by {worst:.1e} of peak"))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 13] = [
        ("thermal cutoff and timescale", cutoff_and_timescale),
        ("DC temperature, lift and slew", dc_estimates),
        ("finesse, cooperativity, lambda/2F", optics_figures),
        ("aperture radius recovery", radius_recovery),
        ("line source vs integrated points", line_vs_points),
        ("J0/Y0/H0(2) vs series oracle", special_functions),
        ("rational surrogate fidelity", surrogate_fidelity),
        ("temperature servo, 0.5 A pulse", scheme1_pulse),
        ("direct dual servo, 3 A pulses; ordering", scheme3_and_ordering),
        ("feed-forward suppression", feedforward),
        ("loop bandwidths", bandwidth),
        ("wire field and waveguide gradient", magnetics),
        ("determinism and dt exactness", determinism_and_exactness),
    ];
    let start = Instant::now();
    let mut failed = Vec::new();
    for (i, (name, f)) in checks.iter().enumerate() {
        let t0 = Instant::now();
        let (ok, detail) = match std::panic::catch_unwind(f) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        println!(
            "{:>2} {} {name}: {detail} [{:.1} s]",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            t0.elapsed().as_secs_f64()
        );
        if !ok {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/{} passed in {:.1} s", checks.len() - failed.len(), checks.len(), start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
