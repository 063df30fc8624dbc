//! Closed-loop stabilization schemes around the plant.
//!
//! Per step k the controllers read the plant outputs at t_k, the commands
//! are held over [t_k, t_k + dt), and the plant advances exactly over that
//! interval. Loop analysis uses the same discrete transfer functions, so
//! the Bode report describes the simulated loop rather than a continuous
//! idealization.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{require_finite, require_non_negative, require_positive, Error, Result};
use crate::plant::{DiscretePlant, PlantConfig, PlantInputs, PlantModel};

const RTD_KP: f64 = 0.02; // W/K
const PZT_KI: f64 = 4e-9; // V/(Hz·s)
const HEATER_KP: f64 = 2e-10; // W/Hz

/// Offsets beyond this are treated as a numerical blow-up.
const DIVERGENCE_HZ: f64 = 1e15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub kp: f64,
    /// per second
    pub ki: f64,
    /// seconds
    pub kd: f64,
    /// Derivative filter corner (Hz); `None` = unfiltered difference.
    pub derivative_filter_hz: Option<f64>,
    pub output_min: f64,
    pub output_max: f64,
    /// Lead/lag (1 + s/ωz)/(1 + s/ωp) applied to the error; both or neither.
    pub lead_zero_hz: Option<f64>,
    pub lead_pole_hz: Option<f64>,
}

impl ControllerConfig {
    pub fn pi(kp: f64, ki: f64, limit: f64) -> Self {
        ControllerConfig {
            kp,
            ki,
            kd: 0.0,
            derivative_filter_hz: None,
            output_min: -limit,
            output_max: limit,
            lead_zero_hz: None,
            lead_pole_hz: None,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        for (what, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            require_finite(&format!("{name} {what}"), v)?;
        }
        if !(self.output_min < self.output_max) {
            return Err(Error::invalid(format!("{name}: output limits must satisfy min < max")));
        }
        if let Some(f) = self.derivative_filter_hz {
            require_positive(&format!("{name} derivative filter"), f)?;
        }
        match (self.lead_zero_hz, self.lead_pole_hz) {
            (None, None) => {}
            (Some(z), Some(p)) => {
                require_positive(&format!("{name} lead zero"), z)?;
                require_positive(&format!("{name} lead pole"), p)?;
            }
            _ => return Err(Error::invalid(format!("{name}: lead/lag needs both corners"))),
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.kp == 0.0 && self.ki == 0.0 && self.kd == 0.0
    }
}

/// First-order low-pass exp(−ωc·dt) smoother, y = a·y + (1 − a)·x.
#[derive(Debug, Clone, Copy)]
pub struct LowPass {
    a: f64,
    y: f64,
}

impl LowPass {
    pub fn new(corner_hz: f64, dt: f64) -> Self {
        LowPass { a: (-2.0 * PI * corner_hz * dt).exp(), y: 0.0 }
    }

    #[inline]
    pub fn update(&mut self, x: f64) -> f64 {
        self.y = self.a * self.y + (1.0 - self.a) * x;
        self.y
    }

    pub fn response_z(&self, z: Complex64) -> Complex64 {
        (1.0 - self.a) / (1.0 - self.a / z)
    }
}

/// Discrete PID with filtered derivative, Tustin lead/lag on the error,
/// and conditional integration with a clamped integrator.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    dt: f64,
    integ: f64,
    deriv: f64,
    d_decay: f64,
    prev_err: f64,
    ll: Option<[f64; 3]>,
    ll_x: f64,
    ll_y: f64,
}

impl Controller {
    pub fn new(cfg: ControllerConfig, dt: f64) -> Self {
        let d_decay = cfg.derivative_filter_hz.map_or(0.0, |f| (-2.0 * PI * f * dt).exp());
        let ll = match (cfg.lead_zero_hz, cfg.lead_pole_hz) {
            (Some(fz), Some(fp)) => {
                let k = 2.0 / dt;
                let (tz, tp) = (1.0 / (2.0 * PI * fz), 1.0 / (2.0 * PI * fp));
                let den = 1.0 + k * tp;
                Some([(1.0 + k * tz) / den, (1.0 - k * tz) / den, (1.0 - k * tp) / den])
            }
            _ => None,
        };
        Controller { cfg, dt, integ: 0.0, deriv: 0.0, d_decay, prev_err: 0.0, ll, ll_x: 0.0, ll_y: 0.0 }
    }

    pub fn integrator(&self) -> f64 {
        self.integ
    }

    pub fn update(&mut self, err: f64) -> f64 {
        let e = match self.ll {
            Some([b0, b1, a1]) => {
                let y = b0 * err + b1 * self.ll_x - a1 * self.ll_y;
                self.ll_x = err;
                self.ll_y = y;
                y
            }
            None => err,
        };
        let c = &self.cfg;
        if c.kd != 0.0 {
            self.deriv = self.d_decay * self.deriv + c.kd * (1.0 - self.d_decay) * (e - self.prev_err) / self.dt;
        }
        self.prev_err = e;
        let candidate = (self.integ + c.ki * e * self.dt).clamp(c.output_min, c.output_max);
        let raw = c.kp * e + candidate + self.deriv;
        let pushes_up = candidate > self.integ;
        let pushes_down = candidate < self.integ;
        if !((raw > c.output_max && pushes_up) || (raw < c.output_min && pushes_down)) {
            self.integ = candidate;
        }
        (c.kp * e + self.integ + self.deriv).clamp(c.output_min, c.output_max)
    }

    /// Unsaturated discrete transfer function at z.
    pub fn response_z(&self, z: Complex64) -> Complex64 {
        let c = &self.cfg;
        let zi = 1.0 / z;
        let mut h = Complex64::new(c.kp, 0.0);
        if c.ki != 0.0 {
            h += c.ki * self.dt / (1.0 - zi);
        }
        if c.kd != 0.0 {
            h += c.kd * (1.0 - self.d_decay) / self.dt * (1.0 - zi) / (1.0 - self.d_decay * zi);
        }
        if let Some([b0, b1, a1]) = self.ll {
            h *= (b0 + b1 * zi) / (1.0 + a1 * zi);
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// (i) RTD temperature → heater, cavity error → PZT.
    TemperatureServo,
    /// (ii) scheme (i) plus filtered magnet current into the heater.
    FeedForward,
    /// (iii) cavity error to both heater and PZT.
    DirectDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfInjection {
    /// Added to the RTD setpoint, scaled by the heater→RTD DC gain.
    RtdSetpoint,
    /// Added straight to the heater command.
    Heater,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardFilter {
    /// W per A² of magnet current (sign included; negative cancels).
    pub gain: f64,
    /// Low-pass corner, Hz; `None` passes the signal straight through.
    pub corner_hz: Option<f64>,
    /// W
    pub offset: f64,
    pub injection: FfInjection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Heater gets the error above the split, PZT below.
    HeaterHigh,
    /// Heater below, PZT above.
    HeaterLow,
    /// Both see the full-band error.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub rtd_loop: Option<ControllerConfig>,
    pub pzt_loop: Option<ControllerConfig>,
    pub heater_loop: Option<ControllerConfig>,
    pub ff_filter: Option<FeedForwardFilter>,
    pub crossover_split_hz: Option<f64>,
    pub split_mode: Option<SplitMode>,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        let need = |present: bool, name: &str, want: bool| -> Result<()> {
            match (present, want) {
                (false, true) => Err(Error::invalid(format!("{:?} requires {name}", self.scheme))),
                (true, false) => Err(Error::invalid(format!("{name} is not used by {:?}", self.scheme))),
                _ => Ok(()),
            }
        };
        let (rtd, heater, ff, split) = match self.scheme {
            SchemeKind::TemperatureServo => (true, false, false, false),
            SchemeKind::FeedForward => (true, false, true, false),
            SchemeKind::DirectDual => (false, true, false, true),
        };
        need(self.rtd_loop.is_some(), "rtd_loop", rtd)?;
        need(self.pzt_loop.is_some(), "pzt_loop", true)?;
        need(self.heater_loop.is_some(), "heater_loop", heater)?;
        need(self.ff_filter.is_some(), "ff_filter", ff)?;
        need(self.split_mode.is_some(), "split_mode", split)?;
        let mode = self.split_mode.unwrap_or(SplitMode::Parallel);
        need(self.crossover_split_hz.is_some(), "crossover_split_hz", split && mode != SplitMode::Parallel)?;
        for (name, c) in [("rtd_loop", &self.rtd_loop), ("pzt_loop", &self.pzt_loop), ("heater_loop", &self.heater_loop)] {
            if let Some(c) = c {
                c.validate(name)?;
            }
        }
        if let Some(f) = &self.ff_filter {
            require_finite("ff gain", f.gain)?;
            require_finite("ff offset", f.offset)?;
            if let Some(c) = f.corner_hz {
                require_positive("ff corner", c)?;
            }
        }
        if let Some(f) = self.crossover_split_hz {
            require_positive("crossover split", f)?;
        }
        Ok(())
    }

    /// Committed scheme (i) gains: RTD loop near 4 kHz, PZT integrator
    /// crossing near 10 Hz.
    pub fn temperature_servo() -> Self {
        SchemeConfig {
            scheme: SchemeKind::TemperatureServo,
            rtd_loop: Some(ControllerConfig::pi(RTD_KP, RTD_KP * 2.0 * PI * 300.0, 1.0)),
            pzt_loop: Some(ControllerConfig::pi(0.0, PZT_KI, 100.0)),
            heater_loop: None,
            ff_filter: None,
            crossover_split_hz: None,
            split_mode: None,
        }
    }

    /// Scheme (i) plus the committed feed-forward filter, tuned on the
    /// 0.5 A pulse over 20 ms after switch-on.
    pub fn feed_forward() -> Self {
        SchemeConfig {
            scheme: SchemeKind::FeedForward,
            ff_filter: Some(FeedForwardFilter {
                gain: -0.00994,
                corner_hz: Some(10.6),
                offset: -2.0e-5,
                injection: FfInjection::RtdSetpoint,
            }),
            ..Self::temperature_servo()
        }
    }

    /// Committed scheme (iii): heater PI on the error above 30 Hz (zero at
    /// 20 kHz, crossing near 120 kHz at dt = 0.25 μs), PZT below.
    pub fn direct_dual() -> Self {
        SchemeConfig {
            scheme: SchemeKind::DirectDual,
            rtd_loop: None,
            pzt_loop: Some(ControllerConfig::pi(0.0, PZT_KI, 100.0)),
            heater_loop: Some(ControllerConfig::pi(HEATER_KP, HEATER_KP * 2.0 * PI * 20e3, 1.0)),
            ff_filter: None,
            crossover_split_hz: Some(30.0),
            split_mode: Some(SplitMode::HeaterHigh),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub t_start: f64,
    pub t_end: f64,
    pub amps: f64,
    /// Linear ramp duration at each edge, s.
    #[serde(default)]
    pub ramp: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CurrentTimeline {
    pub pulses: Vec<Pulse>,
}

impl CurrentTimeline {
    pub fn validate(&self, duration: f64) -> Result<()> {
        let mut sorted = self.pulses.clone();
        sorted.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
        let mut last_end = f64::NEG_INFINITY;
        for p in &sorted {
            require_non_negative("pulse start", p.t_start)?;
            require_finite("pulse current", p.amps)?;
            require_non_negative("pulse ramp", p.ramp)?;
            if !(p.t_end > p.t_start) {
                return Err(Error::invalid(format!("pulse at {} s ends before it starts", p.t_start)));
            }
            if p.t_end > duration {
                return Err(Error::invalid(format!("pulse ending at {} s exceeds the run duration", p.t_end)));
            }
            if 2.0 * p.ramp > p.t_end - p.t_start {
                return Err(Error::invalid("pulse ramps longer than the pulse"));
            }
            if p.t_start < last_end {
                return Err(Error::invalid(format!("pulse at {} s overlaps the previous one", p.t_start)));
            }
            last_end = p.t_end;
        }
        Ok(())
    }

    /// Times at which the current starts to change.
    pub fn switch_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .pulses
            .iter()
            .flat_map(|p| [p.t_start, p.t_end - p.ramp])
            .collect();
        t.sort_by(f64::total_cmp);
        t
    }

    pub fn is_trivial(&self) -> bool {
        self.pulses.iter().all(|p| p.amps == 0.0)
    }

    pub fn max_abs_current(&self) -> f64 {
        self.pulses.iter().fold(0.0, |a, p| a.max(p.amps.abs()))
    }

    /// Current held over step k. Edges snap to the step grid, so the
    /// timeline is sampled identically on any dt that divides the edges.
    pub fn current_at_step(&self, k: u64, dt: f64) -> f64 {
        let t = k as f64 * dt;
        for p in &self.pulses {
            let on = (p.t_start / dt).round() as u64;
            let off = (p.t_end / dt).round() as u64;
            if k < on || k >= off {
                continue;
            }
            if p.ramp == 0.0 {
                return p.amps;
            }
            let up = ((t - p.t_start) / p.ramp).clamp(0.0, 1.0);
            let down = ((p.t_end - t) / p.ramp).clamp(0.0, 1.0);
            return p.amps * up.min(down);
        }
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dt: f64,
    pub duration: f64,
    /// White noise on the frequency error, Hz rms.
    pub sensor_noise_rms: f64,
    pub rng_seed: u64,
    /// Trace sampling interval; rounded to a whole number of steps.
    pub sample_interval: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { dt: 5e-6, duration: 0.8, sensor_noise_rms: 0.0, rng_seed: 0, sample_interval: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub plant: PlantConfig,
    pub scheme: SchemeConfig,
    pub disturbance: CurrentTimeline,
    pub run: RunConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.scheme.validate()?;
        require_positive("dt", self.run.dt)?;
        require_positive("duration", self.run.duration)?;
        require_non_negative("sensor noise", self.run.sensor_noise_rms)?;
        if let Some(s) = self.run.sample_interval {
            require_positive("sample interval", s)?;
        }
        if self.run.duration / self.run.dt > 1e10 {
            return Err(Error::invalid("more than 1e10 steps requested"));
        }
        self.disturbance.validate(self.run.duration)
    }

    pub fn steps(&self) -> u64 {
        (self.run.duration / self.run.dt).round() as u64
    }

    fn decimation(&self) -> u64 {
        self.run.sample_interval.map_or(1, |s| ((s / self.run.dt).round() as u64).max(1))
    }
}

/// Aggregate figures of a trace, all computable from its series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub peak_abs_offset_hz: f64,
    pub peak_time_s: f64,
    pub linewidth_hz: f64,
    pub time_above_linewidth_s: f64,
    pub longest_above_linewidth_s: f64,
    /// From the first current switch until |offset| last exceeds a linewidth.
    pub settling_time_s: f64,
    pub rms_after_settling_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub t: Vec<f64>,
    pub offset: Vec<f64>,
    pub pzt: Vec<f64>,
    pub heater: Vec<f64>,
    pub rtd: Vec<f64>,
    pub transmission: Vec<f64>,
    pub sample_interval: f64,
    pub linewidth: f64,
    pub switch_times: Vec<f64>,
    /// Peak |offset| over every simulation step, including unsampled ones.
    pub unsampled_peak_abs_offset_hz: f64,
    pub summary: TraceSummary,
}

pub const TRACE_CSV_HEADER: &str = "t_s,offset_hz,pzt_v,heater_w,rtd_k,transmission";

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn summarize(&self) -> TraceSummary {
        summarize(&self.t, &self.offset, self.sample_interval, self.linewidth, &self.switch_times)
    }

    /// Largest |offset| outside [s, s + holdoff) for every switch time s.
    pub fn max_abs_offset_after_holdoff(&self, holdoff: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.offset)
            .filter(|(&t, _)| !self.switch_times.iter().any(|&s| t >= s && t < s + holdoff))
            .fold(0.0, |a, (_, &x)| a.max(x.abs()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 * self.len() + 64);
        s.push_str(TRACE_CSV_HEADER);
        s.push('\n');
        for i in 0..self.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.t[i], self.offset[i], self.pzt[i], self.heater[i], self.rtd[i], self.transmission[i]
            ));
        }
        s
    }
}

fn summarize(t: &[f64], offset: &[f64], ds: f64, lw: f64, switches: &[f64]) -> TraceSummary {
    let (mut peak, mut peak_t) = (0.0f64, 0.0);
    let (mut above, mut run, mut longest) = (0usize, 0usize, 0usize);
    let mut last_above: Option<usize> = None;
    for (i, &x) in offset.iter().enumerate() {
        if x.abs() > peak {
            peak = x.abs();
            peak_t = t[i];
        }
        if x.abs() > lw {
            above += 1;
            run += 1;
            longest = longest.max(run);
            last_above = Some(i);
        } else {
            run = 0;
        }
    }
    let start = switches.first().copied().unwrap_or(0.0);
    let settle_idx = last_above.map_or(0, |i| i + 1);
    let settling = last_above.map_or(0.0, |i| (t[i] + ds - start).max(0.0));
    let tail = &offset[settle_idx.min(offset.len())..];
    let rms = if tail.is_empty() { 0.0 } else { (tail.iter().map(|x| x * x).sum::<f64>() / tail.len() as f64).sqrt() };
    TraceSummary {
        peak_abs_offset_hz: peak,
        peak_time_s: peak_t,
        linewidth_hz: lw,
        time_above_linewidth_s: above as f64 * ds,
        longest_above_linewidth_s: longest as f64 * ds,
        settling_time_s: settling,
        rms_after_settling_hz: rms,
    }
}

/// Everything the loop needs, built once per scenario.
struct Loop {
    plant: DiscretePlant,
    scheme: SchemeKind,
    rtd: Option<Controller>,
    pzt: Controller,
    heater: Option<Controller>,
    ff: Option<(FeedForwardFilter, Option<LowPass>)>,
    split: Option<LowPass>,
    split_mode: SplitMode,
    rtd_dc: f64,
}

#[derive(Debug, Clone, Copy)]
struct StepRecord {
    offset: f64,
    pzt: f64,
    heater: f64,
    rtd: f64,
}

impl Loop {
    fn new(sc: &Scenario, model: &Arc<PlantModel>) -> Result<Self> {
        let dt = sc.run.dt;
        let s = &sc.scheme;
        Ok(Loop {
            plant: model.discretize(dt)?,
            scheme: s.scheme,
            rtd: s.rtd_loop.map(|c| Controller::new(c, dt)),
            pzt: Controller::new(s.pzt_loop.expect("validated"), dt),
            heater: s.heater_loop.map(|c| Controller::new(c, dt)),
            ff: s.ff_filter.map(|f| (f, f.corner_hz.map(|c| LowPass::new(c, dt)))),
            split: s.crossover_split_hz.map(|f| LowPass::new(f, dt)),
            split_mode: s.split_mode.unwrap_or(SplitMode::Parallel),
            rtd_dc: model.rtd_heater.dc_gain(),
        })
    }

    /// Commands for the current outputs; returns (pzt V, heater W).
    fn control(&mut self, measured_offset: f64, rtd_temp: f64, current: f64) -> (f64, f64) {
        match self.scheme {
            SchemeKind::TemperatureServo | SchemeKind::FeedForward => {
                let mut setpoint = 0.0;
                let mut direct = 0.0;
                if let Some((f, lp)) = &mut self.ff {
                    let sq = current * current;
                    let filtered = lp.as_mut().map_or(sq, |l| l.update(sq));
                    let u = f.gain * filtered + f.offset;
                    match f.injection {
                        FfInjection::RtdSetpoint => setpoint = self.rtd_dc * u,
                        FfInjection::Heater => direct = u,
                    }
                }
                let rtd = self.rtd.as_mut().expect("validated");
                let heater = rtd.update(setpoint - rtd_temp) + direct;
                let heater = heater.clamp(rtd.cfg.output_min, rtd.cfg.output_max);
                (self.pzt.update(measured_offset), heater)
            }
            SchemeKind::DirectDual => {
                let (to_heater, to_pzt) = match (&mut self.split, self.split_mode) {
                    (Some(lp), SplitMode::HeaterHigh) => {
                        let low = lp.update(measured_offset);
                        (measured_offset - low, low)
                    }
                    (Some(lp), SplitMode::HeaterLow) => {
                        let low = lp.update(measured_offset);
                        (low, measured_offset - low)
                    }
                    _ => (measured_offset, measured_offset),
                };
                let heater = self.heater.as_mut().expect("validated").update(-to_heater);
                (self.pzt.update(to_pzt), heater)
            }
        }
    }
}

fn simulate<F: FnMut(u64, StepRecord)>(sc: &Scenario, model: &Arc<PlantModel>, last_step: u64, mut observe: F) -> Result<()> {
    let mut lp = Loop::new(sc, model)?;
    let mut state = model.zero_state();
    let mut rng = ChaCha8Rng::seed_from_u64(sc.run.rng_seed);
    let noise = sc.run.sensor_noise_rms;
    let dt = sc.run.dt;
    let mut out = lp.plant.outputs(&state);
    for k in 0..=last_step.min(sc.steps()) {
        if !out.resonance_offset.is_finite() || out.resonance_offset.abs() > DIVERGENCE_HZ {
            return Err(Error::Diverged { time_s: k as f64 * dt });
        }
        let current = sc.disturbance.current_at_step(k, dt);
        let measured = if noise > 0.0 {
            out.resonance_offset + noise * rng.sample::<f64, _>(StandardNormal)
        } else {
            out.resonance_offset
        };
        let (pzt, heater) = lp.control(measured, out.rtd_temperature, current);
        observe(k, StepRecord { offset: out.resonance_offset, pzt, heater, rtd: out.rtd_temperature });
        out = lp.plant.step(&mut state, PlantInputs { pzt_volts: pzt, heater_power: heater, magnet_current: current });
    }
    Ok(())
}

/// Check that dt resolves every active loop: dt ≤ 1/(20·crossover).
pub fn check_time_step(sc: &Scenario) -> Result<()> {
    for path in [LoopPath::Heater, LoopPath::Pzt] {
        let report = open_loop_bode(sc, path)?;
        if let Some(fc) = report.crossover_hz {
            if sc.run.dt > 1.0 / (20.0 * fc) {
                return Err(Error::invalid(format!(
                    "dt = {:e} s does not resolve the {path:?} loop crossover at {fc:.3e} Hz (need dt ≤ {:e} s)",
                    sc.run.dt,
                    1.0 / (20.0 * fc)
                )));
            }
        }
    }
    Ok(())
}

pub fn run_scenario(sc: &Scenario) -> Result<Trace> {
    sc.validate()?;
    check_time_step(sc)?;
    let model = PlantModel::build(&sc.plant)?;
    let dec = sc.decimation();
    let dt = sc.run.dt;
    let lw = model.linewidth;
    let n = (sc.steps() / dec + 1) as usize;
    let mut tr = Trace {
        t: Vec::with_capacity(n),
        offset: Vec::with_capacity(n),
        pzt: Vec::with_capacity(n),
        heater: Vec::with_capacity(n),
        rtd: Vec::with_capacity(n),
        transmission: Vec::with_capacity(n),
        sample_interval: dec as f64 * dt,
        linewidth: lw,
        switch_times: sc.disturbance.switch_times(),
        unsampled_peak_abs_offset_hz: 0.0,
        summary: summarize(&[], &[], 0.0, lw, &[]),
    };
    let mut peak = 0.0f64;
    simulate(sc, &model, u64::MAX, |k, r| {
        peak = peak.max(r.offset.abs());
        if k % dec == 0 {
            tr.t.push(k as f64 * dt);
            tr.offset.push(r.offset);
            tr.pzt.push(r.pzt);
            tr.heater.push(r.heater);
            tr.rtd.push(r.rtd);
            tr.transmission.push(1.0 / (1.0 + (2.0 * r.offset / lw).powi(2)));
        }
    })?;
    tr.unsampled_peak_abs_offset_hz = peak;
    tr.summary = tr.summarize();
    Ok(tr)
}

/// Peak |offset| over every step with t in [from, until].
pub fn peak_offset(sc: &Scenario, from: f64, until: f64) -> Result<f64> {
    sc.validate()?;
    let model = PlantModel::build(&sc.plant)?;
    let dt = sc.run.dt;
    let mut peak = 0.0f64;
    let last = if until.is_finite() { (until / dt).floor().max(0.0) as u64 } else { u64::MAX };
    simulate(sc, &model, last, |k, r| {
        if k as f64 * dt >= from {
            peak = peak.max(r.offset.abs());
        }
    })?;
    Ok(peak)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPath {
    /// Heater loop: RTD temperature loop in schemes (i)/(ii), cavity error
    /// loop in scheme (iii).
    Heater,
    Pzt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub path: LoopPath,
    pub freq_hz: Vec<f64>,
    pub gain_db: Vec<f64>,
    /// Unwrapped from the lowest frequency.
    pub phase_deg: Vec<f64>,
    pub crossover_hz: Option<f64>,
    pub phase_margin_deg: Option<f64>,
    pub gain_margin_db: Option<f64>,
    /// No unity-gain crossing anywhere below Nyquist.
    pub unconditionally_stable: bool,
}

pub const MARGIN_CSV_HEADER: &str = "freq_hz,gain_db,phase_deg";

impl MarginReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MARGIN_CSV_HEADER);
        s.push('\n');
        for i in 0..self.freq_hz.len() {
            s.push_str(&format!("{:e},{:e},{:e}\n", self.freq_hz[i], self.gain_db[i], self.phase_deg[i]));
        }
        s
    }
}

/// Discrete open-loop transfer controller × split filter × plant for one
/// path, with the sign chosen so that negative feedback is L > 0 at DC.
pub fn open_loop_transfer(sc: &Scenario, path: LoopPath) -> Result<impl Fn(f64) -> Complex64> {
    sc.validate()?;
    let model = PlantModel::build(&sc.plant)?;
    let dt = sc.run.dt;
    let plant = model.discretize(dt)?;
    let s = &sc.scheme;
    let hz = model.hz_per_meter;
    let split = s.crossover_split_hz.map(|f| LowPass::new(f, dt));
    let mode = s.split_mode.unwrap_or(SplitMode::Parallel);
    let (ctrl, filter_kind, kind): (Controller, i8, u8) = match (s.scheme, path) {
        (SchemeKind::DirectDual, LoopPath::Heater) => {
            let f = match mode {
                SplitMode::HeaterHigh => 1,
                SplitMode::HeaterLow => -1,
                SplitMode::Parallel => 0,
            };
            (Controller::new(s.heater_loop.expect("validated"), dt), f, 1)
        }
        (SchemeKind::DirectDual, LoopPath::Pzt) => {
            let f = match mode {
                SplitMode::HeaterHigh => -1,
                SplitMode::HeaterLow => 1,
                SplitMode::Parallel => 0,
            };
            (Controller::new(s.pzt_loop.expect("validated"), dt), f, 2)
        }
        (_, LoopPath::Heater) => (Controller::new(s.rtd_loop.expect("validated"), dt), 0, 0),
        (_, LoopPath::Pzt) => (Controller::new(s.pzt_loop.expect("validated"), dt), 0, 2),
    };
    Ok(move |f: f64| {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f * dt);
        let g = match kind {
            0 => plant.rtd_heater.response_z(z),
            1 => plant.heater.response_z(z) * hz,
            _ => plant.pzt_response_z(z) * hz,
        };
        let filt = match (filter_kind, &split) {
            (1, Some(lp)) => 1.0 - lp.response_z(z),
            (-1, Some(lp)) => lp.response_z(z),
            _ => Complex64::new(1.0, 0.0),
        };
        ctrl.response_z(z) * filt * g
    })
}

pub fn open_loop_bode(sc: &Scenario, path: LoopPath) -> Result<MarginReport> {
    let l = open_loop_transfer(sc, path)?;
    let nyquist = 0.5 / sc.run.dt;
    let lo = 0.01f64;
    let n = 600;
    let freq: Vec<f64> = (0..n).map(|i| lo * (0.999 * nyquist / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let vals: Vec<Complex64> = freq.iter().map(|&f| l(f)).collect();
    let gain_db: Vec<f64> = vals.iter().map(|v| 20.0 * v.norm().log10()).collect();
    let mut phase_deg = Vec::with_capacity(n);
    let mut prev = 0.0;
    for (i, v) in vals.iter().enumerate() {
        let raw = v.arg().to_degrees();
        let p = if i == 0 { raw } else { raw + 360.0 * ((prev - raw) / 360.0).round() };
        phase_deg.push(p);
        prev = p;
    }
    let mut crossover = None;
    let mut pm = None;
    for i in 1..n {
        if gain_db[i - 1] >= 0.0 && gain_db[i] < 0.0 {
            // bisect on log f for |L| = 1
            let (mut a, mut b) = (freq[i - 1].ln(), freq[i].ln());
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if l(m.exp()).norm() >= 1.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            let fc = (0.5 * (a + b)).exp();
            let raw = l(fc).arg().to_degrees();
            let ph = raw + 360.0 * ((phase_deg[i - 1] - raw) / 360.0).round();
            crossover = Some(fc);
            pm = Some(180.0 + ph);
            break;
        }
    }
    let mut gm = None;
    if let Some(fc) = crossover {
        for i in 1..n {
            if freq[i] <= fc {
                continue;
            }
            let (p0, p1) = (phase_deg[i - 1], phase_deg[i]);
            let target = -180.0 + 360.0 * ((p0 + 180.0) / 360.0).floor();
            if (p0 - target) * (p1 - target) <= 0.0 && p0 != p1 {
                let w = (target - p0) / (p1 - p0);
                gm = Some(-(gain_db[i - 1] + w * (gain_db[i] - gain_db[i - 1])));
                break;
            }
        }
    }
    let stable = crossover.is_none() && gain_db.iter().all(|&g| g < 0.0);
    Ok(MarginReport {
        path,
        freq_hz: freq,
        gain_db,
        phase_deg,
        crossover_hz: crossover,
        phase_margin_deg: pm,
        gain_margin_db: gm,
        unconditionally_stable: stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub max_evaluations: usize,
    /// Relative spread of simplex values at convergence.
    pub f_tol: f64,
    /// Simplex size in the normalized coordinates.
    pub x_tol: f64,
    /// Peak is measured from the first switch for this long (s); `None`
    /// uses the whole run.
    pub window: Option<f64>,
}

impl Default for TuneOptions {
    fn default() -> Self {
        TuneOptions { max_evaluations: 600, f_tol: 1e-4, x_tol: 1e-4, window: Some(0.02) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FfTuneResult {
    pub filter: FeedForwardFilter,
    pub peak_without_hz: f64,
    pub peak_with_hz: f64,
    pub suppression_ratio: f64,
    pub evaluations: usize,
}

/// Minimize peak |offset| over (gain, corner, offset) with a Nelder–Mead
/// simplex, over a window that starts at the first current switch.
pub fn tune_feedforward(sc: &Scenario, opts: TuneOptions) -> Result<FfTuneResult> {
    sc.validate()?;
    if sc.scheme.scheme != SchemeKind::FeedForward {
        return Err(Error::invalid("feed-forward tuning needs a feed_forward scheme"));
    }
    let start = sc.scheme.ff_filter.expect("validated");
    let with = |f: FeedForwardFilter| {
        let mut s = sc.clone();
        s.scheme.ff_filter = Some(f);
        s
    };
    let off = FeedForwardFilter { gain: 0.0, offset: 0.0, ..start };
    let from = sc.disturbance.switch_times().first().copied().unwrap_or(0.0);
    let until = opts.window.map_or(f64::INFINITY, |w| from + w);
    let peak_without = peak_offset(&with(off), from, until)?;
    if sc.disturbance.is_trivial() || peak_without == 0.0 {
        return Ok(FfTuneResult {
            filter: start,
            peak_without_hz: peak_without,
            peak_with_hz: peak_without,
            suppression_ratio: 1.0,
            evaluations: 0,
        });
    }
    let model = PlantModel::build(&sc.plant)?;
    // Scales from the plant: DC heat ratio and the wire diffusion time.
    let imax2 = sc.disturbance.max_abs_current().powi(2);
    let g0 = -model.disturbance.dc_gain() / model.heater.dc_gain() * sc.plant.waveguide_resistance_per_length;
    let g_scale = if start.gain != 0.0 { start.gain.abs() } else { g0.abs() };
    let c0 = start.corner_hz.unwrap_or_else(|| {
        sc.plant.material.diffusivity / sc.plant.disturbance_distance.powi(2) / (2.0 * PI)
    });
    let o_scale = g_scale * imax2;
    let has_corner = start.corner_hz.is_some();
    let decode = |x: &[f64]| FeedForwardFilter {
        gain: x[0] * g_scale,
        corner_hz: if has_corner { Some(c0 * 10f64.powf(x[1])) } else { None },
        offset: x[2] * o_scale,
        injection: start.injection,
    };
    let x0 = [if start.gain != 0.0 { start.gain / g_scale } else { g0 / g_scale }, 0.0, start.offset / o_scale];
    let mut evals = 0usize;
    let mut cost = |x: &[f64]| -> f64 {
        evals += 1;
        peak_offset(&with(decode(x)), from, until).unwrap_or(f64::INFINITY)
    };
    let dims: Vec<usize> = if has_corner { vec![0, 1, 2] } else { vec![0, 2] };
    let (best, converged) = nelder_mead(&mut cost, x0, &dims, [0.2, 0.3, 0.05], opts);
    if !converged {
        return Err(Error::NoConvergence { what: "feed-forward tuning".into(), iterations: opts.max_evaluations });
    }
    let filter = decode(&best.0);
    Ok(FfTuneResult {
        filter,
        peak_without_hz: peak_without,
        peak_with_hz: best.1,
        suppression_ratio: peak_without / best.1,
        evaluations: evals,
    })
}

/// Nelder–Mead over the coordinates listed in `dims`; others stay at x0.
fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    x0: [f64; 3],
    dims: &[usize],
    step: [f64; 3],
    opts: TuneOptions,
) -> (([f64; 3], f64), bool) {
    let n = dims.len();
    let mut pts: Vec<([f64; 3], f64)> = Vec::with_capacity(n + 1);
    let mut evals = 0;
    let mut eval = |x: [f64; 3], evals: &mut usize| {
        *evals += 1;
        (x, f(&x))
    };
    pts.push(eval(x0, &mut evals));
    for &d in dims {
        let mut x = x0;
        x[d] += step[d];
        pts.push(eval(x, &mut evals));
    }
    loop {
        pts.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = pts[0].1;
        let spread = pts.iter().map(|p| (p.1 - best).abs()).fold(0.0, f64::max);
        let size = pts[1..]
            .iter()
            .map(|p| dims.iter().map(|&d| (p.0[d] - pts[0].0[d]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * best.abs() || size <= opts.x_tol {
            return (pts[0], best.is_finite());
        }
        if evals >= opts.max_evaluations {
            return (pts[0], false);
        }
        let mut centroid = x0;
        for &d in dims {
            centroid[d] = pts[..n].iter().map(|p| p.0[d]).sum::<f64>() / n as f64;
        }
        let worst = pts[n];
        let along = |t: f64| {
            let mut x = centroid;
            for &d in dims {
                x[d] = centroid[d] + t * (worst.0[d] - centroid[d]);
            }
            x
        };
        let r = eval(along(-1.0), &mut evals);
        if r.1 < pts[0].1 {
            let e = eval(along(-2.0), &mut evals);
            pts[n] = if e.1 < r.1 { e } else { r };
        } else if r.1 < pts[n - 1].1 {
            pts[n] = r;
        } else {
            let c = if r.1 < worst.1 { eval(along(-0.5), &mut evals) } else { eval(along(0.5), &mut evals) };
            if c.1 < worst.1.min(r.1) {
                pts[n] = c;
            } else {
                let b = pts[0].0;
                for p in pts.iter_mut().skip(1) {
                    let mut x = p.0;
                    for &d in dims {
                        x[d] = b[d] + 0.5 * (x[d] - b[d]);
                    }
                    *p = eval(x, &mut evals);
                }
            }
        }
    }
}
