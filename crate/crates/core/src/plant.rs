//! Time-steppable model of the cavity resonance.
//!
//! Three inputs move the resonance: PZT voltage (curved mirror), heater
//! power and magnet current (both through thermal lift of the chip mirror).
//! The diffusive responses are replaced by sums of real first-order modes
//! fitted to the Green's-function frequency responses, which are then
//! advanced with their exact exponential update.

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::Add;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{require_finite, require_non_negative, require_positive, Error, Result};
use crate::optics::{CavitySpec, SPEED_OF_LIGHT};
use crate::quad::QuadOptions;
use crate::thermal::{line_response, point_response, surface_lift_with, HeatSource, LiftOptions, MaterialProps};

/// Σ rᵢ/(s − pᵢ) + d with real negative poles pᵢ (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferModel {
    pub poles: Vec<f64>,
    pub residues: Vec<f64>,
    pub direct_term: f64,
}

impl TransferModel {
    pub fn zero() -> Self {
        TransferModel { poles: vec![], residues: vec![], direct_term: 0.0 }
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        self.eval_s(Complex64::new(0.0, omega))
    }

    pub fn eval_s(&self, s: Complex64) -> Complex64 {
        self.poles
            .iter()
            .zip(&self.residues)
            .fold(Complex64::new(self.direct_term, 0.0), |acc, (&p, &r)| acc + r / (s - p))
    }

    pub fn dc_gain(&self) -> f64 {
        self.direct_term + self.poles.iter().zip(&self.residues).map(|(&p, &r)| -r / p).sum::<f64>()
    }

    pub fn is_stable(&self) -> bool {
        self.poles.iter().all(|&p| p < 0.0 && p.is_finite())
    }

    /// Response to a unit step applied at t = 0, for t > 0.
    pub fn step_response(&self, t: f64) -> f64 {
        self.direct_term
            + self
                .poles
                .iter()
                .zip(&self.residues)
                .map(|(&p, &r)| r / p * ((p * t).exp() - 1.0))
                .sum::<f64>()
    }

    pub fn scaled(&self, k: f64) -> TransferModel {
        TransferModel {
            poles: self.poles.clone(),
            residues: self.residues.iter().map(|r| r * k).collect(),
            direct_term: self.direct_term * k,
        }
    }

    /// Cascade with a unit-DC first-order lag ωl/(s + ωl), by partial
    /// fractions. Adds one pole at −ωl.
    pub fn with_lag(&self, omega_l: f64) -> Result<TransferModel> {
        require_positive("lag corner", omega_l)?;
        let mut poles = Vec::with_capacity(self.poles.len() + 1);
        let mut residues = Vec::with_capacity(self.poles.len() + 1);
        let mut lag_residue = self.direct_term * omega_l;
        for (&p, &r) in self.poles.iter().zip(&self.residues) {
            let gap = -omega_l - p;
            if gap.abs() <= 1e-9 * omega_l {
                return Err(Error::domain("lag corner coincides with a model pole"));
            }
            // r ωl / ((s − p)(s + ωl)) = c [1/(s − p) − 1/(s + ωl)], c = r ωl/(p + ωl)
            let c = r * omega_l / (p + omega_l);
            poles.push(p);
            residues.push(c);
            lag_residue -= c;
        }
        poles.push(-omega_l);
        residues.push(lag_residue);
        Ok(TransferModel { poles, residues, direct_term: 0.0 })
    }
}

/// One point of a target frequency response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencySample {
    pub omega: f64,
    pub value: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalFitOptions {
    pub n_poles: usize,
    /// Pole placement band in Hz; defaults to the sample band.
    pub pole_min_hz: Option<f64>,
    pub pole_max_hz: Option<f64>,
    pub direct_term: bool,
    /// Errors are weighted by max(|H|, floor·max|H|) and only checked where
    /// |H| ≥ floor·max|H|.
    pub floor: f64,
    pub lawson_iterations: usize,
    pub max_mag_error: f64,
    pub max_phase_error_deg: f64,
}

impl Default for RationalFitOptions {
    fn default() -> Self {
        RationalFitOptions {
            n_poles: 12,
            pole_min_hz: None,
            pole_max_hz: None,
            direct_term: true,
            floor: 0.0,
            lawson_iterations: 30,
            max_mag_error: 0.05,
            max_phase_error_deg: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub max_mag_error: f64,
    pub max_phase_error_deg: f64,
    pub checked_min_hz: f64,
    pub checked_max_hz: f64,
}

/// Evaluate fit error over the samples where |H| ≥ floor·max|H|.
pub fn fit_errors(model: &TransferModel, samples: &[FrequencySample], floor: f64) -> FitReport {
    let hmax = samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max);
    let mut mag: f64 = 0.0;
    let mut phase: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for s in samples {
        let h = s.value.norm();
        if h == 0.0 || h < floor * hmax {
            continue;
        }
        let f = model.eval(s.omega);
        mag = mag.max((f.norm() - h).abs() / h);
        phase = phase.max((f / s.value).arg().abs().to_degrees());
        lo = lo.min(s.omega / (2.0 * PI));
        hi = hi.max(s.omega / (2.0 * PI));
    }
    FitReport { max_mag_error: mag, max_phase_error_deg: phase, checked_min_hz: lo, checked_max_hz: hi }
}

/// Fit with default options and `n_poles` log-spaced poles across the
/// sample band.
pub fn fit_rational(samples: &[FrequencySample], n_poles: usize) -> Result<TransferModel> {
    let opts = RationalFitOptions { n_poles, ..Default::default() };
    fit_rational_with(samples, &opts).map(|(m, _)| m)
}

/// Poles fixed on a log grid, residues (and direct term) by weighted
/// linear least squares, reweighted toward a minimax relative error.
pub fn fit_rational_with(samples: &[FrequencySample], opts: &RationalFitOptions) -> Result<(TransferModel, FitReport)> {
    let n = opts.n_poles;
    if n == 0 {
        return Err(Error::invalid("n_poles must be at least 1"));
    }
    if samples.len() < 4 * n {
        return Err(Error::InsufficientData(format!(
            "{} frequency samples for {n} poles (need at least {})",
            samples.len(),
            4 * n
        )));
    }
    for s in samples {
        require_positive("sample frequency", s.omega)?;
        require_finite("sample value", s.value.re)?;
        require_finite("sample value", s.value.im)?;
    }
    require_non_negative("floor", opts.floor)?;
    let hmax = samples.iter().map(|s| s.value.norm()).fold(0.0, f64::max);
    let fmin = samples.iter().map(|s| s.omega).fold(f64::INFINITY, f64::min) / (2.0 * PI);
    let fmax = samples.iter().map(|s| s.omega).fold(0.0, f64::max) / (2.0 * PI);
    let plo = opts.pole_min_hz.unwrap_or(fmin);
    let phi = opts.pole_max_hz.unwrap_or(fmax);
    require_positive("pole band", plo)?;
    if !(phi >= plo) {
        return Err(Error::invalid("pole band is empty"));
    }
    let poles: Vec<f64> = (0..n)
        .map(|i| {
            let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
            -2.0 * PI * plo * (phi / plo).powf(frac)
        })
        .collect();
    if hmax == 0.0 {
        let model = TransferModel { residues: vec![0.0; n], poles, direct_term: 0.0 };
        let report = FitReport { max_mag_error: 0.0, max_phase_error_deg: 0.0, checked_min_hz: fmin, checked_max_hz: fmax };
        return Ok((model, report));
    }

    let cols = n + usize::from(opts.direct_term);
    let m = samples.len();
    let basis: Vec<Vec<Complex64>> = samples
        .iter()
        .map(|s| {
            let jw = Complex64::new(0.0, s.omega);
            let mut row: Vec<Complex64> = poles.iter().map(|&p| 1.0 / (jw - p)).collect();
            if opts.direct_term {
                row.push(Complex64::new(1.0, 0.0));
            }
            row
        })
        .collect();
    let scale: Vec<f64> = samples.iter().map(|s| s.value.norm().max(opts.floor * hmax)).collect();
    let mut weight = vec![1.0 / m as f64; m];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..opts.lawson_iterations.max(1) {
        let mut a = DMatrix::<f64>::zeros(2 * m, cols);
        let mut b = DVector::<f64>::zeros(2 * m);
        for i in 0..m {
            let w = weight[i].sqrt() / scale[i];
            for j in 0..cols {
                a[(2 * i, j)] = basis[i][j].re * w;
                a[(2 * i + 1, j)] = basis[i][j].im * w;
            }
            b[2 * i] = samples[i].value.re * w;
            b[2 * i + 1] = samples[i].value.im * w;
        }
        // Column equilibration keeps the SVD well conditioned across
        // pole decades.
        let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm().max(f64::MIN_POSITIVE)).collect();
        for j in 0..cols {
            let nj = norms[j];
            a.column_mut(j).scale_mut(1.0 / nj);
        }
        let svd = a.svd(true, true);
        let x = svd
            .solve(&b, 1e-14)
            .map_err(|e| Error::Singular(format!("rational fit least squares: {e}")))?;
        let coef: Vec<f64> = (0..cols).map(|j| x[j] / norms[j]).collect();
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(Error::Singular("rational fit produced non-finite residues".into()));
        }
        let errs: Vec<f64> = (0..m)
            .map(|i| {
                let fit: Complex64 = basis[i].iter().zip(&coef).map(|(bv, c)| bv * c).sum();
                (fit - samples[i].value).norm() / scale[i]
            })
            .collect();
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(_, w)| worst < *w) {
            best = Some((coef.clone(), worst));
        }
        let total: f64 = (0..m).map(|i| weight[i] * errs[i]).sum();
        if total <= 0.0 {
            break;
        }
        for i in 0..m {
            weight[i] = (weight[i] * errs[i] / total).max(1e-14);
        }
    }
    let (coef, _) = best.expect("at least one iteration");
    let model = TransferModel {
        residues: coef[..n].to_vec(),
        direct_term: if opts.direct_term { coef[n] } else { 0.0 },
        poles,
    };
    let report = fit_errors(&model, samples, opts.floor);
    if report.max_mag_error > opts.max_mag_error || report.max_phase_error_deg > opts.max_phase_error_deg {
        return Err(Error::FitAccuracy { mag_err: report.max_mag_error, phase_err_deg: report.max_phase_error_deg });
    }
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceGeometry {
    /// Waveguide wire as a line source at `disturbance_distance`.
    Line,
    /// Disturbance heat enters through exactly the heater dynamics.
    /// Used as a cancellation test bed for feed-forward.
    MatchHeater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    pub cavity: CavitySpec,
    pub material: MaterialProps,
    /// Probe wavelength used to convert length change to frequency.
    pub probe_wavelength: f64,
    /// Probe linewidth relative to the cavity linewidth at `cavity.wavelength`.
    pub probe_linewidth_factor: f64,
    pub heater_distance: f64,
    pub disturbance_distance: f64,
    pub rtd_heater_distance: f64,
    pub rtd_disturbance_distance: f64,
    pub disturbance_geometry: DisturbanceGeometry,
    /// m/V
    pub pzt_gain: f64,
    /// Hz
    pub pzt_resonance: f64,
    pub pzt_q: f64,
    pub fast_path_fraction: f64,
    /// Ω
    pub heater_resistance: f64,
    /// Ω/m
    pub waveguide_resistance_per_length: f64,
    /// Extra first-order lag on the wire heat paths (Hz); `None` = off.
    pub sio2_lag_hz: Option<f64>,
    pub surrogate: SurrogateSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSettings {
    pub samples: usize,
    pub band_min_hz: f64,
    pub band_max_hz: f64,
    pub heater_poles: usize,
    pub heater_pole_max_hz: f64,
    pub path_poles: usize,
    /// Relative floor that ends the fitted band of the strongly delayed
    /// paths (disturbance and RTD).
    pub path_floor: f64,
    pub path_max_error: f64,
    pub quad_rel_tol: f64,
}

impl Default for SurrogateSettings {
    fn default() -> Self {
        SurrogateSettings {
            samples: 200,
            band_min_hz: 0.1,
            band_max_hz: 1e6,
            heater_poles: 16,
            heater_pole_max_hz: 3e6,
            path_poles: 16,
            path_floor: 1e-2,
            path_max_error: 0.15,
            quad_rel_tol: 1e-8,
        }
    }
}

impl Default for PlantConfig {
    fn default() -> Self {
        PlantConfig {
            cavity: CavitySpec { length: 215e-6, aperture_radius: 100e-6, ..CavitySpec::default() },
            material: MaterialProps::sapphire(),
            probe_wavelength: 850e-9,
            probe_linewidth_factor: 10.0,
            heater_distance: 10e-6,
            disturbance_distance: 100e-6,
            rtd_heater_distance: 30e-6,
            rtd_disturbance_distance: 100e-6,
            disturbance_geometry: DisturbanceGeometry::Line,
            pzt_gain: 10e-9,
            pzt_resonance: 10e3,
            pzt_q: 10.0,
            fast_path_fraction: 1e-3,
            heater_resistance: 10.0,
            // 0.3 W/mm at 3 A
            waveguide_resistance_per_length: 300.0 / 9.0,
            sio2_lag_hz: None,
            surrogate: SurrogateSettings::default(),
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.material.validate()?;
        require_positive("probe wavelength", self.probe_wavelength)?;
        require_positive("probe linewidth factor", self.probe_linewidth_factor)?;
        require_positive("heater distance", self.heater_distance)?;
        require_positive("disturbance distance", self.disturbance_distance)?;
        require_positive("RTD heater distance", self.rtd_heater_distance)?;
        require_positive("RTD disturbance distance", self.rtd_disturbance_distance)?;
        require_finite("PZT gain", self.pzt_gain)?;
        require_positive("PZT resonance", self.pzt_resonance)?;
        require_positive("PZT Q", self.pzt_q)?;
        require_non_negative("fast path fraction", self.fast_path_fraction)?;
        if self.fast_path_fraction >= 1.0 {
            return Err(Error::domain("fast path fraction must be below 1"));
        }
        require_positive("heater resistance", self.heater_resistance)?;
        require_non_negative("waveguide resistance", self.waveguide_resistance_per_length)?;
        if let Some(f) = self.sio2_lag_hz {
            require_positive("SiO2 lag corner", f)?;
        }
        let s = &self.surrogate;
        require_positive("surrogate band", s.band_min_hz)?;
        if !(s.band_max_hz > s.band_min_hz) {
            return Err(Error::invalid("surrogate band is empty"));
        }
        if s.heater_poles == 0 || s.path_poles == 0 || s.samples < 4 * s.heater_poles.max(s.path_poles) {
            return Err(Error::invalid("surrogate needs at least one pole and 4 samples per pole"));
        }
        Ok(())
    }

    /// Resonance shift per metre of cavity length change, ν/L.
    pub fn hz_per_meter(&self) -> f64 {
        SPEED_OF_LIGHT / self.probe_wavelength / self.cavity.length
    }

    /// Probe linewidth (FWHM, Hz).
    pub fn linewidth(&self) -> Result<f64> {
        Ok(self.cavity.derive()?.linewidth_fwhm * self.probe_linewidth_factor)
    }

    fn quad(&self) -> LiftOptions {
        LiftOptions {
            quad: QuadOptions { rel_tol: self.surrogate.quad_rel_tol, ..QuadOptions::default() },
            dc_line_cutoff: None,
        }
    }

    /// DC heater lift per watt, from the point-source surface lift.
    pub fn heater_dc_gain(&self) -> Result<f64> {
        let src = HeatSource::point(1.0, 0.0);
        Ok(surface_lift_with(&src, self.heater_distance, 0.0, &self.material, self.quad())?.re)
    }

    pub fn sample_frequencies(&self) -> Vec<f64> {
        let s = &self.surrogate;
        let n = s.samples;
        (0..n)
            .map(|i| s.band_min_hz * (s.band_max_hz / s.band_min_hz).powf(i as f64 / (n - 1) as f64))
            .collect()
    }
}

/// Heater power to chip-mirror lift, m/W: K·((1 − ε)·G(ω) + ε), with G the
/// normalized point-source surface lift at the heater distance.
pub fn thermal_actuator_response(cfg: &PlantConfig, omega: f64) -> Result<Complex64> {
    let k = cfg.heater_dc_gain()?;
    thermal_actuator_response_with_gain(cfg, omega, k)
}

fn thermal_actuator_response_with_gain(cfg: &PlantConfig, omega: f64, k: f64) -> Result<Complex64> {
    let eps = cfg.fast_path_fraction;
    let src = HeatSource::point(1.0, 0.0);
    let lift = surface_lift_with(&src, cfg.heater_distance, omega, &cfg.material, cfg.quad())?;
    Ok(lift * (1.0 - eps) + k * eps)
}

/// Fitted surrogates of every thermal path plus fit diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct PlantModel {
    pub config: PlantConfig,
    /// Heater W → chip lift m.
    pub heater: TransferModel,
    /// Wire heat W/m → chip lift m.
    pub disturbance: TransferModel,
    /// Heater W → RTD K.
    pub rtd_heater: TransferModel,
    /// Wire heat W/m → RTD K.
    pub rtd_disturbance: TransferModel,
    pub reports: Vec<(String, FitReport)>,
    pub hz_per_meter: f64,
    pub linewidth: f64,
}

fn responses<F>(freqs: &[f64], f: F) -> Result<Vec<FrequencySample>>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    freqs
        .par_iter()
        .map(|&hz| {
            let omega = 2.0 * PI * hz;
            Ok(FrequencySample { omega, value: f(omega)? })
        })
        .collect()
}

fn fit_delayed_path(samples: &[FrequencySample], s: &SurrogateSettings) -> Result<(TransferModel, FitReport)> {
    let hmax = samples.iter().map(|x| x.value.norm()).fold(0.0, f64::max);
    let f_hi = samples
        .iter()
        .filter(|x| x.value.norm() >= s.path_floor * hmax)
        .map(|x| x.omega / (2.0 * PI))
        .fold(s.band_min_hz, f64::max);
    let opts = RationalFitOptions {
        n_poles: s.path_poles,
        pole_min_hz: Some(s.band_min_hz),
        pole_max_hz: Some((3.0 * f_hi).min(s.band_max_hz * 3.0)),
        direct_term: false,
        floor: s.path_floor,
        lawson_iterations: 40,
        max_mag_error: s.path_max_error,
        max_phase_error_deg: s.path_max_error.asin().to_degrees().max(5.0),
    };
    fit_rational_with(samples, &opts)
}

fn model_cache() -> &'static Mutex<HashMap<String, Arc<PlantModel>>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<PlantModel>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl PlantModel {
    /// Build (or fetch from the process-wide cache) the surrogate model.
    pub fn build(cfg: &PlantConfig) -> Result<Arc<PlantModel>> {
        cfg.validate()?;
        let key = serde_json::to_string(cfg).map_err(|e| Error::invalid(e.to_string()))?;
        if let Some(m) = model_cache().lock().expect("plant cache").get(&key) {
            return Ok(Arc::clone(m));
        }
        let model = Arc::new(Self::build_uncached(cfg)?);
        model_cache().lock().expect("plant cache").insert(key, Arc::clone(&model));
        Ok(model)
    }

    pub fn build_uncached(cfg: &PlantConfig) -> Result<PlantModel> {
        cfg.validate()?;
        let freqs = cfg.sample_frequencies();
        let s = cfg.surrogate;
        let mat = cfg.material;
        let k = cfg.heater_dc_gain()?;

        let heater_samples = responses(&freqs, |w| thermal_actuator_response_with_gain(cfg, w, k))?;
        let heater_opts = RationalFitOptions {
            n_poles: s.heater_poles,
            pole_min_hz: Some(s.band_min_hz),
            pole_max_hz: Some(s.heater_pole_max_hz),
            direct_term: true,
            floor: 0.0,
            lawson_iterations: 30,
            ..Default::default()
        };
        let (heater, heater_report) = fit_rational_with(&heater_samples, &heater_opts)?;
        let rh = cfg.rtd_heater_distance;
        let rtd_h_samples = responses(&freqs, |w| point_response(1.0, rh, w, &mat))?;
        let (rtd_heater, rtd_h_report) = fit_delayed_path(&rtd_h_samples, &s)?;

        let mut reports = vec![("heater".to_string(), heater_report), ("rtd_heater".to_string(), rtd_h_report)];
        let (mut disturbance, mut rtd_disturbance) = match cfg.disturbance_geometry {
            DisturbanceGeometry::MatchHeater => (heater.clone(), rtd_heater.clone()),
            DisturbanceGeometry::Line => {
                let d = cfg.disturbance_distance;
                let lift_opts = cfg.quad();
                let dist_samples = responses(&freqs, |w| {
                    surface_lift_with(&HeatSource::line(1.0, 0.0), d, w, &mat, lift_opts)
                })?;
                let (dist, dist_report) = fit_delayed_path(&dist_samples, &s)?;
                let rd = cfg.rtd_disturbance_distance;
                let rtd_d_samples = responses(&freqs, |w| line_response(1.0, rd, w, &mat))?;
                let (rtd_d, rtd_d_report) = fit_delayed_path(&rtd_d_samples, &s)?;
                reports.push(("disturbance".to_string(), dist_report));
                reports.push(("rtd_disturbance".to_string(), rtd_d_report));
                (dist, rtd_d)
            }
        };
        if let Some(f) = cfg.sio2_lag_hz {
            let wl = 2.0 * PI * f;
            disturbance = disturbance.with_lag(wl)?;
            rtd_disturbance = rtd_disturbance.with_lag(wl)?;
        }
        Ok(PlantModel {
            config: cfg.clone(),
            heater,
            disturbance,
            rtd_heater,
            rtd_disturbance,
            reports,
            hz_per_meter: cfg.hz_per_meter(),
            linewidth: cfg.linewidth()?,
        })
    }

    /// Disturbance heat per unit length for a magnet current.
    pub fn disturbance_heat(&self, current: f64) -> f64 {
        current * current * self.config.waveguide_resistance_per_length
    }

    /// PZT voltage to displacement, continuous time.
    pub fn pzt_response(&self, omega: f64) -> Complex64 {
        let w0 = 2.0 * PI * self.config.pzt_resonance;
        let s = Complex64::new(0.0, omega);
        self.config.pzt_gain * w0 * w0 / (s * s + s * w0 / self.config.pzt_q + w0 * w0)
    }

    pub fn discretize(self: &Arc<Self>, dt: f64) -> Result<DiscretePlant> {
        require_positive("time step", dt)?;
        let w0 = 2.0 * PI * self.config.pzt_resonance;
        let q = self.config.pzt_q;
        // Augmented [A B; 0 0]·dt, exponentiated for the exact ZOH update.
        let m = Matrix3::new(0.0, dt, 0.0, -w0 * w0 * dt, -w0 / q * dt, w0 * w0 * self.config.pzt_gain * dt, 0.0, 0.0, 0.0);
        let e = m.exp();
        Ok(DiscretePlant {
            model: Arc::clone(self),
            dt,
            heater: ModalPath::new(&self.heater, dt),
            disturbance: ModalPath::new(&self.disturbance, dt),
            rtd_heater: ModalPath::new(&self.rtd_heater, dt),
            rtd_disturbance: ModalPath::new(&self.rtd_disturbance, dt),
            pzt_a: [[e[(0, 0)], e[(0, 1)]], [e[(1, 0)], e[(1, 1)]]],
            pzt_b: [e[(0, 2)], e[(1, 2)]],
        })
    }

    /// Single step with on-the-fly discretization. Convenient but slow;
    /// simulations should hold a [`DiscretePlant`].
    pub fn step(self: &Arc<Self>, state: &PlantState, inputs: PlantInputs, dt: f64) -> Result<(PlantState, f64)> {
        let d = self.discretize(dt)?;
        let mut next = state.clone();
        let out = d.step(&mut next, inputs);
        Ok((next, out.resonance_offset))
    }

    /// Euclidean norm of the thermal modes and the PZT energy coordinates
    /// (x, v/ω0). Non-increasing under zero input.
    pub fn state_norm(&self, s: &PlantState) -> f64 {
        let w0 = 2.0 * PI * self.config.pzt_resonance;
        let pzt = s.pzt[0].powi(2) + (s.pzt[1] / w0).powi(2);
        s.heater
            .iter()
            .chain(&s.disturbance)
            .chain(&s.rtd_heater)
            .chain(&s.rtd_disturbance)
            .map(|x| x * x)
            .sum::<f64>()
            .add(pzt)
            .sqrt()
    }

    pub fn zero_state(&self) -> PlantState {
        PlantState {
            heater: vec![0.0; self.heater.poles.len()],
            disturbance: vec![0.0; self.disturbance.poles.len()],
            rtd_heater: vec![0.0; self.rtd_heater.poles.len()],
            rtd_disturbance: vec![0.0; self.rtd_disturbance.poles.len()],
            pzt: [0.0, 0.0],
            held_heater_power: 0.0,
            held_disturbance_heat: 0.0,
        }
    }
}

/// Exact ZOH discretization of Σ r/(s − p) + d.
#[derive(Debug, Clone)]
pub struct ModalPath {
    pub decay: Vec<f64>,
    pub gain: Vec<f64>,
    pub direct: f64,
}

impl ModalPath {
    pub fn new(m: &TransferModel, dt: f64) -> Self {
        let decay = m.poles.iter().map(|&p| (p * dt).exp()).collect();
        let gain = m.poles.iter().zip(&m.residues).map(|(&p, &r)| (p * dt).exp_m1() / p * r).collect();
        ModalPath { decay, gain, direct: m.direct_term }
    }

    #[inline]
    pub fn advance(&self, x: &mut [f64], u: f64) {
        for ((xi, a), b) in x.iter_mut().zip(&self.decay).zip(&self.gain) {
            *xi = a * *xi + b * u;
        }
    }

    #[inline]
    pub fn output(&self, x: &[f64], u: f64) -> f64 {
        x.iter().sum::<f64>() + self.direct * u
    }

    /// Discrete transfer from the input held over a step to the output
    /// at the end of it, as a function of z.
    pub fn response_z(&self, z: Complex64) -> Complex64 {
        let modal: Complex64 = self.decay.iter().zip(&self.gain).map(|(&a, &b)| b / (z - a)).sum();
        modal + self.direct / z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub heater: Vec<f64>,
    pub disturbance: Vec<f64>,
    pub rtd_heater: Vec<f64>,
    pub rtd_disturbance: Vec<f64>,
    /// PZT position (m) and velocity (m/s).
    pub pzt: [f64; 2],
    /// Inputs applied over the last step, for the direct terms.
    pub held_heater_power: f64,
    pub held_disturbance_heat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantInputs {
    pub pzt_volts: f64,
    /// Heater power deviation from its bias, W.
    pub heater_power: f64,
    pub magnet_current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantOutputs {
    pub resonance_offset: f64,
    pub chip_lift: f64,
    pub pzt_displacement: f64,
    pub rtd_temperature: f64,
}

#[derive(Debug, Clone)]
pub struct DiscretePlant {
    pub model: Arc<PlantModel>,
    pub dt: f64,
    pub heater: ModalPath,
    pub disturbance: ModalPath,
    pub rtd_heater: ModalPath,
    pub rtd_disturbance: ModalPath,
    pub pzt_a: [[f64; 2]; 2],
    pub pzt_b: [f64; 2],
}

impl DiscretePlant {
    /// Outputs for the current state (inputs of the previous step feed the
    /// direct terms).
    pub fn outputs(&self, s: &PlantState) -> PlantOutputs {
        let lift = self.heater.output(&s.heater, s.held_heater_power)
            + self.disturbance.output(&s.disturbance, s.held_disturbance_heat);
        let rtd = self.rtd_heater.output(&s.rtd_heater, s.held_heater_power)
            + self.rtd_disturbance.output(&s.rtd_disturbance, s.held_disturbance_heat);
        PlantOutputs {
            resonance_offset: self.model.hz_per_meter * (lift - s.pzt[0]),
            chip_lift: lift,
            pzt_displacement: s.pzt[0],
            rtd_temperature: rtd,
        }
    }

    /// Hold `inputs` over one step and return the outputs at its end.
    pub fn step(&self, s: &mut PlantState, inputs: PlantInputs) -> PlantOutputs {
        let heat = self.model.disturbance_heat(inputs.magnet_current);
        self.heater.advance(&mut s.heater, inputs.heater_power);
        self.rtd_heater.advance(&mut s.rtd_heater, inputs.heater_power);
        self.disturbance.advance(&mut s.disturbance, heat);
        self.rtd_disturbance.advance(&mut s.rtd_disturbance, heat);
        let [x, v] = s.pzt;
        s.pzt = [
            self.pzt_a[0][0] * x + self.pzt_a[0][1] * v + self.pzt_b[0] * inputs.pzt_volts,
            self.pzt_a[1][0] * x + self.pzt_a[1][1] * v + self.pzt_b[1] * inputs.pzt_volts,
        ];
        s.held_heater_power = inputs.heater_power;
        s.held_disturbance_heat = heat;
        self.outputs(s)
    }

    /// Discrete PZT transfer (V → m) at z.
    pub fn pzt_response_z(&self, z: Complex64) -> Complex64 {
        // c (zI − A)⁻¹ B with c = [1, 0]
        let a = &self.pzt_a;
        let det = (z - a[0][0]) * (z - a[1][1]) - a[0][1] * a[1][0];
        ((z - a[1][1]) * self.pzt_b[0] + a[0][1] * self.pzt_b[1]) / det
    }
}

/// Lorentzian transmission 1/(1 + (2Δ/Γ)²).
pub fn transmission(offset: f64, linewidth_fwhm: f64) -> Result<f64> {
    require_positive("linewidth", linewidth_fwhm)?;
    let x = 2.0 * offset / linewidth_fwhm;
    Ok(1.0 / (1.0 + x * x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmission_values() {
        assert_eq!(transmission(0.0, 35e6).unwrap(), 1.0);
        assert!((transmission(17.5e6, 35e6).unwrap() - 0.5).abs() < 1e-15);
        assert!((transmission(35e6, 35e6).unwrap() - 0.2).abs() < 1e-15);
        assert!(transmission(1.0, 0.0).is_err());
    }

    #[test]
    fn lag_partial_fractions() {
        let m = TransferModel { poles: vec![-10.0, -300.0], residues: vec![5.0, -2.0], direct_term: 0.3 };
        let wl = 77.0;
        let lagged = m.with_lag(wl).unwrap();
        for w in [0.0, 1.0, 50.0, 1e4] {
            let s = Complex64::new(0.0, w);
            let expect = m.eval(w) * wl / (s + wl);
            assert!((lagged.eval(w) - expect).norm() < 1e-12 * expect.norm().max(1e-12));
        }
    }

    #[test]
    fn single_pole_target() {
        let w0 = 2.0 * PI * 30.0;
        // 3 Hz – 3 kHz puts one of four log-spaced poles on ω0
        let samples: Vec<_> = (0..80)
            .map(|i| {
                let omega = 2.0 * PI * 3.0 * 1e3f64.powf(i as f64 / 79.0);
                FrequencySample { omega, value: 1.0 / Complex64::new(1.0, omega / w0) }
            })
            .collect();
        let m = fit_rational(&samples, 4).unwrap();
        let r = fit_errors(&m, &samples, 0.0);
        assert!(r.max_mag_error < 0.005, "{r:?}");
    }

    #[test]
    fn zero_target_gives_zero_model() {
        let samples: Vec<_> = (1..=40)
            .map(|i| FrequencySample { omega: i as f64, value: Complex64::new(0.0, 0.0) })
            .collect();
        let m = fit_rational(&samples, 4).unwrap();
        assert!(m.residues.iter().all(|&r| r == 0.0));
        assert_eq!(m.direct_term, 0.0);
    }

    #[test]
    fn too_few_samples() {
        let samples: Vec<_> = (1..=10)
            .map(|i| FrequencySample { omega: i as f64, value: Complex64::new(1.0, 0.0) })
            .collect();
        assert!(matches!(fit_rational(&samples, 4), Err(Error::InsufficientData(_))));
    }
}
