//! Gaussian-mode and Fabry-Perot figures of merit for a plano-concave
//! cavity whose planar mirror is a finite on-chip pad, plus a fitter that
//! extracts the effective pad radius from finesse-versus-length data.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{require_non_negative, require_positive, Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative finesse uncertainty assumed when a sample carries none.
pub const DEFAULT_RELATIVE_SIGMA: f64 = 0.05;

/// Plano-concave cavity geometry and per-reflection losses (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavitySpec {
    pub length: f64,
    pub curved_mirror_roc: f64,
    pub wavelength: f64,
    pub aperture_radius: f64,
    pub loss_chip: f64,
    pub loss_curved: f64,
}

impl Default for CavitySpec {
    fn default() -> Self {
        CavitySpec {
            length: 25e-6,
            curved_mirror_roc: 5e-2,
            wavelength: 780e-9,
            aperture_radius: 47e-6,
            loss_chip: 20e-6,
            loss_curved: 11.4e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeDerived {
    pub waist: f64,
    pub diffraction_loss: f64,
    pub round_trip_loss: f64,
    pub finesse: f64,
    pub fsr: f64,
    pub linewidth_fwhm: f64,
    pub cooperativity: f64,
    pub displacement_per_linewidth: f64,
}

impl CavitySpec {
    pub fn validate(&self) -> Result<()> {
        require_positive("wavelength", self.wavelength)?;
        if !(self.aperture_radius > 0.0) || self.aperture_radius.is_nan() {
            return Err(Error::domain(format!("aperture radius must be positive, got {}", self.aperture_radius)));
        }
        for (name, v) in [("chip mirror loss", self.loss_chip), ("curved mirror loss", self.loss_curved)] {
            require_non_negative(name, v)?;
            if v >= 1.0 {
                return Err(Error::domain(format!("{name} must be below 1, got {v}")));
            }
        }
        check_resonator(self.length, self.curved_mirror_roc)
    }

    pub fn derive(&self) -> Result<ModeDerived> {
        self.validate()?;
        let waist = mode_waist(self.length, self.curved_mirror_roc, self.wavelength)?;
        let diffraction = diffraction_loss(self.aperture_radius, waist)?;
        let finesse = finesse_from_losses(self.loss_chip, self.loss_curved, self.aperture_radius, waist)?;
        Ok(ModeDerived {
            waist,
            diffraction_loss: diffraction,
            round_trip_loss: 2.0 * PI / finesse,
            finesse,
            fsr: free_spectral_range(self.length)?,
            linewidth_fwhm: cavity_linewidth(self.length, finesse)?,
            cooperativity: cooperativity(self.length, self.curved_mirror_roc, self.wavelength, finesse)?,
            displacement_per_linewidth: displacement_per_linewidth(self.wavelength, finesse)?,
        })
    }
}

fn check_resonator(length: f64, roc: f64) -> Result<()> {
    require_positive("radius of curvature", roc)?;
    if !(length > 0.0 && length < roc) {
        return Err(Error::domain(format!(
            "unstable resonator: need 0 < L < R, got L = {length:e} m, R = {roc:e} m"
        )));
    }
    Ok(())
}

/// Waist on the planar mirror: w0² = (λ/π)·√(L(R−L)).
pub fn mode_waist(length: f64, roc: f64, wavelength: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    check_resonator(length, roc)?;
    Ok((wavelength / PI * (length * (roc - length)).sqrt()).sqrt())
}

/// Fraction of Gaussian power outside radius `a`: e^(−2a²/w0²).
/// An infinite aperture gives zero loss.
pub fn diffraction_loss(aperture_radius: f64, waist: f64) -> Result<f64> {
    if !(aperture_radius > 0.0) {
        return Err(Error::domain(format!("aperture radius must be positive, got {aperture_radius}")));
    }
    require_positive("waist", waist)?;
    let x = aperture_radius / waist;
    Ok((-2.0 * x * x).exp())
}

/// δc = e^(−2a²/w0²) + δ1 + δ2.
pub fn round_trip_loss(loss_chip: f64, loss_curved: f64, aperture_radius: f64, waist: f64) -> Result<f64> {
    require_non_negative("chip mirror loss", loss_chip)?;
    require_non_negative("curved mirror loss", loss_curved)?;
    Ok(diffraction_loss(aperture_radius, waist)? + loss_chip + loss_curved)
}

/// F = 2π/δc.
pub fn finesse_from_losses(loss_chip: f64, loss_curved: f64, aperture_radius: f64, waist: f64) -> Result<f64> {
    let total = round_trip_loss(loss_chip, loss_curved, aperture_radius, waist)?;
    if total >= 1.0 {
        return Err(Error::domain(format!("total round-trip loss {total} must be below 1")));
    }
    if total <= 0.0 {
        return Err(Error::domain("zero round-trip loss gives unbounded finesse"));
    }
    Ok(2.0 * PI / total)
}

/// c/2L.
pub fn free_spectral_range(length: f64) -> Result<f64> {
    require_positive("length", length)?;
    Ok(SPEED_OF_LIGHT / (2.0 * length))
}

/// FWHM linewidth c/(2LF) in Hz.
pub fn cavity_linewidth(length: f64, finesse: f64) -> Result<f64> {
    require_positive("finesse", finesse)?;
    Ok(free_spectral_range(length)? / finesse)
}

/// Single-atom cooperativity C = 3λ²F/(π³w0²) for a standing-wave mode of
/// volume πw0²L/4.
pub fn cooperativity(length: f64, roc: f64, wavelength: f64, finesse: f64) -> Result<f64> {
    require_positive("finesse", finesse)?;
    let w0 = mode_waist(length, roc, wavelength)?;
    Ok(3.0 * wavelength * wavelength * finesse / (PI.powi(3) * w0 * w0))
}

/// Mirror displacement that shifts the resonance by one linewidth, λ/2F.
pub fn displacement_per_linewidth(wavelength: f64, finesse: f64) -> Result<f64> {
    require_positive("wavelength", wavelength)?;
    if !(finesse > 0.0) {
        return Err(Error::domain(format!("finesse must be positive, got {finesse}")));
    }
    Ok(wavelength / (2.0 * finesse))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    /// Atomic coherence decay rate Γ (rad/s), half the population decay rate.
    pub coherence_decay: f64,
}

impl AtomSpec {
    /// Rb D2 line: population decay 2π·6.07 MHz.
    pub fn rubidium_d2() -> Self {
        AtomSpec { coherence_decay: PI * 6.0666e6 }
    }
}

/// Coupling rates (all rad/s) of an atom at an antinode of the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingRates {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl CouplingRates {
    pub fn cooperativity(&self) -> f64 {
        self.g * self.g / (2.0 * self.kappa * self.gamma)
    }
}

/// g from g² = 3λ²cΓ/(4πV) with V = πw0²L/4, and κ as the cavity field
/// decay rate (half the FWHM in rad/s).
pub fn coupling_rates(length: f64, roc: f64, wavelength: f64, finesse: f64, atom: AtomSpec) -> Result<CouplingRates> {
    require_positive("coherence decay", atom.coherence_decay)?;
    let w0 = mode_waist(length, roc, wavelength)?;
    let volume = PI * w0 * w0 * length / 4.0;
    let g2 = 3.0 * wavelength * wavelength * SPEED_OF_LIGHT * atom.coherence_decay / (4.0 * PI * volume);
    let kappa = PI * cavity_linewidth(length, finesse)?;
    Ok(CouplingRates { g: g2.sqrt(), kappa, gamma: atom.coherence_decay })
}

/// One finesse measurement at a given mirror spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinesseSample {
    pub length: f64,
    pub finesse: f64,
    pub finesse_uncertainty: Option<f64>,
}

impl FinesseSample {
    pub fn new(length: f64, finesse: f64) -> Self {
        FinesseSample { length, finesse, finesse_uncertainty: None }
    }

    fn sigma(&self) -> f64 {
        self.finesse_uncertainty.unwrap_or(DEFAULT_RELATIVE_SIGMA * self.finesse)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusFit {
    pub aperture_radius: f64,
    pub fixed_loss: f64,
    /// (δc_model − 2π/F)/σ_δ per sample, in input order.
    pub residuals: Vec<f64>,
    pub chi_squared: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when at least one sample used the default 5% uncertainty.
    pub default_uncertainty_used: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iterations: 200, tolerance: 1e-12 }
    }
}

struct Prepared {
    w2: Vec<f64>,
    delta: Vec<f64>,
    sigma: Vec<f64>,
}

impl Prepared {
    fn residuals(&self, ln_a: f64, ln_d: f64) -> Vec<f64> {
        let a2 = (2.0 * ln_a).exp();
        let d = ln_d.exp();
        (0..self.w2.len())
            .map(|i| ((-2.0 * a2 / self.w2[i]).exp() + d - self.delta[i]) / self.sigma[i])
            .collect()
    }

    fn jacobian(&self, ln_a: f64, ln_d: f64) -> Vec<[f64; 2]> {
        let a2 = (2.0 * ln_a).exp();
        let d = ln_d.exp();
        (0..self.w2.len())
            .map(|i| {
                let e = (-2.0 * a2 / self.w2[i]).exp();
                [e * (-4.0 * a2 / self.w2[i]) / self.sigma[i], d / self.sigma[i]]
            })
            .collect()
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Weighted least-squares fit of (a, δ_fixed) to finesse data using the
/// loss model δc(L) = e^(−2a²/w0(L)²) + δ_fixed on δc = 2π/F.
pub fn fit_mirror_radius(samples: &[FinesseSample], roc: f64, wavelength: f64) -> Result<RadiusFit> {
    fit_mirror_radius_with(samples, roc, wavelength, FitOptions::default())
}

pub fn fit_mirror_radius_with(
    samples: &[FinesseSample],
    roc: f64,
    wavelength: f64,
    opts: FitOptions,
) -> Result<RadiusFit> {
    if samples.len() < 3 {
        return Err(Error::InsufficientData(format!("need at least 3 finesse samples, got {}", samples.len())));
    }
    let mut w2 = Vec::with_capacity(samples.len());
    let mut delta = Vec::with_capacity(samples.len());
    let mut sigma = Vec::with_capacity(samples.len());
    for s in samples {
        require_positive("finesse", s.finesse)?;
        let w0 = mode_waist(s.length, roc, wavelength)?;
        let sf = s.sigma();
        require_positive("finesse uncertainty", sf)?;
        w2.push(w0 * w0);
        delta.push(2.0 * PI / s.finesse);
        sigma.push(2.0 * PI * sf / (s.finesse * s.finesse));
    }
    let lmin = samples.iter().map(|s| s.length).fold(f64::INFINITY, f64::min);
    let lmax = samples.iter().map(|s| s.length).fold(0.0, f64::max);
    if lmax < 2.0 * lmin {
        return Err(Error::InsufficientData(format!(
            "sample lengths must span at least a factor 2 (got {lmin:e} to {lmax:e} m)"
        )));
    }
    let default_uncertainty_used = samples.iter().any(|s| s.finesse_uncertainty.is_none());
    let data = Prepared { w2, delta, sigma };

    // Start: δ_fixed from the best finesse, a as the largest radius implied
    // by any sample's excess loss.
    let d0 = data.delta.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut a0 = 0.0f64;
    let mut wmax = 0.0f64;
    for i in 0..data.delta.len() {
        wmax = wmax.max(data.w2[i].sqrt());
        let excess = data.delta[i] - d0;
        if excess > 0.0 && excess < 1.0 {
            a0 = a0.max((data.w2[i] * (1.0 / excess).ln() / 2.0).sqrt());
        }
    }
    if a0 == 0.0 {
        a0 = 3.0 * wmax;
    }
    let mut p = [a0.ln(), d0.ln()];
    let mut r = data.residuals(p[0], p[1]);
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        iterations += 1;
        let j = data.jacobian(p[0], p[1]);
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (row, ri) in j.iter().zip(&r) {
            for a in 0..2 {
                jtr[a] += row[a] * ri;
                for b in 0..2 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..60 {
            let m00 = jtj[0][0] * (1.0 + lambda);
            let m11 = jtj[1][1] * (1.0 + lambda);
            let m01 = jtj[0][1];
            let det = m00 * m11 - m01 * m01;
            if !(det.is_finite() && det > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let step = [-(m11 * jtr[0] - m01 * jtr[1]) / det, -(m00 * jtr[1] - m01 * jtr[0]) / det];
            let trial = [p[0] + step[0], p[1] + step[1]];
            let rt = data.residuals(trial[0], trial[1]);
            let ct = sum_sq(&rt);
            if ct.is_finite() && ct <= cost {
                let small_step = step[0].abs().max(step[1].abs()) < opts.tolerance;
                let small_gain = cost - ct <= opts.tolerance * cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            // No downhill step at any damping: we sit at a minimum up to
            // rounding.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { what: "mirror radius fit".into(), iterations });
    }
    Ok(RadiusFit {
        aperture_radius: p[0].exp(),
        fixed_loss: p[1].exp(),
        residuals: r,
        chi_squared: cost,
        iterations,
        converged,
        default_uncertainty_used,
    })
}

/// Forward model of the fit: finesse at `length` for pad radius `a` and
/// fixed loss.
pub fn model_finesse(length: f64, roc: f64, wavelength: f64, aperture_radius: f64, fixed_loss: f64) -> Result<f64> {
    let w0 = mode_waist(length, roc, wavelength)?;
    finesse_from_losses(fixed_loss, 0.0, aperture_radius, w0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn waist_examples() {
        assert!((mode_waist(25e-6, 0.05, 780e-9).unwrap() - 16.66e-6).abs() < 0.01e-6);
        assert!((mode_waist(100e-6, 0.05, 780e-9).unwrap() - 23.55e-6).abs() < 0.01e-6);
        assert!(mode_waist(0.05, 0.05, 780e-9).is_err());
        assert!(mode_waist(0.0, 0.05, 780e-9).is_err());
    }

    #[test]
    fn unit_ratio_diffraction() {
        assert!((diffraction_loss(3e-6, 3e-6).unwrap() - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(diffraction_loss(f64::INFINITY, 3e-6).unwrap(), 0.0);
    }

    #[test]
    fn zero_loss_rejected() {
        assert!(finesse_from_losses(0.0, 0.0, f64::INFINITY, 20e-6).is_err());
        assert!(finesse_from_losses(0.6, 0.5, f64::INFINITY, 20e-6).is_err());
    }

    #[test]
    fn rates_reproduce_closed_form() {
        let atom = AtomSpec::rubidium_d2();
        let r = coupling_rates(25e-6, 0.05, 780e-9, 2e5, atom).unwrap();
        let c = cooperativity(25e-6, 0.05, 780e-9, 2e5).unwrap();
        assert!((r.cooperativity() - c).abs() < 1e-12 * c);
    }

    #[test]
    fn too_few_samples() {
        let s = [FinesseSample::new(25e-6, 1e5), FinesseSample::new(100e-6, 1e4)];
        assert!(matches!(fit_mirror_radius(&s, 0.05, 780e-9), Err(Error::InsufficientData(_))));
    }
}
