//! AC/DC temperature response of a half-space substrate to point and line
//! heat sources on its insulated surface, and the resulting lift of a mirror
//! surface through thermal expansion of the material underneath.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{require_non_negative, require_positive, Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::specfun::hankel2_0;

/// Room-temperature copper resistivity (Ω·m).
pub const COPPER_RESISTIVITY: f64 = 1.7e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProps {
    /// k, W/(m·K)
    pub conductivity: f64,
    /// α, m²/s
    pub diffusivity: f64,
    /// β, 1/K
    pub expansion_coeff: f64,
    /// D, m
    pub thickness: f64,
}

impl MaterialProps {
    pub fn sapphire() -> Self {
        MaterialProps { conductivity: 40.0, diffusivity: 1.3e-5, expansion_coeff: 5.5e-6, thickness: 4e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("conductivity", self.conductivity)?;
        require_positive("diffusivity", self.diffusivity)?;
        require_non_negative("expansion coefficient", self.expansion_coeff)?;
        require_positive("thickness", self.thickness)
    }
}

impl Default for MaterialProps {
    fn default() -> Self {
        Self::sapphire()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Point,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatSource {
    pub kind: SourceKind,
    /// P0 in W for a point source, A0 in W/m for a line source.
    pub amplitude: f64,
    /// Distance from source to observation point, m.
    pub distance: f64,
    /// Ω/m, for sources specified by current.
    pub resistance_per_length: Option<f64>,
}

impl HeatSource {
    pub fn point(power: f64, distance: f64) -> Self {
        HeatSource { kind: SourceKind::Point, amplitude: power, distance, resistance_per_length: None }
    }

    pub fn line(power_per_length: f64, distance: f64) -> Self {
        HeatSource { kind: SourceKind::Line, amplitude: power_per_length, distance, resistance_per_length: None }
    }

    /// Line source dissipating I²·R' in a wire of resistance R' per length.
    pub fn line_from_current(current: f64, resistance_per_length: f64, distance: f64) -> Self {
        HeatSource {
            kind: SourceKind::Line,
            amplitude: current * current * resistance_per_length,
            distance,
            resistance_per_length: Some(resistance_per_length),
        }
    }

    /// Temperature at `self.distance` for angular frequency ω.
    pub fn response(&self, omega: f64, mat: &MaterialProps) -> Result<Complex64> {
        match self.kind {
            SourceKind::Point => point_response(self.amplitude, self.distance, omega, mat),
            SourceKind::Line => line_response(self.amplitude, self.distance, omega, mat),
        }
    }
}

/// Complex temperature amplitude at one angular frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalResponse {
    pub omega: f64,
    pub temperature: Complex64,
}

/// Power per length I²ρe/A dissipated by a wire of cross-section `area`.
pub fn line_power_from_current(current: f64, area: f64, resistivity: f64) -> Result<f64> {
    require_positive("wire cross-section", area)?;
    require_non_negative("resistivity", resistivity)?;
    Ok(current * current * resistivity / area)
}

fn check_omega(omega: f64) -> Result<()> {
    if omega.is_finite() && omega >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("angular frequency must be finite and non-negative, got {omega}")))
    }
}

/// Point source P0 on the surface: T = P0/(2πk)·e^(−√(iωr²/α))/r.
pub fn point_response(power: f64, r: f64, omega: f64, mat: &MaterialProps) -> Result<Complex64> {
    require_positive("distance", r)?;
    check_omega(omega)?;
    mat.validate()?;
    Ok(point_kernel(power, r, omega, mat))
}

fn point_kernel(power: f64, r: f64, omega: f64, mat: &MaterialProps) -> Complex64 {
    // √(iωr²/α) = (1 + i)·√(ωr²/2α)
    let s = (omega * r * r / (2.0 * mat.diffusivity)).sqrt();
    power / (2.0 * PI * mat.conductivity * r) * Complex64::new(-s, -s).exp()
}

/// Line source A0 along the surface: T = (−iA0/2k)·H0⁽²⁾(e^(−iπ/4)√(ωρ²/α)).
pub fn line_response(power_per_length: f64, rho: f64, omega: f64, mat: &MaterialProps) -> Result<Complex64> {
    require_positive("distance", rho)?;
    check_omega(omega)?;
    if omega == 0.0 {
        return Err(Error::domain("line source response diverges at DC; use dc_line_estimate"));
    }
    mat.validate()?;
    line_kernel(power_per_length, rho, omega, mat)
}

fn line_kernel(power_per_length: f64, rho: f64, omega: f64, mat: &MaterialProps) -> Result<Complex64> {
    let t = (omega * rho * rho / mat.diffusivity).sqrt();
    // Beyond this the response is below e^(−500) of its scale.
    if t > 700.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let h = hankel2_0(Complex64::from_polar(t, -FRAC_PI_4))?;
    Ok(Complex64::new(0.0, -power_per_length / (2.0 * mat.conductivity)) * h)
}

/// Steady-state line source with an isothermal boundary at `cutoff`:
/// T = (A0/πk)·ln(cutoff/ρ).
pub fn dc_line_estimate(power_per_length: f64, rho: f64, cutoff: f64, mat: &MaterialProps) -> Result<f64> {
    require_positive("distance", rho)?;
    require_positive("cutoff", cutoff)?;
    mat.validate()?;
    if rho >= cutoff {
        return Err(Error::domain(format!("distance {rho:e} m must lie inside the cutoff {cutoff:e} m")));
    }
    Ok(power_per_length / (PI * mat.conductivity) * (cutoff / rho).ln())
}

/// Diffusion cutoff ω_c = α/r² and timescale τ = r²/α.
pub fn thermal_cutoff(r: f64, mat: &MaterialProps) -> Result<(f64, f64)> {
    require_positive("distance", r)?;
    mat.validate()?;
    let omega_c = mat.diffusivity / (r * r);
    Ok((omega_c, 1.0 / omega_c))
}

/// Characteristic open-loop slew requirement lift/τ.
pub fn slew_estimate(lift_dc: f64, tau: f64) -> Result<f64> {
    require_non_negative("lift", lift_dc)?;
    require_positive("timescale", tau)?;
    Ok(lift_dc / tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub struct LiftOptions {
    pub quad: QuadOptions,
    /// Isothermal radius of the DC line kernel; `None` means the substrate
    /// thickness.
    pub dc_line_cutoff: Option<f64>,
}


/// Surface lift u = β∫₀^D T(√(o² + z²), ω) dz above a point at lateral
/// offset `o` from the source. The source's own `distance` is not used.
pub fn surface_lift(source: &HeatSource, lateral_offset: f64, omega: f64, mat: &MaterialProps) -> Result<Complex64> {
    surface_lift_with(source, lateral_offset, omega, mat, LiftOptions::default())
}

pub fn surface_lift_with(
    source: &HeatSource,
    lateral_offset: f64,
    omega: f64,
    mat: &MaterialProps,
    opts: LiftOptions,
) -> Result<Complex64> {
    require_positive("lateral offset", lateral_offset)?;
    check_omega(omega)?;
    mat.validate()?;
    if mat.expansion_coeff == 0.0 || source.amplitude == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let o = lateral_offset;
    let depth = mat.thickness;
    let mut breaks = vec![0.0];
    let mut x = o;
    while x < depth {
        breaks.push(x);
        x *= 4.0;
    }
    if omega > 0.0 {
        // Diffusion length: the integrand decays past a few of these.
        let delta = (2.0 * mat.diffusivity / omega).sqrt();
        for m in [1.0, 4.0, 16.0, 64.0] {
            let z = m * delta;
            if z > 0.0 && z < depth {
                breaks.push(z);
            }
        }
    }
    breaks.push(depth);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * depth);

    let failure = std::cell::Cell::new(None);
    let value = match source.kind {
        SourceKind::Point => integrate_with_breaks(
            |z| point_kernel(source.amplitude, o.hypot(z), omega, mat),
            &breaks,
            opts.quad,
        )?,
        SourceKind::Line if omega == 0.0 => {
            let cutoff = opts.dc_line_cutoff.unwrap_or(depth);
            require_positive("DC cutoff", cutoff)?;
            // kink where the clamped kernel reaches zero
            if cutoff > o {
                let zk = (cutoff * cutoff - o * o).sqrt();
                if zk < depth {
                    let at = breaks.partition_point(|&b| b < zk);
                    if (breaks[at] - zk).abs() > 1e-12 * depth && (breaks[at - 1] - zk).abs() > 1e-12 * depth {
                        breaks.insert(at, zk);
                    }
                }
            }
            let scale = source.amplitude / (PI * mat.conductivity);
            integrate_with_breaks(
                |z| Complex64::new(scale * (cutoff / o.hypot(z)).ln().max(0.0), 0.0),
                &breaks,
                opts.quad,
            )?
        }
        SourceKind::Line => integrate_with_breaks(
            |z| match line_kernel(source.amplitude, o.hypot(z), omega, mat) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    Complex64::new(f64::NAN, f64::NAN)
                }
            },
            &breaks,
            opts.quad,
        )
        .map_err(|e| failure.take().unwrap_or(e))?,
    };
    Ok(mat.expansion_coeff * value.value)
}

/// Temperature response of `source` over a list of frequencies in Hz.
pub fn bode_sweep(source: &HeatSource, freqs_hz: &[f64], mat: &MaterialProps) -> Result<Vec<ThermalResponse>> {
    freqs_hz
        .iter()
        .map(|&f| {
            let omega = 2.0 * PI * f;
            Ok(ThermalResponse { omega, temperature: source.response(omega, mat)? })
        })
        .collect()
}
