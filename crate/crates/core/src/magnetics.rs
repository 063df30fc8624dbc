//! Fields of infinite straight chip wires running along y.
//!
//! Positions live in the transverse (x, z) plane, z being height above the
//! chip surface.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{require_finite, require_non_negative, require_positive, Error, Result};

pub const MU0: f64 = 4.0e-7 * PI;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// 1 T = 1e4 G; 1 T/m = 100 G/cm.
pub const GAUSS_PER_TESLA: f64 = 1e4;
pub const GAUSS_PER_CM_PER_TESLA_PER_M: f64 = 100.0;

/// |B| of an infinite wire, μ0·I/(2πr).
pub fn wire_field(current: f64, r: f64) -> Result<f64> {
    require_finite("current", current)?;
    require_positive("distance", r)?;
    Ok(MU0 * current / (2.0 * PI * r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wire {
    pub x: f64,
    pub z: f64,
    /// Positive current flows along +y.
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSet {
    pub wires: Vec<Wire>,
    /// (Bx, By, Bz) in tesla.
    #[serde(default)]
    pub bias_field: [f64; 3],
}

impl WireSet {
    /// Two co-propagating 3 A wires at x = ±75 μm.
    pub fn default_waveguide() -> Self {
        WireSet {
            wires: vec![Wire { x: -75e-6, z: 0.0, current: 3.0 }, Wire { x: 75e-6, z: 0.0, current: 3.0 }],
            bias_field: [0.0; 3],
        }
    }

    pub fn single(current: f64) -> Self {
        WireSet { wires: vec![Wire { x: 0.0, z: 0.0, current }], bias_field: [0.0; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        for w in &self.wires {
            require_finite("wire x", w.x)?;
            require_finite("wire z", w.z)?;
            require_finite("wire current", w.current)?;
        }
        for b in self.bias_field {
            require_finite("bias field", b)?;
        }
        Ok(())
    }
}

/// Height of the default evaluation point above the wire plane.
pub const DEFAULT_EVAL_HEIGHT: f64 = 50e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldGradient {
    /// (Bx, By, Bz), T
    pub field: [f64; 3],
    /// ∂(Bx, Bz)/∂(x, z), T/m; row = component, column = coordinate.
    pub gradient: [[f64; 2]; 2],
}

impl FieldGradient {
    pub fn magnitude(&self) -> f64 {
        let [x, y, z] = self.field;
        (x * x + y * y + z * z).sqrt()
    }

    /// Transverse gradient strength. A 2D source-free field has Jacobian
    /// [[p, q], [q, −p]]; this returns √(p² + q²).
    pub fn transverse_gradient(&self) -> f64 {
        let g = self.gradient;
        ((g[0][0].powi(2) + g[0][1].powi(2) + g[1][0].powi(2) + g[1][1].powi(2)) / 2.0).sqrt()
    }
}

/// Field and analytic gradient at `point` = (x, z).
pub fn waveguide_field_and_gradient(ws: &WireSet, point: [f64; 2]) -> Result<FieldGradient> {
    ws.validate()?;
    require_finite("point x", point[0])?;
    require_finite("point z", point[1])?;
    let [mut bx, by, mut bz] = ws.bias_field;
    let mut g = [[0.0; 2]; 2];
    for w in &ws.wires {
        let dx = point[0] - w.x;
        let dz = point[1] - w.z;
        let r2 = dx * dx + dz * dz;
        if r2 == 0.0 {
            return Err(Error::Singular(format!("evaluation point lies on the wire at ({}, {})", w.x, w.z)));
        }
        let k = MU0 * w.current / (2.0 * PI);
        // B = k·(dz, −dx)/r²
        bx += k * dz / r2;
        bz -= k * dx / r2;
        let r4 = r2 * r2;
        g[0][0] += -2.0 * k * dx * dz / r4;
        g[0][1] += k * (dx * dx - dz * dz) / r4;
        g[1][0] += k * (dx * dx - dz * dz) / r4;
        g[1][1] += 2.0 * k * dx * dz / r4;
    }
    Ok(FieldGradient { field: [bx, by, bz], gradient: g })
}

/// Magnetic-moment energy scale μB·B/kB in kelvin (g-factors omitted).
/// The ripple frequency is only validated.
pub fn heater_ripple_potential(b_ripple: f64, frequency: f64) -> Result<f64> {
    require_non_negative("ripple field", b_ripple)?;
    require_non_negative("ripple frequency", frequency)?;
    Ok(BOHR_MAGNETON * b_ripple / BOLTZMANN)
}
