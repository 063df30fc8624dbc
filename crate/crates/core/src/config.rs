//! Scenario files: TOML with explicit units in every key name.
//!
//! Unknown keys are rejected. Missing sections (and missing keys inside a
//! section) take the committed defaults; the names of defaulted sections
//! are reported so that outputs can record where values came from. The
//! filled document is the canonical form: dumping and re-reading it gives
//! the same scenario bit for bit.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::optics::CavitySpec;
use crate::plant::{DisturbanceGeometry, PlantConfig, SurrogateSettings};
use crate::servo::{
    ControllerConfig, CurrentTimeline, FeedForwardFilter, FfInjection, Pulse, RunConfig, Scenario, SchemeConfig,
    SchemeKind, SplitMode,
};
use crate::thermal::MaterialProps;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub version: Option<u32>,
    pub cavity: Option<CavityDoc>,
    pub material: Option<MaterialDoc>,
    pub plant: Option<PlantDoc>,
    pub scheme: Option<SchemeDoc>,
    pub disturbance: Option<DisturbanceDoc>,
    pub run: Option<RunDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavityDoc {
    pub length_um: f64,
    pub curved_mirror_roc_mm: f64,
    pub wavelength_nm: f64,
    pub aperture_radius_um: f64,
    pub loss_chip_ppm: f64,
    pub loss_curved_ppm: f64,
}

impl Default for CavityDoc {
    /// The servo plant's cavity: 215 μm long, 100 μm aperture.
    fn default() -> Self {
        CavityDoc {
            length_um: 215.0,
            curved_mirror_roc_mm: 50.0,
            wavelength_nm: 780.0,
            aperture_radius_um: 100.0,
            loss_chip_ppm: 20.0,
            loss_curved_ppm: 11.4,
        }
    }
}

impl CavityDoc {
    pub fn to_spec(&self) -> CavitySpec {
        CavitySpec {
            length: self.length_um / 1e6,
            curved_mirror_roc: self.curved_mirror_roc_mm / 1e3,
            wavelength: self.wavelength_nm / 1e9,
            aperture_radius: self.aperture_radius_um / 1e6,
            loss_chip: self.loss_chip_ppm / 1e6,
            loss_curved: self.loss_curved_ppm / 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialDoc {
    pub conductivity_w_per_m_k: f64,
    pub diffusivity_m2_per_s: f64,
    pub expansion_per_k: f64,
    pub thickness_mm: f64,
}

impl Default for MaterialDoc {
    fn default() -> Self {
        MaterialDoc {
            conductivity_w_per_m_k: 40.0,
            diffusivity_m2_per_s: 1.3e-5,
            expansion_per_k: 5.5e-6,
            thickness_mm: 4.0,
        }
    }
}

impl MaterialDoc {
    pub fn to_props(&self) -> MaterialProps {
        MaterialProps {
            conductivity: self.conductivity_w_per_m_k,
            diffusivity: self.diffusivity_m2_per_s,
            expansion_coeff: self.expansion_per_k,
            thickness: self.thickness_mm / 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantDoc {
    pub probe_wavelength_nm: f64,
    pub probe_linewidth_factor: f64,
    pub heater_distance_um: f64,
    pub disturbance_distance_um: f64,
    pub rtd_heater_distance_um: f64,
    pub rtd_disturbance_distance_um: f64,
    pub disturbance_geometry: DisturbanceGeometry,
    pub pzt_gain_nm_per_v: f64,
    pub pzt_resonance_hz: f64,
    pub pzt_q: f64,
    pub fast_path_fraction: f64,
    pub heater_resistance_ohm: f64,
    pub waveguide_resistance_ohm_per_m: f64,
    pub sio2_lag_hz: Option<f64>,
    pub surrogate: SurrogateDoc,
}

impl Default for PlantDoc {
    fn default() -> Self {
        PlantDoc {
            probe_wavelength_nm: 850.0,
            probe_linewidth_factor: 10.0,
            heater_distance_um: 10.0,
            disturbance_distance_um: 100.0,
            rtd_heater_distance_um: 30.0,
            rtd_disturbance_distance_um: 100.0,
            disturbance_geometry: DisturbanceGeometry::Line,
            pzt_gain_nm_per_v: 10.0,
            pzt_resonance_hz: 10e3,
            pzt_q: 10.0,
            fast_path_fraction: 1e-3,
            heater_resistance_ohm: 10.0,
            waveguide_resistance_ohm_per_m: 300.0 / 9.0,
            sio2_lag_hz: None,
            surrogate: SurrogateDoc::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateDoc {
    pub samples: usize,
    pub band_min_hz: f64,
    pub band_max_hz: f64,
    pub heater_poles: usize,
    pub heater_pole_max_hz: f64,
    pub path_poles: usize,
    pub path_floor: f64,
    pub path_max_error: f64,
    pub quad_rel_tol: f64,
}

impl Default for SurrogateDoc {
    fn default() -> Self {
        let s = SurrogateSettings::default();
        SurrogateDoc {
            samples: s.samples,
            band_min_hz: s.band_min_hz,
            band_max_hz: s.band_max_hz,
            heater_poles: s.heater_poles,
            heater_pole_max_hz: s.heater_pole_max_hz,
            path_poles: s.path_poles,
            path_floor: s.path_floor,
            path_max_error: s.path_max_error,
            quad_rel_tol: s.quad_rel_tol,
        }
    }
}

macro_rules! loop_doc {
    ($name:ident, $kp:ident, $ki:ident, $kd:ident, $lo:ident, $hi:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            pub $kp: f64,
            pub $ki: f64,
            #[serde(default)]
            pub $kd: f64,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub derivative_filter_hz: Option<f64>,
            pub $lo: f64,
            pub $hi: f64,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub lead_zero_hz: Option<f64>,
            #[serde(default, skip_serializing_if = "Option::is_none")]
            pub lead_pole_hz: Option<f64>,
        }

        impl From<ControllerConfig> for $name {
            fn from(c: ControllerConfig) -> Self {
                $name {
                    $kp: c.kp,
                    $ki: c.ki,
                    $kd: c.kd,
                    derivative_filter_hz: c.derivative_filter_hz,
                    $lo: c.output_min,
                    $hi: c.output_max,
                    lead_zero_hz: c.lead_zero_hz,
                    lead_pole_hz: c.lead_pole_hz,
                }
            }
        }

        impl From<$name> for ControllerConfig {
            fn from(d: $name) -> Self {
                ControllerConfig {
                    kp: d.$kp,
                    ki: d.$ki,
                    kd: d.$kd,
                    derivative_filter_hz: d.derivative_filter_hz,
                    output_min: d.$lo,
                    output_max: d.$hi,
                    lead_zero_hz: d.lead_zero_hz,
                    lead_pole_hz: d.lead_pole_hz,
                }
            }
        }
    };
}

loop_doc!(RtdLoopDoc, kp_w_per_k, ki_w_per_k_s, kd_w_s_per_k, output_min_w, output_max_w);
loop_doc!(PztLoopDoc, kp_v_per_hz, ki_v_per_hz_s, kd_v_s_per_hz, output_min_v, output_max_v);
loop_doc!(HeaterLoopDoc, kp_w_per_hz, ki_w_per_hz_s, kd_w_s_per_hz, output_min_w, output_max_w);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FfFilterDoc {
    pub gain_w_per_a2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_hz: Option<f64>,
    #[serde(default)]
    pub offset_w: f64,
    #[serde(default = "default_injection")]
    pub injection: FfInjection,
}

fn default_injection() -> FfInjection {
    FfInjection::RtdSetpoint
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeDoc {
    pub kind: SchemeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crossover_split_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_mode: Option<SplitMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtd_loop: Option<RtdLoopDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pzt_loop: Option<PztLoopDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heater_loop: Option<HeaterLoopDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ff_filter: Option<FfFilterDoc>,
}

impl From<&SchemeConfig> for SchemeDoc {
    fn from(s: &SchemeConfig) -> Self {
        SchemeDoc {
            kind: s.scheme,
            crossover_split_hz: s.crossover_split_hz,
            split_mode: s.split_mode,
            rtd_loop: s.rtd_loop.map(Into::into),
            pzt_loop: s.pzt_loop.map(Into::into),
            heater_loop: s.heater_loop.map(Into::into),
            ff_filter: s.ff_filter.map(|f| FfFilterDoc {
                gain_w_per_a2: f.gain,
                corner_hz: f.corner_hz,
                offset_w: f.offset,
                injection: f.injection,
            }),
        }
    }
}

/// Committed gains for each scheme.
pub fn scheme_preset(kind: SchemeKind) -> SchemeConfig {
    match kind {
        SchemeKind::TemperatureServo => SchemeConfig::temperature_servo(),
        SchemeKind::FeedForward => SchemeConfig::feed_forward(),
        SchemeKind::DirectDual => SchemeConfig::direct_dual(),
    }
}

impl SchemeDoc {
    /// Fill the fields the selected scheme needs from its preset. Fields
    /// it does not use are left alone so validation can reject them.
    fn filled(&self) -> SchemeDoc {
        let preset = SchemeDoc::from(&scheme_preset(self.kind));
        SchemeDoc {
            kind: self.kind,
            crossover_split_hz: self.crossover_split_hz.or(preset.crossover_split_hz),
            split_mode: self.split_mode.or(preset.split_mode),
            rtd_loop: self.rtd_loop.or(preset.rtd_loop),
            pzt_loop: self.pzt_loop.or(preset.pzt_loop),
            heater_loop: self.heater_loop.or(preset.heater_loop),
            ff_filter: self.ff_filter.or(preset.ff_filter),
        }
    }

    pub fn to_scheme(&self) -> SchemeConfig {
        SchemeConfig {
            scheme: self.kind,
            rtd_loop: self.rtd_loop.map(Into::into),
            pzt_loop: self.pzt_loop.map(Into::into),
            heater_loop: self.heater_loop.map(Into::into),
            ff_filter: self.ff_filter.map(|f| FeedForwardFilter {
                gain: f.gain_w_per_a2,
                corner_hz: f.corner_hz,
                offset: f.offset_w,
                injection: f.injection,
            }),
            crossover_split_hz: self.crossover_split_hz,
            split_mode: self.split_mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseDoc {
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub current_a: f64,
    #[serde(default)]
    pub ramp_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceDoc {
    #[serde(default)]
    pub pulses: Vec<PulseDoc>,
}

impl Default for DisturbanceDoc {
    /// A sudden 0.5 A pulse held for 300 ms.
    fn default() -> Self {
        DisturbanceDoc { pulses: vec![PulseDoc { t_start_s: 0.01, t_end_s: 0.31, current_a: 0.5, ramp_s: 0.0 }] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunDoc {
    pub dt_s: f64,
    pub duration_s: f64,
    pub sensor_noise_rms_hz: f64,
    pub rng_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_interval_s: Option<f64>,
}

impl Default for RunDoc {
    fn default() -> Self {
        RunDoc { dt_s: 5e-6, duration_s: 0.8, sensor_noise_rms_hz: 0.0, rng_seed: 0, sample_interval_s: Some(1e-4) }
    }
}

/// A filled document plus the sections that came from defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub document: ConfigDocument,
    pub defaulted_sections: Vec<String>,
    pub scenario: Scenario,
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<ConfigDocument> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { line, message: e.message().to_string() }
        })
    }

    pub fn load(path: &Path) -> Result<ConfigDocument> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("serializing config: {e}")))
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        if let Some(v) = self.version {
            if v != CONFIG_VERSION {
                return Err(Error::invalid(format!("unsupported config version {v} (expected {CONFIG_VERSION})")));
            }
        }
        let mut defaulted = Vec::new();
        let mut take = |name: &str, present: bool| {
            if !present {
                defaulted.push(name.to_string());
            }
        };
        take("cavity", self.cavity.is_some());
        take("material", self.material.is_some());
        take("plant", self.plant.is_some());
        take("scheme", self.scheme.is_some());
        take("disturbance", self.disturbance.is_some());
        take("run", self.run.is_some());
        let scheme = self
            .scheme
            .clone()
            .unwrap_or_else(|| SchemeDoc::from(&SchemeConfig::temperature_servo()))
            .filled();
        let document = ConfigDocument {
            version: Some(CONFIG_VERSION),
            cavity: Some(self.cavity.clone().unwrap_or_default()),
            material: Some(self.material.clone().unwrap_or_default()),
            plant: Some(self.plant.clone().unwrap_or_default()),
            scheme: Some(scheme),
            disturbance: Some(self.disturbance.clone().unwrap_or_default()),
            run: Some(self.run.clone().unwrap_or_default()),
        };
        let scenario = document.to_scenario()?;
        Ok(ResolvedConfig { document, defaulted_sections: defaulted, scenario })
    }

    /// Convert a filled document; missing sections are an error here.
    fn to_scenario(&self) -> Result<Scenario> {
        let missing = |s: &str| Error::invalid(format!("section [{s}] missing after defaults"));
        let cav = self.cavity.as_ref().ok_or_else(|| missing("cavity"))?;
        let mat = self.material.as_ref().ok_or_else(|| missing("material"))?;
        let p = self.plant.as_ref().ok_or_else(|| missing("plant"))?;
        let s = &p.surrogate;
        let plant = PlantConfig {
            cavity: cav.to_spec(),
            material: mat.to_props(),
            probe_wavelength: p.probe_wavelength_nm / 1e9,
            probe_linewidth_factor: p.probe_linewidth_factor,
            heater_distance: p.heater_distance_um / 1e6,
            disturbance_distance: p.disturbance_distance_um / 1e6,
            rtd_heater_distance: p.rtd_heater_distance_um / 1e6,
            rtd_disturbance_distance: p.rtd_disturbance_distance_um / 1e6,
            disturbance_geometry: p.disturbance_geometry,
            pzt_gain: p.pzt_gain_nm_per_v / 1e9,
            pzt_resonance: p.pzt_resonance_hz,
            pzt_q: p.pzt_q,
            fast_path_fraction: p.fast_path_fraction,
            heater_resistance: p.heater_resistance_ohm,
            waveguide_resistance_per_length: p.waveguide_resistance_ohm_per_m,
            sio2_lag_hz: p.sio2_lag_hz,
            surrogate: SurrogateSettings {
                samples: s.samples,
                band_min_hz: s.band_min_hz,
                band_max_hz: s.band_max_hz,
                heater_poles: s.heater_poles,
                heater_pole_max_hz: s.heater_pole_max_hz,
                path_poles: s.path_poles,
                path_floor: s.path_floor,
                path_max_error: s.path_max_error,
                quad_rel_tol: s.quad_rel_tol,
            },
        };
        let scheme = self.scheme.as_ref().ok_or_else(|| missing("scheme"))?.to_scheme();
        let dist = self.disturbance.as_ref().ok_or_else(|| missing("disturbance"))?;
        let disturbance = CurrentTimeline {
            pulses: dist
                .pulses
                .iter()
                .map(|p| Pulse { t_start: p.t_start_s, t_end: p.t_end_s, amps: p.current_a, ramp: p.ramp_s })
                .collect(),
        };
        let r = self.run.as_ref().ok_or_else(|| missing("run"))?;
        let run = RunConfig {
            dt: r.dt_s,
            duration: r.duration_s,
            sensor_noise_rms: r.sensor_noise_rms_hz,
            rng_seed: r.rng_seed,
            sample_interval: r.sample_interval_s,
        };
        let sc = Scenario { plant, scheme, disturbance, run };
        sc.validate()?;
        Ok(sc)
    }
}

/// Read, fill and convert a scenario file.
pub fn load_scenario(path: &Path) -> Result<ResolvedConfig> {
    ConfigDocument::load(path)?.resolve()
}
