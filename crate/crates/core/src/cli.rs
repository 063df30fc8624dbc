//! Command-line front end.
//!
//! Every subcommand prints a flat `key = value` report (or JSON with
//! `--json`) and, where it produces data, writes CSV, gnuplot and SVG files
//! into the output directory (`--out`, else `$CQED_CHIP_OUT`).

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use std::collections::HashSet;
use std::ffi::OsString;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{load_scenario, FfFilterDoc};
use crate::error::{Error, Result};
use crate::magnetics::{
    heater_ripple_potential, waveguide_field_and_gradient, Wire, WireSet, DEFAULT_EVAL_HEIGHT,
    GAUSS_PER_CM_PER_TESLA_PER_M, GAUSS_PER_TESLA,
};
use crate::optics::{fit_mirror_radius, model_finesse, CavitySpec, FinesseSample};
use crate::plant::PlantModel;
use crate::plot::{gnuplot_data, Chart, Series, Style};
use crate::servo::{open_loop_bode, run_scenario, tune_feedforward, LoopPath, TuneOptions};
use crate::thermal::{surface_lift, thermal_cutoff, HeatSource, MaterialProps};

pub const OUT_ENV: &str = "CQED_CHIP_OUT";
const DEFAULT_OUT: &str = "cqed-out";

#[derive(Debug, Parser)]
#[command(name = "cqed-chip", version, about = "Fabry-Perot cavity on an atom chip: optics, thermal drift and servo simulation")]
pub struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,

    /// Output directory for data files.
    #[arg(long, global = true, env = OUT_ENV, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mode waist, losses, finesse, linewidth and cooperativity.
    Cavity(CavityArgs),
    /// Fit aperture radius and fixed loss to finesse-vs-length data.
    FitRadius(FitRadiusArgs),
    /// Run servo scenarios from TOML files.
    Simulate(SimulateArgs),
    /// Frequency response of a point or line heat source.
    ThermalBode(ThermalBodeArgs),
    /// Field and gradient of straight chip wires.
    Magnetics(MagneticsArgs),
}

#[derive(Debug, Args)]
pub struct CavityArgs {
    #[arg(long, default_value_t = 25.0)]
    pub length_um: f64,
    #[arg(long, default_value_t = 50.0)]
    pub roc_mm: f64,
    #[arg(long, default_value_t = 780.0)]
    pub wavelength_nm: f64,
    #[arg(long, default_value_t = 47.0)]
    pub aperture_um: f64,
    #[arg(long, default_value_t = 20.0)]
    pub loss_chip_ppm: f64,
    #[arg(long, default_value_t = 11.4)]
    pub loss_curved_ppm: f64,
}

#[derive(Debug, Args)]
pub struct FitRadiusArgs {
    /// CSV with columns length_um, finesse and optionally finesse_sigma.
    pub csv: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub roc_mm: f64,
    #[arg(long, default_value_t = 780.0)]
    pub wavelength_nm: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario files.
    #[arg(required = true)]
    pub configs: Vec<PathBuf>,
    /// Run all scenarios in parallel, each into its own subdirectory.
    #[arg(long)]
    pub sweep: bool,
    /// Worker threads for --sweep (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Print the filled scenario document and exit.
    #[arg(long)]
    pub dump_config: bool,
    /// Also write open-loop Bode data and margins for each loop.
    #[arg(long)]
    pub bode: bool,
    /// Tune the feed-forward filter first and simulate with the result.
    #[arg(long)]
    pub tune_ff: bool,
    /// Record the wall-clock time in metadata.json.
    #[arg(long)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Point,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QuantityArg {
    /// Temperature at the given distance.
    Temperature,
    /// Surface lift above a point at the given lateral offset.
    Lift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlantPathArg {
    Heater,
    Disturbance,
    RtdHeater,
    RtdDisturbance,
}

#[derive(Debug, Args)]
pub struct ThermalBodeArgs {
    #[arg(long, value_enum, default_value_t = SourceArg::Point)]
    pub source: SourceArg,
    /// Source distance (temperature) or lateral offset (lift).
    #[arg(long, default_value_t = 100.0)]
    pub distance_um: f64,
    /// W for a point source, W/m for a line source.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    #[arg(long, value_enum, default_value_t = QuantityArg::Temperature)]
    pub quantity: QuantityArg,
    #[arg(long, default_value_t = 1.0)]
    pub fmin_hz: f64,
    #[arg(long, default_value_t = 1e5)]
    pub fmax_hz: f64,
    /// Log-spaced points; 0 gives a header-only file.
    #[arg(long, default_value_t = 51)]
    pub points: usize,
    /// Sweep a fitted plant path instead (m/W, K/W, m per W/m, K per W/m).
    #[arg(long, value_enum)]
    pub plant_path: Option<PlantPathArg>,
    /// Scenario file supplying plant and material for --plant-path or the
    /// material otherwise.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MagneticsArgs {
    /// Wire as x_um,z_um,current_a (repeatable). Default: the two-wire
    /// waveguide, 3 A at x = ±75 μm.
    #[arg(long = "wire", value_parser = parse_triple, allow_hyphen_values = true)]
    pub wires: Vec<[f64; 3]>,
    /// Uniform bias bx_g,by_g,bz_g.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true)]
    pub bias_g: Option<[f64; 3]>,
    /// Evaluation point x_um,z_um (repeatable). Default: 50 μm above the origin.
    #[arg(long = "point", value_parser = parse_pair, allow_hyphen_values = true)]
    pub points: Vec<[f64; 2]>,
    /// Ripple frequency for the energy-scale column.
    #[arg(long, default_value_t = 1e3)]
    pub ripple_hz: f64,
}

fn parse_list<const N: usize>(s: &str) -> std::result::Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_triple(s: &str) -> std::result::Result<[f64; 3], String> {
    parse_list::<3>(s)
}

fn parse_pair(s: &str) -> std::result::Result<[f64; 2], String> {
    parse_list::<2>(s)
}

/// Ordered flat report.
#[derive(Debug, Default, Clone)]
pub struct Report(Vec<(String, Value)>);

impl Report {
    fn put(&mut self, key: &str, v: impl Into<Value>) {
        self.0.push((key.to_string(), v.into()));
    }

    fn text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.0 {
            match v {
                Value::String(x) => s.push_str(&format!("{k} = {x}\n")),
                other => s.push_str(&format!("{k} = {other}\n")),
            }
        }
        s
    }

    fn json(&self) -> Value {
        Value::Object(self.0.iter().cloned().collect::<Map<_, _>>())
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli, w: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Cavity(a) => emit(cli, w, cmd_cavity(a, cli.out.as_deref())?),
        Command::FitRadius(a) => emit(cli, w, cmd_fit_radius(a, &out_dir(cli))?),
        Command::Simulate(a) => cmd_simulate(cli, a, w),
        Command::ThermalBode(a) => cmd_thermal_bode(cli, a, w),
        Command::Magnetics(a) => cmd_magnetics(cli, a, w),
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn emit(cli: &Cli, w: &mut dyn Write, r: Report) -> Result<()> {
    if cli.json {
        writeln!(w, "{}", serde_json::to_string_pretty(&r.json()).map_err(|e| Error::Io(e.to_string()))?)?;
    } else {
        write!(w, "{}", r.text())?;
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let p = dir.join(name);
    std::fs::write(&p, contents).map_err(|e| Error::Io(format!("{}: {e}", p.display())))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

fn unwrap_phase(ph: &mut [f64]) {
    for i in 1..ph.len() {
        let d = ph[i] - ph[i - 1];
        ph[i] -= 2.0 * PI * (d / (2.0 * PI)).round();
    }
}

// ---------------------------------------------------------------- cavity

pub fn cmd_cavity(a: &CavityArgs, out: Option<&Path>) -> Result<Report> {
    let spec = CavitySpec {
        length: a.length_um / 1e6,
        curved_mirror_roc: a.roc_mm / 1e3,
        wavelength: a.wavelength_nm / 1e9,
        aperture_radius: a.aperture_um / 1e6,
        loss_chip: a.loss_chip_ppm / 1e6,
        loss_curved: a.loss_curved_ppm / 1e6,
    };
    let d = spec.derive()?;
    let mut r = Report::default();
    r.put("length_um", a.length_um);
    r.put("roc_mm", a.roc_mm);
    r.put("wavelength_nm", a.wavelength_nm);
    r.put("aperture_um", a.aperture_um);
    r.put("waist_um", d.waist * 1e6);
    r.put("diffraction_loss_ppm", d.diffraction_loss * 1e6);
    r.put("round_trip_loss_ppm", d.round_trip_loss * 1e6);
    r.put("finesse", d.finesse);
    r.put("fsr_hz", d.fsr);
    r.put("linewidth_hz", d.linewidth_fwhm);
    r.put("cooperativity", d.cooperativity);
    r.put("displacement_per_linewidth_pm", d.displacement_per_linewidth * 1e12);
    if let Some(dir) = out {
        write_file(dir, "cavity.txt", &r.text())?;
        write_file(dir, "cavity.json", &format!("{:#}\n", r.json()))?;
    }
    Ok(r)
}

// ------------------------------------------------------------ fit-radius

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FinesseRow {
    length_um: f64,
    finesse: f64,
    #[serde(default)]
    finesse_sigma: Option<f64>,
}

/// Read `length_um,finesse[,finesse_sigma]` rows; `#` starts a comment.
pub fn read_finesse_csv(path: &Path) -> Result<Vec<FinesseSample>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<FinesseRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            };
            Error::Parse { line, message }
        })?;
        out.push(FinesseSample {
            length: row.length_um / 1e6,
            finesse: row.finesse,
            finesse_uncertainty: row.finesse_sigma,
        });
    }
    Ok(out)
}

pub fn cmd_fit_radius(a: &FitRadiusArgs, dir: &Path) -> Result<Report> {
    let samples = read_finesse_csv(&a.csv)?;
    let roc = a.roc_mm / 1e3;
    let lambda = a.wavelength_nm / 1e9;
    let fit = fit_mirror_radius(&samples, roc, lambda)?;
    let mut r = Report::default();
    r.put("samples", samples.len());
    r.put("aperture_radius_um", fit.aperture_radius * 1e6);
    r.put("fixed_loss_ppm", fit.fixed_loss * 1e6);
    r.put("chi_squared", fit.chi_squared);
    r.put("iterations", fit.iterations);
    r.put("converged", fit.converged);
    r.put("default_uncertainty_used", fit.default_uncertainty_used);
    r.put("residuals", fit.residuals.clone());

    let model = |l: f64| model_finesse(l, roc, lambda, fit.aperture_radius, fit.fixed_loss);
    let mut csv = String::from("length_um,finesse,model_finesse,residual\n");
    for (s, res) in samples.iter().zip(&fit.residuals) {
        csv.push_str(&format!("{},{},{},{}\n", s.length * 1e6, s.finesse, model(s.length)?, res));
    }
    write_file(dir, "fit_residuals.csv", &csv)?;
    let lmin = samples.iter().map(|s| s.length).fold(f64::INFINITY, f64::min);
    let lmax = samples.iter().map(|s| s.length).fold(0.0, f64::max);
    let mut curve = Vec::new();
    for l in log_grid(lmin, lmax.min(0.999 * roc), 200) {
        curve.push((l * 1e6, model(l)?));
    }
    write_file(
        dir,
        "fit_model.dat",
        &gnuplot_data(&["length_um", "model_finesse"], curve.iter().map(|&(x, y)| vec![x, y])),
    )?;
    let chart = Chart {
        title: format!("finesse fit: a = {:.2} um, fixed loss = {:.2} ppm", fit.aperture_radius * 1e6, fit.fixed_loss * 1e6),
        x_label: "length (um)".into(),
        y_label: "finesse".into(),
        log_x: true,
        series: vec![
            Series::new("data", samples.iter().map(|s| (s.length * 1e6, s.finesse)).collect(), Style::Markers),
            Series::new("model", curve, Style::Line),
        ],
    };
    write_file(dir, "fit_radius.svg", &chart.render())?;
    write_file(dir, "fit_radius.txt", &r.text())?;
    Ok(r)
}

// -------------------------------------------------------------- simulate

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, w: &mut dyn Write) -> Result<()> {
    if a.dump_config {
        for p in &a.configs {
            let resolved = load_scenario(p)?;
            write!(w, "{}", resolved.document.to_toml()?)?;
        }
        return Ok(());
    }
    let base = out_dir(cli);
    if !a.sweep && a.configs.len() == 1 {
        let r = simulate_one(&a.configs[0], &base, a)?;
        return emit(cli, w, r);
    }
    // one subdirectory per scenario, named after the file stem
    let mut seen = HashSet::new();
    let mut dirs = Vec::new();
    for p in &a.configs {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if stem.is_empty() || !seen.insert(stem.clone()) {
            return Err(Error::invalid(format!("sweep needs distinct file names, {} repeats", p.display())));
        }
        dirs.push(base.join(stem));
    }
    let job = || -> Vec<Result<Report>> {
        a.configs.par_iter().zip(dirs.par_iter()).map(|(p, d)| simulate_one(p, d, a)).collect()
    };
    let results = match a.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    };
    let mut worst: Option<Error> = None;
    let mut all = Vec::new();
    for (p, res) in a.configs.iter().zip(results) {
        let mut r = Report::default();
        r.put("config", p.display().to_string());
        match res {
            Ok(rep) => {
                r.put("status", "ok");
                r.0.extend(rep.0);
            }
            Err(e) => {
                r.put("status", "error");
                r.put("error", e.to_string());
                eprintln!("error: {}: {e}", p.display());
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
        all.push(r);
    }
    if cli.json {
        let v: Vec<Value> = all.iter().map(Report::json).collect();
        writeln!(w, "{}", serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?)?;
    } else {
        for r in &all {
            writeln!(w, "{}", r.text())?;
        }
    }
    worst.map_or(Ok(()), Err)
}

fn simulate_one(path: &Path, dir: &Path, a: &SimulateArgs) -> Result<Report> {
    let resolved = load_scenario(path)?;
    let mut doc = resolved.document.clone();
    let mut sc = resolved.scenario.clone();
    let mut r = Report::default();
    r.put("scheme", format!("{:?}", sc.scheme.scheme));
    r.put("defaulted_sections", resolved.defaulted_sections.join(","));

    if a.tune_ff {
        let t = tune_feedforward(&sc, TuneOptions::default())?;
        sc.scheme.ff_filter = Some(t.filter);
        if let Some(s) = doc.scheme.as_mut() {
            s.ff_filter = Some(FfFilterDoc {
                gain_w_per_a2: t.filter.gain,
                corner_hz: t.filter.corner_hz,
                offset_w: t.filter.offset,
                injection: t.filter.injection,
            });
        }
        r.put("ff_gain_w_per_a2", t.filter.gain);
        r.put("ff_corner_hz", t.filter.corner_hz.map_or(Value::Null, Value::from));
        r.put("ff_peak_without_hz", t.peak_without_hz);
        r.put("ff_peak_with_hz", t.peak_with_hz);
        r.put("ff_suppression_ratio", t.suppression_ratio);
        r.put("ff_evaluations", t.evaluations);
    }
    write_file(dir, "config.toml", &doc.to_toml()?)?;
    let mut meta = json!({
        "tool": "cqed-chip",
        "version": env!("CARGO_PKG_VERSION"),
        "config": path.display().to_string(),
        "defaulted_sections": resolved.defaulted_sections,
    });
    if a.timestamp {
        let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        meta["timestamp_unix_s"] = json!(now);
    }
    write_file(dir, "metadata.json", &format!("{meta:#}\n"))?;

    let tr = run_scenario(&sc)?;
    let s = tr.summary;
    r.put("steps", sc.steps());
    r.put("dt_s", sc.run.dt);
    r.put("samples", tr.len());
    r.put("peak_offset_hz", s.peak_abs_offset_hz);
    r.put("peak_time_s", s.peak_time_s);
    r.put("linewidth_hz", s.linewidth_hz);
    r.put("time_above_linewidth_s", s.time_above_linewidth_s);
    r.put("longest_above_linewidth_s", s.longest_above_linewidth_s);
    r.put("settling_time_s", s.settling_time_s);
    r.put("rms_after_settling_hz", s.rms_after_settling_hz);
    r.put("unsampled_peak_offset_hz", tr.unsampled_peak_abs_offset_hz);
    r.put("max_offset_after_1ms_hz", tr.max_abs_offset_after_holdoff(1e-3));

    write_file(dir, "trace.csv", &tr.to_csv())?;
    write_file(
        dir,
        "trace.dat",
        &gnuplot_data(
            &["t_s", "offset_hz", "pzt_v", "heater_w", "rtd_k", "transmission"],
            (0..tr.len()).map(|i| vec![tr.t[i], tr.offset[i], tr.pzt[i], tr.heater[i], tr.rtd[i], tr.transmission[i]]),
        ),
    )?;
    let t_end = tr.t.last().copied().unwrap_or(0.0);
    let lw = tr.linewidth / 1e6;
    let chart = Chart {
        title: format!("cavity resonance offset ({:?})", sc.scheme.scheme),
        x_label: "time (s)".into(),
        y_label: "offset (MHz)".into(),
        log_x: false,
        series: vec![
            Series::new("offset", tr.t.iter().zip(&tr.offset).map(|(&t, &x)| (t, x / 1e6)).collect(), Style::Line),
            Series::new("+linewidth", vec![(0.0, lw), (t_end, lw)], Style::Dashed),
            Series::new("-linewidth", vec![(0.0, -lw), (t_end, -lw)], Style::Dashed),
        ],
    };
    write_file(dir, "trace.svg", &chart.render())?;

    if a.bode {
        for (name, path) in [("heater", LoopPath::Heater), ("pzt", LoopPath::Pzt)] {
            let m = open_loop_bode(&sc, path)?;
            let opt = |v: Option<f64>| v.map_or(Value::Null, Value::from);
            r.put(&format!("{name}_crossover_hz"), opt(m.crossover_hz));
            r.put(&format!("{name}_phase_margin_deg"), opt(m.phase_margin_deg));
            r.put(&format!("{name}_gain_margin_db"), opt(m.gain_margin_db));
            write_file(dir, &format!("bode_{name}.csv"), &m.to_csv())?;
            let chart = Chart {
                title: format!("{name} loop gain"),
                x_label: "frequency (Hz)".into(),
                y_label: "gain (dB)".into(),
                log_x: true,
                series: vec![Series::new(
                    "|L|",
                    m.freq_hz.iter().zip(&m.gain_db).map(|(&f, &g)| (f, g)).collect(),
                    Style::Line,
                )],
            };
            write_file(dir, &format!("bode_{name}.svg"), &chart.render())?;
        }
    }
    write_file(dir, "summary.txt", &r.text())?;
    Ok(r)
}

// ---------------------------------------------------------- thermal-bode

fn cmd_thermal_bode(cli: &Cli, a: &ThermalBodeArgs, w: &mut dyn Write) -> Result<()> {
    let resolved = match &a.config {
        Some(p) => Some(load_scenario(p)?),
        None => None,
    };
    let mat = resolved.as_ref().map_or_else(MaterialProps::sapphire, |r| r.scenario.plant.material);
    if a.points > 0 && !(a.fmin_hz > 0.0 && a.fmax_hz >= a.fmin_hz && a.fmax_hz.is_finite()) {
        return Err(Error::invalid(format!("need 0 < fmin_hz <= fmax_hz, got {} and {}", a.fmin_hz, a.fmax_hz)));
    }
    let freqs = log_grid(a.fmin_hz, a.fmax_hz, a.points);
    let mut summary = Report::default();
    let (header, values): (&str, Vec<Complex64>) = match a.plant_path {
        Some(p) => {
            let cfg = resolved.as_ref().map(|r| r.scenario.plant.clone()).unwrap_or_default();
            let m = PlantModel::build(&cfg)?;
            let tf = match p {
                PlantPathArg::Heater => &m.heater,
                PlantPathArg::Disturbance => &m.disturbance,
                PlantPathArg::RtdHeater => &m.rtd_heater,
                PlantPathArg::RtdDisturbance => &m.rtd_disturbance,
            };
            summary.put("path", format!("{p:?}"));
            summary.put("dc_gain", tf.dc_gain());
            summary.put("poles", tf.poles.len());
            ("freq_hz,mag,phase_rad", freqs.iter().map(|f| tf.eval(2.0 * PI * f)).collect())
        }
        None => {
            let r = a.distance_um / 1e6;
            let src = match a.source {
                SourceArg::Point => HeatSource::point(a.amplitude, r),
                SourceArg::Line => HeatSource::line(a.amplitude, r),
            };
            let (wc, tau) = thermal_cutoff(r, &mat)?;
            summary.put("source", format!("{:?}", a.source).to_lowercase());
            summary.put("distance_um", a.distance_um);
            summary.put("cutoff_hz", wc / (2.0 * PI));
            summary.put("tau_s", tau);
            let mut v = Vec::with_capacity(freqs.len());
            for &f in &freqs {
                let omega = 2.0 * PI * f;
                v.push(match a.quantity {
                    QuantityArg::Temperature => src.response(omega, &mat)?,
                    QuantityArg::Lift => surface_lift(&src, r, omega, &mat)?,
                });
            }
            let header = match a.quantity {
                QuantityArg::Temperature => "freq_hz,mag_K,phase_rad",
                QuantityArg::Lift => "freq_hz,mag_m,phase_rad",
            };
            (header, v)
        }
    };
    let mag: Vec<f64> = values.iter().map(|z| z.norm()).collect();
    let mut phase: Vec<f64> = values.iter().map(|z| z.arg()).collect();
    unwrap_phase(&mut phase);
    summary.put("points", freqs.len());

    let mut csv = format!("{header}\n");
    for i in 0..freqs.len() {
        csv.push_str(&format!("{:e},{:e},{:e}\n", freqs[i], mag[i], phase[i]));
    }
    match &cli.out {
        Some(dir) => {
            write_file(dir, "thermal_bode.csv", &csv)?;
            let chart = Chart {
                title: "frequency response".into(),
                x_label: "frequency (Hz)".into(),
                y_label: "magnitude (dB re first point)".into(),
                log_x: true,
                series: vec![Series::new(
                    "magnitude",
                    freqs.iter().zip(&mag).map(|(&f, &m)| (f, 20.0 * (m / mag[0]).log10())).collect(),
                    Style::Line,
                )],
            };
            write_file(dir, "thermal_bode.svg", &chart.render())?;
            emit(cli, w, summary)
        }
        None if cli.json => {
            let rows: Vec<Value> =
                (0..freqs.len()).map(|i| json!({"freq_hz": freqs[i], "mag": mag[i], "phase_rad": phase[i]})).collect();
            let mut j = summary.json();
            j["rows"] = Value::Array(rows);
            writeln!(w, "{j:#}")?;
            Ok(())
        }
        None => {
            eprint!("{}", summary.text());
            write!(w, "{csv}")?;
            Ok(())
        }
    }
}

// ------------------------------------------------------------- magnetics

pub const MAGNETICS_CSV_HEADER: &str = "x_um,z_um,bx_g,by_g,bz_g,b_g,b_mg,gradient_g_per_cm,energy_scale_k";

/// Shortest decimal with at most 12 significant digits, so that values
/// like 40 mG print as `40` instead of carrying the last-bit noise.
fn sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.11e}");
    let v: f64 = s.parse().unwrap_or(x);
    format!("{v}")
}

fn cmd_magnetics(cli: &Cli, a: &MagneticsArgs, w: &mut dyn Write) -> Result<()> {
    let mut ws = if a.wires.is_empty() {
        WireSet::default_waveguide()
    } else {
        WireSet {
            wires: a.wires.iter().map(|t| Wire { x: t[0] / 1e6, z: t[1] / 1e6, current: t[2] }).collect(),
            bias_field: [0.0; 3],
        }
    };
    if let Some(b) = a.bias_g {
        ws.bias_field = b.map(|g| g / GAUSS_PER_TESLA);
    }
    ws.validate()?;
    let points = if a.points.is_empty() { vec![[0.0, DEFAULT_EVAL_HEIGHT * 1e6]] } else { a.points.clone() };
    let mut csv = format!("{MAGNETICS_CSV_HEADER}\n");
    let mut rows = Vec::new();
    for p in &points {
        let fg = waveguide_field_and_gradient(&ws, [p[0] / 1e6, p[1] / 1e6])?;
        let b = fg.magnitude();
        let vals = [
            p[0],
            p[1],
            fg.field[0] * GAUSS_PER_TESLA,
            fg.field[1] * GAUSS_PER_TESLA,
            fg.field[2] * GAUSS_PER_TESLA,
            b * GAUSS_PER_TESLA,
            b * GAUSS_PER_TESLA * 1e3,
            fg.transverse_gradient() * GAUSS_PER_CM_PER_TESLA_PER_M,
            heater_ripple_potential(b, a.ripple_hz)?,
        ];
        let cols: Vec<String> = vals.iter().map(|&v| sig12(v)).collect();
        csv.push_str(&cols.join(","));
        csv.push('\n');
        let names: Vec<&str> = MAGNETICS_CSV_HEADER.split(',').collect();
        rows.push(Value::Object(names.iter().zip(vals).map(|(k, v)| (k.to_string(), json!(v))).collect()));
    }
    if let Some(dir) = &cli.out {
        write_file(dir, "magnetics.csv", &csv)?;
    }
    if cli.json {
        writeln!(w, "{:#}", Value::Array(rows))?;
    } else {
        write!(w, "{csv}")?;
    }
    Ok(())
}
