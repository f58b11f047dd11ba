//! Declarative experiment runner behind the `holosim` binary.
//!
//! A run is `holosim run <experiment> [--config path] [--set key=value]...
//! [--out dir] [--seed n] [--threads n]`. The config is JSON with a strict
//! schema; every key has a default, so a bare run uses the reference device.
//! Frequencies are given as ν = Ω/2π in MHz, rates in kHz and times in ns.
//!
//! Overrides name either a dotted path (`device.g_mhz`) or a leaf key that
//! is unique in the schema (`g_mhz`, `omega-mhz`). Unrecognised trailing
//! flags of the form `--key value` are treated as overrides as well.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::calibration::{
    cached_curve, calibrate_omega, calibrate_two_qubit, compensation_track, content_hash, perturbative_coupling,
    uniform_grid, CalibrationCurve, FormulaVariant,
};
use crate::device_model::{
    DetuningParams, DriveMode, JcModel, ResonatorParams, ResonatorPlacement, TransmonParams, TwoQubitModel,
};
use crate::holonomy::SingleQubitGateSpec;
use crate::lindblad::{
    gate_fidelity_average, noise_robustness_sweep, single_qubit_gate_run, two_qubit_gate_run, SingleQubitSetup,
    Trajectory, TwoQubitInitial, TwoQubitOptions,
};
use crate::pulses::{build_single_loop_schedule, Shape, TwoQubitSchedule};
use crate::units::{khz, mhz, ns, to_mhz, to_ns};
use crate::{Error, Result};

/// Environment variable overriding the calibration cache directory.
pub const CACHE_ENV: &str = "HOLOSIM_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SingleGate,
    GateAverage,
    NoiseSweep,
    TwoGate,
    Calibrate,
    CouplingScan,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SingleGate => "single-gate",
            Experiment::GateAverage => "gate-average",
            Experiment::NoiseSweep => "noise-sweep",
            Experiment::TwoGate => "two-gate",
            Experiment::Calibrate => "calibrate",
            Experiment::CouplingScan => "coupling-scan",
        }
    }
}

/// An angle in radians; configs may also write it as `"pi/2"`, `"-3pi/4"`,
/// `"0.5*pi"` and so on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Angle(pub f64);

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Angle(x)),
            Raw::Text(s) => parse_angle(&s).map(Angle).map_err(serde::de::Error::custom),
        }
    }
}

pub fn parse_angle(s: &str) -> std::result::Result<f64, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    let bad = || format!("cannot read `{s}` as an angle");
    let (num, den) = match t.split_once('/') {
        Some((a, b)) => (a, b.parse::<f64>().map_err(|_| bad())?),
        None => (t.as_str(), 1.0),
    };
    let value = match num.strip_suffix("pi").or_else(|| num.strip_suffix('π')) {
        Some(coef) => {
            let coef = coef.trim_end_matches('*');
            let c = match coef {
                "" | "+" => 1.0,
                "-" => -1.0,
                x => x.parse::<f64>().map_err(|_| bad())?,
            };
            c * PI
        }
        None => num.parse::<f64>().map_err(|_| bad())?,
    };
    let v = value / den;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub levels: usize,
    pub alpha_mhz: f64,
    pub decay_ge_khz: f64,
    pub decay_ef_khz: f64,
    pub dephasing_ge_khz: f64,
    pub dephasing_ef_khz: f64,
    /// When set, replaces all four transmon rates.
    pub rates_khz: Option<f64>,
    pub kappa_khz: f64,
    /// Transmon-resonator coupling, the same for both qubits.
    pub g_mhz: f64,
    pub delta_mhz: f64,
    pub placement: ResonatorPlacement,
    pub photon_cutoff: usize,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        DeviceConfig {
            levels: 4,
            alpha_mhz: 400.0,
            decay_ge_khz: 10.0,
            decay_ef_khz: 10.0,
            dephasing_ge_khz: 10.0,
            dephasing_ef_khz: 10.0,
            rates_khz: None,
            kappa_khz: 10.0,
            g_mhz: 65.0,
            delta_mhz: 1000.0,
            placement: ResonatorPlacement::Below,
            photon_cutoff: 3,
        }
    }
}

impl DeviceConfig {
    pub fn transmon(&self) -> TransmonParams {
        let r = |v: f64| khz(self.rates_khz.unwrap_or(v));
        TransmonParams {
            levels: self.levels,
            anharmonicity: mhz(self.alpha_mhz),
            decay_ge: r(self.decay_ge_khz),
            decay_ef: r(self.decay_ef_khz),
            dephasing_ge: r(self.dephasing_ge_khz),
            dephasing_ef: r(self.dephasing_ef_khz),
        }
    }

    pub fn resonator(&self) -> ResonatorParams {
        ResonatorParams {
            photon_cutoff: self.photon_cutoff,
            kappa: khz(self.kappa_khz),
            couplings: vec![mhz(self.g_mhz); 2],
        }
    }

    pub fn detuning(&self) -> DetuningParams {
        DetuningParams { delta: mhz(self.delta_mhz), placement: self.placement }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    SineSquaredRamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingleGateConfig {
    pub theta: Angle,
    pub phi: Angle,
    pub gamma: Angle,
    pub omega_mhz: f64,
    pub shape: ShapeKind,
    pub mode: DriveMode,
    pub steps: usize,
    pub decoherence: bool,
    /// Stem of the trajectory CSV.
    pub panel: String,
}

impl Default for SingleGateConfig {
    fn default() -> Self {
        SingleGateConfig {
            theta: Angle(PI / 2.0),
            phi: Angle(0.0),
            gamma: Angle(PI),
            omega_mhz: 16.0,
            shape: ShapeKind::Square,
            mode: DriveMode::Ideal,
            steps: 20_000,
            decoherence: true,
            panel: "fig2a".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateAverageConfig {
    pub states: usize,
}

impl Default for GateAverageConfig {
    fn default() -> Self {
        GateAverageConfig { states: 1001 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSweepConfig {
    pub epsilons: Vec<f64>,
    pub seeds: usize,
    pub bins: usize,
}

impl Default for NoiseSweepConfig {
    fn default() -> Self {
        NoiseSweepConfig { epsilons: (0..=10).map(|k| 0.02 * k as f64).collect(), seeds: 20, bins: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwoGateConfig {
    pub duration_ns: f64,
    pub vartheta: Angle,
    pub steps: usize,
    pub decoherence: bool,
    pub compensation: bool,
    pub initial: TwoQubitInitial,
    pub grid_max_mhz: f64,
    pub grid_points: usize,
}

impl Default for TwoGateConfig {
    fn default() -> Self {
        TwoGateConfig {
            duration_ns: 40.0,
            vartheta: Angle(PI / 2.0),
            steps: 20_000,
            decoherence: true,
            compensation: true,
            initial: TwoQubitInitial::F0g,
            grid_max_mhz: 450.0,
            grid_points: 46,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub grid_max_mhz: f64,
    pub grid_points: usize,
    /// Weak-drive amplitude where the perturbative variants are compared.
    pub reference_mhz: f64,
    /// Strong-drive amplitude where nonlinearity is measured.
    pub probe_mhz: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { grid_max_mhz: 390.0, grid_points: 40, reference_mhz: 20.0, probe_mhz: 377.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Optional; must agree with the experiment named on the command line.
    pub experiment: Option<Experiment>,
    pub seed: u64,
    pub device: DeviceConfig,
    pub single_gate: SingleGateConfig,
    pub gate_average: GateAverageConfig,
    pub noise_sweep: NoiseSweepConfig,
    pub two_gate: TwoGateConfig,
    pub calibration: CalibrationConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            seed: 0,
            device: DeviceConfig::default(),
            single_gate: SingleGateConfig::default(),
            gate_average: GateAverageConfig::default(),
            noise_sweep: NoiseSweepConfig::default(),
            two_gate: TwoGateConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

fn need(ok: bool, key: &str, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, msg))
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn non_negative(x: f64) -> bool {
    x >= 0.0 && x.is_finite()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        need((3..=5).contains(&d.levels), "device.levels", "must be 3, 4 or 5")?;
        need(positive(d.alpha_mhz), "device.alpha_mhz", "must be positive")?;
        for (k, v) in [
            ("device.decay_ge_khz", d.decay_ge_khz),
            ("device.decay_ef_khz", d.decay_ef_khz),
            ("device.dephasing_ge_khz", d.dephasing_ge_khz),
            ("device.dephasing_ef_khz", d.dephasing_ef_khz),
            ("device.kappa_khz", d.kappa_khz),
            ("device.rates_khz", d.rates_khz.unwrap_or(0.0)),
        ] {
            need(non_negative(v), k, "must be non-negative")?;
        }
        need(positive(d.g_mhz), "device.g_mhz", "must be positive")?;
        need(d.delta_mhz > d.alpha_mhz && d.delta_mhz.is_finite(), "device.delta_mhz", "must exceed alpha_mhz")?;
        need(d.photon_cutoff >= 2, "device.photon_cutoff", "must be at least 2")?;

        let s = &self.single_gate;
        need(s.theta.0.is_finite(), "single_gate.theta", "must be finite")?;
        need(s.phi.0.is_finite(), "single_gate.phi", "must be finite")?;
        need(s.gamma.0.is_finite(), "single_gate.gamma", "must be finite")?;
        need(positive(s.omega_mhz), "single_gate.omega_mhz", "must be positive")?;
        need(s.steps >= 2, "single_gate.steps", "must be at least 2")?;
        need(
            !s.panel.is_empty() && s.panel.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'),
            "single_gate.panel",
            "must be a plain file stem",
        )?;

        need(self.gate_average.states >= 1, "gate_average.states", "must be at least 1")?;

        let n = &self.noise_sweep;
        need(!n.epsilons.is_empty(), "noise_sweep.epsilons", "must not be empty")?;
        need(n.epsilons.iter().all(|e| (0.0..1.0).contains(e)), "noise_sweep.epsilons", "must lie in [0, 1)")?;
        need(n.seeds >= 1, "noise_sweep.seeds", "must be at least 1")?;
        need(n.bins >= 1, "noise_sweep.bins", "must be at least 1")?;

        let t = &self.two_gate;
        need(positive(t.duration_ns), "two_gate.duration_ns", "must be positive")?;
        need((t.vartheta.0 - PI / 2.0).abs() < 1e-12, "two_gate.vartheta", "the full model supports pi/2 only")?;
        need(t.steps >= 2, "two_gate.steps", "must be at least 2")?;
        need(positive(t.grid_max_mhz), "two_gate.grid_max_mhz", "must be positive")?;
        need(t.grid_points >= 3, "two_gate.grid_points", "must be at least 3")?;

        let c = &self.calibration;
        need(positive(c.grid_max_mhz), "calibration.grid_max_mhz", "must be positive")?;
        need(c.grid_points >= 3, "calibration.grid_points", "must be at least 3")?;
        need(
            positive(c.reference_mhz) && c.reference_mhz <= c.grid_max_mhz,
            "calibration.reference_mhz",
            "must lie inside the calibration grid",
        )?;
        need(
            positive(c.probe_mhz) && c.probe_mhz <= c.grid_max_mhz,
            "calibration.probe_mhz",
            "must lie inside the calibration grid",
        )?;
        Ok(())
    }

    pub fn single_gate_spec(&self) -> Result<SingleQubitGateSpec> {
        let s = &self.single_gate;
        SingleQubitGateSpec::new(s.theta.0, s.phi.0, s.gamma.0)
    }

    pub fn single_qubit_setup(&self) -> Result<SingleQubitSetup> {
        let gate = self.single_gate_spec()?;
        let s = &self.single_gate;
        let shape = match s.shape {
            ShapeKind::Square => Shape::Square,
            ShapeKind::SineSquaredRamp => Shape::SineSquaredRamp,
        };
        let transmon = self.device.transmon();
        transmon.validate()?;
        Ok(SingleQubitSetup {
            schedule: build_single_loop_schedule(gate.theta, gate.phi, gate.gamma, mhz(s.omega_mhz), shape)?,
            mode: s.mode,
            transmon,
            decoherence: s.decoherence,
            steps: s.steps,
        })
    }
}

fn snake(key: &str) -> String {
    key.replace('-', "_")
}

fn leaf_paths(v: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            prefix.push(k.clone());
            out.push(prefix.clone());
            leaf_paths(child, prefix, out);
            prefix.pop();
        }
    }
}

fn resolve_key(tree: &Value, key: &str) -> Result<Vec<String>> {
    let key = snake(key);
    if key.contains('.') {
        let path: Vec<String> = key.split('.').map(String::from).collect();
        let mut cur = tree;
        for part in &path {
            cur = cur.get(part).ok_or_else(|| Error::config(&key, "unknown key"))?;
        }
        return Ok(path);
    }
    let mut all = Vec::new();
    leaf_paths(tree, &mut Vec::new(), &mut all);
    let hits: Vec<Vec<String>> = all.into_iter().filter(|p| p.last() == Some(&key)).collect();
    match hits.len() {
        0 => Err(Error::config(&key, "unknown key")),
        1 => Ok(hits.into_iter().next().expect("one hit")),
        _ => Err(Error::config(
            &key,
            format!("ambiguous key; use one of {}", hits.iter().map(|p| p.join(".")).collect::<Vec<_>>().join(", ")),
        )),
    }
}

fn set_path(tree: &mut Value, path: &[String], value: Value) {
    let mut cur = tree;
    for part in &path[..path.len() - 1] {
        cur = cur.get_mut(part).expect("path resolved against this tree");
    }
    cur[path.last().expect("non-empty path")] = value;
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Reads the config file (if any) and applies overrides in order.
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<ExperimentConfig> {
    let base: ExperimentConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::config("--config", e.to_string()))?
        }
        None => ExperimentConfig::default(),
    };
    let mut tree = serde_json::to_value(&base)?;
    for (key, raw) in overrides {
        let path = resolve_key(&tree, key)?;
        set_path(&mut tree, &path, parse_value(raw));
        serde_json::from_value::<ExperimentConfig>(tree.clone())
            .map_err(|e| Error::config(path.join("."), e.to_string()))?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(tree)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub headline: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
    pub calibration_cache_hit: Option<bool>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub cache_dir: PathBuf,
    pub threads: Option<usize>,
}

impl RunOptions {
    /// Cache directory from `HOLOSIM_CACHE`, else `<out>/cache`.
    pub fn new(out: impl Into<PathBuf>) -> Self {
        let out = out.into();
        let cache_dir = std::env::var_os(CACHE_ENV).map(PathBuf::from).unwrap_or_else(|| out.join("cache"));
        RunOptions { out, cache_dir, threads: None }
    }
}

/// Formats a value with 12 significant digits.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

struct Artifacts<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn table(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let file = format!("{name}.csv");
        let mut w = csv::Writer::from_path(self.dir.join(&file))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        self.files.push(file);
        Ok(())
    }

    fn trajectory(&mut self, name: &str, traj: &Trajectory, store_every: usize) -> Result<()> {
        let mut header = vec!["t_ns"];
        header.extend(traj.observable_names.iter().map(String::as_str));
        let last = traj.observable_times.len() - 1;
        let rows = (0..=last).filter(|&i| i % store_every == 0 || i == last).map(|i| {
            let mut r = vec![fmt12(to_ns(traj.observable_times[i]))];
            r.extend(traj.observables.iter().map(|s| fmt12(s[i])));
            r
        });
        self.table(name, &header, rows)
    }
}

#[derive(Serialize)]
struct CalibrationKey<'a> {
    model: &'a str,
    levels: usize,
    photon_cutoff: usize,
    alpha_mhz: f64,
    g_mhz: f64,
    delta_mhz: f64,
    placement: ResonatorPlacement,
    grid_max_mhz: f64,
    grid_points: usize,
}

fn single_transmon_curve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(JcModel, CalibrationCurve, bool)> {
    let d = &cfg.device;
    let model = JcModel::new(d.transmon(), d.photon_cutoff, mhz(d.g_mhz), d.detuning())?;
    let c = &cfg.calibration;
    let key = content_hash(&CalibrationKey {
        model: "single_transmon",
        levels: d.levels,
        photon_cutoff: d.photon_cutoff,
        alpha_mhz: d.alpha_mhz,
        g_mhz: d.g_mhz,
        delta_mhz: d.delta_mhz,
        placement: d.placement,
        grid_max_mhz: c.grid_max_mhz,
        grid_points: c.grid_points,
    })?;
    let grid = uniform_grid(mhz(c.grid_max_mhz), c.grid_points);
    let (curve, hit) = cached_curve(&opts.cache_dir, &key, || calibrate_omega(&model, &grid))?;
    Ok((model, curve, hit))
}

fn two_qubit_curve(cfg: &ExperimentConfig, model: &TwoQubitModel, opts: &RunOptions) -> Result<(CalibrationCurve, bool)> {
    let d = &cfg.device;
    let t = &cfg.two_gate;
    let key = content_hash(&CalibrationKey {
        model: "two_qubit_dark_centred",
        levels: d.levels,
        photon_cutoff: d.photon_cutoff,
        alpha_mhz: d.alpha_mhz,
        g_mhz: d.g_mhz,
        delta_mhz: d.delta_mhz,
        placement: d.placement,
        grid_max_mhz: t.grid_max_mhz,
        grid_points: t.grid_points,
    })?;
    let grid = uniform_grid(mhz(t.grid_max_mhz), t.grid_points);
    cached_curve(&opts.cache_dir, &key, || calibrate_two_qubit(model, &grid))
}

fn run_inner(
    experiment: Experiment,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    art: &mut Artifacts,
    headline: &mut BTreeMap<String, f64>,
) -> Result<Option<bool>> {
    match experiment {
        Experiment::SingleGate => {
            let setup = cfg.single_qubit_setup()?;
            let gate = cfg.single_gate_spec()?;
            let psi0 = setup.qubit_ket(1.0.into(), 0.0.into());
            let run = single_qubit_gate_run(&setup, &gate, &psi0)?;
            art.trajectory(&cfg.single_gate.panel, &run.trajectory, setup.options().store_every)?;
            let f = *run.trajectory.series("F").and_then(|s| s.last()).expect("F observable recorded");
            headline.insert("fidelity".into(), f);
            headline.insert("duration_ns".into(), to_ns(setup.schedule.duration()));
            Ok(None)
        }
        Experiment::GateAverage => {
            let setup = cfg.single_qubit_setup()?;
            let gate = cfg.single_gate_spec()?;
            let avg = gate_fidelity_average(&setup, &gate, cfg.gate_average.states)?;
            let rows = avg.per_state.iter().enumerate().map(|(k, (th, f))| vec![k.to_string(), fmt12(*th), fmt12(*f)]);
            art.table("fig2c", &["state_index", "theta_prime", "F"], rows)?;
            headline.insert("mean_fidelity".into(), avg.mean);
            headline.insert("min_fidelity".into(), avg.per_state.iter().map(|p| p.1).fold(f64::INFINITY, f64::min));
            Ok(None)
        }
        Experiment::NoiseSweep => {
            let setup = cfg.single_qubit_setup()?;
            let gate = cfg.single_gate_spec()?;
            let n = &cfg.noise_sweep;
            let seeds: Vec<u64> = (0..n.seeds as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
            let pts = noise_robustness_sweep(&setup, &gate, &n.epsilons, &seeds, n.bins)?;
            let rows = pts.iter().map(|p| vec![fmt12(p.epsilon), fmt12(p.mean), fmt12(p.stderr)]);
            art.table("fig2d", &["epsilon", "mean_F", "stderr"], rows)?;
            let last = pts.last().expect("epsilons validated non-empty");
            headline.insert("max_epsilon".into(), last.epsilon);
            headline.insert("mean_fidelity_at_max_epsilon".into(), last.mean);
            headline.insert("min_mean_fidelity".into(), pts.iter().map(|p| p.mean).fold(f64::INFINITY, f64::min));
            Ok(None)
        }
        Experiment::TwoGate => {
            let d = &cfg.device;
            let t = &cfg.two_gate;
            let model = TwoQubitModel::new(d.transmon(), d.resonator(), d.detuning())?;
            let schedule = TwoQubitSchedule::new(t.vartheta.0, ns(t.duration_ns))?;
            let (curve, hit) = if t.compensation {
                let (c, h) = two_qubit_curve(cfg, &model, opts)?;
                (Some(c), Some(h))
            } else {
                (None, None)
            };
            let ro = TwoQubitOptions {
                decoherence: t.decoherence,
                steps: t.steps,
                initial: t.initial,
                allow_uncompensated: !t.compensation,
                store_every: 50,
            };
            let out = two_qubit_gate_run(&model, &schedule, curve.as_ref(), &ro)?;
            art.trajectory("fig3", &out.trajectory, ro.store_every)?;
            if let Some(c) = &curve {
                let track = compensation_track(c, &schedule, 401)?;
                let rows = track.iter().map(|s| {
                    vec![fmt12(to_ns(s.time)), fmt12(to_mhz(s.coupling)), fmt12(to_mhz(s.omega)), fmt12(to_mhz(s.shift))]
                });
                art.table("compensation_track", &["t_ns", "g_eff_MHz", "omega_MHz", "delta_s_MHz"], rows)?;
            }
            let f = *out.trajectory.series("F").and_then(|s| s.last()).expect("F observable recorded");
            headline.insert("fidelity".into(), f);
            headline.insert("back_population".into(), out.back_population);
            headline.insert("resonator_population".into(), out.resonator_population);
            Ok(hit)
        }
        Experiment::Calibrate => {
            let (_, curve, hit) = single_transmon_curve(cfg, opts)?;
            let pts = curve.points();
            let rows = pts.iter().map(|p| vec![fmt12(to_mhz(p.omega)), fmt12(to_mhz(p.shift))]);
            art.table("fig4", &["omega_MHz", "delta_s_MHz"], rows)?;
            curve.write_csv(&art.dir.join("calibration.csv"))?;
            art.files.push("calibration.csv".into());
            headline.insert("delta_s_at_zero_mhz".into(), to_mhz(pts[0].shift));
            headline.insert("delta_s_at_max_mhz".into(), to_mhz(pts[pts.len() - 1].shift));
            Ok(Some(hit))
        }
        Experiment::CouplingScan => {
            let (model, curve, hit) = single_transmon_curve(cfg, opts)?;
            let c = &cfg.calibration;
            let alpha = model.transmon.anharmonicity;
            let dsig = model.detuning.signed(alpha);
            let (om_ref, om_probe) = (mhz(c.reference_mhz), mhz(c.probe_mhz));
            let slope = curve.coupling_at(om_ref)? / om_ref;
            let mut omegas: Vec<f64> = curve.points().iter().map(|p| p.omega).collect();
            omegas.extend([om_ref, om_probe]);
            omegas.sort_by(f64::total_cmp);
            omegas.dedup();
            let mut rows = Vec::new();
            let mut at = BTreeMap::new();
            for &om in &omegas {
                let num = curve.coupling_at(om)?;
                let app = perturbative_coupling(model.coupling, om, dsig, alpha, FormulaVariant::PlusAlpha)?.magnitude;
                let main = perturbative_coupling(model.coupling, om, dsig, alpha, FormulaVariant::MinusAlpha)?.magnitude;
                let lin = slope * om;
                let rel = |x: f64| if x > 0.0 { (num - x).abs() / x } else { 0.0 };
                let vals = [to_mhz(om), to_mhz(num), to_mhz(app), to_mhz(main), to_mhz(lin), rel(app), rel(main), rel(lin)];
                at.insert(om.to_bits(), vals);
                rows.push(vals.iter().map(|v| fmt12(*v)).collect());
            }
            art.table(
                "fig5",
                &[
                    "omega_MHz",
                    "g_numeric_MHz",
                    "g_perturbative_MHz",
                    "g_minus_alpha_MHz",
                    "g_linear_MHz",
                    "perturbative_rel_dev",
                    "minus_alpha_rel_dev",
                    "linear_rel_dev",
                ],
                rows,
            )?;
            let r = at[&om_ref.to_bits()];
            let p = at[&om_probe.to_bits()];
            headline.insert("perturbative_rel_dev_at_reference".into(), r[5]);
            headline.insert("minus_alpha_rel_dev_at_reference".into(), r[6]);
            headline.insert("nonlinearity_at_probe".into(), p[7]);
            Ok(Some(hit))
        }
    }
}

/// Runs one experiment, writing CSV tables, `headline.csv` and finally
/// `summary.json` into `opts.out`.
pub fn run(experiment: Experiment, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ResultRecord> {
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(Error::config("experiment", format!("config is for `{}`", e.name())));
        }
    }
    cfg.validate()?;
    let started = Instant::now();
    let config_hash = content_hash(&(experiment, cfg))?;
    fs::create_dir_all(&opts.out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("--threads", e.to_string()))?;
    let mut art = Artifacts { dir: &opts.out, files: Vec::new() };
    let mut headline = BTreeMap::new();
    let hit = pool.install(|| run_inner(experiment, cfg, opts, &mut art, &mut headline))?;
    let rows = headline.iter().map(|(k, v)| vec![k.clone(), fmt12(*v)]);
    art.table("headline", &["name", "value"], rows)?;
    let record = ResultRecord {
        experiment,
        config_hash,
        seed: cfg.seed,
        headline,
        artifacts: art.files,
        calibration_cache_hit: hit,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    fs::write(opts.out.join("summary.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

#[derive(Debug, Parser)]
#[command(name = "holosim", version, about = "Holonomic-gate simulator and calibration toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        experiment: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config value, e.g. `--set device.g_mhz=70`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Further overrides written as `--key value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        extra: Vec<String>,
    },
}

fn split_set(s: &str) -> Result<(String, String)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::config(s, "expected KEY=VALUE"))
}

/// Parses the CLI, runs the experiment and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match execute(cli) {
        Ok(record) => {
            println!("{}", serde_json::to_string_pretty(&record).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("holosim: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<ResultRecord> {
    let Command::Run { experiment, mut config, sets, mut out, mut seed, mut threads, extra } = cli.command;
    let mut overrides = sets.iter().map(|s| split_set(s)).collect::<Result<Vec<_>>>()?;
    let mut it = extra.into_iter();
    while let Some(flag) = it.next() {
        let body = flag.strip_prefix("--").ok_or_else(|| Error::config(&flag, "unexpected argument"))?;
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| Error::config(body, "missing value"))?;
                (body.to_string(), v)
            }
        };
        let num = |v: &str| v.parse::<u64>().map_err(|_| Error::config(&key, "expected a non-negative integer"));
        match key.as_str() {
            "config" => config = Some(PathBuf::from(value)),
            "out" => out = PathBuf::from(value),
            "seed" => seed = Some(num(&value)?),
            "threads" => threads = Some(num(&value)? as usize),
            "set" => overrides.push(split_set(&value)?),
            _ => overrides.push((key, value)),
        }
    }
    let mut cfg = load_config(config.as_deref(), &overrides)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut opts = RunOptions::new(out);
    opts.threads = threads;
    run(experiment, &cfg, &opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        for (s, v) in [
            ("pi", PI),
            ("pi/2", PI / 2.0),
            ("-pi/4", -PI / 4.0),
            ("3pi/4", 0.75 * PI),
            ("0.5*pi", 0.5 * PI),
            ("2 * pi / 3", 2.0 * PI / 3.0),
            ("1.25", 1.25),
            ("π", PI),
        ] {
            assert!((parse_angle(s).unwrap() - v).abs() < 1e-15, "{s}");
        }
        assert!(parse_angle("tau").is_err());
        assert!(parse_angle("pi/0").is_err());
    }

    #[test]
    fn overrides_resolve_leaf_and_path_keys() {
        let sets = vec![
            ("gamma".to_string(), "pi/2".to_string()),
            ("omega-mhz".to_string(), "12".to_string()),
            ("device.g_mhz".to_string(), "70".to_string()),
            ("rates_khz".to_string(), "5".to_string()),
        ];
        let c = load_config(None, &sets).unwrap();
        assert!((c.single_gate.gamma.0 - PI / 2.0).abs() < 1e-15);
        assert_eq!(c.single_gate.omega_mhz, 12.0);
        assert_eq!(c.device.g_mhz, 70.0);
        assert!((c.device.transmon().decay_ge - khz(5.0)).abs() < 1e-9);
    }

    #[test]
    fn bad_keys_are_config_errors() {
        let e = load_config(None, &[("omega_mhzz".into(), "1".into())]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("omega_mhzz"));
        let e = load_config(None, &[("grid_max_mhz".into(), "1".into())]).unwrap_err();
        assert!(e.to_string().contains("ambiguous"));
        let e = load_config(None, &[("device.levels".into(), "\"four\"".into())]).unwrap_err();
        assert!(e.to_string().contains("device.levels"));
        let e = load_config(None, &[("levels".into(), "9".into())]).unwrap_err();
        assert!(e.to_string().contains("device.levels"));
    }

    #[test]
    fn misspelled_file_key_fails() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"device": {"g_mhzz": 60}}"#).unwrap();
        let e = load_config(Some(&p), &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("g_mhzz"));
    }

    #[test]
    fn hash_ignores_angle_spelling() {
        let a = load_config(None, &[("theta".into(), "pi/2".into())]).unwrap();
        let b = load_config(None, &[("theta".into(), format!("{}", PI / 2.0))]).unwrap();
        assert_eq!(content_hash(&a).unwrap(), content_hash(&b).unwrap());
    }

    #[test]
    fn default_config_round_trips() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }
}
