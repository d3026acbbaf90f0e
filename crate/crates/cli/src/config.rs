//! Run configuration: a TOML document with one table per module, bare-key
//! overrides, and conversion into the core types.
//!
//! All quantities are SI (seconds, volts, farads, ohms, joules, watts);
//! `ke` is volts per RPM.

use std::fs;
use std::path::{Path, PathBuf};

use kinesim_core::drivetrain::{
    fit_generator, parse_generator_catalog, train_ratio, GearTrain, GeneratorModel, PowerAnchor,
};
use kinesim_core::motion::{ActuationDistribution, ProfileShape, DEFAULT_OPEN_THRESHOLD_DEG};
use kinesim_core::powerpath::{PowerPathConfig, DEFAULT_DT};
use kinesim_core::sim::{DeploymentConfig, DrivetrainConfig, EventSource, DEFAULT_DEBOUNCE_S};
use kinesim_core::sizing::{ChargingModel, SizingSpec};
use kinesim_core::transaction::{
    calibrate_radio, transaction_energy, EnergyReference, LoRaConfig, RadioEnergyModel, Variant, WorkloadPhase,
    WorkloadSpec,
};
use serde::Deserialize;
use toml::{Table, Value};

use crate::error::{CliError, CliResult};

pub const PRESET_PREFIX: &str = "preset:";

pub const PRESETS: [(&str, &str); 3] = [
    ("paper-bin", include_str!("../presets/paper-bin.cfg")),
    ("paper-door", include_str!("../presets/paper-door.cfg")),
    ("paper-cabinet", include_str!("../presets/paper-cabinet.cfg")),
];

/// Generator catalog used when a config names `catalog` without a
/// `catalog_file`.
pub const BUNDLED_CATALOG: &str = include_str!("../presets/generators.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Str,
}

impl Kind {
    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Float | Kind::Int)
    }
}

/// A key accepted by `--override` and `sweep --param`.
#[derive(Debug, Clone, Copy)]
pub struct OverrideKey {
    pub key: &'static str,
    pub path: &'static [&'static str],
    pub kind: Kind,
    /// Sibling entries removed when this key is set, so that e.g. setting
    /// `ke` replaces a fitted or catalog generator.
    pub clears: &'static [&'static str],
    pub help: &'static str,
}

const fn key(key: &'static str, path: &'static [&'static str], kind: Kind, help: &'static str) -> OverrideKey {
    OverrideKey { key, path, kind, clears: &[], help }
}

pub const OVERRIDE_KEYS: &[OverrideKey] = &[
    key("label", &["label"], Kind::Str, "report label"),
    key("seed", &["seed"], Kind::Int, "root seed"),
    key("angle_mean", &["motion", "angle_mean"], Kind::Float, "mean opening angle, degrees"),
    key("angle_cv", &["motion", "angle_cv"], Kind::Float, "opening angle coefficient of variation"),
    key("open_duration_mean", &["motion", "open_duration_mean"], Kind::Float, "mean opening stroke, s"),
    key("open_duration_cv", &["motion", "open_duration_cv"], Kind::Float, "opening stroke cv"),
    key("close_duration_mean", &["motion", "close_duration_mean"], Kind::Float, "mean closing stroke, s"),
    key("close_duration_cv", &["motion", "close_duration_cv"], Kind::Float, "closing stroke cv"),
    key("partial_probability", &["motion", "partial_probability"], Kind::Float, "share of partial actuations"),
    key("partial_angle_min", &["motion", "partial_angle_min"], Kind::Float, "partial angle lower bound, degrees"),
    key("partial_angle_max", &["motion", "partial_angle_max"], Kind::Float, "partial angle upper bound, degrees"),
    key("inter_arrival_mean", &["motion", "inter_arrival_mean"], Kind::Float, "mean gap between actuations, s"),
    key("profile_shape", &["motion", "profile_shape"], Kind::Str, "half_sine, trapezoid or constant"),
    key("open_threshold", &["motion", "open_threshold"], Kind::Float, "trace segmentation threshold, degrees"),
    OverrideKey {
        key: "gear_ratio",
        path: &["drivetrain", "gear_ratio"],
        kind: Kind::Float,
        clears: &["gear_stages"],
        help: "generator over hinge speed (replaces gear_stages)",
    },
    OverrideKey {
        key: "ke",
        path: &["drivetrain", "generator", "ke"],
        kind: Kind::Float,
        clears: &["anchors", "catalog", "catalog_file"],
        help: "back-EMF constant, V/RPM (replaces anchors or catalog)",
    },
    key("r_internal", &["drivetrain", "generator", "r_internal"], Kind::Float, "winding resistance, ohm"),
    key("rated_voltage", &["drivetrain", "generator", "rated_voltage"], Kind::Float, "generator rated voltage"),
    key("capacitance", &["powerpath", "capacitance"], Kind::Float, "buffer capacitance, F"),
    key("cap_rating", &["powerpath", "cap_rating"], Kind::Float, "capacitor voltage rating"),
    key("rectifier_drop", &["powerpath", "rectifier_drop"], Kind::Float, "bridge drop, V"),
    key("converter_cutoff", &["powerpath", "converter_cutoff"], Kind::Float, "converter minimum input, V"),
    key("wake_threshold", &["powerpath", "wake_threshold"], Kind::Float, "voltage that releases the gate"),
    key("converter_efficiency", &["powerpath", "converter_efficiency"], Kind::Float, "buck efficiency"),
    key("leakage_tau", &["powerpath", "leakage_tau"], Kind::Float, "self-discharge time constant, s"),
    key("coupling_efficiency", &["powerpath", "coupling_efficiency"], Kind::Float, "charging current factor"),
    key("step_up_ratio", &["powerpath", "step_up_ratio"], Kind::Float, "generator-side voltage step-up"),
    key("variant", &["transaction", "variant"], Kind::Str, "bin_sf10, door_sf6, cabinet_sf6, cabinet_dual"),
    key("energy_reference", &["transaction", "energy_reference"], Kind::Str, "capacitor or rail"),
    OverrideKey {
        key: "tx_power",
        path: &["transaction", "tx_power"],
        kind: Kind::Float,
        clears: &["tx_energy_target"],
        help: "radio draw while transmitting, W",
    },
    OverrideKey {
        key: "tx_energy_target",
        path: &["transaction", "tx_energy_target"],
        kind: Kind::Float,
        clears: &["tx_power"],
        help: "transmit energy on the calibration radio, J",
    },
    key("spreading_factor", &["transaction", "radio", "spreading_factor"], Kind::Int, "LoRa SF, 6 to 12"),
    key("bandwidth", &["transaction", "radio", "bandwidth"], Kind::Int, "LoRa bandwidth, Hz"),
    key("coding_rate", &["transaction", "radio", "coding_rate"], Kind::Int, "1-4 or 5-8 for 4/5..4/8"),
    key("preamble_symbols", &["transaction", "radio", "preamble_symbols"], Kind::Int, "preamble length"),
    key("payload_bytes", &["transaction", "radio", "payload_bytes"], Kind::Int, "payload length"),
    key("explicit_header", &["transaction", "radio", "explicit_header"], Kind::Bool, "explicit LoRa header"),
    key("crc_on", &["transaction", "radio", "crc_on"], Kind::Bool, "payload CRC"),
    key("low_data_rate_optimize", &["transaction", "radio", "low_data_rate_optimize"], Kind::Bool, "LDRO"),
    key("tx_power_dbm", &["transaction", "radio", "tx_power_dbm"], Kind::Float, "nominal output power, dBm"),
    key("events", &["sim", "events"], Kind::Int, "sampled actuation count"),
    key("channel_loss_probability", &["sim", "channel_loss_probability"], Kind::Float, "packet loss probability"),
    key("debounce_window", &["sim", "debounce_window"], Kind::Float, "re-trigger window, s"),
    key("initial_voltage", &["sim", "initial_voltage"], Kind::Float, "capacitor voltage at start"),
    key("dt", &["sim", "dt"], Kind::Float, "integration step, s"),
    key("transaction_energy", &["sizing", "transaction_energy"], Kind::Float, "energy to size for, J"),
    key("harvest_window", &["sizing", "harvest_window"], Kind::Float, "time to harvest it in, s"),
    key("hinge_rpm_min", &["sizing", "hinge_rpm_min"], Kind::Float, "slowest hinge speed, RPM"),
    key("hinge_rpm_max", &["sizing", "hinge_rpm_max"], Kind::Float, "fastest hinge speed, RPM"),
    key("hinge_rpm_reference", &["sizing", "hinge_rpm_reference"], Kind::Float, "design hinge speed, RPM"),
    key("load_reference", &["sizing", "load_reference"], Kind::Float, "power-matching load, ohm"),
    key("headroom_fraction", &["sizing", "headroom_fraction"], Kind::Float, "share of cap rating usable"),
    key("margin_samples", &["sizing", "margin_samples"], Kind::Int, "Monte Carlo margin draws"),
];

pub fn lookup_key(name: &str) -> CliResult<&'static OverrideKey> {
    OVERRIDE_KEYS.iter().find(|k| k.key == name).ok_or_else(|| {
        let valid: Vec<&str> = OVERRIDE_KEYS.iter().map(|k| k.key).collect();
        CliError::usage(format!("unknown key `{name}`; valid keys: {}", valid.join(", ")))
    })
}

/// Help text listing every override key.
pub fn override_help() -> String {
    let mut s = String::from("Override keys (--override key=value, sweep --param key):\n");
    for k in OVERRIDE_KEYS {
        s.push_str(&format!("  {:<26}{}\n", k.key, k.help));
    }
    s
}

/// A parsed but not yet validated config document.
#[derive(Debug, Clone)]
pub struct Document {
    table: Table,
    base_dir: PathBuf,
}

impl Document {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let table: Table = text.parse().map_err(|e| CliError::usage(format!("config: {e}")))?;
        Ok(Self { table, base_dir: base_dir.into() })
    }

    /// Reads a config file, or a bundled preset named `preset:<name>`.
    pub fn load(path: &str) -> CliResult<Self> {
        if let Some(name) = path.strip_prefix(PRESET_PREFIX) {
            let text = PRESETS
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| *t)
                .ok_or_else(|| CliError::usage(format!("unknown preset `{name}`")))?;
            return Self::parse(text, ".");
        }
        let p = Path::new(path);
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let dir = p.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, dir).map_err(|e| CliError::usage(format!("{path}: {e}")))
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.table.contains_key(name)
    }

    pub fn set(&mut self, key: &OverrideKey, value: Value) {
        let (last, parents) = key.path.split_last().expect("paths are non-empty");
        let mut table = &mut self.table;
        for p in parents {
            table = table
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .expect("override parents are tables");
        }
        for c in key.clears {
            table.remove(*c);
        }
        table.insert(last.to_string(), value);
    }

    /// Applies `key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> CliResult<()> {
        let (name, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("override `{assignment}` is not key=value")))?;
        let key = lookup_key(name.trim())?;
        let raw = raw.trim();
        let bad = || CliError::usage(format!("override {}: `{raw}` is not a valid {:?}", key.key, key.kind));
        let value = match key.kind {
            Kind::Float => Value::Float(raw.parse().map_err(|_| bad())?),
            Kind::Int => Value::Integer(raw.parse().map_err(|_| bad())?),
            Kind::Bool => Value::Boolean(raw.parse().map_err(|_| bad())?),
            Kind::Str => Value::String(raw.to_string()),
        };
        self.set(key, value);
        Ok(())
    }

    /// Sets a numeric key for a sweep point.
    pub fn set_numeric(&mut self, key: &OverrideKey, value: f64) -> CliResult<()> {
        let v = match key.kind {
            Kind::Float => Value::Float(value),
            Kind::Int => Value::Integer(value.round() as i64),
            _ => return Err(CliError::usage(format!("`{}` is not numeric", key.key))),
        };
        self.set(key, v);
        Ok(())
    }

    pub fn build(&self) -> CliResult<RunConfig> {
        let raw: RawConfig = Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::usage(format!("config: {}", e.message())))?;
        raw.into_run_config(&self.base_dir)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub per_event: bool,
}

/// A validated run configuration. The deployment seed is left at zero;
/// callers resolve the seed with [`resolve_seed`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub seed: Option<u64>,
    pub deployment: DeploymentConfig,
    pub open_threshold: f64,
    pub sizing: Option<SizingSpec>,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn sizing_spec(&self, seed: u64) -> CliResult<SizingSpec> {
        let spec = self.sizing.ok_or_else(|| CliError::usage("config has no [sizing] block"))?;
        Ok(SizingSpec { seed, ..spec })
    }
}

pub const SEED_ENV: &str = "KINESIM_SEED";

/// Flag, then config, then the environment, then zero.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> CliResult<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse().map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not a seed"))),
        None => Ok(0),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    label: String,
    seed: Option<u64>,
    #[serde(default)]
    motion: RawMotion,
    drivetrain: RawDrivetrain,
    #[serde(default)]
    powerpath: RawPowerPath,
    transaction: RawTransaction,
    #[serde(default)]
    sim: RawSim,
    sizing: Option<RawSizing>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawMotion {
    angle_mean: f64,
    angle_cv: f64,
    open_duration_mean: f64,
    open_duration_cv: f64,
    close_duration_mean: f64,
    close_duration_cv: f64,
    partial_probability: f64,
    partial_angle_min: f64,
    partial_angle_max: f64,
    inter_arrival_mean: f64,
    profile_shape: String,
    open_threshold: f64,
}

impl Default for RawMotion {
    fn default() -> Self {
        let d = ActuationDistribution::default();
        Self {
            angle_mean: d.angle_mean_deg,
            angle_cv: d.angle_cv,
            open_duration_mean: d.open_duration_mean_s,
            open_duration_cv: d.open_duration_cv,
            close_duration_mean: d.close_duration_mean_s,
            close_duration_cv: d.close_duration_cv,
            partial_probability: d.partial_probability,
            partial_angle_min: d.partial_angle_range_deg.0,
            partial_angle_max: d.partial_angle_range_deg.1,
            inter_arrival_mean: d.inter_arrival_mean_s,
            profile_shape: "half_sine".into(),
            open_threshold: DEFAULT_OPEN_THRESHOLD_DEG,
        }
    }
}

impl RawMotion {
    fn distribution(&self) -> ActuationDistribution {
        ActuationDistribution {
            angle_mean_deg: self.angle_mean,
            angle_cv: self.angle_cv,
            open_duration_mean_s: self.open_duration_mean,
            open_duration_cv: self.open_duration_cv,
            close_duration_mean_s: self.close_duration_mean,
            close_duration_cv: self.close_duration_cv,
            partial_probability: self.partial_probability,
            partial_angle_range_deg: (self.partial_angle_min, self.partial_angle_max),
            inter_arrival_mean_s: self.inter_arrival_mean,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrivetrain {
    gear_ratio: Option<f64>,
    gear_stages: Option<Vec<(u32, u32)>>,
    generator: RawGenerator,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    #[serde(default = "default_rated_voltage")]
    rated_voltage: f64,
    r_internal: Option<f64>,
    anchors: Option<Vec<PowerAnchor>>,
    ke: Option<f64>,
    catalog: Option<String>,
    catalog_file: Option<PathBuf>,
}

fn default_rated_voltage() -> f64 {
    24.0
}

impl RawGenerator {
    fn build(&self, base_dir: &Path) -> CliResult<GeneratorModel> {
        let r = self.r_internal.unwrap_or(kinesim_core::drivetrain::DEFAULT_R_INTERNAL);
        let chosen = [self.anchors.is_some(), self.ke.is_some(), self.catalog.is_some()];
        if chosen.iter().filter(|c| **c).count() != 1 {
            return Err(CliError::usage("[drivetrain.generator] needs exactly one of anchors, ke or catalog"));
        }
        if self.catalog_file.is_some() && self.catalog.is_none() {
            return Err(CliError::usage("catalog_file given without catalog"));
        }
        if let Some(anchors) = &self.anchors {
            return Ok(fit_generator(anchors, r, self.rated_voltage)?);
        }
        if let Some(ke) = self.ke {
            return Ok(GeneratorModel::new(ke, r, self.rated_voltage)?);
        }
        let name = self.catalog.as_deref().expect("checked above");
        let (text, origin) = match &self.catalog_file {
            Some(file) => {
                let path = base_dir.join(file);
                (fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?, path.display().to_string())
            }
            None => (BUNDLED_CATALOG.to_string(), "bundled catalog".to_string()),
        };
        let entries = parse_generator_catalog(&text).map_err(|e| CliError::usage(format!("{origin}: {e}")))?;
        let entry = entries
            .into_iter()
            .find(|e| e.name == name)
            .ok_or_else(|| CliError::usage(format!("generator `{name}` not in {origin}")))?;
        let mut g = entry.generator;
        if let Some(r) = self.r_internal {
            g.r_internal = r;
        }
        g.validate()?;
        Ok(g)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawPowerPath {
    capacitance: f64,
    cap_rating: f64,
    rectifier_drop: f64,
    converter_cutoff: f64,
    wake_threshold: f64,
    converter_efficiency: f64,
    leakage_tau: f64,
    coupling_efficiency: f64,
    step_up_ratio: f64,
}

impl Default for RawPowerPath {
    fn default() -> Self {
        let p = PowerPathConfig::default();
        Self {
            capacitance: p.capacitance,
            cap_rating: p.cap_rating,
            rectifier_drop: p.rectifier_drop,
            converter_cutoff: p.converter_cutoff,
            wake_threshold: p.wake_threshold,
            converter_efficiency: p.converter_efficiency,
            leakage_tau: p.leakage_tau,
            coupling_efficiency: p.coupling_efficiency,
            step_up_ratio: p.step_up_ratio,
        }
    }
}

impl From<&RawPowerPath> for PowerPathConfig {
    fn from(r: &RawPowerPath) -> Self {
        PowerPathConfig {
            capacitance: r.capacitance,
            cap_rating: r.cap_rating,
            rectifier_drop: r.rectifier_drop,
            converter_cutoff: r.converter_cutoff,
            wake_threshold: r.wake_threshold,
            converter_efficiency: r.converter_efficiency,
            leakage_tau: r.leakage_tau,
            coupling_efficiency: r.coupling_efficiency,
            step_up_ratio: r.step_up_ratio,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransaction {
    variant: String,
    #[serde(default = "default_reference")]
    energy_reference: String,
    phases: Vec<RawPhase>,
    tx_power: Option<f64>,
    tx_energy_target: Option<f64>,
    #[serde(default)]
    radio: RawRadio,
    calibration_radio: Option<RawRadio>,
}

fn default_reference() -> String {
    "capacitor".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    name: String,
    energy: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    spreading_factor: Option<u8>,
    bandwidth: Option<u32>,
    coding_rate: Option<u8>,
    preamble_symbols: Option<u16>,
    payload_bytes: Option<u16>,
    explicit_header: Option<bool>,
    crc_on: Option<bool>,
    low_data_rate_optimize: Option<bool>,
    tx_power_dbm: Option<f64>,
}

/// Accepts the coding rate as 1..=4 or as the 4/x denominator 5..=8.
pub fn normalize_coding_rate(cr: u8) -> CliResult<u8> {
    match cr {
        1..=4 => Ok(cr),
        5..=8 => Ok(cr - 4),
        _ => Err(CliError::usage(format!("coding rate {cr} is neither 1-4 nor 5-8"))),
    }
}

impl RawRadio {
    fn build(&self, base: LoRaConfig) -> CliResult<LoRaConfig> {
        let cfg = LoRaConfig {
            spreading_factor: self.spreading_factor.unwrap_or(base.spreading_factor),
            bandwidth: self.bandwidth.unwrap_or(base.bandwidth),
            coding_rate: normalize_coding_rate(self.coding_rate.unwrap_or(base.coding_rate))?,
            preamble_symbols: self.preamble_symbols.unwrap_or(base.preamble_symbols),
            payload_bytes: self.payload_bytes.unwrap_or(base.payload_bytes),
            explicit_header: self.explicit_header.unwrap_or(base.explicit_header),
            crc_on: self.crc_on.unwrap_or(base.crc_on),
            low_data_rate_optimize: self.low_data_rate_optimize.unwrap_or(base.low_data_rate_optimize),
            tx_power_dbm: self.tx_power_dbm.unwrap_or(base.tx_power_dbm),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSim {
    events: usize,
    channel_loss_probability: f64,
    debounce_window: f64,
    initial_voltage: f64,
    dt: f64,
}

impl Default for RawSim {
    fn default() -> Self {
        Self {
            events: 1000,
            channel_loss_probability: 0.0,
            debounce_window: DEFAULT_DEBOUNCE_S,
            initial_voltage: 0.0,
            dt: DEFAULT_DT,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSizing {
    transaction_energy: Option<f64>,
    harvest_window: Option<f64>,
    hinge_rpm_min: f64,
    hinge_rpm_max: f64,
    hinge_rpm_reference: f64,
    #[serde(default = "default_load")]
    load_reference: f64,
    #[serde(default = "default_headroom")]
    headroom_fraction: f64,
    #[serde(default = "default_margin_samples")]
    margin_samples: usize,
}

fn default_load() -> f64 {
    470.0
}

fn default_headroom() -> f64 {
    0.5
}

fn default_margin_samples() -> usize {
    2000
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    #[serde(default)]
    per_event: bool,
}

fn parse_reference(s: &str) -> CliResult<EnergyReference> {
    match s {
        "capacitor" => Ok(EnergyReference::Capacitor),
        "rail" => Ok(EnergyReference::Rail),
        other => Err(CliError::usage(format!("energy_reference `{other}` is neither capacitor nor rail"))),
    }
}

impl RawConfig {
    fn into_run_config(self, base_dir: &Path) -> CliResult<RunConfig> {
        let distribution = self.motion.distribution();
        let profile_shape: ProfileShape = self.motion.profile_shape.parse()?;

        let d = &self.drivetrain;
        let gear_ratio = match (&d.gear_ratio, &d.gear_stages) {
            (Some(r), None) => *r,
            (None, Some(stages)) => train_ratio(&GearTrain::new(stages.clone())?),
            _ => return Err(CliError::usage("[drivetrain] needs exactly one of gear_ratio or gear_stages")),
        };
        let generator = d.generator.build(base_dir)?;

        let t = &self.transaction;
        let variant: Variant = t.variant.parse()?;
        let base = if variant == Variant::BinSf10 { LoRaConfig::bin_uplink() } else { LoRaConfig::event_uplink() };
        let radio_cfg = t.radio.build(base)?;
        let radio = match (t.tx_power, t.tx_energy_target) {
            (Some(p), None) => RadioEnergyModel { effective_tx_power: p },
            (None, Some(target)) => {
                let against = match &t.calibration_radio {
                    Some(r) => r.build(LoRaConfig::bin_uplink())?,
                    None => radio_cfg,
                };
                calibrate_radio(target, &against)?
            }
            _ => return Err(CliError::usage("[transaction] needs exactly one of tx_power or tx_energy_target")),
        };
        let workload = WorkloadSpec {
            phases: t.phases.iter().map(|p| WorkloadPhase::new(p.name.clone(), p.energy)).collect(),
            radio: radio_cfg,
            variant,
            energy_reference: parse_reference(&t.energy_reference)?,
        };

        let powerpath = PowerPathConfig::from(&self.powerpath);
        let deployment = DeploymentConfig {
            label: self.label.clone(),
            source: EventSource::Sampled { distribution, event_count: self.sim.events },
            workload,
            radio,
            powerpath,
            drivetrain: DrivetrainConfig { gear_ratio, generator },
            profile_shape,
            channel_loss_probability: self.sim.channel_loss_probability,
            debounce_window_s: self.sim.debounce_window,
            initial_voltage: self.sim.initial_voltage,
            dt: self.sim.dt,
            seed: 0,
        };
        deployment.validate()?;
        if self.motion.open_threshold.is_nan() || self.motion.open_threshold <= 0.0 {
            return Err(CliError::usage("open_threshold must be positive"));
        }

        let sizing = match &self.sizing {
            None => None,
            Some(s) => {
                let transaction_energy = match s.transaction_energy {
                    Some(e) => e,
                    None => transaction_energy(&deployment.workload, &deployment.radio)?,
                };
                let spec = SizingSpec {
                    transaction_energy,
                    harvest_window: s
                        .harvest_window
                        .unwrap_or(distribution.open_duration_mean_s + distribution.close_duration_mean_s),
                    hinge_rpm_min: s.hinge_rpm_min,
                    hinge_rpm_max: s.hinge_rpm_max,
                    hinge_rpm_reference: s.hinge_rpm_reference,
                    generator,
                    load_reference: s.load_reference,
                    cap_rating: powerpath.cap_rating,
                    converter_cutoff: powerpath.converter_cutoff,
                    headroom_fraction: s.headroom_fraction,
                    charging: ChargingModel {
                        rectifier_drop: powerpath.rectifier_drop,
                        step_up_ratio: powerpath.step_up_ratio,
                        coupling_efficiency: powerpath.coupling_efficiency,
                        leakage_tau: powerpath.leakage_tau,
                    },
                    distribution,
                    profile_shape,
                    margin_samples: s.margin_samples,
                    seed: 0,
                };
                spec.validate()?;
                Some(spec)
            }
        };

        Ok(RunConfig {
            label: self.label,
            seed: self.seed,
            deployment,
            open_threshold: self.motion.open_threshold,
            sizing,
            output: OutputConfig { dir: self.output.dir, per_event: self.output.per_event },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset(name: &str) -> RunConfig {
        Document::load(&format!("{PRESET_PREFIX}{name}")).unwrap().build().unwrap()
    }

    #[test]
    fn presets_match_core_constructors() {
        assert_eq!(preset("paper-bin").deployment, DeploymentConfig::paper_bin());
        assert_eq!(preset("paper-door").deployment, DeploymentConfig::paper_door());
        assert_eq!(preset("paper-cabinet").deployment, DeploymentConfig::paper_cabinet());
    }

    #[test]
    fn bin_preset_sizing_matches_core_preset() {
        let spec = preset("paper-bin").sizing.unwrap();
        let core = SizingSpec::paper();
        assert_eq!(spec.transaction_energy, core.transaction_energy);
        assert_eq!(spec.harvest_window, core.harvest_window);
        assert_eq!(spec.hinge_rpm_reference, core.hinge_rpm_reference);
        assert_eq!(spec.generator, core.generator);
        assert_eq!(spec.charging, core.charging);
    }

    #[test]
    fn every_override_key_applies_to_the_bin_preset() {
        for k in OVERRIDE_KEYS {
            let mut doc = Document::load("preset:paper-bin").unwrap();
            let v = match k.kind {
                Kind::Float => Value::Float(1.0),
                Kind::Int => Value::Integer(1),
                Kind::Bool => Value::Boolean(true),
                Kind::Str => Value::String("x".into()),
            };
            doc.set(k, v);
            // Values may be invalid; the key must still be recognised by the schema.
            if let Err(CliError::Usage(msg)) = doc.build() {
                assert!(!msg.contains("unknown field"), "{}: {msg}", k.key);
            }
        }
    }

    #[test]
    fn override_replaces_value() {
        let mut doc = Document::load("preset:paper-bin").unwrap();
        doc.apply_override("wake_threshold=12.5").unwrap();
        doc.apply_override("events=10").unwrap();
        let cfg = doc.build().unwrap();
        assert_eq!(cfg.deployment.powerpath.wake_threshold, 12.5);
        assert!(matches!(cfg.deployment.source, EventSource::Sampled { event_count: 10, .. }));
    }

    #[test]
    fn ke_override_replaces_anchors() {
        let mut doc = Document::load("preset:paper-bin").unwrap();
        doc.apply_override("ke=5e-3").unwrap();
        assert_eq!(doc.build().unwrap().deployment.drivetrain.generator.ke, 5e-3);
    }

    #[test]
    fn unknown_override_lists_keys() {
        let mut doc = Document::load("preset:paper-bin").unwrap();
        match doc.apply_override("flux=1") {
            Err(CliError::Usage(msg)) => assert!(msg.contains("wake_threshold")),
            other => panic!("{other:?}"),
        }
        assert!(doc.apply_override("wake_threshold=high").is_err());
        assert!(doc.apply_override("wake_threshold").is_err());
    }

    #[test]
    fn gear_stages_give_tooth_ratio() {
        let mut doc = Document::load("preset:paper-bin").unwrap();
        let stages = toml::from_str::<Table>("s = [[65, 13], [38, 13], [38, 13]]").unwrap().remove("s").unwrap();
        let dt = doc.table["drivetrain"].as_table_mut().unwrap();
        dt.remove("gear_ratio");
        dt.insert("gear_stages".into(), stages);
        let ratio = doc.build().unwrap().deployment.drivetrain.gear_ratio;
        assert!((ratio - 7220.0 / 169.0).abs() < 1e-12);
    }

    #[test]
    fn both_gear_forms_rejected() {
        let mut doc = Document::load("preset:paper-bin").unwrap();
        let dt = doc.table["drivetrain"].as_table_mut().unwrap();
        dt.insert("gear_stages".into(), Value::Array(vec![]));
        assert!(matches!(doc.build(), Err(CliError::Usage(_))));
    }

    #[test]
    fn catalog_generator() {
        let text = include_str!("../presets/paper-bin.cfg")
            .replace("anchors = [{ rpm = 1100.0, power = 0.051, load = 470.0 }]", "catalog = \"pmdc-24v\"");
        let cfg = Document::parse(&text, ".").unwrap().build().unwrap();
        assert!((cfg.deployment.drivetrain.generator.ke - 4.545e-3).abs() < 1e-9);
    }

    #[test]
    fn missing_catalog_file_is_io() {
        let text = include_str!("../presets/paper-bin.cfg").replace(
            "anchors = [{ rpm = 1100.0, power = 0.051, load = 470.0 }]",
            "catalog = \"pmdc-24v\"\ncatalog_file = \"nope.csv\"",
        );
        let err = Document::parse(&text, "/nonexistent").unwrap().build().unwrap_err();
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{}\n[extra]\nx = 1\n", include_str!("../presets/paper-bin.cfg"));
        assert_eq!(Document::parse(&text, ".").unwrap().build().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn seed_precedence() {
        assert_eq!(resolve_seed(Some(1), Some(2), Some("3")).unwrap(), 1);
        assert_eq!(resolve_seed(None, Some(2), Some("3")).unwrap(), 2);
        assert_eq!(resolve_seed(None, None, Some("3")).unwrap(), 3);
        assert_eq!(resolve_seed(None, None, None).unwrap(), 0);
        assert!(resolve_seed(None, None, Some("x")).is_err());
    }

    #[test]
    fn coding_rate_forms() {
        assert_eq!(normalize_coding_rate(8).unwrap(), 4);
        assert_eq!(normalize_coding_rate(4).unwrap(), 4);
        assert!(normalize_coding_rate(9).is_err());
        assert!(normalize_coding_rate(0).is_err());
    }
}
