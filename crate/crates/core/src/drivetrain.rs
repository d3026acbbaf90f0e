//! Spur-gear amplification and the permanent-magnet DC generator model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_TEETH: u32 = 8;

/// Gear stages listed hinge side first, so a ratio above one amplifies speed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GearTrain {
    stages: Vec<GearStage>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GearStage {
    pub input_teeth: u32,
    pub output_teeth: u32,
}

impl GearTrain {
    pub fn new(stages: Vec<(u32, u32)>) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("gear train needs at least one stage"));
        }
        if let Some((i, o)) = stages.iter().find(|(i, o)| *i < MIN_TEETH || *o < MIN_TEETH) {
            return Err(Error::config(format!("stage {i}:{o} has fewer than {MIN_TEETH} teeth")));
        }
        Ok(Self {
            stages: stages
                .into_iter()
                .map(|(input_teeth, output_teeth)| GearStage { input_teeth, output_teeth })
                .collect(),
        })
    }

    pub fn stages(&self) -> &[GearStage] {
        &self.stages
    }

    /// Train that drives `self` and then `next`.
    pub fn concat(&self, next: &GearTrain) -> GearTrain {
        let mut stages = self.stages.clone();
        stages.extend_from_slice(&next.stages);
        GearTrain { stages }
    }

    /// Exact ratio as a reduced fraction (numerator, denominator).
    pub fn ratio_fraction(&self) -> (u64, u64) {
        let (num, den) = self
            .stages
            .iter()
            .fold((1u64, 1u64), |(n, d), s| (n * u64::from(s.input_teeth), d * u64::from(s.output_teeth)));
        let g = gcd(num, den);
        (num / g, den / g)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Output shaft speed over hinge speed.
pub fn train_ratio(train: &GearTrain) -> f64 {
    let (num, den) = train.ratio_fraction();
    num as f64 / den as f64
}

pub fn generator_rpm(hinge_rpm: f64, ratio: f64) -> f64 {
    hinge_rpm * ratio
}

/// Brushed DC motor run as a generator: an EMF source proportional to shaft
/// speed behind a winding resistance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorModel {
    /// Back-EMF constant in volts per RPM.
    pub ke: f64,
    pub r_internal: f64,
    pub rated_voltage: f64,
}

pub const DEFAULT_R_INTERNAL: f64 = 10.0;

impl GeneratorModel {
    pub fn new(ke: f64, r_internal: f64, rated_voltage: f64) -> Result<Self> {
        let g = Self { ke, r_internal, rated_voltage };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ke > 0.0 && self.ke.is_finite()) {
            return Err(Error::config("generator ke must be positive"));
        }
        if !(self.r_internal > 0.0 && self.r_internal.is_finite()) {
            return Err(Error::config("generator internal resistance must be positive"));
        }
        Ok(())
    }

    pub fn emf(&self, rpm: f64) -> f64 {
        self.ke * rpm
    }

    /// The source seen through an ideal 1:n voltage step-up: EMF scales by n,
    /// resistance by n squared. Power into a matched load is unchanged.
    pub fn stepped_up(&self, ratio: f64) -> GeneratorModel {
        GeneratorModel {
            ke: self.ke * ratio,
            r_internal: self.r_internal * ratio * ratio,
            rated_voltage: self.rated_voltage * ratio,
        }
    }
}

/// Power dissipated in a resistive load.
pub fn power_into_load(gen: &GeneratorModel, rpm: f64, load: f64) -> f64 {
    let emf = gen.emf(rpm.max(0.0));
    emf * emf * load / (load + gen.r_internal).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerAnchor {
    pub rpm: f64,
    pub power: f64,
    pub load: f64,
}

/// Least-squares back-EMF constant for the given anchors at an assumed
/// winding resistance. Power is linear in ke squared, so the fit is closed
/// form.
pub fn fit_generator(anchors: &[PowerAnchor], r_internal: f64, rated_voltage: f64) -> Result<GeneratorModel> {
    if anchors.is_empty() {
        return Err(Error::InsufficientData("generator fit needs at least one anchor".into()));
    }
    if !(r_internal > 0.0) {
        return Err(Error::domain("internal resistance must be positive"));
    }
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for a in anchors {
        if !(a.rpm > 0.0 && a.load > 0.0 && a.power >= 0.0) {
            return Err(Error::domain("anchors need positive rpm and load and non-negative power"));
        }
        // power = ke^2 * basis
        let basis = a.rpm * a.rpm * a.load / (a.load + r_internal).powi(2);
        sxy += basis * a.power;
        sxx += basis * basis;
    }
    GeneratorModel::new((sxy / sxx).sqrt(), r_internal, rated_voltage)
}

pub const SCHOTTKY_DROP: f64 = 0.3;
pub const FULL_BRIDGE_DROP: f64 = 2.0 * SCHOTTKY_DROP;

/// Current into a capacitor at `v_cap` through the rectifier. The bridge
/// blocks reverse flow.
pub fn charging_current(gen: &GeneratorModel, rpm: f64, v_cap: f64, rectifier_drop: f64) -> f64 {
    ((gen.emf(rpm.abs()) - rectifier_drop - v_cap) / gen.r_internal).max(0.0)
}

/// One row of a generator catalog file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub generator: GeneratorModel,
}

pub const CATALOG_HEADER: &str = "name,rated_voltage,ke_mV_per_rpm,r_internal_ohm";

pub fn parse_generator_catalog(text: &str) -> Result<Vec<CatalogEntry>> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line == CATALOG_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |message: String| Error::Format { line: line_no, message };
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(format!("invalid {what} `{s}`")));
        let rated_voltage = num(fields[1], "rated voltage")?;
        let ke = num(fields[2], "ke")? / 1000.0;
        let r_internal = num(fields[3], "internal resistance")?;
        let generator = GeneratorModel::new(ke, r_internal, rated_voltage).map_err(|e| bad(e.to_string()))?;
        entries.push(CatalogEntry { name: fields[0].to_string(), generator });
    }
    Ok(entries)
}
