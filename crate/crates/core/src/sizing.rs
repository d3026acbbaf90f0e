//! Inverse design: gear ratio, capacitance and wake threshold from a
//! workload energy and a hinge-speed envelope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivetrain::{GeneratorModel, FULL_BRIDGE_DROP};
use crate::error::{Error, Result};
use crate::motion::{
    angular_velocity_profile, ActuationDistribution, ActuationEvent, ActuationSampler, Phase, ProfileShape,
};
use crate::powerpath::{charge_stroke, required_charged_voltage, CapacitorState, PowerPathConfig, DEFAULT_DT};
use crate::rng::SeedTree;
use crate::sim::anchored_generator;

pub const E12: [f64; 12] = [1.0, 1.2, 1.5, 1.8, 2.2, 2.7, 3.3, 3.9, 4.7, 5.6, 6.8, 8.2];

/// Smallest capacitance considered, farads.
pub const MIN_CAPACITANCE: f64 = 1e-6;

/// Six decades of E12 values above [`MIN_CAPACITANCE`].
const E12_DECADES: i32 = 6;

pub const THRESHOLD_STEP_V: f64 = 0.05;

/// Reference-speed EMF must exceed the charged voltage plus the rectifier
/// drop by this factor.
pub const EMF_MARGIN: f64 = 1.05;

/// Charging path parameters that sizing does not choose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingModel {
    pub rectifier_drop: f64,
    pub step_up_ratio: f64,
    pub coupling_efficiency: f64,
    pub leakage_tau: f64,
}

impl Default for ChargingModel {
    fn default() -> Self {
        Self { rectifier_drop: FULL_BRIDGE_DROP, step_up_ratio: 3.0, coupling_efficiency: 0.85, leakage_tau: 600.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingSpec {
    /// Joules per transaction, capacitor side.
    pub transaction_energy: f64,
    pub harvest_window: f64,
    pub hinge_rpm_min: f64,
    pub hinge_rpm_max: f64,
    pub hinge_rpm_reference: f64,
    pub generator: GeneratorModel,
    pub load_reference: f64,
    pub cap_rating: f64,
    pub converter_cutoff: f64,
    pub headroom_fraction: f64,
    pub charging: ChargingModel,
    /// Actuations over which the margin is estimated.
    pub distribution: ActuationDistribution,
    pub profile_shape: ProfileShape,
    pub margin_samples: usize,
    pub seed: u64,
}

impl SizingSpec {
    /// Bin design point: 61 mJ over a 1.2 s window on the anchored 24 V
    /// generator.
    pub fn paper() -> Self {
        Self {
            transaction_energy: 61e-3,
            harvest_window: 1.2,
            hinge_rpm_min: 17.85,
            hinge_rpm_max: 27.8,
            hinge_rpm_reference: 25.82,
            generator: anchored_generator(),
            load_reference: 470.0,
            cap_rating: 25.0,
            converter_cutoff: 3.0,
            headroom_fraction: 0.5,
            charging: ChargingModel::default(),
            distribution: ActuationDistribution::default(),
            profile_shape: ProfileShape::HalfSine,
            margin_samples: 2000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.transaction_energy >= 0.0) {
            return Err(Error::config("transaction energy must be non-negative"));
        }
        if !(self.harvest_window > 0.0) {
            return Err(Error::config("harvest window must be positive"));
        }
        if !(0.0 < self.hinge_rpm_min
            && self.hinge_rpm_min <= self.hinge_rpm_reference
            && self.hinge_rpm_reference <= self.hinge_rpm_max)
        {
            return Err(Error::config("need 0 < hinge_rpm_min <= hinge_rpm_reference <= hinge_rpm_max"));
        }
        if !(self.headroom_fraction > 0.0 && self.headroom_fraction <= 1.0) {
            return Err(Error::config("headroom fraction must lie in (0, 1]"));
        }
        if !(self.load_reference > 0.0) {
            return Err(Error::config("reference load must be positive"));
        }
        if !(0.0 < self.converter_cutoff && self.converter_cutoff < self.cap_rating) {
            return Err(Error::config("need 0 < converter_cutoff < cap_rating"));
        }
        self.generator.validate()?;
        self.distribution.validate()?;
        Ok(())
    }

    /// Highest charged voltage the design may ask for.
    pub fn voltage_ceiling(&self) -> f64 {
        self.headroom_fraction * self.cap_rating
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub required_power: f64,
    pub target_generator_rpm: f64,
    /// Larger of the power-based and EMF-floor ratios.
    pub gear_ratio: f64,
    pub power_ratio: f64,
    pub emf_floor_ratio: f64,
    pub capacitance: f64,
    pub wake_threshold: f64,
    pub rpm_band_at_generator: (f64, f64),
    pub margin_fraction: f64,
}

pub fn required_average_power(energy: f64, window: f64) -> Result<f64> {
    if !(window > 0.0) {
        return Err(Error::domain("harvest window must be positive"));
    }
    Ok(energy / window)
}

/// Shaft speed at which `gen` delivers `power` into `load`.
pub fn target_generator_speed(gen: &GeneratorModel, load: f64, power: f64) -> Result<f64> {
    if !(power >= 0.0) || !(load > 0.0) {
        return Err(Error::domain("need non-negative power and positive load"));
    }
    Ok((load + gen.r_internal) * (power / load).sqrt() / gen.ke)
}

/// Power-based ratio: target generator speed over the reference hinge speed.
pub fn required_gear_ratio(spec: &SizingSpec) -> Result<f64> {
    let power = required_average_power(spec.transaction_energy, spec.harvest_window)?;
    Ok(target_generator_speed(&spec.generator, spec.load_reference, power)? / spec.hinge_rpm_reference)
}

/// Ratio at which the stepped-up EMF at the reference hinge speed clears the
/// voltage ceiling plus the rectifier drop.
pub fn emf_floor_ratio(spec: &SizingSpec) -> f64 {
    let need = EMF_MARGIN * (spec.voltage_ceiling() + spec.charging.rectifier_drop);
    need / (spec.generator.ke * spec.charging.step_up_ratio * spec.hinge_rpm_reference)
}

fn e12_grid() -> impl Iterator<Item = f64> {
    (0..E12_DECADES).flat_map(|d| E12.iter().map(move |m| m * MIN_CAPACITANCE * 10f64.powi(d)))
}

fn round_up_threshold(v: f64) -> f64 {
    let steps = (v / THRESHOLD_STEP_V - 1e-9).ceil();
    (steps * THRESHOLD_STEP_V * 100.0).round() / 100.0
}

/// Smallest E12 capacitance whose rounded wake threshold fits under
/// `headroom * rating`.
pub fn select_capacitance(energy: f64, cutoff: f64, rating: f64, headroom: f64) -> Result<(f64, f64)> {
    if !(energy >= 0.0) {
        return Err(Error::domain("energy must be non-negative"));
    }
    let ceiling = headroom * rating;
    for c in e12_grid() {
        let threshold = round_up_threshold(required_charged_voltage(c, energy, cutoff)?);
        if threshold <= ceiling + 1e-12 {
            return Ok((c, threshold));
        }
    }
    Err(Error::Infeasible(format!(
        "no E12 capacitance up to 1 F stores {:.3} mJ between {cutoff} V and {ceiling} V",
        energy * 1e3
    )))
}

/// Power path for a sized system.
pub fn sized_powerpath(spec: &SizingSpec, capacitance: f64, wake_threshold: f64) -> PowerPathConfig {
    PowerPathConfig {
        capacitance,
        cap_rating: spec.cap_rating,
        rectifier_drop: spec.charging.rectifier_drop,
        converter_cutoff: spec.converter_cutoff,
        wake_threshold,
        leakage_tau: spec.charging.leakage_tau,
        coupling_efficiency: spec.charging.coupling_efficiency,
        step_up_ratio: spec.charging.step_up_ratio,
        ..PowerPathConfig::default()
    }
}

/// Voltage after `event` charges the buffer from the converter cutoff.
pub fn charge_from_cutoff(
    event: &ActuationEvent,
    shape: ProfileShape,
    ratio: f64,
    gen: &GeneratorModel,
    pp: &PowerPathConfig,
) -> f64 {
    let start = CapacitorState::new(pp.converter_cutoff, 0.0);
    let open = angular_velocity_profile(event, Phase::Opening, shape);
    let close = angular_velocity_profile(event, Phase::Closing, shape);
    let mid = charge_stroke(&open, ratio, gen, pp, start, DEFAULT_DT).end;
    charge_stroke(&close, ratio, gen, pp, mid, DEFAULT_DT).end.voltage
}

/// Fraction of full actuations from `spec.distribution` that charge from
/// cutoff to `wake_threshold`.
pub fn margin_fraction(spec: &SizingSpec, ratio: f64, capacitance: f64, wake_threshold: f64) -> Result<f64> {
    if spec.margin_samples == 0 {
        return Err(Error::config("margin needs at least one sample"));
    }
    let full = ActuationDistribution { partial_probability: 0.0, ..spec.distribution };
    let sampler = ActuationSampler::new(&full)?;
    let mut rng = SeedTree::new(spec.seed).stream("margin");
    let events: Vec<ActuationEvent> = (0..spec.margin_samples).map(|_| sampler.sample(&mut rng)).collect();
    let pp = sized_powerpath(spec, capacitance, wake_threshold);
    let hits = events
        .par_iter()
        .filter(|e| charge_from_cutoff(e, spec.profile_shape, ratio, &spec.generator, &pp) >= wake_threshold)
        .count();
    Ok(hits as f64 / events.len() as f64)
}

/// Constant-speed stroke at the reference hinge speed filling the harvest
/// window, split evenly between opening and closing.
pub fn reference_actuation(spec: &SizingSpec) -> ActuationEvent {
    let half = 0.5 * spec.harvest_window;
    ActuationEvent {
        opening_angle_deg: 6.0 * spec.hinge_rpm_reference * half,
        opening_duration_s: half,
        closing_duration_s: half,
        gap_to_next_s: f64::INFINITY,
        partial: false,
    }
}

pub fn size_system(spec: &SizingSpec) -> Result<SizingResult> {
    spec.validate()?;
    let required_power = required_average_power(spec.transaction_energy, spec.harvest_window)?;
    let target_generator_rpm = target_generator_speed(&spec.generator, spec.load_reference, required_power)?;
    let power_ratio = target_generator_rpm / spec.hinge_rpm_reference;
    let floor = emf_floor_ratio(spec);
    let gear_ratio = power_ratio.max(floor);
    let (capacitance, wake_threshold) =
        select_capacitance(spec.transaction_energy, spec.converter_cutoff, spec.cap_rating, spec.headroom_fraction)?;
    let margin_fraction = margin_fraction(spec, gear_ratio, capacitance, wake_threshold)?;
    Ok(SizingResult {
        required_power,
        target_generator_rpm,
        gear_ratio,
        power_ratio,
        emf_floor_ratio: floor,
        capacitance,
        wake_threshold,
        rpm_band_at_generator: (spec.hinge_rpm_min * gear_ratio, spec.hinge_rpm_max * gear_ratio),
        margin_fraction,
    })
}

impl SizingResult {
    pub fn render_table(&self) -> String {
        let rows = [
            ("required power", format!("{:.2} mW", self.required_power * 1e3)),
            ("target generator speed", format!("{:.0} RPM", self.target_generator_rpm)),
            ("gear ratio", format!("1:{:.2}", self.gear_ratio)),
            ("  power-based", format!("{:.2}", self.power_ratio)),
            ("  EMF floor", format!("{:.2}", self.emf_floor_ratio)),
            ("capacitance", format!("{:.0} uF", self.capacitance * 1e6)),
            ("wake threshold", format!("{:.2} V", self.wake_threshold)),
            ("generator band", format!("{:.0}-{:.0} RPM", self.rpm_band_at_generator.0, self.rpm_band_at_generator.1)),
            ("margin", format!("{:.1}%", self.margin_fraction * 100.0)),
        ];
        rows.iter().map(|(k, v)| format!("{k:<24}{v}\n")).collect()
    }
}
