//! Wake, sense and transmit workload: phase energies, LoRa airtime and
//! transmit energy, and the ultrasonic fill-level model.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BANDWIDTHS_HZ: [u32; 3] = [125_000, 250_000, 500_000];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoRaConfig {
    pub spreading_factor: u8,
    pub bandwidth: u32,
    /// 1..=4 for 4/5..4/8.
    pub coding_rate: u8,
    pub preamble_symbols: u16,
    pub payload_bytes: u16,
    pub explicit_header: bool,
    pub crc_on: bool,
    pub low_data_rate_optimize: bool,
    pub tx_power_dbm: f64,
}

impl LoRaConfig {
    /// SF10 uplink carrying node ID and fill level.
    pub fn bin_uplink() -> Self {
        Self {
            spreading_factor: 10,
            bandwidth: 125_000,
            coding_rate: 4,
            preamble_symbols: 8,
            payload_bytes: 8,
            explicit_header: true,
            crc_on: true,
            low_data_rate_optimize: false,
            tx_power_dbm: 20.0,
        }
    }

    /// SF6 implicit-header event packet.
    pub fn event_uplink() -> Self {
        Self { spreading_factor: 6, payload_bytes: 4, explicit_header: false, ..Self::bin_uplink() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(6..=12).contains(&self.spreading_factor) {
            return Err(Error::config(format!("spreading factor {} outside 6..=12", self.spreading_factor)));
        }
        if !BANDWIDTHS_HZ.contains(&self.bandwidth) {
            return Err(Error::config(format!("bandwidth {} Hz is not one of {BANDWIDTHS_HZ:?}", self.bandwidth)));
        }
        if !(1..=4).contains(&self.coding_rate) {
            return Err(Error::config(format!("coding rate {} outside 1..=4", self.coding_rate)));
        }
        if self.spreading_factor == 6 && self.explicit_header {
            return Err(Error::config("SF6 requires implicit header mode"));
        }
        Ok(())
    }

    pub fn symbol_time(&self) -> f64 {
        f64::from(1u32 << self.spreading_factor) / f64::from(self.bandwidth)
    }

    /// Payload symbol count including the 8 fixed symbols.
    pub fn payload_symbols(&self) -> u32 {
        let sf = i64::from(self.spreading_factor);
        let bits = 8 * i64::from(self.payload_bytes) - 4 * sf + 28 + 16 * i64::from(self.crc_on)
            - 20 * i64::from(!self.explicit_header);
        let per_block = 4 * (sf - 2 * i64::from(self.low_data_rate_optimize));
        let blocks = if bits > 0 { (bits + per_block - 1) / per_block } else { 0 };
        8 + (blocks * (i64::from(self.coding_rate) + 4)) as u32
    }
}

/// Packet airtime in seconds.
pub fn time_on_air(cfg: &LoRaConfig) -> Result<f64> {
    cfg.validate()?;
    // Preamble plus 4.25 sync symbols, counted in quarter symbols so the
    // only rounding happens in the final scaling.
    let quarters = 4 * u64::from(cfg.preamble_symbols) + 17 + 4 * u64::from(cfg.payload_symbols());
    Ok(quarters as f64 / 4.0 * f64::from(1u32 << cfg.spreading_factor) / f64::from(cfg.bandwidth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioEnergyModel {
    /// Total electrical draw while transmitting, watts.
    pub effective_tx_power: f64,
}

/// Radio model whose transmit energy at `cfg` equals `target_tx_energy`.
pub fn calibrate_radio(target_tx_energy: f64, cfg: &LoRaConfig) -> Result<RadioEnergyModel> {
    if !(target_tx_energy > 0.0) {
        return Err(Error::domain("target transmit energy must be positive"));
    }
    Ok(RadioEnergyModel { effective_tx_power: target_tx_energy / time_on_air(cfg)? })
}

pub fn tx_energy(cfg: &LoRaConfig, radio: &RadioEnergyModel) -> Result<f64> {
    Ok(radio.effective_tx_power * time_on_air(cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BinSf10,
    DoorSf6,
    CabinetSf6,
    /// Reports both opening and closing; each stroke powers its own packet.
    CabinetDual,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::BinSf10, Variant::DoorSf6, Variant::CabinetSf6, Variant::CabinetDual];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BinSf10 => "bin_sf10",
            Variant::DoorSf6 => "door_sf6",
            Variant::CabinetSf6 => "cabinet_sf6",
            Variant::CabinetDual => "cabinet_dual",
        }
    }

    pub fn packets_per_event(self) -> u32 {
        if self == Variant::CabinetDual {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| Error::config(format!("unknown variant {s:?}")))
    }
}

/// Where the phase energies are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyReference {
    /// Drawn from the buffer capacitor; the converter is already accounted for.
    #[default]
    Capacitor,
    /// Consumed at the regulated rail; the converter efficiency applies.
    Rail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadPhase {
    pub name: String,
    /// Joules.
    pub energy: f64,
}

impl WorkloadPhase {
    pub fn new(name: impl Into<String>, energy: f64) -> Self {
        Self { name: name.into(), energy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// Non-radio phases in execution order.
    pub phases: Vec<WorkloadPhase>,
    pub radio: LoRaConfig,
    pub variant: Variant,
    #[serde(default)]
    pub energy_reference: EnergyReference,
}

impl WorkloadSpec {
    pub fn bin() -> Self {
        Self {
            phases: vec![WorkloadPhase::new("boot", 0.45e-3), WorkloadPhase::new("sense", 3.0e-3)],
            radio: LoRaConfig::bin_uplink(),
            variant: Variant::BinSf10,
            energy_reference: EnergyReference::Capacitor,
        }
    }

    /// Event-only workload: boot then transmit, no sensor.
    pub fn event(variant: Variant) -> Self {
        Self {
            phases: vec![WorkloadPhase::new("boot", 0.45e-3), WorkloadPhase::new("sense", 0.0)],
            radio: LoRaConfig::event_uplink(),
            variant,
            energy_reference: EnergyReference::Capacitor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.radio.validate()?;
        if let Some(p) = self.phases.iter().find(|p| !(p.energy >= 0.0)) {
            return Err(Error::config(format!("phase {:?} has negative energy", p.name)));
        }
        if self.variant == Variant::BinSf10 && !self.phases.iter().any(|p| p.name.starts_with("sens")) {
            return Err(Error::config("bin workload needs a sensing phase"));
        }
        Ok(())
    }

    pub fn phase_energy(&self) -> f64 {
        self.phases.iter().map(|p| p.energy).sum()
    }
}

/// Energy of one packet's transaction. The dual-capture variant runs this
/// once per stroke.
pub fn transaction_energy(spec: &WorkloadSpec, radio: &RadioEnergyModel) -> Result<f64> {
    Ok(spec.phase_energy() + tx_energy(&spec.radio, radio)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub usable_depth_mm: f64,
    pub abs_error_mean_mm: f64,
    pub abs_error_sd_mm: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { usable_depth_mm: 500.0, abs_error_mean_mm: 19.08, abs_error_sd_mm: 15.9 }
    }
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.usable_depth_mm > 0.0) {
            return Err(Error::config("usable depth must be positive"));
        }
        if !(self.abs_error_mean_mm >= 0.0 && self.abs_error_sd_mm >= 0.0) {
            return Err(Error::config("error moments must be non-negative"));
        }
        Ok(())
    }

    pub fn bucket_width_mm(&self) -> f64 {
        self.usable_depth_mm / 5.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillCategory {
    Empty,
    Quarter,
    Half,
    ThreeQuarter,
    Full,
}

impl FillCategory {
    pub const ALL: [FillCategory; 5] = [
        FillCategory::Empty,
        FillCategory::Quarter,
        FillCategory::Half,
        FillCategory::ThreeQuarter,
        FillCategory::Full,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Buckets a headroom reading (distance from sensor to contents).
pub fn fill_category(reading_mm: f64, sensor: &SensorModel) -> FillCategory {
    let depth = sensor.usable_depth_mm;
    let fill = depth - reading_mm.clamp(0.0, depth);
    let idx = ((fill / sensor.bucket_width_mm()).floor() as usize).min(4);
    FillCategory::ALL[idx]
}

/// One noisy reading: true headroom plus a signed gamma-distributed error.
pub fn sense_with_error<R: Rng + ?Sized>(true_headroom_mm: f64, sensor: &SensorModel, rng: &mut R) -> f64 {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let (m, sd) = (sensor.abs_error_mean_mm, sensor.abs_error_sd_mm);
    let magnitude = if m <= 0.0 {
        0.0
    } else if sd <= 0.0 {
        m
    } else {
        Gamma::new((m / sd).powi(2), sd * sd / m).expect("positive gamma parameters").sample(rng)
    };
    (true_headroom_mm + sign * magnitude).clamp(0.0, sensor.usable_depth_mm)
}

/// Fraction of readings bucketed correctly for true levels uniform over the
/// usable depth.
pub fn category_accuracy<R: Rng + ?Sized>(sensor: &SensorModel, samples: usize, rng: &mut R) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    let hits = (0..samples)
        .filter(|_| {
            let truth = rng.random_range(0.0..sensor.usable_depth_mm);
            let reading = sense_with_error(truth, sensor, rng);
            fill_category(reading, sensor) == fill_category(truth, sensor)
        })
        .count();
    hits as f64 / samples as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use approx::assert_relative_eq;

    /// Brute-force airtime: grow the payload one (CR+4)-symbol block at a
    /// time until the coded bits fit, counting quarter symbols exactly.
    fn airtime_oracle(cfg: &LoRaConfig) -> f64 {
        let sf = cfg.spreading_factor as i64;
        let de = cfg.low_data_rate_optimize as i64;
        let ih = (!cfg.explicit_header) as i64;
        let need = 8 * cfg.payload_bytes as i64 - 4 * sf + 28 + 16 * cfg.crc_on as i64 - 20 * ih;
        let mut blocks = 0i64;
        while blocks * 4 * (sf - 2 * de) < need {
            blocks += 1;
        }
        let quarter_symbols = 4 * cfg.preamble_symbols as i64 + 17 + 4 * (8 + blocks * (cfg.coding_rate as i64 + 4));
        quarter_symbols as f64 / 4.0 * (1u64 << sf) as f64 / cfg.bandwidth as f64
    }

    #[test]
    fn oracle_reproduces_hand_counts() {
        // 12.25 preamble + 24 payload symbols at 8.192 ms.
        assert_relative_eq!(airtime_oracle(&LoRaConfig::bin_uplink()), 36.25 * 8.192e-3, max_relative = 1e-15);
        assert_relative_eq!(airtime_oracle(&LoRaConfig::event_uplink()), 36.25 * 0.512e-3, max_relative = 1e-15);
    }

    #[test]
    fn airtime_matches_oracle_on_examples() {
        let bin = LoRaConfig::bin_uplink();
        assert_eq!(time_on_air(&bin).unwrap(), airtime_oracle(&bin));
        assert!((time_on_air(&bin).unwrap() - 0.29696).abs() < 1e-12);
        let door = LoRaConfig::event_uplink();
        assert_eq!(time_on_air(&door).unwrap(), airtime_oracle(&door));
        assert!((time_on_air(&door).unwrap() - 0.01856).abs() < 1e-12);
    }

    #[test]
    fn empty_payload_has_eight_symbols() {
        let cfg = LoRaConfig { payload_bytes: 0, crc_on: false, explicit_header: false, ..LoRaConfig::bin_uplink() };
        assert_eq!(cfg.payload_symbols(), 8);
        assert_relative_eq!(time_on_air(&cfg).unwrap(), 20.25 * cfg.symbol_time(), max_relative = 1e-15);
    }

    #[test]
    fn sf6_explicit_rejected() {
        let cfg = LoRaConfig { explicit_header: true, ..LoRaConfig::event_uplink() };
        assert!(matches!(time_on_air(&cfg), Err(Error::Config(_))));
        let cfg = LoRaConfig { bandwidth: 100_000, ..LoRaConfig::bin_uplink() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn radio_calibration() {
        let bin = LoRaConfig::bin_uplink();
        let radio = calibrate_radio(57.5e-3, &bin).unwrap();
        assert!((radio.effective_tx_power - 0.1936).abs() < 0.00005);
        assert_relative_eq!(tx_energy(&bin, &radio).unwrap(), 57.5e-3, max_relative = 1e-12);
        let door = tx_energy(&LoRaConfig::event_uplink(), &radio).unwrap();
        assert!((door - 3.59e-3).abs() < 0.005e-3, "{door}");
        let toa = time_on_air(&bin).unwrap();
        assert_relative_eq!(calibrate_radio(toa, &bin).unwrap().effective_tx_power, 1.0, max_relative = 1e-12);
        assert!(calibrate_radio(0.0, &bin).is_err());
    }

    #[test]
    fn transaction_budgets() {
        let radio = calibrate_radio(57.5e-3, &LoRaConfig::bin_uplink()).unwrap();
        let bin = transaction_energy(&WorkloadSpec::bin(), &radio).unwrap();
        assert!((bin - 60.95e-3).abs() < 1e-9);
        let door = transaction_energy(&WorkloadSpec::event(Variant::DoorSf6), &radio).unwrap();
        assert!((door - 4.04e-3).abs() < 0.005e-3, "{door}");
        let bare = WorkloadSpec { phases: vec![], ..WorkloadSpec::bin() };
        let silent = RadioEnergyModel { effective_tx_power: 0.0 };
        assert_eq!(transaction_energy(&bare, &silent).unwrap(), 0.0);
        assert_eq!(transaction_energy(&bare, &radio).unwrap(), tx_energy(&bare.radio, &radio).unwrap());
    }

    #[test]
    fn bin_needs_sensing_phase() {
        let spec = WorkloadSpec { phases: vec![WorkloadPhase::new("boot", 0.45e-3)], ..WorkloadSpec::bin() };
        assert!(spec.validate().is_err());
        assert!(WorkloadSpec::bin().validate().is_ok());
        assert!(WorkloadSpec::event(Variant::DoorSf6).validate().is_ok());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("bin".parse::<Variant>().is_err());
    }

    #[test]
    fn fill_category_examples() {
        let s = SensorModel::default();
        assert_eq!(fill_category(500.0, &s), FillCategory::Empty);
        assert_eq!(fill_category(0.0, &s), FillCategory::Full);
        assert_eq!(fill_category(260.0, &s), FillCategory::Half);
        assert_eq!(fill_category(900.0, &s), FillCategory::Empty);
    }

    #[test]
    fn noiseless_sensor_is_exact() {
        let s = SensorModel { abs_error_mean_mm: 0.0, abs_error_sd_mm: 0.0, ..Default::default() };
        let mut rng = SeedTree::new(1).stream("sensor");
        for truth in [0.0, 123.4, 500.0] {
            assert_eq!(sense_with_error(truth, &s, &mut rng), truth);
        }
    }

    #[test]
    fn error_moments_match_sensor() {
        let s = SensorModel { usable_depth_mm: 1e9, ..Default::default() };
        let mut rng = SeedTree::new(11).stream("sensor");
        let errs: Vec<f64> = (0..100_000).map(|_| (sense_with_error(5e8, &s, &mut rng) - 5e8).abs()).collect();
        let n = errs.len() as f64;
        let mae = errs.iter().sum::<f64>() / n;
        let sd = (errs.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mae - 19.08).abs() < 0.3, "{mae}");
        assert!((sd - 15.9).abs() < 0.3, "{sd}");
    }

    #[test]
    fn category_accuracy_is_seed_stable() {
        let s = SensorModel::default();
        let runs: Vec<f64> =
            (0..4).map(|i| category_accuracy(&s, 100_000, &mut SeedTree::new(i).stream("accuracy"))).collect();
        for acc in &runs {
            assert!((acc - CATEGORY_ACCURACY_ORACLE).abs() < 0.01, "{acc}");
        }
    }

    // Frozen from an independent quadrature over true level and error.
    const CATEGORY_ACCURACY_ORACLE: f64 = 0.8475;

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn lora() -> impl Strategy<Value = LoRaConfig> {
            (6u8..=12, 0usize..3, 1u8..=4, 4u16..20, 0u16..64, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(
                |(sf, bw, cr, pre, pl, explicit, crc, de)| LoRaConfig {
                    spreading_factor: sf,
                    bandwidth: BANDWIDTHS_HZ[bw],
                    coding_rate: cr,
                    preamble_symbols: pre,
                    payload_bytes: pl,
                    explicit_header: explicit && sf != 6,
                    crc_on: crc,
                    low_data_rate_optimize: de && sf >= 11,
                    tx_power_dbm: 14.0,
                },
            )
        }

        proptest! {
            #[test]
            fn airtime_equals_oracle(cfg in lora()) {
                prop_assert_eq!(time_on_air(&cfg).unwrap(), airtime_oracle(&cfg));
            }

            #[test]
            fn airtime_nondecreasing_in_payload(cfg in lora(), extra in 1u16..32) {
                let bigger = LoRaConfig { payload_bytes: cfg.payload_bytes + extra, ..cfg };
                prop_assert!(time_on_air(&bigger).unwrap() >= time_on_air(&cfg).unwrap());
            }

            #[test]
            fn airtime_increasing_in_sf(cfg in lora(), sf in 7u8..12) {
                let base = LoRaConfig { spreading_factor: sf, explicit_header: true, low_data_rate_optimize: false, ..cfg };
                let next = LoRaConfig { spreading_factor: sf + 1, ..base };
                prop_assert!(time_on_air(&next).unwrap() > time_on_air(&base).unwrap());
            }

            #[test]
            fn calibration_inverts(cfg in lora(), target in 1e-6f64..1.0) {
                let radio = calibrate_radio(target, &cfg).unwrap();
                let back = tx_energy(&cfg, &radio).unwrap();
                prop_assert!((back - target).abs() <= 1e-12 * target);
            }

            #[test]
            fn transaction_energy_permutation_invariant(energies in prop::collection::vec(0.0f64..0.01, 1..8), seed: u64) {
                use rand::seq::SliceRandom;
                let radio = RadioEnergyModel { effective_tx_power: 0.2 };
                let phases: Vec<_> = energies.iter().enumerate().map(|(i, e)| WorkloadPhase::new(format!("p{i}"), *e)).collect();
                let spec = WorkloadSpec { phases: phases.clone(), ..WorkloadSpec::event(Variant::DoorSf6) };
                let mut shuffled = phases;
                shuffled.shuffle(&mut SeedTree::new(seed).stream("shuffle"));
                let other = WorkloadSpec { phases: shuffled, ..spec.clone() };
                let a = transaction_energy(&spec, &radio).unwrap();
                let b = transaction_energy(&other, &radio).unwrap();
                prop_assert!((a - b).abs() <= 1e-15);
                let expect = energies.iter().sum::<f64>() + tx_energy(&spec.radio, &radio).unwrap();
                prop_assert!((a - expect).abs() <= 1e-15);
            }

            #[test]
            fn bucket_steps_at_multiples(k in 1u32..5, eps in 1e-6f64..1.0) {
                let s = SensorModel::default();
                let edge = f64::from(k) * s.bucket_width_mm();
                // Fill depth just below and at the boundary.
                let below = fill_category(s.usable_depth_mm - (edge - eps), &s);
                let at = fill_category(s.usable_depth_mm - edge, &s);
                prop_assert_eq!(below.index(), (k - 1) as usize);
                prop_assert_eq!(at.index(), k as usize);
            }
        }
    }
}
