//! Rectified capacitor buffer, converter cutoff, wake threshold, leakage and
//! the event-triggered power gate.

use serde::{Deserialize, Serialize};

use crate::drivetrain::{charging_current, GeneratorModel, FULL_BRIDGE_DROP};
use crate::error::{Error, Result};
use crate::motion::MotionProfile;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPathConfig {
    /// Farads.
    pub capacitance: f64,
    pub cap_rating: f64,
    pub rectifier_drop: f64,
    /// Minimum converter input voltage; charge below it is unusable.
    pub converter_cutoff: f64,
    pub wake_threshold: f64,
    pub converter_efficiency: f64,
    /// Self-discharge time constant, seconds.
    pub leakage_tau: f64,
    /// Multiplies charging current to account for drivetrain losses.
    pub coupling_efficiency: f64,
    /// Voltage gain between the generator terminals and the rectifier.
    /// One for a plain bridge.
    pub step_up_ratio: f64,
}

impl Default for PowerPathConfig {
    fn default() -> Self {
        Self {
            capacitance: 1000e-6,
            cap_rating: 25.0,
            rectifier_drop: FULL_BRIDGE_DROP,
            converter_cutoff: 3.0,
            wake_threshold: 11.5,
            converter_efficiency: 0.85,
            leakage_tau: 600.0,
            coupling_efficiency: 0.85,
            step_up_ratio: 1.0,
        }
    }
}

impl PowerPathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacitance > 0.0) {
            return Err(Error::config("capacitance must be positive"));
        }
        if !(0.0 < self.converter_cutoff
            && self.converter_cutoff < self.wake_threshold
            && self.wake_threshold <= self.cap_rating)
        {
            return Err(Error::config(format!(
                "need 0 < converter_cutoff ({}) < wake_threshold ({}) <= cap_rating ({})",
                self.converter_cutoff, self.wake_threshold, self.cap_rating
            )));
        }
        for (name, eff) in
            [("converter_efficiency", self.converter_efficiency), ("coupling_efficiency", self.coupling_efficiency)]
        {
            if !(eff > 0.0 && eff <= 1.0) {
                return Err(Error::config(format!("{name} must lie in (0, 1]")));
            }
        }
        if !(self.leakage_tau > 0.0) {
            return Err(Error::config("leakage_tau must be positive"));
        }
        if !(self.rectifier_drop >= 0.0) {
            return Err(Error::config("rectifier_drop must be non-negative"));
        }
        if !(self.step_up_ratio > 0.0 && self.step_up_ratio.is_finite()) {
            return Err(Error::config("step_up_ratio must be positive"));
        }
        Ok(())
    }

    /// Energy held between `voltage` and the converter cutoff.
    pub fn usable_at(&self, voltage: f64) -> f64 {
        if voltage <= self.converter_cutoff {
            0.0
        } else {
            0.5 * self.capacitance * (voltage * voltage - self.converter_cutoff.powi(2))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorState {
    pub voltage: f64,
    pub time: f64,
}

impl CapacitorState {
    pub fn new(voltage: f64, time: f64) -> Self {
        Self { voltage, time }
    }
}

/// Energy extractable between `v_charged` and `v_cutoff`.
pub fn usable_energy(capacitance: f64, v_charged: f64, v_cutoff: f64) -> Result<f64> {
    if !(v_cutoff >= 0.0) || v_charged < v_cutoff {
        return Err(Error::domain(format!("charged voltage {v_charged} V lies below cutoff {v_cutoff} V")));
    }
    Ok(0.5 * capacitance * (v_charged * v_charged - v_cutoff * v_cutoff))
}

/// Voltage that stores `e_usable` joules above `v_cutoff`.
pub fn required_charged_voltage(capacitance: f64, e_usable: f64, v_cutoff: f64) -> Result<f64> {
    if !(capacitance > 0.0) || !(e_usable >= 0.0) {
        return Err(Error::domain("need positive capacitance and non-negative energy"));
    }
    Ok((2.0 * e_usable / capacitance + v_cutoff * v_cutoff).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Start state followed by one state per step.
    pub states: Vec<CapacitorState>,
    /// Integral of coupling efficiency times source EMF times current.
    pub harvested_input: f64,
}

impl Trajectory {
    pub fn end(&self) -> CapacitorState {
        *self.states.last().expect("trajectory holds its start state")
    }

    pub fn peak_voltage(&self) -> f64 {
        self.states.iter().map(|s| s.voltage).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeSummary {
    pub end: CapacitorState,
    pub peak_voltage: f64,
    pub harvested_input: f64,
}

/// Explicit-Euler charging over one stroke:
/// dV/dt = coupling * I / C - V / tau, with I from the rectified generator
/// seen through the configured step-up. Voltage is clamped to the rating.
pub fn integrate_charging(
    profile: &MotionProfile,
    ratio: f64,
    gen: &GeneratorModel,
    cfg: &PowerPathConfig,
    start: CapacitorState,
    dt: f64,
) -> Trajectory {
    let mut states = vec![start];
    let summary = step_charging(profile, ratio, gen, cfg, start, dt, |s| states.push(s));
    Trajectory { states, harvested_input: summary.harvested_input }
}

/// Same integration as [`integrate_charging`] without storing the path.
pub fn charge_stroke(
    profile: &MotionProfile,
    ratio: f64,
    gen: &GeneratorModel,
    cfg: &PowerPathConfig,
    start: CapacitorState,
    dt: f64,
) -> ChargeSummary {
    step_charging(profile, ratio, gen, cfg, start, dt, |_| {})
}

fn step_charging(
    profile: &MotionProfile,
    ratio: f64,
    gen: &GeneratorModel,
    cfg: &PowerPathConfig,
    start: CapacitorState,
    dt: f64,
    mut visit: impl FnMut(CapacitorState),
) -> ChargeSummary {
    assert!(dt > 0.0, "integration step must be positive");
    let source = gen.stepped_up(cfg.step_up_ratio);
    let duration = profile.duration_s.max(0.0);
    let steps = (duration / dt).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let eta = cfg.coupling_efficiency;

    let mut v = start.voltage;
    let mut peak = v;
    let mut harvested = 0.0;
    for i in 0..steps {
        let t = i as f64 * h;
        // deg/s to rev/min is a factor of 1/6.
        let rpm = ratio * profile.rate_at(t) / 6.0;
        let current = charging_current(&source, rpm, v, cfg.rectifier_drop);
        harvested += eta * source.emf(rpm) * current * h;
        v += h * (eta * current / cfg.capacitance - v / cfg.leakage_tau);
        v = v.clamp(0.0, cfg.cap_rating);
        peak = peak.max(v);
        visit(CapacitorState::new(v, start.time + (i + 1) as f64 * h));
    }
    ChargeSummary { end: CapacitorState::new(v, start.time + duration), peak_voltage: peak, harvested_input: harvested }
}

pub fn apply_leakage(state: CapacitorState, elapsed: f64, cfg: &PowerPathConfig) -> CapacitorState {
    CapacitorState::new(state.voltage * (-elapsed / cfg.leakage_tau).exp(), state.time + elapsed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateState {
    Harvesting,
    Triggered,
    Active,
    PostTransaction,
}

impl GateState {
    pub fn may_transmit(self) -> bool {
        self == GateState::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateInput {
    Idle,
    Trigger,
    TransactionDone,
}

impl From<bool> for GateInput {
    fn from(trigger_fired: bool) -> Self {
        if trigger_fired {
            GateInput::Trigger
        } else {
            GateInput::Idle
        }
    }
}

/// Advances the power gate by one decision.
pub fn gate_step(state: GateState, input: impl Into<GateInput>, v: f64, cfg: &PowerPathConfig) -> GateState {
    let input = input.into();
    match state {
        GateState::Harvesting if input == GateInput::Trigger => GateState::Triggered,
        GateState::Harvesting => GateState::Harvesting,
        GateState::Triggered if v >= cfg.wake_threshold => GateState::Active,
        GateState::Triggered => GateState::Harvesting,
        GateState::Active if input == GateInput::TransactionDone || v < cfg.converter_cutoff => {
            GateState::PostTransaction
        }
        GateState::Active => GateState::Active,
        GateState::PostTransaction => GateState::Harvesting,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DischargeOutcome {
    Completed(CapacitorState),
    /// The buffer would cross the cutoff first; state is left untouched.
    Insufficient,
}

impl DischargeOutcome {
    pub fn completed(self) -> Option<CapacitorState> {
        match self {
            DischargeOutcome::Completed(s) => Some(s),
            DischargeOutcome::Insufficient => None,
        }
    }
}

/// Draws `energy` joules of rail-side work through the converter.
pub fn discharge_transaction(start: CapacitorState, energy: f64, cfg: &PowerPathConfig) -> DischargeOutcome {
    discharge_with_efficiency(start, energy, cfg.converter_efficiency, cfg)
}

/// Discharge with an explicit conversion efficiency; pass 1.0 when the
/// energy is already stated at the capacitor.
pub fn discharge_with_efficiency(
    start: CapacitorState,
    energy: f64,
    efficiency: f64,
    cfg: &PowerPathConfig,
) -> DischargeOutcome {
    debug_assert!(energy >= 0.0);
    let radicand = start.voltage * start.voltage - 2.0 * energy / (efficiency * cfg.capacitance);
    if radicand < 0.0 {
        return DischargeOutcome::Insufficient;
    }
    let v_after = radicand.sqrt();
    if v_after < cfg.converter_cutoff && energy > 0.0 {
        return DischargeOutcome::Insufficient;
    }
    DischargeOutcome::Completed(CapacitorState::new(v_after, start.time))
}
