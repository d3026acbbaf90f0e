//! Per-event and deployment-scale simulation with outcome classification.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::drivetrain::{fit_generator, GeneratorModel, PowerAnchor, DEFAULT_R_INTERNAL};
use crate::error::{Error, Result};
use crate::motion::{
    angular_velocity_profile, segment_actuations, ActuationDistribution, ActuationEvent, ActuationSampler, Phase,
    ProfileShape, TraceRecord, DEFAULT_OPEN_THRESHOLD_DEG,
};
use crate::powerpath::{
    apply_leakage, charge_stroke, discharge_with_efficiency, gate_step, CapacitorState, ChargeSummary, GateInput,
    GateState, PowerPathConfig, DEFAULT_DT,
};
use crate::rng::SeedTree;
use crate::transaction::{
    calibrate_radio, transaction_energy, EnergyReference, LoRaConfig, RadioEnergyModel, Variant, WorkloadSpec,
};

pub const DEFAULT_DEBOUNCE_S: f64 = 2.0;

/// Channel variates drawn per event regardless of outcome.
const CHANNEL_DRAWS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSource {
    Sampled { distribution: ActuationDistribution, event_count: usize },
    Events { events: Vec<ActuationEvent> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivetrainConfig {
    pub gear_ratio: f64,
    pub generator: GeneratorModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentConfig {
    pub label: String,
    pub source: EventSource,
    pub workload: WorkloadSpec,
    pub radio: RadioEnergyModel,
    pub powerpath: PowerPathConfig,
    pub drivetrain: DrivetrainConfig,
    pub profile_shape: ProfileShape,
    pub channel_loss_probability: f64,
    /// A re-trigger within this long after a transaction sends again.
    pub debounce_window_s: f64,
    pub initial_voltage: f64,
    pub dt: f64,
    pub seed: u64,
}

/// The 24 V generator anchored at 51 mW into 470 ohm at 1100 RPM.
pub fn anchored_generator() -> GeneratorModel {
    let anchor = PowerAnchor { rpm: 1100.0, power: 0.051, load: 470.0 };
    fit_generator(&[anchor], DEFAULT_R_INTERNAL, 24.0).expect("anchor is well formed")
}

/// Inter-arrival mean at which a fraction `p` of gaps fall inside `window`.
pub fn inter_arrival_for_retrigger_rate(window: f64, p: f64) -> f64 {
    -window / (1.0 - p).ln()
}

impl DeploymentConfig {
    /// Calibrated outdoor bin deployment.
    pub fn paper_bin() -> Self {
        let distribution = ActuationDistribution {
            angle_cv: 0.10,
            open_duration_cv: 0.15,
            close_duration_cv: 0.15,
            partial_probability: 0.005,
            partial_angle_range_deg: (5.0, 30.0),
            inter_arrival_mean_s: 1999.0,
            ..ActuationDistribution::default()
        };
        Self {
            label: "bin".into(),
            source: EventSource::Sampled { distribution, event_count: 5945 },
            workload: WorkloadSpec::bin(),
            radio: calibrate_radio(57.5e-3, &LoRaConfig::bin_uplink()).expect("valid radio"),
            powerpath: PowerPathConfig { step_up_ratio: 3.0, ..PowerPathConfig::default() },
            drivetrain: DrivetrainConfig { gear_ratio: 42.6, generator: anchored_generator() },
            profile_shape: ProfileShape::HalfSine,
            channel_loss_probability: 0.002,
            debounce_window_s: DEFAULT_DEBOUNCE_S,
            initial_voltage: 0.0,
            dt: DEFAULT_DT,
            seed: 0,
        }
    }

    /// Indoor door deployment on the bin hardware; weak closures dominate.
    pub fn paper_door() -> Self {
        Self::event_only("door", Variant::DoorSf6, 1870, DOOR_PARTIAL_PROBABILITY)
    }

    pub fn paper_cabinet() -> Self {
        Self::event_only("cabinet", Variant::CabinetSf6, 1636, CABINET_PARTIAL_PROBABILITY)
    }

    fn event_only(label: &str, variant: Variant, events: usize, partial: f64) -> Self {
        let mut cfg = Self::paper_bin();
        cfg.label = label.into();
        cfg.workload = WorkloadSpec::event(variant);
        cfg.channel_loss_probability = 0.001;
        if let EventSource::Sampled { distribution, event_count } = &mut cfg.source {
            distribution.partial_probability = partial;
            *event_count = events;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.powerpath.validate()?;
        self.workload.validate()?;
        self.drivetrain.generator.validate()?;
        if !(self.drivetrain.gear_ratio > 0.0 && self.drivetrain.gear_ratio.is_finite()) {
            return Err(Error::config("gear ratio must be positive"));
        }
        if !(0.0..=1.0).contains(&self.channel_loss_probability) {
            return Err(Error::config("channel loss probability must lie in [0, 1]"));
        }
        if !(self.radio.effective_tx_power >= 0.0) {
            return Err(Error::config("radio power must be non-negative"));
        }
        if !(self.debounce_window_s >= 0.0) {
            return Err(Error::config("debounce window must be non-negative"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::config("integration step must be positive"));
        }
        if !(0.0..=self.powerpath.cap_rating).contains(&self.initial_voltage) {
            return Err(Error::config("initial voltage must lie in [0, cap_rating]"));
        }
        match &self.source {
            EventSource::Sampled { distribution, event_count } => {
                distribution.validate()?;
                if *event_count == 0 {
                    return Err(Error::config("event count must be at least 1"));
                }
            }
            EventSource::Events { events } => {
                for e in events {
                    e.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn distribution(&self) -> Option<&ActuationDistribution> {
        match &self.source {
            EventSource::Sampled { distribution, .. } => Some(distribution),
            EventSource::Events { .. } => None,
        }
    }

    /// Energy drawn from the capacitor per packet, and the conversion
    /// efficiency to apply when drawing it.
    pub fn packet_energy(&self) -> Result<(f64, f64)> {
        let e = transaction_energy(&self.workload, &self.radio)?;
        let eff = match self.workload.energy_reference {
            EnergyReference::Capacitor => 1.0,
            EnergyReference::Rail => self.powerpath.converter_efficiency,
        };
        Ok((e, eff))
    }

    /// Hex SHA-256 of the canonical JSON form, seed excluded.
    pub fn fingerprint(&self) -> String {
        let mut canon = self.clone();
        canon.seed = 0;
        let json = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

// Found by `calibrate_partial_probability` against 92% and 94% success.
pub const DOOR_PARTIAL_PROBABILITY: f64 = 0.092;
pub const CABINET_PARTIAL_PROBABILITY: f64 = 0.070;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventOutcome {
    SinglePacket,
    DoublePacket,
    NoCharge,
    ChannelLoss,
}

impl EventOutcome {
    pub const ALL: [EventOutcome; 4] =
        [EventOutcome::SinglePacket, EventOutcome::DoublePacket, EventOutcome::NoCharge, EventOutcome::ChannelLoss];

    pub fn name(self) -> &'static str {
        match self {
            EventOutcome::SinglePacket => "single_packet",
            EventOutcome::DoublePacket => "double_packet",
            EventOutcome::NoCharge => "no_charge",
            EventOutcome::ChannelLoss => "channel_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventResult {
    pub outcome: EventOutcome,
    pub state: CapacitorState,
    pub peak_voltage: f64,
    pub transactions: u32,
    pub packets_delivered: u32,
    pub harvested_input: f64,
}

/// Config with per-packet energy resolved once.
struct Plant<'a> {
    cfg: &'a DeploymentConfig,
    energy: f64,
    efficiency: f64,
}

impl<'a> Plant<'a> {
    fn new(cfg: &'a DeploymentConfig) -> Result<Self> {
        cfg.validate()?;
        let (energy, efficiency) = cfg.packet_energy()?;
        Ok(Self { cfg, energy, efficiency })
    }

    fn stroke(&self, state: CapacitorState, event: &ActuationEvent, phase: Phase) -> ChargeSummary {
        let profile = angular_velocity_profile(event, phase, self.cfg.profile_shape);
        let d = &self.cfg.drivetrain;
        charge_stroke(&profile, d.gear_ratio, &d.generator, &self.cfg.powerpath, state, self.cfg.dt)
    }

    /// One trigger through the gate. Returns the post-transaction state and
    /// whether the packet got through, or None when nothing was sent.
    fn attempt(&self, state: CapacitorState, channel_u: f64) -> Option<(CapacitorState, bool)> {
        let pp = &self.cfg.powerpath;
        let gate = gate_step(GateState::Harvesting, GateInput::Trigger, state.voltage, pp);
        let gate = gate_step(gate, GateInput::Idle, state.voltage, pp);
        if !gate.may_transmit() {
            return None;
        }
        let after = discharge_with_efficiency(state, self.energy, self.efficiency, pp).completed()?;
        debug_assert_eq!(gate_step(gate, GateInput::TransactionDone, after.voltage, pp), GateState::PostTransaction);
        Some((after, channel_u >= self.cfg.channel_loss_probability))
    }

    fn run(&self, cap: CapacitorState, event: &ActuationEvent, channel: [f64; CHANNEL_DRAWS]) -> EventResult {
        let open = self.stroke(cap, event, Phase::Opening);
        let mut state = open.end;
        let mut peak = open.peak_voltage;
        let mut harvested = open.harvested_input;
        let mut transactions = 0;
        let mut delivered = 0;
        let mut record = |sent: Option<(CapacitorState, bool)>, state: &mut CapacitorState| {
            if let Some((after, ok)) = sent {
                *state = after;
                transactions += 1;
                delivered += u32::from(ok);
                true
            } else {
                false
            }
        };

        let dual = self.cfg.workload.variant == Variant::CabinetDual;
        if dual {
            record(self.attempt(state, channel[0]), &mut state);
        }

        let close = self.stroke(state, event, Phase::Closing);
        state = close.end;
        peak = peak.max(close.peak_voltage);
        harvested += close.harvested_input;

        let mut remaining_gap = event.gap_to_next_s;
        if dual {
            record(self.attempt(state, channel[1]), &mut state);
        } else if record(self.attempt(state, channel[0]), &mut state)
            && event.gap_to_next_s < self.cfg.debounce_window_s
        {
            // Rapid re-opening: the switch fires again on residual charge.
            state = apply_leakage(state, event.gap_to_next_s, &self.cfg.powerpath);
            remaining_gap = 0.0;
            record(self.attempt(state, channel[1]), &mut state);
        }
        state = apply_leakage(state, remaining_gap, &self.cfg.powerpath);

        let outcome = match (transactions, delivered) {
            (0, _) => EventOutcome::NoCharge,
            (_, 0) => EventOutcome::ChannelLoss,
            (_, d) if d >= 2 && !dual => EventOutcome::DoublePacket,
            _ => EventOutcome::SinglePacket,
        };
        EventResult {
            outcome,
            state,
            peak_voltage: peak,
            transactions,
            packets_delivered: delivered,
            harvested_input: harvested,
        }
    }
}

/// Runs one actuation from `cap`: charge over the opening and closing
/// strokes, fire the gate on close, transact if the threshold is met, then
/// leak over the gap to the next actuation.
pub fn simulate_event<R: Rng + ?Sized>(
    cap: CapacitorState,
    event: &ActuationEvent,
    cfg: &DeploymentConfig,
    rng: &mut R,
) -> Result<EventResult> {
    let channel = draw_channel(rng);
    Ok(Plant::new(cfg)?.run(cap, event, channel))
}

fn draw_channel<R: Rng + ?Sized>(rng: &mut R) -> [f64; CHANNEL_DRAWS] {
    std::array::from_fn(|_| rng.random::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub index: usize,
    pub event: ActuationEvent,
    pub peak_voltage: f64,
    pub outcome: EventOutcome,
    pub packets_delivered: u32,
    pub voltage_after: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub single_packet: usize,
    pub double_packet: usize,
    pub no_charge: usize,
    pub channel_loss: usize,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: EventOutcome) {
        *self.get_mut(outcome) += 1;
    }

    pub fn get(&self, outcome: EventOutcome) -> usize {
        match outcome {
            EventOutcome::SinglePacket => self.single_packet,
            EventOutcome::DoublePacket => self.double_packet,
            EventOutcome::NoCharge => self.no_charge,
            EventOutcome::ChannelLoss => self.channel_loss,
        }
    }

    fn get_mut(&mut self, outcome: EventOutcome) -> &mut usize {
        match outcome {
            EventOutcome::SinglePacket => &mut self.single_packet,
            EventOutcome::DoublePacket => &mut self.double_packet,
            EventOutcome::NoCharge => &mut self.no_charge,
            EventOutcome::ChannelLoss => &mut self.channel_loss,
        }
    }

    pub fn total(&self) -> usize {
        self.single_packet + self.double_packet + self.no_charge + self.channel_loss
    }

    /// Events that got at least one packet through.
    pub fn delivered(&self) -> usize {
        self.single_packet + self.double_packet
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub actuations: usize,
    pub delivered_events: usize,
    pub packets_delivered: u64,
    pub transactions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeploymentReport {
    pub label: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub totals: Totals,
    pub outcome_counts: OutcomeCounts,
    /// Events with at least one delivered packet over events.
    pub success_rate: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub per_event: Vec<EventRecord>,
}

impl DeploymentReport {
    pub fn to_json(&self, include_events: bool) -> String {
        let json = if include_events {
            serde_json::to_string_pretty(self)
        } else {
            serde_json::to_string_pretty(&DeploymentReport { per_event: Vec::new(), ..self.clone() })
        };
        json.expect("report serializes")
    }

    pub fn fraction(&self, outcome: EventOutcome) -> f64 {
        if self.totals.actuations == 0 {
            0.0
        } else {
            self.outcome_counts.get(outcome) as f64 / self.totals.actuations as f64
        }
    }

    /// Human-readable outcome table.
    pub fn render_table(&self) -> String {
        let n = self.totals.actuations;
        let mut out = String::new();
        let _ = writeln!(out, "{} (seed {}, config {})", self.label, self.seed, &self.config_fingerprint[..12]);
        let _ = writeln!(out, "{:<14} {:>8} {:>8}", "outcome", "events", "pct");
        for o in EventOutcome::ALL {
            let _ =
                writeln!(out, "{:<14} {:>8} {:>7.2}%", o.name(), self.outcome_counts.get(o), 100.0 * self.fraction(o));
        }
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>7.2}%",
            "delivered",
            self.totals.delivered_events,
            100.0 * self.success_rate
        );
        let _ = writeln!(out, "{:<14} {:>8}", "actuations", n);
        out
    }
}

fn build_report(cfg: &DeploymentConfig, records: Vec<EventRecord>, transactions: u64) -> DeploymentReport {
    let mut counts = OutcomeCounts::default();
    let mut packets = 0u64;
    for r in &records {
        counts.add(r.outcome);
        packets += u64::from(r.packets_delivered);
    }
    let n = records.len();
    let delivered_events = counts.delivered();
    DeploymentReport {
        label: cfg.label.clone(),
        config_fingerprint: cfg.fingerprint(),
        seed: cfg.seed,
        totals: Totals { actuations: n, delivered_events, packets_delivered: packets, transactions },
        outcome_counts: counts,
        success_rate: if n == 0 { 0.0 } else { delivered_events as f64 / n as f64 },
        per_event: records,
    }
}

fn run_events(cfg: &DeploymentConfig, events: &[ActuationEvent]) -> Result<DeploymentReport> {
    let plant = Plant::new(cfg)?;
    let mut channel = SeedTree::new(cfg.seed).stream("channel");
    let mut cap = CapacitorState::new(cfg.initial_voltage, 0.0);
    let mut records = Vec::with_capacity(events.len());
    let mut transactions = 0u64;
    for (index, event) in events.iter().enumerate() {
        let res = plant.run(cap, event, draw_channel(&mut channel));
        transactions += u64::from(res.transactions);
        records.push(EventRecord {
            index,
            event: *event,
            peak_voltage: res.peak_voltage,
            outcome: res.outcome,
            packets_delivered: res.packets_delivered,
            voltage_after: res.state.voltage,
        });
        cap = res.state;
    }
    Ok(build_report(cfg, records, transactions))
}

/// Events the deployment would see: sampled from the `motion` stream or
/// taken verbatim.
pub fn deployment_events(cfg: &DeploymentConfig) -> Result<Vec<ActuationEvent>> {
    match &cfg.source {
        EventSource::Sampled { distribution, event_count } => {
            let sampler = ActuationSampler::new(distribution)?;
            let mut rng = SeedTree::new(cfg.seed).stream("motion");
            Ok((0..*event_count).map(|_| sampler.sample(&mut rng)).collect())
        }
        EventSource::Events { events } => {
            if events.is_empty() {
                Err(Error::InsufficientData("event source holds no actuations".into()))
            } else {
                Ok(events.clone())
            }
        }
    }
}

/// Folds [`simulate_event`] over the deployment starting from
/// `initial_voltage`.
pub fn simulate_deployment(cfg: &DeploymentConfig) -> Result<DeploymentReport> {
    cfg.validate()?;
    let events = deployment_events(cfg)?;
    run_events(cfg, &events)
}

/// Segments `trace` and runs the resulting actuations through `cfg`.
pub fn replay_trace(trace: &[TraceRecord], cfg: &DeploymentConfig) -> Result<DeploymentReport> {
    let seg = segment_actuations(trace, DEFAULT_OPEN_THRESHOLD_DEG)?;
    if seg.events.is_empty() {
        return Err(Error::InsufficientData("trace contains no complete actuation".into()));
    }
    let replay = DeploymentConfig { source: EventSource::Events { events: seg.events }, ..cfg.clone() };
    simulate_deployment(&replay)
}

/// Seed of the `index`-th replicate of a run rooted at `seed`.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    SeedTree::new(seed).indexed("replicate", index).root()
}

pub fn simulate_replicates(cfg: &DeploymentConfig, replicates: u64) -> Result<Vec<DeploymentReport>> {
    (0..replicates)
        .into_par_iter()
        .map(|i| simulate_deployment(&DeploymentConfig { seed: replicate_seed(cfg.seed, i), ..cfg.clone() }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub label: String,
    pub actuations: usize,
    pub packets: usize,
    /// Truncated to one decimal place.
    pub success_pct: f64,
}

impl SummaryRow {
    fn new(label: String, actuations: usize, packets: usize) -> Self {
        let per_mille = (packets * 1000).checked_div(actuations).unwrap_or(0);
        Self { label, actuations, packets, success_pct: per_mille as f64 / 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub total: SummaryRow,
}

pub const SUMMARY_HEADER: &str = "label,actuations,packets,success_pct";

impl Summary {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{SUMMARY_HEADER}\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(out, "{},{},{},{:.1}", r.label, r.actuations, r.packets, r.success_pct);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).chain([5]).max().unwrap_or(5);
        let mut out = format!("{:<width$}  {:>10}  {:>8}  {:>8}\n", "label", "actuations", "packets", "success%");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ =
                writeln!(out, "{:<width$}  {:>10}  {:>8}  {:>8.1}", r.label, r.actuations, r.packets, r.success_pct);
        }
        out
    }
}

/// Table rows, one per report, plus a totals row. Packets counts events
/// with at least one delivered packet.
pub fn summarize(reports: &[DeploymentReport]) -> Summary {
    let rows: Vec<SummaryRow> = reports
        .iter()
        .map(|r| SummaryRow::new(r.label.clone(), r.totals.actuations, r.totals.delivered_events))
        .collect();
    let total =
        SummaryRow::new("total".into(), rows.iter().map(|r| r.actuations).sum(), rows.iter().map(|r| r.packets).sum());
    Summary { rows, total }
}

/// Mean actuation of the configured distribution, followed by no other.
pub fn nominal_event(dist: &ActuationDistribution) -> ActuationEvent {
    ActuationEvent {
        opening_angle_deg: dist.angle_mean_deg,
        opening_duration_s: dist.open_duration_mean_s,
        closing_duration_s: dist.close_duration_mean_s,
        gap_to_next_s: f64::INFINITY,
        partial: false,
    }
}

/// Voltage after charging through `event` from the converter cutoff, before
/// any transaction.
pub fn charge_from_cutoff(cfg: &DeploymentConfig, event: &ActuationEvent) -> Result<f64> {
    cfg.validate()?;
    let d = &cfg.drivetrain;
    Ok(crate::sizing::charge_from_cutoff(event, cfg.profile_shape, d.gear_ratio, &d.generator, &cfg.powerpath))
}

const MAX_STEP_UP: f64 = 10.0;

fn bisect(mut lo: f64, mut hi: f64, iterations: usize, mut ok_at: impl FnMut(f64) -> Result<bool>) -> Result<f64> {
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if ok_at(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Smallest step-up ratio at which `event` charges from cutoff to the wake
/// threshold. The search stays below 10, where the reflected winding
/// resistance is still small against the capacitor time scale.
pub fn minimum_step_up(cfg: &DeploymentConfig, event: &ActuationEvent) -> Result<f64> {
    let thr = cfg.powerpath.wake_threshold;
    let reaches = |n: f64| {
        let mut c = cfg.clone();
        c.powerpath.step_up_ratio = n;
        charge_from_cutoff(&c, event).map(|v| v >= thr)
    };
    if !reaches(MAX_STEP_UP)? {
        return Err(Error::Infeasible(format!("no step-up up to {MAX_STEP_UP} reaches the wake threshold")));
    }
    bisect(1e-3, MAX_STEP_UP, 60, reaches)
}

/// Smallest coupling efficiency at which `event` charges from cutoff to the
/// wake threshold.
pub fn calibrate_coupling(cfg: &DeploymentConfig, event: &ActuationEvent) -> Result<f64> {
    let thr = cfg.powerpath.wake_threshold;
    let reaches = |eta: f64| {
        let mut c = cfg.clone();
        c.powerpath.coupling_efficiency = eta;
        charge_from_cutoff(&c, event).map(|v| v >= thr)
    };
    if !reaches(1.0)? {
        let mut c = cfg.clone();
        c.powerpath.coupling_efficiency = 1.0;
        let v = charge_from_cutoff(&c, event)?;
        return Err(Error::Infeasible(format!(
            "even lossless coupling charges only to {v:.2} V, short of the {thr} V threshold"
        )));
    }
    bisect(0.0, 1.0, 50, reaches)
}

/// Partial-actuation probability at which the mean success rate over
/// `replicates` seeded runs meets `target`. Common random numbers keep the
/// objective monotone in the probability.
pub fn calibrate_partial_probability(cfg: &DeploymentConfig, target: f64, replicates: u64) -> Result<f64> {
    if cfg.distribution().is_none() {
        return Err(Error::config("partial probability calibration needs a sampled source"));
    }
    let success_at = |p: f64| -> Result<f64> {
        let mut c = cfg.clone();
        if let EventSource::Sampled { distribution, .. } = &mut c.source {
            distribution.partial_probability = p;
        }
        let reports = simulate_replicates(&c, replicates)?;
        Ok(reports.iter().map(|r| r.success_rate).sum::<f64>() / reports.len() as f64)
    };
    // Success falls as p grows; find the largest p still meeting the target.
    let (mut lo, mut hi) = (0.0, 1.0);
    if success_at(lo)? < target {
        return Err(Error::Infeasible(format!("success stays below {target} even with no partial actuations")));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if success_at(mid)? >= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
