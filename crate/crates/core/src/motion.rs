//! Hinge actuations: encoder traces, segmentation into events, actuation
//! statistics and angular-velocity profiles.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "timestamp_ms,angle_deg,limit_switch";

/// Peak angle below which an excursion counts as a partial actuation.
pub const PARTIAL_ANGLE_DEG: f64 = 30.0;

/// Physical travel limit of the lid.
pub const MAX_ANGLE_DEG: f64 = 110.0;

pub const DEFAULT_OPEN_THRESHOLD_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestamp_ms: i64,
    pub angle_deg: f64,
    /// True when the closed-position switch is made.
    pub limit_switch: bool,
}

impl TraceRecord {
    fn at_rest(&self) -> bool {
        self.limit_switch || self.angle_deg <= 0.0
    }
}

/// One open/close cycle of a hinge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuationEvent {
    pub opening_angle_deg: f64,
    pub opening_duration_s: f64,
    pub closing_duration_s: f64,
    /// Closed dwell before the next actuation. Infinite when none follows.
    pub gap_to_next_s: f64,
    pub partial: bool,
}

impl ActuationEvent {
    pub fn new(angle_deg: f64, opening_s: f64, closing_s: f64, gap_s: f64) -> Result<Self> {
        let event = Self {
            opening_angle_deg: angle_deg,
            opening_duration_s: opening_s,
            closing_duration_s: closing_s,
            gap_to_next_s: gap_s,
            partial: angle_deg < PARTIAL_ANGLE_DEG,
        };
        event.validate()?;
        Ok(event)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.opening_angle_deg > 0.0) {
            return Err(Error::domain("opening angle must be positive"));
        }
        if !(self.opening_duration_s > 0.0 && self.closing_duration_s > 0.0) {
            return Err(Error::domain("actuation durations must be positive"));
        }
        if !(self.gap_to_next_s >= 0.0) {
            return Err(Error::domain("gap to next actuation must be non-negative"));
        }
        Ok(())
    }
}

/// Parses an encoder trace. The header line is optional; `#` lines and
/// blank lines are skipped. Line numbers in errors are 1-based.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>> {
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_content {
            seen_content = true;
            if line == TRACE_HEADER {
                continue;
            }
        }
        let record = parse_row(line, line_no)?;
        if let Some(prev) = records.last() {
            if record.timestamp_ms <= prev.timestamp_ms {
                return Err(Error::TraceOrder { line: line_no, timestamp_ms: record.timestamp_ms });
            }
        }
        records.push(record);
    }
    Ok(records)
}

fn parse_row(line: &str, line_no: usize) -> Result<TraceRecord> {
    let format_err = |message: String| Error::Format { line: line_no, message };
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 3 {
        return Err(format_err(format!("expected 3 fields, found {}", fields.len())));
    }
    let timestamp_ms =
        fields[0].parse::<i64>().map_err(|_| format_err(format!("invalid timestamp `{}`", fields[0])))?;
    let angle_deg = fields[1]
        .parse::<f64>()
        .ok()
        .filter(|a| a.is_finite() && *a >= 0.0)
        .ok_or_else(|| format_err(format!("invalid angle `{}`", fields[1])))?;
    let limit_switch = match fields[2] {
        "0" => false,
        "1" => true,
        other => return Err(format_err(format!("invalid limit switch value `{other}`"))),
    };
    Ok(TraceRecord { timestamp_ms, angle_deg, limit_switch })
}

pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 16 + 40);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.timestamp_ms, r.angle_deg, u8::from(r.limit_switch));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub events: Vec<ActuationEvent>,
    /// Set when the trace ended mid-excursion and the last event was dropped.
    pub truncated: bool,
}

/// Splits a trace into actuations.
///
/// An excursion begins when the angle rises above `open_threshold_deg`. Its
/// opening is timed from the last at-rest sample before the crossing to the
/// peak; its closing from the peak to the first at-rest sample afterwards.
pub fn segment_actuations(records: &[TraceRecord], open_threshold_deg: f64) -> Result<Segmentation> {
    if !(open_threshold_deg > 0.0) {
        return Err(Error::domain("open threshold must be positive"));
    }

    struct Span {
        start_ms: i64,
        peak_ms: i64,
        peak_deg: f64,
        end_ms: i64,
    }

    let mut spans: Vec<Span> = Vec::new();
    let mut last_rest: Option<i64> = None;
    let mut active: Option<Span> = None;

    for rec in records {
        match active.as_mut() {
            None => {
                if rec.at_rest() {
                    last_rest = Some(rec.timestamp_ms);
                }
                if rec.angle_deg > open_threshold_deg {
                    active = Some(Span {
                        start_ms: last_rest.unwrap_or(rec.timestamp_ms),
                        peak_ms: rec.timestamp_ms,
                        peak_deg: rec.angle_deg,
                        end_ms: rec.timestamp_ms,
                    });
                }
            }
            Some(span) => {
                if rec.angle_deg > span.peak_deg {
                    span.peak_deg = rec.angle_deg;
                    span.peak_ms = rec.timestamp_ms;
                }
                if rec.at_rest() {
                    span.end_ms = rec.timestamp_ms;
                    last_rest = Some(rec.timestamp_ms);
                    spans.extend(active.take());
                }
            }
        }
    }

    let truncated = active.is_some();
    let mut events = Vec::with_capacity(spans.len());
    for (i, span) in spans.iter().enumerate() {
        let gap_to_next_s =
            spans.get(i + 1).map_or(f64::INFINITY, |next| (next.start_ms - span.end_ms) as f64 / 1000.0);
        events.push(ActuationEvent {
            opening_angle_deg: span.peak_deg,
            // A single-sample rise still spans at least one tick.
            opening_duration_s: ((span.peak_ms - span.start_ms).max(1)) as f64 / 1000.0,
            closing_duration_s: ((span.end_ms - span.peak_ms).max(1)) as f64 / 1000.0,
            gap_to_next_s,
            partial: span.peak_deg < PARTIAL_ANGLE_DEG,
        });
    }
    Ok(Segmentation { events, truncated })
}

/// Average hinge speed over a stroke, in revolutions per minute.
pub fn hinge_speed_rpm(angle_deg: f64, duration_s: f64) -> Result<f64> {
    if !(angle_deg > 0.0) || !(duration_s > 0.0) {
        return Err(Error::domain("hinge speed needs a positive angle and duration"));
    }
    Ok(angle_deg / 360.0 / duration_s * 60.0)
}

/// Statistical description of a population of actuations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuationDistribution {
    pub angle_mean_deg: f64,
    pub angle_cv: f64,
    pub open_duration_mean_s: f64,
    pub open_duration_cv: f64,
    pub close_duration_mean_s: f64,
    pub close_duration_cv: f64,
    pub partial_probability: f64,
    pub partial_angle_range_deg: (f64, f64),
    pub inter_arrival_mean_s: f64,
}

impl Default for ActuationDistribution {
    fn default() -> Self {
        Self {
            angle_mean_deg: 72.5,
            angle_cv: 0.25,
            open_duration_mean_s: 0.70,
            open_duration_cv: 0.25,
            close_duration_mean_s: 0.45,
            close_duration_cv: 0.25,
            partial_probability: 0.005,
            partial_angle_range_deg: (5.0, 30.0),
            inter_arrival_mean_s: 300.0,
        }
    }
}

impl ActuationDistribution {
    pub fn validate(&self) -> Result<()> {
        let means =
            [self.angle_mean_deg, self.open_duration_mean_s, self.close_duration_mean_s, self.inter_arrival_mean_s];
        if means.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::config("distribution means must be positive and finite"));
        }
        if self.angle_mean_deg >= MAX_ANGLE_DEG {
            return Err(Error::config(format!("angle mean must lie below the {MAX_ANGLE_DEG} deg travel limit")));
        }
        let cvs = [self.angle_cv, self.open_duration_cv, self.close_duration_cv];
        if cvs.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::config("coefficients of variation must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.partial_probability) {
            return Err(Error::config("partial probability must lie in [0, 1]"));
        }
        let (lo, hi) = self.partial_angle_range_deg;
        if !(lo > 0.0 && hi >= lo && hi <= MAX_ANGLE_DEG) {
            return Err(Error::config("partial angle range must satisfy 0 < min <= max"));
        }
        Ok(())
    }
}

/// Method-of-moments fit over full actuations; needs at least ten.
pub fn fit_distribution(events: &[ActuationEvent]) -> Result<ActuationDistribution> {
    let full: Vec<&ActuationEvent> = events.iter().filter(|e| !e.partial).collect();
    if full.len() < 10 {
        return Err(Error::InsufficientData(format!("need at least 10 full actuations, got {}", full.len())));
    }
    let (angle_mean_deg, angle_cv) = mean_cv(full.iter().map(|e| e.opening_angle_deg));
    let (open_duration_mean_s, open_duration_cv) = mean_cv(full.iter().map(|e| e.opening_duration_s));
    let (close_duration_mean_s, close_duration_cv) = mean_cv(full.iter().map(|e| e.closing_duration_s));

    let defaults = ActuationDistribution::default();
    let partial_angles: Vec<f64> = events.iter().filter(|e| e.partial).map(|e| e.opening_angle_deg).collect();
    let partial_angle_range_deg = if partial_angles.is_empty() {
        defaults.partial_angle_range_deg
    } else {
        let lo = partial_angles.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = partial_angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let gaps: Vec<f64> = events.iter().map(|e| e.gap_to_next_s).filter(|g| g.is_finite()).collect();
    let inter_arrival_mean_s = if gaps.is_empty() {
        defaults.inter_arrival_mean_s
    } else {
        (gaps.iter().sum::<f64>() / gaps.len() as f64).max(f64::MIN_POSITIVE)
    };

    Ok(ActuationDistribution {
        angle_mean_deg,
        angle_cv,
        open_duration_mean_s,
        open_duration_cv,
        close_duration_mean_s,
        close_duration_cv,
        partial_probability: partial_angles.len() as f64 / events.len() as f64,
        partial_angle_range_deg,
        inter_arrival_mean_s,
    })
}

fn mean_cv(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    (mean, cv)
}

/// Precomputed sampler for an [`ActuationDistribution`].
///
/// The angle is a normal truncated to (0, 110] deg whose location is shifted
/// so that the truncated mean equals `angle_mean_deg`.
#[derive(Debug, Clone)]
pub struct ActuationSampler {
    dist: ActuationDistribution,
    angle: Option<Normal<f64>>,
    open: Option<LogNormal<f64>>,
    close: Option<LogNormal<f64>>,
    gap: Exp<f64>,
}

impl ActuationSampler {
    pub fn new(dist: &ActuationDistribution) -> Result<Self> {
        dist.validate()?;
        let angle = if dist.angle_cv > 0.0 {
            let sd = dist.angle_cv * dist.angle_mean_deg;
            let loc = truncated_location(dist.angle_mean_deg, sd, 0.0, MAX_ANGLE_DEG);
            Some(Normal::new(loc, sd).map_err(|e| Error::config(e.to_string()))?)
        } else {
            None
        };
        let lognormal = |mean: f64, cv: f64| -> Result<Option<LogNormal<f64>>> {
            if cv > 0.0 {
                LogNormal::from_mean_cv(mean, cv).map(Some).map_err(|e| Error::config(e.to_string()))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            dist: *dist,
            angle,
            open: lognormal(dist.open_duration_mean_s, dist.open_duration_cv)?,
            close: lognormal(dist.close_duration_mean_s, dist.close_duration_cv)?,
            gap: Exp::new(1.0 / dist.inter_arrival_mean_s).map_err(|e| Error::config(e.to_string()))?,
        })
    }

    pub fn distribution(&self) -> &ActuationDistribution {
        &self.dist
    }

    /// Draws one actuation. Every call consumes the same variates in the same
    /// order whatever the outcome, so parameter changes keep streams aligned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActuationEvent {
        let partial = rng.random::<f64>() < self.dist.partial_probability;
        let full_angle = match &self.angle {
            Some(normal) => loop {
                let a = normal.sample(rng);
                if a > 0.0 && a <= MAX_ANGLE_DEG {
                    break a;
                }
            },
            None => self.dist.angle_mean_deg,
        };
        let (lo, hi) = self.dist.partial_angle_range_deg;
        let partial_angle = lo + (hi - lo) * rng.random::<f64>();
        let opening = self.open.map_or(self.dist.open_duration_mean_s, |d| d.sample(rng));
        let closing = self.close.map_or(self.dist.close_duration_mean_s, |d| d.sample(rng));
        let gap = self.gap.sample(rng);
        ActuationEvent {
            opening_angle_deg: if partial { partial_angle } else { full_angle },
            opening_duration_s: opening,
            closing_duration_s: closing,
            gap_to_next_s: gap,
            partial,
        }
    }
}

pub fn sample_actuation<R: Rng + ?Sized>(dist: &ActuationDistribution, rng: &mut R) -> Result<ActuationEvent> {
    Ok(ActuationSampler::new(dist)?.sample(rng))
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Mean of N(loc, sd) truncated to (lo, hi].
pub fn truncated_normal_mean(loc: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - loc) / sd;
    let b = (hi - loc) / sd;
    let mass = std_normal_cdf(b) - std_normal_cdf(a);
    if mass < 1e-300 {
        return if loc < lo { lo } else { hi };
    }
    loc + sd * (std_normal_pdf(a) - std_normal_pdf(b)) / mass
}

fn truncated_location(target_mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    // The truncated mean is increasing in the location.
    let (mut a, mut b) = (lo - 10.0 * sd, hi + 10.0 * sd);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if truncated_normal_mean(mid, sd, lo, hi) < target_mean {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Opening,
    Closing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    #[default]
    HalfSine,
    /// 10% ramp up, 80% plateau, 10% ramp down.
    Trapezoid,
    /// Uniform rate over the stroke.
    Constant,
}

impl std::str::FromStr for ProfileShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_sine" => Ok(ProfileShape::HalfSine),
            "trapezoid" => Ok(ProfileShape::Trapezoid),
            "constant" => Ok(ProfileShape::Constant),
            other => Err(Error::config(format!("unknown profile shape `{other}`"))),
        }
    }
}

const TRAPEZOID_RAMP: f64 = 0.1;

/// Angular velocity of one stroke; rates are non-negative for both phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub phase: Phase,
    pub shape: ProfileShape,
    pub angle_deg: f64,
    pub duration_s: f64,
}

impl MotionProfile {
    pub fn new(phase: Phase, shape: ProfileShape, angle_deg: f64, duration_s: f64) -> Self {
        Self { phase, shape, angle_deg, duration_s }
    }

    /// Peak rate in deg/s.
    pub fn peak_rate(&self) -> f64 {
        let (a, t) = (self.angle_deg, self.duration_s);
        match self.shape {
            ProfileShape::HalfSine => PI * a / (2.0 * t),
            ProfileShape::Trapezoid => a / ((1.0 - TRAPEZOID_RAMP) * t),
            ProfileShape::Constant => a / t,
        }
    }

    /// Rate in deg/s at `t` seconds into the stroke; zero outside it.
    pub fn rate_at(&self, t: f64) -> f64 {
        let dur = self.duration_s;
        if !(0.0..=dur).contains(&t) {
            return 0.0;
        }
        let peak = self.peak_rate();
        match self.shape {
            ProfileShape::HalfSine => peak * (PI * t / dur).sin(),
            ProfileShape::Trapezoid => {
                let ramp = TRAPEZOID_RAMP * dur;
                if t < ramp {
                    peak * t / ramp
                } else if t > dur - ramp {
                    peak * (dur - t) / ramp
                } else {
                    peak
                }
            }
            ProfileShape::Constant => peak,
        }
    }

    /// Angle swept after `t` seconds.
    pub fn swept_at(&self, t: f64) -> f64 {
        let (a, dur) = (self.angle_deg, self.duration_s);
        let t = t.clamp(0.0, dur);
        let peak = self.peak_rate();
        match self.shape {
            ProfileShape::HalfSine => 0.5 * a * (1.0 - (PI * t / dur).cos()),
            ProfileShape::Trapezoid => {
                let ramp = TRAPEZOID_RAMP * dur;
                if t < ramp {
                    peak * t * t / (2.0 * ramp)
                } else if t > dur - ramp {
                    a - peak * (dur - t).powi(2) / (2.0 * ramp)
                } else {
                    peak * ramp / 2.0 + peak * (t - ramp)
                }
            }
            ProfileShape::Constant => a * t / dur,
        }
    }

    /// Hinge angle at `t` seconds into the stroke, 0 = closed.
    pub fn angle_at(&self, t: f64) -> f64 {
        match self.phase {
            Phase::Opening => self.swept_at(t),
            Phase::Closing => (self.angle_deg - self.swept_at(t)).max(0.0),
        }
    }
}

pub fn angular_velocity_profile(event: &ActuationEvent, phase: Phase, shape: ProfileShape) -> MotionProfile {
    let duration_s = match phase {
        Phase::Opening => event.opening_duration_s,
        Phase::Closing => event.closing_duration_s,
    };
    MotionProfile::new(phase, shape, event.opening_angle_deg, duration_s)
}

/// Renders events as an encoder trace sampled at `sample_rate_hz` (at most
/// 1 kHz, since timestamps are whole milliseconds). The trace starts and ends
/// with `rest_s` seconds at the closed position; an infinite gap is rendered
/// as `rest_s`.
pub fn synthesize_trace(
    events: &[ActuationEvent],
    sample_rate_hz: f64,
    shape: ProfileShape,
    rest_s: f64,
) -> Result<Vec<TraceRecord>> {
    if !(sample_rate_hz > 0.0 && sample_rate_hz <= 1000.0) {
        return Err(Error::domain("sample rate must lie in (0, 1000] Hz"));
    }
    if !(rest_s >= 0.0) {
        return Err(Error::domain("rest time must be non-negative"));
    }

    enum Piece {
        Rest,
        Stroke(MotionProfile),
    }
    let mut pieces: Vec<(f64, f64, Piece)> = Vec::new();
    let mut t = 0.0;
    let mut push = |dur: f64, piece: Piece| {
        pieces.push((t, t + dur, piece));
        t += dur;
    };
    push(rest_s, Piece::Rest);
    for e in events {
        e.validate()?;
        push(e.opening_duration_s, Piece::Stroke(angular_velocity_profile(e, Phase::Opening, shape)));
        push(e.closing_duration_s, Piece::Stroke(angular_velocity_profile(e, Phase::Closing, shape)));
        let gap = if e.gap_to_next_s.is_finite() { e.gap_to_next_s } else { rest_s };
        push(gap, Piece::Rest);
    }
    let total = t;

    let mut records = Vec::new();
    let mut cursor = 0;
    let mut last_ts = i64::MIN;
    for k in 0.. {
        let ts = (k as f64 * 1000.0 / sample_rate_hz).round() as i64;
        let time = ts as f64 / 1000.0;
        if time > total {
            break;
        }
        if ts == last_ts {
            continue;
        }
        last_ts = ts;
        while cursor + 1 < pieces.len() && time >= pieces[cursor].1 {
            cursor += 1;
        }
        let (start, _, piece) = &pieces[cursor];
        let record = match piece {
            Piece::Rest => TraceRecord { timestamp_ms: ts, angle_deg: 0.0, limit_switch: true },
            Piece::Stroke(profile) => {
                TraceRecord { timestamp_ms: ts, angle_deg: profile.angle_at(time - start), limit_switch: false }
            }
        };
        records.push(record);
    }
    Ok(records)
}
