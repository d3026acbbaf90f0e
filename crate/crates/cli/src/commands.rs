use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use kinesim_core::motion::{parse_trace, segment_actuations};
use kinesim_core::sim::{
    calibrate_coupling, calibrate_partial_probability, charge_from_cutoff, minimum_step_up, nominal_event,
    simulate_deployment, summarize, DeploymentConfig, DeploymentReport, EventSource,
};
use kinesim_core::sizing::size_system;
use kinesim_core::transaction::{calibrate_radio, time_on_air, tx_energy, LoRaConfig, RadioEnergyModel};
use rayon::prelude::*;

use crate::config::{lookup_key, normalize_coding_rate, resolve_seed, Document, RunConfig, SEED_ENV};
use crate::error::{CliError, CliResult};
use crate::{Command, ConfigArgs, ReportArgs};

#[derive(Debug, Args)]
pub struct ToaArgs {
    #[arg(long)]
    pub sf: u8,
    #[arg(long, default_value_t = 125_000)]
    pub bw: u32,
    /// 1-4 or 5-8, both meaning 4/5..4/8
    #[arg(long, default_value_t = 8)]
    pub cr: u8,
    /// Payload bytes
    #[arg(long, default_value_t = 8)]
    pub pl: u16,
    #[arg(long, default_value_t = 8)]
    pub preamble: u16,
    #[arg(long)]
    pub crc: bool,
    /// Explicit header (the default)
    #[arg(long, conflicts_with = "implicit")]
    pub explicit: bool,
    #[arg(long)]
    pub implicit: bool,
    /// Low data rate optimisation
    #[arg(long)]
    pub ldro: bool,
    /// Radio draw while transmitting, mW
    #[arg(long, conflicts_with = "target_mj")]
    pub tx_power_mw: Option<f64>,
    /// Transmit energy of the SF10 bin uplink, mJ; the implied radio draw
    /// is applied to this packet
    #[arg(long)]
    pub target_mj: Option<f64>,
}

pub fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Size { config } => cmd_size(&config, out, err),
        Command::Simulate { config, events, report } => cmd_simulate(&config, events, &report, out, err),
        Command::Replay { config, trace, report } => cmd_replay(&config, &trace, &report, out, err),
        Command::Toa(args) => cmd_toa(&args, out),
        Command::Sweep { config, param, from, to, steps, out: file } => {
            cmd_sweep(&config, &param, from, to, steps, file.as_deref(), out)
        }
        Command::Calibrate { config, target_success, replicates } => {
            cmd_calibrate(&config, target_success, replicates, out)
        }
    }
}

fn load(args: &ConfigArgs) -> CliResult<(Document, RunConfig, u64)> {
    let mut doc = Document::load(&args.config)?;
    for o in &args.overrides {
        doc.apply_override(o)?;
    }
    let cfg = doc.build()?;
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(args.seed, cfg.seed, env.as_deref())?;
    Ok((doc, cfg, seed))
}

fn write_out(w: &mut dyn Write, text: &str) -> CliResult<()> {
    w.write_all(text.as_bytes()).map_err(|e| CliError::io("<stdout>", e))
}

pub fn cmd_size(args: &ConfigArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let (_, cfg, seed) = load(args)?;
    let result = size_system(&cfg.sizing_spec(seed)?)?;
    let json = serde_json::to_string_pretty(&result).expect("sizing result serializes");
    write_out(out, &format!("{json}\n"))?;
    let _ = err.write_all(result.render_table().as_bytes());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes `<label>.json`, `<label>.csv` and `<label>.txt` into `dir`.
pub fn write_reports(dir: &Path, report: &DeploymentReport, per_event: bool) -> CliResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let summary = summarize(std::slice::from_ref(report));
    let files = [("json", report.to_json(per_event) + "\n"), ("csv", summary.to_csv()), ("txt", report.render_table())];
    let mut paths = Vec::new();
    for (ext, text) in files {
        let path = dir.join(format!("{}.{ext}", report.label));
        write_file(&path, &text)?;
        paths.push(path);
    }
    Ok(paths)
}

fn finish_run(
    cfg: &RunConfig,
    report: &DeploymentReport,
    args: &ReportArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let dir = args.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    write_reports(&dir, report, args.per_event || cfg.output.per_event)?;
    let _ = err.write_all(report.render_table().as_bytes());
    write_out(
        out,
        &format!(
            "events={} delivered={} success={:.2}%\n",
            report.totals.actuations,
            report.totals.delivered_events,
            100.0 * report.success_rate
        ),
    )
}

fn seeded(cfg: &RunConfig, seed: u64) -> DeploymentConfig {
    DeploymentConfig { seed, ..cfg.deployment.clone() }
}

pub fn cmd_simulate(
    args: &ConfigArgs,
    events: Option<usize>,
    report_args: &ReportArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let (_, cfg, seed) = load(args)?;
    let mut dep = seeded(&cfg, seed);
    if let (Some(n), EventSource::Sampled { event_count, .. }) = (events, &mut dep.source) {
        *event_count = n;
    }
    let report = simulate_deployment(&dep)?;
    finish_run(&cfg, &report, report_args, out, err)
}

pub fn cmd_replay(
    args: &ConfigArgs,
    trace: &Path,
    report_args: &ReportArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> CliResult<()> {
    let (_, cfg, seed) = load(args)?;
    let text = fs::read_to_string(trace).map_err(|e| CliError::io(trace, e))?;
    let in_trace = |e: kinesim_core::Error| CliError::Trace(format!("{}: {e}", trace.display()));
    let records = parse_trace(&text).map_err(in_trace)?;
    let seg = segment_actuations(&records, cfg.open_threshold).map_err(in_trace)?;
    if seg.events.is_empty() {
        return Err(CliError::Trace(format!("{}: no complete actuation in trace", trace.display())));
    }
    if seg.truncated {
        let _ = writeln!(err, "warning: trace ends mid-actuation; the last excursion was dropped");
    }
    let dep = DeploymentConfig { source: EventSource::Events { events: seg.events }, ..seeded(&cfg, seed) };
    let report = simulate_deployment(&dep)?;
    finish_run(&cfg, &report, report_args, out, err)
}

pub fn cmd_toa(args: &ToaArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = LoRaConfig {
        spreading_factor: args.sf,
        bandwidth: args.bw,
        coding_rate: normalize_coding_rate(args.cr)?,
        preamble_symbols: args.preamble,
        payload_bytes: args.pl,
        explicit_header: !args.implicit,
        crc_on: args.crc,
        low_data_rate_optimize: args.ldro,
        tx_power_dbm: LoRaConfig::bin_uplink().tx_power_dbm,
    };
    let toa = time_on_air(&cfg)?;
    let radio = match (args.tx_power_mw, args.target_mj) {
        (Some(mw), _) => Some(RadioEnergyModel { effective_tx_power: mw * 1e-3 }),
        (None, Some(mj)) => Some(calibrate_radio(mj * 1e-3, &LoRaConfig::bin_uplink())?),
        (None, None) => None,
    };
    let mut line = format!("toa_ms={:.3}", toa * 1e3);
    if let Some(r) = radio {
        line.push_str(&format!(" tx_energy_mJ={:.3}", tx_energy(&cfg, &r)? * 1e3));
    }
    write_out(out, &(line + "\n"))
}

pub const SWEEP_HEADER: &str = "value,success_rate,single,double,no_charge,channel_loss";

pub fn sweep_values(from: f64, to: f64, steps: usize) -> CliResult<Vec<f64>> {
    if steps == 0 {
        return Err(CliError::usage("sweep needs at least one step"));
    }
    if !(from.is_finite() && to.is_finite()) {
        return Err(CliError::usage("sweep bounds must be finite"));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps).map(|i| from + (to - from) * i as f64 / (steps - 1) as f64).collect())
}

pub fn cmd_sweep(
    args: &ConfigArgs,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    file: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let key = lookup_key(param)?;
    if !key.kind.is_numeric() {
        return Err(CliError::usage(format!("`{param}` is not a numeric key")));
    }
    let (doc, _, seed) = load(args)?;
    let values = sweep_values(from, to, steps)?;
    let mut rows: Vec<(f64, DeploymentReport)> = values
        .par_iter()
        .map(|&v| {
            let mut d = doc.clone();
            d.set_numeric(key, v)?;
            let cfg = d.build()?;
            // The sweep seed is fixed up front so every point shares it.
            let report = simulate_deployment(&DeploymentConfig { seed, ..cfg.deployment })?;
            Ok((v, report))
        })
        .collect::<CliResult<_>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut csv = format!("{SWEEP_HEADER}\n");
    for (v, r) in &rows {
        let c = &r.outcome_counts;
        csv.push_str(&format!(
            "{v},{:.6},{},{},{},{}\n",
            r.success_rate, c.single_packet, c.double_packet, c.no_charge, c.channel_loss
        ));
    }
    match file {
        Some(path) => write_file(path, &csv),
        None => write_out(out, &csv),
    }
}

pub fn cmd_calibrate(args: &ConfigArgs, target: Option<f64>, replicates: u64, out: &mut dyn Write) -> CliResult<()> {
    let (_, cfg, seed) = load(args)?;
    let dep = seeded(&cfg, seed);
    let dist = dep.distribution().copied().ok_or_else(|| CliError::usage("calibration needs a sampled source"))?;
    let event = nominal_event(&dist);
    let mut text = format!("nominal_peak_v={:.3}\n", charge_from_cutoff(&dep, &event)?);
    let or_infeasible = |r: kinesim_core::Result<f64>| -> CliResult<String> {
        match r {
            Ok(v) => Ok(format!("{v:.4}")),
            Err(kinesim_core::Error::Infeasible(_)) => Ok("infeasible".into()),
            Err(e) => Err(e.into()),
        }
    };
    text.push_str(&format!("min_step_up={}\n", or_infeasible(minimum_step_up(&dep, &event))?));
    text.push_str(&format!("min_coupling_efficiency={}\n", or_infeasible(calibrate_coupling(&dep, &event))?));
    if let Some(t) = target {
        if !(t > 0.0 && t < 1.0) {
            return Err(CliError::usage("target success must lie in (0, 1)"));
        }
        if replicates == 0 {
            return Err(CliError::usage("need at least one replicate"));
        }
        let p = calibrate_partial_probability(&dep, t, replicates)?;
        text.push_str(&format!("partial_probability={p:.4}\n"));
    }
    write_out(out, &text)
}
