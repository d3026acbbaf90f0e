use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kinesim_cli::config::OVERRIDE_KEYS;
use kinesim_core::motion::{synthesize_trace, write_trace, ActuationEvent, ProfileShape};
use serde_json::Value;

fn kinesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinesim")).args(args).env_remove("KINESIM_SEED").output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).expect("stdout is JSON")
}

#[test]
fn toa_uplink_configs() {
    let sf10 = kinesim(&[
        "toa",
        "--sf",
        "10",
        "--bw",
        "125000",
        "--cr",
        "8",
        "--pl",
        "8",
        "--preamble",
        "8",
        "--crc",
        "--explicit",
    ]);
    assert_eq!(code(&sf10), 0);
    assert_eq!(stdout(&sf10).trim(), "toa_ms=296.960");

    let sf6 = kinesim(&["toa", "--sf", "6", "--implicit", "--pl", "4", "--crc", "--target-mj", "57.5"]);
    assert_eq!(stdout(&sf6).trim(), "toa_ms=18.560 tx_energy_mJ=3.594");

    let cr4 = kinesim(&["toa", "--sf", "10", "--cr", "4", "--crc"]);
    assert_eq!(stdout(&cr4), stdout(&sf10));
}

#[test]
fn toa_rejects_sf6_explicit() {
    assert_eq!(code(&kinesim(&["toa", "--sf", "6", "--explicit"])), 2);
    assert_eq!(code(&kinesim(&["toa", "--sf", "10", "--cr", "9"])), 2);
    assert_eq!(code(&kinesim(&["toa", "--sf", "6", "--explicit", "--implicit"])), 2);
}

#[test]
fn size_bundled_bin() {
    let o = kinesim(&["size", "preset:paper-bin"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&o);
    let ratio = r["gear_ratio"].as_f64().unwrap();
    assert!((ratio - 42.6).abs() / 42.6 < 5e-3, "{ratio}");
    assert_eq!(r["capacitance"].as_f64().unwrap(), 1000e-6);
    assert!(stderr(&o).contains("wake threshold"));
}

#[test]
fn size_window_zero_is_validation_error() {
    let o = kinesim(&["size", "preset:paper-bin", "--override", "harvest_window=0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn smaller_workload_needs_less_stored_energy() {
    let bin = json(&kinesim(&["size", "preset:paper-bin"]));
    let small = json(&kinesim(&["size", "preset:paper-bin", "--override", "transaction_energy=4e-3"]));
    let cv = |r: &Value| r["capacitance"].as_f64().unwrap() * r["wake_threshold"].as_f64().unwrap();
    assert!(cv(&small) <= cv(&bin));
    assert!(small["capacitance"].as_f64() <= bin["capacitance"].as_f64());
    assert!(small["required_power"].as_f64() <= bin["required_power"].as_f64());
}

#[test]
fn size_without_block_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = include_str!("../presets/paper-bin.cfg");
    let cut = &text[..text.find("[sizing]").unwrap()];
    let path = dir.path().join("nosize.cfg");
    fs::write(&path, cut).unwrap();
    assert_eq!(code(&kinesim(&["size", path.to_str().unwrap()])), 2);
}

#[test]
fn infeasible_sizing_exits_3() {
    let o = kinesim(&["size", "preset:paper-bin", "--override", "transaction_energy=1e6"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn missing_config_is_io_error() {
    assert_eq!(code(&kinesim(&["simulate", "/nonexistent/x.cfg"])), 4);
}

#[test]
fn simulate_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = kinesim(&[
            "simulate",
            "preset:paper-bin",
            "--events",
            "1",
            "--seed",
            "11",
            "--per-event",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(stdout(&o).starts_with("events=1 delivered="));
    }
    for f in ["bin.json", "bin.csv", "bin.txt"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(a.path().join("bin.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 11);
    assert_eq!(report["config_fingerprint"].as_str().unwrap().len(), 64);
}

#[test]
fn simulate_summary_line() {
    let d = tempfile::tempdir().unwrap();
    let o = kinesim(&[
        "simulate",
        "preset:paper-bin",
        "--events",
        "200",
        "--seed",
        "7",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    let line = stdout(&o);
    let parts: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(parts.len(), 3, "{line}");
    assert_eq!(parts[0], "events=200");
    assert!(parts[1].starts_with("delivered=") && parts[2].starts_with("success=") && parts[2].ends_with('%'));
    let csv = fs::read_to_string(d.path().join("bin.csv")).unwrap();
    assert!(csv.starts_with("label,actuations,packets,success_pct\nbin,200,"));
}

#[test]
fn seed_precedence_flag_config_env() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().to_str().unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_kinesim"));
        cmd.args(["simulate", "preset:paper-bin", "--events", "2", "--out", out]).args(extra);
        match env {
            Some(v) => cmd.env("KINESIM_SEED", v),
            None => cmd.env_remove("KINESIM_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        let r: Value = serde_json::from_str(&fs::read_to_string(d.path().join("bin.json")).unwrap()).unwrap();
        r["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(&[], None), 0);
    assert_eq!(seed_of(&[], Some("5")), 5);
    assert_eq!(seed_of(&["--override", "seed=6"], Some("5")), 6);
    assert_eq!(seed_of(&["--seed", "9", "--override", "seed=6"], Some("5")), 9);
}

#[test]
fn unwritable_output_is_io_error() {
    let d = tempfile::tempdir().unwrap();
    let blocker = d.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = kinesim(&["simulate", "preset:paper-bin", "--events", "1", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 4);
}

fn write_synth_trace(path: &Path, n: usize) {
    let events: Vec<ActuationEvent> = (0..n)
        .map(|i| {
            let gap = if i + 1 == n { f64::INFINITY } else { 120.0 };
            ActuationEvent::new(72.5, 0.70, 0.45, gap).unwrap()
        })
        .collect();
    let trace = synthesize_trace(&events, 1000.0, ProfileShape::HalfSine, 3.0).unwrap();
    fs::write(path, write_trace(&trace)).unwrap();
}

#[test]
fn replay_synthesized_trace() {
    let d = tempfile::tempdir().unwrap();
    let trace = d.path().join("t.csv");
    write_synth_trace(&trace, 20);
    let o = kinesim(&[
        "replay",
        "preset:paper-bin",
        trace.to_str().unwrap(),
        "--override",
        "channel_loss_probability=0",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("events=20 delivered=20 "), "{}", stdout(&o));
}

#[test]
fn replay_empty_trace_exits_5() {
    let d = tempfile::tempdir().unwrap();
    let trace = d.path().join("empty.csv");
    fs::write(&trace, "timestamp_ms,angle_deg,limit_switch\n").unwrap();
    assert_eq!(
        code(&kinesim(&["replay", "preset:paper-bin", trace.to_str().unwrap(), "--out", d.path().to_str().unwrap()])),
        5
    );
}

#[test]
fn replay_corrupt_row_names_line() {
    let d = tempfile::tempdir().unwrap();
    let trace = d.path().join("bad.csv");
    fs::write(&trace, "timestamp_ms,angle_deg,limit_switch\n0,0,1\n1,abc,0\n").unwrap();
    let o = kinesim(&["replay", "preset:paper-bin", trace.to_str().unwrap()]);
    assert_eq!(code(&o), 5);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

fn sweep(param: &str, from: &str, to: &str, steps: &str, events: &str) -> Vec<Vec<f64>> {
    let o = kinesim(&[
        "sweep",
        "preset:paper-bin",
        "--seed",
        "7",
        "--param",
        param,
        "--from",
        from,
        "--to",
        to,
        "--steps",
        steps,
        "--override",
        &format!("events={events}"),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,success_rate,single,double,no_charge,channel_loss"));
    lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect()
}

#[test]
fn threshold_sweep_nonincreasing() {
    let rows = sweep("wake_threshold", "9", "14", "11", "400");
    assert_eq!(rows.len(), 11);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0] && w[1][1] <= w[0][1]), "{rows:?}");
}

#[test]
fn ratio_sweep_no_charge_nonincreasing() {
    let rows = sweep("gear_ratio", "20", "60", "9", "400");
    assert!(rows.windows(2).all(|w| w[1][4] <= w[0][4]), "{rows:?}");
}

#[test]
fn single_step_sweep_matches_simulate() {
    let rows = sweep("wake_threshold", "12", "14", "1", "300");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 12.0);
    let d = tempfile::tempdir().unwrap();
    let o = kinesim(&[
        "simulate",
        "preset:paper-bin",
        "--seed",
        "7",
        "--events",
        "300",
        "--override",
        "wake_threshold=12",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    let delivered = rows[0][2] + rows[0][3];
    assert!(stdout(&o).starts_with(&format!("events=300 delivered={delivered} ")), "{}", stdout(&o));
}

#[test]
fn sweep_unknown_key_lists_valid_keys() {
    let o = kinesim(&["sweep", "preset:paper-bin", "--param", "flux", "--from", "1", "--to", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("wake_threshold"));
    let o = kinesim(&["sweep", "preset:paper-bin", "--param", "variant", "--from", "1", "--to", "2"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_lists_override_keys() {
    let o = kinesim(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for k in OVERRIDE_KEYS {
        assert!(text.contains(k.key), "{} missing from --help", k.key);
    }
}

#[test]
fn calibrate_reports_charging_margins() {
    let o = kinesim(&["calibrate", "preset:paper-bin"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("min_step_up=1.5"), "{text}");
    let plain = kinesim(&["calibrate", "preset:paper-bin", "--override", "step_up_ratio=1"]);
    assert!(stdout(&plain).contains("min_coupling_efficiency=infeasible"));
}

#[test]
fn bad_override_is_usage_error() {
    assert_eq!(code(&kinesim(&["simulate", "preset:paper-bin", "--override", "wake_threshold=high"])), 2);
    assert_eq!(code(&kinesim(&["simulate", "preset:nope"])), 2);
}
