use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blitzsim::harness::emit::{SUMMARY_HEADER, TABLE_HEADER, TRACE_HEADER};

fn blitzsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blitzsim")).args(args).output().expect("binary runs")
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).expect("file written").lines().map(str::to_string).collect()
}

#[test]
fn run_writes_summary_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("res");
    let o = blitzsim(&[
        "run",
        "--scenario",
        "DSL-slow",
        "--size",
        "70K",
        "--variant",
        "blitz:1.0",
        "--reps",
        "3",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary = lines(&out.join("summary.csv"));
    assert_eq!(summary[0], SUMMARY_HEADER);
    // Baseline is always added for pairing.
    assert_eq!(summary.len(), 1 + 2 * 3);
    assert!(summary[1].starts_with("DSL-slow,70000,baseline,0,"));
    assert!(summary[4].starts_with("DSL-slow,70000,blitz:1.0,0,"));
    assert!(summary.iter().skip(1).all(|l| l.split(',').count() == 11 && l.ends_with(",false")));

    let table = lines(&out.join("table.csv"));
    assert_eq!(table[0], TABLE_HEADER);
    assert_eq!(table.len(), 3);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = blitzsim(&[
            "run",
            "--scenario",
            "3G",
            "--size",
            "70K",
            "--variant",
            "blitz:3.0",
            "--reps",
            "2",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(out.join("summary.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn config_file_and_hint_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("edge.conf");
    fs::write(
        &cfg,
        "# slow edge link\nname = edge\nrtt_ms = 40\nbottleneck_kbps = 10000\nbuffer_pkts = 40\naccess_tech = cable\nshort_flow_bytes = 70K\nshort_flow_start_ms = 2000\n",
    )
    .unwrap();
    let trace = dir.path().join("hint.csv");
    fs::write(&trace, "0,2000\n1500,12000\n").unwrap();
    let out = dir.path().join("res");
    let o = blitzsim(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--size",
        "70K",
        "--variant",
        "blitz:1.0:1.5",
        "--reps",
        "2",
        "--hint-trace",
        trace.to_str().unwrap(),
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = lines(&out.join("summary.csv"));
    assert_eq!(summary.len(), 5);
    assert!(summary[3].starts_with("edge,70000,blitz:1.0:1.5,0,"));
    let t = lines(&out.join("traces").join("edge_70K_blitz_1.0_1.5.csv"));
    assert_eq!(t[0], TRACE_HEADER);
    let events: Vec<&str> = t[1..].iter().map(|l| l.split(',').nth(2).unwrap()).collect();
    for e in ["send", "deliver", "ack"] {
        assert!(events.contains(&e), "no {e} rows");
    }
}

#[test]
fn bad_arguments_fail() {
    let o = blitzsim(&["run", "--variant", "blitz:zero"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad variant"));

    let o = blitzsim(&["run", "--scenario", "Satellite"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown scenario"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "name = x\nrtt_ms = fast\n").unwrap();
    let o = blitzsim(&["run", "--config", bad.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("rtt_ms"));
}

#[test]
fn demo_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig1");
    let o = blitzsim(&["demo-fig1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("slow start exit"));
    for f in ["top_cwnd.csv", "top_bandwidth.csv", "bottom_cwnd.csv", "bottom_bandwidth.csv"] {
        assert!(lines(&out.join(f)).len() > 100, "{f}");
    }
    assert_eq!(
        lines(&out.join("bottom_bandwidth.csv"))[0],
        "time_ms,flow0_bps_50ms,flow1_bps_50ms,flow0_bps_1s,flow1_bps_1s"
    );
}
