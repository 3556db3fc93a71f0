use std::fs;
use std::process::{Command, Output};

fn watchdog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_watchdog"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf8")
}

#[test]
fn two_hop_writes_one_row_per_sweep_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = watchdog(&["--out", out, "two-hop", "--sweep", "p_adv", "--iterations", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("two-hop.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert!(lines[0].starts_with("sweep,value,m,n,delta,"));
    assert_eq!(lines.len(), 1 + 6);
    assert!(lines[1].starts_with("p_adv,0.0,"));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("two-hop.json")).unwrap()).unwrap();
    assert_eq!(json["command"], "two-hop");
    assert_eq!(json["rows"].as_array().unwrap().len(), 6);
}

#[test]
fn output_is_byte_identical_across_runs_and_worker_counts() {
    let args = ["two-hop", "--sweep", "p_adv", "--values", "0.1,0.4", "--iterations", "40", "--seed", "9"];
    let a = watchdog(&[&["--workers", "1"], &args[..]].concat());
    let b = watchdog(&[&["--workers", "4"], &args[..]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stderr, b.stderr);
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 3\n\n[two-hop]\nsweep = \"m\"\nvalues = [2, 3]\niterations = 10\nn = 8\n").unwrap();
    let o = watchdog(&["--config", cfg.to_str().unwrap(), "two-hop", "--n", "6"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<_> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let f: Vec<_> = row.split(',').collect();
        assert_eq!(f[0], "m");
        assert_eq!(f[3], "6");
        assert_eq!(f[8], "10");
        assert_eq!(f[9], "3");
    }
}

#[test]
fn analysis_theorem1_hand_example() {
    let o = watchdog(&["analysis", "--table", "theorem1", "--n", "4", "--h", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().nth(1).unwrap(), "theorem1,4,2,4,4,4,4,,,0.25");
}

#[test]
fn analysis_reproduces_the_no_overhearing_reduction() {
    let o = watchdog(&["analysis", "--table", "theorem1", "--n", "8", "--h", "1", "--radii", "8,8,1,1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let value: f64 = text.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    // (1 + 8) / 8
    assert_eq!(value, 1.0);
    let o = watchdog(&["analysis", "--table", "theorem1", "--n", "8", "--h", "2", "--radii", "8,8,1,1"]);
    let value: f64 = stdout(&o).lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(value, 9.0 / 64.0);
}

#[test]
fn theorem2_table_reports_the_expected_count() {
    let o = watchdog(&["analysis", "--table", "theorem2", "--n", "10", "--h", "2", "--m", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let header: Vec<_> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<_> = text.lines().nth(1).unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == "expected_count").unwrap();
    let count: f64 = row[col].parse().unwrap();
    assert!((count - 6.77).abs() < 0.01, "{count}");
}

#[test]
fn oracle_passes_and_exits_zero() {
    let o = watchdog(&["oracle", "--n", "4", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().skip(1).all(|l| l.ends_with(",true")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max relative error"));
}

#[test]
fn multihop_scenarios_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let o = watchdog(&["multihop", "--scenario", "all-parents-malicious", "--rounds", "10", "--trace", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("all-parents-malicious,1,"));
    assert!(row.ends_with(",false,true"), "{row}");
    let lines = fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count(), 10);
    let first: serde_json::Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    assert_eq!(first["round"], 0);
}

#[test]
fn multihop_accepts_a_network_file() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.toml");
    fs::write(
        &net,
        r#"
n = 8
delta = 2
schedule = [[1, 2], [3], [4]]

[[node]]
id = 1
role = "honest"

[[node]]
id = 2
role = "honest"

[[node]]
id = 3
role = "adversarial"
p_adv = 0.5

[[node]]
id = 4
role = "honest"

[[link]]
from = 1
to = 3

[[link]]
from = 2
to = 3

[[link]]
from = 3
to = 4

[[overhear]]
from = 2
to = 1
p = 0.1

[[overhear]]
from = 3
to = 1
p = 0.1
"#,
    )
    .unwrap();
    let o = watchdog(&["multihop", "--network", net.to_str().unwrap(), "--rounds", "30", "--calibration-windows", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("custom,1,8,2,"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(watchdog(&["two-hop"]).status.code(), Some(1));
    assert_eq!(watchdog(&["nonsense"]).status.code(), Some(1));
    assert_eq!(watchdog(&["two-hop", "--sweep", "bogus"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[two-hop]\nsweep = \"m\"\nwidth = 3\n").unwrap();
    let o = watchdog(&["--config", cfg.to_str().unwrap(), "two-hop"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));
    let o = watchdog(&["two-hop", "--sweep", "m", "--p-s", "0.7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_s"));
}

#[test]
fn help_exits_zero() {
    let o = watchdog(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("two-hop"));
}
