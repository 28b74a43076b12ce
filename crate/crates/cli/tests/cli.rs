use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qsat::protocols::KeyFile;
use serde_json::Value;

fn qsat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsat")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", stdout(o)))
}

#[test]
fn calc_reports_known_values() {
    let o = qsat(&["--json", "calc", "spacelike", "--decision-time", "1"]);
    assert!(o.status.success());
    let d = json(&o)["min_separation_km"].as_f64().unwrap();
    assert!((d - 599_584.916).abs() < 1.0, "{d}");

    let o = qsat(&["--json", "calc", "sensitivity", "--n", "1e16"]);
    let v = json(&o);
    assert!((v["enhancement"].as_f64().unwrap() - 1e8).abs() < 1.0);

    let o = qsat(&["--json", "calc", "sagnac"]);
    assert!(json(&o)["relative_difference"].as_f64().unwrap() < 1e-6);

    let o = qsat(&["calc", "collapse", "--separation-km", "144", "--alignment-s", "1e-12"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("speed_over_c = "), "{}", stdout(&o));
}

#[test]
fn calc_rejects_bad_input() {
    let o = qsat(&["calc", "sensitivity", "--n", "-3"]);
    assert!(!o.status.success());
    let o = qsat(&["calc", "godel", "--rho", "1e-26", "--enhancement", "0.5"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("enhancement"));
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!qsat(&[]).status.success());
    assert!(!qsat(&["exp", "exp9"]).status.success());
    assert!(!qsat(&["calc", "spacelike"]).status.success());
    assert!(!qsat(&["windows", "--station", "Atlantis"]).status.success());
}

#[test]
fn daily_windows_over_tenerife() {
    let o = qsat(&["windows"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("stations,start_s,end_s,duration_s,max_elevation_deg,delta_longitude_deg"));
    let rows = text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("stations")).count();
    assert!(rows >= 2, "{text}");
    let stats = text.lines().find(|l| l.starts_with("# Tenerife OGS:")).expect("statistics line");
    let useful: u32 = stats.split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!((1..=3).contains(&useful), "{stats}");
}

#[test]
fn unreachable_elevation_warns_but_succeeds() {
    let o = qsat(&["windows", "--min-elevation", "90"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn joint_windows_report_longitude_span() {
    let o = qsat(&["windows", "--station", "Sierra Nevada", "--station", "Calar Alto", "--min-elevation", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("Sierra Nevada+Calar Alto,"), "{text}");
    assert!(text.contains("# joint passes span"), "{text}");

    let o = qsat(&["--json", "windows", "--station", "Sierra Nevada", "--station", "Calar Alto"]);
    assert!(json(&o)["windows"].as_array().is_some_and(|w| !w.is_empty()));
}

fn run_exp(name: &str, dir: &Path) -> Output {
    let out = dir.to_str().unwrap();
    qsat(&["--json", "exp", name, "--seed", "11", "--duration", "30", "--out", out])
}

fn stripped_report(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_s");
    v
}

#[test]
fn experiment_runs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let o = run_exp("exp1", dir);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["exp1_tx.csv", "exp1_rxa.csv", "key.key"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between identical runs");
    }
    assert_eq!(stripped_report(a.path()), stripped_report(b.path()));

    let key = KeyFile::parse(&fs::read_to_string(a.path().join("key.key")).unwrap()).unwrap();
    let report = stripped_report(a.path());
    assert_eq!(report["sessions"][0]["key_length"].as_u64().unwrap(), key.bits.len() as u64);
}

#[test]
fn relay_run_writes_both_keys_and_broadcast() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_exp("exp2", dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["key_a.key", "key_b.key", "broadcast.hex", "report.json"] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    assert_eq!(json(&o)["relay"]["recovered_bit_exact"], Value::Bool(true));
}

#[test]
fn no_logs_skips_event_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qsat(&["exp", "exp3", "--seed", "2", "--duration", "20", "--no-logs", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("outputs written to"));
    assert!(dir.path().join("report.json").exists());
    assert!(!fs::read_dir(dir.path()).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "csv")));
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[source]\nvisibility = 1.7\n[channel_a]\nattenuation_db = lots\n").unwrap();
    let o = qsat(&["exp", "exp1", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("visibility"), "{err}");
    assert!(err.contains("attenuation_db"), "{err}");
}

#[test]
fn syntax_error_is_a_config_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\n").unwrap();
    let o = qsat(&["exp", "exp1", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 1"));
}

#[test]
fn station_never_in_view_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("polar.cfg");
    fs::write(&cfg, "[stations]\na = Pole,89,0,0\n").unwrap();
    let o = qsat(&["exp", "exp1", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
