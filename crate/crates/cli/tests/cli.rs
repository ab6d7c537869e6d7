use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/jhu.csv")
}

fn l2calib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_l2calib")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = l2calib(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ingest(dir: &Path, country: &str, start: &str, end: &str) -> PathBuf {
    let out = dir.join(format!("{country}.json"));
    ok(&["ingest", "--input", p(&fixture()), "--country", country, "--start", start, "--end", end, "--out", p(&out)]);
    out
}

#[test]
fn ingest_full_year() {
    let dir = tempfile::tempdir().unwrap();
    let out = ingest(dir.path(), "US", "2020-03-01", "2021-02-28");
    let v = json(&out);
    assert_eq!(v["y"].as_array().unwrap().len(), 365);
    assert_eq!(v["x"].as_array().unwrap().len(), 365);
    assert_eq!(v["country"], "US");
    assert_eq!(v["day0"], "2020-03-01");
    assert_eq!(v["clamp_count"], 0);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.json");
    let missing = l2calib(&["ingest", "--input", p(&fixture()), "--country", "Atlantis", "--start", "2020-03-01", "--end", "2020-04-01", "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "usage");
    assert!(err["message"].as_str().unwrap().contains("Atlantis"));

    let backwards = l2calib(&["ingest", "--input", p(&fixture()), "--country", "US", "--start", "2020-05-01", "--end", "2020-04-01", "--out", p(&out)]);
    assert_eq!(backwards.status.code(), Some(2));
    assert!(!out.exists());

    assert_eq!(l2calib(&["fit"]).status.code(), Some(2));
    assert_eq!(l2calib(&["fit", "--model", "nonsense"]).status.code(), Some(2));
    let threads = Command::new(env!("CARGO_BIN_EXE_l2calib")).args(["fit", "--model", "toy-1d"]).env("L2CALIB_THREADS", "lots").output().unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "Province/State,Country/Region,Lat,Long,1/1/20,1/2/20\n,US,0,0,1\n").unwrap();
    let out = l2calib(&["ingest", "--input", p(&bad), "--country", "US", "--start", "2020-01-02", "--end", "2020-01-03", "--out", p(&dir.path().join("o.json"))]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "runtime");
}

#[test]
fn toy_fit_report_and_band() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let band = dir.path().join("b.csv");
    ok(&["fit", "--model", "toy-1d", "--method", "l2", "--seed", "1", "--n", "50", "--out", p(&rep), "--band", p(&band)]);
    let v = json(&rep);
    let t = v["theta_hat"][0].as_f64().unwrap();
    assert!((t + 0.1789).abs() < 0.15, "{t}");
    assert_eq!(v["method"], "l2");
    assert!(v.get("derived").is_none());
    let csv = std::fs::read_to_string(&band).unwrap();
    assert_eq!(csv.lines().next(), Some("x,fit,lo,hi"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"seed": 1, "fit": {"model": "toy-1d", "method": "ls", "level": 0.9}}"#).unwrap();
    let rep = dir.path().join("r.json");
    ok(&["--config", p(&cfg), "fit", "--method", "mle", "--out", p(&rep)]);
    let v = json(&rep);
    assert_eq!(v["method"], "mle");
    assert_eq!(v["level"], 0.9);
    assert_eq!(v["n"], 50);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        ok(&[
            "simulate", "--model", "seir-stoch", "--theta", "0.4,0.2,0.1,10,10,0", "--population", "5000", "--days", "60", "--replicates", "3",
            "--seed", "3", "--out", p(out),
        ]);
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().next(), Some("day,rep1,rep2,rep3"));
    assert_eq!(text.lines().count(), 61);

    let det = ok(&["simulate", "--model", "seir-det", "--theta", "0.4,0.2,0.1,10,10,0", "--population", "5000", "--days", "5"]);
    let text = String::from_utf8(det.stdout).unwrap();
    assert_eq!(text.lines().nth(1), Some("0,2"));
}

#[test]
fn replicate_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let summary = dir.path().join("s.json");
    ok(&["replicate", "--study", "toy-1d", "--replicates", "3", "--seed", "7", "--out", p(&out), "--summary", p(&summary)]);
    let csv = std::fs::read_to_string(&out).unwrap();
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["l2", "ls", "mle"]);
    assert_eq!(json(&summary)["replicates"], 3);
}

#[test]
fn emulated_toy_fit() {
    let dir = tempfile::tempdir().unwrap();
    let emu = dir.path().join("e.json");
    ok(&["emulate", "--model", "toy-1d", "--m", "30", "--a", "10", "--seed", "2", "--out", p(&emu)]);
    let rep = dir.path().join("r.json");
    ok(&["fit", "--model", "toy-1d", "--emulator", p(&emu), "--seed", "1", "--out", p(&rep)]);
    assert_eq!(json(&rep)["method"], "l2_emu");
    let wrong = l2calib(&["fit", "--model", "toy-3d", "--emulator", p(&emu), "--out", p(&rep)]);
    assert_eq!(wrong.status.code(), Some(2));
}

#[test]
fn seir_pipeline_to_report_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    let mut bands = Vec::new();
    for (country, population) in [("Sylvania", "1000000"), ("Freedonia", "500000")] {
        let series = ingest(dir.path(), country, "2020-03-01", "2020-07-28");
        let rep = dir.path().join(format!("{country}-fit.json"));
        let band = dir.path().join(format!("{country}-band.csv"));
        ok(&[
            "fit", "--model", "seir-det", "--data", p(&series), "--population", population, "--fix", "r0_init=0", "--lower",
            "0.05,0.05,0.02,1,1", "--upper", "1,1,0.5,4000,4000", "--out", p(&rep), "--band", p(&band),
        ]);
        let v = json(&rep);
        assert_eq!(v["country"], country);
        assert_eq!(v["param_names"].as_array().unwrap().len(), 5);
        for key in ["R0", "incubation"] {
            assert!(v["derived"][key]["est"].is_f64(), "{key}");
        }
        reports.push(rep);
        bands.push(band);
    }
    // Sylvania was generated with R0 = 3
    let r0 = json(&reports[0])["derived"]["R0"]["est"].as_f64().unwrap();
    assert!((r0 / 3.0 - 1.0).abs() < 0.10, "{r0}");

    let out = dir.path().join("tables");
    let list = format!("{},{}", p(&reports[0]), p(&reports[1]));
    let blist = format!("{},{}", p(&bands[0]), p(&bands[1]));
    ok(&["report", "--reports", &list, "--bands", &blist, "--out-dir", p(&out)]);
    let r0 = std::fs::read_to_string(out.join("r0.csv")).unwrap();
    let rows: Vec<&str> = r0.lines().collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], "country,R0,lo,hi");
    assert!(rows[1].starts_with("Sylvania,") && rows[2].starts_with("Freedonia,"));
    assert_eq!(std::fs::read_to_string(out.join("incubation.csv")).unwrap().lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.join("bands.csv")).unwrap().lines().count(), 1 + 2 * 150);
    assert_eq!(std::fs::read_to_string(out.join("estimates.csv")).unwrap().lines().count(), 1 + 2 * 5);
}

#[test]
fn stochastic_seir_emulate_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.csv");
    ok(&["simulate", "--model", "seir-stoch", "--theta", "0.5,0.25,0.1,20,20,0", "--population", "20000", "--days", "61", "--seed", "5", "--out", p(&sim)]);
    // cumulative JHU layout from the simulated path
    let daily: Vec<u64> = std::fs::read_to_string(&sim).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    let mut header = String::from("Province/State,Country/Region,Lat,Long,2/29/20");
    let mut row = String::from(",Testland,0,0,0");
    let mut total = 0;
    let day0 = chrono::NaiveDate::from_ymd_opt(2020, 3, 1).unwrap();
    for (d, y) in daily.iter().enumerate() {
        total += y;
        header.push_str(&(day0 + chrono::Duration::days(d as i64)).format(",%-m/%-d/%y").to_string());
        row.push_str(&format!(",{total}"));
    }
    let jhu = dir.path().join("jhu.csv");
    std::fs::write(&jhu, format!("{header}\n{row}\n")).unwrap();
    let series = dir.path().join("s.json");
    ok(&["ingest", "--input", p(&jhu), "--country", "Testland", "--start", "2020-03-01", "--end", "2020-04-30", "--out", p(&series)]);

    let emu = dir.path().join("e.json");
    ok(&[
        "emulate", "--model", "seir-stoch", "--population", "20000", "--days", "61", "--design-days", "8", "--m", "12", "--a", "4",
        "--fix", "i0=20", "--fix", "e0=20", "--fix", "r0_init=0", "--lower", "0.35,0.15,0.07", "--upper", "0.65,0.35,0.13", "--seed", "1",
        "--out", p(&emu),
    ]);
    let rep = dir.path().join("r.json");
    let band = dir.path().join("b.csv");
    ok(&["fit", "--model", "seir-stoch", "--data", p(&series), "--emulator", p(&emu), "--out", p(&rep), "--band", p(&band)]);
    let v = json(&rep);
    assert_eq!(v["method"], "l2_emu");
    assert_eq!(v["param_names"], serde_json::json!(["beta", "kappa", "gamma"]));
    assert!(v["derived"]["R0"]["est"].as_f64().unwrap() > 1.0);
    assert_eq!(std::fs::read_to_string(&band).unwrap().lines().count(), 62);
}
