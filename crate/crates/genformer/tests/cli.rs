use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn genformer(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genformer"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for e in walk(dir) {
        out.push(e.strip_prefix(dir).unwrap().display().to_string());
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn dry_run_finishes_quickly_and_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let text = ok(&genformer(&["run", "--profile", "dry-run"], dir.path()));
    assert!(t.elapsed().as_secs() < 60);
    assert!(text.contains("return-period L1"), "{text}");
    let f = files(dir.path());
    for want in [
        "config.json",
        "manifest.json",
        "marginals.json",
        "observed/real_0000.csv",
        "states/cluster_model.json",
        "stategen/manifest.json",
        "genformer/manifest.json",
        "synthetic/physical/real_0000.csv",
        "synthetic/picks.json",
        "baseline/model.json",
        "report.json",
        "figures/exceedance.csv",
        "figures/correlation_final.csv",
    ] {
        assert!(f.iter().any(|x| x == want), "missing {want}");
    }
    let baseline = fs::read_to_string(dir.path().join("baseline/model.json")).unwrap();
    assert!(baseline.contains("\"baseline\": \"translation\""));
    let summary = ok(&genformer(&["report"], dir.path()));
    assert_eq!(summary, text);
}

#[test]
fn staged_commands_reproduce_a_single_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&genformer(&["run", "--profile", "dry-run", "--seed", "3"], a.path()));
    for cmd in ["sde-gen", "fit-states", "train-stategen", "train-genformer", "simulate", "baseline", "evaluate"] {
        ok(&genformer(&[cmd, "--profile", "dry-run", "--seed", "3"], b.path()));
    }
    assert_eq!(files(a.path()), files(b.path()));
    for f in files(a.path()) {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn later_stages_reuse_the_saved_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&genformer(&["sde-gen", "--profile", "dry-run", "--seed", "11"], dir.path()));
    // no flags: the config written by sde-gen applies
    ok(&genformer(&["fit-states"], dir.path()));
    let cfg: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(cfg["seed"], 11);
    assert_eq!(cfg["n_clusters"], 6);
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"d_modle": 8}"#).unwrap();
    let o = genformer(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key `d_modle`"));

    let o = genformer(&["simulate", "--profile", "dry-run"], &dir.path().join("empty"));
    assert!(!o.status.success());

    let o = genformer(&["preprocess", "--profile", "dry-run"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}

fn wind_csv(path: &Path) {
    let mut s = String::from("station_id,year,month,day,hour,wind_speed\n");
    let (mut a, mut b) = (0.3f64, -0.2f64);
    let mut state = 7u64;
    let mut noise = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    for h in 0..24 * 40 {
        let (day, hour) = (1 + h / 24, h % 24);
        let (month, day) = if day > 31 { (2, day - 31) } else { (1, day) };
        a = 0.9 * a + noise();
        b = 0.9 * b + 0.5 * a + noise();
        let diurnal = (hour as f64 / 24.0 * std::f64::consts::TAU).sin();
        for (id, v) in [("st_b", 5.0 + diurnal + b), ("st_a", 6.0 + 2.0 * diurnal + a), ("st_c", 4.0 + a - b)] {
            // one station drops a few readings
            let v = if id == "st_c" && h % 97 == 5 { String::new() } else { format!("{:.3}", v.max(0.0)) };
            let _ = writeln!(s, "{id},2021,{month},{day},{hour},{v}");
        }
    }
    fs::write(path, s).unwrap();
}

#[test]
fn wind_csv_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("wind.csv");
    wind_csv(&csv);
    let out = dir.path().join("out");
    let text = ok(&genformer(&["run", "--profile", "dry-run", "--wind-csv", csv.to_str().unwrap()], &out));
    assert!(text.contains("WindCsv"), "{text}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["counts"]["locations"], 3);
    assert_eq!(report["density"]["reference_kind"], "observed_kde");
    let meta = fs::read_to_string(out.join("observed/meta.json")).unwrap();
    assert!(meta.contains("\"missing\": 10"), "{meta}");
    let first = fs::read_to_string(out.join("synthetic/physical/real_0000.csv")).unwrap();
    assert!(first.starts_with("year,month,day,hour,x1,x2,x3\n"), "{}", &first[..60]);
}
