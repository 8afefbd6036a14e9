//! End-to-end runs of the `spincat` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;
use serde_json::Value;
use spincat::Angle;

fn spincat(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spincat"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is a JSON error")
}

/// CSV rows below the `#` comment lines, as `(header, rows)`.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    (header, rows)
}

fn body(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

proptest! {
    #[test]
    fn angle_literals_round_trip(x in -10.0..10.0f64, rad in any::<bool>()) {
        let a = if rad { Angle::rad(x) } else { Angle::pi(x) };
        prop_assert_eq!(a.to_string().parse::<Angle>().unwrap(), a);
    }

    #[test]
    fn bare_numbers_are_multiples_of_pi(x in -10.0..10.0f64) {
        let bare: Angle = format!("{x}").parse().unwrap();
        let tagged: Angle = format!("{x}pi").parse().unwrap();
        prop_assert_eq!(bare, tagged);
        prop_assert_eq!(bare.radians(), x * std::f64::consts::PI);
    }
}

#[test]
fn missing_spin_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(dir.path(), &["evolve", "--tau-end", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "usage");
}

#[test]
fn invalid_values_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["evolve", "--J", "1.3", "--tau-end", "1"][..],
        &["evolve", "--J", "2", "--omega", "0.1pi", "--tau-end", "1"],
        &["evolve", "--J", "2", "--r", "-1", "--tau-end", "1"],
        &["evolve", "--J", "2", "--r", "0", "--tau-end", "-1"],
        &["fringe", "--J", "10", "--noise", "spin:uniform:0.1"],
        &["eigen", "--J", "2", "--omega", "xpi", "--phi", "0", "--trace", "gap"],
    ] {
        let o = spincat(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&o)["error"], "usage", "{args:?}");
    }
}

#[test]
fn infeasible_threshold_exits_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(
        dir.path(),
        &[
            "optimize",
            "--J",
            "2",
            "--n-omega",
            "2",
            "--n-phi",
            "2",
            "--delta-threshold",
            "0.99pi",
        ],
    );
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "infeasible");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"]["exit_code"], 4);
    assert!(dir.path().join("scan.csv").exists());
}

#[test]
fn oat_evolution_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(
        dir.path(),
        &[
            "--seed",
            "5",
            "evolve",
            "--J",
            "2",
            "--r",
            "0",
            "--tau-end",
            "6.2832",
            "--q-at",
            "0,3.1416",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&dir.path().join("trace.csv"));
    assert_eq!(header[..4], ["tau", "F", "gamma_prime_0", "delta_0/pi"]);
    assert_eq!(rows.len(), 127);
    assert!((rows[0][1] - 1.0).abs() < 1e-9);
    assert!(rows.iter().all(|r| r[6] < 1e-10));
    for f in ["qfunc_tau0.csv", "qfunc_tau3.1416.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 5);
    assert_eq!(m["status"], "ok");
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["config"]["command"]["command"], "evolve");
    assert_eq!(m["config"]["command"]["tau_end"].to_string(), "6.2832");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn reported_j50_drive_reaches_a_cat_window() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(
        dir.path(),
        &[
            "evolve",
            "--J",
            "50",
            "--omega",
            "0.0204pi",
            "--phi",
            "0.024pi",
            "--tau-end",
            "25",
            "--sample-dtau",
            "0.1",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = read_csv(&dir.path().join("trace.csv"));
    assert!(rows.iter().any(|r| r[1] >= 0.99 && r[3] >= 0.6), "no cat window");
}

#[test]
fn same_seed_gives_identical_tables() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = spincat(
            dir.path(),
            &[
                "--seed",
                seed,
                "fringe",
                "--J",
                "10",
                "--omega",
                "0.03pi",
                "--phi",
                "0",
                "--noise",
                "spin:gauss:0.05",
                "--trials",
                "30",
                "--n-theta",
                "21",
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        body(&dir.path().join("fringe.csv"))
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
}

#[test]
fn json_format_mirrors_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(
        dir.path(),
        &[
            "--format",
            "json",
            "eigen",
            "--J",
            "10",
            "--omega",
            "0.03pi",
            "--phi",
            "0",
            "--trace",
            "gap",
            "--tau-end",
            "1",
            "--sample-dtau",
            "0.25",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("gap.json")).unwrap()).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4]["tau"], 1.0);
    assert!(rows[0]["gap"].as_f64().unwrap() > 0.0);
    assert!(rows[0].get("phase/pi").is_some());
}

#[test]
fn negative_angles_parse_as_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = spincat(
        dir.path(),
        &[
            "qfunc",
            "--J",
            "2",
            "--omega",
            "0.01pi",
            "--phi",
            "-0.5pi",
            "--tau",
            "0.5",
            "--n-alpha",
            "3",
            "--n-beta",
            "3",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["command"]["drive"]["phi"], "-0.5pi");
}
