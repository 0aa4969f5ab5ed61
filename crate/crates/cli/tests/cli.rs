use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn nhosc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nhosc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn phase_map_boundary_has_half_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map.csv");
    let o = nhosc(&["phase-map", "--phi", "pi/6", "--dm2", "2.5e-3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&out);
    assert_eq!(h, ["kappa", "sigma", "regime", "discriminant"]);
    assert_eq!(rows.len(), 200 * 200);

    // highest regime change in each κ column
    let (ik, is, ir) = (col(&h, "kappa"), col(&h, "sigma"), col(&h, "regime"));
    let mut pts = Vec::new();
    for column in rows.chunks(200) {
        for w in column.windows(2).rev() {
            if w[0][ir] != w[1][ir] {
                pts.push((num(&w[0][ik]), 0.5 * (num(&w[0][is]) + num(&w[1][is]))));
                break;
            }
        }
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope - 0.5).abs() / 0.5 < 0.02, "slope {slope}");
}

#[test]
fn phase_map_single_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let path = out.to_str().unwrap();
    let o = nhosc(&[
        "phase-map", "--phi", "pi/6", "--kappa-min", "5e-3", "--kappa-max", "6e-3", "--kappa-samples", "2",
        "--sigma-min", "0", "--sigma-max", "1e-3", "--sigma-samples", "2", "--out", path,
    ]);
    assert!(o.status.success());
    let (h, rows) = csv_rows(&out);
    assert_eq!(rows[0][col(&h, "regime")], "exceptional");
}

#[test]
fn g_metric_unbroken_rows_lose_probability() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.csv");
    let o = nhosc(&[
        "probability", "--method", "g-metric", "--tau", "pi/6", "--sigma", "0", "--dm2", "2.5e-3",
        "--energy", "1", "--end", "1e5", "--samples", "200", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (h, rows) = csv_rows(&out);
    assert!((num(&rows[0][col(&h, "p_ab")]) - 0.25).abs() < 1e-15);
    let off = rows
        .iter()
        .filter(|r| (num(&r[col(&h, "sum_a")]) - 1.0).abs() > 1e-6)
        .count();
    assert!(off > 190);
}

#[test]
fn density_analytic_rows_conserve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3.csv");
    let o = nhosc(&[
        "probability", "--method", "density-analytic", "--theta", "pi/3", "--alpha", "pi/6", "--beta",
        "pi/3", "--dm2", "2.5e-3", "--samples", "100", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let (h, rows) = csv_rows(&out);
    for r in &rows {
        assert!((num(&r[col(&h, "sum_a")]) - 1.0).abs() < 1e-10);
        assert!((num(&r[col(&h, "sum_b")]) - 1.0).abs() < 1e-10);
    }
}

#[test]
fn long_baseline_plateaus_differ() {
    let o = nhosc(&[
        "probability", "--method", "density-trace", "--theta", "pi/4", "--alpha", "pi/6", "--beta", "pi/3",
        "--scan", "LE", "--start", "20000", "--end", "40000", "--samples", "3", "--format", "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    let last = &rows[2];
    let (pab, pba) = (last["p_ab"].as_f64().unwrap(), last["p_ba"].as_f64().unwrap());
    assert!((pab - pba).abs() > 1e-3);
    assert!((rows[1]["p_ab"].as_f64().unwrap() - pab).abs() < 1e-9);
}

#[test]
fn csv_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = nhosc(&[
            "probability", "--method", "density-rk4", "--theta", "0.7", "--kappa", "1e-3", "--phi", "pi/3",
            "--samples", "20", "--out", p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
        fs::read(p).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn config_file_with_command_line_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"method": "g-metric", "tau": "pi/6", "samples": 7, "end": 1000, "units_mode": "rounded"}"#,
    )
    .unwrap();
    let o = nhosc(&["probability", "--config", cfg.to_str().unwrap(), "--samples", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["probability", "--samples", "0"],
        vec!["probability", "--start", "5", "--end", "1"],
        vec!["probability", "--theta", "pi/x"],
        vec!["probability", "--method", "g-metric", "--theta", "pi/3"],
        vec!["phase-map", "--kappa-samples", "0"],
        vec!["validate", "--points", "0"],
        vec!["validate", "--times", "0"],
        vec!["bogus"],
    ] {
        let o = nhosc(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn validate_passes_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = nhosc(&["validate", "--points", "200", "--rk4-points", "30", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
    let pairs = v["pairs"].as_object().unwrap();
    assert!(pairs.contains_key("closed-form vs trace-pipeline"));
    assert!(pairs.values().all(|p| p["max_abs_dev"].as_f64().unwrap() >= 0.0));
}

#[test]
fn injected_fault_exits_one() {
    let o = nhosc(&["validate", "--points", "20", "--rk4-points", "0", "--inject-fault"]);
    assert_eq!(o.status.code(), Some(1));
}
