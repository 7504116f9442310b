use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use cascade::farfield::{write_farfield, DipoleBasis, FarFieldMap};
use cascade::{CascadeModel, C64};
use serde_json::Value;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().expect("run cascade")
}

fn ok(args: &[&str]) -> Output {
    let o = cascade(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

/// Data rows of a CSV output as numbers.
fn table(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn dopmap_vacuum() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    ok(&["dopmap", "--grid", "181x360", "--out", s(dir.path())]);
    assert!(start.elapsed().as_secs_f64() < 5.0);
    let radial = table(&dir.path().join("radial_profiles.csv"));
    assert_eq!(radial.len(), 181);
    assert!(radial[0][2].abs() < 1e-12);
    let row45 = radial.iter().find(|r| (r[0] - 45.0).abs() < 1e-6).expect("45° row");
    assert!((row45[2] - 1.0 / 3.0).abs() < 1e-6);
    let dop = table(&dir.path().join("dop.csv"));
    assert_eq!(dop.len(), 181 * 360);
    assert!(dop.iter().all(|r| (0.0..=1.0).contains(&r[2])));
    let cfg = json(&dir.path().join("run_config.json"));
    assert_eq!(cfg["seed"], 0);
    assert_eq!(cfg["command"], "dopmap");
    let head = fs::read_to_string(dir.path().join("dop.csv")).unwrap();
    assert!(head.starts_with("# run_config: {"));
}

#[test]
fn missing_farfield_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = cascade(&["dopmap", "--farfield", "/nonexistent/map.ff", "--out", s(dir.path())]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/nonexistent/map.ff"), "{err}");
}

#[test]
fn scan_theta_trend() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["scan-theta", "--grid", "91x180", "--out", s(dir.path())]);
    let t = table(&dir.path().join("scan_theta.csv"));
    assert!(t[0][1] >= 0.999);
    assert!(t.last().unwrap()[1] <= 1e-3);
    let k = t.windows(2).position(|w| w[0][1] >= 0.5 && w[1][1] < 0.5).unwrap();
    let (a, b) = (&t[k], &t[k + 1]);
    let cross = a[0] + (a[1] - 0.5) / (a[1] - b[1]) * (b[0] - a[0]);
    assert!((cross - 58.8).abs() < 0.5, "{cross}");
    let report = json(&dir.path().join("scan_theta.json"));
    assert_eq!(report["rows"].as_array().unwrap().len(), 91);
}

#[test]
fn scan_aperture_is_monotone_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["scan-aperture", "--grid", "61x120", "--theta-max", "5:90:5", "--out", s(dir.path())];
    ok(&args);
    let first = fs::read(dir.path().join("scan_aperture.csv")).unwrap();
    let t = table(&dir.path().join("scan_aperture.csv"));
    assert!(t[0][1] >= 0.999);
    for w in t.windows(2) {
        assert!(w[1][1] <= w[0][1] + 1e-9);
    }
    assert!(t.iter().all(|r| r[9] < 1e-6));
    ok(&args);
    assert_eq!(first, fs::read(dir.path().join("scan_aperture.csv")).unwrap());
}

#[test]
fn farfield_input_matches_analytic_model() {
    let dir = tempfile::tempdir().unwrap();
    let map = FarFieldMap::from_model(&CascadeModel::vacuum(), 61, 120, 54f64.to_radians()).unwrap();
    let path = dir.path().join("vacuum.ff");
    write_farfield(fs::File::create(&path).unwrap(), &map).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["pair-density", "--farfield", s(&path), "--grid", "61x120", "--mask", "disc:54", "--out", s(&a)]);
    ok(&["pair-density", "--grid", "61x120", "--mask", "disc:54", "--out", s(&b)]);
    let (ja, jb) = (json(&a.join("pair_density.json")), json(&b.join("pair_density.json")));
    for part in ["re", "im"] {
        for i in 0..4 {
            for j in 0..4 {
                let x = ja["rho"][part][i][j].as_f64().unwrap();
                let y = jb["rho"][part][i][j].as_f64().unwrap();
                assert!((x - y).abs() < 1e-4);
            }
        }
    }
    ok(&["decompose", "--rho", s(&a.join("rho.txt")), "--out", s(&a)]);
    let d = json(&a.join("decomposition.json"));
    assert!(d["decomposition"]["residual"].as_f64().unwrap() < 1e-6);
}

#[test]
fn unresolved_quadrature_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // Rough synthetic far field that a 16×32 grid cannot resolve.
    let (nt, np) = (41, 80);
    let field = |k: usize, n: usize| {
        let x = ((n * 7919 + k * 104_729) % 1000) as f64 / 1000.0;
        [C64::new(x, 0.3 - x), C64::new(1.0 - x, x * x)]
    };
    let fields = (0..2).map(|k| (0..nt * np).map(|n| field(k, n)).collect()).collect();
    let map = FarFieldMap::new(nt, np, 54f64.to_radians(), DipoleBasis::CircularPM, fields).unwrap();
    let path = dir.path().join("rough.ff");
    write_farfield(fs::File::create(&path).unwrap(), &map).unwrap();
    let o = cascade(&["pair-density", "--farfield", s(&path), "--grid", "16x32", "--mask", "disc:50", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not converged"));
    assert!(dir.path().join("pair_density.json").exists());
}

#[test]
fn monte_carlo_pair_density_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["pair-density", "--integrator", "mc:20000", "--seed", "4", "--mask", "disc:40", "--out", s(dir.path())]);
    let j = json(&dir.path().join("pair_density.json"));
    assert!(j["std_error"]["re"][0][0].as_f64().unwrap() > 0.0);
    assert_eq!(j["run_config"]["seed"], 4);
}

#[test]
fn tomography_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["tomo", "simulate", "--state", "phi_plus", "--pairs", "10000", "--seed", "3", "--out", s(&d.join("sim"))]);
    ok(&["tomo", "reconstruct", "--counts", s(&d.join("sim/counts.csv")), "--bootstrap", "50", "--out", s(&d.join("rec"))]);
    let r = json(&d.join("rec/reconstruction.json"));
    assert!(r["fidelity"].as_f64().unwrap() >= 0.99);
    assert!(r["error_bars"]["fidelity_std"].as_f64().unwrap() > 0.0);

    ok(&["tomo", "simulate", "--state", "phi_plus", "--noiseless", "--out", s(&d.join("clean"))]);
    ok(&["tomo", "reconstruct", "--counts", s(&d.join("clean/counts.csv")), "--method", "linear", "--bootstrap", "0", "--out", s(&d.join("lin"))]);
    let r = json(&d.join("lin/reconstruction.json"));
    let want = |i: usize, j: usize| if (i == 0 || i == 3) && (j == 0 || j == 3) { 0.5 } else { 0.0 };
    for i in 0..4 {
        for j in 0..4 {
            assert!((r["rho"]["re"][i][j].as_f64().unwrap() - want(i, j)).abs() < 1e-8);
            assert!(r["rho"]["im"][i][j].as_f64().unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn malformed_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "# total_pairs_per_setting: 100\nprojector,count\nHH,12\nHV,lots\n").unwrap();
    let o = cascade(&["tomo", "reconstruct", "--counts", s(&path), "--out", s(dir.path())]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}
