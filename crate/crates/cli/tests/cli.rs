use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixfix::geometry::{elevation_deg, gdop, geodetic_to_ecef, GeoPoint, LosSet};
use mixfix::io::{EpochFile, SolutionFile, SolveStatus};
use mixfix::simulator::{DataRate, OrbitKind, SimScenario, TruthRecord};
use mixfix::{compute_beta, GateConfig};
use serde_json::Value;
use tempfile::TempDir;

const TABLE1: [(&str, f64, f64); 8] = [
    ("BDS 6", 42_578_331.90, 7_802.87),
    ("BDS 7", 43_977_853.55, -91_637.78),
    ("BDS 13", 24_920_128.79, 37_354.78),
    ("BDS 14", 26_122_983.62, 41_039.78),
    ("GPS 3", 28_345_069.65, -135_213.86),
    ("GPS 11", 26_047_901.81, -34_042.04),
    ("GPS 18", 23_974_396.63, -9_000.01),
    ("GPS 26", 24_044_662.90, 61_266.27),
];
const TOL: f64 = 0.01 + 1e-6;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn mixfix<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_mixfix")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_json(dir: &TempDir, name: &str, value: &impl serde::Serialize) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, serde_json::to_string_pretty(value).unwrap()).unwrap();
    p
}

fn scenario_file(dir: &TempDir, edit: impl FnOnce(&mut SimScenario)) -> PathBuf {
    let mut s = SimScenario::nominal(11);
    edit(&mut s);
    write_json(dir, "scenario.json", &s)
}

fn geo_only(s: &mut SimScenario) {
    s.constellations.truncate(1);
    s.constellations[0]
        .satellites
        .retain(|sat| sat.elements.kind == OrbitKind::Geo);
}

#[test]
fn solve_table_epoch_recovers_table_values() {
    let out = mixfix([Path::new("solve"), &data("table1_mixed.json")]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = SolutionFile::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(doc.status, SolveStatus::Ok);
    assert!(doc.gate.unwrap().passed);
    assert_eq!(doc.recoveries.len(), 8);
    for (r, (id, full, frac)) in doc.recoveries.iter().zip(TABLE1) {
        assert_eq!(r.sat_id.as_str(), id);
        assert!((r.recovered_full_m - full).abs() <= TOL, "{id}");
        assert!((r.fractional_m - frac).abs() <= TOL, "{id}");
    }
    let sol = doc.solution.unwrap();
    assert!((sol.geodetic.latitude_deg - 30.0).abs() < 1e-4);
    assert!((sol.clock_bias_s - 0.010).abs() < 1e-7);
}

#[test]
fn three_fulls_is_insufficient() {
    let dir = TempDir::new().unwrap();
    let full = EpochFile::parse(&fs::read_to_string(data("table1_full.json")).unwrap()).unwrap();
    let keep: Vec<String> = full.observations[..3].iter().map(|o| o.sat_id.to_string()).collect();
    let chopped = dir.path().join("three.json");
    let out = mixfix([
        "chop".as_ref(),
        data("table1_full.json").as_os_str(),
        "--keep-full".as_ref(),
        keep.join(",").as_ref(),
        "--out".as_ref(),
        chopped.as_os_str(),
    ]);
    assert_eq!(code(&out), 0);
    let out = mixfix([Path::new("solve"), &chopped]);
    assert_eq!(code(&out), 3);
    assert_eq!(stdout_json(&out)["status"], "insufficient_measurements");
}

/// Four fulls bunched within a few kilometres of one direction, plus one
/// fractional that should never be resolved.
fn degenerate_epoch() -> Value {
    let user = [6_378_137.0, 0.0, 0.0];
    let sats = [
        [26_000_000.0, 0.0, 0.0],
        [26_000_000.0, 3_000.0, 0.0],
        [26_000_000.0, 0.0, 3_000.0],
        [25_997_000.0, 2_000.0, 2_000.0],
    ];
    let range = |p: &[f64; 3]| ((p[0] - user[0]).powi(2) + (p[1] - user[1]).powi(2) + (p[2] - user[2]).powi(2)).sqrt();
    let mut obs: Vec<Value> = sats
        .iter()
        .enumerate()
        .map(|(i, p)| {
            serde_json::json!({"sat_id": format!("F{i}"), "constellation": "A", "sat_pos_ecef_m": p,
                "pseudorange_m": range(p) + 1000.0, "kind": "full"})
        })
        .collect();
    obs.push(serde_json::json!({"sat_id": "X1", "constellation": "A",
        "sat_pos_ecef_m": [15_000_000.0, 20_000_000.0, 5_000_000.0],
        "pseudorange_m": 1234.5, "kind": "fractional", "modulus_m": 299_792.458}));
    serde_json::json!({"epoch_time_s": 0.0, "observations": obs})
}

#[test]
fn degenerate_geometry_fails_gate_with_record() {
    let dir = TempDir::new().unwrap();
    let path = write_json(&dir, "degenerate.json", &degenerate_epoch());
    let out = mixfix([Path::new("solve"), &path]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["status"], "gate_failed");
    assert_eq!(doc["gate"]["passed"], false);
    assert!((doc["gate"]["beta"].as_f64().unwrap() - 2991.32458).abs() < 1e-9);
    assert!(doc["recoveries"].as_array().unwrap().is_empty());
}

#[test]
fn schema_violation_reports_location() {
    let dir = TempDir::new().unwrap();
    let mut doc = degenerate_epoch();
    doc["observations"][4].as_object_mut().unwrap().remove("modulus_m");
    let path = write_json(&dir, "bad.json", &doc);
    let out = mixfix([Path::new("solve"), &path]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("observation 4 (X1)") && err.contains("modulus_m"), "{err}");

    let path = dir.path().join("broken.json");
    fs::write(&path, "{\n  \"epoch_time_s\": 0.0,\n  \"observations\": [oops]\n}").unwrap();
    let out = mixfix([Path::new("solve"), &path]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn bad_flags_exit_one() {
    assert_eq!(code(&mixfix(["solve"])), 1);
    let out = mixfix([
        Path::new("solve"),
        &data("table1_mixed.json"),
        Path::new("--max-iter"),
        Path::new("0"),
    ]);
    assert_eq!(code(&out), 1);
    assert_eq!(code(&mixfix(["--help"])), 0);
}

#[test]
fn chop_gps_matches_table_fractions() {
    let out = mixfix([
        Path::new("chop"),
        &data("table1_full.json"),
        Path::new("--keep-constellation"),
        Path::new("A"),
    ]);
    assert_eq!(code(&out), 0);
    let file = EpochFile::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    for o in &file.observations {
        let gps = TABLE1
            .iter()
            .find(|t| t.0 == o.sat_id.as_str() && t.0.starts_with("GPS"));
        match gps {
            Some((_, _, frac)) => {
                assert!((o.pseudorange_m - frac).abs() <= TOL, "{}", o.sat_id);
                assert_eq!(o.modulus_m, Some(299_792.458));
            }
            None => assert!(o.modulus_m.is_none()),
        }
    }
    let g18 = file
        .observations
        .iter()
        .find(|o| o.sat_id.as_str() == "GPS 18")
        .unwrap();
    assert!((g18.pseudorange_m + 9_000.01).abs() <= TOL);
}

#[test]
fn chop_keeping_everything_is_identity() {
    let input = EpochFile::parse(&fs::read_to_string(data("table1_full.json")).unwrap()).unwrap();
    let ids: Vec<String> = input.observations.iter().map(|o| o.sat_id.to_string()).collect();
    let out = mixfix([
        "chop".as_ref(),
        data("table1_full.json").as_os_str(),
        "--keep-full".as_ref(),
        ids.join(",").as_ref(),
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        EpochFile::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap(),
        input
    );
}

#[test]
fn chop_unknown_sat_fails() {
    let out = mixfix([
        Path::new("chop"),
        &data("table1_full.json"),
        Path::new("--keep-full"),
        Path::new("G99"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("G99"));
}

#[test]
fn chop_then_solve_recovers_original_fulls() {
    let dir = TempDir::new().unwrap();
    let chopped = dir.path().join("chopped.json");
    let out = mixfix([
        "chop".as_ref(),
        data("table1_full.json").as_os_str(),
        "--keep-constellation".as_ref(),
        "a".as_ref(),
        "--out".as_ref(),
        chopped.as_os_str(),
    ]);
    assert_eq!(code(&out), 0);
    let out = mixfix([Path::new("solve"), &chopped]);
    assert_eq!(code(&out), 0);
    let doc = SolutionFile::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let original = EpochFile::parse(&fs::read_to_string(data("table1_full.json")).unwrap()).unwrap();
    assert_eq!(doc.recoveries.len(), 4);
    for r in &doc.recoveries {
        let o = original.observations.iter().find(|o| o.sat_id == r.sat_id).unwrap();
        assert!((r.recovered_full_m - o.pseudorange_m).abs() < 1e-6, "{}", r.sat_id);
    }
}

fn simulate(dir: &TempDir, scenario: &Path, name: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out_path = dir.path().join(name);
    let mut args: Vec<&std::ffi::OsStr> = vec![
        "simulate".as_ref(),
        scenario.as_os_str(),
        "--truth-lat".as_ref(),
        "30".as_ref(),
        "--truth-lon".as_ref(),
        "110".as_ref(),
        "--truth-height".as_ref(),
        "50".as_ref(),
        "--out".as_ref(),
        out_path.as_os_str(),
    ];
    args.extend(extra.iter().map(std::ffi::OsStr::new));
    (mixfix(args), out_path)
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, |_| {});
    let (o1, p1) = simulate(&dir, &sc, "one.json", &["--seed", "42", "--time", "3600"]);
    let (o2, p2) = simulate(&dir, &sc, "two.json", &["--seed", "42", "--time", "3600"]);
    assert_eq!((code(&o1), code(&o2)), (0, 0));
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    assert_eq!(
        fs::read(dir.path().join("one.truth.json")).unwrap(),
        fs::read(dir.path().join("two.truth.json")).unwrap()
    );
    let (_, p3) = simulate(&dir, &sc, "three.json", &["--seed", "43", "--time", "3600"]);
    assert_ne!(fs::read(&p1).unwrap(), fs::read(&p3).unwrap());
}

#[test]
fn noiseless_simulation_solves_to_truth() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, |s| s.noise_sigma_m = 0.0);
    let (o, epoch) = simulate(&dir, &sc, "epoch.json", &[]);
    assert_eq!(code(&o), 0);
    let truth: TruthRecord =
        serde_json::from_str(&fs::read_to_string(dir.path().join("epoch.truth.json")).unwrap()).unwrap();

    let out = mixfix([Path::new("solve"), &epoch]);
    assert_eq!(code(&out), 0);
    let doc = SolutionFile::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let p = doc.solution.unwrap().position_ecef_m;
    let t = truth.position_ecef_m;
    for k in 0..3 {
        assert!((p[k] - t[k]).abs() < 1e-4, "axis {k}");
    }

    let out = mixfix([Path::new("compare"), &epoch]);
    assert_eq!(code(&out), 0);
    let report = stdout_json(&out);
    for method in ["mixed", "conventional"] {
        for e in report[method]["position_error_m"].as_array().unwrap() {
            assert!(e.as_f64().unwrap().abs() < 1e-4, "{method}");
        }
    }
}

#[test]
fn compare_default_scenario_agrees() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, |_| {});
    for (i, (lat, lon)) in [("30", "110"), ("10", "100"), ("-20", "140")].iter().enumerate() {
        let name = format!("e{i}.json");
        let out_path = dir.path().join(&name);
        let o = mixfix([
            "simulate".as_ref(),
            sc.as_os_str(),
            "--truth-lat".as_ref(),
            lat.as_ref(),
            "--truth-lon".as_ref(),
            lon.as_ref(),
            "--seed".as_ref(),
            i.to_string().as_ref(),
            "--out".as_ref(),
            out_path.as_os_str(),
        ]);
        assert_eq!(code(&o), 0);
        let out = mixfix([Path::new("compare"), &out_path]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let report = stdout_json(&out);
        assert!(report["max_component_difference_m"].as_f64().unwrap() < 1e-6);
        assert_eq!(report["passed"], true);
    }
}

#[test]
fn compare_requires_matching_sidecar() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, |_| {});
    let (_, epoch) = simulate(&dir, &sc, "epoch.json", &[]);
    let sidecar = dir.path().join("epoch.truth.json");

    let mut truth: TruthRecord = serde_json::from_str(&fs::read_to_string(&sidecar).unwrap()).unwrap();
    truth.satellites.pop();
    let short = write_json(&dir, "short.truth.json", &truth);
    let out = mixfix([Path::new("compare"), &epoch, Path::new("--truth"), &short]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("satellites"));

    fs::remove_file(&sidecar).unwrap();
    let out = mixfix([Path::new("compare"), &epoch]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn simulate_without_visible_satellites_exits_five() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, geo_only);
    let out_path = dir.path().join("none.json");
    let out = mixfix([
        "simulate".as_ref(),
        sc.as_os_str(),
        "--truth-lat".as_ref(),
        "85".as_ref(),
        "--truth-lon".as_ref(),
        "0".as_ref(),
        "--out".as_ref(),
        out_path.as_os_str(),
    ]);
    assert_eq!(code(&out), 5);
    assert!(!out_path.exists());
}

fn parse_csv(text: &str) -> Vec<(f64, f64, usize, Option<f64>, String)> {
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("latitude_deg,longitude_deg,n_visible_fastnav,gdop,class")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (
                f[0].parse().unwrap(),
                f[1].parse().unwrap(),
                f[2].parse().unwrap(),
                (!f[3].is_empty()).then(|| f[3].parse().unwrap()),
                f[4].to_owned(),
            )
        })
        .collect()
}

#[test]
fn grid_scan_partitions_and_matches_pointwise_oracle() {
    let dir = TempDir::new().unwrap();
    let sc_path = scenario_file(&dir, geo_only);
    let out = mixfix([
        Path::new("grid-scan"),
        &sc_path,
        Path::new("--grid-step-deg"),
        Path::new("10"),
        Path::new("--time"),
        Path::new("7200"),
    ]);
    assert_eq!(code(&out), 0);
    let rows = parse_csv(std::str::from_utf8(&out.stdout).unwrap());
    assert_eq!(rows.len(), 19 * 36);

    let mut scenario = SimScenario::nominal(11);
    geo_only(&mut scenario);
    let sats: Vec<_> = scenario
        .positions_at(7200.0)
        .into_iter()
        .filter(|s| s.cfg.data_rate == DataRate::FastNav)
        .map(|s| s.pos)
        .collect();
    let beta = compute_beta(&GateConfig::default()).unwrap();
    let mut seen_pass = false;
    for (lat, lon, n, g, class) in &rows {
        assert!(["gate_pass", "visible_gate_fail", "fewer_than_four_visible"].contains(&class.as_str()));
        let user = geodetic_to_ecef(&GeoPoint::new(*lat, *lon, 0.0).unwrap());
        let visible: Vec<_> = sats
            .iter()
            .filter(|p| elevation_deg(p, &user).unwrap() >= 5.0)
            .collect();
        assert_eq!(visible.len(), *n, "{lat},{lon}");
        let expected = if visible.len() < 4 {
            "fewer_than_four_visible"
        } else {
            let gd = LosSet::from_positions(visible.iter().copied(), &user)
                .and_then(|l| gdop(&l))
                .map(|g| g.value())
                .ok();
            if let (Some(a), Some(b)) = (gd, g) {
                assert!((a - b).abs() <= 1e-6 * a, "{lat},{lon}");
            }
            match gd {
                Some(v) if v < beta => "gate_pass",
                _ => "visible_gate_fail",
            }
        };
        assert_eq!(class, expected, "{lat},{lon}");
        seen_pass |= expected == "gate_pass";
    }
    assert!(seen_pass);
}

#[test]
fn grid_scan_geojson_and_worst_epoch() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, |_| {});
    let out = mixfix([
        "grid-scan".as_ref(),
        sc.as_os_str(),
        "--grid-step-deg".as_ref(),
        "15".as_ref(),
        "--worst-epoch-search".as_ref(),
        "0".as_ref(),
        "7200".as_ref(),
        "3600".as_ref(),
        "--out".as_ref(),
        "geojson".as_ref(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["type"], "FeatureCollection");
    assert!([0.0, 3600.0, 7200.0].contains(&doc["time_s"].as_f64().unwrap()));
    let features = doc["features"].as_array().unwrap();
    assert_eq!(features.len(), 13 * 24);
    let s = &doc["summary"];
    let total: u64 = ["gate_pass", "visible_gate_fail", "fewer_than_four_visible"]
        .iter()
        .map(|k| s[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, features.len() as u64);
    for k in ["pass_ratio_points", "pass_ratio_area"] {
        assert!((0.0..=1.0).contains(&s[k].as_f64().unwrap()));
    }
}

#[test]
fn nominal_scenario_round_trips() {
    let out = mixfix(["nominal-scenario", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let s: SimScenario = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(s, SimScenario::nominal(3));
}
