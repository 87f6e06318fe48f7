use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sgcasimir::energy::{plane_sphere_energy, PlaneSphereNumerics, ThermalState};
use sgcasimir::materials::MaterialModel;
use sgcasimir::mie::SphereSpec;
use sgcasimir_cli::config::{Format, RunConfig};
use sgcasimir_cli::{emit_plot_data, read_rows, run, CliError, PlotKind, ROW_COLUMNS};
use tempfile::TempDir;

const TINY: &str = "[numerics.truncation]\nlmax = 3\nn_orders = 3\nn_kx = 4\nn_ky = 8\nky_cutoff = 8.0\n";

fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn sgcasimir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgcasimir"))
        .args(args)
        .env_remove(sgcasimir_cli::CACHE_DIR_ENV)
        .output()
        .unwrap()
}

fn small_config(extra_output: &str) -> String {
    format!(
        r#"
[geometry]
d = 2.0e-7
R_S = 1.0e-7

[grating]
D = 1.0e-6
h = 3.0e-7
f = 0.5
material = "silica"

[sphere]
material = "gold"

[numerics]
tol = 1e-3
{TINY}
[sweep]
variable = "x_S"
values = [0.0, 2.5e-7, 5.0e-7, 7.5e-7]

[output]
path = "out.csv"
{extra_output}
"#
    )
}

#[test]
fn invalid_filling_exits_with_field_name() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &small_config("").replace("f = 0.5", "f = 1.3"));
    let out = sgcasimir(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("grating.f") && err.contains("1.3"), "{err}");
    assert!(!dir.path().join("out.csv").exists());
}

#[test]
fn invalid_inputs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &small_config(""));
    let c = cfg.to_str().unwrap();
    let bad_plot = sgcasimir(&["run", c, "--emit-plot", "energy_vs_T"]);
    assert_eq!(bad_plot.status.code(), Some(2));
    let bad_sweep = sgcasimir(&["run", c, "--sweep-override", "d=1e-7,-2e-7"]);
    assert_eq!(bad_sweep.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_sweep.stderr).contains("sweep.values[1]"));
    let bad_var = sgcasimir(&["run", c, "--sweep-override", "T=300"]);
    assert_eq!(bad_var.status.code(), Some(2));
    let bad_tol = sgcasimir(&["run", c, "--tol", "0.5"]);
    assert_eq!(bad_tol.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_tol.stderr).contains("numerics.tol"));
    for (from, to, field) in [
        ("material = \"gold\"", "material = \"unobtainium\"", "sphere.material"),
        ("d = 2.0e-7", "d = 0.0", "geometry.d"),
        ("lmax = 3", "lmax = 0", "numerics.truncation"),
    ] {
        let cfg = config(dir.path(), &small_config("").replace(from, to));
        let out = sgcasimir(&["run", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{field}");
        assert!(String::from_utf8_lossy(&out.stderr).contains(field), "{field}");
    }
    assert!(matches!("energy_vs_T".parse::<PlotKind>(), Err(CliError::UnknownPlot(_))));
    assert!(matches!(RunConfig::from_toml("[geometry]\nd = 1.0"), Err(CliError::Config(_))));
}

#[test]
fn warm_cache_reproduces_output_bitwise() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), &small_config("force = true"));
    let cache = dir.path().join("cache");
    let args = [
        "run",
        cfg.to_str().unwrap(),
        "--deterministic",
        "--cache-dir",
        cache.to_str().unwrap(),
        "--emit-plot",
        "energy_vs_xS",
        "--emit-plot",
        "force_vs_xS",
    ];
    let first = sgcasimir(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let csv_a = std::fs::read(dir.path().join("out.csv")).unwrap();
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 4);
    let second = sgcasimir(&args);
    assert_eq!(second.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&second.stdout).contains("4 of 4 points from cache"));
    assert_eq!(csv_a, std::fs::read(dir.path().join("out.csv")).unwrap());

    let text = String::from_utf8(csv_a).unwrap();
    assert_eq!(text.lines().next().unwrap(), ROW_COLUMNS.join(","));
    let rows = read_rows(&dir.path().join("out.csv"), Format::Csv).unwrap();
    assert_eq!(rows.len(), 4);
    let kbt = ThermalState::new(300.0).unwrap().kbt;
    for r in &rows {
        assert!((r.F_over_kBT - r.F_J / kbt).abs() <= 1e-15 * r.F_over_kBT.abs());
        assert!(r.F_J < 0.0 && r.eta_single > 0.0 && r.eta_double.is_none());
        assert_eq!((r.lmax, r.N, r.wall_time_s), (3, 3, 0.0));
    }
    // ridge center 0.25 um, groove center 0.75 um: force vanishes there and
    // points back toward the ridge in between
    let fx: Vec<f64> = rows.iter().map(|r| r.F_x_N.unwrap()).collect();
    let peak = fx.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(fx[1].abs() < 1e-3 * peak && fx[3].abs() < 1e-3 * peak, "{fx:?}");
    assert!(fx[0] > 0.0 && fx[2] < 0.0, "{fx:?}");
    let force_csv = std::fs::read_to_string(dir.path().join("out_force_vs_xS.csv")).unwrap();
    assert!(force_csv.starts_with("x_S_m,F_x_N\n"));
    assert_eq!(force_csv.lines().count(), 5);
    let script = std::fs::read_to_string(dir.path().join("out_energy_vs_xS.py")).unwrap();
    assert!(script.contains("out_energy_vs_xS.csv"));

    // a numerics change invalidates every entry
    let third = sgcasimir(&[&args[..5], &["--tol", "2e-3"]].concat());
    assert_eq!(third.status.code(), Some(0));
    assert!(!String::from_utf8_lossy(&third.stdout).contains("from cache"));
    assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 8);
}

#[test]
fn json_mirrors_csv_schema_and_writes_ledger() {
    let dir = TempDir::new().unwrap();
    let body = small_config("format = \"json\"\nledger = true\neta_double = true")
        .replace("values = [0.0, 2.5e-7, 5.0e-7, 7.5e-7]", "values = [2.5e-7]")
        .replace("path = \"out.csv\"", "path = \"out.json\"");
    let cfg = config(dir.path(), &body);
    let out = sgcasimir(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let obj = value.as_array().unwrap()[0].as_object().unwrap();
    let keys: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut expected = ROW_COLUMNS.to_vec();
    expected.sort();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(sorted, expected);
    let pos: Vec<usize> = ROW_COLUMNS.iter().map(|c| text.find(&format!("\"{c}\"")).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "json field order");
    assert!(obj["F_x_N"].is_null() && obj["eta_double"].is_f64());
    let rows = read_rows(&dir.path().join("out.json"), Format::Json).unwrap();
    let ledger = std::fs::read_to_string(dir.path().join("out_ledger/point_0000.csv")).unwrap();
    assert_eq!(ledger.lines().count(), rows[0].n_terms + 1);
    let last: f64 = ledger.lines().last().unwrap().split(',').nth(3).unwrap().parse().unwrap();
    assert!((last / rows[0].F_J - 1.0).abs() < 1e-12);
}

#[test]
fn failed_points_exit_3_and_keep_partial_results() {
    let dir = TempDir::new().unwrap();
    // tabulated curve ending at 2e14 rad/s: evaluation fails above 2e15 rad/s,
    // which only the close point reaches
    let table = dir.path().join("short.txt");
    std::fs::write(&table, "1e13 3.0\n2e14 2.5\n").unwrap();
    let body = small_config("")
        .replace("material = \"silica\"", &format!("material = \"file:{}\"", table.display()))
        .replace("variable = \"x_S\"", "variable = \"d\"")
        .replace("values = [0.0, 2.5e-7, 5.0e-7, 7.5e-7]", "values = [5.0e-6, 5.0e-8]");
    let cfg = config(dir.path(), &body);
    let out = sgcasimir(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("out.csv"), Format::Csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].d_m, 5e-6);
    let errors: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out_errors.json")).unwrap()).unwrap();
    assert_eq!(errors[0]["index"], 1);
    assert_eq!(errors[0]["variable"], "d");
}

#[test]
fn distance_sweep_at_paper_parameters() {
    let dir = TempDir::new().unwrap();
    let body = r#"
[geometry]
d = 1.0e-6
R_S = 5.0e-6

[grating]
D = 1.0e-6
h = 5.0e-7
f = 0.5
material = "silica"

[sphere]
material = "gold"

[sweep]
variable = "d"
values = [1.0e-6, 1.5e-6, 2.0e-6]

[output]
path = "fig2.csv"
"#;
    let cfg = config(dir.path(), body);
    let out = sgcasimir(&["run", cfg.to_str().unwrap(), "--emit-plot", "energy_vs_d", "--emit-plot", "eta_vs_d"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("fig2.csv"), Format::Csv).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.windows(2).all(|w| w[0].F_J.abs() > w[1].F_J.abs()), "{rows:?}");
    assert!(rows.iter().all(|r| r.x_S_m == 2.5e-7 && r.eta_single < 1.0));
    let eta = std::fs::read_to_string(dir.path().join("fig2_eta_vs_d.csv")).unwrap();
    assert!(eta.starts_with("f,d_m,R_S_m,d_over_R,eta_single,eta_double\n"));
    assert_eq!(eta.lines().count(), 4);
}

#[test]
fn flat_grating_point_matches_plane_sphere_reference() {
    let dir = TempDir::new().unwrap();
    let body = r#"
[geometry]
d = 2.0e-7
R_S = 5.0e-7

[grating]
D = 1.0e-6
h = 5.0e-7
f = 1.0
material = "silica"

[sphere]
material = "gold"

[numerics]
tol = 1e-4

[output]
path = "plane.csv"
"#;
    let mut cfg = RunConfig::from_toml(body).unwrap();
    cfg.output.path = dir.path().join("plane.csv");
    let report = run(&cfg, &[]).unwrap();
    assert!(report.errors.is_empty());
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    let sphere = SphereSpec::new(5e-7, MaterialModel::gold()).unwrap();
    let numerics = PlaneSphereNumerics { lmax: row.lmax, n_k: 80, cutoff: 10.0 };
    let reference =
        plane_sphere_energy(&sphere, &MaterialModel::silica(), 2e-7, &ThermalState::new(300.0).unwrap(), 1e-4, &numerics)
            .unwrap();
    assert!((row.F_J / reference - 1.0).abs() < 5e-3, "{} vs {reference}", row.F_J);
}

#[test]
fn plot_kinds_need_their_columns() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::from_toml(&small_config("")).unwrap();
    cfg.output.path = dir.path().join("out.csv");
    cfg.sweep = Some("x_S=2.5e-7".parse().unwrap());
    let report = run(&cfg, &[]).unwrap();
    let stem = dir.path().join("p");
    assert!(matches!(
        emit_plot_data(&report.rows, PlotKind::ForceVsXs, &stem),
        Err(CliError::MissingColumn { .. })
    ));
    let files = emit_plot_data(&report.rows, PlotKind::EnergyVsD, &stem).unwrap();
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| f.exists()));
}

#[test]
fn cache_blobs_round_trip_and_reject_damage() {
    use sgcasimir::energy::MatsubaraTerm;
    use sgcasimir_cli::cache::{Cache, KeyBuilder, PointRecord};
    let dir = TempDir::new().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let key = KeyBuilder::new().f64(1e-7).u64(3).bytes(b"gold").finish();
    let other = KeyBuilder::new().f64(1e-7).u64(4).bytes(b"gold").finish();
    assert_ne!(key, other);
    let rec = PointRecord {
        free_energy: -1.5e-21,
        kbt: 4.14e-21,
        force: None,
        eta_single: 0.9,
        eta_double: Some(0.95),
        lmax: 12,
        n_orders: 9,
        wall_time: 1.25,
        terms: vec![MatsubaraTerm { n: 0, xi: 2.4e11, value: -1e-22 }, MatsubaraTerm { n: 1, xi: 2.4e14, value: -1.4e-21 }],
    };
    cache.put(&key, &rec).unwrap();
    assert_eq!(cache.get(&key), Some(rec));
    assert_eq!(cache.get(&other), None);
    let file = std::fs::read_dir(dir.path()).unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&file).unwrap();
    bytes.truncate(bytes.len() - 3);
    std::fs::write(&file, &bytes).unwrap();
    assert_eq!(cache.get(&key), None);
}
