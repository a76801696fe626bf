mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use entangler::dynamics::{evolve, EvolveOptions, CSV_HEADER};
use entangler::master::{build_filtered_nondegenerate, BathSet, SystemParams};
use entangler::operators::{AncillaKind, DensityState, HilbertGeometry};
use entangler::scenario::{check, run_to_dir, sweep, ScenarioConfig, SweepAxis};
use entangler::spectral::{BathLabel, BathSpec, Filter};
use entangler::Error;

const SMALL_FILTERED: &str = r#"{
  "scenario": "custom",
  "model": "filtered_nondegenerate",
  "system": {"ancilla": "tls", "omega_a": 1, "omega": [0.05, 0.03], "alpha": [0.2, 0.2]},
  "baths": {
    "hot": {"temperature": 6, "coupling": 1e-3, "filter": {}},
    "cold": {"temperature": 0.15, "coupling": 1e-3, "filter": {}},
    "local": [{"temperature": 0.4, "coupling": 1e-4}, {"temperature": 0.3, "coupling": 1e-4}]
  },
  "truncation": 4,
  "horizon": {"t_final": 200, "stride": 50},
  "curves": [
    {"label": "hot", "set": {}},
    {"label": "cool", "set": {"baths.hot.temperature": 0.4}}
  ]
}"#;

const SMALL_FIG2: &str = r#"{
  "scenario": "fig2_comparison",
  "system": {"ancilla": "none", "omega_a": 1, "omega": [1, 1], "alpha": [0.2, 0.2]},
  "truncation": 5,
  "horizon": {"t_final": 2, "stride": 0.5, "time_unit": "omega_1"},
  "dent": {"rate": 0.1, "n_a": 0},
  "arenz": {"kappa_c": 0.1, "kappa_d": 0.1, "beta": [0.2, 0]},
  "free_hamiltonian": true,
  "curves": [{"label": "dent", "set": {"model": "dent"}}, {"label": "arenz", "set": {"model": "arenz"}}]
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn bundled_configs_resolve() {
    for name in ["fig2.json", "fig3.json", "fig4.json", "fig5.json"] {
        let cfg = ScenarioConfig::load(&bundled(name)).unwrap();
        for (label, c) in cfg.expand_curves().unwrap() {
            c.resolve()
                .unwrap_or_else(|e| panic!("{name}/{label}: {e}"));
        }
        assert!(!check(&cfg).unwrap().is_empty());
    }
}

#[test]
fn manifest_reproduces_the_run_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "s.json", SMALL_FILTERED);
    let cfg = ScenarioConfig::load(&path).unwrap();
    let first = tmp.path().join("first");
    run_to_dir(&cfg, &first).unwrap();

    let again = ScenarioConfig::load(&first.join("manifest.json")).unwrap();
    let second = tmp.path().join("second");
    run_to_dir(&again, &second).unwrap();
    for label in ["hot", "cool"] {
        let a = std::fs::read(first.join(format!("{label}.csv"))).unwrap();
        let b = std::fs::read(second.join(format!("{label}.csv"))).unwrap();
        assert_eq!(a, b, "{label}");
        let text = String::from_utf8(a).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert_eq!(text.lines().count(), 1 + 5);
    }
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["manifest"]["curves"].as_array().unwrap().len(), 2);
    assert_eq!(
        m["manifest"]["curves"][0]["terms"]
            .as_array()
            .unwrap()
            .len(),
        12
    );
}

#[test]
fn config_errors_carry_a_position() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = SMALL_FIG2.replace("\"truncation\": 5", "\"truncation\": \"five\"");
    let path = write_config(tmp.path(), "bad.json", &bad);
    match ScenarioConfig::load(&path) {
        Err(Error::Config { line, column, .. }) => {
            assert_eq!(line, 4);
            assert!(column > 0);
        }
        other => panic!("expected a config error, got {other:?}"),
    }
    let unknown = SMALL_FIG2.replace("\"truncation\"", "\"truncaton\"");
    let path = write_config(tmp.path(), "unknown.json", &unknown);
    assert!(matches!(
        ScenarioConfig::load(&path),
        Err(Error::Config { .. })
    ));
}

#[test]
fn sweep_rows_follow_the_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::load(&write_config(tmp.path(), "s.json", SMALL_FILTERED)).unwrap();
    let cfg = cfg
        .with_overrides(&[("curves".into(), serde_json::json!([]))])
        .unwrap();
    let values: Vec<String> = ["0.4", "6"].iter().map(|s| s.to_string()).collect();
    let rows = sweep(&cfg, SweepAxis::HotTemperature, &values).unwrap();
    assert_eq!(
        rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(),
        ["0.4", "6"]
    );
    assert!(rows
        .iter()
        .all(|r| r.peak_en >= r.late_en && r.late_en >= 0.0));
    assert!(rows[1].cooling_margin > rows[0].cooling_margin);
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entangler"))
}

#[test]
fn command_line_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), "fig2.json", SMALL_FIG2);
    let out = tmp.path().join("out");
    let st = cli()
        .args(["run", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(&out)
        .args(["--truncation", "4", "--set", "dent.rate=0.2"])
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    for f in ["dent.csv", "arenz.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["truncation"], 4);
    assert_eq!(m["dent"]["rate"], 0.2);

    let st = cli()
        .args(["check", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(st.status.success());
    assert!(String::from_utf8_lossy(&st.stdout).contains("curve dent"));

    let filtered = write_config(tmp.path(), "s.json", SMALL_FILTERED);
    let st = cli()
        .args(["sweep", "--config"])
        .arg(&filtered)
        .args([
            "--axis",
            "alpha",
            "--values",
            "0.1,0.2",
            "--set",
            "curves=[]",
            "--set",
            "horizon.t_final=50",
        ])
        .output()
        .unwrap();
    assert!(
        st.status.success(),
        "{}",
        String::from_utf8_lossy(&st.stderr)
    );
    let text = String::from_utf8(st.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], entangler::scenario::runner::SWEEP_HEADER);
    assert_eq!(lines.len(), 3);

    let broken = write_config(tmp.path(), "broken.json", "{\"scenario\": ");
    let st = cli()
        .args(["run", "--config"])
        .arg(&broken)
        .output()
        .unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).starts_with("error:"));
    let st = cli()
        .args(["sweep", "--config"])
        .arg(&path)
        .args(["--axis", "colour", "--values", "1"])
        .output()
        .unwrap();
    assert!(!st.status.success());
}

#[test]
fn single_precision_core_runs() {
    let p =
        SystemParams::<f32>::from_alpha(1.0, [0.05, 0.03], [0.2, 0.2], AncillaKind::Tls).unwrap();
    let b = BathSet {
        hot: BathSpec::filtered(
            BathLabel::Hot,
            6.0f32,
            1e-3,
            Filter::new(p.omega_minus(), 1e-3),
        )
        .unwrap(),
        cold: BathSpec::filtered(BathLabel::Cold, 0.15f32, 1e-3, Filter::new(1.0, 1e-3)).unwrap(),
        local: [
            BathSpec::ohmic(BathLabel::Local1, 0.4f32, 1e-3).unwrap(),
            BathSpec::ohmic(BathLabel::Local2, 0.3f32, 1e-3).unwrap(),
        ],
    };
    let g = HilbertGeometry::tls(3, 3).unwrap();
    let l = build_filtered_nondegenerate(&p, &b, g).unwrap();
    let rho = DensityState::<f32>::basis(g, 9).unwrap();
    let mut opts = EvolveOptions::new(100.0f32, 25.0).tolerance(1e-4);
    opts.atol = 1e-6;
    let traj = evolve(&l, &rho, &opts).unwrap();
    assert_eq!(traj.records.len(), 5);
    assert!(traj
        .records
        .iter()
        .all(|r| r.trace_err < 1e-4 && r.min_eig > -1e-4));
    assert!(traj.last().n1 > 0.0);
}
