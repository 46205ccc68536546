use std::path::{Path, PathBuf};
use std::process::Command as Process;

use serde_json::Value;

use qms_cli::{execute, run, CliError, Command, ExperimentConfig, Overrides};

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).unwrap()
}

fn sidecar(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn rows<'a>(doc: &'a Value, quantity: &str) -> Vec<&'a Value> {
    doc["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["quantity"] == quantity)
        .collect()
}

fn strip_seconds(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0)
        .collect::<Vec<_>>()
        .join("\n")
}

fn lab(args: &[&str]) -> std::process::Output {
    Process::new(env!("CARGO_BIN_EXE_qms-lab")).args(args).output().unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for cmd in [Command::Bridge, Command::Lipnorm, Command::MkDist] {
        let oa = run(
            cmd,
            &config_path("uhf2.json"),
            &Overrides {
                out: Some(a.path().into()),
                ..Default::default()
            },
        )
        .unwrap();
        let ob = run(
            cmd,
            &config_path("uhf2.json"),
            &Overrides {
                out: Some(b.path().into()),
                ..Default::default()
            },
        )
        .unwrap();
        let read = |p: &Path| std::fs::read_to_string(p).unwrap();
        assert_eq!(read(&oa.json), read(&ob.json), "{}", cmd.name());
        assert_eq!(
            strip_seconds(&read(&oa.csv)),
            strip_seconds(&read(&ob.csv)),
            "{}",
            cmd.name()
        );
    }
}

#[test]
fn seed_changes_empirical_rows() {
    let mut cfg = load("uhf2.json");
    let r1 = execute(Command::Bridge, &cfg).unwrap();
    cfg.seed = Some(8);
    let r2 = execute(Command::Bridge, &cfg).unwrap();
    assert_ne!(r1.rows[0].empirical, r2.rows[0].empirical);
    assert_eq!(r1.rows[0].certified, r2.rows[0].certified);
}

#[test]
fn csv_has_the_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        Command::Bound,
        &config_path("uhf2.json"),
        &Overrides {
            out: Some(dir.path().into()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.csv.ends_with("uhf2_bound.csv"));
    let text = std::fs::read_to_string(&out.csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "experiment,quantity,level,certified,empirical,tolerance,seconds"
    );
    assert!(text
        .lines()
        .skip(1)
        .all(|l| l.starts_with("uhf2,") && l.split(',').count() == 7));
}

#[test]
fn car_bridge_rows_are_powers_of_a_quarter() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        out: Some(dir.path().into()),
        ..Default::default()
    };
    let out = run(Command::Bridge, &config_path("car.json"), &o).unwrap();
    let doc = sidecar(&out.json);
    let car = rows(&doc, "car_bridge_length");
    assert_eq!(car.len(), 3);
    for (k, r) in car.iter().enumerate() {
        let n = k + 1;
        assert_eq!(r["level"], n);
        let exact = 0.25f64.powi(n as i32);
        assert_eq!(r["certified"].as_f64().unwrap(), exact);
        assert!(r["empirical"].as_f64().unwrap() <= exact + 1e-6);
        assert_eq!(r["witness_digest"].as_str().unwrap().len(), 64);
    }
    let out = run(Command::Bound, &config_path("car.json"), &o).unwrap();
    let doc = sidecar(&out.json);
    for r in rows(&doc, "car_propinquity") {
        let n = r["level"].as_u64().unwrap() as i32;
        assert_eq!(r["certified"].as_f64().unwrap(), 4.0 * 0.25f64.powi(n));
    }
}

#[test]
fn fell_on_ideals_differing_at_level_three() {
    let report = execute(Command::Fell, &load("commutative.json")).unwrap();
    let row = report.rows.iter().find(|r| r.quantity == "fell[0,1]").unwrap();
    assert_eq!(row.empirical, Some(0.125));
    assert_eq!(row.level, Some(3));
    // The first ideal is zero below level 4.
    let zero = report.rows.iter().find(|r| r.quantity == "fell[0,2]").unwrap();
    assert_eq!((zero.empirical, zero.level), (Some(0.0625), Some(4)));
    let ultra = report.rows.iter().find(|r| r.quantity == "fell_ultrametric").unwrap();
    assert_eq!(ultra.empirical, Some(0.0));
    assert!(report.failures().is_empty());
}

#[test]
fn ideal_map_certificates_are_dominated_by_fell() {
    let report = execute(Command::IdealMap, &load("commutative.json")).unwrap();
    assert!(report.failures().is_empty(), "{:?}", report.failures());
    let cert = report.rows.iter().find(|r| r.quantity == "lipschitz[0,1]").unwrap();
    assert!(cert.empirical.unwrap() <= 0.125 + 1e-9);
    let dims: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.quantity == "unitized_dimension[1]")
        .map(|r| r.certified.unwrap())
        .collect();
    assert_eq!(dims, vec![1.0, 1.0, 1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn every_command_runs_on_each_family() {
    for name in ["uhf2.json", "golden.json", "commutative.json", "car.json"] {
        let mut cfg = load(name);
        cfg.sequence.depth = cfg.sequence.depth.min(3);
        cfg.samples = 5;
        cfg.suite.state_pairs = 2;
        cfg.ideals.clear();
        for cmd in [
            Command::Describe,
            Command::Lipnorm,
            Command::MkDist,
            Command::Bridge,
            Command::Bound,
            Command::S0,
        ] {
            let report = execute(cmd, &cfg).unwrap_or_else(|e| panic!("{name} {}: {e}", cmd.name()));
            assert!(!report.rows.is_empty(), "{name} {}", cmd.name());
            assert!(
                report.failures().is_empty(),
                "{name} {}: {:?}",
                cmd.name(),
                report.failures()
            );
        }
    }
}

#[test]
fn supplied_elements_are_evaluated() {
    let mut cfg = load("commutative.json");
    cfg.elements =
        serde_json::from_str(r#"[{"level": 1, "re": [1.0, 0.0]}, {"level": 2, "re": [0.0, 0.0, 3.0]}]"#).unwrap();
    let report = execute(Command::Lipnorm, &cfg).unwrap();
    let first = report.rows.iter().find(|r| r.quantity == "lipnorm[element 0]").unwrap();
    // ‖a − E(a)‖/β(0) with a = (1, 0): residual 1/2 over 1/32.
    assert_eq!(first.empirical, Some(16.0));
    let s0 = execute(Command::S0, &cfg).unwrap();
    assert!(s0.rows.iter().any(|r| r.quantity == "s0[element 1]"));

    cfg.elements = serde_json::from_str(r#"[{"level": 1, "re": [1.0]}]"#).unwrap();
    assert!(matches!(execute(Command::Lipnorm, &cfg), Err(CliError::Schema(_))));
}

#[test]
fn verify_is_green_via_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config_path("uhf2.json");
    let res = lab(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--depth",
        "2",
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let doc = sidecar(&dir.path().join("uhf2_verify.json"));
    assert_eq!(doc["passed"], true);
    assert!(doc["rows"].as_array().unwrap().len() > 30);
}

#[test]
fn schema_violations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    };
    let no_seed = write(
        "no_seed.json",
        r#"{"version": 1, "experiment": "x", "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
    );
    let res = lab(&["describe", "--config", no_seed.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("seed"));
    // --seed supplies it.
    let out = dir.path().join("out");
    let res = lab(&[
        "describe",
        "--config",
        no_seed.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success());

    let cases = [
        r#"{"version": 2, "experiment": "x", "seed": 1, "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
        r#"{"version": 1, "experiment": "x", "seed": 1, "extra": 0, "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
        r#"{"version": 1, "experiment": "x y", "seed": 1, "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
        r#"{"version": 1, "experiment": "x", "seed": 1, "sequence": {"family": "commutative", "params": {}, "depth": 99}}"#,
        r#"{"version": 1, "experiment": "x", "seed": 1, "solver": {"tol": -1}, "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
        r#"{"version": 1, "experiment": "x", "seed": 1, "ideals": [{"levels": [[0], [], []]}], "sequence": {"family": "commutative", "params": {}, "depth": 2}}"#,
        "not json",
    ];
    for (k, body) in cases.iter().enumerate() {
        let p = write(&format!("bad{k}.json"), body);
        let res = lab(&[
            "describe",
            "--config",
            p.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(
            res.status.code(),
            Some(2),
            "case {k}: {}",
            String::from_utf8_lossy(&res.stderr)
        );
    }
    let res = lab(&[
        "describe",
        "--config",
        config_path("uhf2.json").to_str().unwrap(),
        "--tol",
        "0",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn numeric_failures_name_the_quantity() {
    // The default β exceeds the cap the ideal certificate needs.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("uhf2.json");
    cfg.ideals = serde_json::from_str(r#"[{"top": [0]}]"#).unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let res = lab(&[
        "ideal-map",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("lipschitz[0,full]"));
}

#[test]
fn failing_rows_are_written_and_reported() {
    // One solver iteration cannot match the LP oracle to 1.1·tol.
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("commutative.json");
    cfg.sequence.depth = 2;
    cfg.solver.max_iter = 1;
    cfg.ideals.clear();
    cfg.output.dir = dir.path().into();
    let path = dir.path().join("cfg.json");
    std::fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    match run(Command::MkDist, &path, &Overrides::default()) {
        Err(CliError::Numeric { quantities, .. }) => {
            assert!(
                quantities.iter().all(|q| q.starts_with("mk_lp_oracle")),
                "{quantities:?}"
            );
            let doc = sidecar(&dir.path().join("commutative_mk-dist.json"));
            assert_eq!(doc["passed"], false);
            assert!(dir.path().join("commutative_mk-dist.csv").exists());
        }
        other => panic!("expected a numeric failure, got {other:?}"),
    }
}
