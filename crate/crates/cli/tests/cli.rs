use std::path::Path;
use std::process::Command;

use bids_cli::run;
use serde_json::Value;

fn bids(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_bids")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "mode": {"kind": "pilot", "theta": 0.3},
    "env": {"kind": "setting", "setting": 1, "dim": 2},
    "T": 3000, "M": 3, "replicates": 2, "c_B": 5
}"#;

#[test]
fn schedule_prints_split_factors() {
    let out = bids(&["schedule", "--T", "1000000", "--M", "5", "--alpha", "1"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["split_factors"], serde_json::json!([5, 2, 1, 1]));
    assert_eq!(v["grid"].as_array().unwrap().len(), 6);
    assert_eq!(v["grid"][5], 1_000_000);
}

#[test]
fn hypercube_schedule_uses_the_dimension() {
    let out = bids(&[
        "schedule", "--T", "100000", "--dim", "3", "--lower", "-1", "--upper", "1",
    ]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exponent"], 5);
}

#[test]
fn missing_config_is_a_config_error() {
    let out = bids(&["simulate", "--config", "missing.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));
}

#[test]
fn usage_and_invalid_values_exit_one() {
    assert_eq!(run(["bids", "frobnicate"]), 1);
    assert_eq!(run(["bids", "schedule"]), 1);
    assert_eq!(run(["bids", "schedule", "--T", "1000", "--units", "furlongs"]), 1);
    assert_eq!(run(["bids", "schedule", "--T", "1000", "--M", "1"]), 1);
    assert_eq!(run(["bids", "--help"]), 0);
}

#[test]
fn bad_config_fields_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"T": 1000, "bogus": 1}"#);
    let out = bids(&["simulate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    let cfg = write_config(dir.path(), SMALL);
    assert_eq!(run(["bids", "simulate", "--config", &cfg]), 1, "no output directory");
    assert_eq!(
        run(["bids", "simulate", "--config", &cfg, "--out", "x", "--set", "sigma=-1"]),
        1
    );
    assert_eq!(
        run(["bids", "simulate", "--config", &cfg, "--out", "x", "--set", "nonsense"]),
        1
    );
}

#[test]
fn runtime_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one_class.csv");
    std::fs::write(&data, "a,b,label\n1,2,0\n3,4,0\n").unwrap();
    assert_eq!(
        run(["bids", "replay", "--data", data.to_str().unwrap()]),
        1,
        "one class is bad input"
    );
    let flat = dir.path().join("flat.csv");
    let rows: String = (0..40).map(|i| format!("{i},{},1\n", i % 7)).collect();
    std::fs::write(&flat, format!("x0,x1,y\n{rows}")).unwrap();
    assert_eq!(run(["bids", "sade-fit", "--data", flat.to_str().unwrap()]), 2);
}

#[test]
fn simulate_overrides_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let code = run([
            "bids",
            "simulate",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "17",
            "--replicates",
            "3",
            "--set",
            "T=2000",
        ]);
        assert_eq!(code, 0);
    }
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(a.join("metadata.json")).unwrap()).unwrap();
    let text = meta.to_string();
    assert!(text.contains("\"seed\":17"), "{text}");
    assert!(text.contains("\"T\":2000"), "{text}");
    assert!(a.join("replicate_002.csv").exists());
    assert!(!a.join("replicate_003.csv").exists());
    let strip = |dir: &Path| {
        let mut v: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("metadata.json")).unwrap()).unwrap();
        v["config"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(strip(&a), strip(&b));
    for name in ["aggregate.csv", "replicate_000.csv", "reports.jsonl"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn sweep_writes_one_family_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("sweep");
    let code = run([
        "bids",
        "sweep",
        "--config",
        &cfg,
        "--param",
        "theta",
        "--values",
        "0,0.785,1.571",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["theta_0", "theta_0.785", "theta_1.571"]);
    for n in &names {
        assert!(out.join(n).join("aggregate.csv").exists());
    }
    assert_eq!(
        run(["bids", "sweep", "--config", &cfg, "--param", "theta", "--values", "0,2", "--out", "x"]),
        1
    );
    assert_eq!(
        run(["bids", "sweep", "--config", &cfg, "--param", "gamma", "--values", "0", "--out", "x"]),
        1
    );
}

fn separable_csv(path: &Path) {
    let mut s = String::from("x0,x1,label\n");
    let mut state = 1u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..1500 {
        let (a, b) = (next(), next());
        let label = if 0.8 * a + 0.6 * b > 0.0 { "yes" } else { "no" };
        s.push_str(&format!("{a},{b},{label}\n"));
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn replay_writes_traces() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    separable_csv(&data);
    let out = dir.path().join("r");
    let code = run([
        "bids",
        "replay",
        "--data",
        data.to_str().unwrap(),
        "--trials",
        "2",
        "--seed",
        "4",
        "--set",
        "M=3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("replay.json")).unwrap()).unwrap();
    assert_eq!(meta["rows"], 1500);
    assert_eq!(meta["classes"], serde_json::json!(["no", "yes"]));
    assert!(out.join("replay_mean.csv").exists());
    assert_eq!(
        run([
            "bids",
            "replay",
            "--data",
            data.to_str().unwrap(),
            "--policy",
            "psychic"
        ]),
        1
    );
    assert_eq!(
        run(["bids", "replay", "--data", data.to_str().unwrap(), "--label", "nope"]),
        1
    );
}

#[test]
fn sade_fit_recovers_a_linear_index() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    let mut s = String::from("x0,x1,x2,y\n");
    let mut state = 9u64;
    let mut gauss = || {
        let mut u = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let (a, b) = (u(), u());
        (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    };
    for _ in 0..4000 {
        let x = [gauss(), gauss(), gauss()];
        let y = (0.6 * x[0] - 0.8 * x[2]).tanh();
        s.push_str(&format!("{},{},{},{}\n", x[0], x[1], x[2], y));
    }
    std::fs::write(&data, s).unwrap();
    let out = bids(&["sade-fit", "--data", data.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let d: Vec<f64> = serde_json::from_value(v["direction"].clone()).unwrap();
    let cos = (0.6 * d[0] - 0.8 * d[2]).abs();
    assert!(cos > 0.98, "{d:?}");
    assert_eq!(v["n"], 4000);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x0,y\n1,a\n2,b\n").unwrap();
    assert_eq!(run(["bids", "sade-fit", "--data", bad.to_str().unwrap()]), 1);
}
