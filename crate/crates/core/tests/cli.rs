use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glasslocal::cli::config::{config_schema, THREADS_ENV};
use glasslocal::cli::config_echo_path;

fn glasslocal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glasslocal"))
        .current_dir(dir)
        .env_remove(THREADS_ENV)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"sampler": {"detla": 0.1}}"#).unwrap();
    let out = glasslocal(dir.path(), &["se", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr(&out);
    assert!(msg.contains("sampler.detla"), "{msg}");
}

#[test]
fn mistyped_value_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let out = glasslocal(dir.path(), &["se", "--set", "chaos.batch_size=\"many\""]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("chaos.batch_size"), "{}", stderr(&out));
}

#[test]
fn out_of_range_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = glasslocal(dir.path(), &["sample", "--set", "sampler.delta=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("sampler.delta"), "{}", stderr(&out));
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), "{ n: ").unwrap();
    let out = glasslocal(dir.path(), &["thresholds", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sk_thresholds_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = glasslocal(dir.path(), &["thresholds"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let b1 = v["beta1"].as_f64().unwrap();
    assert!((b1 - 1.0).abs() < 1e-3, "{v}");
}

#[test]
fn flags_override_config_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"n": 5, "se": {"t_values": [0.5]}}"#).unwrap();
    let out = glasslocal(dir.path(), &["se", "--config", "c.json", "--beta", "0.7", "-o", "se.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("se.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q_star,psi_star,mmse"));
    assert_eq!(lines.count(), 1);
    let echo_path = dir.path().join(config_echo_path(&PathBuf::from("se.csv")));
    let echo: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(echo_path).unwrap()).unwrap();
    assert_eq!(echo["n"], 5);
    assert_eq!(echo["beta"], 0.7);
    assert!(echo.get("threads").is_none());
}

#[test]
fn thread_count_from_environment_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_glasslocal"))
        .current_dir(dir.path())
        .env(THREADS_ENV, "2")
        .args(["se", "--set", "se.t_values=[1.0]"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let bad = Command::new(env!("CARGO_BIN_EXE_glasslocal"))
        .current_dir(dir.path())
        .env(THREADS_ENV, "zero")
        .args(["se"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn csv_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("amp", "k,q_hat,mse_empirical,mse_predicted,z_increment_ratio"),
        ("sample", "replica,seed,final_q,grad_norm_last,x_bits_hex"),
        ("exact", "site,exact_mean,sample_mean"),
        ("glauber", "site,sample_mean"),
        ("stability", "perturbation,value,sample_distance,mean_distance,replicas"),
    ];
    for (cmd, header) in cases {
        let out = glasslocal(
            dir.path(),
            &[
                cmd,
                "--n",
                "6",
                "--set",
                "sampler.steps=10",
                "--set",
                "stability.replicas=1",
                "--set",
                "amp.iterations=3",
            ],
        );
        assert!(out.status.success(), "{cmd}: {}", stderr(&out));
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().next(), Some(header), "{cmd}");
    }
}

#[test]
fn gen_disorder_requires_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = glasslocal(dir.path(), &["gen-disorder"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("output"), "{}", stderr(&out));
}

#[test]
fn unreadable_tensor_file_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.gltn"), b"not a tensor file").unwrap();
    let out = glasslocal(dir.path(), &["sample", "--tensors", "t.gltn"]);
    assert_eq!(out.status.code(), Some(1));
}

/// The published schema must match the config types. `UPDATE_SCHEMA=1`
/// rewrites it.
#[test]
fn published_schema_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schema/config.schema.json");
    let fresh = serde_json::to_string_pretty(&config_schema()).unwrap() + "\n";
    if std::env::var_os("UPDATE_SCHEMA").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &fresh).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk, fresh, "schema/config.schema.json is stale; rerun with UPDATE_SCHEMA=1");
}
