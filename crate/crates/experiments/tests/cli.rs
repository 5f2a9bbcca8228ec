use std::fs;
use std::process::Command;

const CONFIG: &str = r#"
output_dir = "out"
repeats = 1
[dataset]
kind = "synthetic"
class_count = 3
per_class = 20
dim = 4
cluster_spread = 0.3
validation_fraction = 0.2
[noise]
kind = "symmetric"
rate = 0.3
[defaults]
epochs = 2
batch_size = 16
hidden = [8]
[[trainers]]
variant = "standard"
[[trainers]]
variant = "jocor"
"#;

fn nll() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nll"));
    cmd.env("RUST_LOG", "warn").env_remove("NLL_SEED");
    cmd
}

#[test]
fn run_writes_artifacts_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let status = nll().args(["run", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    for f in [
        "summary.json",
        "curves.svg",
        "epochs_standard_0.csv",
        "epochs_jocor_0.csv",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
}

#[test]
fn seed_env_changes_labels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let hashes = |seed: &str, out: &str| {
        let status = nll()
            .env("NLL_SEED", seed)
            .args(["run", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        let json: serde_json::Value = serde_json::from_str(
            &fs::read_to_string(dir.path().join(out).join("summary.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(
            json["config"]["base_seed"].as_u64().unwrap().to_string(),
            seed
        );
        json["label_hashes"][0].as_str().unwrap().to_string()
    };
    assert_ne!(hashes("5", "a"), hashes("6", "b"));
    let out = nll()
        .env("NLL_SEED", "x")
        .args(["run", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, CONFIG.replace("rate = 0.3", "rate = 1.3")).unwrap();
    let out = nll().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("noise rate"));
    let missing = nll()
        .args(["run", "--config", "/nonexistent.toml"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, CONFIG).unwrap();
    let out = nll()
        .args(["sweep-lambda", "--lambdas", "0.9,0.1,0.9", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "lambda,validation_acc,test_acc,best");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.1,") && lines[2].starts_with("0.9,"));
    assert_eq!(text.matches(",true").count(), 1);
}

#[test]
fn gen_synthetic_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    fs::write(
        &spec,
        "class_count = 3\nper_class = 4\ndim = 2\ncluster_spread = 0.1\nseed = 7\n",
    )
    .unwrap();
    let out = dir.path().join("blobs.csv");
    let status = nll()
        .args(["gen-synthetic", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "label,x0,x1");
    assert_eq!(lines.len(), 13);
    assert!(lines[1].starts_with("0,") && lines[2].starts_with("1,"));
    let stdout = nll()
        .args(["gen-synthetic", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert_eq!(String::from_utf8(stdout.stdout).unwrap(), text);
}

#[test]
fn numeric_blowup_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        CONFIG.replace("hidden = [8]", "hidden = [8]\nlearning_rate = 1e300"),
    )
    .unwrap();
    let out = nll().args(["run", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
