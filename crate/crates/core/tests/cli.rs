use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use untwist::harness::{cli_main, ExperimentConfig, CURVES_HEADER};

fn untwist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_untwist")).args(args).output().unwrap()
}

/// Writes the experiment config next to a separable one-feature CSV: x in
/// [0, 0.3] is negative, x in [0.7, 1] positive.
fn write_toy(dir: &Path, name: &str, text: &str) -> PathBuf {
    let mut csv = String::from("x,y\n");
    for k in 0..40 {
        let x = 0.3 * k as f64 / 39.0;
        csv += &format!("{x},0\n{},1\n", 1.0 - x);
    }
    write(dir, "toy.csv", &csv);
    write(dir, name, text)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const TOY: &str = r#"
name = "toy"
seed = 1
diagnostics = true

[dataset]
kind = "csv"
path = "toy.csv"
label_column = "y"
positive_label = "1"
name = "toy"
columns = [{ name = "x", type = "numeric" }]

[split]
folds = 2

[boost]
iterations = 30

[[algorithms]]
kind = "adaboost"

[[twisters]]
kind = "none"
levels = [0.0]
"#;

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["xd6_feature_noise.toml", "cancer_class_noise.toml", "xd6_adaptive.toml"] {
        let cfg = ExperimentConfig::from_file(&dir.join(name)).unwrap();
        assert!(!cfg.algorithm_points().unwrap().is_empty(), "{name}");
    }
    let cancer = ExperimentConfig::from_file(&dir.join("cancer_class_noise.toml")).unwrap();
    let ds = cancer.dataset.load(cancer.seed).unwrap();
    assert_eq!((ds.m(), ds.d()), (569, 30));
}

#[test]
fn run_writes_results_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path(), "toy.toml", TOY);
    let out = dir.path().join("out");
    let o = untwist(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    let r = &json["results"][0];
    assert_eq!(r["algorithm"], "adaboost");
    assert_eq!(r["n"], 2);
    assert_eq!(r["mean"], 1.0);

    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    let mut lines = curves.lines();
    assert_eq!(lines.next(), Some(CURVES_HEADER));
    assert_eq!(lines.next(), Some("toy,adaboost,none,0,1,0,2"));
    assert!(out.join("importance").read_dir().unwrap().count() == 1);
    assert!(out.join("diagnostics").read_dir().unwrap().count() == 2);

    // the saved diagnostics feed straight into `certify`
    let diag = out.join("diagnostics").read_dir().unwrap().next().unwrap().unwrap().path();
    let o = untwist(&["certify", diag.to_str().unwrap(), "--theta", "0.5", "--epsilon", "0.5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cert["theta"], 0.5);
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_toy(dir.path(), "toy.toml", TOY);
    let env_out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_untwist"))
        .args(["run", cfg.to_str().unwrap()])
        .env("UNTWIST_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(env_out.join("results.json").exists());

    let cfg_out = dir.path().join("from_config");
    let text = format!("output_dir = {:?}\n{TOY}", cfg_out.to_str().unwrap());
    let cfg = write_toy(dir.path(), "toy2.toml", &text);
    let o = Command::new(env!("CARGO_BIN_EXE_untwist"))
        .args(["run", cfg.to_str().unwrap()])
        .env("UNTWIST_OUTPUT_DIR", &env_out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(cfg_out.join("results.json").exists());
}

#[test]
fn bad_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_toy(dir.path(), "bad.toml", &TOY.replace("kind = \"adaboost\"", "kind = \"lightgbm\""));
    assert_eq!(cli_main(["untwist", "run", bad.to_str().unwrap()]), 2);
    let syntax = write(dir.path(), "syntax.toml", "name = ");
    assert_eq!(cli_main(["untwist", "run", syntax.to_str().unwrap()]), 2);
    assert_eq!(cli_main(["untwist", "frobnicate"]), 2);
    assert_eq!(cli_main(["untwist", "links"]), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(cli_main(["untwist", "run", missing.to_str().unwrap()]), 1);
}

#[test]
fn links_prints_half_at_origin() {
    let o = untwist(&["links", "--alpha", "2", "--points", "21"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("z,pil,exact"));
    let origin = lines
        .filter_map(|l| {
            let v: Vec<f64> = l.split(',').filter_map(|c| c.parse().ok()).collect();
            (v.len() == 3).then_some(v)
        })
        .find(|v| v[0].abs() < 1e-12)
        .unwrap();
    assert!((origin[1] - 0.5).abs() < 1e-12 && (origin[2] - 0.5).abs() < 1e-12);
    assert!(text.contains("max gap"));
    assert_ne!(cli_main(["untwist", "links", "--alpha", "0.2"]), 0);
}

#[test]
fn estimate_alpha_on_clean_data_is_proper() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write(dir.path(), "xd6.toml", "kind = \"xd6\"\nm = 600\nseed = 3\n");
    let o = untwist(&["estimate-alpha", ds.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p_hat=0\n"), "{text}");
    assert!(text.contains("alpha0=1.0\n"), "{text}");
}

#[test]
fn twist_writes_a_csv_with_flipped_labels() {
    let dir = tempfile::tempdir().unwrap();
    let ds = write(dir.path(), "xd6.toml", "kind = \"xd6\"\nm = 400\nseed = 3\n");
    let flip_all = write(dir.path(), "flip.toml", "kind = \"class_noise\"\np = 1.0\nseed = 9\n");
    let keep = write(dir.path(), "keep.toml", "kind = \"class_noise\"\np = 0.0\nseed = 9\n");
    let read = |twister: &Path, name: &str| {
        let out = dir.path().join(name);
        let o = untwist(&["twist", ds.to_str().unwrap(), twister.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(out).unwrap();
        text.lines().map(|l| l.rsplit(',').next().unwrap().to_string()).collect::<Vec<_>>()
    };
    let flipped = read(&flip_all, "flipped.csv");
    let kept = read(&keep, "kept.csv");
    assert_eq!(flipped.len(), 401);
    assert_eq!(flipped[0], "label");
    assert!(flipped[1..].iter().zip(&kept[1..]).all(|(a, b)| a != b));
}
