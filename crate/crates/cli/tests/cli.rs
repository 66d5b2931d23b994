//! End-to-end tests of the `nsql` binary: exit codes, output files, and
//! byte-level determinism of primary outputs (timing columns exempt).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nsql_core::dataio::{read_tensor, write_tensor};
use nsql_core::tensorcore::Tensor;

fn nsql() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsql"))
}

fn run(args: &[&str]) -> Output {
    nsql().args(args).output().expect("spawn nsql")
}

fn minimal_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("run.toml");
    let text = format!(
        r#"
schema_version = 1

[prior]
kind = "uniform01"
dim = 2

[optimizer]
schedule = "constant"

[train]
max_epochs = 4
assignment_period = 2
batch_size = 8
hidden_widths = [16]
output_activation = "identity"
validation_fraction = 0.0
seed = 0
{extra}

[data]
kind = "synthetic"

[data.synthetic]
d = 2
p = 6
n = 16
noise_sigma = 0.01
seed = 1
"#
    );
    fs::write(&path, text).unwrap();
    path
}

/// Drops the timing column (last field) from every history line.
fn history_without_timing(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.pop();
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn train_smoke_writes_four_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = minimal_config(dir.path(), "");
    let out = dir.path().join("out");
    let result = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    for file in [
        "decoder.nsql",
        "latents.nsqt",
        "history.csv",
        "resolved_config.toml",
    ] {
        assert!(out.join(file).exists(), "missing {file}");
    }
}

#[test]
fn train_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let config = minimal_config(dir.path(), "");
    let (out1, out2) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&out1, &out2] {
        let result = run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(result.status.code(), Some(0));
    }
    assert_eq!(
        history_without_timing(&out1.join("history.csv")),
        history_without_timing(&out2.join("history.csv"))
    );
    // binary outputs are byte-identical
    assert_eq!(
        fs::read(out1.join("decoder.nsql")).unwrap(),
        fs::read(out2.join("decoder.nsql")).unwrap()
    );
    assert_eq!(
        fs::read(out1.join("latents.nsqt")).unwrap(),
        fs::read(out2.join("latents.nsqt")).unwrap()
    );
}

#[test]
fn train_rejects_momentum_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = minimal_config(dir.path(), "momentum = 1.0");
    let result = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("rho < 1"), "stderr: {stderr}");
}

#[test]
fn snapshot_replay_reproduces_history() {
    let dir = tempfile::tempdir().unwrap();
    let config = minimal_config(dir.path(), "");
    let out1 = dir.path().join("first");
    assert_eq!(
        run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out1.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    // replay from the resolved snapshot alone
    let out2 = dir.path().join("replay");
    assert_eq!(
        run(&[
            "train",
            "--config",
            out1.join("resolved_config.toml").to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(
        history_without_timing(&out1.join("history.csv")),
        history_without_timing(&out2.join("history.csv"))
    );
}

fn trained_model(dir: &Path) -> PathBuf {
    let config = minimal_config(dir, "");
    let out = dir.join("model");
    assert_eq!(
        run(&[
            "train",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    out
}

#[test]
fn sample_shapes_bounds_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());

    let out_a = dir.path().join("sample_a");
    let result = run(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "4",
        "--seed",
        "9",
        "--out",
        out_a.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let samples = read_tensor(&out_a.join("samples.nsqt")).unwrap();
    assert_eq!(samples.shape(), &[4, 6]);

    // lattice_rows beyond the stored code count is a usage error
    let result = run(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "17",
        "--mode",
        "lattice-rows",
    ]);
    assert_eq!(result.status.code(), Some(2));

    // same seed, identical container bytes
    let out_b = dir.path().join("sample_b");
    run(&[
        "sample",
        "--model",
        model.to_str().unwrap(),
        "--n",
        "4",
        "--seed",
        "9",
        "--out",
        out_b.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(out_a.join("samples.nsqt")).unwrap(),
        fs::read(out_b.join("samples.nsqt")).unwrap()
    );
}

#[test]
fn sample_on_missing_model_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(&[
        "sample",
        "--model",
        dir.path().join("absent").to_str().unwrap(),
        "--n",
        "2",
    ]);
    assert_eq!(result.status.code(), Some(3));
}

fn gaussian_cloud(seed: u64, n: usize, p: usize, shift: f64) -> Tensor {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * p).map(|_| rng.gen::<f64>() + shift).collect();
    Tensor::matrix(n, p, data).unwrap()
}

#[test]
fn eval_identity_and_pair_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let x = gaussian_cloud(3, 30, 16, 0.0);
    let real = dir.path().join("real.nsqt");
    let fake = dir.path().join("fake.nsqt");
    write_tensor(&real, &x).unwrap();
    write_tensor(&fake, &x).unwrap();
    let result = run(&[
        "eval",
        "--real",
        real.to_str().unwrap(),
        "--fake",
        fake.to_str().unwrap(),
        "--window",
        "3",
        "--feature-dim",
        "8",
    ]);
    assert_eq!(result.status.code(), Some(0), "{result:?}");
    let report: serde_json::Value =
        serde_json::from_slice(&result.stdout).expect("json report");
    assert!(report["proxy_fid"].as_f64().unwrap() <= 1e-6);
    assert_eq!(report["ssim_mean"].as_f64().unwrap(), 1.0);
    assert_eq!(report["n_pairs"].as_u64().unwrap(), 30); // fewer than 50 pairs available
    assert!(report["lpips"].is_null());
    assert_eq!(report["l1_mean"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_separates_disjoint_clouds() {
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real.nsqt");
    let near = dir.path().join("near.nsqt");
    let far = dir.path().join("far.nsqt");
    write_tensor(&real, &gaussian_cloud(3, 64, 16, 0.0)).unwrap();
    write_tensor(&near, &gaussian_cloud(4, 64, 16, 0.0)).unwrap();
    write_tensor(&far, &gaussian_cloud(5, 64, 16, 4.0)).unwrap();
    let fid = |fake: &Path| -> f64 {
        let result = run(&[
            "eval",
            "--real",
            real.to_str().unwrap(),
            "--fake",
            fake.to_str().unwrap(),
            "--window",
            "3",
            "--feature-dim",
            "8",
        ]);
        assert_eq!(result.status.code(), Some(0));
        let report: serde_json::Value = serde_json::from_slice(&result.stdout).unwrap();
        report["proxy_fid"].as_f64().unwrap()
    };
    assert!(fid(&far) > fid(&near));
}

#[test]
fn eval_shape_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let real = dir.path().join("real.nsqt");
    let fake = dir.path().join("fake.nsqt");
    write_tensor(&real, &gaussian_cloud(1, 8, 16, 0.0)).unwrap();
    write_tensor(&fake, &gaussian_cloud(2, 8, 9, 0.0)).unwrap();
    let result = run(&[
        "eval",
        "--real",
        real.to_str().unwrap(),
        "--fake",
        fake.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn lattice_csv_delegation() {
    let result = run(&[
        "lattice",
        "--prior",
        "uniform01",
        "--d",
        "1",
        "--n",
        "3",
        "--source",
        "univariate_quantiles",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let text = String::from_utf8(result.stdout).unwrap();
    assert_eq!(text, "dim0\n0.25\n0.5\n0.75\n");
}

#[test]
fn lattice_rejects_bad_combination() {
    let result = run(&[
        "lattice",
        "--prior",
        "uniform_ball",
        "--d",
        "2",
        "--n",
        "9",
        "--source",
        "uniform_grid",
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn bench_assign_emits_csv() {
    let result = run(&[
        "bench-assign",
        "--n",
        "32",
        "--method",
        "both",
        "--repeats",
        "2",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let text = String::from_utf8(result.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "method,n,mean_ms,std_ms");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("hungarian,32,"));
    assert!(lines[2].starts_with("greedy,32,"));
}

#[test]
fn export_latents_matches_container() {
    let dir = tempfile::tempdir().unwrap();
    let model = trained_model(dir.path());
    let result = run(&["export-latents", "--model", model.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(0));
    let text = String::from_utf8(result.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,z0,z1");
    let latents = read_tensor(&model.join("latents.nsqt")).unwrap();
    assert_eq!(lines.len(), latents.rows() + 1);
    // spot-check the first row round-trips through the text format
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields[0], "0");
    assert_eq!(fields[1].parse::<f64>().unwrap(), latents.row(0)[0]);
    assert_eq!(fields[2].parse::<f64>().unwrap(), latents.row(0)[1]);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(
        &config,
        "schema_version = 1\nnot_a_key = 5\n[prior]\nkind = \"uniform01\"\ndim = 1\n[data]\nkind = \"synthetic\"\n",
    )
    .unwrap();
    let result = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn missing_schema_version_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(
        &config,
        "[prior]\nkind = \"uniform01\"\ndim = 1\n[data]\nkind = \"synthetic\"\n",
    )
    .unwrap();
    let result = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}
