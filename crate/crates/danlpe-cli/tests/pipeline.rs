//! End-to-end pipeline runs through the compiled binary: exit codes and
//! byte-for-byte reproducibility of every artifact.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_danlpe")
}

fn fresh_dir(tag: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(tag);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary should spawn")
}

fn assert_code(output: &Output, expected: i32) {
    let code = output.status.code().expect("no exit code");
    assert_eq!(
        code,
        expected,
        "exit {code}, expected {expected}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_config(dir: &Path, out_dir: &Path) -> PathBuf {
    let path = dir.join("exp.toml");
    let text = format!(
        r#"
        [experiment]
        name = "pipeline"
        seeds = [5]
        methods = ["dnn", "dann", "dan_lpe", "bbse"]
        out_dir = "{}"

        [task.synthetic]
        classes = 2
        dim = 2
        separation = 3.0
        covariance_scale = 0.4
        alpha = [0.5, 0.5]
        beta = [0.8, 0.2]
        n_source = 120
        n_target = 120
        seed = 11

        [hyperparams]
        iterations = 40
        warmup = 10
        update_period = 10
        batch_size = 16
        learning_rate = 1e-2
        dropout = 0.0
        hidden = 8
        eval_period = 20
        patience = 0
        validation_fraction = 0.2
        "#,
        out_dir.display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            let name = entry.file_name().into_string().unwrap();
            out.insert(name, std::fs::read(entry.path()).unwrap());
        }
    }
    out
}

#[test]
fn full_pipeline_rerun_is_byte_identical() {
    let work = fresh_dir("pipeline_work");
    let out_a = fresh_dir("pipeline_a");
    let out_b = fresh_dir("pipeline_b");
    // One config naming out_a; the rerun redirects with --out so the
    // hash (which covers the config, out_dir included) stays the same.
    let config = write_config(&work, &out_a);
    let config_str = config.to_str().unwrap();

    for out in [&out_a, &out_b] {
        let out_str = out.to_str().unwrap();
        assert_code(&run(&["generate", "--config", config_str, "--out", out_str]), 0);
        assert_code(&run(&["train", "--config", config_str, "--out", out_str]), 0);
        assert_code(&run(&["report", "--config", config_str, "--out", out_str]), 0);
        // Estimate from the first run's checkpoint in both passes, so
        // the embedded checkpoint path matches too.
        let checkpoint = out_a.join("checkpoint_dnn_seed5_best.bin");
        assert_code(
            &run(&[
                "estimate",
                "--config",
                config_str,
                "--out",
                out_str,
                "--checkpoint",
                checkpoint.to_str().unwrap(),
            ]),
            0,
        );
    }

    let bytes_a = dir_bytes(&out_a);
    let bytes_b = dir_bytes(&out_b);
    assert!(bytes_a.len() > 20, "expected a full artifact set, got {}", bytes_a.len());
    assert_eq!(
        bytes_a.keys().collect::<Vec<_>>(),
        bytes_b.keys().collect::<Vec<_>>(),
        "artifact sets differ"
    );
    for (name, bytes) in &bytes_a {
        assert_eq!(bytes, &bytes_b[name], "artifact {name} differs between reruns");
    }
}

#[test]
fn train_stdout_is_reproducible() {
    let work = fresh_dir("stdout_work");
    let out_a = fresh_dir("stdout_a");
    let out_b = fresh_dir("stdout_b");
    let config = write_config(&work, &out_a);
    let config_str = config.to_str().unwrap();

    let first = run(&["train", "--config", config_str, "--out", out_a.to_str().unwrap()]);
    let second = run(&["train", "--config", config_str, "--out", out_b.to_str().unwrap()]);
    assert_code(&first, 0);
    assert_code(&second, 0);
    // Stdout differs only in the artifact directory it names.
    let strip = |bytes: &[u8], dir: &Path| {
        String::from_utf8(bytes.to_vec()).unwrap().replace(dir.to_str().unwrap(), "<out>")
    };
    assert_eq!(strip(&first.stdout, &out_a), strip(&second.stdout, &out_b));
    assert!(strip(&first.stdout, &out_a).contains("dan_lpe seed 5"));
}

#[test]
fn config_errors_exit_two() {
    let work = fresh_dir("config_err");
    let out = work.join("runs");

    // Unknown field.
    let bad = work.join("bad.toml");
    std::fs::write(&bad, "[experiment]\nbogus = 1\n").unwrap();
    let output = run(&["train", "--config", bad.to_str().unwrap()]);
    assert_code(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("bogus"));

    // Missing file.
    let missing = work.join("nope.toml");
    assert_code(&run(&["train", "--config", missing.to_str().unwrap()]), 2);

    // Structurally valid config, but an override that empties a list
    // the schema requires non-empty is impossible; instead check that a
    // bad method name in --method is rejected by the parser (usage
    // error, clap's own exit code 2).
    let good = write_config(&work, &out);
    let output = run(&[
        "train",
        "--config",
        good.to_str().unwrap(),
        "--method",
        "svm",
    ]);
    assert_code(&output, 2);
}

#[test]
fn runtime_errors_exit_one() {
    let work = fresh_dir("runtime_err");
    let out = fresh_dir("runtime_err_out");
    let config = write_config(&work, &out);
    let config_str = config.to_str().unwrap();

    // Report before any training: artifacts are missing.
    let output = run(&["report", "--config", config_str]);
    assert_code(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("train_report"));

    // Estimate against a checkpoint that does not exist.
    let output = run(&[
        "estimate",
        "--config",
        config_str,
        "--checkpoint",
        work.join("ghost.bin").to_str().unwrap(),
    ]);
    assert_code(&output, 1);
}

#[test]
fn seed_and_method_overrides_narrow_the_run() {
    let work = fresh_dir("override_work");
    let out = fresh_dir("override_out");
    let config = write_config(&work, &out);

    let output = run(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--method",
        "dnn,bbse",
    ]);
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("dnn seed 9"));
    assert!(stdout.contains("bbse seed 9"));
    assert!(!stdout.contains("dann seed"));
    assert!(out.join("train_report_bbse_seed9.json").exists());
    assert!(!out.join("train_report_dann_seed9.json").exists());

    // Reporting with the same overrides agrees on the config hash.
    let output = run(&[
        "report",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
        "--method",
        "dnn,bbse",
    ]);
    assert_code(&output, 0);

    // Reporting without them reads artifacts from a different effective
    // config and must refuse.
    let output = run(&[
        "report",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&output, 1);
}
