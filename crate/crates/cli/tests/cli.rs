//! End-to-end checks of the `nlkg` binary: artifacts, determinism, exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlkg"))
}

fn tmpdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nlkg-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(dir: &PathBuf) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(
        &path,
        r#"
seed = 7
c = 1.0
k_max = 6

[norms]
rho = 0.5
n_tail = 3

[normal_form]
r = 4
n_cutoff = 3
momentum_projection = "strict"

[scan]
gammas = [0.02, 0.01]
n_cells = [1]
samples = 200
k_max = 4
n_cutoff = 3

[sim]
t_final = 2.0
amplitude = 0.01
record_stride = 10
backend = "spectral"
init = "analytic"
"#,
    )
    .unwrap();
    path
}

#[test]
fn frequencies_subcommand_emits_expected_values() {
    let dir = tmpdir("freq");
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "k_max = 4\n[potential]\ns = 2.0\nm_scale = 1.0\nv_prime = [0.0, 0.0, 0.0, 0.0]\n[norms]\nrho = 0.5\nn_tail = 2\n[normal_form]\nr = 4\nn_cutoff = 2\nmomentum_projection = \"strict\"\n",
    )
    .unwrap();
    let out = bin()
        .args(["frequencies", "-c"])
        .arg(&cfg)
        .arg("-o")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.join("out/frequencies.csv")).unwrap();
    let omegas: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let expect = [2f64.sqrt(), 5f64.sqrt(), 10f64.sqrt(), 17f64.sqrt()];
    for (a, b) in omegas.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tmpdir("repro");
    let cfg = small_config(&dir);
    for sub in ["scan", "simulate", "normal-form"] {
        for out in ["a", "b"] {
            let status = bin()
                .arg(sub)
                .arg("-c")
                .arg(&cfg)
                .arg("-o")
                .arg(dir.join(out))
                .status()
                .unwrap();
            assert!(status.success());
        }
    }
    for name in ["scan.json", "diagnostics.csv", "normal-form.json"] {
        let a = fs::read(dir.join("a").join(name)).unwrap();
        let b = fs::read(dir.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs across reruns");
    }
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn validation_errors_exit_with_code_one() {
    let dir = tmpdir("badcfg");
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "k_max = 0\n").unwrap();
    let out = bin()
        .args(["frequencies", "-c"])
        .arg(&cfg)
        .arg("-o")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("k_max"), "error should name the field: {err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn numerical_failures_exit_with_code_two() {
    let dir = tmpdir("numfail");
    let cfg = dir.join("run.toml");
    fs::write(
        &cfg,
        "k_max = 6\n[norms]\nrho = 0.5\nn_tail = 3\n[normal_form]\nr = 4\nn_cutoff = 3\nmomentum_projection = \"strict\"\ngamma_floor = 1e6\n",
    )
    .unwrap();
    let out = bin()
        .args(["normal-form", "-c"])
        .arg(&cfg)
        .arg("-o")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    // partial outputs were removed
    assert!(!dir.join("out/normal-form.json").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_var_overrides_output_dir() {
    let dir = tmpdir("envdir");
    let cfg = small_config(&dir);
    let status = bin()
        .args(["frequencies", "-c"])
        .arg(&cfg)
        .env("NLKG_OUTPUT_DIR", dir.join("env-out"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.join("env-out/frequencies.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn divisor_atlas_emits_sorted_rows() {
    let dir = tmpdir("atlas");
    let cfg = small_config(&dir);
    let status = bin()
        .args(["divisor-atlas", "--count", "50", "-c"])
        .arg(&cfg)
        .arg("-o")
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(dir.join("out/divisor-atlas.csv")).unwrap();
    let scaled: Vec<f64> = text
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    assert!(!scaled.is_empty() && scaled.len() <= 50);
    assert!(scaled.windows(2).all(|w| w[0] <= w[1]), "not ascending");
    fs::remove_dir_all(&dir).unwrap();
}
