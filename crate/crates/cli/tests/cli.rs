//! End-to-end checks of the command-line surface: exit codes, file outputs,
//! and manifest-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mswqm"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data")
        .join(name)
}

fn read_non_timing(dir: &Path, file: &str) -> String {
    std::fs::read_to_string(dir.join(file)).unwrap()
}

#[test]
fn fixture_matches_reference_network() {
    let text = std::fs::read_to_string(data("three-node/network.toml")).unwrap();
    assert_eq!(text, mswqm_core::testnets::THREE_NODE_TOML);
}

#[test]
fn simulate_runs_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let out_a = tmp.path().join("a");
    let out_b = tmp.path().join("b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args([
                "simulate",
                "--network",
                data("small-line/network.toml").to_str().unwrap(),
                "--hydraulics",
                data("small-line/hydraulics.csv").to_str().unwrap(),
                "--scenario",
                data("small-line/scenario-mor.toml").to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        assert!(out.join("trajectory.csv").exists());
        assert!(out.join("outputs.csv").exists());
        assert!(out.join("manifest.json").exists());
    }
    // Byte-identical payload outputs across reruns.
    assert_eq!(
        read_non_timing(&out_a, "trajectory.csv"),
        read_non_timing(&out_b, "trajectory.csv")
    );
    assert_eq!(
        read_non_timing(&out_a, "outputs.csv"),
        read_non_timing(&out_b, "outputs.csv")
    );

    // Comparing the twin runs yields an all-zero error table.
    let out_cmp = tmp.path().join("cmp");
    let output = bin()
        .args([
            "compare",
            "--a",
            out_a.to_str().unwrap(),
            "--b",
            out_b.to_str().unwrap(),
            "--out",
            out_cmp.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report = read_non_timing(&out_cmp, "compare.csv");
    for line in report.lines().skip(1) {
        let rmse: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(rmse, 0.0, "twin runs must compare to zero: {line}");
    }
}

#[test]
fn out_of_scope_reaction_model_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = tmp.path().join("scenario.toml");
    let text = std::fs::read_to_string(data("small-line/scenario-mor.toml")).unwrap();
    std::fs::write(&scenario, text.replace("kind = \"M7\"", "kind = \"M5\"")).unwrap();
    let output = bin()
        .args([
            "simulate",
            "--network",
            data("small-line/network.toml").to_str().unwrap(),
            "--hydraulics",
            data("small-line/hydraulics.csv").to_str().unwrap(),
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("out of scope"), "stderr: {stderr}");

    // Extension points are rejected with the documented mapping.
    std::fs::write(
        &scenario,
        std::fs::read_to_string(data("small-line/scenario-mor.toml"))
            .unwrap()
            .replace("kind = \"M7\"", "kind = \"M8\""),
    )
    .unwrap();
    let output = bin()
        .args([
            "simulate",
            "--network",
            data("small-line/network.toml").to_str().unwrap(),
            "--hydraulics",
            data("small-line/hydraulics.csv").to_str().unwrap(),
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            tmp.path().join("out2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&output.stderr).contains("extension point"));
}

#[test]
fn validation_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let network = tmp.path().join("bad.toml");
    std::fs::write(&network, "[meta]\nname = \"bad\"\n").unwrap();
    let output = bin()
        .args([
            "simulate",
            "--network",
            network.to_str().unwrap(),
            "--hydraulics",
            data("small-line/hydraulics.csv").to_str().unwrap(),
            "--scenario",
            data("small-line/scenario-mor.toml").to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn reduce_writes_sweep_and_transform_caches() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("reduce");
    let status = bin()
        .args([
            "reduce",
            "--network",
            data("small-line/network.toml").to_str().unwrap(),
            "--hydraulics",
            data("small-line/hydraulics.csv").to_str().unwrap(),
            "--scenario",
            data("small-line/scenario-mor.toml").to_str().unwrap(),
            "--method",
            "nlpod",
            "--nr",
            "2,4",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = read_non_timing(&out, "rmse_sweep.csv");
    assert!(sweep.lines().count() >= 3, "sweep: {sweep}");
    assert!(out.join("transform_nlpod_nr2.bin").exists());
    assert!(out.join("transform_nlpod_nr4.bin").exists());

    // The cached transform reads back with matching dimensions.
    let mut file = std::fs::File::open(out.join("transform_nlpod_nr4.bin")).unwrap();
    let (method, pair, deim) = mswqm_core::io::cache::read_transform(&mut file).unwrap();
    assert_eq!(method, mswqm_core::mor::MorMethod::Nlpod);
    assert_eq!(pair.n_r(), 4);
    assert_eq!(pair.dim(), 10);
    assert!(deim.is_some());
}

#[test]
fn control_runs_closed_loop() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ctl");
    let status = bin()
        .args([
            "control",
            "--network",
            data("small-line/network.toml").to_str().unwrap(),
            "--hydraulics",
            data("small-line/hydraulics.csv").to_str().unwrap(),
            "--scenario",
            data("small-line/scenario-control.toml").to_str().unwrap(),
            "--relaxed",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let log = read_non_timing(&out, "control_log.csv");
    assert!(log.lines().count() > 10, "log: {log}");
    // Header per the documented format.
    assert!(log.starts_with("time_s,booster_id,u_mg_per_min,objective,solve_ms"));
}
