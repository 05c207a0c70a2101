//! End-to-end tests of the command-line interface: shipped presets, artifact
//! layout, the exit-code contract, and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use divopt::config::parse_config;
use divopt::report::{SummaryDoc, VerifyDoc};
use divopt_core::presets::{self, PresetPayoff};

/// Run the binary with the given arguments.
fn divopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divopt"))
        .args(args)
        .output()
        .expect("the binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("process exits normally")
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).expect("config writes");
    path
}

/// Frozen-at-zero retention: drift and volatility vanish, the value
/// function is the identity, and simulated paths absorb immediately.
const PURE_SINGULAR: &str = r#"{
    "model": {
        "type": "proportional",
        "claim": { "dist": "exponential", "rate": 1.0 },
        "beta": [1.0, 10.0],
        "Q": [[-0.5, 0.5], [0.5, -0.5]],
        "r": 0.05
    },
    "payoff": {
        "c": { "type": "constant", "value": 1.0 },
        "f": { "type": "zero" }
    },
    "control": { "u_min": 0.0, "u_max": 0.0, "n_u": 1 },
    "grid": { "h": 0.5, "B": 20.0 },
    "verify": { "dt_sim": 0.01, "t_max": 400.0, "n_paths": 500, "seed": 3 },
    "probes": [[10.0, 1], [10.0, 2]]
}"#;

/// Two-regime proportional model on a coarse grid: cheap but non-trivial.
const PROP_TINY: &str = r#"{
    "model": {
        "type": "proportional",
        "claim": { "dist": "exponential", "rate": 1.0 },
        "beta": [1.0, 10.0],
        "Q": [[-0.5, 0.5], [0.5, -0.5]],
        "r": 0.05
    },
    "payoff": {
        "c": { "type": "constant", "value": 1.0 },
        "f": { "type": "zero" }
    },
    "control": { "u_min": 0.0, "u_max": 1.0, "n_u": 11 },
    "grid": { "h": 0.5, "B": 20.0 },
    "verify": { "dt_sim": 0.1, "t_max": 400.0, "n_paths": 400, "seed": 9 },
    "probes": [[10.0, 1], [10.0, 2]]
}"#;

/// Single regime with the retention frozen at one, matching the closed-form
/// benchmark; used to exercise the sweep report.
const FROZEN_SINGLE: &str = r#"{
    "model": {
        "type": "proportional",
        "claim": { "dist": "exponential", "rate": 1.0 },
        "beta": [1.0],
        "Q": [[0.0]],
        "r": 0.05
    },
    "payoff": {
        "c": { "type": "constant", "value": 1.0 },
        "f": { "type": "zero" }
    },
    "control": { "u_min": 1.0, "u_max": 1.0, "n_u": 1 },
    "grid": { "h": 0.25, "B": 30.0 },
    "probes": [[3.0, 1]]
}"#;

#[test]
fn shipped_presets_match_the_builtin_models() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets");
    let cases = [
        ("prop-exp.json", presets::prop_exp(PresetPayoff::Unit)),
        (
            "prop-exp-marginal.json",
            presets::prop_exp(PresetPayoff::Marginal),
        ),
        ("prop-unif.json", presets::prop_unif(PresetPayoff::Unit)),
        (
            "prop-unif-marginal.json",
            presets::prop_unif(PresetPayoff::Marginal),
        ),
        ("xol-exp.json", presets::xol_exp(PresetPayoff::Unit)),
        (
            "xol-exp-marginal.json",
            presets::xol_exp(PresetPayoff::Marginal),
        ),
        ("xol-unif.json", presets::xol_unif(PresetPayoff::Unit)),
        (
            "xol-unif-marginal.json",
            presets::xol_unif(PresetPayoff::Marginal),
        ),
    ];
    for (name, expected) in cases {
        let text = std::fs::read_to_string(dir.join(name)).expect("preset file exists");
        let resolved = parse_config(&text).expect("preset parses");
        assert_eq!(
            resolved.model, expected,
            "{name} builds the library's reference model"
        );
        assert_eq!(resolved.grid.step(), 0.1, "{name} uses the default h");
        assert_eq!(resolved.grid.cap(), 100.0, "{name} uses the default B");
        assert_eq!(resolved.options.tol, 1e-9, "{name} pins the tolerance");
        let verify = resolved.verify.expect("presets carry a verify block");
        assert_eq!(verify.n_paths, 100_000, "{name} pins the path count");
        assert_eq!(verify.dt_sim, 1e-3, "{name} pins the simulation step");
        assert_eq!(resolved.probes.len(), 2, "{name} probes both regimes");
        assert!(
            resolved.probes.iter().all(|p| p.x == 30.0),
            "{name} probes x = 30"
        );
    }
}

#[test]
fn solve_writes_artifacts_and_reports_probe_values() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PURE_SINGULAR);
    let out = tmp.path().join("out");
    let result = divopt(&["solve", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&result), 0, "solve succeeds: {}", stderr(&result));
    assert!(
        stdout(&result).contains("V(10, 1) = 10.000000000"),
        "probe values go to stdout, got {:?}",
        stdout(&result)
    );
    for name in ["value.csv", "barrier.csv", "summary.json"] {
        assert!(out.join(name).is_file(), "{name} is written");
    }
    let summary: SummaryDoc =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
            .expect("summary parses");
    assert!(summary.converged, "the degenerate model converges");
    assert_eq!(summary.probes.len(), 2, "both probes are reported");
    assert_eq!(summary.probes[0].value, 10.0, "the value is the surplus");
    assert_eq!(
        summary.config.solver.max_iter, 200_000,
        "the echo materializes solver defaults"
    );
    let barriers = std::fs::read_to_string(out.join("barrier.csv")).unwrap();
    assert!(
        barriers.starts_with("regime,barrier\n1,0.500000000\n2,0.500000000\n"),
        "everything above the first interior state pays out, got {barriers:?}"
    );
}

#[test]
fn config_problems_exit_2_with_class_specific_messages() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    let missing = tmp.path().join("nope.json");
    let result = divopt(&["solve", "--config", missing.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&result), 2, "a missing config exits 2");

    let syntax = write_config(tmp.path(), "{ not json");
    let result = divopt(&["solve", "--config", syntax.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&result), 2, "malformed JSON exits 2");
    assert!(
        stderr(&result).contains("syntax"),
        "the error names its class, got {}",
        stderr(&result)
    );

    let schema = write_config(
        tmp.path(),
        &PROP_TINY.replace("\"h\": 0.5", "\"h\": true"),
    );
    let result = divopt(&["solve", "--config", schema.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&result), 2, "a mistyped field exits 2");
    assert!(
        stderr(&result).contains("$.grid.h"),
        "the error points at the field, got {}",
        stderr(&result)
    );

    let semantic = write_config(
        tmp.path(),
        &PROP_TINY.replace("[-0.5, 0.5]", "[-0.6, 0.5]"),
    );
    let result = divopt(&["solve", "--config", semantic.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&result), 2, "an invalid generator exits 2");
    assert!(
        stderr(&result).contains("row 0"),
        "the error locates the bad row, got {}",
        stderr(&result)
    );
}

#[test]
fn unconverged_solve_exits_3_and_verify_refuses_it() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &PROP_TINY.replace(
            "\"probes\"",
            "\"solver\": { \"method\": \"value_iteration\", \"max_iter\": 1 },\n\"probes\"",
        ),
    );
    let out = tmp.path().join("out");
    let result = divopt(&["solve", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&result), 3, "hitting max_iter exits 3");
    let summary: SummaryDoc =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
            .expect("artifacts are still written");
    assert!(!summary.converged, "the summary records the failure");

    let result = divopt(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--solution",
        out.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 3, "verifying an unconverged policy exits 3");
}

#[test]
fn verify_passes_on_an_exact_model_and_fails_when_values_are_tampered() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PURE_SINGULAR);
    let solution = tmp.path().join("solution");
    let result = divopt(&["solve", "--config", config.to_str().unwrap(), "--out", solution.to_str().unwrap()]);
    assert_eq!(code(&result), 0, "solve succeeds: {}", stderr(&result));

    let report_dir = tmp.path().join("report");
    let result = divopt(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--solution",
        solution.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 0, "verification passes: {}", stderr(&result));
    let doc: VerifyDoc =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("verify.json")).unwrap())
            .expect("verify report parses");
    assert!(doc.pass, "all probes pass");
    assert_eq!(
        doc.probes[0].mean, 10.0,
        "immediate payout is simulated exactly"
    );
    assert_eq!(doc.probes[0].stderr, 0.0, "a deterministic payoff has no spread");

    let value_path = solution.join("value.csv");
    let tampered = std::fs::read_to_string(&value_path)
        .unwrap()
        .replace(
            "10.000000000,1,10.000000000,singular,",
            "10.000000000,1,20.000000000,singular,",
        );
    std::fs::write(&value_path, tampered).unwrap();
    let result = divopt(&[
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--solution",
        solution.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 4, "a value off by 10 fails verification");
    let doc: VerifyDoc =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("verify.json")).unwrap())
            .expect("verify report parses");
    assert!(!doc.pass, "the report records the failure");
}

#[test]
fn repeated_runs_produce_byte_identical_artifacts() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(tmp.path(), PROP_TINY);
    let config = config.to_str().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    for out in [&first, &second] {
        let result = divopt(&["solve", "--config", config, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&result), 0, "solve succeeds: {}", stderr(&result));
    }
    for name in ["value.csv", "barrier.csv", "summary.json"] {
        let a = std::fs::read(first.join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} is byte-identical across reruns");
    }

    let verify_first = tmp.path().join("verify-first");
    let verify_second = tmp.path().join("verify-second");
    for out in [&verify_first, &verify_second] {
        let result = divopt(&[
            "verify",
            "--config",
            config,
            "--solution",
            first.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&result), 0, "verify succeeds: {}", stderr(&result));
    }
    let a = std::fs::read(verify_first.join("verify.json")).unwrap();
    let b = std::fs::read(verify_second.join("verify.json")).unwrap();
    assert_eq!(a, b, "verify.json is byte-identical for the same seed");
}

#[test]
fn sweep_reports_probe_diffs_and_empirical_order() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(tmp.path(), FROZEN_SINGLE);
    let out = tmp.path().join("out");
    let result = divopt(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--h",
        "1.0,0.5,0.25",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 0, "sweep succeeds: {}", stderr(&result));
    let text = std::fs::read_to_string(out.join("sweep.csv")).expect("sweep.csv is written");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "h,x,regime,V,diff,order", "header is pinned");
    assert_eq!(lines.len(), 4, "one row per grid step and probe");
    assert!(lines[1].ends_with(",,"), "no diff at the first step");
    let last: Vec<&str> = lines[3].split(',').collect();
    assert!(!last[4].is_empty(), "diff appears from the second step");
    let order: f64 = last[5].parse().expect("order is numeric");
    assert!(
        order.is_finite() && order > 0.0 && order < 4.0,
        "refinement shows a sane convergence order, got {order}"
    );
}

#[test]
fn oracle_prints_the_closed_form_barrier_and_rejects_bad_parameters() {
    let result = divopt(&["oracle", "--mu", "1.0", "--sigma2", "2.0", "--r", "0.05"]);
    assert_eq!(code(&result), 0, "oracle succeeds");
    let text = stdout(&result);
    assert!(
        text.contains("optimal barrier: 5.639661654"),
        "the barrier matches the closed form, got {text:?}"
    );
    assert_eq!(
        text.lines().count(),
        2 + 21,
        "a header and 21 table rows are printed"
    );

    let result = divopt(&["oracle", "--mu", "1.0", "--sigma2", "0.0", "--r", "0.05"]);
    assert_eq!(code(&result), 2, "a degenerate volatility exits 2");
}

#[test]
fn off_grid_probes_snap_with_a_warning() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let config = write_config(
        tmp.path(),
        &PURE_SINGULAR.replace("[10.0, 1]", "[10.04, 1]"),
    );
    let out = tmp.path().join("out");
    let result = divopt(&["solve", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&result), 0, "solve succeeds: {}", stderr(&result));
    assert!(
        stderr(&result).contains("snapped"),
        "snapping is reported, got {}",
        stderr(&result)
    );
    let summary: SummaryDoc =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap())
            .expect("summary parses");
    assert_eq!(
        summary.config.probes[0].0, 10.0,
        "the echoed config carries the snapped probe"
    );
    assert_eq!(summary.probes[0].x, 10.0, "the probe report uses the snapped x");
}
