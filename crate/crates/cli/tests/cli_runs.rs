//! CLI runs: reproducibility of artifacts, row-count invariants, report
//! dumps and exit codes.

use std::fs;
use std::process::Command;

use opto_cli::{
    binmatch_report, dump_report, run, BackendChoice, CliError, Demo, RunConfig,
};
use opto_envs::binmatch::binmatch_generate;

fn temp_dir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("opto-cli-test-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn identical_scripted_runs_produce_byte_identical_step_logs() {
    let mut config = RunConfig::new(Demo::Fig4, BackendChoice::Scripted);
    config.steps = 5;
    config.seeds = vec![0, 1];

    let dir_a = temp_dir("repro-a");
    let dir_b = temp_dir("repro-b");
    config.out_dir = Some(dir_a.clone());
    run(&config).unwrap();
    config.out_dir = Some(dir_b.clone());
    run(&config).unwrap();

    let a = fs::read(dir_a.join("steps.jsonl")).unwrap();
    let b = fs::read(dir_b.join("steps.jsonl")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(dir_a.join("curve.csv")).unwrap(),
        fs::read(dir_b.join("curve.csv")).unwrap()
    );
    assert_eq!(
        fs::read(dir_a.join("graph.dot")).unwrap(),
        fs::read(dir_b.join("graph.dot")).unwrap()
    );
}

#[test]
fn curve_has_exactly_steps_times_seeds_rows() {
    let mut config = RunConfig::new(Demo::NumOpt, BackendChoice::Scripted);
    config.steps = 7;
    config.seeds = vec![0, 1, 2];
    let dir = temp_dir("rows");
    config.out_dir = Some(dir.clone());
    run(&config).unwrap();
    let curve = fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 7 * 3);
    let steps = fs::read_to_string(dir.join("steps.jsonl")).unwrap();
    assert_eq!(steps.lines().count(), 7 * 3);
    for line in steps.lines() {
        let json: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(json.get("metric").is_some());
    }
}

#[test]
fn fig4_curve_is_strictly_increasing() {
    let mut config = RunConfig::new(Demo::Fig4, BackendChoice::Scripted);
    config.steps = 5;
    let summary = run(&config).unwrap();
    let metrics = &summary.runs[0].metrics;
    assert!(metrics.windows(2).all(|w| w[1] > w[0]), "{metrics:?}");
    assert!(summary.runs[0].final_metric > *metrics.last().unwrap());
}

#[test]
fn adam_backend_is_rejected_outside_numopt() {
    let config = RunConfig::new(Demo::Battleship, BackendChoice::Adam);
    match run(&config) {
        Err(CliError::Config(message)) => assert!(message.contains("adam")),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn dump_report_is_byte_stable() {
    for demo in [Demo::Fig4, Demo::NumOpt, Demo::BinMatch, Demo::Battleship] {
        let config = RunConfig::new(demo, BackendChoice::Scripted);
        let first = dump_report(&config, 0).unwrap();
        let second = dump_report(&config, 0).unwrap();
        assert_eq!(first, second);
    }
}

#[test]
fn fig4_dump_matches_the_frozen_golden() {
    let config = RunConfig::new(Demo::Fig4, BackendChoice::Scripted);
    let report = dump_report(&config, 0).unwrap();
    assert_eq!(report, include_str!("../../core/tests/goldens/fig4_report.txt"));
}

#[test]
fn battleship_report_lists_the_code_policy_variable() {
    let config = RunConfig::new(Demo::Battleship, BackendChoice::Scripted);
    let report = dump_report(&config, 0).unwrap();
    assert!(report.contains("(code) act_code = ```"));
    assert!(report.contains("#Variables"));
}

#[test]
fn binmatch_all_correct_report_shows_success_feedback() {
    let instance = binmatch_generate(3, 0);
    let report = binmatch_report(&instance, &instance.reference.clone()).unwrap();
    assert!(report.ends_with("#Feedback:\nAll checks succeeded"), "{report}");
}

#[test]
fn binary_exits_2_on_config_error() {
    let output = Command::new(env!("CARGO_BIN_EXE_opto"))
        .args(["demo", "nonsense"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn binary_exits_3_on_backend_failure() {
    let output = Command::new(env!("CARGO_BIN_EXE_opto"))
        .args(["demo", "fig4", "--backend", "llm", "--steps", "1"])
        .env("OPTO_API_KEY", "dummy")
        .env("OPTO_BASE_URL", "http://127.0.0.1:9/v1")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn binary_runs_the_fig4_demo() {
    let output = Command::new(env!("CARGO_BIN_EXE_opto"))
        .args(["demo", "fig4", "--steps", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("final metric over 1 seed(s)"));
}

#[test]
fn binary_dump_report_matches_library() {
    let output = Command::new(env!("CARGO_BIN_EXE_opto"))
        .args(["dump-report", "fig4"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    let config = RunConfig::new(Demo::Fig4, BackendChoice::Scripted);
    let expected = dump_report(&config, 0).unwrap();
    assert_eq!(stdout.trim_end(), expected);
}
