//! End-to-end tests that spawn the `dpfedbank` binary and check its
//! command-line contract: exit codes, output shape, determinism, and the
//! promise that input files are never modified.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE_CONFIG: &str = r#"
seed = 7
rounds = 3
client_fraction = 1.0
eval_n = 100

[population]
n_total = 200
d = 3
class_sep = 4.0
positive_frac = 0.5

[partition]
n_clients = 5
dirichlet_alpha = 100.0
min_shard = 5

[train]
learning_rate = 0.3
local_epochs = 1
batch_size = 16

[aggregation]
rule = "mean"
"#;

const PRIVACY_SECTION: &str = r#"
[privacy]
mode = "simple"
epsilon = 1.0
clip_norm = 0.5
"#;

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn dpfedbank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpfedbank"))
        .args(args)
        .env_remove("DPFB_THREADS")
        .output()
        .expect("binary spawns")
}

fn stdout_lines(output: &Output) -> Vec<String> {
    String::from_utf8(output.stdout.clone())
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).unwrap()
}

fn run_to_stdout(config: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    dpfedbank(&args)
}

#[test]
fn run_emits_one_line_per_round_plus_summary() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let output = run_to_stdout(&config, &[]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    let lines = stdout_lines(&output);
    assert_eq!(lines.len(), 4);
    for (i, line) in lines.iter().enumerate() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        let kind = value["kind"].as_str().unwrap();
        if i < 3 {
            assert_eq!(kind, "round");
            assert_eq!(value["round"].as_u64().unwrap(), i as u64 + 1);
        } else {
            assert_eq!(kind, "summary");
            assert_eq!(value["rounds"].as_u64().unwrap(), 3);
        }
    }
}

#[test]
fn repeated_runs_write_byte_identical_files() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let out_a = dir.path().join("a.jsonl");
    let out_b = dir.path().join("b.jsonl");
    for out in [&out_a, &out_b] {
        let output = run_to_stdout(&config, &["--out", out.to_str().unwrap()]);
        assert!(output.status.success(), "{}", stderr_text(&output));
    }
    let a = fs::read(&out_a).unwrap();
    let b = fs::read(&out_b).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn missing_config_file_exits_one() {
    let output = dpfedbank(&["run", "--config", "/nonexistent/config.toml"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(!stderr_text(&output).is_empty());
}

#[test]
fn unknown_keys_exit_one_and_name_the_key() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{BASE_CONFIG}\n[privacy]\nepsilonn = 1.0\n"));
    let output = dpfedbank(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_text(&output).contains("epsilonn"));

    let config = write_config(&dir, BASE_CONFIG);
    let output = run_to_stdout(&config, &["--set", "nonsense=1"]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_text(&output).contains("nonsense"));
}

#[test]
fn invalid_field_exits_one_and_names_the_field() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        &format!("{BASE_CONFIG}\n[privacy]\nmode = \"analytic\"\nepsilon = -1.0\n"),
    );
    let output = dpfedbank(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr_text(&output).contains("privacy.epsilon"));
}

#[test]
fn validate_accepts_a_good_config() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let output = dpfedbank(&["validate", "--config", config.to_str().unwrap()]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert_eq!(stdout_lines(&output), vec!["config ok".to_string()]);
}

#[test]
fn calibrate_prints_six_significant_digits() {
    let output = dpfedbank(&[
        "calibrate",
        "--clip",
        "0.5",
        "--epsilon",
        "1.0",
        "--delta",
        "1e-5",
        "--mode",
        "analytic",
    ]);
    assert!(output.status.success());
    assert_eq!(stdout_lines(&output), vec!["4.84480".to_string()]);

    let output = dpfedbank(&[
        "calibrate",
        "--sensitivity",
        "1.0",
        "--epsilon",
        "0.5",
        "--mode",
        "simple",
    ]);
    assert!(output.status.success());
    assert_eq!(stdout_lines(&output), vec!["2.00000".to_string()]);
}

#[test]
fn calibrate_rejects_delta_of_two() {
    let output = dpfedbank(&[
        "calibrate",
        "--clip",
        "0.5",
        "--epsilon",
        "1.0",
        "--delta",
        "2.0",
        "--mode",
        "analytic",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn sweep_emits_one_row_per_value_seed_pair() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{BASE_CONFIG}{PRIVACY_SECTION}"));
    let output = dpfedbank(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--axis",
        "epsilon",
        "--values",
        "0.1,1,10",
        "--seeds",
        "2",
    ]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    let lines = stdout_lines(&output);
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[0].starts_with("axis,value,seed_index,seed,"));
    for row in &lines[1..] {
        assert!(row.starts_with("epsilon,"));
    }
}

#[test]
fn sweep_rejects_an_empty_values_list() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, &format!("{BASE_CONFIG}{PRIVACY_SECTION}"));
    let output = dpfedbank(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--axis",
        "epsilon",
        "--values",
        "",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn sweep_rejects_epsilon_axis_when_privacy_is_off() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let output = dpfedbank(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--axis",
        "epsilon",
        "--values",
        "0.5,1",
    ]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn sweep_over_rules_favors_the_robust_rule_under_attack() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        r#"
seed = 11
rounds = 12
client_fraction = 1.0
eval_n = 300

[population]
n_total = 600
d = 6
class_sep = 3.0
positive_frac = 0.5

[partition]
n_clients = 10
dirichlet_alpha = 1.0
min_shard = 2

[model]
l2_lambda = 0.05

[train]
learning_rate = 0.5
local_epochs = 1
batch_size = 8

[attack]
variant = "scale_update"
factor = 50.0
attacker_ids = [7, 8, 9]

[defense]
enabled = false
"#,
    );
    let output = dpfedbank(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--axis",
        "rule",
        "--values",
        "mean,trimmed_mean(3)",
        "--seeds",
        "1",
    ]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    let lines = stdout_lines(&output);
    assert_eq!(lines.len(), 3);
    let accuracy = |row: &str| -> f64 {
        let cells: Vec<&str> = row.split(',').collect();
        cells[4].parse().unwrap()
    };
    let mean_row = lines.iter().find(|l| l.contains(",mean,")).unwrap();
    let trimmed_row = lines.iter().find(|l| l.contains("trimmed_mean(3)")).unwrap();
    assert!(
        accuracy(trimmed_row) > accuracy(mean_row) + 0.2,
        "trimmed {} vs mean {}",
        accuracy(trimmed_row),
        accuracy(mean_row)
    );
}

#[test]
fn commands_leave_the_config_file_unchanged() {
    let dir = TempDir::new().unwrap();
    let text = format!("{BASE_CONFIG}{PRIVACY_SECTION}");
    let config = write_config(&dir, &text);
    let before = fs::read(&config).unwrap();

    let output = run_to_stdout(&config, &["--set", "rounds=1"]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert_eq!(fs::read(&config).unwrap(), before);

    let output = dpfedbank(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--axis",
        "epsilon",
        "--values",
        "1,2",
        "--set",
        "rounds=1",
    ]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert_eq!(fs::read(&config).unwrap(), before);
}

#[test]
fn out_path_in_a_missing_directory_exits_two() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let out = dir.path().join("no_such_subdir").join("out.jsonl");
    let output = run_to_stdout(&config, &["--out", out.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn invalid_thread_cap_exits_one() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    for bad in ["0", "abc"] {
        let output = Command::new(env!("CARGO_BIN_EXE_dpfedbank"))
            .args(["run", "--config", config.to_str().unwrap()])
            .env("DPFB_THREADS", bad)
            .output()
            .expect("binary spawns");
        assert_eq!(output.status.code(), Some(1), "DPFB_THREADS={bad}");
    }
}

#[test]
fn seed_flag_switches_the_random_stream() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let one = run_to_stdout(&config, &["--seed", "1"]);
    let two = run_to_stdout(&config, &["--seed", "2"]);
    let one_again = run_to_stdout(&config, &["--seed", "1"]);
    assert!(one.status.success() && two.status.success());
    assert_ne!(one.stdout, two.stdout);
    assert_eq!(one.stdout, one_again.stdout);
}

#[test]
fn seeds_beyond_i64_range_are_accepted() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let output = run_to_stdout(&config, &["--seed", "14593188033824789139"]);
    assert!(output.status.success(), "{}", stderr_text(&output));
}

#[test]
fn shipped_example_config_validates_and_runs() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let example = example.to_str().unwrap();
    let output = dpfedbank(&["validate", "--config", example]);
    assert!(output.status.success(), "{}", stderr_text(&output));

    let output = dpfedbank(&["run", "--config", example, "--set", "rounds=2"]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert_eq!(stdout_lines(&output).len(), 3);
}

#[test]
fn set_override_changes_the_round_count() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, BASE_CONFIG);
    let output = run_to_stdout(&config, &["--set", "rounds=5"]);
    assert!(output.status.success(), "{}", stderr_text(&output));
    assert_eq!(stdout_lines(&output).len(), 6);
}
