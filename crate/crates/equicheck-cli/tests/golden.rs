//! Golden-file tests for the command-line surface: identical inputs must
//! produce byte-identical reports, except for the timing field, which is
//! masked before comparison. Set UPDATE_GOLDEN=1 to rewrite the expected
//! files from the current binary's output.

use std::path::PathBuf;
use std::process::{Command, Stdio};

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root exists")
}

struct RunOutput {
    stdout: String,
    stderr: String,
    code: i32,
}

fn run_with(args: &[&str], stdin: Option<&str>, envs: &[(&str, &str)]) -> RunOutput {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_equicheck"));
    cmd.args(args)
        .current_dir(workspace_root())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in envs {
        cmd.env(k, v);
    }
    let mut child = cmd.spawn().expect("binary spawns");
    if let Some(text) = stdin {
        use std::io::Write;
        child
            .stdin
            .as_mut()
            .expect("stdin is piped")
            .write_all(text.as_bytes())
            .expect("stdin accepts the frame");
    }
    drop(child.stdin.take());
    let out = child.wait_with_output().expect("binary exits");
    RunOutput {
        stdout: String::from_utf8(out.stdout).expect("reports are UTF-8"),
        stderr: String::from_utf8(out.stderr).expect("errors are UTF-8"),
        code: out.status.code().expect("binary is not signal-killed"),
    }
}

fn run(args: &[&str]) -> RunOutput {
    run_with(args, None, &[])
}

/// Replaces the timing value so reports compare across runs.
fn mask_timing(report: &str) -> String {
    report
        .lines()
        .map(|line| {
            if line.trim_start().starts_with("\"timing_ms\":") {
                let indent = &line[..line.len() - line.trim_start().len()];
                format!("{indent}\"timing_ms\": \"<masked>\"")
            } else {
                line.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
        + "\n"
}

fn check_golden(name: &str, report: &str) {
    let masked = mask_timing(report);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &masked).expect("golden file is writable");
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read golden file {}: {e}", path.display()));
    assert_eq!(
        masked, expected,
        "report for {name} drifted from its golden file"
    );
}

const MARKET: &str = "docs/fixtures/market-entry.game.json";
const EXIT_FIGHT: &str = "docs/fixtures/market-entry-exit-fight.advice.json";
const ENTER_PASS: &str = "docs/fixtures/market-entry-enter-pass.advice.json";
const CHICKEN: &str = "docs/fixtures/chicken.game.json";
const CHICKEN_ADVICE: &str = "docs/fixtures/chicken.advice.json";

#[test]
fn verify_spce_reports_the_market_entry_witness() {
    let out = run(&["verify-spce", MARKET, EXIT_FIGHT]);
    assert_eq!(out.code, 1, "stderr: {}", out.stderr);
    check_golden("verify-spce-exit-fight.json", &out.stdout);
}

#[test]
fn verify_ce_holds_on_the_same_inputs() {
    let out = run(&["verify-ce", MARKET, EXIT_FIGHT]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("verify-ce-exit-fight.json", &out.stdout);
}

#[test]
fn verify_all_parallel_matches_sequential_byte_for_byte() {
    let sequential = run(&["verify-all", MARKET, ENTER_PASS, "--cross-check"]);
    assert_eq!(sequential.code, 0, "stderr: {}", sequential.stderr);
    check_golden("verify-all-enter-pass.json", &sequential.stdout);

    let parallel = run(&["verify-all", MARKET, ENTER_PASS, "--cross-check", "--parallel"]);
    assert_eq!(parallel.code, 0, "stderr: {}", parallel.stderr);
    // The command echo differs by the flag; everything below it must not.
    let strip_echo = |report: &str| {
        let masked = mask_timing(report);
        masked
            .lines()
            .skip_while(|line| *line != "  ],")
            .map(str::to_string)
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_echo(&sequential.stdout), strip_echo(&parallel.stdout));
}

#[test]
fn payoff_prints_exact_and_decimal() {
    let out = run(&["payoff", CHICKEN, CHICKEN_ADVICE, "--player", "row"]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("payoff-chicken-row.json", &out.stdout);
}

#[test]
fn solve_mdp_prints_value_and_policy() {
    let out = run(&["solve-mdp", CHICKEN, CHICKEN_ADVICE, "--player", "row"]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("solve-mdp-chicken-row.json", &out.stdout);
}

#[test]
fn validate_dumps_the_product_chains() {
    let out = run(&[
        "validate",
        CHICKEN,
        CHICKEN_ADVICE,
        "--dump-product",
    ]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("validate-chicken-dump.json", &out.stdout);
}

#[test]
fn from_cvp_embeds_the_reduction_artifacts() {
    let out = run(&["from-cvp", "docs/fixtures/or-gate.circuit.json"]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("from-cvp-or-gate.json", &out.stdout);
}

#[test]
fn bn_infer_answers_marginal_and_conditional_queries() {
    let marginal = run(&[
        "bn-infer",
        "docs/fixtures/xor-advice-k2.net.json",
        "--query",
        "A5",
        "--value",
        "b",
    ]);
    assert_eq!(marginal.code, 0, "stderr: {}", marginal.stderr);
    check_golden("bn-infer-xor-marginal.json", &marginal.stdout);

    let conditional = run(&[
        "bn-infer",
        "docs/fixtures/xor-advice-k2.net.json",
        "--query",
        "A5",
        "--value",
        "b",
        "--evidence",
        "A1=a",
        "--evidence",
        "A2=b",
    ]);
    assert_eq!(conditional.code, 0, "stderr: {}", conditional.stderr);
    check_golden("bn-infer-xor-conditional.json", &conditional.stdout);
}

#[test]
fn bn_unfold_embeds_the_explicit_model() {
    let out = run(&["bn-unfold", "docs/fixtures/xor-k1.model.json"]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    check_golden("bn-unfold-xor-k1.json", &out.stdout);
}

#[test]
fn simulate_is_bit_reproducible_for_a_fixed_seed() {
    let args = [
        "simulate",
        CHICKEN,
        CHICKEN_ADVICE,
        "--player",
        "row",
        "--trials",
        "10000",
        "--horizon",
        "32",
        "--seed",
        "7",
    ];
    let first = run(&args);
    assert_eq!(first.code, 0, "stderr: {}", first.stderr);
    check_golden("simulate-chicken-seed7.json", &first.stdout);
    let second = run(&args);
    assert_eq!(
        mask_timing(&first.stdout),
        mask_timing(&second.stdout),
        "same seed, different report"
    );
}

#[test]
fn from_cvp_pipes_into_verify_ce() {
    let circuit = r#"{"gates": [["true", 0, 0]], "output": 1}"#;
    let reduced = run_with(&["from-cvp", "-"], Some(circuit), &[]);
    assert_eq!(reduced.code, 0, "stderr: {}", reduced.stderr);
    // A true-valued circuit compiles to a violated equilibrium.
    let verdict = run_with(&["verify-ce", "-"], Some(&reduced.stdout), &[]);
    assert_eq!(verdict.code, 1, "stderr: {}", verdict.stderr);
    assert!(verdict.stdout.contains("\"holds\": false"));
    assert!(verdict.stdout.contains("\"alternative\": \"enter-circuit\""));

    let circuit = r#"{"gates": [["false", 0, 0]], "output": 1}"#;
    let reduced = run_with(&["from-cvp", "-"], Some(circuit), &[]);
    let verdict = run_with(&["verify-ce", "-"], Some(&reduced.stdout), &[]);
    assert_eq!(verdict.code, 0, "stderr: {}", verdict.stderr);
}

#[test]
fn from_cvp_writes_documents_that_verify_directly() {
    let dir = std::env::temp_dir().join("equicheck-golden-from-cvp");
    std::fs::create_dir_all(&dir).expect("temp dir is writable");
    let game_out = dir.join("reduced.game.json");
    let advice_out = dir.join("reduced.advice.json");
    let out = run(&[
        "from-cvp",
        "docs/fixtures/or-gate.circuit.json",
        "--game-out",
        game_out.to_str().expect("temp path is UTF-8"),
        "--advice-out",
        advice_out.to_str().expect("temp path is UTF-8"),
    ]);
    assert_eq!(out.code, 0, "stderr: {}", out.stderr);
    assert!(out.stdout.contains("\"written\""));

    // The or-gate circuit evaluates to true, so the written pair fails.
    let verdict = run(&[
        "verify-ce",
        game_out.to_str().expect("temp path is UTF-8"),
        advice_out.to_str().expect("temp path is UTF-8"),
    ]);
    assert_eq!(verdict.code, 1, "stderr: {}", verdict.stderr);
}

#[test]
fn input_errors_exit_2_and_name_the_construct() {
    let missing = run(&["verify-ce", "docs/fixtures/no-such.game.json", EXIT_FIGHT]);
    assert_eq!(missing.code, 2);
    assert!(missing
        .stderr
        .starts_with("error: cannot read game document at docs/fixtures/no-such.game.json"));

    let unknown_player = run(&["payoff", CHICKEN, CHICKEN_ADVICE, "--player", "nobody"]);
    assert_eq!(unknown_player.code, 2);
    assert_eq!(
        unknown_player.stderr,
        "error: player nobody is not a player of the game\n"
    );

    let bad_frame = run_with(&["verify-ce", "-"], Some(r#"{"game": {}}"#), &[]);
    assert_eq!(bad_frame.code, 2);
    assert_eq!(
        bad_frame.stderr,
        "error: stdin frame has no \"advice\" document\n"
    );

    let unknown_vertex = run(&[
        "bn-infer",
        "docs/fixtures/xor-advice-k2.net.json",
        "--query",
        "A9",
        "--value",
        "b",
    ]);
    assert_eq!(unknown_vertex.code, 2);
    assert!(unknown_vertex.stderr.contains("A9"));
}

#[test]
fn resource_caps_exit_3_and_point_at_the_env_var() {
    let out = run_with(
        &["bn-unfold", "docs/fixtures/xor-k2.model.json"],
        None,
        &[("EQUICHECK_JOINT_ACTION_BUDGET", "4")],
    );
    assert_eq!(out.code, 3);
    assert_eq!(
        out.stderr,
        "error: unfolding state q0 needs 32 joint actions, exceeding the budget of 4 \
         (raise EQUICHECK_JOINT_ACTION_BUDGET to allow it)\n"
    );

    let capped = run_with(
        &["verify-ce", CHICKEN, CHICKEN_ADVICE, "--cross-check"],
        None,
        &[("EQUICHECK_POLICY_CAP", "1")],
    );
    assert_eq!(capped.code, 3);
    assert!(capped.stderr.contains("EQUICHECK_POLICY_CAP"));

    // A generous cap lets the oracle confirm the verifier.
    let confirmed = run(&["verify-ce", CHICKEN, CHICKEN_ADVICE, "--cross-check"]);
    assert_eq!(confirmed.code, 0, "stderr: {}", confirmed.stderr);
    assert!(confirmed.stdout.contains("\"agrees\": true"));
}
