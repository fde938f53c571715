//! Command-line surface: parses game, advice, circuit, and network
//! documents, routes one subcommand per run, and prints a machine-readable
//! report with exact rationals, 12-significant-digit decimal
//! approximations, input digests, and stable field ordering.
//!
//! Exit codes: 0 success or equilibrium holds, 1 equilibrium violated,
//! 2 malformed input, 3 resource cap exceeded.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use equicheck::analysis::payoff_under_d;
use equicheck::bayes::{infer, parse_net, parse_unfold_model, unfold, BayesError};
use equicheck::cvp::{parse_circuit, reduce, serialize_circuit};
use equicheck::model::{
    parse_advice, parse_game, serialize_advice, serialize_game, ControllerAdvice, Game, PlayerId,
    StateId,
};
use equicheck::oracle::{
    brute_force_ce, brute_force_spce, simulate, truncation_bound, OracleError, DEFAULT_POLICY_CAP,
};
use equicheck::product::{build_chain, build_mdp, ProductState};
use equicheck::rational::Rational;
use equicheck::solver::solve_mdp;
use equicheck::verify::{verify_ce_player, verify_spce_player, DeviationWitness, WitnessKind};
use serde::Serialize;
use sha2::{Digest, Sha256};

const POLICY_CAP_ENV: &str = "EQUICHECK_POLICY_CAP";
const BUDGET_ENV: &str = "EQUICHECK_JOINT_ACTION_BUDGET";
const DEFAULT_JOINT_ACTION_BUDGET: u64 = 4096;

#[derive(Parser)]
#[command(
    name = "equicheck",
    version,
    about = "Equilibrium verification for controller advice in probabilistic concurrent games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate documents and summarize their contents
    Validate(ValidateArgs),
    /// Exact probability of reaching the player's goal when everyone follows the advice
    Payoff(PlayerStateArgs),
    /// Optimal deviation value and policy for one player
    SolveMdp(PlayerStateArgs),
    /// Decide whether the advice is a correlated equilibrium
    VerifyCe(VerifyArgs),
    /// Decide whether the advice is a subgame-perfect correlated equilibrium
    VerifySpce(VerifyArgs),
    /// Run both equilibrium checks
    VerifyAll(VerifyArgs),
    /// Compile a circuit document into a game and advice pair
    FromCvp(FromCvpArgs),
    /// Single marginal or conditional probability query on a network document
    BnInfer(BnInferArgs),
    /// Expand a succinct network model into explicit game and advice documents
    BnUnfold(BnUnfoldArgs),
    /// Monte-Carlo estimate of a payoff under the advice
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Game document path, or - for a {"game", "advice"} frame on stdin
    game: String,
    /// Advice document path (optional; required by --dump-product)
    advice: Option<String>,
    /// Also emit each player's advice chain as a document
    #[arg(long)]
    dump_product: bool,
}

#[derive(Args)]
struct PlayerStateArgs {
    /// Game document path, or - for a {"game", "advice"} frame on stdin
    game: String,
    /// Advice document path (omitted when reading from stdin)
    advice: Option<String>,
    /// Player to analyze
    #[arg(long)]
    player: String,
    /// State to evaluate at (defaults to the initial state)
    #[arg(long)]
    state: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Game document path, or - for a {"game", "advice"} frame on stdin
    game: String,
    /// Advice document path (omitted when reading from stdin)
    advice: Option<String>,
    /// Check players on worker threads; verdict and report are unchanged
    #[arg(long)]
    parallel: bool,
    /// Also run the brute-force policy-enumeration oracle and report agreement
    #[arg(long)]
    cross_check: bool,
}

#[derive(Args)]
struct FromCvpArgs {
    /// Circuit document path, or - for stdin
    circuit: String,
    /// Write the game document here instead of embedding it in the report
    #[arg(long, requires = "advice_out")]
    game_out: Option<PathBuf>,
    /// Write the advice document here instead of embedding it in the report
    #[arg(long, requires = "game_out")]
    advice_out: Option<PathBuf>,
}

#[derive(Args)]
struct BnInferArgs {
    /// Network document path, or - for stdin
    net: String,
    /// Vertex to query
    #[arg(long)]
    query: String,
    /// Domain value whose probability is requested
    #[arg(long)]
    value: String,
    /// Observed vertex, as NAME=VALUE (repeatable)
    #[arg(long = "evidence", value_name = "NAME=VALUE")]
    evidence: Vec<String>,
}

#[derive(Args)]
struct BnUnfoldArgs {
    /// Succinct model document path, or - for stdin
    model: String,
    /// Write the game document here instead of embedding it in the report
    #[arg(long, requires = "advice_out")]
    game_out: Option<PathBuf>,
    /// Write the advice document here instead of embedding it in the report
    #[arg(long, requires = "game_out")]
    advice_out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Game document path, or - for a {"game", "advice"} frame on stdin
    game: String,
    /// Advice document path (omitted when reading from stdin)
    advice: Option<String>,
    /// Player whose goal is tracked
    #[arg(long)]
    player: String,
    /// Start state (defaults to the initial state)
    #[arg(long)]
    state: Option<String>,
    /// Number of independent trials
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Steps before a trial is truncated
    #[arg(long, default_value_t = 64)]
    horizon: u32,
    /// Generator seed; same seed, same report
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Failures that terminate a run before a report is produced.
enum Failure {
    /// Malformed or inconsistent input; the message names the construct.
    Input(String),
    /// A configured resource cap was exceeded.
    Cap(String),
}

impl From<equicheck::model::ModelError> for Failure {
    fn from(e: equicheck::model::ModelError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<BayesError> for Failure {
    fn from(e: BayesError) -> Self {
        match e {
            BayesError::BudgetExceeded { .. } => {
                Failure::Cap(format!("{e} (raise {BUDGET_ENV} to allow it)"))
            }
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::Cap(format!("{e} (raise {POLICY_CAP_ENV} to allow it)"))
    }
}

/// A rational rendered for reports: exact plus a decimal approximation.
#[derive(Serialize)]
struct Val {
    exact: String,
    decimal: String,
}

fn val(r: &Rational) -> Val {
    Val {
        exact: r.to_string(),
        decimal: r.to_decimal_string(12),
    }
}

#[derive(Serialize)]
struct InputDigest {
    role: &'static str,
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct WitnessOut {
    player: String,
    state: String,
    recommended: String,
    alternative: String,
    value_following: Val,
    value_deviating: Val,
    kind: WitnessKind,
}

fn witness_out(w: &DeviationWitness) -> WitnessOut {
    WitnessOut {
        player: w.player.to_string(),
        state: w.state.to_string(),
        recommended: w.recommended.to_string(),
        alternative: w.alternative.to_string(),
        value_following: val(&w.value_following),
        value_deviating: val(&w.value_deviating),
        kind: w.kind,
    }
}

#[derive(Serialize)]
struct VerdictOut {
    holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<WitnessOut>,
}

fn verdict_out(witness: Option<DeviationWitness>) -> VerdictOut {
    VerdictOut {
        holds: witness.is_none(),
        witness: witness.as_ref().map(witness_out),
    }
}

#[derive(Serialize)]
struct Report {
    command: Vec<String>,
    inputs: Vec<InputDigest>,
    #[serde(flatten)]
    payload: serde_json::Value,
    timing_ms: f64,
}

/// A successful run: its exit code plus the payload to report.
struct Outcome {
    exit: u8,
    payload: serde_json::Value,
}

fn ok(payload: impl Serialize) -> Result<Outcome, Failure> {
    Ok(Outcome {
        exit: 0,
        payload: serde_json::to_value(payload).expect("report payloads always serialize"),
    })
}

fn main() -> ExitCode {
    let clock = Instant::now();
    let command: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let mut inputs = Vec::new();
    match dispatch(cli.command, &mut inputs) {
        Ok(outcome) => {
            let report = Report {
                command,
                inputs,
                payload: outcome.payload,
                timing_ms: (clock.elapsed().as_secs_f64() * 1e6).round() / 1e3,
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("reports always serialize")
            );
            ExitCode::from(outcome.exit)
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Cap(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

// ---- Input loading --------------------------------------------------------------

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Reads one document from a path or stdin (`-`), recording its digest.
fn read_document(
    role: &'static str,
    path: &str,
    inputs: &mut Vec<InputDigest>,
) -> Result<String, Failure> {
    let bytes = if path == "-" {
        let mut buf = Vec::new();
        std::io::stdin()
            .read_to_end(&mut buf)
            .map_err(|e| Failure::Input(format!("cannot read {role} document from stdin: {e}")))?;
        buf
    } else {
        std::fs::read(path)
            .map_err(|e| Failure::Input(format!("cannot read {role} document at {path}: {e}")))?
    };
    inputs.push(InputDigest {
        role,
        path: path.to_string(),
        sha256: sha256_hex(&bytes),
    });
    String::from_utf8(bytes)
        .map_err(|_| Failure::Input(format!("{role} document at {path} is not valid UTF-8")))
}

/// Wraps a parse error with the document it came from, so a run that was
/// given several inputs names the offending one.
fn in_document<E: std::fmt::Display>(role: &'static str, path: &str) -> impl FnOnce(E) -> Failure {
    let place = if path == "-" {
        format!("{role} document on stdin")
    } else {
        format!("{role} document at {path}")
    };
    move |e| Failure::Input(format!("{place}: {e}"))
}

/// Loads a game and its advice. `game_path` of `-` reads a single JSON
/// frame from stdin carrying both documents, either directly under "game"
/// and "advice" keys or nested under "artifacts" exactly as `from-cvp` and
/// `bn-unfold` emit them, so their reports pipe straight into the verifiers.
fn load_pair(
    game_path: &str,
    advice_path: Option<&str>,
    inputs: &mut Vec<InputDigest>,
) -> Result<(Game, ControllerAdvice), Failure> {
    if game_path == "-" {
        if advice_path.is_some() {
            return Err(Failure::Input(
                "reading from stdin takes no advice path; the frame carries both documents".into(),
            ));
        }
        let text = read_document("stdin", "-", inputs)?;
        let frame: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("stdin frame is not valid JSON: {e}")))?;
        let docs = frame.get("artifacts").unwrap_or(&frame);
        let game_doc = docs
            .get("game")
            .ok_or_else(|| Failure::Input("stdin frame has no \"game\" document".into()))?;
        let advice_doc = docs
            .get("advice")
            .ok_or_else(|| Failure::Input("stdin frame has no \"advice\" document".into()))?;
        let game = parse_game(&game_doc.to_string()).map_err(in_document("game", "-"))?;
        let advice =
            parse_advice(&advice_doc.to_string(), &game).map_err(in_document("advice", "-"))?;
        Ok((game, advice))
    } else {
        let game_text = read_document("game", game_path, inputs)?;
        let game = parse_game(&game_text).map_err(in_document("game", game_path))?;
        let advice_path = advice_path.ok_or_else(|| {
            Failure::Input("an advice document path is required after the game path".into())
        })?;
        let advice_text = read_document("advice", advice_path, inputs)?;
        let advice =
            parse_advice(&advice_text, &game).map_err(in_document("advice", advice_path))?;
        Ok((game, advice))
    }
}

fn resolve_player(game: &Game, name: &str) -> Result<PlayerId, Failure> {
    let player = PlayerId::new(name);
    if game.player_position(&player).is_none() {
        return Err(Failure::Input(format!(
            "player {name} is not a player of the game"
        )));
    }
    Ok(player)
}

fn resolve_state(game: &Game, name: Option<&str>) -> Result<StateId, Failure> {
    match name {
        None => Ok(game.initial().clone()),
        Some(n) => {
            let state = StateId::new(n);
            if game.state_position(&state).is_none() {
                return Err(Failure::Input(format!(
                    "state {n} is not a state of the game"
                )));
            }
            Ok(state)
        }
    }
}

fn env_cap(var: &str, default: u64) -> Result<u64, Failure> {
    match std::env::var(var) {
        Ok(text) => text.trim().parse().map_err(|_| {
            Failure::Input(format!("{var} must be a positive integer, got {text:?}"))
        }),
        Err(std::env::VarError::NotPresent) => Ok(default),
        Err(std::env::VarError::NotUnicode(_)) => {
            Err(Failure::Input(format!("{var} is not valid UTF-8")))
        }
    }
}

// ---- Dispatch -------------------------------------------------------------------

fn dispatch(command: Command, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    match command {
        Command::Validate(args) => run_validate(args, inputs),
        Command::Payoff(args) => run_payoff(args, inputs),
        Command::SolveMdp(args) => run_solve_mdp(args, inputs),
        Command::VerifyCe(args) => run_verify(Check::Ce, args, inputs),
        Command::VerifySpce(args) => run_verify(Check::Spce, args, inputs),
        Command::VerifyAll(args) => run_verify(Check::All, args, inputs),
        Command::FromCvp(args) => run_from_cvp(args, inputs),
        Command::BnInfer(args) => run_bn_infer(args, inputs),
        Command::BnUnfold(args) => run_bn_unfold(args, inputs),
        Command::Simulate(args) => run_simulate(args, inputs),
    }
}

// ---- validate -------------------------------------------------------------------

#[derive(Serialize)]
struct GameSummary {
    states: usize,
    players: usize,
    actions: usize,
    initial: String,
}

#[derive(Serialize)]
struct AdviceSummary {
    states: usize,
    rows: usize,
}

#[derive(Serialize)]
struct ChainDump {
    player: String,
    states: Vec<String>,
    goal: Vec<String>,
    transitions: Vec<(String, Vec<(String, String)>)>,
}

#[derive(Serialize)]
struct ValidatePayload {
    game: GameSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    advice: Option<AdviceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    product: Option<Vec<ChainDump>>,
}

fn summarize_game(game: &Game) -> GameSummary {
    GameSummary {
        states: game.states().len(),
        players: game.players().len(),
        actions: game.actions().len(),
        initial: game.initial().to_string(),
    }
}

fn run_validate(args: ValidateArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let (game, advice) = if args.game == "-" || args.advice.is_some() {
        let (g, d) = load_pair(&args.game, args.advice.as_deref(), inputs)?;
        (g, Some(d))
    } else {
        let text = read_document("game", &args.game, inputs)?;
        (parse_game(&text).map_err(in_document("game", &args.game))?, None)
    };

    let product = if args.dump_product {
        let advice = advice.as_ref().ok_or_else(|| {
            Failure::Input("--dump-product needs an advice document to build the chains".into())
        })?;
        let mut dumps = Vec::new();
        for player in game.players() {
            let chain = build_chain(&game, advice, player).expect("validated inputs");
            dumps.push(ChainDump {
                player: player.to_string(),
                states: chain.states().iter().map(|s| s.to_string()).collect(),
                goal: (0..chain.len())
                    .filter(|&s| chain.is_goal(s))
                    .map(|s| chain.states()[s].to_string())
                    .collect(),
                transitions: (0..chain.len())
                    .map(|s| {
                        (
                            chain.states()[s].to_string(),
                            chain
                                .row(s)
                                .iter()
                                .map(|(t, p)| (chain.states()[*t].to_string(), p.to_string()))
                                .collect(),
                        )
                    })
                    .collect(),
            });
        }
        Some(dumps)
    } else {
        None
    };

    ok(ValidatePayload {
        game: summarize_game(&game),
        advice: advice.as_ref().map(|d| AdviceSummary {
            states: d.states().count(),
            rows: d.states().map(|q| d.table(q).len()).sum(),
        }),
        product,
    })
}

// ---- payoff ---------------------------------------------------------------------

#[derive(Serialize)]
struct PayoffPayload {
    player: String,
    state: String,
    payoff: Val,
}

fn run_payoff(args: PlayerStateArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let (game, advice) = load_pair(&args.game, args.advice.as_deref(), inputs)?;
    let player = resolve_player(&game, &args.player)?;
    let state = resolve_state(&game, args.state.as_deref())?;
    let payoff = payoff_under_d(&game, &advice, &player, &state);
    ok(PayoffPayload {
        player: player.to_string(),
        state: state.to_string(),
        payoff: val(&payoff),
    })
}

// ---- solve-mdp ------------------------------------------------------------------

#[derive(Serialize)]
struct PolicyEntry {
    state: String,
    action: String,
}

#[derive(Serialize)]
struct SolveMdpPayload {
    player: String,
    anchor: String,
    value: Val,
    policy: Vec<PolicyEntry>,
}

fn run_solve_mdp(args: PlayerStateArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let (game, advice) = load_pair(&args.game, args.advice.as_deref(), inputs)?;
    let player = resolve_player(&game, &args.player)?;
    let state = resolve_state(&game, args.state.as_deref())?;
    let mdp = build_mdp(&game, &advice, &player).expect("validated inputs");
    let anchor = ProductState::Plain(state.clone());
    let solution = solve_mdp(&mdp, &anchor);
    let value = solution
        .values
        .get(&anchor)
        .expect("plain states are always materialized");
    ok(SolveMdpPayload {
        player: player.to_string(),
        anchor: state.to_string(),
        value: val(value),
        policy: solution
            .policy
            .iter()
            .map(|(s, a)| PolicyEntry {
                state: s.to_string(),
                action: a.to_string(),
            })
            .collect(),
    })
}

// ---- verify-ce / verify-spce / verify-all ---------------------------------------

enum Check {
    Ce,
    Spce,
    All,
}

#[derive(Serialize)]
struct CrossCheck {
    policy_cap: u64,
    agrees: bool,
}

#[derive(Serialize)]
struct VerifyOnePayload {
    check: &'static str,
    verdict: VerdictOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_check: Option<CrossCheck>,
}

#[derive(Serialize)]
struct VerifyAllPayload {
    ce: VerdictOut,
    spce: VerdictOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_check: Option<CrossCheck>,
}

/// Runs one per-player check over all players, sequentially or on worker
/// threads. Either way the result is the first witness in player order, so
/// the report does not depend on scheduling.
fn scan_players(
    game: &Game,
    advice: &ControllerAdvice,
    parallel: bool,
    check: fn(&Game, &ControllerAdvice, &PlayerId) -> Option<DeviationWitness>,
) -> Option<DeviationWitness> {
    if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = game
                .players()
                .iter()
                .map(|player| scope.spawn(move || check(game, advice, player)))
                .collect();
            handles
                .into_iter()
                .filter_map(|h| h.join().expect("verification threads do not panic"))
                .next()
        })
    } else {
        game.players()
            .iter()
            .find_map(|player| check(game, advice, player))
    }
}

fn run_verify(
    check: Check,
    args: VerifyArgs,
    inputs: &mut Vec<InputDigest>,
) -> Result<Outcome, Failure> {
    let (game, advice) = load_pair(&args.game, args.advice.as_deref(), inputs)?;
    let cap = env_cap(POLICY_CAP_ENV, DEFAULT_POLICY_CAP)?;

    let ce = match check {
        Check::Ce | Check::All => Some(verdict_out(scan_players(
            &game,
            &advice,
            args.parallel,
            verify_ce_player,
        ))),
        Check::Spce => None,
    };
    let spce = match check {
        Check::Spce | Check::All => Some(verdict_out(scan_players(
            &game,
            &advice,
            args.parallel,
            verify_spce_player,
        ))),
        Check::Ce => None,
    };

    let cross_check = if args.cross_check {
        if let Some(ce) = &ce {
            let oracle = brute_force_ce(&game, &advice, cap)?;
            assert_eq!(
                ce.holds, oracle,
                "verifier and brute-force oracle disagree on the equilibrium"
            );
        }
        if let Some(spce) = &spce {
            let oracle = brute_force_spce(&game, &advice, cap)?;
            assert_eq!(
                spce.holds, oracle.holds,
                "verifier and brute-force oracle disagree on subgame perfection"
            );
        }
        Some(CrossCheck {
            policy_cap: cap,
            agrees: true,
        })
    } else {
        None
    };

    let holds = ce.as_ref().map_or(true, |v| v.holds) && spce.as_ref().map_or(true, |v| v.holds);
    let payload = match check {
        Check::Ce => serde_json::to_value(VerifyOnePayload {
            check: "correlated-equilibrium",
            verdict: ce.expect("present for this check"),
            cross_check,
        }),
        Check::Spce => serde_json::to_value(VerifyOnePayload {
            check: "subgame-perfect-correlated-equilibrium",
            verdict: spce.expect("present for this check"),
            cross_check,
        }),
        Check::All => serde_json::to_value(VerifyAllPayload {
            ce: ce.expect("present for this check"),
            spce: spce.expect("present for this check"),
            cross_check,
        }),
    };
    Ok(Outcome {
        exit: if holds { 0 } else { 1 },
        payload: payload.expect("report payloads always serialize"),
    })
}

// ---- from-cvp / bn-unfold -------------------------------------------------------

#[derive(Serialize)]
struct WrittenOut {
    game: String,
    advice: String,
}

#[derive(Serialize)]
struct Artifacts {
    game: serde_json::Value,
    advice: serde_json::Value,
}

/// Emits a generated game and advice pair: to files when output paths were
/// given, embedded in the report otherwise (ready to pipe into a verifier).
fn emit_pair(
    game: &Game,
    advice: &ControllerAdvice,
    game_out: Option<&PathBuf>,
    advice_out: Option<&PathBuf>,
) -> Result<(Option<WrittenOut>, Option<Artifacts>), Failure> {
    let game_text = serialize_game(game);
    let advice_text = serialize_advice(advice);
    match (game_out, advice_out) {
        (Some(gp), Some(ap)) => {
            std::fs::write(gp, &game_text).map_err(|e| {
                Failure::Input(format!("cannot write game document to {}: {e}", gp.display()))
            })?;
            std::fs::write(ap, &advice_text).map_err(|e| {
                Failure::Input(format!(
                    "cannot write advice document to {}: {e}",
                    ap.display()
                ))
            })?;
            Ok((
                Some(WrittenOut {
                    game: gp.display().to_string(),
                    advice: ap.display().to_string(),
                }),
                None,
            ))
        }
        _ => Ok((
            None,
            Some(Artifacts {
                game: serde_json::from_str(&game_text).expect("serialized documents are JSON"),
                advice: serde_json::from_str(&advice_text).expect("serialized documents are JSON"),
            }),
        )),
    }
}

#[derive(Serialize)]
struct FromCvpPayload {
    gates: usize,
    output: usize,
    game: GameSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    written: Option<WrittenOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    artifacts: Option<Artifacts>,
}

fn run_from_cvp(args: FromCvpArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let text = read_document("circuit", &args.circuit, inputs)?;
    let circuit = parse_circuit(&text).map_err(in_document("circuit", &args.circuit))?;
    // Round-trip so downstream reports hash a canonical document.
    let _ = serialize_circuit(&circuit);
    let (game, advice) = reduce(&circuit);
    let (written, artifacts) = emit_pair(
        &game,
        &advice,
        args.game_out.as_ref(),
        args.advice_out.as_ref(),
    )?;
    ok(FromCvpPayload {
        gates: circuit.gates().len(),
        output: circuit.output(),
        game: summarize_game(&game),
        written,
        artifacts,
    })
}

#[derive(Serialize)]
struct BnUnfoldPayload {
    budget: u64,
    game: GameSummary,
    advice_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    written: Option<WrittenOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    artifacts: Option<Artifacts>,
}

fn run_bn_unfold(args: BnUnfoldArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let text = read_document("model", &args.model, inputs)?;
    let (skeleton, advice_nets, trans_nets) =
        parse_unfold_model(&text).map_err(in_document("model", &args.model))?;
    let budget = env_cap(BUDGET_ENV, DEFAULT_JOINT_ACTION_BUDGET)?;
    let (game, advice) = unfold(&skeleton, &advice_nets, &trans_nets, budget as u128)?;
    let (written, artifacts) = emit_pair(
        &game,
        &advice,
        args.game_out.as_ref(),
        args.advice_out.as_ref(),
    )?;
    ok(BnUnfoldPayload {
        budget,
        game: summarize_game(&game),
        advice_rows: advice.states().map(|q| advice.table(q).len()).sum(),
        written,
        artifacts,
    })
}

// ---- bn-infer -------------------------------------------------------------------

#[derive(Serialize)]
struct BnInferPayload {
    query: String,
    value: String,
    evidence: BTreeMap<String, String>,
    probability: Val,
}

fn run_bn_infer(args: BnInferArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    let text = read_document("net", &args.net, inputs)?;
    let net = parse_net(&text).map_err(in_document("net", &args.net))?;
    let mut evidence = BTreeMap::new();
    for pair in &args.evidence {
        let (name, value) = pair.split_once('=').ok_or_else(|| {
            Failure::Input(format!("evidence {pair:?} is not of the form NAME=VALUE"))
        })?;
        if evidence.insert(name.to_string(), value.to_string()).is_some() {
            return Err(Failure::Input(format!(
                "evidence names vertex {name} twice"
            )));
        }
    }
    let probability = infer(&net, &args.query, &args.value, &evidence)?;
    ok(BnInferPayload {
        query: args.query,
        value: args.value,
        evidence,
        probability: val(&probability),
    })
}

// ---- simulate -------------------------------------------------------------------

#[derive(Serialize)]
struct SimulatePayload {
    player: String,
    state: String,
    trials: u64,
    horizon: u32,
    seed: u64,
    hits: u64,
    estimate: Val,
    std_error_bound: f64,
    truncation_bound: Val,
}

fn run_simulate(args: SimulateArgs, inputs: &mut Vec<InputDigest>) -> Result<Outcome, Failure> {
    if args.trials == 0 || args.horizon == 0 {
        return Err(Failure::Input(
            "simulate needs at least one trial and a horizon of at least one step".into(),
        ));
    }
    let (game, advice) = load_pair(&args.game, args.advice.as_deref(), inputs)?;
    let player = resolve_player(&game, &args.player)?;
    let state = resolve_state(&game, args.state.as_deref())?;
    let report = simulate(
        &game,
        &advice,
        &player,
        &state,
        args.trials,
        args.horizon,
        args.seed,
    );
    let trunc = truncation_bound(&game, &advice, &player, &state, args.horizon);
    ok(SimulatePayload {
        player: player.to_string(),
        state: state.to_string(),
        trials: report.trials,
        horizon: report.horizon,
        seed: report.seed,
        hits: report.hits,
        estimate: val(&report.estimate),
        std_error_bound: report.std_error_bound,
        truncation_bound: val(&trunc),
    })
}
