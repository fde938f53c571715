//! Equilibrium verification: the correlated-equilibrium check and the
//! subgame-perfect one-step-deviation check, with explicit witnesses.
//!
//! Correlated equilibrium quantifies over arbitrary deviation strategies
//! from the initial state, so it is decided by solving each player's
//! deviation MDP outright and comparing the optimum against the
//! follow-the-advice value; a profitable deviation may require several
//! coordinated local changes, so no one-step shortcut is sound here.
//! Subgame perfection, in contrast, is characterized by one-step
//! deviations: the advice fails iff some player, at some relevant state,
//! is recommended an action whose one-step lookahead against the true
//! follow-the-advice values can be strictly beaten by another available
//! action.
//!
//! The one-step comparison uses the un-anchored hitting vector. Anchoring
//! the boundary classification at the inspected state would zero out
//! continuation states the advice chain cannot reach from there, silently
//! hiding deviations whose profit flows through exactly those states.
//!
//! Every emitted witness carries the exact values on both sides of the
//! strict inequality, and one-step witnesses are re-validated by re-solving
//! the one-step-modified chain before being returned.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    absorption_values, forward_reachable, hitting_all, relevant_states, HittingVector,
};
use crate::model::{ActionId, ControllerAdvice, Game, PlayerId, StateId};
use crate::product::{build_chain, build_mdp, DeviationMdp, ProductChain, ProductState};
use crate::rational::Rational;
use crate::solver::{induced_rows, q_value, solve_mdp};

/// Which check produced a witness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WitnessKind {
    /// Profitable deviation strategy from the initial state (correlated
    /// equilibrium violated).
    #[serde(rename = "initial-state")]
    InitialState,
    /// Profitable one-step deviation at a relevant state (subgame-perfect
    /// correlated equilibrium violated).
    #[serde(rename = "one-step")]
    OneStep,
}

/// A concrete profitable deviation: at `state`, the player recommended
/// `recommended` gains by playing `alternative` instead.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviationWitness {
    pub player: PlayerId,
    pub state: StateId,
    pub recommended: ActionId,
    pub alternative: ActionId,
    pub value_following: Rational,
    pub value_deviating: Rational,
    pub kind: WitnessKind,
}

/// Outcome of one verification: `holds` is false exactly when a witness is
/// present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub holds: bool,
    pub witness: Option<DeviationWitness>,
}

impl Verdict {
    fn holds() -> Verdict {
        Verdict {
            holds: true,
            witness: None,
        }
    }

    fn violated(witness: DeviationWitness) -> Verdict {
        assert!(
            witness.value_deviating > witness.value_following,
            "witness inequality must be strict"
        );
        Verdict {
            holds: false,
            witness: Some(witness),
        }
    }
}

/// Both verdicts with their wall-clock solve times.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub ce: Verdict,
    pub spce: Verdict,
    pub ce_time: Duration,
    pub spce_time: Duration,
}

fn chain_and_mdp(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
) -> (ProductChain, DeviationMdp) {
    let chain = build_chain(game, advice, player).expect("validated inputs");
    let mdp = build_mdp(game, advice, player).expect("validated inputs");
    // The two constructions share one state layout; everything below
    // exchanges indices between them.
    assert_eq!(chain.states(), mdp.states());
    (chain, mdp)
}

/// Decides whether the advice is a correlated equilibrium: no player can
/// increase their payoff from the initial state by any deviation strategy,
/// deterministic and memoryless ones being sufficient.
pub fn verify_ce(game: &Game, advice: &ControllerAdvice) -> Verdict {
    for player in game.players() {
        if let Some(witness) = verify_ce_player(game, advice, player) {
            return Verdict::violated(witness);
        }
    }
    Verdict::holds()
}

/// One player's initial-state deviation check: the witness if this player
/// can improve on following the advice, `None` otherwise. Players are
/// independent, so callers may fan these checks out to worker threads and
/// still report the first witness in player order.
pub fn verify_ce_player(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
) -> Option<DeviationWitness> {
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    // A player whose goal contains the initial state is already paid in
    // full; no deviation can improve on 1.
    if game.is_goal(pi, game.initial()) {
        return None;
    }
    let start = ProductState::Plain(game.initial().clone());
    let (chain, mdp) = chain_and_mdp(game, advice, player);
    let follow = hitting_all(&chain);
    let v_d = follow.get(&start).expect("initial state is materialized");
    let solution = solve_mdp(&mdp, &start);
    let v_star = solution
        .values
        .get(&start)
        .expect("initial state is materialized");
    assert!(
        v_star >= v_d,
        "optimal deviation value fell below the follow value"
    );
    if v_star > v_d {
        return Some(ce_witness(&mdp, &follow, &solution.policy, player));
    }
    None
}

/// Localizes a correlated-equilibrium violation: the first advised state
/// reachable under the optimal deviation policy where some alternative's
/// one-step lookahead against the follow values strictly beats them.
/// Existence: if no reachable advised state had one, the follow values
/// would dominate the optimal policy's value at the initial state.
fn ce_witness(
    mdp: &DeviationMdp,
    follow: &HittingVector,
    optimal: &crate::solver::Policy,
    player: &PlayerId,
) -> DeviationWitness {
    let rows = induced_rows(mdp, optimal).expect("optimal policy is total and legal");
    let reachable = forward_reachable(&rows, mdp.initial_index());
    for s in 0..mdp.len() {
        if !reachable[s] || !mdp.is_advised(s) {
            continue;
        }
        let state = &mdp.states()[s];
        let following = follow.get(state).expect("shared layout").clone();
        for (alternative, _) in mdp.actions(s) {
            let deviating = q_value(mdp, follow, state, alternative).expect("legal action");
            if deviating > following {
                let ProductState::Advised(q, recommended) = state else {
                    unreachable!("advised index holds an advised state")
                };
                return DeviationWitness {
                    player: player.clone(),
                    state: q.clone(),
                    recommended: recommended.clone(),
                    alternative: alternative.clone(),
                    value_following: following,
                    value_deviating: deviating,
                    kind: WitnessKind::InitialState,
                };
            }
        }
    }
    unreachable!("a strict optimality gap must expose a reachable one-step improvement")
}

/// Decides whether the advice is a subgame-perfect correlated equilibrium
/// via the one-step deviation principle: for every player, every relevant
/// state q, every recommendation a with positive marginal, and every
/// available alternative a*, the lookahead value of a* at ⟨q,a⟩ must not
/// strictly exceed the follow value there.
pub fn verify_spce(game: &Game, advice: &ControllerAdvice) -> Verdict {
    for player in game.players() {
        if let Some(witness) = verify_spce_player(game, advice, player) {
            return Verdict::violated(witness);
        }
    }
    Verdict::holds()
}

/// One player's one-step deviation scan over their relevant states: the
/// first witness in scan order, `None` when the player never profits.
/// Players are independent, so callers may fan these checks out to worker
/// threads and still report the first witness in player order.
pub fn verify_spce_player(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
) -> Option<DeviationWitness> {
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    let relevant = relevant_states(game, player);
    if relevant.is_empty() {
        return None;
    }
    let (chain, mdp) = chain_and_mdp(game, advice, player);
    let follow = hitting_all(&chain);
    for q in &relevant {
        for a in game.availability(q, pi) {
            let state = ProductState::Advised(q.clone(), a.clone());
            // Recommendations with zero marginal are never given and
            // are not materialized.
            let Some(s) = mdp.index_of(&state) else {
                continue;
            };
            let following = follow.get(&state).expect("shared layout").clone();
            for alternative in game.availability(q, pi) {
                let deviating = q_value(&mdp, &follow, &state, alternative).expect("legal action");
                if deviating > following {
                    assert_one_step_switch_improves(&chain, &mdp, s, alternative, &following);
                    return Some(DeviationWitness {
                        player: player.clone(),
                        state: q.clone(),
                        recommended: a.clone(),
                        alternative: alternative.clone(),
                        value_following: following,
                        value_deviating: deviating,
                        kind: WitnessKind::OneStep,
                    });
                }
            }
        }
    }
    None
}

/// Cross-check guarding every one-step witness: replacing the single row at
/// the advised state with the deviation's row and re-solving the whole
/// chain must strictly improve the value at that state.
fn assert_one_step_switch_improves(
    chain: &ProductChain,
    mdp: &DeviationMdp,
    s: usize,
    alternative: &ActionId,
    following: &Rational,
) {
    let mut rows: Vec<Vec<(usize, Rational)>> =
        (0..chain.len()).map(|t| chain.row(t).to_vec()).collect();
    rows[s] = mdp
        .action_row(s, alternative)
        .expect("legal action")
        .to_vec();
    let switched = absorption_values(&rows, chain.goal_flags(), None);
    assert!(
        &switched[s] > following,
        "one-step witness failed its re-solve cross-check at {}",
        chain.states()[s]
    );
}

/// Runs both verifications and reports the verdicts with timings.
pub fn verify_all(game: &Game, advice: &ControllerAdvice) -> VerificationReport {
    let t0 = Instant::now();
    let ce = verify_ce(game, advice);
    let ce_time = t0.elapsed();
    let t1 = Instant::now();
    let spce = verify_spce(game, advice);
    let spce_time = t1.elapsed();
    VerificationReport {
        ce,
        spce,
        ce_time,
        spce_time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_advice, parse_game};
    use crate::product::marginal;

    fn r(s: &str) -> Rational {
        s.parse().unwrap()
    }

    fn fixture(game: &str, advice: &str) -> (Game, ControllerAdvice) {
        let g = parse_game(game).unwrap();
        let d = parse_advice(advice, &g).unwrap();
        (g, d)
    }

    fn check_witness_invariants(game: &Game, verdict: &Verdict) {
        assert_eq!(verdict.holds, verdict.witness.is_none());
        let Some(w) = &verdict.witness else { return };
        assert!(w.value_deviating > w.value_following);
        let pi = game.player_position(&w.player).unwrap();
        assert!(game.availability(&w.state, pi).contains(&w.alternative));
        if w.kind == WitnessKind::OneStep {
            assert!(relevant_states(game, &w.player).contains(&w.state));
        }
    }

    #[test]
    fn chicken_uniform_advice_is_a_correlated_equilibrium() {
        let (g, d) = fixture(
            include_str!("../../../docs/fixtures/chicken.game.json"),
            include_str!("../../../docs/fixtures/chicken.advice.json"),
        );
        let verdict = verify_ce(&g, &d);
        assert!(verdict.holds);
        assert!(verdict.witness.is_none());
    }

    #[test]
    fn chicken_mutual_defection_advice_fails_with_the_cooperate_witness() {
        let (g, d) = fixture(
            include_str!("../../../docs/fixtures/chicken.game.json"),
            include_str!("../../../docs/fixtures/chicken-dirac-dd.advice.json"),
        );
        let verdict = verify_ce(&g, &d);
        assert!(!verdict.holds);
        let w = verdict.witness.clone().unwrap();
        assert_eq!(w.player, "row".into());
        assert_eq!(w.state, "q0".into());
        assert_eq!(w.recommended, "D".into());
        assert_eq!(w.alternative, "C".into());
        assert!(w.value_following.is_zero());
        assert_eq!(w.value_deviating, r("2/7"));
        assert_eq!(w.kind, WitnessKind::InitialState);
        check_witness_invariants(&g, &verdict);
    }

    #[test]
    fn market_entry_exit_fight_is_ce_but_not_subgame_perfect() {
        let (g, d) = fixture(
            include_str!("../../../docs/fixtures/market-entry.game.json"),
            include_str!("../../../docs/fixtures/market-entry-exit-fight.advice.json"),
        );
        let report = verify_all(&g, &d);
        assert!(report.ce.holds);
        assert!(!report.spce.holds);
        let w = report.spce.witness.clone().unwrap();
        assert_eq!(w.player, "p2".into());
        assert_eq!(w.state, "p2state".into());
        assert_eq!(w.recommended, "fight".into());
        assert_eq!(w.alternative, "pass".into());
        assert!(w.value_following.is_zero());
        assert_eq!(w.value_deviating, r("2/5"));
        assert_eq!(w.kind, WitnessKind::OneStep);
        check_witness_invariants(&g, &report.spce);
        // The recommendation the witness deviates from is actually given.
        let m = marginal(&g, &d, &w.state, &w.player, &w.recommended).unwrap();
        assert!(m.is_positive());
    }

    #[test]
    fn market_entry_enter_pass_is_subgame_perfect() {
        let (g, d) = fixture(
            include_str!("../../../docs/fixtures/market-entry.game.json"),
            include_str!("../../../docs/fixtures/market-entry-enter-pass.advice.json"),
        );
        let report = verify_all(&g, &d);
        assert!(report.ce.holds);
        assert!(report.spce.holds);
    }

    #[test]
    fn discontinuity_verdicts_follow_the_b_probability() {
        let game = include_str!("../../../docs/fixtures/discontinuity.game.json");
        let (g, d) = fixture(
            game,
            include_str!("../../../docs/fixtures/discontinuity-half.advice.json"),
        );
        let report = verify_all(&g, &d);
        assert!(report.ce.holds && report.spce.holds);

        let (g, d) = fixture(
            game,
            include_str!("../../../docs/fixtures/discontinuity-zero.advice.json"),
        );
        let ce = verify_ce(&g, &d);
        assert!(!ce.holds);
        let w = ce.witness.clone().unwrap();
        assert_eq!((w.recommended.as_str(), w.alternative.as_str()), ("a", "b"));
        assert!(w.value_following.is_zero());
        assert!(w.value_deviating.is_one());
        check_witness_invariants(&g, &ce);

        let spce = verify_spce(&g, &d);
        assert!(!spce.holds);
        let w = spce.witness.clone().unwrap();
        assert_eq!((w.recommended.as_str(), w.alternative.as_str()), ("a", "b"));
        assert_eq!(w.kind, WitnessKind::OneStep);
        check_witness_invariants(&g, &spce);
    }

    #[test]
    fn single_action_games_always_hold() {
        let (g, d) = fixture(
            r#"{
                "states": ["q"],
                "initial": "q",
                "players": ["p"],
                "actions": ["a"],
                "availability": {"q": {"p": ["a"]}},
                "transitions": [{"from": "q", "action": ["a"], "to": {"q": "1"}}],
                "goals": {"p": []}
            }"#,
            r#"{"q": [{"action": ["a"], "prob": "1"}]}"#,
        );
        let report = verify_all(&g, &d);
        assert!(report.ce.holds && report.spce.holds);
    }

    #[test]
    fn initial_goal_states_are_skipped() {
        // The player's goal contains the initial state: payoff is pinned at
        // 1 and both checks hold vacuously, whatever the advice does.
        let (g, d) = fixture(
            r#"{
                "states": ["q", "sink"],
                "initial": "q",
                "players": ["p"],
                "actions": ["a", "b"],
                "availability": {"q": {"p": ["a", "b"]}, "sink": {"p": ["a"]}},
                "transitions": [
                    {"from": "q", "action": ["a"], "to": {"sink": "1"}},
                    {"from": "q", "action": ["b"], "to": {"q": "1"}},
                    {"from": "sink", "action": ["a"], "to": {"sink": "1"}}
                ],
                "goals": {"p": ["q"]}
            }"#,
            r#"{
                "q": [{"action": ["a"], "prob": "1"}],
                "sink": [{"action": ["a"], "prob": "1"}]
            }"#,
        );
        let report = verify_all(&g, &d);
        assert!(report.ce.holds && report.spce.holds);
    }

    #[test]
    fn goal_padding_with_unreachable_states_never_flips_verdicts() {
        // "limbo" is disconnected from the playable part; adding it to the
        // goal set must not change either verdict.
        let base = r#"{
            "states": ["q0", "q1", "limbo"],
            "initial": "q0",
            "players": ["agent"],
            "actions": ["a", "b", "stay"],
            "availability": {
                "q0": {"agent": ["a", "b"]},
                "q1": {"agent": ["stay"]},
                "limbo": {"agent": ["stay"]}
            },
            "transitions": [
                {"from": "q0", "action": ["a"], "to": {"q0": "1"}},
                {"from": "q0", "action": ["b"], "to": {"q1": "1"}},
                {"from": "q1", "action": ["stay"], "to": {"q1": "1"}},
                {"from": "limbo", "action": ["stay"], "to": {"limbo": "1"}}
            ],
            "goals": {"agent": ["q1"]}
        }"#;
        let padded = base.replace(r#""agent": ["q1"]"#, r#""agent": ["q1", "limbo"]"#);
        for advice in [
            r#"{
                "q0": [{"action": ["a"], "prob": "1"}],
                "q1": [{"action": ["stay"], "prob": "1"}],
                "limbo": [{"action": ["stay"], "prob": "1"}]
            }"#,
            r#"{
                "q0": [{"action": ["a"], "prob": "1/2"}, {"action": ["b"], "prob": "1/2"}],
                "q1": [{"action": ["stay"], "prob": "1"}],
                "limbo": [{"action": ["stay"], "prob": "1"}]
            }"#,
        ] {
            let (g0, d0) = fixture(base, advice);
            let (g1, d1) = fixture(&padded, advice);
            let r0 = verify_all(&g0, &d0);
            let r1 = verify_all(&g1, &d1);
            assert_eq!(r0.ce.holds, r1.ce.holds);
            assert_eq!(r0.spce.holds, r1.spce.holds);
        }
    }

    #[test]
    fn subgame_perfection_implies_correlated_equilibrium_on_fixtures() {
        let cases: [(&str, &str); 5] = [
            (
                include_str!("../../../docs/fixtures/chicken.game.json"),
                include_str!("../../../docs/fixtures/chicken.advice.json"),
            ),
            (
                include_str!("../../../docs/fixtures/chicken.game.json"),
                include_str!("../../../docs/fixtures/chicken-dirac-dd.advice.json"),
            ),
            (
                include_str!("../../../docs/fixtures/market-entry.game.json"),
                include_str!("../../../docs/fixtures/market-entry-exit-fight.advice.json"),
            ),
            (
                include_str!("../../../docs/fixtures/market-entry.game.json"),
                include_str!("../../../docs/fixtures/market-entry-enter-pass.advice.json"),
            ),
            (
                include_str!("../../../docs/fixtures/discontinuity.game.json"),
                include_str!("../../../docs/fixtures/discontinuity-zero.advice.json"),
            ),
        ];
        for (game, advice) in cases {
            let (g, d) = fixture(game, advice);
            let report = verify_all(&g, &d);
            if report.spce.holds {
                assert!(report.ce.holds);
            }
            check_witness_invariants(&g, &report.ce);
            check_witness_invariants(&g, &report.spce);
        }
    }
}
