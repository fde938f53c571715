//! Independent reference implementations: exhaustive policy enumeration,
//! seeded Monte-Carlo simulation, and a random instance generator.
//!
//! Nothing here shares solver machinery beyond single-policy evaluation, so
//! agreement between these oracles and the analytic paths is meaningful
//! evidence. Enumeration is capped (the space is exponential); simulation
//! uses exact integer threshold sampling so the only approximation is
//! statistical, and each trial derives its own generator stream from the
//! seed, making reports bit-reproducible and schedule-independent.

use std::collections::BTreeMap;

use num::bigint::{BigInt, BigUint};
use num_bigint::RandBigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::analysis::{absorption_values, hitting_all, relevant_states};
use crate::model::{
    ActionId, AdviceRow, ControllerAdvice, Game, GameData, JointAction, PlayerId, StateId,
};
use crate::product::{build_chain, build_mdp, DeviationMdp, ProductState};
use crate::rational::Rational;
use crate::solver::{policy_value, policy_value_all, Policy};
use crate::verify::{DeviationWitness, Verdict, WitnessKind};

/// Default bound on exhaustive policy enumeration.
pub const DEFAULT_POLICY_CAP: u64 = 1 << 16;

/// Failures of the brute-force paths.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("policy enumeration needs {policies} policies, exceeding the cap of {cap}")]
    PolicyCapExceeded { policies: u128, cap: u64 },
}

/// Advised-state choice lists of an MDP, with the total policy count.
fn policy_space(mdp: &DeviationMdp) -> (Vec<usize>, Vec<Vec<ActionId>>, u128) {
    let advised: Vec<usize> = (0..mdp.len()).filter(|&s| mdp.is_advised(s)).collect();
    let choices: Vec<Vec<ActionId>> = advised
        .iter()
        .map(|&s| mdp.actions(s).iter().map(|(a, _)| a.clone()).collect())
        .collect();
    let mut count: u128 = 1;
    for c in &choices {
        count = count.saturating_mul(c.len() as u128);
    }
    (advised, choices, count)
}

/// The `k`-th policy in mixed-radix order: earlier advised states are more
/// significant digits, actions count in their listed order.
fn nth_policy(
    mdp: &DeviationMdp,
    advised: &[usize],
    choices: &[Vec<ActionId>],
    k: u128,
) -> Policy {
    let mut digits = k;
    let mut policy = Policy::new();
    for (slot, &s) in advised.iter().enumerate().rev() {
        let base = choices[slot].len() as u128;
        let digit = (digits % base) as usize;
        digits /= base;
        policy.set(mdp.states()[s].clone(), choices[slot][digit].clone());
    }
    policy
}

/// Exact maximum over every deterministic memoryless policy, by evaluating
/// each one. Returns the optimal value at `anchor` and the first policy (in
/// enumeration order) attaining it.
pub fn enumerate_policies(
    mdp: &DeviationMdp,
    anchor: &ProductState,
    cap: u64,
) -> Result<(Rational, Policy), OracleError> {
    let (advised, choices, count) = policy_space(mdp);
    if count > cap as u128 {
        return Err(OracleError::PolicyCapExceeded {
            policies: count,
            cap,
        });
    }
    let mut best: Option<(Rational, Policy)> = None;
    for k in 0..count {
        let policy = nth_policy(mdp, &advised, &choices, k);
        let value = policy_value(mdp, &policy, anchor)
            .expect("enumerated policies are total and legal")
            .get(anchor)
            .expect("anchor is a state of the MDP")
            .clone();
        match &best {
            Some((incumbent, _)) if *incumbent >= value => {}
            _ => best = Some((value, policy)),
        }
    }
    Ok(best.expect("the policy space is never empty"))
}

/// Brute-force correlated-equilibrium check: for each player, the maximum
/// over every deviation policy of the value at the initial state, compared
/// against the follow value. Returns whether the advice survives.
pub fn brute_force_ce(
    game: &Game,
    advice: &ControllerAdvice,
    cap: u64,
) -> Result<bool, OracleError> {
    let start = ProductState::Plain(game.initial().clone());
    for (pi, player) in game.players().iter().enumerate() {
        if game.is_goal(pi, game.initial()) {
            continue;
        }
        let chain = build_chain(game, advice, player).expect("validated inputs");
        let mdp = build_mdp(game, advice, player).expect("validated inputs");
        let follow = hitting_all(&chain);
        let (best, _) = enumerate_policies(&mdp, &start, cap)?;
        let v_d = follow.get(&start).expect("initial state is materialized");
        assert!(&best >= v_d, "enumeration fell below the follow policy");
        if &best > v_d {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First profitable single-switch deviation in scan order (players in
/// input order, states in input order, recommendations then alternatives
/// in action order), established by fully re-solving the switched chain.
fn one_switch_witness(game: &Game, advice: &ControllerAdvice) -> Option<DeviationWitness> {
    for (pi, player) in game.players().iter().enumerate() {
        let relevant = relevant_states(game, player);
        if relevant.is_empty() {
            continue;
        }
        let chain = build_chain(game, advice, player).expect("validated inputs");
        let mdp = build_mdp(game, advice, player).expect("validated inputs");
        assert_eq!(chain.states(), mdp.states());
        let follow = hitting_all(&chain);
        let base_rows: Vec<Vec<(usize, Rational)>> =
            (0..chain.len()).map(|s| chain.row(s).to_vec()).collect();
        for q in &relevant {
            for a in game.availability(q, pi) {
                let state = ProductState::Advised(q.clone(), a.clone());
                let Some(s) = mdp.index_of(&state) else {
                    continue;
                };
                for alternative in game.availability(q, pi) {
                    let mut rows = base_rows.clone();
                    rows[s] = mdp
                        .action_row(s, alternative)
                        .expect("available action")
                        .to_vec();
                    let switched = absorption_values(&rows, chain.goal_flags(), None);
                    let following = follow.get(&state).expect("shared layout");
                    if &switched[s] > following {
                        return Some(DeviationWitness {
                            player: player.clone(),
                            state: q.clone(),
                            recommended: a.clone(),
                            alternative: alternative.clone(),
                            value_following: following.clone(),
                            value_deviating: switched[s].clone(),
                            kind: WitnessKind::OneStep,
                        });
                    }
                }
            }
        }
    }
    None
}

/// Brute-force subgame-perfection check straight from the definition: for
/// every player and every relevant anchor state, the follow value must
/// match the enumerated optimum of the deviation MDP at that anchor. A
/// failing instance also yields a single-switch witness; the two detection
/// paths are asserted to agree.
pub fn brute_force_spce(
    game: &Game,
    advice: &ControllerAdvice,
    cap: u64,
) -> Result<Verdict, OracleError> {
    let mut any_gap = false;
    'players: for (pi, player) in game.players().iter().enumerate() {
        let _ = pi;
        let relevant = relevant_states(game, player);
        if relevant.is_empty() {
            continue;
        }
        let chain = build_chain(game, advice, player).expect("validated inputs");
        let mdp = build_mdp(game, advice, player).expect("validated inputs");
        assert_eq!(chain.states(), mdp.states());
        let follow = hitting_all(&chain);

        // Evaluate every policy once, un-anchored, and read off all anchors.
        let (advised, choices, count) = policy_space(&mdp);
        if count > cap as u128 {
            return Err(OracleError::PolicyCapExceeded {
                policies: count,
                cap,
            });
        }
        let mut best: Vec<Rational> = follow.values().to_vec();
        for k in 0..count {
            let policy = nth_policy(&mdp, &advised, &choices, k);
            let value =
                policy_value_all(&mdp, &policy).expect("enumerated policies are total and legal");
            for s in 0..mdp.len() {
                if value.at(s) > &best[s] {
                    best[s] = value.at(s).clone();
                }
            }
        }
        for q in &relevant {
            let s = mdp
                .index_of(&ProductState::Plain(q.clone()))
                .expect("plain states are materialized");
            if best[s] > *follow.at(s) {
                any_gap = true;
                break 'players;
            }
        }
    }

    let witness = one_switch_witness(game, advice);
    assert_eq!(
        any_gap,
        witness.is_some(),
        "anchor-gap and single-switch detection disagree"
    );
    Ok(match witness {
        None => Verdict {
            holds: true,
            witness: None,
        },
        Some(w) => Verdict {
            holds: false,
            witness: Some(w),
        },
    })
}

// ---- Monte-Carlo simulation --------------------------------------------------

/// Outcome of a seeded simulation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub trials: u64,
    pub hits: u64,
    pub estimate: Rational,
    /// sqrt(p̂(1−p̂)/trials), the plug-in binomial standard error.
    pub std_error_bound: f64,
    pub seed: u64,
    pub horizon: u32,
}

/// Integer threshold sampler over a list of exact rational weights: scales
/// every weight by the common denominator and draws a uniform integer below
/// the total, so sampling is exact.
struct IntSampler {
    cumulative: Vec<BigUint>,
    total: BigUint,
}

impl IntSampler {
    fn new(weights: &[Rational]) -> IntSampler {
        let mut lcm = BigInt::from(1);
        for w in weights {
            lcm = num::Integer::lcm(&lcm, w.denominator());
        }
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = BigInt::from(0);
        for w in weights {
            acc += w.numerator() * (&lcm / w.denominator());
            cumulative.push(acc.to_biguint().expect("nonnegative cumulative weight"));
        }
        let total = cumulative.last().expect("nonempty weight list").clone();
        IntSampler { cumulative, total }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        let u = rng.gen_biguint_below(&self.total);
        self.cumulative
            .iter()
            .position(|c| &u < c)
            .expect("u is below the total")
    }
}

/// Samples `trials` advice-following traces of at most `horizon` game steps
/// from `start` and counts how many visit the player's goal set. Trial `t`
/// uses stream `t` of a deterministic generator seeded with `seed`, so the
/// report is reproducible and independent of execution order.
pub fn simulate(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
    start: &StateId,
    trials: u64,
    horizon: u32,
    seed: u64,
) -> SimulationReport {
    assert!(trials >= 1 && horizon >= 1);
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    assert!(game.state_position(start).is_some(), "unknown state {start}");

    // Per-state advice samplers and per-(state, advice-row) successor samplers.
    let mut advice_samplers: BTreeMap<&StateId, IntSampler> = BTreeMap::new();
    let mut succ_samplers: BTreeMap<(&StateId, usize), (Vec<&StateId>, IntSampler)> =
        BTreeMap::new();
    for q in game.states() {
        let rows = advice.table(q);
        let weights: Vec<Rational> = rows.iter().map(|r| r.prob.clone()).collect();
        advice_samplers.insert(q, IntSampler::new(&weights));
        for (k, row) in rows.iter().enumerate() {
            let support = game.transition(q, &row.action).expect("validated advice");
            let succs: Vec<&StateId> = support.iter().map(|(s, _)| s).collect();
            let weights: Vec<Rational> = support.iter().map(|(_, p)| p.clone()).collect();
            succ_samplers.insert((q, k), (succs, IntSampler::new(&weights)));
        }
    }

    let mut hits = 0u64;
    for t in 0..trials {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(t);
        let mut q = start;
        let mut hit = game.is_goal(pi, q);
        for _ in 0..horizon {
            if hit {
                break;
            }
            let row = advice_samplers[q].sample(&mut rng);
            let (succs, sampler) = &succ_samplers[&(q, row)];
            q = succs[sampler.sample(&mut rng)];
            hit = game.is_goal(pi, q);
        }
        if hit {
            hits += 1;
        }
    }

    let estimate = Rational::from_big(BigInt::from(hits), BigInt::from(trials))
        .expect("trials is positive");
    let p = estimate.to_f64();
    SimulationReport {
        trials,
        hits,
        estimate,
        std_error_bound: (p * (1.0 - p) / trials as f64).sqrt(),
        seed,
        horizon,
    }
}

/// Exact probability that the advice chain started at `start` is, after
/// `horizon` game steps, in a state that has not yet visited the player's
/// goal set but still could: the sound truncation error bound for
/// [`simulate`], since every trace that first hits after the horizon must
/// be in such a state at the horizon. Zero when `start` is a goal state or
/// the goal is unreachable from `start` under the advice.
pub fn truncation_bound(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
    start: &StateId,
    horizon: u32,
) -> Rational {
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    if game.is_goal(pi, start) {
        return Rational::zero();
    }
    // Backward reachability to the goal set along advice-chain edges:
    // states outside it can never produce a late hit, so their mass is
    // dropped from the survival system.
    let n = game.states().len();
    let state_index: BTreeMap<&StateId, usize> = game
        .states()
        .iter()
        .enumerate()
        .map(|(k, q)| (q, k))
        .collect();
    let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, q) in game.states().iter().enumerate() {
        for advice_row in advice.table(q) {
            for (succ, _) in game.transition(q, &advice_row.action).expect("validated") {
                predecessors[state_index[succ]].push(k);
            }
        }
    }
    let mut can_reach_goal = vec![false; n];
    let mut queue: Vec<usize> = (0..n)
        .filter(|&k| game.is_goal(pi, &game.states()[k]))
        .collect();
    for &k in &queue {
        can_reach_goal[k] = true;
    }
    while let Some(k) = queue.pop() {
        for &p in &predecessors[k] {
            if !can_reach_goal[p] {
                can_reach_goal[p] = true;
                queue.push(p);
            }
        }
    }
    if !can_reach_goal[state_index[start]] {
        return Rational::zero();
    }
    // One game step of the advice chain, restricted to non-goal states
    // from which the goal is still reachable.
    let survivors: Vec<&StateId> = game
        .states()
        .iter()
        .filter(|q| !game.is_goal(pi, q) && can_reach_goal[state_index[*q]])
        .collect();
    let position: BTreeMap<&StateId, usize> =
        survivors.iter().enumerate().map(|(k, q)| (*q, k)).collect();
    let mut rows: Vec<Vec<(usize, Rational)>> = Vec::with_capacity(survivors.len());
    for q in &survivors {
        let mut row: BTreeMap<usize, Rational> = BTreeMap::new();
        for advice_row in advice.table(q) {
            for (succ, p) in game.transition(q, &advice_row.action).expect("validated") {
                if let Some(&j) = position.get(succ) {
                    let term = &advice_row.prob * p;
                    let acc = row.entry(j).or_insert_with(Rational::zero);
                    *acc = acc.clone() + term;
                }
            }
        }
        rows.push(row.into_iter().collect());
    }
    let mut u = vec![Rational::one(); survivors.len()];
    for _ in 0..horizon {
        u = rows
            .iter()
            .map(|row| row.iter().map(|(j, p)| p * &u[*j]).sum())
            .collect();
    }
    u[position[start]].clone()
}

// ---- Random instance generation ------------------------------------------------

/// Shape parameters for random test instances.
#[derive(Debug, Clone)]
pub struct RandomModelConfig {
    pub max_states: usize,
    pub players: usize,
    pub max_actions: usize,
    /// All probabilities are multiples of 1/denominator.
    pub denominator: u32,
}

impl Default for RandomModelConfig {
    fn default() -> Self {
        RandomModelConfig {
            max_states: 4,
            players: 2,
            max_actions: 2,
            denominator: 8,
        }
    }
}

/// Draws a random distribution over `n` buckets with all probabilities
/// multiples of 1/den, by dropping `den` unit masses uniformly.
fn random_distribution<R: Rng>(rng: &mut R, n: usize, den: u32) -> Vec<Rational> {
    let mut counts = vec![0i64; n];
    for _ in 0..den {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
        .into_iter()
        .map(|c| Rational::ratio(c, den as i64))
        .collect()
}

/// Generates a valid random game and advice pair. Goal sets are sampled
/// per state (and may be empty or contain the initial state); availability
/// is a random non-empty action subset per state and player; every
/// probability has denominator dividing `denominator`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    config: &RandomModelConfig,
) -> (Game, ControllerAdvice) {
    let n = rng.gen_range(1..=config.max_states);
    let states: Vec<StateId> = (0..n).map(|k| StateId::new(format!("q{k}"))).collect();
    let players: Vec<PlayerId> = (0..config.players)
        .map(|k| PlayerId::new(format!("p{}", k + 1)))
        .collect();
    let actions: Vec<ActionId> = (0..config.max_actions)
        .map(|k| ActionId::new(format!("a{k}")))
        .collect();

    let mut availability = BTreeMap::new();
    for q in &states {
        for p in &players {
            let size = rng.gen_range(1..=config.max_actions);
            let mut picks: Vec<usize> = (0..config.max_actions).collect();
            for k in 0..size {
                let j = rng.gen_range(k..config.max_actions);
                picks.swap(k, j);
            }
            let mut chosen: Vec<usize> = picks[..size].to_vec();
            chosen.sort_unstable();
            availability.insert(
                (q.clone(), p.clone()),
                chosen.into_iter().map(|k| actions[k].clone()).collect::<Vec<_>>(),
            );
        }
    }

    // Enumerate the availability-respecting joint actions of a state.
    let joints = |availability: &BTreeMap<(StateId, PlayerId), Vec<ActionId>>, q: &StateId| {
        let lists: Vec<&Vec<ActionId>> = players
            .iter()
            .map(|p| &availability[&(q.clone(), p.clone())])
            .collect();
        let mut out: Vec<JointAction> = vec![JointAction::new(Vec::new())];
        for list in lists {
            let mut next = Vec::new();
            for prefix in &out {
                for a in list {
                    let mut v = prefix.components().to_vec();
                    v.push(a.clone());
                    next.push(JointAction::new(v));
                }
            }
            out = next;
        }
        out
    };

    let mut transitions = Vec::new();
    for q in &states {
        for action in joints(&availability, q) {
            let dist = random_distribution(rng, n, config.denominator);
            let row: Vec<(StateId, Rational)> = states
                .iter()
                .zip(dist)
                .filter(|(_, p)| p.is_positive())
                .map(|(s, p)| (s.clone(), p))
                .collect();
            transitions.push((q.clone(), action, row));
        }
    }

    let mut goals = BTreeMap::new();
    for p in &players {
        let set: std::collections::BTreeSet<StateId> = states
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .cloned()
            .collect();
        goals.insert(p.clone(), set);
    }

    let game = Game::from_data(GameData {
        states: states.clone(),
        initial: states[0].clone(),
        players: players.clone(),
        actions,
        availability: availability.clone(),
        transitions,
        goals,
    })
    .expect("generated game is valid");

    let mut tables = BTreeMap::new();
    for q in &states {
        let joint_list = joints(&availability, q);
        let dist = random_distribution(rng, joint_list.len(), config.denominator);
        let rows: Vec<AdviceRow> = joint_list
            .into_iter()
            .zip(dist)
            .filter(|(_, p)| p.is_positive())
            .map(|(action, prob)| AdviceRow { action, prob })
            .collect();
        tables.insert(q.clone(), rows);
    }
    let advice = ControllerAdvice::from_tables(tables, &game).expect("generated advice is valid");
    (game, advice)
}
