//! Domain types for games and controller advice, plus parsing, validation,
//! and serialization of the external document formats.
//!
//! A `Game` is the tuple ⟨Q, q_init, Π, A, 𝒜, δ, (R_i)⟩: states, an initial
//! state, players, actions, a per-state per-player availability map, exact
//! rational probabilistic transitions, and per-player reachability goals.
//! `ControllerAdvice` maps every state to a distribution over joint actions.
//! Both are immutable after construction and validated on entry; downstream
//! modules may assume every invariant here without re-checking.
//!
//! Document formats are JSON; the full grammar with examples lives in
//! `docs/formats.md`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rational::Rational;

// ---- Identifiers ----------------------------------------------------------

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_string())
            }
        }
    };
}

id_type!(
    /// Name of a game state (an element of Q).
    StateId
);
id_type!(
    /// Name of a player (an element of Π).
    PlayerId
);
id_type!(
    /// Name of an action (an element of A).
    ActionId
);

// ---- Joint actions --------------------------------------------------------

/// One action per player, indexed by the game's player order. `d.get(i)`
/// reads player i's component; `d.with_component(i, a)` is the tuple with
/// player i's component replaced.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAction(pub Vec<ActionId>);

impl JointAction {
    pub fn new(components: Vec<ActionId>) -> Self {
        JointAction(components)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, player: usize) -> &ActionId {
        &self.0[player]
    }

    pub fn components(&self) -> &[ActionId] {
        &self.0
    }

    pub fn with_component(&self, player: usize, action: ActionId) -> JointAction {
        let mut v = self.0.clone();
        v[player] = action;
        JointAction(v)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

// ---- Errors ---------------------------------------------------------------

/// Validation and parse failures for games and advice. Every variant names
/// the offending construct.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },
    #[error("{kind} list is empty")]
    EmptyList { kind: &'static str },
    #[error("initial state {0:?} is not a declared state")]
    UnknownInitial(String),
    #[error("unknown state {state:?} in {context}")]
    UnknownState { state: String, context: String },
    #[error("unknown player {player:?} in {context}")]
    UnknownPlayer { player: String, context: String },
    #[error("unknown action {action:?} in {context}")]
    UnknownAction { action: String, context: String },
    #[error("availability missing for state {state:?}, player {player:?}")]
    MissingAvailability { state: String, player: String },
    #[error("availability for state {state:?}, player {player:?} is empty")]
    EmptyAvailability { state: String, player: String },
    #[error("availability for state {state:?}, player {player:?} lists action {action:?} twice")]
    DuplicateAvailability {
        state: String,
        player: String,
        action: String,
    },
    #[error("joint action {action} at state {state:?} has {got} components, expected {expected} (one per player)")]
    JointActionArity {
        state: String,
        action: String,
        got: usize,
        expected: usize,
    },
    #[error("transition at state {state:?} uses joint action {action}, but action {bad:?} is not available to player {player:?} there")]
    ForbiddenTransition {
        state: String,
        action: String,
        player: String,
        bad: String,
    },
    #[error("duplicate transition row for state {state:?}, joint action {action}")]
    DuplicateTransition { state: String, action: String },
    #[error("negative probability {prob} in transition at state {state:?}, joint action {action}")]
    NegativeProbability {
        state: String,
        action: String,
        prob: String,
    },
    #[error("stochasticity violated at state {state:?} under joint action {action}: row sums to {sum}, expected 1")]
    Stochasticity {
        state: String,
        action: String,
        sum: String,
    },
    #[error("transition missing for state {state:?}, allowed joint action {action}")]
    MissingTransition { state: String, action: String },
    #[error("joint action {action} is not allowed at state {state:?}")]
    ForbiddenJointAction { state: String, action: String },
    #[error("advice missing for state {state:?}")]
    MissingAdvice { state: String },
    #[error("advice at state {state:?} recommends action {action:?} to player {player:?} with positive probability, but it is not available there")]
    AdviceValidity {
        state: String,
        player: String,
        action: String,
    },
    #[error("advice row for joint action {action} at state {state:?} has non-positive probability {prob}")]
    AdviceRowNotPositive {
        state: String,
        action: String,
        prob: String,
    },
    #[error("advice at state {state:?} lists joint action {action} twice")]
    DuplicateAdviceRow { state: String, action: String },
    #[error("advice table at state {state:?} sums to {sum}, expected 1")]
    AdviceRowSum { state: String, sum: String },
}

// ---- Game -----------------------------------------------------------------

/// Raw, unvalidated pieces of a game; `Game::from_data` enforces every
/// invariant. Produced by the parser, the test generators, and unfolding.
#[derive(Debug, Clone)]
pub struct GameData {
    pub states: Vec<StateId>,
    pub initial: StateId,
    pub players: Vec<PlayerId>,
    pub actions: Vec<ActionId>,
    /// (state, player) → available actions, any order, no duplicates.
    pub availability: BTreeMap<(StateId, PlayerId), Vec<ActionId>>,
    /// One row per allowed joint action: (state, joint action, successor distribution).
    pub transitions: Vec<(StateId, JointAction, Vec<(StateId, Rational)>)>,
    /// Player → goal states; players may be absent (empty goal set).
    pub goals: BTreeMap<PlayerId, BTreeSet<StateId>>,
}

/// A validated probabilistic concurrent game graph.
///
/// Invariants (enforced at construction):
/// - `initial` is a declared state; goal sets contain only declared states;
///   every availability set is non-empty and drawn from the action list.
/// - δ has exactly one row per state per availability-respecting joint
///   action, and each row sums to exactly 1 with no negative entries.
///   Zero-probability successors are dropped, so the stored support is the
///   positive-edge structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Game {
    states: Vec<StateId>,
    state_index: BTreeMap<StateId, usize>,
    initial: StateId,
    players: Vec<PlayerId>,
    player_index: BTreeMap<PlayerId, usize>,
    actions: Vec<ActionId>,
    action_index: BTreeMap<ActionId, usize>,
    /// Per state: per player position, the available actions in global action order.
    availability: BTreeMap<StateId, Vec<Vec<ActionId>>>,
    transitions: BTreeMap<StateId, BTreeMap<JointAction, Vec<(StateId, Rational)>>>,
    /// Per player position.
    goals: Vec<BTreeSet<StateId>>,
}

fn index_unique<T: Ord + Clone + fmt::Display>(
    items: &[T],
    kind: &'static str,
) -> Result<BTreeMap<T, usize>, ModelError> {
    if items.is_empty() {
        return Err(ModelError::EmptyList { kind });
    }
    let mut map = BTreeMap::new();
    for (k, item) in items.iter().enumerate() {
        if map.insert(item.clone(), k).is_some() {
            return Err(ModelError::DuplicateId {
                kind,
                id: item.to_string(),
            });
        }
    }
    Ok(map)
}

impl Game {
    pub fn from_data(data: GameData) -> Result<Game, ModelError> {
        let GameData {
            states,
            initial,
            players,
            actions,
            availability,
            transitions,
            goals,
        } = data;

        let state_index = index_unique(&states, "state")?;
        let player_index = index_unique(&players, "player")?;
        let action_index = index_unique(&actions, "action")?;

        if !state_index.contains_key(&initial) {
            return Err(ModelError::UnknownInitial(initial.0));
        }

        // Availability: total on (state, player), non-empty, known actions,
        // normalized to global action order.
        let mut avail: BTreeMap<StateId, Vec<Vec<ActionId>>> = BTreeMap::new();
        for ((q, p), list) in &availability {
            if !state_index.contains_key(q) {
                return Err(ModelError::UnknownState {
                    state: q.0.clone(),
                    context: "availability".into(),
                });
            }
            if !player_index.contains_key(p) {
                return Err(ModelError::UnknownPlayer {
                    player: p.0.clone(),
                    context: "availability".into(),
                });
            }
            let mut seen = BTreeSet::new();
            for a in list {
                if !action_index.contains_key(a) {
                    return Err(ModelError::UnknownAction {
                        action: a.0.clone(),
                        context: format!("availability of state {:?}, player {:?}", q.0, p.0),
                    });
                }
                if !seen.insert(a.clone()) {
                    return Err(ModelError::DuplicateAvailability {
                        state: q.0.clone(),
                        player: p.0.clone(),
                        action: a.0.clone(),
                    });
                }
            }
        }
        for q in &states {
            let mut per_player = Vec::with_capacity(players.len());
            for p in &players {
                match availability.get(&(q.clone(), p.clone())) {
                    None => {
                        return Err(ModelError::MissingAvailability {
                            state: q.0.clone(),
                            player: p.0.clone(),
                        })
                    }
                    Some(list) if list.is_empty() => {
                        return Err(ModelError::EmptyAvailability {
                            state: q.0.clone(),
                            player: p.0.clone(),
                        })
                    }
                    Some(list) => {
                        let mut ordered = list.clone();
                        ordered.sort_by_key(|a| action_index[a]);
                        per_player.push(ordered);
                    }
                }
            }
            avail.insert(q.clone(), per_player);
        }

        // Goals.
        let mut goal_sets = vec![BTreeSet::new(); players.len()];
        for (p, set) in &goals {
            let Some(&pi) = player_index.get(p) else {
                return Err(ModelError::UnknownPlayer {
                    player: p.0.clone(),
                    context: "goals".into(),
                });
            };
            for q in set {
                if !state_index.contains_key(q) {
                    return Err(ModelError::UnknownState {
                        state: q.0.clone(),
                        context: format!("goal set of player {:?}", p.0),
                    });
                }
            }
            goal_sets[pi] = set.clone();
        }

        // Transitions: exactly one row per allowed joint action, each row an
        // exact distribution.
        let mut trans: BTreeMap<StateId, BTreeMap<JointAction, Vec<(StateId, Rational)>>> =
            states.iter().map(|q| (q.clone(), BTreeMap::new())).collect();
        for (q, action, row) in transitions {
            if !state_index.contains_key(&q) {
                return Err(ModelError::UnknownState {
                    state: q.0,
                    context: "transition row".into(),
                });
            }
            if action.len() != players.len() {
                return Err(ModelError::JointActionArity {
                    state: q.0,
                    action: action.to_string(),
                    got: action.len(),
                    expected: players.len(),
                });
            }
            for (pi, a) in action.components().iter().enumerate() {
                if !action_index.contains_key(a) {
                    return Err(ModelError::UnknownAction {
                        action: a.0.clone(),
                        context: format!("transition at state {:?}", q.0),
                    });
                }
                if !avail[&q][pi].contains(a) {
                    return Err(ModelError::ForbiddenTransition {
                        state: q.0,
                        action: action.to_string(),
                        player: players[pi].0.clone(),
                        bad: a.0.clone(),
                    });
                }
            }
            let mut sum = Rational::zero();
            let mut support: Vec<(StateId, Rational)> = Vec::new();
            for (succ, prob) in row {
                if !state_index.contains_key(&succ) {
                    return Err(ModelError::UnknownState {
                        state: succ.0,
                        context: format!(
                            "successors of state {:?}, joint action {}",
                            q.0, action
                        ),
                    });
                }
                if prob.is_negative() {
                    return Err(ModelError::NegativeProbability {
                        state: q.0,
                        action: action.to_string(),
                        prob: prob.to_string(),
                    });
                }
                sum = sum + &prob;
                if prob.is_positive() {
                    if support.iter().any(|(s, _)| s == &succ) {
                        return Err(ModelError::DuplicateTransition {
                            state: q.0,
                            action: format!("{action} (successor {:?} repeated)", succ.0),
                        });
                    }
                    support.push((succ, prob));
                }
            }
            if !sum.is_one() {
                return Err(ModelError::Stochasticity {
                    state: q.0,
                    action: action.to_string(),
                    sum: sum.to_string(),
                });
            }
            support.sort_by_key(|(s, _)| state_index[s]);
            let per_state = trans.get_mut(&q).expect("state present");
            if per_state.insert(action.clone(), support).is_some() {
                return Err(ModelError::DuplicateTransition {
                    state: q.0,
                    action: action.to_string(),
                });
            }
        }

        let game = Game {
            states,
            state_index,
            initial,
            players,
            player_index,
            actions,
            action_index,
            availability: avail,
            transitions: trans,
            goals: goal_sets,
        };

        // Totality of δ on allowed joint actions.
        for q in &game.states {
            for action in game.joint_actions(q) {
                if !game.transitions[q].contains_key(&action) {
                    return Err(ModelError::MissingTransition {
                        state: q.0.clone(),
                        action: action.to_string(),
                    });
                }
            }
            // No rows beyond the allowed ones exist: each stored row was
            // availability-checked above.
        }
        Ok(game)
    }

    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    pub fn players(&self) -> &[PlayerId] {
        &self.players
    }

    pub fn actions(&self) -> &[ActionId] {
        &self.actions
    }

    pub fn state_position(&self, q: &StateId) -> Option<usize> {
        self.state_index.get(q).copied()
    }

    pub fn player_position(&self, p: &PlayerId) -> Option<usize> {
        self.player_index.get(p).copied()
    }

    pub fn action_position(&self, a: &ActionId) -> Option<usize> {
        self.action_index.get(a).copied()
    }

    /// Available actions of the player at `q`, in global action order.
    pub fn availability(&self, q: &StateId, player: usize) -> &[ActionId] {
        &self.availability[q][player]
    }

    /// Goal set R_i by player position.
    pub fn goal_set(&self, player: usize) -> &BTreeSet<StateId> {
        &self.goals[player]
    }

    pub fn is_goal(&self, player: usize, q: &StateId) -> bool {
        self.goals[player].contains(q)
    }

    /// Positive-probability successor distribution δ(q, action).
    /// Querying a joint action outside the availability product is an error.
    pub fn transition(
        &self,
        q: &StateId,
        action: &JointAction,
    ) -> Result<&[(StateId, Rational)], ModelError> {
        self.transitions
            .get(q)
            .and_then(|rows| rows.get(action))
            .map(Vec::as_slice)
            .ok_or_else(|| ModelError::ForbiddenJointAction {
                state: q.0.clone(),
                action: action.to_string(),
            })
    }

    /// All availability-respecting joint actions at `q`, in lexicographic
    /// order over players with each component in global action order.
    pub fn joint_actions(&self, q: &StateId) -> Vec<JointAction> {
        let lists = &self.availability[q];
        let mut out = Vec::new();
        let mut idx = vec![0usize; lists.len()];
        loop {
            out.push(JointAction::new(
                idx.iter()
                    .enumerate()
                    .map(|(pi, &k)| lists[pi][k].clone())
                    .collect(),
            ));
            let mut pos = lists.len();
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < lists[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
        }
    }
}

// ---- Controller advice ----------------------------------------------------

/// One table row: a joint action and its strictly positive probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdviceRow {
    pub action: JointAction,
    pub prob: Rational,
}

/// Validated controller advice: for every game state, a distribution over
/// availability-respecting joint actions. Rows are strictly positive, sum to
/// exactly 1 per state, and never recommend a forbidden action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerAdvice {
    tables: BTreeMap<StateId, Vec<AdviceRow>>,
}

impl ControllerAdvice {
    pub fn from_tables(
        tables: BTreeMap<StateId, Vec<AdviceRow>>,
        game: &Game,
    ) -> Result<ControllerAdvice, ModelError> {
        for q in tables.keys() {
            if game.state_position(q).is_none() {
                return Err(ModelError::UnknownState {
                    state: q.0.clone(),
                    context: "advice table".into(),
                });
            }
        }
        for q in game.states() {
            let Some(rows) = tables.get(q) else {
                return Err(ModelError::MissingAdvice { state: q.0.clone() });
            };
            let mut sum = Rational::zero();
            let mut seen: BTreeSet<&JointAction> = BTreeSet::new();
            for row in rows {
                if row.action.len() != game.players().len() {
                    return Err(ModelError::JointActionArity {
                        state: q.0.clone(),
                        action: row.action.to_string(),
                        got: row.action.len(),
                        expected: game.players().len(),
                    });
                }
                for (pi, a) in row.action.components().iter().enumerate() {
                    if game.action_position(a).is_none() {
                        return Err(ModelError::UnknownAction {
                            action: a.0.clone(),
                            context: format!("advice at state {:?}", q.0),
                        });
                    }
                    if !game.availability(q, pi).contains(a) {
                        return Err(ModelError::AdviceValidity {
                            state: q.0.clone(),
                            player: game.players()[pi].0.clone(),
                            action: a.0.clone(),
                        });
                    }
                }
                if !row.prob.is_positive() {
                    return Err(ModelError::AdviceRowNotPositive {
                        state: q.0.clone(),
                        action: row.action.to_string(),
                        prob: row.prob.to_string(),
                    });
                }
                if !seen.insert(&row.action) {
                    return Err(ModelError::DuplicateAdviceRow {
                        state: q.0.clone(),
                        action: row.action.to_string(),
                    });
                }
                sum = sum + &row.prob;
            }
            if !sum.is_one() {
                return Err(ModelError::AdviceRowSum {
                    state: q.0.clone(),
                    sum: sum.to_string(),
                });
            }
        }
        Ok(ControllerAdvice { tables })
    }

    /// Table rows at `q`, in document order. Panics on a state the advice
    /// was not validated against (a programming error, not an input error).
    pub fn table(&self, q: &StateId) -> &[AdviceRow] {
        self.tables
            .get(q)
            .map(Vec::as_slice)
            .unwrap_or_else(|| panic!("advice queried for unknown state {q}"))
    }

    pub fn states(&self) -> impl Iterator<Item = &StateId> {
        self.tables.keys()
    }
}

// ---- Model statistics ------------------------------------------------------

/// Informational size statistics, recomputed deterministically from a
/// validated model: `ell` is the maximal bit length over every numerator and
/// denominator appearing in the transitions or advice; `t` is the maximal
/// advice table row count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModelStats {
    pub ell: u64,
    pub t: usize,
    pub states: usize,
    pub players: usize,
    pub actions: usize,
}

pub fn model_stats(game: &Game, advice: &ControllerAdvice) -> ModelStats {
    let mut ell = 0u64;
    for q in game.states() {
        for action in game.joint_actions(q) {
            for (_, p) in game.transition(q, &action).expect("validated game") {
                ell = ell.max(p.bit_length());
            }
        }
    }
    let mut t = 0usize;
    for q in game.states() {
        let rows = advice.table(q);
        t = t.max(rows.len());
        for row in rows {
            ell = ell.max(row.prob.bit_length());
        }
    }
    ModelStats {
        ell,
        t,
        states: game.states().len(),
        players: game.players().len(),
        actions: game.actions().len(),
    }
}

// ---- Documents -------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TransitionRowDoc {
    from: String,
    action: Vec<String>,
    to: BTreeMap<String, Rational>,
}

#[derive(Serialize, Deserialize)]
struct GameDoc {
    states: Vec<String>,
    initial: String,
    players: Vec<String>,
    actions: Vec<String>,
    availability: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    transitions: Vec<TransitionRowDoc>,
    goals: BTreeMap<String, Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct AdviceRowDoc {
    action: Vec<String>,
    prob: Rational,
}

/// Parses and validates a game document (JSON).
pub fn parse_game(text: &str) -> Result<Game, ModelError> {
    let doc: GameDoc = serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    let mut availability = BTreeMap::new();
    for (q, per_player) in doc.availability {
        for (p, list) in per_player {
            availability.insert(
                (StateId(q.clone()), PlayerId(p)),
                list.into_iter().map(ActionId).collect(),
            );
        }
    }
    let transitions = doc
        .transitions
        .into_iter()
        .map(|row| {
            (
                StateId(row.from),
                JointAction::new(row.action.into_iter().map(ActionId).collect()),
                row.to.into_iter().map(|(s, p)| (StateId(s), p)).collect(),
            )
        })
        .collect();
    let goals = doc
        .goals
        .into_iter()
        .map(|(p, list)| (PlayerId(p), list.into_iter().map(StateId).collect()))
        .collect();
    Game::from_data(GameData {
        states: doc.states.into_iter().map(StateId).collect(),
        initial: StateId(doc.initial),
        players: doc.players.into_iter().map(PlayerId).collect(),
        actions: doc.actions.into_iter().map(ActionId).collect(),
        availability,
        transitions,
        goals,
    })
}

/// Serializes a game back to its document form. `parse_game` of the result
/// reproduces the game exactly.
pub fn serialize_game(game: &Game) -> String {
    let mut availability: BTreeMap<String, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for q in game.states() {
        let per_player = availability.entry(q.0.clone()).or_default();
        for (pi, p) in game.players().iter().enumerate() {
            per_player.insert(
                p.0.clone(),
                game.availability(q, pi).iter().map(|a| a.0.clone()).collect(),
            );
        }
    }
    let mut transitions = Vec::new();
    for q in game.states() {
        for action in game.joint_actions(q) {
            let row = game.transition(q, &action).expect("validated game");
            transitions.push(TransitionRowDoc {
                from: q.0.clone(),
                action: action.components().iter().map(|a| a.0.clone()).collect(),
                to: row
                    .iter()
                    .map(|(s, p)| (s.0.clone(), p.clone()))
                    .collect(),
            });
        }
    }
    let mut goals: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (pi, p) in game.players().iter().enumerate() {
        goals.insert(
            p.0.clone(),
            game.goal_set(pi).iter().map(|s| s.0.clone()).collect(),
        );
    }
    let doc = GameDoc {
        states: game.states().iter().map(|s| s.0.clone()).collect(),
        initial: game.initial().0.clone(),
        players: game.players().iter().map(|p| p.0.clone()).collect(),
        actions: game.actions().iter().map(|a| a.0.clone()).collect(),
        availability,
        transitions,
        goals,
    };
    serde_json::to_string_pretty(&doc).expect("document serialization")
}

/// Parses and validates an advice document (JSON) against a validated game.
pub fn parse_advice(text: &str, game: &Game) -> Result<ControllerAdvice, ModelError> {
    let doc: BTreeMap<String, Vec<AdviceRowDoc>> =
        serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    let tables = doc
        .into_iter()
        .map(|(q, rows)| {
            (
                StateId(q),
                rows.into_iter()
                    .map(|r| AdviceRow {
                        action: JointAction::new(r.action.into_iter().map(ActionId).collect()),
                        prob: r.prob,
                    })
                    .collect(),
            )
        })
        .collect();
    ControllerAdvice::from_tables(tables, game)
}

/// Serializes advice back to its document form.
pub fn serialize_advice(advice: &ControllerAdvice) -> String {
    let doc: BTreeMap<String, Vec<AdviceRowDoc>> = advice
        .tables
        .iter()
        .map(|(q, rows)| {
            (
                q.0.clone(),
                rows.iter()
                    .map(|r| AdviceRowDoc {
                        action: r.action.components().iter().map(|a| a.0.clone()).collect(),
                        prob: r.prob.clone(),
                    })
                    .collect(),
            )
        })
        .collect();
    serde_json::to_string_pretty(&doc).expect("document serialization")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Smallest legal model: one state, one player, one action, self-loop.
    fn tiny_game_doc() -> String {
        r#"{
            "states": ["q"],
            "initial": "q",
            "players": ["p"],
            "actions": ["a"],
            "availability": {"q": {"p": ["a"]}},
            "transitions": [{"from": "q", "action": ["a"], "to": {"q": "1"}}],
            "goals": {"p": []}
        }"#
        .to_string()
    }

    /// Two-player one-decision-state game used across the table tests:
    /// both players choose C or D at q0; every outcome moves to the sink.
    fn chicken_state_doc() -> String {
        r#"{
            "states": ["q0", "sink"],
            "initial": "q0",
            "players": ["row", "col"],
            "actions": ["C", "D", "stay"],
            "availability": {
                "q0": {"row": ["C", "D"], "col": ["C", "D"]},
                "sink": {"row": ["stay"], "col": ["stay"]}
            },
            "transitions": [
                {"from": "q0", "action": ["C", "C"], "to": {"sink": "1"}},
                {"from": "q0", "action": ["C", "D"], "to": {"sink": "1"}},
                {"from": "q0", "action": ["D", "C"], "to": {"sink": "1"}},
                {"from": "q0", "action": ["D", "D"], "to": {"sink": "1"}},
                {"from": "sink", "action": ["stay", "stay"], "to": {"sink": "1"}}
            ],
            "goals": {"row": ["sink"], "col": []}
        }"#
        .to_string()
    }

    #[test]
    fn smallest_legal_model_parses() {
        let g = parse_game(&tiny_game_doc()).unwrap();
        assert_eq!(g.states().len(), 1);
        assert_eq!(g.joint_actions(&"q".into()).len(), 1);
    }

    #[test]
    fn bad_row_sum_reports_stochasticity() {
        let text = tiny_game_doc().replace("\"q\": \"1\"", "\"q\": \"9/10\"");
        let err = parse_game(&text).unwrap_err();
        assert!(matches!(err, ModelError::Stochasticity { .. }));
        assert!(err.to_string().contains("stochasticity violated"));
        assert!(err.to_string().contains("9/10"));
    }

    #[test]
    fn missing_transition_is_reported() {
        let text = chicken_state_doc().replace(
            r#"{"from": "q0", "action": ["D", "D"], "to": {"sink": "1"}},"#,
            "",
        );
        let err = parse_game(&text).unwrap_err();
        assert!(matches!(err, ModelError::MissingTransition { .. }));
        assert!(err.to_string().contains("(D,D)"));
    }

    #[test]
    fn forbidden_transition_is_reported() {
        let text = chicken_state_doc().replace(
            r#"{"from": "sink", "action": ["stay", "stay"], "to": {"sink": "1"}}"#,
            r#"{"from": "sink", "action": ["stay", "stay"], "to": {"sink": "1"}},
               {"from": "sink", "action": ["C", "stay"], "to": {"sink": "1"}}"#,
        );
        let err = parse_game(&text).unwrap_err();
        assert!(matches!(err, ModelError::ForbiddenTransition { .. }));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_game("{\n  \"states\": [,]\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "expected position in {msg:?}");
    }

    #[test]
    fn uniform_three_row_advice_is_valid() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{
            "q0": [
                {"action": ["C", "C"], "prob": "1/3"},
                {"action": ["C", "D"], "prob": "1/3"},
                {"action": ["D", "C"], "prob": "1/3"}
            ],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let d = parse_advice(advice, &g).unwrap();
        assert_eq!(d.table(&"q0".into()).len(), 3);
    }

    #[test]
    fn advice_recommending_forbidden_action_is_invalid() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{
            "q0": [
                {"action": ["stay", "C"], "prob": "1/2"},
                {"action": ["C", "C"], "prob": "1/2"}
            ],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let err = parse_advice(advice, &g).unwrap_err();
        assert!(matches!(err, ModelError::AdviceValidity { .. }));
        assert!(err.to_string().contains("stay"));
    }

    #[test]
    fn advice_row_sum_must_be_one() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{
            "q0": [{"action": ["C", "C"], "prob": "1/2"}],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let err = parse_advice(advice, &g).unwrap_err();
        assert!(matches!(err, ModelError::AdviceRowSum { .. }));
    }

    #[test]
    fn advice_must_cover_every_state() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{"q0": [{"action": ["C", "C"], "prob": "1"}]}"#;
        let err = parse_advice(advice, &g).unwrap_err();
        assert!(matches!(err, ModelError::MissingAdvice { .. }));
    }

    #[test]
    fn game_round_trips_through_its_document() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let again = parse_game(&serialize_game(&g)).unwrap();
        assert_eq!(g, again);
    }

    #[test]
    fn advice_round_trips_through_its_document() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{
            "q0": [
                {"action": ["C", "C"], "prob": "1/3"},
                {"action": ["C", "D"], "prob": "1/3"},
                {"action": ["D", "C"], "prob": "1/3"}
            ],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let d = parse_advice(advice, &g).unwrap();
        let again = parse_advice(&serialize_advice(&d), &g).unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn stats_count_bits_and_rows() {
        // Advice-dominated model: transition probabilities are all 1 (bit
        // length 1), so ell is decided by the 1/3 advice rows and t by the
        // three-row table.
        let g = parse_game(&chicken_state_doc()).unwrap();
        let advice = r#"{
            "q0": [
                {"action": ["C", "C"], "prob": "1/3"},
                {"action": ["C", "D"], "prob": "1/3"},
                {"action": ["D", "C"], "prob": "1/3"}
            ],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let d = parse_advice(advice, &g).unwrap();
        let stats = model_stats(&g, &d);
        assert_eq!(stats.t, 3);
        assert_eq!(stats.ell, 2);

        let quarters = r#"{
            "q0": [
                {"action": ["C", "C"], "prob": "1/2"},
                {"action": ["C", "D"], "prob": "1/4"},
                {"action": ["D", "C"], "prob": "1/4"}
            ],
            "sink": [{"action": ["stay", "stay"], "prob": "1"}]
        }"#;
        let d = parse_advice(quarters, &g).unwrap();
        assert_eq!(model_stats(&g, &d).ell, 3);
    }

    #[test]
    fn joint_actions_enumerate_in_action_order() {
        let g = parse_game(&chicken_state_doc()).unwrap();
        let joints = g.joint_actions(&"q0".into());
        let rendered: Vec<String> = joints.iter().map(|j| j.to_string()).collect();
        assert_eq!(rendered, vec!["(C,C)", "(C,D)", "(D,C)", "(D,D)"]);
    }
}
