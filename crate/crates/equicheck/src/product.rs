//! The advice Markov chain G×D and per-player deviation MDPs G_i×D.
//!
//! Fixing a player i, the game under advice becomes a bipartite Markov
//! chain: a plain state q moves to an advised state ⟨q,a⟩ with the marginal
//! probability P_{q,a} that the advice recommends a to player i, and ⟨q,a⟩
//! moves to q′ with the conditional mixture of δ over the advice rows that
//! recommend a. The deviation MDP keeps plain states uncontrolled and lets
//! the player substitute any available a* at an advised state, redirecting
//! the same conditional mixture through δ(q, d[i↦a*], ·).
//!
//! Advised states with zero marginal are never materialized: the
//! conditional formulas divide by P_{q,a} and are undefined there.

use std::collections::BTreeMap;
use std::fmt;

use crate::model::{ActionId, ControllerAdvice, Game, ModelError, PlayerId, StateId};
use crate::rational::Rational;

/// A state of the product construction: either a plain game state or an
/// advised pair ⟨q,a⟩ recording the recommendation to the fixed player.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProductState {
    Plain(StateId),
    Advised(StateId, ActionId),
}

impl ProductState {
    pub fn game_state(&self) -> &StateId {
        match self {
            ProductState::Plain(q) | ProductState::Advised(q, _) => q,
        }
    }

    pub fn is_advised(&self) -> bool {
        matches!(self, ProductState::Advised(..))
    }
}

impl fmt::Display for ProductState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProductState::Plain(q) => write!(f, "{q}"),
            ProductState::Advised(q, a) => write!(f, "{q}|{a}"),
        }
    }
}

/// Failures specific to the product constructions.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProductError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot condition on recommendation {action:?} at state {state:?} for player {player:?}: its marginal probability is 0")]
    ZeroMarginal {
        state: String,
        player: String,
        action: String,
    },
    #[error("action {action:?} is not available to player {player:?} at state {state:?}")]
    ForbiddenDeviation {
        state: String,
        player: String,
        action: String,
    },
    #[error("expected an advised product state, got plain state {0:?}")]
    NotAdvised(String),
}

/// The Markov chain G×D for a fixed player: bipartite over plain and
/// advised states, every row summing to exactly 1. Goal states are those
/// whose underlying game state lies in the player's reachability set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductChain {
    player: PlayerId,
    player_pos: usize,
    states: Vec<ProductState>,
    index: BTreeMap<ProductState, usize>,
    rows: Vec<Vec<(usize, Rational)>>,
    initial: usize,
    goal: Vec<bool>,
}

impl ProductChain {
    pub fn player(&self) -> &PlayerId {
        &self.player
    }

    pub fn player_position(&self) -> usize {
        self.player_pos
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, s: &ProductState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn initial_index(&self) -> usize {
        self.initial
    }

    /// Outgoing distribution of state `s` (by index), sparse, in state-index
    /// order, summing to exactly 1.
    pub fn row(&self, s: usize) -> &[(usize, Rational)] {
        &self.rows[s]
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goal[s]
    }

    pub fn goal_flags(&self) -> &[bool] {
        &self.goal
    }
}

/// The deviation MDP G_i×D: plain states keep their uncontrolled chain row;
/// at an advised state ⟨q,a⟩ the player picks any a* ∈ 𝒜(q,i) and moves by
/// the conditional mixture of δ(q, d[i↦a*], ·).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationMdp {
    player: PlayerId,
    player_pos: usize,
    states: Vec<ProductState>,
    index: BTreeMap<ProductState, usize>,
    /// `Some` exactly at plain states.
    plain_rows: Vec<Option<Vec<(usize, Rational)>>>,
    /// `Some` exactly at advised states: (a*, row) in global action order.
    choices: Vec<Option<Vec<(ActionId, Vec<(usize, Rational)>)>>>,
    initial: usize,
    goal: Vec<bool>,
}

impl DeviationMdp {
    pub fn player(&self) -> &PlayerId {
        &self.player
    }

    pub fn player_position(&self) -> usize {
        self.player_pos
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, s: &ProductState) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn initial_index(&self) -> usize {
        self.initial
    }

    pub fn is_goal(&self, s: usize) -> bool {
        self.goal[s]
    }

    pub fn goal_flags(&self) -> &[bool] {
        &self.goal
    }

    pub fn is_advised(&self, s: usize) -> bool {
        self.choices[s].is_some()
    }

    /// The recommendation carried by an advised state, if `s` is one.
    pub fn recommended(&self, s: usize) -> Option<&ActionId> {
        match &self.states[s] {
            ProductState::Advised(_, a) => Some(a),
            ProductState::Plain(_) => None,
        }
    }

    /// Uncontrolled row of a plain state. Panics on an advised state.
    pub fn uncontrolled_row(&self, s: usize) -> &[(usize, Rational)] {
        self.plain_rows[s]
            .as_deref()
            .unwrap_or_else(|| panic!("state {} is advised, not plain", self.states[s]))
    }

    /// Available deviations and their rows at an advised state, in global
    /// action order. Panics on a plain state.
    pub fn actions(&self, s: usize) -> &[(ActionId, Vec<(usize, Rational)>)] {
        self.choices[s]
            .as_deref()
            .unwrap_or_else(|| panic!("state {} is plain, not advised", self.states[s]))
    }

    /// Row for a specific deviation at an advised state.
    pub fn action_row(
        &self,
        s: usize,
        chosen: &ActionId,
    ) -> Result<&[(usize, Rational)], ProductError> {
        let ProductState::Advised(q, _) = &self.states[s] else {
            return Err(ProductError::NotAdvised(self.states[s].to_string()));
        };
        self.choices[s]
            .as_ref()
            .expect("advised state has choices")
            .iter()
            .find(|(a, _)| a == chosen)
            .map(|(_, row)| row.as_slice())
            .ok_or_else(|| ProductError::ForbiddenDeviation {
                state: q.0.clone(),
                player: self.player.0.clone(),
                action: chosen.0.clone(),
            })
    }
}

/// Marginal probability P_{q,a} that the advice recommends `a` to the
/// player at `q`: the sum over matching table rows, 0 when none match.
pub fn marginal(
    game: &Game,
    advice: &ControllerAdvice,
    q: &StateId,
    player: &PlayerId,
    a: &ActionId,
) -> Result<Rational, ModelError> {
    if game.state_position(q).is_none() {
        return Err(ModelError::UnknownState {
            state: q.0.clone(),
            context: "marginal query".into(),
        });
    }
    let pi = game
        .player_position(player)
        .ok_or_else(|| ModelError::UnknownPlayer {
            player: player.0.clone(),
            context: "marginal query".into(),
        })?;
    if game.action_position(a).is_none() {
        return Err(ModelError::UnknownAction {
            action: a.0.clone(),
            context: "marginal query".into(),
        });
    }
    Ok(advice
        .table(q)
        .iter()
        .filter(|row| row.action.get(pi) == a)
        .map(|row| &row.prob)
        .sum())
}

/// All actions with positive marginal at `q` for the player (by position),
/// with their marginals, in global action order.
fn positive_marginals(
    game: &Game,
    advice: &ControllerAdvice,
    q: &StateId,
    pi: usize,
) -> Vec<(ActionId, Rational)> {
    let mut out = Vec::new();
    for a in game.availability(q, pi) {
        let p: Rational = advice
            .table(q)
            .iter()
            .filter(|row| row.action.get(pi) == a)
            .map(|row| &row.prob)
            .sum();
        if p.is_positive() {
            out.push((a.clone(), p));
        }
    }
    out
}

/// Conditional successor mixture from an advised pair (q, recommended)
/// after the player substitutes `chosen`: Σ_{d: d[i]=recommended}
/// ℙ(d)/P_{q,recommended} · δ(q, d[i↦chosen], ·), as a map over plain
/// game states.
fn conditional_mixture(
    game: &Game,
    advice: &ControllerAdvice,
    q: &StateId,
    pi: usize,
    recommended: &ActionId,
    chosen: &ActionId,
) -> Result<BTreeMap<StateId, Rational>, ProductError> {
    let total: Rational = advice
        .table(q)
        .iter()
        .filter(|row| row.action.get(pi) == recommended)
        .map(|row| &row.prob)
        .sum();
    if !total.is_positive() {
        return Err(ProductError::ZeroMarginal {
            state: q.0.clone(),
            player: game.players()[pi].0.clone(),
            action: recommended.0.clone(),
        });
    }
    let mut mix: BTreeMap<StateId, Rational> = BTreeMap::new();
    for row in advice.table(q) {
        if row.action.get(pi) != recommended {
            continue;
        }
        let weight = row.prob.clone() / &total;
        let redirected = row.action.with_component(pi, chosen.clone());
        for (succ, p) in game.transition(q, &redirected)? {
            let term = &weight * p;
            match mix.get_mut(succ) {
                Some(acc) => *acc = acc.clone() + term,
                None => {
                    mix.insert(succ.clone(), term);
                }
            }
        }
    }
    Ok(mix)
}

fn resolve_advised(
    game: &Game,
    player: &PlayerId,
    from: &ProductState,
) -> Result<(StateId, ActionId, usize), ProductError> {
    let pi = game
        .player_position(player)
        .ok_or_else(|| ModelError::UnknownPlayer {
            player: player.0.clone(),
            context: "product query".into(),
        })?;
    match from {
        ProductState::Plain(q) => Err(ProductError::NotAdvised(q.0.clone())),
        ProductState::Advised(q, a) => {
            if game.state_position(q).is_none() {
                return Err(ModelError::UnknownState {
                    state: q.0.clone(),
                    context: "product query".into(),
                }
                .into());
            }
            if !game.availability(q, pi).contains(a) {
                return Err(ProductError::ForbiddenDeviation {
                    state: q.0.clone(),
                    player: player.0.clone(),
                    action: a.0.clone(),
                });
            }
            Ok((q.clone(), a.clone(), pi))
        }
    }
}

/// One step of the chain G×D from `from`, as an explicit distribution. From
/// a plain state the successors are the positive-marginal advised pairs;
/// from an advised pair, the conditional mixture over plain states.
pub fn chain_step(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
    from: &ProductState,
) -> Result<Vec<(ProductState, Rational)>, ProductError> {
    match from {
        ProductState::Plain(q) => {
            if game.state_position(q).is_none() {
                return Err(ModelError::UnknownState {
                    state: q.0.clone(),
                    context: "product query".into(),
                }
                .into());
            }
            let pi = game
                .player_position(player)
                .ok_or_else(|| ModelError::UnknownPlayer {
                    player: player.0.clone(),
                    context: "product query".into(),
                })?;
            Ok(positive_marginals(game, advice, q, pi)
                .into_iter()
                .map(|(a, p)| (ProductState::Advised(q.clone(), a), p))
                .collect())
        }
        ProductState::Advised(..) => {
            let (q, a, pi) = resolve_advised(game, player, from)?;
            let mix = conditional_mixture(game, advice, &q, pi, &a, &a)?;
            Ok(mix
                .into_iter()
                .map(|(s, p)| (ProductState::Plain(s), p))
                .collect())
        }
    }
}

/// One step of the deviation MDP from an advised state after the player
/// substitutes `chosen`, as a distribution over plain states.
pub fn mdp_step(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
    from: &ProductState,
    chosen: &ActionId,
) -> Result<Vec<(StateId, Rational)>, ProductError> {
    let (q, a, pi) = resolve_advised(game, player, from)?;
    if !game.availability(&q, pi).contains(chosen) {
        return Err(ProductError::ForbiddenDeviation {
            state: q.0.clone(),
            player: player.0.clone(),
            action: chosen.0.clone(),
        });
    }
    let mix = conditional_mixture(game, advice, &q, pi, &a, chosen)?;
    Ok(mix.into_iter().collect())
}

/// Shared state layout: all plain states in game order, then every
/// positive-marginal advised pair in (state, action) order.
fn product_states(
    game: &Game,
    advice: &ControllerAdvice,
    pi: usize,
) -> (Vec<ProductState>, BTreeMap<ProductState, usize>) {
    let mut states: Vec<ProductState> = game
        .states()
        .iter()
        .map(|q| ProductState::Plain(q.clone()))
        .collect();
    for q in game.states() {
        for (a, _) in positive_marginals(game, advice, q, pi) {
            states.push(ProductState::Advised(q.clone(), a));
        }
    }
    let index = states
        .iter()
        .enumerate()
        .map(|(k, s)| (s.clone(), k))
        .collect();
    (states, index)
}

fn sparse_row(
    index: &BTreeMap<ProductState, usize>,
    dist: impl IntoIterator<Item = (ProductState, Rational)>,
) -> Vec<(usize, Rational)> {
    let mut row: Vec<(usize, Rational)> = dist
        .into_iter()
        .map(|(s, p)| (index[&s], p))
        .collect();
    row.sort_by_key(|(k, _)| *k);
    row
}

/// Explicitly constructs the chain G×D for `player`.
pub fn build_chain(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
) -> Result<ProductChain, ProductError> {
    let pi = game
        .player_position(player)
        .ok_or_else(|| ModelError::UnknownPlayer {
            player: player.0.clone(),
            context: "product construction".into(),
        })?;
    let (states, index) = product_states(game, advice, pi);
    let mut rows = Vec::with_capacity(states.len());
    for s in &states {
        let dist = chain_step(game, advice, player, s)?;
        rows.push(sparse_row(&index, dist));
    }
    let goal = states
        .iter()
        .map(|s| game.is_goal(pi, s.game_state()))
        .collect();
    let initial = index[&ProductState::Plain(game.initial().clone())];
    Ok(ProductChain {
        player: player.clone(),
        player_pos: pi,
        states,
        index,
        rows,
        initial,
        goal,
    })
}

/// Explicitly constructs the deviation MDP G_i×D for `player`.
pub fn build_mdp(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
) -> Result<DeviationMdp, ProductError> {
    let pi = game
        .player_position(player)
        .ok_or_else(|| ModelError::UnknownPlayer {
            player: player.0.clone(),
            context: "product construction".into(),
        })?;
    let (states, index) = product_states(game, advice, pi);
    let mut plain_rows = Vec::with_capacity(states.len());
    let mut choices = Vec::with_capacity(states.len());
    for s in &states {
        match s {
            ProductState::Plain(_) => {
                let dist = chain_step(game, advice, player, s)?;
                plain_rows.push(Some(sparse_row(&index, dist)));
                choices.push(None);
            }
            ProductState::Advised(q, _) => {
                let mut per_action = Vec::new();
                for a_star in game.availability(q, pi) {
                    let dist = mdp_step(game, advice, player, s, a_star)?;
                    let row = sparse_row(
                        &index,
                        dist.into_iter().map(|(q2, p)| (ProductState::Plain(q2), p)),
                    );
                    per_action.push((a_star.clone(), row));
                }
                plain_rows.push(None);
                choices.push(Some(per_action));
            }
        }
    }
    let goal = states
        .iter()
        .map(|s| game.is_goal(pi, s.game_state()))
        .collect();
    let initial = index[&ProductState::Plain(game.initial().clone())];
    Ok(DeviationMdp {
        player: player.clone(),
        player_pos: pi,
        states,
        index,
        plain_rows,
        choices,
        initial,
        goal,
    })
}
