//! Classification, pruning, and exact hitting probabilities for product
//! chains.
//!
//! A product chain state either hits the goal set with probability 1 (win),
//! probability 0 (lose), or strictly in between (interior). Classification
//! is purely graph-theoretic over the positive-probability edges: lose
//! states are those with no path to the goal, together with states
//! unreachable from the anchor; win states are those that cannot reach a
//! lose state without first passing through the goal. Pruning consolidates
//! win states into an absorbing target and deletes lose states, leaving a
//! weakly-chained substochastic system whose exact solution is the hitting
//! probability vector.
//!
//! When a goal state is unreachable from the anchor the two classification
//! rules collide; unreachability wins, so an anchored vector reports 0
//! there. The un-anchored variant ([`hitting_all`]) treats every state as
//! reachable and therefore yields the true hitting probability everywhere.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::model::{ControllerAdvice, Game, PlayerId, StateId};
use crate::product::{build_chain, ProductChain, ProductState};
use crate::rational::Rational;

/// Failures of the pruning step.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalysisError {
    #[error("anchor {anchor} lies in the {part} partition; its payoff is already {payoff} and there is nothing to prune")]
    DegenerateAnchor {
        anchor: String,
        part: &'static str,
        payoff: Rational,
    },
}

// ---- Index-level engine -----------------------------------------------------

/// Class of a state with respect to goal absorption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Class {
    Win,
    Lose,
    Interior,
}

pub(crate) fn forward_reachable(rows: &[Vec<(usize, Rational)>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; rows.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(s) = queue.pop_front() {
        for (t, _) in &rows[s] {
            if !seen[*t] {
                seen[*t] = true;
                queue.push_back(*t);
            }
        }
    }
    seen
}

fn predecessors(rows: &[Vec<(usize, Rational)>]) -> Vec<Vec<usize>> {
    let mut preds = vec![Vec::new(); rows.len()];
    for (s, row) in rows.iter().enumerate() {
        for (t, _) in row {
            preds[*t].push(s);
        }
    }
    preds
}

/// Classifies every state of a stochastic row system against `goal`,
/// optionally treating states unreachable from `anchor` as lose states.
/// Uses only the zero/positive pattern of the rows.
pub(crate) fn classify_rows(
    rows: &[Vec<(usize, Rational)>],
    goal: &[bool],
    anchor: Option<usize>,
) -> Vec<Class> {
    let n = rows.len();
    let reachable = match anchor {
        Some(a) => forward_reachable(rows, a),
        None => vec![true; n],
    };
    let preds = predecessors(rows);

    // Backward search from the goal: which states have some path to it.
    let mut can_goal = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| goal[s]).collect();
    for &s in &queue {
        can_goal[s] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !can_goal[s] {
                can_goal[s] = true;
                queue.push_back(s);
            }
        }
    }

    let lose: Vec<bool> = (0..n).map(|s| !reachable[s] || !can_goal[s]).collect();

    // Backward closure of the lose set through non-goal states: a state
    // that can reach a lose state while avoiding the goal is not almost
    // surely absorbed at the goal.
    let mut tainted = lose.clone();
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| lose[s]).collect();
    while let Some(t) = queue.pop_front() {
        for &s in &preds[t] {
            if !tainted[s] && !goal[s] {
                tainted[s] = true;
                queue.push_back(s);
            }
        }
    }

    (0..n)
        .map(|s| {
            if lose[s] {
                Class::Lose
            } else if tainted[s] {
                Class::Interior
            } else {
                Class::Win
            }
        })
        .collect()
}

/// Exact absorption probabilities of a stochastic row system: 1 on win, 0
/// on lose, and the unique solution of the pruned linear system on the
/// interior. `anchor = None` computes the true value at every state.
pub(crate) fn absorption_values(
    rows: &[Vec<(usize, Rational)>],
    goal: &[bool],
    anchor: Option<usize>,
) -> Vec<Rational> {
    let classes = classify_rows(rows, goal, anchor);
    let interior: Vec<usize> = (0..rows.len())
        .filter(|&s| classes[s] == Class::Interior)
        .collect();
    let position: BTreeMap<usize, usize> =
        interior.iter().enumerate().map(|(k, &s)| (s, k)).collect();

    // Weakly-chained substochasticity, checked structurally: every interior
    // state must have a positive-probability path to the target (an edge
    // into the win set).
    {
        let mut ok: Vec<bool> = interior
            .iter()
            .map(|&s| rows[s].iter().any(|(t, _)| classes[*t] == Class::Win))
            .collect();
        let mut changed = true;
        while changed {
            changed = false;
            for (k, &s) in interior.iter().enumerate() {
                if ok[k] {
                    continue;
                }
                if rows[s].iter().any(|(t, _)| {
                    position.get(t).map(|&j| ok[j]).unwrap_or(false)
                }) {
                    ok[k] = true;
                    changed = true;
                }
            }
        }
        assert!(
            ok.iter().all(|&b| b),
            "interior state with no path to the target: classification is inconsistent"
        );
    }

    let m = interior.len();
    let mut a = vec![vec![Rational::zero(); m]; m];
    let mut b = vec![Rational::zero(); m];
    for (k, &s) in interior.iter().enumerate() {
        a[k][k] = Rational::one();
        for (t, p) in &rows[s] {
            match classes[*t] {
                Class::Win => b[k] = &b[k] + p,
                Class::Interior => {
                    let j = position[t];
                    a[k][j] = &a[k][j] - p;
                }
                Class::Lose => {}
            }
        }
    }
    let x = linalg::solve(&a, &b)
        .expect("weakly-chained substochastic system must be nonsingular");

    let mut values = Vec::with_capacity(rows.len());
    for (s, class) in classes.iter().enumerate() {
        let v = match class {
            Class::Win => Rational::one(),
            Class::Lose => Rational::zero(),
            Class::Interior => x[position[&s]].clone(),
        };
        assert!(
            v.is_probability(),
            "hitting value out of [0,1] at state {s}: {v}"
        );
        values.push(v);
    }
    values
}

// ---- Public chain-level API --------------------------------------------------

/// Partition of a chain's states by absorption behavior relative to an
/// anchor state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub anchor: ProductState,
    pub win: BTreeSet<ProductState>,
    pub lose: BTreeSet<ProductState>,
    pub interior: BTreeSet<ProductState>,
}

/// Classifies the chain's states anchored at `anchor` (which must be a
/// state of the chain).
pub fn classify(chain: &ProductChain, anchor: &ProductState) -> Classification {
    let a = chain
        .index_of(anchor)
        .unwrap_or_else(|| panic!("anchor {anchor} is not a state of the chain"));
    let rows: Vec<Vec<(usize, Rational)>> =
        (0..chain.len()).map(|s| chain.row(s).to_vec()).collect();
    let classes = classify_rows(&rows, chain.goal_flags(), Some(a));
    let mut cls = Classification {
        anchor: anchor.clone(),
        win: BTreeSet::new(),
        lose: BTreeSet::new(),
        interior: BTreeSet::new(),
    };
    for (s, class) in classes.iter().enumerate() {
        let state = chain.states()[s].clone();
        match class {
            Class::Win => cls.win.insert(state),
            Class::Lose => cls.lose.insert(state),
            Class::Interior => cls.interior.insert(state),
        };
    }
    cls
}

/// The pruned substochastic system: interior states only, with win states
/// consolidated into an implicit absorbing target and lose states deleted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedChain {
    interior: Vec<ProductState>,
    anchor: usize,
    rows: Vec<Vec<(usize, Rational)>>,
    target_mass: Vec<Rational>,
}

impl PrunedChain {
    pub fn interior_states(&self) -> &[ProductState] {
        &self.interior
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor
    }

    /// Interior-to-interior entries of E′ for one state, sparse.
    pub fn row(&self, s: usize) -> &[(usize, Rational)] {
        &self.rows[s]
    }

    /// One-step probability of moving from interior state `s` into the target.
    pub fn target_mass(&self, s: usize) -> &Rational {
        &self.target_mass[s]
    }

    /// True iff every interior state has a positive-probability path to the
    /// target, the structural condition that makes I − E′ invertible.
    pub fn weakly_chained(&self) -> bool {
        let mut ok: Vec<bool> = self.target_mass.iter().map(|p| p.is_positive()).collect();
        let mut changed = true;
        while changed {
            changed = false;
            for s in 0..self.rows.len() {
                if !ok[s] && self.rows[s].iter().any(|(t, _)| ok[*t]) {
                    ok[s] = true;
                    changed = true;
                }
            }
        }
        ok.iter().all(|&b| b)
    }
}

/// Prunes the chain relative to a classification produced from it. Fails
/// when the anchor itself is already classified, in which case the caller
/// should short-circuit to payoff 1 (win) or 0 (lose).
pub fn prune(chain: &ProductChain, cls: &Classification) -> Result<PrunedChain, AnalysisError> {
    if cls.win.contains(&cls.anchor) {
        return Err(AnalysisError::DegenerateAnchor {
            anchor: cls.anchor.to_string(),
            part: "win",
            payoff: Rational::one(),
        });
    }
    if cls.lose.contains(&cls.anchor) {
        return Err(AnalysisError::DegenerateAnchor {
            anchor: cls.anchor.to_string(),
            part: "lose",
            payoff: Rational::zero(),
        });
    }
    let interior: Vec<ProductState> = chain
        .states()
        .iter()
        .filter(|s| cls.interior.contains(s))
        .cloned()
        .collect();
    let position: BTreeMap<&ProductState, usize> =
        interior.iter().enumerate().map(|(k, s)| (s, k)).collect();
    let mut rows = Vec::with_capacity(interior.len());
    let mut target_mass = Vec::with_capacity(interior.len());
    for s in &interior {
        let si = chain.index_of(s).expect("interior state is in the chain");
        let mut row = Vec::new();
        let mut mass = Rational::zero();
        for (t, p) in chain.row(si) {
            let target_state = &chain.states()[*t];
            if cls.win.contains(target_state) {
                mass = mass + p;
            } else if let Some(&j) = position.get(target_state) {
                row.push((j, p.clone()));
            }
        }
        rows.push(row);
        target_mass.push(mass);
    }
    let anchor = position[&cls.anchor];
    Ok(PrunedChain {
        interior,
        anchor,
        rows,
        target_mass,
    })
}

/// Exact hitting probabilities for every chain state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HittingVector {
    states: Vec<ProductState>,
    index: BTreeMap<ProductState, usize>,
    values: Vec<Rational>,
}

impl HittingVector {
    pub(crate) fn new(states: Vec<ProductState>, values: Vec<Rational>) -> Self {
        let index = states
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), k))
            .collect();
        HittingVector {
            states,
            index,
            values,
        }
    }

    pub fn get(&self, s: &ProductState) -> Option<&Rational> {
        self.index.get(s).map(|&k| &self.values[k])
    }

    /// Value by the chain's state index.
    pub fn at(&self, s: usize) -> &Rational {
        &self.values[s]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Hitting probabilities anchored at `anchor`: states unreachable from the
/// anchor are reported as 0 regardless of their own behavior.
pub fn hitting(chain: &ProductChain, anchor: &ProductState) -> HittingVector {
    let a = chain
        .index_of(anchor)
        .unwrap_or_else(|| panic!("anchor {anchor} is not a state of the chain"));
    let rows: Vec<Vec<(usize, Rational)>> =
        (0..chain.len()).map(|s| chain.row(s).to_vec()).collect();
    let values = absorption_values(&rows, chain.goal_flags(), Some(a));
    HittingVector::new(chain.states().to_vec(), values)
}

/// True hitting probabilities at every state, with no reachability anchor.
pub fn hitting_all(chain: &ProductChain) -> HittingVector {
    let rows: Vec<Vec<(usize, Rational)>> =
        (0..chain.len()).map(|s| chain.row(s).to_vec()).collect();
    let values = absorption_values(&rows, chain.goal_flags(), None);
    HittingVector::new(chain.states().to_vec(), values)
}

/// Expected payoff of the player when everyone follows the advice from
/// `start`: the probability that the advice chain started there ever visits
/// the player's goal set. Returns 1 immediately when `start` is itself a
/// goal state.
pub fn payoff_under_d(
    game: &Game,
    advice: &ControllerAdvice,
    player: &PlayerId,
    start: &StateId,
) -> Rational {
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    assert!(
        game.state_position(start).is_some(),
        "unknown start state {start}"
    );
    if game.is_goal(pi, start) {
        return Rational::one();
    }
    let chain = build_chain(game, advice, player).expect("validated inputs");
    let start = ProductState::Plain(start.clone());
    hitting(&chain, &start)
        .get(&start)
        .expect("plain states are always materialized")
        .clone()
}

/// States where the player could still be offered a profitable one-step
/// deviation: non-goal states reachable from the initial state through
/// positive-probability edges of the full game graph (any availability-
/// respecting joint action, not only those in the advice's support) along
/// paths that avoid the player's goal set entirely. Returned in the game's
/// state order. Empty when the initial state is already a goal state.
pub fn relevant_states(game: &Game, player: &PlayerId) -> Vec<StateId> {
    let pi = game
        .player_position(player)
        .unwrap_or_else(|| panic!("unknown player {player}"));
    if game.is_goal(pi, game.initial()) {
        return Vec::new();
    }
    let mut seen: BTreeSet<StateId> = BTreeSet::new();
    let mut queue = VecDeque::from([game.initial().clone()]);
    seen.insert(game.initial().clone());
    while let Some(q) = queue.pop_front() {
        for action in game.joint_actions(&q) {
            for (succ, _) in game.transition(&q, &action).expect("validated game") {
                if !game.is_goal(pi, succ) && !seen.contains(succ) {
                    seen.insert(succ.clone());
                    queue.push_back(succ.clone());
                }
            }
        }
    }
    game.states()
        .iter()
        .filter(|q| seen.contains(q))
        .cloned()
        .collect()
}

// ---- Exact linear solve ------------------------------------------------------

pub(crate) mod linalg {
    //! Fraction-free (Bareiss) Gaussian elimination over exact rationals.
    //!
    //! Rows are first scaled to integers; elimination then keeps every
    //! intermediate entry an integer (each division is exact because the
    //! entries are minors of the scaled matrix), and back-substitution
    //! produces the exact rational solution. The residual of the original
    //! system is asserted to be exactly zero.

    use num::bigint::BigInt;
    use num::Integer;

    use crate::rational::Rational;

    fn integer_rational(n: BigInt) -> Rational {
        Rational::from_big(n, BigInt::from(1)).expect("unit denominator")
    }

    /// Solves A·x = b exactly. Returns `None` when A is singular.
    pub(crate) fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
        let n = a.len();
        if n == 0 {
            return Some(Vec::new());
        }
        assert!(a.iter().all(|row| row.len() == n) && b.len() == n);

        // Integer augmented matrix: scale each row by the lcm of its
        // denominators.
        let mut m: Vec<Vec<BigInt>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut scale = BigInt::from(1);
            for v in a[i].iter().chain(std::iter::once(&b[i])) {
                scale = scale.lcm(v.denominator());
            }
            let mut row: Vec<BigInt> = Vec::with_capacity(n + 1);
            for v in a[i].iter().chain(std::iter::once(&b[i])) {
                row.push(v.numerator() * (&scale / v.denominator()));
            }
            m.push(row);
        }

        // Fraction-free elimination with row pivoting on nonzero structure.
        let zero = BigInt::from(0);
        let mut prev = BigInt::from(1);
        for k in 0..n {
            let pivot = (k..n).find(|&r| m[r][k] != zero)?;
            m.swap(k, pivot);
            for i in k + 1..n {
                for j in k + 1..=n {
                    let numer = &m[k][k] * &m[i][j] - &m[i][k] * &m[k][j];
                    let (q, r) = numer.div_rem(&prev);
                    assert!(r == zero, "fraction-free elimination division is exact");
                    m[i][j] = q;
                }
                m[i][k] = zero.clone();
            }
            prev = m[k][k].clone();
        }

        // Back-substitution in rationals.
        let mut x = vec![Rational::zero(); n];
        for i in (0..n).rev() {
            let mut acc = integer_rational(m[i][n].clone());
            for j in i + 1..n {
                acc = acc - integer_rational(m[i][j].clone()) * &x[j];
            }
            x[i] = acc / integer_rational(m[i][i].clone());
        }

        // Exact residual check against the original system.
        for i in 0..n {
            let mut lhs = Rational::zero();
            for j in 0..n {
                lhs = lhs + &a[i][j] * &x[j];
            }
            assert!(lhs == b[i], "exact solve produced a nonzero residual");
        }
        Some(x)
    }

    #[cfg(test)]
    mod tests {
        use super::*;
        use proptest::prelude::*;

        fn r(s: &str) -> Rational {
            s.parse().unwrap()
        }

        /// Plain rational Gaussian elimination, used as an independent
        /// reference for the fraction-free variant.
        fn naive_solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
            let n = a.len();
            let mut m: Vec<Vec<Rational>> = (0..n)
                .map(|i| {
                    let mut row = a[i].clone();
                    row.push(b[i].clone());
                    row
                })
                .collect();
            for k in 0..n {
                let pivot = (k..n).find(|&r| !m[r][k].is_zero())?;
                m.swap(k, pivot);
                let inv = Rational::one() / m[k][k].clone();
                for j in k..=n {
                    m[k][j] = &m[k][j] * &inv;
                }
                for i in 0..n {
                    if i != k && !m[i][k].is_zero() {
                        let f = m[i][k].clone();
                        for j in k..=n {
                            m[i][j] = &m[i][j] - &f * &m[k][j];
                        }
                    }
                }
            }
            Some((0..n).map(|i| m[i][n].clone()).collect())
        }

        #[test]
        fn solves_a_small_system() {
            // 2x + y = 5/2, x - y = 1/2 → x = 1, y = 1/2.
            let a = vec![vec![r("2"), r("1")], vec![r("1"), r("-1")]];
            let b = vec![r("5/2"), r("1/2")];
            assert_eq!(solve(&a, &b).unwrap(), vec![r("1"), r("1/2")]);
        }

        #[test]
        fn detects_singular_systems() {
            let a = vec![vec![r("1"), r("2")], vec![r("2"), r("4")]];
            assert_eq!(solve(&a, &[r("1"), r("2")]), None);
        }

        #[test]
        fn empty_system_has_empty_solution() {
            assert_eq!(solve(&[], &[]), Some(Vec::new()));
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]
            #[test]
            fn agrees_with_plain_elimination(
                entries in proptest::collection::vec((-6i64..=6, 1i64..=4), 1..=30)
            ) {
                // Square size n with n^2 + n entries consumed from the pool.
                let n = ((entries.len() as f64).sqrt() as usize).clamp(1, 4);
                if entries.len() < n * n + n {
                    return Ok(());
                }
                let mut it = entries.into_iter().map(|(num, den)| Rational::ratio(num, den));
                let a: Vec<Vec<Rational>> =
                    (0..n).map(|_| (0..n).map(|_| it.next().unwrap()).collect()).collect();
                let b: Vec<Rational> = (0..n).map(|_| it.next().unwrap()).collect();
                let ours = solve(&a, &b);
                let reference = naive_solve(&a, &b);
                prop_assert_eq!(ours, reference);
            }
        }
    }
}
