//! Exact policy iteration for deviation MDPs.
//!
//! The deviating player maximizes the probability of hitting their goal
//! set. Deterministic memoryless policies suffice, so the solver runs
//! policy iteration: start from the follow-the-advice policy, evaluate the
//! induced chain exactly (absorption probabilities, the least fixed point
//! of the policy's operator), and switch any advised state with a strictly
//! improving action, taking the lowest-named improving action and keeping
//! the incumbent on ties. States from which the goal is unreachable under
//! every policy are identified graph-theoretically first and pinned to 0.
//!
//! Every round asserts the policy-improvement lemma (the new value vector
//! dominates the old one pointwise and strictly at every switched state),
//! so a violation of the exact-arithmetic reasoning aborts loudly instead
//! of looping.

use std::collections::BTreeMap;

use crate::analysis::{absorption_values, HittingVector};
use crate::model::ActionId;
use crate::product::{DeviationMdp, ProductState};
use crate::rational::Rational;

/// Failures of policy plumbing.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("policy does not assign an action at advised state {0}")]
    MissingAssignment(String),
    #[error("action {action:?} is not available to the deviating player at {state}")]
    IllegalAction { state: String, action: String },
    #[error("state {0} is not an advised state")]
    NotAdvised(String),
}

/// A deterministic memoryless policy: one action per advised state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Policy {
    choices: BTreeMap<ProductState, ActionId>,
}

impl Policy {
    pub fn new() -> Self {
        Policy::default()
    }

    pub fn set(&mut self, state: ProductState, action: ActionId) {
        self.choices.insert(state, action);
    }

    pub fn get(&self, state: &ProductState) -> Option<&ActionId> {
        self.choices.get(state)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProductState, &ActionId)> {
        self.choices.iter()
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

impl FromIterator<(ProductState, ActionId)> for Policy {
    fn from_iter<I: IntoIterator<Item = (ProductState, ActionId)>>(iter: I) -> Self {
        Policy {
            choices: iter.into_iter().collect(),
        }
    }
}

/// Optimal values together with a policy attaining them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MdpSolution {
    pub values: HittingVector,
    pub policy: Policy,
}

/// The policy that plays the recommendation at every advised state.
pub fn follow_d_policy(mdp: &DeviationMdp) -> Policy {
    (0..mdp.len())
        .filter_map(|s| {
            mdp.recommended(s)
                .map(|a| (mdp.states()[s].clone(), a.clone()))
        })
        .collect()
}

/// Induced-chain rows of a policy: uncontrolled rows at plain states, the
/// chosen action's row at advised states.
pub(crate) fn induced_rows(
    mdp: &DeviationMdp,
    policy: &Policy,
) -> Result<Vec<Vec<(usize, Rational)>>, SolverError> {
    let mut rows = Vec::with_capacity(mdp.len());
    for s in 0..mdp.len() {
        if mdp.is_advised(s) {
            let state = &mdp.states()[s];
            let action = policy
                .get(state)
                .ok_or_else(|| SolverError::MissingAssignment(state.to_string()))?;
            let row = mdp
                .action_row(s, action)
                .map_err(|_| SolverError::IllegalAction {
                    state: state.to_string(),
                    action: action.0.clone(),
                })?;
            rows.push(row.to_vec());
        } else {
            rows.push(mdp.uncontrolled_row(s).to_vec());
        }
    }
    Ok(rows)
}

/// Exact value of a policy, anchored: states unreachable from `anchor` in
/// the induced chain are reported as 0.
pub fn policy_value(
    mdp: &DeviationMdp,
    policy: &Policy,
    anchor: &ProductState,
) -> Result<HittingVector, SolverError> {
    let a = mdp
        .index_of(anchor)
        .unwrap_or_else(|| panic!("anchor {anchor} is not a state of the MDP"));
    let rows = induced_rows(mdp, policy)?;
    let values = absorption_values(&rows, mdp.goal_flags(), Some(a));
    Ok(HittingVector::new(mdp.states().to_vec(), values))
}

/// Exact value of a policy at every state, with no reachability anchor.
pub fn policy_value_all(
    mdp: &DeviationMdp,
    policy: &Policy,
) -> Result<HittingVector, SolverError> {
    let rows = induced_rows(mdp, policy)?;
    let values = absorption_values(&rows, mdp.goal_flags(), None);
    Ok(HittingVector::new(mdp.states().to_vec(), values))
}

/// One-step lookahead value of playing `chosen` at the advised state `s`
/// and continuing with values `h`.
pub fn q_value(
    mdp: &DeviationMdp,
    h: &HittingVector,
    s: &ProductState,
    chosen: &ActionId,
) -> Result<Rational, SolverError> {
    let idx = mdp
        .index_of(s)
        .unwrap_or_else(|| panic!("state {s} is not a state of the MDP"));
    if !mdp.is_advised(idx) {
        return Err(SolverError::NotAdvised(s.to_string()));
    }
    let row = mdp
        .action_row(idx, chosen)
        .map_err(|_| SolverError::IllegalAction {
            state: s.to_string(),
            action: chosen.0.clone(),
        })?;
    Ok(row
        .iter()
        .map(|(t, p)| {
            let value = h
                .get(&mdp.states()[*t])
                .unwrap_or_else(|| panic!("hitting vector does not cover {}", mdp.states()[*t]));
            p * value
        })
        .sum())
}

/// States whose maximal reachability value is 0: no positive-probability
/// path to the goal exists no matter which actions are chosen. Computed by
/// backward closure of the goal over the union of all action rows.
fn zero_value_states(mdp: &DeviationMdp) -> Vec<bool> {
    let n = mdp.len();
    let mut can = vec![false; n];
    for s in 0..n {
        can[s] = mdp.is_goal(s);
    }
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if can[s] {
                continue;
            }
            let reaches = if mdp.is_advised(s) {
                mdp.actions(s)
                    .iter()
                    .any(|(_, row)| row.iter().any(|(t, _)| can[*t]))
            } else {
                mdp.uncontrolled_row(s).iter().any(|(t, _)| can[*t])
            };
            if reaches {
                can[s] = true;
                changed = true;
            }
        }
    }
    can.into_iter().map(|c| !c).collect()
}

/// Exact optimal reachability values of the deviation MDP and a
/// deterministic memoryless policy attaining them. `anchor` must be a state
/// of the MDP; the returned values are un-anchored (true optima at every
/// state), so the anchor's value can be read off directly.
pub fn solve_mdp(mdp: &DeviationMdp, anchor: &ProductState) -> MdpSolution {
    assert!(
        mdp.index_of(anchor).is_some(),
        "anchor {anchor} is not a state of the MDP"
    );
    let zero = zero_value_states(mdp);
    let mut policy = follow_d_policy(mdp);
    let mut values = policy_value_all(mdp, &policy).expect("follow policy is total and legal");

    // Finite policy space and strictly increasing value vectors bound the
    // round count; the explicit cap turns a broken invariant into a panic.
    let mut rounds = 0usize;
    loop {
        rounds += 1;
        assert!(rounds <= 100_000, "policy iteration failed to terminate");

        let mut switched: Vec<usize> = Vec::new();
        for s in 0..mdp.len() {
            if !mdp.is_advised(s) || zero[s] {
                continue;
            }
            let current = values.at(s).clone();
            for (a, row) in mdp.actions(s) {
                let q: Rational = row.iter().map(|(t, p)| p * values.at(*t)).sum();
                if q > current {
                    policy.set(mdp.states()[s].clone(), a.clone());
                    switched.push(s);
                    break;
                }
            }
        }
        if switched.is_empty() {
            break;
        }

        let improved = policy_value_all(mdp, &policy).expect("switched policy is total and legal");
        for s in 0..mdp.len() {
            assert!(
                improved.at(s) >= values.at(s),
                "policy improvement lost value at {}",
                mdp.states()[s]
            );
        }
        for &s in &switched {
            assert!(
                improved.at(s) > values.at(s),
                "switched state {} did not strictly improve",
                mdp.states()[s]
            );
        }
        values = improved;
    }

    for (s, is_zero) in zero.iter().enumerate() {
        if *is_zero {
            assert!(values.at(s).is_zero(), "zero-value state has positive value");
        }
    }

    MdpSolution { values, policy }
}
