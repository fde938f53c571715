//! Succinct advice and transition functions as Bayesian networks: exact
//! inference by variable elimination, composition of advice with transition
//! nets, deviation conditioning, and unfolding to explicit game and advice
//! tables.
//!
//! Networks extend the classical triple (vertices, parent edges, theta) with
//! a designated `Input` theta variant: input vertices carry no distribution
//! and exist to be wired by composition or instantiated during unfolding.
//! Inference refuses nets that still contain them. All arithmetic is exact;
//! every inferred marginal is a true rational.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::model::{
    ActionId, AdviceRow, ControllerAdvice, Game, GameData, JointAction, ModelError, PlayerId,
    StateId,
};
use crate::rational::Rational;

/// Failures of network validation, inference, or unfolding.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BayesError {
    #[error("malformed network document: {0}")]
    Syntax(String),
    #[error("duplicate vertex name {0}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("vertex {vertex} has no domain value {value}")]
    UnknownValue { vertex: String, value: String },
    #[error("vertex {0} has an empty domain")]
    EmptyDomain(String),
    #[error("vertex {vertex} repeats domain value {value}")]
    DuplicateValue { vertex: String, value: String },
    #[error("vertex {vertex} lists parent {parent} twice")]
    DuplicateParent { vertex: String, parent: String },
    #[error("input vertex {0} must not have parents")]
    InputWithParents(String),
    #[error("the parent graph has a cycle through {0}")]
    CyclicNet(String),
    #[error("vertex {vertex} needs {expected} table entries, found {got}")]
    ThetaShape {
        vertex: String,
        expected: usize,
        got: usize,
    },
    #[error("vertex {0} has a negative probability")]
    NegativeProbability(String),
    #[error("stochasticity violated: a distribution row of vertex {0} does not sum to 1")]
    RowSum(String),
    #[error("net contains input vertex {0}; instantiate or compose before inference")]
    InputVertexPresent(String),
    #[error("conditioning on an event of probability zero")]
    ZeroConditioning,
    #[error("vertex {vertex} has domain {got:?}, expected {expected:?}")]
    DomainMismatch {
        vertex: String,
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("vertex name {0} appears in both nets being composed")]
    NameCollision(String),
    #[error("expected {expected} designated vertices, found {got}")]
    PlayerCountMismatch { expected: usize, got: usize },
    #[error("state {state} has no associated network")]
    MissingNet { state: StateId },
    #[error("network given for undeclared state {state}")]
    UnexpectedNet { state: StateId },
    #[error("unfolding state {state} needs {size} joint actions, exceeding the budget of {budget}")]
    BudgetExceeded {
        state: StateId,
        size: u128,
        budget: u128,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Conditional distribution of one vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Theta {
    /// Distribution over the vertex's own domain; requires no parents.
    Prior(Vec<Rational>),
    /// One distribution row per parent assignment, row-major over the
    /// parent domains in parent-list order (first parent most significant).
    Cpt(Vec<Vec<Rational>>),
    /// No distribution: a socket to be wired or instantiated later.
    Input,
}

/// One network vertex: a name, a finite value domain, parent indices, and a
/// theta entry shaped by the parents' domains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub name: String,
    pub domain: Vec<String>,
    pub parents: Vec<usize>,
    pub theta: Theta,
}

/// A validated Bayesian network (possibly with input vertices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayesNet {
    vertices: Vec<Vertex>,
    index: BTreeMap<String, usize>,
}

impl BayesNet {
    /// Validates names, domains, the parent DAG, and every theta shape.
    pub fn new(vertices: Vec<Vertex>) -> Result<BayesNet, BayesError> {
        let mut index = BTreeMap::new();
        for (k, v) in vertices.iter().enumerate() {
            if index.insert(v.name.clone(), k).is_some() {
                return Err(BayesError::DuplicateVertex(v.name.clone()));
            }
            if v.domain.is_empty() {
                return Err(BayesError::EmptyDomain(v.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for value in &v.domain {
                if !seen.insert(value) {
                    return Err(BayesError::DuplicateValue {
                        vertex: v.name.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
        for v in &vertices {
            let mut seen = BTreeSet::new();
            for &p in &v.parents {
                if p >= vertices.len() {
                    return Err(BayesError::UnknownVertex(format!("#{p}")));
                }
                if !seen.insert(p) {
                    return Err(BayesError::DuplicateParent {
                        vertex: v.name.clone(),
                        parent: vertices[p].name.clone(),
                    });
                }
            }
        }
        // Depth-first cycle check over parent edges.
        let mut color = vec![0u8; vertices.len()];
        fn visit(vertices: &[Vertex], color: &mut [u8], k: usize) -> Result<(), BayesError> {
            color[k] = 1;
            for &p in &vertices[k].parents {
                match color[p] {
                    1 => return Err(BayesError::CyclicNet(vertices[p].name.clone())),
                    0 => visit(vertices, color, p)?,
                    _ => {}
                }
            }
            color[k] = 2;
            Ok(())
        }
        for k in 0..vertices.len() {
            if color[k] == 0 {
                visit(&vertices, &mut color, k)?;
            }
        }
        for v in &vertices {
            let rows: usize = v
                .parents
                .iter()
                .map(|&p| vertices[p].domain.len())
                .product();
            let check_row = |row: &[Rational]| -> Result<(), BayesError> {
                if row.len() != v.domain.len() {
                    return Err(BayesError::ThetaShape {
                        vertex: v.name.clone(),
                        expected: v.domain.len(),
                        got: row.len(),
                    });
                }
                let mut sum = Rational::zero();
                for p in row {
                    if p.is_negative() {
                        return Err(BayesError::NegativeProbability(v.name.clone()));
                    }
                    sum = sum + p;
                }
                if !sum.is_one() {
                    return Err(BayesError::RowSum(v.name.clone()));
                }
                Ok(())
            };
            match &v.theta {
                Theta::Input => {
                    if !v.parents.is_empty() {
                        return Err(BayesError::InputWithParents(v.name.clone()));
                    }
                }
                Theta::Prior(row) => {
                    if !v.parents.is_empty() {
                        return Err(BayesError::ThetaShape {
                            vertex: v.name.clone(),
                            expected: rows,
                            got: 1,
                        });
                    }
                    check_row(row)?;
                }
                Theta::Cpt(table) => {
                    if table.len() != rows {
                        return Err(BayesError::ThetaShape {
                            vertex: v.name.clone(),
                            expected: rows,
                            got: table.len(),
                        });
                    }
                    for row in table {
                        check_row(row)?;
                    }
                }
            }
        }
        Ok(BayesNet { vertices, index })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn value_index(&self, vertex: usize, value: &str) -> Result<usize, BayesError> {
        let v = &self.vertices[vertex];
        v.domain
            .iter()
            .position(|d| d == value)
            .ok_or_else(|| BayesError::UnknownValue {
                vertex: v.name.clone(),
                value: value.to_string(),
            })
    }

    fn first_input(&self) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.theta == Theta::Input)
    }
}

// ---- Exact inference by variable elimination -------------------------------------

/// A nonnegative function of a sorted list of vertices, tabulated row-major
/// with the first listed vertex most significant.
#[derive(Debug, Clone)]
struct Factor {
    vars: Vec<usize>,
    table: Vec<Rational>,
}

fn domain_sizes(net: &BayesNet, vars: &[usize]) -> Vec<usize> {
    vars.iter().map(|&v| net.vertices[v].domain.len()).collect()
}

/// Iterates every assignment of `sizes`, calling `f` with the current
/// digit vector and its row-major index.
fn for_each_assignment(sizes: &[usize], mut f: impl FnMut(&[usize], usize)) {
    let total: usize = sizes.iter().product();
    let mut digits = vec![0usize; sizes.len()];
    for idx in 0..total {
        f(&digits, idx);
        for k in (0..sizes.len()).rev() {
            digits[k] += 1;
            if digits[k] < sizes[k] {
                break;
            }
            digits[k] = 0;
        }
    }
}

impl Factor {
    /// Builds a factor from a table laid out over `vars` as given, sorting
    /// the variables into canonical ascending order.
    fn normalized(net: &BayesNet, vars: Vec<usize>, table: Vec<Rational>) -> Factor {
        let mut sorted = vars.clone();
        sorted.sort_unstable();
        let given_sizes = domain_sizes(net, &vars);
        let sorted_sizes = domain_sizes(net, &sorted);
        let sorted_strides = strides(&sorted_sizes);
        let position: Vec<usize> = vars
            .iter()
            .map(|v| sorted.iter().position(|s| s == v).unwrap())
            .collect();
        let mut out = vec![Rational::zero(); table.len()];
        for_each_assignment(&given_sizes, |digits, idx| {
            let mut sorted_idx = 0;
            for (slot, &d) in digits.iter().enumerate() {
                sorted_idx += d * sorted_strides[position[slot]];
            }
            out[sorted_idx] = table[idx].clone();
        });
        Factor {
            vars: sorted,
            table: out,
        }
    }

    fn scalar(value: Rational) -> Factor {
        Factor {
            vars: Vec::new(),
            table: vec![value],
        }
    }

    /// Fixes `var` to `value`, dropping it from the factor.
    fn reduce(&self, net: &BayesNet, var: usize, value: usize) -> Factor {
        let slot = match self.vars.iter().position(|&v| v == var) {
            Some(s) => s,
            None => return self.clone(),
        };
        let sizes = domain_sizes(net, &self.vars);
        let rest_vars: Vec<usize> = self
            .vars
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let rest_sizes = domain_sizes(net, &rest_vars);
        let rest_strides = strides(&rest_sizes);
        let mut table = vec![Rational::zero(); rest_sizes.iter().product()];
        for_each_assignment(&sizes, |digits, idx| {
            if digits[slot] != value {
                return;
            }
            let mut out_idx = 0;
            let mut out_slot = 0;
            for (k, &d) in digits.iter().enumerate() {
                if k != slot {
                    out_idx += d * rest_strides[out_slot];
                    out_slot += 1;
                }
            }
            table[out_idx] = self.table[idx].clone();
        });
        Factor {
            vars: rest_vars,
            table,
        }
    }

    /// Pointwise product over the union of the two variable lists.
    fn product(&self, net: &BayesNet, other: &Factor) -> Factor {
        let mut vars: Vec<usize> = self.vars.clone();
        for &v in &other.vars {
            if !vars.contains(&v) {
                vars.push(v);
            }
        }
        vars.sort_unstable();
        let sizes = domain_sizes(net, &vars);
        let project = |from: &[usize]| -> Vec<usize> {
            from.iter()
                .map(|v| vars.iter().position(|u| u == v).unwrap())
                .collect()
        };
        let left_slots = project(&self.vars);
        let right_slots = project(&other.vars);
        let left_strides = strides(&domain_sizes(net, &self.vars));
        let right_strides = strides(&domain_sizes(net, &other.vars));
        let mut table = Vec::with_capacity(sizes.iter().product());
        for_each_assignment(&sizes, |digits, _| {
            let li: usize = left_slots
                .iter()
                .zip(&left_strides)
                .map(|(&slot, &stride)| digits[slot] * stride)
                .sum();
            let ri: usize = right_slots
                .iter()
                .zip(&right_strides)
                .map(|(&slot, &stride)| digits[slot] * stride)
                .sum();
            table.push(&self.table[li] * &other.table[ri]);
        });
        Factor { vars, table }
    }

    /// Sums `var` out of the factor.
    fn sum_out(&self, net: &BayesNet, var: usize) -> Factor {
        let slot = self
            .vars
            .iter()
            .position(|&v| v == var)
            .expect("summed variable is present");
        let sizes = domain_sizes(net, &self.vars);
        let rest_vars: Vec<usize> = self
            .vars
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let rest_sizes = domain_sizes(net, &rest_vars);
        let rest_strides = strides(&rest_sizes);
        let mut table = vec![Rational::zero(); rest_sizes.iter().product::<usize>().max(1)];
        for_each_assignment(&sizes, |digits, idx| {
            let mut out_idx = 0;
            let mut out_slot = 0;
            for (k, &d) in digits.iter().enumerate() {
                if k != slot {
                    out_idx += d * rest_strides[out_slot];
                    out_slot += 1;
                }
            }
            table[out_idx] = table[out_idx].clone() + &self.table[idx];
        });
        Factor {
            vars: rest_vars,
            table,
        }
    }
}

/// Suffix-product strides for a row-major layout.
fn strides(sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![1usize; sizes.len()];
    for k in (0..sizes.len().saturating_sub(1)).rev() {
        out[k] = out[k + 1] * sizes[k + 1];
    }
    out
}

/// Exact probability of a full or partial assignment, by eliminating every
/// free variable with a min-degree ordering (ties broken toward the lowest
/// vertex index).
fn probability_of_evidence(
    net: &BayesNet,
    evidence: &BTreeMap<usize, usize>,
) -> Result<Rational, BayesError> {
    if let Some(input) = net.first_input() {
        return Err(BayesError::InputVertexPresent(input.name.clone()));
    }
    let mut factors: Vec<Factor> = Vec::with_capacity(net.vertices.len());
    for (k, v) in net.vertices.iter().enumerate() {
        let mut vars = v.parents.clone();
        vars.push(k);
        let table: Vec<Rational> = match &v.theta {
            Theta::Prior(row) => row.clone(),
            Theta::Cpt(rows) => rows.iter().flatten().cloned().collect(),
            Theta::Input => unreachable!("checked above"),
        };
        let mut factor = Factor::normalized(net, vars, table);
        for (&var, &value) in evidence {
            factor = factor.reduce(net, var, value);
        }
        factors.push(factor);
    }

    let mut remaining: BTreeSet<usize> = factors.iter().flat_map(|f| f.vars.clone()).collect();
    while let Some(&var) = remaining
        .iter()
        .min_by_key(|&&v| {
            let neighbors: BTreeSet<usize> = factors
                .iter()
                .filter(|f| f.vars.contains(&v))
                .flat_map(|f| f.vars.clone())
                .collect();
            (neighbors.len(), v)
        })
    {
        let (with, without): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.vars.contains(&var));
        let product = with
            .into_iter()
            .reduce(|a, b| a.product(net, &b))
            .expect("var came from some factor");
        factors = without;
        factors.push(product.sum_out(net, var));
        remaining.remove(&var);
    }

    let total = factors
        .into_iter()
        .reduce(|a, b| a.product(net, &b))
        .unwrap_or_else(|| Factor::scalar(Rational::one()));
    assert!(total.vars.is_empty() && total.table.len() == 1);
    let p = total.table.into_iter().next().unwrap();
    assert!(p.is_probability(), "evidence probability left [0,1]");
    Ok(p)
}

fn resolve_evidence(
    net: &BayesNet,
    evidence: &BTreeMap<String, String>,
) -> Result<BTreeMap<usize, usize>, BayesError> {
    let mut out = BTreeMap::new();
    for (name, value) in evidence {
        let var = net
            .vertex_index(name)
            .ok_or_else(|| BayesError::UnknownVertex(name.clone()))?;
        out.insert(var, net.value_index(var, value)?);
    }
    Ok(out)
}

/// Exact conditional marginal P(query = value | evidence). Errors when the
/// net still contains input vertices or the evidence has probability zero.
pub fn infer(
    net: &BayesNet,
    query: &str,
    value: &str,
    evidence: &BTreeMap<String, String>,
) -> Result<Rational, BayesError> {
    let q = net
        .vertex_index(query)
        .ok_or_else(|| BayesError::UnknownVertex(query.to_string()))?;
    let v = net.value_index(q, value)?;
    let mut resolved = resolve_evidence(net, evidence)?;
    let denominator = probability_of_evidence(net, &resolved)?;
    if denominator.is_zero() {
        return Err(BayesError::ZeroConditioning);
    }
    resolved.insert(q, v);
    let numerator = probability_of_evidence(net, &resolved)?;
    Ok(numerator / denominator)
}

// ---- Advice and transition nets ------------------------------------------------

/// Advice network: a net without input vertices plus one designated action
/// vertex per player, in player order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdviceNet {
    pub net: BayesNet,
    pub action_vertices: Vec<String>,
}

impl AdviceNet {
    pub fn new(net: BayesNet, action_vertices: Vec<String>) -> Result<AdviceNet, BayesError> {
        if let Some(input) = net.first_input() {
            return Err(BayesError::InputVertexPresent(input.name.clone()));
        }
        let mut seen = BTreeSet::new();
        for name in &action_vertices {
            if net.vertex_index(name).is_none() {
                return Err(BayesError::UnknownVertex(name.clone()));
            }
            if !seen.insert(name.clone()) {
                return Err(BayesError::DuplicateVertex(name.clone()));
            }
        }
        Ok(AdviceNet {
            net,
            action_vertices,
        })
    }
}

/// Transition network: input vertices in player order plus boolean output
/// vertices mapped to successor states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionNet {
    pub net: BayesNet,
    pub input_vertices: Vec<String>,
    pub output_vertices: Vec<(String, StateId)>,
}

impl TransitionNet {
    pub fn new(
        net: BayesNet,
        input_vertices: Vec<String>,
        output_vertices: Vec<(String, StateId)>,
    ) -> Result<TransitionNet, BayesError> {
        let mut declared = BTreeSet::new();
        for name in &input_vertices {
            let k = net
                .vertex_index(name)
                .ok_or_else(|| BayesError::UnknownVertex(name.clone()))?;
            if net.vertices()[k].theta != Theta::Input {
                return Err(BayesError::Syntax(format!(
                    "vertex {name} is declared as an input but carries a distribution"
                )));
            }
            if !declared.insert(name.clone()) {
                return Err(BayesError::DuplicateVertex(name.clone()));
            }
        }
        for v in net.vertices() {
            if v.theta == Theta::Input && !declared.contains(&v.name) {
                return Err(BayesError::Syntax(format!(
                    "input vertex {} is not in the declared input list",
                    v.name
                )));
            }
        }
        let boolean = vec!["0".to_string(), "1".to_string()];
        let mut seen = BTreeSet::new();
        for (name, _) in &output_vertices {
            let k = net
                .vertex_index(name)
                .ok_or_else(|| BayesError::UnknownVertex(name.clone()))?;
            if net.vertices()[k].domain != boolean {
                return Err(BayesError::DomainMismatch {
                    vertex: name.clone(),
                    expected: boolean.clone(),
                    got: net.vertices()[k].domain.clone(),
                });
            }
            if !seen.insert(name.clone()) {
                return Err(BayesError::DuplicateVertex(name.clone()));
            }
        }
        Ok(TransitionNet {
            net,
            input_vertices,
            output_vertices,
        })
    }

    /// A copy of the net with every input vertex replaced by a point prior
    /// at the given joint assignment (player order). The result is
    /// inference-ready.
    pub fn instantiate(&self, assignment: &[&str]) -> Result<BayesNet, BayesError> {
        if assignment.len() != self.input_vertices.len() {
            return Err(BayesError::PlayerCountMismatch {
                expected: self.input_vertices.len(),
                got: assignment.len(),
            });
        }
        let mut vertices = self.net.vertices().to_vec();
        for (name, value) in self.input_vertices.iter().zip(assignment) {
            let k = self.net.vertex_index(name).expect("validated input");
            let idx = self.net.value_index(k, value)?;
            let mut dirac = vec![Rational::zero(); vertices[k].domain.len()];
            dirac[idx] = Rational::one();
            vertices[k].theta = Theta::Prior(dirac);
        }
        BayesNet::new(vertices)
    }
}

/// Identity conditional table: one Dirac row per parent value.
fn identity_cpt(domain: &[String]) -> Theta {
    let n = domain.len();
    let rows = (0..n)
        .map(|k| {
            let mut row = vec![Rational::zero(); n];
            row[k] = Rational::one();
            row
        })
        .collect();
    Theta::Cpt(rows)
}

/// Appends the transition net's vertices to the advice net's, wiring input
/// vertex i to the advice's action vertex i through an identity table.
/// Fails on vertex-name collisions or mismatched action domains.
fn wire(
    advice: &AdviceNet,
    trans: &TransitionNet,
    rewire: impl Fn(usize) -> Option<usize>,
) -> Result<Vec<Vertex>, BayesError> {
    if trans.input_vertices.len() != advice.action_vertices.len() {
        return Err(BayesError::PlayerCountMismatch {
            expected: advice.action_vertices.len(),
            got: trans.input_vertices.len(),
        });
    }
    let offset = advice.net.vertices().len();
    let mut vertices = advice.net.vertices().to_vec();
    for v in trans.net.vertices() {
        if advice.net.vertex_index(&v.name).is_some() {
            return Err(BayesError::NameCollision(v.name.clone()));
        }
    }
    for (i, input_name) in trans.input_vertices.iter().enumerate() {
        let input_idx = trans.net.vertex_index(input_name).expect("validated");
        let source_idx = match rewire(i) {
            Some(explicit) => explicit,
            None => {
                let action_name = &advice.action_vertices[i];
                advice.net.vertex_index(action_name).expect("validated")
            }
        };
        let source_domain = &vertices[source_idx].domain;
        let input_domain = &trans.net.vertices()[input_idx].domain;
        if source_domain != input_domain {
            return Err(BayesError::DomainMismatch {
                vertex: input_name.clone(),
                expected: input_domain.clone(),
                got: source_domain.clone(),
            });
        }
    }
    for (k, v) in trans.net.vertices().iter().enumerate() {
        let mut vertex = v.clone();
        vertex.parents = v.parents.iter().map(|&p| p + offset).collect();
        if let Some(i) = trans
            .input_vertices
            .iter()
            .position(|name| name == &v.name)
        {
            let source_idx = match rewire(i) {
                Some(explicit) => explicit,
                None => advice
                    .net
                    .vertex_index(&advice.action_vertices[i])
                    .expect("validated"),
            };
            vertex.parents = vec![source_idx];
            vertex.theta = identity_cpt(&trans.net.vertices()[k].domain);
        }
        vertices.push(vertex);
    }
    Ok(vertices)
}

/// Composes an advice net with a transition net into a single input-free
/// network: each transition input becomes an identity-table child of the
/// corresponding advice action vertex. Advice-vertex marginals are
/// unchanged by construction.
pub fn compose(advice: &AdviceNet, trans: &TransitionNet) -> Result<BayesNet, BayesError> {
    BayesNet::new(wire(advice, trans, |_| None)?)
}

/// A composed network carrying the deviation conditioning: queries against
/// it must condition on the recommended action, which this wrapper does.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationNet {
    pub net: BayesNet,
    /// Evidence (action vertex, recommended value) applied to every query.
    pub evidence: (String, String),
    /// Output vertex names in the transition net's output order.
    pub outputs: Vec<(String, StateId)>,
}

impl DeviationNet {
    /// P(output vertex = 1 | recommended evidence): one entry of the
    /// deviation kernel.
    pub fn output_marginal(&self, output: &str) -> Result<Rational, BayesError> {
        let mut evidence = BTreeMap::new();
        evidence.insert(self.evidence.0.clone(), self.evidence.1.clone());
        infer(&self.net, output, "1", &evidence)
    }
}

/// Builds the deviation kernel network for player `i` recommended `a` and
/// deviating to `b`: the advice is conditioned on its action vertex taking
/// value `a` (applied as query evidence), while the transition input for
/// player i is rewired to a fresh constant-`b` vertex. Errors when the
/// recommendation has probability zero.
pub fn deviation_net(
    advice: &AdviceNet,
    trans: &TransitionNet,
    i: usize,
    a: &str,
    b: &str,
) -> Result<DeviationNet, BayesError> {
    if i >= advice.action_vertices.len() {
        return Err(BayesError::PlayerCountMismatch {
            expected: advice.action_vertices.len(),
            got: i + 1,
        });
    }
    let action_name = advice.action_vertices[i].clone();
    let action_idx = advice.net.vertex_index(&action_name).expect("validated");
    let domain = advice.net.vertices()[action_idx].domain.clone();
    advice.net.value_index(action_idx, a)?;
    let b_idx = advice.net.value_index(action_idx, b)?;
    let marginal = infer(&advice.net, &action_name, a, &BTreeMap::new())?;
    if marginal.is_zero() {
        return Err(BayesError::ZeroConditioning);
    }

    // Advice net extended with the constant-b vertex for player i.
    let constant_name = format!("{action_name}__deviation");
    if advice.net.vertex_index(&constant_name).is_some()
        || trans.net.vertex_index(&constant_name).is_some()
    {
        return Err(BayesError::NameCollision(constant_name));
    }
    let mut dirac = vec![Rational::zero(); domain.len()];
    dirac[b_idx] = Rational::one();
    let mut advice_vertices = advice.net.vertices().to_vec();
    advice_vertices.push(Vertex {
        name: constant_name,
        domain,
        parents: Vec::new(),
        theta: Theta::Prior(dirac),
    });
    let constant_idx = advice_vertices.len() - 1;
    let extended = AdviceNet::new(BayesNet::new(advice_vertices)?, advice.action_vertices.clone())?;

    let vertices = wire(&extended, trans, |input| {
        if input == i {
            Some(constant_idx)
        } else {
            None
        }
    })?;
    Ok(DeviationNet {
        net: BayesNet::new(vertices)?,
        evidence: (action_name, a.to_string()),
        outputs: trans.output_vertices.clone(),
    })
}

// ---- Unfolding to explicit models ------------------------------------------------

/// The explicit part of a succinctly-specified model: everything except
/// the advice and transition tables.
#[derive(Debug, Clone)]
pub struct GameSkeleton {
    pub states: Vec<StateId>,
    pub initial: StateId,
    pub players: Vec<PlayerId>,
    pub actions: Vec<ActionId>,
    pub availability: BTreeMap<(StateId, PlayerId), Vec<ActionId>>,
    pub goals: BTreeMap<PlayerId, BTreeSet<StateId>>,
}

/// Expands per-state advice and transition networks into an explicit game
/// and advice pair by querying joint and conditional marginals, guarding
/// against exponential blow-up with a per-state joint-action budget.
pub fn unfold(
    skeleton: &GameSkeleton,
    advice_nets: &BTreeMap<StateId, AdviceNet>,
    trans_nets: &BTreeMap<StateId, TransitionNet>,
    budget: u128,
) -> Result<(Game, ControllerAdvice), BayesError> {
    for q in advice_nets.keys().chain(trans_nets.keys()) {
        if !skeleton.states.contains(q) {
            return Err(BayesError::UnexpectedNet { state: q.clone() });
        }
    }
    let mut transitions = Vec::new();
    let mut tables: BTreeMap<StateId, Vec<AdviceRow>> = BTreeMap::new();

    for q in &skeleton.states {
        let advice = advice_nets
            .get(q)
            .ok_or_else(|| BayesError::MissingNet { state: q.clone() })?;
        let trans = trans_nets
            .get(q)
            .ok_or_else(|| BayesError::MissingNet { state: q.clone() })?;
        if advice.action_vertices.len() != skeleton.players.len()
            || trans.input_vertices.len() != skeleton.players.len()
        {
            return Err(BayesError::PlayerCountMismatch {
                expected: skeleton.players.len(),
                got: advice.action_vertices.len(),
            });
        }

        // Per-player availability lists, with exact domain agreement.
        let mut lists: Vec<Vec<ActionId>> = Vec::with_capacity(skeleton.players.len());
        for (i, p) in skeleton.players.iter().enumerate() {
            let available = skeleton
                .availability
                .get(&(q.clone(), p.clone()))
                .ok_or_else(|| {
                    BayesError::Model(ModelError::MissingAvailability {
                        state: q.as_str().to_string(),
                        player: p.as_str().to_string(),
                    })
                })?;
            let expected: Vec<String> = available.iter().map(|a| a.as_str().to_string()).collect();
            for (net, name) in [
                (&advice.net, &advice.action_vertices[i]),
                (&trans.net, &trans.input_vertices[i]),
            ] {
                let k = net.vertex_index(name).expect("validated");
                if net.vertices()[k].domain != expected {
                    return Err(BayesError::DomainMismatch {
                        vertex: name.clone(),
                        expected,
                        got: net.vertices()[k].domain.clone(),
                    });
                }
            }
            lists.push(available.clone());
        }

        let size: u128 = lists.iter().map(|l| l.len() as u128).product();
        if size > budget {
            return Err(BayesError::BudgetExceeded {
                state: q.clone(),
                size,
                budget,
            });
        }

        // Walk the joint actions in availability order (the game's order).
        let mut digits = vec![0usize; lists.len()];
        let mut rows = Vec::new();
        for _ in 0..size {
            let joint: Vec<ActionId> = digits
                .iter()
                .zip(&lists)
                .map(|(&d, l)| l[d].clone())
                .collect();
            let values: Vec<&str> = joint.iter().map(|a| a.as_str()).collect();

            // Advice probability: the joint marginal of the action vertices.
            let mut evidence = BTreeMap::new();
            for (name, value) in advice.action_vertices.iter().zip(&values) {
                let var = advice.net.vertex_index(name).expect("validated");
                evidence.insert(var, advice.net.value_index(var, value)?);
            }
            let prob = probability_of_evidence(&advice.net, &evidence)?;
            if prob.is_positive() {
                rows.push(AdviceRow {
                    action: JointAction::new(joint.clone()),
                    prob,
                });
            }

            // Transition row: every output marginal under the instantiation.
            let instantiated = trans.instantiate(&values)?;
            let mut successors = Vec::new();
            for (vertex, state) in &trans.output_vertices {
                let p = infer(&instantiated, vertex, "1", &BTreeMap::new())?;
                if p.is_positive() {
                    successors.push((state.clone(), p));
                }
            }
            transitions.push((q.clone(), JointAction::new(joint), successors));

            for k in (0..lists.len()).rev() {
                digits[k] += 1;
                if digits[k] < lists[k].len() {
                    break;
                }
                digits[k] = 0;
            }
        }
        tables.insert(q.clone(), rows);
    }

    let game = Game::from_data(GameData {
        states: skeleton.states.clone(),
        initial: skeleton.initial.clone(),
        players: skeleton.players.clone(),
        actions: skeleton.actions.clone(),
        availability: skeleton.availability.clone(),
        transitions,
        goals: skeleton.goals.clone(),
    })?;
    let advice = ControllerAdvice::from_tables(tables, &game)?;
    Ok((game, advice))
}

// ---- Document format ------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
enum InputTag {
    #[serde(rename = "input")]
    Input,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ThetaDoc {
    Input(InputTag),
    Prior { prior: Vec<Rational> },
    Cpt { cpt: Vec<Vec<Rational>> },
    CptRef { cpt_ref: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VertexDoc {
    name: String,
    domain: Vec<String>,
    #[serde(default)]
    parents: Vec<String>,
    theta: ThetaDoc,
}

/// On-disk network: vertices with named parents, plus optional shared
/// conditional tables referenced by `cpt_ref` (keeps repeated structure,
/// like copy layers, linear-size on disk).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetDoc {
    vertices: Vec<VertexDoc>,
    #[serde(default)]
    tables: BTreeMap<String, Vec<Vec<Rational>>>,
}

fn net_from_doc(doc: &NetDoc) -> Result<BayesNet, BayesError> {
    let index: BTreeMap<&str, usize> = doc
        .vertices
        .iter()
        .enumerate()
        .map(|(k, v)| (v.name.as_str(), k))
        .collect();
    let mut vertices = Vec::with_capacity(doc.vertices.len());
    for v in &doc.vertices {
        let parents = v
            .parents
            .iter()
            .map(|p| {
                index
                    .get(p.as_str())
                    .copied()
                    .ok_or_else(|| BayesError::UnknownVertex(p.clone()))
            })
            .collect::<Result<Vec<usize>, BayesError>>()?;
        let theta = match &v.theta {
            ThetaDoc::Input(InputTag::Input) => Theta::Input,
            ThetaDoc::Prior { prior } => Theta::Prior(prior.clone()),
            ThetaDoc::Cpt { cpt } => Theta::Cpt(cpt.clone()),
            ThetaDoc::CptRef { cpt_ref } => Theta::Cpt(
                doc.tables
                    .get(cpt_ref)
                    .cloned()
                    .ok_or_else(|| BayesError::UnknownVertex(format!("table {cpt_ref}")))?,
            ),
        };
        vertices.push(Vertex {
            name: v.name.clone(),
            domain: v.domain.clone(),
            parents,
            theta,
        });
    }
    BayesNet::new(vertices)
}

/// Parses a plain network document.
pub fn parse_net(text: &str) -> Result<BayesNet, BayesError> {
    let doc: NetDoc = serde_json::from_str(text).map_err(|e| BayesError::Syntax(e.to_string()))?;
    net_from_doc(&doc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdviceNetDoc {
    #[serde(flatten)]
    net: NetDoc,
    actions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TransitionNetDoc {
    #[serde(flatten)]
    net: NetDoc,
    inputs: Vec<String>,
    outputs: BTreeMap<String, String>,
}

/// Parses an advice network document (net plus designated action vertices).
pub fn parse_advice_net(text: &str) -> Result<AdviceNet, BayesError> {
    let doc: AdviceNetDoc =
        serde_json::from_str(text).map_err(|e| BayesError::Syntax(e.to_string()))?;
    AdviceNet::new(net_from_doc(&doc.net)?, doc.actions)
}

/// Parses a transition network document (net plus inputs and the output
/// vertex-to-state map).
pub fn parse_transition_net(text: &str) -> Result<TransitionNet, BayesError> {
    let doc: TransitionNetDoc =
        serde_json::from_str(text).map_err(|e| BayesError::Syntax(e.to_string()))?;
    let outputs = doc
        .outputs
        .iter()
        .map(|(vertex, state)| (vertex.clone(), StateId::new(state.clone())))
        .collect();
    TransitionNet::new(net_from_doc(&doc.net)?, doc.inputs, outputs)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonDoc {
    states: Vec<String>,
    initial: String,
    players: Vec<String>,
    actions: Vec<String>,
    availability: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    goals: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UnfoldDoc {
    skeleton: SkeletonDoc,
    advice: BTreeMap<String, AdviceNetDoc>,
    transitions: BTreeMap<String, TransitionNetDoc>,
}

/// Parses a full succinct model document: skeleton plus per-state advice
/// and transition networks.
pub fn parse_unfold_model(
    text: &str,
) -> Result<
    (
        GameSkeleton,
        BTreeMap<StateId, AdviceNet>,
        BTreeMap<StateId, TransitionNet>,
    ),
    BayesError,
> {
    let doc: UnfoldDoc =
        serde_json::from_str(text).map_err(|e| BayesError::Syntax(e.to_string()))?;
    let mut availability = BTreeMap::new();
    for (state, players) in &doc.skeleton.availability {
        for (player, actions) in players {
            availability.insert(
                (StateId::new(state.clone()), PlayerId::new(player.clone())),
                actions.iter().map(|a| ActionId::new(a.clone())).collect(),
            );
        }
    }
    let skeleton = GameSkeleton {
        states: doc.skeleton.states.iter().map(StateId::new).collect(),
        initial: StateId::new(doc.skeleton.initial.clone()),
        players: doc.skeleton.players.iter().map(PlayerId::new).collect(),
        actions: doc.skeleton.actions.iter().map(ActionId::new).collect(),
        availability,
        goals: doc
            .skeleton
            .goals
            .iter()
            .map(|(p, states)| {
                (
                    PlayerId::new(p.clone()),
                    states.iter().map(StateId::new).collect(),
                )
            })
            .collect(),
    };
    let mut advice_nets = BTreeMap::new();
    for (state, net_doc) in &doc.advice {
        advice_nets.insert(
            StateId::new(state.clone()),
            AdviceNet::new(net_from_doc(&net_doc.net)?, net_doc.actions.clone())?,
        );
    }
    let mut trans_nets = BTreeMap::new();
    for (state, net_doc) in &doc.transitions {
        let outputs = net_doc
            .outputs
            .iter()
            .map(|(vertex, state)| (vertex.clone(), StateId::new(state.clone())))
            .collect();
        trans_nets.insert(
            StateId::new(state.clone()),
            TransitionNet::new(net_from_doc(&net_doc.net)?, net_doc.inputs.clone(), outputs)?,
        );
    }
    Ok((skeleton, advice_nets, trans_nets))
}
