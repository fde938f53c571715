//! Circuit-value gadget: reduces a monotone boolean circuit to a one-player
//! game and advice pair whose correlated-equilibrium check decides the
//! circuit.
//!
//! The construction routes the advised play into a fixed lottery `fp` that
//! pays 1 - 1/2^i + 1/2^(i+1) for an i-gate circuit, while a deviation may
//! enter the circuit instead: or-gates become two-action choice states,
//! and-gates become uncontrolled fair coins, and constant gates feed the
//! `true`/`false` sinks. A true circuit gives the deviator value 1 (beating
//! the lottery); a false circuit caps every policy at 1 - 1/2^i (losing to
//! it). The advice is therefore a correlated equilibrium exactly when the
//! circuit evaluates to false, which makes the generator a rich source of
//! labelled verification instances.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    ActionId, AdviceRow, ControllerAdvice, Game, GameData, JointAction, PlayerId, StateId,
};
use crate::rational::Rational;

/// Gate kinds. Constant gates ignore their operand fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    True,
    False,
    And,
    Or,
}

/// One gate: a kind plus two 1-based operand references (0 for constants).
/// Serializes as a `[kind, left, right]` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(GateKind, usize, usize)", into = "(GateKind, usize, usize)")]
pub struct Gate {
    pub kind: GateKind,
    pub left: usize,
    pub right: usize,
}

impl From<(GateKind, usize, usize)> for Gate {
    fn from((kind, left, right): (GateKind, usize, usize)) -> Gate {
        Gate { kind, left, right }
    }
}

impl From<Gate> for (GateKind, usize, usize) {
    fn from(g: Gate) -> (GateKind, usize, usize) {
        (g.kind, g.left, g.right)
    }
}

impl Gate {
    pub fn constant(value: bool) -> Gate {
        Gate {
            kind: if value { GateKind::True } else { GateKind::False },
            left: 0,
            right: 0,
        }
    }

    pub fn and(left: usize, right: usize) -> Gate {
        Gate {
            kind: GateKind::And,
            left,
            right,
        }
    }

    pub fn or(left: usize, right: usize) -> Gate {
        Gate {
            kind: GateKind::Or,
            left,
            right,
        }
    }
}

/// Rejected circuit documents.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CircuitError {
    #[error("a circuit needs at least one gate")]
    EmptyCircuit,
    #[error("output index {output} is not a gate index (1..={gates})")]
    OutputOutOfRange { output: usize, gates: usize },
    #[error("gate {gate} references {reference}, outside 1..={gates}")]
    ReferenceOutOfRange {
        gate: usize,
        reference: usize,
        gates: usize,
    },
    #[error("gate {gate} lies on a reference cycle")]
    CyclicReference { gate: usize },
}

/// A validated monotone circuit: gates with acyclic references and a
/// designated output gate. Indices are 1-based throughout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    gates: Vec<Gate>,
    output: usize,
}

impl Circuit {
    /// Validates gate references (in range for and/or, acyclic) and the
    /// output index. Constant gates' operand fields are normalized to 0.
    pub fn new(gates: Vec<Gate>, output: usize) -> Result<Circuit, CircuitError> {
        if gates.is_empty() {
            return Err(CircuitError::EmptyCircuit);
        }
        if output == 0 || output > gates.len() {
            return Err(CircuitError::OutputOutOfRange {
                output,
                gates: gates.len(),
            });
        }
        let mut gates = gates;
        let count = gates.len();
        for (k, gate) in gates.iter_mut().enumerate() {
            match gate.kind {
                GateKind::True | GateKind::False => {
                    gate.left = 0;
                    gate.right = 0;
                }
                GateKind::And | GateKind::Or => {
                    for reference in [gate.left, gate.right] {
                        if reference == 0 || reference > count {
                            return Err(CircuitError::ReferenceOutOfRange {
                                gate: k + 1,
                                reference,
                                gates: count,
                            });
                        }
                    }
                }
            }
        }
        // Three-color depth-first search for reference cycles.
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Gray,
            Black,
        }
        fn visit(gates: &[Gate], colors: &mut [Color], k: usize) -> Result<(), CircuitError> {
            colors[k] = Color::Gray;
            let gate = gates[k];
            if matches!(gate.kind, GateKind::And | GateKind::Or) {
                for reference in [gate.left, gate.right] {
                    match colors[reference - 1] {
                        Color::Gray => {
                            return Err(CircuitError::CyclicReference { gate: reference })
                        }
                        Color::White => visit(gates, colors, reference - 1)?,
                        Color::Black => {}
                    }
                }
            }
            colors[k] = Color::Black;
            Ok(())
        }
        let mut colors = vec![Color::White; gates.len()];
        for k in 0..gates.len() {
            if colors[k] == Color::White {
                visit(&gates, &mut colors, k)?;
            }
        }
        Ok(Circuit { gates, output })
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }
}

/// Standard circuit evaluation at the output gate, memoized over the DAG.
pub fn eval_circuit(circuit: &Circuit) -> bool {
    fn value(gates: &[Gate], memo: &mut [Option<bool>], k: usize) -> bool {
        if let Some(v) = memo[k] {
            return v;
        }
        let v = match gates[k].kind {
            GateKind::True => true,
            GateKind::False => false,
            GateKind::And => {
                value(gates, memo, gates[k].left - 1) && value(gates, memo, gates[k].right - 1)
            }
            GateKind::Or => {
                value(gates, memo, gates[k].left - 1) || value(gates, memo, gates[k].right - 1)
            }
        };
        memo[k] = Some(v);
        v
    }
    let mut memo = vec![None; circuit.gates.len()];
    value(&circuit.gates, &mut memo, circuit.output - 1)
}

fn gate_state(k: usize) -> StateId {
    StateId::new(format!("g{k}"))
}

/// Builds the one-player game and advice whose correlated-equilibrium check
/// decides the circuit: the advice routes play into the `fp` lottery with
/// success probability 1 - 1/2^i + 1/2^(i+1); entering the circuit instead
/// is profitable exactly when the circuit evaluates to true.
pub fn reduce(circuit: &Circuit) -> (Game, ControllerAdvice) {
    let n = circuit.len();
    let player = PlayerId::new("p1");
    let start = StateId::new("start");
    let fp = StateId::new("fp");
    let sink_true = StateId::new("true");
    let sink_false = StateId::new("false");

    let goto_fp = ActionId::new("goto-fp");
    let enter = ActionId::new("enter-circuit");
    let left = ActionId::new("left");
    let right = ActionId::new("right");
    let step = ActionId::new("step");

    let mut states = vec![start.clone(), fp.clone()];
    states.extend((1..=n).map(gate_state));
    states.push(sink_true.clone());
    states.push(sink_false.clone());

    let single = |a: &ActionId| JointAction::new(vec![a.clone()]);
    let one = Rational::one();

    let mut availability = BTreeMap::new();
    let mut transitions: Vec<(StateId, JointAction, Vec<(StateId, Rational)>)> = Vec::new();
    let mut tables: BTreeMap<StateId, Vec<AdviceRow>> = BTreeMap::new();
    let mut dirac = |q: &StateId, a: &ActionId| {
        tables.insert(
            q.clone(),
            vec![AdviceRow {
                action: single(a),
                prob: one.clone(),
            }],
        );
    };

    // Start: follow the advice to fp, or deviate into the circuit.
    availability.insert(
        (start.clone(), player.clone()),
        vec![goto_fp.clone(), enter.clone()],
    );
    transitions.push((start.clone(), single(&goto_fp), vec![(fp.clone(), one.clone())]));
    transitions.push((
        start.clone(),
        single(&enter),
        vec![(gate_state(circuit.output()), one.clone())],
    ));
    dirac(&start, &goto_fp);

    // fp: the calibration lottery, 1 - 1/2^n + 1/2^(n+1) to the goal.
    let win = Rational::one() - Rational::pow2_inverse(n as u32)
        + Rational::pow2_inverse(n as u32 + 1);
    let lose = Rational::one() - win.clone();
    availability.insert((fp.clone(), player.clone()), vec![step.clone()]);
    transitions.push((
        fp.clone(),
        single(&step),
        vec![(sink_true.clone(), win), (sink_false.clone(), lose)],
    ));
    dirac(&fp, &step);

    // Gates: or = player's choice of input, and = fair coin over inputs,
    // constants = deterministic edges to the sinks.
    for (k, gate) in circuit.gates().iter().enumerate() {
        let q = gate_state(k + 1);
        match gate.kind {
            GateKind::Or => {
                availability.insert((q.clone(), player.clone()), vec![left.clone(), right.clone()]);
                transitions.push((q.clone(), single(&left), vec![(gate_state(gate.left), one.clone())]));
                transitions.push((
                    q.clone(),
                    single(&right),
                    vec![(gate_state(gate.right), one.clone())],
                ));
                dirac(&q, &left);
            }
            GateKind::And => {
                availability.insert((q.clone(), player.clone()), vec![step.clone()]);
                let row = if gate.left == gate.right {
                    vec![(gate_state(gate.left), one.clone())]
                } else {
                    vec![
                        (gate_state(gate.left), Rational::ratio(1, 2)),
                        (gate_state(gate.right), Rational::ratio(1, 2)),
                    ]
                };
                transitions.push((q.clone(), single(&step), row));
                dirac(&q, &step);
            }
            GateKind::True | GateKind::False => {
                let sink = if gate.kind == GateKind::True {
                    sink_true.clone()
                } else {
                    sink_false.clone()
                };
                availability.insert((q.clone(), player.clone()), vec![step.clone()]);
                transitions.push((q.clone(), single(&step), vec![(sink, one.clone())]));
                dirac(&q, &step);
            }
        }
    }

    // Absorbing sinks keep the transition function total.
    for sink in [&sink_true, &sink_false] {
        availability.insert((sink.clone(), player.clone()), vec![step.clone()]);
        transitions.push((sink.clone(), single(&step), vec![(sink.clone(), one.clone())]));
        dirac(sink, &step);
    }

    let mut goals = BTreeMap::new();
    goals.insert(player.clone(), std::iter::once(sink_true.clone()).collect());

    let game = Game::from_data(GameData {
        states,
        initial: start,
        players: vec![player],
        actions: vec![goto_fp, enter, left, right, step],
        availability,
        transitions,
        goals,
    })
    .expect("the gadget is a valid game");
    let advice = ControllerAdvice::from_tables(tables, &game).expect("the gadget advice is valid");
    (game, advice)
}

/// Every circuit with exactly `n` gates in canonical form: operand
/// references point strictly earlier and the output is the last gate.
/// Counts: 2, 8, 80, 1600 for n = 1..4.
pub fn enumerate_circuits(n: usize) -> Vec<Circuit> {
    assert!(n >= 1);
    let options: Vec<Vec<Gate>> = (1..=n)
        .map(|k| {
            let mut opts = vec![Gate::constant(true), Gate::constant(false)];
            for l in 1..k {
                for r in 1..k {
                    opts.push(Gate::and(l, r));
                    opts.push(Gate::or(l, r));
                }
            }
            opts
        })
        .collect();
    let mut out = Vec::new();
    let mut picks = vec![0usize; n];
    loop {
        let gates: Vec<Gate> = picks.iter().enumerate().map(|(k, &p)| options[k][p]).collect();
        out.push(Circuit::new(gates, n).expect("canonical circuits are valid"));
        // Odometer increment, most significant digit first.
        let mut k = n;
        loop {
            if k == 0 {
                return out;
            }
            k -= 1;
            picks[k] += 1;
            if picks[k] < options[k].len() {
                break;
            }
            picks[k] = 0;
        }
    }
}

/// A random circuit with up to `max_gates` gates: gate 1 is a constant,
/// later gates draw a uniform kind with operands among earlier gates, and
/// the last gate is the output.
pub fn random_circuit<R: Rng>(rng: &mut R, max_gates: usize) -> Circuit {
    assert!(max_gates >= 1);
    let n = rng.gen_range(1..=max_gates);
    let mut gates = Vec::with_capacity(n);
    for k in 1..=n {
        let kind = if k == 1 {
            rng.gen_range(0..2)
        } else {
            rng.gen_range(0..4)
        };
        gates.push(match kind {
            0 => Gate::constant(true),
            1 => Gate::constant(false),
            2 => Gate::and(rng.gen_range(1..k), rng.gen_range(1..k)),
            _ => Gate::or(rng.gen_range(1..k), rng.gen_range(1..k)),
        });
    }
    Circuit::new(gates, n).expect("generated circuits are valid")
}

// ---- Document format ------------------------------------------------------------

/// On-disk circuit document: a list of `[kind, left, right]` triples plus
/// the 1-based output index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitDoc {
    pub gates: Vec<Gate>,
    pub output: usize,
}

/// Parses and validates a circuit document.
pub fn parse_circuit(text: &str) -> Result<Circuit, crate::model::ModelError> {
    let doc: CircuitDoc = serde_json::from_str(text)
        .map_err(|e| crate::model::ModelError::Syntax(e.to_string()))?;
    Circuit::new(doc.gates, doc.output)
        .map_err(|e| crate::model::ModelError::Syntax(e.to_string()))
}

/// Serializes a circuit to its document form.
pub fn serialize_circuit(circuit: &Circuit) -> String {
    serde_json::to_string_pretty(&CircuitDoc {
        gates: circuit.gates().to_vec(),
        output: circuit.output(),
    })
    .expect("circuit documents always serialize")
}
