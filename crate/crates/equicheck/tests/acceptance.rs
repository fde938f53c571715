//! Acceptance gate: one test per criterion, each printing a PASS line with
//! its measured runtime. Tolerances are pinned: equilibrium values, hitting
//! probabilities, and table entries are compared as exact rationals (zero
//! tolerance); only the Monte-Carlo criterion uses its stated statistical
//! bound (six sigma plus the exact truncation mass).

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use equicheck::analysis::{classify, hitting_all, payoff_under_d, prune};
use equicheck::bayes::{infer, parse_unfold_model, unfold, BayesNet, Theta};
use equicheck::cvp::{enumerate_circuits, eval_circuit, random_circuit, reduce};
use equicheck::model::{
    parse_advice, parse_game, ActionId, AdviceRow, ControllerAdvice, Game, GameData, JointAction,
    PlayerId, StateId,
};
use equicheck::oracle::{
    brute_force_ce, brute_force_spce, random_instance, simulate, truncation_bound,
    RandomModelConfig, DEFAULT_POLICY_CAP,
};
use equicheck::product::{build_chain, build_mdp, ProductState};
use equicheck::rational::Rational;
use equicheck::solver::{follow_d_policy, policy_value_all, q_value, solve_mdp};
use equicheck::verify::{verify_all, verify_ce, verify_spce};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn r(s: &str) -> Rational {
    s.parse().unwrap()
}

fn fixture(game: &str, advice: &str) -> (Game, ControllerAdvice) {
    let g = parse_game(game).unwrap();
    let d = parse_advice(advice, &g).unwrap();
    (g, d)
}

const CHICKEN_GAME: &str = include_str!("../../../docs/fixtures/chicken.game.json");
const CHICKEN_ADVICE: &str = include_str!("../../../docs/fixtures/chicken.advice.json");
const MARKET_GAME: &str = include_str!("../../../docs/fixtures/market-entry.game.json");
const MARKET_EXIT_FIGHT: &str =
    include_str!("../../../docs/fixtures/market-entry-exit-fight.advice.json");
const MARKET_ENTER_PASS: &str =
    include_str!("../../../docs/fixtures/market-entry-enter-pass.advice.json");
const DISCONTINUITY_GAME: &str = include_str!("../../../docs/fixtures/discontinuity.game.json");
const DISCONTINUITY_HALF: &str =
    include_str!("../../../docs/fixtures/discontinuity-half.advice.json");
const DISCONTINUITY_ZERO: &str =
    include_str!("../../../docs/fixtures/discontinuity-zero.advice.json");

#[test]
fn criterion_1_named_fixtures_are_exact() {
    let mut total = Duration::ZERO;
    let mut timed = |name: &str, body: &mut dyn FnMut()| {
        let clock = Instant::now();
        body();
        let elapsed = clock.elapsed();
        assert!(elapsed < Duration::from_secs(1), "{name} took {elapsed:?}");
        total += elapsed;
    };

    timed("chicken", &mut || {
        let (g, d) = fixture(CHICKEN_GAME, CHICKEN_ADVICE);
        assert!(verify_ce(&g, &d).holds);
        let row: PlayerId = "row".into();
        let chain = build_chain(&g, &d, &row).unwrap();
        let mdp = build_mdp(&g, &d, &row).unwrap();
        let h = hitting_all(&chain);
        let told_c = ProductState::Advised("q0".into(), "C".into());
        assert_eq!(h.get(&told_c).unwrap(), &r("4/7"));
        assert_eq!(q_value(&mdp, &h, &told_c, &"D".into()).unwrap(), r("1/2"));
    });

    timed("market-entry exit-fight", &mut || {
        let (g, d) = fixture(MARKET_GAME, MARKET_EXIT_FIGHT);
        let report = verify_all(&g, &d);
        assert!(report.ce.holds);
        assert!(!report.spce.holds);
        let w = report.spce.witness.unwrap();
        assert_eq!(w.player, "p2".into());
        assert_eq!(w.state, "p2state".into());
        assert_eq!(w.recommended, "fight".into());
        assert_eq!(w.alternative, "pass".into());
        assert_eq!(w.value_following, r("0"));
        assert_eq!(w.value_deviating, r("2/5"));
    });

    timed("market-entry enter-pass", &mut || {
        let (g, d) = fixture(MARKET_GAME, MARKET_ENTER_PASS);
        let report = verify_all(&g, &d);
        assert!(report.ce.holds);
        assert!(report.spce.holds);
    });

    timed("discontinuity", &mut || {
        let g = parse_game(DISCONTINUITY_GAME).unwrap();
        let agent: PlayerId = "agent".into();
        let half = parse_advice(DISCONTINUITY_HALF, &g).unwrap();
        assert!(payoff_under_d(&g, &half, &agent, &"q0".into()).is_one());
        let zero = parse_advice(DISCONTINUITY_ZERO, &g).unwrap();
        assert!(payoff_under_d(&g, &zero, &agent, &"q0".into()).is_zero());
    });

    println!("PASS criterion 1: named fixtures exact in {total:?} (< 1 s each)");
}

#[test]
fn criterion_2_cvp_reduction_decides_circuits() {
    let clock = Instant::now();
    let mut checked = 0usize;
    for n in 1..=4 {
        for circuit in enumerate_circuits(n) {
            let (g, d) = reduce(&circuit);
            assert_eq!(
                verify_ce(&g, &d).holds,
                !eval_circuit(&circuit),
                "disagreement on {circuit:?}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 2 + 8 + 80 + 1600);

    let mut rng = ChaCha12Rng::seed_from_u64(0xC1FC);
    for _ in 0..500 {
        let circuit = random_circuit(&mut rng, 10);
        let (g, d) = reduce(&circuit);
        assert_eq!(
            verify_ce(&g, &d).holds,
            !eval_circuit(&circuit),
            "disagreement on {circuit:?}"
        );
        checked += 1;
    }

    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    println!("PASS criterion 2: {checked} circuits decided, 100% agreement, in {elapsed:?} (< 60 s)");
}

#[test]
fn criterion_3_verifiers_match_brute_force_oracles() {
    let clock = Instant::now();
    let config = RandomModelConfig::default();
    for seed in 0..1000u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (g, d) = random_instance(&mut rng, &config);

        let ce = verify_ce(&g, &d);
        let brute_ce = brute_force_ce(&g, &d, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(ce.holds, brute_ce, "CE disagreement at seed {seed}");

        let spce = verify_spce(&g, &d);
        let brute = brute_force_spce(&g, &d, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(spce.holds, brute.holds, "SPCE disagreement at seed {seed}");
        if let (Some(a), Some(b)) = (&spce.witness, &brute.witness) {
            assert_eq!(
                (&a.player, &a.state, &a.recommended, &a.alternative),
                (&b.player, &b.state, &b.recommended, &b.alternative),
                "witness disagreement at seed {seed}"
            );
        }
    }
    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!("PASS criterion 3: 1000 random games, zero tolerance, in {elapsed:?} (< 5 min)");
}

#[test]
fn criterion_4_structural_invariants_hold_on_random_models() {
    let clock = Instant::now();
    let config = RandomModelConfig::default();
    for seed in 2000..2250u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (g, d) = random_instance(&mut rng, &config);

        for player in g.players() {
            let chain = build_chain(&g, &d, player).unwrap();

            // Row stochasticity, exactly.
            for s in 0..chain.len() {
                let sum: Rational = chain.row(s).iter().map(|(_, p)| p.clone()).sum();
                assert!(sum.is_one(), "row sum off at seed {seed}");
            }

            // The hitting vector is a Bellman fixed point, exactly.
            let h = hitting_all(&chain);
            for s in 0..chain.len() {
                let expected = if chain.is_goal(s) {
                    Rational::one()
                } else {
                    chain.row(s).iter().map(|(t, p)| p * h.at(*t)).sum()
                };
                assert_eq!(h.at(s), &expected, "fixed point off at seed {seed}");
            }

            // Pruned chains are weakly chained (graph check).
            let anchor = ProductState::Plain(g.initial().clone());
            if let Ok(pruned) = prune(&chain, &classify(&chain, &anchor)) {
                assert!(pruned.weakly_chained(), "not weakly chained at seed {seed}");
            }

            // The optimal deviation values dominate following the advice.
            let mdp = build_mdp(&g, &d, player).unwrap();
            let solution = solve_mdp(&mdp, &anchor);
            let follow = policy_value_all(&mdp, &follow_d_policy(&mdp)).unwrap();
            for s in 0..mdp.len() {
                assert!(
                    solution.values.at(s) >= follow.at(s),
                    "dominance off at seed {seed}"
                );
            }
        }

        // Subgame perfection implies the initial-state equilibrium.
        if verify_spce(&g, &d).holds {
            assert!(verify_ce(&g, &d).holds, "implication off at seed {seed}");
        }
    }
    let elapsed = clock.elapsed();
    println!("PASS criterion 4: structural invariants on 250 random models in {elapsed:?}");
}

/// Explicit construction of the parity model with k source bits: the last
/// player's action alone decides between the goal sink and the dead sink,
/// and the advice plays the k uniform bits, their copies, and the parity.
fn xor_explicit(k: usize) -> (Game, ControllerAdvice) {
    let n = 2 * k + 1;
    let players: Vec<PlayerId> = (1..=n).map(|i| PlayerId::new(format!("P{i}"))).collect();
    let states: Vec<StateId> = vec!["q0".into(), "done".into(), "dead".into()];
    let a = ActionId::new("a");
    let b = ActionId::new("b");

    let mut availability = BTreeMap::new();
    for p in &players {
        availability.insert(("q0".into(), p.clone()), vec![a.clone(), b.clone()]);
        availability.insert(("done".into(), p.clone()), vec![a.clone()]);
        availability.insert(("dead".into(), p.clone()), vec![a.clone()]);
    }

    let mut transitions = Vec::new();
    for bits in 0..1u32 << n {
        let joint: Vec<ActionId> = (0..n)
            .map(|i| {
                if (bits >> (n - 1 - i)) & 1 == 1 {
                    b.clone()
                } else {
                    a.clone()
                }
            })
            .collect();
        let target: StateId = if bits & 1 == 1 { "done".into() } else { "dead".into() };
        transitions.push((
            StateId::new("q0"),
            JointAction::new(joint),
            vec![(target, Rational::one())],
        ));
    }
    for sink in ["done", "dead"] {
        transitions.push((
            StateId::new(sink),
            JointAction::new(vec![a.clone(); n]),
            vec![(StateId::new(sink), Rational::one())],
        ));
    }

    let mut goals: BTreeMap<PlayerId, BTreeSet<StateId>> = BTreeMap::new();
    for p in &players {
        goals.insert(p.clone(), std::iter::once(StateId::new("done")).collect());
    }

    let game = Game::from_data(GameData {
        states,
        initial: "q0".into(),
        players,
        actions: vec![a.clone(), b.clone()],
        availability,
        transitions,
        goals,
    })
    .unwrap();

    let mut tables = BTreeMap::new();
    let mut rows = Vec::new();
    for bits in 0..1u32 << k {
        let mut joint = Vec::with_capacity(n);
        for i in 0..k {
            joint.push(if (bits >> (k - 1 - i)) & 1 == 1 {
                b.clone()
            } else {
                a.clone()
            });
        }
        for i in 0..k {
            joint.push(joint[i].clone());
        }
        joint.push(if bits.count_ones() % 2 == 1 {
            b.clone()
        } else {
            a.clone()
        });
        rows.push(AdviceRow {
            action: JointAction::new(joint),
            prob: Rational::pow2_inverse(k as u32),
        });
    }
    tables.insert(StateId::new("q0"), rows);
    for sink in ["done", "dead"] {
        tables.insert(
            StateId::new(sink),
            vec![AdviceRow {
                action: JointAction::new(vec![a.clone(); n]),
                prob: Rational::one(),
            }],
        );
    }
    let advice = ControllerAdvice::from_tables(tables, &game).unwrap();
    (game, advice)
}

/// Joint-enumeration marginal, independent of the elimination engine.
fn brute_marginal(net: &BayesNet, query: &str, value: &str) -> Rational {
    let sizes: Vec<usize> = net.vertices().iter().map(|v| v.domain.len()).collect();
    let q = net.vertex_index(query).unwrap();
    let v = net.vertices()[q]
        .domain
        .iter()
        .position(|d| d == value)
        .unwrap();
    let total: usize = sizes.iter().product();
    let mut digits = vec![0usize; sizes.len()];
    let mut sum = Rational::zero();
    for _ in 0..total {
        if digits[q] == v {
            let mut p = Rational::one();
            for (k, vertex) in net.vertices().iter().enumerate() {
                let row: &[Rational] = match &vertex.theta {
                    Theta::Prior(row) => row,
                    Theta::Cpt(rows) => {
                        let mut idx = 0;
                        for &parent in &vertex.parents {
                            idx = idx * net.vertices()[parent].domain.len() + digits[parent];
                        }
                        &rows[idx]
                    }
                    Theta::Input => panic!("input vertex in enumeration"),
                };
                p = p * &row[digits[k]];
            }
            sum = sum + p;
        }
        for k in (0..sizes.len()).rev() {
            digits[k] += 1;
            if digits[k] < sizes[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    sum
}

#[test]
fn criterion_5_succinct_networks_unfold_exactly() {
    let clock = Instant::now();
    let models = [
        (1usize, include_str!("../../../docs/fixtures/xor-k1.model.json")),
        (2, include_str!("../../../docs/fixtures/xor-k2.model.json")),
        (3, include_str!("../../../docs/fixtures/xor-k3.model.json")),
    ];
    for (k, text) in models {
        let n = 2 * k + 1;
        let (skeleton, advice_nets, trans_nets) = parse_unfold_model(text).unwrap();
        let advice_net = &advice_nets[&StateId::new("q0")];
        let empty = BTreeMap::new();

        // Parity marginal and copy layer, exactly.
        let top = format!("A{n}");
        assert_eq!(infer(&advice_net.net, &top, "b", &empty).unwrap(), r("1/2"));
        for i in 1..=k {
            for value in ["a", "b"] {
                let mut ev = BTreeMap::new();
                ev.insert(format!("A{i}"), value.to_string());
                assert_eq!(
                    infer(&advice_net.net, &format!("A{}", k + i), value, &ev).unwrap(),
                    r("1")
                );
            }
        }

        // The elimination engine matches joint enumeration on every vertex
        // of the fixture nets (all far below 2^16 joint assignments).
        for vertex in advice_net.net.vertices() {
            for value in &vertex.domain {
                assert_eq!(
                    infer(&advice_net.net, &vertex.name, value, &empty).unwrap(),
                    brute_marginal(&advice_net.net, &vertex.name, value)
                );
            }
        }
        let instantiated = trans_nets[&StateId::new("q0")]
            .instantiate(&vec!["a"; n])
            .unwrap();
        for vertex in instantiated.vertices() {
            for value in &vertex.domain {
                assert_eq!(
                    infer(&instantiated, &vertex.name, value, &empty).unwrap(),
                    brute_marginal(&instantiated, &vertex.name, value)
                );
            }
        }

        // Unfolding reproduces the explicit model exactly, advice included:
        // 2^k rows of 1/2^k at the decision state.
        let (game, advice) = unfold(&skeleton, &advice_nets, &trans_nets, 4096).unwrap();
        let table = advice.table(&"q0".into());
        assert_eq!(table.len(), 1 << k);
        for row in table {
            assert_eq!(row.prob, Rational::pow2_inverse(k as u32));
        }

        let (explicit_game, explicit_advice) = xor_explicit(k);
        assert_eq!(game, explicit_game);
        assert_eq!(advice, explicit_advice);
        let unfolded_report = verify_all(&game, &advice);
        let explicit_report = verify_all(&explicit_game, &explicit_advice);
        assert_eq!(unfolded_report.ce, explicit_report.ce);
        assert_eq!(unfolded_report.spce, explicit_report.spce);

        // The parity player profitably deviates to always-b, so the advice
        // is no equilibrium; the witness names that player.
        assert!(!unfolded_report.ce.holds);
        assert_eq!(
            unfolded_report.ce.witness.unwrap().player,
            PlayerId::new(format!("P{n}"))
        );
    }

    // The k = 1 hand-written encoding agrees with both paths.
    let (hand_game, hand_advice) = fixture(
        include_str!("../../../docs/fixtures/xor-k1-explicit.game.json"),
        include_str!("../../../docs/fixtures/xor-k1-explicit.advice.json"),
    );
    let (code_game, code_advice) = xor_explicit(1);
    assert_eq!(hand_game, code_game);
    assert_eq!(hand_advice, code_advice);

    let elapsed = clock.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!("PASS criterion 5: parity networks k in {{1,2,3}} unfold exactly in {elapsed:?} (< 2 min)");
}

#[test]
fn criterion_6_simulation_tracks_exact_values() {
    let clock = Instant::now();
    let trials = 100_000u64;
    let horizon = 64u32;

    // Named fixtures with exact hitting values, then random instances
    // whose exact values come from the analytic engine.
    let mut fixtures: Vec<(Game, ControllerAdvice, PlayerId, StateId)> = Vec::new();
    let (g, d) = fixture(CHICKEN_GAME, CHICKEN_ADVICE);
    fixtures.push((g.clone(), d.clone(), "row".into(), "q0".into()));
    fixtures.push((g, d, "col".into(), "q0".into()));
    let (g, d) = fixture(MARKET_GAME, MARKET_EXIT_FIGHT);
    fixtures.push((g.clone(), d.clone(), "p1".into(), "start".into()));
    fixtures.push((g, d, "p2".into(), "start".into()));
    let (g, d) = fixture(MARKET_GAME, MARKET_ENTER_PASS);
    fixtures.push((g.clone(), d.clone(), "p1".into(), "start".into()));
    fixtures.push((g, d, "p2".into(), "p2state".into()));
    let g = parse_game(DISCONTINUITY_GAME).unwrap();
    let half = parse_advice(DISCONTINUITY_HALF, &g).unwrap();
    let zero = parse_advice(DISCONTINUITY_ZERO, &g).unwrap();
    fixtures.push((g.clone(), half, "agent".into(), "q0".into()));
    fixtures.push((g, zero, "agent".into(), "q0".into()));
    for seed in 7000..7012u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let (g, d) = random_instance(&mut rng, &RandomModelConfig::default());
        let player = g.players()[0].clone();
        let start = g.initial().clone();
        fixtures.push((g, d, player, start));
    }
    assert_eq!(fixtures.len(), 20);

    for (idx, (g, d, player, start)) in fixtures.iter().enumerate() {
        let seed = 9000 + idx as u64;
        let exact = payoff_under_d(g, d, player, start);
        let report = simulate(g, d, player, start, trials, horizon, seed);
        let trunc = truncation_bound(g, d, player, start, horizon);
        let p = exact.to_f64();
        let bound = 6.0 * (p * (1.0 - p) / trials as f64).sqrt() + trunc.to_f64();
        let diff = (report.estimate.to_f64() - p).abs();
        assert!(
            diff <= bound,
            "fixture {idx}: estimate {} vs exact {} exceeds {bound}",
            report.estimate,
            exact
        );

        // Bit-reproducibility of the full report.
        if idx < 3 {
            assert_eq!(report, simulate(g, d, player, start, trials, horizon, seed));
        }
    }

    let elapsed = clock.elapsed();
    println!("PASS criterion 6: 20 seeded simulations within 6-sigma + truncation in {elapsed:?}");
}
