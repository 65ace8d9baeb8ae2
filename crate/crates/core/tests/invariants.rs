use monstor::cascade::{exact_influence, exact_set_influence, simulate};
use monstor::im::{greedy_select, lazy_greedy_select, Backend};
use monstor::model::{forward_step, stacked_inference, upper_bound, Hyper, ModelParams};
use monstor::{DirectedGraph, InfectionVector, NodeId, SeedSet};
use proptest::prelude::*;

/// Up to 12 distinct edges without self-loops on `n` nodes.
fn arb_graph() -> impl Strategy<Value = DirectedGraph> {
    (3usize..=7).prop_flat_map(|n| {
        let pairs: Vec<(NodeId, NodeId)> = (0..n as NodeId)
            .flat_map(|u| (0..n as NodeId).filter(move |&v| v != u).map(move |v| (u, v)))
            .collect();
        let most = pairs.len().min(12);
        (
            Just(n),
            proptest::sample::subsequence(pairs, 1..=most),
            proptest::collection::vec(0.1f64..=0.9, 12),
        )
            .prop_map(|(n, pairs, probs)| {
                let edges: Vec<_> = pairs.iter().zip(&probs).map(|(&(u, v), &p)| (u, v, p)).collect();
                DirectedGraph::from_edges(n, &edges).unwrap()
            })
    })
}

fn arb_graph_and_seeds() -> impl Strategy<Value = (DirectedGraph, SeedSet)> {
    arb_graph().prop_flat_map(|g| {
        let n = g.node_count();
        let seeds = proptest::sample::subsequence((0..n as NodeId).collect::<Vec<_>>(), 1..=n)
            .prop_map(move |s| SeedSet::new(s, n).unwrap());
        (Just(g), seeds)
    })
}

/// Newest-first cumulative history built from nonnegative increments.
fn arb_history(n: usize, e: usize) -> impl Strategy<Value = Vec<InfectionVector>> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..0.4, n), e).prop_map(move |steps| {
        let mut cur = vec![0.0; n];
        let mut oldest_first = Vec::with_capacity(steps.len());
        for inc in steps {
            for (x, d) in cur.iter_mut().zip(inc) {
                *x = (*x + d).min(1.0);
            }
            oldest_first.push(InfectionVector::new(cur.clone()).unwrap());
        }
        oldest_first.reverse();
        oldest_first
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_steps_respect_union_bound((g, seeds) in arb_graph_and_seeds()) {
        let steps = exact_influence(&g, &seeds).unwrap().per_step;
        let zero = InfectionVector::zeros(g.node_count());
        for i in 1..steps.len() {
            let older = if i >= 2 { steps[i - 2].clone() } else { zero.clone() };
            let u = upper_bound(&[steps[i - 1].clone(), older], &g).unwrap();
            for v in 0..g.node_count() {
                prop_assert!(steps[i][v] <= u[v] + 1e-9, "step {i} node {v}: {} > {}", steps[i][v], u[v]);
            }
        }
    }

    #[test]
    fn mc_steps_are_monotone_and_seeded((g, seeds) in arb_graph_and_seeds(), master in any::<u64>()) {
        let sim = simulate(&g, &seeds, 300, master).unwrap();
        for &s in seeds.nodes() {
            prop_assert_eq!(sim.per_step[0][s as usize], 1.0);
        }
        for w in sim.per_step.windows(2) {
            prop_assert!(w[1].iter().zip(w[0].iter()).all(|(b, a)| b >= a));
        }
        prop_assert!((sim.final_vector().total() - sim.influence).abs() < 1e-9);
    }

    #[test]
    fn step_output_is_clamped(
        (g, history) in arb_graph().prop_flat_map(|g| { let n = g.node_count(); (Just(g), arb_history(n, 3)) }),
        seed in any::<u64>(),
        hidden in 1usize..6,
        scale in prop_oneof![Just(0.1), Just(1.0), Just(30.0)],
    ) {
        let mut params = ModelParams::init(Hyper::new(3, 2, hidden, 1, 0.3), seed).unwrap();
        let flat: Vec<f64> = params.to_flat().iter().map(|x| x * scale).collect();
        params.set_flat(&flat).unwrap();
        let out = forward_step(&g, &history, &params).unwrap();
        let u = upper_bound(&history, &g).unwrap();
        for v in 0..g.node_count() {
            prop_assert!(out[v] >= history[0][v]);
            prop_assert!(out[v] <= u[v].min(1.0));
        }
    }

    #[test]
    fn stacked_estimates_never_decrease((g, seeds) in arb_graph_and_seeds(), seed in any::<u64>()) {
        let params = ModelParams::init(Hyper::new(3, 3, 4, 5, 0.3), seed).unwrap();
        let est = stacked_inference(&g, &seeds, &params).unwrap();
        prop_assert_eq!(est.vectors.len(), 6);
        for w in est.vectors.windows(2) {
            prop_assert!(w[1].iter().zip(w[0].iter()).all(|(b, a)| b >= a));
        }
        prop_assert!(est.influence <= g.node_count() as f64);
    }

    #[test]
    fn lazy_greedy_matches_greedy(g in arb_graph(), k in 1usize..=3) {
        let k = k.min(g.node_count());
        let eager = greedy_select(&g, k, &Backend::Exact).unwrap();
        let lazy = lazy_greedy_select(&g, k, &Backend::Exact).unwrap();
        prop_assert_eq!(&eager.seeds, &lazy.seeds);
        prop_assert_eq!(eager.influence, exact_set_influence(&g, eager.seeds.nodes()).unwrap());
    }

    #[test]
    fn exact_influence_is_submodular((g, a) in arb_graph_and_seeds(), extra in any::<proptest::sample::Index>()) {
        // f(A + v) - f(A) <= f(B + v) - f(B) for B a subset of A, with B = A minus its first node
        let n = g.node_count();
        let v = extra.index(n) as NodeId;
        prop_assume!(!a.contains(v));
        let big: Vec<NodeId> = a.nodes().to_vec();
        let small: Vec<NodeId> = big[1..].to_vec();
        let with = |s: &[NodeId]| { let mut t = s.to_vec(); t.push(v); t };
        let f = |s: &[NodeId]| exact_set_influence(&g, s).unwrap();
        let gain_big = f(&with(&big)) - f(&big);
        let gain_small = f(&with(&small)) - f(&small);
        prop_assert!(gain_big <= gain_small + 1e-12, "{gain_big} > {gain_small}");
    }
}
