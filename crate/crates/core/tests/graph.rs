use proptest::prelude::*;
use sbr_core::graph::EdgeWeighting;
use sbr_core::{Rng, SessionGraph};
use std::collections::BTreeSet;

fn check_invariants(prefix: &[u32], g: &SessionGraph) {
    let n = g.node_count();
    let nodes: BTreeSet<u32> = g.nodes().iter().copied().collect();
    assert_eq!(nodes.len(), n, "nodes not distinct");
    assert!(n <= prefix.len());
    assert_eq!(g.alias().len(), prefix.len());
    for (t, &item) in prefix.iter().enumerate() {
        assert_eq!(g.nodes()[g.alias()[t]], item);
    }
    for i in 0..n {
        for row in [g.a_in_row(i), g.a_out_row(i)] {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || (s - 1.0).abs() < 1e-9, "row sum {s}");
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
    let pairs: BTreeSet<(u32, u32)> = prefix.windows(2).map(|w| (w[0], w[1])).collect();
    assert_eq!(g.edge_count(), pairs.len());
    for i in 0..n {
        for j in 0..n {
            let edge = pairs.contains(&(g.nodes()[i], g.nodes()[j]));
            assert_eq!(g.a_out_row(i)[j] > 0.0, edge);
            assert_eq!(g.a_in_row(j)[i] > 0.0, edge);
        }
    }
}

#[test]
fn thousand_random_prefixes() {
    let mut rng = Rng::new(1);
    for _ in 0..1000 {
        let len = 1 + rng.below(20);
        let vocab = 1 + rng.below(12) as u32;
        let prefix: Vec<u32> = (0..len).map(|_| 1 + rng.below(vocab as usize) as u32).collect();
        let g = SessionGraph::build(&prefix).unwrap();
        check_invariants(&prefix, &g);
        assert_eq!(g, SessionGraph::build(&prefix).unwrap());
    }
}

#[test]
fn revisit_example() {
    let g = SessionGraph::build(&[1, 2, 3, 2, 4]).unwrap();
    assert_eq!(g.a_out_row(1), &[0.0, 0.0, 0.5, 0.5]);
    assert_eq!(g.a_in_row(1), &[0.5, 0.0, 0.5, 0.0]);
}

proptest! {
    #[test]
    fn invariants_hold_for_both_weightings(
        prefix in prop::collection::vec(1u32..15, 1..30),
        counted in any::<bool>(),
    ) {
        let w = if counted { EdgeWeighting::Counted } else { EdgeWeighting::Binary };
        let g = SessionGraph::build_with(&prefix, w).unwrap();
        check_invariants(&prefix, &g);
    }
}
