use proptest::prelude::*;
use smci::graph::{boundary, closed_region, greedy_independent_set, neighborhood, PairwiseGraph, Region};
use smci::sampling::chain_rng;

fn graph_strategy(max_n: usize) -> impl Strategy<Value = PairwiseGraph> {
    (1..=max_n, 0.0..=1.0f64, any::<u64>()).prop_map(|(n, p, seed)| PairwiseGraph::random(n, p, &mut chain_rng(seed, 0)))
}

fn graph_and_subset(max_n: usize) -> impl Strategy<Value = (PairwiseGraph, Region)> {
    graph_strategy(max_n).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), proptest::collection::vec(0..n, 1..=n.min(4)))
            .prop_map(|(g, members)| (g, Region::new(members)))
    })
}

fn is_independent(g: &PairwiseGraph, r: &Region) -> bool {
    r.iter().all(|u| r.iter().all(|v| !g.has_edge(u, v)))
}

fn max_independent_set_size(g: &PairwiseGraph, candidates: &Region) -> usize {
    let c = candidates.members();
    (0u32..1 << c.len())
        .filter(|mask| {
            let r = Region::new((0..c.len()).filter(|b| mask >> b & 1 == 1).map(|b| c[b]));
            is_independent(g, &r)
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn layers_exclude_inner_region_and_form_its_boundary((g, t) in graph_and_subset(16), k in 1usize..=3) {
        let inner = closed_region(&g, &t, k - 1);
        let layer = neighborhood(&g, &t, k);
        prop_assert!(layer.is_disjoint(&inner));
        prop_assert_eq!(boundary(&g, &inner), layer);
    }

    #[test]
    fn adjacency_is_symmetric(g in graph_strategy(16)) {
        for i in 0..g.n() {
            for j in g.neighbors(i) {
                prop_assert!(g.neighbors(j).any(|v| v == i));
            }
        }
    }

    #[test]
    fn region_operations_ignore_member_order(mut a in proptest::collection::vec(0usize..20, 0..8),
                                             b in proptest::collection::vec(0usize..20, 0..8)) {
        let (ra, rb) = (Region::new(a.clone()), Region::new(b.clone()));
        a.reverse();
        let ra2 = Region::new(a);
        prop_assert_eq!(&ra, &ra2);
        prop_assert_eq!(ra.union(&rb), rb.union(&ra2));
        prop_assert_eq!(ra.intersection(&rb), rb.intersection(&ra2));
        prop_assert!(ra.difference(&rb).is_disjoint(&rb));
        prop_assert!(ra.difference(&rb).is_subset(&ra));
    }

    #[test]
    fn greedy_set_is_independent_and_no_larger_than_optimum((g, t) in graph_and_subset(14)) {
        let candidates = neighborhood(&g, &t, 1);
        prop_assume!(candidates.len() <= 12);
        let set = greedy_independent_set(&g, &candidates, |j| j as f64);
        prop_assert!(set.is_subset(&candidates));
        prop_assert!(is_independent(&g, &set));
        prop_assert!(set.len() <= max_independent_set_size(&g, &candidates));
        if !candidates.is_empty() {
            prop_assert!(!set.is_empty());
        }
    }

    /// Candidates with no induced neighbours are always kept, so the order in
    /// which such vertices are taken does not change the output.
    #[test]
    fn isolated_candidates_are_always_selected((g, t) in graph_and_subset(16), w_seed in any::<u64>()) {
        let candidates = neighborhood(&g, &t, 1);
        let isolated: Vec<_> = candidates.iter().filter(|&v| !g.neighbors(v).any(|u| candidates.contains(u))).collect();
        let weight = |j: usize| (j as u64).wrapping_mul(w_seed | 1) % 97;
        let set = greedy_independent_set(&g, &candidates, weight);
        for v in isolated {
            prop_assert!(set.contains(v));
        }
    }
}

#[test]
fn diameter_exhausts_connected_graph() {
    let g = PairwiseGraph::grid(4, 5);
    assert_eq!(closed_region(&g, &Region::singleton(0), 7), g.all());
    assert!(neighborhood(&g, &Region::singleton(0), 8).is_empty());
}
