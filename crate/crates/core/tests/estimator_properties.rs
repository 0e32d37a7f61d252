use rand::Rng;
use smci::estimators::*;
use smci::exact::{exact_expectation, exact_moments, exact_sample_set};
use smci::experiments::{generate_model, ParamRanges};
use smci::graph::{closed_region, PairwiseGraph, Region};
use smci::sampling::chain_rng;
use smci::{Model, SampleSet};

fn random_points(n: usize, m: usize, seed: u64) -> SampleSet {
    let mut rng = chain_rng(seed, 5);
    let pts: Vec<Vec<i8>> = (0..m)
        .map(|_| (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
        .collect();
    SampleSet::from_points(n, pts).unwrap()
}

fn model_for(trial: u64, max_n: usize) -> Model {
    let mut rng = chain_rng(trial, 6);
    let g = if trial % 2 == 0 {
        let rows = rng.random_range(2..=4);
        let cols = rng.random_range(2..=max_n / rows);
        PairwiseGraph::grid(rows, cols)
    } else {
        let n = rng.random_range(4..=max_n);
        PairwiseGraph::random(n, rng.random_range(0.1..0.6), &mut rng)
    };
    generate_model(&g, &ParamRanges::default(), trial).unwrap()
}

fn xm(x: &[i8]) -> f64 {
    x[0] as f64
}

fn xp(x: &[i8]) -> f64 {
    (x[0] * x[1]) as f64
}

#[test]
fn closed_forms_agree_with_enumeration() {
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let m = model_for(trial, 20);
        let s = random_points(m.n(), 8, trial);
        let mut rng = chain_rng(trial, 7);
        let i = rng.random_range(0..m.n());
        let t = Region::singleton(i);
        let a = s2_region(&m, &t);
        let pairs = [
            (smci1_mean(&m, i, &s).unwrap().value, gsmci_estimate(&m, xm, &t, &t, &s, 20).unwrap().value),
            (s2_mean(&m, i, &a, &s).unwrap().value, gsmci_estimate(&m, xm, &t, &a, &s, 20).unwrap().value),
        ];
        for (x, y) in pairs {
            worst = worst.max((x - y).abs());
        }
        if m.graph().num_edges() > 0 {
            let (i, j) = m.graph().edges()[rng.random_range(0..m.graph().num_edges())];
            let t = Region::pair(i, j);
            let a = s2_region(&m, &t);
            let pairs = [
                (smci1_pair(&m, i, j, &s).unwrap().value, gsmci_estimate(&m, xp, &t, &t, &s, 20).unwrap().value),
                (s2_pair(&m, i, j, &a, &s).unwrap().value, gsmci_estimate(&m, xp, &t, &a, &s, 20).unwrap().value),
            ];
            for (x, y) in pairs {
                worst = worst.max((x - y).abs());
            }
            for k in 1..=3 {
                let r = closed_region(m.graph(), &t, k - 1);
                if r.len() <= 16 {
                    let kk = ksmci_estimate(&m, xp, &t, k, &s, 20).unwrap().value;
                    let gg = gsmci_estimate(&m, xp, &t, &r, &s, 20).unwrap().value;
                    worst = worst.max((kk - gg).abs());
                }
            }
        }
    }
    assert!(worst <= 1e-10, "max deviation {worst}");
}

#[test]
fn estimates_stay_in_unit_interval() {
    let m = generate_model(&PairwiseGraph::grid(4, 5), &ParamRanges { bias: (-2.0, 2.0), coupling: (-2.0, 2.0) }, 3).unwrap();
    let s = random_points(20, 50, 3);
    for kind in [EstimatorKind::Mci, EstimatorKind::Smci1, EstimatorKind::S2Smci, EstimatorKind::Ksmci(2)] {
        let est = estimate_moments(&m, &kind, &s, 20).unwrap();
        assert!(est.means.iter().chain(&est.pairs).all(|v| v.abs() <= 1.0), "{kind}");
    }
}

#[test]
fn exact_samples_give_exact_expectations() {
    for trial in 0..5 {
        let m = model_for(trial, 10);
        let s = exact_sample_set(&m, 24).unwrap();
        let exact = exact_moments(&m).unwrap();
        for kind in [EstimatorKind::Mci, EstimatorKind::Smci1, EstimatorKind::S2Smci, EstimatorKind::Ksmci(2)] {
            let est = estimate_moments(&m, &kind, &s, 20).unwrap();
            for (a, b) in est.means.iter().zip(&exact.means).chain(est.pairs.iter().zip(&exact.pairs)) {
                assert!((a - b).abs() <= 1e-12, "{kind}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn full_sum_region_is_exact_for_any_samples() {
    for trial in 0..10 {
        let m = model_for(trial, 12);
        let s = random_points(m.n(), 3, trial);
        let t = Region::pair(0, 1);
        let v = gsmci_estimate(&m, xp, &t, &m.graph().all(), &s, 20).unwrap().value;
        assert!((v - exact_expectation(&m, xp, &t).unwrap()).abs() <= 1e-12);
    }
}

fn random_superset(base: &Region, n: usize, rng: &mut impl Rng) -> Region {
    base.union(&Region::new((0..n).filter(|_| rng.random::<f64>() < 0.35)))
}

#[test]
fn larger_sum_regions_never_increase_variance() {
    for trial in 0..50 {
        let m = model_for(trial, 10);
        let n = m.n();
        let mut rng = chain_rng(trial, 8);
        let (t, f): (Region, fn(&[i8]) -> f64) = if trial % 2 == 0 || m.graph().num_edges() == 0 {
            (Region::singleton(rng.random_range(0..n)), xm)
        } else {
            let (i, j) = m.graph().edges()[rng.random_range(0..m.graph().num_edges())];
            (Region::pair(i, j), xp)
        };
        let u1 = random_superset(&t, n, &mut rng);
        let u2 = random_superset(&u1, n, &mut rng);
        let v1 = asymptotic_variance(&m, f, &t, &u1).unwrap();
        let v2 = asymptotic_variance(&m, f, &t, &u2).unwrap();
        assert!(v1 >= v2 - 1e-12 && v2 >= -1e-12, "trial {trial}: {v1} {v2}");

        let mut chain = vec![mci_asymptotic_variance(&m, f, &t).unwrap()];
        for k in 1..=3 {
            chain.push(asymptotic_variance(&m, f, &t, &closed_region(m.graph(), &t, k - 1)).unwrap());
        }
        for w in chain.windows(2) {
            assert!(w[0] >= w[1] - 1e-12, "trial {trial}: {chain:?}");
        }
    }
}

#[test]
fn field_helpers_match_naive_sums() {
    let m = generate_model(&PairwiseGraph::grid(5, 5), &ParamRanges::default(), 4).unwrap();
    let x = random_points(25, 1, 4);
    let x = x.point(0);
    let naive = |i: usize, skip: &dyn Fn(usize) -> bool| {
        m.bias(i) + (0..25).filter(|&j| j != i && !skip(j)).map(|j| m.coupling(i, j) * x[j] as f64).sum::<f64>()
    };
    for i in 0..25 {
        assert!((m.local_field(i, x) - naive(i, &|_| false)).abs() < 1e-14);
        for j in m.graph().neighbors(i) {
            assert!((m.cavity_field(i, j, x) - naive(i, &|k| k == j)).abs() < 1e-14);
            let mut y = x.to_vec();
            y[j] = -y[j];
            assert_eq!(m.cavity_field(i, j, x), m.cavity_field(i, j, &y));
        }
        let a = s2_region(&m, &Region::singleton(i));
        for k in a.iter() {
            assert!((m.boundary_field(k, &a, x) - naive(k, &|j| a.contains(j))).abs() < 1e-14);
        }
        assert_eq!(m.boundary_field(i, &Region::singleton(i), x), m.local_field(i, x));
        assert_eq!(m.boundary_field(i, &m.graph().all(), x), m.bias(i));
    }
}

#[test]
fn exact_moments_agree_with_per_target_expectations() {
    let m = model_for(3, 10);
    let ex = exact_moments(&m).unwrap();
    for (e, &(i, j)) in m.graph().edges().iter().enumerate() {
        let v = exact_expectation(&m, xp, &Region::pair(i, j)).unwrap();
        assert!((v - ex.pairs[e]).abs() < 1e-12);
    }
    assert!((exact_expectation(&m, |_| 1.0, &Region::pair(0, 1)).unwrap() - 1.0).abs() < 1e-12);
}
