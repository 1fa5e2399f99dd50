// SPDX-License-Identifier: Apache-2.0

use ndarray::Array2;
use povgraph_core::eval::roc_auc;
use povgraph_core::id_model::{detect_with_pov, IdHyperparams, Neighborhoods};
use povgraph_core::monoid::{circ, circ_power};
use povgraph_core::pov::{compute_pov, dmi_with, induced_weights, DmiOptions};
use povgraph_core::smult::{bullet, directed_edges};
use povgraph_core::verify::{random_element, random_simple_graph};
use povgraph_core::{adjacency, AttributedGraph, NodeDistribution, PovConfig, SparseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

fn graph(seed: u64, n: usize, p: f64) -> AttributedGraph {
    random_simple_graph(n, p, &mut Pcg64::seed_from_u64(seed))
}

/// Interior distribution with every entry at most 1/2.
fn distribution(seed: u64, n: usize) -> NodeDistribution<f64> {
    let mut rng = Pcg64::seed_from_u64(seed ^ 0xD15C);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..=2.0)).collect();
    let total: f64 = raw.iter().sum();
    NodeDistribution::new(raw.iter().map(|r| r / total).collect()).unwrap()
}

fn matrix(seed: u64, n: usize, lo: f64, hi: f64) -> SparseMatrix<f64> {
    let mut rng = Pcg64::seed_from_u64(seed);
    let a = Array2::from_shape_simple_fn((n, n), || {
        if rng.random_bool(0.6) {
            rng.random_range(lo..=hi)
        } else {
            0.0
        }
    });
    SparseMatrix::from_array(a.view()).unwrap()
}

fn max_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_symmetric_with_empty_diagonal(seed in any::<u64>(), n in 2usize..12) {
        let a = adjacency::<f64>(&graph(seed, n, 0.4));
        prop_assert!(a.is_symmetric());
        prop_assert!((0..n).all(|i| a.get(i, i) == 0.0));
    }

    #[test]
    fn circ_has_zero_identity_and_associates(seed in any::<u64>(), n in 1usize..7) {
        let a = matrix(seed, n, -1.0, 1.0);
        let b = matrix(seed.wrapping_add(1), n, -1.0, 1.0);
        let c = matrix(seed.wrapping_add(2), n, -1.0, 1.0);
        let z = SparseMatrix::zeros(n);
        prop_assert_eq!(circ(&a, &z).unwrap().to_array(), a.to_array());
        prop_assert_eq!(circ(&z, &a).unwrap().to_array(), a.to_array());
        let left = circ(&circ(&a, &b).unwrap(), &c).unwrap().to_array();
        let right = circ(&a, &circ(&b, &c).unwrap()).unwrap().to_array();
        prop_assert!(max_diff(&left, &right) <= 1e-12);
    }

    #[test]
    fn dense_and_sparse_dmi_agree_with_circ_power(seed in any::<u64>(), n in 2usize..10, m in 1usize..7) {
        let g = graph(seed, n, 0.5);
        let w = induced_weights(&adjacency(&g), &distribution(seed, n), 0.5).unwrap();
        let reference = circ_power(&w, m).unwrap().to_array();
        let dense = dmi_with(&w, m, DmiOptions::default()).unwrap().to_array();
        let sparse = dmi_with(&w, m, DmiOptions { prune_eps: None, dense_max_nodes: 0 }).unwrap().to_array();
        prop_assert!(max_diff(&dense, &reference) <= 1e-12);
        prop_assert!(max_diff(&sparse, &reference) <= 1e-12);
    }

    #[test]
    fn pov_rows_are_stochastic(seed in any::<u64>(), n in 2usize..12, m in 1usize..6, theta in 0.0f64..=1.0) {
        let g = graph(seed, n, 0.35);
        let r = compute_pov(&adjacency(&g), &distribution(seed, n), PovConfig::new(m, theta).unwrap()).unwrap();
        for i in 0..n {
            let sum: f64 = r.pov.row(i).1.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9, "row {} sums to {}", i, sum);
            prop_assert_eq!(r.is_isolated(i), g.neighbor_lists()[i].is_empty());
        }
    }

    #[test]
    fn support_grows_with_level(seed in any::<u64>(), n in 2usize..10, m in 2usize..7) {
        let g = graph(seed, n, 0.3);
        let p = distribution(seed, n);
        let at = |m| compute_pov(&adjacency::<f64>(&g), &p, PovConfig::new(m, 1.0).unwrap()).unwrap().pov;
        let (lower, upper) = (at(m - 1), at(m));
        for (i, j, _) in lower.iter() {
            prop_assert!(upper.get(i, j) > 0.0, "({}, {}) lost at m={}", i, j, m);
        }
    }

    /// The θ-dependent factor is one scalar, so DMI expands as a binomial
    /// sum in the θ=0 weights scaled by powers of it.
    #[test]
    fn theta_scales_walks_by_length(seed in any::<u64>(), n in 2usize..8, m in 1usize..6, theta in 0.0f64..=1.0) {
        let g = graph(seed, n, 0.5);
        let p = distribution(seed, n);
        let adj = adjacency::<f64>(&g);
        let w0 = induced_weights(&adj, &p, 0.0).unwrap().to_array();
        let s = p.probs().iter().map(|&q| (1.0 - q).powf(theta)).product::<f64>();
        let mut expected = Array2::<f64>::zeros((n, n));
        let mut power = Array2::<f64>::eye(n);
        let mut coeff = 1.0;
        for k in 1..=m {
            power = power.dot(&w0);
            coeff = coeff * (m - k + 1) as f64 / k as f64;
            expected.scaled_add(coeff * s.powi(k as i32), &power);
        }
        let actual = compute_pov(&adj, &p, PovConfig::new(m, theta).unwrap()).unwrap().dmi.to_array();
        let scale = expected.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        prop_assert!(max_diff(&actual, &expected) / scale <= 1e-12);
    }

    #[test]
    fn level_two_neighborhoods_contain_self(seed in any::<u64>(), n in 2usize..12, m in 2usize..5) {
        let g = graph(seed, n, 0.4);
        let r = compute_pov(&adjacency::<f64>(&g), &NodeDistribution::uniform(n), PovConfig::new(m, 1.0).unwrap()).unwrap();
        let nbrs = Neighborhoods::from_pov(&r.pov);
        for v in 0..n {
            prop_assert!(nbrs.of(v).contains(&v));
        }
    }

    #[test]
    fn bullet_path_count_identity(seed in any::<u64>(), n in 2usize..5) {
        let mut rng = Pcg64::seed_from_u64(seed);
        let edges = directed_edges(&povgraph_core::graph::make_complete_graph(n, None).unwrap());
        let x = random_element(n, &edges, 3, true, &mut rng).unwrap();
        let y = random_element(n, &edges, 3, true, &mut rng).unwrap();
        let joins = x.paths().iter()
            .flat_map(|p| y.paths().iter().map(move |q| (p, q)))
            .filter(|(p, q)| x.path_end(p) == y.path_start(q))
            .count();
        let xy = bullet(&x, &y).unwrap();
        prop_assert_eq!(xy.num_paths(), x.num_paths() + y.num_paths() + joins);
        prop_assert_eq!(xy.num_instances(), x.num_instances() + y.num_instances());
    }

    #[test]
    fn auc_ignores_increasing_transforms(seed in any::<u64>(), n in 2usize..40) {
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 8.0).collect();
        let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert_eq!(roc_auc(&labels, &scores).unwrap(), roc_auc(&labels, &warped).unwrap());
    }
}

fn small_run(seed: u64) -> (AttributedGraph, povgraph_core::PovResultF64, IdHyperparams) {
    let mut rng = Pcg64::seed_from_u64(seed);
    let g = graph(seed, 12, 0.35);
    let features = Array2::from_shape_simple_fn((12, 4), || rng.random_range(-1.0..=1.0));
    let g = g.with_features(features).unwrap();
    let pov = compute_pov(
        &adjacency(&g),
        &NodeDistribution::uniform(12),
        PovConfig::new(2, 1.0).unwrap(),
    )
    .unwrap();
    let hp = IdHyperparams {
        hidden_channels: 5,
        dropout: 0.2,
        epochs: 15,
        seed,
        ..IdHyperparams::default()
    };
    (g, pov, hp)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn score_splits_into_its_two_terms(seed in any::<u64>(), gamma in 0.0f64..4.0, lambda in 0.0f64..4.0) {
        let (g, pov, hp) = small_run(seed);
        let report = detect_with_pov::<f64>(&g, &pov, &hp).unwrap();
        let recon = report.rescored(1.0, 0.0);
        let mean = report.rescored(0.0, 1.0);
        let combined = report.rescored(gamma, lambda);
        for i in 0..combined.len() {
            prop_assert_eq!(combined[i], gamma * recon[i] + lambda * mean[i]);
        }
    }

    /// Powers of two scale exactly, so the ranking cannot move.
    #[test]
    fn common_weight_scale_keeps_ranking(seed in any::<u64>(), exp in -8i32..8) {
        let (g, pov, hp) = small_run(seed);
        let report = detect_with_pov::<f64>(&g, &pov, &hp).unwrap();
        let c = 2f64.powi(exp);
        let order = |s: Vec<f64>| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
            idx
        };
        prop_assert_eq!(order(report.rescored(0.3, 0.7)), order(report.rescored(0.3 * c, 0.7 * c)));
    }

    #[test]
    fn same_seed_same_report(seed in any::<u64>()) {
        let (g, pov, hp) = small_run(seed);
        let a = detect_with_pov::<f64>(&g, &pov, &hp).unwrap();
        let b = detect_with_pov::<f64>(&g, &pov, &hp).unwrap();
        prop_assert_eq!(a, b);
    }
}
