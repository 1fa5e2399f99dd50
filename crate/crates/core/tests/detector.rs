// SPDX-License-Identifier: Apache-2.0

use ndarray::{Array1, Array2};
use povgraph_core::graph::{make_clustered_graph, make_complete_graph};
use povgraph_core::id_model::{
    detect, dropout_mask, forward, train_with_history, IdHyperparams, IdModelState, Neighborhoods,
};
use povgraph_core::pov::compute_pov;
use povgraph_core::{adjacency, NodeDistribution, PovConfig};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Forward pass written out with explicit loops over `N(v)`.
fn naive_forward(
    x: &Array2<f64>,
    s: &IdModelState<f64>,
    pov: &povgraph_core::SparseMatrix<f64>,
    weighted: bool,
    mask: &Array2<f64>,
) -> Array2<f64> {
    let n = x.nrows();
    let agg = |h: &Array2<f64>| {
        let mut out = Array2::<f64>::zeros(h.dim());
        for v in 0..n {
            let (cols, vals) = pov.row(v);
            let (cols, vals): (Vec<usize>, Vec<f64>) = if cols.is_empty() {
                (vec![v], vec![1.0])
            } else {
                (cols.to_vec(), vals.to_vec())
            };
            for (k, &u) in cols.iter().enumerate() {
                let w = if weighted { vals[k] } else { 1.0 / cols.len() as f64 };
                for c in 0..h.ncols() {
                    out[[v, c]] += w * h[[u, c]];
                }
            }
        }
        out
    };
    let linear = |h: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>| {
        let mut out = Array2::<f64>::zeros((h.nrows(), w.ncols()));
        for i in 0..h.nrows() {
            for j in 0..w.ncols() {
                out[[i, j]] = b[j] + (0..h.ncols()).map(|k| h[[i, k]] * w[[k, j]]).sum::<f64>();
            }
        }
        out
    };
    let hidden = linear(&agg(x), &s.enc_weight, &s.enc_bias).mapv(|v| v.max(0.0)) * mask;
    linear(&agg(&hidden), &s.dec_weight, &s.dec_bias)
}

#[test]
fn forward_matches_explicit_loops() {
    let mut rng = Pcg64::seed_from_u64(11);
    for case in 0..6u64 {
        let g = make_clustered_graph(&[5, 4], &[(0, 5)], case).unwrap();
        let n = g.num_nodes();
        let x = Array2::from_shape_simple_fn((n, 3), || rng.random_range(-2.0..=2.0));
        let pov = compute_pov(
            &adjacency(&g),
            &NodeDistribution::uniform(n),
            PovConfig::new(1 + case as usize % 3, 0.7).unwrap(),
        )
        .unwrap();
        let nbrs = Neighborhoods::from_pov(&pov.pov);
        let state = IdModelState::init(3, 4, &mut rng);
        let mask: Array2<f64> = dropout_mask(n, 4, 0.25, &mut rng);
        for weighted in [false, true] {
            let fp = forward(x.view(), &state, &nbrs, weighted, Some(mask.view())).unwrap();
            let expected = naive_forward(&x, &state, &pov.pov, weighted, &mask);
            let gap = (&fp.reconstruction - &expected)
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(gap < 1e-12, "case {case} weighted={weighted}: gap {gap}");
        }
    }
}

#[test]
fn planted_outlier_on_k10_ranks_first() {
    let mut features = Array2::from_elem((10, 4), 1.0);
    features.row_mut(6).fill(5.0);
    let g = make_complete_graph(10, Some(features)).unwrap();
    let hp = IdHyperparams {
        hidden_channels: 8,
        ..IdHyperparams::default()
    };
    for m in [2, 4] {
        let report = detect::<f64>(&g, PovConfig::new(m, 1.0).unwrap(), &hp).unwrap();
        let top = (0..10)
            .max_by(|&a, &b| report.scores[a].total_cmp(&report.scores[b]))
            .unwrap();
        assert_eq!(top, 6, "m={m}: scores {:?}", report.scores);
    }
}

#[test]
fn training_lowers_the_loss_on_clustered_features() {
    let g = make_clustered_graph(&[10, 10], &[(9, 10)], 3).unwrap();
    let pov = compute_pov(
        &adjacency(&g),
        &NodeDistribution::uniform(20),
        PovConfig::new(3, 1.0).unwrap(),
    )
    .unwrap();
    let hp = IdHyperparams {
        hidden_channels: 6,
        epochs: 60,
        ..IdHyperparams::default()
    };
    let out = train_with_history::<f64>(&g, &pov, &hp).unwrap();
    let (first, last) = (out.losses[0], *out.losses.last().unwrap());
    assert!(last < first, "loss went from {first} to {last}");
    assert!(out.state.is_finite());
}

#[test]
fn f32_and_f64_detectors_agree_on_ranking_of_a_clear_outlier() {
    let mut features = Array2::from_elem((10, 2), 0.5);
    features.row_mut(3).fill(-4.0);
    let g = make_complete_graph(10, Some(features)).unwrap();
    let cfg = PovConfig::new(2, 1.0).unwrap();
    let hp = IdHyperparams {
        hidden_channels: 4,
        epochs: 20,
        ..IdHyperparams::default()
    };
    let wide = detect::<f64>(&g, cfg, &hp).unwrap();
    let narrow = detect::<f32>(&g, cfg, &hp).unwrap();
    let argmax = |s: &[f64]| (0..s.len()).max_by(|&a, &b| s[a].total_cmp(&s[b])).unwrap();
    let narrow: Vec<f64> = narrow.scores.iter().map(|&v| f64::from(v)).collect();
    assert_eq!(argmax(&wide.scores), 3);
    assert_eq!(argmax(&narrow), 3);
}
