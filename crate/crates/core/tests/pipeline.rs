// SPDX-License-Identifier: Apache-2.0

use ndarray::Array2;
use povgraph_core::container::{read_pov_container, write_pov_container};
use povgraph_core::eval::{
    add_gaussian_noise, evaluate, summarize, sweep_gamma_lambda, sweep_m, write_records, EvalRecord, NoiseSpec,
    CSV_HEADER,
};
use povgraph_core::graph::{make_clustered_graph, save_attributed_graph};
use povgraph_core::id_model::IdHyperparams;
use povgraph_core::pov::compute_pov;
use povgraph_core::{adjacency, load_attributed_graph, AttributedGraph, Error, NodeDistribution, PovConfig};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

/// Two clusters with distinct feature centers and three planted outliers.
fn labelled_fixture() -> AttributedGraph {
    let g = make_clustered_graph(&[12, 12], &[(11, 12)], 5).unwrap();
    let mut rng = Pcg64::seed_from_u64(5);
    let outliers = [3, 15, 20];
    let features = Array2::from_shape_fn((24, 3), |(i, _)| {
        let center = if outliers.contains(&i) {
            4.0
        } else if i < 12 {
            0.0
        } else {
            1.0
        };
        center + rng.random_range(-0.1..=0.1)
    });
    let labels: Vec<bool> = (0..24).map(|i| outliers.contains(&i)).collect();
    AttributedGraph::new("fixture", 24, g.edges().to_vec(), features, Some(labels)).unwrap()
}

fn quick_hp() -> IdHyperparams {
    IdHyperparams {
        hidden_channels: 4,
        epochs: 10,
        ..IdHyperparams::default()
    }
}

fn without_time(records: &[EvalRecord]) -> Vec<EvalRecord> {
    records
        .iter()
        .map(|r| EvalRecord {
            wall_time_s: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn dataset_directory_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = labelled_fixture();
    let mut rng = Pcg64::seed_from_u64(9);
    g = g
        .with_features(Array2::from_shape_simple_fn((24, 3), || {
            rng.random::<f64>() * 1e-3 - 7.0
        }))
        .unwrap();
    save_attributed_graph(&g, dir.path()).unwrap();
    let back = load_attributed_graph(dir.path()).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.num_outliers(), 3);
}

#[test]
fn loader_names_the_offending_line() {
    let dir = tempfile::tempdir().unwrap();
    save_attributed_graph(&labelled_fixture(), dir.path()).unwrap();
    let edges = dir.path().join("edges.csv");
    let mut text = std::fs::read_to_string(&edges).unwrap();
    text.push_str("4,4\n");
    std::fs::write(&edges, text).unwrap();
    let err = load_attributed_graph(dir.path()).unwrap_err().to_string();
    assert!(err.contains("self-loop"), "{err}");
    assert!(err.contains("edges.csv"), "{err}");
}

#[test]
fn pov_container_round_trips() {
    let g = labelled_fixture();
    let r = compute_pov(
        &adjacency(&g),
        &NodeDistribution::uniform(24),
        PovConfig::new(3, 0.5).unwrap(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pov.bin");
    write_pov_container(&path, &r).unwrap();
    let (dmi, pov) = read_pov_container(&path).unwrap();
    assert_eq!(dmi, r.dmi);
    assert_eq!(pov, r.pov);

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"POVG");
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_pov_container(&path).is_err());
}

#[test]
fn noise_moments_over_a_million_draws() {
    let x = Array2::<f64>::zeros((1000, 1000));
    let (mu, sigma2) = (0.5, 2.0);
    let noisy = add_gaussian_noise(x.view(), mu, sigma2, 17).unwrap();
    let n = noisy.len() as f64;
    let mean = noisy.sum() / n;
    let var = noisy.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    assert!((mean - mu).abs() <= 0.01 * mu, "mean {mean}");
    assert!((var - sigma2).abs() <= 0.01 * sigma2, "variance {var}");
    assert_eq!(add_gaussian_noise(x.view(), mu, sigma2, 17).unwrap(), noisy);
    assert_ne!(add_gaussian_noise(x.view(), mu, sigma2, 18).unwrap(), noisy);
}

#[test]
fn evaluation_is_a_function_of_its_inputs() {
    let g = labelled_fixture();
    let cfg = PovConfig::new(2, 1.0).unwrap();
    let a = evaluate(&g, cfg, &quick_hp(), &[0, 1, 2]).unwrap();
    let b = evaluate(&g, cfg, &quick_hp(), &[0, 1, 2]).unwrap();
    assert_eq!(without_time(&a), without_time(&b));
    assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(a.iter().all(|r| (0.0..=1.0).contains(&r.auc) && r.wall_time_s >= 0.0));
    let s = summarize(&a);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].runs, 3);
}

#[test]
fn sweeps_produce_one_record_per_grid_point_and_seed() {
    let g = labelled_fixture();
    let cfg = PovConfig::new(2, 1.0).unwrap();
    let seeds = [0, 1];
    let grid = [0.0, 0.25, 1.0];
    let recs = sweep_gamma_lambda(&g, cfg, &quick_hp(), &grid, &seeds).unwrap();
    assert_eq!(recs.len(), 6);
    for (k, &gamma) in grid.iter().enumerate() {
        for (s, &seed) in seeds.iter().enumerate() {
            let r = &recs[k * seeds.len() + s];
            assert_eq!((r.model.gamma, r.model.lambda, r.seed), (gamma, 1.0 - gamma, seed));
        }
    }
    assert_eq!(summarize(&recs).len(), 3);

    let noise = NoiseSpec { mu: 0.0, sigma2: 1.0 };
    let recs = sweep_m(&g, cfg, &quick_hp(), &[1, 3], Some(noise), &seeds).unwrap();
    assert_eq!(
        recs.iter().map(|r| (r.pov.m, r.seed)).collect::<Vec<_>>(),
        vec![(1, 0), (1, 1), (3, 0), (3, 1)]
    );
    assert!(recs.iter().all(|r| r.noise == Some(noise)));
}

#[test]
fn unlabeled_graphs_cannot_be_evaluated() {
    let g = make_clustered_graph(&[4, 4], &[(0, 4)], 0).unwrap();
    let err = evaluate(&g, PovConfig::new(2, 1.0).unwrap(), &quick_hp(), &[0]).unwrap_err();
    assert!(matches!(err, Error::MetricUndefined(_)), "{err}");
}

#[test]
fn records_are_written_as_csv_and_json() {
    let g = labelled_fixture();
    let recs = evaluate(&g, PovConfig::new(2, 1.0).unwrap(), &quick_hp(), &[0, 1]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("run");
    write_records(&stem, &recs).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    assert_eq!(lines.count(), 2);
    let json: Vec<EvalRecord> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(json, recs);
}
