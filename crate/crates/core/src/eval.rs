// SPDX-License-Identifier: Apache-2.0

//! Ranking metrics, feature noise, multi-seed evaluation, hyperparameter
//! sweeps and runtime measurement.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency, AttributedGraph};
use crate::id_model::{score_model, train, IdHyperparams};
use crate::pov::{compute_pov, NodeDistribution, PovConfig, PovResult};

/// Seeds used when none are given.
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const CSV_HEADER: &str = "dataset,m,theta,gamma,lambda,seed,auc,ap,wall_time_s";

fn check_inputs(labels: &[bool], scores: &[f64]) -> Result<()> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidParameter(format!("score {i} is NaN")));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_inputs(labels, scores)?;
    let npos = labels.iter().filter(|&&l| l).count();
    let nneg = labels.len() - npos;
    if npos == 0 || nneg == 0 {
        return Err(Error::MetricUndefined("ROC-AUC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start..end (0-based) share the mid-rank.
        let mid = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += mid * pos_in_group as f64;
        start = end;
    }
    let (p, q) = (npos as f64, nneg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// `Σ_k (R_k − R_{k−1}) P_k` over the ranking by descending score, ties
/// ordered by ascending index.
pub fn average_precision(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_inputs(labels, scores)?;
    let npos = labels.iter().filter(|&&l| l).count();
    if npos == 0 {
        return Err(Error::MetricUndefined("average precision needs a positive label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(sum / npos as f64)
}

/// Standard normal pairs by Box–Muller from two uniforms.
struct BoxMuller {
    rng: Pcg64,
    spare: Option<f64>,
}

impl BoxMuller {
    fn new(seed: u64) -> Self {
        Self {
            rng: Pcg64::seed_from_u64(seed),
            spare: None,
        }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// `x + N(mu, sigma2)` elementwise, row-major draw order, generator Pcg64
/// seeded with `seed`.
pub fn add_gaussian_noise(features: ArrayView2<'_, f64>, mu: f64, sigma2: f64, seed: u64) -> Result<Array2<f64>> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise needs finite mu and sigma2 >= 0, got {mu} and {sigma2}"
        )));
    }
    let sigma = sigma2.sqrt();
    let mut gen = BoxMuller::new(seed);
    let mut out = features.to_owned();
    for v in out.iter_mut() {
        *v += mu + sigma * gen.next();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mu: f64,
    pub sigma2: f64,
}

/// One detector run on one dataset with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub dataset: String,
    pub pov: PovConfig,
    pub model: IdHyperparams,
    pub noise: Option<NoiseSpec>,
    pub seed: u64,
    pub auc: f64,
    pub ap: f64,
    /// Training plus scoring; the shared pov computation is not included.
    pub wall_time_s: f64,
}

fn labels_of(g: &AttributedGraph) -> Result<&[bool]> {
    g.labels()
        .ok_or(Error::MetricUndefined("dataset has no outlier labels"))
}

fn uniform_pov(g: &AttributedGraph, cfg: PovConfig) -> Result<PovResult<f64>> {
    compute_pov(&adjacency(g), &NodeDistribution::uniform(g.num_nodes()), cfg)
}

/// Trains once and returns one record per `(gamma, lambda)` pair.
fn run_seed(
    g: &AttributedGraph,
    pov: &PovResult<f64>,
    cfg: PovConfig,
    hp: &IdHyperparams,
    seed: u64,
    weightings: &[(f64, f64)],
    noise: Option<NoiseSpec>,
) -> Result<Vec<EvalRecord>> {
    let labels = labels_of(g)?;
    let hp = IdHyperparams { seed, ..hp.clone() };
    let start = Instant::now();
    let noisy;
    let g = match noise {
        Some(ns) => {
            noisy = g.with_features(add_gaussian_noise(g.features().view(), ns.mu, ns.sigma2, seed)?)?;
            &noisy
        }
        None => g,
    };
    let state = train(g, pov, &hp)?;
    let report = score_model(g, pov, &state, &hp)?;
    let shared = start.elapsed().as_secs_f64();
    weightings
        .iter()
        .map(|&(gamma, lambda)| {
            let t = Instant::now();
            let scores = report.rescored(gamma, lambda);
            let auc = roc_auc(labels, &scores)?;
            let ap = average_precision(labels, &scores)?;
            Ok(EvalRecord {
                dataset: g.name().to_string(),
                pov: cfg,
                model: IdHyperparams {
                    gamma,
                    lambda,
                    ..hp.clone()
                },
                noise,
                seed,
                auc,
                ap,
                wall_time_s: shared + t.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// One record per seed at the given settings.
pub fn evaluate(g: &AttributedGraph, cfg: PovConfig, hp: &IdHyperparams, seeds: &[u64]) -> Result<Vec<EvalRecord>> {
    hp.validate()?;
    labels_of(g)?;
    let pov = uniform_pov(g, cfg)?;
    let per_seed: Vec<Vec<EvalRecord>> = seeds
        .par_iter()
        .map(|&s| run_seed(g, &pov, cfg, hp, s, &[(hp.gamma, hp.lambda)], None))
        .collect::<Result<_>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// Records for every `γ` in `grid` with `λ = 1 − γ`, ordered by grid index
/// then seed. The model is trained once per seed; only the score changes.
pub fn sweep_gamma_lambda(
    g: &AttributedGraph,
    cfg: PovConfig,
    hp: &IdHyperparams,
    grid: &[f64],
    seeds: &[u64],
) -> Result<Vec<EvalRecord>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("gamma grid is empty".into()));
    }
    if let Some(&bad) = grid.iter().find(|g| !(0.0..=1.0).contains(*g)) {
        return Err(Error::InvalidParameter(format!("gamma {bad} outside [0, 1]")));
    }
    hp.validate()?;
    labels_of(g)?;
    let pov = uniform_pov(g, cfg)?;
    let weightings: Vec<(f64, f64)> = grid.iter().map(|&gm| (gm, 1.0 - gm)).collect();
    let per_seed: Vec<Vec<EvalRecord>> = seeds
        .par_iter()
        .map(|&s| run_seed(g, &pov, cfg, hp, s, &weightings, None))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(grid.len() * seeds.len());
    for k in 0..grid.len() {
        out.extend(per_seed.iter().map(|recs| recs[k].clone()));
    }
    Ok(out)
}

/// Records for every level in `m_values`, ordered by level then seed. With
/// `noise`, each seed perturbs the features with its own draw.
pub fn sweep_m(
    g: &AttributedGraph,
    cfg: PovConfig,
    hp: &IdHyperparams,
    m_values: &[usize],
    noise: Option<NoiseSpec>,
    seeds: &[u64],
) -> Result<Vec<EvalRecord>> {
    if m_values.is_empty() {
        return Err(Error::InvalidParameter("m grid is empty".into()));
    }
    hp.validate()?;
    labels_of(g)?;
    let povs: Vec<(PovConfig, PovResult<f64>)> = m_values
        .iter()
        .map(|&m| {
            let c = PovConfig::new(m, cfg.theta)?;
            Ok((c, uniform_pov(g, c)?))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, u64)> = (0..povs.len())
        .flat_map(|k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let records: Vec<Vec<EvalRecord>> = jobs
        .par_iter()
        .map(|&(k, s)| {
            let (c, pov) = &povs[k];
            run_seed(g, pov, *c, hp, s, &[(hp.gamma, hp.lambda)], noise)
        })
        .collect::<Result<_>>()?;
    Ok(records.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub dataset: String,
    pub m: usize,
    pub theta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub runs: usize,
    pub auc_mean: f64,
    /// Population standard deviation over the runs.
    pub auc_std: f64,
    pub ap_mean: f64,
    pub ap_std: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups consecutive records sharing dataset and `(m, θ, γ, λ)`.
pub fn summarize(records: &[EvalRecord]) -> Vec<Summary> {
    let key = |r: &EvalRecord| (r.dataset.clone(), r.pov.m, r.pov.theta, r.model.gamma, r.model.lambda);
    let mut out = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let k = key(&records[start]);
        let mut end = start + 1;
        while end < records.len() && key(&records[end]) == k {
            end += 1;
        }
        let group = &records[start..end];
        let (auc_mean, auc_std) = mean_std(&group.iter().map(|r| r.auc).collect::<Vec<_>>());
        let (ap_mean, ap_std) = mean_std(&group.iter().map(|r| r.ap).collect::<Vec<_>>());
        out.push(Summary {
            dataset: k.0,
            m: k.1,
            theta: k.2,
            gamma: k.3,
            lambda: k.4,
            runs: group.len(),
            auc_mean,
            auc_std,
            ap_mean,
            ap_std,
        });
        start = end;
    }
    out
}

pub fn write_records_csv<W: Write>(out: W, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidParameter(format!("csv write failed: {e}"));
    w.write_record(CSV_HEADER.split(',')).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.pov.m.to_string(),
            r.pov.theta.to_string(),
            r.model.gamma.to_string(),
            r.model.lambda.to_string(),
            r.seed.to_string(),
            r.auc.to_string(),
            r.ap.to_string(),
            format!("{:.6}", r.wall_time_s),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidParameter(format!("csv flush failed: {e}")))
}

/// Writes `<stem>.csv` and its JSON mirror `<stem>.json`.
pub fn write_records(stem: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let stem = stem.as_ref();
    let csv_path = stem.with_extension("csv");
    let json_path = stem.with_extension("json");
    let f = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_records_csv(f, records)?;
    let json = serde_json::to_string_pretty(records).expect("records serialize");
    std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineDescriptor {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub rayon_threads: usize,
    pub cpu_model: Option<String>,
}

impl MachineDescriptor {
    pub fn current() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|v| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            rayon_threads: rayon::current_num_threads(),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuntimeReport {
    pub dataset: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub m: usize,
    pub theta: f64,
    pub dmi_nnz: usize,
    pub seconds: f64,
    pub machine: MachineDescriptor,
}

/// Wall time of weights, DMI and row normalization for a uniform node
/// distribution, single run.
pub fn benchmark_pov_runtime(g: &AttributedGraph, cfg: PovConfig) -> Result<RuntimeReport> {
    let adj = adjacency::<f64>(g);
    let p = NodeDistribution::uniform(g.num_nodes());
    let start = Instant::now();
    let result = compute_pov(&adj, &p, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(RuntimeReport {
        dataset: g.name().to_string(),
        num_nodes: g.num_nodes(),
        num_edges: g.num_edges(),
        m: cfg.m,
        theta: cfg.theta,
        dmi_nnz: result.dmi.nnz(),
        seconds,
        machine: MachineDescriptor::current(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[true, false], &[0.9, 0.1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[true, false], &[0.5, 0.5]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[true, false], &[0.1, 0.9]).unwrap(), 0.0);
        assert_eq!(
            roc_auc(&[true, false, true, false], &[1.0, 1.0, 0.0, 0.0]).unwrap(),
            0.5
        );
        assert!(matches!(
            roc_auc(&[true, true], &[0.1, 0.2]),
            Err(Error::MetricUndefined(_))
        ));
        assert!(roc_auc(&[true, false], &[0.1]).is_err());
        assert!(roc_auc(&[true, false], &[0.1, f64::NAN]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[true, true, false], &[3.0, 2.0, 1.0]).unwrap(), 1.0);
        let n = 7;
        let mut labels = vec![false; n];
        labels[n - 1] = true;
        let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        assert!((average_precision(&labels, &scores).unwrap() - 1.0 / n as f64).abs() < 1e-15);
        // Ties go to the lower index first.
        assert_eq!(average_precision(&[false, true], &[1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(average_precision(&[true, false], &[1.0, 1.0]).unwrap(), 1.0);
        assert!(average_precision(&[false, false], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn noise_without_variance_is_a_shift() {
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1);
        let y = add_gaussian_noise(x.view(), 0.25, 0.0, 3).unwrap();
        assert_eq!(y, x.mapv(|v| v + 0.25));
        assert_eq!(
            add_gaussian_noise(x.view(), 0.0, 1.0, 5).unwrap(),
            add_gaussian_noise(x.view(), 0.0, 1.0, 5).unwrap()
        );
        assert_ne!(
            add_gaussian_noise(x.view(), 0.0, 1.0, 5).unwrap(),
            add_gaussian_noise(x.view(), 0.0, 1.0, 6).unwrap()
        );
        assert!(add_gaussian_noise(x.view(), 0.0, -1.0, 0).is_err());
    }

    #[test]
    fn summary_statistics() {
        let base = EvalRecord {
            dataset: "d".into(),
            pov: PovConfig { m: 2, theta: 0.0 },
            model: IdHyperparams::default(),
            noise: None,
            seed: 0,
            auc: 0.5,
            ap: 0.2,
            wall_time_s: 0.0,
        };
        let recs = vec![
            base.clone(),
            EvalRecord {
                seed: 1,
                auc: 0.7,
                ap: 0.4,
                ..base.clone()
            },
        ];
        let s = summarize(&recs);
        assert_eq!(s.len(), 1);
        assert!((s[0].auc_mean - 0.6).abs() < 1e-15 && (s[0].auc_std - 0.1).abs() < 1e-15);
        assert_eq!(s[0].runs, 2);
    }

    #[test]
    fn csv_layout() {
        let rec = EvalRecord {
            dataset: "toy".into(),
            pov: PovConfig { m: 3, theta: 1.0 },
            model: IdHyperparams {
                gamma: 0.2,
                lambda: 0.8,
                ..Default::default()
            },
            noise: None,
            seed: 4,
            auc: 0.75,
            ap: 0.5,
            wall_time_s: 0.125,
        };
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &[rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "toy,3,1,0.2,0.8,4,0.75,0.5,0.125000");
    }
}
