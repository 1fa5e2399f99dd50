// SPDX-License-Identifier: Apache-2.0

//! Induced edge weights, distribution-aware path matrices and points of view.
//!
//! For a node distribution `P` and degree `θ`, every edge `(i, j)` of the
//! adjacency pattern gets the weight
//!
//! ```text
//! W[i][j] = P_j / (1 − P_j) · ∏_r (1 − P_r)^θ
//! ```
//!
//! The level-m matrix is the `∘`-power `DMI = (I + W)^m − I`. Its rows,
//! normalized to unit L1 norm, are the per-node points of view; their average
//! is the graph's point of view. Pov-weighted averages of the feature rows
//! give the node and graph means.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency, AttributedGraph, NodeId};
use crate::monoid::{circ_power_with, PowerOptions};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

/// Distributions must sum to one within this tolerance.
pub const SUM_TOLERANCE: f64 = 1e-9;
/// Probabilities at or above `1 − MAX_PROB_MARGIN` make the weights blow up.
pub const MAX_PROB_MARGIN: f64 = 1e-9;
/// Clipping range applied to intermediate beliefs in [`rumor_localize`].
pub const RUMOR_CLIP: (f64, f64) = (1e-9, 1.0 - 1e-6);
/// Up to this many nodes, [`dmi`] runs the recurrence on dense matrices.
pub const DENSE_FALLBACK_MAX_NODES: usize = 512;

/// Categorical distribution over the nodes of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeDistribution<F> {
    probs: Vec<F>,
}

impl<F: Real> NodeDistribution<F> {
    pub fn new(probs: Vec<F>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution {
                index: 0,
                message: "empty distribution".into(),
            });
        }
        for (index, &p) in probs.iter().enumerate() {
            if !(p >= F::zero() && p <= F::one()) {
                return Err(Error::InvalidDistribution {
                    index,
                    message: format!("probability {p} outside [0, 1]"),
                });
            }
        }
        let sum: F = probs.iter().copied().sum();
        if (sum - F::one()).abs() > F::lit(SUM_TOLERANCE) {
            return Err(Error::InvalidDistribution {
                index: 0,
                message: format!("probabilities sum to {sum}"),
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        let p = F::one() / F::from_usize(n).expect("node count fits");
        Self { probs: vec![p; n] }
    }

    pub fn probs(&self) -> &[F] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Lowest index attaining the maximum probability.
    pub fn argmax(&self) -> NodeId {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        NodeId(best)
    }

    /// Clips every entry into `[lo, hi]` and renormalizes.
    pub fn clipped(&self, lo: f64, hi: f64) -> Self {
        let (lo, hi) = (F::lit(lo), F::lit(hi));
        let clipped: Vec<F> = self.probs.iter().map(|&p| p.max(lo).min(hi)).collect();
        let sum: F = clipped.iter().copied().sum();
        Self {
            probs: clipped.into_iter().map(|p| p / sum).collect(),
        }
    }

    pub fn l1_distance(&self, other: &Self) -> F {
        self.probs.iter().zip(&other.probs).map(|(&a, &b)| (a - b).abs()).sum()
    }
}

/// Level `m` and degree `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PovConfig {
    pub m: usize,
    pub theta: f64,
}

impl PovConfig {
    pub fn new(m: usize, theta: f64) -> Result<Self> {
        let cfg = Self { m, theta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::ZeroLevel);
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidParameter(format!(
                "theta must lie in [0, 1], got {}",
                self.theta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovResult<F> {
    pub dmi: SparseMatrix<F>,
    /// Row-normalized `dmi`; zero rows become a unit mass on the diagonal.
    pub pov: SparseMatrix<F>,
    pub pov_graph: NodeDistribution<F>,
    /// L1 norm of each `dmi` row; zero marks an isolated node.
    pub row_norms: Vec<F>,
}

impl<F: Real> PovResult<F> {
    pub fn num_nodes(&self) -> usize {
        self.pov.dim()
    }

    pub fn is_isolated(&self, i: usize) -> bool {
        self.row_norms[i].is_zero()
    }
}

/// `P_j / (1 − P_j) · ∏_r (1 − P_r)^θ` on the nonzero pattern of `adj`.
pub fn induced_weights<F: Real>(adj: &SparseMatrix<F>, p: &NodeDistribution<F>, theta: f64) -> Result<SparseMatrix<F>> {
    if p.len() != adj.dim() {
        return Err(Error::DimensionMismatch {
            expected: adj.dim(),
            actual: p.len(),
        });
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    let upper = F::one() - F::lit(MAX_PROB_MARGIN);
    for (index, &pj) in p.probs().iter().enumerate() {
        if pj <= F::zero() {
            return Err(Error::InvalidDistribution {
                index,
                message: format!("probability {pj} must be positive"),
            });
        }
        if pj >= upper {
            return Err(Error::InvalidDistribution {
                index,
                message: format!("probability {pj} too close to 1"),
            });
        }
    }
    let log_keep: F = p.probs().iter().map(|&pr| (-pr).ln_1p()).sum();
    let scale = (F::lit(theta) * log_keep).exp();
    let odds: Vec<F> = p.probs().iter().map(|&pj| pj / (F::one() - pj)).collect();
    Ok(adj.map_values(|_, j, _| odds[j] * scale))
}

#[derive(Debug, Clone, Copy)]
pub struct DmiOptions {
    pub prune_eps: Option<f64>,
    /// Dense recurrence for graphs with at most this many nodes.
    pub dense_max_nodes: usize,
}

impl Default for DmiOptions {
    fn default() -> Self {
        Self {
            prune_eps: None,
            dense_max_nodes: DENSE_FALLBACK_MAX_NODES,
        }
    }
}

/// `Σ_{k=1..m} C(m,k) W^k` by the recurrence `R ← R + R·W` from `R = I + W`.
pub fn dmi<F: Real>(w: &SparseMatrix<F>, m: usize) -> Result<SparseMatrix<F>> {
    dmi_with(w, m, DmiOptions::default())
}

pub fn dmi_with<F: Real>(w: &SparseMatrix<F>, m: usize, opts: DmiOptions) -> Result<SparseMatrix<F>> {
    if m == 0 {
        return Err(Error::ZeroLevel);
    }
    if w.dim() <= opts.dense_max_nodes && opts.prune_eps.is_none() {
        dmi_dense(w, m)
    } else {
        circ_power_with(
            w,
            m,
            PowerOptions {
                prune_eps: opts.prune_eps,
            },
        )
    }
}

fn dmi_dense<F: Real>(w: &SparseMatrix<F>, m: usize) -> Result<SparseMatrix<F>> {
    let wd = w.to_array();
    let mut s = wd.clone();
    for iteration in 2..=m {
        let prod = s.dot(&wd);
        s = s + &wd + prod;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { iteration });
        }
    }
    SparseMatrix::from_array(s.view())
}

/// Row-normalizes a nonnegative `dmi` into points of view.
pub fn pov_matrix<F: Real>(dmi: SparseMatrix<F>) -> Result<PovResult<F>> {
    let n = dmi.dim();
    if let Some((row, col, _)) = dmi.iter().find(|&(_, _, v)| v < F::zero()) {
        return Err(Error::NegativeEntry { row, col });
    }
    let row_norms: Vec<F> = (0..n).map(|i| dmi.row(i).1.iter().copied().sum()).collect();
    let mut triplets = Vec::with_capacity(dmi.nnz() + n);
    for (i, &norm) in row_norms.iter().enumerate() {
        if norm.is_zero() {
            triplets.push((i, i, F::one()));
        } else {
            let (cols, vals) = dmi.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (i, c, v / norm)));
        }
    }
    let pov = SparseMatrix::from_triplets(n, triplets)?;
    let mut graph = vec![F::zero(); n];
    for (_, j, v) in pov.iter() {
        graph[j] = graph[j] + v;
    }
    let nf = F::from_usize(n).expect("node count fits");
    let pov_graph = NodeDistribution {
        probs: graph.into_iter().map(|v| v / nf).collect(),
    };
    Ok(PovResult {
        dmi,
        pov,
        pov_graph,
        row_norms,
    })
}

/// Full pipeline `P → W → DMI → POV` for one graph.
pub fn compute_pov<F: Real>(adj: &SparseMatrix<F>, p: &NodeDistribution<F>, cfg: PovConfig) -> Result<PovResult<F>> {
    compute_pov_with(adj, p, cfg, DmiOptions::default())
}

pub fn compute_pov_with<F: Real>(
    adj: &SparseMatrix<F>,
    p: &NodeDistribution<F>,
    cfg: PovConfig,
    opts: DmiOptions,
) -> Result<PovResult<F>> {
    cfg.validate()?;
    let w = induced_weights(adj, p, cfg.theta)?;
    pov_matrix(dmi_with(&w, cfg.m, opts)?)
}

fn check_node(i: NodeId, n: usize) -> Result<usize> {
    if i.index() >= n {
        return Err(Error::NodeOutOfRange {
            id: i.index(),
            num_nodes: n,
        });
    }
    Ok(i.index())
}

/// Point of view of node `i` as a dense distribution.
pub fn pov_node<F: Real>(result: &PovResult<F>, i: NodeId) -> Result<NodeDistribution<F>> {
    let i = check_node(i, result.num_nodes())?;
    let mut probs = vec![F::zero(); result.num_nodes()];
    let (cols, vals) = result.pov.row(i);
    for (&c, &v) in cols.iter().zip(vals) {
        probs[c] = v;
    }
    Ok(NodeDistribution { probs })
}

fn weighted_mean<F: Real>(weights: impl Iterator<Item = (usize, F)>, features: ArrayView2<'_, F>) -> Array1<F> {
    let mut out = Array1::zeros(features.ncols());
    for (k, w) in weights {
        out.scaled_add(w, &features.row(k));
    }
    out
}

fn check_features<F>(n: usize, features: &ArrayView2<'_, F>) -> Result<()> {
    if features.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: features.nrows(),
        });
    }
    Ok(())
}

/// `Σ_k pov(v_i)_k · x_k`.
pub fn mean_node<F: Real>(result: &PovResult<F>, i: NodeId, features: ArrayView2<'_, F>) -> Result<Array1<F>> {
    let i = check_node(i, result.num_nodes())?;
    check_features(result.num_nodes(), &features)?;
    let (cols, vals) = result.pov.row(i);
    Ok(weighted_mean(cols.iter().copied().zip(vals.iter().copied()), features))
}

/// `Σ_k pov(G)_k · x_k`.
pub fn mean_graph<F: Real>(result: &PovResult<F>, features: ArrayView2<'_, F>) -> Result<Array1<F>> {
    check_features(result.num_nodes(), &features)?;
    Ok(weighted_mean(
        result.pov_graph.probs().iter().copied().enumerate(),
        features,
    ))
}

/// Point of view of a single node, via the row recurrence
/// `r ← r + r·W` (one sparse vector-matrix product per level).
pub fn pov_row<F: Real>(
    adj: &SparseMatrix<F>,
    p: &NodeDistribution<F>,
    cfg: PovConfig,
    node: NodeId,
) -> Result<NodeDistribution<F>> {
    cfg.validate()?;
    let n = adj.dim();
    let u = check_node(node, n)?;
    let w = induced_weights(adj, p, cfg.theta)?;
    // r holds row u of (I + W)^level.
    let mut r = vec![F::zero(); n];
    r[u] = F::one();
    let (cols, vals) = w.row(u);
    for (&c, &v) in cols.iter().zip(vals) {
        r[c] = r[c] + v;
    }
    let mut next = vec![F::zero(); n];
    for iteration in 2..=cfg.m {
        next.copy_from_slice(&r);
        for (k, &rk) in r.iter().enumerate() {
            if rk.is_zero() {
                continue;
            }
            let (cols, vals) = w.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                next[c] = next[c] + rk * v;
            }
        }
        std::mem::swap(&mut r, &mut next);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow { iteration });
        }
    }
    r[u] = r[u] - F::one();
    let norm: F = r.iter().copied().sum();
    if norm.is_zero() {
        let mut probs = vec![F::zero(); n];
        probs[u] = F::one();
        return Ok(NodeDistribution { probs });
    }
    Ok(NodeDistribution {
        probs: r.into_iter().map(|v| v / norm).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RumorStage<F> {
    pub node: NodeId,
    pub distribution: NodeDistribution<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RumorTrajectory<F> {
    pub stages: Vec<RumorStage<F>>,
    /// The node whose own point of view peaks at itself, if one was reached.
    pub fixed_point: Option<NodeId>,
}

/// Staged source localization from an observation at `start`.
///
/// Stage 1 evaluates `P₁ = pov(u₁, Q₁)` with `Q₁` uniform. Stage `k > 1`
/// updates the belief `Q_k = pov(u_k, Q_{k−1})` and evaluates
/// `P_k = pov(u_k, Q_k)`. The next node is `argmax P_k` (lowest index on
/// ties); the walk stops once that is the current node or after
/// `max_stages` stages. Beliefs are clipped to [`RUMOR_CLIP`] and
/// renormalized before each weight construction.
pub fn rumor_localize<F: Real>(
    g: &AttributedGraph,
    start: NodeId,
    cfg: PovConfig,
    max_stages: usize,
) -> Result<RumorTrajectory<F>> {
    cfg.validate()?;
    let n = g.num_nodes();
    let mut u = check_node(start, n)?;
    let component = g.component_of(u).iter().filter(|&&b| b).count();
    if component < 2 {
        return Err(Error::InvalidGraph(format!(
            "start node {u} lies in a component of {component} node(s)"
        )));
    }
    let adj = adjacency::<F>(g);
    let (lo, hi) = RUMOR_CLIP;
    let pov_at = |node: usize, belief: &NodeDistribution<F>| pov_row(&adj, &belief.clipped(lo, hi), cfg, NodeId(node));

    let mut belief = NodeDistribution::<F>::uniform(n);
    let mut stages = Vec::new();
    let mut fixed_point = None;
    for k in 1..=max_stages {
        let p = if k == 1 {
            pov_at(u, &belief)?
        } else {
            belief = pov_at(u, &belief)?;
            pov_at(u, &belief)?
        };
        let next = p.argmax().index();
        stages.push(RumorStage {
            node: NodeId(u),
            distribution: p,
        });
        if next == u {
            fixed_point = Some(NodeId(u));
            break;
        }
        u = next;
    }
    Ok(RumorTrajectory { stages, fixed_point })
}
