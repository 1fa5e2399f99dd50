// SPDX-License-Identifier: Apache-2.0

//! Outlier detector: a two-block graph autoencoder whose message passing runs
//! over point-of-view neighborhoods instead of the adjacency matrix.
//!
//! ```text
//! hidden = dropout(relu(agg(X)·We + be))
//! X̂      = agg(hidden)·Wd + bd
//! loss   = Σ_i ‖x_i − x̂_i‖₂
//! score  = γ‖x_i − x̂_i‖₁ + λ‖mean_graph − x̂_i‖₁
//! ```
//!
//! Training is full-batch Adam with hand-derived gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{adjacency, AttributedGraph};
use crate::pov::{compute_pov, mean_graph, NodeDistribution, PovConfig, PovResult};
use crate::scalar::Real;
use crate::sparse::SparseMatrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
/// Residual norms are floored at this value in the loss derivative.
pub const RESIDUAL_NORM_FLOOR: f64 = 1e-12;
pub const DEFAULT_EPOCHS: usize = 100;

/// Multiply the learning rate by `factor` every `step` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepScheduler {
    pub step: usize,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdHyperparams {
    pub hidden_channels: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub scheduler: Option<StepScheduler>,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    /// Aggregate with the pov row weights instead of a plain mean over N(v).
    #[serde(default)]
    pub weighted_aggregation: bool,
}

impl Default for IdHyperparams {
    fn default() -> Self {
        Self {
            hidden_channels: 32,
            dropout: 0.0,
            learning_rate: 1e-2,
            epochs: DEFAULT_EPOCHS,
            scheduler: None,
            gamma: 0.5,
            lambda: 0.5,
            seed: 0,
            weighted_aggregation: false,
        }
    }
}

/// Published per-dataset settings: `(m, θ)` plus model hyperparameters.
pub fn preset(dataset: &str) -> Option<(PovConfig, IdHyperparams)> {
    #[allow(clippy::type_complexity)]
    let (lr, dropout, m, theta, sched, gamma, lambda, hidden): (
        f64,
        f64,
        usize,
        f64,
        Option<(usize, f64)>,
        f64,
        f64,
        usize,
    ) = match dataset.to_ascii_lowercase().as_str() {
        "weibo" => (2e-2, 0.0, 3, 1.0, None, 1.0, 0.0, 32),
        "reddit" => (9e-2, 0.7, 3, 1.0, None, 1.0, 0.0, 18),
        "disney" => (1e-4, 0.9, 11, 1.0, None, 0.0, 1.0, 48),
        "books" => (1e-2, 0.4, 5, 1.0, None, 0.2, 0.8, 30),
        "enron" => (5e-4, 0.5, 2, 1.0, Some((4, 0.9)), 0.0, 1.0, 8),
        "dgraph" => (3e-2, 0.0, 4, 0.0, None, 1.0, 0.0, 17),
        _ => return None,
    };
    let hp = IdHyperparams {
        hidden_channels: hidden,
        dropout,
        learning_rate: lr,
        scheduler: sched.map(|(step, factor)| StepScheduler { step, factor }),
        gamma,
        lambda,
        ..IdHyperparams::default()
    };
    Some((PovConfig { m, theta }, hp))
}

impl IdHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.hidden_channels == 0 {
            return bad("hidden_channels must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.gamma >= 0.0 && self.lambda >= 0.0 && self.gamma + self.lambda > 0.0) {
            return bad(format!(
                "need gamma, lambda >= 0 with gamma + lambda > 0, got {} and {}",
                self.gamma, self.lambda
            ));
        }
        if let Some(s) = self.scheduler {
            if s.step == 0 || !(s.factor.is_finite() && s.factor > 0.0) {
                return bad(format!("invalid scheduler step {} factor {}", s.step, s.factor));
            }
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        match self.scheduler {
            Some(s) => self.learning_rate * s.factor.powi((epoch / s.step) as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdModelState<F> {
    pub enc_weight: Array2<F>,
    pub enc_bias: Array1<F>,
    pub dec_weight: Array2<F>,
    pub dec_bias: Array1<F>,
}

impl<F: Real> IdModelState<F> {
    pub fn zeros(d: usize, h: usize) -> Self {
        Self {
            enc_weight: Array2::zeros((d, h)),
            enc_bias: Array1::zeros(h),
            dec_weight: Array2::zeros((h, d)),
            dec_bias: Array1::zeros(d),
        }
    }

    /// Entries drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(d: usize, h: usize, rng: &mut Pcg64) -> Self {
        let mut draw = |fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            F::lit(rng.random_range(-bound..=bound))
        };
        let enc_weight = Array2::from_shape_simple_fn((d, h), || draw(d));
        let enc_bias = Array1::from_shape_simple_fn(h, || draw(d));
        let dec_weight = Array2::from_shape_simple_fn((h, d), || draw(h));
        let dec_bias = Array1::from_shape_simple_fn(d, || draw(h));
        Self {
            enc_weight,
            enc_bias,
            dec_weight,
            dec_bias,
        }
    }

    pub fn num_features(&self) -> usize {
        self.enc_weight.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.enc_weight.ncols()
    }

    fn check(&self, d: usize) -> Result<()> {
        let h = self.hidden();
        let shapes = [
            (self.enc_weight.nrows(), d),
            (self.enc_bias.len(), h),
            (self.dec_weight.dim().0, h),
            (self.dec_weight.dim().1, d),
            (self.dec_bias.len(), d),
        ];
        for (actual, expected) in shapes {
            if actual != expected {
                return Err(Error::DimensionMismatch { expected, actual });
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        [self.enc_weight.iter(), self.dec_weight.iter()]
            .into_iter()
            .flatten()
            .chain(self.enc_bias.iter())
            .chain(self.dec_bias.iter())
            .all(|v| v.is_finite())
    }
}

/// `N(v)` per node together with the row-stochastic matrix that averages
/// over it.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhoods<F> {
    lists: Vec<Vec<usize>>,
    weights: Vec<Vec<F>>,
    mean_op: SparseMatrix<F>,
    weighted_op: SparseMatrix<F>,
}

impl<F: Real> Neighborhoods<F> {
    /// `N(v)` is the set of nonzero columns of row `v`. An empty row falls
    /// back to `{v}`.
    pub fn from_pov(pov: &SparseMatrix<F>) -> Self {
        let n = pov.dim();
        let mut lists = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for v in 0..n {
            let (cols, vals) = pov.row(v);
            if cols.is_empty() {
                lists.push(vec![v]);
                weights.push(vec![F::one()]);
            } else {
                lists.push(cols.to_vec());
                weights.push(vals.to_vec());
            }
        }
        let mean_op = row_operator(&lists, |v, _| {
            F::one() / F::from_usize(lists[v].len()).expect("neighborhood size fits")
        });
        let weighted_op = row_operator(&lists, |v, k| weights[v][k]);
        Self {
            lists,
            weights,
            mean_op,
            weighted_op,
        }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn of(&self, v: usize) -> &[usize] {
        &self.lists[v]
    }

    pub fn weights_of(&self, v: usize) -> &[F] {
        &self.weights[v]
    }

    pub fn operator(&self, weighted: bool) -> &SparseMatrix<F> {
        if weighted {
            &self.weighted_op
        } else {
            &self.mean_op
        }
    }
}

fn row_operator<F: Real>(lists: &[Vec<usize>], value: impl Fn(usize, usize) -> F) -> SparseMatrix<F> {
    let triplets = lists
        .iter()
        .enumerate()
        .flat_map(|(v, cols)| cols.iter().enumerate().map(move |(k, &c)| (v, c, k)))
        .map(|(v, c, k)| (v, c, value(v, k)));
    SparseMatrix::from_triplets(lists.len(), triplets).expect("neighbor indices are in range")
}

/// Row `v` of the output averages the rows of `h` indexed by `N(v)`.
pub fn aggregate<F: Real>(h: ArrayView2<'_, F>, nbrs: &Neighborhoods<F>, weighted: bool) -> Result<Array2<F>> {
    nbrs.operator(weighted).mul_dense(h)
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<F> {
    pub agg_x: Array2<F>,
    pub pre_activation: Array2<F>,
    /// After ReLU and dropout.
    pub hidden: Array2<F>,
    pub agg_hidden: Array2<F>,
    pub reconstruction: Array2<F>,
}

/// Inverted-dropout mask: entries are `0` or `1/(1−p)`.
pub fn dropout_mask<F: Real>(rows: usize, cols: usize, p: f64, rng: &mut Pcg64) -> Array2<F> {
    let keep = F::lit(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn((rows, cols), || if rng.random_bool(1.0 - p) { keep } else { F::zero() })
}

pub fn forward<F: Real>(
    x: ArrayView2<'_, F>,
    state: &IdModelState<F>,
    nbrs: &Neighborhoods<F>,
    weighted: bool,
    dropout_mask: Option<ArrayView2<'_, F>>,
) -> Result<ForwardPass<F>> {
    state.check(x.ncols())?;
    if x.nrows() != nbrs.len() {
        return Err(Error::DimensionMismatch {
            expected: nbrs.len(),
            actual: x.nrows(),
        });
    }
    let agg_x = aggregate(x, nbrs, weighted)?;
    let pre_activation = agg_x.dot(&state.enc_weight) + &state.enc_bias;
    let mut hidden = pre_activation.mapv(|v| v.max(F::zero()));
    if let Some(mask) = dropout_mask {
        if mask.dim() != hidden.dim() {
            return Err(Error::DimensionMismatch {
                expected: hidden.ncols(),
                actual: mask.ncols(),
            });
        }
        Zip::from(&mut hidden).and(&mask).for_each(|h, &k| *h = *h * k);
    }
    let agg_hidden = aggregate(hidden.view(), nbrs, weighted)?;
    let reconstruction = agg_hidden.dot(&state.dec_weight) + &state.dec_bias;
    Ok(ForwardPass {
        agg_x,
        pre_activation,
        hidden,
        agg_hidden,
        reconstruction,
    })
}

fn check_same_shape<F>(a: &ArrayView2<'_, F>, b: &ArrayView2<'_, F>) -> Result<()> {
    if a.dim() != b.dim() {
        let (expected, actual) = if a.nrows() != b.nrows() {
            (a.nrows(), b.nrows())
        } else {
            (a.ncols(), b.ncols())
        };
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// `Σ_i ‖x_i − x̂_i‖₂`.
pub fn loss<F: Real>(x: ArrayView2<'_, F>, x_hat: ArrayView2<'_, F>) -> Result<F> {
    check_same_shape(&x, &x_hat)?;
    Ok(Zip::from(x.rows())
        .and(x_hat.rows())
        .fold(F::zero(), |acc, a, b| acc + row_l2(a, b)))
}

fn row_l2<F: Real>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> F {
    a.iter()
        .zip(b.iter())
        .map(|(&u, &v)| (u - v) * (u - v))
        .sum::<F>()
        .sqrt()
}

fn row_l1<F: Real>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> F {
    a.iter().zip(b.iter()).map(|(&u, &v)| (u - v).abs()).sum()
}

/// Gradients of [`loss`] with respect to each parameter tensor.
pub fn gradients<F: Real>(
    x: ArrayView2<'_, F>,
    state: &IdModelState<F>,
    nbrs: &Neighborhoods<F>,
    weighted: bool,
    mask: Option<ArrayView2<'_, F>>,
) -> Result<(F, IdModelState<F>)> {
    let fp = forward(x, state, nbrs, weighted, mask)?;
    let op = nbrs.operator(weighted);
    let floor = F::lit(RESIDUAL_NORM_FLOOR);

    // d loss / d x̂_i = (x̂_i − x_i) / ‖x̂_i − x_i‖
    let mut g_out = &fp.reconstruction - &x;
    let mut total = F::zero();
    for mut row in g_out.rows_mut() {
        let norm = row.iter().map(|&v| v * v).sum::<F>().sqrt();
        total = total + norm;
        let denom = norm.max(floor);
        row.mapv_inplace(|v| v / denom);
    }

    let dec_weight = fp.agg_hidden.t().dot(&g_out);
    let dec_bias = g_out.sum_axis(Axis(0));
    let g_agg_hidden = g_out.dot(&state.dec_weight.t());
    let mut g_hidden = op.transpose_mul_dense(g_agg_hidden.view())?;
    if let Some(mask) = mask {
        Zip::from(&mut g_hidden).and(&mask).for_each(|g, &k| *g = *g * k);
    }
    Zip::from(&mut g_hidden).and(&fp.pre_activation).for_each(|g, &z| {
        if z <= F::zero() {
            *g = F::zero();
        }
    });
    let enc_weight = fp.agg_x.t().dot(&g_hidden);
    let enc_bias = g_hidden.sum_axis(Axis(0));
    Ok((
        total,
        IdModelState {
            enc_weight,
            enc_bias,
            dec_weight,
            dec_bias,
        },
    ))
}

struct Adam<F> {
    m: IdModelState<F>,
    v: IdModelState<F>,
    t: i32,
}

impl<F: Real> Adam<F> {
    fn new(d: usize, h: usize) -> Self {
        Self {
            m: IdModelState::zeros(d, h),
            v: IdModelState::zeros(d, h),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut IdModelState<F>, grads: &IdModelState<F>, lr: f64) {
        self.t += 1;
        let (b1, b2) = (F::lit(ADAM_BETA1), F::lit(ADAM_BETA2));
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        let (lr, eps) = (F::lit(lr), F::lit(ADAM_EPS));
        macro_rules! update {
            ($field:ident) => {
                Zip::from(&mut params.$field)
                    .and(&mut self.m.$field)
                    .and(&mut self.v.$field)
                    .and(&grads.$field)
                    .for_each(|p, m, v, &g| {
                        *m = b1 * *m + (F::one() - b1) * g;
                        *v = b2 * *v + (F::one() - b2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                    })
            };
        }
        update!(enc_weight);
        update!(enc_bias);
        update!(dec_weight);
        update!(dec_bias);
    }
}

/// Trained parameters and the full-batch loss before every update.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<F> {
    pub state: IdModelState<F>,
    pub losses: Vec<F>,
}

pub fn train<F: Real>(g: &AttributedGraph, pov: &PovResult<F>, hp: &IdHyperparams) -> Result<IdModelState<F>> {
    Ok(train_with_history(g, pov, hp)?.state)
}

pub fn train_with_history<F: Real>(
    g: &AttributedGraph,
    pov: &PovResult<F>,
    hp: &IdHyperparams,
) -> Result<TrainOutcome<F>> {
    hp.validate()?;
    let x: Array2<F> = g.features().mapv(F::lit);
    let nbrs = Neighborhoods::from_pov(&pov.pov);
    train_on(x.view(), &nbrs, hp)
}

pub fn train_on<F: Real>(x: ArrayView2<'_, F>, nbrs: &Neighborhoods<F>, hp: &IdHyperparams) -> Result<TrainOutcome<F>> {
    hp.validate()?;
    let (n, d) = x.dim();
    let h = hp.hidden_channels;
    let mut rng = Pcg64::seed_from_u64(hp.seed);
    let mut state = IdModelState::init(d, h, &mut rng);
    let mut adam = Adam::new(d, h);
    let mut losses = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        let mask = (hp.dropout > 0.0).then(|| dropout_mask::<F>(n, h, hp.dropout, &mut rng));
        let (total, grads) = gradients(
            x,
            &state,
            nbrs,
            hp.weighted_aggregation,
            mask.as_ref().map(|m| m.view()),
        )?;
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        losses.push(total);
        adam.step(&mut state, &grads, hp.learning_rate_at(epoch));
    }
    Ok(TrainOutcome { state, losses })
}

/// Per-node scores with the two terms kept apart, so any `(γ, λ)` can be
/// rescored without retraining.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport<F> {
    pub scores: Vec<F>,
    /// `‖x_i − x̂_i‖₁`.
    pub reconstruction_error: Vec<F>,
    /// `‖mean_graph − x̂_i‖₁`.
    pub mean_error: Vec<F>,
    pub reconstruction: Array2<F>,
    pub mean_graph: Array1<F>,
}

impl<F: Real> ScoreReport<F> {
    pub fn rescored(&self, gamma: f64, lambda: f64) -> Vec<F> {
        combine(&self.reconstruction_error, &self.mean_error, gamma, lambda)
    }
}

fn combine<F: Real>(recon: &[F], mean: &[F], gamma: f64, lambda: f64) -> Vec<F> {
    let (g, l) = (F::lit(gamma), F::lit(lambda));
    recon.iter().zip(mean).map(|(&a, &b)| g * a + l * b).collect()
}

/// `γ‖x_i − x̂_i‖₁ + λ‖mean_graph − x̂_i‖₁` per node.
pub fn score<F: Real>(
    x: ArrayView2<'_, F>,
    x_hat: ArrayView2<'_, F>,
    mean_graph: ArrayView1<'_, F>,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<F>> {
    Ok(score_report(x, x_hat.to_owned(), mean_graph.to_owned(), gamma, lambda)?.scores)
}

fn score_report<F: Real>(
    x: ArrayView2<'_, F>,
    x_hat: Array2<F>,
    mean_graph: Array1<F>,
    gamma: f64,
    lambda: f64,
) -> Result<ScoreReport<F>> {
    check_same_shape(&x, &x_hat.view())?;
    if mean_graph.len() != x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x.ncols(),
            actual: mean_graph.len(),
        });
    }
    let reconstruction_error: Vec<F> = x
        .rows()
        .into_iter()
        .zip(x_hat.rows())
        .map(|(a, b)| row_l1(a, b))
        .collect();
    let mean_error: Vec<F> = x_hat.rows().into_iter().map(|b| row_l1(mean_graph.view(), b)).collect();
    Ok(ScoreReport {
        scores: combine(&reconstruction_error, &mean_error, gamma, lambda),
        reconstruction_error,
        mean_error,
        reconstruction: x_hat,
        mean_graph,
    })
}

/// Scores a trained model in evaluation mode (no dropout).
pub fn score_model<F: Real>(
    g: &AttributedGraph,
    pov: &PovResult<F>,
    state: &IdModelState<F>,
    hp: &IdHyperparams,
) -> Result<ScoreReport<F>> {
    let x: Array2<F> = g.features().mapv(F::lit);
    let nbrs = Neighborhoods::from_pov(&pov.pov);
    let fp = forward(x.view(), state, &nbrs, hp.weighted_aggregation, None)?;
    let mg = mean_graph(pov, x.view())?;
    score_report(x.view(), fp.reconstruction, mg, hp.gamma, hp.lambda)
}

/// Uniform node distribution, points of view at `cfg`, training and scoring.
pub fn detect<F: Real>(g: &AttributedGraph, cfg: PovConfig, hp: &IdHyperparams) -> Result<ScoreReport<F>> {
    hp.validate()?;
    let pov = compute_pov(&adjacency::<F>(g), &NodeDistribution::uniform(g.num_nodes()), cfg)?;
    detect_with_pov(g, &pov, hp)
}

/// As [`detect`] with precomputed points of view.
pub fn detect_with_pov<F: Real>(g: &AttributedGraph, pov: &PovResult<F>, hp: &IdHyperparams) -> Result<ScoreReport<F>> {
    let state = train(g, pov, hp)?;
    score_model(g, pov, &state, hp)
}
