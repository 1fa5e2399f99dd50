// SPDX-License-Identifier: Apache-2.0

//! Randomized property suites over the path algebra, the symbolic element
//! monoid and the point-of-view operator. Each suite is seeded and reports
//! how many individual checks it ran.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{adjacency, make_complete_graph, AttributedGraph, NodeId};
use crate::monoid::{circ, circ_power, mi, CircLevels, PowerOptions};
use crate::pov::{induced_weights, pov_matrix, pov_node, NodeDistribution};
use crate::smult::{
    bullet, count_paths, directed_edges, embed, is_isomorphic, leq_capped, power_element, restrict, SMultElement,
};
use crate::sparse::SparseMatrix;

/// Left operands of `≤` in the suites stay below this many instances.
const LEQ_CAP: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Integer `(I + A)^m − I` equals symbolic path counts in the m-fold
    /// graph element.
    PathCount,
    /// m-fold `∘`-power equals `(I + B)^m − I` and the binomial sum.
    Binomial,
    /// Points of view on complete graphs converge to `P` as `m` grows.
    Convergence,
    /// `≤` is reflexive, antisymmetric up to isomorphism, transitive and
    /// compatible with `•`.
    PartialOrder,
    /// Restriction to a subgraph is a monoid homomorphism.
    Restriction,
    /// `x ≤ R(y)` iff `In(x) ≤ y`.
    Adjunction,
    /// The restricted power of the completion is the graph's power, and it
    /// bounds exactly the elements whose inclusion the completion's power
    /// bounds.
    Approximation,
    /// `p/(1−p)·x = p·x + p·(p/(1−p))·x`.
    OddsIdentity,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::PathCount,
        Suite::Binomial,
        Suite::Convergence,
        Suite::PartialOrder,
        Suite::Restriction,
        Suite::Adjunction,
        Suite::Approximation,
        Suite::OddsIdentity,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Suite::PathCount => "path-count",
            Suite::Binomial => "binomial",
            Suite::Convergence => "convergence",
            Suite::PartialOrder => "partial-order",
            Suite::Restriction => "restriction",
            Suite::Adjunction => "adjunction",
            Suite::Approximation => "approximation",
            Suite::OddsIdentity => "odds-identity",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Suite::PathCount => "MI(m) equals symbolic path counts",
            Suite::Binomial => "circ power equals (I+B)^m - I and the binomial sum",
            Suite::Convergence => "pov on complete graphs converges to P",
            Suite::PartialOrder => "order laws of <= on elements",
            Suite::Restriction => "restriction is a homomorphism",
            Suite::Adjunction => "inclusion and restriction are adjoint",
            Suite::Approximation => "restricted completion power equals graph power",
            Suite::OddsIdentity => "odds decomposition identity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.id() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|s| s.id()).collect();
            Error::InvalidParameter(format!("unknown suite {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub passed: bool,
    pub checks: usize,
    /// First failure, or a short summary when everything held.
    pub detail: String,
    pub elapsed_s: f64,
}

pub type CircFn = dyn Fn(&SparseMatrix<f64>, &SparseMatrix<f64>) -> Result<SparseMatrix<f64>> + Sync;

/// `A + B − AB`: a deliberately wrong `∘` for mutation smoke tests.
pub fn sign_flipped_circ(a: &SparseMatrix<f64>, b: &SparseMatrix<f64>) -> Result<SparseMatrix<f64>> {
    let ab = a.to_array().dot(&b.to_array());
    SparseMatrix::from_array((a.to_array() + b.to_array() - ab).view())
}

pub struct VerifyOptions<'a> {
    pub seed: u64,
    /// The `∘` implementation exercised by the binomial suite.
    pub circ: &'a CircFn,
}

impl Default for VerifyOptions<'_> {
    fn default() -> Self {
        Self {
            seed: 0,
            circ: &|a, b| circ(a, b),
        }
    }
}

/// Runs one suite, turning errors into a failed row.
pub fn run_suite(suite: Suite, opts: &VerifyOptions<'_>) -> SuiteResult {
    let start = Instant::now();
    let mut rng = Pcg64::seed_from_u64(opts.seed ^ (suite as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let outcome = match suite {
        Suite::PathCount => path_count(&mut rng),
        Suite::Binomial => binomial(&mut rng, opts.circ),
        Suite::Convergence => convergence(&mut rng),
        Suite::PartialOrder => partial_order(&mut rng),
        Suite::Restriction => restriction(&mut rng),
        Suite::Adjunction => adjunction(&mut rng),
        Suite::Approximation => approximation(&mut rng),
        Suite::OddsIdentity => odds_identity(&mut rng),
    };
    let (passed, checks, detail) = match outcome {
        Ok(Tally { checks, failure: None }) => (true, checks, format!("{checks} checks passed")),
        Ok(Tally {
            checks,
            failure: Some(msg),
        }) => (false, checks, msg),
        Err(e) => (false, 0, format!("error: {e}")),
    };
    SuiteResult {
        suite,
        passed,
        checks,
        detail,
        elapsed_s: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all(opts: &VerifyOptions<'_>) -> Vec<SuiteResult> {
    Suite::ALL.into_iter().map(|s| run_suite(s, opts)).collect()
}

#[derive(Default)]
struct Tally {
    checks: usize,
    failure: Option<String>,
}

impl Tally {
    /// Records a check; keeps only the first failure message.
    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(msg());
        }
    }

    fn failed(&self) -> bool {
        self.failure.is_some()
    }
}

/// Simple graph on `n` nodes, each pair an edge with probability `p`.
pub fn random_simple_graph(n: usize, p: f64, rng: &mut impl Rng) -> AttributedGraph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    AttributedGraph::new("random", n, edges, Array2::zeros((n, 1)), None).expect("valid random graph")
}

/// `•`-product of up to `max_instances` random single-edge elements drawn
/// from `edges`; with `drop_paths`, each path is then kept with probability
/// 0.7.
pub fn random_element(
    num_nodes: usize,
    edges: &[(usize, usize)],
    max_instances: usize,
    drop_paths: bool,
    rng: &mut impl Rng,
) -> Result<SMultElement> {
    let mut x = SMultElement::identity(num_nodes);
    if edges.is_empty() {
        return Ok(x);
    }
    let k = rng.random_range(0..=max_instances);
    for _ in 0..k {
        let &(u, v) = edges.choose(rng).expect("nonempty");
        x = bullet(&x, &SMultElement::edge(num_nodes, u, v)?)?;
    }
    if drop_paths {
        let parts: Vec<_> = x.instances().iter().map(|e| (e.src, e.dst, e.copy_tag)).collect();
        let kept: Vec<_> = x.paths().iter().filter(|_| rng.random_bool(0.7)).cloned().collect();
        x = SMultElement::from_parts(num_nodes, &parts, kept)?;
    }
    Ok(x)
}

fn path_count(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..50 {
        let n = rng.random_range(2..=6);
        let g = random_simple_graph(n, 0.5, rng);
        let m = rng.random_range(1..=4);
        let counts = mi(&adjacency::<i64>(&g), m)?;
        let element = power_element(&g, m)?;
        for i in 0..n {
            for j in 0..n {
                let symbolic = count_paths(&element, NodeId(i), NodeId(j))?;
                let algebraic = counts.get(i, j);
                t.check(u64::try_from(algebraic).ok() == Some(symbolic), || {
                    format!("case {case} (n={n}, m={m}): entry ({i},{j}) is {algebraic}, symbolic count {symbolic}")
                });
            }
        }
    }
    Ok(t)
}

fn binomial_coefficient(m: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

fn binomial(rng: &mut Pcg64, circ_fn: &CircFn) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..100 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=6);
        let b = Array2::from_shape_simple_fn((n, n), || rng.random_range(-0.5..=0.5));
        let bs = SparseMatrix::from_array(b.view())?;

        let mut folded = bs.clone();
        for _ in 1..m {
            folded = circ_fn(&folded, &bs)?;
        }
        let recurrence = circ_power(&bs, m)?.to_array();

        let eye = Array2::<f64>::eye(n);
        let shifted = &eye + &b;
        let mut power = eye.clone();
        let mut bk = eye.clone();
        let mut sum = Array2::<f64>::zeros((n, n));
        for k in 1..=m {
            power = power.dot(&shifted);
            bk = bk.dot(&b);
            sum.scaled_add(binomial_coefficient(m, k), &bk);
        }
        let expanded = power - &eye;

        let scale = expanded.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
        let diff = |a: &Array2<f64>, b: &Array2<f64>| {
            a.iter()
                .zip(b.iter())
                .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
                / scale
        };
        let folded = folded.to_array();
        let checks = [
            ("m-fold circ vs (I+B)^m - I", diff(&folded, &expanded)),
            ("recurrence vs (I+B)^m - I", diff(&recurrence, &expanded)),
            ("(I+B)^m - I vs binomial sum", diff(&expanded, &sum)),
        ];
        for (what, err) in checks {
            t.check(err <= 1e-9, || {
                format!("case {case} (n={n}, m={m}): {what} differ by {err:.3e}")
            });
        }
    }
    Ok(t)
}

/// Successive-level change below which a point of view counts as converged.
const CONVERGENCE_STEP: f64 = 1e-12;
const CONVERGENCE_MAX_LEVEL: usize = 2000;

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn convergence(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for n in [3usize, 5, 10] {
        let adj = adjacency::<f64>(&make_complete_graph(n, None)?);
        for case in 0..20 {
            // Weights in [0.5, 1.5] keep every P_j below 3/4.
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..=1.5)).collect();
            let total: f64 = raw.iter().sum();
            let p = NodeDistribution::new(raw.iter().map(|r| r / total).collect())?;
            let w = induced_weights(&adj, &p, 0.0)?;
            let mut levels = CircLevels::new(w, PowerOptions::default())?;
            let rows = |levels: &CircLevels<f64>| -> Result<Vec<Vec<f64>>> {
                let result = pov_matrix(levels.current().clone())?;
                let mut rows: Vec<Vec<f64>> = (0..n)
                    .map(|i| pov_node(&result, NodeId(i)).map(|d| d.probs().to_vec()))
                    .collect::<Result<_>>()?;
                rows.push(result.pov_graph.probs().to_vec());
                Ok(rows)
            };
            let mut prev = rows(&levels)?;
            let mut converged = false;
            while levels.level() < CONVERGENCE_MAX_LEVEL {
                levels.advance()?;
                let cur = rows(&levels)?;
                let change = prev.iter().zip(&cur).map(|(a, b)| l1(a, b)).fold(0.0, f64::max);
                prev = cur;
                if change < CONVERGENCE_STEP {
                    converged = true;
                    break;
                }
            }
            let m = levels.level();
            t.check(converged, || format!("n={n} case {case}: no convergence by m={m}"));
            for (v, row) in prev.iter().enumerate() {
                let dist = l1(row, p.probs());
                t.check(dist < 1e-6, || {
                    let who = if v == n {
                        "graph".to_string()
                    } else {
                        format!("node {v}")
                    };
                    format!("n={n} case {case}: {who} at m={m} is {dist:.3e} from P")
                });
            }
        }
    }
    Ok(t)
}

type EdgeList = Vec<(usize, usize)>;

/// A graph with `n ≤ 5` nodes, its directed edges and those of its completion.
fn galois_setting(rng: &mut Pcg64) -> Result<(AttributedGraph, EdgeList, EdgeList)> {
    let n = rng.random_range(2..=5);
    let g = random_simple_graph(n, 0.5, rng);
    let c = make_complete_graph(n, None)?;
    let (sub, complete) = (directed_edges(&g), directed_edges(&c));
    Ok((g, sub, complete))
}

fn partial_order(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..60 {
        let (g, _, complete) = galois_setting(rng)?;
        let n = g.num_nodes();
        let drop = rng.random_bool(0.5);
        let x = random_element(n, &complete, 6, drop, rng)?;
        let a = random_element(n, &complete, 3, false, rng)?;
        let b = random_element(n, &complete, 3, false, rng)?;
        let z = random_element(n, &complete, 3, drop, rng)?;
        let y = bullet(&x, &a)?;
        let w = bullet(&y, &b)?;
        let other = random_element(n, &complete, 6, drop, rng)?;

        for (name, e) in [("x", &x), ("y", &y), ("other", &other)] {
            t.check(leq_capped(e, e, LEQ_CAP)?, || {
                format!("case {case}: {name} <= {name} fails")
            });
        }
        let xy = leq_capped(&x, &y, LEQ_CAP)?;
        let yw = leq_capped(&y, &w, LEQ_CAP)?;
        t.check(xy, || format!("case {case}: x <= x•a fails"));
        if xy && yw {
            t.check(leq_capped(&x, &w, LEQ_CAP)?, || {
                format!("case {case}: transitivity fails")
            });
        }
        for (p, q) in [(&x, &other), (&other, &x), (&x, &y)] {
            if leq_capped(p, q, LEQ_CAP)? && leq_capped(q, p, LEQ_CAP)? {
                t.check(is_isomorphic(p, q)?, || {
                    format!("case {case}: mutual <= without isomorphism")
                });
            }
        }
        if xy {
            let right = leq_capped(&bullet(&x, &z)?, &bullet(&y, &z)?, LEQ_CAP)?;
            let left = leq_capped(&bullet(&z, &x)?, &bullet(&z, &y)?, LEQ_CAP)?;
            t.check(right && left, || format!("case {case}: <= not compatible with •"));
        }
        if t.failed() {
            break;
        }
    }
    Ok(t)
}

fn restriction(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..100 {
        let (g, _, complete) = galois_setting(rng)?;
        let n = g.num_nodes();
        let drop = rng.random_bool(0.5);
        let x = random_element(n, &complete, 6, drop, rng)?;
        let y = random_element(n, &complete, 6, drop, rng)?;
        let lhs = restrict(&bullet(&x, &y)?, &g)?;
        let rhs = bullet(&restrict(&x, &g)?, &restrict(&y, &g)?)?;
        t.check(lhs.equivalent(&rhs), || {
            format!("case {case}: R(x•y) differs from R(x)•R(y)")
        });
        let id = SMultElement::identity(n);
        t.check(restrict(&id, &g)? == id, || format!("case {case}: R(1) is not 1"));
    }
    Ok(t)
}

fn adjunction(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    let mut related = 0;
    for case in 0..150 {
        let (g, sub, complete) = galois_setting(rng)?;
        let n = g.num_nodes();
        let x = random_element(n, &sub, 4, rng.random_bool(0.5), rng)?;
        // Half the time build y above In(x) so the relation is exercised.
        let y = if rng.random_bool(0.5) {
            bullet(&embed(&x), &random_element(n, &complete, 2, false, rng)?)?
        } else {
            random_element(n, &complete, 6, rng.random_bool(0.5), rng)?
        };
        let lhs = leq_capped(&x, &restrict(&y, &g)?, LEQ_CAP)?;
        let rhs = leq_capped(&embed(&x), &y, LEQ_CAP)?;
        related += usize::from(rhs);
        t.check(lhs == rhs, || {
            format!("case {case}: x <= R(y) is {lhs} but In(x) <= y is {rhs}")
        });
    }
    t.check(related > 0, || "no related pair was sampled".into());
    Ok(t)
}

fn approximation(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..30 {
        let n = rng.random_range(2..=4);
        let g = random_simple_graph(n, 0.6, rng);
        let c = make_complete_graph(n, None)?;
        let m = rng.random_range(1..=3);
        let cm = power_element(&c, m)?;
        let gm = power_element(&g, m)?;
        t.check(restrict(&cm, &g)?.equivalent(&gm), || {
            format!("case {case} (n={n}, m={m}): R(C^m) differs from G^m")
        });
        let sub = directed_edges(&g);
        for _ in 0..4 {
            let x = random_element(n, &sub, 3, rng.random_bool(0.5), rng)?;
            let lhs = leq_capped(&x, &gm, LEQ_CAP)?;
            let rhs = leq_capped(&embed(&x), &cm, LEQ_CAP)?;
            t.check(lhs == rhs, || {
                format!("case {case}: x <= G^m is {lhs} but In(x) <= C^m is {rhs}")
            });
        }
    }
    Ok(t)
}

fn odds_identity(rng: &mut Pcg64) -> Result<Tally> {
    let mut t = Tally::default();
    for case in 0..1000 {
        let p: f64 = rng.random_range(1e-6..1.0 - 1e-6);
        let x: f64 = rng.random_range(-1e3..1e3);
        let odds = p / (1.0 - p);
        let lhs = odds * x;
        let rhs = p * x + p * (odds * x);
        let rel = (lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE);
        t.check(rel <= 1e-12, || {
            format!("case {case}: p={p}, x={x}, relative gap {rel:.3e}")
        });
    }
    Ok(t)
}
