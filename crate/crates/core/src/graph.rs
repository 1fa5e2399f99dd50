// SPDX-License-Identifier: Apache-2.0

//! Attributed graphs, the on-disk dataset directory format, and synthetic
//! generators.
//!
//! A dataset directory holds:
//!
//! * `meta.json`: `{"num_nodes", "num_edges", "num_features", "has_labels", "name"}`
//! * `edges.csv`: header `src,dst`, one undirected edge per line with `src < dst`
//! * `features.csv`: header `f0,...,f{d-1}`, one row per node in node order
//! * `labels.csv` (optional): header `label`, values `0`/`1`

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Dense zero-based node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl From<usize> for NodeId {
    fn from(v: usize) -> Self {
        NodeId(v)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Simple undirected graph with per-node attribute vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    name: String,
    num_nodes: usize,
    /// Normalized so that `src < dst`, in input order.
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_features: usize,
    pub has_labels: bool,
    pub name: String,
}

impl AttributedGraph {
    /// Validates and builds a graph. Edges may be given in either
    /// orientation; self-loops and duplicate undirected edges are rejected.
    pub fn new(
        name: impl Into<String>,
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        features: Array2<f64>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        if features.nrows() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "features have {} rows for {} nodes",
                features.nrows(),
                num_nodes
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGraph(format!("non-finite feature {bad}")));
        }
        if let Some(l) = &labels {
            if l.len() != num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "{} labels for {} nodes",
                    l.len(),
                    num_nodes
                )));
            }
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has an endpoint out of range"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            normalized.push(e);
        }
        Ok(Self {
            name: name.into(),
            num_nodes,
            edges: normalized,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn num_outliers(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().filter(|&&b| b).count())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let e = (u.min(v), u.max(v));
        self.edges.contains(&e)
    }

    /// Same topology and labels, new feature matrix.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.num_nodes,
            self.edges.clone(),
            features,
            self.labels.clone(),
        )
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            num_nodes: self.num_nodes,
            num_edges: self.edges.len(),
            num_features: self.features.ncols(),
            has_labels: self.labels.is_some(),
            name: self.name.clone(),
        }
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Membership mask of the connected component containing `start`.
    pub fn component_of(&self, start: usize) -> Vec<bool> {
        let adj = self.neighbor_lists();
        let mut seen = vec![false; self.num_nodes];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    pub fn is_connected(&self) -> bool {
        self.num_nodes == 0 || self.component_of(0).iter().all(|&b| b)
    }
}

/// Symmetric 0/1 adjacency matrix with zero diagonal.
pub fn adjacency<T: Scalar>(g: &AttributedGraph) -> SparseMatrix<T> {
    SparseMatrix::from_triplets(
        g.num_nodes,
        g.edges.iter().flat_map(|&(u, v)| [(u, v, T::one()), (v, u, T::one())]),
    )
    .expect("validated graph yields a valid adjacency")
}

fn load_err(file: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Load {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_line(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[String]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| load_err(path, 1, e.to_string()))?;
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(load_err(
            path,
            1,
            format!(
                "expected header {:?}, found {:?}",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

/// Loads a dataset directory (see the module docs for the layout).
pub fn load_attributed_graph(dir: impl AsRef<Path>) -> Result<AttributedGraph> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_text).map_err(|e| load_err(&meta_path, e.line(), e.to_string()))?;
    let n = meta.num_nodes;

    let edges_path = dir.join("edges.csv");
    let mut rdr = open_csv(&edges_path)?;
    check_header(&edges_path, &mut rdr, &["src".into(), "dst".into()])?;
    let mut edges = Vec::with_capacity(meta.num_edges);
    let mut seen = HashSet::with_capacity(meta.num_edges);
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(last_line + 1, |p| p.line() as usize);
            load_err(&edges_path, line, e.to_string())
        })?;
        let line = csv_line(&rec);
        last_line = line;
        if rec.len() != 2 {
            return Err(load_err(&edges_path, line, "expected 2 fields"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| load_err(&edges_path, line, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(&rec[0])?, parse(&rec[1])?);
        if u == v {
            return Err(load_err(&edges_path, line, format!("self-loop at node {u}")));
        }
        if u >= n || v >= n {
            return Err(load_err(
                &edges_path,
                line,
                format!("endpoint out of range for {n} nodes"),
            ));
        }
        if u > v {
            return Err(load_err(&edges_path, line, "edge must satisfy src < dst"));
        }
        if !seen.insert((u, v)) {
            return Err(load_err(&edges_path, line, format!("duplicate edge ({u}, {v})")));
        }
        edges.push((u, v));
    }
    if edges.len() != meta.num_edges {
        return Err(load_err(
            &edges_path,
            last_line,
            format!(
                "count mismatch: {} edges, meta.json says {}",
                edges.len(),
                meta.num_edges
            ),
        ));
    }

    let feat_path = dir.join("features.csv");
    let mut rdr = open_csv(&feat_path)?;
    let header: Vec<String> = (0..meta.num_features).map(|k| format!("f{k}")).collect();
    check_header(&feat_path, &mut rdr, &header)?;
    let mut values = Vec::with_capacity(n * meta.num_features);
    let mut rows = 0;
    let mut last_line = 1;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(last_line + 1, |p| p.line() as usize);
            load_err(&feat_path, line, e.to_string())
        })?;
        let line = csv_line(&rec);
        last_line = line;
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| load_err(&feat_path, line, format!("invalid number {field:?}")))?;
            if !v.is_finite() {
                return Err(load_err(&feat_path, line, format!("non-finite feature {field}")));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(load_err(
            &feat_path,
            last_line,
            format!("count mismatch: {rows} feature rows, meta.json says {n} nodes"),
        ));
    }
    let features =
        Array2::from_shape_vec((n, meta.num_features), values).map_err(|e| load_err(&feat_path, 0, e.to_string()))?;

    let labels = if meta.has_labels {
        let lab_path = dir.join("labels.csv");
        let mut rdr = open_csv(&lab_path)?;
        check_header(&lab_path, &mut rdr, &["label".into()])?;
        let mut labels = Vec::with_capacity(n);
        let mut last_line = 1;
        for rec in rdr.records() {
            let rec = rec.map_err(|e| load_err(&lab_path, last_line + 1, e.to_string()))?;
            let line = csv_line(&rec);
            last_line = line;
            labels.push(match &rec[0] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(load_err(
                        &lab_path,
                        line,
                        format!("label must be 0 or 1, got {other:?}"),
                    ))
                }
            });
        }
        if labels.len() != n {
            return Err(load_err(
                &lab_path,
                last_line,
                format!("count mismatch: {} labels for {n} nodes", labels.len()),
            ));
        }
        Some(labels)
    } else {
        None
    };

    AttributedGraph::new(meta.name, n, edges, features, labels)
}

/// Writes `g` as a dataset directory. Features use 17 significant digits, so
/// loading the directory back reproduces them bit for bit.
pub fn save_attributed_graph(g: &AttributedGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        let path: PathBuf = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    };

    let meta = serde_json::to_string_pretty(&g.meta()).expect("meta serializes");
    write("meta.json", &|w| writeln!(w, "{meta}"))?;
    write("edges.csv", &|w| {
        writeln!(w, "src,dst")?;
        for &(u, v) in &g.edges {
            writeln!(w, "{u},{v}")?;
        }
        Ok(())
    })?;
    write("features.csv", &|w| {
        let header: Vec<String> = (0..g.num_features()).map(|k| format!("f{k}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in g.features.outer_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    if let Some(labels) = &g.labels {
        write("labels.csv", &|w| {
            writeln!(w, "label")?;
            for &l in labels {
                writeln!(w, "{}", u8::from(l))?;
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn one_hot(n: usize) -> Array2<f64> {
    Array2::eye(n)
}

/// Complete graph `K_n`; features default to one-hot rows.
pub fn make_complete_graph(n: usize, features: Option<Array2<f64>>) -> Result<AttributedGraph> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "complete graph needs at least 2 nodes, got {n}"
        )));
    }
    let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    AttributedGraph::new(
        format!("complete{n}"),
        n,
        edges,
        features.unwrap_or_else(|| one_hot(n)),
        None,
    )
}

/// Probability of each non-tree intra-cluster pair becoming an edge.
pub const CLUSTER_EXTRA_EDGE_PROB: f64 = 0.3;

/// Clusters numbered consecutively, each a random spanning tree plus extra
/// edges, joined by the given `bridges`. Features are one-hot.
pub fn make_clustered_graph(cluster_sizes: &[usize], bridges: &[(usize, usize)], seed: u64) -> Result<AttributedGraph> {
    if cluster_sizes.is_empty() || cluster_sizes.contains(&0) {
        return Err(Error::InvalidParameter(
            "cluster sizes must be nonempty and positive".into(),
        ));
    }
    let n: usize = cluster_sizes.iter().sum();
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut offset = 0;
    for &size in cluster_sizes {
        let mut order: Vec<usize> = (offset..offset + size).collect();
        order.shuffle(&mut rng);
        let mut in_tree = HashSet::new();
        for k in 1..size {
            let parent = order[rng.random_range(0..k)];
            let e = (parent.min(order[k]), parent.max(order[k]));
            in_tree.insert(e);
            edges.push(e);
        }
        for i in offset..offset + size {
            for j in i + 1..offset + size {
                if !in_tree.contains(&(i, j)) && rng.random_bool(CLUSTER_EXTRA_EDGE_PROB) {
                    edges.push((i, j));
                }
            }
        }
        offset += size;
    }
    for &(u, v) in bridges {
        if u >= n || v >= n || u == v {
            return Err(Error::InvalidParameter(format!(
                "invalid bridge ({u}, {v}) for {n} nodes"
            )));
        }
        edges.push((u, v));
    }
    AttributedGraph::new("clustered", n, edges, one_hot(n), None)
}

/// Uniformly random simple graph with `num_edges` edges and features drawn
/// from U[0, 1). Used for scalability runs.
pub fn make_random_graph(
    num_nodes: usize,
    num_edges: usize,
    num_features: usize,
    seed: u64,
) -> Result<AttributedGraph> {
    let max_edges = num_nodes.saturating_mul(num_nodes.saturating_sub(1)) / 2;
    if num_edges > max_edges {
        return Err(Error::InvalidParameter(format!(
            "{num_edges} edges exceed the {max_edges} possible on {num_nodes} nodes"
        )));
    }
    let mut rng = Pcg64::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(num_edges);
    let mut edges = Vec::with_capacity(num_edges);
    while edges.len() < num_edges {
        let u = rng.random_range(0..num_nodes);
        let v = rng.random_range(0..num_nodes);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if seen.insert(e) {
            edges.push(e);
        }
    }
    let features = Array2::from_shape_fn((num_nodes, num_features), |_| rng.random::<f64>());
    AttributedGraph::new("random", num_nodes, edges, features, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AttributedGraph {
        AttributedGraph::new("p3", 3, vec![(0, 1), (1, 2)], Array2::zeros((3, 1)), None).unwrap()
    }

    #[test]
    fn adjacency_of_k2() {
        let g = make_complete_graph(2, None).unwrap();
        assert_eq!(adjacency::<i64>(&g).to_dense(), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn adjacency_of_k3_is_all_ones_off_diagonal() {
        let a = adjacency::<i64>(&make_complete_graph(3, None).unwrap()).to_dense();
        for (i, row) in a.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, i64::from(i != j));
            }
        }
    }

    #[test]
    fn adjacency_of_path_graph() {
        let a = adjacency::<i64>(&path3());
        assert_eq!(a.nnz(), 4);
        assert_eq!(a.get(0, 2), 0);
        assert!(a.is_symmetric());
    }

    #[test]
    fn complete_graph_edge_counts() {
        assert_eq!(make_complete_graph(3, None).unwrap().num_edges(), 3);
        assert_eq!(make_complete_graph(10, None).unwrap().num_edges(), 45);
        assert!(make_complete_graph(1, None).is_err());
    }

    #[test]
    fn graph_rejects_self_loops_and_duplicates() {
        let f = Array2::zeros((3, 1));
        assert!(AttributedGraph::new("x", 3, vec![(1, 1)], f.clone(), None).is_err());
        assert!(AttributedGraph::new("x", 3, vec![(0, 1), (1, 0)], f.clone(), None).is_err());
        assert!(AttributedGraph::new("x", 3, vec![(0, 3)], f, None).is_err());
    }

    #[test]
    fn clustered_graph_bridge_is_a_cut_edge() {
        let g = make_clustered_graph(&[5, 5], &[(0, 5)], 7).unwrap();
        assert!(g.is_connected());
        let without: Vec<_> = g.edges().iter().copied().filter(|&e| e != (0, 5)).collect();
        let h = AttributedGraph::new("h", 10, without, g.features().clone(), None).unwrap();
        assert!(!h.is_connected());
    }

    #[test]
    fn single_cluster_is_connected() {
        let g = make_clustered_graph(&[4], &[], 1).unwrap();
        assert!(g.is_connected());
    }

    #[test]
    fn clustered_graph_is_deterministic() {
        let a = make_clustered_graph(&[6, 6], &[(1, 7)], 42).unwrap();
        let b = make_clustered_graph(&[6, 6], &[(1, 7)], 42).unwrap();
        assert_eq!(a.edges(), b.edges());
    }

    #[test]
    fn clustered_graph_rejects_bad_bridges() {
        assert!(make_clustered_graph(&[3, 3], &[(0, 6)], 0).is_err());
    }

    #[test]
    fn random_graph_has_requested_size() {
        let g = make_random_graph(100, 300, 4, 3).unwrap();
        assert_eq!(g.num_edges(), 300);
        assert_eq!(g.features().dim(), (100, 4));
        assert!(make_random_graph(3, 4, 1, 0).is_err());
    }
}
