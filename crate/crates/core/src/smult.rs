// SPDX-License-Identifier: Apache-2.0

//! Symbolic (multigraph, path-set) elements and the `•` monoid over them.
//!
//! This is a desk-scale ground truth: everything is enumerated explicitly, so
//! sizes are guarded. Elements compose by disjoint union of their edge
//! instances and closure of their path sets under end-to-start composition:
//!
//! ```text
//! (M, S) • (N, T) = (M ⊕ N, S ∪ T ∪ { pq : p ∈ S, q ∈ T, end(p) = start(q) })
//! ```
//!
//! Edge-instance ids are dense (`0..len`). Each instance carries a `copy_tag`
//! naming the `•`-factor it came from; in the m-fold graph element this is
//! the position index that identifies equivalent edges across covers.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId};

/// Default cap on the number of paths `power_element` may materialize.
pub const DEFAULT_PATH_CAP: usize = 1_000_000;
/// Default cap on the instance count of the left operand of [`leq`].
pub const DEFAULT_LEQ_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DirectedEdgeInstance {
    pub id: usize,
    pub src: usize,
    pub dst: usize,
    pub copy_tag: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedMultigraph {
    pub num_nodes: usize,
    pub instances: Vec<DirectedEdgeInstance>,
}

/// A path is a nonempty sequence of instance ids forming a walk.
pub type Path = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SMultElement {
    multigraph: DirectedMultigraph,
    paths: BTreeSet<Path>,
}

impl SMultElement {
    /// The monoid identity: no instances, no paths.
    pub fn identity(num_nodes: usize) -> Self {
        Self {
            multigraph: DirectedMultigraph {
                num_nodes,
                instances: Vec::new(),
            },
            paths: BTreeSet::new(),
        }
    }

    /// The single-edge element `(e, {e})`.
    pub fn edge(num_nodes: usize, src: usize, dst: usize) -> Result<Self> {
        for v in [src, dst] {
            if v >= num_nodes {
                return Err(Error::NodeOutOfRange { id: v, num_nodes });
            }
        }
        Ok(Self {
            multigraph: DirectedMultigraph {
                num_nodes,
                instances: vec![DirectedEdgeInstance {
                    id: 0,
                    src,
                    dst,
                    copy_tag: 0,
                }],
            },
            paths: BTreeSet::from([vec![0]]),
        })
    }

    /// Builds an element from `(src, dst, copy_tag)` instances (ids are their
    /// positions) and a path set, validating every walk.
    pub fn from_parts(
        num_nodes: usize,
        instances: &[(usize, usize, usize)],
        paths: impl IntoIterator<Item = Path>,
    ) -> Result<Self> {
        let instances: Vec<_> = instances
            .iter()
            .enumerate()
            .map(|(id, &(src, dst, copy_tag))| DirectedEdgeInstance { id, src, dst, copy_tag })
            .collect();
        for e in &instances {
            for v in [e.src, e.dst] {
                if v >= num_nodes {
                    return Err(Error::NodeOutOfRange { id: v, num_nodes });
                }
            }
        }
        let paths: BTreeSet<Path> = paths.into_iter().collect();
        for p in &paths {
            if p.is_empty() {
                return Err(Error::InvalidParameter("empty path".into()));
            }
            if let Some(&bad) = p.iter().find(|&&id| id >= instances.len()) {
                return Err(Error::InvalidParameter(format!("unknown edge id {bad}")));
            }
            if p.windows(2).any(|w| instances[w[0]].dst != instances[w[1]].src) {
                return Err(Error::InvalidParameter(format!("path {p:?} is not a walk")));
            }
        }
        Ok(Self {
            multigraph: DirectedMultigraph { num_nodes, instances },
            paths,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.multigraph.num_nodes
    }

    pub fn multigraph(&self) -> &DirectedMultigraph {
        &self.multigraph
    }

    pub fn instances(&self) -> &[DirectedEdgeInstance] {
        &self.multigraph.instances
    }

    pub fn paths(&self) -> &BTreeSet<Path> {
        &self.paths
    }

    pub fn num_instances(&self) -> usize {
        self.multigraph.instances.len()
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn is_identity(&self) -> bool {
        self.multigraph.instances.is_empty() && self.paths.is_empty()
    }

    fn next_copy_tag(&self) -> usize {
        self.instances().iter().map(|e| e.copy_tag + 1).max().unwrap_or(0)
    }

    pub fn path_start(&self, p: &[usize]) -> usize {
        self.instances()[p[0]].src
    }

    pub fn path_end(&self, p: &[usize]) -> usize {
        self.instances()[*p.last().expect("paths are nonempty")].dst
    }

    /// Canonical representative: copy tags compressed to `0..k`, instances
    /// sorted by `(copy_tag, src, dst)` and relabeled in that order.
    pub fn canonical(&self) -> Self {
        let tags: BTreeSet<usize> = self.instances().iter().map(|e| e.copy_tag).collect();
        let tag_rank: HashMap<usize, usize> = tags.into_iter().enumerate().map(|(r, t)| (t, r)).collect();
        let mut order: Vec<&DirectedEdgeInstance> = self.instances().iter().collect();
        order.sort_by_key(|e| (tag_rank[&e.copy_tag], e.src, e.dst, e.id));
        let mut relabel = vec![0; order.len()];
        let instances = order
            .iter()
            .enumerate()
            .map(|(new_id, e)| {
                relabel[e.id] = new_id;
                DirectedEdgeInstance {
                    id: new_id,
                    src: e.src,
                    dst: e.dst,
                    copy_tag: tag_rank[&e.copy_tag],
                }
            })
            .collect();
        let paths = self
            .paths
            .iter()
            .map(|p| p.iter().map(|&id| relabel[id]).collect())
            .collect();
        Self {
            multigraph: DirectedMultigraph {
                num_nodes: self.num_nodes(),
                instances,
            },
            paths,
        }
    }

    /// Equality up to relabeling of instance ids and copy tags.
    pub fn equivalent(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

/// `x • y` with no size cap.
pub fn bullet(x: &SMultElement, y: &SMultElement) -> Result<SMultElement> {
    bullet_capped(x, y, usize::MAX)
}

/// `x • y`, failing if the result would hold more than `path_cap` paths.
pub fn bullet_capped(x: &SMultElement, y: &SMultElement, path_cap: usize) -> Result<SMultElement> {
    if x.num_nodes() != y.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: x.num_nodes(),
            actual: y.num_nodes(),
        });
    }
    let id_shift = x.num_instances();
    let tag_shift = x.next_copy_tag();
    let mut instances = x.instances().to_vec();
    instances.extend(y.instances().iter().map(|e| DirectedEdgeInstance {
        id: e.id + id_shift,
        src: e.src,
        dst: e.dst,
        copy_tag: e.copy_tag + tag_shift,
    }));

    let shifted: Vec<Path> = y
        .paths
        .iter()
        .map(|q| q.iter().map(|&id| id + id_shift).collect())
        .collect();
    let mut by_start: HashMap<usize, Vec<&Path>> = HashMap::new();
    for (q, orig) in shifted.iter().zip(y.paths.iter()) {
        by_start.entry(y.path_start(orig)).or_default().push(q);
    }

    let composed: usize = x
        .paths
        .iter()
        .map(|p| by_start.get(&x.path_end(p)).map_or(0, Vec::len))
        .sum();
    let total = x.num_paths() + y.num_paths() + composed;
    if total > path_cap {
        return Err(Error::SizeGuard {
            what: "paths",
            actual: total,
            cap: path_cap,
        });
    }

    let mut paths: BTreeSet<Path> = x.paths.clone();
    for p in &x.paths {
        if let Some(qs) = by_start.get(&x.path_end(p)) {
            for q in qs {
                let mut pq = p.clone();
                pq.extend_from_slice(q);
                paths.insert(pq);
            }
        }
    }
    paths.extend(shifted);
    Ok(SMultElement {
        multigraph: DirectedMultigraph {
            num_nodes: x.num_nodes(),
            instances,
        },
        paths,
    })
}

/// Both orientations of every edge of `g`.
pub fn directed_edges(g: &AttributedGraph) -> Vec<(usize, usize)> {
    g.edges().iter().flat_map(|&(u, v)| [(u, v), (v, u)]).collect()
}

/// The graph as an element: one instance per directed edge, every
/// single-edge path.
pub fn graph_element(g: &AttributedGraph) -> SMultElement {
    let instances: Vec<_> = directed_edges(g)
        .into_iter()
        .enumerate()
        .map(|(id, (src, dst))| DirectedEdgeInstance {
            id,
            src,
            dst,
            copy_tag: 0,
        })
        .collect();
    let paths = (0..instances.len()).map(|id| vec![id]).collect();
    SMultElement {
        multigraph: DirectedMultigraph {
            num_nodes: g.num_nodes(),
            instances,
        },
        paths,
    }
}

/// The m-fold `•`-power of the graph element.
pub fn power_element(g: &AttributedGraph, m: usize) -> Result<SMultElement> {
    power_element_capped(g, m, DEFAULT_PATH_CAP)
}

pub fn power_element_capped(g: &AttributedGraph, m: usize, path_cap: usize) -> Result<SMultElement> {
    if m == 0 {
        return Err(Error::ZeroLevel);
    }
    let base = graph_element(g);
    let mut acc = base.clone();
    for _ in 1..m {
        acc = bullet_capped(&acc, &base, path_cap)?;
    }
    Ok(acc)
}

/// Number of paths in `x` from `i` to `j`.
pub fn count_paths(x: &SMultElement, i: NodeId, j: NodeId) -> Result<u64> {
    let n = x.num_nodes();
    for v in [i, j] {
        if v.index() >= n {
            return Err(Error::NodeOutOfRange {
                id: v.index(),
                num_nodes: n,
            });
        }
    }
    Ok(x.paths
        .iter()
        .filter(|p| x.path_start(p) == i.index() && x.path_end(p) == j.index())
        .count() as u64)
}

/// Restriction from the completion to `g`: drops instances that are not
/// directed edges of `g` and every path through them.
pub fn restrict(x: &SMultElement, g: &AttributedGraph) -> Result<SMultElement> {
    if x.num_nodes() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.num_nodes(),
            actual: x.num_nodes(),
        });
    }
    let kept: HashSet<(usize, usize)> = directed_edges(g).into_iter().collect();
    let mut relabel = vec![None; x.num_instances()];
    let mut instances = Vec::new();
    for e in x.instances() {
        if kept.contains(&(e.src, e.dst)) {
            relabel[e.id] = Some(instances.len());
            instances.push(DirectedEdgeInstance {
                id: instances.len(),
                ..*e
            });
        }
    }
    let paths = x
        .paths
        .iter()
        .filter_map(|p| p.iter().map(|&id| relabel[id]).collect::<Option<Path>>())
        .collect();
    Ok(SMultElement {
        multigraph: DirectedMultigraph {
            num_nodes: x.num_nodes(),
            instances,
        },
        paths,
    })
}

/// Inclusion of an element of a subgraph's monoid into the completion's.
/// The representation is unchanged.
pub fn embed(x: &SMultElement) -> SMultElement {
    x.clone()
}

/// `x ≤ y`: some injection of `x`'s instances into `y`'s instances with the
/// same endpoints maps every path of `x` onto a path of `y`.
pub fn leq(x: &SMultElement, y: &SMultElement) -> Result<bool> {
    leq_capped(x, y, DEFAULT_LEQ_CAP)
}

pub fn leq_capped(x: &SMultElement, y: &SMultElement, cap: usize) -> Result<bool> {
    if x.num_nodes() != y.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: x.num_nodes(),
            actual: y.num_nodes(),
        });
    }
    if x.num_instances() > cap {
        return Err(Error::SizeGuard {
            what: "instances in left operand of leq",
            actual: x.num_instances(),
            cap,
        });
    }
    if x.num_instances() > y.num_instances() || x.num_paths() > y.num_paths() {
        return Ok(false);
    }

    let participation = |el: &SMultElement| {
        let mut c = vec![0usize; el.num_instances()];
        for p in &el.paths {
            for &id in p {
                c[id] += 1;
            }
        }
        c
    };
    let x_part = participation(x);
    let y_part = participation(y);

    let mut order: Vec<usize> = (0..x.num_instances()).collect();
    order.sort_by_key(|&id| (std::cmp::Reverse(x_part[id]), id));
    let mut position = vec![0; x.num_instances()];
    for (k, &id) in order.iter().enumerate() {
        position[id] = k;
    }

    let mut candidates: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for e in y.instances() {
        candidates.entry((e.src, e.dst)).or_default().push(e.id);
    }
    for list in candidates.values_mut() {
        list.sort_by_key(|&id| (y_part[id], id));
    }

    // Paths of x become checkable once their last-assigned instance is placed.
    let mut ready: Vec<Vec<&Path>> = vec![Vec::new(); x.num_instances()];
    for p in &x.paths {
        let last = p.iter().map(|&id| position[id]).max().expect("nonempty");
        ready[last].push(p);
    }

    let targets: HashSet<&[usize]> = y.paths.iter().map(Vec::as_slice).collect();
    let mut search = LeqSearch {
        x,
        order: &order,
        candidates: &candidates,
        ready: &ready,
        targets: &targets,
        assignment: vec![usize::MAX; x.num_instances()],
        used: vec![false; y.num_instances()],
        scratch: Vec::new(),
    };
    Ok(search.extend(0))
}

struct LeqSearch<'a> {
    x: &'a SMultElement,
    order: &'a [usize],
    candidates: &'a HashMap<(usize, usize), Vec<usize>>,
    ready: &'a [Vec<&'a Path>],
    targets: &'a HashSet<&'a [usize]>,
    assignment: Vec<usize>,
    used: Vec<bool>,
    scratch: Vec<usize>,
}

impl LeqSearch<'_> {
    fn extend(&mut self, k: usize) -> bool {
        if k == self.order.len() {
            return true;
        }
        let id = self.order[k];
        let e = self.x.instances()[id];
        let Some(cands) = self.candidates.get(&(e.src, e.dst)) else {
            return false;
        };
        for &target in cands {
            if self.used[target] {
                continue;
            }
            self.used[target] = true;
            self.assignment[id] = target;
            if self.paths_ok(k) && self.extend(k + 1) {
                return true;
            }
            self.used[target] = false;
            self.assignment[id] = usize::MAX;
        }
        false
    }

    fn paths_ok(&mut self, k: usize) -> bool {
        for p in &self.ready[k] {
            self.scratch.clear();
            self.scratch.extend(p.iter().map(|&id| self.assignment[id]));
            if !self.targets.contains(self.scratch.as_slice()) {
                return false;
            }
        }
        true
    }
}

/// Isomorphism test: equal sizes plus an order embedding, which is then
/// necessarily a bijection on instances and on paths.
pub fn is_isomorphic(x: &SMultElement, y: &SMultElement) -> Result<bool> {
    if x.num_instances() != y.num_instances() || x.num_paths() != y.num_paths() {
        return Ok(false);
    }
    leq_capped(x, y, usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_complete_graph;
    use ndarray::Array2;

    fn path3() -> AttributedGraph {
        AttributedGraph::new("p3", 3, vec![(0, 1), (1, 2)], Array2::zeros((3, 1)), None).unwrap()
    }

    fn empty(n: usize) -> AttributedGraph {
        AttributedGraph::new("e", n, vec![], Array2::zeros((n, 1)), None).unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let x = graph_element(&path3());
        let id = SMultElement::identity(3);
        assert_eq!(bullet(&x, &id).unwrap(), x);
        assert!(bullet(&id, &x).unwrap().equivalent(&x));
    }

    #[test]
    fn k2_edge_composition() {
        let e = SMultElement::edge(2, 0, 1).unwrap();
        let e2 = SMultElement::edge(2, 1, 0).unwrap();
        let x = bullet(&e, &e2).unwrap();
        assert_eq!(x.num_instances(), 2);
        assert_eq!(x.num_paths(), 3);
        assert_eq!(count_paths(&x, NodeId(0), NodeId(0)).unwrap(), 1);
        assert_eq!(count_paths(&x, NodeId(1), NodeId(1)).unwrap(), 0);
    }

    #[test]
    fn bullet_path_count_identity() {
        let x = power_element(&path3(), 2).unwrap();
        let y = graph_element(&path3());
        let composable = x
            .paths()
            .iter()
            .map(|p| y.paths().iter().filter(|q| x.path_end(p) == y.path_start(q)).count())
            .sum::<usize>();
        let xy = bullet(&x, &y).unwrap();
        assert_eq!(xy.num_paths(), x.num_paths() + y.num_paths() + composable);
    }

    #[test]
    fn graph_element_sizes() {
        let k2 = graph_element(&make_complete_graph(2, None).unwrap());
        assert_eq!((k2.num_instances(), k2.num_paths()), (2, 2));
        let k3 = graph_element(&make_complete_graph(3, None).unwrap());
        assert_eq!((k3.num_instances(), k3.num_paths()), (6, 6));
        assert!(graph_element(&empty(4)).is_identity());
    }

    #[test]
    fn power_element_counts() {
        let k2 = make_complete_graph(2, None).unwrap();
        let p = power_element(&k2, 2).unwrap();
        assert_eq!(count_paths(&p, NodeId(0), NodeId(1)).unwrap(), 2);
        assert_eq!(count_paths(&p, NodeId(0), NodeId(0)).unwrap(), 1);
        let q = power_element(&path3(), 2).unwrap();
        assert_eq!(count_paths(&q, NodeId(0), NodeId(2)).unwrap(), 1);
        assert_eq!(power_element(&path3(), 1).unwrap(), graph_element(&path3()));
    }

    #[test]
    fn copy_tags_record_factor_index() {
        let p = power_element(&path3(), 3).unwrap();
        let tags: BTreeSet<usize> = p.instances().iter().map(|e| e.copy_tag).collect();
        assert_eq!(tags, BTreeSet::from([0, 1, 2]));
        for path in p.paths() {
            let t: Vec<usize> = path.iter().map(|&id| p.instances()[id].copy_tag).collect();
            assert!(t.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn power_element_respects_cap() {
        let k4 = make_complete_graph(4, None).unwrap();
        assert!(matches!(
            power_element_capped(&k4, 4, 100),
            Err(Error::SizeGuard { .. })
        ));
    }

    #[test]
    fn count_paths_out_of_range() {
        let x = SMultElement::identity(2);
        assert_eq!(count_paths(&x, NodeId(0), NodeId(1)).unwrap(), 0);
        assert!(count_paths(&x, NodeId(2), NodeId(0)).is_err());
    }

    #[test]
    fn restricting_the_complete_element_gives_the_graph_element() {
        let g = path3();
        let c = make_complete_graph(3, None).unwrap();
        assert!(restrict(&graph_element(&c), &g).unwrap().equivalent(&graph_element(&g)));
        let x = power_element(&c, 2).unwrap();
        assert_eq!(restrict(&x, &c).unwrap(), x);
    }

    #[test]
    fn restricted_power_matches_power_of_restriction() {
        let g = path3();
        let c = make_complete_graph(3, None).unwrap();
        for m in 1..=3 {
            let lhs = restrict(&power_element(&c, m).unwrap(), &g).unwrap();
            assert!(lhs.equivalent(&power_element(&g, m).unwrap()), "m = {m}");
        }
    }

    #[test]
    fn leq_basics() {
        let g = path3();
        let x = power_element(&g, 2).unwrap();
        assert!(leq(&x, &x).unwrap());
        assert!(leq(&SMultElement::identity(3), &x).unwrap());
        let e = SMultElement::edge(3, 0, 1).unwrap();
        assert!(leq(&e, &x).unwrap());
        let back = SMultElement::edge(3, 0, 2).unwrap();
        assert!(!leq(&back, &x).unwrap());
        let big = power_element(&g, 3).unwrap();
        assert!(matches!(leq(&big, &big), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn leq_requires_paths_to_map_onto_paths() {
        // Two instances 0->1, 1->0 with the composed path, versus the same
        // instances without it.
        let with = SMultElement::from_parts(2, &[(0, 1, 0), (1, 0, 1)], [vec![0], vec![1], vec![0, 1]]).unwrap();
        let without = SMultElement::from_parts(2, &[(0, 1, 0), (1, 0, 1)], [vec![0], vec![1]]).unwrap();
        assert!(leq(&without, &with).unwrap());
        assert!(!leq(&with, &without).unwrap());
    }

    #[test]
    fn from_parts_rejects_broken_walks() {
        assert!(SMultElement::from_parts(3, &[(0, 1, 0), (2, 0, 0)], [vec![0, 1]]).is_err());
        assert!(SMultElement::from_parts(3, &[(0, 1, 0)], [vec![]]).is_err());
    }

    #[test]
    fn isomorphism_ignores_labels() {
        let a = SMultElement::from_parts(2, &[(0, 1, 0), (1, 0, 0)], [vec![0]]).unwrap();
        let b = SMultElement::from_parts(2, &[(1, 0, 0), (0, 1, 0)], [vec![1]]).unwrap();
        assert!(is_isomorphic(&a, &b).unwrap());
        assert!(a.equivalent(&b));
    }
}
