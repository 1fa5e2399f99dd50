// SPDX-License-Identifier: Apache-2.0

//! The matrix monoid `A ∘ B = A + B + AB` and its iterated powers.
//!
//! The zero matrix is the identity of `∘`, and the m-fold power satisfies
//! `A ∘ ⋯ ∘ A = (I + A)^m − I = Σ_{k=1..m} C(m,k) A^k`. Powers are computed
//! with the recurrence `R ← R + R·A` started from `I + A`, then `I` is
//! subtracted once at the end.
//!
//! With `T = i64` the 0/1 adjacency power counts paths exactly; overflow is
//! reported as [`Error::Overflow`] carrying the recurrence step.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// `a + b + a·b`.
pub fn circ<T: Scalar>(a: &SparseMatrix<T>, b: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    let overflow = |_| Error::Overflow { iteration: 0 };
    let ab = a.checked_matmul(b)?.map_err(overflow)?;
    let sum = a.checked_add(b)?.map_err(overflow)?;
    sum.checked_add(&ab)?.map_err(overflow)
}

/// Options for [`circ_power_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PowerOptions {
    /// Drop entries with magnitude at or below this after every product.
    pub prune_eps: Option<f64>,
}

/// m-fold `∘`-power of `a`.
pub fn circ_power<T: Scalar>(a: &SparseMatrix<T>, m: usize) -> Result<SparseMatrix<T>> {
    circ_power_with(a, m, PowerOptions::default())
}

pub fn circ_power_with<T: Scalar>(a: &SparseMatrix<T>, m: usize, opts: PowerOptions) -> Result<SparseMatrix<T>> {
    if m == 0 {
        return Err(Error::ZeroLevel);
    }
    let mut levels = CircLevels::new(a.clone(), opts)?;
    for _ in 1..m {
        levels.advance()?;
    }
    Ok(levels.into_current().result)
}

/// `(I + A)^m − I` for a 0/1 symmetric adjacency: entry `(i, j)` counts the
/// paths from `v_i` to `v_j` in the m-fold graph element.
pub fn mi<T: Scalar>(adj: &SparseMatrix<T>, m: usize) -> Result<SparseMatrix<T>> {
    if let Some((i, j, _)) = adj.iter().find(|&(i, j, v)| i == j || v != T::one()) {
        return Err(Error::InvalidParameter(format!(
            "adjacency must be 0/1 with zero diagonal, offending entry ({i}, {j})"
        )));
    }
    if !adj.is_symmetric() {
        return Err(Error::InvalidParameter("adjacency must be symmetric".into()));
    }
    circ_power(adj, m)
}

/// A base matrix, a level and its `∘`-power at that level.
#[derive(Debug, Clone, PartialEq)]
pub struct CircPower<T> {
    pub base: SparseMatrix<T>,
    pub m: usize,
    pub result: SparseMatrix<T>,
}

impl<T: Scalar> CircPower<T> {
    pub fn compute(base: SparseMatrix<T>, m: usize) -> Result<Self> {
        let result = circ_power(&base, m)?;
        Ok(Self { base, m, result })
    }
}

/// Walks the levels `m = 1, 2, …` of the `∘`-power of `A`.
///
/// The running value `S = (I + A)^m − I` is updated as `S ← S + A + S·A`,
/// which is `R ← R + R·A` on `R = I + S` without forming `I + S`. Each
/// [`advance`](Self::advance) costs one sparse product, so sweeping a range
/// of levels is no more expensive than computing the largest one.
#[derive(Debug, Clone)]
pub struct CircLevels<T> {
    base: SparseMatrix<T>,
    current: SparseMatrix<T>,
    m: usize,
    opts: PowerOptions,
}

impl<T: Scalar> CircLevels<T> {
    pub fn new(base: SparseMatrix<T>, opts: PowerOptions) -> Result<Self> {
        Ok(Self {
            current: base.clone(),
            base,
            m: 1,
            opts,
        })
    }

    pub fn level(&self) -> usize {
        self.m
    }

    pub fn advance(&mut self) -> Result<()> {
        let next = self.m + 1;
        let overflow = |_| Error::Overflow { iteration: next };
        let prod = match self.opts.prune_eps {
            Some(eps) => self.current.checked_matmul_pruned(&self.base, eps)?,
            None => self.current.checked_matmul(&self.base)?,
        }
        .map_err(overflow)?;
        let sum = self.current.checked_add(&self.base)?.map_err(overflow)?;
        self.current = sum.checked_add(&prod)?.map_err(overflow)?;
        self.m = next;
        Ok(())
    }

    pub fn current(&self) -> &SparseMatrix<T> {
        &self.current
    }

    pub fn into_current(self) -> CircPower<T> {
        CircPower {
            base: self.base,
            m: self.m,
            result: self.current,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{adjacency, make_complete_graph, AttributedGraph};
    use ndarray::Array2;

    fn k2() -> SparseMatrix<i64> {
        SparseMatrix::from_dense(&[vec![0, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn zero_is_the_identity() {
        let a = SparseMatrix::from_dense(&[vec![1.5, -2.0], vec![0.0, 3.0]]).unwrap();
        let z = SparseMatrix::zeros(2);
        assert_eq!(circ(&a, &z).unwrap(), a);
        assert_eq!(circ(&z, &a).unwrap(), a);
    }

    #[test]
    fn k2_circ_itself() {
        let a = k2();
        assert_eq!(circ(&a, &a).unwrap().to_dense(), vec![vec![1, 2], vec![2, 1]]);
    }

    #[test]
    fn power_one_is_base() {
        let a = SparseMatrix::from_dense(&[vec![0.0, 0.25], vec![-0.5, 0.1]]).unwrap();
        assert_eq!(circ_power(&a, 1).unwrap(), a);
        assert_eq!(CircPower::compute(a.clone(), 1).unwrap().result, a);
    }

    #[test]
    fn k2_power_two() {
        assert_eq!(circ_power(&k2(), 2).unwrap().to_dense(), vec![vec![1, 2], vec![2, 1]]);
    }

    #[test]
    fn level_zero_is_rejected() {
        assert!(matches!(circ_power(&k2(), 0), Err(Error::ZeroLevel)));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = SparseMatrix::<i64>::identity(2);
        let b = SparseMatrix::<i64>::identity(3);
        assert!(matches!(circ(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn path_graph_mi_level_two() {
        let g = AttributedGraph::new("p", 3, vec![(0, 1), (1, 2)], Array2::zeros((3, 1)), None).unwrap();
        let mi2 = mi(&adjacency::<i64>(&g), 2).unwrap();
        assert_eq!(mi2.get(0, 2), 1);
        assert_eq!(mi2.get(0, 1), 2);
        assert_eq!(mi2.get(0, 0), 1);
    }

    #[test]
    fn k3_mi_level_one_is_adjacency() {
        let a = adjacency::<i64>(&make_complete_graph(3, None).unwrap());
        assert_eq!(mi(&a, 1).unwrap(), a);
    }

    #[test]
    fn mi_rejects_weighted_input() {
        let a = SparseMatrix::from_dense(&[vec![0, 2], vec![2, 0]]).unwrap();
        assert!(mi(&a, 2).is_err());
    }

    #[test]
    fn overflow_reports_iteration() {
        let a = adjacency::<i32>(&make_complete_graph(10, None).unwrap());
        // Entries of (I + A)^m are about 10^(m-1); i32 overflows at level 11.
        match circ_power(&a, 12) {
            Err(Error::Overflow { iteration }) => assert_eq!(iteration, 11),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn levels_iterator_matches_direct_power() {
        let a = adjacency::<i64>(&make_complete_graph(4, None).unwrap());
        let mut lv = CircLevels::new(a.clone(), PowerOptions::default()).unwrap();
        for m in 2..=5 {
            lv.advance().unwrap();
            assert_eq!(lv.level(), m);
            assert_eq!(lv.current(), &circ_power(&a, m).unwrap());
        }
    }
}
