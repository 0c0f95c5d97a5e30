//! Undirected graph with node features, a binary sensitive attribute,
//! binary labels, and train/val/test masks.
//!
//! Adjacency is CSR with strictly increasing column indices per row. The
//! constructor validates every structural invariant once so downstream code
//! can rely on them without re-checking.

use crate::dense::Mat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl CsrAdjacency {
    /// Build from an undirected edge list (each edge listed once, either
    /// orientation). Rejects self-loops, out-of-range endpoints, and
    /// duplicates.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        for &(u, v) in edges {
            if u >= n {
                return Err(Error::NodeOutOfRange { node: u, n });
            }
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n });
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
        }
        let mut deg = vec![0usize; n];
        for &(u, v) in edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + deg[i];
        }
        let mut col_idx = vec![0usize; row_ptr[n]];
        let mut fill = row_ptr.clone();
        for &(u, v) in edges {
            col_idx[fill[u]] = v;
            fill[u] += 1;
            col_idx[fill[v]] = u;
            fill[v] += 1;
        }
        for i in 0..n {
            col_idx[row_ptr[i]..row_ptr[i + 1]].sort_unstable();
        }
        // Strictly increasing columns per row; equal neighbors mean the same
        // undirected edge appeared twice in the input.
        for i in 0..n {
            let row = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            for w in row.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateEdge {
                        u: i.min(w[0]),
                        v: i.max(w[0]),
                    });
                }
            }
        }
        Ok(CsrAdjacency { n, row_ptr, col_idx })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges, each once, lexicographically sorted.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.n {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Graph {
    pub adj: CsrAdjacency,
    /// Feature matrix, one column per node (F x N).
    pub features: Mat,
    /// Binary sensitive attribute per node (0 or 1).
    pub sensitive: Vec<u8>,
    /// Binary label per node.
    pub labels: Vec<u8>,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl Graph {
    /// Validates: matching lengths, finite features, binary attributes and
    /// labels, both sensitive groups nonempty, masks pairwise disjoint.
    /// CSR symmetry and sortedness are guaranteed by `CsrAdjacency`.
    pub fn new(
        adj: CsrAdjacency,
        features: Mat,
        sensitive: Vec<u8>,
        labels: Vec<u8>,
        train_mask: Vec<bool>,
        val_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = adj.n();
        if features.cols() != n {
            return Err(Error::DimMismatch {
                context: "feature columns must match node count",
                got: format!("{}", features.cols()),
                expected: format!("{n}"),
            });
        }
        for (name, len) in [
            ("sensitive", sensitive.len()),
            ("labels", labels.len()),
            ("train_mask", train_mask.len()),
            ("val_mask", val_mask.len()),
            ("test_mask", test_mask.len()),
        ] {
            if len != n {
                return Err(Error::DimMismatch {
                    context: "per-node vector length",
                    got: format!("{name} has {len}"),
                    expected: format!("{n}"),
                });
            }
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("graph features"));
        }
        if let Some(i) = sensitive.iter().position(|s| *s > 1) {
            return Err(Error::GraphInvariant(format!(
                "sensitive attribute of node {i} is {} (must be 0 or 1)",
                sensitive[i]
            )));
        }
        if let Some(i) = labels.iter().position(|y| *y > 1) {
            return Err(Error::GraphInvariant(format!(
                "label of node {i} is {} (must be 0 or 1)",
                labels[i]
            )));
        }
        let n0 = sensitive.iter().filter(|s| **s == 0).count();
        if n0 == 0 || n0 == n {
            return Err(Error::GraphInvariant(
                "both sensitive groups must be nonempty".into(),
            ));
        }
        for i in 0..n {
            let picks =
                train_mask[i] as u8 + val_mask[i] as u8 + test_mask[i] as u8;
            if picks > 1 {
                return Err(Error::GraphInvariant(format!(
                    "node {i} belongs to more than one split"
                )));
            }
        }
        Ok(Graph {
            adj,
            features,
            sensitive,
            labels,
            train_mask,
            val_mask,
            test_mask,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adj.n()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.rows()
    }

    /// Node indices of each sensitive group, ascending.
    pub fn group_indices(&self) -> [Vec<usize>; 2] {
        let mut g0 = Vec::new();
        let mut g1 = Vec::new();
        for (i, &s) in self.sensitive.iter().enumerate() {
            if s == 0 {
                g0.push(i);
            } else {
                g1.push(i);
            }
        }
        [g0, g1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_features(n: usize) -> Mat {
        Mat::from_fn(2, n, |i, j| (i * n + j) as f64)
    }

    fn trivial_masks(n: usize) -> (Vec<bool>, Vec<bool>, Vec<bool>) {
        (vec![false; n], vec![false; n], vec![false; n])
    }

    #[test]
    fn builds_sorted_symmetric_csr() {
        let adj = CsrAdjacency::from_edges(4, &[(2, 0), (1, 2), (3, 1)]).unwrap();
        assert_eq!(adj.neighbors(0), &[2]);
        assert_eq!(adj.neighbors(1), &[2, 3]);
        assert_eq!(adj.neighbors(2), &[0, 1]);
        assert_eq!(adj.neighbors(3), &[1]);
        assert_eq!(adj.num_edges(), 3);
        assert_eq!(adj.edge_list(), vec![(0, 2), (1, 2), (1, 3)]);
        // Symmetry: every stored arc has its reverse.
        for u in 0..4 {
            for &v in adj.neighbors(u) {
                assert!(adj.has_edge(v, u));
            }
        }
    }

    #[test]
    fn rejects_self_loop_duplicate_and_out_of_range() {
        assert!(matches!(
            CsrAdjacency::from_edges(3, &[(1, 1)]),
            Err(Error::SelfLoop(1))
        ));
        assert!(matches!(
            CsrAdjacency::from_edges(3, &[(0, 1), (1, 0)]),
            Err(Error::DuplicateEdge { u: 0, v: 1 })
        ));
        assert!(matches!(
            CsrAdjacency::from_edges(3, &[(0, 3)]),
            Err(Error::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn rejects_single_group() {
        let adj = CsrAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let (tr, va, te) = trivial_masks(3);
        let err = Graph::new(
            adj,
            tiny_features(3),
            vec![0, 0, 0],
            vec![0, 1, 0],
            tr,
            va,
            te,
        );
        assert!(matches!(err, Err(Error::GraphInvariant(_))));
    }

    #[test]
    fn rejects_overlapping_masks() {
        let adj = CsrAdjacency::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let mut tr = vec![false; 3];
        let mut va = vec![false; 3];
        tr[1] = true;
        va[1] = true;
        let err = Graph::new(
            adj,
            tiny_features(3),
            vec![0, 1, 0],
            vec![0, 1, 0],
            tr,
            va,
            vec![false; 3],
        );
        assert!(matches!(err, Err(Error::GraphInvariant(_))));
    }

    #[test]
    fn group_indices_partition_nodes() {
        let adj = CsrAdjacency::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let (tr, va, te) = trivial_masks(5);
        let g = Graph::new(
            adj,
            tiny_features(5),
            vec![0, 1, 0, 1, 1],
            vec![0, 0, 1, 1, 0],
            tr,
            va,
            te,
        )
        .unwrap();
        let [g0, g1] = g.group_indices();
        assert_eq!(g0, vec![0, 2]);
        assert_eq!(g1, vec![1, 3, 4]);
    }
}
