//! Symmetric-normalized aggregation operator and the group-mean shift.
//!
//! `build_gcn_operator` forms Q = D^{-1/2} (A + I) D^{-1/2} in CSR form,
//! where D counts self-loop-augmented degrees. `shift_apply` multiplies a
//! representation from the right by N0 N1, the composition of the two
//! group-mean-removal projectors N_g = I - (1/|S_g|) e_g e_g^T. The groups
//! are disjoint, so the projectors commute and the product subtracts each
//! group's column mean within that group's columns.

use crate::dense::Mat;
use crate::graph::Graph;

#[derive(Debug, Clone)]
pub struct AggregationOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// Node indices of each sensitive group, ascending.
    groups: [Vec<usize>; 2],
}

/// Q = D^{-1/2} (A + I) D^{-1/2} with D = diag(degree + 1).
///
/// Entries for (i, j) and (j, i) are evaluated with the same commutative
/// expression, so the stored matrix is symmetric to bit equality.
pub fn build_gcn_operator(graph: &Graph) -> AggregationOperator {
    let n = graph.n();
    let dhat: Vec<f64> = (0..n).map(|i| (graph.adj.degree(i) + 1) as f64).collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(graph.adj.num_edges() * 2 + n);
    let mut values = Vec::with_capacity(graph.adj.num_edges() * 2 + n);
    row_ptr.push(0);
    for i in 0..n {
        let mut self_inserted = false;
        for &j in graph.adj.neighbors(i) {
            if !self_inserted && j > i {
                col_idx.push(i);
                values.push(1.0 / dhat[i]);
                self_inserted = true;
            }
            col_idx.push(j);
            values.push(1.0 / (dhat[i] * dhat[j]).sqrt());
        }
        if !self_inserted {
            col_idx.push(i);
            values.push(1.0 / dhat[i]);
        }
        row_ptr.push(col_idx.len());
    }

    AggregationOperator {
        n,
        row_ptr,
        col_idx,
        values,
        groups: graph.group_indices(),
    }
}

impl AggregationOperator {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn groups(&self) -> &[Vec<usize>; 2] {
        &self.groups
    }

    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Dense copy of Q.
    pub fn to_dense(&self) -> Mat {
        let mut q = Mat::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                q.set(i, j, v);
            }
        }
        q
    }
}

/// Right-multiply a representation by Q: out = H Q, with H of shape F x N.
///
/// Uses Q's symmetry: out[i][j] = sum_k H[i][k] Q[k][j] accumulated row by
/// row of Q in a fixed order.
pub fn spmm(h: &Mat, op: &AggregationOperator) -> Mat {
    assert_eq!(
        h.cols(),
        op.n,
        "spmm: representation has {} columns, operator has {} nodes",
        h.cols(),
        op.n
    );
    let mut out = Mat::zeros(h.rows(), h.cols());
    for i in 0..h.rows() {
        let h_row = h.row(i);
        let o_row = out.row_mut(i);
        for k in 0..op.n {
            let hv = h_row[k];
            if hv == 0.0 {
                continue;
            }
            let span = op.row_ptr[k]..op.row_ptr[k + 1];
            for (&j, &q) in op.col_idx[span.clone()].iter().zip(op.values[span].iter()) {
                o_row[j] += hv * q;
            }
        }
    }
    out
}

/// Right-multiply by N0 N1: subtract each group's per-feature column mean
/// inside that group's columns. Group order does not matter; the projectors
/// act on disjoint column sets.
pub fn shift_apply(h: &Mat, op: &AggregationOperator) -> Mat {
    assert_eq!(h.cols(), op.n, "shift_apply shape mismatch");
    let mut out = h.clone();
    for group in &op.groups {
        if group.is_empty() {
            continue;
        }
        let inv = 1.0 / group.len() as f64;
        for i in 0..h.rows() {
            let row = out.row_mut(i);
            let mut mean = 0.0;
            for &j in group {
                mean += row[j];
            }
            mean *= inv;
            for &j in group {
                row[j] -= mean;
            }
        }
    }
    out
}

/// Dense N0 N1 = I - (1/|S0|) e0 e0^T - (1/|S1|) e1 e1^T.
/// The cross term vanishes because the groups are disjoint.
pub fn shift_matrix_dense(op: &AggregationOperator) -> Mat {
    let mut p = Mat::eye(op.n);
    for group in &op.groups {
        if group.is_empty() {
            continue;
        }
        let inv = 1.0 / group.len() as f64;
        for &a in group {
            for &b in group {
                p.add_at(a, b, -inv);
            }
        }
    }
    p
}

/// Dense single-group projector N_g = I - (1/|S_g|) e_g e_g^T.
pub fn group_projector_dense(n: usize, group: &[usize]) -> Mat {
    let mut p = Mat::eye(n);
    if !group.is_empty() {
        let inv = 1.0 / group.len() as f64;
        for &a in group {
            for &b in group {
                p.add_at(a, b, -inv);
            }
        }
    }
    p
}
