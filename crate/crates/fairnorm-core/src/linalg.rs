//! Dense symmetric eigensolver (two-sided cyclic Jacobi) and a one-sided
//! Jacobi singular value routine.
//!
//! Both are meant for the modest sizes the verification suites use; a hard
//! cap guards against accidental huge inputs.

use crate::dense::{dot, norm2, Mat};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct JacobiConfig {
    /// Give up after this many full sweeps.
    pub max_sweeps: usize,
    /// Converged when every off-diagonal entry is at or below
    /// `off_diag_tol * scale`, scale being the largest |entry| of the input.
    pub off_diag_tol: f64,
    /// Largest matrix dimension accepted.
    pub dense_cap: usize,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig {
            max_sweeps: 200,
            off_diag_tol: 1e-12,
            dense_cap: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column k is the eigenvector for `values[k]`.
    pub vectors: Mat,
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigen_sym(a: &Mat, cfg: &JacobiConfig) -> Result<SymEigen> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimMismatch {
            context: "jacobi_eigen_sym needs a square matrix",
            got: format!("{}x{}", a.rows(), a.cols()),
            expected: "square".into(),
        });
    }
    if n > cfg.dense_cap {
        return Err(Error::DenseCapExceeded {
            rows: n,
            cols: n,
            cap: cfg.dense_cap,
        });
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("jacobi_eigen_sym input"));
    }

    let mut m = a.clone();
    let mut v = Mat::eye(n);
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let tol = cfg.off_diag_tol * scale;

    let mut converged = false;
    let mut last_off = 0.0;
    for _sweep in 0..cfg.max_sweeps {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        last_off = off;
        if off <= tol {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq.abs() <= tol {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // Smaller-angle root keeps the rotation stable.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(m.get(p, q).abs());
            }
        }
        if off > tol {
            return Err(Error::NoConvergence {
                sweeps: cfg.max_sweeps,
                off,
            });
        }
        last_off = off;
    }
    let _ = last_off;

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));

    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new_col, v.get(k, old_col));
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Singular values of an arbitrary dense matrix, ascending. Returns
/// `min(rows, cols)` values.
///
/// One-sided (Hestenes) Jacobi: plane rotations orthogonalize the columns
/// of the input; at convergence the column norms are the singular values.
/// Working on the matrix itself rather than its Gram matrix keeps small
/// singular values at full absolute accuracy; the squared route cannot
/// resolve them below sqrt(machine epsilon) times the largest one.
pub fn dense_svd(m: &Mat, cfg: &JacobiConfig) -> Result<Vec<f64>> {
    if m.rows() > cfg.dense_cap || m.cols() > cfg.dense_cap {
        return Err(Error::DenseCapExceeded {
            rows: m.rows(),
            cols: m.cols(),
            cap: cfg.dense_cap,
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("dense_svd input"));
    }
    // Rotate the shorter side.
    let a = if m.cols() > m.rows() { m.transpose() } else { m.clone() };
    let rows = a.rows();
    let cols = a.cols();
    let mut col: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a.get(i, j)).collect())
        .collect();

    // Columns whose norm sits at rounding level are treated as exact zeros:
    // rotating them against anything only shuffles noise, and the overlap
    // they can leave in other columns is below the floor itself.
    let zero_floor = a.max_abs() * rows as f64 * f64::EPSILON;
    // A pair counts as orthogonal when |<p, q>| <= tol * ||p|| ||q||.
    let orthogonal = |cp: &[f64], cq: &[f64]| -> (f64, f64, f64, bool) {
        let np = norm2(cp);
        let nq = norm2(cq);
        let apq = dot(cp, cq);
        let ok = np <= zero_floor || nq <= zero_floor || apq.abs() <= cfg.off_diag_tol * np * nq;
        (np, nq, apq, ok)
    };

    let mut converged = false;
    for _sweep in 0..cfg.max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (left, right) = col.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                let (np, nq, apq, ok) = orthogonal(cp, cq);
                if ok {
                    continue;
                }
                rotated = true;
                let theta = (nq * nq - np * np) / (2.0 * apq);
                // Smaller-angle root keeps the rotation stable.
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..rows {
                    let vp = cp[k];
                    let vq = cq[k];
                    cp[k] = c * vp - s * vq;
                    cq[k] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        // One final check: the last sweep may have finished the job.
        let mut worst = 0.0_f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (np, nq, apq, ok) = orthogonal(&col[p], &col[q]);
                if !ok {
                    worst = worst.max(apq.abs() / (np * nq).max(f64::MIN_POSITIVE));
                }
            }
        }
        if worst > 0.0 {
            return Err(Error::NoConvergence {
                sweeps: cfg.max_sweeps,
                off: worst,
            });
        }
    }
    let mut sv: Vec<f64> = col.iter().map(|c| norm2(c)).collect();
    sv.sort_by(f64::total_cmp);
    Ok(sv)
}

/// Least-squares solve `A x = b` for symmetric PSD `A` through its
/// eigendecomposition: eigenvalues at or below `rel_tol * max_eig` are
/// treated as zero (Moore-Penrose behaviour on the null space).
pub fn pseudo_solve_psd(eig: &SymEigen, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let n = eig.values.len();
    assert_eq!(b.len(), n, "pseudo_solve_psd shape mismatch");
    let max_eig = eig.values.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
    let cut = rel_tol * max_eig;
    let mut x = vec![0.0; n];
    for k in 0..n {
        let lam = eig.values[k];
        if lam <= cut {
            continue;
        }
        let mut proj = 0.0;
        for i in 0..n {
            proj += eig.vectors.get(i, k) * b[i];
        }
        let coef = proj / lam;
        for i in 0..n {
            x[i] += coef * eig.vectors.get(i, k);
        }
    }
    x
}
