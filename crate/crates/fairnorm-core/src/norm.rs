//! Group-wise normalization layer.
//!
//! For each group S_g and feature row i the layer computes
//!
//!   y_ij = gamma_gi * (r_ij - alpha_gi * m_gi) / sigma_gi + beta_gi,  j in S_g
//!
//! where m_gi is the group sample mean, sigma_gi = sqrt(var_gi + EPS^2) with
//! var_gi the population variance over the group (divide by |S_g|), and
//! alpha, gamma, beta are learnable per-group, per-feature parameters. With a
//! single group covering every node this reduces to graph-wide normalization
//! with a learnable mean scale.
//!
//! Columns not covered by any group pass through unchanged. The backward
//! pass routes gradients through the statistics m and sigma, so it is exact
//! for the sample-dependent forward above.

use crate::dense::Mat;
use crate::error::{Error, Result};

/// Stabilizer inside sigma = sqrt(var + EPS^2).
pub const MNORM_EPS: f64 = 1e-5;

/// Per-group, per-feature affine parameters; each matrix is G x F.
#[derive(Debug, Clone, PartialEq)]
pub struct MNormParams {
    pub alpha: Mat,
    pub gamma: Mat,
    pub beta: Mat,
}

impl MNormParams {
    /// alpha = 1, gamma = 1, beta = 0.
    pub fn init(num_groups: usize, num_features: usize) -> Self {
        MNormParams {
            alpha: Mat::filled(num_groups, num_features, 1.0),
            gamma: Mat::filled(num_groups, num_features, 1.0),
            beta: Mat::zeros(num_groups, num_features),
        }
    }

    pub fn zeros_like(&self) -> Self {
        MNormParams {
            alpha: Mat::zeros(self.alpha.rows(), self.alpha.cols()),
            gamma: Mat::zeros(self.gamma.rows(), self.gamma.cols()),
            beta: Mat::zeros(self.beta.rows(), self.beta.cols()),
        }
    }

    pub fn num_groups(&self) -> usize {
        self.alpha.rows()
    }

    pub fn num_features(&self) -> usize {
        self.alpha.cols()
    }
}

/// Batch statistics captured during the forward pass; both matrices are
/// G x F. `sigma` is already stabilized.
#[derive(Debug, Clone)]
pub struct MNormStats {
    pub mean: Mat,
    pub sigma: Mat,
}

fn check_shapes(r: &Mat, groups: &[Vec<usize>], params: &MNormParams) -> Result<()> {
    if params.num_groups() != groups.len() {
        return Err(Error::DimMismatch {
            context: "normalization parameter groups",
            got: format!("{}", params.num_groups()),
            expected: format!("{}", groups.len()),
        });
    }
    if params.num_features() != r.rows() {
        return Err(Error::DimMismatch {
            context: "normalization parameter features",
            got: format!("{}", params.num_features()),
            expected: format!("{}", r.rows()),
        });
    }
    let mut seen = vec![false; r.cols()];
    for (g, group) in groups.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "normalization group {g} is empty"
            )));
        }
        for &j in group {
            if j >= r.cols() {
                return Err(Error::NodeOutOfRange { node: j, n: r.cols() });
            }
            if seen[j] {
                return Err(Error::InvalidArgument(format!(
                    "column {j} appears in more than one normalization group"
                )));
            }
            seen[j] = true;
        }
    }
    Ok(())
}

/// Forward pass. Returns the normalized representation and the statistics
/// needed by the backward pass and by the fairness regularizers.
pub fn mnorm_forward(
    r: &Mat,
    groups: &[Vec<usize>],
    params: &MNormParams,
) -> Result<(Mat, MNormStats)> {
    check_shapes(r, groups, params)?;
    let f = r.rows();
    let mut out = r.clone();
    let mut mean = Mat::zeros(groups.len(), f);
    let mut sigma = Mat::zeros(groups.len(), f);

    for (g, group) in groups.iter().enumerate() {
        let m_inv = 1.0 / group.len() as f64;
        for i in 0..f {
            let row = r.row(i);
            let mut m = 0.0;
            for &j in group {
                m += row[j];
            }
            m *= m_inv;
            let mut var = 0.0;
            for &j in group {
                let d = row[j] - m;
                var += d * d;
            }
            var *= m_inv;
            let s = (var + MNORM_EPS * MNORM_EPS).sqrt();
            mean.set(g, i, m);
            sigma.set(g, i, s);

            let a = params.alpha.get(g, i);
            let ga = params.gamma.get(g, i);
            let b = params.beta.get(g, i);
            let shift = a * m;
            let o_row = out.row_mut(i);
            for &j in group {
                o_row[j] = ga * (row[j] - shift) / s + b;
            }
        }
    }
    Ok((out, MNormStats { mean, sigma }))
}

/// Gradients produced by the backward pass.
#[derive(Debug, Clone)]
pub struct MNormGrads {
    pub d_input: Mat,
    pub d_alpha: Mat,
    pub d_gamma: Mat,
    pub d_beta: Mat,
}

/// Backward pass. `d_out` is dL/dy; `r` and `stats` are the forward inputs
/// and statistics. Gradients flow through the group mean and the stabilized
/// standard deviation.
///
/// With G = sum_j g_j, P = sum_j g_j * xhat_j, xhat_j = (r_j - alpha m) / sigma:
///   dL/dgamma = P
///   dL/dbeta  = G
///   dL/dalpha = -(gamma m / sigma) G
///   dL/dr_k   = (gamma/sigma) (g_k - alpha G / M - (r_k - m) P / (M sigma))
pub fn mnorm_backward(
    r: &Mat,
    groups: &[Vec<usize>],
    params: &MNormParams,
    stats: &MNormStats,
    d_out: &Mat,
) -> Result<MNormGrads> {
    check_shapes(r, groups, params)?;
    if d_out.rows() != r.rows() || d_out.cols() != r.cols() {
        return Err(Error::DimMismatch {
            context: "mnorm_backward upstream gradient",
            got: format!("{}x{}", d_out.rows(), d_out.cols()),
            expected: format!("{}x{}", r.rows(), r.cols()),
        });
    }
    let f = r.rows();
    // Pass-through columns keep their upstream gradient; group columns are
    // overwritten below.
    let mut d_input = d_out.clone();
    let mut d_alpha = Mat::zeros(groups.len(), f);
    let mut d_gamma = Mat::zeros(groups.len(), f);
    let mut d_beta = Mat::zeros(groups.len(), f);

    for (g, group) in groups.iter().enumerate() {
        let m_count = group.len() as f64;
        for i in 0..f {
            let m = stats.mean.get(g, i);
            let s = stats.sigma.get(g, i);
            let a = params.alpha.get(g, i);
            let ga = params.gamma.get(g, i);
            let r_row = r.row(i);
            let g_row = d_out.row(i);

            let mut g_sum = 0.0;
            let mut p_sum = 0.0;
            for &j in group {
                let xhat = (r_row[j] - a * m) / s;
                g_sum += g_row[j];
                p_sum += g_row[j] * xhat;
            }
            d_gamma.set(g, i, p_sum);
            d_beta.set(g, i, g_sum);
            d_alpha.set(g, i, -(ga * m / s) * g_sum);

            let d_row = d_input.row_mut(i);
            for &j in group {
                d_row[j] = (ga / s)
                    * (g_row[j] - a * g_sum / m_count
                        - (r_row[j] - m) * p_sum / (m_count * s));
            }
        }
    }
    Ok(MNormGrads {
        d_input,
        d_alpha,
        d_gamma,
        d_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_groups(n: usize, n0: usize) -> Vec<Vec<usize>> {
        vec![(0..n0).collect(), (n0..n).collect()]
    }

    fn random_params(rng: &mut ChaCha8Rng, g: usize, f: usize) -> MNormParams {
        MNormParams {
            alpha: Mat::from_fn(g, f, |_, _| rng.random::<f64>() * 2.0 - 0.5),
            gamma: Mat::from_fn(g, f, |_, _| rng.random::<f64>() + 0.25),
            beta: Mat::from_fn(g, f, |_, _| rng.random::<f64>() - 0.5),
        }
    }

    #[test]
    fn init_is_identity_scale_unit() {
        let p = MNormParams::init(2, 3);
        assert!(p.alpha.data().iter().all(|&x| x == 1.0));
        assert!(p.gamma.data().iter().all(|&x| x == 1.0));
        assert!(p.beta.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn standardizes_each_group_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (f, n, n0) = (4, 20, 12);
        let r = Mat::from_fn(f, n, |_, _| rng.random::<f64>() * 8.0 - 1.0);
        let groups = two_groups(n, n0);
        let params = MNormParams::init(2, f);
        let (y, stats) = mnorm_forward(&r, &groups, &params).unwrap();
        for (g, group) in groups.iter().enumerate() {
            let m_count = group.len() as f64;
            for i in 0..f {
                let mean: f64 = group.iter().map(|&j| y.get(i, j)).sum::<f64>() / m_count;
                assert!(mean.abs() < 1e-12, "post-norm mean {mean}");
                let var: f64 = group
                    .iter()
                    .map(|&j| y.get(i, j) * y.get(i, j))
                    .sum::<f64>()
                    / m_count;
                // Population variance of y is var / (var + eps^2), just below 1.
                let raw_var = stats.sigma.get(g, i).powi(2) - MNORM_EPS * MNORM_EPS;
                let want = raw_var / (raw_var + MNORM_EPS * MNORM_EPS);
                assert!((var - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn post_norm_group_mean_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let (f, n, n0) = (3, 15, 6);
        let r = Mat::from_fn(f, n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let groups = two_groups(n, n0);
        let params = random_params(&mut rng, 2, f);
        let (y, stats) = mnorm_forward(&r, &groups, &params).unwrap();
        for (g, group) in groups.iter().enumerate() {
            for i in 0..f {
                let empirical: f64 =
                    group.iter().map(|&j| y.get(i, j)).sum::<f64>() / group.len() as f64;
                let m = stats.mean.get(g, i);
                let s = stats.sigma.get(g, i);
                let closed = params.gamma.get(g, i) * m * (1.0 - params.alpha.get(g, i)) / s
                    + params.beta.get(g, i);
                assert!(
                    (empirical - closed).abs() < 1e-10,
                    "group {g} feature {i}: empirical {empirical} vs closed form {closed}"
                );
            }
        }
    }

    #[test]
    fn constant_group_and_singleton_group_stay_finite() {
        let r = Mat::from_fn(2, 5, |i, j| if j < 4 { 3.0 + i as f64 } else { -1.0 });
        let groups = vec![vec![0, 1, 2, 3], vec![4]];
        let params = MNormParams::init(2, 2);
        let (y, stats) = mnorm_forward(&r, &groups, &params).unwrap();
        assert!(y.is_finite());
        // Constant group: variance 0, sigma = eps exactly.
        assert_eq!(stats.sigma.get(0, 0), MNORM_EPS);
        assert_eq!(stats.sigma.get(1, 0), MNORM_EPS);
        let d_out = Mat::filled(2, 5, 1.0);
        let grads = mnorm_backward(&r, &groups, &params, &stats, &d_out).unwrap();
        assert!(grads.d_input.is_finite());
        assert!(grads.d_alpha.is_finite());
    }

    #[test]
    fn rejects_overlapping_groups_and_bad_shapes() {
        let r = Mat::zeros(2, 4);
        let params = MNormParams::init(2, 2);
        assert!(mnorm_forward(&r, &[vec![0, 1], vec![1, 2]], &params).is_err());
        assert!(mnorm_forward(&r, &[vec![0], vec![9]], &params).is_err());
        assert!(mnorm_forward(&r, &[vec![0, 1]], &params).is_err());
        let params_bad_f = MNormParams::init(2, 5);
        assert!(mnorm_forward(&r, &[vec![0, 1], vec![2, 3]], &params_bad_f).is_err());
    }

    #[test]
    fn backward_matches_central_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let (f, n, n0) = (3, 9, 4);
        let r0 = Mat::from_fn(f, n, |_, _| rng.random::<f64>() * 3.0 - 1.5);
        let groups = two_groups(n, n0);
        let params0 = random_params(&mut rng, 2, f);
        let c = Mat::from_fn(f, n, |_, _| rng.random::<f64>() - 0.5);

        let loss = |r: &Mat, params: &MNormParams| -> f64 {
            let (y, _) = mnorm_forward(r, &groups, params).unwrap();
            y.data()
                .iter()
                .zip(c.data().iter())
                .map(|(a, b)| a * b)
                .sum()
        };

        let (_, stats) = mnorm_forward(&r0, &groups, &params0).unwrap();
        let grads = mnorm_backward(&r0, &groups, &params0, &stats, &c).unwrap();

        let eps = 1e-6;
        let check = |fd: f64, an: f64, what: &str| {
            let tol = 1e-7 * an.abs().max(1.0);
            assert!(
                (fd - an).abs() <= tol,
                "{what}: finite diff {fd} vs analytic {an}"
            );
        };

        for i in 0..f {
            for j in 0..n {
                let mut rp = r0.clone();
                rp.set(i, j, r0.get(i, j) + eps);
                let mut rm = r0.clone();
                rm.set(i, j, r0.get(i, j) - eps);
                let fd = (loss(&rp, &params0) - loss(&rm, &params0)) / (2.0 * eps);
                check(fd, grads.d_input.get(i, j), "d_input");
            }
        }
        for g in 0..2 {
            for i in 0..f {
                for (field, grad) in [(0, &grads.d_alpha), (1, &grads.d_gamma), (2, &grads.d_beta)]
                {
                    let mut pp = params0.clone();
                    let mut pm = params0.clone();
                    let (tp, tm) = match field {
                        0 => (&mut pp.alpha, &mut pm.alpha),
                        1 => (&mut pp.gamma, &mut pm.gamma),
                        _ => (&mut pp.beta, &mut pm.beta),
                    };
                    tp.set(g, i, tp.get(g, i) + eps);
                    tm.set(g, i, tm.get(g, i) - eps);
                    let fd = (loss(&r0, &pp) - loss(&r0, &pm)) / (2.0 * eps);
                    check(fd, grad.get(g, i), "param grad");
                }
            }
        }
    }

    #[test]
    fn passthrough_columns_are_untouched() {
        let r = Mat::from_fn(2, 6, |i, j| (i * 6 + j) as f64);
        // Columns 4 and 5 belong to no group.
        let groups = vec![vec![0, 1], vec![2, 3]];
        let params = MNormParams::init(2, 2);
        let (y, _) = mnorm_forward(&r, &groups, &params).unwrap();
        for i in 0..2 {
            for j in 4..6 {
                assert_eq!(y.get(i, j), r.get(i, j));
            }
        }
        let d_out = Mat::filled(2, 6, 2.0);
        let (_, stats) = mnorm_forward(&r, &groups, &params).unwrap();
        let grads = mnorm_backward(&r, &groups, &params, &stats, &d_out).unwrap();
        for i in 0..2 {
            for j in 4..6 {
                assert_eq!(grads.d_input.get(i, j), 2.0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Forward and backward stay finite for arbitrary bounded inputs,
        /// including adversarially flat groups.
        #[test]
        fn finite_for_bounded_inputs(seed in 0u64..300, scale in 0.0f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..12);
            let n0 = rng.random_range(1..n);
            let f = rng.random_range(1..4);
            let r = Mat::from_fn(f, n, |_, _| (rng.random::<f64>() - 0.5) * scale);
            let groups = two_groups(n, n0);
            let params = MNormParams::init(2, f);
            let (y, stats) = mnorm_forward(&r, &groups, &params).unwrap();
            prop_assert!(y.is_finite());
            let d_out = Mat::from_fn(f, n, |_, _| rng.random::<f64>() - 0.5);
            let grads = mnorm_backward(&r, &groups, &params, &stats, &d_out).unwrap();
            prop_assert!(grads.d_input.is_finite());
            prop_assert!(grads.d_alpha.is_finite());
            prop_assert!(grads.d_gamma.is_finite());
            prop_assert!(grads.d_beta.is_finite());
        }
    }
}
