//! Fairness regularizers, group metrics, and the activation mean-gap bound.
//!
//! The regularizers act on the statistics of a two-group normalization
//! layer. With u_g = gamma_g m_g (1 - alpha_g) / sigma_g + beta_g (the
//! closed form of the post-normalization group mean):
//!
//! - `loss_mu` penalizes the squared l2 gap between the two groups'
//!   post-norm means: sum_i (u_0i - u_1i)^2.
//! - `loss_delta` penalizes squared per-group peak deviations:
//!   sum_g sum_i (gamma_gi / sigma_gi * D_gi)^2 with
//!   D_gi = max_{j in S_g} |r_ij - m_gi|. This equals the squared peak
//!   deviation of the normalized representation around its group mean.
//! - `loss_covariance` is the baseline |cov(s, p)| between the sensitive
//!   attribute and predicted probabilities over a mask.
//!
//! All gradients are exact for the sample-dependent statistics, including
//! the paths through the group mean and stabilized standard deviation; the
//! max in `loss_delta` uses the subgradient of its first (lowest column
//! index) maximizer.

use crate::dense::{Mat, PNorm};
use crate::error::{Error, Result};
use crate::nn::Activation;
use crate::norm::{MNormParams, MNormStats};

fn require_two_groups(params: &MNormParams) -> Result<()> {
    if params.num_groups() != 2 {
        return Err(Error::InvalidArgument(format!(
            "group-gap regularizer needs exactly 2 groups, got {}",
            params.num_groups()
        )));
    }
    Ok(())
}

/// Closed-form post-normalization mean of group `g`, per feature.
pub fn post_norm_group_mean(params: &MNormParams, stats: &MNormStats, g: usize) -> Vec<f64> {
    let f = params.num_features();
    let mut out = Vec::with_capacity(f);
    for i in 0..f {
        let m = stats.mean.get(g, i);
        let s = stats.sigma.get(g, i);
        out.push(
            params.gamma.get(g, i) * m * (1.0 - params.alpha.get(g, i)) / s
                + params.beta.get(g, i),
        );
    }
    out
}

/// Squared l2 gap between the two groups' post-normalization means.
pub fn loss_mu(params: &MNormParams, stats: &MNormStats) -> Result<f64> {
    require_two_groups(params)?;
    let u0 = post_norm_group_mean(params, stats, 0);
    let u1 = post_norm_group_mean(params, stats, 1);
    Ok(u0
        .iter()
        .zip(u1.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Accumulates `weight * d(loss_mu)` into the parameter gradients and the
/// gradient w.r.t. the layer input `r` (through the statistics).
#[allow(clippy::too_many_arguments)]
pub fn loss_mu_backward(
    params: &MNormParams,
    stats: &MNormStats,
    r: &Mat,
    groups: &[Vec<usize>],
    weight: f64,
    d_alpha: &mut Mat,
    d_gamma: &mut Mat,
    d_beta: &mut Mat,
    d_input: &mut Mat,
) -> Result<()> {
    require_two_groups(params)?;
    let f = params.num_features();
    let u0 = post_norm_group_mean(params, stats, 0);
    let u1 = post_norm_group_mean(params, stats, 1);
    for i in 0..f {
        let d_i = u0[i] - u1[i];
        for (g, group) in groups.iter().enumerate() {
            // dL/du_g: +2d for group 0, -2d for group 1, times the weight.
            let du = weight * 2.0 * d_i * if g == 0 { 1.0 } else { -1.0 };
            let m = stats.mean.get(g, i);
            let s = stats.sigma.get(g, i);
            let a = params.alpha.get(g, i);
            let ga = params.gamma.get(g, i);

            d_gamma.add_at(g, i, du * m * (1.0 - a) / s);
            d_alpha.add_at(g, i, du * (-ga * m / s));
            d_beta.add_at(g, i, du);

            // Through the statistics: du/dm and du/dsigma, then their
            // dependence on each group column.
            let du_dm = ga * (1.0 - a) / s;
            let du_ds = -ga * m * (1.0 - a) / (s * s);
            let m_count = group.len() as f64;
            let r_row = r.row(i);
            for &j in group {
                let dm_dr = 1.0 / m_count;
                let ds_dr = (r_row[j] - m) / (m_count * s);
                d_input.add_at(i, j, du * (du_dm * dm_dr + du_ds * ds_dr));
            }
        }
    }
    Ok(())
}

/// Peak deviation of each group/feature and the column index attaining it
/// (first maximizer wins ties).
fn peak_deviation(r: &Mat, group: &[usize], mean: f64, i: usize) -> (f64, usize) {
    let row = r.row(i);
    let mut best = -1.0;
    let mut best_j = group[0];
    for &j in group {
        let d = (row[j] - mean).abs();
        if d > best {
            best = d;
            best_j = j;
        }
    }
    (best, best_j)
}

/// Sum over groups and features of (gamma / sigma * max_j |r_ij - m|)^2.
pub fn loss_delta(
    params: &MNormParams,
    stats: &MNormStats,
    r: &Mat,
    groups: &[Vec<usize>],
) -> f64 {
    let f = params.num_features();
    let mut acc = 0.0;
    for (g, group) in groups.iter().enumerate() {
        for i in 0..f {
            let m = stats.mean.get(g, i);
            let s = stats.sigma.get(g, i);
            let (dev, _) = peak_deviation(r, group, m, i);
            let t = params.gamma.get(g, i) * dev / s;
            acc += t * t;
        }
    }
    acc
}

/// Accumulates `weight * d(loss_delta)` into gamma's gradient and the
/// gradient w.r.t. the layer input. alpha and beta do not enter the term.
pub fn loss_delta_backward(
    params: &MNormParams,
    stats: &MNormStats,
    r: &Mat,
    groups: &[Vec<usize>],
    weight: f64,
    d_gamma: &mut Mat,
    d_input: &mut Mat,
) {
    let f = params.num_features();
    for (g, group) in groups.iter().enumerate() {
        let m_count = group.len() as f64;
        for i in 0..f {
            let m = stats.mean.get(g, i);
            let s = stats.sigma.get(g, i);
            let ga = params.gamma.get(g, i);
            let (dev, j_star) = peak_deviation(r, group, m, i);

            d_gamma.add_at(g, i, weight * 2.0 * ga * dev * dev / (s * s));

            let r_row = r.row(i);
            // Subgradient of the max through its maximizer; zero when the
            // group is exactly flat.
            let diff = r_row[j_star] - m;
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            let dl_ddev = weight * 2.0 * ga * ga * dev / (s * s);
            let dl_ds = -weight * 2.0 * ga * ga * dev * dev / (s * s * s);
            for &j in group {
                let indicator = if j == j_star { 1.0 } else { 0.0 };
                let ddev_dr = sign * (indicator - 1.0 / m_count);
                let ds_dr = (r_row[j] - m) / (m_count * s);
                d_input.add_at(i, j, dl_ddev * ddev_dr + dl_ds * ds_dr);
            }
        }
    }
}

/// |cov(s, p)| over the masked nodes, with 1/M normalization.
pub fn loss_covariance(sensitive: &[u8], probs: &[f64], mask: &[bool]) -> Result<f64> {
    let (cov, _, count) = masked_covariance(sensitive, probs, mask)?;
    let _ = count;
    Ok(cov.abs())
}

/// Accumulates `weight * d|cov|/dp` into `d_probs`.
pub fn loss_covariance_backward(
    sensitive: &[u8],
    probs: &[f64],
    mask: &[bool],
    weight: f64,
    d_probs: &mut [f64],
) -> Result<()> {
    let (cov, s_mean, count) = masked_covariance(sensitive, probs, mask)?;
    let sign = if cov > 0.0 {
        1.0
    } else if cov < 0.0 {
        -1.0
    } else {
        0.0
    };
    let m = count as f64;
    for j in 0..probs.len() {
        if mask[j] {
            d_probs[j] += weight * sign * (sensitive[j] as f64 - s_mean) / m;
        }
    }
    Ok(())
}

fn masked_covariance(sensitive: &[u8], probs: &[f64], mask: &[bool]) -> Result<(f64, f64, usize)> {
    assert_eq!(sensitive.len(), probs.len());
    assert_eq!(sensitive.len(), mask.len());
    let count = mask.iter().filter(|m| **m).count();
    if count == 0 {
        return Err(Error::MetricUndefined(
            "covariance over an empty mask".into(),
        ));
    }
    let m = count as f64;
    let mut s_mean = 0.0;
    let mut p_mean = 0.0;
    for j in 0..probs.len() {
        if mask[j] {
            s_mean += sensitive[j] as f64;
            p_mean += probs[j];
        }
    }
    s_mean /= m;
    p_mean /= m;
    let mut cov = 0.0;
    for j in 0..probs.len() {
        if mask[j] {
            cov += (sensitive[j] as f64 - s_mean) * (probs[j] - p_mean);
        }
    }
    cov /= m;
    Ok((cov, s_mean, count))
}

/// Hard predictions at threshold 0.5 (ties count as positive).
pub fn classify(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| if p >= 0.5 { 1 } else { 0 }).collect()
}

/// |P(yhat=1 | s=0) - P(yhat=1 | s=1)| over the masked nodes.
pub fn metric_statistical_parity(
    preds: &[u8],
    sensitive: &[u8],
    mask: &[bool],
) -> Result<f64> {
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for j in 0..preds.len() {
        if mask[j] {
            let g = sensitive[j] as usize;
            tot[g] += 1;
            pos[g] += preds[j] as usize;
        }
    }
    for (g, t) in tot.iter().enumerate() {
        if *t == 0 {
            return Err(Error::MetricUndefined(format!(
                "statistical parity: group {g} has no masked nodes"
            )));
        }
    }
    let r0 = pos[0] as f64 / tot[0] as f64;
    let r1 = pos[1] as f64 / tot[1] as f64;
    Ok((r0 - r1).abs())
}

/// |P(yhat=1 | y=1, s=0) - P(yhat=1 | y=1, s=1)| over the masked nodes.
pub fn metric_equal_opportunity(
    preds: &[u8],
    labels: &[u8],
    sensitive: &[u8],
    mask: &[bool],
) -> Result<f64> {
    let mut pos = [0usize; 2];
    let mut tot = [0usize; 2];
    for j in 0..preds.len() {
        if mask[j] && labels[j] == 1 {
            let g = sensitive[j] as usize;
            tot[g] += 1;
            pos[g] += preds[j] as usize;
        }
    }
    for (g, t) in tot.iter().enumerate() {
        if *t == 0 {
            return Err(Error::MetricUndefined(format!(
                "equal opportunity: group {g} has no masked positive nodes"
            )));
        }
    }
    let r0 = pos[0] as f64 / tot[0] as f64;
    let r1 = pos[1] as f64 / tot[1] as f64;
    Ok((r0 - r1).abs())
}

pub fn accuracy(preds: &[u8], labels: &[u8], mask: &[bool]) -> Result<f64> {
    let mut hit = 0usize;
    let mut tot = 0usize;
    for j in 0..preds.len() {
        if mask[j] {
            tot += 1;
            hit += (preds[j] == labels[j]) as usize;
        }
    }
    if tot == 0 {
        return Err(Error::MetricUndefined("accuracy over an empty mask".into()));
    }
    Ok(hit as f64 / tot as f64)
}

/// One evaluation of the activation mean-gap bound.
///
/// Inputs are the two groups' pre-activation representations (columns are
/// nodes). With mu_g the post-activation group means, mubar_g the
/// pre-activation means, and dev_g the per-feature peak deviations around
/// mubar_g, the bound states
///
///   || mu_0 - mu_1 ||_p <= L ( || mubar_0 - mubar_1 ||_p
///                              + || dev_0 ||_p + || dev_1 ||_p )
///
/// for every p >= 1, with L a Lipschitz constant of the activation.
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub post_gap: f64,
    pub pre_gap: f64,
    pub dev0_norm: f64,
    pub dev1_norm: f64,
}

impl BoundCheck {
    pub fn satisfied(&self, slack: f64) -> bool {
        self.lhs <= self.rhs + slack
    }
}

pub fn check_mean_gap_bound(
    h0: &Mat,
    h1: &Mat,
    act: Activation,
    p: PNorm,
) -> Result<BoundCheck> {
    if h0.rows() != h1.rows() {
        return Err(Error::DimMismatch {
            context: "bound check feature dimension",
            got: format!("{}", h1.rows()),
            expected: format!("{}", h0.rows()),
        });
    }
    if h0.cols() == 0 || h1.cols() == 0 {
        return Err(Error::InvalidArgument(
            "bound check needs at least one node per group".into(),
        ));
    }
    let f = h0.rows();
    let mut pre_gap = Vec::with_capacity(f);
    let mut post_gap = Vec::with_capacity(f);
    let mut dev0 = Vec::with_capacity(f);
    let mut dev1 = Vec::with_capacity(f);
    for i in 0..f {
        let stats = |h: &Mat| -> (f64, f64, f64) {
            let row = h.row(i);
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let dev = row.iter().fold(0.0_f64, |d, &x| d.max((x - m).abs()));
            let post = row.iter().map(|&x| act.apply(x)).sum::<f64>() / row.len() as f64;
            (m, dev, post)
        };
        let (m0, d0, p0) = stats(h0);
        let (m1, d1, p1) = stats(h1);
        pre_gap.push(m0 - m1);
        post_gap.push(p0 - p1);
        dev0.push(d0);
        dev1.push(d1);
    }
    let lhs = p.eval(&post_gap);
    let pre = p.eval(&pre_gap);
    let n0 = p.eval(&dev0);
    let n1 = p.eval(&dev1);
    let rhs = act.lipschitz_bound() * (pre + n0 + n1);
    Ok(BoundCheck {
        lhs,
        rhs,
        post_gap: lhs,
        pre_gap: pre,
        dev0_norm: n0,
        dev1_norm: n1,
    })
}
