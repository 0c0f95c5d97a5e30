//! Layer primitives: activations, weight initialization, linear maps and
//! their adjoints. Gradients are hand-derived; each layer exposes the pieces
//! the model assembly composes in reverse order.

use crate::dense::Mat;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Pass-through; used by the bound checker, not by trained models.
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation input. The ReLU
    /// subgradient at exactly zero is taken as zero.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(pre);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn apply_mat(self, m: &Mat) -> Mat {
        m.map(|x| self.apply(x))
    }

    /// A valid (not necessarily tight) Lipschitz constant, used on the
    /// right-hand side of the mean-gap bound.
    pub fn lipschitz_bound(self) -> f64 {
        1.0
    }

    pub fn label(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> crate::error::Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" => Ok(Activation::Identity),
            other => Err(crate::error::Error::InvalidArgument(format!(
                "unknown activation '{other}' (expected relu, sigmoid, or identity)"
            ))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A weight matrix together with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct DenseParam {
    pub value: Mat,
    pub grad: Mat,
}

impl DenseParam {
    pub fn new(value: Mat) -> Self {
        let grad = Mat::zeros(value.rows(), value.cols());
        DenseParam { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad = Mat::zeros(self.value.rows(), self.value.cols());
    }
}

/// Glorot/Xavier uniform initialization for a `rows x cols` weight acting as
/// `out = W * in`: fan_in = cols, fan_out = rows, entries uniform on
/// [-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot_init(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| a * (2.0 * rng.random::<f64>() - 1.0))
}

/// out = W h, with W of shape (out_dim x in_dim) and h of shape (in_dim x N).
pub fn linear_forward(w: &Mat, h: &Mat) -> Mat {
    w.matmul(h)
}

/// Adjoint of `linear_forward`: given dL/d(out), returns (dL/dW, dL/dh).
pub fn linear_backward(w: &Mat, h: &Mat, d_out: &Mat) -> (Mat, Mat) {
    let d_w = d_out.matmul(&h.transpose());
    let d_h = w.transpose().matmul(d_out);
    (d_w, d_h)
}

/// Elementwise activation backward: dL/d(pre) = dL/d(post) .* act'(pre).
pub fn activation_backward(act: Activation, pre: &Mat, d_post: &Mat) -> Mat {
    assert_eq!(pre.rows(), d_post.rows());
    assert_eq!(pre.cols(), d_post.cols());
    Mat::from_fn(pre.rows(), pre.cols(), |i, j| {
        d_post.get(i, j) * act.derivative(pre.get(i, j))
    })
}
