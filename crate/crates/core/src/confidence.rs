//! Boundary confidence and the propagation gate derived from it.

use serde::{Deserialize, Serialize};

use crate::labels::Pgm;
use crate::tensor::{sigmoid_scalar, softmax_channels, softmax_channels_vjp, Tensor};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceRole {
    /// Probability of the boundary class.
    Boundary,
    /// Gate applied to hidden states between scan steps.
    Propagation,
}

/// `H×W` map with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMap<T> {
    role: ConfidenceRole,
    values: Tensor<T>,
}

impl<T: Real> ConfidenceMap<T> {
    pub fn new(role: ConfidenceRole, values: Tensor<T>) -> Result<Self> {
        const OP: &str = "ConfidenceMap";
        if values.shape().len() != 2 {
            return Err(Error::invalid(
                OP,
                format!("expected an H×W map, got shape {:?}", values.shape()),
            ));
        }
        if let Some(v) = values
            .data()
            .iter()
            .find(|&&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::range(OP, format!("value {v} outside [0, 1]")));
        }
        Ok(Self { role, values })
    }

    pub fn uniform(role: ConfidenceRole, height: usize, width: usize, v: T) -> Result<Self> {
        Self::new(role, Tensor::full(&[height, width], v))
    }

    pub fn role(&self) -> ConfidenceRole {
        self.role
    }
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }
    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }
    pub fn data(&self) -> &[T] {
        self.values.data()
    }

    /// 8-bit greyscale view, `round(255 · v)`.
    pub fn to_pgm(&self) -> Pgm {
        Pgm {
            width: self.width(),
            height: self.height(),
            maxval: 255,
            values: self
                .data()
                .iter()
                .map(|v| (v.as_f64() * 255.0).round() as u16)
                .collect(),
        }
    }
}

/// Constants of the gate `p = 1 − β·sigmoid(α·b − γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateParams {
    pub alpha: f64,
    pub gamma: f64,
    /// Learnable; kept in `[0, 1]`.
    pub beta: f64,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            alpha: 20.0,
            gamma: 4.0,
            beta: 1.0,
        }
    }
}

impl GateParams {
    pub fn clamp_beta(beta: f64) -> f64 {
        beta.clamp(0.0, 1.0)
    }
}

/// Softmax probability of the last channel (the boundary class) of an
/// `(N+1)×H×W` score tensor.
pub fn boundary_confidence<T: Real>(scores: &Tensor<T>) -> Result<ConfidenceMap<T>> {
    let (c, h, w) = scores.dims3("boundary_confidence")?;
    if c < 2 {
        return Err(Error::invalid(
            "boundary_confidence",
            format!("need at least 2 channels, got {c}"),
        ));
    }
    let probs = softmax_channels(scores)?;
    let plane = h * w;
    let b = probs.data()[(c - 1) * plane..].to_vec();
    // Softmax output is in [0, 1] by construction.
    Ok(ConfidenceMap {
        role: ConfidenceRole::Boundary,
        values: Tensor::from_vec(&[h, w], b)?,
    })
}

/// Gradient of `boundary_confidence` with respect to the scores.
pub fn boundary_confidence_vjp<T: Real>(
    upstream: &Tensor<T>,
    scores: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (c, h, w) = scores.dims3("boundary_confidence_vjp")?;
    upstream.ensure_shape("boundary_confidence_vjp", &[h, w])?;
    let probs = softmax_channels(scores)?;
    let mut g = Tensor::zeros(scores.shape());
    g.data_mut()[(c - 1) * h * w..].copy_from_slice(upstream.data());
    softmax_channels_vjp(&g, &probs)
}

/// `p = 1 − β·sigmoid(α·b − γ)`, elementwise.
pub fn propagation_confidence<T: Real>(b: &ConfidenceMap<T>, gp: &GateParams) -> ConfidenceMap<T> {
    let (alpha, gamma, beta) = (T::of(gp.alpha), T::of(gp.gamma), T::of(gp.beta));
    let values = b
        .values()
        .map(|v| T::one() - beta * sigmoid_scalar(alpha * v - gamma));
    ConfidenceMap {
        role: ConfidenceRole::Propagation,
        values,
    }
}

/// Gradients of `Σ upstream · p` with respect to `b` and `β`.
pub fn propagation_confidence_vjp<T: Real>(
    upstream: &Tensor<T>,
    b: &ConfidenceMap<T>,
    gp: &GateParams,
) -> Result<(Tensor<T>, T)> {
    upstream.ensure_shape("propagation_confidence_vjp", b.values().shape())?;
    let (alpha, gamma, beta) = (T::of(gp.alpha), T::of(gp.gamma), T::of(gp.beta));
    let mut dbeta = T::zero();
    let mut db = Vec::with_capacity(b.data().len());
    for (&g, &v) in upstream.data().iter().zip(b.data()) {
        let s = sigmoid_scalar(alpha * v - gamma);
        dbeta -= g * s;
        db.push(-g * beta * alpha * s * (T::one() - s));
    }
    Ok((Tensor::from_vec(b.values().shape(), db)?, dbeta))
}
