//! Shared MLP feature homogenizer and two-layer multi-head GATv2 encoder,
//! with hand-derived reverse-mode gradients.

mod encoder;
mod gat;
pub mod gradcheck;
mod mlp;
mod weights;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use encoder::{EncoderCache, EncoderInput, EncoderParams};
pub use gat::{attention_normalize, gatv2_scores, GatCache, GatHead, GatLayer, HeadMode, MessageGraph};
pub use mlp::{Mlp, MlpCache};
pub use weights::{WeightsFile, WEIGHTS_FORMAT_VERSION};

use crate::graph::FEATURE_DIM;
use crate::matrix::Matrix;

/// Fixed architecture constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub input_dim: usize,
    pub mlp_hidden: usize,
    /// MLP output width, which is also the GATv2 input width.
    pub embed_dim: usize,
    pub heads: usize,
    /// Width of the first GATv2 layer's concatenated output.
    pub hidden_dim: usize,
    /// Width of the final (head-averaged) embedding.
    pub output_dim: usize,
    pub mlp_dropout: f64,
    pub node_dropout: f64,
    pub attn_dropout: f64,
    pub leaky_slope: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            input_dim: FEATURE_DIM,
            mlp_hidden: 64,
            embed_dim: 64,
            heads: 4,
            hidden_dim: 64,
            output_dim: 32,
            mlp_dropout: 0.0,
            node_dropout: 0.15,
            attn_dropout: 0.12,
            leaky_slope: 0.2,
        }
    }
}

impl Architecture {
    pub fn head_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.hidden_dim / self.heads
        } else {
            self.output_dim
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        let prob = |p: f64| (0.0..1.0).contains(&p);
        if self.heads == 0
            || !self.hidden_dim.is_multiple_of(self.heads)
            || self.input_dim == 0
            || self.output_dim == 0
            || !prob(self.mlp_dropout)
            || !prob(self.node_dropout)
            || !prob(self.attn_dropout)
        {
            return Err(crate::Error::InvalidInput(format!("invalid architecture: {self:?}")));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub(crate) fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Inverted-dropout keep factors: each entry is 0 or `1/(1-p)`.
fn dropout_factors(rng: &mut impl Rng, len: usize, p: f64) -> Vec<f64> {
    if p == 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - p);
    (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect()
}

/// Every dropout mask used by one training-mode forward pass. Holding them
/// explicitly lets the backward pass (and gradient checks) replay the exact
/// same stochastic function.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMasks {
    pub mlp: [Matrix; 2],
    /// Indexed `[layer][head][edge]`.
    pub attention: [Vec<Vec<f64>>; 2],
    /// Applied after the first GATv2 layer.
    pub node: Matrix,
}

impl DropoutMasks {
    pub fn sample(arch: &Architecture, n_nodes: usize, n_edges: usize, rng: &mut impl Rng) -> Self {
        let mat = |cols: usize, p: f64, rng: &mut _| {
            Matrix::from_vec(n_nodes, cols, dropout_factors(rng, n_nodes * cols, p)).expect("sized")
        };
        let mlp = [
            mat(arch.mlp_hidden, arch.mlp_dropout, rng),
            mat(arch.embed_dim, arch.mlp_dropout, rng),
        ];
        let mut attention: [Vec<Vec<f64>>; 2] = Default::default();
        for layer in &mut attention {
            *layer = (0..arch.heads)
                .map(|_| dropout_factors(rng, n_edges, arch.attn_dropout))
                .collect();
        }
        let node = mat(arch.hidden_dim, arch.node_dropout, rng);
        Self { mlp, attention, node }
    }
}
