use std::ops::Range;

use crate::error::{Error, Result};
use crate::graph::SceneGraph;
use crate::matrix::{dot, Matrix};

use super::{leaky_relu, leaky_relu_grad, relu, relu_grad};

/// Directed message-passing structure: every scene-graph edge `u → v`
/// (all relation types pooled) plus one self-loop per node, stored sorted by
/// destination so each node's incoming edges are contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageGraph {
    n_nodes: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    offsets: Vec<usize>,
}

impl MessageGraph {
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = (0..n_nodes).map(|v| (v, v)).collect();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidGraph(format!("edge {u}->{v} out of range")));
            }
            pairs.push((v, u));
        }
        pairs.sort_unstable();
        pairs.dedup();
        let mut offsets = vec![0; n_nodes + 1];
        for &(v, _) in &pairs {
            offsets[v + 1] += 1;
        }
        for i in 0..n_nodes {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            n_nodes,
            src: pairs.iter().map(|p| p.1).collect(),
            dst: pairs.iter().map(|p| p.0).collect(),
            offsets,
        })
    }

    pub fn from_scene(graph: &SceneGraph) -> Result<Self> {
        Self::new(graph.len(), graph.edges.iter().map(|e| (e.src, e.dst)))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }

    /// `(source, destination)` of edge `e`.
    #[inline]
    pub fn edge(&self, e: usize) -> (usize, usize) {
        (self.src[e], self.dst[e])
    }

    /// Edge index range of the edges entering `v`.
    #[inline]
    pub fn incoming(&self, v: usize) -> Range<usize> {
        self.offsets[v]..self.offsets[v + 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HeadMode {
    Concat,
    Average,
}

/// One attention head. `wa` acts on `[h_src ∥ h_dst]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GatHead {
    /// d × 2·d_in
    pub wa: Matrix,
    /// 1 × d
    pub attn: Matrix,
    /// d × d_in
    pub wh: Matrix,
}

impl GatHead {
    pub fn zeros(d_in: usize, d: usize) -> Self {
        Self {
            wa: Matrix::zeros(d, 2 * d_in),
            attn: Matrix::zeros(1, d),
            wh: Matrix::zeros(d, d_in),
        }
    }

    fn split_wa(&self) -> (Matrix, Matrix) {
        let d_in = self.wh.cols();
        let mut src = Matrix::zeros(self.wa.rows(), d_in);
        let mut dst = Matrix::zeros(self.wa.rows(), d_in);
        for i in 0..self.wa.rows() {
            let (a, b) = self.wa.row(i).split_at(d_in);
            src.row_mut(i).copy_from_slice(a);
            dst.row_mut(i).copy_from_slice(b);
        }
        (src, dst)
    }

    /// Pre-activation score vectors `W_a [h_u ∥ h_v]`, one row per edge.
    fn edge_preacts(&self, h: &Matrix, graph: &MessageGraph) -> Matrix {
        let (wa_src, wa_dst) = self.split_wa();
        let ps = h.matmul_t(&wa_src);
        let pd = h.matmul_t(&wa_dst);
        let d = self.wa.rows();
        let mut z = Matrix::zeros(graph.n_edges(), d);
        for e in 0..graph.n_edges() {
            let (u, v) = graph.edge(e);
            for ((out, a), b) in z.row_mut(e).iter_mut().zip(ps.row(u)).zip(pd.row(v)) {
                *out = a + b;
            }
        }
        z
    }
}

/// Per-edge attention logits `aᵀ LeakyReLU(W_a [h_u ∥ h_v])`.
pub fn gatv2_scores(h: &Matrix, graph: &MessageGraph, head: &GatHead, slope: f64) -> Result<Vec<f64>> {
    if h.rows() != graph.n_nodes() || 2 * h.cols() != head.wa.cols() {
        return Err(Error::Shape(format!(
            "GATv2 scores: features {:?} vs W_a {:?}",
            h.shape(),
            head.wa.shape()
        )));
    }
    let z = head.edge_preacts(h, graph);
    Ok(logits_from_preacts(&z, head, slope))
}

fn logits_from_preacts(z: &Matrix, head: &GatHead, slope: f64) -> Vec<f64> {
    let a = head.attn.as_slice();
    (0..z.rows())
        .map(|e| z.row(e).iter().zip(a).map(|(&x, w)| w * leaky_relu(x, slope)).sum())
        .collect()
}

/// Softmax of `logits` over each destination's incoming edges (max-shifted).
/// With `dropout`, returns the inverted-dropout weights actually used for
/// aggregation alongside the clean softmax.
pub fn attention_normalize(logits: &[f64], graph: &MessageGraph, dropout: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = vec![0.0; logits.len()];
    for v in 0..graph.n_nodes() {
        let range = graph.incoming(v);
        if range.is_empty() {
            continue;
        }
        let max = logits[range.clone()].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for e in range.clone() {
            alpha[e] = (logits[e] - max).exp();
            total += alpha[e];
        }
        for e in range {
            alpha[e] /= total;
        }
    }
    let used = match dropout {
        Some(mask) => alpha.iter().zip(mask).map(|(a, m)| a * m).collect(),
        None => alpha.clone(),
    };
    (alpha, used)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub mode: HeadMode,
    /// ReLU followed by node dropout on the combined output.
    pub activate: bool,
}

#[derive(Clone, Debug)]
struct HeadCache {
    z: Matrix,
    alpha: Vec<f64>,
    alpha_used: Vec<f64>,
    values: Matrix,
}

#[derive(Clone, Debug)]
pub struct GatCache {
    input: Matrix,
    heads: Vec<HeadCache>,
    /// Combined head output before the activation (only when `activate`).
    pre: Option<Matrix>,
    attn_masks: Option<Vec<Vec<f64>>>,
    node_mask: Option<Matrix>,
}

impl GatLayer {
    pub fn zeros(d_in: usize, head_dim: usize, heads: usize, mode: HeadMode, activate: bool) -> Self {
        Self {
            heads: (0..heads).map(|_| GatHead::zeros(d_in, head_dim)).collect(),
            mode,
            activate,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.heads[0].wh.cols()
    }

    pub fn output_dim(&self) -> usize {
        let d = self.heads[0].wh.rows();
        match self.mode {
            HeadMode::Concat => d * self.heads.len(),
            HeadMode::Average => d,
        }
    }

    pub fn forward(&self, h: &Matrix, graph: &MessageGraph, slope: f64) -> Result<Matrix> {
        Ok(self.forward_cached(h, graph, slope, None, None)?.0)
    }

    /// `attn_masks[head][edge]` and `node_mask` are inverted-dropout factors;
    /// `None` means evaluation behaviour.
    pub fn forward_cached(
        &self,
        h: &Matrix,
        graph: &MessageGraph,
        slope: f64,
        attn_masks: Option<&[Vec<f64>]>,
        node_mask: Option<&Matrix>,
    ) -> Result<(Matrix, GatCache)> {
        if h.rows() != graph.n_nodes() || h.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "GATv2 layer expects {}x{}, got {:?}",
                graph.n_nodes(),
                self.input_dim(),
                h.shape()
            )));
        }
        if let Some(m) = attn_masks {
            if m.len() != self.heads.len() || m.iter().any(|v| v.len() != graph.n_edges()) {
                return Err(Error::Shape("attention dropout mask shape".into()));
            }
        }
        let n = graph.n_nodes();
        let d = self.heads[0].wh.rows();
        let n_heads = self.heads.len();
        let mut combined = Matrix::zeros(n, self.output_dim());
        let mut caches = Vec::with_capacity(n_heads);

        for (k, head) in self.heads.iter().enumerate() {
            let z = head.edge_preacts(h, graph);
            let logits = logits_from_preacts(&z, head, slope);
            let (alpha, alpha_used) = attention_normalize(&logits, graph, attn_masks.map(|m| m[k].as_slice()));
            let values = h.matmul_t(&head.wh);

            let (offset, scale) = match self.mode {
                HeadMode::Concat => (k * d, 1.0),
                HeadMode::Average => (0, 1.0 / n_heads as f64),
            };
            for v in 0..n {
                let mut acc = vec![0.0; d];
                for e in graph.incoming(v) {
                    let (u, _) = graph.edge(e);
                    let w = alpha_used[e];
                    for (a, x) in acc.iter_mut().zip(values.row(u)) {
                        *a += w * x;
                    }
                }
                for (out, a) in combined.row_mut(v)[offset..offset + d].iter_mut().zip(&acc) {
                    *out += scale * a;
                }
            }
            caches.push(HeadCache {
                z,
                alpha,
                alpha_used,
                values,
            });
        }

        let (out, pre) = if self.activate {
            if let Some(m) = node_mask {
                if m.shape() != combined.shape() {
                    return Err(Error::Shape("node dropout mask shape".into()));
                }
            }
            let mut out = combined.clone();
            for (i, x) in out.as_mut_slice().iter_mut().enumerate() {
                *x = relu(*x) * node_mask.map_or(1.0, |m| m.as_slice()[i]);
            }
            (out, Some(combined))
        } else {
            (combined, None)
        };

        let cache = GatCache {
            input: h.clone(),
            heads: caches,
            pre,
            attn_masks: attn_masks.map(|m| m.to_vec()),
            node_mask: if self.activate { node_mask.cloned() } else { None },
        };
        Ok((out, cache))
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the layer input.
    pub fn backward(&self, graph: &MessageGraph, cache: &GatCache, d_out: &Matrix, slope: f64, grads: &mut GatLayer) -> Matrix {
        let n = graph.n_nodes();
        let d = self.heads[0].wh.rows();
        let n_heads = self.heads.len();
        let h = &cache.input;

        let d_combined = match &cache.pre {
            Some(pre) => {
                let mut g = d_out.clone();
                for (i, x) in g.as_mut_slice().iter_mut().enumerate() {
                    let keep = cache.node_mask.as_ref().map_or(1.0, |m| m.as_slice()[i]);
                    *x *= keep * relu_grad(pre.as_slice()[i]);
                }
                g
            }
            None => d_out.clone(),
        };

        let mut d_input = Matrix::zeros(n, h.cols());
        for (k, (head, hc)) in self.heads.iter().zip(&cache.heads).enumerate() {
            let (offset, scale) = match self.mode {
                HeadMode::Concat => (k * d, 1.0),
                HeadMode::Average => (0, 1.0 / n_heads as f64),
            };
            let d_head = Matrix::from_fn(n, d, |v, j| scale * d_combined[(v, offset + j)]);

            let mut d_values = Matrix::zeros(n, d);
            let mut d_alpha = vec![0.0; graph.n_edges()];
            for v in 0..n {
                let gv = d_head.row(v);
                for e in graph.incoming(v) {
                    let (u, _) = graph.edge(e);
                    let w = hc.alpha_used[e];
                    for (dv, g) in d_values.row_mut(u).iter_mut().zip(gv) {
                        *dv += w * g;
                    }
                    let keep = cache.attn_masks.as_ref().map_or(1.0, |m| m[k][e]);
                    d_alpha[e] = keep * dot(gv, hc.values.row(u));
                }
            }

            // softmax backward per destination
            let mut d_logit = vec![0.0; graph.n_edges()];
            for v in 0..n {
                let range = graph.incoming(v);
                let s: f64 = range.clone().map(|e| hc.alpha[e] * d_alpha[e]).sum();
                for e in range {
                    d_logit[e] = hc.alpha[e] * (d_alpha[e] - s);
                }
            }

            let gh = &mut grads.heads[k];
            let a = head.attn.as_slice();
            let mut d_ps = Matrix::zeros(n, d);
            let mut d_pd = Matrix::zeros(n, d);
            for (e, &g) in d_logit.iter().enumerate() {
                let (u, v) = graph.edge(e);
                if g == 0.0 {
                    continue;
                }
                let z = hc.z.row(e);
                for (j, &x) in z.iter().enumerate() {
                    gh.attn.as_mut_slice()[j] += g * leaky_relu(x, slope);
                    let dz = g * a[j] * leaky_relu_grad(x, slope);
                    d_ps[(u, j)] += dz;
                    d_pd[(v, j)] += dz;
                }
            }

            let d_in = h.cols();
            let dwa_src = d_ps.t_matmul(h);
            let dwa_dst = d_pd.t_matmul(h);
            for i in 0..d {
                for j in 0..d_in {
                    gh.wa[(i, j)] += dwa_src[(i, j)];
                    gh.wa[(i, d_in + j)] += dwa_dst[(i, j)];
                }
            }
            gh.wh.add_scaled(&d_values.t_matmul(h), 1.0);

            let (wa_src, wa_dst) = head.split_wa();
            d_input.add_scaled(&d_ps.matmul(&wa_src), 1.0);
            d_input.add_scaled(&d_pd.matmul(&wa_dst), 1.0);
            d_input.add_scaled(&d_values.matmul(&head.wh), 1.0);
        }
        d_input
    }
}
