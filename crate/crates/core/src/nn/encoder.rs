use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SceneGraph;
use crate::matrix::Matrix;

use super::gat::{GatCache, GatLayer, HeadMode, MessageGraph};
use super::mlp::{Mlp, MlpCache};
use super::{Architecture, DropoutMasks};

/// Standardized features plus message-passing structure of one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub features: Matrix,
    pub graph: MessageGraph,
}

impl EncoderInput {
    /// Requires `graph.features` (see [`crate::graph::standardize_features`]).
    pub fn from_scene(graph: &SceneGraph) -> Result<Self> {
        let features = graph
            .features
            .clone()
            .ok_or_else(|| Error::InvalidInput("graph features are not standardized".into()))?;
        Ok(Self {
            features,
            graph: MessageGraph::from_scene(graph)?,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Every learnable tensor of the MLP + GATv2 stack. The same type doubles as
/// the gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub arch: Architecture,
    pub mlp: Mlp,
    pub layers: [GatLayer; 2],
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    n_nodes: usize,
    n_edges: usize,
    mlp: MlpCache,
    layers: [GatCache; 2],
}

fn glorot(m: &mut Matrix, rng: &mut impl Rng) {
    let (fan_out, fan_in) = m.shape();
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    m.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-bound..bound));
}

impl EncoderParams {
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = [
            GatLayer::zeros(arch.embed_dim, arch.head_dim(0), arch.heads, HeadMode::Concat, true),
            GatLayer::zeros(arch.hidden_dim, arch.head_dim(1), arch.heads, HeadMode::Average, false),
        ];
        Self {
            arch: arch.clone(),
            mlp: Mlp::zeros(arch.input_dim, arch.mlp_hidden, arch.embed_dim),
            layers,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: &Architecture, seed: u64) -> Self {
        let mut p = Self::zeros(arch);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, t) in p.tensors_mut() {
            if !name.starts_with("mlp.b") {
                glorot(t, &mut rng);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch)
    }

    /// Tensors in a fixed canonical order with stable names.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![
            ("mlp.w1".to_string(), &self.mlp.w1),
            ("mlp.b1".to_string(), &self.mlp.b1),
            ("mlp.w2".to_string(), &self.mlp.w2),
            ("mlp.b2".to_string(), &self.mlp.b2),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (k, head) in layer.heads.iter().enumerate() {
                out.push((format!("gat{l}.head{k}.wa"), &head.wa));
                out.push((format!("gat{l}.head{k}.attn"), &head.attn));
                out.push((format!("gat{l}.head{k}.wh"), &head.wh));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        let mut out = vec![
            ("mlp.w1".to_string(), &mut self.mlp.w1),
            ("mlp.b1".to_string(), &mut self.mlp.b1),
            ("mlp.w2".to_string(), &mut self.mlp.w2),
            ("mlp.b2".to_string(), &mut self.mlp.b2),
        ];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (k, head) in layer.heads.iter_mut().enumerate() {
                out.push((format!("gat{l}.head{k}.wa"), &mut head.wa));
                out.push((format!("gat{l}.head{k}.attn"), &mut head.attn));
                out.push((format!("gat{l}.head{k}.wh"), &mut head.wh));
            }
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.tensors() {
            out.extend_from_slice(t.as_slice());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.len();
            t.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &EncoderParams, alpha: f64) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_scaled(b, alpha);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn sample_masks(&self, input: &EncoderInput, rng: &mut impl Rng) -> DropoutMasks {
        DropoutMasks::sample(&self.arch, input.n_nodes(), input.graph.n_edges(), rng)
    }

    /// Embeddings (N × output_dim). `masks = None` is evaluation mode.
    pub fn forward(&self, input: &EncoderInput, masks: Option<&DropoutMasks>) -> Result<Matrix> {
        Ok(self.forward_cached(input, masks)?.0)
    }

    pub fn forward_cached(&self, input: &EncoderInput, masks: Option<&DropoutMasks>) -> Result<(Matrix, EncoderCache)> {
        let slope = self.arch.leaky_slope;
        let (h0, mlp) = self.mlp.forward_cached(&input.features, masks.map(|m| &m.mlp))?;
        let (h1, c1) = self.layers[0].forward_cached(
            &h0,
            &input.graph,
            slope,
            masks.map(|m| m.attention[0].as_slice()),
            masks.map(|m| &m.node),
        )?;
        let (h2, c2) = self.layers[1].forward_cached(
            &h1,
            &input.graph,
            slope,
            masks.map(|m| m.attention[1].as_slice()),
            None,
        )?;
        let cache = EncoderCache {
            n_nodes: input.n_nodes(),
            n_edges: input.graph.n_edges(),
            mlp,
            layers: [c1, c2],
        };
        Ok((h2, cache))
    }

    /// Parameter gradients of `⟨d_out, forward(input)⟩`, replaying the masks
    /// captured in `cache`.
    pub fn backward(&self, input: &EncoderInput, cache: &EncoderCache, d_out: &Matrix) -> Result<EncoderParams> {
        if cache.n_nodes != input.n_nodes() || cache.n_edges != input.graph.n_edges() {
            return Err(Error::InvalidInput(
                "forward cache does not belong to this input".into(),
            ));
        }
        if d_out.shape() != (input.n_nodes(), self.arch.output_dim) {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, expected ({}, {})",
                d_out.shape(),
                input.n_nodes(),
                self.arch.output_dim
            )));
        }
        let slope = self.arch.leaky_slope;
        let mut grads = self.zeros_like();
        let d_h1 = self.layers[1].backward(&input.graph, &cache.layers[1], d_out, slope, &mut grads.layers[1]);
        let d_h0 = self.layers[0].backward(&input.graph, &cache.layers[0], &d_h1, slope, &mut grads.layers[0]);
        self.mlp.backward(&cache.mlp, &d_h0, &mut grads.mlp);
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_floorplan, GenParams};
    use crate::graph::{augment_edges, compute_feature_stats, standardize_features, AdjacencyTolerance};

    fn plan_input(seed: u64) -> (SceneGraph, EncoderInput) {
        let g = generate_floorplan(&GenParams { rooms_min: 2, rooms_max: 3, seed, ..Default::default() }).unwrap();
        let g = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        let stats = compute_feature_stats([&g]).unwrap();
        let g = standardize_features(&g, &stats).unwrap();
        let input = EncoderInput::from_scene(&g).unwrap();
        (g, input)
    }

    #[test]
    fn architecture_shapes() {
        let p = EncoderParams::init(&Architecture::default(), 0);
        assert_eq!(p.layers[0].output_dim(), 64);
        assert_eq!(p.layers[1].output_dim(), 32);
        assert_eq!(p.layers[0].heads.len(), 4);
        assert_eq!(p.layers[0].heads[0].wa.shape(), (16, 128));
        assert_eq!(p.layers[1].heads[0].wa.shape(), (32, 128));
        let (_, input) = plan_input(1);
        let out = p.forward(&input, None).unwrap();
        assert_eq!(out.shape(), (input.n_nodes(), 32));
    }

    #[test]
    fn eval_is_deterministic_and_train_masks_reproduce() {
        let p = EncoderParams::init(&Architecture::default(), 3);
        let (_, input) = plan_input(2);
        assert_eq!(p.forward(&input, None).unwrap(), p.forward(&input, None).unwrap());
        let m1 = p.sample_masks(&input, &mut ChaCha8Rng::seed_from_u64(9));
        let m2 = p.sample_masks(&input, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(m1, m2);
        assert_eq!(p.forward(&input, Some(&m1)).unwrap(), p.forward(&input, Some(&m2)).unwrap());
        assert_ne!(p.forward(&input, Some(&m1)).unwrap(), p.forward(&input, None).unwrap());
    }

    #[test]
    fn zero_upstream_and_linearity() {
        let p = EncoderParams::init(&Architecture::default(), 4);
        let (_, input) = plan_input(3);
        let (out, cache) = p.forward_cached(&input, None).unwrap();
        let zero = p.backward(&input, &cache, &Matrix::zeros(out.rows(), out.cols())).unwrap();
        assert!(zero.to_flat().iter().all(|&g| g == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let up = Matrix::from_fn(out.rows(), out.cols(), |_, _| rng.random_range(-1.0..1.0));
        let mut up2 = up.clone();
        up2.scale(2.0);
        let g1 = p.backward(&input, &cache, &up).unwrap().to_flat();
        let g2 = p.backward(&input, &cache, &up2).unwrap().to_flat();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn backward_rejects_foreign_cache() {
        let p = EncoderParams::init(&Architecture::default(), 4);
        let (_, a) = plan_input(3);
        let (_, b) = plan_input(11);
        let (_, cache) = p.forward_cached(&a, None).unwrap();
        if a.n_nodes() != b.n_nodes() {
            let d = Matrix::zeros(b.n_nodes(), 32);
            assert!(p.backward(&b, &cache, &d).is_err());
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = EncoderParams::init(&Architecture::default(), 8);
        let mut q = p.zeros_like();
        q.set_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(&[0.0]).is_err());
    }

    #[test]
    fn relabeling_commutes() {
        use rand::seq::SliceRandom;
        let p = EncoderParams::init(&Architecture::default(), 2);
        let (g, input) = plan_input(6);
        let mut perm: Vec<usize> = (0..g.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let pg = g.permuted(&perm).unwrap();
        let out = p.forward(&input, None).unwrap();
        let pout = p.forward(&EncoderInput::from_scene(&pg).unwrap(), None).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            for j in 0..32 {
                assert!((out[(old, j)] - pout[(new, j)]).abs() < 1e-12);
            }
        }
    }
}
