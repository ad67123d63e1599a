use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{affinity, hungarian, instance_normalize, pad_dummy_columns, sinkhorn, SinkhornConfig, SoftAssignment, INSTANCE_NORM_EPS};
use crate::error::{Error, Result};
use crate::graph::{augment_edges, standardize_features, AdjacencyTolerance, FeatureStats, SceneGraph};
use crate::matrix::Matrix;
use crate::nn::{EncoderInput, EncoderParams};

/// Hard injective S-node → A-node correspondence.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// `(s_node, a_node, score)`, ordered by S-node id.
    pub pairs: Vec<(usize, usize, f64)>,
    pub elapsed_s: f64,
}

#[derive(Serialize, Deserialize)]
struct MatchResultJson {
    pairs: Vec<(usize, usize, f64)>,
    elapsed_s: f64,
}

impl MatchResult {
    pub fn s_to_a(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&MatchResultJson {
            pairs: self.pairs.clone(),
            elapsed_s: self.elapsed_s,
        })
        .expect("match result serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let j: MatchResultJson = serde_json::from_str(s)?;
        Ok(Self {
            pairs: j.pairs,
            elapsed_s: j.elapsed_s,
        })
    }
}

/// Augments a containment-only graph; already-augmented graphs pass through.
pub fn ensure_augmented(graph: &SceneGraph, tol: AdjacencyTolerance) -> Result<SceneGraph> {
    if graph.is_augmented() {
        Ok(graph.clone())
    } else {
        augment_edges(graph, tol)
    }
}

/// Inference-time matcher: encoder weights plus everything needed to turn
/// raw graphs into encoder input.
#[derive(Clone, Debug)]
pub struct Matcher {
    pub params: EncoderParams,
    pub stats: FeatureStats,
    pub adjacency: AdjacencyTolerance,
    pub sinkhorn: SinkhornConfig,
}

impl Matcher {
    pub fn new(params: EncoderParams, stats: FeatureStats) -> Self {
        Self {
            params,
            stats,
            adjacency: AdjacencyTolerance::default(),
            sinkhorn: SinkhornConfig::default(),
        }
    }

    pub fn prepare(&self, graph: &SceneGraph) -> Result<EncoderInput> {
        let aug = ensure_augmented(graph, self.adjacency)?;
        EncoderInput::from_scene(&standardize_features(&aug, &self.stats)?)
    }

    pub fn embed(&self, graph: &SceneGraph) -> Result<Matrix> {
        self.params.forward(&self.prepare(graph)?, None)
    }

    /// Encoder → affinity → instance norm → dummy padding → Sinkhorn.
    pub fn soft_assignment(&self, agraph: &SceneGraph, sgraph: &SceneGraph) -> Result<SoftAssignment> {
        if sgraph.len() > agraph.len() {
            return Err(Error::SizeMismatch {
                a_nodes: agraph.len(),
                s_nodes: sgraph.len(),
            });
        }
        let h1 = self.embed(agraph)?;
        let h2 = self.embed(sgraph)?;
        soft_assignment_from_embeddings(&h1, &h2, &self.sinkhorn)
    }

    pub fn match_graphs(&self, agraph: &SceneGraph, sgraph: &SceneGraph) -> Result<MatchResult> {
        let start = Instant::now();
        let soft = self.soft_assignment(agraph, sgraph)?;
        let real = soft.real_block();
        let assignment = hungarian(&real)?;
        let pairs = assignment
            .s_to_a
            .iter()
            .enumerate()
            .map(|(s, &a)| (s, a, real[(a, s)]))
            .collect();
        Ok(MatchResult {
            pairs,
            elapsed_s: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn soft_assignment_from_embeddings(h1: &Matrix, h2: &Matrix, config: &SinkhornConfig) -> Result<SoftAssignment> {
    let aff = affinity(h1, h2)?;
    let norm = instance_normalize(&aff, INSTANCE_NORM_EPS);
    let padded = pad_dummy_columns(&norm)?;
    sinkhorn(&padded, h2.rows(), config)
}
