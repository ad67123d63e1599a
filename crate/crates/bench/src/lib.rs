//! Shared fixtures for the benchmarks.

use sgmatch::datagen::{generate_floorplan, perturb, GenParams, NoiseParams};
use sgmatch::graph::{compute_feature_stats, SceneGraph};
use sgmatch::matching::Matcher;
use sgmatch::nn::{Architecture, EncoderParams};

/// A 20-room plan (100 nodes) and an S-graph with exactly `s_nodes` nodes
/// obtained by dropping wall surfaces.
pub fn sized_pair(s_nodes: usize, seed: u64) -> (SceneGraph, SceneGraph) {
    let a = generate_floorplan(&GenParams {
        rooms_min: 20,
        rooms_max: 20,
        seed,
        ..Default::default()
    })
    .expect("plan");
    let walls = a.len() - 20;
    let p_ws = (a.len() - s_nodes) as f64 / walls as f64;
    for k in 0.. {
        let noise = NoiseParams {
            p_drop_room: 0.0,
            p_drop_ws: p_ws,
            seed: seed.wrapping_mul(1000) + k,
            ..Default::default()
        };
        let (s, _) = perturb(&a, &noise).expect("perturb");
        if s.len() == s_nodes {
            return (a, s);
        }
    }
    unreachable!()
}

pub fn untrained_matcher(a: &SceneGraph) -> Matcher {
    let stats = compute_feature_stats([a]).expect("stats");
    Matcher::new(EncoderParams::init(&Architecture::default(), 1), stats)
}
