//! Procedural floor plans and their perturbed robot-side observations.
//!
//! Floor plans are axis-aligned rectangles packed edge-to-edge on a grid.
//! Each room becomes one room node followed by its four wall surfaces
//! (south, east, north, west). [`perturb`] drops nodes and applies geometric
//! noise to produce an S-graph together with the ground-truth provenance of
//! every surviving node.

use std::fs;
use std::path::Path;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{NodeRecord, NodeType, SceneGraph};

const PLACEMENT_ATTEMPTS: usize = 1000;
const ROOM_RESAMPLES: usize = 100;
pub const MIN_WALL_LENGTH: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub rooms_min: usize,
    pub rooms_max: usize,
    pub room_size_min: f64,
    pub room_size_max: f64,
    /// Room corners snap to multiples of this step, meters.
    pub grid: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            rooms_min: 5,
            rooms_max: 10,
            room_size_min: 3.0,
            room_size_max: 8.0,
            grid: 0.5,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rooms_min >= 1
            && self.rooms_min <= self.rooms_max
            && self.room_size_min > 0.0
            && self.room_size_min <= self.room_size_max
            && self.room_size_max.is_finite()
            && self.grid > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid generation parameters: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    pub p_drop_room: f64,
    pub p_drop_ws: f64,
    pub sigma_centroid: f64,
    /// Radians.
    pub sigma_normal_angle: f64,
    pub sigma_length: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            p_drop_room: 0.1,
            p_drop_ws: 0.2,
            sigma_centroid: 0.1,
            sigma_normal_angle: 5.0_f64.to_radians(),
            sigma_length: 0.1,
            seed: 0,
        }
    }
}

impl NoiseParams {
    /// Node drops only, no geometric noise.
    pub fn drop_only(p_drop_room: f64, p_drop_ws: f64) -> Self {
        Self {
            p_drop_room,
            p_drop_ws,
            sigma_centroid: 0.0,
            sigma_normal_angle: 0.0,
            sigma_length: 0.0,
            seed: 0,
        }
    }

    pub fn none() -> Self {
        Self::drop_only(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let sigma = |s: f64| s >= 0.0 && s.is_finite();
        if prob(self.p_drop_room)
            && prob(self.p_drop_ws)
            && sigma(self.sigma_centroid)
            && sigma(self.sigma_normal_angle)
            && sigma(self.sigma_length)
        {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid noise parameters: {self:?}")))
        }
    }
}

/// Axis-aligned room footprint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    /// Interior intersection; rectangles that only touch do not overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        const EPS: f64 = 1e-9;
        self.x0 < other.x1 - EPS
            && other.x0 < self.x1 - EPS
            && self.y0 < other.y1 - EPS
            && other.y0 < self.y1 - EPS
    }
}

fn draw_size(rng: &mut ChaCha8Rng, p: &GenParams) -> f64 {
    let lo = (p.room_size_min / p.grid).ceil() as i64;
    let hi = (p.room_size_max / p.grid).floor() as i64;
    if lo > hi {
        return p.room_size_min;
    }
    rng.random_range(lo..=hi) as f64 * p.grid
}

/// Packs rooms edge-to-edge. Each new room is attached to a random side of an
/// existing room, either centered on it (so the two walls share a midpoint) or
/// at a random grid offset.
pub fn generate_layout(params: &GenParams) -> Result<Vec<Rect>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n_rooms = rng.random_range(params.rooms_min..=params.rooms_max);

    let (w, h) = (draw_size(&mut rng, params), draw_size(&mut rng, params));
    let mut rects = vec![Rect {
        x0: 0.0,
        y0: 0.0,
        x1: w,
        y1: h,
    }];

    while rects.len() < n_rooms {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let anchor = rects[rng.random_range(0..rects.len())];
            let side = rng.random_range(0..4u8);
            let (w, h) = (draw_size(&mut rng, params), draw_size(&mut rng, params));
            let centered = rng.random_bool(0.5);
            let g = params.grid;
            // position along the shared side
            let along = |rng: &mut ChaCha8Rng, lo: f64, hi: f64, len: f64, mid: f64| {
                if centered {
                    mid - len / 2.0
                } else {
                    let kmin = ((lo - len + g) / g).ceil() as i64;
                    let kmax = ((hi - g) / g).floor() as i64;
                    if kmin > kmax {
                        mid - len / 2.0
                    } else {
                        rng.random_range(kmin..=kmax) as f64 * g
                    }
                }
            };
            let [cx, cy] = anchor.center();
            let cand = match side {
                0 => {
                    let x0 = along(&mut rng, anchor.x0, anchor.x1, w, cx);
                    Rect { x0, y0: anchor.y0 - h, x1: x0 + w, y1: anchor.y0 }
                }
                1 => {
                    let y0 = along(&mut rng, anchor.y0, anchor.y1, h, cy);
                    Rect { x0: anchor.x1, y0, x1: anchor.x1 + w, y1: y0 + h }
                }
                2 => {
                    let x0 = along(&mut rng, anchor.x0, anchor.x1, w, cx);
                    Rect { x0, y0: anchor.y1, x1: x0 + w, y1: anchor.y1 + h }
                }
                _ => {
                    let y0 = along(&mut rng, anchor.y0, anchor.y1, h, cy);
                    Rect { x0: anchor.x0 - w, y0, x1: anchor.x0, y1: y0 + h }
                }
            };
            if rects.iter().all(|r| !r.overlaps(&cand)) {
                rects.push(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation {
                seed: params.seed,
                reason: format!(
                    "could not place room {} after {PLACEMENT_ATTEMPTS} attempts",
                    rects.len() + 1
                ),
            });
        }
    }
    Ok(rects)
}

/// Converts room footprints into a containment-only scene graph.
pub fn layout_to_graph(rects: &[Rect]) -> Result<SceneGraph> {
    let mut nodes = Vec::with_capacity(rects.len() * 5);
    for r in rects {
        let room = nodes.len();
        let [cx, cy] = r.center();
        nodes.push(NodeRecord::room(room, [cx, cy]));
        let walls = [
            ([cx, r.y0], [0.0, -1.0], r.width()),
            ([r.x1, cy], [1.0, 0.0], r.height()),
            ([cx, r.y1], [0.0, 1.0], r.width()),
            ([r.x0, cy], [-1.0, 0.0], r.height()),
        ];
        for (centroid, normal, length) in walls {
            let id = nodes.len();
            nodes.push(NodeRecord::wall(id, centroid, normal, length, room));
        }
    }
    SceneGraph::with_containment_edges(nodes)
}

pub fn generate_floorplan(params: &GenParams) -> Result<SceneGraph> {
    layout_to_graph(&generate_layout(params)?)
}

/// Injective S-node → A-node map; entry `s` holds the A-graph id of S-node `s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub s_to_a: Vec<usize>,
}

impl GroundTruth {
    pub fn identity(n: usize) -> Self {
        Self {
            s_to_a: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.s_to_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_to_a.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.s_to_a.iter().copied().enumerate()
    }

    /// Checks totality over S-nodes, injectivity and type preservation.
    pub fn validate(&self, agraph: &SceneGraph, sgraph: &SceneGraph) -> Result<()> {
        if self.s_to_a.len() != sgraph.len() {
            return Err(Error::InvalidInput(format!(
                "ground truth covers {} of {} S-graph nodes",
                self.s_to_a.len(),
                sgraph.len()
            )));
        }
        let mut used = vec![false; agraph.len()];
        for (s, a) in self.pairs() {
            if a >= agraph.len() {
                return Err(Error::InvalidInput(format!("ground truth maps {s} to missing A-node {a}")));
            }
            if std::mem::replace(&mut used[a], true) {
                return Err(Error::InvalidInput(format!("A-node {a} matched twice")));
            }
            if agraph.nodes[a].node_type != sgraph.nodes[s].node_type {
                return Err(Error::InvalidInput(format!("pair ({s}, {a}) changes node type")));
            }
        }
        Ok(())
    }
}

/// Produces a partial, noisy S-graph from an un-augmented A-graph.
///
/// Random draws happen in a fixed order so the outcome is a pure function of
/// `noise.seed`: one uniform per room (drop test, repeated while every room
/// drops), then one uniform per surviving wall in id order, then geometric
/// noise node by node.
pub fn perturb(agraph: &SceneGraph, noise: &NoiseParams) -> Result<(SceneGraph, GroundTruth)> {
    noise.validate()?;
    if agraph.is_augmented() {
        return Err(Error::InvalidInput("perturb expects an un-augmented A-graph".into()));
    }
    let rooms: Vec<usize> = agraph.room_ids().collect();
    if rooms.is_empty() {
        return Err(Error::InvalidInput("A-graph has no rooms".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);

    let mut room_kept = vec![false; agraph.len()];
    let mut any = false;
    for _ in 0..ROOM_RESAMPLES {
        for &r in &rooms {
            room_kept[r] = rng.random::<f64>() >= noise.p_drop_room;
        }
        any = rooms.iter().any(|&r| room_kept[r]);
        if any {
            break;
        }
    }
    if !any {
        let r = rooms[rng.random_range(0..rooms.len())];
        room_kept[r] = true;
    }

    let mut kept = Vec::with_capacity(agraph.len());
    for node in &agraph.nodes {
        let keep = match node.node_type {
            NodeType::Room => room_kept[node.id],
            NodeType::WallSurface => {
                let parent = node.parent_room.expect("validated wall has a parent");
                room_kept[parent] && rng.random::<f64>() >= noise.p_drop_ws
            }
        };
        if keep {
            kept.push(node.id);
        }
    }

    let mut new_id = vec![usize::MAX; agraph.len()];
    for (s, &a) in kept.iter().enumerate() {
        new_id[a] = s;
    }

    let centroid = Normal::new(0.0, noise.sigma_centroid).expect("validated sigma");
    let angle = Normal::new(0.0, noise.sigma_normal_angle).expect("validated sigma");
    let length = Normal::new(0.0, noise.sigma_length).expect("validated sigma");

    let mut nodes = Vec::with_capacity(kept.len());
    for (s, &a) in kept.iter().enumerate() {
        let src = &agraph.nodes[a];
        let c = [
            src.centroid[0] + centroid.sample(&mut rng),
            src.centroid[1] + centroid.sample(&mut rng),
        ];
        let node = match src.node_type {
            NodeType::Room => NodeRecord::room(s, c),
            NodeType::WallSurface => {
                let theta = angle.sample(&mut rng);
                let (sin, cos) = theta.sin_cos();
                let [nx, ny] = src.normal;
                let (rx, ry) = (cos * nx - sin * ny, sin * nx + cos * ny);
                let norm = rx.hypot(ry);
                let len = (src.length + length.sample(&mut rng)).max(MIN_WALL_LENGTH);
                let parent = new_id[src.parent_room.expect("validated wall has a parent")];
                NodeRecord::wall(s, c, [rx / norm, ry / norm], len, parent)
            }
        };
        nodes.push(node);
    }
    let sgraph = SceneGraph::with_containment_edges(nodes)?;
    Ok((sgraph, GroundTruth { s_to_a: kept }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Assigns splits so that each size stratum is apportioned by `fractions`
/// (train, val, test). Sizes are binned into `n_bins` equal-frequency
/// quantile bins; with fewer samples than bins the bin count drops to the
/// sample count.
pub fn stratified_split(sizes: &[usize], fractions: [f64; 3], n_bins: usize, seed: u64) -> Result<Vec<Split>> {
    if fractions.iter().any(|&f| !(f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let n = sizes.len();
    let mut out = vec![Split::Train; n];
    if n == 0 {
        return Ok(out);
    }
    let bins = n_bins.clamp(1, n);
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let mut thresholds: Vec<usize> = (1..bins).map(|k| sorted[k * n / bins]).collect();
    thresholds.dedup();
    // drop a threshold equal to the minimum; it would leave bin 0 empty
    thresholds.retain(|&t| t > sorted[0]);
    let bin_of = |s: usize| thresholds.iter().filter(|&&t| t <= s).count();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); thresholds.len() + 1];
    for (i, &s) in sizes.iter().enumerate() {
        members[bin_of(s)].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bin in &mut members {
        bin.shuffle(&mut rng);
        let counts = largest_remainder(bin.len(), &fractions);
        let mut it = bin.iter();
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for &i in it.by_ref().take(count) {
                out[i] = *split;
            }
        }
    }
    Ok(out)
}

/// Largest-remainder apportionment; ties go to the earlier share.
pub fn largest_remainder(total: usize, fractions: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    let rem = |k: usize| quotas[k] - counts[k] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &k in order.iter().take(total.saturating_sub(assigned)) {
        counts[k] += 1;
    }
    counts
}

/// One (A-graph, S-graph, ground truth) triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub a_graph: SceneGraph,
    pub s_graph: SceneGraph,
    pub ground_truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub count: usize,
    pub seed: u64,
    pub gen: GenParams,
    pub noise: NoiseParams,
    pub fractions: [f64; 3],
    pub bins: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            count: 200,
            seed: 0,
            gen: GenParams::default(),
            noise: NoiseParams::default(),
            fractions: [0.70, 0.15, 0.15],
            bins: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub samples: Vec<Sample>,
    pub splits: Vec<Split>,
}

impl Corpus {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split_samples(&self, split: Split) -> Vec<&Sample> {
        self.indices(split).into_iter().map(|i| &self.samples[i]).collect()
    }
}

/// SplitMix64 finalizer: derives an independent stream seed per sample.
pub fn derive_seed(base: u64, index: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_seeds(corpus_seed: u64, index: usize) -> (u64, u64) {
    (
        derive_seed(corpus_seed, index as u64, 1),
        derive_seed(corpus_seed, index as u64, 2),
    )
}

pub fn generate_sample(spec: &CorpusSpec, index: usize) -> Result<Sample> {
    let (gen_seed, noise_seed) = sample_seeds(spec.seed, index);
    let gen = GenParams {
        seed: gen_seed,
        ..spec.gen.clone()
    };
    let noise = NoiseParams {
        seed: noise_seed,
        ..spec.noise.clone()
    };
    let a_graph = generate_floorplan(&gen)?;
    let (s_graph, ground_truth) = perturb(&a_graph, &noise)?;
    Ok(Sample {
        a_graph,
        s_graph,
        ground_truth,
    })
}

/// Generates every sample in parallel (each owns a derived seed) and
/// assigns stratified splits.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus> {
    spec.gen.validate()?;
    spec.noise.validate()?;
    let samples = (0..spec.count)
        .into_par_iter()
        .map(|i| generate_sample(spec, i))
        .collect::<Result<Vec<_>>>()?;
    let sizes: Vec<usize> = samples.iter().map(|s| s.a_graph.len()).collect();
    let splits = stratified_split(&sizes, spec.fractions, spec.bins, spec.seed)?;
    Ok(Corpus {
        spec: spec.clone(),
        samples,
        splits,
    })
}

// --- on-disk layout -----------------------------------------------------------

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CORPUS_FORMAT_VERSION: u64 = 1;

pub fn sample_file_name(index: usize) -> String {
    format!("sample_{index}.json")
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    a_graph: serde_json::Value,
    s_graph: serde_json::Value,
    ground_truth: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u64,
    pub spec: CorpusSpec,
    pub sample_seeds: Vec<[u64; 2]>,
    pub splits: Vec<Split>,
}

impl Sample {
    pub fn to_json_string(&self) -> String {
        let file = SampleFile {
            a_graph: self.a_graph.to_json_value(),
            s_graph: self.s_graph.to_json_value(),
            ground_truth: self.ground_truth.pairs().map(|(s, a)| [s, a]).collect(),
        };
        serde_json::to_string_pretty(&file).expect("sample serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: SampleFile = serde_json::from_str(s)?;
        let a_graph = SceneGraph::from_json_value(file.a_graph)?;
        let s_graph = SceneGraph::from_json_value(file.s_graph)?;
        let mut pairs = file.ground_truth;
        pairs.sort_unstable();
        if pairs.iter().enumerate().any(|(i, p)| p[0] != i) {
            return Err(Error::InvalidInput(
                "ground truth must list every S-node exactly once".into(),
            ));
        }
        let ground_truth = GroundTruth {
            s_to_a: pairs.into_iter().map(|p| p[1]).collect(),
        };
        ground_truth.validate(&a_graph, &s_graph)?;
        Ok(Sample {
            a_graph,
            s_graph,
            ground_truth,
        })
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Corpus {
    pub fn manifest(&self) -> CorpusManifest {
        CorpusManifest {
            format_version: CORPUS_FORMAT_VERSION,
            spec: self.spec.clone(),
            sample_seeds: (0..self.samples.len())
                .map(|i| {
                    let (g, n) = sample_seeds(self.spec.seed, i);
                    [g, n]
                })
                .collect(),
            splits: self.splits.clone(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, sample) in self.samples.iter().enumerate() {
            write_file(&dir.join(sample_file_name(i)), &sample.to_json_string())?;
        }
        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        write_file(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Corpus> {
        let manifest: CorpusManifest = serde_json::from_str(&read_file(&dir.join(MANIFEST_FILE))?)?;
        if manifest.format_version != CORPUS_FORMAT_VERSION {
            return Err(Error::Version {
                found: manifest.format_version,
                expected: CORPUS_FORMAT_VERSION,
            });
        }
        let samples = (0..manifest.splits.len())
            .map(|i| Sample::from_json_str(&read_file(&dir.join(sample_file_name(i)))?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Corpus {
            spec: manifest.spec,
            samples,
            splits: manifest.splits,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{augment_edges, AdjacencyTolerance, EdgeType};

    fn rects_from_graph(g: &SceneGraph) -> Vec<Rect> {
        g.room_ids()
            .map(|r| {
                let [cx, cy] = g.nodes[r].centroid;
                let walls: Vec<_> = g.walls_of(r).map(|w| &g.nodes[w]).collect();
                let w = walls.iter().find(|n| n.normal[1] != 0.0).unwrap().length;
                let h = walls.iter().find(|n| n.normal[0] != 0.0).unwrap().length;
                Rect { x0: cx - w / 2.0, y0: cy - h / 2.0, x1: cx + w / 2.0, y1: cy + h / 2.0 }
            })
            .collect()
    }

    #[test]
    fn single_room_plan() {
        let p = GenParams {
            rooms_min: 1,
            rooms_max: 1,
            room_size_min: 4.0,
            room_size_max: 4.0,
            ..Default::default()
        };
        let g = generate_floorplan(&p).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.room_ids().count(), 1);
        assert_eq!(g.count_edges(EdgeType::RoomToWs), 4);
        assert_eq!(g.edges.len(), 4);
        for w in g.walls_of(0) {
            assert_eq!(g.nodes[w].length, 4.0);
        }
    }

    #[test]
    fn plan_is_deterministic() {
        let p = GenParams { seed: 42, ..Default::default() };
        let a = generate_floorplan(&p).unwrap().to_json_string();
        let b = generate_floorplan(&p).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn six_rooms_are_disjoint() {
        for seed in 0..50 {
            let p = GenParams { rooms_min: 6, rooms_max: 6, seed, ..Default::default() };
            let g = generate_floorplan(&p).unwrap();
            assert_eq!(g.room_ids().count(), 6);
            assert_eq!(g.len() - 6, 24);
            let rects = rects_from_graph(&g);
            for i in 0..rects.len() {
                for j in i + 1..rects.len() {
                    let (a, b) = (rects[i], rects[j]);
                    let ix = a.x1.min(b.x1) - a.x0.max(b.x0);
                    let iy = a.y1.min(b.y1) - a.y0.max(b.y0);
                    assert!(ix <= 1e-9 || iy <= 1e-9, "seed {seed}: rooms {i} and {j} overlap");
                }
            }
        }
    }

    #[test]
    fn many_seeds_validate_and_augment() {
        for seed in 0..1000 {
            let g = generate_floorplan(&GenParams { seed, ..Default::default() }).unwrap();
            g.validate().unwrap();
            augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = GenParams { rooms_min: 0, ..Default::default() };
        assert!(generate_floorplan(&p).is_err());
        let p = GenParams { room_size_min: 5.0, room_size_max: 4.0, ..Default::default() };
        assert!(generate_floorplan(&p).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let a = generate_floorplan(&GenParams { seed: 3, ..Default::default() }).unwrap();
        let (s, gt) = perturb(&a, &NoiseParams::none()).unwrap();
        assert_eq!(s, a);
        assert_eq!(gt, GroundTruth::identity(a.len()));
    }

    #[test]
    fn survival_floor_keeps_a_room() {
        let p = GenParams { rooms_min: 1, rooms_max: 1, ..Default::default() };
        let a = generate_floorplan(&p).unwrap();
        let (s, gt) = perturb(&a, &NoiseParams::drop_only(1.0, 0.0)).unwrap();
        assert_eq!(s.room_ids().count(), 1);
        assert_eq!(s.len(), 5);
        gt.validate(&a, &s).unwrap();
    }

    #[test]
    fn wall_drops_replay_seeded_draws() {
        let p = GenParams { rooms_min: 6, rooms_max: 6, seed: 9, ..Default::default() };
        let a = generate_floorplan(&p).unwrap();
        let noise = NoiseParams { seed: 77, ..NoiseParams::drop_only(0.0, 0.3) };
        let (s, gt) = perturb(&a, &noise).unwrap();

        // replay: one uniform per room, then one per wall in id order
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..6 {
            let _: f64 = rng.random();
        }
        let dropped = (0..24).filter(|_| rng.random::<f64>() < 0.3).count();
        assert_eq!(a.len() - s.len(), dropped);
        assert!(dropped > 0);
        gt.validate(&a, &s).unwrap();
    }

    #[test]
    fn noisy_perturbation_is_valid() {
        for seed in 0..200 {
            let a = generate_floorplan(&GenParams { seed, ..Default::default() }).unwrap();
            let noise = NoiseParams { seed, ..Default::default() };
            let (s, gt) = perturb(&a, &noise).unwrap();
            assert!(s.len() <= a.len());
            assert!(s.room_ids().count() >= 1);
            gt.validate(&a, &s).unwrap();
            for (si, ai) in gt.pairs() {
                if let Some(p) = s.nodes[si].parent_room {
                    assert_eq!(gt.s_to_a[p], a.nodes[ai].parent_room.unwrap());
                }
            }
            let again = perturb(&a, &noise).unwrap();
            assert_eq!(again.0, s);
        }
    }

    #[test]
    fn drop_only_features_match_ground_truth() {
        let a = generate_floorplan(&GenParams { seed: 5, ..Default::default() }).unwrap();
        let noise = NoiseParams { seed: 1, ..NoiseParams::drop_only(0.3, 0.3) };
        let (s, gt) = perturb(&a, &noise).unwrap();
        let (fa, fs) = (a.raw_features().unwrap(), s.raw_features().unwrap());
        for (si, ai) in gt.pairs() {
            assert_eq!(fs.row(si), fa.row(ai));
        }
    }

    #[test]
    fn uniform_sizes_split_exactly() {
        let s = stratified_split(&[20; 100], [0.7, 0.15, 0.15], 4, 1).unwrap();
        let count = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (70, 15, 15));
    }

    #[test]
    fn ten_samples_largest_remainder() {
        assert_eq!(largest_remainder(10, &[0.7, 0.15, 0.15]), vec![7, 2, 1]);
        let s = stratified_split(&[20; 10], [0.7, 0.15, 0.15], 4, 1).unwrap();
        let count = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (7, 2, 1));
    }

    #[test]
    fn split_is_deterministic_and_stratified() {
        let sizes: Vec<usize> = (0..200).map(|i| 25 + (i * 7) % 26).collect();
        let a = stratified_split(&sizes, [0.7, 0.15, 0.15], 4, 11).unwrap();
        let b = stratified_split(&sizes, [0.7, 0.15, 0.15], 4, 11).unwrap();
        assert_eq!(a, b);
        // every size quartile contributes to the test split
        let mut sorted = sizes.clone();
        sorted.sort();
        for q in 0..4 {
            let (lo, hi) = (sorted[q * 50], sorted[q * 50 + 49]);
            let in_test = (0..200)
                .filter(|&i| a[i] == Split::Test && sizes[i] >= lo && sizes[i] <= hi)
                .count();
            assert!(in_test > 0, "quartile {q}");
        }
    }

    #[test]
    fn split_few_samples_and_bad_fractions() {
        let s = stratified_split(&[3, 9], [0.7, 0.15, 0.15], 4, 0).unwrap();
        assert_eq!(s.len(), 2);
        assert!(stratified_split(&[1, 2], [0.7, 0.2, 0.2], 4, 0).is_err());
        assert!(stratified_split(&[1, 2], [1.0, 0.0, 0.0], 4, 0).is_err());
    }

    #[test]
    fn corpus_round_trips_through_disk() {
        let spec = CorpusSpec { count: 6, seed: 4, ..Default::default() };
        let corpus = generate_corpus(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        corpus.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(generate_corpus(&spec).unwrap(), corpus);
    }
}
