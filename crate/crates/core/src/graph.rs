//! Two-level scene graphs of rooms and wall surfaces.
//!
//! A-graphs (architectural priors) and S-graphs (robot-built situational
//! graphs) share this representation. Each node carries a 7-dimensional raw
//! feature vector `[type₀, type₁, cx, cy, nx, ny, len]`; rooms use a zero
//! normal and a length of `-1`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const FEATURE_DIM: usize = 7;

/// Length sentinel carried by room nodes.
pub const ROOM_LENGTH: f64 = -1.0;

const NORMAL_TOL: f64 = 1e-6;
const MIN_STD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    #[serde(rename = "room")]
    Room,
    #[serde(rename = "ws")]
    WallSurface,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub node_type: NodeType,
    pub centroid: [f64; 2],
    pub normal: [f64; 2],
    pub length: f64,
    pub parent_room: Option<usize>,
}

impl NodeRecord {
    pub fn room(id: usize, centroid: [f64; 2]) -> Self {
        Self {
            id,
            node_type: NodeType::Room,
            centroid,
            normal: [0.0, 0.0],
            length: ROOM_LENGTH,
            parent_room: None,
        }
    }

    pub fn wall(id: usize, centroid: [f64; 2], normal: [f64; 2], length: f64, parent: usize) -> Self {
        Self {
            id,
            node_type: NodeType::WallSurface,
            centroid,
            normal,
            length,
            parent_room: Some(parent),
        }
    }

    pub fn is_room(&self) -> bool {
        self.node_type == NodeType::Room
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGraph(format!("node {}: {msg}", self.id)));
        if !(self.centroid.iter().all(|v| v.is_finite())
            && self.normal.iter().all(|v| v.is_finite())
            && self.length.is_finite())
        {
            return bad("non-finite attribute");
        }
        match self.node_type {
            NodeType::Room => {
                if self.normal != [0.0, 0.0] {
                    return bad("room with non-zero normal");
                }
                if self.length != ROOM_LENGTH {
                    return bad("room length must be -1");
                }
                if self.parent_room.is_some() {
                    return bad("room with a parent room");
                }
            }
            NodeType::WallSurface => {
                let norm = self.normal[0].hypot(self.normal[1]);
                if (norm - 1.0).abs() > NORMAL_TOL {
                    return bad("wall surface normal is not unit length");
                }
                if self.length <= 0.0 {
                    return bad("wall surface length must be positive");
                }
                if self.parent_room.is_none() {
                    return bad("wall surface without parent room");
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    #[serde(rename = "room_ws")]
    RoomToWs,
    #[serde(rename = "room_room")]
    RoomToRoom,
    #[serde(rename = "ws_ws")]
    WsToWs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeType,
}

impl Edge {
    pub fn new(src: usize, dst: usize, kind: EdgeType) -> Self {
        Self { src, dst, kind }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneGraph {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<Edge>,
    /// Standardized N×7 features, populated by [`standardize_features`].
    pub features: Option<Matrix>,
}

impl SceneGraph {
    /// Builds and validates a graph.
    pub fn new(nodes: Vec<NodeRecord>, edges: Vec<Edge>) -> Result<Self> {
        let g = Self {
            nodes,
            edges,
            features: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph with one `RoomToWs` edge per wall surface, derived from
    /// `parent_room`.
    pub fn with_containment_edges(nodes: Vec<NodeRecord>) -> Result<Self> {
        let edges = nodes
            .iter()
            .filter_map(|n| n.parent_room.map(|p| Edge::new(p, n.id, EdgeType::RoomToWs)))
            .collect();
        Self::new(nodes, edges)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn room_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter(|n| n.is_room()).map(|n| n.id)
    }

    pub fn walls_of(&self, room: usize) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .filter(move |n| n.parent_room == Some(room))
            .map(|n| n.id)
    }

    pub fn count_edges(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// True when any augmentation edge (room-room or ws-ws) is present.
    pub fn is_augmented(&self) -> bool {
        self.edges.iter().any(|e| e.kind != EdgeType::RoomToWs)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::InvalidGraph(format!(
                    "node ids must be dense: position {i} holds id {}",
                    node.id
                )));
            }
            node.validate()?;
            if let Some(p) = node.parent_room {
                if p >= n || !self.nodes[p].is_room() {
                    return Err(Error::InvalidGraph(format!(
                        "wall surface {i} has parent {p} which is not a room"
                    )));
                }
            }
        }

        let mut seen = BTreeSet::new();
        let mut containment = vec![0usize; n];
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge {}->{} references a missing node",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(Error::InvalidGraph(format!("self-edge on node {}", e.src)));
            }
            if !seen.insert((e.src, e.dst, e.kind)) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {}->{} ({:?})",
                    e.src, e.dst, e.kind
                )));
            }
            let (s, d) = (self.nodes[e.src].node_type, self.nodes[e.dst].node_type);
            let ok = match e.kind {
                EdgeType::RoomToWs => s == NodeType::Room && d == NodeType::WallSurface,
                EdgeType::RoomToRoom => s == NodeType::Room && d == NodeType::Room,
                EdgeType::WsToWs => s == NodeType::WallSurface && d == NodeType::WallSurface,
            };
            if !ok {
                return Err(Error::InvalidGraph(format!(
                    "edge {}->{} of type {:?} joins {s:?} to {d:?}",
                    e.src, e.dst, e.kind
                )));
            }
            if e.kind == EdgeType::RoomToWs {
                if self.nodes[e.dst].parent_room != Some(e.src) {
                    return Err(Error::InvalidGraph(format!(
                        "containment edge {}->{} disagrees with parent_room",
                        e.src, e.dst
                    )));
                }
                containment[e.dst] += 1;
            }
        }
        for node in self.nodes.iter().filter(|n| !n.is_room()) {
            if containment[node.id] != 1 {
                return Err(Error::InvalidGraph(format!(
                    "wall surface {} has {} containment edges (expected 1)",
                    node.id, containment[node.id]
                )));
            }
        }
        if let Some(f) = &self.features {
            if f.shape() != (n, FEATURE_DIM) {
                return Err(Error::Shape(format!(
                    "feature matrix is {:?}, expected ({n}, {FEATURE_DIM})",
                    f.shape()
                )));
            }
        }
        Ok(())
    }

    /// Raw (unstandardized) N×7 feature matrix.
    pub fn raw_features(&self) -> Result<Matrix> {
        let mut m = Matrix::zeros(self.len(), FEATURE_DIM);
        for node in &self.nodes {
            m.row_mut(node.id).copy_from_slice(&build_feature_vector(node)?);
        }
        Ok(m)
    }

    /// Relabels nodes: old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<SceneGraph> {
        let n = self.len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if perm.len() != n || check.iter().enumerate().any(|(i, &p)| i != p) {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        let mut nodes = self.nodes.clone();
        for node in &mut nodes {
            node.id = perm[node.id];
            node.parent_room = node.parent_room.map(|p| perm[p]);
        }
        nodes.sort_by_key(|n| n.id);
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.src], perm[e.dst], e.kind))
            .collect();
        let features = self.features.as_ref().map(|f| {
            let mut inverse = vec![0; n];
            for (old, &new) in perm.iter().enumerate() {
                inverse[new] = old;
            }
            f.select_rows(&inverse)
        });
        Ok(SceneGraph {
            nodes,
            edges,
            features,
        })
    }
}

/// Raw feature layout: `[type₀, type₁, cx, cy, nx, ny, len]`.
pub fn build_feature_vector(node: &NodeRecord) -> Result<[f64; FEATURE_DIM]> {
    node.validate()?;
    let [cx, cy] = node.centroid;
    Ok(match node.node_type {
        NodeType::Room => [1.0, 0.0, cx, cy, 0.0, 0.0, ROOM_LENGTH],
        NodeType::WallSurface => {
            let [nx, ny] = node.normal;
            [0.0, 1.0, cx, cy, nx, ny, node.length]
        }
    })
}

/// Per-dimension standardization statistics. Dims 0–1 (one-hot type) are
/// always the identity transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl FeatureStats {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; FEATURE_DIM],
            std: [1.0; FEATURE_DIM],
        }
    }

    pub fn apply(&self, raw: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = *raw;
        for d in 2..FEATURE_DIM {
            out[d] = (raw[d] - self.mean[d]) / self.std[d];
        }
        out
    }
}

/// Population mean/std over every node of every graph; std below 1e-8 is
/// replaced by 1.
pub fn compute_feature_stats<'a>(graphs: impl IntoIterator<Item = &'a SceneGraph>) -> Result<FeatureStats> {
    let mut count = 0usize;
    let mut sum = [0.0; FEATURE_DIM];
    let mut rows = Vec::new();
    for g in graphs {
        for node in &g.nodes {
            let x = build_feature_vector(node)?;
            for d in 0..FEATURE_DIM {
                sum[d] += x[d];
            }
            rows.push(x);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "feature statistics need at least one node".into(),
        ));
    }
    let n = count as f64;
    let mut stats = FeatureStats::identity();
    for d in 2..FEATURE_DIM {
        let mean = sum[d] / n;
        let var = rows.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        stats.mean[d] = mean;
        stats.std[d] = if std < MIN_STD { 1.0 } else { std };
    }
    Ok(stats)
}

/// Returns a copy of `graph` with its `features` field set to the
/// standardized feature matrix.
pub fn standardize_features(graph: &SceneGraph, stats: &FeatureStats) -> Result<SceneGraph> {
    if stats.std.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidInput(
            "standardization std entries must be positive".into(),
        ));
    }
    let mut feats = Matrix::zeros(graph.len(), FEATURE_DIM);
    for node in &graph.nodes {
        let raw = build_feature_vector(node)?;
        feats.row_mut(node.id).copy_from_slice(&stats.apply(&raw));
    }
    let mut out = graph.clone();
    out.features = Some(feats);
    Ok(out)
}

/// Tolerances deciding when two rooms share a physical wall.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjacencyTolerance {
    /// Maximum WS-centroid distance, meters.
    pub dist: f64,
    /// Maximum deviation from exact anti-parallel normals, radians.
    pub angle: f64,
}

impl Default for AdjacencyTolerance {
    fn default() -> Self {
        Self {
            dist: 0.5,
            angle: 10.0_f64.to_radians(),
        }
    }
}

/// Adds room-room adjacency edges and per-room angularly sorted wall rings
/// to a containment-only graph.
///
/// Edges come out ordered: containment edges as given, then room-room pairs
/// by `(src, dst)`, then ring edges room by room.
pub fn augment_edges(graph: &SceneGraph, tol: AdjacencyTolerance) -> Result<SceneGraph> {
    if graph.is_augmented() {
        return Err(Error::InvalidInput(
            "augment_edges expects a graph with containment edges only".into(),
        ));
    }
    for node in graph.nodes.iter().filter(|n| !n.is_room()) {
        match node.parent_room {
            Some(p) if p < graph.len() && graph.nodes[p].is_room() => {}
            _ => {
                return Err(Error::InvalidGraph(format!(
                    "wall surface {} has no valid parent room",
                    node.id
                )))
            }
        }
    }

    let rooms: Vec<usize> = graph.room_ids().collect();
    let mut walls_by_room: Vec<Vec<usize>> = vec![Vec::new(); graph.len()];
    for node in &graph.nodes {
        if let Some(p) = node.parent_room {
            walls_by_room[p].push(node.id);
        }
    }

    let mut edges = graph.edges.clone();

    let cos_limit = -tol.angle.cos();
    let mut adjacency = BTreeSet::new();
    for (i, &r1) in rooms.iter().enumerate() {
        for &r2 in &rooms[i + 1..] {
            let shared = walls_by_room[r1].iter().any(|&w1| {
                walls_by_room[r2].iter().any(|&w2| {
                    let (a, b) = (&graph.nodes[w1], &graph.nodes[w2]);
                    let dist = (a.centroid[0] - b.centroid[0]).hypot(a.centroid[1] - b.centroid[1]);
                    let cos = a.normal[0] * b.normal[0] + a.normal[1] * b.normal[1];
                    dist <= tol.dist && cos <= cos_limit
                })
            });
            if shared {
                adjacency.insert((r1, r2));
                adjacency.insert((r2, r1));
            }
        }
    }
    edges.extend(
        adjacency
            .into_iter()
            .map(|(a, b)| Edge::new(a, b, EdgeType::RoomToRoom)),
    );

    for &room in &rooms {
        let ring = angular_order(graph, room, &walls_by_room[room]);
        let k = ring.len();
        if k < 2 {
            continue;
        }
        let mut ring_edges = BTreeSet::new();
        for i in 0..k {
            let (u, v) = (ring[i], ring[(i + 1) % k]);
            ring_edges.insert((u, v));
            ring_edges.insert((v, u));
        }
        edges.extend(
            ring_edges
                .into_iter()
                .map(|(u, v)| Edge::new(u, v, EdgeType::WsToWs)),
        );
    }

    let out = SceneGraph {
        nodes: graph.nodes.clone(),
        edges,
        features: graph.features.clone(),
    };
    out.validate()?;
    Ok(out)
}

/// Walls of `room` sorted by bearing from the room centroid, ties by id.
fn angular_order(graph: &SceneGraph, room: usize, walls: &[usize]) -> Vec<usize> {
    let [rx, ry] = graph.nodes[room].centroid;
    let mut keyed: Vec<(f64, usize)> = walls
        .iter()
        .map(|&w| {
            let [wx, wy] = graph.nodes[w].centroid;
            let mut theta = (wy - ry).atan2(wx - rx);
            // atan2 yields both -π and π for the same bearing
            if theta >= PI {
                theta -= 2.0 * PI;
            }
            (theta, w)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, w)| w).collect()
}

// --- JSON interchange -------------------------------------------------------

pub const GRAPH_FORMAT_VERSION: u64 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphFile {
    pub version: u64,
    pub nodes: Vec<NodeEntry>,
    pub edges: Vec<EdgeEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeEntry {
    pub id: usize,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub centroid: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_room: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub src: usize,
    pub dst: usize,
    #[serde(rename = "type")]
    pub kind: EdgeType,
}

impl From<&SceneGraph> for GraphFile {
    fn from(g: &SceneGraph) -> Self {
        let nodes = g
            .nodes
            .iter()
            .map(|n| match n.node_type {
                NodeType::Room => NodeEntry {
                    id: n.id,
                    node_type: n.node_type,
                    centroid: n.centroid,
                    normal: None,
                    length: None,
                    parent_room: None,
                },
                NodeType::WallSurface => NodeEntry {
                    id: n.id,
                    node_type: n.node_type,
                    centroid: n.centroid,
                    normal: Some(n.normal),
                    length: Some(n.length),
                    parent_room: n.parent_room,
                },
            })
            .collect();
        let edges = g
            .edges
            .iter()
            .map(|e| EdgeEntry {
                src: e.src,
                dst: e.dst,
                kind: e.kind,
            })
            .collect();
        GraphFile {
            version: GRAPH_FORMAT_VERSION,
            nodes,
            edges,
        }
    }
}

impl TryFrom<GraphFile> for SceneGraph {
    type Error = Error;

    fn try_from(file: GraphFile) -> Result<Self> {
        if file.version != GRAPH_FORMAT_VERSION {
            return Err(Error::Version {
                found: file.version,
                expected: GRAPH_FORMAT_VERSION,
            });
        }
        let mut entries = file.nodes;
        entries.sort_by_key(|n| n.id);
        let nodes = entries
            .into_iter()
            .map(|e| match e.node_type {
                NodeType::Room => Ok(NodeRecord::room(e.id, e.centroid)),
                NodeType::WallSurface => {
                    let missing = |what: &str| {
                        Error::InvalidGraph(format!("wall surface {} is missing {what}", e.id))
                    };
                    Ok(NodeRecord::wall(
                        e.id,
                        e.centroid,
                        e.normal.ok_or_else(|| missing("normal"))?,
                        e.length.ok_or_else(|| missing("length"))?,
                        e.parent_room.ok_or_else(|| missing("parent_room"))?,
                    ))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = file
            .edges
            .into_iter()
            .map(|e| Edge::new(e.src, e.dst, e.kind))
            .collect();
        SceneGraph::new(nodes, edges)
    }
}

impl SceneGraph {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(GraphFile::from(self)).expect("graph serializes")
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        let file: GraphFile = serde_json::from_value(value)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GraphFile::from(self)).expect("graph serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square_room(room: usize, origin: [f64; 2], first_wall: usize) -> Vec<NodeRecord> {
        let [x, y] = origin;
        vec![
            NodeRecord::room(room, [x + 0.5, y + 0.5]),
            NodeRecord::wall(first_wall, [x + 0.5, y], [0.0, -1.0], 1.0, room),
            NodeRecord::wall(first_wall + 1, [x + 1.0, y + 0.5], [1.0, 0.0], 1.0, room),
            NodeRecord::wall(first_wall + 2, [x + 0.5, y + 1.0], [0.0, 1.0], 1.0, room),
            NodeRecord::wall(first_wall + 3, [x, y + 0.5], [-1.0, 0.0], 1.0, room),
        ]
    }

    #[test]
    fn feature_vector_layout() {
        let ws = NodeRecord::wall(1, [2.0, 3.0], [1.0, 0.0], 4.5, 0);
        assert_eq!(build_feature_vector(&ws).unwrap(), [0.0, 1.0, 2.0, 3.0, 1.0, 0.0, 4.5]);
        let room = NodeRecord::room(0, [5.0, 5.0]);
        assert_eq!(build_feature_vector(&room).unwrap(), [1.0, 0.0, 5.0, 5.0, 0.0, 0.0, -1.0]);
        let origin = NodeRecord::room(0, [0.0, 0.0]);
        assert_eq!(build_feature_vector(&origin).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
    }

    #[test]
    fn feature_vector_rejects_bad_normal() {
        let ws = NodeRecord::wall(1, [0.0, 0.0], [1.0, 1.0], 1.0, 0);
        assert!(build_feature_vector(&ws).is_err());
        let ws = NodeRecord::wall(1, [0.0, 0.0], [1.0, 0.0], 0.0, 0);
        assert!(build_feature_vector(&ws).is_err());
    }

    #[test]
    fn stats_two_rooms() {
        let g = SceneGraph::new(
            vec![NodeRecord::room(0, [0.0, 1.0]), NodeRecord::room(1, [2.0, 1.0])],
            vec![],
        )
        .unwrap();
        let stats = compute_feature_stats([&g]).unwrap();
        assert_eq!(stats.mean[2], 1.0);
        assert_eq!(stats.std[2], 1.0);
        // identical dims collapse to std 1
        assert_eq!(stats.std[3], 1.0);
        assert_eq!((stats.mean[0], stats.std[0]), (0.0, 1.0));
    }

    #[test]
    fn stats_single_room() {
        let g = SceneGraph::new(vec![NodeRecord::room(0, [3.0, 4.0])], vec![]).unwrap();
        let stats = compute_feature_stats([&g]).unwrap();
        assert_eq!(stats.mean[6], -1.0);
        assert_eq!(stats.std[6], 1.0);
        assert_eq!(&stats.mean[..2], &[0.0, 0.0]);
        assert_eq!(&stats.std[..2], &[1.0, 1.0]);
        let s = standardize_features(&g, &stats).unwrap();
        assert_eq!(s.features.unwrap().row(0), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn stats_reject_empty() {
        assert!(compute_feature_stats(std::iter::empty()).is_err());
        let empty = SceneGraph::new(vec![], vec![]).unwrap();
        assert!(compute_feature_stats([&empty]).is_err());
    }

    #[test]
    fn standardize_values() {
        let g = SceneGraph::new(vec![NodeRecord::room(0, [3.0, 0.0])], vec![]).unwrap();
        let same = standardize_features(&g, &FeatureStats::identity()).unwrap();
        assert_eq!(same.features.unwrap(), g.raw_features().unwrap());

        let mut stats = FeatureStats::identity();
        stats.mean[2] = 1.0;
        stats.std[2] = 2.0;
        stats.mean[0] = 5.0; // ignored: one-hot dims pass through
        let s = standardize_features(&g, &stats).unwrap().features.unwrap();
        assert_eq!(s[(0, 2)], 1.0);
        assert_eq!(&s.row(0)[..2], &[1.0, 0.0]);

        stats.std[4] = 0.0;
        assert!(standardize_features(&g, &stats).is_err());
    }

    #[test]
    fn ring_on_unit_square() {
        let g = SceneGraph::with_containment_edges(unit_square_room(0, [0.0, 0.0], 1)).unwrap();
        let aug = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        assert_eq!(aug.count_edges(EdgeType::WsToWs), 8);
        assert_eq!(aug.count_edges(EdgeType::RoomToRoom), 0);
        assert_eq!(aug.count_edges(EdgeType::RoomToWs), 4);

        // oracle: walls visited counter-clockwise starting from bearing -π
        // are W (π≡-π), S (-π/2), E (0), N (π/2)
        let expected_ring = [4usize, 1, 2, 3];
        for i in 0..4 {
            let (u, v) = (expected_ring[i], expected_ring[(i + 1) % 4]);
            for (a, b) in [(u, v), (v, u)] {
                assert!(aug.edges.contains(&Edge::new(a, b, EdgeType::WsToWs)), "{a}->{b}");
            }
        }
    }

    #[test]
    fn single_wall_has_no_ring() {
        let nodes = vec![
            NodeRecord::room(0, [0.0, 0.0]),
            NodeRecord::wall(1, [1.0, 0.0], [1.0, 0.0], 2.0, 0),
        ];
        let g = SceneGraph::with_containment_edges(nodes).unwrap();
        let aug = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        assert_eq!(aug.count_edges(EdgeType::WsToWs), 0);
    }

    #[test]
    fn two_wall_ring_collapses_duplicates() {
        let nodes = vec![
            NodeRecord::room(0, [0.0, 0.0]),
            NodeRecord::wall(1, [1.0, 0.0], [1.0, 0.0], 2.0, 0),
            NodeRecord::wall(2, [-1.0, 0.0], [-1.0, 0.0], 2.0, 0),
        ];
        let g = SceneGraph::with_containment_edges(nodes).unwrap();
        let aug = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        assert_eq!(aug.count_edges(EdgeType::WsToWs), 2);
    }

    #[test]
    fn shared_wall_links_rooms() {
        let mut nodes = unit_square_room(0, [0.0, 0.0], 1);
        nodes.extend(unit_square_room(5, [1.0, 0.0], 6));
        let g = SceneGraph::with_containment_edges(nodes).unwrap();
        let aug = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        assert_eq!(aug.count_edges(EdgeType::RoomToRoom), 2);
        assert!(aug.edges.contains(&Edge::new(0, 5, EdgeType::RoomToRoom)));
        assert!(aug.edges.contains(&Edge::new(5, 0, EdgeType::RoomToRoom)));

        // same-facing walls at the same spot are not a shared wall
        let tight = AdjacencyTolerance { dist: 0.5, angle: 0.01 };
        let far = AdjacencyTolerance { dist: 1e-3, angle: 0.2 };
        let mut shifted = unit_square_room(0, [0.0, 0.0], 1);
        shifted.extend(unit_square_room(5, [1.2, 0.0], 6));
        let g2 = SceneGraph::with_containment_edges(shifted).unwrap();
        assert_eq!(augment_edges(&g2, tight).unwrap().count_edges(EdgeType::RoomToRoom), 2);
        assert_eq!(augment_edges(&g2, far).unwrap().count_edges(EdgeType::RoomToRoom), 0);
    }

    #[test]
    fn augment_rejects_already_augmented() {
        let g = SceneGraph::with_containment_edges(unit_square_room(0, [0.0, 0.0], 1)).unwrap();
        let aug = augment_edges(&g, AdjacencyTolerance::default()).unwrap();
        assert!(augment_edges(&aug, AdjacencyTolerance::default()).is_err());
    }

    #[test]
    fn validation_catches_schema_errors() {
        let orphan = vec![
            NodeRecord::room(0, [0.0, 0.0]),
            NodeRecord::wall(1, [1.0, 0.0], [1.0, 0.0], 2.0, 0),
        ];
        // wall without its containment edge
        assert!(SceneGraph::new(orphan.clone(), vec![]).is_err());
        let dup = vec![
            Edge::new(0, 1, EdgeType::RoomToWs),
            Edge::new(0, 1, EdgeType::RoomToWs),
        ];
        assert!(SceneGraph::new(orphan.clone(), dup).is_err());
        let wrong_type = vec![Edge::new(0, 1, EdgeType::RoomToRoom)];
        assert!(SceneGraph::new(orphan, wrong_type).is_err());
    }

    #[test]
    fn json_rejects_unknown_version() {
        let g = SceneGraph::with_containment_edges(unit_square_room(0, [0.0, 0.0], 1)).unwrap();
        let mut v = g.to_json_value();
        v["version"] = serde_json::json!(2);
        assert!(matches!(
            SceneGraph::from_json_value(v),
            Err(Error::Version { found: 2, .. })
        ));
    }

    #[test]
    fn json_omits_wall_fields_for_rooms() {
        let g = SceneGraph::with_containment_edges(unit_square_room(0, [0.0, 0.0], 1)).unwrap();
        let v = g.to_json_value();
        let room = &v["nodes"][0];
        assert_eq!(room["type"], "room");
        assert!(room.get("normal").is_none());
        assert!(room.get("length").is_none());
        assert_eq!(v["edges"][0]["type"], "room_ws");
    }

    fn arb_graph() -> impl Strategy<Value = SceneGraph> {
        prop::collection::vec(
            (
                (-50.0..50.0f64, -50.0..50.0f64),
                prop::collection::vec(((-50.0..50.0f64, -50.0..50.0f64), 0.0..std::f64::consts::TAU, 0.1..20.0f64), 0..6),
            ),
            1..5,
        )
        .prop_map(|rooms| {
            let mut nodes = Vec::new();
            for ((rx, ry), walls) in rooms {
                let room = nodes.len();
                nodes.push(NodeRecord::room(room, [rx, ry]));
                for ((wx, wy), theta, len) in walls {
                    let id = nodes.len();
                    nodes.push(NodeRecord::wall(id, [wx, wy], [theta.cos(), theta.sin()], len, room));
                }
            }
            SceneGraph::with_containment_edges(nodes).unwrap()
        })
    }

    proptest! {
        #[test]
        fn json_round_trip_preserves_features(g in arb_graph()) {
            let back = SceneGraph::from_json_str(&g.to_json_string()).unwrap();
            prop_assert_eq!(back.raw_features().unwrap(), g.raw_features().unwrap());
            prop_assert_eq!(back, g);
        }

        #[test]
        fn augmentation_commutes_with_relabeling(g in arb_graph(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut perm: Vec<usize> = (0..g.len()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let tol = AdjacencyTolerance { dist: 5.0, angle: 0.5 };
            let a = augment_edges(&g, tol).unwrap().permuted(&perm).unwrap();
            let b = augment_edges(&g.permuted(&perm).unwrap(), tol).unwrap();
            let set = |g: &SceneGraph| g.edges.iter().copied().collect::<BTreeSet<_>>();
            prop_assert_eq!(set(&a), set(&b));
        }

        #[test]
        fn augmented_edges_are_symmetric(g in arb_graph()) {
            let aug = augment_edges(&g, AdjacencyTolerance { dist: 5.0, angle: 0.5 }).unwrap();
            let set: BTreeSet<_> = aug.edges.iter().copied().collect();
            for e in aug.edges.iter().filter(|e| e.kind != EdgeType::RoomToWs) {
                prop_assert!(set.contains(&Edge::new(e.dst, e.src, e.kind)));
            }
            for room in aug.room_ids() {
                let k = aug.walls_of(room).count();
                let ring = aug.edges.iter()
                    .filter(|e| e.kind == EdgeType::WsToWs && aug.nodes[e.src].parent_room == Some(room))
                    .count();
                let expected = match k { 0 | 1 => 0, 2 => 2, k => 2 * k };
                prop_assert_eq!(ring, expected);
            }
        }
    }
}
