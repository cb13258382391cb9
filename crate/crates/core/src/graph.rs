//! Per-frame quadrant spatial relations and their collapse into the
//! temporal interaction graph.
//!
//! Quadrants are evaluated in the ego-aligned BEV frame. Because ego motion
//! is a shared translation, relative positions (and hence quadrants) are
//! frame-invariant between any two entities.
//!
//! Edge convention: an edge (i, j, r) states how subject i moved relative
//! to object j over the clip. For every edge the inverse edge
//! (j, i, inverse(r)) is present.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scene::{EntityKind, Point, Scene};
use crate::Scalar;

/// Default hysteresis deadband in meters for quadrant smoothing.
pub const DEFAULT_DEADBAND: Scalar = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    fn from_signs(top: bool, right: bool) -> Quadrant {
        match (top, right) {
            (true, true) => Quadrant::TopRight,
            (true, false) => Quadrant::TopLeft,
            (false, true) => Quadrant::BottomRight,
            (false, false) => Quadrant::BottomLeft,
        }
    }

    pub fn is_top(self) -> bool {
        matches!(self, Quadrant::TopLeft | Quadrant::TopRight)
    }

    pub fn is_right(self) -> bool {
        matches!(self, Quadrant::TopRight | Quadrant::BottomRight)
    }
}

/// The relation set R_d over which the interaction graph is typed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalRelation {
    MoveForward,
    MoveBackward,
    LeftToRight,
    RightToLeft,
    NoChange,
}

pub const NUM_RELATIONS: usize = 5;

impl TemporalRelation {
    pub const ALL: [TemporalRelation; NUM_RELATIONS] = [
        TemporalRelation::MoveForward,
        TemporalRelation::MoveBackward,
        TemporalRelation::LeftToRight,
        TemporalRelation::RightToLeft,
        TemporalRelation::NoChange,
    ];

    pub fn index(self) -> usize {
        match self {
            TemporalRelation::MoveForward => 0,
            TemporalRelation::MoveBackward => 1,
            TemporalRelation::LeftToRight => 2,
            TemporalRelation::RightToLeft => 3,
            TemporalRelation::NoChange => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalRelation::MoveForward => "move_forward",
            TemporalRelation::MoveBackward => "move_backward",
            TemporalRelation::LeftToRight => "left_to_right",
            TemporalRelation::RightToLeft => "right_to_left",
            TemporalRelation::NoChange => "no_change",
        }
    }

    pub fn inverse(self) -> TemporalRelation {
        match self {
            TemporalRelation::MoveForward => TemporalRelation::MoveBackward,
            TemporalRelation::MoveBackward => TemporalRelation::MoveForward,
            TemporalRelation::LeftToRight => TemporalRelation::RightToLeft,
            TemporalRelation::RightToLeft => TemporalRelation::LeftToRight,
            TemporalRelation::NoChange => TemporalRelation::NoChange,
        }
    }
}

/// Quadrant of object j relative to subject i. Boundary ties resolve to
/// Top / Right.
pub fn quadrant_of(subject: Point, object: Point) -> Quadrant {
    let v = Point::new(object.x - subject.x, object.y - subject.y);
    Quadrant::from_signs(v.y >= 0.0, v.x >= 0.0)
}

/// Hysteresis smoothing of a relative-position sequence into quadrants:
/// an axis flips only when the corresponding coordinate crosses zero by
/// more than `deadband`. The first frame uses the raw quadrant.
pub fn smooth_quadrants(rel_positions: &[Point], deadband: Scalar) -> Vec<Quadrant> {
    assert!(deadband >= 0.0, "deadband must be non-negative");
    let mut out = Vec::with_capacity(rel_positions.len());
    let mut top = true;
    let mut right = true;
    for (i, v) in rel_positions.iter().enumerate() {
        let raw_top = v.y >= 0.0;
        let raw_right = v.x >= 0.0;
        if i == 0 {
            top = raw_top;
            right = raw_right;
        } else {
            if raw_top != top && v.y.abs() > deadband {
                top = raw_top;
            }
            if raw_right != right && v.x.abs() > deadband {
                right = raw_right;
            }
        }
        out.push(Quadrant::from_signs(top, right));
    }
    out
}

/// Per-axis comparison of the first and last smoothed quadrants; yields
/// one relation per axis that changed, or NoChange if neither did.
pub fn temporal_relation(smoothed: &[Quadrant]) -> Vec<TemporalRelation> {
    assert!(smoothed.len() >= 2, "need at least 2 co-visible frames");
    let first = smoothed[0];
    let last = smoothed[smoothed.len() - 1];
    let mut rels = Vec::with_capacity(2);
    match (first.is_top(), last.is_top()) {
        (false, true) => rels.push(TemporalRelation::MoveForward),
        (true, false) => rels.push(TemporalRelation::MoveBackward),
        _ => {}
    }
    match (first.is_right(), last.is_right()) {
        (false, true) => rels.push(TemporalRelation::LeftToRight),
        (true, false) => rels.push(TemporalRelation::RightToLeft),
        _ => {}
    }
    if rels.is_empty() {
        rels.push(TemporalRelation::NoChange);
    }
    rels
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub idx: usize,
    pub kind: EntityKind,
    pub track_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub rel: TemporalRelation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionGraph {
    pub scene_id: String,
    #[serde(rename = "T", default)]
    pub t: usize,
    pub nodes: Vec<GraphNode>,
    /// Sorted by (src, dst, rel) for diff-friendly output.
    pub edges: Vec<Edge>,
    /// Track-id pairs with fewer than 2 co-visible frames (no edge emitted).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped_pairs: Vec<(String, String)>,
}

impl InteractionGraph {
    pub fn node_index(&self, track_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.track_id == track_id)
    }

    pub fn has_edge(&self, src: usize, dst: usize, rel: TemporalRelation) -> bool {
        self.edges.binary_search(&Edge { src, dst, rel }).is_ok()
    }

    pub fn outgoing(&self, src: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.src == src)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Builds the temporal interaction graph for a scene. Nodes are vehicles
/// first (by track id), then lane markings (by track id).
pub fn build_graph(scene: &Scene, deadband: Scalar) -> Result<InteractionGraph, Error> {
    if scene.tracks.len() < 2 {
        return Err(Error::DegenerateScene(scene.id.clone()));
    }
    let mut order: Vec<&crate::scene::Track> = scene.tracks.iter().collect();
    order.sort_by_key(|t| (t.kind == EntityKind::LaneMarking, t.id.clone()));

    let nodes: Vec<GraphNode> = order
        .iter()
        .enumerate()
        .map(|(idx, t)| GraphNode {
            idx,
            kind: t.kind,
            track_id: t.id.clone(),
        })
        .collect();

    let mut edges = Vec::new();
    let mut skipped = Vec::new();
    for a in 0..order.len() {
        for b in (a + 1)..order.len() {
            let (ta, tb) = (order[a], order[b]);
            // Relative position of b w.r.t. a at every co-visible frame.
            let rel_positions: Vec<Point> = (0..scene.t)
                .filter_map(|t| match (ta.points[t], tb.points[t]) {
                    (Some(pa), Some(pb)) => Some(Point::new(pb.x - pa.x, pb.y - pa.y)),
                    _ => None,
                })
                .collect();
            if rel_positions.len() < 2 {
                skipped.push((ta.id.clone(), tb.id.clone()));
                continue;
            }
            let smoothed = smooth_quadrants(&rel_positions, deadband);
            // temporal_relation over S_{a,b} describes b's motion w.r.t. a,
            // so b is the subject of the direct edge.
            for rel in temporal_relation(&smoothed) {
                edges.push(Edge {
                    src: b,
                    dst: a,
                    rel,
                });
                edges.push(Edge {
                    src: a,
                    dst: b,
                    rel: rel.inverse(),
                });
            }
        }
    }
    edges.sort();
    Ok(InteractionGraph {
        scene_id: scene.id.clone(),
        t: scene.t,
        nodes,
        edges,
        skipped_pairs: skipped,
    })
}

/// Fixed 6-node graph (4 vehicles, 2 lane markings) carrying every
/// relation, with inverse-edge closure. Used by gradient checks and tests.
pub fn dense_demo_graph() -> InteractionGraph {
    let nodes: Vec<GraphNode> = (0..6)
        .map(|idx| GraphNode {
            idx,
            kind: if idx < 4 {
                EntityKind::Vehicle
            } else {
                EntityKind::LaneMarking
            },
            track_id: format!("n{idx}"),
        })
        .collect();
    let mut edges = Vec::new();
    let mut rel_cycle = TemporalRelation::ALL.iter().cycle();
    for a in 0..6usize {
        for b in (a + 1)..6 {
            let rel = *rel_cycle.next().unwrap();
            edges.push(Edge { src: b, dst: a, rel });
            edges.push(Edge {
                src: a,
                dst: b,
                rel: rel.inverse(),
            });
        }
    }
    edges.sort();
    InteractionGraph {
        scene_id: "demo".to_string(),
        t: 10,
        nodes,
        edges,
        skipped_pairs: vec![],
    }
}

pub fn save_graphs_jsonl(graphs: &[InteractionGraph], path: &Path) -> Result<(), Error> {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&g.to_json());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_graphs_jsonl(path: &Path) -> Result<Vec<InteractionGraph>, Error> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(InteractionGraph::from_json)
        .collect()
}
