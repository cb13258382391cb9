//! Deterministic rule baseline: majority relation over a vehicle's edges to
//! static references, then the pairwise overtake pass.

use crate::graph::{InteractionGraph, TemporalRelation, NUM_RELATIONS};
use crate::scene::{BehaviorClass, EntityKind};

/// Per-vehicle outcome of the rule classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleVerdict {
    pub node: usize,
    pub track_id: String,
    pub class: BehaviorClass,
    /// Relation counts the stage-1 argmax was taken over, indexed by
    /// [`TemporalRelation::index`].
    pub counts: [usize; NUM_RELATIONS],
    /// True when no lane-marking edge existed and all outgoing edges were
    /// counted instead.
    pub used_fallback: bool,
}

fn relation_class(rel: TemporalRelation) -> BehaviorClass {
    match rel {
        TemporalRelation::MoveForward => BehaviorClass::MAU,
        TemporalRelation::MoveBackward => BehaviorClass::MTU,
        TemporalRelation::NoChange => BehaviorClass::PRK,
        TemporalRelation::LeftToRight => BehaviorClass::LCL,
        TemporalRelation::RightToLeft => BehaviorClass::LCR,
    }
}

/// Tie-break preference: lane changes over forward/backward drift over
/// parked, then enum order within a tier.
const TIE_ORDER: [TemporalRelation; NUM_RELATIONS] = [
    TemporalRelation::LeftToRight,
    TemporalRelation::RightToLeft,
    TemporalRelation::MoveForward,
    TemporalRelation::MoveBackward,
    TemporalRelation::NoChange,
];

fn argmax_class(counts: &[usize; NUM_RELATIONS]) -> BehaviorClass {
    let max = *counts.iter().max().unwrap();
    if max == 0 {
        // No relational evidence at all: treat as parked.
        return BehaviorClass::PRK;
    }
    let winner = TIE_ORDER
        .iter()
        .find(|r| counts[r.index()] == max)
        .unwrap();
    relation_class(*winner)
}

/// Stage 1: majority relation over the vehicle's outgoing edges to lane
/// markings (falling back to all outgoing edges when it has none).
pub fn classify_stage1(g: &InteractionGraph, vehicle: usize) -> RuleVerdict {
    let node = &g.nodes[vehicle];
    debug_assert_eq!(node.kind, EntityKind::Vehicle);
    let mut counts = [0usize; NUM_RELATIONS];
    let mut lane_edges = 0usize;
    for e in g.outgoing(vehicle) {
        if g.nodes[e.dst].kind == EntityKind::LaneMarking {
            counts[e.rel.index()] += 1;
            lane_edges += 1;
        }
    }
    let used_fallback = lane_edges == 0;
    if used_fallback {
        for e in g.outgoing(vehicle) {
            counts[e.rel.index()] += 1;
        }
    }
    RuleVerdict {
        node: vehicle,
        track_id: node.track_id.clone(),
        class: argmax_class(&counts),
        counts,
        used_fallback,
    }
}

/// Stage 2: for every ordered vehicle pair (i, j) with neither classified
/// parked or moving-towards, a MoveForward edge from i to j (i moved ahead
/// of j) reclassifies i as overtaking. PRK and MTU verdicts never change.
pub fn classify_overtake(g: &InteractionGraph, verdicts: &mut [RuleVerdict]) {
    let excluded = |c: BehaviorClass| matches!(c, BehaviorClass::PRK | BehaviorClass::MTU);
    let stage1: Vec<BehaviorClass> = verdicts.iter().map(|v| v.class).collect();
    for (vi, verdict) in verdicts.iter_mut().enumerate() {
        if excluded(stage1[vi]) {
            continue;
        }
        let i = verdict.node;
        for (vj, &cj) in stage1.iter().enumerate() {
            if vi == vj || excluded(cj) {
                continue;
            }
            // verdicts are indexed over vehicles; map back to node ids.
            let j = g
                .nodes
                .iter()
                .filter(|n| n.kind == EntityKind::Vehicle)
                .nth(vj)
                .unwrap()
                .idx;
            if g.has_edge(i, j, TemporalRelation::MoveForward) {
                verdict.class = BehaviorClass::OVT;
                break;
            }
        }
    }
}

/// Full rule pipeline: stage 1 per vehicle, then the overtake pass.
pub fn classify(g: &InteractionGraph) -> Vec<RuleVerdict> {
    let mut verdicts: Vec<RuleVerdict> = g
        .nodes
        .iter()
        .filter(|n| n.kind == EntityKind::Vehicle)
        .map(|n| classify_stage1(g, n.idx))
        .collect();
    classify_overtake(g, &mut verdicts);
    verdicts
}
