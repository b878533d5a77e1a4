//! Lane graph construction and minimum-cost route planning.
//!
//! Nodes are lane records; edges are successor transitions (cost = source
//! lane length) and lane changes between same-direction neighbors (fixed
//! additive penalty). Lane changes occur at lane-record boundaries, which is
//! why towns subdivide long roads into sub-50 m lane records.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::geometry::{Pose, Vec2};
use super::map::{LaneId, MapSpec};
use super::route::DenseRoute;

/// Additive cost of a lane-change edge, in meter-equivalents. Must exceed
/// the widest lane so the A* straight-line heuristic stays admissible.
pub const LANE_CHANGE_PENALTY: f64 = 5.0;
/// Poses farther than this from every lane cannot be route endpoints.
pub const ATTACH_RADIUS: f64 = 5.0;
/// Forward run-in of the lane-change diagonal when rendering the route.
const LANE_CHANGE_BLEND: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Successor,
    LaneChange,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: LaneId,
    pub to: LaneId,
    pub cost: f64,
    pub kind: EdgeKind,
}

/// Directed lane-level routing graph. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaneGraph {
    nodes: Vec<LaneId>,
    lengths: BTreeMap<LaneId, f64>,
    adjacency: BTreeMap<LaneId, Vec<GraphEdge>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RouteError {
    #[error("{which} pose does not project onto any lane within {radius} m")]
    NoLaneNearPose { which: &'static str, radius: f64 },
    #[error(
        "no route from lane {from} to lane {to}; component reachable from start: {component:?}"
    )]
    Unreachable {
        from: LaneId,
        to: LaneId,
        component: Vec<LaneId>,
    },
}

/// Builds the routing graph. The map must already satisfy its invariants;
/// a dangling reference surfaces as a [`crate::world::map::MapError`] from
/// validation, which this function re-checks.
pub fn build_lane_graph(map: &MapSpec) -> Result<LaneGraph, super::map::MapError> {
    map.validate()?;
    let mut lengths = BTreeMap::new();
    let mut adjacency: BTreeMap<LaneId, Vec<GraphEdge>> = BTreeMap::new();
    let mut nodes = Vec::with_capacity(map.lanes.len());
    for lane in &map.lanes {
        nodes.push(lane.id);
        lengths.insert(lane.id, lane.length());
        adjacency.entry(lane.id).or_default();
    }
    nodes.sort_unstable();
    for lane in &map.lanes {
        let len = lengths[&lane.id];
        let edges = adjacency.get_mut(&lane.id).expect("node present");
        let mut succ = lane.successors.clone();
        succ.sort_unstable();
        for s in succ {
            edges.push(GraphEdge {
                from: lane.id,
                to: s,
                cost: len,
                kind: EdgeKind::Successor,
            });
        }
        let mut neighbors: Vec<LaneId> = lane
            .left_neighbor
            .into_iter()
            .chain(lane.right_neighbor)
            .collect();
        neighbors.sort_unstable();
        for n in neighbors {
            edges.push(GraphEdge {
                from: lane.id,
                to: n,
                cost: LANE_CHANGE_PENALTY,
                kind: EdgeKind::LaneChange,
            });
        }
    }
    Ok(LaneGraph {
        nodes,
        lengths,
        adjacency,
    })
}

impl LaneGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[LaneId] {
        &self.nodes
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(|v| v.len()).sum()
    }

    /// Outgoing edges of `lane`, successor edges first, each group sorted by
    /// destination id.
    pub fn edges_from(&self, lane: LaneId) -> &[GraphEdge] {
        self.adjacency.get(&lane).map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn lane_length(&self, lane: LaneId) -> f64 {
        self.lengths.get(&lane).copied().unwrap_or(0.0)
    }

    /// Lane ids reachable from `start` by forward edges (including `start`),
    /// sorted ascending.
    pub fn reachable_from(&self, start: LaneId) -> Vec<LaneId> {
        let mut seen = std::collections::BTreeSet::new();
        let mut stack = vec![start];
        while let Some(l) = stack.pop() {
            if seen.insert(l) {
                for e in self.edges_from(l) {
                    stack.push(e.to);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Projects a pose onto the nearest lane whose tangent agrees with the
    /// pose heading (within 90°) at distance <= [`ATTACH_RADIUS`].
    pub fn attach(map: &MapSpec, pose: Pose) -> Option<(LaneId, f64)> {
        let heading = pose.heading();
        let mut best: Option<(LaneId, f64, f64)> = None;
        for lane in &map.lanes {
            let (s, d) = lane.project(pose.position);
            if d > ATTACH_RADIUS {
                continue;
            }
            if lane.direction_at(s).dot(heading) <= 0.0 {
                continue;
            }
            let better = match best {
                None => true,
                Some((bid, _, bd)) => d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && lane.id < bid),
            };
            if better {
                best = Some((lane.id, s, d));
            }
        }
        best.map(|(id, s, _)| (id, s))
    }
}

/// A planned route: the resampled polyline, the lane sequence, and the
/// graph cost of the optimal path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub dense: DenseRoute,
    pub lane_path: Vec<LaneId>,
    pub cost: f64,
    pub start_lane: LaneId,
    pub start_s: f64,
    pub goal_lane: LaneId,
    pub goal_s: f64,
}

/// Search node: `Start` is the ego position on its attached lane, `Lane(x)`
/// means "arrived at the beginning of lane x", `Goal` is the goal position
/// on its attached lane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Start,
    Lane(LaneId),
    Goal,
}

#[derive(Debug)]
struct HeapEntry {
    f: f64,
    g: f64,
    node: Node,
    tie: LaneId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.tie == other.tie
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on f, ties broken by ascending lane id.
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.tie.cmp(&self.tie))
    }
}

/// Minimum-cost route between two poses, resampled at `spacing`.
///
/// The returned cost is the optimal path cost over the lane graph with the
/// start attached by its remaining lane length and the goal by its arc
/// position, exactly as an exhaustive shortest-path search over the same
/// graph would compute it.
pub fn plan_route(
    graph: &LaneGraph,
    map: &MapSpec,
    start: Pose,
    goal: Pose,
    spacing: f64,
) -> Result<PlannedRoute, RouteError> {
    let (start_lane, start_s) = LaneGraph::attach(map, start).ok_or(RouteError::NoLaneNearPose {
        which: "start",
        radius: ATTACH_RADIUS,
    })?;
    let (goal_lane, goal_s) = LaneGraph::attach(map, goal).ok_or(RouteError::NoLaneNearPose {
        which: "goal",
        radius: ATTACH_RADIUS,
    })?;

    let goal_pos = map.lane(goal_lane).expect("goal lane").point_at(goal_s);
    let h = |node: Node| -> f64 {
        match node {
            Node::Goal => 0.0,
            Node::Start => start.position.dist(goal_pos),
            Node::Lane(l) => map
                .lane(l)
                .map(|lane| lane.centerline[0].dist(goal_pos))
                .unwrap_or(0.0),
        }
    };

    let mut best_g: BTreeMap<Node, f64> = BTreeMap::new();
    let mut parent: BTreeMap<Node, Node> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    heap.push(HeapEntry {
        f: h(Node::Start),
        g: 0.0,
        node: Node::Start,
        tie: start_lane,
    });
    best_g.insert(Node::Start, 0.0);

    let relax =
        |heap: &mut BinaryHeap<HeapEntry>,
         best_g: &mut BTreeMap<Node, f64>,
         parent: &mut BTreeMap<Node, Node>,
         from: Node,
         to: Node,
         g: f64,
         tie: LaneId| {
            let better = match best_g.get(&to) {
                None => true,
                Some(&old) => g < old,
            };
            if better {
                best_g.insert(to, g);
                parent.insert(to, from);
                heap.push(HeapEntry {
                    f: g + h(to),
                    g,
                    node: to,
                    tie,
                });
            }
        };

    let mut goal_cost = None;
    while let Some(entry) = heap.pop() {
        if best_g.get(&entry.node).copied().unwrap_or(f64::MAX) < entry.g {
            continue;
        }
        match entry.node {
            Node::Goal => {
                goal_cost = Some(entry.g);
                break;
            }
            Node::Start => {
                if goal_lane == start_lane && goal_s >= start_s - 1e-9 {
                    relax(
                        &mut heap,
                        &mut best_g,
                        &mut parent,
                        Node::Start,
                        Node::Goal,
                        entry.g + (goal_s - start_s),
                        goal_lane,
                    );
                }
                let remaining = graph.lane_length(start_lane) - start_s;
                for e in graph.edges_from(start_lane) {
                    if e.kind == EdgeKind::Successor {
                        relax(
                            &mut heap,
                            &mut best_g,
                            &mut parent,
                            Node::Start,
                            Node::Lane(e.to),
                            entry.g + remaining.max(0.0),
                            e.to,
                        );
                    }
                }
            }
            Node::Lane(l) => {
                if l == goal_lane {
                    relax(
                        &mut heap,
                        &mut best_g,
                        &mut parent,
                        Node::Lane(l),
                        Node::Goal,
                        entry.g + goal_s,
                        goal_lane,
                    );
                }
                for e in graph.edges_from(l) {
                    relax(
                        &mut heap,
                        &mut best_g,
                        &mut parent,
                        Node::Lane(l),
                        Node::Lane(e.to),
                        entry.g + e.cost,
                        e.to,
                    );
                }
            }
        }
    }

    let cost = goal_cost.ok_or_else(|| RouteError::Unreachable {
        from: start_lane,
        to: goal_lane,
        component: graph.reachable_from(start_lane),
    })?;

    // Reconstruct the lane sequence Start -> ... -> Goal.
    let mut rev = Vec::new();
    let mut cur = Node::Goal;
    while let Some(&p) = parent.get(&cur) {
        rev.push(p);
        cur = p;
    }
    rev.reverse();
    let mut lane_path = vec![start_lane];
    for node in rev.iter().skip(1) {
        if let Node::Lane(l) = node {
            lane_path.push(*l);
        }
    }

    let dense = render_route(map, &lane_path, start_lane, start_s, goal_lane, goal_s, spacing);
    Ok(PlannedRoute {
        dense,
        lane_path,
        cost,
        start_lane,
        start_s,
        goal_lane,
        goal_s,
    })
}

/// Turns a lane sequence into the raw geometric polyline and resamples it.
fn render_route(
    map: &MapSpec,
    lane_path: &[LaneId],
    start_lane: LaneId,
    start_s: f64,
    goal_lane: LaneId,
    goal_s: f64,
    spacing: f64,
) -> DenseRoute {
    let mut raw: Vec<(Vec2, LaneId)> = Vec::new();
    let push_lane_piece =
        |raw: &mut Vec<(Vec2, LaneId)>, lane_id: LaneId, from_s: f64, to_s: f64| {
            let lane = map.lane(lane_id).expect("lane on path");
            if to_s - from_s <= 1e-9 {
                raw.push((lane.point_at(from_s.max(0.0)), lane_id));
                return;
            }
            // Walk original vertices between the clamps so curvature survives.
            let mut acc = 0.0;
            raw.push((lane.point_at(from_s), lane_id));
            for w in lane.centerline.windows(2) {
                let seg = w[0].dist(w[1]);
                let v_s = acc + seg;
                if v_s > from_s + 1e-9 && v_s < to_s - 1e-9 {
                    raw.push((w[1], lane_id));
                }
                acc = v_s;
            }
            raw.push((lane.point_at(to_s.min(lane.length())), lane_id));
        };

    if lane_path.len() == 1 && start_lane == goal_lane && goal_s >= start_s - 1e-9 {
        if (goal_s - start_s).abs() <= 1e-9 {
            let p = map.lane(start_lane).expect("lane").point_at(start_s);
            return DenseRoute::from_polyline(&[(p, start_lane)], spacing);
        }
        push_lane_piece(&mut raw, start_lane, start_s, goal_s);
        return DenseRoute::from_polyline(&raw, spacing);
    }

    let mut entry_s = start_s;
    for (i, &lane_id) in lane_path.iter().enumerate() {
        let lane = map.lane(lane_id).expect("lane on path");
        let is_last = i + 1 == lane_path.len();
        if is_last {
            push_lane_piece(&mut raw, lane_id, entry_s, goal_s.max(entry_s));
            break;
        }
        let next = lane_path[i + 1];
        let is_lane_change =
            lane.left_neighbor == Some(next) || lane.right_neighbor == Some(next);
        if is_lane_change {
            // Cross from the entry point diagonally onto the neighbor.
            let cross_from = lane.point_at(entry_s);
            let next_lane = map.lane(next).expect("neighbor lane");
            let (s_on_next, _) = next_lane.project(cross_from);
            let target_s = (s_on_next + LANE_CHANGE_BLEND).min(next_lane.length());
            raw.push((cross_from, lane_id));
            entry_s = target_s;
            raw.push((next_lane.point_at(target_s), next));
            // Remove zero-length duplicates introduced by the crossing.
            dedup_raw(&mut raw);
            continue;
        }
        // Successor edge: drive the rest of this lane.
        push_lane_piece(&mut raw, lane_id, entry_s, lane.length());
        entry_s = 0.0;
    }
    dedup_raw(&mut raw);
    DenseRoute::from_polyline(&raw, spacing)
}

fn dedup_raw(raw: &mut Vec<(Vec2, LaneId)>) {
    raw.dedup_by(|b, a| a.0.dist(b.0) <= 1e-9);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::map::{LaneSpec, MapSpec, MAP_SCHEMA_VERSION};

    fn lane(id: LaneId, pts: Vec<Vec2>) -> LaneSpec {
        LaneSpec {
            id,
            centerline: pts,
            width: 3.5,
            speed_limit: 8.33,
            successors: vec![],
            predecessors: vec![],
            left_neighbor: None,
            right_neighbor: None,
        }
    }

    fn map_of(lanes: Vec<LaneSpec>) -> MapSpec {
        MapSpec {
            schema_version: MAP_SCHEMA_VERSION,
            seed: 0,
            lanes,
            junctions: vec![],
            static_obstacles: vec![],
            stop_lines: vec![],
        }
    }

    #[test]
    fn single_lane_graph() {
        let m = map_of(vec![lane(0, vec![Vec2::ZERO, Vec2::new(50.0, 0.0)])]);
        let g = build_lane_graph(&m).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn chained_lanes_have_one_successor_edge() {
        let mut a = lane(0, vec![Vec2::ZERO, Vec2::new(40.0, 0.0)]);
        let b = lane(1, vec![Vec2::new(40.0, 0.0), Vec2::new(80.0, 0.0)]);
        a.successors = vec![1];
        let m = map_of(vec![a, b]);
        let g = build_lane_graph(&m).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        let e = g.edges_from(0)[0];
        assert_eq!(e.kind, EdgeKind::Successor);
        assert!((e.cost - 40.0).abs() < 1e-12);
    }

    #[test]
    fn dangling_reference_is_schema_error() {
        let mut a = lane(0, vec![Vec2::ZERO, Vec2::new(40.0, 0.0)]);
        a.successors = vec![7];
        let m = map_of(vec![a]);
        let err = build_lane_graph(&m).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn plan_same_point_route() {
        let m = map_of(vec![lane(0, vec![Vec2::ZERO, Vec2::new(50.0, 0.0)])]);
        let g = build_lane_graph(&m).unwrap();
        let pose = Pose::new(10.0, 0.0, 0.0);
        let r = plan_route(&g, &m, pose, pose, 1.0).unwrap();
        assert_eq!(r.dense.points.len(), 1);
        assert!(r.dense.total_length.abs() < 1e-12);
        assert!(r.cost.abs() < 1e-12);
    }

    #[test]
    fn plan_straight_100m() {
        let m = map_of(vec![lane(0, vec![Vec2::ZERO, Vec2::new(120.0, 0.0)])]);
        let g = build_lane_graph(&m).unwrap();
        let r = plan_route(
            &g,
            &m,
            Pose::new(0.0, 0.0, 0.0),
            Pose::new(100.0, 0.0, 0.0),
            1.0,
        )
        .unwrap();
        assert_eq!(r.dense.points.len(), 101);
        assert!((r.dense.total_length - 100.0).abs() < 1e-6);
        assert!((r.cost - 100.0).abs() < 1e-9);
    }

    #[test]
    fn unreachable_goal_reports_component() {
        let a = lane(0, vec![Vec2::ZERO, Vec2::new(40.0, 0.0)]);
        let b = lane(1, vec![Vec2::new(100.0, 50.0), Vec2::new(140.0, 50.0)]);
        let m = map_of(vec![a, b]);
        let g = build_lane_graph(&m).unwrap();
        let err = plan_route(
            &g,
            &m,
            Pose::new(5.0, 0.0, 0.0),
            Pose::new(120.0, 50.0, 0.0),
            1.0,
        )
        .unwrap_err();
        match err {
            RouteError::Unreachable { component, .. } => assert_eq!(component, vec![0]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn lane_change_path_uses_penalty() {
        // Two parallel chained segments; goal only reachable via neighbor.
        let mut a0 = lane(0, vec![Vec2::ZERO, Vec2::new(50.0, 0.0)]);
        let mut a1 = lane(1, vec![Vec2::new(50.0, 0.0), Vec2::new(100.0, 0.0)]);
        let mut b0 = lane(2, vec![Vec2::new(0.0, 3.5), Vec2::new(50.0, 3.5)]);
        let mut b1 = lane(3, vec![Vec2::new(50.0, 3.5), Vec2::new(100.0, 3.5)]);
        a0.successors = vec![1];
        b0.successors = vec![3];
        a0.left_neighbor = Some(2);
        a1.left_neighbor = Some(3);
        b0.right_neighbor = Some(0);
        b1.right_neighbor = Some(1);
        let m = map_of(vec![a0, a1, b0, b1]);
        let g = build_lane_graph(&m).unwrap();
        let r = plan_route(
            &g,
            &m,
            Pose::new(10.0, 0.0, 0.0),
            Pose::new(90.0, 3.5, 0.0),
            1.0,
        )
        .unwrap();
        // Drive lane 0 to its end (40), change onto 3 (5), then 40 along 3.
        assert!((r.cost - (40.0 + LANE_CHANGE_PENALTY + 40.0)).abs() < 1e-9);
        assert_eq!(r.lane_path, vec![0, 1, 3]);
        // The rendered diagonal keeps spacing legal.
        for w in r.dense.cum_s.windows(2) {
            let gap = w[1] - w[0];
            assert!(gap >= 0.5 - 1e-9 && gap <= 1.5 + 1e-9);
        }
    }
}
