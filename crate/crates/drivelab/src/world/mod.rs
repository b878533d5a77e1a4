//! Map representation, lane-graph routing, route bookkeeping, and the
//! geometric primitives shared by every other module.

pub mod geometry;
pub mod graph;
pub mod map;
pub mod route;

pub use geometry::{obb_overlap, segment_hits_box, wrap_angle, OrientedBox, Pose, Vec2};
pub use graph::{
    build_lane_graph, plan_route, EdgeKind, GraphEdge, LaneGraph, PlannedRoute, RouteError,
    ATTACH_RADIUS, LANE_CHANGE_PENALTY,
};
pub use map::{
    JunctionSpec, LaneId, LaneSpec, MapError, MapSpec, PriorityRelation, StopLineSpec,
    MAP_SCHEMA_VERSION,
};
pub use route::{
    project_onto_route, sample_target_points, DenseRoute, TargetPoint, ROUTE_SPACING, TP_INTERVAL,
};
