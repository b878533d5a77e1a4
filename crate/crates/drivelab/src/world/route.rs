//! Dense routes, target points, and route-frame projection.

use serde::{Deserialize, Serialize};

use super::geometry::{segment_param, Vec2};
use super::map::LaneId;

/// Default resample spacing for dense routes, meters.
pub const ROUTE_SPACING: f64 = 1.0;
/// Default target-point interval along the route, meters.
pub const TP_INTERVAL: f64 = 50.0;

/// A route resampled at (approximately) fixed spacing. Consecutive point
/// spacing stays within [0.5, 1.5] of the nominal spacing except for
/// degenerate sub-spacing routes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseRoute {
    pub points: Vec<Vec2>,
    /// Source lane of each point (diagonal lane-change pieces belong to the
    /// destination lane).
    pub lane_ids: Vec<LaneId>,
    /// Cumulative arc length at each point; last entry equals `total_length`.
    pub cum_s: Vec<f64>,
    pub total_length: f64,
    pub spacing: f64,
}

impl DenseRoute {
    /// Resamples a raw polyline at `spacing`, carrying per-point lane ids.
    pub fn from_polyline(raw: &[(Vec2, LaneId)], spacing: f64) -> DenseRoute {
        assert!(!raw.is_empty(), "route polyline must be non-empty");
        if raw.len() == 1 {
            return DenseRoute {
                points: vec![raw[0].0],
                lane_ids: vec![raw[0].1],
                cum_s: vec![0.0],
                total_length: 0.0,
                spacing,
            };
        }
        let mut raw_cum = Vec::with_capacity(raw.len());
        let mut acc = 0.0;
        raw_cum.push(0.0);
        for w in raw.windows(2) {
            acc += w[0].0.dist(w[1].0);
            raw_cum.push(acc);
        }
        let total = acc;
        if total <= 0.0 {
            return DenseRoute {
                points: vec![raw[0].0],
                lane_ids: vec![raw[0].1],
                cum_s: vec![0.0],
                total_length: 0.0,
                spacing,
            };
        }

        let mut sample_s: Vec<f64> = Vec::new();
        let mut s = 0.0;
        while s < total - 1e-9 {
            sample_s.push(s);
            s += spacing;
        }
        // Merge a sub-half-spacing tail into the final sample.
        if let Some(&last) = sample_s.last() {
            if sample_s.len() > 1 && total - last < 0.5 * spacing {
                sample_s.pop();
            }
        }
        sample_s.push(total);

        let sample_at = |s: f64| -> (Vec2, LaneId) {
            let i = match raw_cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
                Ok(i) => i.min(raw.len() - 1),
                Err(i) => (i.max(1) - 1).min(raw.len() - 2),
            };
            let i = i.min(raw.len() - 2);
            let seg = raw_cum[i + 1] - raw_cum[i];
            let t = if seg > 0.0 { (s - raw_cum[i]) / seg } else { 0.0 };
            (raw[i].0.lerp(raw[i + 1].0, t.clamp(0.0, 1.0)), raw[i + 1].1)
        };

        let mut points = Vec::with_capacity(sample_s.len());
        let mut lane_ids = Vec::with_capacity(sample_s.len());
        for &s in &sample_s {
            let (p, lane) = sample_at(s);
            points.push(p);
            lane_ids.push(lane);
        }
        // First point belongs to the first lane piece, not the second.
        lane_ids[0] = raw[0].1;

        let mut cum_s = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cum_s.push(0.0);
        for w in points.windows(2) {
            acc += w[0].dist(w[1]);
            cum_s.push(acc);
        }
        DenseRoute {
            total_length: acc,
            points,
            lane_ids,
            cum_s,
            spacing,
        }
    }

    /// Point at arc position `s`, clamped to the route.
    pub fn point_at(&self, s: f64) -> Vec2 {
        if self.points.len() == 1 {
            return self.points[0];
        }
        let s = s.clamp(0.0, self.total_length);
        let i = match self
            .cum_s
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.max(1) - 1,
        };
        let i = i.min(self.points.len() - 2);
        let seg = self.cum_s[i + 1] - self.cum_s[i];
        let t = if seg > 0.0 {
            ((s - self.cum_s[i]) / seg).clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.points[i].lerp(self.points[i + 1], t)
    }

    /// Route tangent at arc position `s`.
    pub fn direction_at(&self, s: f64) -> Vec2 {
        if self.points.len() < 2 {
            return Vec2::new(1.0, 0.0);
        }
        let s = s.clamp(0.0, self.total_length);
        let i = match self
            .cum_s
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.max(1) - 1,
        };
        let i = i.min(self.points.len() - 2);
        (self.points[i + 1] - self.points[i]).normalized()
    }

    /// Lane id owning arc position `s`.
    pub fn lane_at(&self, s: f64) -> LaneId {
        if self.points.len() < 2 {
            return self.lane_ids[0];
        }
        let s = s.clamp(0.0, self.total_length);
        let i = match self
            .cum_s
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.max(1) - 1,
        };
        self.lane_ids[i.min(self.lane_ids.len() - 1)]
    }
}

/// Arc position of the closest route segment plus signed lateral offset
/// (positive to the left of the route direction).
pub fn project_onto_route(route: &DenseRoute, p: Vec2) -> (f64, f64) {
    assert!(!route.points.is_empty(), "route must be non-empty");
    if route.points.len() == 1 {
        return (0.0, route.points[0].dist(p));
    }
    let mut best = (0.0_f64, 0.0_f64, f64::MAX);
    for (i, w) in route.points.windows(2).enumerate() {
        let t = segment_param(w[0], w[1], p);
        let q = w[0].lerp(w[1], t);
        let d = q.dist(p);
        if d < best.2 - 1e-12 {
            let seg = w[1] - w[0];
            let side = seg.cross(p - q);
            let lateral = if side >= 0.0 { d } else { -d };
            let s = route.cum_s[i] + t * w[0].dist(w[1]);
            best = (s, lateral, d);
        }
    }
    (best.0, best.1)
}

/// Sparse navigation coordinate on the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPoint {
    pub position: Vec2,
    pub route_s: f64,
}

/// Target points at multiples of `interval` plus the route endpoint.
pub fn sample_target_points(route: &DenseRoute, interval: f64) -> Vec<TargetPoint> {
    assert!(interval > 0.0, "target-point interval must be positive");
    let mut tps = Vec::new();
    let mut s = 0.0;
    while s < route.total_length - 1e-9 {
        tps.push(TargetPoint {
            position: route.point_at(s),
            route_s: s,
        });
        s += interval;
    }
    tps.push(TargetPoint {
        position: route.point_at(route.total_length),
        route_s: route.total_length,
    });
    tps
}

/// The target points a policy conditions on at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpActive {
    pub previous: TargetPoint,
    pub current: TargetPoint,
    pub future: TargetPoint,
    /// Index of `current` in the route's TP sequence.
    pub current_idx: usize,
}

/// Consumes target points in order as the ego reaches them.
///
/// A TP is consumed once the ego comes within `switch_radius` of it; the
/// current TP is the first unconsumed one, `previous` the last consumed
/// (route start if none), `future` the next one (route end, clamped).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TpTracker {
    next_idx: usize,
    pub switch_radius: f64,
}

impl TpTracker {
    pub fn new(switch_radius: f64) -> TpTracker {
        TpTracker {
            next_idx: 0,
            switch_radius,
        }
    }

    pub fn advance(&mut self, tps: &[TargetPoint], ego_pos: Vec2) -> TpActive {
        assert!(!tps.is_empty(), "at least one target point");
        let n = tps.len();
        while self.next_idx < n
            && tps[self.next_idx].position.dist(ego_pos) <= self.switch_radius
        {
            self.next_idx += 1;
        }
        let cur_idx = self.next_idx.min(n - 1);
        let prev_idx = self.next_idx.saturating_sub(1).min(n - 1);
        let fut_idx = (cur_idx + 1).min(n - 1);
        TpActive {
            previous: tps[prev_idx],
            current: tps[cur_idx],
            future: tps[fut_idx],
            current_idx: cur_idx,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight_route(len: f64) -> DenseRoute {
        let raw = vec![(Vec2::ZERO, 0), (Vec2::new(len, 0.0), 0)];
        DenseRoute::from_polyline(&raw, ROUTE_SPACING)
    }

    #[test]
    fn resample_straight_100m() {
        let r = straight_route(100.0);
        assert_eq!(r.points.len(), 101);
        assert!((r.total_length - 100.0).abs() < 1e-6);
        for w in r.cum_s.windows(2) {
            let gap = w[1] - w[0];
            assert!(gap >= 0.5 - 1e-9 && gap <= 1.5 + 1e-9);
        }
    }

    #[test]
    fn resample_merges_tiny_tail() {
        let r = straight_route(100.2);
        for w in r.cum_s.windows(2) {
            let gap = w[1] - w[0];
            assert!(gap >= 0.5 - 1e-9 && gap <= 1.5 + 1e-9, "gap {gap}");
        }
        assert!((r.total_length - 100.2).abs() < 1e-6);
    }

    #[test]
    fn tps_on_100m_route() {
        let r = straight_route(100.0);
        let tps = sample_target_points(&r, 50.0);
        let ss: Vec<f64> = tps.iter().map(|t| t.route_s).collect();
        assert_eq!(ss, vec![0.0, 50.0, 100.0]);
    }

    #[test]
    fn tps_include_endpoint() {
        let r = straight_route(120.0);
        let tps = sample_target_points(&r, 50.0);
        let ss: Vec<f64> = tps.iter().map(|t| t.route_s).collect();
        assert_eq!(ss.len(), 4);
        assert!((ss[3] - 120.0).abs() < 1e-6);
        for w in ss.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn tp_tracker_consumes_in_order() {
        let r = straight_route(150.0);
        let tps = sample_target_points(&r, 50.0);
        assert_eq!(tps.len(), 4); // 0, 50, 100, 150
        let mut tracker = TpTracker::new(3.0);
        let at_start = tracker.advance(&tps, Vec2::ZERO);
        assert_eq!(at_start.previous.route_s, 0.0);
        assert_eq!(at_start.current.route_s, 50.0);
        assert_eq!(at_start.future.route_s, 100.0);
        // Approaching the current TP within the radius switches it out.
        let near = tracker.advance(&tps, Vec2::new(47.5, 0.0));
        assert_eq!(near.current.route_s, 100.0);
        assert_eq!(near.previous.route_s, 50.0);
        // A wider radius (one-TP mode) would have switched earlier.
        let mut wide = TpTracker::new(10.0);
        wide.advance(&tps, Vec2::ZERO);
        let w = wide.advance(&tps, Vec2::new(41.0, 0.0));
        assert_eq!(w.current.route_s, 100.0);
        let mut narrow = TpTracker::new(3.0);
        narrow.advance(&tps, Vec2::ZERO);
        let nw = narrow.advance(&tps, Vec2::new(41.0, 0.0));
        assert_eq!(nw.current.route_s, 50.0);
        // At the last TP the future clamps to the endpoint.
        tracker.advance(&tps, Vec2::new(100.0, 0.0));
        let end = tracker.advance(&tps, Vec2::new(149.0, 0.0));
        assert_eq!(end.current.route_s, 150.0);
        assert_eq!(end.future.route_s, 150.0);
    }

    #[test]
    fn projection_signed_lateral() {
        let r = straight_route(100.0);
        let (s, lat) = project_onto_route(&r, Vec2::new(10.0, 3.0));
        assert!((s - 10.0).abs() < 1e-9);
        assert!((lat - 3.0).abs() < 1e-9);
        let (_, lat_r) = project_onto_route(&r, Vec2::new(10.0, -3.0));
        assert!((lat_r + 3.0).abs() < 1e-9);
    }

    #[test]
    fn projection_of_route_points_is_on_route() {
        let raw: Vec<(Vec2, LaneId)> = (0..60)
            .map(|i| {
                let a = i as f64 * 0.05;
                (Vec2::new(a.cos() * 30.0, a.sin() * 30.0), 0)
            })
            .collect();
        let r = DenseRoute::from_polyline(&raw, ROUTE_SPACING);
        for (i, p) in r.points.iter().enumerate() {
            let (s, lat) = project_onto_route(&r, *p);
            assert!(lat.abs() < 1e-6);
            assert!((s - r.cum_s[i]).abs() <= r.spacing + 1e-9);
        }
    }
}
