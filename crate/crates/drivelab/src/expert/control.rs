//! Low-level expert control: pure pursuit on the dense route for steering,
//! proportional speed tracking for the pedals.

use crate::sim::{Control, SimParams};

use super::{EgoSnapshot, ExpertConfig, ExpertView, SpeedDecision};

/// Steering via pure pursuit (lookahead = max(3 m, 1.0·v)), acceleration via
/// a = k_v·(v_target − v), both clamped by the simulator limits.
pub fn expert_control(
    view: &ExpertView,
    ego: &EgoSnapshot,
    speed: &SpeedDecision,
    cfg: &ExpertConfig,
    params: &SimParams,
) -> Control {
    let route = view.route;
    let lookahead = (cfg.lookahead_time * ego.speed).max(cfg.lookahead_min);
    let target = route.point_at((ego.route_s + lookahead).min(route.total_length));
    let local = ego.pose.to_local(target); // +x right, +y forward
    let dist = local.norm().max(0.5);
    let alpha = (-local.x).atan2(local.y);
    let steer = (2.0 * params.wheelbase * alpha.sin() / dist).atan();
    let accel = cfg.k_v * (speed.target_speed - ego.speed);
    Control::clamped(steer, accel, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::{ExpertMode, SpeedReason};
    use crate::sim::Conditions;
    use crate::world::{DenseRoute, Pose, Vec2};

    fn straight_route() -> DenseRoute {
        let raw: Vec<(Vec2, u32)> = vec![(Vec2::ZERO, 0), (Vec2::new(200.0, 0.0), 0)];
        DenseRoute::from_polyline(&raw, 1.0)
    }

    fn view(route: &DenseRoute) -> ExpertView<'_> {
        ExpertView {
            mode: ExpertMode::Privileged,
            actors: vec![],
            lights: vec![],
            route,
            conditions: Conditions::default(),
            posted_limit: 8.33,
        }
    }

    #[test]
    fn centered_at_target_speed_is_neutral() {
        let route = straight_route();
        let v = view(&route);
        let ego = EgoSnapshot {
            pose: Pose::new(50.0, 0.0, 0.0),
            speed: 8.33,
            route_s: 50.0,
        };
        let ctrl = expert_control(
            &v,
            &ego,
            &SpeedDecision {
                target_speed: 8.33,
                reason: SpeedReason::Free,
            },
            &ExpertConfig::default(),
            &SimParams::default(),
        );
        assert!(ctrl.steer.abs() < 1e-6, "steer {}", ctrl.steer);
        assert!(ctrl.accel.abs() < 1e-6, "accel {}", ctrl.accel);
    }

    #[test]
    fn offset_left_steers_back_right() {
        let route = straight_route();
        let v = view(&route);
        let ego = EgoSnapshot {
            pose: Pose::new(50.0, 1.0, 0.0), // 1 m left of the route
            speed: 5.0,
            route_s: 50.0,
        };
        let ctrl = expert_control(
            &v,
            &ego,
            &SpeedDecision {
                target_speed: 5.0,
                reason: SpeedReason::Free,
            },
            &ExpertConfig::default(),
            &SimParams::default(),
        );
        assert!(ctrl.steer < -1e-4, "steer {}", ctrl.steer);
    }

    #[test]
    fn proportional_braking_clamps() {
        let route = straight_route();
        let v = view(&route);
        let ego = EgoSnapshot {
            pose: Pose::new(50.0, 0.0, 0.0),
            speed: 5.0,
            route_s: 50.0,
        };
        let ctrl = expert_control(
            &v,
            &ego,
            &SpeedDecision {
                target_speed: 0.0,
                reason: SpeedReason::RedLight,
            },
            &ExpertConfig::default(),
            &SimParams::default(),
        );
        // k_v·(0 − 5) = −7.5, clamped to −b_max = −6.
        assert!((ctrl.accel + 6.0).abs() < 1e-12);
    }
}
