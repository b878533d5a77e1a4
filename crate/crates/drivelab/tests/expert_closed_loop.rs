//! Closed-loop behavior of the two experts on generated towns: route
//! completion, scenario handling, and the mode-difference negative control.

use drivelab::bench::{detect_infractions, route_completion, PenaltyTable, RouteResult};
use drivelab::expert::{ExpertMode, ExpertPilot};
use drivelab::sensing::SensorConfig;
use drivelab::sim::{
    generate_town, run_rollout, Conditions, RolloutConfig, ScenarioKind, ScenarioSpec, Sim,
    Termination, TownSize,
};
use drivelab::world::{build_lane_graph, plan_route, PlannedRoute, Pose, ROUTE_SPACING};

fn plan_some_route(
    map: &drivelab::world::MapSpec,
    min_len: f64,
    max_len: f64,
) -> Option<PlannedRoute> {
    let graph = build_lane_graph(map).unwrap();
    let lanes: Vec<_> = map
        .lanes
        .iter()
        .filter(|l| map.junction_of_lane(l.id).is_none() && l.length() > 10.0)
        .collect();
    for a in &lanes {
        for b in lanes.iter().rev() {
            let start = Pose {
                position: a.point_at(3.0),
                yaw: a.direction_at(3.0).angle(),
            };
            let goal = Pose {
                position: b.point_at(b.length() - 3.0),
                yaw: b.direction_at(b.length() - 3.0).angle(),
            };
            if let Ok(r) = plan_route(&graph, map, start, goal, ROUTE_SPACING) {
                if r.dense.total_length >= min_len && r.dense.total_length <= max_len {
                    return Some(r);
                }
            }
        }
    }
    None
}

fn run_expert(
    map: &drivelab::world::MapSpec,
    route: &PlannedRoute,
    mode: ExpertMode,
    scenarios: &[ScenarioSpec],
    seed: u64,
    ambient: u32,
) -> (drivelab::sim::Rollout, RouteResult) {
    let sim = Sim::new(map);
    let mut pilot = ExpertPilot::new(mode, SensorConfig::mono());
    let config = RolloutConfig {
        route_id: "test".into(),
        seed,
        max_ticks: ((route.dense.total_length / 2.0 + 120.0) * 20.0) as u64,
        conditions: Conditions::default(),
        ambient_vehicles: ambient,
    };
    let rollout = run_rollout(&sim, &mut pilot, route, scenarios, &config).unwrap();
    let events = detect_infractions(&rollout, map, &route.dense, &sim.params).unwrap();
    let rc = route_completion(
        &rollout.log.records,
        route.dense.total_length,
        rollout.log.termination,
        sim.params.deviation_threshold,
    );
    let result = RouteResult::from_events(
        "test".into(),
        seed,
        rc,
        events,
        rollout.driven_km(),
        rollout.log.termination,
        &PenaltyTable::default(),
    );
    (rollout, result)
}

#[test]
fn experts_complete_an_empty_route_cleanly() {
    let town = generate_town(11, TownSize::Large);
    let route = plan_some_route(&town, 200.0, 500.0).expect("route found");
    for mode in [ExpertMode::Privileged, ExpertMode::Aligned] {
        let (rollout, result) = run_expert(&town, &route, mode, &[], 5, 0);
        assert_eq!(
            rollout.log.termination,
            Termination::RouteComplete,
            "{mode:?} terminated {:?} at rc {:.3}",
            rollout.log.termination,
            result.rc
        );
        assert!(
            result.events.is_empty(),
            "{mode:?} events: {:?}",
            result.events
        );
        assert_eq!(result.rc, 1.0);
    }
}

#[test]
fn experts_complete_with_ambient_traffic() {
    let town = generate_town(12, TownSize::Large);
    let route = plan_some_route(&town, 200.0, 450.0).expect("route found");
    for mode in [ExpertMode::Privileged, ExpertMode::Aligned] {
        let (rollout, result) = run_expert(&town, &route, mode, &[], 7, 4);
        assert_eq!(
            rollout.log.termination,
            Termination::RouteComplete,
            "{mode:?}: {:?}, rc {:.3}, events {:?}",
            rollout.log.termination,
            result.rc,
            result.events
        );
        assert!(
            result
                .events
                .iter()
                .all(|e| e.kind != drivelab::bench::InfractionKind::CollisionVehicle),
            "{mode:?} collided: {:?}",
            result.events
        );
    }
}

#[test]
fn occluded_pedestrian_scenario_is_survivable_by_both_modes() {
    let town = generate_town(13, TownSize::Large);
    let route = plan_some_route(&town, 180.0, 400.0).expect("route found");
    // Find a straight anchor manually: 60 m in, away from junctions.
    let spec = ScenarioSpec {
        kind: ScenarioKind::OccludedPedestrianCross,
        trigger_s: 70.0,
        speed: Some(1.5),
        offset: None,
        trigger_distance: Some(22.0),
        seed: 1,
    };
    for mode in [ExpertMode::Privileged, ExpertMode::Aligned] {
        let (rollout, result) = run_expert(&town, &route, mode, &[spec.clone()], 3, 0);
        assert!(
            result
                .events
                .iter()
                .all(|e| e.kind != drivelab::bench::InfractionKind::CollisionPedestrian),
            "{mode:?} hit the pedestrian: {:?} (termination {:?})",
            result.events,
            rollout.log.termination
        );
    }
}

#[test]
fn privileged_and_aligned_controls_differ_under_occlusion() {
    let town = generate_town(13, TownSize::Large);
    let route = plan_some_route(&town, 180.0, 400.0).expect("route found");
    let spec = ScenarioSpec {
        kind: ScenarioKind::OccludedPedestrianCross,
        trigger_s: 70.0,
        speed: Some(1.5),
        offset: None,
        trigger_distance: Some(22.0),
        seed: 1,
    };
    let (privileged, _) = run_expert(&town, &route, ExpertMode::Privileged, &[spec.clone()], 3, 0);
    let (aligned, _) = run_expert(&town, &route, ExpertMode::Aligned, &[spec], 3, 0);
    let n = privileged.log.records.len().min(aligned.log.records.len());
    let differs = (0..n).any(|i| {
        let a = &privileged.log.records[i].control;
        let b = &aligned.log.records[i].control;
        a.steer.to_bits() != b.steer.to_bits() || a.accel.to_bits() != b.accel.to_bits()
    });
    assert!(differs, "modes should react differently to hidden hazards");
}
