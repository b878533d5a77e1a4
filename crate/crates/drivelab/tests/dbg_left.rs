use drivelab::expert::{ExpertMode, ExpertPilot};
use drivelab::sensing::SensorConfig;
use drivelab::sim::*;
use drivelab::world::*;

#[test]
fn dbg_unprotected_left() {
    let suite: drivelab::bench::Suite =
        drivelab::io::read_json(std::path::Path::new("/tmp/lab/suite_short.json")).unwrap();
    let town = generate_town(suite.town_seed, suite.town_size);
    let graph = build_lane_graph(&town).unwrap();
    let sr = suite.routes.iter().find(|r| r.id == "short-04").unwrap();
    let route = plan_route(&graph, &town, sr.start, sr.goal, ROUTE_SPACING).unwrap();
    println!("route len {:.1}", route.dense.total_length);
    let sim = Sim::new(&town);
    let mut pilot = ExpertPilot::new(ExpertMode::Privileged, SensorConfig::mono());
    let config = RolloutConfig {
        route_id: sr.id.clone(),
        seed: 1,
        max_ticks: sr.max_ticks,
        conditions: sr.conditions,
        ambient_vehicles: sr.ambient_vehicles,
    };
    let rollout = run_rollout(&sim, &mut pilot, &route, &sr.scenarios, &config).unwrap();
    println!("termination {:?}", rollout.log.termination);
    // find the scripted vehicle id
    let scripted_id = rollout.trace[0]
        .actors
        .iter()
        .find(|a| matches!(a.behavior, Behavior::ScriptedVehicle(_)))
        .map(|a| a.id)
        .unwrap();
    for t in (330..440).step_by(4) {
        if t >= rollout.log.records.len() { break; }
        let r = &rollout.log.records[t];
        let w = &rollout.trace[t];
        let sv = w.actor(scripted_id).unwrap();
        let d_ego_sv = w.ego().pose.position.dist(sv.pose.position);
        println!(
            "t{} s{:.1} v{:.2} tgt{:?} reason {:?} | sv lane {:?} spd {:.1} d {:.1}",
            t, r.route_s, r.ego_speed,
            r.summary.target_speed.map(|v| (v * 100.0).round() / 100.0),
            r.summary.speed_reason,
            sv.lane_id, sv.speed, d_ego_sv
        );
    }
}
