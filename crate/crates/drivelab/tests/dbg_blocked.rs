use drivelab::expert::{ExpertMode, ExpertPilot};
use drivelab::sensing::SensorConfig;
use drivelab::sim::*;
use drivelab::world::*;

#[test]
fn dbg_blocked_long03() {
    let suite: drivelab::bench::Suite =
        drivelab::io::read_json(std::path::Path::new("/tmp/lab/suite_long.json")).unwrap();
    let town = generate_town(suite.town_seed, suite.town_size);
    let graph = build_lane_graph(&town).unwrap();
    let sr = suite.routes.iter().find(|r| r.id == "long-03").unwrap();
    let route = plan_route(&graph, &town, sr.start, sr.goal, ROUTE_SPACING).unwrap();
    let sim = Sim::new(&town);
    let mut pilot = ExpertPilot::new(ExpertMode::Aligned, SensorConfig::mono());
    let config = RolloutConfig {
        route_id: sr.id.clone(),
        seed: 3,
        max_ticks: sr.max_ticks,
        conditions: sr.conditions,
        ambient_vehicles: sr.ambient_vehicles,
    };
    let rollout = run_rollout(&sim, &mut pilot, &route, &sr.scenarios, &config).unwrap();
    println!("termination {:?} at s {:.1}", rollout.log.termination, rollout.log.records.last().unwrap().route_s);
    for t in (420..1070).step_by(40) {
        if t >= rollout.log.records.len() { break; }
        let r = &rollout.log.records[t];
        let w = &rollout.trace[t];
        // nearest actor
        let mut nearest = (0u32, f64::MAX, 0.0);
        for a in &w.actors {
            if a.id == w.ego_id { continue; }
            let d = a.pose.position.dist(r.ego_pose.position);
            if d < nearest.1 { nearest = (a.id, d, a.speed); }
        }
        println!(
            "t{} s{:.1} v{:.2} tgt{:?} {:?} near a{} d{:.1} v{:.1} vis {:?}",
            t, r.route_s, r.ego_speed,
            r.summary.target_speed.map(|v| (v * 10.0).round() / 10.0),
            r.summary.speed_reason,
            nearest.0, nearest.1, nearest.2,
            r.summary.visible_actor_ids
        );
    }
}
