//! Benchmark suites: route + scenario definitions, deterministic suite
//! generation, and the (optionally parallel) benchmark runner.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::io::json_hash;
use crate::rng::stream;
use crate::sensing::TpMode;
use crate::sim::{
    generate_town, run_rollout, Conditions, Pilot, Rain, RolloutConfig, ScenarioKind,
    ScenarioSpec, Sim, TimeOfDay, TownSize,
};
use crate::world::{
    build_lane_graph, plan_route, DenseRoute, LaneGraph, LaneId, MapSpec, PlannedRoute, Pose,
    ROUTE_SPACING,
};

use super::report::{aggregate_results, Report, REPORT_SCHEMA_VERSION};
use super::{detect_infractions, goal_fixation_failures, route_completion, PenaltyTable, RouteResult};

pub const SUITE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRoute {
    pub id: String,
    pub start: Pose,
    pub goal: Pose,
    pub conditions: Conditions,
    pub ambient_vehicles: u32,
    pub max_ticks: u64,
    pub scenarios: Vec<ScenarioSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Suite {
    pub schema_version: u32,
    pub name: String,
    pub town_seed: u64,
    pub town_size: TownSize,
    /// Sensor preset for the student observation and the aligned expert.
    pub sensor_preset: String,
    /// When set, evaluated policies must match this TP mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub student_tp_mode: Option<TpMode>,
    pub eval_seeds: Vec<u64>,
    pub routes: Vec<SuiteRoute>,
}

impl Suite {
    /// Identity hash used to refuse cross-suite comparisons.
    pub fn hash(&self) -> String {
        json_hash(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error("town seed {0} appears in both the train and held-out sets")]
    SeedOverlap(u64),
    #[error("could not construct {what} on town seed {seed} (layout too sparse)")]
    Construction { what: &'static str, seed: u64 },
    #[error("unsupported suite schema version {0} (expected {SUITE_SCHEMA_VERSION})")]
    SchemaVersion(u32),
}

/// The benchmark family the generator emits: collection routes plus the
/// short, long, lane-change, and held-out-town evaluation suites.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub train: Suite,
    pub short: Suite,
    pub long: Suite,
    pub lane_change: Suite,
    pub held_out: Suite,
}

struct TownCtx {
    map: MapSpec,
    graph: LaneGraph,
    seed: u64,
}

impl TownCtx {
    fn new(seed: u64) -> TownCtx {
        let map = generate_town(seed, TownSize::Large);
        let graph = build_lane_graph(&map).expect("generated towns validate");
        TownCtx { map, graph, seed }
    }
}

/// Builds the whole benchmark family. Deterministic in the seed arguments.
///
/// Train, short, long, and lane-change suites live on the first train town;
/// the held-out suite lives on a town whose seed never appears in the train
/// set (the unseen-town protocol).
pub fn build_benchmarks(
    train_seeds: &[u64],
    heldout_seeds: &[u64],
    rng_seed: u64,
) -> Result<BenchmarkSet, SuiteError> {
    for h in heldout_seeds {
        if train_seeds.contains(h) {
            return Err(SuiteError::SeedOverlap(*h));
        }
    }
    let train_town = TownCtx::new(*train_seeds.first().expect("at least one train seed"));
    let heldout_town = TownCtx::new(*heldout_seeds.first().expect("at least one held-out seed"));

    let train = build_mixed_suite(&train_town, "train", rng_seed, 12, 260.0, 600.0, 3, true)?;
    let short = build_short_suite(&train_town, rng_seed)?;
    let long = build_mixed_suite(&train_town, "long", rng_seed, 8, 650.0, 1000.0, 4, false)?;
    let lane_change = build_lane_change_suite(&train_town, "lane_change", rng_seed, 7)?;
    let held_out = build_mixed_suite(&heldout_town, "held_out", rng_seed, 6, 300.0, 600.0, 3, false)?;
    Ok(BenchmarkSet {
        train,
        short,
        long,
        lane_change,
        held_out,
    })
}

fn suite_shell(town: &TownCtx, name: &str) -> Suite {
    Suite {
        schema_version: SUITE_SCHEMA_VERSION,
        name: name.to_string(),
        town_seed: town.seed,
        town_size: TownSize::Large,
        sensor_preset: "mono".into(),
        student_tp_mode: None,
        eval_seeds: vec![1, 2, 3],
        routes: Vec::new(),
    }
}

fn route_conditions(kth: usize) -> Conditions {
    // Mostly clear days with periodic night and heavy-rain routes.
    match kth % 6 {
        4 => Conditions {
            time_of_day: TimeOfDay::Night,
            rain: Rain::None,
        },
        5 => Conditions {
            time_of_day: TimeOfDay::Day,
            rain: Rain::Heavy,
        },
        _ => Conditions::default(),
    }
}

fn max_ticks_for(len: f64) -> u64 {
    (((len / 2.0) + 120.0) * 20.0) as u64
}

/// Random start/goal pair whose planned route length lies in bounds.
fn random_route(
    town: &TownCtx,
    rng: &mut rand_chacha::ChaCha12Rng,
    min_len: f64,
    max_len: f64,
) -> Option<PlannedRoute> {
    let road_lanes: Vec<&crate::world::LaneSpec> = town
        .map
        .lanes
        .iter()
        .filter(|l| town.map.junction_of_lane(l.id).is_none() && l.length() >= 12.0)
        .collect();
    if road_lanes.is_empty() {
        return None;
    }
    for _ in 0..60 {
        let a = road_lanes[rng.gen_range(0..road_lanes.len())];
        let b = road_lanes[rng.gen_range(0..road_lanes.len())];
        let sa = rng.gen_range(2.0..a.length() - 2.0);
        let sb = rng.gen_range(2.0..b.length() - 2.0);
        let start = Pose {
            position: a.point_at(sa),
            yaw: a.direction_at(sa).angle(),
        };
        let goal = Pose {
            position: b.point_at(sb),
            yaw: b.direction_at(sb).angle(),
        };
        if let Ok(route) = plan_route(&town.graph, &town.map, start, goal, ROUTE_SPACING) {
            if route.dense.total_length >= min_len && route.dense.total_length <= max_len {
                return Some(route);
            }
        }
    }
    None
}

/// Arc positions where the route is straight, away from junctions and ends.
fn straight_anchors(town: &TownCtx, route: &DenseRoute) -> Vec<f64> {
    let mut anchors = Vec::new();
    let mut s = 50.0;
    while s + 25.0 < route.total_length {
        let d0 = route.direction_at(s - 35.0_f64.min(s));
        let d1 = route.direction_at(s + 10.0);
        let straight = d0.dot(d1) > 0.996; // < ~5 degrees
        let near_junction = [-30.0, -15.0, 0.0, 10.0].iter().any(|off| {
            let lane = route.lane_at((s + off).clamp(0.0, route.total_length));
            town.map.junction_of_lane(lane).is_some()
        });
        if straight && !near_junction {
            anchors.push(s);
        }
        s += 10.0;
    }
    anchors
}

/// Route arc position of the first signalized stop line at s >= from.
fn signalized_line_on_route(town: &TownCtx, route: &DenseRoute, from: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for sl in &town.map.stop_lines {
        if sl.light_id.is_none() {
            continue;
        }
        let pos = town.map.stop_line_position(sl);
        let (s, lat) = crate::world::project_onto_route(route, pos);
        if lat.abs() <= 2.5 && s >= from && s < route.total_length - 10.0 {
            best = Some(best.map_or(s, |b: f64| b.min(s)));
        }
    }
    best
}

/// Points where the dense route hops between neighbor lanes. A hop at a
/// chunk boundary shows up as `previous chunk -> neighbor of its successor`,
/// so both forms are detected.
pub fn route_lane_change_points(map: &MapSpec, route: &DenseRoute) -> Vec<(f64, LaneId, LaneId)> {
    let neighbors = |id: LaneId| -> Vec<LaneId> {
        map.lane(id)
            .map(|l| l.left_neighbor.into_iter().chain(l.right_neighbor).collect())
            .unwrap_or_default()
    };
    let mut out = Vec::new();
    for i in 0..route.lane_ids.len().saturating_sub(1) {
        let (a, b) = (route.lane_ids[i], route.lane_ids[i + 1]);
        if a == b {
            continue;
        }
        let direct = neighbors(a).contains(&b);
        let via_boundary = map
            .lane(a)
            .map(|l| l.successors.iter().any(|s| neighbors(*s).contains(&b)))
            .unwrap_or(false);
        if direct || via_boundary {
            out.push((route.cum_s[i + 1], a, b));
        }
    }
    out
}

/// Attaches scenarios of the requested kinds at legal anchors. Returns the
/// specs actually placed (kinds without an anchor are skipped).
fn place_scenarios(
    town: &TownCtx,
    route: &PlannedRoute,
    kinds: &[ScenarioKind],
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Vec<ScenarioSpec> {
    let mut specs: Vec<ScenarioSpec> = Vec::new();
    let mut used: Vec<f64> = Vec::new();
    let anchors = straight_anchors(town, &route.dense);
    let anchor_free = |used: &[f64], anchors: &[f64], lo: f64| -> Option<f64> {
        anchors
            .iter()
            .copied()
            .find(|s| *s >= lo && used.iter().all(|u| (u - s).abs() >= 80.0))
    };
    for kind in kinds {
        let spec = match kind {
            ScenarioKind::LeadVehicleBrake => {
                anchor_free(&used, &anchors, 60.0).map(|s| ScenarioSpec {
                    kind: *kind,
                    trigger_s: s,
                    speed: Some(5.5),
                    offset: None,
                    trigger_distance: Some(25.0),
                    seed: rng.gen(),
                })
            }
            ScenarioKind::OccludedPedestrianCross => {
                anchor_free(&used, &anchors, 60.0).map(|s| ScenarioSpec {
                    kind: *kind,
                    trigger_s: s,
                    speed: Some(1.5),
                    offset: None,
                    trigger_distance: Some(22.0),
                    seed: rng.gen(),
                })
            }
            ScenarioKind::UnprotectedLeft => {
                crate::sim::scenario::find_left_turn_connector(&town.map, &route.dense, 40.0)
                    .and_then(|connector| {
                        // Only junctions that actually assign priority.
                        let junction = town.map.junction_of_lane(connector)?;
                        junction.priorities.iter().find(|p| p.lane == connector)?;
                        let mut s = 40.0;
                        while s < route.dense.total_length {
                            if route.dense.lane_at(s) == connector {
                                break;
                            }
                            s += 2.0;
                        }
                        if s >= route.dense.total_length {
                            return None;
                        }
                        Some(ScenarioSpec {
                            kind: *kind,
                            trigger_s: (s - 10.0).max(0.0),
                            speed: Some(6.5),
                            offset: None,
                            trigger_distance: Some(35.0),
                            seed: rng.gen(),
                        })
                    })
            }
            ScenarioKind::RedLight => {
                signalized_line_on_route(town, &route.dense, 50.0).map(|s_line| ScenarioSpec {
                    kind: *kind,
                    trigger_s: (s_line - 35.0).max(0.0),
                    speed: None,
                    offset: None,
                    trigger_distance: None,
                    seed: rng.gen(),
                })
            }
            ScenarioKind::LaneChangeRequired => {
                route_lane_change_points(&town.map, &route.dense)
                    .into_iter()
                    .find(|(s, _, _)| *s > 5.0 && *s + 33.0 < route.dense.total_length)
                    .map(|(s, _, _)| ScenarioSpec {
                        kind: *kind,
                        trigger_s: s + 25.0,
                        speed: None,
                        offset: None,
                        trigger_distance: None,
                        seed: rng.gen(),
                    })
            }
            ScenarioKind::RearJaywalker => Some(ScenarioSpec {
                kind: *kind,
                trigger_s: 0.0,
                speed: Some(1.2),
                offset: Some(6.0),
                trigger_distance: None,
                seed: rng.gen(),
            }),
        };
        if let Some(spec) = spec {
            if spec.trigger_s >= 0.0 && spec.trigger_s <= route.dense.total_length {
                used.push(spec.trigger_s);
                specs.push(spec);
            }
        }
    }
    specs.sort_by(|a, b| a.trigger_s.partial_cmp(&b.trigger_s).unwrap());
    specs
}

const MIXED_KINDS: [ScenarioKind; 6] = [
    ScenarioKind::OccludedPedestrianCross,
    ScenarioKind::LeadVehicleBrake,
    ScenarioKind::UnprotectedLeft,
    ScenarioKind::RedLight,
    ScenarioKind::RearJaywalker,
    ScenarioKind::LaneChangeRequired,
];

fn build_mixed_suite(
    town: &TownCtx,
    name: &str,
    rng_seed: u64,
    n_routes: usize,
    min_len: f64,
    max_len: f64,
    scenarios_per_route: usize,
    include_lane_changes: bool,
) -> Result<Suite, SuiteError> {
    let mut rng = stream(rng_seed, &format!("suite-{name}-{}", town.seed));
    let mut suite = suite_shell(town, name);
    let mut k = 0usize;
    let mut guard = 0usize;
    while suite.routes.len() < n_routes {
        guard += 1;
        if guard > n_routes * 30 {
            return Err(SuiteError::Construction {
                what: "enough mixed routes",
                seed: town.seed,
            });
        }
        // A share of routes are engineered lane-change routes so that the
        // demonstrations cover the maneuver.
        let want_lane_change = include_laned(include_lane_changes, suite.routes.len());
        let (route, mut kinds): (PlannedRoute, Vec<ScenarioKind>) = if want_lane_change {
            match lane_change_route(town, &mut rng) {
                Some(r) => (r, vec![ScenarioKind::LaneChangeRequired]),
                None => continue,
            }
        } else {
            let Some(r) = random_route(town, &mut rng, min_len, max_len) else {
                continue;
            };
            let mut kinds = Vec::new();
            for j in 0..scenarios_per_route {
                kinds.push(MIXED_KINDS[(k + j) % MIXED_KINDS.len()]);
            }
            (r, kinds)
        };
        kinds.dedup();
        let scenarios = place_scenarios(town, &route, &kinds, &mut rng);
        if !want_lane_change && scenarios.is_empty() {
            continue;
        }
        if want_lane_change && scenarios.is_empty() {
            continue;
        }
        let idx = suite.routes.len();
        suite.routes.push(SuiteRoute {
            id: format!("{name}-{idx:02}"),
            start: Pose {
                position: route.dense.point_at(0.0),
                yaw: route.dense.direction_at(0.0).angle(),
            },
            goal: Pose {
                position: route.dense.point_at(route.dense.total_length),
                yaw: route
                    .dense
                    .direction_at(route.dense.total_length)
                    .angle(),
            },
            conditions: route_conditions(idx),
            ambient_vehicles: 3,
            max_ticks: max_ticks_for(route.dense.total_length),
            scenarios,
        });
        k += scenarios_per_route;
    }
    Ok(suite)
}

fn include_laned(enabled: bool, idx: usize) -> bool {
    enabled && idx % 4 == 3
}

fn build_short_suite(town: &TownCtx, rng_seed: u64) -> Result<Suite, SuiteError> {
    let mut rng = stream(rng_seed, &format!("suite-short-{}", town.seed));
    let mut suite = suite_shell(town, "short");
    let per_kind = [
        ScenarioKind::LeadVehicleBrake,
        ScenarioKind::OccludedPedestrianCross,
        ScenarioKind::RedLight,
        ScenarioKind::RearJaywalker,
        ScenarioKind::UnprotectedLeft,
        ScenarioKind::LeadVehicleBrake,
        ScenarioKind::OccludedPedestrianCross,
        ScenarioKind::RedLight,
        ScenarioKind::RearJaywalker,
        ScenarioKind::UnprotectedLeft,
        ScenarioKind::OccludedPedestrianCross,
        ScenarioKind::LeadVehicleBrake,
    ];
    let mut guard = 0;
    while suite.routes.len() < per_kind.len() {
        guard += 1;
        if guard > 400 {
            return Err(SuiteError::Construction {
                what: "enough short routes",
                seed: town.seed,
            });
        }
        let kind = per_kind[suite.routes.len()];
        let Some(route) = random_route(town, &mut rng, 130.0, 220.0) else {
            continue;
        };
        let scenarios = place_scenarios(town, &route, &[kind], &mut rng);
        if scenarios.is_empty() {
            continue;
        }
        let idx = suite.routes.len();
        suite.routes.push(SuiteRoute {
            id: format!("short-{idx:02}"),
            start: Pose {
                position: route.dense.point_at(0.0),
                yaw: route.dense.direction_at(0.0).angle(),
            },
            goal: Pose {
                position: route.dense.point_at(route.dense.total_length),
                yaw: route
                    .dense
                    .direction_at(route.dense.total_length)
                    .angle(),
            },
            conditions: route_conditions(idx),
            ambient_vehicles: 2,
            max_ticks: max_ticks_for(route.dense.total_length),
            scenarios,
        });
    }
    Ok(suite)
}

/// A usable blocker anchor: a lane change early enough that the blocker and
/// a short tail still fit on the route.
fn lane_change_fits(map: &MapSpec, route: &PlannedRoute) -> bool {
    route_lane_change_points(map, &route.dense)
        .iter()
        .any(|(s, _, _)| *s > 5.0 && *s + 33.0 < route.dense.total_length)
}

/// A start on a multi-lane road whose goal lies down the neighbor chain
/// (often past a junction), so the planned route must change lanes.
fn lane_change_route(
    town: &TownCtx,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> Option<PlannedRoute> {
    let candidates: Vec<&crate::world::LaneSpec> = town
        .map
        .lanes
        .iter()
        .filter(|l| {
            town.map.junction_of_lane(l.id).is_none()
                && l.right_neighbor.is_some()
                && l.length() >= 20.0
        })
        .collect();
    if candidates.is_empty() {
        return None;
    }
    for _ in 0..120 {
        let a = candidates[rng.gen_range(0..candidates.len())];
        let neighbor = a.right_neighbor.expect("filtered");
        // Wander down the neighbor's successor chain, through junctions.
        let mut cur = neighbor;
        for _ in 0..rng.gen_range(3..8usize) {
            let Some(lane) = town.map.lane(cur) else { break };
            let mut succ = lane.successors.clone();
            succ.sort_unstable();
            if succ.is_empty() {
                break;
            }
            cur = succ[rng.gen_range(0..succ.len())];
        }
        // Land on a road lane, not inside a junction.
        if town.map.junction_of_lane(cur).is_some() {
            match town.map.lane(cur).and_then(|l| l.successors.first().copied()) {
                Some(n) => cur = n,
                None => continue,
            }
        }
        let Some(goal_lane) = town.map.lane(cur) else {
            continue;
        };
        if goal_lane.length() < 12.0 || goal_lane.id == a.id {
            continue;
        }
        let sa = rng.gen_range(2.0..(a.length() - 6.0).max(3.0));
        let start = Pose {
            position: a.point_at(sa),
            yaw: a.direction_at(sa).angle(),
        };
        let sg = goal_lane.length() - 4.0;
        let goal = Pose {
            position: goal_lane.point_at(sg),
            yaw: goal_lane.direction_at(sg).angle(),
        };
        if let Ok(route) = plan_route(&town.graph, &town.map, start, goal, ROUTE_SPACING) {
            if route.dense.total_length >= 90.0
                && route.dense.total_length <= 450.0
                && lane_change_fits(&town.map, &route)
            {
                return Some(route);
            }
        }
    }
    None
}

fn build_lane_change_suite(
    town: &TownCtx,
    name: &str,
    rng_seed: u64,
    n_routes: usize,
) -> Result<Suite, SuiteError> {
    let mut rng = stream(rng_seed, &format!("suite-{name}-{}", town.seed));
    let mut suite = suite_shell(town, name);
    let mut guard = 0;
    while suite.routes.len() < n_routes {
        guard += 1;
        if guard > 500 {
            return Err(SuiteError::Construction {
                what: "enough lane-change routes",
                seed: town.seed,
            });
        }
        let Some(route) = lane_change_route(town, &mut rng) else {
            continue;
        };
        let scenarios = place_scenarios(
            town,
            &route,
            &[ScenarioKind::LaneChangeRequired],
            &mut rng,
        );
        if scenarios.is_empty() {
            continue;
        }
        let idx = suite.routes.len();
        suite.routes.push(SuiteRoute {
            id: format!("{name}-{idx:02}"),
            start: Pose {
                position: route.dense.point_at(0.0),
                yaw: route.dense.direction_at(0.0).angle(),
            },
            goal: Pose {
                position: route.dense.point_at(route.dense.total_length),
                yaw: route
                    .dense
                    .direction_at(route.dense.total_length)
                    .angle(),
            },
            conditions: Conditions::default(),
            ambient_vehicles: 1,
            max_ticks: max_ticks_for(route.dense.total_length),
            scenarios,
        });
    }
    Ok(suite)
}

/// Runs every (route × seed) of a suite and aggregates the report.
///
/// `make_pilot` builds a fresh pilot per rollout, so rollouts stay
/// independent under parallel execution. Rollout failures are recorded in
/// the corresponding row and the suite continues.
pub fn run_benchmark(
    make_pilot: &(dyn Fn() -> Box<dyn Pilot> + Sync),
    agent_name: &str,
    suite: &Suite,
    map: &MapSpec,
    seeds: &[u64],
    jobs: usize,
) -> Report {
    let graph = build_lane_graph(map).expect("suite town validates");
    let table = PenaltyTable::default();
    let tasks: Vec<(u64, &SuiteRoute)> = seeds
        .iter()
        .flat_map(|s| suite.routes.iter().map(move |r| (*s, r)))
        .collect();

    let run_one = |(seed, sr): &(u64, &SuiteRoute)| -> RouteResult {
        let sim = Sim::new(map);
        let route = match plan_route(&graph, map, sr.start, sr.goal, ROUTE_SPACING) {
            Ok(r) => r,
            Err(e) => return RouteResult::failed(sr.id.clone(), *seed, e.to_string()),
        };
        let config = RolloutConfig {
            route_id: sr.id.clone(),
            seed: *seed,
            max_ticks: sr.max_ticks,
            conditions: sr.conditions,
            ambient_vehicles: sr.ambient_vehicles,
        };
        let mut pilot = make_pilot();
        let rollout = match run_rollout(&sim, pilot.as_mut(), &route, &sr.scenarios, &config) {
            Ok(r) => r,
            Err(e) => return RouteResult::failed(sr.id.clone(), *seed, e.to_string()),
        };
        let events = match detect_infractions(&rollout, map, &route.dense, &sim.params) {
            Ok(ev) => ev,
            Err(e) => return RouteResult::failed(sr.id.clone(), *seed, e.to_string()),
        };
        let rc = route_completion(
            &rollout.log.records,
            route.dense.total_length,
            rollout.log.termination,
            sim.params.deviation_threshold,
        );
        let mut result = RouteResult::from_events(
            sr.id.clone(),
            *seed,
            rc,
            events,
            rollout.driven_km(),
            rollout.log.termination,
            &table,
        );
        result.goal_fixation_one = goal_fixation_failures(&rollout, &result.events, true);
        result.goal_fixation_three = goal_fixation_failures(&rollout, &result.events, false);
        result
    };

    let rows: Vec<RouteResult> = if jobs <= 1 {
        tasks.iter().map(run_one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool");
        pool.install(|| tasks.par_iter().map(run_one).collect())
    };

    let aggregate = aggregate_results(&rows, seeds);
    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        suite_name: suite.name.clone(),
        suite_hash: suite.hash(),
        agent: agent_name.to_string(),
        seeds: seeds.to_vec(),
        rows,
        aggregate,
    }
}

