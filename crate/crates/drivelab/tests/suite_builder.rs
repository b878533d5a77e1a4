//! The benchmark-family generator: determinism, disjointness, and scenario
//! coverage of the emitted suites.

use drivelab::bench::{build_benchmarks, SuiteError};
use drivelab::sim::ScenarioKind;

#[test]
fn benchmark_set_is_deterministic_and_covered() {
    let set = build_benchmarks(&[21], &[121], 9).expect("benchmarks build");
    let set2 = build_benchmarks(&[21], &[121], 9).expect("benchmarks build");
    assert_eq!(
        serde_json::to_string(&set).unwrap(),
        serde_json::to_string(&set2).unwrap()
    );

    assert_eq!(set.short.routes.len(), 12);
    assert_eq!(set.long.routes.len(), 8);
    assert_eq!(set.lane_change.routes.len(), 7);
    assert!(set.train.routes.len() >= 10);
    assert!(set.held_out.routes.len() >= 5);
    assert_ne!(set.train.town_seed, set.held_out.town_seed);

    // Every lane-change route carries its blocker scenario.
    for r in &set.lane_change.routes {
        assert!(r
            .scenarios
            .iter()
            .any(|s| s.kind == ScenarioKind::LaneChangeRequired));
    }
    // The mixed suites cover the hazard kinds that drive the asymmetry study.
    let kinds_in = |suite: &drivelab::bench::Suite| -> Vec<ScenarioKind> {
        let mut v: Vec<ScenarioKind> = suite
            .routes
            .iter()
            .flat_map(|r| r.scenarios.iter().map(|s| s.kind))
            .collect();
        v.sort_by_key(|k| format!("{k:?}"));
        v.dedup();
        v
    };
    let train_kinds = kinds_in(&set.train);
    assert!(train_kinds.contains(&ScenarioKind::OccludedPedestrianCross));
    assert!(train_kinds.contains(&ScenarioKind::LaneChangeRequired));
    assert!(train_kinds.contains(&ScenarioKind::LeadVehicleBrake));
    let long_kinds = kinds_in(&set.long);
    assert!(long_kinds.contains(&ScenarioKind::OccludedPedestrianCross));

    // Night and rain routes appear.
    use drivelab::sim::{Rain, TimeOfDay};
    assert!(set
        .long
        .routes
        .iter()
        .any(|r| r.conditions.time_of_day == TimeOfDay::Night));
    assert!(set
        .train
        .routes
        .iter()
        .any(|r| r.conditions.rain == Rain::Heavy));
}

#[test]
fn heldout_overlap_is_rejected() {
    match build_benchmarks(&[1, 2, 3], &[2], 0) {
        Err(SuiteError::SeedOverlap(2)) => {}
        other => panic!("expected seed-overlap error, got {other:?}"),
    }
}
