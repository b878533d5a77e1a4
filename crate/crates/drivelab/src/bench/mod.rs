//! Infraction detection, the closed-loop metric suite (RC, IS, DS, I, NDS,
//! SR, infractions per 100 km), benchmark execution, and reports.

mod infractions;
mod report;
mod suite;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use infractions::{
    detect_infractions, goal_fixation_failures, EvalError, InfractionEvent, InfractionKind,
};
pub use report::{compare_reports, render_comparison, Aggregate, CompareError, Metric, Report};
pub use suite::{
    build_benchmarks, run_benchmark, BenchmarkSet, Suite, SuiteError, SuiteRoute,
    SUITE_SCHEMA_VERSION,
};

/// Reference distance for the distance-normalized infraction score, km.
pub const D_REF_KM: f64 = 10.0;

/// Multiplicative IS penalty per infraction kind; factors in (0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenaltyTable {
    pub factors: BTreeMap<InfractionKind, f64>,
}

impl Default for PenaltyTable {
    fn default() -> Self {
        let mut factors = BTreeMap::new();
        factors.insert(InfractionKind::CollisionPedestrian, 0.50);
        factors.insert(InfractionKind::CollisionVehicle, 0.60);
        factors.insert(InfractionKind::CollisionStatic, 0.65);
        factors.insert(InfractionKind::RedLight, 0.70);
        factors.insert(InfractionKind::StopInfraction, 0.80);
        // Off-lane driving, deviations, and blocks already forfeit route
        // completion; they carry no extra multiplicative penalty.
        factors.insert(InfractionKind::OutsideLane, 1.0);
        factors.insert(InfractionKind::RouteDeviation, 1.0);
        factors.insert(InfractionKind::Blocked, 1.0);
        PenaltyTable { factors }
    }
}

impl PenaltyTable {
    pub fn factor(&self, kind: InfractionKind) -> f64 {
        self.factors.get(&kind).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), String> {
        for (k, f) in &self.factors {
            if !(*f > 0.0 && *f <= 1.0) {
                return Err(format!("penalty factor for {k:?} must be in (0,1], got {f}"));
            }
        }
        Ok(())
    }
}

/// Route completion: best on-route progress fraction. Progress only counts
/// while the ego is within the deviation threshold of the route.
pub fn route_completion(
    records: &[crate::sim::TickRecord],
    total_length: f64,
    termination: crate::sim::Termination,
    deviation_threshold: f64,
) -> f64 {
    if termination == crate::sim::Termination::RouteComplete {
        return 1.0;
    }
    if total_length <= 0.0 {
        return 1.0;
    }
    let mut best = 0.0f64;
    for r in records {
        if r.lateral.abs() <= deviation_threshold {
            best = best.max(r.route_s / total_length);
        }
    }
    best.clamp(0.0, 1.0)
}

/// Infraction score: multiplicative penalty starting at 1.0.
pub fn infraction_score(events: &[InfractionEvent], table: &PenaltyTable) -> f64 {
    events.iter().map(|e| table.factor(e.kind)).product()
}

/// Driving score: 100 · RC · IS.
pub fn driving_score(rc: f64, is_: f64) -> f64 {
    100.0 * rc * is_
}

/// Distance-normalized infraction score I = IS^min(1, D_ref/driven) and the
/// normalized driving score NDS = 100 · RC · I. Routes shorter than the
/// reference distance keep I = IS (the exponent clamps at 1).
pub fn normalized_scores(is_: f64, driven_km: f64, rc: f64) -> (f64, f64) {
    let exponent = if driven_km <= D_REF_KM {
        1.0
    } else {
        D_REF_KM / driven_km
    };
    let i = is_.powf(exponent);
    (i, 100.0 * rc * i)
}

/// Full per-route outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouteResult {
    pub route_id: String,
    pub seed: u64,
    pub rc: f64,
    pub is_: f64,
    pub ds: f64,
    pub i: f64,
    pub nds: f64,
    pub success: bool,
    pub driven_km: f64,
    pub termination: Option<crate::sim::Termination>,
    pub events: Vec<InfractionEvent>,
    pub event_counts: BTreeMap<InfractionKind, u32>,
    /// Collisions with decreasing heading-to-TP error (one-TP tracking).
    #[serde(default)]
    pub goal_fixation_one: usize,
    /// Same counter against the three-TP tracking.
    #[serde(default)]
    pub goal_fixation_three: usize,
    /// Set when the rollout itself failed (planning or scenario error).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RouteResult {
    pub fn from_events(
        route_id: String,
        seed: u64,
        rc: f64,
        events: Vec<InfractionEvent>,
        driven_km: f64,
        termination: crate::sim::Termination,
        table: &PenaltyTable,
    ) -> RouteResult {
        let is_ = infraction_score(&events, table);
        let ds = driving_score(rc, is_);
        let (i, nds) = normalized_scores(is_, driven_km, rc);
        let success = rc >= 1.0 && events.is_empty();
        let mut event_counts = BTreeMap::new();
        for e in &events {
            *event_counts.entry(e.kind).or_insert(0) += 1;
        }
        RouteResult {
            route_id,
            seed,
            rc,
            is_,
            ds,
            i,
            nds,
            success,
            driven_km,
            termination: Some(termination),
            events,
            event_counts,
            goal_fixation_one: 0,
            goal_fixation_three: 0,
            error: None,
        }
    }

    pub fn failed(route_id: String, seed: u64, error: String) -> RouteResult {
        RouteResult {
            route_id,
            seed,
            rc: 0.0,
            is_: 1.0,
            ds: 0.0,
            i: 1.0,
            nds: 0.0,
            success: false,
            driven_km: 0.0,
            termination: None,
            events: Vec::new(),
            event_counts: BTreeMap::new(),
            goal_fixation_one: 0,
            goal_fixation_three: 0,
            error: Some(error),
        }
    }
}

/// Fraction of infraction-free completions.
pub fn success_rate(results: &[RouteResult]) -> f64 {
    assert!(!results.is_empty(), "success rate over an empty set");
    results.iter().filter(|r| r.success).count() as f64 / results.len() as f64
}

#[derive(Debug, thiserror::Error)]
#[error("cannot normalize infraction rates over zero driven distance")]
pub struct ZeroDistanceError;

/// Per-kind infraction counts normalized to events per 100 km.
pub fn infractions_per_100km(
    results: &[RouteResult],
) -> Result<BTreeMap<InfractionKind, f64>, ZeroDistanceError> {
    let total_km: f64 = results.iter().map(|r| r.driven_km).sum();
    if total_km <= 0.0 {
        return Err(ZeroDistanceError);
    }
    let mut counts: BTreeMap<InfractionKind, f64> = BTreeMap::new();
    for kind in InfractionKind::ALL {
        counts.insert(kind, 0.0);
    }
    for r in results {
        for (kind, c) in &r.event_counts {
            *counts.entry(*kind).or_insert(0.0) += *c as f64;
        }
    }
    for v in counts.values_mut() {
        *v = 100.0 * *v / total_km;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Vec2;

    fn event(kind: InfractionKind) -> InfractionEvent {
        InfractionEvent {
            kind,
            tick: 0,
            position: Vec2::ZERO,
        }
    }

    #[test]
    fn infraction_score_is_multiplicative() {
        let table = PenaltyTable::default();
        assert_eq!(infraction_score(&[], &table), 1.0);
        let one_ped = [event(InfractionKind::CollisionPedestrian)];
        assert!((infraction_score(&one_ped, &table) - 0.50).abs() < 1e-12);
        let two_veh = [
            event(InfractionKind::CollisionVehicle),
            event(InfractionKind::CollisionVehicle),
        ];
        assert!((infraction_score(&two_veh, &table) - 0.36).abs() < 1e-12);
    }

    #[test]
    fn driving_score_is_the_product() {
        assert_eq!(driving_score(1.0, 1.0), 100.0);
        assert!((driving_score(0.5, 0.8) - 40.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_scores_clamp_short_routes() {
        let (i, nds) = normalized_scores(1.0, 0.5, 0.8);
        assert_eq!(i, 1.0);
        assert!((nds - 80.0).abs() < 1e-12);
        let (i, _) = normalized_scores(0.5, 20.0, 1.0);
        assert!((i - 0.5f64.powf(0.5)).abs() < 1e-9);
        assert!((i - 0.7071067811865476).abs() < 1e-9);
        let (i, _) = normalized_scores(0.5, 5.0, 1.0);
        assert_eq!(i, 0.5);
    }

    #[test]
    fn success_requires_perfection() {
        let table = PenaltyTable::default();
        let clean = RouteResult::from_events(
            "r".into(),
            0,
            1.0,
            vec![],
            0.2,
            crate::sim::Termination::RouteComplete,
            &table,
        );
        assert!(clean.success);
        assert!((clean.ds - 100.0).abs() < 1e-12);
        let red = RouteResult::from_events(
            "r".into(),
            0,
            1.0,
            vec![event(InfractionKind::RedLight)],
            0.2,
            crate::sim::Termination::RouteComplete,
            &table,
        );
        assert!(!red.success, "full completion with a red light still fails");
        assert!(red.ds > 60.0);
        assert!((success_rate(&[clean.clone(), red.clone()]) - 0.5).abs() < 1e-12);
        let results = vec![clean.clone(), clean.clone(), clean, red];
        assert!((success_rate(&results) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn per_100km_rates() {
        let table = PenaltyTable::default();
        let mut r = RouteResult::from_events(
            "r".into(),
            0,
            1.0,
            vec![
                event(InfractionKind::CollisionVehicle),
                event(InfractionKind::CollisionVehicle),
            ],
            4.0,
            crate::sim::Termination::RouteComplete,
            &table,
        );
        r.driven_km = 4.0;
        let rates = infractions_per_100km(std::slice::from_ref(&r)).unwrap();
        assert!((rates[&InfractionKind::CollisionVehicle] - 50.0).abs() < 1e-12);
        assert_eq!(rates[&InfractionKind::RedLight], 0.0);
        assert!(infractions_per_100km(&[RouteResult::failed("x".into(), 0, "e".into())]).is_err());
    }

    #[test]
    fn ds_bounded_by_rc_and_is() {
        for (rc, is_) in [(0.3, 0.9), (1.0, 0.5), (0.7, 1.0)] {
            let ds = driving_score(rc, is_);
            assert!(ds <= 100.0 * rc + 1e-12);
            assert!(ds <= 100.0 * is_ + 1e-12);
        }
    }

    #[test]
    fn removing_events_never_lowers_scores() {
        let table = PenaltyTable::default();
        let events = vec![
            event(InfractionKind::CollisionPedestrian),
            event(InfractionKind::RedLight),
            event(InfractionKind::CollisionStatic),
        ];
        for drop_idx in 0..events.len() {
            let mut fewer = events.clone();
            fewer.remove(drop_idx);
            let full = infraction_score(&events, &table);
            let reduced = infraction_score(&fewer, &table);
            assert!(reduced >= full);
        }
    }
}
