//! Report aggregation, CSV rendering, and cross-report comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{InfractionKind, RouteResult};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Metric {
    pub mean: f64,
    pub std: f64,
}

impl Metric {
    fn from_values(values: &[f64]) -> Metric {
        if values.is_empty() {
            return Metric { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let std = if values.len() < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (values.len() - 1) as f64;
            var.sqrt()
        };
        Metric { mean, std }
    }
}

/// Mean ± std over evaluation seeds, where each seed's value is the mean
/// over the suite's routes (rates are pooled per seed over driven distance).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub ds: Metric,
    pub rc: Metric,
    pub is_: Metric,
    pub i: Metric,
    pub nds: Metric,
    pub sr: Metric,
    pub infractions_per_100km: BTreeMap<InfractionKind, Metric>,
    pub collisions_per_100km: Metric,
    pub total_driven_km: f64,
    pub goal_fixation_one_total: usize,
    pub goal_fixation_three_total: usize,
    pub per_seed_ds: Vec<f64>,
}

pub fn aggregate_results(rows: &[RouteResult], seeds: &[u64]) -> Aggregate {
    let by_seed = |f: &dyn Fn(&RouteResult) -> f64| -> Vec<f64> {
        seeds
            .iter()
            .map(|s| {
                let vals: Vec<f64> = rows.iter().filter(|r| r.seed == *s).map(f).collect();
                if vals.is_empty() {
                    0.0
                } else {
                    vals.iter().sum::<f64>() / vals.len() as f64
                }
            })
            .collect()
    };
    let per_seed_ds = by_seed(&|r| r.ds);
    let mut per_kind: BTreeMap<InfractionKind, Metric> = BTreeMap::new();
    let mut per_seed_collisions: Vec<f64> = Vec::new();
    let mut kind_values: BTreeMap<InfractionKind, Vec<f64>> = BTreeMap::new();
    for seed in seeds {
        let seed_rows: Vec<&RouteResult> = rows.iter().filter(|r| r.seed == *seed).collect();
        let km: f64 = seed_rows.iter().map(|r| r.driven_km).sum();
        let mut collisions = 0.0;
        for kind in InfractionKind::ALL {
            let count: u32 = seed_rows
                .iter()
                .map(|r| r.event_counts.get(&kind).copied().unwrap_or(0))
                .sum();
            let rate = if km > 0.0 {
                100.0 * count as f64 / km
            } else {
                0.0
            };
            kind_values.entry(kind).or_default().push(rate);
            if matches!(
                kind,
                InfractionKind::CollisionPedestrian
                    | InfractionKind::CollisionVehicle
                    | InfractionKind::CollisionStatic
            ) {
                collisions += rate;
            }
        }
        per_seed_collisions.push(collisions);
    }
    for (kind, values) in kind_values {
        per_kind.insert(kind, Metric::from_values(&values));
    }
    Aggregate {
        ds: Metric::from_values(&per_seed_ds),
        rc: Metric::from_values(&by_seed(&|r| r.rc)),
        is_: Metric::from_values(&by_seed(&|r| r.is_)),
        i: Metric::from_values(&by_seed(&|r| r.i)),
        nds: Metric::from_values(&by_seed(&|r| r.nds)),
        sr: Metric::from_values(&by_seed(&|r| if r.success { 1.0 } else { 0.0 })),
        infractions_per_100km: per_kind,
        collisions_per_100km: Metric::from_values(&per_seed_collisions),
        total_driven_km: rows.iter().map(|r| r.driven_km).sum(),
        goal_fixation_one_total: rows.iter().map(|r| r.goal_fixation_one).sum(),
        goal_fixation_three_total: rows.iter().map(|r| r.goal_fixation_three).sum(),
        per_seed_ds,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub suite_name: String,
    pub suite_hash: String,
    pub agent: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<RouteResult>,
    pub aggregate: Aggregate,
}

impl Report {
    /// Per-route CSV with a fixed column order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "route_id,seed,rc,is,ds,i,nds,success,driven_km,ped,veh,stat,ol,red,dev,si,block,error\n",
        );
        for r in &self.rows {
            let count = |k: InfractionKind| r.event_counts.get(&k).copied().unwrap_or(0);
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.4},{:.6},{:.4},{},{:.5},{},{},{},{},{},{},{},{},{}\n",
                r.route_id,
                r.seed,
                r.rc,
                r.is_,
                r.ds,
                r.i,
                r.nds,
                r.success,
                r.driven_km,
                count(InfractionKind::CollisionPedestrian),
                count(InfractionKind::CollisionVehicle),
                count(InfractionKind::CollisionStatic),
                count(InfractionKind::OutsideLane),
                count(InfractionKind::RedLight),
                count(InfractionKind::RouteDeviation),
                count(InfractionKind::StopInfraction),
                count(InfractionKind::Blocked),
                r.error.clone().unwrap_or_default(),
            ));
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("need at least two reports to compare")]
    TooFew,
    #[error("reports cover different suites: {0} vs {1}")]
    SuiteMismatch(String, String),
}

/// Side-by-side metric table with deltas against the first report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub suite_name: String,
    pub suite_hash: String,
    pub agents: Vec<String>,
    /// metric name -> per-agent (mean, std), first agent is the baseline.
    pub metrics: Vec<(String, Vec<Metric>)>,
}

pub fn compare_reports(reports: &[&Report]) -> Result<Comparison, CompareError> {
    if reports.len() < 2 {
        return Err(CompareError::TooFew);
    }
    let hash = &reports[0].suite_hash;
    for r in reports.iter().skip(1) {
        if &r.suite_hash != hash {
            return Err(CompareError::SuiteMismatch(
                reports[0].suite_name.clone(),
                r.suite_name.clone(),
            ));
        }
    }
    let mut metrics: Vec<(String, Vec<Metric>)> = Vec::new();
    let pick = |name: &str, f: &dyn Fn(&Aggregate) -> Metric| {
        (
            name.to_string(),
            reports.iter().map(|r| f(&r.aggregate)).collect::<Vec<_>>(),
        )
    };
    metrics.push(pick("DS", &|a| a.ds));
    metrics.push(pick("RC", &|a| a.rc));
    metrics.push(pick("IS", &|a| a.is_));
    metrics.push(pick("I", &|a| a.i));
    metrics.push(pick("NDS", &|a| a.nds));
    metrics.push(pick("SR", &|a| a.sr));
    metrics.push(pick("Coll/100km", &|a| a.collisions_per_100km));
    for kind in InfractionKind::ALL {
        metrics.push((
            format!("{}/100km", kind.label()),
            reports
                .iter()
                .map(|r| {
                    r.aggregate
                        .infractions_per_100km
                        .get(&kind)
                        .copied()
                        .unwrap_or(Metric { mean: 0.0, std: 0.0 })
                })
                .collect(),
        ));
    }
    Ok(Comparison {
        suite_name: reports[0].suite_name.clone(),
        suite_hash: hash.clone(),
        agents: reports.iter().map(|r| r.agent.clone()).collect(),
        metrics,
    })
}

/// Renders the comparison as (csv, aligned text).
pub fn render_comparison(cmp: &Comparison) -> (String, String) {
    let mut csv = String::from("metric");
    for a in &cmp.agents {
        csv.push_str(&format!(",{a}_mean,{a}_std"));
    }
    for a in cmp.agents.iter().skip(1) {
        csv.push_str(&format!(",delta_{a}"));
    }
    csv.push('\n');
    for (name, vals) in &cmp.metrics {
        csv.push_str(name);
        for m in vals {
            csv.push_str(&format!(",{:.4},{:.4}", m.mean, m.std));
        }
        for m in vals.iter().skip(1) {
            csv.push_str(&format!(",{:.4}", m.mean - vals[0].mean));
        }
        csv.push('\n');
    }

    let mut text = format!("suite: {} ({})\n", cmp.suite_name, cmp.suite_hash);
    text.push_str(&format!("{:<12}", "metric"));
    for a in &cmp.agents {
        text.push_str(&format!("{:>24}", a));
    }
    for a in cmp.agents.iter().skip(1) {
        text.push_str(&format!("{:>12}", format!("d({a})")));
    }
    text.push('\n');
    for (name, vals) in &cmp.metrics {
        text.push_str(&format!("{:<12}", name));
        for m in vals {
            text.push_str(&format!("{:>24}", format!("{:.2} ± {:.2}", m.mean, m.std)));
        }
        for m in vals.iter().skip(1) {
            text.push_str(&format!("{:>12}", format!("{:+.2}", m.mean - vals[0].mean)));
        }
        text.push('\n');
    }
    (csv, text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::PenaltyTable;
    use crate::sim::Termination;

    fn result(id: &str, seed: u64, rc: f64, km: f64) -> RouteResult {
        RouteResult::from_events(
            id.into(),
            seed,
            rc,
            vec![],
            km,
            Termination::RouteComplete,
            &PenaltyTable::default(),
        )
    }

    #[test]
    fn aggregate_means_match_hand_computation() {
        let rows = vec![
            result("a", 1, 1.0, 0.5),
            result("b", 1, 0.5, 0.2),
            result("a", 2, 0.8, 0.4),
            result("b", 2, 0.6, 0.3),
        ];
        let agg = aggregate_results(&rows, &[1, 2]);
        // Seed 1 mean DS = (100 + 50)/2 = 75; seed 2 = (80 + 60)/2 = 70.
        assert!((agg.ds.mean - 72.5).abs() < 1e-9);
        assert!((agg.per_seed_ds[0] - 75.0).abs() < 1e-9);
        let expected_std = ((75.0f64 - 72.5).powi(2) + (70.0f64 - 72.5).powi(2)).sqrt();
        assert!((agg.ds.std - expected_std).abs() < 1e-9);
        assert!((agg.total_driven_km - 1.4).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let rows = vec![
            result("a", 1, 1.0, 0.5),
            result("b", 1, 0.5, 0.2),
            result("c", 1, 0.25, 0.1),
        ];
        let mut rev = rows.clone();
        rev.reverse();
        let a1 = aggregate_results(&rows, &[1]);
        let a2 = aggregate_results(&rev, &[1]);
        assert_eq!(a1.ds.mean, a2.ds.mean);
        assert_eq!(a1.sr.mean, a2.sr.mean);
    }

    #[test]
    fn comparison_rejects_suite_mismatch() {
        let rows = vec![result("a", 1, 1.0, 0.5)];
        let agg = aggregate_results(&rows, &[1]);
        let mk = |hash: &str, agent: &str| Report {
            schema_version: REPORT_SCHEMA_VERSION,
            suite_name: "s".into(),
            suite_hash: hash.into(),
            agent: agent.into(),
            seeds: vec![1],
            rows: rows.clone(),
            aggregate: agg.clone(),
        };
        let a = mk("h1", "x");
        let b = mk("h2", "y");
        assert!(compare_reports(&[&a, &b]).is_err());
        let c = mk("h1", "y");
        let cmp = compare_reports(&[&a, &c]).unwrap();
        let (csv, text) = render_comparison(&cmp);
        assert!(csv.contains("delta_y"));
        assert!(text.contains("DS"));
    }
}
