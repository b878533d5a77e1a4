//! Target-point normalization against training-set statistics.

use serde::{Deserialize, Serialize};

use crate::world::Vec2;

/// Per-axis min/max of ego-frame TP coordinates over the training
/// demonstrations. Persisted with the trained policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpStats {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum NormalizeError {
    #[error("normalization stats missing; train a policy (or pass stats) first")]
    MissingStats,
}

impl TpStats {
    /// Stats over a set of ego-frame TP coordinates.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec2>) -> Option<TpStats> {
        let mut st: Option<TpStats> = None;
        for p in points {
            st = Some(match st {
                None => TpStats {
                    x_min: p.x,
                    x_max: p.x,
                    y_min: p.y,
                    y_max: p.y,
                },
                Some(s) => TpStats {
                    x_min: s.x_min.min(p.x),
                    x_max: s.x_max.max(p.x),
                    y_min: s.y_min.min(p.y),
                    y_max: s.y_max.max(p.y),
                },
            });
        }
        st
    }
}

fn norm_axis(v: f64, lo: f64, hi: f64) -> f64 {
    if hi - lo <= 1e-12 {
        return 0.0;
    }
    (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
}

/// Affine map of each axis onto [-1, 1], clamped outside the training range.
pub fn normalize_tp(tp_ego: Vec2, stats: &TpStats) -> (f64, f64) {
    (
        norm_axis(tp_ego.x, stats.x_min, stats.x_max),
        norm_axis(tp_ego.y, stats.y_min, stats.y_max),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats() -> TpStats {
        TpStats {
            x_min: -20.0,
            x_max: 20.0,
            y_min: -10.0,
            y_max: 50.0,
        }
    }

    #[test]
    fn axis_max_maps_to_one() {
        let (x, y) = normalize_tp(Vec2::new(20.0, 50.0), &stats());
        assert_eq!(x, 1.0);
        assert_eq!(y, 1.0);
    }

    #[test]
    fn midpoint_maps_to_zero() {
        let (x, y) = normalize_tp(Vec2::new(0.0, 20.0), &stats());
        assert!(x.abs() < 1e-12);
        assert!(y.abs() < 1e-12);
    }

    #[test]
    fn beyond_max_clamps() {
        let (x, _) = normalize_tp(Vec2::new(22.0, 0.0), &stats());
        assert_eq!(x, 1.0);
        let (x, _) = normalize_tp(Vec2::new(-999.0, 0.0), &stats());
        assert_eq!(x, -1.0);
    }

    #[test]
    fn stats_from_points() {
        let pts = vec![Vec2::new(1.0, 2.0), Vec2::new(-3.0, 7.0), Vec2::new(0.5, -1.0)];
        let st = TpStats::from_points(pts.iter()).unwrap();
        assert_eq!(st.x_min, -3.0);
        assert_eq!(st.x_max, 1.0);
        assert_eq!(st.y_min, -1.0);
        assert_eq!(st.y_max, 7.0);
    }
}
