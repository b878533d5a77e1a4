//! Intelligent Driver Model car-following law, used by background traffic
//! and reused for the expert's longitudinal gap reasoning.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IdmParams {
    /// Desired free-flow speed, m/s (usually the lane speed limit).
    pub v0: f64,
    /// Desired time headway, s.
    pub headway: f64,
    /// Jam distance, m.
    pub min_gap: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable braking deceleration, m/s² (positive).
    pub b_comfort: f64,
    /// Hard clamp on braking, m/s² (positive).
    pub b_max: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 8.33,
            headway: 1.5,
            min_gap: 2.0,
            a_max: 2.0,
            b_comfort: 3.0,
            b_max: 6.0,
        }
    }
}

/// IDM acceleration for a follower at speed `v` with bumper gap `gap` to a
/// leader moving at `v_lead`. Use `gap = f64::INFINITY` on a free road.
///
/// a = a_max · (1 − (v/v0)⁴ − (s*/gap)²),
/// s* = s0 + v·T + v·(v − v_lead) / (2·√(a_max·b)),
/// clamped to [−b_max, a_max].
pub fn idm_accel(gap: f64, v: f64, v_lead: f64, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.v0).powi(4);
    let interaction = if gap.is_finite() {
        let s_star =
            p.min_gap + v * p.headway + v * (v - v_lead) / (2.0 * (p.a_max * p.b_comfort).sqrt());
        (s_star / gap).powi(2)
    } else {
        0.0
    };
    (p.a_max * (free - interaction)).clamp(-p.b_max, p.a_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_at_free_flow_speed() {
        let p = IdmParams::default();
        let a = idm_accel(1e6, p.v0, 0.0, &p);
        assert!(a.abs() < 0.01 * p.a_max, "a = {a}");
    }

    #[test]
    fn standing_start_accelerates_near_a_max() {
        let p = IdmParams::default();
        let a = idm_accel(1e6, 0.0, 0.0, &p);
        assert!((a - p.a_max).abs() < 0.01 * p.a_max);
    }

    #[test]
    fn matches_direct_formula_evaluation() {
        // v = v_lead = 10, gap = s0 + v·T: the dynamic term vanishes, so
        // s* = gap and a = a_max·(1 − (10/v0)^4 − 1) clamped.
        let p = IdmParams {
            v0: 12.0,
            ..IdmParams::default()
        };
        let gap = p.min_gap + 10.0 * p.headway;
        let a = idm_accel(gap, 10.0, 10.0, &p);
        let expected = (p.a_max * (1.0 - (10.0f64 / 12.0).powi(4) - 1.0)).clamp(-p.b_max, p.a_max);
        assert!((a - expected).abs() < 1e-12);
    }

    #[test]
    fn tiny_gap_brakes_hard() {
        let p = IdmParams::default();
        let a = idm_accel(0.5, 8.0, 0.0, &p);
        assert!((a + p.b_max).abs() < 1e-12);
    }
}
