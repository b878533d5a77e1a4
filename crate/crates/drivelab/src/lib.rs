//! A desk-scale closed-loop driving laboratory.
//!
//! The crate provides a deterministic 2D driving simulator together with the
//! machinery needed to study learner–expert asymmetry in imitation learning:
//!
//! * [`world`] — lane-level maps, lane-graph routing, oriented-box geometry.
//! * [`sim`] — fixed-step world dynamics, background traffic, scenarios,
//!   procedural towns, and the rollout harness.
//! * [`sensing`] — the student's observation model: camera frustums,
//!   occlusion checks, BEV rasters, and target-point selection.
//! * [`expert`] — a privileged rule-based driver and its sensor-aligned
//!   variant that plans only on student-observable state.
//! * [`student`] — a small differentiable policy with two intent-conditioning
//!   designs, hand-rolled training, and a waypoint controller.
//! * [`bench`] — infraction detection, metric definitions (RC/IS/DS/I/NDS/SR),
//!   suite execution, and report aggregation.
//!
//! Everything is seeded: the same inputs produce bitwise-identical rollouts,
//! datasets, checkpoints, and reports.

pub mod bench;
pub mod expert;
pub mod io;
pub mod rng;
pub mod sensing;
pub mod sim;
pub mod student;
pub mod world;
