//! Desk-scale testbed for closed-loop shape control of a flexible foil
//! with a capacitive e-skin.
//!
//! The crate simulates the whole stack: a hydraulically actuated foil
//! plant with calibrated camber kinematics ([`plant`]), a synthetic
//! nine-channel capacitive skin ([`sensing`]), log ingestion and
//! sensor/marker stream alignment ([`ingestion`]), a fully connected
//! shape estimator with Adam training ([`estimator`]), camber geometry
//! from spline fits ([`geometry`]), PID set-point regulation around the
//! loop ([`control`]), the evaluation metrics ([`metrics`]), and the CLI
//! orchestration layer ([`harness`]).

pub mod control;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod harness;
pub mod ingestion;
pub mod metrics;
pub mod plant;
pub mod seeds;
pub mod sensing;

pub use error::{Error, Result};
