//! Arc travel-time models and the exit-time curves they produce.

mod conformance;
mod curve;
mod models;

pub use conformance::{check_assumptions, Assumption, AssumptionCheck, ConformanceReport};
pub use curve::{ExitPoint, ExitTimeCurve};
pub use models::{exit_curve, travel_time, ArcModel, DelayFunction, TravelTimeModel, DEFAULT_SUBSTEPS};
