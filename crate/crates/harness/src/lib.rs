//! Monte-Carlo validation of the MV-side transformer twin.
//!
//! A trial draws random operating conditions, simulates the full network
//! with [`mvtwin_circuitsim`], samples the LV side through a measurement
//! device model, runs the twin and scores its output against the simulated
//! MV terminals. [`run_scenario`] repeats trials in parallel and aggregates
//! them; [`enumerate_standard_scenarios`] lists the standard normal-operation
//! and fault sets.

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod field;
pub mod filtering;
pub mod report;
pub mod run;
pub mod trial;

pub use config::{
    enumerate_standard_scenarios, fault_scenarios, find_scenario, normal_scenarios, FaultCase, LoadModel,
    LoadTrajectory, MeasurementSettings, ScenarioConfig, TapChange, TrialCount,
};
pub use error::{Error, Result};
pub use field::field_compare;
pub use filtering::{filtering_study, FilteringStudy};
pub use report::{render_table, write_report};
pub use run::{run_scenario, Provenance, RunReport};
pub use trial::{run_trial, run_trial_detailed, trial_seed, TrialOutcome};
