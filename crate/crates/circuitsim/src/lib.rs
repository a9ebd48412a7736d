//! Reference circuit simulator for transformer test networks.
//!
//! Linear lumped circuits are integrated with trapezoidal companion models
//! on a fixed step. The crate also builds the three-phase test network,
//! models the LV measurement device and evaluates the frequency response of
//! the per-phase transformer models.

// `!(x > 0.0)` is deliberate: it rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bode;
pub mod error;
pub mod lu;
pub mod measure;
pub mod netlist;
pub mod phasor;
pub mod scenario;
pub mod sim;

pub use bode::{transfer_function, BodePoint, CircuitModel, LoadImpedance};
pub use error::{Error, Result};
pub use measure::{measure, ChannelKind, Device, MeasurementModel, Noise, Sampling};
pub use netlist::{Netlist, NodeId, Probe, SourceWave, GROUND};
pub use scenario::{build_scenario_circuit, CircuitSpec, LvVoltageReference, ScenarioCircuit, SourceGrounding};
pub use sim::{simulate, Init, SimResult, Simulator, DEFAULT_DT};
