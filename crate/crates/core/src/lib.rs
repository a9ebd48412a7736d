//! Digital twin of a distribution transformer's medium-voltage side.
//!
//! The crate reconstructs MV-side voltage and current waveforms from sampled
//! LV-side measurements, composes three-phase quantities for the common
//! distribution vector groups, and provides the sampled-signal utilities and
//! error metrics used to assess the reconstruction.

pub mod error;
pub mod io;
pub mod metrics;
pub mod twin;
pub mod waveform;

pub use error::{Error, Result};
pub use metrics::{Quantity, QuantityStats, ScenarioStats, TrialErrors};
pub use twin::{
    FaultContext, FaultSide, FaultType, Observability, PhaseTwin, ThreePhaseTwin, TransformerParams,
    VectorGroup,
};
pub use waveform::{SampleRange, SampledWaveform, Spectrum, ThreePhaseFrame};
