//! Scenario descriptions and the standard scenario sets.

use serde::{Deserialize, Serialize};

use mvtwin_circuitsim::measure::{Noise, Sampling};
use mvtwin_circuitsim::scenario::{LvVoltageReference, SourceGrounding};
use mvtwin_core::io::HarmonicProfile;
use mvtwin_core::{FaultContext, FaultSide, FaultType, Observability, TransformerParams, VectorGroup};

use crate::error::{Error, Result};

/// Device sampling rates of the normal-operation matrix.
pub const MATRIX_RATES: [f64; 4] = [5_000.0, 10_000.0, 30_000.0, 52_000.0];

/// Trial count of the full-scale preset.
pub const FULL_SCALE_TRIALS: usize = 17_000;

/// Desk-scale default.
pub const DEFAULT_TRIALS: usize = 500;

/// Random load ranges (LV ohms, henries).
pub const LOAD_R_RANGE: (f64, f64) = (0.75, 5.25);
pub const LOAD_L_RANGE: (f64, f64) = (1.5e-3, 17e-3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoadTrajectory {
    Constant,
    Increase,
    Decrease,
}

impl LoadTrajectory {
    pub fn tag(self) -> &'static str {
        match self {
            LoadTrajectory::Constant => "const",
            LoadTrajectory::Increase => "inc",
            LoadTrajectory::Decrease => "dec",
        }
    }
}

/// How loads are drawn per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LoadModel {
    /// R and L uniform over the random ranges.
    Random,
    /// Within `spread` (relative) of the impedance drawing `fraction` of rated
    /// power at 0.8 lagging power factor.
    NearRated { fraction: f64, spread: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultCase {
    pub kind: FaultType,
    pub side: FaultSide,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapChange {
    pub time: f64,
    pub ramp: f64,
    pub tap_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSettings {
    pub sampling: Sampling,
    pub noise: Noise,
    pub voltage_accuracy: f64,
    pub current_accuracy: f64,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        Self {
            sampling: Sampling::Integrating,
            noise: Noise::PerRecord,
            voltage_accuracy: 0.001,
            current_accuracy: 0.01,
        }
    }
}

impl MeasurementSettings {
    pub fn noiseless(mut self) -> Self {
        self.voltage_accuracy = 0.0;
        self.current_accuracy = 0.0;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrialCount {
    Fixed(usize),
    /// Stop once every mean avg_error has a relative 99% half-width below
    /// `relative_half_width`, after at least `min` and at most `max` trials.
    Confidence {
        min: usize,
        max: usize,
        relative_half_width: f64,
    },
}

/// Full description of one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    /// Member of the standard 24 + 72 set.
    pub standard: bool,
    pub transformer: TransformerParams,
    pub load: LoadTrajectory,
    pub load_model: LoadModel,
    /// `None` for a pure sinusoidal source.
    pub harmonics: Option<HarmonicProfile>,
    pub fs: f64,
    pub grounding: SourceGrounding,
    pub mv_grounded: bool,
    pub lv_grounded: bool,
    /// Reference of the measured LV voltages.
    #[serde(default)]
    pub lv_voltage_reference: LvVoltageReference,
    pub fault: Option<FaultCase>,
    pub tap: Option<TapChange>,
    /// Per-phase source magnitude spread (0.1 draws each phase in 1 +/- 10%).
    pub source_asymmetry: f64,
    /// Draw each phase's load independently.
    pub asymmetric_load: bool,
    pub measurement: MeasurementSettings,
    pub event_time: f64,
    pub duration: f64,
    pub dt: f64,
    pub trials: TrialCount,
    pub seed: u64,
    /// Cycles on each side of a load change used by the metrics.
    pub event_cycles: u32,
    /// Cycles after a fault used by the metrics.
    pub fault_cycles: u32,
    /// Reference RMS below this fraction of nameplate flags a metric.
    pub low_signal_fraction: f64,
}

impl ScenarioConfig {
    /// Custom scenario: constant random load, no harmonics, solidly grounded
    /// Yy0 network.
    pub fn custom(id: impl Into<String>, fs: f64) -> Self {
        Self {
            id: id.into(),
            standard: false,
            transformer: TransformerParams::simulation_50kva(),
            load: LoadTrajectory::Constant,
            load_model: LoadModel::Random,
            harmonics: None,
            fs,
            grounding: SourceGrounding::Solid,
            mv_grounded: true,
            lv_grounded: true,
            lv_voltage_reference: LvVoltageReference::Earth,
            fault: None,
            tap: None,
            source_asymmetry: 0.0,
            asymmetric_load: false,
            measurement: MeasurementSettings::default(),
            event_time: 0.2,
            duration: 0.4,
            dt: mvtwin_circuitsim::DEFAULT_DT,
            trials: TrialCount::Fixed(DEFAULT_TRIALS),
            seed: 0,
            event_cycles: 2,
            fault_cycles: 4,
            low_signal_fraction: 0.05,
        }
    }

    pub fn vector_group(&self) -> VectorGroup {
        self.transformer.vector_group
    }

    pub fn with_trials(mut self, n: usize) -> Self {
        self.trials = TrialCount::Fixed(n);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Fault topology as seen by the observability classifier.
    pub fn fault_context(&self) -> Option<FaultContext> {
        self.fault.map(|f| {
            FaultContext::new(
                f.kind,
                f.side,
                self.grounding.is_grounded(),
                self.vector_group(),
                self.lv_grounded,
                self.mv_grounded,
            )
        })
    }

    pub fn predicted_observability(&self) -> Observability {
        self.fault_context()
            .map_or(Observability::FullyObservable, |c| mvtwin_core::twin::classify_fault_observability(&c))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("scenario {}: {m}", self.id)));
        self.transformer.validate()?;
        if let Some(h) = &self.harmonics {
            h.validate()?;
        }
        if !(self.fs > 0.0) {
            return bad(format!("sampling rate must be positive, got {}", self.fs));
        }
        if !(self.dt > 0.0 && self.dt <= 2e-6) {
            return bad(format!("internal step must be in (0, 2 us], got {}", self.dt));
        }
        if self.fs > 0.5 / self.dt {
            return bad(format!("sampling rate {} exceeds half the internal rate", self.fs));
        }
        if self.vector_group().is_delta_mv() && self.mv_grounded {
            return bad("delta MV winding cannot be grounded".into());
        }
        let cycle = 1.0 / self.transformer.base_frequency;
        if self.load != LoadTrajectory::Constant {
            let half = self.event_cycles as f64 * cycle;
            if self.event_cycles == 0 || self.event_time - half < 0.0 || self.event_time + half > self.duration {
                return bad("load-change window does not fit the record".into());
            }
        }
        if let Some(f) = self.fault {
            if f.kind == FaultType::None {
                return bad("fault case with type None".into());
            }
            if f.time + self.fault_cycles as f64 * cycle > self.duration + 1e-12 {
                return bad("post-fault window does not fit the record".into());
            }
        }
        if let Some(t) = self.tap {
            self.transformer.set_tap(t.tap_ratio)?;
            if t.time + t.ramp + cycle >= self.duration {
                return bad("tap change too late in the record".into());
            }
        }
        if !(0.0..1.0).contains(&self.source_asymmetry) {
            return bad("source asymmetry must be in [0, 1)".into());
        }
        if let TrialCount::Confidence { min, max, .. } = self.trials {
            if min == 0 || max < min {
                return bad("confidence stopping needs 1 <= min <= max".into());
            }
        }
        if let TrialCount::Fixed(0) = self.trials {
            return bad("at least one trial is required".into());
        }
        Ok(())
    }
}

fn fs_tag(fs: f64) -> String {
    format!("{}k", (fs / 1000.0).round() as u64)
}

/// The 24 normal-operation scenarios: load trajectory x harmonics x rate.
pub fn normal_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::with_capacity(24);
    for load in [LoadTrajectory::Constant, LoadTrajectory::Increase, LoadTrajectory::Decrease] {
        for harm in [false, true] {
            for fs in MATRIX_RATES {
                let id = format!(
                    "normal-{}-{}-{}",
                    load.tag(),
                    if harm { "harm" } else { "noharm" },
                    fs_tag(fs)
                );
                let mut c = ScenarioConfig::custom(id, fs);
                c.standard = true;
                c.load = load;
                c.harmonics = harm.then(HarmonicProfile::standard_limits);
                out.push(c);
            }
        }
    }
    out
}

/// Transformer topologies of the fault set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub vector_group: VectorGroup,
    pub mv_grounded: bool,
    pub lv_grounded: bool,
}

impl Topology {
    pub fn tag(&self) -> String {
        match self.vector_group {
            VectorGroup::Yy0 => format!(
                "yy0-{}",
                match (self.mv_grounded, self.lv_grounded) {
                    (true, true) => "both",
                    (true, false) => "mvg",
                    (false, true) => "lvg",
                    (false, false) => "none",
                }
            ),
            vg => format!(
                "{}-{}",
                vg.to_string().to_lowercase(),
                if self.lv_grounded { "lvg" } else { "lvu" }
            ),
        }
    }
}

pub fn fault_topologies() -> [Topology; 6] {
    let t = |vector_group, mv_grounded, lv_grounded| Topology {
        vector_group,
        mv_grounded,
        lv_grounded,
    };
    [
        t(VectorGroup::Dy11, false, true),
        t(VectorGroup::Dy11, false, false),
        t(VectorGroup::Yy0, false, false),
        t(VectorGroup::Yy0, true, false),
        t(VectorGroup::Yy0, false, true),
        t(VectorGroup::Yy0, true, true),
    ]
}

/// Device rate used for the fault set.
pub const FAULT_SET_RATE: f64 = 30_000.0;

/// The 72 fault scenarios: fault type x side x substation earthing x topology.
/// Loads are near rated and harmonics are on.
pub fn fault_scenarios() -> Vec<ScenarioConfig> {
    let mut out = Vec::with_capacity(72);
    for kind in [FaultType::LG, FaultType::LL, FaultType::LLG] {
        for side in [FaultSide::MV, FaultSide::LV] {
            for (sub_tag, grounding) in [
                ("pet", SourceGrounding::Petersen {
                    inductance: mvtwin_circuitsim::scenario::PETERSEN_DEFAULT_H,
                }),
                ("iso", SourceGrounding::Isolated),
            ] {
                for topo in fault_topologies() {
                    let id = format!(
                        "fault-{}-{}-{}-{}",
                        format!("{kind:?}").to_lowercase(),
                        format!("{side:?}").to_lowercase(),
                        sub_tag,
                        topo.tag()
                    );
                    let mut c = ScenarioConfig::custom(id, FAULT_SET_RATE);
                    c.standard = true;
                    c.transformer = c.transformer.clone().with_vector_group(topo.vector_group);
                    c.mv_grounded = topo.mv_grounded;
                    c.lv_grounded = topo.lv_grounded;
                    c.grounding = grounding;
                    c.harmonics = Some(HarmonicProfile::standard_limits());
                    c.load_model = LoadModel::NearRated {
                        fraction: 1.0,
                        spread: 0.1,
                    };
                    c.fault = Some(FaultCase {
                        kind,
                        side,
                        time: 0.2,
                    });
                    out.push(c);
                }
            }
        }
    }
    out
}

/// The 24 normal-operation scenarios followed by the 72 fault scenarios.
pub fn enumerate_standard_scenarios() -> Vec<ScenarioConfig> {
    let mut v = normal_scenarios();
    v.extend(fault_scenarios());
    v
}

/// Looks up a standard scenario by id.
pub fn find_scenario(id: &str) -> Result<ScenarioConfig> {
    enumerate_standard_scenarios()
        .into_iter()
        .find(|c| c.id == id)
        .ok_or_else(|| Error::UnknownScenario(id.to_string()))
}

/// Moves a fault to 0.4 s and extends the record to 0.6 s.
pub fn late_fault_variant(mut c: ScenarioConfig) -> ScenarioConfig {
    if let Some(f) = c.fault.as_mut() {
        f.time = 0.4;
        c.duration = 0.6;
        c.id.push_str("-t04");
    }
    c
}
