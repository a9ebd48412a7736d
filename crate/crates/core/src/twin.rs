//! Per-sample reconstruction of MV-side waveforms from LV-side samples.
//!
//! Each phase is handled by a [`PhaseTwin`]: LV samples are referred to the
//! MV side through the turns ratio, then the lumped series branch and the
//! MV-side shunt branch are applied with backward differences. Three phase
//! twins are combined into MV terminal quantities according to the vector
//! group by [`compose_three_phase`].
//!
//! The per-phase twins work in the wye-equivalent MV frame: the ratio is the
//! line-to-line rating ratio and impedances are referred to
//! `v2_rated^2 / s_rated`. For delta-connected MV windings this means each
//! phase twin reports the winding voltage divided by `sqrt(3)` and the winding
//! current multiplied by `sqrt(3)`, which the Dy compositions undo.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{SampledWaveform, ThreePhaseFrame};

const INV_SQRT3: f64 = 0.577_350_269_189_625_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorGroup {
    Yy0,
    Dy1,
    Dy11,
}

impl VectorGroup {
    pub fn is_delta_mv(self) -> bool {
        !matches!(self, VectorGroup::Yy0)
    }
}

impl fmt::Display for VectorGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VectorGroup::Yy0 => "Yy0",
            VectorGroup::Dy1 => "Dy1",
            VectorGroup::Dy11 => "Dy11",
        };
        f.write_str(s)
    }
}

impl FromStr for VectorGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yy0" | "ynyn0" => Ok(VectorGroup::Yy0),
            "dy1" | "dyn1" => Ok(VectorGroup::Dy1),
            "dy11" | "dyn11" => Ok(VectorGroup::Dy11),
            other => Err(Error::Config(format!("unknown vector group '{other}'"))),
        }
    }
}

fn default_tap() -> f64 {
    1.0
}
fn default_tap_min() -> f64 {
    0.9
}
fn default_tap_max() -> f64 {
    1.1
}
fn default_f0() -> f64 {
    50.0
}

/// Nameplate and equivalent-circuit data of a three-phase transformer.
///
/// Side 1 is the LV side. Impedances are per-unit on the transformer rating;
/// inductances are given as per-unit reactance at `base_frequency`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerParams {
    pub s_rated: f64,
    pub v1_rated: f64,
    pub v2_rated: f64,
    pub r1: f64,
    pub l1: f64,
    pub r2: f64,
    pub l2: f64,
    pub rm: f64,
    pub lm: f64,
    #[serde(default = "default_tap")]
    pub tap_ratio: f64,
    #[serde(with = "vector_group_str")]
    pub vector_group: VectorGroup,
    #[serde(default = "default_f0")]
    pub base_frequency: f64,
    #[serde(default = "default_tap_min")]
    pub tap_min: f64,
    #[serde(default = "default_tap_max")]
    pub tap_max: f64,
}

mod vector_group_str {
    use super::VectorGroup;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &VectorGroup, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<VectorGroup, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl TransformerParams {
    /// 50 kVA, 400 V / 20 kV simulation transformer.
    pub fn simulation_50kva() -> Self {
        Self {
            s_rated: 50e3,
            v1_rated: 400.0,
            v2_rated: 20e3,
            r1: 0.0075,
            l1: 0.02,
            r2: 0.0075,
            l2: 0.02,
            rm: 500.0,
            lm: 500.0,
            tap_ratio: 1.0,
            vector_group: VectorGroup::Yy0,
            base_frequency: 50.0,
            tap_min: 0.9,
            tap_max: 1.1,
        }
    }

    /// 630 kVA, 400 V / 20.5 kV field transformer.
    pub fn field_630kva() -> Self {
        Self {
            s_rated: 630e3,
            v1_rated: 400.0,
            v2_rated: 20.5e3,
            r1: 0.0035,
            l1: 0.0233,
            r2: 0.0035,
            l2: 0.0233,
            rm: 500.0,
            lm: 500.0,
            tap_ratio: 1.0,
            vector_group: VectorGroup::Dy11,
            base_frequency: 50.0,
            tap_min: 0.9,
            tap_max: 1.1,
        }
    }

    pub fn with_vector_group(mut self, vg: VectorGroup) -> Self {
        self.vector_group = vg;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("s_rated", self.s_rated),
            ("v1_rated", self.v1_rated),
            ("v2_rated", self.v2_rated),
            ("r1", self.r1),
            ("l1", self.l1),
            ("r2", self.r2),
            ("l2", self.l2),
            ("rm", self.rm),
            ("lm", self.lm),
            ("tap_ratio", self.tap_ratio),
            ("base_frequency", self.base_frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.v1_rated >= self.v2_rated {
            return Err(Error::Config(format!(
                "v1_rated ({}) must be the LV rating, below v2_rated ({})",
                self.v1_rated, self.v2_rated
            )));
        }
        if !(self.tap_min > 0.0 && self.tap_min <= self.tap_max) {
            return Err(Error::Config("tap range is empty".into()));
        }
        Ok(())
    }

    /// MV-side base impedance, `v2^2 / s`.
    pub fn z_base(&self) -> f64 {
        self.v2_rated * self.v2_rated / self.s_rated
    }

    pub fn omega_base(&self) -> f64 {
        2.0 * PI * self.base_frequency
    }

    /// Wye-equivalent referral ratio including the tap.
    pub fn ratio(&self) -> f64 {
        self.v2_rated / self.v1_rated * self.tap_ratio
    }

    /// Rated MV phase voltage (RMS) of the wye-equivalent.
    pub fn mv_phase_voltage(&self) -> f64 {
        self.v2_rated / 3f64.sqrt()
    }

    /// Rated MV line current (RMS).
    pub fn mv_line_current(&self) -> f64 {
        self.s_rated / (3f64.sqrt() * self.v2_rated)
    }

    /// Lumped twin circuit referred to the MV side in ohms and henries.
    /// The LV winding's impedance is referred through the tapped ratio.
    pub fn twin_circuit(&self) -> TwinCircuit {
        let zb = self.z_base();
        let w = self.omega_base();
        let t2 = self.tap_ratio * self.tap_ratio;
        TwinCircuit {
            ratio: self.ratio(),
            r_s: (self.r1 * t2 + self.r2) * zb,
            l_s: (self.l1 * t2 + self.l2) * zb / w,
            r_m: self.rm * zb,
            l_m: self.lm * zb / w,
        }
    }

    /// Returns a copy with a new tap ratio, checked against the admissible range.
    pub fn set_tap(&self, tap_ratio: f64) -> Result<Self> {
        if !(tap_ratio >= self.tap_min && tap_ratio <= self.tap_max) {
            return Err(Error::Config(format!(
                "tap ratio {tap_ratio} outside admissible range [{}, {}]",
                self.tap_min, self.tap_max
            )));
        }
        let mut p = self.clone();
        p.tap_ratio = tap_ratio;
        Ok(p)
    }
}

/// Physical constants of one phase twin (MV-referred).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinCircuit {
    pub ratio: f64,
    pub r_s: f64,
    pub l_s: f64,
    pub r_m: f64,
    pub l_m: f64,
}

impl TwinCircuit {
    /// Ideal transformer: no series drop, open shunt.
    pub fn ideal(ratio: f64) -> Self {
        Self {
            ratio,
            r_s: 0.0,
            l_s: 0.0,
            r_m: f64::INFINITY,
            l_m: f64::INFINITY,
        }
    }
}

/// Refers an LV voltage/current sample pair to the MV side.
pub fn refer_to_mv(lv_u: f64, lv_i: f64, params: &TransformerParams) -> (f64, f64) {
    let a = params.ratio();
    (lv_u * a, lv_i / a)
}

/// Memory of one phase twin between samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TwinState {
    pub prev_i1_referred: f64,
    pub prev_u2: f64,
    pub initialized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinOutput {
    pub u2: f64,
    pub i2: f64,
    /// No previous sample was available; excluded from metrics.
    pub warmup: bool,
}

/// One step of the discretized twin for MV-referred inputs.
///
/// `resistance_scale` multiplies both resistances (1.0 for nameplate values).
pub fn twin_step(
    state: &mut TwinState,
    u1_ref: f64,
    i1_ref: f64,
    circuit: &TwinCircuit,
    fs: f64,
    resistance_scale: f64,
) -> TwinOutput {
    let warmup = !state.initialized;
    let (prev_i, prev_u2) = if warmup {
        (i1_ref, None)
    } else {
        (state.prev_i1_referred, Some(state.prev_u2))
    };
    let r_s = circuit.r_s * resistance_scale;
    let r_m = circuit.r_m * resistance_scale;
    let u2 = u1_ref + r_s * i1_ref + circuit.l_s * (i1_ref - prev_i) * fs;
    let du2 = prev_u2.map_or(0.0, |p| u2 - p);
    let i2 = u2 / r_m + du2 / (circuit.l_m * fs) + i1_ref;
    state.prev_i1_referred = i1_ref;
    state.prev_u2 = u2;
    state.initialized = true;
    TwinOutput { u2, i2, warmup }
}

/// Streaming twin of one transformer phase.
#[derive(Debug, Clone)]
pub struct PhaseTwin {
    circuit: TwinCircuit,
    fs: f64,
    state: TwinState,
    resistance_scale: f64,
}

impl PhaseTwin {
    pub fn new(circuit: TwinCircuit, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs}")));
        }
        Ok(Self {
            circuit,
            fs,
            state: TwinState::default(),
            resistance_scale: 1.0,
        })
    }

    pub fn circuit(&self) -> &TwinCircuit {
        &self.circuit
    }

    /// Swaps the circuit at a sample boundary. The referred current history is
    /// rescaled so a ratio change does not show up as a current step.
    pub fn set_circuit(&mut self, circuit: TwinCircuit) {
        if self.state.initialized {
            self.state.prev_i1_referred *= self.circuit.ratio / circuit.ratio;
        }
        self.circuit = circuit;
    }

    pub fn set_resistance_scale(&mut self, scale: f64) {
        self.resistance_scale = scale;
    }

    pub fn state(&self) -> &TwinState {
        &self.state
    }

    /// Consumes one LV sample pair (LV volts, LV amps).
    pub fn step(&mut self, lv_u: f64, lv_i: f64) -> TwinOutput {
        let a = self.circuit.ratio;
        twin_step(
            &mut self.state,
            lv_u * a,
            lv_i / a,
            &self.circuit,
            self.fs,
            self.resistance_scale,
        )
    }

    pub fn reset(&mut self) {
        self.state = TwinState::default();
    }
}

/// Combines three per-phase twin outputs into MV terminal quantities.
///
/// Yy0 passes phase quantities through. For Dy1 the phase-A quantities are
/// `(x_2A - x_2C) / sqrt(3)`, for Dy11 `(x_2A - x_2B) / sqrt(3)`, cyclic for
/// B and C. Delta-side phase voltages carry no zero-sequence component.
pub fn compose_three_phase(u2: [f64; 3], i2: [f64; 3], vg: VectorGroup) -> ThreePhaseFrame {
    let combine = |x: [f64; 3]| -> [f64; 3] {
        match vg {
            VectorGroup::Yy0 => x,
            VectorGroup::Dy1 => [
                (x[0] - x[2]) * INV_SQRT3,
                (x[1] - x[0]) * INV_SQRT3,
                (x[2] - x[1]) * INV_SQRT3,
            ],
            VectorGroup::Dy11 => [
                (x[0] - x[1]) * INV_SQRT3,
                (x[1] - x[2]) * INV_SQRT3,
                (x[2] - x[0]) * INV_SQRT3,
            ],
        }
    };
    ThreePhaseFrame::from_phase(combine(u2), combine(i2))
}

/// Three phase twins plus vector-group composition.
#[derive(Debug, Clone)]
pub struct ThreePhaseTwin {
    params: TransformerParams,
    phases: [PhaseTwin; 3],
}

/// MV-side waveforms reconstructed from an LV recording.
#[derive(Debug, Clone)]
pub struct TwinRecord {
    pub u_phase: [SampledWaveform; 3],
    pub u_line: [SampledWaveform; 3],
    pub i_line: [SampledWaveform; 3],
    /// Leading samples flagged as warm-up.
    pub warmup: usize,
}

impl ThreePhaseTwin {
    pub fn new(params: TransformerParams, fs: f64) -> Result<Self> {
        params.validate()?;
        let c = params.twin_circuit();
        let phase = PhaseTwin::new(c, fs)?;
        Ok(Self {
            params,
            phases: [phase.clone(), phase.clone(), phase],
        })
    }

    pub fn params(&self) -> &TransformerParams {
        &self.params
    }

    /// Applies a tap change from the next sample on.
    pub fn set_tap(&mut self, tap_ratio: f64) -> Result<()> {
        let params = self.params.set_tap(tap_ratio)?;
        let c = params.twin_circuit();
        for p in &mut self.phases {
            p.set_circuit(c);
        }
        self.params = params;
        Ok(())
    }

    pub fn set_resistance_scale(&mut self, scale: f64) {
        for p in &mut self.phases {
            p.set_resistance_scale(scale);
        }
    }

    /// Processes one sample of LV phase voltages and line currents.
    pub fn step(&mut self, lv_u: [f64; 3], lv_i: [f64; 3]) -> (ThreePhaseFrame, bool) {
        let mut u2 = [0.0; 3];
        let mut i2 = [0.0; 3];
        let mut warmup = false;
        for k in 0..3 {
            let out = self.phases[k].step(lv_u[k], lv_i[k]);
            u2[k] = out.u2;
            i2[k] = out.i2;
            warmup |= out.warmup;
        }
        (compose_three_phase(u2, i2, self.params.vector_group), warmup)
    }

    /// Runs a whole recording. `tap_events` holds `(sample index, tap ratio)`
    /// pairs applied before the given sample.
    pub fn run(
        &mut self,
        lv_u: &[SampledWaveform; 3],
        lv_i: &[SampledWaveform; 3],
        tap_events: &[(usize, f64)],
    ) -> Result<TwinRecord> {
        let reference = &lv_u[0];
        for w in lv_u.iter().chain(lv_i.iter()) {
            if w.len() != reference.len() || w.fs() != reference.fs() {
                return Err(Error::Shape("LV channels differ in length or rate".into()));
            }
        }
        let n = reference.len();
        let mut out: [Vec<f64>; 9] = Default::default();
        for v in out.iter_mut() {
            v.reserve(n);
        }
        let mut warmup = 0;
        let mut events = tap_events.to_vec();
        events.sort_by_key(|e| e.0);
        let mut next_event = 0;
        for k in 0..n {
            while next_event < events.len() && events[next_event].0 <= k {
                self.set_tap(events[next_event].1)?;
                next_event += 1;
            }
            let u = [lv_u[0].samples()[k], lv_u[1].samples()[k], lv_u[2].samples()[k]];
            let i = [lv_i[0].samples()[k], lv_i[1].samples()[k], lv_i[2].samples()[k]];
            let (frame, wu) = self.step(u, i);
            if wu {
                warmup = k + 1;
            }
            for p in 0..3 {
                out[p].push(frame.u_phase[p]);
                out[3 + p].push(frame.u_line[p]);
                out[6 + p].push(frame.i_line[p]);
            }
        }
        let mk = |v: Vec<f64>| reference.with_samples(v);
        let [a, b, c, d, e, f, g, h, i] = out;
        Ok(TwinRecord {
            u_phase: [mk(a)?, mk(b)?, mk(c)?],
            u_line: [mk(d)?, mk(e)?, mk(f)?],
            i_line: [mk(g)?, mk(h)?, mk(i)?],
            warmup,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultType {
    LG,
    LL,
    LLG,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultSide {
    MV,
    LV,
}

/// Fault and earthing topology around the monitored transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultContext {
    pub fault_type: FaultType,
    pub fault_side: FaultSide,
    pub substation_mv_grounded: bool,
    pub vector_group: VectorGroup,
    pub tf_lv_grounded: bool,
    pub tf_mv_grounded: bool,
}

impl FaultContext {
    /// Builds a context; a delta MV winding has no neutral, so its grounded
    /// flag is forced to false.
    pub fn new(
        fault_type: FaultType,
        fault_side: FaultSide,
        substation_mv_grounded: bool,
        vector_group: VectorGroup,
        tf_lv_grounded: bool,
        tf_mv_grounded: bool,
    ) -> Self {
        Self {
            fault_type,
            fault_side,
            substation_mv_grounded,
            vector_group,
            tf_lv_grounded,
            tf_mv_grounded: tf_mv_grounded && !vector_group.is_delta_mv(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observability {
    FullyObservable,
    PhaseVoltagesUnobservable,
}

/// Predicts whether the twin reproduces MV phase voltages under a fault.
/// Line-to-line voltages, line currents and powers are always reproduced.
pub fn classify_fault_observability(ctx: &FaultContext) -> Observability {
    use Observability::*;
    match (ctx.fault_type, ctx.fault_side) {
        (FaultType::None, _) => FullyObservable,
        (_, FaultSide::LV) => PhaseVoltagesUnobservable,
        (FaultType::LL, FaultSide::MV) => FullyObservable,
        (FaultType::LG | FaultType::LLG, FaultSide::MV) => {
            let zero_seq_blocked = match ctx.vector_group {
                VectorGroup::Dy1 | VectorGroup::Dy11 => true,
                VectorGroup::Yy0 => !(ctx.tf_lv_grounded && ctx.tf_mv_grounded),
            };
            if zero_seq_blocked && ctx.substation_mv_grounded {
                PhaseVoltagesUnobservable
            } else {
                FullyObservable
            }
        }
    }
}

/// RMS of a sinusoid with the given peak.
pub fn peak_to_rms(peak: f64) -> f64 {
    peak * FRAC_1_SQRT_2
}
