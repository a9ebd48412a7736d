//! The test network: three-phase source behind a line, the full
//! per-phase transformer model wired per vector group, an LV load with an
//! optional step change, and optional fault switches.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use mvtwin_core::{FaultSide, FaultType, TransformerParams, VectorGroup};

use crate::bode::LoadImpedance;
use crate::error::{Error, Result};
use crate::netlist::{ElementId, Netlist, NodeId, Probe, Sinusoid, SourceWave, GROUND};

/// Resistance from otherwise floating star points to earth. Kept far above
/// the zero-sequence magnetizing impedance (several megohms) so it does not
/// pin a floating star point.
pub const LEAKAGE_RESISTANCE: f64 = 1e9;

/// Default Petersen coil when no network capacitance is modeled.
pub const PETERSEN_DEFAULT_H: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    /// Peak phase-to-neutral EMF of phase A at the fundamental.
    pub amplitude: f64,
    pub frequency: f64,
    /// Phase of phase A in radians (sine reference).
    pub phase: f64,
    /// (order, fraction of fundamental, extra phase in radians).
    pub harmonics: Vec<(u32, f64, f64)>,
    /// Per-phase amplitude multipliers.
    pub asymmetry: [f64; 3],
}

impl SourceSpec {
    /// Balanced sinusoidal source at the transformer's rated MV voltage.
    pub fn rated(params: &TransformerParams, phase: f64) -> Self {
        Self {
            amplitude: params.v2_rated * (2.0f64 / 3.0).sqrt(),
            frequency: params.base_frequency,
            phase,
            harmonics: Vec::new(),
            asymmetry: [1.0; 3],
        }
    }

    /// EMF of phase `p` (0 = A). Harmonic `h` keeps the waveform shape of each
    /// phase identical up to the 120 degree time shift.
    pub fn phase_wave(&self, p: usize) -> SourceWave {
        let phi = self.phase - p as f64 * 2.0 * PI / 3.0;
        let amp = self.amplitude * self.asymmetry[p];
        let mut s = vec![Sinusoid {
            amplitude: amp,
            frequency: self.frequency,
            phase: phi,
        }];
        for &(h, frac, extra) in &self.harmonics {
            if frac > 0.0 {
                s.push(Sinusoid {
                    amplitude: amp * frac,
                    frequency: self.frequency * h as f64,
                    phase: h as f64 * phi + extra,
                });
            }
        }
        SourceWave::sinusoids(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SourceGrounding {
    Solid,
    Petersen { inductance: f64 },
    Isolated,
}

impl SourceGrounding {
    pub fn is_grounded(self) -> bool {
        !matches!(self, SourceGrounding::Isolated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub r: f64,
    pub l: f64,
}

impl Default for LineSpec {
    fn default() -> Self {
        Self { r: 2.0, l: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadStep {
    pub time: f64,
    pub after: [LoadImpedance; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultType,
    pub side: FaultSide,
    pub time: f64,
    pub resistance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapStep {
    pub time: f64,
    /// Length of the linear ratio transition; zero for an instantaneous jump.
    pub ramp: f64,
    pub tap_ratio: f64,
}

/// What the LV voltage channels are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LvVoltageReference {
    /// Phase-to-earth, as an earth-referenced monitoring device sees it.
    #[default]
    Earth,
    /// Phase-to-neutral against the transformer LV star point.
    StarPoint,
}

/// Physical description of one simulated case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub transformer: TransformerParams,
    pub source: SourceSpec,
    pub grounding: SourceGrounding,
    pub line: LineSpec,
    /// Transformer MV star point earthed (wye MV windings only).
    pub mv_grounded: bool,
    /// Transformer LV star point earthed.
    pub lv_grounded: bool,
    /// Per-phase load before any step; load star point is earthed.
    pub load: [LoadImpedance; 3],
    pub load_step: Option<LoadStep>,
    pub fault: Option<FaultSpec>,
    pub tap_step: Option<TapStep>,
    /// Identical for a grounded LV star point.
    #[serde(default)]
    pub lv_voltage_reference: LvVoltageReference,
}

impl CircuitSpec {
    /// Balanced rated-voltage network with both star points grounded.
    pub fn new(transformer: TransformerParams, load: LoadImpedance) -> Self {
        let source = SourceSpec::rated(&transformer, 0.0);
        Self {
            mv_grounded: !transformer.vector_group.is_delta_mv(),
            transformer,
            source,
            grounding: SourceGrounding::Solid,
            line: LineSpec::default(),
            lv_grounded: true,
            load: [load; 3],
            load_step: None,
            fault: None,
            tap_step: None,
            lv_voltage_reference: LvVoltageReference::Earth,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.transformer.validate()?;
        if self.transformer.vector_group.is_delta_mv() && self.mv_grounded {
            return bad("delta MV winding has no star point to ground".into());
        }
        if let SourceGrounding::Petersen { inductance } = self.grounding {
            if !(inductance > 0.0) {
                return bad(format!("Petersen coil inductance must be positive, got {inductance}"));
            }
        }
        if !(self.source.amplitude > 0.0 && self.source.frequency > 0.0) {
            return bad("source amplitude and frequency must be positive".into());
        }
        if self.source.asymmetry.iter().any(|a| !(*a > 0.0)) {
            return bad("source asymmetry multipliers must be positive".into());
        }
        for &(h, frac, _) in &self.source.harmonics {
            if h < 2 || !(frac >= 0.0) {
                return bad(format!("harmonic order {h} / fraction {frac} invalid (order >= 2, fraction >= 0)"));
            }
        }
        if !(self.line.r >= 0.0 && self.line.l >= 0.0 && self.line.r + self.line.l > 0.0) {
            return bad("line impedance must be non-negative and not zero".into());
        }
        let loads = self
            .load
            .iter()
            .chain(self.load_step.iter().flat_map(|s| s.after.iter()));
        for l in loads {
            if !(l.r > 0.0 && l.l >= 0.0) {
                return bad(format!("load R must be > 0 and L >= 0, got {} / {}", l.r, l.l));
            }
        }
        if let Some(f) = self.fault {
            if f.kind == FaultType::None {
                return bad("fault spec with fault type None".into());
            }
            if !(f.time > 0.0) {
                return bad("fault time must be positive".into());
            }
        }
        if let Some(t) = self.tap_step {
            self.transformer.set_tap(t.tap_ratio)?;
            if !(t.ramp >= 0.0 && t.time > 0.0) {
                return bad("tap step needs a positive time and non-negative ramp".into());
            }
        }
        Ok(())
    }
}

/// Probe sets of a built scenario. Phase order A, B, C.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioProbes {
    /// LV phase voltages against earth or the LV star point, per
    /// [`CircuitSpec::lv_voltage_reference`].
    pub lv_u: [Probe; 3],
    /// LV line currents out of the transformer (through the LV winding impedance).
    pub lv_i: [Probe; 3],
    /// MV phase voltages against the reference node.
    pub mv_u: [Probe; 3],
    /// MV line-to-line voltages AB, BC, CA.
    pub mv_ull: [Probe; 3],
    /// MV line currents into the transformer terminals.
    pub mv_i: [Probe; 3],
}

impl ScenarioProbes {
    /// All probes in the order lv_u, lv_i, mv_u, mv_ull, mv_i.
    pub fn all(&self) -> Vec<Probe> {
        [&self.lv_u, &self.lv_i, &self.mv_u, &self.mv_ull, &self.mv_i]
            .into_iter()
            .flat_map(|a| a.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioCircuit {
    pub netlist: Netlist,
    pub probes: ScenarioProbes,
    pub transformers: [ElementId; 3],
    /// Node the MV phase voltages are referred to.
    pub mv_reference: NodeId,
    pub lv_neutral: NodeId,
    pub source_neutral: NodeId,
    pub mv_terminals: [NodeId; 3],
    pub lv_terminals: [NodeId; 3],
}

const PH: [&str; 3] = ["A", "B", "C"];

/// MV phase voltages are referred to earth where the MV network is
/// effectively earthed (grounded substation, or a Yy transformer grounded on
/// both sides); otherwise to the supply star point.
pub fn mv_reference_is_earth(spec: &CircuitSpec) -> bool {
    let yy_both = !spec.transformer.vector_group.is_delta_mv() && spec.mv_grounded && spec.lv_grounded;
    spec.grounding.is_grounded() || yy_both
}

pub fn build_scenario_circuit(spec: &CircuitSpec) -> Result<ScenarioCircuit> {
    spec.validate()?;
    let p = &spec.transformer;
    let vg = p.vector_group;
    let delta = vg.is_delta_mv();
    let zb = p.z_base();
    let w0 = p.omega_base();
    let zb_lv = p.v1_rated * p.v1_rated / p.s_rated;
    // delta windings carry line voltage: sqrt(3) ratio and 3x impedances
    let k: f64 = if delta { 3.0 } else { 1.0 };
    let ratio = p.ratio() * k.sqrt();

    let mut net = Netlist::new();

    let source_neutral = match spec.grounding {
        SourceGrounding::Solid => GROUND,
        SourceGrounding::Petersen { inductance } => {
            let n = net.node("src_n");
            net.inductor("petersen", n, GROUND, inductance);
            n
        }
        SourceGrounding::Isolated => {
            let n = net.node("src_n");
            net.resistor("src_n_leak", n, GROUND, LEAKAGE_RESISTANCE);
            n
        }
    };
    let mut mv = [GROUND; 3];
    for ph in 0..3 {
        let s = net.node(format!("src_{}", PH[ph]));
        net.voltage_source(format!("emf_{}", PH[ph]), s, source_neutral, spec.source.phase_wave(ph));
        mv[ph] = net.node(format!("mv_{}", PH[ph]));
        net.rl(format!("line_{}", PH[ph]), s, mv[ph], spec.line.r, spec.line.l);
    }

    let mv_neutral = if delta {
        None
    } else if spec.mv_grounded {
        Some(GROUND)
    } else {
        let n = net.node("mv_n");
        net.resistor("mv_n_leak", n, GROUND, LEAKAGE_RESISTANCE);
        Some(n)
    };
    let lv_neutral = if spec.lv_grounded {
        GROUND
    } else {
        let n = net.node("lv_n");
        net.resistor("lv_n_leak", n, GROUND, LEAKAGE_RESISTANCE);
        n
    };

    let mut series_mv = [0; 3];
    let mut series_lv = [0; 3];
    let mut transformers = [0; 3];
    let mut lv = [GROUND; 3];
    for ph in 0..3 {
        let name = PH[ph];
        // far end of the MV winding
        let bottom = match (mv_neutral, vg) {
            (Some(n), _) => n,
            (None, VectorGroup::Dy11) => mv[(ph + 2) % 3],
            (None, _) => mv[(ph + 1) % 3],
        };
        let m = net.node(format!("m_{name}"));
        series_mv[ph] = net.rl(format!("z2_{name}"), mv[ph], m, k * p.r2 * zb, k * p.l2 * zb / w0);
        net.resistor(format!("rm_{name}"), m, bottom, k * p.rm * zb);
        net.inductor(format!("lm_{name}"), m, bottom, k * p.lm * zb / w0);
        let pn = net.node(format!("p_{name}"));
        transformers[ph] = net.ideal_transformer(format!("xfmr_{name}"), (m, bottom), (pn, lv_neutral), ratio);
        lv[ph] = net.node(format!("lv_{name}"));
        series_lv[ph] = net.rl(format!("z1_{name}"), pn, lv[ph], p.r1 * zb_lv, p.l1 * zb_lv / w0);
        let load = net.rl(
            format!("load_{name}"),
            lv[ph],
            GROUND,
            spec.load[ph].r,
            spec.load[ph].l,
        );
        if let Some(step) = spec.load_step {
            net.set_rl_step(load, step.time, step.after[ph].r, step.after[ph].l)?;
        }
        if let Some(t) = spec.tap_step {
            let new_ratio = ratio * t.tap_ratio / p.tap_ratio;
            net.set_ratio_ramp(transformers[ph], t.time, t.time + t.ramp, new_ratio)?;
        }
    }

    if let Some(f) = spec.fault {
        let nodes = match f.side {
            FaultSide::MV => mv,
            FaultSide::LV => lv,
        };
        let tag = match f.side {
            FaultSide::MV => "mv",
            FaultSide::LV => "lv",
        };
        match f.kind {
            FaultType::LG => {
                net.switch(format!("fault_{tag}_AG"), nodes[0], GROUND, f.time, f.resistance);
            }
            FaultType::LL => {
                net.switch(format!("fault_{tag}_AB"), nodes[0], nodes[1], f.time, f.resistance);
            }
            FaultType::LLG => {
                net.switch(format!("fault_{tag}_AG"), nodes[0], GROUND, f.time, f.resistance);
                net.switch(format!("fault_{tag}_BG"), nodes[1], GROUND, f.time, f.resistance);
            }
            FaultType::None => {}
        }
    }

    let mv_reference = if mv_reference_is_earth(spec) {
        GROUND
    } else {
        source_neutral
    };
    let mv_i: [Probe; 3] = std::array::from_fn(|ph| {
        if delta {
            // line current = own winding current minus the one ending here
            let other = match vg {
                VectorGroup::Dy11 => (ph + 1) % 3,
                _ => (ph + 2) % 3,
            };
            Probe::Current(vec![(series_mv[ph], 1.0), (series_mv[other], -1.0)])
        } else {
            Probe::current(series_mv[ph])
        }
    });
    let probes = ScenarioProbes {
        lv_u: std::array::from_fn(|ph| {
            let reference = match spec.lv_voltage_reference {
                LvVoltageReference::Earth => GROUND,
                LvVoltageReference::StarPoint => lv_neutral,
            };
            Probe::Voltage(lv[ph], reference)
        }),
        lv_i: std::array::from_fn(|ph| Probe::current(series_lv[ph])),
        mv_u: std::array::from_fn(|ph| Probe::Voltage(mv[ph], mv_reference)),
        mv_ull: std::array::from_fn(|ph| Probe::Voltage(mv[ph], mv[(ph + 1) % 3])),
        mv_i,
    };
    Ok(ScenarioCircuit {
        netlist: net,
        probes,
        transformers,
        mv_reference,
        lv_neutral,
        source_neutral,
        mv_terminals: mv,
        lv_terminals: lv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::ElementKind;

    fn rated(p: &TransformerParams) -> LoadImpedance {
        LoadImpedance::rated_fraction(p, 1.0, 0.8)
    }

    #[test]
    fn yy0_topology() {
        let p = TransformerParams::simulation_50kva();
        let c = build_scenario_circuit(&CircuitSpec::new(p.clone(), rated(&p))).unwrap();
        let n = &c.netlist;
        // 3 sources, 3 lines, 3x(z2, rm, lm, xfmr, z1, load)
        assert_eq!(n.elements().len(), 3 + 3 + 18);
        for ph in 0..3 {
            let e = n.element(c.transformers[ph]);
            assert_eq!(e.b, GROUND);
            assert_eq!(e.d, GROUND);
        }
        assert_eq!(c.mv_reference, GROUND);
    }

    #[test]
    fn dy11_delta_wiring() {
        let p = TransformerParams::simulation_50kva().with_vector_group(VectorGroup::Dy11);
        let mut spec = CircuitSpec::new(p.clone(), rated(&p));
        spec.mv_grounded = false;
        let c = build_scenario_circuit(&spec).unwrap();
        let n = &c.netlist;
        let a = n.element(c.transformers[0]);
        assert_eq!(a.b, c.mv_terminals[2]);
        assert_eq!(a.d, GROUND);
        match a.kind {
            ElementKind::IdealTransformer { ratio, .. } => {
                assert!((ratio - 50.0 * 3f64.sqrt()).abs() < 1e-9)
            }
            _ => unreachable!(),
        }
        spec.mv_grounded = true;
        assert!(build_scenario_circuit(&spec).is_err());
    }

    #[test]
    fn mv_lg_fault_switch() {
        let p = TransformerParams::simulation_50kva();
        let mut spec = CircuitSpec::new(p.clone(), rated(&p));
        spec.fault = Some(FaultSpec {
            kind: FaultType::LG,
            side: FaultSide::MV,
            time: 0.2,
            resistance: 0.0,
        });
        let c = build_scenario_circuit(&spec).unwrap();
        let id = c.netlist.find_element("fault_mv_AG").unwrap();
        let e = c.netlist.element(id);
        assert_eq!((e.a, e.b), (c.mv_terminals[0], GROUND));
        assert_eq!(
            e.kind,
            ElementKind::Switch {
                close_time: 0.2,
                r_closed: crate::netlist::SWITCH_FLOOR
            }
        );
    }
}
