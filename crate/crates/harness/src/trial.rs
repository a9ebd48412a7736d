//! One Monte-Carlo trial: random conditions, simulation, measurement, twin,
//! and comparison against the simulated MV terminals.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mvtwin_circuitsim::measure::{resample, ChannelKind, Device, MeasurementModel, Sampling};
use mvtwin_circuitsim::scenario::{
    build_scenario_circuit, CircuitSpec, FaultSpec, LoadStep, SourceSpec, TapStep,
};
use mvtwin_circuitsim::{simulate, Init, LoadImpedance};
use mvtwin_core::metrics::{QuantityError, TrialErrors};
use mvtwin_core::twin::ThreePhaseTwin;
use mvtwin_core::waveform::{estimate_frequency, power_series, rms, SampleRange};
use mvtwin_core::{Quantity, SampledWaveform, TransformerParams};

use crate::config::{LoadModel, LoadTrajectory, ScenarioConfig, LOAD_L_RANGE, LOAD_R_RANGE};
use crate::error::{Result, StageExt};

/// Random conditions of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConditions {
    pub load_before: [LoadImpedance; 3],
    pub load_after: Option<[LoadImpedance; 3]>,
    pub source_phase: f64,
    pub source_asymmetry: [f64; 3],
    pub measurement_seed: u64,
}

/// Per-phase and three-phase-total breakdown behind the headline errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialDetail {
    pub v_phase: [QuantityError; 3],
    /// AB, BC, CA.
    pub v_line: [QuantityError; 3],
    pub i_line: [QuantityError; 3],
    pub p_total: QuantityError,
    pub q_total: QuantityError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub errors: TrialErrors,
    pub detail: TrialDetail,
    pub conditions: TrialConditions,
}

/// Waveforms of one trial at the device rate.
#[derive(Debug, Clone)]
pub struct TrialWaveforms {
    pub lv_u: [SampledWaveform; 3],
    pub lv_i: [SampledWaveform; 3],
    pub twin_u: [SampledWaveform; 3],
    pub twin_ull: [SampledWaveform; 3],
    pub twin_i: [SampledWaveform; 3],
    pub mv_u: [SampledWaveform; 3],
    pub mv_ull: [SampledWaveform; 3],
    pub mv_i: [SampledWaveform; 3],
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed of trial `index` of a scenario; independent of scheduling.
pub fn trial_seed(seed: u64, scenario_id: &str, index: u64) -> u64 {
    let h = fnv1a(seed.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    let h = fnv1a(scenario_id.bytes(), h);
    fnv1a(index.to_le_bytes(), h)
}

fn draw_load(rng: &mut ChaCha8Rng, model: LoadModel, params: &TransformerParams) -> LoadImpedance {
    match model {
        LoadModel::Random => LoadImpedance {
            r: rng.gen_range(LOAD_R_RANGE.0..=LOAD_R_RANGE.1),
            l: rng.gen_range(LOAD_L_RANGE.0..=LOAD_L_RANGE.1),
        },
        LoadModel::NearRated { fraction, spread } => {
            let k = if spread > 0.0 {
                1.0 + rng.gen_range(-spread..=spread)
            } else {
                1.0
            };
            LoadImpedance::rated_fraction(params, fraction, 0.8).scaled(k)
        }
    }
}

fn draw_loads(rng: &mut ChaCha8Rng, cfg: &ScenarioConfig) -> [LoadImpedance; 3] {
    if cfg.asymmetric_load {
        let a = draw_load(rng, cfg.load_model, &cfg.transformer);
        let b = draw_load(rng, cfg.load_model, &cfg.transformer);
        let c = draw_load(rng, cfg.load_model, &cfg.transformer);
        [a, b, c]
    } else {
        [draw_load(rng, cfg.load_model, &cfg.transformer); 3]
    }
}

fn total_impedance(loads: &[LoadImpedance; 3], w: f64) -> f64 {
    loads.iter().map(|l| l.r.hypot(w * l.l)).sum()
}

/// Draws the random conditions of a trial from its seed.
pub fn draw_conditions(cfg: &ScenarioConfig, seed: u64) -> TrialConditions {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = cfg.transformer.omega_base();
    let mut before = draw_loads(&mut rng, cfg);
    let after = match cfg.load {
        LoadTrajectory::Constant => None,
        traj => {
            let mut after = draw_loads(&mut rng, cfg);
            // an increase in power is a drop in impedance
            let increasing = total_impedance(&after, w) < total_impedance(&before, w);
            if increasing != (traj == LoadTrajectory::Increase) {
                std::mem::swap(&mut before, &mut after);
            }
            Some(after)
        }
    };
    let source_phase = rng.gen_range(0.0..2.0 * PI);
    let a = cfg.source_asymmetry;
    let source_asymmetry = if a > 0.0 {
        [(); 3].map(|_| 1.0 + rng.gen_range(-a..=a))
    } else {
        [1.0; 3]
    };
    TrialConditions {
        load_before: before,
        load_after: after,
        source_phase,
        source_asymmetry,
        measurement_seed: rng.gen(),
    }
}

/// Physical circuit of a trial.
pub fn circuit_spec(cfg: &ScenarioConfig, cond: &TrialConditions) -> CircuitSpec {
    let p = cfg.transformer.clone();
    let mut spec = CircuitSpec::new(p.clone(), cond.load_before[0]);
    spec.load = cond.load_before;
    spec.source = SourceSpec {
        harmonics: cfg.harmonics.as_ref().map(|h| h.components()).unwrap_or_default(),
        asymmetry: cond.source_asymmetry,
        ..SourceSpec::rated(&p, cond.source_phase)
    };
    spec.grounding = cfg.grounding;
    spec.mv_grounded = cfg.mv_grounded;
    spec.lv_grounded = cfg.lv_grounded;
    spec.lv_voltage_reference = cfg.lv_voltage_reference;
    spec.load_step = cond.load_after.map(|after| LoadStep {
        time: cfg.event_time,
        after,
    });
    spec.fault = cfg.fault.map(|f| FaultSpec {
        kind: f.kind,
        side: f.side,
        time: f.time,
        resistance: 0.0,
    });
    spec.tap_step = cfg.tap.map(|t| TapStep {
        time: t.time,
        ramp: t.ramp,
        tap_ratio: t.tap_ratio,
    });
    spec
}

fn measurement_model(cfg: &ScenarioConfig, seed: u64) -> MeasurementModel {
    let m = &cfg.measurement;
    MeasurementModel {
        fs: cfg.fs,
        voltage_accuracy: m.voltage_accuracy,
        current_accuracy: m.current_accuracy,
        sampling: m.sampling,
        noise: m.noise,
        seed,
    }
}

fn three<T>(mut f: impl FnMut(usize) -> Result<T>) -> Result<[T; 3]> {
    Ok([f(0)?, f(1)?, f(2)?])
}

/// Simulates, measures and runs the twin without computing metrics.
pub fn trial_waveforms(cfg: &ScenarioConfig, cond: &TrialConditions) -> Result<TrialWaveforms> {
    let spec = circuit_spec(cfg, cond);
    let circuit = build_scenario_circuit(&spec).stage("build circuit")?;
    let res = simulate(&circuit.netlist, cfg.dt, cfg.duration, Init::SteadyState, &circuit.probes.all())
        .stage("simulate")?;
    let w = &res.probes;

    let mut device = Device::new(measurement_model(cfg, cond.measurement_seed)).stage("measure")?;
    let lv_u = three(|p| device.measure(&w[p], ChannelKind::Voltage).stage("measure"))?;
    let lv_i = three(|p| device.measure(&w[3 + p], ChannelKind::Current).stage("measure"))?;
    let truth = |k: usize| resample(&w[k], cfg.fs, Sampling::Point).stage("reference");
    let mv_u = three(|p| truth(6 + p))?;
    let mv_ull = three(|p| truth(9 + p))?;
    let mv_i = three(|p| truth(12 + p))?;

    let mut twin = ThreePhaseTwin::new(cfg.transformer.clone(), cfg.fs).stage("twin")?;
    let taps: Vec<(usize, f64)> = cfg
        .tap
        .iter()
        .map(|t| (((t.time + 0.5 * t.ramp) * cfg.fs).round() as usize, t.tap_ratio))
        .collect();
    let rec = twin.run(&lv_u, &lv_i, &taps).stage("twin")?;
    Ok(TrialWaveforms {
        lv_u,
        lv_i,
        twin_u: rec.u_phase,
        twin_ull: rec.u_line,
        twin_i: rec.i_line,
        mv_u,
        mv_ull,
        mv_i,
    })
}

/// Samples the metrics are evaluated over.
pub fn metric_window(cfg: &ScenarioConfig, len: usize) -> Result<SampleRange> {
    let f0 = cfg.transformer.base_frequency;
    let cycle = 1.0 / f0;
    let idx = |t: f64| ((t * cfg.fs).round() as usize).min(len);
    let w = if let Some(f) = cfg.fault {
        idx(f.time)..idx(f.time + cfg.fault_cycles as f64 * cycle)
    } else if let Some(t) = cfg.tap {
        idx(t.time + t.ramp + cycle)..len
    } else if cfg.load != LoadTrajectory::Constant {
        mvtwin_core::metrics::event_window(cfg.fs, cfg.event_time, cfg.event_cycles, f0, len)
            .stage("metric window")?
    } else {
        idx(cycle)..len
    };
    if w.end <= w.start + 1 {
        return Err(crate::Error::Config(format!(
            "scenario {}: metric window {:?} is empty",
            cfg.id, w
        )));
    }
    Ok(w)
}

/// Low-signal floors: a fraction of nameplate phase voltage, line current
/// and per-phase power.
#[derive(Debug, Clone, Copy)]
struct Floors {
    v: f64,
    v_line: f64,
    i: f64,
    s_phase: f64,
}

impl Floors {
    fn new(cfg: &ScenarioConfig) -> Self {
        let p = &cfg.transformer;
        let k = cfg.low_signal_fraction;
        Self {
            v: k * p.mv_phase_voltage(),
            v_line: k * p.v2_rated,
            i: k * p.mv_line_current(),
            s_phase: k * p.s_rated / 3.0,
        }
    }
}

/// Headline error across phases. Under faults it is the worst phase that is
/// not below the signal floor, so a single miscalculated phase shows up.
fn combine(parts: &[QuantityError; 3], worst: bool) -> QuantityError {
    if !worst {
        return QuantityError::mean_of(parts);
    }
    let valid: Vec<&QuantityError> = parts.iter().filter(|e| !e.low_signal).collect();
    if valid.is_empty() {
        return QuantityError::mean_of(parts);
    }
    let pick = |f: fn(&QuantityError) -> Option<f64>| {
        valid.iter().filter_map(|e| f(e)).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
    };
    QuantityError {
        avg_error: pick(|e| Some(e.avg_error)).unwrap_or(0.0),
        max_point_error: pick(|e| e.max_point_error),
        low_signal: false,
    }
}

fn sum3(w: &[SampledWaveform; 3]) -> Result<SampledWaveform> {
    let n = w[0].len();
    let s = (0..n)
        .map(|k| w[0].samples()[k] + w[1].samples()[k] + w[2].samples()[k])
        .collect();
    Ok(w[0].with_samples(s)?)
}

/// Phases ordered by falling reference RMS.
fn by_strength(w: &[SampledWaveform; 3]) -> Result<[usize; 3]> {
    let r = three(|p| Ok(rms(&w[p], w[p].full_range())?))?;
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| r[b].total_cmp(&r[a]));
    Ok(order)
}

/// Relative frequency error on the strongest phase whose twin and reference
/// both give a reading; a phase collapsed by a fault may not.
fn frequency_error(twin: &[SampledWaveform; 3], truth: &[SampledWaveform; 3]) -> Result<QuantityError> {
    let mut last = None;
    for p in by_strength(truth)? {
        match (estimate_frequency(&twin[p]), estimate_frequency(&truth[p])) {
            (Ok(a), Ok(b)) => return Ok(QuantityError::scalar(a, b)),
            (Err(e), _) | (_, Err(e)) => last = Some(e),
        }
    }
    Err(last.expect("three phases tried")).stage("frequency")
}

/// Metrics of one trial from its waveforms.
pub fn evaluate(cfg: &ScenarioConfig, w: &TrialWaveforms, trial: u64) -> Result<(TrialErrors, TrialDetail)> {
    let window = metric_window(cfg, w.mv_u[0].len())?;
    let fl = Floors::new(cfg);
    let f0 = cfg.transformer.base_frequency;
    let cmp = |d: &SampledWaveform, r: &SampledWaveform, floor: f64| {
        QuantityError::compare(d, r, window.clone(), floor).stage("metrics")
    };
    let v_phase = three(|p| cmp(&w.twin_u[p], &w.mv_u[p], fl.v))?;
    let v_line = three(|p| cmp(&w.twin_ull[p], &w.mv_ull[p], fl.v_line))?;
    let i_line = three(|p| cmp(&w.twin_i[p], &w.mv_i[p], fl.i))?;

    // power series need one full cycle of history
    let pwin = window.start.max((cfg.fs / f0).round() as usize)..window.end;
    let pq = |u: &[SampledWaveform; 3], i: &[SampledWaveform; 3]| {
        three(|p| power_series(&u[p], &i[p], f0).stage("power"))
    };
    let twin_pq = pq(&w.twin_u, &w.twin_i)?;
    let ref_pq = pq(&w.mv_u, &w.mv_i)?;
    let pcmp = |d: &SampledWaveform, r: &SampledWaveform, floor: f64| {
        QuantityError::compare(d, r, pwin.clone(), floor).stage("metrics")
    };
    let p_phase = three(|p| pcmp(&twin_pq[p].0, &ref_pq[p].0, fl.s_phase))?;
    let q_phase = three(|p| pcmp(&twin_pq[p].1, &ref_pq[p].1, fl.s_phase))?;
    let total = |k: usize, src: &[(SampledWaveform, SampledWaveform, usize); 3]| {
        let parts = [0, 1, 2].map(|p| if k == 0 { src[p].0.clone() } else { src[p].1.clone() });
        sum3(&parts)
    };
    let p_total = pcmp(&total(0, &twin_pq)?, &total(0, &ref_pq)?, 3.0 * fl.s_phase)?;
    let q_total = pcmp(&total(1, &twin_pq)?, &total(1, &ref_pq)?, 3.0 * fl.s_phase)?;

    let worst = cfg.fault.is_some();
    let mut errors = TrialErrors::new(trial);
    errors.errors.insert(Quantity::V, combine(&v_phase, worst));
    errors.errors.insert(Quantity::I, combine(&i_line, worst));
    errors.errors.insert(Quantity::P, combine(&p_phase, worst));
    errors.errors.insert(Quantity::Q, combine(&q_phase, worst));
    errors.errors.insert(Quantity::Fv, frequency_error(&w.twin_u, &w.mv_u)?);
    errors.errors.insert(Quantity::Fi, frequency_error(&w.twin_i, &w.mv_i)?);
    let detail = TrialDetail {
        v_phase,
        v_line,
        i_line,
        p_total,
        q_total,
    };
    Ok((errors, detail))
}

/// Full pipeline for one trial seed.
pub fn run_trial(cfg: &ScenarioConfig, trial_seed: u64) -> Result<TrialErrors> {
    Ok(run_trial_detailed(cfg, 0, trial_seed)?.errors)
}

/// As [`run_trial`], keeping the per-phase breakdown and drawn conditions.
pub fn run_trial_detailed(cfg: &ScenarioConfig, trial: u64, trial_seed: u64) -> Result<TrialOutcome> {
    cfg.validate()?;
    let conditions = draw_conditions(cfg, trial_seed);
    let w = trial_waveforms(cfg, &conditions)?;
    let (errors, detail) = evaluate(cfg, &w, trial)?;
    Ok(TrialOutcome {
        errors,
        detail,
        conditions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{normal_scenarios, ScenarioConfig};

    #[test]
    fn seeds_differ_per_trial_and_scenario() {
        let a = trial_seed(1, "x", 0);
        assert_ne!(a, trial_seed(1, "x", 1));
        assert_ne!(a, trial_seed(1, "y", 0));
        assert_ne!(a, trial_seed(2, "x", 0));
        assert_eq!(a, trial_seed(1, "x", 0));
    }

    #[test]
    fn load_trajectories_are_ordered() {
        let w = 2.0 * PI * 50.0;
        for c in normal_scenarios() {
            for s in 0..20 {
                let cond = draw_conditions(&c, s);
                match c.load {
                    LoadTrajectory::Constant => assert!(cond.load_after.is_none()),
                    traj => {
                        let zb = total_impedance(&cond.load_before, w);
                        let za = total_impedance(&cond.load_after.unwrap(), w);
                        assert_eq!(za < zb, traj == LoadTrajectory::Increase);
                    }
                }
            }
        }
    }

    #[test]
    fn random_loads_within_ranges() {
        let c = ScenarioConfig::custom("t", 10_000.0);
        for s in 0..50 {
            let l = draw_conditions(&c, s).load_before[0];
            assert!((LOAD_R_RANGE.0..=LOAD_R_RANGE.1).contains(&l.r));
            assert!((LOAD_L_RANGE.0..=LOAD_L_RANGE.1).contains(&l.l));
        }
    }
}
