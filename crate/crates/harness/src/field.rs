//! Comparison of twin output against a recorded MV waveform set.

use std::collections::BTreeMap;

use mvtwin_core::io::WaveformSet;
use mvtwin_core::metrics::{QuantityError, TrialErrors};
use mvtwin_core::twin::{ThreePhaseTwin, TwinRecord};
use mvtwin_core::waveform::{estimate_frequency, power_series, rms, SampleRange};
use mvtwin_core::{Quantity, SampledWaveform, ScenarioStats, TransformerParams};

use crate::config::ScenarioConfig;
use crate::error::{Error, Result, StageExt};
use crate::run::{summarize, Provenance, RunReport, VERSION};

const PH: [&str; 3] = ["A", "B", "C"];

fn check_aligned(lv: &WaveformSet, mv: &WaveformSet, fs: Option<f64>) -> Result<()> {
    let misaligned = |m: String| Err(Error::Core(mvtwin_core::Error::Alignment(m)));
    if lv.fs() != mv.fs() {
        return misaligned(format!("LV at {} Hz, MV at {} Hz", lv.fs(), mv.fs()));
    }
    if lv.len() != mv.len() {
        return misaligned(format!("LV has {} samples, MV has {}", lv.len(), mv.len()));
    }
    if let Some(fs) = fs {
        if (fs - lv.fs()).abs() > 1e-9 * fs {
            return misaligned(format!("recordings are at {} Hz, expected {fs} Hz", lv.fs()));
        }
    }
    let (a, b) = (lv.voltages()?, mv.voltages()?);
    if (a[0].t0() - b[0].t0()).abs() > 0.5 / lv.fs() {
        return misaligned(format!("start times differ: {} s vs {} s", a[0].t0(), b[0].t0()));
    }
    Ok(())
}

/// Deviation normalized by a nameplate value instead of the reference RMS.
fn nameplate_error(d: &SampledWaveform, r: &SampledWaveform, window: SampleRange, nominal: f64) -> QuantityError {
    let dd = &d.samples()[window.clone()];
    let rr = &r.samples()[window];
    let ss: f64 = dd.iter().zip(rr).map(|(a, b)| (a - b) * (a - b)).sum();
    let max = dd.iter().zip(rr).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    QuantityError {
        avg_error: (ss / dd.len() as f64).sqrt() / nominal,
        max_point_error: Some(max / nominal),
        low_signal: false,
    }
}

fn sum3(w: [&SampledWaveform; 3]) -> Result<SampledWaveform> {
    let s = (0..w[0].len())
        .map(|k| w[0].samples()[k] + w[1].samples()[k] + w[2].samples()[k])
        .collect();
    Ok(w[0].with_samples(s)?)
}

/// Metrics of a twin record against MV recordings of phase voltage and line
/// current, over everything after the first fundamental cycle.
pub fn compare_record(
    rec: &TwinRecord,
    mv_u: &[SampledWaveform; 3],
    mv_i: &[SampledWaveform; 3],
    params: &TransformerParams,
) -> Result<(TrialErrors, BTreeMap<String, QuantityError>)> {
    let f0 = params.base_frequency;
    let fs = mv_u[0].fs();
    let n = mv_u[0].len();
    let cycle = (fs / f0).round() as usize;
    if n < 2 * cycle {
        return Err(Error::Core(mvtwin_core::Error::InsufficientData(format!(
            "recording of {n} samples is shorter than two cycles"
        ))));
    }
    let window = cycle.max(rec.warmup)..n;
    let (v_nom, i_nom, s_nom) = (params.mv_phase_voltage(), params.mv_line_current(), params.s_rated);
    let mut detail = BTreeMap::new();
    let mut parts: BTreeMap<Quantity, Vec<QuantityError>> = BTreeMap::new();
    let mut p_sets = Vec::new();
    for p in 0..3 {
        let v = QuantityError::compare(&rec.u_phase[p], &mv_u[p], window.clone(), 0.0).stage("metrics")?;
        let i = QuantityError::compare(&rec.i_line[p], &mv_i[p], window.clone(), 0.0).stage("metrics")?;
        let (pt, qt, _) = power_series(&rec.u_phase[p], &rec.i_line[p], f0).stage("power")?;
        let (pr, qr, _) = power_series(&mv_u[p], &mv_i[p], f0).stage("power")?;
        let pe = QuantityError::compare(&pt, &pr, window.clone(), 0.0).stage("metrics")?;
        let qe = QuantityError::compare(&qt, &qr, window.clone(), 0.0).stage("metrics")?;
        detail.insert(format!("V_{}", PH[p]), v);
        detail.insert(format!("I_{}", PH[p]), i);
        detail.insert(format!("P_{}", PH[p]), pe);
        detail.insert(format!("Q_{}", PH[p]), qe);
        detail.insert(
            format!("V_{}_nameplate", PH[p]),
            nameplate_error(&rec.u_phase[p], &mv_u[p], window.clone(), v_nom),
        );
        detail.insert(
            format!("I_{}_nameplate", PH[p]),
            nameplate_error(&rec.i_line[p], &mv_i[p], window.clone(), i_nom),
        );
        for (q, e) in [(Quantity::V, v), (Quantity::I, i), (Quantity::P, pe), (Quantity::Q, qe)] {
            parts.entry(q).or_default().push(e);
        }
        p_sets.push((pt, qt, pr, qr));
    }
    let total = |k: usize| -> Result<(SampledWaveform, SampledWaveform)> {
        let pick = |s: &(SampledWaveform, SampledWaveform, SampledWaveform, SampledWaveform), twin: bool| {
            match (k, twin) {
                (0, true) => s.0.clone(),
                (0, false) => s.2.clone(),
                (_, true) => s.1.clone(),
                (_, false) => s.3.clone(),
            }
        };
        let t: Vec<SampledWaveform> = p_sets.iter().map(|s| pick(s, true)).collect();
        let r: Vec<SampledWaveform> = p_sets.iter().map(|s| pick(s, false)).collect();
        Ok((sum3([&t[0], &t[1], &t[2]])?, sum3([&r[0], &r[1], &r[2]])?))
    };
    for (k, name) in [(0, "P"), (1, "Q")] {
        let (t, r) = total(k)?;
        detail.insert(
            format!("{name}_total"),
            QuantityError::compare(&t, &r, window.clone(), 0.0).stage("metrics")?,
        );
        detail.insert(format!("{name}_total_nameplate"), nameplate_error(&t, &r, window.clone(), s_nom));
    }

    let mut errors = TrialErrors::new(0);
    for (q, v) in &parts {
        errors.errors.insert(*q, QuantityError::mean_of(v));
    }
    // frequency needs eleven crossings; short recordings go without
    let strongest = |w: &[SampledWaveform; 3]| -> Result<usize> {
        let r: Vec<f64> = w.iter().map(|x| rms(x, x.full_range())).collect::<std::result::Result<_, _>>()?;
        Ok((0..3).fold(0, |b, p| if r[p] > r[b] { p } else { b }))
    };
    let (pv, pi) = (strongest(mv_u)?, strongest(mv_i)?);
    if let (Ok(a), Ok(b)) = (estimate_frequency(&rec.u_phase[pv]), estimate_frequency(&mv_u[pv])) {
        errors.errors.insert(Quantity::Fv, QuantityError::scalar(a, b));
    }
    if let (Ok(a), Ok(b)) = (estimate_frequency(&rec.i_line[pi]), estimate_frequency(&mv_i[pi])) {
        errors.errors.insert(Quantity::Fi, QuantityError::scalar(a, b));
    }
    Ok((errors, detail))
}

/// Runs the twin on the LV recording and scores it against the MV recording.
/// The recordings must share rate, length and start time; no
/// resynchronization is attempted.
pub fn field_compare(
    lv: &WaveformSet,
    mv: &WaveformSet,
    params: &TransformerParams,
    fs: Option<f64>,
) -> Result<RunReport> {
    check_aligned(lv, mv, fs)?;
    let fs = lv.fs();
    let mut twin = ThreePhaseTwin::new(params.clone(), fs).stage("twin")?;
    let rec = twin.run(&lv.voltages()?, &lv.currents()?, &[]).stage("twin")?;
    let (errors, detail) = compare_record(&rec, &mv.voltages()?, &mv.currents()?, params)?;
    let mut stats: ScenarioStats = mvtwin_core::metrics::aggregate(std::slice::from_ref(&errors))?;
    stats.confidence = None;
    let detail = detail
        .into_iter()
        .map(|(k, e)| Ok((k, summarize(std::iter::once(e))?)))
        .collect::<Result<_>>()?;
    let mut config = ScenarioConfig::custom("field-compare", fs);
    config.transformer = params.clone();
    config.trials = crate::config::TrialCount::Fixed(1);
    Ok(RunReport {
        scenario_id: config.id.clone(),
        standard: false,
        stats,
        detail,
        predicted: None,
        provenance: Provenance {
            scenario_id: config.id.clone(),
            seed: 0,
            // recordings are not simulated
            dt: 0.0,
            trials: 1,
            version: VERSION.to_string(),
            config,
        },
        artifacts: Vec::new(),
        trials: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine_set(fs: f64, n: usize, amp_u: f64, amp_i: f64) -> WaveformSet {
        let w = |amp: f64, ph: usize| {
            SampledWaveform::from_fn(fs, 0.0, n, |t| {
                amp * (2.0 * std::f64::consts::PI * 50.0 * t - ph as f64 * 2.0944).sin()
            })
            .unwrap()
        };
        WaveformSet::from_phases(&[w(amp_u, 0), w(amp_u, 1), w(amp_u, 2)], &[w(amp_i, 0), w(amp_i, 1), w(amp_i, 2)])
            .unwrap()
    }

    #[test]
    fn self_consistent_pair_scores_zero() {
        let p = TransformerParams::field_630kva();
        let lv = sine_set(13_200.0, 13_200 / 2, 325.0, 1000.0);
        let mut twin = ThreePhaseTwin::new(p.clone(), lv.fs()).unwrap();
        let rec = twin.run(&lv.voltages().unwrap(), &lv.currents().unwrap(), &[]).unwrap();
        let mv = WaveformSet::from_phases(&rec.u_phase, &rec.i_line).unwrap();
        let r = field_compare(&lv, &mv, &p, Some(13_200.0)).unwrap();
        for q in Quantity::ALL {
            assert_eq!(r.mean(q), Some(0.0), "{q}");
        }
        assert!(r.detail.values().all(|s| s.avg_error.max == 0.0));
    }

    #[test]
    fn misaligned_lengths_rejected() {
        let p = TransformerParams::field_630kva();
        let lv = sine_set(10_000.0, 1000, 325.0, 100.0);
        let mv = sine_set(10_000.0, 999, 325.0, 100.0);
        let e = field_compare(&lv, &mv, &p, None).unwrap_err();
        assert!(matches!(e, Error::Core(mvtwin_core::Error::Alignment(_))), "{e}");
    }
}
