//! Filtering effect of the simplified twin circuit: frequency responses of
//! the full and twin circuits, and harmonic spectra of twin output against
//! the simulated MV terminals during a load increase.

use serde::{Deserialize, Serialize};

use mvtwin_circuitsim::bode::{transfer_function, BodePoint, CircuitModel, LoadImpedance};
use mvtwin_core::io::HarmonicProfile;
use mvtwin_core::waveform::{spectrum, SampledWaveform};
use mvtwin_core::TransformerParams;

use crate::config::{LoadModel, LoadTrajectory, ScenarioConfig};
use crate::error::{Result, StageExt};
use crate::trial::{trial_waveforms, TrialConditions};

/// Loadings of the study as fractions of rated power.
pub const STUDY_LOADS: [f64; 2] = [0.1, 1.0];

/// Highest frequency of the frequency responses.
pub const BODE_MAX_HZ: f64 = 10_000.0;

/// Harmonic range shown in the zoom table.
pub const ZOOM_ORDERS: std::ops::RangeInclusive<u32> = 20..=25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeTable {
    pub load_fraction: f64,
    pub load: LoadImpedance,
    pub full: Vec<BodePoint>,
    pub twin: Vec<BodePoint>,
}

impl BodeTable {
    /// Twin minus full voltage gain in dB at each frequency.
    pub fn voltage_gain_difference(&self) -> Vec<(f64, f64)> {
        self.full
            .iter()
            .zip(&self.twin)
            .map(|(f, t)| (f.frequency, t.voltage_gain_db - f.voltage_gain_db))
            .collect()
    }

    pub fn current_gain_difference(&self) -> Vec<(f64, f64)> {
        self.full
            .iter()
            .zip(&self.twin)
            .map(|(f, t)| (f.frequency, t.current_gain_db - f.current_gain_db))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicRow {
    pub order: u32,
    pub twin: f64,
    pub truth: f64,
    /// `|twin - truth| / truth`; zero when both vanish.
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComparison {
    pub fs: f64,
    pub voltage: Vec<HarmonicRow>,
    pub current: Vec<HarmonicRow>,
}

impl SpectrumComparison {
    pub fn zoom_voltage(&self) -> Vec<HarmonicRow> {
        self.voltage.iter().filter(|r| ZOOM_ORDERS.contains(&r.order)).copied().collect()
    }

    pub fn zoom_current(&self) -> Vec<HarmonicRow> {
        self.current.iter().filter(|r| ZOOM_ORDERS.contains(&r.order)).copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteringStudy {
    pub bode: Vec<BodeTable>,
    pub spectra: SpectrumComparison,
}

/// Frequency grid of the responses: every harmonic of `f0` up to 10 kHz.
pub fn bode_frequencies(f0: f64) -> Vec<f64> {
    let n = (BODE_MAX_HZ / f0).floor() as usize;
    (1..=n).map(|h| h as f64 * f0).collect()
}

pub fn bode_tables(params: &TransformerParams) -> Vec<BodeTable> {
    let freqs = bode_frequencies(params.base_frequency);
    STUDY_LOADS
        .iter()
        .map(|&frac| {
            let load = LoadImpedance::rated_fraction(params, frac, 0.8);
            BodeTable {
                load_fraction: frac,
                load,
                full: transfer_function(CircuitModel::Full, params, load, &freqs),
                twin: transfer_function(CircuitModel::Twin, params, load, &freqs),
            }
        })
        .collect()
}

fn harmonic_rows(twin: &SampledWaveform, truth: &SampledWaveform, f0: f64, max_order: u32) -> Result<Vec<HarmonicRow>> {
    // whole cycles only, so harmonics fall on bins
    let cycle = truth.fs() / f0;
    let cycles = ((truth.len() - 1) as f64 / cycle).floor();
    let n = (cycles * cycle).round() as usize;
    let start = truth.len() - n;
    let st = spectrum(twin, start..truth.len(), f0).stage("spectrum")?;
    let sr = spectrum(truth, start..truth.len(), f0).stage("spectrum")?;
    Ok((1..=max_order)
        .map(|h| {
            let (a, b) = (st.harmonic(f0, h as usize), sr.harmonic(f0, h as usize));
            HarmonicRow {
                order: h,
                twin: a,
                truth: b,
                relative_difference: if a == b { 0.0 } else { (a - b).abs() / b },
            }
        })
        .collect())
}

/// Scenario of the spectral comparison: load stepping from 10 % to 100 % of
/// rated at mid-record, standard harmonic profile.
pub fn load_increase_scenario(params: &TransformerParams, fs: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::custom(format!("filtering-{}k", (fs / 1000.0).round()), fs);
    c.transformer = params.clone();
    c.mv_grounded = !params.vector_group.is_delta_mv();
    c.load = LoadTrajectory::Increase;
    c.load_model = LoadModel::NearRated {
        fraction: 1.0,
        spread: 0.0,
    };
    c.harmonics = Some(HarmonicProfile::standard_limits());
    c
}

/// Harmonic amplitudes of twin output and MV reference (phase A) up to
/// `max_order`, over the whole record of the load-increase run.
pub fn spectrum_comparison(params: &TransformerParams, fs: f64, seed: u64, max_order: u32) -> Result<SpectrumComparison> {
    let cfg = load_increase_scenario(params, fs).with_seed(seed);
    cfg.validate()?;
    let cond = TrialConditions {
        load_before: [LoadImpedance::rated_fraction(params, STUDY_LOADS[0], 0.8); 3],
        load_after: Some([LoadImpedance::rated_fraction(params, STUDY_LOADS[1], 0.8); 3]),
        source_phase: 0.0,
        source_asymmetry: [1.0; 3],
        measurement_seed: seed,
    };
    let w = trial_waveforms(&cfg, &cond)?;
    let f0 = params.base_frequency;
    Ok(SpectrumComparison {
        fs,
        voltage: harmonic_rows(&w.twin_u[0], &w.mv_u[0], f0, max_order)?,
        current: harmonic_rows(&w.twin_i[0], &w.mv_i[0], f0, max_order)?,
    })
}

pub fn filtering_study(params: &TransformerParams, fs: f64, seed: u64) -> Result<FilteringStudy> {
    params.validate()?;
    Ok(FilteringStudy {
        bode: bode_tables(params),
        spectra: spectrum_comparison(params, fs, seed, 40)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_covers_harmonics_to_10khz() {
        let f = bode_frequencies(50.0);
        assert_eq!(f.len(), 200);
        assert_eq!(f[0], 50.0);
        assert_eq!(*f.last().unwrap(), 10_000.0);
    }

    #[test]
    fn both_loadings_have_matching_shapes() {
        let t = bode_tables(&TransformerParams::simulation_50kva());
        assert_eq!(t.len(), 2);
        for tab in &t {
            let d = tab.voltage_gain_difference();
            assert!(d[0].1.abs() < 0.5);
        }
        // the circuits drift apart above the 20th harmonic at both loadings
        for tab in &t {
            let d: Vec<f64> = tab.voltage_gain_difference().iter().skip(19).map(|x| x.1.abs()).collect();
            assert!(d.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
