//! Uniformly sampled signals and the quantities derived from them.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Half-open range of sample indices.
pub type SampleRange = Range<usize>;

/// Amplitude below which a fundamental phasor is treated as absent.
const PHASOR_FLOOR: f64 = 1e-12;

/// A uniformly sampled scalar signal. Sample `n` is taken at `t0 + n / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    fs: f64,
    t0: f64,
    samples: Vec<f64>,
}

impl SampledWaveform {
    pub fn new(fs: f64, t0: f64, samples: Vec<f64>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::Shape("waveform needs at least one sample".into()));
        }
        Ok(Self { fs, t0, samples })
    }

    /// Samples `f(t)` at `n` points starting from `t0`.
    pub fn from_fn(fs: f64, t0: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..n).map(|k| f(t0 + k as f64 / fs)).collect();
        Self::new(fs, t0, samples)
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.fs
    }

    pub fn full_range(&self) -> SampleRange {
        0..self.samples.len()
    }

    /// Same timing, new sample values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        Self::new(self.fs, self.t0, samples)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            fs: self.fs,
            t0: self.t0,
            samples: self.samples.iter().map(|x| c * x).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn check_range(&self, window: &SampleRange) -> Result<()> {
        if window.start >= window.end || window.end > self.samples.len() {
            return Err(Error::Range {
                start: window.start,
                end: window.end,
                len: self.samples.len(),
            });
        }
        Ok(())
    }

    fn window(&self, window: &SampleRange) -> Result<&[f64]> {
        self.check_range(window)?;
        Ok(&self.samples[window.clone()])
    }
}

/// Instantaneous voltages and currents of one transformer side at one sample.
///
/// `u_line` holds AB, BC, CA in that order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ThreePhaseFrame {
    pub u_phase: [f64; 3],
    pub u_line: [f64; 3],
    pub i_line: [f64; 3],
}

impl ThreePhaseFrame {
    pub fn from_phase(u_phase: [f64; 3], i_line: [f64; 3]) -> Self {
        let u_line = [
            u_phase[0] - u_phase[1],
            u_phase[1] - u_phase[2],
            u_phase[2] - u_phase[0],
        ];
        Self {
            u_phase,
            u_line,
            i_line,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u_phase
            .iter()
            .chain(&self.u_line)
            .chain(&self.i_line)
            .all(|x| x.is_finite())
    }
}

/// One-sided DFT with sinusoid-amplitude scaling.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// `(frequency, complex amplitude)` for bins `0..=N/2`.
    pub bins: Vec<(f64, Complex64)>,
    pub window_len: usize,
    /// Set when the window is not an integer number of fundamental cycles.
    pub leakage: bool,
}

impl Spectrum {
    pub fn resolution(&self) -> f64 {
        if self.bins.len() > 1 {
            self.bins[1].0
        } else {
            0.0
        }
    }

    /// Amplitude at the bin nearest to `freq`.
    pub fn amplitude_at(&self, freq: f64) -> f64 {
        let df = self.resolution();
        if df == 0.0 {
            return self.bins.first().map(|b| b.1.norm()).unwrap_or(0.0);
        }
        let k = (freq / df).round() as usize;
        self.bins.get(k).map(|b| b.1.norm()).unwrap_or(0.0)
    }

    /// Amplitude of harmonic `h` of `f0`.
    pub fn harmonic(&self, f0: f64, h: usize) -> f64 {
        self.amplitude_at(f0 * h as f64)
    }
}

pub fn rms(w: &SampledWaveform, window: SampleRange) -> Result<f64> {
    let x = w.window(&window)?;
    let ss: f64 = x.iter().map(|v| v * v).sum();
    Ok((ss / x.len() as f64).sqrt())
}

fn check_pair(u: &SampledWaveform, i: &SampledWaveform) -> Result<()> {
    if u.fs != i.fs {
        return Err(Error::Shape(format!(
            "sampling rates differ: {} vs {}",
            u.fs, i.fs
        )));
    }
    if u.len() != i.len() {
        return Err(Error::Shape(format!(
            "lengths differ: {} vs {}",
            u.len(),
            i.len()
        )));
    }
    Ok(())
}

/// Mean of the instantaneous product over the window.
pub fn active_power(u: &SampledWaveform, i: &SampledWaveform, window: SampleRange) -> Result<f64> {
    check_pair(u, i)?;
    let uw = u.window(&window)?;
    let iw = i.window(&window)?;
    let sum: f64 = uw.iter().zip(iw).map(|(a, b)| a * b).sum();
    Ok(sum / uw.len() as f64)
}

/// RMS phasor of the component at `f0`, by projection onto a single DFT bin.
/// The phase is referred to `t = 0` using the sine convention,
/// so `A sin(wt + p)` maps to `A/sqrt(2) * exp(j p)`.
pub fn fundamental_phasor(w: &SampledWaveform, window: SampleRange, f0: f64) -> Result<Complex64> {
    let x = w.window(&window)?;
    let omega = 2.0 * PI * f0;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let t = w.time(window.start + k);
        // sin(wt + p) = Im(exp(j(wt + p)))
        acc += v * Complex64::from_polar(1.0, -omega * t);
    }
    // projection of A sin(wt+p) onto exp(-jwt) gives (A/2)(-j) exp(jp) per sample
    let scale = 2.0 / x.len() as f64;
    let peak = acc * scale * Complex64::new(0.0, 1.0);
    Ok(peak / 2f64.sqrt())
}

/// Fundamental-frequency reactive power `|U1||I1| sin(arg U1 - arg I1)`.
pub fn reactive_power(
    u: &SampledWaveform,
    i: &SampledWaveform,
    window: SampleRange,
    f0: f64,
) -> Result<f64> {
    check_pair(u, i)?;
    let u1 = fundamental_phasor(u, window.clone(), f0)?;
    let i1 = fundamental_phasor(i, window, f0)?;
    if u1.norm() < PHASOR_FLOOR || i1.norm() < PHASOR_FLOOR {
        return Err(Error::Degenerate(
            "fundamental component below numeric floor".into(),
        ));
    }
    Ok((u1 * i1.conj()).im)
}

/// Active and reactive power as time series, each sample computed over the
/// trailing fundamental cycle. Samples before the first full cycle use the
/// available prefix; callers should start metric windows at `cycle_len`.
pub fn power_series(
    u: &SampledWaveform,
    i: &SampledWaveform,
    f0: f64,
) -> Result<(SampledWaveform, SampledWaveform, usize)> {
    check_pair(u, i)?;
    let fs = u.fs;
    let m = (fs / f0).round().max(1.0) as usize;
    let n = u.len();
    let omega = 2.0 * PI * f0;

    // prefix sums of u*i and of the two signals projected on exp(-jwt)
    let mut pp = vec![0.0; n + 1];
    let mut pu = vec![Complex64::new(0.0, 0.0); n + 1];
    let mut pi = vec![Complex64::new(0.0, 0.0); n + 1];
    for k in 0..n {
        let e = Complex64::from_polar(1.0, -omega * u.time(k));
        pp[k + 1] = pp[k] + u.samples[k] * i.samples[k];
        pu[k + 1] = pu[k] + u.samples[k] * e;
        pi[k + 1] = pi[k] + i.samples[k] * e;
    }
    let mut p = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    for k in 0..n {
        let lo = (k + 1).saturating_sub(m);
        let len = (k + 1 - lo) as f64;
        p.push((pp[k + 1] - pp[lo]) / len);
        // |U||I| sin(dphi) with peak phasors (2/len * sum); RMS product halves it
        let uu = (pu[k + 1] - pu[lo]) * (2.0 / len);
        let ii = (pi[k + 1] - pi[lo]) * (2.0 / len);
        q.push((uu * ii.conj()).im / 2.0);
    }
    Ok((u.with_samples(p)?, u.with_samples(q)?, m))
}

/// Frequency from eleven consecutive positive-going zero crossings in the
/// whole record.
pub fn estimate_frequency(w: &SampledWaveform) -> Result<f64> {
    estimate_frequency_in(w, w.full_range())
}

/// Positive-going crossings are located by linear interpolation between the
/// straddling samples. A crossing is only accepted after the signal has been
/// below a small negative threshold since the previous one, which rejects
/// chatter from harmonics or noise near zero.
pub fn estimate_frequency_in(w: &SampledWaveform, window: SampleRange) -> Result<f64> {
    let x = w.window(&window)?;
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InsufficientData("signal is identically zero".into()));
    }
    let hysteresis = 0.05 * peak;
    let mut armed = false;
    let mut crossings: Vec<f64> = Vec::with_capacity(11);
    for k in 1..x.len() {
        let (a, b) = (x[k - 1], x[k]);
        if a < -hysteresis || b < -hysteresis {
            armed = true;
        }
        if armed && a < 0.0 && b >= 0.0 {
            let frac = -a / (b - a);
            crossings.push((window.start + k - 1) as f64 + frac);
            armed = false;
            if crossings.len() == 11 {
                break;
            }
        }
    }
    if crossings.len() < 11 {
        return Err(Error::InsufficientData(format!(
            "found {} positive-going zero crossings, need 11",
            crossings.len()
        )));
    }
    let span = (crossings[10] - crossings[0]) / w.fs;
    Ok(10.0 / span)
}

/// One-sided amplitude spectrum of the window. `f0` is only used to set the
/// leakage flag.
pub fn spectrum(w: &SampledWaveform, window: SampleRange, f0: f64) -> Result<Spectrum> {
    let x = w.window(&window)?;
    let n = x.len();
    if n < 2 {
        return Err(Error::Range {
            start: window.start,
            end: window.end,
            len: w.len(),
        });
    }
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let cycles = n as f64 * f0 / w.fs;
    let leakage = (cycles - cycles.round()).abs() > 1e-6;

    let df = w.fs / n as f64;
    let bins = (0..=n / 2)
        .map(|k| {
            let edge = k == 0 || (n % 2 == 0 && k == n / 2);
            let scale = if edge { 1.0 } else { 2.0 } / n as f64;
            (k as f64 * df, buf[k] * scale)
        })
        .collect();
    Ok(Spectrum {
        bins,
        window_len: n,
        leakage,
    })
}
