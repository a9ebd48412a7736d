//! Waveform error metrics and their aggregation over Monte-Carlo trials.
//!
//! Both metrics are normalized by the RMS of the reference waveform over the
//! same window: the quadratic-mean deviation (`avg_error`) and the largest
//! absolute deviation (`max_point_error`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::waveform::{rms, SampleRange, SampledWaveform};

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.575_829_303_548_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantity {
    V,
    I,
    P,
    Q,
    Fv,
    Fi,
}

impl Quantity {
    pub const ALL: [Quantity; 6] = [
        Quantity::V,
        Quantity::I,
        Quantity::P,
        Quantity::Q,
        Quantity::Fv,
        Quantity::Fi,
    ];

    /// Frequencies are averaged over many cycles and have no point error.
    pub fn has_point_error(self) -> bool {
        !matches!(self, Quantity::Fv | Quantity::Fi)
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::V => "V",
            Quantity::I => "I",
            Quantity::P => "P",
            Quantity::Q => "Q",
            Quantity::Fv => "f_v",
            Quantity::Fi => "f_i",
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

fn check_pair(x_d: &SampledWaveform, x_r: &SampledWaveform, window: &SampleRange) -> Result<()> {
    if x_d.len() != x_r.len() || x_d.fs() != x_r.fs() {
        return Err(Error::Shape(format!(
            "twin and reference differ: {} samples at {} Hz vs {} samples at {} Hz",
            x_d.len(),
            x_d.fs(),
            x_r.len(),
            x_r.fs()
        )));
    }
    x_r.check_range(window)
}

fn normalize(dev: f64, reference_rms: f64) -> f64 {
    if dev == 0.0 {
        0.0
    } else {
        dev / reference_rms
    }
}

/// Quadratic-mean deviation over the window, as a fraction of the reference RMS.
pub fn avg_error(x_d: &SampledWaveform, x_r: &SampledWaveform, window: SampleRange) -> Result<f64> {
    check_pair(x_d, x_r, &window)?;
    let d = &x_d.samples()[window.clone()];
    let r = &x_r.samples()[window.clone()];
    let ss: f64 = d.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum();
    let dev = (ss / d.len() as f64).sqrt();
    Ok(normalize(dev, rms(x_r, window)?))
}

/// Largest absolute deviation over the window, as a fraction of the reference RMS.
pub fn max_point_error(
    x_d: &SampledWaveform,
    x_r: &SampledWaveform,
    window: SampleRange,
) -> Result<f64> {
    check_pair(x_d, x_r, &window)?;
    let d = &x_d.samples()[window.clone()];
    let r = &x_r.samples()[window.clone()];
    let dev = d
        .iter()
        .zip(r)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(normalize(dev, rms(x_r, window)?))
}

/// Both metrics for one quantity of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityError {
    pub avg_error: f64,
    /// Absent for frequencies.
    pub max_point_error: Option<f64>,
    /// Reference RMS fell below the configured floor.
    pub low_signal: bool,
}

impl QuantityError {
    /// Compares two waveforms; `rms_floor` is in the waveform's unit.
    pub fn compare(
        x_d: &SampledWaveform,
        x_r: &SampledWaveform,
        window: SampleRange,
        rms_floor: f64,
    ) -> Result<Self> {
        let reference_rms = rms(x_r, window.clone())?;
        Ok(Self {
            avg_error: avg_error(x_d, x_r, window.clone())?,
            max_point_error: Some(max_point_error(x_d, x_r, window)?),
            low_signal: reference_rms < rms_floor,
        })
    }

    /// Relative error of a scalar estimate (used for frequency).
    pub fn scalar(estimate: f64, reference: f64) -> Self {
        Self {
            avg_error: normalize((estimate - reference).abs(), reference.abs()),
            max_point_error: None,
            low_signal: false,
        }
    }

    /// Averages per-phase results into one quantity; flagged if any phase is.
    pub fn mean_of(parts: &[QuantityError]) -> Self {
        let n = parts.len() as f64;
        let avg = parts.iter().map(|p| p.avg_error).sum::<f64>() / n;
        let max = if parts.iter().all(|p| p.max_point_error.is_some()) {
            Some(parts.iter().filter_map(|p| p.max_point_error).sum::<f64>() / n)
        } else {
            None
        };
        Self {
            avg_error: avg,
            max_point_error: max,
            low_signal: parts.iter().any(|p| p.low_signal),
        }
    }
}

/// Metrics of one Monte-Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialErrors {
    pub trial: u64,
    pub errors: BTreeMap<Quantity, QuantityError>,
}

impl TrialErrors {
    pub fn new(trial: u64) -> Self {
        Self {
            trial,
            errors: BTreeMap::new(),
        }
    }

    pub fn get(&self, q: Quantity) -> Option<&QuantityError> {
        self.errors.get(&q)
    }
}

/// Mean, maximum and minimum of one metric across trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over trials that were not low-signal flagged; `None` if all were.
    pub avg: Option<f64>,
    pub max: f64,
    pub min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub avg_error: Summary,
    pub max_point_error: Option<Summary>,
    pub low_signal_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInfo {
    pub level: f64,
    pub relative_half_width_target: f64,
    /// Achieved relative half-width per quantity.
    pub relative_half_width: BTreeMap<Quantity, f64>,
    pub target_met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub trials: usize,
    pub quantities: BTreeMap<Quantity, QuantityStats>,
    pub confidence: Option<ConfidenceInfo>,
}

impl ScenarioStats {
    pub fn get(&self, q: Quantity) -> Option<&QuantityStats> {
        self.quantities.get(&q)
    }

    /// Mean avg_error of a quantity, if any unflagged trial contributed.
    pub fn mean_avg_error(&self, q: Quantity) -> Option<f64> {
        self.get(q).and_then(|s| s.avg_error.avg)
    }
}

#[derive(Debug, Clone, Copy)]
struct Running {
    sum: f64,
    sum_sq: f64,
    count: usize,
    max: f64,
    min: f64,
}

impl Default for Running {
    fn default() -> Self {
        Self {
            sum: 0.0,
            sum_sq: 0.0,
            count: 0,
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
        }
    }
}

impl Running {
    fn push(&mut self, x: f64, include_in_mean: bool) {
        self.max = self.max.max(x);
        self.min = self.min.min(x);
        if include_in_mean {
            self.sum += x;
            self.sum_sq += x * x;
            self.count += 1;
        }
    }

    fn merge(&mut self, o: &Running) {
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.count += o.count;
        self.max = self.max.max(o.max);
        self.min = self.min.min(o.min);
    }

    fn summary(&self) -> Summary {
        Summary {
            avg: (self.count > 0).then(|| self.sum / self.count as f64),
            max: self.max,
            min: self.min,
        }
    }

    fn relative_half_width(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        let hw = Z_99 * (var / n).sqrt();
        if hw == 0.0 {
            0.0
        } else {
            hw / mean.abs()
        }
    }
}

#[derive(Debug, Clone, Default)]
struct QuantityAcc {
    avg: Running,
    max_point: Option<Running>,
    low_signal: usize,
}

/// Order-independent fold over trials; partial accumulators merge exactly
/// up to floating-point summation order.
#[derive(Debug, Clone, Default)]
pub struct StatsAccumulator {
    trials: usize,
    per: BTreeMap<Quantity, QuantityAcc>,
}

impl StatsAccumulator {
    pub fn push(&mut self, t: &TrialErrors) {
        self.trials += 1;
        for (q, e) in &t.errors {
            let acc = self.per.entry(*q).or_default();
            acc.avg.push(e.avg_error, !e.low_signal);
            if let Some(m) = e.max_point_error {
                acc.max_point
                    .get_or_insert_with(Running::default)
                    .push(m, !e.low_signal);
            }
            if e.low_signal {
                acc.low_signal += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.trials += other.trials;
        for (q, o) in &other.per {
            let acc = self.per.entry(*q).or_default();
            acc.avg.merge(&o.avg);
            match (&mut acc.max_point, &o.max_point) {
                (Some(a), Some(b)) => a.merge(b),
                (None, Some(b)) => acc.max_point = Some(*b),
                _ => {}
            }
            acc.low_signal += o.low_signal;
        }
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Relative 99% half-width of the mean avg_error per quantity.
    pub fn relative_half_widths(&self) -> BTreeMap<Quantity, f64> {
        self.per
            .iter()
            .map(|(q, a)| (*q, a.avg.relative_half_width()))
            .collect()
    }

    pub fn finish(&self) -> Result<ScenarioStats> {
        if self.trials == 0 {
            return Err(Error::InsufficientData("no trials to aggregate".into()));
        }
        let quantities = self
            .per
            .iter()
            .map(|(q, a)| {
                (
                    *q,
                    QuantityStats {
                        avg_error: a.avg.summary(),
                        max_point_error: a.max_point.map(|m| m.summary()),
                        low_signal_trials: a.low_signal,
                    },
                )
            })
            .collect();
        Ok(ScenarioStats {
            trials: self.trials,
            quantities,
            confidence: None,
        })
    }
}

/// Mean, maximum and minimum of both metrics per quantity. Low-signal trials
/// count towards max/min and the flagged count but not the mean.
pub fn aggregate(trials: &[TrialErrors]) -> Result<ScenarioStats> {
    let mut acc = StatsAccumulator::default();
    for t in trials {
        acc.push(t);
    }
    acc.finish()
}

/// Sample range `[event - c/f0, event + c/f0)` for a record starting at t = 0.
pub fn event_window(
    fs: f64,
    event_time: f64,
    cycles_each_side: u32,
    f0: f64,
    record_len: usize,
) -> Result<SampleRange> {
    if cycles_each_side == 0 {
        return Err(Error::Range {
            start: 0,
            end: 0,
            len: record_len,
        });
    }
    let half = cycles_each_side as f64 / f0;
    let start = (event_time - half) * fs;
    let end = (event_time + half) * fs;
    if start < 0.0 || end.round() as usize > record_len {
        return Err(Error::Range {
            start: start.max(0.0).round() as usize,
            end: end.round() as usize,
            len: record_len,
        });
    }
    Ok(start.round() as usize..end.round() as usize)
}
