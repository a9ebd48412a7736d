//! Model of the LV measurement device: resampling to its rate plus
//! amplitude error within the channel's accuracy class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mvtwin_core::SampledWaveform;

use crate::error::{Error, Result};

/// How the device turns the continuous signal into samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Instantaneous value at `n / fs`, linearly interpolated.
    Point,
    /// Mean over the preceding sample period `[n/fs - 1/fs, n/fs]`, as an
    /// integrating converter with a boxcar anti-alias response delivers.
    Integrating,
}

/// How the amplitude error is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Noise {
    /// Independent multiplicative error `1 + U(-a, a)` on every sample.
    PerSample,
    /// One gain error `1 + U(-a, a)` per channel and record.
    PerRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    Voltage,
    Current,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementModel {
    pub fs: f64,
    pub voltage_accuracy: f64,
    pub current_accuracy: f64,
    pub sampling: Sampling,
    pub noise: Noise,
    pub seed: u64,
}

impl MeasurementModel {
    /// Instantaneous sampling with independent per-sample error at the
    /// device's rated accuracies (0.1 % voltage, 1 % current).
    pub fn per_sample(fs: f64, seed: u64) -> Self {
        Self {
            fs,
            voltage_accuracy: 0.001,
            current_accuracy: 0.01,
            sampling: Sampling::Point,
            noise: Noise::PerSample,
            seed,
        }
    }

    /// Integrating converter with per-record gain error at the rated
    /// accuracies.
    pub fn integrating(fs: f64, seed: u64) -> Self {
        Self {
            sampling: Sampling::Integrating,
            noise: Noise::PerRecord,
            ..Self::per_sample(fs, seed)
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.voltage_accuracy = 0.0;
        self.current_accuracy = 0.0;
        self
    }

    pub fn accuracy(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::Voltage => self.voltage_accuracy,
            ChannelKind::Current => self.current_accuracy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Config(format!("sampling rate must be positive, got {}", self.fs)));
        }
        if !(self.voltage_accuracy >= 0.0 && self.current_accuracy >= 0.0) {
            return Err(Error::Config("accuracies must be >= 0".into()));
        }
        Ok(())
    }
}

/// Sample instants `n / fs` inside the record.
fn sample_count(w: &SampledWaveform, fs: f64) -> usize {
    let t_end = w.time(w.len() - 1);
    ((t_end - w.t0()) * fs + 1e-9).floor() as usize + 1
}

/// Linear interpolation of the internal signal at time `t`.
fn interpolate(w: &SampledWaveform, t: f64) -> f64 {
    let x = w.samples();
    let pos = ((t - w.t0()) * w.fs()).clamp(0.0, (x.len() - 1) as f64);
    let k = (pos.floor() as usize).min(x.len().saturating_sub(2));
    if x.len() == 1 {
        return x[0];
    }
    let f = pos - k as f64;
    x[k] + f * (x[k + 1] - x[k])
}

/// Resamples without any error.
pub fn resample(w: &SampledWaveform, fs: f64, sampling: Sampling) -> Result<SampledWaveform> {
    if fs > 0.5 * w.fs() {
        return Err(Error::Config(format!(
            "device rate {fs} Hz exceeds half the internal rate {} Hz",
            w.fs()
        )));
    }
    let n = sample_count(w, fs);
    let out: Vec<f64> = match sampling {
        Sampling::Point => (0..n).map(|k| interpolate(w, w.t0() + k as f64 / fs)).collect(),
        Sampling::Integrating => {
            // exact integral of the piecewise-linear signal
            let x = w.samples();
            let dt = 1.0 / w.fs();
            let mut cum = Vec::with_capacity(x.len());
            cum.push(0.0);
            for k in 1..x.len() {
                cum.push(cum[k - 1] + 0.5 * dt * (x[k - 1] + x[k]));
            }
            let integral = |t: f64| -> f64 {
                let pos = ((t - w.t0()) * w.fs()).clamp(0.0, (x.len() - 1) as f64);
                let k = (pos.floor() as usize).min(x.len().saturating_sub(2));
                let tau = (pos - k as f64) * dt;
                let slope = (x[k + 1] - x[k]) / dt;
                cum[k] + x[k] * tau + 0.5 * slope * tau * tau
            };
            let period = 1.0 / fs;
            (0..n)
                .map(|k| {
                    let t1 = w.t0() + k as f64 / fs;
                    let t0 = (t1 - period).max(w.t0());
                    if t1 - t0 <= 0.0 {
                        x[0]
                    } else {
                        (integral(t1) - integral(t0)) / (t1 - t0)
                    }
                })
                .collect()
        }
    };
    Ok(SampledWaveform::new(fs, w.t0(), out)?)
}

/// Measurement device holding the random stream for a set of channels.
#[derive(Debug, Clone)]
pub struct Device {
    model: MeasurementModel,
    rng: ChaCha8Rng,
}

impl Device {
    pub fn new(model: MeasurementModel) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed),
            model,
        })
    }

    pub fn model(&self) -> &MeasurementModel {
        &self.model
    }

    /// Samples one channel. Channels draw from the device's stream in call order.
    pub fn measure(&mut self, w: &SampledWaveform, kind: ChannelKind) -> Result<SampledWaveform> {
        let clean = resample(w, self.model.fs, self.model.sampling)?;
        let a = self.model.accuracy(kind);
        if a == 0.0 {
            return Ok(clean);
        }
        let samples = match self.model.noise {
            Noise::PerSample => clean
                .samples()
                .iter()
                .map(|v| v * (1.0 + self.rng.gen_range(-a..=a)))
                .collect(),
            Noise::PerRecord => {
                let g = 1.0 + self.rng.gen_range(-a..=a);
                clean.samples().iter().map(|v| v * g).collect()
            }
        };
        Ok(clean.with_samples(samples)?)
    }
}

/// Samples one waveform with a fresh device.
pub fn measure(w: &SampledWaveform, model: &MeasurementModel, kind: ChannelKind) -> Result<SampledWaveform> {
    Device::new(*model)?.measure(w, kind)
}
