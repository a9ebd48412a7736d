//! Frequency response of the per-phase transformer models, MV-fed, with
//! all quantities referred to the MV side.
//!
//! Circuit `Full` is the T network: MV series impedance, magnetizing shunt,
//! LV series impedance. Circuit `Twin` lumps both series impedances on the
//! load side of the shunt, which sits directly at the source terminals.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use mvtwin_core::TransformerParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CircuitModel {
    Full,
    Twin,
}

/// Per-phase wye load in LV ohms and henries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadImpedance {
    pub r: f64,
    pub l: f64,
}

impl LoadImpedance {
    /// Load drawing `fraction` of rated power at the given lagging power
    /// factor and rated LV voltage.
    pub fn rated_fraction(params: &TransformerParams, fraction: f64, power_factor: f64) -> Self {
        let z = params.v1_rated * params.v1_rated / (params.s_rated * fraction);
        let x = z * (1.0 - power_factor * power_factor).sqrt();
        Self {
            r: z * power_factor,
            l: x / params.omega_base(),
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self {
            r: self.r * k,
            l: self.l * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub frequency: f64,
    pub voltage_gain_db: f64,
    pub voltage_phase_deg: f64,
    pub current_gain_db: f64,
    pub current_phase_deg: f64,
}

/// Complex load-voltage and load-current gains at one frequency.
pub fn gains(
    model: CircuitModel,
    params: &TransformerParams,
    load: LoadImpedance,
    frequency: f64,
) -> (Complex64, Complex64) {
    let zb = params.z_base();
    let w0 = params.omega_base();
    let w = 2.0 * PI * frequency;
    let a = params.ratio();
    let tap2 = params.tap_ratio * params.tap_ratio;
    let z = |r: f64, l: f64| Complex64::new(r, w * l);
    let z1 = z(params.r1 * tap2 * zb, params.l1 * tap2 * zb / w0);
    let z2 = z(params.r2 * zb, params.l2 * zb / w0);
    let zl = z(load.r * a * a, load.l * a * a);
    // at DC the magnetizing inductance is taken as open
    let y_sh = Complex64::new(1.0 / (params.rm * zb), 0.0)
        + if w > 0.0 {
            Complex64::new(0.0, -1.0 / (w * params.lm * zb / w0))
        } else {
            Complex64::new(0.0, 0.0)
        };
    let one = Complex64::new(1.0, 0.0);
    match model {
        CircuitModel::Twin => {
            let zs = z1 + z2;
            let i_l = one / (zs + zl);
            let i_in = y_sh + i_l;
            (zl * i_l, i_l / i_in)
        }
        CircuitModel::Full => {
            let z_branch = z1 + zl;
            let y_p = y_sh + one / z_branch;
            let z_p = one / y_p;
            let i_in = one / (z2 + z_p);
            let v_m = z_p * i_in;
            let i_l = v_m / z_branch;
            (zl * i_l, i_l / i_in)
        }
    }
}

fn db(c: Complex64) -> f64 {
    20.0 * c.norm().log10()
}

/// Gain and phase of load voltage and current relative to the source.
pub fn transfer_function(
    model: CircuitModel,
    params: &TransformerParams,
    load: LoadImpedance,
    freqs: &[f64],
) -> Vec<BodePoint> {
    freqs
        .iter()
        .map(|&f| {
            let (hv, hi) = gains(model, params, load, f);
            BodePoint {
                frequency: f,
                voltage_gain_db: db(hv),
                voltage_phase_deg: hv.arg().to_degrees(),
                current_gain_db: db(hi),
                current_phase_deg: hi.arg().to_degrees(),
            }
        })
        .collect()
}

/// `n` logarithmically spaced frequencies over `[f_lo, f_hi]`.
pub fn log_frequencies(f_lo: f64, f_hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![f_lo];
    }
    let (a, b) = (f_lo.ln(), f_hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}
