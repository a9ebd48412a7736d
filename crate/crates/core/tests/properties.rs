use std::f64::consts::PI;

use mvtwin_core::io::{format_waveform_csv, parse_waveform_csv, WaveformSet};
use mvtwin_core::metrics::{avg_error, max_point_error};
use mvtwin_core::twin::{compose_three_phase, twin_step, TwinCircuit, TwinState};
use mvtwin_core::waveform::{active_power, power_series, rms};
use mvtwin_core::{SampledWaveform, TransformerParams, VectorGroup};
use proptest::prelude::*;

fn sine(fs: f64, n: usize, amp: f64, phase: f64) -> SampledWaveform {
    SampledWaveform::from_fn(fs, 0.0, n, |t| amp * (2.0 * PI * 50.0 * t + phase).sin()).unwrap()
}

proptest! {
    #[test]
    fn metrics_are_scale_invariant(amp in 0.1f64..1e4, gain in 0.5f64..2.0, scale in 1e-3f64..1e3) {
        let r = sine(5000.0, 400, amp, 0.3);
        let d = r.scaled(gain);
        let e1 = avg_error(&d, &r, 0..400).unwrap();
        let e2 = avg_error(&d.scaled(scale), &r.scaled(scale), 0..400).unwrap();
        prop_assert!((e1 - e2).abs() <= 1e-9 * e1.max(1e-12));
        prop_assert!((e1 - (gain - 1.0).abs()).abs() < 1e-9);
        let m = max_point_error(&d, &r, 0..400).unwrap();
        prop_assert!(m + 1e-12 >= e1);
    }

    #[test]
    fn max_point_bounds_avg(xs in prop::collection::vec(-10.0f64..10.0, 8..64), noise in prop::collection::vec(-1.0f64..1.0, 64)) {
        let r = SampledWaveform::new(1000.0, 0.0, xs.iter().map(|x| x + 20.0).collect()).unwrap();
        let d = r.with_samples(r.samples().iter().zip(&noise).map(|(a, b)| a + b).collect()).unwrap();
        let w = r.full_range();
        prop_assert!(max_point_error(&d, &r, w.clone()).unwrap() + 1e-12 >= avg_error(&d, &r, w).unwrap());
    }

    #[test]
    fn csv_round_trip(vals in prop::collection::vec(prop::num::f64::NORMAL, 6 * 5), fs in 1.0f64..1e5) {
        let ws: Vec<SampledWaveform> = (0..6)
            .map(|c| SampledWaveform::new(fs, 0.0, vals[c * 5..c * 5 + 5].to_vec()).unwrap())
            .collect();
        let u = [ws[0].clone(), ws[1].clone(), ws[2].clone()];
        let i = [ws[3].clone(), ws[4].clone(), ws[5].clone()];
        let set = WaveformSet::from_phases(&u, &i).unwrap();
        let back = parse_waveform_csv(&format_waveform_csv(&set)).unwrap();
        for (c, w) in &set.channels {
            let b = back.get(*c).unwrap();
            prop_assert!(w.samples().iter().zip(b.samples()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    /// With an ideal circuit the twin is a pure ratio scaling.
    #[test]
    fn ideal_twin_scales(us in prop::collection::vec(-500.0f64..500.0, 2..40), a in 1.0f64..100.0) {
        let c = TwinCircuit::ideal(a);
        let mut st = TwinState::default();
        for (k, u) in us.iter().enumerate() {
            let i = 0.01 * u + k as f64;
            let out = twin_step(&mut st, u * a, i / a, &c, 1e4, 1.0);
            prop_assert!((out.u2 - u * a).abs() <= 1e-9 * (u * a).abs().max(1.0));
            prop_assert!((out.i2 - i / a).abs() <= 1e-12 * (i / a).abs().max(1.0));
        }
    }

    /// The twin is linear in its inputs.
    #[test]
    fn twin_is_linear(u in prop::collection::vec(-1e3f64..1e3, 10), i in prop::collection::vec(-10.0f64..10.0, 10), k in -3.0f64..3.0) {
        let c = TransformerParams::simulation_50kva().twin_circuit();
        let run = |s: f64| {
            let mut st = TwinState::default();
            (0..10).map(|n| twin_step(&mut st, s * u[n], s * i[n], &c, 3e4, 1.0)).collect::<Vec<_>>()
        };
        let base = run(1.0);
        let scaled = run(k);
        for (b, s) in base.iter().zip(&scaled) {
            prop_assert!((s.u2 - k * b.u2).abs() <= 1e-9 * b.u2.abs().max(1.0));
            prop_assert!((s.i2 - k * b.i2).abs() <= 1e-9 * b.i2.abs().max(1.0));
        }
    }

    /// Delta composition removes any common-mode component.
    #[test]
    fn delta_composition_drops_zero_sequence(x in prop::array::uniform3(-1e4f64..1e4), z in -1e4f64..1e4) {
        for vg in [VectorGroup::Dy1, VectorGroup::Dy11] {
            let a = compose_three_phase(x, x, vg);
            let b = compose_three_phase([x[0] + z, x[1] + z, x[2] + z], x, vg);
            for p in 0..3 {
                prop_assert!((a.u_phase[p] - b.u_phase[p]).abs() < 1e-7);
            }
            prop_assert!(a.u_phase.iter().sum::<f64>().abs() < 1e-7);
        }
    }

    /// Over whole cycles the sliding-window P equals the direct mean of u*i.
    #[test]
    fn power_series_matches_direct(phi in -PI..PI, amp_u in 1.0f64..400.0, amp_i in 0.1f64..100.0) {
        let fs = 5000.0;
        let u = sine(fs, 500, amp_u, 0.0);
        let i = sine(fs, 500, amp_i, -phi);
        let (p, q, m) = power_series(&u, &i, 50.0).unwrap();
        let direct = active_power(&u, &i, 400 - m + 1..401).unwrap();
        let s = amp_u * amp_i / 2.0;
        prop_assert!((p.samples()[400] - direct).abs() < 1e-9 * s);
        prop_assert!((p.samples()[400] - s * phi.cos()).abs() < 1e-9 * s);
        prop_assert!((q.samples()[400] - s * phi.sin()).abs() < 1e-9 * s);
        let _ = rms(&u, 0..m).unwrap();
    }
}

#[test]
fn waveform_file_round_trip() {
    use mvtwin_core::io::{read_waveform_csv, write_waveform_csv};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.csv");
    let u = [sine(4000.0, 80, 325.0, 0.0), sine(4000.0, 80, 325.0, -2.1), sine(4000.0, 80, 325.0, 2.1)];
    let i = [sine(4000.0, 80, 7.5, 0.3), sine(4000.0, 80, 7.5, -1.8), sine(4000.0, 80, 7.5, 2.4)];
    let set = WaveformSet::from_phases(&u, &i).unwrap().with_metadata("seed", 3);
    write_waveform_csv(&path, &set).unwrap();
    let back = read_waveform_csv(&path).unwrap();
    assert_eq!(back.channels, set.channels);
    assert!(back.header.metadata.iter().any(|(k, v)| k == "seed" && v == "3"));
}

#[test]
fn presets_round_trip_through_files() {
    use mvtwin_core::io::{format_config, preset, read_config};
    let dir = tempfile::tempdir().unwrap();
    for name in ["simulation", "field"] {
        let cfg = preset(name).unwrap();
        let path = dir.path().join(format!("{name}.toml"));
        std::fs::write(&path, format_config(&cfg).unwrap()).unwrap();
        assert_eq!(read_config(&path).unwrap(), cfg);
    }
}
