use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64;

use mvtwin_core::io::{read_waveform_csv, write_waveform_csv, Channel, WaveformSet};
use mvtwin_core::waveform::fundamental_phasor;
use mvtwin_core::{SampledWaveform, TransformerParams};

fn mvtwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvtwin")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn list_scenarios_prints_96_ids() {
    let o = mvtwin(&["list-scenarios"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let ids: Vec<&str> = text.lines().collect();
    assert_eq!(ids.len(), 96);
    assert_eq!(ids.iter().filter(|i| i.starts_with("normal-")).count(), 24);
    assert_eq!(ids.iter().filter(|i| i.starts_with("fault-")).count(), 72);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&mvtwin(&["frobnicate"])), 1);
    assert_eq!(code(&mvtwin(&["list-scenarios", "--bogus"])), 1);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mvtwin(&["run-scenario", "--id", "no-such-scenario", "--out", out]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-scenario"));
    let o = mvtwin(&["twin-file", "--lv", "/nonexistent.csv", "--params", "simulation", "--out", out]);
    assert_eq!(code(&o), 1);
    let o = mvtwin(&["twin-file", "--lv", "x.csv", "--params", "no-such-preset", "--out", out]);
    assert_eq!(code(&o), 1);
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&mvtwin(&["--help"])), 0);
}

#[test]
fn malformed_recording_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let lv = dir.path().join("bad.csv");
    std::fs::write(&lv, "# fs=1000\nt,uA\n0,1\n0.5,2\n").unwrap();
    let out = dir.path().join("mv.csv");
    let o = mvtwin(&["twin-file", "--lv", lv.to_str().unwrap(), "--params", "simulation", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

/// LV terminal and MV terminal phasors of phase A at rated load, 0.8 power
/// factor, from the T-model solved with complex arithmetic.
fn oracle(p: &TransformerParams) -> (Complex64, Complex64, Complex64, Complex64) {
    let zb = p.v2_rated * p.v2_rated / p.s_rated;
    let a = p.v2_rated / p.v1_rated;
    let z1 = Complex64::new(p.r1, p.l1) * zb;
    let z2 = Complex64::new(p.r2, p.l2) * zb;
    let (rm, xm) = (Complex64::new(p.rm * zb, 0.0), Complex64::new(0.0, p.lm * zb));
    let z_sh = rm * xm / (rm + xm);
    let u_ph = p.v1_rated / 3f64.sqrt();
    let z_load = Complex64::from_polar(u_ph * u_ph / (p.s_rated / 3.0), 0.8f64.acos());
    let u1 = Complex64::from_polar(u_ph, 0.5);
    let i1 = u1 / z_load;
    let um = u1 * a + z1 * i1 / a;
    let i2 = i1 / a + um / z_sh;
    (u1, i1, um + z2 * i2, i2)
}

fn pure_sine_fixture(path: &Path, fs: f64) -> (Complex64, Complex64) {
    let p = TransformerParams::simulation_50kva();
    let (u1, i1, u2, i2) = oracle(&p);
    let n = (0.2 * fs) as usize;
    let wave = |z: Complex64, k: usize| {
        SampledWaveform::from_fn(fs, 0.0, n, |t| {
            z.norm() * 2f64.sqrt() * (2.0 * PI * 50.0 * t + z.arg() - 2.0 * PI * k as f64 / 3.0).sin()
        })
        .unwrap()
    };
    let set = WaveformSet::from_phases(&[wave(u1, 0), wave(u1, 1), wave(u1, 2)], &[wave(i1, 0), wave(i1, 1), wave(i1, 2)])
        .unwrap();
    write_waveform_csv(path, &set).unwrap();
    (u2, i2)
}

#[test]
fn twin_file_matches_phasor_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let lv = dir.path().join("lv.csv");
    let mv = dir.path().join("out/mv.csv");
    let fs = 30_000.0;
    let (u2, i2) = pure_sine_fixture(&lv, fs);
    let o = mvtwin(&[
        "twin-file",
        "--lv",
        lv.to_str().unwrap(),
        "--params",
        "simulation",
        "--fs",
        "30000",
        "--out",
        mv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let set = read_waveform_csv(&mv).unwrap();
    let meta: Vec<&str> = set.header.metadata.iter().map(|(k, _)| k.as_str()).collect();
    for key in ["scenario", "seed", "dt", "software_version"] {
        assert!(meta.contains(&key), "missing {key} in {meta:?}");
    }
    // eight whole cycles after the first
    let window = 600..600 + 8 * 600;
    for (ch, z) in [(Channel::UA, u2), (Channel::IA, i2)] {
        let t = fundamental_phasor(set.get(ch).unwrap(), window.clone(), 50.0).unwrap();
        let mag = (t.norm() - z.norm()).abs() / z.norm();
        let ang = (t / z).arg().to_degrees().abs();
        assert!(mag < 0.002, "{ch:?} magnitude error {mag}");
        assert!(ang < 0.1, "{ch:?} phase error {ang} deg");
    }
}

#[test]
fn twin_file_rejects_wrong_rate() {
    let dir = tempfile::tempdir().unwrap();
    let lv = dir.path().join("lv.csv");
    pure_sine_fixture(&lv, 10_000.0);
    let out = dir.path().join("mv.csv");
    let o = mvtwin(&["twin-file", "--lv", lv.to_str().unwrap(), "--params", "simulation", "--fs", "30000", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let lv = dir.path().join("lv.csv");
    pure_sine_fixture(&lv, 10_000.0);
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        let o = mvtwin(&[
            "run-scenario",
            "--id",
            "normal-const-harm-10k",
            "--trials",
            "2",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let mv = out.join("mv.csv");
        let o = mvtwin(&["twin-file", "--lv", lv.to_str().unwrap(), "--params", "simulation", "--out", mv.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert_eq!(outputs[0].len(), 4, "{:?}", outputs[0].iter().map(|f| &f.0).collect::<Vec<_>>());
    assert_eq!(outputs[0], outputs[1]);
    // reports carry what is needed to regenerate them
    let csv = String::from_utf8(outputs[0].iter().find(|f| f.0 == "normal-const-harm-10k.csv").unwrap().1.clone()).unwrap();
    let header = csv.lines().next().unwrap();
    for col in ["scenario", "seed", "dt", "version"] {
        assert!(header.split(',').any(|c| c == col), "{header}");
    }
    assert!(csv.lines().nth(1).unwrap().starts_with("normal-const-harm-10k,7,"));
}

#[test]
fn field_compare_on_twin_output_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let lv = dir.path().join("lv.csv");
    pure_sine_fixture(&lv, 10_000.0);
    let mv = dir.path().join("mv.csv");
    let o = mvtwin(&["twin-file", "--lv", lv.to_str().unwrap(), "--params", "simulation", "--out", mv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rep = dir.path().join("rep");
    let o = mvtwin(&[
        "field-compare",
        "--lv",
        lv.to_str().unwrap(),
        "--mv",
        mv.to_str().unwrap(),
        "--params",
        "simulation",
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("V ") && l.contains("0.000")), "{text}");
    assert!(rep.join("field-compare.json").exists());
}
