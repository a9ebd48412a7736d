//! `mvtwin`: command-line front end for the transformer twin and its
//! validation harness.
//!
//! Exit status is 0 on success, 1 for usage or validation errors (bad flags,
//! unknown scenario ids, malformed files) and 2 when a computation fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use mvtwin_core::io::{preset, read_config, read_waveform_csv, write_waveform_csv, TwinConfig, WaveformSet};
use mvtwin_core::twin::ThreePhaseTwin;
use mvtwin_harness::config::{LoadTrajectory, MATRIX_RATES};
use mvtwin_harness::filtering::{filtering_study, FilteringStudy};
use mvtwin_harness::run::VERSION;
use mvtwin_harness::{
    enumerate_standard_scenarios, fault_scenarios, field_compare, find_scenario, normal_scenarios, render_table,
    run_scenario, write_report, Error, Result, RunReport, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "mvtwin", version, about = "MV-side digital twin of a distribution transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Trials per scenario; defaults to each scenario's configured count.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report files.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    RunScenario {
        #[arg(long)]
        id: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the 24 normal-operation scenarios.
    RunMatrix {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the 72 fault scenarios.
    RunFaults {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Frequency responses and harmonic spectra of the twin against the full circuit.
    FilteringStudy {
        /// Configuration file or preset name.
        #[arg(long, default_value = "simulation")]
        params: String,
        #[arg(long, default_value_t = 30_000.0)]
        fs: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Stream an LV recording through the twin and write the MV waveforms.
    TwinFile {
        #[arg(long)]
        lv: PathBuf,
        /// Configuration file or preset name.
        #[arg(long)]
        params: String,
        /// Expected sampling rate; the recording must match it.
        #[arg(long)]
        fs: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the twin on a recorded LV/MV pair.
    FieldCompare {
        #[arg(long)]
        lv: PathBuf,
        #[arg(long)]
        mv: PathBuf,
        /// Configuration file or preset name.
        #[arg(long)]
        params: String,
        #[arg(long)]
        fs: Option<f64>,
        /// Directory for report files; the table is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the ids of all standard scenarios.
    ListScenarios,
}

fn load_params(spec: &str) -> Result<TwinConfig> {
    let path = Path::new(spec);
    if path.exists() {
        Ok(read_config(path)?)
    } else {
        preset(spec).map_err(|_| Error::Config(format!("{spec:?} is neither a readable file nor a preset name")))
    }
}

fn load_recording(path: &Path) -> Result<WaveformSet> {
    if !path.exists() {
        return Err(Error::Config(format!("{} does not exist", path.display())));
    }
    Ok(read_waveform_csv(path)?)
}

fn apply(cfg: ScenarioConfig, run: &RunArgs) -> ScenarioConfig {
    let cfg = cfg.with_seed(run.seed);
    match run.trials {
        Some(n) => cfg.with_trials(n),
        None => cfg,
    }
}

fn run_one(cfg: &ScenarioConfig, out: &Path) -> Result<RunReport> {
    cfg.validate()?;
    eprintln!("running {} ...", cfg.id);
    let r = run_scenario(cfg)?;
    write_report(out, &r)?;
    Ok(r)
}

fn run_matrix(run: &RunArgs) -> Result<()> {
    let scenarios: Vec<ScenarioConfig> = normal_scenarios().into_iter().map(|c| apply(c, run)).collect();
    for c in &scenarios {
        c.validate()?;
    }
    let mut reports = Vec::new();
    for c in &scenarios {
        reports.push(run_one(c, &run.out)?);
    }
    // one table per (harmonics, load trajectory), one column per rate
    let mut text = String::new();
    for harm in [false, true] {
        for load in [LoadTrajectory::Constant, LoadTrajectory::Increase, LoadTrajectory::Decrease] {
            let cols: Vec<&RunReport> = reports
                .iter()
                .filter(|r| {
                    let c = &r.provenance.config;
                    c.harmonics.is_some() == harm && c.load == load
                })
                .collect();
            if cols.len() != MATRIX_RATES.len() {
                continue;
            }
            let title = format!(
                "normal operation, {} harmonics, load {} (seed {}, trials {})",
                if harm { "with" } else { "without" },
                load.tag(),
                run.seed,
                cols[0].provenance.trials
            );
            text.push_str(&render_table(&title, &cols));
            text.push('\n');
        }
    }
    print!("{text}");
    std::fs::write(run.out.join("matrix.txt"), text)?;
    Ok(())
}

#[derive(Serialize)]
struct FaultRow {
    scenario: String,
    seed: u64,
    dt: f64,
    version: String,
    trials: usize,
    predicted: String,
    measured: String,
    v_phase: Option<f64>,
    v_line: Option<f64>,
    i_line: Option<f64>,
    p_total: Option<f64>,
    q_total: Option<f64>,
}

fn mean3(r: &RunReport, keys: [&str; 3]) -> Option<f64> {
    let v: Vec<f64> = keys.iter().filter_map(|k| r.detail_mean(k)).collect();
    (v.len() == 3).then(|| v.iter().sum::<f64>() / 3.0)
}

fn run_faults(run: &RunArgs) -> Result<()> {
    let scenarios: Vec<ScenarioConfig> = fault_scenarios().into_iter().map(|c| apply(c, run)).collect();
    for c in &scenarios {
        c.validate()?;
    }
    std::fs::create_dir_all(&run.out)?;
    let mut w = csv::Writer::from_path(run.out.join("faults_summary.csv"))?;
    println!("{:<36} {:>12} {:>12} {:>9} {:>9} {:>9} {:>9}", "scenario", "predicted", "measured", "V", "V_ll", "I", "P_total");
    for c in &scenarios {
        let r = run_one(c, &run.out)?;
        let v = r.mean(mvtwin_core::Quantity::V);
        let label = |unobservable: bool| if unobservable { "unobservable" } else { "observable" };
        let row = FaultRow {
            scenario: r.scenario_id.clone(),
            seed: r.provenance.seed,
            dt: r.provenance.dt,
            version: r.provenance.version.clone(),
            trials: r.provenance.trials,
            predicted: label(c.predicted_observability() == mvtwin_core::Observability::PhaseVoltagesUnobservable).into(),
            measured: label(v.is_none_or(|x| x > 0.20)).into(),
            v_phase: v,
            v_line: mean3(&r, ["V_AB", "V_BC", "V_CA"]),
            i_line: mean3(&r, ["I_A", "I_B", "I_C"]),
            p_total: r.detail_mean("P_total"),
            q_total: r.detail_mean("Q_total"),
        };
        let f = mvtwin_harness::report::format_percent;
        println!(
            "{:<36} {:>12} {:>12} {:>9} {:>9} {:>9} {:>9}",
            row.scenario,
            row.predicted,
            row.measured,
            f(row.v_phase),
            f(row.v_line),
            f(row.i_line),
            f(row.p_total)
        );
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BodeRow {
    scenario: &'static str,
    seed: u64,
    dt: f64,
    version: &'static str,
    load_fraction: f64,
    model: &'static str,
    frequency: f64,
    voltage_gain_db: f64,
    voltage_phase_deg: f64,
    current_gain_db: f64,
    current_phase_deg: f64,
}

#[derive(Serialize)]
struct SpectrumRow {
    scenario: &'static str,
    seed: u64,
    dt: f64,
    version: &'static str,
    fs: f64,
    quantity: &'static str,
    order: u32,
    twin: f64,
    truth: f64,
    relative_difference: f64,
}

fn write_filtering(study: &FilteringStudy, seed: u64, dt: f64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("filtering_bode.csv"))?;
    for t in &study.bode {
        for (model, points) in [("full", &t.full), ("twin", &t.twin)] {
            for p in points {
                w.serialize(BodeRow {
                    scenario: "filtering-study",
                    seed,
                    // frequency responses are analytic
                    dt: 0.0,
                    version: VERSION,
                    load_fraction: t.load_fraction,
                    model,
                    frequency: p.frequency,
                    voltage_gain_db: p.voltage_gain_db,
                    voltage_phase_deg: p.voltage_phase_deg,
                    current_gain_db: p.current_gain_db,
                    current_phase_deg: p.current_phase_deg,
                })?;
            }
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("filtering_spectra.csv"))?;
    for (quantity, rows) in [("voltage", &study.spectra.voltage), ("current", &study.spectra.current)] {
        for r in rows {
            w.serialize(SpectrumRow {
                scenario: "filtering-study",
                seed,
                dt,
                version: VERSION,
                fs: study.spectra.fs,
                quantity,
                order: r.order,
                twin: r.twin,
                truth: r.truth,
                relative_difference: r.relative_difference,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_filtering(params: &str, fs: f64, seed: u64, out: &Path) -> Result<()> {
    let cfg = load_params(params)?;
    let study = filtering_study(&cfg.transformer, fs, seed)?;
    write_filtering(&study, seed, mvtwin_circuitsim::DEFAULT_DT, out)?;
    println!("{:<8} {:>12} {:>12} {:>10}", "order", "twin", "truth", "diff %");
    for r in &study.spectra.voltage {
        println!(
            "{:<8} {:>12.3} {:>12.3} {:>10}",
            r.order,
            r.twin,
            r.truth,
            mvtwin_harness::report::format_percent(Some(r.relative_difference))
        );
    }
    for t in &study.bode {
        let d = t.voltage_gain_difference();
        println!(
            "load {:.0}%: voltage gain difference {:.4} dB at {} Hz, {:.4} dB at {} Hz",
            100.0 * t.load_fraction,
            d[0].1,
            d[0].0,
            d.last().map_or(0.0, |x| x.1),
            d.last().map_or(0.0, |x| x.0)
        );
    }
    Ok(())
}

fn twin_file(lv: &Path, params: &str, fs: Option<f64>, out: &Path) -> Result<()> {
    let cfg = load_params(params)?;
    let rec = load_recording(lv)?;
    if let Some(fs) = fs {
        if (fs - rec.fs()).abs() > 1e-9 * fs {
            return Err(Error::Config(format!("recording is sampled at {} Hz, --fs says {fs} Hz", rec.fs())));
        }
    }
    let mut twin = ThreePhaseTwin::new(cfg.transformer.clone(), rec.fs())?;
    let mv = twin.run(&rec.voltages()?, &rec.currents()?, &[])?;
    let set = WaveformSet::from_phases(&mv.u_phase, &mv.i_line)?
        .with_metadata("scenario", "twin-file")
        .with_metadata("seed", 0)
        .with_metadata("dt", 0)
        .with_metadata("software_version", VERSION)
        .with_metadata("source", lv.display())
        .with_metadata("vector_group", format!("{:?}", cfg.transformer.vector_group))
        .with_metadata("warmup_samples", mv.warmup);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_waveform_csv(out, &set)?;
    Ok(())
}

fn run_field(lv: &Path, mv: &Path, params: &str, fs: Option<f64>, out: Option<&Path>) -> Result<()> {
    let cfg = load_params(params)?;
    let (lv, mv) = (load_recording(lv)?, load_recording(mv)?);
    let r = field_compare(&lv, &mv, &cfg.transformer, fs)?;
    print!("{}", render_table("field comparison", &[&r]));
    for (k, s) in &r.detail {
        println!("{k:<20} {:>10}", mvtwin_harness::report::format_percent(s.avg_error.avg));
    }
    if let Some(dir) = out {
        write_report(dir, &r)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::RunScenario { id, run } => {
            let cfg = apply(find_scenario(&id)?, &run);
            let r = run_one(&cfg, &run.out)?;
            print!("{}", render_table(&format!("{} (seed {})", r.scenario_id, r.provenance.seed), &[&r]));
            Ok(())
        }
        Command::RunMatrix { run } => run_matrix(&run),
        Command::RunFaults { run } => run_faults(&run),
        Command::FilteringStudy { params, fs, seed, out } => run_filtering(&params, fs, seed, &out),
        Command::TwinFile { lv, params, fs, out } => twin_file(&lv, &params, fs, &out),
        Command::FieldCompare { lv, mv, params, fs, out } => run_field(&lv, &mv, &params, fs, out.as_deref()),
        Command::ListScenarios => {
            for c in enumerate_standard_scenarios() {
                println!("{}", c.id);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
