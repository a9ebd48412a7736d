//! Report persistence: long-format CSV, JSON sidecar, per-trial CSV and a
//! plain-text table laid out like the published result tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mvtwin_core::metrics::Summary;
use mvtwin_core::{Quantity, QuantityStats};

use crate::error::Result;
use crate::run::RunReport;

/// One row of the long-format report CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub seed: u64,
    pub dt: f64,
    pub version: String,
    pub trials: usize,
    pub quantity: String,
    pub metric: &'static str,
    pub statistic: &'static str,
    pub value: Option<f64>,
}

fn summary_rows(
    r: &RunReport,
    quantity: &str,
    metric: &'static str,
    s: &Summary,
    out: &mut Vec<ReportRow>,
) {
    for (statistic, value) in [("avg", s.avg), ("max", Some(s.max)), ("min", Some(s.min))] {
        out.push(ReportRow {
            scenario: r.scenario_id.clone(),
            seed: r.provenance.seed,
            dt: r.provenance.dt,
            version: r.provenance.version.clone(),
            trials: r.provenance.trials,
            quantity: quantity.to_string(),
            metric,
            statistic,
            value,
        });
    }
}

fn stats_rows(r: &RunReport, quantity: &str, s: &QuantityStats, out: &mut Vec<ReportRow>) {
    summary_rows(r, quantity, "avg_error", &s.avg_error, out);
    if let Some(m) = &s.max_point_error {
        summary_rows(r, quantity, "max_point_error", m, out);
    }
    out.push(ReportRow {
        scenario: r.scenario_id.clone(),
        seed: r.provenance.seed,
        dt: r.provenance.dt,
        version: r.provenance.version.clone(),
        trials: r.provenance.trials,
        quantity: quantity.to_string(),
        metric: "low_signal",
        statistic: "count",
        value: Some(s.low_signal_trials as f64),
    });
}

/// One row per (quantity, metric, statistic), headline quantities first.
pub fn report_rows(r: &RunReport) -> Vec<ReportRow> {
    let mut out = Vec::new();
    for (q, s) in &r.stats.quantities {
        stats_rows(r, q.label(), s, &mut out);
    }
    for (k, s) in &r.detail {
        stats_rows(r, k, s, &mut out);
    }
    out
}

pub fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TrialRow<'a> {
    scenario: &'a str,
    seed: u64,
    dt: f64,
    version: &'a str,
    trial: u64,
    quantity: &'static str,
    avg_error: f64,
    max_point_error: Option<f64>,
    low_signal: bool,
}

/// Writes `<id>.csv`, `<id>.json` and, when trials are kept, `<id>_trials.csv`.
/// Returns the written paths.
pub fn write_report(dir: &Path, r: &RunReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{}.csv", r.scenario_id));
    write_rows(&csv_path, &report_rows(r))?;
    written.push(csv_path);

    if !r.trials.is_empty() {
        let path = dir.join(format!("{}_trials.csv", r.scenario_id));
        let mut w = csv::Writer::from_path(&path)?;
        for t in &r.trials {
            for (q, e) in &t.errors.errors {
                w.serialize(TrialRow {
                    scenario: &r.scenario_id,
                    seed: r.provenance.seed,
                    dt: r.provenance.dt,
                    version: &r.provenance.version,
                    trial: t.errors.trial,
                    quantity: q.label(),
                    avg_error: e.avg_error,
                    max_point_error: e.max_point_error,
                    low_signal: e.low_signal,
                })?;
            }
        }
        w.flush()?;
        written.push(path);
    }

    let json_path = dir.join(format!("{}.json", r.scenario_id));
    let mut sidecar = r.clone();
    sidecar.trials.clear();
    sidecar.artifacts = written
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    written.push(json_path);
    Ok(written)
}

pub fn read_report_json(path: &Path) -> Result<RunReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Percent with three decimals; values above 100 % print as `>100`.
pub fn format_percent(x: Option<f64>) -> String {
    match x {
        None => "-".into(),
        Some(v) if !v.is_finite() || v > 1.0 => ">100".into(),
        Some(v) => format!("{:.3}", 100.0 * v),
    }
}

/// Rows quantity x metric x statistic, one column per report, values in %.
pub fn render_table(title: &str, reports: &[&RunReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    // columns differing only in rate are labeled by rate
    let labels: Vec<String> = if reports.len() > 1
        && reports.windows(2).all(|w| {
            let (mut a, mut b) = (w[0].provenance.config.clone(), w[1].provenance.config.clone());
            a.fs = 0.0;
            b.fs = 0.0;
            a.id.clear();
            b.id.clear();
            a == b
        }) {
        reports
            .iter()
            .map(|r| format!("{} kHz", r.provenance.config.fs / 1000.0))
            .collect()
    } else {
        reports.iter().map(|r| r.scenario_id.clone()).collect()
    };
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(8).max(8);
    let _ = write!(s, "{:<6}{:<16}{:<6}", "qty", "metric", "stat");
    for l in &labels {
        let _ = write!(s, " {l:>width$}");
    }
    s.push('\n');
    for q in Quantity::ALL {
        let metrics: &[&str] = if q.has_point_error() {
            &["avg_error", "max_point_error"]
        } else {
            &["avg_error"]
        };
        for &metric in metrics {
            for stat in ["avg", "max", "min"] {
                let _ = write!(s, "{:<6}{:<16}{:<6}", q.label(), metric, stat);
                for r in reports {
                    let summary = r.stats.get(q).and_then(|st| {
                        if metric == "avg_error" {
                            Some(st.avg_error)
                        } else {
                            st.max_point_error
                        }
                    });
                    let v = summary.and_then(|m| match stat {
                        "avg" => m.avg,
                        "max" => Some(m.max),
                        _ => Some(m.min),
                    });
                    let _ = write!(s, " {:>width$}", format_percent(v));
                }
                s.push('\n');
            }
        }
    }
    s
}
