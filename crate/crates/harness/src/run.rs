//! Monte-Carlo driver: trials in a rayon pool, merged in trial order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use mvtwin_core::metrics::{aggregate, ConfidenceInfo, QuantityError, StatsAccumulator};
use mvtwin_core::{Observability, Quantity, QuantityStats, ScenarioStats, TrialErrors};

use crate::config::{ScenarioConfig, TrialCount};
use crate::error::Result;
use crate::trial::{run_trial_detailed, trial_seed, TrialOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Trials run between two confidence checks.
pub const CONFIDENCE_BATCH: usize = 50;

/// Everything needed to regenerate a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub scenario_id: String,
    pub seed: u64,
    pub dt: f64,
    pub trials: usize,
    pub version: String,
    pub config: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario_id: String,
    /// Member of the standard scenario set.
    pub standard: bool,
    pub stats: ScenarioStats,
    /// Per-phase, per-line and three-phase-total breakdown, keyed by name
    /// (`V_A`, `V_AB`, `I_A`, `P_total`, ...).
    pub detail: BTreeMap<String, QuantityStats>,
    /// Classifier prediction for fault scenarios.
    pub predicted: Option<Observability>,
    pub provenance: Provenance,
    /// Files written next to the report.
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trials: Vec<TrialOutcome>,
}

impl RunReport {
    pub fn mean(&self, q: Quantity) -> Option<f64> {
        self.stats.mean_avg_error(q)
    }

    pub fn detail_mean(&self, key: &str) -> Option<f64> {
        self.detail.get(key).and_then(|s| s.avg_error.avg)
    }
}

const PH: [&str; 3] = ["A", "B", "C"];
const LL: [&str; 3] = ["AB", "BC", "CA"];

/// Summary statistics of one detail metric across trials.
pub(crate) fn summarize(values: impl Iterator<Item = QuantityError>) -> Result<QuantityStats> {
    let trials: Vec<TrialErrors> = values
        .enumerate()
        .map(|(k, e)| {
            let mut t = TrialErrors::new(k as u64);
            t.errors.insert(Quantity::V, e);
            t
        })
        .collect();
    let stats = aggregate(&trials)?;
    Ok(stats.quantities[&Quantity::V])
}

fn detail_stats(trials: &[TrialOutcome]) -> Result<BTreeMap<String, QuantityStats>> {
    let mut out = BTreeMap::new();
    for p in 0..3 {
        out.insert(format!("V_{}", PH[p]), summarize(trials.iter().map(|t| t.detail.v_phase[p]))?);
        out.insert(format!("V_{}", LL[p]), summarize(trials.iter().map(|t| t.detail.v_line[p]))?);
        out.insert(format!("I_{}", PH[p]), summarize(trials.iter().map(|t| t.detail.i_line[p]))?);
    }
    out.insert("P_total".into(), summarize(trials.iter().map(|t| t.detail.p_total))?);
    out.insert("Q_total".into(), summarize(trials.iter().map(|t| t.detail.q_total))?);
    Ok(out)
}

fn run_range(cfg: &ScenarioConfig, range: std::ops::Range<usize>) -> Result<Vec<TrialOutcome>> {
    let results: Vec<Result<TrialOutcome>> = range
        .into_par_iter()
        .map(|k| run_trial_detailed(cfg, k as u64, trial_seed(cfg.seed, &cfg.id, k as u64)))
        .collect();
    // first failure in trial order, independent of scheduling
    results.into_iter().collect()
}

/// Runs a scenario to its configured trial count or confidence target.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    run_scenario_with_progress(cfg, |_| {})
}

/// As [`run_scenario`], calling `progress` with the completed trial count
/// after every batch.
pub fn run_scenario_with_progress(cfg: &ScenarioConfig, mut progress: impl FnMut(usize)) -> Result<RunReport> {
    cfg.validate()?;
    let mut acc = StatsAccumulator::default();
    let mut outcomes: Vec<TrialOutcome> = Vec::new();
    let mut push = |batch: Vec<TrialOutcome>, acc: &mut StatsAccumulator| {
        for t in &batch {
            acc.push(&t.errors);
        }
        outcomes.extend(batch);
    };
    let confidence = match cfg.trials {
        TrialCount::Fixed(n) => {
            let mut done = 0;
            while done < n {
                let end = (done + CONFIDENCE_BATCH.max(rayon::current_num_threads())).min(n);
                push(run_range(cfg, done..end)?, &mut acc);
                done = end;
                progress(done);
            }
            None
        }
        TrialCount::Confidence {
            min,
            max,
            relative_half_width,
        } => {
            let mut done = 0;
            let mut next = min;
            loop {
                push(run_range(cfg, done..next)?, &mut acc);
                done = next;
                progress(done);
                let hw = acc.relative_half_widths();
                let met = hw.values().all(|h| *h <= relative_half_width);
                if met || done >= max {
                    break Some(ConfidenceInfo {
                        level: 0.99,
                        relative_half_width_target: relative_half_width,
                        relative_half_width: hw,
                        target_met: met,
                    });
                }
                next = (done + CONFIDENCE_BATCH).min(max);
            }
        }
    };
    let mut stats = acc.finish()?;
    stats.confidence = confidence;
    let detail = detail_stats(&outcomes)?;
    Ok(RunReport {
        scenario_id: cfg.id.clone(),
        standard: cfg.standard,
        stats,
        detail,
        predicted: cfg.fault.map(|_| cfg.predicted_observability()),
        provenance: Provenance {
            scenario_id: cfg.id.clone(),
            seed: cfg.seed,
            dt: cfg.dt,
            trials: outcomes.len(),
            version: VERSION.to_string(),
            config: cfg.clone(),
        },
        artifacts: Vec::new(),
        trials: outcomes,
    })
}
