//! Parallel Monte Carlo over independent trials.

use rayon::prelude::*;

use super::trial::{run_trial, Prepared, TrialResult, TrialSpec};
use crate::{Error, Result};

/// Aggregates over `trials` runs of one spec.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub trials: usize,
    /// Mean over trials of the per-trial mean error.
    pub mean_error: f64,
    /// Standard error of `mean_error`.
    pub std_error: f64,
    /// Mean error per timestep across trials.
    pub series: Vec<f64>,
    /// Pooled detection rate, `None` when nothing was falsified.
    pub p_d: Option<f64>,
    /// Pooled false-alarm rate.
    pub p_f: Option<f64>,
    /// Fraction of received beacons that were falsified.
    pub falsified_fraction: f64,
    pub mean_in_range: f64,
    pub results: Vec<TrialResult>,
}

fn summarise(results: Vec<TrialResult>) -> McSummary {
    let n = results.len();
    let means: Vec<f64> = results.iter().map(|r| r.mean_error).collect();
    let mean_error = means.iter().sum::<f64>() / n as f64;
    let std_error = if n > 1 {
        let var = means.iter().map(|m| (m - mean_error).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let steps = results.iter().map(|r| r.errors.len()).max().unwrap_or(0);
    let series = (0..steps)
        .map(|t| {
            let v: Vec<f64> = results.iter().filter_map(|r| r.errors.get(t).copied()).collect();
            v.iter().sum::<f64>() / v.len() as f64
        })
        .collect();
    let sum = |f: fn(&TrialResult) -> usize| results.iter().map(f).sum::<usize>();
    let (ff, ft, hf, ht) =
        (sum(|r| r.falsified_flagged), sum(|r| r.falsified_total), sum(|r| r.honest_flagged), sum(|r| r.honest_total));
    let received: usize = results.iter().map(|r| r.beacons_in_range.iter().sum::<usize>()).sum();
    let falsified: usize = results.iter().map(|r| r.falsified_in_range.iter().sum::<usize>()).sum();
    let samples: usize = results.iter().map(|r| r.beacons_in_range.len()).sum();
    McSummary {
        trials: n,
        mean_error,
        std_error,
        series,
        p_d: (ft > 0).then(|| ff as f64 / ft as f64),
        p_f: (ht > 0).then(|| hf as f64 / ht as f64),
        falsified_fraction: if received > 0 { falsified as f64 / received as f64 } else { 0.0 },
        mean_in_range: if samples > 0 { received as f64 / samples as f64 } else { 0.0 },
        results,
    }
}

/// Run trials `0..trials` of `spec`. Trial `i` always uses the streams of
/// index `i`, so the summary does not depend on `threads` (0 uses rayon's
/// default pool).
pub fn run_monte_carlo(prep: &Prepared, spec: &TrialSpec, trials: usize, threads: usize) -> Result<McSummary> {
    if trials == 0 {
        return Err(Error::Usage("need at least one trial".into()));
    }
    let run = || -> Result<Vec<TrialResult>> {
        (0..trials as u64).into_par_iter().map(|i| run_trial(prep, spec, i)).collect()
    };
    let results = if threads == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Usage(format!("cannot build thread pool: {e}")))?
            .install(run)?
    };
    Ok(summarise(results))
}
