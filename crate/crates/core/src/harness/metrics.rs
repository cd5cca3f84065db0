use serde::{Deserialize, Serialize};

use crate::bootstrap::EstimateResult;
use crate::error::{Error, Result};

/// Performance of one estimator in one (scenario, sample size) cell.
///
/// Bias-eliminated coverage counts intervals containing `truth + mean_error`.
/// Shifting every interval by `-mean_error` and asking whether it covers
/// `truth` is the same event, so no estimator is re-run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyMetrics {
    /// Replicates that produced an estimate.
    pub replicates: usize,
    /// Replicates whose estimator failed; excluded from every other field.
    pub failures: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub bias_eliminated_coverage: f64,
    /// Mean of `point - truth`.
    pub mean_error: f64,
    pub mse: f64,
    pub mean_time_s: f64,
    /// Binomial standard error of `coverage`.
    pub mc_se_coverage: f64,
    /// Bootstrap redraws summed over replicates.
    pub redraws: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    sum / count as f64
}

/// Fraction of intervals containing `target`.
pub fn coverage_of(results: &[EstimateResult], target: f64) -> f64 {
    mean(results.iter().map(|r| f64::from(u8::from(r.covers(target)))))
}

pub fn compute_metrics(results: &[EstimateResult], truth: f64) -> Result<StudyMetrics> {
    if results.is_empty() {
        return Err(Error::EmptyResults);
    }
    let r = results.len() as f64;
    let mean_error = mean(results.iter().map(|e| e.point - truth));
    let coverage = coverage_of(results, truth);
    Ok(StudyMetrics {
        replicates: results.len(),
        failures: 0,
        coverage,
        mean_width: mean(results.iter().map(EstimateResult::width)),
        bias_eliminated_coverage: coverage_of(results, truth + mean_error),
        mean_error,
        mse: mean(results.iter().map(|e| (e.point - truth).powi(2))),
        mean_time_s: mean(results.iter().map(|e| e.wall_time_s)),
        mc_se_coverage: (coverage * (1.0 - coverage) / r).sqrt(),
        redraws: results.iter().map(|e| e.redraw_count).sum(),
    })
}
