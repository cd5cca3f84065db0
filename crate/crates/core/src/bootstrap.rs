//! Percentile bootstrap intervals with deterministic, schedule-independent
//! resampling.
//!
//! Replicate `r`, attempt `a` draws its indices from the Philox substream
//! `(seed, Bootstrap)` at counters `[block, r, a, 0]`, so every replicate is
//! a pure function of `(seed, r)` and the thread count cannot change results.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SimulatedDataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimateDiagnostics, Estimator, Strategy};
use crate::rng::{below, Domain, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub level: f64,
    /// Total failed resamples tolerated per interval; `None` means
    /// ten times `iterations`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_redraws: Option<usize>,
    pub seed: u64,
    /// Threads for replicate-level parallelism inside one interval.
    pub workers: usize,
    /// Keep the sorted replicate estimates in the result.
    pub keep_replicates: bool,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: 599,
            level: 0.95,
            max_redraws: None,
            seed: 0,
            workers: 1,
            keep_replicates: false,
        }
    }
}

impl BootstrapConfig {
    pub fn redraw_limit(&self) -> usize {
        self.max_redraws.unwrap_or(10 * self.iterations)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidConfig(format!("bootstrap level {} is not in (0, 1)", self.level)));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("bootstrap iterations must be at least 1".into()));
        }
        percentile_ranks(self.iterations, self.level).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    BootstrapPercentile,
    NativeCredible,
    /// Point estimate only; `lo` and `hi` equal the point.
    None,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::BootstrapPercentile => "bootstrap-percentile",
            IntervalKind::NativeCredible => "native-credible",
            IntervalKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub kind: IntervalKind,
    /// Point fit plus every replicate, in seconds.
    pub wall_time_s: f64,
    pub redraw_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicate_estimates: Option<Vec<f64>>,
    #[serde(default)]
    pub diagnostics: EstimateDiagnostics,
}

impl EstimateResult {
    pub fn covers(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// One-based order-statistic ranks `(k_lo, k_hi)` with
/// `k_lo = floor((B + 1) * alpha / 2)` and `k_hi = B + 1 - k_lo`.
pub fn percentile_ranks(iterations: usize, level: f64) -> Result<(usize, usize)> {
    let alpha = 1.0 - level;
    // The nudge keeps products that are integers in exact arithmetic, such
    // as 600 * 0.025, from flooring one short.
    let k_lo = ((iterations + 1) as f64 * alpha / 2.0 + 1e-9).floor() as usize;
    if k_lo == 0 {
        return Err(Error::InvalidConfig(format!(
            "{iterations} bootstrap iterations are too few for a {level} interval"
        )));
    }
    Ok((k_lo, iterations + 1 - k_lo))
}

/// `n` indices uniform on `[0, n)` for bootstrap replicate `replicate`.
pub fn resample_indices(n: usize, seed: u64, replicate: u64) -> Vec<usize> {
    resample_indices_attempt(n, seed, replicate, 0)
}

/// As [`resample_indices`], for the `attempt`-th redraw of a replicate.
pub fn resample_indices_attempt(n: usize, seed: u64, replicate: u64, attempt: u64) -> Vec<usize> {
    let stream = Stream::new(seed, Domain::Bootstrap);
    let mut out = Vec::with_capacity(n);
    let mut block = 0u64;
    while out.len() < n {
        let bits = stream.block([block, replicate, attempt, 0]);
        let take = (n - out.len()).min(4);
        out.extend(bits[..take].iter().map(|&b| below(b, n)));
        block += 1;
    }
    out
}

/// Draw `cfg.iterations` replicate estimates, redrawing failed resamples.
/// Returns the replicates in replicate order and the number of redraws.
fn replicates<F>(n: usize, cfg: &BootstrapConfig, est: F) -> Result<(Vec<f64>, usize)>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    if n == 0 {
        return Err(Error::EmptyData);
    }
    let limit = cfg.redraw_limit();
    let redraws = AtomicUsize::new(0);
    let one = |r: usize| -> Result<f64> {
        let mut attempt = 0u64;
        loop {
            let idx = resample_indices_attempt(n, cfg.seed, r as u64, attempt);
            match est(&idx) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_resample_failure() => {
                    let total = redraws.fetch_add(1, Ordering::Relaxed) + 1;
                    if total > limit {
                        return Err(Error::RedrawsExhausted {
                            redraws: total,
                            limit,
                            last: e.to_string(),
                        });
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    };
    let values: Result<Vec<f64>> = if cfg.workers <= 1 {
        (0..cfg.iterations).map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {} workers: {e}", cfg.workers)))?;
        pool.install(|| (0..cfg.iterations).into_par_iter().map(one).collect())
    };
    Ok((values?, redraws.into_inner()))
}

fn interval(point: f64, mut reps: Vec<f64>, redraws: usize, cfg: &BootstrapConfig, start: Instant) -> Result<EstimateResult> {
    let (k_lo, k_hi) = percentile_ranks(cfg.iterations, cfg.level)?;
    reps.sort_by(f64::total_cmp);
    Ok(EstimateResult {
        point,
        lo: reps[k_lo - 1],
        hi: reps[k_hi - 1],
        kind: IntervalKind::BootstrapPercentile,
        wall_time_s: start.elapsed().as_secs_f64(),
        redraw_count: redraws,
        replicate_estimates: cfg.keep_replicates.then_some(reps),
        diagnostics: EstimateDiagnostics::default(),
    })
}

/// Percentile interval for an arbitrary estimator of a dataset. Each
/// replicate calls `est` on a fresh resample.
pub fn bootstrap_ci<F>(d: &SimulatedDataset, est: F, cfg: &BootstrapConfig) -> Result<EstimateResult>
where
    F: Fn(&SimulatedDataset) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let start = Instant::now();
    let point = est(d)?;
    let (reps, redraws) = replicates(d.n(), cfg, |idx| est(&d.resample(idx)))?;
    interval(point, reps, redraws, cfg, start)
}

/// Point estimate and interval for one estimator on one dataset.
///
/// `iterations = 0` yields the point estimate alone with kind `none`;
/// `external-direct` returns the server's own interval.
pub fn estimate_with_interval(d: &SimulatedDataset, est: &Estimator, cfg: &BootstrapConfig) -> Result<EstimateResult> {
    if est.strategy() == Strategy::ExternalDirect {
        let client = est
            .direct_client()
            .ok_or_else(|| Error::InvalidConfig("external-direct estimator has no endpoint".into()))?;
        return crate::estimators::estimate_external_direct(d, client);
    }
    let start = Instant::now();
    let point = est.point(d)?;
    if cfg.iterations == 0 {
        return Ok(EstimateResult {
            point: point.ate_hat,
            lo: point.ate_hat,
            hi: point.ate_hat,
            kind: IntervalKind::None,
            wall_time_s: start.elapsed().as_secs_f64(),
            redraw_count: 0,
            replicate_estimates: None,
            diagnostics: point.diagnostics,
        });
    }
    cfg.validate()?;
    let (reps, redraws) = replicates(d.n(), cfg, |idx| Ok(est.point_cells(&d.cells_of(idx))?.ate_hat))?;
    let mut result = interval(point.ate_hat, reps, redraws, cfg, start)?;
    result.diagnostics = point.diagnostics;
    Ok(result)
}
