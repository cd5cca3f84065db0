//! Monte Carlo studies: scenario × sample size × estimator.
//!
//! Every (sample size, replicate) pair gets one simulated dataset that all
//! estimators share. Its seed is `derive_seed(base_seed, n, r)`, so a
//! replicate's data and bootstrap draws do not depend on how work is
//! scheduled across threads.

mod metrics;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{compute_metrics, coverage_of, StudyMetrics};
pub use report::{emit_report, parse_metrics_csv, write_report, ReportFormat, ReportOptions};

use crate::bootstrap::{estimate_with_interval, BootstrapConfig, EstimateResult};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorSpec};
use crate::rng::derive_seed;
use crate::scenario::{read_scenario, simulate, Scenario};

/// Which loop gets the worker pool. Only one level runs in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parallelism {
    #[default]
    Replicates,
    Bootstrap,
}

fn default_sample_sizes() -> Vec<usize> {
    vec![200, 500, 1000]
}

fn default_replicates() -> usize {
    1000
}

fn default_workers() -> usize {
    1
}

/// Study definition, read from TOML. A relative `scenario` path is taken
/// relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub scenario: PathBuf,
    #[serde(default = "default_sample_sizes")]
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub parallelism: Parallelism,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    pub estimators: Vec<EstimatorSpec>,
}

impl StudyConfig {
    pub fn from_toml(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::parse("study config", e))?;
        for (key, value) in overrides {
            apply_override(&mut table, key, value)?;
        }
        let cfg: StudyConfig = table.try_into().map_err(|e| Error::parse("study config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read a config file, apply `key=value` overrides, and resolve the
    /// scenario path against the file's directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, overrides).map_err(|e| match e {
            Error::Parse { message, .. } => Error::parse(path.display().to_string(), message),
            other => other,
        })?;
        if cfg.scenario.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.scenario = dir.join(&cfg.scenario);
            }
        }
        Ok(cfg)
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        read_scenario(&self.scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return Err(Error::InvalidConfig("sample sizes must be non-empty and at least 2".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators configured".into()));
        }
        if self.bootstrap.iterations > 0 {
            self.bootstrap.validate()?;
        }
        let mut labels: Vec<String> = self.estimators.iter().map(EstimatorSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!(
                "two estimators share the label `{}`; give one a `name`",
                w[0]
            )));
        }
        self.estimators.iter().try_for_each(EstimatorSpec::validate)
    }
}

/// Set a dotted key such as `bootstrap.iterations` to a TOML literal; bare
/// words that do not parse as TOML are taken as strings.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
        Error::InvalidConfig(format!("empty override key `{key}`"))
    })?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// One estimator on one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub sample_size: usize,
    pub replicate: usize,
    pub estimator: String,
    pub dataset_seed: u64,
    /// SHA-256 of the dataset; equal within a replicate across estimators.
    pub dataset_hash: String,
    pub truth: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<EstimateResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sample_size: usize,
    pub estimator: String,
    pub truth: f64,
    /// `None` when every replicate failed.
    pub metrics: Option<StudyMetrics>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOutput {
    /// Ordered by sample size, then estimator as configured.
    pub rows: Vec<MetricsRow>,
    /// Ordered by sample size, replicate, estimator.
    pub records: Vec<ReplicateRecord>,
}

impl StudyOutput {
    pub fn row(&self, sample_size: usize, estimator: &str) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.sample_size == sample_size && r.estimator == estimator)
    }

    /// Write the audit log, one JSON record per line.
    pub fn write_audit<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|e| Error::Protocol(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| Error::io("audit log", e))?;
        }
        Ok(())
    }
}

/// Progress callback: `(sample_size, replicates_done, replicates_total)`.
pub type Progress<'a> = &'a (dyn Fn(usize, usize, usize) + Sync);

pub fn run_study(cfg: &StudyConfig, scenario: &Scenario) -> Result<StudyOutput> {
    run_study_with_progress(cfg, scenario, &|_, _, _| {})
}

pub fn run_study_with_progress(cfg: &StudyConfig, scenario: &Scenario, progress: Progress) -> Result<StudyOutput> {
    cfg.validate()?;
    scenario.validate()?;
    let estimators: Vec<Estimator> = cfg.estimators.iter().map(Estimator::from_spec).collect::<Result<_>>()?;
    run_estimators(cfg, scenario, &estimators, progress)
}

/// As [`run_study`], with estimators built by the caller (e.g. oracles).
/// The config's own `estimators` list is ignored.
pub fn run_estimators(
    cfg: &StudyConfig,
    scenario: &Scenario,
    estimators: &[Estimator],
    progress: Progress,
) -> Result<StudyOutput> {
    let truth = scenario.true_ate();
    let labels: Vec<String> = estimators.iter().map(Estimator::label).collect();
    let (outer, inner) = match cfg.parallelism {
        Parallelism::Replicates => (cfg.workers, 1),
        Parallelism::Bootstrap => (1, cfg.workers),
    };
    let pool = if outer > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(outer)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start {outer} workers: {e}")))?;
        Some(pool)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.sample_sizes {
        let done = AtomicUsize::new(0);
        let one = |r: usize| -> Result<Vec<ReplicateRecord>> {
            let seed = derive_seed(cfg.base_seed, n as u64, r as u64);
            let data = simulate(scenario, n, seed);
            let hash = data.content_hash();
            let boot = BootstrapConfig {
                seed: derive_seed(seed, cfg.bootstrap.seed, 1),
                workers: inner,
                ..cfg.bootstrap
            };
            let mut out = Vec::with_capacity(estimators.len());
            for (est, label) in estimators.iter().zip(&labels) {
                let (result, error) = match estimate_with_interval(&data, est, &boot) {
                    Ok(res) => (Some(res), None),
                    Err(e) if is_recordable(&e) => (None, Some(e.to_string())),
                    Err(e) => return Err(e),
                };
                out.push(ReplicateRecord {
                    sample_size: n,
                    replicate: r,
                    estimator: label.clone(),
                    dataset_seed: seed,
                    dataset_hash: hash.clone(),
                    truth,
                    result,
                    error,
                });
            }
            progress(n, done.fetch_add(1, Ordering::Relaxed) + 1, cfg.replicates);
            Ok(out)
        };
        let cell: Vec<Vec<ReplicateRecord>> = match &pool {
            None => (0..cfg.replicates).map(one).collect::<Result<_>>()?,
            Some(pool) => pool.install(|| (0..cfg.replicates).into_par_iter().map(one).collect::<Result<_>>())?,
        };
        let cell: Vec<ReplicateRecord> = cell.into_iter().flatten().collect();
        for label in &labels {
            let mine: Vec<&ReplicateRecord> = cell.iter().filter(|r| &r.estimator == label).collect();
            let ok: Vec<EstimateResult> = mine.iter().filter_map(|r| r.result.clone()).collect();
            let failures = mine.len() - ok.len();
            let metrics = match compute_metrics(&ok, truth) {
                Ok(mut m) => {
                    m.failures = failures;
                    Some(m)
                }
                Err(Error::EmptyResults) => None,
                Err(e) => return Err(e),
            };
            rows.push(MetricsRow {
                sample_size: n,
                estimator: label.clone(),
                truth,
                metrics,
                failures,
            });
        }
        records.extend(cell);
    }
    Ok(StudyOutput { rows, records })
}

/// Estimator failures that count against a replicate instead of aborting
/// the study. Configuration and transport problems still abort.
fn is_recordable(e: &Error) -> bool {
    e.is_resample_failure()
        || matches!(
            e,
            Error::RedrawsExhausted { .. } | Error::UnseenPattern { .. } | Error::ArmFit { .. }
        )
}
