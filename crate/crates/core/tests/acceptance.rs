//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when a criterion fails; the process exits non-zero if any criterion does.
//! Expected runtime is several minutes on one core, dominated by the two
//! 1000-replicate studies.

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use atesim::bootstrap::{bootstrap_ci, percentile_ranks, BootstrapConfig};
use atesim::dataset::CellCounts;
use atesim::estimators::{crude_cells, estimate_crude, estimate_gcomp, estimate_iptw, gcomp_cells, Estimator, Strategy};
use atesim::harness::{run_estimators, write_report, ReportFormat, ReportOptions, StudyConfig, StudyOutput};
use atesim::models::{
    BoostedTreesConfig, fit_boosted_trees, CellMeans, Diagnostics, FeatureMatrix, FittedModel, Learner,
    LogisticLearner, ModelKind, Task,
};
use atesim::rng::{unit_f64, Domain, Stream};
use atesim::scenario::{ingest, read_scenario, IngestionConfig};
use atesim::{build_scenario, simulate, Error, Result, Scenario, SimulatedDataset};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Outcome {
    pass: bool,
    detail: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            pass: true,
            detail: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.pass &= ok;
        self.detail.push(format!("{} {line}", if ok { "ok  " } else { "MISS" }));
    }

    fn note(&mut self, line: String) {
        self.detail.push(format!("     {line}"));
    }
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

/// Philox-backed uniform source for test data.
struct Draws {
    stream: Stream,
    counter: u64,
    buf: [u64; 4],
    used: usize,
}

impl Draws {
    fn new(seed: u64) -> Self {
        Draws {
            stream: Stream::new(seed, Domain::Study),
            counter: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    fn uniform(&mut self) -> f64 {
        if self.used == 4 {
            self.buf = self.stream.block([self.counter, 0xacce, 0, 0]);
            self.counter += 1;
            self.used = 0;
        }
        self.used += 1;
        unit_f64(self.buf[self.used - 1])
    }

    fn bernoulli(&mut self, p: f64) -> u8 {
        u8::from(self.uniform() < p)
    }
}

// Criterion 1 --------------------------------------------------------------

fn build(config: &str) -> Result<Scenario> {
    let cfg = IngestionConfig::load(&repo().join(config))?;
    build_scenario(&ingest(&cfg)?)
}

fn scenario_truth() -> Outcome {
    let mut out = Outcome::new();
    for (config, shipped, k, n, ate, tol) in [
        ("configs/indomethacin.toml", "scenarios/indomethacin.json", 14, 570, -0.062, 0.002),
        ("configs/rotterdam.toml", "scenarios/rotterdam.json", 98, 2260, -0.101, 0.003),
    ] {
        match build(config) {
            Ok(s) => {
                out.check(s.k() == k, format!("{config}: K = {} (target {k})", s.k()));
                out.check(s.source_rows == n, format!("{config}: n = {} (target {n})", s.source_rows));
                out.check(
                    within(s.true_ate(), ate, tol),
                    format!("{config}: true ATE = {:.4} (target {ate} ± {tol})", s.true_ate()),
                );
                let same = read_scenario(&repo().join(shipped))
                    .map(|f| Scenario { provenance: vec![], ..f } == Scenario { provenance: vec![], ..s.clone() })
                    .unwrap_or(false);
                out.check(same, format!("{shipped} matches a fresh build (provenance aside)"));
            }
            Err(e) => out.check(false, format!("{config}: {e}")),
        }
    }
    out
}

// Criteria 2-4 -------------------------------------------------------------

fn study(config: &str, sample_sizes: &[usize], keep: &[Strategy]) -> Result<(Scenario, StudyOutput)> {
    let mut cfg = StudyConfig::load(&repo().join(config), &[])?;
    cfg.sample_sizes = sample_sizes.to_vec();
    cfg.estimators.retain(|e| keep.contains(&e.strategy));
    let scenario = cfg.load_scenario()?;
    let estimators: Vec<Estimator> = cfg.estimators.iter().map(Estimator::from_spec).collect::<Result<_>>()?;
    let out = run_estimators(&cfg, &scenario, &estimators, &|_, _, _| {})?;
    Ok((scenario, out))
}

struct Target {
    n: usize,
    label: &'static str,
    coverage: f64,
    me_x1e3: f64,
    mse_x1e3: f64,
}

fn compare_rows(out: &mut Outcome, study: &StudyOutput, targets: &[Target]) {
    for t in targets {
        let Some(m) = study.row(t.n, t.label).and_then(|r| r.metrics.as_ref()) else {
            out.check(false, format!("n={} {}: no metrics", t.n, t.label));
            continue;
        };
        let (cov, me, mse) = (100.0 * m.coverage, 1e3 * m.mean_error, 1e3 * m.mse);
        out.check(
            within(cov, t.coverage, 2.0),
            format!("n={} {} coverage {cov:.1} (target {} ± 2.0, MC se {:.1})", t.n, t.label, t.coverage, 100.0 * m.mc_se_coverage),
        );
        out.check(
            within(me, t.me_x1e3, 3.0),
            format!("n={} {} mean error x1e3 {me:.2} (target {} ± 3)", t.n, t.label, t.me_x1e3),
        );
        if t.mse_x1e3 > 0.0 {
            out.check(
                within(mse, t.mse_x1e3, 0.2 * t.mse_x1e3),
                format!("n={} {} MSE x1e3 {mse:.3} (target {} ± 20%)", t.n, t.label, t.mse_x1e3),
            );
        }
    }
}

fn indomethacin_glm(study: &StudyOutput) -> Outcome {
    let mut out = Outcome::new();
    let rows = [
        (200, 94.5, 5.49, 2.84, 94.9, 4.78, 2.91),
        (500, 94.7, 7.59, 1.15, 94.6, 5.83, 1.15),
        (1000, 94.5, 6.84, 0.54, 94.7, 5.22, 0.53),
    ];
    let mut targets = Vec::new();
    for (n, gc, gme, gmse, ic, ime, imse) in rows {
        targets.push(Target {
            n,
            label: "gcomp/logistic",
            coverage: gc,
            me_x1e3: gme,
            mse_x1e3: gmse,
        });
        targets.push(Target {
            n,
            label: "iptw/logistic",
            coverage: ic,
            me_x1e3: ime,
            mse_x1e3: imse,
        });
    }
    compare_rows(&mut out, study, &targets);
    out
}

fn crude_degradation(study: &StudyOutput) -> Outcome {
    let mut out = Outcome::new();
    for n in [200, 500, 1000] {
        let Some(m) = study.row(n, "crude").and_then(|r| r.metrics.as_ref()) else {
            out.check(false, format!("n={n} crude: no metrics"));
            continue;
        };
        let (cov, be) = (100.0 * m.coverage, 100.0 * m.bias_eliminated_coverage);
        match n {
            200 => out.check(cov <= 80.0, format!("n=200 crude coverage {cov:.1} <= 80 (reference 76.8)")),
            1000 => out.check(cov <= 25.0, format!("n=1000 crude coverage {cov:.1} <= 25 (reference 19)")),
            _ => out.note(format!("n={n} crude coverage {cov:.1} (reference 47.8)")),
        }
        out.check(be >= 92.0, format!("n={n} crude bias-eliminated coverage {be:.1} >= 92"));
    }
    out
}

fn rotterdam_glm(study: &StudyOutput) -> Outcome {
    let mut out = Outcome::new();
    compare_rows(
        &mut out,
        study,
        &[Target {
            n: 1000,
            label: "gcomp/logistic",
            coverage: 95.4,
            me_x1e3: -4.37,
            mse_x1e3: 0.0,
        }],
    );
    match study.row(1000, "iptw/logistic").and_then(|r| r.metrics.as_ref()) {
        Some(m) => {
            let cov = 100.0 * m.coverage;
            out.check(cov <= 80.0, format!("n=1000 iptw/logistic coverage {cov:.1} <= 80 (reference 75.1)"));
            out.note(format!("n=1000 iptw/logistic mean error x1e3 {:.2} (reference -81.68)", 1e3 * m.mean_error));
        }
        None => out.check(false, "n=1000 iptw/logistic: no metrics".into()),
    }
    out
}

// Criterion 5 --------------------------------------------------------------

/// Standardization computed straight from the cell table.
fn brute_force(c: &CellCounts) -> f64 {
    let n: f64 = c.count.iter().map(|a| a[0] + a[1]).sum();
    let mut ate = 0.0;
    for k in 0..c.count.len() {
        let nk = c.count[k][0] + c.count[k][1];
        let p1 = c.events[k][1] / c.count[k][1];
        let p0 = c.events[k][0] / c.count[k][0];
        ate += nk / n * (p1 - p0);
    }
    ate
}

/// Every cell table with `k` strata, per-cell counts in `1..=max_count` and
/// every possible event count.
fn for_each_table(k: usize, max_count: usize, mut f: impl FnMut(&CellCounts)) -> usize {
    let patterns: Vec<Vec<u8>> = (0..k).map(|s| vec![(s >> 1) as u8 & 1, s as u8 & 1]).collect();
    let options: Vec<(f64, f64)> = (1..=max_count)
        .flat_map(|c| (0..=c).map(move |e| (c as f64, e as f64)))
        .collect();
    let cells = 2 * k;
    let mut digits = vec![0usize; cells];
    let mut table = CellCounts {
        patterns: Arc::new(patterns),
        count: vec![[0.0; 2]; k],
        events: vec![[0.0; 2]; k],
    };
    let mut visited = 0;
    loop {
        for (j, &d) in digits.iter().enumerate() {
            table.count[j / 2][j % 2] = options[d].0;
            table.events[j / 2][j % 2] = options[d].1;
        }
        f(&table);
        visited += 1;
        let mut j = 0;
        while j < cells {
            digits[j] += 1;
            if digits[j] < options.len() {
                break;
            }
            digits[j] = 0;
            j += 1;
        }
        if j == cells {
            return visited;
        }
    }
}

/// Propensity oracle: returns the scenario's `p(x = 1 | z)`.
struct TruePropensity(Scenario);

struct TruePropensityModel(Scenario, Diagnostics);

impl FittedModel for TruePropensityModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Saturated
    }
    fn n_features(&self) -> usize {
        self.0.dim()
    }
    fn diagnostics(&self) -> &Diagnostics {
        &self.1
    }
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        (0..x.rows())
            .map(|i| {
                let z: Vec<u8> = x.row(i).iter().map(|&v| v as u8).collect();
                let k = self.0.strata.iter().position(|s| *s == z).ok_or(Error::UnseenPattern {
                    row: x.row(i).to_vec(),
                })?;
                Ok(self.0.p_x_given_z[k])
            })
            .collect()
    }
}

impl Learner for TruePropensity {
    fn kind(&self) -> ModelKind {
        ModelKind::Saturated
    }
    fn fit(&self, _x: &FeatureMatrix, _y: &[u8], _task: Task) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(TruePropensityModel(self.0.clone(), Diagnostics::default())))
    }
}

/// Per-row standardization oracle for a row-level dataset.
fn brute_force_rows(d: &SimulatedDataset) -> Option<f64> {
    let n = d.n() as f64;
    let mut ate = 0.0;
    for k in 0..d.patterns().len() {
        let rows: Vec<usize> = (0..d.n()).filter(|&i| d.stratum_index()[i] as usize == k).collect();
        if rows.is_empty() {
            continue;
        }
        let mean = |arm: u8| {
            let ys: Vec<f64> = rows.iter().filter(|&&i| d.x()[i] == arm).map(|&i| f64::from(d.y()[i])).collect();
            (!ys.is_empty()).then(|| ys.iter().sum::<f64>() / ys.len() as f64)
        };
        ate += rows.len() as f64 / n * (mean(1)? - mean(0)?);
    }
    Some(ate)
}

fn oracles(indomethacin: &Scenario) -> Outcome {
    let mut out = Outcome::new();

    // Saturated g-computation, exhaustive over small cell tables.
    let mut worst = 0.0f64;
    let mut total = 0;
    let mut failures = 0;
    for (k, max_count) in [(1, 25), (2, 5), (3, 3), (4, 2)] {
        total += for_each_table(k, max_count, |c| match gcomp_cells(c, &CellMeans) {
            Ok(e) => worst = worst.max((e.ate_hat - brute_force(c)).abs()),
            Err(_) => failures += 1,
        });
    }
    out.check(
        failures == 0 && worst <= 1e-12,
        format!("saturated gcomp vs brute force on {total} exhaustive cell tables (K<=4, n<=50): max |diff| {worst:.1e}, {failures} errors"),
    );

    // The same comparison through row-level datasets, n <= 50.
    let mut draws = Draws::new(55);
    let (mut checked, mut worst_rows) = (0, 0.0f64);
    for trial in 0..20_000 {
        let k = 1 + trial % 4;
        let n = 2 * k + (draws.uniform() * (51 - 2 * k) as f64) as usize;
        let z: Vec<Vec<u8>> = (0..n)
            .map(|_| {
                let s = (draws.uniform() * k as f64) as usize;
                vec![(s >> 1) as u8 & 1, s as u8 & 1]
            })
            .collect();
        let x: Vec<u8> = (0..n).map(|_| draws.bernoulli(0.5)).collect();
        let y: Vec<u8> = (0..n).map(|_| draws.bernoulli(0.4)).collect();
        let d = SimulatedDataset::from_rows(vec!["z1".into(), "z2".into()], &z, x, y).unwrap();
        if let Some(truth) = brute_force_rows(&d) {
            let est = estimate_gcomp(&d, &CellMeans).map(|e| e.ate_hat).unwrap_or(f64::NAN);
            worst_rows = worst_rows.max((est - truth).abs());
            if est.is_nan() {
                worst_rows = f64::INFINITY;
            }
            checked += 1;
        }
    }
    out.check(
        worst_rows <= 1e-12,
        format!("saturated gcomp vs row-level oracle on {checked} random occupied-cell datasets: max |diff| {worst_rows:.1e}"),
    );

    // IPTW with the true propensity at n = 10^6.
    let d = simulate(indomethacin, 1_000_000, 2024);
    let truth = indomethacin.true_ate();
    match estimate_iptw(&d, &TruePropensity(indomethacin.clone())) {
        Ok(e) => out.check(
            within(e.ate_hat, truth, 0.005),
            format!("true-propensity IPTW at n=1e6: {:.5} vs truth {truth:.5} (tol 0.005)", e.ate_hat),
        ),
        Err(e) => out.check(false, format!("true-propensity IPTW failed: {e}")),
    }

    // Constant propensity reproduces the crude contrast bit for bit.
    struct Constant(f64);
    struct ConstantModel(f64, usize, Diagnostics);
    impl FittedModel for ConstantModel {
        fn kind(&self) -> ModelKind {
            ModelKind::Saturated
        }
        fn n_features(&self) -> usize {
            self.1
        }
        fn diagnostics(&self) -> &Diagnostics {
            &self.2
        }
        fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
            Ok(vec![self.0; x.rows()])
        }
    }
    impl Learner for Constant {
        fn kind(&self) -> ModelKind {
            ModelKind::Saturated
        }
        fn fit(&self, x: &FeatureMatrix, _y: &[u8], _t: Task) -> Result<Box<dyn FittedModel>> {
            Ok(Box::new(ConstantModel(self.0, x.cols(), Diagnostics::default())))
        }
    }
    let mut mismatches = 0;
    let mut tried = 0;
    for seed in 0..500u64 {
        let n = 20 + (seed as usize * 37) % 1000;
        let d = simulate(indomethacin, n, seed);
        let Ok(crude) = estimate_crude(&d) else { continue };
        for c in [0.5, 0.1 + 0.8 * (seed as f64 / 500.0), 0.013] {
            tried += 1;
            let iptw = estimate_iptw(&d, &Constant(c)).map(|e| e.ate_hat);
            if iptw.map(|v| v.to_bits()).ok() != Some(crude.ate_hat.to_bits()) {
                mismatches += 1;
            }
        }
        if crude_cells(&d.cells()).map(|e| e.ate_hat.to_bits()).ok() != Some(crude.ate_hat.to_bits()) {
            mismatches += 1;
        }
    }
    out.check(mismatches == 0, format!("constant-propensity IPTW == crude, bitwise, on {tried} cases: {mismatches} mismatches"));
    out
}

// Criterion 6 --------------------------------------------------------------

fn bootstrap_calibration() -> Outcome {
    let mut out = Outcome::new();
    let ranks = percentile_ranks(599, 0.95);
    out.check(ranks.as_ref().ok() == Some(&(15, 585)), format!("ranks for B=599, level 0.95: {ranks:?}"));

    let reps = 1000;
    let n = 1000;
    let mut covered = 0;
    let mut rank_ok = true;
    let mut draws = Draws::new(6);
    for r in 0..reps {
        let y: Vec<u8> = (0..n).map(|_| draws.bernoulli(0.5)).collect();
        let x: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let d = SimulatedDataset::from_rows(vec!["z".into()], &vec![vec![0u8]; n], x, y).unwrap();
        let cfg = BootstrapConfig {
            iterations: 599,
            level: 0.95,
            seed: 1_000 + r as u64,
            keep_replicates: r < 10,
            ..BootstrapConfig::default()
        };
        let mean = |s: &SimulatedDataset| Ok(s.y().iter().map(|&v| f64::from(v)).sum::<f64>() / s.n() as f64);
        let res = bootstrap_ci(&d, mean, &cfg).unwrap();
        if let Some(sorted) = &res.replicate_estimates {
            rank_ok &= res.lo == sorted[14] && res.hi == sorted[584];
        }
        covered += usize::from(res.covers(0.5));
    }
    let rate = covered as f64 / reps as f64;
    out.check(rank_ok, "interval ends are order statistics 15 and 585 of the replicates".into());
    out.check(
        (0.93..=0.97).contains(&rate),
        format!("Bernoulli(0.5) mean, n=1000, B=599: coverage {:.1}% over {reps} replicates (target [93, 97])", 100.0 * rate),
    );
    out
}

// Criterion 7 --------------------------------------------------------------

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn numerical_kernels() -> Outcome {
    let mut out = Outcome::new();
    let mut draws = Draws::new(7);

    let (mut fitted, mut rejected, mut worst) = (0, 0, 0.0f64);
    while fitted < 100 {
        let n = 100 + (draws.uniform() * 400.0) as usize;
        let p = 1 + (draws.uniform() * 5.0) as usize;
        let beta: Vec<f64> = (0..=p).map(|_| 2.0 * draws.uniform() - 1.0).collect();
        let mut values = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p)
                .map(|j| if j % 2 == 0 { 4.0 * draws.uniform() - 2.0 } else { f64::from(draws.bernoulli(0.4)) })
                .collect();
            let eta = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            y.push(draws.bernoulli(sigmoid(eta)));
            values.extend(row);
        }
        let x = FeatureMatrix::new(n, p, values).unwrap();
        let model = match LogisticLearner::default().fit_rows(&x, &y) {
            Ok(m) if !m.diagnostics().separation => m,
            _ => {
                rejected += 1;
                continue;
            }
        };
        let coef = model.coefficients();
        let mut score = vec![0.0; p + 1];
        for (i, &yi) in y.iter().enumerate() {
            let row = x.row(i);
            let eta = coef[0] + row.iter().zip(&coef[1..]).map(|(a, b)| a * b).sum::<f64>();
            let r = f64::from(yi) - sigmoid(eta);
            score[0] += r;
            for j in 0..p {
                score[j + 1] += r * row[j];
            }
        }
        worst = worst.max(score.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        fitted += 1;
    }
    out.check(
        worst < 1e-6,
        format!("IRLS score max-norm over 100 non-separated datasets: {worst:.2e} (< 1e-6; {rejected} separated draws skipped)"),
    );

    let mut increases = 0;
    let mut rounds_checked = 0;
    for _ in 0..20 {
        let n = 50 + (draws.uniform() * 300.0) as usize;
        let p = 1 + (draws.uniform() * 5.0) as usize;
        let mut values = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| (draws.uniform() * 4.0).floor()).collect();
            let eta = row[0] - 1.5 + if p > 1 { 0.5 * row[1] * row[0] - 1.0 } else { 0.0 };
            y.push(draws.bernoulli(sigmoid(eta)));
            values.extend(row);
        }
        let x = FeatureMatrix::new(n, p, values).unwrap();
        let model = fit_boosted_trees(&x, &y, &BoostedTreesConfig::default()).unwrap();
        let loss = |r: usize| {
            let probs = model.predict_proba_rounds(&x, r).unwrap();
            -probs
                .iter()
                .zip(&y)
                .map(|(&p, &t)| if t == 1 { p.ln() } else { (1.0 - p).ln() })
                .sum::<f64>()
                / n as f64
        };
        let mut prev = loss(0);
        for r in 1..=model.trees().len() {
            let l = loss(r);
            if l > prev + 1e-12 {
                increases += 1;
            }
            prev = l;
            rounds_checked += 1;
        }
    }
    out.check(
        increases == 0,
        format!("boosted-trees training log-loss over {rounds_checked} rounds on 20 datasets: {increases} increases"),
    );
    out
}

// Criterion 8 --------------------------------------------------------------

fn determinism() -> Outcome {
    let mut out = Outcome::new();
    let replicates = 100;
    let mut csvs = Vec::new();
    for workers in [1usize, 8, 1, 8] {
        let overrides = [
            ("replicates".to_string(), replicates.to_string()),
            ("workers".to_string(), workers.to_string()),
        ];
        let run = StudyConfig::load(&repo().join("studies/indomethacin_glm.toml"), &overrides).and_then(|cfg| {
            let scenario = cfg.load_scenario()?;
            let output = atesim::run_study(&cfg, &scenario)?;
            let mut bytes = Vec::new();
            write_report(&output.rows, ReportFormat::Csv, ReportOptions::default(), &mut bytes)?;
            Ok(bytes)
        });
        match run {
            Ok(bytes) => csvs.push((workers, bytes)),
            Err(e) => out.check(false, format!("study with {workers} workers failed: {e}")),
        }
    }
    if csvs.len() == 4 {
        let same = csvs.iter().all(|(_, b)| *b == csvs[0].1);
        out.check(
            same,
            format!(
                "studies/indomethacin_glm.toml at {replicates} replicates, run twice at 1 and twice at 8 workers: {} byte-identical metric CSVs ({} bytes)",
                if same { "4" } else { "not all" },
                csvs[0].1.len()
            ),
        );
    }
    out
}

fn failed(message: String) -> Outcome {
    let mut o = Outcome::new();
    o.check(false, message);
    o
}

type Criterion<'a> = Box<dyn Fn() -> Outcome + 'a>;

/// Pass criterion numbers (e.g. `-- 5 7`) to run a subset.
fn main() {
    let start = Instant::now();
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |i: usize| selected.is_empty() || selected.contains(&i);

    let indomethacin_study = OnceLock::new();
    let indomethacin_study = || {
        indomethacin_study.get_or_init(|| {
            study(
                "studies/indomethacin_glm.toml",
                &[200, 500, 1000],
                &[Strategy::Crude, Strategy::Gcomp, Strategy::Iptw],
            )
            .map(|(_, s)| s)
        })
    };

    let criteria: Vec<(&str, Criterion)> = vec![
        ("scenario truth (K, n, true ATE)", Box::new(scenario_truth)),
        (
            "Indomethacin GLM reproduction",
            Box::new(|| match indomethacin_study() {
                Ok(s) => indomethacin_glm(s),
                Err(e) => failed(format!("study failed: {e}")),
            }),
        ),
        (
            "crude-association degradation",
            Box::new(|| match indomethacin_study() {
                Ok(s) => crude_degradation(s),
                Err(e) => failed(format!("study failed: {e}")),
            }),
        ),
        (
            "Rotterdam GLM spot checks",
            Box::new(|| match study("studies/rotterdam_glm.toml", &[1000], &[Strategy::Gcomp, Strategy::Iptw]) {
                Ok((_, s)) => rotterdam_glm(&s),
                Err(e) => failed(format!("study failed: {e}")),
            }),
        ),
        (
            "oracle equivalences",
            Box::new(|| match read_scenario(&repo().join("scenarios/indomethacin.json")) {
                Ok(s) => oracles(&s),
                Err(e) => failed(format!("cannot read scenario: {e}")),
            }),
        ),
        ("bootstrap calibration", Box::new(bootstrap_calibration)),
        ("numerical kernels", Box::new(numerical_kernels)),
        ("determinism across runs and worker counts", Box::new(determinism)),
    ];

    let results: Vec<(usize, &str, Outcome)> = criteria
        .iter()
        .enumerate()
        .filter(|(i, _)| wanted(i + 1))
        .map(|(i, (name, run))| (i + 1, *name, run()))
        .collect();

    println!();
    let mut failures = 0;
    for (i, name, o) in &results {
        println!("{} [{i}] {name}", if o.pass { "PASS" } else { "FAIL" });
        for line in &o.detail {
            println!("         {line}");
        }
        failures += usize::from(!o.pass);
    }
    println!(
        "\nacceptance: {} passed, {failures} failed ({:.0} s)",
        results.len() - failures,
        start.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
