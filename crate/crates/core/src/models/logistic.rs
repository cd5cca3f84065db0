use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{sigmoid, Diagnostics, FeatureMatrix, FittedModel, GroupedData, Learner, ModelKind, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub max_iterations: usize,
    /// Stop once the deviance moves by less than this.
    pub tolerance: f64,
    /// Coefficients beyond this magnitude flag (quasi-)separation.
    pub separation_threshold: f64,
    /// Clip predictions to `[eps, 1 - eps]`. Off by default.
    pub clip: Option<f64>,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            max_iterations: 25,
            tolerance: 1e-8,
            separation_threshold: 15.0,
            clip: None,
        }
    }
}

/// Main-effects logistic regression with an intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per feature column.
    coefficients: Vec<f64>,
    clip: Option<f64>,
    diagnostics: Diagnostics,
}

impl LogisticModel {
    pub fn from_coefficients(coefficients: Vec<f64>) -> Self {
        LogisticModel {
            coefficients,
            clip: None,
            diagnostics: Diagnostics {
                converged: true,
                ..Diagnostics::default()
            },
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coefficients[0]
            + row
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }
}

impl FittedModel for LogisticModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Logistic
    }

    fn n_features(&self) -> usize {
        self.coefficients.len() - 1
    }

    fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        Ok((0..x.rows())
            .map(|i| {
                let p = sigmoid(self.linear_predictor(x.row(i)));
                match self.clip {
                    Some(eps) => p.clamp(eps, 1.0 - eps),
                    None => p,
                }
            })
            .collect())
    }
}

/// ln(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Binomial deviance of grouped counts at linear predictor `eta`.
fn deviance(eta: &[f64], count: &[f64], positives: &[f64]) -> f64 {
    let mut nll = 0.0;
    for g in 0..eta.len() {
        // -log p = softplus(-eta), -log(1 - p) = softplus(eta)
        nll += positives[g] * softplus(-eta[g]) + (count[g] - positives[g]) * softplus(eta[g]);
    }
    2.0 * nll
}

/// Accumulate `sum_i w_i [1, x_i] [1, x_i]^T` into a dense matrix.
fn weighted_gram(x: &FeatureMatrix, w: &[f64]) -> DMatrix<f64> {
    let p = x.cols() + 1;
    let mut a = vec![0.0; p * p];
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        a[0] += wi;
        for j in 1..p {
            let v = wi * row[j - 1];
            a[j * p] += v;
            for k in 1..=j {
                a[j * p + k] += v * row[k - 1];
            }
        }
    }
    for j in 0..p {
        for k in j + 1..p {
            a[j * p + k] = a[k * p + j];
        }
    }
    DMatrix::from_row_slice(p, p, &a)
}

/// Cholesky factor of `a`, or `None` when a pivot collapses relative to its
/// original diagonal entry.
fn cholesky(a: DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let diag: Vec<f64> = a.diagonal().iter().copied().collect();
    let chol = a.cholesky()?;
    let l = chol.l_dirty();
    let ok = diag
        .iter()
        .enumerate()
        .all(|(j, &d)| d > 0.0 && l[(j, j)] * l[(j, j)] > 1e-10 * d);
    ok.then_some(chol)
}

/// Name the columns responsible for a rank-deficient design.
fn collinearity_diagnostic(x: &FeatureMatrix, count: &[f64]) -> String {
    let rows: Vec<usize> = (0..x.rows()).filter(|&i| count[i] > 0.0).collect();
    let col = |j: usize| rows.iter().map(move |&i| x.row(i)[j]);
    let mut findings = Vec::new();
    for j in 0..x.cols() {
        let first = col(j).next();
        if col(j).all(|v| Some(v) == first) {
            findings.push(format!("column {j} is constant"));
        }
    }
    for j in 0..x.cols() {
        for k in j + 1..x.cols() {
            if col(j).zip(col(k)).all(|(a, b)| a == b) {
                findings.push(format!("columns {j} and {k} are identical"));
            }
        }
    }
    if findings.is_empty() {
        "columns are linearly dependent".into()
    } else {
        findings.join("; ")
    }
}

fn irls(x: &FeatureMatrix, count: &[f64], positives: &[f64], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if count.iter().sum::<f64>() <= 0.0 {
        return Err(Error::EmptyData);
    }
    let p = x.cols() + 1;

    // Structural rank check on the unweighted design, so that vanishing IRLS
    // weights under separation are not mistaken for collinearity.
    if cholesky(weighted_gram(x, count)).is_none() {
        return Err(Error::SingularDesign {
            diagnostic: collinearity_diagnostic(x, count),
        });
    }

    let mut beta = DVector::<f64>::zeros(p);
    let mut eta = vec![0.0; x.rows()];
    let mut w = vec![0.0; x.rows()];
    let mut dev = deviance(&eta, count, positives);
    let mut diagnostics = Diagnostics::default();

    for iter in 1..=cfg.max_iterations {
        let mut score = DVector::<f64>::zeros(p);
        for i in 0..x.rows() {
            if count[i] == 0.0 {
                w[i] = 0.0;
                continue;
            }
            let mu = sigmoid(eta[i]);
            w[i] = count[i] * mu * (1.0 - mu);
            let r = positives[i] - count[i] * mu;
            score[0] += r;
            for (s, v) in score.iter_mut().skip(1).zip(x.row(i)) {
                *s += r * v;
            }
        }
        let Some(chol) = cholesky(weighted_gram(x, &w)) else {
            // Weights have collapsed: fitted probabilities sit at 0 or 1.
            diagnostics.notes.push(format!(
                "weighted normal equations degenerate at iteration {iter}"
            ));
            diagnostics.separation = true;
            break;
        };
        beta += chol.solve(&score);
        for (i, e) in eta.iter_mut().enumerate() {
            *e = beta[0]
                + x.row(i)
                    .iter()
                    .zip(beta.iter().skip(1))
                    .map(|(v, b)| v * b)
                    .sum::<f64>();
        }
        let new_dev = deviance(&eta, count, positives);
        diagnostics.iterations = iter;
        let change = (new_dev - dev).abs();
        dev = new_dev;
        if change < cfg.tolerance {
            diagnostics.converged = true;
            break;
        }
    }
    if beta.iter().any(|b| b.abs() > cfg.separation_threshold) {
        diagnostics.separation = true;
    }
    if diagnostics.separation {
        diagnostics
            .notes
            .push("quasi-separation: coefficients diverging, returning last iterate".into());
    }
    Ok(LogisticModel {
        coefficients: beta.iter().copied().collect(),
        clip: cfg.clip,
        diagnostics,
    })
}

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares, starting from zero.
pub fn fit_logistic(x: &FeatureMatrix, y: &[u8]) -> Result<LogisticModel> {
    LogisticLearner::default().fit_rows(x, y)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticLearner {
    pub config: LogisticConfig,
}

impl LogisticLearner {
    pub fn new(config: LogisticConfig) -> Self {
        LogisticLearner { config }
    }

    pub fn fit_rows(&self, x: &FeatureMatrix, y: &[u8]) -> Result<LogisticModel> {
        if x.rows() != y.len() {
            return Err(Error::InvalidConfig(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        if let Some(&v) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidConfig(format!("label {v} is not binary")));
        }
        let count = vec![1.0; y.len()];
        let positives: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        irls(x, &count, &positives, &self.config)
    }

    pub fn fit_groups(&self, data: &GroupedData) -> Result<LogisticModel> {
        irls(&data.features, &data.count, &data.positives, &self.config)
    }
}

impl Learner for LogisticLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::Logistic
    }

    fn fit(&self, x: &FeatureMatrix, y: &[u8], _task: Task) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(self.fit_rows(x, y)?))
    }

    fn fit_grouped(&self, data: &GroupedData, _task: Task) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(self.fit_groups(data)?))
    }
}
