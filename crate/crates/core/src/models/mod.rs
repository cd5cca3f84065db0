//! Predictive models: fit on (features, binary labels), predict P(label = 1).

mod boosted;
mod external;
mod logistic;
pub mod protocol;
mod saturated;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use boosted::{fit_boosted_trees, BoostedTrees, BoostedTreesConfig, BoostedTreesLearner};
pub use external::{connect_external_model, Endpoint, ExternalClient, ExternalLearner};
pub use logistic::{fit_logistic, LogisticConfig, LogisticLearner, LogisticModel};
pub use saturated::CellMeans;

use crate::error::{Error, Result};

/// Dense row-major matrix of real features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "feature matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("feature matrix has non-finite values".into()));
        }
        Ok(FeatureMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::ColumnMismatch {
                expected: cols,
                got: r.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Rows with identical features collapsed: `count[g]` rows share feature row
/// `g` and `positives[g]` of them are labelled 1. Weighted fits on this form
/// are the same likelihood as row-level fits on the expanded data.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedData {
    pub features: FeatureMatrix,
    pub count: Vec<f64>,
    pub positives: Vec<f64>,
}

impl GroupedData {
    pub fn new(features: FeatureMatrix, count: Vec<f64>, positives: Vec<f64>) -> Result<Self> {
        if count.len() != features.rows() || positives.len() != features.rows() {
            return Err(Error::InvalidConfig("group weights do not match feature rows".into()));
        }
        if count
            .iter()
            .zip(&positives)
            .any(|(&c, &p)| !(c >= 0.0 && p >= 0.0 && p <= c))
        {
            return Err(Error::InvalidConfig("group counts must satisfy 0 <= positives <= count".into()));
        }
        Ok(GroupedData {
            features,
            count,
            positives,
        })
    }

    /// Collapse row-level data.
    pub fn from_rows(x: &FeatureMatrix, y: &[u8]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::InvalidConfig(format!(
                "{} feature rows but {} labels",
                x.rows(),
                y.len()
            )));
        }
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut rows: Vec<&[f64]> = Vec::new();
        let (mut count, mut positives) = (Vec::new(), Vec::new());
        for (i, &label) in y.iter().enumerate() {
            let key: Vec<u64> = x.row(i).iter().map(|v| v.to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                rows.push(x.row(i));
                count.push(0.0);
                positives.push(0.0);
                rows.len() - 1
            });
            count[g] += 1.0;
            positives[g] += f64::from(label);
        }
        let values = rows.concat();
        Ok(GroupedData {
            features: FeatureMatrix::new(rows.len(), x.cols(), values)?,
            count,
            positives,
        })
    }

    /// Expand back to rows; counts must be whole numbers.
    pub fn expand(&self) -> Result<(FeatureMatrix, Vec<u8>)> {
        let mut values = Vec::new();
        let mut y = Vec::new();
        for g in 0..self.features.rows() {
            let (c, p) = (self.count[g], self.positives[g]);
            if c.fract() != 0.0 || p.fract() != 0.0 {
                return Err(Error::InvalidConfig("fractional group counts cannot be expanded".into()));
            }
            for r in 0..c as usize {
                values.extend_from_slice(self.features.row(g));
                y.push(u8::from(r < p as usize));
            }
        }
        Ok((FeatureMatrix::new(y.len(), self.features.cols(), values)?, y))
    }

    pub fn total(&self) -> f64 {
        self.count.iter().sum()
    }
}

/// What a model is being fitted for. External servers receive this as the
/// model name in the fit request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Propensity,
    Outcome,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Propensity => "propensity",
            Task::Outcome => "outcome",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    BoostedTrees,
    External,
    Saturated,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::BoostedTrees => "boosted-trees",
            ModelKind::External => "external",
            ModelKind::Saturated => "saturated",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Some coefficient exceeded the separation threshold.
    pub separation: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub trait FittedModel: Send + Sync {
    fn kind(&self) -> ModelKind;

    /// Number of feature columns seen at fit time.
    fn n_features(&self) -> usize;

    fn diagnostics(&self) -> &Diagnostics;

    /// P(label = 1) for each row, in [0, 1].
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;

    fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        if x.cols() != self.n_features() {
            return Err(Error::ColumnMismatch {
                expected: self.n_features(),
                got: x.cols(),
            });
        }
        Ok(())
    }
}

/// A model factory. Estimators call it once per fit, including once per
/// bootstrap resample, possibly from several threads.
pub trait Learner: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn fit(&self, x: &FeatureMatrix, y: &[u8], task: Task) -> Result<Box<dyn FittedModel>>;

    /// Fit on collapsed rows. The default expands to rows; learners whose
    /// loss is a sum over rows override this with an exact weighted fit.
    fn fit_grouped(&self, data: &GroupedData, task: Task) -> Result<Box<dyn FittedModel>> {
        let (x, y) = data.expand()?;
        self.fit(&x, &y, task)
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grouping_round_trips() {
        let x = FeatureMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        ])
        .unwrap();
        let g = GroupedData::from_rows(&x, &[1, 0, 0, 1]).unwrap();
        assert_eq!(g.features.rows(), 2);
        assert_eq!(g.count, vec![3.0, 1.0]);
        assert_eq!(g.positives, vec![2.0, 0.0]);
        let (xe, ye) = g.expand().unwrap();
        assert_eq!(xe.rows(), 4);
        assert_eq!(ye.iter().map(|&v| v as u32).sum::<u32>(), 2);
    }

    #[test]
    fn matrix_shape_is_checked() {
        assert!(FeatureMatrix::new(2, 2, vec![0.0; 3]).is_err());
        assert!(FeatureMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(FeatureMatrix::from_rows(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
