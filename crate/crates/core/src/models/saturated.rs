use std::collections::HashMap;

use super::{Diagnostics, FeatureMatrix, FittedModel, GroupedData, Learner, ModelKind, Task};
use crate::error::{Error, Result};

/// Saturated model: predicts the empirical label mean of each distinct
/// feature row. Useful as an oracle since g-computation with it reduces to
/// nonparametric standardization.
#[derive(Debug, Clone, Copy, Default)]
pub struct CellMeans;

struct CellMeansModel {
    cols: usize,
    means: HashMap<Vec<u64>, f64>,
    diagnostics: Diagnostics,
}

fn key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| v.to_bits()).collect()
}

impl FittedModel for CellMeansModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Saturated
    }

    fn n_features(&self) -> usize {
        self.cols
    }

    fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        (0..x.rows())
            .map(|i| {
                self.means
                    .get(&key(x.row(i)))
                    .copied()
                    .ok_or_else(|| Error::UnseenPattern { row: x.row(i).to_vec() })
            })
            .collect()
    }
}

impl Learner for CellMeans {
    fn kind(&self) -> ModelKind {
        ModelKind::Saturated
    }

    fn fit(&self, x: &FeatureMatrix, y: &[u8], task: Task) -> Result<Box<dyn FittedModel>> {
        self.fit_grouped(&GroupedData::from_rows(x, y)?, task)
    }

    fn fit_grouped(&self, data: &GroupedData, _task: Task) -> Result<Box<dyn FittedModel>> {
        if data.total() <= 0.0 {
            return Err(Error::EmptyData);
        }
        let mut sums: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        for g in 0..data.features.rows() {
            if data.count[g] > 0.0 {
                let e = sums.entry(key(data.features.row(g))).or_default();
                e.0 += data.positives[g];
                e.1 += data.count[g];
            }
        }
        Ok(Box::new(CellMeansModel {
            cols: data.features.cols(),
            means: sums.into_iter().map(|(k, (s, n))| (k, s / n)).collect(),
            diagnostics: Diagnostics {
                converged: true,
                ..Diagnostics::default()
            },
        }))
    }
}
