//! Simulation scenarios: empirical distributions of binary confounders,
//! treatment and outcome, plus the exact back-door truth.

mod build;
mod ingest;
mod io;
mod simulate;

pub use build::build_scenario;
pub use ingest::{
    ingest, ingest_str, Coding, ConfounderSpec, IngestionConfig, Predicate, PreparedTable,
    RowFilter,
};
pub use io::{read_scenario, write_scenario, SCENARIO_FORMAT, SCENARIO_VERSION};
pub use simulate::simulate;

use crate::error::{Error, Result};

/// A fully specified data-generating process over `K` confounder strata.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub confounder_names: Vec<String>,
    /// Distinct binary vectors, one per stratum.
    pub strata: Vec<Vec<u8>>,
    /// P(Z = strata[k]).
    pub p_z: Vec<f64>,
    /// P(X = 1 | Z = strata[k]).
    pub p_x_given_z: Vec<f64>,
    /// `p_y_given_xz[k][x]` = P(Y = 1 | X = x, Z = strata[k]).
    pub p_y_given_xz: Vec<[f64; 2]>,
    pub provenance: Vec<String>,
    /// Rows of the source table kept by the builder (0 when not built from data).
    pub source_rows: usize,
}

impl Scenario {
    pub fn k(&self) -> usize {
        self.strata.len()
    }

    pub fn dim(&self) -> usize {
        self.confounder_names.len()
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if k == 0 {
            return Err(Error::EmptyScenario);
        }
        if self.p_z.len() != k || self.p_x_given_z.len() != k || self.p_y_given_xz.len() != k {
            return bad(format!(
                "lengths differ: strata {k}, p_z {}, p_x {}, p_y {}",
                self.p_z.len(),
                self.p_x_given_z.len(),
                self.p_y_given_xz.len()
            ));
        }
        let d = self.dim();
        for (i, s) in self.strata.iter().enumerate() {
            if s.len() != d || s.iter().any(|&v| v > 1) {
                return bad(format!("stratum {i} is not a binary vector of length {d}"));
            }
        }
        let mut sorted: Vec<&Vec<u8>> = self.strata.iter().collect();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return bad("strata are not distinct".into());
        }
        if self.p_z.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("p_z has a negative or non-finite entry".into());
        }
        let total: f64 = self.p_z.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return bad(format!("p_z sums to {total}"));
        }
        if let Some(i) = self.p_x_given_z.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
            return bad(format!(
                "positivity fails in stratum {i}: P(X=1|z) = {}",
                self.p_x_given_z[i]
            ));
        }
        if self
            .p_y_given_xz
            .iter()
            .flatten()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("p_y_given_xz entry outside [0, 1]".into());
        }
        Ok(())
    }

    /// Back-door adjusted ATE: sum over z of P(z) [P(Y|1,z) - P(Y|0,z)].
    pub fn true_ate(&self) -> f64 {
        let (m1, m0) = self.counterfactual_means();
        m1 - m0
    }

    /// (E[Y^1], E[Y^0]).
    pub fn counterfactual_means(&self) -> (f64, f64) {
        self.p_z
            .iter()
            .zip(&self.p_y_given_xz)
            .fold((0.0, 0.0), |(a, b), (pz, py)| (a + pz * py[1], b + pz * py[0]))
    }

    /// Same scenario with treatment assigned independently of Z at the
    /// marginal rate sum_k P(z_k) P(X=1|z_k). The truth is unchanged.
    pub fn randomized(&self) -> Scenario {
        let rate: f64 = self.p_z.iter().zip(&self.p_x_given_z).map(|(a, b)| a * b).sum();
        let mut s = self.clone();
        s.p_x_given_z = vec![rate; self.k()];
        s.provenance
            .push(format!("randomized: P(X=1|z) replaced by marginal {rate}"));
        s
    }

    /// True propensity of each stratum, as used by oracle estimators.
    pub fn propensity(&self, stratum: usize) -> f64 {
        self.p_x_given_z[stratum]
    }
}
