//! ATE point estimators: crude contrast, g-computation with one or two
//! outcome models, Hájek IPTW, and server-side direct estimation.
//!
//! All in-process strategies work on [`CellCounts`]. With binary confounders
//! the (pattern, treatment) cell table is a sufficient statistic for every
//! estimator here, and fits on it are exact weighted versions of row fits.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{EstimateResult, IntervalKind};
use crate::dataset::{CellCounts, SimulatedDataset};
use crate::error::{Error, Result};
use crate::models::{
    BoostedTreesConfig, BoostedTreesLearner, CellMeans, ExternalClient, ExternalLearner,
    FeatureMatrix, GroupedData, Learner, LogisticConfig, LogisticLearner, Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Crude,
    Gcomp,
    /// Two outcome models, one per arm (T-learner).
    Gcomp2,
    Iptw,
    ExternalDirect,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Crude => "crude",
            Strategy::Gcomp => "gcomp",
            Strategy::Gcomp2 => "gcomp2",
            Strategy::Iptw => "iptw",
            Strategy::ExternalDirect => "external-direct",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(match text {
            "crude" => Strategy::Crude,
            "gcomp" => Strategy::Gcomp,
            "gcomp2" | "t-learner" => Strategy::Gcomp2,
            "iptw" => Strategy::Iptw,
            "external-direct" => Strategy::ExternalDirect,
            other => return Err(Error::InvalidConfig(format!("unknown strategy `{other}`"))),
        })
    }

    pub fn task(self) -> Task {
        match self {
            Strategy::Iptw => Task::Propensity,
            _ => Task::Outcome,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    Logistic(LogisticConfig),
    BoostedTrees(BoostedTreesConfig),
    /// Per-cell empirical means; an oracle rather than a benchmark model.
    Saturated,
    External { endpoint: String },
}

impl ModelSpec {
    pub fn parse(text: &str, endpoint: Option<&str>) -> Result<Self> {
        Ok(match text {
            "logistic" => ModelSpec::Logistic(LogisticConfig::default()),
            "boosted-trees" | "xgboost" => ModelSpec::BoostedTrees(BoostedTreesConfig::default()),
            "saturated" => ModelSpec::Saturated,
            "external" => ModelSpec::External {
                endpoint: endpoint
                    .ok_or_else(|| Error::InvalidConfig("model `external` needs an endpoint".into()))?
                    .to_string(),
            },
            other => return Err(Error::InvalidConfig(format!("unknown model `{other}`"))),
        })
    }

    /// Instantiate the model. External endpoints are connected and the
    /// handshake is checked; `task` is sent as the model name on every fit.
    pub fn learner(&self, task: Task) -> Result<Arc<dyn Learner>> {
        Ok(match self {
            ModelSpec::Logistic(cfg) => Arc::new(LogisticLearner::new(*cfg)),
            ModelSpec::BoostedTrees(cfg) => {
                cfg.validate()?;
                Arc::new(BoostedTreesLearner::new(*cfg))
            }
            ModelSpec::Saturated => Arc::new(CellMeans),
            ModelSpec::External { endpoint } => Arc::new(ExternalLearner::new(ExternalClient::connect(endpoint, 8)?, task)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Logistic(_) => "logistic",
            ModelSpec::BoostedTrees(_) => "boosted-trees",
            ModelSpec::Saturated => "saturated",
            ModelSpec::External { .. } => "external",
        }
    }
}

/// A strategy paired with the model it fits, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    /// Server address for `external-direct`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Display label; defaults to `strategy/model`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl EstimatorSpec {
    pub fn new(strategy: Strategy, model: Option<ModelSpec>) -> Self {
        EstimatorSpec {
            strategy,
            model,
            endpoint: None,
            name: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("{}: {m}", self.strategy.as_str())));
        match (self.strategy, &self.model, &self.endpoint) {
            (Strategy::Crude, Some(_), _) => bad("takes no model"),
            (Strategy::Crude, None, Some(_)) => bad("takes no endpoint"),
            (Strategy::ExternalDirect, _, None) => bad("needs an endpoint"),
            (Strategy::ExternalDirect, Some(_), _) => bad("takes no model"),
            (Strategy::Gcomp | Strategy::Gcomp2 | Strategy::Iptw, None, _) => bad("needs a model"),
            (Strategy::Gcomp | Strategy::Gcomp2 | Strategy::Iptw, Some(_), Some(_)) => {
                bad("endpoint belongs inside an external model spec")
            }
            (_, Some(ModelSpec::BoostedTrees(cfg)), _) => cfg.validate(),
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match &self.model {
            Some(m) => format!("{}/{}", self.strategy.as_str(), m.name()),
            None => self.strategy.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmMeans {
    /// Estimated E[Y^1].
    pub treated: f64,
    /// Estimated E[Y^0].
    pub control: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub separation: bool,
    /// Largest IPTW weight in each arm, `[control, treated]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_weight: Option<[f64; 2]>,
    /// Kish effective sample size per arm, `[control, treated]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effective_sample_size: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EstimateDiagnostics {
    fn absorb(&mut self, d: &crate::models::Diagnostics, context: &str) {
        self.separation |= d.separation;
        for n in &d.notes {
            self.notes.push(format!("{context}: {n}"));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub ate_hat: f64,
    pub per_arm: Option<ArmMeans>,
    pub diagnostics: EstimateDiagnostics,
}

impl PointEstimate {
    fn from_arms(treated: f64, control: f64, diagnostics: EstimateDiagnostics) -> Self {
        PointEstimate {
            ate_hat: treated - control,
            per_arm: Some(ArmMeans { treated, control }),
            diagnostics,
        }
    }
}

fn require_both_arms(c: &CellCounts) -> Result<()> {
    for arm in [0u8, 1] {
        if c.arm_total(arm as usize) == 0.0 {
            return Err(Error::EmptyArm { arm });
        }
    }
    Ok(())
}

fn occupied(c: &CellCounts) -> Vec<usize> {
    (0..c.count.len()).filter(|&k| c.pattern_total(k) > 0.0).collect()
}

/// Feature rows `[x?, z...]` for the listed patterns.
fn pattern_features(c: &CellCounts, ks: &[usize], treatment: Option<f64>) -> Result<FeatureMatrix> {
    let d = c.patterns.first().map_or(0, Vec::len);
    let cols = d + usize::from(treatment.is_some());
    let mut values = Vec::with_capacity(ks.len() * cols);
    for &k in ks {
        if let Some(x) = treatment {
            values.push(x);
        }
        values.extend(c.patterns[k].iter().map(|&v| f64::from(v)));
    }
    FeatureMatrix::new(ks.len(), cols, values)
}

/// Difference of arm means, no adjustment.
pub fn crude_cells(c: &CellCounts) -> Result<PointEstimate> {
    require_both_arms(c)?;
    let treated = c.arm_events(1) / c.arm_total(1);
    let control = c.arm_events(0) / c.arm_total(0);
    Ok(PointEstimate::from_arms(treated, control, EstimateDiagnostics::default()))
}

/// Standardize per-pattern predictions over the sample's pattern distribution.
fn standardize(c: &CellCounts, ks: &[usize], p1: &[f64], p0: &[f64]) -> (f64, f64) {
    let n = c.total();
    let (mut m1, mut m0) = (0.0, 0.0);
    for (j, &k) in ks.iter().enumerate() {
        let w = c.pattern_total(k);
        m1 += w * p1[j];
        m0 += w * p0[j];
    }
    (m1 / n, m0 / n)
}

/// Single outcome model on `[x, z]`, then the mean over rows of
/// `p(Y | 1, z_i) - p(Y | 0, z_i)`.
pub fn gcomp_cells(c: &CellCounts, learner: &dyn Learner) -> Result<PointEstimate> {
    require_both_arms(c)?;
    let ks = occupied(c);
    let d = c.patterns.first().map_or(0, Vec::len);
    let (mut values, mut count, mut positives) = (Vec::new(), Vec::new(), Vec::new());
    for &k in &ks {
        for x in 0..2 {
            if c.count[k][x] > 0.0 {
                values.push(x as f64);
                values.extend(c.patterns[k].iter().map(|&v| f64::from(v)));
                count.push(c.count[k][x]);
                positives.push(c.events[k][x]);
            }
        }
    }
    let data = GroupedData::new(FeatureMatrix::new(count.len(), d + 1, values)?, count, positives)?;
    let model = learner.fit_grouped(&data, Task::Outcome)?;
    let p1 = model.predict_proba(&pattern_features(c, &ks, Some(1.0))?)?;
    let p0 = model.predict_proba(&pattern_features(c, &ks, Some(0.0))?)?;
    let mut diagnostics = EstimateDiagnostics::default();
    diagnostics.absorb(model.diagnostics(), "outcome model");
    let (m1, m0) = standardize(c, &ks, &p1, &p0);
    Ok(PointEstimate::from_arms(m1, m0, diagnostics))
}

/// One outcome model per arm on `[z]`, both predicted for every row.
pub fn gcomp2_cells(c: &CellCounts, learner: &dyn Learner) -> Result<PointEstimate> {
    require_both_arms(c)?;
    let ks = occupied(c);
    let all = pattern_features(c, &ks, None)?;
    let mut diagnostics = EstimateDiagnostics::default();
    let mut preds: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for arm in [0usize, 1] {
        let in_arm: Vec<usize> = ks.iter().copied().filter(|&k| c.count[k][arm] > 0.0).collect();
        let data = GroupedData::new(
            pattern_features(c, &in_arm, None)?,
            in_arm.iter().map(|&k| c.count[k][arm]).collect(),
            in_arm.iter().map(|&k| c.events[k][arm]).collect(),
        )?;
        let wrap = |e: Error| Error::ArmFit {
            arm: arm as u8,
            source: Box::new(e),
        };
        let model = learner.fit_grouped(&data, Task::Outcome).map_err(wrap)?;
        preds[arm] = model.predict_proba(&all).map_err(wrap)?;
        diagnostics.absorb(model.diagnostics(), if arm == 1 { "treated model" } else { "control model" });
    }
    let (m1, m0) = standardize(c, &ks, &preds[1], &preds[0]);
    Ok(PointEstimate::from_arms(m1, m0, diagnostics))
}

/// Hájek IPTW with a propensity model on `[z]`.
pub fn iptw_cells(c: &CellCounts, learner: &dyn Learner) -> Result<PointEstimate> {
    require_both_arms(c)?;
    let ks = occupied(c);
    let data = GroupedData::new(
        pattern_features(c, &ks, None)?,
        ks.iter().map(|&k| c.pattern_total(k)).collect(),
        ks.iter().map(|&k| c.count[k][1]).collect(),
    )?;
    let model = learner.fit_grouped(&data, Task::Propensity)?;
    let e = model.predict_proba(&data.features)?;
    if let Some(&p) = e.iter().find(|&&p| p <= 0.0 || p >= 1.0) {
        return Err(Error::InfiniteWeight { propensity: p });
    }
    let mut diagnostics = EstimateDiagnostics::default();
    diagnostics.absorb(model.diagnostics(), "propensity model");

    let mut means = [0.0; 2];
    let mut max_weight = [0.0f64; 2];
    let mut ess = [0.0; 2];
    for arm in [0usize, 1] {
        let weight = |j: usize| if arm == 1 { 1.0 / e[j] } else { 1.0 / (1.0 - e[j]) };
        let wmax = (0..ks.len())
            .filter(|&j| c.count[ks[j]][arm] > 0.0)
            .map(weight)
            .fold(0.0, f64::max);
        // Weights are rescaled by the arm maximum: the ratio is unchanged and
        // constant weights become exactly 1, reproducing the crude contrast.
        let (mut num, mut den, mut sq) = (0.0, 0.0, 0.0);
        for (j, &k) in ks.iter().enumerate() {
            let n = c.count[k][arm];
            if n == 0.0 {
                continue;
            }
            let w = weight(j) / wmax;
            num += w * c.events[k][arm];
            den += w * n;
            sq += w * w * n;
        }
        means[arm] = num / den;
        max_weight[arm] = wmax;
        ess[arm] = den * den / sq;
    }
    diagnostics.max_weight = Some(max_weight);
    diagnostics.effective_sample_size = Some(ess);
    Ok(PointEstimate::from_arms(means[1], means[0], diagnostics))
}

pub fn estimate_crude(d: &SimulatedDataset) -> Result<PointEstimate> {
    crude_cells(&d.cells())
}

pub fn estimate_gcomp(d: &SimulatedDataset, learner: &dyn Learner) -> Result<PointEstimate> {
    gcomp_cells(&d.cells(), learner)
}

pub fn estimate_gcomp2(d: &SimulatedDataset, learner: &dyn Learner) -> Result<PointEstimate> {
    gcomp2_cells(&d.cells(), learner)
}

pub fn estimate_iptw(d: &SimulatedDataset, learner: &dyn Learner) -> Result<PointEstimate> {
    iptw_cells(&d.cells(), learner)
}

/// Send the whole sample to a server that estimates the ATE and its own
/// interval. The reply is returned as is, apart from rejecting `lo > hi`.
pub fn estimate_external_direct(d: &SimulatedDataset, client: &ExternalClient) -> Result<EstimateResult> {
    let start = Instant::now();
    let (ate, lo, hi) = client.estimate_ate(d)?;
    if lo > hi {
        return Err(Error::Protocol(format!("server interval [{lo}, {hi}] has lo > hi")));
    }
    Ok(EstimateResult {
        point: ate,
        lo,
        hi,
        kind: IntervalKind::NativeCredible,
        wall_time_s: start.elapsed().as_secs_f64(),
        redraw_count: 0,
        replicate_estimates: None,
        diagnostics: EstimateDiagnostics::default(),
    })
}

/// A ready-to-run estimator: spec plus instantiated model factory.
#[derive(Clone)]
pub struct Estimator {
    spec: EstimatorSpec,
    learner: Option<Arc<dyn Learner>>,
    direct: Option<Arc<ExternalClient>>,
}

impl Estimator {
    /// Instantiate models; external endpoints are connected and handshaken.
    pub fn from_spec(spec: &EstimatorSpec) -> Result<Self> {
        spec.validate()?;
        let learner = match &spec.model {
            Some(model) => Some(model.learner(spec.strategy.task())?),
            None => None,
        };
        let direct = match (&spec.strategy, &spec.endpoint) {
            (Strategy::ExternalDirect, Some(ep)) => Some(ExternalClient::connect(ep, 8)?),
            _ => None,
        };
        Ok(Estimator {
            spec: spec.clone(),
            learner,
            direct,
        })
    }

    /// Wrap an arbitrary learner, e.g. an oracle in tests.
    pub fn with_learner(strategy: Strategy, learner: Arc<dyn Learner>, name: &str) -> Self {
        Estimator {
            spec: EstimatorSpec {
                strategy,
                model: None,
                endpoint: None,
                name: Some(name.to_string()),
            },
            learner: Some(learner),
            direct: None,
        }
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn strategy(&self) -> Strategy {
        self.spec.strategy
    }

    /// Point estimate from a cell table. Not available for `external-direct`.
    pub fn point_cells(&self, c: &CellCounts) -> Result<PointEstimate> {
        let learner = || {
            self.learner
                .as_deref()
                .ok_or_else(|| Error::InvalidConfig(format!("{} has no model", self.label())))
        };
        match self.spec.strategy {
            Strategy::Crude => crude_cells(c),
            Strategy::Gcomp => gcomp_cells(c, learner()?),
            Strategy::Gcomp2 => gcomp2_cells(c, learner()?),
            Strategy::Iptw => iptw_cells(c, learner()?),
            Strategy::ExternalDirect => Err(Error::InvalidConfig(
                "external-direct estimates need the row-level sample".into(),
            )),
        }
    }

    pub fn point(&self, d: &SimulatedDataset) -> Result<PointEstimate> {
        self.point_cells(&d.cells())
    }

    /// The server client when this is an `external-direct` estimator.
    pub fn direct_client(&self) -> Option<&ExternalClient> {
        self.direct.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::Strategy;
    use crate::models::{FittedModel, ModelKind};
    use proptest::prelude::*;
    use proptest::strategy::Strategy as PropStrategy;

    /// Predicts a fixed constant regardless of input.
    struct Constant(f64);

    struct ConstantModel(f64, usize, crate::models::Diagnostics);

    impl FittedModel for ConstantModel {
        fn kind(&self) -> ModelKind {
            ModelKind::Saturated
        }
        fn n_features(&self) -> usize {
            self.1
        }
        fn diagnostics(&self) -> &crate::models::Diagnostics {
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
            Ok(Box::new(ConstantModel(self.0, x.cols(), Default::default())))
        }
    }

    /// Hands out the queued constants in fit order.
    struct PerArm(std::sync::Mutex<Vec<f64>>);

    impl Learner for PerArm {
        fn kind(&self) -> ModelKind {
            ModelKind::Saturated
        }
        fn fit(&self, x: &FeatureMatrix, _y: &[u8], _t: Task) -> Result<Box<dyn FittedModel>> {
            let c = self.0.lock().unwrap().remove(0);
            Ok(Box::new(ConstantModel(c, x.cols(), Default::default())))
        }
    }

    fn data(z: &[u8], x: &[u8], y: &[u8]) -> SimulatedDataset {
        let z: Vec<Vec<u8>> = z.iter().map(|&v| vec![v]).collect();
        SimulatedDataset::from_rows(vec!["z".into()], &z, x.to_vec(), y.to_vec()).unwrap()
    }

    #[test]
    fn crude_is_difference_of_means() {
        // treated: 3 of 10 positive; control: 5 of 10.
        let x: Vec<u8> = (0..20).map(|i| u8::from(i < 10)).collect();
        let y: Vec<u8> = (0..20).map(|i| u8::from(i < 3 || (10..15).contains(&i))).collect();
        let d = data(&[0; 20], &x, &y);
        let e = estimate_crude(&d).unwrap();
        assert!((e.ate_hat + 0.2).abs() < 1e-15);
        let arms = e.per_arm.unwrap();
        assert_eq!(e.ate_hat, arms.treated - arms.control);
    }

    #[test]
    fn empty_arm_is_typed() {
        let d = data(&[0, 1, 0], &[1, 1, 1], &[0, 1, 1]);
        assert!(matches!(estimate_crude(&d), Err(Error::EmptyArm { arm: 0 })));
        assert!(matches!(estimate_gcomp(&d, &CellMeans), Err(Error::EmptyArm { arm: 0 })));
        assert!(matches!(estimate_iptw(&d, &Constant(0.5)), Err(Error::EmptyArm { arm: 0 })));
    }

    #[test]
    fn constant_outcome_model_gives_zero() {
        let d = data(&[0, 1, 0, 1], &[0, 1, 1, 0], &[1, 0, 1, 1]);
        assert_eq!(estimate_gcomp(&d, &Constant(0.37)).unwrap().ate_hat, 0.0);
    }

    #[test]
    fn per_arm_constants() {
        let d = data(&[0, 1, 0, 1], &[0, 1, 1, 0], &[1, 0, 1, 1]);
        // Arm 0 is fitted first.
        let learner = PerArm(std::sync::Mutex::new(vec![0.25, 0.75]));
        let e = estimate_gcomp2(&d, &learner).unwrap();
        assert!((e.ate_hat - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infinite_weight_is_typed() {
        let d = data(&[0, 1, 0, 1], &[0, 1, 1, 0], &[1, 0, 1, 1]);
        assert!(matches!(
            estimate_iptw(&d, &Constant(1.0)),
            Err(Error::InfiniteWeight { propensity }) if propensity == 1.0
        ));
    }

    #[test]
    fn iptw_diagnostics() {
        let d = data(&[0, 0, 1, 1, 1, 1], &[0, 1, 0, 1, 1, 1], &[0, 1, 0, 1, 0, 1]);
        let e = estimate_iptw(&d, &CellMeans).unwrap();
        let diag = &e.diagnostics;
        // e(z=0) = 1/2, e(z=1) = 3/4: treated weights 2 and 4/3, control 2 and 4.
        assert_eq!(diag.max_weight, Some([4.0, 2.0]));
        let ess = diag.effective_sample_size.unwrap();
        assert!(ess.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn spec_validation() {
        let logistic = Some(ModelSpec::Logistic(LogisticConfig::default()));
        assert!(EstimatorSpec::new(Strategy::Crude, logistic.clone()).validate().is_err());
        assert!(EstimatorSpec::new(Strategy::Gcomp, None).validate().is_err());
        assert!(EstimatorSpec::new(Strategy::ExternalDirect, None).validate().is_err());
        assert!(EstimatorSpec::new(Strategy::Iptw, logistic).validate().is_ok());
        let spec: EstimatorSpec = toml::from_str(
            "strategy = \"gcomp2\"\nmodel = { kind = \"boosted-trees\", rounds = 50 }\n",
        )
        .unwrap();
        assert_eq!(spec.label(), "gcomp2/boosted-trees");
        match spec.model {
            Some(ModelSpec::BoostedTrees(cfg)) => {
                assert_eq!(cfg.rounds, 50);
                assert_eq!(cfg.max_depth, 6);
            }
            other => panic!("{other:?}"),
        }
        assert!(toml::from_str::<EstimatorSpec>("strategy = \"gcomp\"\nmodel = { kind = \"logistic\", bogus = 1 }\n").is_err());
    }

    fn arb_dataset() -> impl PropStrategy<Value = SimulatedDataset> {
        (1usize..=3, 2usize..60).prop_flat_map(|(d, n)| {
            proptest::collection::vec((proptest::collection::vec(0u8..2, d), 0u8..2, 0u8..2), n).prop_map(
                move |rows| {
                    let z: Vec<Vec<u8>> = rows.iter().map(|r| r.0.clone()).collect();
                    SimulatedDataset::from_rows(
                        (0..d).map(|j| format!("z{j}")).collect(),
                        &z,
                        rows.iter().map(|r| r.1).collect(),
                        rows.iter().map(|r| r.2).collect(),
                    )
                    .unwrap()
                },
            )
        })
    }

    fn all_estimates(d: &SimulatedDataset) -> Vec<Option<f64>> {
        let logistic = LogisticLearner::default();
        let trees = BoostedTreesLearner::new(BoostedTreesConfig { rounds: 10, ..Default::default() });
        vec![
            estimate_crude(d).ok().map(|e| e.ate_hat),
            estimate_gcomp(d, &logistic).ok().map(|e| e.ate_hat),
            estimate_gcomp2(d, &logistic).ok().map(|e| e.ate_hat),
            estimate_iptw(d, &logistic).ok().map(|e| e.ate_hat),
            estimate_gcomp(d, &trees).ok().map(|e| e.ate_hat),
            estimate_iptw(d, &CellMeans).ok().map(|e| e.ate_hat),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn constant_propensity_iptw_equals_crude(d in arb_dataset(), c in 0.01f64..0.99) {
            if let Ok(crude) = estimate_crude(&d) {
                prop_assert_eq!(estimate_iptw(&d, &Constant(c)).unwrap().ate_hat, crude.ate_hat);
                prop_assert_eq!(estimate_iptw(&d, &Constant(0.5)).unwrap().ate_hat, crude.ate_hat);
            }
        }

        #[test]
        fn row_order_does_not_matter(d in arb_dataset(), rot in 1usize..50) {
            let n = d.n();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
            // Only a permutation when gcd(7, n) = 1; otherwise reverse instead.
            let perm = if (0..n).all(|i| perm.contains(&i)) { perm } else { (0..n).rev().collect() };
            let shuffled = d.resample(&perm);
            prop_assert_eq!(all_estimates(&d), all_estimates(&shuffled));
        }

        #[test]
        fn estimates_are_bounded_and_consistent(d in arb_dataset()) {
            for e in [
                estimate_crude(&d),
                estimate_gcomp(&d, &LogisticLearner::default()),
                estimate_gcomp2(&d, &LogisticLearner::default()),
                estimate_iptw(&d, &LogisticLearner::default()),
            ].into_iter().flatten() {
                prop_assert!((-1.0..=1.0).contains(&e.ate_hat));
                let arms = e.per_arm.unwrap();
                prop_assert_eq!(e.ate_hat, arms.treated - arms.control);
            }
        }

        #[test]
        fn saturated_gcomp_and_gcomp2_agree(d in arb_dataset()) {
            let c = d.cells();
            let full = (0..c.count.len()).all(|k| c.pattern_total(k) == 0.0 || (c.count[k][0] > 0.0 && c.count[k][1] > 0.0));
            if full && estimate_crude(&d).is_ok() {
                let a = estimate_gcomp(&d, &CellMeans).unwrap().ate_hat;
                let b = estimate_gcomp2(&d, &CellMeans).unwrap().ate_hat;
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
