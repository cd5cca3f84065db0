use serde::{Deserialize, Serialize};

use super::{sigmoid, Diagnostics, FeatureMatrix, FittedModel, GroupedData, Learner, ModelKind, Task};
use crate::error::{Error, Result};

/// Smallest loss reduction accepted for a split.
const MIN_SPLIT_GAIN: f64 = 1e-6;
/// Relative margin a later candidate split needs to displace an earlier one.
const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostedTreesConfig {
    pub learning_rate: f64,
    pub max_depth: usize,
    pub rounds: usize,
    /// Minimum hessian sum in each child of a split.
    pub min_child_weight: f64,
    /// L2 penalty on leaf values.
    pub l2_penalty: f64,
}

impl Default for BoostedTreesConfig {
    fn default() -> Self {
        BoostedTreesConfig {
            learning_rate: 0.3,
            max_depth: 6,
            rounds: 100,
            min_child_weight: 1.0,
            l2_penalty: 1.0,
        }
    }
}

impl BoostedTreesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidConfig("max_depth must be at least 1".into()));
        }
        if !(self.min_child_weight >= 0.0 && self.l2_penalty >= 0.0) {
            return Err(Error::InvalidConfig(
                "min_child_weight and l2_penalty must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// One regression tree on the margin scale, nodes stored in an arena.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn score(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn leaves(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf(v) => Some(*v),
                Node::Split { .. } => None,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedTrees {
    cols: usize,
    base_margin: f64,
    trees: Vec<Tree>,
    diagnostics: Diagnostics,
}

impl BoostedTrees {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Probabilities using only the first `rounds` trees.
    pub fn predict_proba_rounds(&self, x: &FeatureMatrix, rounds: usize) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        let used = &self.trees[..rounds.min(self.trees.len())];
        Ok((0..x.rows())
            .map(|i| {
                let row = x.row(i);
                sigmoid(self.base_margin + used.iter().map(|t| t.score(row)).sum::<f64>())
            })
            .collect())
    }
}

impl FittedModel for BoostedTrees {
    fn kind(&self) -> ModelKind {
        ModelKind::BoostedTrees
    }

    fn n_features(&self) -> usize {
        self.cols
    }

    fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.predict_proba_rounds(x, self.trees.len())
    }
}

struct Grower<'a> {
    x: &'a FeatureMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a BoostedTreesConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        -g / (h + self.cfg.l2_penalty) * self.cfg.learning_rate
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        g * g / (h + self.cfg.l2_penalty)
    }

    /// Exact greedy search; ties keep the earliest feature and threshold.
    fn best_split(&self, members: &[usize], g: f64, h: f64) -> Option<BestSplit> {
        let parent = self.score(g, h);
        let mut best: Option<BestSplit> = None;
        let mut order = members.to_vec();
        let mut suffix: Vec<(f64, f64)> = Vec::new();
        for f in 0..self.x.cols() {
            order.sort_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]));
            // Right-hand sums are accumulated directly rather than taken as
            // parent minus left, which cancels badly for light children.
            suffix.clear();
            suffix.resize(order.len() + 1, (0.0, 0.0));
            for w in (0..order.len()).rev() {
                let (sg, sh) = suffix[w + 1];
                suffix[w] = (sg + self.grad[order[w]], sh + self.hess[order[w]]);
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..order.len() - 1 {
                let i = order[w];
                gl += self.grad[i];
                hl += self.hess[i];
                let here = self.x.row(i)[f];
                let next = self.x.row(order[w + 1])[f];
                if here == next {
                    continue;
                }
                let (gr, hr) = suffix[w + 1];
                if hl < self.cfg.min_child_weight || hr < self.cfg.min_child_weight {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                // Gains equal up to rounding count as ties, so the choice does
                // not hinge on summation order.
                let floor = best
                    .as_ref()
                    .map_or(MIN_SPLIT_GAIN, |b| b.gain * (1.0 + TIE_TOLERANCE));
                if gain > floor {
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold: 0.5 * (here + next),
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, members: Vec<usize>, depth: usize) -> usize {
        let g: f64 = members.iter().map(|&i| self.grad[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hess[i]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(g, h)));
        if depth >= self.cfg.max_depth || members.len() < 2 {
            return id;
        }
        let Some(split) = self.best_split(&members, g, h) else {
            return id;
        };
        let (lm, rm): (Vec<usize>, Vec<usize>) = members
            .into_iter()
            .partition(|&i| self.x.row(i)[split.feature] < split.threshold);
        let left = self.grow(lm, depth + 1);
        let right = self.grow(rm, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn log_loss(margin: &[f64], count: &[f64], positives: &[f64]) -> f64 {
    let softplus = |t: f64| t.max(0.0) + (-t.abs()).exp().ln_1p();
    let total: f64 = count.iter().sum();
    let mut nll = 0.0;
    for g in 0..margin.len() {
        nll += positives[g] * softplus(-margin[g]) + (count[g] - positives[g]) * softplus(margin[g]);
    }
    nll / total
}

fn boost(
    x: &FeatureMatrix,
    count: &[f64],
    positives: &[f64],
    cfg: &BoostedTreesConfig,
) -> Result<BoostedTrees> {
    cfg.validate()?;
    let members: Vec<usize> = (0..x.rows()).filter(|&i| count[i] > 0.0).collect();
    if members.is_empty() {
        return Err(Error::EmptyData);
    }
    // Base score 0.5.
    let base_margin = 0.0;
    let mut margin = vec![base_margin; x.rows()];
    let mut grad = vec![0.0; x.rows()];
    let mut hess = vec![0.0; x.rows()];
    let mut trees = Vec::with_capacity(cfg.rounds);
    let mut diagnostics = Diagnostics::default();
    let start_loss = log_loss(&margin, count, positives);

    for _ in 0..cfg.rounds {
        for &i in &members {
            let p = sigmoid(margin[i]);
            grad[i] = count[i] * p - positives[i];
            hess[i] = count[i] * p * (1.0 - p);
        }
        let mut grower = Grower {
            x,
            grad: &grad,
            hess: &hess,
            cfg,
            nodes: Vec::new(),
        };
        grower.grow(members.clone(), 0);
        let tree = Tree {
            nodes: grower.nodes,
        };
        for &i in &members {
            margin[i] += tree.score(x.row(i));
        }
        trees.push(tree);
    }
    diagnostics.iterations = trees.len();
    diagnostics.converged = true;
    diagnostics.notes.push(format!(
        "training log-loss {start_loss:.6} -> {:.6}",
        log_loss(&margin, count, positives)
    ));
    Ok(BoostedTrees {
        cols: x.cols(),
        base_margin,
        trees,
        diagnostics,
    })
}

/// Second-order gradient boosting of depth-limited trees under logistic loss.
pub fn fit_boosted_trees(x: &FeatureMatrix, y: &[u8], cfg: &BoostedTreesConfig) -> Result<BoostedTrees> {
    if x.rows() != y.len() {
        return Err(Error::InvalidConfig(format!(
            "{} feature rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let count = vec![1.0; y.len()];
    let positives: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
    boost(x, &count, &positives, cfg)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BoostedTreesLearner {
    pub config: BoostedTreesConfig,
}

impl BoostedTreesLearner {
    pub fn new(config: BoostedTreesConfig) -> Self {
        BoostedTreesLearner { config }
    }

    pub fn fit_groups(&self, data: &GroupedData) -> Result<BoostedTrees> {
        boost(&data.features, &data.count, &data.positives, &self.config)
    }
}

impl Learner for BoostedTreesLearner {
    fn kind(&self) -> ModelKind {
        ModelKind::BoostedTrees
    }

    fn fit(&self, x: &FeatureMatrix, y: &[u8], _task: Task) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(fit_boosted_trees(x, y, &self.config)?))
    }

    fn fit_grouped(&self, data: &GroupedData, _task: Task) -> Result<Box<dyn FittedModel>> {
        Ok(Box::new(self.fit_groups(data)?))
    }
}
