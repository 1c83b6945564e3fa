//! Gradient-boosted regression trees with Huber loss: exact greedy splits,
//! robust leaf updates, shrinkage stages over a constant median base.

use crate::error::{Error, Result};
use crate::numerics::{huber_unchecked, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GbrtConfig {
    pub rounds: usize,
    pub shrinkage: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Per-round delta = this quantile of current absolute residuals.
    pub delta_quantile: f64,
    pub seed: u64,
}

/// Defaults for single-location features (depth 6).
impl Default for GbrtConfig {
    fn default() -> Self {
        GbrtConfig {
            rounds: 200,
            shrinkage: 0.1,
            max_depth: 6,
            min_leaf: 20,
            delta_quantile: 0.9,
            seed: 0,
        }
    }
}

impl GbrtConfig {
    /// Defaults for multi-location features (depth 8).
    pub fn multi_default() -> Self {
        GbrtConfig { max_depth: 8, ..GbrtConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::Config(format!(
                "shrinkage must be in (0, 1], got {}",
                self.shrinkage
            )));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Config("min_leaf must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.delta_quantile) {
            return Err(Error::Config(format!(
                "delta_quantile must be in [0, 1], got {}",
                self.delta_quantile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Binary regression tree stored as a flat pre-order node list
/// (node 0 is the root).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Persist("tree has no nodes".into()));
        }
        for n in &nodes {
            if let TreeNode::Split { left, right, .. } = n {
                if *left >= nodes.len() || *right >= nodes.len() {
                    return Err(Error::Persist("tree child index out of range".into()));
                }
            }
        }
        Ok(RegressionTree { nodes })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Index of the leaf node `x` routes to.
    fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// One boosting stage: a tree applied with its shrinkage factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub tree: RegressionTree,
    pub shrinkage: f64,
}

/// Additive model over scaled features: `f0 + sum(shrinkage * tree(x))`.
/// Output is the raw (scaled-space) forecast; clamping at zero happens
/// after inverse scaling, in evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub f0: f64,
    pub stages: Vec<Stage>,
    /// Per-round Huber delta actually used during training.
    pub deltas: Vec<f64>,
    pub dim: usize,
}

impl TreeEnsemble {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut f = self.f0;
        for s in &self.stages {
            f += s.shrinkage * s.tree.eval(x);
        }
        f
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.cols() });
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

/// A fitted ensemble plus its per-round training Huber loss
/// (`round_losses[k]` is the post-round-`k` mean loss at round `k`'s delta).
#[derive(Debug, Clone, PartialEq)]
pub struct GbrtFit {
    pub ensemble: TreeEnsemble,
    pub round_losses: Vec<f64>,
}

/// Negative Huber gradient: residuals clipped to `[-delta, delta]`.
pub fn huber_pseudo_residuals(y: &[f64], f: &[f64], delta: f64) -> Vec<f64> {
    y.iter()
        .zip(f)
        .map(|(&yi, &fi)| (yi - fi).clamp(-delta, delta))
        .collect()
}

/// Robust leaf value: `median(r) + mean(clip(r - median(r), -delta, delta))`
/// over the leaf's true residuals.
pub fn leaf_update_huber(residuals: &[f64], delta: f64) -> f64 {
    let med = median(residuals);
    let mean_clipped = residuals
        .iter()
        .map(|&r| (r - med).clamp(-delta, delta))
        .sum::<f64>()
        / residuals.len() as f64;
    med + mean_clipped
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Nearest-rank upper quantile of absolute values.
fn abs_quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    v[rank - 1]
}

/// Greedy top-down least-squares tree. Each split maximizes squared-error
/// reduction over all (feature, midpoint threshold) pairs; ties go to the
/// lowest feature index, then the lowest threshold. Leaves hold the mean
/// target. Degenerate inputs produce a single leaf, never an error.
pub fn fit_tree(
    x: &Matrix,
    targets: &[f64],
    max_depth: usize,
    min_leaf: usize,
) -> Result<RegressionTree> {
    if targets.len() != x.rows() {
        return Err(Error::Dimension { expected: x.rows(), got: targets.len() });
    }
    if targets.is_empty() {
        return Err(Error::Validation("cannot fit a tree on zero rows".into()));
    }
    let rows: Vec<usize> = (0..x.rows()).collect();
    let mut nodes = Vec::new();
    build_node(x, targets, &rows, max_depth, min_leaf, &mut nodes);
    Ok(RegressionTree { nodes })
}

/// Appends the subtree for `rows`, returning its root index.
fn build_node(
    x: &Matrix,
    targets: &[f64],
    rows: &[usize],
    depth_left: usize,
    min_leaf: usize,
    nodes: &mut Vec<TreeNode>,
) -> usize {
    let mean = rows.iter().map(|&r| targets[r]).sum::<f64>() / rows.len() as f64;
    let split = if depth_left == 0 {
        None
    } else {
        best_split(x, targets, rows, min_leaf)
    };
    match split {
        None => {
            nodes.push(TreeNode::Leaf { value: mean });
            nodes.len() - 1
        }
        Some((feature, threshold)) => {
            let idx = nodes.len();
            nodes.push(TreeNode::Split { feature, threshold, left: 0, right: 0 });
            let (l_rows, r_rows): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&r| x.row(r)[feature] <= threshold);
            let left = build_node(x, targets, &l_rows, depth_left - 1, min_leaf, nodes);
            let right = build_node(x, targets, &r_rows, depth_left - 1, min_leaf, nodes);
            nodes[idx] = TreeNode::Split { feature, threshold, left, right };
            idx
        }
    }
}

/// The (feature, threshold) with the largest positive squared-error
/// reduction, or None if no admissible split improves on the parent.
///
/// Gain is computed as sum_L^2/n_L + sum_R^2/n_R - sum^2/n with the node
/// total accumulated in ascending row order and left sums accumulated in
/// feature-sorted order; comparisons use strict `>` so the first
/// (lowest feature, lowest threshold) optimum wins.
fn best_split(
    x: &Matrix,
    targets: &[f64],
    rows: &[usize],
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    // Constant targets admit no real improvement; bail before float noise
    // in the gain formula manufactures one.
    if rows.iter().all(|&r| targets[r] == targets[rows[0]]) {
        return None;
    }
    let total: f64 = rows.iter().map(|&r| targets[r]).sum();
    let base = total * total / n as f64;
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted: Vec<usize> = Vec::with_capacity(n);
    for feature in 0..x.cols() {
        sorted.clear();
        sorted.extend_from_slice(rows);
        sorted.sort_by(|&a, &b| {
            x.row(a)[feature].partial_cmp(&x.row(b)[feature]).unwrap()
        });
        let mut left_sum = 0.0;
        for i in 0..n - 1 {
            left_sum += targets[sorted[i]];
            let v = x.row(sorted[i])[feature];
            let v_next = x.row(sorted[i + 1])[feature];
            if v == v_next {
                continue;
            }
            let n_l = i + 1;
            let n_r = n - n_l;
            if n_l < min_leaf || n_r < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_l as f64
                + right_sum * right_sum / n_r as f64
                - base;
            if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                best = Some((gain, feature, 0.5 * (v + v_next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Boosted fit: `F0 = median(y)`, then per round compute delta from the
/// residual quantile, fit a tree to the clipped residuals, replace each
/// leaf value by the Huber rule over that leaf's true residuals, and take
/// a shrinkage step. Verifies the within-round Huber loss never increases.
pub fn fit(x: &Matrix, y: &[f64], cfg: &GbrtConfig) -> Result<GbrtFit> {
    cfg.validate()?;
    if y.len() != x.rows() {
        return Err(Error::Dimension { expected: x.rows(), got: y.len() });
    }
    if y.is_empty() {
        return Err(Error::Validation("cannot fit on zero rows".into()));
    }
    let n = y.len();
    let f0 = median(y);
    let mut f: Vec<f64> = vec![f0; n];
    let mut stages = Vec::with_capacity(cfg.rounds);
    let mut deltas = Vec::with_capacity(cfg.rounds);
    let mut round_losses = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let residuals: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
        // Floor keeps the loss well-defined once residuals collapse to zero.
        let delta = abs_quantile(&residuals, cfg.delta_quantile).max(1e-12);
        let before = mean_huber(&residuals, delta);
        let pseudo = huber_pseudo_residuals(y, &f, delta);
        let mut tree = fit_tree(x, &pseudo, cfg.max_depth, cfg.min_leaf)?;
        relabel_leaves(&mut tree, x, &residuals, delta);
        for i in 0..n {
            f[i] += cfg.shrinkage * tree.eval(x.row(i));
        }
        let after_res: Vec<f64> = (0..n).map(|i| y[i] - f[i]).collect();
        let after = mean_huber(&after_res, delta);
        if after > before * (1.0 + 1e-12) + 1e-15 {
            return Err(Error::Diverged(format!(
                "round {round}: training Huber loss rose from {before} to {after}"
            )));
        }
        stages.push(Stage { tree, shrinkage: cfg.shrinkage });
        deltas.push(delta);
        round_losses.push(after);
    }
    Ok(GbrtFit {
        ensemble: TreeEnsemble { f0, stages, deltas, dim: x.cols() },
        round_losses,
    })
}

fn mean_huber(residuals: &[f64], delta: f64) -> f64 {
    residuals
        .iter()
        .map(|&r| huber_unchecked(r, delta).0)
        .sum::<f64>()
        / residuals.len() as f64
}

/// Replaces each leaf's mean value with the Huber rule over the true
/// residuals of the training rows routed to it.
fn relabel_leaves(tree: &mut RegressionTree, x: &Matrix, residuals: &[f64], delta: f64) {
    let mut by_leaf: std::collections::HashMap<usize, Vec<f64>> =
        std::collections::HashMap::new();
    for i in 0..residuals.len() {
        by_leaf.entry(tree.leaf_index(x.row(i))).or_default().push(residuals[i]);
    }
    for (leaf, rs) in by_leaf {
        let value = leaf_update_huber(&rs, delta);
        tree.nodes[leaf] = TreeNode::Leaf { value };
    }
}
