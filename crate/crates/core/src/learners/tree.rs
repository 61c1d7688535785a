//! Single decision trees over indicator columns.
//!
//! The same grower drives Gini classification trees and the Newton
//! regression trees used by boosting; only the node statistics differ.
//! Splits are one-vs-rest category tests ("indicator == 1").

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::matrix::{EncodedMatrix, MatrixSchema};

/// Gini impurity of a binary class count pair: 1 - p0^2 - p1^2.
pub fn gini_impurity(class_counts: (u64, u64)) -> Result<f64> {
    let (a, b) = class_counts;
    let total = a + b;
    if total == 0 {
        return Err(Error::MetricUndefined("gini impurity of an empty node".into()));
    }
    let p0 = a as f64 / total as f64;
    let p1 = b as f64 / total as f64;
    Ok(1.0 - p0 * p0 - p1 * p1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// Expand every splittable node breadth-first up to the depth limit.
    DepthWise,
    /// Expand the highest-gain leaf first, up to `max_leaves` leaves.
    LeafWise { max_leaves: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Minimum total row weight on each side of a split.
    pub min_leaf_weight: f64,
    pub min_gain: f64,
    pub growth: Growth,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 8, min_leaf_weight: 5.0, min_gain: 1e-9, growth: Growth::DepthWise }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        if self.min_leaf_weight <= 0.0 {
            return Err(Error::InvalidArgument("min_leaf_weight must be positive".into()));
        }
        if let Growth::LeafWise { max_leaves } = self.growth {
            if max_leaves < 2 {
                return Err(Error::InvalidArgument("max_leaves must be at least 2".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Test "indicator column == 1"; `gain` is the split's objective gain.
    Branch { column: u32, when_one: u32, when_zero: u32, gain: f64 },
    Leaf { score: f64 },
}

/// Node array with root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
    pub depth: usize,
}

impl Tree {
    pub fn score_row(&self, matrix: &EncodedMatrix, row: usize) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                TreeNode::Leaf { score } => return *score,
                TreeNode::Branch { column, when_one, when_zero, .. } => {
                    idx = if matrix.indicator(*column as usize, row) {
                        *when_one as usize
                    } else {
                        *when_zero as usize
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// Objective gain accumulated per source variable of `schema`.
    pub fn gain_by_variable(&self, schema: &MatrixSchema, acc: &mut [f64]) {
        for node in &self.nodes {
            if let TreeNode::Branch { column, gain, .. } = node {
                let (var_idx, _) = schema.locate(*column as usize);
                acc[var_idx] += gain.max(0.0);
            }
        }
    }
}

/// Additive per-node statistics. For classification `a` is the positive
/// weight and `b` is unused; for Newton trees `a` is the gradient sum and
/// `b` the hessian sum. `w` is always the row weight sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeStats {
    pub w: f64,
    pub a: f64,
    pub b: f64,
}

impl NodeStats {
    fn add(&mut self, o: NodeStats) {
        self.w += o.w;
        self.a += o.a;
        self.b += o.b;
    }

    fn minus(self, o: NodeStats) -> NodeStats {
        NodeStats { w: self.w - o.w, a: self.a - o.a, b: self.b - o.b }
    }
}

/// What the grower optimizes. `value` must be such that split gain is
/// `value(left) + value(right) - value(parent)` and higher is better.
pub trait SplitObjective {
    fn row_stats(&self, row: usize) -> NodeStats;
    fn value(&self, s: NodeStats) -> f64;
    fn leaf_score(&self, s: NodeStats) -> f64;
}

/// Weighted Gini decrease; leaf score is the weighted positive fraction.
pub struct GiniObjective<'a> {
    pub labels: &'a [u8],
    pub weights: Option<&'a [f64]>,
}

impl SplitObjective for GiniObjective<'_> {
    fn row_stats(&self, row: usize) -> NodeStats {
        let w = self.weights.map_or(1.0, |ws| ws[row]);
        NodeStats { w, a: if self.labels[row] == 1 { w } else { 0.0 }, b: 0.0 }
    }

    // negative weighted impurity: w * -(1 - p1^2 - p0^2) up to constants,
    // written to avoid dividing when the node is empty
    fn value(&self, s: NodeStats) -> f64 {
        if s.w <= 0.0 {
            return 0.0;
        }
        let pos = s.a;
        let neg = s.w - s.a;
        (pos * pos + neg * neg) / s.w - s.w
    }

    fn leaf_score(&self, s: NodeStats) -> f64 {
        if s.w <= 0.0 {
            0.0
        } else {
            s.a / s.w
        }
    }
}

/// Second-order (Newton) objective for boosting: leaf value -G/(H+lambda),
/// node value G^2/(2(H+lambda)).
pub struct NewtonObjective<'a> {
    pub gradients: &'a [f64],
    pub hessians: &'a [f64],
    pub weights: Option<&'a [f64]>,
    pub lambda: f64,
}

impl SplitObjective for NewtonObjective<'_> {
    fn row_stats(&self, row: usize) -> NodeStats {
        let w = self.weights.map_or(1.0, |ws| ws[row]);
        NodeStats { w, a: w * self.gradients[row], b: w * self.hessians[row] }
    }

    fn value(&self, s: NodeStats) -> f64 {
        s.a * s.a / (2.0 * (s.b + self.lambda).max(1e-12))
    }

    fn leaf_score(&self, s: NodeStats) -> f64 {
        -s.a / (s.b + self.lambda).max(1e-12)
    }
}

struct Frontier {
    node: usize,
    depth: usize,
    rows: Vec<u32>,
    stats: NodeStats,
    best: Option<BestSplit>,
}

#[derive(Clone, Copy)]
struct BestSplit {
    gain: f64,
    column: usize,
    left_stats: NodeStats,
}

/// Columns a split may consider; `None` means all.
pub type ColumnSampler<'a> = dyn FnMut() -> Option<Vec<u32>> + 'a;

pub fn grow_tree(
    matrix: &EncodedMatrix,
    objective: &dyn SplitObjective,
    params: &TreeParams,
    mut column_sampler: Option<&mut ColumnSampler<'_>>,
    rows: Option<Vec<u32>>,
) -> Result<(Tree, Vec<(usize, Vec<u32>)>)> {
    params.validate()?;
    let rows = rows.unwrap_or_else(|| (0..matrix.n_rows() as u32).collect());
    if rows.is_empty() {
        return Err(Error::Train("cannot grow a tree on zero rows".into()));
    }

    let mut root_stats = NodeStats::default();
    for &r in &rows {
        root_stats.add(objective.row_stats(r as usize));
    }

    let mut nodes = vec![TreeNode::Leaf { score: objective.leaf_score(root_stats) }];
    let mut leaf_rows: Vec<(usize, Vec<u32>)> = Vec::new();
    let mut depth_reached = 0usize;

    let make_frontier = |node: usize,
                             depth: usize,
                             rows: Vec<u32>,
                             stats: NodeStats,
                             sampler: &mut Option<&mut ColumnSampler<'_>>|
     -> Frontier {
        let best = if depth < params.max_depth {
            let columns = sampler.as_mut().and_then(|s| s());
            find_best_split(matrix, objective, &rows, stats, params, columns.as_deref())
        } else {
            None
        };
        Frontier { node, depth, rows, stats, best }
    };

    let mut frontier =
        vec![make_frontier(0, 0, rows, root_stats, &mut column_sampler)];
    let mut n_leaves = 1usize;

    loop {
        // pick the next node to expand: FIFO for depth-wise, best gain for
        // leaf-wise (ties to the lower node id)
        let pick = match params.growth {
            Growth::DepthWise => frontier.iter().position(|f| f.best.is_some()),
            Growth::LeafWise { max_leaves } => {
                if n_leaves >= max_leaves {
                    None
                } else {
                    frontier
                        .iter()
                        .enumerate()
                        .filter(|(_, f)| f.best.is_some())
                        .max_by(|(ia, fa), (ib, fb)| {
                            let ga = fa.best.unwrap().gain;
                            let gb = fb.best.unwrap().gain;
                            ga.total_cmp(&gb).then(ib.cmp(ia))
                        })
                        .map(|(i, _)| i)
                }
            }
        };
        let Some(pick) = pick else { break };
        let entry = frontier.swap_remove(pick);
        let best = entry.best.unwrap();

        let (var_idx, code) = matrix.schema().locate(best.column);
        let codes = matrix.var_codes(var_idx);
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &r in &entry.rows {
            if codes[r as usize] == code {
                left_rows.push(r);
            } else {
                right_rows.push(r);
            }
        }
        let left_stats = best.left_stats;
        let right_stats = entry.stats.minus(left_stats);

        let when_one = nodes.len() as u32;
        nodes.push(TreeNode::Leaf { score: objective.leaf_score(left_stats) });
        let when_zero = nodes.len() as u32;
        nodes.push(TreeNode::Leaf { score: objective.leaf_score(right_stats) });
        nodes[entry.node] = TreeNode::Branch {
            column: best.column as u32,
            when_one,
            when_zero,
            gain: best.gain,
        };
        n_leaves += 1;
        depth_reached = depth_reached.max(entry.depth + 1);

        frontier.push(make_frontier(
            when_one as usize,
            entry.depth + 1,
            left_rows,
            left_stats,
            &mut column_sampler,
        ));
        frontier.push(make_frontier(
            when_zero as usize,
            entry.depth + 1,
            right_rows,
            right_stats,
            &mut column_sampler,
        ));
    }

    for f in frontier {
        leaf_rows.push((f.node, f.rows));
    }
    Ok((Tree { nodes, depth: depth_reached }, leaf_rows))
}

fn find_best_split(
    matrix: &EncodedMatrix,
    objective: &dyn SplitObjective,
    rows: &[u32],
    parent: NodeStats,
    params: &TreeParams,
    columns: Option<&[u32]>,
) -> Option<BestSplit> {
    let schema = matrix.schema();
    let parent_value = objective.value(parent);

    // per-variable category histograms, one pass over the node's rows each
    let mut var_needed = vec![false; schema.vars.len()];
    match columns {
        None => var_needed.iter_mut().for_each(|v| *v = true),
        Some(cols) => {
            for &c in cols {
                var_needed[schema.locate(c as usize).0] = true;
            }
        }
    }
    let mut histograms: Vec<Vec<NodeStats>> = Vec::with_capacity(schema.vars.len());
    for (var_idx, var) in schema.vars.iter().enumerate() {
        if !var_needed[var_idx] {
            histograms.push(Vec::new());
            continue;
        }
        let codes = matrix.var_codes(var_idx);
        let mut hist = vec![NodeStats::default(); var.codes.len()];
        for &r in rows {
            if let Ok(pos) = var.codes.binary_search(&codes[r as usize]) {
                hist[pos].add(objective.row_stats(r as usize));
            }
        }
        histograms.push(hist);
    }

    let consider = |column: usize, best: &mut Option<BestSplit>| {
        let (var_idx, _) = schema.locate(column);
        let var = &schema.vars[var_idx];
        let left = histograms[var_idx][column - var.offset];
        if left.w < params.min_leaf_weight {
            return;
        }
        let right = parent.minus(left);
        if right.w < params.min_leaf_weight {
            return;
        }
        let gain = objective.value(left) + objective.value(right) - parent_value;
        if gain <= params.min_gain {
            return;
        }
        // strict comparison keeps the lowest column index on ties
        if best.map_or(true, |b| gain > b.gain) {
            *best = Some(BestSplit { gain, column, left_stats: left });
        }
    };

    let mut best = None;
    match columns {
        None => {
            for column in 0..schema.n_columns {
                consider(column, &mut best);
            }
        }
        Some(cols) => {
            for &column in cols {
                consider(column as usize, &mut best);
            }
        }
    }
    best
}

/// A fitted classification tree. Scores are weighted positive fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub tree: Tree,
    pub params: TreeParams,
    pub seed: u64,
    pub schema: MatrixSchema,
}

/// Train a Gini classification tree.
pub fn train_decision_tree(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &TreeParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<TreeModel> {
    if matrix.n_rows() == 0 {
        return Err(Error::Train("empty training data".into()));
    }
    if labels.len() != matrix.n_rows() {
        return Err(Error::Train(format!(
            "{} labels for {} rows",
            labels.len(),
            matrix.n_rows()
        )));
    }
    let objective = GiniObjective { labels, weights };
    let (tree, _) = grow_tree(matrix, &objective, params, None, None)?;
    Ok(TreeModel { tree, params: *params, seed, schema: matrix.schema().clone() })
}

impl TreeModel {
    pub fn score(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        matrix.check_schema(&self.schema)?;
        Ok((0..matrix.n_rows()).map(|r| self.tree.score_row(matrix, r)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::table::CodedTable;

    #[test]
    fn gini_reference_values() {
        assert_eq!(gini_impurity((2, 2)).unwrap(), 0.5);
        assert_eq!(gini_impurity((4, 0)).unwrap(), 0.0);
        assert_eq!(gini_impurity((3, 1)).unwrap(), 0.375);
        assert!(gini_impurity((0, 0)).is_err());
    }

    fn matrix(columns: Vec<Vec<i32>>, cats: &[i32]) -> EncodedMatrix {
        let vars: Vec<VariableSpec> = (0..columns.len())
            .map(|i| VariableSpec {
                name: format!("V{i}"),
                display: None,
                role: Role::Feature,
                categories: cats.iter().map(|&c| (c, format!("c{c}"))).collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            })
            .collect();
        let table = CodedTable::new(vars, columns).unwrap();
        EncodedMatrix::from_table(&table, None).unwrap()
    }

    #[test]
    fn perfect_indicator_gives_depth_one_pure_tree() {
        let m = matrix(vec![vec![0, 0, 1, 1, 0, 1]], &[0, 1]);
        let labels = [0, 0, 1, 1, 0, 1];
        let params = TreeParams { min_leaf_weight: 1.0, ..Default::default() };
        let model = train_decision_tree(&m, &labels, &params, None, 0).unwrap();
        assert_eq!(model.tree.depth, 1);
        let scores = model.score(&m).unwrap();
        for (s, &y) in scores.iter().zip(&labels) {
            assert_eq!(*s, y as f64);
        }
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let m = matrix(vec![vec![0, 1, 0, 1]], &[0, 1]);
        let model =
            train_decision_tree(&m, &[1, 1, 1, 1], &TreeParams::default(), None, 0).unwrap();
        assert_eq!(model.tree.nodes.len(), 1);
        assert_eq!(model.score(&m).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn root_split_lands_on_informative_variable_vs_exhaustive_scan() {
        // 200 seeded rows: V1 carries the signal, V0 and V2 are noise
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        let mut labels = Vec::new();
        for _ in 0..200 {
            let y = rng.gen_range(0..2) as u8;
            cols[0].push(rng.gen_range(0..3));
            cols[1].push(if rng.gen_bool(0.9) { y as i32 } else { 1 - y as i32 });
            cols[2].push(rng.gen_range(0..3));
            labels.push(y);
        }
        let m = matrix(cols, &[0, 1, 2]);

        // independent exhaustive scan over all (column) candidates
        let mut best_col = 0;
        let mut best_gain = f64::MIN;
        let parent = {
            let pos = labels.iter().filter(|&&y| y == 1).count() as u64;
            let neg = labels.len() as u64 - pos;
            gini_impurity((neg, pos)).unwrap() * labels.len() as f64
        };
        for col in 0..m.n_columns() {
            let mut l = (0u64, 0u64);
            let mut r = (0u64, 0u64);
            for row in 0..m.n_rows() {
                let side = if m.indicator(col, row) { &mut l } else { &mut r };
                if labels[row] == 1 {
                    side.1 += 1;
                } else {
                    side.0 += 1;
                }
            }
            if l.0 + l.1 == 0 || r.0 + r.1 == 0 {
                continue;
            }
            let child = gini_impurity(l).unwrap() * (l.0 + l.1) as f64
                + gini_impurity(r).unwrap() * (r.0 + r.1) as f64;
            let gain = parent - child;
            if gain > best_gain {
                best_gain = gain;
                best_col = col;
            }
        }
        assert_eq!(m.schema().locate(best_col).0, 1, "oracle scan should pick V1");

        let params = TreeParams { min_leaf_weight: 1.0, ..Default::default() };
        let model = train_decision_tree(&m, &labels, &params, None, 0).unwrap();
        match model.tree.nodes[0] {
            TreeNode::Branch { column, .. } => assert_eq!(column as usize, best_col),
            _ => panic!("expected a root split"),
        }
    }

    #[test]
    fn depth_zero_rejected() {
        let m = matrix(vec![vec![0, 1]], &[0, 1]);
        let params = TreeParams { max_depth: 0, ..Default::default() };
        assert!(train_decision_tree(&m, &[0, 1], &params, None, 0).is_err());
    }

    #[test]
    fn leaf_wise_respects_leaf_cap() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut cols = vec![Vec::new(), Vec::new()];
        let mut labels = Vec::new();
        for _ in 0..300 {
            let y = rng.gen_range(0..2) as u8;
            cols[0].push(if rng.gen_bool(0.8) { y as i32 } else { rng.gen_range(0..4) });
            cols[1].push(rng.gen_range(0..4));
            labels.push(y);
        }
        let m = matrix(cols, &[0, 1, 2, 3]);
        let params = TreeParams {
            max_depth: 10,
            min_leaf_weight: 1.0,
            min_gain: 1e-9,
            growth: Growth::LeafWise { max_leaves: 4 },
        };
        let model = train_decision_tree(&m, &labels, &params, None, 0).unwrap();
        assert!(model.tree.n_leaves() <= 4);
    }

    #[test]
    fn weighted_rows_shift_leaf_scores() {
        let m = matrix(vec![vec![0, 0, 1, 1]], &[0, 1]);
        let labels = [0, 1, 0, 1];
        let weights = [1.0, 3.0, 1.0, 1.0];
        let params = TreeParams { max_depth: 1, min_leaf_weight: 1.0, ..Default::default() };
        let model = train_decision_tree(&m, &labels, &params, Some(&weights), 0).unwrap();
        let scores = model.score(&m).unwrap();
        assert!((scores[0] - 0.75).abs() < 1e-12);
        assert!((scores[2] - 0.5).abs() < 1e-12);
    }
}
