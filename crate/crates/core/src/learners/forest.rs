//! Bagged ensemble of Gini trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::matrix::{EncodedMatrix, MatrixSchema};
use crate::learners::tree::{grow_tree, GiniObjective, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    /// Fraction of indicator columns considered at each split.
    pub feature_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            tree: TreeParams::default(),
            bootstrap: true,
            feature_fraction: 0.7,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidArgument("feature_fraction must be in (0, 1]".into()));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub seed: u64,
    pub schema: MatrixSchema,
}

/// Train a random forest: each tree sees a bootstrap resample (as integer
/// row weights) and a per-split column subsample, both seeded from the
/// master seed so results are reproducible.
pub fn train_random_forest(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &ForestParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<ForestModel> {
    params.validate()?;
    if matrix.n_rows() == 0 {
        return Err(Error::Train("empty training data".into()));
    }
    if labels.len() != matrix.n_rows() {
        return Err(Error::Train(format!("{} labels for {} rows", labels.len(), matrix.n_rows())));
    }

    let n = matrix.n_rows();
    let n_cols = matrix.n_columns();
    let sample_size = ((params.feature_fraction * n_cols as f64).ceil() as usize).clamp(1, n_cols);

    let mut seeder = ChaCha8Rng::seed_from_u64(seed);
    let tree_seeds: Vec<u64> = (0..params.n_trees).map(|_| seeder.gen()).collect();

    let mut trees = Vec::with_capacity(params.n_trees);
    for tree_seed in tree_seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);

        let tree_weights: Option<Vec<f64>> = if params.bootstrap {
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            Some(match weights {
                Some(ws) => counts.iter().zip(ws).map(|(&c, &w)| c as f64 * w).collect(),
                None => counts.iter().map(|&c| c as f64).collect(),
            })
        } else {
            weights.map(<[f64]>::to_vec)
        };
        // bootstrap can leave rows with zero weight; they stay in the row set
        // but contribute nothing to the statistics
        let objective = GiniObjective { labels, weights: tree_weights.as_deref() };

        let full_fraction = sample_size == n_cols;
        let mut sampler = move || -> Option<Vec<u32>> {
            if full_fraction {
                None
            } else {
                let mut cols =
                    rand::seq::index::sample(&mut rng, n_cols, sample_size).into_vec();
                cols.sort_unstable();
                Some(cols.into_iter().map(|c| c as u32).collect())
            }
        };
        let (tree, _) = grow_tree(matrix, &objective, &params.tree, Some(&mut sampler), None)?;
        trees.push(tree);
    }

    Ok(ForestModel { trees, params: *params, seed, schema: matrix.schema().clone() })
}

impl ForestModel {
    /// Mean of the trees' leaf scores.
    pub fn score(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        matrix.check_schema(&self.schema)?;
        let mut scores = vec![0.0; matrix.n_rows()];
        for tree in &self.trees {
            for (row, s) in scores.iter_mut().enumerate() {
                *s += tree.score_row(matrix, row);
            }
        }
        let k = self.trees.len() as f64;
        scores.iter_mut().for_each(|s| *s /= k);
        Ok(scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::learners::tree::train_decision_tree;
    use crate::table::CodedTable;

    fn signal_matrix(n: usize, seed: u64) -> (EncodedMatrix, Vec<u8>) {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![Vec::new(), Vec::new(), Vec::new()];
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.gen_range(0..2) as u8;
            cols[0].push(if rng.gen_bool(0.85) { y as i32 } else { 1 - y as i32 });
            cols[1].push(if rng.gen_bool(0.7) { y as i32 } else { rng.gen_range(0..3) });
            cols[2].push(rng.gen_range(0..3));
            labels.push(y);
        }
        let vars: Vec<VariableSpec> = (0..3)
            .map(|i| VariableSpec {
                name: format!("V{i}"),
                display: None,
                role: Role::Feature,
                categories: (0..3).map(|c| (c, format!("c{c}"))).collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            })
            .collect();
        let table = CodedTable::new(vars, cols).unwrap();
        (EncodedMatrix::from_table(&table, None).unwrap(), labels)
    }

    #[test]
    fn single_tree_no_bootstrap_full_features_reduces_to_tree() {
        let (m, labels) = signal_matrix(300, 5);
        let tree_params = TreeParams { min_leaf_weight: 2.0, ..Default::default() };
        let fp = ForestParams {
            n_trees: 1,
            tree: tree_params,
            bootstrap: false,
            feature_fraction: 1.0,
        };
        let forest = train_random_forest(&m, &labels, &fp, None, 42).unwrap();
        let tree = train_decision_tree(&m, &labels, &tree_params, None, 42).unwrap();
        assert_eq!(forest.trees[0], tree.tree);
        assert_eq!(forest.score(&m).unwrap(), tree.score(&m).unwrap());
    }

    #[test]
    fn same_seed_same_model() {
        let (m, labels) = signal_matrix(200, 9);
        let fp = ForestParams { n_trees: 8, ..Default::default() };
        let a = train_random_forest(&m, &labels, &fp, None, 77).unwrap();
        let b = train_random_forest(&m, &labels, &fp, None, 77).unwrap();
        assert_eq!(a.trees, b.trees);
    }

    #[test]
    fn forest_score_is_mean_of_tree_scores() {
        let (m, labels) = signal_matrix(150, 2);
        let fp = ForestParams { n_trees: 5, ..Default::default() };
        let forest = train_random_forest(&m, &labels, &fp, None, 3).unwrap();
        let scores = forest.score(&m).unwrap();
        for row in 0..m.n_rows() {
            let mean: f64 =
                forest.trees.iter().map(|t| t.score_row(&m, row)).sum::<f64>() / 5.0;
            assert!((scores[row] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trees_rejected() {
        let (m, labels) = signal_matrix(50, 1);
        let fp = ForestParams { n_trees: 0, ..Default::default() };
        assert!(train_random_forest(&m, &labels, &fp, None, 0).is_err());
    }
}
