//! Gradient-boosted trees on the logistic loss.
//!
//! Each round fits a depth-limited regression tree to the first-order
//! gradients with second-order (Newton) leaf values -G/(H + lambda); the
//! learning rate is baked into the stored leaf values, so a prediction is
//! sigmoid(base_score + sum of leaf values).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::matrix::{EncodedMatrix, MatrixSchema};
use crate::learners::tree::{grow_tree, Growth, NewtonObjective, Tree, TreeNode, TreeParams};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub eta: f64,
    pub max_depth: usize,
    /// L2 penalty on leaf values.
    pub lambda: f64,
    pub min_leaf_weight: f64,
    pub growth: Growth,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 100,
            eta: 0.3,
            max_depth: 4,
            lambda: 1.0,
            min_leaf_weight: 5.0,
            growth: Growth::DepthWise,
        }
    }
}

impl BoostParams {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".into()));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::InvalidArgument("eta must be in (0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be non-negative".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf_weight: self.min_leaf_weight,
            min_gain: 1e-12,
            growth: self.growth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub trees: Vec<Tree>,
    pub params: BoostParams,
    pub base_score: f64,
    /// Weighted mean training log-loss before each round, plus the final
    /// value; length rounds + 1.
    pub loss_history: Vec<f64>,
    pub seed: u64,
    pub schema: MatrixSchema,
}

fn log_loss(margins: &[f64], labels: &[u8], weights: Option<&[f64]>) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for (i, &f) in margins.iter().enumerate() {
        let w = weights.map_or(1.0, |ws| ws[i]);
        // log(1 + e^f) - y f, computed stably
        let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
        total += w * (softplus - labels[i] as f64 * f);
        wsum += w;
    }
    total / wsum
}

pub fn train_gradient_boosting(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &BoostParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<BoostedModel> {
    params.validate()?;
    let n = matrix.n_rows();
    if n == 0 {
        return Err(Error::Train("empty training data".into()));
    }
    if labels.len() != n {
        return Err(Error::Train(format!("{} labels for {} rows", labels.len(), n)));
    }

    let wsum: f64 = weights.map_or(n as f64, |ws| ws.iter().sum());
    let pos: f64 = match weights {
        Some(ws) => labels.iter().zip(ws).filter(|(&y, _)| y == 1).map(|(_, &w)| w).sum(),
        None => labels.iter().filter(|&&y| y == 1).count() as f64,
    };
    let base_rate = (pos / wsum).clamp(1e-9, 1.0 - 1e-9);
    let base_score = (base_rate / (1.0 - base_rate)).ln();

    let mut margins = vec![base_score; n];
    let mut gradients = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    let mut loss_history = vec![log_loss(&margins, labels, weights)];
    let mut trees = Vec::with_capacity(params.rounds);
    let tree_params = params.tree_params();

    for round in 0..params.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            gradients[i] = p - labels[i] as f64;
            hessians[i] = (p * (1.0 - p)).max(1e-16);
        }
        let objective =
            NewtonObjective { gradients: &gradients, hessians: &hessians, weights, lambda: params.lambda };
        let (mut tree, leaf_rows) = grow_tree(matrix, &objective, &tree_params, None, None)?;

        // bake the learning rate into the stored leaf values
        for node in &mut tree.nodes {
            if let TreeNode::Leaf { score } = node {
                *score *= params.eta;
            }
        }
        for (leaf_idx, rows) in &leaf_rows {
            if let TreeNode::Leaf { score } = tree.nodes[*leaf_idx] {
                for &r in rows {
                    margins[r as usize] += score;
                }
            }
        }
        let loss = log_loss(&margins, labels, weights);
        if !loss.is_finite() {
            return Err(Error::Train(format!("non-finite training loss at round {round}")));
        }
        loss_history.push(loss);
        trees.push(tree);
    }

    Ok(BoostedModel {
        trees,
        params: *params,
        base_score,
        loss_history,
        seed,
        schema: matrix.schema().clone(),
    })
}

impl BoostedModel {
    pub fn score(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        matrix.check_schema(&self.schema)?;
        let mut margins = vec![self.base_score; matrix.n_rows()];
        for tree in &self.trees {
            for (row, m) in margins.iter_mut().enumerate() {
                *m += tree.score_row(matrix, row);
            }
        }
        Ok(margins.into_iter().map(sigmoid).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::table::CodedTable;

    fn matrix(col: Vec<i32>, cats: &[i32]) -> EncodedMatrix {
        let var = VariableSpec {
            name: "V0".into(),
            display: None,
            role: Role::Feature,
            categories: cats.iter().map(|&c| (c, format!("c{c}"))).collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        };
        let table = CodedTable::new(vec![var], vec![col]).unwrap();
        EncodedMatrix::from_table(&table, None).unwrap()
    }

    #[test]
    fn one_round_reduces_separable_loss() {
        let m = matrix(vec![0, 0, 1, 1], &[0, 1]);
        let params = BoostParams {
            rounds: 1,
            eta: 1.0,
            max_depth: 4,
            lambda: 0.0,
            min_leaf_weight: 1.0,
            growth: Growth::DepthWise,
        };
        let model = train_gradient_boosting(&m, &[0, 0, 1, 1], &params, None, 0).unwrap();
        assert!(model.loss_history[1] < model.loss_history[0]);
    }

    #[test]
    fn eta_zero_rejected() {
        let m = matrix(vec![0, 1], &[0, 1]);
        let params = BoostParams { eta: 0.0, ..Default::default() };
        assert!(train_gradient_boosting(&m, &[0, 1], &params, None, 0).is_err());
    }

    #[test]
    fn loss_non_increasing_over_rounds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut col = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..400 {
            let y = rng.gen_range(0..2) as u8;
            col.push(if rng.gen_bool(0.8) { y as i32 } else { rng.gen_range(0..4) });
            labels.push(y);
        }
        let m = matrix(col, &[0, 1, 2, 3]);
        let params = BoostParams { rounds: 40, eta: 0.5, min_leaf_weight: 1.0, ..Default::default() };
        let model = train_gradient_boosting(&m, &labels, &params, None, 11).unwrap();
        for pair in model.loss_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "loss increased: {pair:?}");
        }
    }

    #[test]
    fn base_score_matches_base_rate() {
        let m = matrix(vec![0, 0, 0, 1], &[0, 1]);
        let params = BoostParams { rounds: 1, ..Default::default() };
        let model = train_gradient_boosting(&m, &[1, 0, 0, 0], &params, None, 0).unwrap();
        assert!((sigmoid(model.base_score) - 0.25).abs() < 1e-9);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let m = matrix(vec![0, 0, 1, 1, 0, 1], &[0, 1]);
        let params = BoostParams { rounds: 30, eta: 1.0, min_leaf_weight: 1.0, lambda: 0.0, ..Default::default() };
        let model = train_gradient_boosting(&m, &[0, 0, 1, 1, 0, 1], &params, None, 0).unwrap();
        for s in model.score(&m).unwrap() {
            assert!((0.0..=1.0).contains(&s));
        }
    }
}
