//! Binary classifiers over coded categorical features: decision tree,
//! random forest, gradient-boosted trees, and L1-regularized logistic
//! regression, each exposing scores and per-variable importance.

pub mod boosting;
pub mod forest;
pub mod linear;
pub mod matrix;
pub mod tree;
pub mod tune;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub use boosting::{train_gradient_boosting, BoostParams, BoostedModel};
pub use forest::{train_random_forest, ForestModel, ForestParams};
pub use linear::{train_l1_logistic, LinearParams, SparseLinearModel};
pub use matrix::{EncodedMatrix, MatrixSchema};
pub use tree::{gini_impurity, train_decision_tree, Growth, TreeModel, TreeParams};
pub use tune::{tune, Metric, TuneCell, TuneResult};

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    DecisionTree,
    RandomForest,
    GradientBoosting,
    L1Logistic,
}

impl LearnerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::DecisionTree => "decision_tree",
            LearnerKind::RandomForest => "random_forest",
            LearnerKind::GradientBoosting => "gradient_boosting",
            LearnerKind::L1Logistic => "l1_logistic",
        }
    }
}

impl std::fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Parameters for any learner; doubles as a grid point for tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerParams {
    Tree(TreeParams),
    Forest(ForestParams),
    Boosted(BoostParams),
    Linear(LinearParams),
}

impl LearnerParams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            LearnerParams::Tree(_) => LearnerKind::DecisionTree,
            LearnerParams::Forest(_) => LearnerKind::RandomForest,
            LearnerParams::Boosted(_) => LearnerKind::GradientBoosting,
            LearnerParams::Linear(_) => LearnerKind::L1Logistic,
        }
    }
}

/// A fitted learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Boosted(BoostedModel),
    Linear(SparseLinearModel),
}

/// Scores and thresholded labels for a batch of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Non-negative per-variable importance, normalized to sum to one unless
/// every score is zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub method: String,
    /// (variable name, score), in the model's variable order.
    pub scores: Vec<(String, f64)>,
}

impl ImportanceVector {
    fn normalized(method: &str, names: Vec<String>, mut raw: Vec<f64>) -> ImportanceVector {
        let total: f64 = raw.iter().sum();
        if total > 0.0 {
            raw.iter_mut().for_each(|v| *v /= total);
        }
        ImportanceVector {
            method: method.to_string(),
            scores: names.into_iter().zip(raw).collect(),
        }
    }

    pub fn score_of(&self, name: &str) -> Option<f64> {
        self.scores.iter().find(|(n, _)| n == name).map(|&(_, s)| s)
    }
}

/// Train any learner from a grid point.
pub fn train_model(
    matrix: &EncodedMatrix,
    labels: &[u8],
    params: &LearnerParams,
    weights: Option<&[f64]>,
    seed: u64,
) -> Result<Model> {
    Ok(match params {
        LearnerParams::Tree(p) => Model::Tree(train_decision_tree(matrix, labels, p, weights, seed)?),
        LearnerParams::Forest(p) => {
            Model::Forest(train_random_forest(matrix, labels, p, weights, seed)?)
        }
        LearnerParams::Boosted(p) => {
            Model::Boosted(train_gradient_boosting(matrix, labels, p, weights, seed)?)
        }
        LearnerParams::Linear(p) => Model::Linear(train_l1_logistic(matrix, labels, p, weights)?),
    })
}

impl Model {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Model::Tree(_) => LearnerKind::DecisionTree,
            Model::Forest(_) => LearnerKind::RandomForest,
            Model::Boosted(_) => LearnerKind::GradientBoosting,
            Model::Linear(_) => LearnerKind::L1Logistic,
        }
    }

    pub fn schema(&self) -> &MatrixSchema {
        match self {
            Model::Tree(m) => &m.schema,
            Model::Forest(m) => &m.schema,
            Model::Boosted(m) => &m.schema,
            Model::Linear(m) => &m.schema,
        }
    }

    /// Positive-class scores in [0, 1].
    pub fn score(&self, matrix: &EncodedMatrix) -> Result<Vec<f64>> {
        match self {
            Model::Tree(m) => m.score(matrix),
            Model::Forest(m) => m.score(matrix),
            Model::Boosted(m) => m.score(matrix),
            Model::Linear(m) => m.score(matrix),
        }
    }

    /// Scores plus labels at the default 0.5 threshold.
    pub fn predict(&self, matrix: &EncodedMatrix) -> Result<Prediction> {
        let scores = self.score(matrix)?;
        let labels = scores
            .iter()
            .map(|&s| u8::from(s >= DEFAULT_DECISION_THRESHOLD))
            .collect();
        Ok(Prediction { scores, labels })
    }

    /// Per-variable importance: total split gain for tree ensembles,
    /// maximum absolute indicator weight for the linear model.
    pub fn importance(&self) -> ImportanceVector {
        let schema = self.schema();
        let names = schema.var_names();
        let mut raw = vec![0.0; schema.vars.len()];
        match self {
            Model::Tree(m) => {
                m.tree.gain_by_variable(schema, &mut raw);
                ImportanceVector::normalized("gini_gain", names, raw)
            }
            Model::Forest(m) => {
                for tree in &m.trees {
                    tree.gain_by_variable(schema, &mut raw);
                }
                ImportanceVector::normalized("gini_gain", names, raw)
            }
            Model::Boosted(m) => {
                for tree in &m.trees {
                    tree.gain_by_variable(schema, &mut raw);
                }
                ImportanceVector::normalized("newton_gain", names, raw)
            }
            Model::Linear(m) => {
                for (var_idx, var) in schema.vars.iter().enumerate() {
                    raw[var_idx] = (var.offset..var.offset + var.codes.len())
                        .map(|j| m.weights[j].abs())
                        .fold(0.0, f64::max);
                }
                ImportanceVector::normalized("max_abs_weight", names, raw)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::error::Error;
    use crate::table::CodedTable;

    fn two_var_matrix() -> (EncodedMatrix, Vec<u8>) {
        let vars: Vec<VariableSpec> = (0..2)
            .map(|i| VariableSpec {
                name: format!("V{i}"),
                display: None,
                role: Role::Feature,
                categories: (0..2).map(|c| (c, format!("c{c}"))).collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            })
            .collect();
        let table = CodedTable::new(
            vars,
            vec![vec![0, 0, 1, 1, 0, 1, 0, 1], vec![0, 1, 0, 1, 1, 0, 0, 1]],
        )
        .unwrap();
        let labels = vec![0, 0, 1, 1, 0, 1, 0, 1];
        (EncodedMatrix::from_table(&table, None).unwrap(), labels)
    }

    #[test]
    fn single_split_concentrates_importance() {
        let (m, labels) = two_var_matrix();
        let params = TreeParams { max_depth: 1, min_leaf_weight: 1.0, ..Default::default() };
        let model =
            Model::Tree(train_decision_tree(&m, &labels, &params, None, 0).unwrap());
        let imp = model.importance();
        assert_eq!(imp.score_of("V0"), Some(1.0));
        assert_eq!(imp.score_of("V1"), Some(0.0));
    }

    #[test]
    fn all_zero_linear_importance_not_normalized() {
        let (m, labels) = two_var_matrix();
        let params = LinearParams { lambda1: 100.0, ..Default::default() };
        let model = Model::Linear(train_l1_logistic(&m, &labels, &params, None).unwrap());
        let imp = model.importance();
        assert!(imp.scores.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn predict_empty_matrix_is_empty() {
        let (m, labels) = two_var_matrix();
        let params = TreeParams { min_leaf_weight: 1.0, ..Default::default() };
        let model = Model::Tree(train_decision_tree(&m, &labels, &params, None, 0).unwrap());
        let empty = m.select_rows(&[]);
        let pred = model.predict(&empty).unwrap();
        assert!(pred.scores.is_empty());
        assert!(pred.labels.is_empty());
    }

    #[test]
    fn leaf_only_tree_scores_every_row_identically() {
        let (m, _) = two_var_matrix();
        let model = Model::Tree(TreeModel {
            tree: tree::Tree { nodes: vec![tree::TreeNode::Leaf { score: 0.8 }], depth: 0 },
            params: TreeParams::default(),
            seed: 0,
            schema: m.schema().clone(),
        });
        let pred = model.predict(&m).unwrap();
        assert!(pred.labels.iter().all(|&y| y == 1));
        assert!(pred.scores.iter().all(|&s| s == 0.8));
    }

    #[test]
    fn model_summaries_round_trip_through_json() {
        let (m, labels) = two_var_matrix();
        let models = vec![
            train_model(&m, &labels, &LearnerParams::Tree(TreeParams { min_leaf_weight: 1.0, ..Default::default() }), None, 1).unwrap(),
            train_model(&m, &labels, &LearnerParams::Forest(ForestParams { n_trees: 3, tree: TreeParams { min_leaf_weight: 1.0, ..Default::default() }, ..Default::default() }), None, 1).unwrap(),
            train_model(&m, &labels, &LearnerParams::Boosted(BoostParams { rounds: 5, min_leaf_weight: 1.0, ..Default::default() }), None, 1).unwrap(),
            train_model(&m, &labels, &LearnerParams::Linear(LinearParams::default()), None, 1).unwrap(),
        ];
        for model in models {
            let text = serde_json::to_string(&model).unwrap();
            let back: Model = serde_json::from_str(&text).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.score(&m).unwrap(), model.score(&m).unwrap());
        }
    }

    #[test]
    fn mismatched_columns_error_on_predict() {
        let (m, labels) = two_var_matrix();
        let params = TreeParams { min_leaf_weight: 1.0, ..Default::default() };
        let model = Model::Tree(train_decision_tree(&m, &labels, &params, None, 0).unwrap());
        let table = CodedTable::new(
            vec![VariableSpec {
                name: "V0".into(),
                display: None,
                role: Role::Feature,
                categories: (0..2).map(|c| (c, format!("c{c}"))).collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            }],
            vec![vec![0, 1]],
        )
        .unwrap();
        let narrow = EncodedMatrix::from_table(&table, None).unwrap();
        assert!(matches!(model.predict(&narrow), Err(Error::ColumnMismatch(_))));
    }
}
