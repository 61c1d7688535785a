//! Variable selection by majority vote over four selectors: L1 logistic
//! regression, decision tree, random forest, and gradient boosting. A
//! variable enters the final set when at least three of the four pick it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{
    train_decision_tree, train_gradient_boosting, train_l1_logistic, train_random_forest,
    BoostParams, EncodedMatrix, ForestParams, ImportanceVector, LearnerKind, LinearParams, Model,
    TreeParams,
};
use crate::metrics::{classification_report, confusion};
use crate::sampling::stratified_kfold;
use crate::table::LabeledTable;

pub const VOTES_REQUIRED: u8 = 3;
pub const SELECTOR_COUNT: usize = 4;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub boost: BoostParams,
    /// L1 strengths tried by cross-validation, strongest first so ties
    /// prefer the sparser model.
    pub lambda_grid: Vec<f64>,
    pub linear_max_iters: usize,
    pub linear_tol: f64,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            tree: TreeParams::default(),
            forest: ForestParams { n_trees: 50, ..Default::default() },
            boost: BoostParams { rounds: 50, ..Default::default() },
            lambda_grid: vec![0.1, 0.0316, 0.01, 0.00316, 0.001],
            linear_max_iters: 100,
            linear_tol: 1e-5,
            cv_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectorReport {
    pub kind: LearnerKind,
    pub importance: Option<ImportanceVector>,
    pub selected: Vec<String>,
    /// For the L1 selector: the cross-validation-chosen strength.
    pub chosen_lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selectors: Vec<SelectorReport>,
    /// (variable, votes), in table variable order.
    pub votes: Vec<(String, u8)>,
    /// Variables with at least three votes, in table variable order.
    pub selected: Vec<String>,
    pub candidate_count: usize,
}

impl SelectionResult {
    pub fn votes_for(&self, name: &str) -> u8 {
        self.votes.iter().find(|(n, _)| n == name).map_or(0, |&(_, v)| v)
    }
}

/// Importance-based selection rule for the tree-family selectors: keep
/// variables whose normalized importance reaches the uniform share 1/d.
fn above_uniform_share(importance: &ImportanceVector, d: usize) -> Vec<String> {
    let share = 1.0 / d as f64;
    importance
        .scores
        .iter()
        .filter(|(_, s)| *s >= share)
        .map(|(n, _)| n.clone())
        .collect()
}

fn linear_selector(
    matrix: &EncodedMatrix,
    train: &LabeledTable,
    config: &SelectorConfig,
) -> Result<(ImportanceVector, Vec<String>, f64)> {
    if config.lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let plan = stratified_kfold(train, config.cv_folds, config.seed)?;
    let mut best: Option<(f64, f64)> = None; // (lambda, mean accuracy)
    for &lambda in &config.lambda_grid {
        let params = LinearParams {
            lambda1: lambda,
            max_iters: config.linear_max_iters,
            tol: config.linear_tol,
        };
        let mut accs = Vec::with_capacity(plan.k);
        for fold in 0..plan.k {
            let train_rows = plan.complement_rows(fold);
            let val_rows = plan.fold_rows(fold);
            let m = matrix.select_rows(&train_rows);
            let y: Vec<u8> = train_rows.iter().map(|&r| train.labels[r]).collect();
            let model = train_l1_logistic(&m, &y, &params, None)?;
            let vm = matrix.select_rows(&val_rows);
            let vy: Vec<u8> = val_rows.iter().map(|&r| train.labels[r]).collect();
            let pred = Model::Linear(model).predict(&vm)?;
            let report = classification_report(&confusion(&vy, &pred.labels)?)?;
            accs.push(report.accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        // strictly-greater: earlier (stronger) lambda wins ties
        if best.map_or(true, |(_, b)| mean > b) {
            best = Some((lambda, mean));
        }
    }
    let (lambda, _) = best.expect("grid is non-empty");
    let model = train_l1_logistic(
        matrix,
        &train.labels,
        &LinearParams { lambda1: lambda, max_iters: config.linear_max_iters, tol: config.linear_tol },
        None,
    )?;
    let schema = matrix.schema().clone();
    let mut selected = Vec::new();
    for var in &schema.vars {
        let any_nonzero =
            (var.offset..var.offset + var.codes.len()).any(|j| model.weights[j] != 0.0);
        if any_nonzero {
            selected.push(var.name.clone());
        }
    }
    let importance = Model::Linear(model).importance();
    Ok((importance, selected, lambda))
}

/// Run the four selectors and take the majority vote. A selector that
/// fails abstains (zero votes) and is reported; the operation fails only
/// when two or more selectors fail.
pub fn select_features(train: &LabeledTable, config: &SelectorConfig) -> Result<SelectionResult> {
    if train.n_rows() == 0 {
        return Err(Error::InvalidArgument("empty training data".into()));
    }
    let matrix = EncodedMatrix::from_table(&train.table, None)?;
    let d = matrix.n_vars();
    if d < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 candidate variables, found {d}")));
    }
    let labels = &train.labels;

    let mut selectors = Vec::with_capacity(SELECTOR_COUNT);

    let tree_run = train_decision_tree(&matrix, labels, &config.tree, None, config.seed)
        .map(|m| Model::Tree(m).importance());
    selectors.push(importance_report(LearnerKind::DecisionTree, tree_run, d));

    let forest_run = train_random_forest(&matrix, labels, &config.forest, None, config.seed)
        .map(|m| Model::Forest(m).importance());
    selectors.push(importance_report(LearnerKind::RandomForest, forest_run, d));

    let boost_run = train_gradient_boosting(&matrix, labels, &config.boost, None, config.seed)
        .map(|m| Model::Boosted(m).importance());
    selectors.push(importance_report(LearnerKind::GradientBoosting, boost_run, d));

    selectors.push(match linear_selector(&matrix, train, config) {
        Ok((importance, selected, lambda)) => SelectorReport {
            kind: LearnerKind::L1Logistic,
            importance: Some(importance),
            selected,
            chosen_lambda: Some(lambda),
            error: None,
        },
        Err(e) => SelectorReport {
            kind: LearnerKind::L1Logistic,
            importance: None,
            selected: Vec::new(),
            chosen_lambda: None,
            error: Some(e.to_string()),
        },
    });

    let failures = selectors.iter().filter(|s| s.error.is_some()).count();
    if failures >= 2 {
        let detail: Vec<String> = selectors
            .iter()
            .filter_map(|s| s.error.as_ref().map(|e| format!("{}: {e}", s.kind)))
            .collect();
        return Err(Error::Train(format!("{failures} of 4 selectors failed: {}", detail.join("; "))));
    }

    let names = matrix.schema().var_names();
    let votes: Vec<(String, u8)> = names
        .iter()
        .map(|name| {
            let v = selectors.iter().filter(|s| s.selected.contains(name)).count() as u8;
            (name.clone(), v)
        })
        .collect();
    let selected =
        votes.iter().filter(|(_, v)| *v >= VOTES_REQUIRED).map(|(n, _)| n.clone()).collect();

    Ok(SelectionResult { selectors, votes, selected, candidate_count: d })
}

fn importance_report(
    kind: LearnerKind,
    run: Result<ImportanceVector>,
    d: usize,
) -> SelectorReport {
    match run {
        Ok(importance) => {
            let selected = above_uniform_share(&importance, d);
            SelectorReport { kind, importance: Some(importance), selected, chosen_lambda: None, error: None }
        }
        Err(e) => SelectorReport {
            kind,
            importance: None,
            selected: Vec::new(),
            chosen_lambda: None,
            error: Some(e.to_string()),
        },
    }
}
