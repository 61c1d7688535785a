//! Grid search over learner parameters with cross-validated scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{train_model, EncodedMatrix, LearnerParams};
use crate::metrics::{classification_report, confusion};
use crate::sampling::FoldPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    F1Weighted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneCell {
    pub params: LearnerParams,
    pub per_fold: Vec<f64>,
    pub mean_metric: Option<f64>,
    /// Training failure for this grid point, recorded instead of aborting.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub cells: Vec<TuneCell>,
    pub best_index: usize,
    pub metric: Metric,
}

impl TuneResult {
    pub fn best_params(&self) -> &LearnerParams {
        &self.cells[self.best_index].params
    }
}

/// Evaluate every grid point by mean cross-validated metric. Failed cells
/// are recorded and skipped; ties go to the earlier grid entry.
pub fn tune(
    matrix: &EncodedMatrix,
    labels: &[u8],
    weights: Option<&[f64]>,
    grid: &[LearnerParams],
    plan: &FoldPlan,
    metric: Metric,
    seed: u64,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    if plan.assignment.len() != matrix.n_rows() {
        return Err(Error::InvalidArgument(format!(
            "fold plan covers {} rows, data has {}",
            plan.assignment.len(),
            matrix.n_rows()
        )));
    }

    let folds: Vec<(Vec<usize>, Vec<usize>)> =
        (0..plan.k).map(|f| (plan.complement_rows(f), plan.fold_rows(f))).collect();

    let mut cells = Vec::with_capacity(grid.len());
    for params in grid {
        let mut per_fold = Vec::with_capacity(plan.k);
        let mut error = None;
        for (train_rows, val_rows) in &folds {
            let train_m = matrix.select_rows(train_rows);
            let train_y: Vec<u8> = train_rows.iter().map(|&r| labels[r]).collect();
            let train_w: Option<Vec<f64>> =
                weights.map(|ws| train_rows.iter().map(|&r| ws[r]).collect());
            let model = match train_model(&train_m, &train_y, params, train_w.as_deref(), seed) {
                Ok(m) => m,
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            };
            let val_m = matrix.select_rows(val_rows);
            let val_y: Vec<u8> = val_rows.iter().map(|&r| labels[r]).collect();
            let pred = match model.predict(&val_m) {
                Ok(p) => p,
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            };
            let report = confusion(&val_y, &pred.labels).and_then(|c| classification_report(&c));
            match report {
                Ok(r) => per_fold.push(match metric {
                    Metric::Accuracy => r.accuracy,
                    Metric::F1Weighted => r.f1,
                }),
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        let mean_metric = if error.is_none() && !per_fold.is_empty() {
            Some(per_fold.iter().sum::<f64>() / per_fold.len() as f64)
        } else {
            None
        };
        cells.push(TuneCell { params: *params, per_fold, mean_metric, error });
    }

    let mut best_index = None;
    for (i, cell) in cells.iter().enumerate() {
        if let Some(m) = cell.mean_metric {
            // strictly-greater keeps the earliest grid entry on ties
            if best_index.map_or(true, |b: usize| m > cells[b].mean_metric.unwrap()) {
                best_index = Some(i);
            }
        }
    }
    let best_index = best_index
        .ok_or_else(|| Error::Train("every grid point failed during tuning".into()))?;
    Ok(TuneResult { cells, best_index, metric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::learners::{ForestParams, TreeParams};
    use crate::sampling::stratified_kfold;
    use crate::table::{CodedTable, Cohort, LabeledTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(n: usize) -> (EncodedMatrix, Vec<u8>, LabeledTable) {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut col = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.gen_range(0..2) as u8;
            col.push(if rng.gen_bool(0.85) { y as i32 } else { 1 - y as i32 });
            labels.push(y);
        }
        let var = VariableSpec {
            name: "V0".into(),
            display: None,
            role: Role::Feature,
            categories: (0..2).map(|c| (c, format!("c{c}"))).collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        };
        let table = CodedTable::new(vec![var], vec![col]).unwrap();
        let matrix = EncodedMatrix::from_table(&table, None).unwrap();
        let labeled = LabeledTable::new(table, labels.clone(), Cohort::Inpatient).unwrap();
        (matrix, labels, labeled)
    }

    #[test]
    fn single_point_grid_returns_it() {
        let (m, labels, data) = dataset(60);
        let plan = stratified_kfold(&data, 3, 1).unwrap();
        let grid = [LearnerParams::Tree(TreeParams { min_leaf_weight: 1.0, ..Default::default() })];
        let result = tune(&m, &labels, None, &grid, &plan, Metric::Accuracy, 0).unwrap();
        assert_eq!(result.best_index, 0);
        assert!(result.cells[0].mean_metric.unwrap() > 0.7);
    }

    #[test]
    fn degenerate_cell_marked_failed_best_among_rest() {
        let (m, labels, data) = dataset(60);
        let plan = stratified_kfold(&data, 3, 1).unwrap();
        let grid = [
            LearnerParams::Tree(TreeParams { max_depth: 0, ..Default::default() }),
            LearnerParams::Tree(TreeParams { min_leaf_weight: 1.0, ..Default::default() }),
        ];
        let result = tune(&m, &labels, None, &grid, &plan, Metric::Accuracy, 0).unwrap();
        assert!(result.cells[0].error.is_some());
        assert_eq!(result.best_index, 1);
    }

    #[test]
    fn equal_means_tie_break_to_earlier_entry() {
        let (m, labels, data) = dataset(80);
        let plan = stratified_kfold(&data, 4, 2).unwrap();
        // a depth-8 and depth-12 tree on one binary feature fit identically
        let grid = [
            LearnerParams::Tree(TreeParams { max_depth: 8, min_leaf_weight: 1.0, ..Default::default() }),
            LearnerParams::Tree(TreeParams { max_depth: 12, min_leaf_weight: 1.0, ..Default::default() }),
        ];
        let result = tune(&m, &labels, None, &grid, &plan, Metric::Accuracy, 0).unwrap();
        assert_eq!(
            result.cells[0].mean_metric.unwrap(),
            result.cells[1].mean_metric.unwrap()
        );
        assert_eq!(result.best_index, 0);
    }

    #[test]
    fn all_failed_grid_is_an_error() {
        let (m, labels, data) = dataset(40);
        let plan = stratified_kfold(&data, 2, 3).unwrap();
        let grid = [LearnerParams::Forest(ForestParams { n_trees: 0, ..Default::default() })];
        assert!(tune(&m, &labels, None, &grid, &plan, Metric::Accuracy, 0).is_err());
    }
}
