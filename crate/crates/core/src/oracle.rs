//! Exact enumeration oracle for every fairness and classification metric.
//!
//! This module deliberately shares no computational code with the
//! `fairness` or `metrics` modules: every quantity is recomputed from raw
//! rows by literal definitional counting so the two paths can be compared
//! exactly in tests.

use serde::{Deserialize, Serialize};

use crate::codebook::Role;
use crate::error::{Error, Result};
use crate::table::LabeledTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleGroupMetrics {
    pub variable: String,
    /// (code, selection rate, row count), ascending code.
    pub selection_rates: Vec<(i32, f64, u64)>,
    /// None when every group selects nobody.
    pub dpr: Option<f64>,
    /// None when fewer than two groups have actual negatives (positives).
    pub fprd: Option<f64>,
    pub fnrd: Option<f64>,
    pub eod: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub overall_selection_rate: f64,
    pub per_variable: Vec<OracleGroupMetrics>,
}

const MAX_ORACLE_ROWS: usize = 1_000_000;

/// Recompute every metric over the table's protected variables by direct
/// enumeration.
pub fn oracle_metrics(table: &LabeledTable, predictions: &[u8]) -> Result<OracleMetrics> {
    let n = table.n_rows();
    if n == 0 || predictions.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {n} rows",
            predictions.len()
        )));
    }
    if n > MAX_ORACLE_ROWS {
        return Err(Error::InvalidArgument(format!(
            "oracle is a direct enumeration, capped at {MAX_ORACLE_ROWS} rows"
        )));
    }
    let labels = &table.labels;

    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut tn = 0u64;
    let mut fn_ = 0u64;
    for i in 0..n {
        match (labels[i], predictions[i]) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (0, 0) => tn += 1,
            _ => fn_ += 1,
        }
    }
    let total = n as f64;
    let p_sup = (tp + fn_) as f64;
    let n_sup = (fp + tn) as f64;
    let prec_pos = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let rec_pos = if p_sup == 0.0 { 0.0 } else { tp as f64 / p_sup };
    let f1_pos =
        if prec_pos + rec_pos > 0.0 { 2.0 * prec_pos * rec_pos / (prec_pos + rec_pos) } else { 0.0 };
    let prec_neg = if tn + fn_ == 0 { 0.0 } else { tn as f64 / (tn + fn_) as f64 };
    let rec_neg = if n_sup == 0.0 { 0.0 } else { tn as f64 / n_sup };
    let f1_neg =
        if prec_neg + rec_neg > 0.0 { 2.0 * prec_neg * rec_neg / (prec_neg + rec_neg) } else { 0.0 };

    let mut per_variable = Vec::new();
    for var in table.table.variables() {
        if var.role != Role::Protected {
            continue;
        }
        let column = table.table.column_by_name(&var.name)?;
        let mut codes: Vec<i32> = column.to_vec();
        codes.sort_unstable();
        codes.dedup();

        let mut selection_rates = Vec::new();
        let mut fprs = Vec::new();
        let mut fnrs = Vec::new();
        for &code in &codes {
            let mut selected = 0u64;
            let mut count = 0u64;
            let mut g_fp = 0u64;
            let mut g_neg = 0u64;
            let mut g_fn = 0u64;
            let mut g_pos = 0u64;
            for i in 0..n {
                if column[i] != code {
                    continue;
                }
                count += 1;
                if predictions[i] == 1 {
                    selected += 1;
                }
                if labels[i] == 0 {
                    g_neg += 1;
                    if predictions[i] == 1 {
                        g_fp += 1;
                    }
                } else {
                    g_pos += 1;
                    if predictions[i] == 0 {
                        g_fn += 1;
                    }
                }
            }
            selection_rates.push((code, selected as f64 / count as f64, count));
            if g_neg > 0 {
                fprs.push(g_fp as f64 / g_neg as f64);
            }
            if g_pos > 0 {
                fnrs.push(g_fn as f64 / g_pos as f64);
            }
        }

        let max_sr = selection_rates.iter().map(|&(_, r, _)| r).fold(f64::NEG_INFINITY, f64::max);
        let min_sr = selection_rates.iter().map(|&(_, r, _)| r).fold(f64::INFINITY, f64::min);
        let dpr = if max_sr > 0.0 { Some(min_sr / max_sr) } else { None };
        let (fprd, fnrd, eod) = if fprs.len() >= 2 && fnrs.len() >= 2 {
            let fprd = fprs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - fprs.iter().copied().fold(f64::INFINITY, f64::min);
            let fnrd = fnrs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - fnrs.iter().copied().fold(f64::INFINITY, f64::min);
            (Some(fprd), Some(fnrd), Some(fprd.max(fnrd)))
        } else {
            (None, None, None)
        };
        per_variable.push(OracleGroupMetrics {
            variable: var.name.clone(),
            selection_rates,
            dpr,
            fprd,
            fnrd,
            eod,
        });
    }

    Ok(OracleMetrics {
        accuracy: (tp + tn) as f64 / total,
        precision: (prec_pos * p_sup + prec_neg * n_sup) / total,
        recall: (rec_pos * p_sup + rec_neg * n_sup) / total,
        f1: (f1_pos * p_sup + f1_neg * n_sup) / total,
        overall_selection_rate: (tp + fp) as f64 / total,
        per_variable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::VariableSpec;
    use crate::table::{CodedTable, Cohort};

    fn eight_row_table() -> (LabeledTable, Vec<u8>) {
        // hand-enumerated: group 0 rows (0..4): y = 1,1,0,0  p = 1,0,1,0
        //                  group 1 rows (4..8): y = 1,0,0,0  p = 1,1,0,1
        // group 0: TP=1 FN=1 FP=1 TN=1 -> SR = 0.5, FPR = 0.5, FNR = 0.5
        // group 1: TP=1 FN=0 FP=2 TN=1 -> SR = 0.75, FPR = 2/3, FNR = 0
        let var = VariableSpec {
            name: "G".into(),
            display: None,
            role: Role::Protected,
            categories: [(0, "g0".into()), (1, "g1".into())].into_iter().collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        };
        let table =
            CodedTable::new(vec![var], vec![vec![0, 0, 0, 0, 1, 1, 1, 1]]).unwrap();
        let labels = vec![1, 1, 0, 0, 1, 0, 0, 0];
        let preds = vec![1, 0, 1, 0, 1, 1, 0, 1];
        (LabeledTable::new(table, labels, Cohort::Inpatient).unwrap(), preds)
    }

    #[test]
    fn hand_enumerated_eight_rows() {
        let (data, preds) = eight_row_table();
        let m = oracle_metrics(&data, &preds).unwrap();
        let g = &m.per_variable[0];
        assert_eq!(g.selection_rates, vec![(0, 0.5, 4), (1, 0.75, 4)]);
        assert!((g.dpr.unwrap() - 0.5 / 0.75).abs() < 1e-15);
        assert!((g.fprd.unwrap() - (2.0 / 3.0 - 0.5)).abs() < 1e-15);
        assert!((g.fnrd.unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(g.eod.unwrap(), 0.5);
        assert_eq!(m.overall_selection_rate, 5.0 / 8.0);
        assert_eq!(m.accuracy, 4.0 / 8.0);
    }

    #[test]
    fn single_row_defines_what_it_can() {
        let var = VariableSpec {
            name: "G".into(),
            display: None,
            role: Role::Protected,
            categories: [(0, "g0".into())].into_iter().collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        };
        let table = CodedTable::new(vec![var], vec![vec![0]]).unwrap();
        let data = LabeledTable::new(table, vec![1], Cohort::Inpatient).unwrap();
        let m = oracle_metrics(&data, &[1]).unwrap();
        let g = &m.per_variable[0];
        assert_eq!(g.dpr, Some(1.0));
        // no actual negatives anywhere: FPR spread undefined
        assert_eq!(g.fprd, None);
        assert_eq!(g.eod, None);
        assert_eq!(m.accuracy, 1.0);
    }
}
