//! CSV ingestion and the data-preparation steps that turn a raw coded file
//! into per-cohort labeled tables.

use std::collections::BTreeMap;
use std::path::Path;

use crate::codebook::{Codebook, DayBand, Role, VariableSpec};
use crate::error::{Error, Result};
use crate::table::{CodedTable, Cohort, LabeledTable};

pub const DEFAULT_MAX_MISSING_RATIO: f64 = 0.70;

pub const MISSING_CATEGORY_LABEL: &str = "Missing/unknown";

/// Read a CSV of integer codes and validate every cell against the codebook.
///
/// The header must contain exactly the codebook's variable names in any
/// order. Columns with role [`Role::IdDrop`] are removed from the result;
/// remaining columns follow codebook order.
pub fn ingest_table(csv_path: impl AsRef<Path>, codebook: &Codebook) -> Result<CodedTable> {
    let path = csv_path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::DataFormat { path: path.to_path_buf(), message: e.to_string() })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::DataFormat { path: path.to_path_buf(), message: e.to_string() })?
        .clone();

    for h in headers.iter() {
        if codebook.variable(h).is_none() {
            return Err(Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("header names unknown variable {h}"),
            });
        }
    }
    // codebook order, with the CSV position of each retained variable
    let mut retained: Vec<(&VariableSpec, usize)> = Vec::new();
    for var in &codebook.variables {
        let csv_pos = headers
            .iter()
            .position(|h| h == var.name)
            .ok_or_else(|| Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("variable {} missing from header", var.name),
            })?;
        if var.role != Role::IdDrop {
            retained.push((var, csv_pos));
        }
    }

    let mut columns: Vec<Vec<i32>> = vec![Vec::new(); retained.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::DataFormat {
            path: path.to_path_buf(),
            message: format!("row {}: {e}", row_idx + 1),
        })?;
        for (col_out, &(var, csv_pos)) in retained.iter().enumerate() {
            let raw = record.get(csv_pos).ok_or_else(|| Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("row {}: missing field {}", row_idx + 1, var.name),
            })?;
            let code: i32 = raw.trim().parse().map_err(|_| Error::DataFormat {
                path: path.to_path_buf(),
                message: format!("row {}, column {}: cell {raw:?} is not an integer", row_idx + 1, var.name),
            })?;
            if !var.is_valid_code(code) {
                return Err(Error::UnknownCode { row: row_idx + 1, column: var.name.clone(), code });
            }
            columns[col_out].push(code);
        }
    }

    CodedTable::new(retained.into_iter().map(|(v, _)| v.clone()).collect(), columns)
}

/// Remove columns whose missing-code fraction is strictly greater than
/// `max_missing_ratio`. Returns the reduced table and the dropped names.
pub fn drop_sparse_columns(
    table: &CodedTable,
    max_missing_ratio: f64,
) -> Result<(CodedTable, Vec<String>)> {
    if !(0.0..=1.0).contains(&max_missing_ratio) {
        return Err(Error::InvalidArgument(format!(
            "max_missing_ratio {max_missing_ratio} outside [0, 1]"
        )));
    }
    if table.n_rows() == 0 {
        return Ok((table.clone(), Vec::new()));
    }
    let n = table.n_rows() as f64;
    let mut drop = Vec::new();
    let mut dropped_names = Vec::new();
    for (idx, var) in table.variables().iter().enumerate() {
        let missing = table.column(idx).iter().filter(|&&c| var.is_missing(c)).count();
        if missing as f64 / n > max_missing_ratio {
            drop.push(idx);
            dropped_names.push(var.name.clone());
        }
    }
    Ok((table.drop_columns(&drop), dropped_names))
}

/// Remap every missing code to a fresh per-column "Missing/unknown" category.
///
/// The returned table has no missing codes; columns that were entirely
/// missing are reported in the warning list since they carry no information.
pub fn fold_missing_as_category(table: &CodedTable) -> (CodedTable, Vec<String>) {
    let mut out = table.clone();
    let mut warnings = Vec::new();
    for idx in 0..table.n_cols() {
        let var = &table.variables()[idx];
        if var.missing_codes.is_empty() {
            continue;
        }
        let col = table.column(idx);
        let missing_count = col.iter().filter(|&&c| var.is_missing(c)).count();
        if missing_count == 0 {
            // no observed missing values: drop the now-unused missing codes
            let mut spec = var.clone();
            spec.missing_codes.clear();
            out = out.replace_column(idx, spec, col.to_vec());
            continue;
        }
        let fresh = var.max_category_code().map_or(0, |m| m + 1);
        let mut spec = var.clone();
        spec.categories.insert(fresh, MISSING_CATEGORY_LABEL.to_string());
        spec.missing_codes.clear();
        let data = col.iter().map(|&c| if var.is_missing(c) { fresh } else { c }).collect();
        if missing_count == table.n_rows() {
            warnings.push(format!(
                "column {} is entirely missing; folded to a single uninformative category",
                var.name
            ));
        }
        out = out.replace_column(idx, spec, data);
    }
    (out, warnings)
}

/// Partition rows into inpatient (codes 3-5) and outpatient (codes 6-8)
/// cohorts by the cohort-selector variable; codes 1-2 are excluded and
/// counted. The selector column itself is removed from both outputs.
pub fn split_cohorts(table: &CodedTable) -> Result<(CodedTable, CodedTable, usize)> {
    let (sel_idx, sel_var) = table
        .role_column(Role::CohortSelector)
        .ok_or_else(|| Error::MissingVariable("cohort-selector".into()))?;
    let sel_name = sel_var.name.clone();
    let col = table.column(sel_idx);

    let mut inpatient_rows = Vec::new();
    let mut outpatient_rows = Vec::new();
    let mut excluded = 0usize;
    for (row, &code) in col.iter().enumerate() {
        match code {
            3..=5 => inpatient_rows.push(row),
            6..=8 => outpatient_rows.push(row),
            1..=2 => excluded += 1,
            _ => {
                return Err(Error::CohortCodeOutOfRange { row: row + 1, column: sel_name, code });
            }
        }
    }

    let drop = [sel_idx];
    let inpatient = table.select_rows(&inpatient_rows).drop_columns(&drop);
    let outpatient = table.select_rows(&outpatient_rows).drop_columns(&drop);
    Ok((inpatient, outpatient, excluded))
}

/// Derive the binary long-stay label from the target-source variable.
///
/// A banded stay code counts as "longer than the threshold" only when the
/// whole band does, i.e. when its minimum day count exceeds the cohort
/// threshold (30 days inpatient, 90 outpatient). The target column is
/// removed from the feature table.
pub fn build_target(
    table: &CodedTable,
    cohort: Cohort,
    stay_bands: &BTreeMap<i32, DayBand>,
) -> Result<LabeledTable> {
    let (target_idx, _) = table
        .role_column(Role::TargetSource)
        .ok_or_else(|| Error::MissingVariable("target-source".into()))?;
    let threshold = cohort.long_stay_threshold_days();
    let col = table.column(target_idx);
    let mut labels = Vec::with_capacity(col.len());
    for (row, &code) in col.iter().enumerate() {
        let &(band_min, _) = stay_bands
            .get(&code)
            .ok_or(Error::UnmappedStayCode { row: row + 1, code })?;
        labels.push(u8::from(band_min > threshold));
    }
    let features = table.drop_columns(&[target_idx]);
    LabeledTable::new(features, labels, cohort)
}
