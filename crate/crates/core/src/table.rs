//! Dense integer-coded tables.

use serde::{Deserialize, Serialize};

use crate::codebook::{Role, VariableSpec};
use crate::error::{Error, Result};

/// A validated table of integer category codes, column-major.
///
/// Each column carries its own [`VariableSpec`]; column order is the
/// retained-variable order of the codebook the table was ingested with.
/// Tables are immutable: every transformation returns a new table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodedTable {
    vars: Vec<VariableSpec>,
    columns: Vec<Vec<i32>>,
    n_rows: usize,
}

impl CodedTable {
    pub fn new(vars: Vec<VariableSpec>, columns: Vec<Vec<i32>>) -> Result<Self> {
        if vars.len() != columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} variable specs but {} columns",
                vars.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (var, col) in vars.iter().zip(&columns) {
            if col.len() != n_rows {
                return Err(Error::InvalidArgument(format!(
                    "column {} has {} rows, expected {}",
                    var.name,
                    col.len(),
                    n_rows
                )));
            }
        }
        Ok(CodedTable { vars, columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.vars.len()
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.vars
    }

    pub fn variable_names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn column(&self, idx: usize) -> &[i32] {
        &self.columns[idx]
    }

    pub fn column_by_name(&self, name: &str) -> Result<&[i32]> {
        self.column_index(name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn variable(&self, name: &str) -> Result<&VariableSpec> {
        self.column_index(name)
            .map(|i| &self.vars[i])
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn role_column(&self, role: Role) -> Option<(usize, &VariableSpec)> {
        self.vars.iter().enumerate().find(|(_, v)| v.role == role).map(|(i, v)| (i, v))
    }

    /// New table keeping only the rows whose index appears in `rows`.
    pub fn select_rows(&self, rows: &[usize]) -> CodedTable {
        let columns = self
            .columns
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        CodedTable { vars: self.vars.clone(), columns, n_rows: rows.len() }
    }

    /// New table dropping the columns at `drop` (indices into the current order).
    pub fn drop_columns(&self, drop: &[usize]) -> CodedTable {
        let vars = self
            .vars
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, v)| v.clone())
            .collect();
        let columns = self
            .columns
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, c)| c.clone())
            .collect();
        CodedTable { vars, columns, n_rows: self.n_rows }
    }

    /// New table keeping only the named columns, in current column order.
    pub fn keep_variables(&self, names: &[String]) -> Result<CodedTable> {
        for n in names {
            if self.column_index(n).is_none() {
                return Err(Error::MissingVariable(n.clone()));
            }
        }
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&i| names.iter().any(|n| *n == self.vars[i].name))
            .collect();
        let vars = keep.iter().map(|&i| self.vars[i].clone()).collect();
        let columns = keep.iter().map(|&i| self.columns[i].clone()).collect();
        Ok(CodedTable { vars, columns, n_rows: self.n_rows })
    }

    /// Append the rows of `other`; schemas must match exactly.
    pub fn concat(&self, other: &CodedTable) -> Result<CodedTable> {
        if self.variable_names() != other.variable_names() {
            return Err(Error::InvalidArgument("cannot concatenate tables with different schemas".into()));
        }
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| {
                let mut c = a.clone();
                c.extend_from_slice(b);
                c
            })
            .collect();
        Ok(CodedTable { vars: self.vars.clone(), columns, n_rows: self.n_rows + other.n_rows })
    }

    pub(crate) fn replace_column(&self, idx: usize, var: VariableSpec, data: Vec<i32>) -> CodedTable {
        let mut vars = self.vars.clone();
        let mut columns = self.columns.clone();
        vars[idx] = var;
        columns[idx] = data;
        CodedTable { vars, columns, n_rows: self.n_rows }
    }
}

/// Which treatment setting a table belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cohort {
    Inpatient,
    Outpatient,
}

impl Cohort {
    /// Stay-length threshold in days; a stay strictly longer is a positive label.
    pub fn long_stay_threshold_days(self) -> u32 {
        match self {
            Cohort::Inpatient => 30,
            Cohort::Outpatient => 90,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Inpatient => "inpatient",
            Cohort::Outpatient => "outpatient",
        }
    }
}

impl std::fmt::Display for Cohort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A coded table plus its binary long-stay label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledTable {
    pub table: CodedTable,
    /// 1 = long-term stay, 0 = short-term.
    pub labels: Vec<u8>,
    pub cohort: Cohort,
}

impl LabeledTable {
    pub fn new(table: CodedTable, labels: Vec<u8>, cohort: Cohort) -> Result<Self> {
        if labels.len() != table.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                labels.len(),
                table.n_rows()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::InvalidArgument(format!("label {bad} is not binary")));
        }
        Ok(LabeledTable { table, labels, cohort })
    }

    pub fn n_rows(&self) -> usize {
        self.table.n_rows()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn select_rows(&self, rows: &[usize]) -> LabeledTable {
        LabeledTable {
            table: self.table.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            cohort: self.cohort,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Role;

    fn var(name: &str, codes: &[i32]) -> VariableSpec {
        VariableSpec {
            name: name.into(),
            display: None,
            role: Role::Feature,
            categories: codes.iter().map(|&c| (c, format!("c{c}"))).collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        }
    }

    #[test]
    fn select_rows_preserves_order() {
        let t = CodedTable::new(vec![var("A", &[1, 2, 3])], vec![vec![1, 2, 3, 1]]).unwrap();
        let s = t.select_rows(&[3, 0]);
        assert_eq!(s.column(0), &[1, 1]);
        assert_eq!(s.n_rows(), 2);
    }

    #[test]
    fn ragged_columns_rejected() {
        let err = CodedTable::new(vec![var("A", &[1]), var("B", &[1])], vec![vec![1, 1], vec![1]]);
        assert!(err.is_err());
    }

    #[test]
    fn labels_must_match_rows() {
        let t = CodedTable::new(vec![var("A", &[1])], vec![vec![1, 1]]).unwrap();
        assert!(LabeledTable::new(t, vec![0], Cohort::Inpatient).is_err());
    }
}
