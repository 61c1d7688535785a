//! Indicator-column view of a coded table.
//!
//! All learners consume the same representation: per (variable, category)
//! a binary column that is 1 when the row's code equals the category. The
//! matrix keeps the dense per-variable codes and materializes indicator
//! semantics on demand, which lets tree learners scan one variable pass
//! per node instead of one pass per indicator column.

use serde::{Deserialize, Serialize};

use crate::codebook::Role;
use crate::error::{Error, Result};
use crate::table::CodedTable;

/// One source variable's block of indicator columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarColumns {
    pub name: String,
    /// Category codes in ascending order; one indicator column per code.
    pub codes: Vec<i32>,
    /// Index of this variable's first indicator column.
    pub offset: usize,
}

/// The provenance map: which (variable, category) each indicator column is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixSchema {
    pub vars: Vec<VarColumns>,
    pub n_columns: usize,
}

impl MatrixSchema {
    /// (variable index, category code) of an indicator column.
    pub fn locate(&self, column: usize) -> (usize, i32) {
        let var_idx = match self.vars.binary_search_by(|v| v.offset.cmp(&column)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let var = &self.vars[var_idx];
        (var_idx, var.codes[column - var.offset])
    }

    pub fn column_name(&self, column: usize) -> String {
        let (var_idx, code) = self.locate(column);
        format!("{}=={}", self.vars[var_idx].name, code)
    }

    pub fn var_names(&self) -> Vec<String> {
        self.vars.iter().map(|v| v.name.clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EncodedMatrix {
    schema: MatrixSchema,
    /// Dense codes, one vector per schema variable.
    codes: Vec<Vec<i32>>,
    n_rows: usize,
}

impl EncodedMatrix {
    /// Build from a table using its modeling variables (roles feature and
    /// protected), optionally restricted to `selected` names.
    ///
    /// Indicator columns come from each variable's declared categories; for
    /// range-coded variables the observed codes are enumerated instead.
    pub fn from_table(table: &CodedTable, selected: Option<&[String]>) -> Result<EncodedMatrix> {
        if let Some(names) = selected {
            for n in names {
                if table.column_index(n).is_none() {
                    return Err(Error::MissingVariable(n.clone()));
                }
            }
        }
        let mut vars = Vec::new();
        let mut codes = Vec::new();
        let mut offset = 0usize;
        for (idx, var) in table.variables().iter().enumerate() {
            if !matches!(var.role, Role::Feature | Role::Protected) {
                continue;
            }
            if let Some(names) = selected {
                if !names.iter().any(|n| *n == var.name) {
                    continue;
                }
            }
            let col = table.column(idx);
            let mut cats: Vec<i32> = var.categories.keys().copied().collect();
            if !var.code_ranges.is_empty() {
                let mut observed: Vec<i32> =
                    col.iter().copied().filter(|c| !cats.contains(c)).collect();
                observed.sort_unstable();
                observed.dedup();
                cats.extend(observed);
                cats.sort_unstable();
            }
            vars.push(VarColumns { name: var.name.clone(), codes: cats.clone(), offset });
            offset += cats.len();
            codes.push(col.to_vec());
        }
        Ok(EncodedMatrix {
            schema: MatrixSchema { vars, n_columns: offset },
            codes,
            n_rows: table.n_rows(),
        })
    }

    /// Re-encode another table against an existing schema, for scoring new
    /// rows with a fitted model. The table must contain every schema
    /// variable; codes outside the schema simply activate no indicator.
    pub fn from_table_with_schema(table: &CodedTable, schema: &MatrixSchema) -> Result<EncodedMatrix> {
        let mut codes = Vec::with_capacity(schema.vars.len());
        for var in &schema.vars {
            codes.push(table.column_by_name(&var.name)?.to_vec());
        }
        Ok(EncodedMatrix { schema: schema.clone(), codes, n_rows: table.n_rows() })
    }

    pub fn schema(&self) -> &MatrixSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.schema.n_columns
    }

    pub fn n_vars(&self) -> usize {
        self.schema.vars.len()
    }

    pub fn var_codes(&self, var_idx: usize) -> &[i32] {
        &self.codes[var_idx]
    }

    /// Indicator value of column `column` at `row`.
    pub fn indicator(&self, column: usize, row: usize) -> bool {
        let (var_idx, code) = self.schema.locate(column);
        self.codes[var_idx][row] == code
    }

    pub fn select_rows(&self, rows: &[usize]) -> EncodedMatrix {
        let codes = self
            .codes
            .iter()
            .map(|col| rows.iter().map(|&r| col[r]).collect())
            .collect();
        EncodedMatrix { schema: self.schema.clone(), codes, n_rows: rows.len() }
    }

    /// Sparse view: for each indicator column, the rows where it is 1.
    pub fn indicator_row_lists(&self) -> Vec<Vec<u32>> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); self.schema.n_columns];
        for (var_idx, var) in self.schema.vars.iter().enumerate() {
            let col = &self.codes[var_idx];
            for (row, &code) in col.iter().enumerate() {
                if let Ok(pos) = var.codes.binary_search(&code) {
                    lists[var.offset + pos].push(row as u32);
                }
            }
        }
        lists
    }

    pub fn check_schema(&self, expected: &MatrixSchema) -> Result<()> {
        if &self.schema != expected {
            let got: Vec<_> = self.schema.var_names();
            let want: Vec<_> = expected.var_names();
            return Err(Error::ColumnMismatch(format!(
                "model trained on {want:?}, data encodes {got:?}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::VariableSpec;

    fn table() -> CodedTable {
        let vars = vec![
            VariableSpec {
                name: "A".into(),
                display: None,
                role: Role::Feature,
                categories: [(1, "a1".into()), (2, "a2".into()), (5, "a5".into())].into_iter().collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            },
            VariableSpec {
                name: "B".into(),
                display: None,
                role: Role::Protected,
                categories: [(0, "b0".into()), (1, "b1".into())].into_iter().collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            },
        ];
        CodedTable::new(vars, vec![vec![1, 2, 5, 1], vec![0, 1, 1, 0]]).unwrap()
    }

    #[test]
    fn one_indicator_active_per_variable() {
        let m = EncodedMatrix::from_table(&table(), None).unwrap();
        assert_eq!(m.n_columns(), 5);
        for row in 0..m.n_rows() {
            for var in &m.schema().vars {
                let active = (var.offset..var.offset + var.codes.len())
                    .filter(|&c| m.indicator(c, row))
                    .count();
                assert_eq!(active, 1);
            }
        }
    }

    #[test]
    fn locate_round_trips() {
        let m = EncodedMatrix::from_table(&table(), None).unwrap();
        assert_eq!(m.schema().locate(0), (0, 1));
        assert_eq!(m.schema().locate(2), (0, 5));
        assert_eq!(m.schema().locate(3), (1, 0));
        assert_eq!(m.schema().locate(4), (1, 1));
        assert_eq!(m.schema().column_name(2), "A==5");
    }

    #[test]
    fn selection_restricts_variables() {
        let m = EncodedMatrix::from_table(&table(), Some(&["B".to_string()])).unwrap();
        assert_eq!(m.n_vars(), 1);
        assert_eq!(m.n_columns(), 2);
    }

    #[test]
    fn row_lists_match_indicators() {
        let m = EncodedMatrix::from_table(&table(), None).unwrap();
        let lists = m.indicator_row_lists();
        for (col, rows) in lists.iter().enumerate() {
            for row in 0..m.n_rows() {
                assert_eq!(rows.contains(&(row as u32)), m.indicator(col, row));
            }
        }
    }

    #[test]
    fn schema_mismatch_detected() {
        let m_full = EncodedMatrix::from_table(&table(), None).unwrap();
        let m_b = EncodedMatrix::from_table(&table(), Some(&["B".to_string()])).unwrap();
        assert!(m_b.check_schema(m_full.schema()).is_err());
        assert!(m_full.check_schema(m_full.schema()).is_ok());
    }
}
