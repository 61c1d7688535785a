//! Variable dictionary for coded categorical tables.
//!
//! A codebook lists every variable in a data file together with its legal
//! integer category codes, its missing-value codes, and the role it plays in
//! the pipeline. The on-disk format is JSON; see the bundled
//! `data/teds_codebook.json` for a full example.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a variable is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Model input.
    Feature,
    /// Model input that is also audited for fairness.
    Protected,
    /// Source of the binary stay-length label.
    TargetSource,
    /// Service-setting variable used to split inpatient/outpatient cohorts.
    CohortSelector,
    /// Record-specific identifier, removed at ingestion.
    IdDrop,
}

/// Inclusive day range a stay-duration code stands for.
pub type DayBand = (u32, u32);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    /// Human-readable name used in reports; falls back to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
    pub role: Role,
    /// Category code -> label.
    #[serde(default)]
    pub categories: BTreeMap<i32, String>,
    /// Compact alternative to listing every category, for variables with
    /// large code domains (state or area identifiers). Inclusive ranges.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub code_ranges: Vec<(i32, i32)>,
    #[serde(default)]
    pub missing_codes: BTreeSet<i32>,
    /// For the target-source variable: code -> (min days, max days).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub day_bands: Option<BTreeMap<i32, DayBand>>,
}

impl VariableSpec {
    pub fn display_name(&self) -> &str {
        self.display.as_deref().unwrap_or(&self.name)
    }

    pub fn is_category(&self, code: i32) -> bool {
        self.categories.contains_key(&code)
            || self.code_ranges.iter().any(|&(lo, hi)| code >= lo && code <= hi)
    }

    pub fn is_missing(&self, code: i32) -> bool {
        self.missing_codes.contains(&code)
    }

    pub fn is_valid_code(&self, code: i32) -> bool {
        self.is_category(code) || self.is_missing(code)
    }

    /// Label for a category code; range-backed codes get a synthesized label.
    pub fn category_label(&self, code: i32) -> String {
        match self.categories.get(&code) {
            Some(label) => label.clone(),
            None => format!("{} {}", self.name, code),
        }
    }

    /// Largest declared category code, considering ranges.
    pub fn max_category_code(&self) -> Option<i32> {
        let from_map = self.categories.keys().next_back().copied();
        let from_ranges = self.code_ranges.iter().map(|&(_, hi)| hi).max();
        match (from_map, from_ranges) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::CodebookInvalid("empty variable name".into()));
        }
        if self.categories.is_empty() && self.code_ranges.is_empty() {
            return Err(Error::CodebookInvalid(format!(
                "variable {} declares no category codes",
                self.name
            )));
        }
        for (&code, label) in &self.categories {
            if code < 0 {
                return Err(Error::CodebookInvalid(format!(
                    "variable {}: category code {} is negative",
                    self.name, code
                )));
            }
            if label.is_empty() {
                return Err(Error::CodebookInvalid(format!(
                    "variable {}: category {} has an empty label",
                    self.name, code
                )));
            }
        }
        for &(lo, hi) in &self.code_ranges {
            if lo < 0 || lo > hi {
                return Err(Error::CodebookInvalid(format!(
                    "variable {}: invalid code range {}..={}",
                    self.name, lo, hi
                )));
            }
        }
        for &m in &self.missing_codes {
            if self.is_category(m) {
                return Err(Error::CodebookInvalid(format!(
                    "variable {}: code {} is declared both category and missing",
                    self.name, m
                )));
            }
        }
        if let Some(bands) = &self.day_bands {
            for (&code, &(lo, hi)) in bands {
                if !self.is_category(code) {
                    return Err(Error::CodebookInvalid(format!(
                        "variable {}: day band declared for unknown code {}",
                        self.name, code
                    )));
                }
                if lo > hi {
                    return Err(Error::CodebookInvalid(format!(
                        "variable {}: day band for code {} has min {} > max {}",
                        self.name, code, lo, hi
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Codebook {
    pub version: String,
    pub variables: Vec<VariableSpec>,
}

impl Codebook {
    pub fn new(version: impl Into<String>, variables: Vec<VariableSpec>) -> Result<Self> {
        let book = Codebook { version: version.into(), variables };
        book.validate()?;
        Ok(book)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (i, var) in self.variables.iter().enumerate() {
            var.validate()?;
            if let Some(prev) = seen.insert(var.name.clone(), i) {
                return Err(Error::CodebookInvalid(format!(
                    "duplicate variable name {} (positions {} and {})",
                    var.name, prev, i
                )));
            }
        }
        for (role, label) in [(Role::CohortSelector, "cohort-selector"), (Role::TargetSource, "target-source")] {
            let n = self.variables.iter().filter(|v| v.role == role).count();
            if n != 1 {
                return Err(Error::CodebookInvalid(format!(
                    "expected exactly one {label} variable, found {n}"
                )));
            }
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn role_variable(&self, role: Role) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.role == role)
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }
}

/// Load and validate a codebook file.
pub fn load_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let book: Codebook = serde_json::from_str(&text).map_err(|e| Error::CodebookParse {
        path: path.to_path_buf(),
        message: format!("line {}, column {}: {}", e.line(), e.column(), e),
    })?;
    book.validate()?;
    Ok(book)
}
