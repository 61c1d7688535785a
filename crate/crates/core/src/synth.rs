//! Seeded generator of treatment-episode-shaped categorical data with
//! controllable, known bias. This is the verification backbone: every
//! fairness metric is exercised against data whose disparities are known
//! by construction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, Role, VariableSpec};
use crate::error::{Error, Result};
use crate::table::{CodedTable, Cohort, LabeledTable};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Number of categories, at least 2.
    pub cardinality: u32,
    /// Probability a cell reveals the row's label.
    pub label_signal: f64,
    /// Probability a cell reveals the protected group instead.
    pub group_correlation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_rows: usize,
    /// Protected-category probabilities; codes are 0..len.
    pub group_probs: Vec<f64>,
    /// Positive base rate per protected category.
    pub base_rates: Vec<f64>,
    pub features: Vec<FeatureSpec>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::InvalidArgument("n_rows must be at least 1".into()));
        }
        if self.group_probs.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 protected categories".into()));
        }
        let total: f64 = self.group_probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.group_probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("group probabilities must sum to 1".into()));
        }
        if self.base_rates.len() != self.group_probs.len() {
            return Err(Error::InvalidArgument("one base rate per protected category".into()));
        }
        if self.base_rates.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
            return Err(Error::InvalidArgument("base rates must be in [0, 1]".into()));
        }
        for (i, f) in self.features.iter().enumerate() {
            if f.cardinality < 2 {
                return Err(Error::InvalidArgument(format!("feature {i}: cardinality < 2")));
            }
            if f.label_signal < 0.0
                || f.group_correlation < 0.0
                || f.label_signal + f.group_correlation > 1.0
            {
                return Err(Error::InvalidArgument(format!(
                    "feature {i}: label_signal + group_correlation must stay within [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

/// The generator's intent, recorded next to the sample for assertions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub group_probs: Vec<f64>,
    pub intended_positive_rates: Vec<f64>,
    pub seed: u64,
}

pub const GROUP_VARIABLE: &str = "GROUP";

fn group_spec(n_groups: usize) -> VariableSpec {
    VariableSpec {
        name: GROUP_VARIABLE.into(),
        display: Some("Synthetic protected group".into()),
        role: Role::Protected,
        categories: (0..n_groups as i32).map(|c| (c, format!("Group {c}"))).collect(),
        code_ranges: vec![],
        missing_codes: Default::default(),
        day_bands: None,
    }
}

fn feature_spec(idx: usize, cardinality: u32) -> VariableSpec {
    VariableSpec {
        name: format!("F{:02}", idx + 1),
        display: None,
        role: Role::Feature,
        categories: (0..cardinality as i32).map(|c| (c, format!("Level {c}"))).collect(),
        code_ranges: vec![],
        missing_codes: Default::default(),
        day_bands: None,
    }
}

/// Sample a labeled table: group, then label from the group's base rate,
/// then features tied to label or group per their specs.
pub fn generate(config: &SynthConfig) -> Result<(LabeledTable, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_rows;
    let k = config.group_probs.len();

    let mut group_col = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut feature_cols: Vec<Vec<i32>> =
        config.features.iter().map(|_| Vec::with_capacity(n)).collect();

    for _ in 0..n {
        let mut u: f64 = rng.gen();
        let mut group = k - 1;
        for (g, &p) in config.group_probs.iter().enumerate() {
            if u < p {
                group = g;
                break;
            }
            u -= p;
        }
        let y = u8::from(rng.gen_bool(config.base_rates[group]));
        group_col.push(group as i32);
        labels.push(y);

        for (f, spec) in config.features.iter().enumerate() {
            let draw: f64 = rng.gen();
            let value = if draw < spec.label_signal {
                y as i32
            } else if draw < spec.label_signal + spec.group_correlation {
                group as i32 % spec.cardinality as i32
            } else {
                rng.gen_range(0..spec.cardinality as i32)
            };
            feature_cols[f].push(value);
        }
    }

    let mut vars = vec![group_spec(k)];
    let mut columns = vec![group_col];
    for (f, spec) in config.features.iter().enumerate() {
        vars.push(feature_spec(f, spec.cardinality));
        columns.push(std::mem::take(&mut feature_cols[f]));
    }
    let table = CodedTable::new(vars, columns)?;
    let labeled = LabeledTable::new(table, labels, Cohort::Inpatient)?;
    let truth = GroundTruth {
        group_probs: config.group_probs.clone(),
        intended_positive_rates: config.base_rates.clone(),
        seed: config.seed,
    };
    Ok((labeled, truth))
}

/// Stay-band dictionary used by emitted synthetic files: codes 1-3 are
/// 30 days or shorter, 4-6 strictly longer.
fn synthetic_stay_bands() -> BTreeMap<i32, (u32, u32)> {
    [
        (1, (1, 7)),
        (2, (8, 14)),
        (3, (15, 30)),
        (4, (31, 45)),
        (5, (46, 90)),
        (6, (91, 365)),
    ]
    .into_iter()
    .collect()
}

/// Codebook for emitted synthetic files, matching what `ingest` consumes.
pub fn synthetic_codebook(config: &SynthConfig) -> Result<Codebook> {
    let mut vars = vec![
        VariableSpec {
            name: "SERVICE".into(),
            display: Some("Service setting".into()),
            role: Role::CohortSelector,
            categories: (1..=8)
                .map(|c| (c, format!("Service setting {c}")))
                .collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        },
        VariableSpec {
            name: "STAY_BAND".into(),
            display: Some("Length of stay band".into()),
            role: Role::TargetSource,
            categories: synthetic_stay_bands()
                .iter()
                .map(|(&c, &(lo, hi))| (c, format!("{lo}-{hi} days")))
                .collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: Some(synthetic_stay_bands()),
        },
        group_spec(config.group_probs.len()),
    ];
    for (f, spec) in config.features.iter().enumerate() {
        vars.push(feature_spec(f, spec.cardinality));
    }
    Codebook::new("synthetic", vars)
}

/// Write a CSV plus codebook that round-trip through the full ingestion
/// path: the label is encoded as a stay band and every row carries an
/// inpatient service code.
pub fn emit_dataset(config: &SynthConfig, data_path: &Path, codebook_path: &Path) -> Result<GroundTruth> {
    let (labeled, truth) = generate(config)?;
    let book = synthetic_codebook(config)?;

    let text = serde_json::to_string_pretty(&book)
        .map_err(|e| Error::Config(format!("serializing codebook: {e}")))?;
    std::fs::write(codebook_path, text).map_err(|e| Error::io(codebook_path, e))?;

    let mut writer = csv::Writer::from_path(data_path)
        .map_err(|e| Error::DataFormat { path: data_path.to_path_buf(), message: e.to_string() })?;
    let mut header = vec!["SERVICE".to_string(), "STAY_BAND".to_string()];
    header.extend(labeled.table.variable_names());
    writer
        .write_record(&header)
        .map_err(|e| Error::DataFormat { path: data_path.to_path_buf(), message: e.to_string() })?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xC0DE_BEEF);
    for row in 0..labeled.n_rows() {
        let band = if labeled.labels[row] == 1 {
            rng.gen_range(4..=6)
        } else {
            rng.gen_range(1..=3)
        };
        let mut record = vec!["4".to_string(), band.to_string()];
        for c in 0..labeled.table.n_cols() {
            record.push(labeled.table.column(c)[row].to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::DataFormat { path: data_path.to_path_buf(), message: e.to_string() })?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(data_path, e))?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_target, ingest_table, split_cohorts};

    fn config(n: usize, base_rates: Vec<f64>, seed: u64) -> SynthConfig {
        SynthConfig {
            n_rows: n,
            group_probs: vec![0.5, 0.5],
            base_rates,
            features: vec![
                FeatureSpec { cardinality: 2, label_signal: 0.8, group_correlation: 0.0 },
                FeatureSpec { cardinality: 4, label_signal: 0.0, group_correlation: 0.3 },
            ],
            seed,
        }
    }

    fn empirical_group_rates(data: &LabeledTable) -> Vec<f64> {
        let group = data.table.column_by_name(GROUP_VARIABLE).unwrap();
        (0..2)
            .map(|g| {
                let rows: Vec<usize> = (0..data.n_rows()).filter(|&i| group[i] == g).collect();
                let pos = rows.iter().filter(|&&i| data.labels[i] == 1).count();
                pos as f64 / rows.len() as f64
            })
            .collect()
    }

    #[test]
    fn equal_base_rates_stay_within_binomial_bounds() {
        let (data, _) = generate(&config(20_000, vec![0.4, 0.4], 7)).unwrap();
        let rates = empirical_group_rates(&data);
        // 3 sigma for n ~ 10k at p = 0.4
        let bound = 3.0 * (0.4f64 * 0.6 / 10_000.0).sqrt();
        for r in rates {
            assert!((r - 0.4).abs() < bound, "rate {r} outside {bound}");
        }
    }

    #[test]
    fn injected_gap_is_recovered_by_counting() {
        let (data, truth) = generate(&config(50_000, vec![0.7, 0.3], 11)).unwrap();
        let rates = empirical_group_rates(&data);
        assert!((rates[0] - rates[1] - 0.4).abs() < 0.02);
        assert_eq!(truth.intended_positive_rates, vec![0.7, 0.3]);
    }

    #[test]
    fn same_seed_same_table() {
        let (a, _) = generate(&config(500, vec![0.6, 0.4], 3)).unwrap();
        let (b, _) = generate(&config(500, vec![0.6, 0.4], 3)).unwrap();
        assert_eq!(a.labels, b.labels);
        for c in 0..a.table.n_cols() {
            assert_eq!(a.table.column(c), b.table.column(c));
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = config(10, vec![0.5, 0.5], 0);
        c.group_probs = vec![0.5, 0.6];
        assert!(generate(&c).is_err());
        let mut c = config(10, vec![0.5, 1.5], 0);
        c.base_rates = vec![0.5, 1.5];
        assert!(generate(&c).is_err());
        let mut c = config(10, vec![0.5, 0.5], 0);
        c.features[0].label_signal = 0.9;
        c.features[0].group_correlation = 0.2;
        assert!(generate(&c).is_err());
    }

    #[test]
    fn emitted_files_round_trip_through_ingestion() {
        let dir = tempfile::tempdir().unwrap();
        let data_path = dir.path().join("synth.csv");
        let book_path = dir.path().join("codebook.json");
        let cfg = config(400, vec![0.6, 0.3], 21);
        emit_dataset(&cfg, &data_path, &book_path).unwrap();

        let book = crate::codebook::load_codebook(&book_path).unwrap();
        let table = ingest_table(&data_path, &book).unwrap();
        assert_eq!(table.n_rows(), 400);
        let (inpatient, outpatient, excluded) = split_cohorts(&table).unwrap();
        assert_eq!(inpatient.n_rows(), 400);
        assert_eq!(outpatient.n_rows(), 0);
        assert_eq!(excluded, 0);

        let bands = book
            .role_variable(Role::TargetSource)
            .unwrap()
            .day_bands
            .clone()
            .unwrap();
        let labeled = build_target(&inpatient, Cohort::Inpatient, &bands).unwrap();
        // stay bands encode the generated labels exactly
        let (direct, _) = generate(&cfg).unwrap();
        assert_eq!(labeled.labels, direct.labels);
    }
}
