//! End-to-end orchestration: ingest, label, split, oversample, select,
//! tune, train, evaluate, audit, and optionally mitigate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codebook::{load_codebook, Role};
use crate::error::{Error, Result};
use crate::fairness::{
    boxplot_data, group_level_audit, subgroup_audit, BoxplotRow, GroupAuditRow, SubgroupRow,
};
use crate::feature_select::{select_features, SelectionResult, SelectorConfig};
use crate::ingest::{
    build_target, drop_sparse_columns, fold_missing_as_category, ingest_table, split_cohorts,
    DEFAULT_MAX_MISSING_RATIO,
};
use crate::learners::{
    tune, BoostParams, EncodedMatrix, ForestParams, LearnerKind, LearnerParams, LinearParams,
    Metric, Model, Prediction, TreeParams, TuneResult,
};
use crate::metrics::{classification_report, confusion, ClassificationReport};
use crate::mitigate::{
    apply_thresholds, fit_group_thresholds, reweigh, CellWeight, FairnessCriterion, ThresholdPolicy,
};
use crate::sampling::{smote_nominal, stratified_kfold, stratified_split, SplitIndices};
use crate::table::{Cohort, LabeledTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohortChoice {
    Inpatient,
    Outpatient,
    Both,
}

impl CohortChoice {
    pub fn includes(self, cohort: Cohort) -> bool {
        matches!(
            (self, cohort),
            (CohortChoice::Both, _)
                | (CohortChoice::Inpatient, Cohort::Inpatient)
                | (CohortChoice::Outpatient, Cohort::Outpatient)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScope {
    /// Selection runs separately inside each cohort (default).
    PerCohort,
    /// One selection over both cohorts' training rows.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MitigationChoice {
    None,
    Reweigh,
    Thresholds,
}

/// One learner plus the grid it is tuned over.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: LearnerKind,
    pub grid: Vec<LearnerParams>,
}

fn default_model_specs() -> Vec<ModelSpec> {
    let tree_grid = [4usize, 6, 8, 12]
        .iter()
        .map(|&d| LearnerParams::Tree(TreeParams { max_depth: d, ..Default::default() }))
        .collect();
    let forest_grid = [100usize, 300]
        .iter()
        .map(|&n| LearnerParams::Forest(ForestParams { n_trees: n, ..Default::default() }))
        .collect();
    let mut boost_grid = Vec::new();
    for &rounds in &[100usize, 300] {
        for &eta in &[0.1, 0.3] {
            boost_grid.push(LearnerParams::Boosted(BoostParams { rounds, eta, ..Default::default() }));
        }
    }
    let linear_grid = [0.1, 0.0316, 0.01, 0.00316, 0.001]
        .iter()
        .map(|&l| LearnerParams::Linear(LinearParams { lambda1: l, ..Default::default() }))
        .collect();
    vec![
        ModelSpec { kind: LearnerKind::DecisionTree, grid: tree_grid },
        ModelSpec { kind: LearnerKind::RandomForest, grid: forest_grid },
        ModelSpec { kind: LearnerKind::GradientBoosting, grid: boost_grid },
        ModelSpec { kind: LearnerKind::L1Logistic, grid: linear_grid },
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub choice: MitigationChoice,
    /// Protected variable the mitigation conditions on.
    pub attribute: Option<String>,
    pub criterion: FairnessCriterion,
    pub epsilon: f64,
    /// Fraction of the training rows carved off to fit thresholds.
    pub validation_fraction: f64,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            choice: MitigationChoice::None,
            attribute: None,
            criterion: FairnessCriterion::DemographicParity,
            epsilon: 0.05,
            validation_fraction: 0.2,
        }
    }
}

/// Full pipeline configuration. Seeds are explicit: nothing in the run
/// reads system entropy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: PathBuf,
    pub codebook: PathBuf,
    pub seed: u64,
    #[serde(default = "default_cohorts")]
    pub cohorts: CohortChoice,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_max_missing")]
    pub max_missing_ratio: f64,
    #[serde(default = "default_true")]
    pub smote: bool,
    #[serde(default = "default_smote_k")]
    pub smote_k: usize,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub selector: SelectorConfig,
    #[serde(default = "default_selection_scope")]
    pub selection_scope: SelectionScope,
    #[serde(default = "default_model_specs")]
    pub models: Vec<ModelSpec>,
    /// How many of the best models are audited for fairness.
    #[serde(default = "default_audit_models")]
    pub audit_models: usize,
    #[serde(default = "default_fairness_threshold")]
    pub fairness_threshold: f64,
    /// Subgroups smaller than this are left out of subgroup tables.
    #[serde(default)]
    pub min_count: Option<u64>,
    #[serde(default)]
    pub mitigation: MitigationConfig,
}

fn default_cohorts() -> CohortChoice {
    CohortChoice::Both
}
fn default_train_fraction() -> f64 {
    0.7
}
fn default_max_missing() -> f64 {
    DEFAULT_MAX_MISSING_RATIO
}
fn default_true() -> bool {
    true
}
fn default_smote_k() -> usize {
    5
}
fn default_cv_folds() -> usize {
    10
}
fn default_selection_scope() -> SelectionScope {
    SelectionScope::PerCohort
}
fn default_audit_models() -> usize {
    2
}
fn default_fairness_threshold() -> f64 {
    0.80
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must be in (0, 1)".into()));
        }
        if !(self.fairness_threshold > 0.0 && self.fairness_threshold <= 1.0) {
            return Err(Error::Config("fairness_threshold must be in (0, 1]".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be at least 2".into()));
        }
        if self.audit_models == 0 {
            return Err(Error::Config("audit_models must be at least 1".into()));
        }
        if self.models.is_empty() {
            return Err(Error::Config("at least one model spec is required".into()));
        }
        for spec in &self.models {
            if spec.grid.is_empty() {
                return Err(Error::Config(format!("{}: empty grid", spec.kind)));
            }
            if spec.grid.iter().any(|p| p.kind() != spec.kind) {
                return Err(Error::Config(format!("{}: grid mixes learner kinds", spec.kind)));
            }
        }
        if self.mitigation.choice != MitigationChoice::None
            && self.mitigation.attribute.is_none()
        {
            return Err(Error::Config("mitigation requires an attribute".into()));
        }
        if !(self.mitigation.validation_fraction > 0.0 && self.mitigation.validation_fraction < 1.0)
        {
            return Err(Error::Config("validation_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }
}

/// What ingestion and preparation did, for the report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepSummary {
    pub rows_read: usize,
    pub variables_after_ingest: usize,
    pub dropped_sparse: Vec<String>,
    pub excluded_rows: usize,
    pub inpatient_rows: usize,
    pub outpatient_rows: usize,
    pub warnings: Vec<String>,
}

/// Ingest, clean, split cohorts, and attach labels.
pub fn prepare(config: &RunConfig) -> Result<(Vec<LabeledTable>, PrepSummary)> {
    let codebook = load_codebook(&config.codebook)?;
    let raw = ingest_table(&config.data, &codebook)?;
    let rows_read = raw.n_rows();

    let (dense, dropped_sparse) = drop_sparse_columns(&raw, config.max_missing_ratio)?;
    let (folded, warnings) = fold_missing_as_category(&dense);
    let variables_after_ingest = folded.n_cols();
    let (inpatient, outpatient, excluded_rows) = split_cohorts(&folded)?;

    let target = codebook
        .role_variable(Role::TargetSource)
        .ok_or_else(|| Error::MissingVariable("target-source".into()))?;
    let bands = target.day_bands.clone().ok_or_else(|| {
        Error::CodebookInvalid(format!("{} declares no day-range mapping", target.name))
    })?;

    let summary = PrepSummary {
        rows_read,
        variables_after_ingest,
        dropped_sparse,
        excluded_rows,
        inpatient_rows: inpatient.n_rows(),
        outpatient_rows: outpatient.n_rows(),
        warnings,
    };

    let mut out = Vec::new();
    for (table, cohort) in [(inpatient, Cohort::Inpatient), (outpatient, Cohort::Outpatient)] {
        if config.cohorts.includes(cohort) && table.n_rows() > 0 {
            out.push(build_target(&table, cohort, &bands)?);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no cohort rows to model".into()));
    }
    Ok((out, summary))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelMetricsRow {
    pub cohort: Cohort,
    pub model: LearnerKind,
    pub report: ClassificationReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedEntry {
    pub kind: LearnerKind,
    pub tuning: TuneResult,
    pub chosen: LearnerParams,
    pub model: Model,
}

/// Models and bookkeeping for one cohort, reusable without retraining.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedCohort {
    pub cohort: Cohort,
    pub split: SplitIndices,
    pub train_class_counts: (usize, usize),
    pub post_smote_counts: (usize, usize),
    pub selection: SelectionResult,
    pub selected_variables: Vec<String>,
    pub entries: Vec<TrainedEntry>,
    pub warnings: Vec<String>,
}

/// Split, oversample, select variables, tune, and fit the final models for
/// one cohort. `selection_override` carries a pooled selection when the
/// run is configured for one.
pub fn train_cohort(
    labeled: &LabeledTable,
    config: &RunConfig,
    selection_override: Option<SelectionResult>,
) -> Result<TrainedCohort> {
    let mut warnings = Vec::new();
    let split = stratified_split(labeled, config.train_fraction, config.seed)?;
    let train = labeled.select_rows(&split.train);
    let train_class_counts = train.class_counts();

    let train = if config.smote {
        smote_nominal(&train, config.smote_k, config.seed ^ 0x534D_4F54)?
    } else {
        train
    };
    let post_smote_counts = train.class_counts();

    let selection = match selection_override {
        Some(s) => s,
        None => {
            let mut selector = config.selector.clone();
            selector.seed = config.seed ^ 0x5345_4C43;
            select_features(&train, &selector)?
        }
    };
    for s in &selection.selectors {
        if let Some(e) = &s.error {
            warnings.push(format!("{}: selector abstained: {e}", s.kind));
        }
    }
    let selected_variables: Vec<String> = selection
        .selected
        .iter()
        .filter(|name| train.table.column_index(name).is_some())
        .cloned()
        .collect();
    if selected_variables.len() < 2 {
        return Err(Error::Train(format!(
            "selection kept {} variables, need at least 2",
            selected_variables.len()
        )));
    }

    let matrix = EncodedMatrix::from_table(&train.table, Some(&selected_variables))?;
    let plan = stratified_kfold(&train, config.cv_folds, config.seed ^ 0x464F_4C44)?;

    let mut entries = Vec::new();
    for spec in &config.models {
        let tuning = tune(
            &matrix,
            &train.labels,
            None,
            &spec.grid,
            &plan,
            Metric::Accuracy,
            config.seed,
        )?;
        for cell in &tuning.cells {
            if let Some(e) = &cell.error {
                warnings.push(format!("{}: grid cell failed: {e}", spec.kind));
            }
        }
        let chosen = *tuning.best_params();
        let model =
            crate::learners::train_model(&matrix, &train.labels, &chosen, None, config.seed)?;
        entries.push(TrainedEntry { kind: spec.kind, tuning, chosen, model });
    }

    Ok(TrainedCohort {
        cohort: labeled.cohort,
        split,
        train_class_counts,
        post_smote_counts,
        selection,
        selected_variables,
        entries,
        warnings,
    })
}

/// Test-set predictions per trained model.
pub fn test_predictions(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
) -> Result<Vec<(LearnerKind, Prediction)>> {
    let test = labeled.select_rows(&trained.split.test);
    let mut out = Vec::new();
    for entry in &trained.entries {
        let matrix = EncodedMatrix::from_table_with_schema(&test.table, entry.model.schema())?;
        out.push((entry.kind, entry.model.predict(&matrix)?));
    }
    Ok(out)
}

pub fn evaluate_cohort(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
) -> Result<Vec<ModelMetricsRow>> {
    let test = labeled.select_rows(&trained.split.test);
    let mut rows = Vec::new();
    for (kind, pred) in test_predictions(trained, labeled)? {
        let report = classification_report(&confusion(&test.labels, &pred.labels)?)?;
        rows.push(ModelMetricsRow { cohort: labeled.cohort, model: kind, report });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupTable {
    pub variable: String,
    pub display: String,
    pub rows: Vec<SubgroupRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelAudit {
    pub model: LearnerKind,
    pub group_rows: Vec<GroupAuditRow>,
    pub subgroups: Vec<SubgroupTable>,
    pub boxplots: Vec<BoxplotRow>,
}

/// Protected variables present in a table, in column order.
pub fn protected_variables(labeled: &LabeledTable) -> Vec<String> {
    labeled
        .table
        .variables()
        .iter()
        .filter(|v| v.role == Role::Protected)
        .map(|v| v.name.clone())
        .collect()
}

/// Group- and subgroup-level audit of one model's test predictions.
pub fn audit_predictions(
    predictions: &[u8],
    test: &LabeledTable,
    model: LearnerKind,
    fairness_threshold: f64,
    min_count: Option<u64>,
) -> Result<ModelAudit> {
    let protected = protected_variables(test);
    let group_rows = group_level_audit(predictions, &test.labels, &test.table, &protected)?;
    let mut subgroups = Vec::new();
    let mut boxplots = Vec::new();
    for name in &protected {
        let mut rows = subgroup_audit(predictions, &test.table, name, fairness_threshold)?;
        if let Some(min) = min_count {
            rows.retain(|r| r.count >= min);
        }
        if rows.is_empty() {
            continue;
        }
        let display = test.table.variable(name)?.display_name().to_string();
        boxplots.push(boxplot_data(name, &rows)?);
        subgroups.push(SubgroupTable { variable: name.clone(), display, rows });
    }
    Ok(ModelAudit { model, group_rows, subgroups, boxplots })
}

/// Indices of the top audited models by test accuracy; ties keep the
/// configured model order.
pub fn rank_models(metrics: &[ModelMetricsRow], audit_models: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..metrics.len()).collect();
    order.sort_by(|&a, &b| {
        metrics[b]
            .report
            .accuracy
            .total_cmp(&metrics[a].report.accuracy)
            .then(a.cmp(&b))
    });
    order.truncate(audit_models);
    order
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdMitigation {
    pub model: LearnerKind,
    pub policy: ThresholdPolicy,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub post_audit: ModelAudit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReweighMitigation {
    pub cells: Vec<CellWeight>,
    pub post_metrics: Vec<ModelMetricsRow>,
    pub post_audits: Vec<ModelAudit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MitigationSection {
    pub attribute: String,
    pub choice: MitigationChoice,
    pub criterion: FairnessCriterion,
    pub epsilon: f64,
    pub thresholds: Vec<ThresholdMitigation>,
    pub reweigh: Option<ReweighMitigation>,
    pub warnings: Vec<String>,
}

/// Fit per-group thresholds on a validation carve-out of the training rows
/// and re-audit the test set under the mitigated labels.
fn run_threshold_mitigation(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
    config: &RunConfig,
    audited: &[usize],
    attribute: &str,
) -> Result<(Vec<ThresholdMitigation>, Vec<String>)> {
    let mut warnings = Vec::new();
    let train = labeled.select_rows(&trained.split.train);
    let carve = stratified_split(
        &train,
        1.0 - config.mitigation.validation_fraction,
        config.seed ^ 0x5448_5245,
    )?;
    let validation = train.select_rows(&carve.test);
    let test = labeled.select_rows(&trained.split.test);

    let mut out = Vec::new();
    for &idx in audited {
        let entry = &trained.entries[idx];
        let val_matrix =
            EncodedMatrix::from_table_with_schema(&validation.table, entry.model.schema())?;
        let val_scores = entry.model.score(&val_matrix)?;
        let val_attr = validation.table.column_by_name(attribute)?;
        let mut policy = fit_group_thresholds(
            &val_scores,
            &validation.labels,
            val_attr,
            config.mitigation.criterion,
            config.mitigation.epsilon,
        )?;
        policy.attribute = attribute.to_string();
        if !policy.feasible {
            warnings.push(format!(
                "{}: requested disparity {} infeasible; best found {:.4}",
                entry.kind, config.mitigation.epsilon, policy.achieved_disparity
            ));
        }

        let test_matrix =
            EncodedMatrix::from_table_with_schema(&test.table, entry.model.schema())?;
        let test_scores = entry.model.score(&test_matrix)?;
        let test_attr = test.table.column_by_name(attribute)?;
        let (mitigated, apply_warnings) = apply_thresholds(&policy, &test_scores, test_attr)?;
        warnings.extend(apply_warnings);

        let default_labels: Vec<u8> = test_scores.iter().map(|&s| u8::from(s >= 0.5)).collect();
        let pre_accuracy =
            classification_report(&confusion(&test.labels, &default_labels)?)?.accuracy;
        let post_accuracy =
            classification_report(&confusion(&test.labels, &mitigated)?)?.accuracy;
        let post_audit = audit_predictions(
            &mitigated,
            &test,
            entry.kind,
            config.fairness_threshold,
            config.min_count,
        )?;
        out.push(ThresholdMitigation {
            model: entry.kind,
            policy,
            pre_accuracy,
            post_accuracy,
            post_audit,
        });
    }
    Ok((out, warnings))
}

/// Reweigh the training rows for independence of (attribute, label),
/// retrain the audited models with those weights, and re-audit.
fn run_reweigh_mitigation(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
    config: &RunConfig,
    audited: &[usize],
    attribute: &str,
) -> Result<(ReweighMitigation, Vec<String>)> {
    let mut warnings = Vec::new();
    let train = labeled.select_rows(&trained.split.train);
    let weights = reweigh(&train, attribute)?;
    let matrix = EncodedMatrix::from_table(&train.table, Some(&trained.selected_variables))?;
    let test = labeled.select_rows(&trained.split.test);

    let mut post_metrics = Vec::new();
    let mut post_audits = Vec::new();
    for &idx in audited {
        let entry = &trained.entries[idx];
        let model = crate::learners::train_model(
            &matrix,
            &train.labels,
            &entry.chosen,
            Some(&weights.weights),
            config.seed,
        )?;
        let test_matrix = EncodedMatrix::from_table_with_schema(&test.table, model.schema())?;
        let pred = model.predict(&test_matrix)?;
        let report = classification_report(&confusion(&test.labels, &pred.labels)?)?;
        if report.zero_division {
            warnings.push(format!("{}: zero denominator in reweighed metrics", entry.kind));
        }
        post_metrics.push(ModelMetricsRow { cohort: labeled.cohort, model: entry.kind, report });
        post_audits.push(audit_predictions(
            &pred.labels,
            &test,
            entry.kind,
            config.fairness_threshold,
            config.min_count,
        )?);
    }
    Ok((ReweighMitigation { cells: weights.cells, post_metrics, post_audits }, warnings))
}

pub fn mitigate_cohort(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
    config: &RunConfig,
    audited: &[usize],
) -> Result<Option<MitigationSection>> {
    if config.mitigation.choice == MitigationChoice::None {
        return Ok(None);
    }
    let attribute = config
        .mitigation
        .attribute
        .clone()
        .ok_or_else(|| Error::Config("mitigation requires an attribute".into()))?;
    if labeled.table.column_index(&attribute).is_none() {
        return Err(Error::MissingVariable(attribute));
    }

    let mut section = MitigationSection {
        attribute: attribute.clone(),
        choice: config.mitigation.choice,
        criterion: config.mitigation.criterion,
        epsilon: config.mitigation.epsilon,
        thresholds: Vec::new(),
        reweigh: None,
        warnings: Vec::new(),
    };
    match config.mitigation.choice {
        MitigationChoice::Thresholds => {
            let (thresholds, warnings) =
                run_threshold_mitigation(trained, labeled, config, audited, &attribute)?;
            section.thresholds = thresholds;
            section.warnings = warnings;
        }
        MitigationChoice::Reweigh => {
            let (reweigh, warnings) =
                run_reweigh_mitigation(trained, labeled, config, audited, &attribute)?;
            section.reweigh = Some(reweigh);
            section.warnings = warnings;
        }
        MitigationChoice::None => unreachable!(),
    }
    Ok(Some(section))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohortReport {
    pub cohort: Cohort,
    pub rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_class_counts: (usize, usize),
    pub post_smote_counts: (usize, usize),
    pub selection: SelectionResult,
    pub selected_variables: Vec<String>,
    pub model_metrics: Vec<ModelMetricsRow>,
    pub audited_models: Vec<LearnerKind>,
    pub audits: Vec<ModelAudit>,
    pub mitigation: Option<MitigationSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub metadata: RunMetadata,
    pub prep: PrepSummary,
    pub cohorts: Vec<CohortReport>,
    /// Every degenerate-group exclusion, selector abstention, and fallback
    /// taken anywhere in the run.
    pub warnings: Vec<String>,
}

/// Run the full pipeline.
pub fn run_pipeline(config: &RunConfig) -> Result<AuditReport> {
    config.validate()?;
    let (cohort_tables, prep) = prepare(config)?;
    let mut warnings: Vec<String> = prep.warnings.clone();

    // pooled selection runs once over every cohort's oversampled train rows
    let pooled_selection = if config.selection_scope == SelectionScope::Pooled {
        let mut combined: Option<LabeledTable> = None;
        for labeled in &cohort_tables {
            let split = stratified_split(labeled, config.train_fraction, config.seed)?;
            let mut train = labeled.select_rows(&split.train);
            if config.smote {
                train = smote_nominal(&train, config.smote_k, config.seed ^ 0x534D_4F54)?;
            }
            combined = Some(match combined {
                None => train,
                Some(acc) => LabeledTable::new(
                    acc.table.concat(&train.table)?,
                    acc.labels.iter().chain(&train.labels).copied().collect(),
                    acc.cohort,
                )?,
            });
        }
        let mut selector = config.selector.clone();
        selector.seed = config.seed ^ 0x5345_4C43;
        Some(select_features(combined.as_ref().expect("at least one cohort"), &selector)?)
    } else {
        None
    };

    let mut cohorts = Vec::new();
    for labeled in &cohort_tables {
        let trained = train_cohort(labeled, config, pooled_selection.clone())?;
        warnings.extend(trained.warnings.iter().cloned());

        let model_metrics = evaluate_cohort(&trained, labeled)?;
        let audited = rank_models(&model_metrics, config.audit_models);
        let test = labeled.select_rows(&trained.split.test);
        let predictions = test_predictions(&trained, labeled)?;

        let mut audits = Vec::new();
        for &idx in &audited {
            let (kind, pred) = &predictions[idx];
            let audit = audit_predictions(
                &pred.labels,
                &test,
                *kind,
                config.fairness_threshold,
                config.min_count,
            )?;
            for row in &audit.group_rows {
                for note in &row.notes {
                    warnings.push(format!("{} {} {}: {note}", labeled.cohort, kind, row.variable));
                }
            }
            audits.push(audit);
        }

        let mitigation = mitigate_cohort(&trained, labeled, config, &audited)?;
        if let Some(m) = &mitigation {
            warnings.extend(m.warnings.iter().cloned());
        }

        cohorts.push(CohortReport {
            cohort: labeled.cohort,
            rows: labeled.n_rows(),
            train_rows: trained.split.train.len(),
            test_rows: trained.split.test.len(),
            train_class_counts: trained.train_class_counts,
            post_smote_counts: trained.post_smote_counts,
            selection: trained.selection.clone(),
            selected_variables: trained.selected_variables.clone(),
            model_metrics,
            audited_models: audited.iter().map(|&i| trained.entries[i].kind).collect(),
            audits,
            mitigation,
        });
    }

    Ok(AuditReport {
        metadata: RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
        },
        prep,
        cohorts,
        warnings,
    })
}
