//! Command-line driver for the length-of-stay fairness audit pipeline.
//!
//! Every stage persists its artifact as JSON so later stages (and audits
//! in particular) can rerun without retraining.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fairlos_core::error::{Error, ErrorClass};
use fairlos_core::fairness::SubgroupRow;
use fairlos_core::mitigate::FairnessCriterion;
use fairlos_core::pipeline::{
    self, evaluate_cohort, mitigate_cohort, prepare, rank_models, run_pipeline, test_predictions,
    train_cohort, CohortChoice, MitigationChoice, ModelAudit, RunConfig, TrainedCohort,
};
use fairlos_core::report::{
    boxplot_csv, emit_report, group_audit_csv, model_metrics_csv, subgroup_csv,
};
use fairlos_core::synth::{emit_dataset, FeatureSpec, SynthConfig};
use fairlos_core::table::LabeledTable;

#[derive(Parser)]
#[command(
    name = "fairlos",
    version,
    about = "Train length-of-stay classifiers on coded categorical data and audit them for group and subgroup bias"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the audit report.
    Run(RunArgs),
    /// Ingest a CSV against a codebook and write per-cohort labeled tables.
    Ingest(IngestArgs),
    /// Run feature selection on a prepared cohort table.
    Select(SelectArgs),
    /// Tune and train the configured models on a prepared cohort table.
    Train(TrainArgs),
    /// Evaluate trained models on their held-out test rows.
    Evaluate(EvaluateArgs),
    /// Fairness audit of trained models, reusing persisted artifacts.
    Audit(AuditArgs),
    /// Fit and apply a mitigation on trained models.
    Mitigate(MitigateArgs),
    /// Generate a synthetic dataset with known, controllable bias.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum CohortArg {
    Inpatient,
    Outpatient,
    Both,
}

impl From<CohortArg> for CohortChoice {
    fn from(c: CohortArg) -> Self {
        match c {
            CohortArg::Inpatient => CohortChoice::Inpatient,
            CohortArg::Outpatient => CohortChoice::Outpatient,
            CohortArg::Both => CohortChoice::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MitigateArg {
    None,
    Reweigh,
    Thresholds,
}

impl From<MitigateArg> for MitigationChoice {
    fn from(m: MitigateArg) -> Self {
        match m {
            MitigateArg::None => MitigationChoice::None,
            MitigateArg::Reweigh => MitigationChoice::Reweigh,
            MitigateArg::Thresholds => MitigationChoice::Thresholds,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    DemographicParity,
    EqualizedOdds,
}

impl From<CriterionArg> for FairnessCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::DemographicParity => FairnessCriterion::DemographicParity,
            CriterionArg::EqualizedOdds => FairnessCriterion::EqualizedOdds,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; CLI flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Random seed; required here or in the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cohort: Option<CohortArg>,
    #[arg(long)]
    fairness_threshold: Option<f64>,
    /// Drop subgroups smaller than this from subgroup tables.
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    mitigate: Option<MitigateArg>,
    #[arg(long)]
    mitigate_attribute: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    criterion: Option<CriterionArg>,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    codebook: PathBuf,
    #[arg(long, default_value = "both")]
    cohort: CohortArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    /// Labeled cohort table written by `ingest`.
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_fraction: f64,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    smote: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    labeled: PathBuf,
    /// Optional run configuration for grids and sampling knobs.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained artifact written by `train`.
    #[arg(long)]
    trained: PathBuf,
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    trained: PathBuf,
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long, default_value_t = 0.80)]
    fairness_threshold: f64,
    #[arg(long)]
    min_count: Option<u64>,
    /// How many of the best models to audit.
    #[arg(long, default_value_t = 2)]
    audit_models: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MitigateArgs {
    #[arg(long)]
    trained: PathBuf,
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    mitigate: MitigateArg,
    #[arg(long)]
    mitigate_attribute: String,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[arg(long, default_value = "demographic-parity")]
    criterion: CriterionArg,
    #[arg(long, default_value_t = 2)]
    audit_models: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    seed: u64,
    /// Protected-category probabilities, comma separated.
    #[arg(long, default_value = "0.5,0.5", value_delimiter = ',')]
    group_probs: Vec<f64>,
    /// Positive base rate per protected category, comma separated.
    #[arg(long, default_value = "0.5,0.5", value_delimiter = ',')]
    base_rates: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    features: usize,
    #[arg(long, default_value_t = 3)]
    cardinality: u32,
    #[arg(long, default_value_t = 0.6)]
    signal: f64,
    #[arg(long, default_value_t = 0.1)]
    group_correlation: f64,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Select(args) => cmd_select(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Mitigate(args) => cmd_mitigate(args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => {
            eprintln!("done in {:.2?}", started.elapsed());
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<Error>()
                .map_or(1, |e| match e.class() {
                    ErrorClass::Config => 2,
                    ErrorClass::Data => 3,
                    ErrorClass::Train => 4,
                    ErrorClass::Io => 5,
                });
            std::process::exit(code);
        }
    }
}

fn resolve_run_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => {
            let data = args
                .data
                .clone()
                .ok_or_else(|| Error::Config("--data is required without --config".into()))?;
            let codebook = args
                .codebook
                .clone()
                .ok_or_else(|| Error::Config("--codebook is required without --config".into()))?;
            let seed = args
                .seed
                .ok_or_else(|| Error::Config("--seed is required without --config".into()))?;
            let template = serde_json::json!({
                "data": data,
                "codebook": codebook,
                "seed": seed,
            });
            serde_json::from_value(template)
                .map_err(|e| Error::Config(format!("building configuration: {e}")))?
        }
    };
    if let Some(data) = &args.data {
        config.data = data.clone();
    }
    if let Some(codebook) = &args.codebook {
        config.codebook = codebook.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(cohort) = args.cohort {
        config.cohorts = cohort.into();
    }
    if let Some(t) = args.fairness_threshold {
        config.fairness_threshold = t;
    }
    if args.min_count.is_some() {
        config.min_count = args.min_count;
    }
    if let Some(m) = args.mitigate {
        config.mitigation.choice = m.into();
    }
    if let Some(a) = &args.mitigate_attribute {
        config.mitigation.attribute = Some(a.clone());
    }
    if let Some(e) = args.epsilon {
        config.mitigation.epsilon = e;
    }
    if let Some(c) = args.criterion {
        config.mitigation.criterion = c.into();
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let config = resolve_run_config(&args)?;
    let report = run_pipeline(&config)?;
    let written = emit_report(&report, &args.out)?;
    for path in &written {
        println!("{}", path.display());
    }
    for cohort in &report.cohorts {
        for row in &cohort.model_metrics {
            eprintln!(
                "{} {}: accuracy {:.3}",
                row.cohort, row.model, row.report.accuracy
            );
        }
    }
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    println!("{}", path.display());
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)
}

/// Minimal config for stages that only need sampling and grid defaults.
fn stage_config(data: &Path, codebook: &Path, seed: u64) -> anyhow::Result<RunConfig> {
    let template = serde_json::json!({
        "data": data,
        "codebook": codebook,
        "seed": seed,
    });
    Ok(serde_json::from_value(template)
        .map_err(|e| Error::Config(format!("building configuration: {e}")))?)
}

fn cmd_ingest(args: IngestArgs) -> anyhow::Result<()> {
    let mut config = stage_config(&args.data, &args.codebook, 0)?;
    config.cohorts = args.cohort.into();
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let (tables, summary) = prepare(&config)?;
    write_json(&args.out.join("prep_summary.json"), &summary)?;
    for labeled in &tables {
        write_json(&args.out.join(format!("labeled_{}.json", labeled.cohort)), labeled)?;
    }
    Ok(())
}

fn cmd_select(args: SelectArgs) -> anyhow::Result<()> {
    let labeled: LabeledTable = read_json(&args.labeled)?;
    let mut config = stage_config(Path::new("-"), Path::new("-"), args.seed)?;
    config.train_fraction = args.train_fraction;
    config.smote = args.smote;

    let split = fairlos_core::sampling::stratified_split(&labeled, config.train_fraction, config.seed)?;
    let mut train = labeled.select_rows(&split.train);
    if config.smote {
        train = fairlos_core::sampling::smote_nominal(&train, config.smote_k, config.seed ^ 0x534D_4F54)?;
    }
    let mut selector = config.selector.clone();
    selector.seed = config.seed ^ 0x5345_4C43;
    let selection = fairlos_core::feature_select::select_features(&train, &selector)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&args.out.join(format!("selection_{}.json", labeled.cohort)), &selection)?;
    let list_path = args.out.join(format!("selected_variables_{}.txt", labeled.cohort));
    std::fs::write(&list_path, selection.selected.join("\n") + "\n")
        .map_err(|e| Error::io(&list_path, e))?;
    println!("{}", list_path.display());
    for s in &selection.selectors {
        match &s.error {
            None => eprintln!("{}: selected {} variables", s.kind, s.selected.len()),
            Some(e) => eprintln!("{}: abstained ({e})", s.kind),
        }
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let labeled: LabeledTable = read_json(&args.labeled)?;
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => stage_config(Path::new("-"), Path::new("-"), 0)?,
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let trained = train_cohort(&labeled, &config, None)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&args.out.join(format!("trained_{}.json", labeled.cohort)), &trained)?;
    for entry in &trained.entries {
        eprintln!("{}: trained", entry.kind);
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let trained: TrainedCohort = read_json(&args.trained)?;
    let labeled: LabeledTable = read_json(&args.labeled)?;
    let metrics = evaluate_cohort(&trained, &labeled)?;
    let rows: Vec<_> = metrics.iter().collect();
    let csv = model_metrics_csv(&rows);
    print!("{csv}");
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(format!("model_metrics_{}.csv", labeled.cohort));
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        write_json(&out.join(format!("evaluation_{}.json", labeled.cohort)), &metrics)?;
    }
    Ok(())
}

fn audit_models(
    trained: &TrainedCohort,
    labeled: &LabeledTable,
    fairness_threshold: f64,
    min_count: Option<u64>,
    n_audit: usize,
) -> anyhow::Result<Vec<ModelAudit>> {
    let metrics = evaluate_cohort(trained, labeled)?;
    let audited = rank_models(&metrics, n_audit);
    let test = labeled.select_rows(&trained.split.test);
    let predictions = test_predictions(trained, labeled)?;
    let mut audits = Vec::new();
    for idx in audited {
        let (kind, pred) = &predictions[idx];
        audits.push(pipeline::audit_predictions(
            &pred.labels,
            &test,
            *kind,
            fairness_threshold,
            min_count,
        )?);
    }
    Ok(audits)
}

fn cmd_audit(args: AuditArgs) -> anyhow::Result<()> {
    let trained: TrainedCohort = read_json(&args.trained)?;
    let labeled: LabeledTable = read_json(&args.labeled)?;
    let audits = audit_models(
        &trained,
        &labeled,
        args.fairness_threshold,
        args.min_count,
        args.audit_models,
    )?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&args.out.join(format!("audit_{}.json", labeled.cohort)), &audits)?;

    let refs: Vec<&ModelAudit> = audits.iter().collect();
    for audit in &refs {
        let path = args.out.join(format!("group_audit_{}_{}.csv", labeled.cohort, audit.model));
        std::fs::write(&path, group_audit_csv(&audit.group_rows)).map_err(|e| Error::io(&path, e))?;
        println!("{}", path.display());
        let path = args.out.join(format!("boxplot_{}_{}.csv", labeled.cohort, audit.model));
        std::fs::write(&path, boxplot_csv(&audit.boxplots)).map_err(|e| Error::io(&path, e))?;
        println!("{}", path.display());
    }
    if let Some(first) = refs.first() {
        for table in &first.subgroups {
            if let Some(csv) = subgroup_csv(&refs, &table.variable) {
                let path =
                    args.out.join(format!("subgroups_{}_{}.csv", labeled.cohort, table.variable));
                std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
                println!("{}", path.display());
            }
        }
    }
    let flagged: usize = refs
        .first()
        .map(|a| a.subgroups.iter().flat_map(|t| &t.rows).filter(|r| r.flagged).count())
        .unwrap_or(0);
    eprintln!("{flagged} subgroups flagged below the parity threshold");
    Ok(())
}

fn cmd_mitigate(args: MitigateArgs) -> anyhow::Result<()> {
    let trained: TrainedCohort = read_json(&args.trained)?;
    let labeled: LabeledTable = read_json(&args.labeled)?;
    let mut config = stage_config(Path::new("-"), Path::new("-"), args.seed.unwrap_or(trained.split.seed))?;
    config.mitigation.choice = args.mitigate.into();
    config.mitigation.attribute = Some(args.mitigate_attribute.clone());
    config.mitigation.epsilon = args.epsilon;
    config.mitigation.criterion = args.criterion.into();

    let metrics = evaluate_cohort(&trained, &labeled)?;
    let audited = rank_models(&metrics, args.audit_models);
    let section = mitigate_cohort(&trained, &labeled, &config, &audited)?
        .ok_or_else(|| Error::Config("mitigation choice was none".into()))?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_json(&args.out.join(format!("mitigation_{}.json", labeled.cohort)), &section)?;
    for t in &section.thresholds {
        eprintln!(
            "{}: disparity {:.4} (feasible: {}), accuracy {:.4} -> {:.4}",
            t.model, t.policy.achieved_disparity, t.policy.feasible, t.pre_accuracy, t.post_accuracy
        );
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> anyhow::Result<()> {
    let config = SynthConfig {
        n_rows: args.rows,
        group_probs: args.group_probs.clone(),
        base_rates: args.base_rates.clone(),
        features: (0..args.features)
            .map(|_| FeatureSpec {
                cardinality: args.cardinality,
                label_signal: args.signal,
                group_correlation: args.group_correlation,
            })
            .collect(),
        seed: args.seed,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let data_path = args.out.join("data.csv");
    let codebook_path = args.out.join("codebook.json");
    let truth = emit_dataset(&config, &data_path, &codebook_path)?;
    println!("{}", data_path.display());
    println!("{}", codebook_path.display());
    write_json(&args.out.join("ground_truth.json"), &truth)?;
    Ok(())
}
