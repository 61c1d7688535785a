//! Report emission: one machine-readable JSON document plus per-table CSVs
//! mirroring the audit's tables and boxplot data.
//!
//! Emission is byte-stable: identical report content produces identical
//! files. Nothing time- or environment-dependent is written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fairness::{BoxplotRow, GroupAuditRow, OutlierKind};
use crate::pipeline::{AuditReport, MitigationChoice, ModelAudit, ModelMetricsRow};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt2(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"))
}

/// Table-2-shaped rows: cohort x model x the four weighted metrics.
pub fn model_metrics_csv(rows: &[&ModelMetricsRow]) -> String {
    let mut csv = String::from("cohort,model,accuracy,precision,recall,f1\n");
    for row in rows {
        let r = &row.report;
        let _ = writeln!(
            csv,
            "{},{},{:.2},{:.2},{:.2},{:.2}",
            row.cohort, row.model, r.accuracy, r.precision, r.recall, r.f1
        );
    }
    csv
}

/// Group-level audit table: variable x {EOD, FPRD, FNRD, OSR, DPR}.
pub fn group_audit_csv(rows: &[GroupAuditRow]) -> String {
    let mut csv = String::from("variable,eod,fprd,fnrd,osr,dpr\n");
    for row in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{:.2},{}",
            row.display,
            opt2(row.eod),
            opt2(row.fprd),
            opt2(row.fnrd),
            row.osr,
            opt2(row.dpr)
        );
    }
    csv
}

/// Subgroup table for one variable, with the audited models' selection
/// rates side by side. Ratio and flag come from the first audit.
pub fn subgroup_csv(audits: &[&ModelAudit], variable: &str) -> Option<String> {
    let first = audits.first()?;
    let table = first.subgroups.iter().find(|t| t.variable == variable)?;
    let mut csv = String::from("category");
    for audit in audits {
        let _ = write!(csv, ",sr_{}", audit.model);
    }
    csv.push_str(",count,parity_ratio,flag\n");
    for row in &table.rows {
        let mut line = row.label.clone();
        for audit in audits {
            let rate = audit
                .subgroups
                .iter()
                .find(|t| t.variable == variable)
                .and_then(|t| t.rows.iter().find(|r| r.code == row.code))
                .map(|r| r.selection_rate);
            match rate {
                Some(r) => {
                    let _ = write!(line, ",{r:.6}");
                }
                None => line.push_str(",NA"),
            }
        }
        let _ = writeln!(
            line,
            ",{},{:.6},{}",
            row.count,
            row.parity_ratio,
            if row.flagged { "1" } else { "0" }
        );
        csv.push_str(&line);
    }
    Some(csv)
}

/// Boxplot rows flattened to CSV: one line per outlier, or a single line
/// with empty outlier fields when a variable has none.
pub fn boxplot_csv(rows: &[BoxplotRow]) -> String {
    let mut csv = String::from(
        "variable,q1,median,q3,lo_whisker,hi_whisker,outlier_label,outlier_value,outlier_kind\n",
    );
    for row in rows {
        let stats = format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            row.variable, row.q1, row.median, row.q3, row.lo_whisker, row.hi_whisker
        );
        if row.outliers.is_empty() {
            let _ = writeln!(csv, "{stats},,,");
        } else {
            for o in &row.outliers {
                let kind = match o.kind {
                    OutlierKind::Disadvantaged => "disadvantaged",
                    OutlierKind::Privileged => "privileged",
                };
                let _ = writeln!(csv, "{stats},{},{:.6},{kind}", o.label, o.value);
            }
        }
    }
    csv
}

/// Write the report files into `outdir`; returns the paths written.
pub fn emit_report(report: &AuditReport, outdir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut written = Vec::new();

    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("serializing report: {e}")))?;
    let path = outdir.join("report.json");
    write_file(&path, &(json + "\n"))?;
    written.push(path);

    let all_metrics: Vec<&ModelMetricsRow> =
        report.cohorts.iter().flat_map(|c| c.model_metrics.iter()).collect();
    let path = outdir.join("model_metrics.csv");
    write_file(&path, &model_metrics_csv(&all_metrics))?;
    written.push(path);

    for cohort in &report.cohorts {
        let audits: Vec<&ModelAudit> = cohort.audits.iter().collect();
        for audit in &audits {
            let path = outdir.join(format!("group_audit_{}_{}.csv", cohort.cohort, audit.model));
            write_file(&path, &group_audit_csv(&audit.group_rows))?;
            written.push(path);

            let path = outdir.join(format!("boxplot_{}_{}.csv", cohort.cohort, audit.model));
            write_file(&path, &boxplot_csv(&audit.boxplots))?;
            written.push(path);
        }
        if let Some(first) = audits.first() {
            for table in &first.subgroups {
                if let Some(csv) = subgroup_csv(&audits, &table.variable) {
                    let path =
                        outdir.join(format!("subgroups_{}_{}.csv", cohort.cohort, table.variable));
                    write_file(&path, &csv)?;
                    written.push(path);
                }
            }
        }

        if let Some(mit) = &cohort.mitigation {
            if mit.choice == MitigationChoice::Thresholds {
                let mut csv = String::from(
                    "model,group_code,threshold,achieved_disparity,feasible,pre_accuracy,post_accuracy\n",
                );
                for t in &mit.thresholds {
                    for (code, threshold) in &t.policy.thresholds {
                        let _ = writeln!(
                            csv,
                            "{},{},{:.6},{:.6},{},{:.4},{:.4}",
                            t.model,
                            code,
                            threshold,
                            t.policy.achieved_disparity,
                            t.policy.feasible,
                            t.pre_accuracy,
                            t.post_accuracy
                        );
                    }
                }
                let path = outdir.join(format!("mitigation_{}_thresholds.csv", cohort.cohort));
                write_file(&path, &csv)?;
                written.push(path);
            }
        }
    }

    let mut warn = String::new();
    for w in &report.warnings {
        let _ = writeln!(warn, "{w}");
    }
    let path = outdir.join("warnings.txt");
    write_file(&path, &warn)?;
    written.push(path);

    Ok(written)
}
