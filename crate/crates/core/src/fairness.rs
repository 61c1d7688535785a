//! Group- and subgroup-level fairness metrics: selection rates, demographic
//! parity ratio, false positive/negative rate differences, equalized odds
//! difference, and four-fifths-rule flagging with boxplot summaries.

use serde::{Deserialize, Serialize};

use crate::codebook::VariableSpec;
use crate::error::{Error, Result};
use crate::metrics::{confusion, ConfusionCounts};
use crate::table::CodedTable;

/// Per-category confusion counts for one protected variable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupOutcomes {
    pub variable: String,
    /// Ascending category code; categories with zero rows are omitted.
    pub groups: Vec<GroupCell>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupCell {
    pub code: i32,
    pub label: String,
    pub counts: ConfusionCounts,
}

impl GroupOutcomes {
    pub fn total_counts(&self) -> ConfusionCounts {
        let mut total = ConfusionCounts::default();
        for g in &self.groups {
            total.add(g.counts);
        }
        total
    }
}

/// Split rows into per-category confusion counts.
pub fn group_outcomes(
    labels: &[u8],
    predictions: &[u8],
    attribute: &[i32],
    spec: &VariableSpec,
) -> Result<GroupOutcomes> {
    if labels.len() != predictions.len() || labels.len() != attribute.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} labels, {} predictions, {} attribute codes",
            labels.len(),
            predictions.len(),
            attribute.len()
        )));
    }
    let mut codes: Vec<i32> = attribute.to_vec();
    codes.sort_unstable();
    codes.dedup();

    let mut groups = Vec::with_capacity(codes.len());
    for code in codes {
        let mut counts = ConfusionCounts::default();
        for i in 0..labels.len() {
            if attribute[i] != code {
                continue;
            }
            match (labels[i], predictions[i]) {
                (1, 1) => counts.tp += 1,
                (0, 1) => counts.fp += 1,
                (0, 0) => counts.tn += 1,
                (1, 0) => counts.fn_ += 1,
                (y, p) => {
                    return Err(Error::InvalidArgument(format!("non-binary pair ({y}, {p})")))
                }
            }
        }
        groups.push(GroupCell { code, label: spec.category_label(code), counts });
    }
    Ok(GroupOutcomes { variable: spec.name.clone(), groups })
}

/// Fraction of a group predicted positive: (TP + FP) / total.
pub fn selection_rate(counts: &ConfusionCounts) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::MetricUndefined("selection rate of an empty group".into()));
    }
    Ok((counts.tp + counts.fp) as f64 / total as f64)
}

/// Selection rate over the whole audited set.
pub fn overall_selection_rate(counts: &ConfusionCounts) -> Result<f64> {
    selection_rate(counts)
}

/// Minimum over maximum selection rate across a slice of rates.
pub fn parity_ratio_of_rates(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::MetricUndefined("demographic parity of zero groups".into()));
    }
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Err(Error::MetricUndefined("all selection rates are zero".into()));
    }
    Ok(min / max)
}

/// Demographic parity ratio: min over max group selection rate.
pub fn demographic_parity_ratio(groups: &GroupOutcomes) -> Result<f64> {
    let rates = groups
        .groups
        .iter()
        .map(|g| selection_rate(&g.counts))
        .collect::<Result<Vec<_>>>()?;
    parity_ratio_of_rates(&rates)
}

/// Max-minus-min spreads of the per-group false positive and false negative
/// rates, and their maximum (the equalized odds difference).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateDifferences {
    pub fprd: f64,
    pub fnrd: f64,
    pub eod: f64,
    /// Groups without an actual negative, excluded from the FPR spread.
    pub excluded_fpr: Vec<String>,
    /// Groups without an actual positive, excluded from the FNR spread.
    pub excluded_fnr: Vec<String>,
}

pub fn rate_differences(groups: &GroupOutcomes) -> Result<RateDifferences> {
    let mut fprs = Vec::new();
    let mut fnrs = Vec::new();
    let mut excluded_fpr = Vec::new();
    let mut excluded_fnr = Vec::new();
    for g in &groups.groups {
        if g.counts.negatives() > 0 {
            fprs.push(g.counts.fp as f64 / g.counts.negatives() as f64);
        } else {
            excluded_fpr.push(g.label.clone());
        }
        if g.counts.positives() > 0 {
            fnrs.push(g.counts.fn_ as f64 / g.counts.positives() as f64);
        } else {
            excluded_fnr.push(g.label.clone());
        }
    }
    if fprs.len() < 2 || fnrs.len() < 2 {
        return Err(Error::MetricUndefined(format!(
            "rate differences for {} need at least 2 eligible groups (FPR {}, FNR {})",
            groups.variable,
            fprs.len(),
            fnrs.len()
        )));
    }
    let spread = |xs: &[f64]| {
        xs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - xs.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let fprd = spread(&fprs);
    let fnrd = spread(&fnrs);
    Ok(RateDifferences { fprd, fnrd, eod: fprd.max(fnrd), excluded_fpr, excluded_fnr })
}

/// One row of the group-level audit table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupAuditRow {
    pub variable: String,
    pub display: String,
    pub eod: Option<f64>,
    pub fprd: Option<f64>,
    pub fnrd: Option<f64>,
    pub osr: f64,
    pub dpr: Option<f64>,
    /// Degenerate-group exclusions and per-variable failures.
    pub notes: Vec<String>,
}

/// Audit one model's predictions across a list of protected variables.
/// Per-variable failures are recorded in the row, not raised.
pub fn group_level_audit(
    predictions: &[u8],
    labels: &[u8],
    table: &CodedTable,
    protected: &[String],
) -> Result<Vec<GroupAuditRow>> {
    let global = confusion(labels, predictions)?;
    let osr = overall_selection_rate(&global)?;

    let mut rows = Vec::with_capacity(protected.len());
    for name in protected {
        let spec = table.variable(name)?;
        let attribute = table.column_by_name(name)?;
        let outcomes = group_outcomes(labels, predictions, attribute, spec)?;
        let display = spec.display_name().to_string();

        if outcomes.groups.len() == 1 {
            rows.push(GroupAuditRow {
                variable: name.clone(),
                display,
                eod: Some(0.0),
                fprd: Some(0.0),
                fnrd: Some(0.0),
                osr,
                dpr: Some(1.0),
                notes: vec!["single observed category".into()],
            });
            continue;
        }

        let mut notes = Vec::new();
        let dpr = match demographic_parity_ratio(&outcomes) {
            Ok(v) => Some(v),
            Err(e) => {
                notes.push(e.to_string());
                None
            }
        };
        let (eod, fprd, fnrd) = match rate_differences(&outcomes) {
            Ok(d) => {
                for g in d.excluded_fpr {
                    notes.push(format!("{g}: no actual negatives, excluded from FPR spread"));
                }
                for g in d.excluded_fnr {
                    notes.push(format!("{g}: no actual positives, excluded from FNR spread"));
                }
                (Some(d.eod), Some(d.fprd), Some(d.fnrd))
            }
            Err(e) => {
                notes.push(e.to_string());
                (None, None, None)
            }
        };
        rows.push(GroupAuditRow { variable: name.clone(), display, eod, fprd, fnrd, osr, dpr, notes });
    }
    Ok(rows)
}

/// One row of a subgroup selection-rate table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub code: i32,
    pub label: String,
    pub selection_rate: f64,
    pub count: u64,
    /// Selection rate divided by the maximum subgroup selection rate.
    pub parity_ratio: f64,
    /// True when the parity ratio is strictly below the flag threshold.
    pub flagged: bool,
}

/// Ratio-and-flag computation over already-known selection rates.
pub fn subgroup_rows_from_rates(
    rates: &[(i32, String, f64, u64)],
    flag_threshold: f64,
) -> Result<Vec<SubgroupRow>> {
    if !(flag_threshold > 0.0 && flag_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "flag threshold {flag_threshold} outside (0, 1]"
        )));
    }
    let max = rates.iter().map(|&(_, _, r, _)| r).fold(f64::NEG_INFINITY, f64::max);
    if rates.is_empty() || max <= 0.0 {
        return Err(Error::MetricUndefined("no subgroup has a positive selection rate".into()));
    }
    Ok(rates
        .iter()
        .map(|(code, label, rate, count)| {
            let parity_ratio = rate / max;
            SubgroupRow {
                code: *code,
                label: label.clone(),
                selection_rate: *rate,
                count: *count,
                parity_ratio,
                flagged: parity_ratio < flag_threshold,
            }
        })
        .collect())
}

/// Per-category selection rates with four-fifths-rule flags, ordered by
/// category code as in the codebook. Empty categories are omitted.
pub fn subgroup_audit(
    predictions: &[u8],
    table: &CodedTable,
    variable: &str,
    flag_threshold: f64,
) -> Result<Vec<SubgroupRow>> {
    let spec = table.variable(variable)?;
    let attribute = table.column_by_name(variable)?;
    if predictions.len() != attribute.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} rows",
            predictions.len(),
            attribute.len()
        )));
    }
    let mut codes: Vec<i32> = attribute.to_vec();
    codes.sort_unstable();
    codes.dedup();

    let mut rates = Vec::with_capacity(codes.len());
    for code in codes {
        let mut selected = 0u64;
        let mut count = 0u64;
        for i in 0..attribute.len() {
            if attribute[i] == code {
                count += 1;
                selected += predictions[i] as u64;
            }
        }
        rates.push((code, spec.category_label(code), selected as f64 / count as f64, count));
    }
    subgroup_rows_from_rates(&rates, flag_threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierKind {
    /// Parity ratio below the flag threshold.
    Disadvantaged,
    /// Selection rate above the upper whisker.
    Privileged,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxplotOutlier {
    pub label: String,
    pub value: f64,
    pub kind: OutlierKind,
}

/// Five-number summary of one variable's subgroup selection rates, with
/// disadvantaged and privileged outliers called out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxplotRow {
    pub variable: String,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub outliers: Vec<BoxplotOutlier>,
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

/// Tukey boxplot statistics over one variable's subgroup selection rates.
pub fn boxplot_data(variable: &str, rows: &[SubgroupRow]) -> Result<BoxplotRow> {
    if rows.is_empty() {
        return Err(Error::MetricUndefined(format!("no subgroups for {variable}")));
    }
    let mut sorted: Vec<f64> = rows.iter().map(|r| r.selection_rate).collect();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.5);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let lo_whisker =
        sorted.iter().copied().filter(|&v| v >= lo_fence).fold(f64::INFINITY, f64::min);
    let hi_whisker =
        sorted.iter().copied().filter(|&v| v <= hi_fence).fold(f64::NEG_INFINITY, f64::max);

    let mut outliers = Vec::new();
    for row in rows {
        if row.flagged {
            outliers.push(BoxplotOutlier {
                label: row.label.clone(),
                value: row.selection_rate,
                kind: OutlierKind::Disadvantaged,
            });
        } else if row.selection_rate > hi_whisker {
            outliers.push(BoxplotOutlier {
                label: row.label.clone(),
                value: row.selection_rate,
                kind: OutlierKind::Privileged,
            });
        }
    }
    Ok(BoxplotRow { variable: variable.to_string(), q1, median, q3, lo_whisker, hi_whisker, outliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Role;
    use proptest::prelude::*;

    fn spec(name: &str, codes: &[i32]) -> VariableSpec {
        VariableSpec {
            name: name.into(),
            display: None,
            role: Role::Protected,
            categories: codes.iter().map(|&c| (c, format!("g{c}"))).collect(),
            code_ranges: vec![],
            missing_codes: Default::default(),
            day_bands: None,
        }
    }

    #[test]
    fn selection_rate_reference_cases() {
        let c = ConfusionCounts { tp: 2, fp: 1, tn: 1, fn_: 0 };
        assert_eq!(selection_rate(&c).unwrap(), 0.75);
        let none = ConfusionCounts { tp: 0, fp: 0, tn: 3, fn_: 2 };
        assert_eq!(selection_rate(&none).unwrap(), 0.0);
        let all = ConfusionCounts { tp: 3, fp: 2, tn: 0, fn_: 0 };
        assert_eq!(selection_rate(&all).unwrap(), 1.0);
    }

    #[test]
    fn group_outcomes_partition_global_confusion() {
        let labels = [1, 0, 1, 0, 1, 0];
        let preds = [1, 1, 0, 0, 1, 0];
        let attr = [1, 1, 2, 2, 1, 2];
        let out = group_outcomes(&labels, &preds, &attr, &spec("A", &[1, 2])).unwrap();
        assert_eq!(out.groups.len(), 2);
        let total = out.total_counts();
        assert_eq!(total, confusion(&labels, &preds).unwrap());
        let n: u64 = out.groups.iter().map(|g| g.counts.total()).sum();
        assert_eq!(n, 6);
    }

    #[test]
    fn single_group_outcomes_match_global() {
        let labels = [1, 0, 1];
        let preds = [1, 0, 0];
        let attr = [5, 5, 5];
        let out = group_outcomes(&labels, &preds, &attr, &spec("A", &[5])).unwrap();
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].counts, confusion(&labels, &preds).unwrap());
    }

    #[test]
    fn dpr_single_group_is_one() {
        assert_eq!(parity_ratio_of_rates(&[0.4]).unwrap(), 1.0);
    }

    #[test]
    fn dpr_all_zero_is_undefined() {
        assert!(parity_ratio_of_rates(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn rate_differences_reference_case() {
        // two groups: FPR {0.1, 0.4}, FNR {0.2, 0.25}
        let groups = GroupOutcomes {
            variable: "A".into(),
            groups: vec![
                GroupCell {
                    code: 1,
                    label: "g1".into(),
                    counts: ConfusionCounts { fp: 1, tn: 9, fn_: 1, tp: 4 },
                },
                GroupCell {
                    code: 2,
                    label: "g2".into(),
                    counts: ConfusionCounts { fp: 4, tn: 6, fn_: 1, tp: 3 },
                },
            ],
        };
        let d = rate_differences(&groups).unwrap();
        assert!((d.fprd - 0.3).abs() < 1e-12);
        assert!((d.fnrd - 0.05).abs() < 1e-12);
        assert!((d.eod - 0.3).abs() < 1e-12);
    }

    #[test]
    fn identical_groups_have_zero_differences() {
        let cell = ConfusionCounts { tp: 3, fp: 2, tn: 4, fn_: 1 };
        let groups = GroupOutcomes {
            variable: "A".into(),
            groups: vec![
                GroupCell { code: 1, label: "g1".into(), counts: cell },
                GroupCell { code: 2, label: "g2".into(), counts: cell },
            ],
        };
        let d = rate_differences(&groups).unwrap();
        assert_eq!((d.fprd, d.fnrd, d.eod), (0.0, 0.0, 0.0));
    }

    #[test]
    fn degenerate_group_excluded_with_warning() {
        let groups = GroupOutcomes {
            variable: "A".into(),
            groups: vec![
                GroupCell {
                    code: 1,
                    label: "g1".into(),
                    counts: ConfusionCounts { tp: 2, fn_: 1, fp: 1, tn: 2 },
                },
                GroupCell {
                    code: 2,
                    label: "g2".into(),
                    // no actual positives
                    counts: ConfusionCounts { tp: 0, fn_: 0, fp: 1, tn: 3 },
                },
                GroupCell {
                    code: 3,
                    label: "g3".into(),
                    counts: ConfusionCounts { tp: 1, fn_: 1, fp: 2, tn: 2 },
                },
            ],
        };
        let d = rate_differences(&groups).unwrap();
        assert_eq!(d.excluded_fnr, vec!["g2".to_string()]);
        assert!(d.excluded_fpr.is_empty());
    }

    #[test]
    fn subgroup_ratios_and_flags() {
        let rates = vec![
            (1, "a".to_string(), 0.5, 10),
            (2, "b".to_string(), 0.45, 10),
            (3, "c".to_string(), 0.39, 10),
        ];
        let rows = subgroup_rows_from_rates(&rates, 0.80).unwrap();
        assert!((rows[0].parity_ratio - 1.0).abs() < 1e-12);
        assert!((rows[1].parity_ratio - 0.9).abs() < 1e-12);
        assert!((rows[2].parity_ratio - 0.78).abs() < 1e-12);
        assert_eq!(rows.iter().filter(|r| r.flagged).count(), 1);
        assert!(rows[2].flagged);
    }

    #[test]
    fn boxplot_hand_computed_case() {
        let rows = subgroup_rows_from_rates(
            &[
                (1, "a".into(), 0.1, 5),
                (2, "b".into(), 0.5, 5),
                (3, "c".into(), 0.5, 5),
                (4, "d".into(), 0.5, 5),
                (5, "e".into(), 0.9, 5),
            ],
            0.80,
        )
        .unwrap();
        let b = boxplot_data("V", &rows).unwrap();
        assert_eq!(b.median, 0.5);
        assert_eq!(b.q1, 0.5);
        assert_eq!(b.q3, 0.5);
        assert_eq!((b.lo_whisker, b.hi_whisker), (0.5, 0.5));
        // 0.1 and 0.9 lie beyond the collapsed whiskers
        assert!(0.1 < b.lo_whisker && 0.9 > b.hi_whisker);
        // every rate below 0.8 * 0.9 = 0.72 is flagged, so the 0.5s count too
        let dis: Vec<f64> = b
            .outliers
            .iter()
            .filter(|o| o.kind == OutlierKind::Disadvantaged)
            .map(|o| o.value)
            .collect();
        assert_eq!(dis, vec![0.1, 0.5, 0.5, 0.5]);
        let priv_: Vec<f64> = b
            .outliers
            .iter()
            .filter(|o| o.kind == OutlierKind::Privileged)
            .map(|o| o.value)
            .collect();
        assert_eq!(priv_, vec![0.9]);
    }

    #[test]
    fn boxplot_single_subgroup_is_degenerate() {
        let rows = subgroup_rows_from_rates(&[(1, "a".into(), 0.4, 5)], 0.8).unwrap();
        let b = boxplot_data("V", &rows).unwrap();
        assert_eq!(b.q1, 0.4);
        assert_eq!(b.q3, 0.4);
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn single_category_audit_row() {
        use crate::table::CodedTable;
        let table =
            CodedTable::new(vec![spec("A", &[1])], vec![vec![1, 1, 1, 1]]).unwrap();
        let rows =
            group_level_audit(&[1, 0, 1, 0], &[1, 0, 0, 1], &table, &["A".to_string()]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].eod, Some(0.0));
        assert_eq!(rows[0].dpr, Some(1.0));
        assert_eq!(rows[0].osr, 0.5);
    }

    proptest! {
        #[test]
        fn eod_is_max_of_spreads(cells in proptest::collection::vec((0u64..50, 0u64..50, 0u64..50, 0u64..50), 2..8)) {
            let groups = GroupOutcomes {
                variable: "A".into(),
                groups: cells
                    .iter()
                    .enumerate()
                    .map(|(i, &(tp, fp, tn, fn_))| GroupCell {
                        code: i as i32,
                        label: format!("g{i}"),
                        counts: ConfusionCounts { tp, fp, tn, fn_ },
                    })
                    .collect(),
            };
            if let Ok(d) = rate_differences(&groups) {
                prop_assert_eq!(d.eod, d.fprd.max(d.fnrd));
                prop_assert!(d.fprd >= 0.0 && d.fprd <= 1.0);
                prop_assert!(d.fnrd >= 0.0 && d.fnrd <= 1.0);
            }
        }

        #[test]
        fn dpr_invariant_to_permutation(rates in proptest::collection::vec(0.01f64..1.0, 1..10), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = rates.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = parity_ratio_of_rates(&rates).unwrap();
            let b = parity_ratio_of_rates(&shuffled).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn dpr_is_one_iff_all_rates_equal(rates in proptest::collection::vec(0.01f64..1.0, 2..8)) {
            let dpr = parity_ratio_of_rates(&rates).unwrap();
            let all_equal = rates.windows(2).all(|w| w[0] == w[1]);
            prop_assert_eq!(dpr == 1.0, all_equal);
        }

        #[test]
        fn weighted_mean_of_group_rates_is_osr(
            rows in proptest::collection::vec((0u8..2, 0u8..2, 0i32..4), 1..120)
        ) {
            let labels: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let preds: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let attr: Vec<i32> = rows.iter().map(|r| r.2).collect();
            let out = group_outcomes(&labels, &preds, &attr, &spec("A", &[0, 1, 2, 3])).unwrap();
            let osr = overall_selection_rate(&out.total_counts()).unwrap();
            let mut weighted = 0.0;
            let mut n = 0.0;
            for g in &out.groups {
                weighted += selection_rate(&g.counts).unwrap() * g.counts.total() as f64;
                n += g.counts.total() as f64;
            }
            prop_assert!((weighted / n - osr).abs() < 1e-12);
        }

        #[test]
        fn duplicating_rows_preserves_metrics(
            rows in proptest::collection::vec((0u8..2, 0u8..2, 0i32..3), 4..60),
            k in 2usize..5
        ) {
            let labels: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let preds: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let attr: Vec<i32> = rows.iter().map(|r| r.2).collect();
            let mut labels_k = Vec::new();
            let mut preds_k = Vec::new();
            let mut attr_k = Vec::new();
            for _ in 0..k {
                labels_k.extend_from_slice(&labels);
                preds_k.extend_from_slice(&preds);
                attr_k.extend_from_slice(&attr);
            }
            let s = spec("A", &[0, 1, 2]);
            let a = group_outcomes(&labels, &preds, &attr, &s).unwrap();
            let b = group_outcomes(&labels_k, &preds_k, &attr_k, &s).unwrap();
            match (demographic_parity_ratio(&a), demographic_parity_ratio(&b)) {
                (Ok(x), Ok(y)) => prop_assert!((x - y).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "disagreement: {other:?}"),
            }
            match (rate_differences(&a), rate_differences(&b)) {
                (Ok(x), Ok(y)) => {
                    prop_assert!((x.fprd - y.fprd).abs() < 1e-12);
                    prop_assert!((x.fnrd - y.fnrd).abs() < 1e-12);
                }
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "disagreement: {other:?}"),
            }
        }

        #[test]
        fn lowering_threshold_never_adds_flags(
            rates in proptest::collection::vec(0.05f64..1.0, 2..10),
            t_hi in 0.5f64..1.0,
            dt in 0.01f64..0.4
        ) {
            let labeled: Vec<(i32, String, f64, u64)> = rates
                .iter()
                .enumerate()
                .map(|(i, &r)| (i as i32, format!("g{i}"), r, 10))
                .collect();
            let t_lo = (t_hi - dt).max(0.01);
            let hi = subgroup_rows_from_rates(&labeled, t_hi).unwrap();
            let lo = subgroup_rows_from_rates(&labeled, t_lo).unwrap();
            for (h, l) in hi.iter().zip(&lo) {
                prop_assert!(!(l.flagged && !h.flagged));
            }
        }
    }
}
