//! Bias mitigation: preprocessing row reweighting and postprocessing
//! per-group decision thresholds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::LabeledTable;

/// Which disparity a threshold policy constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessCriterion {
    /// Max pairwise selection-rate gap.
    DemographicParity,
    /// Max of the FPR and FNR spreads.
    EqualizedOdds,
}

/// Per-cell weight of the reweighting scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellWeight {
    pub code: i32,
    pub label: u8,
    pub weight: f64,
    pub count: u64,
}

/// Row weights making the protected attribute and the label statistically
/// independent in the weighted training set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RowWeights {
    pub attribute: String,
    pub weights: Vec<f64>,
    pub cells: Vec<CellWeight>,
}

/// Kamiran-Calders reweighting: each (attribute, label) cell gets weight
/// P(a) * P(y) / P(a, y).
pub fn reweigh(train: &LabeledTable, attribute: &str) -> Result<RowWeights> {
    let codes = train.table.column_by_name(attribute)?;
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty training data".into()));
    }

    let mut attr_counts: BTreeMap<i32, u64> = BTreeMap::new();
    let mut label_counts = [0u64; 2];
    let mut cell_counts: BTreeMap<(i32, u8), u64> = BTreeMap::new();
    for (i, &code) in codes.iter().enumerate() {
        let y = train.labels[i];
        *attr_counts.entry(code).or_insert(0) += 1;
        label_counts[y as usize] += 1;
        *cell_counts.entry((code, y)).or_insert(0) += 1;
    }
    for (&code, _) in &attr_counts {
        for y in [0u8, 1u8] {
            if !cell_counts.contains_key(&(code, y)) {
                return Err(Error::MetricUndefined(format!(
                    "empty cell: {attribute} code {code} has no rows with label {y}"
                )));
            }
        }
    }

    let n = n as f64;
    let mut cells = Vec::new();
    let mut cell_weight: BTreeMap<(i32, u8), f64> = BTreeMap::new();
    for (&(code, y), &count) in &cell_counts {
        let w = (attr_counts[&code] as f64 / n) * (label_counts[y as usize] as f64 / n)
            / (count as f64 / n);
        cell_weight.insert((code, y), w);
        cells.push(CellWeight { code, label: y, weight: w, count });
    }
    let weights = codes
        .iter()
        .zip(&train.labels)
        .map(|(&code, &y)| cell_weight[&(code, y)])
        .collect();
    Ok(RowWeights { attribute: attribute.to_string(), weights, cells })
}

/// Per-group decision thresholds fitted under a fairness constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub attribute: String,
    pub criterion: FairnessCriterion,
    pub epsilon: f64,
    /// Threshold per attribute code.
    pub thresholds: BTreeMap<i32, f64>,
    /// Accuracy-optimal pooled threshold; used for unseen codes.
    pub fallback_threshold: f64,
    pub achieved_disparity: f64,
    pub accuracy_on_fit: f64,
    /// False when no threshold assignment met the requested epsilon; the
    /// policy then carries the best disparity found.
    pub feasible: bool,
}

const MAX_GRID_POINTS: usize = 101;

/// Candidate thresholds for one score set: the distinct scores themselves,
/// or 101 evenly spaced points once there are more distinct values than
/// that. A top threshold of 1.0 is always included so "select none" stays
/// reachable for scores below 1.
fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut cands = if distinct.len() > MAX_GRID_POINTS {
        (0..MAX_GRID_POINTS).map(|i| i as f64 / (MAX_GRID_POINTS - 1) as f64).collect()
    } else {
        distinct
    };
    if cands.last().map_or(true, |&t| t < 1.0) {
        cands.push(1.0);
    }
    cands
}

/// What one threshold achieves on one group's fit data.
#[derive(Debug, Clone, Copy)]
struct ThresholdPoint {
    threshold: f64,
    selection_rate: f64,
    correct: u64,
    /// None when the group has no actual negatives (positives).
    fpr: Option<f64>,
    fnr: Option<f64>,
}

fn evaluate_group(scores: &[f64], labels: &[u8]) -> Vec<ThresholdPoint> {
    let n = scores.len() as f64;
    let positives = labels.iter().filter(|&&y| y == 1).count() as u64;
    let negatives = labels.len() as u64 - positives;
    candidate_thresholds(scores)
        .into_iter()
        .map(|t| {
            let mut tp = 0u64;
            let mut fp = 0u64;
            for (i, &s) in scores.iter().enumerate() {
                if s >= t {
                    if labels[i] == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let fn_ = positives - tp;
            let tn = negatives - fp;
            ThresholdPoint {
                threshold: t,
                selection_rate: (tp + fp) as f64 / n,
                correct: tp + tn,
                fpr: (negatives > 0).then(|| fp as f64 / negatives as f64),
                fnr: (positives > 0).then(|| fn_ as f64 / positives as f64),
            }
        })
        .collect()
}

struct GroupData {
    code: i32,
    points: Vec<ThresholdPoint>,
}

/// Fit per-group thresholds maximizing fit-set accuracy subject to the
/// criterion's disparity staying within `epsilon`. With `epsilon >= 1` the
/// constraint cannot bind and the policy degenerates to the single pooled
/// accuracy-optimal threshold for every group.
pub fn fit_group_thresholds(
    scores: &[f64],
    labels: &[u8],
    attribute: &[i32],
    criterion: FairnessCriterion,
    epsilon: f64,
) -> Result<ThresholdPolicy> {
    if scores.len() != labels.len() || scores.len() != attribute.len() {
        return Err(Error::InvalidArgument("scores, labels, attribute lengths differ".into()));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("empty fit data".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidArgument(format!("score {bad} outside [0, 1]")));
    }
    if epsilon < 0.0 {
        return Err(Error::InvalidArgument("epsilon must be non-negative".into()));
    }

    let mut codes: Vec<i32> = attribute.to_vec();
    codes.sort_unstable();
    codes.dedup();
    if codes.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "threshold fitting needs at least 2 groups, found {}",
            codes.len()
        )));
    }

    let groups: Vec<GroupData> = codes
        .iter()
        .map(|&code| {
            let rows: Vec<usize> = (0..attribute.len()).filter(|&i| attribute[i] == code).collect();
            let g_scores: Vec<f64> = rows.iter().map(|&i| scores[i]).collect();
            let g_labels: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
            GroupData { code, points: evaluate_group(&g_scores, &g_labels) }
        })
        .collect();

    let n_total = scores.len() as f64;
    let fallback_threshold = pooled_optimal_threshold(scores, labels);

    if epsilon >= 1.0 {
        let chosen: Vec<&ThresholdPoint> = groups
            .iter()
            .map(|g| nearest_point(&g.points, fallback_threshold))
            .collect();
        let correct: u64 = chosen.iter().map(|p| p.correct).sum();
        return Ok(ThresholdPolicy {
            attribute: String::new(),
            criterion,
            epsilon,
            thresholds: groups.iter().map(|g| (g.code, fallback_threshold)).collect(),
            fallback_threshold,
            achieved_disparity: disparity_of(criterion, &chosen),
            accuracy_on_fit: correct as f64 / n_total,
            feasible: true,
        });
    }

    let mut eps = epsilon;
    let mut feasible_at_requested = true;
    let best = loop {
        let found = search_assignment(&groups, criterion, eps);
        if found.is_some() || eps >= 1.0 {
            break found;
        }
        feasible_at_requested = false;
        eps = (eps.max(0.005) * 2.0).min(1.0);
    };
    let (choice, correct, achieved) = best.ok_or_else(|| {
        Error::Train("threshold search found no assignment even unconstrained".into())
    })?;

    Ok(ThresholdPolicy {
        attribute: String::new(),
        criterion,
        epsilon,
        thresholds: groups
            .iter()
            .zip(&choice)
            .map(|(g, &pi)| (g.code, g.points[pi].threshold))
            .collect(),
        fallback_threshold,
        achieved_disparity: achieved,
        accuracy_on_fit: correct as f64 / n_total,
        feasible: feasible_at_requested,
    })
}

fn pooled_optimal_threshold(scores: &[f64], labels: &[u8]) -> f64 {
    let points = evaluate_group(scores, labels);
    let mut best = &points[0];
    for p in &points[1..] {
        // ties keep the earlier (lower) threshold
        if p.correct > best.correct {
            best = p;
        }
    }
    best.threshold
}

fn nearest_point<'a>(points: &'a [ThresholdPoint], threshold: f64) -> &'a ThresholdPoint {
    points
        .iter()
        .min_by(|a, b| {
            (a.threshold - threshold)
                .abs()
                .total_cmp(&(b.threshold - threshold).abs())
        })
        .expect("candidate list is never empty")
}

fn disparity_of(criterion: FairnessCriterion, chosen: &[&ThresholdPoint]) -> f64 {
    match criterion {
        FairnessCriterion::DemographicParity => {
            let max = chosen.iter().map(|p| p.selection_rate).fold(f64::NEG_INFINITY, f64::max);
            let min = chosen.iter().map(|p| p.selection_rate).fold(f64::INFINITY, f64::min);
            max - min
        }
        FairnessCriterion::EqualizedOdds => {
            let spread = |get: fn(&ThresholdPoint) -> Option<f64>| {
                let vals: Vec<f64> = chosen.iter().filter_map(|p| get(p)).collect();
                if vals.len() < 2 {
                    0.0
                } else {
                    vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        - vals.iter().copied().fold(f64::INFINITY, f64::min)
                }
            };
            spread(|p| p.fpr).max(spread(|p| p.fnr))
        }
    }
}

/// Anchor sweep: any feasible assignment's rates lie inside a window of
/// width epsilon whose lower edge is some group's achievable rate, so
/// trying every achievable value as an anchor covers the optimum.
fn search_assignment(
    groups: &[GroupData],
    criterion: FairnessCriterion,
    epsilon: f64,
) -> Option<(Vec<usize>, u64, f64)> {
    const TOL: f64 = 1e-9;
    let mut best: Option<(Vec<usize>, u64, f64)> = None;

    let mut consider = |choice: Vec<usize>, correct: u64| {
        let chosen: Vec<&ThresholdPoint> =
            groups.iter().zip(&choice).map(|(g, &pi)| &g.points[pi]).collect();
        let disparity = disparity_of(criterion, &chosen);
        if disparity > epsilon + TOL {
            return;
        }
        let better = match &best {
            None => true,
            Some((prev_choice, prev_correct, prev_disp)) => {
                // higher accuracy, then smaller disparity, then
                // lexicographically smaller thresholds
                correct > *prev_correct
                    || (correct == *prev_correct
                        && (disparity < *prev_disp - TOL
                            || (disparity < *prev_disp + TOL
                                && lex_less(groups, &choice, prev_choice))))
            }
        };
        if better {
            best = Some((choice, correct, disparity));
        }
    };

    match criterion {
        FairnessCriterion::DemographicParity => {
            let mut anchors: Vec<f64> =
                groups.iter().flat_map(|g| g.points.iter().map(|p| p.selection_rate)).collect();
            anchors.sort_by(f64::total_cmp);
            anchors.dedup();
            for &lo in &anchors {
                let hi = lo + epsilon + TOL;
                let mut choice = Vec::with_capacity(groups.len());
                let mut correct = 0u64;
                let mut ok = true;
                for g in groups {
                    match pick_in_window(&g.points, |p| {
                        p.selection_rate >= lo - TOL && p.selection_rate <= hi
                    }) {
                        Some(pi) => {
                            correct += g.points[pi].correct;
                            choice.push(pi);
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    consider(choice, correct);
                }
            }
        }
        FairnessCriterion::EqualizedOdds => {
            let collect = |get: fn(&ThresholdPoint) -> Option<f64>| {
                let mut vals: Vec<f64> =
                    groups.iter().flat_map(|g| g.points.iter().filter_map(get)).collect();
                vals.sort_by(f64::total_cmp);
                vals.dedup();
                if vals.is_empty() {
                    vals.push(0.0);
                }
                vals
            };
            let fpr_anchors = collect(|p| p.fpr);
            let fnr_anchors = collect(|p| p.fnr);
            for &flo in &fpr_anchors {
                for &nlo in &fnr_anchors {
                    let fhi = flo + epsilon + TOL;
                    let nhi = nlo + epsilon + TOL;
                    let mut choice = Vec::with_capacity(groups.len());
                    let mut correct = 0u64;
                    let mut ok = true;
                    for g in groups {
                        match pick_in_window(&g.points, |p| {
                            p.fpr.map_or(true, |v| v >= flo - TOL && v <= fhi)
                                && p.fnr.map_or(true, |v| v >= nlo - TOL && v <= nhi)
                        }) {
                            Some(pi) => {
                                correct += g.points[pi].correct;
                                choice.push(pi);
                            }
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok {
                        consider(choice, correct);
                    }
                }
            }
        }
    }
    best
}

/// Best-accuracy candidate satisfying the window predicate; ties keep the
/// lower threshold.
fn pick_in_window(points: &[ThresholdPoint], in_window: impl Fn(&ThresholdPoint) -> bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in points.iter().enumerate() {
        if !in_window(p) {
            continue;
        }
        if best.map_or(true, |b| p.correct > points[b].correct) {
            best = Some(i);
        }
    }
    best
}

fn lex_less(groups: &[GroupData], a: &[usize], b: &[usize]) -> bool {
    for (g, (&pa, &pb)) in groups.iter().zip(a.iter().zip(b)) {
        let ta = g.points[pa].threshold;
        let tb = g.points[pb].threshold;
        if ta != tb {
            return ta < tb;
        }
    }
    false
}

/// Label rows as score >= the row's group threshold. Unknown attribute
/// codes fall back to the pooled threshold and are reported.
pub fn apply_thresholds(
    policy: &ThresholdPolicy,
    scores: &[f64],
    attribute: &[i32],
) -> Result<(Vec<u8>, Vec<String>)> {
    if scores.len() != attribute.len() {
        return Err(Error::InvalidArgument("scores and attribute lengths differ".into()));
    }
    let mut unknown: Vec<i32> = Vec::new();
    let labels = scores
        .iter()
        .zip(attribute)
        .map(|(&s, code)| {
            let t = policy.thresholds.get(code).copied().unwrap_or_else(|| {
                if !unknown.contains(code) {
                    unknown.push(*code);
                }
                policy.fallback_threshold
            });
            u8::from(s >= t)
        })
        .collect();
    let warnings = unknown
        .iter()
        .map(|c| format!("attribute code {c} not in policy; used fallback threshold"))
        .collect();
    Ok((labels, warnings))
}
