//! Stratified splitting, stratified k-fold plans, and minority-class
//! synthetic oversampling for nominal features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::LabeledTable;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold id per row, in [0, k).
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] == fold).collect()
    }

    pub fn complement_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] != fold).collect()
    }
}

fn class_rows(labels: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let mut neg = Vec::new();
    let mut pos = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y == 1 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (neg, pos)
}

/// Class-proportional train/test split, deterministic for a given seed.
/// Train and test indices come back sorted ascending.
pub fn stratified_split(data: &LabeledTable, train_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_fraction {train_fraction} outside (0, 1)"
        )));
    }
    let (neg, pos) = class_rows(&data.labels);
    for (rows, label) in [(&neg, 0u8), (&pos, 1u8)] {
        if rows.len() < 2 {
            return Err(Error::ClassTooSmall { label, count: rows.len(), need: 2 });
        }
    }

    // global train size rounded half-up, apportioned to the classes by
    // largest remainder so each class stays within one row of proportional
    let n_total = data.n_rows();
    let target = ((train_fraction * n_total as f64 + 0.5).floor() as usize)
        .clamp(2, n_total - 2);
    let quotas = [train_fraction * neg.len() as f64, train_fraction * pos.len() as f64];
    let mut take = [quotas[0].floor() as usize, quotas[1].floor() as usize];
    let mut leftover = target.saturating_sub(take[0] + take[1]);
    let order = if quotas[0] - take[0] as f64 >= quotas[1] - take[1] as f64 { [0, 1] } else { [1, 0] };
    for c in order {
        if leftover > 0 {
            take[c] += 1;
            leftover -= 1;
        }
    }
    take[0] = take[0].clamp(1, neg.len() - 1);
    take[1] = take[1].clamp(1, pos.len() - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (rows, n_train) in [(neg, take[0]), (pos, take[1])] {
        let mut shuffled = rows;
        shuffled.shuffle(&mut rng);
        train.extend_from_slice(&shuffled[..n_train]);
        test.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Stratified k-fold assignment: within each class, shuffled rows are dealt
/// round-robin so per-fold class counts differ by at most one.
pub fn stratified_kfold(data: &LabeledTable, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k = {k}, need k >= 2")));
    }
    let (neg, pos) = class_rows(&data.labels);
    for (rows, label) in [(&neg, 0u8), (&pos, 1u8)] {
        if rows.len() < k {
            return Err(Error::ClassTooSmall { label, count: rows.len(), need: k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; data.n_rows()];
    for rows in [neg, pos] {
        let mut shuffled = rows;
        shuffled.shuffle(&mut rng);
        for (i, &row) in shuffled.iter().enumerate() {
            assignment[row] = i % k;
        }
    }
    Ok(FoldPlan { k, assignment, seed })
}

/// Synthetic minority oversampling for nominal features (SMOTE-N).
///
/// Distance between rows is the Hamming distance over coded columns. Each
/// synthetic row copies, per column, the majority category among a seed
/// minority row and its `k_neighbors` nearest minority neighbours, breaking
/// ties by a seeded uniform choice. Original rows pass through verbatim and
/// the output has equal class counts.
pub fn smote_nominal(train: &LabeledTable, k_neighbors: usize, seed: u64) -> Result<LabeledTable> {
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be at least 1".into()));
    }
    let (neg, pos) = class_rows(&train.labels);
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::ClassTooSmall {
            label: if neg.is_empty() { 0 } else { 1 },
            count: 0,
            need: 1,
        });
    }
    if neg.len() == pos.len() {
        return Ok(train.clone());
    }
    let (minority_rows, minority_label) =
        if pos.len() < neg.len() { (pos.clone(), 1u8) } else { (neg.clone(), 0u8) };
    let majority_count = train.n_rows() - minority_rows.len();
    if minority_rows.len() < k_neighbors + 1 {
        return Err(Error::ClassTooSmall {
            label: minority_label,
            count: minority_rows.len(),
            need: k_neighbors + 1,
        });
    }

    let n_cols = train.table.n_cols();
    let minority: Vec<Vec<i32>> = minority_rows
        .iter()
        .map(|&r| (0..n_cols).map(|c| train.table.column(c)[r]).collect())
        .collect();

    let neighbors = nearest_minority_neighbors(&minority, k_neighbors);

    let n_needed = majority_count - minority_rows.len();
    let mut synthetic: Vec<Vec<i32>> = Vec::with_capacity(n_needed);
    for i in 0..n_needed {
        let seed_idx = i % minority.len();
        let mut row_rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        synthetic.push(synthesize_row(&minority, seed_idx, &neighbors[seed_idx], &mut row_rng));
    }

    // originals verbatim, synthetic rows appended
    let mut columns: Vec<Vec<i32>> = (0..n_cols).map(|c| train.table.column(c).to_vec()).collect();
    for row in &synthetic {
        for (c, col) in columns.iter_mut().enumerate() {
            col.push(row[c]);
        }
    }
    let mut labels = train.labels.clone();
    labels.extend(std::iter::repeat(minority_label).take(n_needed));

    let table = crate::table::CodedTable::new(train.table.variables().to_vec(), columns)?;
    LabeledTable::new(table, labels, train.cohort)
}

/// For each minority row, the indices (into `minority`) of its `k` nearest
/// neighbours by Hamming distance, ties broken by lower index.
fn nearest_minority_neighbors(minority: &[Vec<i32>], k: usize) -> Vec<Vec<usize>> {
    let n = minority.len();
    let mut result = Vec::with_capacity(n);
    for i in 0..n {
        let mut dists: Vec<(usize, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (hamming(&minority[i], &minority[j]), j))
            .collect();
        dists.sort_unstable();
        result.push(dists.into_iter().take(k).map(|(_, j)| j).collect());
    }
    result
}

fn hamming(a: &[i32], b: &[i32]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn synthesize_row(
    minority: &[Vec<i32>],
    seed_idx: usize,
    neighbor_idx: &[usize],
    rng: &mut impl Rng,
) -> Vec<i32> {
    let n_cols = minority[seed_idx].len();
    let mut row = Vec::with_capacity(n_cols);
    for c in 0..n_cols {
        let mut counts: Vec<(i32, usize)> = Vec::new();
        let mut bump = |v: i32| match counts.iter_mut().find(|(code, _)| *code == v) {
            Some((_, n)) => *n += 1,
            None => counts.push((v, 1)),
        };
        bump(minority[seed_idx][c]);
        for &j in neighbor_idx {
            bump(minority[j][c]);
        }
        let best = counts.iter().map(|&(_, n)| n).max().unwrap();
        let tied: Vec<i32> = counts.iter().filter(|&&(_, n)| n == best).map(|&(v, _)| v).collect();
        row.push(tied[rng.gen_range(0..tied.len())]);
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Role, VariableSpec};
    use crate::table::{CodedTable, Cohort};

    fn labeled(columns: Vec<Vec<i32>>, labels: Vec<u8>) -> LabeledTable {
        let vars: Vec<VariableSpec> = (0..columns.len())
            .map(|i| VariableSpec {
                name: format!("V{i}"),
                display: None,
                role: Role::Feature,
                categories: (0..10).map(|c| (c, format!("c{c}"))).collect(),
                code_ranges: vec![],
                missing_codes: Default::default(),
                day_bands: None,
            })
            .collect();
        LabeledTable::new(CodedTable::new(vars, columns).unwrap(), labels, Cohort::Inpatient).unwrap()
    }

    fn ten_rows() -> LabeledTable {
        labeled(vec![vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9]], vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0])
    }

    #[test]
    fn split_is_proportional_and_deterministic() {
        let data = ten_rows();
        let s1 = stratified_split(&data, 0.7, 42).unwrap();
        let s2 = stratified_split(&data, 0.7, 42).unwrap();
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.test, s2.test);
        assert_eq!(s1.train.len(), 7);
        let pos_in_train = s1.train.iter().filter(|&&r| data.labels[r] == 1).count();
        assert!(pos_in_train == 3 || pos_in_train == 4);
        // disjoint cover
        let mut all: Vec<usize> = s1.train.iter().chain(&s1.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_tiny_class() {
        let data = labeled(vec![vec![0, 1, 2]], vec![1, 0, 0]);
        assert!(matches!(
            stratified_split(&data, 0.7, 1).unwrap_err(),
            Error::ClassTooSmall { label: 1, .. }
        ));
    }

    #[test]
    fn kfold_balances_classes_exactly_when_divisible() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let data = labeled(vec![(0..20).map(|i| i % 7).collect()], labels);
        let plan = stratified_kfold(&data, 10, 3).unwrap();
        for fold in 0..10 {
            let rows = plan.fold_rows(fold);
            assert_eq!(rows.len(), 2);
            let pos = rows.iter().filter(|&&r| data.labels[r] == 1).count();
            assert_eq!(pos, 1);
        }
    }

    #[test]
    fn kfold_partitions_rows() {
        let labels: Vec<u8> = (0..23).map(|i| u8::from(i % 3 == 0)).collect();
        let data = labeled(vec![(0..23).collect()], labels);
        let plan = stratified_kfold(&data, 4, 9).unwrap();
        let mut all = Vec::new();
        for fold in 0..4 {
            all.extend(plan.fold_rows(fold));
        }
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_rejects_class_smaller_than_k() {
        let data = labeled(vec![vec![0, 1, 2, 3]], vec![1, 1, 0, 0]);
        assert!(stratified_kfold(&data, 3, 0).is_err());
    }

    #[test]
    fn smote_balances_to_majority_count() {
        let mut cols = vec![Vec::new(), Vec::new()];
        let mut labels = Vec::new();
        for i in 0..30 {
            cols[0].push(i % 3);
            cols[1].push(i % 2);
            labels.push(0);
        }
        for i in 0..10 {
            cols[0].push(5 + (i % 2));
            cols[1].push(7);
            labels.push(1);
        }
        let data = labeled(cols, labels);
        let out = smote_nominal(&data, 3, 11).unwrap();
        let (neg, pos) = out.class_counts();
        assert_eq!((neg, pos), (30, 30));
        // originals verbatim
        for c in 0..2 {
            assert_eq!(&out.table.column(c)[..40], data.table.column(c));
        }
        // synthetic values only use minority categories
        for &v in &out.table.column(1)[40..] {
            assert_eq!(v, 7);
        }
        for &v in &out.table.column(0)[40..] {
            assert!(v == 5 || v == 6);
        }
    }

    #[test]
    fn smote_balanced_input_unchanged() {
        let data = labeled(vec![vec![0, 1, 2, 3]], vec![1, 1, 0, 0]);
        let out = smote_nominal(&data, 1, 5).unwrap();
        assert_eq!(out.table.column(0), data.table.column(0));
        assert_eq!(out.labels, data.labels);
    }

    #[test]
    fn smote_deterministic() {
        let mut cols = vec![Vec::new()];
        let mut labels = Vec::new();
        for i in 0..40 {
            cols[0].push(i % 5);
            labels.push(u8::from(i < 8));
        }
        let data = labeled(cols, labels);
        let a = smote_nominal(&data, 3, 77).unwrap();
        let b = smote_nominal(&data, 3, 77).unwrap();
        assert_eq!(a.table.column(0), b.table.column(0));
    }

    #[test]
    fn smote_rejects_small_minority() {
        let data = labeled(vec![vec![0, 1, 2, 3, 4, 5]], vec![1, 1, 0, 0, 0, 0]);
        assert!(smote_nominal(&data, 5, 0).is_err());
    }

    #[test]
    fn smote_synthetic_values_come_from_neighbor_multiset() {
        // replay the neighbour search on the output
        let mut cols = vec![Vec::new(), Vec::new()];
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..50 {
            cols[0].push(rng.gen_range(0..4));
            cols[1].push(rng.gen_range(0..3));
            labels.push(0);
        }
        for _ in 0..12 {
            cols[0].push(rng.gen_range(0..4));
            cols[1].push(rng.gen_range(0..3));
            labels.push(1);
        }
        let data = labeled(cols, labels);
        let k = 4;
        let out = smote_nominal(&data, k, 99).unwrap();

        let minority: Vec<Vec<i32>> = (50..62)
            .map(|r| vec![data.table.column(0)[r], data.table.column(1)[r]])
            .collect();
        let neighbors = nearest_minority_neighbors(&minority, k);
        for (i, r) in (62..out.n_rows()).enumerate() {
            let seed_idx = i % minority.len();
            for c in 0..2 {
                let v = out.table.column(c)[r];
                let mut pool: Vec<i32> = vec![minority[seed_idx][c]];
                pool.extend(neighbors[seed_idx].iter().map(|&j| minority[j][c]));
                assert!(pool.contains(&v), "synthetic value {v} not in neighbour pool {pool:?}");
            }
        }
    }
}
