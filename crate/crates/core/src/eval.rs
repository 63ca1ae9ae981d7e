//! External clustering-quality metrics: Adjusted Rand Index, homogeneity and
//! completeness.
//!
//! All three are computed from the contingency table of the two labelings.
//! Pair counts use `u128` so that `C(n, 2)` products cannot overflow for any
//! realistic `n`; entropies use natural logarithms.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Co-occurrence counts of two labelings of the same points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContingencyTable<T: Hash + Eq> {
    pub cells: HashMap<(T, T), u64>,
    pub row_sums: HashMap<T, u64>,
    pub col_sums: HashMap<T, u64>,
    pub n: u64,
}

const SHARD: usize = 1 << 16;

fn merge<K: Hash + Eq>(mut into: HashMap<K, u64>, from: HashMap<K, u64>) -> HashMap<K, u64> {
    if into.len() < from.len() {
        return merge(from, into);
    }
    for (k, v) in from {
        *into.entry(k).or_insert(0) += v;
    }
    into
}

/// Counts `n_ij`; rows are labels of `a`, columns labels of `b`.
pub fn contingency<T>(a: &[T], b: &[T]) -> Result<ContingencyTable<T>>
where
    T: Hash + Eq + Copy + Send + Sync,
{
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "labelings differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let cells = a
        .par_chunks(SHARD)
        .zip(b.par_chunks(SHARD))
        .map(|(ca, cb)| {
            let mut m: HashMap<(T, T), u64> = HashMap::new();
            for (&x, &y) in ca.iter().zip(cb) {
                *m.entry((x, y)).or_insert(0) += 1;
            }
            m
        })
        .reduce(HashMap::new, merge);
    let mut row_sums = HashMap::new();
    let mut col_sums = HashMap::new();
    for (&(x, y), &c) in &cells {
        *row_sums.entry(x).or_insert(0) += c;
        *col_sums.entry(y).or_insert(0) += c;
    }
    Ok(ContingencyTable {
        cells,
        row_sums,
        col_sums,
        n: a.len() as u64,
    })
}

#[inline]
fn pairs(c: u64) -> u128 {
    let c = c as u128;
    c * c.saturating_sub(1) / 2
}

/// Adjusted Rand Index. Symmetric; 1 for identical partitions, 0 in
/// expectation for independent random ones.
pub fn ari<T>(a: &[T], b: &[T]) -> Result<f64>
where
    T: Hash + Eq + Copy + Send + Sync,
{
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two points"));
    }
    let table = contingency(a, b)?;
    let index: u128 = table.cells.values().map(|&c| pairs(c)).sum();
    let sum_a: u128 = table.row_sums.values().map(|&c| pairs(c)).sum();
    let sum_b: u128 = table.col_sums.values().map(|&c| pairs(c)).sum();
    let total = pairs(table.n);
    Ok(adjusted_index(index, sum_a, sum_b, total))
}

/// `(index - expected) / (max - expected)` with
/// `expected = sum_a * sum_b / total` and `max = (sum_a + sum_b) / 2`.
/// Scaled by `2 * total` and evaluated in integers when that fits, so simple
/// cases such as -1/2 come out exact.
fn adjusted_index(index: u128, sum_a: u128, sum_b: u128, total: u128) -> f64 {
    let exact = || -> Option<f64> {
        let (index, sum_a, sum_b, total) = (
            i128::try_from(index).ok()?,
            i128::try_from(sum_a).ok()?,
            i128::try_from(sum_b).ok()?,
            i128::try_from(total).ok()?,
        );
        let prod = sum_a.checked_mul(sum_b)?.checked_mul(2)?;
        let num = index.checked_mul(total)?.checked_mul(2)?.checked_sub(prod)?;
        let den = total.checked_mul(sum_a.checked_add(sum_b)?)?.checked_sub(prod)?;
        Some(if den == 0 { 1.0 } else { num as f64 / den as f64 })
    };
    exact().unwrap_or_else(|| {
        let expected = (sum_a as f64) * (sum_b as f64) / total as f64;
        let denom = (sum_a as f64 + sum_b as f64) / 2.0 - expected;
        if denom == 0.0 {
            1.0
        } else {
            (index as f64 - expected) / denom
        }
    })
}

fn entropy<K>(counts: &HashMap<K, u64>, n: u64) -> f64 {
    let n = n as f64;
    counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `H(X | Y)` where `X` indexes the first key component, `Y` the second.
fn conditional_entropy<T: Hash + Eq + Copy>(
    cells: impl Iterator<Item = ((T, T), u64)>,
    given_sums: &HashMap<T, u64>,
    n: u64,
    given_is_second: bool,
) -> f64 {
    let n = n as f64;
    cells
        .map(|((x, y), c)| {
            let given = if given_is_second { y } else { x };
            let c = c as f64;
            -(c / n) * (c / given_sums[&given] as f64).ln()
        })
        .sum()
}

/// `(homogeneity, completeness)` of `pred` against `truth`.
///
/// Homogeneity is `1 - H(truth | pred) / H(truth)`, completeness is
/// `1 - H(pred | truth) / H(pred)`; each is 1 when its denominator entropy is 0.
pub fn homogeneity_completeness<T>(pred: &[T], truth: &[T]) -> Result<(f64, f64)>
where
    T: Hash + Eq + Copy + Send + Sync,
{
    let table = contingency(pred, truth)?;
    if table.n == 0 {
        return Ok((1.0, 1.0));
    }
    let h_pred = entropy(&table.row_sums, table.n);
    let h_truth = entropy(&table.col_sums, table.n);
    let cells = || table.cells.iter().map(|(&k, &v)| (k, v));
    let h_truth_given_pred = conditional_entropy(cells(), &table.row_sums, table.n, false);
    let h_pred_given_truth = conditional_entropy(cells(), &table.col_sums, table.n, true);

    let score = |cond: f64, h: f64| {
        if h == 0.0 {
            1.0
        } else {
            (1.0 - cond / h).clamp(0.0, 1.0)
        }
    };
    Ok((
        score(h_truth_given_pred, h_truth),
        score(h_pred_given_truth, h_pred),
    ))
}
