//! Distances and overlaps between batches of spin configurations.

use super::batch::SampleBatch;
use crate::error::{Error, Result};

/// Largest batch accepted by [`empirical_w2`].
pub const W2_MAX_BATCH: usize = 2000;

/// Minimum-cost perfect matching on a square integer cost matrix
/// (shortest augmenting paths with potentials, `O(M^3)`).
///
/// Returns `assignment[row] = column`.
pub fn hungarian(cost: &[i64], size: usize) -> Vec<usize> {
    debug_assert_eq!(cost.len(), size * size);
    const INF: i64 = i64::MAX / 4;
    // 1-based potentials and matching, column 0 is the virtual root
    let mut u = vec![0i64; size + 1];
    let mut v = vec![0i64; size + 1];
    let mut owner = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    let mut minv = vec![INF; size + 1];
    let mut used = vec![false; size + 1];
    for row in 1..=size {
        owner[0] = row;
        let mut col0 = 0;
        minv.iter_mut().for_each(|m| *m = INF);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[col0] = true;
            let r = owner[col0];
            let mut delta = INF;
            let mut col1 = 0;
            let base = (r - 1) * size;
            for c in 1..=size {
                if !used[c] {
                    let cur = cost[base + c - 1] - u[r] - v[c];
                    if cur < minv[c] {
                        minv[c] = cur;
                        way[c] = col0;
                    }
                    if minv[c] < delta {
                        delta = minv[c];
                        col1 = c;
                    }
                }
            }
            for c in 0..=size {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; size];
    for c in 1..=size {
        if owner[c] != 0 {
            assignment[owner[c] - 1] = c - 1;
        }
    }
    assignment
}

fn hamming_matrix(a: &SampleBatch, b: &SampleBatch) -> Vec<i64> {
    let pa = a.packed_words();
    let pb = b.packed_words();
    let mut cost = Vec::with_capacity(pa.len() * pb.len());
    for x in &pa {
        for y in &pb {
            cost.push(x.iter().zip(y).map(|(p, q)| i64::from((p ^ q).count_ones())).sum());
        }
    }
    cost
}

/// Normalized `W_2` between the empirical measures of two equal-size batches.
///
/// For spins `||x - y||^2 / n = 4 d_H(x, y) / n`, so the optimal assignment
/// is computed exactly on integer Hamming costs.
pub fn empirical_w2(a: &SampleBatch, b: &SampleBatch) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
    }
    if a.len() > W2_MAX_BATCH {
        return Err(Error::CapExceeded { what: "W2 batch size", value: a.len(), cap: W2_MAX_BATCH });
    }
    if a.is_empty() {
        return Err(Error::Domain("W2 needs nonempty batches".into()));
    }
    let m = a.len();
    let cost = hamming_matrix(a, b);
    let assignment = hungarian(&cost, m);
    let total: i64 = assignment.iter().enumerate().map(|(r, &c)| cost[r * m + c]).sum();
    Ok((4.0 * total as f64 / (a.n() as f64 * m as f64)).sqrt())
}

fn second_moment_counts(batch: &SampleBatch) -> Vec<i64> {
    let n = batch.n();
    let mut acc = vec![0i64; n * n];
    for x in batch.samples() {
        for i in 0..n {
            let xi = i64::from(x[i]);
            for j in 0..n {
                acc[i * n + j] += xi * i64::from(x[j]);
            }
        }
    }
    acc
}

/// Mean of `(<x, x'> / n)^2` over all cross pairs.
///
/// `sum_{a,b} <x_a, x_b>^2 = <A, B>_F` with `A = sum_a x_a x_a^T`, computed in
/// integers.
pub fn overlap_moment(a: &SampleBatch, b: &SampleBatch) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Domain("overlap moment needs nonempty batches".into()));
    }
    if a.n() != b.n() {
        return Err(Error::DimensionMismatch { expected: a.n(), got: b.n() });
    }
    let sa = second_moment_counts(a);
    let sb = second_moment_counts(b);
    let inner: i128 = sa.iter().zip(&sb).map(|(x, y)| i128::from(*x) * i128::from(*y)).sum();
    let n = a.n() as f64;
    Ok(inner as f64 / (a.len() as f64 * b.len() as f64 * n * n))
}
