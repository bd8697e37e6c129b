//! Per-piece note-duration quantization via exact 1-D k-means.
//!
//! Durations are clustered into at most `k` classes by a dynamic program over
//! the sorted distinct values, which is globally optimal for the
//! sum-of-squared-error objective (contiguity in sorted order is a property of
//! the 1-D optimum). No random initialization: the result is a pure function
//! of the input.
//!
//! Equal durations always land in the same class, shorter durations never get
//! a higher class than longer ones, and rescaling every duration by a common
//! factor leaves the classes unchanged, so the classes carry relative rather
//! than absolute duration information.
#![allow(clippy::needless_range_loop)]

use thiserror::Error;

use crate::corpus::Piece;

/// Duration class id in `[0, k)`, ordered by ascending centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DurationClass(pub usize);

impl DurationClass {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Result of clustering one duration list.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster centroids, ascending.
    pub centroids: Vec<f64>,
    /// Class of each input duration, in input order.
    pub assignment: Vec<DurationClass>,
    /// Minimal sum of squared deviations over all partitions into at most
    /// `k` clusters that are contiguous in sorted order.
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuantError {
    #[error("empty duration list")]
    EmptyInput,
    #[error("k must be at least 1, got {0}")]
    InvalidK(usize),
}

/// Exact 1-D k-means over `durations` with at most `k` clusters.
///
/// Deterministic: among equal-cost partitions the one whose sorted-order
/// boundary indices are lexicographically smallest is returned, so splitting
/// a run of equal values (which never lowers the cost) is never chosen.
pub fn kmeans_1d(durations: &[f64], k: usize) -> Result<Clustering, QuantError> {
    if durations.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    if k < 1 {
        return Err(QuantError::InvalidK(k));
    }

    // Collapse to sorted distinct values with multiplicities. Clustering the
    // weighted distinct values keeps equal durations together by construction.
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let mut values: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut value_of_input = vec![0usize; durations.len()];
    for &idx in &order {
        let v = durations[idx];
        if values.last() != Some(&v) {
            values.push(v);
            weights.push(0.0);
        }
        *weights.last_mut().unwrap() += 1.0;
        value_of_input[idx] = values.len() - 1;
    }

    let m = values.len();
    let k_eff = k.min(m);

    // Weighted prefix moments for O(1) segment cost.
    let mut pw = vec![0.0f64; m + 1];
    let mut py = vec![0.0f64; m + 1];
    let mut py2 = vec![0.0f64; m + 1];
    for i in 0..m {
        pw[i + 1] = pw[i] + weights[i];
        py[i + 1] = py[i] + weights[i] * values[i];
        py2[i + 1] = py2[i] + weights[i] * values[i] * values[i];
    }
    // SSE of grouping distinct values [i, j] into one cluster.
    let sse = |i: usize, j: usize| -> f64 {
        if i == j {
            return 0.0;
        }
        let w = pw[j + 1] - pw[i];
        let sy = py[j + 1] - py[i];
        let sy2 = py2[j + 1] - py2[i];
        (sy2 - sy * (sy / w)).max(0.0)
    };

    // rows[r-1][s] = minimal cost of clustering the suffix starting at s into
    // at most r clusters. Row r is built from row r-1 by divide and conquer
    // over the first boundary, exploiting that the (smallest) optimal boundary
    // is monotone in s.
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k_eff);
    let mut row1 = vec![0.0f64; m];
    for s in 0..m {
        row1[s] = sse(s, m - 1);
    }
    rows.push(row1);
    for _ in 1..k_eff {
        let prev = rows.last().unwrap();
        let mut row = vec![f64::INFINITY; m];
        split_row(&sse, prev, &mut row, 0, m - 1, 1, m - 1);
        for s in 0..m {
            let stop = sse(s, m - 1);
            if stop < row[s] {
                row[s] = stop;
            }
        }
        rows.push(row);
    }

    // Reconstruct the lexicographically smallest boundary list achieving the
    // optimum: at every step prefer closing the partition, then the smallest
    // next boundary. Costs are recomputed with the exact expressions used to
    // build the rows, so the equality tests are reliable.
    let mut bounds: Vec<usize> = Vec::new();
    let mut s = 0usize;
    let mut budget = k_eff;
    loop {
        let target = rows[budget - 1][s];
        if sse(s, m - 1) == target {
            break;
        }
        let mut found = None;
        for b in s + 1..m {
            if sse(s, b - 1) + rows[budget - 2][b] == target {
                found = Some(b);
                break;
            }
        }
        let b = found.expect("dp reconstruction must find a boundary");
        bounds.push(b);
        s = b;
        budget -= 1;
    }

    // Segment the distinct values and map back to input order.
    let mut starts = vec![0usize];
    starts.extend_from_slice(&bounds);
    starts.push(m);
    let mut centroids = Vec::with_capacity(starts.len() - 1);
    let mut class_of_value = vec![0usize; m];
    for c in 0..starts.len() - 1 {
        let (lo, hi) = (starts[c], starts[c + 1]);
        let w = pw[hi] - pw[lo];
        let sy = py[hi] - py[lo];
        centroids.push(sy / w);
        for v in lo..hi {
            class_of_value[v] = c;
        }
    }
    let assignment = value_of_input
        .iter()
        .map(|&v| DurationClass(class_of_value[v]))
        .collect();
    let total_cost = rows[k_eff - 1][0];

    Ok(Clustering {
        centroids,
        assignment,
        total_cost,
    })
}

/// Divide-and-conquer fill of one DP row: `row[s] = min over b > s of
/// sse(s, b-1) + prev[b]`, keeping the smallest minimizer on ties.
fn split_row(
    sse: &impl Fn(usize, usize) -> f64,
    prev: &[f64],
    row: &mut [f64],
    s_lo: usize,
    s_hi: usize,
    b_lo: usize,
    b_hi: usize,
) {
    if s_lo > s_hi {
        return;
    }
    let mid = s_lo + (s_hi - s_lo) / 2;
    let mut best = f64::INFINITY;
    let mut best_b = b_hi.max(mid + 1);
    for b in b_lo.max(mid + 1)..=b_hi {
        let cost = sse(mid, b - 1) + prev[b];
        if cost < best {
            best = cost;
            best_b = b;
        }
    }
    row[mid] = best;
    if mid > s_lo {
        split_row(sse, prev, row, s_lo, mid - 1, b_lo, best_b);
    }
    if mid < s_hi {
        split_row(sse, prev, row, mid + 1, s_hi, best_b, b_hi);
    }
}

/// Cluster arbitrary durations after sanitizing and normalizing them.
///
/// Non-positive or non-finite durations are clamped to 1 ms (in seconds)
/// with a warning. Values are divided by their maximum before clustering so
/// the classes depend only on duration ratios; centroids and cost are
/// rescaled back to input units.
pub fn quantize_durations(durations: &[f64], k: usize) -> Result<Clustering, QuantError> {
    if durations.is_empty() {
        return Err(QuantError::EmptyInput);
    }
    let mut clean: Vec<f64> = Vec::with_capacity(durations.len());
    let mut clamped = 0usize;
    for &d in durations {
        if d.is_finite() && d > 0.0 {
            clean.push(d);
        } else {
            clean.push(1e-3);
            clamped += 1;
        }
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} non-positive duration(s) to 1 ms");
    }
    let max = clean.iter().cloned().fold(f64::MIN, f64::max);
    let normalized: Vec<f64> = clean.iter().map(|&d| d / max).collect();
    let mut clustering = kmeans_1d(&normalized, k)?;
    for c in &mut clustering.centroids {
        *c *= max;
    }
    clustering.total_cost *= max * max;
    Ok(clustering)
}

/// One duration class per note of the piece, in note order.
///
/// Classes are computed per piece, never across pieces.
pub fn quantize_piece(piece: &Piece, k: usize) -> Result<Vec<DurationClass>, QuantError> {
    let durations: Vec<f64> = piece.notes.iter().map(|n| n.duration).collect();
    Ok(quantize_durations(&durations, k)?.assignment)
}
