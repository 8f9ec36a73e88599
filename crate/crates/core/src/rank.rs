//! Empirical-CDF transforms of single-index values.
//!
//! The full-sample transform maps `v_k` to `#{i : v_i <= v_k} / n`; the
//! leave-one-out transform maps `v_i` to `#{j != i : v_j <= v_i} / (n - 1)`.
//! Ties share the upper (`<=`) count.

use nalgebra::DMatrix;

use crate::error::{domain, Result};

/// Single-index values `x_i'θ`, one per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexValues {
    values: Vec<f64>,
}

impl IndexValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return domain(format!("need at least 2 index values, got {}", values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("index value {i} is not finite"));
        }
        Ok(Self { values })
    }

    /// `x * theta` for a row-per-observation design.
    pub fn from_design(x: &DMatrix<f64>, theta: &[f64]) -> Result<Self> {
        if x.ncols() != theta.len() {
            return domain(format!(
                "design has {} columns but theta has {} entries",
                x.ncols(),
                theta.len()
            ));
        }
        let values = (0..x.nrows())
            .map(|i| {
                theta
                    .iter()
                    .enumerate()
                    .map(|(j, t)| x[(i, j)] * t)
                    .sum::<f64>()
            })
            .collect();
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Rank-transformed index values `u_i = counts_i / divisor`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankValues {
    pub u: Vec<f64>,
    pub leave_one_out: bool,
    counts: Vec<usize>,
    divisor: usize,
    distinct: bool,
}

impl RankValues {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Integer numerators of `u`.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn divisor(&self) -> usize {
        self.divisor
    }

    /// True when no two observations share a rank, i.e. the ranks sit on the
    /// regular grid `{c / divisor}` with consecutive integer numerators.
    pub fn is_tie_free(&self) -> bool {
        self.distinct
    }

    /// Ranks built directly from `u` values (evaluation grids, tests).
    /// Integer numerators are unavailable, so the tie-free grid fast path is
    /// disabled.
    pub fn from_raw(u: Vec<f64>) -> Result<Self> {
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return domain(format!("rank value {i} is not finite"));
        }
        let n = u.len();
        Ok(Self {
            u,
            leave_one_out: false,
            counts: Vec::new(),
            divisor: n,
            distinct: false,
        })
    }
}

/// `#{i : v_i <= v_k}` for every `k`, plus whether all values are distinct.
fn upper_counts(values: &[f64]) -> (Vec<usize>, bool) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut counts = vec![0usize; n];
    let mut distinct = true;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        if end - start > 1 {
            distinct = false;
        }
        for &idx in &order[start..end] {
            counts[idx] = end;
        }
        start = end;
    }
    (counts, distinct)
}

/// Full-sample empirical-CDF ranks, divisor `n`.
pub fn ranks(ix: &IndexValues) -> RankValues {
    let n = ix.len();
    let (counts, distinct) = upper_counts(ix.values());
    let u = counts.iter().map(|&c| c as f64 / n as f64).collect();
    RankValues {
        u,
        leave_one_out: false,
        counts,
        divisor: n,
        distinct,
    }
}

/// Leave-one-out ranks, divisor `n - 1`, excluding the observation itself.
pub fn ranks_loo(ix: &IndexValues) -> RankValues {
    let n = ix.len();
    let (mut counts, distinct) = upper_counts(ix.values());
    for c in counts.iter_mut() {
        *c -= 1;
    }
    let u = counts.iter().map(|&c| c as f64 / (n - 1) as f64).collect();
    RankValues {
        u,
        leave_one_out: true,
        counts,
        divisor: n - 1,
        distinct,
    }
}
