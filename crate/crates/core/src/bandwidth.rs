//! Leave-one-out least-squares cross-validation for SNN bandwidths.

use crate::error::{domain, Error, Result};
use crate::kernels::Kernel;
use crate::rank::RankValues;
use crate::snn::{default_bandwidth_bounds, snn_fit_columns, Conditioning};

pub const DEFAULT_GRID_SIZE: usize = 25;
/// Minimum number of observations in the conditioning subsample.
pub const MIN_CV_OBSERVATIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub h_star: f64,
    /// Candidate bandwidths, ascending.
    pub grid: Vec<f64>,
    pub cv_scores: Vec<f64>,
    pub window: (f64, f64),
}

/// Geometric grid of `size` points spanning `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (size - 1) as f64;
    (0..size)
        .map(|i| {
            if i == size - 1 {
                hi
            } else {
                lo * (ratio * i as f64).exp()
            }
        })
        .collect()
}

/// Least-squares CV for one response column. See [`cross_validate_columns`].
pub fn cross_validate(
    u: &RankValues,
    w: &[f64],
    cond: Option<&Conditioning>,
    kernel: Kernel,
    grid_size: usize,
) -> Result<CvResult> {
    Ok(cross_validate_columns(u, &[w], cond, kernel, grid_size)?.remove(0))
}

/// Least-squares CV, one bandwidth per response column.
///
/// For each `h` on a geometric grid across [`default_bandwidth_bounds`],
/// `CV(h) = Σ_{k admitted} (w_k - μ̂_{-k}(u_k; h))²` with the leave-one-out
/// fit. A degenerate leave-one-out evaluation contributes the subsample
/// variance of `w` instead of its squared residual. Near-ties in the score
/// resolve to the largest `h`.
pub fn cross_validate_columns(
    u: &RankValues,
    cols: &[&[f64]],
    cond: Option<&Conditioning>,
    kernel: Kernel,
    grid_size: usize,
) -> Result<Vec<CvResult>> {
    if grid_size < 3 {
        return domain(format!("CV grid needs at least 3 points, got {grid_size}"));
    }
    let n = u.len();
    let admitted: Vec<usize> = match cond {
        Some(c) => (0..n).filter(|&i| c.indicator.get(i) == Some(&c.level)).collect(),
        None => (0..n).collect(),
    };
    if admitted.len() < MIN_CV_OBSERVATIONS {
        return domain(format!(
            "CV needs at least {MIN_CV_OBSERVATIONS} admitted observations, got {}",
            admitted.len()
        ));
    }
    let window = default_bandwidth_bounds(n)?;
    let grid = geometric_grid(window.0, window.1, grid_size);

    let m = admitted.len() as f64;
    let penalties: Vec<f64> = cols
        .iter()
        .map(|col| {
            let mean = admitted.iter().map(|&i| col[i]).sum::<f64>() / m;
            admitted.iter().map(|&i| (col[i] - mean).powi(2)).sum::<f64>() / m
        })
        .collect();
    let scales: Vec<f64> = cols
        .iter()
        .map(|col| admitted.iter().map(|&i| col[i] * col[i]).sum::<f64>())
        .collect();

    let mut scores = vec![vec![0.0; grid.len()]; cols.len()];
    let mut all_degenerate = vec![true; grid.len()];
    for (g, &h) in grid.iter().enumerate() {
        let fits = snn_fit_columns(u, cols, cond, h, kernel, true)?;
        all_degenerate[g] = admitted.iter().all(|&i| fits[0].degenerate[i]);
        for (c, fit) in fits.iter().enumerate() {
            scores[c][g] = admitted
                .iter()
                .map(|&i| {
                    if fit.degenerate[i] {
                        penalties[c]
                    } else {
                        (cols[c][i] - fit.fitted[i]).powi(2)
                    }
                })
                .sum();
        }
    }
    if all_degenerate.iter().all(|&d| d) {
        return Err(Error::Bandwidth(
            "every bandwidth candidate gave an empty leave-one-out window".into(),
        ));
    }
    Ok(scores
        .into_iter()
        .zip(scales)
        .map(|(cv_scores, scale)| {
            let best = cv_scores
                .iter()
                .zip(&all_degenerate)
                .filter(|(_, &deg)| !deg)
                .map(|(s, _)| *s)
                .fold(f64::INFINITY, f64::min);
            let tol = 1e-10 * scale + 1e-300;
            let pick = (0..grid.len())
                .rev()
                .find(|&g| !all_degenerate[g] && cv_scores[g] <= best + tol)
                .expect("a finite minimum exists");
            CvResult {
                h_star: grid[pick],
                grid: grid.clone(),
                cv_scores,
                window,
            }
        })
        .collect())
}
