//! Symmetrized nearest-neighborhood (SNN) kernel regression.
//!
//! The regressor is the rank-transformed index `u`, so the smoother runs on an
//! (approximately) uniform design on `[0, 1]`:
//!
//! ```text
//! fitted_k = Σ_i 1{d_i = d} w_i K_h(u_i - u_k) / Σ_i 1{d_i = d} K_h(u_i - u_k)
//! ```
//!
//! With `loo = true` the `i = k` term is dropped from both sums. Evaluations
//! whose denominator falls below [`DENOMINATOR_FLOOR`] are marked degenerate
//! and filled with the nearest eligible response.

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::kernels::Kernel;
use crate::rank::RankValues;

/// Kernel-sum floor below which an evaluation is treated as empty.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Scale constant for [`default_bandwidth_bounds`].
pub const WINDOW_CONSTANT: f64 = 8.0;

/// Restricts a fit to observations with `indicator[i] == level`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditioning {
    pub indicator: Vec<bool>,
    pub level: bool,
}

impl Conditioning {
    pub fn new(indicator: Vec<bool>, level: bool) -> Self {
        Self { indicator, level }
    }

    #[inline]
    fn admits(&self, i: usize) -> bool {
        self.indicator[i] == self.level
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnFit {
    /// Fitted conditional mean at each evaluation point.
    pub fitted: Vec<f64>,
    pub bandwidth: f64,
    pub denominator_floor_hits: usize,
    /// Per evaluation point: the nearest-neighbor fallback was used.
    pub degenerate: Vec<bool>,
    pub conditioning: Option<Conditioning>,
}

/// Eligible observations sorted by rank, shared by every column of a fit.
struct Design<'a> {
    u: &'a RankValues,
    eligible: Vec<bool>,
    /// Eligible observation indices, sorted by `u`.
    sorted: Vec<usize>,
    sorted_u: Vec<f64>,
}

impl<'a> Design<'a> {
    fn new(u: &'a RankValues, cond: Option<&Conditioning>) -> Result<Self> {
        let n = u.len();
        if n < 2 {
            return domain("SNN fit needs at least 2 observations");
        }
        let eligible: Vec<bool> = match cond {
            Some(c) => {
                if c.indicator.len() != n {
                    return domain(format!(
                        "conditioning indicator has length {}, expected {n}",
                        c.indicator.len()
                    ));
                }
                (0..n).map(|i| c.admits(i)).collect()
            }
            None => vec![true; n],
        };
        let count = eligible.iter().filter(|&&e| e).count();
        if count < 2 {
            return domain(format!(
                "conditioning level leaves {count} observations, need at least 2"
            ));
        }
        let mut sorted: Vec<usize> = (0..n).filter(|&i| eligible[i]).collect();
        sorted.sort_by(|&a, &b| u.u[a].total_cmp(&u.u[b]).then(a.cmp(&b)));
        let sorted_u = sorted.iter().map(|&i| u.u[i]).collect();
        Ok(Self {
            u,
            eligible,
            sorted,
            sorted_u,
        })
    }

    /// Nearest eligible observation(s) to `e`, averaged over exact ties.
    fn nearest(&self, e: f64, exclude: Option<usize>, col: &[f64]) -> Option<f64> {
        let start = self.sorted_u.partition_point(|&v| v < e);
        // (best distance, sum of tied responses, number of ties)
        let mut state = (f64::INFINITY, 0.0, 0usize);
        let consider = |pos: usize, state: &mut (f64, f64, usize)| {
            let i = self.sorted[pos];
            if Some(i) == exclude {
                return;
            }
            let dist = (self.sorted_u[pos] - e).abs();
            if dist < state.0 {
                *state = (dist, col[i], 1);
            } else if dist == state.0 {
                state.1 += col[i];
                state.2 += 1;
            }
        };
        // Walk outward until both directions are strictly farther than the best.
        let mut left = start;
        while left > 0 {
            left -= 1;
            if (e - self.sorted_u[left]) > state.0 {
                break;
            }
            consider(left, &mut state);
        }
        let mut right = start;
        while right < self.sorted.len() {
            if (self.sorted_u[right] - e) > state.0 {
                break;
            }
            consider(right, &mut state);
            right += 1;
        }
        let (_, acc, hits) = state;
        (hits > 0).then(|| acc / hits as f64)
    }
}

fn check_inputs(u: &RankValues, cols: &[&[f64]], h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return domain(format!("bandwidth must be positive and finite, got {h}"));
    }
    for (c, col) in cols.iter().enumerate() {
        if col.len() != u.len() {
            return domain(format!(
                "response column {c} has length {}, ranks have length {}",
                col.len(),
                u.len()
            ));
        }
    }
    Ok(())
}

/// Kernel sums `(denominator, numerators...)` at the sample's own rank values,
/// using the tie-free regular-grid layout: `K_h` depends only on the integer
/// offset between rank numerators.
fn sums_on_grid(
    design: &Design<'_>,
    cols: &[&[f64]],
    h: f64,
    kernel: Kernel,
    loo: bool,
) -> Vec<f64> {
    let u = design.u;
    let n = u.len();
    let stride = cols.len() + 1;
    let divisor = u.divisor() as f64;
    let base = u.counts().iter().copied().min().unwrap_or(0);

    // Position-major layout: slot p holds the observation with count base + p.
    let mut slot_obs = vec![0usize; n];
    for (i, &c) in u.counts().iter().enumerate() {
        slot_obs[c - base] = i;
    }
    let mut packed = vec![0.0; n * stride];
    for (p, &i) in slot_obs.iter().enumerate() {
        if design.eligible[i] {
            packed[p * stride] = 1.0;
            for (c, col) in cols.iter().enumerate() {
                packed[p * stride + c + 1] = col[i];
            }
        }
    }
    let reach = ((h * kernel.support_halfwidth() * divisor).ceil() as usize).min(n);
    let weights: Vec<f64> = (0..=reach)
        .map(|j| kernel.eval((j as f64 / divisor) / h) / h)
        .collect();

    let mut out = vec![0.0; n * stride];
    out.par_chunks_mut(stride)
        .enumerate()
        .with_min_len(64)
        .for_each(|(p, acc)| {
            let lo = p.saturating_sub(reach);
            let hi = (p + reach).min(n - 1);
            for q in lo..=hi {
                if loo && q == p {
                    continue;
                }
                let w = weights[q.abs_diff(p)];
                if w == 0.0 {
                    continue;
                }
                let row = &packed[q * stride..(q + 1) * stride];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += w * v;
                }
            }
        });
    // Back to observation order.
    let mut sums = vec![0.0; n * stride];
    for (p, &i) in slot_obs.iter().enumerate() {
        sums[i * stride..(i + 1) * stride].copy_from_slice(&out[p * stride..(p + 1) * stride]);
    }
    sums
}

/// Kernel sums at arbitrary evaluation points by windowed search over the
/// sorted eligible ranks. `own[e]` names the observation that sits at
/// evaluation point `e` (excluded when `loo`).
fn sums_general(
    design: &Design<'_>,
    cols: &[&[f64]],
    points: &[f64],
    own: Option<&[usize]>,
    h: f64,
    kernel: Kernel,
    loo: bool,
) -> Vec<f64> {
    let stride = cols.len() + 1;
    let radius = h * kernel.support_halfwidth();
    let mut out = vec![0.0; points.len() * stride];
    out.par_chunks_mut(stride)
        .enumerate()
        .with_min_len(64)
        .for_each(|(e, acc)| {
            let at = points[e];
            let exclude = if loo { own.map(|o| o[e]) } else { None };
            let lo = design.sorted_u.partition_point(|&v| v < at - radius);
            let hi = design.sorted_u.partition_point(|&v| v <= at + radius);
            for pos in lo..hi {
                let i = design.sorted[pos];
                if Some(i) == exclude {
                    continue;
                }
                let w = kernel.eval((design.sorted_u[pos] - at) / h) / h;
                if w == 0.0 {
                    continue;
                }
                acc[0] += w;
                for (c, col) in cols.iter().enumerate() {
                    acc[c + 1] += w * col[i];
                }
            }
        });
    out
}

fn finish(
    design: &Design<'_>,
    cols: &[&[f64]],
    sums: &[f64],
    points: &[f64],
    own: Option<&[usize]>,
    h: f64,
    loo: bool,
    cond: Option<&Conditioning>,
) -> Result<Vec<SnnFit>> {
    let stride = cols.len() + 1;
    let m = points.len();
    let mut fitted = vec![vec![0.0; m]; cols.len()];
    let mut degenerate = vec![false; m];
    for e in 0..m {
        let den = sums[e * stride];
        if den >= DENOMINATOR_FLOOR {
            for c in 0..cols.len() {
                fitted[c][e] = sums[e * stride + c + 1] / den;
            }
        } else {
            degenerate[e] = true;
            let exclude = if loo { own.map(|o| o[e]) } else { None };
            for (c, col) in cols.iter().enumerate() {
                fitted[c][e] = design.nearest(points[e], exclude, col).ok_or_else(|| {
                    Error::Domain("no eligible neighbor for fallback".to_string())
                })?;
            }
        }
    }
    let hits = degenerate.iter().filter(|&&d| d).count();
    Ok(fitted
        .into_iter()
        .map(|f| SnnFit {
            fitted: f,
            bandwidth: h,
            denominator_floor_hits: hits,
            degenerate: degenerate.clone(),
            conditioning: cond.cloned(),
        })
        .collect())
}

/// SNN fits of several response columns that share ranks, conditioning and
/// bandwidth, evaluated at every observation's own rank value.
pub fn snn_fit_columns(
    u: &RankValues,
    cols: &[&[f64]],
    cond: Option<&Conditioning>,
    h: f64,
    kernel: Kernel,
    loo: bool,
) -> Result<Vec<SnnFit>> {
    check_inputs(u, cols, h)?;
    let design = Design::new(u, cond)?;
    let own: Vec<usize> = (0..u.len()).collect();
    let sums = if u.is_tie_free() {
        sums_on_grid(&design, cols, h, kernel, loo)
    } else {
        sums_general(&design, cols, &u.u, Some(&own), h, kernel, loo)
    };
    finish(&design, cols, &sums, &u.u, Some(&own), h, loo, cond)
}

/// SNN fit of `w` on `u`, evaluated at the sample's own rank values.
pub fn snn_fit(
    u: &RankValues,
    w: &[f64],
    cond: Option<&Conditioning>,
    h: f64,
    kernel: Kernel,
    loo: bool,
) -> Result<SnnFit> {
    Ok(snn_fit_columns(u, &[w], cond, h, kernel, loo)?.remove(0))
}

/// SNN fit evaluated on an explicit grid of points (no leave-one-out).
pub fn snn_fit_at(
    u: &RankValues,
    w: &[f64],
    cond: Option<&Conditioning>,
    h: f64,
    kernel: Kernel,
    points: &[f64],
) -> Result<SnnFit> {
    check_inputs(u, &[w], h)?;
    if points.iter().any(|p| !p.is_finite()) {
        return domain("evaluation points must be finite");
    }
    let design = Design::new(u, cond)?;
    let sums = sums_general(&design, &[w], points, None, h, kernel, false);
    Ok(finish(&design, &[w], &sums, points, None, h, false, cond)?.remove(0))
}

/// Kernel mass `∫ K(v) dv` over `[-u/h, (1-u)/h] ∩ support`: the fraction
/// of the kernel window at `u` that falls inside `[0, 1]`.
pub fn xi_boundary(u: f64, h: f64, kernel: Kernel) -> f64 {
    let s = kernel.support_halfwidth();
    kernel.mass((-u / h).max(-s), ((1.0 - u) / h).min(s))
}

/// Admissible bandwidth window `(h_min, h_max)` for sample size `n`.
///
/// `h_min = n^{-1/4} log(n) / c` and `h_max = c n^{-1/6} / log(n)` with
/// `c = WINDOW_CONSTANT`, so `√n h³ → 0` and `h² √n / (-log h) → ∞`. The upper end
/// is capped at 1; if the two ends cross, a narrow window around their
/// geometric mean is returned.
pub fn default_bandwidth_bounds(n: usize) -> Result<(f64, f64)> {
    if n < 10 {
        return domain(format!("bandwidth window needs n >= 10, got {n}"));
    }
    let nf = n as f64;
    let log_n = nf.ln();
    let lo = nf.powf(-0.25) * log_n / WINDOW_CONSTANT;
    let hi = (WINDOW_CONSTANT * nf.powf(-1.0 / 6.0) / log_n).min(1.0);
    if lo < hi {
        Ok((lo, hi))
    } else {
        let mid = (lo * hi.max(f64::MIN_POSITIVE)).sqrt().min(0.8);
        Ok((mid / 1.25, mid * 1.25))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::{ranks, IndexValues};

    #[test]
    fn two_point_hand_value() {
        let u = RankValues::from_raw(vec![0.5, 1.0]).unwrap();
        let fit = snn_fit(&u, &[1.0, 3.0], None, 1.0, Kernel::Quartic, false).unwrap();
        let expected = (0.9375 + 3.0 * 0.52734375) / (0.9375 + 0.52734375);
        assert!((fit.fitted[0] - expected).abs() < 1e-12);
        assert!((fit.fitted[0] - 1.72).abs() < 1e-12);
        assert_eq!(fit.denominator_floor_hits, 0);
    }

    #[test]
    fn constant_response_is_reproduced() {
        let ix = IndexValues::new((0..50).map(|i| ((i * 37) % 50) as f64).collect()).unwrap();
        let u = ranks(&ix);
        let w = vec![2.5; 50];
        for &h in &[0.05, 0.2, 1.0] {
            for &loo in &[false, true] {
                let fit = snn_fit(&u, &w, None, h, Kernel::Quartic, loo).unwrap();
                assert!(fit.fitted.iter().all(|f| (f - 2.5).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn degenerate_window_uses_nearest_neighbor() {
        let u = RankValues::from_raw(vec![0.1, 0.5, 0.9]).unwrap();
        let fit = snn_fit(&u, &[1.0, 2.0, 3.0], None, 0.05, Kernel::Quartic, true).unwrap();
        assert_eq!(fit.denominator_floor_hits, 3);
        // 0.1 -> nearest other is 0.5; 0.5 is equidistant from 0.1 and 0.9
        assert_eq!(fit.fitted, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn input_validation() {
        let u = RankValues::from_raw(vec![0.5, 1.0]).unwrap();
        assert!(snn_fit(&u, &[1.0], None, 0.5, Kernel::Quartic, false).is_err());
        assert!(snn_fit(&u, &[1.0, 2.0], None, 0.0, Kernel::Quartic, false).is_err());
        let cond = Conditioning::new(vec![true, false], true);
        assert!(snn_fit(&u, &[1.0, 2.0], Some(&cond), 0.5, Kernel::Quartic, false).is_err());
    }

    #[test]
    fn boundary_mass() {
        let k = Kernel::Quartic;
        assert!((xi_boundary(0.5, 0.1, k) - 1.0).abs() < 1e-15);
        assert!((xi_boundary(0.0, 0.1, k) - 0.5).abs() < 1e-15);
        assert!((xi_boundary(1.0, 0.1, k) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bandwidth_window_shape() {
        assert!(default_bandwidth_bounds(9).is_err());
        let (lo, hi) = default_bandwidth_bounds(300).unwrap();
        assert!(0.0 < lo && lo < hi && hi < 1.0);
        let (lo6, hi6) = default_bandwidth_bounds(1_000_000).unwrap();
        assert!(lo6 < hi6);
        assert!(hi6 - lo6 < hi - lo);
        assert!(lo6 < lo && hi6 < hi);
    }
}
