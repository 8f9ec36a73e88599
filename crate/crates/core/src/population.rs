//! Large-population approximations of rank-conditional means, used by the
//! numerical diagnostics where conditional expectations have no closed form.

use crate::error::{Error, Result};
use crate::kernels::Kernel;

/// Empirical CDF of a large reference draw of index values.
#[derive(Debug, Clone)]
pub struct PopulationCdf {
    sorted: Vec<f64>,
}

impl PopulationCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diagnostic(
                "population CDF needs finite values".into(),
            ));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { sorted: values })
    }

    /// `#{population values <= t} / N`.
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= t) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

/// A conditional-mean curve on `[0, 1]`, tabulated at bin centers and
/// linearly interpolated in between. Needs at least two bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCurve {
    pub centers: Vec<f64>,
    pub values: Vec<f64>,
}

impl BinnedCurve {
    pub fn eval(&self, u: f64) -> f64 {
        let m = self.centers.len();
        let width = 1.0 / m as f64;
        // Linear interpolation inside, linear extrapolation in the half bins at the ends.
        let pos = u / width - 0.5;
        let lo = (pos.floor().max(0.0) as usize).min(m - 2);
        let hi = lo + 1;
        let frac = pos - lo as f64;
        self.values[lo] * (1.0 - frac) + self.values[hi] * frac
    }
}

#[derive(Clone, Copy, Default)]
struct BinMoments {
    w: f64,
    wu: f64,
    wuu: f64,
}

/// Weighted local-linear regression of each response on `u ∈ [0, 1]`.
///
/// Observations are accumulated into `bins` equal-width bins (the kernel
/// weight is taken at the bin center), and the local-linear fit is computed
/// at every bin center. The weighted mean of response `r` given `u` is
/// `E[weight·r | u] / E[weight | u]`.
pub fn binned_local_linear(
    u: &[f64],
    weights: &[f64],
    responses: &[&[f64]],
    bins: usize,
    h: f64,
    kernel: Kernel,
) -> Result<Vec<BinnedCurve>> {
    let n = u.len();
    if weights.len() != n || responses.iter().any(|r| r.len() != n) {
        return Err(Error::Diagnostic("population smoother: length mismatch".into()));
    }
    if bins < 2 || !(h > 0.0) {
        return Err(Error::Diagnostic("population smoother: bad bins or bandwidth".into()));
    }
    let width = 1.0 / bins as f64;
    let mut moments = vec![BinMoments::default(); bins];
    let mut wy = vec![vec![0.0; bins]; responses.len()];
    let mut wuy = vec![vec![0.0; bins]; responses.len()];
    for i in 0..n {
        let b = ((u[i] / width) as usize).min(bins - 1);
        let w = weights[i];
        let m = &mut moments[b];
        m.w += w;
        m.wu += w * u[i];
        m.wuu += w * u[i] * u[i];
        for (r, resp) in responses.iter().enumerate() {
            wy[r][b] += w * resp[i];
            wuy[r][b] += w * u[i] * resp[i];
        }
    }
    let centers: Vec<f64> = (0..bins).map(|b| (b as f64 + 0.5) * width).collect();
    let reach = (h / width).ceil() as usize + 1;
    let mut out: Vec<BinnedCurve> = responses
        .iter()
        .map(|_| BinnedCurve {
            centers: centers.clone(),
            values: vec![0.0; bins],
        })
        .collect();
    for (c, &at) in centers.iter().enumerate() {
        let lo = c.saturating_sub(reach);
        let hi = (c + reach).min(bins - 1);
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut t0 = vec![0.0; responses.len()];
        let mut t1 = vec![0.0; responses.len()];
        for b in lo..=hi {
            let k = kernel.eval((centers[b] - at) / h);
            if k == 0.0 {
                continue;
            }
            let m = moments[b];
            // Moments of (u - at) from raw moments of u.
            s0 += k * m.w;
            s1 += k * (m.wu - at * m.w);
            s2 += k * (m.wuu - 2.0 * at * m.wu + at * at * m.w);
            for r in 0..responses.len() {
                t0[r] += k * wy[r][b];
                t1[r] += k * (wuy[r][b] - at * wy[r][b]);
            }
        }
        let det = s0 * s2 - s1 * s1;
        if !(s0 > 0.0) {
            return Err(Error::Diagnostic(format!(
                "population smoother: empty window at u = {at}"
            )));
        }
        for r in 0..responses.len() {
            out[r].values[c] = if det > 1e-12 * s0 * s2 {
                (s2 * t0[r] - s1 * t1[r]) / det
            } else {
                t0[r] / s0
            };
        }
    }
    Ok(out)
}
