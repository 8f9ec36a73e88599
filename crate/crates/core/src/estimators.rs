//! Second-stage estimators: the generic plug-in map `H(â(θ̂), b̂)`, the
//! sample-selection estimator, the single-index matching estimator, and the
//! selection-ignoring OLS baseline.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::first_stage::IndexFit;
use crate::kernels::Kernel;
use crate::linalg::{checked_covariance, spd_inverse};
use crate::normal;
use crate::rank::{ranks, IndexValues, RankValues};
use crate::snn::{snn_fit, snn_fit_columns, Conditioning};

/// Confidence levels reported for every coefficient.
pub const CI_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];
/// Largest condition number accepted for `Ŝ_ZZ` and OLS normal equations.
pub const MAX_CONDITION: f64 = 1e10;
pub const DEFAULT_TRIM: f64 = 0.01;

/// Outcome observed only when selected: `y = y* · d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionSample {
    pub y: Vec<f64>,
    /// Outcome regressors, one row per observation.
    pub z: DMatrix<f64>,
    /// Index covariates, one row per observation.
    pub x: DMatrix<f64>,
    pub d: Vec<bool>,
}

impl SelectionSample {
    pub fn new(y: Vec<f64>, z: DMatrix<f64>, x: DMatrix<f64>, d: Vec<bool>) -> Result<Self> {
        let n = y.len();
        if z.nrows() != n || x.nrows() != n || d.len() != n {
            return domain(format!(
                "selection sample lengths disagree: y {n}, z {}, x {}, d {}",
                z.nrows(),
                x.nrows(),
                d.len()
            ));
        }
        if z.ncols() == 0 || x.ncols() == 0 {
            return domain("selection sample needs at least one z and one x column");
        }
        let selected = d.iter().filter(|&&v| v).count();
        if selected < z.ncols() + 2 {
            return domain(format!(
                "{selected} selected observations, need at least {}",
                z.ncols() + 2
            ));
        }
        Ok(Self { y, z, x, d })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn selected(&self) -> usize {
        self.d.iter().filter(|&&v| v).count()
    }
}

/// Outcome `y = y1·z + y0·(1 - z)` with binary treatment `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchingSample {
    pub y: Vec<f64>,
    pub z: Vec<bool>,
    pub x: DMatrix<f64>,
}

impl MatchingSample {
    pub fn new(y: Vec<f64>, z: Vec<bool>, x: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if z.len() != n || x.nrows() != n {
            return domain(format!(
                "matching sample lengths disagree: y {n}, z {}, x {}",
                z.len(),
                x.nrows()
            ));
        }
        let treated = z.iter().filter(|&&v| v).count();
        if treated == 0 || treated == n {
            return domain("matching sample needs both treated and untreated observations");
        }
        Ok(Self { y, z, x })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub denominator_floor_hits: usize,
    /// Observations dropped from the matching variance by propensity trimming.
    pub trimmed: usize,
    /// Observations entering the estimating equations.
    pub used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub beta: Vec<f64>,
    /// Estimated covariance of `√n (β̂ - β)`.
    pub vcov: DMatrix<f64>,
    /// `n` in the scaling of `vcov`.
    pub n: usize,
    pub se: Vec<f64>,
    /// `ci[j]` holds one interval per entry of [`CI_LEVELS`].
    pub ci: Vec<Vec<ConfidenceInterval>>,
    pub h_used: Vec<f64>,
    pub theta_used: Option<IndexFit>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    fn assemble(
        beta: Vec<f64>,
        vcov: DMatrix<f64>,
        n: usize,
        h_used: Vec<f64>,
        theta_used: Option<IndexFit>,
        diagnostics: Diagnostics,
    ) -> Result<Self> {
        let vcov = checked_covariance(vcov)?;
        let se: Vec<f64> = (0..beta.len())
            .map(|j| (vcov[(j, j)].max(0.0) / n as f64).sqrt())
            .collect();
        let ci = beta
            .iter()
            .zip(&se)
            .map(|(&b, &s)| {
                CI_LEVELS
                    .iter()
                    .map(|&level| {
                        let half = normal::critical_value(level) * s;
                        ConfidenceInterval {
                            level,
                            lower: b - half,
                            upper: b + half,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            beta,
            vcov,
            n,
            se,
            ci,
            h_used,
            theta_used,
            diagnostics,
        })
    }

    /// Interval for coefficient `j` at one of [`CI_LEVELS`].
    pub fn interval(&self, j: usize, level: f64) -> Option<&ConfidenceInterval> {
        self.ci
            .get(j)?
            .iter()
            .find(|ci| (ci.level - level).abs() < 1e-12)
    }
}

fn index_ranks(x: &DMatrix<f64>, theta: &IndexFit) -> Result<RankValues> {
    Ok(ranks(&IndexValues::from_design(x, &theta.theta)?))
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        domain(format!("bandwidth must be positive and finite, got {h}"))
    }
}

/// Inputs to the generic plug-in scaffold.
pub struct PluginSample<'a> {
    /// Responses `W`, one row per observation (`L` columns).
    pub w: &'a DMatrix<f64>,
    /// `S_i` for each observation (`d_S × d_φ`).
    pub s: &'a [DMatrix<f64>],
    pub x: &'a DMatrix<f64>,
    /// Selection indicator; `None` means every observation counts (`D ≡ 1`).
    pub d: Option<&'a [bool]>,
}

/// Generic two-step plug-in estimator `H(â(θ), b̂)`.
///
/// `μ̂` is the SNN fit of each column of `W` on the full-sample ranks of
/// `x'θ`, conditioned on `D = 1`, with `bandwidths[l]` for column `l`;
/// `â = (1/ΣD) Σ D_i S_i φ(μ̂(Û_i))`.
pub fn plugin_estimate(
    sample: &PluginSample<'_>,
    phi: &dyn Fn(&[f64]) -> DMatrix<f64>,
    h_map: &dyn Fn(&DMatrix<f64>, &DMatrix<f64>) -> Result<DVector<f64>>,
    b_hat: &DMatrix<f64>,
    theta: &IndexFit,
    bandwidths: &[f64],
    kernel: Kernel,
) -> Result<DVector<f64>> {
    let n = sample.w.nrows();
    let cols = sample.w.ncols();
    if sample.s.len() != n || sample.x.nrows() != n || bandwidths.len() != cols {
        return domain("plugin_estimate: dimension mismatch");
    }
    let selected: Vec<bool> = match sample.d {
        Some(d) if d.len() == n => d.to_vec(),
        Some(_) => return domain("plugin_estimate: indicator length mismatch"),
        None => vec![true; n],
    };
    let count = selected.iter().filter(|&&v| v).count();
    if count < 2 {
        return domain("plugin_estimate needs at least 2 selected observations");
    }
    let u = index_ranks(sample.x, theta)?;
    let cond = Conditioning::new(selected.clone(), true);
    let mut mu = DMatrix::zeros(n, cols);
    for l in 0..cols {
        check_bandwidth(bandwidths[l])?;
        let column: Vec<f64> = sample.w.column(l).iter().copied().collect();
        let fit = snn_fit(&u, &column, Some(&cond), bandwidths[l], kernel, false)?;
        mu.set_column(l, &DVector::from_vec(fit.fitted));
    }
    let mut a: Option<DMatrix<f64>> = None;
    let mut mu_i = vec![0.0; cols];
    for i in (0..n).filter(|&i| selected[i]) {
        for l in 0..cols {
            mu_i[l] = mu[(i, l)];
        }
        let term = &sample.s[i] * phi(&mu_i);
        a = Some(match a {
            Some(acc) => acc + term,
            None => term,
        });
    }
    let a = a.expect("selected observations exist") / count as f64;
    h_map(&a, b_hat)
}

/// Robinson-type estimator for the sample-selection model.
///
/// Residualizes `Y` and each column of `Z` on the rank of `x'θ` by SNN fits
/// over the selected subsample, then regresses residuals on residuals:
/// `β̂ = Ŝ_ZZ⁻¹ Ŝ_ZY`. The covariance of `√n(β̂ - β)` is
/// `Ŝ_ZZ⁻¹ Ω̂ Ŝ_ZZ⁻¹` with `Ω̂ = Σ D_i û_Z û_Z' v̂_i² / (n P̂₁²)`.
pub fn selection_estimate(
    s: &SelectionSample,
    theta: &IndexFit,
    h_y: f64,
    h_z: &[f64],
) -> Result<EstimateReport> {
    selection_estimate_with(s, theta, h_y, h_z, Kernel::Quartic)
}

pub fn selection_estimate_with(
    s: &SelectionSample,
    theta: &IndexFit,
    h_y: f64,
    h_z: &[f64],
    kernel: Kernel,
) -> Result<EstimateReport> {
    let n = s.len();
    let dz = s.z.ncols();
    if h_z.len() != dz {
        return domain(format!("expected {dz} z bandwidths, got {}", h_z.len()));
    }
    check_bandwidth(h_y)?;
    for &h in h_z {
        check_bandwidth(h)?;
    }
    let u = index_ranks(&s.x, theta)?;
    let cond = Conditioning::new(s.d.clone(), true);

    // Columns sharing a bandwidth share one pass of kernel weights.
    let z_cols: Vec<Vec<f64>> = (0..dz).map(|j| s.z.column(j).iter().copied().collect()).collect();
    let mut fitted: Vec<Option<Vec<f64>>> = vec![None; dz + 1];
    let mut floor_hits = 0;
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (c, &h) in std::iter::once(&h_y).chain(h_z).enumerate() {
        match groups.iter_mut().find(|(g, _)| *g == h) {
            Some((_, members)) => members.push(c),
            None => groups.push((h, vec![c])),
        }
    }
    for (h, members) in &groups {
        let cols: Vec<&[f64]> = members
            .iter()
            .map(|&c| if c == 0 { s.y.as_slice() } else { z_cols[c - 1].as_slice() })
            .collect();
        let fits = snn_fit_columns(&u, &cols, Some(&cond), *h, kernel, false)?;
        floor_hits += fits[0].denominator_floor_hits;
        for (&c, fit) in members.iter().zip(fits) {
            fitted[c] = Some(fit.fitted);
        }
    }
    let mu: Vec<Vec<f64>> = fitted.into_iter().map(|f| f.expect("every column fitted")).collect();

    let selected: Vec<usize> = (0..n).filter(|&i| s.d[i]).collect();
    let m = selected.len();
    let mut u_z = DMatrix::zeros(m, dz);
    let mut u_y = DVector::zeros(m);
    for (r, &i) in selected.iter().enumerate() {
        u_y[r] = s.y[i] - mu[0][i];
        for j in 0..dz {
            u_z[(r, j)] = s.z[(i, j)] - mu[j + 1][i];
        }
    }
    let s_zz = u_z.transpose() * &u_z / m as f64;
    let s_zy = u_z.transpose() * &u_y / m as f64;
    let s_zz_inv = spd_inverse(&s_zz, MAX_CONDITION, "S_ZZ")?;
    let beta = &s_zz_inv * &s_zy;

    let v = &u_y - &u_z * &beta;
    let p1 = m as f64 / n as f64;
    let mut omega = DMatrix::zeros(dz, dz);
    for r in 0..m {
        let row = u_z.row(r).transpose();
        omega += &row * row.transpose() * (v[r] * v[r]);
    }
    omega /= n as f64 * p1 * p1;
    let vcov = &s_zz_inv * omega * &s_zz_inv;

    let mut h_used = vec![h_y];
    h_used.extend_from_slice(h_z);
    EstimateReport::assemble(
        beta.iter().copied().collect(),
        vcov,
        n,
        h_used,
        Some(theta.clone()),
        Diagnostics {
            denominator_floor_hits: floor_hits,
            trimmed: 0,
            used: m,
        },
    )
}

/// Single-index matching estimator of the treatment effect on the treated.
///
/// `β̂ = (1/ΣZ) Σ_k Z_k (Y_k - μ̂₀(Û_k))`, where `μ̂₀` is the SNN fit of `Y`
/// over the untreated. The variance is the sample second moment of the
/// plug-in influence function; observations with fitted propensity outside
/// `[trim, 1 - trim]` are left out of that sum and counted.
pub fn matching_estimate(
    s: &MatchingSample,
    theta: &IndexFit,
    h: f64,
    trim: f64,
) -> Result<EstimateReport> {
    matching_estimate_with(s, theta, h, trim, Kernel::Quartic)
}

pub fn matching_estimate_with(
    s: &MatchingSample,
    theta: &IndexFit,
    h: f64,
    trim: f64,
    kernel: Kernel,
) -> Result<EstimateReport> {
    check_bandwidth(h)?;
    if !(0.0..0.5).contains(&trim) {
        return domain(format!("trim must lie in [0, 0.5), got {trim}"));
    }
    let n = s.y.len();
    let treated = s.z.iter().filter(|&&v| v).count();
    let untreated = n - treated;
    if treated < 10 || untreated < 10 {
        return Err(Error::Estimation(format!(
            "both arms need at least 10 observations (treated {treated}, untreated {untreated})"
        )));
    }
    let u = index_ranks(&s.x, theta)?;
    let mu0 = snn_fit(&u, &s.y, Some(&Conditioning::new(s.z.clone(), false)), h, kernel, false)?;
    let mu1 = snn_fit(&u, &s.y, Some(&Conditioning::new(s.z.clone(), true)), h, kernel, false)?;
    let zf: Vec<f64> = s.z.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let prop = snn_fit(&u, &zf, None, h, kernel, false)?;

    let beta = (0..n)
        .filter(|&k| s.z[k])
        .map(|k| s.y[k] - mu0.fitted[k])
        .sum::<f64>()
        / treated as f64;

    let p1 = treated as f64 / n as f64;
    let mut second_moment = 0.0;
    let mut trimmed = 0;
    let (mut kept_treated, mut kept_untreated) = (0usize, 0usize);
    for i in 0..n {
        let p = prop.fitted[i];
        if p < trim || p > 1.0 - trim {
            trimmed += 1;
            continue;
        }
        let gamma = if s.z[i] {
            kept_treated += 1;
            ((s.y[i] - mu1.fitted[i]) + (mu1.fitted[i] - mu0.fitted[i] - beta)) / p1
        } else {
            kept_untreated += 1;
            -p * (s.y[i] - mu0.fitted[i]) / ((1.0 - p) * p1)
        };
        second_moment += gamma * gamma;
    }
    if kept_treated == 0 || kept_untreated == 0 {
        return Err(Error::Estimation(format!(
            "propensity trimming at {trim} empties an arm (treated kept {kept_treated}, untreated kept {kept_untreated})"
        )));
    }
    let vcov = DMatrix::from_element(1, 1, second_moment / n as f64);
    EstimateReport::assemble(
        vec![beta],
        vcov,
        n,
        vec![h],
        Some(theta.clone()),
        Diagnostics {
            denominator_floor_hits: mu0.denominator_floor_hits
                + mu1.denominator_floor_hits
                + prop.denominator_floor_hits,
            trimmed,
            used: n - trimmed,
        },
    )
}

/// OLS of `Y` on `[1, Z]` over the selected observations, ignoring selection.
/// Reports slope coefficients with an HC0 covariance of `√m (β̂ - β)`.
pub fn ols_no_correction(s: &SelectionSample) -> Result<EstimateReport> {
    let dz = s.z.ncols();
    let selected: Vec<usize> = (0..s.len()).filter(|&i| s.d[i]).collect();
    let m = selected.len();
    let p = dz + 1;
    let mut design = DMatrix::from_element(m, p, 1.0);
    let mut y = DVector::zeros(m);
    for (r, &i) in selected.iter().enumerate() {
        y[r] = s.y[i];
        for j in 0..dz {
            design[(r, j + 1)] = s.z[(i, j)];
        }
    }
    let xtx = design.transpose() * &design;
    let xtx_inv = spd_inverse(&xtx, MAX_CONDITION, "OLS normal matrix")?;
    let coef = &xtx_inv * design.transpose() * &y;
    let resid = &y - &design * &coef;
    let mut meat = DMatrix::zeros(p, p);
    for r in 0..m {
        let row = design.row(r).transpose();
        meat += &row * row.transpose() * (resid[r] * resid[r]);
    }
    let cov = &xtx_inv * meat * &xtx_inv * m as f64;
    let slopes = cov.view((1, 1), (dz, dz)).into_owned();
    EstimateReport::assemble(
        coef.iter().skip(1).copied().collect(),
        slopes,
        m,
        Vec::new(),
        None,
        Diagnostics {
            used: m,
            ..Diagnostics::default()
        },
    )
}
