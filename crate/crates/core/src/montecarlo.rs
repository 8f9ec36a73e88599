//! Seeded Monte Carlo harness for the sample-selection design: data
//! generation, estimator arms, summary metrics, and numerical diagnostics
//! for the negligibility of the first-stage error and the uniform Bahadur
//! representation of the SNN fit.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bandwidth::{cross_validate_columns, DEFAULT_GRID_SIZE};
use crate::error::{domain, Error, Result};
use crate::estimators::{ols_no_correction, selection_estimate_with, SelectionSample, CI_LEVELS};
use crate::first_stage::{max_score, IndexFit, SearchConfig};
use crate::kernels::Kernel;
use crate::linalg::{pairwise_mean, pairwise_sum};
use crate::normal;
use crate::population::{binned_local_linear, BinnedCurve, PopulationCdf};
use crate::rank::{ranks, ranks_loo, IndexValues};
use crate::snn::{snn_fit, Conditioning};

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;
pub const DEFAULT_REPS: usize = 1000;

/// Error distribution families of the selection design.
///
/// `A*` families use `φ(s) = 2Φ(s² + |s|)` and `T` independent of `e`;
/// `B*` families use `φ(s) = exp(s - 1)` and `T` loading on `e`.
/// `*N` draws `T` from N(0,1), `*T` from Student t with one degree of
/// freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    AN,
    AT,
    BN,
    BT,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::AN, Family::AT, Family::BN, Family::BT];

    fn code(self) -> u64 {
        match self {
            Family::AN => 1,
            Family::AT => 2,
            Family::BN => 3,
            Family::BT => 4,
        }
    }

    fn heteroskedasticity(self, s: f64) -> f64 {
        match self {
            Family::AN | Family::AT => outcome_scale(s),
            Family::BN | Family::BT => (s - 1.0).exp(),
        }
    }

    fn heavy_tailed(self) -> bool {
        matches!(self, Family::AT | Family::BT)
    }

    fn loads_on_e(self) -> bool {
        matches!(self, Family::BN | Family::BT)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::AN => "AN",
            Family::AT => "AT",
            Family::BN => "BN",
            Family::BT => "BT",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AN" => Ok(Family::AN),
            "AT" => Ok(Family::AT),
            "BN" => Ok(Family::BN),
            "BT" => Ok(Family::BT),
            other => domain(format!("unknown family {other:?}; expected one of AN, AT, BN, BT")),
        }
    }
}

/// `2Φ(s² + |s|)`, the scale of the outcome error.
fn outcome_scale(s: f64) -> f64 {
    2.0 * normal::cdf(s * s + s.abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub family: Family,
    pub k: usize,
    pub n: usize,
    /// Index coefficients; all 2's.
    pub theta0: Vec<f64>,
    /// Outcome coefficients; `[2, 2, 2]`.
    pub beta0: Vec<f64>,
}

impl DgpSpec {
    pub fn new(family: Family, k: usize, n: usize) -> Result<Self> {
        if k != 3 && k != 6 {
            return domain(format!("covariate dimension must be 3 or 6, got {k}"));
        }
        if n < 50 {
            return domain(format!("sample size must be at least 50, got {n}"));
        }
        Ok(Self {
            family,
            k,
            n,
            theta0: vec![2.0; k],
            beta0: vec![2.0; 3],
        })
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::new(self.family, self.k, n)
    }

    fn hash(&self) -> u64 {
        let mut h = splitmix64(self.family.code());
        h = splitmix64(h ^ self.k as u64);
        splitmix64(h ^ self.n as u64)
    }
}

/// Unobserved quantities kept alongside a generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    /// True index `x'θ₀`.
    pub index: Vec<f64>,
    /// First component of the covariate shift, shared by `z` and `x`.
    pub eta1: Vec<f64>,
    pub y_star: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub v: Vec<f64>,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Draws one sample. Identical `(spec, seed)` give bit-identical samples.
pub fn generate(spec: &DgpSpec, seed: u64) -> SelectionSample {
    generate_with_latent(spec, seed).0
}

pub fn generate_with_latent(spec: &DgpSpec, seed: u64) -> (SelectionSample, Latent) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw(spec, spec.n, &mut rng)
}

fn replication_rng(spec: &DgpSpec, master_seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(master_seed ^ spec.hash()));
    rng.set_stream(rep as u64);
    rng
}

fn replication_search_seed(spec: &DgpSpec, master_seed: u64, rep: usize) -> u64 {
    splitmix64(splitmix64(master_seed ^ spec.hash()) ^ splitmix64(rep as u64 + 1))
}

/// Sample of replication `rep` under `master_seed`, shared by all arms.
pub fn replication_sample(spec: &DgpSpec, master_seed: u64, rep: usize) -> SelectionSample {
    draw(spec, spec.n, &mut replication_rng(spec, master_seed, rep)).0
}

fn draw<R: Rng>(spec: &DgpSpec, n: usize, rng: &mut R) -> (SelectionSample, Latent) {
    let k = spec.k;
    let dz = spec.beta0.len();
    let cauchy = Cauchy::new(0.0, 1.0).expect("valid Cauchy parameters");
    let mut z = DMatrix::zeros(n, dz);
    let mut x = DMatrix::zeros(n, k);
    let mut y = vec![0.0; n];
    let mut d = vec![false; n];
    let mut latent = Latent {
        index: vec![0.0; n],
        eta1: vec![0.0; n],
        y_star: vec![0.0; n],
        epsilon: vec![0.0; n],
        v: vec![0.0; n],
    };
    let mut u1 = vec![0.0; dz];
    let mut eta = vec![0.0; k];
    for i in 0..n {
        u1.iter_mut().for_each(|v| *v = rng.random::<f64>());
        eta.iter_mut().for_each(|v| *v = rng.random::<f64>());
        for j in 0..dz {
            z[(i, j)] = u1[j] - eta[0] / 2.0;
        }
        let mut s = 0.0;
        for j in 0..k {
            x[(i, j)] = rng.random::<f64>() - eta[j] / 2.0;
            s += x[(i, j)] * spec.theta0[j];
        }
        let t_base: f64 = if spec.family.heavy_tailed() {
            cauchy.sample(rng)
        } else {
            StandardNormal.sample(rng)
        };
        let e: f64 = StandardNormal.sample(rng);
        let zeta: f64 = StandardNormal.sample(rng);
        let t = if spec.family.loads_on_e() { t_base + e } else { t_base };
        let eps = t * spec.family.heteroskedasticity(s) + e;
        let v = (2.0 * zeta + e) * outcome_scale(s);
        let ys = (0..dz).map(|j| z[(i, j)] * spec.beta0[j]).sum::<f64>() + v;
        d[i] = s + eps >= 0.0;
        y[i] = if d[i] { ys } else { 0.0 };
        latent.index[i] = s;
        latent.eta1[i] = eta[0];
        latent.y_star[i] = ys;
        latent.epsilon[i] = eps;
        latent.v[i] = v;
    }
    (SelectionSample { y, z, x, d }, latent)
}

/// Estimator variants compared in the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// Plug-in estimator at the true index direction.
    PluginTheta0,
    /// Plug-in estimator at the maximum-score direction.
    PluginThetaHat,
    /// OLS on the selected observations, without bias correction.
    NoCorrection,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::PluginTheta0, Arm::PluginThetaHat, Arm::NoCorrection];
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::PluginTheta0 => "theta0",
            Arm::PluginThetaHat => "thetahat",
            Arm::NoCorrection => "nobc",
        })
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "theta0" => Ok(Arm::PluginTheta0),
            "thetahat" => Ok(Arm::PluginThetaHat),
            "nobc" => Ok(Arm::NoCorrection),
            other => domain(format!(
                "unknown arm {other:?}; expected one of theta0, thetahat, nobc"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthPolicy {
    /// Least-squares cross-validation per response on a grid of this size.
    Cv { grid: usize },
    /// One bandwidth for every response.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub bandwidth: BandwidthPolicy,
    /// Maximum-score search settings; the seed is replaced per replication.
    pub search: SearchConfig,
    pub kernel: Kernel,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            bandwidth: BandwidthPolicy::Cv {
                grid: DEFAULT_GRID_SIZE,
            },
            search: SearchConfig::default(),
            kernel: Kernel::Quartic,
        }
    }
}

/// One successful replication of one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct RepDraw {
    pub beta: Vec<f64>,
    /// Whether the interval for the first coefficient covers the truth, per
    /// entry of [`CI_LEVELS`].
    pub hits: [bool; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    /// Mean over replications and components of `|β̂_j - β_j|`.
    pub mae: f64,
    /// Mean over replications and components of `(β̂_j - β_j)²`.
    pub mse: f64,
    pub rmse: f64,
    /// Sum over components of the per-component mean squared error.
    pub mse_total: f64,
    pub mae_by_component: Vec<f64>,
    /// Coverage of the first coefficient at each entry of [`CI_LEVELS`].
    pub coverage: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct McResult {
    pub spec: DgpSpec,
    pub arm: Arm,
    /// One entry per replication; `None` marks a failed replication.
    pub per_rep: Vec<Option<RepDraw>>,
    pub summary: McSummary,
    pub reps: usize,
    pub failures: usize,
    pub master_seed: u64,
}

fn plugin_theta(spec: &DgpSpec, s: &SelectionSample, arm: Arm, search: &SearchConfig) -> Result<IndexFit> {
    match arm {
        Arm::PluginTheta0 => IndexFit::fixed(&spec.theta0),
        Arm::PluginThetaHat => max_score(&s.x, &s.d, search),
        Arm::NoCorrection => domain("the uncorrected arm has no index direction"),
    }
}

/// Bandwidths `(h_y, h_z)` for the selection estimator at direction `theta`.
pub fn selection_bandwidths(
    s: &SelectionSample,
    theta: &IndexFit,
    policy: BandwidthPolicy,
    kernel: Kernel,
) -> Result<(f64, Vec<f64>)> {
    let dz = s.z.ncols();
    match policy {
        BandwidthPolicy::Fixed(h) => Ok((h, vec![h; dz])),
        BandwidthPolicy::Cv { grid } => {
            let u = ranks(&IndexValues::from_design(&s.x, &theta.theta)?);
            let z_cols: Vec<Vec<f64>> =
                (0..dz).map(|j| s.z.column(j).iter().copied().collect()).collect();
            let mut cols: Vec<&[f64]> = vec![&s.y];
            cols.extend(z_cols.iter().map(|c| c.as_slice()));
            let cond = Conditioning::new(s.d.clone(), true);
            let cv = cross_validate_columns(&u, &cols, Some(&cond), kernel, grid)?;
            Ok((cv[0].h_star, cv[1..].iter().map(|c| c.h_star).collect()))
        }
    }
}

fn run_arm(
    spec: &DgpSpec,
    s: &SelectionSample,
    arm: Arm,
    cfg: &McConfig,
    search_seed: u64,
) -> Result<RepDraw> {
    let report = match arm {
        Arm::NoCorrection => ols_no_correction(s)?,
        _ => {
            let search = SearchConfig {
                seed: search_seed,
                ..cfg.search
            };
            let theta = plugin_theta(spec, s, arm, &search)?;
            let (h_y, h_z) = selection_bandwidths(s, &theta, cfg.bandwidth, cfg.kernel)?;
            selection_estimate_with(s, &theta, h_y, &h_z, cfg.kernel)?
        }
    };
    let mut hits = [false; 3];
    for (l, &level) in CI_LEVELS.iter().enumerate() {
        hits[l] = report
            .interval(0, level)
            .map(|ci| ci.contains(spec.beta0[0]))
            .unwrap_or(false);
    }
    Ok(RepDraw {
        beta: report.beta,
        hits,
    })
}

/// Aggregates successful draws in replication order.
pub fn summarize(beta0: &[f64], draws: &[&RepDraw]) -> McSummary {
    let p = beta0.len();
    let abs: Vec<f64> = draws
        .iter()
        .map(|d| d.beta.iter().zip(beta0).map(|(b, t)| (b - t).abs()).sum::<f64>() / p as f64)
        .collect();
    let sq: Vec<f64> = draws
        .iter()
        .map(|d| d.beta.iter().zip(beta0).map(|(b, t)| (b - t).powi(2)).sum::<f64>() / p as f64)
        .collect();
    let mae_by_component = (0..p)
        .map(|j| {
            let v: Vec<f64> = draws.iter().map(|d| (d.beta[j] - beta0[j]).abs()).collect();
            pairwise_mean(&v)
        })
        .collect();
    let mse_total = pairwise_sum(
        &(0..p)
            .map(|j| {
                let v: Vec<f64> = draws.iter().map(|d| (d.beta[j] - beta0[j]).powi(2)).collect();
                pairwise_mean(&v)
            })
            .collect::<Vec<f64>>(),
    );
    let mut coverage = [0.0; 3];
    for (l, c) in coverage.iter_mut().enumerate() {
        let hits: Vec<f64> = draws.iter().map(|d| if d.hits[l] { 1.0 } else { 0.0 }).collect();
        *c = pairwise_mean(&hits);
    }
    let mse = pairwise_mean(&sq);
    McSummary {
        mae: pairwise_mean(&abs),
        mse,
        rmse: mse.sqrt(),
        mse_total,
        mae_by_component,
        coverage,
    }
}

fn check_failures(failures: usize, reps: usize, first: Option<&str>) -> Result<()> {
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 || failures == reps {
        return Err(Error::Replications {
            failures,
            reps,
            first: first.unwrap_or("unknown").to_string(),
        });
    }
    Ok(())
}

/// Runs every arm on `reps` samples of each spec.
///
/// Replication `r` of a spec draws its sample from a counter-based stream
/// keyed by `(master_seed, spec, r)`, so all arms see the same sample and
/// results do not depend on the number of threads.
pub fn run_table(
    specs: &[DgpSpec],
    arms: &[Arm],
    reps: usize,
    master_seed: u64,
    cfg: &McConfig,
) -> Result<Vec<McResult>> {
    if reps == 0 {
        return domain("reps must be at least 1");
    }
    if arms.is_empty() {
        return domain("at least one arm is required");
    }
    let mut out = Vec::with_capacity(specs.len() * arms.len());
    for spec in specs {
        let outcomes: Vec<Vec<Result<RepDraw>>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let s = replication_sample(spec, master_seed, rep);
                let seed = replication_search_seed(spec, master_seed, rep);
                arms.iter().map(|&arm| run_arm(spec, &s, arm, cfg, seed)).collect()
            })
            .collect();
        for (a, &arm) in arms.iter().enumerate() {
            let per_rep: Vec<Option<RepDraw>> =
                outcomes.iter().map(|o| o[a].as_ref().ok().cloned()).collect();
            let failures = per_rep.iter().filter(|d| d.is_none()).count();
            let first = outcomes.iter().find_map(|o| o[a].as_ref().err().map(|e| e.to_string()));
            check_failures(failures, reps, first.as_deref())?;
            let ok: Vec<&RepDraw> = per_rep.iter().flatten().collect();
            let summary = summarize(&spec.beta0, &ok);
            out.push(McResult {
                spec: spec.clone(),
                arm,
                per_rep,
                summary,
                reps,
                failures,
                master_seed,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub n: usize,
    /// Median over replications of `√n ‖β̂(θ̂) - β̂(θ₀)‖`.
    pub median_scaled_gap: f64,
    pub mean_scaled_gap: f64,
    pub reps: usize,
    pub failures: usize,
}

/// Paired distance between the plug-in estimates at an estimated and at the
/// true index direction, scaled by `√n`, for each sample size.
///
/// Both estimates share the sample and the bandwidths (chosen at θ₀), so the
/// gap isolates the effect of the first-stage error.
pub fn theorem1_gap(
    spec: &DgpSpec,
    n_list: &[usize],
    reps: usize,
    master_seed: u64,
    compare: Arm,
    cfg: &McConfig,
) -> Result<Vec<GapRow>> {
    if compare == Arm::NoCorrection {
        return domain("theorem1_gap compares index directions; the uncorrected arm has none");
    }
    if reps == 0 {
        return domain("reps must be at least 1");
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return domain("n_list must be nonempty and strictly increasing");
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let spec_n = spec.with_n(n)?;
        let outcomes: Vec<Result<f64>> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let s = replication_sample(&spec_n, master_seed, rep);
                let search = SearchConfig {
                    seed: replication_search_seed(&spec_n, master_seed, rep),
                    ..cfg.search
                };
                let theta0 = IndexFit::fixed(&spec_n.theta0)?;
                let theta = plugin_theta(&spec_n, &s, compare, &search)?;
                let (h_y, h_z) = selection_bandwidths(&s, &theta0, cfg.bandwidth, cfg.kernel)?;
                let b0 = selection_estimate_with(&s, &theta0, h_y, &h_z, cfg.kernel)?;
                let b1 = selection_estimate_with(&s, &theta, h_y, &h_z, cfg.kernel)?;
                let dist = b0
                    .beta
                    .iter()
                    .zip(&b1.beta)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                Ok((n as f64).sqrt() * dist)
            })
            .collect();
        let failures = outcomes.iter().filter(|o| o.is_err()).count();
        let first = outcomes.iter().find_map(|o| o.as_ref().err().map(|e| e.to_string()));
        check_failures(failures, reps, first.as_deref())?;
        let gaps: Vec<f64> = outcomes.into_iter().flatten().collect();
        rows.push(GapRow {
            n,
            median_scaled_gap: median(&gaps),
            mean_scaled_gap: pairwise_mean(&gaps),
            reps,
            failures,
        });
    }
    Ok(rows)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Size of the reference population used for population-level quantities.
pub const POPULATION_SIZE: usize = 100_000;
const POPULATION_BINS: usize = 500;
const POPULATION_BANDWIDTH: f64 = 0.02;
/// Perturbation radius for the Bahadur diagnostic is `c · n^{-1/3}`.
pub const BAHADUR_RADIUS_CONSTANT: f64 = 1.0;
/// Default Bahadur bandwidth is `c · n^{-1/3}`.
pub const BAHADUR_BANDWIDTH_CONSTANT: f64 = 1.0;
const POPULATION_SEED: u64 = 0x00c0_ffee_d00d;

/// Unit directions `θ₀` and `θ₀ ± r e_j` (renormalized), for `j = 1..k`.
fn perturbed_directions(theta0: &[f64], radius: f64) -> Vec<Vec<f64>> {
    let norm = theta0.iter().map(|t| t * t).sum::<f64>().sqrt();
    let unit: Vec<f64> = theta0.iter().map(|t| t / norm).collect();
    let mut out = vec![unit.clone()];
    for j in 0..unit.len() {
        for sign in [1.0, -1.0] {
            let mut t = unit.clone();
            t[j] += sign * radius;
            let m = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.push(t.iter().map(|v| v / m).collect());
        }
    }
    out
}

/// Population curves at one index direction.
struct PopulationAt {
    cdf: PopulationCdf,
    g_phi: BinnedCurve,
    g_psi: BinnedCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BahadurRow {
    pub n: usize,
    pub h: f64,
    pub radius: f64,
    /// Mean over replications of `sup_θ |ν_n(θ) - linear representation(θ)|`.
    pub mean_sup_gap: f64,
    pub median_sup_gap: f64,
    /// Mean over replications of the gap at `θ₀` alone.
    pub mean_gap_at_theta0: f64,
    pub reps: usize,
}

/// Uniform Bahadur-representation diagnostic for the leave-one-out SNN fit.
///
/// Uses family AN with `k = 3` and no selection: `W = y*`, `S = z₁`, and
/// `φ`, `ψ` the identity. For each direction `θ` on a sphere of radius
/// `c n^{-1/3}` around `θ₀` it computes
/// `ν_n = n^{-1/2} Σ ψ(S_i)(ĝ_i - g_φ(U_i))` with the leave-one-out fit `ĝ_i`
/// on leave-one-out ranks, and the linear term
/// `n^{-1/2} Σ g_ψ(U_i)(φ(W_i) - g_φ(U_i))`, where `U_i` is the population
/// CDF of `x_i'θ` and the `g` curves come from a fixed reference population.
/// `h = None` uses `c n^{-1/3}`.
pub fn bahadur_check(n: usize, reps: usize, h: Option<f64>, master_seed: u64) -> Result<BahadurRow> {
    if n < 200 {
        return domain(format!("bahadur_check needs n >= 200, got {n}"));
    }
    if reps == 0 {
        return domain("reps must be at least 1");
    }
    let h = h.unwrap_or(BAHADUR_BANDWIDTH_CONSTANT * (n as f64).powf(-1.0 / 3.0));
    if !(h > 0.0 && h.is_finite()) {
        return domain(format!("bandwidth must be positive, got {h}"));
    }
    let spec = DgpSpec::new(Family::AN, 3, n)?;
    let radius = BAHADUR_RADIUS_CONSTANT * (n as f64).powf(-1.0 / 3.0);
    let thetas = perturbed_directions(&spec.theta0, radius);
    let populations = bahadur_population(&spec, &thetas)?;
    let kernel = Kernel::Quartic;
    let rn = (n as f64).sqrt();

    let outcomes: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let (s, latent) = draw(&spec, n, &mut replication_rng(&spec, master_seed, rep));
            let w = &latent.y_star;
            let psi: Vec<f64> = s.z.column(0).iter().copied().collect();
            let mut sup = 0.0f64;
            let mut at_theta0 = 0.0;
            for (t, theta) in thetas.iter().enumerate() {
                let ix = IndexValues::from_design(&s.x, theta)?;
                let u_loo = ranks_loo(&ix);
                let fit = snn_fit(&u_loo, w, None, h, kernel, true)?;
                let pop = &populations[t];
                let mut nu = Vec::with_capacity(n);
                let mut lin = Vec::with_capacity(n);
                for i in 0..n {
                    let u_pop = pop.cdf.eval(ix.values()[i]);
                    let g_phi = pop.g_phi.eval(u_pop);
                    nu.push(psi[i] * (fit.fitted[i] - g_phi));
                    lin.push(pop.g_psi.eval(u_pop) * (w[i] - g_phi));
                }
                let gap = (pairwise_sum(&nu) - pairwise_sum(&lin)).abs() / rn;
                if t == 0 {
                    at_theta0 = gap;
                }
                sup = sup.max(gap);
            }
            Ok((sup, at_theta0))
        })
        .collect();
    let mut sups = Vec::with_capacity(reps);
    let mut at0 = Vec::with_capacity(reps);
    for o in outcomes {
        let (a, b) = o?;
        sups.push(a);
        at0.push(b);
    }
    Ok(BahadurRow {
        n,
        h,
        radius,
        mean_sup_gap: pairwise_mean(&sups),
        median_sup_gap: median(&sups),
        mean_gap_at_theta0: pairwise_mean(&at0),
        reps,
    })
}

fn bahadur_population(spec: &DgpSpec, thetas: &[Vec<f64>]) -> Result<Vec<PopulationAt>> {
    let mut rng = ChaCha8Rng::seed_from_u64(POPULATION_SEED);
    let pop_spec = DgpSpec { n: POPULATION_SIZE, ..spec.clone() };
    let (s, latent) = draw(&pop_spec, POPULATION_SIZE, &mut rng);
    // Conditional means given (x, η): E[z₁] = (1 - η₁)/2, E[v] = 0.
    let zbar: Vec<f64> = latent.eta1.iter().map(|e| 0.5 - e / 2.0).collect();
    let beta_sum: f64 = spec.beta0.iter().sum();
    let ybar: Vec<f64> = zbar.iter().map(|z| beta_sum * z).collect();
    let ones = vec![1.0; POPULATION_SIZE];
    thetas
        .iter()
        .map(|theta| {
            let ix = IndexValues::from_design(&s.x, theta)?;
            let cdf = PopulationCdf::new(ix.values().to_vec())?;
            let u = ranks(&ix).u;
            let mut curves = binned_local_linear(
                &u,
                &ones,
                &[&ybar, &zbar],
                POPULATION_BINS,
                POPULATION_BANDWIDTH,
                Kernel::Quartic,
            )?;
            let g_psi = curves.pop().expect("two curves");
            let g_phi = curves.pop().expect("two curves");
            Ok(PopulationAt { cdf, g_phi, g_psi })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessRow {
    pub eta: f64,
    /// `max_θ ‖a(θ) - a(θ₀)‖` over the perturbation directions at radius `eta`.
    pub max_gap: f64,
    /// `max_gap` at the previous (twice as large) radius divided by this one.
    pub ratio: Option<f64>,
}

/// Selection probability and `E[e | x, D = 1]` for the Gaussian families.
fn gaussian_selection_moments(family: Family, s: f64) -> Option<(f64, f64)> {
    let (sigma2, cov) = match family {
        Family::AN => {
            let c = outcome_scale(s);
            (c * c + 1.0, 1.0)
        }
        Family::BN => {
            let c = (s - 1.0).exp();
            (c * c + (c + 1.0).powi(2), c + 1.0)
        }
        _ => return None,
    };
    let sigma = sigma2.sqrt();
    let z = s / sigma;
    Some((normal::cdf(z), cov / sigma * normal::mills(z)))
}

/// Population profile of the selection-model moment
/// `a(θ) = E[z μ_θ(U_θ)' | D = 1]`, with `μ_θ(u) = E[(y, z) | U_θ = u, D = 1]`,
/// at directions `θ₀ + η t` for orthonormal tangent directions `±t`.
///
/// Gaussian families use conditional expectations given `(x, η)` in place of
/// raw draws; heavy-tailed families use raw draws.
pub fn smoothness_profile(
    family: Family,
    k: usize,
    etas: &[f64],
    population: usize,
    seed: u64,
) -> Result<Vec<SmoothnessRow>> {
    if etas.is_empty() || etas.iter().any(|e| !(*e > 0.0)) {
        return domain("radii must be positive");
    }
    if population < 1000 {
        return domain("population must have at least 1000 draws");
    }
    let spec = DgpSpec::new(family, k, population)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, latent) = draw(&spec, population, &mut rng);
    let dz = spec.beta0.len();

    let mut weight = vec![0.0; population];
    let mut ybar = vec![0.0; population];
    let mut zbar = vec![vec![0.0; population]; dz];
    for i in 0..population {
        let si = latent.index[i];
        match gaussian_selection_moments(family, si) {
            Some((p, e_sel)) => {
                let zm = 0.5 - latent.eta1[i] / 2.0;
                weight[i] = p;
                for col in zbar.iter_mut() {
                    col[i] = zm;
                }
                ybar[i] = zm * spec.beta0.iter().sum::<f64>() + outcome_scale(si) * e_sel;
            }
            None => {
                weight[i] = if s.d[i] { 1.0 } else { 0.0 };
                for (j, col) in zbar.iter_mut().enumerate() {
                    col[i] = s.z[(i, j)];
                }
                ybar[i] = latent.y_star[i];
            }
        }
    }
    let total_weight = pairwise_sum(&weight);

    let a_at = |theta: &[f64]| -> Result<DMatrix<f64>> {
        let ix = IndexValues::from_design(&s.x, theta)?;
        let u = ranks(&ix).u;
        let mut responses: Vec<&[f64]> = vec![&ybar];
        responses.extend(zbar.iter().map(|c| c.as_slice()));
        let curves = binned_local_linear(
            &u,
            &weight,
            &responses,
            POPULATION_BINS,
            POPULATION_BANDWIDTH,
            Kernel::Quartic,
        )?;
        let mut a = DMatrix::zeros(dz, dz + 1);
        for r in 0..dz {
            for c in 0..=dz {
                let terms: Vec<f64> = (0..population)
                    .map(|i| weight[i] * zbar[r][i] * curves[c].eval(u[i]))
                    .collect();
                a[(r, c)] = pairwise_sum(&terms) / total_weight;
            }
        }
        Ok(a)
    };

    let norm = spec.theta0.iter().map(|t| t * t).sum::<f64>().sqrt();
    let unit: Vec<f64> = spec.theta0.iter().map(|t| t / norm).collect();
    let tangents = tangent_basis(&unit);
    let a0 = a_at(&unit)?;
    let mut rows: Vec<SmoothnessRow> = Vec::with_capacity(etas.len());
    for &eta in etas {
        let mut max_gap = 0.0f64;
        for t in &tangents {
            for sign in [1.0, -1.0] {
                let theta: Vec<f64> = unit.iter().zip(t).map(|(u, v)| u + sign * eta * v).collect();
                let gap = (a_at(&theta)? - &a0).norm();
                max_gap = max_gap.max(gap);
            }
        }
        let ratio = rows.last().map(|prev| prev.max_gap / max_gap);
        rows.push(SmoothnessRow { eta, max_gap, ratio });
    }
    Ok(rows)
}

/// Orthonormal basis of the complement of a unit vector (Gram-Schmidt on
/// the coordinate axes).
fn tangent_basis(unit: &[f64]) -> Vec<Vec<f64>> {
    let k = unit.len();
    let mut basis: Vec<Vec<f64>> = vec![unit.to_vec()];
    for j in 0..k {
        let mut v = vec![0.0; k];
        v[j] = 1.0;
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= dot * c);
        }
        let m = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if m > 1e-8 {
            basis.push(v.iter().map(|a| a / m).collect());
        }
        if basis.len() == k {
            break;
        }
    }
    basis.remove(0);
    basis
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = DgpSpec::new(Family::BT, 6, 80).unwrap();
        assert_eq!(generate(&spec, 9), generate(&spec, 9));
        assert_ne!(generate(&spec, 9).y, generate(&spec, 10).y);
        assert_eq!(replication_sample(&spec, 1, 4), replication_sample(&spec, 1, 4));
    }

    #[test]
    fn spec_validation() {
        assert!(DgpSpec::new(Family::AN, 4, 300).is_err());
        assert!(DgpSpec::new(Family::AN, 3, 49).is_err());
        assert_eq!("bn".parse::<Family>().unwrap(), Family::BN);
        assert!("XX".parse::<Family>().is_err());
        assert_eq!("nobc".parse::<Arm>().unwrap(), Arm::NoCorrection);
    }

    #[test]
    fn outcome_is_zero_when_not_selected() {
        let spec = DgpSpec::new(Family::AN, 3, 200).unwrap();
        let (s, latent) = generate_with_latent(&spec, 3);
        for i in 0..200 {
            if s.d[i] {
                assert_eq!(s.y[i], latent.y_star[i]);
            } else {
                assert_eq!(s.y[i], 0.0);
            }
            assert_eq!(s.d[i], latent.index[i] + latent.epsilon[i] >= 0.0);
        }
    }

    #[test]
    fn single_replication_summary_is_that_replication() {
        let d = RepDraw {
            beta: vec![2.5, 1.0, 2.0],
            hits: [true, false, true],
        };
        let s = summarize(&[2.0, 2.0, 2.0], &[&d]);
        assert_eq!(s.mae, 0.5);
        assert_eq!(s.mse, 1.25 / 3.0);
        assert_eq!(s.mse_total, 1.25);
        assert_eq!(s.coverage, [1.0, 0.0, 1.0]);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let unit = vec![1.0 / 3f64.sqrt(); 3];
        let b = tangent_basis(&unit);
        assert_eq!(b.len(), 2);
        for v in &b {
            let dot: f64 = v.iter().zip(&unit).map(|(a, c)| a * c).sum();
            assert!(dot.abs() < 1e-12);
            assert!((v.iter().map(|a| a * a).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_moments_match_truncated_normal_mean() {
        // With Cov(e, ε) = σ², E[e | ε >= -s] = σ λ(s/σ); for AN σ² = c² + 1.
        let (p, m) = gaussian_selection_moments(Family::AN, 0.0).unwrap();
        let c = outcome_scale(0.0);
        assert!((p - 0.5).abs() < 1e-15);
        let sigma = (c * c + 1.0f64).sqrt();
        assert!((m - normal::mills(0.0) / sigma).abs() < 1e-15);
    }
}
