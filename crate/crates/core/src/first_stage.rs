//! First-stage estimators of the single-index direction θ.
//!
//! [`max_score`] maximizes Manski's sign-agreement score over the unit
//! sphere (cube-root consistent under a conditional median restriction);
//! [`probit_mle`] is the root-n parametric alternative. Downstream code uses
//! θ only through the ordering of `x'θ`, so both return a unit-norm direction.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndexMethod {
    MaxScore,
    Probit,
    /// Externally supplied direction (e.g. the true θ₀ in simulations).
    Fixed,
}

/// Estimated index direction with method metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFit {
    /// Unit-norm direction.
    pub theta: Vec<f64>,
    pub method: IndexMethod,
    /// Score / n for maximum score, mean log-likelihood for probit, NaN for fixed.
    pub objective_value: f64,
    /// Objective evaluations (max score) or Newton iterations (probit).
    pub evaluations: usize,
    pub converged: bool,
    /// Norm of the direction before normalization. For probit this is the
    /// slope norm; values near zero mean the direction is essentially noise.
    pub raw_norm: f64,
}

impl IndexFit {
    /// Wraps a known direction, scaled to unit norm with its first nonzero
    /// coordinate positive.
    pub fn fixed(theta: &[f64]) -> Result<Self> {
        let (unit, norm) = normalize(theta)?;
        Ok(Self {
            theta: pin_sign(unit),
            method: IndexMethod::Fixed,
            objective_value: f64::NAN,
            evaluations: 0,
            converged: true,
            raw_norm: norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

fn normalize(theta: &[f64]) -> Result<(Vec<f64>, f64)> {
    if theta.is_empty() || theta.iter().any(|t| !t.is_finite()) {
        return domain("index direction must be nonempty and finite");
    }
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Identification("index direction is zero".into()));
    }
    Ok((theta.iter().map(|t| t / norm).collect(), norm))
}

fn pin_sign(mut theta: Vec<f64>) -> Vec<f64> {
    if let Some(first) = theta.iter().find(|t| **t != 0.0) {
        if *first < 0.0 {
            theta.iter_mut().for_each(|t| *t = -*t);
        }
    }
    theta
}

/// Multi-start pattern-search settings for [`max_score`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub n_starts: usize,
    /// Pattern-search sweeps per start.
    pub sweeps: usize,
    pub seed: u64,
    /// Initial angular step (radians).
    pub initial_step: f64,
    /// Refinement stops once the step falls below this.
    pub min_step: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_starts: 200,
            sweeps: 50,
            seed: 0x5eed,
            initial_step: 0.5,
            min_step: 1e-4,
        }
    }
}

impl SearchConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

fn check_binary_design(x: &DMatrix<f64>, d: &[bool]) -> Result<()> {
    if x.nrows() != d.len() {
        return domain(format!(
            "design has {} rows but outcome has {} entries",
            x.nrows(),
            d.len()
        ));
    }
    if x.ncols() == 0 {
        return domain("design has no columns");
    }
    if x.iter().any(|v| !v.is_finite()) {
        return domain("design contains non-finite values");
    }
    let ones = d.iter().filter(|&&v| v).count();
    if ones == 0 || ones == d.len() {
        return Err(Error::Identification(format!(
            "binary outcome has no variation ({ones} ones of {})",
            d.len()
        )));
    }
    let gram = x.transpose() * x;
    let eig = gram.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= max * 1e-12 {
        return Err(Error::Identification(format!(
            "design is rank deficient (gram eigenvalues {min:.3e} .. {max:.3e})"
        )));
    }
    Ok(())
}

/// Row-major copy of the design with the ±1 labels.
struct ScoreData {
    rows: Vec<f64>,
    labels: Vec<i64>,
    dim: usize,
}

impl ScoreData {
    fn new(x: &DMatrix<f64>, d: &[bool]) -> Self {
        let dim = x.ncols();
        let mut rows = Vec::with_capacity(x.nrows() * dim);
        for i in 0..x.nrows() {
            for j in 0..dim {
                rows.push(x[(i, j)]);
            }
        }
        let labels = d.iter().map(|&v| if v { 1 } else { -1 }).collect();
        Self { rows, labels, dim }
    }

    /// `Σ (2d_i - 1) sgn(x_i'θ)` with `sgn(0) = +1`.
    fn score(&self, theta: &[f64]) -> i64 {
        self.rows
            .chunks_exact(self.dim)
            .zip(&self.labels)
            .map(|(row, &q)| {
                let v: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
                if v >= 0.0 {
                    q
                } else {
                    -q
                }
            })
            .sum()
    }
}

/// Manski score `Σ (2d_i - 1) sgn(x_i'θ) / n` at an arbitrary θ.
pub fn score_objective(x: &DMatrix<f64>, d: &[bool], theta: &[f64]) -> Result<f64> {
    if x.nrows() != d.len() || x.ncols() != theta.len() {
        return domain("score_objective: dimension mismatch");
    }
    Ok(ScoreData::new(x, d).score(theta) as f64 / d.len() as f64)
}

/// Hyperspherical angles of a unit vector (dim >= 2).
fn to_angles(theta: &[f64]) -> Vec<f64> {
    let k = theta.len();
    let mut angles = Vec::with_capacity(k - 1);
    for j in 0..k - 1 {
        if j == k - 2 {
            angles.push(theta[k - 1].atan2(theta[k - 2]));
        } else {
            let tail = theta[j + 1..].iter().map(|t| t * t).sum::<f64>().sqrt();
            angles.push(tail.atan2(theta[j]));
        }
    }
    angles
}

fn from_angles(angles: &[f64], out: &mut [f64]) {
    let mut carry = 1.0;
    for (j, a) in angles.iter().enumerate() {
        out[j] = carry * a.cos();
        carry *= a.sin();
    }
    out[angles.len()] = carry;
}

struct StartResult {
    score: i64,
    theta: Vec<f64>,
    evaluations: usize,
    converged: bool,
}

fn refine_start(data: &ScoreData, start: usize, cfg: &SearchConfig) -> StartResult {
    let k = data.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(start as u64);
    let mut theta: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = theta.iter().map(|t| t * t).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    theta.iter_mut().for_each(|t| *t /= norm);

    let mut best = data.score(&theta);
    let mut evaluations = 1;
    let mut angles = to_angles(&theta);
    let mut trial = vec![0.0; k];
    let mut step = cfg.initial_step;
    let mut converged = false;
    for _ in 0..cfg.sweeps {
        let mut improved = false;
        for j in 0..angles.len() {
            for dir in [1.0, -1.0] {
                let saved = angles[j];
                angles[j] = saved + dir * step;
                from_angles(&angles, &mut trial);
                let s = data.score(&trial);
                evaluations += 1;
                if s > best {
                    best = s;
                    theta.copy_from_slice(&trial);
                    improved = true;
                    break;
                }
                angles[j] = saved;
            }
        }
        if !improved {
            step *= 0.5;
            if step < cfg.min_step {
                converged = true;
                break;
            }
        }
    }
    StartResult {
        score: best,
        theta,
        evaluations,
        converged,
    }
}

/// Maximum score estimator over the unit sphere.
///
/// The score is piecewise constant, so the search is derivative free:
/// `n_starts` random directions, each refined by coordinatewise pattern
/// search on hyperspherical angles. The winner is the highest score, ties
/// broken by the lexicographically smallest θ, so the result does not depend
/// on thread scheduling. The sign of θ is identified by the score and kept.
pub fn max_score(x: &DMatrix<f64>, d: &[bool], search: &SearchConfig) -> Result<IndexFit> {
    check_binary_design(x, d)?;
    if search.n_starts == 0 {
        return domain("max_score needs at least one start");
    }
    let data = ScoreData::new(x, d);
    let n = d.len() as f64;
    if data.dim == 1 {
        let (plus, minus) = (data.score(&[1.0]), data.score(&[-1.0]));
        let theta = if plus >= minus { vec![1.0] } else { vec![-1.0] };
        return Ok(IndexFit {
            objective_value: plus.max(minus) as f64 / n,
            theta,
            method: IndexMethod::MaxScore,
            evaluations: 2,
            converged: true,
            raw_norm: 1.0,
        });
    }
    let results: Vec<StartResult> = (0..search.n_starts)
        .into_par_iter()
        .map(|s| refine_start(&data, s, search))
        .collect();
    let evaluations = results.iter().map(|r| r.evaluations).sum();
    let best = results
        .into_iter()
        .reduce(|a, b| {
            let a_wins = a.score > b.score
                || (a.score == b.score && lexicographic_le(&a.theta, &b.theta));
            if a_wins {
                a
            } else {
                b
            }
        })
        .expect("at least one start");
    let (theta, _) = normalize(&best.theta)?;
    Ok(IndexFit {
        theta,
        method: IndexMethod::MaxScore,
        objective_value: best.score as f64 / n,
        evaluations,
        converged: best.converged,
        raw_norm: 1.0,
    })
}

fn lexicographic_le(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Coefficient norm above which the probit likelihood is declared separated.
pub const PROBIT_SEPARATION_CAP: f64 = 1e3;
pub const PROBIT_MAX_ITER: usize = 200;

/// Probit fit with intercept; coefficients ordered `[intercept, slopes...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitCoefficients {
    pub beta: DVector<f64>,
    pub log_likelihood: f64,
    pub gradient_sup: f64,
    pub iterations: usize,
}

fn probit_loglik(design: &DMatrix<f64>, q: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = design * beta;
    eta.iter().zip(q).map(|(e, s)| normal::log_cdf(s * e)).sum()
}

/// Newton–Raphson on the probit log-likelihood `Σ ln Φ(q_i x_i'β)`,
/// `q_i = 2d_i - 1`, with step halving. An intercept column is prepended.
pub fn probit_coefficients(x: &DMatrix<f64>, d: &[bool]) -> Result<ProbitCoefficients> {
    check_binary_design(x, d)?;
    let n = x.nrows();
    let k = x.ncols() + 1;
    let mut design = DMatrix::from_element(n, k, 1.0);
    design.view_mut((0, 1), (n, k - 1)).copy_from(x);
    let q: Vec<f64> = d.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();

    let mut beta = DVector::zeros(k);
    let mut ll = probit_loglik(&design, &q, &beta);
    let tol = 1e-9 * n as f64;
    for iter in 0..PROBIT_MAX_ITER {
        let eta = &design * &beta;
        let mut grad = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let z = q[i] * eta[i];
            let lam = normal::mills(z);
            let row = design.row(i);
            let weight = lam * (lam + z);
            for a in 0..k {
                grad[a] += q[i] * lam * row[a];
                for b in a..k {
                    info[(a, b)] += weight * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let gsup = grad.amax();
        let step = match info.clone().cholesky().map(|c| c.solve(&grad)) {
            Some(step) => step,
            None if ll > -1e-8 => {
                // Information vanishes only when every observation is fitted perfectly.
                return Err(Error::Separation {
                    norm: beta.norm(),
                    cap: PROBIT_SEPARATION_CAP,
                });
            }
            None => return Err(Error::Estimation("singular probit information matrix".into())),
        };
        // A separated likelihood has a vanishing gradient but Newton steps that
        // keep pushing β outward, so both must be small.
        if gsup < tol && step.amax() < 1e-8 * beta.norm().max(1.0) {
            return Ok(ProbitCoefficients {
                beta,
                log_likelihood: ll,
                gradient_sup: gsup,
                iterations: iter,
            });
        }
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &beta + &step * scale;
            let cand_ll = probit_loglik(&design, &q, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        let norm = beta.norm();
        let perfect = (&design * &beta).iter().zip(&q).all(|(e, s)| s * e > 0.0);
        if norm > PROBIT_SEPARATION_CAP || !norm.is_finite() || (perfect && ll > -1e-6) {
            return Err(Error::Separation {
                norm,
                cap: PROBIT_SEPARATION_CAP,
            });
        }
        if !accepted {
            return Err(Error::Convergence {
                iterations: iter + 1,
                gradient: gsup,
            });
        }
    }
    let eta = &design * &beta;
    if eta.amax() > 8.0 {
        // Fitted probabilities at 0 or 1 after the iteration budget: the
        // likelihood keeps increasing along a separating direction.
        return Err(Error::Separation {
            norm: beta.norm(),
            cap: PROBIT_SEPARATION_CAP,
        });
    }
    let gsup = (0..k)
        .map(|a| {
            (0..n)
                .map(|i| q[i] * normal::mills(q[i] * eta[i]) * design[(i, a)])
                .sum::<f64>()
                .abs()
        })
        .fold(0.0, f64::max);
    Err(Error::Convergence {
        iterations: PROBIT_MAX_ITER,
        gradient: gsup,
    })
}

/// Probit maximum likelihood, returned as a normalized slope direction.
pub fn probit_mle(x: &DMatrix<f64>, d: &[bool]) -> Result<IndexFit> {
    let fit = probit_coefficients(x, d)?;
    let slopes: Vec<f64> = fit.beta.iter().skip(1).copied().collect();
    let (unit, norm) = normalize(&slopes)?;
    Ok(IndexFit {
        theta: pin_sign(unit),
        method: IndexMethod::Probit,
        objective_value: fit.log_likelihood / d.len() as f64,
        evaluations: fit.iterations,
        converged: true,
        raw_norm: norm,
    })
}
