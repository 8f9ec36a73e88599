//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use twostep::rank::{ranks, ranks_loo, IndexValues};
use twostep::snn::{snn_fit, Conditioning};
use twostep::Kernel;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Quartic kernel written out from its formula.
pub fn quartic(t: f64) -> f64 {
    if t.abs() < 1.0 {
        let a = 1.0 - t * t;
        15.0 / 16.0 * a * a
    } else {
        0.0
    }
}

/// `#{j : v_j <= v_i} / n` by a double loop.
pub fn naive_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    v.iter()
        .map(|a| v.iter().filter(|b| **b <= *a).count() as f64 / n)
        .collect()
}

/// `#{j != i : v_j <= v_i} / (n - 1)` by a double loop.
pub fn naive_ranks_loo(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            (0..n).filter(|&j| j != i && v[j] <= v[i]).count() as f64 / (n - 1) as f64
        })
        .collect()
}

/// Double-loop SNN fit at each observation's own rank. `None` marks an
/// evaluation whose kernel denominator is below 1e-12.
pub fn naive_snn(
    u: &[f64],
    w: &[f64],
    cond: Option<(&[bool], bool)>,
    h: f64,
    loo: bool,
) -> Vec<Option<f64>> {
    let n = u.len();
    (0..n)
        .map(|k| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                if loo && i == k {
                    continue;
                }
                if let Some((ind, level)) = cond {
                    if ind[i] != level {
                        continue;
                    }
                }
                let kw = quartic((u[i] - u[k]) / h) / h;
                num += kw * w[i];
                den += kw;
            }
            (den >= 1e-12).then(|| num / den)
        })
        .collect()
}

/// Manski score `Σ (2d - 1) sgn(x'θ) / n` with `sgn(0) = +1`.
pub fn naive_score(x: &DMatrix<f64>, d: &[bool], theta: &[f64]) -> f64 {
    let n = x.nrows();
    let mut s = 0i64;
    for i in 0..n {
        let v: f64 = (0..x.ncols()).map(|j| x[(i, j)] * theta[j]).sum();
        let sign = if v >= 0.0 { 1 } else { -1 };
        s += if d[i] { sign } else { -sign };
    }
    s as f64 / n as f64
}

/// Best score over `count` Gaussian random directions.
pub fn random_search_best(x: &DMatrix<f64>, d: &[bool], count: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = x.ncols();
    let mut best = f64::NEG_INFINITY;
    let mut theta = vec![0.0; k];
    for _ in 0..count {
        theta.iter_mut().for_each(|t| *t = StandardNormal.sample(&mut rng));
        best = best.max(naive_score(x, d, &theta));
    }
    best
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Random configuration: index values (optionally tied), responses,
/// conditioning, bandwidth, and leave-one-out flag.
pub struct SnnConfig {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub cond: Option<(Vec<bool>, bool)>,
    pub h: f64,
    pub loo: bool,
    pub use_loo_ranks: bool,
}

pub fn random_snn_config(rng: &mut ChaCha8Rng) -> SnnConfig {
    let n = rng.random_range(5..=200);
    let tied = rng.random_bool(0.3);
    let v = (0..n)
        .map(|_| {
            if tied {
                rng.random_range(0..(n / 3).max(2)) as f64
            } else {
                rng.random::<f64>() * 10.0 - 5.0
            }
        })
        .collect();
    let w = (0..n).map(|_| rng.random::<f64>() * 4.0 - 1.0).collect();
    let cond = if rng.random_bool(0.5) {
        let level = rng.random_bool(0.5);
        let mut ind: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        ind[0] = level;
        ind[1] = level;
        Some((ind, level))
    } else {
        None
    };
    SnnConfig {
        v,
        w,
        cond,
        h: [0.02, 0.05, 0.1, 0.3, 0.7, 1.0, 2.0][rng.random_range(0..7)],
        loo: rng.random_bool(0.5),
        use_loo_ranks: rng.random_bool(0.3),
    }
}

/// Largest deviation between the library fit and [`naive_snn`]; infinite if
/// the ranks or the degenerate pattern disagree.
pub fn snn_oracle_gap(cfg: &SnnConfig) -> f64 {
    let ix = IndexValues::new(cfg.v.clone()).unwrap();
    let u = if cfg.use_loo_ranks { ranks_loo(&ix) } else { ranks(&ix) };
    let oracle_u = if cfg.use_loo_ranks {
        naive_ranks_loo(&cfg.v)
    } else {
        naive_ranks(&cfg.v)
    };
    if u.u != oracle_u {
        return f64::INFINITY;
    }
    let cond = cfg
        .cond
        .as_ref()
        .map(|(ind, level)| Conditioning::new(ind.clone(), *level));
    let fit = snn_fit(&u, &cfg.w, cond.as_ref(), cfg.h, Kernel::Quartic, cfg.loo).unwrap();
    let oracle = naive_snn(
        &oracle_u,
        &cfg.w,
        cfg.cond.as_ref().map(|(i, l)| (i.as_slice(), *l)),
        cfg.h,
        cfg.loo,
    );
    let mut worst = 0.0f64;
    for (k, o) in oracle.iter().enumerate() {
        match o {
            Some(v) if !fit.degenerate[k] => worst = worst.max((fit.fitted[k] - v).abs()),
            None if fit.degenerate[k] => {}
            _ => return f64::INFINITY,
        }
    }
    worst
}
