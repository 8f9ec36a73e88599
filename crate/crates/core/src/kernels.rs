//! Second-order kernels used by the SNN smoother.
//!
//! Only the quartic (biweight) kernel ships today,
//! `K(u) = (15/16)(1 - u^2)^2` on `[-1, 1]`. It is bounded, nonnegative,
//! symmetric, compactly supported and twice continuously differentiable on
//! the interior of its support, and integrates to one.

use crate::error::{domain, Result};

const QUARTIC_NORM: f64 = 15.0 / 16.0;

/// Kernel family. Extra families can be added without changing call sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Kernel {
    #[default]
    Quartic,
}

impl Kernel {
    /// Half-width `s` of the support `[-s, s]`.
    pub fn support_halfwidth(self) -> f64 {
        match self {
            Kernel::Quartic => 1.0,
        }
    }

    /// `K(u)`; exactly zero outside the support.
    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Quartic => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    let t = 1.0 - u * u;
                    QUARTIC_NORM * t * t
                }
            }
        }
    }

    /// Scaled kernel `K_h(u) = K(u / h) / h`.
    pub fn eval_scaled(self, u: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return domain(format!("bandwidth must be positive and finite, got {h}"));
        }
        Ok(self.eval(u / h) / h)
    }

    /// First and second derivatives `(K'(u), K''(u))` on the open support,
    /// zero elsewhere (including the endpoints).
    pub fn eval_derivatives(self, u: f64) -> (f64, f64) {
        match self {
            Kernel::Quartic => {
                if u.abs() >= 1.0 {
                    (0.0, 0.0)
                } else {
                    let first = -4.0 * QUARTIC_NORM * u * (1.0 - u * u);
                    let second = QUARTIC_NORM * (12.0 * u * u - 4.0);
                    (first, second)
                }
            }
        }
    }

    /// `∫_{-∞}^{t} K(v) dv`.
    pub fn cdf(self, t: f64) -> f64 {
        match self {
            Kernel::Quartic => {
                if t <= -1.0 {
                    return 0.0;
                }
                if t >= 1.0 {
                    return 1.0;
                }
                let antiderivative = |v: f64| {
                    let v2 = v * v;
                    QUARTIC_NORM * v * (1.0 - 2.0 * v2 / 3.0 + v2 * v2 / 5.0)
                };
                0.5 + antiderivative(t)
            }
        }
    }

    /// Kernel mass on `[a, b]`.
    pub fn mass(self, a: f64, b: f64) -> f64 {
        if b <= a {
            0.0
        } else {
            self.cdf(b) - self.cdf(a)
        }
    }
}
