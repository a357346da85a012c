//! Lower/upper correction exponents for products estimated from a sample.
//!
//! Observing each factor of a product of probabilities only with probability
//! `p_s` biases the sampled product upward. Raising it to `c_l = 1/p_s`
//! over-corrects in expectation (Jensen) and raising it to the root `c_u` of
//! `c * p_s + c^2 * ln(p_min) / 8 = 1` under-corrects (Hoeffding), where
//! `p_min` lower-bounds every factor. The pair brackets the true product.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionParams;
use crate::error::{Error, Result};
use crate::network::ContactNetwork;

/// Smallest value `p_min` is clamped to.
pub const P_MIN_FLOOR: f64 = 1e-12;

/// Exponent pair for one (p_s, p_min) setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundExponents {
    /// Lower-bound exponent, always 1 / p_s.
    pub c_l: f64,
    /// Upper-bound exponent; absent when the defining quadratic has no real
    /// root, i.e. p_s < sqrt(-ln(p_min) / 2).
    pub c_u: Option<f64>,
    pub p_min: f64,
    pub feasible: bool,
}

/// Solves for the exponent pair.
///
/// `c_u` is the smaller positive root of `(ln(p_min)/8) c^2 + p_s c - 1 = 0`,
/// the branch continuous with `1/p_s` as `p_min -> 1`, computed in the
/// cancellation-free form `2 / (p_s + sqrt(D))` with
/// `D = p_s^2 + ln(p_min)/2`.
pub fn compute_exponents(p_s: f64, p_min: f64) -> Result<BoundExponents> {
    if !(p_s > 0.0 && p_s <= 1.0) || !p_s.is_finite() {
        return Err(Error::invalid("p_s must be in (0, 1]"));
    }
    if !(p_min > 0.0 && p_min <= 1.0) || !p_min.is_finite() {
        return Err(Error::invalid("p_min must be in (0, 1]"));
    }
    let p_min = p_min.max(P_MIN_FLOOR);
    let c_l = 1.0 / p_s;
    let d = p_s * p_s + p_min.ln() / 2.0;
    if d >= 0.0 {
        let c_u = 2.0 / (p_s + d.sqrt());
        Ok(BoundExponents { c_l, c_u: Some(c_u), p_min, feasible: true })
    } else {
        Ok(BoundExponents { c_l, c_u: None, p_min, feasible: false })
    }
}

impl BoundExponents {
    /// Residual of the defining equation at `c_u`; 0 when infeasible.
    pub fn residual(&self, p_s: f64) -> f64 {
        match self.c_u {
            Some(c) => (c * p_s + c * c * self.p_min.ln() / 8.0 - 1.0).abs(),
            None => 0.0,
        }
    }
}

/// Estimates the per-pair non-transmission floor from the sampled network:
/// `(1 - p_inf) ^ n_max` over the busiest pair, clamped to [`P_MIN_FLOOR`], 1].
pub fn estimate_p_min(network: &ContactNetwork, params: &DiffusionParams) -> f64 {
    let n_max = network.max_pair_contacts();
    (1.0 - params.p_inf).powi(n_max as i32).clamp(P_MIN_FLOOR, 1.0)
}
