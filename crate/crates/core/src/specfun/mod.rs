//! Special functions attached to the β-stable subordinator `D_t` and its
//! inverse `E_t`: the Mittag-Leffler function, the one-sided stable density
//! `G_β`, the densities `g_β(s, t)` of `D_t` and `h_β(s, t)` of `E_t`, their
//! moment coefficients, and quadrature rules against them.
//!
//! Everything here reduces to the Mainardi function `M_β`, the density of
//! `E_1`: `h_β(s, t) = t^{-β} M_β(s t^{-β})` and `G_β(x) = β x^{-1-β} M_β(x^{-β})`.

mod mittag_leffler;
mod quadrature;
mod stable;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub use mittag_leffler::{mittag_leffler, ML_SERIES_RADIUS};
pub use quadrature::{
    g_quadrature, g_quadrature_with, h_quadrature, h_quadrature_with, KernelTarget, QuadratureOptions, QuadratureRule,
};
pub use stable::{inverse_cdf_unit, inverse_sf_unit, mainardi, stable_cdf, stable_sf, MAINARDI_SERIES_Y_MAX};

/// Fractional order β ∈ (0, 1]. `β = 1` is the classical, memoryless case.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_finite() && beta > 0.0 && beta <= 1.0 {
            Ok(Self(beta))
        } else {
            Err(Error::Domain(format!("fractional order must lie in (0, 1], got {beta}")))
        }
    }

    pub const HALF: FracOrder = FracOrder(0.5);
    pub const ONE: FracOrder = FracOrder(1.0);

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }

    /// The order as a strictly fractional value; kernel evaluators refuse `β = 1`.
    pub fn fractional(self) -> Result<f64> {
        if self.is_classical() {
            Err(Error::Domain("β = 1 has no subordinator density; handle the classical case separately".into()))
        } else {
            Ok(self.0)
        }
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        FracOrder::new(v)
    }
}

impl From<FracOrder> for f64 {
    fn from(b: FracOrder) -> f64 {
        b.0
    }
}

impl std::fmt::Display for FracOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One-sided stable density `G_β(x)`: the law of `D_1`, with `E[e^{-s D_1}] = e^{-s^β}`.
pub fn stable_density(beta: FracOrder, x: f64) -> Result<f64> {
    let b = beta.fractional()?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("stable density needs x > 0, got {x}")));
    }
    Ok(stable::stable_density_raw(b, x))
}

/// Density `g_β(s, t) = t^{-1/β} G_β(s t^{-1/β})` of the subordinator `D_t`.
pub fn subordinator_density(beta: FracOrder, s: f64, t: f64) -> Result<f64> {
    let b = beta.fractional()?;
    if !(s > 0.0) || !(t > 0.0) {
        return Err(Error::Domain(format!("subordinator density needs s, t > 0, got s={s}, t={t}")));
    }
    let scale = t.powf(-1.0 / b);
    Ok(scale * stable::stable_density_raw(b, s * scale))
}

/// Density `h_β(s, t)` of the inverse subordinator `E_t`; right limit at `s = 0`.
pub fn inverse_subordinator_density(beta: FracOrder, s: f64, t: f64) -> Result<f64> {
    let b = beta.fractional()?;
    if !(t > 0.0) || !t.is_finite() || !(s >= 0.0) {
        return Err(Error::Domain(format!("inverse subordinator density needs s >= 0, t > 0, got s={s}, t={t}")));
    }
    let scale = t.powf(-b);
    Ok(scale * stable::mainardi_raw(b, s * scale))
}

/// `C(β, γ) = Γ(γ+1)/Γ(γβ+1)`, so that `E[E_t^γ] = C(β, γ) t^{γβ}`.
pub fn inverse_moment_coeff(beta: FracOrder, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Domain(format!("moment order must be positive, got {gamma}")));
    }
    Ok((ln_gamma(gamma + 1.0) - ln_gamma(gamma * beta.value() + 1.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn b(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    fn g_half_closed(x: f64) -> f64 {
        x.powf(-1.5) * (-1.0 / (4.0 * x)).exp() / (2.0 * PI.sqrt())
    }

    #[test]
    fn frac_order_validation() {
        assert!(FracOrder::new(0.0).is_err());
        assert!(FracOrder::new(1.2).is_err());
        assert!(FracOrder::new(f64::NAN).is_err());
        assert!(FracOrder::new(1.0).unwrap().is_classical());
        assert!(FracOrder::ONE.fractional().is_err());
    }

    #[test]
    fn stable_density_matches_levy_closed_form() {
        assert_relative_eq!(stable_density(b(0.5), 1.0).unwrap(), 0.219_695_644_733_861_4, max_relative = 1e-12);
        for &x in &[1e-3, 0.01, 0.05, 0.1, 0.3, 0.7, 1.5, 3.0, 10.0, 100.0, 1e4, 1e8] {
            let got = stable_density(b(0.5), x).unwrap();
            let want = g_half_closed(x);
            assert!((got - want).abs() <= 1e-12 * want.max(1e-300) + 1e-300, "x={x}: {got} vs {want}");
        }
        // essential singularity: vanishes as x -> 0+
        assert!(stable_density(b(0.5), 1e-4).unwrap() < 1e-300);
    }

    #[test]
    fn stable_density_domain() {
        assert!(stable_density(b(0.5), 0.0).is_err());
        assert!(stable_density(b(0.5), -1.0).is_err());
        assert!(stable_density(FracOrder::ONE, 1.0).is_err());
    }

    #[test]
    fn subordinator_density_scaling() {
        assert_relative_eq!(
            subordinator_density(b(0.5), 1.0, 1.0).unwrap(),
            0.219_695_644_733_861_4,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            subordinator_density(b(0.5), 4.0, 2.0).unwrap(),
            0.25 * 0.219_695_644_733_861_4,
            max_relative = 1e-12
        );
        assert!(subordinator_density(b(0.5), 0.0, 1.0).is_err());
        assert!(subordinator_density(b(0.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn inverse_density_anchors() {
        assert_relative_eq!(
            inverse_subordinator_density(b(0.5), 0.0, 1.0).unwrap(),
            1.0 / PI.sqrt(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            inverse_subordinator_density(b(0.5), 1.0, 1.0).unwrap(),
            0.439_391_289_467_722_4,
            max_relative = 1e-12
        );
        for &beta in &[0.3, 0.5, 0.7] {
            for &t in &[0.5, 1.0, 2.0] {
                let got = inverse_subordinator_density(b(beta), 0.0, t).unwrap();
                assert_relative_eq!(got, t.powf(-beta) / gamma(1.0 - beta), max_relative = 1e-12);
            }
        }
        assert!(inverse_subordinator_density(b(0.5), -1.0, 1.0).is_err());
        assert!(inverse_subordinator_density(b(0.5), 1.0, 0.0).is_err());
    }

    #[test]
    fn moment_coefficients() {
        assert_relative_eq!(inverse_moment_coeff(FracOrder::ONE, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(inverse_moment_coeff(b(0.5), 1.0).unwrap(), 2.0 / PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(inverse_moment_coeff(b(0.5), 2.0).unwrap(), 2.0, max_relative = 1e-13);
        assert!(inverse_moment_coeff(b(0.5), 0.0).is_err());
    }
}
