//! Mainardi function `M_β` and the one-sided stable law.
//!
//! Two evaluation routes:
//! - the entire series `M_β(z) = (1/π) Σ_k (-z)^k Γ(β(k+1)) sin(πβ(k+1)) / k!`
//!   for small `y = z^{1/(1-β)}`;
//! - Zolotarev's integral over `φ ∈ (0, π)`,
//!   `M_β(z) = y / (π(1-β)z) ∫ a(φ) e^{-a(φ) y} dφ`, above the switchover.
//!
//! The same split gives the distribution function of `E_1`, and through
//! `P(D_1 > x) = P(E_1 < x^{-β})` that of `D_1`.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::integrate::{integrate, QuadOptions};

/// Series is used while `z^{1/(1-β)}` stays at or below this value.
pub const MAINARDI_SERIES_Y_MAX: f64 = 2.0;

const MAX_SERIES_TERMS: usize = 50_000;

/// Below `exp(-746)` every double is zero.
const UNDERFLOW_LN: f64 = -746.0;

fn quad_opts() -> QuadOptions {
    QuadOptions { abs_tol: 0.0, rel_tol: 2e-14, max_intervals: 4000 }
}

#[inline]
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (0.5 * x).round();
    (PI * r).sin()
}

/// Zolotarev's function `a(φ)` for the positive stable law of index β.
#[inline]
fn zolotarev_a(beta: f64, phi: f64) -> f64 {
    let sb = (beta * phi).sin();
    let s = phi.sin();
    let s1 = ((1.0 - beta) * phi).sin();
    (sb / s).powf(1.0 / (1.0 - beta)) * s1 / sb
}

#[inline]
fn zolotarev_a0(beta: f64) -> f64 {
    (1.0 - beta) * beta.powf(beta / (1.0 - beta))
}

#[derive(Clone, Copy)]
enum SeriesKind {
    Density,
    Cdf,
}

fn mainardi_series(beta: f64, z: f64, kind: SeriesKind) -> f64 {
    if z == 0.0 {
        return match kind {
            SeriesKind::Density => 1.0 / gamma(1.0 - beta),
            SeriesKind::Cdf => 0.0,
        };
    }
    let lnz = z.ln();
    let ln_pi = PI.ln();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for k in 0..MAX_SERIES_TERMS {
        let kf = k as f64;
        let x = beta * (kf + 1.0);
        let (power, ln_fact) = match kind {
            SeriesKind::Density => (kf, ln_gamma(kf + 1.0)),
            SeriesKind::Cdf => (kf + 1.0, ln_gamma(kf + 2.0)),
        };
        let mag = (power * lnz + ln_gamma(x) - ln_fact - ln_pi).exp();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * mag * sin_pi(x);
        if k > 2 && mag < prev && mag <= 1e-17 * sum.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        prev = mag;
    }
    sum
}

fn mainardi_integral(beta: f64, z: f64) -> f64 {
    let y = z.powf(1.0 / (1.0 - beta));
    let a0 = zolotarev_a0(beta);
    // The integral is at most π(a0 + 1/y): skip it when the result underflows anyway.
    if y.ln() + (a0 + 1.0 / y).ln() - ((1.0 - beta) * z).ln() - a0 * y < UNDERFLOW_LN {
        return 0.0;
    }
    let integrand = |phi: f64| {
        let a = zolotarev_a(beta, phi);
        if !a.is_finite() {
            return 0.0;
        }
        let e = (a - a0) * y;
        if e > 745.0 {
            0.0
        } else {
            a * (-e).exp()
        }
    };
    let int = integrate(integrand, 0.0, PI, quad_opts()).value;
    if int <= 0.0 {
        return 0.0;
    }
    (y.ln() - (PI * (1.0 - beta) * z).ln() - a0 * y + int.ln()).exp()
}

/// `P(E_1 > z)` from the integral representation (accurate for small values).
fn mainardi_sf_integral(beta: f64, z: f64) -> f64 {
    let y = z.powf(1.0 / (1.0 - beta));
    let a0 = zolotarev_a0(beta);
    if -a0 * y < UNDERFLOW_LN {
        return 0.0;
    }
    let integrand = |phi: f64| {
        let a = zolotarev_a(beta, phi);
        if !a.is_finite() {
            return 0.0;
        }
        let e = (a - a0) * y;
        if e > 745.0 {
            0.0
        } else {
            (-e).exp()
        }
    };
    let int = integrate(integrand, 0.0, PI, quad_opts()).value;
    if int <= 0.0 {
        return 0.0;
    }
    (int.ln() - a0 * y - PI.ln()).exp()
}

#[inline]
fn use_series(beta: f64, z: f64) -> bool {
    z.powf(1.0 / (1.0 - beta)) <= MAINARDI_SERIES_Y_MAX
}

/// `M_β(z)` for `0 < β < 1`, `z ≥ 0`.
pub(crate) fn mainardi_raw(beta: f64, z: f64) -> f64 {
    if use_series(beta, z) {
        mainardi_series(beta, z, SeriesKind::Density).max(0.0)
    } else {
        mainardi_integral(beta, z)
    }
}

/// Mainardi function `M_β(z)`, the density of `E_1`. Requires `0 < β < 1`, `z ≥ 0`.
pub fn mainardi(beta: f64, z: f64) -> f64 {
    assert!(beta > 0.0 && beta < 1.0 && z >= 0.0);
    mainardi_raw(beta, z)
}

/// `P(E_1 ≤ z)`.
pub fn inverse_cdf_unit(beta: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if use_series(beta, z) {
        mainardi_series(beta, z, SeriesKind::Cdf).clamp(0.0, 1.0)
    } else {
        1.0 - mainardi_sf_integral(beta, z)
    }
}

/// `P(E_1 > z)`.
pub fn inverse_sf_unit(beta: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if use_series(beta, z) {
        (1.0 - mainardi_series(beta, z, SeriesKind::Cdf)).clamp(0.0, 1.0)
    } else {
        mainardi_sf_integral(beta, z)
    }
}

pub(crate) fn stable_density_raw(beta: f64, x: f64) -> f64 {
    let z = x.powf(-beta);
    if !z.is_finite() {
        return 0.0;
    }
    let m = mainardi_raw(beta, z);
    if m == 0.0 {
        return 0.0;
    }
    beta * (m.ln() - (1.0 + beta) * x.ln()).exp()
}

/// `P(D_1 ≤ x)` for the one-sided stable law.
pub fn stable_cdf(beta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    inverse_sf_unit(beta, x.powf(-beta))
}

/// `P(D_1 > x)`.
pub fn stable_sf(beta: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    inverse_cdf_unit(beta, x.powf(-beta))
}
