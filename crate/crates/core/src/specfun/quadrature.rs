//! Quadrature rules against `h_β(·, t)` and `g_β(·, t)`.
//!
//! A rule is built once at unit time and then rescaled: `E_t ~ t^β E_1` and
//! `D_t ~ t^{1/β} D_1`, so nodes scale and weights stay put. Panels are
//! delimited by quantiles of the unit law (uniform in probability through the
//! bulk, geometric in the tails) and carry 8-point Gauss–Legendre rules. The
//! truncated mass is evaluated from the distribution functions, not estimated
//! from the rule. The `g` rule is the image of the `h` rule under
//! `z ↦ z^{-1/β}`.

use serde::{Deserialize, Serialize};

use super::stable::{inverse_cdf_unit, inverse_sf_unit, mainardi_raw};
use super::{inverse_moment_coeff, FracOrder};
use crate::error::{Error, Result};
use crate::integrate::{gauss_legendre, pairwise_sum};

const PANEL_ORDER: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelTarget {
    /// Density of the inverse subordinator `E_t`.
    H,
    /// Density of the subordinator `D_t`.
    G,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureOptions {
    /// Allowed defect in `Σ w + tail_mass = 1`.
    pub tol_norm: f64,
    /// Largest admissible node after rescaling.
    pub max_horizon: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { tol_norm: 1e-8, max_horizon: 1e100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub tail_mass: f64,
    pub target: KernelTarget,
    pub beta: FracOrder,
    pub time: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// `Σ w_i f(s_i)` with a fixed summation order.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&s, &w)| w * f(s)).collect();
        pairwise_sum(&terms)
    }

    /// Largest node, the effective truncation horizon.
    pub fn horizon(&self) -> f64 {
        self.nodes.last().copied().unwrap_or(0.0)
    }

    /// The same rule at another time, by self-similarity.
    pub fn rescaled(&self, time: f64) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::Domain(format!("rule time must be positive, got {time}")));
        }
        let b = self.beta.value();
        let ratio = time / self.time;
        let factor = match self.target {
            KernelTarget::H => ratio.powf(b),
            KernelTarget::G => ratio.powf(1.0 / b),
        };
        Ok(Self {
            nodes: self.nodes.iter().map(|&s| s * factor).collect(),
            weights: self.weights.clone(),
            tail_mass: self.tail_mass,
            target: self.target,
            beta: self.beta,
            time,
        })
    }
}

/// Solves `P(E_1 > z) = level` (when `upper`) or `P(E_1 ≤ z) = level`.
fn unit_quantile(beta: f64, level: f64, upper: bool) -> f64 {
    let f = |z: f64| {
        if upper {
            inverse_sf_unit(beta, z).ln() - level.ln()
        } else {
            level.ln() - inverse_cdf_unit(beta, z).ln()
        }
    };
    // f decreases in z, from +∞ (or positive) to -∞.
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    if !upper {
        while lo == 0.0 && f(hi * 0.5) < 0.0 && hi > 1e-300 {
            hi *= 0.5;
        }
        if lo == 0.0 {
            lo = hi * 0.5;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn panel_count(q: usize) -> usize {
    q.div_ceil(PANEL_ORDER)
}

fn check_args(beta: FracOrder, time: f64, q: usize, eps_tail: f64) -> Result<f64> {
    let b = beta.fractional()?;
    if !(time > 0.0) || !time.is_finite() {
        return Err(Error::Domain(format!("rule time must be positive, got {time}")));
    }
    if q < 2 {
        return Err(Error::Domain(format!("quadrature order must be at least 2, got {q}")));
    }
    if !(eps_tail > 0.0 && eps_tail < 0.1) {
        return Err(Error::Domain(format!("eps_tail must lie in (0, 0.1), got {eps_tail}")));
    }
    Ok(b)
}

/// Gauss–Legendre on each panel `[edges[k], edges[k+1]]` with weight density
/// `w`, rescaled so that every panel carries exactly `mass(a, b)`.
fn panel_rule(edges: &[f64], w: impl Fn(f64) -> f64, mass: impl Fn(f64, f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let mut nodes = Vec::with_capacity(edges.len() * PANEL_ORDER);
    let mut weights = Vec::with_capacity(edges.len() * PANEL_ORDER);
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if !(b > a) {
            continue;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let start = weights.len();
        for (&xi, &wi) in gx.iter().zip(&gw) {
            let u = mid + half * xi;
            nodes.push(u);
            weights.push(wi * half * w(u));
        }
        let raw = pairwise_sum(&weights[start..]);
        if raw > 0.0 {
            let scale = mass(a, b) / raw;
            weights[start..].iter_mut().for_each(|x| *x *= scale);
        }
    }
    (nodes, weights)
}

fn check_rule(rule: &QuadratureRule, opts: &QuadratureOptions) -> Result<()> {
    let defect = rule.weight_sum() + rule.tail_mass - 1.0;
    if defect.abs() > opts.tol_norm {
        return Err(Error::Normalization { defect, tol: opts.tol_norm });
    }
    if rule.horizon() > opts.max_horizon {
        return Err(Error::TailUnreachable { target: rule.tail_mass, cap: opts.max_horizon });
    }
    Ok(())
}

fn dedup_increasing(nodes: &mut Vec<f64>, weights: &mut Vec<f64>) {
    let mut k = 0;
    for i in 0..nodes.len() {
        if k > 0 && nodes[i] <= nodes[k - 1] {
            weights[k - 1] += weights[i];
            continue;
        }
        nodes[k] = nodes[i];
        weights[k] = weights[i];
        k += 1;
    }
    nodes.truncate(k);
    weights.truncate(k);
}

fn unit_h_rule(beta: FracOrder, q: usize, eps_tail: f64) -> QuadratureRule {
    let b = beta.value();
    // The tail is sized so that both its mass and its first-moment share stay below eps_tail.
    let mean = inverse_moment_coeff(beta, 1.0).unwrap_or(1.0);
    let s0 = unit_quantile(b, eps_tail, true);
    let level = eps_tail * (mean / s0).min(1.0);
    let s_max = unit_quantile(b, level, true);
    let tail_mass = inverse_sf_unit(b, s_max);

    // Geometric panels in the lower tail only matter for the mapped g rule,
    // where they resolve the heavy upper tail of D_1.
    let panels = panel_count(q).max(2);
    let tail_panels = (panels / 2).max(1);
    let low_panels = panels / 3;
    let bulk_panels = panels - tail_panels - low_panels;
    let mut edges = vec![0.0];
    let bulk_floor = if low_panels > 0 {
        let (l0, l1) = (eps_tail.ln(), 0.1f64.ln());
        for j in 0..low_panels {
            edges.push(unit_quantile(b, (l0 + (l1 - l0) * j as f64 / low_panels as f64).exp(), false));
        }
        0.1
    } else {
        0.0
    };
    for j in 0..bulk_panels {
        let p = bulk_floor + (0.9 - bulk_floor) * j as f64 / bulk_panels as f64;
        if p > 0.0 {
            edges.push(unit_quantile(b, p, false));
        }
    }
    let top_bulk = unit_quantile(b, 0.1, true);
    if top_bulk < s_max {
        edges.push(top_bulk);
        let (l0, l1) = (0.1f64.ln(), tail_mass.ln());
        for j in 1..tail_panels {
            let lev = (l0 + (l1 - l0) * j as f64 / tail_panels as f64).exp();
            edges.push(unit_quantile(b, lev, true));
        }
    }
    edges.push(s_max);
    edges.dedup();
    let median = unit_quantile(b, 0.5, false);
    let mass = |lo: f64, hi: f64| {
        if lo >= median {
            inverse_sf_unit(b, lo) - inverse_sf_unit(b, hi)
        } else {
            inverse_cdf_unit(b, hi) - inverse_cdf_unit(b, lo)
        }
    };
    let (mut nodes, mut weights) = panel_rule(&edges, |s| mainardi_raw(b, s), mass);
    dedup_increasing(&mut nodes, &mut weights);
    QuadratureRule { nodes, weights, tail_mass, target: KernelTarget::H, beta, time: 1.0 }
}

/// `D_1` has the law of `E_1^{-1/β}`, so the `h` rule maps onto a `g` rule
/// with the same weights and truncated mass.
fn unit_g_rule(beta: FracOrder, q: usize, eps_tail: f64) -> QuadratureRule {
    let h = unit_h_rule(beta, q, eps_tail);
    let e = -1.0 / beta.value();
    let nodes = h.nodes.iter().rev().map(|z| z.powf(e)).collect();
    let weights = h.weights.iter().rev().copied().collect();
    QuadratureRule { nodes, weights, tail_mass: h.tail_mass, target: KernelTarget::G, beta, time: 1.0 }
}

/// Rule for `∫_0^∞ f(s) h_β(s, t) ds` with default options.
pub fn h_quadrature(beta: FracOrder, t: f64, q: usize, eps_tail: f64) -> Result<QuadratureRule> {
    h_quadrature_with(beta, t, q, eps_tail, &QuadratureOptions::default())
}

pub fn h_quadrature_with(
    beta: FracOrder,
    t: f64,
    q: usize,
    eps_tail: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureRule> {
    check_args(beta, t, q, eps_tail)?;
    let rule = unit_h_rule(beta, q, eps_tail).rescaled(t)?;
    check_rule(&rule, opts)?;
    Ok(rule)
}

/// Rule for `∫_0^∞ f(r) g_β(r, s) dr` with default options.
pub fn g_quadrature(beta: FracOrder, s: f64, q: usize, eps_tail: f64) -> Result<QuadratureRule> {
    g_quadrature_with(beta, s, q, eps_tail, &QuadratureOptions::default())
}

pub fn g_quadrature_with(
    beta: FracOrder,
    s: f64,
    q: usize,
    eps_tail: f64,
    opts: &QuadratureOptions,
) -> Result<QuadratureRule> {
    check_args(beta, s, q, eps_tail)?;
    let rule = unit_g_rule(beta, q, eps_tail).rescaled(s)?;
    check_rule(&rule, opts)?;
    Ok(rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::mittag_leffler;

    fn b(v: f64) -> FracOrder {
        FracOrder::new(v).unwrap()
    }

    #[test]
    fn h_rule_examples() {
        let r = h_quadrature(b(0.5), 1.0, 64, 1e-6).unwrap();
        let sw = r.weight_sum();
        assert!(sw <= 1.0 + 1e-12 && sw >= 1.0 - 1e-5, "{sw}");
        assert!((r.apply(|s| s) - 1.128_379_167_095_512_6).abs() < 1e-4);
        let r4 = h_quadrature(b(0.5), 4.0, 64, 1e-6).unwrap();
        assert_eq!(r4.weights, r.weights);
        for (a, c) in r4.nodes.iter().zip(&r.nodes) {
            assert!((a - 2.0 * c).abs() <= 1e-15 * a);
        }
        assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(r.tail_mass <= 1e-6);
    }

    #[test]
    fn g_rule_examples() {
        let r = g_quadrature(b(0.5), 1.0, 64, 1e-6).unwrap();
        let sw = r.weight_sum();
        assert!(sw <= 1.0 + 1e-12 && sw >= 1.0 - 1e-5, "{sw}");
        assert!((r.apply(|x| (-x).exp()) - (-1f64).exp()).abs() < 1e-4);
        let r16 = g_quadrature(b(0.5), 16.0, 64, 1e-6).unwrap();
        for (a, c) in r16.nodes.iter().zip(&r.nodes) {
            assert!((a - 256.0 * c).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn laplace_transform_of_stable_law() {
        for &beta in &[0.3, 0.5, 0.7, 0.9] {
            let r = g_quadrature(b(beta), 1.0, 128, 1e-10).unwrap();
            for &lam in &[0.1, 1.0, 3.0] {
                let got = r.apply(|x| (-lam * x).exp());
                let want = (-f64::powf(lam, beta)).exp();
                assert!((got - want).abs() < 5e-6, "β={beta} λ={lam}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn moments() {
        for &beta in &[0.3, 0.5, 0.7, 0.9] {
            for &t in &[0.5, 1.0, 2.0] {
                let r = h_quadrature(b(beta), t, 128, 1e-8).unwrap();
                for &g in &[1.0, 2.0] {
                    let want = inverse_moment_coeff(b(beta), g).unwrap() * t.powf(g * beta);
                    let got = r.apply(|s| s.powf(g));
                    assert!((got / want - 1.0).abs() < 1e-6, "β={beta} t={t} γ={g}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn exponential_functional() {
        // e^{λs} outweighs the tail of h for λ > 0, so the truncation must be deep.
        for &beta in &[0.3, 0.5, 0.7, 0.9] {
            for &t in &[0.5, 1.0, 2.0] {
                let r = h_quadrature(b(beta), t, 128, 1e-25).unwrap();
                for &lam in &[-1.0, -0.5, 0.5, 1.0] {
                    let want = mittag_leffler(b(beta), lam * t.powf(beta)).unwrap();
                    let got = r.apply(|s| (lam * s).exp());
                    assert!((got / want - 1.0).abs() < 1e-6, "β={beta} t={t} λ={lam}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(h_quadrature(FracOrder::ONE, 1.0, 64, 1e-6).is_err());
        assert!(h_quadrature(b(0.5), 0.0, 64, 1e-6).is_err());
        assert!(h_quadrature(b(0.5), 1.0, 1, 1e-6).is_err());
        assert!(h_quadrature(b(0.5), 1.0, 64, 0.5).is_err());
        let tight = QuadratureOptions { tol_norm: 1e-8, max_horizon: 1.0 };
        assert!(matches!(g_quadrature_with(b(0.5), 1.0, 64, 1e-6, &tight), Err(Error::TailUnreachable { .. })));
    }
}
