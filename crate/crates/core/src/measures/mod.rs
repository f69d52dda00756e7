//! Finite positive measures as weighted particle ensembles, paths of them in
//! time, and the metrics used to compare them.

mod bl;
pub mod io;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::pairwise_sum;
use crate::specfun::FracOrder;

pub use bl::{bl_distance, bl_distance_with, BL_DEFAULT_CAP};

/// Weighted Dirac ensemble `Σ w_i δ_{x_i}` in `ℝ^d`. Points are stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// `points` holds `weights.len()` consecutive blocks of `dim` coordinates.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        if points.len() != dim * weights.len() {
            return Err(Error::DimensionMismatch { expected: dim * weights.len(), got: points.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidMeasure(format!("weights must be positive and finite, found {w}")));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(Self { dim, points, weights })
    }

    pub fn from_points(points: &[Vec<f64>], weights: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
        }
        Self::new(dim, points.concat(), weights)
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim: dim.max(1), points: Vec::new(), weights: Vec::new() }
    }

    pub fn dirac(point: &[f64], mass: f64) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![mass])
    }

    /// One-dimensional ensemble.
    pub fn on_line(xs: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(1, xs.to_vec(), weights.to_vec())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks_exact(self.dim).zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// `Σ w_i |x_i|^k` with the Euclidean norm.
    pub fn moment(&self, k: u32) -> f64 {
        self.expectation(|x| norm(x).powi(k as i32))
    }

    /// `⟨μ, f⟩ = Σ w_i f(x_i)`.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self.iter().map(|(x, w)| w * f(x)).collect();
        pairwise_sum(&terms)
    }

    /// Mass-weighted mean position.
    pub fn mean(&self) -> Vec<f64> {
        let m = self.total_mass();
        (0..self.dim).map(|c| self.expectation(|x| x[c]) / m).collect()
    }

    /// `Φ#μ`: positions mapped, weights untouched. `map` writes `Φ(x)` into its second argument.
    pub fn push_forward(&self, map: impl Fn(&[f64], &mut [f64]) + Sync) -> Self {
        let d = self.dim;
        let mut out = vec![0.0; self.points.len()];
        out.par_chunks_mut(d).zip(self.points.par_chunks(d)).for_each(|(y, x)| map(x, y));
        Self { dim: d, points: out, weights: self.weights.clone() }
    }

    /// Same support, weights multiplied by `a > 0`.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        Self::new(self.dim, self.points.clone(), self.weights.iter().map(|w| w * a).collect())
    }

    /// Sum of measures, keeping every particle.
    pub fn concat<'a>(dim: usize, parts: impl IntoIterator<Item = &'a EmpiricalMeasure>) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            if p.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim });
            }
            points.extend_from_slice(&p.points);
            weights.extend_from_slice(&p.weights);
        }
        Ok(Self { dim, points, weights })
    }

    /// Uniform subsample of at most `n` particles, reweighted to keep the total mass.
    pub fn subsample(&self, n: usize, rng: &mut impl Rng) -> Self {
        if self.len() <= n {
            return self.clone();
        }
        let mut idx = sample(rng, self.len(), n).into_vec();
        idx.sort_unstable();
        let mut points = Vec::with_capacity(n * self.dim);
        let mut weights = Vec::with_capacity(n);
        for &i in &idx {
            points.extend_from_slice(self.point(i));
            weights.push(self.weights[i]);
        }
        let factor = self.total_mass() / pairwise_sum(&weights);
        weights.iter_mut().for_each(|w| *w *= factor);
        Self { dim: self.dim, points, weights }
    }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[inline]
pub(crate) fn dist(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 1 {
        (x[0] - y[0]).abs()
    } else {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }
}

/// `W_1` on the line, `∫ |F_μ − F_ν| dx`. Masses must agree.
pub fn w1_distance_1d(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim.max(nu.dim) });
    }
    let (ma, mb) = (mu.total_mass(), nu.total_mass());
    if (ma - mb).abs() > 1e-12 * ma.max(mb).max(1.0) {
        return Err(Error::MassMismatch { left: ma, right: mb });
    }
    let mut events: Vec<(f64, f64)> = mu
        .points
        .iter()
        .zip(&mu.weights)
        .map(|(&x, &w)| (x, w))
        .chain(nu.points.iter().zip(&nu.weights).map(|(&x, &w)| (x, -w)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut terms = Vec::with_capacity(events.len());
    let mut cdf = 0.0;
    for pair in events.windows(2) {
        cdf += pair[0].1;
        terms.push(cdf.abs() * (pair[1].0 - pair[0].0));
    }
    Ok(pairwise_sum(&terms))
}

/// Time-indexed family of measures on a fixed grid starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurePath {
    times: Vec<f64>,
    measures: Vec<EmpiricalMeasure>,
    beta: FracOrder,
}

impl MeasurePath {
    pub fn new(times: Vec<f64>, measures: Vec<EmpiricalMeasure>, beta: FracOrder) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyPath);
        }
        if times.len() != measures.len() {
            return Err(Error::GridMismatch(format!("{} times for {} measures", times.len(), measures.len())));
        }
        if times[0] != 0.0 {
            return Err(Error::GridMismatch(format!("path must start at t = 0, got {}", times[0])));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::GridMismatch("times must be finite and strictly increasing".into()));
        }
        let dim = measures[0].dim;
        if let Some(m) = measures.iter().find(|m| m.dim != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: m.dim });
        }
        Ok(Self { times, measures, beta })
    }

    /// `μ_t ≡ μ_0` on the given grid.
    pub fn constant(mu0: &EmpiricalMeasure, times: Vec<f64>, beta: FracOrder) -> Result<Self> {
        let measures = vec![mu0.clone(); times.len()];
        Self::new(times, measures, beta)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn measures(&self) -> &[EmpiricalMeasure] {
        &self.measures
    }

    pub fn beta(&self) -> FracOrder {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Grid cell holding `t`: the last index with `times[k] ≤ t`, frozen past the end.
    pub fn index_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    /// Piecewise-constant, right-continuous lookup.
    pub fn at(&self, t: f64) -> &EmpiricalMeasure {
        &self.measures[self.index_at(t)]
    }

    pub fn masses(&self) -> Vec<f64> {
        self.measures.iter().map(EmpiricalMeasure::total_mass).collect()
    }

    /// Checks that every measure carries the mass of `μ_0` up to `rel_tol`.
    pub fn check_mass_conservation(&self, rel_tol: f64) -> Result<()> {
        let m0 = self.measures[0].total_mass();
        for m in self.masses() {
            if (m - m0).abs() > rel_tol * m0.max(f64::MIN_POSITIVE) {
                return Err(Error::MassMismatch { left: m0, right: m });
            }
        }
        Ok(())
    }

    /// Smallest `H` with `d_BL(μ_t, μ_t') ≤ H |t − t'|^β` over adjacent grid pairs.
    pub fn holder_constant(&self) -> Result<f64> {
        let b = self.beta.value();
        let mut h: f64 = 0.0;
        for k in 1..self.len() {
            let d = bl_distance(&self.measures[k - 1], &self.measures[k])?;
            h = h.max(d / (self.times[k] - self.times[k - 1]).powf(b));
        }
        Ok(h)
    }

    /// `sup_k d_BL(μ_{t_k}, ν_{t_k})` over a shared grid.
    pub fn sup_distance(&self, other: &MeasurePath) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::GridMismatch("paths live on different grids".into()));
        }
        let mut sup: f64 = 0.0;
        for (a, b) in self.measures.iter().zip(&other.measures) {
            sup = sup.max(bl_distance(a, b)?);
        }
        Ok(sup)
    }
}
