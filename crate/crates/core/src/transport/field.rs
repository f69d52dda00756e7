//! Velocity fields: explicit `v(x, t)` and interaction fields `v[μ](x) = ∫ K(x − y) dμ(y)`.

use std::fmt::Debug;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// Time-dependent velocity `v(x, t)` with sup bound `V₀` and Lipschitz constant `L` in `x`.
pub trait ExplicitField: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]);
    /// `V₀`; may be infinite for unbounded fields.
    fn bound(&self) -> f64;
    fn lipschitz(&self) -> f64;
    fn is_autonomous(&self) -> bool {
        false
    }
}

/// `z ↦ A z + c`, with `A` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
}

impl AffineMap {
    pub fn new(a: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        let d = c.len();
        if d == 0 || a.len() != d * d || a.iter().chain(&c).any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("affine map needs a finite {d}×{d} matrix and offset")));
        }
        Ok(Self { a, c })
    }

    /// `x ↦ −x` in dimension `d`.
    pub fn negative_identity(d: usize) -> Self {
        let mut a = vec![0.0; d * d];
        (0..d).for_each(|i| a[i * d + i] = -1.0);
        Self { a, c: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// `out = A x` (offset not added).
    #[inline]
    pub fn linear(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.a[i * d..(i + 1) * d].iter().zip(x).map(|(p, q)| p * q).sum();
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.linear(x, out);
        out.iter_mut().zip(&self.c).for_each(|(o, c)| *o += c);
    }

    /// Spectral norm of `A`, by power iteration on `AᵀA`.
    pub fn operator_norm(&self) -> f64 {
        let d = self.dim();
        if self.a.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let mut x = vec![1.0 / (d as f64).sqrt(); d];
        let mut y = vec![0.0; d];
        let mut lambda = 0.0;
        for _ in 0..200 {
            self.linear(&x, &mut y);
            let mut z = vec![0.0; d];
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = (0..d).map(|i| self.a[i * d + j] * y[i]).sum();
            }
            let n = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return 0.0;
            }
            x.iter_mut().zip(&z).for_each(|(a, b)| *a = b / n);
            lambda = n;
        }
        lambda.sqrt() * 1.000_001
    }
}

/// `v(x, t) = v₀`.
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub v: Vec<f64>,
}

impl ExplicitField for ConstantField {
    fn dim(&self) -> usize {
        self.v.len()
    }
    fn eval(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.copy_from_slice(&self.v);
    }
    fn bound(&self) -> f64 {
        self.v.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `v(x, t) = A x + c`; unbounded unless `A = 0`. Damping is `A = −I`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub map: AffineMap,
}

impl AffineField {
    pub fn damping(d: usize) -> Self {
        Self { map: AffineMap::negative_identity(d) }
    }
}

impl ExplicitField for AffineField {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        self.map.apply(x, out);
    }
    fn bound(&self) -> f64 {
        if self.map.operator_norm() == 0.0 {
            self.map.c.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            f64::INFINITY
        }
    }
    fn lipschitz(&self) -> f64 {
        self.map.operator_norm()
    }
    fn is_autonomous(&self) -> bool {
        true
    }
}

/// `v(x, t) = e^{−rate·t} u`.
#[derive(Debug, Clone)]
pub struct ExpDecayField {
    pub rate: f64,
    pub u: Vec<f64>,
}

impl ExplicitField for ExpDecayField {
    fn dim(&self) -> usize {
        self.u.len()
    }
    fn eval(&self, _x: &[f64], t: f64, out: &mut [f64]) {
        let f = (-self.rate * t).exp();
        out.iter_mut().zip(&self.u).for_each(|(o, u)| *o = f * u);
    }
    fn bound(&self) -> f64 {
        self.u.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// Displacement kernel `K` with sup bound and Lipschitz constant.
pub trait InteractionKernel: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn eval(&self, z: &[f64], out: &mut [f64]);
    fn bound(&self) -> f64;
    fn lipschitz(&self) -> f64;
    /// `Some` when `K` is affine, which lets `v[μ]` be evaluated from mass and first moment.
    fn affine(&self) -> Option<&AffineMap> {
        None
    }
    /// `K(−z) = −K(z)`.
    fn is_odd(&self) -> bool {
        false
    }
}

/// `K(z) = A z + c`. Attraction is `A = −I`, `c = 0`.
#[derive(Debug, Clone)]
pub struct AffineKernel {
    pub map: AffineMap,
}

impl AffineKernel {
    pub fn attraction(d: usize) -> Self {
        Self { map: AffineMap::negative_identity(d) }
    }

    pub fn zero(d: usize) -> Self {
        Self { map: AffineMap { a: vec![0.0; d * d], c: vec![0.0; d] } }
    }
}

impl InteractionKernel for AffineKernel {
    fn dim(&self) -> usize {
        self.map.dim()
    }
    fn eval(&self, z: &[f64], out: &mut [f64]) {
        self.map.apply(z, out);
    }
    fn bound(&self) -> f64 {
        if self.map.operator_norm() == 0.0 {
            self.map.c.iter().map(|v| v * v).sum::<f64>().sqrt()
        } else {
            f64::INFINITY
        }
    }
    fn lipschitz(&self) -> f64 {
        self.map.operator_norm()
    }
    fn affine(&self) -> Option<&AffineMap> {
        Some(&self.map)
    }
    fn is_odd(&self) -> bool {
        self.map.c.iter().all(|&c| c == 0.0)
    }
}

/// `K(z) = z / (1 + |z|²)`: bounded by 1/2, Lipschitz with constant 1.
#[derive(Debug, Clone)]
pub struct RepulsionKernel {
    pub dim: usize,
}

impl InteractionKernel for RepulsionKernel {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, z: &[f64], out: &mut [f64]) {
        let r2: f64 = z.iter().map(|v| v * v).sum();
        let f = 1.0 / (1.0 + r2);
        out.iter_mut().zip(z).for_each(|(o, z)| *o = f * z);
    }
    fn bound(&self) -> f64 {
        0.5
    }
    fn lipschitz(&self) -> f64 {
        1.0
    }
    fn is_odd(&self) -> bool {
        true
    }
}

/// Either an explicit field or an interaction field.
#[derive(Debug, Clone)]
pub enum VelocityField {
    Explicit(Arc<dyn ExplicitField>),
    Interaction(Arc<dyn InteractionKernel>),
}

impl VelocityField {
    pub fn explicit(f: impl ExplicitField + 'static) -> Self {
        Self::Explicit(Arc::new(f))
    }

    pub fn interaction(k: impl InteractionKernel + 'static) -> Self {
        Self::Interaction(Arc::new(k))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Explicit(f) => f.dim(),
            Self::Interaction(k) => k.dim(),
        }
    }

    /// Sup bound of the velocity acting on measures of the given mass.
    pub fn bound(&self, mass: f64) -> f64 {
        match self {
            Self::Explicit(f) => f.bound(),
            Self::Interaction(k) => k.bound() * mass,
        }
    }

    /// Lipschitz constant in `x` for measures of the given mass.
    pub fn lipschitz(&self, mass: f64) -> f64 {
        match self {
            Self::Explicit(f) => f.lipschitz(),
            Self::Interaction(k) => k.lipschitz() * mass,
        }
    }

    /// Velocities at the flat `positions`: `v(x, t)`, or `v[μ](x)` for interaction fields.
    pub fn evaluate_all(&self, mu: &EmpiricalMeasure, t: f64, positions: &[f64], out: &mut [f64]) {
        let d = self.dim();
        match self {
            Self::Explicit(f) => {
                out.par_chunks_mut(d).zip(positions.par_chunks(d)).for_each(|(o, x)| f.eval(x, t, o));
            }
            Self::Interaction(k) => interaction_velocity(k.as_ref(), &[(1.0, mu)], positions, out),
        }
    }
}

/// `Σ_c a_c v[μ_c](x)` at every position in `positions`.
pub(crate) fn interaction_velocity(
    k: &dyn InteractionKernel,
    parts: &[(f64, &EmpiricalMeasure)],
    positions: &[f64],
    out: &mut [f64],
) {
    let d = k.dim();
    if let Some(map) = k.affine() {
        // v[μ](x) = A(m x − Σ w y) + m c
        let mut m = 0.0;
        let mut s = vec![0.0; d];
        for &(a, mu) in parts {
            m += a * mu.total_mass();
            for (c, s) in s.iter_mut().enumerate() {
                *s += a * mu.expectation(|y| y[c]);
            }
        }
        out.par_chunks_mut(d).zip(positions.par_chunks(d)).for_each(|(o, x)| {
            let z: Vec<f64> = x.iter().zip(&s).map(|(x, s)| m * x - s).collect();
            map.linear(&z, o);
            o.iter_mut().zip(&map.c).for_each(|(o, c)| *o += m * c);
        });
        return;
    }
    out.par_chunks_mut(d).zip(positions.par_chunks(d)).for_each(|(o, x)| {
        o.iter_mut().for_each(|v| *v = 0.0);
        let mut z = vec![0.0; d];
        let mut kz = vec![0.0; d];
        for &(a, mu) in parts {
            let mut acc = vec![0.0; d];
            for (y, w) in mu.iter() {
                z.iter_mut().zip(x.iter().zip(y)).for_each(|(z, (x, y))| *z = x - y);
                k.eval(&z, &mut kz);
                acc.iter_mut().zip(&kz).for_each(|(s, k)| *s += w * k);
            }
            o.iter_mut().zip(&acc).for_each(|(o, s)| *o += a * s);
        }
    });
}
