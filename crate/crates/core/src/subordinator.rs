//! Monte Carlo for the stable subordinator `D_τ` and its inverse
//! `E_t = inf{τ > 0 : D_τ > t}`.
//!
//! Unit draws use Kanter's representation. First passage is simulated on a
//! fixed internal-time grid of step `dtau`, so every sampled `E_t` is a grid
//! time and overshoots the exact value by less than `dtau`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::caputo::{l1_weights, TimeSeries};
use crate::error::{Error, Result};
use crate::integrate::pairwise_sum;
use crate::specfun::{mittag_leffler, FracOrder};

/// Default internal-time step for first-passage simulation.
pub const DEFAULT_DTAU: f64 = 1e-3;

/// Seed plus stream index. Equal specs yield identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSpec {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    /// Child stream number `index`; children of distinct specs do not collide in practice.
    pub fn derive(self, index: u64) -> Self {
        Self { seed: self.seed, stream_id: splitmix64(splitmix64(self.stream_id) ^ index) }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// Uniform on the open interval (0, 1).
#[inline]
fn open_unit(rng: &mut impl Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// One draw of `D_1` from `rng`, with `E e^{-s D_1} = e^{-s^β}`.
#[inline]
pub fn draw_stable_unit(beta: f64, rng: &mut impl Rng) -> f64 {
    let u = std::f64::consts::PI * open_unit(rng);
    let w = -open_unit(rng).ln();
    let a = (beta * u).sin() / u.sin().powf(1.0 / beta);
    a * (((1.0 - beta) * u).sin() / w).powf((1.0 - beta) / beta)
}

/// One draw of `D_1` from the stream `spec`.
pub fn sample_stable_unit(beta: FracOrder, spec: RngSpec) -> Result<f64> {
    let b = beta.fractional()?;
    Ok(draw_stable_unit(b, &mut spec.rng()))
}

fn check_dtau(dtau: f64) -> Result<()> {
    if dtau > 0.0 && dtau.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("internal time step must be positive, got {dtau}")))
    }
}

/// `E_t` at each of the nondecreasing `times`, read off one simulated path of `D`.
pub fn draw_inverse_times(beta: f64, times: &[f64], dtau: f64, rng: &mut impl Rng) -> Vec<f64> {
    if beta == 1.0 {
        return times.to_vec();
    }
    let scale = dtau.powf(1.0 / beta);
    let mut out = Vec::with_capacity(times.len());
    let mut d = 0.0;
    let mut k: u64 = 0;
    for &t in times {
        while d <= t {
            d += scale * draw_stable_unit(beta, rng);
            k += 1;
        }
        out.push(k as f64 * dtau);
    }
    out
}

/// One draw of `E_t`, the grid time at which `D` first exceeds `t`.
pub fn sample_inverse(beta: FracOrder, t: f64, dtau: f64, spec: RngSpec) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    check_dtau(dtau)?;
    Ok(draw_inverse_times(beta.value(), &[t], dtau, &mut spec.rng())[0])
}

/// Samples of `E_t` on `n` independent paths, path `i` using `spec.derive(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSamples {
    pub times: Vec<f64>,
    /// Row-major, one row of `times.len()` values per path.
    pub values: Vec<f64>,
    pub n: usize,
}

impl InverseSamples {
    /// All draws at `times[k]`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().skip(k).step_by(self.times.len()).copied().collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.times.len();
        &self.values[i * m..(i + 1) * m]
    }
}

pub fn sample_inverse_paths(
    beta: FracOrder,
    times: &[f64],
    n: usize,
    dtau: f64,
    spec: RngSpec,
) -> Result<InverseSamples> {
    check_dtau(dtau)?;
    if times.is_empty() || times.windows(2).any(|w| w[0] > w[1]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Domain("sampling times must be nonnegative and nondecreasing".into()));
    }
    let b = beta.value();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| draw_inverse_times(b, times, dtau, &mut spec.derive(i as u64).rng()))
        .collect();
    Ok(InverseSamples { times: times.to_vec(), values, n })
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { estimate: mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// Whether `value` lies within `k` standard errors.
    pub fn brackets(&self, value: f64, k: f64) -> bool {
        (self.estimate - value).abs() <= k * self.stderr
    }
}

fn check_n(n: usize) -> Result<()> {
    if n < 100 {
        return Err(Error::Domain(format!("need at least 100 samples, got {n}")));
    }
    Ok(())
}

/// Estimate of `E[f(E_t)]`.
pub fn mc_inverse_functional(
    beta: FracOrder,
    t: f64,
    n: usize,
    dtau: f64,
    spec: RngSpec,
    f: impl Fn(f64) -> f64,
) -> Result<Estimate> {
    check_n(n)?;
    if beta.is_classical() {
        let v = f(t);
        return Ok(Estimate { estimate: v, stderr: 0.0, n });
    }
    let s = sample_inverse_paths(beta, &[t], n, dtau, spec)?;
    let xs: Vec<f64> = s.values.iter().map(|&e| f(e)).collect();
    Ok(Estimate::from_samples(&xs))
}

/// Estimate of `E[E_t^γ]`.
pub fn mc_inverse_moment(beta: FracOrder, gamma: f64, t: f64, n: usize, dtau: f64, spec: RngSpec) -> Result<Estimate> {
    mc_inverse_functional(beta, t, n, dtau, spec, |e| e.powf(gamma))
}

/// Estimate of `E[e^{λ E_t}]`; exact for `β = 1` and for `λ = 0`.
pub fn mc_exponential_functional(
    beta: FracOrder,
    lambda: f64,
    t: f64,
    n: usize,
    dtau: f64,
    spec: RngSpec,
) -> Result<Estimate> {
    if lambda == 0.0 {
        check_n(n)?;
        return Ok(Estimate { estimate: 1.0, stderr: 0.0, n });
    }
    mc_inverse_functional(beta, t, n, dtau, spec, |e| (lambda * e).exp())
}

/// Values of `D` on the internal grid `τ_j = j·dtau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubordinatorPath {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub beta: FracOrder,
    pub seed: u64,
}

impl SubordinatorPath {
    /// Path on `[0, horizon]`.
    pub fn sample(beta: FracOrder, horizon: f64, dtau: f64, spec: RngSpec) -> Result<Self> {
        check_dtau(dtau)?;
        let b = beta.value();
        let m = (horizon / dtau).ceil() as usize;
        let scale = dtau.powf(1.0 / b);
        let mut rng = spec.rng();
        let mut values = Vec::with_capacity(m + 1);
        let mut d = 0.0;
        values.push(d);
        for _ in 0..m {
            d += if beta.is_classical() { dtau } else { scale * draw_stable_unit(b, &mut rng) };
            values.push(d);
        }
        let grid = (0..=m).map(|j| j as f64 * dtau).collect();
        Ok(Self { grid, values, beta, seed: spec.seed })
    }

    /// First index `k` with `D(τ_k) > t`, if the path gets there.
    pub fn first_passage_index(&self, t: f64) -> Option<usize> {
        let k = self.values.partition_point(|&d| d <= t);
        (k < self.values.len()).then_some(k)
    }

    /// `E_t` as the bracketing grid time.
    pub fn inverse(&self, t: f64) -> Option<f64> {
        self.first_passage_index(t).map(|k| self.grid[k])
    }
}

/// Solves `∂^β Ψ = λ ℰ_β(λ t^β) + λ Ψ`, `Ψ(0) = 0`, on `[0, T]` by the
/// L1 scheme, implicit in `λΨ`.
///
/// Rejects steps with `λ Γ(2−β) dt^β ≥ 1/2`, where the implicit factor loses
/// more than half of its diagonal.
pub fn solve_psi_fode(beta: FracOrder, lambda: f64, horizon: f64, dt: f64) -> Result<TimeSeries> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
    }
    if !(dt > 0.0) || !(horizon > 0.0) {
        return Err(Error::Domain(format!("need positive step and horizon, got dt = {dt}, T = {horizon}")));
    }
    let b = beta.value();
    let a = dt.powf(-b) / gamma(2.0 - b);
    let ratio = lambda / a;
    if ratio >= 0.5 {
        return Err(Error::StepSize(format!("λ Γ(2−β) dt^β = {ratio:.3} ≥ 0.5; reduce dt")));
    }
    let m = (horizon / dt).round() as usize;
    if m < 2 || (m as f64 * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::GridMismatch(format!("step {dt} does not divide horizon {horizon} into ≥ 2 steps")));
    }
    let w = l1_weights(b, m);
    let mut psi = vec![0.0; m + 1];
    let mut inc = vec![0.0; m];
    for n in 1..=m {
        let t = n as f64 * dt;
        let f = lambda * mittag_leffler(beta, lambda * t.powf(b))?;
        let mut hist = 0.0;
        for k in (1..n).rev() {
            hist += w[k] * inc[n - 1 - k];
        }
        psi[n] = (f + a * psi[n - 1] - a * hist) / (a - lambda);
        inc[n - 1] = psi[n] - psi[n - 1];
    }
    TimeSeries::new(dt, psi)
}
