use rayon::prelude::*;

use super::{advance, check_step, flow_positions, workspace, LinearEffective, Mixer, SolverConfig, UnitRule};
use crate::error::{Error, Result};
use crate::integrate::pairwise_sum;
use crate::measures::{EmpiricalMeasure, MeasurePath};
use crate::subordinator::{draw_inverse_times, Estimate, RngSpec};
use crate::transport::{ExplicitField, VelocityField};

fn explicit(v: &VelocityField) -> Result<&dyn ExplicitField> {
    match v {
        VelocityField::Explicit(f) => Ok(f.as_ref()),
        VelocityField::Interaction(_) => {
            Err(Error::Config("the linear solvers need an explicit velocity field".into()))
        }
    }
}

fn check_inputs(v: &VelocityField, mu0: &EmpiricalMeasure, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if v.dim() != mu0.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), got: v.dim() });
    }
    Ok(())
}

/// `μ_t = ∫ Φ_s#μ_0 h_β(s, t) ds` with `Φ` the flow of `ṽ(x, s) = E[v(x, D_s)]`.
///
/// One flow is integrated through the union of the rescaled `h` nodes of every
/// output time. For `β = 1` this is the plain push-forward `Φ_t#μ_0`.
pub fn solve_linear(v: &VelocityField, mu0: &EmpiricalMeasure, config: &SolverConfig) -> Result<MeasurePath> {
    check_inputs(v, mu0, config)?;
    let field = explicit(v)?;
    let h = UnitRule::h(config)?;
    let g = UnitRule::g(config)?;
    let vel = LinearEffective { field, beta: config.beta.value(), g: g.as_ref() };
    let mixer = Mixer { beta: config.beta, h: h.as_ref(), ds: config.ode_step };
    let measures = mixer.assemble(&vel, mu0, None, &config.times)?;
    MeasurePath::new(config.times.clone(), measures, config.beta)
}

/// Monte Carlo solution: one clock `E_t` per path, pushed through the same flow.
#[derive(Debug, Clone, PartialEq)]
pub struct McSolution {
    /// At each time, `n_paths` consecutive blocks of the initial particles, weights divided by `n_paths`.
    pub path: MeasurePath,
    pub n_paths: usize,
    pub particles_per_path: usize,
}

impl McSolution {
    /// Per-path values of `⟨Φ_{E_t}#μ_0, f⟩` at time index `k`.
    pub fn path_values(&self, k: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        let mu = &self.path.measures()[k];
        let d = mu.dim();
        let n = self.particles_per_path;
        let scale = self.n_paths as f64;
        (0..self.n_paths)
            .into_par_iter()
            .map(|p| {
                let pts = &mu.points()[p * n * d..(p + 1) * n * d];
                let ws = &mu.weights()[p * n..(p + 1) * n];
                let terms: Vec<f64> = pts.chunks_exact(d).zip(ws).map(|(x, w)| w * scale * f(x)).collect();
                pairwise_sum(&terms)
            })
            .collect()
    }

    /// Mean over paths of `⟨Φ_{E_t}#μ_0, f⟩` with its standard error.
    pub fn estimate(&self, k: usize, f: impl Fn(&[f64]) -> f64 + Sync) -> Estimate {
        Estimate::from_samples(&self.path_values(k, f))
    }

    /// In one dimension: `W_1` between the Monte Carlo measure at index `k` and
    /// `reference`, together with the sampling scale `∫ sd(F̂(x)) dx`.
    /// `W_1` dominates the dual bounded-Lipschitz distance.
    pub fn w1_band(&self, k: usize, reference: &EmpiricalMeasure) -> Result<(f64, f64)> {
        let mu = &self.path.measures()[k];
        if mu.dim() != 1 || reference.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: mu.dim().max(reference.dim()) });
        }
        let w1 = crate::measures::w1_distance_1d(mu, reference)?;
        let n = self.particles_per_path;
        let np = self.n_paths as f64;
        // Sweep over the sorted support, tracking the per-path CDFs and Σ_p F_p².
        let mut events: Vec<(f64, usize, f64)> =
            mu.points().iter().zip(mu.weights()).enumerate().map(|(i, (&x, &w))| (x, i / n, w * np)).collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut fp = vec![0.0; self.n_paths];
        let (mut s1, mut s2) = (0.0, 0.0);
        let mut terms = Vec::with_capacity(events.len());
        for (i, &(x, p, w)) in events.iter().enumerate() {
            s2 += 2.0 * fp[p] * w + w * w;
            fp[p] += w;
            s1 += w;
            if let Some(next) = events.get(i + 1) {
                let mean = s1 / np;
                let var = (s2 / np - mean * mean).max(0.0) * np / (np - 1.0);
                terms.push((var / np).sqrt() * (next.0 - x));
            }
        }
        Ok((w1, pairwise_sum(&terms)))
    }
}

/// Samples `E_t` on `n_paths` independent clocks and pushes `μ_0` through the
/// deterministic flow to each sampled internal time.
///
/// The flow is tabulated on the uniform grid `j·ode_step` and finished with one
/// partial Runge–Kutta step per sample. Clock `p` uses `RngSpec::new(seed).derive(p)`.
pub fn solve_linear_mc(
    v: &VelocityField,
    mu0: &EmpiricalMeasure,
    config: &SolverConfig,
    n_paths: usize,
) -> Result<McSolution> {
    check_inputs(v, mu0, config)?;
    if n_paths < 2 {
        return Err(Error::Config("need at least two Monte Carlo paths".into()));
    }
    let field = explicit(v)?;
    let g = UnitRule::g(config)?;
    let vel = LinearEffective { field, beta: config.beta.value(), g: g.as_ref() };
    let ds = config.ode_step;
    check_step(&vel, ds)?;
    let b = config.beta.value();
    let spec = RngSpec::new(config.seed);
    let times = &config.times;
    let clocks: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| draw_inverse_times(b, times, config.dtau, &mut spec.derive(p as u64).rng()))
        .collect();
    let e_max = clocks.iter().flat_map(|c| c.iter().copied()).fold(0.0, f64::max);
    let m = (e_max / ds).floor() as usize + 1;
    let grid: Vec<f64> = (0..=m).map(|j| j as f64 * ds).collect();
    let table = flow_positions(&vel, mu0.points(), 0.0, &grid, ds);

    let n = mu0.len();
    let d = mu0.dim();
    let inv = 1.0 / n_paths as f64;
    let mut measures = Vec::with_capacity(times.len());
    for k in 0..times.len() {
        let blocks: Vec<Vec<f64>> = clocks
            .par_iter()
            .map(|c| {
                let e = c[k];
                let j = ((e / ds).floor() as usize).min(m);
                let mut x = table[j].clone();
                let rest = e - grid[j];
                if rest > 0.0 {
                    let mut work = workspace(n * d);
                    advance(&vel, &mut x, grid[j], e, ds, &mut work);
                }
                x
            })
            .collect();
        let points: Vec<f64> = blocks.concat();
        let weights: Vec<f64> = (0..n_paths).flat_map(|_| mu0.weights().iter().map(|w| w * inv)).collect();
        measures.push(EmpiricalMeasure::new(d, points, weights)?);
    }
    Ok(McSolution { path: MeasurePath::new(times.clone(), measures, config.beta)?, n_paths, particles_per_path: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::FracOrder;
    use crate::transport::{AffineField, ConstantField};

    fn cfg(beta: FracOrder) -> SolverConfig {
        SolverConfig::uniform(beta, 1.0, 4)
    }

    #[test]
    fn zero_field_keeps_initial_measure() {
        let mu = EmpiricalMeasure::on_line(&[-1.0, 2.0], &[0.3, 0.7]).unwrap();
        let v = VelocityField::explicit(ConstantField { v: vec![0.0] });
        let path = solve_linear(&v, &mu, &cfg(FracOrder::HALF)).unwrap();
        for m in path.measures() {
            assert!(crate::measures::bl_distance(m, &mu).unwrap() < 1e-15);
        }
        let mc = solve_linear_mc(&v, &mu, &cfg(FracOrder::HALF), 50).unwrap();
        for k in 0..mc.path.len() {
            let e = mc.estimate(k, |x| x[0]);
            assert!((e.estimate - mu.expectation(|x| x[0])).abs() < 1e-14 && e.stderr < 1e-14);
        }
    }

    #[test]
    fn dirac_under_unit_field_moves_with_the_clock() {
        let mu = EmpiricalMeasure::dirac(&[0.0], 1.0).unwrap();
        let v = VelocityField::explicit(ConstantField { v: vec![1.0] });
        let path = solve_linear(&v, &mu, &cfg(FracOrder::HALF)).unwrap();
        let mean = path.measures().last().unwrap().expectation(|x| x[0]);
        assert!((mean - 1.128_379_167_095_512_6).abs() < 1e-5, "{mean}");
        path.check_mass_conservation(1e-14).unwrap();
        let classical = solve_linear(&v, &mu, &cfg(FracOrder::ONE)).unwrap();
        for (t, m) in classical.times().iter().zip(classical.measures()) {
            assert_eq!(m.len(), 1);
            assert!((m.point(0)[0] - t).abs() < 1e-13);
        }
    }

    #[test]
    fn mc_agrees_with_quadrature_on_damping() {
        let mu = EmpiricalMeasure::dirac(&[1.0], 1.0).unwrap();
        let v = VelocityField::explicit(AffineField::damping(1));
        let c = cfg(FracOrder::new(0.7).unwrap());
        let quad = solve_linear(&v, &mu, &c).unwrap();
        let mc = solve_linear_mc(&v, &mu, &c, 4000).unwrap();
        for k in 1..c.times.len() {
            let (w1, sd) = mc.w1_band(k, &quad.measures()[k]).unwrap();
            assert!(w1 < 3.0 * sd + 1e-3, "k={k}: {w1} vs {sd}");
        }
    }
}
