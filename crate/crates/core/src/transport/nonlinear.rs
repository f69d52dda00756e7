use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::field::interaction_velocity;
use super::{check_step, flow_positions, Cohorts, EnsembleVelocity, InteractionKernel, Mixer, SolverConfig, UnitRule};
use crate::error::{Error, Result};
use crate::measures::io::write_atomic;
use crate::measures::{bl_distance, EmpiricalMeasure, MeasurePath};
use crate::specfun::stable_sf;
use crate::subordinator::RngSpec;
use crate::transport::VelocityField;

/// One line of the Picard log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardSweep {
    pub sweep: usize,
    pub sup_dbl: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PicardLog {
    pub sweeps: Vec<PicardSweep>,
}

impl PicardLog {
    pub fn distances(&self) -> Vec<f64> {
        self.sweeps.iter().map(|s| s.sup_dbl).collect()
    }

    /// Ratios of successive sweep distances, an empirical contraction factor.
    pub fn contraction(&self) -> Vec<f64> {
        self.sweeps.windows(2).map(|w| w[1].sup_dbl / w[0].sup_dbl).collect()
    }

    /// JSON lines `{sweep, sup_dbl, wall_time}`.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for s in &self.sweeps {
            out.push_str(&serde_json::to_string(s)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, file: &Path) -> Result<()> {
        let text = self.to_jsonl()?;
        let mut buf = Vec::new();
        buf.write_all(text.as_bytes())?;
        write_atomic(file, &buf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearDiagnostics {
    /// Real-time grid carrying the iterates: output times, then a geometric extension.
    pub internal_times: Vec<f64>,
    pub real_horizon: f64,
    /// Largest `h` node needed for the output grid.
    pub internal_horizon: f64,
    /// `P(D_{S_max} > T_ext)`: mass of the clock that sees the frozen path.
    pub frozen_tail_probability: f64,
    /// `2 V₀ P(D_{S_max} > T_ext)`, the induced velocity error bound.
    pub frozen_velocity_bound: f64,
    /// Mass, first and second absolute moments of `μ_0`.
    pub initial_moments: [f64; 3],
    pub contraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearSolution {
    pub path: MeasurePath,
    pub log: PicardLog,
    pub diagnostics: NonlinearDiagnostics,
}

/// `ṽ^μ(x, s) = Σ ω_q v[μ_{s^{1/β} r_q}](x)`, with `g` weights grouped by path cell.
struct PathEffective<'a> {
    kernel: &'a dyn InteractionKernel,
    path: &'a MeasurePath,
    beta: f64,
    g: Option<&'a UnitRule>,
    /// Mass and first moment of each path measure, for affine kernels.
    stats: Option<Vec<(f64, Vec<f64>)>>,
    lipschitz: f64,
}

impl<'a> PathEffective<'a> {
    fn new(kernel: &'a dyn InteractionKernel, path: &'a MeasurePath, beta: f64, g: Option<&'a UnitRule>) -> Self {
        let d = kernel.dim();
        let stats = kernel.affine().map(|_| {
            path.measures()
                .iter()
                .map(|m| (m.total_mass(), (0..d).map(|c| m.expectation(|y| y[c])).collect()))
                .collect()
        });
        let mass = path.masses().into_iter().fold(0.0, f64::max);
        Self { kernel, path, beta, g, stats, lipschitz: kernel.lipschitz() * mass }
    }

    fn cells(&self, s: f64) -> Vec<(usize, f64)> {
        match self.g {
            Some(g) if s > 0.0 => {
                let scale = s.powf(1.0 / self.beta);
                let mut w = vec![0.0; self.path.len()];
                for (r, om) in g.nodes.iter().zip(&g.weights) {
                    w[self.path.index_at(scale * r)] += om;
                }
                w.into_iter().enumerate().filter(|(_, w)| *w > 0.0).collect()
            }
            _ => vec![(self.path.index_at(s), 1.0)],
        }
    }
}

impl EnsembleVelocity for PathEffective<'_> {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn eval_all(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let cells = self.cells(s);
        let d = self.dim();
        if let (Some(map), Some(stats)) = (self.kernel.affine(), &self.stats) {
            let mut m = 0.0;
            let mut sy = vec![0.0; d];
            for &(k, w) in &cells {
                m += w * stats[k].0;
                sy.iter_mut().zip(&stats[k].1).for_each(|(a, b)| *a += w * b);
            }
            let mut z = vec![0.0; d];
            for (o, x) in out.chunks_exact_mut(d).zip(x.chunks_exact(d)) {
                z.iter_mut().zip(x.iter().zip(&sy)).for_each(|(z, (x, s))| *z = m * x - s);
                map.linear(&z, o);
                o.iter_mut().zip(&map.c).for_each(|(o, c)| *o += m * c);
            }
            return;
        }
        let parts: Vec<(f64, &EmpiricalMeasure)> = cells.iter().map(|&(k, w)| (w, &self.path.measures()[k])).collect();
        interaction_velocity(self.kernel, &parts, x, out);
    }
}

/// Classical coupled particle system `ẋ_i = Σ_j w_j K(x_i − x_j)`.
struct Coupled<'a> {
    kernel: &'a dyn InteractionKernel,
    weights: &'a [f64],
    lipschitz: f64,
}

impl EnsembleVelocity for Coupled<'_> {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn eval_all(&self, _s: f64, x: &[f64], out: &mut [f64]) {
        let mu = EmpiricalMeasure::new(self.dim(), x.to_vec(), self.weights.to_vec())
            .expect("particle positions stay finite under a Lipschitz field");
        interaction_velocity(self.kernel, &[(1.0, &mu)], x, out);
    }
}

/// Merges bitwise-identical support points.
fn compact(mu: &EmpiricalMeasure) -> EmpiricalMeasure {
    let d = mu.dim();
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    let key = |i: usize| mu.point(i);
    idx.sort_by(|&a, &b| {
        key(a).iter().zip(key(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut points: Vec<f64> = Vec::with_capacity(mu.points().len());
    let mut weights: Vec<f64> = Vec::with_capacity(mu.len());
    for i in idx {
        let x = mu.point(i);
        let same =
            !weights.is_empty() && points[points.len() - d..].iter().zip(x).all(|(a, b)| a.to_bits() == b.to_bits());
        if same {
            *weights.last_mut().unwrap() += mu.weights()[i];
        } else {
            points.extend_from_slice(x);
            weights.push(mu.weights()[i]);
        }
    }
    EmpiricalMeasure::new(d, points, weights).expect("merging keeps weights positive")
}

/// `d_BL` evaluated on compacted measures, each subsampled to at most `cap` particles with stream `spec`.
pub(crate) fn sampled_distance(a: &EmpiricalMeasure, b: &EmpiricalMeasure, cap: usize, spec: RngSpec) -> Result<f64> {
    let reduce = |m: &EmpiricalMeasure| {
        let c = compact(m);
        if c.len() > cap {
            c.subsample(cap, &mut spec.rng())
        } else {
            c
        }
    };
    bl_distance(&reduce(a), &reduce(b))
}

/// Output times followed by `T·ρ^j` up to `T_ext`.
fn internal_grid(config: &SolverConfig) -> Vec<f64> {
    let mut g = config.times.clone();
    let t = config.horizon();
    let t_ext = config.real_horizon();
    let mut r = t * config.extension_ratio;
    while r < t_ext * (1.0 - 1e-12) {
        g.push(r);
        r *= config.extension_ratio;
    }
    if t_ext > t {
        g.push(t_ext);
    }
    g
}

fn moments(mu: &EmpiricalMeasure) -> [f64; 3] {
    [mu.total_mass(), mu.moment(1), mu.moment(2)]
}

fn kernel_of(v: &VelocityField) -> Result<&dyn InteractionKernel> {
    match v {
        VelocityField::Interaction(k) => Ok(k.as_ref()),
        VelocityField::Explicit(_) => Err(Error::Config("the nonlinear solver needs an interaction field".into())),
    }
}

/// Picard iteration for `μ_t = ∫ Φ^μ_s#μ_0 h_β(s, t) ds` (plus a source layer when `cohorts` is set).
pub(crate) fn picard(
    kernel: &dyn InteractionKernel,
    mu0: &EmpiricalMeasure,
    cohorts: Option<&Cohorts>,
    config: &SolverConfig,
    log: &mut PicardLog,
) -> Result<NonlinearSolution> {
    let start = Instant::now();
    let h = UnitRule::h(config)?;
    let g = UnitRule::g(config)?;
    let beta = config.beta;
    let mixer = Mixer { beta, h: h.as_ref(), ds: config.ode_step };
    let grid = internal_grid(config);
    let n_out = config.times.len();
    let s_max = mixer.horizon(&config.times);
    let tail = if beta.is_classical() {
        if s_max > config.real_horizon() {
            1.0
        } else {
            0.0
        }
    } else {
        stable_sf(beta.value(), config.real_horizon() / s_max.powf(1.0 / beta.value()))
    };
    let v0 = kernel.bound() * mu0.total_mass();
    let mut diagnostics = NonlinearDiagnostics {
        internal_times: grid.clone(),
        real_horizon: config.real_horizon(),
        internal_horizon: s_max,
        frozen_tail_probability: tail,
        frozen_velocity_bound: if tail == 0.0 { 0.0 } else { 2.0 * v0 * tail },
        initial_moments: moments(mu0),
        contraction: Vec::new(),
    };

    let spec = RngSpec::new(config.seed);
    let theta = config.relaxation;
    let mut current = MeasurePath::constant(mu0, grid.clone(), beta)?;
    for sweep in 1..=config.picard_max_iters {
        let vel = PathEffective::new(kernel, &current, beta.value(), g.as_ref());
        let mut next = mixer.assemble(&vel, mu0, cohorts, &grid)?;
        if theta < 1.0 {
            for (k, m) in next.iter_mut().enumerate().skip(1) {
                let old = current.measures()[k].scaled(1.0 - theta)?;
                *m = EmpiricalMeasure::concat(m.dim(), [&old, &m.scaled(theta)?])?;
            }
        }
        let mut sup: f64 = 0.0;
        for k in 0..n_out {
            let d = sampled_distance(&next[k], &current.measures()[k], config.dbl_subsample, spec.derive(k as u64))?;
            sup = sup.max(d);
        }
        log.sweeps.push(PicardSweep { sweep, sup_dbl: sup, wall_time: start.elapsed().as_secs_f64() });
        current = MeasurePath::new(grid.clone(), next, beta)?;
        if sup < config.picard_tol {
            diagnostics.contraction = log.contraction();
            let measures = current.measures()[..n_out].to_vec();
            return Ok(NonlinearSolution {
                path: MeasurePath::new(config.times.clone(), measures, beta)?,
                log: log.clone(),
                diagnostics,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: config.picard_max_iters,
        last: log.sweeps.last().map_or(f64::NAN, |s| s.sup_dbl),
        trace: log.distances(),
    })
}

/// Solves the interaction problem; `log` receives one entry per Picard sweep
/// even when the iteration fails.
///
/// For `β = 1` the coupled particle system is integrated directly and the log stays empty.
pub fn solve_nonlinear_logged(
    v: &VelocityField,
    mu0: &EmpiricalMeasure,
    config: &SolverConfig,
    log: &mut PicardLog,
) -> Result<NonlinearSolution> {
    config.validate()?;
    let kernel = kernel_of(v)?;
    if kernel.dim() != mu0.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), got: kernel.dim() });
    }
    if config.beta.is_classical() {
        let vel = Coupled { kernel, weights: mu0.weights(), lipschitz: 2.0 * kernel.lipschitz() * mu0.total_mass() };
        check_step(&vel, config.ode_step)?;
        let pos = flow_positions(&vel, mu0.points(), 0.0, &config.times, config.ode_step);
        let measures = pos
            .into_iter()
            .map(|p| EmpiricalMeasure::new(mu0.dim(), p, mu0.weights().to_vec()))
            .collect::<Result<_>>()?;
        return Ok(NonlinearSolution {
            path: MeasurePath::new(config.times.clone(), measures, config.beta)?,
            log: log.clone(),
            diagnostics: NonlinearDiagnostics {
                internal_times: config.times.clone(),
                real_horizon: config.horizon(),
                internal_horizon: config.horizon(),
                frozen_tail_probability: 0.0,
                frozen_velocity_bound: 0.0,
                initial_moments: moments(mu0),
                contraction: Vec::new(),
            },
        });
    }
    picard(kernel, mu0, None, config, log)
}

/// Solves the interaction problem by Picard iteration from the constant path `μ_0`.
pub fn solve_nonlinear(v: &VelocityField, mu0: &EmpiricalMeasure, config: &SolverConfig) -> Result<NonlinearSolution> {
    solve_nonlinear_logged(v, mu0, config, &mut PicardLog::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{mittag_leffler, FracOrder};
    use crate::transport::{AffineKernel, RepulsionKernel};

    fn two_diracs() -> EmpiricalMeasure {
        EmpiricalMeasure::on_line(&[-1.0, 1.0], &[0.5, 0.5]).unwrap()
    }

    #[test]
    fn zero_kernel_converges_at_once() {
        let v = VelocityField::interaction(AffineKernel::zero(1));
        let sol = solve_nonlinear(&v, &two_diracs(), &SolverConfig::uniform(FracOrder::HALF, 1.0, 4)).unwrap();
        assert_eq!(sol.log.sweeps.len(), 1);
        assert_eq!(sol.log.sweeps[0].sup_dbl, 0.0);
        for m in sol.path.measures() {
            let m = compact(m);
            assert_eq!(m.points(), two_diracs().points());
            assert!(m.weights().iter().all(|w| (w - 0.5).abs() < 1e-14), "{m:?}");
        }
    }

    #[test]
    fn attraction_spread_follows_mittag_leffler() {
        let v = VelocityField::interaction(AffineKernel::attraction(1));
        let sol = solve_nonlinear(&v, &two_diracs(), &SolverConfig::uniform(FracOrder::HALF, 1.0, 4)).unwrap();
        let spread = sol.path.measures().last().unwrap().expectation(|x| x[0].abs());
        let want = mittag_leffler(FracOrder::HALF, -1.0).unwrap();
        assert!((spread - want).abs() < 1e-5, "{spread} vs {want}");
        let classical = solve_nonlinear(&v, &two_diracs(), &SolverConfig::uniform(FracOrder::ONE, 1.0, 4)).unwrap();
        let spread = classical.path.measures().last().unwrap().expectation(|x| x[0].abs());
        assert!((spread - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn repulsion_keeps_symmetry_and_centre() {
        let v = VelocityField::interaction(RepulsionKernel { dim: 1 });
        let mu = EmpiricalMeasure::on_line(&[-0.5, 0.0, 0.5], &[0.25, 0.5, 0.25]).unwrap();
        let mut cfg = SolverConfig::uniform(FracOrder::new(0.7).unwrap(), 0.5, 2);
        cfg.q_h = 16;
        cfg.q_g = 16;
        cfg.picard_tol = 1e-7;
        let sol = solve_nonlinear(&v, &mu, &cfg).unwrap();
        assert!(sol.log.sweeps.len() >= 2);
        for m in sol.path.measures() {
            assert!(m.expectation(|x| x[0]).abs() < 1e-12);
            let mirror = m.push_forward(|x, y| y[0] = -x[0]);
            assert!(bl_distance(&compact(m), &compact(&mirror)).unwrap() < 1e-9);
        }
        let spread0 = mu.moment(1);
        let spread1 = sol.path.measures().last().unwrap().moment(1);
        assert!(spread1 > spread0);
    }

    #[test]
    fn non_convergence_carries_trace() {
        let v = VelocityField::interaction(RepulsionKernel { dim: 1 });
        let mu = EmpiricalMeasure::on_line(&[-0.5, 0.5], &[0.5, 0.5]).unwrap();
        let mut cfg = SolverConfig::uniform(FracOrder::HALF, 1.0, 2);
        cfg.q_h = 16;
        cfg.q_g = 16;
        cfg.picard_max_iters = 1;
        let mut log = PicardLog::default();
        match solve_nonlinear_logged(&v, &mu, &cfg, &mut log) {
            Err(Error::NonConvergence { iterations: 1, trace, .. }) => assert_eq!(trace, log.distances()),
            other => panic!("unexpected {other:?}"),
        }
        assert!(log.to_jsonl().unwrap().starts_with("{\"sweep\":1,\"sup_dbl\":"));
    }
}
