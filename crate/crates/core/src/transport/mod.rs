//! Particle solvers for `∂^β μ_t + div(v μ_t) = 0`.
//!
//! The fractional problem is rewritten as a classical transport problem in
//! internal time `s` with the averaged velocity `ṽ(x, s) = E[v(x, D_s)]`,
//! whose flow `Φ_s` is pushed forward and then averaged over the inverse
//! subordinator: `μ_t = ∫ Φ_s#μ_0 h_β(s, t) ds`. Each solution measure is
//! stored as the product ensemble of particles and `h`-quadrature nodes.

mod field;
mod linear;
mod nonlinear;
mod source;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, MeasurePath};
use crate::specfun::{
    g_quadrature_with, h_quadrature_with, FracOrder, KernelTarget, QuadratureOptions, QuadratureRule,
};

pub use field::{
    AffineField, AffineKernel, AffineMap, ConstantField, ExpDecayField, ExplicitField, InteractionKernel,
    RepulsionKernel, VelocityField,
};
pub use linear::{solve_linear, solve_linear_mc, McSolution};
pub use nonlinear::{
    solve_nonlinear, solve_nonlinear_logged, NonlinearDiagnostics, NonlinearSolution, PicardLog, PicardSweep,
};
pub use source::{solve_with_source, SourceSolution};

/// Numerical parameters shared by all solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub beta: FracOrder,
    /// Output grid, starting at 0.
    pub times: Vec<f64>,
    #[serde(default = "defaults::q")]
    pub q_h: usize,
    #[serde(default = "defaults::q")]
    pub q_g: usize,
    #[serde(default = "defaults::eps_tail")]
    pub eps_tail: f64,
    #[serde(default = "defaults::tol_norm")]
    pub tol_norm: f64,
    /// Runge–Kutta step in internal time.
    #[serde(default = "defaults::ode_step")]
    pub ode_step: f64,
    #[serde(default = "defaults::picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "defaults::picard_max_iters")]
    pub picard_max_iters: usize,
    /// Weight of the new iterate in a Picard update; 1 means no damping.
    #[serde(default = "defaults::relaxation")]
    pub relaxation: f64,
    /// Largest admissible internal time `S_max`.
    #[serde(default = "defaults::internal_horizon")]
    pub internal_horizon: f64,
    /// Real time `T_ext` past which the nonlinear path is frozen; defaults to `4T`.
    #[serde(default)]
    pub real_horizon: Option<f64>,
    /// Ratio of the geometric real-time grid between `T` and `T_ext`.
    #[serde(default = "defaults::extension_ratio")]
    pub extension_ratio: f64,
    /// Width of source cohorts in internal time; defaults to `5·ode_step`.
    #[serde(default)]
    pub cohort_step: Option<f64>,
    /// First-passage step for Monte Carlo clocks.
    #[serde(default = "defaults::dtau")]
    pub dtau: f64,
    /// Particle cap for distance evaluations in the Picard stopping test.
    #[serde(default = "defaults::dbl_subsample")]
    pub dbl_subsample: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn q() -> usize {
        64
    }
    pub fn eps_tail() -> f64 {
        1e-7
    }
    pub fn tol_norm() -> f64 {
        1e-8
    }
    pub fn ode_step() -> f64 {
        0.01
    }
    pub fn picard_tol() -> f64 {
        1e-6
    }
    pub fn picard_max_iters() -> usize {
        50
    }
    pub fn relaxation() -> f64 {
        1.0
    }
    pub fn internal_horizon() -> f64 {
        1e100
    }
    pub fn extension_ratio() -> f64 {
        1.25
    }
    pub fn dtau() -> f64 {
        1e-3
    }
    pub fn dbl_subsample() -> usize {
        200
    }
}

impl SolverConfig {
    /// Defaults on the given output grid.
    pub fn new(beta: FracOrder, times: Vec<f64>) -> Self {
        Self {
            beta,
            times,
            q_h: defaults::q(),
            q_g: defaults::q(),
            eps_tail: defaults::eps_tail(),
            tol_norm: defaults::tol_norm(),
            ode_step: defaults::ode_step(),
            picard_tol: defaults::picard_tol(),
            picard_max_iters: defaults::picard_max_iters(),
            relaxation: defaults::relaxation(),
            internal_horizon: defaults::internal_horizon(),
            real_horizon: None,
            extension_ratio: defaults::extension_ratio(),
            cohort_step: None,
            dtau: defaults::dtau(),
            dbl_subsample: defaults::dbl_subsample(),
            seed: 0,
        }
    }

    /// Defaults on `0, T/m, …, T`.
    pub fn uniform(beta: FracOrder, horizon: f64, m: usize) -> Self {
        Self::new(beta, uniform_grid(horizon, m))
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn real_horizon(&self) -> f64 {
        self.real_horizon.unwrap_or(4.0 * self.horizon())
    }

    pub fn cohort_step(&self) -> f64 {
        self.cohort_step.unwrap_or(5.0 * self.ode_step)
    }

    pub fn quadrature_options(&self) -> QuadratureOptions {
        QuadratureOptions { tol_norm: self.tol_norm, max_horizon: self.internal_horizon }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.times;
        if t.len() < 2 || t[0] != 0.0 || !t.windows(2).all(|w| w[0] < w[1]) || !t.iter().all(|x| x.is_finite()) {
            return bad("times must start at 0 and increase strictly to some T > 0".into());
        }
        if self.q_h < 2 || self.q_g < 2 {
            return bad("quadrature orders must be at least 2".into());
        }
        if !(self.eps_tail > 0.0 && self.eps_tail < 0.1) {
            return bad(format!("eps_tail must lie in (0, 0.1), got {}", self.eps_tail));
        }
        let positive = [
            ("tol_norm", self.tol_norm),
            ("ode_step", self.ode_step),
            ("picard_tol", self.picard_tol),
            ("internal_horizon", self.internal_horizon),
            ("dtau", self.dtau),
            ("cohort_step", self.cohort_step()),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.picard_max_iters == 0 || self.dbl_subsample < 2 {
            return bad("picard_max_iters and dbl_subsample must be positive".into());
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return bad(format!("relaxation must lie in (0, 1], got {}", self.relaxation));
        }
        if !(self.extension_ratio > 1.0) {
            return bad(format!("extension_ratio must exceed 1, got {}", self.extension_ratio));
        }
        if !(self.real_horizon() >= self.horizon()) {
            return bad(format!("real_horizon {} is below the final time {}", self.real_horizon(), self.horizon()));
        }
        Ok(())
    }
}

/// `0, T/m, …, T` with exact endpoints.
pub fn uniform_grid(horizon: f64, m: usize) -> Vec<f64> {
    (0..=m).map(|k| if k == m { horizon } else { horizon * k as f64 / m as f64 }).collect()
}

/// Velocity of the auxiliary classical problem, evaluated on a whole ensemble at once.
pub trait EnsembleVelocity: Sync {
    fn dim(&self) -> usize;
    fn lipschitz(&self) -> f64;
    /// Writes `ṽ(x_i, s)` for every particle of the flat `x`.
    fn eval_all(&self, s: f64, x: &[f64], out: &mut [f64]);
}

/// Adapter for a per-particle closure `(x, s, out)`.
pub struct PointwiseVelocity<F> {
    pub dim: usize,
    pub lipschitz: f64,
    pub f: F,
}

impl<F: Fn(&[f64], f64, &mut [f64]) + Sync> EnsembleVelocity for PointwiseVelocity<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    fn eval_all(&self, s: f64, x: &[f64], out: &mut [f64]) {
        out.par_chunks_mut(self.dim).zip(x.par_chunks(self.dim)).for_each(|(o, x)| (self.f)(x, s, o));
    }
}

/// Positions `Φ_{s_q}(x_i, 0)` of every particle at every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTable {
    pub dim: usize,
    pub nodes: Vec<f64>,
    /// One flat block of particle positions per node.
    pub positions: Vec<Vec<f64>>,
}

impl FlowTable {
    /// The push-forward `Φ_{s_q}#μ` for node `q`, reusing the weights of `mu`.
    pub fn measure_at(&self, q: usize, mu: &EmpiricalMeasure) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.dim, self.positions[q].clone(), mu.weights().to_vec())
    }
}

fn check_step(vel: &dyn EnsembleVelocity, ds: f64) -> Result<()> {
    if !(ds > 0.0) || !ds.is_finite() {
        return Err(Error::StepSize(format!("ode step must be positive, got {ds}")));
    }
    if ds * vel.lipschitz() > 1.0 {
        return Err(Error::StepSize(format!("ode_step·L = {} exceeds 1", ds * vel.lipschitz())));
    }
    Ok(())
}

fn rk4_step(vel: &dyn EnsembleVelocity, s: f64, h: f64, x: &mut [f64], work: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, y] = work;
    vel.eval_all(s, x, k1);
    y.iter_mut().zip(x.iter().zip(k1.iter())).for_each(|(y, (x, k))| *y = x + 0.5 * h * k);
    vel.eval_all(s + 0.5 * h, y, k2);
    y.iter_mut().zip(x.iter().zip(k2.iter())).for_each(|(y, (x, k))| *y = x + 0.5 * h * k);
    vel.eval_all(s + 0.5 * h, y, k3);
    y.iter_mut().zip(x.iter().zip(k3.iter())).for_each(|(y, (x, k))| *y = x + h * k);
    vel.eval_all(s + h, y, k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Carries `x` from internal time `from` to `to` in steps no longer than `ds`.
pub(crate) fn advance(
    vel: &dyn EnsembleVelocity,
    x: &mut [f64],
    from: f64,
    to: f64,
    ds: f64,
    work: &mut [Vec<f64>; 5],
) {
    let gap = to - from;
    if gap <= 0.0 || x.is_empty() {
        return;
    }
    let n = ((gap / ds) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = gap / n as f64;
    for j in 0..n {
        rk4_step(vel, from + j as f64 * h, h, x, work);
    }
}

fn workspace(n: usize) -> [Vec<f64>; 5] {
    std::array::from_fn(|_| vec![0.0; n])
}

/// Positions at each of the nondecreasing `nodes ≥ s0`, starting from `x0` at `s0`.
pub(crate) fn flow_positions(vel: &dyn EnsembleVelocity, x0: &[f64], s0: f64, nodes: &[f64], ds: f64) -> Vec<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut work = workspace(x.len());
    let mut s = s0;
    let mut out = Vec::with_capacity(nodes.len());
    for &node in nodes {
        advance(vel, &mut x, s, node, ds, &mut work);
        s = s.max(node);
        out.push(x.clone());
    }
    out
}

/// Runge–Kutta flow of `mu0` recorded at `s_nodes`, which must start at 0 and increase.
pub fn integrate_flow(
    vel: &dyn EnsembleVelocity,
    mu0: &EmpiricalMeasure,
    s_nodes: &[f64],
    ds: f64,
) -> Result<FlowTable> {
    if vel.dim() != mu0.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), got: vel.dim() });
    }
    if s_nodes.first() != Some(&0.0) || !s_nodes.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::GridMismatch("flow nodes must start at 0 and increase strictly".into()));
    }
    check_step(vel, ds)?;
    let positions = flow_positions(vel, mu0.points(), 0.0, s_nodes, ds);
    Ok(FlowTable { dim: mu0.dim(), nodes: s_nodes.to_vec(), positions })
}

/// Unit-time rule with weights rescaled to sum to one.
#[derive(Debug, Clone)]
pub(crate) struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    fn from_rule(r: QuadratureRule) -> Self {
        let sum = r.weight_sum();
        let mut nodes = Vec::with_capacity(r.len());
        let mut weights = Vec::with_capacity(r.len());
        for (s, w) in r.nodes.into_iter().zip(r.weights) {
            if w > 0.0 {
                nodes.push(s);
                weights.push(w / sum);
            }
        }
        Self { nodes, weights }
    }

    pub fn h(config: &SolverConfig) -> Result<Option<Self>> {
        if config.beta.is_classical() {
            return Ok(None);
        }
        let r = h_quadrature_with(config.beta, 1.0, config.q_h, config.eps_tail, &config.quadrature_options())?;
        Ok(Some(Self::from_rule(r)))
    }

    pub fn g(config: &SolverConfig) -> Result<Option<Self>> {
        if config.beta.is_classical() {
            return Ok(None);
        }
        let opts = QuadratureOptions { tol_norm: config.tol_norm, max_horizon: f64::MAX };
        let r = g_quadrature_with(config.beta, 1.0, config.q_g, config.eps_tail, &opts)?;
        Ok(Some(Self::from_rule(r)))
    }
}

/// `ṽ(x, s) = Σ ω_q v(x, s^{1/β} r_q)` for an explicit field.
pub(crate) struct LinearEffective<'a> {
    pub field: &'a dyn ExplicitField,
    pub beta: f64,
    pub g: Option<&'a UnitRule>,
}

impl EnsembleVelocity for LinearEffective<'_> {
    fn dim(&self) -> usize {
        self.field.dim()
    }
    fn lipschitz(&self) -> f64 {
        self.field.lipschitz()
    }
    fn eval_all(&self, s: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let f = self.field;
        match self.g {
            Some(g) if !f.is_autonomous() && s > 0.0 => {
                let scale = s.powf(1.0 / self.beta);
                out.par_chunks_mut(d).zip(x.par_chunks(d)).for_each(|(o, x)| {
                    let mut tmp = vec![0.0; d];
                    o.iter_mut().for_each(|v| *v = 0.0);
                    for (r, w) in g.nodes.iter().zip(&g.weights) {
                        f.eval(x, scale * r, &mut tmp);
                        o.iter_mut().zip(&tmp).for_each(|(o, t)| *o += w * t);
                    }
                });
            }
            _ => out.par_chunks_mut(d).zip(x.par_chunks(d)).for_each(|(o, x)| f.eval(x, s, o)),
        }
    }
}

fn check_rule(rule: &QuadratureRule, target: KernelTarget, time: f64) -> Result<()> {
    if rule.target != target {
        return Err(Error::RuleMismatch(format!("expected a {target:?} rule, got {:?}", rule.target)));
    }
    if (rule.time - time).abs() > 1e-12 * time.abs().max(1.0) {
        return Err(Error::RuleMismatch(format!("rule built for time {}, evaluated at {time}", rule.time)));
    }
    Ok(())
}

fn normalized(rule: &QuadratureRule) -> impl Iterator<Item = (f64, f64)> + '_ {
    let sum = rule.weight_sum();
    rule.nodes.iter().zip(&rule.weights).map(move |(&r, &w)| (r, w / sum))
}

/// `ṽ(x, t) = Σ ω_q v(x, r_q)` for a `g` rule built at time `t`; weights are renormalized.
pub fn effective_velocity(v: &dyn ExplicitField, x: &[f64], t: f64, rule: &QuadratureRule) -> Result<Vec<f64>> {
    check_rule(rule, KernelTarget::G, t)?;
    if x.len() != v.dim() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: x.len() });
    }
    let mut out = vec![0.0; x.len()];
    let mut tmp = vec![0.0; x.len()];
    for (r, w) in normalized(rule) {
        v.eval(x, r, &mut tmp);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += w * t);
    }
    Ok(out)
}

/// `ṽ^μ(x, s) = Σ ω_q v[μ_{r_q}](x)` with right-continuous lookup in `path`, frozen past its end.
pub fn effective_velocity_from_path(
    k: &dyn InteractionKernel,
    path: &MeasurePath,
    x: &[f64],
    s: f64,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    check_rule(rule, KernelTarget::G, s)?;
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    if x.len() != k.dim() || path.dim() != k.dim() {
        return Err(Error::DimensionMismatch { expected: k.dim(), got: x.len().max(path.dim()) });
    }
    let mut cells = vec![0.0; path.len()];
    for (r, w) in normalized(rule) {
        cells[path.index_at(r)] += w;
    }
    let parts: Vec<(f64, &EmpiricalMeasure)> =
        cells.iter().zip(path.measures()).filter(|(w, _)| **w > 0.0).map(|(w, m)| (*w, m)).collect();
    let mut out = vec![0.0; x.len()];
    field::interaction_velocity(k, &parts, x, &mut out);
    Ok(out)
}

/// Source cohorts released at `starts[c]` with density `measures[c]` per unit internal time.
pub(crate) struct Cohorts {
    pub starts: Vec<f64>,
    pub width: f64,
    pub measures: Vec<EmpiricalMeasure>,
}

impl Cohorts {
    /// Rectangle weight of cohort `c` in `∫_0^s … dr`.
    fn weight(&self, c: usize, s: f64) -> f64 {
        let r = self.starts[c];
        if s <= r {
            0.0
        } else {
            (r + self.width).min(s) - r
        }
    }
}

/// Builds `μ_t = Σ_q ω_q (Φ_{s_q}#μ_0 + Σ_c W_c(s_q) Φ_{r_c→s_q}#Γ_c)` for each `t`.
pub(crate) struct Mixer<'a> {
    pub beta: FracOrder,
    pub h: Option<&'a UnitRule>,
    pub ds: f64,
}

impl Mixer<'_> {
    /// `h` nodes and weights at time `t > 0`; a single unit node at `s = t` when `β = 1`.
    pub fn nodes(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        match self.h {
            None => (vec![t], vec![1.0]),
            Some(h) => {
                let f = t.powf(self.beta.value());
                (h.nodes.iter().map(|u| f * u).collect(), h.weights.clone())
            }
        }
    }

    /// Largest internal time needed for the grid `times`.
    pub fn horizon(&self, times: &[f64]) -> f64 {
        times.iter().filter(|&&t| t > 0.0).map(|&t| self.nodes(t).0.last().copied().unwrap_or(0.0)).fold(0.0, f64::max)
    }

    pub fn assemble(
        &self,
        vel: &dyn EnsembleVelocity,
        mu0: &EmpiricalMeasure,
        cohorts: Option<&Cohorts>,
        times: &[f64],
    ) -> Result<Vec<EmpiricalMeasure>> {
        check_step(vel, self.ds)?;
        let d = mu0.dim();
        let rules: Vec<(Vec<f64>, Vec<f64>)> =
            times.iter().map(|&t| if t > 0.0 { self.nodes(t) } else { (vec![], vec![]) }).collect();
        let mut union: Vec<f64> = rules.iter().flat_map(|r| r.0.iter().copied()).collect();
        union.push(0.0);
        union.sort_by(f64::total_cmp);
        union.dedup();
        let index = |s: f64| union.partition_point(|&u| u < s);

        let mut builders: Vec<(Vec<f64>, Vec<f64>)> = times.iter().map(|_| (Vec::new(), Vec::new())).collect();
        let flow = flow_positions(vel, mu0.points(), 0.0, &union, self.ds);
        for (k, (nodes, weights)) in rules.iter().enumerate() {
            let (pts, ws) = &mut builders[k];
            if times[k] == 0.0 {
                pts.extend_from_slice(mu0.points());
                ws.extend_from_slice(mu0.weights());
                continue;
            }
            for (s, w) in nodes.iter().zip(weights) {
                pts.extend_from_slice(&flow[index(*s)]);
                ws.extend(mu0.weights().iter().map(|m| m * w));
            }
        }
        drop(flow);

        if let Some(co) = cohorts {
            for (c, gamma) in co.measures.iter().enumerate() {
                if gamma.is_empty() {
                    continue;
                }
                let r = co.starts[c];
                let first = union.partition_point(|&u| u <= r);
                let later = &union[first..];
                if later.is_empty() {
                    continue;
                }
                let pos = flow_positions(vel, gamma.points(), r, later, self.ds);
                for (k, (nodes, weights)) in rules.iter().enumerate() {
                    let (pts, ws) = &mut builders[k];
                    for (s, w) in nodes.iter().zip(weights) {
                        let wc = co.weight(c, *s);
                        if wc <= 0.0 {
                            continue;
                        }
                        pts.extend_from_slice(&pos[index(*s) - first]);
                        ws.extend(gamma.weights().iter().map(|m| m * w * wc));
                    }
                }
            }
        }
        builders.into_iter().map(|(p, w)| EmpiricalMeasure::new(d, p, w)).collect()
    }
}
