use serde::{Deserialize, Serialize};

use super::nonlinear::{picard, PicardLog};
use super::{Cohorts, LinearEffective, Mixer, SolverConfig, UnitRule};
use crate::error::{Error, Result};
use crate::measures::{EmpiricalMeasure, MeasurePath};
use crate::transport::{solve_linear, solve_nonlinear_logged, VelocityField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSolution {
    pub path: MeasurePath,
    /// `mass(μ_t) − mass(μ_0)` at each output time.
    pub injected_mass: Vec<f64>,
    /// Picard sweeps; empty for explicit fields.
    pub log: PicardLog,
}

/// `Γ_r = Σ_q ω_q γ_{D-node}`: the source averaged over the subordinator at internal time `r`.
fn averaged_source(gamma: &MeasurePath, beta: f64, g: Option<&UnitRule>, r: f64) -> Result<EmpiricalMeasure> {
    let mut cells = vec![0.0; gamma.len()];
    match g {
        Some(g) if r > 0.0 => {
            let scale = r.powf(1.0 / beta);
            for (u, w) in g.nodes.iter().zip(&g.weights) {
                cells[gamma.index_at(scale * u)] += w;
            }
        }
        _ => cells[gamma.index_at(r)] = 1.0,
    }
    let parts = cells
        .iter()
        .zip(gamma.measures())
        .filter(|(w, m)| **w > 0.0 && !m.is_empty())
        .map(|(w, m)| m.scaled(*w))
        .collect::<Result<Vec<_>>>()?;
    EmpiricalMeasure::concat(gamma.dim(), parts.iter())
}

fn build_cohorts(gamma: &MeasurePath, config: &SolverConfig, horizon: f64) -> Result<Cohorts> {
    let g = UnitRule::g(config)?;
    let width = config.cohort_step();
    let count = (horizon / width).ceil().max(1.0) as usize;
    let starts: Vec<f64> = (0..count).map(|c| c as f64 * width).collect();
    let measures = starts
        .iter()
        .map(|&r| averaged_source(gamma, config.beta.value(), g.as_ref(), r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Cohorts { starts, width, measures })
}

fn injected(path: &MeasurePath, mu0: &EmpiricalMeasure) -> Vec<f64> {
    let m0 = mu0.total_mass();
    path.masses().into_iter().map(|m| m - m0).collect()
}

/// Transport with a nonnegative source `γ_t`:
/// `μ_t = ∫ (Φ_s#μ_0 + ∫_0^s Φ_{r→s}#Γ_r dr) h_β(s, t) ds`, `Γ_r = E[γ_{D_r}]`.
///
/// The inner integral uses the rectangle rule on cohorts of width
/// `cohort_step`; cohort `c` is released at `r_c` and carried by the flow.
/// Mass is not conserved; the injected mass is reported.
pub fn solve_with_source(
    v: &VelocityField,
    mu0: &EmpiricalMeasure,
    gamma: &MeasurePath,
    config: &SolverConfig,
) -> Result<SourceSolution> {
    config.validate()?;
    if gamma.dim() != mu0.dim() || v.dim() != mu0.dim() {
        return Err(Error::DimensionMismatch { expected: mu0.dim(), got: gamma.dim().max(v.dim()) });
    }
    if let Some(w) = gamma.measures().iter().flat_map(|m| m.weights().iter()).find(|w| !(**w >= 0.0)) {
        return Err(Error::NegativeSource(*w));
    }
    for m in gamma.measures() {
        if !(m.moment(1).is_finite() && m.moment(2).is_finite()) {
            return Err(Error::InvalidMeasure("source moments must be finite".into()));
        }
    }
    let silent = gamma.measures().iter().all(EmpiricalMeasure::is_empty);
    let mut log = PicardLog::default();
    let path = match v {
        VelocityField::Explicit(field) => {
            if silent {
                solve_linear(v, mu0, config)?
            } else {
                let h = UnitRule::h(config)?;
                let g = UnitRule::g(config)?;
                let vel = LinearEffective { field: field.as_ref(), beta: config.beta.value(), g: g.as_ref() };
                let mixer = Mixer { beta: config.beta, h: h.as_ref(), ds: config.ode_step };
                let cohorts = build_cohorts(gamma, config, mixer.horizon(&config.times))?;
                let measures = mixer.assemble(&vel, mu0, Some(&cohorts), &config.times)?;
                MeasurePath::new(config.times.clone(), measures, config.beta)?
            }
        }
        VelocityField::Interaction(kernel) => {
            if silent {
                solve_nonlinear_logged(v, mu0, config, &mut log)?.path
            } else {
                let h = UnitRule::h(config)?;
                let mixer = Mixer { beta: config.beta, h: h.as_ref(), ds: config.ode_step };
                let mut grid = config.times.clone();
                grid.push(config.real_horizon());
                let cohorts = build_cohorts(gamma, config, mixer.horizon(&grid))?;
                picard(kernel.as_ref(), mu0, Some(&cohorts), config, &mut log)?.path
            }
        }
    };
    Ok(SourceSolution { injected_mass: injected(&path, mu0), path, log })
}
