//! JSON configuration documents for each subcommand. Parsing is strict:
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use fracflow::measures::io::{read_measure_csv, read_path_csv};
use fracflow::measures::{EmpiricalMeasure, MeasurePath};
use fracflow::subordinator::DEFAULT_DTAU;
use fracflow::transport::{
    AffineField, AffineKernel, AffineMap, ConstantField, ExpDecayField, RepulsionKernel, SolverConfig, VelocityField,
};

use crate::CliError;

/// Reads and strictly parses a JSON document.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Resolves `p` against the directory holding the config file.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    pub betas: Vec<f64>,
    /// Evaluation points for `g` and `h`; `s = 0` gives the right limit of `h` and `g = 0`.
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    /// Arguments of the Mittag-Leffler table.
    #[serde(default = "default_z")]
    pub z: Vec<f64>,
}

fn default_z() -> Vec<f64> {
    vec![-10.0, -5.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub betas: Vec<f64>,
    pub times: Vec<f64>,
    /// Moment orders: one record `E[E_t^γ]` per entry.
    #[serde(default)]
    pub gammas: Vec<f64>,
    /// Exponents: one record `E[e^{λE_t}]` per entry.
    #[serde(default)]
    pub lambdas: Vec<f64>,
    pub n: usize,
    #[serde(default = "default_dtau")]
    pub dtau: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_dtau() -> f64 {
    DEFAULT_DTAU
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    Linear,
    Nonlinear,
    Source,
}

/// Built-in velocity fields (`linear`) and interaction kernels (`nonlinear`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    /// `v ≡ v`.
    Constant { v: Vec<f64> },
    /// `v(x) = −x`.
    Damping { dim: usize },
    /// `v(x, t) = e^{−rate·t} u`.
    ExpDecay { rate: f64, u: Vec<f64> },
    /// `v(x) = A x + c`, `A` row-major.
    Affine { a: Vec<f64>, c: Vec<f64> },
    /// `K(z) = −z`.
    Attraction { dim: usize },
    /// `K(z) = z / (1 + |z|²)`.
    Repulsion { dim: usize },
    /// `K(z) = A z + c`.
    AffineKernel { a: Vec<f64>, c: Vec<f64> },
    /// `K ≡ 0`.
    ZeroKernel { dim: usize },
}

impl VelocitySpec {
    pub fn build(&self) -> Result<VelocityField, CliError> {
        let positive = |d: usize| if d == 0 { Err(CliError::Config("dim must be positive".into())) } else { Ok(d) };
        Ok(match self {
            Self::Constant { v } => {
                positive(v.len())?;
                VelocityField::explicit(ConstantField { v: v.clone() })
            }
            Self::Damping { dim } => VelocityField::explicit(AffineField::damping(positive(*dim)?)),
            Self::ExpDecay { rate, u } => {
                positive(u.len())?;
                VelocityField::explicit(ExpDecayField { rate: *rate, u: u.clone() })
            }
            Self::Affine { a, c } => VelocityField::explicit(AffineField { map: AffineMap::new(a.clone(), c.clone())? }),
            Self::Attraction { dim } => VelocityField::interaction(AffineKernel::attraction(positive(*dim)?)),
            Self::Repulsion { dim } => VelocityField::interaction(RepulsionKernel { dim: positive(*dim)? }),
            Self::AffineKernel { a, c } => {
                VelocityField::interaction(AffineKernel { map: AffineMap::new(a.clone(), c.clone())? })
            }
            Self::ZeroKernel { dim } => VelocityField::interaction(AffineKernel::zero(positive(*dim)?)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Dirac {
        point: Vec<f64>,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Equal halves of `mass` at `a` and `b`.
    TwoDirac {
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Tensor grid of `n` points per axis on the box `[lo, hi]`, equal weights.
    UniformGrid {
        lo: Vec<f64>,
        hi: Vec<f64>,
        n: usize,
        #[serde(default = "one")]
        mass: f64,
    },
    /// Particle CSV (`t, particle_id, x_1..x_d, weight`); the first time slice is used.
    File { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl MeasureSpec {
    pub fn build(&self, base: &Path) -> Result<EmpiricalMeasure, CliError> {
        Ok(match self {
            Self::Dirac { point, mass } => EmpiricalMeasure::dirac(point, *mass)?,
            Self::TwoDirac { a, b, mass } => {
                EmpiricalMeasure::from_points(&[a.clone(), b.clone()], vec![0.5 * mass, 0.5 * mass])?
            }
            Self::UniformGrid { lo, hi, n, mass } => {
                if lo.len() != hi.len() || lo.is_empty() || *n == 0 {
                    return Err(CliError::Config("uniform_grid needs matching nonempty lo/hi and n > 0".into()));
                }
                let d = lo.len();
                let count = n.checked_pow(d as u32).ok_or_else(|| CliError::Config("grid too large".into()))?;
                let coord = |k: usize, c: usize| {
                    if *n == 1 {
                        0.5 * (lo[c] + hi[c])
                    } else {
                        lo[c] + (hi[c] - lo[c]) * k as f64 / (*n - 1) as f64
                    }
                };
                let mut points = Vec::with_capacity(count * d);
                for i in 0..count {
                    let mut rest = i;
                    for c in 0..d {
                        points.push(coord(rest % n, c));
                        rest /= n;
                    }
                }
                EmpiricalMeasure::new(d, points, vec![mass / count as f64; count])?
            }
            Self::File { path } => read_measure_csv(&resolve(base, path))?,
        })
    }
}

/// Source `γ_t` for the `source` problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// `γ_t = rate·δ_point` for all `t` on the solver grid.
    Constant { point: Vec<f64>, rate: f64 },
    /// A measure path CSV on its own time grid.
    File { path: PathBuf },
}

impl SourceSpec {
    pub fn build(&self, base: &Path, solver: &SolverConfig) -> Result<MeasurePath, CliError> {
        Ok(match self {
            Self::Constant { point, rate } => {
                let mu = EmpiricalMeasure::dirac(point, *rate)?;
                MeasurePath::constant(&mu, solver.times.clone(), solver.beta)?
            }
            Self::File { path } => read_path_csv(&resolve(base, path), solver.beta)?,
        })
    }
}

/// Output file names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_path_csv")]
    pub path_csv: PathBuf,
    #[serde(default = "default_manifest")]
    pub manifest: PathBuf,
    #[serde(default = "default_picard_log")]
    pub picard_log: PathBuf,
}

fn default_path_csv() -> PathBuf {
    "path.csv".into()
}
fn default_manifest() -> PathBuf {
    "manifest.json".into()
}
fn default_picard_log() -> PathBuf {
    "picard.jsonl".into()
}

impl Default for Outputs {
    fn default() -> Self {
        Self { path_csv: default_path_csv(), manifest: default_manifest(), picard_log: default_picard_log() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub solver: SolverConfig,
    pub velocity: VelocitySpec,
    pub initial: MeasureSpec,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    /// Linear problem only: replace the quadrature by this many Monte Carlo clocks.
    #[serde(default)]
    pub mc_paths: Option<usize>,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    /// Cross-field checks beyond what parsing enforces.
    pub fn validate(&self) -> Result<(), CliError> {
        let interaction = matches!(
            self.velocity,
            VelocitySpec::Attraction { .. }
                | VelocitySpec::Repulsion { .. }
                | VelocitySpec::AffineKernel { .. }
                | VelocitySpec::ZeroKernel { .. }
        );
        match self.problem {
            Problem::Linear if interaction => {
                return Err(CliError::Config("linear problems need an explicit velocity field".into()))
            }
            Problem::Nonlinear if !interaction => {
                return Err(CliError::Config("nonlinear problems need an interaction kernel".into()))
            }
            Problem::Source if self.source.is_none() => {
                return Err(CliError::Config("source problems need a `source` entry".into()))
            }
            Problem::Linear | Problem::Nonlinear if self.source.is_some() => {
                return Err(CliError::Config("`source` is only valid for the source problem".into()))
            }
            _ => {}
        }
        if self.mc_paths.is_some() && self.problem != Problem::Linear {
            return Err(CliError::Config("`mc_paths` is only valid for the linear problem".into()));
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// Settings of the verification suite; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Truncation mass of the `h` rules used by the moment checks.
    pub eps_tail: f64,
    /// Truncation mass of the rules used by the exponential checks.
    pub eps_tail_exponential: f64,
    pub q: usize,
    /// Monte Carlo sample size for the clock checks.
    pub mc_paths: usize,
    /// Monte Carlo sample size for the damping cross-check.
    pub mc_paths_damping: usize,
    pub dtau: f64,
    pub seed: u64,
    /// Number of random ensembles in the BL ≤ W1 check.
    pub ensembles: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            eps_tail: 1e-7,
            eps_tail_exponential: 1e-25,
            q: 64,
            mc_paths: 100_000,
            mc_paths_damping: 10_000,
            dtau: DEFAULT_DTAU,
            seed: 20_240_601,
            ensembles: 200,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_is_strict() {
        let ok = r#"{"problem": "linear", "solver": {"beta": 0.5, "times": [0, 1]},
                     "velocity": {"type": "damping", "dim": 1}, "initial": {"type": "dirac", "point": [0]}}"#;
        let run: RunConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(run.outputs, Outputs::default());
        run.validate().unwrap();
        let extra = ok.replace(r#""dim": 1"#, r#""dim": 1, "rate": 2"#);
        assert!(serde_json::from_str::<RunConfig>(&extra).is_err());
        let nested = ok.replace(r#""beta": 0.5"#, r#""beta": 0.5, "betta": 1"#);
        assert!(serde_json::from_str::<RunConfig>(&nested).is_err());
        let bad_beta = ok.replace(r#""beta": 0.5"#, r#""beta": 1.5"#);
        assert!(serde_json::from_str::<RunConfig>(&bad_beta).is_err());
    }

    #[test]
    fn uniform_grid_covers_the_box() {
        let spec = MeasureSpec::UniformGrid { lo: vec![0.0, -1.0], hi: vec![1.0, 1.0], n: 3, mass: 2.0 };
        let mu = spec.build(Path::new(".")).unwrap();
        assert_eq!(mu.len(), 9);
        assert!((mu.total_mass() - 2.0).abs() < 1e-15);
        let mean = mu.mean();
        assert!((mean[0] - 0.5).abs() < 1e-15 && mean[1].abs() < 1e-15);
        assert_eq!(mu.point(8), &[1.0, 1.0]);
    }

    #[test]
    fn velocity_specs_match_problem_kind() {
        for v in [VelocitySpec::Constant { v: vec![1.0] }, VelocitySpec::Repulsion { dim: 1 }] {
            let linear = matches!(v, VelocitySpec::Constant { .. });
            let mut solver = SolverConfig::new(fracflow::FracOrder::HALF, vec![0.0, 1.0]);
            solver.q_h = 8;
            let run = RunConfig {
                problem: Problem::Linear,
                solver,
                velocity: v.clone(),
                initial: MeasureSpec::Dirac { point: vec![0.0], mass: 1.0 },
                source: None,
                mc_paths: None,
                outputs: Outputs::default(),
            };
            assert_eq!(run.validate().is_ok(), linear);
            assert!(v.build().is_ok());
        }
        assert!(VelocitySpec::Damping { dim: 0 }.build().is_err());
    }
}
