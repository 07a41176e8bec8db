//! TOML run configuration: schema, validation, and builders that turn a
//! config into a problem, grid, and solver/simulation settings.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{self, MeanVarParams, UtilityBenchmarkParams};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::pde::Stepper;
use crate::problem::{self, ControlBox, ExprCoefficients, ProblemSpec};
use crate::Real;

/// Top-level run configuration.  Unknown keys anywhere are rejected.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in problem selection; mutually exclusive with `[problem]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinSection>,
    /// Expression-defined problem coefficients.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSection>,
    /// Control box and Lipschitz class; required with `[problem]`,
    /// optional override for builtins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSection>,
    /// Spatial/temporal grid; builtins provide defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinSection {
    /// `"utility"` or `"meanvar"`.
    pub name: String,
    #[serde(default = "default_r")]
    pub r: Real,
    #[serde(default = "default_mu")]
    pub mu: Real,
    #[serde(default = "default_sigma")]
    pub sigma: Real,
    #[serde(default = "default_gamma")]
    pub gamma: Real,
    /// Linear drift coefficient of the mean–variance instance.
    #[serde(default = "default_drift")]
    pub drift: Real,
    #[serde(default = "default_horizon")]
    pub horizon: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub mu: String,
    pub sigma: String,
    pub h: String,
    pub f: String,
    pub phi: String,
    pub g_terminal: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_d1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_d2: Option<String>,
    #[serde(default = "default_horizon")]
    pub horizon: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub lower: Real,
    pub upper: Real,
    #[serde(default = "default_lipschitz")]
    pub lipschitz_k: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_lo: Real,
    pub x_hi: Real,
    pub nx: usize,
    pub nt: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_degree")]
    pub basis_degree: usize,
    #[serde(default = "default_x0")]
    pub x0: Real,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            paths: default_paths(),
            steps: default_steps(),
            seed: default_seed(),
            basis_degree: default_degree(),
            x0: default_x0(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_tol")]
    pub tol: Real,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// `"explicit"` or `"implicit"`.
    #[serde(default = "default_stepper")]
    pub stepper: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            tol: default_tol(),
            max_iter: default_max_iter(),
            candidates: default_candidates(),
            stepper: default_stepper(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Sup-norm residual ceiling for both PDE residual checks.
    #[serde(default = "default_residual_tol")]
    pub residual_tol: Real,
    /// Relative slack for the cost/value comparison.
    #[serde(default = "default_cost_rel_tol")]
    pub cost_rel_tol: Real,
    /// Allowed DPP gap as a fraction of `|v(t0, x0)|`.
    #[serde(default = "default_dpp_frac")]
    pub dpp_frac: Real,
    /// Allowed mean absolute deviation of the regression Z from the
    /// field Z, as a fraction of the field scale.
    #[serde(default = "default_z_mad_frac")]
    pub z_mad_frac: Real,
    /// Number of perturbed first-stage candidates in the DPP check.
    #[serde(default = "default_dpp_perturbations")]
    pub dpp_perturbations: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            residual_tol: default_residual_tol(),
            cost_rel_tol: default_cost_rel_tol(),
            dpp_frac: default_dpp_frac(),
            z_mad_frac: default_z_mad_frac(),
            dpp_perturbations: default_dpp_perturbations(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
        }
    }
}

fn default_r() -> Real {
    0.05
}
fn default_mu() -> Real {
    0.1
}
fn default_sigma() -> Real {
    0.2
}
fn default_gamma() -> Real {
    1.0
}
fn default_drift() -> Real {
    0.1
}
fn default_horizon() -> Real {
    1.0
}
fn default_lipschitz() -> Real {
    5.0
}
fn default_paths() -> usize {
    10_000
}
fn default_steps() -> usize {
    256
}
fn default_seed() -> u64 {
    42
}
fn default_degree() -> usize {
    3
}
fn default_x0() -> Real {
    1.0
}
fn default_tol() -> Real {
    1e-6
}
fn default_max_iter() -> usize {
    50
}
fn default_candidates() -> usize {
    101
}
fn default_stepper() -> String {
    "explicit".into()
}
fn default_residual_tol() -> Real {
    0.05
}
fn default_cost_rel_tol() -> Real {
    0.02
}
fn default_dpp_frac() -> Real {
    0.01
}
fn default_z_mad_frac() -> Real {
    0.05
}
fn default_dpp_perturbations() -> usize {
    8
}
fn default_out_dir() -> String {
    "out".into()
}

/// Which ground problem the config selected.
#[derive(Debug, Clone)]
pub enum ProblemKind {
    Utility(UtilityBenchmarkParams<Real>),
    MeanVar(MeanVarParams),
    Expressions,
}

/// Fully resolved run inputs.
#[derive(Debug, Clone)]
pub struct BuiltRun {
    pub spec: ProblemSpec,
    pub grid: GridSpec,
    pub kind: ProblemKind,
    pub stepper: Stepper,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Cross-field validation beyond what serde enforces.
    pub fn validate(&self) -> Result<()> {
        if self.builtin.is_some() && self.problem.is_some() {
            return Err(Error::Config(
                "specify either [builtin] or [problem], not both".into(),
            ));
        }
        if self.builtin.is_none() && self.problem.is_none() {
            return Err(Error::Config(
                "one of [builtin] or [problem] is required".into(),
            ));
        }
        if let Some(b) = &self.builtin {
            if b.name != "utility" && b.name != "meanvar" {
                return Err(Error::Config(format!(
                    "unknown builtin `{}` (expected `utility` or `meanvar`)",
                    b.name
                )));
            }
        }
        if self.problem.is_some() && self.control.is_none() {
            return Err(Error::Config(
                "[control] is required with [problem]".into(),
            ));
        }
        if self.problem.is_some() && self.grid.is_none() {
            return Err(Error::Config("[grid] is required with [problem]".into()));
        }
        if self.mc.paths == 0 {
            return Err(Error::Config("mc.paths must be positive".into()));
        }
        if self.mc.steps == 0 {
            return Err(Error::Config("mc.steps must be positive".into()));
        }
        if self.mc.basis_degree == 0 {
            return Err(Error::Config("mc.basis_degree must be >= 1".into()));
        }
        if self.solver.max_iter == 0 {
            return Err(Error::Config("solver.max_iter must be positive".into()));
        }
        if self.solver.candidates == 0 {
            return Err(Error::Config("solver.candidates must be positive".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol must be positive".into()));
        }
        if self.solver.stepper != "explicit" && self.solver.stepper != "implicit" {
            return Err(Error::Config(format!(
                "unknown stepper `{}` (expected `explicit` or `implicit`)",
                self.solver.stepper
            )));
        }
        if let Some(c) = &self.control {
            if !(c.lower <= c.upper) || c.lipschitz_k < 0.0 {
                return Err(Error::Config(
                    "control bounds must satisfy lower <= upper, lipschitz_k >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Resolves the config into a problem, grid, and stepper.
    pub fn build(&self) -> Result<BuiltRun> {
        self.validate()?;
        let stepper = if self.solver.stepper == "implicit" {
            Stepper::Implicit
        } else {
            Stepper::Explicit
        };
        let lipschitz_k = self
            .control
            .as_ref()
            .map(|c| c.lipschitz_k)
            .unwrap_or_else(default_lipschitz);

        if let Some(b) = &self.builtin {
            return match b.name.as_str() {
                "utility" => {
                    let params =
                        UtilityBenchmarkParams::new(b.r, b.mu, b.sigma, b.gamma, b.horizon)?;
                    let control = self
                        .control
                        .as_ref()
                        .map(|c| ControlBox::scalar(c.lower, c.upper));
                    let spec = bench::utility_problem(&params, control, lipschitz_k)?;
                    let grid = match &self.grid {
                        Some(g) => GridSpec::new(g.x_lo, g.x_hi, g.nx, g.nt, 0.0, b.horizon)?,
                        None => bench::default_grid(&params, self.mc.x0, 201, 800)?,
                    };
                    Ok(BuiltRun {
                        spec,
                        grid,
                        kind: ProblemKind::Utility(params),
                        stepper,
                    })
                }
                "meanvar" => {
                    let params = MeanVarParams {
                        drift: b.drift,
                        sigma: b.sigma,
                        x0: self.mc.x0,
                        horizon: b.horizon,
                    };
                    let spec = bench::meanvar_problem(&params)?;
                    let grid = match &self.grid {
                        Some(g) => GridSpec::new(g.x_lo, g.x_hi, g.nx, g.nt, 0.0, b.horizon)?,
                        None => GridSpec::new(
                            self.mc.x0 - 6.0 * b.sigma * b.horizon.sqrt(),
                            self.mc.x0 + 6.0 * b.sigma * b.horizon.sqrt(),
                            201,
                            800,
                            0.0,
                            b.horizon,
                        )?,
                    };
                    Ok(BuiltRun {
                        spec,
                        grid,
                        kind: ProblemKind::MeanVar(params),
                        stepper,
                    })
                }
                other => Err(Error::Config(format!("unknown builtin `{other}`"))),
            };
        }

        let p = self.problem.as_ref().unwrap();
        let c = self.control.as_ref().unwrap();
        let g = self.grid.as_ref().unwrap();
        let spec = problem::from_expressions(
            &ExprCoefficients {
                mu: p.mu.clone(),
                sigma: p.sigma.clone(),
                h: p.h.clone(),
                f: p.f.clone(),
                phi: p.phi.clone(),
                g_terminal: p.g_terminal.clone(),
                gamma: p.gamma.clone(),
                gamma_d1: p.gamma_d1.clone(),
                gamma_d2: p.gamma_d2.clone(),
            },
            p.horizon,
            ControlBox::scalar(c.lower, c.upper),
            c.lipschitz_k,
        )?;
        let grid = GridSpec::new(g.x_lo, g.x_hi, g.nx, g.nt, 0.0, p.horizon)?;
        Ok(BuiltRun {
            spec,
            grid,
            kind: ProblemKind::Expressions,
            stepper,
        })
    }

    /// A copy with every optional section and default filled in, for the
    /// config echo artifact.
    pub fn effective(&self) -> Result<RunConfig> {
        let built = self.build()?;
        let mut out = self.clone();
        out.grid = Some(GridSection {
            x_lo: built.grid.x_lo,
            x_hi: built.grid.x_hi,
            nx: built.grid.nx,
            nt: built.grid.nt,
        });
        if out.control.is_none() {
            out.control = Some(ControlSection {
                lower: built.spec.control.lower[0],
                upper: built.spec.control.upper[0],
                lipschitz_k: built.spec.lipschitz_k,
            });
        }
        Ok(out)
    }
}
