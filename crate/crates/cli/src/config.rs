//! Strict TOML run configuration: named model kinds, grid and Monte Carlo
//! sizes, diagnostic tunables and output location. Unknown keys are
//! rejected everywhere so a reported number can always be traced back to an
//! explicit input.

use std::path::PathBuf;

use serde::Deserialize;

use marketspan::grid::SpaceTimeGrid;
use marketspan::model::DiffusionModel;
use marketspan::stochvol::{build_stochvol_model, StochVolParams};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSection {
    /// Mean-reverting stochastic volatility market in transformed
    /// coordinates.
    Stochvol(StochVolParams),
    /// Lognormal stock with a passive second factor.
    ConstantVol(ConstantVolSection),
    /// Unit diffusion with coordinate assets; the rank route's toy case.
    IndependentAxes {},
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantVolSection {
    pub nu: f64,
    #[serde(default)]
    pub s21: f64,
    pub s22: f64,
    #[serde(default)]
    pub rate: f64,
    pub gamma: f64,
    #[serde(default = "one")]
    pub p0: f64,
    #[serde(default)]
    pub y0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n1: usize,
    pub n2: usize,
    pub n_t: usize,
    pub theta: f64,
    pub rannacher_steps: usize,
    /// Spatial half-width of the solve domain, in terminal standard
    /// deviations around the start state.
    pub half_width_sds: f64,
    /// Shift the first axis so a payoff kink falls midway between nodes.
    pub kink_midway: bool,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n1: 129,
            n2: 65,
            n_t: 64,
            theta: 0.5,
            rannacher_steps: 2,
            half_width_sds: 5.0,
            kink_midway: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    pub antithetic: bool,
    /// Worker threads; zero runs on the caller thread. Overridden by
    /// `--workers` and by `MARKETSPAN_WORKERS`.
    pub workers: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_paths: 10_000,
            n_steps: 128,
            seed: 42,
            antithetic: false,
            workers: 0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Probe points for the assumption sweep.
    pub n_probes: usize,
    /// Probe points for the completeness rank stage.
    pub completeness_probes: usize,
    /// Relative determinant cutoff counting a probe as near-singular.
    pub near_singular_tol: f64,
    /// Largest near-singular fraction the rank route accepts.
    pub max_singular_fraction: f64,
    /// Absolute floor below which a pairing value is treated as zero.
    pub value_floor: f64,
    /// Required ratio between a pairing value and its quadrature error.
    pub error_factor: f64,
    /// Required ratio between a pairing value and the integrand scale.
    pub rel_floor: f64,
    /// Divided-difference order of the heuristic time-analyticity probes.
    pub time_probe_order: usize,
    /// Probe times for the heuristic radius estimates.
    pub time_probe_grid: Vec<f64>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            n_probes: 4096,
            completeness_probes: 2048,
            near_singular_tol: 1e-6,
            max_singular_fraction: 1e-3,
            value_floor: 1e-12,
            error_factor: 10.0,
            rel_floor: 1e-6,
            time_probe_order: 4,
            time_probe_grid: vec![0.25, 0.5, 0.75],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HedgeSection {
    /// Paths per level in the convergence study.
    pub paths: usize,
    /// Step counts of the convergence study, strictly increasing.
    pub levels: Vec<usize>,
    /// Relative determinant floor below which the hedge holds its previous
    /// position instead of solving a degenerate system.
    pub tol_rel_det: f64,
}

impl Default for HedgeSection {
    fn default() -> Self {
        HedgeSection {
            paths: 2_000,
            levels: vec![32, 64, 128],
            tol_rel_det: 1e-9,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceSection {
    /// Payoff solved by the price command: `derivative` (the market's own
    /// claim), `digital`, `put`, `forward`, or `one`.
    pub target: String,
}

impl Default for PriceSection {
    fn default() -> Self {
        PriceSection {
            target: "derivative".into(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into() }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub hedge: HedgeSection,
    #[serde(default)]
    pub price: PriceSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_path(path: &std::path::Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Detail message when the configured volatility matrix is singular by
    /// construction; such a model cannot price but the validate command
    /// still owes the user an assumption report rather than a refusal.
    pub fn degenerate_volatility(&self) -> Option<String> {
        match &self.model {
            ModelSection::ConstantVol(c) if c.nu <= 0.0 || c.s22 <= 0.0 => Some(format!(
                "volatility matrix [[{}, 0], [{}, {}]] is singular",
                c.nu, c.s21, c.s22
            )),
            _ => None,
        }
    }

    pub fn stochvol_params(&self) -> Option<&StochVolParams> {
        match &self.model {
            ModelSection::Stochvol(p) => Some(p),
            _ => None,
        }
    }

    pub fn build_model(&self) -> Result<DiffusionModel, CliError> {
        match &self.model {
            ModelSection::Stochvol(p) => Ok(build_stochvol_model(p)?),
            ModelSection::ConstantVol(c) => Ok(DiffusionModel::constant_vol(
                c.nu, c.s21, c.s22, c.rate, c.gamma, c.p0, c.y0,
            )?),
            ModelSection::IndependentAxes {} => Ok(DiffusionModel::independent_axes()),
        }
    }

    pub fn build_grid(&self, model: &DiffusionModel) -> Result<SpaceTimeGrid, CliError> {
        let g = &self.grid;
        let domain = model.default_domain(g.half_width_sds)?;
        let mut grid = SpaceTimeGrid::new(domain, g.n1, g.n2, g.n_t, g.theta, g.rannacher_steps)?;
        if g.kink_midway {
            if let Some(kink) = model.g.kink_x1() {
                grid = grid.with_kink_midway(kink);
            }
        }
        Ok(grid)
    }
}
