//! The JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use broadwell::io::read_table;
use broadwell::operators::{OperatorKind, QuadratureSpec};
use broadwell::{Data, Domain, Grid, Params, ProblemData, RectDomain, SlabGrid, Surface, TimeSlab};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub c: f64,
    #[serde(rename = "S")]
    pub s: f64,
    /// Defaults to `1.05 * 2cS`.
    #[serde(default)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
}

/// A datum inline or as a CSV table `u,v,value` (path relative to the
/// config file).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum DatumSpec {
    Csv { csv: PathBuf },
    Inline(Surface<f64>),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub t0: f64,
    pub initial: [DatumSpec; 4],
    /// `[N1-, N2-, N3+, N4+]`
    pub inflow: [DatumSpec; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Slab,
    March,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceOutput {
    /// Every time level of every slab.
    #[default]
    All,
    /// The last time level of every slab.
    Terminal,
    None,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Defaults to `1e-10 (1 + q)`.
    pub tol_fix: Option<f64>,
    pub max_iter: Option<usize>,
    /// Defaults to `1e-9`, or `1e-6` when a datum is tabulated.
    pub compat: Option<f64>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    pub residual: f64,
    pub balance: f64,
    pub oracle: f64,
    /// Courant number of the upwind comparison.
    pub courant: f64,
    /// Random operator trials on the first slab; 0 skips them.
    pub trials: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            residual: 1e-3,
            balance: 1e-3,
            oracle: 1e-2,
            courant: 0.5,
            trials: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsSpec,
    pub domain: Domain,
    pub grid: GridSpec,
    pub data: DataSpec,
    pub mode: Mode,
    /// End of the slab in slab mode.
    #[serde(default)]
    pub slab_end: Option<f64>,
    /// End time of a march.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// End time of a march as a multiple of the step floor `g(gamma R0)`.
    #[serde(default)]
    pub horizon_floors: Option<f64>,
    pub r0: f64,
    #[serde(default)]
    pub operator: OperatorKind,
    #[serde(default)]
    pub quadrature: QuadratureSpec<f64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub slices: SliceOutput,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub verify: VerifySpec,
}

/// A config with its data resolved and checked against the library's
/// preconditions.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub params: Params,
    pub data: Data,
    pub compat_tol: f64,
}

impl Run {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_config(config, base)
    }

    pub fn from_config(config: RunConfig, base: &Path) -> Result<Self> {
        let p = &config.params;
        let sigma = p.sigma.unwrap_or_else(|| Params::default_sigma(p.c, p.s));
        let params = Params::new(p.c, p.s, sigma)?;
        let domain = RectDomain::new(config.domain.a1, config.domain.b1, config.domain.a2, config.domain.b2)?;
        let resolve = |d: &DatumSpec| -> Result<Surface<f64>> {
            match d {
                DatumSpec::Inline(s) => Ok(s.clone()),
                DatumSpec::Csv { csv } => {
                    let path = base.join(csv);
                    let f = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
                    Ok(Surface::Table(read_table(f, &path.display().to_string())?))
                }
            }
        };
        let mut initial = Vec::with_capacity(4);
        let mut inflow = Vec::with_capacity(4);
        for (a, b) in config.data.initial.iter().zip(config.data.inflow.iter()) {
            initial.push(resolve(a)?);
            inflow.push(resolve(b)?);
        }
        let data = ProblemData {
            domain,
            t0: config.data.t0,
            initial: initial.try_into().expect("four data"),
            inflow: inflow.try_into().expect("four data"),
        };
        let tabulated = data.initial.iter().chain(data.inflow.iter()).any(|s| s.is_tabulated());
        let compat_tol = config.tolerances.compat.unwrap_or(if tabulated { 1e-6 } else { 1e-9 });

        match config.mode {
            Mode::Slab => {
                let end = config.slab_end.context("slab mode needs \"slab_end\"")?;
                TimeSlab::new(config.data.t0, end)?;
            }
            Mode::March => {
                if config.horizon.is_some() == config.horizon_floors.is_some() {
                    bail!("march mode needs exactly one of \"horizon\" and \"horizon_floors\"");
                }
            }
        }
        if !(config.r0 > 0.0) {
            bail!("r0 must be positive");
        }
        let g = config.grid;
        if g.nt < 3 || g.nx < 3 || g.ny < 3 {
            bail!("grid needs at least 3 points per axis");
        }
        if config.operator == OperatorKind::Relaxed {
            params.require_relaxation()?;
        }
        Ok(Self {
            config,
            params,
            data,
            compat_tol,
        })
    }

    pub fn resolution(&self) -> (usize, usize, usize) {
        let g = self.config.grid;
        (g.nt, g.nx, g.ny)
    }

    /// The slab of slab mode.
    pub fn slab(&self) -> Result<TimeSlab<f64>> {
        let end = self.config.slab_end.context("slab mode needs \"slab_end\"")?;
        Ok(TimeSlab::new(self.data.t0, end)?)
    }

    pub fn slab_grid(&self) -> Result<Grid> {
        let (nt, nx, ny) = self.resolution();
        Ok(SlabGrid::new(self.slab()?, self.data.domain, nt, nx, ny)?)
    }

    /// End time of the march.
    pub fn horizon(&self) -> f64 {
        match (self.config.horizon, self.config.horizon_floors) {
            (Some(h), _) => h,
            (None, Some(k)) => self.data.t0 + k * broadwell::solver::march_step_bound(&self.params, self.config.r0),
            (None, None) => self.data.t0,
        }
    }

    pub fn quad(&self) -> QuadratureSpec<f64> {
        self.config.quadrature
    }
}
