//! Experiment configuration.
//!
//! Configs are TOML files with a top-level `seed` and the sections `[grid]`,
//! `[init]`, `[solver]`, `[sweep]` and `[output]`. Every key except `seed`
//! has a default. The grid describes the fixed domain; thin-domain runs
//! derive their grid from it with `Lz ↦ ε·Lz`.
//!
//! ```toml
//! seed = 7
//!
//! [grid]
//! nx = 32
//! ny = 32
//! nz = 16
//!
//! [solver]
//! eps = 0.1
//! t_final = 1.0
//! output_every = 10
//!
//! [sweep]
//! eps_list = [0.2, 0.1, 0.05, 0.025]
//! ```
//!
//! `PEMSIM_OUT_DIR` and `PEMSIM_JOBS` override `output.dir` and `sweep.jobs`.
//! Overrides are applied before the manifest is written, so the manifest
//! records the effective values.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{InitParams, State};
use crate::grid::{Fraction, Grid, GridSpec};
use crate::solver::{cfl_dt, Integrator, SolverConfig, Viscosities};

pub const ENV_OUT_DIR: &str = "PEMSIM_OUT_DIR";
pub const ENV_JOBS: &str = "PEMSIM_JOBS";

/// Time step used when the initial fluid is at rest and no `dt` is given.
pub const REST_DT: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub l1: f64,
    pub l2: f64,
    pub lz: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dealias: Fraction,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { l1: 2.0 * PI, l2: 2.0 * PI, lz: 2.0, nx: 32, ny: 32, nz: 16, dealias: Fraction::TWO_THIRDS }
    }
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.l1, self.l2, self.lz, self.nx, self.ny, self.nz, self.dealias)
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.spec()?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub decay: f64,
    pub amplitude: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { decay: 3.0, amplitude: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Fixed step; when absent the step comes from the CFL estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub cfl: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub output_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_symmetrize_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub viscosities: Option<Viscosities>,
    pub nonlinear: bool,
    pub project_magnetic: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            eps: None,
            dt: None,
            cfl: 0.3,
            t_final: d.t_final,
            integrator: d.integrator,
            output_every: d.output_every,
            re_symmetrize_every: None,
            viscosities: None,
            nonlinear: true,
            project_magnetic: false,
        }
    }
}

impl SolverSection {
    /// Step for `init`: the configured `dt`, or the CFL step shrunk so that
    /// it divides `T` exactly.
    pub fn resolve_dt(&self, init: &State) -> Result<f64> {
        if let Some(dt) = self.dt {
            return Ok(dt);
        }
        if !(self.cfl > 0.0) {
            return Err(Error::Config(format!("cfl = {} must be positive", self.cfl)));
        }
        let dt = cfl_dt(init, self.cfl).unwrap_or(REST_DT);
        if self.t_final > 0.0 {
            let n = (self.t_final / dt).ceil().max(1.0);
            Ok(self.t_final / n)
        } else {
            Ok(dt)
        }
    }

    pub fn solver_config(&self, dt: f64) -> Result<SolverConfig> {
        let c = SolverConfig {
            dt,
            t_final: self.t_final,
            integrator: self.integrator,
            output_every: self.output_every,
            re_symmetrize_every: self.re_symmetrize_every,
            viscosities: self.viscosities,
            nonlinear: self.nonlinear,
            project_magnetic: self.project_magnetic,
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps_list: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { eps_list: vec![0.2, 0.1, 0.05, 0.025], jobs: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        c.grid.spec()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the environment overrides through `lookup`, returning the
    /// names of the variables that were used.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<Vec<&'static str>> {
        let mut used = Vec::new();
        if let Some(dir) = lookup(ENV_OUT_DIR) {
            self.output.dir = PathBuf::from(dir);
            used.push(ENV_OUT_DIR);
        }
        if let Some(jobs) = lookup(ENV_JOBS) {
            let n = jobs
                .trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("{ENV_JOBS} = {jobs:?} is not a positive integer")))?;
            self.sweep.jobs = Some(n);
            used.push(ENV_JOBS);
        }
        Ok(used)
    }

    /// The seed; absent seeds are an error rather than a source of entropy.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("no seed given (set `seed` or pass --seed)".into()))
    }

    pub fn init_params(&self) -> Result<InitParams> {
        Ok(InitParams { seed: self.require_seed()?, decay: self.init.decay, amplitude: self.init.amplitude })
    }

    /// Manifest text: a comment header followed by the effective config,
    /// which [`Config::parse`] reads back unchanged.
    pub fn manifest(&self, command: &str, env_used: &[&str], notes: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("# pemsim {} manifest\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("# command: {command}\n"));
        out.push_str(&format!("# created: {}\n", chrono::Utc::now().to_rfc3339()));
        if env_used.is_empty() {
            out.push_str("# environment overrides: none\n");
        } else {
            out.push_str(&format!("# environment overrides: {}\n", env_used.join(", ")));
        }
        for n in notes {
            out.push_str(&format!("# {n}\n"));
        }
        out.push('\n');
        out.push_str(&self.to_toml());
        out
    }
}
