//! Command-line interface.
//!
//! Exit status is 0 on success, 1 on numerical failure (blow-up, failed
//! verification, no rate fit) and 2 on usage or configuration errors. Every
//! failure prints one line to stderr of the form
//! `pemsim: error kind=<usage|config|numerical|io> msg=<text>`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{Config, GridConfig};
use crate::error::Error;
use crate::fields::{random_admissible_state, scale_up, InitParams, State, SystemKind};
use crate::harness::{self, validate_eps_list};
use crate::snapshot;
use crate::solver::{self, RunStatus, SolverConfig};

#[derive(Debug, Parser)]
#[command(name = "pemsim", version, about = "Scaled MHD and primitive equations with magnetic field on periodic boxes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and write diagnostics, final snapshot and manifest.
    Run {
        /// One of mhd-thin, smhd, pem.
        #[arg(long)]
        system: SystemKind,
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Aspect ratio; required for mhd-thin and smhd, ignored for pem.
        #[arg(long)]
        eps: Option<f64>,
        /// Output directory; defaults to a timestamped directory under output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Start from a snapshot instead of seeded random data.
        #[arg(long)]
        init_snapshot: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Co-evolve SMHD(ε) and PEM for a list of ε and fit convergence rates.
    Sweep {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Comma separated ε values, overriding sweep.eps_list.
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        /// Worker threads, one ε per job.
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory; defaults to a timestamped directory under output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a verification suite and print a pass/fail table.
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        seed: u64,
        /// Ensemble size for inequalities, number of consecutive seeds otherwise.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Optional config supplying the grid.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Inequalities,
    Scaling,
    Energy,
}

/// A failure with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub kind: &'static str,
    pub msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, kind: "usage", msg: msg.into() }
    }

    fn numerical(msg: impl Into<String>) -> Self {
        Self { code: 1, kind: "numerical", msg: msg.into() }
    }

    pub fn line(&self) -> String {
        let msg = self.msg.replace(['\n', '\r'], " ");
        format!("pemsim: error kind={} msg={}", self.kind, msg.trim())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::BlowUp { .. }
            | Error::Hypothesis(_)
            | Error::Falsified { .. }
            | Error::Fit(_)
            | Error::IncompatiblePoisson { .. }
            | Error::BarotropicViolation { .. } => (1, "numerical"),
            Error::Io(_) | Error::Csv(_) => (2, "io"),
            _ => (2, "config"),
        };
        Self { code, kind, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parses `args` and runs the command, returning the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", Failure::usage(first.trim_start_matches("error: ")).line());
            return 2;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::Run { system, config, eps, out, init_snapshot, seed } => {
            cmd_run(system, &config, eps, out, init_snapshot, seed)
        }
        Command::Sweep { config, eps_list, jobs, out, seed } => cmd_sweep(&config, eps_list, jobs, out, seed),
        Command::Verify { suite, seed, samples, config } => cmd_verify(suite, seed, samples, config),
    }
}

fn load_config(path: &Path) -> Result<(Config, Vec<&'static str>), Failure> {
    let mut c = Config::load(path)?;
    let used = c.apply_env(|k| std::env::var(k).ok())?;
    Ok((c, used))
}

fn output_dir(explicit: Option<PathBuf>, config: &Config, prefix: &str) -> Result<PathBuf, Failure> {
    match explicit {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            Ok(dir)
        }
        None => Ok(harness::timestamped_dir(&config.output.dir, prefix)?),
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

/// Initial state for `system` from a snapshot or from the seed.
fn initial_state(
    system: SystemKind,
    config: &Config,
    eps: f64,
    snapshot_path: Option<&Path>,
) -> Result<State, Failure> {
    let base = match snapshot_path {
        Some(p) => {
            let s = snapshot::load(p, config.grid.dealias)?;
            if s.system == system {
                let mut s = s;
                s.eps = if system == SystemKind::Pem { 0.0 } else { eps };
                return Ok(s);
            }
            if s.system == SystemKind::MhdThin {
                return Err(Failure::usage(format!("snapshot holds a {} state, cannot start {system}", s.system)));
            }
            s
        }
        None => random_admissible_state(&config.grid.grid()?, &config.init_params()?)?,
    };
    Ok(match system {
        SystemKind::Pem => base.as_system(SystemKind::Pem, 0.0),
        SystemKind::Smhd => base.as_system(SystemKind::Smhd, eps),
        SystemKind::MhdThin => scale_up(&base.as_system(SystemKind::Smhd, eps), eps)?,
    })
}

fn cmd_run(
    system: SystemKind,
    config_path: &Path,
    eps: Option<f64>,
    out: Option<PathBuf>,
    init_snapshot: Option<PathBuf>,
    seed: Option<u64>,
) -> CliResult {
    let (mut config, env_used) = load_config(config_path)?;
    if seed.is_some() {
        config.seed = seed;
    }
    let eps = match (system, eps.or(config.solver.eps)) {
        (SystemKind::Pem, _) => 0.0,
        (_, Some(e)) if e > 0.0 => e,
        (_, Some(e)) => return Err(Failure::usage(format!("eps = {e} must be positive"))),
        (_, None) => return Err(Failure::usage(format!("{system} needs --eps or solver.eps"))),
    };
    if system != SystemKind::Pem {
        config.solver.eps = Some(eps);
    }
    if init_snapshot.is_none() {
        config.require_seed()?;
    }

    let init = initial_state(system, &config, eps, init_snapshot.as_deref())?;
    let dt = config.solver.resolve_dt(&init)?;
    config.solver.dt = Some(dt);
    let solver_config = config.solver.solver_config(dt)?;
    let dir = output_dir(out, &config, &format!("run-{system}"))?;

    let mut notes = vec![format!("grid of the run: {:?}", init.grid.spec())];
    if let Some(p) = &init_snapshot {
        notes.push(format!("initial snapshot: {}", p.display()));
    }
    fs::write(dir.join("manifest"), config.manifest(&command_line(), &env_used, &notes))?;

    let summary = solver::run(system, &init, eps, &solver_config, &mut |_| {})?;
    summary.record.write_csv(File::create(dir.join("diagnostics.csv"))?)?;
    snapshot::save(&summary.final_state, &dir.join("final.snap"))?;
    match summary.status {
        RunStatus::Completed => {
            let last = summary.record.rows.last().expect("record has the initial row");
            println!(
                "system={system} eps={eps} steps={} t={} E={:.6e} div_u={:.3e} out={}",
                summary.steps,
                last.t,
                last.e,
                last.div_u,
                dir.display()
            );
            Ok(())
        }
        RunStatus::BlowUp { t, reason } => Err(Error::BlowUp { t, reason }.into()),
    }
}

fn cmd_sweep(
    config_path: &Path,
    eps_list: Option<Vec<f64>>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> CliResult {
    let (mut config, env_used) = load_config(config_path)?;
    if seed.is_some() {
        config.seed = seed;
    }
    if let Some(list) = eps_list {
        config.sweep.eps_list = list;
    }
    if jobs.is_some() {
        config.sweep.jobs = jobs;
    }
    validate_eps_list(&config.sweep.eps_list).map_err(|e| Failure::usage(e.to_string()))?;
    let params = config.init_params()?;
    let grid = config.grid.grid()?;
    let init = random_admissible_state(&grid, &params)?;
    let dt = config.solver.resolve_dt(&init)?;
    config.solver.dt = Some(dt);
    let solver_config = config.solver.solver_config(dt)?;
    let dir = output_dir(out, &config, "sweep")?;
    let notes = vec![format!(
        "sup over samples every {} steps (dt = {dt}) plus the final step",
        solver_config.output_every
    )];
    fs::write(dir.join("manifest"), config.manifest(&command_line(), &env_used, &notes))?;

    let sweep = harness::sweep(&init, &config.sweep.eps_list, &solver_config, config.sweep.jobs)?;
    let result = harness::write_sweep_outputs(&dir, &sweep)?;
    for r in &sweep.runs {
        println!(
            "eps={} status={:?} sup_l2_diff={:.6e} sup_h1_diff={:.6e} wall={:.2}s",
            r.row.eps, r.row.status, r.row.sup_l2_diff, r.row.sup_h1_diff, r.row.wall_time_s
        );
    }
    let result = result?;
    for w in result.monotonicity_warnings() {
        eprintln!("pemsim: warning {w}");
    }
    println!("slope_l2={:.6} slope_h1={:.6} out={}", result.l2.slope, result.h1.slope, dir.display());
    Ok(())
}

struct Check {
    name: String,
    value: f64,
    bound: String,
    pass: bool,
}

fn print_table(suite: &str, checks: &[Check]) -> CliResult {
    println!("{:<14} {:<44} {:>12} {:<18} result", "suite", "check", "value", "bound");
    for c in checks {
        println!(
            "{:<14} {:<44} {:>12.4e} {:<18} {}",
            suite,
            c.name,
            c.value,
            c.bound,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::numerical(format!("{failed} of {} {suite} checks failed", checks.len())))
    }
}

fn cmd_verify(suite: Suite, seed: u64, samples: usize, config: Option<PathBuf>) -> CliResult {
    if samples == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    let grid_config = match &config {
        Some(p) => load_config(p)?.0.grid,
        None => GridConfig::default(),
    };
    let grid = grid_config.grid()?;
    let mut checks = Vec::new();
    match suite {
        Suite::Inequalities => {
            let r = harness::inequality_ensemble(&grid, seed, samples)?;
            for (name, s) in [("trilinear", r.trilinear), ("advective", r.advective)] {
                checks.push(Check {
                    name: format!("{name}: ratios finite ({} samples)", s.samples),
                    value: if s.all_finite { 0.0 } else { 1.0 },
                    bound: "all finite".into(),
                    pass: s.all_finite,
                });
                checks.push(Check {
                    name: format!("{name}: rescaling change"),
                    value: s.homogeneity,
                    bound: "< 1e-10".into(),
                    pass: s.homogeneity < 1e-10,
                });
                println!("{name}: empirical constant max={:.6e} min={:.6e} mean={:.6e}", s.max, s.min, s.mean);
            }
        }
        Suite::Scaling => {
            let cfg = SolverConfig { dt: 0.01, t_final: 1.0, ..Default::default() };
            for k in 0..samples as u64 {
                let init = random_admissible_state(&grid, &params(seed + k))?;
                for (eps, bound) in [(1.0, 1e-12), (0.1, 1e-10)] {
                    let d = harness::scaling_equivalence_test(&init, eps, &cfg, 100)?;
                    checks.push(Check {
                        name: format!("seed {}: eps = {eps}, 100 steps", seed + k),
                        value: d,
                        bound: format!("< {bound:e}"),
                        pass: d < bound,
                    });
                }
            }
        }
        Suite::Energy => {
            let cfg = SolverConfig { dt: harness::BUDGET_DT, t_final: harness::BUDGET_T, ..Default::default() };
            for k in 0..samples as u64 {
                let init = random_admissible_state(&grid, &params(seed + k))?;
                let o = harness::energy_budget_order(&init, SystemKind::Smhd, 0.1, &cfg)?;
                let smhd = init.clone().as_system(SystemKind::Smhd, 0.1);
                let tol = harness::budget_tolerance(&smhd, 0.1, cfg.integrator, cfg.dt);
                checks.push(Check {
                    name: format!("seed {}: residual at dt = {}", seed + k, cfg.dt),
                    value: o.coarse,
                    bound: format!("<= {tol:.3e}"),
                    pass: o.coarse <= tol,
                });
                checks.push(Check {
                    name: format!("seed {}: residual ratio dt / (dt/2)", seed + k),
                    value: o.ratio,
                    bound: "in [3.5, 4.5]".into(),
                    pass: (3.5..=4.5).contains(&o.ratio),
                });
            }
        }
    }
    let name = match suite {
        Suite::Inequalities => "inequalities",
        Suite::Scaling => "scaling",
        Suite::Energy => "energy",
    };
    print_table(name, &checks)
}

fn params(seed: u64) -> InitParams {
    InitParams { seed, decay: 3.0, amplitude: 0.5 }
}
