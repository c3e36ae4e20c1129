//! Aspect-ratio convergence experiments and verification suites.
//!
//! [`sweep`] co-evolves SMHD(ε) and PEM from shared initial data for every
//! ε in a list and records the supremum over sampled times of the weighted
//! `L²` and `H¹` differences. [`SweepResult`] fits `log(sup diff)` against
//! `log ε`. The sup is taken over the diagnostics samples, i.e. every
//! `output_every` steps plus the final step.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    difference_metrics, lemma21_ratio, lemma22_ratio, DiagnosticsRecord, DiagnosticsRow,
};
use crate::error::{Error, Result};
use crate::fields::{random_admissible_state, scale_down, scale_up, InitParams, State, SystemKind};
use crate::grid::Grid;
use crate::solver::{Solver, SolverConfig};

/// Least-squares line through `(log ε, log value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the log-space residuals.
    pub residual: f64,
    pub points: usize,
}

pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points, got {}", points.len())));
    }
    if let Some(&(e, v)) = points.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0)) {
        return Err(Error::Fit(format!("nonpositive point ({e}, {v})")));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(e, v)| (e.ln(), v.ln())).collect();
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("all ε values coincide".into()));
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit { slope, intercept, residual: (ss / n).sqrt(), points: xy.len() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Blowup,
    Error,
}

/// One ε of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub sup_l2_diff: f64,
    pub sup_h1_diff: f64,
    /// Trapezoid integral over the samples of `‖∇Ũ‖² + ε²‖∇U₃‖² + ‖∇B̃‖² + ε²‖∇B₃‖²`.
    pub grad_diss_integral: f64,
    pub wall_time_s: f64,
    pub status: RunStatus,
    pub message: String,
}

/// A sweep job: its summary row and both diagnostics records, the SMHD one
/// carrying the difference columns.
#[derive(Clone, Debug)]
pub struct EpsRun {
    pub row: SweepRow,
    pub smhd: DiagnosticsRecord,
    pub pem: DiagnosticsRecord,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub runs: Vec<EpsRun>,
    pub dt: f64,
    pub output_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub l2: RateFit,
    pub h1: RateFit,
    pub dt: f64,
    pub output_every: usize,
}

pub const MIN_FIT_ROWS: usize = 3;

impl Sweep {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    /// Rate fits over the `ok` rows.
    pub fn result(&self) -> Result<SweepResult> {
        SweepResult::from_rows(self.rows(), self.dt, self.output_every)
    }
}

impl SweepResult {
    pub fn from_rows(rows: Vec<SweepRow>, dt: f64, output_every: usize) -> Result<Self> {
        let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.status == RunStatus::Ok).collect();
        if ok.len() < MIN_FIT_ROWS {
            return Err(Error::Fit(format!(
                "{} ok rows, at least {MIN_FIT_ROWS} needed",
                ok.len()
            )));
        }
        let l2 = fit_rate(&ok.iter().map(|r| (r.eps, r.sup_l2_diff)).collect::<Vec<_>>())?;
        let h1 = fit_rate(&ok.iter().map(|r| (r.eps, r.sup_h1_diff)).collect::<Vec<_>>())?;
        Ok(Self { rows, l2, h1, dt, output_every })
    }

    /// Places where `sup L2_diff` grows as ε decreases. Reported, not fatal.
    pub fn monotonicity_warnings(&self) -> Vec<String> {
        let ok: Vec<&SweepRow> = self.rows.iter().filter(|r| r.status == RunStatus::Ok).collect();
        ok.windows(2)
            .filter(|w| w[1].sup_l2_diff > w[0].sup_l2_diff)
            .map(|w| {
                format!(
                    "sup L2 diff grows from {:.3e} at eps = {} to {:.3e} at eps = {}",
                    w[0].sup_l2_diff, w[0].eps, w[1].sup_l2_diff, w[1].eps
                )
            })
            .collect()
    }
}

pub fn validate_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.len() < MIN_FIT_ROWS {
        return Err(Error::Config(format!(
            "eps list needs at least {MIN_FIT_ROWS} values, got {}",
            eps_list.len()
        )));
    }
    if eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("eps values must be positive".into()));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("eps values must be strictly decreasing".into()));
    }
    Ok(())
}

/// Runs every ε concurrently on up to `jobs` workers (all cores when
/// `None`). `init` is the shared admissible data as built by
/// [`random_admissible_state`]. Blow-ups and solver errors are recorded in
/// the row status.
pub fn sweep(init: &State, eps_list: &[f64], config: &SolverConfig, jobs: Option<usize>) -> Result<Sweep> {
    validate_eps_list(eps_list)?;
    config.validate()?;
    let init = init.clone().as_system(SystemKind::Pem, 0.0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| {
        eps_list
            .par_iter()
            .map(|&eps| co_evolve(&init, eps, config))
            .collect::<Vec<_>>()
    });
    Ok(Sweep { runs, dt: config.dt, output_every: config.output_every })
}

/// Convenience wrapper building the shared data from a seed.
pub fn sweep_from_seed(
    params: &InitParams,
    grid: &Grid,
    eps_list: &[f64],
    config: &SolverConfig,
    jobs: Option<usize>,
) -> Result<Sweep> {
    let init = random_admissible_state(grid, params)?;
    sweep(&init, eps_list, config, jobs)
}

fn co_evolve(init: &State, eps: f64, config: &SolverConfig) -> EpsRun {
    let clock = Instant::now();
    let mut row = SweepRow {
        eps,
        sup_l2_diff: 0.0,
        sup_h1_diff: 0.0,
        grad_diss_integral: 0.0,
        wall_time_s: 0.0,
        status: RunStatus::Ok,
        message: String::new(),
    };
    let mut smhd_rec = DiagnosticsRecord::new();
    let mut pem_rec = DiagnosticsRecord::new();
    let outcome = co_evolve_inner(init, eps, config, &mut row, &mut smhd_rec, &mut pem_rec);
    if let Err(e) = outcome {
        row.status = match e {
            Error::BlowUp { .. } => RunStatus::Blowup,
            _ => RunStatus::Error,
        };
        row.message = e.to_string();
    }
    row.wall_time_s = clock.elapsed().as_secs_f64();
    EpsRun { row, smhd: smhd_rec, pem: pem_rec }
}

fn co_evolve_inner(
    init: &State,
    eps: f64,
    config: &SolverConfig,
    row: &mut SweepRow,
    smhd_rec: &mut DiagnosticsRecord,
    pem_rec: &mut DiagnosticsRecord,
) -> Result<()> {
    let mut a = init.clone().as_system(SystemKind::Smhd, eps);
    let mut b = init.clone().as_system(SystemKind::Pem, 0.0);
    let mut sa = Solver::new(SystemKind::Smhd, &a.grid, eps, config)?;
    let mut sb = Solver::new(SystemKind::Pem, &b.grid, 0.0, config)?;
    let mut last: Option<(f64, f64)> = None;
    let mut sample = |a: &State, b: &State, row: &mut SweepRow| -> Result<()> {
        let m = difference_metrics(a, b)?;
        row.sup_l2_diff = row.sup_l2_diff.max(m.l2_diff);
        row.sup_h1_diff = row.sup_h1_diff.max(m.h1_diff);
        if let Some((t0, g0)) = last {
            row.grad_diss_integral += 0.5 * (m.t - t0) * (g0 + m.grad_diss);
        }
        last = Some((m.t, m.grad_diss));
        smhd_rec.push(DiagnosticsRow::of(a).with_difference(&m))?;
        pem_rec.push(DiagnosticsRow::of(b))?;
        Ok(())
    };
    sample(&a, &b, row)?;
    let n = config.steps();
    for step in 1..=n {
        a = sa.step(&a)?;
        b = sb.step(&b)?;
        if step % config.output_every == 0 || step == n {
            sample(&a, &b, row)?;
        }
    }
    Ok(())
}

/// Largest relative difference, over `steps` steps, between SMHD from
/// `init` and the scaled-down thin-domain run from `scale_up(init)`.
pub fn scaling_equivalence_test(init: &State, eps: f64, config: &SolverConfig, steps: usize) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("eps = {eps} must lie in (0, 1]")));
    }
    let mut a = init.clone().as_system(SystemKind::Smhd, eps);
    let mut thin = scale_up(&a, eps)?;
    let mut sa = Solver::new(SystemKind::Smhd, &a.grid, eps, config)?;
    let mut st = Solver::new(SystemKind::MhdThin, &thin.grid, eps, config)?;
    let mut worst = 0.0_f64;
    for _ in 0..steps {
        a = sa.step(&a)?;
        thin = st.step(&thin)?;
        let b = scale_down(&thin, &a.grid)?;
        worst = worst.max(relative_state_difference(&a, &b));
    }
    Ok(worst)
}

/// `max_f ‖a_f - b_f‖ / max_f ‖a_f‖` over the six vector components.
pub fn relative_state_difference(a: &State, b: &State) -> f64 {
    let g = &a.grid;
    let (mut num, mut den) = (0.0_f64, 0.0_f64);
    for (x, y) in a.fields()[..6].iter().zip(&b.fields()[..6]) {
        num = num.max(g.norm2_sq(&(&x.coeffs - &y.coeffs)).sqrt());
        den = den.max(g.norm2_sq(&x.coeffs).sqrt());
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Largest `|E(t_j) + 2∫₀^{t_j} D − E(0)|` with the trapezoid rule over the
/// samples of `record`.
pub fn energy_budget_test(record: &DiagnosticsRecord) -> Result<f64> {
    if !record.has_column("D") {
        return Err(Error::MissingColumn("D".into()));
    }
    let Some(first) = record.rows.first() else {
        return Ok(0.0);
    };
    let mut integral = 0.0;
    let mut worst = 0.0_f64;
    for w in record.rows.windows(2) {
        integral += 0.5 * (w[1].t - w[0].t) * (w[0].d + w[1].d);
        worst = worst.max((w[1].e + 2.0 * integral - first.e).abs());
    }
    Ok(worst)
}

/// Step and horizon of the standard energy-budget check. The residual only
/// reaches its asymptotic order once `dt·|k|²` is small for the retained
/// modes, which on the default grid needs steps of this size.
pub const BUDGET_DT: f64 = 0.0025;
pub const BUDGET_T: f64 = 0.5;

/// Allowed budget residual at step `dt` for a scaled or limit run from
/// `init`, from the leading error terms of the scheme on the diffusive part.
///
/// For CNAB2 the Euler start-up step contributes `dt²‖ΔU₀‖²` and the gap
/// between the trapezoid rule and the Crank–Nicolson midpoint dissipation
/// at most `dt²‖ΔU₀‖²/2`, so the bound is `2·dt²‖ΔU₀‖²`. For IMEX Euler the
/// per-step defect `dt²|k|⁴|q|²` sums to at most `dt·D(0)/2`, bounded here
/// by `dt·D(0)`. Norms carry the energy weights (`ε²` on vertical components).
pub fn budget_tolerance(init: &State, eps: f64, integrator: crate::solver::Integrator, dt: f64) -> f64 {
    let g = &init.grid;
    let w = eps * eps;
    match integrator {
        crate::solver::Integrator::ImexCnab2 => {
            let weights = [1.0, 1.0, w, 1.0, 1.0, w];
            let lap: f64 = init.fields()[..6]
                .iter()
                .zip(weights)
                .map(|(f, w)| w * g.laplacian_norm2_sq(&f.coeffs))
                .sum();
            2.0 * dt * dt * lap
        }
        crate::solver::Integrator::ImexEuler => dt * crate::diagnostics::energy(init, eps).1,
    }
}

/// Budget residuals at `dt` and `dt/2` (every step sampled) and their ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BudgetOrder {
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
}

pub fn energy_budget_order(init: &State, system: SystemKind, eps: f64, config: &SolverConfig) -> Result<BudgetOrder> {
    let residual = |dt: f64| -> Result<f64> {
        let c = SolverConfig { dt, output_every: 1, ..config.clone() };
        let init = init.clone().as_system(system, eps);
        let out = crate::solver::run(system, &init, eps, &c, &mut |_| {})?;
        if let crate::solver::RunStatus::BlowUp { t, reason } = out.status {
            return Err(Error::BlowUp { t, reason });
        }
        energy_budget_test(&out.record)
    };
    let coarse = residual(config.dt)?;
    let fine = residual(0.5 * config.dt)?;
    Ok(BudgetOrder { coarse, fine, ratio: coarse / fine })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RatioStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub samples: usize,
    pub all_finite: bool,
    /// Largest relative ratio change under input rescaling.
    pub homogeneity: f64,
}

impl RatioStats {
    fn from(ratios: &[f64], homogeneity: f64) -> Self {
        let n = ratios.len();
        Self {
            min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: ratios.iter().sum::<f64>() / n.max(1) as f64,
            samples: n,
            all_finite: ratios.iter().all(|r| r.is_finite()),
            homogeneity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityReport {
    pub trilinear: RatioStats,
    pub advective: RatioStats,
}

/// Empirical constants of the two anisotropic inequalities over `samples`
/// random admissible states. Inputs of sample `i` are drawn from seeds
/// `2(seed + i)` and `2(seed + i) + 1`; homogeneity is checked by scaling
/// each input by a different factor.
pub fn inequality_ensemble(grid: &Grid, seed: u64, samples: usize) -> Result<InequalityReport> {
    const SCALES: [f64; 3] = [3.7, 0.25, 12.0];
    let results: Vec<Result<[(f64, f64); 2]>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = 2 * (seed + i);
            let p = |seed| InitParams { seed, decay: 3.0, amplitude: 0.5 };
            let x = random_admissible_state(grid, &p(s))?;
            let y = random_admissible_state(grid, &p(s + 1))?;
            let scaled = |f: &crate::fields::ScalarField, k: f64| {
                crate::fields::ScalarField::new(f.coeffs.mapv(|c| c * k), f.parity)
            };
            let r1 = lemma21_ratio(grid, &x.uh[0], &y.bh[1], &x.bh[0])?.ratio;
            let r1s = lemma21_ratio(
                grid,
                &scaled(&x.uh[0], SCALES[0]),
                &scaled(&y.bh[1], SCALES[1]),
                &scaled(&x.bh[0], SCALES[2]),
            )?
            .ratio;
            let r2 = lemma22_ratio(grid, [&x.uh[0], &x.uh[1], &x.u3], &y.uh[0], &y.bh[0])?.ratio;
            let r2s = lemma22_ratio(
                grid,
                [&scaled(&x.uh[0], SCALES[0]), &scaled(&x.uh[1], SCALES[0]), &scaled(&x.u3, SCALES[0])],
                &scaled(&y.uh[0], SCALES[1]),
                &scaled(&y.bh[0], SCALES[2]),
            )?
            .ratio;
            let change = |a: f64, b: f64| if a == 0.0 { b.abs() } else { ((a - b) / a).abs() };
            Ok([(r1, change(r1, r1s)), (r2, change(r2, r2s))])
        })
        .collect();
    let mut tri = Vec::new();
    let mut adv = Vec::new();
    let (mut h_tri, mut h_adv) = (0.0_f64, 0.0_f64);
    for r in results {
        let [(a, ha), (b, hb)] = r?;
        tri.push(a);
        adv.push(b);
        h_tri = h_tri.max(ha);
        h_adv = h_adv.max(hb);
    }
    Ok(InequalityReport { trilinear: RatioStats::from(&tri, h_tri), advective: RatioStats::from(&adv, h_adv) })
}

/// Creates `<base>/<prefix>-<UTC timestamp>`, adding a counter on collision.
pub fn timestamped_dir(base: &Path, prefix: &str) -> Result<PathBuf> {
    fs::create_dir_all(base)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let mut dir = base.join(format!("{prefix}-{stamp}"));
    let mut k = 1;
    while dir.exists() {
        dir = base.join(format!("{prefix}-{stamp}-{k}"));
        k += 1;
    }
    fs::create_dir(&dir)?;
    Ok(dir)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?)
}

#[derive(Debug, Serialize, Deserialize)]
struct FitRow {
    norm: String,
    slope: f64,
    intercept: f64,
    residual: f64,
    points: usize,
}

pub fn write_fit_csv(path: &Path, result: &SweepResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (name, f) in [("l2", result.l2), ("h1", result.h1)] {
        w.serialize(FitRow {
            norm: name.into(),
            slope: f.slope,
            intercept: f.intercept,
            residual: f.residual,
            points: f.points,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `sweep.csv`, `fit.csv` (when at least three rows are ok) and one
/// pair of diagnostics files per ε into `dir`. Returns the fit result.
pub fn write_sweep_outputs(dir: &Path, sweep: &Sweep) -> Result<Result<SweepResult>> {
    write_sweep_csv(&dir.join("sweep.csv"), &sweep.rows())?;
    for run in &sweep.runs {
        let tag = format!("eps{}", run.row.eps);
        run.smhd.write_csv(File::create(dir.join(format!("smhd_{tag}.csv")))?)?;
        run.pem.write_csv(File::create(dir.join(format!("pem_{tag}.csv")))?)?;
    }
    let result = sweep.result();
    if let Ok(r) = &result {
        write_fit_csv(&dir.join("fit.csv"), r)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Fraction};
    use std::f64::consts::PI;

    fn row(eps: f64, l2: f64, h1: f64, status: RunStatus) -> SweepRow {
        SweepRow {
            eps,
            sup_l2_diff: l2,
            sup_h1_diff: h1,
            grad_diss_integral: 0.0,
            wall_time_s: 0.0,
            status,
            message: String::new(),
        }
    }

    #[test]
    fn fit_examples() {
        let f = fit_rate(&[(0.1, 0.1), (0.01, 0.01)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.intercept.abs() < 1e-12);

        let f = fit_rate(&[(0.1, 0.02), (0.05, 0.01), (0.025, 0.005)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
        assert!((f.intercept - 0.2_f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);

        assert!(fit_rate(&[(0.1, 0.1)]).is_err());
        assert!(fit_rate(&[(0.1, 0.1), (0.05, 0.0)]).is_err());
        assert!(fit_rate(&[(0.1, 0.1), (0.1, 0.2)]).is_err());
    }

    #[test]
    fn synthetic_rates_are_recovered() {
        let eps = [0.2, 0.1, 0.05, 0.025];
        for (power, c) in [(1, 0.7), (2, 3.0)] {
            let rows: Vec<SweepRow> = eps
                .iter()
                .map(|&e| row(e, c * e.powi(power), 2.0 * c * e.powi(power), RunStatus::Ok))
                .collect();
            let r = SweepResult::from_rows(rows, 0.01, 1).unwrap();
            assert!((r.l2.slope - power as f64).abs() < 1e-12);
            assert!((r.h1.slope - power as f64).abs() < 1e-12);
            assert!((r.l2.intercept - c.ln()).abs() < 1e-12);
            assert!(r.monotonicity_warnings().is_empty());
        }
    }

    #[test]
    fn fits_skip_failed_rows() {
        let rows = vec![
            row(0.2, 1e9, 1e9, RunStatus::Blowup),
            row(0.1, 0.1, 0.2, RunStatus::Ok),
            row(0.05, 0.05, 0.1, RunStatus::Ok),
            row(0.025, 0.025, 0.05, RunStatus::Ok),
        ];
        let r = SweepResult::from_rows(rows.clone(), 0.01, 1).unwrap();
        assert_eq!(r.l2.points, 3);
        assert!((r.l2.slope - 1.0).abs() < 1e-12);
        let mut two = rows;
        two[1].status = RunStatus::Error;
        assert!(matches!(SweepResult::from_rows(two, 0.01, 1), Err(Error::Fit(_))));
    }

    #[test]
    fn eps_list_validation() {
        assert!(validate_eps_list(&[0.2, 0.1]).is_err());
        assert!(validate_eps_list(&[0.1, 0.2, 0.05]).is_err());
        assert!(validate_eps_list(&[0.2, 0.1, 0.0]).is_err());
        assert!(validate_eps_list(&[0.2, 0.1, 0.05]).is_ok());
    }

    #[test]
    fn monotonicity_warning() {
        let rows = vec![
            row(0.2, 0.2, 0.2, RunStatus::Ok),
            row(0.1, 0.3, 0.3, RunStatus::Ok),
            row(0.05, 0.05, 0.05, RunStatus::Ok),
        ];
        let r = SweepResult::from_rows(rows, 0.01, 1).unwrap();
        assert_eq!(r.monotonicity_warnings().len(), 1);
    }

    fn small_grid() -> Grid {
        make_grid(2.0 * PI, 2.0 * PI, 2.0, 8, 8, 4, Fraction::TWO_THIRDS).unwrap()
    }

    #[test]
    fn sweep_is_deterministic() {
        let g = small_grid();
        let p = InitParams { seed: 3, decay: 3.0, amplitude: 0.5 };
        let cfg = SolverConfig { dt: 0.02, t_final: 0.2, output_every: 2, ..Default::default() };
        let a = sweep_from_seed(&p, &g, &[0.2, 0.1, 0.05], &cfg, Some(3)).unwrap();
        let b = sweep_from_seed(&p, &g, &[0.2, 0.1, 0.05], &cfg, Some(1)).unwrap();
        for (x, y) in a.runs.iter().zip(&b.runs) {
            assert_eq!(x.row.status, RunStatus::Ok);
            assert_eq!(x.row.sup_l2_diff.to_bits(), y.row.sup_l2_diff.to_bits());
            assert_eq!(x.row.sup_h1_diff.to_bits(), y.row.sup_h1_diff.to_bits());
            assert_eq!(x.row.grad_diss_integral.to_bits(), y.row.grad_diss_integral.to_bits());
            assert_eq!(x.smhd, y.smhd);
            assert_eq!(x.smhd.len(), 6);
        }
        // the difference vanishes initially and the sup is positive afterwards
        assert_eq!(a.runs[0].smhd.rows[0].l2_diff, Some(0.0));
        assert!(a.runs[0].row.sup_l2_diff > 0.0);
    }

    #[test]
    fn sweep_outputs_are_written() {
        let g = small_grid();
        let p = InitParams { seed: 1, decay: 3.0, amplitude: 0.5 };
        let cfg = SolverConfig { dt: 0.05, t_final: 0.1, ..Default::default() };
        let s = sweep_from_seed(&p, &g, &[0.4, 0.2, 0.1], &cfg, Some(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = timestamped_dir(dir.path(), "sweep").unwrap();
        let fit = write_sweep_outputs(&out, &s).unwrap().unwrap();
        assert_eq!(read_sweep_csv(&out.join("sweep.csv")).unwrap(), s.rows());
        let fit_text = fs::read_to_string(out.join("fit.csv")).unwrap();
        assert!(fit_text.starts_with("norm,slope,intercept,residual,points"));
        assert!(fit_text.contains(&format!("l2,{}", fit.l2.slope)));
        let rec = DiagnosticsRecord::read_csv(File::open(out.join("smhd_eps0.2.csv")).unwrap()).unwrap();
        assert!(rec.has_column("h1_diff"));
        let other = timestamped_dir(dir.path(), "sweep").unwrap();
        assert_ne!(other, out);
    }

    #[test]
    fn scaling_test_cases() {
        let g = small_grid();
        let cfg = SolverConfig { dt: 0.01, t_final: 1.0, ..Default::default() };
        let zero = State::zeros(&g, SystemKind::Smhd, 0.1);
        assert_eq!(scaling_equivalence_test(&zero, 0.1, &cfg, 5).unwrap(), 0.0);
        let init = random_admissible_state(&g, &InitParams { seed: 2, decay: 3.0, amplitude: 0.5 }).unwrap();
        assert!(scaling_equivalence_test(&init, 1.0, &cfg, 10).unwrap() < 1e-12);
        assert!(scaling_equivalence_test(&init, 1.5, &cfg, 1).is_err());
    }

    #[test]
    fn energy_budget_cases() {
        let g = small_grid();
        let zero = State::zeros(&g, SystemKind::Smhd, 0.1);
        let cfg = SolverConfig { dt: 0.01, t_final: 0.1, ..Default::default() };
        let out = crate::solver::run(SystemKind::Smhd, &zero, 0.1, &cfg, &mut |_| {}).unwrap();
        assert_eq!(energy_budget_test(&out.record).unwrap(), 0.0);

        let mut partial = DiagnosticsRecord::new();
        partial.columns = Some(2);
        assert!(matches!(energy_budget_test(&partial), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn single_mode_budget_matches_trapezoid_error() {
        // u₁ = a sin y: E = c e^{-2t}, D = c e^{-2t}; the trapezoid rule with
        // step h integrates 2D to (1 - e^{-2t})·c·h·coth(h) instead of (1 - e^{-2t})·c
        let g = small_grid();
        let mut s = State::zeros(&g, SystemKind::Smhd, 0.1);
        s.uh[0].coeffs = g.forward(&g.sample(|_, y, _| 0.3 * y.sin())).unwrap();
        let e0 = g.norm2_sq(&s.uh[0].coeffs);
        let (h, t) = (0.05_f64, 0.5_f64);
        let mut rec = DiagnosticsRecord::new();
        for j in 0..=10 {
            let tj = j as f64 * h;
            let e = e0 * (-2.0 * tj).exp();
            rec.push(DiagnosticsRow { t: tj, e, d: e, ..DiagnosticsRow::of(&s) }).unwrap();
        }
        let expected = e0 * (1.0 - (-2.0 * t).exp()) * (h / h.tanh() - 1.0);
        let got = energy_budget_test(&rec).unwrap();
        assert!((got - expected).abs() < 1e-14 * e0, "{got} {expected}");
    }

    #[test]
    fn budget_residual_respects_tolerance() {
        use crate::solver::Integrator;
        let g = small_grid();
        let init = random_admissible_state(&g, &InitParams { seed: 4, decay: 3.0, amplitude: 0.5 }).unwrap();
        for (integrator, ratio) in [(Integrator::ImexCnab2, 4.0), (Integrator::ImexEuler, 2.0)] {
            let cfg = SolverConfig { dt: 0.005, t_final: 0.5, integrator, ..Default::default() };
            let o = energy_budget_order(&init, SystemKind::Smhd, 0.1, &cfg).unwrap();
            let s = init.clone().as_system(SystemKind::Smhd, 0.1);
            assert!(o.coarse <= budget_tolerance(&s, 0.1, integrator, cfg.dt), "{integrator:?} {o:?}");
            assert!((o.ratio - ratio).abs() < 0.5, "{integrator:?} {o:?}");
        }
    }

    #[test]
    fn inequality_ensemble_is_homogeneous() {
        let g = small_grid();
        let r = inequality_ensemble(&g, 5, 8).unwrap();
        for s in [r.trilinear, r.advective] {
            assert_eq!(s.samples, 8);
            assert!(s.all_finite);
            assert!(s.max >= s.min && s.min >= 0.0);
            assert!(s.homogeneity < 1e-10, "{}", s.homogeneity);
        }
    }
}
