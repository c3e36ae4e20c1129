//! IMEX time stepping shared by the three systems.
//!
//! Nonlinear terms are explicit (forward Euler or second-order
//! Adams–Bashforth), diffusion is implicit (backward Euler or Crank–Nicolson,
//! a per-mode scalar division), and the incompressibility projection of the
//! system is applied after the implicit solve. Diffusion symbols are diagonal
//! in Fourier space, so they commute with every projection used here.
//!
//! The quadratic terms are evaluated in flux form,
//! `(u·∇)f = ∂_j(u_j f)`, which coincides with the advective form for the
//! divergence-free fields every system maintains. The flux form makes the
//! induction term the divergence of an antisymmetric tensor, so `∇·b` is
//! preserved mode by mode.

use ndarray::{Array3, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{DiagnosticsRecord, DiagnosticsRow};
use crate::error::{Error, Result};
use crate::fields::{enforce_parity, reconstruct_vertical, State, SystemKind};
use crate::grid::{Coeffs, Dir, Grid};
use crate::{pem, smhd};

/// Any field norm above this aborts a run.
pub const BLOWUP_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    ImexEuler,
    ImexCnab2,
}

/// Horizontal/vertical viscosity `(μ, ν)` and magnetic diffusivity `(κ, σ)`
/// of the thin-domain system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Viscosities {
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
    pub sigma: f64,
}

impl Viscosities {
    /// `μ = κ = 1`, `ν = σ = ε²`.
    pub fn regime(eps: f64) -> Self {
        Self { mu: 1.0, nu: eps * eps, kappa: 1.0, sigma: eps * eps }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub output_every: usize,
    /// Re-project every field onto its parity class every this many steps.
    pub re_symmetrize_every: Option<usize>,
    /// Thin-domain coefficients; `None` means the `ε` regime.
    pub viscosities: Option<Viscosities>,
    /// Switch for the quadratic terms (pure diffusion when off).
    pub nonlinear: bool,
    /// Also project the PEM magnetic field onto barotropically solenoidal fields.
    pub project_magnetic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_final: 1.0,
            integrator: Integrator::ImexCnab2,
            output_every: 1,
            re_symmetrize_every: None,
            viscosities: None,
            nonlinear: true,
            project_magnetic: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("T = {} must be nonnegative", self.t_final)));
        }
        if self.output_every == 0 {
            return Err(Error::Config("output_every must be at least 1".into()));
        }
        if self.re_symmetrize_every == Some(0) {
            return Err(Error::Config("re_symmetrize_every must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of steps that fit in `[0, T]`.
    pub fn steps(&self) -> usize {
        let r = self.t_final / self.dt;
        let n = r.round();
        if (r - n).abs() <= 1e-9 * r.max(1.0) {
            n as usize
        } else {
            r.floor() as usize
        }
    }
}

/// Advective time step `cfl · min_dir(Δ_dir / ‖u_dir‖∞)`; `None` for a fluid
/// at rest.
pub fn cfl_dt(state: &State, cfl: f64) -> Option<f64> {
    let spec = state.grid.spec();
    let mut dt = f64::INFINITY;
    for (c, dir) in state.velocity().into_iter().zip(Dir::ALL) {
        let vmax = state
            .grid
            .inverse_unchecked(c)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if vmax > 0.0 {
            dt = dt.min(spec.spacing(dir) / vmax);
        }
    }
    dt.is_finite().then_some(cfl * dt)
}

/// Dealiased quadratic terms of the MHD equations for a 3-component velocity
/// `u` and magnetic field `b`:
/// momentum `-(u·∇)u + (b·∇)b` and induction `-(u·∇)b + (b·∇)u`.
pub(crate) struct Fluxes {
    pub momentum: [Coeffs; 3],
    pub induction: [Coeffs; 3],
}

pub(crate) fn mhd_fluxes(grid: &Grid, u: [&Coeffs; 3], b: [&Coeffs; 3]) -> Fluxes {
    let up: Vec<Array3<f64>> = u.iter().map(|c| grid.inverse_unchecked(c)).collect();
    let bp: Vec<Array3<f64>> = b.iter().map(|c| grid.inverse_unchecked(c)).collect();

    let transform = |prod: Array3<f64>| grid.dealiased(grid.forward_unchecked(&prod));
    // symmetric stress u_i u_j - b_i b_j
    let sym = |i: usize, j: usize| {
        let mut p = &up[i] * &up[j];
        Zip::from(&mut p).and(&bp[i]).and(&bp[j]).for_each(|p, a, c| *p -= a * c);
        transform(p)
    };
    // antisymmetric electromotive tensor u_j b_i - b_j u_i
    let anti = |i: usize, j: usize| {
        let mut p = &up[j] * &bp[i];
        Zip::from(&mut p).and(&bp[j]).and(&up[i]).for_each(|p, a, c| *p -= a * c);
        transform(p)
    };

    let s00 = sym(0, 0);
    let s01 = sym(0, 1);
    let s02 = sym(0, 2);
    let s11 = sym(1, 1);
    let s12 = sym(1, 2);
    let s22 = sym(2, 2);
    let a01 = anti(0, 1);
    let a02 = anti(0, 2);
    let a12 = anti(1, 2);

    let (kx, ky, kz) = (grid.k(Dir::X), grid.k(Dir::Y), grid.k(Dir::Z));
    let div_rows = |row: [(&Coeffs, f64); 3]| -> Coeffs {
        let mut out = grid.zeros();
        Zip::indexed(&mut out).for_each(|(i, j, k), o| {
            let s = row[0].0[[i, j, k]] * (row[0].1 * kx[i])
                + row[1].0[[i, j, k]] * (row[1].1 * ky[j])
                + row[2].0[[i, j, k]] * (row[2].1 * kz[k]);
            // -(i k_j T_ij)
            *o = Complex64::new(s.im, -s.re);
        });
        out
    };

    Fluxes {
        momentum: [
            div_rows([(&s00, 1.0), (&s01, 1.0), (&s02, 1.0)]),
            div_rows([(&s01, 1.0), (&s11, 1.0), (&s12, 1.0)]),
            div_rows([(&s02, 1.0), (&s12, 1.0), (&s22, 1.0)]),
        ],
        induction: [
            div_rows([(&a01, 0.0), (&a01, 1.0), (&a02, 1.0)]),
            div_rows([(&a01, -1.0), (&a12, 0.0), (&a12, 1.0)]),
            div_rows([(&a02, -1.0), (&a12, -1.0), (&a12, 0.0)]),
        ],
    }
}

/// Time stepper for one system. Holds the previous explicit tendency for the
/// Adams–Bashforth extrapolation, so a fresh solver starts with an IMEX
/// Euler step.
pub struct Solver {
    system: SystemKind,
    grid: Grid,
    eps: f64,
    config: SolverConfig,
    symbol_u: Array3<f64>,
    symbol_b: Array3<f64>,
    previous: Option<Vec<Coeffs>>,
}

impl Solver {
    pub fn new(system: SystemKind, grid: &Grid, eps: f64, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let (symbol_u, symbol_b) = match system {
            SystemKind::Smhd | SystemKind::Pem => {
                let s = grid.diffusion_symbol(1.0, 1.0);
                (s.clone(), s)
            }
            SystemKind::MhdThin => {
                let v = config.viscosities.unwrap_or_else(|| Viscosities::regime(eps));
                (grid.diffusion_symbol(v.mu, v.nu), grid.diffusion_symbol(v.kappa, v.sigma))
            }
        };
        if system != SystemKind::Pem && !(eps > 0.0) {
            return Err(Error::Config(format!("{system} needs eps > 0, got {eps}")));
        }
        Ok(Self {
            system,
            grid: grid.clone(),
            eps,
            config: config.clone(),
            symbol_u,
            symbol_b,
            previous: None,
        })
    }

    pub fn system(&self) -> SystemKind {
        self.system
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Forgets the stored tendency; the next step is an IMEX Euler step.
    pub fn reset_history(&mut self) {
        self.previous = None;
    }

    fn prognostic<'a>(&self, s: &'a State) -> Vec<&'a Coeffs> {
        match self.system {
            SystemKind::Pem => vec![
                &s.uh[0].coeffs, &s.uh[1].coeffs, &s.bh[0].coeffs, &s.bh[1].coeffs,
            ],
            _ => vec![
                &s.uh[0].coeffs, &s.uh[1].coeffs, &s.u3.coeffs,
                &s.bh[0].coeffs, &s.bh[1].coeffs, &s.b3.coeffs,
            ],
        }
    }

    fn symbols(&self) -> Vec<&Array3<f64>> {
        let (u, b) = (&self.symbol_u, &self.symbol_b);
        match self.system {
            SystemKind::Pem => vec![u, u, b, b],
            _ => vec![u, u, u, b, b, b],
        }
    }

    fn tendency(&self, s: &State) -> Result<Vec<Coeffs>> {
        if !self.config.nonlinear {
            return Ok(self.prognostic(s).iter().map(|_| self.grid.zeros()).collect());
        }
        Ok(match self.system {
            SystemKind::Smhd | SystemKind::MhdThin => {
                let t = smhd::smhd_tendency(s)?;
                vec![t.uh[0].clone(), t.uh[1].clone(), t.u3, t.bh[0].clone(), t.bh[1].clone(), t.b3]
            }
            SystemKind::Pem => {
                let t = pem::pem_tendency(s)?;
                let [u1, u2] = t.uh;
                let [b1, b2] = t.bh;
                vec![u1, u2, b1, b2]
            }
        })
    }

    /// Advances `state` by one time step.
    pub fn step(&mut self, state: &State) -> Result<State> {
        if state.system != self.system {
            return Err(Error::WrongSystem {
                expected: self.system.to_string(),
                got: state.system.to_string(),
            });
        }
        let dt = self.config.dt;
        let now = self.tendency(state)?;
        let cnab = self.config.integrator == Integrator::ImexCnab2;
        let old = self.prognostic(state);
        let symbols = self.symbols();

        let mut next: Vec<Coeffs> = Vec::with_capacity(old.len());
        for (c, q) in old.iter().enumerate() {
            let mut out = (*q).clone();
            let a = symbols[c];
            match (cnab, &self.previous) {
                (true, Some(prev)) => {
                    Zip::from(&mut out)
                        .and(a)
                        .and(&now[c])
                        .and(&prev[c])
                        .for_each(|q, &a, &n, &p| {
                            let half = 0.5 * dt * a;
                            *q = (*q * (1.0 - half) + (n * 1.5 - p * 0.5) * dt) / (1.0 + half);
                        });
                }
                _ => {
                    Zip::from(&mut out).and(a).and(&now[c]).for_each(|q, &a, &n| {
                        *q = (*q + n * dt) / (1.0 + dt * a);
                    });
                }
            }
            next.push(out);
        }
        self.previous = Some(now);

        let mut s = state.clone();
        s.t = state.t + dt;
        match self.system {
            SystemKind::Smhd => {
                let mut it = next.into_iter();
                let (u1, u2, u3) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let (b1, b2, b3) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let proj = smhd::project_smhd(&state.grid, [&u1, &u2], &u3, self.eps)?;
                let [p1, p2] = proj.uh;
                s.uh[0].coeffs = p1;
                s.uh[1].coeffs = p2;
                s.u3.coeffs = proj.u3;
                s.p.coeffs = proj.p.mapv(|c| c / dt);
                s.bh[0].coeffs = b1;
                s.bh[1].coeffs = b2;
                s.b3.coeffs = b3;
            }
            SystemKind::MhdThin => {
                let mut it = next.into_iter();
                let (u1, u2, u3) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let (b1, b2, b3) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
                let grid = &state.grid;
                let proj = smhd::project_leray(grid, [&u1, &u2, &u3])?;
                let [p1, p2, p3] = proj.u;
                s.uh[0].coeffs = p1;
                s.uh[1].coeffs = p2;
                s.u3.coeffs = p3;
                s.p.coeffs = proj.p.mapv(|c| c / dt);
                s.bh[0].coeffs = b1;
                s.bh[1].coeffs = b2;
                s.b3.coeffs = b3;
            }
            SystemKind::Pem => {
                let mut it = next.into_iter();
                let (u1, u2) = (it.next().unwrap(), it.next().unwrap());
                let (b1, b2) = (it.next().unwrap(), it.next().unwrap());
                let grid = &state.grid;
                let proj = pem::project_pem(grid, [&u1, &u2])?;
                let [p1, p2] = proj.uh;
                s.uh[0].coeffs = p1;
                s.uh[1].coeffs = p2;
                s.p.coeffs = crate::fields::embed_plane(grid, &proj.p_surface.mapv(|c| c / dt));
                if self.config.project_magnetic {
                    let pb = pem::project_pem(grid, [&b1, &b2])?;
                    let [q1, q2] = pb.uh;
                    s.bh[0].coeffs = q1;
                    s.bh[1].coeffs = q2;
                } else {
                    s.bh[0].coeffs = b1;
                    s.bh[1].coeffs = b2;
                }
                s.u3 = reconstruct_vertical([&s.uh[0].coeffs, &s.uh[1].coeffs], grid)?;
                s.b3 = reconstruct_vertical([&s.bh[0].coeffs, &s.bh[1].coeffs], grid)?;
            }
        }
        check_blowup(&s)?;
        Ok(s)
    }
}

fn check_blowup(s: &State) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::BlowUp { t: s.t, reason: "non-finite field".into() });
    }
    for (name, f) in ["u1", "u2", "u3", "b1", "b2", "b3"].iter().zip(s.fields()) {
        let n = s.grid.norm2_sq(&f.coeffs).sqrt();
        if n > BLOWUP_NORM {
            return Err(Error::BlowUp { t: s.t, reason: format!("‖{name}‖₂ = {n:.3e}") });
        }
    }
    Ok(())
}

/// Projects every field back onto its declared parity class.
pub fn re_symmetrize(state: &mut State) {
    for f in state.fields_mut() {
        *f = enforce_parity(f, f.parity);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    BlowUp { t: f64, reason: String },
}

/// Outcome of [`run`]. On blow-up the record holds every row emitted before
/// the failure and `final_state` is the last finite state.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub final_state: State,
    pub record: DiagnosticsRecord,
    pub status: RunStatus,
    pub steps: usize,
}

/// Integrates `init` to `config.t_final`, emitting a diagnostics row at step
/// 0, every `output_every` steps, and at the final step.
pub fn run(
    system: SystemKind,
    init: &State,
    eps: f64,
    config: &SolverConfig,
    sink: &mut dyn FnMut(&DiagnosticsRow),
) -> Result<RunSummary> {
    if init.system != system {
        return Err(Error::WrongSystem { expected: system.to_string(), got: init.system.to_string() });
    }
    let mut solver = Solver::new(system, &init.grid, eps, config)?;
    let mut state = init.clone();
    state.eps = eps;
    let mut record = DiagnosticsRecord::new();
    let mut emit = |s: &State, record: &mut DiagnosticsRecord| -> Result<()> {
        let row = DiagnosticsRow::of(s);
        record.push(row)?;
        sink(&row);
        Ok(())
    };
    emit(&state, &mut record)?;

    let n = config.steps();
    for step in 1..=n {
        let next = match solver.step(&state) {
            Ok(s) => s,
            Err(Error::BlowUp { t, reason }) => {
                return Ok(RunSummary {
                    final_state: state,
                    record,
                    status: RunStatus::BlowUp { t, reason },
                    steps: step - 1,
                })
            }
            Err(e) => return Err(e),
        };
        state = next;
        if let Some(k) = config.re_symmetrize_every {
            if step % k == 0 {
                re_symmetrize(&mut state);
                if system == SystemKind::Pem {
                    let g = state.grid.clone();
                    state.u3 = reconstruct_vertical([&state.uh[0].coeffs, &state.uh[1].coeffs], &g)?;
                    state.b3 = reconstruct_vertical([&state.bh[0].coeffs, &state.bh[1].coeffs], &g)?;
                }
            }
        }
        if step % config.output_every == 0 || step == n {
            emit(&state, &mut record)?;
        }
    }
    Ok(RunSummary { final_state: state, record, status: RunStatus::Completed, steps: n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_admissible_state, InitParams};
    use crate::grid::{make_grid, Fraction};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        make_grid(2.0 * PI, 2.0 * PI, 2.0, 16, 16, 8, Fraction::TWO_THIRDS).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig { dt: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { t_final: -1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { output_every: 0, ..Default::default() }.validate().is_err());
        assert_eq!(SolverConfig { dt: 0.1, t_final: 1.0, ..Default::default() }.steps(), 10);
        assert_eq!(SolverConfig { dt: 0.3, t_final: 1.0, ..Default::default() }.steps(), 3);
    }

    #[test]
    fn fluxes_of_single_mode_match_hand_computation() {
        // u = (sin y, 0, 0), b = (cos z, cos x, 0), both divergence free
        let g = make_grid(2.0 * PI, 2.0 * PI, 2.0 * PI, 16, 16, 16, Fraction::TWO_THIRDS).unwrap();
        let f = |h: &dyn Fn(f64, f64, f64) -> f64| g.forward(&g.sample(h)).unwrap();
        let u = [f(&|_, y, _| y.sin()), g.zeros(), g.zeros()];
        let b = [f(&|_, _, z| z.cos()), f(&|x, _, _| x.cos()), g.zeros()];
        let fl = mhd_fluxes(&g, [&u[0], &u[1], &u[2]], [&b[0], &b[1], &b[2]]);
        let phys = |c: &Coeffs| g.inverse(c).unwrap();
        // momentum: -(u·∇)u + (b·∇)b
        //   (u·∇)u = sin y ∂x(sin y, 0, 0) = 0
        //   (b·∇)b = cos z ∂x(cos z, cos x, 0) + cos x ∂y(..) = (0, -cos z sin x, 0)
        // induction: -(u·∇)b + (b·∇)u
        //   (u·∇)b = sin y ∂x b = (0, -sin y sin x, 0)
        //   (b·∇)u = cos x ∂y u = (cos x cos y, 0, 0)
        let exact_m = [
            g.sample(|_, _, _| 0.0),
            g.sample(|x, _, z| -z.cos() * x.sin()),
            g.sample(|_, _, _| 0.0),
        ];
        let exact_i = [
            g.sample(|x, y, _| x.cos() * y.cos()),
            g.sample(|x, y, _| y.sin() * x.sin()),
            g.sample(|_, _, _| 0.0),
        ];
        for c in 0..3 {
            let em = (&phys(&fl.momentum[c]) - &exact_m[c]).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let ei = (&phys(&fl.induction[c]) - &exact_i[c]).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            assert!(em < 1e-13 && ei < 1e-13, "component {c}: {em} {ei}");
        }
    }

    #[test]
    fn cfl_estimate() {
        let g = grid();
        let mut s = State::zeros(&g, SystemKind::Smhd, 0.1);
        assert_eq!(cfl_dt(&s, 0.3), None);
        s.uh[0].coeffs = g.forward(&g.sample(|_, y, _| 2.0 * y.sin())).unwrap();
        let dt = cfl_dt(&s, 0.3).unwrap();
        let expected = 0.3 * (2.0 * PI / 16.0) / 2.0;
        assert!((dt - expected).abs() < 1e-12);
    }

    #[test]
    fn wrong_system_is_rejected() {
        let g = grid();
        let s = State::zeros(&g, SystemKind::Pem, 0.0);
        let mut solver = Solver::new(SystemKind::Smhd, &g, 0.1, &SolverConfig::default()).unwrap();
        assert!(matches!(solver.step(&s), Err(Error::WrongSystem { .. })));
        assert!(Solver::new(SystemKind::Smhd, &g, 0.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn run_counts_rows() {
        let g = grid();
        let s = State::zeros(&g, SystemKind::Smhd, 0.1);
        let cfg = SolverConfig { dt: 0.1, t_final: 0.55, output_every: 1, ..Default::default() };
        let mut seen = 0;
        let out = run(SystemKind::Smhd, &s, 0.1, &cfg, &mut |_| seen += 1).unwrap();
        assert_eq!(out.record.len(), 5 + 1);
        assert_eq!(seen, 6);

        let cfg0 = SolverConfig { t_final: 0.0, ..cfg.clone() };
        let init = random_admissible_state(&g, &InitParams { seed: 1, decay: 3.0, amplitude: 0.5 })
            .unwrap()
            .as_system(SystemKind::Smhd, 0.1);
        let out = run(SystemKind::Smhd, &init, 0.1, &cfg0, &mut |_| {}).unwrap();
        assert_eq!(out.record.len(), 1);
        assert_eq!(out.final_state.uh[0].coeffs, init.uh[0].coeffs);
        assert_eq!(out.final_state.t, 0.0);
    }

    #[test]
    fn blowup_is_reported_with_partial_record() {
        let g = grid();
        let mut init = random_admissible_state(&g, &InitParams { seed: 3, decay: 2.0, amplitude: 1e6 })
            .unwrap()
            .as_system(SystemKind::Smhd, 0.5);
        init.t = 0.0;
        let cfg = SolverConfig { dt: 0.05, t_final: 5.0, ..Default::default() };
        let out = run(SystemKind::Smhd, &init, 0.5, &cfg, &mut |_| {}).unwrap();
        match out.status {
            RunStatus::BlowUp { t, .. } => assert!(t > 0.0),
            RunStatus::Completed => panic!("expected blow-up"),
        }
        assert!(!out.record.is_empty());
        assert!(out.final_state.is_finite());
    }
}
