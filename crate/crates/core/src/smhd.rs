//! The scaled MHD system on the fixed domain and the anisotropic MHD system
//! on the thin domain.
//!
//! In the scaled variables the vertical momentum equation reads
//! `∂t u₃ + u·∇u₃ - Δu₃ - b·∇b₃ + ε⁻²∂z p = 0` after division by `ε²`, so the
//! pressure enters through the anisotropic gradient `(∇_H p, ε⁻²∂z p)` and is
//! removed by the projection [`project_smhd`]. The `b₃` equation carries `ε²`
//! on every term and is integrated in its divided form.
//!
//! The thin-domain system uses the same quadratic terms in physical
//! variables, the diffusion `μΔ_H + ν∂z²` (resp. `κ`, `σ`) and the standard
//! Leray projection [`project_leray`] with the thin-domain wavenumbers. Time
//! stepping for both lives in [`crate::solver::Solver`].

use ndarray::Zip;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{horizontal_divergence, State, SystemKind};
use crate::grid::{Coeffs, Dir, Grid};
use crate::solver::mhd_fluxes;

/// Explicit tendencies of the SMHD system before projection.
#[derive(Clone, Debug)]
pub struct SmhdTendency {
    pub uh: [Coeffs; 2],
    pub u3: Coeffs,
    pub bh: [Coeffs; 2],
    pub b3: Coeffs,
}

/// `F_uH = -(u·∇)ũ + (b·∇)b̃`, `F_u3 = -u·∇u₃ + b·∇b₃`,
/// `F_bH = -(u·∇)b̃ + (b·∇)ũ`, `F_b3 = -u·∇b₃ + b·∇u₃`, dealiased.
///
/// Also valid for thin-domain states, whose quadratic terms have the same
/// form in physical variables.
pub fn smhd_tendency(state: &State) -> Result<SmhdTendency> {
    if state.system == SystemKind::Pem {
        return Err(Error::WrongSystem {
            expected: SystemKind::Smhd.to_string(),
            got: state.system.to_string(),
        });
    }
    let f = mhd_fluxes(&state.grid, state.velocity(), state.magnetic());
    let [m0, m1, m2] = f.momentum;
    let [i0, i1, i2] = f.induction;
    Ok(SmhdTendency { uh: [m0, m1], u3: m2, bh: [i0, i1], b3: i2 })
}

/// Result of the anisotropic projection.
#[derive(Clone, Debug)]
pub struct SmhdProjection {
    pub uh: [Coeffs; 2],
    pub u3: Coeffs,
    /// Potential `φ` with `ũ = ũ* - ∇_H φ`, `u₃ = u₃* - ε⁻²∂z φ`.
    pub p: Coeffs,
}

/// Projects provisional `(ũ*, u₃*)` onto `∇_H·ũ + ∂z u₃ = 0` along the
/// anisotropic gradient: `(Δ_H + ε⁻²∂z²)φ = ∇_H·ũ* + ∂z u₃*`.
pub fn project_smhd(grid: &Grid, uh: [&Coeffs; 2], u3: &Coeffs, eps: f64) -> Result<SmhdProjection> {
    let mut div = horizontal_divergence(grid, uh);
    div += &grid.derivative(u3, Dir::Z);
    let phi = grid.solve_aniso_poisson(&div, eps)?;

    let w = 1.0 / (eps * eps);
    let (kx, ky, kz) = (grid.kd(Dir::X), grid.kd(Dir::Y), grid.kd(Dir::Z));
    let mut out1 = uh[0].clone();
    let mut out2 = uh[1].clone();
    let mut out3 = u3.clone();
    Zip::indexed(&mut out1)
        .and(&mut out2)
        .and(&mut out3)
        .and(&phi)
        .for_each(|(i, j, k), a, b, c, &p| {
            *a -= Complex64::new(0.0, kx[i]) * p;
            *b -= Complex64::new(0.0, ky[j]) * p;
            *c -= Complex64::new(0.0, w * kz[k]) * p;
        });
    Ok(SmhdProjection { uh: [out1, out2], u3: out3, p: phi })
}

/// Result of the standard Leray projection.
#[derive(Clone, Debug)]
pub struct LerayProjection {
    pub u: [Coeffs; 3],
    /// Potential `φ` with `u = u* - ∇φ`.
    pub p: Coeffs,
}

/// Standard Leray projection `u = u* - ∇φ`, `Δφ = ∇·u*`.
pub fn project_leray(grid: &Grid, u: [&Coeffs; 3]) -> Result<LerayProjection> {
    let mut div = horizontal_divergence(grid, [u[0], u[1]]);
    div += &grid.derivative(u[2], Dir::Z);
    let phi = grid.solve_poisson(&div)?;
    let mut out = [u[0].clone(), u[1].clone(), u[2].clone()];
    for (c, dir) in out.iter_mut().zip(Dir::ALL) {
        let k = grid.kd(dir);
        Zip::indexed(c).and(&phi).for_each(|(i, j, l), v, &p| {
            let kk = match dir {
                Dir::X => k[i],
                Dir::Y => k[j],
                Dir::Z => k[l],
            };
            *v -= Complex64::new(0.0, kk) * p;
        });
    }
    Ok(LerayProjection { u: out, p: phi })
}
