//! The primitive equations with magnetic field.
//!
//! Only the horizontal velocity and magnetic field are prognostic. The
//! pressure is z-independent, so incompressibility reduces to the barotropic
//! constraint `∇_H·∫ũ dz = 0`, enforced by [`project_pem`]. The vertical
//! components are rebuilt from the horizontal ones after every step with
//! [`reconstruct_vertical`].

use ndarray::{Axis, Zip};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{horizontal_divergence, reconstruct_vertical, State, SystemKind};
use crate::grid::{Coeffs, Coeffs2, Dir, Grid};
use crate::solver::mhd_fluxes;

#[derive(Clone, Debug)]
pub struct PemTendency {
    pub uh: [Coeffs; 2],
    pub bh: [Coeffs; 2],
}

/// `-(u·∇)ũ + (b·∇)b̃` and `-(u·∇)b̃ + (b·∇)ũ` with the vertical components
/// reconstructed from the horizontal fields.
pub fn pem_tendency(state: &State) -> Result<PemTendency> {
    if state.system != SystemKind::Pem {
        return Err(Error::WrongSystem {
            expected: SystemKind::Pem.to_string(),
            got: state.system.to_string(),
        });
    }
    let g = &state.grid;
    let u3 = reconstruct_vertical([&state.uh[0].coeffs, &state.uh[1].coeffs], g)?;
    let b3 = reconstruct_vertical([&state.bh[0].coeffs, &state.bh[1].coeffs], g)?;
    let f = mhd_fluxes(
        g,
        [&state.uh[0].coeffs, &state.uh[1].coeffs, &u3.coeffs],
        [&state.bh[0].coeffs, &state.bh[1].coeffs, &b3.coeffs],
    );
    let [m0, m1, _] = f.momentum;
    let [i0, i1, _] = f.induction;
    Ok(PemTendency { uh: [m0, m1], bh: [i0, i1] })
}

#[derive(Clone, Debug)]
pub struct PemProjection {
    pub uh: [Coeffs; 2],
    /// Surface potential with zero mean.
    pub p_surface: Coeffs2,
}

/// Removes the 2D gradient `∇_H p` solving `Δ_H p = ∇_H·(z-average of ũ*)`
/// from every level.
pub fn project_pem(grid: &Grid, uh: [&Coeffs; 2]) -> Result<PemProjection> {
    let div = horizontal_divergence(grid, uh);
    let rhs = grid.vertical_mean(&div);
    let p = grid.solve_horizontal_poisson(&rhs)?;
    let (kx, ky) = (grid.kd(Dir::X), grid.kd(Dir::Y));
    let mut a = uh[0].clone();
    let mut b = uh[1].clone();
    Zip::indexed(a.index_axis_mut(Axis(2), 0))
        .and(b.index_axis_mut(Axis(2), 0))
        .and(&p)
        .for_each(|(i, j), a, b, &p| {
            *a -= Complex64::new(0.0, kx[i]) * p;
            *b -= Complex64::new(0.0, ky[j]) * p;
        });
    Ok(PemProjection { uh: [a, b], p_surface: p })
}
