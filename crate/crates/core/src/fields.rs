//! Field and state containers, z-parity classes, admissible initial data and
//! the diagnostic reconstruction of vertical components.

use std::fmt;

use ndarray::{Array3, Axis, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Coeffs, Coeffs2, Dir, Grid, GridSpec};

/// Default tolerance for declared parities and state invariants.
pub const INVARIANT_TOL: f64 = 1e-10;

/// Tolerance on the z-mean of the horizontal divergence before the vertical
/// antiderivative is refused.
pub const BAROTROPIC_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
    None,
}

/// Which set of equations a [`State`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SystemKind {
    /// Anisotropic MHD on the thin domain `M × (-ε, ε)`.
    MhdThin,
    /// Scaled MHD on the fixed domain `M × (-1, 1)`.
    Smhd,
    /// Primitive equations with magnetic field.
    Pem,
}

impl SystemKind {
    pub fn tag(self) -> u64 {
        match self {
            SystemKind::MhdThin => 0,
            SystemKind::Smhd => 1,
            SystemKind::Pem => 2,
        }
    }

    pub fn from_tag(tag: u64) -> Option<Self> {
        match tag {
            0 => Some(SystemKind::MhdThin),
            1 => Some(SystemKind::Smhd),
            2 => Some(SystemKind::Pem),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::MhdThin => "mhd-thin",
            SystemKind::Smhd => "smhd",
            SystemKind::Pem => "pem",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SystemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mhd-thin" => Ok(SystemKind::MhdThin),
            "smhd" => Ok(SystemKind::Smhd),
            "pem" => Ok(SystemKind::Pem),
            other => Err(Error::Config(format!("unknown system {other:?}"))),
        }
    }
}

/// Splits coefficients into their even and odd parts in `z`.
///
/// With the vertical origin at collocation index 0, `f(-z)` has coefficient
/// `c(kx, ky, -kz)`, so the split is a symmetrization along the last axis.
pub fn parity_split(coeffs: &Coeffs) -> (Coeffs, Coeffs) {
    let nz = coeffs.len_of(Axis(2));
    let mut even = coeffs.clone();
    let mut odd = coeffs.clone();
    Zip::indexed(&mut even)
        .and(&mut odd)
        .for_each(|(i, j, k), e, o| {
            let c = coeffs[[i, j, k]];
            let m = coeffs[[i, j, (nz - k) % nz]];
            *e = (c + m) * 0.5;
            *o = (c - m) * 0.5;
        });
    (even, odd)
}

/// A periodic scalar on a grid, stored spectrally, with a declared z-parity.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub coeffs: Coeffs,
    pub parity: Parity,
}

impl ScalarField {
    pub fn new(coeffs: Coeffs, parity: Parity) -> Self {
        Self { coeffs, parity }
    }

    pub fn zeros(grid: &Grid, parity: Parity) -> Self {
        Self::new(grid.zeros(), parity)
    }

    pub fn from_physical(grid: &Grid, values: &Array3<f64>, parity: Parity) -> Result<Self> {
        Ok(Self::new(grid.forward(values)?, parity))
    }

    pub fn to_physical(&self, grid: &Grid) -> Result<Array3<f64>> {
        grid.inverse(&self.coeffs)
    }

    /// Relative L² size of the content with the wrong parity; zero for
    /// `Parity::None`.
    pub fn parity_violation(&self) -> f64 {
        let (even, odd) = parity_split(&self.coeffs);
        let wrong = match self.parity {
            Parity::Even => odd,
            Parity::Odd => even,
            Parity::None => return 0.0,
        };
        relative(coeff_norm(&wrong), coeff_norm(&self.coeffs))
    }

    pub fn satisfies_parity(&self, tol: f64) -> bool {
        self.parity_violation() < tol
    }
}

/// Returns the even or odd part of `field`, tagged with the new parity.
/// `Parity::None` returns the field unchanged.
pub fn enforce_parity(field: &ScalarField, parity: Parity) -> ScalarField {
    let coeffs = match parity {
        Parity::None => field.coeffs.clone(),
        Parity::Even => parity_split(&field.coeffs).0,
        Parity::Odd => parity_split(&field.coeffs).1,
    };
    ScalarField::new(coeffs, parity)
}

pub(crate) fn coeff_norm(c: &Coeffs) -> f64 {
    c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den.max(f64::MIN_POSITIVE)
    }
}

/// `∇_H·f_H` in spectral space.
pub fn horizontal_divergence(grid: &Grid, fh: [&Coeffs; 2]) -> Coeffs {
    let mut div = grid.derivative(fh[0], Dir::X);
    div += &grid.derivative(fh[1], Dir::Y);
    div
}

/// Rebuilds the odd vertical component `f₃(z) = -∫₀^z ∇_H·f_H dξ` of a
/// divergence-free field from its horizontal part.
///
/// Integration is spectral in `z`; the additive constant is chosen so that the
/// result vanishes at `z = 0`. The `k_z = 0` plane of `∇_H·f_H` has to vanish,
/// otherwise the antiderivative is not periodic.
pub fn reconstruct_vertical(fh: [&Coeffs; 2], grid: &Grid) -> Result<ScalarField> {
    let mut g = horizontal_divergence(grid, fh);
    g.mapv_inplace(|c| -c);

    let scale = g.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
    let residual = g
        .index_axis(Axis(2), 0)
        .iter()
        .fold(0.0_f64, |m, c| m.max(c.norm()));
    if residual > BAROTROPIC_TOL * scale.max(1.0) {
        return Err(Error::BarotropicViolation { residual });
    }

    let kz = grid.k(Dir::Z);
    let nyq = grid.spec().nz / 2;
    Zip::indexed(&mut g).for_each(|(_, _, k), c| {
        *c = if k == 0 || k == nyq {
            Complex64::default()
        } else {
            *c / Complex64::new(0.0, kz[k])
        };
    });
    let at_zero = grid.at_z0(&g);
    g.index_axis_mut(Axis(2), 0)
        .zip_mut_with(&at_zero, |c, v| *c = -*v);
    Ok(ScalarField::new(g, Parity::Odd))
}

/// Full solution record at one time.
#[derive(Clone, Debug)]
pub struct State {
    pub grid: Grid,
    pub uh: [ScalarField; 2],
    pub u3: ScalarField,
    pub bh: [ScalarField; 2],
    pub b3: ScalarField,
    pub p: ScalarField,
    pub t: f64,
    pub eps: f64,
    pub system: SystemKind,
}

impl State {
    pub fn zeros(grid: &Grid, system: SystemKind, eps: f64) -> Self {
        let even = || ScalarField::zeros(grid, Parity::Even);
        let odd = || ScalarField::zeros(grid, Parity::Odd);
        Self {
            grid: grid.clone(),
            uh: [even(), even()],
            u3: odd(),
            bh: [even(), even()],
            b3: odd(),
            // pressure is treated as even in z, see the crate README
            p: even(),
            t: 0.0,
            eps,
            system,
        }
    }

    /// Retags the state for another system on the same fixed-domain grid.
    pub fn as_system(mut self, system: SystemKind, eps: f64) -> Self {
        self.system = system;
        self.eps = eps;
        self
    }

    pub fn velocity(&self) -> [&Coeffs; 3] {
        [&self.uh[0].coeffs, &self.uh[1].coeffs, &self.u3.coeffs]
    }

    pub fn magnetic(&self) -> [&Coeffs; 3] {
        [&self.bh[0].coeffs, &self.bh[1].coeffs, &self.b3.coeffs]
    }

    /// All seven fields in snapshot order `u1 u2 u3 b1 b2 b3 p`.
    pub fn fields(&self) -> [&ScalarField; 7] {
        [
            &self.uh[0], &self.uh[1], &self.u3, &self.bh[0], &self.bh[1], &self.b3, &self.p,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut ScalarField; 7] {
        let State { uh, u3, bh, b3, p, .. } = self;
        let [u1, u2] = uh;
        let [b1, b2] = bh;
        [u1, u2, u3, b1, b2, b3, p]
    }

    pub fn is_finite(&self) -> bool {
        self.fields()
            .iter()
            .all(|f| f.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }

    /// Relative divergence `‖∇·f‖₂ / ‖∇f‖₂` of a three-component field.
    pub fn relative_divergence(&self, f: [&Coeffs; 3]) -> f64 {
        let g = &self.grid;
        let mut div = horizontal_divergence(g, [f[0], f[1]]);
        div += &g.derivative(f[2], Dir::Z);
        let grad: f64 = f.iter().map(|c| g.grad_norm2_sq(c)).sum();
        relative(g.norm2_sq(&div).sqrt(), grad.sqrt())
    }

    pub fn divergence_u(&self) -> f64 {
        self.relative_divergence(self.velocity())
    }

    pub fn divergence_b(&self) -> f64 {
        self.relative_divergence(self.magnetic())
    }

    /// Largest relative wrong-parity content over all fields.
    pub fn parity_drift(&self) -> f64 {
        self.fields()
            .iter()
            .map(|f| f.parity_violation())
            .fold(0.0, f64::max)
    }

    /// Relative barotropic divergence `‖∇_H·f̄_H‖ / ‖∇_H f̄_H‖` of the vertical
    /// average of a horizontal pair.
    pub fn barotropic_divergence(&self, fh: [&Coeffs; 2]) -> f64 {
        let g = &self.grid;
        let div = horizontal_divergence(g, fh);
        let num = coeff_norm(&div.index_axis(Axis(2), 0).to_owned().insert_axis(Axis(2)));
        let mut den = 0.0;
        for c in fh {
            let plane = g.vertical_mean(c);
            for ((i, j), v) in plane.indexed_iter() {
                den += g.weighted_k2(i, j, 0, 0.0) * v.norm_sqr();
            }
        }
        relative(num, den.sqrt())
    }

    pub fn check_invariants(&self) -> InvariantReport {
        let mean = |f: &ScalarField| relative(f.coeffs[[0, 0, 0]].norm(), coeff_norm(&f.coeffs));
        let z0 = |f: &ScalarField| {
            let at = self.grid.at_z0(&f.coeffs);
            relative(
                at.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt(),
                coeff_norm(&f.coeffs),
            )
        };
        let uh = [&self.uh[0].coeffs, &self.uh[1].coeffs];
        let bh = [&self.bh[0].coeffs, &self.bh[1].coeffs];
        let reconstruction = if self.system == SystemKind::Pem {
            let ru = reconstruct_vertical(uh, &self.grid)
                .map(|r| relative(coeff_norm(&(&r.coeffs - &self.u3.coeffs)), coeff_norm(&self.u3.coeffs)))
                .unwrap_or(f64::INFINITY);
            let rb = reconstruct_vertical(bh, &self.grid)
                .map(|r| relative(coeff_norm(&(&r.coeffs - &self.b3.coeffs)), coeff_norm(&self.b3.coeffs)))
                .unwrap_or(f64::INFINITY);
            ru.max(rb)
        } else {
            0.0
        };
        InvariantReport {
            divergence_u: self.divergence_u(),
            divergence_b: self.divergence_b(),
            parity: self.parity_drift(),
            mean: [&self.uh[0], &self.uh[1], &self.bh[0], &self.bh[1]]
                .into_iter()
                .map(mean)
                .fold(0.0, f64::max),
            barotropic: self.barotropic_divergence(uh).max(self.barotropic_divergence(bh)),
            vertical_at_z0: z0(&self.u3).max(z0(&self.b3)),
            reconstruction,
        }
    }
}

/// Measured violations of the state invariants, each relative to the size of
/// the field it concerns.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InvariantReport {
    pub divergence_u: f64,
    pub divergence_b: f64,
    pub parity: f64,
    pub mean: f64,
    pub barotropic: f64,
    pub vertical_at_z0: f64,
    pub reconstruction: f64,
}

impl InvariantReport {
    pub fn max(&self) -> f64 {
        [
            self.divergence_u,
            self.divergence_b,
            self.parity,
            self.mean,
            self.barotropic,
            self.vertical_at_z0,
            self.reconstruction,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max() < tol
    }
}

/// Parameters of the random smooth initial data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub seed: u64,
    /// Coefficients are damped like `|k|^(-decay)`.
    pub decay: f64,
    /// Peak pointwise magnitude of `ũ₀` and of `b̃₀`.
    pub amplitude: f64,
}

fn random_horizontal_pair(grid: &Grid, rng: &mut ChaCha8Rng, decay: f64) -> [Coeffs; 2] {
    let spec = grid.spec();
    let nyq = (spec.nx / 2, spec.ny / 2, spec.nz / 2);
    let mut draw = || {
        let mut c = grid.zeros();
        for ((i, j, k), v) in c.indexed_iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            if (i, j, k) == (0, 0, 0) || i == nyq.0 || j == nyq.1 || k == nyq.2 {
                continue;
            }
            if !grid.retained(i, j, k) {
                continue;
            }
            let k2 = grid.weighted_k2(i, j, k, 1.0);
            *v = Complex64::new(re, im) * k2.powf(-decay / 2.0);
        }
        parity_split(&grid.hermitian_part(&c)).0
    };
    let mut pair = [draw(), draw()];

    // barotropic constraint: make the vertical average 2D divergence free
    let (kx, ky) = (grid.k(Dir::X), grid.k(Dir::Y));
    let [a, b] = &mut pair;
    let mut pa = a.index_axis_mut(Axis(2), 0);
    let mut pb = b.index_axis_mut(Axis(2), 0);
    Zip::indexed(&mut pa).and(&mut pb).for_each(|(i, j), ca, cb| {
        let k2 = kx[i] * kx[i] + ky[j] * ky[j];
        if k2 > 0.0 {
            let proj = (*ca * kx[i] + *cb * ky[j]) / k2;
            *ca -= proj * kx[i];
            *cb -= proj * ky[j];
        }
    });
    pair
}

fn scale_to_peak(grid: &Grid, pair: &mut [Coeffs; 2], amplitude: f64) {
    let a = grid.inverse_unchecked(&pair[0]);
    let b = grid.inverse_unchecked(&pair[1]);
    let peak = Zip::from(&a)
        .and(&b)
        .fold(0.0_f64, |m, x, y| m.max((x * x + y * y).sqrt()));
    let s = if peak > 0.0 { amplitude / peak } else { 0.0 };
    for c in pair.iter_mut() {
        c.mapv_inplace(|v| v * s);
    }
}

/// Seeded smooth data satisfying every hypothesis of the convergence
/// theorems: even horizontal fields with zero mean and divergence-free
/// vertical averages, odd vertical components from [`reconstruct_vertical`].
///
/// The state is tagged [`SystemKind::Pem`] with `ε = 0`; use
/// [`State::as_system`] to start an SMHD run from the same data.
pub fn random_admissible_state(grid: &Grid, params: &InitParams) -> Result<State> {
    if !(params.decay >= 2.0) {
        return Err(Error::Config(format!(
            "decay exponent {} must be at least 2",
            params.decay
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut u = random_horizontal_pair(grid, &mut rng, params.decay);
    let mut b = random_horizontal_pair(grid, &mut rng, params.decay);
    scale_to_peak(grid, &mut u, params.amplitude);
    scale_to_peak(grid, &mut b, params.amplitude);

    let mut s = State::zeros(grid, SystemKind::Pem, 0.0);
    s.u3 = reconstruct_vertical([&u[0], &u[1]], grid)?;
    s.b3 = reconstruct_vertical([&b[0], &b[1]], grid)?;
    let [u1, u2] = u;
    let [b1, b2] = b;
    s.uh = [ScalarField::new(u1, Parity::Even), ScalarField::new(u2, Parity::Even)];
    s.bh = [ScalarField::new(b1, Parity::Even), ScalarField::new(b2, Parity::Even)];
    Ok(s)
}

/// Grid of the thin domain matching a fixed-domain grid: same horizontal
/// geometry and resolution, vertical period multiplied by `ε`.
pub fn thin_grid(fixed: &GridSpec, eps: f64) -> Result<Grid> {
    let s = GridSpec::new(fixed.l1, fixed.l2, eps * fixed.lz, fixed.nx, fixed.ny, fixed.nz, fixed.dealias)?;
    Ok(Grid::new(s))
}

fn check_scaling_grids(fixed: &GridSpec, thin: &GridSpec, eps: f64) -> Result<()> {
    let same = fixed.nx == thin.nx
        && fixed.ny == thin.ny
        && fixed.nz == thin.nz
        && fixed.l1 == thin.l1
        && fixed.l2 == thin.l2
        && fixed.dealias == thin.dealias
        && (thin.lz - eps * fixed.lz).abs() <= 1e-12 * thin.lz;
    if same {
        Ok(())
    } else {
        Err(Error::IncompatibleGrids(format!(
            "fixed {fixed:?} and thin {thin:?} are not related by eps = {eps}"
        )))
    }
}

fn scaled(f: &ScalarField, factor: f64) -> ScalarField {
    ScalarField::new(f.coeffs.mapv(|c| c * factor), f.parity)
}

/// Maps an SMHD state on the fixed domain to the thin-domain MHD state:
/// horizontal fields and pressure are relabeled `z ↦ εz` (same coefficient
/// arrays on matching grids) and vertical components are multiplied by `ε`.
pub fn scale_up(state: &State, eps: f64) -> Result<State> {
    if state.system != SystemKind::Smhd {
        return Err(Error::WrongSystem {
            expected: SystemKind::Smhd.to_string(),
            got: state.system.to_string(),
        });
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps = {eps} must be positive")));
    }
    let grid = thin_grid(state.grid.spec(), eps)?;
    Ok(State {
        grid,
        uh: state.uh.clone(),
        u3: scaled(&state.u3, eps),
        bh: state.bh.clone(),
        b3: scaled(&state.b3, eps),
        p: state.p.clone(),
        t: state.t,
        eps,
        system: SystemKind::MhdThin,
    })
}

/// Inverse of [`scale_up`] onto the given fixed-domain grid.
pub fn scale_down(thin: &State, fixed: &Grid) -> Result<State> {
    if thin.system != SystemKind::MhdThin {
        return Err(Error::WrongSystem {
            expected: SystemKind::MhdThin.to_string(),
            got: thin.system.to_string(),
        });
    }
    let eps = thin.eps;
    check_scaling_grids(fixed.spec(), thin.grid.spec(), eps)?;
    Ok(State {
        grid: fixed.clone(),
        uh: thin.uh.clone(),
        u3: ScalarField::new(thin.u3.coeffs.mapv(|c| c / eps), thin.u3.parity),
        bh: thin.bh.clone(),
        b3: ScalarField::new(thin.b3.coeffs.mapv(|c| c / eps), thin.b3.parity),
        p: thin.p.clone(),
        t: thin.t,
        eps,
        system: SystemKind::Smhd,
    })
}

/// Componentwise difference between an SMHD state and a PEM state.
#[derive(Clone, Debug)]
pub struct DifferenceState {
    pub uh: [Coeffs; 2],
    pub u3: Coeffs,
    pub bh: [Coeffs; 2],
    pub b3: Coeffs,
    pub eps: f64,
}

impl DifferenceState {
    pub fn between(s_eps: &State, s_lim: &State) -> Result<Self> {
        if s_eps.grid.spec() != s_lim.grid.spec() {
            return Err(Error::IncompatibleGrids(
                "difference of states on different grids".into(),
            ));
        }
        let d = |a: &ScalarField, b: &ScalarField| &a.coeffs - &b.coeffs;
        Ok(Self {
            uh: [d(&s_eps.uh[0], &s_lim.uh[0]), d(&s_eps.uh[1], &s_lim.uh[1])],
            u3: d(&s_eps.u3, &s_lim.u3),
            bh: [d(&s_eps.bh[0], &s_lim.bh[0]), d(&s_eps.bh[1], &s_lim.bh[1])],
            b3: d(&s_eps.b3, &s_lim.b3),
            eps: s_eps.eps,
        })
    }
}

/// The `k_z = 0` plane of a field broadcast back to a 3D coefficient array.
pub(crate) fn embed_plane(grid: &Grid, plane: &Coeffs2) -> Coeffs {
    let mut c = grid.zeros();
    c.index_axis_mut(Axis(2), 0).assign(plane);
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Fraction};
    use std::f64::consts::PI;

    fn grid() -> Grid {
        make_grid(2.0 * PI, 2.0 * PI, 2.0, 16, 16, 8, Fraction::TWO_THIRDS).unwrap()
    }

    fn params(seed: u64) -> InitParams {
        InitParams { seed, decay: 3.0, amplitude: 0.5 }
    }

    #[test]
    fn reconstruct_single_mode() {
        let l1 = 3.0;
        let g = make_grid(l1, 2.0, 2.0, 16, 8, 16, Fraction::TWO_THIRDS).unwrap();
        let k = 2.0 * PI / l1;
        let f1 = g.forward(&g.sample(|x, _, z| (k * x).cos() * (PI * z).cos())).unwrap();
        let u3 = reconstruct_vertical([&f1, &g.zeros()], &g).unwrap();
        let got = u3.to_physical(&g).unwrap();
        let exact = g.sample(|x, _, z| k * (k * x).sin() * (PI * z).sin() / PI);
        let err = (&got - &exact).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-13, "error {err}");
        assert_eq!(u3.parity, Parity::Odd);
    }

    #[test]
    fn reconstruct_of_horizontally_solenoidal_field_is_zero() {
        let g = grid();
        // (∂y ψ, -∂x ψ) for ψ = sin(x)cos(2y)cos(πz)
        let f1 = g.forward(&g.sample(|x, y, z| -2.0 * x.sin() * (2.0 * y).sin() * (PI * z).cos())).unwrap();
        let f2 = g.forward(&g.sample(|x, y, z| -x.cos() * (2.0 * y).cos() * (PI * z).cos())).unwrap();
        let u3 = reconstruct_vertical([&f1, &f2], &g).unwrap();
        assert!(coeff_norm(&u3.coeffs) < 1e-14);
    }

    #[test]
    fn reconstruct_rejects_barotropic_divergence() {
        let g = grid();
        let f1 = g.forward(&g.sample(|x, _, _| x.cos())).unwrap();
        assert!(matches!(
            reconstruct_vertical([&f1, &g.zeros()], &g),
            Err(Error::BarotropicViolation { .. })
        ));
    }

    #[test]
    fn reconstruct_is_odd_and_vanishes_at_zero() {
        let g = grid();
        for seed in 0..5 {
            let s = random_admissible_state(&g, &params(seed)).unwrap();
            let u3 = reconstruct_vertical([&s.uh[0].coeffs, &s.uh[1].coeffs], &g).unwrap();
            assert!(u3.parity_violation() < 1e-14);
            let phys = u3.to_physical(&g).unwrap();
            let plane = phys.index_axis(Axis(2), 0);
            assert!(plane.iter().all(|v| v.abs() < 1e-14));
        }
    }

    #[test]
    fn parity_projection() {
        let g = grid();
        let even = ScalarField::from_physical(&g, &g.sample(|x, _, z| x.sin() * (PI * z).cos()), Parity::Even).unwrap();
        let again = enforce_parity(&even, Parity::Even);
        assert!(coeff_norm(&(&again.coeffs - &even.coeffs)) < 1e-15);

        // the sawtooth f(z) = z is odd away from the self-mirrored point z = -1
        let saw = ScalarField::from_physical(&g, &g.sample(|_, _, z| z), Parity::None).unwrap();
        let e = enforce_parity(&saw, Parity::Even).to_physical(&g).unwrap();
        for ((_, _, k), v) in e.indexed_iter() {
            if k == 4 {
                assert!((v + 1.0).abs() < 1e-14);
            } else {
                assert!(v.abs() < 1e-14);
            }
        }

        let f = ScalarField::from_physical(&g, &g.sample(|x, y, z| (x + 2.0 * z).sin() * y.cos() + z * z), Parity::None).unwrap();
        let sum = &enforce_parity(&f, Parity::Even).coeffs + &enforce_parity(&f, Parity::Odd).coeffs;
        assert!(coeff_norm(&(&sum - &f.coeffs)) < 1e-15);
    }

    #[test]
    fn admissible_state_invariants() {
        let g = grid();
        for seed in 0..20 {
            let s = random_admissible_state(&g, &params(seed)).unwrap();
            let r = s.check_invariants();
            assert!(r.passes(INVARIANT_TOL), "seed {seed}: {r:?}");
            assert!(coeff_norm(&s.uh[0].coeffs) > 0.0);
        }
    }

    #[test]
    fn admissible_state_amplitude_and_determinism() {
        let g = grid();
        let a = random_admissible_state(&g, &params(4)).unwrap();
        let b = random_admissible_state(&g, &params(4)).unwrap();
        for (x, y) in a.fields().iter().zip(b.fields()) {
            assert_eq!(x.coeffs, y.coeffs);
        }
        let u1 = a.uh[0].to_physical(&g).unwrap();
        let u2 = a.uh[1].to_physical(&g).unwrap();
        let peak = Zip::from(&u1).and(&u2).fold(0.0_f64, |m, x, y| m.max(x.hypot(*y)));
        assert!((peak - 0.5).abs() < 1e-12);

        let zero = random_admissible_state(&g, &InitParams { amplitude: 0.0, ..params(4) }).unwrap();
        assert!(zero.fields().iter().all(|f| f.coeffs.iter().all(|c| c.norm() == 0.0)));

        assert!(random_admissible_state(&g, &InitParams { decay: 1.5, ..params(4) }).is_err());
    }

    #[test]
    fn scaling_round_trip() {
        let g = grid();
        let s = random_admissible_state(&g, &params(2)).unwrap().as_system(SystemKind::Smhd, 0.1);
        let thin = scale_up(&s, 0.1).unwrap();
        assert_eq!(thin.system, SystemKind::MhdThin);
        assert!((thin.grid.spec().lz - 0.2).abs() < 1e-15);
        assert!(thin.check_invariants().passes(INVARIANT_TOL));
        let back = scale_down(&thin, &g).unwrap();
        assert_eq!(back.uh[0].coeffs, s.uh[0].coeffs);
        assert_eq!(back.bh[1].coeffs, s.bh[1].coeffs);
        assert_eq!(back.p.coeffs, s.p.coeffs);
        for (a, b) in [(&back.u3, &s.u3), (&back.b3, &s.b3)] {
            for (x, y) in a.coeffs.iter().zip(b.coeffs.iter()) {
                assert!((x - y).norm() <= 2.0 * f64::EPSILON * y.norm());
            }
        }

        let zero = State::zeros(&g, SystemKind::Smhd, 0.3);
        let z = scale_down(&scale_up(&zero, 0.3).unwrap(), &g).unwrap();
        assert!(z.fields().iter().all(|f| f.coeffs.iter().all(|c| c.norm() == 0.0)));
    }

    #[test]
    fn scale_up_single_mode() {
        // thin u3 = ε·sin(x)·sin(π z'/ε) maps to SMHD u3 = sin(x)·sin(π z)
        let eps = 0.25;
        let g = grid();
        let tg = thin_grid(g.spec(), eps).unwrap();
        let mut thin = State::zeros(&tg, SystemKind::MhdThin, eps);
        thin.u3.coeffs = tg.forward(&tg.sample(|x, _, z| eps * x.sin() * (PI * z / eps).sin())).unwrap();
        let s = scale_down(&thin, &g).unwrap();
        let got = s.u3.to_physical(&g).unwrap();
        let exact = g.sample(|x, _, z| x.sin() * (PI * z).sin());
        assert!((&got - &exact).iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn scaling_rejects_incompatible_grids() {
        let g = grid();
        let s = State::zeros(&g, SystemKind::Smhd, 0.1);
        let thin = scale_up(&s, 0.1).unwrap();
        let other = make_grid(2.0 * PI, 2.0 * PI, 2.0, 8, 16, 8, Fraction::TWO_THIRDS).unwrap();
        assert!(matches!(scale_down(&thin, &other), Err(Error::IncompatibleGrids(_))));
        let taller = make_grid(2.0 * PI, 2.0 * PI, 4.0, 16, 16, 8, Fraction::TWO_THIRDS).unwrap();
        assert!(scale_down(&thin, &taller).is_err());
        assert!(scale_down(&s, &g).is_err());
        assert!(scale_up(&thin, 0.1).is_err());
    }
}
