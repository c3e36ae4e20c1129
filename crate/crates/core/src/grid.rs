//! Periodic box geometry and the Fourier machinery on top of it.
//!
//! Every direction uses a complex Fourier collocation basis. Physical samples
//! sit at `x_i = i·L1/Nx`, `y_j = j·L2/Ny` and `z_k = k·Lz/Nz` wrapped into
//! `[-Lz/2, Lz/2)`, so the vertical origin is the collocation point `k = 0`
//! and the reflection `z ↦ -z` maps index `k` to `(Nz - k) mod Nz`.
//!
//! The forward transform divides by the total number of points, which makes
//! the zero mode the domain mean and gives the Parseval relation
//! `‖f‖₂² = |Ω|·Σ|f̂(k)|²`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array2, Array3, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spectral coefficients indexed `(kx, ky, kz)` in FFT order.
pub type Coeffs = Array3<Complex64>;

/// Coefficients of a z-independent field, indexed `(kx, ky)`.
pub type Coeffs2 = Array2<Complex64>;

const POISSON_MEAN_TOL: f64 = 1e-12;

/// A rational number in `(0, 1]`, used for the dealiasing cutoff.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fraction {
    num: u32,
    den: u32,
}

impl Fraction {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if den == 0 || num == 0 || num > den {
            return Err(Error::InvalidGrid(format!(
                "dealias fraction {num}/{den} must lie in (0, 1]"
            )));
        }
        Ok(Self { num, den })
    }

    pub const TWO_THIRDS: Fraction = Fraction { num: 2, den: 3 };
    pub const ONE: Fraction = Fraction { num: 1, den: 1 };

    pub fn value(&self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }

    /// Whether mode index `m` survives on an axis with `n` points.
    pub fn keeps(&self, m: i64, n: usize) -> bool {
        m.unsigned_abs() * u64::from(self.den) <= u64::from(self.num) * (n as u64 / 2)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Fraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidGrid(format!("cannot parse dealias fraction {s:?}"));
        let s = s.trim();
        match s.split_once('/') {
            Some((a, b)) => {
                let num = a.trim().parse().map_err(|_| bad())?;
                let den = b.trim().parse().map_err(|_| bad())?;
                Fraction::new(num, den)
            }
            None => Fraction::new(s.parse().map_err(|_| bad())?, 1),
        }
    }
}

impl TryFrom<String> for Fraction {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Fraction> for String {
    fn from(f: Fraction) -> String {
        f.to_string()
    }
}

/// Coordinate direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    X,
    Y,
    Z,
}

impl Dir {
    pub const ALL: [Dir; 3] = [Dir::X, Dir::Y, Dir::Z];

    pub fn index(self) -> usize {
        match self {
            Dir::X => 0,
            Dir::Y => 1,
            Dir::Z => 2,
        }
    }
}

/// Validated periodic box geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub l1: f64,
    pub l2: f64,
    pub lz: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dealias: Fraction,
}

impl GridSpec {
    pub fn new(
        l1: f64,
        l2: f64,
        lz: f64,
        nx: usize,
        ny: usize,
        nz: usize,
        dealias: Fraction,
    ) -> Result<Self> {
        for (name, n) in [("Nx", nx), ("Ny", ny), ("Nz", nz)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "{name} = {n} must be even and at least 4"
                )));
            }
        }
        for (name, l) in [("L1", l1), ("L2", l2), ("Lz", lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{name} = {l} must be positive")));
            }
        }
        Ok(Self { l1, l2, lz, nx, ny, nz, dealias })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.nz)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn volume(&self) -> f64 {
        self.l1 * self.l2 * self.lz
    }

    pub fn horizontal_area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn period(&self, dir: Dir) -> f64 {
        match dir {
            Dir::X => self.l1,
            Dir::Y => self.l2,
            Dir::Z => self.lz,
        }
    }

    pub fn points(&self, dir: Dir) -> usize {
        match dir {
            Dir::X => self.nx,
            Dir::Y => self.ny,
            Dir::Z => self.nz,
        }
    }

    pub fn spacing(&self, dir: Dir) -> f64 {
        self.period(dir) / self.points(dir) as f64
    }

    /// Signed mode numbers `{0, 1, …, N/2, -N/2+1, …, -1}` in FFT order.
    pub fn mode_numbers(&self, dir: Dir) -> Vec<i64> {
        let n = self.points(dir);
        (0..n).map(|i| mode_number(i, n)).collect()
    }

    /// Wavenumbers `2πm/L` in FFT order.
    pub fn wavenumbers(&self, dir: Dir) -> Vec<f64> {
        let l = self.period(dir);
        self.mode_numbers(dir)
            .into_iter()
            .map(|m| 2.0 * PI * m as f64 / l)
            .collect()
    }

    /// Physical coordinate of collocation index `i`; the vertical axis is
    /// wrapped into `[-Lz/2, Lz/2)`.
    pub fn coordinate(&self, dir: Dir, i: usize) -> f64 {
        let h = self.spacing(dir);
        match dir {
            Dir::X | Dir::Y => i as f64 * h,
            Dir::Z => {
                let n = self.nz;
                let m = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
                m as f64 * h
            }
        }
    }
}

fn mode_number(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

struct Fft3 {
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    fn new(shape: (usize, usize, usize)) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, ny, nz) = shape;
        Self {
            forward: [
                planner.plan_fft_forward(nx),
                planner.plan_fft_forward(ny),
                planner.plan_fft_forward(nz),
            ],
            inverse: [
                planner.plan_fft_inverse(nx),
                planner.plan_fft_inverse(ny),
                planner.plan_fft_inverse(nz),
            ],
        }
    }

    fn run(&self, data: &mut Coeffs, plans: &[Arc<dyn Fft<f64>>; 3]) {
        for (axis, fft) in plans.iter().enumerate() {
            let n = data.len_of(Axis(axis));
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            if axis == 2 {
                if let Some(slice) = data.as_slice_mut() {
                    fft.process_with_scratch(slice, &mut scratch);
                    continue;
                }
            }
            let mut buf = vec![Complex64::default(); n];
            for mut lane in data.lanes_mut(Axis(axis)) {
                for (b, v) in buf.iter_mut().zip(lane.iter()) {
                    *b = *v;
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for (v, b) in lane.iter_mut().zip(buf.iter()) {
                    *v = *b;
                }
            }
        }
    }
}

/// A [`GridSpec`] together with cached FFT plans and wavenumber tables.
/// Cloning is cheap.
#[derive(Clone)]
pub struct Grid {
    spec: GridSpec,
    k: [Arc<[f64]>; 3],
    kd: [Arc<[f64]>; 3],
    keep: [Arc<[bool]>; 3],
    nyquist: [usize; 3],
    fft: Arc<Fft3>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

/// Builds a validated grid.
pub fn make_grid(
    l1: f64,
    l2: f64,
    lz: f64,
    nx: usize,
    ny: usize,
    nz: usize,
    dealias: Fraction,
) -> Result<Grid> {
    Ok(Grid::new(GridSpec::new(l1, l2, lz, nx, ny, nz, dealias)?))
}

impl Grid {
    pub fn new(spec: GridSpec) -> Self {
        let k = Dir::ALL.map(|d| Arc::from(spec.wavenumbers(d)));
        let kd = Dir::ALL.map(|d| {
            let mut w = spec.wavenumbers(d);
            w[spec.points(d) / 2] = 0.0;
            Arc::from(w)
        });
        let keep = Dir::ALL.map(|d| {
            let n = spec.points(d);
            Arc::from(
                spec.mode_numbers(d)
                    .into_iter()
                    .map(|m| spec.dealias.keeps(m, n))
                    .collect::<Vec<_>>(),
            )
        });
        Self {
            spec,
            k,
            kd,
            keep,
            nyquist: Dir::ALL.map(|d| spec.points(d) / 2),
            fft: Arc::new(Fft3::new(spec.shape())),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.spec.shape()
    }

    pub fn volume(&self) -> f64 {
        self.spec.volume()
    }

    /// Wavenumber table along `dir`, in FFT order.
    pub fn k(&self, dir: Dir) -> &[f64] {
        &self.k[dir.index()]
    }

    /// Wavenumbers seen by [`Grid::derivative`]: the Nyquist entry is zero.
    /// Poisson solves and projections use these so that the discrete
    /// divergence of a projected field vanishes exactly.
    pub fn kd(&self, dir: Dir) -> &[f64] {
        &self.kd[dir.index()]
    }

    pub fn zeros(&self) -> Coeffs {
        Coeffs::zeros(self.shape())
    }

    /// Evaluates `f(x, y, z)` at every collocation point.
    pub fn sample<F: Fn(f64, f64, f64) -> f64>(&self, f: F) -> Array3<f64> {
        let s = self.spec;
        Array3::from_shape_fn(self.shape(), |(i, j, k)| {
            f(
                s.coordinate(Dir::X, i),
                s.coordinate(Dir::Y, j),
                s.coordinate(Dir::Z, k),
            )
        })
    }

    fn check_shape(&self, got: (usize, usize, usize)) -> Result<()> {
        if got != self.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), got });
        }
        Ok(())
    }

    /// Forward transform of physical samples.
    pub fn forward(&self, field: &Array3<f64>) -> Result<Coeffs> {
        self.check_shape(field.dim())?;
        Ok(self.forward_unchecked(field))
    }

    pub(crate) fn forward_unchecked(&self, field: &Array3<f64>) -> Coeffs {
        let mut data = field.mapv(|v| Complex64::new(v, 0.0));
        // a fresh array is always in standard layout
        self.fft.run(&mut data, &self.fft.forward);
        let scale = 1.0 / self.spec.len() as f64;
        data.mapv_inplace(|c| c * scale);
        data
    }

    /// Inverse transform; returns the real part of the synthesis.
    pub fn inverse(&self, coeffs: &Coeffs) -> Result<Array3<f64>> {
        self.check_shape(coeffs.dim())?;
        Ok(self.inverse_unchecked(coeffs))
    }

    pub(crate) fn inverse_unchecked(&self, coeffs: &Coeffs) -> Array3<f64> {
        let mut data = coeffs.as_standard_layout().into_owned();
        self.fft.run(&mut data, &self.fft.inverse);
        data.mapv(|c| c.re)
    }

    /// Spectral derivative along `dir`; the Nyquist plane of that axis is zeroed.
    pub fn derivative(&self, coeffs: &Coeffs, dir: Dir) -> Coeffs {
        let mut out = coeffs.clone();
        self.derivative_inplace(&mut out, dir);
        out
    }

    pub fn derivative_inplace(&self, coeffs: &mut Coeffs, dir: Dir) {
        let a = dir.index();
        let k = &self.k[a];
        let nyq = self.nyquist[a];
        for (idx, mut lane) in coeffs.axis_iter_mut(Axis(a)).enumerate() {
            if idx == nyq {
                lane.fill(Complex64::default());
            } else {
                let ik = Complex64::new(0.0, k[idx]);
                lane.mapv_inplace(|c| c * ik);
            }
        }
    }

    /// Truncates every mode with `|m| > fraction·N/2` on any axis.
    pub fn dealias(&self, coeffs: &mut Coeffs) {
        if self.spec.dealias == Fraction::ONE {
            return;
        }
        let [kx, ky, kz] = &self.keep;
        Zip::indexed(coeffs).for_each(|(i, j, k), c| {
            if !(kx[i] && ky[j] && kz[k]) {
                *c = Complex64::default();
            }
        });
    }

    pub fn dealiased(&self, mut coeffs: Coeffs) -> Coeffs {
        self.dealias(&mut coeffs);
        coeffs
    }

    /// Whether mode `(i, j, k)` survives dealiasing.
    pub fn retained(&self, i: usize, j: usize, k: usize) -> bool {
        self.keep[0][i] && self.keep[1][j] && self.keep[2][k]
    }

    /// `|k_H|² + w·k_z²` at mode `(i, j, k)`, with derivative wavenumbers.
    pub fn weighted_k2(&self, i: usize, j: usize, k: usize, vertical_weight: f64) -> f64 {
        let (kx, ky, kz) = (self.kd[0][i], self.kd[1][j], self.kd[2][k]);
        kx * kx + ky * ky + vertical_weight * kz * kz
    }

    /// Symbol `μ|k_H|² + ν k_z²` of `-(μΔ_H + ν∂z²)` on the full mode table.
    pub fn diffusion_symbol(&self, horizontal: f64, vertical: f64) -> Array3<f64> {
        Array3::from_shape_fn(self.shape(), |(i, j, k)| {
            let (kx, ky, kz) = (self.k[0][i], self.k[1][j], self.k[2][k]);
            horizontal * (kx * kx + ky * ky) + vertical * kz * kz
        })
    }

    fn check_mean(c0: Complex64, scale: f64) -> Result<()> {
        if c0.norm() > POISSON_MEAN_TOL * scale.max(1.0) {
            return Err(Error::IncompatiblePoisson { mean: c0.norm() });
        }
        Ok(())
    }

    /// Solves `(Δ_H + ε⁻²∂z²) p = rhs` with the mean of `p` pinned to zero.
    pub fn solve_aniso_poisson(&self, rhs: &Coeffs, eps: f64) -> Result<Coeffs> {
        self.check_shape(rhs.dim())?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!("eps = {eps} must be positive")));
        }
        let scale = rhs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        Self::check_mean(rhs[[0, 0, 0]], scale)?;
        let w = 1.0 / (eps * eps);
        let mut p = rhs.clone();
        Zip::indexed(&mut p).for_each(|(i, j, k), c| {
            let d = self.weighted_k2(i, j, k, w);
            *c = if d == 0.0 { Complex64::default() } else { -*c / d };
        });
        Ok(p)
    }

    /// Isotropic Poisson solve `Δ p = rhs` with the mean of `p` pinned to zero.
    pub fn solve_poisson(&self, rhs: &Coeffs) -> Result<Coeffs> {
        self.check_shape(rhs.dim())?;
        let scale = rhs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        Self::check_mean(rhs[[0, 0, 0]], scale)?;
        let mut p = rhs.clone();
        Zip::indexed(&mut p).for_each(|(i, j, k), c| {
            let d = self.weighted_k2(i, j, k, 1.0);
            *c = if d == 0.0 { Complex64::default() } else { -*c / d };
        });
        Ok(p)
    }

    /// Solves `Δ_H p = rhs` for a z-independent field over `(kx, ky)`.
    pub fn solve_horizontal_poisson(&self, rhs: &Coeffs2) -> Result<Coeffs2> {
        let expected = (self.spec.nx, self.spec.ny);
        if rhs.dim() != expected {
            return Err(Error::ShapeMismatch {
                expected: (expected.0, expected.1, 1),
                got: (rhs.dim().0, rhs.dim().1, 1),
            });
        }
        let scale = rhs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        Self::check_mean(rhs[[0, 0]], scale)?;
        let mut p = rhs.clone();
        Zip::indexed(&mut p).for_each(|(i, j), c| {
            let d = self.weighted_k2(i, j, 0, 0.0);
            *c = if d == 0.0 { Complex64::default() } else { -*c / d };
        });
        Ok(p)
    }

    /// Applies `Δ_H + w·∂z²` spectrally.
    pub fn apply_weighted_laplacian(&self, coeffs: &Coeffs, vertical_weight: f64) -> Coeffs {
        let mut out = coeffs.clone();
        Zip::indexed(&mut out).for_each(|(i, j, k), c| {
            *c *= -self.weighted_k2(i, j, k, vertical_weight);
        });
        out
    }

    /// `‖f‖₂²` over the box, via Parseval.
    pub fn norm2_sq(&self, coeffs: &Coeffs) -> f64 {
        self.volume() * coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    /// `‖∇f‖₂²` via Parseval (all three directions).
    pub fn grad_norm2_sq(&self, coeffs: &Coeffs) -> f64 {
        self.weighted_grad_norm2_sq(coeffs, 1.0, 1.0)
    }

    /// `h‖∇_H f‖₂² + v‖∂z f‖₂²` via Parseval. Nyquist planes are excluded to
    /// match the derivative convention.
    pub fn weighted_grad_norm2_sq(&self, coeffs: &Coeffs, h: f64, v: f64) -> f64 {
        let mut sum = 0.0;
        for ((i, j, k), c) in coeffs.indexed_iter() {
            let (kx, ky, kz) = (self.kd[0][i], self.kd[1][j], self.kd[2][k]);
            sum += (h * (kx * kx + ky * ky) + v * kz * kz) * c.norm_sqr();
        }
        self.volume() * sum
    }

    /// `‖Δf‖₂²` via Parseval.
    pub fn laplacian_norm2_sq(&self, coeffs: &Coeffs) -> f64 {
        let mut sum = 0.0;
        for ((i, j, k), c) in coeffs.indexed_iter() {
            let d = self.weighted_k2(i, j, k, 1.0);
            sum += d * d * c.norm_sqr();
        }
        self.volume() * sum
    }

    /// The `k_z = 0` plane, i.e. the coefficients of the vertical average.
    pub fn vertical_mean(&self, coeffs: &Coeffs) -> Coeffs2 {
        coeffs.index_axis(Axis(2), 0).to_owned()
    }

    /// Evaluates the vertical Fourier series at `z = 0` for every `(kx, ky)`.
    pub fn at_z0(&self, coeffs: &Coeffs) -> Coeffs2 {
        coeffs.sum_axis(Axis(2))
    }

    /// Real-valued projection `(c(k) + conj c(-k))/2`.
    pub fn hermitian_part(&self, coeffs: &Coeffs) -> Coeffs {
        let (nx, ny, nz) = self.shape();
        Array3::from_shape_fn(self.shape(), |(i, j, k)| {
            let mirror = coeffs[[(nx - i) % nx, (ny - j) % ny, (nz - k) % nz]];
            (coeffs[[i, j, k]] + mirror.conj()) * 0.5
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid {
        make_grid(2.0 * PI, 2.0 * PI, 2.0, n, n, n, Fraction::TWO_THIRDS).unwrap()
    }

    fn random_field(g: &Grid, seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn(g.shape(), |_| rng.random_range(-1.0..1.0))
    }

    fn max_abs(a: &Array3<f64>) -> f64 {
        a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn make_grid_examples() {
        let g = grid(8);
        let mut m = g.spec().mode_numbers(Dir::X);
        m.sort();
        assert_eq!(m, vec![-3, -2, -1, 0, 1, 2, 3, 4]);
        let kx = g.k(Dir::X);
        assert!((kx[1] - 1.0).abs() < 1e-15);

        assert!(make_grid(1.0, 1.0, 2.0, 3, 8, 8, Fraction::TWO_THIRDS).is_err());
        assert!(make_grid(1.0, 1.0, 2.0, 2, 8, 8, Fraction::TWO_THIRDS).is_err());
        assert!(make_grid(0.0, 1.0, 2.0, 8, 8, 8, Fraction::TWO_THIRDS).is_err());
        assert!(make_grid(1.0, -1.0, 2.0, 8, 8, 8, Fraction::TWO_THIRDS).is_err());

        let eps = 0.1;
        let thin = make_grid(1.0, 1.0, 2.0 * eps, 8, 8, 8, Fraction::TWO_THIRDS).unwrap();
        let kz = thin.k(Dir::Z);
        for (idx, m) in thin.spec().mode_numbers(Dir::Z).into_iter().enumerate() {
            let expected = 2.0 * PI * m as f64 / 0.2;
            assert!((kz[idx] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!("2/3".parse::<Fraction>().unwrap(), Fraction::TWO_THIRDS);
        assert_eq!("1".parse::<Fraction>().unwrap(), Fraction::ONE);
        assert!("4/3".parse::<Fraction>().is_err());
        assert!("0/3".parse::<Fraction>().is_err());
        assert!("x".parse::<Fraction>().is_err());
    }

    #[test]
    fn vertical_coordinates_are_centered() {
        let g = grid(8);
        let z: Vec<f64> = (0..8).map(|k| g.spec().coordinate(Dir::Z, k)).collect();
        assert_eq!(z, vec![0.0, 0.25, 0.5, 0.75, -1.0, -0.75, -0.5, -0.25]);
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = grid(8);
        let c = g.forward(&Array3::from_elem(g.shape(), 3.5)).unwrap();
        for ((i, j, k), v) in c.indexed_iter() {
            if (i, j, k) == (0, 0, 0) {
                assert!((v.re - 3.5).abs() < 1e-14 && v.im.abs() < 1e-14);
            } else {
                assert!(v.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn sine_has_two_conjugate_modes() {
        let g = grid(8);
        let f = g.sample(|x, _, _| x.sin());
        let c = g.forward(&f).unwrap();
        let plus = c[[1, 0, 0]];
        let minus = c[[7, 0, 0]];
        assert!((plus - Complex64::new(0.0, -0.5)).norm() < 1e-14);
        assert!((minus - plus.conj()).norm() < 1e-14);
        let others: f64 = c
            .indexed_iter()
            .filter(|((i, j, k), _)| !((*i == 1 || *i == 7) && *j == 0 && *k == 0))
            .map(|(_, v)| v.norm())
            .sum();
        assert!(others < 1e-13);
    }

    #[test]
    fn random_round_trip() {
        let g = make_grid(1.0, 2.0, 0.5, 16, 8, 12, Fraction::TWO_THIRDS).unwrap();
        for seed in 0..5 {
            let f = random_field(&g, seed);
            let back = g.inverse(&g.forward(&f).unwrap()).unwrap();
            let err = max_abs(&(&back - &f));
            assert!(err < 1e-13 * max_abs(&f), "round trip error {err}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let g = grid(8);
        assert!(matches!(
            g.forward(&Array3::zeros((8, 8, 4))),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(g.inverse(&Coeffs::zeros((4, 8, 8))).is_err());
    }

    #[test]
    fn forward_is_hermitian() {
        let g = grid(8);
        let c = g.forward(&random_field(&g, 3)).unwrap();
        let h = g.hermitian_part(&c);
        let diff = (&h - &c).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn derivative_of_sine() {
        let l1 = 3.0;
        let g = make_grid(l1, 2.0, 2.0, 16, 8, 8, Fraction::TWO_THIRDS).unwrap();
        let kx = 2.0 * PI / l1;
        let f = g.sample(|x, _, _| (kx * x).sin());
        let d = g.inverse(&g.derivative(&g.forward(&f).unwrap(), Dir::X)).unwrap();
        let exact = g.sample(|x, _, _| kx * (kx * x).cos());
        assert!(max_abs(&(&d - &exact)) < 1e-12);

        let c = g.forward(&Array3::from_elem(g.shape(), 2.0)).unwrap();
        for dir in Dir::ALL {
            let d = g.inverse(&g.derivative(&c, dir)).unwrap();
            assert!(max_abs(&d) < 1e-15);
        }
    }

    #[test]
    fn z_derivative_flips_parity() {
        let g = grid(16);
        let f = g.sample(|x, y, z| (PI * z).cos() * x.sin() + (2.0 * PI * z).cos() * y.cos());
        let d = g.inverse(&g.derivative(&g.forward(&f).unwrap(), Dir::Z)).unwrap();
        let nz = 16;
        for ((i, j, k), v) in d.indexed_iter() {
            let mirror = d[[i, j, (nz - k) % nz]];
            assert!((v + mirror).abs() < 1e-12);
        }
    }

    #[test]
    fn dealias_rules() {
        let g = make_grid(1.0, 1.0, 1.0, 12, 12, 12, Fraction::TWO_THIRDS).unwrap();
        let modes = g.spec().mode_numbers(Dir::X);
        for (i, m) in modes.iter().enumerate() {
            assert_eq!(g.retained(i, 0, 0), m.abs() <= 4, "m = {m}");
        }

        let g1 = make_grid(1.0, 1.0, 1.0, 8, 8, 8, Fraction::ONE).unwrap();
        let c = g1.forward(&random_field(&g1, 1)).unwrap();
        assert_eq!(g1.dealiased(c.clone()), c);
    }

    #[test]
    fn dealiased_product_has_no_aliasing() {
        // maximal retained mode on a 32-point axis is m = 10
        let g = make_grid(2.0 * PI, 2.0 * PI, 2.0 * PI, 32, 8, 8, Fraction::TWO_THIRDS).unwrap();
        let m = 10.0;
        let a = g.sample(|x, _, _| (m * x).cos());
        let b = g.sample(|x, _, _| (m * x).sin() + (m * x).cos());
        let prod = g.dealiased(g.forward(&(&a * &b)).unwrap());
        // exact product: cos·sin + cos² = sin(2mx)/2 + 1/2 + cos(2mx)/2
        // modes at ±2m = ±20 lie outside the retained band, only the mean survives
        for ((i, j, k), v) in prod.indexed_iter() {
            let expected = if (i, j, k) == (0, 0, 0) { 0.5 } else { 0.0 };
            assert!((v.re - expected).abs() < 1e-14 && v.im.abs() < 1e-14);
        }
    }

    #[test]
    fn derivative_commutes_with_dealias() {
        let g = grid(12);
        let c = g.forward(&random_field(&g, 9)).unwrap();
        for dir in Dir::ALL {
            let a = g.dealiased(g.derivative(&c, dir));
            let b = g.derivative(&g.dealiased(c.clone()), dir);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn parseval() {
        let g = make_grid(2.0, 3.0, 0.4, 8, 12, 8, Fraction::TWO_THIRDS).unwrap();
        let f = random_field(&g, 5);
        let dv = g.volume() / g.spec().len() as f64;
        let physical: f64 = f.iter().map(|v| v * v).sum::<f64>() * dv;
        let spectral = g.norm2_sq(&g.forward(&f).unwrap());
        assert!((physical - spectral).abs() < 1e-12 * physical);
    }

    #[test]
    fn aniso_poisson_single_mode() {
        let eps = 0.1;
        let g = grid(8);
        let (kx, ky, kz) = (1.0, 2.0, PI);
        let p_exact = g.sample(|x, y, z| (kx * x + ky * y + kz * z).cos());
        let factor = -(kx * kx + ky * ky + kz * kz / (eps * eps));
        let rhs = g.forward(&p_exact.mapv(|v| factor * v)).unwrap();
        let p = g.inverse(&g.solve_aniso_poisson(&rhs, eps).unwrap()).unwrap();
        assert!(max_abs(&(&p - &p_exact)) < 1e-12, "{}", max_abs(&(&p - &p_exact)));

        let zero = g.solve_aniso_poisson(&g.zeros(), eps).unwrap();
        assert!(zero.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn aniso_poisson_rejects_mean() {
        let g = grid(8);
        let mut rhs = g.zeros();
        rhs[[0, 0, 0]] = Complex64::new(1e-6, 0.0);
        assert!(matches!(
            g.solve_aniso_poisson(&rhs, 0.5),
            Err(Error::IncompatiblePoisson { .. })
        ));
        assert!(g.solve_poisson(&rhs).is_err());
    }

    #[test]
    fn aniso_poisson_at_unit_eps_is_isotropic() {
        let g = grid(8);
        let mut rhs = g.forward(&random_field(&g, 11)).unwrap();
        rhs[[0, 0, 0]] = Complex64::default();
        let a = g.solve_aniso_poisson(&rhs, 1.0).unwrap();
        let b = g.solve_poisson(&rhs).unwrap();
        let diff = (&a - &b).iter().map(|c| c.norm()).fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn horizontal_poisson() {
        let g = grid(8);
        let f = g.sample(|x, _, _| -(2.0 * x).sin() * 4.0);
        let rhs = g.vertical_mean(&g.forward(&f).unwrap());
        let p = g.solve_horizontal_poisson(&rhs).unwrap();
        let mut p3 = g.zeros();
        p3.index_axis_mut(Axis(2), 0).assign(&p);
        let phys = g.inverse(&p3).unwrap();
        let exact = g.sample(|x, _, _| (2.0 * x).sin());
        assert!(max_abs(&(&phys - &exact)) < 1e-13);

        let zero = g.solve_horizontal_poisson(&Coeffs2::zeros((8, 8))).unwrap();
        assert!(zero.iter().all(|c| c.norm() == 0.0));
        assert!(g.solve_horizontal_poisson(&Coeffs2::zeros((4, 8))).is_err());
    }
}
