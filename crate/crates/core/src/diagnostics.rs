//! Norms, energy functionals, SMHD-vs-PEM difference metrics and numerical
//! evaluators for the two anisotropic interpolation inequalities.
//!
//! All `L²` norms are evaluated through Parseval on the spectral
//! coefficients. `H¹` norms include the `L²` part: `‖f‖²_{H¹} = ‖f‖² + ‖∇f‖²`.

use std::io::{Read, Write};

use ndarray::{Array3, Axis, Zip};

use crate::error::{Error, Result};
use crate::fields::{relative, DifferenceState, ScalarField, State, SystemKind};
use crate::grid::{Coeffs, Dir, Grid};
use crate::solver::Viscosities;

/// Column names of the diagnostics CSV, in order.
pub const CSV_COLUMNS: [&str; 12] = [
    "t", "E", "D", "div_u", "div_b", "parity", "l2_uH", "l2_bH", "l2_eps_u3", "l2_eps_b3",
    "l2_diff", "h1_diff",
];

/// Energy `E` and dissipation rate `D` of a state.
///
/// For SMHD and PEM states `E = ‖ũ‖² + ‖b̃‖² + ε²‖u₃‖² + ε²‖b₃‖²` and
/// `D = ‖∇ũ‖² + ‖∇b̃‖² + ε²‖∇u₃‖² + ε²‖∇b₃‖²` (PEM has `ε = 0`), so that
/// `E(t) + 2∫₀ᵗ D ≤ E(0)`. For thin-domain states the physical energy
/// `‖u‖² + ‖b‖²` over `Ω_ε` is used with `D = μ‖∇_H u‖² + ν‖∂z u‖² + κ‖∇_H b‖² + σ‖∂z b‖²`
/// in the `μ = κ = 1, ν = σ = ε²` regime.
pub fn energy(state: &State, eps: f64) -> (f64, f64) {
    let g = &state.grid;
    let u = state.velocity();
    let b = state.magnetic();
    match state.system {
        SystemKind::MhdThin => {
            let v = Viscosities::regime(eps);
            let e = u.iter().chain(b.iter()).map(|c| g.norm2_sq(c)).sum();
            let du: f64 = u.iter().map(|c| g.weighted_grad_norm2_sq(c, v.mu, v.nu)).sum();
            let db: f64 = b.iter().map(|c| g.weighted_grad_norm2_sq(c, v.kappa, v.sigma)).sum();
            (e, du + db)
        }
        SystemKind::Smhd | SystemKind::Pem => {
            let w = eps * eps;
            let e = g.norm2_sq(u[0]) + g.norm2_sq(u[1]) + g.norm2_sq(b[0]) + g.norm2_sq(b[1])
                + w * (g.norm2_sq(u[2]) + g.norm2_sq(b[2]));
            let d = g.grad_norm2_sq(u[0])
                + g.grad_norm2_sq(u[1])
                + g.grad_norm2_sq(b[0])
                + g.grad_norm2_sq(b[1])
                + w * (g.grad_norm2_sq(u[2]) + g.grad_norm2_sq(b[2]));
            (e, d)
        }
    }
}

/// `‖f‖²_{H¹}` including the `L²` part.
pub fn h1_norm_sq(grid: &Grid, c: &Coeffs) -> f64 {
    grid.norm2_sq(c) + grid.grad_norm2_sq(c)
}

/// One sample of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub e: f64,
    pub d: f64,
    pub div_u: f64,
    pub div_b: f64,
    pub parity: f64,
    pub l2_uh: f64,
    pub l2_bh: f64,
    pub l2_eps_u3: f64,
    pub l2_eps_b3: f64,
    pub l2_diff: Option<f64>,
    pub h1_diff: Option<f64>,
}

impl DiagnosticsRow {
    /// Diagnostics of a single state. For thin-domain states the vertical
    /// norms are unweighted, since `u₃` there already carries the factor `ε`.
    pub fn of(state: &State) -> Self {
        let g = &state.grid;
        let (e, d) = energy(state, state.eps);
        let w = match state.system {
            SystemKind::MhdThin => 1.0,
            _ => state.eps,
        };
        let pair = |f: &[ScalarField; 2]| (g.norm2_sq(&f[0].coeffs) + g.norm2_sq(&f[1].coeffs)).sqrt();
        Self {
            t: state.t,
            e,
            d,
            div_u: state.divergence_u(),
            div_b: state.divergence_b(),
            parity: state.parity_drift(),
            l2_uh: pair(&state.uh),
            l2_bh: pair(&state.bh),
            l2_eps_u3: w * g.norm2_sq(&state.u3.coeffs).sqrt(),
            l2_eps_b3: w * g.norm2_sq(&state.b3.coeffs).sqrt(),
            l2_diff: None,
            h1_diff: None,
        }
    }

    pub fn with_difference(mut self, m: &DifferenceMetrics) -> Self {
        self.l2_diff = Some(m.l2_diff);
        self.h1_diff = Some(m.h1_diff);
        self
    }

    fn values(&self) -> [f64; 10] {
        [
            self.t, self.e, self.d, self.div_u, self.div_b, self.parity, self.l2_uh, self.l2_bh,
            self.l2_eps_u3, self.l2_eps_b3,
        ]
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
            && self.l2_diff.map_or(true, f64::is_finite)
            && self.h1_diff.map_or(true, f64::is_finite)
    }
}

/// Time series of [`DiagnosticsRow`]s with strictly increasing `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
    /// Number of leading columns present when the record was read from CSV;
    /// `None` for records built in memory, which carry every column.
    pub columns: Option<usize>,
}

impl DiagnosticsRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: DiagnosticsRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if !(row.t > last.t) {
                return Err(Error::Config(format!(
                    "diagnostics time {} does not increase past {}",
                    row.t, last.t
                )));
            }
        }
        if !row.is_finite() {
            return Err(Error::BlowUp { t: row.t, reason: "non-finite diagnostics".into() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// Whether column `name` is available.
    pub fn has_column(&self, name: &str) -> bool {
        match (self.columns, CSV_COLUMNS.iter().position(|c| *c == name)) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(n), Some(i)) => i < n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn column_count(&self) -> usize {
        if self.rows.iter().any(|r| r.h1_diff.is_some()) {
            12
        } else if self.rows.iter().any(|r| r.l2_diff.is_some()) {
            11
        } else {
            10
        }
    }

    /// Writes the CSV with a header row. The difference columns are dropped
    /// from the tail when no row carries them.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.column_count();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&CSV_COLUMNS[..n])?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.values().iter().map(|v| format!("{v:e}")).collect();
            for opt in [r.l2_diff, r.h1_diff].into_iter().take(n - 10) {
                rec.push(opt.map(|v| format!("{v:e}")).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a diagnostics CSV. The header must be a prefix of
    /// [`CSV_COLUMNS`] containing at least `t`; absent columns read as zero
    /// (or `None` for the difference columns).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let n = headers.len();
        if n == 0 || n > CSV_COLUMNS.len() {
            return Err(Error::MissingColumn("t".into()));
        }
        for (got, want) in headers.iter().zip(CSV_COLUMNS) {
            if got != want {
                return Err(Error::MissingColumn(format!("{want} (found {got:?})")));
            }
        }
        let mut record = Self::new();
        for rec in r.records() {
            let rec = rec?;
            let field = |i: usize| -> Result<Option<f64>> {
                match rec.get(i) {
                    None | Some("") => Ok(None),
                    Some(s) => s
                        .trim()
                        .parse()
                        .map(Some)
                        .map_err(|_| Error::Config(format!("bad number {s:?} in column {}", CSV_COLUMNS[i]))),
                }
            };
            let v = |i: usize| -> Result<f64> { Ok(field(i)?.unwrap_or(0.0)) };
            record.rows.push(DiagnosticsRow {
                t: v(0)?,
                e: v(1)?,
                d: v(2)?,
                div_u: v(3)?,
                div_b: v(4)?,
                parity: v(5)?,
                l2_uh: v(6)?,
                l2_bh: v(7)?,
                l2_eps_u3: v(8)?,
                l2_eps_b3: v(9)?,
                l2_diff: field(10)?,
                h1_diff: field(11)?,
            });
        }
        record.columns = Some(n);
        Ok(record)
    }
}

/// Weighted distance between an SMHD state and a PEM state at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DifferenceMetrics {
    pub t: f64,
    /// `(‖Ũ‖² + ε²‖U₃‖² + ‖B̃‖² + ε²‖B₃‖²)^{1/2}`
    pub l2_diff: f64,
    /// Same with `H¹` component norms.
    pub h1_diff: f64,
    /// Instantaneous `‖∇Ũ‖² + ε²‖∇U₃‖² + ‖∇B̃‖² + ε²‖∇B₃‖²`.
    pub grad_diss: f64,
    /// Running time integral of `grad_diss`; filled in by trajectory drivers.
    pub grad_diss_integral: f64,
}

/// Metrics of the difference `s_eps - s_lim`. The weight `ε` is taken from
/// whichever argument is not a PEM state.
pub fn difference_metrics(s_eps: &State, s_lim: &State) -> Result<DifferenceMetrics> {
    if (s_eps.t - s_lim.t).abs() > 1e-12 * s_eps.t.abs().max(1.0) {
        return Err(Error::Config(format!(
            "difference of states at different times {} and {}",
            s_eps.t, s_lim.t
        )));
    }
    let eps = if s_eps.system == SystemKind::Pem { s_lim.eps } else { s_eps.eps };
    let diff = DifferenceState::between(s_eps, s_lim)?;
    let g = &s_eps.grid;
    let w = eps * eps;
    let horiz = [&diff.uh[0], &diff.uh[1], &diff.bh[0], &diff.bh[1]];
    let vert = [&diff.u3, &diff.b3];
    let l2 = horiz.iter().map(|c| g.norm2_sq(c)).sum::<f64>()
        + w * vert.iter().map(|c| g.norm2_sq(c)).sum::<f64>();
    let grad = horiz.iter().map(|c| g.grad_norm2_sq(c)).sum::<f64>()
        + w * vert.iter().map(|c| g.grad_norm2_sq(c)).sum::<f64>();
    Ok(DifferenceMetrics {
        t: s_eps.t,
        l2_diff: l2.sqrt(),
        h1_diff: (l2 + grad).sqrt(),
        grad_diss: grad,
        grad_diss_integral: 0.0,
    })
}

/// Both sides of an inequality evaluated without its constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

const RATIO_ZERO_TOL: f64 = 1e-12;

fn ratio_of(lhs: f64, rhs: f64) -> Result<InequalityRatio> {
    let ratio = if rhs > 0.0 {
        lhs.abs() / rhs
    } else if lhs.abs() <= RATIO_ZERO_TOL {
        0.0
    } else {
        return Err(Error::Falsified { lhs });
    };
    Ok(InequalityRatio { lhs, rhs, ratio })
}

fn cell_volume(grid: &Grid) -> f64 {
    grid.volume() / grid.spec().len() as f64
}

/// `∫_M (∫α dz)(∫βγ dz) dxdy` against
/// `‖α‖^{1/2}(‖α‖^{1/2} + ‖∇_Hα‖^{1/2}) ‖β‖ ‖γ‖^{1/2}(‖γ‖^{1/2} + ‖∇_Hγ‖^{1/2})`.
///
/// The left side is evaluated by collocation quadrature. The ratio uses
/// `|lhs|`, since the inequality applied to `-α` bounds negative values too.
pub fn lemma21_ratio(
    grid: &Grid,
    alpha: &ScalarField,
    beta: &ScalarField,
    gamma: &ScalarField,
) -> Result<InequalityRatio> {
    let a = alpha.to_physical(grid)?;
    let bg = beta.to_physical(grid)? * gamma.to_physical(grid)?;
    let dz = grid.spec().spacing(Dir::Z);
    let dxdy = grid.spec().spacing(Dir::X) * grid.spec().spacing(Dir::Y);
    let ia = a.sum_axis(Axis(2)) * dz;
    let ibg = bg.sum_axis(Axis(2)) * dz;
    let lhs = (ia * ibg).sum() * dxdy;

    let n = |f: &ScalarField| grid.norm2_sq(&f.coeffs).sqrt();
    let nh = |f: &ScalarField| grid.weighted_grad_norm2_sq(&f.coeffs, 1.0, 0.0).sqrt();
    let (na, nb, ng) = (n(alpha), n(beta), n(gamma));
    let rhs = na.sqrt() * (na.sqrt() + nh(alpha).sqrt())
        * nb
        * ng.sqrt()
        * (ng.sqrt() + nh(gamma).sqrt());
    ratio_of(lhs, rhs)
}

const LEMMA22_HYPOTHESIS_TOL: f64 = 1e-8;

/// `|∫(φ·∇ϕ)ψ|` against `‖∇φ_H‖^{1/2}‖Δφ_H‖^{1/2}‖∇ϕ‖^{1/2}‖Δϕ‖^{1/2}‖ψ‖`.
///
/// `φ` must be divergence free, mean zero, and have `φ₃ = 0` on `z = 0`.
pub fn lemma22_ratio(
    grid: &Grid,
    phi: [&ScalarField; 3],
    phi_scalar: &ScalarField,
    psi: &ScalarField,
) -> Result<InequalityRatio> {
    let size: f64 = phi.iter().map(|f| grid.norm2_sq(&f.coeffs)).sum::<f64>().sqrt();
    let grad: f64 = phi.iter().map(|f| grid.grad_norm2_sq(&f.coeffs)).sum::<f64>().sqrt();

    let mut div = grid.derivative(&phi[0].coeffs, Dir::X);
    div += &grid.derivative(&phi[1].coeffs, Dir::Y);
    div += &grid.derivative(&phi[2].coeffs, Dir::Z);
    let div_rel = relative(grid.norm2_sq(&div).sqrt(), grad);
    if div_rel > LEMMA22_HYPOTHESIS_TOL {
        return Err(Error::Hypothesis(format!("φ is not divergence free ({div_rel:.3e})")));
    }
    let mean = phi.iter().map(|f| f.coeffs[[0, 0, 0]].norm()).fold(0.0, f64::max)
        * grid.volume().sqrt();
    if relative(mean, size) > LEMMA22_HYPOTHESIS_TOL {
        return Err(Error::Hypothesis("φ does not have zero mean".into()));
    }
    let at0 = grid.at_z0(&phi[2].coeffs);
    let trace = at0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() * grid.volume().sqrt();
    if relative(trace, size) > LEMMA22_HYPOTHESIS_TOL {
        return Err(Error::Hypothesis("φ₃ does not vanish on z = 0".into()));
    }

    let phys: Vec<Array3<f64>> = phi.iter().map(|f| grid.inverse_unchecked(&f.coeffs)).collect();
    let dphi: Vec<Array3<f64>> = Dir::ALL
        .iter()
        .map(|&d| grid.inverse_unchecked(&grid.derivative(&phi_scalar.coeffs, d)))
        .collect();
    let psi_p = grid.inverse_unchecked(&psi.coeffs);
    let mut integrand = Array3::<f64>::zeros(grid.shape());
    for (f, df) in phys.iter().zip(&dphi) {
        Zip::from(&mut integrand).and(f).and(df).for_each(|s, a, b| *s += a * b);
    }
    let lhs = (integrand * psi_p).sum().abs() * cell_volume(grid);

    let grad_h = (grid.grad_norm2_sq(&phi[0].coeffs) + grid.grad_norm2_sq(&phi[1].coeffs)).sqrt();
    let lap_h = (grid.laplacian_norm2_sq(&phi[0].coeffs) + grid.laplacian_norm2_sq(&phi[1].coeffs)).sqrt();
    let grad_s = grid.grad_norm2_sq(&phi_scalar.coeffs).sqrt();
    let lap_s = grid.laplacian_norm2_sq(&phi_scalar.coeffs).sqrt();
    let npsi = grid.norm2_sq(&psi.coeffs).sqrt();
    let rhs = (grad_h * lap_h * grad_s * lap_s).sqrt() * npsi;
    ratio_of(lhs, rhs)
}
