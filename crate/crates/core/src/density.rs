//! Two-photon polarization density matrices.
//!
//! Every matrix uses the fixed product-basis ordering `(HH, HV, VH, VV)`
//! (first photon, second photon). A [`DensityMatrix2Q`] can only be built
//! through validating constructors, so every value in circulation is
//! Hermitian, has unit trace and is positive semidefinite within the
//! admission tolerances below.

use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

use crate::polarization::{PolBasis, PolVector};
use crate::C64;

/// Largest admitted entry of `|ρ − ρ†|`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Largest admitted `|Tr ρ − 1|`.
pub const TRACE_TOL: f64 = 1e-9;
/// Smallest admitted eigenvalue.
pub const PSD_TOL: f64 = -1e-9;

pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("density matrix has non-finite entries")]
    NonFinite,
    #[error("density matrix is not Hermitian: max |rho - rho^dagger| = {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("density matrix trace is {trace} (must be 1 within {TRACE_TOL:e})")]
    TraceNotOne { trace: C64 },
    #[error("density matrix is not positive semidefinite: min eigenvalue {min_eigenvalue:.3e}")]
    NotPositive { min_eigenvalue: f64 },
    #[error("state vector has zero norm")]
    ZeroVector,
    #[error("pair state must be in the LabHV basis to become a density matrix (got {0:?})")]
    NotLab(PolBasis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub fn vector(self) -> Vector4<C64> {
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = C64::new(0.0, 0.0);
        match self {
            BellState::PhiPlus => Vector4::new(h, z, z, h),
            BellState::PhiMinus => Vector4::new(h, z, z, -h),
            BellState::PsiPlus => Vector4::new(z, h, h, z),
            BellState::PsiMinus => Vector4::new(z, h, -h, z),
        }
    }
}

/// Pure two-photon polarization state, possibly un-normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub amplitudes: Vector4<C64>,
    pub basis: PolBasis,
}

impl PairState {
    pub fn new(amplitudes: Vector4<C64>, basis: PolBasis) -> Self {
        Self { amplitudes, basis }
    }

    /// `a ⊗ b` for two single-photon vectors sharing a basis tag.
    pub fn product(a: &PolVector, b: &PolVector) -> Self {
        let [a0, a1] = a.components;
        let [b0, b1] = b.components;
        Self::new(Vector4::new(a0 * b0, a0 * b1, a1 * b0, a1 * b1), a.basis)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self, StateError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(StateError::ZeroVector);
        }
        Ok(Self::new(self.amplitudes.unscale(n), self.basis))
    }

    /// Map both photons from their local (θ̂, φ̂) frames into the lab H/V
    /// basis; `phi1`/`phi2` are the emission azimuths.
    pub fn to_lab(&self, phi1: f64, phi2: f64) -> Self {
        if self.basis == PolBasis::LabHV {
            return *self;
        }
        let r = |phi: f64| {
            let (s, c) = phi.sin_cos();
            [[c, -s], [s, c]]
        };
        let (r1, r2) = (r(phi1), r(phi2));
        let mut out = Vector4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..2 {
                    for l in 0..2 {
                        acc += self.amplitudes[2 * k + l] * (r1[i][k] * r2[j][l]);
                    }
                }
                out[2 * i + j] = acc;
            }
        }
        Self::new(out, PolBasis::LabHV)
    }

    /// Pure-state concurrence `|⟨ψ|σy⊗σy|ψ*⟩|/⟨ψ|ψ⟩ = 2|ad − bc|/‖ψ‖²`.
    pub fn concurrence(&self) -> f64 {
        let a = &self.amplitudes;
        2.0 * (a[0] * a[3] - a[1] * a[2]).norm() / a.norm_squared()
    }

    pub fn density(&self) -> Result<DensityMatrix2Q, StateError> {
        if self.basis != PolBasis::LabHV {
            return Err(StateError::NotLab(self.basis));
        }
        DensityMatrix2Q::from_pure(&self.amplitudes)
    }
}

/// 4×4 Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix2Q {
    m: Matrix4<C64>,
}

impl DensityMatrix2Q {
    /// Validate a matrix against all three invariants.
    pub fn new(m: Matrix4<C64>) -> Result<Self, StateError> {
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(StateError::NonFinite);
        }
        let deviation = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if deviation > HERMITIAN_TOL {
            return Err(StateError::NotHermitian { deviation });
        }
        let trace = m.trace();
        if (trace - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(StateError::TraceNotOne { trace });
        }
        let min_eigenvalue = hermitian_eigenvalues(&m).into_iter().fold(f64::INFINITY, f64::min);
        if min_eigenvalue < PSD_TOL {
            return Err(StateError::NotPositive { min_eigenvalue });
        }
        Ok(Self { m })
    }

    /// Hermitize and trace-normalize an accumulated positive matrix, then
    /// validate it.
    pub fn from_unnormalized(m: Matrix4<C64>) -> Result<Self, StateError> {
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let tr = h.trace().re;
        if !(tr > 0.0) || !tr.is_finite() {
            return Err(StateError::TraceNotOne { trace: h.trace() });
        }
        Self::new(h.unscale(tr))
    }

    /// `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn from_pure(psi: &Vector4<C64>) -> Result<Self, StateError> {
        let n2 = psi.norm_squared();
        if !(n2 > 0.0) || !n2.is_finite() {
            return Err(StateError::ZeroVector);
        }
        Self::new((psi * psi.adjoint()).unscale(n2))
    }

    pub fn bell(state: BellState) -> Self {
        Self::from_pure(&state.vector()).expect("Bell states are normalized")
    }

    pub fn phi_plus() -> Self {
        Self::bell(BellState::PhiPlus)
    }

    pub fn maximally_mixed() -> Self {
        Self { m: Matrix4::identity().unscale(4.0) }
    }

    /// `|i⟩⟨i|` for a product-basis index in `(HH, HV, VH, VV)`.
    pub fn basis_projector(index: usize) -> Self {
        let mut m = Matrix4::zeros();
        m[(index, index)] = C64::new(1.0, 0.0);
        Self { m }
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights must be nonnegative and sum to 1.
    pub fn mixture(parts: &[(f64, &DensityMatrix2Q)]) -> Result<Self, StateError> {
        let m = parts.iter().fold(Matrix4::zeros(), |acc, (w, rho)| acc + rho.m.scale(*w));
        Self::new(m)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.m
    }

    pub fn into_matrix(self) -> Matrix4<C64> {
        self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> C64 {
        self.m[(row, col)]
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let mut ev = hermitian_eigenvalues(&self.m);
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized state vector.
    pub fn expectation(&self, psi: &Vector4<C64>) -> f64 {
        (psi.adjoint() * self.m * psi)[(0, 0)].re
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.m - other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_distance(&self, other: &Self) -> f64 {
        (self.m - other.m).norm()
    }
}

impl fmt::Display for DensityMatrix2Q {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..4 {
            for j in 0..4 {
                let z = self.m[(i, j)];
                write!(f, "{:>9.5}{:+.5}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub(crate) fn hermitian_eigenvalues(m: &Matrix4<C64>) -> [f64; 4] {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let ev = h.symmetric_eigenvalues();
    [ev[0], ev[1], ev[2], ev[3]]
}

/// Factor `W` with `W W† = h` for a Hermitian PSD `h`; eigenvalues within
/// numerical noise below zero are clipped.
fn hermitian_factor(m: &Matrix4<C64>) -> Matrix4<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut w = eig.eigenvectors;
    for j in 0..4 {
        let s = C64::new(eig.eigenvalues[j].max(0.0).sqrt(), 0.0);
        for i in 0..4 {
            w[(i, j)] *= s;
        }
    }
    w
}

/// `σy ⊗ σy` in the `(HH, HV, VH, VV)` ordering.
fn sigma_yy() -> Matrix4<C64> {
    let one = C64::new(1.0, 0.0);
    let mut m = Matrix4::zeros();
    m[(0, 3)] = -one;
    m[(1, 2)] = one;
    m[(2, 1)] = one;
    m[(3, 0)] = -one;
    m
}

/// Wootters concurrence.
///
/// The λᵢ (square roots of the eigenvalues of `ρ ρ̃`, with
/// `ρ̃ = (σy⊗σy) ρ* (σy⊗σy)`) equal the singular values of `Wᵀ (σy⊗σy) W`
/// for any factor `ρ = W W†`. Working with singular values avoids the loss
/// of half the significant digits that square roots of near-zero
/// eigenvalues would cause for nearly pure states.
pub fn concurrence(rho: &DensityMatrix2Q) -> f64 {
    let w = hermitian_factor(&rho.m);
    let tau = w.transpose() * sigma_yy() * w;
    let mut lambdas: Vec<f64> = tau.singular_values().iter().copied().collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).clamp(0.0, 1.0)
}

/// Overlap `⟨φ⁺|ρ|φ⁺⟩` with `φ⁺ = (|HH⟩ + |VV⟩)/√2`.
pub fn fidelity_phi_plus(rho: &DensityMatrix2Q) -> f64 {
    let m = &rho.m;
    (0.5 * (m[(0, 0)] + m[(3, 3)] + m[(0, 3)] + m[(3, 0)]).re).clamp(0.0, 1.0)
}

/// `Tr ρ²`.
pub fn purity(rho: &DensityMatrix2Q) -> f64 {
    rho.m.iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Error)]
pub enum DensityFileError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("expected 4 matrix rows, found {0}")]
    RowCount(usize),
    #[error("matrix is not a valid density matrix: {0}")]
    Invalid(#[from] StateError),
}

/// Write the four-header-line text format:
///
/// ```text
/// # density-matrix v1
/// # basis: HH HV VH VV
/// # columns: Re(rho_i1) Im(rho_i1) ... Re(rho_i4) Im(rho_i4)
/// # source: <free text>
/// <4 rows of 8 numbers>
/// ```
pub fn write_density_matrix<W: Write>(
    mut w: W,
    rho: &DensityMatrix2Q,
    source: &str,
) -> std::io::Result<()> {
    writeln!(w, "# density-matrix v1")?;
    writeln!(w, "# basis: HH HV VH VV")?;
    writeln!(w, "# columns: Re(rho_i1) Im(rho_i1) Re(rho_i2) Im(rho_i2) Re(rho_i3) Im(rho_i3) Re(rho_i4) Im(rho_i4)")?;
    writeln!(w, "# source: {}", source.replace('\n', " "))?;
    for i in 0..4 {
        let row: Vec<String> = (0..4)
            .flat_map(|j| {
                let z = rho.m[(i, j)];
                [format!("{:.17e}", z.re), format!("{:.17e}", z.im)]
            })
            .collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Parse the density-matrix text format. Comment lines start with `#`.
pub fn read_density_matrix<R: BufRead>(r: R) -> Result<DensityMatrix2Q, DensityFileError> {
    let mut m = Matrix4::<C64>::zeros();
    let mut rows = 0usize;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        if rows == 4 {
            return Err(DensityFileError::Parse { line: lineno, message: "unexpected fifth matrix row".into() });
        }
        let values: Vec<f64> = trimmed
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|_| DensityFileError::Parse {
                    line: lineno,
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != 8 {
            return Err(DensityFileError::Parse {
                line: lineno,
                message: format!("expected 8 columns, found {}", values.len()),
            });
        }
        for j in 0..4 {
            m[(rows, j)] = C64::new(values[2 * j], values[2 * j + 1]);
        }
        rows += 1;
    }
    if rows != 4 {
        return Err(DensityFileError::RowCount(rows));
    }
    Ok(DensityMatrix2Q::new(m)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn werner(p: f64) -> DensityMatrix2Q {
        DensityMatrix2Q::mixture(&[(p, &DensityMatrix2Q::phi_plus()), (1.0 - p, &DensityMatrix2Q::maximally_mixed())])
            .unwrap()
    }

    #[test]
    fn concurrence_examples() {
        assert!((concurrence(&DensityMatrix2Q::phi_plus()) - 1.0).abs() < 1e-12);
        assert!(concurrence(&DensityMatrix2Q::maximally_mixed()).abs() < 1e-12);
        // Werner closed form max(0, (3p − 1)/2).
        assert!((concurrence(&werner(0.5)) - 0.25).abs() < 1e-12);
        assert!(concurrence(&werner(0.3)).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        assert!((fidelity_phi_plus(&DensityMatrix2Q::phi_plus()) - 1.0).abs() < 1e-15);
        assert!((fidelity_phi_plus(&DensityMatrix2Q::maximally_mixed()) - 0.25).abs() < 1e-15);
        assert!(fidelity_phi_plus(&DensityMatrix2Q::bell(BellState::PsiPlus)).abs() < 1e-15);
    }

    #[test]
    fn purity_examples() {
        assert!((purity(&DensityMatrix2Q::phi_plus()) - 1.0).abs() < 1e-15);
        assert!((purity(&DensityMatrix2Q::maximally_mixed()) - 0.25).abs() < 1e-15);
        let hh = DensityMatrix2Q::basis_projector(0);
        let vv = DensityMatrix2Q::basis_projector(3);
        let mix = DensityMatrix2Q::mixture(&[(0.5, &hh), (0.5, &vv)]).unwrap();
        assert!((purity(&mix) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_names_the_violated_invariant() {
        let mut m = Matrix4::<C64>::identity().unscale(4.0);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(matches!(DensityMatrix2Q::new(m), Err(StateError::NotHermitian { .. })));

        let m = Matrix4::<C64>::identity().unscale(2.0);
        assert!(matches!(DensityMatrix2Q::new(m), Err(StateError::TraceNotOne { .. })));

        let mut m = Matrix4::<C64>::zeros();
        m[(0, 0)] = C64::new(1.2, 0.0);
        m[(1, 1)] = C64::new(-0.2, 0.0);
        assert!(matches!(DensityMatrix2Q::new(m), Err(StateError::NotPositive { .. })));

        let mut m = Matrix4::<C64>::identity().unscale(4.0);
        m[(2, 2)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(DensityMatrix2Q::new(m), Err(StateError::NonFinite)));
    }

    #[test]
    fn pure_state_concurrence_matches_wootters() {
        // α|HH⟩ + β|VV⟩ has concurrence 2|αβ|.
        let (a, b) = (0.6, 0.8);
        let psi = Vector4::new(C64::new(a, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, b));
        let rho = DensityMatrix2Q::from_pure(&psi).unwrap();
        assert!((concurrence(&rho) - 2.0 * a * b).abs() < 1e-10);
        assert!((PairState::new(psi, PolBasis::LabHV).concurrence() - 2.0 * a * b).abs() < 1e-15);
    }

    #[test]
    fn file_round_trip() {
        let rho = werner(0.7);
        let mut buf = Vec::new();
        write_density_matrix(&mut buf, &rho, "werner p=0.7").unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with('#')).count(), 4);
        let back = read_density_matrix(buf.as_slice()).unwrap();
        assert_eq!(back, rho);
    }

    #[test]
    fn file_errors() {
        let bad = "# density-matrix v1\n1 0 0 0 0 0 0\n";
        assert!(matches!(read_density_matrix(bad.as_bytes()), Err(DensityFileError::Parse { line: 2, .. })));
        let short = "1 0 0 0 0 0 0 0\n";
        assert!(matches!(read_density_matrix(short.as_bytes()), Err(DensityFileError::RowCount(1))));
    }
}
