//! Single-photon polarization: Jones vectors, Stokes vectors and the degree of
//! polarization.
//!
//! Two bases are in use. `LocalThetaPhi` expresses a far-field amplitude on the
//! spherical unit vectors (θ̂, φ̂) of its own emission direction. `LabHV`
//! expresses it on the horizontal/vertical basis of the collimated beam behind
//! the objective. The mapping between them models an aplanatic collimating
//! lens: θ̂ goes to the radial unit vector of the back focal plane, φ̂ to the
//! azimuthal one, so
//!
//! ```text
//! E_H = cos φ · E_θ − sin φ · E_φ
//! E_V = sin φ · E_θ + cos φ · E_φ
//! ```
//!
//! Stokes parameters use the ordered components `(E₁, E₂)` of whichever basis
//! the samples share: `s3 = 2 Im(E₁* E₂)`, so right-circular light in `LabHV`
//! is `(1, i)/√2` up to a global phase.

use std::ops::{Add, AddAssign};

use thiserror::Error;

use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizationError {
    #[error("cannot normalize a zero-amplitude polarization vector")]
    ZeroAmplitude,
    #[error("field samples mix polarization bases ({first:?} and {other:?})")]
    MixedBasis { first: PolBasis, other: PolBasis },
    #[error("local-to-lab mapping expects a LocalThetaPhi vector, got {0:?}")]
    NotLocal(PolBasis),
    #[error("degree of polarization needs s0 > 0 (got {0})")]
    NonPositiveIntensity(f64),
}

/// Basis tag carried by every [`PolVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolBasis {
    LocalThetaPhi,
    LabHV,
}

/// Complex two-component Jones vector.
///
/// Amplitudes are not normalized unless built through [`PolVector::normalized`];
/// the squared norm of a far-field amplitude is the emitted intensity in that
/// direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolVector {
    pub components: [C64; 2],
    pub basis: PolBasis,
}

impl PolVector {
    pub const fn new(first: C64, second: C64, basis: PolBasis) -> Self {
        Self { components: [first, second], basis }
    }

    pub const fn lab(h: C64, v: C64) -> Self {
        Self::new(h, v, PolBasis::LabHV)
    }

    pub const fn local(e_theta: C64, e_phi: C64) -> Self {
        Self::new(e_theta, e_phi, PolBasis::LocalThetaPhi)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components[0].norm_sqr() + self.components[1].norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Unit-norm copy of the vector.
    pub fn normalized(&self) -> Result<Self, PolarizationError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(PolarizationError::ZeroAmplitude);
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.components[0] * k, self.components[1] * k, self.basis)
    }

    pub fn scale_complex(&self, k: C64) -> Self {
        Self::new(self.components[0] * k, self.components[1] * k, self.basis)
    }

    /// Hermitian inner product `⟨self|other⟩`, ignoring basis tags.
    pub fn inner(&self, other: &Self) -> C64 {
        self.components[0].conj() * other.components[0]
            + self.components[1].conj() * other.components[1]
    }

    /// Map a local (θ̂, φ̂) vector at azimuth `phi` onto the lab H/V basis.
    pub fn to_lab(&self, phi: f64) -> Result<Self, PolarizationError> {
        match self.basis {
            PolBasis::LocalThetaPhi => Ok(Self::lab_from_local(self.components, phi)),
            other => Err(PolarizationError::NotLocal(other)),
        }
    }

    pub(crate) fn lab_from_local(local: [C64; 2], phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        let [et, ep] = local;
        Self::lab(et * c - ep * s, et * s + ep * c)
    }

    /// Apply a 2×2 matrix (row-major) to the components, keeping the tag.
    pub fn transformed(&self, u: &[[C64; 2]; 2]) -> Self {
        let [a, b] = self.components;
        Self::new(u[0][0] * a + u[0][1] * b, u[1][0] * a + u[1][1] * b, self.basis)
    }

    /// Stokes vector of this single fully polarized field.
    pub fn stokes(&self) -> StokesVector {
        let [e1, e2] = self.components;
        let i1 = e1.norm_sqr();
        let i2 = e2.norm_sqr();
        let cross = e1.conj() * e2;
        StokesVector::new(i1 + i2, i1 - i2, 2.0 * cross.re, 2.0 * cross.im)
    }
}

/// Stokes parameters in arbitrary intensity units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StokesVector {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
}

impl StokesVector {
    pub const fn new(s0: f64, s1: f64, s2: f64, s3: f64) -> Self {
        Self { s0, s1, s2, s3 }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.s0 * k, self.s1 * k, self.s2 * k, self.s3 * k)
    }

    pub fn polarized_intensity(&self) -> f64 {
        (self.s1 * self.s1 + self.s2 * self.s2 + self.s3 * self.s3).sqrt()
    }

    /// `s1² + s2² + s3² ≤ s0²` within a relative tolerance.
    pub fn is_physical(&self, rel_tol: f64) -> bool {
        self.s0 >= 0.0 && self.polarized_intensity() <= self.s0 * (1.0 + rel_tol) + f64::MIN_POSITIVE
    }
}

impl Add for StokesVector {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self::new(self.s0 + rhs.s0, self.s1 + rhs.s1, self.s2 + rhs.s2, self.s3 + rhs.s3)
    }
}

impl AddAssign for StokesVector {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// Incoherent Stokes sum of weighted field samples.
///
/// Each sample contributes `weight` times the Stokes vector of its field;
/// amplitudes of different samples are never added.
pub fn stokes_from_fields(samples: &[(PolVector, f64)]) -> Result<StokesVector, PolarizationError> {
    let Some((first, _)) = samples.first() else {
        return Ok(StokesVector::default());
    };
    let mut total = StokesVector::default();
    for (field, weight) in samples {
        if field.basis != first.basis {
            return Err(PolarizationError::MixedBasis { first: first.basis, other: field.basis });
        }
        total += field.stokes().scaled(*weight);
    }
    Ok(total)
}

/// Degree of polarization `√(s1² + s2² + s3²)/s0`, clamped to `[0, 1]`.
pub fn dop(s: &StokesVector) -> Result<f64, PolarizationError> {
    if !(s.s0 > 0.0) {
        return Err(PolarizationError::NonPositiveIntensity(s.s0));
    }
    Ok((s.polarized_intensity() / s.s0).min(1.0))
}
