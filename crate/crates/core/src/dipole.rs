//! Closed-form far fields of cascade dipoles in vacuum.
//!
//! A ΔJ = ±1 transition radiates
//!
//! ```text
//! γ±(θ, φ) = ∓ (Π e^{±iφ} / √2) (cos θ θ̂ ± i φ̂)
//! ```
//!
//! and the π (ΔJ = 0) transition of the atomic cascade radiates the usual
//! z-dipole pattern `Π sin θ θ̂`. Amplitudes are returned un-normalized: their
//! squared norm is the emitted intensity per unit solid angle.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};

use nalgebra::Vector4;
use thiserror::Error;

use crate::density::PairState;
use crate::polarization::{dop, PolBasis, PolVector, StokesVector};
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DipoleError {
    #[error("zenith angle {0} rad is outside [0, π]")]
    ThetaOutOfRange(f64),
    #[error("direction angles must be finite")]
    NonFinite,
    #[error("direction θ = {theta_deg:.6}° lies outside the collection hemisphere")]
    NotCollectable { theta_deg: f64 },
    #[error("dipole strength must be positive (got {0})")]
    NonPositiveStrength(f64),
}

/// Emission direction: zenith angle θ from the optical axis and azimuth φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    theta: f64,
    phi: f64,
}

impl Direction {
    /// `theta ∈ [0, π]`; `phi` is wrapped into `[0, 2π)`.
    pub fn new(theta: f64, phi: f64) -> Result<Self, DipoleError> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(DipoleError::NonFinite);
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(DipoleError::ThetaOutOfRange(theta));
        }
        let mut phi = phi.rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi })
    }

    pub fn from_degrees(theta_deg: f64, phi_deg: f64) -> Result<Self, DipoleError> {
        Self::new(theta_deg.to_radians(), phi_deg.to_radians())
    }

    /// A direction on the collection hemisphere `θ ≤ π/2`.
    pub fn collection(theta: f64, phi: f64) -> Result<Self, DipoleError> {
        Self::new(theta, phi)?.ensure_collectable()
    }

    pub fn ensure_collectable(self) -> Result<Self, DipoleError> {
        if self.theta > FRAC_PI_2 + 1e-12 {
            return Err(DipoleError::NotCollectable { theta_deg: self.theta.to_degrees() });
        }
        Ok(self)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Same zenith angle, azimuth shifted by `alpha`.
    pub fn rotated(&self, alpha: f64) -> Self {
        Self::new(self.theta, self.phi + alpha).expect("rotation keeps θ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransitionKind {
    SigmaPlus,
    SigmaMinus,
    Pi,
}

/// A radiating transition with dipole matrix element Π.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleTransition {
    pub kind: TransitionKind,
    strength: f64,
}

impl DipoleTransition {
    pub fn new(kind: TransitionKind, strength: f64) -> Result<Self, DipoleError> {
        if !(strength > 0.0) || !strength.is_finite() {
            return Err(DipoleError::NonPositiveStrength(strength));
        }
        Ok(Self { kind, strength })
    }

    pub fn unit(kind: TransitionKind) -> Self {
        Self { kind, strength: 1.0 }
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }
}

/// Local (θ̂, φ̂) far-field amplitude of a transition towards `d`.
pub fn dipole_gamma(t: DipoleTransition, d: Direction) -> PolVector {
    let [a, b] = local_gamma(t.kind, t.strength, d.theta, d.phi);
    PolVector::local(a, b)
}

pub(crate) fn local_gamma(kind: TransitionKind, strength: f64, theta: f64, phi: f64) -> [C64; 2] {
    let c = theta.cos();
    let i = C64::new(0.0, 1.0);
    match kind {
        TransitionKind::SigmaPlus => {
            let pre = -C64::from_polar(strength * FRAC_1_SQRT_2, phi);
            [pre * c, pre * i]
        }
        TransitionKind::SigmaMinus => {
            let pre = C64::from_polar(strength * FRAC_1_SQRT_2, -phi);
            [pre * c, -pre * i]
        }
        TransitionKind::Pi => [C64::new(strength * theta.sin(), 0.0), C64::new(0.0, 0.0)],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CascadeKind {
    /// Quantum-dot biexciton cascade: paths σ⁺σ⁻ and σ⁻σ⁺.
    VacuumQd,
    /// Atomic J = 0 → 1 → 0 cascade: adds the ππ path.
    AtomicJ010,
}

/// Emission model of a degenerate two-photon cascade.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeModel {
    pub kind: CascadeKind,
    strength: f64,
}

const VACUUM_PATHS: [(TransitionKind, TransitionKind); 2] =
    [(TransitionKind::SigmaPlus, TransitionKind::SigmaMinus), (TransitionKind::SigmaMinus, TransitionKind::SigmaPlus)];
const ATOMIC_PATHS: [(TransitionKind, TransitionKind); 3] = [
    (TransitionKind::SigmaPlus, TransitionKind::SigmaMinus),
    (TransitionKind::Pi, TransitionKind::Pi),
    (TransitionKind::SigmaMinus, TransitionKind::SigmaPlus),
];

impl CascadeModel {
    pub fn vacuum() -> Self {
        Self { kind: CascadeKind::VacuumQd, strength: 1.0 }
    }

    pub fn atomic() -> Self {
        Self { kind: CascadeKind::AtomicJ010, strength: 1.0 }
    }

    pub fn with_strength(self, strength: f64) -> Result<Self, DipoleError> {
        DipoleTransition::new(TransitionKind::Pi, strength)?;
        Ok(Self { strength, ..self })
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    /// Transitions whose fields add incoherently in single-photon light.
    pub fn transitions(&self) -> Vec<DipoleTransition> {
        let kinds: &[TransitionKind] = match self.kind {
            CascadeKind::VacuumQd => &[TransitionKind::SigmaPlus, TransitionKind::SigmaMinus],
            CascadeKind::AtomicJ010 => &[TransitionKind::SigmaPlus, TransitionKind::SigmaMinus, TransitionKind::Pi],
        };
        kinds.iter().map(|&kind| DipoleTransition { kind, strength: self.strength }).collect()
    }

    /// Decay paths `(first photon, second photon)` of the doubly excited
    /// state, all with the amplitude [`Self::path_amplitude`].
    pub fn paths(&self) -> &'static [(TransitionKind, TransitionKind)] {
        match self.kind {
            CascadeKind::VacuumQd => &VACUUM_PATHS,
            CascadeKind::AtomicJ010 => &ATOMIC_PATHS,
        }
    }

    /// `1/√2` for two paths, `1/√3` for three.
    pub fn path_amplitude(&self) -> f64 {
        1.0 / (self.paths().len() as f64).sqrt()
    }

    /// Un-normalized two-photon amplitude `Σ_paths γ_a(k₁) ⊗ γ_b(k₂)`, each
    /// photon on its own local (θ̂, φ̂) frame.
    pub fn pair_amplitude_local(&self, d1: Direction, d2: Direction) -> PairState {
        let amp = self.path_amplitude();
        let mut out = Vector4::zeros();
        for &(a, b) in self.paths() {
            let ga = local_gamma(a, self.strength, d1.theta, d1.phi);
            let gb = local_gamma(b, self.strength, d2.theta, d2.phi);
            for i in 0..2 {
                for j in 0..2 {
                    out[2 * i + j] += ga[i] * gb[j] * amp;
                }
            }
        }
        PairState::new(out, PolBasis::LocalThetaPhi)
    }
}

/// Normalized vacuum pair state at a pair of zenith angles,
/// `(cos θ cos θ' |θθ'⟩ + |φφ'⟩)/√(1 + cos²θ cos²θ')`.
///
/// This closed form is the state for photons sharing an azimuth (φ = φ');
/// for φ ≠ φ' the full amplitude from [`CascadeModel::pair_amplitude_local`]
/// also carries cross terms proportional to `sin(φ − φ')`.
pub fn pair_state_analytic(d1: Direction, d2: Direction) -> PairState {
    let cc = d1.theta.cos() * d2.theta.cos();
    let norm = (1.0 + cc * cc).sqrt();
    let z = C64::new(0.0, 0.0);
    PairState::new(
        Vector4::new(C64::new(cc / norm, 0.0), z, z, C64::new(1.0 / norm, 0.0)),
        PolBasis::LocalThetaPhi,
    )
}

/// Incoherent Stokes sum of the model's dipoles at `d`, in the local basis.
pub fn stokes_at(model: &CascadeModel, d: Direction) -> StokesVector {
    model
        .transitions()
        .into_iter()
        .map(|t| dipole_gamma(t, d).stokes())
        .fold(StokesVector::default(), |a, b| a + b)
}

/// Degree of polarization of the summed dipole emission towards `d`.
pub fn dop_at(model: &CascadeModel, d: Direction) -> f64 {
    // Every model has a σ dipole with nonzero intensity in every direction.
    dop(&stokes_at(model, d)).unwrap_or(0.0)
}

/// Photon intensity per unit solid angle, `|γ(k)|²` averaged over the
/// model's dipoles with equal path weights: `Π²` on axis for both models,
/// `Π²(1 + cos²θ)/2` in general for the quantum-dot cascade.
pub fn emission_intensity(model: &CascadeModel, d: Direction) -> f64 {
    let ts = model.transitions();
    let n = ts.len() as f64;
    ts.into_iter().map(|t| dipole_gamma(t, d).norm_sqr()).sum::<f64>() / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::DensityMatrix2Q;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn sigma_plus_on_axis_is_circular() {
        let g = dipole_gamma(DipoleTransition::unit(TransitionKind::SigmaPlus), Direction::new(0.0, 0.0).unwrap());
        assert!(close(g.components[0], C64::new(-FRAC_1_SQRT_2, 0.0), 1e-15));
        assert!(close(g.components[1], C64::new(0.0, -FRAC_1_SQRT_2), 1e-15));
    }

    #[test]
    fn sigma_plus_at_grazing_is_azimuthal() {
        let g = dipole_gamma(DipoleTransition::unit(TransitionKind::SigmaPlus), Direction::new(FRAC_PI_2, 0.0).unwrap());
        assert!(g.components[0].norm() < 1e-15);
        assert!(close(g.components[1], C64::new(0.0, -FRAC_1_SQRT_2), 1e-15));
    }

    #[test]
    fn intensity_ratio_axis_to_grazing() {
        let t = DipoleTransition::unit(TransitionKind::SigmaMinus);
        let axis = dipole_gamma(t, Direction::new(0.0, 1.0).unwrap()).norm_sqr();
        let graze = dipole_gamma(t, Direction::new(FRAC_PI_2, 1.0).unwrap()).norm_sqr();
        assert!((axis / graze - 2.0).abs() < 1e-14);
    }

    #[test]
    fn pi_dipole_is_dark_on_axis() {
        let t = DipoleTransition::unit(TransitionKind::Pi);
        assert_eq!(dipole_gamma(t, Direction::new(0.0, 0.0).unwrap()).norm_sqr(), 0.0);
        let atomic = CascadeModel::atomic();
        for deg in [0.0, 17.0, 45.0, 90.0, 150.0] {
            let d = Direction::from_degrees(deg, 33.0).unwrap();
            assert!((emission_intensity(&atomic, d) - 2.0 / 3.0).abs() < 1e-14, "atomic emission is isotropic");
        }
    }

    #[test]
    fn analytic_pair_state_limits() {
        let on_axis = pair_state_analytic(Direction::new(0.0, 0.0).unwrap(), Direction::new(0.0, 0.0).unwrap());
        assert!((on_axis.concurrence() - 1.0).abs() < 1e-14);
        let graze = pair_state_analytic(
            Direction::new(FRAC_PI_2, 0.0).unwrap(),
            Direction::new(FRAC_PI_2, 0.0).unwrap(),
        );
        assert!(graze.concurrence() < 1e-15);
        assert!((graze.amplitudes[3].re - 1.0).abs() < 1e-15);
        let q = Direction::from_degrees(45.0, 0.0).unwrap();
        let s = pair_state_analytic(q, q);
        assert!((s.amplitudes[0].re - 0.5 / 1.25f64.sqrt()).abs() < 1e-15);
        // Oracle: Wootters on the outer product (basis labels do not matter
        // for concurrence).
        let rho = DensityMatrix2Q::from_pure(&s.amplitudes).unwrap();
        assert!((crate::density::concurrence(&rho) - 0.8).abs() < 1e-10);
    }

    #[test]
    fn general_amplitude_reduces_to_closed_form_for_equal_azimuths() {
        let model = CascadeModel::vacuum();
        for (t1, t2, phi) in [(0.2, 0.9, 0.0), (1.1, 0.4, 2.3), (0.7, 0.7, 5.0)] {
            let d1 = Direction::new(t1, phi).unwrap();
            let d2 = Direction::new(t2, phi).unwrap();
            let general = model.pair_amplitude_local(d1, d2).normalized().unwrap();
            let closed = pair_state_analytic(d1, d2);
            // Equal up to a global phase.
            let overlap = (general.amplitudes.adjoint() * closed.amplitudes)[(0, 0)].norm();
            assert!((overlap - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dop_examples() {
        let v = CascadeModel::vacuum();
        assert!(dop_at(&v, Direction::new(0.0, 0.0).unwrap()) < 1e-15);
        assert!((dop_at(&v, Direction::new(FRAC_PI_2, 0.0).unwrap()) - 1.0).abs() < 1e-15);
        assert!((dop_at(&v, Direction::from_degrees(45.0, 0.0).unwrap()) - 1.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn emission_intensity_examples() {
        let v = CascadeModel::vacuum().with_strength(2.0).unwrap();
        let i0 = emission_intensity(&v, Direction::new(0.0, 0.0).unwrap());
        let i90 = emission_intensity(&v, Direction::new(FRAC_PI_2, 0.0).unwrap());
        assert!((i0 - 4.0).abs() < 1e-14, "Π² on axis");
        assert!((i90 / i0 - 0.5).abs() < 1e-14);
    }

    #[test]
    fn direction_validation() {
        assert!(Direction::new(-0.1, 0.0).is_err());
        assert!(Direction::new(f64::NAN, 0.0).is_err());
        assert!(Direction::collection(2.0, 0.0).is_err());
        let d = Direction::new(1.0, -0.5).unwrap();
        assert!((d.phi() - (TAU - 0.5)).abs() < 1e-15);
        assert!(DipoleTransition::new(TransitionKind::Pi, 0.0).is_err());
    }
}
