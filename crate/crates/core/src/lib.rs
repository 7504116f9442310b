//! Wavevector-resolved polarization entanglement from two-photon radiative
//! cascades.
//!
//! The crate is organised bottom-up:
//!
//! - [`polarization`]: Jones vectors, Stokes vectors and the degree of
//!   polarization of incoherently summed fields.
//! - [`density`]: two-qubit density matrices in the `(HH, HV, VH, VV)`
//!   ordering, concurrence, Bell-state fidelity, purity and the text file
//!   format.
//! - [`dipole`]: closed-form far fields of the cascade dipoles (quantum-dot
//!   σ⁺/σ⁻ cascade and the atomic J = 0 → 1 → 0 cascade with its π path).
//! - [`farfield`]: ingestion of externally computed far-field maps, dipole
//!   basis conversion, back-focal-plane coordinates and Stokes maps.
//! - [`aperture`]: binary collection masks and solid-angle quadrature grids.
//! - [`entangle`]: aperture-filtered two-photon density matrices, angle and
//!   aperture scans, and the decomposition into the cascade mixture family.
//! - [`tomography`]: simulated projective coincidence counts with Poisson
//!   noise, linear inversion, maximum-likelihood reconstruction and
//!   bootstrap error bars.

pub mod aperture;
pub mod density;
pub mod dipole;
pub mod entangle;
pub mod farfield;
pub mod polarization;
pub mod quadrature;
pub mod tomography;

pub use num_complex::Complex64 as C64;

pub use aperture::{build_grid, mask_weight, ApertureMask, QuadratureGrid, QuadratureScheme, Resolution};
pub use density::{concurrence, fidelity_phi_plus, purity, DensityMatrix2Q, PairState};
pub use dipole::{
    dipole_gamma, dop_at, emission_intensity, pair_state_analytic, CascadeKind, CascadeModel,
    DipoleTransition, Direction, TransitionKind,
};
pub use entangle::{
    decompose_mixture, integrate_pair_density, pair_density_at, scan_annulus, scan_disc,
    Integrator, MixtureWeights, PairEmissionSource, PairIntegral, Pairing, PairWeighting,
};
pub use farfield::{bfp_map, ingest_farfield, stokes_map, BfpPoint, DipoleBasis, FarFieldMap};
pub use polarization::{dop, stokes_from_fields, PolBasis, PolVector, StokesVector};
pub use tomography::{
    error_bars, expected_counts, reconstruct_linear, reconstruct_mle, sample_counts, CountRecord,
    MeasurementSet, MleOptions, Preset,
};
