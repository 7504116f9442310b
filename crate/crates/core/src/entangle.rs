//! Aperture-filtered two-photon polarization states.
//!
//! At a fixed pair of directions `(k, k')` the cascade emits the pure state
//!
//! ```text
//! A(k, k') = Σ_paths γ_a(k) ⊗ γ_b(k')
//! ```
//!
//! with both photons expressed on the lab H/V basis. Direction labels are
//! traced out when only polarization is detected, so the collected state is
//! the incoherent mixture of these pure states over all selected pairs. Two
//! weightings are offered:
//!
//! - [`PairWeighting::IntensityProduct`] (default): each pair contributes
//!   `w(k) w(k') I(k) I(k') |Â⟩⟨Â|` with `Â = A/‖A‖` and `I` the single-photon
//!   intensity of each arm.
//! - [`PairWeighting::Amplitude`]: each pair contributes
//!   `w(k) w(k') |A⟩⟨A|`, i.e. the joint emission probability itself.
//!
//! Pairs with vanishing amplitude contribute nothing.

use std::f64::consts::TAU;

use nalgebra::Matrix4;
use rayon::prelude::*;
use thiserror::Error;

use crate::aperture::{build_grid, mask_weight, ApertureError, ApertureMask, GridLayout, GridNode, QuadratureGrid, QuadratureScheme, Resolution};
use crate::density::{concurrence, fidelity_phi_plus, purity, BellState, DensityMatrix2Q, StateError};
use crate::dipole::{local_gamma, CascadeModel, Direction, TransitionKind};
use crate::farfield::{convert_dipole_basis, DipoleBasis, FarFieldError, FarFieldMap};
use crate::polarization::{dop, PolVector, StokesVector};
use crate::quadrature::{derive_seed, hermitian_from_upper, weighted_outer_upper, HermitianAccumulator, UPPER};
use crate::C64;

/// Largest entry change between the requested and the comparison
/// quadrature before a convergence warning is raised.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Default full width of annulus masks in angle scans (4°).
pub const DEFAULT_ANNULUS_WIDTH_DEG: f64 = 4.0;

/// Relative threshold `‖A‖² ≤ ε I(k) I(k')` below which a pair is degenerate.
const DEGENERATE_REL: f64 = 1e-24;

#[derive(Debug, Error)]
pub enum EntangleError {
    #[error("emission amplitude vanishes at θ₁ = {theta1_deg}°, θ₂ = {theta2_deg}°")]
    DegenerateDirection { theta1_deg: f64, theta2_deg: f64 },
    #[error("incompatible far-field maps: {0}")]
    IncompatibleMaps(String),
    #[error("incompatible quadrature grids: {0}")]
    IncompatibleGrids(String),
    #[error("selected direction pairs carry no weight")]
    EmptyIntegral,
    #[error(transparent)]
    Aperture(#[from] ApertureError),
    #[error(transparent)]
    FarField(#[from] FarFieldError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Dipole(#[from] crate::dipole::DipoleError),
}

/// Emission model supplying per-arm far fields.
#[derive(Debug, Clone, PartialEq)]
pub enum PairEmissionSource {
    AnalyticVacuum,
    AnalyticAtomic,
    /// Maps for the first and the second photon, in the circular basis.
    MapBased { first: Box<FarFieldMap>, second: Box<FarFieldMap> },
}

const VACUUM_PATHS: [(usize, usize); 2] = [(0, 1), (1, 0)];
const ATOMIC_PATHS: [(usize, usize); 3] = [(0, 1), (2, 2), (1, 0)];

/// Lab-basis fields of every dipole of one arm at one direction.
#[derive(Debug, Clone, Copy)]
struct ArmFields {
    lab: [[C64; 2]; 3],
    /// Mean `|E|²` over the arm's dipoles.
    intensity: f64,
}

impl PairEmissionSource {
    pub fn from_model(model: &CascadeModel) -> Self {
        match model.kind {
            crate::dipole::CascadeKind::VacuumQd => Self::AnalyticVacuum,
            crate::dipole::CascadeKind::AtomicJ010 => Self::AnalyticAtomic,
        }
    }

    /// Build a map-based source; linear-basis maps are converted to the
    /// circular basis.
    pub fn from_maps(first: FarFieldMap, second: FarFieldMap) -> Result<Self, EntangleError> {
        if (first.theta_lens() - second.theta_lens()).abs() > 1e-12 {
            return Err(EntangleError::IncompatibleMaps(format!(
                "lens acceptances differ ({}° vs {}°)",
                first.theta_lens().to_degrees(),
                second.theta_lens().to_degrees()
            )));
        }
        if first.n_dipoles() != second.n_dipoles() {
            return Err(EntangleError::IncompatibleMaps(format!(
                "dipole counts differ ({} vs {})",
                first.n_dipoles(),
                second.n_dipoles()
            )));
        }
        let first = convert_dipole_basis(&first, DipoleBasis::CircularPM)?;
        let second = convert_dipole_basis(&second, DipoleBasis::CircularPM)?;
        Ok(Self::MapBased { first: Box::new(first), second: Box::new(second) })
    }

    /// Same map for both photons.
    pub fn from_map(map: FarFieldMap) -> Result<Self, EntangleError> {
        Self::from_maps(map.clone(), map)
    }

    fn paths(&self) -> &'static [(usize, usize)] {
        match self {
            Self::AnalyticVacuum => &VACUUM_PATHS,
            Self::AnalyticAtomic => &ATOMIC_PATHS,
            Self::MapBased { first, .. } if first.n_dipoles() == 3 => &ATOMIC_PATHS,
            Self::MapBased { .. } => &VACUUM_PATHS,
        }
    }

    fn n_dipoles(&self) -> usize {
        match self {
            Self::AnalyticVacuum => 2,
            Self::AnalyticAtomic => 3,
            Self::MapBased { first, .. } => first.n_dipoles(),
        }
    }

    fn is_analytic(&self) -> bool {
        !matches!(self, Self::MapBased { .. })
    }

    /// Lens acceptance limiting map-based sources.
    pub fn theta_limit(&self) -> Option<f64> {
        match self {
            Self::MapBased { first, .. } => Some(first.theta_lens()),
            _ => None,
        }
    }

    /// `arm` is 0 for the first photon, 1 for the second.
    fn arm_fields(&self, arm: usize, d: Direction) -> Result<ArmFields, FarFieldError> {
        let z = [C64::new(0.0, 0.0); 2];
        let mut lab = [z; 3];
        let n = self.n_dipoles();
        match self {
            Self::MapBased { first, second } => {
                let map = if arm == 0 { first } else { second };
                for (k, slot) in lab.iter_mut().enumerate().take(n) {
                    *slot = map.lab_field_at(k, d)?;
                }
            }
            _ => {
                let kinds = [TransitionKind::SigmaPlus, TransitionKind::SigmaMinus, TransitionKind::Pi];
                for (k, slot) in lab.iter_mut().enumerate().take(n) {
                    *slot = PolVector::lab_from_local(local_gamma(kinds[k], 1.0, d.theta(), d.phi()), d.phi()).components;
                }
            }
        }
        let intensity = lab[..n].iter().map(|f| f[0].norm_sqr() + f[1].norm_sqr()).sum::<f64>() / n as f64;
        Ok(ArmFields { lab, intensity })
    }

    /// Lab-basis Stokes vector of one arm's incoherent dipole sum at `d`.
    pub fn single_photon_stokes(&self, arm: usize, d: Direction) -> Result<StokesVector, EntangleError> {
        let f = self.arm_fields(arm, d)?;
        Ok(f.lab[..self.n_dipoles()]
            .iter()
            .map(|v| PolVector::lab(v[0], v[1]).stokes())
            .fold(StokesVector::default(), |a, b| a + b))
    }
}

fn pair_amplitude(paths: &[(usize, usize)], f1: &ArmFields, f2: &ArmFields) -> [C64; 4] {
    let mut a = [C64::new(0.0, 0.0); 4];
    for &(p, q) in paths {
        let (u, v) = (&f1.lab[p], &f2.lab[q]);
        a[0] += u[0] * v[0];
        a[1] += u[0] * v[1];
        a[2] += u[1] * v[0];
        a[3] += u[1] * v[1];
    }
    let amp = 1.0 / (paths.len() as f64).sqrt();
    a.map(|z| z * amp)
}

/// Normalized pure pair state at fixed directions, in the lab basis.
pub fn pair_density_at(src: &PairEmissionSource, d1: Direction, d2: Direction) -> Result<DensityMatrix2Q, EntangleError> {
    let (f1, f2) = (src.arm_fields(0, d1)?, src.arm_fields(1, d2)?);
    let a = pair_amplitude(src.paths(), &f1, &f2);
    let n2: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    if !(n2 > DEGENERATE_REL * f1.intensity * f2.intensity) || n2 == 0.0 {
        return Err(EntangleError::DegenerateDirection {
            theta1_deg: d1.theta().to_degrees(),
            theta2_deg: d2.theta().to_degrees(),
        });
    }
    let n = n2.sqrt();
    let psi = nalgebra::Vector4::new(a[0] / n, a[1] / n, a[2] / n, a[3] / n);
    Ok(DensityMatrix2Q::from_pure(&psi)?)
}

/// How direction pairs are drawn from the two masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// Both photons range independently over their masks.
    #[default]
    Independent,
    /// Both photons share the same direction: the narrow-pinhole limit in
    /// which each collected pair is selected at a single wavevector.
    Colocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairWeighting {
    #[default]
    IntensityProduct,
    Amplitude,
}

/// Aperture-integrated pair state.
#[derive(Debug, Clone, PartialEq)]
pub struct PairIntegral {
    pub rho: DensityMatrix2Q,
    /// Per-entry Monte-Carlo standard errors (real and imaginary parts);
    /// `None` for deterministic quadrature.
    pub std_error: Option<Matrix4<C64>>,
    /// Quadrature diagnostics, e.g. failed convergence checks.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
struct NodeField {
    fields: ArmFields,
    weight: f64,
}

fn precompute(src: &PairEmissionSource, arm: usize, nodes: &[GridNode]) -> Result<Vec<NodeField>, EntangleError> {
    nodes
        .par_iter()
        .map(|n| Ok(NodeField { fields: src.arm_fields(arm, n.direction)?, weight: n.weight }))
        .collect()
}

#[inline]
fn contribution(paths: &[(usize, usize)], weighting: PairWeighting, a: &NodeField, b: &NodeField, extra: f64) -> Option<[C64; 10]> {
    let amp = pair_amplitude(paths, &a.fields, &b.fields);
    let w = a.weight * b.weight * extra;
    match weighting {
        PairWeighting::Amplitude => Some(weighted_outer_upper(&amp, w)),
        PairWeighting::IntensityProduct => {
            let ii = a.fields.intensity * b.fields.intensity;
            let n2: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
            if !(n2 > DEGENERATE_REL * ii) {
                return None;
            }
            Some(weighted_outer_upper(&amp, w * ii / n2))
        }
    }
}

fn add_upper(acc: &mut [C64; 10], x: &[C64; 10]) {
    for k in 0..10 {
        acc[k] += x[k];
    }
}

/// Deterministic reduction: rows are summed naively, row totals with
/// compensation in fixed order.
fn reduce_rows(rows: Vec<[C64; 10]>) -> [C64; 10] {
    let mut acc = HermitianAccumulator::default();
    for r in &rows {
        acc.add_upper(r);
    }
    acc.upper()
}

/// `R(α) ⊗ R(α)` acting on lab-basis pair amplitudes.
pub fn lab_rotation(alpha: f64) -> Matrix4<C64> {
    let (s, c) = alpha.sin_cos();
    let r = nalgebra::Matrix2::new(c, -s, s, c).map(|x| C64::new(x, 0.0));
    r.kronecker(&r)
}

/// `U ρ U†` with `U` from [`lab_rotation`].
pub fn rotate_density(rho: &DensityMatrix2Q, alpha: f64) -> Result<DensityMatrix2Q, StateError> {
    let u = lab_rotation(alpha);
    DensityMatrix2Q::from_unnormalized(u * rho.matrix() * u.adjoint())
}

/// Integrate on explicit grids.
///
/// With [`Pairing::Colocated`] only `grid1` is used and `mask2` (when given)
/// additionally filters its nodes. Monte-Carlo grids on both arms are
/// paired sample by sample and yield standard errors.
pub fn integrate_on_grids(
    src: &PairEmissionSource,
    grid1: &QuadratureGrid,
    grid2: &QuadratureGrid,
    mask2: Option<&ApertureMask>,
    pairing: Pairing,
    weighting: PairWeighting,
) -> Result<PairIntegral, EntangleError> {
    let paths = src.paths();
    let mc = matches!(grid1.layout, GridLayout::MonteCarlo);
    if mc != matches!(grid2.layout, GridLayout::MonteCarlo) && pairing == Pairing::Independent {
        return Err(EntangleError::IncompatibleGrids("cannot pair Monte-Carlo samples with a deterministic grid".into()));
    }
    let f1 = precompute(src, 0, &grid1.nodes)?;

    if pairing == Pairing::Colocated {
        let sel: Vec<f64> = grid1.nodes.iter().map(|n| mask2.map_or(1.0, |m| mask_weight(m, n.direction))).collect();
        let f2 = precompute(src, 1, &grid1.nodes)?;
        let unit = |f: &NodeField| NodeField { fields: f.fields, weight: 1.0 };
        let samples = |i: usize| {
            if sel[i] == 0.0 {
                None
            } else {
                contribution(paths, weighting, &f1[i], &unit(&f2[i]), 1.0)
            }
        };
        return finish(samples, f1.len(), mc);
    }

    let f2 = precompute(src, 1, &grid2.nodes)?;
    if mc {
        if f1.len() != f2.len() {
            return Err(EntangleError::IncompatibleGrids("Monte-Carlo arms need equal sample counts".into()));
        }
        return finish(|i| contribution(paths, weighting, &f1[i], &f2[i], 1.0), f1.len(), true);
    }

    if let (true, GridLayout::Rings { thetas, theta_weights, n_phi }, GridLayout::Rings { n_phi: n_phi2, .. }) =
        (src.is_analytic(), &grid1.layout, &grid2.layout)
    {
        if n_phi == n_phi2 {
            return covariant_rings(src, thetas, theta_weights, *n_phi, &f2, weighting);
        }
    }

    let rows: Vec<[C64; 10]> = f1
        .par_iter()
        .map(|a| {
            let mut acc = [C64::new(0.0, 0.0); 10];
            for b in &f2 {
                if let Some(x) = contribution(paths, weighting, a, b, 1.0) {
                    add_upper(&mut acc, &x);
                }
            }
            acc
        })
        .collect();
    normalize(reduce_rows(rows)).map(|rho| PairIntegral { rho, std_error: None, warnings: Vec::new() })
}

/// Analytic sources are covariant under rotations about the axis:
/// `A(φ + α, φ' + α) = (R(α) ⊗ R(α)) A(φ, φ')`. With complete rings on both
/// arms the double sum therefore collapses to one reference azimuth for the
/// first photon followed by a sum over the ring's rotations.
fn covariant_rings(
    src: &PairEmissionSource,
    thetas: &[f64],
    theta_weights: &[f64],
    n_phi: usize,
    f2: &[NodeField],
    weighting: PairWeighting,
) -> Result<PairIntegral, EntangleError> {
    let paths = src.paths();
    let dphi = TAU / n_phi as f64;
    let rows: Vec<[C64; 10]> = thetas
        .par_iter()
        .zip(theta_weights)
        .map(|(&t, &w)| {
            let d = Direction::new(t, 0.0).expect("ring node");
            let a = NodeField { fields: src.arm_fields(0, d).expect("analytic fields"), weight: w * dphi };
            let mut acc = [C64::new(0.0, 0.0); 10];
            for b in f2 {
                if let Some(x) = contribution(paths, weighting, &a, b, 1.0) {
                    add_upper(&mut acc, &x);
                }
            }
            acc
        })
        .collect();
    let m = hermitian_from_upper(&reduce_rows(rows));
    let mut acc = HermitianAccumulator::default();
    for k in 0..n_phi {
        let u = lab_rotation(k as f64 * dphi);
        let r = u * m * u.adjoint();
        acc.add_upper(&std::array::from_fn(|q| r[UPPER[q]]));
    }
    normalize(acc.upper()).map(|rho| PairIntegral { rho, std_error: None, warnings: Vec::new() })
}

fn normalize(upper: [C64; 10]) -> Result<DensityMatrix2Q, EntangleError> {
    let m = hermitian_from_upper(&upper);
    let tr = m.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(EntangleError::EmptyIntegral);
    }
    Ok(DensityMatrix2Q::from_unnormalized(m)?)
}

/// Sum per-sample contributions and, for Monte-Carlo samples, attach
/// delta-method standard errors of the ratio estimator `ΣX / Σ tr X`.
fn finish(sample: impl Fn(usize) -> Option<[C64; 10]> + Sync, n: usize, with_errors: bool) -> Result<PairIntegral, EntangleError> {
    const CHUNK: usize = 4096;
    let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
    let rows: Vec<[C64; 10]> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = [C64::new(0.0, 0.0); 10];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                if let Some(x) = sample(i) {
                    add_upper(&mut acc, &x);
                }
            }
            acc
        })
        .collect();
    let total = reduce_rows(rows);
    let rho = normalize(total)?;
    if !with_errors {
        return Ok(PairIntegral { rho, std_error: None, warnings: Vec::new() });
    }
    let t: f64 = [0usize, 4, 7, 9].iter().map(|&k| total[k].re).sum();
    let r: [C64; 10] = total.map(|z| z / t);
    let sq: Vec<[f64; 20]> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = [0.0; 20];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let x = sample(i).unwrap_or([C64::new(0.0, 0.0); 10]);
                let tr = x[0].re + x[4].re + x[7].re + x[9].re;
                for k in 0..10 {
                    let e = x[k] - r[k] * tr;
                    acc[2 * k] += e.re * e.re;
                    acc[2 * k + 1] += e.im * e.im;
                }
            }
            acc
        })
        .collect();
    let mut s = [crate::quadrature::CompensatedSum::default(); 20];
    for row in &sq {
        for k in 0..20 {
            s[k].add(row[k]);
        }
    }
    let scale = if n > 1 { (n as f64 / (n as f64 - 1.0)).sqrt() / t } else { 0.0 };
    let mut se = Matrix4::<C64>::zeros();
    for (k, &(i, j)) in UPPER.iter().enumerate() {
        let v = C64::new(s[2 * k].value().sqrt() * scale, s[2 * k + 1].value().sqrt() * scale);
        se[(i, j)] = v;
        se[(j, i)] = v;
    }
    Ok(PairIntegral { rho, std_error: Some(se), warnings: Vec::new() })
}

/// Integration settings shared by the scans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integrator {
    pub scheme: QuadratureScheme,
    pub resolution: Resolution,
    /// `None` selects the scan's own default: [`Pairing::Colocated`] for
    /// annulus scans, [`Pairing::Independent`] otherwise.
    pub pairing: Option<Pairing>,
    pub weighting: PairWeighting,
    /// Compare deterministic quadrature against a coarser grid and warn when
    /// an entry moves by more than [`CONVERGENCE_TOL`].
    pub check_convergence: bool,
}

impl Integrator {
    pub fn trapezoid(resolution: Resolution) -> Self {
        Self {
            scheme: QuadratureScheme::Trapezoid,
            resolution,
            pairing: None,
            weighting: PairWeighting::default(),
            check_convergence: true,
        }
    }

    pub fn monte_carlo(samples: usize, seed: u64) -> Self {
        Self {
            scheme: QuadratureScheme::MonteCarlo { samples, seed },
            resolution: Resolution { n_theta: 16, n_phi: 32 },
            pairing: None,
            weighting: PairWeighting::default(),
            check_convergence: false,
        }
    }

    pub fn with_pairing(self, pairing: Pairing) -> Self {
        Self { pairing: Some(pairing), ..self }
    }

    pub fn with_weighting(self, weighting: PairWeighting) -> Self {
        Self { weighting, ..self }
    }

    pub fn without_convergence_check(self) -> Self {
        Self { check_convergence: false, ..self }
    }

    fn grids(&self, m1: &ApertureMask, m2: &ApertureMask, res: Resolution) -> Result<(QuadratureGrid, QuadratureGrid), EntangleError> {
        let s2 = match self.scheme {
            QuadratureScheme::MonteCarlo { samples, seed } => QuadratureScheme::MonteCarlo { samples, seed: derive_seed(seed, 1) },
            s => s,
        };
        Ok((build_grid(m1, res, self.scheme)?, build_grid(m2, res, s2)?))
    }

    /// Integrate with an explicit pairing (overriding the scan default).
    pub fn integrate_with(
        &self,
        src: &PairEmissionSource,
        m1: &ApertureMask,
        m2: &ApertureMask,
        pairing: Pairing,
    ) -> Result<PairIntegral, EntangleError> {
        let run = |res: Resolution| -> Result<PairIntegral, EntangleError> {
            let (g1, g2) = self.grids(m1, m2, res)?;
            integrate_on_grids(src, &g1, &g2, Some(m2), pairing, self.weighting)
        };
        let mut out = run(self.resolution)?;
        if self.check_convergence && self.scheme == QuadratureScheme::Trapezoid {
            let mut other = self.resolution.coarsened();
            if other == self.resolution {
                other = self.resolution.refined();
            }
            let cmp = run(other)?;
            let change = out.rho.max_abs_diff(&cmp.rho);
            if change > CONVERGENCE_TOL {
                out.warnings.push(format!(
                    "quadrature not converged for masks {m1}/{m2}: entries change by {change:.3e} between {} and {other}",
                    self.resolution
                ));
            }
        }
        Ok(out)
    }
}

/// Integrate the pair state over `mask1 × mask2`.
pub fn integrate_pair_density(
    src: &PairEmissionSource,
    mask1: &ApertureMask,
    mask2: &ApertureMask,
    integrator: &Integrator,
) -> Result<PairIntegral, EntangleError> {
    integrator.integrate_with(src, mask1, mask2, integrator.pairing.unwrap_or(Pairing::Independent))
}

/// Single-photon statistics of the first photon over a mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonSummary {
    /// Weighted mean of the per-direction DOP.
    pub mean_dop: f64,
    /// Weighted mean of the per-direction intensity.
    pub mean_intensity: f64,
    /// DOP of the lab-basis Stokes vector integrated over the mask.
    pub net_dop: f64,
}

pub fn single_photon_summary(src: &PairEmissionSource, grid: &QuadratureGrid) -> Result<SinglePhotonSummary, EntangleError> {
    let mut w_sum = 0.0;
    let mut dop_sum = 0.0;
    let mut i_sum = 0.0;
    let mut net = StokesVector::default();
    for n in &grid.nodes {
        let s = src.single_photon_stokes(0, n.direction)?;
        w_sum += n.weight;
        i_sum += n.weight * s.s0 / src.n_dipoles() as f64;
        dop_sum += n.weight * dop(&s).unwrap_or(0.0);
        net += s.scaled(n.weight);
    }
    Ok(SinglePhotonSummary {
        mean_dop: dop_sum / w_sum,
        mean_intensity: i_sum / w_sum,
        net_dop: dop(&net).unwrap_or(0.0),
    })
}

/// One row of an annulus scan.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusRow {
    pub theta: f64,
    pub fidelity: f64,
    pub concurrence: f64,
    pub dop: f64,
    pub intensity: f64,
    pub purity: f64,
    pub rho: DensityMatrix2Q,
    pub std_error: Option<Matrix4<C64>>,
    pub warnings: Vec<String>,
}

/// Both photons filtered by the same annulus of full width `width` centred
/// on each θ. DOP and intensity are averages over the annulus.
pub fn scan_annulus(
    src: &PairEmissionSource,
    thetas: &[f64],
    width: f64,
    integrator: &Integrator,
) -> Result<Vec<AnnulusRow>, EntangleError> {
    let pairing = integrator.pairing.unwrap_or(Pairing::Colocated);
    thetas
        .iter()
        .map(|&theta| {
            let mask = ApertureMask::annulus(theta, width)?;
            let r = integrator.integrate_with(src, &mask, &mask, pairing)?;
            let g = build_grid(&mask, integrator.resolution, QuadratureScheme::Trapezoid)?;
            let single = single_photon_summary(src, &g)?;
            Ok(AnnulusRow {
                theta,
                fidelity: fidelity_phi_plus(&r.rho),
                concurrence: concurrence(&r.rho),
                dop: single.mean_dop,
                intensity: single.mean_intensity,
                purity: purity(&r.rho),
                rho: r.rho,
                std_error: r.std_error,
                warnings: r.warnings,
            })
        })
        .collect()
}

/// One row of an aperture scan.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscRow {
    pub theta_max: f64,
    pub fidelity: f64,
    pub concurrence: f64,
    pub purity: f64,
    pub net_dop: f64,
    pub decomposition: MixtureDecomposition,
    pub rho: DensityMatrix2Q,
    pub std_error: Option<Matrix4<C64>>,
    pub warnings: Vec<String>,
}

/// Both photons collected through the same on-axis disc of each half-angle.
pub fn scan_disc(
    src: &PairEmissionSource,
    theta_maxes: &[f64],
    integrator: &Integrator,
) -> Result<Vec<DiscRow>, EntangleError> {
    let pairing = integrator.pairing.unwrap_or(Pairing::Independent);
    theta_maxes
        .iter()
        .map(|&theta_max| {
            let mask = ApertureMask::disc(theta_max)?;
            let r = integrator.integrate_with(src, &mask, &mask, pairing)?;
            let g = build_grid(&mask, integrator.resolution, QuadratureScheme::Trapezoid)?;
            let single = single_photon_summary(src, &g)?;
            Ok(DiscRow {
                theta_max,
                fidelity: fidelity_phi_plus(&r.rho),
                concurrence: concurrence(&r.rho),
                purity: purity(&r.rho),
                net_dop: single.net_dop,
                decomposition: decompose_mixture(&r.rho),
                rho: r.rho,
                std_error: r.std_error,
                warnings: r.warnings,
            })
        })
        .collect()
}

/// Weights of the aperture mixture family
///
/// ```text
/// ρ = (1 − p₁ − p₂ − p₃) |φ⁺⟩⟨φ⁺| + p₁ (|HH⟩⟨HH| + |VV⟩⟨VV|)/2
///     + p₂ |ψ⁺⟩⟨ψ⁺| + p₃ (|HV⟩⟨HV| + |VH⟩⟨VH|)/2
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureWeights {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

/// Slack on the weight bounds.
pub const MIXTURE_TOL: f64 = 1e-9;

impl MixtureWeights {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Result<Self, StateError> {
        let w = Self { p1, p2, p3 };
        if !w.is_physical() {
            return Err(StateError::NotPositive { min_eigenvalue: p1.min(p2).min(p3).min(1.0 - p1 - p2 - p3) });
        }
        Ok(w)
    }

    pub fn is_physical(&self) -> bool {
        let all = [self.p1, self.p2, self.p3];
        all.iter().all(|p| p.is_finite() && *p >= -MIXTURE_TOL) && all.iter().sum::<f64>() <= 1.0 + MIXTURE_TOL
    }

    pub fn phi_plus_weight(&self) -> f64 {
        1.0 - self.p1 - self.p2 - self.p3
    }

    /// The family member with these weights (may be non-physical).
    pub fn family_matrix(&self) -> Matrix4<C64> {
        let c = |x: f64| C64::new(x, 0.0);
        let p0 = self.phi_plus_weight();
        let mut m = Matrix4::zeros();
        m[(0, 0)] = c(p0 / 2.0 + self.p1 / 2.0);
        m[(3, 3)] = m[(0, 0)];
        m[(0, 3)] = c(p0 / 2.0);
        m[(3, 0)] = c(p0 / 2.0);
        m[(1, 1)] = c(self.p2 / 2.0 + self.p3 / 2.0);
        m[(2, 2)] = m[(1, 1)];
        m[(1, 2)] = c(self.p2 / 2.0);
        m[(2, 1)] = c(self.p2 / 2.0);
        m
    }

    pub fn synthesize(&self) -> Result<DensityMatrix2Q, StateError> {
        DensityMatrix2Q::new(self.family_matrix())
    }
}

/// Projection of a density matrix onto the mixture family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureDecomposition {
    /// Signed weights; `p₂` keeps its sign as a convention diagnostic.
    pub weights: MixtureWeights,
    /// Frobenius distance between ρ and the reconstructed family member.
    pub residual: f64,
    /// Whether the weights lie within the physical simplex.
    pub in_family: bool,
}

/// Closed-form projection onto the mixture family in the
/// `(HH, HV, VH, VV)` ordering.
pub fn decompose_mixture(rho: &DensityMatrix2Q) -> MixtureDecomposition {
    let m = rho.matrix();
    let pop = m[(1, 1)].re + m[(2, 2)].re;
    let p2 = 2.0 * m[(1, 2)].re;
    let p3 = pop - p2;
    let p1 = 1.0 - 2.0 * m[(0, 3)].re - pop;
    let weights = MixtureWeights { p1, p2, p3 };
    let residual = (m - weights.family_matrix()).norm();
    MixtureDecomposition { weights, residual, in_family: weights.is_physical() }
}

/// The family members used as basis states.
pub fn family_basis() -> [(&'static str, DensityMatrix2Q); 4] {
    let mix = |a: usize, b: usize| {
        DensityMatrix2Q::mixture(&[(0.5, &DensityMatrix2Q::basis_projector(a)), (0.5, &DensityMatrix2Q::basis_projector(b))])
            .expect("basis mixture")
    };
    [
        ("phi_plus", DensityMatrix2Q::bell(BellState::PhiPlus)),
        ("hh_vv_mixture", mix(0, 3)),
        ("psi_plus", DensityMatrix2Q::bell(BellState::PsiPlus)),
        ("hv_vh_mixture", mix(1, 2)),
    ]
}
