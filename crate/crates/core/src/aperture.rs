//! Binary collection masks over the emission hemisphere and the solid-angle
//! quadrature grids that integrate over them.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dipole::Direction;
use crate::farfield::{bfp_inverse, bfp_map, BfpPoint, APERTURE_EDGE_TOL};
use crate::quadrature::{corrected_trapezoid, uniform_nodes};

/// Angular slack applied when testing whether a direction sits on a mask
/// edge; edges belong to the mask.
pub const MASK_EDGE_TOL: f64 = 1e-10;

pub const MIN_THETA_NODES: usize = 16;
pub const MIN_PHI_NODES: usize = 32;
pub const MIN_MC_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ApertureError {
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("cannot parse mask spec `{spec}`: {message}")]
    Parse { spec: String, message: String },
    #[error("invalid resolution: {0}")]
    Resolution(String),
    #[error("Monte-Carlo integration needs at least {MIN_MC_SAMPLES} samples (got {0})")]
    TooFewSamples(usize),
    #[error("mask selects no directions")]
    EmptySelection,
}

/// Hard-edged collection region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApertureMask {
    /// `θ ≤ theta_max`.
    Disc { theta_max: f64 },
    /// `|θ − center| ≤ width/2`.
    Annulus { center: f64, width: f64 },
    /// A disc of BFP radius `radius` around `center`, under a lens of
    /// acceptance `lens_theta_max`.
    OffsetPinhole { center: BfpPoint, radius: f64, lens_theta_max: f64 },
}

impl ApertureMask {
    pub fn disc(theta_max: f64) -> Result<Self, ApertureError> {
        if !(theta_max > 0.0) || theta_max > FRAC_PI_2 + 1e-12 {
            return Err(ApertureError::InvalidMask(format!(
                "disc half-angle {}° outside (0°, 90°]",
                theta_max.to_degrees()
            )));
        }
        Ok(Self::Disc { theta_max: theta_max.min(FRAC_PI_2) })
    }

    pub fn disc_degrees(theta_max_deg: f64) -> Result<Self, ApertureError> {
        Self::disc(theta_max_deg.to_radians())
    }

    pub fn annulus(center: f64, width: f64) -> Result<Self, ApertureError> {
        if !(0.0..=FRAC_PI_2 + 1e-12).contains(&center) {
            return Err(ApertureError::InvalidMask(format!(
                "annulus center {}° outside [0°, 90°]",
                center.to_degrees()
            )));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(ApertureError::InvalidMask(format!("annulus width must be positive (got {width})")));
        }
        Ok(Self::Annulus { center: center.min(FRAC_PI_2), width })
    }

    pub fn annulus_degrees(center_deg: f64, width_deg: f64) -> Result<Self, ApertureError> {
        Self::annulus(center_deg.to_radians(), width_deg.to_radians())
    }

    pub fn pinhole(center: BfpPoint, radius: f64, lens_theta_max: f64) -> Result<Self, ApertureError> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(ApertureError::InvalidMask(format!("pinhole radius must be positive (got {radius})")));
        }
        if !(lens_theta_max > 0.0) || lens_theta_max > FRAC_PI_2 + 1e-12 {
            return Err(ApertureError::InvalidMask(format!(
                "lens acceptance {}° outside (0°, 90°]",
                lens_theta_max.to_degrees()
            )));
        }
        if center.radius() + radius > 1.0 + APERTURE_EDGE_TOL {
            return Err(ApertureError::InvalidMask(format!(
                "pinhole at radius {} with size {radius} extends beyond the objective aperture",
                center.radius()
            )));
        }
        Ok(Self::OffsetPinhole { center, radius, lens_theta_max: lens_theta_max.min(FRAC_PI_2) })
    }

    /// Parse `disc:<θmax°>`, `annulus:<θ°>:<Δθ°>` or `pinhole:<x>:<y>:<r>`.
    pub fn parse(spec: &str, lens_theta_max: f64) -> Result<Self, ApertureError> {
        let err = |message: &str| ApertureError::Parse { spec: spec.to_string(), message: message.to_string() };
        let mut parts = spec.trim().split(':');
        let kind = parts.next().unwrap_or_default().to_ascii_lowercase();
        let nums: Vec<f64> = parts
            .map(|p| p.trim().parse::<f64>().map_err(|_| err(&format!("`{p}` is not a number"))))
            .collect::<Result<_, _>>()?;
        let arity = |n: usize| if nums.len() == n { Ok(()) } else { Err(err(&format!("{kind} takes {n} parameter(s)"))) };
        match kind.as_str() {
            "disc" => {
                arity(1)?;
                Self::disc_degrees(nums[0])
            }
            "annulus" => {
                arity(2)?;
                Self::annulus_degrees(nums[0], nums[1])
            }
            "pinhole" => {
                arity(3)?;
                let c = BfpPoint::new(nums[0], nums[1]).map_err(|e| err(&e.to_string()))?;
                Self::pinhole(c, nums[2], lens_theta_max)
            }
            _ => Err(err("expected disc, annulus or pinhole")),
        }
    }

    /// The same mask rotated by `alpha` about the optical axis.
    pub fn rotated(&self, alpha: f64) -> Self {
        match *self {
            Self::OffsetPinhole { center, radius, lens_theta_max } => {
                Self::OffsetPinhole { center: center.rotated(alpha), radius, lens_theta_max }
            }
            other => other,
        }
    }

    /// Masks selecting whole rings of constant θ.
    pub fn is_azimuthally_symmetric(&self) -> bool {
        !matches!(self, Self::OffsetPinhole { .. })
    }

    /// Smallest closed θ interval containing the mask.
    pub fn theta_support(&self) -> (f64, f64) {
        match *self {
            Self::Disc { theta_max } => (0.0, theta_max),
            Self::Annulus { center, width } => ((center - width / 2.0).max(0.0), (center + width / 2.0).min(FRAC_PI_2)),
            Self::OffsetPinhole { center, radius, lens_theta_max } => {
                let s = lens_theta_max.sin();
                let lo = (center.radius() - radius).max(0.0);
                let hi = (center.radius() + radius).min(1.0);
                ((lo * s).asin(), (hi * s).asin())
            }
        }
    }
}

impl fmt::Display for ApertureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Disc { theta_max } => write!(f, "disc:{}", theta_max.to_degrees()),
            Self::Annulus { center, width } => write!(f, "annulus:{}:{}", center.to_degrees(), width.to_degrees()),
            Self::OffsetPinhole { center, radius, .. } => write!(f, "pinhole:{}:{}:{}", center.x, center.y, radius),
        }
    }
}

/// Membership indicator of `d` in `m` (1 inside or on the edge, else 0).
pub fn mask_weight(m: &ApertureMask, d: Direction) -> f64 {
    let inside = match *m {
        ApertureMask::Disc { theta_max } => d.theta() <= theta_max + MASK_EDGE_TOL,
        ApertureMask::Annulus { center, width } => (d.theta() - center).abs() <= width / 2.0 + MASK_EDGE_TOL,
        ApertureMask::OffsetPinhole { center, radius, lens_theta_max } => match bfp_map(d, lens_theta_max) {
            Ok(p) => (p.x - center.x).hypot(p.y - center.y) <= radius + MASK_EDGE_TOL,
            Err(_) => false,
        },
    };
    if inside {
        1.0
    } else {
        0.0
    }
}

/// Number of quadrature nodes along the two grid axes.
///
/// For ring grids these are θ and φ; for pinholes they are the radial and
/// angular coordinates around the pinhole center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resolution {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Resolution {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self, ApertureError> {
        if n_theta < MIN_THETA_NODES || n_phi < MIN_PHI_NODES {
            return Err(ApertureError::Resolution(format!(
                "{n_theta}×{n_phi} is below the minimum {MIN_THETA_NODES}×{MIN_PHI_NODES}"
            )));
        }
        Ok(Self { n_theta, n_phi })
    }

    /// Parse `<nθ>x<nφ>`.
    pub fn parse(s: &str) -> Result<Self, ApertureError> {
        let bad = || ApertureError::Resolution(format!("`{s}` is not of the form <nθ>x<nφ>"));
        let (a, b) = s.trim().split_once(['x', 'X', '×']).ok_or_else(bad)?;
        Self::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }

    /// Roughly half the nodes per axis, never below the minimum.
    pub fn coarsened(&self) -> Self {
        Self {
            n_theta: (self.n_theta.div_ceil(2)).max(MIN_THETA_NODES),
            n_phi: (self.n_phi / 2).max(MIN_PHI_NODES),
        }
    }

    pub fn refined(&self) -> Self {
        Self { n_theta: 2 * self.n_theta - 1, n_phi: 2 * self.n_phi }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_theta, self.n_phi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// End-corrected trapezoid rule in θ (or pinhole radius) and the uniform
    /// periodic rule in φ.
    Trapezoid,
    MonteCarlo { samples: usize, seed: u64 },
}

/// A quadrature node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub direction: Direction,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridLayout {
    /// Complete rings `θ_i × {2πj/n_phi}`; nodes are θ-major and each ring
    /// node carries `theta_weights[i] · 2π/n_phi`.
    Rings { thetas: Vec<f64>, theta_weights: Vec<f64>, n_phi: usize },
    /// Independent random samples with their own weights.
    MonteCarlo,
    /// Deterministic nodes without ring structure.
    Scattered,
}

/// Solid-angle quadrature over a mask: `Σ w f(k) ≈ ∫_mask f dΩ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<GridNode>,
    pub layout: GridLayout,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        let mut s = crate::quadrature::CompensatedSum::default();
        for n in &self.nodes {
            s.add(n.weight);
        }
        s.value()
    }
}

/// Quadrature grid restricted to the support of `m`.
pub fn build_grid(m: &ApertureMask, resolution: Resolution, scheme: QuadratureScheme) -> Result<QuadratureGrid, ApertureError> {
    let grid = match scheme {
        QuadratureScheme::Trapezoid => {
            Resolution::new(resolution.n_theta, resolution.n_phi)?;
            match *m {
                ApertureMask::OffsetPinhole { center, radius, lens_theta_max } => {
                    pinhole_grid(center, radius, lens_theta_max, resolution)
                }
                _ => ring_grid(m.theta_support(), resolution),
            }
        }
        QuadratureScheme::MonteCarlo { samples, seed } => {
            if samples < MIN_MC_SAMPLES {
                return Err(ApertureError::TooFewSamples(samples));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match *m {
                ApertureMask::OffsetPinhole { center, radius, lens_theta_max } => {
                    pinhole_samples(center, radius, lens_theta_max, samples, &mut rng)
                }
                _ => cap_samples(m.theta_support(), samples, &mut rng),
            }
        }
    };
    if grid.nodes.is_empty() || !(grid.total_weight() > 0.0) {
        return Err(ApertureError::EmptySelection);
    }
    Ok(grid)
}

fn ring_grid((lo, hi): (f64, f64), res: Resolution) -> QuadratureGrid {
    let mut thetas = Vec::new();
    let mut theta_weights = Vec::new();
    if hi > lo {
        for (t, w) in uniform_nodes(lo, hi, res.n_theta).into_iter().zip(corrected_trapezoid(lo, hi, res.n_theta)) {
            let w = w * t.sin();
            // The pole carries no solid angle.
            if w > 0.0 {
                thetas.push(t);
                theta_weights.push(w);
            }
        }
    }
    let dphi = TAU / res.n_phi as f64;
    let mut nodes = Vec::with_capacity(thetas.len() * res.n_phi);
    for (&t, &w) in thetas.iter().zip(&theta_weights) {
        for j in 0..res.n_phi {
            let direction = Direction::new(t, j as f64 * dphi).expect("ring nodes lie on the hemisphere");
            nodes.push(GridNode { direction, weight: w * dphi });
        }
    }
    QuadratureGrid { nodes, layout: GridLayout::Rings { thetas, theta_weights, n_phi: res.n_phi } }
}

/// `dΩ = sin²θ_lens / cos θ · dx dy` on the back focal plane.
fn bfp_jacobian(theta: f64, lens: f64) -> f64 {
    lens.sin().powi(2) / theta.cos()
}

fn pinhole_grid(center: BfpPoint, radius: f64, lens: f64, res: Resolution) -> QuadratureGrid {
    let dpsi = TAU / res.n_phi as f64;
    let mut nodes = Vec::new();
    for (s, w) in uniform_nodes(0.0, radius, res.n_theta).into_iter().zip(corrected_trapezoid(0.0, radius, res.n_theta)) {
        if s == 0.0 {
            continue;
        }
        for j in 0..res.n_phi {
            let (sn, cs) = (j as f64 * dpsi).sin_cos();
            let p = BfpPoint { x: center.x + s * cs, y: center.y + s * sn };
            let Ok(direction) = bfp_inverse(p, lens) else { continue };
            let weight = w * s * dpsi * bfp_jacobian(direction.theta(), lens);
            if weight.is_finite() && weight > 0.0 {
                nodes.push(GridNode { direction, weight });
            }
        }
    }
    QuadratureGrid { nodes, layout: GridLayout::Scattered }
}

fn cap_samples((lo, hi): (f64, f64), n: usize, rng: &mut ChaCha8Rng) -> QuadratureGrid {
    let (c_lo, c_hi) = (lo.cos(), hi.cos());
    let weight = TAU * (c_lo - c_hi) / n as f64;
    let nodes = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let theta = (c_lo - u * (c_lo - c_hi)).clamp(-1.0, 1.0).acos();
            GridNode { direction: Direction::new(theta, TAU * v).expect("cap sample"), weight }
        })
        .collect();
    QuadratureGrid { nodes, layout: GridLayout::MonteCarlo }
}

/// Uniform samples on the pinhole disc of the BFP, weighted by the
/// BFP-to-solid-angle Jacobian.
fn pinhole_samples(center: BfpPoint, radius: f64, lens: f64, n: usize, rng: &mut ChaCha8Rng) -> QuadratureGrid {
    let area = PI * radius * radius;
    let mut nodes = Vec::with_capacity(n);
    while nodes.len() < n {
        let s = radius * rng.random::<f64>().sqrt();
        let (sn, cs) = (TAU * rng.random::<f64>()).sin_cos();
        let p = BfpPoint { x: center.x + s * cs, y: center.y + s * sn };
        let Ok(direction) = bfp_inverse(p, lens) else { continue };
        let weight = area / n as f64 * bfp_jacobian(direction.theta(), lens);
        nodes.push(GridNode { direction, weight });
    }
    QuadratureGrid { nodes, layout: GridLayout::MonteCarlo }
}
