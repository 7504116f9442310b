//! Externally computed far-field maps.
//!
//! A [`FarFieldMap`] holds, for every dipole of an emitter, the complex local
//! amplitudes `(E_θ, E_φ)` on a uniform `(θ, φ)` lattice covering the lens
//! acceptance `θ ∈ [0, θ_lens]`, `φ ∈ [0, 2π)`. Maps come from files in the
//! `farfield v1` text format or from the closed-form dipole model.
//!
//! Dipole order is fixed: for `CircularPM` maps it is `(σ⁺, σ⁻[, π])`, for
//! `LinearXY` maps `(x, y[, z])`. Linear and circular bases are related by
//!
//! ```text
//! E⁺ = −(E_x + i E_y)/√2,   E⁻ = (E_x − i E_y)/√2
//! ```
//!
//! which maps ideal x/y dipoles exactly onto the σ± amplitudes used by
//! [`crate::dipole`].

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::dipole::{local_gamma, CascadeKind, CascadeModel, Direction, TransitionKind};
use crate::polarization::{PolVector, StokesVector};
use crate::quadrature::corrected_trapezoid;
use crate::C64;

/// Slack for points sitting on the edge of the objective aperture.
pub const APERTURE_EDGE_TOL: f64 = 1e-12;

/// Angular tolerance (degrees) for grid coordinates read from files.
const GRID_COORD_TOL_DEG: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FarFieldError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: malformed header: {message}")]
    MalformedHeader { line: usize, message: String },
    #[error("line {line}: non-uniform grid: {message}")]
    NonUniformGrid { line: usize, message: String },
    #[error("line {line}: non-finite field value")]
    NonFinite { line: usize },
    #[error("line {line}: unsupported dipole count {found} (expected 2 or 3)")]
    DipoleCount { line: usize, found: usize },
    #[error("line {line}: missing row for dipole {dipole} at θ = {theta_deg}°, φ = {phi_deg}°")]
    MissingRow { line: usize, dipole: usize, theta_deg: f64, phi_deg: f64 },
    #[error("line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("invalid far-field grid: {0}")]
    InvalidGrid(String),
    #[error("cannot convert dipole basis: {0}")]
    Conversion(String),
    #[error("direction θ = {theta_deg}° is outside the lens acceptance {lens_deg}°")]
    OutOfAperture { theta_deg: f64, lens_deg: f64 },
    #[error("BFP point at radius {0} lies outside the objective aperture")]
    OutsideBfp(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipoleBasis {
    LinearXY,
    CircularPM,
}

impl DipoleBasis {
    fn keyword(self) -> &'static str {
        match self {
            DipoleBasis::LinearXY => "linear",
            DipoleBasis::CircularPM => "circular",
        }
    }
}

impl fmt::Display for DipoleBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// Dimensionless back-focal-plane coordinates; the objective aperture is the
/// unit disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfpPoint {
    pub x: f64,
    pub y: f64,
}

impl BfpPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, FarFieldError> {
        let r = x.hypot(y);
        if !r.is_finite() || r > 1.0 + APERTURE_EDGE_TOL {
            return Err(FarFieldError::OutsideBfp(r));
        }
        Ok(Self { x, y })
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn rotated(&self, alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y }
    }
}

/// Abbe sine condition: `r = sin θ / sin θ_lens`, at azimuth φ.
pub fn bfp_map(d: Direction, lens_theta_max: f64) -> Result<BfpPoint, FarFieldError> {
    if d.theta() > lens_theta_max + APERTURE_EDGE_TOL {
        return Err(FarFieldError::OutOfAperture {
            theta_deg: d.theta().to_degrees(),
            lens_deg: lens_theta_max.to_degrees(),
        });
    }
    let r = d.theta().sin() / lens_theta_max.sin();
    let (s, c) = d.phi().sin_cos();
    Ok(BfpPoint { x: r * c, y: r * s })
}

/// Inverse of [`bfp_map`].
pub fn bfp_inverse(p: BfpPoint, lens_theta_max: f64) -> Result<Direction, FarFieldError> {
    let r = p.radius();
    if r > 1.0 + APERTURE_EDGE_TOL {
        return Err(FarFieldError::OutsideBfp(r));
    }
    let theta = (r.min(1.0) * lens_theta_max.sin()).asin();
    let phi = if r == 0.0 { 0.0 } else { p.y.atan2(p.x) };
    Direction::new(theta, phi).map_err(|e| FarFieldError::InvalidGrid(e.to_string()))
}

/// Far-field amplitudes of two or three dipoles on a uniform `(θ, φ)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldMap {
    n_theta: usize,
    n_phi: usize,
    theta_lens: f64,
    basis: DipoleBasis,
    /// `fields[dipole][i_theta * n_phi + i_phi]`, local (θ̂, φ̂) components.
    fields: Vec<Vec<[C64; 2]>>,
    lab: Vec<Vec<[C64; 2]>>,
}

impl FarFieldMap {
    pub fn new(
        n_theta: usize,
        n_phi: usize,
        theta_lens: f64,
        basis: DipoleBasis,
        fields: Vec<Vec<[C64; 2]>>,
    ) -> Result<Self, FarFieldError> {
        if n_theta < 2 || n_phi < 4 {
            return Err(FarFieldError::InvalidGrid(format!(
                "need at least 2×4 nodes, got {n_theta}×{n_phi}"
            )));
        }
        if !(theta_lens > 0.0) || theta_lens > std::f64::consts::FRAC_PI_2 + 1e-12 {
            return Err(FarFieldError::InvalidGrid(format!(
                "lens acceptance {}° outside (0°, 90°]",
                theta_lens.to_degrees()
            )));
        }
        if !(2..=3).contains(&fields.len()) {
            return Err(FarFieldError::InvalidGrid(format!("{} dipoles (expected 2 or 3)", fields.len())));
        }
        let nodes = n_theta * n_phi;
        for (k, f) in fields.iter().enumerate() {
            if f.len() != nodes {
                return Err(FarFieldError::InvalidGrid(format!(
                    "dipole {k} has {} nodes, grid has {nodes}",
                    f.len()
                )));
            }
            if f.iter().flatten().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(FarFieldError::InvalidGrid(format!("dipole {k} has non-finite values")));
            }
        }
        let mut map = Self { n_theta, n_phi, theta_lens, basis, fields, lab: Vec::new() };
        map.lab = map.compute_lab();
        Ok(map)
    }

    fn compute_lab(&self) -> Vec<Vec<[C64; 2]>> {
        self.fields
            .iter()
            .map(|f| {
                f.iter()
                    .enumerate()
                    .map(|(n, v)| PolVector::lab_from_local(*v, self.phi(n % self.n_phi)).components)
                    .collect()
            })
            .collect()
    }

    /// Sample a closed-form cascade model; dipole order `(σ⁺, σ⁻[, π])`.
    pub fn from_model(model: &CascadeModel, n_theta: usize, n_phi: usize, theta_lens: f64) -> Result<Self, FarFieldError> {
        let kinds: &[TransitionKind] = match model.kind {
            CascadeKind::VacuumQd => &[TransitionKind::SigmaPlus, TransitionKind::SigmaMinus],
            CascadeKind::AtomicJ010 => &[TransitionKind::SigmaPlus, TransitionKind::SigmaMinus, TransitionKind::Pi],
        };
        let fields = kinds
            .iter()
            .map(|&k| grid_fill(n_theta, n_phi, theta_lens, |t, p| local_gamma(k, model.strength(), t, p)))
            .collect();
        Self::new(n_theta, n_phi, theta_lens, DipoleBasis::CircularPM, fields)
    }

    /// Ideal in-plane x and y dipoles of strength Π, in the `LinearXY` basis.
    pub fn ideal_linear(n_theta: usize, n_phi: usize, theta_lens: f64, strength: f64) -> Result<Self, FarFieldError> {
        let x = grid_fill(n_theta, n_phi, theta_lens, |t, p| {
            [C64::new(strength * t.cos() * p.cos(), 0.0), C64::new(-strength * p.sin(), 0.0)]
        });
        let y = grid_fill(n_theta, n_phi, theta_lens, |t, p| {
            [C64::new(strength * t.cos() * p.sin(), 0.0), C64::new(strength * p.cos(), 0.0)]
        });
        Self::new(n_theta, n_phi, theta_lens, DipoleBasis::LinearXY, vec![x, y])
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn n_dipoles(&self) -> usize {
        self.fields.len()
    }

    pub fn theta_lens(&self) -> f64 {
        self.theta_lens
    }

    pub fn basis(&self) -> DipoleBasis {
        self.basis
    }

    pub fn theta_step(&self) -> f64 {
        self.theta_lens / (self.n_theta - 1) as f64
    }

    pub fn phi_step(&self) -> f64 {
        TAU / self.n_phi as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        if i + 1 == self.n_theta {
            self.theta_lens
        } else {
            i as f64 * self.theta_step()
        }
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.phi_step()
    }

    /// Local amplitudes of `dipole` at node `(i, j)`.
    pub fn field(&self, dipole: usize, i: usize, j: usize) -> [C64; 2] {
        self.fields[dipole][i * self.n_phi + j]
    }

    /// Lab H/V amplitudes of `dipole` at node `(i, j)`.
    pub fn lab_field(&self, dipole: usize, i: usize, j: usize) -> [C64; 2] {
        self.lab[dipole][i * self.n_phi + j]
    }

    /// Solid-angle quadrature weights of the θ rows (including `sin θ`).
    pub fn theta_weights(&self) -> Vec<f64> {
        corrected_trapezoid(0.0, self.theta_lens, self.n_theta)
            .into_iter()
            .enumerate()
            .map(|(i, w)| w * self.theta(i).sin())
            .collect()
    }

    /// `Σ_dipoles |E|²` at every node, θ-major.
    pub fn node_intensity(&self) -> Vec<f64> {
        (0..self.n_theta * self.n_phi)
            .map(|n| self.fields.iter().map(|f| f[n][0].norm_sqr() + f[n][1].norm_sqr()).sum())
            .collect()
    }

    /// `Σ_dipoles |E|²` integrated over the grid.
    pub fn total_power(&self) -> f64 {
        self.radial_power().iter().zip(corrected_trapezoid(0.0, self.theta_lens, self.n_theta)).map(|(g, w)| g * w).sum()
    }

    /// Power per unit θ: `sin θ ∫dφ Σ|E|²` at every θ row.
    fn radial_power(&self) -> Vec<f64> {
        let intensity = self.node_intensity();
        (0..self.n_theta)
            .map(|i| {
                let ring: f64 = intensity[i * self.n_phi..(i + 1) * self.n_phi].iter().sum();
                ring * self.phi_step() * self.theta(i).sin()
            })
            .collect()
    }

    /// Copy rescaled so that [`Self::total_power`] is 1.
    pub fn normalized_power(&self) -> Result<Self, FarFieldError> {
        let p = self.total_power();
        if !(p > 0.0) || !p.is_finite() {
            return Err(FarFieldError::InvalidGrid("map carries no power".into()));
        }
        let k = 1.0 / p.sqrt();
        let mut out = self.clone();
        for f in out.fields.iter_mut().chain(out.lab.iter_mut()) {
            for v in f.iter_mut() {
                v[0] *= k;
                v[1] *= k;
            }
        }
        Ok(out)
    }

    /// Fraction of the collected power emitted within `θ ≤ theta`.
    ///
    /// Grid rows are integrated with the end-corrected trapezoid rule; a
    /// partial last cell is integrated on the cubic interpolant of the
    /// neighbouring rows, so the result stays fourth-order accurate.
    pub fn power_fraction_within(&self, theta: f64) -> f64 {
        let g = self.radial_power();
        let total: f64 = g.iter().zip(corrected_trapezoid(0.0, self.theta_lens, self.n_theta)).map(|(a, w)| a * w).sum();
        let theta = theta.clamp(0.0, self.theta_lens);
        let h = self.theta_step();
        let m = ((theta / h + 1e-9).floor() as usize).min(self.n_theta - 1);
        let mut part = 0.0;
        if m >= 1 {
            let w = corrected_trapezoid(0.0, self.theta(m), m + 1);
            part += g[..=m].iter().zip(w).map(|(a, w)| a * w).sum::<f64>();
        }
        let lo = self.theta(m);
        if theta - lo > 1e-12 {
            part += integrate_interpolant(&g, h, lo, theta);
        }
        part / total
    }

    /// Bilinear interpolation of the lab amplitudes of `dipole`, periodic in
    /// φ. Directions beyond the lens acceptance are rejected.
    pub fn lab_field_at(&self, dipole: usize, d: Direction) -> Result<[C64; 2], FarFieldError> {
        if d.theta() > self.theta_lens + APERTURE_EDGE_TOL {
            return Err(FarFieldError::OutOfAperture {
                theta_deg: d.theta().to_degrees(),
                lens_deg: self.theta_lens.to_degrees(),
            });
        }
        let t = (d.theta() / self.theta_step()).min((self.n_theta - 1) as f64);
        let i0 = (t.floor() as usize).min(self.n_theta - 2);
        let ft = t - i0 as f64;
        let u = d.phi() / self.phi_step();
        let j0 = (u.floor() as usize) % self.n_phi;
        let fp = u - u.floor();
        let j1 = (j0 + 1) % self.n_phi;
        let f = &self.lab[dipole];
        let at = |i: usize, j: usize| f[i * self.n_phi + j];
        let mut out = [C64::new(0.0, 0.0); 2];
        for (c, o) in out.iter_mut().enumerate() {
            let a = at(i0, j0)[c] * (1.0 - fp) + at(i0, j1)[c] * fp;
            let b = at(i0 + 1, j0)[c] * (1.0 - fp) + at(i0 + 1, j1)[c] * fp;
            *o = a * (1.0 - ft) + b * ft;
        }
        Ok(out)
    }
}

fn grid_fill(n_theta: usize, n_phi: usize, theta_lens: f64, f: impl Fn(f64, f64) -> [C64; 2]) -> Vec<[C64; 2]> {
    let h = theta_lens / (n_theta.max(2) - 1) as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for i in 0..n_theta {
        let t = if i + 1 == n_theta { theta_lens } else { i as f64 * h };
        for j in 0..n_phi {
            out.push(f(t, j as f64 * TAU / n_phi as f64));
        }
    }
    out
}

/// `∫_a^b` of the cubic through the four grid samples nearest to `[a, b]`.
fn integrate_interpolant(g: &[f64], h: f64, a: f64, b: f64) -> f64 {
    let n = g.len();
    let k = if n < 4 { 0 } else { ((a / h).floor() as usize).saturating_sub(1).min(n - 4) };
    let pts = n.min(4);
    let eval = |x: f64| {
        let mut acc = 0.0;
        for p in 0..pts {
            let xp = (k + p) as f64 * h;
            let mut l = 1.0;
            for q in 0..pts {
                if q != p {
                    let xq = (k + q) as f64 * h;
                    l *= (x - xq) / (xp - xq);
                }
            }
            acc += g[k + p] * l;
        }
        acc
    };
    // Three-point Gauss–Legendre is exact for the cubic.
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let r = (0.6f64).sqrt();
    half * (5.0 / 9.0 * eval(mid - half * r) + 8.0 / 9.0 * eval(mid) + 5.0 / 9.0 * eval(mid + half * r))
}

/// Re-express a two-dipole map in another dipole basis.
pub fn convert_dipole_basis(m: &FarFieldMap, target: DipoleBasis) -> Result<FarFieldMap, FarFieldError> {
    if m.basis == target {
        return Ok(m.clone());
    }
    if m.n_dipoles() != 2 {
        return Err(FarFieldError::Conversion(format!(
            "{}-dipole map: the π component has no {target} counterpart",
            m.n_dipoles()
        )));
    }
    let i = C64::new(0.0, 1.0);
    let s = FRAC_1_SQRT_2;
    let (a, b) = (&m.fields[0], &m.fields[1]);
    let (f0, f1): (Vec<[C64; 2]>, Vec<[C64; 2]>) = a
        .iter()
        .zip(b)
        .map(|(p, q)| {
            let mut u = [C64::new(0.0, 0.0); 2];
            let mut v = [C64::new(0.0, 0.0); 2];
            for c in 0..2 {
                match target {
                    // (x, y) → (σ⁺, σ⁻)
                    DipoleBasis::CircularPM => {
                        u[c] = -(p[c] + i * q[c]) * s;
                        v[c] = (p[c] - i * q[c]) * s;
                    }
                    // (σ⁺, σ⁻) → (x, y)
                    DipoleBasis::LinearXY => {
                        u[c] = (q[c] - p[c]) * s;
                        v[c] = i * (p[c] + q[c]) * s;
                    }
                }
            }
            (u, v)
        })
        .unzip();
    FarFieldMap::new(m.n_theta, m.n_phi, m.theta_lens, target, vec![f0, f1])
}

/// Read a `farfield v1` file and normalize its total collected power to 1.
pub fn ingest_farfield(path: &Path) -> Result<FarFieldMap, FarFieldError> {
    let file = std::fs::File::open(path).map_err(|source| FarFieldError::Io { path: path.display().to_string(), source })?;
    parse_farfield(io::BufReader::new(file))?.normalized_power()
}

/// Parse a `farfield v1` stream without renormalizing.
pub fn parse_farfield<R: BufRead>(reader: R) -> Result<FarFieldMap, FarFieldError> {
    let io_err = |source| FarFieldError::Io { path: "<stream>".into(), source };
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));
    let mut next_content = |skip_comments: bool| -> Result<Option<(usize, String)>, FarFieldError> {
        for (n, l) in lines.by_ref() {
            let l = l.map_err(io_err)?;
            let t = l.trim();
            if t.is_empty() || (skip_comments && t.starts_with('#')) {
                continue;
            }
            return Ok(Some((n, t.to_string())));
        }
        Ok(None)
    };
    let header = |line: usize, message: &str| FarFieldError::MalformedHeader { line, message: message.into() };

    let (n, magic) = next_content(false)?.ok_or_else(|| header(1, "empty file"))?;
    if magic.split_whitespace().collect::<Vec<_>>() != ["#farfield", "v1"] {
        return Err(header(n, "expected `#farfield v1`"));
    }
    let (n, grid) = next_content(true)?.ok_or_else(|| header(n + 1, "missing `grid` line"))?;
    let g: Vec<&str> = grid.split_whitespace().collect();
    if g.len() != 4 || g[0] != "grid" {
        return Err(header(n, "expected `grid <nθ> <nφ> <θ_lens_deg>`"));
    }
    let n_theta: usize = g[1].parse().map_err(|_| header(n, "nθ is not an integer"))?;
    let n_phi: usize = g[2].parse().map_err(|_| header(n, "nφ is not an integer"))?;
    let lens_deg: f64 = g[3].parse().map_err(|_| header(n, "θ_lens is not a number"))?;
    if n_theta < 2 || n_phi < 4 {
        return Err(header(n, "grid needs nθ ≥ 2 and nφ ≥ 4"));
    }
    if !(lens_deg > 0.0 && lens_deg <= 90.0) {
        return Err(header(n, "θ_lens must lie in (0, 90] degrees"));
    }
    let (n, dip) = next_content(true)?.ok_or_else(|| header(n + 1, "missing `dipoles` line"))?;
    let d: Vec<&str> = dip.split_whitespace().collect();
    if d.len() != 3 || d[0] != "dipoles" {
        return Err(header(n, "expected `dipoles <2|3> <linear|circular>`"));
    }
    let n_dip: usize = d[1].parse().map_err(|_| header(n, "dipole count is not an integer"))?;
    if !(2..=3).contains(&n_dip) {
        return Err(FarFieldError::DipoleCount { line: n, found: n_dip });
    }
    let basis = match d[2] {
        "linear" => DipoleBasis::LinearXY,
        "circular" => DipoleBasis::CircularPM,
        _ => return Err(header(n, "dipole basis must be `linear` or `circular`")),
    };

    let nodes = n_theta * n_phi;
    let total = n_dip * nodes;
    let h_deg = lens_deg / (n_theta - 1) as f64;
    let p_deg = 360.0 / n_phi as f64;
    let expected = |r: usize| {
        let node = r % nodes;
        ((node / n_phi) as f64 * h_deg, (node % n_phi) as f64 * p_deg)
    };
    let same = |a: f64, b: f64| (a - b).abs() <= GRID_COORD_TOL_DEG * b.abs().max(1.0);
    let mut fields = vec![Vec::with_capacity(nodes); n_dip];
    let mut r = 0usize;
    let mut last_line = n;
    while let Some((line, row)) = next_content(true)? {
        last_line = line;
        if r == total {
            return Err(FarFieldError::BadRow { line, message: "unexpected row after the last dipole block".into() });
        }
        let vals: Vec<f64> = row
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FarFieldError::BadRow { line, message: format!("unparsable number: {e}") })?;
        if vals.len() != 6 {
            return Err(FarFieldError::BadRow { line, message: format!("expected 6 columns, found {}", vals.len()) });
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(FarFieldError::NonFinite { line });
        }
        let (te, pe) = expected(r);
        if !same(vals[0], te) || !same(vals[1], pe) {
            if r + 1 < total {
                let (tn, pn) = expected(r + 1);
                if same(vals[0], tn) && same(vals[1], pn) {
                    return Err(FarFieldError::MissingRow { line, dipole: r / nodes, theta_deg: te, phi_deg: pe });
                }
            }
            return Err(FarFieldError::NonUniformGrid {
                line,
                message: format!("row at (θ, φ) = ({}°, {}°), expected ({te}°, {pe}°)", vals[0], vals[1]),
            });
        }
        fields[r / nodes].push([C64::new(vals[2], vals[3]), C64::new(vals[4], vals[5])]);
        r += 1;
    }
    if r < total {
        let (te, pe) = expected(r);
        return Err(FarFieldError::MissingRow { line: last_line + 1, dipole: r / nodes, theta_deg: te, phi_deg: pe });
    }
    FarFieldMap::new(n_theta, n_phi, lens_deg.to_radians(), basis, fields)
}

/// Write `m` in the `farfield v1` format.
pub fn write_farfield<W: Write>(mut w: W, m: &FarFieldMap) -> io::Result<()> {
    writeln!(w, "#farfield v1")?;
    writeln!(w, "grid {} {} {}", m.n_theta, m.n_phi, m.theta_lens.to_degrees())?;
    writeln!(w, "dipoles {} {}", m.n_dipoles(), m.basis.keyword())?;
    writeln!(w, "# columns: theta_deg phi_deg ReEtheta ImEtheta ReEphi ImEphi")?;
    let lens_deg = m.theta_lens.to_degrees();
    let h_deg = lens_deg / (m.n_theta - 1) as f64;
    let p_deg = 360.0 / m.n_phi as f64;
    for (k, f) in m.fields.iter().enumerate() {
        writeln!(w, "# dipole {k}")?;
        for i in 0..m.n_theta {
            for j in 0..m.n_phi {
                let v = f[i * m.n_phi + j];
                writeln!(
                    w,
                    "{} {} {:.17e} {:.17e} {:.17e} {:.17e}",
                    i as f64 * h_deg,
                    j as f64 * p_deg,
                    v[0].re,
                    v[0].im,
                    v[1].re,
                    v[1].im
                )?;
            }
        }
    }
    Ok(())
}

/// Azimuthal average at one θ row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialSample {
    pub theta: f64,
    pub dop: f64,
    pub intensity: f64,
}

/// Per-node lab-basis Stokes vectors, DOP and azimuthally averaged profiles.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesMap {
    pub n_theta: usize,
    pub n_phi: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    /// θ-major, `n_theta * n_phi` entries.
    pub stokes: Vec<StokesVector>,
    pub dop: Vec<f64>,
    pub radial: Vec<RadialSample>,
}

impl StokesMap {
    pub fn at(&self, i: usize, j: usize) -> (StokesVector, f64) {
        let n = i * self.n_phi + j;
        (self.stokes[n], self.dop[n])
    }
}

/// Incoherent Stokes sum over the map's dipoles at every node.
pub fn stokes_map(m: &FarFieldMap) -> StokesMap {
    let nodes = m.n_theta * m.n_phi;
    let stokes: Vec<StokesVector> = (0..nodes)
        .map(|n| {
            m.lab
                .iter()
                .map(|f| PolVector::lab(f[n][0], f[n][1]).stokes())
                .fold(StokesVector::default(), |a, b| a + b)
        })
        .collect();
    let dop: Vec<f64> = stokes.iter().map(|s| crate::polarization::dop(s).unwrap_or(0.0)).collect();
    let radial = (0..m.n_theta)
        .map(|i| {
            let row = i * m.n_phi..(i + 1) * m.n_phi;
            let k = m.n_phi as f64;
            RadialSample {
                theta: m.theta(i),
                dop: dop[row.clone()].iter().sum::<f64>() / k,
                intensity: stokes[row].iter().map(|s| s.s0).sum::<f64>() / k,
            }
        })
        .collect();
    StokesMap {
        n_theta: m.n_theta,
        n_phi: m.n_phi,
        theta: (0..m.n_theta).map(|i| m.theta(i)).collect(),
        phi: (0..m.n_phi).map(|j| m.phi(j)).collect(),
        stokes,
        dop,
        radial,
    }
}
