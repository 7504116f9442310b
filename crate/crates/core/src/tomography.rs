//! Two-qubit polarization tomography: simulated coincidence counts, linear
//! inversion, maximum-likelihood reconstruction and bootstrap error bars.

use std::fmt;
use std::io::{self, BufRead, Write};

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::density::{concurrence, fidelity_phi_plus, hermitian_eigenvalues, purity, DensityMatrix2Q, StateError};
use crate::quadrature::derive_seed;
use crate::C64;

#[derive(Debug, Error)]
pub enum TomographyError {
    #[error("unknown projector label `{0}`")]
    UnknownLabel(String),
    #[error("measurement frame is singular (smallest singular value {0:e})")]
    SingularFrame(f64),
    #[error("count record has {found} entries, measurement set has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("pairs per setting must be positive (got {0})")]
    NonPositivePairs(f64),
    #[error("maximum likelihood did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, best: Box<DensityMatrix2Q>, log_likelihood: f64 },
    #[error("bootstrap needs at least {min} replicates (got {0})", min = MIN_BOOTSTRAP)]
    TooFewReplicates(usize),
    #[error("bootstrap produced only {0} converged replicates")]
    BootstrapFailed(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    State(#[from] StateError),
}

pub const MIN_BOOTSTRAP: usize = 50;

/// Floor applied to expected counts inside the log-likelihood.
pub const MU_FLOOR: f64 = 1e-12;

const SINGLE_LABELS: [char; 6] = ['H', 'V', 'D', 'A', 'R', 'L'];

/// Single-photon polarization state for a projector letter.
pub fn single_state(label: char) -> Option<[C64; 2]> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| C64::new(re, im);
    Some(match label {
        'H' => [c(1.0, 0.0), c(0.0, 0.0)],
        'V' => [c(0.0, 0.0), c(1.0, 0.0)],
        'D' => [c(s, 0.0), c(s, 0.0)],
        'A' => [c(s, 0.0), c(-s, 0.0)],
        'R' => [c(s, 0.0), c(0.0, s)],
        'L' => [c(s, 0.0), c(0.0, -s)],
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// The 16 product projections of the standard two-qubit protocol.
    James16,
    /// All 36 pairs of Pauli eigenstates.
    Full36,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::James16 => "james16",
            Preset::Full36 => "full36",
        })
    }
}

const JAMES16: [&str; 16] =
    ["HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL"];

/// Ordered product projectors `|a⟩ ⊗ |b⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub preset: Preset,
    labels: Vec<String>,
    states: Vec<Vector4<C64>>,
}

impl MeasurementSet {
    pub fn new(preset: Preset) -> Self {
        let labels: Vec<String> = match preset {
            Preset::James16 => JAMES16.iter().map(|s| s.to_string()).collect(),
            Preset::Full36 => SINGLE_LABELS
                .iter()
                .flat_map(|a| SINGLE_LABELS.iter().map(move |b| format!("{a}{b}")))
                .collect(),
        };
        let states = labels.iter().map(|l| product_state(l).expect("preset labels are valid")).collect();
        Self { preset, labels, states }
    }

    pub fn james16() -> Self {
        Self::new(Preset::James16)
    }

    pub fn full36() -> Self {
        Self::new(Preset::Full36)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn states(&self) -> &[Vector4<C64>] {
        &self.states
    }

    /// Real frame matrix `B[ν, 4a + b] = s_a(first) s_b(second) / 4`, with
    /// `s = (1, ⟨σx⟩, ⟨σy⟩, ⟨σz⟩)` of each single-photon projector.
    fn frame(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.len(), 16);
        for (nu, l) in self.labels.iter().enumerate() {
            let mut ch = l.chars();
            let s1 = bloch(single_state(ch.next().unwrap()).unwrap());
            let s2 = bloch(single_state(ch.next().unwrap()).unwrap());
            for a in 0..4 {
                for c in 0..4 {
                    b[(nu, 4 * a + c)] = s1[a] * s2[c] / 4.0;
                }
            }
        }
        b
    }
}

fn product_state(label: &str) -> Option<Vector4<C64>> {
    let mut ch = label.chars();
    let (a, b) = (single_state(ch.next()?)?, single_state(ch.next()?)?);
    if ch.next().is_some() {
        return None;
    }
    Some(Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]))
}

fn bloch(a: [C64; 2]) -> [f64; 4] {
    let x = a[0].conj() * a[1];
    [1.0, 2.0 * x.re, 2.0 * x.im, a[0].norm_sqr() - a[1].norm_sqr()]
}

fn paulis() -> [Matrix2<C64>; 4] {
    let c = |re: f64, im: f64| C64::new(re, im);
    let z = c(0.0, 0.0);
    [
        Matrix2::new(c(1.0, 0.0), z, z, c(1.0, 0.0)),
        Matrix2::new(z, c(1.0, 0.0), c(1.0, 0.0), z),
        Matrix2::new(z, c(0.0, -1.0), c(0.0, 1.0), z),
        Matrix2::new(c(1.0, 0.0), z, z, c(-1.0, 0.0)),
    ]
}

/// Observed coincidences per projector.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    /// Pairs sent through each analyzer setting (scale of the Born rule).
    pub total_pairs_per_setting: f64,
}

impl CountRecord {
    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Check labels against `ms` (same order).
    pub fn check(&self, ms: &MeasurementSet) -> Result<(), TomographyError> {
        if self.counts.len() != ms.len() || self.labels.len() != ms.len() {
            return Err(TomographyError::LengthMismatch { expected: ms.len(), found: self.counts.len() });
        }
        for (a, b) in self.labels.iter().zip(ms.labels()) {
            if a != b {
                return Err(TomographyError::UnknownLabel(a.clone()));
            }
        }
        if !(self.total_pairs_per_setting > 0.0) || !self.total_pairs_per_setting.is_finite() {
            return Err(TomographyError::NonPositivePairs(self.total_pairs_per_setting));
        }
        Ok(())
    }

    /// Reorder a record with arbitrary label order to match `ms`.
    pub fn aligned(&self, ms: &MeasurementSet) -> Result<Self, TomographyError> {
        let mut counts = Vec::with_capacity(ms.len());
        for l in ms.labels() {
            let k = self.labels.iter().position(|x| x == l).ok_or_else(|| TomographyError::UnknownLabel(l.clone()))?;
            counts.push(self.counts[k]);
        }
        if self.labels.len() != ms.len() {
            return Err(TomographyError::LengthMismatch { expected: ms.len(), found: self.labels.len() });
        }
        Ok(Self { labels: ms.labels().to_vec(), counts, total_pairs_per_setting: self.total_pairs_per_setting })
    }
}

/// Born-rule expectations `N ⟨ψ_ν|ρ|ψ_ν⟩`.
pub fn expected_counts(rho: &DensityMatrix2Q, ms: &MeasurementSet, pairs_per_setting: f64) -> Result<Vec<f64>, TomographyError> {
    if !(pairs_per_setting > 0.0) || !pairs_per_setting.is_finite() {
        return Err(TomographyError::NonPositivePairs(pairs_per_setting));
    }
    Ok(ms.states().iter().map(|s| (pairs_per_setting * rho.expectation(s)).clamp(0.0, pairs_per_setting)).collect())
}

/// Independent Poisson draws; deterministic per seed.
pub fn sample_counts(expected: &[f64], seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    expected
        .iter()
        .map(|&mu| if mu > 0.0 { Poisson::new(mu).expect("finite positive rate").sample(&mut rng) as u64 } else { 0 })
        .collect()
}

/// Simulate a count record for `ms`.
pub fn simulate_record(rho: &DensityMatrix2Q, ms: &MeasurementSet, pairs_per_setting: f64, seed: u64) -> Result<CountRecord, TomographyError> {
    let mu = expected_counts(rho, ms, pairs_per_setting)?;
    Ok(CountRecord { labels: ms.labels().to_vec(), counts: sample_counts(&mu, seed), total_pairs_per_setting: pairs_per_setting })
}

/// Linear inversion of real-valued counts. The result is Hermitian with
/// unit trace but not necessarily positive.
pub fn reconstruct_linear_from(counts: &[f64], ms: &MeasurementSet) -> Result<Matrix4<C64>, TomographyError> {
    if counts.len() != ms.len() {
        return Err(TomographyError::LengthMismatch { expected: ms.len(), found: counts.len() });
    }
    let b = ms.frame();
    let svd = b.clone().svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if svd.singular_values.len() < 16 || smin < 1e-10 {
        return Err(TomographyError::SingularFrame(smin));
    }
    let r = svd.solve(&DVector::from_column_slice(counts), 1e-12).map_err(|_| TomographyError::SingularFrame(smin))?;
    if !(r[0].abs() > 0.0) {
        return Err(TomographyError::SingularFrame(0.0));
    }
    let p = paulis();
    let mut m = Matrix4::<C64>::zeros();
    for a in 0..4 {
        for c in 0..4 {
            m += p[a].kronecker(&p[c]) * C64::new(r[4 * a + c] / (4.0 * r[0]), 0.0);
        }
    }
    Ok((m + m.adjoint()) * C64::new(0.5, 0.0))
}

pub fn reconstruct_linear(c: &CountRecord, ms: &MeasurementSet) -> Result<Matrix4<C64>, TomographyError> {
    c.check(ms)?;
    reconstruct_linear_from(&c.as_f64(), ms)
}

/// Nearest PSD unit-trace matrix by eigenvalue clipping.
pub fn project_psd(m: &Matrix4<C64>) -> Result<DensityMatrix2Q, StateError> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut d = Matrix4::<C64>::zeros();
    for i in 0..4 {
        d[(i, i)] = C64::new(eig.eigenvalues[i].max(0.0), 0.0);
    }
    DensityMatrix2Q::from_unnormalized(eig.eigenvectors * d * eig.eigenvectors.adjoint())
}

/// Poisson log-likelihood `Σ n log max(μ, floor) − μ` with `μ = N ψ†ρψ`.
pub fn log_likelihood(rho: &Matrix4<C64>, counts: &[f64], ms: &MeasurementSet, pairs_per_setting: f64) -> f64 {
    ms.states()
        .iter()
        .zip(counts)
        .map(|(s, &n)| {
            let mu = pairs_per_setting * (s.adjoint() * rho * s)[(0, 0)].re;
            n * mu.max(MU_FLOOR).ln() - mu
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop once the log-likelihood has improved by less than this on
    /// `patience` consecutive iterations.
    pub ll_tolerance: f64,
    pub patience: usize,
    pub gradient_tolerance: f64,
    /// L-BFGS history length.
    pub memory: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iterations: 100_000, ll_tolerance: 1e-10, patience: 25, gradient_tolerance: 1e-8, memory: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix2Q,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Upper-triangular factor with real diagonal, packed into 16 reals:
/// 4 diagonal entries then (Re, Im) of the 6 strictly upper entries.
fn unpack(x: &[f64]) -> Matrix4<C64> {
    let mut t = Matrix4::zeros();
    for i in 0..4 {
        t[(i, i)] = C64::new(x[i], 0.0);
    }
    let mut k = 4;
    for i in 0..4 {
        for j in i + 1..4 {
            t[(i, j)] = C64::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn pack(t: &Matrix4<C64>) -> Vec<f64> {
    let mut x = vec![0.0; 16];
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    let mut k = 4;
    for i in 0..4 {
        for j in i + 1..4 {
            x[k] = t[(i, j)].re;
            x[k + 1] = t[(i, j)].im;
            k += 2;
        }
    }
    x
}

struct Objective<'a> {
    counts: &'a [f64],
    ms: &'a MeasurementSet,
    pairs: f64,
    projectors: Vec<Matrix4<C64>>,
}

impl<'a> Objective<'a> {
    fn new(counts: &'a [f64], ms: &'a MeasurementSet, pairs: f64) -> Self {
        let projectors = ms.states().iter().map(|s| s * s.adjoint()).collect();
        Self { counts, ms, pairs, projectors }
    }

    fn rho(x: &[f64]) -> Matrix4<C64> {
        let t = unpack(x);
        let m = t.adjoint() * t;
        let tau = m.trace().re;
        m / C64::new(tau, 0.0)
    }

    /// Log-likelihood and its gradient with respect to the packed factor.
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let t = unpack(x);
        let tau: f64 = x.iter().map(|v| v * v).sum();
        let rho = t.adjoint() * t / C64::new(tau, 0.0);
        let mut ll = 0.0;
        let mut m = Matrix4::<C64>::zeros();
        let mut c = 0.0;
        for ((s, p), &n) in self.ms.states().iter().zip(&self.projectors).zip(self.counts) {
            let mu = self.pairs * (s.adjoint() * rho * s)[(0, 0)].re;
            // Measured from the saturated likelihood so small improvements
            // near the optimum stay above rounding.
            ll -= if n > 0.0 { n * excess((mu.max(MU_FLOOR) - n) / n) } else { mu };
            let g = if mu > MU_FLOOR { n / mu - 1.0 } else { -1.0 };
            m += p * C64::new(g, 0.0);
            c += g * mu / self.pairs;
        }
        let grad = t * (m - Matrix4::identity() * C64::new(c, 0.0)) * C64::new(2.0 * self.pairs / tau, 0.0);
        (ll, pack(&grad))
    }
}

/// `x − ln(1 + x)`, accurate for small `x`.
fn excess(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 3.0 + x2 / 4.0 - x2 * x / 5.0 + x2 * x2 / 6.0)
    } else {
        x - x.ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximum-likelihood reconstruction over the PSD cone via
/// `ρ = T†T / Tr(T†T)`, maximized with L-BFGS and Armijo backtracking.
pub fn reconstruct_mle(c: &CountRecord, ms: &MeasurementSet, opts: &MleOptions) -> Result<MleResult, TomographyError> {
    c.check(ms)?;
    mle_from(&c.as_f64(), ms, c.total_pairs_per_setting, opts)
}

/// [`reconstruct_mle`] on real-valued counts.
pub fn mle_from(counts: &[f64], ms: &MeasurementSet, pairs: f64, opts: &MleOptions) -> Result<MleResult, TomographyError> {
    if counts.len() != ms.len() {
        return Err(TomographyError::LengthMismatch { expected: ms.len(), found: counts.len() });
    }
    if !(pairs > 0.0) {
        return Err(TomographyError::NonPositivePairs(pairs));
    }
    let lin = reconstruct_linear_from(counts, ms)?;
    let start = project_psd(&lin)?.into_matrix() * C64::new(0.99, 0.0) + Matrix4::identity() * C64::new(0.0025, 0.0);
    let chol = start.cholesky().ok_or(TomographyError::State(StateError::NotPositive { min_eigenvalue: 0.0 }))?;
    let x0 = pack(&chol.l().adjoint());
    let obj = Objective::new(counts, ms, pairs);

    let (mut x, mut f, mut g) = {
        let (ll, g) = obj.eval(&x0);
        (x0, -ll, g.iter().map(|v| -v).collect::<Vec<f64>>())
    };
    let mut hist: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iterations = 0;
    let mut stalled = 0;
    loop {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < opts.gradient_tolerance {
            break;
        }
        if iterations >= opts.max_iterations {
            let best = DensityMatrix2Q::from_unnormalized(Objective::rho(&x))?;
            let log_likelihood = log_likelihood(best.matrix(), counts, ms, pairs);
            return Err(TomographyError::NotConverged { iterations, best: Box::new(best), log_likelihood });
        }
        iterations += 1;
        // Two-loop recursion for the quasi-Newton direction.
        let mut q = g.clone();
        let mut alpha = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alpha.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alpha.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        // Armijo backtracking.
        let mut step = if hist.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (ll, gn) = obj.eval(&xn);
            let fnew = -ll;
            if fnew.is_finite() && fnew <= f + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gn.iter().map(|v| -v).collect::<Vec<f64>>()));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gn)) = accepted else {
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let improvement = f - fnew;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == opts.memory {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = xn;
        f = fnew;
        g = gn;
        // Keep the factor well scaled; ρ is invariant under T → kT.
        let norm = dot(&x, &x).sqrt();
        if (norm - 1.0).abs() > 0.5 {
            x.iter_mut().for_each(|v| *v /= norm);
            g.iter_mut().for_each(|v| *v *= norm);
            hist.clear();
        }
        stalled = if improvement < opts.ll_tolerance { stalled + 1 } else { 0 };
        if stalled >= opts.patience.max(1) {
            break;
        }
    }
    let rho = DensityMatrix2Q::from_unnormalized(Objective::rho(&x))?;
    let log_likelihood = log_likelihood(rho.matrix(), counts, ms, pairs);
    Ok(MleResult { rho, log_likelihood, iterations, gradient_norm: dot(&g, &g).sqrt() })
}

/// Standard deviations of figures of merit over a parametric bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    pub fidelity_std: f64,
    pub concurrence_std: f64,
    pub purity_std: f64,
    pub replicates: usize,
    /// Indices of replicates whose reconstruction did not converge.
    pub failed: Vec<usize>,
}

fn sample_std(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Resample every count as `Poisson(n_ν)`, reconstruct each replicate by
/// maximum likelihood and report the spread of fidelity, concurrence and
/// purity. Replicate `r` draws from its own stream derived from
/// `(seed, r)`, so results do not depend on scheduling.
pub fn error_bars(
    c: &CountRecord,
    ms: &MeasurementSet,
    n_boot: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<BootstrapReport, TomographyError> {
    c.check(ms)?;
    if n_boot < MIN_BOOTSTRAP {
        return Err(TomographyError::TooFewReplicates(n_boot));
    }
    let observed = c.as_f64();
    let outcomes: Vec<Option<(f64, f64, f64)>> = (0..n_boot)
        .into_par_iter()
        .map(|r| {
            let resampled: Vec<f64> =
                sample_counts(&observed, derive_seed(seed, r as u64)).into_iter().map(|k| k as f64).collect();
            mle_from(&resampled, ms, c.total_pairs_per_setting, opts)
                .ok()
                .map(|m| (fidelity_phi_plus(&m.rho), concurrence(&m.rho), purity(&m.rho)))
        })
        .collect();
    let failed: Vec<usize> = outcomes.iter().enumerate().filter(|(_, o)| o.is_none()).map(|(i, _)| i).collect();
    let ok: Vec<(f64, f64, f64)> = outcomes.into_iter().flatten().collect();
    if ok.len() < 2 {
        return Err(TomographyError::BootstrapFailed(ok.len()));
    }
    let col = |k: usize| ok.iter().map(|t| [t.0, t.1, t.2][k]).collect::<Vec<f64>>();
    Ok(BootstrapReport {
        fidelity_std: sample_std(&col(0)),
        concurrence_std: sample_std(&col(1)),
        purity_std: sample_std(&col(2)),
        replicates: ok.len(),
        failed,
    })
}

/// Minimum eigenvalue, exposed for reporting.
pub fn min_eigenvalue(m: &Matrix4<C64>) -> f64 {
    hermitian_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min)
}

/// Write a count record as CSV.
pub fn write_counts<W: Write>(mut w: W, c: &CountRecord) -> io::Result<()> {
    writeln!(w, "# total_pairs_per_setting: {}", c.total_pairs_per_setting)?;
    writeln!(w, "projector,count")?;
    for (l, n) in c.labels.iter().zip(&c.counts) {
        writeln!(w, "{l},{n}")?;
    }
    Ok(())
}

/// Read a count record written by [`write_counts`].
pub fn read_counts<R: BufRead>(r: R) -> Result<CountRecord, TomographyError> {
    let mut labels = Vec::new();
    let mut counts = Vec::new();
    let mut pairs = None;
    let mut header_seen = false;
    for (k, line) in r.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(rest) = t.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("total_pairs_per_setting:") {
                pairs = Some(v.trim().parse::<f64>().map_err(|_| TomographyError::Parse {
                    line: line_no,
                    message: format!("bad pairs-per-setting value `{}`", v.trim()),
                })?);
            }
            continue;
        }
        if !header_seen {
            if t.replace(' ', "") != "projector,count" {
                return Err(TomographyError::Parse { line: line_no, message: "expected header `projector,count`".into() });
            }
            header_seen = true;
            continue;
        }
        let (l, n) = t
            .split_once(',')
            .ok_or_else(|| TomographyError::Parse { line: line_no, message: "expected `projector,count`".into() })?;
        let l = l.trim();
        if product_state(l).is_none() {
            return Err(TomographyError::Parse { line: line_no, message: format!("unknown projector `{l}`") });
        }
        let n: u64 = n
            .trim()
            .parse()
            .map_err(|_| TomographyError::Parse { line: line_no, message: format!("count `{}` is not a non-negative integer", n.trim()) })?;
        labels.push(l.to_string());
        counts.push(n);
    }
    let total_pairs_per_setting = pairs.ok_or(TomographyError::Parse {
        line: 1,
        message: "missing `# total_pairs_per_setting:` header".into(),
    })?;
    if labels.is_empty() {
        return Err(TomographyError::Parse { line: 1, message: "no count rows".into() });
    }
    Ok(CountRecord { labels, counts, total_pairs_per_setting })
}

/// Guess the preset from a record's label set.
pub fn preset_for_labels(labels: &[String]) -> Option<Preset> {
    for p in [Preset::James16, Preset::Full36] {
        let ms = MeasurementSet::new(p);
        let mut a: Vec<&String> = labels.iter().collect();
        let mut b: Vec<&String> = ms.labels().iter().collect();
        a.sort();
        b.sort();
        if a == b {
            return Some(p);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::BellState;

    #[test]
    fn preset_sizes_and_labels() {
        assert_eq!(MeasurementSet::james16().len(), 16);
        let f = MeasurementSet::full36();
        assert_eq!(f.len(), 36);
        let mut l = f.labels().to_vec();
        l.dedup();
        assert_eq!(l.len(), 36);
    }

    #[test]
    fn expected_count_examples() {
        let rho = DensityMatrix2Q::phi_plus();
        let f = MeasurementSet::full36();
        let mu = expected_counts(&rho, &f, 1000.0).unwrap();
        let at = |l: &str| mu[f.labels().iter().position(|x| x == l).unwrap()];
        assert!((at("HH") - 500.0).abs() < 1e-9);
        assert!(at("HV").abs() < 1e-9);
        assert!(at("RR").abs() < 1e-9);
        assert!((at("RL") - 500.0).abs() < 1e-9);
    }

    #[test]
    fn linear_inversion_roundtrip() {
        for ms in [MeasurementSet::james16(), MeasurementSet::full36()] {
            for rho in [DensityMatrix2Q::phi_plus(), DensityMatrix2Q::maximally_mixed(), DensityMatrix2Q::bell(BellState::PsiMinus)] {
                let mu = expected_counts(&rho, &ms, 1e4).unwrap();
                let back = reconstruct_linear_from(&mu, &ms).unwrap();
                assert!((back - rho.matrix()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ms = MeasurementSet::james16();
        let rho = DensityMatrix2Q::mixture(&[(0.7, &DensityMatrix2Q::phi_plus()), (0.3, &DensityMatrix2Q::maximally_mixed())]).unwrap();
        let counts: Vec<f64> = sample_counts(&expected_counts(&rho, &ms, 500.0).unwrap(), 9).into_iter().map(|c| c as f64).collect();
        let obj = Objective::new(&counts, &ms, 500.0);
        let x: Vec<f64> = (0..16).map(|k| 0.3 + 0.05 * k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let (_, g) = obj.eval(&x);
        for k in 0..16 {
            let h = 1e-6;
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fd = (obj.eval(&xp).0 - obj.eval(&xm).0) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * fd.abs().max(1.0), "component {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_zero_safe() {
        let mu = [0.0, 3.0, 1e4];
        assert_eq!(sample_counts(&mu, 5), sample_counts(&mu, 5));
        for s in 0..20 {
            assert_eq!(sample_counts(&mu, s)[0], 0);
        }
    }

    #[test]
    fn mle_recovers_noiseless_bell_state() {
        let ms = MeasurementSet::james16();
        let mu = expected_counts(&DensityMatrix2Q::phi_plus(), &ms, 1e4).unwrap();
        let r = mle_from(&mu, &ms, 1e4, &MleOptions::default()).unwrap();
        assert!(fidelity_phi_plus(&r.rho) >= 1.0 - 1e-8, "{} {} {}", fidelity_phi_plus(&r.rho), r.iterations, r.gradient_norm);
    }

    #[test]
    fn counts_csv_round_trip_and_errors() {
        let ms = MeasurementSet::james16();
        let rec = simulate_record(&DensityMatrix2Q::phi_plus(), &ms, 1e3, 1).unwrap();
        let mut buf = Vec::new();
        write_counts(&mut buf, &rec).unwrap();
        assert_eq!(read_counts(io::Cursor::new(buf)).unwrap(), rec);
        let bad = "# total_pairs_per_setting: 10\nprojector,count\nHH,3\nHX,2\n";
        assert!(matches!(read_counts(io::Cursor::new(bad)), Err(TomographyError::Parse { line: 4, .. })));
        let bad = "# total_pairs_per_setting: 10\nprojector,count\nHH,-3\n";
        assert!(matches!(read_counts(io::Cursor::new(bad)), Err(TomographyError::Parse { line: 3, .. })));
    }
}
