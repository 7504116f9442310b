//! Command-line scans over collection apertures, emitting CSV and JSON.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cascade::density::{read_density_matrix, write_density_matrix, BellState};
use cascade::entangle::{MixtureDecomposition, DEFAULT_ANNULUS_WIDTH_DEG};
use cascade::farfield::FarFieldMap;
use cascade::tomography::{
    error_bars, expected_counts, preset_for_labels, read_counts, reconstruct_linear, simulate_record, write_counts,
    BootstrapReport, TomographyError,
};
use cascade::*;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Matrix4;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "cascade", version, about = "Wavevector-resolved polarization entanglement of radiative cascades")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Intensity and DOP maps with radial profiles.
    Dopmap(SourceArgs),
    /// Concurrence and fidelity versus annulus angle.
    ScanTheta(ScanThetaArgs),
    /// Figures of merit and mixture weights versus disc half-angle.
    ScanAperture(ScanApertureArgs),
    /// Integrated two-photon density matrix for one mask pair.
    PairDensity(PairDensityArgs),
    /// Decompose a density-matrix file into the aperture mixture family.
    Decompose(DecomposeArgs),
    /// Simulated tomography.
    #[command(subcommand)]
    Tomo(TomoCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Vacuum,
    Atomic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PairingArg {
    Independent,
    Colocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingArg {
    Intensity,
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    James16,
    Full36,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::James16 => Preset::James16,
            PresetArg::Full36 => Preset::Full36,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SourceArgs {
    /// Analytic emitter model (ignored when --farfield is given).
    #[arg(long, value_enum, default_value = "vacuum")]
    pub model: ModelArg,
    /// `farfield v1` map for the first photon (and the second unless --farfield2).
    #[arg(long)]
    pub farfield: Option<PathBuf>,
    #[arg(long, requires = "farfield")]
    pub farfield2: Option<PathBuf>,
    /// Quadrature resolution `nθxnφ`.
    #[arg(long, default_value = "181x360")]
    pub grid: String,
    /// `trapezoid` or `mc:<samples>`.
    #[arg(long, default_value = "trapezoid")]
    pub integrator: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Collection-lens half-angle in degrees.
    #[arg(long, default_value_t = 54.0)]
    pub lens_theta_max: f64,
    /// Photon pairing across the two apertures (scan default when omitted).
    #[arg(long, value_enum)]
    pub pairing: Option<PairingArg>,
    #[arg(long, value_enum, default_value = "intensity")]
    pub weighting: WeightingArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanThetaArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    /// Annulus centres in degrees: `a,b,c` or `start:stop:step`.
    #[arg(long, default_value = "0:90:1")]
    pub thetas: String,
    /// Full annulus width in degrees.
    #[arg(long, default_value_t = DEFAULT_ANNULUS_WIDTH_DEG)]
    pub width: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScanApertureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    /// Disc half-angles in degrees: `a,b,c` or `start:stop:step`.
    #[arg(long, default_value = "5:90:5")]
    pub theta_max: String,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PairDensityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub source: SourceArgs,
    /// `disc:<θmax°>`, `annulus:<θ°>:<Δθ°>` or `pinhole:<x>:<y>:<r>`.
    #[arg(long, default_value = "disc:54")]
    pub mask: String,
    /// Mask for the second photon (defaults to --mask).
    #[arg(long)]
    pub mask2: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecomposeArgs {
    /// Density-matrix file.
    #[arg(long)]
    pub rho: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum TomoCommand {
    /// Poisson coincidence counts for a state.
    Simulate(TomoSimulateArgs),
    /// Reconstruct a state from a counts file.
    Reconstruct(TomoReconstructArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TomoSimulateArgs {
    /// Density-matrix file; overrides --state.
    #[arg(long)]
    pub rho: Option<PathBuf>,
    /// `phi_plus`, `phi_minus`, `psi_plus`, `psi_minus`, `mixed` or `werner:<p>`.
    #[arg(long, default_value = "phi_plus")]
    pub state: String,
    /// Pairs per analyzer setting.
    #[arg(long, default_value_t = 10_000.0)]
    pub pairs: f64,
    #[arg(long, value_enum, default_value = "james16")]
    pub preset: PresetArg,
    /// Write rounded expectation values instead of Poisson draws.
    #[arg(long)]
    pub noiseless: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    Mle,
    Linear,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TomoReconstructArgs {
    #[arg(long)]
    pub counts: PathBuf,
    #[arg(long, value_enum, default_value = "mle")]
    pub method: MethodArg,
    /// Bootstrap replicates for error bars (0 disables).
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Result of a successful command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Quadrature convergence warnings; a non-empty list means exit code 2.
    pub warnings: Vec<String>,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Dopmap(a) => cmd_dopmap(&a),
        Command::ScanTheta(a) => cmd_scan_theta(&a),
        Command::ScanAperture(a) => cmd_scan_aperture(&a),
        Command::PairDensity(a) => cmd_pair_density(&a),
        Command::Decompose(a) => cmd_decompose(&a),
        Command::Tomo(TomoCommand::Simulate(a)) => cmd_tomo_simulate(&a),
        Command::Tomo(TomoCommand::Reconstruct(a)) => cmd_tomo_reconstruct(&a),
    }
}

/// Twelve significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.11e}")
}

/// Parse `a,b,c` or an inclusive `start:stop:step` range (degrees).
pub fn parse_angle_list(s: &str) -> Result<Vec<f64>> {
    let bad = |p: &str| anyhow!("`{p}` in angle list `{s}` is not a number");
    if s.contains(':') {
        let p: Vec<&str> = s.split(':').collect();
        if p.len() != 3 {
            bail!("angle range `{s}` must be start:stop:step");
        }
        let v: Vec<f64> = p.iter().map(|x| x.trim().parse::<f64>().map_err(|_| bad(x))).collect::<Result<_>>()?;
        if !(v[2] > 0.0) || v[1] < v[0] {
            bail!("angle range `{s}` needs a positive step and stop ≥ start");
        }
        let n = ((v[1] - v[0]) / v[2] + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| v[0] + k as f64 * v[2]).collect());
    }
    let v: Vec<f64> = s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad(x))).collect::<Result<_>>()?;
    if v.is_empty() {
        bail!("empty angle list");
    }
    Ok(v)
}

fn lens(a: &SourceArgs) -> Result<f64> {
    if !(a.lens_theta_max > 0.0 && a.lens_theta_max <= 90.0) {
        bail!("--lens-theta-max must be in (0, 90] degrees (got {})", a.lens_theta_max);
    }
    Ok(a.lens_theta_max.to_radians())
}

fn model(m: ModelArg) -> CascadeModel {
    match m {
        ModelArg::Vacuum => CascadeModel::vacuum(),
        ModelArg::Atomic => CascadeModel::atomic(),
    }
}

fn load_map(path: &Path) -> Result<FarFieldMap> {
    ingest_farfield(path).with_context(|| format!("reading far-field map {}", path.display()))
}

fn check_lens(map: &FarFieldMap, a: &SourceArgs, path: &Path) -> Result<()> {
    let l = lens(a)?;
    if (map.theta_lens() - l).abs() > 1e-9 {
        bail!(
            "{} covers θ ≤ {}°, but --lens-theta-max is {}°",
            path.display(),
            map.theta_lens().to_degrees(),
            a.lens_theta_max
        );
    }
    Ok(())
}

fn source(a: &SourceArgs) -> Result<PairEmissionSource> {
    let Some(f1) = &a.farfield else {
        return Ok(PairEmissionSource::from_model(&model(a.model)));
    };
    let m1 = load_map(f1)?;
    check_lens(&m1, a, f1)?;
    let src = match &a.farfield2 {
        Some(f2) => {
            let m2 = load_map(f2)?;
            check_lens(&m2, a, f2)?;
            PairEmissionSource::from_maps(m1, m2)?
        }
        None => PairEmissionSource::from_map(m1)?,
    };
    Ok(src)
}

fn integrator(a: &SourceArgs) -> Result<Integrator> {
    let res = Resolution::parse(&a.grid)?;
    let base = match a.integrator.trim() {
        "trapezoid" => Integrator::trapezoid(res),
        s => {
            let n = s
                .strip_prefix("mc:")
                .and_then(|n| n.parse::<usize>().ok())
                .ok_or_else(|| anyhow!("--integrator must be `trapezoid` or `mc:<samples>` (got `{s}`)"))?;
            Integrator { resolution: res, ..Integrator::monte_carlo(n, a.seed) }
        }
    };
    let base = match a.weighting {
        WeightingArg::Intensity => base.with_weighting(PairWeighting::IntensityProduct),
        WeightingArg::Amplitude => base.with_weighting(PairWeighting::Amplitude),
    };
    Ok(match a.pairing {
        None => base,
        Some(PairingArg::Independent) => base.with_pairing(Pairing::Independent),
        Some(PairingArg::Colocated) => base.with_pairing(Pairing::Colocated),
    })
}

/// Resolved configuration written next to every output.
#[derive(Debug, Serialize)]
struct RunConfig<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    #[serde(flatten)]
    args: &'a T,
    resolved: Value,
}

struct Output {
    dir: PathBuf,
    config: String,
    files: Vec<PathBuf>,
}

impl Output {
    fn new<T: Serialize>(dir: &Path, command: &str, args: &T, resolved: Value) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        let cfg = RunConfig { command, version: env!("CARGO_PKG_VERSION"), args, resolved };
        let config = serde_json::to_string(&cfg)?;
        let mut out = Self { dir: dir.to_path_buf(), config, files: Vec::new() };
        let pretty = serde_json::to_string_pretty(&cfg)? + "\n";
        out.write("run_config.json", |w| Ok(w.write_all(pretty.as_bytes())?))?;
        Ok(out)
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let config = self.config.clone();
        self.write(name, |w| {
            writeln!(w, "# run_config: {config}")?;
            writeln!(w, "{}", header.join(","))?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            Ok(())
        })
    }

    fn json(&mut self, name: &str, v: &Value) -> Result<()> {
        let mut v = v.clone();
        if let Value::Object(m) = &mut v {
            m.insert("run_config".into(), serde_json::from_str(&self.config)?);
        }
        let text = serde_json::to_string_pretty(&v)? + "\n";
        self.write(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    fn finish(self, warnings: Vec<String>) -> Outcome {
        Outcome { files: self.files, warnings }
    }
}

fn resolved_source(a: &SourceArgs, integ: &Integrator) -> Value {
    json!({
        "source": match &a.farfield {
            Some(f) => format!("farfield:{}{}", f.display(), a.farfield2.as_ref().map(|g| format!(",{}", g.display())).unwrap_or_default()),
            None => format!("{:?}", a.model).to_lowercase(),
        },
        "integrator": format!("{:?}", integ.scheme),
        "resolution": integ.resolution.to_string(),
        "weighting": format!("{:?}", integ.weighting),
        "convergence_check": integ.check_convergence,
        "seed": a.seed,
    })
}

fn matrix_json(m: &Matrix4<C64>) -> Value {
    let part = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> { (0..4).map(|i| (0..4).map(|j| f(&m[(i, j)])).collect()).collect() };
    json!({ "basis": ["HH", "HV", "VH", "VV"], "re": part(|z| z.re), "im": part(|z| z.im) })
}

fn decomposition_json(d: &MixtureDecomposition) -> Value {
    json!({
        "phi_plus": d.weights.phi_plus_weight(),
        "p1_hh_vv": d.weights.p1,
        "p2_psi_plus": d.weights.p2,
        "p3_hv_vh": d.weights.p3,
        "residual": d.residual,
        "in_family": d.in_family,
    })
}

fn cmd_dopmap(a: &SourceArgs) -> Result<Outcome> {
    let res = Resolution::parse(&a.grid)?;
    let l = lens(a)?;
    let (map, label) = match &a.farfield {
        Some(f) => (load_map(f)?, f.display().to_string()),
        None => (FarFieldMap::from_model(&model(a.model), res.n_theta, res.n_phi, l)?, format!("{:?}", a.model).to_lowercase()),
    };
    let sm = stokes_map(&map);
    let resolved = json!({
        "source": label,
        "n_theta": sm.n_theta,
        "n_phi": sm.n_phi,
        "theta_lens_deg": map.theta_lens().to_degrees(),
        "seed": a.seed,
    });
    let mut out = Output::new(&a.out, "dopmap", a, resolved)?;
    let mut inten = Vec::with_capacity(sm.n_theta * sm.n_phi);
    let mut dops = Vec::with_capacity(sm.n_theta * sm.n_phi);
    for i in 0..sm.n_theta {
        for j in 0..sm.n_phi {
            let (s, d) = sm.at(i, j);
            let (t, p) = (num(sm.theta[i].to_degrees()), num(sm.phi[j].to_degrees()));
            inten.push(vec![t.clone(), p.clone(), num(s.s0)]);
            dops.push(vec![t, p, num(d)]);
        }
    }
    out.csv("intensity.csv", &["theta_deg", "phi_deg", "intensity"], &inten)?;
    out.csv("dop.csv", &["theta_deg", "phi_deg", "dop"], &dops)?;
    let radial: Vec<Vec<String>> =
        sm.radial.iter().map(|r| vec![num(r.theta.to_degrees()), num(r.intensity), num(r.dop)]).collect();
    out.csv("radial_profiles.csv", &["theta_deg", "intensity", "dop"], &radial)?;
    Ok(out.finish(Vec::new()))
}

fn cmd_scan_theta(a: &ScanThetaArgs) -> Result<Outcome> {
    let src = source(&a.source)?;
    let integ = integrator(&a.source)?;
    let thetas: Vec<f64> = parse_angle_list(&a.thetas)?.into_iter().map(f64::to_radians).collect();
    let rows = scan_annulus(&src, &thetas, a.width.to_radians(), &integ)?;
    let mut resolved = resolved_source(&a.source, &integ);
    resolved["pairing"] = json!(format!("{:?}", integ.pairing.unwrap_or(Pairing::Colocated)));
    let mut out = Output::new(&a.source.out, "scan-theta", a, resolved)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.theta.to_degrees()),
                num(r.concurrence),
                num(r.fidelity),
                num(r.purity),
                num(r.dop),
                num(r.intensity),
            ]
        })
        .collect();
    out.csv("scan_theta.csv", &["theta_deg", "concurrence", "fidelity", "purity", "dop", "intensity"], &table)?;
    let warnings: Vec<String> = rows.iter().flat_map(|r| r.warnings.clone()).collect();
    let report = json!({
        "rows": rows.iter().map(|r| json!({
            "theta_deg": r.theta.to_degrees(),
            "concurrence": r.concurrence,
            "fidelity": r.fidelity,
            "purity": r.purity,
            "dop": r.dop,
            "intensity": r.intensity,
            "rho": matrix_json(r.rho.matrix()),
            "std_error": r.std_error.as_ref().map(matrix_json),
        })).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    out.json("scan_theta.json", &report)?;
    Ok(out.finish(warnings))
}

fn cmd_scan_aperture(a: &ScanApertureArgs) -> Result<Outcome> {
    let src = source(&a.source)?;
    let integ = integrator(&a.source)?;
    let thetas: Vec<f64> = parse_angle_list(&a.theta_max)?.into_iter().map(f64::to_radians).collect();
    let rows = scan_disc(&src, &thetas, &integ)?;
    let mut resolved = resolved_source(&a.source, &integ);
    resolved["pairing"] = json!(format!("{:?}", integ.pairing.unwrap_or(Pairing::Independent)));
    let mut out = Output::new(&a.source.out, "scan-aperture", a, resolved)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let w = r.decomposition.weights;
            vec![
                num(r.theta_max.to_degrees()),
                num(r.fidelity),
                num(r.concurrence),
                num(r.purity),
                num(r.net_dop),
                num(w.phi_plus_weight()),
                num(w.p1),
                num(w.p2),
                num(w.p3),
                num(r.decomposition.residual),
            ]
        })
        .collect();
    out.csv(
        "scan_aperture.csv",
        &["theta_max_deg", "fidelity", "concurrence", "purity", "net_dop", "w_phi_plus", "p1", "p2", "p3", "residual"],
        &table,
    )?;
    let warnings: Vec<String> = rows.iter().flat_map(|r| r.warnings.clone()).collect();
    let report = json!({
        "rows": rows.iter().map(|r| json!({
            "theta_max_deg": r.theta_max.to_degrees(),
            "fidelity": r.fidelity,
            "concurrence": r.concurrence,
            "purity": r.purity,
            "net_dop": r.net_dop,
            "decomposition": decomposition_json(&r.decomposition),
            "rho": matrix_json(r.rho.matrix()),
            "std_error": r.std_error.as_ref().map(matrix_json),
        })).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    out.json("scan_aperture.json", &report)?;
    Ok(out.finish(warnings))
}

fn cmd_pair_density(a: &PairDensityArgs) -> Result<Outcome> {
    let src = source(&a.source)?;
    let integ = integrator(&a.source)?;
    let l = lens(&a.source)?;
    let m1 = ApertureMask::parse(&a.mask, l)?;
    let m2 = match &a.mask2 {
        Some(s) => ApertureMask::parse(s, l)?,
        None => m1,
    };
    let r = integrate_pair_density(&src, &m1, &m2, &integ)?;
    let mut resolved = resolved_source(&a.source, &integ);
    resolved["pairing"] = json!(format!("{:?}", integ.pairing.unwrap_or(Pairing::Independent)));
    resolved["mask1"] = json!(m1.to_string());
    resolved["mask2"] = json!(m2.to_string());
    let mut out = Output::new(&a.source.out, "pair-density", a, resolved)?;
    let config = out.config.clone();
    out.write("rho.txt", |w| Ok(write_density_matrix(w, &r.rho, &config)?))?;
    let report = json!({
        "rho": matrix_json(r.rho.matrix()),
        "std_error": r.std_error.as_ref().map(matrix_json),
        "concurrence": concurrence(&r.rho),
        "fidelity": fidelity_phi_plus(&r.rho),
        "purity": purity(&r.rho),
        "decomposition": decomposition_json(&decompose_mixture(&r.rho)),
        "warnings": r.warnings,
    });
    out.json("pair_density.json", &report)?;
    Ok(out.finish(r.warnings))
}

fn read_rho(path: &Path) -> Result<DensityMatrix2Q> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_density_matrix(BufReader::new(f)).with_context(|| format!("reading density matrix {}", path.display()))
}

fn cmd_decompose(a: &DecomposeArgs) -> Result<Outcome> {
    let rho = read_rho(&a.rho)?;
    let d = decompose_mixture(&rho);
    let mut out = Output::new(&a.out, "decompose", a, json!({}))?;
    out.json("decomposition.json", &json!({ "decomposition": decomposition_json(&d), "concurrence": concurrence(&rho), "fidelity": fidelity_phi_plus(&rho) }))?;
    Ok(out.finish(Vec::new()))
}

/// Named test states for `tomo simulate`.
pub fn named_state(s: &str) -> Result<DensityMatrix2Q> {
    Ok(match s.trim() {
        "phi_plus" => DensityMatrix2Q::bell(BellState::PhiPlus),
        "phi_minus" => DensityMatrix2Q::bell(BellState::PhiMinus),
        "psi_plus" => DensityMatrix2Q::bell(BellState::PsiPlus),
        "psi_minus" => DensityMatrix2Q::bell(BellState::PsiMinus),
        "mixed" => DensityMatrix2Q::maximally_mixed(),
        other => {
            let p: f64 = other
                .strip_prefix("werner:")
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| anyhow!("unknown state `{other}`"))?;
            if !(0.0..=1.0).contains(&p) {
                bail!("Werner weight must lie in [0, 1] (got {p})");
            }
            DensityMatrix2Q::mixture(&[(p, &DensityMatrix2Q::phi_plus()), (1.0 - p, &DensityMatrix2Q::maximally_mixed())])?
        }
    })
}

fn cmd_tomo_simulate(a: &TomoSimulateArgs) -> Result<Outcome> {
    let rho = match &a.rho {
        Some(p) => read_rho(p)?,
        None => named_state(&a.state)?,
    };
    let ms = MeasurementSet::new(a.preset.into());
    let rec = if a.noiseless {
        let mu = expected_counts(&rho, &ms, a.pairs)?;
        CountRecord { labels: ms.labels().to_vec(), counts: mu.iter().map(|m| m.round() as u64).collect(), total_pairs_per_setting: a.pairs }
    } else {
        simulate_record(&rho, &ms, a.pairs, a.seed)?
    };
    let mut out = Output::new(&a.out, "tomo simulate", a, json!({ "preset": ms.preset.to_string(), "seed": a.seed }))?;
    out.write("counts.csv", |w| Ok(write_counts(w, &rec)?))?;
    let config = out.config.clone();
    out.write("true_rho.txt", |w| Ok(write_density_matrix(w, &rho, &config)?))?;
    Ok(out.finish(Vec::new()))
}

fn cmd_tomo_reconstruct(a: &TomoReconstructArgs) -> Result<Outcome> {
    let f = File::open(&a.counts).with_context(|| format!("opening {}", a.counts.display()))?;
    let raw = read_counts(BufReader::new(f)).with_context(|| format!("reading counts {}", a.counts.display()))?;
    let preset = preset_for_labels(&raw.labels)
        .ok_or_else(|| anyhow!("{}: projector labels match neither james16 nor full36", a.counts.display()))?;
    let ms = MeasurementSet::new(preset);
    let rec = raw.aligned(&ms)?;
    let opts = MleOptions::default();
    let (rho, meta) = match a.method {
        MethodArg::Linear => {
            let m = reconstruct_linear(&rec, &ms)?;
            let min_eig = tomography::min_eigenvalue(&m);
            (tomography::project_psd(&m)?, json!({ "method": "linear", "min_eigenvalue_before_projection": min_eig }))
        }
        MethodArg::Mle => match reconstruct_mle(&rec, &ms, &opts) {
            Ok(r) => (
                r.rho,
                json!({ "method": "mle", "converged": true, "iterations": r.iterations, "log_likelihood": r.log_likelihood, "gradient_norm": r.gradient_norm }),
            ),
            Err(TomographyError::NotConverged { iterations, .. }) => {
                bail!("maximum likelihood did not converge after {iterations} iterations")
            }
            Err(e) => return Err(e.into()),
        },
    };
    let bars: Option<BootstrapReport> =
        if a.bootstrap > 0 { Some(error_bars(&rec, &ms, a.bootstrap, a.seed, &opts)?) } else { None };
    let mut out = Output::new(&a.out, "tomo reconstruct", a, json!({ "preset": preset.to_string(), "seed": a.seed }))?;
    let config = out.config.clone();
    out.write("rho.txt", |w| Ok(write_density_matrix(w, &rho, &config)?))?;
    let report = json!({
        "rho": matrix_json(rho.matrix()),
        "fidelity": fidelity_phi_plus(&rho),
        "concurrence": concurrence(&rho),
        "purity": purity(&rho),
        "decomposition": decomposition_json(&decompose_mixture(&rho)),
        "error_bars": bars.as_ref().map(|b| json!({
            "fidelity_std": b.fidelity_std,
            "concurrence_std": b.concurrence_std,
            "purity_std": b.purity_std,
            "replicates": b.replicates,
            "failed_replicates": b.failed,
        })),
        "convergence": meta,
    });
    out.json("reconstruction.json", &report)?;
    Ok(out.finish(Vec::new()))
}
