//! End-to-end acceptance checks. Runs as a plain binary and prints one
//! PASS/FAIL line per criterion.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use cascade::farfield::{write_farfield, FarFieldMap};
use cascade::tomography::{error_bars, expected_counts, reconstruct_linear_from, simulate_record};
use cascade::*;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn deg(x: f64) -> f64 {
    x.to_radians()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let n = 100;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t1 = FRAC_PI_2 * i as f64 / (n - 1) as f64;
            let t2 = FRAC_PI_2 * j as f64 / (n - 1) as f64;
            // Common azimuth; the pair state only depends on it through a
            // local rotation.
            let phi = 0.3 + 0.07 * (i + 3 * j) as f64;
            let d1 = Direction::new(t1, phi).map_err(|e| e.to_string())?;
            let d2 = Direction::new(t2, phi).map_err(|e| e.to_string())?;
            let rho = pair_density_at(&PairEmissionSource::AnalyticVacuum, d1, d2).map_err(|e| e.to_string())?;
            let (c1, c2) = (t1.cos(), t2.cos());
            let expect = 2.0 * c1 * c2 / (1.0 + c1 * c1 * c2 * c2);
            worst = worst.max((concurrence(&rho) - expect).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-10, format!("max deviation {worst:.3e}"))?;
    ensure(secs < 10.0, format!("took {secs:.2} s"))?;
    Ok(format!("max |C − closed form| = {worst:.2e} over 100×100, {secs:.2} s"))
}

fn criterion_2() -> Check {
    let model = CascadeModel::vacuum();
    let mut worst: f64 = 0.0;
    for k in 0..=900 {
        let t = deg(k as f64 * 0.1);
        let c2 = t.cos().powi(2);
        let got = dop_at(&model, Direction::new(t, 0.4).map_err(|e| e.to_string())?);
        worst = worst.max((got - t.sin().powi(2) / (1.0 + c2)).abs());
    }
    let at = |d: f64| dop_at(&model, Direction::from_degrees(d, 0.0).unwrap());
    ensure(worst <= 1e-10, format!("max deviation {worst:.3e}"))?;
    ensure(at(0.0).abs() <= 1e-10 && (at(90.0) - 1.0).abs() <= 1e-10 && (at(45.0) - 1.0 / 3.0).abs() <= 1e-10,
        format!("anchors {} {} {}", at(0.0), at(90.0), at(45.0)))?;
    Ok(format!("max |DOP − closed form| = {worst:.2e}; DOP(0°,45°,90°) = {:.3e}, {:.12}, {:.12}", at(0.0), at(45.0), at(90.0)))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let src = PairEmissionSource::AnalyticVacuum;
    let thetas: Vec<f64> = (1..=18).map(|k| deg(5.0 * k as f64)).collect();
    let trap = scan_disc(&src, &thetas, &Integrator::trapezoid(Resolution::new(181, 360).unwrap())).map_err(|e| e.to_string())?;
    let mc = scan_disc(&src, &thetas, &Integrator::monte_carlo(1_000_000, 20_240_601)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    ensure(trap[0].fidelity >= 0.999, format!("fidelity at 5° is {}", trap[0].fidelity))?;
    for w in trap.windows(2) {
        ensure(w[1].fidelity <= w[0].fidelity + 1e-12,
            format!("fidelity rises from {} to {} at θmax={:.0}°", w[0].fidelity, w[1].fidelity, w[1].theta_max.to_degrees()))?;
    }
    for r in &trap {
        ensure(r.warnings.is_empty(), format!("trapezoid warnings: {:?}", r.warnings))?;
    }
    let mut worst_z: f64 = 0.0;
    for (t, m) in trap.iter().zip(&mc) {
        let se = m.std_error.ok_or("Monte-Carlo row without standard errors")?;
        for i in 0..4 {
            for j in 0..4 {
                let d = t.rho.entry(i, j) - m.rho.entry(i, j);
                for (diff, s) in [(d.re, se[(i, j)].re), (d.im, se[(i, j)].im)] {
                    if diff.abs() > 3.0 * s + 1e-12 {
                        return Err(format!(
                            "θmax={:.0}° entry ({i},{j}): |Δ| = {:.3e} > 3σ = {:.3e}",
                            t.theta_max.to_degrees(), diff.abs(), 3.0 * s
                        ));
                    }
                    if s > 0.0 {
                        worst_z = worst_z.max(diff.abs() / s);
                    }
                }
            }
        }
    }
    ensure(secs < 300.0, format!("took {secs:.1} s"))?;
    Ok(format!(
        "F(5°) = {:.6}, F(90°) = {:.6}, non-increasing; max |trapezoid − MC|/σ = {worst_z:.2}; {secs:.1} s",
        trap[0].fidelity, trap[17].fidelity
    ))
}

fn criterion_4() -> Check {
    let src = PairEmissionSource::AnalyticVacuum;
    let thetas: Vec<f64> = (0..=90).map(|k| deg(k as f64)).collect();
    let rows = scan_annulus(&src, &thetas, deg(4.0), &Integrator::trapezoid(Resolution::new(181, 360).unwrap()))
        .map_err(|e| e.to_string())?;
    let first = rows.first().unwrap().concurrence;
    let last = rows.last().unwrap().concurrence;
    ensure(first >= 0.999, format!("C(0°) = {first}"))?;
    ensure(last <= 1e-3, format!("C(90°) = {last}"))?;
    let k = rows.windows(2).position(|w| w[0].concurrence >= 0.5 && w[1].concurrence < 0.5).ok_or("no 0.5 crossing")?;
    let (a, b) = (&rows[k], &rows[k + 1]);
    let cross = a.theta + (a.concurrence - 0.5) / (a.concurrence - b.concurrence) * (b.theta - a.theta);
    let exact = (2.0 - 3f64.sqrt()).sqrt().acos();
    let cross_deg = cross.to_degrees();
    ensure((cross - exact).abs().to_degrees() <= 0.5, format!("crossing at {cross_deg:.3}°"))?;
    Ok(format!("C(0°) = {first:.6}, C(90°) = {last:.2e}, 0.5 crossing at {cross_deg:.3}° (closed form {:.3}°)", exact.to_degrees()))
}

fn criterion_5() -> Check {
    let src = PairEmissionSource::AnalyticVacuum;
    let thetas: Vec<f64> = [10.0, 30.0, 54.0, 90.0].iter().map(|&d| deg(d)).collect();
    let rows = scan_disc(&src, &thetas, &Integrator::trapezoid(Resolution::new(181, 360).unwrap())).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        worst = worst.max(r.decomposition.residual);
    }
    ensure(worst < 1e-6, format!("residual {worst:.3e}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut round: f64 = 0.0;
    for _ in 0..200 {
        let (a, b, c): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
        let s = a + b + c + rng.random::<f64>();
        let w = MixtureWeights::new(a / s, b / s, c / s).map_err(|e| e.to_string())?;
        let back = decompose_mixture(&w.synthesize().map_err(|e| e.to_string())?).weights;
        round = round.max((back.p1 - w.p1).abs()).max((back.p2 - w.p2).abs()).max((back.p3 - w.p3).abs());
    }
    ensure(round <= 1e-12, format!("weight round trip error {round:.3e}"))?;
    Ok(format!("max residual {worst:.2e} over θmax ∈ {{10°,30°,54°,90°}}; weight round trip {round:.1e}"))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let lens = deg(54.0);
    let map = FarFieldMap::from_model(&CascadeModel::vacuum(), 91, 180, lens).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("vacuum.ff");
    write_farfield(std::fs::File::create(&path).map_err(|e| e.to_string())?, &map).map_err(|e| e.to_string())?;
    let ingested = ingest_farfield(&path).map_err(|e| e.to_string())?;
    let sm = stokes_map(&ingested);
    let model = CascadeModel::vacuum();
    let mut dop_err: f64 = 0.0;
    for r in &sm.radial {
        dop_err = dop_err.max((r.dop - dop_at(&model, Direction::new(r.theta, 0.0).unwrap())).abs());
    }
    ensure(dop_err <= 1e-6, format!("DOP profile deviation {dop_err:.3e}"))?;
    let mapped = PairEmissionSource::from_map(ingested).map_err(|e| e.to_string())?;
    let mask = ApertureMask::disc(lens).map_err(|e| e.to_string())?;
    let integ = Integrator::trapezoid(Resolution::new(91, 180).unwrap());
    let a = integrate_pair_density(&mapped, &mask, &mask, &integ).map_err(|e| e.to_string())?;
    let b = integrate_pair_density(&PairEmissionSource::AnalyticVacuum, &mask, &mask, &integ).map_err(|e| e.to_string())?;
    let diff = a.rho.max_abs_diff(&b.rho);
    ensure(diff <= 1e-4, format!("density matrices differ by {diff:.3e}"))?;
    Ok(format!("DOP profile error {dop_err:.2e}, max |Δρ| = {diff:.2e} at θmax = 54°; {:.1} s", start.elapsed().as_secs_f64()))
}

fn random_density(rng: &mut ChaCha8Rng) -> DensityMatrix2Q {
    let g = Matrix4::<C64>::from_fn(|_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    DensityMatrix2Q::from_unnormalized(g * g.adjoint()).unwrap()
}

fn criterion_7() -> Check {
    let ms = MeasurementSet::james16();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let rho = random_density(&mut rng);
        let mu = expected_counts(&rho, &ms, 1e4).map_err(|e| e.to_string())?;
        let back = reconstruct_linear_from(&mu, &ms).map_err(|e| e.to_string())?;
        worst = worst.max((back - rho.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    ensure(worst <= 1e-10, format!("linear round trip error {worst:.3e}"))?;

    let opts = MleOptions::default();
    let phi = DensityMatrix2Q::phi_plus();
    let mut fsum = 0.0;
    for seed in 0..100 {
        let rec = simulate_record(&phi, &ms, 1e4, seed).map_err(|e| e.to_string())?;
        fsum += fidelity_phi_plus(&reconstruct_mle(&rec, &ms, &opts).map_err(|e| e.to_string())?.rho);
    }
    let mean_f = fsum / 100.0;
    ensure(mean_f >= 0.995, format!("mean MLE fidelity {mean_f}"))?;

    let werner = DensityMatrix2Q::mixture(&[(0.8, &phi), (0.2, &DensityMatrix2Q::maximally_mixed())]).map_err(|e| e.to_string())?;
    let bars = |n: f64| {
        let rec = simulate_record(&werner, &ms, n, 11).map_err(|e| e.to_string())?;
        error_bars(&rec, &ms, 200, 13, &opts).map_err(|e| e.to_string())
    };
    let (lo, hi) = (bars(1e3)?, bars(1e5)?);
    let rf = lo.fidelity_std / hi.fidelity_std;
    let rc = lo.concurrence_std / hi.concurrence_std;
    for (name, r) in [("fidelity", rf), ("concurrence", rc)] {
        ensure((r / 10.0 - 1.0).abs() <= 0.2, format!("{name} bar ratio {r:.3}, expected 10 ± 20%"))?;
    }
    Ok(format!(
        "linear round trip {worst:.1e}; mean MLE fidelity {mean_f:.5} over 100 seeds; bar ratio ×100 N: fidelity {rf:.2}, concurrence {rc:.2}"
    ))
}

fn criterion_8() -> Check {
    let src = PairEmissionSource::AnalyticVacuum;
    let integ = Integrator::trapezoid(Resolution::new(181, 360).unwrap());
    let rows = scan_disc(&src, &[deg(1.0), deg(54.0), deg(90.0)], &integ).map_err(|e| e.to_string())?;
    let (axis, lens, full) = (&rows[0], &rows[1], &rows[2]);
    ensure(full.net_dop < 0.1, format!("net DOP {}", full.net_dop))?;
    ensure(lens.net_dop < 0.1, format!("net DOP at 54° {}", lens.net_dop))?;
    ensure(lens.concurrence < axis.concurrence - 0.01,
        format!("C(54°) = {} vs on-axis {}", lens.concurrence, axis.concurrence))?;
    let hv = full.rho.entry(1, 1).re + full.rho.entry(2, 2).re;
    ensure(hv > 1e-3, format!("HV+VH population {hv:.3e}"))?;
    Ok(format!(
        "net DOP {:.1e} (90°), {:.1e} (54°); C: {:.4} on axis, {:.4} at 54°; HV+VH weight at 90° = {hv:.4}",
        full.net_dop, lens.net_dop, axis.concurrence, lens.concurrence
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 8] = [
        ("analytic concurrence curve", criterion_1),
        ("DOP closed form", criterion_2),
        ("aperture trend, trapezoid vs Monte Carlo", criterion_3),
        ("annulus trend and 0.5 crossing", criterion_4),
        ("mixture family decomposition", criterion_5),
        ("far-field pipeline equivalence", criterion_6),
        ("tomography", criterion_7),
        ("qualitative anchors", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(f) {
            Ok(Ok(msg)) => println!("acceptance {} {name}: PASS ({msg})", k + 1),
            Ok(Err(msg)) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({msg})", k + 1);
            }
            Err(_) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL (panicked)", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
