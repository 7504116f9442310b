use cascade::tomography::{error_bars, read_counts, simulate_record, write_counts, TomographyError};
use cascade::*;

fn werner(p: f64) -> DensityMatrix2Q {
    DensityMatrix2Q::mixture(&[(p, &DensityMatrix2Q::phi_plus()), (1.0 - p, &DensityMatrix2Q::maximally_mixed())]).unwrap()
}

#[test]
fn bootstrap_is_reproducible_and_positive() {
    let ms = MeasurementSet::james16();
    let rec = simulate_record(&werner(0.9), &ms, 2000.0, 3).unwrap();
    let opts = MleOptions::default();
    let a = error_bars(&rec, &ms, 60, 42, &opts).unwrap();
    let b = error_bars(&rec, &ms, 60, 42, &opts).unwrap();
    assert_eq!(a, b);
    assert!(a.fidelity_std > 0.0 && a.concurrence_std > 0.0);
    assert!(a.failed.is_empty());
    assert_ne!(a, error_bars(&rec, &ms, 60, 43, &opts).unwrap());
}

#[test]
fn bars_vanish_without_noise() {
    let ms = MeasurementSet::james16();
    let rec = simulate_record(&werner(0.9), &ms, 1e11, 1).unwrap();
    let bars = error_bars(&rec, &ms, 50, 2, &MleOptions::default()).unwrap();
    assert!(bars.fidelity_std < 1e-4 && bars.concurrence_std < 1e-4, "{bars:?}");
}

#[test]
fn bootstrap_needs_enough_replicates() {
    let ms = MeasurementSet::james16();
    let rec = simulate_record(&werner(0.9), &ms, 100.0, 1).unwrap();
    assert!(matches!(error_bars(&rec, &ms, 10, 0, &MleOptions::default()), Err(TomographyError::TooFewReplicates(10))));
}

#[test]
fn iteration_cap_returns_best_iterate() {
    let ms = MeasurementSet::james16();
    let rec = simulate_record(&DensityMatrix2Q::phi_plus(), &ms, 1e4, 5).unwrap();
    let opts = MleOptions { max_iterations: 2, ..MleOptions::default() };
    match reconstruct_mle(&rec, &ms, &opts) {
        Err(TomographyError::NotConverged { iterations, best, .. }) => {
            assert_eq!(iterations, 2);
            assert!(fidelity_phi_plus(&best) > 0.9);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn poisson_counts_reconstruct_near_truth() {
    let ms = MeasurementSet::james16();
    let truth = DensityMatrix2Q::phi_plus();
    let mut dist = 0.0;
    for seed in 0..100 {
        let rec = simulate_record(&truth, &ms, 1e4, seed).unwrap();
        let lin = tomography::reconstruct_linear(&rec, &ms).unwrap();
        dist += (lin - truth.matrix()).norm();
    }
    assert!(dist / 100.0 < 0.05, "mean Frobenius distance {}", dist / 100.0);
}

#[test]
fn full36_reconstruction_and_file_round_trip() {
    let ms = MeasurementSet::full36();
    let rec = simulate_record(&werner(0.7), &ms, 5000.0, 8).unwrap();
    let mut buf = Vec::new();
    write_counts(&mut buf, &rec).unwrap();
    let back = read_counts(std::io::Cursor::new(buf)).unwrap();
    let r = reconstruct_mle(&back, &ms, &MleOptions::default()).unwrap();
    assert!(r.rho.frobenius_distance(&werner(0.7)) < 0.05);
}

#[test]
fn reconstructed_aperture_state_keeps_mixture_weights() {
    let src = PairEmissionSource::AnalyticVacuum;
    let mask = ApertureMask::disc_degrees(54.0).unwrap();
    let rho = integrate_pair_density(&src, &mask, &mask, &Integrator::trapezoid(Resolution::new(91, 180).unwrap())).unwrap().rho;
    let truth = decompose_mixture(&rho).weights;
    let ms = MeasurementSet::james16();
    let est: Vec<MixtureWeights> = (0..30)
        .map(|s| {
            let rec = simulate_record(&rho, &ms, 1e5, s).unwrap();
            decompose_mixture(&reconstruct_mle(&rec, &ms, &MleOptions::default()).unwrap().rho).weights
        })
        .collect();
    for (name, f) in [("p1", (|w: &MixtureWeights| w.p1) as fn(&MixtureWeights) -> f64), ("p2", |w| w.p2), ("p3", |w| w.p3)] {
        let xs: Vec<f64> = est.iter().map(f).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        // Error bar of a single reconstruction, from the spread over seeds.
        assert!((mean - f(&truth)).abs() < 2.0 * sd, "{name}: {mean} ± {sd} vs {}", f(&truth));
    }
}
