use approx::assert_abs_diff_eq;
use coupler_core::noisemod::{
    coherence_limit, effective_times, fit_flux_noise, flux_noise_dephasing, hybrid_rates,
    ramsey_envelope, CoherenceCurves, DephasingKind, FluxNoiseModel, LimitConvention,
    ModeCoherence, NoiseError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn envelope_starts_at_the_oscillation_amplitude() {
    let m = ModeCoherence::from_times(14.0, 67.0, 17.0).unwrap();
    assert_abs_diff_eq!(ramsey_envelope(0.0, 0.7, &m), 0.7, epsilon = 1e-15);
}

#[test]
fn envelope_with_only_relaxation() {
    let m = ModeCoherence::from_times(14.0, f64::INFINITY, f64::INFINITY).unwrap();
    assert_abs_diff_eq!(
        ramsey_envelope(10.0, 1.0, &m),
        (-10.0_f64 / 28.0).exp(),
        epsilon = 1e-15
    );
}

#[test]
fn envelope_combines_exponential_and_gaussian_decay() {
    // exp(-t/2T1 - t/Tphi1 - (t/Tphi2)^2) at t = 10 us
    let m = ModeCoherence::from_times(14.0, 67.0, 17.0).unwrap();
    assert_abs_diff_eq!(
        ramsey_envelope(10.0, 1.0, &m),
        0.426382968388554,
        epsilon = 1e-14
    );
    assert_abs_diff_eq!(
        ramsey_envelope(10.0, 0.5, &m),
        0.5 * 0.426382968388554,
        epsilon = 1e-14
    );
}

#[test]
fn hybridization_is_identity_at_one_hot_participation() {
    let modes = [
        ModeCoherence::from_times(14.0, 67.0, 17.0).unwrap(),
        ModeCoherence::from_times(9.0, 30.0, 5.0).unwrap(),
        ModeCoherence::from_times(43.0, 43.0, 6.0).unwrap(),
    ];
    for k in 0..3 {
        let mut p = [0.0; 3];
        p[k] = 1.0;
        let out = hybrid_rates(&p, &modes).unwrap();
        let (a, b, c) = out.rates();
        let (x, y, z) = modes[k].rates();
        assert_abs_diff_eq!(a, x, epsilon = 1e-15);
        assert_abs_diff_eq!(b, y, epsilon = 1e-15);
        assert_abs_diff_eq!(c, z, epsilon = 1e-15);
    }
}

#[test]
fn equal_split_keeps_linear_rates_but_quadratures_gaussian_ones() {
    let r = 0.02;
    let m = ModeCoherence::from_rates(r, r, r).unwrap();
    let modes = [m, ModeCoherence::from_rates(0.0, 0.0, 0.0).unwrap(), m];
    let out = hybrid_rates(&[0.5, 0.0, 0.5], &modes).unwrap();
    let (g1, gp1, gp2) = out.rates();
    assert_abs_diff_eq!(g1, r, epsilon = 1e-15);
    assert_abs_diff_eq!(gp1, r, epsilon = 1e-15);
    assert_abs_diff_eq!(gp2, 0.014142135623731, epsilon = 1e-14);
}

#[test]
fn lossless_modes_stay_lossless() {
    let zero = ModeCoherence::from_rates(0.0, 0.0, 0.0).unwrap();
    let out = hybrid_rates(&[0.3, 0.4, 0.3], &[zero, zero, zero]).unwrap();
    let (g1, gp1, gp2) = out.rates();
    assert_eq!((g1, gp1, gp2), (0.0, 0.0, 0.0));
    assert!(out.t1_us().is_infinite());
}

#[test]
fn unnormalized_participation_is_rejected() {
    let m = ModeCoherence::from_rates(0.1, 0.1, 0.1).unwrap();
    match hybrid_rates(&[0.5, 0.0, 0.4], &[m, m, m]) {
        Err(NoiseError::BadParticipation { .. }) => {}
        other => panic!("expected BadParticipation, got {other:?}"),
    }
}

#[test]
fn echo_dephasing_from_flux_noise_amplitude() {
    // sqrt(A ln 2) |dw/dPhi| with sqrt(A) = 21.4 uPhi0 and a 1 GHz/Phi0 slope
    let model = FluxNoiseModel::new(21.4, 0.0);
    let rate = flux_noise_dephasing(1.0, &model, DephasingKind::Echo);
    assert_abs_diff_eq!(rate, 0.111945430865364, epsilon = 1e-12);
    assert_abs_diff_eq!(rate, 0.112, epsilon = 1e-3);

    // zero slope leaves only the offset, and the noise term is linear
    let off = FluxNoiseModel::new(21.4, -0.132);
    assert_abs_diff_eq!(
        flux_noise_dephasing(0.0, &off, DephasingKind::Echo),
        -0.132,
        epsilon = 1e-15
    );
    let one = flux_noise_dephasing(1.0, &off, DephasingKind::Echo) + 0.132;
    let two = flux_noise_dephasing(2.0, &off, DephasingKind::Echo) + 0.132;
    assert_abs_diff_eq!(two, 2.0 * one, epsilon = 1e-12);
}

#[test]
fn ramsey_dephasing_uses_the_linear_coefficient() {
    let model = FluxNoiseModel::new(21.4, 0.0);
    assert_abs_diff_eq!(model.b_uphi0, 53.0, epsilon = 1e-12);
    let rate = flux_noise_dephasing(1.0, &model, DephasingKind::Ramsey);
    assert_abs_diff_eq!(rate, 0.333008821280518, epsilon = 1e-12);
    let custom = model.with_b(26.5);
    assert_abs_diff_eq!(
        flux_noise_dephasing(1.0, &custom, DephasingKind::Ramsey),
        0.5 * 0.333008821280518,
        epsilon = 1e-12
    );
}

#[test]
fn noiseless_line_fit_recovers_the_model_exactly() {
    let truth = FluxNoiseModel::new(21.4, -0.132);
    let points: Vec<(f64, f64)> = [0.2, 0.5, 0.9, 1.4, 2.0, 2.7]
        .iter()
        .map(|&s| (s, flux_noise_dephasing(s, &truth, DephasingKind::Echo)))
        .collect();
    let fit = fit_flux_noise(&points).unwrap();
    assert_abs_diff_eq!(fit.model.sqrt_a_uphi0, 21.4, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.model.offset_per_us, -0.132, epsilon = 1e-9);
    assert!(fit.sigma_sqrt_a < 1e-9);
    assert!(fit.sigma_offset < 1e-9);
}

#[test]
fn degenerate_fits_are_rejected() {
    match fit_flux_noise(&[(1.0, 0.1), (2.0, 0.2)]) {
        Err(NoiseError::InsufficientData { .. }) => {}
        other => panic!("expected InsufficientData, got {other:?}"),
    }
    match fit_flux_noise(&[(1.0, 0.1), (1.0, 0.2), (1.0, 0.3)]) {
        Err(NoiseError::DegenerateFit) => {}
        other => panic!("expected DegenerateFit, got {other:?}"),
    }
}

#[test]
fn noisy_fit_recovers_the_amplitude_within_three_sigma() {
    let truth = FluxNoiseModel::new(21.4, -0.132);
    let mut rng = ChaCha8Rng::seed_from_u64(417);
    let gauss = |rng: &mut ChaCha8Rng| {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let points: Vec<(f64, f64)> = (0..50)
        .map(|i| {
            let s = 0.2 + 2.8 * i as f64 / 49.0;
            let clean = flux_noise_dephasing(s, &truth, DephasingKind::Echo);
            (s, clean * (1.0 + 0.05 * gauss(&mut rng)))
        })
        .collect();
    let fit = fit_flux_noise(&points).unwrap();
    assert!(
        (fit.model.sqrt_a_uphi0 - 21.4).abs() <= 3.0 * fit.sigma_sqrt_a,
        "sqrt(A) = {} +- {}",
        fit.model.sqrt_a_uphi0,
        fit.sigma_sqrt_a
    );
}

#[test]
fn constant_rate_curves_give_the_inverse_rate() {
    let curves = CoherenceCurves::from_rate_rows(&[
        (3.0, 0.05, 0.02, 0.1),
        (4.0, 0.05, 0.02, 0.1),
    ])
    .unwrap();
    let traj: Vec<f64> = (0..200).map(|i| 3.0 + i as f64 / 199.0).collect();
    let (t1, tp1, tp2) = effective_times(&curves, &traj).unwrap();
    assert_abs_diff_eq!(t1, 20.0, epsilon = 1e-9);
    assert_abs_diff_eq!(tp1, 50.0, epsilon = 1e-9);
    assert_abs_diff_eq!(tp2, 10.0, epsilon = 1e-9);
}

#[test]
fn linear_channels_average_but_gaussian_channels_rms() {
    let r = 0.08;
    let curves =
        CoherenceCurves::from_rate_rows(&[(3.0, r, r, r), (4.0, 0.0, 0.0, 0.0)]).unwrap();
    // two equal-duration dwell points, one at each end
    let (t1, tp1, tp2) = effective_times(&curves, &[3.0, 4.0]).unwrap();
    assert_abs_diff_eq!(t1, 2.0 / r, epsilon = 1e-12);
    assert_abs_diff_eq!(tp1, 2.0 / r, epsilon = 1e-12);
    assert_abs_diff_eq!(tp2, 2.0_f64.sqrt() / r, epsilon = 1e-12);
}

#[test]
fn trajectories_outside_the_curves_are_rejected() {
    let curves =
        CoherenceCurves::from_rate_rows(&[(3.0, 0.1, 0.1, 0.1), (4.0, 0.1, 0.1, 0.1)]).unwrap();
    match effective_times(&curves, &[3.5, 4.2]) {
        Err(NoiseError::RangeNotCovered { .. }) => {}
        other => panic!("expected RangeNotCovered, got {other:?}"),
    }
}

#[test]
fn effective_times_do_not_depend_on_grid_resolution() {
    let curves = CoherenceCurves::from_rate_rows(&[
        (3.0, 0.10, 0.03, 0.20),
        (3.4, 0.06, 0.02, 0.12),
        (4.0, 0.01, 0.01, 0.02),
    ])
    .unwrap();
    let sweep = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                3.05 + 0.9 * (std::f64::consts::PI * u).sin().powi(2)
            })
            .collect()
    };
    let a = effective_times(&curves, &sweep(2000)).unwrap();
    let b = effective_times(&curves, &sweep(4000)).unwrap();
    assert!((a.0 - b.0).abs() / a.0 < 1e-6);
    assert!((a.1 - b.1).abs() / a.1 < 1e-6);
    assert!((a.2 - b.2).abs() / a.2 < 1e-6);

    // repeating every sample is exactly the same trajectory
    let base = sweep(500);
    let repeated: Vec<f64> = base.iter().flat_map(|&w| [w, w, w]).collect();
    let c = effective_times(&curves, &base).unwrap();
    let d = effective_times(&curves, &repeated).unwrap();
    assert_abs_diff_eq!(c.0, d.0, epsilon = 1e-12);
    assert_abs_diff_eq!(c.2, d.2, epsilon = 1e-12);
}

#[test]
fn gate_error_floor_from_published_effective_times() {
    let q1 = (14.0, 67.0, 17.0);
    let q2 = (43.0, 43.0, 6.0);
    let eps = coherence_limit(q1, q2, 33.0, LimitConvention::MainText);
    assert_abs_diff_eq!(eps, 1.767432823038356e-3, epsilon = 1e-15);
    assert!((eps - 1.7e-3).abs() / 1.7e-3 < 0.05);

    let app = coherence_limit(q1, q2, 33.0, LimitConvention::Appendix);
    assert_abs_diff_eq!(app, 2.0 * eps, epsilon = 1e-15);

    assert_eq!(coherence_limit(q1, q2, 0.0, LimitConvention::MainText), 0.0);

    let only_t1 = coherence_limit(
        (14.0, f64::INFINITY, f64::INFINITY),
        (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        33.0,
        LimitConvention::MainText,
    );
    assert_abs_diff_eq!(only_t1, 9.42857142857143e-4, epsilon = 1e-15);
}
