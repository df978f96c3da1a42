use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use coupler_core::gatesim::GateResult;
use coupler_core::hammod::{build_hamiltonian, dressed_spectrum, SystemParams};
use coupler_core::rbkit::{
    compound_cz_error, fit_decay, gate_to_cz_block, interleaved_analysis, simulate_decay,
    simulate_decay_sampled, survival_probability, synth_sequences, CliffordGroup, DecayFit,
    DecayRecord, ErrorModel, RbError,
};

fn group() -> &'static CliffordGroup {
    CliffordGroup::standard()
}

fn cz4() -> Matrix4<Complex64> {
    let mut m = Matrix4::identity();
    m[(3, 3)] = Complex64::new(-1.0, 0.0);
    m
}

fn fit_with_p(p: f64, sigma_p: f64) -> DecayFit {
    DecayFit {
        amplitude: 0.75,
        baseline: 0.25,
        p,
        epsilon: (1.0 - p) * 0.75,
        sigma_amplitude: 0.0,
        sigma_baseline: 0.0,
        sigma_p,
        sigma_epsilon: 0.75 * sigma_p,
    }
}

#[test]
fn clifford_group_has_the_expected_size_and_classes() {
    let g = group();
    assert_eq!(g.len(), 11520);
    assert_eq!(g.class_sizes(), [576, 5184, 5184, 576]);

    let id = g.identity_index();
    assert_eq!(g.cz_count(id), 0);
    assert_eq!(g.pulse_count(id), 2);

    let icz = g.lookup(&cz4()).expect("CZ is a two-qubit Clifford");
    assert_eq!(g.cz_count(icz), 1);
    assert_eq!(g.pulse_count(icz), 4);
}

#[test]
fn canonical_keys_identify_every_element() {
    let g = group();
    for i in (0..g.len()).step_by(7) {
        assert_eq!(g.lookup(g.unitary(i)), Some(i));
    }
    // a global phase must not change the identification
    let ph = Complex64::from_polar(1.0, 0.83);
    let u = g.unitary(4321) * ph;
    assert_eq!(g.lookup(&u), Some(4321));
}

#[test]
fn gate_counts_average_to_the_decomposition_budget() {
    let g = group();
    assert_eq!(g.mean_cz_count(), 1.5);
    assert_eq!(g.mean_pulse_count(), 8.25);
    let want = [3.75, 85.0 / 12.0, 109.0 / 12.0, 15.75];
    let got = g.class_mean_pulse_counts();
    for (a, b) in got.iter().zip(want) {
        assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
    }
}

#[test]
fn group_is_closed_and_contains_inverses() {
    use rand::{Rng, SeedableRng};
    let g = group();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..150 {
        let i = rng.gen_range(0..g.len());
        let j = rng.gen_range(0..g.len());
        let prod = g.unitary(i) * g.unitary(j);
        assert!(g.lookup(&prod).is_some(), "product left the group");

        let inv = g.unitary(i).adjoint();
        let k = g.lookup(&inv).expect("inverse left the group");
        let round = g.unitary(k) * g.unitary(i);
        let ph = round[(0, 0)];
        assert_abs_diff_eq!(ph.norm(), 1.0, epsilon = 1e-9);
        let dev = (round - Matrix4::identity() * ph).norm();
        assert!(dev < 1e-9, "inverse off by {dev:.2e}");
    }
}

#[test]
fn sequences_compose_to_the_identity() {
    let g = group();
    for n in [0usize, 2] {
        let seqs = synth_sequences(g, &[5, 9], n, 3, 20260816);
        assert_eq!(seqs.len(), 6);
        for s in &seqs {
            let mut tot = Matrix4::<Complex64>::identity();
            for &c in &s.cliffords {
                tot = g.unitary(c as usize) * tot;
                for _ in 0..n {
                    tot = cz4() * tot;
                }
            }
            tot = g.unitary(s.recovery as usize) * tot;
            let ph = tot[(0, 0)];
            assert_abs_diff_eq!(ph.norm(), 1.0, epsilon = 1e-9);
            assert!((tot - Matrix4::identity() * ph).norm() < 1e-9);
        }
    }
}

#[test]
fn synthesis_is_deterministic_and_splits_streams_per_sequence() {
    let g = group();
    let a = synth_sequences(g, &[10, 20], 1, 2, 55);
    let b = synth_sequences(g, &[10, 20], 1, 2, 55);
    assert_eq!(a.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.cliffords, y.cliffords);
        assert_eq!(x.recovery, y.recovery);
    }
    let c = synth_sequences(g, &[10, 20], 1, 2, 56);
    assert!(a.iter().zip(&c).any(|(x, y)| x.cliffords != y.cliffords));

    // raising the randomization count must not disturb earlier draws
    let wide = synth_sequences(g, &[10, 20], 1, 3, 55);
    assert_eq!(a[0].cliffords, wide[0].cliffords);
    assert_eq!(a[1].cliffords, wide[1].cliffords);
    assert_eq!(a[2].cliffords, wide[3].cliffords);
}

#[test]
fn sampled_gate_counts_match_the_group_averages() {
    let g = group();
    let seqs = synth_sequences(g, &[1], 0, 10_000, 99);
    let mut cz = 0.0;
    let mut pl = 0.0;
    for s in &seqs {
        cz += g.cz_count(s.cliffords[0] as usize) as f64;
        pl += g.pulse_count(s.cliffords[0] as usize) as f64;
    }
    cz /= seqs.len() as f64;
    pl /= seqs.len() as f64;
    assert!((cz - 1.5).abs() < 0.05, "mean CZ count {cz}");
    assert!((pl - 8.25).abs() < 0.1, "mean pulse count {pl}");
}

#[test]
fn perfect_gates_preserve_the_initial_state() {
    let g = group();
    let model = ErrorModel::depolarizing(0.0, 0.0).unwrap();
    let seqs = synth_sequences(g, &[1, 20, 63], 1, 4, 3);
    for r in simulate_decay(g, &seqs, &model) {
        assert_abs_diff_eq!(r.mean_fidelity, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.std, 0.0, epsilon = 1e-12);
    }
}

#[test]
fn depolarized_cliffords_decay_by_a_closed_form_power_law() {
    let g = group();
    // with strength e per Clifford (recovery included) and ideal readout the
    // survival is 0.75 (1-e)^(m+1) + 0.25 for every sequence of length m
    let model = ErrorModel::depolarizing(0.014, 0.0).unwrap();
    for (m, want) in [
        (1, 0.979147),
        (3, 0.958873796812),
        (6, 0.929515969988723),
    ] {
        for s in synth_sequences(g, &[m], 0, 3, 11) {
            let f = survival_probability(g, &s, &model);
            assert_abs_diff_eq!(f, want, epsilon = 1e-12);
        }
    }

    let lengths: Vec<usize> = vec![1, 2, 4, 7, 11, 16, 22, 29, 37];
    let seqs = synth_sequences(g, &lengths, 0, 2, 12);
    let fit = fit_decay(&simulate_decay(g, &seqs, &model)).unwrap();
    assert_abs_diff_eq!(fit.p, 0.986, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.amplitude, 0.75 * 0.986, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.baseline, 0.25, epsilon = 1e-9);
    assert_abs_diff_eq!(fit.epsilon, 0.0105, epsilon = 1e-9);
}

#[test]
fn decay_fit_matches_an_exact_power_law() {
    let records: Vec<DecayRecord> = [1usize, 3, 6, 10, 16, 24, 40, 64, 100]
        .iter()
        .map(|&m| DecayRecord {
            m,
            n_interleaved: 0,
            mean_fidelity: 0.75 * 0.98f64.powi(m as i32) + 0.25,
            std: 0.0,
        })
        .collect();
    let fit = fit_decay(&records).unwrap();
    assert_abs_diff_eq!(fit.p, 0.98, epsilon = 1e-10);
    assert_abs_diff_eq!(fit.amplitude, 0.75, epsilon = 1e-10);
    assert_abs_diff_eq!(fit.baseline, 0.25, epsilon = 1e-10);
    assert_abs_diff_eq!(fit.epsilon, 0.015, epsilon = 1e-10);
    assert!(fit.sigma_p < 1e-8);
    assert!(fit.sigma_epsilon < 1e-8);
}

#[test]
fn reference_scale_error_round_trips_through_the_fit() {
    let p_ref: f64 = 0.9814666666666667;
    let records: Vec<DecayRecord> = [1usize, 5, 10, 20, 35, 55, 80, 100]
        .iter()
        .map(|&m| DecayRecord {
            m,
            n_interleaved: 0,
            mean_fidelity: 0.72 * p_ref.powi(m as i32) + 0.26,
            std: 0.0,
        })
        .collect();
    let fit = fit_decay(&records).unwrap();
    assert_abs_diff_eq!(fit.epsilon, 1.39e-2, epsilon = 1e-4);
    assert_abs_diff_eq!(fit.epsilon, (1.0 - p_ref) * 0.75, epsilon = 1e-12);
}

#[test]
fn degenerate_decay_data_is_rejected() {
    let flat: Vec<DecayRecord> = [1usize, 5, 9]
        .iter()
        .map(|&m| DecayRecord {
            m,
            n_interleaved: 0,
            mean_fidelity: 0.6,
            std: 0.0,
        })
        .collect();
    assert!(matches!(fit_decay(&flat), Err(RbError::FitDiverged)));

    let short: Vec<DecayRecord> = [2usize, 2, 7]
        .iter()
        .map(|&m| DecayRecord {
            m,
            n_interleaved: 0,
            mean_fidelity: 0.9 - 0.01 * m as f64,
            std: 0.0,
        })
        .collect();
    match fit_decay(&short) {
        Err(RbError::InsufficientData { need, got }) => {
            assert_eq!((need, got), (3, 2));
        }
        other => panic!("expected InsufficientData, got {other:?}"),
    }
}

#[test]
fn interleaved_analysis_matches_frozen_arithmetic() {
    let reference = fit_with_p(0.99, 1e-4);
    let interleaved = fit_with_p(0.985, 1e-4);
    let out = interleaved_analysis(&reference, &interleaved, 1).unwrap();
    assert_abs_diff_eq!(out.epsilon_ncz, 0.0037878787878788123, epsilon = 1e-15);
    assert_abs_diff_eq!(out.sigma_ncz, 0.0001068671845879733, epsilon = 1e-12);
    // at n = 1 the per-gate error is the n-CZ error itself
    assert_abs_diff_eq!(out.epsilon_per_cz, out.epsilon_ncz, epsilon = 1e-15);
    assert_abs_diff_eq!(out.sigma_per_cz, out.sigma_ncz, epsilon = 1e-15);
}

#[test]
fn aggregate_error_inverts_the_per_gate_compounding() {
    assert_abs_diff_eq!(
        compound_cz_error(2.35e-3, 20),
        0.045965373119338016,
        epsilon = 1e-15
    );
    let reference = fit_with_p(0.995, 1e-4);
    let interleaved = fit_with_p(0.9340192716616782, 1e-4);
    let out = interleaved_analysis(&reference, &interleaved, 20).unwrap();
    assert_abs_diff_eq!(out.epsilon_ncz, 0.045965373119338016, epsilon = 1e-12);
    assert_abs_diff_eq!(out.epsilon_per_cz, 2.35e-3, epsilon = 1e-12);
    // compounding compresses the uncertainty by roughly 1/n
    assert!(out.sigma_per_cz > 0.0 && out.sigma_per_cz < 0.1 * out.sigma_ncz);
}

#[test]
fn faster_interleaved_than_reference_decay_is_rejected() {
    let reference = fit_with_p(0.98, 1e-5);
    let interleaved = fit_with_p(0.99, 1e-5);
    match interleaved_analysis(&reference, &interleaved, 1) {
        Err(RbError::NonPhysical { .. }) => {}
        other => panic!("expected NonPhysical, got {other:?}"),
    }

    // an excess inside the error bars is reported as a (negative) estimate
    let reference = fit_with_p(0.99, 1e-3);
    let interleaved = fit_with_p(0.9901, 1e-3);
    let out = interleaved_analysis(&reference, &interleaved, 1).unwrap();
    assert!(out.epsilon_ncz < 0.0);
}

#[test]
fn per_cz_error_is_flat_in_interleaving_depth_for_depolarizing_noise() {
    let g = group();
    let eps_cz = 1.9e-3;
    let model = ErrorModel::depolarizing(0.0185, eps_cz * 4.0 / 3.0).unwrap();
    let lengths: Vec<usize> = vec![1, 4, 8, 14, 22, 32, 45, 60];

    let reference = {
        let seqs = synth_sequences(g, &lengths, 0, 5, 31);
        fit_decay(&simulate_decay(g, &seqs, &model)).unwrap()
    };
    let mut per_cz = Vec::new();
    for n in [1usize, 2, 4] {
        let seqs = synth_sequences(g, &lengths, n, 5, 31 + n as u64);
        let fit = fit_decay(&simulate_decay(g, &seqs, &model)).unwrap();
        let out = interleaved_analysis(&reference, &fit, n).unwrap();
        assert_abs_diff_eq!(out.epsilon_per_cz, eps_cz, epsilon = 1e-5);
        per_cz.push(out.epsilon_per_cz);
    }
    let lo = per_cz.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = per_cz.iter().cloned().fold(0.0f64, f64::max);
    assert!(hi / lo - 1.0 < 1e-3, "per-CZ error drifts with n: {per_cz:?}");
}

#[test]
fn coherent_phase_error_accumulates_with_interleaving_depth() {
    let g = group();
    let model = ErrorModel::coherent_cz(0.01, 0.1).unwrap();
    // deep decay so the baseline is pinned by the tail
    let lengths: Vec<usize> = vec![1, 4, 9, 16, 25, 40, 60, 90, 130];

    let reference = {
        let seqs = synth_sequences(g, &lengths, 0, 16, 77);
        fit_decay(&simulate_decay(g, &seqs, &model)).unwrap()
    };
    let mut per_cz = Vec::new();
    for n in [1usize, 4] {
        let seqs = synth_sequences(g, &lengths, n, 16, 78 + n as u64);
        let fit = fit_decay(&simulate_decay(g, &seqs, &model)).unwrap();
        per_cz.push(interleaved_analysis(&reference, &fit, n).unwrap().epsilon_per_cz);
    }
    // a 0.1 rad conditional-phase miss costs about 1.5e-3 per gate once the
    // randomization twirls it; four back-to-back gates quadruple the angle,
    // so the per-gate estimate grows instead of staying flat
    assert!(
        per_cz[0] > 0.7e-3 && per_cz[0] < 2.6e-3,
        "single-CZ coherent error {:.3e}",
        per_cz[0]
    );
    let ratio = per_cz[1] / per_cz[0];
    assert!((2.0..7.0).contains(&ratio), "growth factor {ratio:.2}");
}

fn embed_cz9() -> DMatrix<Complex64> {
    let comp = [0usize, 1, 3, 4];
    let mut u = DMatrix::<Complex64>::identity(9, 9);
    u[(comp[3], comp[3])] = Complex64::new(-1.0, 0.0);
    u
}

#[test]
fn leaky_interleaved_gate_costs_survival() {
    let g = group();
    // an exact CZ embedded in the two-qutrit space is invisible to the run
    let clean = ErrorModel::leaky_cz(0.0, embed_cz9()).unwrap();
    let seqs = synth_sequences(g, &[2, 6, 12], 1, 3, 41);
    for r in simulate_decay(g, &seqs, &clean) {
        assert_abs_diff_eq!(r.mean_fidelity, 1.0, epsilon = 1e-12);
    }

    // rotate 11 toward the q1 = 2 level after the conditional phase
    let phi = 0.2f64;
    let mut leak = DMatrix::<Complex64>::identity(9, 9);
    leak[(4, 4)] = Complex64::new(phi.cos(), 0.0);
    leak[(6, 6)] = Complex64::new(phi.cos(), 0.0);
    leak[(4, 6)] = Complex64::new(0.0, -phi.sin());
    leak[(6, 4)] = Complex64::new(0.0, -phi.sin());
    let lossy = ErrorModel::leaky_cz(5e-3, &leak * embed_cz9()).unwrap();

    let lengths: Vec<usize> = vec![1, 2, 4, 7, 11, 16];
    let records = {
        let seqs = synth_sequences(g, &lengths, 1, 8, 42);
        simulate_decay(g, &seqs, &lossy)
    };
    for w in records.windows(2) {
        assert!(
            w[1].mean_fidelity < w[0].mean_fidelity,
            "survival should fall with length: {records:?}"
        );
    }

    let reference = {
        let seqs = synth_sequences(g, &lengths, 0, 8, 43);
        fit_decay(&simulate_decay(g, &seqs, &lossy)).unwrap()
    };
    let fit = fit_decay(&records).unwrap();
    let out = interleaved_analysis(&reference, &fit, 1).unwrap();
    assert!(
        out.epsilon_per_cz > 1e-3 && out.epsilon_per_cz < 5e-2,
        "leakage error estimate {:.3e}",
        out.epsilon_per_cz
    );
}

#[test]
fn dressed_propagator_block_reduces_to_a_phase_corrected_cz() {
    use std::f64::consts::PI;
    let s = SystemParams::from_frequencies(
        4.102, -0.216, 3.892, -0.217, 3.195, -0.250, 51.5, 53.9, 3.7, 3,
    );
    let idle = dressed_spectrum(&build_hamiltonian(&s), &s).unwrap();

    let (phi10, phi01) = (0.3, -0.2);
    let dim = 27;
    let mut ur = DMatrix::<Complex64>::identity(dim, dim);
    for i1 in 0..3 {
        for ic in 0..3 {
            for i2 in 0..3 {
                if let Some(k) = idle.eigenindex((i1, ic, i2)) {
                    let cond = if i1 == 1 && i2 == 1 { PI } else { 0.0 };
                    let ph = phi10 * i1 as f64 + phi01 * i2 as f64 + cond;
                    ur[(k, k)] = Complex64::from_polar(1.0, ph);
                }
            }
        }
    }
    let gate = GateResult {
        unitary: ur,
        phi11_rad: PI,
        leakage: 0.0,
        single_qubit_phases: (phi10, phi01),
    };
    let block = gate_to_cz_block(&gate, &idle).unwrap();
    assert_eq!(block.nrows(), 9);
    let want = embed_cz9();
    assert!((block.clone() - &want).norm() < 1e-9);

    // and the extracted block is directly usable as the interleaved gate
    let g = group();
    let model = ErrorModel::leaky_cz(0.0, block).unwrap();
    let seqs = synth_sequences(g, &[3, 8], 1, 2, 5);
    for r in simulate_decay(g, &seqs, &model) {
        assert_abs_diff_eq!(r.mean_fidelity, 1.0, epsilon = 1e-9);
    }
}

#[test]
fn clifford_error_composes_from_the_mean_gate_counts() {
    let g = group();
    let eps_cz = 1.9e-3;
    let eps_1q = (1.32e-3 + 8.9e-4) / 2.0;
    let estimate = g.mean_cz_count() * eps_cz + g.mean_pulse_count() * eps_1q;
    assert_abs_diff_eq!(estimate, 0.01196625, epsilon = 1e-15);
    assert!((estimate / 1.1e-2 - 1.0).abs() < 0.10);
    assert!((estimate / 1.39e-2 - 1.0).abs() < 0.30);
}

#[test]
fn sampling_noise_is_reproducible_and_unbiased() {
    let g = group();
    let model = ErrorModel::depolarizing(0.0185, 0.0).unwrap();
    let lengths: Vec<usize> = vec![1, 10, 30];
    let seqs = synth_sequences(g, &lengths, 0, 6, 13);

    let exact = simulate_decay(g, &seqs, &model);
    let a = simulate_decay_sampled(g, &seqs, &model, 500, 5);
    let b = simulate_decay_sampled(g, &seqs, &model, 500, 5);
    assert_eq!(a.len(), exact.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.mean_fidelity.to_bits(), y.mean_fidelity.to_bits());
        assert_eq!(x.std.to_bits(), y.std.to_bits());
    }
    let c = simulate_decay_sampled(g, &seqs, &model, 500, 6);
    assert!(a.iter().zip(&c).any(|(x, y)| x.mean_fidelity != y.mean_fidelity));

    for (s, e) in a.iter().zip(&exact) {
        let f = e.mean_fidelity;
        let bound = 4.0 * (f * (1.0 - f) / (500.0 * 6.0)).sqrt() + 1e-3;
        assert!(
            (s.mean_fidelity - f).abs() < bound,
            "sampled {} vs exact {} at m {}",
            s.mean_fidelity,
            f,
            s.m
        );
    }
}
