use coupler_core::hammod::{build_hamiltonian, dressed_spectrum, SystemParams};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Params {
    f1: f64,
    a1: f64,
    f2: f64,
    a2: f64,
    fc: f64,
    ac: f64,
    g1c: f64,
    g2c: f64,
    g12: f64,
}

/// Frequencies and anharmonicities that stay inside the transmon regime.
fn arb_params() -> impl Strategy<Value = Params> {
    (
        3.6..5.2f64,
        -0.27..-0.19f64,
        3.6..5.2f64,
        -0.27..-0.19f64,
        3.6..5.2f64,
        -0.27..-0.19f64,
        0.0..80.0f64,
        0.0..80.0f64,
        0.0..12.0f64,
    )
        .prop_map(|(f1, a1, f2, a2, fc, ac, g1c, g2c, g12)| Params {
            f1,
            a1,
            f2,
            a2,
            fc,
            ac,
            g1c,
            g2c,
            g12,
        })
}

fn system(p: &Params, levels: usize) -> SystemParams {
    SystemParams::from_frequencies(
        p.f1, p.a1, p.f2, p.a2, p.fc, p.ac, p.g1c, p.g2c, p.g12, levels,
    )
}

fn sorted_eigenvalues(s: &SystemParams) -> Vec<f64> {
    let mut ev: Vec<f64> = build_hamiltonian(s)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // swapping the two qubits (and their coupler arms) is a relabeling,
    // so the energy spectrum cannot change
    #[test]
    fn spectrum_invariant_under_qubit_swap(p in arb_params()) {
        let a = system(&p, 3);
        let swapped = Params {
            f1: p.f2,
            a1: p.a2,
            f2: p.f1,
            a2: p.a1,
            g1c: p.g2c,
            g2c: p.g1c,
            ..p
        };
        let b = system(&swapped, 3);
        let ev_a = sorted_eigenvalues(&a);
        let ev_b = sorted_eigenvalues(&b);
        for (x, y) in ev_a.iter().zip(&ev_b) {
            prop_assert!((x - y).abs() < 1e-9, "spectra differ: {x} vs {y}");
        }
    }

    #[test]
    fn hamiltonian_is_real_symmetric(p in arb_params()) {
        let h = build_hamiltonian(&system(&p, 4));
        let dev = (&h - h.transpose()).abs().max();
        prop_assert!(dev < 1e-12, "asymmetry {dev}");
        prop_assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn participation_rows_are_normalized(p in arb_params()) {
        let s = system(&p, 3);
        let h = build_hamiltonian(&s);
        if let Ok(d) = dressed_spectrum(&h, &s) {
            for r in 0..3 {
                let sum: f64 = (0..3).map(|c| d.participation[(r, c)]).sum();
                prop_assert!((sum - 1.0).abs() < 1e-9, "row {r} sums to {sum}");
            }
        }
    }

    // moving the coupler away and back restores the couplings exactly
    #[test]
    fn coupler_rescale_roundtrip(p in arb_params(), fc_new in 3.0..5.5f64) {
        let s = system(&p, 3);
        let back = s.with_coupler_freq(fc_new, true).with_coupler_freq(p.fc, true);
        prop_assert!((back.g1c_mhz - s.g1c_mhz).abs() < 1e-9);
        prop_assert!((back.g2c_mhz - s.g2c_mhz).abs() < 1e-9);
        prop_assert!((back.g12_mhz - s.g12_mhz).abs() < 1e-9);
        let s2 = s.with_qubit2_freq(fc_new, true).with_qubit2_freq(p.f2, true);
        prop_assert!((s2.g2c_mhz - s.g2c_mhz).abs() < 1e-9);
        prop_assert!((s2.g12_mhz - s.g12_mhz).abs() < 1e-9);
    }

    // far-dispersive labels must not jump under a micro-shift of the coupler
    #[test]
    fn labels_stable_in_dispersive_regime(
        f1 in 3.8..4.2f64,
        fc in 5.0..5.4f64,
        g in 5.0..40.0f64,
    ) {
        let p = Params {
            f1,
            a1: -0.22,
            f2: f1 - 0.35,
            a2: -0.22,
            fc,
            ac: -0.25,
            g1c: g,
            g2c: g,
            g12: g / 12.0,
        };
        let s = system(&p, 3);
        let d0 = dressed_spectrum(&build_hamiltonian(&s), &s).unwrap();
        let s1 = s.with_coupler_freq(fc + 1e-6, false);
        let d1 = dressed_spectrum(&build_hamiltonian(&s1), &s1).unwrap();
        for (label, &idx) in d0.labels() {
            prop_assert_eq!(d1.labels().get(label), Some(&idx));
        }
    }
}
