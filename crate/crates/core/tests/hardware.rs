use proptest::prelude::*;
use sqcat_core::code::SCParams;
use sqcat_core::fock::C64;
use sqcat_core::hardware::*;

fn plus() -> [C64; 2] {
    [C64::new(1.0, 0.0), C64::new(1.0, 0.0)]
}

#[test]
fn three_mode_integration_matches_closed_form() {
    for x in [0.02, 0.1, 0.3] {
        let p = ThreeModeParams::matched(x, 1.0).unwrap();
        let sim = simulated_coherence_limit(&p, plus(), ModeCutoffs::default()).unwrap();
        let exact = qubit_boson_coherence(&p);
        assert!((sim - exact).norm() / exact.norm() < 0.02, "{x}: {sim} vs {exact}");
    }
    let p = ThreeModeParams::matched(0.1, 1.0).unwrap();
    let sim = simulated_coherence_limit(&p, plus(), ModeCutoffs::default()).unwrap();
    assert!((sim.norm() - 0.95).abs() < 0.02);
}

#[test]
fn coherence_ratio_does_not_depend_on_logical_state() {
    let p = ThreeModeParams::new(0.05, 0.8, 1.2, 0.6).unwrap();
    let a = simulated_coherence_limit(&p, plus(), ModeCutoffs::default()).unwrap();
    let b = simulated_coherence_limit(&p, [C64::new(0.3, 0.0), C64::new(0.0, 0.9)], ModeCutoffs::default()).unwrap();
    assert!((a - b).norm() < 1e-7);
}

#[test]
fn decoupled_gauge_leaves_coherence_flat() {
    let p = ThreeModeParams::matched(1e-10, 1.0).unwrap();
    let times: Vec<f64> = (1..=5).map(|k| 10.0 * k as f64).collect();
    let tr = simulate_three_mode(&p, plus(), &times, ModeCutoffs::default()).unwrap();
    for z in &tr.ratio {
        assert!((z.norm() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn gauge_decays_at_engineered_rate() {
    let p = ThreeModeParams::matched(0.05, 1.0).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| 5.0 * k as f64).collect();
    let tr = simulate_three_mode(&p, plus(), &times, ModeCutoffs::default()).unwrap();
    let rate = tr.gauge_decay_rate();
    assert!((rate / 0.05 - 1.0).abs() < 0.1, "{rate}");
    assert!(tr.top_occupation < 1e-4);
}

#[test]
fn eta_discrepancy_examples() {
    let sc = SCParams::from_eta(4.0, 0.25).unwrap();
    for (x, want) in [(0.1, 0.2875), (0.05, 0.26875)] {
        let e = eta_discrepancy(&ThreeModeParams::matched(x, 1.0).unwrap(), &sc).unwrap();
        assert_eq!(e.eta_pred, 0.25);
        assert!((e.first_order() - want).abs() < 1e-12);
        assert!((e.eta_sim / want - 1.0).abs() < 0.2, "{x}: {}", e.eta_sim);
    }
    let e = eta_discrepancy(&ThreeModeParams::matched(1e-3, 1.0).unwrap(), &sc).unwrap();
    assert!((e.eta_sim - e.eta_pred).abs() < 0.01 * e.eta_pred, "{e:?}");
}

#[test]
fn matched_bandwidth_is_optimal_within_grid() {
    let sc = SCParams::from_eta(4.0, 0.25).unwrap();
    let grid = [0.25, 0.5, 1.0, 2.0, 4.0];
    let errs: Vec<f64> = grid
        .iter()
        .map(|&gb| {
            let p = ThreeModeParams::new(0.05, gb, 1.0, gb).unwrap();
            let e = eta_discrepancy(&p, &sc).unwrap();
            e.eta_sim - e.eta_pred
        })
        .collect();
    let best = (0..grid.len()).min_by(|&i, &j| errs[i].total_cmp(&errs[j])).unwrap();
    assert!(grid[best].log2().abs() <= 1.0, "{errs:?}");
    let loss: Vec<f64> = grid.iter().map(|&gb| 1.0 - qubit_boson_coherence(&ThreeModeParams::new(0.05, gb, 1.0, gb).unwrap()).norm()).collect();
    let best = (0..grid.len()).min_by(|&i, &j| loss[i].total_cmp(&loss[j])).unwrap();
    assert_eq!(grid[best], 1.0, "{loss:?}");
}

#[test]
fn ion_elimination_reproduces_engineered_dissipator() {
    let sc = SCParams::from_eta(2.0, 0.5).unwrap();
    let ip = IonParams::matched(150.0, 0.15, 1.0, 0.025, 0.5, &sc).unwrap();
    let dim = ion_cutoff(&sc);
    let res = simulate_ion_elimination(&ip, &sc, dim, 5.0 / ip.kappa2()).unwrap();
    assert!(res.regime.ok());
    assert!(res.dark_leakage < 1e-3, "{res:?}");
    assert!((res.gap / res.predicted_gap - 1.0).abs() < 0.15, "{res:?}");
    assert!((res.reference_gap / res.predicted_gap - 1.0).abs() < 0.15, "{res:?}");
    assert!(res.flip_fraction > 0.85, "{res:?}");
    assert!(res.state_distance < 0.15, "{res:?}");
}

#[test]
fn momentum_kicks_shift_eta_by_order_eta0_squared() {
    let sc = SCParams::from_eta(2.0, 0.5).unwrap();
    let ip = IonParams::matched(150.0, 0.15, 1.0, 0.025, 0.5, &sc).unwrap();
    let dim = ion_cutoff(&sc);
    let k1 = ip.kappa2() / 50.0;
    let base = ion_phase_flip_eta(&ip, &sc, dim, k1, false).unwrap();
    let kicked = ion_phase_flip_eta(&ip, &sc, dim, k1, true).unwrap();
    assert!((base / sc.eta - 1.0).abs() < 0.15, "{base}");
    let shift = kicked - base;
    assert!((0.0..=2.0 * 0.15 * 0.15).contains(&shift), "{shift}");
}

#[test]
fn lab_couplings_are_squeezed_frame_couplings() {
    let sc = SCParams::from_eta(2.0, 0.5).unwrap();
    let ip = IonParams::matched(150.0, 0.15, 1.0, 0.025, 0.5, &sc).unwrap();
    assert!(frame_consistency(&ip, &sc, 120, 8).unwrap() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drive_round_trip(r in 0.0f64..1.5, alpha in 0.5f64..4.0, gf in 1e-3f64..1.0, ef in 1e-2f64..10.0, eta0 in 0.02f64..0.3) {
        let eps = matching_targets(r, alpha, gf, ef);
        let back = couplings_from_drives(&drives_from_couplings(&eps, eta0), eta0);
        for k in 0..6 {
            prop_assert!((back[k] - eps[k]).abs() <= 1e-12 * eps[k].abs().max(1e-3));
        }
    }

    #[test]
    fn closed_form_coherence_is_contractive(ga in 1e-4f64..0.3, gb in 0.1f64..5.0, kc in 0.1f64..5.0, lam in 0.1f64..5.0) {
        let p = ThreeModeParams::new(ga * gb.min(kc), gb, kc, lam).unwrap();
        prop_assert!(qubit_boson_coherence(&p).norm() <= 1.0 + 1e-12);
    }
}
