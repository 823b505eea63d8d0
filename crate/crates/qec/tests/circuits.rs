use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqcat_core::code::SCParams;
use sqcat_qec::circuit::{build_repetition_circuit, build_surface_circuit, Op, PauliCircuit};
use sqcat_qec::decoder::{ErrorModel, Pauli};
use sqcat_qec::mc::{detector_frequencies, low_order_failure_probability, run_mc, Experiment};
use sqcat_qec::noise::{CxSplit, NoiseModel};
use sqcat_qec::sampler::FrameSampler;

fn sc() -> SCParams {
    SCParams::from_eta(4.0, 0.25).unwrap()
}

#[test]
fn noiseless_circuits_are_silent() {
    let nm = NoiseModel::noiseless();
    for c in
        [build_repetition_circuit(3, 3, &nm).unwrap(), build_repetition_circuit(7, 7, &nm).unwrap(), build_surface_circuit(3, 5, 5, &nm).unwrap()]
    {
        let r = run_mc(&c, 10_000, 1).unwrap();
        assert_eq!((r.z_failures, r.x_failures), (0, 0));
    }
}

#[test]
fn detectors_are_stabilizer_parities() {
    // randomizing every trivially-acting frame component must not fire any detector
    let nm = NoiseModel::noiseless();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for c in
        [build_repetition_circuit(5, 5, &nm).unwrap(), build_surface_circuit(3, 3, 3, &nm).unwrap(), build_surface_circuit(3, 7, 7, &nm).unwrap()]
    {
        let s = FrameSampler::new(&c).with_gauge_randomization();
        for _ in 0..20 {
            let b = s.sample(&mut rng, 64);
            assert!(b.detectors.iter().all(|&w| w == 0));
            assert_eq!(b.observable, 0);
        }
    }
}

fn data_error_effects(c: &PauliCircuit, round_op: usize) -> Vec<(usize, usize)> {
    let em = ErrorModel::from_circuit(c);
    em.mechanisms.iter().filter(|m| m.op == round_op && m.pauli == Pauli::Z).map(|m| (m.qubits[0], m.detectors.len())).collect()
}

fn second_round_data_op(c: &PauliCircuit) -> usize {
    c.ops.iter().enumerate().filter(|(_, op)| matches!(op, Op::ZError(..))).map(|(i, _)| i).nth(1).unwrap()
}

#[test]
fn single_data_error_is_matchable() {
    // code-capacity noise: the data-round sites are the only error ops
    let rep = build_repetition_circuit(5, 3, &NoiseModel::code_capacity(0.01)).unwrap();
    let eff = data_error_effects(&rep, second_round_data_op(&rep));
    assert_eq!(eff.len(), 5);
    for (q, n) in eff {
        assert_eq!(n, if q == 0 || q == 4 { 1 } else { 2 }, "data qubit {q}");
    }
    let surf = build_surface_circuit(3, 5, 3, &NoiseModel::code_capacity(0.01)).unwrap();
    let eff = data_error_effects(&surf, second_round_data_op(&surf));
    assert_eq!(eff.len(), 15);
    for (q, n) in eff {
        let row = q / 3;
        let boundary_row = row == 0 || row == 4;
        assert!(n == 1 || n == 2, "data qubit {q} flips {n}");
        if !boundary_row {
            assert_eq!(n, 2, "bulk data qubit {q}");
        }
    }
    assert!(data_error_effects(&surf, second_round_data_op(&surf)).iter().any(|&(_, n)| n == 1));
}

#[test]
fn code_capacity_failure_matches_enumeration() {
    let p = 1e-2;
    let exact = 3.0 * p * p * (1.0 - p) + p * p * p;
    let c = build_repetition_circuit(3, 1, &NoiseModel::code_capacity(p)).unwrap();
    let exp = Experiment::new(c).unwrap();
    // all 8 fault patterns of the three data qubits: orders <= 2 plus the triple
    let enumerated = low_order_failure_probability(&exp, 2).unwrap() + p * p * p;
    assert!((enumerated - exact).abs() < 1e-12, "{enumerated} vs {exact}");
    let r = exp.run(2_000_000, 11).unwrap();
    let sigma = (exact * (1.0 - exact) / r.shots as f64).sqrt();
    assert!((r.z_rate() - exact).abs() < 3.0 * sigma, "{} vs {exact}", r.z_rate());
    assert!(r.z_ci.0 <= exact && exact <= r.z_ci.1);
}

#[test]
fn unencoded_qubit_samples_its_error_rate() {
    let c = PauliCircuit::from_text("QUBITS 1\nRX 0\nZ_ERROR(0.1) 0\nMX 0\nOBSERVABLE 0\nX_OBSERVABLE 0\n").unwrap();
    let r = run_mc(&c, 200_000, 5).unwrap();
    assert!(r.z_ci.0 < 0.1 && 0.1 < r.z_ci.1, "{r:?}");
    assert!((r.z_rate() - 0.1).abs() < 3.0 * (0.09f64 / 200_000.0).sqrt());
}

#[test]
fn detector_frequencies_match_injected_rates() {
    let c = build_repetition_circuit(5, 5, &NoiseModel::repetition(&sc(), 5e-3)).unwrap();
    let em = ErrorModel::from_circuit(&c);
    let mut expected = vec![1.0f64; c.num_detectors()];
    for m in em.mechanisms.iter().filter(|m| m.pauli == Pauli::Z) {
        for &d in &m.detectors {
            expected[d] *= 1.0 - 2.0 * m.p;
        }
    }
    let shots = 1_000_000u64;
    let freq = detector_frequencies(&c, shots, 21);
    for (d, (&f, &e)) in freq.iter().zip(&expected).enumerate() {
        let p = (1.0 - e) / 2.0;
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        assert!((f - p).abs() < 3.0 * sigma, "detector {d}: {f} vs {p}");
    }
}

#[test]
fn same_seed_same_result_on_any_thread_count() {
    let c = build_surface_circuit(3, 3, 3, &NoiseModel::surface(&sc(), 6e-3, CxSplit::default())).unwrap();
    let exp = Experiment::new(c).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| exp.run(50_000, 9).unwrap());
    let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| exp.run(50_000, 9).unwrap());
    assert_eq!(one, three);
    assert_eq!(one, exp.run(50_000, 9).unwrap());
    assert_ne!(one, exp.run(50_000, 10).unwrap());
}

#[test]
fn bit_flip_failures_follow_cx_count() {
    let p_xy = 1e-3;
    for dz in [3usize, 5] {
        let nm = NoiseModel::repetition(&sc(), 1e-3).with_cx_bitflip(p_xy);
        let c = build_repetition_circuit(dz, dz, &nm).unwrap();
        let r = run_mc(&c, 200_000, 4).unwrap();
        let predicted = 2.0 * dz as f64 * (dz as f64 - 1.0) * p_xy;
        let ratio = r.x_rate() / predicted;
        assert!((0.5..2.0).contains(&ratio), "dz={dz}: {} vs {predicted}", r.x_rate());
    }
}

#[test]
fn repetition_rate_matches_fault_enumeration() {
    let c = build_repetition_circuit(3, 3, &NoiseModel::repetition(&sc(), 1e-3)).unwrap();
    let exp = Experiment::new(c).unwrap();
    let predicted = low_order_failure_probability(&exp, 2).unwrap();
    let r = exp.run(1_000_000, 8).unwrap();
    let sigma = (predicted / r.shots as f64).sqrt();
    // 5% covers fault sets of three or more, which the enumeration omits
    assert!((r.z_rate() - predicted).abs() < 3.0 * sigma + 0.05 * predicted, "mc {} enumeration {predicted}", r.z_rate());
}

#[test]
fn surface_cx_only_noise_matches_fault_enumeration() {
    let mut nm = NoiseModel::noiseless();
    nm.cx.p_zc = 1e-3 / 3.0;
    nm.cx.p_zt = 1e-3 / 3.0;
    nm.cx.p_zczt = 1e-3 / 3.0;
    let c = build_surface_circuit(3, 3, 3, &nm).unwrap();
    let exp = Experiment::new(c).unwrap();
    let predicted = low_order_failure_probability(&exp, 2).unwrap();
    let r = exp.run(2_000_000, 13).unwrap();
    let sigma = (predicted * (1.0 - predicted) / r.shots as f64).sqrt();
    assert!((r.z_rate() - predicted).abs() < 2.0 * sigma, "mc {} enumeration {predicted}", r.z_rate());
}

#[test]
fn text_dump_round_trips() {
    let nm = NoiseModel::surface(&sc(), 4e-3, CxSplit::default());
    for c in [build_repetition_circuit(5, 5, &NoiseModel::repetition(&sc(), 1e-3)).unwrap(), build_surface_circuit(3, 5, 5, &nm).unwrap()] {
        assert_eq!(PauliCircuit::from_text(&c.to_text()).unwrap(), c);
    }
    assert!(PauliCircuit::from_text("QUBITS 1\nFOO 0\n").is_err());
    assert!(PauliCircuit::from_text("QUBITS 1\nZ_ERROR 0\n").is_err());
}

#[test]
fn golden_repetition_dump() {
    let c = build_repetition_circuit(3, 1, &NoiseModel::code_capacity(0.01)).unwrap();
    let golden = "\
QUBITS 5
RX 0 1 2
Z_ERROR(0.01) 0 1 2
RX 3 4
CX 3 0 4 1
TICK
CX 3 1 4 2
TICK
MX 3 4
MX 0 1 2
DETECTOR 0
DETECTOR 1
DETECTOR 2 3 0
DETECTOR 3 4 1
OBSERVABLE 4
X_OBSERVABLE 0 1 2
";
    assert_eq!(c.to_text(), golden);
}

#[test]
fn logical_error_falls_with_distance_below_threshold_and_rises_above() {
    // the Monte Carlo repetition threshold at this operating point sits near 1.3%
    let rate = |dz: usize, ratio: f64| {
        run_mc(&build_repetition_circuit(dz, dz, &NoiseModel::repetition(&sc(), ratio)).unwrap(), 20_000, dz as u64).unwrap().z_rate()
    };
    let below: Vec<f64> = [3, 5, 7].iter().map(|&d| rate(d, 0.0065)).collect();
    let above: Vec<f64> = [3, 5, 7].iter().map(|&d| rate(d, 0.026)).collect();
    assert!(below.windows(2).all(|w| w[1] < w[0]), "{below:?}");
    assert!(above.windows(2).all(|w| w[1] > w[0]), "{above:?}");
}
