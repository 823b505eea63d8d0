use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqcat_core::code::SCParams;
use sqcat_qec::circuit::build_repetition_circuit;
use sqcat_qec::decoder::{DecodeError, Decoder, DetectorGraph, Distances, Edge, ErrorModel, Pauli};
use sqcat_qec::matching::{brute_force_min_pairing, min_weight_perfect_matching};
use sqcat_qec::mc::xor_sorted;
use sqcat_qec::noise::NoiseModel;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize, f64)> {
    let mut e = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                e.push((i, j, (rng.random::<f64>() * 20.0 * 1e3).round() / 1e3));
            }
        }
    }
    e
}

fn lookup(edges: &[(usize, usize, f64)]) -> impl Fn(usize, usize) -> Option<f64> + '_ {
    move |a, b| edges.iter().filter(|e| (e.0, e.1) == (a.min(b), a.max(b))).map(|e| e.2).min_by(f64::total_cmp)
}

#[test]
fn blossom_matches_brute_force_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 200 {
        let n = 2 * rng.random_range(1..=6);
        let density = if checked % 2 == 0 { 1.0 } else { 0.6 };
        let edges = random_instance(&mut rng, n, density);
        let brute = brute_force_min_pairing(n, lookup(&edges));
        match (min_weight_perfect_matching(n, &edges), brute) {
            (Ok((mate, w)), Some(b)) => {
                assert!((w - b).abs() < 1e-6 * n as f64, "n={n} blossom {w} brute {b}");
                assert!((0..n).all(|v| mate[mate[v]] == v && mate[v] != v));
            }
            (Err(_), None) => {}
            (got, want) => panic!("n={n}: blossom {got:?}, brute {want:?}"),
        }
        checked += 1;
    }
}

#[test]
fn empty_and_adjacent_syndromes() {
    let g = DetectorGraph {
        num_detectors: 2,
        edges: vec![
            Edge { a: 0, b: 1, p: 0.01, weight: 1.0, observable: false },
            Edge { a: 0, b: 2, p: 0.01, weight: 2.0, observable: true },
            Edge { a: 1, b: 2, p: 0.01, weight: 2.0, observable: false },
        ],
        undetectable: vec![],
    };
    let dec = Decoder::new(g.clone());
    assert!(!dec.decode(&[]).unwrap());
    let c = dec.decode_detailed(&[0, 1]).unwrap();
    assert_eq!((c.flip, c.weight), (false, 1.0));
    // costlier pair edge: both go to the boundary
    let mut g2 = g;
    g2.edges[0].weight = 5.0;
    let c = Decoder::new(g2).decode_detailed(&[0, 1]).unwrap();
    assert_eq!((c.flip, c.weight), (true, 4.0));
}

#[test]
fn odd_syndrome_without_boundary_is_malformed() {
    let g = DetectorGraph {
        num_detectors: 3,
        edges: vec![Edge { a: 0, b: 1, p: 0.01, weight: 1.0, observable: false }, Edge { a: 1, b: 2, p: 0.01, weight: 1.0, observable: false }],
        undetectable: vec![],
    };
    let dec = Decoder::new(g);
    assert!(matches!(dec.decode(&[0]), Err(DecodeError::Malformed(_))));
    assert!(matches!(dec.decode(&[0, 1, 2]), Err(DecodeError::Malformed(_))));
}

fn sc() -> SCParams {
    SCParams::from_eta(4.0, 0.25).unwrap()
}

#[test]
fn dijkstra_agrees_with_floyd_warshall() {
    let c = build_repetition_circuit(5, 5, &NoiseModel::repetition(&sc(), 2e-2)).unwrap();
    let g = DetectorGraph::from_circuit(&c).unwrap();
    let (a, b) = (Distances::dijkstra(&g), Distances::floyd_warshall(&g));
    for (x, y) in a.dist.iter().zip(&b.dist) {
        assert!((x - y).abs() < 1e-9 || (x.is_infinite() && y.is_infinite()));
    }
}

/// Minimum over pairings where each defect may instead go to the boundary.
fn brute_force_with_boundary(dm: &Distances, boundary: usize, defects: &[usize]) -> f64 {
    let k = defects.len();
    let w = |i: usize, j: usize| -> Option<f64> {
        let (i, j) = (i.min(j), i.max(j));
        let d = if j < k {
            dm.d(defects[i], defects[j])
        } else if i < k {
            if j - k == i {
                dm.d(defects[i], boundary)
            } else {
                f64::INFINITY
            }
        } else {
            0.0
        };
        d.is_finite().then_some(d)
    };
    brute_force_min_pairing(2 * k, w).unwrap()
}

#[test]
fn decoder_weight_matches_brute_force_on_circuit_graphs() {
    let c = build_repetition_circuit(5, 5, &NoiseModel::repetition(&sc(), 1e-2)).unwrap();
    let dec = Decoder::from_circuit(&c).unwrap();
    let oracle = Distances::floyd_warshall(&dec.graph);
    let n = dec.graph.num_detectors;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let k = rng.random_range(1..=6);
        let mut defects: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            defects.swap(i, j);
        }
        defects.truncate(k);
        defects.sort_unstable();
        let got = dec.decode_detailed(&defects).unwrap().weight;
        let want = brute_force_with_boundary(&oracle, n, &defects);
        assert!((got - want).abs() < 1e-5, "{defects:?}: {got} vs {want}");
    }
}

/// Every <= 2-fault pattern: corrected if within half the distance, else minimum weight.
fn check_low_weight_faults(dz: usize) {
    let c = build_repetition_circuit(dz, dz, &NoiseModel::repetition(&sc(), 1e-3)).unwrap();
    let em = ErrorModel::from_circuit(&c);
    let dec = Decoder::new(DetectorGraph::from_error_model(&em).unwrap());
    let oracle = Distances::floyd_warshall(&dec.graph);
    let bnd = dec.graph.boundary();
    let mech: Vec<_> = em.mechanisms.iter().filter(|m| m.pauli == Pauli::Z).collect();
    let correctable = (dz - 1) / 2;
    let mut patterns = 0;
    for (i, a) in mech.iter().enumerate() {
        for b in mech.iter().skip(i) {
            let (dets, obs, faults) = if std::ptr::eq(*a, *b) {
                (a.detectors.clone(), a.observable, 1)
            } else {
                (xor_sorted(&a.detectors, &b.detectors), a.observable ^ b.observable, 2)
            };
            let got = dec.decode_detailed(&dets).unwrap();
            if faults <= correctable {
                assert_eq!(got.flip, obs, "dz={dz} faults at ops {} and {} uncorrected", a.op, b.op);
            }
            let want = brute_force_with_boundary(&oracle, bnd, &dets);
            assert!((got.weight - want).abs() < 1e-5, "dz={dz}: {} vs {want}", got.weight);
            patterns += 1;
        }
    }
    assert!(patterns > mech.len());
}

#[test]
fn low_weight_faults_distance_three() {
    check_low_weight_faults(3);
}

#[test]
fn low_weight_faults_distance_five() {
    check_low_weight_faults(5);
}

#[test]
fn every_mechanism_is_graphlike_after_decomposition() {
    let c = build_repetition_circuit(7, 7, &NoiseModel::repetition(&sc(), 1e-2)).unwrap();
    let g = DetectorGraph::from_circuit(&c).unwrap();
    assert!(g.undetectable.is_empty());
    for e in &g.edges {
        assert!(e.p > 0.0 && e.p < 0.5 && e.weight.is_finite() && e.weight > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_is_optimal(seed in any::<u64>(), half in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * half;
        let edges = random_instance(&mut rng, n, 1.0);
        let (_, w) = min_weight_perfect_matching(n, &edges).unwrap();
        let b = brute_force_min_pairing(n, lookup(&edges)).unwrap();
        prop_assert!((w - b).abs() < 1e-6 * n as f64);
    }
}
