//! Detector error model, matching graph and minimum-weight perfect-matching decoder.

use crate::circuit::{Op, PauliCircuit};
use crate::matching::{min_weight_perfect_matching, MatchError};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("error mechanism at op {op} flips {count} detectors and cannot be decomposed")]
    Unmatchable { op: usize, count: usize },
    #[error("malformed graph: {0}")]
    Malformed(String),
    #[error(transparent)]
    Matching(#[from] MatchError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pauli {
    X,
    Z,
}

/// One independent error mechanism of the circuit and its effect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub op: usize,
    pub pauli: Pauli,
    pub qubits: Vec<usize>,
    pub p: f64,
    pub detectors: Vec<usize>,
    pub observable: bool,
    pub x_observable: bool,
}

/// Effects of all single error mechanisms; correlated pairs also carry their two halves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub num_detectors: usize,
    pub mechanisms: Vec<Mechanism>,
    /// For each mechanism index, the halves of a two-qubit Z error.
    pub components: BTreeMap<usize, [Mechanism; 2]>,
}

struct Site {
    op: usize,
    pauli: Pauli,
    qubits: Vec<usize>,
    p: f64,
}

fn enumerate_sites(c: &PauliCircuit) -> Vec<Site> {
    let mut out = Vec::new();
    for (oi, op) in c.ops.iter().enumerate() {
        match op {
            Op::ZError(p, qs) if *p > 0.0 => out.extend(qs.iter().map(|&q| Site { op: oi, pauli: Pauli::Z, qubits: vec![q], p: *p })),
            Op::XError(p, qs) if *p > 0.0 => out.extend(qs.iter().map(|&q| Site { op: oi, pauli: Pauli::X, qubits: vec![q], p: *p })),
            Op::CorrelatedZ(p, pairs) if *p > 0.0 => {
                out.extend(pairs.iter().map(|&(a, b)| Site { op: oi, pauli: Pauli::Z, qubits: vec![a, b], p: *p }))
            }
            _ => {}
        }
    }
    out
}

/// Propagates up to 64 single-site errors at once, one per bit.
fn propagate(c: &PauliCircuit, sites: &[Site]) -> Vec<(Vec<usize>, bool, bool)> {
    debug_assert!(sites.len() <= 64);
    let mut xf = vec![0u64; c.num_qubits];
    let mut zf = vec![0u64; c.num_qubits];
    let mut meas = Vec::with_capacity(c.num_measurements);
    let mut next = 0;
    for (oi, op) in c.ops.iter().enumerate() {
        match op {
            Op::ResetX(qs) => qs.iter().for_each(|&q| {
                zf[q] = 0;
                xf[q] = 0;
            }),
            Op::ResetZ(qs) => qs.iter().for_each(|&q| {
                zf[q] = 0;
                xf[q] = 0;
            }),
            Op::Cx(pairs) => pairs.iter().for_each(|&(a, b)| {
                zf[a] ^= zf[b];
                xf[b] ^= xf[a];
            }),
            Op::MeasX(qs) => meas.extend(qs.iter().map(|&q| zf[q])),
            Op::MeasZ(qs) => meas.extend(qs.iter().map(|&q| xf[q])),
            _ => {}
        }
        while next < sites.len() && sites[next].op == oi {
            let s = &sites[next];
            for &q in &s.qubits {
                match s.pauli {
                    Pauli::Z => zf[q] ^= 1 << next,
                    Pauli::X => xf[q] ^= 1 << next,
                }
            }
            next += 1;
        }
    }
    let parity = |idx: &[usize], v: &[u64]| idx.iter().fold(0u64, |acc, &i| acc ^ v[i]);
    let dets: Vec<u64> = c.detectors.iter().map(|d| parity(d, &meas)).collect();
    let obs = parity(&c.observable, &meas);
    let xobs = parity(&c.x_observable, &xf);
    (0..sites.len())
        .map(|b| {
            let flipped = dets.iter().enumerate().filter(|(_, &w)| w >> b & 1 == 1).map(|(d, _)| d).collect();
            (flipped, obs >> b & 1 == 1, xobs >> b & 1 == 1)
        })
        .collect()
}

impl ErrorModel {
    pub fn from_circuit(c: &PauliCircuit) -> Self {
        let sites = enumerate_sites(c);
        let mut halves = Vec::new();
        for (k, s) in sites.iter().enumerate() {
            if s.qubits.len() == 2 {
                for &q in &s.qubits {
                    halves.push((k, Site { op: s.op, pauli: s.pauli, qubits: vec![q], p: s.p }));
                }
            }
        }
        let run = |list: &[&Site]| -> Vec<Mechanism> {
            let owned: Vec<Site> = list.iter().map(|s| Site { op: s.op, pauli: s.pauli, qubits: s.qubits.clone(), p: s.p }).collect();
            owned
                .chunks(64)
                .flat_map(|chunk| {
                    propagate(c, chunk).into_iter().zip(chunk).map(|((detectors, observable, x_observable), s)| Mechanism {
                        op: s.op,
                        pauli: s.pauli,
                        qubits: s.qubits.clone(),
                        p: s.p,
                        detectors,
                        observable,
                        x_observable,
                    })
                })
                .collect()
        };
        let mechanisms = run(&sites.iter().collect::<Vec<_>>());
        let half_mechs = run(&halves.iter().map(|(_, s)| s).collect::<Vec<_>>());
        let mut components = BTreeMap::new();
        for (pair, chunk) in halves.chunks(2).zip(half_mechs.chunks(2)) {
            components.insert(pair[0].0, [chunk[0].clone(), chunk[1].clone()]);
        }
        Self { num_detectors: c.num_detectors(), mechanisms, components }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    /// Equal to the boundary index for a boundary edge.
    pub b: usize,
    pub p: f64,
    pub weight: f64,
    pub observable: bool,
}

/// Matching graph over Z-sensitive detectors; node `num_detectors` is the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorGraph {
    pub num_detectors: usize,
    pub edges: Vec<Edge>,
    /// Logical flips that no detector sees.
    pub undetectable: Vec<Mechanism>,
}

const P_MIN: f64 = 1e-300;
const P_MAX: f64 = 0.5 - 1e-12;

pub fn edge_weight(p: f64) -> f64 {
    let p = p.clamp(P_MIN, P_MAX);
    ((1.0 - p) / p).ln()
}

impl DetectorGraph {
    pub fn boundary(&self) -> usize {
        self.num_detectors
    }

    /// Graphlike decomposition of the Z-type mechanisms.
    ///
    /// A correlated pair flipping more than two detectors is replaced by its two halves,
    /// each carrying the full pair probability. Parallel edges are merged by XOR of
    /// independent events; the observable flag follows the likelier parity class.
    pub fn from_error_model(em: &ErrorModel) -> Result<Self, DecodeError> {
        let boundary = em.num_detectors;
        // joint distribution over (edge fired, observable flipped), indexed 2 * fired + flipped
        let mut acc: BTreeMap<(usize, usize), [f64; 4]> = BTreeMap::new();
        let mut undetectable = Vec::new();
        let mut add = |dets: &[usize], obs: bool, p: f64| {
            let key = match *dets {
                [a] => (a, boundary),
                [a, b] => (a.min(b), a.max(b)),
                _ => unreachable!(),
            };
            let s = acc.entry(key).or_insert([1.0, 0.0, 0.0, 0.0]);
            let o = obs as usize;
            let mut next = [0.0; 4];
            for (i, v) in next.iter_mut().enumerate() {
                let (f, b) = (i >> 1, i & 1);
                *v = s[i] * (1.0 - p) + s[2 * (1 - f) + (b ^ o)] * p;
            }
            *s = next;
        };
        for (k, m) in em.mechanisms.iter().enumerate() {
            if m.pauli != Pauli::Z {
                continue;
            }
            match m.detectors.len() {
                0 => {
                    if m.observable {
                        undetectable.push(m.clone());
                    }
                }
                1 | 2 => add(&m.detectors, m.observable, m.p),
                n => {
                    let halves = em.components.get(&k).ok_or(DecodeError::Unmatchable { op: m.op, count: n })?;
                    for h in halves {
                        if h.detectors.is_empty() || h.detectors.len() > 2 {
                            return Err(DecodeError::Unmatchable { op: m.op, count: h.detectors.len() });
                        }
                        add(&h.detectors, h.observable, m.p);
                    }
                }
            }
        }
        let edges = acc
            .into_iter()
            .map(|((a, b), s)| {
                let p = s[2] + s[3];
                Edge { a, b, p, weight: edge_weight(p), observable: s[3] > s[2] }
            })
            .collect();
        Ok(Self { num_detectors: boundary, edges, undetectable })
    }

    pub fn from_circuit(c: &PauliCircuit) -> Result<Self, DecodeError> {
        Self::from_error_model(&ErrorModel::from_circuit(c))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// All-pairs shortest paths with the observable parity of each path.
#[derive(Clone, Debug)]
pub struct Distances {
    pub n: usize,
    pub dist: Vec<f64>,
    pub parity: Vec<bool>,
}

impl Distances {
    pub fn dijkstra(g: &DetectorGraph) -> Self {
        let n = g.num_detectors + 1;
        let mut adj = vec![Vec::new(); n];
        for e in &g.edges {
            adj[e.a].push((e.b, e.weight, e.observable));
            adj[e.b].push((e.a, e.weight, e.observable));
        }
        let mut dist = vec![f64::INFINITY; n * n];
        let mut parity = vec![false; n * n];
        for s in 0..n {
            let row = &mut dist[s * n..(s + 1) * n];
            let prow = &mut parity[s * n..(s + 1) * n];
            row[s] = 0.0;
            let mut heap = BinaryHeap::from([HeapItem(0.0, s)]);
            while let Some(HeapItem(d, u)) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, w, o) in &adj[u] {
                    let nd = d + w;
                    if nd < row[v] {
                        row[v] = nd;
                        prow[v] = prow[u] ^ o;
                        heap.push(HeapItem(nd, v));
                    }
                }
            }
        }
        Self { n, dist, parity }
    }

    /// Independent O(n^3) reference.
    pub fn floyd_warshall(g: &DetectorGraph) -> Self {
        let n = g.num_detectors + 1;
        let mut dist = vec![f64::INFINITY; n * n];
        let mut parity = vec![false; n * n];
        for i in 0..n {
            dist[i * n + i] = 0.0;
        }
        for e in &g.edges {
            for (a, b) in [(e.a, e.b), (e.b, e.a)] {
                if e.weight < dist[a * n + b] {
                    dist[a * n + b] = e.weight;
                    parity[a * n + b] = e.observable;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let via = dist[i * n + k] + dist[k * n + j];
                    if via < dist[i * n + j] {
                        dist[i * n + j] = via;
                        parity[i * n + j] = parity[i * n + k] ^ parity[k * n + j];
                    }
                }
            }
        }
        Self { n, dist, parity }
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn flip(&self, i: usize, j: usize) -> bool {
        self.parity[i * self.n + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correction {
    pub flip: bool,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct Decoder {
    pub graph: DetectorGraph,
    pub distances: Distances,
}

impl Decoder {
    pub fn new(graph: DetectorGraph) -> Self {
        let distances = Distances::dijkstra(&graph);
        Self { graph, distances }
    }

    pub fn from_circuit(c: &PauliCircuit) -> Result<Self, DecodeError> {
        Ok(Self::new(DetectorGraph::from_circuit(c)?))
    }

    pub fn decode(&self, defects: &[usize]) -> Result<bool, DecodeError> {
        self.decode_detailed(defects).map(|c| c.flip)
    }

    /// Minimum-weight pairing of the defects, each optionally matched to the boundary.
    pub fn decode_detailed(&self, defects: &[usize]) -> Result<Correction, DecodeError> {
        let dm = &self.distances;
        let bnd = self.graph.boundary();
        let k = defects.len();
        let to_b = |i: usize| dm.d(defects[i], bnd);
        match k {
            0 => return Ok(Correction { flip: false, weight: 0.0 }),
            1 => {
                let w = to_b(0);
                if !w.is_finite() {
                    return Err(DecodeError::Malformed(format!("defect {} cannot reach the boundary", defects[0])));
                }
                return Ok(Correction { flip: dm.flip(defects[0], bnd), weight: w });
            }
            2 => {
                let pair = dm.d(defects[0], defects[1]);
                let via = to_b(0) + to_b(1);
                if !pair.is_finite() && !via.is_finite() {
                    return Err(DecodeError::Malformed("isolated defects".into()));
                }
                return Ok(if pair <= via {
                    Correction { flip: dm.flip(defects[0], defects[1]), weight: pair }
                } else {
                    Correction { flip: dm.flip(defects[0], bnd) ^ dm.flip(defects[1], bnd), weight: via }
                });
            }
            _ => {}
        }
        // vertices 0..k are defects, k..2k their boundary twins
        let mut edges = Vec::with_capacity(k * k);
        for i in 0..k {
            let bi = to_b(i);
            for j in i + 1..k {
                let dij = dm.d(defects[i], defects[j]);
                // a pair costlier than both boundary routes is never needed
                if dij.is_finite() && dij < bi + to_b(j) {
                    edges.push((i, j, dij));
                }
            }
            if bi.is_finite() {
                edges.push((i, k + i, bi));
                for j in i + 1..k {
                    if to_b(j).is_finite() {
                        edges.push((k + i, k + j, 0.0));
                    }
                }
            }
        }
        let (mate, weight) = min_weight_perfect_matching(2 * k, &edges).map_err(|e| match e {
            MatchError::NoPerfectMatching(_) => DecodeError::Malformed("odd defect set without boundary access".into()),
            other => DecodeError::Matching(other),
        })?;
        let mut flip = false;
        for i in 0..k {
            let m = mate[i];
            if m < k {
                if i < m {
                    flip ^= dm.flip(defects[i], defects[m]);
                }
            } else {
                flip ^= dm.flip(defects[i], bnd);
            }
        }
        Ok(Correction { flip, weight })
    }
}
