//! Stabilizer circuits with Pauli error sites, detectors and logical observables.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! QUBITS 5
//! RX 0 1 2            # reset to |+>
//! R 3                 # reset to |0>
//! CX 3 0 4 1          # control/target pairs
//! Z_ERROR(0.001) 0 1  # independent Z per target
//! X_ERROR(0.001) 0
//! ZZ_ERROR(0.001) 3 0 # Z on both qubits of each pair
//! MX 3 4              # X-basis measurement, appends one record per target
//! M 3                 # Z-basis measurement
//! TICK
//! DETECTOR 0 2        # parity of absolute measurement records
//! OBSERVABLE 4        # records whose parity is the Z-sensitive logical
//! X_OBSERVABLE 0 1 2  # qubits whose final X-frame parity is the bit-flip logical
//! ```

use crate::noise::NoiseModel;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("invalid distance {0}: must be odd and >= 3")]
    Distance(usize),
    #[error("rounds must be >= 1")]
    Rounds,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("malformed circuit: {0}")]
    Malformed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Op {
    ResetX(Vec<usize>),
    ResetZ(Vec<usize>),
    Cx(Vec<(usize, usize)>),
    MeasX(Vec<usize>),
    MeasZ(Vec<usize>),
    ZError(f64, Vec<usize>),
    XError(f64, Vec<usize>),
    CorrelatedZ(f64, Vec<(usize, usize)>),
    Tick,
}

impl Op {
    pub fn is_error(&self) -> bool {
        matches!(self, Op::ZError(..) | Op::XError(..) | Op::CorrelatedZ(..))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PauliCircuit {
    pub num_qubits: usize,
    pub ops: Vec<Op>,
    pub num_measurements: usize,
    pub detectors: Vec<Vec<usize>>,
    pub observable: Vec<usize>,
    pub x_observable: Vec<usize>,
}

impl PauliCircuit {
    pub fn num_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn has_bit_flips(&self) -> bool {
        self.ops.iter().any(|op| matches!(op, Op::XError(p, _) if *p > 0.0))
    }

    pub fn check(&self) -> Result<(), CircuitError> {
        let bad = |m: String| Err(CircuitError::Malformed(m));
        let mut nmeas = 0;
        for op in &self.ops {
            let qs: Vec<usize> = match op {
                Op::ResetX(q) | Op::ResetZ(q) | Op::ZError(_, q) | Op::XError(_, q) => q.clone(),
                Op::MeasX(q) | Op::MeasZ(q) => {
                    nmeas += q.len();
                    q.clone()
                }
                Op::Cx(pairs) | Op::CorrelatedZ(_, pairs) => {
                    let mut flat: Vec<usize> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
                    let n = flat.len();
                    flat.sort_unstable();
                    flat.dedup();
                    if flat.len() != n {
                        return bad(format!("qubit reused within {op:?}"));
                    }
                    flat
                }
                Op::Tick => vec![],
            };
            if let Some(q) = qs.iter().find(|&&q| q >= self.num_qubits) {
                return bad(format!("qubit {q} out of range"));
            }
            if let Op::ZError(p, _) | Op::XError(p, _) | Op::CorrelatedZ(p, _) = op {
                if !(0.0..=1.0).contains(p) {
                    return bad(format!("probability {p}"));
                }
            }
        }
        if nmeas != self.num_measurements {
            return bad(format!("{nmeas} measurements, header says {}", self.num_measurements));
        }
        for d in self.detectors.iter().chain(std::iter::once(&self.observable)) {
            if let Some(m) = d.iter().find(|&&m| m >= nmeas) {
                return bad(format!("record {m} out of range"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let join_pairs = |v: &[(usize, usize)]| v.iter().map(|(a, b)| format!("{a} {b}")).collect::<Vec<_>>().join(" ");
        writeln!(s, "QUBITS {}", self.num_qubits).unwrap();
        for op in &self.ops {
            let line = match op {
                Op::ResetX(q) => format!("RX {}", join(q)),
                Op::ResetZ(q) => format!("R {}", join(q)),
                Op::Cx(p) => format!("CX {}", join_pairs(p)),
                Op::MeasX(q) => format!("MX {}", join(q)),
                Op::MeasZ(q) => format!("M {}", join(q)),
                Op::ZError(p, q) => format!("Z_ERROR({p}) {}", join(q)),
                Op::XError(p, q) => format!("X_ERROR({p}) {}", join(q)),
                Op::CorrelatedZ(p, q) => format!("ZZ_ERROR({p}) {}", join_pairs(q)),
                Op::Tick => "TICK".to_string(),
            };
            writeln!(s, "{line}").unwrap();
        }
        for d in &self.detectors {
            writeln!(s, "DETECTOR {}", join(d)).unwrap();
        }
        writeln!(s, "OBSERVABLE {}", join(&self.observable)).unwrap();
        writeln!(s, "X_OBSERVABLE {}", join(&self.x_observable)).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CircuitError> {
        let mut c = PauliCircuit::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CircuitError::Parse { line: i + 1, msg };
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap();
            let args: Vec<usize> = parts.map(|t| t.parse::<usize>().map_err(|e| err(format!("{t}: {e}")))).collect::<Result<_, _>>()?;
            let (name, prob) = match head.find('(') {
                Some(k) if head.ends_with(')') => {
                    let p: f64 = head[k + 1..head.len() - 1].parse().map_err(|e| err(format!("{head}: {e}")))?;
                    (&head[..k], Some(p))
                }
                _ => (head, None),
            };
            let pairs = || -> Result<Vec<(usize, usize)>, CircuitError> {
                if !args.len().is_multiple_of(2) {
                    return Err(err("odd number of pair targets".into()));
                }
                Ok(args.chunks(2).map(|w| (w[0], w[1])).collect())
            };
            let need_p = || prob.ok_or_else(|| err(format!("{name} needs a probability")));
            match name {
                "QUBITS" => c.num_qubits = *args.first().ok_or_else(|| err("missing count".into()))?,
                "RX" => c.ops.push(Op::ResetX(args)),
                "R" => c.ops.push(Op::ResetZ(args)),
                "CX" => c.ops.push(Op::Cx(pairs()?)),
                "MX" => {
                    c.num_measurements += args.len();
                    c.ops.push(Op::MeasX(args))
                }
                "M" => {
                    c.num_measurements += args.len();
                    c.ops.push(Op::MeasZ(args))
                }
                "Z_ERROR" => c.ops.push(Op::ZError(need_p()?, args)),
                "X_ERROR" => c.ops.push(Op::XError(need_p()?, args)),
                "ZZ_ERROR" => c.ops.push(Op::CorrelatedZ(need_p()?, pairs()?)),
                "TICK" => c.ops.push(Op::Tick),
                "DETECTOR" => c.detectors.push(args),
                "OBSERVABLE" => c.observable = args,
                "X_OBSERVABLE" => c.x_observable = args,
                other => return Err(err(format!("unknown instruction {other}"))),
            }
        }
        c.check()?;
        Ok(c)
    }
}

struct Builder {
    c: PauliCircuit,
}

impl Builder {
    fn new(num_qubits: usize) -> Self {
        Self { c: PauliCircuit { num_qubits, ..Default::default() } }
    }

    fn push(&mut self, op: Op) {
        let empty = match &op {
            Op::ResetX(q) | Op::ResetZ(q) | Op::MeasX(q) | Op::MeasZ(q) => q.is_empty(),
            Op::ZError(p, q) | Op::XError(p, q) => *p <= 0.0 || q.is_empty(),
            Op::CorrelatedZ(p, q) => *p <= 0.0 || q.is_empty(),
            Op::Cx(q) => q.is_empty(),
            Op::Tick => false,
        };
        if !empty {
            self.c.ops.push(op);
        }
    }

    fn measure(&mut self, qs: &[usize], x_basis: bool) -> Vec<usize> {
        let start = self.c.num_measurements;
        self.c.num_measurements += qs.len();
        self.c.ops.push(if x_basis { Op::MeasX(qs.to_vec()) } else { Op::MeasZ(qs.to_vec()) });
        (start..start + qs.len()).collect()
    }

    /// CX layer followed by its Z and bit-flip error sites.
    fn noisy_cx(&mut self, pairs: Vec<(usize, usize)>, nm: &NoiseModel) {
        let controls: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        self.push(Op::Cx(pairs.clone()));
        self.push(Op::ZError(nm.cx.p_zc, controls));
        self.push(Op::ZError(nm.cx.p_zt, targets.clone()));
        self.push(Op::CorrelatedZ(nm.cx.p_zczt, pairs));
        self.push(Op::XError(nm.cx.p_xy, targets));
    }
}

fn check_distance(d: usize, rounds: usize) -> Result<(), CircuitError> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(CircuitError::Distance(d));
    }
    if rounds == 0 {
        return Err(CircuitError::Rounds);
    }
    Ok(())
}

/// Phase-flip repetition code: `dz` data qubits in |+>, `dz - 1` ancillas measuring X_i X_{i+1}.
///
/// Qubits 0..dz are data, dz..2dz-1 ancillas. Each round: ancilla prep, two CX layers with
/// the ancilla as control, ancilla MX. A final noiseless data MX closes the detectors.
pub fn build_repetition_circuit(dz: usize, rounds: usize, nm: &NoiseModel) -> Result<PauliCircuit, CircuitError> {
    check_distance(dz, rounds)?;
    let data: Vec<usize> = (0..dz).collect();
    let anc: Vec<usize> = (dz..2 * dz - 1).collect();
    let mut b = Builder::new(2 * dz - 1);
    b.push(Op::ResetX(data.clone()));
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..rounds {
        b.push(Op::ZError(nm.data_round_z, data.clone()));
        b.push(Op::ResetX(anc.clone()));
        b.push(Op::ZError(nm.prep_plus.p_z, anc.clone()));
        b.push(Op::XError(nm.prep_plus.p_xy, anc.clone()));
        b.push(Op::ZError(nm.idle_during_prep(), data.clone()));
        for layer in 0..2 {
            let pairs: Vec<(usize, usize)> = anc.iter().enumerate().map(|(i, &a)| (a, data[i + layer])).collect();
            b.noisy_cx(pairs, nm);
            let idle = if layer == 0 { data[dz - 1] } else { data[0] };
            b.push(Op::ZError(nm.idle_during_cx(), vec![idle]));
            b.push(Op::Tick);
        }
        if nm.measurement_errors {
            b.push(Op::ZError(nm.meas_x.p_z, anc.clone()));
        }
        let m = b.measure(&anc, true);
        for i in 0..anc.len() {
            let mut det = vec![m[i]];
            if let Some(p) = &prev {
                det.push(p[i]);
            }
            b.c.detectors.push(det);
        }
        prev = Some(m);
    }
    let last = prev.expect("rounds >= 1");
    let f = b.measure(&data, true);
    for i in 0..anc.len() {
        b.c.detectors.push(vec![f[i], f[i + 1], last[i]]);
    }
    b.c.observable = vec![f[dz - 1]];
    b.c.x_observable = data;
    Ok(b.c)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilizerType {
    X,
    Z,
}

/// A weight-2 or weight-4 plaquette; corners ordered (top-left, top-right, bottom-left, bottom-right).
#[derive(Clone, Debug, PartialEq)]
pub struct Plaquette {
    pub kind: StabilizerType,
    pub corners: [Option<usize>; 4],
}

/// Rotated layout with `rows` x `cols` data qubits (data index = row * cols + col).
///
/// X plaquettes sit on the left and right boundaries, Z plaquettes on the top and bottom,
/// so Z errors form strings along a row and the X-distance equals `cols`.
pub fn rotated_layout(rows: usize, cols: usize) -> Vec<Plaquette> {
    let (h, w) = (rows as i64, cols as i64);
    let at = |i: i64, j: i64| (0..h).contains(&i).then_some(()).and((0..w).contains(&j).then_some((i * w + j) as usize));
    let mut out = Vec::new();
    for i in -1..h {
        for j in -1..w {
            let corners = [at(i, j), at(i, j + 1), at(i + 1, j), at(i + 1, j + 1)];
            let n = corners.iter().filter(|c| c.is_some()).count();
            let kind = if (i + j).rem_euclid(2) == 0 { StabilizerType::X } else { StabilizerType::Z };
            let keep = match n {
                4 => true,
                2 => match kind {
                    StabilizerType::Z => i == -1 || i == h - 1,
                    StabilizerType::X => j == -1 || j == w - 1,
                },
                _ => false,
            };
            if keep {
                out.push(Plaquette { kind, corners });
            }
        }
    }
    out
}

const X_ORDER: [usize; 4] = [0, 2, 1, 3];
const Z_ORDER: [usize; 4] = [0, 1, 2, 3];

/// Thin rotated surface code, `dz` rows by `dx` columns, memory of the X-basis logical.
///
/// X-type ancillas control their CXs, Z-type ancillas are targets. Only X-type checks
/// carry detectors; the observable is the product of data MX results along row 0.
pub fn build_surface_circuit(dx: usize, dz: usize, rounds: usize, nm: &NoiseModel) -> Result<PauliCircuit, CircuitError> {
    check_distance(dz, rounds)?;
    check_distance(dx, 1)?;
    let plaq = rotated_layout(dz, dx);
    let nd = dz * dx;
    let data: Vec<usize> = (0..nd).collect();
    let anc: Vec<usize> = (nd..nd + plaq.len()).collect();
    let x_idx: Vec<usize> = (0..plaq.len()).filter(|&k| plaq[k].kind == StabilizerType::X).collect();
    let xa: Vec<usize> = x_idx.iter().map(|&k| anc[k]).collect();
    let za: Vec<usize> = (0..plaq.len()).filter(|&k| plaq[k].kind == StabilizerType::Z).map(|k| anc[k]).collect();
    let mut b = Builder::new(nd + plaq.len());
    b.push(Op::ResetX(data.clone()));
    let mut prev: Option<Vec<usize>> = None;
    for _ in 0..rounds {
        b.push(Op::ZError(nm.data_round_z, data.clone()));
        b.push(Op::ResetX(xa.clone()));
        b.push(Op::ResetZ(za.clone()));
        b.push(Op::ZError(nm.prep_plus.p_z, xa.clone()));
        b.push(Op::ZError(nm.idle_during_prep(), data.clone()));
        for step in 0..4 {
            let mut pairs = Vec::new();
            let mut busy = vec![false; b.c.num_qubits];
            for (k, p) in plaq.iter().enumerate() {
                let order = if p.kind == StabilizerType::X { X_ORDER } else { Z_ORDER };
                if let Some(q) = p.corners[order[step]] {
                    let pair = if p.kind == StabilizerType::X { (anc[k], q) } else { (q, anc[k]) };
                    busy[q] = true;
                    busy[anc[k]] = true;
                    pairs.push(pair);
                }
            }
            b.noisy_cx(pairs, nm);
            let idle: Vec<usize> = (0..b.c.num_qubits).filter(|&q| !busy[q]).collect();
            b.push(Op::ZError(nm.idle_during_cx(), idle));
            b.push(Op::Tick);
        }
        if nm.measurement_errors {
            b.push(Op::ZError(nm.meas_x.p_z, xa.clone()));
        }
        let mx = b.measure(&xa, true);
        b.measure(&za, false);
        for i in 0..xa.len() {
            let mut det = vec![mx[i]];
            if let Some(p) = &prev {
                det.push(p[i]);
            }
            b.c.detectors.push(det);
        }
        prev = Some(mx);
    }
    let last = prev.expect("rounds >= 1");
    let f = b.measure(&data, true);
    for (i, &k) in x_idx.iter().enumerate() {
        let mut det: Vec<usize> = plaq[k].corners.iter().flatten().map(|&q| f[q]).collect();
        det.push(last[i]);
        b.c.detectors.push(det);
    }
    b.c.observable = (0..dx).map(|j| f[j]).collect();
    b.c.x_observable = (0..dz).map(|i| i * dx).collect();
    Ok(b.c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thin_layout_is_a_valid_stabilizer_group() {
        for (h, w) in [(3, 3), (5, 3), (7, 3)] {
            let p = rotated_layout(h, w);
            assert_eq!(p.len(), h * w - 1);
            for a in p.iter().filter(|q| q.kind == StabilizerType::X) {
                for b in p.iter().filter(|q| q.kind == StabilizerType::Z) {
                    let overlap = a.corners.iter().flatten().filter(|q| b.corners.contains(&Some(**q))).count();
                    assert_eq!(overlap % 2, 0);
                }
            }
            // the row-0 X string commutes with every Z check
            for b in p.iter().filter(|q| q.kind == StabilizerType::Z) {
                assert_eq!(b.corners.iter().flatten().filter(|&&q| q < w).count() % 2, 0);
            }
        }
    }

    #[test]
    fn builders_produce_consistent_circuits() {
        let nm = NoiseModel::code_capacity(0.01);
        build_repetition_circuit(5, 5, &nm).unwrap().check().unwrap();
        build_surface_circuit(3, 5, 5, &nm).unwrap().check().unwrap();
        assert!(build_repetition_circuit(4, 1, &nm).is_err());
    }
}
