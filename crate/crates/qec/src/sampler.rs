//! Bit-packed Pauli-frame sampler: 64 shots per machine word.
//!
//! Bit `s` of every word belongs to shot `s`. The Z frame is always tracked; the X frame
//! only when the circuit contains bit-flip sites or gauge randomization is requested.

use crate::circuit::{Op, PauliCircuit};
use rand::{Rng, RngCore};

pub const BATCH: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSample {
    pub shots: usize,
    /// One word per detector.
    pub detectors: Vec<u64>,
    /// Flip of the Z-sensitive logical observable.
    pub observable: u64,
    /// Final X-frame parity over the bit-flip observable qubits.
    pub x_observable: u64,
}

impl BatchSample {
    pub fn shot_mask(&self) -> u64 {
        if self.shots >= BATCH {
            u64::MAX
        } else {
            (1u64 << self.shots) - 1
        }
    }

    /// Detector indices that fired in each shot.
    pub fn defects_per_shot(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.shots];
        let mask = self.shot_mask();
        for (d, &w) in self.detectors.iter().enumerate() {
            let mut w = w & mask;
            while w != 0 {
                out[w.trailing_zeros() as usize].push(d);
                w &= w - 1;
            }
        }
        out
    }
}

/// Word whose first `n` bits are independent Bernoulli(p).
pub fn bernoulli_word<R: RngCore>(rng: &mut R, p: f64, n: usize) -> u64 {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return if n >= BATCH { u64::MAX } else { (1u64 << n) - 1 };
    }
    if p > 0.25 {
        let mut w = 0u64;
        for i in 0..n {
            if rng.random::<f64>() < p {
                w |= 1 << i;
            }
        }
        return w;
    }
    // geometric gaps between successes
    let log_q = (-p).ln_1p();
    let mut w = 0u64;
    let mut i = 0usize;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if gap >= (n - i) as f64 {
            return w;
        }
        i += gap as usize;
        w |= 1 << i;
        i += 1;
        if i >= n {
            return w;
        }
    }
}

pub struct FrameSampler<'a> {
    circuit: &'a PauliCircuit,
    track_x: bool,
    randomize_gauge: bool,
}

impl<'a> FrameSampler<'a> {
    pub fn new(circuit: &'a PauliCircuit) -> Self {
        Self { circuit, track_x: circuit.has_bit_flips(), randomize_gauge: false }
    }

    /// Randomize the frame component that acts trivially after each reset and measurement.
    ///
    /// Detectors stay deterministic under this only if they are genuine stabilizer parities.
    /// The bit-flip observable is meaningless in this mode.
    pub fn with_gauge_randomization(mut self) -> Self {
        self.randomize_gauge = true;
        self.track_x = true;
        self
    }

    pub fn sample<R: RngCore>(&self, rng: &mut R, shots: usize) -> BatchSample {
        assert!(shots <= BATCH);
        let c = self.circuit;
        let mut xf = vec![0u64; c.num_qubits];
        let mut zf = vec![0u64; c.num_qubits];
        let mut meas = Vec::with_capacity(c.num_measurements);
        let gauge = |rng: &mut R| if self.randomize_gauge { rng.next_u64() } else { 0 };
        for op in &c.ops {
            match op {
                Op::ResetX(qs) => {
                    for &q in qs {
                        zf[q] = 0;
                        xf[q] = gauge(rng);
                    }
                }
                Op::ResetZ(qs) => {
                    for &q in qs {
                        xf[q] = 0;
                        zf[q] = gauge(rng);
                    }
                }
                Op::Cx(pairs) => {
                    for &(ctl, tgt) in pairs {
                        zf[ctl] ^= zf[tgt];
                        if self.track_x {
                            xf[tgt] ^= xf[ctl];
                        }
                    }
                }
                Op::MeasX(qs) => {
                    for &q in qs {
                        meas.push(zf[q]);
                        if self.randomize_gauge {
                            xf[q] = rng.next_u64();
                        }
                    }
                }
                Op::MeasZ(qs) => {
                    for &q in qs {
                        meas.push(xf[q]);
                        if self.randomize_gauge {
                            zf[q] = rng.next_u64();
                        }
                    }
                }
                Op::ZError(p, qs) => {
                    for &q in qs {
                        zf[q] ^= bernoulli_word(rng, *p, shots);
                    }
                }
                Op::XError(p, qs) => {
                    for &q in qs {
                        xf[q] ^= bernoulli_word(rng, *p, shots);
                    }
                }
                Op::CorrelatedZ(p, pairs) => {
                    for &(a, b) in pairs {
                        let w = bernoulli_word(rng, *p, shots);
                        zf[a] ^= w;
                        zf[b] ^= w;
                    }
                }
                Op::Tick => {}
            }
        }
        let parity = |idx: &[usize], v: &[u64]| idx.iter().fold(0u64, |acc, &i| acc ^ v[i]);
        let mask = if shots >= BATCH { u64::MAX } else { (1u64 << shots) - 1 };
        BatchSample {
            shots,
            detectors: c.detectors.iter().map(|d| parity(d, &meas) & mask).collect(),
            observable: parity(&c.observable, &meas) & mask,
            x_observable: if self.randomize_gauge { 0 } else { parity(&c.x_observable, &xf) & mask },
        }
    }
}
