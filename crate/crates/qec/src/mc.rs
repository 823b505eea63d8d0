//! Monte Carlo estimation of logical failure rates.

use crate::circuit::PauliCircuit;
use crate::decoder::{DecodeError, Decoder, ErrorModel, Pauli};
use crate::sampler::{FrameSampler, BATCH};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Shots drawn from one RNG stream; fixes the work partition independently of thread count.
pub const CHUNK_SHOTS: usize = 64 * BATCH;

const Z95: f64 = 1.959963984540054;

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(failures: u64, shots: u64) -> (f64, f64) {
    if shots == 0 {
        return (0.0, 1.0);
    }
    let n = shots as f64;
    let p = failures as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCResult {
    pub shots: u64,
    pub z_failures: u64,
    pub x_failures: u64,
    pub z_ci: (f64, f64),
    pub x_ci: (f64, f64),
}

impl MCResult {
    fn from_counts(shots: u64, z: u64, x: u64) -> Self {
        Self { shots, z_failures: z, x_failures: x, z_ci: wilson_interval(z, shots), x_ci: wilson_interval(x, shots) }
    }

    pub fn z_rate(&self) -> f64 {
        self.z_failures as f64 / self.shots as f64
    }

    pub fn x_rate(&self) -> f64 {
        self.x_failures as f64 / self.shots as f64
    }

    /// Either logical failing.
    pub fn total_rate(&self) -> f64 {
        self.z_rate() + self.x_rate()
    }
}

/// Circuit plus its decoder, reusable across many sampling calls.
pub struct Experiment {
    pub circuit: PauliCircuit,
    pub decoder: Decoder,
}

impl Experiment {
    pub fn new(circuit: PauliCircuit) -> Result<Self, DecodeError> {
        let decoder = Decoder::from_circuit(&circuit)?;
        Ok(Self { circuit, decoder })
    }

    fn run_chunk(&self, seed: u64, chunk: u64, shots: usize) -> Result<(u64, u64), DecodeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(chunk);
        let sampler = FrameSampler::new(&self.circuit);
        let mut cache: HashMap<Vec<usize>, bool> = HashMap::new();
        let (mut z, mut x) = (0u64, 0u64);
        let mut left = shots;
        while left > 0 {
            let n = left.min(BATCH);
            left -= n;
            let batch = sampler.sample(&mut rng, n);
            x += batch.x_observable.count_ones() as u64;
            for (s, defects) in batch.defects_per_shot().into_iter().enumerate() {
                let predicted = match cache.get(&defects) {
                    Some(&f) => f,
                    None => {
                        let f = self.decoder.decode(&defects)?;
                        if defects.len() <= 8 {
                            cache.insert(defects, f);
                        }
                        f
                    }
                };
                if predicted != (batch.observable >> s & 1 == 1) {
                    z += 1;
                }
            }
        }
        Ok((z, x))
    }

    /// Bit-for-bit reproducible for a fixed seed, independent of the thread count.
    pub fn run(&self, shots: u64, seed: u64) -> Result<MCResult, DecodeError> {
        let chunks = shots.div_ceil(CHUNK_SHOTS as u64);
        let counts: Vec<(u64, u64)> = (0..chunks)
            .into_par_iter()
            .map(|k| {
                let n = (shots - k * CHUNK_SHOTS as u64).min(CHUNK_SHOTS as u64) as usize;
                self.run_chunk(seed, k, n)
            })
            .collect::<Result<_, _>>()?;
        let (z, x) = counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        Ok(MCResult::from_counts(shots, z, x))
    }
}

pub fn run_mc(circuit: &PauliCircuit, shots: u64, seed: u64) -> Result<MCResult, DecodeError> {
    Experiment::new(circuit.clone())?.run(shots, seed)
}

/// Per-detector firing frequencies over `shots` noisy samples.
pub fn detector_frequencies(circuit: &PauliCircuit, shots: u64, seed: u64) -> Vec<f64> {
    let chunks = shots.div_ceil(CHUNK_SHOTS as u64);
    let counts: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            let sampler = FrameSampler::new(circuit);
            let mut c = vec![0u64; circuit.num_detectors()];
            let mut left = (shots - k * CHUNK_SHOTS as u64).min(CHUNK_SHOTS as u64) as usize;
            while left > 0 {
                let n = left.min(BATCH);
                left -= n;
                let b = sampler.sample(&mut rng, n);
                for (ci, w) in c.iter_mut().zip(&b.detectors) {
                    *ci += w.count_ones() as u64;
                }
            }
            c
        })
        .collect();
    let mut total = vec![0u64; circuit.num_detectors()];
    for c in counts {
        for (t, v) in total.iter_mut().zip(c) {
            *t += v;
        }
    }
    total.into_iter().map(|t| t as f64 / shots as f64).collect()
}

/// Symmetric difference of two sorted detector lists.
pub fn xor_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(*x);
                i += 1;
            }
            (Some(x), None) => {
                out.push(*x);
                i += 1;
            }
            (_, Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Logical-Z failure probability summed over all fault sets of size <= `max_order` (1 or 2).
pub fn low_order_failure_probability(exp: &Experiment, max_order: usize) -> Result<f64, DecodeError> {
    let em = ErrorModel::from_circuit(&exp.circuit);
    let mech: Vec<_> = em.mechanisms.iter().filter(|m| m.pauli == Pauli::Z).collect();
    let none: f64 = mech.iter().map(|m| 1.0 - m.p).product();
    let odds: Vec<f64> = mech.iter().map(|m| m.p / (1.0 - m.p)).collect();
    let fails = |dets: &[usize], obs: bool| exp.decoder.decode(dets).map(|f| f != obs);
    let mut total = 0.0;
    for (i, a) in mech.iter().enumerate() {
        if fails(&a.detectors, a.observable)? {
            total += odds[i];
        }
        if max_order >= 2 {
            for (j, b) in mech.iter().enumerate().skip(i + 1) {
                if fails(&xor_sorted(&a.detectors, &b.detectors), a.observable ^ b.observable)? {
                    total += odds[i] * odds[j];
                }
            }
        }
    }
    Ok(none * total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(10, 1000);
        assert!(lo < 0.01 && hi > 0.01);
        let (lo, hi) = wilson_interval(0, 1000);
        assert!(lo < 1e-12);
        assert!(hi > 0.0 && hi < 0.005);
    }
}
