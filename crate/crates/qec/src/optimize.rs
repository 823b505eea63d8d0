//! Minimum logical error of the repetition code over distance and CX duration.
//!
//! Uses the fitted scaling laws: p_L^Z from the per-CX phase-flip budget
//! p' = p_Zt + p_ZcZt = nbar kappa1 T, and p_L^X = 2 dZ (dZ - 1) p_XY with the
//! stabilized bit-flip probability p_XY proportional to 1/(kappa2 T).

use crate::circuit::build_repetition_circuit;
use crate::mc::{run_mc, MCResult};
use crate::noise::NoiseModel;
use serde::{Deserialize, Serialize};
use sqcat_core::code::SCParams;
use sqcat_core::rates;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("ratio {ratio} is above threshold at every allowed gate time (p' = {p_prime})")]
    AboveThreshold { ratio: f64, p_prime: f64 },
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinLogicalOptions {
    pub max_dz: usize,
    /// Lower bound on kappa2 T.
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
    /// Multiplies p_XY; 0 removes bit flips entirely.
    pub bitflip_scale: f64,
}

impl Default for MinLogicalOptions {
    fn default() -> Self {
        Self { max_dz: 201, tau_min: 1.0, tau_max: 100.0, tau_points: 400, bitflip_scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinLogical {
    pub dz: usize,
    pub kappa2_t: f64,
    pub p_l: f64,
    pub p_lz: f64,
    pub p_lx: f64,
    pub p_prime: f64,
    pub p_xy: f64,
}

pub fn phase_flip_budget(sc: &SCParams, ratio: f64, tau: f64) -> f64 {
    ratio * sc.nbar * tau
}

/// Grid search over odd dZ <= max_dz and log-spaced kappa2 T in [tau_min, tau_max].
pub fn minimize_logical_error(sc: &SCParams, ratio: f64, opts: &MinLogicalOptions) -> Result<MinLogical, OptimizeError> {
    if opts.max_dz < 3 || opts.tau_points < 2 || !(opts.tau_min > 0.0 && opts.tau_max > opts.tau_min) {
        return Err(OptimizeError::InvalidOption(format!("{opts:?}")));
    }
    let p_min = phase_flip_budget(sc, ratio, opts.tau_min);
    if !rates::below_threshold(p_min) {
        return Err(OptimizeError::AboveThreshold { ratio, p_prime: p_min });
    }
    let mut best: Option<MinLogical> = None;
    for k in 0..opts.tau_points {
        let tau = opts.tau_min * (opts.tau_max / opts.tau_min).powf(k as f64 / (opts.tau_points - 1) as f64);
        let p_prime = phase_flip_budget(sc, ratio, tau);
        if !rates::below_threshold(p_prime) {
            break;
        }
        let p_xy = opts.bitflip_scale * rates::idle_bitflip(sc, 1.0, tau);
        for dz in (3..=opts.max_dz).step_by(2) {
            let (p_lz, p_lx) = rates::repetition_logical_fit(dz, p_prime, p_xy).expect("odd distance");
            let p_l = p_lz + p_lx;
            if best.is_none_or(|b| p_l < b.p_l) {
                best = Some(MinLogical { dz, kappa2_t: tau, p_l, p_lz, p_lx, p_prime, p_xy });
            }
        }
    }
    Ok(best.expect("at least one sub-threshold grid point"))
}

/// Monte Carlo check of the optimum, only where the predicted rate is resolvable.
pub fn verify_by_mc(sc: &SCParams, ratio: f64, point: &MinLogical, shots: u64, seed: u64) -> Option<MCResult> {
    if point.p_l < 1e-8 || (point.p_l * shots as f64) < 10.0 {
        return None;
    }
    let nm = NoiseModel::repetition_with_cx_time(sc, ratio, point.kappa2_t);
    let c = build_repetition_circuit(point.dz, point.dz, &nm).ok()?;
    run_mc(&c, shots, seed).ok()
}
