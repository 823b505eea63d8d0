//! Threshold scans and the finite-size scaling fit.
//!
//! Near threshold p_L = A + B x + C x^2 with x = (ln r - ln r_th) d^(1/nu), r = kappa1/kappa2.

use crate::circuit::{build_repetition_circuit, build_surface_circuit, CircuitError, PauliCircuit};
use crate::decoder::DecodeError;
use crate::mc::{Experiment, MCResult};
use crate::noise::NoiseModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("no crossing of the logical-error curves inside the scanned range")]
    Bracket,
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "code")]
pub enum CodeKind {
    Repetition,
    Surface { dx: usize },
}

/// Memory experiment of `dz` noisy rounds followed by a perfect data readout.
pub fn build_memory_circuit(code: CodeKind, dz: usize, nm: &NoiseModel) -> Result<PauliCircuit, CircuitError> {
    match code {
        CodeKind::Repetition => build_repetition_circuit(dz, dz, nm),
        CodeKind::Surface { dx } => build_surface_circuit(dx, dz, dz, nm),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub dz: usize,
    pub ratio: f64,
    pub result: MCResult,
}

impl ThresholdPoint {
    pub fn rate(&self) -> f64 {
        self.result.z_rate()
    }
}

/// Runs every (distance, ratio) point; seeds are derived per point.
pub fn scan(
    code: CodeKind,
    dzs: &[usize],
    ratios: &[f64],
    shots: u64,
    seed: u64,
    noise: impl Fn(f64) -> NoiseModel + Sync,
) -> Result<Vec<ThresholdPoint>, ThresholdError> {
    let jobs: Vec<(usize, usize, f64)> = dzs.iter().flat_map(|&d| ratios.iter().enumerate().map(move |(i, &r)| (d, i, r))).collect();
    jobs.par_iter()
        .map(|&(dz, i, ratio)| {
            let circuit = build_memory_circuit(code, dz, &noise(ratio))?;
            let point_seed = seed ^ ((dz as u64) << 32) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let result = Experiment::new(circuit)?.run(shots, point_seed)?;
            Ok(ThresholdPoint { dz, ratio, result })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub ratio: f64,
    pub ci: (f64, f64),
    pub nu: f64,
    /// Median pairwise crossing used to centre the fit window.
    pub crossing: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    pub coefficients: [f64; 3],
}

pub const WINDOW_HALF_WIDTH: f64 = 0.4;
pub const BOOTSTRAP_REPLICATES: usize = 200;

fn distances(points: &[ThresholdPoint]) -> Vec<usize> {
    let mut d: Vec<usize> = points.iter().map(|p| p.dz).collect();
    d.sort_unstable();
    d.dedup();
    d
}

fn ratios(points: &[ThresholdPoint]) -> Vec<f64> {
    let mut r: Vec<f64> = points.iter().map(|p| p.ratio).collect();
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// Median over consecutive distance pairs of the ratio where their curves cross.
pub fn pairwise_crossing(points: &[ThresholdPoint]) -> Result<f64, ThresholdError> {
    let ds = distances(points);
    let rs = ratios(points);
    let curve = |d: usize| -> Vec<f64> {
        rs.iter()
            .map(|&r| {
                let p = points.iter().find(|p| p.dz == d && p.ratio == r).map(|p| p.rate()).unwrap_or(f64::NAN);
                p.max(1e-12).ln()
            })
            .collect()
    };
    let mut crossings = Vec::new();
    for w in ds.windows(2) {
        let (lo, hi) = (curve(w[0]), curve(w[1]));
        let diff: Vec<f64> = hi.iter().zip(&lo).map(|(a, b)| a - b).collect();
        for k in 0..rs.len().saturating_sub(1) {
            let (a, b) = (diff[k], diff[k + 1]);
            if a.is_finite() && b.is_finite() && a < 0.0 && b >= 0.0 {
                let (la, lb) = (rs[k].ln(), rs[k + 1].ln());
                crossings.push((la + (lb - la) * a / (a - b)).exp());
                break;
            }
        }
    }
    if crossings.is_empty() {
        return Err(ThresholdError::Bracket);
    }
    crossings.sort_by(f64::total_cmp);
    Ok(crossings[crossings.len() / 2])
}

struct Obs {
    lnr: f64,
    d: f64,
    p: f64,
    w: f64,
}

fn observations(points: &[&ThresholdPoint], rates: &[f64]) -> Vec<Obs> {
    points
        .iter()
        .zip(rates)
        .map(|(pt, &p)| {
            let n = pt.result.shots as f64;
            let pc = p.clamp(0.5 / n, 1.0 - 0.5 / n);
            Obs { lnr: pt.ratio.ln(), d: pt.dz as f64, p, w: n / (pc * (1.0 - pc)) }
        })
        .collect()
}

/// Weighted least squares for (A, B, C) at fixed (ln r_th, nu); returns the residual sum.
fn quadratic_fit(obs: &[Obs], lnr_th: f64, nu: f64) -> (f64, [f64; 3]) {
    let mut m = [[0.0; 3]; 3];
    let mut v = [0.0; 3];
    for o in obs {
        let x = (o.lnr - lnr_th) * o.d.powf(1.0 / nu);
        let row = [1.0, x, x * x];
        for i in 0..3 {
            v[i] += o.w * row[i] * o.p;
            for j in 0..3 {
                m[i][j] += o.w * row[i] * row[j];
            }
        }
    }
    let coeffs = solve3(m, v).unwrap_or([0.0; 3]);
    let sse = obs
        .iter()
        .map(|o| {
            let x = (o.lnr - lnr_th) * o.d.powf(1.0 / nu);
            let r = o.p - (coeffs[0] + coeffs[1] * x + coeffs[2] * x * x);
            o.w * r * r
        })
        .sum();
    (sse, coeffs)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[piv][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in 0..3 {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..3 {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Grid search over (ln r_th, ln nu) followed by two local refinements.
fn fit_scaling(obs: &[Obs], lo: f64, hi: f64) -> (f64, f64, [f64; 3]) {
    let (mut l0, mut l1) = (lo.ln(), hi.ln());
    let (mut n0, mut n1) = (0.3f64.ln(), 5.0f64.ln());
    let mut best = (f64::INFINITY, 0.0, 1.0, [0.0; 3]);
    for (steps_l, steps_n) in [(60, 30), (20, 20), (20, 20)] {
        for i in 0..=steps_l {
            let lr = l0 + (l1 - l0) * i as f64 / steps_l as f64;
            for j in 0..=steps_n {
                let nu = (n0 + (n1 - n0) * j as f64 / steps_n as f64).exp();
                let (sse, c) = quadratic_fit(obs, lr, nu);
                if sse < best.0 {
                    best = (sse, lr, nu, c);
                }
            }
        }
        let dl = 2.0 * (l1 - l0) / steps_l as f64;
        let dn = 2.0 * (n1 - n0) / steps_n as f64;
        (l0, l1) = ((best.1 - dl).max(lo.ln()), (best.1 + dl).min(hi.ln()));
        (n0, n1) = (best.2.ln() - dn, best.2.ln() + dn);
    }
    (best.1.exp(), best.2, best.3)
}

/// Fits the scaling ansatz within +-40% of the pairwise crossing; CI from a parametric bootstrap.
pub fn fit_threshold(points: &[ThresholdPoint], seed: u64) -> Result<ThresholdEstimate, ThresholdError> {
    let ds = distances(points);
    let rs = ratios(points);
    if ds.len() < 3 || rs.len() < 5 {
        return Err(ThresholdError::Insufficient(format!("{} distances, {} ratios", ds.len(), rs.len())));
    }
    let crossing = pairwise_crossing(points)?;
    let (mut lo, mut hi) = (crossing * (1.0 - WINDOW_HALF_WIDTH), crossing * (1.0 + WINDOW_HALF_WIDTH));
    let inside = |lo: f64, hi: f64| rs.iter().filter(|&&r| r >= lo && r <= hi).count();
    if inside(lo, hi) < 3 {
        let mut near = rs.clone();
        near.sort_by(|a, b| (a / crossing).ln().abs().total_cmp(&(b / crossing).ln().abs()));
        let widen = near[..3].iter().fold((lo, hi), |(l, h), &r| (l.min(r), h.max(r)));
        log::warn!("fit window widened to {:.3e}..{:.3e}", widen.0, widen.1);
        (lo, hi) = widen;
    }
    let used: Vec<&ThresholdPoint> = points.iter().filter(|p| p.ratio >= lo && p.ratio <= hi).collect();
    let rates: Vec<f64> = used.iter().map(|p| p.rate()).collect();
    let (ratio, nu, coefficients) = fit_scaling(&observations(&used, &rates), lo, hi);
    let replicates: Vec<f64> = (0..BOOTSTRAP_REPLICATES as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let resampled: Vec<f64> = used
                .iter()
                .map(|p| {
                    let n = p.result.shots;
                    Binomial::new(n, p.rate().clamp(0.0, 1.0)).map(|d| d.sample(&mut rng) as f64 / n as f64).unwrap_or(p.rate())
                })
                .collect();
            fit_scaling(&observations(&used, &resampled), lo, hi).0
        })
        .collect();
    let mut sorted = replicates;
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    Ok(ThresholdEstimate {
        ratio,
        ci: (q(0.025).min(ratio), q(0.975).max(ratio)),
        nu,
        crossing,
        window: (lo, hi),
        points_used: used.len(),
        coefficients,
    })
}

pub fn estimate_threshold(
    code: CodeKind,
    dzs: &[usize],
    ratios: &[f64],
    shots: u64,
    seed: u64,
    noise: impl Fn(f64) -> NoiseModel + Sync,
) -> Result<(ThresholdEstimate, Vec<ThresholdPoint>), ThresholdError> {
    let points = scan(code, dzs, ratios, shots, seed, noise)?;
    Ok((fit_threshold(&points, seed)?, points))
}
