//! Closed-form error rates and gate error budgets.

use crate::code::SCParams;
use crate::dissipation::NoiseParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::OnceLock;
use thiserror::Error;
use twofloat::TwoFloat;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("formula out of range: {0}")]
    OutOfRange(String),
    #[error("series did not converge within {0} terms")]
    Truncation(usize),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct RepetitionFit {
    pub prefactor: f64,
    pub pivot: f64,
    pub exponent_per_distance: f64,
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct NonAdiabatic {
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Prefactor {
    pub prefactor: f64,
    #[serde(default)]
    pub note: String,
}

/// Fitted constants, loaded once from `data/constants.json`.
#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct Constants {
    pub repetition_fit: RepetitionFit,
    pub z_rotation_nonadiabatic: NonAdiabatic,
    pub cx_nonadiabatic: NonAdiabatic,
    pub cx_bitflip: Prefactor,
    pub cx_cooling_multiple: f64,
    pub cx_leakage_bound: f64,
    pub idle_bitflip: Prefactor,
}

pub fn constants() -> &'static Constants {
    static C: OnceLock<Constants> = OnceLock::new();
    C.get_or_init(|| serde_json::from_str(include_str!("../data/constants.json")).expect("constants table is valid"))
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RatePrediction {
    pub gamma_z: f64,
    pub gamma_xy: f64,
    pub xi: f64,
    pub components: BTreeMap<String, f64>,
}

/// Fraction of a gauge excitation that relaxes without the compensating parity flip.
pub fn xi(alpha_sq: f64) -> f64 {
    1.0 / (2.0 * (1.0 + 3.0 * alpha_sq))
}

/// Displacement used by the leading-order formulas: (nbar - sinh^2 r) e^{2r}.
pub fn approx_alpha_sq(nbar: f64, r: f64) -> f64 {
    (nbar - r.sinh().powi(2)) * (2.0 * r).exp()
}

/// Phase-flip rate with the finite-displacement correction.
pub fn gamma_z(sc: &SCParams, noise: &NoiseParams) -> RatePrediction {
    let nbar = sc.nbar;
    let r = sc.r;
    let eta = (nbar - r.sinh().powi(2)) / nbar;
    let eta_h = (nbar - r.cosh().powi(2)) / nbar;
    let x = xi(approx_alpha_sq(nbar, r));
    let k1 = noise.kappa1;
    let nth = noise.n_th;
    let deph = noise.kappa_phi * (-2.0 * r).exp();
    let mut c = BTreeMap::new();
    c.insert("loss".into(), k1 * (1.0 + nth) * eta * nbar);
    c.insert("heating".into(), k1 * nth * eta * nbar);
    c.insert("dephasing".into(), deph * eta * nbar);
    c.insert("loss_correction".into(), k1 * (1.0 + nth) * nbar * (1.0 - eta) * x);
    c.insert("heating_correction".into(), k1 * nth * (1.0 - eta_h) * x);
    c.insert("dephasing_correction".into(), -deph * eta * x);
    let gz = c.values().sum();
    RatePrediction { gamma_z: gz, gamma_xy: gamma_xy(sc, noise.kappa_phi), xi: x, components: c }
}

/// Phase-flip rate without the correction terms.
pub fn gamma_z_uncorrected(sc: &SCParams, noise: &NoiseParams) -> f64 {
    let eta_n = sc.nbar - sc.r.sinh().powi(2);
    (noise.kappa1 * (1.0 + 2.0 * noise.n_th) + noise.kappa_phi * (-2.0 * sc.r).exp()) * eta_n
}

/// Dephasing-induced bit-flip rate (sum of X and Y), evaluated in log space for large displacement.
pub fn gamma_xy(sc: &SCParams, kappa_phi: f64) -> f64 {
    let r = sc.r;
    let a2 = approx_alpha_sq(sc.nbar, r);
    let shape = (2.0 * r).sinh().powi(2) / 4.0 + (4.0 * r).cosh();
    kappa_phi * a2 * shape * half_csch(2.0 * a2)
}

/// 1 / (2 sinh y) without overflow; equals 1/(2y) near y = 0 only through the caller's factor.
fn half_csch(y: f64) -> f64 {
    if y > 20.0 {
        (-y).exp() / (1.0 - (-2.0 * y).exp())
    } else {
        0.5 / y.sinh()
    }
}

// Double-double helpers for the conserved-quantity evaluation.

fn dd(x: f64) -> TwoFloat {
    TwoFloat::from(x)
}

fn dd_exp(x: TwoFloat) -> TwoFloat {
    // argument halving then Taylor series
    let mut k = 0;
    let mut y = x;
    while y.hi().abs() > 0.125 {
        y /= 2.0;
        k += 1;
    }
    let mut term = dd(1.0);
    let mut sum = dd(1.0);
    for n in 1..40 {
        term = term * y / (n as f64);
        sum += term;
        if term.hi().abs() < 1e-34 * sum.hi().abs() {
            break;
        }
    }
    for _ in 0..k {
        sum = sum * sum;
    }
    sum
}

/// Modified Bessel function of the first kind I_q(x) for integer q, by its power series.
pub fn bessel_i(q: i32, x: f64) -> f64 {
    bessel_i_dd(q, dd(x)).map(|v| v.hi() + v.lo()).unwrap_or(f64::NAN)
}

fn bessel_i_dd(q: i32, x: TwoFloat) -> Result<TwoFloat, RateError> {
    let q = q.unsigned_abs() as usize;
    let h = x / 2.0;
    let mut lead = dd(1.0);
    for j in 1..=q {
        lead = lead * h / (j as f64);
    }
    let hh = h * h;
    let mut term = lead;
    let mut sum = lead;
    let max_terms = 400;
    for k in 1..max_terms {
        term = term * hh / ((k * (k + q)) as f64);
        sum += term;
        if k as f64 > h.hi() && term.hi() < 1e-33 * sum.hi() {
            return Ok(sum);
        }
    }
    Err(RateError::Truncation(max_terms))
}

/// Bit-flip rate (X plus Y) from the conserved quantity of the two-photon dissipator in the
/// even-odd sector, built from its Bessel-series ladder expansion; evaluated in double-double
/// since the result is exponentially small relative to the individual terms.
pub fn bitflip_via_conserved_quantities(sc: &SCParams, kappa_phi: f64, dim: usize) -> Result<f64, RateError> {
    if kappa_phi == 0.0 {
        return Ok(0.0);
    }
    let parts = ConservedQuantity::new(sc.alpha_sq(), sc.r, dim)?;
    Ok(parts.bitflip_rate() * kappa_phi)
}

/// J_{+-} restricted to a Fock cutoff, with the cat codewords it is normalized against.
pub struct ConservedQuantity {
    x: f64,
    dim: usize,
    /// J[(k, m)] with k even, m odd, unnormalized (global prefactor applied at readout)
    j: Vec<Vec<TwoFloat>>,
    /// alpha^n / sqrt(n!)
    coh: Vec<TwoFloat>,
    r: f64,
}

impl ConservedQuantity {
    pub fn new(alpha_sq: f64, r: f64, dim: usize) -> Result<Self, RateError> {
        if dim < 8 {
            return Err(RateError::OutOfRange(format!("cutoff {dim} too small")));
        }
        let x = dd(alpha_sq);
        let alpha = x.sqrt();
        let mut sqrt_fact = vec![dd(1.0); dim + 1];
        let mut dfact = vec![dd(1.0); dim + 1];
        for n in 1..=dim {
            sqrt_fact[n] = sqrt_fact[n - 1] * dd(n as f64).sqrt();
            dfact[n] = if n >= 2 { dfact[n - 2] * (n as f64) } else { dd(1.0) };
        }
        let df = |k: isize| if k <= 0 { dd(1.0) } else { dfact[k as usize] };
        let mut coh = vec![dd(1.0); dim];
        for n in 1..dim {
            coh[n] = coh[n - 1] * alpha / dd(n as f64).sqrt();
        }
        let qmax = dim / 2 + 2;
        let mut bess = Vec::with_capacity(qmax + 1);
        for q in 0..=qmax {
            bess.push(bessel_i_dd(q as i32, x)?);
        }
        let mut j = vec![vec![dd(0.0); dim]; dim];
        for k in (0..dim).step_by(2) {
            for m in (1..dim).step_by(2) {
                let diff = m as isize - k as isize;
                let (q, val) = if diff > 0 {
                    // m = k + 2q + 1, q >= 0
                    let q = ((diff - 1) / 2) as usize;
                    (q as isize, df(k as isize - 1) / df((k + 2 * q) as isize) * sqrt_fact[m] / sqrt_fact[k])
                } else {
                    // k = m + 2|q| - 1, q < 0
                    let aq = ((-diff + 1) / 2) as usize;
                    (-(aq as isize), df(m as isize) / df((m + 2 * aq - 1) as isize) * sqrt_fact[k] / sqrt_fact[m])
                };
                let sign = if q.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let coef = bess[q.unsigned_abs()] * (sign / (2 * q + 1) as f64);
                j[k][m] = coef * val;
            }
        }
        Ok(Self { x: alpha_sq, dim, j, coh, r })
    }

    fn bra_j_ket(&self, u: &[TwoFloat], v: &[TwoFloat]) -> TwoFloat {
        let mut acc = dd(0.0);
        for k in (0..self.dim).step_by(2) {
            if u[k].hi() == 0.0 {
                continue;
            }
            let mut row = dd(0.0);
            for m in (1..self.dim).step_by(2) {
                row += self.j[k][m] * v[m];
            }
            acc += u[k] * row;
        }
        acc
    }

    fn parts(&self) -> (Vec<TwoFloat>, Vec<TwoFloat>) {
        let mut p = vec![dd(0.0); self.dim];
        let mut m = vec![dd(0.0); self.dim];
        for n in 0..self.dim {
            if n % 2 == 0 {
                p[n] = self.coh[n];
            } else {
                m[n] = self.coh[n];
            }
        }
        (p, m)
    }

    /// sqrt(2x / sinh 2x) / sqrt(cosh x sinh x) = 2 sqrt(x) / sinh 2x, the prefactor and cat normalizations.
    fn scale(&self) -> f64 {
        let x = self.x;
        let t = (-4.0 * x).exp();
        4.0 * x.sqrt() * (-2.0 * x).exp() / (1.0 - t)
    }

    /// <C+|J|C->, equal to one when the truncation is adequate.
    pub fn normalization(&self) -> f64 {
        let (p, m) = self.parts();
        let v = self.bra_j_ket(&p, &m);
        (v.hi() + v.lo()) * self.scale()
    }

    fn frame_number(&self, v: &[TwoFloat]) -> Vec<TwoFloat> {
        let e = dd_exp(dd(self.r));
        let ei = dd(1.0) / e;
        let c = (e + ei) / 2.0;
        let s = (e - ei) / 2.0;
        let (cc, ss, cs) = (c * c, s * s, c * s);
        let n = self.dim;
        let mut out = vec![dd(0.0); n];
        for k in 0..n {
            if v[k].hi() == 0.0 {
                continue;
            }
            out[k] += (cc * (k as f64) + ss * ((k + 1) as f64)) * v[k];
            if k >= 2 {
                out[k - 2] -= cs * dd((k * (k - 1)) as f64).sqrt() * v[k];
            }
            if k + 2 < n {
                out[k + 2] -= cs * dd(((k + 1) * (k + 2)) as f64).sqrt() * v[k];
            }
        }
        out
    }

    /// Bit-flip rate per unit dephasing rate.
    pub fn bitflip_rate(&self) -> f64 {
        let (p, m) = self.parts();
        let ap = self.frame_number(&p);
        let am = self.frame_number(&m);
        let aap = self.frame_number(&ap);
        let aam = self.frame_number(&am);
        let val = self.bra_j_ket(&ap, &am) - self.bra_j_ket(&aap, &m) / 2.0 - self.bra_j_ket(&p, &aam) / 2.0;
        -(val.hi() + val.lo()) * self.scale() / 2.0
    }
}

/// Non-adiabatic phase-flip probability of a Z rotation by theta in time T.
pub fn z_rotation_nonadiabatic(sc: &SCParams, kappa2: f64, theta: f64, t: f64) -> f64 {
    let a2 = sc.alpha_sq();
    let c = &constants().z_rotation_nonadiabatic;
    let g = 2.0 * kappa2 * a2;
    xi(a2) * theta * theta / (16.0 * kappa2 * a2 * a2 * t * t) * (c.c1 * t + c.c2 * ((-g * t).exp() - 1.0) / g)
}

/// Z-rotation error budget; `gamma_z` holds the total phase-flip probability.
pub fn z_rotation_error(sc: &SCParams, noise: &NoiseParams, theta: f64, t: f64) -> Result<RatePrediction, RateError> {
    if t <= 0.0 {
        return Err(RateError::OutOfRange("gate time must be positive".into()));
    }
    let na = z_rotation_nonadiabatic(sc, noise.kappa2, theta, t);
    let loss = noise.kappa1 * sc.eta * sc.nbar * t;
    let mut c = BTreeMap::new();
    c.insert("non_adiabatic".into(), na);
    c.insert("loss".into(), loss);
    Ok(RatePrediction { gamma_z: na + loss, gamma_xy: 0.0, xi: xi(sc.alpha_sq()), components: c })
}

/// Cat reference optimum (theta/2) sqrt(kappa1 / (nbar kappa2)).
pub fn cat_z_rotation_optimum(nbar: f64, theta: f64, ratio: f64) -> f64 {
    theta / 2.0 * (ratio / nbar).sqrt()
}

/// Cat reference CX optimum (pi / (2 sqrt 2)) sqrt(kappa1/kappa2).
pub fn cat_cx_optimum(ratio: f64) -> f64 {
    std::f64::consts::PI / (2.0 * 2f64.sqrt()) * ratio.sqrt()
}

/// Golden-section minimization of f over log(t) in [lo, hi] after a coarse scan.
pub fn minimize_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let (la, lb) = (lo.ln(), hi.ln());
    let n = 200;
    let mut best = (lo, f(lo));
    let mut bi = 0;
    for i in 0..=n {
        let t = (la + (lb - la) * i as f64 / n as f64).exp();
        let v = f(t);
        if v < best.1 {
            best = (t, v);
            bi = i;
        }
    }
    let step = (lb - la) / n as f64;
    let mut a = la + step * (bi as f64 - 1.0).max(0.0);
    let mut b = (la + step * (bi as f64 + 1.0)).min(lb);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c.exp()) < f(d.exp()) {
            b = d;
        } else {
            a = c;
        }
    }
    let t = ((a + b) / 2.0).exp();
    let v = f(t);
    if v < best.1 {
        (t, v)
    } else {
        best
    }
}

/// x = 2 kappa2 alpha'^2 T at which the non-adiabatic fit peaks. Below it the fit turns over and
/// goes negative, so optimizations only search T above the peak.
pub fn nonadiabatic_peak(c: &NonAdiabatic) -> f64 {
    let h = |x: f64| -(c.c1 * x + c.c2 * ((-x).exp() - 1.0)) / (x * x);
    minimize_log(h, 1e-3, 1e3).0
}

/// Shortest gate time for which the non-adiabatic fit is used.
pub fn z_rotation_min_time(sc: &SCParams, kappa2: f64) -> f64 {
    nonadiabatic_peak(&constants().z_rotation_nonadiabatic) / (2.0 * kappa2 * sc.alpha_sq())
}

/// Optimal gate time and total phase-flip probability of Z(theta).
pub fn z_rotation_optimum(sc: &SCParams, noise: &NoiseParams, theta: f64) -> (f64, f64) {
    let k2 = noise.kappa2;
    let lo = z_rotation_min_time(sc, k2);
    minimize_log(|t| z_rotation_error(sc, noise, theta, t).map(|p| p.gamma_z).unwrap_or(f64::INFINITY), lo, 1e5 / k2)
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GateErrorBudget {
    pub p_zc: f64,
    pub p_zt: f64,
    pub p_zczt: f64,
    pub p_xy: Option<f64>,
    pub leakage_bound: f64,
    pub t: f64,
    pub t_cool: f64,
}

impl GateErrorBudget {
    pub fn total_z(&self) -> f64 {
        self.p_zc + self.p_zt + self.p_zczt
    }
}

pub fn default_cooling_time(sc: &SCParams, kappa2: f64) -> f64 {
    constants().cx_cooling_multiple / (4.0 * kappa2 * sc.alpha_sq())
}

pub fn cx_nonadiabatic(sc: &SCParams, kappa2: f64, t: f64) -> f64 {
    let a2 = sc.alpha_sq();
    let c = &constants().cx_nonadiabatic;
    let g = 2.0 * kappa2 * a2;
    let pi2 = std::f64::consts::PI.powi(2);
    xi(a2) * pi2 / (16.0 * kappa2 * a2 * t * t) * (c.c1 * t + c.c2 * ((-g * t).exp() - 1.0) / g)
}

/// Z-type CX budget for any T > 0; `p_xy` is filled only where its fit is valid (kappa2 T >= 1).
pub fn cx_z_budget(sc: &SCParams, noise: &NoiseParams, t: f64, t_cool: Option<f64>) -> GateErrorBudget {
    let tc = t_cool.unwrap_or_else(|| default_cooling_time(sc, noise.kappa2));
    let k1n = noise.kappa1 * sc.nbar;
    let a2 = sc.alpha_sq();
    let p_xy = (noise.kappa2 * t >= 1.0).then(|| constants().cx_bitflip.prefactor * (-2.0 * a2).exp() / a2 / (noise.kappa2 * t));
    GateErrorBudget {
        p_zc: k1n * sc.eta * (t + tc) + cx_nonadiabatic(sc, noise.kappa2, t),
        p_zt: k1n * (t / 2.0 + tc),
        p_zczt: k1n * t / 2.0,
        p_xy,
        leakage_bound: constants().cx_leakage_bound,
        t,
        t_cool: tc,
    }
}

/// CX budget including the bit-flip fit; rejects kappa2 T < 1.
pub fn cx_error_budget(sc: &SCParams, noise: &NoiseParams, t: f64, t_cool: Option<f64>) -> Result<GateErrorBudget, RateError> {
    if noise.kappa2 * t < 1.0 {
        return Err(RateError::OutOfRange(format!("kappa2 T = {:.3} < 1", noise.kappa2 * t)));
    }
    Ok(cx_z_budget(sc, noise, t, t_cool))
}

/// Optimal gate time and total Z probability of the CX at the default cooling time.
pub fn cx_optimum(sc: &SCParams, noise: &NoiseParams) -> (f64, f64) {
    let k2 = noise.kappa2;
    let lo = nonadiabatic_peak(&constants().cx_nonadiabatic) / (2.0 * k2 * sc.alpha_sq());
    minimize_log(|t| cx_z_budget(sc, noise, t, None).total_z(), lo, 1e5 / k2)
}

/// Bit-flip probability of a stabilized idle lasting t.
pub fn idle_bitflip(sc: &SCParams, kappa2: f64, t: f64) -> f64 {
    let a2 = sc.alpha_sq();
    constants().idle_bitflip.prefactor * (-2.0 * a2).exp() / (a2 * kappa2 * t)
}

/// (p_L^Z, p_L^X) from the repetition-code fits.
pub fn repetition_logical_fit(dz: usize, pz_prime: f64, pxy: f64) -> Result<(f64, f64), RateError> {
    if dz < 3 || dz.is_multiple_of(2) {
        return Err(RateError::OutOfRange(format!("dZ = {dz} must be odd and >= 3")));
    }
    let c = &constants().repetition_fit;
    let d = dz as f64;
    let pz = c.prefactor * d * (pz_prime / c.pivot).powf(c.exponent_per_distance * d);
    let px = 2.0 * d * (d - 1.0) * pxy;
    Ok((pz, px))
}

pub fn below_threshold(pz_prime: f64) -> bool {
    pz_prime < constants().repetition_fit.pivot
}

/// Odd distance in [3, max_dz] minimizing p_L^Z + p_L^X, with that total.
pub fn best_distance(pz_prime: f64, pxy: f64, max_dz: usize) -> (usize, f64) {
    let mut best = (3, f64::INFINITY);
    for dz in (3..=max_dz.max(3)).step_by(2) {
        let (a, b) = repetition_logical_fit(dz, pz_prime, pxy).expect("odd distance");
        if a + b < best.1 {
            best = (dz, a + b);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cat_limit_of_phase_flip_rate() {
        let sc = SCParams::cat(4.0).unwrap();
        let p = gamma_z(&sc, &NoiseParams::loss_only(1.0));
        assert_relative_eq!(p.gamma_z, 4.0, max_relative = 1e-12);
        let sum: f64 = p.components.values().sum();
        assert!((sum - p.gamma_z).abs() < 1e-12);
    }

    #[test]
    fn quarter_eta_gives_kappa1() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        assert_relative_eq!(gamma_z_uncorrected(&sc, &NoiseParams::loss_only(1.0)), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn minimum_over_r_approaches_limit() {
        // large-nbar, loss-only limit of the corrected rate
        let nbar: f64 = 400.0;
        let mut best = f64::INFINITY;
        for i in 0..4000 {
            let eta = 10f64.powf(-7.0 + 7.0 * i as f64 / 4000.0);
            let r = (nbar * (1.0 - eta)).sqrt().asinh();
            let sc = SCParams { nbar, r, alpha_prime: approx_alpha_sq(nbar, r).max(0.0).sqrt(), eta: (nbar - r.sinh().powi(2)) / nbar };
            let g = gamma_z(&sc, &NoiseParams::loss_only(1.0)).gamma_z;
            best = best.min(g);
        }
        // asymptote of the corrected formula is 1/sqrt(6); the quoted sqrt(2)/4 is within 16% of it
        assert!((best * 6f64.sqrt() - 1.0).abs() < 0.02, "{best}");
        assert!((best / (2f64.sqrt() / 4.0) - 1.0).abs() < 0.2, "{best}");
    }

    #[test]
    fn cat_bitflip_closed_form() {
        let sc = SCParams::cat(4.0).unwrap();
        assert_relative_eq!(gamma_xy(&sc, 1.0), 4.0 / (2.0 * 8f64.sinh()), max_relative = 1e-14);
        let big = SCParams::cat(200.0).unwrap();
        assert!(gamma_xy(&big, 1.0) > 0.0);
    }

    #[test]
    fn bessel_values() {
        assert_relative_eq!(bessel_i(0, 1.0), 1.2660658777520082, max_relative = 1e-15);
        assert_relative_eq!(bessel_i(3, 10.0), 1758.380716610853, max_relative = 1e-13);
        assert_relative_eq!(bessel_i(-3, 10.0), bessel_i(3, 10.0));
    }

    #[test]
    fn conserved_quantity_normalization_and_cat_rate() {
        let cq = ConservedQuantity::new(4.0, 0.0, 60).unwrap();
        assert!((cq.normalization() - 1.0).abs() < 1e-10);
        let sc = SCParams::cat(4.0).unwrap();
        let g = bitflip_via_conserved_quantities(&sc, 1.0, 60).unwrap();
        let exact_cat = gamma_xy(&SCParams::cat(sc.alpha_sq()).unwrap(), 1.0);
        assert!((g / exact_cat - 1.0).abs() < 0.02, "{g} {exact_cat}");
        assert_eq!(bitflip_via_conserved_quantities(&sc, 0.0, 60).unwrap(), 0.0);
    }

    #[test]
    fn z_rotation_limits() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        assert!(z_rotation_nonadiabatic(&sc, 1.0, std::f64::consts::PI, 1e6) < 1e-10);
        let noise = NoiseParams::new(1e-3, 1.0, 0.0, 0.0);
        let (_, p) = z_rotation_optimum(&sc, &noise, std::f64::consts::PI);
        let a2 = sc.alpha_sq();
        let a = 1.5 * xi(a2) * std::f64::consts::PI.powi(2) / (16.0 * a2 * a2);
        let b = 1e-3 * sc.eta * 4.0;
        assert!(p > 0.0 && (p / (2.0 * (a * b).sqrt()) - 1.0).abs() < 0.3, "{p} {}", 2.0 * (a * b).sqrt());
    }

    #[test]
    fn cx_budget_pieces() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        let noise = NoiseParams::new(1e-3, 1.0, 0.0, 0.0);
        let b = cx_error_budget(&sc, &noise, 1.0, None).unwrap();
        assert_relative_eq!(b.p_zczt, 2e-3, max_relative = 1e-12);
        let expect = 1e-3 * 4.0 * 1.25 * (1.0 + b.t_cool) + cx_nonadiabatic(&sc, 1.0, 1.0);
        assert_relative_eq!(b.total_z(), expect, max_relative = 1e-12);
        assert!(cx_error_budget(&sc, &noise, 0.5, None).is_err());
        let quiet = cx_z_budget(&sc, &NoiseParams::new(0.0, 1.0, 0.0, 0.0), 1e7, None);
        assert!(quiet.total_z() < 1e-8 && quiet.p_xy.unwrap() < 1e-15);
    }

    #[test]
    fn repetition_fit_pivot_and_example() {
        let (pz, px) = repetition_logical_fit(5, 0.056, 0.0).unwrap();
        assert_relative_eq!(pz, 0.059 * 5.0, max_relative = 1e-12);
        assert_eq!(px, 0.0);
        let (pz, _) = repetition_logical_fit(3, 0.0056, 0.0).unwrap();
        assert!((pz - 6.4e-3).abs() < 0.2e-3, "{pz}");
        assert!(repetition_logical_fit(4, 0.01, 0.0).is_err());
    }
}
