//! Squeezed-cat code points, codewords and the subsystem (logical qubit x gauge mode) basis.
//!
//! Vectors are stored in the squeezed frame, i.e. with S(r) stripped off. There the codewords are
//! plain cats of amplitude alpha', the physical annihilation operator reads cosh(r) a - sinh(r) a^dag
//! and the engineered two-photon operator reads a^2 - alpha'^2. Parity commutes with S(r), so parity
//! data carries over unchanged. `lab_*` helpers reapply S(r) when a lab-frame vector is needed.

use crate::fock::{annihilation, hermitian_exp, CMat, CVec, FockError, FockOp, KetState, C64, I, ONE, ZERO};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodeError {
    #[error("squeezing r={r} is at or beyond the maximum for nbar={nbar}")]
    OverSqueezed { nbar: f64, r: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate subsystem basis: gram condition number {0:.3e}")]
    DegenerateBasis(f64),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// A code point. `alpha_prime` is the exact value reproducing `nbar` from the even codeword.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SCParams {
    pub nbar: f64,
    pub r: f64,
    pub alpha_prime: f64,
    pub eta: f64,
}

/// Mean photon number of the even squeezed cat with displacement a2 = alpha'^2.
pub fn even_mean_photon_number(a2: f64, r: f64) -> f64 {
    a2 * ((2.0 * r).cosh() * a2.tanh() - (2.0 * r).sinh()) + r.sinh().powi(2)
}

fn solve_alpha_sq(nbar: f64, r: f64) -> f64 {
    let f = |a2: f64| even_mean_photon_number(a2, r) - nbar;
    // f dips below zero before rising monotonically; the root sits on the rising branch
    let mut hi = ((nbar - r.sinh().powi(2)) * (2.0 * r).exp()).max(1e-6) * 2.0 + 1.0;
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while lo > 1e-14 && f(lo) > 0.0 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl SCParams {
    pub fn from_r(nbar: f64, r: f64) -> Result<Self, CodeError> {
        if !(nbar > 0.0) || !nbar.is_finite() {
            return Err(CodeError::InvalidParameter(format!("nbar={nbar}")));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(CodeError::InvalidParameter(format!("r={r}")));
        }
        let s2 = r.sinh().powi(2);
        if s2 >= nbar {
            return Err(CodeError::OverSqueezed { nbar, r });
        }
        let a2 = solve_alpha_sq(nbar, r);
        Ok(Self { nbar, r, alpha_prime: a2.sqrt(), eta: (nbar - s2) / nbar })
    }

    pub fn from_eta(nbar: f64, eta: f64) -> Result<Self, CodeError> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(CodeError::InvalidParameter(format!("eta={eta}")));
        }
        let r = (nbar * (1.0 - eta)).sqrt().asinh();
        let mut p = Self::from_r(nbar, r)?;
        p.eta = eta;
        Ok(p)
    }

    pub fn cat(nbar: f64) -> Result<Self, CodeError> {
        Self::from_r(nbar, 0.0)
    }

    pub fn alpha_sq(&self) -> f64 {
        self.alpha_prime * self.alpha_prime
    }

    /// sqrt(nbar - sinh^2 r) e^r.
    pub fn approx_alpha_prime(&self) -> f64 {
        (self.nbar - self.r.sinh().powi(2)).sqrt() * self.r.exp()
    }

    /// 1/(2(1 + 3 alpha'^2)).
    pub fn xi(&self) -> f64 {
        0.5 / (1.0 + 3.0 * self.alpha_sq())
    }

    pub fn r_max(nbar: f64) -> f64 {
        nbar.sqrt().asinh()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("params serialize")
    }

    /// Accepts {nbar, r} or {nbar, eta}; derived fields, when present, must agree.
    pub fn from_json(v: &serde_json::Value) -> Result<Self, CodeError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            nbar: f64,
            r: Option<f64>,
            eta: Option<f64>,
            alpha_prime: Option<f64>,
        }
        let raw: Raw = serde_json::from_value(v.clone()).map_err(|e| CodeError::InvalidParameter(e.to_string()))?;
        let p = match (raw.r, raw.eta) {
            (Some(r), None) => Self::from_r(raw.nbar, r)?,
            (None, Some(eta)) => Self::from_eta(raw.nbar, eta)?,
            (Some(r), Some(eta)) => {
                let mut p = Self::from_r(raw.nbar, r)?;
                if (p.eta - eta).abs() > 1e-9 {
                    return Err(CodeError::InvalidParameter("r and eta disagree".into()));
                }
                // keeps serialized parameters bit-exact on the way back in
                p.eta = eta;
                p
            }
            (None, None) => return Err(CodeError::InvalidParameter("one of r or eta is required".into())),
        };
        if let Some(a) = raw.alpha_prime {
            if (a - p.alpha_prime).abs() > 1e-6 {
                return Err(CodeError::InvalidParameter("alpha_prime disagrees with (nbar, r)".into()));
            }
        }
        Ok(p)
    }
}

impl<'de> Deserialize<'de> for SCParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Self::from_json(&v).map_err(serde::de::Error::custom)
    }
}

/// sqrt(nbar^2 + nbar).
pub fn alpha_prime_max(nbar: f64) -> f64 {
    (nbar * nbar + nbar).sqrt()
}

/// sqrt(4 eta (1 - eta)) nbar.
pub fn approx_alpha(nbar: f64, eta: f64) -> f64 {
    (4.0 * eta * (1.0 - eta)).sqrt() * nbar
}

/// Fock cutoff for squeezed-frame work: cat support plus a 10-sigma margin and gauge headroom.
pub fn recommended_cutoff(sc: &SCParams) -> usize {
    let a = sc.alpha_prime;
    (a * a + 10.0 * a + 30.0).ceil() as usize
}

/// Fock cutoff for lab-frame vectors: the squeezed tail decays like tanh(r)^n.
pub fn recommended_lab_cutoff(sc: &SCParams) -> usize {
    let base = recommended_cutoff(sc);
    if sc.r <= 1e-12 {
        return base;
    }
    let tail = (32.0 / -(sc.r.tanh().ln())).ceil() as usize;
    base.max(tail + (4.0 * sc.nbar).ceil() as usize + 20)
}

/// cosh(r) a - sinh(r) a^dag: the physical annihilation operator in the squeezed frame.
pub fn frame_annihilation(r: f64, dim: usize) -> Result<CMat, FockError> {
    let a = annihilation(dim)?.mat;
    Ok(&a * C64::new(r.cosh(), 0.0) - a.adjoint() * C64::new(r.sinh(), 0.0))
}

/// Even/odd cats of amplitude alpha' (squeezed-frame codewords).
pub fn frame_codewords(sc: &SCParams, dim: usize) -> (KetState, KetState) {
    let alpha = C64::new(sc.alpha_prime, 0.0);
    let coh = KetState::coherent(alpha, dim);
    let mut plus = coh.clone();
    let mut minus = coh;
    for n in 0..dim {
        if n % 2 == 1 {
            plus.amps[n] = ZERO;
        } else {
            minus.amps[n] = ZERO;
        }
    }
    plus.normalize();
    minus.normalize();
    (plus, minus)
}

/// |SC+>, |SC->: S(r) applied to the frame cats, at Fock cutoff `dim`.
pub fn codewords(sc: &SCParams, dim: usize) -> Result<(KetState, KetState), CodeError> {
    let need = recommended_lab_cutoff(sc);
    if dim < need {
        log::warn!("codewords: cutoff {dim} below recommended {need}");
    }
    let (p, m) = frame_codewords(sc, dim);
    let s = squeeze_unitary(sc.r, dim)?;
    let mut p = KetState::new(&s * &p.amps);
    let mut m = KetState::new(&s * &m.amps);
    p.normalize();
    m.normalize();
    Ok((p, m))
}

pub fn squeeze_unitary(r: f64, dim: usize) -> Result<CMat, FockError> {
    if r == 0.0 {
        return Ok(CMat::identity(dim, dim));
    }
    let a = annihilation(dim)?.mat;
    let a2 = &a * &a;
    let g = (&a2 - a2.adjoint()) * C64::new(0.5 * r, 0.0);
    Ok(hermitian_exp(&(&g * (-I)), 1.0))
}

/// Orthonormal basis |(+/-, n)> of the truncated subsystem span, squeezed frame.
#[derive(Clone, Debug)]
pub struct SubsystemBasis {
    pub sc: SCParams,
    pub d: usize,
    pub dim: usize,
    /// dim x 2d, columns ordered (+,0..d-1) then (-,0..d-1)
    pub vectors: CMat,
}

impl SubsystemBasis {
    pub fn index(&self, plus: bool, n: usize) -> usize {
        if plus {
            n
        } else {
            self.d + n
        }
    }

    pub fn vector(&self, plus: bool, n: usize) -> KetState {
        KetState::new(self.vectors.column(self.index(plus, n)).into_owned())
    }

    /// V^dag X V for a squeezed-frame Fock operator X.
    pub fn project(&self, x: &CMat) -> CMat {
        self.vectors.adjoint() * x * &self.vectors
    }

    pub fn projector(&self) -> CMat {
        &self.vectors * self.vectors.adjoint()
    }

    /// Lab-frame basis vectors at cutoff `lab_dim`.
    pub fn lab_vectors(&self, lab_dim: usize) -> Result<CMat, FockError> {
        let mut padded = CMat::zeros(lab_dim.max(self.dim), 2 * self.d);
        padded.view_mut((0, 0), (self.dim, 2 * self.d)).copy_from(&self.vectors);
        let s = squeeze_unitary(self.sc.r, padded.nrows())?;
        Ok((s * padded).rows(0, lab_dim).into_owned())
    }
}

/// Logical Z in the subsystem basis: swaps (+,n) and (-,n).
pub fn logical_z(d: usize) -> CMat {
    let mut z = CMat::zeros(2 * d, 2 * d);
    for n in 0..d {
        z[(n, d + n)] = ONE;
        z[(d + n, n)] = ONE;
    }
    z
}

/// Logical X in the subsystem basis: parity, diag(+1.., -1..).
pub fn logical_x(d: usize) -> CMat {
    CMat::from_diagonal(&CVec::from_fn(2 * d, |k, _| C64::new(if k < d { 1.0 } else { -1.0 }, 0.0)))
}

/// Gauge ladder operator on the 2d space: I_L (x) a~ truncated at d levels.
pub fn gauge_lowering(d: usize) -> CMat {
    let mut g = CMat::zeros(2 * d, 2 * d);
    for b in 0..2 {
        for n in 1..d {
            g[(b * d + n - 1, b * d + n)] = C64::new((n as f64).sqrt(), 0.0);
        }
    }
    g
}

pub fn build_subsystem_basis(sc: &SCParams, d: usize, dim: usize) -> Result<SubsystemBasis, CodeError> {
    if d == 0 || d > 12 {
        return Err(CodeError::InvalidParameter(format!("gauge dimension d={d}")));
    }
    let alpha = C64::new(sc.alpha_prime, 0.0);
    let dp = crate::fock::displacement(alpha, dim)?.mat;
    let dm = crate::fock::displacement(-alpha, dim)?.mat;
    let mut vectors = CMat::zeros(dim, 2 * d);
    let mut worst_ratio = 1.0f64;
    for (branch, sign) in [1.0f64, -1.0].into_iter().enumerate() {
        let mut raw = Vec::with_capacity(d);
        for n in 0..d {
            let s = sign * if n % 2 == 0 { 1.0 } else { -1.0 };
            let v: CVec = dp.column(n).into_owned() + dm.column(n).into_owned() * C64::new(s, 0.0);
            raw.push(v);
        }
        let mut done: Vec<CVec> = Vec::with_capacity(d);
        for v in raw {
            let norm0 = v.norm();
            let mut w = v;
            for _pass in 0..2 {
                for b in &done {
                    let c = b.dotc(&w);
                    w -= b * c;
                }
            }
            let nn = w.norm();
            worst_ratio = worst_ratio.min(nn / norm0);
            w /= C64::new(nn, 0.0);
            done.push(w);
        }
        for (n, w) in done.into_iter().enumerate() {
            vectors.set_column(branch * d + n, &w);
        }
    }
    let cond = 1.0 / (worst_ratio * worst_ratio);
    if !(cond < 1e8) {
        return Err(CodeError::DegenerateBasis(cond));
    }
    Ok(SubsystemBasis { sc: *sc, d, dim, vectors })
}

/// P a P in the subsystem basis and the operator-norm distance to
/// Z_L (x) (e^{-r} alpha' + cosh r a~ - sinh r a~^dag).
pub fn decompose_annihilation(basis: &SubsystemBasis) -> Result<(CMat, f64), CodeError> {
    let sc = basis.sc;
    let a = frame_annihilation(sc.r, basis.dim)?;
    let m = basis.project(&a);
    let d = basis.d;
    let g = gauge_lowering(d);
    let model = logical_z(d)
        * (CMat::identity(2 * d, 2 * d) * C64::new((-sc.r).exp() * sc.alpha_prime, 0.0) + &g * C64::new(sc.r.cosh(), 0.0)
            - g.adjoint() * C64::new(sc.r.sinh(), 0.0));
    let dev = &m - model;
    Ok((m, dev.singular_values().max()))
}

/// Pauli coefficients of P E P on the code basis {|SC+>, |SC->}, ordered (I, X, Y, Z) with
/// X = diag(1,-1), Z = swap, Y = [[0, i], [-i, 0]].
pub fn qec_matrix(sc: &SCParams, error_op: &FockOp, dim: usize) -> Result<[C64; 4], CodeError> {
    let (p, m) = codewords(sc, dim)?;
    let v = [&p.amps, &m.amps];
    let mut e = [[ZERO; 2]; 2];
    for i in 0..2 {
        let ev = &error_op.mat * v[i];
        for j in 0..2 {
            e[j][i] = v[j].dotc(&ev);
        }
    }
    Ok(pauli_coefficients(&e))
}

/// Expansion of a 2x2 matrix in the logical Pauli convention above.
pub fn pauli_coefficients(e: &[[C64; 2]; 2]) -> [C64; 4] {
    let half = C64::new(0.5, 0.0);
    let ci = (e[0][0] + e[1][1]) * half;
    let cx = (e[0][0] - e[1][1]) * half;
    let cz = (e[0][1] + e[1][0]) * half;
    // e01 = z + i y, e10 = z - i y
    let cy = (e[0][1] - e[1][0]) * half * (-I);
    [ci, cx, cy, cz]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{expectation, number, parity};

    fn op_point() -> SCParams {
        SCParams::from_eta(4.0, 0.25).unwrap()
    }

    #[test]
    fn exact_alpha_reproduces_nbar() {
        for &(n, r) in &[(4.0, 0.0), (4.0, 0.6), (4.0, 1.32), (2.0, 0.3), (0.5, 0.1)] {
            let p = SCParams::from_r(n, r).unwrap();
            assert!((even_mean_photon_number(p.alpha_sq(), r) - n).abs() < 1e-10);
        }
        let p = op_point();
        assert!((p.r - 1.3169579).abs() < 1e-6);
        assert!((p.alpha_sq() - 13.9279).abs() < 1e-3, "{}", p.alpha_sq());
    }

    #[test]
    fn max_and_approx_alpha() {
        assert!((alpha_prime_max(4.0).powi(2) - 20.0).abs() < 1e-12);
        assert!((approx_alpha(4.0, 0.25) - 12f64.sqrt()).abs() < 1e-12);
        assert!((approx_alpha(4.0, 0.5) - 4.0).abs() < 1e-12);
        assert!(SCParams::from_r(4.0, 2.0).is_err());
    }

    #[test]
    fn frame_codewords_match_cat_formulas() {
        let p = SCParams::cat(4.0).unwrap();
        let dim = recommended_cutoff(&p);
        let (plus, minus) = frame_codewords(&p, dim);
        let n = expectation(&number(dim), &plus).unwrap().re;
        assert!((n - 4.0).abs() < 1e-10);
        let a2 = p.alpha_sq();
        let n_minus = expectation(&number(dim), &minus).unwrap().re;
        assert!((n_minus - a2 / a2.tanh()).abs() < 1e-9);
    }

    #[test]
    fn lab_codeword_photon_number() {
        let p = op_point();
        let dim = recommended_lab_cutoff(&p);
        let (plus, _) = codewords(&p, dim).unwrap();
        let n = expectation(&number(dim), &plus).unwrap().re;
        assert!((n - 4.0).abs() < 0.04, "{n}");
        assert!(plus.tail_weight(10) < 1e-12);
    }

    #[test]
    fn vacuum_limit() {
        let p = SCParams::cat(1e-6).unwrap();
        let (plus, _) = frame_codewords(&p, 10);
        assert!((plus.amps[0].norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn subsystem_basis_properties() {
        let p = op_point();
        let dim = recommended_cutoff(&p);
        let b = build_subsystem_basis(&p, 6, dim).unwrap();
        let gram = b.vectors.adjoint() * &b.vectors;
        assert!(crate::fock::max_abs(&(gram - CMat::identity(12, 12))) < 1e-9);
        let par = b.project(&parity(dim).mat);
        for k in 0..12 {
            let expect = if k < 6 { 1.0 } else { -1.0 };
            assert!((par[(k, k)].re - expect).abs() < 1e-8);
        }
        let (cp, cm) = frame_codewords(&p, dim);
        assert!(1.0 - b.vector(true, 0).inner(&cp).norm() < 1e-9);
        assert!(1.0 - b.vector(false, 0).inner(&cm).norm() < 1e-9);
        let proj = b.projector();
        assert!(crate::fock::max_abs(&(&proj * &proj - &proj)) < 1e-9);
    }

    #[test]
    fn d1_basis_is_codewords() {
        let p = op_point();
        let dim = recommended_cutoff(&p);
        let b = build_subsystem_basis(&p, 1, dim).unwrap();
        let (cp, cm) = frame_codewords(&p, dim);
        assert!((b.vector(true, 0).inner(&cp).re - 1.0).abs() < 1e-12);
        assert!((b.vector(false, 0).inner(&cm).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn raw_gram_offdiagonals_small() {
        let p = op_point();
        let dim = recommended_cutoff(&p);
        let alpha = C64::new(p.alpha_prime, 0.0);
        let dp = crate::fock::displacement(alpha, dim).unwrap().mat;
        let dm = crate::fock::displacement(-alpha, dim).unwrap().mat;
        for sign in [1.0, -1.0] {
            let raw: Vec<CVec> = (0..3)
                .map(|n| {
                    let s = sign * if n % 2 == 0 { 1.0 } else { -1.0 };
                    let v: CVec = dp.column(n).into_owned() + dm.column(n).into_owned() * C64::new(s, 0.0);
                    let nn = v.norm();
                    v / C64::new(nn, 0.0)
                })
                .collect();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(raw[i].dotc(&raw[j]).norm() < 0.2);
                    }
                }
            }
        }
    }

    #[test]
    fn annihilation_matrix_elements() {
        let p = op_point();
        let dim = recommended_cutoff(&p);
        let b = build_subsystem_basis(&p, 4, dim).unwrap();
        let (m, _) = decompose_annihilation(&b).unwrap();
        let m00 = m[(b.index(false, 0), b.index(true, 0))];
        assert!((m00.re - 1.0).abs() < 1e-3, "{m00}");
        let m10 = m[(b.index(false, 1), b.index(true, 0))];
        assert!((m10.re + p.r.sinh()).abs() < 0.02 * p.r.sinh(), "{m10}");

        let c = SCParams::from_r(9.0, 0.0).unwrap();
        let bc = build_subsystem_basis(&c, 3, recommended_cutoff(&c)).unwrap();
        let (mc, _) = decompose_annihilation(&bc).unwrap();
        assert!((mc[(3, 0)].re - 3.0).abs() < 1e-3);
    }

    #[test]
    fn residual_decays_exponentially() {
        let res = |a2: f64| {
            let p = SCParams { nbar: a2, r: 0.0, alpha_prime: a2.sqrt(), eta: 1.0 };
            let b = build_subsystem_basis(&p, 3, recommended_cutoff(&p)).unwrap();
            decompose_annihilation(&b).unwrap().1
        };
        let (r6, r12) = (res(6.0), res(12.0));
        assert!(r6 / r12.max(1e-300) >= 1e3, "{r6} {r12}");
    }

    #[test]
    fn qec_matrix_examples() {
        let p = op_point();
        let dim = recommended_lab_cutoff(&p);
        let a = annihilation(dim).unwrap();
        let c = qec_matrix(&p, &a, dim).unwrap();
        assert!((c[3].re - 1.0).abs() < 1e-4, "{:?}", c);
        let bound = 2.0 * p.r.exp() * p.alpha_prime * (-2.0 * p.alpha_sq()).exp();
        assert!(c[2].norm() <= bound * 1.01 + 1e-12);
        let n = qec_matrix(&p, &number(dim), dim).unwrap();
        assert!((n[0].re - 4.0).abs() < 1e-3, "{:?}", n);
        // (n+ - n-)/2 = -alpha'^2 cosh(2r)/sinh(2 alpha'^2) exactly
        let gap = p.alpha_sq() * (2.0 * p.r).cosh() / (2.0 * p.alpha_sq()).sinh();
        assert!(n[1].norm() <= 1.1 * gap + 1e-10, "{:?}", n);
        let id = qec_matrix(&p, &FockOp::identity(dim), dim).unwrap();
        assert!((id[0] - ONE).norm() < 1e-10 && id[1].norm() < 1e-10 && id[3].norm() < 1e-10);
    }

    #[test]
    fn json_round_trip() {
        let p = op_point();
        let q = SCParams::from_json(&p.to_json()).unwrap();
        assert!((q.alpha_prime - p.alpha_prime).abs() < 1e-12);
        let bad = serde_json::json!({"nbar": 4.0});
        assert!(SCParams::from_json(&bad).is_err());
        let extra = serde_json::json!({"nbar": 4.0, "r": 0.2, "color": 1});
        assert!(SCParams::from_json(&extra).is_err());
    }
}
