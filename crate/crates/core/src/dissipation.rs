//! Engineered dissipators and the full noise generator.

use crate::code::{
    build_subsystem_basis, frame_annihilation, logical_x, logical_z, recommended_cutoff, squeeze_unitary, CodeError, SCParams, SubsystemBasis,
};
use crate::fock::{annihilation, CMat, FockOp, C64};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_phi: f64,
    pub n_th: f64,
}

impl NoiseParams {
    pub fn new(kappa1: f64, kappa2: f64, kappa_phi: f64, n_th: f64) -> Self {
        Self { kappa1, kappa2, kappa_phi, n_th }
    }

    pub fn loss_only(kappa1: f64) -> Self {
        Self::new(kappa1, 1.0, 0.0, 0.0)
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, 1.0, 0.0, 0.0)
    }

    pub fn is_valid(&self) -> bool {
        [self.kappa1, self.kappa2, self.kappa_phi, self.n_th].iter().all(|x| x.is_finite() && *x >= 0.0) && self.kappa2 > 0.0
    }
}

/// Which engineered dissipator stabilizes the mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stabilizer {
    /// Z_L S (a^2 - alpha'^2) S^dag: corrects gauge excitations
    Flip,
    /// S (a^2 - alpha'^2) S^dag: parity preserving, no correction
    Preserve,
    None,
}

#[derive(Clone, Debug)]
pub struct DissipatorSet {
    pub jumps: Vec<(CMat, f64)>,
    pub hamiltonian: Option<CMat>,
}

impl DissipatorSet {
    pub fn dim(&self) -> usize {
        self.jumps.first().map(|j| j.0.nrows()).or(self.hamiltonian.as_ref().map(|h| h.nrows())).unwrap_or(0)
    }
}

/// Stitching radius: gauge levels covered by the exact logical Z.
pub const DEFAULT_STITCH_D: usize = 5;

type CacheKey = (u64, u64, usize, Stabilizer);

fn cache() -> &'static Mutex<HashMap<CacheKey, Arc<CMat>>> {
    static C: OnceLock<Mutex<HashMap<CacheKey, Arc<CMat>>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(sc: &SCParams, dim: usize, which: Stabilizer, build: impl FnOnce() -> Result<CMat, CodeError>) -> Result<Arc<CMat>, CodeError> {
    let key = (sc.nbar.to_bits(), sc.r.to_bits(), dim, which);
    if let Some(m) = cache().lock().expect("cache lock").get(&key) {
        return Ok(m.clone());
    }
    let m = Arc::new(build()?);
    cache().lock().expect("cache lock").insert(key, m.clone());
    Ok(m)
}

/// Logical Z on a squeezed-frame Fock space: exact swap on the span of the first `stitch_d`
/// gauge levels, the quadrature surrogate (a + a^dag)/(2 alpha') on the complement.
pub fn frame_logical_z(basis: &SubsystemBasis) -> CMat {
    let dim = basis.dim;
    let a = annihilation(dim).expect("dim >= 2").mat;
    let x = (&a + a.adjoint()) * C64::new(0.5 / basis.sc.alpha_prime, 0.0);
    let p = basis.projector();
    let q = CMat::identity(dim, dim) - &p;
    let exact = &basis.vectors * logical_z(basis.d) * basis.vectors.adjoint();
    exact + &q * x * &q
}

/// a^2 - alpha'^2 in the squeezed frame.
pub fn frame_two_photon(sc: &SCParams, dim: usize) -> CMat {
    let a = annihilation(dim).expect("dim >= 2").mat;
    &a * &a - CMat::identity(dim, dim) * C64::new(sc.alpha_sq(), 0.0)
}

fn to_lab(m: &CMat, r: f64) -> Result<CMat, CodeError> {
    let s = squeeze_unitary(r, m.nrows())?;
    Ok(&s * m * s.adjoint())
}

/// Lab-frame F = Z_L S(r)(a^2 - alpha'^2)S(r)^dag.
pub fn engineered_f(sc: &SCParams, dim: usize) -> Result<FockOp, CodeError> {
    let m = cached(sc, dim, Stabilizer::Flip, || {
        let basis = build_subsystem_basis(sc, DEFAULT_STITCH_D, dim)?;
        let f = frame_logical_z(&basis) * frame_two_photon(sc, dim);
        to_lab(&f, sc.r)
    })?;
    Ok(FockOp { mat: (*m).clone() })
}

/// Lab-frame F' = S(r)(a^2 - alpha'^2)S(r)^dag, built from S a S^dag = cosh r a + sinh r a^dag.
pub fn parity_preserving_f(sc: &SCParams, dim: usize) -> Result<FockOp, CodeError> {
    let m = cached(sc, dim, Stabilizer::Preserve, || {
        let a = annihilation(dim)?.mat;
        let b = &a * C64::new(sc.r.cosh(), 0.0) + a.adjoint() * C64::new(sc.r.sinh(), 0.0);
        Ok(&b * &b - CMat::identity(dim, dim) * C64::new(sc.alpha_sq(), 0.0))
    })?;
    Ok(FockOp { mat: (*m).clone() })
}

/// Ladder form (e^r/alpha')(c1 a + c2 a^dag) F', with the symmetric default c1 = cosh^2/(cosh^2 + sinh^2).
pub fn engineered_f_ladder(sc: &SCParams, dim: usize, c1: Option<f64>) -> Result<FockOp, CodeError> {
    let (ch, sh) = (sc.r.cosh().powi(2), sc.r.sinh().powi(2));
    let c1 = c1.unwrap_or(ch / (ch + sh));
    let c2 = 1.0 - c1;
    let a = annihilation(dim)?.mat;
    let pre = (&a * C64::new(c1, 0.0) + a.adjoint() * C64::new(c2, 0.0)) * C64::new(sc.r.exp() / sc.alpha_prime, 0.0);
    let fp = parity_preserving_f(sc, dim)?.mat;
    Ok(FockOp { mat: pre * fp })
}

/// Jump list [(F, kappa2), (a, kappa1(1+n_th)), (a^dag, kappa1 n_th), (n, kappa_phi)], zero rates dropped.
pub fn assemble_generator(sc: &SCParams, noise: &NoiseParams, which: Stabilizer, dim: usize) -> Result<DissipatorSet, CodeError> {
    let a = annihilation(dim)?.mat;
    let mut jumps = Vec::new();
    match which {
        Stabilizer::Flip => jumps.push((engineered_f(sc, dim)?.mat, noise.kappa2)),
        Stabilizer::Preserve => jumps.push((parity_preserving_f(sc, dim)?.mat, noise.kappa2)),
        Stabilizer::None => {}
    }
    push_noise(&mut jumps, &a, noise);
    Ok(DissipatorSet { jumps, hamiltonian: None })
}

fn push_noise(jumps: &mut Vec<(CMat, f64)>, a: &CMat, noise: &NoiseParams) {
    let cand = [(a.clone(), noise.kappa1 * (1.0 + noise.n_th)), (a.adjoint(), noise.kappa1 * noise.n_th), (a.adjoint() * a, noise.kappa_phi)];
    for (op, rate) in cand {
        if rate > 0.0 {
            jumps.push((op, rate));
        }
    }
}

/// Same generator expressed in the squeezed frame, on a full Fock cutoff.
pub fn assemble_frame_generator(sc: &SCParams, noise: &NoiseParams, which: Stabilizer, dim: usize) -> Result<DissipatorSet, CodeError> {
    let a = frame_annihilation(sc.r, dim)?;
    let mut jumps = Vec::new();
    match which {
        Stabilizer::Flip => {
            let basis = build_subsystem_basis(sc, DEFAULT_STITCH_D, dim)?;
            jumps.push((frame_logical_z(&basis) * frame_two_photon(sc, dim), noise.kappa2));
        }
        Stabilizer::Preserve => jumps.push((frame_two_photon(sc, dim), noise.kappa2)),
        Stabilizer::None => {}
    }
    push_noise(&mut jumps, &a, noise);
    Ok(DissipatorSet { jumps, hamiltonian: None })
}

/// Operators projected onto the 2d-dimensional subsystem span.
#[derive(Clone, Debug)]
pub struct SubsystemModel {
    pub basis: SubsystemBasis,
    /// physical annihilation operator
    pub a: CMat,
    /// physical number operator, projected after forming a^dag a
    pub n: CMat,
    /// lab quadrature e^r (a + a^dag)
    pub x: CMat,
    pub f: CMat,
    pub f_preserve: CMat,
    pub z: CMat,
    pub xl: CMat,
}

impl SubsystemModel {
    pub fn new(sc: &SCParams, d: usize) -> Result<Self, CodeError> {
        Self::with_cutoff(sc, d, recommended_cutoff(sc))
    }

    pub fn with_cutoff(sc: &SCParams, d: usize, dim: usize) -> Result<Self, CodeError> {
        let basis = build_subsystem_basis(sc, d, dim)?;
        let af = frame_annihilation(sc.r, dim)?;
        let a0 = annihilation(dim)?.mat;
        let a = basis.project(&af);
        let n = basis.project(&(af.adjoint() * &af));
        let x = basis.project(&(&a0 + a0.adjoint()));
        let fp = basis.project(&frame_two_photon(sc, dim));
        let z = logical_z(d);
        let f = &z * &fp;
        Ok(Self { basis, a, n, x, f, f_preserve: fp, z, xl: logical_x(d) })
    }

    pub fn d(&self) -> usize {
        self.basis.d
    }

    pub fn dim(&self) -> usize {
        2 * self.basis.d
    }

    pub fn sc(&self) -> &SCParams {
        &self.basis.sc
    }

    pub fn generator(&self, noise: &NoiseParams, which: Stabilizer) -> DissipatorSet {
        let mut jumps = Vec::new();
        match which {
            Stabilizer::Flip => jumps.push((self.f.clone(), noise.kappa2)),
            Stabilizer::Preserve => jumps.push((self.f_preserve.clone(), noise.kappa2)),
            Stabilizer::None => {}
        }
        let cand =
            [(self.a.clone(), noise.kappa1 * (1.0 + noise.n_th)), (self.a.adjoint(), noise.kappa1 * noise.n_th), (self.n.clone(), noise.kappa_phi)];
        for (op, rate) in cand {
            if rate > 0.0 {
                jumps.push((op, rate));
            }
        }
        DissipatorSet { jumps, hamiltonian: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{codewords, frame_codewords, recommended_lab_cutoff};
    use crate::fock::max_abs;

    fn op_point() -> SCParams {
        SCParams::from_eta(4.0, 0.25).unwrap()
    }

    #[test]
    fn codewords_are_dark_in_lab_frame() {
        let p = SCParams::from_r(4.0, 0.4).unwrap();
        let dim = recommended_lab_cutoff(&p);
        let (plus, minus) = codewords(&p, dim).unwrap();
        let f = engineered_f(&p, dim).unwrap();
        let fp = parity_preserving_f(&p, dim).unwrap();
        for k in [&plus, &minus] {
            assert!((&f.mat * &k.amps).norm() < 1e-8);
            assert!((&fp.mat * &k.amps).norm() < 1e-8);
        }
    }

    #[test]
    fn cat_limit_reduces_to_two_photon() {
        let p = SCParams::cat(4.0).unwrap();
        let dim = recommended_cutoff(&p);
        let fp = parity_preserving_f(&p, dim).unwrap().mat;
        assert!(max_abs(&(fp - frame_two_photon(&p, dim))) < 1e-12);
    }

    #[test]
    fn gauge_matrix_elements() {
        let p = op_point();
        let m = SubsystemModel::new(&p, 4).unwrap();
        let two_a = 2.0 * p.alpha_prime;
        let flip = m.f[(m.basis.index(false, 0), m.basis.index(true, 1))];
        assert!((flip.norm() - two_a).abs() < 0.03 * two_a, "{flip}");
        let keep = m.f_preserve[(m.basis.index(true, 0), m.basis.index(true, 1))];
        assert!((keep.norm() - two_a).abs() < 0.03 * two_a, "{keep}");
        // frame-built F on the full cutoff agrees with the projected one
        let dim = m.basis.dim;
        let basis = build_subsystem_basis(&p, 5, dim).unwrap();
        let full = frame_logical_z(&basis) * frame_two_photon(&p, dim);
        let proj = m.basis.project(&full);
        let (cp, _) = frame_codewords(&p, dim);
        assert!((&full * &cp.amps).norm() < 1e-8);
        assert!((proj[(4, 1)] - flip).norm() < 1e-6);
    }

    #[test]
    fn f_dagger_f_matches_gauge_polynomial() {
        for eta in [0.25, 0.5] {
            let p = SCParams::from_eta(4.0, eta).unwrap();
            let d = 5;
            let dim = recommended_cutoff(&p);
            let basis = build_subsystem_basis(&p, d, dim).unwrap();
            let fp = frame_two_photon(&p, dim);
            let ftf = basis.project(&(fp.adjoint() * &fp));
            let g = crate::code::gauge_lowering(d);
            let gd = g.adjoint();
            let al = C64::new(p.alpha_prime, 0.0);
            let model = &gd * &gd * &g * &g + (&gd * &gd * &g + &gd * &g * &g) * (al * 2.0) + &gd * &g * (al * al * 4.0);
            // entries touching the top gauge level see the truncation of a~^dag
            for i in 0..2 * d {
                for j in 0..2 * d {
                    if i % d >= d - 2 || j % d >= d - 2 {
                        continue;
                    }
                    let (x, y) = (ftf[(i, j)], model[(i, j)]);
                    if y.norm() > 1e-6 {
                        assert!((x - y).norm() < 0.05 * y.norm(), "{i},{j}: {x} vs {y}");
                    } else {
                        assert!(x.norm() < 1e-3, "{i},{j}: {x}");
                    }
                }
            }
        }
    }

    #[test]
    fn generator_jump_list() {
        let p = op_point();
        let dim = 40;
        let g = assemble_generator(&p, &NoiseParams::noiseless(), Stabilizer::Flip, dim).unwrap();
        assert_eq!(g.jumps.len(), 1);
        assert_eq!(g.jumps[0].1, 1.0);
        let n = NoiseParams::new(0.01, 1.0, 1e-4, 0.01);
        let g = assemble_generator(&p, &n, Stabilizer::Flip, dim).unwrap();
        let rates: Vec<f64> = g.jumps.iter().map(|j| j.1).collect();
        assert_eq!(rates, vec![1.0, 0.01 * 1.01, 0.01 * 0.01, 1e-4]);
    }

    #[test]
    fn cache_returns_same_operator() {
        let p = SCParams::from_r(2.0, 0.3).unwrap();
        let a = parity_preserving_f(&p, 30).unwrap();
        let b = parity_preserving_f(&p, 30).unwrap();
        assert_eq!(a, b);
    }
}
