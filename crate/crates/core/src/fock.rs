//! Truncated Fock-space operators and states.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("invalid Fock dimension {0}")]
    InvalidDimension(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Dense operator on a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOp {
    pub mat: CMat,
}

impl FockOp {
    pub fn new(mat: CMat) -> Result<Self, FockError> {
        if mat.nrows() != mat.ncols() {
            return Err(FockError::DimensionMismatch(mat.nrows(), mat.ncols()));
        }
        Ok(Self { mat })
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn identity(dim: usize) -> Self {
        Self { mat: CMat::identity(dim, dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { mat: CMat::zeros(dim, dim) }
    }

    pub fn adjoint(&self) -> Self {
        Self { mat: self.mat.adjoint() }
    }

    pub fn mul(&self, other: &FockOp) -> Result<Self, FockError> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self { mat: &self.mat * &other.mat })
    }

    pub fn add(&self, other: &FockOp) -> Result<Self, FockError> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self { mat: &self.mat + &other.mat })
    }

    pub fn scale(&self, z: C64) -> Self {
        Self { mat: &self.mat * z }
    }

    pub fn apply(&self, ket: &KetState) -> Result<KetState, FockError> {
        check_dims(self.dim(), ket.dim())?;
        Ok(KetState { amps: &self.mat * &ket.amps })
    }

    /// Max-norm distance on the leading `block` x `block` corner.
    pub fn block_distance(&self, other: &FockOp, block: usize) -> f64 {
        let b = block.min(self.dim()).min(other.dim());
        let mut worst = 0.0f64;
        for j in 0..b {
            for i in 0..b {
                worst = worst.max((self.mat[(i, j)] - other.mat[(i, j)]).norm());
            }
        }
        worst
    }

    pub fn to_json(&self) -> serde_json::Value {
        mat_to_json(&self.mat)
    }

    pub fn write_binary<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_mat_binary(&self.mat, w)
    }
}

fn check_dims(a: usize, b: usize) -> Result<(), FockError> {
    if a != b {
        Err(FockError::DimensionMismatch(a, b))
    } else {
        Ok(())
    }
}

/// Normalizable state vector on a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct KetState {
    pub amps: CVec,
}

impl KetState {
    pub fn new(amps: CVec) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn basis(n: usize, dim: usize) -> Result<Self, FockError> {
        if n >= dim {
            return Err(FockError::InvalidDimension(dim));
        }
        let mut amps = CVec::zeros(dim);
        amps[n] = ONE;
        Ok(Self { amps })
    }

    /// Coherent state from the Poisson amplitudes, normalized after truncation.
    pub fn coherent(alpha: C64, dim: usize) -> Self {
        let mut amps = CVec::zeros(dim);
        let pref = (-alpha.norm_sqr() / 2.0).exp();
        let mut term = C64::new(pref, 0.0);
        for n in 0..dim {
            amps[n] = term;
            term = term * alpha / ((n + 1) as f64).sqrt();
        }
        let mut k = Self { amps };
        k.normalize();
        k
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            self.amps /= C64::new(n, 0.0);
        }
    }

    pub fn inner(&self, other: &KetState) -> C64 {
        self.amps.dotc(&other.amps)
    }

    pub fn to_density(&self) -> DensityOp {
        DensityOp { mat: &self.amps * self.amps.adjoint() }
    }

    /// Weight carried by the top `levels` Fock levels.
    pub fn tail_weight(&self, levels: usize) -> f64 {
        let d = self.dim();
        self.amps.iter().skip(d.saturating_sub(levels)).map(|z| z.norm_sqr()).sum()
    }
}

/// Density operator on a truncated Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp {
    pub mat: CMat,
}

impl DensityOp {
    pub fn new(mat: CMat) -> Self {
        Self { mat }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.mat - self.mat.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.mat + self.mat.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn expect(&self, op: &FockOp) -> C64 {
        (&op.mat * &self.mat).trace()
    }

    pub fn fidelity_pure(&self, ket: &KetState) -> f64 {
        (ket.amps.adjoint() * &self.mat * &ket.amps)[(0, 0)].re
    }
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub fn annihilation(dim: usize) -> Result<FockOp, FockError> {
    if dim < 2 {
        return Err(FockError::InvalidDimension(dim));
    }
    let mut m = CMat::zeros(dim, dim);
    for n in 1..dim {
        m[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    Ok(FockOp { mat: m })
}

pub fn creation(dim: usize) -> Result<FockOp, FockError> {
    Ok(annihilation(dim)?.adjoint())
}

pub fn number(dim: usize) -> FockOp {
    FockOp { mat: CMat::from_diagonal(&CVec::from_fn(dim, |n, _| C64::new(n as f64, 0.0))) }
}

/// e^{-i pi n}, diagonal (+1, -1, +1, ...).
pub fn parity(dim: usize) -> FockOp {
    FockOp { mat: CMat::from_diagonal(&CVec::from_fn(dim, |n, _| C64::new(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0))) }
}

/// Levels excluded from truncation-sensitive assertions: the top 10%.
pub fn safe_block(dim: usize) -> usize {
    dim - (dim as f64 * 0.1).ceil() as usize
}

pub fn matexp(a: &CMat) -> CMat {
    a.clone().exp()
}

/// exp(i t H) for Hermitian H through its eigendecomposition.
pub fn hermitian_exp(h: &CMat, t: f64) -> CMat {
    let eig = nalgebra::linalg::SymmetricEigen::new((h + h.adjoint()) * C64::new(0.5, 0.0));
    let phases = CVec::from_fn(eig.eigenvalues.len(), |k, _| (I * (t * eig.eigenvalues[k])).exp());
    &eig.eigenvectors * CMat::from_diagonal(&phases) * eig.eigenvectors.adjoint()
}

/// f(H) for Hermitian H through its eigendecomposition.
pub fn hermitian_func(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let eig = nalgebra::linalg::SymmetricEigen::new((h + h.adjoint()) * C64::new(0.5, 0.0));
    let vals = CVec::from_fn(eig.eigenvalues.len(), |k, _| f(eig.eigenvalues[k]));
    &eig.eigenvectors * CMat::from_diagonal(&vals) * eig.eigenvectors.adjoint()
}

/// D(alpha) = exp(alpha a^dag - alpha^* a).
pub fn displacement(alpha: C64, dim: usize) -> Result<FockOp, FockError> {
    let a = annihilation(dim)?;
    let mag = alpha.norm();
    if mag * mag + 6.0 * mag >= dim as f64 {
        log::warn!("displacement |alpha|={mag:.3} leaves little cutoff margin at dim={dim}");
    }
    // alpha a^dag - alpha^* a = i H with H Hermitian
    let g = a.mat.adjoint() * alpha - &a.mat * alpha.conj();
    let h = &g * (-I);
    Ok(FockOp { mat: hermitian_exp(&h, 1.0) })
}

/// S(r) = exp[r (a^2 - a^dag^2) / 2].
pub fn squeezing(r: f64, dim: usize) -> Result<FockOp, FockError> {
    let a = annihilation(dim)?;
    let a2 = &a.mat * &a.mat;
    let g = (&a2 - a2.adjoint()) * C64::new(0.5 * r, 0.0);
    let h = &g * (-I);
    Ok(FockOp { mat: hermitian_exp(&h, 1.0) })
}

pub fn tensor(a: &FockOp, b: &FockOp) -> FockOp {
    FockOp { mat: a.mat.kronecker(&b.mat) }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn commutator(a: &FockOp, b: &FockOp) -> Result<FockOp, FockError> {
    check_dims(a.dim(), b.dim())?;
    Ok(FockOp { mat: &a.mat * &b.mat - &b.mat * &a.mat })
}

pub fn expectation(op: &FockOp, state: &KetState) -> Result<C64, FockError> {
    check_dims(op.dim(), state.dim())?;
    Ok(state.amps.dotc(&(&op.mat * &state.amps)))
}

#[derive(Serialize, Deserialize)]
struct JsonMat {
    rows: usize,
    cols: usize,
    /// column-major [re, im] pairs
    data: Vec<[f64; 2]>,
}

pub fn mat_to_json(m: &CMat) -> serde_json::Value {
    let jm = JsonMat { rows: m.nrows(), cols: m.ncols(), data: m.iter().map(|z| [z.re, z.im]).collect() };
    serde_json::to_value(jm).expect("matrix serializes")
}

pub fn mat_from_json(v: &serde_json::Value) -> Option<CMat> {
    let jm: JsonMat = serde_json::from_value(v.clone()).ok()?;
    if jm.data.len() != jm.rows * jm.cols {
        return None;
    }
    Some(CMat::from_iterator(jm.rows, jm.cols, jm.data.iter().map(|p| C64::new(p[0], p[1]))))
}

/// Binary layout: u64 rows, u64 cols, then column-major (re, im) f64 pairs, all little-endian.
pub fn write_mat_binary<W: Write>(m: &CMat, mut w: W) -> std::io::Result<()> {
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for z in m.iter() {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mat_binary(bytes: &[u8]) -> Option<CMat> {
    let u = |k: usize| -> Option<u64> { Some(u64::from_le_bytes(bytes.get(k..k + 8)?.try_into().ok()?)) };
    let f = |k: usize| -> Option<f64> { Some(f64::from_le_bytes(bytes.get(k..k + 8)?.try_into().ok()?)) };
    let rows = u(0)? as usize;
    let cols = u(8)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        data.push(C64::new(f(16 + 16 * k)?, f(24 + 16 * k)?));
    }
    Some(CMat::from_vec(rows, cols, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn annihilation_entries() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.mat[(0, 1)], ONE);
        assert_eq!(a.mat[(1, 0)], ZERO);
        let a4 = annihilation(4).unwrap();
        assert!((a4.mat[(2, 3)].re - 3f64.sqrt()).abs() < 1e-15);
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn commutator_is_identity_below_top() {
        let a = annihilation(30).unwrap();
        let c = commutator(&a, &a.adjoint()).unwrap();
        assert!(c.block_distance(&FockOp::identity(30), 29) < 1e-12);
    }

    #[test]
    fn displacement_overlaps() {
        assert!(displacement(ZERO, 10).unwrap().block_distance(&FockOp::identity(10), 10) < 1e-12);
        let d = displacement(C64::new(2.0, 0.0), 60).unwrap();
        assert!((d.mat[(0, 0)].re - (-2f64).exp()).abs() < 1e-10);
        assert!((d.mat[(1, 0)].re - 2.0 * (-2f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn squeezed_vacuum_moments() {
        let dim = 60;
        let s = squeezing(0.5, dim).unwrap();
        let vac = KetState::basis(0, dim).unwrap();
        let psi = s.apply(&vac).unwrap();
        let a = annihilation(dim).unwrap();
        let x = a.add(&a.adjoint()).unwrap().scale(C64::new(1.0 / 2f64.sqrt(), 0.0));
        let x2 = x.mul(&x).unwrap();
        let var = expectation(&x2, &psi).unwrap().re - expectation(&x, &psi).unwrap().re.powi(2);
        assert!((var - (-1.0f64).exp() / 2.0).abs() < 1e-6);

        let s = squeezing(1.32, 200).unwrap();
        let psi = s.apply(&KetState::basis(0, 200).unwrap()).unwrap();
        let n = expectation(&number(200), &psi).unwrap().re;
        assert!((n - 1.32f64.sinh().powi(2)).abs() < 1e-6);
    }

    #[test]
    fn tensor_and_exp_trivia() {
        let t = tensor(&FockOp::identity(2), &FockOp::identity(3));
        assert_eq!(t, FockOp::identity(6));
        assert_eq!(matexp(&CMat::zeros(4, 4)), CMat::identity(4, 4));
        let n = expectation(&number(8), &KetState::basis(3, 8).unwrap()).unwrap();
        assert!((n.re - 3.0).abs() < 1e-15);
    }

    #[test]
    fn binary_and_json_round_trip() {
        let d = displacement(C64::new(0.3, -0.2), 6).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(read_mat_binary(&buf).unwrap(), d.mat);
        assert_eq!(mat_from_json(&d.to_json()).unwrap(), d.mat);
    }
}
