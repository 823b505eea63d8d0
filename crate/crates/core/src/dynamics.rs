//! Lindblad evolution, steady states, process tomography and rate extraction.

use crate::code::{frame_annihilation, frame_codewords, recommended_cutoff, CodeError, SCParams};
use crate::dissipation::{frame_two_photon, NoiseParams, Stabilizer, SubsystemModel};
use crate::fock::{annihilation, displacement, hermitian_func, max_abs, parity, CMat, CVec, FockError, C64, I, ONE, ZERO};
use nalgebra::{Matrix2, Matrix4};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynError {
    #[error("step size underflow at t={t:.4e}; the problem is stiff, try a larger cutoff or smaller rate ratios")]
    StepUnderflow { t: f64 },
    #[error("step budget of {0} exhausted")]
    StepBudget(usize),
    #[error("steady state did not converge (residual {0:.3e})")]
    NoConvergence(f64),
    #[error("tomography unreliable: leakage {0:.3}")]
    Leakage(f64),
    #[error("rate conversion unreliable: chi diagonal {0:.3}")]
    RateConversion(f64),
    #[error("singular linear system")]
    Singular,
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

/// Compressed-row sparse operator.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<C64>,
}

impl Csr {
    pub fn from_dense(m: &CMat, tol: f64) -> Self {
        let n = m.nrows();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..n {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if z.norm() > tol {
                    indices.push(j);
                    data.push(z);
                }
            }
            indptr.push(indices.len());
        }
        Self { n, indptr, indices, data }
    }

    /// self * x for dense x.
    pub fn mul_dense(&self, x: &CMat) -> CMat {
        let cols = x.ncols();
        let mut out = CMat::zeros(self.n, cols);
        for c in 0..cols {
            let xc = x.column(c);
            let xs = xc.as_slice();
            let mut oc = out.column_mut(c);
            for i in 0..self.n {
                let mut acc = ZERO;
                for k in self.indptr[i]..self.indptr[i + 1] {
                    acc += self.data[k] * xs[self.indices[k]];
                }
                oc[i] = acc;
            }
        }
        out
    }
}

/// Operator stored densely or sparsely depending on its fill.
#[derive(Clone, Debug)]
pub enum Op {
    Dense(CMat),
    Sparse(Csr),
}

impl Op {
    pub fn new(m: CMat) -> Self {
        let n = m.nrows();
        let nnz = m.iter().filter(|z| z.norm() > 1e-15).count();
        if n >= 24 && nnz * 5 < n * n {
            Op::Sparse(Csr::from_dense(&m, 1e-15))
        } else {
            Op::Dense(m)
        }
    }

    pub fn mul(&self, x: &CMat) -> CMat {
        match self {
            Op::Dense(m) => m * x,
            Op::Sparse(s) => s.mul_dense(x),
        }
    }
}

/// Right-hand side of a (possibly time-dependent) master equation.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, t: f64, rho: &CMat) -> CMat;
}

/// Time-independent Lindbladian drho/dt = -i[H, rho] + sum_k g_k D[L_k] rho.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    /// -iH - 1/2 sum g L^dag L
    k: Op,
    /// sqrt(g) L
    jumps: Vec<Op>,
    raw_h: Option<CMat>,
    raw_jumps: Vec<(CMat, f64)>,
}

impl Liouvillian {
    pub fn new(h: Option<CMat>, jumps: Vec<(CMat, f64)>) -> Self {
        let dim = h.as_ref().map(|m| m.nrows()).or(jumps.first().map(|j| j.0.nrows())).expect("empty generator");
        let mut k = match &h {
            Some(h) => h * (-I),
            None => CMat::zeros(dim, dim),
        };
        let mut ops = Vec::new();
        for (l, g) in &jumps {
            if *g == 0.0 {
                continue;
            }
            k -= (l.adjoint() * l) * C64::new(0.5 * g, 0.0);
            ops.push(Op::new(l * C64::new(g.sqrt(), 0.0)));
        }
        Self { dim, k: Op::new(k), jumps: ops, raw_h: h, raw_jumps: jumps }
    }

    pub fn from_set(set: &crate::dissipation::DissipatorSet) -> Self {
        Self::new(set.hamiltonian.clone(), set.jumps.clone())
    }

    /// Dense N^2 x N^2 superoperator, column-stacking convention vec(AXB) = (B^T (x) A) vec X.
    pub fn superoperator(&self) -> CMat {
        let n = self.dim;
        let id = CMat::identity(n, n);
        let mut kd = match &self.raw_h {
            Some(h) => h * (-I),
            None => CMat::zeros(n, n),
        };
        let mut m = CMat::zeros(n * n, n * n);
        for (l, g) in &self.raw_jumps {
            if *g == 0.0 {
                continue;
            }
            kd -= (l.adjoint() * l) * C64::new(0.5 * g, 0.0);
            m += l.conjugate().kronecker(l) * C64::new(*g, 0.0);
        }
        m += id.kronecker(&kd) + kd.conjugate().kronecker(&id);
        m
    }

    pub fn propagator(&self, t: f64) -> CMat {
        (self.superoperator() * C64::new(t, 0.0)).exp()
    }
}

impl Generator for Liouvillian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, _t: f64, rho: &CMat) -> CMat {
        let kr = self.k.mul(rho);
        let mut out = &kr + self.k.mul(&rho.adjoint()).adjoint();
        for l in &self.jumps {
            let lr = l.mul(rho);
            out += l.mul(&lr.adjoint()).adjoint();
        }
        out
    }
}

/// Generator built from a closure, for time-dependent problems.
pub struct FnGenerator<F: Fn(f64, &CMat) -> CMat + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &CMat) -> CMat + Sync> Generator for FnGenerator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, t: f64, rho: &CMat) -> CMat {
        (self.f)(t, rho)
    }
}

pub fn vec_col(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn unvec(v: &CVec, n: usize) -> CMat {
    CMat::from_column_slice(n, n, v.as_slice())
}

#[derive(Clone, Copy, Debug)]
pub struct EvolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_steps: 2_000_000 }
    }
}

impl EvolveOptions {
    pub fn tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol * 1e-2, ..Default::default() }
    }
}

// Dormand-Prince 5(4) tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &CMat, terms: &[(f64, &CMat)], h: f64) -> CMat {
    let mut out = y.clone();
    for (c, k) in terms {
        if *c != 0.0 {
            out.zip_apply(*k, |o, kk| *o += kk * (c * h));
        }
    }
    out
}

/// Adaptive Dormand-Prince 5(4) integration from t0 to t1 with max-norm step control.
pub fn evolve_between<G: Generator + ?Sized>(gen: &G, rho0: &CMat, t0: f64, t1: f64, opts: &EvolveOptions) -> Result<CMat, DynError> {
    let mut y = rho0.clone();
    if t1 <= t0 {
        return Ok(y);
    }
    let mut t = t0;
    let mut k1 = gen.apply(t, &y);
    let scale0 = max_abs(&y).max(1e-12);
    let d0 = max_abs(&k1).max(1e-12);
    let mut h = (0.01 * scale0 / d0).min(t1 - t0);
    let mut steps = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(DynError::StepBudget(opts.max_steps));
        }
        if t + h > t1 {
            h = t1 - t;
        }
        if h < 1e-14 * (1.0 + t.abs()) {
            return Err(DynError::StepUnderflow { t });
        }
        let k2 = gen.apply(t + C2 * h, &axpy(&y, &[(A21, &k1)], h));
        let k3 = gen.apply(t + C3 * h, &axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = gen.apply(t + C4 * h, &axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = gen.apply(t + C5 * h, &axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = gen.apply(t + h, &axpy(&y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
        let y5 = axpy(&y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
        let k7 = gen.apply(t + h, &y5);
        let err = axpy(&CMat::zeros(y.nrows(), y.ncols()), &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)], h);
        let mut en = 0.0f64;
        for ((e, a), b) in err.iter().zip(y.iter()).zip(y5.iter()) {
            let sc = opts.atol + opts.rtol * a.norm().max(b.norm());
            en = en.max(e.norm() / sc);
        }
        steps += 1;
        if en <= 1.0 {
            t += h;
            y = y5;
            k1 = k7;
            let fac = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(y)
}

pub fn evolve<G: Generator + ?Sized>(gen: &G, rho0: &CMat, t: f64, opts: &EvolveOptions) -> Result<CMat, DynError> {
    evolve_between(gen, rho0, 0.0, t, opts)
}

/// Steady state reached from `rho0`: shifted inverse iteration on the explicit superoperator
/// for small problems, long-time integration otherwise.
pub fn steady_state(l: &Liouvillian, rho0: &CMat, scale: f64) -> Result<CMat, DynError> {
    let n = l.dim;
    if n * n <= 2500 {
        let m = l.superoperator();
        let shift = 1e-10 * scale.max(1e-12);
        let a = &m - CMat::identity(n * n, n * n) * C64::new(-shift, 0.0);
        let lu = a.lu();
        let mut x = vec_col(rho0);
        for _ in 0..3 {
            x = lu.solve(&x).ok_or(DynError::Singular)?;
            let tr = unvec(&x, n).trace();
            x /= tr;
        }
        let rho = unvec(&x, n);
        let res = max_abs(&l.apply(0.0, &rho));
        if res > 1e-9 * scale.max(1.0) {
            return Err(DynError::NoConvergence(res));
        }
        return Ok(rho);
    }
    let mut rho = rho0.clone();
    let opts = EvolveOptions::tol(1e-10);
    let mut chunk = 10.0 / scale.max(1e-12);
    for _ in 0..60 {
        rho = evolve(l, &rho, chunk, &opts)?;
        let res = max_abs(&l.apply(0.0, &rho));
        if res <= 1e-9 * scale {
            return Ok(rho);
        }
        chunk *= 1.5;
    }
    Err(DynError::NoConvergence(max_abs(&l.apply(0.0, &rho))))
}

/// Logical Paulis on the code basis (|+>, |->): X = diag(1,-1), Y = [[0,i],[-i,0]], Z = swap.
pub fn logical_paulis() -> [Matrix2<C64>; 4] {
    [Matrix2::new(ONE, ZERO, ZERO, ONE), Matrix2::new(ONE, ZERO, ZERO, -ONE), Matrix2::new(ZERO, I, -I, ZERO), Matrix2::new(ZERO, ONE, ONE, ZERO)]
}

/// A qubit map given by its action on the matrix units |i><j|.
#[derive(Clone, Debug)]
pub struct QubitChannel {
    pub out: [[Matrix2<C64>; 2]; 2],
}

impl QubitChannel {
    pub fn identity() -> Self {
        let mut out = [[Matrix2::zeros(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j][(i, j)] = ONE;
            }
        }
        Self { out }
    }

    pub fn apply(&self, rho: &Matrix2<C64>) -> Matrix2<C64> {
        let mut r = Matrix2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                r += self.out[i][j] * rho[(i, j)];
            }
        }
        r
    }

    /// R_ab = tr(P_a E(P_b)) / 2.
    pub fn ptm(&self) -> Matrix4<f64> {
        let p = logical_paulis();
        let mut r = Matrix4::zeros();
        for b in 0..4 {
            let e = self.apply(&p[b]);
            for a in 0..4 {
                r[(a, b)] = ((p[a] * e).trace() * 0.5).re;
            }
        }
        r
    }

    /// Trace retained from a maximally mixed input.
    pub fn retained_trace(&self) -> f64 {
        0.5 * (self.out[0][0].trace() + self.out[1][1].trace()).re
    }

    pub fn entanglement_fidelity(&self) -> f64 {
        let mut f = ZERO;
        for i in 0..2 {
            for j in 0..2 {
                f += self.out[i][j][(i, j)];
            }
        }
        f.re / 4.0
    }

    /// chi with E(rho) = sum_mn chi_mn P_m rho P_n, by exact linear inversion.
    pub fn chi(&self) -> Matrix4<C64> {
        let p = logical_paulis();
        let mut a = CMat::zeros(16, 16);
        let mut b = CVec::zeros(16);
        for i in 0..2 {
            for j in 0..2 {
                let mut eij = Matrix2::zeros();
                eij[(i, j)] = ONE;
                for r in 0..2 {
                    for c in 0..2 {
                        let row = ((i * 2 + j) * 2 + r) * 2 + c;
                        b[row] = self.out[i][j][(r, c)];
                        for m in 0..4 {
                            for n in 0..4 {
                                a[(row, m * 4 + n)] = (p[m] * eij * p[n])[(r, c)];
                            }
                        }
                    }
                }
            }
        }
        let x = a.lu().solve(&b).expect("Pauli basis is complete");
        Matrix4::from_fn(|m, n| x[m * 4 + n])
    }

    pub fn compose(&self, after: &QubitChannel) -> QubitChannel {
        let mut out = [[Matrix2::zeros(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = after.apply(&self.out[i][j]);
            }
        }
        QubitChannel { out }
    }

    /// Conjugation by a 2x2 unitary applied after this channel.
    pub fn then_unitary(&self, u: &Matrix2<C64>) -> QubitChannel {
        let mut out = self.out;
        for row in out.iter_mut() {
            for m in row.iter_mut() {
                *m = u * *m * u.adjoint();
            }
        }
        QubitChannel { out }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PauliProcess {
    #[serde(serialize_with = "ser_chi")]
    pub chi: Matrix4<C64>,
    pub duration: f64,
    pub leakage: f64,
}

fn ser_chi<S: serde::Serializer>(m: &Matrix4<C64>, s: S) -> Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..4).map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect();
    rows.serialize(s)
}

impl PauliProcess {
    pub fn from_channel(ch: &QubitChannel, duration: f64) -> Self {
        Self { chi: ch.chi(), duration, leakage: (1.0 - ch.retained_trace()).max(0.0) }
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.chi - self.chi.adjoint()).iter().fold(0.0, |a, z| a.max(z.norm()))
    }

    /// Largest entry outside the (I,X) and (Y,Z) blocks, relative to chi_II.
    pub fn off_block_ratio(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..4 {
            for n in 0..4 {
                if (m < 2) != (n < 2) {
                    worst = worst.max(self.chi[(m, n)].norm());
                }
            }
        }
        worst / self.chi[(0, 0)].norm()
    }
}

/// gamma_i = chi_ii / duration, (X, Y, Z).
pub fn twirled_rates(p: &PauliProcess) -> Result<[f64; 3], DynError> {
    let mut out = [0.0; 3];
    for k in 1..4 {
        let c = p.chi[(k, k)].re;
        if c > 0.3 {
            return Err(DynError::RateConversion(c));
        }
        out[k - 1] = c.max(0.0) / p.duration;
    }
    Ok(out)
}

/// Rates from PTM diagonals through lambda_X = exp(-2(gY+gZ)T) and cyclic; valid for any
/// probability size under the Pauli-twirled, Markovian assumption.
pub fn twirled_rates_exact(ch: &QubitChannel, duration: f64) -> [f64; 3] {
    let r = ch.ptm();
    let s: Vec<f64> = (1..4).map(|k| -r[(k, k)].max(1e-300).ln() / (2.0 * duration)).collect();
    [(s[1] + s[2] - s[0]) / 2.0, (s[0] + s[2] - s[1]) / 2.0, (s[0] + s[1] - s[2]) / 2.0]
}

/// How logical information is read out of a 2d subsystem density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Readout {
    /// partial trace over the gauge mode
    GaugeTrace,
    /// the (+,0)/(-,0) block only
    CodeBlock,
}

pub fn read_logical(rho: &CMat, d: usize, readout: Readout) -> Matrix2<C64> {
    let mut r = Matrix2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            r[(i, j)] = match readout {
                Readout::GaugeTrace => (0..d).map(|g| rho[(i * d + g, j * d + g)]).sum(),
                Readout::CodeBlock => rho[(i * d, j * d)],
            };
        }
    }
    r
}

/// Places a logical 2x2 operator on the (+,0)/(-,0) block.
pub fn embed_logical(m: &Matrix2<C64>, d: usize) -> CMat {
    let mut r = CMat::zeros(2 * d, 2 * d);
    for i in 0..2 {
        for j in 0..2 {
            r[(i * d, j * d)] = m[(i, j)];
        }
    }
    r
}

/// Channel on the code qubit induced by a superoperator propagator on the 2d subsystem space.
pub fn channel_from_propagator(prop: &CMat, d: usize, readout: Readout) -> QubitChannel {
    let n = 2 * d;
    let mut out = [[Matrix2::zeros(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let col = (j * d) * n + i * d;
            let v = prop.column(col).into_owned();
            out[i][j] = read_logical(&unvec(&v, n), d, readout);
        }
    }
    QubitChannel { out }
}

/// Codespace tomography of evolution under `l` for time `t` (subsystem representation).
pub fn channel_tomography(l: &Liouvillian, t: f64, d: usize, readout: Readout) -> Result<PauliProcess, DynError> {
    let prop = l.propagator(t);
    let ch = channel_from_propagator(&prop, d, readout);
    let p = PauliProcess::from_channel(&ch, t);
    if p.leakage > 0.1 {
        return Err(DynError::Leakage(p.leakage));
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MemoryRates {
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub gamma_z: f64,
    pub leakage: f64,
}

/// Pauli rates from log-slopes of the PTM diagonal across several durations, which removes the
/// initial transient of the gauge mode.
pub fn memory_rates(model: &SubsystemModel, noise: &NoiseParams, which: Stabilizer, durations: &[f64]) -> MemoryRates {
    let l = Liouvillian::from_set(&model.generator(noise, which));
    let m = l.superoperator();
    let d = model.d();
    let mut logs = vec![Vec::new(); 3];
    let mut leak = 0.0f64;
    for &t in durations {
        let prop = (&m * C64::new(t, 0.0)).exp();
        let ch = channel_from_propagator(&prop, d, Readout::GaugeTrace);
        leak = leak.max(1.0 - ch.retained_trace());
        let r = ch.ptm();
        for k in 0..3 {
            logs[k].push(r[(k + 1, k + 1)].max(1e-300).ln());
        }
    }
    let slope = |ys: &Vec<f64>| -> f64 { -linear_fit(durations, ys).0 / 2.0 };
    let s: Vec<f64> = logs.iter().map(slope).collect();
    MemoryRates {
        gamma_x: (s[1] + s[2] - s[0]) / 2.0,
        gamma_y: (s[0] + s[2] - s[1]) / 2.0,
        gamma_z: (s[0] + s[1] - s[2]) / 2.0,
        leakage: leak.max(0.0),
    }
}

/// Least-squares (slope, intercept).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// First-order bit-flip rate from the numerically computed conserved quantity J of D[a^2 - alpha'^2]
/// in the even-odd coherence sector (squeezed frame): gamma = -kappa_phi tr{J^dag D[S^dag n S] |C+><C-|} / 2.
pub fn bitflip_rate_numeric(sc: &SCParams, kappa_phi: f64, dim: usize) -> Result<f64, DynError> {
    if kappa_phi == 0.0 {
        return Ok(0.0);
    }
    let f = frame_two_photon(sc, dim);
    let (cp, cm) = frame_codewords(sc, dim);
    let evens: Vec<usize> = (0..dim).step_by(2).collect();
    let odds: Vec<usize> = (1..dim).step_by(2).collect();
    let (ne, no) = (evens.len(), odds.len());
    let ff = f.adjoint() * &f;
    let fd = f.adjoint();
    // unknown J[e, o] stored at index e_idx + ne * o_idx; L^dag(J) = F^dag J F - {F^dag F, J}/2
    let n = ne * no;
    let mut m = CMat::zeros(n, n);
    for (oi, &o) in odds.iter().enumerate() {
        for (ei, &e) in evens.iter().enumerate() {
            let row = ei + ne * oi;
            // (F^dag J F)[e,o] = sum_{e',o'} Fd[e,e'] J[e',o'] F[o',o]
            for (oj, &o2) in odds.iter().enumerate() {
                let fo = f[(o2, o)];
                if fo == ZERO {
                    continue;
                }
                for (ej, &e2) in evens.iter().enumerate() {
                    let fe = fd[(e, e2)];
                    if fe != ZERO {
                        m[(row, ej + ne * oj)] += fe * fo;
                    }
                }
            }
            for (ej, &e2) in evens.iter().enumerate() {
                let v = ff[(e, e2)];
                if v != ZERO {
                    m[(row, ej + ne * oi)] -= v * 0.5;
                }
            }
            for (oj, &o2) in odds.iter().enumerate() {
                let v = ff[(o2, o)];
                if v != ZERO {
                    m[(row, ei + ne * oj)] -= v * 0.5;
                }
            }
        }
    }
    // replace the equation where the steady coherence is largest by the normalization <C+|J|C-> = 1
    let mut best = (0usize, 0.0f64);
    for (oi, &o) in odds.iter().enumerate() {
        for (ei, &e) in evens.iter().enumerate() {
            let w = (cp.amps[e] * cm.amps[o]).norm();
            if w > best.1 {
                best = (ei + ne * oi, w);
            }
        }
    }
    let mut rhs = CVec::zeros(n);
    for (oi, &o) in odds.iter().enumerate() {
        for (ei, &e) in evens.iter().enumerate() {
            m[(best.0, ei + ne * oi)] = cp.amps[e].conj() * cm.amps[o];
        }
    }
    rhs[best.0] = ONE;
    let x = m.lu().solve(&rhs).ok_or(DynError::Singular)?;
    let mut j = CMat::zeros(dim, dim);
    for (oi, &o) in odds.iter().enumerate() {
        for (ei, &e) in evens.iter().enumerate() {
            j[(e, o)] = x[ei + ne * oi];
        }
    }
    let a = frame_annihilation(sc.r, dim)?;
    let nop = a.adjoint() * &a;
    let rho = &cp.amps * cm.amps.adjoint();
    let nn = nop.adjoint() * &nop;
    let d = &nop * &rho * nop.adjoint() - (&nn * &rho + &rho * &nn) * C64::new(0.5, 0.0);
    let val = (j.adjoint() * d).trace();
    Ok(-kappa_phi * val.re / 2.0)
}

/// Recovery used after a loss channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recovery {
    AutoQec,
    None,
}

/// Gauge dimension used for the recovery simulation.
pub const EI_GAUGE_DIM: usize = 8;

/// 1 - F_e of encode -> pure loss with probability gamma -> recovery -> codespace readout.
/// Loss Kraus operators are the exact pure-loss ones, sqrt((1-e^{-g})^k/k!) e^{-g n/2} a^k, k <= 4.
pub fn entanglement_infidelity(sc: &SCParams, gamma: f64, recovery: Recovery) -> Result<f64, DynError> {
    let model = SubsystemModel::new(sc, EI_GAUGE_DIM)?;
    let dim = model.basis.dim;
    let af = frame_annihilation(sc.r, dim)?;
    let nf = af.adjoint() * &af;
    let damp = hermitian_func(&nf, |x| C64::new((-0.5 * gamma * x).exp(), 0.0));
    let (cp, cm) = frame_codewords(sc, dim);
    let q = 1.0 - (-gamma).exp();
    let v = &model.basis.vectors;
    // columns: projected A_k |C+>, A_k |C->
    let mut branches: Vec<[CVec; 2]> = Vec::new();
    let mut ak = CMat::identity(dim, dim);
    let mut fact = 1.0;
    for k in 0..=4usize {
        if k > 0 {
            ak = &af * &ak;
            fact *= k as f64;
        }
        let w = (q.powi(k as i32) / fact).sqrt();
        let op = &damp * &ak * C64::new(w, 0.0);
        branches.push([v.adjoint() * (&op * &cp.amps), v.adjoint() * (&op * &cm.amps)]);
    }
    let d = model.d();
    let n = 2 * d;
    let rec = match recovery {
        Recovery::AutoQec => {
            let l = Liouvillian::new(None, vec![(model.f.clone(), 1.0)]);
            Some(l.propagator(20.0 / (4.0 * sc.alpha_sq())))
        }
        Recovery::None => None,
    };
    let mut out = [[Matrix2::zeros(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut rho = CMat::zeros(n, n);
            for b in &branches {
                rho += &b[i] * b[j].adjoint();
            }
            let rho = match &rec {
                Some(p) => unvec(&(p * vec_col(&rho)), n),
                None => rho,
            };
            out[i][j] = read_logical(&rho, d, Readout::CodeBlock);
        }
    }
    Ok(1.0 - QubitChannel { out }.entanglement_fidelity())
}

/// Wigner function W(beta) = (2/pi) tr[Pi D(-beta) rho D(beta)] on a grid of (x, p), beta = x + i p.
pub fn wigner(rho: &CMat, xs: &[f64], ps: &[f64]) -> nalgebra::DMatrix<f64> {
    let n = rho.nrows();
    let par = parity(n).mat;
    let mut w = nalgebra::DMatrix::zeros(ps.len(), xs.len());
    for (ix, &x) in xs.iter().enumerate() {
        for (ip, &p) in ps.iter().enumerate() {
            let dm = displacement(C64::new(-x, -p), n).expect("dim >= 2").mat;
            let shifted = &dm * rho * dm.adjoint();
            w[(ip, ix)] = 2.0 / std::f64::consts::PI * (&par * shifted).trace().re;
        }
    }
    w
}

/// Uniform grid helper.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Frame cutoff used for full-Fock single-mode runs.
pub fn frame_cutoff(sc: &SCParams) -> usize {
    recommended_cutoff(sc)
}

/// Single-mode lowering operator, re-exported for callers assembling custom generators.
pub fn lowering(dim: usize) -> CMat {
    annihilation(dim).expect("dim >= 2").mat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::KetState;

    #[test]
    fn amplitude_damping_population() {
        let dim = 4;
        let a = lowering(dim);
        let l = Liouvillian::new(None, vec![(a, 0.7)]);
        let rho0 = KetState::basis(1, dim).unwrap().to_density().mat;
        let t = 1.3;
        let out = evolve(&l, &rho0, t, &EvolveOptions::tol(1e-10)).unwrap();
        assert!((out[(0, 0)].re - (1.0 - (-0.7 * t).exp())).abs() < 1e-8);
        assert_eq!(evolve(&l, &rho0, 0.0, &EvolveOptions::default()).unwrap(), rho0);
        let prop = l.propagator(t);
        let out2 = unvec(&(prop * vec_col(&rho0)), dim);
        assert!(max_abs(&(out - out2)) < 1e-8);
    }

    #[test]
    fn loss_steady_state_is_vacuum() {
        let dim = 6;
        let l = Liouvillian::new(None, vec![(lowering(dim), 1.0)]);
        let rho0 = KetState::basis(3, dim).unwrap().to_density().mat;
        let ss = steady_state(&l, &rho0, 1.0).unwrap();
        assert!((ss[(0, 0)].re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_and_dephasing_chi() {
        let id = QubitChannel::identity();
        let p = PauliProcess::from_channel(&id, 1.0);
        assert!((p.chi[(0, 0)].re - 1.0).abs() < 1e-12);
        assert!(twirled_rates(&p).unwrap().iter().all(|g| g.abs() < 1e-12));
        // Z flip with probability p (Z = swap in the code basis)
        let pf = 0.01;
        let z = logical_paulis()[3];
        let mut out = id.out;
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = id.out[i][j] * C64::new(1.0 - pf, 0.0) + z * id.out[i][j] * z * C64::new(pf, 0.0);
            }
        }
        let ch = QubitChannel { out };
        let pp = PauliProcess::from_channel(&ch, 1.0);
        assert!((pp.chi[(0, 0)].re - 0.99).abs() < 1e-12);
        assert!((pp.chi[(3, 3)].re - 0.01).abs() < 1e-12);
        assert!((twirled_rates(&pp).unwrap()[2] - 0.01).abs() < 1e-12);
    }

    #[test]
    fn wigner_vacuum_and_odd_cat() {
        let dim = 30;
        let vac = KetState::basis(0, dim).unwrap().to_density().mat;
        let w = wigner(&vac, &[0.0], &[0.0]);
        assert!((w[(0, 0)] - 2.0 / std::f64::consts::PI).abs() < 1e-9);
        let sc = SCParams::cat(2.0).unwrap();
        let (_, m) = frame_codewords(&sc, dim);
        let w = wigner(&m.to_density().mat, &[0.0], &[0.0]);
        assert!(w[(0, 0)] < 0.0);
    }
}
