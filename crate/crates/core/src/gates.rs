//! Bias-preserving operations simulated in the subsystem-truncated representation.

use crate::code::{frame_codewords, recommended_cutoff, CodeError, SCParams};
use crate::dissipation::{frame_two_photon, NoiseParams, Stabilizer, SubsystemModel};
use crate::dynamics::Readout;
use crate::dynamics::{evolve, logical_paulis, DynError, EvolveOptions, FnGenerator, Liouvillian, QubitChannel};
use crate::fock::{hermitian_exp, kron, squeezing, CMat, CVec, C64, ONE, ZERO};
use crate::rates::default_cooling_time;
use log::warn;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    Zrot,
    #[serde(rename = "zz")]
    ZZrot,
    #[serde(rename = "cx", alias = "cnot")]
    CX,
    Toffoli,
    X,
    PrepPlus,
    MeasX,
}

/// Offset subtracted from the target number operator in the CX and Toffoli Hamiltonians.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TargetOffset {
    /// mean photon number of the codewords
    #[default]
    MeanPhotonNumber,
    /// alpha'^2
    DisplacementSquared,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub kind: GateKind,
    pub sc: SCParams,
    pub t: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub t_cool: Option<f64>,
    #[serde(default = "default_gauge_dim")]
    pub d: usize,
    #[serde(default)]
    pub target_offset: TargetOffset,
}

fn default_gauge_dim() -> usize {
    4
}

impl GateSpec {
    pub fn new(kind: GateKind, sc: SCParams, t: f64) -> Self {
        Self { kind, sc, t, theta: PI, t_cool: None, d: default_gauge_dim(), target_offset: TargetOffset::default() }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = d;
        self
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct GateBudget {
    pub p_zc: f64,
    pub p_zt: f64,
    pub p_zczt: f64,
    pub p_xy: f64,
    pub leakage: f64,
    pub duration: f64,
    /// deterministic rotation angle removed before extracting probabilities
    pub angle: Option<f64>,
}

impl GateBudget {
    pub fn total_z(&self) -> f64 {
        self.p_zc + self.p_zt + self.p_zczt
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GateError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error("invalid gate spec: {0}")]
    Spec(String),
}

fn check_time(t: f64) -> Result<(), GateError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(GateError::Spec(format!("gate time {t} must be positive")));
    }
    Ok(())
}

/// Duration of the recovery step that returns gauge excitations before readout.
pub fn recovery_time(sc: &SCParams, kappa2: f64) -> f64 {
    20.0 / (4.0 * kappa2 * sc.alpha_sq())
}

/// Pauli probabilities (I, X, Y, Z) from PTM diagonals.
pub fn pauli_probabilities(lx: f64, ly: f64, lz: f64) -> [f64; 4] {
    [(1.0 + lx + ly + lz) / 4.0, (1.0 + lx - ly - lz) / 4.0, (1.0 - lx + ly - lz) / 4.0, (1.0 - lx - ly + lz) / 4.0]
}

/// Z(theta) on one stabilized mode; the deterministic rotation is fitted from the PTM and removed.
pub fn simulate_z_rotation(spec: &GateSpec, noise: &NoiseParams, which: Stabilizer) -> Result<GateBudget, GateError> {
    check_time(spec.t)?;
    let sc = &spec.sc;
    let model = SubsystemModel::new(sc, spec.d)?;
    let al = sc.alpha_prime;
    let gap = 4.0 * noise.kappa2 * sc.alpha_sq();
    let drive = spec.theta.abs() / (4.0 * al * spec.t);
    if drive > gap * 10.0 {
        warn!("Z rotation drive {drive:.3e} exceeds the dissipation gap {gap:.3e} by more than 10x");
    }
    let mut set = model.generator(noise, which);
    set.hamiltonian = Some(&model.x * C64::new(spec.theta / (4.0 * al * spec.t), 0.0));
    let prop = Liouvillian::from_set(&set).propagator(spec.t);
    let rec = Liouvillian::new(None, vec![(model.f.clone(), noise.kappa2)]).propagator(recovery_time(sc, noise.kappa2));
    let ch = single_mode_channel(&(rec * prop), spec.d);
    let r = ch.ptm();
    let ang = (r[(2, 1)] - r[(1, 2)]).atan2(r[(1, 1)] + r[(2, 2)]);
    let (c, s) = (ang.cos(), ang.sin());
    // undo the rotation in the X-Y block
    let lx = c * r[(1, 1)] + s * r[(2, 1)];
    let ly = -s * r[(1, 2)] + c * r[(2, 2)];
    let lz = r[(3, 3)];
    let p = pauli_probabilities(lx, ly, lz);
    Ok(GateBudget {
        p_zc: p[3],
        p_xy: p[1] + p[2],
        leakage: (1.0 - ch.retained_trace()).max(0.0),
        duration: spec.t,
        angle: Some(ang),
        ..Default::default()
    })
}

fn single_mode_channel(prop: &CMat, d: usize) -> QubitChannel {
    crate::dynamics::channel_from_propagator(prop, d, Readout::CodeBlock)
}

/// Deterministic rotation angle implemented by Z(theta), from the PTM X-Y block.
pub fn z_rotation_angle(spec: &GateSpec, noise: &NoiseParams) -> Result<f64, GateError> {
    Ok(simulate_z_rotation(spec, noise, Stabilizer::Flip)?.angle.unwrap_or(0.0))
}

/// Log grid with `per_decade` points per decade over [lo, hi].
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=n).map(|k| lo * 10f64.powf(k as f64 / per_decade as f64)).collect()
}

/// Default gate-time grid, kappa2 T in [0.05, 50] at 20 points per decade.
pub fn default_time_grid(kappa2: f64) -> Vec<f64> {
    log_grid(0.05, 50.0, 20).into_iter().map(|x| x / kappa2).collect()
}

/// Minimum of `f` over `grid` with its argument; entries that error are skipped.
pub fn optimal_time<F: Fn(f64) -> Result<f64, GateError> + Sync>(grid: &[f64], f: F) -> Option<(f64, f64)> {
    use rayon::prelude::*;
    let vals: Vec<(f64, f64)> = grid.par_iter().filter_map(|&t| f(t).ok().map(|v| (t, v))).collect();
    vals.into_iter().min_by(|a, b| a.1.total_cmp(&b.1))
}

// Multi-mode runs in the subsystem representation.

/// Fixed-duration evolution: exact propagator for small spaces, adaptive integration otherwise.
struct Stepper<'a> {
    l: &'a Liouvillian,
    t: f64,
    prop: Option<CMat>,
}

const PROPAGATOR_MAX_DIM: usize = 16;

impl<'a> Stepper<'a> {
    fn new(l: &'a Liouvillian, t: f64) -> Self {
        use crate::dynamics::Generator;
        let prop = (l.dim() <= PROPAGATOR_MAX_DIM).then(|| l.propagator(t));
        Self { l, t, prop }
    }

    fn apply(&self, rho: &CMat) -> Result<CMat, DynError> {
        match &self.prop {
            Some(p) => Ok(crate::dynamics::unvec(&(p * crate::dynamics::vec_col(rho)), rho.nrows())),
            None => evolve(self.l, rho, self.t, &EvolveOptions::tol(1e-9)),
        }
    }
}

fn embed_op(op: &CMat, mode: usize, modes: usize) -> CMat {
    let dim = op.nrows();
    let mut out = CMat::identity(1, 1);
    for m in 0..modes {
        out = if m == mode { kron(&out, op) } else { kron(&out, &CMat::identity(dim, dim)) };
    }
    out
}

fn dissipate(l: &CMat, rho: &CMat, rate: f64, out: &mut CMat) {
    let lr = l * rho;
    let ld = l.adjoint();
    let ldl = &ld * l;
    *out += (&lr * &ld - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0)) * C64::new(rate, 0.0);
}

/// A gate stage followed by a cooling stage, in the interaction frame of the ideal gate.
struct StagedGate {
    modes: usize,
    d: usize,
    gate_liou: Liouvillian,
    /// (L0, L1, rate) with L(t) = L0 + e^{i pi t / T} L1
    rotating: Vec<(CMat, CMat, f64)>,
    t: f64,
    frame_change: CMat,
    cool: Option<(Liouvillian, f64)>,
}

impl StagedGate {
    fn dim(&self) -> usize {
        (2 * self.d).pow(self.modes as u32)
    }

    fn run(&self, rho0: &CMat) -> Result<CMat, DynError> {
        let opts = EvolveOptions::tol(1e-9);
        let t = self.t;
        let gen = FnGenerator {
            dim: self.dim(),
            f: |time: f64, rho: &CMat| {
                use crate::dynamics::Generator;
                let mut out = self.gate_liou.apply(time, rho);
                let ph = C64::from_polar(1.0, PI * time / t);
                for (l0, l1, rate) in &self.rotating {
                    let l = l0 + l1 * ph;
                    dissipate(&l, rho, *rate, &mut out);
                }
                out
            },
        };
        let mut rho = evolve(&gen, rho0, t, &opts)?;
        rho = &self.frame_change * rho * self.frame_change.adjoint();
        if let Some((l, tc)) = &self.cool {
            rho = evolve(l, &rho, *tc, &opts)?;
        }
        Ok(rho)
    }

    fn read(&self, rho: &CMat) -> CMat {
        read_logical_multi(rho, self.d, self.modes)
    }
}

/// Gauge-traced logical density of `modes` subsystem modes; logical index bits are (+,-) per mode.
pub fn read_logical_multi(rho: &CMat, d: usize, modes: usize) -> CMat {
    let q = 1usize << modes;
    let per = 2 * d;
    let gauges = d.pow(modes as u32);
    let index = |bits: usize, g: usize| -> usize {
        let mut idx = 0;
        let mut gg = g;
        for m in 0..modes {
            let b = (bits >> (modes - 1 - m)) & 1;
            let gm = gg / d.pow((modes - 1 - m) as u32);
            gg %= d.pow((modes - 1 - m) as u32);
            idx = idx * per + b * d + gm;
        }
        idx
    };
    let mut out = CMat::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            let mut acc = ZERO;
            for g in 0..gauges {
                acc += rho[(index(i, g), index(j, g))];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Places a logical state vector on the gauge-ground code block of each mode.
fn embed_logical_state(psi: &CVec, d: usize, modes: usize) -> CVec {
    let per = 2 * d;
    let mut out = CVec::zeros(per.pow(modes as u32));
    for (bits, amp) in psi.iter().enumerate() {
        let mut idx = 0;
        for m in 0..modes {
            let b = (bits >> (modes - 1 - m)) & 1;
            idx = idx * per + b * d;
        }
        out[idx] = *amp;
    }
    out
}

fn hadamard_all(modes: usize) -> CMat {
    let h = CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, -ONE]) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mut out = CMat::identity(1, 1);
    for _ in 0..modes {
        out = kron(&out, &h);
    }
    out
}

/// Ideal logical unitary of the frame change restricted to the code block.
fn logical_restriction(u: &CMat, d: usize, modes: usize) -> CMat {
    let q = 1usize << modes;
    let cols: Vec<CVec> = (0..q)
        .map(|i| {
            let mut e = CVec::zeros(q);
            e[i] = ONE;
            embed_logical_state(&e, d, modes)
        })
        .collect();
    CMat::from_fn(q, q, |i, j| (cols[i].adjoint() * u * &cols[j])[(0, 0)])
}

/// Error-pattern probabilities: entry k is the probability of Z flips (parity-basis inputs) or
/// X/Y flips (Z-basis inputs) on the qubits set in k, averaged over all product inputs. Patterns
/// are referred to after the gate when the ideal maps basis states to basis states, before it otherwise.
fn flip_distribution(
    run: &dyn Fn(&CMat) -> Result<CMat, DynError>,
    ideal: &CMat,
    d: usize,
    modes: usize,
    z_basis: bool,
) -> Result<(Vec<f64>, f64), DynError> {
    let q = 1usize << modes;
    let basis_change = if z_basis { hadamard_all(modes) } else { CMat::identity(q, q) };
    let mut dist = vec![0.0; q];
    let mut leak = 0.0f64;
    for input in 0..q {
        let mut e = CVec::zeros(q);
        e[input] = ONE;
        let psi = &basis_change * e;
        let v = embed_logical_state(&psi, d, modes);
        let rho0 = &v * v.adjoint();
        let out = run(&rho0)?;
        let logical = read_logical_multi(&out, d, modes);
        leak = leak.max(1.0 - logical.trace().re);
        // errors are referred to after the gate when the ideal output is a basis state
        let ideal_out = basis_change.adjoint() * (ideal * &psi);
        let label = (0..q).find(|&k| ideal_out[k].norm_sqr() > 1.0 - 1e-9);
        let (frame, reference) = match label {
            Some(k) => (logical, k),
            None => (ideal.adjoint() * logical * ideal, input),
        };
        let in_basis = basis_change.adjoint() * frame * &basis_change;
        for o in 0..q {
            dist[o ^ reference] += in_basis[(o, o)].re / q as f64;
        }
    }
    Ok((dist, leak.max(0.0)))
}

fn sym(p0: &CMat, p1: &CMat, x: &CMat) -> CMat {
    p0 * x * p0 + p1 * x * p1
}

struct TwoModeOps {
    model: SubsystemModel,
    p0: CMat,
    p1: CMat,
    parity: CMat,
    id: CMat,
}

impl TwoModeOps {
    fn new(sc: &SCParams, d: usize) -> Result<Self, GateError> {
        let model = SubsystemModel::new(sc, d)?;
        let n = 2 * d;
        let id = CMat::identity(n, n);
        let p0 = (&id + &model.z) * C64::new(0.5, 0.0);
        let p1 = (&id - &model.z) * C64::new(0.5, 0.0);
        let parity = model.xl.clone();
        Ok(Self { model, p0, p1, parity, id })
    }

    fn target_number(&self, offset: TargetOffset) -> CMat {
        let sc = self.model.sc();
        let c = match offset {
            TargetOffset::MeanPhotonNumber => sc.nbar,
            TargetOffset::DisplacementSquared => sc.alpha_sq(),
        };
        &self.model.n - &self.id * C64::new(c, 0.0)
    }

    /// Fluctuation part of e^r a about alpha' Z, symmetrized into the Z blocks.
    fn fluct_a(&self) -> CMat {
        let sc = self.model.sc();
        let x = &self.model.a * C64::new(sc.r.exp(), 0.0) - &self.model.z * C64::new(sc.alpha_prime, 0.0);
        sym(&self.p0, &self.p1, &x)
    }
}

fn loss_jumps(op: &CMat, noise: &NoiseParams) -> Vec<(CMat, f64)> {
    let mut v = Vec::new();
    if noise.kappa1 * (1.0 + noise.n_th) > 0.0 {
        v.push((op.clone(), noise.kappa1 * (1.0 + noise.n_th)));
    }
    if noise.kappa1 * noise.n_th > 0.0 {
        v.push((op.adjoint(), noise.kappa1 * noise.n_th));
    }
    v
}

fn dephasing_jump(n: &CMat, noise: &NoiseParams) -> Vec<(CMat, f64)> {
    if noise.kappa_phi > 0.0 {
        vec![(n.clone(), noise.kappa_phi)]
    } else {
        Vec::new()
    }
}

fn build_cx(spec: &GateSpec, noise: &NoiseParams) -> Result<StagedGate, GateError> {
    check_time(spec.t)?;
    let sc = &spec.sc;
    let ops = TwoModeOps::new(sc, spec.d)?;
    let m = &ops.model;
    let al = sc.alpha_prime;
    let k = sym(&ops.p0, &ops.p1, &(&m.x - &m.z * C64::new(2.0 * al, 0.0)));
    let nt = ops.target_number(spec.target_offset);
    let h = kron(&k, &nt) * C64::new(PI / (4.0 * al * spec.t), 0.0);
    let mut jumps = vec![(embed_op(&m.f, 0, 2), noise.kappa2)];
    for (op, rate) in loss_jumps(&sym(&ops.p0, &ops.p1, &m.a), noise) {
        jumps.push((embed_op(&op, 0, 2), rate));
    }
    for (op, rate) in dephasing_jump(&m.n, noise) {
        jumps.push((embed_op(&op, 0, 2), rate));
        jumps.push((embed_op(&op, 1, 2), rate));
    }
    let mut rotating = Vec::new();
    for (op, rate) in loss_jumps(&m.a, noise) {
        rotating.push((kron(&ops.p0, &op), kron(&ops.p1, &op), rate));
    }
    let frame_change = kron(&ops.p0, &ops.id) + kron(&ops.p1, &ops.parity);
    let tc = spec.t_cool.unwrap_or_else(|| default_cooling_time(sc, noise.kappa2));
    let mut cool = vec![(embed_op(&m.f, 0, 2), noise.kappa2), (embed_op(&m.f_preserve, 1, 2), noise.kappa2)];
    for (op, rate) in loss_jumps(&m.a, noise).into_iter().chain(dephasing_jump(&m.n, noise)) {
        cool.push((embed_op(&op, 0, 2), rate));
        cool.push((embed_op(&op, 1, 2), rate));
    }
    Ok(StagedGate {
        modes: 2,
        d: spec.d,
        gate_liou: Liouvillian::new(Some(h), jumps),
        rotating,
        t: spec.t,
        frame_change,
        cool: (tc > 0.0).then(|| (Liouvillian::new(None, cool), tc)),
    })
}

fn staged_budget(g: &StagedGate, with_xy: bool, duration: f64) -> Result<GateBudget, GateError> {
    let ideal = logical_restriction(&g.frame_change, g.d, g.modes);
    let run = |rho: &CMat| g.run(rho);
    let (dz, leak) = flip_distribution(&run, &ideal, g.d, g.modes, false)?;
    let p_xy = if with_xy {
        let (dx, _) = flip_distribution(&run, &ideal, g.d, g.modes, true)?;
        1.0 - dx[0]
    } else {
        0.0
    };
    let q = dz.len();
    // bit order: first mode is the most significant bit
    let (p_zc, p_zt, p_zczt) = if q == 4 {
        (dz[2], dz[1], dz[3])
    } else {
        // Toffoli: controls grouped into p_zc, target alone into p_zt, anything correlated with the target into p_zczt
        let mut a = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for (k, p) in dz.iter().enumerate().skip(1) {
            let target = k & 1 == 1;
            let control = k >> 1 != 0;
            match (control, target) {
                (true, false) => a += p,
                (false, true) => b += p,
                _ => c += p,
            }
        }
        (a, b, c)
    };
    Ok(GateBudget { p_zc, p_zt, p_zczt, p_xy, leakage: leak, duration, angle: None })
}

/// CX with the control stabilized throughout, target unstabilized during the gate and cooled
/// afterwards by the parity-preserving dissipator.
pub fn simulate_cx(spec: &GateSpec, noise: &NoiseParams) -> Result<GateBudget, GateError> {
    let g = build_cx(spec, noise)?;
    let tc = g.cool.as_ref().map(|c| c.1).unwrap_or(0.0);
    staged_budget(&g, false, spec.t + tc)
}

/// CX budget including the non-Z part from Z-basis inputs.
pub fn simulate_cx_full(spec: &GateSpec, noise: &NoiseParams) -> Result<GateBudget, GateError> {
    let g = build_cx(spec, noise)?;
    let tc = g.cool.as_ref().map(|c| c.1).unwrap_or(0.0);
    staged_budget(&g, true, spec.t + tc)
}

/// Worst-case fidelity over product inputs in both bases, of the implemented gate against the ideal.
fn staged_min_fidelity(g: &StagedGate) -> Result<f64, GateError> {
    let ideal = logical_restriction(&g.frame_change, g.d, g.modes);
    let q = 1usize << g.modes;
    let mut worst = 1.0f64;
    for z_basis in [false, true] {
        let change = if z_basis { hadamard_all(g.modes) } else { CMat::identity(q, q) };
        for input in 0..q {
            let mut e = CVec::zeros(q);
            e[input] = ONE;
            let psi = &change * e;
            let v = embed_logical_state(&psi, g.d, g.modes);
            let out = g.read(&g.run(&(&v * v.adjoint()))?);
            let target = &ideal * &psi;
            worst = worst.min((target.adjoint() * out * &target)[(0, 0)].re);
        }
    }
    Ok(worst)
}

pub fn cx_min_fidelity(spec: &GateSpec, noise: &NoiseParams) -> Result<f64, GateError> {
    staged_min_fidelity(&build_cx(spec, noise)?)
}

fn build_toffoli(spec: &GateSpec, noise: &NoiseParams) -> Result<StagedGate, GateError> {
    check_time(spec.t)?;
    let sc = &spec.sc;
    let ops = TwoModeOps::new(sc, spec.d)?;
    let m = &ops.model;
    let al = sc.alpha_prime;
    let a = ops.fluct_a();
    let a1 = kron(&a, &ops.id);
    let a2d = kron(&ops.id, &a.adjoint());
    let p1_1 = kron(&ops.p1, &ops.id);
    let p1_2 = kron(&ops.id, &ops.p1);
    let inner = (&a1 * &p1_2 + &p1_1 * &a2d) * C64::new(-2.0 * al, 0.0) + &a1 * &a2d;
    let g = (&inner + inner.adjoint()) * C64::new(-1.0 / (8.0 * al * al), 0.0);
    let nt = ops.target_number(spec.target_offset);
    let h = kron(&g, &nt) * C64::new(PI / spec.t, 0.0);
    let id2 = kron(&ops.id, &ops.id);
    let q1 = kron(&ops.p1, &ops.p1);
    let q0 = &id2 - &q1;
    let mut jumps = Vec::new();
    for mode in 0..2 {
        jumps.push((embed_op(&m.f, mode, 3), noise.kappa2));
        for (op, rate) in loss_jumps(&sym(&ops.p0, &ops.p1, &m.a), noise) {
            jumps.push((embed_op(&op, mode, 3), rate));
        }
    }
    for mode in 0..3 {
        for (op, rate) in dephasing_jump(&m.n, noise) {
            jumps.push((embed_op(&op, mode, 3), rate));
        }
    }
    let mut rotating = Vec::new();
    for (op, rate) in loss_jumps(&m.a, noise) {
        rotating.push((kron(&q0, &op), kron(&q1, &op), rate));
    }
    let frame_change = kron(&q0, &ops.id) + kron(&q1, &ops.parity);
    let tc = spec.t_cool.unwrap_or_else(|| default_cooling_time(sc, noise.kappa2));
    let mut cool = vec![(embed_op(&m.f, 0, 3), noise.kappa2), (embed_op(&m.f, 1, 3), noise.kappa2), (embed_op(&m.f_preserve, 2, 3), noise.kappa2)];
    for mode in 0..3 {
        for (op, rate) in loss_jumps(&m.a, noise).into_iter().chain(dephasing_jump(&m.n, noise)) {
            cool.push((embed_op(&op, mode, 3), rate));
        }
    }
    Ok(StagedGate {
        modes: 3,
        d: spec.d,
        gate_liou: Liouvillian::new(Some(h), jumps),
        rotating,
        t: spec.t,
        frame_change,
        cool: (tc > 0.0).then(|| (Liouvillian::new(None, cool), tc)),
    })
}

/// Toffoli with two stabilized controls and a cooled target; runs with the gauge dimension of the spec.
pub fn simulate_toffoli(spec: &GateSpec, noise: &NoiseParams) -> Result<GateBudget, GateError> {
    let g = build_toffoli(spec, noise)?;
    let tc = g.cool.as_ref().map(|c| c.1).unwrap_or(0.0);
    staged_budget(&g, false, spec.t + tc)
}

pub fn toffoli_min_fidelity(spec: &GateSpec, noise: &NoiseParams) -> Result<f64, GateError> {
    staged_min_fidelity(&build_toffoli(spec, noise)?)
}

/// Convergence check: |p_Z(d) - p_Z(d+1)| relative to p_Z(d+1).
pub fn toffoli_convergence(spec: &GateSpec, noise: &NoiseParams) -> Result<f64, GateError> {
    let a = simulate_toffoli(spec, noise)?.total_z();
    let b = simulate_toffoli(&spec.clone().with_d(spec.d + 1), noise)?.total_z();
    Ok((a - b).abs() / b.abs().max(1e-300))
}

fn zz_generator(spec: &GateSpec, noise: &NoiseParams, model: &SubsystemModel) -> Liouvillian {
    let sc = &spec.sc;
    let a1 = embed_op(&model.a, 0, 2);
    let a2 = embed_op(&model.a, 1, 2);
    let hop = &a1 * a2.adjoint();
    let scale = spec.theta / (4.0 * sc.alpha_sq() * spec.t) * (2.0 * sc.r).exp();
    let h = (&hop + hop.adjoint()) * C64::new(scale, 0.0);
    let mut jumps = Vec::new();
    for mode in 0..2 {
        jumps.push((embed_op(&model.f, mode, 2), noise.kappa2));
        for (op, rate) in loss_jumps(&model.a, noise).into_iter().chain(dephasing_jump(&model.n, noise)) {
            jumps.push((embed_op(&op, mode, 2), rate));
        }
    }
    Liouvillian::new(Some(h), jumps)
}

/// ZZ(theta) = exp(-i theta/2 Z Z) on two stabilized modes coupled by a beam splitter.
pub fn simulate_zz(spec: &GateSpec, noise: &NoiseParams) -> Result<GateBudget, GateError> {
    check_time(spec.t)?;
    let model = SubsystemModel::new(&spec.sc, spec.d)?;
    let l = zz_generator(spec, noise, &model);
    let rec = Liouvillian::new(None, vec![(embed_op(&model.f, 0, 2), noise.kappa2), (embed_op(&model.f, 1, 2), noise.kappa2)]);
    let tr = recovery_time(&spec.sc, noise.kappa2);
    let stepper = Stepper::new(&l, spec.t);
    let rec_stepper = Stepper::new(&rec, tr);
    let run = |rho: &CMat| -> Result<CMat, DynError> { rec_stepper.apply(&stepper.apply(rho)?) };
    let ideal = ideal_zz(spec.theta);
    let (dz, leak) = flip_distribution(&run, &ideal, spec.d, 2, false)?;
    let (dx, _) = flip_distribution(&run, &ideal, spec.d, 2, true)?;
    Ok(GateBudget { p_zc: dz[2], p_zt: dz[1], p_zczt: dz[3], p_xy: 1.0 - dx[0], leakage: leak, duration: spec.t, angle: None })
}

/// exp(-i theta/2 Z Z) with Z the swap on each code qubit.
pub fn ideal_zz(theta: f64) -> CMat {
    let z = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let zz = kron(&z, &z);
    hermitian_exp(&zz, -theta / 2.0)
}

/// Worst-case input fidelity of ZZ(theta) against the ideal.
pub fn zz_min_fidelity(spec: &GateSpec, noise: &NoiseParams) -> Result<f64, GateError> {
    let model = SubsystemModel::new(&spec.sc, spec.d)?;
    let l = zz_generator(spec, noise, &model);
    let ideal = ideal_zz(spec.theta);
    let stepper = Stepper::new(&l, spec.t);
    let mut worst = 1.0f64;
    for z_basis in [false, true] {
        let change = if z_basis { hadamard_all(2) } else { CMat::identity(4, 4) };
        for input in 0..4 {
            let mut e = CVec::zeros(4);
            e[input] = ONE;
            let psi = &change * e;
            let v = embed_logical_state(&psi, spec.d, 2);
            let out = read_logical_multi(&stepper.apply(&(&v * v.adjoint()))?, spec.d, 2);
            let target = &ideal * &psi;
            worst = worst.min((target.adjoint() * out * &target)[(0, 0)].re);
        }
    }
    Ok(worst)
}

/// X gate: in the frame rotating with (pi/T) n the dissipator is static and the loss and dephasing
/// jumps are phase-invariant, so the gate is the idle evolution followed by the parity operator.
pub fn simulate_x_gate(spec: &GateSpec, noise: &NoiseParams) -> Result<(QubitChannel, GateBudget), GateError> {
    check_time(spec.t)?;
    let model = SubsystemModel::new(&spec.sc, spec.d)?;
    let l = Liouvillian::from_set(&model.generator(noise, Stabilizer::Flip));
    let rec = Liouvillian::new(None, vec![(model.f.clone(), noise.kappa2)]).propagator(recovery_time(&spec.sc, noise.kappa2));
    let prop = rec * l.propagator(spec.t);
    let ch = single_mode_channel(&prop, spec.d);
    let x = logical_paulis()[1];
    let gate = ch.then_unitary(&x);
    // error relative to the ideal X
    let err = gate.then_unitary(&x);
    let r = err.ptm();
    let p = pauli_probabilities(r[(1, 1)], r[(2, 2)], r[(3, 3)]);
    let budget = GateBudget { p_zc: p[3], p_xy: p[1] + p[2], leakage: (1.0 - ch.retained_trace()).max(0.0), duration: spec.t, ..Default::default() };
    Ok((gate, budget))
}

/// Distance between two qubit channels as the max-abs PTM difference.
pub fn ptm_distance(a: &QubitChannel, b: &QubitChannel) -> f64 {
    (a.ptm() - b.ptm()).abs().max()
}

pub fn ideal_x_channel() -> QubitChannel {
    QubitChannel::identity().then_unitary(&logical_paulis()[1])
}

/// Even-parity state preparation from vacuum under the parity-preserving dissipator, full Fock space
/// in the squeezed frame. Returns the final state (frame) and its fidelity with |C+>.
pub fn prepare_plus(sc: &SCParams, noise: &NoiseParams, t: f64) -> Result<(CMat, f64), GateError> {
    if t < 0.0 {
        return Err(GateError::Spec("preparation time must be non-negative".into()));
    }
    let dim = recommended_cutoff(sc);
    // lab vacuum seen from the squeezed frame
    let s_inv = squeezing(-sc.r, dim).map_err(CodeError::from)?.mat;
    let mut v = CVec::zeros(dim);
    v[0] = ONE;
    let psi = s_inv * v;
    let rho0 = &psi * psi.adjoint();
    let af = crate::code::frame_annihilation(sc.r, dim).map_err(CodeError::from)?;
    let mut jumps = vec![(frame_two_photon(sc, dim), noise.kappa2)];
    jumps.extend(loss_jumps(&af, noise));
    jumps.extend(dephasing_jump(&(af.adjoint() * &af), noise));
    let l = Liouvillian::new(None, jumps);
    let rho = evolve(&l, &rho0, t, &EvolveOptions::tol(1e-8))?;
    let (cp, _) = frame_codewords(sc, dim);
    let f = (cp.amps.adjoint() * &rho * &cp.amps)[(0, 0)].re;
    Ok((rho, f))
}

/// Parity of a frame density matrix.
pub fn parity_expectation(rho: &CMat) -> f64 {
    let n = rho.nrows();
    (0..n).map(|k| if k % 2 == 0 { rho[(k, k)].re } else { -rho[(k, k)].re }).sum()
}

/// Preparation phase-flip probability (10 nbar / alpha'^2) kappa1/kappa2.
pub fn prep_error_model(sc: &SCParams, noise: &NoiseParams) -> f64 {
    10.0 * sc.nbar / sc.alpha_sq() * noise.kappa1 / noise.kappa2
}

/// Default preparation time 10 / (kappa2 alpha'^2).
pub fn default_prep_time(sc: &SCParams, kappa2: f64) -> f64 {
    10.0 / (kappa2 * sc.alpha_sq())
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct MeasurementModel {
    /// one readout, no correction in between
    pub single: f64,
    /// repeated readout with autonomous correction between rounds
    pub repeated: f64,
    /// majority vote over independent single readouts
    pub majority: f64,
    pub repetitions: usize,
}

impl MeasurementModel {
    /// Error probability used downstream.
    pub fn error(&self) -> f64 {
        if self.repetitions == 1 {
            self.single
        } else {
            self.repeated
        }
    }
}

/// Probability that a majority of n independent outcomes is wrong.
pub fn majority_vote(p: f64, n: usize) -> f64 {
    assert!(n % 2 == 1, "majority vote needs an odd count");
    let mut total = 0.0;
    for k in (n / 2 + 1)..=n {
        total += binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    total
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Analytic X-basis readout error: single shot nbar kappa1 T / 2, repeated (reps/2) eta kappa1 nbar T.
pub fn measure_x_model(sc: &SCParams, noise: &NoiseParams, t_parity: f64, repetitions: usize) -> MeasurementModel {
    let reps = repetitions.max(1);
    let single = 0.5 * sc.nbar * noise.kappa1 * t_parity;
    let repeated = if reps == 1 { single } else { reps as f64 / 2.0 * sc.eta * noise.kappa1 * sc.nbar * t_parity };
    let majority = if reps % 2 == 1 { majority_vote(single, reps) } else { single };
    MeasurementModel { single, repeated, majority, repetitions: reps }
}

/// Dispatches a gate spec to its simulation and returns the budget.
pub fn simulate(spec: &GateSpec, noise: &NoiseParams) -> Result<GateBudget, GateError> {
    match spec.kind {
        GateKind::Zrot => simulate_z_rotation(spec, noise, Stabilizer::Flip),
        GateKind::ZZrot => simulate_zz(spec, noise),
        GateKind::CX => simulate_cx_full(spec, noise),
        GateKind::Toffoli => simulate_toffoli(spec, noise),
        GateKind::X => simulate_x_gate(spec, noise).map(|x| x.1),
        GateKind::PrepPlus => {
            let (rho, f) = prepare_plus(&spec.sc, noise, spec.t)?;
            let leak = 1.0 - parity_expectation(&rho).max(-1.0);
            Ok(GateBudget { p_zc: prep_error_model(&spec.sc, noise), leakage: (1.0 - f).min(leak), duration: spec.t, ..Default::default() })
        }
        GateKind::MeasX => {
            let m = measure_x_model(&spec.sc, noise, spec.t, 3);
            Ok(GateBudget { p_zc: m.error(), duration: spec.t, ..Default::default() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{read_logical, Readout};

    fn op() -> SCParams {
        SCParams::from_eta(4.0, 0.25).unwrap()
    }

    #[test]
    fn zero_angle_z_rotation_is_idle_loss() {
        let t = 1.0;
        let spec = GateSpec::new(GateKind::Zrot, op(), t).with_theta(0.0).with_d(6);
        let b = simulate_z_rotation(&spec, &NoiseParams::new(1e-3, 1.0, 0.0, 0.0), Stabilizer::Flip).unwrap();
        let idle = 1e-3 * 0.25 * 4.0 * t;
        assert!((b.p_zc / idle - 1.0).abs() < 0.1, "{} {idle}", b.p_zc);
        assert!(b.angle.unwrap().abs() < 1e-6);
    }

    #[test]
    fn z_rotation_angle_at_long_time() {
        let spec = GateSpec::new(GateKind::Zrot, op(), 2.0).with_theta(PI / 2.0).with_d(6);
        let ang = z_rotation_angle(&spec, &NoiseParams::noiseless()).unwrap();
        assert!((ang.abs() - PI / 2.0).abs() < 1e-3, "{ang}");
    }

    #[test]
    fn flip_stabilizer_suppresses_nonadiabatic_error() {
        let sc = op();
        let spec = GateSpec::new(GateKind::Zrot, sc, 0.3).with_d(6);
        let noise = NoiseParams::noiseless();
        let flip = simulate_z_rotation(&spec, &noise, Stabilizer::Flip).unwrap().p_zc;
        let keep = simulate_z_rotation(&spec, &noise, Stabilizer::Preserve).unwrap().p_zc;
        assert!(keep / flip >= sc.alpha_sq() / 2.0, "{keep} {flip}");
    }

    #[test]
    fn x_gate_is_exact_when_noiseless() {
        let spec = GateSpec::new(GateKind::X, op(), 0.1);
        let (ch, b) = simulate_x_gate(&spec, &NoiseParams::noiseless()).unwrap();
        assert!(ptm_distance(&ch, &ideal_x_channel()) < 1e-6);
        assert!(b.p_zc < 1e-6);
        let plus = ch.out[0][0];
        assert!((plus[(0, 0)].re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn x_gate_loss_budget() {
        let t = 1.0;
        let spec = GateSpec::new(GateKind::X, op(), t).with_d(6);
        let (_, b) = simulate_x_gate(&spec, &NoiseParams::new(1e-3, 1.0, 0.0, 0.0)).unwrap();
        assert!((b.p_zc / 1e-3 - 1.0).abs() < 0.1, "{}", b.p_zc);
    }

    #[test]
    fn measurement_model_values() {
        let sc = op();
        let m = measure_x_model(&sc, &NoiseParams::new(1e-3, 1.0, 0.0, 0.0), 1.0, 3);
        assert!((m.single - 2e-3).abs() < 1e-15);
        assert!((m.repeated - 1.5e-3).abs() < 1e-15);
        assert_eq!(measure_x_model(&sc, &NoiseParams::new(1e-3, 1.0, 0.0, 0.0), 1.0, 1).error(), m.single);
        assert_eq!(measure_x_model(&sc, &NoiseParams::noiseless(), 1.0, 3).error(), 0.0);
        assert!((majority_vote(0.1, 3) - 0.028).abs() < 1e-12);
    }

    #[test]
    fn prep_error_example() {
        let mut sc = op();
        sc.alpha_prime = 12f64.sqrt();
        let p = prep_error_model(&sc, &NoiseParams::new(1e-3, 1.0, 0.0, 0.0));
        assert!((p - 3.333e-3).abs() < 1e-5);
    }

    #[test]
    fn zz_zero_drive_is_identity() {
        let spec = GateSpec::new(GateKind::ZZrot, op(), 1.0).with_theta(0.0).with_d(3);
        let f = zz_min_fidelity(&spec, &NoiseParams::noiseless()).unwrap();
        assert!(f > 1.0 - 1e-9, "{f}");
    }

    #[test]
    fn read_logical_multi_matches_single() {
        let d = 3;
        let n = 2 * d;
        let rho = CMat::from_fn(n, n, |i, j| C64::new((i * n + j) as f64, 0.0));
        let two = read_logical_multi(&rho, d, 1);
        let one = read_logical(&rho, d, Readout::GaugeTrace);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(two[(i, j)], one[(i, j)]);
            }
        }
    }
}
