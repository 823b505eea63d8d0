//! Physical realizations of the engineered dissipator: a three-mode circuit scheme
//! (gauge mode, dispersive mode b, lossy mode c) and a trapped-ion qutrit scheme.

use crate::code::{build_subsystem_basis, frame_annihilation, frame_codewords, CodeError, SCParams};
use crate::dissipation::{frame_logical_z, frame_two_photon};
use crate::dynamics::{evolve_between, linear_fit, DynError, EvolveOptions, Generator, Liouvillian};
use crate::fock::{annihilation, kron, max_abs, parity, CMat, FockError, C64, I, ONE, ZERO};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HardwareError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cutoff too small: top level of mode {mode} holds {occupation:.2e}")]
    Cutoff { mode: &'static str, occupation: f64 },
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Fock(#[from] FockError),
}

const TOP_LEVEL_GUARD: f64 = 1e-4;

/// Rates of the three-mode scheme. Tunnel couplings are derived on demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeModeParams {
    pub gamma_a: f64,
    pub gamma_b: f64,
    pub kappa_c: f64,
    pub lambda: f64,
}

impl ThreeModeParams {
    pub fn new(gamma_a: f64, gamma_b: f64, kappa_c: f64, lambda: f64) -> Result<Self, HardwareError> {
        for (name, v) in [("gamma_a", gamma_a), ("gamma_b", gamma_b), ("kappa_c", kappa_c), ("lambda", lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HardwareError::InvalidParameter(format!("{name}={v}")));
            }
        }
        Ok(Self { gamma_a, gamma_b, kappa_c, lambda })
    }

    /// kappa_c = lambda = gamma_b.
    pub fn matched(gamma_a: f64, gamma_b: f64) -> Result<Self, HardwareError> {
        Self::new(gamma_a, gamma_b, gamma_b, gamma_b)
    }

    pub fn j_ab(&self) -> f64 {
        (self.gamma_a * self.gamma_b).sqrt() / 2.0
    }

    pub fn j_ac(&self) -> f64 {
        (self.gamma_a * self.kappa_c).sqrt() / 2.0
    }

    pub fn j_bc(&self) -> f64 {
        (self.gamma_b * self.kappa_c).sqrt() / 2.0
    }

    /// Largest of sqrt(Ga Gb)/kc, Ga/Gb, Ga/kc; adiabatic elimination needs this small.
    pub fn elimination_parameter(&self) -> f64 {
        let a = (self.gamma_a * self.gamma_b).sqrt() / self.kappa_c;
        a.max(self.gamma_a / self.gamma_b).max(self.gamma_a / self.kappa_c)
    }
}

/// Closed-form long-time ratio <Sigma_-(inf)>/<Sigma_-(0)> after one gauge excitation
/// has been absorbed by the b, c reservoir.
pub fn qubit_boson_coherence(p: &ThreeModeParams) -> C64 {
    let (ga, gb, kc, l) = (p.gamma_a, p.gamma_b, p.kappa_c, p.lambda);
    let gm = C64::new(gb, -l);
    let gp = C64::new(gb, l);
    let kp = C64::new(kc, l);
    let phase = (gm / gp).powi(2);
    let num = ONE + ga * kc * gp / (kp * gm * gm);
    let den = ONE + ga * C64::new(kc * kc, gb * l) / (kc * kp * gp);
    phase * num / den
}

/// Truncations of gauge, b and c.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeCutoffs {
    pub gauge: usize,
    pub b: usize,
    pub c: usize,
}

impl Default for ModeCutoffs {
    fn default() -> Self {
        Self { gauge: 4, b: 4, c: 4 }
    }
}

impl ModeCutoffs {
    fn size(&self) -> usize {
        self.gauge * self.b * self.c
    }
}

/// Ladder operators on gauge (x) b (x) c.
struct ModeOps {
    g: CMat,
    b: CMat,
    c: CMat,
}

fn mode_ops(cut: ModeCutoffs) -> Result<ModeOps, HardwareError> {
    let ig = CMat::identity(cut.gauge, cut.gauge);
    let ib = CMat::identity(cut.b, cut.b);
    let ic = CMat::identity(cut.c, cut.c);
    let g = kron(&kron(&annihilation(cut.gauge)?.mat, &ib), &ic);
    let b = kron(&kron(&ig, &annihilation(cut.b)?.mat), &ic);
    let c = kron(&kron(&ig, &ib), &annihilation(cut.c)?.mat);
    Ok(ModeOps { g, b, c })
}

/// Mode-space Hamiltonian with the logical Z replaced by its eigenvalue `z`.
fn branch_hamiltonian(p: &ThreeModeParams, ops: &ModeOps, z: f64) -> CMat {
    let bd = ops.b.adjoint();
    let cd = ops.c.adjoint();
    let v = ops.g.adjoint() * &ops.b * C64::new(p.j_ab(), 0.0) + (&ops.g * C64::new(p.j_ac(), 0.0) - &ops.b * (I * p.j_bc())) * &cd;
    &bd * &ops.b * C64::new(0.5 * p.lambda * z, 0.0) + &v + v.adjoint()
}

fn top_level_projector(n: usize) -> CMat {
    let mut m = CMat::zeros(n, n);
    m[(n - 1, n - 1)] = ONE;
    m
}

/// Sampled evolution of the qubit coherence and gauge population.
#[derive(Clone, Debug, Serialize)]
pub struct CoherenceTrajectory {
    pub times: Vec<f64>,
    /// <Sigma_-(t)>/<Sigma_-(0)>
    pub ratio: Vec<C64>,
    pub gauge_population: Vec<f64>,
    /// worst occupation of the top b or c level along the trajectory
    pub top_occupation: f64,
}

impl CoherenceTrajectory {
    pub fn final_ratio(&self) -> C64 {
        *self.ratio.last().expect("non-empty trajectory")
    }

    /// Exponential decay rate of the gauge population over the sampled window.
    pub fn gauge_decay_rate(&self) -> f64 {
        let (ts, ls): (Vec<f64>, Vec<f64>) =
            self.times.iter().zip(&self.gauge_population).skip(1).filter(|(_, p)| **p > 1e-9).map(|(t, p)| (*t, p.ln())).unzip();
        -linear_fit(&ts, &ls).0
    }
}

/// Qubit (x) gauge (x) b (x) c master equation with a genuine two-level logical qubit.
/// Starts from `qubit` (x) |1, 0, 0>.
pub fn simulate_three_mode(p: &ThreeModeParams, qubit: [C64; 2], times: &[f64], cut: ModeCutoffs) -> Result<CoherenceTrajectory, HardwareError> {
    if cut.gauge < 2 || cut.b < 2 || cut.c < 2 {
        return Err(HardwareError::InvalidParameter("mode cutoffs must be at least 2".into()));
    }
    if qubit[0].norm() < 1e-12 || qubit[1].norm() < 1e-12 {
        return Err(HardwareError::InvalidParameter("qubit state needs weight on both Z eigenstates".into()));
    }
    let ops = mode_ops(cut)?;
    let m = cut.size();
    let up = CMat::from_fn(2, 2, |i, j| if i == 0 && j == 0 { ONE } else { ZERO });
    let dn = CMat::from_fn(2, 2, |i, j| if i == 1 && j == 1 { ONE } else { ZERO });
    let h = kron(&up, &branch_hamiltonian(p, &ops, 1.0)) + kron(&dn, &branch_hamiltonian(p, &ops, -1.0));
    let i2 = CMat::identity(2, 2);
    let c_full = kron(&i2, &ops.c);
    let l = Liouvillian::new(Some(h), vec![(c_full, p.kappa_c)]);

    let norm = (qubit[0].norm_sqr() + qubit[1].norm_sqr()).sqrt();
    let mut psi = DVector::from_element(2 * m, ZERO);
    // |1>_gauge |0>_b |0>_c sits at index c*b
    let excited = cut.b * cut.c;
    psi[excited] = qubit[0] / norm;
    psi[m + excited] = qubit[1] / norm;
    let rho0 = &psi * psi.adjoint();

    let n_g = kron(&i2, &(ops.g.adjoint() * &ops.g));
    let ig = CMat::identity(cut.gauge, cut.gauge);
    let top_b = kron(&i2, &kron(&kron(&ig, &top_level_projector(cut.b)), &CMat::identity(cut.c, cut.c)));
    let top_c = kron(&i2, &kron(&kron(&ig, &CMat::identity(cut.b, cut.b)), &top_level_projector(cut.c)));
    let coherence = |rho: &CMat| (0..m).map(|k| rho[(k, m + k)]).sum::<C64>();
    let c0 = coherence(&rho0);

    let opts = EvolveOptions::tol(1e-9);
    let mut rho = rho0;
    let mut t_prev = 0.0;
    let mut out = CoherenceTrajectory { times: Vec::new(), ratio: Vec::new(), gauge_population: Vec::new(), top_occupation: 0.0 };
    for &t in times {
        rho = evolve_between(&l, &rho, t_prev, t, &opts)?;
        t_prev = t;
        out.times.push(t);
        out.ratio.push(coherence(&rho) / c0);
        out.gauge_population.push((&n_g * &rho).trace().re);
        let tb = (&top_b * &rho).trace().re;
        let tc = (&top_c * &rho).trace().re;
        out.top_occupation = out.top_occupation.max(tb).max(tc);
    }
    if out.top_occupation > TOP_LEVEL_GUARD {
        return Err(HardwareError::Cutoff { mode: "b/c", occupation: out.top_occupation });
    }
    Ok(out)
}

/// Long-time coherence ratio from simulation: integrates until the excitation has left.
pub fn simulated_coherence_limit(p: &ThreeModeParams, qubit: [C64; 2], cut: ModeCutoffs) -> Result<C64, HardwareError> {
    let slow = p.gamma_a.min(p.gamma_b).min(p.kappa_c);
    let t_end = 40.0 / slow;
    let times: Vec<f64> = (1..=8).map(|k| t_end * k as f64 / 8.0).collect();
    let traj = simulate_three_mode(p, qubit, &times, cut)?;
    Ok(traj.final_ratio())
}

/// Simulated versus ideal-dissipator phase-flip suppression factor.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EtaDiscrepancy {
    pub ratio: f64,
    pub eta_sim: f64,
    pub eta_pred: f64,
}

impl EtaDiscrepancy {
    /// eta_pred + (1 - eta_pred) Ga/(2 Gb).
    pub fn first_order(&self) -> f64 {
        self.eta_pred + (1.0 - self.eta_pred) * self.ratio / 2.0
    }
}

/// Truncations used for the rate extraction, where the gauge mode carries the storage loss.
pub const ETA_CUTOFFS: ModeCutoffs = ModeCutoffs { gauge: 4, b: 3, c: 3 };

/// Phase-flip suppression of the three-mode scheme with weak storage loss
/// a = Z_L (x) (sqrt(eta nbar) + cosh r g - sinh r g^dag).
///
/// Z_L is conserved, so the coherence block <up|rho|down> evolves on its own; its slowest
/// eigenvalue is -2 gamma_Z.
pub fn eta_discrepancy(p: &ThreeModeParams, sc: &SCParams) -> Result<EtaDiscrepancy, HardwareError> {
    eta_discrepancy_with(p, sc, ETA_CUTOFFS)
}

pub fn eta_discrepancy_with(p: &ThreeModeParams, sc: &SCParams, cut: ModeCutoffs) -> Result<EtaDiscrepancy, HardwareError> {
    let ops = mode_ops(cut)?;
    let m = cut.size();
    let id = CMat::identity(m, m);
    let kappa1 = 1e-5 * p.gamma_a.min(p.gamma_b).min(p.kappa_c);
    let s = (sc.nbar * (1.0 - sc.eta)).sqrt();
    let ch = (1.0 + s * s).sqrt();
    let em = (sc.eta * sc.nbar).sqrt();
    let gauge_loss = &id * C64::new(em, 0.0) + &ops.g * C64::new(ch, 0.0) - ops.g.adjoint() * C64::new(s, 0.0);

    let h_up = branch_hamiltonian(p, &ops, 1.0);
    let h_dn = branch_hamiltonian(p, &ops, -1.0);
    let cdc = ops.c.adjoint() * &ops.c;
    let ada = gauge_loss.adjoint() * &gauge_loss;
    // d sigma/dt = K_up sigma + sigma K_dn^dag + kc c sigma c^dag - k1 A sigma A^dag
    let k_up = &h_up * (-I) - &cdc * C64::new(0.5 * p.kappa_c, 0.0) - &ada * C64::new(0.5 * kappa1, 0.0);
    let k_dn = &h_dn * (-I) - &cdc * C64::new(0.5 * p.kappa_c, 0.0) - &ada * C64::new(0.5 * kappa1, 0.0);
    let mut sup = id.kronecker(&k_up) + k_dn.conjugate().kronecker(&id);
    sup += ops.c.conjugate().kronecker(&ops.c) * C64::new(p.kappa_c, 0.0);
    sup -= gauge_loss.conjugate().kronecker(&gauge_loss) * C64::new(kappa1, 0.0);

    let lu = sup.lu();
    let mut x = DVector::from_element(m * m, ZERO);
    x[0] = ONE;
    let mut lambda = ZERO;
    for _ in 0..6 {
        let y = lu.solve(&x).ok_or(DynError::Singular)?;
        let k = (0..y.len()).max_by(|&i, &j| y[i].norm().total_cmp(&y[j].norm())).expect("non-empty");
        lambda = x[k] / y[k];
        x = &y / y[k];
    }
    let gamma_z = -lambda.re / 2.0;
    Ok(EtaDiscrepancy { ratio: p.gamma_a / p.gamma_b, eta_sim: gamma_z / (kappa1 * sc.nbar), eta_pred: sc.eta })
}

/// eta_discrepancy at matched kappa_c = lambda = gamma_b over a list of Ga/Gb ratios.
pub fn eta_sweep(ratios: &[f64], gamma_b: f64, sc: &SCParams) -> Result<Vec<EtaDiscrepancy>, HardwareError> {
    ratios.par_iter().map(|&x| ThreeModeParams::matched(x * gamma_b, gamma_b).and_then(|p| eta_discrepancy(&p, sc))).collect()
}

/// Ion drive configuration. Index 0 is the bare gf drive; detunings follow from `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonParams {
    pub nu: f64,
    pub eta0: f64,
    pub gamma: f64,
    pub omega: [f64; 6],
    pub omega_gf: f64,
    pub omega_ef: f64,
    /// integral of u^2 N(u) over the emission pattern
    pub kick_moment: f64,
}

/// Second moment of the dipole pattern 3/8 (1 + u^2) on [-1, 1].
pub const DIPOLE_KICK_MOMENT: f64 = 0.4;

/// Effective couplings eps_0..eps_5 required for the squeezed-cat dissipator.
pub fn matching_targets(r: f64, alpha_prime: f64, omega_gf: f64, omega_ef: f64) -> [f64; 6] {
    let (ch, sh) = (r.cosh(), r.sinh());
    [
        -alpha_prime * alpha_prime * omega_gf,
        ch * ch * omega_gf,
        sh * sh * omega_gf,
        sh * ch * omega_gf,
        ch / alpha_prime * omega_ef,
        sh / alpha_prime * omega_ef,
    ]
}

/// eps_i from drive amplitudes after the secular approximation.
pub fn couplings_from_drives(omega: &[f64; 6], eta0: f64) -> [f64; 6] {
    let e2 = eta0 * eta0;
    [0.5 * (omega[0] + omega[3]), -0.25 * e2 * omega[1], -0.25 * e2 * omega[2], -0.25 * e2 * omega[3], 0.5 * eta0 * omega[4], 0.5 * eta0 * omega[5]]
}

/// Inverse of `couplings_from_drives`.
pub fn drives_from_couplings(eps: &[f64; 6], eta0: f64) -> [f64; 6] {
    let e2 = eta0 * eta0;
    let omega3 = -4.0 * eps[3] / e2;
    [2.0 * eps[0] - omega3, -4.0 * eps[1] / e2, -4.0 * eps[2] / e2, omega3, 2.0 * eps[4] / eta0, 2.0 * eps[5] / eta0]
}

impl IonParams {
    pub fn matched(nu: f64, eta0: f64, gamma: f64, omega_gf: f64, omega_ef: f64, sc: &SCParams) -> Result<Self, HardwareError> {
        for (name, v) in [("nu", nu), ("eta0", eta0), ("gamma", gamma), ("omega_gf", omega_gf), ("omega_ef", omega_ef)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HardwareError::InvalidParameter(format!("{name}={v}")));
            }
        }
        let eps = matching_targets(sc.r, sc.alpha_prime, omega_gf, omega_ef);
        let omega = drives_from_couplings(&eps, eta0);
        Ok(Self { nu, eta0, gamma, omega, omega_gf, omega_ef, kick_moment: DIPOLE_KICK_MOMENT })
    }

    /// delta_0..delta_5 = 0, -2nu, 2nu, 0, -nu, nu.
    pub fn detunings(&self) -> [f64; 6] {
        let nu = self.nu;
        [0.0, -2.0 * nu, 2.0 * nu, 0.0, -nu, nu]
    }

    pub fn couplings(&self) -> [f64; 6] {
        couplings_from_drives(&self.omega, self.eta0)
    }

    /// (Omega'_gf / Omega'_ef)^2 Gamma.
    pub fn kappa2(&self) -> f64 {
        (self.omega_gf / self.omega_ef).powi(2) * self.gamma
    }

    pub fn regime(&self, sc: &SCParams) -> IonRegime {
        let max_drive = self.omega.iter().fold(0.0f64, |m, o| m.max(o.abs()));
        IonRegime {
            lamb_dicke: self.eta0 <= 0.3,
            secular: max_drive <= 0.2 * self.nu,
            weak_pump: 2.0 * sc.alpha_prime * self.omega_gf <= 0.2 * self.gamma,
            hierarchy: self.omega_gf <= 0.2 * self.omega_ef,
        }
    }
}

/// Validity flags for the ion scheme. Violations are reported, never fatal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IonRegime {
    pub lamb_dicke: bool,
    pub secular: bool,
    /// 2 alpha' Omega'_gf << Gamma
    pub weak_pump: bool,
    /// Omega'_gf << Omega'_ef
    pub hierarchy: bool,
}

impl IonRegime {
    pub fn ok(&self) -> bool {
        self.lamb_dicke && self.secular && self.weak_pump && self.hierarchy
    }

    pub fn warnings(&self) -> Vec<&'static str> {
        let mut w = Vec::new();
        if !self.lamb_dicke {
            w.push("Lamb-Dicke parameter above 0.3");
        }
        if !self.secular {
            w.push("drive amplitude not small against the trap frequency");
        }
        if !self.weak_pump {
            w.push("2 alpha' Omega'_gf not small against Gamma");
        }
        if !self.hierarchy {
            w.push("Omega'_gf not small against Omega'_ef");
        }
        w
    }
}

/// Qutrit levels in tensor order: g, f, e.
pub const LEVEL_G: usize = 0;
pub const LEVEL_F: usize = 1;
pub const LEVEL_E: usize = 2;

fn level_op(to: usize, from: usize) -> CMat {
    let mut m = CMat::zeros(3, 3);
    m[(to, from)] = ONE;
    m
}

/// Coupling Hamiltonian on qutrit (x) motion from eps_0..eps_5 and the ladder `a`.
pub fn coupling_hamiltonian(eps: &[f64; 6], a: &CMat) -> CMat {
    let dim = a.nrows();
    let ad = a.adjoint();
    let id = CMat::identity(dim, dim);
    let gf =
        a * a * C64::new(eps[1], 0.0) + &ad * &ad * C64::new(eps[2], 0.0) + (&ad * a + a * &ad) * C64::new(eps[3], 0.0) + &id * C64::new(eps[0], 0.0);
    let ef = a * C64::new(eps[4], 0.0) + &ad * C64::new(eps[5], 0.0);
    let h = kron(&level_op(LEVEL_F, LEVEL_G), &gf) + kron(&level_op(LEVEL_E, LEVEL_F), &ef);
    &h + h.adjoint()
}

#[derive(Clone, Debug)]
pub struct IonHamiltonian {
    /// lab-frame Fock basis, qutrit (x) motion
    pub h: CMat,
    pub kappa2: f64,
    pub regime: IonRegime,
}

/// Lab-frame secular Hamiltonian built from the drive amplitudes.
pub fn build_ion_hamiltonian(ip: &IonParams, sc: &SCParams, dim: usize) -> Result<IonHamiltonian, HardwareError> {
    let regime = ip.regime(sc);
    for w in regime.warnings() {
        log::warn!("ion scheme: {w}");
    }
    let a = annihilation(dim)?.mat;
    Ok(IonHamiltonian { h: coupling_hamiltonian(&ip.couplings(), &a), kappa2: ip.kappa2(), regime })
}

/// Squeezed-frame motional cutoff for ion runs: cat support plus a few gauge levels.
pub fn ion_cutoff(sc: &SCParams) -> usize {
    let a = sc.alpha_prime;
    (a * a + 6.0 * a + 12.0).ceil() as usize
}

/// Frame-picture generator: conjugating by S(r) turns the lab couplings into the r = 0 set.
struct IonModel {
    liou: Liouvillian,
    /// Gamma eta0^2 m2 and the motional kick quadrature e^{-r}(a + a^dag)
    kick: Option<(f64, CMat)>,
    dim: usize,
}

impl IonModel {
    fn new(ip: &IonParams, sc: &SCParams, dim: usize, kappa1: f64, kick: bool) -> Result<Self, HardwareError> {
        let a = annihilation(dim)?.mat;
        let eps = matching_targets(0.0, sc.alpha_prime, ip.omega_gf, ip.omega_ef);
        let h = coupling_hamiltonian(&eps, &a);
        let i3 = CMat::identity(3, 3);
        let idm = CMat::identity(dim, dim);
        let sigma = kron(&level_op(LEVEL_G, LEVEL_E), &idm);
        let mut jumps = vec![(sigma, ip.gamma)];
        if kappa1 > 0.0 {
            jumps.push((kron(&i3, &frame_annihilation(sc.r, dim)?), kappa1));
        }
        let kick = if kick {
            let x = (&a + a.adjoint()) * C64::new((-sc.r).exp(), 0.0);
            Some((ip.gamma * ip.eta0 * ip.eta0 * ip.kick_moment, x))
        } else {
            None
        };
        Ok(Self { liou: Liouvillian::new(Some(h), jumps), kick, dim })
    }

    fn total_dim(&self) -> usize {
        3 * self.dim
    }
}

impl Generator for IonModel {
    fn dim(&self) -> usize {
        self.total_dim()
    }

    fn apply(&self, t: f64, rho: &CMat) -> CMat {
        let mut out = self.liou.apply(t, rho);
        if let Some((rate, x)) = &self.kick {
            // rate * D[x](sigma rho sigma^dag); sigma rho sigma^dag is the ee block moved to gg
            let d = self.dim;
            let s = rho.view((LEVEL_E * d, LEVEL_E * d), (d, d)).into_owned();
            let xs = x * &s;
            let term = (&xs * x - (x * &xs + &xs.adjoint() * x) * C64::new(0.5, 0.0)) * C64::new(*rate, 0.0);
            let mut gg = out.view_mut((LEVEL_G * d, LEVEL_G * d), (d, d));
            gg += term;
        }
        out
    }
}

fn motional_state(rho: &CMat, dim: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for q in 0..3 {
        m += rho.view((q * dim, q * dim), (dim, dim));
    }
    m
}

fn ground_embed(psi: &DVector<C64>) -> CMat {
    let dim = psi.len();
    let mut full = DVector::from_element(3 * dim, ZERO);
    full.rows_mut(LEVEL_G * dim, dim).copy_from(psi);
    &full * full.adjoint()
}

/// Outcome of the full qutrit (x) motion run compared with kappa2 D[F].
#[derive(Clone, Debug, Serialize)]
pub struct IonElimination {
    pub kappa2: f64,
    /// 4 kappa2 alpha'^2
    pub predicted_gap: f64,
    /// decay rate of |(+,1)> in the full model
    pub gap: f64,
    /// same rate under kappa2 D[F] alone
    pub reference_gap: f64,
    /// weight of |(-,0)> among the final ground-gauge populations
    pub flip_fraction: f64,
    /// trace distance of the final motional state to the kappa2 D[F] prediction
    pub state_distance: f64,
    /// worst codespace leakage of an initial codeword over the run
    pub dark_leakage: f64,
    pub regime: IonRegime,
}

/// Full ion master equation against the eliminated motional dynamics, noiseless motion.
pub fn simulate_ion_elimination(ip: &IonParams, sc: &SCParams, dim: usize, t: f64) -> Result<IonElimination, HardwareError> {
    let regime = ip.regime(sc);
    for w in regime.warnings() {
        log::warn!("ion scheme: {w}");
    }
    let model = IonModel::new(ip, sc, dim, 0.0, false)?;
    let kappa2 = ip.kappa2();
    let basis = build_subsystem_basis(sc, 2, dim)?;
    let plus1 = basis.vectors.column(basis.index(true, 1)).into_owned();
    let plus0 = basis.vectors.column(basis.index(true, 0)).into_owned();
    let minus0 = basis.vectors.column(basis.index(false, 0)).into_owned();
    let pop = |rho: &CMat, v: &DVector<C64>| (v.adjoint() * rho * v)[(0, 0)].re;

    let f = frame_logical_z(&basis) * frame_two_photon(sc, dim);
    let reference = Liouvillian::new(None, vec![(f, kappa2)]);

    let predicted_gap = 4.0 * kappa2 * sc.alpha_sq();
    let opts = EvolveOptions::tol(1e-9);
    let t_fit = 1.0 / predicted_gap;
    let fit_times: Vec<f64> = (1..=5).map(|k| 10.0 / ip.gamma + k as f64 * 0.3 * t_fit).collect();

    let rho0 = ground_embed(&plus1);
    let ref0 = &plus1 * plus1.adjoint();
    let mut rho = rho0;
    let mut rho_ref = ref0;
    let mut t_prev = 0.0;
    let (mut lf, mut lr) = (Vec::new(), Vec::new());
    for &tk in &fit_times {
        rho = evolve_between(&model, &rho, t_prev, tk, &opts)?;
        rho_ref = evolve_between(&reference, &rho_ref, t_prev, tk, &opts)?;
        t_prev = tk;
        lf.push(pop(&motional_state(&rho, dim), &plus1).ln());
        lr.push(pop(&rho_ref, &plus1).ln());
    }
    let t_end = t.max(t_prev);
    rho = evolve_between(&model, &rho, t_prev, t_end, &opts)?;
    rho_ref = evolve_between(&reference, &rho_ref, t_prev, t_end, &opts)?;
    let gap = -linear_fit(&fit_times, &lf).0;
    let reference_gap = -linear_fit(&fit_times, &lr).0;
    let motion = motional_state(&rho, dim);
    let (pm, pp) = (pop(&motion, &minus0), pop(&motion, &plus0));
    let state_distance = trace_distance(&motion, &rho_ref);

    let (cp, cm) = frame_codewords(sc, dim);
    let code_proj = &cp.amps * cp.amps.adjoint() + &cm.amps * cm.amps.adjoint();
    let mut dark_leakage = 0.0f64;
    let sup = (&cp.amps + &cm.amps) / C64::new(2f64.sqrt(), 0.0);
    let mut r = ground_embed(&sup);
    let mut tp = 0.0;
    for k in 1..=4 {
        let tk = t * k as f64 / 4.0;
        r = evolve_between(&model, &r, tp, tk, &opts)?;
        tp = tk;
        let inside = (&code_proj * motional_state(&r, dim)).trace().re;
        dark_leakage = dark_leakage.max(1.0 - inside);
    }
    Ok(IonElimination { kappa2, predicted_gap, gap, reference_gap, flip_fraction: pm / (pm + pp), state_distance, dark_leakage, regime })
}

fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().map(|v| v.abs()).sum::<f64>() / 2.0
}

/// Phase-flip suppression factor of the ion scheme under weak motional loss, read from the
/// decay of parity starting in the even codeword.
pub fn ion_phase_flip_eta(ip: &IonParams, sc: &SCParams, dim: usize, kappa1: f64, kick: bool) -> Result<f64, HardwareError> {
    let model = IonModel::new(ip, sc, dim, kappa1, kick)?;
    let (cp, _) = frame_codewords(sc, dim);
    let par = kron(&CMat::identity(3, 3), &parity(dim).mat);
    let rate_guess = 2.0 * kappa1 * sc.nbar;
    let t0 = 20.0 / ip.kappa2() / sc.alpha_sq().max(1.0);
    let span = 0.1 / rate_guess;
    let times: Vec<f64> = (0..=4).map(|k| t0 + span * k as f64 / 4.0).collect();
    let opts = EvolveOptions::tol(1e-10);
    let mut rho = ground_embed(&cp.amps);
    let mut tp = 0.0;
    let mut logs = Vec::new();
    for &tk in &times {
        rho = evolve_between(&model, &rho, tp, tk, &opts)?;
        tp = tk;
        logs.push((&par * &rho).trace().re.ln());
    }
    let rate = -linear_fit(&times, &logs).0;
    Ok(rate / (2.0 * kappa1 * sc.nbar))
}

/// Largest |H| entry on a leading block, used to compare lab and frame couplings.
pub fn frame_consistency(ip: &IonParams, sc: &SCParams, dim: usize, block: usize) -> Result<f64, HardwareError> {
    let lab = build_ion_hamiltonian(ip, sc, dim)?.h;
    let a = annihilation(dim)?.mat;
    let frame = coupling_hamiltonian(&matching_targets(0.0, sc.alpha_prime, ip.omega_gf, ip.omega_ef), &a);
    let s = kron(&CMat::identity(3, 3), &crate::code::squeeze_unitary(sc.r, dim)?);
    let mapped = &s * frame * s.adjoint();
    let mut worst = 0.0f64;
    for q in 0..3 {
        for p in 0..3 {
            let l = lab.view((q * dim, p * dim), (block, block));
            let m = mapped.view((q * dim, p * dim), (block, block));
            worst = worst.max(max_abs(&(l - m)));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coupling_rates_follow_decay_rates() {
        let mut p = ThreeModeParams::new(0.04, 1.0, 0.25, 1.0).unwrap();
        assert!((p.j_ab() - 0.1).abs() < 1e-15);
        assert!((p.j_ac() - 0.05).abs() < 1e-15);
        assert!((p.j_bc() - 0.25).abs() < 1e-15);
        p.gamma_a = 0.16;
        assert!((p.j_ab() - 0.2).abs() < 1e-15);
        assert!(ThreeModeParams::new(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn decoupled_limit_is_pure_phase() {
        let p = ThreeModeParams::new(1e-12, 0.7, 1.3, 0.4).unwrap();
        let z = qubit_boson_coherence(&p);
        let phase = (C64::new(0.7, -0.4) / C64::new(0.7, 0.4)).powi(2);
        assert!((z - phase).norm() < 1e-10);
        assert!((z.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matched_coherence_loses_half_the_ratio() {
        let p = ThreeModeParams::matched(0.1, 1.0).unwrap();
        let mag = qubit_boson_coherence(&p).norm();
        assert!((mag - 0.95).abs() < 0.005, "{mag}");
        for x in [0.01, 0.02, 0.05] {
            let p = ThreeModeParams::matched(x, 1.0).unwrap();
            let loss = 1.0 - qubit_boson_coherence(&p).norm();
            assert!((loss / (x / 2.0) - 1.0).abs() < 0.05, "{x}: {loss}");
        }
    }

    #[test]
    fn matching_at_zero_squeezing_needs_no_squeezing_legs() {
        let eps = matching_targets(0.0, 2.0, 0.3, 1.0);
        assert_eq!(eps[2], 0.0);
        assert_eq!(eps[3], 0.0);
        assert_eq!(eps[5], 0.0);
        assert!((eps[0] + 4.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn drive_ratio_is_squared_cotangent() {
        for r in [0.1, 0.5, 1.2] {
            let om = drives_from_couplings(&matching_targets(r, 1.7, 0.02, 0.5), 0.15);
            let want = (r.cosh() / r.sinh()).powi(2);
            assert!((om[1] / om[2] / want - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ion_rate_and_regime() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        // kHz: nu = 30 MHz, Gamma = 200 kHz, Omega'_ef = Gamma/2, Omega'_gf = Omega'_ef/20
        let ip = IonParams::matched(30_000.0, 0.15, 200.0, 5.0, 100.0, &sc).unwrap();
        assert!((ip.kappa2() - 0.5).abs() < 1e-12);
        let reg = ip.regime(&sc);
        assert!(reg.ok(), "{reg:?}");
        assert_eq!(ip.detunings(), [0.0, -60_000.0, 60_000.0, 0.0, -30_000.0, 30_000.0]);
        let crowded = IonParams::matched(30.0, 0.15, 200.0, 5.0, 100.0, &sc).unwrap();
        assert!(!crowded.regime(&sc).secular);
    }

    #[test]
    fn dipole_moment_integral() {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let m: f64 = (0..n)
            .map(|k| {
                let u = -1.0 + (k as f64 + 0.5) * h;
                u * u * 0.375 * (1.0 + u * u) * h
            })
            .sum();
        assert!((m - DIPOLE_KICK_MOMENT).abs() < 1e-8);
    }
}
