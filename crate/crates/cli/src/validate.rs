//! Dry-run checks: parameter domains and regime flags, without simulating anything.

use serde::Serialize;
use sqcat_core::code::SCParams;
use sqcat_core::dissipation::NoiseParams;
use sqcat_core::gates::GateKind;
use sqcat_core::hardware::{ion_cutoff, IonParams, ThreeModeParams};
use sqcat_core::rates;
use sqcat_qec::noise::NoiseModel;

use crate::config::{CodeName, Experiment, ExperimentConfig, GateMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    /// the run is refused
    Error,
    /// the run proceeds; the flag is copied into the output metadata
    Warning,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub severity: Severity,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn error(&mut self, code: &'static str, message: String) {
        self.violations.push(Violation { code, severity: Severity::Error, message });
    }

    fn warn(&mut self, code: &'static str, message: String) {
        self.violations.push(Violation { code, severity: Severity::Warning, message });
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations.iter().filter(|v| v.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    pub fn has(&self, code: &str) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }

    fn positive(&mut self, name: &str, x: f64) {
        if !(x > 0.0 && x.is_finite()) {
            self.error("invalid-parameter", format!("{name} = {x} must be positive"));
        }
    }

    fn noise(&mut self, n: &NoiseParams) {
        if !n.is_valid() {
            self.error("invalid-parameter", format!("noise rates must be non-negative with kappa2 > 0: {n:?}"));
        }
    }

    fn gauge_dim(&mut self, d: usize) {
        if d < 2 {
            self.error("invalid-parameter", format!("gauge dimension d = {d} must be at least 2"));
        }
    }
}

pub fn validate(cfg: &ExperimentConfig) -> ValidationReport {
    let mut rep = ValidationReport::default();
    match &cfg.experiment {
        Experiment::MemoryRates { nbar, r, noise, d, durations, predict_only, .. } => {
            rep.positive("nbar", *nbar);
            rep.noise(noise);
            if !predict_only {
                rep.gauge_dim(*d);
                if durations.len() < 2 || durations.iter().any(|t| !(*t > 0.0)) {
                    rep.error("invalid-parameter", "durations need at least two positive entries".into());
                }
            }
            for x in r.values() {
                if !(x >= 0.0 && x.is_finite()) {
                    rep.error("invalid-parameter", format!("r = {x} must be non-negative"));
                } else if *nbar > 0.0 && x.sinh().powi(2) >= *nbar {
                    rep.warn(
                        "over-squeezed",
                        format!("r = {x} exceeds r_max = {:.4} at nbar = {nbar}; the point is skipped", SCParams::r_max(*nbar)),
                    );
                }
            }
        }
        Experiment::GateSweep { gate, sc, noise, t, d, mode, .. } => {
            rep.noise(noise);
            rep.gauge_dim(*d);
            let formula = *mode == GateMode::Formula;
            if formula && !matches!(gate, GateKind::Zrot | GateKind::CX) {
                rep.error("formula-unavailable", format!("no closed-form budget for {gate:?}; use mode = simulate"));
            }
            let z_min = rates::z_rotation_min_time(sc, noise.kappa2);
            for x in t.values() {
                rep.positive("t", x);
                if formula && *gate == GateKind::CX && noise.kappa2 * x < 1.0 {
                    rep.warn("formula-out-of-range", format!("kappa2 T = {:.3} < 1 is outside the CX budget formula", noise.kappa2 * x));
                }
                if *gate == GateKind::Zrot && x < z_min {
                    rep.warn("non-adiabatic", format!("T = {x} is below the adiabatic limit {z_min:.3} of the Z rotation"));
                }
            }
        }
        Experiment::Tomography { noise, t, d, .. } => {
            rep.noise(noise);
            rep.gauge_dim(*d);
            rep.positive("t", *t);
        }
        Experiment::EiCurve { gamma, .. } => {
            for g in gamma.values() {
                if !(0.0..=0.2).contains(&g) {
                    rep.error("loss-probability-range", format!("loss probability {g} outside [0, 0.2]"));
                }
            }
        }
        Experiment::ThreeMode { gamma_b, ratio, .. } => {
            rep.positive("gamma_b", *gamma_b);
            for x in ratio.values() {
                match ThreeModeParams::matched(x * gamma_b, *gamma_b) {
                    Ok(p) if p.elimination_parameter() >= 1.0 => rep.warn(
                        "adiabatic-elimination",
                        format!("Gamma_a/Gamma_b = {x}: elimination parameter {:.2} is not small", p.elimination_parameter()),
                    ),
                    Ok(_) => {}
                    Err(e) => rep.error("invalid-parameter", format!("Gamma_a/Gamma_b = {x}: {e}")),
                }
            }
        }
        Experiment::Ion { sc, nu, eta0, gamma, omega_gf, omega_ef, t, dim } => {
            if let Some(t) = t {
                rep.positive("t", *t);
            }
            match IonParams::matched(*nu, *eta0, *gamma, *omega_gf, *omega_ef, sc) {
                Ok(ip) => {
                    let reg = ip.regime(sc);
                    for (ok, code, msg) in [
                        (reg.lamb_dicke, "lamb-dicke", format!("eta0 = {eta0} is above the Lamb-Dicke bound 0.3")),
                        (reg.secular, "secular", "largest drive is not small against the trap frequency".to_string()),
                        (reg.weak_pump, "weak-pump", "2 alpha' Omega'_gf is not small against Gamma".to_string()),
                        (reg.hierarchy, "hierarchy", "Omega'_gf is not small against Omega'_ef".to_string()),
                    ] {
                        if !ok {
                            rep.warn(code, msg);
                        }
                    }
                }
                Err(e) => rep.error("invalid-parameter", e.to_string()),
            }
            if let Some(n) = dim {
                let need = ion_cutoff(sc);
                if *n < need {
                    rep.warn("cutoff", format!("motional cutoff {n} is below the recommended {need}"));
                }
            }
        }
        Experiment::ConcatThreshold { code, dx, dz, ratio, shots, sc, split, fit } => {
            if *shots == 0 {
                rep.error("invalid-parameter", "shots must be positive".into());
            }
            for &d in dz {
                if d < 3 || d % 2 == 0 {
                    rep.error("invalid-parameter", format!("dZ = {d} must be odd and at least 3"));
                }
            }
            if *code == CodeName::Surface && (*dx < 3 || dx % 2 == 0) {
                rep.error("invalid-parameter", format!("dX = {dx} must be odd and at least 3"));
            }
            if (split.0.iter().sum::<f64>() - 1.0).abs() > 1e-9 || split.0.iter().any(|x| *x < 0.0) {
                rep.error("invalid-parameter", format!("CX split {:?} must be non-negative and sum to 1", split.0));
            }
            let ratios = ratio.values();
            for &x in &ratios {
                rep.positive("ratio", x);
                if x > 0.0 {
                    let nm = match code {
                        CodeName::Repetition => NoiseModel::repetition(sc, x),
                        CodeName::Surface => NoiseModel::surface(sc, x, *split),
                    };
                    if let Err(e) = nm.validate() {
                        rep.error("invalid-parameter", format!("ratio = {x}: {e}"));
                    }
                }
            }
            let mut distinct = dz.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if *fit && (distinct.len() < 2 || ratios.len() < 3) {
                rep.warn("fit-underdetermined", "a threshold fit needs two distances and three ratios; the fit is skipped".into());
            }
        }
        Experiment::MinLogical { ratio, options, .. } => {
            for x in ratio.values() {
                rep.positive("ratio", x);
            }
            if !(options.tau_min > 0.0 && options.tau_max > options.tau_min && options.tau_points >= 2 && options.max_dz >= 3) {
                rep.error("invalid-parameter", format!("bad optimizer options {options:?}"));
            }
        }
    }
    rep
}
