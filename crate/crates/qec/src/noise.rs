//! Per-operation Pauli error model of the concatenated code.
//!
//! Times are in units of 1/kappa2 and `ratio` is kappa1/kappa2.

use serde::{Deserialize, Serialize};
use sqcat_core::code::SCParams;
use sqcat_core::dissipation::NoiseParams;
use sqcat_core::rates;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    Repetition,
    Surface,
    CatSurface,
    CodeCapacity,
    Noiseless,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpNoise {
    pub duration: f64,
    pub p_z: f64,
    pub p_xy: f64,
}

/// Error accumulated per unit time by a stabilized, undriven qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdleNoise {
    pub z_per_time: f64,
    pub xy_per_time: f64,
}

impl IdleNoise {
    pub fn p_z(&self, t: f64) -> f64 {
        (self.z_per_time * t).min(0.5)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CxNoise {
    pub duration: f64,
    pub p_zc: f64,
    pub p_zt: f64,
    pub p_zczt: f64,
    /// Bit-flip probability, injected as an X on the target.
    pub p_xy: f64,
}

impl CxNoise {
    pub fn total_z(&self) -> f64 {
        self.p_zc + self.p_zt + self.p_zczt
    }
}

/// Fractions of the surface-regime CX total assigned to (Zc, Zt, ZcZt).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CxSplit(pub [f64; 3]);

impl Default for CxSplit {
    fn default() -> Self {
        Self([1.0 / 3.0; 3])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub mode: NoiseMode,
    pub ratio: f64,
    pub nbar: f64,
    pub eta: f64,
    pub alpha_sq: f64,
    pub idle: IdleNoise,
    pub prep_plus: OpNoise,
    pub meas_x: OpNoise,
    pub cx: CxNoise,
    /// Extra Z probability on every data qubit at the start of each round.
    pub data_round_z: f64,
    pub measurement_errors: bool,
}

const SURFACE_CX_PREFACTOR: f64 = 0.44;
const PREP_DURATION_SCALE: f64 = 10.0;

impl NoiseModel {
    pub fn noiseless() -> Self {
        let zero = OpNoise { duration: 0.0, p_z: 0.0, p_xy: 0.0 };
        Self {
            mode: NoiseMode::Noiseless,
            ratio: 0.0,
            nbar: 0.0,
            eta: 0.0,
            alpha_sq: 0.0,
            idle: IdleNoise { z_per_time: 0.0, xy_per_time: 0.0 },
            prep_plus: zero,
            meas_x: zero,
            cx: CxNoise { duration: 1.0, p_zc: 0.0, p_zt: 0.0, p_zczt: 0.0, p_xy: 0.0 },
            data_round_z: 0.0,
            measurement_errors: false,
        }
    }

    /// Independent data Z errors of probability `p` once per round; everything else ideal.
    pub fn code_capacity(p: f64) -> Self {
        Self { mode: NoiseMode::CodeCapacity, data_round_z: p, ..Self::noiseless() }
    }

    fn base(sc: &SCParams, ratio: f64, mode: NoiseMode) -> Self {
        let a2 = sc.alpha_sq();
        let prep_t = PREP_DURATION_SCALE / a2;
        Self {
            mode,
            ratio,
            nbar: sc.nbar,
            eta: sc.eta,
            alpha_sq: a2,
            idle: IdleNoise { z_per_time: ratio * sc.eta * sc.nbar, xy_per_time: 0.0 },
            prep_plus: OpNoise { duration: prep_t, p_z: ratio * sc.nbar * prep_t, p_xy: 0.0 },
            meas_x: OpNoise { duration: 0.0, p_z: 0.0, p_xy: 0.0 },
            cx: CxNoise { duration: 1.0, p_zc: 0.0, p_zt: 0.0, p_zczt: 0.0, p_xy: 0.0 },
            data_round_z: 0.0,
            measurement_errors: false,
        }
    }

    /// Slow CX at kappa2 T = 1.
    pub fn repetition(sc: &SCParams, ratio: f64) -> Self {
        Self::repetition_with_cx_time(sc, ratio, 1.0)
    }

    /// Slow CX of duration `tau`; loss-dominated, no non-adiabatic term.
    pub fn repetition_with_cx_time(sc: &SCParams, ratio: f64, tau: f64) -> Self {
        let mut nm = Self::base(sc, ratio, NoiseMode::Repetition);
        let k1n = ratio * sc.nbar;
        nm.cx = CxNoise {
            duration: tau,
            p_zc: sc.eta * k1n * tau,
            p_zt: k1n * tau / 2.0,
            p_zczt: k1n * tau / 2.0,
            p_xy: rates::idle_bitflip(sc, 1.0, tau),
        };
        nm
    }

    /// Fast CX at the time minimizing its total Z error.
    pub fn surface(sc: &SCParams, ratio: f64, split: CxSplit) -> Self {
        let mut nm = Self::base(sc, ratio, NoiseMode::Surface);
        let (t_opt, _) = rates::cx_optimum(sc, &NoiseParams::new(ratio, 1.0, 0.0, 0.0));
        let total = SURFACE_CX_PREFACTOR * ratio.powf(2.0 / 3.0);
        let [a, b, c] = split.0;
        nm.cx = CxNoise { duration: t_opt, p_zc: total * a, p_zt: total * b, p_zczt: total * c, p_xy: 0.0 };
        nm
    }

    /// Surface-regime model for an unsqueezed cat of mean photon number `nbar`.
    ///
    /// The CX error is the loss/non-adiabatic optimum of the cat gate, reached at
    /// T* = pi / (4 sqrt(2) nbar sqrt(ratio)).
    pub fn cat_surface(nbar: f64, ratio: f64, split: CxSplit) -> Result<Self, NoiseError> {
        let sc = SCParams::cat(nbar).map_err(|e| NoiseError::InvalidParameter(e.to_string()))?;
        let mut nm = Self::base(&sc, ratio, NoiseMode::CatSurface);
        let total = rates::cat_cx_optimum(ratio);
        let t_opt = std::f64::consts::PI / (4.0 * std::f64::consts::SQRT_2 * nbar * ratio.sqrt());
        let [a, b, c] = split.0;
        nm.cx = CxNoise { duration: t_opt, p_zc: total * a, p_zt: total * b, p_zczt: total * c, p_xy: 0.0 };
        Ok(nm)
    }

    pub fn with_measurement_errors(mut self, on: bool) -> Self {
        self.measurement_errors = on;
        self
    }

    pub fn with_cx_bitflip(mut self, p_xy: f64) -> Self {
        self.cx.p_xy = p_xy;
        self
    }

    /// Z error on a qubit idling while others are prepared.
    pub fn idle_during_prep(&self) -> f64 {
        self.idle.p_z(self.prep_plus.duration)
    }

    /// Z error on a qubit idling through one CX layer.
    pub fn idle_during_cx(&self) -> f64 {
        self.idle.p_z(self.cx.duration)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        let ps = [
            ("prep_plus.p_z", self.prep_plus.p_z),
            ("prep_plus.p_xy", self.prep_plus.p_xy),
            ("meas_x.p_z", self.meas_x.p_z),
            ("cx.p_zc", self.cx.p_zc),
            ("cx.p_zt", self.cx.p_zt),
            ("cx.p_zczt", self.cx.p_zczt),
            ("cx.p_xy", self.cx.p_xy),
            ("idle during prep", self.idle_during_prep()),
            ("idle during cx", self.idle_during_cx()),
            ("data_round_z", self.data_round_z),
        ];
        for (name, p) in ps {
            if !(0.0..=1.0).contains(&p) {
                return Err(NoiseError::InvalidParameter(format!("{name} = {p}")));
            }
        }
        if !(self.cx.duration > 0.0) {
            return Err(NoiseError::InvalidParameter(format!("cx.duration = {}", self.cx.duration)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repetition_cx_at_unit_time() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        let nm = NoiseModel::repetition(&sc, 1e-3);
        assert!((nm.cx.total_z() - (1.0 + 0.25) * 4.0 * 1e-3).abs() < 1e-15);
        let a2 = sc.alpha_sq();
        assert!((nm.cx.p_xy - 1.38 * (-2.0 * a2).exp() / a2).abs() < 1e-20);
        nm.validate().unwrap();
    }

    #[test]
    fn surface_total_follows_two_thirds_power() {
        let sc = SCParams::from_eta(4.0, 0.25).unwrap();
        let nm = NoiseModel::surface(&sc, 8e-3, CxSplit::default());
        assert!((nm.cx.total_z() - 0.44 * 8e-3f64.powf(2.0 / 3.0)).abs() < 1e-12);
        assert!(nm.cx.duration > 0.0 && nm.cx.duration < 5.0);
    }

    #[test]
    fn out_of_range_probability_is_rejected() {
        assert!(NoiseModel::code_capacity(1.5).validate().is_err());
    }
}
