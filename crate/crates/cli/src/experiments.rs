use rayon::prelude::*;
use serde_json::json;
use sqcat_core::code::SCParams;
use sqcat_core::dissipation::SubsystemModel;
use sqcat_core::dynamics::{channel_tomography, entanglement_infidelity, memory_rates, twirled_rates, Liouvillian};
use sqcat_core::gates::{simulate, GateBudget, GateKind, GateSpec};
use sqcat_core::hardware::{eta_sweep, ion_cutoff, simulate_ion_elimination, IonParams};
use sqcat_core::rates;
use sqcat_qec::noise::NoiseModel;
use sqcat_qec::optimize::{minimize_logical_error, OptimizeError};
use sqcat_qec::threshold::{fit_threshold, scan};

use crate::config::{CodeName, Experiment, ExperimentConfig, GateMode};
use crate::CliError;

/// Numeric result table; one row per sweep point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub table: Table,
    /// Experiment-level results that do not fit the table, e.g. a threshold fit.
    pub summary: serde_json::Value,
    pub skipped: Vec<String>,
}

fn numerical(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(e.to_string())
}

fn collect_rows<T: Sync>(xs: &[T], f: impl Fn(&T) -> Result<Vec<f64>, CliError> + Sync + Send) -> Result<Vec<Vec<f64>>, CliError> {
    xs.par_iter().map(f).collect()
}

fn budget_row(t: f64, b: &GateBudget) -> Vec<f64> {
    vec![t, b.p_zc, b.p_zt, b.p_zczt, b.p_xy, b.leakage, b.total_z()]
}

pub fn compute(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let mut out = Outcome::default();
    match &cfg.experiment {
        Experiment::MemoryRates { nbar, r, noise, d, stabilizer, durations, predict_only } => {
            let mut cols = vec!["r", "eta", "alpha_sq", "gamma_z_pred", "gamma_xy_pred"];
            if !predict_only {
                cols.extend(["gamma_x", "gamma_y", "gamma_z", "leakage"]);
            }
            out.table = Table::new(&cols);
            let (ok, over): (Vec<f64>, Vec<f64>) = r.values().into_iter().partition(|x| x.sinh().powi(2) < *nbar);
            out.skipped = over.iter().map(|x| format!("r = {x}: over-squeezed")).collect();
            out.table.rows = collect_rows(&ok, |&x| {
                let sc = SCParams::from_r(*nbar, x).map_err(numerical)?;
                let p = rates::gamma_z(&sc, noise);
                let mut row = vec![x, sc.eta, sc.alpha_sq(), p.gamma_z, p.gamma_xy];
                if !predict_only {
                    let model = SubsystemModel::new(&sc, *d).map_err(numerical)?;
                    let m = memory_rates(&model, noise, *stabilizer, durations);
                    row.extend([m.gamma_x, m.gamma_y, m.gamma_z, m.leakage]);
                }
                Ok(row)
            })?;
        }
        Experiment::GateSweep { gate, sc, noise, t, theta, d, mode } => {
            out.table = Table::new(&["t", "p_zc", "p_zt", "p_zczt", "p_xy", "leakage", "total_z"]);
            out.table.rows = collect_rows(&t.values(), |&x| match mode {
                GateMode::Simulate => {
                    let spec = GateSpec::new(*gate, *sc, x).with_theta(*theta).with_d(*d);
                    Ok(budget_row(x, &simulate(&spec, noise).map_err(numerical)?))
                }
                GateMode::Formula => match gate {
                    GateKind::Zrot => {
                        let p = rates::z_rotation_error(sc, noise, *theta, x).map_err(numerical)?;
                        Ok(budget_row(x, &GateBudget { p_zc: p.gamma_z, p_xy: p.gamma_xy, duration: x, ..Default::default() }))
                    }
                    GateKind::CX => {
                        let b = rates::cx_error_budget(sc, noise, x, None).map_err(numerical)?;
                        let g = GateBudget {
                            p_zc: b.p_zc,
                            p_zt: b.p_zt,
                            p_zczt: b.p_zczt,
                            p_xy: b.p_xy.unwrap_or(0.0),
                            leakage: b.leakage_bound,
                            duration: x,
                            angle: None,
                        };
                        Ok(budget_row(x, &g))
                    }
                    other => Err(CliError::Schema(format!("no closed-form budget for {other:?}"))),
                },
            })?;
        }
        Experiment::Tomography { sc, noise, t, d, stabilizer, readout } => {
            let model = SubsystemModel::new(sc, *d).map_err(numerical)?;
            let l = Liouvillian::from_set(&model.generator(noise, *stabilizer));
            let p = channel_tomography(&l, *t, model.d(), (*readout).into()).map_err(numerical)?;
            out.table = Table::new(&["row", "col", "re", "im"]);
            for i in 0..4 {
                for j in 0..4 {
                    out.table.rows.push(vec![i as f64, j as f64, p.chi[(i, j)].re, p.chi[(i, j)].im]);
                }
            }
            let rates = twirled_rates(&p).map_err(numerical)?;
            out.summary = json!({
                "leakage": p.leakage,
                "off_block_ratio": p.off_block_ratio(),
                "hermiticity_error": p.hermiticity_error(),
                "gamma_x": rates[0],
                "gamma_y": rates[1],
                "gamma_z": rates[2],
            });
        }
        Experiment::EiCurve { sc, gamma, recovery } => {
            out.table = Table::new(&["gamma", "infidelity"]);
            out.table.rows = collect_rows(&gamma.values(), |&g| Ok(vec![g, entanglement_infidelity(sc, g, (*recovery).into()).map_err(numerical)?]))?;
        }
        Experiment::ThreeMode { sc, gamma_b, ratio } => {
            out.table = Table::new(&["ratio", "eta_sim", "eta_pred", "first_order"]);
            out.table.rows = eta_sweep(&ratio.values(), *gamma_b, sc)
                .map_err(numerical)?
                .iter()
                .map(|e| vec![e.ratio, e.eta_sim, e.eta_pred, e.first_order()])
                .collect();
        }
        Experiment::Ion { sc, nu, eta0, gamma, omega_gf, omega_ef, t, dim } => {
            let ip = IonParams::matched(*nu, *eta0, *gamma, *omega_gf, *omega_ef, sc).map_err(numerical)?;
            let duration = t.unwrap_or(5.0 / ip.kappa2());
            let e = simulate_ion_elimination(&ip, sc, dim.unwrap_or_else(|| ion_cutoff(sc)), duration).map_err(numerical)?;
            out.table = Table::new(&["t", "kappa2", "predicted_gap", "gap", "reference_gap", "flip_fraction", "state_distance", "dark_leakage"]);
            out.table.rows.push(vec![duration, e.kappa2, e.predicted_gap, e.gap, e.reference_gap, e.flip_fraction, e.state_distance, e.dark_leakage]);
            out.summary = json!({ "regime": e.regime, "drives": ip.omega, "couplings": ip.couplings() });
        }
        Experiment::ConcatThreshold { code, dx, dz, ratio, shots, sc, split, fit } => {
            let noise = |x: f64| match code {
                CodeName::Repetition => NoiseModel::repetition(sc, x),
                CodeName::Surface => NoiseModel::surface(sc, x, *split),
            };
            let ratios = ratio.values();
            let points = scan(code.kind(*dx), dz, &ratios, *shots, cfg.seed, noise).map_err(numerical)?;
            out.table = Table::new(&["dz", "ratio", "shots", "z_failures", "x_failures", "p_z", "p_z_lo", "p_z_hi"]);
            out.table.rows = points
                .iter()
                .map(|p| {
                    let r = &p.result;
                    vec![p.dz as f64, p.ratio, r.shots as f64, r.z_failures as f64, r.x_failures as f64, r.z_rate(), r.z_ci.0, r.z_ci.1]
                })
                .collect();
            let mut distinct = dz.clone();
            distinct.sort_unstable();
            distinct.dedup();
            if *fit && distinct.len() >= 2 && ratios.len() >= 3 {
                out.summary = match fit_threshold(&points, cfg.seed) {
                    Ok(est) => json!({ "threshold": est }),
                    Err(e) => {
                        log::warn!("threshold fit failed: {e}");
                        json!({ "threshold_error": e.to_string() })
                    }
                };
            }
        }
        Experiment::MinLogical { sc, ratio, options } => {
            out.table = Table::new(&["ratio", "dz", "kappa2_t", "p_l", "p_lz", "p_lx", "p_prime", "p_xy"]);
            let results: Vec<(f64, Result<_, OptimizeError>)> =
                ratio.values().into_par_iter().map(|x| (x, minimize_logical_error(sc, x, options))).collect();
            for (x, res) in results {
                match res {
                    Ok(m) => out.table.rows.push(vec![x, m.dz as f64, m.kappa2_t, m.p_l, m.p_lz, m.p_lx, m.p_prime, m.p_xy]),
                    Err(e @ OptimizeError::AboveThreshold { .. }) => out.skipped.push(format!("ratio = {x}: {e}")),
                    Err(e) => return Err(numerical(e)),
                }
            }
        }
    }
    if let Some((i, j)) = out.table.rows.iter().enumerate().find_map(|(i, row)| row.iter().position(|v| !v.is_finite()).map(|j| (i, j))) {
        return Err(CliError::Numerical(format!("non-finite {} in row {i}: {:?}", out.table.columns[j], out.table.rows[i])));
    }
    Ok(out)
}
