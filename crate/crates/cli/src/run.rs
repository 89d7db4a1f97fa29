//! Experiment pipelines. Per-point work fans out over rayon; every point
//! draws from its own stream of the master seed, so output does not depend
//! on the thread count.

use std::f64::consts::PI;
use std::path::Path;

use qlockin_core::dynamics::{simulate_scan_point, ScanSettings};
use qlockin_core::estimation::{
    allan_deviation, detrend_linear, fit_coherence_with, fit_fringe, fit_spectrum, phase_to_freq, AllanSeries,
    CoherenceNoise, CurvePoint, PhaseScan, ScanPoint, SensitivityPoint, sql,
};
use qlockin_core::lockin::{predicted_contrast, sequence_contrast};
use qlockin_core::noise::ToneSpectrum;
use qlockin_core::rng;
use qlockin_core::sequence::{make_cpmg, PhasePolicy};
use qlockin_core::spectroscopy::{detuning_scan, fm_scan, ShotModel};
use qlockin_core::Error;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{
    build_sequence, options, AllanAnalysis, CoherenceScan, ContrastScan, DetuningScan, ExperimentConfig, FmScan,
    PhaseScanConfig, SensitivityCurve, SpectrumFitConfig,
};
use crate::output::{num, Outputs};

#[derive(Debug)]
pub enum RunError {
    /// Bad input data referenced by the config; reported like a config error.
    Input { field: String, message: String },
    Numerical(Error),
    Io(std::io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn input_error(field: &str, message: impl Into<String>) -> RunError {
    RunError::Input {
        field: field.to_string(),
        message: message.into(),
    }
}

fn phase_grid(points: usize) -> Vec<f64> {
    (0..points).map(|i| 2.0 * PI * i as f64 / points as f64).collect()
}

fn wrap(phi: f64) -> f64 {
    (phi + PI).rem_euclid(2.0 * PI) - PI
}

/// Run one experiment, writing its datasets and reports into `out`.
pub fn run(cfg: &ExperimentConfig, seed: u64, base_dir: &Path, out: &mut Outputs) -> Result<()> {
    let name = cfg.output_name();
    match cfg {
        ExperimentConfig::ContrastScan(c) => contrast_scan(c, seed, &name, out),
        ExperimentConfig::PhaseScan(c) => phase_scan(c, seed, &name, out),
        ExperimentConfig::SensitivityCurve(c) => sensitivity_curve(c, &name, out),
        ExperimentConfig::SpectrumFit(c) => spectrum_fit(c, seed, base_dir, &name, out),
        ExperimentConfig::CoherenceScan(c) => coherence_scan(c, seed, base_dir, &name, out),
        ExperimentConfig::LightshiftFmScan(c) => lightshift_fm(c, &name, out),
        ExperimentConfig::LightshiftDetuningScan(c) => lightshift_detuning(c, seed, &name, out),
        ExperimentConfig::AllanAnalysis(c) => allan(c, seed, base_dir, &name, out),
    }
}

fn contrast_scan(c: &ContrastScan, seed: u64, name: &str, out: &mut Outputs) -> Result<()> {
    let taus = c.tau_arm_s.values();
    let grid: Vec<(usize, f64)> = c.n_values.iter().flat_map(|&n| taus.iter().map(move |&t| (n, t))).collect();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(k, &(n, tau))| -> Result<Vec<String>> {
            let seq = make_cpmg(n, tau, PhasePolicy::FixedAxis)?;
            let mut row = vec![
                n.to_string(),
                num(tau),
                num(2.0 * tau),
                num(predicted_contrast(n, tau, &c.spectrum)),
                num(sequence_contrast(&seq, &c.spectrum)),
            ];
            if let Some(sim) = &c.simulate {
                let seq = build_sequence(&seq.to_spec(), &sim.pulse)?;
                let settings = ScanSettings::uniform(sim.phase_points, sim.shots, sim.realizations, rng::child_seed(seed, k as u64));
                let opts = options(&sim.pulse, sim.area_error);
                let points = (0..settings.phi_rf.len())
                    .map(|i| {
                        simulate_scan_point(&seq, &qlockin_core::noise::SignalModel::none(), &c.spectrum, &settings, i, &opts)
                            .map(ScanPoint::from)
                    })
                    .collect::<qlockin_core::Result<Vec<_>>>()?;
                let fit = fit_fringe(&PhaseScan { points })?;
                row.extend([num(fit.contrast), num(fit.sigma_contrast), num(fit.phi), num(fit.sigma_phi)]);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut header = vec!["n", "tau_arm_s", "two_tau_arm_s", "contrast_model", "contrast_sequence"];
    if c.simulate.is_some() {
        header.extend(["contrast_fit", "sigma_contrast_fit", "phi_fit_rad", "sigma_phi_fit_rad"]);
    }
    out.csv(&format!("{name}.csv"), &header, &rows)?;
    Ok(())
}

#[derive(Serialize)]
struct FringeReport {
    contrast: f64,
    sigma_contrast: f64,
    phi_rad: f64,
    sigma_phi_rad: f64,
    chi2: f64,
    phase_undefined: bool,
    total_duration_s: f64,
    /// Time-averaged frequency shift implied by the phase wrapped to (−π, π].
    delta_f_hz: f64,
}

fn phase_scan(c: &PhaseScanConfig, seed: u64, name: &str, out: &mut Outputs) -> Result<()> {
    let seq = build_sequence(&c.sequence, &c.pulse)?;
    let quiet = ToneSpectrum::new(Vec::new(), 0.0, qlockin_core::noise::DEFAULT_KAPPA_HZ_PER_TESLA)?;
    let spectrum = c.spectrum.as_ref().unwrap_or(&quiet);
    let settings = ScanSettings::uniform(c.phase_points, c.shots, c.realizations, seed);
    let opts = options(&c.pulse, c.area_error);
    let outcomes = (0..settings.phi_rf.len())
        .into_par_iter()
        .map(|i| simulate_scan_point(&seq, &c.signal, spectrum, &settings, i, &opts))
        .collect::<qlockin_core::Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                num(o.phi_rf),
                o.shots.to_string(),
                o.successes.to_string(),
                num(o.successes as f64 / o.shots as f64),
                num(o.p_up),
            ]
        })
        .collect();
    out.csv(
        &format!("{name}.csv"),
        &["phi_rf_rad", "shots", "successes", "fraction_up", "p_up_model"],
        &rows,
    )?;
    let fit = fit_fringe(&PhaseScan {
        points: outcomes.into_iter().map(ScanPoint::from).collect(),
    })?;
    let t = seq.total_duration();
    out.json(
        &format!("{name}.fit.json"),
        &FringeReport {
            contrast: fit.contrast,
            sigma_contrast: fit.sigma_contrast,
            phi_rad: fit.phi,
            sigma_phi_rad: fit.sigma_phi,
            chi2: fit.chi2,
            phase_undefined: fit.phase_undefined,
            total_duration_s: t,
            delta_f_hz: phase_to_freq(wrap(fit.phi), t)?,
        },
    )?;
    Ok(())
}

fn sensitivity_curve(c: &SensitivityCurve, name: &str, out: &mut Outputs) -> Result<()> {
    let kappa = c.spectrum.kappa_hz_per_tesla;
    let rows = c
        .tau_arm_s
        .values()
        .into_iter()
        .map(|tau| -> Result<Vec<String>> {
            let t = (c.n + 1) as f64 * tau;
            let a = predicted_contrast(c.n, tau, &c.spectrum).abs();
            let (s, s_field) = match SensitivityPoint::new(a, t, kappa) {
                Ok(p) => (p.s, p.s_field),
                Err(Error::InfiniteSensitivity) => (f64::INFINITY, f64::INFINITY),
                Err(e) => return Err(e.into()),
            };
            Ok(vec![num(tau), num(t), num(a), num(s), num(s_field), num(sql(t)?)])
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv(
        &format!("{name}.csv"),
        &["tau_arm_s", "T_s", "contrast", "s_hz_per_rthz", "s_tesla_per_rthz", "sql_hz_per_rthz"],
        &rows,
    )?;
    Ok(())
}

fn read_columns(base_dir: &Path, rel: &str, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let path = base_dir.join(rel);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| input_error("input", format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| input_error("input", e.to_string()))?.clone();
    let idx = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == *c)
                .ok_or_else(|| input_error("input", format!("{}: missing column `{c}`", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| input_error("input", e.to_string()))?;
        let row = idx
            .iter()
            .map(|&i| {
                rec.get(i).and_then(|v| v.trim().parse::<f64>().ok()).ok_or_else(|| {
                    input_error("input", format!("{}: row {}: column {} is not a number", path.display(), line + 2, i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn spectrum_fit(c: &SpectrumFitConfig, seed: u64, base_dir: &Path, name: &str, out: &mut Outputs) -> Result<()> {
    let curve: Vec<CurvePoint> = match (&c.input, &c.synthetic) {
        (Some(path), _) => read_columns(base_dir, path, &["tau_arm_s", "contrast", "sigma"])?
            .into_iter()
            .map(|r| CurvePoint {
                tau_arm: r[0],
                contrast: r[1],
                sigma: r[2],
            })
            .collect(),
        (None, Some(s)) => {
            let sigma = s.noise_sigma;
            s.tau_arm_s
                .values()
                .into_iter()
                .enumerate()
                .map(|(k, tau)| {
                    let clean = predicted_contrast(c.n, tau, &s.spectrum);
                    let noise = if sigma > 0.0 {
                        Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng::stream(seed, k as u64))
                    } else {
                        0.0
                    };
                    CurvePoint {
                        tau_arm: tau,
                        contrast: clean + noise,
                        sigma: if sigma > 0.0 { sigma } else { 0.01 },
                    }
                })
                .collect()
        }
        (None, None) => unreachable!("validated"),
    };
    if curve.iter().any(|p| !(p.tau_arm > 0.0) || !(p.sigma > 0.0)) {
        return Err(input_error("input", "every row needs tau_arm_s > 0 and sigma > 0"));
    }
    let fit = fit_spectrum(&curve, c.n, &c.candidate_freqs_hz, c.kappa_hz_per_tesla)?;
    let fitted = fit.spectrum(c.kappa_hz_per_tesla)?;
    let rows: Vec<Vec<String>> = curve
        .iter()
        .map(|p| {
            vec![
                num(p.tau_arm),
                num(p.contrast),
                num(p.sigma),
                num(predicted_contrast(c.n, p.tau_arm, &fitted)),
            ]
        })
        .collect();
    out.csv(&format!("{name}.csv"), &["tau_arm_s", "contrast", "sigma", "contrast_fit"], &rows)?;
    out.json(&format!("{name}.fit.json"), &fit)?;
    Ok(())
}

fn coherence_scan(c: &CoherenceScan, seed: u64, base_dir: &Path, name: &str, out: &mut Outputs) -> Result<()> {
    let points: Vec<(f64, f64)> = match (&c.input, &c.synthetic) {
        (Some(path), _) => read_columns(base_dir, path, &["T_s", "contrast"])?
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect(),
        (None, Some(s)) => s
            .times_s
            .values()
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                let clean = s.a0 * (-t / s.tau_coh_s).exp();
                let e = if s.noise_level > 0.0 {
                    Normal::new(0.0, s.noise_level).expect("finite level").sample(&mut rng::stream(seed, k as u64))
                } else {
                    0.0
                };
                let a = match c.noise_model {
                    CoherenceNoise::Additive => clean + e,
                    CoherenceNoise::Multiplicative => clean * (1.0 + e),
                };
                (t, a)
            })
            .collect(),
        (None, None) => unreachable!("validated"),
    };
    let fit = fit_coherence_with(&points, c.noise_model)?;
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|&(t, a)| vec![num(t), num(a), num(fit.a0 * (-t / fit.tau).exp())])
        .collect();
    out.csv(&format!("{name}.csv"), &["T_s", "contrast", "contrast_fit"], &rows)?;
    out.json(&format!("{name}.fit.json"), &fit)?;
    Ok(())
}

fn lightshift_fm(c: &FmScan, name: &str, out: &mut Outputs) -> Result<()> {
    let scan = fm_scan(&c.laser, c.n, &c.tau_arm_s.values())?;
    let rows: Vec<Vec<String>> = scan
        .points
        .iter()
        .map(|p| vec![num(p.axis), num(0.5 / p.axis), num(p.phi), p.weak_coupling.to_string()])
        .collect();
    out.csv(&format!("{name}.csv"), &["tau_arm_s", "f_m_hz", "phi_rad", "weak_coupling"], &rows)?;
    Ok(())
}

fn lightshift_detuning(c: &DetuningScan, seed: u64, name: &str, out: &mut Outputs) -> Result<()> {
    let shots = c.shots.as_ref().map(|s| ShotModel {
        phi_rf: phase_grid(s.phase_points),
        shots: s.shots,
        seed,
    });
    let scan = detuning_scan(&c.laser, &c.detunings_hz.values(), c.n, c.tau_arm_s, shots.as_ref())?;
    let rows: Vec<Vec<String>> = scan
        .points
        .iter()
        .map(|p| {
            vec![
                num(p.axis),
                num(p.contrast),
                num(p.sigma_contrast),
                num(p.phi),
                num(p.sigma_phi),
                p.weak_coupling.to_string(),
                p.via_oracle.to_string(),
            ]
        })
        .collect();
    out.csv(
        &format!("{name}.csv"),
        &["detuning_hz", "contrast", "sigma_contrast", "phi_rad", "sigma_phi_rad", "weak_coupling", "via_oracle"],
        &rows,
    )?;
    if shots.is_some() {
        let long: Vec<Vec<String>> = scan
            .points
            .iter()
            .flat_map(|p| {
                p.phase_scan
                    .iter()
                    .flat_map(|s| s.points.iter())
                    .map(move |q| vec![num(p.axis), num(q.phi_rf), num(q.fraction())])
            })
            .collect();
        out.csv(&format!("{name}_phase_scans.csv"), &["detuning_hz", "phi_rf_rad", "p_up"], &long)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct AllanReport {
    samples: usize,
    interval_s: f64,
    detrended: bool,
    skipped_taus_s: Vec<f64>,
}

fn allan(c: &AllanAnalysis, seed: u64, base_dir: &Path, name: &str, out: &mut Outputs) -> Result<()> {
    let values: Vec<f64> = match (&c.input, &c.synthetic) {
        (Some(path), _) => read_columns(base_dir, path, &["value_hz"])?.into_iter().map(|r| r[0]).collect(),
        (None, Some(s)) => {
            let mut rng = rng::stream(seed, 0);
            let white = Normal::new(0.0, s.white_sigma_hz).map_err(|e| input_error("white_sigma_hz", e.to_string()))?;
            (0..s.samples)
                .map(|k| s.drift_hz_per_s * k as f64 * c.interval_s + white.sample(&mut rng))
                .collect()
        }
        (None, None) => unreachable!("validated"),
    };
    let mut series = AllanSeries {
        values,
        interval: c.interval_s,
    };
    if c.detrend {
        series = detrend_linear(&series)?;
    }
    let n = series.values.len();
    let taus = c.taus_s.clone().unwrap_or_else(|| {
        (0..)
            .map(|j| 1usize << j)
            .take_while(|m| 3 * m <= n)
            .map(|m| m as f64 * c.interval_s)
            .collect()
    });
    let result = allan_deviation(&series, &taus)?;
    for t in &result.skipped {
        eprintln!("notice: tau {t} s skipped (not a whole number of samples or longer than a third of the run)");
    }
    let rows: Vec<Vec<String>> = result.points.iter().map(|&(t, s)| vec![num(t), num(s)]).collect();
    out.csv(&format!("{name}.csv"), &["tau_s", "sigma_y_hz"], &rows)?;
    out.json(
        &format!("{name}.fit.json"),
        &AllanReport {
            samples: n,
            interval_s: c.interval_s,
            detrended: c.detrend,
            skipped_taus_s: result.skipped,
        },
    )?;
    Ok(())
}
