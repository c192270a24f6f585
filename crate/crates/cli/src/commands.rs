//! Experiment drivers. Each reads its parameters from [`Settings`], writes
//! CSVs into the output directory and returns a JSON summary.

use std::io::BufReader;

use serde_json::{json, Value};

use stochop::dynamics::SigmaArgument;
use stochop::ensemble::{
    diagonality, estimate_correlations, fit_all_widths, fit_width_model, peak_heights, run_ensemble,
    AEnstrophyCurve, CorrelationTable, EnsembleConfig, EnsembleResult, SampledDraw, WidthModel,
};
use stochop::hald::{
    ensemble_mean_trajectory, galerkin_trajectory, op_trajectory, renormalized_hamiltonian,
    HaldReducedState, Temperature,
};
use stochop::integrate::IntegratorConfig;
use stochop::langevin::{stationary_variance_estimate, variance_curve, LangevinConfig};
use stochop::reduced::{run_reduced_ensemble, ReducedOptions};
use stochop::rng::{self, Purpose};
use stochop::spectral::{
    read_snapshot, sample_equilibrium, write_snapshot, FlowParams, ModePartition, Region, SpectralField,
    WaveVector,
};

use crate::output::{num, read_numeric_csv, Csv, OutputDir};
use crate::settings::Settings;
use crate::Failure;

/// What a command reports back besides its files.
#[derive(Debug)]
pub struct CommandOutput {
    pub seed: Option<u64>,
    pub results: Value,
    pub summary: String,
}

/// Uniform grid `0, dt, ..., t_end`; `t_end` must be a multiple of `dt`.
pub fn time_grid(t_end: f64, dt: f64) -> Result<Vec<f64>, Failure> {
    if !(t_end >= 0.0) || !(dt > 0.0) {
        return Err(Failure::Usage("t_end must be >= 0 and dt_out > 0".into()));
    }
    let n = (t_end / dt).round();
    if (n * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return Err(Failure::Usage(format!("t_end {t_end} is not a multiple of dt_out {dt}")));
    }
    Ok((0..=n as usize).map(|j| j as f64 * dt).collect())
}

fn integrator(s: &mut Settings, default_tol: f64) -> Result<IntegratorConfig, Failure> {
    let d = IntegratorConfig::default();
    let cfg = IntegratorConfig {
        tol: s.get("tol", default_tol)?,
        h_init: s.get("h_init", d.h_init)?,
        h_min: s.get("h_min", d.h_min)?,
        h_max: s.get("h_max", d.h_max)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensemble_size(s: &mut Settings, default: usize) -> Result<usize, Failure> {
    let n = s.get("ensemble", default)?;
    if n == 0 {
        return Err(Failure::Usage("ensemble must be at least 1".into()));
    }
    Ok(n)
}

pub fn hald(s: &mut Settings, out: &mut OutputDir) -> Result<CommandOutput, Failure> {
    let temperature = Temperature::new(s.get("temperature", 1.0)?)?;
    let r0 = HaldReducedState::new(s.get("q1", 1.0)?, s.get("p1", 1.0)?);
    let n = ensemble_size(s, 1000)?;
    let times = time_grid(s.get("t_end", 40.0)?, s.get("dt_out", 0.5)?)?;
    let cfg = integrator(s, 1e-8)?;
    let seed = s.get("seed", 0u64)?;

    let mean = ensemble_mean_trajectory(&r0, temperature, n, &times, seed, &cfg)?;
    let op = op_trajectory(&r0, temperature, &times, &cfg)?;
    let galerkin = galerkin_trajectory(&r0, &times, &cfg)?;
    let amplitude = mean.amplitude();

    let mut csv = Csv::new(&["t", "mean_q1", "mean_p1", "stderr_q1", "stderr_p1", "amplitude"]);
    for j in 0..times.len() {
        csv.nums(&[
            times[j],
            mean.mean_q1[j],
            mean.mean_p1[j],
            mean.stderr_q1[j],
            mean.stderr_p1[j],
            amplitude[j],
        ]);
    }
    out.write("hald_mean.csv", &csv.into_string())?;

    let mut csv = Csv::new(&["t", "q1", "p1", "h_renorm"]);
    let h0 = renormalized_hamiltonian(&op[0], temperature);
    let mut op_drift = 0.0f64;
    for (t, r) in times.iter().zip(&op) {
        let h = renormalized_hamiltonian(r, temperature);
        op_drift = op_drift.max((h - h0).abs() / h0.abs());
        csv.nums(&[*t, r.q1, r.p1, h]);
    }
    out.write("hald_op.csv", &csv.into_string())?;

    let mut csv = Csv::new(&["t", "q1", "p1", "energy"]);
    for (t, r) in times.iter().zip(&galerkin) {
        csv.nums(&[*t, r.q1, r.p1, 0.5 * (r.q1 * r.q1 + r.p1 * r.p1)]);
    }
    out.write("hald_galerkin.csv", &csv.into_string())?;

    let at = |t: f64| times.iter().position(|&x| (x - t).abs() < 1e-9).map(|j| amplitude[j]);
    let ratio = match (at(5.0), times.last().and_then(|&t| at(t))) {
        (Some(a5), Some(a_end)) => Some(a_end / a5),
        _ => None,
    };
    let results = json!({
        "mean_amplitude_initial": amplitude[0],
        "mean_amplitude_final": amplitude[amplitude.len() - 1],
        "mean_amplitude_ratio_final_over_t5": ratio,
        "op_renormalized_hamiltonian_max_relative_drift": op_drift,
    });
    let summary = format!(
        "mean amplitude: {} -> {}\nOP renormalized Hamiltonian drift: {:.3e}\n",
        num(amplitude[0]),
        num(amplitude[amplitude.len() - 1]),
        op_drift
    );
    Ok(CommandOutput {
        seed: Some(seed),
        results,
        summary,
    })
}

pub fn langevin(s: &mut Settings, out: &mut OutputDir) -> Result<CommandOutput, Failure> {
    let gamma: f64 = s.get("gamma", 1.0)?;
    let noise_q: f64 = s.get("noise_q", 2.0)?;
    let default_end = if gamma > 0.0 { 20.0 / gamma } else { 20.0 };
    let cfg = LangevinConfig {
        gamma,
        noise_q,
        t_target: s.get("temperature", 1.0)?,
        h: s.get("h", 1e-3)?,
        t_end: s.get("t_end", default_end)?,
        n_ensemble: ensemble_size(s, 1000)?,
    };
    let u0 = s.get("u0", 0.0)?;
    let dt_out: f64 = s.get("dt_out", 0.1)?;
    let seed = s.get("seed", 0u64)?;
    cfg.validate()?;
    let stride = (dt_out / cfg.h).round().max(1.0) as usize;

    let curve = variance_curve(&cfg, u0, stride, seed)?;
    let mut csv = Csv::new(&["t", "variance", "stderr"]);
    for j in 0..curve.times.len() {
        csv.nums(&[curve.times[j], curve.variance[j], curve.stderr[j]]);
    }
    out.write("langevin_variance.csv", &csv.into_string())?;

    let stationary = if gamma > 0.0 && cfg.t_end >= 10.0 / gamma {
        Some(stationary_variance_estimate(&cfg, seed)?)
    } else {
        None
    };
    let (results, summary) = match stationary {
        Some(est) => {
            let expected = cfg.stationary_variance();
            (
                json!({
                    "stationary_variance": est.variance,
                    "stationary_variance_stderr": est.stderr,
                    "expected_variance": expected,
                    "target_temperature": cfg.t_target,
                    "kurtosis_ratio": est.kurtosis_ratio,
                    "kurtosis_ratio_stderr": est.kurtosis_stderr,
                }),
                format!(
                    "stationary variance: {} +- {} (4 SE: [{}, {}])\nexpected noise_q/(2 gamma): {}\n",
                    num(est.variance),
                    num(est.stderr),
                    num(est.variance - 4.0 * est.stderr),
                    num(est.variance + 4.0 * est.stderr),
                    num(expected)
                ),
            )
        }
        None => (
            json!({ "stationary_variance": null }),
            "no stationary estimate (needs gamma > 0 and t_end >= 10/gamma)\n".to_string(),
        ),
    };
    Ok(CommandOutput {
        seed: Some(seed),
        results,
        summary,
    })
}

/// Parameters shared by the Euler-alpha commands.
pub struct EulerRun {
    pub cfg: EnsembleConfig,
    pub max_lag: usize,
}

pub fn euler_setup(s: &mut Settings, out: &mut OutputDir, equilibrium: bool) -> Result<EulerRun, Failure> {
    let preset: String = s.get("preset", "desk".to_string())?;
    let (m_default, sb_default, n_default) = match preset.as_str() {
        "desk" => (2, 4, 200),
        "paper" => (5, 10, 100),
        other => return Err(Failure::Usage(format!("unknown preset {other:?} (desk or paper)"))),
    };
    let m = if equilibrium { 0 } else { s.get("m", m_default)? };
    let sampled_bound = s.get("sampled_bound", sb_default)?;
    let partition = ModePartition::new(m, sampled_bound)?;
    let params = FlowParams::new(s.get("a", 1.0)?, s.get("temperature", 1.0)?)?;
    let n_ensemble = ensemble_size(s, n_default)?;
    let output_times = time_grid(s.get("t_end", 10.0)?, s.get("dt_out", 0.05)?)?;
    let integrator = integrator(s, 1e-6)?;
    let master_seed = s.get("seed", 0u64)?;
    let max_lag = s.get("max_lag", 100usize)?.min(output_times.len() - 1);
    let lattice = partition.lattice();
    let initial_resolved = match s.get_opt::<String>("initial")? {
        Some(path) => {
            let file = std::fs::File::open(&path)
                .map_err(|e| Failure::Usage(format!("cannot open {path}: {e}")))?;
            let f = read_snapshot(BufReader::new(file), sampled_bound)?;
            if !f.supported_in(&partition, Region::Resolved) {
                return Err(Failure::Usage("initial field has amplitude outside the resolved region".into()));
            }
            f
        }
        None if m == 0 => SpectralField::zeros(lattice.clone()),
        None => {
            let mut rng = rng::stream(master_seed, Purpose::Setup, 0);
            sample_equilibrium(&lattice, &partition, &params, Region::Resolved, &mut rng)
        }
    };
    let mut snapshot = Vec::new();
    write_snapshot(&initial_resolved, &mut snapshot)?;
    out.write("initial_resolved.csv", &String::from_utf8(snapshot).expect("snapshot is ASCII"))?;
    Ok(EulerRun {
        cfg: EnsembleConfig {
            n_ensemble,
            output_times,
            master_seed,
            partition,
            params,
            initial_resolved,
            integrator,
            sampled_draw: SampledDraw::Equilibrium,
        },
        max_lag,
    })
}

pub const AENSTROPHY_HEADER: [&str; 5] = [
    "t",
    "a_enstrophy_of_mean",
    "stderr",
    "mean_a_enstrophy",
    "mean_a_enstrophy_stderr",
];

fn aenstrophy_csv(curve: &AEnstrophyCurve) -> String {
    let mut csv = Csv::new(&AENSTROPHY_HEADER);
    for j in 0..curve.times.len() {
        csv.nums(&[
            curve.times[j],
            curve.of_mean[j],
            curve.of_mean_stderr[j],
            curve.mean_of_norm[j],
            curve.mean_of_norm_stderr[j],
        ]);
    }
    csv.into_string()
}

fn mean_fields_csv(res: &EnsembleResult) -> String {
    let mut csv = Csv::new(&["t", "k1", "k2", "re_u1", "im_u1", "re_u2", "im_u2"]);
    for (t, f) in res.times.iter().zip(&res.mean) {
        for (k, u) in f.vectors() {
            csv.row(&[
                num(*t),
                k.k1.to_string(),
                k.k2.to_string(),
                num(u[0].re),
                num(u[0].im),
                num(u[1].re),
                num(u[1].im),
            ]);
        }
    }
    csv.into_string()
}

fn correlations_csv(table: &CorrelationTable) -> String {
    let mut csv = Csv::new(&["k1", "k2", "tau", "re_C", "im_C", "stderr"]);
    for (m, k) in table.modes.iter().enumerate() {
        for (lag, c) in table.c[m].iter().enumerate() {
            csv.row(&[
                k.k1.to_string(),
                k.k2.to_string(),
                num(lag as f64 * table.dt),
                num(c.re),
                num(c.im),
                num(table.stderr[m][lag]),
            ]);
        }
    }
    csv.into_string()
}

fn widths_csv(widths: &[(WaveVector, f64)]) -> String {
    let mut csv = Csv::new(&["k1", "k2", "sigma", "sigma_times_k"]);
    for (k, sigma) in widths {
        csv.row(&[k.k1.to_string(), k.k2.to_string(), num(*sigma), num(sigma * k.norm())]);
    }
    csv.into_string()
}

fn curve_summary(curve: &AEnstrophyCurve) -> (Value, String) {
    let last = curve.times.len() - 1;
    (
        json!({
            "a_enstrophy_of_mean_initial": curve.of_mean[0],
            "a_enstrophy_of_mean_final": curve.of_mean[last],
        }),
        format!(
            "A-enstrophy of mean: {} -> {} (t = {})\n",
            num(curve.of_mean[0]),
            num(curve.of_mean[last]),
            curve.times[last]
        ),
    )
}

fn correlations(res: &EnsembleResult, run: &EulerRun) -> Result<Option<CorrelationTable>, Failure> {
    if run.cfg.n_ensemble < 2 || run.max_lag == 0 {
        return Ok(None);
    }
    let histories = res.sampled_histories(&run.cfg.partition)?;
    Ok(Some(estimate_correlations(&histories, run.max_lag)?))
}

pub fn euler_mc(s: &mut Settings, out: &mut OutputDir) -> Result<CommandOutput, Failure> {
    let run = euler_setup(s, out, false)?;
    let res = run_ensemble(&run.cfg)?;
    out.write("aenstrophy_full.csv", &aenstrophy_csv(&res.a_enstrophy))?;
    out.write("mean_fields.csv", &mean_fields_csv(&res))?;
    let (mut results, mut summary) = curve_summary(&res.a_enstrophy);
    if let Some(table) = correlations(&res, &run)? {
        out.write("correlations.csv", &correlations_csv(&table))?;
        results["correlation_modes"] = json!(table.modes.len());
        summary.push_str(&format!("correlations: {} sampled modes\n", table.modes.len()));
    }
    Ok(CommandOutput {
        seed: Some(run.cfg.master_seed),
        results,
        summary,
    })
}

pub fn euler_correlations(s: &mut Settings, out: &mut OutputDir) -> Result<CommandOutput, Failure> {
    let equilibrium = s.get("equilibrium", false)?;
    let run = euler_setup(s, out, equilibrium)?;
    if run.cfg.n_ensemble < 2 {
        return Err(Failure::Usage("correlation estimates need at least 2 realizations".into()));
    }
    let res = run_ensemble(&run.cfg)?;
    let histories = res.sampled_histories(&run.cfg.partition)?;
    let table = estimate_correlations(&histories, run.max_lag)?;
    out.write("correlations.csv", &correlations_csv(&table))?;
    let (widths, failed) = fit_all_widths(&table);
    for e in &failed {
        eprintln!("warning: {e}");
    }
    out.write("widths.csv", &widths_csv(&widths))?;
    let model = fit_width_model(&widths)
        .map_err(|_| Failure::Numerical(format!("only {} modes could be fitted", widths.len())))?;
    let peaks = peak_heights(&table, &run.cfg.params);
    let worst_peak = peaks.iter().map(|p| p.z()).fold(0.0, f64::max);
    let diag = diagonality(&histories, 0)?;
    let (st_min, st_max) = table
        .stationarity
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let results = json!({
        "c": model.c,
        "residual": model.residual,
        "fitted_modes": widths.len(),
        "failed_modes": failed.len(),
        "peak_max_z": worst_peak,
        "cross_correlation_max_z": diag.max_z,
        "cross_correlation_max_normalized": diag.max_normalized,
        "stationarity_ratio_min": st_min,
        "stationarity_ratio_max": st_max,
    });
    let summary = format!(
        "c = {}\nresidual (coefficient of variation of sigma |k|) = {:.4}\nfitted modes: {} (failed: {})\nworst peak-height deviation: {:.2} SE\nworst cross-correlation: {:.2} SE\n",
        num(model.c),
        model.residual,
        widths.len(),
        failed.len(),
        worst_peak,
        diag.max_z
    );
    Ok(CommandOutput {
        seed: Some(run.cfg.master_seed),
        results,
        summary,
    })
}

fn width_model(s: &mut Settings) -> Result<WidthModel, Failure> {
    if let Some(c) = s.get_opt::<f64>("c")? {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Failure::Usage(format!("c must be finite and non-negative, got {c}")));
        }
        return Ok(WidthModel::constant(c));
    }
    if let Some(path) = s.get_opt::<String>("widths")? {
        let (header, rows) = read_numeric_csv(std::path::Path::new(&path))?;
        if header.len() < 3 || header[..3] != ["k1", "k2", "sigma"] {
            return Err(Failure::Usage(format!("{path}: expected columns k1,k2,sigma")));
        }
        let widths: Vec<(WaveVector, f64)> = rows
            .iter()
            .map(|r| (WaveVector::new(r[0] as i32, r[1] as i32), r[2]))
            .collect();
        return Ok(fit_width_model(&widths)?);
    }
    Err(Failure::Usage("a width model is required: set c or widths".into()))
}

pub fn euler_sop(s: &mut Settings, out: &mut OutputDir) -> Result<CommandOutput, Failure> {
    let model = width_model(s)?;
    let sigma_argument = match s.get("sigma_argument", "resolved".to_string())?.as_str() {
        "resolved" => SigmaArgument::Resolved,
        "sampled" => SigmaArgument::Sampled,
        other => return Err(Failure::Usage(format!("sigma_argument must be resolved or sampled, got {other:?}"))),
    };
    let options = ReducedOptions {
        noise: s.get("noise", true)?,
        damping: s.get("damping", true)?,
        sigma_argument,
        grid_dt: s.get_opt("grid_dt")?,
    };
    let run = euler_setup(s, out, false)?;
    let res = run_reduced_ensemble(&run.cfg, &model, &options)?;
    out.write("aenstrophy_reduced.csv", &aenstrophy_csv(&res.a_enstrophy))?;
    out.write("mean_fields.csv", &mean_fields_csv(&res))?;
    let (mut results, summary) = curve_summary(&res.a_enstrophy);
    results["c"] = json!(model.c);
    Ok(CommandOutput {
        seed: Some(run.cfg.master_seed),
        results,
        summary,
    })
}
