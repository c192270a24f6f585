//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr
//! (uncaptured) and the test fails if any criterion fails.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use clap::Parser;

use stochop::dynamics::{a_enstrophy, energy, Dynamics};
use stochop::ensemble::{
    diagonality, estimate_correlations, fit_all_widths, fit_width_model, peak_heights, run_ensemble,
    EnsembleConfig, SampledDraw, WidthModel,
};
use stochop::hald::{
    ensemble_mean_trajectory, full_trajectory, hamiltonian, op_trajectory, renormalized_hamiltonian,
    sample_conditional, HaldReducedState, Temperature,
};
use stochop::integrate::{adaptive_advance, IntegratorConfig};
use stochop::langevin::{stationary_variance_estimate, LangevinConfig};
use stochop::reduced::{run_reduced_ensemble, ReducedOptions};
use stochop::rng::{self, Purpose};
use stochop::spectral::{
    a_operator, sample_equilibrium, FlowParams, ModePartition, Region, SpectralField, WaveVector, C64,
};
use stochop::stats::mean_and_stderr;
use stochop_cli::compare::{compare_curves, Curve};
use stochop_cli::{run, Cli};

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, v: &Verdict, started: Instant) {
    let line = format!(
        "criterion {id} [{}] {name}: {} ({:.1}s)",
        if v.pass { "PASS" } else { "FAIL" },
        v.detail,
        started.elapsed().as_secs_f64()
    );
    let mut err = std::io::stderr();
    let _ = writeln!(err, "{line}");
}

fn desk_params() -> (ModePartition, FlowParams) {
    (ModePartition::new(2, 4).unwrap(), FlowParams::new(1.0, 1.0).unwrap())
}

fn grid(t_end: f64, dt: f64) -> Vec<f64> {
    let n = (t_end / dt).round() as usize;
    (0..=n).map(|j| j as f64 * dt).collect()
}

fn hald_conservation() -> (Verdict, f64) {
    let t = Temperature::new(1.0).unwrap();
    let cfg = IntegratorConfig {
        tol: 1e-8,
        ..Default::default()
    };
    let times = grid(50.0, 0.5);
    let r0 = HaldReducedState::new(1.0, 1.0);
    let s0 = sample_conditional(&r0, t, &mut rng::stream(1, Purpose::Setup, 0));
    let full = full_trajectory(&s0, &times, &cfg).unwrap();
    let h0 = hamiltonian(&s0);
    let full_drift = full
        .iter()
        .map(|s| (hamiltonian(s) - h0).abs() / h0)
        .fold(0.0, f64::max);
    let op = op_trajectory(&r0, t, &times, &cfg).unwrap();
    let g0 = renormalized_hamiltonian(&r0, t);
    let op_drift = op
        .iter()
        .map(|r| (renormalized_hamiltonian(r, t) - g0).abs() / g0)
        .fold(0.0, f64::max);
    (
        Verdict {
            pass: full_drift < 1e-6 && op_drift < 1e-6,
            detail: format!("full H drift {full_drift:.2e}, OP renormalized H drift {op_drift:.2e} (< 1e-6)"),
        },
        op_drift,
    )
}

fn hald_decay(op_drift: f64) -> Verdict {
    let t = Temperature::new(1.0).unwrap();
    let cfg = IntegratorConfig {
        tol: 1e-8,
        ..Default::default()
    };
    let times = grid(40.0, 0.5);
    let mean = ensemble_mean_trajectory(&HaldReducedState::new(1.0, 1.0), t, 1000, &times, 2, &cfg).unwrap();
    let amp = mean.amplitude();
    let a5 = amp[10];
    let a40 = amp[80];
    let ratio = a40 / a5;
    Verdict {
        pass: ratio < 0.5 && op_drift < 1e-6,
        detail: format!(
            "mean amplitude t=5 {a5:.4}, t=40 {a40:.4}, ratio {ratio:.3} (< 0.5); OP drift {op_drift:.1e}"
        ),
    }
}

fn langevin_balance() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, &(gamma, q)) in [(1.0, 2.0), (2.0, 4.0), (0.5, 2.0)].iter().enumerate() {
        let cfg = LangevinConfig {
            gamma,
            noise_q: q,
            t_target: 1.0,
            h: 1e-3,
            t_end: 20.0 / gamma,
            n_ensemble: 1000,
        };
        let est = stationary_variance_estimate(&cfg, 30 + i as u64).unwrap();
        let want = q / (2.0 * gamma);
        let z = (est.variance - want).abs() / est.stderr;
        pass &= z < 4.0;
        parts.push(format!("({gamma},{q}): {:.4} vs {want} ({z:.2} SE)", est.variance));
    }
    Verdict {
        pass,
        detail: parts.join("; "),
    }
}

fn sampler_covariance() -> Verdict {
    let (part, params) = desk_params();
    let lat = part.lattice();
    let n = 10_000;
    let mut rng = rng::stream(4, Purpose::Setup, 0);
    let draws: Vec<SpectralField> = (0..n)
        .map(|_| sample_equilibrium(&lat, &part, &params, Region::All, &mut rng))
        .collect();
    let mut worst = 0.0f64;
    let mut pass = true;
    for &k in lat.modes() {
        let v = params.equilibrium_variance(k);
        let kv = k.as_f64();
        let k2 = k.norm_sq();
        for (a, b) in [(0, 0), (1, 1), (0, 1)] {
            let want = v * (if a == b { 1.0 } else { 0.0 } - kv[a] * kv[b] / k2);
            let xs: Vec<f64> = draws
                .iter()
                .map(|f| {
                    let u = f.vector(k);
                    (u[a] * u[b].conj()).re
                })
                .collect();
            let (m, se) = mean_and_stderr(&xs);
            if se == 0.0 {
                pass &= (m - want).abs() < 1e-15;
            } else {
                let z = (m - want).abs() / se;
                worst = worst.max(z);
                pass &= z < 4.0;
            }
        }
        let per_mode: Vec<f64> = draws
            .iter()
            .map(|f| {
                let a = a_operator(k, &params);
                k2 * a * a * f.amplitude(k).norm_sqr()
            })
            .collect();
        let (m, se) = mean_and_stderr(&per_mode);
        let z = (m - params.temperature).abs() / se;
        worst = worst.max(z);
        pass &= z < 4.0;
    }
    Verdict {
        pass,
        detail: format!("{} modes, N = {n}, worst deviation {worst:.2} SE (< 4)", lat.len()),
    }
}

/// Vorticity-form evaluation `d(A xi)/dt = -u.grad(A xi)`, returned as `dw/dt`
/// through `w_k = i xi_k / |k|`.
fn vorticity_oracle(f: &SpectralField, params: &FlowParams) -> Vec<C64> {
    let lat = f.lattice();
    let i = C64::new(0.0, 1.0);
    let xi = |k: WaveVector| {
        let u = f.vector(k);
        i * (u[1] * k.k1 as f64 - u[0] * k.k2 as f64)
    };
    let full: Vec<WaveVector> = lat.full_modes().collect();
    lat.modes()
        .iter()
        .map(|&k| {
            let mut adv = C64::new(0.0, 0.0);
            for &p in &full {
                let q = k - p;
                if !lat.contains(q) {
                    continue;
                }
                let up = f.vector(p);
                let q_dot_u = up[0] * q.k1 as f64 + up[1] * q.k2 as f64;
                adv += i * q_dot_u * a_operator(q, params) * xi(q);
            }
            i * (-adv / a_operator(k, params)) / k.norm()
        })
        .collect()
}

fn dynamics_correctness() -> Verdict {
    let (part, params) = desk_params();
    let d = Dynamics::new(part, params);
    let lat = part.lattice();
    let field = |seed: u64| sample_equilibrium(&lat, &part, &params, Region::All, &mut rng::stream(seed, Purpose::Setup, 0));

    let mut decomposition = 0.0f64;
    for seed in 0..100 {
        let f = field(1000 + seed);
        let dec = d.rhs_decomposition(&f);
        let sum = dec.g1.axpy(1.0, &dec.g2).axpy(1.0, &dec.g3);
        decomposition = decomposition.max(sum.max_abs_diff(&d.full_rhs(&f).restricted(&part, Region::Resolved)));
    }

    let cfg = IntegratorConfig {
        tol: 1e-8,
        ..Default::default()
    };
    let mut drift = 0.0f64;
    for seed in 0..5 {
        let f0 = field(2000 + seed);
        let e0 = energy(&f0, &params);
        let z0 = a_enstrophy(&f0, &params);
        let mut sys = |_t: f64, y: &[f64], dy: &mut [f64]| {
            let mut s = Vec::new();
            d.full_rhs_state(y, &mut s, dy);
        };
        let tr = adaptive_advance(&mut sys, 0.0, &f0.to_state(), 10.0, &grid(10.0, 0.5), &cfg).unwrap();
        for y in &tr.states {
            let f = SpectralField::from_state(lat.clone(), y).unwrap();
            drift = drift
                .max((energy(&f, &params) - e0).abs() / e0)
                .max((a_enstrophy(&f, &params) - z0).abs() / z0);
        }
    }

    let mut oracle = 0.0f64;
    for seed in 0..20 {
        let f = field(3000 + seed);
        let rhs = d.full_rhs(&f);
        for (a, b) in rhs.amplitudes().iter().zip(vorticity_oracle(&f, &params)) {
            oracle = oracle.max((a - b).norm());
        }
    }
    Verdict {
        pass: decomposition < 1e-12 && drift < 1e-6 && oracle < 1e-12,
        detail: format!(
            "(a) decomposition {decomposition:.1e} (< 1e-12); (b) invariant drift {drift:.1e} (< 1e-6); (c) vorticity oracle {oracle:.1e} (< 1e-12)"
        ),
    }
}

fn correlation_config(partition: ModePartition, initial: SpectralField, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        n_ensemble: 500,
        output_times: grid(10.0, 0.05),
        master_seed: seed,
        partition,
        params: FlowParams::new(1.0, 1.0).unwrap(),
        initial_resolved: initial,
        integrator: IntegratorConfig {
            tol: 1e-6,
            ..Default::default()
        },
        sampled_draw: SampledDraw::Equilibrium,
    }
}

fn correlation_structure() -> (Verdict, WidthModel) {
    let (part, params) = desk_params();
    let lat = part.lattice();
    let eq_part = ModePartition::new(0, 4).unwrap();
    let eq = run_ensemble(&correlation_config(eq_part, SpectralField::zeros(lat.clone()), 60)).unwrap();
    let h = eq.sampled_histories(&eq_part).unwrap();
    drop(eq);
    let table = estimate_correlations(&h, 100).unwrap();
    let diag = diagonality(&h, 0).unwrap();
    let peaks = peak_heights(&table, &params);
    let worst_peak = peaks.iter().map(|p| p.z()).fold(0.0, f64::max);
    let (widths, failed) = fit_all_widths(&table);
    let eq_model = fit_width_model(&widths).unwrap();

    let initial = sample_equilibrium(&lat, &part, &params, Region::Resolved, &mut rng::stream(61, Purpose::Setup, 0));
    let cond = run_ensemble(&correlation_config(part, initial, 62)).unwrap();
    let hc = cond.sampled_histories(&part).unwrap();
    drop(cond);
    let ctable = estimate_correlations(&hc, 100).unwrap();
    let (cwidths, cfailed) = fit_all_widths(&ctable);
    let cond_model = fit_width_model(&cwidths).unwrap();
    let c_rel = (cond_model.c / eq_model.c - 1.0).abs();

    // Diagnostic only: spread over the modes that are sampled at desk scale.
    let desk_sampled: Vec<(WaveVector, f64)> = eq_model
        .widths
        .iter()
        .copied()
        .filter(|(k, _)| k.norm_inf() > part.m())
        .collect();
    let desk_cov = fit_width_model(&desk_sampled).map_or(f64::NAN, |m| m.residual);
    let outliers: Vec<String> = eq_model
        .widths
        .iter()
        .filter(|(k, s)| (s * k.norm() / eq_model.c - 1.0).abs() > 0.25)
        .map(|(k, s)| format!("{k}:{:.2}", s * k.norm()))
        .collect();
    let checks = [
        diag.max_z < 4.0,
        worst_peak < 4.0,
        eq_model.residual < 0.25,
        c_rel < 0.3,
        failed.is_empty() && cfailed.is_empty(),
    ];
    (
        Verdict {
            pass: checks.iter().all(|&c| c),
            detail: format!(
                "cross-k max {:.2} SE (< 4); peak max {:.2} SE (< 4); equilibrium c {:.4}, CoV {:.3} (< 0.25; sigma|k| outliers {}; CoV over |k|inf > 2 only {:.3}, not asserted); conditioned c {:.4}, off by {:.1}% (< 30%); failed fits {}",
                diag.max_z,
                worst_peak,
                eq_model.c,
                eq_model.residual,
                if outliers.is_empty() { "none".to_string() } else { outliers.join(" ") },
                desk_cov,
                cond_model.c,
                100.0 * c_rel,
                failed.len() + cfailed.len()
            ),
        },
        eq_model,
    )
}

fn curve(c: &stochop::ensemble::AEnstrophyCurve) -> Curve {
    Curve {
        times: c.times.clone(),
        values: c.of_mean.clone(),
        stderr: c.of_mean_stderr.clone(),
    }
}

fn decay_tracking(width: &WidthModel) -> Verdict {
    let (part, params) = desk_params();
    let lat = part.lattice();
    let initial = sample_equilibrium(&lat, &part, &params, Region::Resolved, &mut rng::stream(70, Purpose::Setup, 0));
    let cfg = EnsembleConfig {
        n_ensemble: 200,
        output_times: grid(3.0, 0.05),
        master_seed: 71,
        partition: part,
        params,
        initial_resolved: initial,
        integrator: IntegratorConfig {
            tol: 1e-6,
            ..Default::default()
        },
        sampled_draw: SampledDraw::Equilibrium,
    };
    let full = curve(&run_ensemble(&cfg).unwrap().a_enstrophy);
    let reduced = curve(&run_reduced_ensemble(&cfg, width, &ReducedOptions::default()).unwrap().a_enstrophy);
    let Some(_) = full.decay_index(0.2) else {
        return Verdict {
            pass: false,
            detail: "full-MC curve never decays by 20% within t = 3".into(),
        };
    };
    let rep = compare_curves(&full, &reduced, 0.1, Some(0.2), 0.5).unwrap();
    let monotone = rep.reference_rise.is_none() && rep.candidate_rise.is_none();

    // Paper-scale preset: must run and produce the same report; not asserted.
    let paper = ModePartition::new(5, 10).unwrap();
    let plat = paper.lattice();
    let pcfg = EnsembleConfig {
        n_ensemble: 4,
        output_times: grid(0.5, 0.05),
        master_seed: 72,
        partition: paper,
        params,
        initial_resolved: sample_equilibrium(&plat, &paper, &params, Region::Resolved, &mut rng::stream(72, Purpose::Setup, 0)),
        integrator: cfg.integrator,
        sampled_draw: SampledDraw::Equilibrium,
    };
    let pfull = curve(&run_ensemble(&pcfg).unwrap().a_enstrophy);
    let pred = curve(&run_reduced_ensemble(&pcfg, width, &ReducedOptions::default()).unwrap().a_enstrophy);
    let prep = compare_curves(&pfull, &pred, 0.1, Some(0.2), 0.5).unwrap();

    Verdict {
        pass: rep.passed() && monotone,
        detail: format!(
            "T* = {:.2}; max deviation {:.1}% at t = {:.2} (< 10%); decay full {:.3}, reduced {:.3}; monotone after 0.5 within 2 SE: {}; paper preset (N=4, t<=0.5, not asserted): deviation {:.1}%, decay full {:.3}, reduced {:.3}",
            rep.t_end,
            100.0 * rep.max_relative_deviation,
            rep.at_time,
            rep.reference_decay,
            rep.candidate_decay,
            monotone,
            100.0 * prep.max_relative_deviation,
            prep.reference_decay,
            prep.candidate_decay
        ),
    }
}

fn cli(args: &[&str], out: &Path, workers: usize) -> std::collections::BTreeMap<String, String> {
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    argv.insert(0, "stochop".into());
    argv.extend(["--out".into(), out.display().to_string(), "--workers".into(), workers.to_string()]);
    run(Cli::try_parse_from(&argv).unwrap())
        .unwrap_or_else(|e| panic!("{args:?}: {e}"))
        .checksums
}

fn determinism(c: f64) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let c_arg = format!("{c}");
    let commands: Vec<Vec<&str>> = vec![
        vec!["hald", "--ensemble", "200", "--set", "t_end=10"],
        vec!["langevin", "--ensemble", "200", "--set", "t_end=10"],
        vec!["euler-mc", "--ensemble", "16", "--set", "t_end=1"],
        vec!["euler-correlations", "--equilibrium", "--ensemble", "16", "--set", "t_end=2", "--set", "max_lag=40"],
        vec!["euler-sop", "--c", &c_arg, "--ensemble", "16", "--set", "t_end=1"],
    ];
    let mut mismatches = Vec::new();
    for (i, args) in commands.iter().enumerate() {
        let one = dir.path().join(format!("{i}-w1"));
        let four = dir.path().join(format!("{i}-w4"));
        let replay = dir.path().join(format!("{i}-replay"));
        let a = cli(args, &one, 1);
        let b = cli(args, &four, 4);
        let config = one.join("config.txt").display().to_string();
        let r = cli(&[args[0], "--config", &config], &replay, 4);
        if a != b || a != r || a.is_empty() {
            mismatches.push(args[0]);
        }
    }
    Verdict {
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{} commands: checksums identical for workers 1 and 4 and for manifest replay", commands.len())
        } else {
            format!("checksum mismatch in {}", mismatches.join(", "))
        },
    }
}

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    let mut record = |id: u32, name: &str, started: Instant, v: Verdict| {
        report(id, name, &v, started);
        if !v.pass {
            failed.push(id);
        }
    };

    let t = Instant::now();
    let (v, op_drift) = hald_conservation();
    record(1, "Hald conservation pair", t, v);

    let t = Instant::now();
    record(2, "Hald mean decay vs OP non-decay", t, hald_decay(op_drift));

    let t = Instant::now();
    record(3, "Langevin fluctuation-dissipation", t, langevin_balance());

    let t = Instant::now();
    record(4, "spectral sampler covariance", t, sampler_covariance());

    let t = Instant::now();
    record(5, "dynamics correctness", t, dynamics_correctness());

    let t = Instant::now();
    let (v, width) = correlation_structure();
    record(6, "correlation structure", t, v);

    let t = Instant::now();
    record(7, "A-enstrophy decay tracking", t, decay_tracking(&width));

    let t = Instant::now();
    record(8, "determinism", t, determinism(width.c));

    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
