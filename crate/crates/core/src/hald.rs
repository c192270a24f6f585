//! The two-oscillator Hald system
//! `H = (q1^2 + q2^2 + p1^2 + p2^2 + p1^2 p2^2) / 2`
//! and its reductions to the first oscillator.
//!
//! The Galerkin reduction drops oscillator 2 entirely. First-order optimal
//! prediction replaces `p2^2` by its conditional expectation under the
//! canonical measure `exp(-H/T)` given `p1`, which is `T / (1 + p1^2)`; the
//! resulting system is Hamiltonian with the renormalized Hamiltonian
//! `(q1^2 + p1^2)/2 + (T/2) ln(1 + p1^2)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::integrate::{adaptive_advance, IntegratorConfig};
use crate::rng::{self, Purpose};
use crate::stats::mean_and_stderr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaldState {
    pub q1: f64,
    pub q2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl HaldState {
    pub fn new(q1: f64, q2: f64, p1: f64, p2: f64) -> Self {
        Self { q1, q2, p1, p2 }
    }

    /// Packed as `[q1, p1, q2, p2]` for the integrator.
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.q1, self.p1, self.q2, self.p2]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        Self {
            q1: y[0],
            p1: y[1],
            q2: y[2],
            p2: y[3],
        }
    }

    pub fn reduced(self) -> HaldReducedState {
        HaldReducedState {
            q1: self.q1,
            p1: self.p1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaldReducedState {
    pub q1: f64,
    pub p1: f64,
}

impl HaldReducedState {
    pub fn new(q1: f64, p1: f64) -> Self {
        Self { q1, p1 }
    }
}

/// Canonical-measure temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Self(t))
        } else {
            invalid(format!("temperature must be finite and positive, got {t}"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn hamiltonian(s: &HaldState) -> f64 {
    0.5 * (s.q1 * s.q1 + s.q2 * s.q2 + s.p1 * s.p1 + s.p2 * s.p2 + s.p1 * s.p1 * s.p2 * s.p2)
}

/// Time derivative of the full system, as a state `(dq1, dq2, dp1, dp2)`.
pub fn full_rhs(s: &HaldState) -> HaldState {
    HaldState {
        q1: s.p1 + s.p1 * s.p2 * s.p2,
        p1: -s.q1,
        q2: s.p2 + s.p2 * s.p1 * s.p1,
        p2: -s.q2,
    }
}

pub fn galerkin_rhs(r: &HaldReducedState) -> HaldReducedState {
    HaldReducedState {
        q1: r.p1,
        p1: -r.q1,
    }
}

/// First-order optimal prediction: `dq1/dt = p1 + p1 E[p2^2 | p1]`.
pub fn op_rhs(r: &HaldReducedState, temperature: Temperature) -> HaldReducedState {
    let t = temperature.value();
    HaldReducedState {
        q1: r.p1 + r.p1 * t / (1.0 + r.p1 * r.p1),
        p1: -r.q1,
    }
}

/// Renormalized Hamiltonian of the optimal-prediction system, zero at the
/// origin.
pub fn renormalized_hamiltonian(r: &HaldReducedState, temperature: Temperature) -> f64 {
    0.5 * (r.q1 * r.q1 + r.p1 * r.p1) + 0.5 * temperature.value() * (r.p1 * r.p1).ln_1p()
}

/// Draw the hidden oscillator from the canonical measure conditioned on
/// `(q1, p1)`: `q2 ~ N(0, T)`, `p2 ~ N(0, T / (1 + p1^2))`.
pub fn sample_conditional<R: Rng + ?Sized>(
    r: &HaldReducedState,
    temperature: Temperature,
    rng: &mut R,
) -> HaldState {
    let t = temperature.value();
    let z_q: f64 = rng.sample(StandardNormal);
    let z_p: f64 = rng.sample(StandardNormal);
    HaldState {
        q1: r.q1,
        p1: r.p1,
        q2: t.sqrt() * z_q,
        p2: (t / (1.0 + r.p1 * r.p1)).sqrt() * z_p,
    }
}

fn full_system(_t: f64, y: &[f64], d: &mut [f64]) {
    let (q1, p1, q2, p2) = (y[0], y[1], y[2], y[3]);
    d[0] = p1 + p1 * p2 * p2;
    d[1] = -q1;
    d[2] = p2 + p2 * p1 * p1;
    d[3] = -q2;
}

/// Integrate the full system from `s0` and sample it at `times` (which must
/// start at or after 0).
pub fn full_trajectory(
    s0: &HaldState,
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<HaldState>> {
    let t_end = times.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return Ok(times.iter().map(|_| *s0).collect());
    }
    let tr = adaptive_advance(&mut full_system, 0.0, &s0.to_vec(), t_end, times, config)?;
    Ok(tr.states.iter().map(|y| HaldState::from_slice(y)).collect())
}

fn reduced_trajectory<F>(
    r0: &HaldReducedState,
    times: &[f64],
    config: &IntegratorConfig,
    f: F,
) -> Result<Vec<HaldReducedState>>
where
    F: Fn(&HaldReducedState) -> HaldReducedState,
{
    let t_end = times.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return Ok(times.iter().map(|_| *r0).collect());
    }
    let mut sys = |_t: f64, y: &[f64], d: &mut [f64]| {
        let v = f(&HaldReducedState::new(y[0], y[1]));
        d[0] = v.q1;
        d[1] = v.p1;
    };
    let tr = adaptive_advance(&mut sys, 0.0, &[r0.q1, r0.p1], t_end, times, config)?;
    Ok(tr
        .states
        .iter()
        .map(|y| HaldReducedState::new(y[0], y[1]))
        .collect())
}

pub fn op_trajectory(
    r0: &HaldReducedState,
    temperature: Temperature,
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<HaldReducedState>> {
    reduced_trajectory(r0, times, config, |r| op_rhs(r, temperature))
}

pub fn galerkin_trajectory(
    r0: &HaldReducedState,
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<HaldReducedState>> {
    reduced_trajectory(r0, times, config, galerkin_rhs)
}

/// Ensemble mean of `(q1, p1)` with standard errors at each output time.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanTrajectory {
    pub times: Vec<f64>,
    pub mean_q1: Vec<f64>,
    pub mean_p1: Vec<f64>,
    pub stderr_q1: Vec<f64>,
    pub stderr_p1: Vec<f64>,
}

impl MeanTrajectory {
    /// `sqrt(mean_q1^2 + mean_p1^2)` at each time.
    pub fn amplitude(&self) -> Vec<f64> {
        self.mean_q1
            .iter()
            .zip(&self.mean_p1)
            .map(|(q, p)| q.hypot(*p))
            .collect()
    }
}

/// Average the full-system trajectories started from the given initial
/// states. Realizations run in parallel; the reduction is in index order.
pub fn mean_trajectory_from_states(
    initial: &[HaldState],
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<MeanTrajectory> {
    if initial.is_empty() {
        return invalid("ensemble size must be at least 1");
    }
    let runs: Vec<Vec<HaldState>> = initial
        .par_iter()
        .enumerate()
        .map(|(i, s0)| {
            full_trajectory(s0, times, config).map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut out = MeanTrajectory {
        times: times.to_vec(),
        mean_q1: Vec::with_capacity(times.len()),
        mean_p1: Vec::with_capacity(times.len()),
        stderr_q1: Vec::with_capacity(times.len()),
        stderr_p1: Vec::with_capacity(times.len()),
    };
    for j in 0..times.len() {
        let q: Vec<f64> = runs.iter().map(|r| r[j].q1).collect();
        let p: Vec<f64> = runs.iter().map(|r| r[j].p1).collect();
        let (mq, sq) = mean_and_stderr(&q);
        let (mp, sp) = mean_and_stderr(&p);
        out.mean_q1.push(mq);
        out.mean_p1.push(mp);
        out.stderr_q1.push(sq);
        out.stderr_p1.push(sp);
    }
    Ok(out)
}

/// Monte Carlo mean of the full system given only `(q1, p1)`: realization
/// `i` draws its hidden oscillator from stream `(seed, i)`.
pub fn ensemble_mean_trajectory(
    r0: &HaldReducedState,
    temperature: Temperature,
    n_ensemble: usize,
    times: &[f64],
    seed: u64,
    config: &IntegratorConfig,
) -> Result<MeanTrajectory> {
    if n_ensemble == 0 {
        return invalid("ensemble size must be at least 1");
    }
    let initial: Vec<HaldState> = (0..n_ensemble)
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::InitialData, i as u64);
            sample_conditional(r0, temperature, &mut rng)
        })
        .collect();
    mean_trajectory_from_states(&initial, times, config)
}
