//! Stochastic reduced model: only the resolved modes are evolved, driven by
//! prescribed colored noise in the sampled region and damped by the diagonal
//! fluctuation-dissipation coefficient.
//!
//! `dw/dt = G1(w) - gamma(w) w + L(w) dv(t)`

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::{Dynamics, SigmaArgument};
use crate::ensemble::{summarize, EnsembleConfig, EnsembleResult, WidthModel};
use crate::error::{invalid, Error, Result};
use crate::integrate::{adaptive_advance, OdeSystem};
use crate::rng::{self, Purpose};
use crate::spectral::{FlowParams, ModeClass, ModePartition, SpectralField, WaveVector, C64};

/// Width function `k -> sigma(k)` for the sampled modes.
pub type Sigma<'a> = dyn Fn(WaveVector) -> f64 + Sync + 'a;

/// Cholesky factors of the unit-variance Gaussian correlation
/// `exp(-(t_i - t_j)^2 / sigma^2)` on a uniform grid, one per distinct sigma.
#[derive(Debug, Clone)]
pub struct NoiseFactory {
    lattice: std::sync::Arc<crate::spectral::Lattice>,
    /// `(canonical index, sqrt(V/2), factor key)`; key `None` for a zero path.
    modes: Vec<(usize, f64, Option<u64>)>,
    factors: HashMap<u64, DMatrix<f64>>,
    grid_dt: f64,
    n_grid: usize,
}

fn gaussian_correlation(n: usize, dt: f64, sigma: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        let lag = (i as f64 - j as f64) * dt;
        (-(lag * lag) / (sigma * sigma)).exp()
    })
}

fn factorize(n: usize, dt: f64, sigma: f64) -> Result<DMatrix<f64>> {
    let cov = gaussian_correlation(n, dt, sigma);
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    // Correlation matrices have unit diagonal, so the jitter is 1e-12 V
    // after scaling by V.
    let jittered = cov + DMatrix::identity(n, n) * 1e-12;
    jittered
        .cholesky()
        .map(|ch| ch.l())
        .ok_or(Error::Factorization { sigma })
}

impl NoiseFactory {
    pub fn new(
        partition: &ModePartition,
        params: &FlowParams,
        sigma: &Sigma<'_>,
        t_end: f64,
        grid_dt: f64,
    ) -> Result<Self> {
        if !(t_end > 0.0) {
            return invalid("noise horizon t_end must be positive");
        }
        if !(grid_dt > 0.0) {
            return invalid("noise grid spacing must be positive");
        }
        let lattice = partition.lattice();
        let mut modes = Vec::new();
        let mut min_sigma = f64::INFINITY;
        for (i, &k) in lattice.modes().iter().enumerate() {
            if partition.classify(k) != ModeClass::Sampled {
                continue;
            }
            let s = sigma(k);
            if !(s >= 0.0) || !s.is_finite() {
                return invalid(format!("width for {k} must be finite and non-negative, got {s}"));
            }
            let amp = (params.equilibrium_variance(k) / 2.0).sqrt();
            if s > 0.0 {
                min_sigma = min_sigma.min(s);
                modes.push((i, amp, Some(s.to_bits())));
            } else {
                modes.push((i, amp, None));
            }
        }
        if grid_dt > min_sigma / 8.0 {
            return invalid(format!(
                "noise grid spacing {grid_dt} exceeds min sigma / 8 = {}",
                min_sigma / 8.0
            ));
        }
        let n_grid = (t_end / grid_dt).ceil() as usize + 1;
        let mut keys: Vec<u64> = modes.iter().filter_map(|m| m.2).collect();
        keys.sort_unstable();
        keys.dedup();
        let factors = keys
            .par_iter()
            .map(|&key| factorize(n_grid, grid_dt, f64::from_bits(key)).map(|l| (key, l)))
            .collect::<Result<HashMap<_, _>>>()?;
        Ok(Self {
            lattice,
            modes,
            factors,
            grid_dt,
            n_grid,
        })
    }

    pub fn grid_dt(&self) -> f64 {
        self.grid_dt
    }

    /// Draw one noise path set. Modes are filled in lattice order, real part
    /// before imaginary part.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseProcess {
        let n = self.n_grid;
        let paths = self
            .modes
            .iter()
            .map(|&(_, amp, key)| {
                let re = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let im = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
                match key {
                    Some(key) => {
                        let l = &self.factors[&key];
                        let re = l * re;
                        let im = l * im;
                        re.iter()
                            .zip(im.iter())
                            .map(|(a, b)| C64::new(amp * a, amp * b))
                            .collect()
                    }
                    None => vec![C64::new(0.0, 0.0); n],
                }
            })
            .collect();
        NoiseProcess {
            lattice: self.lattice.clone(),
            indices: self.modes.iter().map(|m| m.0).collect(),
            dt: self.grid_dt,
            paths,
        }
    }
}

/// Precomputed sampled-region noise `dv_k(t)` on a uniform grid.
#[derive(Debug, Clone)]
pub struct NoiseProcess {
    lattice: std::sync::Arc<crate::spectral::Lattice>,
    indices: Vec<usize>,
    dt: f64,
    /// `[mode][grid point]`.
    paths: Vec<Vec<C64>>,
}

impl NoiseProcess {
    pub fn grid_dt(&self) -> f64 {
        self.dt
    }

    pub fn modes(&self) -> impl Iterator<Item = WaveVector> + '_ {
        self.indices.iter().map(|&i| self.lattice.modes()[i])
    }

    /// Grid values of one mode (in lattice order of the sampled modes).
    pub fn path(&self, mode: usize) -> &[C64] {
        &self.paths[mode]
    }

    /// Write the noise at time `t` into canonical amplitudes (sampled entries
    /// only). Linear interpolation; clamped beyond the grid.
    pub fn eval_into(&self, t: f64, amps: &mut [C64]) {
        let last = self.paths.first().map_or(0, |p| p.len() - 1);
        let x = (t / self.dt).max(0.0);
        let j = (x.floor() as usize).min(last);
        let frac = if j == last { 0.0 } else { x - j as f64 };
        for (&i, p) in self.indices.iter().zip(&self.paths) {
            amps[i] = if frac == 0.0 {
                p[j]
            } else {
                p[j] * (1.0 - frac) + p[j + 1] * frac
            };
        }
    }

    pub fn eval(&self, t: f64) -> SpectralField {
        let mut amps = vec![C64::new(0.0, 0.0); self.lattice.len()];
        self.eval_into(t, &mut amps);
        SpectralField::from_amplitudes(self.lattice.clone(), amps).unwrap()
    }
}

pub fn generate_noise<R: Rng + ?Sized>(
    partition: &ModePartition,
    params: &FlowParams,
    sigma: &Sigma<'_>,
    t_end: f64,
    grid_dt: f64,
    rng: &mut R,
) -> Result<NoiseProcess> {
    Ok(NoiseFactory::new(partition, params, sigma, t_end, grid_dt)?.sample(rng))
}

/// Switches for the reduced model's terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedOptions {
    pub noise: bool,
    pub damping: bool,
    pub sigma_argument: SigmaArgument,
    /// Noise grid spacing; defaults to min sigma / 8.
    pub grid_dt: Option<f64>,
}

impl Default for ReducedOptions {
    fn default() -> Self {
        Self {
            noise: true,
            damping: true,
            sigma_argument: SigmaArgument::Resolved,
            grid_dt: None,
        }
    }
}

/// Reduced right-hand side at one instant, with `gamma` evaluated at `state`.
pub fn sop_rhs(
    dynamics: &Dynamics,
    state: &SpectralField,
    t: f64,
    noise: Option<&NoiseProcess>,
    sigma: &Sigma<'_>,
    options: &ReducedOptions,
) -> SpectralField {
    let mut sys = ReducedSystem::new(dynamics, noise, sigma, *options);
    let y = state.to_state();
    sys.begin_step(t, &y);
    let mut dydt = vec![0.0; y.len()];
    sys.rhs(t, &y, &mut dydt);
    SpectralField::from_state(dynamics.lattice().clone(), &dydt).unwrap()
}

struct Scratch {
    u: Vec<C64>,
    v: Vec<C64>,
    amps: Vec<C64>,
    noise_amps: Vec<C64>,
}

/// Reduced model as an ODE system on the full lattice state (sampled entries
/// stay zero). `gamma` is refreshed once per step from the step's initial
/// state.
pub struct ReducedSystem<'a> {
    dynamics: &'a Dynamics,
    noise: Option<&'a NoiseProcess>,
    sigma: &'a Sigma<'a>,
    options: ReducedOptions,
    gamma: Vec<f64>,
    /// When set, every refreshed `(t, gamma)` is appended.
    pub gamma_log: Option<Vec<(f64, Vec<f64>)>>,
    scratch: RefCell<Scratch>,
}

impl<'a> ReducedSystem<'a> {
    pub fn new(
        dynamics: &'a Dynamics,
        noise: Option<&'a NoiseProcess>,
        sigma: &'a Sigma<'a>,
        options: ReducedOptions,
    ) -> Self {
        let n = dynamics.lattice().len();
        Self {
            dynamics,
            noise: if options.noise { noise } else { None },
            sigma,
            options,
            gamma: vec![0.0; n],
            gamma_log: None,
            scratch: RefCell::new(Scratch {
                u: Vec::new(),
                v: Vec::new(),
                amps: vec![C64::new(0.0, 0.0); n],
                noise_amps: vec![C64::new(0.0, 0.0); n],
            }),
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    fn load(&self, y: &[f64], s: &mut Scratch) {
        for &i in self.dynamics.resolved_indices() {
            s.amps[i] = C64::new(y[2 * i], y[2 * i + 1]);
        }
        let amps = std::mem::take(&mut s.amps);
        self.dynamics.expand(&amps, &mut s.u);
        s.amps = amps;
    }
}

impl OdeSystem for ReducedSystem<'_> {
    fn begin_step(&mut self, t: f64, y: &[f64]) -> bool {
        if !self.options.damping {
            return false;
        }
        let s = &mut *self.scratch.borrow_mut();
        self.load(y, s);
        self.dynamics
            .gamma_into(&s.u, self.sigma, self.options.sigma_argument, &mut self.gamma);
        if let Some(log) = &mut self.gamma_log {
            log.push((t, self.gamma.clone()));
        }
        true
    }

    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        let s = &mut *self.scratch.borrow_mut();
        self.load(y, s);
        if let Some(noise) = self.noise {
            noise.eval_into(t, &mut s.noise_amps);
            let amps = std::mem::take(&mut s.noise_amps);
            self.dynamics.expand(&amps, &mut s.v);
            s.noise_amps = amps;
        }
        dydt.fill(0.0);
        for &i in self.dynamics.resolved_indices() {
            let mut d = self.dynamics.g1_mode(i, &s.u);
            if self.options.damping {
                d -= s.amps[i] * self.gamma[i];
            }
            if self.noise.is_some() {
                d += self.dynamics.apply_l_mode(i, &s.u, &s.v);
            }
            dydt[2 * i] = d.re;
            dydt[2 * i + 1] = d.im;
        }
    }
}

/// Smallest width over the sampled modes, ignoring zeros.
fn min_sampled_sigma(partition: &ModePartition, sigma: &Sigma<'_>) -> f64 {
    partition
        .lattice()
        .modes()
        .iter()
        .filter(|&&k| partition.classify(k) == ModeClass::Sampled)
        .map(|&k| sigma(k))
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Monte Carlo run of the reduced model. Realization `i` draws its noise
/// from stream `(master_seed, i)` of the noise purpose; reduction is in
/// realization order.
pub fn run_reduced_ensemble(
    cfg: &EnsembleConfig,
    width: &WidthModel,
    options: &ReducedOptions,
) -> Result<EnsembleResult> {
    let sigma = |k: WaveVector| width.sigma(k);
    run_reduced_ensemble_with(cfg, &sigma, options)
}

pub fn run_reduced_ensemble_with(
    cfg: &EnsembleConfig,
    sigma: &Sigma<'_>,
    options: &ReducedOptions,
) -> Result<EnsembleResult> {
    cfg.validate()?;
    let dynamics = Dynamics::new(cfg.partition, cfg.params);
    let t_end = cfg.t_end();
    let factory = if options.noise && t_end > 0.0 {
        let min_sigma = min_sampled_sigma(&cfg.partition, sigma);
        if min_sigma.is_finite() {
            let grid_dt = options.grid_dt.unwrap_or(min_sigma / 8.0);
            Some(NoiseFactory::new(&cfg.partition, &cfg.params, sigma, t_end, grid_dt)?)
        } else {
            None
        }
    } else {
        None
    };
    let lattice = dynamics.lattice().clone();
    let realizations: Vec<Vec<SpectralField>> = (0..cfg.n_ensemble)
        .into_par_iter()
        .map(|i| {
            let noise = factory.as_ref().map(|f| {
                let mut rng = rng::stream(cfg.master_seed, Purpose::Noise, i as u64);
                f.sample(&mut rng)
            });
            if t_end == 0.0 {
                return Ok(vec![cfg.initial_resolved.clone()]);
            }
            let mut sys = ReducedSystem::new(&dynamics, noise.as_ref(), sigma, *options);
            let tr = adaptive_advance(
                &mut sys,
                0.0,
                &cfg.initial_resolved.to_state(),
                t_end,
                &cfg.output_times,
                &cfg.integrator,
            )
            .map_err(|e| Error::Realization {
                index: i,
                source: Box::new(e),
            })?;
            tr.states
                .iter()
                .map(|y| SpectralField::from_state(lattice.clone(), y))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(summarize(cfg, realizations))
}
