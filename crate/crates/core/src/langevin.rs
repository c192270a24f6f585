//! Langevin equation `du/dt = -gamma u + n(t)` with white noise of intensity
//! `noise_q` (autocovariance `noise_q * delta`).
//!
//! The stationary variance is `noise_q / (2 gamma)`. Requiring it to equal a
//! temperature `T` fixes the damping once the noise intensity is known.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::integrate::euler_maruyama_step;
use crate::rng::{self, Purpose};
use crate::stats::{mean_and_stderr, sample_covariance, variance_stderr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinConfig {
    pub gamma: f64,
    /// White-noise intensity.
    pub noise_q: f64,
    /// Temperature the stationary variance is compared against.
    pub t_target: f64,
    pub h: f64,
    pub t_end: f64,
    pub n_ensemble: usize,
}

impl LangevinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return invalid(format!("step h must be positive, got {}", self.h));
        }
        if !(self.t_end > 0.0) {
            return invalid("t_end must be positive");
        }
        if self.gamma < 0.0 || self.noise_q < 0.0 {
            return invalid("gamma and noise_q must be non-negative");
        }
        if self.n_ensemble == 0 {
            return invalid("ensemble size must be at least 1");
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.h).round() as usize
    }

    /// Analytic stationary variance `noise_q / (2 gamma)`.
    pub fn stationary_variance(&self) -> f64 {
        self.noise_q / (2.0 * self.gamma)
    }
}

/// One Euler-Maruyama path of `u` sampled at every step (length `steps + 1`).
pub fn simulate_ou<R: Rng + ?Sized>(cfg: &LangevinConfig, u0: f64, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    let gamma = cfg.gamma;
    let amplitude = cfg.noise_q.sqrt();
    let n = cfg.steps();
    let mut path = Vec::with_capacity(n + 1);
    let mut u = [u0];
    path.push(u0);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        u = euler_maruyama_step(|y, d| d[0] = -gamma * y[0], amplitude, &u, cfg.h, &[z])?
            .try_into()
            .expect("one component");
        path.push(u[0]);
    }
    Ok(path)
}

fn ensemble_paths(cfg: &LangevinConfig, u0: f64, seed: u64) -> Result<Vec<Vec<f64>>> {
    (0..cfg.n_ensemble)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Purpose::Langevin, i as u64);
            simulate_ou(cfg, u0, &mut rng)
        })
        .collect()
}

/// Ensemble variance of `u(t)` at every `stride`-th step, with standard
/// errors, for paths started at `u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCurve {
    pub times: Vec<f64>,
    pub variance: Vec<f64>,
    pub stderr: Vec<f64>,
}

pub fn variance_curve(cfg: &LangevinConfig, u0: f64, stride: usize, seed: u64) -> Result<VarianceCurve> {
    if stride == 0 {
        return invalid("stride must be at least 1");
    }
    if cfg.n_ensemble < 2 {
        return invalid("variance needs at least 2 realizations");
    }
    let paths = ensemble_paths(cfg, u0, seed)?;
    let mut curve = VarianceCurve {
        times: vec![],
        variance: vec![],
        stderr: vec![],
    };
    for j in (0..=cfg.steps()).step_by(stride) {
        let xs: Vec<f64> = paths.iter().map(|p| p[j]).collect();
        curve.times.push(j as f64 * cfg.h);
        curve.variance.push(crate::stats::sample_variance(&xs));
        curve.stderr.push(variance_stderr(&xs));
    }
    Ok(curve)
}

/// Stationary statistics from the second half of every path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryEstimate {
    pub variance: f64,
    pub stderr: f64,
    /// `E[u^4] / (3 E[u^2]^2)`; 1 for a Gaussian.
    pub kurtosis_ratio: f64,
    pub kurtosis_stderr: f64,
}

/// Ensemble-and-time average of `u^2` over the second half of each path,
/// started from `u0 = 0`. Requires `t_end >= 10 / gamma`.
pub fn stationary_variance_estimate(cfg: &LangevinConfig, seed: u64) -> Result<StationaryEstimate> {
    cfg.validate()?;
    if !(cfg.gamma > 0.0) || cfg.t_end < 10.0 / cfg.gamma {
        return invalid(format!(
            "stationary estimate needs gamma > 0 and t_end >= 10/gamma (gamma = {}, t_end = {})",
            cfg.gamma, cfg.t_end
        ));
    }
    if cfg.n_ensemble < 2 {
        return invalid("stationary estimate needs at least 2 realizations");
    }
    let paths = ensemble_paths(cfg, 0.0, seed)?;
    let start = cfg.steps() / 2;
    let (m2, m4): (Vec<f64>, Vec<f64>) = paths
        .iter()
        .map(|p| {
            let tail = &p[start..];
            let n = tail.len() as f64;
            (
                tail.iter().map(|u| u * u).sum::<f64>() / n,
                tail.iter().map(|u| u.powi(4)).sum::<f64>() / n,
            )
        })
        .unzip();
    let (v, se) = mean_and_stderr(&m2);
    if v == 0.0 {
        return Ok(StationaryEstimate {
            variance: 0.0,
            stderr: 0.0,
            kurtosis_ratio: f64::NAN,
            kurtosis_stderr: f64::NAN,
        });
    }
    let (f, _) = mean_and_stderr(&m4);
    let ratio = f / (3.0 * v * v);
    // Delta method on (mean m4, mean m2).
    let n = m2.len() as f64;
    let g4 = 1.0 / (3.0 * v * v);
    let g2 = -2.0 * f / (3.0 * v * v * v);
    let var_ratio = (g4 * g4 * sample_covariance(&m4, &m4)
        + 2.0 * g4 * g2 * sample_covariance(&m4, &m2)
        + g2 * g2 * sample_covariance(&m2, &m2))
        / n;
    Ok(StationaryEstimate {
        variance: v,
        stderr: se,
        kurtosis_ratio: ratio,
        kurtosis_stderr: var_ratio.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg(gamma: f64, noise_q: f64) -> LangevinConfig {
        LangevinConfig {
            gamma,
            noise_q,
            t_target: 1.0,
            h: 1e-3,
            t_end: 20.0 / gamma.max(1e-9),
            n_ensemble: 400,
        }
    }

    #[test]
    fn noiseless_path_decays_exponentially() {
        let c = LangevinConfig {
            t_end: 2.0,
            ..cfg(1.0, 0.0)
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let path = simulate_ou(&c, 1.0, &mut rng).unwrap();
        let err = (path.last().unwrap() - (-2.0f64).exp()).abs();
        // Euler error is O(h).
        assert!(err < 2e-3 * 2.0, "err {err}");
    }

    #[test]
    fn undamped_variance_grows_linearly() {
        let c = LangevinConfig {
            gamma: 0.0,
            noise_q: 1.0,
            t_end: 4.0,
            h: 1e-2,
            n_ensemble: 1000,
            t_target: 1.0,
        };
        let curve = variance_curve(&c, 0.0, 100, 9).unwrap();
        for ((t, v), se) in curve.times.iter().zip(&curve.variance).zip(&curve.stderr).skip(1) {
            assert!((v - t).abs() < 4.0 * se, "t {t} var {v} se {se}");
        }
    }

    #[test]
    fn stationary_variance_matches_balance() {
        for &(g, q) in &[(1.0, 2.0), (2.0, 4.0)] {
            let est = stationary_variance_estimate(&cfg(g, q), 17).unwrap();
            let want = q / (2.0 * g);
            assert!((est.variance - want).abs() < 4.0 * est.stderr, "{est:?} vs {want}");
            assert!((est.kurtosis_ratio - 1.0).abs() < 5.0 * est.kurtosis_stderr, "{est:?}");
        }
    }

    #[test]
    fn zero_noise_gives_zero_variance() {
        let est = stationary_variance_estimate(&cfg(1.0, 0.0), 1).unwrap();
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn short_horizon_is_refused() {
        let c = LangevinConfig {
            t_end: 5.0,
            ..cfg(1.0, 2.0)
        };
        assert!(stationary_variance_estimate(&c, 1).is_err());
        let c = LangevinConfig { h: 0.0, ..cfg(1.0, 2.0) };
        assert!(simulate_ou(&c, 0.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
