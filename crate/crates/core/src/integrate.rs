//! Fixed-dimension time integrators.
//!
//! [`rk4_step`] is the classical four-stage Runge-Kutta update. The adaptive
//! driver [`adaptive_advance`] controls the step by step doubling: one step of
//! size `h` is compared with two steps of size `h/2`, and the Richardson
//! estimate `|y_half - y_full| / 15` must not exceed `tol * h`. Accepted steps
//! keep the locally extrapolated value. States at requested output times are
//! produced by cubic Hermite interpolation, so the sequence of accepted steps
//! never depends on which output times were asked for.
//!
//! [`euler_maruyama_step`] is provided for white-noise SDEs.

use crate::error::{invalid, Error, Result};

/// A right-hand side `dy/dt = f(t, y)` of fixed dimension.
///
/// `begin_step` is called once before every step attempt sequence that starts
/// from a new state; systems with piecewise-frozen coefficients refresh them
/// there and return `true`. Returning `false` (the default) lets the driver
/// reuse the derivative at the end of the previous step.
pub trait OdeSystem {
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]);

    fn begin_step(&mut self, _t: f64, _y: &[f64]) -> bool {
        false
    }
}

impl<F> OdeSystem for F
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        self(t, y, dydt)
    }
}

/// Step-size controls for [`adaptive_advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    /// Local error tolerance per unit time.
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            h_init: 1e-2,
            h_min: 1e-10,
            h_max: 0.5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.tol, self.h_init, self.h_min, self.h_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return invalid("integrator tol and step sizes must be finite and positive");
        }
        if !(self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return invalid(format!(
                "integrator requires h_min <= h_init <= h_max, got {} / {} / {}",
                self.h_min, self.h_init, self.h_max
            ));
        }
        Ok(())
    }
}

/// Samples produced by [`adaptive_advance`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Start time of every accepted step, in order.
    pub step_starts: Vec<f64>,
}

fn check_finite(t: f64, y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t })
    }
}

/// Scratch buffers for repeated RK4 steps of one dimension.
struct Rk4Work {
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Work {
    fn new(n: usize) -> Self {
        Self {
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    /// One RK4 step from `(t, y)` whose first stage `k1` is already known.
    fn step<S: OdeSystem + ?Sized>(
        &mut self,
        sys: &S,
        t: f64,
        y: &[f64],
        k1: &[f64],
        h: f64,
        out: &mut [f64],
    ) {
        let n = y.len();
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k2);
        for ((x, y), k) in self.tmp.iter_mut().zip(y).zip(&self.k2) {
            *x = y + 0.5 * h * k;
        }
        sys.rhs(t + 0.5 * h, &self.tmp, &mut self.k3);
        for ((x, y), k) in self.tmp.iter_mut().zip(y).zip(&self.k3) {
            *x = y + h * k;
        }
        sys.rhs(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Classical RK4 update `y + (h/6)(k1 + 2k2 + 2k3 + k4)`.
pub fn rk4_step<S: OdeSystem + ?Sized>(sys: &S, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    if !(h > 0.0 && h.is_finite()) {
        return invalid(format!("rk4 step requires h > 0, got {h}"));
    }
    let n = y.len();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, y, &mut k1);
    check_finite(t, &k1)?;
    let mut work = Rk4Work::new(n);
    let mut out = vec![0.0; n];
    work.step(sys, t, y, &k1, h, &mut out);
    check_finite(t + h, &out)?;
    Ok(out)
}

/// Cubic Hermite interpolant on `[t0, t0 + h]`.
fn hermite(t0: f64, h: f64, y0: &[f64], f0: &[f64], y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let s = ((t - t0) / h).clamp(0.0, 1.0);
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    (0..y0.len())
        .map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i])
        .collect()
}

/// Integrate from `(t0, y0)` to `t1` with step-doubling error control and
/// return the state at every time in `outputs`.
///
/// `outputs` must be non-decreasing and lie in `[t0, t1]`.
pub fn adaptive_advance<S: OdeSystem + ?Sized>(
    sys: &mut S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    outputs: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if !(t1 > t0) {
        return invalid(format!("adaptive_advance requires t1 > t0, got [{t0}, {t1}]"));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) {
        return invalid("output times must be non-decreasing");
    }
    if outputs.iter().any(|&t| t < t0 || t > t1) {
        return invalid("output times must lie inside [t0, t1]");
    }
    check_finite(t0, y0)?;

    let n = y0.len();
    let mut traj = Trajectory {
        times: Vec::with_capacity(outputs.len()),
        states: Vec::with_capacity(outputs.len()),
        accepted_steps: 0,
        rejected_steps: 0,
        step_starts: Vec::new(),
    };
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        traj.times.push(outputs[next_out]);
        traj.states.push(y0.to_vec());
        next_out += 1;
    }

    let mut work = Rk4Work::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f_start = vec![0.0; n];
    let mut f_end = vec![0.0; n];
    let mut y_full = vec![0.0; n];
    let mut y_mid = vec![0.0; n];
    let mut f_mid = vec![0.0; n];
    let mut y_half = vec![0.0; n];
    let mut h = config.h_init;
    let mut have_start = false;

    while t < t1 {
        let refreshed = sys.begin_step(t, &y);
        if refreshed || !have_start {
            sys.rhs(t, &y, &mut f_start);
            check_finite(t, &f_start)?;
        }
        loop {
            let last = t + h >= t1;
            let h_try = if last { t1 - t } else { h };
            work.step(sys, t, &y, &f_start, h_try, &mut y_full);
            work.step(sys, t, &y, &f_start, 0.5 * h_try, &mut y_mid);
            sys.rhs(t + 0.5 * h_try, &y_mid, &mut f_mid);
            work.step(sys, t + 0.5 * h_try, &y_mid, &f_mid, 0.5 * h_try, &mut y_half);

            let mut err = 0.0f64;
            let mut finite = true;
            for i in 0..n {
                let d = y_half[i] - y_full[i];
                finite &= d.is_finite();
                err = err.max(d.abs());
            }
            err /= 15.0;

            if finite && err <= config.tol * h_try {
                for i in 0..n {
                    y_half[i] += (y_half[i] - y_full[i]) / 15.0;
                }
                let t_new = if last { t1 } else { t + h_try };
                sys.rhs(t_new, &y_half, &mut f_end);
                check_finite(t_new, &f_end)?;
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let to = outputs[next_out];
                    let state = if to == t_new {
                        y_half.clone()
                    } else {
                        hermite(t, h_try, &y, &f_start, &y_half, &f_end, to)
                    };
                    traj.times.push(to);
                    traj.states.push(state);
                    next_out += 1;
                }
                traj.step_starts.push(t);
                traj.accepted_steps += 1;
                t = t_new;
                std::mem::swap(&mut y, &mut y_half);
                std::mem::swap(&mut f_start, &mut f_end);
                have_start = true;
                if !last {
                    let factor = if err == 0.0 {
                        2.0
                    } else {
                        (0.9 * (config.tol * h_try / err).powf(0.25)).clamp(0.5, 2.0)
                    };
                    h = (h_try * factor).min(config.h_max);
                }
                break;
            }

            traj.rejected_steps += 1;
            if !finite && h_try <= config.h_min {
                return Err(Error::NonFinite { t });
            }
            h = 0.5 * h_try;
            if h < config.h_min {
                return Err(Error::StepUnderflow {
                    t,
                    h,
                    h_min: config.h_min,
                });
            }
        }
    }
    Ok(traj)
}

/// One Euler-Maruyama step `y + h*drift(y) + amplitude*sqrt(h)*draw`.
pub fn euler_maruyama_step<D>(
    drift: D,
    noise_amplitude: f64,
    y: &[f64],
    h: f64,
    gaussian_draws: &[f64],
) -> Result<Vec<f64>>
where
    D: Fn(&[f64], &mut [f64]),
{
    if !(h > 0.0) {
        return invalid(format!("euler_maruyama_step requires h > 0, got {h}"));
    }
    if gaussian_draws.len() != y.len() {
        return invalid("one gaussian draw per component is required");
    }
    let mut d = vec![0.0; y.len()];
    drift(y, &mut d);
    let scale = noise_amplitude * h.sqrt();
    Ok(y.iter()
        .zip(&d)
        .zip(gaussian_draws)
        .map(|((yi, di), zi)| yi + h * di + scale * zi)
        .collect())
}
