//! Monte Carlo ensembles of the truncated system and the statistics pipeline:
//! ensemble means, A-enstrophy of the mean, time-correlation functions of the
//! sampled modes, Gaussian width fits and the `sigma(k) = c / |k|` model.

use std::cell::RefCell;

use rayon::prelude::*;

use crate::dynamics::{a_enstrophy_in, Dynamics};
use crate::error::{invalid, Error, Result};
use crate::integrate::{adaptive_advance, IntegratorConfig, OdeSystem};
use crate::rng::{self, Purpose};
use crate::spectral::{
    a_operator, conditional_sample, FlowParams, ModeClass, ModePartition, Region, SpectralField,
    WaveVector, C64,
};
use crate::stats::mean_and_stderr;

/// How the sampled region of each realization is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampledDraw {
    /// Draw from the invariant measure conditioned on the resolved modes.
    #[default]
    Equilibrium,
    /// Start every sampled mode at zero (deterministic resolved-only runs).
    Zero,
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub n_ensemble: usize,
    /// Increasing, starting at 0.
    pub output_times: Vec<f64>,
    pub master_seed: u64,
    pub partition: ModePartition,
    pub params: FlowParams,
    /// Initial values of the resolved modes, on the partition's lattice.
    pub initial_resolved: SpectralField,
    pub integrator: IntegratorConfig,
    pub sampled_draw: SampledDraw,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ensemble == 0 {
            return invalid("ensemble size must be at least 1");
        }
        if self.output_times.first() != Some(&0.0) {
            return invalid("output times must be nonempty and start at 0");
        }
        if self.output_times.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("output times must be strictly increasing");
        }
        if self.initial_resolved.lattice().bound() != self.partition.sampled_bound() {
            return invalid("initial field lattice does not match the partition");
        }
        if !self.initial_resolved.supported_in(&self.partition, Region::Resolved) {
            return Err(Error::InvalidField(
                "initial resolved field has amplitude outside the resolved region".into(),
            ));
        }
        self.integrator.validate()
    }

    pub fn t_end(&self) -> f64 {
        *self.output_times.last().unwrap_or(&0.0)
    }
}

/// A-enstrophy of the ensemble mean and mean of the per-realization
/// A-enstrophy, over one region, with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct AEnstrophyCurve {
    pub times: Vec<f64>,
    pub of_mean: Vec<f64>,
    pub of_mean_stderr: Vec<f64>,
    pub mean_of_norm: Vec<f64>,
    pub mean_of_norm_stderr: Vec<f64>,
}

/// Result of an ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    /// Ensemble mean field at each output time.
    pub mean: Vec<SpectralField>,
    /// Per time, per canonical mode: standard error of the mean amplitude.
    pub mean_stderr: Vec<Vec<f64>>,
    /// A-enstrophy over the resolved region.
    pub a_enstrophy: AEnstrophyCurve,
    /// `[realization][time]` fields.
    pub realizations: Vec<Vec<SpectralField>>,
}

impl EnsembleResult {
    /// Sampled-mode histories of every realization, for correlation
    /// estimates. Requires uniformly spaced output times.
    pub fn sampled_histories(&self, partition: &ModePartition) -> Result<Histories> {
        let lattice = self.mean[0].lattice();
        let modes: Vec<(usize, WaveVector)> = lattice
            .modes()
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, k)| partition.classify(*k) == ModeClass::Sampled)
            .collect();
        Histories::from_realizations(&self.times, &self.realizations, &modes)
    }
}

/// Shifted mean: exact when all samples agree.
fn mean_amplitude(samples: impl Iterator<Item = C64> + Clone) -> C64 {
    let mut it = samples.clone();
    let Some(first) = it.next() else {
        return C64::new(0.0, 0.0);
    };
    let mut n = 1.0;
    let mut acc = C64::new(0.0, 0.0);
    for s in it {
        acc += s - first;
        n += 1.0;
    }
    first + acc / n
}

/// Mean fields and their standard errors from `[realization][time]` fields.
pub fn ensemble_means(realizations: &[Vec<SpectralField>]) -> (Vec<SpectralField>, Vec<Vec<f64>>) {
    let n_times = realizations[0].len();
    let n = realizations.len() as f64;
    let lattice = realizations[0][0].lattice().clone();
    let mut means = Vec::with_capacity(n_times);
    let mut errs = Vec::with_capacity(n_times);
    for j in 0..n_times {
        let mut amps = Vec::with_capacity(lattice.len());
        let mut se = Vec::with_capacity(lattice.len());
        for i in 0..lattice.len() {
            let m = mean_amplitude(realizations.iter().map(|r| r[j].amplitudes()[i]));
            amps.push(m);
            if realizations.len() > 1 {
                let var = realizations
                    .iter()
                    .map(|r| (r[j].amplitudes()[i] - m).norm_sqr())
                    .sum::<f64>()
                    / (n - 1.0);
                se.push((var / n).sqrt());
            } else {
                se.push(0.0);
            }
        }
        means.push(SpectralField::from_amplitudes(lattice.clone(), amps).unwrap());
        errs.push(se);
    }
    (means, errs)
}

/// A-enstrophy of the mean (delta-method standard error) and mean
/// A-enstrophy, restricted to `region`.
pub fn a_enstrophy_curve(
    times: &[f64],
    realizations: &[Vec<SpectralField>],
    means: &[SpectralField],
    params: &FlowParams,
    partition: &ModePartition,
    region: Region,
) -> AEnstrophyCurve {
    let lattice = means[0].lattice().clone();
    let weights: Vec<f64> = lattice
        .modes()
        .iter()
        .map(|&k| {
            if region.contains(partition, k) {
                let a = a_operator(k, params);
                k.norm_sq() * a * a
            } else {
                0.0
            }
        })
        .collect();
    let mut curve = AEnstrophyCurve {
        times: times.to_vec(),
        of_mean: vec![],
        of_mean_stderr: vec![],
        mean_of_norm: vec![],
        mean_of_norm_stderr: vec![],
    };
    for (j, mean) in means.iter().enumerate() {
        let of_mean = a_enstrophy_in(mean, params, partition, region);
        // Linearization of |mean|^2_W around the sample mean.
        let lin: Vec<f64> = realizations
            .iter()
            .map(|r| {
                r[j].amplitudes()
                    .iter()
                    .zip(mean.amplitudes())
                    .zip(&weights)
                    .map(|((u, m), w)| 2.0 * w * (m.conj() * u).re)
                    .sum()
            })
            .collect();
        let norms: Vec<f64> = realizations
            .iter()
            .map(|r| a_enstrophy_in(&r[j], params, partition, region))
            .collect();
        let (_, se) = mean_and_stderr(&lin);
        let (mn, mn_se) = mean_and_stderr(&norms);
        curve.of_mean.push(of_mean);
        curve.of_mean_stderr.push(se);
        curve.mean_of_norm.push(mn);
        curve.mean_of_norm_stderr.push(mn_se);
    }
    curve
}

struct FullSystem<'a> {
    dynamics: &'a Dynamics,
    scratch: RefCell<Vec<C64>>,
}

impl OdeSystem for FullSystem<'_> {
    fn rhs(&self, _t: f64, y: &[f64], dydt: &mut [f64]) {
        self.dynamics
            .full_rhs_state(y, &mut self.scratch.borrow_mut(), dydt);
    }
}

/// Integrate one realization of the full truncated system.
pub fn integrate_full(
    dynamics: &Dynamics,
    initial: &SpectralField,
    times: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<SpectralField>> {
    let t_end = *times.last().unwrap_or(&0.0);
    if t_end <= 0.0 {
        return Ok(times.iter().map(|_| initial.clone()).collect());
    }
    let mut sys = FullSystem {
        dynamics,
        scratch: RefCell::new(Vec::new()),
    };
    let tr = adaptive_advance(&mut sys, 0.0, &initial.to_state(), t_end, times, config)?;
    tr.states
        .iter()
        .map(|y| SpectralField::from_state(dynamics.lattice().clone(), y))
        .collect()
}

/// Monte Carlo run of the full truncated system. Realization `i` samples its
/// initial data from stream `(master_seed, i)`; statistics are reduced in
/// realization order, so the output is independent of the worker count.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let dynamics = Dynamics::new(cfg.partition, cfg.params);
    let realizations: Vec<Vec<SpectralField>> = (0..cfg.n_ensemble)
        .into_par_iter()
        .map(|i| {
            let initial = match cfg.sampled_draw {
                SampledDraw::Equilibrium => {
                    let mut rng = rng::stream(cfg.master_seed, Purpose::InitialData, i as u64);
                    conditional_sample(&cfg.initial_resolved, &cfg.partition, &cfg.params, &mut rng)?
                }
                SampledDraw::Zero => cfg.initial_resolved.clone(),
            };
            integrate_full(&dynamics, &initial, &cfg.output_times, &cfg.integrator).map_err(|e| {
                Error::Realization {
                    index: i,
                    source: Box::new(e),
                }
            })
        })
        .collect::<Result<_>>()?;
    Ok(summarize(cfg, realizations))
}

pub(crate) fn summarize(cfg: &EnsembleConfig, realizations: Vec<Vec<SpectralField>>) -> EnsembleResult {
    let (mean, mean_stderr) = ensemble_means(&realizations);
    let a_enstrophy = a_enstrophy_curve(
        &cfg.output_times,
        &realizations,
        &mean,
        &cfg.params,
        &cfg.partition,
        Region::Resolved,
    );
    EnsembleResult {
        times: cfg.output_times.clone(),
        mean,
        mean_stderr,
        a_enstrophy,
        realizations,
    }
}

/// Per-mode amplitude histories on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Histories {
    pub dt: f64,
    pub modes: Vec<WaveVector>,
    /// `[mode][realization][time]`.
    pub data: Vec<Vec<Vec<C64>>>,
}

impl Histories {
    pub fn from_realizations(
        times: &[f64],
        realizations: &[Vec<SpectralField>],
        modes: &[(usize, WaveVector)],
    ) -> Result<Self> {
        if times.len() < 2 {
            return invalid("histories need at least two time samples");
        }
        let dt = times[1] - times[0];
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        if !uniform {
            return invalid("correlation estimates need uniformly spaced output times");
        }
        let data = modes
            .iter()
            .map(|&(idx, _)| {
                realizations
                    .iter()
                    .map(|r| r.iter().map(|f| f.amplitudes()[idx]).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            dt,
            modes: modes.iter().map(|&(_, k)| k).collect(),
            data,
        })
    }

    pub fn n_realizations(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn n_times(&self) -> usize {
        self.data
            .first()
            .and_then(|m| m.first())
            .map_or(0, Vec::len)
    }

    /// Fluctuations about the ensemble mean at each time.
    fn fluctuations(&self, mode: usize) -> Vec<Vec<C64>> {
        let series = &self.data[mode];
        let n_t = self.n_times();
        let mean: Vec<C64> = (0..n_t)
            .map(|t| mean_amplitude(series.iter().map(|s| s[t])))
            .collect();
        series
            .iter()
            .map(|s| s.iter().zip(&mean).map(|(x, m)| x - m).collect())
            .collect()
    }
}

/// Estimated autocovariances `C(k, tau)` for `tau = 0, dt, ..., max_lag*dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    pub dt: f64,
    pub modes: Vec<WaveVector>,
    /// `[mode][lag]`.
    pub c: Vec<Vec<C64>>,
    /// `[mode][lag]`, standard error of the complex estimate.
    pub stderr: Vec<Vec<f64>>,
    pub n_realizations: usize,
    /// Per mode: variance over the first half of time origins divided by the
    /// variance over the second half. 1 for a stationary process.
    pub stationarity: Vec<f64>,
}

impl CorrelationTable {
    pub fn max_lag(&self) -> usize {
        self.c.first().map_or(0, |v| v.len() - 1)
    }

    /// `C(k, tau)` for a signed lag index, using `C(-tau) = conj(C(tau))`.
    pub fn at(&self, mode: usize, lag: i64) -> C64 {
        let v = self.c[mode][lag.unsigned_abs() as usize];
        if lag < 0 {
            v.conj()
        } else {
            v
        }
    }

    pub fn mode_index(&self, k: WaveVector) -> Option<usize> {
        self.modes.iter().position(|&m| m == k)
    }
}

/// Per-realization origin average of `conj(a(t)) b(t + lag)`.
fn lagged_products(a: &[Vec<C64>], b: &[Vec<C64>], lag: usize) -> Vec<C64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let n = x.len() - lag;
            let s: C64 = (0..n).map(|t| x[t].conj() * y[t + lag]).sum();
            s / n as f64
        })
        .collect()
}

fn complex_mean_and_stderr(xs: &[C64], n_eff_correction: f64) -> (C64, f64) {
    let re: Vec<f64> = xs.iter().map(|z| z.re).collect();
    let im: Vec<f64> = xs.iter().map(|z| z.im).collect();
    let (mr, sr) = mean_and_stderr(&re);
    let (mi, si) = mean_and_stderr(&im);
    (
        C64::new(mr, mi) * n_eff_correction,
        (sr * sr + si * si).sqrt() * n_eff_correction,
    )
}

/// Autocovariance of every mode's fluctuation about the ensemble mean,
/// averaged over realizations and time origins. Standard errors come from
/// the spread of the per-realization estimates.
pub fn estimate_correlations(h: &Histories, max_lag: usize) -> Result<CorrelationTable> {
    let n = h.n_realizations();
    if n < 2 {
        return invalid("correlation estimates need at least 2 realizations");
    }
    if max_lag >= h.n_times() {
        return invalid(format!(
            "lag {max_lag} exceeds the history span of {} samples",
            h.n_times()
        ));
    }
    // Subtracting the sample mean removes one degree of freedom.
    let correction = n as f64 / (n as f64 - 1.0);
    let per_mode: Vec<(Vec<C64>, Vec<f64>, f64)> = (0..h.modes.len())
        .into_par_iter()
        .map(|m| {
            let fl = h.fluctuations(m);
            let mut c = Vec::with_capacity(max_lag + 1);
            let mut se = Vec::with_capacity(max_lag + 1);
            for lag in 0..=max_lag {
                let (v, s) = complex_mean_and_stderr(&lagged_products(&fl, &fl, lag), correction);
                c.push(v);
                se.push(s);
            }
            let half = h.n_times() / 2;
            let power = |range: std::ops::Range<usize>| {
                let len = range.len() as f64;
                fl.iter()
                    .map(|s| s[range.clone()].iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum::<f64>()
                    / (len * n as f64)
            };
            let ratio = power(0..half) / power(half..h.n_times());
            (c, se, ratio)
        })
        .collect();
    let mut table = CorrelationTable {
        dt: h.dt,
        modes: h.modes.clone(),
        c: Vec::with_capacity(per_mode.len()),
        stderr: Vec::with_capacity(per_mode.len()),
        n_realizations: n,
        stationarity: Vec::with_capacity(per_mode.len()),
    };
    for (c, se, ratio) in per_mode {
        table.c.push(c);
        table.stderr.push(se);
        table.stationarity.push(ratio);
    }
    Ok(table)
}

/// Cross-covariance of modes `a` and `b` at a lag, with its standard error.
pub fn cross_correlation(h: &Histories, a: usize, b: usize, lag: usize) -> Result<(C64, f64)> {
    let n = h.n_realizations();
    if n < 2 {
        return invalid("correlation estimates need at least 2 realizations");
    }
    if lag >= h.n_times() {
        return invalid("lag exceeds the history span");
    }
    let fa = h.fluctuations(a);
    let fb = h.fluctuations(b);
    Ok(complex_mean_and_stderr(
        &lagged_products(&fa, &fb, lag),
        n as f64 / (n as f64 - 1.0),
    ))
}

/// Worst cross-correlation over distinct mode pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalityReport {
    /// Largest `|C(k,k')| / SE`.
    pub max_z: f64,
    /// Largest `|C(k,k')| / sqrt(C(k,0) C(k',0))`.
    pub max_normalized: f64,
    pub worst_pair: (WaveVector, WaveVector),
    pub pairs: usize,
}

/// Check that equal-time (or lagged) correlations between distinct modes
/// vanish.
pub fn diagonality(h: &Histories, lag: usize) -> Result<DiagonalityReport> {
    let fl: Vec<Vec<Vec<C64>>> = (0..h.modes.len()).map(|m| h.fluctuations(m)).collect();
    let n = h.n_realizations();
    if n < 2 {
        return invalid("correlation estimates need at least 2 realizations");
    }
    let correction = n as f64 / (n as f64 - 1.0);
    let var: Vec<f64> = fl
        .iter()
        .map(|f| complex_mean_and_stderr(&lagged_products(f, f, 0), correction).0.re)
        .collect();
    let pairs: Vec<(usize, usize)> = (0..fl.len())
        .flat_map(|a| (0..fl.len()).filter(move |&b| b != a).map(move |b| (a, b)))
        .collect();
    let stats: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (c, se) = complex_mean_and_stderr(&lagged_products(&fl[a], &fl[b], lag), correction);
            let z = if se > 0.0 { c.norm() / se } else { 0.0 };
            (z, c.norm() / (var[a] * var[b]).sqrt())
        })
        .collect();
    let mut report = DiagonalityReport {
        max_z: 0.0,
        max_normalized: 0.0,
        worst_pair: (h.modes[0], h.modes[0]),
        pairs: pairs.len(),
    };
    for (&(a, b), &(z, norm)) in pairs.iter().zip(&stats) {
        if z > report.max_z {
            report.max_z = z;
            report.worst_pair = (h.modes[a], h.modes[b]);
        }
        report.max_normalized = report.max_normalized.max(norm);
    }
    Ok(report)
}

/// Least-squares fit of `ln(C(tau)/C(0)) = -tau^2 / sigma^2` over the leading
/// run of lags with `Re C(tau) > 0.1 Re C(0)`.
pub fn fit_gaussian_width(table: &CorrelationTable, mode: usize) -> Result<f64> {
    const THRESHOLD: f64 = 0.1;
    let k = table.modes[mode];
    let fail = |reason: &str| Error::FitFailure {
        k1: k.k1,
        k2: k.k2,
        reason: reason.into(),
    };
    let c0 = table.c[mode][0].re;
    if !(c0 > 0.0) {
        return Err(fail("zero-lag covariance is not positive"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0;
    for (lag, c) in table.c[mode].iter().enumerate().skip(1) {
        if !(c.re > THRESHOLD * c0) {
            break;
        }
        let tau2 = (lag as f64 * table.dt).powi(2);
        let y = (c.re / c0).ln();
        num -= y * tau2;
        den += tau2 * tau2;
        used += 1;
    }
    if used < 3 {
        return Err(fail(&format!("only {used} usable lags")));
    }
    let inv_sigma2 = num / den;
    if !(inv_sigma2 > 0.0) {
        return Err(fail("correlation does not decay"));
    }
    Ok(inv_sigma2.sqrt().recip())
}

/// Gaussian widths and the `sigma(k) = c / |k|` fit.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthModel {
    pub widths: Vec<(WaveVector, f64)>,
    pub c: f64,
    /// Coefficient of variation of `sigma(k) |k|`.
    pub residual: f64,
}

impl WidthModel {
    /// Model with a given constant and no per-mode data.
    pub fn constant(c: f64) -> Self {
        Self {
            widths: vec![],
            c,
            residual: 0.0,
        }
    }

    pub fn sigma(&self, k: WaveVector) -> f64 {
        self.c / k.norm()
    }
}

pub fn fit_width_model(widths: &[(WaveVector, f64)]) -> Result<WidthModel> {
    if widths.len() < 3 {
        return invalid(format!("width model needs at least 3 modes, got {}", widths.len()));
    }
    let scaled: Vec<f64> = widths.iter().map(|(k, s)| s * k.norm()).collect();
    let n = scaled.len() as f64;
    let c = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|x| (x - c).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(WidthModel {
        widths: widths.to_vec(),
        c,
        residual: var.sqrt() / c,
    })
}

/// Fit every mode of a table; modes that fail are reported separately.
pub fn fit_all_widths(table: &CorrelationTable) -> (Vec<(WaveVector, f64)>, Vec<Error>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for m in 0..table.modes.len() {
        match fit_gaussian_width(table, m) {
            Ok(s) => ok.push((table.modes[m], s)),
            Err(e) => failed.push(e),
        }
    }
    (ok, failed)
}

/// Zero-lag covariance against the invariant-measure value `T/(k^2 A^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakCheck {
    pub k: WaveVector,
    pub estimate: f64,
    pub stderr: f64,
    pub expected: f64,
}

impl PeakCheck {
    pub fn z(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.stderr
    }
}

pub fn peak_heights(table: &CorrelationTable, params: &FlowParams) -> Vec<PeakCheck> {
    table
        .modes
        .iter()
        .enumerate()
        .map(|(m, &k)| PeakCheck {
            k,
            estimate: table.c[m][0].re,
            stderr: table.stderr[m][0],
            expected: params.equilibrium_variance(k),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{sample_equilibrium, Lattice};
    use rand::SeedableRng;
    use std::sync::Arc;

    fn synthetic_table(dt: f64, lags: usize, f: impl Fn(f64) -> f64) -> CorrelationTable {
        CorrelationTable {
            dt,
            modes: vec![WaveVector::new(1, 0)],
            c: vec![(0..=lags).map(|l| C64::new(f(l as f64 * dt), 0.0)).collect()],
            stderr: vec![vec![0.0; lags + 1]],
            n_realizations: 10,
            stationarity: vec![1.0],
        }
    }

    #[test]
    fn gaussian_fit_is_exact_on_clean_input() {
        let t = synthetic_table(0.05, 100, |tau| 0.7 * (-tau * tau / 4.0).exp());
        let s = fit_gaussian_width(&t, 0).unwrap();
        assert!((s - 2.0).abs() < 1e-12, "{s}");
    }

    #[test]
    fn gaussian_fit_tolerates_one_percent_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        use rand_distr::{Distribution, Normal};
        let noise = Normal::new(0.0, 0.01).unwrap();
        for _ in 0..20 {
            let draws: Vec<f64> = (0..=100).map(|_| noise.sample(&mut rng)).collect();
            let t = synthetic_table(0.05, 100, |tau| {
                let i = (tau / 0.05).round() as usize;
                (-tau * tau / 0.49).exp() * (1.0 + draws[i])
            });
            let s = fit_gaussian_width(&t, 0).unwrap();
            assert!((s - 0.7).abs() < 0.05 * 0.7, "{s}");
        }
    }

    #[test]
    fn gaussian_fit_needs_three_lags() {
        let t = synthetic_table(0.5, 10, |tau| (-tau * tau / 0.25).exp());
        assert!(matches!(fit_gaussian_width(&t, 0), Err(Error::FitFailure { .. })));
        let t = synthetic_table(0.1, 10, |_| 0.0);
        assert!(fit_gaussian_width(&t, 0).is_err());
    }

    #[test]
    fn width_model_fit() {
        let ws: Vec<(WaveVector, f64)> = [(1, 0), (1, 1), (2, 3), (4, -1)]
            .iter()
            .map(|&(a, b)| {
                let k = WaveVector::new(a, b);
                (k, 3.0 / k.norm())
            })
            .collect();
        let m = fit_width_model(&ws).unwrap();
        assert!((m.c - 3.0).abs() < 1e-14);
        assert!(m.residual < 1e-14);
        assert!(fit_width_model(&ws[..2]).is_err());
    }

    /// Histories of independent AR(1) paths with a known autocovariance.
    #[test]
    fn estimator_recovers_known_autocovariance_and_rejects_bad_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        use rand_distr::{Distribution, StandardNormal};
        let (n, len, rho) = (400, 200, 0.9f64);
        let var = 2.0;
        let innov = (var * (1.0 - rho * rho) / 2.0).sqrt();
        let series: Vec<Vec<C64>> = (0..n)
            .map(|_| {
                let mut x = C64::new(
                    (var / 2.0).sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                    (var / 2.0).sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
                );
                (0..len)
                    .map(|_| {
                        let out = x;
                        let a: f64 = StandardNormal.sample(&mut rng);
                        let b: f64 = StandardNormal.sample(&mut rng);
                        x = x * rho + C64::new(innov * a, innov * b);
                        out
                    })
                    .collect()
            })
            .collect();
        let h = Histories {
            dt: 0.1,
            modes: vec![WaveVector::new(1, 0)],
            data: vec![series],
        };
        let t = estimate_correlations(&h, 10).unwrap();
        for lag in [0usize, 1, 5, 10] {
            let want = var * rho.powi(lag as i32);
            let got = t.c[0][lag];
            assert!((got.re - want).abs() < 4.0 * t.stderr[0][lag], "lag {lag}: {got} vs {want}");
        }
        assert!((t.at(0, -3) - t.c[0][3].conj()).norm() == 0.0);
        assert!(estimate_correlations(&h, 200).is_err());
        let single = Histories {
            data: vec![vec![h.data[0][0].clone()]],
            ..h
        };
        assert!(estimate_correlations(&single, 1).is_err());
    }

    fn small_config(n: usize, draw: SampledDraw) -> EnsembleConfig {
        let partition = ModePartition::new(1, 2).unwrap();
        let params = FlowParams::new(1.0, 1.0).unwrap();
        let lattice = Arc::new(Lattice::new(2));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let initial = sample_equilibrium(&lattice, &partition, &params, Region::Resolved, &mut rng);
        EnsembleConfig {
            n_ensemble: n,
            output_times: (0..=20).map(|i| i as f64 * 0.1).collect(),
            master_seed: 5,
            partition,
            params,
            initial_resolved: initial,
            integrator: IntegratorConfig {
                tol: 1e-7,
                ..Default::default()
            },
            sampled_draw: draw,
        }
    }

    #[test]
    fn zero_draw_single_realization_is_resolved_galerkin() {
        let cfg = small_config(1, SampledDraw::Zero);
        let res = run_ensemble(&cfg).unwrap();
        let d = Dynamics::new(cfg.partition, cfg.params);
        let direct = integrate_full(&d, &cfg.initial_resolved, &cfg.output_times, &cfg.integrator).unwrap();
        for (a, b) in res.mean.iter().zip(&direct) {
            assert_eq!(a, b);
        }
        let mean_a = &res.a_enstrophy.of_mean;
        let norm_a = &res.a_enstrophy.mean_of_norm;
        assert_eq!(mean_a, norm_a);
    }

    #[test]
    fn initial_mean_and_reproducibility() {
        let cfg = small_config(40, SampledDraw::Equilibrium);
        let a = run_ensemble(&cfg).unwrap();
        assert_eq!(
            a.mean[0].restricted(&cfg.partition, Region::Resolved),
            cfg.initial_resolved
        );
        for (i, &k) in a.mean[0].lattice().modes().iter().enumerate() {
            if cfg.partition.classify(k) == ModeClass::Sampled {
                let m = a.mean[0].amplitudes()[i].norm();
                assert!(m < 4.0 * a.mean_stderr[0][i], "{k}: {m}");
            }
        }
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a.mean, b.mean);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| run_ensemble(&cfg)).unwrap();
        assert_eq!(a.mean, c.mean);
        assert_eq!(a.a_enstrophy, c.a_enstrophy);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(0, SampledDraw::Equilibrium);
        assert!(run_ensemble(&cfg).is_err());
        cfg.n_ensemble = 2;
        cfg.output_times = vec![0.5, 1.0];
        assert!(run_ensemble(&cfg).is_err());
        cfg.output_times = vec![0.0, 1.0, 1.0];
        assert!(run_ensemble(&cfg).is_err());
    }
}
