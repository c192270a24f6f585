//! Wavevector lattice and divergence-free spectral velocity fields on the
//! periodic square `[0, 2pi]^2`.
//!
//! A field is stored on the canonical half-lattice (`k1 > 0`, or `k1 == 0`
//! and `k2 > 0`) as one complex amplitude `w_k` per mode, along the unit
//! vector `e_k = (k2, -k1) / |k|`. The velocity coefficient is
//! `u_k = w_k e_k`; the conjugate mode is implicit, `u_{-k} = conj(u_k)`,
//! which in amplitude form reads `w_{-k} = -conj(w_k)`. Divergence freedom
//! and Hermitian symmetry therefore hold by construction, and the zero mode
//! carries no amplitude.

use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub type C64 = Complex64;

/// Integer wavevector `(k1, k2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct WaveVector {
    pub k1: i32,
    pub k2: i32,
}

impl WaveVector {
    pub const fn new(k1: i32, k2: i32) -> Self {
        Self { k1, k2 }
    }

    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    /// `k^2 = k1^2 + k2^2`.
    pub fn norm_sq(self) -> f64 {
        (self.k1 as f64).powi(2) + (self.k2 as f64).powi(2)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(self) -> i32 {
        self.k1.abs().max(self.k2.abs())
    }

    pub fn is_canonical(self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && self.k2 > 0)
    }

    /// Unit transverse direction `(k2, -k1)/|k|`.
    pub fn unit_perp(self) -> [f64; 2] {
        let n = self.norm();
        [self.k2 as f64 / n, -self.k1 as f64 / n]
    }

    pub fn as_f64(self) -> [f64; 2] {
        [self.k1 as f64, self.k2 as f64]
    }
}

impl std::ops::Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector::new(-self.k1, -self.k2)
    }
}

impl std::ops::Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.k1 - o.k1, self.k2 - o.k2)
    }
}

impl std::ops::Add for WaveVector {
    type Output = WaveVector;
    fn add(self, o: WaveVector) -> WaveVector {
        WaveVector::new(self.k1 + o.k1, self.k2 + o.k2)
    }
}

impl fmt::Display for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Parameters of the averaged Euler flow. The exponent of `A` is fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    /// Length scale `a` in `A = 1 - a^2 Laplacian`.
    pub a: f64,
    pub temperature: f64,
}

impl FlowParams {
    pub fn new(a: f64, temperature: f64) -> Result<Self> {
        if !(a.is_finite() && a >= 0.0) {
            return invalid(format!("a must be finite and non-negative, got {a}"));
        }
        if !(temperature.is_finite() && temperature > 0.0) {
            return invalid(format!("temperature must be finite and positive, got {temperature}"));
        }
        Ok(Self { a, temperature })
    }

    /// Exponent `s` of `A = (1 - a^2 Laplacian)^s`.
    pub const fn s(&self) -> i32 {
        1
    }

    /// Equilibrium variance `E|u_k|^2 = T / (k^2 A(k)^2)`.
    pub fn equilibrium_variance(&self, k: WaveVector) -> f64 {
        let ak = a_operator(k, self);
        self.temperature / (k.norm_sq() * ak * ak)
    }
}

/// Fourier symbol `A(k) = (1 + a^2 k^2)^s` with `s = 1`.
pub fn a_operator(k: WaveVector, params: &FlowParams) -> f64 {
    (1.0 + params.a * params.a * k.norm_sq()).powi(params.s())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeClass {
    Resolved,
    Sampled,
    Excluded,
}

/// Resolved modes have `|k|_inf <= m`, sampled modes
/// `m < |k|_inf <= sampled_bound`, and everything beyond is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePartition {
    m: i32,
    sampled_bound: i32,
}

impl ModePartition {
    pub fn new(m: i32, sampled_bound: i32) -> Result<Self> {
        if m < 0 {
            return invalid(format!("resolved cutoff m must be >= 0, got {m}"));
        }
        if sampled_bound < 1 || sampled_bound < 2 * m {
            return invalid(format!(
                "sampled_bound must be >= max(1, 2m): m = {m}, sampled_bound = {sampled_bound}"
            ));
        }
        Ok(Self { m, sampled_bound })
    }

    pub fn m(&self) -> i32 {
        self.m
    }

    pub fn sampled_bound(&self) -> i32 {
        self.sampled_bound
    }

    pub fn classify(&self, k: WaveVector) -> ModeClass {
        let n = k.norm_inf();
        if n <= self.m {
            ModeClass::Resolved
        } else if n <= self.sampled_bound {
            ModeClass::Sampled
        } else {
            ModeClass::Excluded
        }
    }

    /// Lattice of all retained modes.
    pub fn lattice(&self) -> Arc<Lattice> {
        Arc::new(Lattice::new(self.sampled_bound))
    }
}

/// A set of retained modes selected from a partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    All,
    Resolved,
    Sampled,
}

impl Region {
    pub fn contains(self, partition: &ModePartition, k: WaveVector) -> bool {
        match (self, partition.classify(k)) {
            (_, ModeClass::Excluded) => false,
            (Region::All, _) => true,
            (Region::Resolved, c) => c == ModeClass::Resolved,
            (Region::Sampled, c) => c == ModeClass::Sampled,
        }
    }
}

/// The square lattice `|k|_inf <= bound`, `k != 0`, with canonical modes in
/// lexicographic `(k1, k2)` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    bound: i32,
    modes: Vec<WaveVector>,
    /// Per grid point: `+(i+1)` for canonical mode `i`, `-(i+1)` for its
    /// conjugate, 0 for the origin.
    grid: Vec<i32>,
}

impl Lattice {
    pub fn new(bound: i32) -> Self {
        assert!(bound >= 1, "lattice bound must be positive");
        let mut modes = Vec::new();
        for k1 in 0..=bound {
            for k2 in -bound..=bound {
                let k = WaveVector::new(k1, k2);
                if k.is_canonical() {
                    modes.push(k);
                }
            }
        }
        let side = (2 * bound + 1) as usize;
        let mut grid = vec![0; side * side];
        for (i, &k) in modes.iter().enumerate() {
            let tag = i as i32 + 1;
            grid[Self::grid_pos(bound, k)] = tag;
            grid[Self::grid_pos(bound, -k)] = -tag;
        }
        Self { bound, modes, grid }
    }

    fn grid_pos(bound: i32, k: WaveVector) -> usize {
        let side = 2 * bound + 1;
        ((k.k1 + bound) * side + (k.k2 + bound)) as usize
    }

    pub fn bound(&self) -> i32 {
        self.bound
    }

    /// Number of canonical modes (half the retained lattice).
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[WaveVector] {
        &self.modes
    }

    pub fn contains(&self, k: WaveVector) -> bool {
        !k.is_zero() && k.norm_inf() <= self.bound
    }

    /// Canonical index of `k` and whether `k` is the conjugate partner.
    pub fn find(&self, k: WaveVector) -> Option<(usize, bool)> {
        if !self.contains(k) {
            return None;
        }
        let tag = self.grid[Self::grid_pos(self.bound, k)];
        Some(((tag.unsigned_abs() - 1) as usize, tag < 0))
    }

    /// Dense position of `k` on the full `(2b+1)^2` grid.
    pub fn full_index(&self, k: WaveVector) -> Option<usize> {
        if k.norm_inf() <= self.bound {
            Some(Self::grid_pos(self.bound, k))
        } else {
            None
        }
    }

    pub fn full_len(&self) -> usize {
        let side = (2 * self.bound + 1) as usize;
        side * side
    }

    /// Every retained wavevector, both halves, in grid order.
    pub fn full_modes(&self) -> impl Iterator<Item = WaveVector> + '_ {
        let b = self.bound;
        (-b..=b)
            .flat_map(move |k1| (-b..=b).map(move |k2| WaveVector::new(k1, k2)))
            .filter(|k| !k.is_zero())
    }
}

/// Divergence-free, Hermitian-symmetric velocity coefficients on a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: Arc<Lattice>,
    amps: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(lattice: Arc<Lattice>) -> Self {
        let n = lattice.len();
        Self {
            lattice,
            amps: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn from_amplitudes(lattice: Arc<Lattice>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != lattice.len() {
            return invalid(format!(
                "expected {} amplitudes, got {}",
                lattice.len(),
                amps.len()
            ));
        }
        Ok(Self { lattice, amps })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Transverse amplitudes of the canonical modes.
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    /// Amplitude `w_k` for any `k` (conjugate half included); zero outside
    /// the lattice and at the origin.
    pub fn amplitude(&self, k: WaveVector) -> C64 {
        match self.lattice.find(k) {
            Some((i, false)) => self.amps[i],
            Some((i, true)) => -self.amps[i].conj(),
            None => C64::new(0.0, 0.0),
        }
    }

    /// Set the amplitude of `k`; the conjugate partner follows.
    pub fn set_amplitude(&mut self, k: WaveVector, w: C64) -> Result<()> {
        match self.lattice.find(k) {
            Some((i, false)) => self.amps[i] = w,
            Some((i, true)) => self.amps[i] = -w.conj(),
            None => return invalid(format!("mode {k} is not on the lattice")),
        }
        Ok(())
    }

    /// Velocity vector `u_k = w_k e_k`.
    pub fn vector(&self, k: WaveVector) -> [C64; 2] {
        if k.is_zero() {
            return [C64::new(0.0, 0.0); 2];
        }
        let w = self.amplitude(k);
        let e = k.unit_perp();
        [w * e[0], w * e[1]]
    }

    /// `|u_k|^2`.
    pub fn norm_sq(&self, k: WaveVector) -> f64 {
        self.amplitude(k).norm_sqr()
    }

    /// `(k, u_k)` for every canonical mode.
    pub fn vectors(&self) -> Vec<(WaveVector, [C64; 2])> {
        self.lattice.modes().iter().map(|&k| (k, self.vector(k))).collect()
    }

    /// Build a field from explicit velocity vectors. Entries may use either
    /// half of the lattice; a mode given twice must satisfy
    /// `u_{-k} = conj(u_k)`. Vectors must be divergence-free.
    pub fn from_vectors(lattice: Arc<Lattice>, entries: &[(WaveVector, [C64; 2])]) -> Result<Self> {
        const TOL: f64 = 1e-12;
        let mut amps = vec![C64::new(0.0, 0.0); lattice.len()];
        let mut seen: Vec<Option<[C64; 2]>> = vec![None; lattice.len()];
        for &(k, v) in entries {
            let Some((i, conj)) = lattice.find(k) else {
                return Err(Error::InvalidField(format!("mode {k} is not on the lattice")));
            };
            let residual = divergence_residual(std::iter::once((k, v)));
            if residual > TOL {
                return Err(Error::InvalidField(format!(
                    "mode {k} is not divergence-free (residual {residual:e})"
                )));
            }
            let canon = if conj { [v[0].conj(), v[1].conj()] } else { v };
            if let Some(prev) = seen[i] {
                let scale = 1.0 + vec_norm(prev).max(vec_norm(canon));
                let diff = vec_norm([prev[0] - canon[0], prev[1] - canon[1]]);
                if diff > TOL * scale {
                    return Err(Error::InvalidField(format!(
                        "modes {k} and {} violate Hermitian symmetry",
                        -k
                    )));
                }
            }
            seen[i] = Some(canon);
            let ck = lattice.modes()[i];
            let e = ck.unit_perp();
            amps[i] = canon[0] * e[0] + canon[1] * e[1];
        }
        Ok(Self { lattice, amps })
    }

    /// Copy of the field with every mode outside `region` set to zero.
    pub fn restricted(&self, partition: &ModePartition, region: Region) -> Self {
        let mut out = self.clone();
        for (w, &k) in out.amps.iter_mut().zip(self.lattice.modes()) {
            if !region.contains(partition, k) {
                *w = C64::new(0.0, 0.0);
            }
        }
        out
    }

    /// True if every nonzero mode lies in `region`.
    pub fn supported_in(&self, partition: &ModePartition, region: Region) -> bool {
        self.amps
            .iter()
            .zip(self.lattice.modes())
            .all(|(w, &k)| *w == C64::new(0.0, 0.0) || region.contains(partition, k))
    }

    /// Interleaved `[re, im, re, im, ...]` state for the integrators.
    pub fn to_state(&self) -> Vec<f64> {
        self.amps.iter().flat_map(|w| [w.re, w.im]).collect()
    }

    pub fn from_state(lattice: Arc<Lattice>, y: &[f64]) -> Result<Self> {
        if y.len() != 2 * lattice.len() {
            return invalid("state length does not match the lattice");
        }
        let amps = y.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
        Ok(Self { lattice, amps })
    }

    /// `self + scale * other`, on the same lattice.
    pub fn axpy(&self, scale: f64, other: &SpectralField) -> SpectralField {
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a + b * scale)
            .collect();
        Self {
            lattice: self.lattice.clone(),
            amps,
        }
    }

    pub fn scaled(&self, scale: f64) -> SpectralField {
        Self {
            lattice: self.lattice.clone(),
            amps: self.amps.iter().map(|a| a * scale).collect(),
        }
    }

    /// Largest `|w_k - w'_k|` over the lattice.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.amps.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

fn vec_norm(v: [C64; 2]) -> f64 {
    (v[0].norm_sqr() + v[1].norm_sqr()).sqrt()
}

/// Leray projection `P(k) v` with `P_ab = delta_ab - k_a k_b / k^2`.
pub fn leray_projection(k: WaveVector, v: [C64; 2]) -> Result<[C64; 2]> {
    if k.is_zero() {
        return invalid("Leray projection is undefined at k = 0");
    }
    let [k1, k2] = k.as_f64();
    let kk = k.norm_sq();
    let dot = v[0] * k1 + v[1] * k2;
    Ok([v[0] - dot * (k1 / kk), v[1] - dot * (k2 / kk)])
}

/// `max_k |k . u_k| / (|k| |u_k|)`, with 0/0 read as 0.
pub fn divergence_residual<I>(entries: I) -> f64
where
    I: IntoIterator<Item = (WaveVector, [C64; 2])>,
{
    entries
        .into_iter()
        .map(|(k, v)| {
            let [k1, k2] = k.as_f64();
            let num = (v[0] * k1 + v[1] * k2).norm();
            let den = k.norm() * vec_norm(v);
            if den == 0.0 {
                0.0
            } else {
                num / den
            }
        })
        .fold(0.0, f64::max)
}

/// Draw a centered complex Gaussian with `E|w|^2 = variance`.
pub(crate) fn complex_gaussian<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> C64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Sample the invariant measure on `region`, zero elsewhere. Each canonical
/// mode pair is an independent transverse complex Gaussian with
/// `E[u*_{a,k} u_{b,k}] = T P_ab(k) / (k^2 A(k)^2)`. Draws are taken in
/// lattice order, only for modes inside the region.
pub fn sample_equilibrium<R: Rng + ?Sized>(
    lattice: &Arc<Lattice>,
    partition: &ModePartition,
    params: &FlowParams,
    region: Region,
    rng: &mut R,
) -> SpectralField {
    let mut field = SpectralField::zeros(lattice.clone());
    for (w, &k) in field.amps.iter_mut().zip(lattice.modes()) {
        if region.contains(partition, k) {
            *w = complex_gaussian(params.equilibrium_variance(k), rng);
        }
    }
    field
}

/// Keep the resolved modes of `resolved` and draw the sampled region from
/// the invariant measure. The measure is a product over modes, so
/// conditioning on the resolved modes leaves the sampled marginals unchanged.
pub fn conditional_sample<R: Rng + ?Sized>(
    resolved: &SpectralField,
    partition: &ModePartition,
    params: &FlowParams,
    rng: &mut R,
) -> Result<SpectralField> {
    if !resolved.supported_in(partition, Region::Resolved) {
        return Err(Error::InvalidField(
            "resolved values must vanish outside |k|_inf <= m".into(),
        ));
    }
    let lattice = resolved.lattice().clone();
    if lattice.bound() != partition.sampled_bound() {
        return invalid("field lattice does not match the partition");
    }
    let mut out = sample_equilibrium(&lattice, partition, params, Region::Sampled, rng);
    for (i, &k) in lattice.modes().iter().enumerate() {
        if partition.classify(k) == ModeClass::Resolved {
            out.amps[i] = resolved.amps[i];
        }
    }
    Ok(out)
}

pub const SNAPSHOT_HEADER: &str = "k1,k2,re_u1,im_u1,re_u2,im_u2";

/// Write a field snapshot, one row per canonical mode in lattice order.
pub fn write_snapshot<W: Write>(field: &SpectralField, mut out: W) -> Result<()> {
    writeln!(out, "{SNAPSHOT_HEADER}")?;
    for (k, v) in field.vectors() {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            k.k1, k.k2, v[0].re, v[0].im, v[1].re, v[1].im
        )?;
    }
    Ok(())
}

/// Read a snapshot onto a lattice of the given bound. Rows may name either
/// half of the lattice; vectors are validated as in
/// [`SpectralField::from_vectors`].
pub fn read_snapshot<R: BufRead>(input: R, bound: i32) -> Result<SpectralField> {
    let mut entries = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if n == 0 {
            if line != SNAPSHOT_HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{SNAPSHOT_HEADER}`"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let parse_err = |message: String| Error::Parse { line: n + 1, message };
        if cols.len() != 6 {
            return Err(parse_err(format!("expected 6 columns, got {}", cols.len())));
        }
        let int = |s: &str| s.trim().parse::<i32>().map_err(|e| parse_err(e.to_string()));
        let real = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()));
        let k = WaveVector::new(int(cols[0])?, int(cols[1])?);
        let v = [
            C64::new(real(cols[2])?, real(cols[3])?),
            C64::new(real(cols[4])?, real(cols[5])?),
        ];
        entries.push((k, v));
    }
    SpectralField::from_vectors(Arc::new(Lattice::new(bound)), &entries)
}
