//! Truncated Fourier dynamics of the 2D averaged Euler equations
//! `d(Au)/dt + (u.grad)Au + (grad u)^T.Au = -grad p`, `div u = 0`.
//!
//! With `v = Au`, the quadratic term for a triad `k = p + q` is
//! `i (q.u_p) A(q) u_q + i p A(q) (u_q.u_p)`. Projecting onto the transverse
//! direction `e_k` and dividing by `A(k)` gives
//!
//! ```text
//! dw_k/dt = i * sum_{p+q=k} c(k; p, q) w_p w_q,
//! c(k; p, q) = -A(q) [ (q.e_p)(e_k.e_q) + (e_k.p)(e_q.e_p) ] / A(k)
//! ```
//!
//! over every ordered pair of retained modes. The coefficients depend only on
//! the wavevectors and are tabulated once in a [`ConvolutionKernel`].

use std::sync::Arc;

use crate::spectral::{
    a_operator, FlowParams, Lattice, ModeClass, ModePartition, Region, SpectralField, WaveVector,
    C64,
};

/// Which factor classes a triad couples, seen from a resolved output mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Both factors resolved.
    G1,
    /// One resolved factor and one sampled factor.
    G2,
    /// Both factors sampled.
    G3,
}

#[derive(Debug, Clone, Copy)]
struct Triad {
    /// Full-grid positions of the two factors.
    p: u32,
    q: u32,
    coef: f64,
    group: Group,
    p_resolved: bool,
}

#[derive(Debug, Clone, Copy)]
struct GammaTerm {
    /// Full-grid position of the resolved factor `p`.
    p: u32,
    q: WaveVector,
    weight: f64,
}

/// Interaction coefficients of the truncated convolution, per canonical
/// output mode, ordered lexicographically in the first factor.
#[derive(Debug, Clone)]
pub struct ConvolutionKernel {
    triads: Vec<Vec<Triad>>,
}

impl ConvolutionKernel {
    /// Total number of ordered triads.
    pub fn len(&self) -> usize {
        self.triads.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `g1 + g2 + g3` equals the truncated right-hand side on resolved modes.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsDecomposition {
    pub g1: SpectralField,
    pub g2: SpectralField,
    pub g3: SpectralField,
}

/// Which wavevector supplies the correlation width in the damping formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaArgument {
    /// `sigma(k)` of the resolved output mode.
    #[default]
    Resolved,
    /// `sigma(q)` of the sampled mode in each term.
    Sampled,
}

/// Diagonal damping rates `gamma_{k,k}` per canonical mode (zero outside the
/// resolved region). The sign is whatever the formula produces.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingDiagonal {
    pub values: Vec<f64>,
}

/// Precomputed truncated dynamics for one partition and parameter set.
#[derive(Debug, Clone)]
pub struct Dynamics {
    lattice: Arc<Lattice>,
    partition: ModePartition,
    params: FlowParams,
    kernel: ConvolutionKernel,
    gamma_terms: Vec<Vec<GammaTerm>>,
    /// Indices of resolved canonical modes.
    resolved: Vec<usize>,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl Dynamics {
    pub fn new(partition: ModePartition, params: FlowParams) -> Self {
        let lattice = partition.lattice();
        let b = lattice.bound();
        let mut triads = Vec::with_capacity(lattice.len());
        let mut gamma_terms = Vec::with_capacity(lattice.len());
        let mut resolved = Vec::new();
        let t = params.temperature;
        let sqrt_pi = std::f64::consts::PI.sqrt();

        for (i, &k) in lattice.modes().iter().enumerate() {
            let k_class = partition.classify(k);
            if k_class == ModeClass::Resolved {
                resolved.push(i);
            }
            let ak = a_operator(k, &params);
            let ek = k.unit_perp();
            let mut list = Vec::new();
            let mut glist = Vec::new();
            for p in lattice.full_modes() {
                let q = k - p;
                if q.is_zero() || q.norm_inf() > b {
                    continue;
                }
                let ep = p.unit_perp();
                let eq = q.unit_perp();
                let aq = a_operator(q, &params);
                let coef = -aq * (dot(q.as_f64(), ep) * dot(ek, eq) + dot(ek, p.as_f64()) * dot(eq, ep)) / ak;
                let cp = partition.classify(p);
                let cq = partition.classify(q);
                let group = match (cp, cq) {
                    (ModeClass::Resolved, ModeClass::Resolved) => Group::G1,
                    (ModeClass::Sampled, ModeClass::Sampled) => Group::G3,
                    _ => Group::G2,
                };
                list.push(Triad {
                    p: lattice.full_index(p).unwrap() as u32,
                    q: lattice.full_index(q).unwrap() as u32,
                    coef,
                    group,
                    p_resolved: cp == ModeClass::Resolved,
                });

                if k_class == ModeClass::Resolved && cp == ModeClass::Resolved && cq == ModeClass::Sampled {
                    let ap = a_operator(p, &params);
                    let (p2, q2, k2) = (p.norm_sq(), q.norm_sq(), k.norm_sq());
                    let q_perp_dot_p = (q.k2 as f64) * (p.k1 as f64) - (q.k1 as f64) * (p.k2 as f64);
                    let spread = ap * p2 - aq * q2;
                    let weight = t * sqrt_pi * q_perp_dot_p * spread * spread
                        / (q2 * q2 * aq * aq * p2 * k2 * ak * ak);
                    glist.push(GammaTerm {
                        p: lattice.full_index(p).unwrap() as u32,
                        q,
                        weight,
                    });
                }
            }
            triads.push(list);
            gamma_terms.push(glist);
        }

        Self {
            lattice,
            partition,
            params,
            kernel: ConvolutionKernel { triads },
            gamma_terms,
            resolved,
        }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn partition(&self) -> &ModePartition {
        &self.partition
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn kernel(&self) -> &ConvolutionKernel {
        &self.kernel
    }

    /// Canonical indices of the resolved modes.
    pub fn resolved_indices(&self) -> &[usize] {
        &self.resolved
    }

    /// Expand canonical amplitudes onto the full grid (`w_{-k} = -conj(w_k)`).
    pub(crate) fn expand(&self, amps: &[C64], full: &mut Vec<C64>) {
        full.clear();
        full.resize(self.lattice.full_len(), C64::new(0.0, 0.0));
        for (&k, &w) in self.lattice.modes().iter().zip(amps) {
            full[self.lattice.full_index(k).unwrap()] = w;
            full[self.lattice.full_index(-k).unwrap()] = -w.conj();
        }
    }

    fn expand_state(&self, y: &[f64], full: &mut Vec<C64>) {
        full.clear();
        full.resize(self.lattice.full_len(), C64::new(0.0, 0.0));
        for (i, &k) in self.lattice.modes().iter().enumerate() {
            let w = C64::new(y[2 * i], y[2 * i + 1]);
            full[self.lattice.full_index(k).unwrap()] = w;
            full[self.lattice.full_index(-k).unwrap()] = -w.conj();
        }
    }

    fn sum_triads(&self, out_idx: usize, x: &[C64], y: &[C64], keep: impl Fn(&Triad) -> bool) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.kernel.triads[out_idx] {
            if keep(t) {
                acc += x[t.p as usize] * y[t.q as usize] * t.coef;
            }
        }
        C64::new(-acc.im, acc.re)
    }

    /// Truncated right-hand side `dw/dt` on every retained mode.
    pub fn full_rhs(&self, f: &SpectralField) -> SpectralField {
        let mut full = Vec::new();
        self.expand(f.amplitudes(), &mut full);
        let amps = (0..self.lattice.len())
            .map(|i| self.sum_triads(i, &full, &full, |_| true))
            .collect();
        SpectralField::from_amplitudes(self.lattice.clone(), amps).unwrap()
    }

    /// Full right-hand side on the interleaved integrator state.
    pub fn full_rhs_state(&self, y: &[f64], scratch: &mut Vec<C64>, dydt: &mut [f64]) {
        self.expand_state(y, scratch);
        for i in 0..self.lattice.len() {
            let d = self.sum_triads(i, scratch, scratch, |_| true);
            dydt[2 * i] = d.re;
            dydt[2 * i + 1] = d.im;
        }
    }

    /// Split the right-hand side on resolved modes by factor classes.
    pub fn rhs_decomposition(&self, f: &SpectralField) -> RhsDecomposition {
        let mut full = Vec::new();
        self.expand(f.amplitudes(), &mut full);
        let zero = SpectralField::zeros(self.lattice.clone());
        let mut out = RhsDecomposition {
            g1: zero.clone(),
            g2: zero.clone(),
            g3: zero,
        };
        for &i in &self.resolved {
            out.g1.amplitudes_mut()[i] = self.sum_triads(i, &full, &full, |t| t.group == Group::G1);
            out.g2.amplitudes_mut()[i] = self.sum_triads(i, &full, &full, |t| t.group == Group::G2);
            out.g3.amplitudes_mut()[i] = self.sum_triads(i, &full, &full, |t| t.group == Group::G3);
        }
        out
    }

    /// Mixed-term operator `L(u) dv`: the G2 sum with the resolved factor
    /// from `resolved` and the sampled factor from `delta_v`.
    pub fn apply_l(&self, resolved: &SpectralField, delta_v: &SpectralField) -> SpectralField {
        let mut u = Vec::new();
        let mut v = Vec::new();
        self.expand(resolved.amplitudes(), &mut u);
        self.expand(delta_v.amplitudes(), &mut v);
        let mut out = SpectralField::zeros(self.lattice.clone());
        for &i in &self.resolved {
            out.amplitudes_mut()[i] = self.apply_l_mode(i, &u, &v);
        }
        out
    }

    pub(crate) fn apply_l_mode(&self, i: usize, u: &[C64], v: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for t in &self.kernel.triads[i] {
            if t.group == Group::G2 {
                let prod = if t.p_resolved {
                    u[t.p as usize] * v[t.q as usize]
                } else {
                    v[t.p as usize] * u[t.q as usize]
                };
                acc += prod * t.coef;
            }
        }
        C64::new(-acc.im, acc.re)
    }

    pub(crate) fn g1_mode(&self, i: usize, u: &[C64]) -> C64 {
        self.sum_triads(i, u, u, |t| t.group == Group::G1)
    }

    /// Diagonal damping
    /// `gamma_kk = sum_{k=p+q} T sqrt(pi) sigma (q_perp.p) (A(p)p^2 - A(q)q^2)^2 |u_p|^2
    ///             / (q^4 A(q)^2 p^2 k^2 A(k)^2)`
    /// with `p` resolved, `q` sampled and `q_perp = (q2, -q1)`.
    pub fn gamma_diagonal(
        &self,
        resolved: &SpectralField,
        sigma: &dyn Fn(WaveVector) -> f64,
        argument: SigmaArgument,
    ) -> DampingDiagonal {
        let mut full = Vec::new();
        self.expand(resolved.amplitudes(), &mut full);
        let mut values = vec![0.0; self.lattice.len()];
        self.gamma_into(&full, sigma, argument, &mut values);
        DampingDiagonal { values }
    }

    pub(crate) fn gamma_into(
        &self,
        full: &[C64],
        sigma: &dyn Fn(WaveVector) -> f64,
        argument: SigmaArgument,
        values: &mut [f64],
    ) {
        for &i in &self.resolved {
            let k = self.lattice.modes()[i];
            let sigma_k = sigma(k);
            let mut g = 0.0;
            for term in &self.gamma_terms[i] {
                let s = match argument {
                    SigmaArgument::Resolved => sigma_k,
                    SigmaArgument::Sampled => sigma(term.q),
                };
                g += s * term.weight * full[term.p as usize].norm_sqr();
            }
            values[i] = g;
        }
    }
}

/// Energy `(u, Au)` in Parseval form over the canonical modes.
pub fn energy(f: &SpectralField, params: &FlowParams) -> f64 {
    f.lattice()
        .modes()
        .iter()
        .zip(f.amplitudes())
        .map(|(&k, w)| a_operator(k, params) * w.norm_sqr())
        .sum()
}

/// A-enstrophy `sum k^2 (1 + a^2 k^2)^2 |u_k|^2` over the canonical modes.
pub fn a_enstrophy(f: &SpectralField, params: &FlowParams) -> f64 {
    f.lattice()
        .modes()
        .iter()
        .zip(f.amplitudes())
        .map(|(&k, w)| {
            let a = a_operator(k, params);
            k.norm_sq() * a * a * w.norm_sqr()
        })
        .sum()
}

/// A-enstrophy restricted to a region of the partition.
pub fn a_enstrophy_in(f: &SpectralField, params: &FlowParams, partition: &ModePartition, region: Region) -> f64 {
    a_enstrophy(&f.restricted(partition, region), params)
}

/// Vorticity coefficients `xi_k = i (k1 u2 - k2 u1)` on the canonical modes.
pub fn vorticity(f: &SpectralField) -> Vec<(WaveVector, C64)> {
    f.vectors()
        .into_iter()
        .map(|(k, u)| {
            let c = u[1] * k.k1 as f64 - u[0] * k.k2 as f64;
            (k, C64::new(-c.im, c.re))
        })
        .collect()
}
