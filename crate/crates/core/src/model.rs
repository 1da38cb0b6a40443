//! The two-block Hamiltonian, its spectral decomposition, derived time
//! scales, the Haar initial state and the measurement schedule.
//!
//! Basis ordering: indices `0..d0` span the range of the projector onto
//! outcome 0, indices `d0..D` the range of the projector onto outcome 1.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Basis, C64};
use crate::rngstreams::{MasterSeed, Substream};

/// Whether the off-diagonal coupling block is filled with real or complex
/// Gaussians. Complex entries have unit total variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingEntries {
    #[default]
    Real,
    Complex,
}

/// Scalar parameters of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub d0: usize,
    pub d1: usize,
    /// Width of each block's energy ladder.
    pub delta_eps: f64,
    /// Dimensionless coupling `8 λ² d0 d1 / (D δε²)`.
    pub c: f64,
    /// Number of projective steps.
    pub length: usize,
    /// Gap bounds in units of the relaxation time.
    pub interval_lo: f64,
    pub interval_hi: f64,
    pub tau_rescale: f64,
    /// Absolute time unit replacing τ for the schedule. Needed when c = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_override: Option<f64>,
    #[serde(default)]
    pub coupling_entries: CouplingEntries,
    pub master_seed: MasterSeed,
}

impl ModelSpec {
    /// Spec with the default δε = 0.5 and gap interval [19.5, 20.5] τ.
    pub fn new(d0: usize, d1: usize, c: f64, length: usize, seed: u64) -> ModelSpec {
        ModelSpec {
            dim: d0 + d1,
            d0,
            d1,
            delta_eps: 0.5,
            c,
            length,
            interval_lo: 19.5,
            interval_hi: 20.5,
            tau_rescale: 1.0,
            tau_override: None,
            coupling_entries: CouplingEntries::Real,
            master_seed: MasterSeed(seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.d0 == 0 || self.d1 == 0 {
            return bad(format!("block dimensions must be >= 1 (d0={}, d1={})", self.d0, self.d1));
        }
        if self.d0 + self.d1 != self.dim {
            return bad(format!("d0 + d1 = {} != D = {}", self.d0 + self.d1, self.dim));
        }
        if !(self.delta_eps > 0.0 && self.delta_eps.is_finite()) {
            return bad(format!("delta_eps must be positive, got {}", self.delta_eps));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be non-negative, got {}", self.c));
        }
        if !(self.interval_lo >= 0.0 && self.interval_lo < self.interval_hi && self.interval_hi.is_finite()) {
            return bad(format!(
                "interval bounds must satisfy 0 <= lo < hi, got [{}, {}]",
                self.interval_lo, self.interval_hi
            ));
        }
        if !(self.tau_rescale > 0.0 && self.tau_rescale.is_finite()) {
            return bad(format!("tau_rescale must be positive, got {}", self.tau_rescale));
        }
        if let Some(t) = self.tau_override {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("tau_override must be positive, got {t}"));
            }
        }
        Ok(())
    }

    /// Single-trial probability of outcome 1 at equilibrium, `d1 / D`.
    pub fn p1(&self) -> f64 {
        self.d1 as f64 / self.dim as f64
    }
}

/// Coupling strength λ from the dimensionless parameter c.
pub fn derive_lambda(spec: &ModelSpec) -> f64 {
    let (d, d0, d1) = (spec.dim as f64, spec.d0 as f64, spec.d1 as f64);
    (spec.c * d * spec.delta_eps * spec.delta_eps / (8.0 * d0 * d1)).sqrt()
}

/// Inverse of [`derive_lambda`].
pub fn coupling_parameter(lambda: f64, dim: usize, d0: usize, d1: usize, delta_eps: f64) -> f64 {
    8.0 * lambda * lambda * d0 as f64 * d1 as f64 / (dim as f64 * delta_eps * delta_eps)
}

/// Relaxation time `δε / (2π λ² D)`.
pub fn relaxation_time(dim: usize, delta_eps: f64, lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Err(Error::ZeroCoupling);
    }
    Ok(delta_eps / (2.0 * PI * lambda * lambda * dim as f64))
}

pub fn derive_tau(spec: &ModelSpec) -> Result<f64> {
    relaxation_time(spec.dim, spec.delta_eps, derive_lambda(spec))
}

/// Evenly spaced ladder on `[0, δε]`, endpoints included. A single level
/// sits at the midpoint.
pub fn energy_ladder(levels: usize, delta_eps: f64) -> Vec<f64> {
    match levels {
        0 => Vec::new(),
        1 => vec![delta_eps / 2.0],
        _ => (0..levels)
            .map(|j| j as f64 * delta_eps / (levels - 1) as f64)
            .collect(),
    }
}

/// Dense Hermitian matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    pub dim: usize,
    pub data: Vec<C64>,
    /// All entries have zero imaginary part.
    pub real: bool,
}

impl HermitianMatrix {
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        linalg::norm_sqr(&self.data).sqrt()
    }

    fn is_diagonal(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| i == j || self.get(i, j) == C64::new(0.0, 0.0)))
    }

    /// Conjugates the matrix by a basis permutation: the result has
    /// `out[a][b] = self[perm[a]][perm[b]]`.
    pub fn permuted(&self, perm: &[usize]) -> HermitianMatrix {
        let n = self.dim;
        let mut data = vec![C64::new(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                data[a * n + b] = self.get(perm[a], perm[b]);
            }
        }
        HermitianMatrix { dim: n, data, real: self.real }
    }
}

/// Builds the dense block Hamiltonian. The stream should be the
/// `Hamiltonian` substream of the experiment seed.
pub fn assemble_hamiltonian(spec: &ModelSpec, stream: &mut Substream) -> Result<HermitianMatrix> {
    spec.validate()?;
    let (n, d0, d1) = (spec.dim, spec.d0, spec.d1);
    let lambda = derive_lambda(spec);
    let mut data = vec![C64::new(0.0, 0.0); n * n];
    for (i, e) in energy_ladder(d0, spec.delta_eps).into_iter().enumerate() {
        data[i * n + i] = C64::new(e, 0.0);
    }
    for (j, e) in energy_ladder(d1, spec.delta_eps).into_iter().enumerate() {
        data[(d0 + j) * n + d0 + j] = C64::new(e, 0.0);
    }
    for i in 0..d0 {
        for j in 0..d1 {
            let r = match spec.coupling_entries {
                CouplingEntries::Real => C64::new(stream.standard_normal(), 0.0),
                CouplingEntries::Complex => {
                    let re = stream.standard_normal();
                    let im = stream.standard_normal();
                    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                }
            };
            let h = r * lambda;
            data[i * n + d0 + j] = h;
            data[(d0 + j) * n + i] = h.conj();
        }
    }
    Ok(HermitianMatrix {
        dim: n,
        data,
        real: spec.coupling_entries == CouplingEntries::Real,
    })
}

/// Eigendecomposition of the block Hamiltonian plus its derived scales.
///
/// Immutable once built and safe to share between workers.
#[derive(Clone, Debug)]
pub struct SpectralHamiltonian {
    eigenvalues: Vec<f64>,
    basis: Basis,
    pub d0: usize,
    pub d1: usize,
    pub lambda: f64,
    /// Relaxation time; infinite when λ = 0.
    pub tau: f64,
}

impl SpectralHamiltonian {
    /// Diagonalizes `matrix`. A matrix that is already diagonal is
    /// decomposed exactly in the standard basis.
    pub fn from_matrix(matrix: &HermitianMatrix, d0: usize, lambda: f64, tau: f64) -> Result<SpectralHamiltonian> {
        let n = matrix.dim;
        if d0 == 0 || d0 >= n {
            return Err(Error::InvalidSpec(format!("block split d0={d0} invalid for D={n}")));
        }
        let (eigenvalues, basis) = if matrix.is_diagonal() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| matrix.get(a, a).re.total_cmp(&matrix.get(b, b).re));
            let values = order.iter().map(|&i| matrix.get(i, i).re).collect();
            (values, Basis::identity(n, &order))
        } else {
            linalg::hermitian_eigen(n, &matrix.data, matrix.real)?
        };
        Ok(SpectralHamiltonian {
            eigenvalues,
            basis,
            d0,
            d1: n - d0,
            lambda,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Whether the eigenbasis is real orthogonal.
    pub fn has_real_basis(&self) -> bool {
        self.basis.is_real()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let n = self.dim();
        (0..n).map(|i| self.basis.entry(n, i, k)).collect()
    }

    /// Diagonal of `exp(-i E dt)`.
    pub fn phases(&self, dt: f64) -> Vec<C64> {
        self.eigenvalues
            .iter()
            .map(|&e| C64::from_polar(1.0, -e * dt))
            .collect()
    }

    /// Writes `V diag(phases) V† x` into `out`, using `scratch` (length D).
    pub fn propagate_into(&self, x: &[C64], phases: &[C64], scratch: &mut [C64], out: &mut [C64]) {
        self.basis.coefficients(x, scratch);
        for (s, p) in scratch.iter_mut().zip(phases) {
            *s *= p;
        }
        self.basis.combine(scratch, out);
    }

    /// `‖V Λ V† − H‖_F / ‖H‖_F`.
    pub fn reconstruction_error(&self, matrix: &HermitianMatrix) -> f64 {
        let n = self.dim();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.basis.entry(n, i, k) * self.eigenvalues[k] * self.basis.entry(n, j, k).conj();
                }
                err += (acc - matrix.get(i, j)).norm_sqr();
            }
        }
        err.sqrt() / matrix.frobenius()
    }

    /// Largest entry of `|V†V − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let cols: Vec<Vec<C64>> = (0..n).map(|k| self.eigenvector(k)).collect();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let g = linalg::inner(&cols[a], &cols[b]);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).norm());
            }
        }
        worst
    }
}

/// Assembles and diagonalizes the Hamiltonian for `spec`.
pub fn build_hamiltonian(spec: &ModelSpec, stream: &mut Substream) -> Result<SpectralHamiltonian> {
    let matrix = assemble_hamiltonian(spec, stream)?;
    let lambda = derive_lambda(spec);
    let tau = relaxation_time(spec.dim, spec.delta_eps, lambda).unwrap_or(f64::INFINITY);
    SpectralHamiltonian::from_matrix(&matrix, spec.d0, lambda, tau)
}

/// Complex amplitude vector in the projector-aligned basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<C64>) -> PureState {
        PureState { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `⟨Π_1⟩` of the normalized state.
    pub fn p1_expectation(&self, d0: usize) -> f64 {
        linalg::norm_sqr(&self.amplitudes[d0..]) / self.norm_sqr()
    }

    pub fn normalized(mut self) -> PureState {
        let s = 1.0 / self.norm();
        self.amplitudes.iter_mut().for_each(|z| *z *= s);
        self
    }
}

/// Haar-random pure state of dimension `dim`.
pub fn haar_state(dim: usize, stream: &mut Substream) -> PureState {
    let amplitudes = (0..dim)
        .map(|_| {
            let re = stream.standard_normal();
            let im = stream.standard_normal();
            C64::new(re, im)
        })
        .collect();
    PureState::new(amplitudes).normalized()
}

/// Projection times `t_1 < … < t_L`; `t_0 = 0` is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub times: Vec<f64>,
}

impl Schedule {
    pub fn from_gaps(gaps: &[f64]) -> Schedule {
        let mut t = 0.0;
        let times = gaps
            .iter()
            .map(|g| {
                t += g;
                t
            })
            .collect();
        Schedule { times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn gaps(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&t| {
                let g = t - prev;
                prev = t;
                g
            })
            .collect()
    }
}

/// Draws `spec.length` gaps uniformly from
/// `[interval_lo, interval_hi) · tau · tau_rescale`.
pub fn sample_schedule(spec: &ModelSpec, tau: f64, stream: &mut Substream) -> Result<Schedule> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("time unit must be positive and finite, got {tau}")));
    }
    let scale = tau * spec.tau_rescale;
    let (lo, hi) = (spec.interval_lo * scale, spec.interval_hi * scale);
    let gaps = (0..spec.length)
        .map(|_| stream.uniform(lo, hi))
        .collect::<Result<Vec<_>>>()?;
    Ok(Schedule::from_gaps(&gaps))
}

/// `exp(-i H dt) |state⟩`.
pub fn evolve(ham: &SpectralHamiltonian, state: &PureState, dt: f64) -> PureState {
    if dt == 0.0 {
        return state.clone();
    }
    let n = ham.dim();
    let phases = ham.phases(dt);
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut out = vec![C64::new(0.0, 0.0); n];
    ham.propagate_into(&state.amplitudes, &phases, &mut scratch, &mut out);
    PureState::new(out)
}

/// Bytes held by the eigenvector matrix of a `dim`-dimensional model.
pub fn eigenbasis_bytes(dim: usize, real: bool) -> u64 {
    let entry = if real { 8 } else { 16 };
    (dim as u64) * (dim as u64) * entry
}
