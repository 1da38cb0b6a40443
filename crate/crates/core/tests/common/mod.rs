//! Reference implementations used only by the integration tests. Nothing
//! here goes through the eigendecomposition or the grouped recursion.

#![allow(dead_code)]

use branchsim::model::{
    assemble_hamiltonian, build_hamiltonian, haar_state, sample_schedule, HermitianMatrix, ModelSpec,
    PureState, Schedule, SpectralHamiltonian,
};
use branchsim::rngstreams::{substream, StreamLabel};
use branchsim::C64;
use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

/// Everything a test needs for one model instance.
pub struct Instance {
    pub spec: ModelSpec,
    pub matrix: HermitianMatrix,
    pub ham: SpectralHamiltonian,
    pub psi0: PureState,
    pub schedule: Schedule,
}

pub fn instance(d0: usize, d1: usize, c: f64, length: usize, seed: u64) -> Instance {
    let spec = ModelSpec::new(d0, d1, c, length, seed);
    instance_from(spec)
}

pub fn instance_from(spec: ModelSpec) -> Instance {
    let matrix = assemble_hamiltonian(&spec, &mut substream(spec.master_seed, StreamLabel::Hamiltonian)).unwrap();
    let ham = build_hamiltonian(&spec, &mut substream(spec.master_seed, StreamLabel::Hamiltonian)).unwrap();
    let psi0 = haar_state(spec.dim, &mut substream(spec.master_seed, StreamLabel::InitialState));
    let unit = spec.tau_override.unwrap_or(ham.tau);
    let schedule = sample_schedule(&spec, unit, &mut substream(spec.master_seed, StreamLabel::TimeGrid)).unwrap();
    Instance { spec, matrix, ham, psi0, schedule }
}

/// Dense complex matrix, row-major.
#[derive(Clone, Debug)]
pub struct Dense {
    pub n: usize,
    pub a: Vec<C64>,
}

impl Dense {
    pub fn identity(n: usize) -> Dense {
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            a[i * n + i] = C64::new(1.0, 0.0);
        }
        Dense { n, a }
    }

    pub fn mul(&self, other: &Dense) -> Dense {
        let n = self.n;
        let mut a = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for k in 0..n {
                let x = self.a[i * n + k];
                for j in 0..n {
                    a[i * n + j] += x * other.a[k * n + j];
                }
            }
        }
        Dense { n, a }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..n).map(|j| self.a[i * n + j] * v[j]).sum())
            .collect()
    }

    fn one_norm(&self) -> f64 {
        let n = self.n;
        (0..n)
            .map(|j| (0..n).map(|i| self.a[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `exp(-i H t)` by scaling and squaring of a truncated Taylor series.
pub fn expm_propagator(h: &HermitianMatrix, t: f64) -> Dense {
    let n = h.dim;
    let mut x = Dense { n, a: h.data.iter().map(|z| z * C64::new(0.0, -t)).collect() };
    let norm = x.one_norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    x.a.iter_mut().for_each(|z| *z *= scale);
    let mut result = Dense::identity(n);
    let mut term = Dense::identity(n);
    for k in 1..=30 {
        term = term.mul(&x);
        let inv = 1.0 / k as f64;
        term.a.iter_mut().for_each(|z| *z *= inv);
        for (r, t) in result.a.iter_mut().zip(&term.a) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    result
}

pub fn project(v: &[C64], one: bool, d0: usize) -> Vec<C64> {
    v.iter()
        .enumerate()
        .map(|(i, z)| if (i >= d0) == one { *z } else { C64::new(0.0, 0.0) })
        .collect()
}

/// Every history by explicit projector chains with matrix-exponential
/// propagators; index bit `j` is `x_{j+1}`.
pub fn expm_histories(inst: &Instance) -> Vec<Vec<C64>> {
    let d0 = inst.spec.d0;
    let mut level = vec![inst.psi0.amplitudes.clone()];
    for (j, gap) in inst.schedule.gaps().into_iter().enumerate() {
        let u = expm_propagator(&inst.matrix, gap);
        let mut next = vec![Vec::new(); level.len() * 2];
        for (p, v) in level.iter().enumerate() {
            let w = u.apply(v);
            next[p] = project(&w, false, d0);
            next[p | 1 << j] = project(&w, true, d0);
        }
        level = next;
    }
    level
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// `C(L, n) p^n (1-p)^{L-n}` for `p = num/den`, evaluated exactly and
/// rounded once.
pub fn exact_binomial(length: u32, n: u32, num: u64, den: u64) -> f64 {
    let mut c = BigUint::one();
    for i in 0..n {
        c = c * BigUint::from(length - i) / BigUint::from(i + 1);
    }
    let top = c * BigUint::from(num).pow(n) * BigUint::from(den - num).pow(length - n);
    let bottom = BigUint::from(den).pow(length);
    // keep ~80 significant bits in the quotient
    let shift = (bottom.bits() as i64 - top.bits() as i64 + 80).max(0) as u32;
    let q: BigUint = (top << shift) / bottom;
    q.to_f64().unwrap() * 2f64.powi(-(shift as i32))
}
