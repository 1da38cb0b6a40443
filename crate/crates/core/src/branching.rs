//! Count-grouped relative states and the fine-grained histories they sum.
//!
//! A history `x = (x_1, …, x_L)` applies `Π_{x_j} U_{j,j-1}` in turn to the
//! initial state. Grouping histories by their number of ones `m` gives
//! `L + 1` vectors `|ψ(m)⟩` which obey
//!
//! ```text
//! ψ'(m) = Π_0 U ψ(m) + Π_1 U ψ(m-1),   ψ(-1) = 0,
//! ```
//!
//! so a run of length `L` costs `O(L² D²)` instead of `O(2^L D²)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{self, C64};
use crate::model::{PureState, Schedule, SpectralHamiltonian};
use crate::rngstreams::Substream;

/// Squared norms below this count as an annihilated branch.
pub const DEAD_BRANCH_FLOOR: f64 = 1e-280;

/// Longest history the brute-force oracle will enumerate.
pub const BRUTE_FORCE_MAX_LENGTH: usize = 16;

/// Outcome of one binary projective step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Zero,
    One,
}

impl Outcome {
    pub fn from_bit(bit: bool) -> Outcome {
        if bit {
            Outcome::One
        } else {
            Outcome::Zero
        }
    }

    pub fn is_one(self) -> bool {
        self == Outcome::One
    }
}

/// Applies `Π_x`: keeps `0..d0` for outcome 0, `d0..D` for outcome 1.
pub fn project(state: &PureState, outcome: Outcome, d0: usize) -> PureState {
    let mut out = state.clone();
    project_in_place(&mut out.amplitudes, outcome, d0);
    out
}

fn project_in_place(v: &mut [C64], outcome: Outcome, d0: usize) {
    let zero = C64::new(0.0, 0.0);
    match outcome {
        Outcome::Zero => v[d0..].iter_mut().for_each(|z| *z = zero),
        Outcome::One => v[..d0].iter_mut().for_each(|z| *z = zero),
    }
}

/// The grouped relative states `|ψ(m)⟩`, `m = 0..=L`, left unnormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchEnsemble {
    vectors: Vec<Vec<C64>>,
    steps_done: usize,
    d0: usize,
}

impl BranchEnsemble {
    /// History length `L`.
    pub fn length(&self) -> usize {
        self.vectors.len() - 1
    }

    pub fn steps_done(&self) -> usize {
        self.steps_done
    }

    pub fn is_complete(&self) -> bool {
        self.steps_done == self.length()
    }

    pub fn d0(&self) -> usize {
        self.d0
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn state(&self, m: usize) -> &[C64] {
        &self.vectors[m]
    }

    pub fn states(&self) -> &[Vec<C64>] {
        &self.vectors
    }

    /// `⟨ψ(m)|ψ(m)⟩` for every `m`.
    pub fn weights(&self) -> Vec<f64> {
        self.vectors.iter().map(|v| linalg::norm_sqr(v)).collect()
    }

    /// `Σ_m |ψ(m)⟩`, summed in index order.
    pub fn sum(&self) -> Vec<C64> {
        let mut acc = vec![C64::new(0.0, 0.0); self.dim()];
        for v in &self.vectors {
            for (a, z) in acc.iter_mut().zip(v) {
                *a += z;
            }
        }
        acc
    }
}

/// Propagates the grouped ensemble through every step of `schedule`.
pub fn propagate_branches(
    ham: &SpectralHamiltonian,
    psi0: &PureState,
    schedule: &Schedule,
) -> Result<BranchEnsemble> {
    propagate_branches_with(ham, psi0, schedule, Execution::default(), |_| {})
}

/// As [`propagate_branches`], with an explicit execution policy and an
/// observer called after every completed step.
///
/// The propagator applications within a step run under `exec`; the merge
/// into the next ensemble is serial in fixed `m` order, so the result is
/// bitwise independent of the policy.
pub fn propagate_branches_with<F>(
    ham: &SpectralHamiltonian,
    psi0: &PureState,
    schedule: &Schedule,
    exec: Execution,
    mut observer: F,
) -> Result<BranchEnsemble>
where
    F: FnMut(&BranchEnsemble),
{
    let n = ham.dim();
    if psi0.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: psi0.dim() });
    }
    let length = schedule.len();
    let d0 = ham.d0;
    let mut vectors = vec![vec![C64::new(0.0, 0.0); n]; length + 1];
    vectors[0].copy_from_slice(&psi0.amplitudes);
    let mut ensemble = BranchEnsemble { vectors, steps_done: 0, d0 };

    for (step, gap) in schedule.gaps().into_iter().enumerate() {
        let phases = ham.phases(gap);
        let live = step + 1;
        exec::for_each_indexed(exec, &mut ensemble.vectors[..live], |_, v| {
            let mut scratch = vec![C64::new(0.0, 0.0); n];
            let mut out = vec![C64::new(0.0, 0.0); n];
            ham.propagate_into(v, &phases, &mut scratch, &mut out);
            *v = out;
        });
        // ψ'(m) takes its Π_0 part from U ψ(m) and its Π_1 part from U ψ(m-1)
        for m in (1..=live).rev() {
            let (lower, upper) = ensemble.vectors.split_at_mut(m);
            upper[0][d0..].copy_from_slice(&lower[m - 1][d0..]);
        }
        project_in_place(&mut ensemble.vectors[0], Outcome::Zero, d0);
        ensemble.steps_done = live;
        observer(&ensemble);
    }
    Ok(ensemble)
}

/// A fine-grained history `(x_1, …, x_L)`, stored in time order.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HistoryLabel {
    pub bits: Vec<Outcome>,
}

impl HistoryLabel {
    /// Decodes pattern bit `j` as `x_{j+1}`.
    pub fn from_index(index: usize, length: usize) -> HistoryLabel {
        HistoryLabel {
            bits: (0..length).map(|j| Outcome::from_bit(index >> j & 1 == 1)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// `n_1(x)`, the number of ones.
    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|b| b.is_one()).count()
    }
}

/// Written as `x_1 x_2 … x_L` without separators.
impl fmt::Display for HistoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if b.is_one() { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for HistoryLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(Outcome::Zero),
                '1' => Ok(Outcome::One),
                other => Err(Error::InvalidArgument(format!("history digit {other:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HistoryLabel { bits })
    }
}

/// All `2^L` relative states `|ψ(x)⟩`; index bit `j` holds `x_{j+1}`.
#[derive(Clone, Debug)]
pub struct FineGrainedBranches {
    length: usize,
    vectors: Vec<Vec<C64>>,
}

impl FineGrainedBranches {
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn state(&self, index: usize) -> &[C64] {
        &self.vectors[index]
    }

    pub fn history(&self, index: usize) -> HistoryLabel {
        HistoryLabel::from_index(index, self.length)
    }

    /// Indices of histories with exactly `m` ones, ascending.
    pub fn indices_with_ones(&self, m: usize) -> Vec<usize> {
        (0..self.vectors.len())
            .filter(|i| i.count_ones() as usize == m)
            .collect()
    }

    /// `Σ_{x : n_1(x) = m} |ψ(x)⟩`.
    pub fn grouped(&self, m: usize) -> Vec<C64> {
        let dim = self.vectors[0].len();
        let mut acc = vec![C64::new(0.0, 0.0); dim];
        for i in self.indices_with_ones(m) {
            for (a, z) in acc.iter_mut().zip(&self.vectors[i]) {
                *a += z;
            }
        }
        acc
    }

    /// `Σ_x |ψ(x)⟩`.
    pub fn sum(&self) -> Vec<C64> {
        let dim = self.vectors[0].len();
        let mut acc = vec![C64::new(0.0, 0.0); dim];
        for v in &self.vectors {
            for (a, z) in acc.iter_mut().zip(v) {
                *a += z;
            }
        }
        acc
    }
}

/// Enumerates every history by applying the projector chain directly.
pub fn brute_force_branches(
    ham: &SpectralHamiltonian,
    psi0: &PureState,
    schedule: &Schedule,
) -> Result<FineGrainedBranches> {
    let length = schedule.len();
    if length > BRUTE_FORCE_MAX_LENGTH {
        return Err(Error::OracleGuard {
            what: "history length",
            value: length,
            limit: BRUTE_FORCE_MAX_LENGTH,
        });
    }
    let n = ham.dim();
    if psi0.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: psi0.dim() });
    }
    let d0 = ham.d0;
    let mut level = vec![psi0.amplitudes.clone()];
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    for (j, gap) in schedule.gaps().into_iter().enumerate() {
        let phases = ham.phases(gap);
        let mut next = vec![Vec::new(); level.len() * 2];
        for (p, v) in level.into_iter().enumerate() {
            let mut w = vec![C64::new(0.0, 0.0); n];
            ham.propagate_into(&v, &phases, &mut scratch, &mut w);
            let mut one = w.clone();
            project_in_place(&mut w, Outcome::Zero, d0);
            project_in_place(&mut one, Outcome::One, d0);
            next[p] = w;
            next[p | 1 << j] = one;
        }
        level = next;
    }
    Ok(FineGrainedBranches { length, vectors: level })
}

/// One fine-grained pair `(x, y)` with `ε(x, y)`, or `None` when either
/// branch is dead.
#[derive(Clone, Debug, Serialize)]
pub struct FinePair {
    pub x: usize,
    pub y: usize,
    pub epsilon: Option<f64>,
}

/// Result of comparing a grouped overlap with its fine-grained expansion.
#[derive(Clone, Debug)]
pub struct OverlapCheck {
    /// `⟨ψ(m)|ψ(n)⟩` from the grouped ensemble.
    pub grouped: C64,
    /// `Σ_{x,y} ⟨ψ(x)|ψ(y)⟩` over `n_1(x) = m`, `n_1(y) = n`.
    pub fine_sum: C64,
    pub discrepancy: f64,
    pub pairs: Vec<FinePair>,
}

/// `ε(x, y)` for two branches, `None` if either is below the dead floor.
pub fn pair_epsilon(a: &[C64], b: &[C64]) -> Option<f64> {
    let (na, nb) = (linalg::norm_sqr(a), linalg::norm_sqr(b));
    if na < DEAD_BRANCH_FLOOR || nb < DEAD_BRANCH_FLOOR {
        return None;
    }
    Some(linalg::inner(a, b).norm() / (na.sqrt() * nb.sqrt()))
}

/// Checks `⟨ψ(m)|ψ(n)⟩ = Σ_{x,y} ⟨ψ(x)|ψ(y)⟩` and lists the fine-grained
/// `ε(x, y)` of the pairs involved.
pub fn overlap_identity_check(
    fine: &FineGrainedBranches,
    ensemble: &BranchEnsemble,
    m: usize,
    n: usize,
) -> Result<OverlapCheck> {
    let length = ensemble.length();
    if fine.length() != length {
        return Err(Error::LengthMismatch { expected: length, found: fine.length() });
    }
    if m > length || n > length {
        return Err(Error::InvalidArgument(format!("group index ({m}, {n}) exceeds L = {length}")));
    }
    let xs = fine.indices_with_ones(m);
    let ys = fine.indices_with_ones(n);
    let grouped = linalg::inner(ensemble.state(m), ensemble.state(n));
    let mut fine_sum = C64::new(0.0, 0.0);
    let mut pairs = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            fine_sum += linalg::inner(fine.state(x), fine.state(y));
            pairs.push(FinePair { x, y, epsilon: pair_epsilon(fine.state(x), fine.state(y)) });
        }
    }
    Ok(OverlapCheck {
        grouped,
        fine_sum,
        discrepancy: (grouped - fine_sum).norm(),
        pairs,
    })
}

/// One sample of a conditional trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub p1: f64,
}

/// `⟨Π_1⟩` along the single branch selected by `history`.
///
/// Each gap `[t_{j-1}, t_j]` is sampled at `points_per_gap` evenly spaced
/// times, both endpoints included. The first sample of a gap is the state
/// right after the previous projection, the last one the state right before
/// `Π_{x_j}` acts. A final sample after the last projection closes the
/// series, giving `L · points_per_gap + 1` points.
pub fn conditional_trajectory(
    ham: &SpectralHamiltonian,
    psi0: &PureState,
    schedule: &Schedule,
    history: &HistoryLabel,
    points_per_gap: usize,
) -> Result<Vec<TrajectoryPoint>> {
    if points_per_gap < 2 {
        return Err(Error::InvalidArgument(format!("points_per_gap must be >= 2, got {points_per_gap}")));
    }
    if history.len() != schedule.len() {
        return Err(Error::LengthMismatch { expected: schedule.len(), found: history.len() });
    }
    let n = ham.dim();
    if psi0.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: psi0.dim() });
    }
    let d0 = ham.d0;
    let mut current = psi0.clone().normalized();
    let mut series = Vec::with_capacity(schedule.len() * points_per_gap + 1);
    let mut start = 0.0;
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (j, (&end, &outcome)) in schedule.times.iter().zip(&history.bits).enumerate() {
        let gap = end - start;
        for k in 0..points_per_gap {
            let t = if k + 1 == points_per_gap {
                end
            } else {
                start + gap * k as f64 / (points_per_gap - 1) as f64
            };
            let p1 = if k == 0 {
                current.p1_expectation(d0)
            } else {
                ham.propagate_into(&current.amplitudes, &ham.phases(t - start), &mut scratch, &mut out);
                linalg::norm_sqr(&out[d0..]) / linalg::norm_sqr(&out)
            };
            series.push(TrajectoryPoint { t, p1 });
        }
        ham.propagate_into(&current.amplitudes, &ham.phases(gap), &mut scratch, &mut out);
        project_in_place(&mut out, outcome, d0);
        let weight = linalg::norm_sqr(&out);
        if !(weight > DEAD_BRANCH_FLOOR) {
            return Err(Error::DeadBranch { step: j + 1, norm_sq: weight });
        }
        current = PureState::new(out.clone()).normalized();
        start = end;
    }
    series.push(TrajectoryPoint { t: start, p1: current.p1_expectation(d0) });
    Ok(series)
}

/// Samples a history by drawing each `x_j` from the conditional branch
/// weights at `t_j`.
pub fn sample_history(
    ham: &SpectralHamiltonian,
    psi0: &PureState,
    schedule: &Schedule,
    stream: &mut Substream,
) -> Result<HistoryLabel> {
    let n = ham.dim();
    if psi0.dim() != n {
        return Err(Error::LengthMismatch { expected: n, found: psi0.dim() });
    }
    let d0 = ham.d0;
    let mut current = psi0.clone().normalized();
    let mut scratch = vec![C64::new(0.0, 0.0); n];
    let mut out = vec![C64::new(0.0, 0.0); n];
    let mut bits = Vec::with_capacity(schedule.len());
    for (j, gap) in schedule.gaps().into_iter().enumerate() {
        ham.propagate_into(&current.amplitudes, &ham.phases(gap), &mut scratch, &mut out);
        let p_one = linalg::norm_sqr(&out[d0..]) / linalg::norm_sqr(&out);
        let outcome = Outcome::from_bit(stream.unit() < p_one);
        project_in_place(&mut out, outcome, d0);
        let weight = linalg::norm_sqr(&out);
        if !(weight > DEAD_BRANCH_FLOOR) {
            return Err(Error::DeadBranch { step: j + 1, norm_sq: weight });
        }
        current = PureState::new(out.clone()).normalized();
        bits.push(outcome);
    }
    Ok(HistoryLabel { bits })
}
