//! Coherence profile, branch probabilities and binomial reference
//! statistics of a completed [`BranchEnsemble`].

use log::warn;
use serde::Serialize;

use crate::branching::{BranchEnsemble, DEAD_BRANCH_FLOOR};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::linalg::{self, C64};

/// Slack on the Born-window edge `|n/L − p1| ≤ δ`, so that edges which are
/// exact in decimal survive binary rounding.
const WINDOW_SLACK: f64 = 1e-12;

/// Symmetric matrix of grouped `ε(m, n)`; `None` where a branch is dead.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseEpsilon {
    size: usize,
    values: Vec<Option<f64>>,
}

impl PairwiseEpsilon {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, m: usize, n: usize) -> Option<f64> {
        self.values[m * self.size + n]
    }

    /// Largest defined entry; the diagonal is included and equals 1.
    pub fn max_entry(&self) -> Option<f64> {
        self.values.iter().flatten().copied().reduce(f64::max)
    }
}

fn require_complete(ensemble: &BranchEnsemble) -> Result<()> {
    if !ensemble.is_complete() {
        return Err(Error::IncompleteEnsemble {
            steps_done: ensemble.steps_done(),
            length: ensemble.length(),
        });
    }
    Ok(())
}

/// `ε(m, n) = |⟨ψ(m)|ψ(n)⟩| / √(q(m) q(n))` for all live pairs.
///
/// Each unordered pair is computed once and mirrored.
pub fn pairwise_epsilon(ensemble: &BranchEnsemble, floor: f64, exec: Execution) -> Result<PairwiseEpsilon> {
    require_complete(ensemble)?;
    let size = ensemble.length() + 1;
    let q = ensemble.weights();
    let live: Vec<bool> = q.iter().map(|&w| w >= floor).collect();
    let rows: Vec<Vec<Option<f64>>> = exec::map_range(exec, size, |m| {
        (m..size)
            .map(|n| {
                if !(live[m] && live[n]) {
                    return None;
                }
                let ov: C64 = linalg::inner(ensemble.state(m), ensemble.state(n));
                Some(ov.norm() / (q[m].sqrt() * q[n].sqrt()))
            })
            .collect()
    });
    let mut values = vec![None; size * size];
    for (m, row) in rows.into_iter().enumerate() {
        for (offset, v) in row.into_iter().enumerate() {
            let n = m + offset;
            values[m * size + n] = v;
            values[n * size + m] = v;
        }
    }
    Ok(PairwiseEpsilon { size, values })
}

/// `ε(n) = max_{m ≠ n} ε(m, n)` over live partners. Dead branches are
/// reported as `None`, never as zero.
pub fn epsilon_profile(ensemble: &BranchEnsemble, floor: f64) -> Result<Vec<Option<f64>>> {
    let pairs = pairwise_epsilon(ensemble, floor, Execution::default())?;
    Ok(profile_from_pairs(&pairs))
}

pub fn profile_from_pairs(pairs: &PairwiseEpsilon) -> Vec<Option<f64>> {
    let size = pairs.size();
    let live = (0..size).filter(|&n| pairs.get(n, n).is_some()).count();
    if live < 2 {
        warn!("only {live} live branch(es); coherence profile is undefined");
        return vec![None; size];
    }
    (0..size)
        .map(|n| {
            (0..size)
                .filter(|&m| m != n)
                .filter_map(|m| pairs.get(m, n))
                .reduce(f64::max)
        })
        .collect()
}

/// `q(n) = ⟨ψ(n)|ψ(n)⟩`.
pub fn q_profile(ensemble: &BranchEnsemble) -> Result<Vec<f64>> {
    require_complete(ensemble)?;
    Ok(ensemble.weights())
}

/// `C(n, k)` as a running product; finite up to roughly `n = 1000`.
fn binomial_coefficient(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    // the running product is C(n - k + i, i) at every step
    let mut c = 1.0f64;
    for i in 1..=k {
        c = c * (n - k + i) as f64 / i as f64;
    }
    c
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n);
    if n <= 1000 {
        binomial_coefficient(n, k).ln()
    } else {
        statrs::function::factorial::ln_binomial(n, k)
    }
}

/// Binomial reference `p(n) = C(L, n) p1^n (1 − p1)^{L−n}`.
///
/// Terms are plain products while those stay in the normal range, and go
/// through log space otherwise.
pub fn binomial_profile(length: usize, p1: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p1) {
        return Err(Error::InvalidArgument(format!("p1 must lie in [0, 1], got {p1}")));
    }
    let l = length as i32;
    let q1 = 1.0 - p1;
    let (ln_p, ln_q) = (p1.ln(), (-p1).ln_1p());
    Ok((0..=length)
        .map(|n| {
            if n == 0 {
                q1.powi(l)
            } else if n == length {
                p1.powi(l)
            } else if p1 == 0.0 || p1 == 1.0 {
                0.0
            } else {
                let direct = if length <= 1000 {
                    binomial_coefficient(length as u64, n as u64) * p1.powi(n as i32) * q1.powi(l - n as i32)
                } else {
                    f64::NAN
                };
                if direct.is_normal() {
                    direct
                } else {
                    let nf = n as f64;
                    (ln_binomial(length as u64, n as u64) + nf * ln_p + (length as f64 - nf) * ln_q).exp()
                }
            }
        })
        .collect())
}

/// Branch weight inside the Born window `|n/L − p1| ≤ δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BornWindow {
    pub delta: f64,
    /// `Σ q(n)` over the window.
    pub incoherent: f64,
    /// `‖Σ ψ(n)‖²` over the window.
    pub coherent: f64,
    /// Number of `n` values inside the window.
    pub members: usize,
}

pub fn born_window_weight(ensemble: &BranchEnsemble, p1: f64, delta: f64) -> Result<BornWindow> {
    require_complete(ensemble)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("window width must be positive, got {delta}")));
    }
    let length = ensemble.length();
    let inside: Vec<usize> = (0..=length)
        .filter(|&n| {
            let freq = if length == 0 { 0.0 } else { n as f64 / length as f64 };
            (freq - p1).abs() <= delta + WINDOW_SLACK
        })
        .collect();
    if inside.is_empty() {
        warn!("Born window with delta = {delta} contains no branch count");
        return Ok(BornWindow { delta, incoherent: 0.0, coherent: 0.0, members: 0 });
    }
    let mut incoherent = 0.0;
    let mut acc = vec![C64::new(0.0, 0.0); ensemble.dim()];
    for &n in &inside {
        let v = ensemble.state(n);
        incoherent += linalg::norm_sqr(v);
        for (a, z) in acc.iter_mut().zip(v) {
            *a += z;
        }
    }
    Ok(BornWindow {
        delta,
        incoherent,
        coherent: linalg::norm_sqr(&acc),
        members: inside.len(),
    })
}

/// Total variation distance `½ Σ |q(n) − p(n)|`.
pub fn tv_distance(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch { expected: p.len(), found: q.len() });
    }
    Ok(0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Index of the smallest defined `ε(n)`; ties go to the lower index.
pub fn argmin_epsilon(eps: &[Option<f64>]) -> Option<usize> {
    eps.iter()
        .enumerate()
        .filter_map(|(n, e)| e.map(|v| (n, v)))
        .fold(None, |best: Option<(usize, f64)>, (n, v)| match best {
            Some((_, b)) if b <= v => best,
            _ => Some((n, v)),
        })
        .map(|(n, _)| n)
}

/// Mean of the defined `ε(n)` with `|n − n_mean| > k · n_std`.
pub fn tail_mean_epsilon(eps: &[Option<f64>], n_mean: f64, n_std: f64, k: f64) -> Option<f64> {
    let tail: Vec<f64> = eps
        .iter()
        .enumerate()
        .filter(|(n, _)| (*n as f64 - n_mean).abs() > k * n_std)
        .filter_map(|(_, e)| *e)
        .collect();
    if tail.is_empty() {
        None
    } else {
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Everything derived from one completed ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct BranchStatistics {
    pub length: usize,
    pub p1: f64,
    pub eps: Vec<Option<f64>>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub n_mean: f64,
    pub n_std: f64,
    pub born_windows: Vec<BornWindow>,
    pub tv_distance: f64,
}

impl BranchStatistics {
    pub fn p_max(&self) -> f64 {
        self.p.iter().copied().fold(0.0, f64::max)
    }

    pub fn argmin_eps(&self) -> Option<usize> {
        argmin_epsilon(&self.eps)
    }

    /// Mean coherence of live branches more than four standard deviations
    /// from the mean count.
    pub fn mean_eps_tail(&self) -> Option<f64> {
        tail_mean_epsilon(&self.eps, self.n_mean, self.n_std, 4.0)
    }

    pub fn live(&self) -> Vec<bool> {
        self.q.iter().map(|&w| w >= DEAD_BRANCH_FLOOR).collect()
    }
}

pub fn summarize(ensemble: &BranchEnsemble, p1: f64, deltas: &[f64], floor: f64) -> Result<BranchStatistics> {
    let length = ensemble.length();
    let eps = epsilon_profile(ensemble, floor)?;
    let q = q_profile(ensemble)?;
    let p = binomial_profile(length, p1)?;
    let born_windows = deltas
        .iter()
        .map(|&d| born_window_weight(ensemble, p1, d))
        .collect::<Result<Vec<_>>>()?;
    let tv = tv_distance(&q, &p)?;
    let l = length as f64;
    Ok(BranchStatistics {
        length,
        p1,
        eps,
        q,
        p,
        n_mean: l * p1,
        n_std: (l * p1 * (1.0 - p1)).sqrt(),
        born_windows,
        tv_distance: tv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::propagate_branches;
    use crate::model::{build_hamiltonian, haar_state, sample_schedule, ModelSpec};
    use crate::rngstreams::{substream, StreamLabel};

    fn ensemble(d0: usize, d1: usize, c: f64, length: usize, seed: u64) -> BranchEnsemble {
        let spec = ModelSpec::new(d0, d1, c, length, seed);
        let ham = build_hamiltonian(&spec, &mut substream(spec.master_seed, StreamLabel::Hamiltonian)).unwrap();
        let psi = haar_state(spec.dim, &mut substream(spec.master_seed, StreamLabel::InitialState));
        let sched = sample_schedule(&spec, ham.tau, &mut substream(spec.master_seed, StreamLabel::TimeGrid)).unwrap();
        propagate_branches(&ham, &psi, &sched).unwrap()
    }

    #[test]
    fn binomial_boundaries_and_frozen_value() {
        let p = binomial_profile(25, 0.5).unwrap();
        // 5200300 / 2^25
        assert!((p[12] - 0.154_981_017_112_731_93).abs() < 1e-15);
        let p = binomial_profile(40, 0.8).unwrap();
        assert_eq!(p[0], std::hint::black_box(1.0f64 - 0.8).powi(std::hint::black_box(40)));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(binomial_profile(5, 1.5).is_err());
        assert_eq!(binomial_profile(3, 0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn binomial_does_not_overflow_at_large_length() {
        let p = binomial_profile(250, 0.5).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = binomial_profile(5000, 0.3).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tv_distance_extremes() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn single_split_has_zero_coherence() {
        let ens = ensemble(10, 10, 0.0025, 1, 3);
        let eps = epsilon_profile(&ens, DEAD_BRANCH_FLOOR).unwrap();
        assert!(eps[0].unwrap() < 1e-14);
        assert!(eps[1].unwrap() < 1e-14);
    }

    #[test]
    fn pairwise_is_symmetric_and_bounded() {
        let ens = ensemble(12, 12, 0.05, 10, 4);
        let pairs = pairwise_epsilon(&ens, DEAD_BRANCH_FLOOR, Execution::Parallel).unwrap();
        for m in 0..=10 {
            assert!((pairs.get(m, m).unwrap() - 1.0).abs() < 1e-12);
            for n in 0..=10 {
                assert_eq!(pairs.get(m, n), pairs.get(n, m));
                assert!(pairs.get(m, n).unwrap() <= 1.0 + 1e-12);
            }
        }
        let seq = pairwise_epsilon(&ens, DEAD_BRANCH_FLOOR, Execution::Sequential).unwrap();
        assert_eq!(pairs, seq);
    }

    #[test]
    fn dead_branches_are_missing_not_zero() {
        let ens = ensemble(6, 6, 0.05, 4, 5);
        // a floor above every weight leaves nothing alive
        let eps = epsilon_profile(&ens, 2.0).unwrap();
        assert!(eps.iter().all(Option::is_none));
        let q = ens.weights();
        let floor = q.iter().copied().fold(f64::INFINITY, f64::min) * 1.0000001;
        let eps = epsilon_profile(&ens, floor).unwrap();
        assert_eq!(eps.iter().filter(|e| e.is_none()).count(), 1);
    }

    #[test]
    fn born_window_full_and_empty() {
        let ens = ensemble(8, 8, 0.01, 6, 6);
        let full = born_window_weight(&ens, 0.5, 0.5).unwrap();
        assert!((full.incoherent - 1.0).abs() < 1e-10);
        assert_eq!(full.members, 7);
        // coherent weight of the full window is the norm of the whole state
        assert!((full.coherent - 1.0).abs() < 1e-10);
        assert!(born_window_weight(&ens, 0.5, 0.0).is_err());
        // 1/6 spacing, window of width 0.01 around 0.45 contains nothing
        let empty = born_window_weight(&ens, 0.45, 0.01).unwrap();
        assert_eq!((empty.incoherent, empty.coherent, empty.members), (0.0, 0.0, 0));
    }

    #[test]
    fn window_edges_are_inclusive() {
        let ens = ensemble(5, 5, 0.01, 25, 7);
        let w = born_window_weight(&ens, 0.5, 0.1).unwrap();
        // n = 10..=15
        assert_eq!(w.members, 6);
    }

    #[test]
    fn incomplete_ensemble_rejected() {
        let spec = ModelSpec::new(4, 4, 0.1, 3, 1);
        let ham = build_hamiltonian(&spec, &mut substream(spec.master_seed, StreamLabel::Hamiltonian)).unwrap();
        let psi = haar_state(spec.dim, &mut substream(spec.master_seed, StreamLabel::InitialState));
        let sched = sample_schedule(&spec, ham.tau, &mut substream(spec.master_seed, StreamLabel::TimeGrid)).unwrap();
        let mut partial = None;
        crate::branching::propagate_branches_with(&ham, &psi, &sched, Execution::Sequential, |e| {
            if e.steps_done() == 1 {
                partial = Some(e.clone());
            }
        })
        .unwrap();
        let partial = partial.unwrap();
        assert!(matches!(q_profile(&partial), Err(Error::IncompleteEnsemble { steps_done: 1, length: 3 })));
        assert!(epsilon_profile(&partial, DEAD_BRANCH_FLOOR).is_err());
    }

    #[test]
    fn argmin_and_tail_mean() {
        let eps = vec![Some(0.9), None, Some(0.2), Some(0.2), Some(1.0)];
        assert_eq!(argmin_epsilon(&eps), Some(2));
        assert_eq!(tail_mean_epsilon(&eps, 2.0, 0.4, 4.0), Some(0.95));
        assert_eq!(tail_mean_epsilon(&eps, 2.0, 10.0, 4.0), None);
    }
}
