//! Deterministic, label-separated random substreams.
//!
//! Every substream is a ChaCha8 generator keyed by the master seed and
//! addressed by a stream id derived from the [`StreamLabel`]. ChaCha is
//! counter based, so substreams are independent of each other and of the
//! order in which they are created or consumed.
//!
//! Normal deviates use the ziggurat sampler from `rand_distr`, uniforms use
//! `rand`'s half-open float sampler. Both are fixed for a given build.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seed from which every random quantity of one experiment is derived.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MasterSeed(pub u64);

impl MasterSeed {
    /// Derives a child seed for a point of a parameter grid.
    ///
    /// The mix is a splitmix64 chain over the coordinates, so distinct
    /// coordinates give unrelated children.
    pub fn derive(self, coords: &[u64]) -> MasterSeed {
        let mut state = self.0;
        for &c in coords {
            state = splitmix64(state ^ splitmix64(c.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        MasterSeed(state)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose of a substream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StreamLabel {
    Hamiltonian,
    InitialState,
    TimeGrid,
    HistoryPick,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 4] = [
        StreamLabel::Hamiltonian,
        StreamLabel::InitialState,
        StreamLabel::TimeGrid,
        StreamLabel::HistoryPick,
    ];

    fn stream_id(self) -> u64 {
        match self {
            StreamLabel::Hamiltonian => 1,
            StreamLabel::InitialState => 2,
            StreamLabel::TimeGrid => 3,
            StreamLabel::HistoryPick => 4,
        }
    }
}

/// An owned random stream. Use from one worker at a time.
#[derive(Clone, Debug)]
pub struct Substream {
    rng: ChaCha8Rng,
}

/// Returns the substream for `label`; a pure function of `(master, label)`.
pub fn substream(master: MasterSeed, label: StreamLabel) -> Substream {
    let mut rng = ChaCha8Rng::seed_from_u64(master.0);
    rng.set_stream(label.stream_id());
    rng.set_word_pos(0);
    Substream { rng }
}

impl Substream {
    /// One N(0, 1) deviate.
    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// One deviate from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInterval { lo, hi });
        }
        let dist = Uniform::new(lo, hi).map_err(|_| Error::InvalidInterval { lo, hi })?;
        loop {
            let x = dist.sample(&mut self.rng);
            // the float sampler may round onto `hi`
            if x < hi {
                return Ok(x);
            }
        }
    }

    /// One deviate from `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}
