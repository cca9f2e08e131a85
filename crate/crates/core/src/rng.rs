//! Per-trajectory random streams.
//!
//! Every trajectory owns five independent ChaCha8 streams keyed by
//! `(master_seed, sample_index, stream)`. Keeping them apart means a draw in
//! one part of the protocol never shifts another: certain measurements
//! consume nothing, so the quantum and classical engines stay aligned on
//! computational-basis inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamId {
    /// Chaotic vs control coin flips.
    Coin = 0,
    /// Permutations σ and the perturbation site of the chaotic circuit.
    Circuit = 1,
    /// Bernoulli(q) site selection and target tie-breaks.
    Site = 2,
    /// Born sampling of measurement outcomes.
    Measurement = 3,
    /// Initial-state preparation.
    Init = 4,
}

const STREAMS_PER_SAMPLE: u64 = 8;

pub fn stream(master_seed: u64, sample_index: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(sample_index * STREAMS_PER_SAMPLE + id as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Streams {
    pub coin: ChaCha8Rng,
    pub circuit: ChaCha8Rng,
    pub site: ChaCha8Rng,
    pub measurement: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl Streams {
    pub fn new(master_seed: u64, sample_index: u64) -> Self {
        Self {
            coin: stream(master_seed, sample_index, StreamId::Coin),
            circuit: stream(master_seed, sample_index, StreamId::Circuit),
            site: stream(master_seed, sample_index, StreamId::Site),
            measurement: stream(master_seed, sample_index, StreamId::Measurement),
            init: stream(master_seed, sample_index, StreamId::Init),
        }
    }

    /// Number of 32-bit words drawn from each stream, in [`StreamId`] order.
    pub fn consumption(&self) -> [u128; 5] {
        [&self.coin, &self.circuit, &self.site, &self.measurement, &self.init].map(|r| r.get_word_pos())
    }
}
