// SPDX-License-Identifier: Apache-2.0

//! Shared inputs for the benchmarks under `benches/`.

use mlog_core::simulate::{random_event, SimulatedEvent};
use mlog_core::LogSchema;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `n` seeded events drawn from `schema`.
pub fn events(schema: &LogSchema, n: usize, seed: u64) -> Vec<SimulatedEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_event(schema, &mut rng)).collect()
}
