//! Counter-based generator streams.
//!
//! Every random draw in the toolkit comes from a `ChaCha8Rng` keyed by the
//! master seed and positioned on a stream chosen by `(purpose, index)`. A
//! replica, bank row or bootstrap resample therefore sees the same numbers no
//! matter which thread runs it or what else was computed before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum Purpose {
    Sample = 1,
    Draw = 2,
    Bootstrap = 3,
    PoolRow = 4,
    TestRow = 5,
}

/// Generator for item `index` of `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    assert!(index < 1 << 48, "stream index {index} exceeds 48 bits");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}
