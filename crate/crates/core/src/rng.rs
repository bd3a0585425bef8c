//! Deterministic random streams.
//!
//! Every random quantity in the toolkit is drawn from a ChaCha8 stream keyed
//! by `(seed, domain)` and selected by a 64-bit stream index. Two draws with
//! the same key and index are identical on every platform, independent of
//! how many other streams were consumed before.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes a seed may be used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Mask = 0x6d61_736b_0000_0001,
    Data = 0x6461_7461_0000_0001,
    Init = 0x696e_6974_0000_0001,
    Shuffle = 0x7368_7566_0000_0001,
}

/// A generator for stream `index` of `seed` within `domain`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain as u64);
    rng.set_stream(index);
    rng
}
