//! Deterministic random streams.
//!
//! Every random quantity is drawn from its own ChaCha20 stream. The 256-bit key
//! is the 64-bit seed in little-endian order followed by zero bytes, and the
//! 64-bit stream id is the FNV-1a hash of `(purpose, name, day)`. Adding a
//! column therefore never shifts the draws of any other column, and a reader in
//! another language can reproduce a stream from the RFC 8439 block function.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Stream id for a `(purpose, name, day)` triple.
pub fn stream_id(purpose: &str, name: &str, day: u32) -> u64 {
    let h = fnv1a(purpose.bytes(), FNV_OFFSET);
    let h = fnv1a([0u8], h);
    let h = fnv1a(name.bytes(), h);
    let h = fnv1a([0u8], h);
    fnv1a(day.to_le_bytes(), h)
}

/// Key bytes for a 64-bit seed.
pub fn seed_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key
}

/// Independent generator for one `(purpose, name, day)` cell.
pub fn stream(seed: u64, purpose: &str, name: &str, day: u32) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::from_seed(seed_key(seed));
    rng.set_stream(stream_id(purpose, name, day));
    rng
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child of `master`. Children are independent of how
/// many siblings are later requested.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}
