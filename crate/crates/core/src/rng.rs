use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a named, independent random stream from a master seed.
///
/// A single master seed fans out to sub-streams ("structure", "init",
/// "training", "sampling", ...) so each pipeline stage is reproducible on its
/// own. The 256-bit stream seed is expanded with splitmix64 from the master
/// seed mixed with an FNV-1a hash of the name.
pub fn named_stream(master_seed: u64, name: &str) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(name.as_bytes());
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Sub-stream of a named stream, for per-item independence (e.g. one stream
/// per relation during edge sampling).
pub fn indexed_stream(master_seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut state = master_seed ^ fnv1a(name.as_bytes()) ^ index.wrapping_mul(0x9E3779B97F4A7C15);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}
