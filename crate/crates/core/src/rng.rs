//! Counter-derived random substreams.
//!
//! Every Monte-Carlo draw in the crate pulls from a stream keyed by
//! `(seed, counters...)`, so results never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of counters into a single 64-bit key.
pub fn derive_key(seed: u64, counters: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &c in counters {
        h = splitmix64(h ^ splitmix64(c.wrapping_add(0x2545_F491_4F6C_DD1D)));
    }
    h
}

pub fn substream(seed: u64, counters: &[u64]) -> LabRng {
    LabRng::seed_from_u64(derive_key(seed, counters))
}

/// Number of worker threads for Monte-Carlo loops, from `UNLEARN_LAB_THREADS`.
///
/// `0` or `1` means sequential; unset means rayon's default.
pub fn mc_threads() -> Option<usize> {
    std::env::var("UNLEARN_LAB_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok())
}

/// Maps `f` over `0..n`, in parallel when allowed. Output order is by index.
pub fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match mc_threads() {
        Some(0) | Some(1) => (0..n).map(f).collect(),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        },
        None => (0..n).into_par_iter().map(f).collect(),
    }
}
