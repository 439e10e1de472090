use rand::seq::index;
use sha2::{Digest, Sha256};

use crate::rng::rng_from_seed;

/// Maximum in-context training rows.
pub const MAX_CONTEXT: usize = 1000;

/// Shared context row set of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextIndices {
    pub n: usize,
    pub indices: Vec<usize>,
    pub fingerprint: String,
}

/// Sample `min(1000, n)` distinct training rows uniformly, sorted.
pub fn build_context_indices(n: usize, seed: u64) -> ContextIndices {
    assert!(n >= 1, "context needs at least one training row");
    let m = n.min(MAX_CONTEXT);
    let mut indices = index::sample(&mut rng_from_seed(seed), n, m).into_vec();
    indices.sort_unstable();
    let fingerprint = context_fingerprint(n, &indices);
    ContextIndices { n, indices, fingerprint }
}

/// SHA-256 over `n` and the sorted indices, all as little-endian `u64`.
pub fn context_fingerprint(n: usize, indices: &[usize]) -> String {
    let mut h = Sha256::new();
    h.update((n as u64).to_le_bytes());
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
