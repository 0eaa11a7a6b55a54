//! Deterministic signed feature hashing over words and character trigrams.

use crate::types::EmbeddingVector;

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Smallest dimension accepted by the local embedder.
pub const MIN_HASH_DIM: usize = 16;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

fn accumulate(feature: &str, buckets: &mut [f64]) {
    let hash = fnv1a64(feature.as_bytes());
    let bucket = (hash % buckets.len() as u64) as usize;
    let sign = if hash >> 63 == 0 { 1.0 } else { -1.0 };
    buckets[bucket] += sign;
}

/// Hash each word token and each character 3-gram of `<word>` into `dim`
/// signed buckets, then L2-normalize. Text without tokens maps to the zero
/// vector.
///
/// # Panics
///
/// If `dim < MIN_HASH_DIM`.
pub fn hash_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= MIN_HASH_DIM, "hash_embed dimension must be at least {MIN_HASH_DIM}, got {dim}");
    let mut buckets = vec![0.0f64; dim];
    let mut padded = String::new();
    for word in tokenize(text) {
        accumulate(&word, &mut buckets);
        padded.clear();
        padded.push('<');
        padded.push_str(&word);
        padded.push('>');
        let chars: Vec<(usize, char)> = padded.char_indices().collect();
        for w in 0..chars.len().saturating_sub(2) {
            let start = chars[w].0;
            let end = chars.get(w + 3).map_or(padded.len(), |&(i, _)| i);
            accumulate(&padded[start..end], &mut buckets);
        }
    }
    let norm = buckets.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        buckets.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(buckets).expect("finite by construction")
}
