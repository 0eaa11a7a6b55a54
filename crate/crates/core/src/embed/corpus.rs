use std::collections::HashMap;
use std::path::Path;

use tracing::info;

use super::cache::{read_embedding_cache, CacheHeader, CacheWriter};
use super::Embedder;
use crate::error::{Error, Result};
use crate::types::{EmbeddedDataset, Matrix, PromptRecord};

/// Embed `records`, reusing and extending the cache at `cache_path`.
///
/// Rows already cached (matched by record id) are not re-embedded. Up to
/// `embedder.max_in_flight()` batches run concurrently; rows are appended to
/// the cache in record order. The returned dataset follows `records` order.
pub fn embed_corpus(embedder: &dyn Embedder, records: &[PromptRecord], cache_path: impl AsRef<Path>) -> Result<EmbeddedDataset> {
    let cache_path = cache_path.as_ref();
    let header = CacheHeader {
        provider_tag: embedder.tag(),
        dim: embedder.dim(),
    };

    let mut cached: HashMap<String, Vec<f64>> = HashMap::new();
    if cache_path.exists() {
        let existing = read_embedding_cache(cache_path)?;
        if existing.provider_tag() != header.provider_tag || existing.dim() != header.dim {
            return Err(Error::Cache {
                path: cache_path.to_path_buf(),
                reason: format!(
                    "cache was produced by provider={} dim={}, current provider is {} dim={}",
                    existing.provider_tag(),
                    existing.dim(),
                    header.provider_tag,
                    header.dim
                ),
            });
        }
        for (meta, row) in existing.records().iter().zip(existing.matrix().iter_rows()) {
            cached.insert(meta.id.clone(), row.to_vec());
        }
    }
    let mut writer = CacheWriter::append(cache_path, header.clone())?;

    let pending: Vec<&PromptRecord> = records.iter().filter(|r| !cached.contains_key(&r.id)).collect();
    if !pending.is_empty() {
        info!(cached = records.len() - pending.len(), pending = pending.len(), "embedding corpus");
    }
    let batches: Vec<&[&PromptRecord]> = pending.chunks(embedder.batch_size().max(1)).collect();
    for wave in batches.chunks(embedder.max_in_flight().max(1)) {
        let results: Vec<_> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    scope.spawn(move || {
                        let texts: Vec<String> = batch.iter().map(|r| r.text.clone()).collect();
                        embedder.embed_batch(&texts)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("embedding worker panicked")).collect()
        });
        for (batch, result) in wave.iter().zip(results) {
            let vectors = match result {
                Ok(v) => v,
                Err(source) => {
                    writer.flush()?;
                    return Err(Error::Batch {
                        first: batch[0].id.clone(),
                        last: batch[batch.len() - 1].id.clone(),
                        source,
                    });
                }
            };
            if vectors.len() != batch.len() {
                return Err(Error::LengthMismatch {
                    left: batch.len(),
                    right: vectors.len(),
                });
            }
            for (record, vector) in batch.iter().zip(vectors) {
                let values = vector.into_inner();
                writer.write(&record.meta(), &values)?;
                cached.insert(record.id.clone(), values);
            }
        }
        writer.flush()?;
    }
    drop(writer);

    let mut data = Vec::with_capacity(records.len() * header.dim);
    for record in records {
        data.extend_from_slice(&cached[&record.id]);
    }
    let matrix = Matrix::new(records.len(), header.dim, data)?;
    EmbeddedDataset::with_dim(records.iter().map(PromptRecord::meta).collect(), matrix, header.provider_tag, header.dim)
}
