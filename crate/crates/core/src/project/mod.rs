//! Two-dimensional views of embedding space.

mod pca;
pub mod quality;
mod scatter;
mod tsne;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use pca::{pca, pca_project, Pca};
pub use quality::{cluster_agreement, kmeans, knn_preservation, nearest_neighbors};
pub use scatter::{emit_scatter, read_scatter_csv, render_csv, render_svg, ScatterFormat};
pub use tsne::{
    conditional_affinities, joint_affinities, tsne, tsne_project, validate_perplexity, TsneConfig, TsneOutput,
    MAX_PERPLEXITY, MIN_PERPLEXITY, MIN_POINTS,
};

use crate::error::{Error, Result};
use crate::types::{Matrix, ProjectionResult};

pub const KNN_K: usize = 10;
/// Row cap applied before projecting a corpus.
pub const MAX_PROJECTION_ROWS: usize = 5000;

/// Run a reducer by name. Recognized parameters for `tsne` are the
/// [`TsneConfig`] field names; `pca` takes none.
pub fn project(x: &Matrix, method: &str, params: &BTreeMap<String, String>) -> Result<ProjectionResult> {
    match method {
        "pca" => pca_project(x),
        "tsne" => tsne_project(x, &tsne_config_from(params)?),
        other => Err(Error::InvalidInput(format!("unsupported projection method {other:?}"))),
    }
}

fn tsne_config_from(params: &BTreeMap<String, String>) -> Result<TsneConfig> {
    let mut cfg = TsneConfig::default();
    for (key, value) in params {
        let bad = || Error::InvalidInput(format!("invalid t-SNE parameter {key}={value}"));
        let float = || value.parse::<f64>().map_err(|_| bad());
        let int = || value.parse::<u64>().map_err(|_| bad());
        match key.as_str() {
            "perplexity" => cfg.perplexity = float()?,
            "iterations" => cfg.iterations = int()? as usize,
            "learning_rate" => cfg.learning_rate = float()?,
            "early_exaggeration" => cfg.early_exaggeration = float()?,
            "exaggeration_iterations" => cfg.exaggeration_iterations = int()? as usize,
            "initial_momentum" => cfg.initial_momentum = float()?,
            "final_momentum" => cfg.final_momentum = float()?,
            "seed" => cfg.seed = int()?,
            _ => return Err(Error::InvalidInput(format!("unknown t-SNE parameter {key:?}"))),
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub perplexity: f64,
    pub result: ProjectionResult,
    pub knn_preservation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub perplexity: f64,
    pub knn_preservation: f64,
}

impl SweepEntry {
    pub fn summary(&self) -> SweepSummary {
        SweepSummary {
            perplexity: self.perplexity,
            knn_preservation: self.knn_preservation,
        }
    }
}

/// One t-SNE run per perplexity, scored by 10-NN preservation. All values
/// are validated before any run starts.
pub fn perplexity_sweep(x: &Matrix, values: &[f64], base: &TsneConfig) -> Result<Vec<SweepEntry>> {
    for &p in values {
        validate_perplexity(p, x.rows())?;
    }
    values
        .iter()
        .map(|&perplexity| {
            let cfg = TsneConfig { perplexity, ..base.clone() };
            let result = tsne_project(x, &cfg)?;
            let knn_preservation = knn_preservation(x, &result.points, KNN_K);
            Ok(SweepEntry {
                perplexity,
                result,
                knn_preservation,
            })
        })
        .collect()
}
