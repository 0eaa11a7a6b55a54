//! Stage orchestration behind the `promptgate` binary.

mod artifacts;
pub mod config;
pub mod stages;

pub use config::{ClassifierSpec, Overrides, PipelineConfig, ProjectionConfig, SplitConfig};
pub use stages::{
    load_split_dataset, read_corpus, read_split, run_detect, run_embed, run_eval, run_ingest, run_pipeline, run_project,
    run_train, SplitFile,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad invocation or configuration; nothing was attempted.
    #[error("{0}")]
    Usage(String),
    #[error("{stage} failed: {}", chain(source))]
    Stage {
        stage: &'static str,
        #[source]
        source: anyhow::Error,
    },
}

/// Context messages and causes joined by ": ", skipping causes whose text the
/// message above already includes.
fn chain(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if !last.is_empty() && last.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        last = msg;
    }
    out
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Stage { .. } => 1,
        }
    }
}
