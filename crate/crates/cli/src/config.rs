//! Pipeline configuration file and flag overrides.

use std::path::{Path, PathBuf};

use promptgate_core::embed::{ProviderConfig, ProviderKind, DEFAULT_LOCAL_DIM};
use promptgate_core::learn::{ClassifierConfig, Family};
use promptgate_core::metrics::ReportFormat;
use promptgate_core::project::{TsneConfig, MAX_PROJECTION_ROWS};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: None,
        }
    }
}

/// A classifier entry: either a bare family name, trained with defaults and
/// the run seed, or a full hyperparameter object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassifierSpec {
    Family(Family),
    Config(ClassifierConfig),
}

impl ClassifierSpec {
    pub fn resolve(&self, seed: u64) -> ClassifierConfig {
        match self {
            ClassifierSpec::Family(f) => ClassifierConfig::default_for(*f, seed),
            ClassifierSpec::Config(c) => c.clone(),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ClassifierSpec::Family(f) => *f,
            ClassifierSpec::Config(c) => c.family(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub perplexities: Vec<f64>,
    pub max_rows: usize,
    pub iterations: usize,
    pub learning_rate: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        let t = TsneConfig::default();
        Self {
            perplexities: vec![t.perplexity],
            max_rows: MAX_PROJECTION_ROWS,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
        }
    }
}

/// Contents of the `--config` JSON file. Relative paths are resolved against
/// the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub manifest_path: Option<PathBuf>,
    /// Defaults to `<output_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub provider: ProviderConfig,
    /// Alternative remote provider, used when `--provider remote` is given
    /// while `provider` is the local one.
    pub remote_provider: Option<ProviderConfig>,
    pub split: SplitConfig,
    pub classifiers: Vec<ClassifierSpec>,
    pub threshold: f64,
    pub report_format: String,
    pub projection: ProjectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            manifest_path: None,
            cache_dir: None,
            output_dir: PathBuf::from("out"),
            provider: ProviderConfig::local_hash(DEFAULT_LOCAL_DIM),
            remote_provider: None,
            split: SplitConfig::default(),
            classifiers: Family::ALL.iter().map(|&f| ClassifierSpec::Family(f)).collect(),
            threshold: 0.5,
            report_format: "markdown".into(),
            projection: ProjectionConfig::default(),
        }
    }
}

/// Overrides taken from the command line. Flags win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub seed: Option<u64>,
    pub provider: Option<ProviderKind>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.manifest_path.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.cache_dir.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    /// Read the file if given, then apply the flag overrides and check the
    /// result.
    pub fn resolve(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(m) = &o.manifest {
            cfg.manifest_path = Some(m.clone());
        }
        if let Some(s) = o.seed {
            cfg.split.seed = Some(s);
        }
        if let Some(out) = &o.out {
            cfg.output_dir = out.clone();
        }
        match o.provider {
            None => {}
            Some(kind) if kind == cfg.provider.kind => {}
            Some(ProviderKind::LocalHash) => cfg.provider = ProviderConfig::local_hash(DEFAULT_LOCAL_DIM),
            Some(ProviderKind::Remote) => {
                cfg.provider = cfg.remote_provider.clone().ok_or_else(|| {
                    CliError::Usage(
                        "--provider remote needs a remote `provider` or `remote_provider` entry in the config".into(),
                    )
                })?;
            }
        }
        cfg.provider
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&cfg.threshold) {
            return Err(CliError::Usage(format!("threshold {} is outside [0, 1]", cfg.threshold)));
        }
        if cfg.classifiers.is_empty() {
            return Err(CliError::Usage("no classifiers selected".into()));
        }
        cfg.report_format()?;
        Ok(cfg)
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.split
            .seed
            .ok_or_else(|| CliError::Usage("a seed is required: pass --seed N or set split.seed in the config".into()))
    }

    pub fn manifest(&self) -> Result<&Path, CliError> {
        let path = self.manifest_path.as_deref().ok_or_else(|| {
            CliError::Usage("no corpus manifest: pass --manifest PATH or set manifest_path in the config".into())
        })?;
        if !path.is_file() {
            return Err(CliError::Usage(format!("manifest {} does not exist", path.display())));
        }
        Ok(path)
    }

    pub fn report_format(&self) -> Result<ReportFormat, CliError> {
        self.report_format.parse().map_err(|e: promptgate_core::Error| CliError::Usage(e.to_string()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache_dir().join(format!("embeddings-{}.csv", path_safe(&self.provider.tag())))
    }

    pub fn corpus_path(&self) -> PathBuf {
        self.output_dir.join("corpus.csv")
    }

    pub fn split_path(&self) -> PathBuf {
        self.output_dir.join("split.json")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn model_path(&self, provider_tag: &str, family: Family) -> PathBuf {
        self.models_dir().join(path_safe(provider_tag)).join(format!("{family}.json"))
    }

    pub fn tsne_config(&self, perplexity: f64, seed: u64) -> TsneConfig {
        TsneConfig {
            perplexity,
            iterations: self.projection.iterations,
            learning_rate: self.projection.learning_rate,
            seed,
            ..TsneConfig::default()
        }
    }
}

/// Provider tags may contain characters that are awkward in file names.
pub fn path_safe(tag: &str) -> String {
    tag.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_entries_accept_names_and_objects() {
        let specs: Vec<ClassifierSpec> =
            serde_json::from_str(r#"["forest", {"family": "gbt", "n_rounds": 5, "seed": 9}]"#).unwrap();
        assert_eq!(specs[0].resolve(3), ClassifierConfig::default_for(Family::Forest, 3));
        match specs[1].resolve(3) {
            ClassifierConfig::Gbt(g) => assert_eq!((g.n_rounds, g.seed), (5, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"manifest_path": "m.json", "split": {"seed": 1}, "output_dir": "o"}"#).unwrap();
        let cfg = PipelineConfig::resolve(Some(&path), &Overrides::default()).unwrap();
        assert_eq!(cfg.seed().unwrap(), 1);
        assert_eq!(cfg.output_dir, dir.path().join("o"));
        assert_eq!(cfg.manifest_path.as_deref(), Some(dir.path().join("m.json").as_path()));
        let o = Overrides {
            seed: Some(7),
            out: Some("elsewhere".into()),
            ..Default::default()
        };
        let cfg = PipelineConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!(cfg.seed().unwrap(), 7);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = PipelineConfig::resolve(None, &Overrides::default()).unwrap();
        assert!(matches!(cfg.seed(), Err(CliError::Usage(_))));
    }

    #[test]
    fn unknown_keys_and_bad_remote_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"sead": 1}"#).unwrap();
        assert!(matches!(PipelineConfig::resolve(Some(&path), &Overrides::default()), Err(CliError::Usage(_))));
        let o = Overrides {
            provider: Some(ProviderKind::Remote),
            ..Default::default()
        };
        assert!(matches!(PipelineConfig::resolve(None, &o), Err(CliError::Usage(_))));
    }

    #[test]
    fn tags_become_file_names() {
        assert_eq!(path_safe("remote-BAAI/bge:small-384"), "remote-BAAI_bge_small-384");
    }
}
