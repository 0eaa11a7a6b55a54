//! The pipeline stages behind each subcommand.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use promptgate_core::embed::{embed_corpus, read_embedding_cache};
use promptgate_core::ingest::{deduplicate, load_corpus, stratified_split, stratified_subsample, CorpusManifest};
use promptgate_core::learn::{model_from_json, model_to_json, train, Family, TrainedModel};
use promptgate_core::metrics::{evaluate, render_comparison, ReportFormat};
use promptgate_core::project::{emit_scatter, knn_preservation, pca_project, perplexity_sweep, ScatterFormat, KNN_K};
use promptgate_core::{validate_corpus, DatasetSplit, EmbeddedDataset, EvalReport, Label, PromptRecord};
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::artifacts::Artifacts;
use crate::config::{path_safe, PipelineConfig};
use crate::CliError;

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T, CliError> {
    let started = Instant::now();
    let out = f().map_err(|source| CliError::Stage { stage: name, source });
    info!(stage = name, elapsed_ms = started.elapsed().as_millis() as u64, ok = out.is_ok(), "stage finished");
    out
}

/// On-disk form of the train/test split, keyed by record id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub test_fraction: f64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub files: usize,
    pub rows_read: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub duplicates_removed: usize,
    pub label_conflicts: usize,
    pub kept: usize,
    pub train: usize,
    pub test: usize,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "read {} rows from {} files: {} accepted, {} rejected",
            self.rows_read, self.files, self.accepted, self.rejected
        )?;
        writeln!(
            f,
            "duplicates removed: {} ({} with conflicting labels); {} records kept",
            self.duplicates_removed, self.label_conflicts, self.kept
        )?;
        write!(f, "split: {} train, {} test", self.train, self.test)
    }
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<IngestSummary, CliError> {
    let manifest_path = cfg.manifest()?.to_path_buf();
    let seed = cfg.seed()?;
    stage("ingest", || {
        let manifest = CorpusManifest::from_path(&manifest_path)?;
        let loaded = load_corpus(&manifest)?;
        for e in &loaded.row_errors {
            warn!(%e, "rejected row");
        }
        let rows_read = loaded.records.len() + loaded.row_errors.len();
        let checked = validate_corpus(loaded.records);
        for r in &checked.rejects {
            warn!(id = %r.id, reason = %r.reason, "rejected record");
        }
        let accepted = checked.accepted.len();
        let rejected = loaded.row_errors.len() + checked.rejects.len();
        let (records, dedup) = deduplicate(checked.accepted);
        let labels: Vec<Label> = records.iter().map(|r| r.label).collect();
        let split = stratified_split(&labels, cfg.split.test_fraction, seed)?;

        let mut corpus = csv::Writer::from_writer(Vec::new());
        for r in &records {
            corpus.serialize(r)?;
        }
        let split_file = SplitFile {
            seed,
            test_fraction: cfg.split.test_fraction,
            train_ids: split.train_indices.iter().map(|&i| records[i].id.clone()).collect(),
            test_ids: split.test_indices.iter().map(|&i| records[i].id.clone()).collect(),
        };
        let mut out = Artifacts::new();
        out.write(&cfg.corpus_path(), corpus.into_inner()?)?;
        out.write(&cfg.split_path(), serde_json::to_string_pretty(&split_file)? + "\n")?;
        out.commit();
        Ok(IngestSummary {
            files: manifest.entries.len(),
            rows_read,
            accepted,
            rejected,
            duplicates_removed: dedup.removed,
            label_conflicts: dedup.label_conflicts,
            kept: records.len(),
            train: split.train_indices.len(),
            test: split.test_indices.len(),
        })
    })
}

pub fn read_corpus(path: &Path) -> Result<Vec<PromptRecord>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {} (run `promptgate ingest` first)", path.display()))?;
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.with_context(|| format!("malformed row in {}", path.display()))?);
    }
    Ok(out)
}

pub fn read_split(path: &Path) -> Result<SplitFile> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {} (run `promptgate ingest` first)", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed split file {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbedSummary {
    pub records: usize,
    pub provider_tag: String,
    pub dim: usize,
    pub cache_path: PathBuf,
}

pub fn run_embed(cfg: &PipelineConfig) -> Result<EmbedSummary, CliError> {
    stage("embed", || {
        let records = read_corpus(&cfg.corpus_path())?;
        let embedder = cfg.provider.build()?;
        let cache_path = cfg.cache_path();
        if let Some(dir) = cache_path.parent() {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        }
        let data = embed_corpus(embedder.as_ref(), &records, &cache_path)?;
        Ok(EmbedSummary {
            records: data.len(),
            provider_tag: data.provider_tag().to_string(),
            dim: data.dim(),
            cache_path,
        })
    })
}

/// The cached embeddings of the split's records, train rows first, with the
/// split re-expressed as positions in that dataset.
pub fn load_split_dataset(cache_path: &Path, split: &SplitFile) -> Result<(EmbeddedDataset, DatasetSplit)> {
    if !cache_path.is_file() {
        bail!("embedding cache {} is missing (run `promptgate embed` first)", cache_path.display());
    }
    let cache = read_embedding_cache(cache_path)?;
    let position: HashMap<&str, usize> = cache.records().iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let mut rows = Vec::with_capacity(split.train_ids.len() + split.test_ids.len());
    for id in split.train_ids.iter().chain(&split.test_ids) {
        match position.get(id.as_str()) {
            Some(&i) => rows.push(i),
            None => bail!("record {id:?} from the split is not in {}", cache_path.display()),
        }
    }
    let n_train = split.train_ids.len();
    let data = cache.subset(&rows);
    let split = DatasetSplit {
        train_indices: (0..n_train).collect(),
        test_indices: (n_train..rows.len()).collect(),
        seed: split.seed,
        test_fraction: split.test_fraction,
    };
    Ok((data, split))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainedArtifact {
    pub family: Family,
    pub provider_tag: String,
    pub path: PathBuf,
}

pub fn run_train(cfg: &PipelineConfig) -> Result<Vec<TrainedArtifact>, CliError> {
    let seed = cfg.seed()?;
    stage("train", || {
        let split = read_split(&cfg.split_path())?;
        let (data, split) = load_split_dataset(&cfg.cache_path(), &split)?;
        let x = data.matrix().select_rows(&split.train_indices);
        let labels = data.labels();
        let y: Vec<Label> = split.train_indices.iter().map(|&i| labels[i]).collect();
        let mut out = Artifacts::new();
        let mut trained = Vec::new();
        for spec in &cfg.classifiers {
            let started = Instant::now();
            let classifier = train(&x, &y, &spec.resolve(seed)).with_context(|| format!("training {}", spec.family()))?;
            info!(family = %spec.family(), rows = x.rows(), elapsed_ms = started.elapsed().as_millis() as u64, "trained");
            let model = TrainedModel {
                classifier,
                provider_tag: data.provider_tag().to_string(),
            };
            let path = cfg.model_path(&model.provider_tag, spec.family());
            out.write(&path, model_to_json(&model)?)?;
            trained.push(TrainedArtifact {
                family: spec.family(),
                provider_tag: model.provider_tag,
                path,
            });
        }
        out.commit();
        Ok(trained)
    })
}

/// Every saved model of a configured family, across all providers, in
/// directory then family order.
fn discover_models(cfg: &PipelineConfig) -> Result<Vec<(PathBuf, TrainedModel)>> {
    let dir = cfg.models_dir();
    let mut provider_dirs: Vec<PathBuf> = std::fs::read_dir(&dir)
        .with_context(|| format!("cannot read {} (run `promptgate train` first)", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    provider_dirs.sort();
    let mut families: Vec<Family> = cfg.classifiers.iter().map(|s| s.family()).collect();
    families.sort_by_key(|f| Family::ALL.iter().position(|g| g == f));
    families.dedup();
    let mut out = Vec::new();
    for pd in provider_dirs {
        for f in &families {
            let path = pd.join(format!("{f}.json"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                let model = model_from_json(&text).with_context(|| format!("loading {}", path.display()))?;
                out.push((path, model));
            }
        }
    }
    if out.is_empty() {
        bail!("no trained models under {}", dir.display());
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvalOutput {
    pub reports: Vec<EvalReport>,
    /// Comparison table in the configured format.
    pub rendered: String,
}

pub fn run_eval(cfg: &PipelineConfig) -> Result<EvalOutput, CliError> {
    let format = cfg.report_format()?;
    stage("eval", || {
        let split_file = read_split(&cfg.split_path())?;
        let mut datasets: HashMap<String, (EmbeddedDataset, DatasetSplit)> = HashMap::new();
        let mut reports = Vec::new();
        for (path, model) in discover_models(cfg)? {
            if !datasets.contains_key(&model.provider_tag) {
                let cache = cfg
                    .cache_dir()
                    .join(format!("embeddings-{}.csv", path_safe(&model.provider_tag)));
                let loaded = load_split_dataset(&cache, &split_file)?;
                datasets.insert(model.provider_tag.clone(), loaded);
            }
            let (data, split) = &datasets[&model.provider_tag];
            let report = evaluate(&model, data, split, cfg.threshold).with_context(|| format!("evaluating {}", path.display()))?;
            reports.push(report);
        }
        let mut out = Artifacts::new();
        out.write(&cfg.output_dir.join("reports.json"), serde_json::to_string_pretty(&reports)? + "\n")?;
        let markdown = render_comparison(&reports, ReportFormat::Markdown)?;
        out.write(&cfg.output_dir.join("comparison.md"), &markdown)?;
        let csv = render_comparison(&reports, ReportFormat::Csv)?;
        out.write(&cfg.output_dir.join("comparison.csv"), &csv)?;
        out.commit();
        let rendered = match format {
            ReportFormat::Markdown => markdown,
            ReportFormat::Csv => csv,
            ReportFormat::Json => render_comparison(&reports, ReportFormat::Json)?,
        };
        Ok(EvalOutput { reports, rendered })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceFile {
    pub provider_tag: String,
    pub rows: usize,
    pub explained_variance_ratio: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub perplexity: f64,
    pub knn_preservation: f64,
    pub kl_divergence: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectSummary {
    pub rows: usize,
    pub variance: VarianceFile,
    pub pca_knn_preservation: f64,
    pub sweep: Vec<SweepRecord>,
    pub files: Vec<PathBuf>,
}

pub fn tsne_file_name(perplexity: f64, format: ScatterFormat) -> String {
    format!("tsne_p{perplexity}.{}", extension(format))
}

fn extension(format: ScatterFormat) -> &'static str {
    match format {
        ScatterFormat::Svg => "svg",
        ScatterFormat::Csv => "csv",
    }
}

pub fn run_project(cfg: &PipelineConfig, format: ScatterFormat) -> Result<ProjectSummary, CliError> {
    let seed = cfg.seed()?;
    stage("project", || {
        let cache_path = cfg.cache_path();
        if !cache_path.is_file() {
            bail!("embedding cache {} is missing (run `promptgate embed` first)", cache_path.display());
        }
        let cache = read_embedding_cache(&cache_path)?;
        if cache.provider_tag() != cfg.provider.tag() {
            bail!(
                "cache {} holds {} embeddings but the configured provider is {}",
                cache_path.display(),
                cache.provider_tag(),
                cfg.provider.tag()
            );
        }
        let rows = stratified_subsample(&cache.labels(), cfg.projection.max_rows, seed);
        let data = cache.subset(&rows);
        let labels = data.labels();
        let x = data.matrix();
        let mut out = Artifacts::new();

        let pca = pca_project(x)?;
        let ratio = pca.explained_variance_ratio.expect("pca reports ratios");
        let variance = VarianceFile {
            provider_tag: data.provider_tag().to_string(),
            rows: data.len(),
            explained_variance_ratio: ratio,
        };
        let pca_knn = knn_preservation(x, &pca.points, KNN_K);
        emit_via(&mut out, &cfg.output_dir.join(format!("pca.{}", extension(format))), |p| {
            emit_scatter(&pca, &labels, p, format)
        })?;
        out.write(&cfg.output_dir.join("variance.json"), serde_json::to_string_pretty(&variance)? + "\n")?;

        let base = cfg.tsne_config(cfg.projection.perplexities.first().copied().unwrap_or(15.0), seed);
        let sweep = perplexity_sweep(x, &cfg.projection.perplexities, &base)?;
        let mut records = Vec::new();
        for entry in &sweep {
            let file = tsne_file_name(entry.perplexity, format);
            emit_via(&mut out, &cfg.output_dir.join(&file), |p| emit_scatter(&entry.result, &labels, p, format))?;
            let kl = entry.result.params.get("kl_divergence").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
            records.push(SweepRecord {
                perplexity: entry.perplexity,
                knn_preservation: entry.knn_preservation,
                kl_divergence: kl,
                file,
            });
        }
        out.write(&cfg.output_dir.join("sweep.json"), serde_json::to_string_pretty(&records)? + "\n")?;
        Ok(ProjectSummary {
            rows: data.len(),
            variance,
            pca_knn_preservation: pca_knn,
            sweep: records,
            files: out.commit(),
        })
    })
}

/// Route a writer that takes a path through the artifact set, so it is
/// atomic and cleaned up on failure like the rest.
fn emit_via(out: &mut Artifacts, path: &Path, emit: impl FnOnce(&Path) -> promptgate_core::Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    emit(tmp.path())?;
    let bytes = std::fs::read(tmp.path())?;
    out.write(path, bytes)
}

#[derive(Debug, Clone, Serialize)]
pub struct Detection {
    pub index: usize,
    pub score: f64,
    pub label: &'static str,
}

pub fn run_detect(cfg: &PipelineConfig, model_path: &Path, prompts: &[String]) -> Result<Vec<Detection>, CliError> {
    if !model_path.is_file() {
        return Err(CliError::Usage(format!("model file {} does not exist", model_path.display())));
    }
    stage("detect", || {
        let text = std::fs::read_to_string(model_path)?;
        let model = model_from_json(&text)?;
        let embedder = cfg.provider.build()?;
        if model.provider_tag != embedder.tag() {
            bail!(
                "model was trained on {} embeddings but the configured provider is {}",
                model.provider_tag,
                embedder.tag()
            );
        }
        if let Some(i) = prompts.iter().position(|p| p.trim().is_empty()) {
            bail!("prompt {i} is empty");
        }
        let mut out = Vec::with_capacity(prompts.len());
        for chunk in prompts.chunks(embedder.batch_size().max(1)) {
            for v in embedder.embed_batch(chunk)? {
                let score = model.classifier.score_row(v.values());
                out.push(Detection {
                    index: out.len(),
                    score,
                    label: if score >= cfg.threshold { Label::Malicious } else { Label::Benign }.name(),
                });
            }
        }
        Ok(out)
    })
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub ingest: IngestSummary,
    pub embed: EmbedSummary,
    pub models: Vec<TrainedArtifact>,
    pub eval: EvalOutput,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary, CliError> {
    let ingest = run_ingest(cfg)?;
    let embed = run_embed(cfg)?;
    let models = run_train(cfg)?;
    let eval = run_eval(cfg)?;
    Ok(PipelineSummary {
        ingest,
        embed,
        models,
        eval,
    })
}
