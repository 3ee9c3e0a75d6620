//! TOML run configuration. Relative paths resolve against the directory of
//! the config file; unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use graphusion::corpus::ChunkParams;
use graphusion::graphusion::DEFAULT_PRIORITY;
use graphusion::kgraph::RelationType;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub llm: LlmSettings,
    pub embed: EmbedSettings,
    pub pipeline: PipelineSettings,
    pub seeds: SeedSettings,
    pub tasks: TaskSettings,
    pub logging: LoggingSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub corpus_format: String,
    pub seeds: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    pub expert_kg: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus: None,
            corpus_format: "jsonl".into(),
            seeds: None,
            stopwords: None,
            kg: None,
            expert_kg: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    #[default]
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmSettings {
    pub backend: LlmKind,
    pub transcript: Option<PathBuf>,
    /// Response for prompts no rule matches; unset means a miss is an error.
    pub fallback: Option<String>,
    pub url: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API token.
    pub token_env: String,
    pub retries: u32,
    pub timeout_secs: u64,
    pub audit_log: Option<PathBuf>,
    pub capture_text: bool,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            backend: LlmKind::Scripted,
            transcript: None,
            fallback: None,
            url: None,
            model: None,
            token_env: "GRAPHUSION_LLM_TOKEN".into(),
            retries: 3,
            timeout_secs: 120,
            audit_log: None,
            capture_text: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbedKind {
    #[default]
    Hash,
    Remote,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedSettings {
    pub backend: EmbedKind,
    pub dim: usize,
    pub url: Option<String>,
    pub token_env: String,
    pub batch_size: usize,
}

impl Default for EmbedSettings {
    fn default() -> Self {
        Self {
            backend: EmbedKind::Hash,
            dim: 256,
            url: None,
            token_env: "GRAPHUSION_EMBED_TOKEN".into(),
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSettings {
    pub k_context: usize,
    pub k_background: usize,
    pub parallelism: usize,
    pub failure_threshold: f64,
    pub priority: Vec<String>,
    pub merge_threshold: Option<f64>,
    pub chunk_max_tokens: usize,
    pub chunk_overlap: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        let chunk = ChunkParams::default();
        Self {
            k_context: 5,
            k_background: 5,
            parallelism: 1,
            failure_threshold: 0.10,
            priority: DEFAULT_PRIORITY
                .iter()
                .map(|r| r.as_str().to_string())
                .collect(),
            merge_threshold: None,
            chunk_max_tokens: chunk.max_tokens,
            chunk_overlap: chunk.overlap,
        }
    }
}

impl PipelineSettings {
    pub fn chunking(&self) -> ChunkParams {
        ChunkParams {
            max_tokens: self.chunk_max_tokens,
            overlap: self.chunk_overlap,
        }
    }

    pub fn priority(&self) -> Result<Vec<RelationType>> {
        self.priority
            .iter()
            .map(|s| {
                RelationType::parse(s)
                    .with_context(|| format!("pipeline.priority: unknown relation {s:?}"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSettings {
    pub k: usize,
    pub terms_per_cluster: usize,
    pub seed: u64,
}

impl Default for SeedSettings {
    fn default() -> Self {
        Self {
            k: 10,
            terms_per_cluster: 20,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSettings {
    pub domain: String,
    pub k_doc: usize,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self {
            domain: graphusion::linkpred::DEFAULT_DOMAIN.into(),
            k_doc: 3,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingSettings {
    pub level: String,
}

impl Default for LoggingSettings {
    fn default() -> Self {
        Self {
            level: "warn".into(),
        }
    }
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut config.paths;
        for field in [
            &mut p.corpus,
            &mut p.seeds,
            &mut p.stopwords,
            &mut p.kg,
            &mut p.expert_kg,
        ] {
            rebase(base, field);
        }
        if p.output_dir.is_relative() {
            p.output_dir = base.join(&p.output_dir);
        }
        rebase(base, &mut config.llm.transcript);
        rebase(base, &mut config.llm.audit_log);
        Ok(config)
    }

    /// Loads `path` when given, else the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    /// Checks that every configured input file exists and the numeric
    /// settings are in range.
    pub fn validate(&self) -> Result<()> {
        let inputs = [
            ("paths.corpus", &self.paths.corpus),
            ("paths.seeds", &self.paths.seeds),
            ("paths.stopwords", &self.paths.stopwords),
            ("paths.kg", &self.paths.kg),
            ("paths.expert_kg", &self.paths.expert_kg),
            ("llm.transcript", &self.llm.transcript),
        ];
        for (key, path) in inputs {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{key}: {} does not exist", p.display());
                }
            }
        }
        let pl = &self.pipeline;
        if pl.k_context == 0 || pl.k_background == 0 {
            bail!("pipeline.k_context and pipeline.k_background must be at least 1");
        }
        if pl.parallelism == 0 {
            bail!("pipeline.parallelism must be at least 1");
        }
        graphusion::graphusion::validate_priority(&pl.priority()?).context("pipeline.priority")?;
        pl.chunking()
            .validate()
            .context("pipeline.chunk_max_tokens / pipeline.chunk_overlap")?;
        if self.embed.dim == 0 {
            bail!("embed.dim must be positive");
        }
        if self.llm.backend == LlmKind::Remote
            && (self.llm.url.is_none() || self.llm.model.is_none())
        {
            bail!("llm.url and llm.model are required for the remote backend");
        }
        if self.embed.backend == EmbedKind::Remote && self.embed.url.is_none() {
            bail!("embed.url is required for the remote embedder");
        }
        Ok(())
    }
}
