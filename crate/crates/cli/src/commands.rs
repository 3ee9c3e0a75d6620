use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;

use graphusion::corpus::{ingest_corpus, Corpus, CorpusFormat, MalformedPolicy, RetrievalIndex};
use graphusion::embed::{Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use graphusion::graphusion::{
    build_zskg, fuse_all, persist_run, resolve_seeds, run_graphusion, PipelineConfig, SeedSource,
};
use graphusion::kgraph::{KnowledgeGraph, RelationType};
use graphusion::linkpred::{
    evaluate_linkpred, load_pairs, load_wiki, run_linkpred, LinkPredRun, LpResources, LpVariant,
};
use graphusion::llm::{
    AuditedBackend, DecisionMode, LlmBackend, MissPolicy, RemoteBackend, RemoteConfig,
    ScriptedBackend,
};
use graphusion::metrics::{load_ratings, rating_agreement, rating_summary};
use graphusion::seeds::{write_seeds, SeedParams, Stoplist};
use graphusion::tutorqa::{load_items, run_task, write_answers, Task, TASK6_RUBRIC};

use crate::config::{EmbedKind, LlmKind, RunConfig};
use crate::{InputArgs, LinkpredArgs, Mode, QaArgs};

fn apply(mut cfg: RunConfig, input: &InputArgs) -> Result<RunConfig> {
    let p = &mut cfg.paths;
    if let Some(c) = &input.corpus {
        p.corpus = Some(c.clone());
    }
    if let Some(f) = &input.format {
        p.corpus_format = f.clone();
    }
    if let Some(s) = &input.seeds {
        p.seeds = Some(s.clone());
    }
    if let Some(e) = &input.expert_kg {
        p.expert_kg = Some(e.clone());
    }
    if let Some(o) = &input.out_dir {
        p.output_dir = o.clone();
    }
    if let Some(t) = &input.transcript {
        cfg.llm.backend = LlmKind::Scripted;
        cfg.llm.transcript = Some(t.clone());
    }
    if let Some(n) = input.parallelism {
        cfg.pipeline.parallelism = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(
    cfg: &RunConfig,
    policy: MalformedPolicy,
) -> Result<(Corpus, graphusion::corpus::IngestReport)> {
    let path = cfg
        .paths
        .corpus
        .as_deref()
        .context("no corpus given (paths.corpus or --corpus)")?;
    let format: CorpusFormat = cfg
        .paths
        .corpus_format
        .parse()
        .context("paths.corpus_format")?;
    Ok(ingest_corpus(path, format, policy)?)
}

fn embedder(cfg: &RunConfig) -> Result<Box<dyn Embedder>> {
    Ok(match cfg.embed.backend {
        EmbedKind::Hash => Box::new(HashEmbedder::new(cfg.embed.dim)?),
        EmbedKind::Remote => Box::new(RemoteEmbedder::new(RemoteEmbedderConfig {
            url: cfg.embed.url.clone().context("embed.url")?,
            token: std::env::var(&cfg.embed.token_env).ok(),
            dim: cfg.embed.dim,
            batch_size: cfg.embed.batch_size,
            retries: 3,
        })?),
    })
}

/// The configured completion backend, wrapped in an audit log when one is
/// configured or `default_audit` is given.
fn backend(cfg: &RunConfig, default_audit: Option<PathBuf>) -> Result<Arc<dyn LlmBackend>> {
    let inner: Arc<dyn LlmBackend> = match cfg.llm.backend {
        LlmKind::Scripted => {
            let path = cfg
                .llm
                .transcript
                .as_deref()
                .context("the scripted backend needs llm.transcript or --transcript")?;
            let on_miss = match &cfg.llm.fallback {
                Some(text) => MissPolicy::Fallback(text.clone()),
                None => MissPolicy::Error,
            };
            Arc::new(ScriptedBackend::load(path, on_miss)?)
        }
        LlmKind::Remote => Arc::new(RemoteBackend::new(RemoteConfig {
            url: cfg.llm.url.clone().context("llm.url")?,
            model: cfg.llm.model.clone().context("llm.model")?,
            token: std::env::var(&cfg.llm.token_env).ok(),
            retries: cfg.llm.retries,
            timeout_secs: cfg.llm.timeout_secs,
        })),
    };
    let Some(log_path) = cfg.llm.audit_log.clone().or(default_audit) else {
        return Ok(inner);
    };
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let sink =
        File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    info!("logging LLM calls to {}", log_path.display());
    Ok(Arc::new(AuditedBackend::new(
        inner,
        Box::new(sink),
        cfg.llm.capture_text,
    )))
}

fn pipeline_config(cfg: &RunConfig) -> Result<PipelineConfig> {
    let seeds = match &cfg.paths.seeds {
        Some(path) => SeedSource::File(path.clone()),
        None => SeedSource::Generated(SeedParams {
            k: cfg.seeds.k,
            terms_per_cluster: cfg.seeds.terms_per_cluster,
            stoplist: match &cfg.paths.stopwords {
                Some(p) => Stoplist::load(p)?,
                None => Stoplist::english(),
            },
            seed: cfg.seeds.seed,
        }),
    };
    Ok(PipelineConfig {
        seeds,
        chunking: cfg.pipeline.chunking(),
        k_context: cfg.pipeline.k_context,
        k_background: cfg.pipeline.k_background,
        expert_kg: cfg.paths.expert_kg.clone(),
        parallelism: cfg.pipeline.parallelism,
        priority: cfg.pipeline.priority()?,
        failure_threshold: cfg.pipeline.failure_threshold,
        merge_threshold: cfg.pipeline.merge_threshold,
    })
}

#[derive(Serialize)]
struct SkippedRecord {
    line: usize,
    reason: String,
}

#[derive(Serialize)]
struct IngestSummary {
    documents: usize,
    skipped: Vec<SkippedRecord>,
    chunks: usize,
    vocabulary: usize,
    avg_chunk_tokens: f64,
}

pub fn ingest(cfg: RunConfig, input: &InputArgs, skip_malformed: bool) -> Result<()> {
    let cfg = apply(cfg, input)?;
    let policy = if skip_malformed {
        MalformedPolicy::Skip
    } else {
        MalformedPolicy::Abort
    };
    let (corpus, report) = load_corpus(&cfg, policy)?;
    let index = RetrievalIndex::build(&corpus, cfg.pipeline.chunking())?;
    print_json(&IngestSummary {
        documents: report.documents,
        skipped: report
            .skipped
            .into_iter()
            .map(|(line, reason)| SkippedRecord { line, reason })
            .collect(),
        chunks: index.num_chunks(),
        vocabulary: index.vocabulary().count(),
        avg_chunk_tokens: index.avg_len(),
    })
}

pub fn seeds(cfg: RunConfig, input: &InputArgs, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = apply(cfg, input)?;
    // Always generate here, even when the config names a seeds file.
    cfg.paths.seeds = None;
    let (corpus, _) = load_corpus(&cfg, MalformedPolicy::Abort)?;
    let embedder = embedder(&cfg)?;
    let seeds = resolve_seeds(&corpus, &pipeline_config(&cfg)?.seeds, embedder.as_ref())?;
    let out = out.unwrap_or_else(|| cfg.paths.output_dir.join("seeds.txt"));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    write_seeds(&out, &seeds)?;
    eprintln!("wrote {} seeds to {}", seeds.len(), out.display());
    Ok(())
}

pub fn extract(cfg: RunConfig, input: &InputArgs) -> Result<()> {
    let cfg = apply(cfg, input)?;
    let (corpus, _) = load_corpus(&cfg, MalformedPolicy::Abort)?;
    let pc = pipeline_config(&cfg)?;
    let embedder = embedder(&cfg)?;
    let seeds = resolve_seeds(&corpus, &pc.seeds, embedder.as_ref())?;
    let index = RetrievalIndex::build(&corpus, pc.chunking)?;
    let out = &cfg.paths.output_dir;
    let backend = backend(&cfg, Some(out.join("llm_calls.jsonl")))?;
    let (zskg, stats) = build_zskg(&seeds, &index, backend.as_ref(), &pc)?;
    zskg.save(&out.join("zskg.jsonl"))?;
    write_json(&out.join("extract_report.json"), &stats)?;
    print_json(&stats)
}

pub fn fuse(cfg: RunConfig, input: &InputArgs, zskg: Option<PathBuf>) -> Result<()> {
    let cfg = apply(cfg, input)?;
    let (corpus, _) = load_corpus(&cfg, MalformedPolicy::Abort)?;
    let pc = pipeline_config(&cfg)?;
    let embedder = embedder(&cfg)?;
    let seeds = resolve_seeds(&corpus, &pc.seeds, embedder.as_ref())?;
    let index = RetrievalIndex::build(&corpus, pc.chunking)?;
    let out = &cfg.paths.output_dir;
    let zskg_path = zskg.unwrap_or_else(|| out.join("zskg.jsonl"));
    let zskg = KnowledgeGraph::load(&zskg_path)?;
    let expert = pc
        .expert_kg
        .as_deref()
        .map(KnowledgeGraph::load_expert)
        .transpose()?;
    let backend = backend(&cfg, Some(out.join("llm_calls.jsonl")))?;
    let merge_embedder = pc.merge_threshold.map(|_| embedder.as_ref());
    let (kg, stats) = fuse_all(
        &seeds,
        &zskg,
        expert.as_ref(),
        &index,
        backend.as_ref(),
        &pc,
        merge_embedder,
    )?;
    kg.save(&out.join("kg.jsonl"))?;
    write_json(&out.join("fuse_report.json"), &stats)?;
    print_json(&stats)
}

pub fn build(cfg: RunConfig, input: &InputArgs) -> Result<()> {
    let cfg = apply(cfg, input)?;
    let (corpus, _) = load_corpus(&cfg, MalformedPolicy::Abort)?;
    let pc = pipeline_config(&cfg)?;
    let embedder = embedder(&cfg)?;
    let out = &cfg.paths.output_dir;
    let backend = backend(&cfg, Some(out.join("llm_calls.jsonl")))?;
    let (kg, report) = run_graphusion(&corpus, &pc, backend.as_ref(), embedder.as_ref())?;
    persist_run(out, &kg, &report)?;
    eprintln!(
        "wrote {} triplets to {}",
        kg.len(),
        out.join("kg.jsonl").display()
    );
    print_json(&report)
}

fn read_predictions(path: &Path) -> Result<Vec<bool>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| match l.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => Ok(true),
            "0" | "false" | "no" => Ok(false),
            other => bail!(
                "{}:{}: prediction {other:?} is not 0 or 1",
                path.display(),
                i + 1
            ),
        })
        .collect()
}

pub fn linkpred(cfg: RunConfig, args: &LinkpredArgs) -> Result<()> {
    let cfg = apply(cfg, &args.input)?;
    let items = load_pairs(&args.data)?;
    let variant: LpVariant = args.variant.parse()?;
    let report = if let Some(path) = &args.predictions {
        let preds = read_predictions(path)?;
        evaluate_linkpred(&items, &preds).with_context(|| {
            format!(
                "{} has {} predictions for {} pairs",
                path.display(),
                preds.len(),
                items.len()
            )
        })?
    } else {
        let corpus_index = match variant {
            LpVariant::Doc => {
                let (corpus, _) = load_corpus(&cfg, MalformedPolicy::Abort)?;
                Some(RetrievalIndex::build(&corpus, cfg.pipeline.chunking())?)
            }
            _ => None,
        };
        let train = args
            .train_kg
            .as_deref()
            .map(KnowledgeGraph::load)
            .transpose()?;
        let wiki = args.wiki.as_deref().map(load_wiki).transpose()?;
        let backend = backend(&cfg, None)?;
        let run = LinkPredRun {
            variant,
            mode: match args.mode {
                Mode::Plain => DecisionMode::Plain,
                Mode::Cot => DecisionMode::Cot,
            },
            domain: &cfg.tasks.domain,
            resources: LpResources {
                index: corpus_index.as_ref(),
                k_doc: cfg.tasks.k_doc,
                training_kg: train.as_ref(),
                wiki: wiki.as_ref(),
            },
            parallelism: cfg.pipeline.parallelism,
        };
        let (report, _) = run_linkpred(&items, backend.as_ref(), &run)?;
        if report.unparseable > 0 {
            warn!(
                "{} responses had no YES/NO decision and were scored negative",
                report.unparseable
            );
        }
        report
    };
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    print_json(&report)
}

pub fn qa(cfg: RunConfig, args: &QaArgs) -> Result<()> {
    let cfg = apply(cfg, &args.input)?;
    let task: Task = args.task.parse()?;
    let items = load_items(&args.data)?;
    let kg = match args.kg.as_ref().or(cfg.paths.kg.as_ref()) {
        Some(p) => KnowledgeGraph::load(p)?,
        None => {
            warn!("no knowledge graph given; answering without graph evidence");
            KnowledgeGraph::new()
        }
    };
    let backend = backend(&cfg, None)?;
    let embedder = embedder(&cfg)?;
    let run = run_task(
        task,
        &items,
        &kg,
        backend.as_ref(),
        embedder.as_ref(),
        &cfg.tasks.domain,
        cfg.pipeline.parallelism,
    )?;
    let out = match (&args.out, task) {
        (Some(p), _) => Some(p.clone()),
        (None, Task::IdeaHamster) => Some(cfg.paths.output_dir.join("task6_answers.jsonl")),
        _ => None,
    };
    if let Some(path) = out {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        write_answers(&path, &run)?;
        if task == Task::IdeaHamster {
            let rubric = path.with_file_name("task6_rubric.md");
            fs::write(&rubric, TASK6_RUBRIC)
                .with_context(|| format!("writing {}", rubric.display()))?;
            eprintln!(
                "wrote {} answers to {} and the rating rubric to {}",
                run.items.len(),
                path.display(),
                rubric.display()
            );
        }
    }
    print_json(&run.report)
}

#[derive(Serialize)]
struct RatingsOutput {
    summary: graphusion::metrics::RatingSummary,
    agreement: Option<graphusion::metrics::Agreement>,
}

pub fn eval_ratings(path: &Path) -> Result<()> {
    let records = load_ratings(path)?;
    print_json(&RatingsOutput {
        summary: rating_summary(&records)?,
        agreement: rating_agreement(&records)?,
    })
}

#[derive(Serialize)]
struct RelationShare {
    relation: RelationType,
    count: usize,
    percent: f64,
}

#[derive(Serialize)]
struct ConflictSummary {
    pair: (String, String),
    relations: Vec<RelationType>,
}

#[derive(Serialize)]
struct InspectReport {
    triplets: usize,
    concepts: usize,
    conflicts: Vec<ConflictSummary>,
    relations: Vec<RelationShare>,
    percent_total: f64,
}

fn inspect_report(kg: &KnowledgeGraph) -> InspectReport {
    let total = kg.len();
    let relations: Vec<RelationShare> = kg
        .relation_counts()
        .into_iter()
        .map(|(relation, count)| RelationShare {
            relation,
            count,
            percent: if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            },
        })
        .collect();
    InspectReport {
        triplets: total,
        concepts: kg.concepts().count(),
        conflicts: kg
            .find_conflicts()
            .into_iter()
            .map(|c| ConflictSummary {
                pair: c.pair,
                relations: c.triplets.iter().map(|t| t.relation).collect(),
            })
            .collect(),
        percent_total: relations.iter().map(|r| r.percent).sum(),
        relations,
    }
}

pub fn inspect(path: &Path, json: bool) -> Result<()> {
    let kg = KnowledgeGraph::load(path)?;
    let report = inspect_report(&kg);
    if json {
        return print_json(&report);
    }
    println!("triplets   {}", report.triplets);
    println!("concepts   {}", report.concepts);
    println!("conflicts  {}", report.conflicts.len());
    for c in &report.conflicts {
        let rels: Vec<&str> = c.relations.iter().map(|r| r.as_str()).collect();
        println!("  {} / {}: {}", c.pair.0, c.pair.1, rels.join(", "));
    }
    println!();
    println!("{:<22} {:>7} {:>8}", "relation", "count", "percent");
    for r in &report.relations {
        println!(
            "{:<22} {:>7} {:>8.2}",
            r.relation.as_str(),
            r.count,
            r.percent
        );
    }
    println!(
        "{:<22} {:>7} {:>8.2}",
        "total", report.triplets, report.percent_total
    );
    Ok(())
}
