//! The three-stage construction pipeline: seed concepts, per-seed candidate
//! extraction into the zero-shot graph, and per-seed fusion followed by a
//! deterministic conflict pass.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{ChunkParams, Corpus, RetrievalIndex};
use crate::embed::{cosine, Embedder};
use crate::error::{Error, Result};
use crate::kgraph::{
    Concept, KnowledgeGraph, Provenance, RelationType, Stage, Triplet, TripletKey,
};
use crate::llm::{complete_template, parse_triplet_list, serialize_graph, LlmBackend, TemplateId};
use crate::seeds::{generate_seed_concepts, read_seeds, SeedParams};

pub const DEFAULT_PRIORITY: [RelationType; 7] = [
    RelationType::IsAPrerequisiteOf,
    RelationType::UsedFor,
    RelationType::HyponymOf,
    RelationType::PartOf,
    RelationType::EvaluateFor,
    RelationType::Compare,
    RelationType::Conjunction,
];

#[derive(Debug, Clone)]
pub enum SeedSource {
    Generated(SeedParams),
    File(PathBuf),
    Given(Vec<Concept>),
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub seeds: SeedSource,
    pub chunking: ChunkParams,
    pub k_context: usize,
    pub k_background: usize,
    pub expert_kg: Option<PathBuf>,
    pub parallelism: usize,
    pub priority: Vec<RelationType>,
    /// Abort a stage when more than this fraction of its per-seed calls fail.
    pub failure_threshold: f64,
    /// Optional embedding-based concept merge before the conflict pass.
    pub merge_threshold: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seeds: SeedSource::Generated(SeedParams::default()),
            chunking: ChunkParams::default(),
            k_context: 5,
            k_background: 5,
            expert_kg: None,
            parallelism: 1,
            priority: DEFAULT_PRIORITY.to_vec(),
            failure_threshold: 0.10,
            merge_threshold: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_context == 0 || self.k_background == 0 {
            return Err(Error::InvalidInput(
                "k_context and k_background must be at least 1".into(),
            ));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidInput("parallelism must be at least 1".into()));
        }
        validate_priority(&self.priority)?;
        if !(0.0..=1.0).contains(&self.failure_threshold) {
            return Err(Error::InvalidInput(format!(
                "failure_threshold {} outside [0, 1]",
                self.failure_threshold
            )));
        }
        if let Some(t) = self.merge_threshold {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::InvalidInput(format!(
                    "merge_threshold {t} outside [-1, 1]"
                )));
            }
        }
        self.chunking.validate()
    }
}

pub fn validate_priority(priority: &[RelationType]) -> Result<()> {
    let distinct: BTreeSet<_> = priority.iter().collect();
    if priority.len() != RelationType::ALL.len() || distinct.len() != priority.len() {
        return Err(Error::InvalidInput(
            "priority must list each of the 7 relation types exactly once".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Candidates {
    pub triplets: Vec<Triplet>,
    /// Groups the parser rejected plus groups whose concepts were empty.
    pub malformed: usize,
    pub self_loops: usize,
    pub called: bool,
}

fn to_triplets(text: &str, provenance: &Provenance) -> Candidates {
    let parsed = parse_triplet_list(text);
    let mut out = Candidates {
        malformed: parsed.malformed,
        called: true,
        ..Candidates::default()
    };
    for raw in parsed.triplets {
        match Triplet::from_surface(&raw.head, raw.relation, &raw.tail) {
            Ok(t) => out.triplets.push(t.with_provenance(provenance.clone())),
            Err(Error::SelfLoop(_)) => out.self_loops += 1,
            Err(_) => out.malformed += 1,
        }
    }
    out
}

/// Runs the extraction prompt for one seed over its top `k_context` chunks.
/// A seed with no retrieval hits yields nothing and makes no call.
pub fn extract_candidates(
    q: &Concept,
    index: &RetrievalIndex,
    backend: &dyn LlmBackend,
    k_context: usize,
) -> Result<Candidates> {
    let hits = index.retrieve(&q.display, k_context)?;
    if hits.is_empty() {
        return Ok(Candidates::default());
    }
    let context = hits
        .iter()
        .map(|h| h.chunk.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let chunk_ids = hits.iter().map(|h| h.chunk.id()).collect();
    let bindings = BTreeMap::from([("context", context), ("query", q.display.clone())]);
    let response = complete_template(backend, TemplateId::Extraction, &bindings)?;
    let provenance = Provenance::new(Stage::Extraction, response.backend_id)
        .with_query(&q.canonical)
        .with_chunks(chunk_ids);
    Ok(to_triplets(&response.text, &provenance))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub seeds: usize,
    pub calls: usize,
    pub skipped: usize,
    pub failures: usize,
    pub malformed: usize,
    pub self_loops: usize,
    pub emitted: usize,
}

fn sorted_unique(seeds: &[Concept]) -> Vec<Concept> {
    let mut by_key: BTreeMap<&str, &Concept> = BTreeMap::new();
    for s in seeds {
        by_key.entry(&s.canonical).or_insert(s);
    }
    by_key.into_values().cloned().collect()
}

fn pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))
}

fn check_failures(stage: &'static str, failed: usize, total: usize, threshold: f64) -> Result<()> {
    if total > 0 && failed as f64 / total as f64 > threshold {
        return Err(Error::FailureThreshold {
            stage,
            failed,
            total,
            threshold,
        });
    }
    Ok(())
}

/// Extracts candidates for every seed on `parallelism` workers and merges
/// them in sorted-seed order.
pub fn build_zskg(
    seeds: &[Concept],
    index: &RetrievalIndex,
    backend: &dyn LlmBackend,
    config: &PipelineConfig,
) -> Result<(KnowledgeGraph, StageStats)> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("no seed concepts".into()));
    }
    let seeds = sorted_unique(seeds);
    let results: Vec<Result<Candidates>> = pool(config.parallelism)?.install(|| {
        seeds
            .par_iter()
            .map(|q| extract_candidates(q, index, backend, config.k_context))
            .collect()
    });
    let mut kg = KnowledgeGraph::new();
    let mut stats = StageStats {
        seeds: seeds.len(),
        ..StageStats::default()
    };
    for (q, result) in seeds.iter().zip(results) {
        match result {
            Ok(c) => {
                if c.called {
                    stats.calls += 1;
                } else {
                    stats.skipped += 1;
                }
                stats.malformed += c.malformed;
                stats.self_loops += c.self_loops;
                stats.emitted += c.triplets.len();
                for t in c.triplets {
                    kg.insert(t)?;
                }
            }
            Err(e) => {
                warn!("extraction failed for {:?}: {e}", q.canonical);
                stats.calls += 1;
                stats.failures += 1;
            }
        }
    }
    check_failures(
        "extraction",
        stats.failures,
        stats.calls,
        config.failure_threshold,
    )?;
    info!(
        "zero-shot graph: {} triplets from {} seeds ({} skipped, {} failed)",
        kg.len(),
        stats.seeds,
        stats.skipped,
        stats.failures
    );
    Ok((kg, stats))
}

/// Fuses the zero-shot and expert neighborhoods of `q`. Returns no triplets
/// and makes no call when both neighborhoods are empty.
pub fn fuse_concept(
    q: &Concept,
    zskg: &KnowledgeGraph,
    expert: Option<&KnowledgeGraph>,
    index: &RetrievalIndex,
    backend: &dyn LlmBackend,
    k_background: usize,
) -> Result<Candidates> {
    let llm_kg = zskg.subgraph(&q.canonical);
    let e_g = expert.map(|e| e.subgraph(&q.canonical)).unwrap_or_default();
    if llm_kg.is_empty() && e_g.is_empty() {
        return Ok(Candidates::default());
    }
    let background = index
        .retrieve(&q.display, k_background)?
        .iter()
        .map(|h| h.chunk.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");
    let bindings = BTreeMap::from([
        ("concept", q.display.clone()),
        ("LLM-KG", serialize_graph(&llm_kg)),
        ("E-G", serialize_graph(&e_g)),
        ("background", background),
    ]);
    let response = complete_template(backend, TemplateId::Fusion, &bindings)?;
    let provenance = Provenance::new(Stage::Fusion, response.backend_id).with_query(&q.canonical);
    Ok(to_triplets(&response.text, &provenance))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionStats {
    #[serde(flatten)]
    pub stage: StageStats,
    /// Triplets in the graph assembled from fusion outputs alone.
    pub fused_triplets: usize,
    /// Zero-shot triplets kept because no fused seed touches them.
    pub carried_over: usize,
    pub merged_concepts: usize,
    pub conflicts_resolved: usize,
}

/// Fusion for every seed, then assembly and the conflict pass.
///
/// The result holds every fused triplet (with the zero-shot provenance of the
/// same triplet carried over once) plus the zero-shot triplets neither of whose
/// endpoints is a successfully fused seed.
pub fn fuse_all(
    seeds: &[Concept],
    zskg: &KnowledgeGraph,
    expert: Option<&KnowledgeGraph>,
    index: &RetrievalIndex,
    backend: &dyn LlmBackend,
    config: &PipelineConfig,
    embedder: Option<&dyn Embedder>,
) -> Result<(KnowledgeGraph, FusionStats)> {
    let seeds = sorted_unique(seeds);
    let results: Vec<Result<Candidates>> = pool(config.parallelism)?.install(|| {
        seeds
            .par_iter()
            .map(|q| fuse_concept(q, zskg, expert, index, backend, config.k_background))
            .collect()
    });

    let mut stats = FusionStats::default();
    stats.stage.seeds = seeds.len();
    let mut fused = KnowledgeGraph::new();
    let mut presented: BTreeSet<&str> = BTreeSet::new();
    let mut carried: BTreeSet<TripletKey> = BTreeSet::new();
    for (q, result) in seeds.iter().zip(results) {
        let c = match result {
            Ok(c) => c,
            Err(e) => {
                warn!("fusion failed for {:?}: {e}", q.canonical);
                stats.stage.calls += 1;
                stats.stage.failures += 1;
                continue;
            }
        };
        if !c.called {
            stats.stage.skipped += 1;
            continue;
        }
        stats.stage.calls += 1;
        stats.stage.malformed += c.malformed;
        stats.stage.self_loops += c.self_loops;
        stats.stage.emitted += c.triplets.len();
        presented.insert(&q.canonical);
        for mut t in c.triplets {
            let key = t.key();
            if let Some(prior) = zskg.provenance(&key) {
                if carried.insert(key) {
                    let mut prov = prior.to_vec();
                    prov.append(&mut t.provenance);
                    t.provenance = prov;
                }
            }
            fused.insert(t)?;
        }
    }
    check_failures(
        "fusion",
        stats.stage.failures,
        stats.stage.calls,
        config.failure_threshold,
    )?;
    stats.fused_triplets = fused.len();

    for t in zskg.triplets() {
        if presented.contains(t.head.canonical.as_str())
            || presented.contains(t.tail.canonical.as_str())
        {
            continue;
        }
        if !fused.contains(&t.key()) {
            stats.carried_over += 1;
        }
        fused.insert(t)?;
    }

    if let (Some(tau), Some(embedder)) = (config.merge_threshold, embedder) {
        let before = fused.concepts().count();
        fused = merge_similar_concepts(&fused, embedder, tau)?;
        stats.merged_concepts = before - fused.concepts().count();
    }

    let before = fused.len();
    let kg = normalize_fused(&fused, &config.priority);
    stats.conflicts_resolved = before - kg.len();
    info!(
        "fused graph: {} triplets ({} carried over, {} conflicts resolved)",
        kg.len(),
        stats.carried_over,
        stats.conflicts_resolved
    );
    Ok((kg, stats))
}

/// Keeps one triplet per concept pair: most provenance entries, then the
/// relation earliest in `priority`, then the smaller `(head, tail)`.
pub fn normalize_fused(kg: &KnowledgeGraph, priority: &[RelationType]) -> KnowledgeGraph {
    let rank = |r: RelationType| {
        priority
            .iter()
            .position(|&p| p == r)
            .unwrap_or(priority.len())
    };
    let mut out = kg.clone();
    for conflict in kg.find_conflicts() {
        let winner = conflict
            .triplets
            .iter()
            .min_by(|a, b| {
                b.provenance
                    .len()
                    .cmp(&a.provenance.len())
                    .then(rank(a.relation).cmp(&rank(b.relation)))
                    .then_with(|| {
                        (&a.head.canonical, &a.tail.canonical)
                            .cmp(&(&b.head.canonical, &b.tail.canonical))
                    })
            })
            .map(Triplet::key)
            .expect("conflicts hold at least two triplets");
        for t in &conflict.triplets {
            let key = t.key();
            if key != winner {
                out.remove(&key);
            }
        }
    }
    out
}

/// Merges concepts whose embeddings reach cosine `tau`. Each group is
/// represented by its member with the most incident triplets, then the
/// longest, then the lexicographically smallest canonical form.
pub fn merge_similar_concepts(
    kg: &KnowledgeGraph,
    embedder: &dyn Embedder,
    tau: f64,
) -> Result<KnowledgeGraph> {
    let concepts: Vec<&str> = kg.concepts().collect();
    if concepts.len() < 2 {
        return Ok(kg.clone());
    }
    let vectors = embedder.embed_batch(&concepts)?;
    let mut parent: Vec<usize> = (0..concepts.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..concepts.len() {
        for j in i + 1..concepts.len() {
            if cosine(&vectors[i], &vectors[j])? >= tau {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let degree = |c: &str| kg.subgraph(c).len();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..concepts.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut rename: BTreeMap<&str, Concept> = BTreeMap::new();
    for members in groups.values().filter(|m| m.len() > 1) {
        let rep = members
            .iter()
            .map(|&i| concepts[i])
            .max_by(|a, b| {
                degree(a)
                    .cmp(&degree(b))
                    .then(a.len().cmp(&b.len()))
                    .then_with(|| b.cmp(a))
            })
            .unwrap();
        let rep_concept = kg.concept(rep).expect("concept comes from the graph");
        for &i in members {
            if concepts[i] != rep {
                rename.insert(concepts[i], rep_concept.clone());
            }
        }
    }
    let mut out = KnowledgeGraph::new();
    for t in kg.triplets() {
        let head = rename
            .get(t.head.canonical.as_str())
            .cloned()
            .unwrap_or(t.head);
        let tail = rename
            .get(t.tail.canonical.as_str())
            .cloned()
            .unwrap_or(t.tail);
        match Triplet::new(head, t.relation, tail) {
            Ok(mut merged) => {
                merged.provenance = t.provenance;
                out.insert(merged)?;
            }
            Err(Error::SelfLoop(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub seeds: usize,
    pub zskg_triplets: usize,
    pub final_triplets: usize,
    pub extraction: StageStats,
    pub fusion: FusionStats,
}

pub fn resolve_seeds(
    corpus: &Corpus,
    source: &SeedSource,
    embedder: &dyn Embedder,
) -> Result<Vec<Concept>> {
    let seeds = match source {
        SeedSource::Generated(params) => generate_seed_concepts(corpus, embedder, params)?,
        SeedSource::File(path) => read_seeds(path)?,
        SeedSource::Given(seeds) => seeds.clone(),
    };
    if seeds.is_empty() {
        return Err(Error::InvalidInput(
            "seed source produced no concepts".into(),
        ));
    }
    Ok(seeds)
}

/// Seeds, zero-shot extraction, fusion and the conflict pass.
pub fn run_graphusion(
    corpus: &Corpus,
    config: &PipelineConfig,
    backend: &dyn LlmBackend,
    embedder: &dyn Embedder,
) -> Result<(KnowledgeGraph, RunReport)> {
    config.validate()?;
    let seeds = resolve_seeds(corpus, &config.seeds, embedder)?;
    let index = RetrievalIndex::build(corpus, config.chunking)?;
    let expert = config
        .expert_kg
        .as_deref()
        .map(KnowledgeGraph::load_expert)
        .transpose()?;
    let (zskg, extraction) = build_zskg(&seeds, &index, backend, config)?;
    let merge_embedder = config.merge_threshold.map(|_| embedder);
    let (kg, fusion) = fuse_all(
        &seeds,
        &zskg,
        expert.as_ref(),
        &index,
        backend,
        config,
        merge_embedder,
    )?;
    let report = RunReport {
        seeds: extraction.seeds,
        zskg_triplets: zskg.len(),
        final_triplets: kg.len(),
        extraction,
        fusion,
    };
    Ok((kg, report))
}

/// Writes `kg.jsonl` and `report.json` into `dir`.
pub fn persist_run(dir: &Path, kg: &KnowledgeGraph, report: &RunReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    kg.save(&dir.join("kg.jsonl"))?;
    let path = dir.join("report.json");
    let mut json = serde_json::to_string_pretty(report).expect("report serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}
