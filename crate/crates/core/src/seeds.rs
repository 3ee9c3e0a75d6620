//! Seed concept generation: k-means over document embeddings, then
//! class-based TF-IDF to pick representative unigrams and bigrams per cluster.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Corpus};
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::kgraph::{canonicalize_concept, Concept};

const MAX_KMEANS_ITERS: usize = 100;
const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicCluster {
    pub cluster_id: usize,
    pub member_doc_ids: Vec<String>,
    /// Highest weight first; equal weights in lexicographic order.
    pub top_terms: Vec<(String, f64)>,
}

/// Partitions the corpus into at most `k` clusters with seeded k-means++ and
/// Lloyd iterations on unit-norm document embeddings.
///
/// Clusters are numbered by the corpus position of their first member, so the
/// labeling does not depend on initialization order. Clusters that end up
/// empty are dropped.
pub fn cluster_corpus(
    corpus: &Corpus,
    embedder: &dyn Embedder,
    k: usize,
    seed: u64,
) -> Result<Vec<TopicCluster>> {
    let n = corpus.len();
    if k == 0 {
        return Err(Error::InvalidInput(
            "cluster count k must be at least 1".into(),
        ));
    }
    if k > n {
        return Err(Error::InvalidInput(format!(
            "cluster count {k} exceeds document count {n}"
        )));
    }
    let texts: Vec<String> = corpus
        .documents()
        .iter()
        .map(|d| format!("{}\n{}", d.title, d.text))
        .collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let points: Vec<Vec<f64>> = embedder
        .embed_batch(&refs)?
        .into_iter()
        .map(|e| e.as_slice().to_vec())
        .collect();

    let assignment = kmeans(&points, k, seed);

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (doc, &c) in assignment.iter().enumerate() {
        groups.entry(c).or_default().push(doc);
    }
    if groups.len() < k {
        log::warn!(
            "k-means produced {} empty cluster(s); dropping them",
            k - groups.len()
        );
    }
    let mut members: Vec<Vec<usize>> = groups.into_values().collect();
    members.sort_by_key(|m| m[0]);
    Ok(members
        .into_iter()
        .enumerate()
        .map(|(cluster_id, docs)| TopicCluster {
            cluster_id,
            member_doc_ids: docs
                .into_iter()
                .map(|i| corpus.documents()[i].id.clone())
                .collect(),
            top_terms: Vec::new(),
        })
        .collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![rng.gen_range(0..points.len())];
    while chosen.len() < k {
        let weights: Vec<f64> = points
            .iter()
            .map(|p| {
                chosen
                    .iter()
                    .map(|&c| sq_dist(p, &points[c]))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && r < *w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // Fewer distinct points than clusters; the duplicate center ends up empty.
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(pick);
    }
    let mut centers: Vec<Vec<f64>> = chosen.iter().map(|&i| points[i].clone()).collect();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..MAX_KMEANS_ITERS {
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    assignment
}

/// Unigram and adjacent-bigram counts of one document.
fn term_counts(text: &str, into: &mut BTreeMap<String, f64>) -> usize {
    let tokens = tokenize(text);
    for t in &tokens {
        *into.entry(t.clone()).or_default() += 1.0;
    }
    for pair in tokens.windows(2) {
        *into.entry(format!("{} {}", pair[0], pair[1])).or_default() += 1.0;
    }
    tokens.len()
}

/// Fills `top_terms` with class-based TF-IDF weights
/// `W(t, c) = tf(t, c) * ln(1 + A / f(t))`, where `tf` counts the term in the
/// cluster's documents, `f` counts it across all clusters and `A` is the mean
/// number of word tokens per cluster. Only terms with positive weight are kept.
pub fn class_tfidf(clusters: &[TopicCluster], corpus: &Corpus) -> Result<Vec<TopicCluster>> {
    if clusters.is_empty() {
        return Err(Error::InvalidInput("no clusters to weight".into()));
    }
    let mut per_cluster: Vec<BTreeMap<String, f64>> = Vec::with_capacity(clusters.len());
    let mut words = 0usize;
    for c in clusters {
        let mut tf = BTreeMap::new();
        for id in &c.member_doc_ids {
            let doc = corpus.get(id).ok_or_else(|| {
                Error::InvalidInput(format!("cluster member {id:?} is not in the corpus"))
            })?;
            words += term_counts(&doc.text, &mut tf);
        }
        per_cluster.push(tf);
    }
    let avg_words = words as f64 / clusters.len() as f64;
    let mut total: BTreeMap<&str, f64> = BTreeMap::new();
    for tf in &per_cluster {
        for (t, n) in tf {
            *total.entry(t.as_str()).or_default() += n;
        }
    }
    Ok(clusters
        .iter()
        .zip(&per_cluster)
        .map(|(c, tf)| {
            let mut terms: Vec<(String, f64)> = tf
                .iter()
                .map(|(t, n)| (t.clone(), n * (1.0 + avg_words / total[t.as_str()]).ln()))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            TopicCluster {
                top_terms: terms,
                ..c.clone()
            }
        })
        .collect())
}

/// Function words that disqualify a candidate term when they open or close it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stoplist {
    words: BTreeSet<String>,
}

impl Stoplist {
    pub fn parse(text: &str) -> Self {
        Self {
            words: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        }
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn empty() -> Self {
        Self {
            words: BTreeSet::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(
            &fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        ))
    }

    pub fn contains_word(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    /// True for stoplisted words, bigrams that start or end with one, and
    /// terms without any letter.
    pub fn rejects(&self, term: &str) -> bool {
        let first = term.split(' ').next().unwrap_or("");
        let last = term.rsplit(' ').next().unwrap_or(first);
        !term.chars().any(char::is_alphabetic)
            || self.words.contains(first)
            || self.words.contains(last)
    }
}

impl Default for Stoplist {
    fn default() -> Self {
        Self::english()
    }
}

#[derive(Debug, Clone)]
pub struct SeedParams {
    pub k: usize,
    pub terms_per_cluster: usize,
    pub stoplist: Stoplist,
    pub seed: u64,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self {
            k: 10,
            terms_per_cluster: 20,
            stoplist: Stoplist::english(),
            seed: 42,
        }
    }
}

/// Picks the seeds from weighted clusters: the first `terms_per_cluster`
/// non-stoplisted terms of each cluster, in cluster order, without repeats.
pub fn select_seeds(
    clusters: &[TopicCluster],
    terms_per_cluster: usize,
    stoplist: &Stoplist,
) -> Vec<Concept> {
    let mut seen = HashSet::new();
    let mut seeds = Vec::new();
    for c in clusters {
        let picked = c
            .top_terms
            .iter()
            .filter(|(t, _)| !stoplist.rejects(t))
            .filter_map(|(t, _)| canonicalize_concept(t).ok())
            .take(terms_per_cluster);
        for concept in picked {
            if seen.insert(concept.canonical.clone()) {
                seeds.push(concept);
            }
        }
    }
    seeds
}

pub fn generate_seed_concepts(
    corpus: &Corpus,
    embedder: &dyn Embedder,
    params: &SeedParams,
) -> Result<Vec<Concept>> {
    if params.terms_per_cluster == 0 {
        return Err(Error::InvalidInput(
            "terms_per_cluster must be at least 1".into(),
        ));
    }
    let clusters = cluster_corpus(corpus, embedder, params.k, params.seed)?;
    let weighted = class_tfidf(&clusters, corpus)?;
    Ok(select_seeds(
        &weighted,
        params.terms_per_cluster,
        &params.stoplist,
    ))
}

/// One canonical concept per line, in the given order.
pub fn write_seeds(path: &Path, seeds: &[Concept]) -> Result<()> {
    let mut out = String::new();
    for s in seeds {
        out.push_str(&s.canonical);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_seeds(path: &Path) -> Result<Vec<Concept>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut seeds = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let c =
            canonicalize_concept(line).map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        if seen.insert(c.canonical.clone()) {
            seeds.push(c);
        }
    }
    Ok(seeds)
}
