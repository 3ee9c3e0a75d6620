//! Document ingestion, fixed-window chunking and BM25 retrieval.
//!
//! Chunks are windows over the whitespace-split words of a document. Indexing
//! and querying share [`tokenize`], so a chunk is retrievable by any word it
//! contains once case and surrounding punctuation are stripped.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

/// An ordered collection of documents with unique, non-empty ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::InvalidInput("document id is empty".into()));
            }
            if doc.text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "document {:?} has empty text",
                    doc.id
                )));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate document id {:?}",
                    doc.id
                )));
            }
        }
        Ok(Self { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    TextDir,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "plain-text-dir" | "text-dir" | "dir" => Ok(Self::TextDir),
            other => Err(Error::InvalidInput(format!(
                "unknown corpus format {other:?}"
            ))),
        }
    }
}

/// What to do with a JSONL record that fails validation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum MalformedPolicy {
    #[default]
    Abort,
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub documents: usize,
    /// `(line, reason)` for every record skipped under [`MalformedPolicy::Skip`].
    pub skipped: Vec<(usize, String)>,
}

pub fn ingest_corpus(
    path: &Path,
    format: CorpusFormat,
    policy: MalformedPolicy,
) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let documents = match format {
        CorpusFormat::Jsonl => read_jsonl(path, policy, &mut report)?,
        CorpusFormat::TextDir => read_text_dir(path)?,
    };
    report.documents = documents.len();
    Ok((Corpus::new(documents)?, report))
}

fn read_jsonl(
    path: &Path,
    policy: MalformedPolicy,
    report: &mut IngestReport,
) -> Result<Vec<Document>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Document>(line)
            .map_err(|e| e.to_string())
            .and_then(|d| {
                if d.id.trim().is_empty() {
                    Err("empty id".to_string())
                } else if d.text.trim().is_empty() {
                    Err("empty text".to_string())
                } else {
                    Ok(d)
                }
            });
        match (parsed, policy) {
            (Ok(doc), _) => docs.push(doc),
            (Err(reason), MalformedPolicy::Abort) => {
                return Err(Error::malformed(path, line_no, reason))
            }
            (Err(reason), MalformedPolicy::Skip) => {
                log::warn!("{}:{line_no}: skipping record: {reason}", path.display());
                report.skipped.push((line_no, reason));
            }
        }
    }
    Ok(docs)
}

fn read_text_dir(path: &Path) -> Result<Vec<Document>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        let hidden = p
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'));
        if p.is_file() && !hidden {
            files.push(p);
        }
    }
    files.sort();
    let mut docs = Vec::with_capacity(files.len());
    for file in files {
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidInput(format!("non UTF-8 file name {}", file.display())))?
            .to_string();
        if text.trim().is_empty() {
            return Err(Error::malformed(&file, 1, "empty document"));
        }
        docs.push(Document {
            title: id.clone(),
            id,
            text,
            source_uri: Some(file.display().to_string()),
        });
    }
    Ok(docs)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '«' | '»' | '…' | '–' | '—')
}

/// Canonical form of a single whitespace-delimited word; empty when the word
/// is nothing but punctuation.
pub fn normalize_token(word: &str) -> String {
    word.trim_matches(is_punct).to_lowercase()
}

/// Lowercase, split on Unicode whitespace, strip surrounding punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(normalize_token)
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub max_tokens: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            max_tokens: 256,
            overlap: 64,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_tokens == 0 {
            return Err(Error::InvalidInput("max_tokens must be positive".into()));
        }
        if self.overlap >= self.max_tokens {
            return Err(Error::InvalidInput(format!(
                "overlap {} must be smaller than max_tokens {}",
                self.overlap, self.max_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: usize,
    /// Offset of the first word of the chunk within the document.
    pub start: usize,
    pub text: String,
    pub token_count: usize,
}

impl Chunk {
    /// Stable identifier used in provenance records.
    pub fn id(&self) -> String {
        format!("{}#{}", self.doc_id, self.chunk_index)
    }
}

pub fn chunk_document(doc: &Document, params: ChunkParams) -> Result<Vec<Chunk>> {
    params.validate()?;
    let words: Vec<&str> = doc.text.split_whitespace().collect();
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < words.len() {
        let end = (start + params.max_tokens).min(words.len());
        chunks.push(Chunk {
            doc_id: doc.id.clone(),
            chunk_index: chunks.len(),
            start,
            text: words[start..end].join(" "),
            token_count: end - start,
        });
        if end == words.len() {
            break;
        }
        start = end - params.overlap;
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk: u32,
    pub tf: u32,
}

/// Immutable BM25 index over every chunk of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    params: ChunkParams,
    chunks: Vec<Chunk>,
    postings: BTreeMap<String, Vec<Posting>>,
    lengths: Vec<u32>,
    avg_len: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredChunk<'a> {
    pub chunk: &'a Chunk,
    pub score: f64,
}

impl RetrievalIndex {
    pub fn build(corpus: &Corpus, params: ChunkParams) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        params.validate()?;
        let per_doc: Vec<Vec<Chunk>> = corpus
            .documents()
            .par_iter()
            .map(|d| chunk_document(d, params))
            .collect::<Result<_>>()?;
        let chunks: Vec<Chunk> = per_doc.into_iter().flatten().collect();

        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(chunks.len());
        for (idx, chunk) in chunks.iter().enumerate() {
            let tokens = tokenize(&chunk.text);
            lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push(Posting {
                    chunk: idx as u32,
                    tf: count,
                });
            }
        }
        let total: u64 = lengths.iter().map(|&l| l as u64).sum();
        let avg_len = total as f64 / chunks.len().max(1) as f64;
        Ok(Self {
            params,
            chunks,
            postings,
            lengths,
            avg_len,
        })
    }

    pub fn params(&self) -> ChunkParams {
        self.params
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// Total number of indexed chunks.
    pub fn num_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn chunk_len(&self, chunk: usize) -> Option<u32> {
        self.lengths.get(chunk).copied()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.chunks.len() as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-`k` chunks by summed per-term BM25 score. Repeated query terms
    /// count once; zero-score chunks are never returned.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<ScoredChunk<'_>>> {
        if query.trim().is_empty() {
            return Err(Error::InvalidInput("empty retrieval query".into()));
        }
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        let mut terms = tokenize(query);
        terms.sort();
        terms.dedup();

        let mut scores: BTreeMap<u32, f64> = BTreeMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(list.len());
            for p in list {
                let tf = p.tf as f64;
                let len = self.lengths[p.chunk as usize] as f64;
                let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * len / self.avg_len);
                *scores.entry(p.chunk).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + norm);
            }
        }
        let mut hits: Vec<ScoredChunk<'_>> = scores
            .into_iter()
            .filter(|(_, s)| *s > 0.0)
            .map(|(c, score)| ScoredChunk {
                chunk: &self.chunks[c as usize],
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.chunk.doc_id.cmp(&b.chunk.doc_id))
                .then_with(|| a.chunk.chunk_index.cmp(&b.chunk.chunk_index))
        });
        hits.truncate(k);
        Ok(hits)
    }
}
