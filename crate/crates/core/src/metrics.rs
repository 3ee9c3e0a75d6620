//! Scoring: binary accuracy/F1, embedding similarity score, hit rate,
//! Cohen's kappa and rating aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::kgraph::canonical_key;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub n: usize,
    #[serde(default)]
    pub unparseable: usize,
    #[serde(default)]
    pub skipped: usize,
}

impl MetricReport {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            ..Self::default()
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        debug_assert!(value.is_finite(), "{name} = {value}");
        self.metrics.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryScores {
    pub accuracy: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// Accuracy and F1 with `true` as the positive class; F1 is 0 when
/// `2TP + FP + FN` is 0.
pub fn binary_accuracy_f1(labels: &[bool], preds: &[bool]) -> Result<BinaryScores> {
    if labels.len() != preds.len() {
        return Err(Error::LengthMismatch(labels.len(), preds.len()));
    }
    if labels.is_empty() {
        return Err(Error::InvalidInput(
            "cannot score an empty prediction set".into(),
        ));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&l, &p) in labels.iter().zip(preds) {
        match (l, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(BinaryScores {
        accuracy: (tp + tn) as f64 / labels.len() as f64,
        f1: if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        },
        tp,
        fp,
        fn_,
        tn,
    })
}

/// Mean cosine over every (pred, gold) pair. The pairwise values are summed in
/// sorted order so the result is identical when the two lists are swapped.
pub fn similarity_from_embeddings(pred: &[Embedding], gold: &[Embedding]) -> Result<f64> {
    if pred.is_empty() || gold.is_empty() {
        return Err(Error::InvalidInput(
            "similarity score needs non-empty lists".into(),
        ));
    }
    let mut sims = Vec::with_capacity(pred.len() * gold.len());
    for m in pred {
        for n in gold {
            sims.push(cosine(m, n)?);
        }
    }
    sims.sort_by(f64::total_cmp);
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

pub fn similarity_score<S: AsRef<str>>(
    pred: &[S],
    gold: &[S],
    embedder: &dyn Embedder,
) -> Result<f64> {
    if pred.is_empty() || gold.is_empty() {
        return Err(Error::InvalidInput(
            "similarity score needs non-empty lists".into(),
        ));
    }
    let p: Vec<&str> = pred.iter().map(AsRef::as_ref).collect();
    let g: Vec<&str> = gold.iter().map(AsRef::as_ref).collect();
    similarity_from_embeddings(&embedder.embed_batch(&p)?, &embedder.embed_batch(&g)?)
}

/// Fraction of gold concepts whose canonical form appears among the
/// canonical forms of `pred`.
pub fn hit_rate<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidInput(
            "hit rate needs a non-empty gold list".into(),
        ));
    }
    let predicted: BTreeSet<String> = pred
        .iter()
        .filter_map(|p| canonical_key(p.as_ref()))
        .collect();
    let hits = gold
        .iter()
        .filter(|g| canonical_key(g.as_ref()).is_some_and(|c| predicted.contains(&c)))
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Hit rate where a gold concept also counts as hit when some prediction's
/// embedding reaches cosine `tau` with it.
pub fn hit_rate_semantic<S: AsRef<str>>(
    pred: &[S],
    gold: &[S],
    embedder: &dyn Embedder,
    tau: f64,
) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::InvalidInput(
            "hit rate needs a non-empty gold list".into(),
        ));
    }
    let predicted: BTreeSet<String> = pred
        .iter()
        .filter_map(|p| canonical_key(p.as_ref()))
        .collect();
    let pred_texts: Vec<&str> = predicted.iter().map(String::as_str).collect();
    let pred_emb = if pred_texts.is_empty() {
        Vec::new()
    } else {
        embedder.embed_batch(&pred_texts)?
    };
    let mut hits = 0;
    for g in gold {
        let Some(key) = canonical_key(g.as_ref()) else {
            continue;
        };
        if predicted.contains(&key) {
            hits += 1;
            continue;
        }
        let ge = embedder.embed(&key)?;
        let mut matched = false;
        for pe in &pred_emb {
            if cosine(pe, &ge)? >= tau {
                matched = true;
                break;
            }
        }
        if matched {
            hits += 1;
        }
    }
    Ok(hits as f64 / gold.len() as f64)
}

/// Unweighted Cohen's kappa. Two raters using one identical constant
/// category score 1.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput(
            "kappa needs at least one rated item".into(),
        ));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let mut marg_a: BTreeMap<&T, f64> = BTreeMap::new();
    let mut marg_b: BTreeMap<&T, f64> = BTreeMap::new();
    for x in a {
        *marg_a.entry(x).or_default() += 1.0;
    }
    for y in b {
        *marg_b.entry(y).or_default() += 1.0;
    }
    let expected: f64 = marg_a
        .iter()
        .map(|(cat, ca)| ca / n * marg_b.get(cat).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub item_id: String,
    pub rater_id: String,
    pub concept_rating: u8,
    pub relation_rating: u8,
}

impl RatingRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("concept_rating", self.concept_rating),
            ("relation_rating", self.relation_rating),
        ] {
            if !(1..=3).contains(&v) {
                return Err(format!("{name} {v} outside 1..=3"));
            }
        }
        Ok(())
    }
}

/// Reads `item_id,rater_id,concept_rating,relation_rating` rows; a header row
/// starting with `item_id` is skipped.
pub fn load_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::malformed(path, line, e.to_string()))?;
        if line == 1 && rec.get(0) == Some("item_id") {
            continue;
        }
        if rec.len() != 4 {
            return Err(Error::malformed(
                path,
                line,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let rating = |i: usize| {
            rec[i]
                .parse::<u8>()
                .map_err(|e| Error::malformed(path, line, format!("field {}: {e}", i + 1)))
        };
        let r = RatingRecord {
            item_id: rec[0].to_string(),
            rater_id: rec[1].to_string(),
            concept_rating: rating(2)?,
            relation_rating: rating(3)?,
        };
        r.validate().map_err(|e| Error::malformed(path, line, e))?;
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionSummary {
    pub n: usize,
    pub concept: MeanStd,
    pub relation: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatingSummary {
    pub pooled: DimensionSummary,
    pub per_rater: BTreeMap<String, DimensionSummary>,
}

fn summarize(records: &[&RatingRecord]) -> DimensionSummary {
    let concept: Vec<f64> = records.iter().map(|r| r.concept_rating as f64).collect();
    let relation: Vec<f64> = records.iter().map(|r| r.relation_rating as f64).collect();
    DimensionSummary {
        n: records.len(),
        concept: mean_std(&concept),
        relation: mean_std(&relation),
    }
}

pub fn rating_summary(records: &[RatingRecord]) -> Result<RatingSummary> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no rating records".into()));
    }
    let all: Vec<&RatingRecord> = records.iter().collect();
    let mut by_rater: BTreeMap<&str, Vec<&RatingRecord>> = BTreeMap::new();
    for r in records {
        by_rater.entry(&r.rater_id).or_default().push(r);
    }
    Ok(RatingSummary {
        pooled: summarize(&all),
        per_rater: by_rater
            .into_iter()
            .map(|(k, v)| (k.to_string(), summarize(&v)))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Agreement {
    pub rater_a: String,
    pub rater_b: String,
    pub items: usize,
    pub concept_kappa: f64,
    pub relation_kappa: f64,
}

/// Kappa between the two lexicographically first raters over the items both rated.
pub fn rating_agreement(records: &[RatingRecord]) -> Result<Option<Agreement>> {
    let raters: BTreeSet<&str> = records.iter().map(|r| r.rater_id.as_str()).collect();
    let mut it = raters.into_iter();
    let (Some(a), Some(b)) = (it.next(), it.next()) else {
        return Ok(None);
    };
    let index = |rater: &str| -> BTreeMap<&str, &RatingRecord> {
        records
            .iter()
            .filter(|r| r.rater_id == rater)
            .map(|r| (r.item_id.as_str(), r))
            .collect()
    };
    let (ra, rb) = (index(a), index(b));
    let shared: Vec<(&RatingRecord, &RatingRecord)> = ra
        .iter()
        .filter_map(|(item, x)| rb.get(item).map(|y| (*x, *y)))
        .collect();
    if shared.is_empty() {
        return Ok(None);
    }
    let ca: Vec<u8> = shared.iter().map(|(x, _)| x.concept_rating).collect();
    let cb: Vec<u8> = shared.iter().map(|(_, y)| y.concept_rating).collect();
    let la: Vec<u8> = shared.iter().map(|(x, _)| x.relation_rating).collect();
    let lb: Vec<u8> = shared.iter().map(|(_, y)| y.relation_rating).collect();
    Ok(Some(Agreement {
        rater_a: a.to_string(),
        rater_b: b.to_string(),
        items: shared.len(),
        concept_kappa: cohen_kappa(&ca, &cb)?,
        relation_kappa: cohen_kappa(&la, &lb)?,
    }))
}
