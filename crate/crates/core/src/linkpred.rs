//! Pairwise prerequisite link prediction with optional additional context.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::RetrievalIndex;
use crate::error::{Error, Result};
use crate::kgraph::{canonicalize_concept, Concept, Direction, KnowledgeGraph, RelationType};
use crate::llm::{parse_yes_no, render_body, DecisionMode, LlmBackend, LlmRequest, TemplateId};
use crate::metrics::{binary_accuracy_f1, MetricReport};

pub const DEFAULT_DOMAIN: &str = "natural language processing";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkPredItem {
    pub concept_a: Concept,
    pub concept_b: Concept,
    pub label: bool,
}

impl LinkPredItem {
    pub fn new(a: &str, b: &str, label: bool) -> Result<Self> {
        let concept_a = canonicalize_concept(a)?;
        let concept_b = canonicalize_concept(b)?;
        if concept_a.canonical == concept_b.canonical {
            return Err(Error::SelfLoop(concept_a.canonical));
        }
        Ok(Self {
            concept_a,
            concept_b,
            label,
        })
    }
}

/// Reads `concept_a<TAB>concept_b<TAB>0|1` rows. Blank lines and `#` comments
/// are ignored.
pub fn load_pairs(path: &Path) -> Result<Vec<LinkPredItem>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [a, b, label] = fields.as_slice() else {
            return Err(Error::malformed(
                path,
                i + 1,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        };
        let label = match label.trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::malformed(
                    path,
                    i + 1,
                    format!("label {other:?} is not 0 or 1"),
                ))
            }
        };
        items.push(
            LinkPredItem::new(a, b, label)
                .map_err(|e| Error::malformed(path, i + 1, e.to_string()))?,
        );
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpVariant {
    None,
    Doc,
    Con,
    Wiki,
}

impl LpVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            LpVariant::None => "none",
            LpVariant::Doc => "doc",
            LpVariant::Con => "con",
            LpVariant::Wiki => "wiki",
        }
    }

    fn template(self) -> TemplateId {
        match self {
            LpVariant::None => TemplateId::Lp,
            LpVariant::Doc => TemplateId::LpDoc,
            LpVariant::Con => TemplateId::LpCon,
            LpVariant::Wiki => TemplateId::LpWiki,
        }
    }
}

impl fmt::Display for LpVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LpVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(LpVariant::None),
            "doc" => Ok(LpVariant::Doc),
            "con" => Ok(LpVariant::Con),
            "wiki" => Ok(LpVariant::Wiki),
            _ => Err(Error::InvalidInput(format!(
                "unknown link prediction variant {s:?}"
            ))),
        }
    }
}

/// Resources for the context variants; only the one the variant needs must be set.
#[derive(Default, Clone, Copy)]
pub struct LpResources<'a> {
    pub index: Option<&'a RetrievalIndex>,
    /// Chunks retrieved per concept for the document variant.
    pub k_doc: usize,
    pub training_kg: Option<&'a KnowledgeGraph>,
    pub wiki: Option<&'a BTreeMap<String, String>>,
}

/// Reads `{"concept": ..., "text": ...}` lines keyed by canonical concept.
pub fn load_wiki(path: &Path) -> Result<BTreeMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        concept: String,
        text: String,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Row =
            serde_json::from_str(line).map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        let c = canonicalize_concept(&row.concept)
            .map_err(|e| Error::malformed(path, i + 1, e.to_string()))?;
        out.insert(c.canonical, row.text);
    }
    Ok(out)
}

fn missing(what: &str) -> Error {
    Error::MissingResource(what.to_string())
}

fn prerequisite_lists(kg: &KnowledgeGraph, c: &Concept) -> Result<(String, String)> {
    let only: BTreeSet<RelationType> = [RelationType::IsAPrerequisiteOf].into_iter().collect();
    let render = |dir: Direction| -> Result<String> {
        let names: Vec<String> = kg
            .neighbors(&c.canonical, dir, Some(&only), 1)?
            .iter()
            .map(|n| kg.display_of(n).unwrap_or(n.as_str()).to_string())
            .collect();
        Ok(names.join(", "))
    };
    Ok((render(Direction::Out)?, render(Direction::In)?))
}

/// The additional-information text for one item.
pub fn build_lp_context(
    item: &LinkPredItem,
    variant: LpVariant,
    res: &LpResources<'_>,
) -> Result<String> {
    let (a, b) = (&item.concept_a, &item.concept_b);
    match variant {
        LpVariant::None => Ok(String::new()),
        LpVariant::Doc => {
            let index = res
                .index
                .ok_or_else(|| missing("retrieval index for the doc variant"))?;
            let k = res.k_doc.max(1);
            let mut seen = Vec::new();
            let mut texts = Vec::new();
            for c in [a, b] {
                for hit in index.retrieve(&c.display, k)? {
                    let id = hit.chunk.id();
                    if !seen.contains(&id) {
                        seen.push(id);
                        texts.push(hit.chunk.text.clone());
                    }
                }
            }
            Ok(texts.join("\n\n"))
        }
        LpVariant::Con => {
            let kg = res
                .training_kg
                .ok_or_else(|| missing("training graph for the con variant"))?;
            let mut out = String::new();
            for c in [a, b] {
                let (succ, pred) = prerequisite_lists(kg, c)?;
                out.push_str(&format!(
                    "\nWe know that {0} is a prerequisite of the following concepts: \n{succ};\n\nThe following concepts are the prerequisites of {0}:\n{pred}. \n",
                    c.display
                ));
            }
            Ok(out)
        }
        LpVariant::Wiki => {
            let wiki = res
                .wiki
                .ok_or_else(|| missing("wiki paragraphs for the wiki variant"))?;
            let para = |c: &Concept| {
                wiki.get(&c.canonical)
                    .cloned()
                    .ok_or_else(|| missing(&format!("wiki paragraph for {:?}", c.canonical)))
            };
            Ok(format!("{}\n{}", para(a)?, para(b)?))
        }
    }
}

/// Renders the request for one item; chain-of-thought mode appends the
/// additional information after the reasoning instructions when present.
pub fn lp_request(
    item: &LinkPredItem,
    variant: LpVariant,
    mode: DecisionMode,
    info: &str,
    domain: &str,
) -> Result<LlmRequest> {
    let bindings = BTreeMap::from([
        ("domain", domain.to_string()),
        ("concept_1", item.concept_a.display.clone()),
        ("concept_2", item.concept_b.display.clone()),
        ("Additional Information", info.to_string()),
    ]);
    let (template, text) = match mode {
        DecisionMode::Plain => {
            let t = variant.template();
            (t, render_body(t.body(), &bindings)?)
        }
        DecisionMode::Cot => {
            let body = if info.is_empty() {
                TemplateId::LpCot.body().to_string()
            } else {
                format!(
                    "{}\n\nAnd here are related contents to help: \n{{Additional Information}}",
                    TemplateId::LpCot.body()
                )
            };
            (TemplateId::LpCot, render_body(&body, &bindings)?)
        }
    };
    Ok(LlmRequest::new(template.as_str(), text))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LinkPrediction {
    pub predicted: bool,
    /// False when the response had no decision; such items score negative.
    pub parsed: bool,
}

pub fn predict_link(
    backend: &dyn LlmBackend,
    item: &LinkPredItem,
    variant: LpVariant,
    mode: DecisionMode,
    res: &LpResources<'_>,
    domain: &str,
) -> Result<LinkPrediction> {
    let info = build_lp_context(item, variant, res)?;
    let response = backend.complete(&lp_request(item, variant, mode, &info, domain)?)?;
    Ok(match parse_yes_no(&response.text, mode) {
        Ok(predicted) => LinkPrediction {
            predicted,
            parsed: true,
        },
        Err(_) => {
            log::debug!(
                "unparseable answer for ({}, {}): {:?}",
                item.concept_a.canonical,
                item.concept_b.canonical,
                response.text
            );
            LinkPrediction {
                predicted: false,
                parsed: false,
            }
        }
    })
}

pub fn evaluate_linkpred(items: &[LinkPredItem], predictions: &[bool]) -> Result<MetricReport> {
    let labels: Vec<bool> = items.iter().map(|i| i.label).collect();
    let s = binary_accuracy_f1(&labels, predictions)?;
    Ok(MetricReport::new(items.len())
        .with("accuracy", s.accuracy)
        .with("f1", s.f1))
}

#[derive(Clone)]
pub struct LinkPredRun<'a> {
    pub variant: LpVariant,
    pub mode: DecisionMode,
    pub domain: &'a str,
    pub resources: LpResources<'a>,
    pub parallelism: usize,
}

/// Predicts every item on `parallelism` workers, keeping item order.
pub fn run_linkpred(
    items: &[LinkPredItem],
    backend: &dyn LlmBackend,
    run: &LinkPredRun<'_>,
) -> Result<(MetricReport, Vec<LinkPrediction>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(run.parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let predictions: Vec<LinkPrediction> = pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                predict_link(
                    backend,
                    item,
                    run.variant,
                    run.mode,
                    &run.resources,
                    run.domain,
                )
            })
            .collect::<Result<_>>()
    })?;
    let preds: Vec<bool> = predictions.iter().map(|p| p.predicted).collect();
    let mut report = evaluate_linkpred(items, &preds)?;
    report.unparseable = predictions.iter().filter(|p| !p.parsed).count();
    Ok((report, predictions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ChunkParams, Corpus, Document};
    use crate::kgraph::Triplet;
    use crate::llm::{MissPolicy, ScriptedBackend};

    fn item(a: &str, b: &str, label: bool) -> LinkPredItem {
        LinkPredItem::new(a, b, label).unwrap()
    }

    #[test]
    fn variant_none_is_empty() {
        let ctx = build_lp_context(
            &item("a", "b", true),
            LpVariant::None,
            &LpResources::default(),
        )
        .unwrap();
        assert_eq!(ctx, "");
    }

    #[test]
    fn con_lists_neighbors() {
        let mut kg = KnowledgeGraph::new();
        kg.insert(Triplet::from_surface("x", RelationType::IsAPrerequisiteOf, "a").unwrap())
            .unwrap();
        kg.insert(Triplet::from_surface("a", RelationType::UsedFor, "z").unwrap())
            .unwrap();
        let res = LpResources {
            training_kg: Some(&kg),
            ..LpResources::default()
        };
        let ctx = build_lp_context(&item("a", "b", true), LpVariant::Con, &res).unwrap();
        assert!(ctx.contains("We know that a is a prerequisite of the following concepts: \n;"));
        assert!(ctx.contains("The following concepts are the prerequisites of a:\nx. "));
        assert!(ctx.contains("The following concepts are the prerequisites of b:\n. "));
        assert!(!ctx.contains('z'));
        assert!(build_lp_context(
            &item("a", "b", true),
            LpVariant::Con,
            &LpResources::default()
        )
        .is_err());
    }

    #[test]
    fn wiki_missing_entry_names_concept() {
        let wiki = BTreeMap::from([(
            "viterbi algorithm".to_string(),
            "Dynamic programming.".to_string(),
        )]);
        let res = LpResources {
            wiki: Some(&wiki),
            ..LpResources::default()
        };
        let err = build_lp_context(
            &item("Viterbi Algorithm", "POS Tagging", true),
            LpVariant::Wiki,
            &res,
        )
        .unwrap_err();
        assert!(err.to_string().contains("pos tagging"), "{err}");
    }

    #[test]
    fn doc_context_dedups_chunks() {
        let corpus = Corpus::new(vec![Document {
            id: "d".into(),
            title: String::new(),
            text: "viterbi decoding for pos tagging".into(),
            source_uri: None,
        }])
        .unwrap();
        let index = RetrievalIndex::build(&corpus, ChunkParams::default()).unwrap();
        let res = LpResources {
            index: Some(&index),
            k_doc: 3,
            ..LpResources::default()
        };
        let ctx =
            build_lp_context(&item("viterbi", "pos tagging", true), LpVariant::Doc, &res).unwrap();
        assert_eq!(ctx, "viterbi decoding for pos tagging");
    }

    #[test]
    fn prompts_are_directional() {
        let ab = lp_request(
            &item("A1", "B1", true),
            LpVariant::None,
            DecisionMode::Plain,
            "",
            DEFAULT_DOMAIN,
        )
        .unwrap();
        let ba = lp_request(
            &item("B1", "A1", true),
            LpVariant::None,
            DecisionMode::Plain,
            "",
            DEFAULT_DOMAIN,
        )
        .unwrap();
        assert_ne!(ab.text, ba.text);
        assert!(ab
            .text
            .contains("Do you think learning A1 will help in understanding B1?"));
        assert_eq!(ab.template_id, "lp");
        assert_eq!(ab.temperature, 0.0);
    }

    #[test]
    fn cot_appends_information_only_when_present() {
        let it = item("a", "b", true);
        let bare = lp_request(&it, LpVariant::None, DecisionMode::Cot, "", DEFAULT_DOMAIN).unwrap();
        assert!(bare.text.ends_with("if it is not."));
        let with = lp_request(
            &it,
            LpVariant::Wiki,
            DecisionMode::Cot,
            "A para",
            DEFAULT_DOMAIN,
        )
        .unwrap();
        assert!(with
            .text
            .ends_with("And here are related contents to help: \nA para"));
        assert_eq!(with.template_id, "lp_cot");
    }

    #[test]
    fn predictions_and_unparseable() {
        let b = ScriptedBackend::from_pairs(
            &[
                ("A: Viterbi Algorithm and B: POS Tagging", "YES"),
                (
                    "A: POS Tagging and B: Viterbi Algorithm",
                    "<result>NO</result>",
                ),
                ("A: x and B: y", "maybe"),
            ],
            MissPolicy::Error,
        );
        let res = LpResources::default();
        let run = |a: &str, c: &str, mode| {
            predict_link(
                &b,
                &item(a, c, true),
                LpVariant::None,
                mode,
                &res,
                DEFAULT_DOMAIN,
            )
            .unwrap()
        };
        assert_eq!(
            run("Viterbi Algorithm", "POS Tagging", DecisionMode::Plain),
            LinkPrediction {
                predicted: true,
                parsed: true
            }
        );
        assert_eq!(
            run("POS Tagging", "Viterbi Algorithm", DecisionMode::Cot),
            LinkPrediction {
                predicted: false,
                parsed: true
            }
        );
        assert_eq!(
            run("x", "y", DecisionMode::Plain),
            LinkPrediction {
                predicted: false,
                parsed: false
            }
        );
    }

    #[test]
    fn evaluation_examples() {
        let items: Vec<_> = [true, false, true, false]
            .iter()
            .map(|&l| item("a", "b", l))
            .collect();
        let r = evaluate_linkpred(&items, &[true, false, true, false]).unwrap();
        assert_eq!((r.get("accuracy"), r.get("f1")), (Some(1.0), Some(1.0)));
        let pos: Vec<_> = (0..3).map(|_| item("a", "b", true)).collect();
        let r = evaluate_linkpred(&pos, &[false; 3]).unwrap();
        assert_eq!((r.get("accuracy"), r.get("f1")), (Some(0.0), Some(0.0)));
        assert!(matches!(
            evaluate_linkpred(&pos, &[true]),
            Err(Error::LengthMismatch(3, 1))
        ));
    }

    #[test]
    fn pairs_tsv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.tsv");
        fs::write(&path, "# a\tb\tlabel\nBERT\ttransformer\t1\nx\ty\t0\n").unwrap();
        let items = load_pairs(&path).unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(items[0].concept_a.display, "BERT");
        fs::write(&path, "x\tx\t1\n").unwrap();
        assert!(matches!(
            load_pairs(&path),
            Err(Error::Malformed { line: 1, .. })
        ));
        fs::write(&path, "x\ty\tyes\n").unwrap();
        assert!(load_pairs(&path).is_err());
    }
}
