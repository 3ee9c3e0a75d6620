//! Parsers for the YES/NO decision grammar and the parenthesized triplet list.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::kgraph::{KnowledgeGraph, RelationType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionMode {
    /// First standalone YES/NO token decides.
    Plain,
    /// Content of the first `<result>…</result>` tag decides.
    Cot,
}

static RESULT_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)<result>(.*?)</result>").unwrap());
static GROUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(([^()]*)\)").unwrap());

fn first_decision_token(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|tok| {
        match tok.to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        }
    })
}

pub fn parse_yes_no(text: &str, mode: DecisionMode) -> Result<bool> {
    let decided = match mode {
        DecisionMode::Plain => first_decision_token(text),
        DecisionMode::Cot => RESULT_TAG
            .captures(text)
            .and_then(|c| first_decision_token(c.get(1).unwrap().as_str())),
    };
    decided.ok_or_else(|| Error::Unparseable(text.chars().take(200).collect()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTriplet {
    pub head: String,
    pub relation: RelationType,
    pub tail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTriplets {
    pub triplets: Vec<RawTriplet>,
    /// Parenthesized groups that did not have 3 fields or named an unknown relation.
    pub malformed: usize,
}

/// Extracts every innermost `( … )` group and splits it on commas into
/// head, relation and tail. Surrounding prose is ignored; a bare `None`
/// answer is the empty list.
pub fn parse_triplet_list(text: &str) -> ParsedTriplets {
    let mut out = ParsedTriplets::default();
    let trimmed = text.trim().trim_end_matches('.').trim();
    if trimmed.eq_ignore_ascii_case("none") {
        return out;
    }
    for cap in GROUP.captures_iter(text) {
        let fields: Vec<&str> = cap[1].split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [h, r, t] if !h.is_empty() && !t.is_empty() => {
                RelationType::parse(r).map(|relation| RawTriplet {
                    head: h.to_string(),
                    relation,
                    tail: t.to_string(),
                })
            }
            _ => None,
        };
        match parsed {
            Some(t) => out.triplets.push(t),
            None => out.malformed += 1,
        }
    }
    out
}

/// Inverse of [`parse_triplet_list`] for comma- and parenthesis-free fields.
pub fn format_triplets(triplets: &[RawTriplet]) -> String {
    if triplets.is_empty() {
        return "None".into();
    }
    triplets
        .iter()
        .map(|t| format!("({}, {}, {})", t.head, t.relation, t.tail))
        .collect()
}

/// Graph as prompt text: sorted `(head, relation, tail)` groups using display
/// forms, or `None` for an empty graph.
pub fn serialize_graph(kg: &KnowledgeGraph) -> String {
    let raw: Vec<RawTriplet> = kg
        .triplets()
        .map(|t| RawTriplet {
            head: t.head.display,
            relation: t.relation,
            tail: t.tail.display,
        })
        .collect();
    format_triplets(&raw)
}
