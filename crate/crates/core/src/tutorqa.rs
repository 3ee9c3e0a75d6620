//! Graph-grounded question answering: an LLM plans graph commands, the
//! commands are run against the knowledge graph, and the collected evidence
//! is handed back for the final answer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::kgraph::{
    canonical_key, canonicalize_concept, Direction, KnowledgeGraph, RelationType, Traversal,
};
use crate::llm::{complete_template, serialize_graph, LlmBackend, TemplateId};
use crate::metrics::{hit_rate, similarity_score, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Task {
    RelationJudgment,
    PrerequisitePrediction,
    PathSearching,
    SubgraphCompletion,
    SimilarConcepts,
    IdeaHamster,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::RelationJudgment,
        Task::PrerequisitePrediction,
        Task::PathSearching,
        Task::SubgraphCompletion,
        Task::SimilarConcepts,
        Task::IdeaHamster,
    ];

    pub fn number(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_number(n: u64) -> Result<Self> {
        usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| Task::ALL.get(i).copied())
            .ok_or_else(|| Error::InvalidInput(format!("task id {n} outside 1..=6")))
    }

    fn format_instruction(self) -> String {
        match self {
            Task::RelationJudgment => "Reply with True or False only.".into(),
            Task::PrerequisitePrediction => {
                "List the concepts to learn first, separated by commas, and nothing else.".into()
            }
            Task::PathSearching => {
                "List the concepts of the learning path in order, from the known concept to the target, separated by commas, and nothing else.".into()
            }
            Task::SubgraphCompletion => {
                let names: Vec<&str> = RelationType::ALL.iter().map(|r| r.as_str()).collect();
                format!("Reply with exactly one relation type from: {}.", names.join(", "))
            }
            Task::SimilarConcepts => "List the related concepts separated by commas, and nothing else.".into(),
            Task::IdeaHamster => {
                "Write a short project proposal that applies the concepts in the question, with a goal, a method and the expected outcome.".into()
            }
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.number())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['t', 'T']);
        let n = digits
            .parse::<u64>()
            .map_err(|_| Error::InvalidInput(format!("unknown task {s:?}")))?;
        Task::from_number(n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Answer {
    Bool(bool),
    Concepts(Vec<String>),
    Relation(RelationType),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TutorQaItem {
    pub task: Task,
    pub question: String,
    /// Gold answer; absent for the open-ended task.
    pub answer: Option<Answer>,
}

fn gold_answer(task: Task, value: &Value) -> std::result::Result<Option<Answer>, String> {
    let concepts = |v: &Value| -> std::result::Result<Answer, String> {
        let list = v.as_array().ok_or("expected a list of concepts")?;
        let mut out = Vec::new();
        for c in list {
            let s = c.as_str().ok_or("concepts must be strings")?;
            out.push(
                canonicalize_concept(s)
                    .map_err(|e| e.to_string())?
                    .canonical,
            );
        }
        if out.is_empty() {
            return Err("gold concept list is empty".into());
        }
        Ok(Answer::Concepts(out))
    };
    match task {
        Task::RelationJudgment => match value {
            Value::Bool(b) => Ok(Some(Answer::Bool(*b))),
            Value::String(s) => parse_bool(s)
                .map(|b| Some(Answer::Bool(b)))
                .ok_or(format!("{s:?} is not true or false")),
            _ => Err("expected a boolean".into()),
        },
        Task::PrerequisitePrediction | Task::PathSearching | Task::SimilarConcepts => {
            concepts(value).map(Some)
        }
        Task::SubgraphCompletion => {
            let s = value.as_str().ok_or("expected a relation name")?;
            RelationType::parse(s)
                .map(|r| Some(Answer::Relation(r)))
                .ok_or(format!("unknown relation {s:?}"))
        }
        Task::IdeaHamster => Ok(match value {
            Value::Null => None,
            Value::String(s) => Some(Answer::Text(s.clone())),
            _ => return Err("expected free text or null".into()),
        }),
    }
}

/// Reads `{"task": n, "question": ..., "answer": ...}` lines.
pub fn load_items(path: &Path) -> Result<Vec<TutorQaItem>> {
    #[derive(Deserialize)]
    struct Row {
        task: u64,
        question: String,
        #[serde(default)]
        answer: Value,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::malformed(path, i + 1, reason);
        let row: Row = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let task = Task::from_number(row.task).map_err(|e| bad(e.to_string()))?;
        let answer = gold_answer(task, &row.answer).map_err(bad)?;
        items.push(TutorQaItem {
            task,
            question: row.question,
            answer,
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphCommand {
    Neighbors {
        concept: String,
        direction: Direction,
        relations: Option<BTreeSet<RelationType>>,
        depth: usize,
    },
    Path {
        from: String,
        to: String,
    },
    Relation {
        a: String,
        b: String,
    },
    Subgraph {
        concept: String,
    },
}

static COMMAND: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^([A-Za-z_]+)\s*\((.*)\)\s*[.;]?$").unwrap());

fn concept_arg(s: &str) -> Option<String> {
    canonical_key(s)
}

impl GraphCommand {
    fn parse_parts(kind: &str, args: &[&str]) -> Option<Self> {
        match (kind.to_ascii_uppercase().as_str(), args) {
            ("NEIGHBORS", [c, rest @ ..]) if rest.len() <= 3 => {
                let direction = match rest.first() {
                    Some(d) => d.parse().ok()?,
                    None => Direction::Both,
                };
                let relations = match rest.get(1).map(|r| r.trim()) {
                    None | Some("") => None,
                    Some(r) if r.eq_ignore_ascii_case("any") => None,
                    Some(r) => Some(
                        r.split('|')
                            .map(RelationType::parse)
                            .collect::<Option<BTreeSet<_>>>()?,
                    ),
                };
                let depth = match rest.get(2) {
                    Some(d) => d.trim().parse().ok().filter(|&d: &usize| d >= 1)?,
                    None => 1,
                };
                Some(GraphCommand::Neighbors {
                    concept: concept_arg(c)?,
                    direction,
                    relations,
                    depth,
                })
            }
            ("PATH", [a, b]) => Some(GraphCommand::Path {
                from: concept_arg(a)?,
                to: concept_arg(b)?,
            }),
            ("RELATION", [a, b]) => Some(GraphCommand::Relation {
                a: concept_arg(a)?,
                b: concept_arg(b)?,
            }),
            ("SUBGRAPH", [c]) => Some(GraphCommand::Subgraph {
                concept: concept_arg(c)?,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    pub commands: Vec<GraphCommand>,
    /// Command-shaped lines with an unknown kind or bad arguments.
    pub skipped: usize,
}

/// Reads one `KIND(arg; arg; ...)` command per line. Lines that do not look
/// like a command are ignored; malformed commands are counted.
pub fn parse_plan(text: &str) -> Plan {
    let mut plan = Plan::default();
    for line in text.lines() {
        let line = line
            .trim()
            .trim_start_matches(['-', '*', '`'])
            .trim()
            .trim_end_matches('`');
        let Some(cap) = COMMAND.captures(line) else {
            continue;
        };
        let args: Vec<&str> = cap[2].split(';').map(str::trim).collect();
        match GraphCommand::parse_parts(&cap[1], &args) {
            Some(c) => plan.commands.push(c),
            None => plan.skipped += 1,
        }
    }
    plan
}

pub fn plan_commands(question: &str, backend: &dyn LlmBackend, domain: &str) -> Result<Plan> {
    let bindings = BTreeMap::from([
        ("domain", domain.to_string()),
        ("question", question.to_string()),
    ]);
    let response = complete_template(backend, TemplateId::TutorPlan, &bindings)?;
    Ok(parse_plan(&response.text))
}

pub const NO_RESULT: &str = "no result";

/// Rating guide for the open-ended task, written next to its answers file.
pub const TASK6_RUBRIC: &str = include_str!("../data/task6_rubric.md");

fn display<'a>(kg: &'a KnowledgeGraph, c: &'a str) -> &'a str {
    kg.display_of(c).unwrap_or(c)
}

fn run_command(kg: &KnowledgeGraph, command: &GraphCommand) -> String {
    let out = match command {
        GraphCommand::Neighbors {
            concept,
            direction,
            relations,
            depth,
        } => kg
            .neighbors(concept, *direction, relations.as_ref(), *depth)
            .ok()
            .filter(|n| !n.is_empty())
            .map(|n| {
                n.iter()
                    .map(|c| display(kg, c))
                    .collect::<Vec<_>>()
                    .join(", ")
            }),
        GraphCommand::Path { from, to } => kg
            .shortest_path_with(from, to, |r| {
                if r == RelationType::IsAPrerequisiteOf {
                    Traversal::Forward
                } else {
                    Traversal::Both
                }
            })
            .ok()
            .flatten()
            .map(|p| {
                p.iter()
                    .map(|c| display(kg, c))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            }),
        GraphCommand::Relation { a, b } => {
            let found = kg.between(a, b);
            (!found.is_empty()).then(|| {
                let mut sub = KnowledgeGraph::new();
                for t in found {
                    sub.insert(t).expect("stored triplets are valid");
                }
                serialize_graph(&sub)
            })
        }
        GraphCommand::Subgraph { concept } => {
            let sub = kg.subgraph(concept);
            (!sub.is_empty()).then(|| serialize_graph(&sub))
        }
    };
    out.unwrap_or_else(|| NO_RESULT.to_string())
}

/// One result line per command.
pub fn execute_commands(kg: &KnowledgeGraph, commands: &[GraphCommand]) -> String {
    commands
        .iter()
        .map(|c| run_command(kg, c))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_bool(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_alphanumeric()).find_map(|tok| {
        match tok.to_ascii_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        }
    })
}

fn parse_concepts(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    text.split([',', '\n'])
        .map(|s| {
            s.trim().trim_start_matches(|c: char| {
                c.is_ascii_digit() || matches!(c, '.' | ')' | '-' | '*')
            })
        })
        .filter_map(canonical_key)
        .filter(|c| seen.insert(c.clone()))
        .collect()
}

fn parse_relation(text: &str) -> Option<RelationType> {
    let trimmed = text.trim().trim_end_matches('.').trim();
    RelationType::parse(trimmed).or_else(|| {
        trimmed
            .split(|c: char| {
                c.is_whitespace() || matches!(c, ',' | '.' | ';' | ':' | '"' | '(' | ')')
            })
            .find_map(RelationType::parse)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnswerOutcome {
    /// `None` only for an unparseable relation answer.
    pub answer: Option<Answer>,
    pub parsed: bool,
    pub raw: String,
}

pub fn parse_answer(task: Task, text: &str) -> AnswerOutcome {
    let (answer, parsed) = match task {
        Task::RelationJudgment => match parse_bool(text) {
            Some(b) => (Some(Answer::Bool(b)), true),
            None => (Some(Answer::Bool(false)), false),
        },
        Task::PrerequisitePrediction | Task::PathSearching | Task::SimilarConcepts => {
            let list = parse_concepts(text);
            let ok = !list.is_empty();
            (Some(Answer::Concepts(list)), ok)
        }
        Task::SubgraphCompletion => match parse_relation(text) {
            Some(r) => (Some(Answer::Relation(r)), true),
            None => (None, false),
        },
        Task::IdeaHamster => (Some(Answer::Text(text.trim().to_string())), true),
    };
    AnswerOutcome {
        answer,
        parsed,
        raw: text.to_string(),
    }
}

pub fn generate_answer(
    question: &str,
    evidence: &str,
    backend: &dyn LlmBackend,
    task: Task,
    domain: &str,
) -> Result<AnswerOutcome> {
    let evidence = if evidence.trim().is_empty() {
        "None"
    } else {
        evidence
    };
    let bindings = BTreeMap::from([
        ("domain", domain.to_string()),
        ("evidence", evidence.to_string()),
        ("question", question.to_string()),
        ("format", task.format_instruction()),
    ]);
    let response = complete_template(backend, TemplateId::TutorAnswer, &bindings)?;
    Ok(parse_answer(task, &response.text))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemResult {
    pub question: String,
    pub commands: usize,
    pub evidence: String,
    #[serde(flatten)]
    pub outcome: AnswerOutcome,
    /// Per-item score on the 0-1 scale; absent for the open-ended task.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

pub fn answer_question(
    question: &str,
    kg: &KnowledgeGraph,
    backend: &dyn LlmBackend,
    task: Task,
    domain: &str,
) -> Result<(Plan, String, AnswerOutcome)> {
    let plan = plan_commands(question, backend, domain)?;
    let evidence = execute_commands(kg, &plan.commands);
    let outcome = generate_answer(question, &evidence, backend, task, domain)?;
    Ok((plan, evidence, outcome))
}

fn score_item(
    task: Task,
    gold: Option<&Answer>,
    predicted: Option<&Answer>,
    embedder: &dyn Embedder,
) -> Result<Option<f64>> {
    let score = match (task, gold, predicted) {
        (Task::IdeaHamster, ..) => return Ok(None),
        (_, None, _) => {
            return Err(Error::InvalidInput(format!(
                "{task} item without a gold answer"
            )))
        }
        (Task::RelationJudgment | Task::SubgraphCompletion, Some(g), p) => {
            (p == Some(g)) as u8 as f64
        }
        (_, Some(Answer::Concepts(_)), Some(Answer::Concepts(pred))) if pred.is_empty() => 0.0,
        (Task::SimilarConcepts, Some(Answer::Concepts(gold)), Some(Answer::Concepts(pred))) => {
            hit_rate(pred, gold)?
        }
        (_, Some(Answer::Concepts(gold)), Some(Answer::Concepts(pred))) => {
            similarity_score(pred, gold, embedder)?
        }
        _ => {
            return Err(Error::InvalidInput(format!(
                "answer kind does not match {task}"
            )))
        }
    };
    Ok(Some(score))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskRun {
    pub task: u8,
    pub report: MetricReport,
    pub items: Vec<ItemResult>,
}

pub fn metric_name(task: Task) -> Option<&'static str> {
    match task {
        Task::RelationJudgment | Task::SubgraphCompletion => Some("accuracy"),
        Task::PrerequisitePrediction | Task::PathSearching => Some("similarity"),
        Task::SimilarConcepts => Some("hit_rate"),
        Task::IdeaHamster => None,
    }
}

/// Answers every item and scores the task on a 0-100 scale. An empty
/// predicted concept list scores 0 for that item.
pub fn run_task(
    task: Task,
    items: &[TutorQaItem],
    kg: &KnowledgeGraph,
    backend: &dyn LlmBackend,
    embedder: &dyn Embedder,
    domain: &str,
    parallelism: usize,
) -> Result<TaskRun> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no items to run".into()));
    }
    if let Some(other) = items.iter().find(|i| i.task != task) {
        return Err(Error::InvalidInput(format!(
            "mixed task ids: expected {task}, found {}",
            other.task
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    let results: Vec<ItemResult> = pool.install(|| {
        items
            .par_iter()
            .map(|item| {
                let (plan, evidence, outcome) =
                    answer_question(&item.question, kg, backend, task, domain)?;
                let score = score_item(
                    task,
                    item.answer.as_ref(),
                    outcome.answer.as_ref(),
                    embedder,
                )?;
                Ok(ItemResult {
                    question: item.question.clone(),
                    commands: plan.commands.len(),
                    evidence,
                    outcome,
                    score,
                })
            })
            .collect::<Result<_>>()
    })?;
    let mut report = MetricReport::new(items.len());
    report.unparseable = results.iter().filter(|r| !r.outcome.parsed).count();
    if let Some(name) = metric_name(task) {
        let total: f64 = results.iter().filter_map(|r| r.score).sum();
        report = report.with(name, 100.0 * total / results.len() as f64);
    }
    Ok(TaskRun {
        task: task.number(),
        report,
        items: results,
    })
}

/// One JSON line per item: question, evidence and the generated answer.
pub fn write_answers(path: &Path, run: &TaskRun) -> Result<()> {
    let mut out = String::new();
    for item in &run.items {
        out.push_str(&serde_json::to_string(item).expect("answers serialize"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
