//! Prompt bodies and slot rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const RELATION_DEFINITION: &str = r####"We define 7 types of the relations:

   a) Compare: Represents a relation between two or more entities where a comparison is being made. For example, "A is larger than B" or "X is more efficient than Y."

   b) Part-of: Denotes a relation where one entity is a constituent or component of another. For instance, "Wheel is a part of a Car."

   c) Conjunction: Indicates a logical or semantic relation where two or more entities are connected to form a group or composite idea. For example, "Salt and Pepper."

   d) Evaluate-for: Represents an evaluative relation where one entity is assessed in the context of another. For example, "A tool is evaluated for its effectiveness."

   e) Is-a-Prerequisite-of: This dual-purpose relation implies that one entity is either a characteristic of another or a required precursor for another. For instance, "The ability to code is a prerequisite of software development."

   f) Used-for: Denotes a functional relation where one entity is utilized in accomplishing or facilitating the other. For example, "A hammer is used for driving nails."

   g) Hyponym-Of: Establishes a hierarchical relation where one entity is a more specific version or subtype of another. For instance, "A Sedan is a hyponym of a Car.""####;

macro_rules! lp_head {
    () => {
        r####"We have two {domain} related concepts: A: {concept_1} and B: {concept_2}.

Do you think learning {concept_1} will help in understanding {concept_2}?

Hints:
1. Answer YES or NO only.
2. This is a directional relation, which means if the answer is "YES", (B, A) is false, but (A, B) is true.
3. Your answer will be used to create a knowledge graph.
"####
    };
}

const LP_HEAD: &str = lp_head!();

const LP: &str = concat!(lp_head!(), "\n{Additional Information}");

const LP_WITH_CONTENT: &str = concat!(
    lp_head!(),
    "\nAnd here are related contents to help: \n{Additional Information}"
);

const LP_COT: &str = r####"We have two {domain} related concepts: A: {concept_1} and B: {concept_2}.

Assess if learning {concept_1} is a prerequisite for understanding {concept_2}.

Employ the Chain of Thought to detail your reasoning before giving a final answer.

# Identify the Domain and Concepts: Clearly define A and B within their domain. Understand the specific content and scope of each concept.

# Analyze the Directional Relationship: Determine if knowledge of concept A is essential before one can fully grasp concept B. This involves considering if A provides foundational knowledge or skills required for understanding B.

# Evaluate Dependency: Assess whether B is dependent on A in such a way that without understanding A, one cannot understand B.

# Draw a Conclusion: Based on your analysis, decide if understanding A is a necessary prerequisite for understanding B.

# Provide a Clear Answer: After detailed reasoning, conclude with a distinct answer: <result>YES</result> if understanding A is a prerequisite for understanding B, or <result>NO</result> if it is not."####;

const EXTRACTION: &str = r####"### Instruction:
You are a domain expert in natural language processing, and now you are building a knowledge graph in this domain.

Given a context (### Content), and a query concept (### Concept), do the following:

1. Extract the query concept and in-domain concepts from the context, which should be fine-grained: could be introduced by a lecture slide page, or a whole lecture, or possibly to have a Wikipedia page.

2. Determine the relations between the query concept and the extracted concepts, in a triplet format: (<head concept>, <relation>, <tail concept>). The relation should be functional, aiding learners in understanding the knowledge. The query concept can be the head concept or tail concept.

   {Relation Definition}

3. Please note some relations are strictly directional. For example, "A tool is evaluated for B" indicates (A, Evaluate-for, B), NOT (B, Evaluate-for, A). Among the seven relation types, only "a) Compare" and "c) Conjunction" are not direction-sensitive.

4. You can also extract triplets from the extracted concepts, and the query concept may not be necessary in the triplets.

5. Your answer should ONLY contain a list of triplets, each triplet is in this format: (concept, relation, concept). For example: "(concept, relation, concept)(concept, relation, concept)." No numbering and other explanations are needed.

6. If ### Content is empty, output None.

### Content:
{context}

### Concept:
{query}"####;

const FUSION: &str = r####"### Instruction: You are a knowledge graph builder.
    Now please fuse two sub-knowledge graphs about the concept "{concept}".

Graph 1: {LLM-KG}   Graph 2: {E-G}

Rules for Fusing the Graphs:
1. Union the concepts and edges.

2. If two concepts are similar, or refer to the same concept, merge them into one concept, keeping he one that is meaningful or specific. For example, "lstm" versus "long short-term memory",  please keep "long short-term memory".

3. Only one relation is allowed between two concepts. If there is a conflict, read the "### Background" to help you keep the correct relation. knowledge to keep the correct one. For example, (ROUGE, Evaluate-for, question answering model) and (ROUGE,Used-for , question answering model) are considered to be conflicts.

4. Once step 3 is done, consider every possible concept pair not covered in step 2. For example, take a concept from Graph 1, and match it from Graph 2. Then, please refer to "### Background" to summarize new triplets.

Hint: the relation types and their definition. You can use it to do Step 3.
{Relation Definition}

### Background:
{background}

### Output Instruction:
    Output the new merged data by listing the triplets. Your answer should ONLY contain triplets in this format: (concept, relation, concept). No other explanations or numbering are needed. Only triplets, no intermediate results."####;

const TUTOR_PLAN: &str = r####"You can query a concept graph of the {domain} domain before answering a student's question. Write the graph commands that would retrieve the evidence needed, one command per line, and nothing else.

Available commands:
NEIGHBORS(concept; direction; relations; depth) lists concepts linked to a concept. direction is in, out or both; relations is any or a list separated by |; depth is a positive integer.
  Example: NEIGHBORS(multilingual model; in; Is-a-Prerequisite-of; 1)
PATH(start concept; target concept) returns a learning path between two concepts.
  Example: PATH(natural language processing intro; t-sne)
RELATION(concept; concept) returns the stored relations between two concepts.
  Example: RELATION(word embedding; text classification)
SUBGRAPH(concept) returns every triplet that mentions a concept.
  Example: SUBGRAPH(topic modeling)

### Question:
{question}"####;

const TUTOR_ANSWER: &str = r####"You are a tutor for the {domain} domain. Answer the student's question using the evidence retrieved from the concept graph. The evidence may be incomplete; rely on your own knowledge where it is silent.

### Evidence:
{evidence}

### Question:
{question}

### Answer format:
{format}"####;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    Lp,
    LpCot,
    Extraction,
    Fusion,
    LpDoc,
    LpCon,
    LpWiki,
    TutorPlan,
    TutorAnswer,
}

impl TemplateId {
    pub const ALL: [TemplateId; 9] = [
        TemplateId::Lp,
        TemplateId::LpCot,
        TemplateId::Extraction,
        TemplateId::Fusion,
        TemplateId::LpDoc,
        TemplateId::LpCon,
        TemplateId::LpWiki,
        TemplateId::TutorPlan,
        TemplateId::TutorAnswer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Lp => "lp",
            TemplateId::LpCot => "lp_cot",
            TemplateId::Extraction => "extraction",
            TemplateId::Fusion => "fusion",
            TemplateId::LpDoc => "lp_doc",
            TemplateId::LpCon => "lp_con",
            TemplateId::LpWiki => "lp_wiki",
            TemplateId::TutorPlan => "tutor_plan",
            TemplateId::TutorAnswer => "tutor_answer",
        }
    }

    pub fn body(self) -> &'static str {
        match self {
            TemplateId::Lp => LP,
            TemplateId::LpCot => LP_COT,
            TemplateId::Extraction => EXTRACTION,
            TemplateId::Fusion => FUSION,
            TemplateId::LpDoc | TemplateId::LpCon | TemplateId::LpWiki => LP_WITH_CONTENT,
            TemplateId::TutorPlan => TUTOR_PLAN,
            TemplateId::TutorAnswer => TUTOR_ANSWER,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTemplate(s.to_string()))
    }
}

static SLOT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([A-Za-z0-9_][A-Za-z0-9_ \-]*)\}").unwrap());

/// Slot names of a body, in order of first appearance.
pub fn slots(body: &str) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for cap in SLOT.captures_iter(body) {
        let name = cap.get(1).unwrap().as_str();
        if !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Substitutes every `{slot}` in one pass; bound values are inserted verbatim
/// and never re-expanded. `{Relation Definition}` defaults to the 7-type
/// definitions when not bound.
pub fn render_body(body: &str, bindings: &BTreeMap<&str, String>) -> Result<String> {
    for name in slots(body) {
        if !bindings.contains_key(name) && name != "Relation Definition" {
            return Err(Error::UnboundSlot(name.to_string()));
        }
    }
    Ok(SLOT
        .replace_all(body, |cap: &regex::Captures<'_>| {
            let name = cap.get(1).unwrap().as_str();
            match bindings.get(name) {
                Some(v) => v.clone(),
                None => RELATION_DEFINITION.to_string(),
            }
        })
        .into_owned())
}

pub fn render_prompt(template: TemplateId, bindings: &BTreeMap<&str, String>) -> Result<String> {
    render_body(template.body(), bindings)
}

/// The LP prompt text up to the hints, shared by every LP variant.
pub fn lp_preamble() -> &'static str {
    LP_HEAD
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn lp_renders_question() {
        let text = render_prompt(
            TemplateId::Lp,
            &b(&[
                ("domain", "NLP"),
                ("concept_1", "viterbi algorithm"),
                ("concept_2", "pos tagging"),
                ("Additional Information", ""),
            ]),
        )
        .unwrap();
        assert!(text.contains(
            "Do you think learning viterbi algorithm will help in understanding pos tagging?"
        ));
        assert!(text.contains("1. Answer YES or NO only."));
        assert!(text.starts_with(
            "We have two NLP related concepts: A: viterbi algorithm and B: pos tagging."
        ));
    }

    #[test]
    fn variants_share_the_lp_question() {
        for t in [
            TemplateId::Lp,
            TemplateId::LpDoc,
            TemplateId::LpCon,
            TemplateId::LpWiki,
        ] {
            assert!(t.body().starts_with(lp_preamble()), "{t}");
        }
        assert!(TemplateId::LpCot.body().contains("<result>YES</result>"));
    }

    #[test]
    fn extraction_renders_with_empty_context() {
        let text = render_prompt(
            TemplateId::Extraction,
            &b(&[("context", ""), ("query", "bert")]),
        )
        .unwrap();
        assert!(text.contains("6. If ### Content is empty, output None."));
        assert!(text.contains("e) Is-a-Prerequisite-of"));
        assert!(text.ends_with("### Concept:\nbert"));
    }

    #[test]
    fn fusion_requires_background() {
        let err = render_prompt(
            TemplateId::Fusion,
            &b(&[("concept", "bert"), ("LLM-KG", "None"), ("E-G", "None")]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnboundSlot(ref s) if s == "background"));
        assert!(err.to_string().contains("background"));
    }

    #[test]
    fn slot_listing() {
        assert_eq!(
            slots(TemplateId::Fusion.body()),
            vec![
                "concept",
                "LLM-KG",
                "E-G",
                "Relation Definition",
                "background"
            ]
        );
        assert_eq!(
            slots(TemplateId::Lp.body()),
            vec!["domain", "concept_1", "concept_2", "Additional Information"]
        );
    }

    #[test]
    fn values_are_not_reexpanded() {
        let text = render_body("{a}|{b}", &b(&[("a", "{b}"), ("b", "x")])).unwrap();
        assert_eq!(text, "{b}|x");
    }

    #[test]
    fn template_ids_parse() {
        for t in TemplateId::ALL {
            assert_eq!(t.as_str().parse::<TemplateId>().unwrap(), t);
        }
        assert!(matches!(
            "nope".parse::<TemplateId>(),
            Err(Error::UnknownTemplate(_))
        ));
    }

    proptest! {
        #[test]
        fn rendering_is_injective(
            a in "[a-z]{1,10}( [a-z]{1,10})?", b2 in "[a-z]{1,10}( [a-z]{1,10})?",
            c in "[a-z]{1,10}( [a-z]{1,10})?", d in "[a-z]{1,10}( [a-z]{1,10})?",
        ) {
            let render = |x: &str, y: &str| render_prompt(TemplateId::Lp, &b(&[
                ("domain", "NLP"), ("concept_1", x), ("concept_2", y), ("Additional Information", ""),
            ])).unwrap();
            prop_assert_eq!(render(&a, &b2) == render(&c, &d), a == c && b2 == d);
        }
    }
}
