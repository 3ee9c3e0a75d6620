//! Prompt templates, completion backends and output parsers.

mod backend;
mod parse;
mod templates;

pub use backend::{
    sha256_hex, AuditedBackend, LlmBackend, LlmRequest, LlmResponse, Matcher, MissPolicy,
    RemoteBackend, RemoteConfig, ScriptRule, ScriptedBackend,
};
pub use parse::{
    format_triplets, parse_triplet_list, parse_yes_no, serialize_graph, DecisionMode,
    ParsedTriplets, RawTriplet,
};
pub use templates::{
    lp_preamble, render_body, render_prompt, slots, TemplateId, RELATION_DEFINITION,
};

use std::collections::BTreeMap;

use crate::error::Result;

/// Renders `template` with `bindings` and completes it at temperature 0.
pub fn complete_template(
    backend: &dyn LlmBackend,
    template: TemplateId,
    bindings: &BTreeMap<&str, String>,
) -> Result<LlmResponse> {
    let text = render_prompt(template, bindings)?;
    backend.complete(&LlmRequest::new(template.as_str(), text))
}
