//! Versioned prompt and template catalog with `{{placeholder}}` substitution.
//!
//! The files under `prompts/v1/` are the single source of truth. They are
//! compiled in, so a binary always carries the catalog it was tested against.

use std::collections::BTreeMap;

pub const CATALOG_VERSION: &str = "v1";

pub const GENERATION: &str = include_str!("../prompts/v1/generation.txt");
pub const REFINE_SINGLE_EXAMPLE: &str = include_str!("../prompts/v1/refine_single_example.txt");
pub const REFINE_WITH_EXAMPLES: &str = include_str!("../prompts/v1/refine_with_examples.txt");
pub const REFINE_NO_SPECIFIC_EXAMPLE: &str =
    include_str!("../prompts/v1/refine_no_specific_example.txt");
pub const REFINE_FETCH: &str = include_str!("../prompts/v1/refine_fetch.txt");
pub const EXAMPLEGEN: &str = include_str!("../prompts/v1/examplegen.txt");
pub const RANK_EXAMPLES: &str = include_str!("../prompts/v1/rank_examples.txt");

pub const STEP_BLOCK: &str = include_str!("../prompts/v1/assembly/step_block.txt");
pub const DEFINITION_BLOCK: &str = include_str!("../prompts/v1/assembly/definition_block.txt");
pub const POSITIVE_EXAMPLE_BLOCK: &str =
    include_str!("../prompts/v1/assembly/positive_example_block.txt");
pub const COMPLETION_BLOCK: &str = include_str!("../prompts/v1/assembly/completion_block.txt");
pub const BLOCK_SEPARATOR: &str = include_str!("../prompts/v1/assembly/block_separator.txt");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template placeholder {{{{{0}}}}} has no value")]
    MissingValue(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

/// Substitute `{{name}}` placeholders in one left-to-right pass.
///
/// Substituted values are copied verbatim and never re-scanned, so braces
/// inside values survive untouched. Every placeholder must have a value.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let lookup: BTreeMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    let mut offset = 0;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or(TemplateError::Unterminated(offset + start))?;
        let name = &after[..end];
        let value = lookup
            .get(name)
            .ok_or_else(|| TemplateError::MissingValue(name.to_string()))?;
        out.push_str(value);
        let consumed = start + 2 + end + 2;
        offset += consumed;
        rest = &rest[consumed..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder names in order of first appearance.
pub fn placeholders(template: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let Some(end) = after.find("}}") else { break };
        let name = after[..end].to_string();
        if !names.contains(&name) {
            names.push(name);
        }
        rest = &after[end + 2..];
    }
    names
}
