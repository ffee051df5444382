//! Model-input assembly and the step-shuffle ablation.
//!
//! Blocks come from the template catalog and are joined with the catalog's
//! block separator. Layouts:
//!
//! | position | blocks                                                    |
//! |----------|-----------------------------------------------------------|
//! | prepend  | step, definition, positive examples..., completion        |
//! | append   | definition, step, positive examples..., completion        |
//! | none     | definition, positive examples..., completion              |
//!
//! Length is measured in whitespace tokens. When the budget is exceeded the
//! assembler drops positive examples from the last one backwards, then cuts
//! the step block from its end, then the instance input, and as a last
//! resort the definition. The completion scaffold is never touched.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, TaskRecord};
use crate::jsonl;
use crate::prompts::{self, render};
use crate::rng::{derive_seed, permutation};
use crate::stepgen::{renumber_and_join, Provenance, StepInstruction};
use crate::text::{truncate_words, word_count};

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error("missing step-by-step instruction for task(s): {}", .0.join(", "))]
    MissingInstruction(Vec<String>),
    #[error("instance {instance_id} of task {task_id} has an empty input")]
    EmptyInstance { task_id: String, instance_id: String },
    #[error("max_input_tokens must be positive")]
    ZeroBudget,
    #[error("task {task_id}: the fixed scaffold alone needs {needed} tokens, budget is {budget}")]
    BudgetTooSmall {
        task_id: String,
        needed: usize,
        budget: usize,
    },
    #[error(transparent)]
    Template(#[from] prompts::TemplateError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    Prepend,
    Append,
    None,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Prepend => "prepend",
            Position::Append => "append",
            Position::None => "none",
        })
    }
}

impl std::str::FromStr for Position {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prepend" => Ok(Position::Prepend),
            "append" => Ok(Position::Append),
            "none" => Ok(Position::None),
            other => Err(format!("unknown position {other:?} (prepend, append, none)")),
        }
    }
}

fn default_budget() -> usize {
    1224
}
fn default_examples() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyConfig {
    #[serde(default = "default_budget")]
    pub max_input_tokens: usize,
    #[serde(default = "default_examples")]
    pub max_positive_examples: usize,
    pub position: Position,
    /// Shuffle the steps of every instruction before rendering.
    #[serde(default)]
    pub shuffle_seed: Option<u64>,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            max_input_tokens: default_budget(),
            max_positive_examples: default_examples(),
            position: Position::Prepend,
            shuffle_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledPrompt {
    pub task_id: String,
    pub instance_id: String,
    pub position: Position,
    pub text: String,
    pub token_count: usize,
    pub truncated: bool,
}

// Rendered pieces of one prompt, kept apart so truncation can work per block.
struct Parts<'a> {
    step: Option<&'a str>,
    definition: &'a str,
    examples: Vec<(&'a str, &'a str)>,
    input: &'a str,
}

impl Parts<'_> {
    fn blocks(&self, position: Position) -> Result<Vec<String>, AssemblyError> {
        let step = self
            .step
            .map(|s| render(prompts::STEP_BLOCK, &[("instruction_content", s)]))
            .transpose()?;
        let definition = render(prompts::DEFINITION_BLOCK, &[("task_definition", self.definition)])?;
        let mut blocks = Vec::new();
        match (position, step) {
            (Position::Prepend, Some(s)) => {
                blocks.push(s);
                blocks.push(definition);
            }
            (Position::Append, Some(s)) => {
                blocks.push(definition);
                blocks.push(s);
            }
            _ => blocks.push(definition),
        }
        for (i, (input, output)) in self.examples.iter().enumerate() {
            let n = (i + 1).to_string();
            blocks.push(render(
                prompts::POSITIVE_EXAMPLE_BLOCK,
                &[("example_number", &n), ("example_input", input), ("example_output", output)],
            )?);
        }
        blocks.push(render(prompts::COMPLETION_BLOCK, &[("instance_input", self.input)])?);
        Ok(blocks)
    }

    fn tokens(&self, position: Position) -> Result<usize, AssemblyError> {
        Ok(self.blocks(position)?.iter().map(|b| word_count(b)).sum())
    }
}

/// Build the model input for one instance.
pub fn assemble(
    task: &TaskRecord,
    instance: &Instance,
    si: Option<&StepInstruction>,
    cfg: &AssemblyConfig,
) -> Result<AssembledPrompt, AssemblyError> {
    if cfg.max_input_tokens == 0 {
        return Err(AssemblyError::ZeroBudget);
    }
    if instance.input.trim().is_empty() {
        return Err(AssemblyError::EmptyInstance {
            task_id: task.task_id.clone(),
            instance_id: instance.instance_id.clone(),
        });
    }
    let shuffled;
    let step_text = match cfg.position {
        Position::None => None,
        _ => {
            let si = si
                .filter(|s| !s.raw_text.trim().is_empty())
                .ok_or_else(|| AssemblyError::MissingInstruction(vec![task.task_id.clone()]))?;
            let si = match cfg.shuffle_seed {
                Some(seed) => {
                    shuffled = shuffle_steps(si, derive_seed(seed, &task.task_id));
                    &shuffled
                }
                None => si,
            };
            Some(si.raw_text.trim())
        }
    };

    let mut parts = Parts {
        step: step_text,
        definition: task.definition.trim(),
        examples: task
            .positive_examples
            .iter()
            .take(cfg.max_positive_examples)
            .map(|e| (e.input.trim(), e.output.trim()))
            .collect(),
        input: instance.input.trim(),
    };
    let budget = cfg.max_input_tokens;
    let mut total = parts.tokens(cfg.position)?;
    let truncated = total > budget;

    while total > budget && !parts.examples.is_empty() {
        parts.examples.pop();
        total = parts.tokens(cfg.position)?;
    }
    if total > budget {
        if let Some(step) = parts.step {
            let keep = word_count(step).saturating_sub(total - budget);
            parts.step = Some(truncate_words(step, keep));
            total = parts.tokens(cfg.position)?;
        }
    }
    if total > budget {
        let keep = word_count(parts.input).saturating_sub(total - budget);
        parts.input = truncate_words(parts.input, keep);
        total = parts.tokens(cfg.position)?;
    }
    if total > budget {
        let keep = word_count(parts.definition).saturating_sub(total - budget);
        parts.definition = truncate_words(parts.definition, keep);
        total = parts.tokens(cfg.position)?;
    }
    if total > budget {
        return Err(AssemblyError::BudgetTooSmall {
            task_id: task.task_id.clone(),
            needed: total,
            budget,
        });
    }

    let text = parts.blocks(cfg.position)?.join(prompts::BLOCK_SEPARATOR);
    Ok(AssembledPrompt {
        task_id: task.task_id.clone(),
        instance_id: instance.instance_id.clone(),
        position: cfg.position,
        token_count: word_count(&text),
        text,
        truncated,
    })
}

/// Assemble every instance of every task and write JSON Lines to `out_path`.
///
/// Records are ordered by task id, then by instance position in the task
/// file. `instances_per_task` keeps only the first N instances of each task.
pub fn batch_assemble(
    tasks: &[TaskRecord],
    instructions: &BTreeMap<String, StepInstruction>,
    cfg: &AssemblyConfig,
    instances_per_task: Option<usize>,
    out_path: &Path,
) -> Result<usize, AssemblyError> {
    if cfg.position != Position::None {
        let missing: Vec<String> = tasks
            .iter()
            .filter(|t| {
                instructions
                    .get(&t.task_id)
                    .is_none_or(|si| si.raw_text.trim().is_empty())
            })
            .map(|t| t.task_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(AssemblyError::MissingInstruction(missing));
        }
    }
    let mut ordered: Vec<&TaskRecord> = tasks.iter().collect();
    ordered.sort_by(|a, b| a.task_id.cmp(&b.task_id));
    let mut records = Vec::new();
    for task in ordered {
        let limit = instances_per_task.unwrap_or(usize::MAX);
        for instance in task.instances.iter().take(limit) {
            records.push(assemble(task, instance, instructions.get(&task.task_id), cfg)?);
        }
    }
    jsonl::write(out_path, &records)?;
    Ok(records.len())
}

/// Seeded uniform permutation of the steps, renumbered `1..n`.
///
/// Instructions with at most one step come back unchanged apart from the
/// provenance. The permutation is [`crate::rng::permutation`] for `seed`.
pub fn shuffle_steps(si: &StepInstruction, seed: u64) -> StepInstruction {
    let origin = si
        .source_session
        .clone()
        .unwrap_or_else(|| format!("{}:{}", si.provenance, si.task_id));
    let mut out = si.clone();
    out.provenance = Provenance::Shuffled;
    out.source_session = Some(format!("shuffle(seed={seed}) <- {origin}"));
    if si.steps.len() > 1 {
        out.steps = permutation(si.steps.len(), seed)
            .into_iter()
            .map(|i| si.steps[i].clone())
            .collect();
        out.raw_text = renumber_and_join(&out.steps);
    }
    out
}
