//! Step-by-step instruction generation, refinement, parsing and validation.

mod parse;
mod validate;

use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskRecord;
use crate::jsonl;
use crate::llm_client::{ClientError, LlmClient, Session};
use crate::prompts::{self, render};

pub use parse::{parse_steps, renumber_and_join};
pub use validate::{
    validate_instruction, ValidationConfig, ValidationReport, Violation, ViolationCode,
};

#[derive(Debug, thiserror::Error)]
pub enum StepgenError {
    #[error("{0} must not be empty")]
    EmptyField(&'static str),
    #[error("task {task_id} has {found} positive examples; refinement needs 2")]
    InsufficientExamples { task_id: String, found: usize },
    #[error("no numbered steps found")]
    NoSteps,
    #[error("final reply for task {} has no numbered steps", .0.task_id)]
    ParseFailure(Box<StepInstruction>),
    #[error("session for task {0} is not fresh")]
    SessionNotFresh(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Template(#[from] prompts::TemplateError),
    #[error(transparent)]
    Jsonl(#[from] jsonl::JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Generated,
    Refined,
    Shuffled,
    Manual,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Generated => "generated",
            Provenance::Refined => "refined",
            Provenance::Shuffled => "shuffled",
            Provenance::Manual => "manual",
        })
    }
}

/// A task-level step-by-step instruction. One line of the instruction corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInstruction {
    pub task_id: String,
    pub raw_text: String,
    pub steps: Vec<String>,
    pub provenance: Provenance,
    pub refinement_rounds: u32,
    pub source_session: Option<String>,
}

impl StepInstruction {
    /// Parse `raw_text` into steps; unparseable text keeps an empty step list.
    pub fn from_reply(task_id: &str, raw_text: &str, provenance: Provenance) -> Self {
        Self {
            task_id: task_id.to_string(),
            raw_text: raw_text.to_string(),
            steps: parse_steps(raw_text).unwrap_or_default(),
            provenance,
            refinement_rounds: 0,
            source_session: None,
        }
    }
}

pub fn read_instructions(path: &Path) -> Result<Vec<StepInstruction>, jsonl::JsonlError> {
    jsonl::read(path)
}

pub fn write_instructions(path: &Path, list: &[StepInstruction]) -> Result<(), jsonl::JsonlError> {
    jsonl::write(path, list)
}

/// The initial generation prompt for one task.
pub fn build_generation_prompt(
    task_category: &str,
    task_definition: &str,
) -> Result<String, StepgenError> {
    if task_category.is_empty() {
        return Err(StepgenError::EmptyField("task_category"));
    }
    if task_definition.is_empty() {
        return Err(StepgenError::EmptyField("task_definition"));
    }
    Ok(render(
        prompts::GENERATION,
        &[("task_category", task_category), ("task_definition", task_definition)],
    )?)
}

/// The four follow-up prompts in protocol order: single-example,
/// example-grounded, no-specific-example, fetch.
pub fn build_refinement_prompts(task: &TaskRecord) -> Result<[String; 4], StepgenError> {
    let [first, second, ..] = task.positive_examples.as_slice() else {
        return Err(StepgenError::InsufficientExamples {
            task_id: task.task_id.clone(),
            found: task.positive_examples.len(),
        });
    };
    let grounded = render(
        prompts::REFINE_WITH_EXAMPLES,
        &[
            ("example1_input", &first.input),
            ("example1_output", &first.output),
            ("example2_input", &second.input),
            ("example2_output", &second.output),
        ],
    )?;
    Ok([
        prompts::REFINE_SINGLE_EXAMPLE.to_string(),
        grounded,
        prompts::REFINE_NO_SPECIFIC_EXAMPLE.to_string(),
        prompts::REFINE_FETCH.to_string(),
    ])
}

fn generation_prompt_for(task: &TaskRecord) -> Result<String, StepgenError> {
    build_generation_prompt(task.primary_category(), &task.definition)
}

fn ensure_fresh(session: &Session, task: &TaskRecord) -> Result<(), StepgenError> {
    if session.transcript().user_turns() > 0 {
        return Err(StepgenError::SessionNotFresh(task.task_id.clone()));
    }
    Ok(())
}

fn persist(session: &Session, task: &TaskRecord, dir: Option<&Path>) -> Result<(), StepgenError> {
    if let Some(dir) = dir {
        session.persist_transcript(&dir.join(format!("{}.jsonl", task.task_id)))?;
    }
    Ok(())
}

/// Send only the generation prompt (the unrefined instruction).
pub fn run_generation(
    session: &mut Session,
    task: &TaskRecord,
    transcripts_dir: Option<&Path>,
) -> Result<StepInstruction, StepgenError> {
    ensure_fresh(session, task)?;
    let reply = session.send(&generation_prompt_for(task)?)?;
    persist(session, task, transcripts_dir)?;
    let mut si = StepInstruction::from_reply(&task.task_id, &reply, Provenance::Generated);
    si.source_session = Some(session.session_id().to_string());
    if si.steps.is_empty() {
        return Err(StepgenError::ParseFailure(Box::new(si)));
    }
    Ok(si)
}

/// Generation prompt followed by the four refinement prompts. The reply to
/// the final fetch prompt becomes the instruction.
///
/// When that reply has no numbered steps the instruction is still returned
/// inside [`StepgenError::ParseFailure`] with its raw text and no steps.
pub fn run_refinement(
    session: &mut Session,
    task: &TaskRecord,
    transcripts_dir: Option<&Path>,
) -> Result<StepInstruction, StepgenError> {
    ensure_fresh(session, task)?;
    let refinements = build_refinement_prompts(task)?;
    let mut reply = session.send(&generation_prompt_for(task)?)?;
    for prompt in &refinements {
        reply = session.send(prompt)?;
    }
    persist(session, task, transcripts_dir)?;
    let mut si = StepInstruction::from_reply(&task.task_id, &reply, Provenance::Refined);
    si.refinement_rounds = refinements.len() as u32;
    si.source_session = Some(session.session_id().to_string());
    if si.steps.is_empty() {
        return Err(StepgenError::ParseFailure(Box::new(si)));
    }
    Ok(si)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Generation prompt only.
    Generate,
    /// Generation plus the four refinement prompts.
    Refine,
}

/// Result of running a protocol over many tasks.
#[derive(Debug, Default)]
pub struct BatchOutcome {
    /// Instructions in task order, including unparseable ones (empty steps).
    pub instructions: Vec<StepInstruction>,
    /// Task ids whose final reply had no numbered steps.
    pub unparseable: Vec<String>,
    /// Tasks that failed outright, with the rendered error.
    pub failures: Vec<(String, String)>,
}

/// Run `protocol` for every task, one session per task, sessions keyed by task id.
///
/// Sessions run in parallel up to the client's session limit; the output
/// keeps task order.
pub fn run_batch(
    client: &LlmClient,
    tasks: &[TaskRecord],
    protocol: Protocol,
    transcripts_dir: Option<&Path>,
) -> BatchOutcome {
    let results: Vec<(String, Result<StepInstruction, StepgenError>)> = tasks
        .par_iter()
        .map(|task| {
            let result = client
                .open_session(&task.task_id)
                .map_err(StepgenError::from)
                .and_then(|mut session| match protocol {
                    Protocol::Generate => run_generation(&mut session, task, transcripts_dir),
                    Protocol::Refine => run_refinement(&mut session, task, transcripts_dir),
                });
            (task.task_id.clone(), result)
        })
        .collect();

    let mut out = BatchOutcome::default();
    for (task_id, result) in results {
        match result {
            Ok(si) => out.instructions.push(si),
            Err(StepgenError::ParseFailure(si)) => {
                log::warn!("task {task_id}: final reply has no numbered steps; kept raw text");
                out.unparseable.push(task_id);
                out.instructions.push(*si);
            }
            Err(e) => out.failures.push((task_id, e.to_string())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ExamplePair;

    fn task(examples: usize) -> TaskRecord {
        TaskRecord {
            task_id: "task1_x".into(),
            name: "x".into(),
            categories: vec!["Grammar Error Correction".into()],
            definition: "Fix the grammar.".into(),
            positive_examples: (0..examples)
                .map(|i| ExamplePair {
                    input: format!("in {i}"),
                    output: format!("out {i}"),
                    explanation: None,
                })
                .collect(),
            negative_examples: vec![],
            instances: vec![],
            source_path: String::new(),
        }
    }

    #[test]
    fn generation_prompt_text() {
        let p = build_generation_prompt("Grammar Error Correction", "Fix the grammar.").unwrap();
        assert!(p.starts_with(
            "Please provide a step-by-step instruction for completing the Grammar Error Correction task."
        ));
        assert!(p.ends_with("\n\nGrammar Error Correction: Fix the grammar."));
        assert!(matches!(
            build_generation_prompt("", "x"),
            Err(StepgenError::EmptyField("task_category"))
        ));
        assert!(matches!(
            build_generation_prompt("x", ""),
            Err(StepgenError::EmptyField("task_definition"))
        ));
    }

    #[test]
    fn braces_in_category_survive() {
        let p = build_generation_prompt("A {{task_definition}} B", "def").unwrap();
        assert!(p.contains("completing the A {{task_definition}} B task."));
        assert!(p.ends_with("A {{task_definition}} B: def"));
    }

    #[test]
    fn refinement_prompts() {
        let p = build_refinement_prompts(&task(2)).unwrap();
        assert!(p[0].contains("applicable for a single example"));
        for needle in ["in 0", "out 0", "in 1", "out 1"] {
            assert!(p[1].contains(needle));
        }
        assert!(p[2].contains("does not contain any specific example"));
        assert_eq!(p[3], "Output the refined instruction.");
        assert!(matches!(
            build_refinement_prompts(&task(1)),
            Err(StepgenError::InsufficientExamples { found: 1, .. })
        ));
    }

    #[test]
    fn builders_are_pure() {
        let t = task(3);
        assert_eq!(
            build_refinement_prompts(&t).unwrap(),
            build_refinement_prompts(&t).unwrap()
        );
    }
}
