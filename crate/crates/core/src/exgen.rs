//! Harder positive examples: ask the model for `n` new examples, parse them,
//! ask it to rank its own output and keep the best two.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TaskRecord;
use crate::llm_client::{ClientError, LlmClient};
use crate::prompts::{self, render, TemplateError};
use crate::stepgen::{renumber_and_join, StepInstruction};
use crate::text::normalize_whitespace;

#[derive(Debug, thiserror::Error)]
pub enum ExgenError {
    #[error("at least 2 examples must be requested, got {0}")]
    BadCount(usize),
    #[error("reply contains no Input/Output example")]
    NoExamples,
    #[error("ranking needs a pool of at least 2 examples, got {0}")]
    PoolTooSmall(usize),
    #[error("no instruction for task {0}")]
    MissingInstruction(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedExample {
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    /// Block position in the reply, counting dropped blocks.
    pub origin_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParsedReply {
    pub examples: Vec<GeneratedExample>,
    /// One message per dropped block.
    pub dropped: Vec<String>,
    /// Non-blank lines outside any example block (headings excluded).
    pub stray_lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedSelection {
    pub selected: Vec<GeneratedExample>,
    /// Pool indices of `selected`.
    pub indices: Vec<usize>,
    /// True when the rank reply carries no text besides example content.
    pub rationale_suppressed: bool,
    pub warnings: Vec<String>,
}

/// One line of exgen output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExgenRecord {
    pub task_id: String,
    pub examples: Vec<GeneratedExample>,
    pub selected: Vec<usize>,
    pub warnings: Vec<String>,
}

fn instruction_text(si: &StepInstruction) -> String {
    if si.steps.is_empty() {
        si.raw_text.trim().to_string()
    } else {
        renumber_and_join(&si.steps)
    }
}

pub fn build_examplegen_prompt(
    n: usize,
    task_category: &str,
    instruction_content: &str,
) -> Result<String, ExgenError> {
    if n < 2 {
        return Err(ExgenError::BadCount(n));
    }
    Ok(render(
        prompts::EXAMPLEGEN,
        &[
            ("generated_example_num", &n.to_string()),
            ("task_category", task_category),
            ("instruction_content", instruction_content),
        ],
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Input,
    Output,
    Explanation,
}

/// Strip a leading list marker such as `1.`, `2)` or `-`.
fn strip_enumerator(line: &str) -> &str {
    let t = line.trim_start();
    let digits = t.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            return r.trim_start();
        }
    }
    t.strip_prefix("- ").map(str::trim_start).unwrap_or(t)
}

fn label_of(line: &str) -> Option<(Field, &str)> {
    let t = strip_enumerator(line).trim_start_matches('*');
    for (name, field) in [("Input:", Field::Input), ("Output:", Field::Output), ("Explanation:", Field::Explanation)] {
        if let Some(rest) = t.strip_prefix(name) {
            return Some((field, rest.trim_start_matches('*')));
        }
    }
    None
}

/// `Example 3`, `Example 3:`, `**Example 3:**`
fn is_heading(line: &str) -> bool {
    let t = line.trim().trim_matches('*').trim();
    let Some(rest) = t.strip_prefix("Example") else { return false };
    let rest = rest.trim().trim_end_matches(':').trim();
    !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit())
}

#[derive(Default)]
struct Block {
    input: Vec<String>,
    output: Option<Vec<String>>,
    explanation: Option<Vec<String>>,
}

fn join_field(lines: &[String]) -> String {
    lines.join("\n").trim().to_string()
}

/// Split a reply into `Input:` / `Output:` / `Explanation:` blocks.
pub fn parse_reply(reply: &str) -> ParsedReply {
    let mut blocks: Vec<Block> = Vec::new();
    let mut field = None;
    let mut stray_lines = 0;
    for line in reply.lines() {
        if is_heading(line) {
            continue;
        }
        match label_of(line) {
            Some((Field::Input, rest)) => {
                blocks.push(Block { input: vec![rest.to_string()], ..Block::default() });
                field = Some(Field::Input);
            }
            Some((f, rest)) if !blocks.is_empty() => {
                let b = blocks.last_mut().unwrap();
                let slot = if f == Field::Output { &mut b.output } else { &mut b.explanation };
                slot.get_or_insert_with(Vec::new).push(rest.to_string());
                field = Some(f);
            }
            Some(_) => {
                stray_lines += 1;
            }
            None => match (field, blocks.last_mut()) {
                (Some(f), Some(b)) => {
                    let target = match f {
                        Field::Input => &mut b.input,
                        Field::Output => b.output.get_or_insert_with(Vec::new),
                        Field::Explanation => b.explanation.get_or_insert_with(Vec::new),
                    };
                    target.push(line.to_string());
                }
                _ => {
                    if !line.trim().is_empty() {
                        stray_lines += 1;
                    }
                }
            },
        }
    }

    let mut out = ParsedReply { stray_lines, ..ParsedReply::default() };
    for (idx, b) in blocks.into_iter().enumerate() {
        let input = join_field(&b.input);
        let output = b.output.as_deref().map(join_field).unwrap_or_default();
        if input.is_empty() {
            out.dropped.push(format!("block {}: empty Input", idx + 1));
            continue;
        }
        if output.is_empty() {
            out.dropped.push(format!("block {}: missing Output", idx + 1));
            continue;
        }
        let explanation = b.explanation.as_deref().map(join_field).filter(|e| !e.is_empty());
        out.examples.push(GeneratedExample { input, output, explanation, origin_index: idx });
    }
    out
}

/// Parse generated examples; blocks without an output are dropped and logged.
pub fn parse_generated_examples(reply: &str) -> Result<Vec<GeneratedExample>, ExgenError> {
    let parsed = parse_reply(reply);
    for d in &parsed.dropped {
        log::warn!("generated examples: dropped {d}");
    }
    if parsed.examples.is_empty() {
        return Err(ExgenError::NoExamples);
    }
    Ok(parsed.examples)
}

fn serialize_one(e: &GeneratedExample) -> String {
    let mut s = format!("Input: {}\nOutput: {}", e.input, e.output);
    if let Some(x) = &e.explanation {
        s.push_str("\nExplanation: ");
        s.push_str(x);
    }
    s
}

/// Blocks in the same `Input:`/`Output:`/`Explanation:` layout, blank-line separated.
pub fn serialize_examples(examples: &[GeneratedExample]) -> String {
    examples.iter().map(serialize_one).collect::<Vec<_>>().join("\n\n")
}

pub fn build_rank_prompt(pool: &[GeneratedExample], instruction_content: &str) -> Result<String, ExgenError> {
    if pool.len() < 2 {
        return Err(ExgenError::PoolTooSmall(pool.len()));
    }
    let content = pool
        .iter()
        .enumerate()
        .map(|(i, e)| format!("Example {}:\n{}", i + 1, serialize_one(e)))
        .collect::<Vec<_>>()
        .join("\n\n");
    Ok(render(
        prompts::RANK_EXAMPLES,
        &[("example_content", &content), ("instruction_content", instruction_content)],
    )?)
}

/// Pick the two pool examples whose inputs appear earliest in `rank_reply`
/// (whitespace-normalized containment). Unmatched slots are filled from the
/// pool in order, with a warning.
pub fn select_top2(rank_reply: &str, pool: &[GeneratedExample]) -> Result<RankedSelection, ExgenError> {
    if pool.len() < 2 {
        return Err(ExgenError::PoolTooSmall(pool.len()));
    }
    let reply = normalize_whitespace(rank_reply);
    let mut hits: Vec<(usize, std::cmp::Reverse<usize>, usize)> = pool
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let needle = normalize_whitespace(&e.input);
            reply.find(&needle).map(|pos| (pos, std::cmp::Reverse(needle.len()), i))
        })
        .collect();
    hits.sort();
    let mut indices: Vec<usize> = hits.iter().map(|h| h.2).take(2).collect();
    let mut warnings = Vec::new();
    if indices.len() < 2 {
        warnings.push(format!(
            "rank reply matched {} of 2 examples; filled from pool order",
            indices.len()
        ));
        for i in 0..pool.len() {
            if indices.len() == 2 {
                break;
            }
            if !indices.contains(&i) {
                indices.push(i);
            }
        }
    }
    let rationale_suppressed = parse_reply(rank_reply).stray_lines == 0;
    Ok(RankedSelection {
        selected: indices.iter().map(|&i| pool[i].clone()).collect(),
        indices,
        rationale_suppressed,
        warnings,
    })
}

/// Session key for a task's example-generation conversation.
pub fn session_key(task_id: &str) -> String {
    format!("exgen-{task_id}")
}

/// Generate, parse, rank and select for one task in one two-turn session.
pub fn run_task(
    client: &LlmClient,
    task: &TaskRecord,
    instruction: &StepInstruction,
    n: usize,
    transcripts_dir: Option<&Path>,
) -> Result<ExgenRecord, ExgenError> {
    let content = instruction_text(instruction);
    let mut session = client.open_session(&session_key(&task.task_id))?;
    let reply = session.send(&build_examplegen_prompt(n, task.primary_category(), &content)?)?;
    let parsed = parse_reply(&reply);
    let mut warnings = parsed.dropped.iter().map(|d| format!("dropped {d}")).collect::<Vec<_>>();
    if parsed.examples.is_empty() {
        return Err(ExgenError::NoExamples);
    }
    let selected = if parsed.examples.len() >= 2 {
        let rank_reply = session.send(&build_rank_prompt(&parsed.examples, &content)?)?;
        let sel = select_top2(&rank_reply, &parsed.examples)?;
        warnings.extend(sel.warnings);
        sel.indices
    } else {
        warnings.push("only one example parsed; ranking skipped".into());
        vec![0]
    };
    if let Some(dir) = transcripts_dir {
        session.persist_transcript(&dir.join(format!("{}.jsonl", session_key(&task.task_id))))?;
    }
    Ok(ExgenRecord { task_id: task.task_id.clone(), examples: parsed.examples, selected, warnings })
}

/// `(task_id, rendered error)` for tasks that could not be processed.
pub type Failures = Vec<(String, String)>;

/// Run every task that has an instruction; output keeps task order.
pub fn run_batch(
    client: &LlmClient,
    tasks: &[TaskRecord],
    instructions: &[StepInstruction],
    n: usize,
    transcripts_dir: Option<&Path>,
) -> Result<(Vec<ExgenRecord>, Failures), ExgenError> {
    if n < 2 {
        return Err(ExgenError::BadCount(n));
    }
    let index: HashMap<&str, &StepInstruction> =
        instructions.iter().map(|s| (s.task_id.as_str(), s)).collect();
    let results: Vec<(String, Result<ExgenRecord, ExgenError>)> = tasks
        .par_iter()
        .map(|t| {
            let r = match index.get(t.task_id.as_str()) {
                Some(si) => run_task(client, t, si, n, transcripts_dir),
                None => Err(ExgenError::MissingInstruction(t.task_id.clone())),
            };
            (t.task_id.clone(), r)
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => failures.push((id, e.to_string())),
        }
    }
    Ok((records, failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ex(input: &str, output: &str) -> GeneratedExample {
        GeneratedExample { input: input.into(), output: output.into(), explanation: None, origin_index: 0 }
    }

    #[test]
    fn examplegen_prompt() {
        let p = build_examplegen_prompt(5, "Sentiment Analysis", "1. Read.\n2. Answer.").unwrap();
        assert!(p.starts_with("Give me 5 harder examples for the Sentiment Analysis task"));
        assert!(p.ends_with("The instruction for this task is :\n\n1. Read.\n2. Answer."));
        assert!(matches!(build_examplegen_prompt(1, "x", "y"), Err(ExgenError::BadCount(1))));
    }

    #[test]
    fn parses_blocks_and_drops_incomplete() {
        let reply = "Sure! Here are three examples.\n\nExample 1:\nInput: first\nline two\nOutput: A\nExplanation: because.\n\nExample 2:\nInput: second\nExplanation: no output here\n\nExample 3:\nInput: third\nOutput: C\n";
        let parsed = parse_reply(reply);
        assert_eq!(parsed.examples.len(), 2);
        assert_eq!(parsed.examples[0].input, "first\nline two");
        assert_eq!(parsed.examples[0].explanation.as_deref(), Some("because."));
        assert_eq!(parsed.examples[1].input, "third");
        assert_eq!(parsed.examples[1].origin_index, 2);
        assert_eq!(parsed.dropped, ["block 2: missing Output"]);
        assert_eq!(parsed.stray_lines, 1);
        assert!(matches!(parse_generated_examples("nothing here"), Err(ExgenError::NoExamples)));
    }

    #[test]
    fn numbered_and_bold_labels() {
        let parsed = parse_reply("1. **Input:** a\n**Output:** b\n2. Input: c\nOutput: d");
        assert_eq!(parsed.examples.iter().map(|e| e.input.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(parsed.examples[0].output, "b");
    }

    #[test]
    fn selection_order_and_fallback() {
        let pool = vec![ex("alpha one", "1"), ex("beta two", "2"), ex("gamma three", "3"), ex("delta four", "4")];
        let s = select_top2("Input: delta   four\nOutput: 4\n\nInput: beta\ntwo\nOutput: 2", &pool).unwrap();
        assert_eq!(s.indices, [3, 1]);
        assert!(s.warnings.is_empty());
        assert!(s.rationale_suppressed);

        let s = select_top2("I like them all.", &pool).unwrap();
        assert_eq!(s.indices, [0, 1]);
        assert_eq!(s.warnings.len(), 1);
        assert!(!s.rationale_suppressed);

        let s = select_top2("Input: gamma three", &pool).unwrap();
        assert_eq!(s.indices, [2, 0]);

        assert!(matches!(select_top2("x", &pool[..1]), Err(ExgenError::PoolTooSmall(1))));
    }

    #[test]
    fn rank_prompt_lists_pool() {
        let pool = vec![ex("a", "b"), ex("c", "d")];
        let p = build_rank_prompt(&pool, "1. Do it.").unwrap();
        assert!(p.contains("Example 1:\nInput: a\nOutput: b\n\nExample 2:\nInput: c\nOutput: d"));
        assert!(p.ends_with("The instruction for this task is :\n1. Do it."));
    }

    fn field() -> impl Strategy<Value = String> {
        prop::collection::vec("[a-z]{1,6}", 1..5).prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn parse_serialize_parse(items in prop::collection::vec((field(), field(), prop::option::of(field())), 1..5)) {
            let pool: Vec<GeneratedExample> = items
                .into_iter()
                .enumerate()
                .map(|(i, (input, output, explanation))| GeneratedExample { input, output, explanation, origin_index: i })
                .collect();
            let once = parse_generated_examples(&serialize_examples(&pool)).unwrap();
            prop_assert_eq!(&once, &pool);
            let twice = parse_generated_examples(&serialize_examples(&once)).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
