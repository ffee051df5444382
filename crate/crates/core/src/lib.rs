//! Tooling for step-by-step instruction corpora.
//!
//! The crate covers the whole data pipeline around task-level step-by-step
//! instructions for Sup-NatInst style benchmarks:
//!
//! * [`corpus`] loads task files and split manifests and reports statistics.
//! * [`llm_client`] is a multi-turn chat client with live, record and replay modes.
//! * [`stepgen`] builds the generation and refinement prompts, runs the
//!   refinement conversation, parses numbered steps and validates them.
//! * [`assembler`] renders model inputs with the step block prepended,
//!   appended or omitted, under a whitespace-token budget, and shuffles steps.
//! * [`evalkit`] scores predictions with ROUGE-L and aggregates per task and category.
//! * [`annotate`] runs human-evaluation campaigns and computes Fleiss's kappa.
//! * [`exgen`] generates extra positive examples and self-ranks them.
//! * [`cli`] wires everything into the `stepwise` binary.

pub mod annotate;
pub mod assembler;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod evalkit;
pub mod exgen;
pub mod jsonl;
pub mod llm_client;
pub mod prompts;
pub mod rng;
pub mod stepgen;
pub mod text;

pub use assembler::{assemble, shuffle_steps, AssembledPrompt, AssemblyConfig, Position};
pub use corpus::{ExamplePair, Instance, TaskRecord};
pub use evalkit::{evaluate, rouge_l, EvalOutcome, Prediction};
pub use stepgen::{parse_steps, renumber_and_join, Provenance, StepInstruction};
