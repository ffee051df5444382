use std::fmt;

use serde::{Deserialize, Serialize};

use super::StepInstruction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    DatasetIteration,
    EmbeddedExample,
    Empty,
    Unparseable,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationCode::DatasetIteration => "DATASET_ITERATION",
            ViolationCode::EmbeddedExample => "EMBEDDED_EXAMPLE",
            ViolationCode::Empty => "EMPTY",
            ViolationCode::Unparseable => "UNPARSEABLE",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn codes(&self) -> Vec<ViolationCode> {
        let mut codes: Vec<_> = self.violations.iter().map(|v| v.code).collect();
        codes.sort();
        codes.dedup();
        codes
    }
}

/// Phrase lists driving [`validate_instruction`].
///
/// A step that mentions an exempt phrase is skipped entirely for the
/// dataset-iteration check when the task belongs to an exempt category;
/// iterating over list elements inside one example is legitimate there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub iteration_phrases: Vec<String>,
    pub exempt_phrases: Vec<String>,
    pub exempt_categories: Vec<String>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            iteration_phrases: vec![
                "iterate through the dataset".into(),
                "repeat the process".into(),
                "for each element in the input list".into(),
            ],
            exempt_phrases: vec!["for each element in the input list".into()],
            exempt_categories: vec!["Program Execution".into()],
        }
    }
}

/// Check an instruction for the defects the refinement prompts target.
pub fn validate_instruction(
    si: &StepInstruction,
    categories: &[String],
    cfg: &ValidationConfig,
) -> ValidationReport {
    let mut violations = Vec::new();
    if si.raw_text.trim().is_empty() {
        violations.push(Violation {
            code: ViolationCode::Empty,
            message: "instruction text is empty".into(),
        });
    } else if si.steps.is_empty() {
        violations.push(Violation {
            code: ViolationCode::Unparseable,
            message: "no numbered steps found".into(),
        });
    }
    let exempt_task = categories
        .iter()
        .any(|c| cfg.exempt_categories.iter().any(|e| e.eq_ignore_ascii_case(c)));
    for (i, step) in si.steps.iter().enumerate() {
        let lower = step.to_lowercase();
        let exempt_step = exempt_task
            && cfg
                .exempt_phrases
                .iter()
                .any(|p| lower.contains(&p.to_lowercase()));
        if !exempt_step {
            if let Some(p) = cfg
                .iteration_phrases
                .iter()
                .find(|p| lower.contains(&p.to_lowercase()))
            {
                violations.push(Violation {
                    code: ViolationCode::DatasetIteration,
                    message: format!("step {} iterates over the data ({p:?})", i + 1),
                });
            }
        }
        if step.contains("Input:") && step.contains("Output:") {
            violations.push(Violation {
                code: ViolationCode::EmbeddedExample,
                message: format!("step {} embeds an input/output example", i + 1),
            });
        }
    }
    ValidationReport { violations }
}
