//! Human evaluation campaigns: instruction-quality labelling and blinded
//! pairwise comparison, with an append-only label store, agreement
//! statistics and an HTTP API for the annotation frontend.

mod campaign;
mod kappa;
mod report;
pub mod server;
mod store;

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{ExamplePair, TaskRecord};
use crate::stepgen::StepInstruction;

pub use campaign::{build_campaign, derandomize, pairwise_items, quality_items, Pool};
pub use kappa::fleiss_kappa;
pub use report::{
    pairwise_report, progress, quality_report, render_pairwise, render_quality, AgreementReport,
    AnnotatorProgress, Cell, ConsensusRule, DimensionRates, IncompletePolicy, PairwiseReport, Progress, QualityReport,
    Quadrants, Report,
};
pub use store::LabelStore;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("pool {pool} has {available} items, {requested} requested as shared")]
    InsufficientItems { pool: String, requested: usize, available: usize },
    #[error("a campaign needs at least 2 distinct annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("duplicate item id {0}")]
    DuplicateItem(String),
    #[error("item {0} does not match the campaign kind")]
    KindMismatch(String),
    #[error("{shared} shared counts given for {pools} pools")]
    PoolCountMismatch { pools: usize, shared: usize },
    #[error("unknown item {0}")]
    UnknownItem(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("item {item_id} is not assigned to {annotator_id}")]
    UnassignedItem { item_id: String, annotator_id: String },
    #[error("{annotator_id} already labelled {item_id}")]
    DuplicateLabel { item_id: String, annotator_id: String },
    #[error("label kind does not match campaign kind for item {0}")]
    LabelKindMismatch(String),
    #[error("ragged table: {0}")]
    RaggedTable(String),
    #[error("campaign incomplete: {missing} of {total} assigned labels missing")]
    IncompleteCampaign { missing: usize, total: usize },
    #[error("no prediction pairs in common between the two systems")]
    NoPairs,
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed campaign file {path}: {reason}")]
    MalformedCampaign { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CampaignKind {
    Quality,
    Pairwise,
}

impl std::fmt::Display for CampaignKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CampaignKind::Quality => "quality",
            CampaignKind::Pairwise => "pairwise",
        })
    }
}

impl std::str::FromStr for CampaignKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quality" => Ok(CampaignKind::Quality),
            "pairwise" => Ok(CampaignKind::Pairwise),
            other => Err(format!("unknown campaign kind {other:?} (quality, pairwise)")),
        }
    }
}

/// What an annotator sees about the task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub task_id: String,
    pub categories: Vec<String>,
    pub definition: String,
    pub positive_examples: Vec<ExamplePair>,
}

impl TaskContext {
    pub fn from_task(task: &TaskRecord, max_examples: usize) -> Self {
        TaskContext {
            task_id: task.task_id.clone(),
            categories: task.categories.clone(),
            definition: task.definition.clone(),
            positive_examples: task.positive_examples.iter().take(max_examples).cloned().collect(),
        }
    }
}

/// Which system sits behind each side. `flipped == false` means side A shows
/// `system_x`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenSides {
    pub system_x: String,
    pub system_y: String,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Payload {
    Quality {
        context: TaskContext,
        instruction: StepInstruction,
    },
    Pairwise {
        context: TaskContext,
        instance_id: String,
        instance_input: String,
        prediction_a: String,
        prediction_b: String,
        hidden: HiddenSides,
    },
}

impl Payload {
    pub fn kind(&self) -> CampaignKind {
        match self {
            Payload::Quality { .. } => CampaignKind::Quality,
            Payload::Pairwise { .. } => CampaignKind::Pairwise,
        }
    }

    pub fn context(&self) -> &TaskContext {
        match self {
            Payload::Quality { context, .. } | Payload::Pairwise { context, .. } => context,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub item_id: String,
    /// Sampling pool the item came from (e.g. train, test).
    pub pool: String,
    pub payload: Payload,
}

/// The blinded view served to annotators. Pairwise items carry no system
/// identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemView {
    pub item_id: String,
    pub kind: CampaignKind,
    pub task_id: String,
    pub definition: String,
    pub positive_examples: Vec<ExamplePair>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_a: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction_b: Option<String>,
}

impl AnnotationItem {
    pub fn view(&self) -> ItemView {
        let ctx = self.payload.context();
        let mut view = ItemView {
            item_id: self.item_id.clone(),
            kind: self.payload.kind(),
            task_id: ctx.task_id.clone(),
            definition: ctx.definition.clone(),
            positive_examples: ctx.positive_examples.clone(),
            steps: None,
            instance_input: None,
            prediction_a: None,
            prediction_b: None,
        };
        match &self.payload {
            Payload::Quality { instruction, .. } => view.steps = Some(instruction.steps.clone()),
            Payload::Pairwise { instance_input, prediction_a, prediction_b, .. } => {
                view.instance_input = Some(instance_input.clone());
                view.prediction_a = Some(prediction_a.clone());
                view.prediction_b = Some(prediction_b.clone());
            }
        }
        view
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLabel {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Label {
    Quality { correct: bool, complete: bool },
    Pairwise { choice: PairLabel },
}

impl Label {
    pub fn kind(&self) -> CampaignKind {
        match self {
            Label::Quality { .. } => CampaignKind::Quality,
            Label::Pairwise { .. } => CampaignKind::Pairwise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub label: Label,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: String,
    pub kind: CampaignKind,
    pub items: Vec<AnnotationItem>,
    pub annotators: Vec<String>,
    /// Labelled by every annotator, in `items` order.
    pub shared_item_ids: Vec<String>,
    /// Annotator id -> independent items, one rater each.
    pub independent: std::collections::BTreeMap<String, Vec<String>>,
    pub seed: u64,
}

impl Campaign {
    pub fn item(&self, item_id: &str) -> Option<&AnnotationItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn is_shared(&self, item_id: &str) -> bool {
        self.shared_item_ids.iter().any(|s| s == item_id)
    }

    /// Shared items first, then the annotator's independent part.
    pub fn assigned(&self, annotator_id: &str) -> Vec<&str> {
        if !self.annotators.iter().any(|a| a == annotator_id) {
            return Vec::new();
        }
        self.shared_item_ids
            .iter()
            .map(String::as_str)
            .chain(self.independent.get(annotator_id).into_iter().flatten().map(String::as_str))
            .collect()
    }

    /// Annotators expected to label `item_id`.
    pub fn raters_of(&self, item_id: &str) -> Vec<&str> {
        if self.is_shared(item_id) {
            return self.annotators.iter().map(String::as_str).collect();
        }
        self.independent
            .iter()
            .filter(|(_, items)| items.iter().any(|i| i == item_id))
            .map(|(a, _)| a.as_str())
            .collect()
    }

    pub fn load(path: &Path) -> Result<Campaign, AnnotateError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| AnnotateError::MalformedCampaign {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotateError> {
        let mut text = serde_json::to_string_pretty(self).expect("campaign serializes");
        text.push('\n');
        crate::jsonl::write_atomic(path, text.as_bytes()).map_err(|source| AnnotateError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
