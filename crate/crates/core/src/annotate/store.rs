//! Append-only JSON Lines label store.
//!
//! Appends go through one writer lock and rewrite the file via temp+rename,
//! so the on-disk log is always a complete prefix of the history. Readers take
//! a cheap snapshot without touching the writer lock.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use super::{AnnotateError, AnnotationRecord, Campaign};
use crate::jsonl;

#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    writer: Mutex<()>,
    snapshot: RwLock<Arc<Vec<AnnotationRecord>>>,
}

impl LabelStore {
    /// Open `path`, loading existing records. A missing file is an empty store.
    pub fn open(path: &Path) -> Result<LabelStore, AnnotateError> {
        let records = if path.exists() { jsonl::read(path)? } else { Vec::new() };
        Ok(LabelStore {
            path: path.to_path_buf(),
            writer: Mutex::new(()),
            snapshot: RwLock::new(Arc::new(records)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Arc<Vec<AnnotationRecord>> {
        Arc::clone(&self.snapshot.read().unwrap())
    }

    /// Validate `rec` against `campaign` and append it.
    pub fn record_label(&self, campaign: &Campaign, rec: AnnotationRecord) -> Result<(), AnnotateError> {
        let item = campaign
            .item(&rec.item_id)
            .ok_or_else(|| AnnotateError::UnknownItem(rec.item_id.clone()))?;
        if !campaign.assigned(&rec.annotator_id).contains(&rec.item_id.as_str()) {
            return Err(AnnotateError::UnassignedItem {
                item_id: rec.item_id,
                annotator_id: rec.annotator_id,
            });
        }
        if rec.label.kind() != item.payload.kind() {
            return Err(AnnotateError::LabelKindMismatch(rec.item_id));
        }
        let _guard = self.writer.lock().unwrap();
        let current = self.records();
        if current
            .iter()
            .any(|r| r.item_id == rec.item_id && r.annotator_id == rec.annotator_id)
        {
            return Err(AnnotateError::DuplicateLabel {
                item_id: rec.item_id,
                annotator_id: rec.annotator_id,
            });
        }
        let mut next = Vec::with_capacity(current.len() + 1);
        next.extend(current.iter().cloned());
        next.push(rec);
        jsonl::write(&self.path, &next)?;
        *self.snapshot.write().unwrap() = Arc::new(next);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::{build_campaign, quality_items, CampaignKind, Label, PairLabel, Pool};
    use crate::corpus::{ExamplePair, TaskRecord};
    use crate::stepgen::{Provenance, StepInstruction};
    use chrono::TimeZone;

    fn campaign() -> Campaign {
        let tasks: Vec<TaskRecord> = (0..4)
            .map(|i| TaskRecord {
                task_id: format!("t{i}"),
                name: format!("t{i}"),
                categories: vec!["C".into()],
                definition: "d".into(),
                positive_examples: vec![ExamplePair { input: "i".into(), output: "o".into(), explanation: None }],
                negative_examples: vec![],
                instances: vec![],
                source_path: String::new(),
            })
            .collect();
        let insts: Vec<StepInstruction> = tasks
            .iter()
            .map(|t| StepInstruction::from_reply(&t.task_id, "1. a", Provenance::Refined))
            .collect();
        let items = quality_items("train", &insts, &tasks).unwrap();
        build_campaign(
            "c",
            CampaignKind::Quality,
            vec![Pool { name: "train".into(), items, shared: 2 }],
            &["a".to_string(), "b".to_string()],
            1,
        )
        .unwrap()
    }

    fn rec(item: &str, who: &str) -> AnnotationRecord {
        AnnotationRecord {
            item_id: item.into(),
            annotator_id: who.into(),
            label: Label::Quality { correct: true, complete: false },
            timestamp: chrono::Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        }
    }

    #[test]
    fn append_duplicate_unassigned_and_reload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.jsonl");
        let c = campaign();
        let store = LabelStore::open(&path).unwrap();
        let shared = c.shared_item_ids[0].clone();
        store.record_label(&c, rec(&shared, "a")).unwrap();
        assert!(matches!(
            store.record_label(&c, rec(&shared, "a")),
            Err(AnnotateError::DuplicateLabel { .. })
        ));
        let only_b = c.independent["b"][0].clone();
        assert!(matches!(
            store.record_label(&c, rec(&only_b, "a")),
            Err(AnnotateError::UnassignedItem { .. })
        ));
        assert!(matches!(
            store.record_label(&c, rec(&shared, "zed")),
            Err(AnnotateError::UnassignedItem { .. })
        ));
        let mut bad = rec(&shared, "b");
        bad.label = Label::Pairwise { choice: PairLabel::A };
        assert!(matches!(store.record_label(&c, bad), Err(AnnotateError::LabelKindMismatch(_))));
        store.record_label(&c, rec(&only_b, "b")).unwrap();

        let reopened = LabelStore::open(&path).unwrap();
        assert_eq!(*reopened.records(), *store.records());
        assert_eq!(reopened.records().len(), 2);
    }
}
