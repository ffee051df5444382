//! Sup-NatInst task files, split manifests and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::stepgen::StepInstruction;
use crate::text::word_count;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed task file {path}: {reason}")]
    MalformedTask { path: String, reason: String },
    #[error("duplicate task id {task_id} in {path}")]
    DuplicateTaskId { task_id: String, path: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("instruction for task {0} has no matching task in the corpus")]
    UnknownInstructionTask(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub input: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub input: String,
    pub references: Vec<String>,
}

/// One benchmark task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: String,
    pub name: String,
    pub categories: Vec<String>,
    pub definition: String,
    pub positive_examples: Vec<ExamplePair>,
    pub negative_examples: Vec<ExamplePair>,
    /// Evaluation instances in file order.
    pub instances: Vec<Instance>,
    pub source_path: String,
}

impl TaskRecord {
    /// First listed category, used where the pipeline needs a single one.
    pub fn primary_category(&self) -> &str {
        self.categories.first().map(String::as_str).unwrap_or("")
    }
}

// On-disk layout of a Sup-NatInst task file. Unknown keys are ignored.
#[derive(Serialize, Deserialize)]
struct RawTask {
    #[serde(rename = "Definition")]
    definition: Option<Vec<String>>,
    #[serde(rename = "Categories")]
    categories: Option<Vec<String>>,
    #[serde(rename = "Positive Examples")]
    positive_examples: Option<Vec<RawExample>>,
    #[serde(rename = "Negative Examples", default)]
    negative_examples: Vec<RawExample>,
    #[serde(rename = "Instances")]
    instances: Option<Vec<RawInstance>>,
}

#[derive(Serialize, Deserialize)]
struct RawExample {
    input: String,
    output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    explanation: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    id: String,
    input: String,
    output: OneOrMany,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Task name without the numeric `taskNNN_` prefix.
fn task_name(task_id: &str) -> String {
    match task_id.split_once('_') {
        Some((head, tail)) if head.starts_with("task") && head[4..].chars().all(|c| c.is_ascii_digit()) => {
            tail.to_string()
        }
        _ => task_id.to_string(),
    }
}

/// Load one task file. The task id is the file stem.
pub fn load_task(path: &Path) -> Result<TaskRecord, CorpusError> {
    let display = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let malformed = |reason: String| CorpusError::MalformedTask {
        path: display.clone(),
        reason,
    };
    let raw: RawTask = serde_json::from_slice(&bytes).map_err(|e| malformed(e.to_string()))?;
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| malformed("file name gives no task id".into()))?;

    let definition = raw
        .definition
        .ok_or_else(|| malformed("missing \"Definition\"".into()))?
        .into_iter()
        .next()
        .unwrap_or_default();
    if definition.trim().is_empty() {
        return Err(malformed("empty definition".into()));
    }
    let categories = raw
        .categories
        .ok_or_else(|| malformed("missing \"Categories\"".into()))?;
    let convert = |list: Vec<RawExample>, key: &str| -> Result<Vec<ExamplePair>, CorpusError> {
        list.into_iter()
            .enumerate()
            .map(|(i, ex)| {
                if ex.input.is_empty() || ex.output.is_empty() {
                    Err(malformed(format!("{key} #{} has an empty input or output", i + 1)))
                } else {
                    Ok(ExamplePair {
                        input: ex.input,
                        output: ex.output,
                        explanation: ex.explanation,
                    })
                }
            })
            .collect()
    };
    let positive_examples = convert(
        raw.positive_examples
            .ok_or_else(|| malformed("missing \"Positive Examples\"".into()))?,
        "positive example",
    )?;
    let negative_examples = convert(raw.negative_examples, "negative example")?;
    let instances = raw
        .instances
        .ok_or_else(|| malformed("missing \"Instances\"".into()))?
        .into_iter()
        .map(|inst| {
            let references = match inst.output {
                OneOrMany::One(s) => vec![s],
                OneOrMany::Many(v) => v,
            };
            if references.is_empty() || references.iter().any(String::is_empty) {
                return Err(malformed(format!("instance {} has an empty reference", inst.id)));
            }
            Ok(Instance {
                instance_id: inst.id,
                input: inst.input,
                references,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(TaskRecord {
        name: task_name(&task_id),
        task_id,
        categories,
        definition,
        positive_examples,
        negative_examples,
        instances,
        source_path: display,
    })
}

/// Serialize a task back into the Sup-NatInst file layout.
pub fn task_to_json(task: &TaskRecord) -> serde_json::Value {
    let examples = |list: &[ExamplePair]| {
        list.iter()
            .map(|e| RawExample {
                input: e.input.clone(),
                output: e.output.clone(),
                explanation: e.explanation.clone(),
            })
            .collect()
    };
    let raw = RawTask {
        definition: Some(vec![task.definition.clone()]),
        categories: Some(task.categories.clone()),
        positive_examples: Some(examples(&task.positive_examples)),
        negative_examples: examples(&task.negative_examples),
        instances: Some(
            task.instances
                .iter()
                .map(|i| RawInstance {
                    id: i.instance_id.clone(),
                    input: i.input.clone(),
                    output: OneOrMany::Many(i.references.clone()),
                })
                .collect(),
        ),
    };
    serde_json::to_value(raw).expect("task serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Guess the split from a manifest file name such as `test_tasks.txt`.
    pub fn infer(path: &Path) -> Option<Split> {
        let name = path.file_name()?.to_string_lossy().to_lowercase();
        if name.contains("train") {
            Some(Split::Train)
        } else if name.contains("test") {
            Some(Split::Test)
        } else {
            None
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Ordered task ids of one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub split: Split,
    pub task_ids: Vec<String>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.task_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.task_ids.is_empty()
    }
}

/// One task id per line; blank lines are skipped, surrounding whitespace trimmed.
pub fn load_manifest(path: &Path, split: Split) -> Result<CorpusManifest, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut seen = HashSet::new();
    let mut task_ids = Vec::new();
    for line in text.lines() {
        let id = line.trim();
        if id.is_empty() {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(CorpusError::DuplicateTaskId {
                task_id: id.to_string(),
                path: path.display().to_string(),
            });
        }
        task_ids.push(id.to_string());
    }
    Ok(CorpusManifest { split, task_ids })
}

/// Load tasks from a directory of `<task_id>.json` files.
///
/// With a manifest, exactly the listed tasks are loaded in manifest order.
/// Without one, every `*.json` file is loaded in file-name order.
pub fn load_tasks_dir(
    dir: &Path,
    manifest: Option<&CorpusManifest>,
) -> Result<Vec<TaskRecord>, CorpusError> {
    let paths: Vec<PathBuf> = match manifest {
        Some(m) => m.task_ids.iter().map(|id| dir.join(format!("{id}.json"))).collect(),
        None => {
            let entries = fs::read_dir(dir).map_err(|source| CorpusError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            let mut paths: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            paths.sort();
            paths
        }
    };
    let tasks = paths
        .par_iter()
        .map(|p| load_task(p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids = HashSet::new();
    for t in &tasks {
        if !ids.insert(t.task_id.as_str()) {
            return Err(CorpusError::DuplicateTaskId {
                task_id: t.task_id.clone(),
                path: dir.display().to_string(),
            });
        }
    }
    Ok(tasks)
}

/// Corpus-level statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_tasks: usize,
    pub total_categories: usize,
    pub avg_words_per_definition: f64,
    pub avg_words_per_instruction: f64,
    pub avg_steps_per_instruction: f64,
    pub tasks_with_instruction: usize,
}

impl StatsReport {
    pub fn to_table(&self) -> String {
        let rows = [
            ("Total number of tasks", self.total_tasks.to_string()),
            ("Total number of categories", self.total_categories.to_string()),
            ("Average word count per definition", format!("{:.1}", self.avg_words_per_definition)),
            (
                "Average word count per step-by-step instruction",
                format!("{:.1}", self.avg_words_per_instruction),
            ),
            (
                "Average number of steps per step-by-step instruction",
                format!("{:.1}", self.avg_steps_per_instruction),
            ),
            ("Tasks with a step-by-step instruction", self.tasks_with_instruction.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>8}\n"))
            .collect()
    }
}

/// Table-style statistics over `tasks`.
///
/// Word counts are whitespace tokens. Instruction averages only cover tasks
/// that have an instruction; `total_tasks` counts every task.
pub fn corpus_stats(
    tasks: &[TaskRecord],
    instructions: &BTreeMap<String, StepInstruction>,
) -> Result<StatsReport, CorpusError> {
    if tasks.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let ids: HashSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    if let Some(unknown) = instructions.keys().find(|k| !ids.contains(k.as_str())) {
        return Err(CorpusError::UnknownInstructionTask(unknown.clone()));
    }
    let categories: BTreeSet<&str> = tasks
        .iter()
        .flat_map(|t| t.categories.iter().map(String::as_str))
        .collect();
    let def_words: usize = tasks.iter().map(|t| word_count(&t.definition)).sum();

    let covered: Vec<&StepInstruction> = tasks
        .iter()
        .filter_map(|t| instructions.get(&t.task_id))
        .collect();
    let (instr_words, steps) = covered.iter().fold((0usize, 0usize), |(w, s), si| {
        (w + word_count(&si.raw_text), s + si.steps.len())
    });
    let mean = |total: usize, n: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };

    Ok(StatsReport {
        total_tasks: tasks.len(),
        total_categories: categories.len(),
        avg_words_per_definition: mean(def_words, tasks.len()),
        avg_words_per_instruction: mean(instr_words, covered.len()),
        avg_steps_per_instruction: mean(steps, covered.len()),
        tasks_with_instruction: covered.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepgen::Provenance;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const TASK: &str = r#"{
        "Contributors": ["x"],
        "Definition": ["Answer the question."],
        "Categories": ["Question Answering"],
        "Positive Examples": [
            {"input": "q1", "output": "a1", "explanation": "e1"},
            {"input": "q2", "output": "a2"}
        ],
        "Negative Examples": [],
        "Instances": [
            {"id": "task001-1", "input": "i1", "output": ["r1"]},
            {"id": "task001-2", "input": "i2", "output": ["r2", "r2b"]},
            {"id": "task001-3", "input": "i3", "output": "r3"}
        ]
    }"#;

    #[test]
    fn loads_fixture_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "task001_simple_qa.json", TASK);
        let t = load_task(&p).unwrap();
        assert_eq!((t.positive_examples.len(), t.instances.len()), (2, 3));
        assert_eq!(t.task_id, "task001_simple_qa");
        assert_eq!(t.name, "simple_qa");
        assert_eq!(t.instances[1].references, ["r2", "r2b"]);
        assert_eq!(t.instances[2].references, ["r3"]);
        assert_eq!(t.positive_examples[0].explanation.as_deref(), Some("e1"));
    }

    #[test]
    fn missing_definition_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let body = TASK.replace("\"Definition\": [\"Answer the question.\"],", "");
        let p = write(dir.path(), "task002_x.json", &body);
        let err = load_task(&p).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedTask { ref reason, .. } if reason.contains("Definition")));
    }

    #[test]
    fn empty_reference_list_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let body = TASK.replace("[\"r1\"]", "[]");
        let p = write(dir.path(), "task003_x.json", &body);
        assert!(matches!(load_task(&p), Err(CorpusError::MalformedTask { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_task(Path::new("/nonexistent/task.json")),
            Err(CorpusError::Io { .. })
        ));
    }

    #[test]
    fn round_trip_through_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "task001_simple_qa.json", TASK);
        let t = load_task(&p).unwrap();
        let out = tempfile::tempdir().unwrap();
        let p2 = out.path().join("task001_simple_qa.json");
        fs::write(&p2, serde_json::to_vec_pretty(&task_to_json(&t)).unwrap()).unwrap();
        let mut t2 = load_task(&p2).unwrap();
        t2.source_path = t.source_path.clone();
        assert_eq!(t, t2);
    }

    #[test]
    fn manifests() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "test_tasks.txt", "a\n\n b \nc\n");
        let m = load_manifest(&p, Split::Test).unwrap();
        assert_eq!(m.task_ids, ["a", "b", "c"]);
        assert_eq!(Split::infer(&p), Some(Split::Test));

        let p = write(dir.path(), "dup.txt", "a\nb\na\n");
        assert!(matches!(
            load_manifest(&p, Split::Train),
            Err(CorpusError::DuplicateTaskId { ref task_id, .. }) if task_id == "a"
        ));

        let p = write(dir.path(), "empty.txt", "");
        assert_eq!(load_manifest(&p, Split::Train).unwrap().len(), 0);
    }

    fn task(id: &str, cats: &[&str], def: &str) -> TaskRecord {
        TaskRecord {
            task_id: id.into(),
            name: id.into(),
            categories: cats.iter().map(|s| s.to_string()).collect(),
            definition: def.into(),
            positive_examples: vec![],
            negative_examples: vec![],
            instances: vec![],
            source_path: String::new(),
        }
    }

    fn instr(id: &str, raw: &str, steps: &[&str]) -> StepInstruction {
        StepInstruction {
            task_id: id.into(),
            raw_text: raw.into(),
            steps: steps.iter().map(|s| s.to_string()).collect(),
            provenance: Provenance::Refined,
            refinement_rounds: 4,
            source_session: None,
        }
    }

    #[test]
    fn stats_single_task_hand_count() {
        let tasks = vec![task("t1", &["A"], "Do it now.")];
        let mut map = BTreeMap::new();
        map.insert("t1".to_string(), instr("t1", "1. A b. 2. C.", &["A b.", "C."]));
        let s = corpus_stats(&tasks, &map).unwrap();
        assert_eq!(s.avg_steps_per_instruction, 2.0);
        assert_eq!(s.avg_words_per_instruction, 5.0);
        assert_eq!(s.avg_words_per_definition, 3.0);
        assert_eq!((s.total_tasks, s.total_categories), (1, 1));
    }

    #[test]
    fn stats_excludes_uncovered_tasks_from_instruction_averages() {
        let tasks = vec![task("t1", &["A", "B"], "one two"), task("t2", &["B", "C"], "x")];
        let mut map = BTreeMap::new();
        map.insert("t2".to_string(), instr("t2", "1. x y z", &["x y z"]));
        let s = corpus_stats(&tasks, &map).unwrap();
        assert_eq!(s.total_tasks, 2);
        assert_eq!(s.total_categories, 3);
        assert_eq!(s.tasks_with_instruction, 1);
        assert_eq!(s.avg_words_per_instruction, 4.0);
        assert_eq!(s.avg_words_per_definition, 1.5);
    }

    #[test]
    fn stats_errors() {
        assert!(matches!(corpus_stats(&[], &BTreeMap::new()), Err(CorpusError::EmptyCorpus)));
        let mut map = BTreeMap::new();
        map.insert("zz".to_string(), instr("zz", "1. a", &["a"]));
        assert!(matches!(
            corpus_stats(&[task("t1", &["A"], "d")], &map),
            Err(CorpusError::UnknownInstructionTask(_))
        ));
    }
}
