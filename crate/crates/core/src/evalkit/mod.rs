//! Prediction scoring and aggregation.
//!
//! Each task is scored on its first `instances_per_task` instances in file
//! order. A missing prediction scores 0 and is listed in the outcome. Task
//! scores are instance means, category scores are means over member tasks
//! (a task counts once per category it belongs to), and the macro score is
//! the unweighted mean over tasks (or over categories, on request).

mod rouge;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::TaskRecord;

pub use rouge::{lcs_len, rouge_l, rouge_l_tokens, tokenize, RougeL};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction refers to unknown task {0}")]
    UnknownTask(String),
    #[error("prediction refers to unknown instance {instance_id} of task {task_id}")]
    UnknownInstance { task_id: String, instance_id: String },
    #[error("duplicate prediction for instance {instance_id} of task {task_id}")]
    DuplicatePrediction { task_id: String, instance_id: String },
    #[error("runs cover different tasks: {0}")]
    TaskMismatch(String),
    #[error("{path}:{line}: {reason}")]
    MalformedPrediction { path: String, line: usize, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub task_id: String,
    pub instance_id: String,
    pub output: String,
}

/// A prediction line before its task is resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPrediction {
    pub task_id: Option<String>,
    pub instance_id: String,
    pub output: String,
}

fn str_at<'a>(v: &'a Value, keys: &[&str]) -> Option<&'a str> {
    keys.iter().find_map(|k| v.pointer(k).and_then(Value::as_str))
}

/// Read a prediction file.
///
/// Accepted field names: `task_id` / `Task` / `task`; `instance_id` / `id` /
/// `Instance.id`; `output` / `prediction` / `Prediction`.
pub fn read_predictions(path: &Path) -> Result<Vec<RawPrediction>, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| EvalError::MalformedPrediction {
            path: path.display().to_string(),
            line: i + 1,
            reason,
        };
        let v: Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let instance_id = str_at(&v, &["/instance_id", "/id", "/Instance/id"])
            .ok_or_else(|| bad("no instance id".into()))?;
        let output = str_at(&v, &["/output", "/prediction", "/Prediction"])
            .ok_or_else(|| bad("no output".into()))?;
        out.push(RawPrediction {
            task_id: str_at(&v, &["/task_id", "/Task", "/task"]).map(str::to_string),
            instance_id: instance_id.to_string(),
            output: output.to_string(),
        });
    }
    Ok(out)
}

/// Attach task ids: explicit ids win, then the instance-id index of `tasks`,
/// then the `taskNNN` prefix before the first `-` of the instance id.
pub fn resolve_predictions(
    raw: Vec<RawPrediction>,
    tasks: &[TaskRecord],
) -> Result<Vec<Prediction>, EvalError> {
    let by_instance: HashMap<&str, &str> = tasks
        .iter()
        .flat_map(|t| t.instances.iter().map(move |i| (i.instance_id.as_str(), t.task_id.as_str())))
        .collect();
    raw.into_iter()
        .map(|p| {
            let task_id = match p.task_id {
                Some(t) => t,
                None => match by_instance.get(p.instance_id.as_str()) {
                    Some(t) => t.to_string(),
                    None => {
                        let prefix = p.instance_id.split('-').next().unwrap_or("");
                        tasks
                            .iter()
                            .find(|t| {
                                t.task_id == prefix
                                    || t.task_id.starts_with(&format!("{prefix}_"))
                            })
                            .map(|t| t.task_id.clone())
                            .ok_or_else(|| EvalError::UnknownTask(prefix.to_string()))?
                    }
                },
            };
            Ok(Prediction {
                task_id,
                instance_id: p.instance_id,
                output: p.output,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MacroMode {
    #[default]
    Tasks,
    Categories,
}

impl std::str::FromStr for MacroMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tasks" => Ok(MacroMode::Tasks),
            "categories" => Ok(MacroMode::Categories),
            other => Err(format!("unknown macro mode {other:?} (tasks, categories)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPrediction {
    pub task_id: String,
    pub instance_id: String,
}

/// Scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    /// task id -> instance id -> score
    pub per_instance: BTreeMap<String, BTreeMap<String, f64>>,
    pub per_task: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, f64>,
    #[serde(rename = "macro")]
    pub macro_score: f64,
    pub macro_mode: MacroMode,
    pub instances_per_task: usize,
    pub missing: Vec<MissingPrediction>,
    /// Predictions for instances beyond the first `instances_per_task`.
    pub ignored: usize,
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn category_means(
    per_task: &BTreeMap<String, f64>,
    tasks: &[TaskRecord],
) -> BTreeMap<String, (f64, usize)> {
    let mut members: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in tasks {
        if let Some(&score) = per_task.get(&t.task_id) {
            let unique: BTreeSet<&String> = t.categories.iter().collect();
            for c in unique {
                members.entry(c.clone()).or_default().push(score);
            }
        }
    }
    members
        .into_iter()
        .map(|(c, v)| {
            let n = v.len();
            (c, (mean(v), n))
        })
        .collect()
}

/// Score `predictions` against the references in `tasks`.
pub fn evaluate(
    predictions: &[Prediction],
    tasks: &[TaskRecord],
    instances_per_task: usize,
    macro_mode: MacroMode,
) -> Result<EvalOutcome, EvalError> {
    let task_index: HashMap<&str, &TaskRecord> =
        tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut by_key: HashMap<(&str, &str), &str> = HashMap::new();
    let mut ignored = 0;
    for p in predictions {
        let task = task_index
            .get(p.task_id.as_str())
            .ok_or_else(|| EvalError::UnknownTask(p.task_id.clone()))?;
        let pos = task
            .instances
            .iter()
            .position(|i| i.instance_id == p.instance_id)
            .ok_or_else(|| EvalError::UnknownInstance {
                task_id: p.task_id.clone(),
                instance_id: p.instance_id.clone(),
            })?;
        if by_key
            .insert((p.task_id.as_str(), p.instance_id.as_str()), p.output.as_str())
            .is_some()
        {
            return Err(EvalError::DuplicatePrediction {
                task_id: p.task_id.clone(),
                instance_id: p.instance_id.clone(),
            });
        }
        if pos >= instances_per_task {
            ignored += 1;
        }
    }

    let scored: Vec<(String, BTreeMap<String, f64>, Vec<MissingPrediction>)> = tasks
        .par_iter()
        .map(|task| {
            let mut scores = BTreeMap::new();
            let mut missing = Vec::new();
            for inst in task.instances.iter().take(instances_per_task) {
                let score = match by_key.get(&(task.task_id.as_str(), inst.instance_id.as_str())) {
                    Some(output) => rouge_l(output, &inst.references),
                    None => {
                        missing.push(MissingPrediction {
                            task_id: task.task_id.clone(),
                            instance_id: inst.instance_id.clone(),
                        });
                        0.0
                    }
                };
                scores.insert(inst.instance_id.clone(), score);
            }
            (task.task_id.clone(), scores, missing)
        })
        .collect();

    let mut per_instance = BTreeMap::new();
    let mut per_task = BTreeMap::new();
    let mut missing = Vec::new();
    for (task_id, scores, miss) in scored {
        if !scores.is_empty() {
            per_task.insert(task_id.clone(), mean(scores.values().copied()));
            per_instance.insert(task_id, scores);
        }
        missing.extend(miss);
    }
    let per_category: BTreeMap<String, f64> = category_means(&per_task, tasks)
        .into_iter()
        .map(|(c, (m, _))| (c, m))
        .collect();
    let macro_score = match macro_mode {
        MacroMode::Tasks => mean(per_task.values().copied()),
        MacroMode::Categories => mean(per_category.values().copied()),
    };
    Ok(EvalOutcome {
        per_instance,
        per_task,
        per_category,
        macro_score,
        macro_mode,
        instances_per_task,
        missing,
        ignored,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: String,
    pub mean: f64,
    pub n_tasks: usize,
}

/// Per-category means, sorted by category name.
pub fn category_report(outcome: &EvalOutcome, tasks: &[TaskRecord]) -> Vec<CategoryRow> {
    category_means(&outcome.per_task, tasks)
        .into_iter()
        .map(|(category, (mean, n_tasks))| CategoryRow { category, mean, n_tasks })
        .collect()
}

/// Percentage with one decimal, the way score tables print.
pub fn pct(score: f64) -> String {
    format!("{:.1}", score * 100.0)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                if i == 0 {
                    format!("{cell:<w$}", w = widths[i])
                } else {
                    format!("{cell:>w$}", w = widths[i])
                }
            })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// Plain-text report: category table followed by the macro score.
pub fn render_outcome(outcome: &EvalOutcome, tasks: &[TaskRecord]) -> String {
    let mut rows = vec![vec!["Category".to_string(), "Tasks".into(), "ROUGE-L".into()]];
    for r in category_report(outcome, tasks) {
        rows.push(vec![r.category, r.n_tasks.to_string(), pct(r.mean)]);
    }
    rows.push(vec![
        match outcome.macro_mode {
            MacroMode::Tasks => "Macro (tasks)".to_string(),
            MacroMode::Categories => "Macro (categories)".to_string(),
        },
        outcome.per_task.len().to_string(),
        pct(outcome.macro_score),
    ]);
    let mut out = aligned(&rows);
    if !outcome.missing.is_empty() {
        let _ = writeln!(out, "missing predictions (scored 0): {}", outcome.missing.len());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryDelta {
    pub category: String,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

/// `b` relative to `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub macro_a: f64,
    pub macro_b: f64,
    pub macro_delta: f64,
    pub per_category: Vec<CategoryDelta>,
    /// Tasks where `b` beats `a` by more than the tie threshold.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub tie_threshold: f64,
}

/// Compare two runs over the same tasks. Deltas are `b - a`; a task is a tie
/// when `|b - a| <= tie_threshold` (default 0: exact equality).
pub fn compare_runs(
    a: &EvalOutcome,
    b: &EvalOutcome,
    tie_threshold: f64,
) -> Result<DeltaReport, EvalError> {
    let ka: BTreeSet<&String> = a.per_task.keys().collect();
    let kb: BTreeSet<&String> = b.per_task.keys().collect();
    if ka != kb {
        let diff: Vec<&str> = ka.symmetric_difference(&kb).map(|s| s.as_str()).take(5).collect();
        return Err(EvalError::TaskMismatch(diff.join(", ")));
    }
    let ca: BTreeSet<&String> = a.per_category.keys().collect();
    let cb: BTreeSet<&String> = b.per_category.keys().collect();
    if ca != cb {
        return Err(EvalError::TaskMismatch("category sets differ".into()));
    }
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (task, sa) in &a.per_task {
        let d = b.per_task[task] - sa;
        if d.abs() <= tie_threshold {
            ties += 1;
        } else if d > 0.0 {
            wins += 1;
        } else {
            losses += 1;
        }
    }
    let per_category = a
        .per_category
        .iter()
        .map(|(c, &va)| {
            let vb = b.per_category[c];
            CategoryDelta { category: c.clone(), a: va, b: vb, delta: vb - va }
        })
        .collect();
    Ok(DeltaReport {
        macro_a: a.macro_score,
        macro_b: b.macro_score,
        macro_delta: b.macro_score - a.macro_score,
        per_category,
        wins,
        losses,
        ties,
        tie_threshold,
    })
}

pub fn render_delta(report: &DeltaReport) -> String {
    let signed = |d: f64| format!("{:+.1}", d * 100.0);
    let mut rows = vec![vec!["Category".to_string(), "A".into(), "B".into(), "B-A".into()]];
    for c in &report.per_category {
        rows.push(vec![c.category.clone(), pct(c.a), pct(c.b), signed(c.delta)]);
    }
    rows.push(vec!["Macro".into(), pct(report.macro_a), pct(report.macro_b), signed(report.macro_delta)]);
    let mut out = aligned(&rows);
    let _ = writeln!(out, "tasks: win {} / lose {} / tie {}", report.wins, report.losses, report.ties);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Instance;

    fn task(id: &str, cats: &[&str], refs: &[&str]) -> TaskRecord {
        TaskRecord {
            task_id: id.into(),
            name: id.into(),
            categories: cats.iter().map(|s| s.to_string()).collect(),
            definition: "d".into(),
            positive_examples: vec![],
            negative_examples: vec![],
            instances: refs
                .iter()
                .enumerate()
                .map(|(i, r)| Instance {
                    instance_id: format!("{id}-{i}"),
                    input: "x".into(),
                    references: vec![r.to_string()],
                })
                .collect(),
            source_path: String::new(),
        }
    }

    fn pred(t: &str, i: usize, out: &str) -> Prediction {
        Prediction { task_id: t.into(), instance_id: format!("{t}-{i}"), output: out.into() }
    }

    #[test]
    fn exact_match_single_instance() {
        let tasks = vec![task("t1", &["A"], &["yes"])];
        let o = evaluate(&[pred("t1", 0, "Yes")], &tasks, 100, MacroMode::Tasks).unwrap();
        assert_eq!(o.macro_score, 1.0);
        assert!(o.missing.is_empty());
    }

    #[test]
    fn missing_scores_zero_and_first_k_only() {
        let tasks = vec![task("t1", &["A"], &["a", "b", "c"])];
        let preds = vec![pred("t1", 0, "a"), pred("t1", 2, "c")];
        let o = evaluate(&preds, &tasks, 2, MacroMode::Tasks).unwrap();
        assert_eq!(o.per_task["t1"], 0.5);
        assert_eq!(o.missing.len(), 1);
        assert_eq!(o.missing[0].instance_id, "t1-1");
        assert_eq!(o.ignored, 1);
    }

    #[test]
    fn unknown_and_duplicate_predictions() {
        let tasks = vec![task("t1", &["A"], &["a"])];
        assert!(matches!(
            evaluate(&[pred("t9", 0, "a")], &tasks, 10, MacroMode::Tasks),
            Err(EvalError::UnknownTask(_))
        ));
        assert!(matches!(
            evaluate(&[pred("t1", 5, "a")], &tasks, 10, MacroMode::Tasks),
            Err(EvalError::UnknownInstance { .. })
        ));
        assert!(matches!(
            evaluate(&[pred("t1", 0, "a"), pred("t1", 0, "b")], &tasks, 10, MacroMode::Tasks),
            Err(EvalError::DuplicatePrediction { .. })
        ));
    }

    #[test]
    fn category_aggregation() {
        let tasks = vec![
            task("t1", &["A"], &["x y"]),
            task("t2", &["A", "B"], &["x y"]),
        ];
        // t1: "x" vs "x y" -> P=1, R=1/2, F=2/3. t2: exact -> 1.
        let preds = vec![pred("t1", 0, "x"), pred("t2", 0, "x y")];
        let o = evaluate(&preds, &tasks, 100, MacroMode::Tasks).unwrap();
        let rows = category_report(&o, &tasks);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].category, "A");
        assert_eq!(rows[0].n_tasks, 2);
        assert!((rows[0].mean - (2.0 / 3.0 + 1.0) / 2.0).abs() < 1e-12);
        assert_eq!((rows[1].category.as_str(), rows[1].mean, rows[1].n_tasks), ("B", 1.0, 1));
        let oc = evaluate(&preds, &tasks, 100, MacroMode::Categories).unwrap();
        assert!((oc.macro_score - ((2.0 / 3.0 + 1.0) / 2.0 + 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn compare_identical_and_mismatched() {
        let tasks = vec![task("t1", &["A"], &["a"]), task("t2", &["B"], &["b"])];
        let o = evaluate(&[pred("t1", 0, "a")], &tasks, 10, MacroMode::Tasks).unwrap();
        let d = compare_runs(&o, &o, 0.0).unwrap();
        assert_eq!(d.macro_delta, 0.0);
        assert!(d.per_category.iter().all(|c| c.delta == 0.0));
        assert_eq!((d.wins, d.losses, d.ties), (0, 0, 2));

        let other = evaluate(&[], &tasks[..1], 10, MacroMode::Tasks).unwrap();
        assert!(matches!(compare_runs(&o, &other, 0.0), Err(EvalError::TaskMismatch(_))));
    }

    #[test]
    fn resolves_task_ids() {
        let tasks = vec![task("task190_snli", &["A"], &["a"])];
        let raw = vec![
            RawPrediction { task_id: None, instance_id: "task190_snli-0".into(), output: "a".into() },
            RawPrediction { task_id: None, instance_id: "task190-abc".into(), output: "a".into() },
        ];
        let p = resolve_predictions(raw, &tasks).unwrap();
        assert!(p.iter().all(|p| p.task_id == "task190_snli"));
        let raw = vec![RawPrediction { task_id: None, instance_id: "task7-x".into(), output: "".into() }];
        assert!(matches!(resolve_predictions(raw, &tasks), Err(EvalError::UnknownTask(_))));
    }

    #[test]
    fn reads_alternate_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.jsonl");
        fs::write(
            &p,
            "{\"id\":\"a-1\",\"prediction\":\"x\"}\n{\"Task\":\"t\",\"Instance\":{\"id\":\"a-2\"},\"Prediction\":\"y\"}\n",
        )
        .unwrap();
        let r = read_predictions(&p).unwrap();
        assert_eq!(r[0], RawPrediction { task_id: None, instance_id: "a-1".into(), output: "x".into() });
        assert_eq!(r[1].task_id.as_deref(), Some("t"));
        assert_eq!(r[1].instance_id, "a-2");
    }

    #[test]
    fn macro_is_permutation_invariant() {
        let tasks = vec![task("t1", &["A"], &["a b c", "d e"]), task("t2", &["A"], &["f"])];
        let mut preds = vec![pred("t1", 0, "a c"), pred("t1", 1, "e"), pred("t2", 0, "g")];
        let o1 = evaluate(&preds, &tasks, 100, MacroMode::Tasks).unwrap();
        preds.reverse();
        let o2 = evaluate(&preds, &tasks, 100, MacroMode::Tasks).unwrap();
        assert_eq!(o1, o2);
    }
}
