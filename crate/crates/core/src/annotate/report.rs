//! Consensus, quadrant, win/lose/tie and agreement reports. All pure: they
//! recompute from the label log every time.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::campaign::derandomize;
use super::kappa::fleiss_kappa;
use super::{AnnotateError, AnnotationRecord, Campaign, CampaignKind, Label, PairLabel, Payload};

/// How labels from several raters of one item are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusRule {
    /// Binary flags: true when more than half the raters say true.
    /// Pairwise: the unique most frequent choice, otherwise tie.
    #[default]
    Majority,
    /// Binary flags: true only if every rater says true.
    /// Pairwise: the common choice if all agree, otherwise tie.
    Unanimous,
}

impl std::str::FromStr for ConsensusRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority" => Ok(ConsensusRule::Majority),
            "unanimous" => Ok(ConsensusRule::Unanimous),
            other => Err(format!("unknown consensus rule {other:?} (majority, unanimous)")),
        }
    }
}

/// What to do when assigned labels are missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncompletePolicy {
    #[default]
    Warn,
    Fail,
}

impl std::str::FromStr for IncompletePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warn" => Ok(IncompletePolicy::Warn),
            "fail" => Ok(IncompletePolicy::Fail),
            other => Err(format!("unknown policy {other:?} (warn, fail)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa_by_dimension: BTreeMap<String, f64>,
    pub n_items: usize,
    pub n_raters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadrants {
    pub n_items: usize,
    pub correct_complete: Cell,
    pub correct_incomplete: Cell,
    pub incorrect_complete: Cell,
    pub incorrect_incomplete: Cell,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

impl Quadrants {
    fn from_labels(labels: &[(bool, bool)]) -> Quadrants {
        let n = labels.len();
        let cell = |c: bool, k: bool| {
            let count = labels.iter().filter(|&&l| l == (c, k)).count();
            Cell { count, percent: percent(count, n) }
        };
        Quadrants {
            n_items: n,
            correct_complete: cell(true, true),
            correct_incomplete: cell(true, false),
            incorrect_complete: cell(false, true),
            incorrect_incomplete: cell(false, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionRates {
    pub n_items: usize,
    pub correct: f64,
    pub complete: f64,
}

impl DimensionRates {
    fn from_labels(labels: &[(bool, bool)]) -> DimensionRates {
        let n = labels.len();
        DimensionRates {
            n_items: n,
            correct: percent(labels.iter().filter(|l| l.0).count(), n),
            complete: percent(labels.iter().filter(|l| l.1).count(), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub campaign_id: String,
    pub consensus: ConsensusRule,
    pub overall: Quadrants,
    pub rates: DimensionRates,
    pub per_pool: BTreeMap<String, Quadrants>,
    pub per_category: BTreeMap<String, DimensionRates>,
    pub agreement: AgreementReport,
    pub complete: bool,
    pub missing_labels: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub campaign_id: String,
    pub consensus: ConsensusRule,
    /// The system whose wins are counted as "win".
    pub system_x: String,
    pub system_y: String,
    pub n_items: usize,
    pub win: Cell,
    pub lose: Cell,
    pub tie: Cell,
    pub agreement: AgreementReport,
    pub complete: bool,
    pub missing_labels: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Quality(QualityReport),
    Pairwise(PairwiseReport),
}

impl Report {
    pub fn build(
        campaign: &Campaign,
        records: &[AnnotationRecord],
        rule: ConsensusRule,
        policy: IncompletePolicy,
    ) -> Result<Report, AnnotateError> {
        match campaign.kind {
            CampaignKind::Quality => quality_report(records, campaign, rule, policy).map(Report::Quality),
            CampaignKind::Pairwise => pairwise_report(records, campaign, rule, policy).map(Report::Pairwise),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Report::Quality(r) => render_quality(r),
            Report::Pairwise(r) => render_pairwise(r),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProgress {
    pub assigned: usize,
    pub labeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub campaign_id: String,
    pub kind: CampaignKind,
    pub total_assignments: usize,
    pub labeled: usize,
    pub complete: bool,
    pub per_annotator: BTreeMap<String, AnnotatorProgress>,
}

/// Labels per item from assigned raters, in annotator order.
fn labels_by_item<'a>(
    campaign: &Campaign,
    records: &'a [AnnotationRecord],
) -> HashMap<&'a str, Vec<&'a AnnotationRecord>> {
    let mut map: HashMap<&str, Vec<&AnnotationRecord>> = HashMap::new();
    for r in records {
        if campaign.assigned(&r.annotator_id).contains(&r.item_id.as_str()) {
            map.entry(r.item_id.as_str()).or_default().push(r);
        }
    }
    for v in map.values_mut() {
        v.sort_by_key(|r| campaign.annotators.iter().position(|a| *a == r.annotator_id));
    }
    map
}

pub fn progress(campaign: &Campaign, records: &[AnnotationRecord]) -> Progress {
    let by_item = labels_by_item(campaign, records);
    let mut per_annotator = BTreeMap::new();
    for a in &campaign.annotators {
        let assigned = campaign.assigned(a);
        let labeled = assigned
            .iter()
            .filter(|i| by_item.get(*i).is_some_and(|v| v.iter().any(|r| &r.annotator_id == a)))
            .count();
        per_annotator.insert(a.clone(), AnnotatorProgress { assigned: assigned.len(), labeled });
    }
    let total_assignments = per_annotator.values().map(|p| p.assigned).sum();
    let labeled = per_annotator.values().map(|p| p.labeled).sum();
    Progress {
        campaign_id: campaign.campaign_id.clone(),
        kind: campaign.kind,
        total_assignments,
        labeled,
        complete: labeled == total_assignments,
        per_annotator,
    }
}

fn check_complete(
    campaign: &Campaign,
    records: &[AnnotationRecord],
    policy: IncompletePolicy,
) -> Result<(usize, Vec<String>), AnnotateError> {
    let p = progress(campaign, records);
    let missing = p.total_assignments - p.labeled;
    if missing == 0 {
        return Ok((0, Vec::new()));
    }
    match policy {
        IncompletePolicy::Fail => Err(AnnotateError::IncompleteCampaign {
            missing,
            total: p.total_assignments,
        }),
        IncompletePolicy::Warn => Ok((
            missing,
            vec![format!(
                "campaign incomplete: {missing} of {} assigned labels missing; tallies cover labelled items only",
                p.total_assignments
            )],
        )),
    }
}

fn binary_consensus(votes: &[bool], rule: ConsensusRule) -> bool {
    let yes = votes.iter().filter(|v| **v).count();
    match rule {
        ConsensusRule::Majority => 2 * yes > votes.len(),
        ConsensusRule::Unanimous => yes == votes.len(),
    }
}

fn pair_consensus(votes: &[PairLabel], rule: ConsensusRule) -> PairLabel {
    let count = |l: PairLabel| votes.iter().filter(|v| **v == l).count();
    match rule {
        ConsensusRule::Majority => {
            let counts = [(PairLabel::A, count(PairLabel::A)), (PairLabel::B, count(PairLabel::B)), (PairLabel::Tie, count(PairLabel::Tie))];
            let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
            let top: Vec<PairLabel> = counts.iter().filter(|c| c.1 == max).map(|c| c.0).collect();
            if top.len() == 1 {
                top[0]
            } else {
                PairLabel::Tie
            }
        }
        ConsensusRule::Unanimous => match votes.first() {
            Some(&first) if votes.iter().all(|v| *v == first) => first,
            _ => PairLabel::Tie,
        },
    }
}

/// Shared items that every annotator labelled, in campaign order.
fn fully_rated_shared<'a>(
    campaign: &'a Campaign,
    by_item: &HashMap<&str, Vec<&AnnotationRecord>>,
) -> Vec<&'a str> {
    campaign
        .shared_item_ids
        .iter()
        .map(String::as_str)
        .filter(|id| by_item.get(id).is_some_and(|v| v.len() == campaign.annotators.len()))
        .collect()
}

fn kappa_or_skip(
    table: &[Vec<u64>],
    dimension: &str,
    out: &mut BTreeMap<String, f64>,
) -> Result<(), AnnotateError> {
    if !table.is_empty() {
        out.insert(dimension.to_string(), fleiss_kappa(table)?);
    }
    Ok(())
}

pub fn quality_report(
    records: &[AnnotationRecord],
    campaign: &Campaign,
    rule: ConsensusRule,
    policy: IncompletePolicy,
) -> Result<QualityReport, AnnotateError> {
    if campaign.kind != CampaignKind::Quality {
        return Err(AnnotateError::KindMismatch(campaign.campaign_id.clone()));
    }
    let (missing_labels, warnings) = check_complete(campaign, records, policy)?;
    let by_item = labels_by_item(campaign, records);
    let flags = |id: &str| -> Vec<(bool, bool)> {
        by_item
            .get(id)
            .map(|v| {
                v.iter()
                    .filter_map(|r| match r.label {
                        Label::Quality { correct, complete } => Some((correct, complete)),
                        Label::Pairwise { .. } => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    };

    let mut all = Vec::new();
    let mut per_pool: BTreeMap<String, Vec<(bool, bool)>> = BTreeMap::new();
    let mut per_category: BTreeMap<String, Vec<(bool, bool)>> = BTreeMap::new();
    for item in &campaign.items {
        let votes = flags(&item.item_id);
        if votes.is_empty() {
            continue;
        }
        let correct: Vec<bool> = votes.iter().map(|v| v.0).collect();
        let complete: Vec<bool> = votes.iter().map(|v| v.1).collect();
        let label = (binary_consensus(&correct, rule), binary_consensus(&complete, rule));
        all.push(label);
        per_pool.entry(item.pool.clone()).or_default().push(label);
        for c in &item.payload.context().categories {
            per_category.entry(c.clone()).or_default().push(label);
        }
    }

    let shared = fully_rated_shared(campaign, &by_item);
    let row = |id: &str, pick: fn(&(bool, bool)) -> bool| {
        let yes = flags(id).iter().filter(|v| pick(v)).count() as u64;
        vec![yes, campaign.annotators.len() as u64 - yes]
    };
    let correct_table: Vec<Vec<u64>> = shared.iter().map(|id| row(id, |v| v.0)).collect();
    let complete_table: Vec<Vec<u64>> = shared.iter().map(|id| row(id, |v| v.1)).collect();
    let mut kappa_by_dimension = BTreeMap::new();
    kappa_or_skip(&correct_table, "correctness", &mut kappa_by_dimension)?;
    kappa_or_skip(&complete_table, "completeness", &mut kappa_by_dimension)?;

    Ok(QualityReport {
        campaign_id: campaign.campaign_id.clone(),
        consensus: rule,
        overall: Quadrants::from_labels(&all),
        rates: DimensionRates::from_labels(&all),
        per_pool: per_pool.iter().map(|(k, v)| (k.clone(), Quadrants::from_labels(v))).collect(),
        per_category: per_category
            .iter()
            .map(|(k, v)| (k.clone(), DimensionRates::from_labels(v)))
            .collect(),
        agreement: AgreementReport {
            kappa_by_dimension,
            n_items: shared.len(),
            n_raters: campaign.annotators.len(),
        },
        complete: missing_labels == 0,
        missing_labels,
        warnings,
    })
}

pub fn pairwise_report(
    records: &[AnnotationRecord],
    campaign: &Campaign,
    rule: ConsensusRule,
    policy: IncompletePolicy,
) -> Result<PairwiseReport, AnnotateError> {
    if campaign.kind != CampaignKind::Pairwise {
        return Err(AnnotateError::KindMismatch(campaign.campaign_id.clone()));
    }
    let (missing_labels, warnings) = check_complete(campaign, records, policy)?;
    let by_item = labels_by_item(campaign, records);
    let mut systems = (String::new(), String::new());
    let mut flips: HashMap<&str, bool> = HashMap::new();
    for item in &campaign.items {
        if let Payload::Pairwise { hidden, .. } = &item.payload {
            if systems.0.is_empty() {
                systems = (hidden.system_x.clone(), hidden.system_y.clone());
            }
            flips.insert(item.item_id.as_str(), hidden.flipped);
        }
    }
    let votes = |id: &str| -> Vec<PairLabel> {
        let flipped = flips.get(id).copied().unwrap_or(false);
        by_item
            .get(id)
            .map(|v| {
                v.iter()
                    .filter_map(|r| match r.label {
                        Label::Pairwise { choice } => Some(derandomize(choice, flipped)),
                        Label::Quality { .. } => None,
                    })
                    .collect()
            })
            .unwrap_or_default()
    };

    let (mut win, mut lose, mut tie) = (0, 0, 0);
    for item in &campaign.items {
        let v = votes(&item.item_id);
        if v.is_empty() {
            continue;
        }
        match pair_consensus(&v, rule) {
            PairLabel::A => win += 1,
            PairLabel::B => lose += 1,
            PairLabel::Tie => tie += 1,
        }
    }
    let n = win + lose + tie;

    let shared = fully_rated_shared(campaign, &by_item);
    let table: Vec<Vec<u64>> = shared
        .iter()
        .map(|id| {
            let v = votes(id);
            [PairLabel::A, PairLabel::B, PairLabel::Tie]
                .iter()
                .map(|l| v.iter().filter(|x| *x == l).count() as u64)
                .collect()
        })
        .collect();
    let mut kappa_by_dimension = BTreeMap::new();
    kappa_or_skip(&table, "preference", &mut kappa_by_dimension)?;

    Ok(PairwiseReport {
        campaign_id: campaign.campaign_id.clone(),
        consensus: rule,
        system_x: systems.0,
        system_y: systems.1,
        n_items: n,
        win: Cell { count: win, percent: percent(win, n) },
        lose: Cell { count: lose, percent: percent(lose, n) },
        tie: Cell { count: tie, percent: percent(tie, n) },
        agreement: AgreementReport {
            kappa_by_dimension,
            n_items: shared.len(),
            n_raters: campaign.annotators.len(),
        },
        complete: missing_labels == 0,
        missing_labels,
        warnings,
    })
}

fn write_agreement(out: &mut String, a: &AgreementReport) {
    if a.kappa_by_dimension.is_empty() {
        let _ = writeln!(out, "agreement: no fully rated shared items");
    }
    for (dim, k) in &a.kappa_by_dimension {
        let _ = writeln!(out, "fleiss kappa ({dim}): {k:.2} over {} items, {} raters", a.n_items, a.n_raters);
    }
}

pub fn render_quality(r: &QualityReport) -> String {
    let mut out = String::new();
    let q = &r.overall;
    let _ = writeln!(out, "campaign {} ({} items)", r.campaign_id, q.n_items);
    let _ = writeln!(out, "correct & complete     {:5.1}%", q.correct_complete.percent);
    let _ = writeln!(out, "correct & incomplete   {:5.1}%", q.correct_incomplete.percent);
    let _ = writeln!(out, "incorrect & complete   {:5.1}%", q.incorrect_complete.percent);
    let _ = writeln!(out, "incorrect & incomplete {:5.1}%", q.incorrect_incomplete.percent);
    let _ = writeln!(out, "correctness {:.1}%  completeness {:.1}%", r.rates.correct, r.rates.complete);
    write_agreement(&mut out, &r.agreement);
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

pub fn render_pairwise(r: &PairwiseReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "campaign {} ({} items): {} vs {}", r.campaign_id, r.n_items, r.system_x, r.system_y);
    let _ = writeln!(
        out,
        "win {:.1}%  lose {:.1}%  tie {:.1}%",
        r.win.percent, r.lose.percent, r.tie.percent
    );
    write_agreement(&mut out, &r.agreement);
    for w in &r.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn consensus_rules() {
        assert!(binary_consensus(&[true, true, false], ConsensusRule::Majority));
        assert!(!binary_consensus(&[true, false], ConsensusRule::Majority));
        assert!(!binary_consensus(&[true, true, false], ConsensusRule::Unanimous));
        use PairLabel::*;
        assert_eq!(pair_consensus(&[A, B, Tie], ConsensusRule::Majority), Tie);
        assert_eq!(pair_consensus(&[A, A, B], ConsensusRule::Majority), A);
        assert_eq!(pair_consensus(&[A, B], ConsensusRule::Majority), Tie);
        assert_eq!(pair_consensus(&[B], ConsensusRule::Majority), B);
        assert_eq!(pair_consensus(&[A, A, B], ConsensusRule::Unanimous), Tie);
    }

    #[test]
    fn quadrant_percentages() {
        let q = Quadrants::from_labels(&[(true, true), (true, true), (false, false), (true, false)]);
        assert_eq!(q.correct_complete.percent, 50.0);
        assert_eq!(q.correct_incomplete.count, 1);
        assert_eq!(q.incorrect_complete.count, 0);
        assert_eq!(q.incorrect_incomplete.percent, 25.0);
    }
}
