//! Campaign construction: shared sampling per pool, even partition of the rest.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use super::{
    AnnotateError, AnnotationItem, Campaign, CampaignKind, HiddenSides, PairLabel, Payload,
    TaskContext,
};
use crate::corpus::TaskRecord;
use crate::evalkit::Prediction;
use crate::rng::{derive_seed, shuffle, SplitMix64};
use crate::stepgen::StepInstruction;

/// A named group of items with its own shared quota.
#[derive(Debug, Clone)]
pub struct Pool {
    pub name: String,
    pub items: Vec<AnnotationItem>,
    pub shared: usize,
}

/// Sample `pool.shared` items from each pool (in pool order) as the shared
/// part, then shuffle the remainder and deal it round-robin across
/// annotators. Deterministic in `seed`.
pub fn build_campaign(
    campaign_id: &str,
    kind: CampaignKind,
    pools: Vec<Pool>,
    annotators: &[String],
    seed: u64,
) -> Result<Campaign, AnnotateError> {
    let distinct: BTreeSet<&String> = annotators.iter().collect();
    if annotators.len() < 2 || distinct.len() != annotators.len() {
        return Err(AnnotateError::TooFewAnnotators(distinct.len()));
    }
    let mut seen = HashSet::new();
    for pool in &pools {
        if pool.shared > pool.items.len() {
            return Err(AnnotateError::InsufficientItems {
                pool: pool.name.clone(),
                requested: pool.shared,
                available: pool.items.len(),
            });
        }
        for item in &pool.items {
            if item.payload.kind() != kind {
                return Err(AnnotateError::KindMismatch(item.item_id.clone()));
            }
            if !seen.insert(item.item_id.clone()) {
                return Err(AnnotateError::DuplicateItem(item.item_id.clone()));
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut shared = HashSet::new();
    let mut rest = Vec::new();
    for pool in &pools {
        let mut order: Vec<usize> = (0..pool.items.len()).collect();
        shuffle(&mut order, &mut rng);
        for (k, &i) in order.iter().enumerate() {
            let id = pool.items[i].item_id.clone();
            if k < pool.shared {
                shared.insert(id);
            } else {
                rest.push(id);
            }
        }
    }
    shuffle(&mut rest, &mut rng);
    let mut independent: BTreeMap<String, Vec<String>> =
        annotators.iter().map(|a| (a.clone(), Vec::new())).collect();
    for (k, id) in rest.into_iter().enumerate() {
        independent.get_mut(&annotators[k % annotators.len()]).unwrap().push(id);
    }

    let items: Vec<AnnotationItem> = pools.into_iter().flat_map(|p| p.items).collect();
    let shared_item_ids = items
        .iter()
        .filter(|i| shared.contains(&i.item_id))
        .map(|i| i.item_id.clone())
        .collect();
    Ok(Campaign {
        campaign_id: campaign_id.to_string(),
        kind,
        items,
        annotators: annotators.to_vec(),
        shared_item_ids,
        independent,
        seed,
    })
}

/// One quality item per instruction, id `<pool>:<task_id>`.
pub fn quality_items(
    pool: &str,
    instructions: &[StepInstruction],
    tasks: &[TaskRecord],
) -> Result<Vec<AnnotationItem>, AnnotateError> {
    let index: HashMap<&str, &TaskRecord> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    instructions
        .iter()
        .map(|si| {
            let task = index
                .get(si.task_id.as_str())
                .ok_or_else(|| AnnotateError::UnknownTask(si.task_id.clone()))?;
            Ok(AnnotationItem {
                item_id: format!("{pool}:{}", si.task_id),
                pool: pool.to_string(),
                payload: Payload::Quality {
                    context: TaskContext::from_task(task, 2),
                    instruction: si.clone(),
                },
            })
        })
        .collect()
}

/// Blinded comparison items for instances both systems predicted.
///
/// With `per_task = Some(k)`, k instances per task are sampled (seeded) and
/// kept in file order. Side assignment is drawn per item from `seed`.
pub fn pairwise_items(
    system_x: &str,
    preds_x: &[Prediction],
    system_y: &str,
    preds_y: &[Prediction],
    tasks: &[TaskRecord],
    per_task: Option<usize>,
    seed: u64,
) -> Result<Vec<AnnotationItem>, AnnotateError> {
    let key = |p: &Prediction| (p.task_id.clone(), p.instance_id.clone());
    let xs: HashMap<_, &str> = preds_x.iter().map(|p| (key(p), p.output.as_str())).collect();
    let ys: HashMap<_, &str> = preds_y.iter().map(|p| (key(p), p.output.as_str())).collect();
    let mut items = Vec::new();
    for task in tasks {
        let common: Vec<_> = task
            .instances
            .iter()
            .filter(|i| {
                let k = (task.task_id.clone(), i.instance_id.clone());
                xs.contains_key(&k) && ys.contains_key(&k)
            })
            .collect();
        let chosen: Vec<_> = match per_task {
            Some(k) if k < common.len() => {
                let mut idx: Vec<usize> = (0..common.len()).collect();
                shuffle(&mut idx, &mut SplitMix64::new(derive_seed(seed, &task.task_id)));
                let mut keep: Vec<usize> = idx.into_iter().take(k).collect();
                keep.sort_unstable();
                keep.into_iter().map(|i| common[i]).collect()
            }
            _ => common,
        };
        for inst in chosen {
            let k = (task.task_id.clone(), inst.instance_id.clone());
            let item_id = format!("{}/{}", task.task_id, inst.instance_id);
            let flipped = derive_seed(seed, &format!("sides:{item_id}")) & 1 == 1;
            let (a, b) = if flipped { (ys[&k], xs[&k]) } else { (xs[&k], ys[&k]) };
            items.push(AnnotationItem {
                item_id,
                pool: "test".into(),
                payload: Payload::Pairwise {
                    context: TaskContext::from_task(task, 2),
                    instance_id: inst.instance_id.clone(),
                    instance_input: inst.input.clone(),
                    prediction_a: a.to_string(),
                    prediction_b: b.to_string(),
                    hidden: HiddenSides {
                        system_x: system_x.to_string(),
                        system_y: system_y.to_string(),
                        flipped,
                    },
                },
            });
        }
    }
    if items.is_empty() {
        return Err(AnnotateError::NoPairs);
    }
    Ok(items)
}

/// Map a side label to system identity (`A` = system x, `B` = system y) or
/// back. Applying it twice with the same flag is the identity.
pub fn derandomize(label: PairLabel, flipped: bool) -> PairLabel {
    match (label, flipped) {
        (PairLabel::A, true) => PairLabel::B,
        (PairLabel::B, true) => PairLabel::A,
        (l, _) => l,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepgen::Provenance;
    use proptest::prelude::*;

    fn qitem(id: &str, pool: &str) -> AnnotationItem {
        AnnotationItem {
            item_id: id.into(),
            pool: pool.into(),
            payload: Payload::Quality {
                context: TaskContext {
                    task_id: id.into(),
                    categories: vec!["C".into()],
                    definition: "d".into(),
                    positive_examples: vec![],
                },
                instruction: StepInstruction::from_reply(id, "1. x", Provenance::Refined),
            },
        }
    }

    fn pool(name: &str, n: usize, shared: usize) -> Pool {
        Pool {
            name: name.into(),
            items: (0..n).map(|i| qitem(&format!("{name}{i}"), name)).collect(),
            shared,
        }
    }

    fn annotators(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn partition_and_shared_counts() {
        let pools = vec![pool("train", 60, 6), pool("test", 12, 2), pool("raw", 12, 2)];
        let c = build_campaign("c", CampaignKind::Quality, pools, &annotators(3), 42).unwrap();
        assert_eq!(c.shared_item_ids.len(), 10);
        let count = |p: &str| c.shared_item_ids.iter().filter(|s| s.starts_with(p)).count();
        assert_eq!((count("train"), count("test"), count("raw")), (6, 2, 2));
        let sizes: Vec<usize> = c.independent.values().map(Vec::len).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 74);
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<&String> = c.shared_item_ids.iter().chain(c.independent.values().flatten()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 84);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_campaign("c", CampaignKind::Quality, vec![pool("p", 3, 4)], &annotators(3), 1),
            Err(AnnotateError::InsufficientItems { .. })
        ));
        assert!(matches!(
            build_campaign("c", CampaignKind::Quality, vec![pool("p", 3, 1)], &annotators(1), 1),
            Err(AnnotateError::TooFewAnnotators(1))
        ));
        assert!(matches!(
            build_campaign("c", CampaignKind::Pairwise, vec![pool("p", 3, 1)], &annotators(2), 1),
            Err(AnnotateError::KindMismatch(_))
        ));
        assert!(matches!(
            build_campaign("c", CampaignKind::Quality, vec![pool("p", 3, 1), pool("p", 2, 0)], &annotators(2), 1),
            Err(AnnotateError::DuplicateItem(_))
        ));
    }

    #[test]
    fn deterministic_in_seed() {
        let a = build_campaign("c", CampaignKind::Quality, vec![pool("p", 30, 5)], &annotators(3), 7).unwrap();
        let b = build_campaign("c", CampaignKind::Quality, vec![pool("p", 30, 5)], &annotators(3), 7).unwrap();
        let c = build_campaign("c", CampaignKind::Quality, vec![pool("p", 30, 5)], &annotators(3), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.shared_item_ids, c.shared_item_ids);
    }

    #[test]
    fn derandomize_mapping() {
        assert_eq!(derandomize(PairLabel::A, true), PairLabel::B);
        assert_eq!(derandomize(PairLabel::A, false), PairLabel::A);
        assert_eq!(derandomize(PairLabel::Tie, true), PairLabel::Tie);
    }

    proptest! {
        #[test]
        fn derandomize_is_involution(l in prop::sample::select(vec![PairLabel::A, PairLabel::B, PairLabel::Tie]), f: bool) {
            prop_assert_eq!(derandomize(derandomize(l, f), f), l);
        }

        #[test]
        fn always_a_partition(n in 0usize..40, shared in 0usize..10, raters in 2usize..5, seed: u64) {
            let shared = shared.min(n);
            let c = build_campaign("c", CampaignKind::Quality, vec![pool("p", n, shared)], &annotators(raters), seed).unwrap();
            let indep: Vec<&String> = c.independent.values().flatten().collect();
            let uniq: BTreeSet<&String> = indep.iter().copied().collect();
            prop_assert_eq!(uniq.len(), indep.len());
            prop_assert!(c.shared_item_ids.iter().all(|s| !uniq.contains(s)));
            prop_assert_eq!(c.shared_item_ids.len() + indep.len(), n);
        }
    }
}
