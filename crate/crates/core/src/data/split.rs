//! Train/validation assignment under the compositional and few-shot
//! protocols.
//!
//! Compositional: verbs split into groups 1/2 and nouns into A/B.
//! Training sees `{1A, 2B}`, validation sees the swapped pairings
//! `{1B, 2A}`, so every verb-noun combination at validation time is
//! novel while all verbs and nouns individually were seen.
//!
//! Few-shot: pretrain on all base-verb instances, adapt on exactly `k`
//! seeded samples per novel verb, validate on remaining novel-verb
//! instances with nouns disjoint from the adaptation set whenever the
//! noun pool allows it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, shuffled_indices};
use crate::{Error, Result};

/// Label view of one clip, as consumed by the split builders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub id: usize,
    pub verb_id: u32,
    pub noun_id: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    Compositional {
        train_ids: Vec<usize>,
        val_ids: Vec<usize>,
        verbs_1: Vec<u32>,
        verbs_2: Vec<u32>,
        nouns_a: Vec<u32>,
        nouns_b: Vec<u32>,
        /// instances whose verb or noun fell outside every partition cell
        dropped: usize,
    },
    Fewshot {
        /// all base-verb instances, used for pretraining
        train_ids: Vec<usize>,
        /// exactly k per novel verb
        finetune_ids: Vec<usize>,
        /// remaining novel-verb instances
        val_ids: Vec<usize>,
        base_verbs: Vec<u32>,
        novel_verbs: Vec<u32>,
        k: usize,
        seed: u64,
        /// set when finetune/val noun disjointness was unattainable
        warning: Option<String>,
    },
}

impl SplitSpec {
    pub fn train_ids(&self) -> &[usize] {
        match self {
            SplitSpec::Compositional { train_ids, .. } => train_ids,
            SplitSpec::Fewshot { train_ids, .. } => train_ids,
        }
    }

    pub fn val_ids(&self) -> &[usize] {
        match self {
            SplitSpec::Compositional { val_ids, .. } => val_ids,
            SplitSpec::Fewshot { val_ids, .. } => val_ids,
        }
    }
}

fn disjoint(a: &[u32], b: &[u32]) -> bool {
    let sa: BTreeSet<_> = a.iter().collect();
    b.iter().all(|v| !sa.contains(v))
}

/// Assign instances by the swapped-pairing rule. Instances whose verb or
/// noun belongs to no partition side are dropped and counted.
pub fn make_compositional_split(
    instances: &[InstanceMeta],
    verb_partition: (&[u32], &[u32]),
    noun_partition: (&[u32], &[u32]),
) -> Result<SplitSpec> {
    let (v1, v2) = verb_partition;
    let (na, nb) = noun_partition;
    if v1.is_empty() || v2.is_empty() || na.is_empty() || nb.is_empty() {
        return Err(Error::Split(
            "verb and noun partitions must both be non-empty on both sides".into(),
        ));
    }
    if !disjoint(v1, v2) || !disjoint(na, nb) {
        return Err(Error::Split("partition sides must be disjoint".into()));
    }

    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    let mut dropped = 0usize;
    for inst in instances {
        let side_v = if v1.contains(&inst.verb_id) {
            Some(1)
        } else if v2.contains(&inst.verb_id) {
            Some(2)
        } else {
            None
        };
        let side_n = if na.contains(&inst.noun_id) {
            Some('a')
        } else if nb.contains(&inst.noun_id) {
            Some('b')
        } else {
            None
        };
        match (side_v, side_n) {
            (Some(1), Some('a')) | (Some(2), Some('b')) => train_ids.push(inst.id),
            (Some(1), Some('b')) | (Some(2), Some('a')) => val_ids.push(inst.id),
            _ => dropped += 1,
        }
    }
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::Split(format!(
            "degenerate compositional split: |train| = {}, |val| = {}",
            train_ids.len(),
            val_ids.len()
        )));
    }
    Ok(SplitSpec::Compositional {
        train_ids,
        val_ids,
        verbs_1: v1.to_vec(),
        verbs_2: v2.to_vec(),
        nouns_a: na.to_vec(),
        nouns_b: nb.to_vec(),
        dropped,
    })
}

/// Build the few-shot protocol sets. Sampling is uniform under `seed`;
/// the adaptation pool is restricted to the first half of the novel
/// nouns so validation nouns stay disjoint, falling back (with a
/// recorded warning) when a verb lacks enough instances there.
pub fn make_fewshot_split(
    instances: &[InstanceMeta],
    base_verbs: &[u32],
    novel_verbs: &[u32],
    k: usize,
    seed: u64,
) -> Result<SplitSpec> {
    if base_verbs.is_empty() || novel_verbs.is_empty() {
        return Err(Error::Split("base and novel verb sets must be non-empty".into()));
    }
    if !disjoint(base_verbs, novel_verbs) {
        return Err(Error::Split("base and novel verb sets must be disjoint".into()));
    }
    if k == 0 {
        return Err(Error::Split("k must be at least 1".into()));
    }

    let train_ids: Vec<usize> = instances
        .iter()
        .filter(|i| base_verbs.contains(&i.verb_id))
        .map(|i| i.id)
        .collect();

    // candidate adaptation nouns: first half of the novel-side noun pool
    let novel_nouns: BTreeSet<u32> = instances
        .iter()
        .filter(|i| novel_verbs.contains(&i.verb_id))
        .map(|i| i.noun_id)
        .collect();
    let novel_nouns: Vec<u32> = novel_nouns.into_iter().collect();
    let ft_pool: BTreeSet<u32> = novel_nouns
        .iter()
        .take(novel_nouns.len().div_ceil(2).max(1))
        .copied()
        .collect();

    let mut rng = rng_from_seed(seed);
    let mut finetune_ids = Vec::new();
    let mut warning: Option<String> = None;
    let mut ft_nouns_used: BTreeSet<u32> = BTreeSet::new();

    for &verb in novel_verbs {
        let all: Vec<&InstanceMeta> = instances.iter().filter(|i| i.verb_id == verb).collect();
        if all.len() < k + 1 {
            return Err(Error::Split(format!(
                "novel verb {verb} has {} instances, needs at least {}",
                all.len(),
                k + 1
            )));
        }
        let preferred: Vec<&InstanceMeta> = all
            .iter()
            .copied()
            .filter(|i| ft_pool.contains(&i.noun_id))
            .collect();
        let pool = if preferred.len() >= k {
            preferred
        } else {
            if warning.is_none() {
                warning = Some(format!(
                    "verb {verb}: only {} instances in the preferred noun pool, sampled from all nouns",
                    preferred.len()
                ));
            }
            all.clone()
        };
        let order = shuffled_indices(&mut rng, pool.len());
        for &oi in order.iter().take(k) {
            finetune_ids.push(pool[oi].id);
            ft_nouns_used.insert(pool[oi].noun_id);
        }
    }

    let finetune_set: BTreeSet<usize> = finetune_ids.iter().copied().collect();
    let mut val_ids = Vec::new();
    for inst in instances {
        if !novel_verbs.contains(&inst.verb_id) || finetune_set.contains(&inst.id) {
            continue;
        }
        if warning.is_none() && ft_nouns_used.contains(&inst.noun_id) {
            continue; // keep validation nouns disjoint from adaptation nouns
        }
        val_ids.push(inst.id);
    }

    for &verb in novel_verbs {
        let have = val_ids
            .iter()
            .filter(|&&id| {
                instances
                    .iter()
                    .any(|i| i.id == id && i.verb_id == verb)
            })
            .count();
        if have == 0 {
            return Err(Error::Split(format!(
                "novel verb {verb} has no validation instance left after sampling k = {k}"
            )));
        }
    }

    Ok(SplitSpec::Fewshot {
        train_ids,
        finetune_ids,
        val_ids,
        base_verbs: base_verbs.to_vec(),
        novel_verbs: novel_verbs.to_vec(),
        k,
        seed,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(verbs: u32, nouns: u32, reps: usize) -> Vec<InstanceMeta> {
        let mut out = Vec::new();
        let mut id = 0;
        for v in 0..verbs {
            for n in 0..nouns {
                for _ in 0..reps {
                    out.push(InstanceMeta {
                        id,
                        verb_id: v,
                        noun_id: n,
                    });
                    id += 1;
                }
            }
        }
        out
    }

    #[test]
    fn one_instance_per_cell_swaps_pairings() {
        let inst = grid(2, 2, 1);
        let split = make_compositional_split(&inst, (&[0], &[1]), (&[0], &[1])).unwrap();
        let SplitSpec::Compositional {
            train_ids, val_ids, ..
        } = &split
        else {
            panic!()
        };
        // train = {(0,0), (1,1)} = ids {0, 3}; val = {(0,1), (1,0)} = ids {1, 2}
        assert_eq!(train_ids, &[0, 3]);
        assert_eq!(val_ids, &[1, 2]);
    }

    #[test]
    fn empty_partition_side_is_a_split_error() {
        let inst = grid(2, 2, 1);
        assert!(matches!(
            make_compositional_split(&inst, (&[0], &[1]), (&[0, 1], &[])),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn full_grid_sizes_and_zero_pair_overlap() {
        let inst = grid(8, 12, 10);
        let split = make_compositional_split(
            &inst,
            (&[0, 1, 2, 3], &[4, 5, 6, 7]),
            (&[0, 1, 2, 3, 4, 5], &[6, 7, 8, 9, 10, 11]),
        )
        .unwrap();
        let SplitSpec::Compositional {
            train_ids,
            val_ids,
            dropped,
            ..
        } = &split
        else {
            panic!()
        };
        assert_eq!(train_ids.len(), 480);
        assert_eq!(val_ids.len(), 480);
        assert_eq!(*dropped, 0);

        let pair = |id: usize| (inst[id].verb_id, inst[id].noun_id);
        let train_pairs: BTreeSet<_> = train_ids.iter().map(|&i| pair(i)).collect();
        let val_pairs: BTreeSet<_> = val_ids.iter().map(|&i| pair(i)).collect();
        assert!(train_pairs.is_disjoint(&val_pairs));
        let overlap: Vec<usize> = train_ids
            .iter()
            .filter(|i| val_ids.contains(i))
            .copied()
            .collect();
        assert!(overlap.is_empty());
    }

    #[test]
    fn fewshot_counts_and_determinism() {
        let inst = grid(8, 12, 5);
        let split =
            make_fewshot_split(&inst, &[0, 1, 2, 3], &[4, 5, 6, 7], 5, 99).unwrap();
        let SplitSpec::Fewshot {
            finetune_ids,
            val_ids,
            train_ids,
            ..
        } = &split
        else {
            panic!()
        };
        assert_eq!(finetune_ids.len(), 20); // 4 novel verbs x k=5
        for verb in 4..8u32 {
            let n = finetune_ids
                .iter()
                .filter(|&&id| inst[id].verb_id == verb)
                .count();
            assert_eq!(n, 5, "verb {verb}");
        }
        // pretrain covers all base instances
        assert_eq!(train_ids.len(), 4 * 12 * 5);
        // disjointness of all three sets
        let f: BTreeSet<_> = finetune_ids.iter().collect();
        assert!(val_ids.iter().all(|id| !f.contains(id)));
        assert!(train_ids.iter().all(|id| !f.contains(id)));

        let again = make_fewshot_split(&inst, &[0, 1, 2, 3], &[4, 5, 6, 7], 5, 99).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn fewshot_noun_disjointness_when_pool_allows() {
        let inst = grid(8, 12, 5);
        let split = make_fewshot_split(&inst, &[0, 1, 2, 3], &[4, 5, 6, 7], 5, 3).unwrap();
        let SplitSpec::Fewshot {
            finetune_ids,
            val_ids,
            warning,
            ..
        } = &split
        else {
            panic!()
        };
        assert!(warning.is_none());
        let ft_nouns: BTreeSet<u32> = finetune_ids.iter().map(|&id| inst[id].noun_id).collect();
        let val_nouns: BTreeSet<u32> = val_ids.iter().map(|&id| inst[id].noun_id).collect();
        assert!(ft_nouns.is_disjoint(&val_nouns));
    }

    #[test]
    fn single_instance_novel_verb_is_a_split_error() {
        let mut inst = grid(2, 2, 3); // verbs 0, 1
        inst.push(InstanceMeta {
            id: inst.len(),
            verb_id: 2,
            noun_id: 0,
        });
        assert!(matches!(
            make_fewshot_split(&inst, &[0, 1], &[2], 1, 5),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn overlapping_verb_sets_rejected() {
        let inst = grid(4, 2, 2);
        assert!(make_fewshot_split(&inst, &[0, 1], &[1, 2], 1, 5).is_err());
    }
}
