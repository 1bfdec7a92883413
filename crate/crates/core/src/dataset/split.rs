use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RecordingRow;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPolicy {
    #[default]
    RandomStratified,
    SubjectHoldout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub policy: SplitPolicy,
    /// Share of items (stratified) or subjects (holdout) in the training set.
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            policy: SplitPolicy::RandomStratified,
            train_fraction: 0.8,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie in (0, 1], got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

/// Anything that can be split: it has a subject and possibly a class.
pub trait SplitItem {
    fn subject(&self) -> &str;
    fn class(&self) -> Option<usize>;
}

impl SplitItem for RecordingRow {
    fn subject(&self) -> &str {
        &self.subject_id
    }

    fn class(&self) -> Option<usize> {
        self.label_emotion.map(usize::from)
    }
}

/// Indices into the input, each list ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn make_split<T: SplitItem>(items: &[T], spec: &SplitSpec, seed: u64) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    match spec.policy {
        SplitPolicy::RandomStratified => {
            let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
            for (i, item) in items.iter().enumerate() {
                groups.entry(item.class()).or_default().push(i);
            }
            for (_, mut idx) in groups {
                idx.shuffle(&mut rng);
                let take = (spec.train_fraction * idx.len() as f64).round() as usize;
                train.extend_from_slice(&idx[..take.min(idx.len())]);
            }
        }
        SplitPolicy::SubjectHoldout => {
            let subjects: BTreeSet<&str> = items.iter().map(SplitItem::subject).collect();
            let mut subjects: Vec<&str> = subjects.into_iter().collect();
            subjects.shuffle(&mut rng);
            let n = subjects.len();
            let mut take = (spec.train_fraction * n as f64).round() as usize;
            if spec.train_fraction < 1.0 && n >= 2 {
                take = take.clamp(1, n - 1);
            }
            let chosen: BTreeSet<&str> = subjects[..take.min(n)].iter().copied().collect();
            train.extend(
                items
                    .iter()
                    .enumerate()
                    .filter(|(_, it)| chosen.contains(it.subject()))
                    .map(|(i, _)| i),
            );
        }
    }
    train.sort_unstable();
    let in_train: BTreeSet<usize> = train.iter().copied().collect();
    let test = (0..items.len()).filter(|i| !in_train.contains(i)).collect();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    struct Item(String, Option<usize>);

    impl SplitItem for Item {
        fn subject(&self) -> &str {
            &self.0
        }
        fn class(&self) -> Option<usize> {
            self.1
        }
    }

    fn balanced(n: usize) -> Vec<Item> {
        (0..n)
            .map(|i| Item(format!("s{}", i % 10), Some(i % 2)))
            .collect()
    }

    #[test]
    fn stratified_eighty_twenty() {
        let items = balanced(100);
        let s = make_split(&items, &SplitSpec::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (80, 20));
        let count = |idx: &[usize], c| idx.iter().filter(|&&i| items[i].1 == Some(c)).count();
        assert_eq!((count(&s.train, 0), count(&s.train, 1)), (40, 40));
        assert_eq!((count(&s.test, 0), count(&s.test, 1)), (10, 10));
    }

    #[test]
    fn subject_holdout_disjoint() {
        let items = balanced(100);
        let spec = SplitSpec {
            policy: SplitPolicy::SubjectHoldout,
            train_fraction: 0.8,
        };
        let s = make_split(&items, &spec, 9).unwrap();
        let a: BTreeSet<&str> = s.train.iter().map(|&i| items[i].subject()).collect();
        let b: BTreeSet<&str> = s.test.iter().map(|&i| items[i].subject()).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!((a.len(), b.len()), (8, 2));
    }

    #[test]
    fn same_seed_same_split() {
        let items = balanced(57);
        for policy in [SplitPolicy::RandomStratified, SplitPolicy::SubjectHoldout] {
            let spec = SplitSpec {
                policy,
                train_fraction: 0.7,
            };
            assert_eq!(
                make_split(&items, &spec, 4).unwrap(),
                make_split(&items, &spec, 4).unwrap()
            );
        }
    }

    #[test]
    fn full_fraction_keeps_everything() {
        let items = balanced(10);
        let spec = SplitSpec {
            train_fraction: 1.0,
            ..Default::default()
        };
        let s = make_split(&items, &spec, 0).unwrap();
        assert_eq!(s.train.len(), 10);
        assert!(s.test.is_empty());
    }

    proptest! {
        #[test]
        fn partition_property(
            classes in prop::collection::vec(prop::option::of(0usize..4), 0..80),
            frac in 0.05f64..=1.0,
            holdout in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let items: Vec<Item> = classes
                .iter()
                .enumerate()
                .map(|(i, c)| Item(format!("s{}", i % 7), *c))
                .collect();
            let spec = SplitSpec {
                policy: if holdout { SplitPolicy::SubjectHoldout } else { SplitPolicy::RandomStratified },
                train_fraction: frac,
            };
            let s = make_split(&items, &spec, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..items.len()).collect::<Vec<_>>());
            if !holdout {
                let mut groups: BTreeMap<Option<usize>, (usize, usize)> = BTreeMap::new();
                for &i in &s.train { groups.entry(items[i].1).or_default().0 += 1; }
                for &i in &s.test { groups.entry(items[i].1).or_default().1 += 1; }
                for (_, (tr, te)) in groups {
                    let expected = frac * (tr + te) as f64;
                    prop_assert!((tr as f64 - expected).abs() <= 1.0);
                }
            }
        }
    }
}
