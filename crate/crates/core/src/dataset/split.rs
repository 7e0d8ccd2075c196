use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::toy::Component;
use super::Dataset;
use crate::error::{Error, Result};

/// Partitions the samples so that no painter appears on both sides.
///
/// The test side holds `max(1, round(test_fraction * P))` painters (at most
/// `P - 1`), chosen by a permutation seeded with `seed`.
pub fn split_by_painter(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut painters: Vec<usize> = dataset.painters_present().into_iter().collect();
    if dataset.painter_count() < 2 || painters.len() < 2 {
        return Err(Error::Data(
            "a painter-disjoint split needs at least two painters".into(),
        ));
    }
    let wanted = (test_fraction * dataset.painter_count() as f64).round() as usize;
    let n_test = wanted.max(1).min(painters.len() - 1);
    painters.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test: BTreeSet<usize> = painters[..n_test].iter().copied().collect();
    Ok((
        dataset.filter(|s| !test.contains(&s.painter_label)),
        dataset.filter(|s| test.contains(&s.painter_label)),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionOption {
    /// Test classes only use components that occur in training classes.
    Recombination,
    /// Every test class has a component that no training class uses.
    NovelComponents,
}

/// Class-extension split over a corpus with component metadata.
///
/// * `Recombination`: the first `train_class_count` classes train; the test
///   side holds every other class whose components all occur in training.
/// * `NovelComponents`: held-out component sets are tried smallest first,
///   preferring components that appear latest in class order. For the first
///   set with enough classes avoiding it, the first `train_class_count` of
///   those classes train and every class using a held-out component tests.
///
/// Classes that fit neither side are dropped. All painters stay on both sides.
pub fn class_extension_split(
    dataset: &Dataset,
    train_class_count: usize,
    option: ExtensionOption,
) -> Result<(Dataset, Dataset)> {
    let compositions = dataset.compositions().ok_or_else(|| {
        Error::Data("class-extension splits need component metadata (toy corpus)".into())
    })?;
    if train_class_count == 0 || train_class_count >= dataset.class_count() {
        return Err(Error::InvalidArgument(format!(
            "train_class_count must be in 1..{}, got {train_class_count}",
            dataset.class_count()
        )));
    }
    let classes: Vec<usize> = dataset.classes_present().into_iter().collect();

    let (train, test): (BTreeSet<usize>, BTreeSet<usize>) = match option {
        ExtensionOption::Recombination => {
            if classes.len() <= train_class_count {
                return Err(Error::Data("no classes left for the test side".into()));
            }
            let train: BTreeSet<usize> = classes[..train_class_count].iter().copied().collect();
            let seen: BTreeSet<Component> = train
                .iter()
                .flat_map(|&c| compositions[c].component_set())
                .collect();
            let test = classes[train_class_count..]
                .iter()
                .copied()
                .filter(|&c| compositions[c].component_set().is_subset(&seen))
                .collect();
            (train, test)
        }
        ExtensionOption::NovelComponents => {
            let first_use = |comp: Component| {
                classes
                    .iter()
                    .position(|&c| compositions[c].contains(comp))
                    .unwrap_or(usize::MAX)
            };
            let mut order: Vec<Component> = Component::ALL.to_vec();
            order.sort_by_key(|&c| std::cmp::Reverse(first_use(c)));

            let mut found = None;
            'search: for size in 1..order.len() {
                for held in subsets(&order, size) {
                    let uses_held = |c: usize| held.iter().any(|&h| compositions[c].contains(h));
                    let avoiding: Vec<usize> = classes.iter().copied().filter(|&c| !uses_held(c)).collect();
                    let using: BTreeSet<usize> = classes.iter().copied().filter(|&c| uses_held(c)).collect();
                    if avoiding.len() >= train_class_count && !using.is_empty() {
                        found = Some((avoiding[..train_class_count].iter().copied().collect(), using));
                        break 'search;
                    }
                }
            }
            found.ok_or_else(|| {
                Error::Data(format!(
                    "no held-out component set leaves {train_class_count} training classes"
                ))
            })?
        }
    };
    if test.is_empty() {
        return Err(Error::Data(format!(
            "no test class satisfies the {option:?} constraint"
        )));
    }
    Ok((
        dataset.filter(|s| train.contains(&s.class_label)),
        dataset.filter(|s| test.contains(&s.class_label)),
    ))
}

/// k-subsets of `items` in lexicographic order of positions.
fn subsets(items: &[Component], k: usize) -> Vec<Vec<Component>> {
    fn rec(items: &[Component], k: usize, start: usize, cur: &mut Vec<Component>, out: &mut Vec<Vec<Component>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}
