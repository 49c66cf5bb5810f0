//! Zero-shot train/test partitions: no interaction category appears on both sides.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::HoiSample;
use crate::error::{IaError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryKey {
    /// `(interaction, object)` pairs, e.g. `ride bicycle`.
    InteractionPair,
    /// The interaction verb alone.
    ActionOnly,
}

impl CategoryKey {
    pub fn category(&self, sample: &HoiSample) -> String {
        match self {
            CategoryKey::InteractionPair => {
                format!("{}|{}", sample.interaction_label, sample.object_label)
            }
            CategoryKey::ActionOnly => sample.interaction_label.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub category_key: CategoryKey,
    pub seed: u64,
}

/// Default share of categories held out for testing.
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Holds out `ceil(test_fraction * n_categories)` categories (at least one on
/// each side), chosen by a seeded shuffle. Sample ids keep input order.
pub fn make_zeroshot_split(
    samples: &[HoiSample],
    key: CategoryKey,
    seed: u64,
    test_fraction: f64,
) -> Result<SplitManifest> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IaError::arg(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let categories: BTreeSet<String> = samples.iter().map(|s| key.category(s)).collect();
    if categories.len() < 2 {
        return Err(IaError::Split(format!(
            "need at least 2 distinct categories, found {}",
            categories.len()
        )));
    }
    let mut order: Vec<String> = categories.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((test_fraction * order.len() as f64).ceil() as usize).clamp(1, order.len() - 1);
    let held_out: BTreeSet<&String> = order[..n_test].iter().collect();

    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for s in samples {
        if held_out.contains(&key.category(s)) {
            test_ids.push(s.sample_id.clone());
        } else {
            train_ids.push(s.sample_id.clone());
        }
    }
    Ok(SplitManifest {
        train_ids,
        test_ids,
        category_key: key,
        seed,
    })
}

impl SplitManifest {
    /// Checks id and category disjointness against the samples the ids refer to.
    pub fn validate(&self, samples: &[HoiSample]) -> Result<()> {
        let train: BTreeSet<&String> = self.train_ids.iter().collect();
        let shared: Vec<String> = self
            .test_ids
            .iter()
            .filter(|id| train.contains(id))
            .cloned()
            .collect();
        if !shared.is_empty() {
            return Err(IaError::Split(format!(
                "ids on both sides: {}",
                shared.join(", ")
            )));
        }
        let by_id: HashMap<&str, &HoiSample> =
            samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        let cats = |ids: &[String]| -> Result<BTreeSet<String>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|s| self.category_key.category(s))
                        .ok_or_else(|| IaError::Split(format!("unknown sample id {id}")))
                })
                .collect()
        };
        let (train_c, test_c) = (cats(&self.train_ids)?, cats(&self.test_ids)?);
        let overlap: Vec<&String> = train_c.intersection(&test_c).collect();
        if !overlap.is_empty() {
            return Err(IaError::Split(format!(
                "categories seen on both sides: {overlap:?}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::sample::BBox;
    use proptest::prelude::*;

    fn sample(id: &str, verb: &str, obj: &str) -> HoiSample {
        HoiSample {
            sample_id: id.into(),
            image_path: format!("{id}.png"),
            width: 64,
            height: 64,
            human_box: BBox::new(0., 0., 10., 10.),
            object_box: BBox::new(5., 5., 20., 20.),
            object_label: obj.into(),
            interaction_label: verb.into(),
        }
    }

    #[test]
    fn two_categories_are_forced_apart() {
        let s = [sample("a", "ride", "bicycle"), sample("b", "eat", "apple")];
        let m = make_zeroshot_split(&s, CategoryKey::InteractionPair, 0, 0.2).unwrap();
        assert_eq!((m.train_ids.len(), m.test_ids.len()), (1, 1));
        m.validate(&s).unwrap();
    }

    #[test]
    fn single_category_is_a_split_error() {
        let s = [sample("a", "ride", "bicycle"), sample("b", "ride", "bicycle")];
        assert!(matches!(
            make_zeroshot_split(&s, CategoryKey::InteractionPair, 0, 0.2),
            Err(IaError::Split(_))
        ));
    }

    #[test]
    fn same_seed_same_manifest() {
        let s = [
            sample("a", "ride", "bicycle"),
            sample("b", "eat", "apple"),
            sample("c", "ride", "bicycle"),
            sample("d", "eat", "apple"),
        ];
        let m1 = make_zeroshot_split(&s, CategoryKey::ActionOnly, 7, 0.2).unwrap();
        let m2 = make_zeroshot_split(&s, CategoryKey::ActionOnly, 7, 0.2).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn hundred_samples_over_ten_categories_are_disjoint() {
        let verbs = ["ride", "eat", "hold", "throw", "kick"];
        let objs = ["ball", "apple"];
        let s: Vec<HoiSample> = (0..100)
            .map(|i| sample(&format!("s{i}"), verbs[i % 5], objs[(i / 5) % 2]))
            .collect();
        let m = make_zeroshot_split(&s, CategoryKey::InteractionPair, 3, 0.2).unwrap();
        let by_id: HashMap<&str, &HoiSample> = s.iter().map(|x| (x.sample_id.as_str(), x)).collect();
        let cat = |id: &String| CategoryKey::InteractionPair.category(by_id[id.as_str()]);
        // exhaustive pairwise check, independent of `validate`
        for a in &m.train_ids {
            for b in &m.test_ids {
                assert_ne!(cat(a), cat(b));
            }
        }
        assert_eq!(m.train_ids.len() + m.test_ids.len(), 100);
        let test_cats: BTreeSet<String> = m.test_ids.iter().map(cat).collect();
        assert_eq!(test_cats.len(), 2); // ceil(0.2 * 10)
    }

    proptest! {
        #[test]
        fn every_split_is_category_disjoint(
            seed in any::<u64>(),
            cats in proptest::collection::vec((0u8..6, 0u8..4), 2..60),
        ) {
            let s: Vec<HoiSample> = cats
                .iter()
                .enumerate()
                .map(|(i, (v, o))| sample(&format!("s{i}"), &format!("v{v}"), &format!("o{o}")))
                .collect();
            for key in [CategoryKey::InteractionPair, CategoryKey::ActionOnly] {
                match make_zeroshot_split(&s, key, seed, 0.2) {
                    Ok(m) => {
                        m.validate(&s).unwrap();
                        prop_assert_eq!(m.train_ids.len() + m.test_ids.len(), s.len());
                    }
                    Err(IaError::Split(_)) => {
                        let distinct: BTreeSet<String> = s.iter().map(|x| key.category(x)).collect();
                        prop_assert!(distinct.len() < 2);
                    }
                    Err(e) => panic!("unexpected {e}"),
                }
            }
        }
    }
}
