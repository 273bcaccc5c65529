use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, Result};

/// Object-held-out partition of scenes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    pub held_out_objects: Vec<u32>,
    pub train_scenes: Vec<u32>,
    pub test_scenes: Vec<u32>,
}

impl SplitSpec {
    pub fn is_test(&self, scene_id: u32) -> bool {
        self.test_scenes.binary_search(&scene_id).is_ok()
    }
}

/// Draws `holdout_count` distinct object ids uniformly; a scene goes to the test
/// side iff it contains one of them. `scenes` pairs each scene id with the
/// object ids eligible for holding out.
pub fn split_dataset(scenes: &[(u32, Vec<u32>)], holdout_count: usize, seed: u64) -> Result<SplitSpec> {
    let objects: Vec<u32> = scenes.iter().flat_map(|(_, ids)| ids.iter().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    if holdout_count > objects.len() {
        return Err(DatasetError::Split(format!(
            "cannot hold out {holdout_count} objects, only {} distinct objects present",
            objects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held: Vec<u32> =
        rand::seq::index::sample(&mut rng, objects.len(), holdout_count).into_iter().map(|i| objects[i]).collect();
    held.sort_unstable();

    let (mut train, mut test) = (BTreeSet::new(), BTreeSet::new());
    for (scene, ids) in scenes {
        if ids.iter().any(|id| held.binary_search(id).is_ok()) {
            test.insert(*scene);
        } else {
            train.insert(*scene);
        }
    }
    if train.is_empty() {
        return Err(DatasetError::Split(format!(
            "holding out {holdout_count} objects leaves no training scenes; reduce the holdout count"
        )));
    }
    Ok(SplitSpec {
        seed,
        held_out_objects: held,
        train_scenes: train.into_iter().collect(),
        test_scenes: test.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenes() -> Vec<(u32, Vec<u32>)> {
        vec![(0, vec![1, 2]), (1, vec![3]), (2, vec![2, 4]), (3, vec![5])]
    }

    #[test]
    fn zero_holdout_keeps_everything_for_training() {
        let s = split_dataset(&scenes(), 0, 1).unwrap();
        assert_eq!(s.train_scenes, vec![0, 1, 2, 3]);
        assert!(s.test_scenes.is_empty());
    }

    #[test]
    fn shared_object_empties_training() {
        let all = vec![(0, vec![9, 1]), (1, vec![9])];
        assert!(split_dataset(&all, 2, 0).is_err());
        assert!(split_dataset(&scenes(), 6, 0).is_err());
    }

    #[test]
    fn test_iff_contains_held_out_object() {
        for seed in 0..20 {
            let Ok(s) = split_dataset(&scenes(), 2, seed) else { continue };
            assert_eq!(s, split_dataset(&scenes(), 2, seed).unwrap());
            for (id, objs) in scenes() {
                let has = objs.iter().any(|o| s.held_out_objects.contains(o));
                assert_eq!(has, s.is_test(id));
                assert_ne!(s.is_test(id), s.train_scenes.contains(&id));
            }
        }
    }
}
