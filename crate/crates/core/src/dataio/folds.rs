use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    /// Ids assigned to `fold`, in sorted order.
    pub fn members(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Seeded shuffle followed by round-robin assignment. The input order does not
/// matter: ids are sorted before shuffling.
pub fn split_folds<S: AsRef<str>>(ids: &[S], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(invalid!("fold count must be >= 2, got {k}"));
    }
    if ids.len() < k {
        return Err(invalid!("{} samples cannot fill {k} folds", ids.len()));
    }
    let mut sorted: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(invalid!("duplicate sample id '{}'", w[0]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let assignments = sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    Ok(FoldSplit { k, assignments })
}
