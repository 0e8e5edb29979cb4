use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How targets are grouped before stratification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bins {
    /// Three bins split at the empirical tertiles of the targets.
    Tertiles,
    /// Sorted thresholds; bin `i` holds targets with exactly `i` thresholds `<=` them.
    Thresholds(Vec<f64>),
}

impl Bins {
    /// Bin index of every target.
    pub fn assign(&self, targets: &[f64]) -> Result<Vec<usize>> {
        let thresholds = match self {
            Bins::Tertiles => {
                let mut sorted = targets.to_vec();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                vec![sorted[n / 3], sorted[2 * n / 3]]
            }
            Bins::Thresholds(t) => {
                if t.windows(2).any(|w| !(w[0] <= w[1])) {
                    return Err(Error::InvalidConfig(format!("bin thresholds {t:?} are not sorted")));
                }
                t.clone()
            }
        };
        Ok(targets
            .iter()
            .map(|&y| thresholds.iter().filter(|&&t| t <= y).count())
            .collect())
    }
}

/// Assigns each sample a fold in `0..k` so that every bin is spread over the
/// folds round-robin after a seeded shuffle.
pub fn stratified_folds(targets: &[f64], k: usize, bins: &Bins, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || targets.len() < k {
        return Err(Error::TooFewSamples { n: targets.len(), k });
    }
    let bin_of = bins.assign(targets)?;
    let n_bins = bin_of.iter().max().map_or(0, |b| b + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; targets.len()];
    let mut next = 0;
    for b in 0..n_bins {
        let mut members: Vec<usize> = (0..targets.len()).filter(|&i| bin_of[i] == b).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Hex SHA-256 of a fold assignment.
pub fn fold_hash(folds: &[usize]) -> String {
    let mut h = Sha256::new();
    for &f in folds {
        h.update((f as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
