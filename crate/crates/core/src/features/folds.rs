use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sequence indices of one fold, partitioned into train / validation / test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Fold {
    pub fn all(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplits {
    pub folds: Vec<Fold>,
}

/// Shuffles whole sequences into `fold_count` equal folds and splits each
/// fold by `ratios` (train, validation, test).
pub fn split_folds<R: Rng + ?Sized>(
    sequence_count: usize,
    fold_count: usize,
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<FoldSplits> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(*r >= 0.0)) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "split ratios {ratios:?} must be non-negative and sum to 1"
        )));
    }
    if fold_count == 0 {
        return Err(invalid("fold count must be positive"));
    }
    if sequence_count < fold_count || !sequence_count.is_multiple_of(fold_count) {
        return Err(invalid(format!(
            "{sequence_count} sequences cannot be divided into {fold_count} equal folds"
        )));
    }
    let per_fold = sequence_count / fold_count;
    let mut order: Vec<usize> = (0..sequence_count).collect();
    order.shuffle(rng);

    let n_train = (tr * per_fold as f64).round() as usize;
    let n_val = ((va * per_fold as f64).round() as usize).min(per_fold - n_train);

    let folds = order
        .chunks(per_fold)
        .enumerate()
        .map(|(id, chunk)| {
            let mut chunk = chunk.to_vec();
            chunk.shuffle(rng);
            Fold {
                id,
                train: chunk[..n_train].to_vec(),
                validation: chunk[n_train..n_train + n_val].to_vec(),
                test: chunk[n_train + n_val..].to_vec(),
            }
        })
        .collect();
    Ok(FoldSplits { folds })
}
