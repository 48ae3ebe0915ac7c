use rand::seq::SliceRandom;

use super::TrainError;
use crate::rng::Rng;

/// One cross-validation split; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Shuffles `0..n_items` with `seed` and cuts it into `k` validation folds
/// whose sizes differ by at most one.
pub fn kfold_split(n_items: usize, k: usize, seed: u64) -> Result<Vec<Fold>, TrainError> {
    if k < 2 || n_items < k {
        return Err(TrainError::Invalid(format!("cannot split {n_items} items into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n_items).collect();
    order.shuffle(&mut Rng::new(seed));
    let (base, extra) = (n_items / k, n_items % k);
    let mut start = 0;
    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut val = order[start..start + len].to_vec();
        val.sort_unstable();
        let mut train: Vec<usize> = order[..start].iter().chain(&order[start + len..]).copied().collect();
        train.sort_unstable();
        folds.push(Fold { train, val });
        start += len;
    }
    Ok(folds)
}
