use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{GateError, Result};

/// Stratified k-fold assignment. Returns the held-out indices of each fold,
/// sorted ascending.
///
/// Each class is shuffled independently with the given seed and dealt
/// round-robin, so fold sizes per class differ by at most one. Fails with
/// `DegenerateFold` when a class has fewer than `k` members.
pub fn stratified_kfold(z: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(GateError::InvalidInput(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for class in [false, true] {
        let mut idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] == class).collect();
        if idx.len() < k {
            return Err(GateError::DegenerateFold(format!(
                "class z={} has {} members, fewer than {k} folds",
                u8::from(class),
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[(pos + offset) % k].push(i);
        }
        // Continue dealing where the previous class stopped to balance totals.
        offset = (offset + z.iter().filter(|&&v| v == class).count()) % k;
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Complement of a held-out fold.
pub fn train_indices(n: usize, held_out: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held_out {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}
