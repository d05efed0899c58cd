//! Count metrics (MAE/RMSE) and k-fold cross-validation bookkeeping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Ground truth vs predicted count for one image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub y: f64,
    pub y_hat: f64,
}

/// Mean absolute count error. Panics on an empty record list.
pub fn mae(records: &[EvalRecord]) -> f64 {
    assert!(!records.is_empty(), "mae: empty record list");
    records.iter().map(|r| (r.y - r.y_hat).abs()).sum::<f64>() / records.len() as f64
}

/// Root mean squared count error. Panics on an empty record list.
pub fn rmse(records: &[EvalRecord]) -> f64 {
    assert!(!records.is_empty(), "rmse: empty record list");
    let ms = records
        .iter()
        .map(|r| (r.y - r.y_hat) * (r.y - r.y_hat))
        .sum::<f64>()
        / records.len() as f64;
    ms.sqrt()
}

/// Deterministic k-fold partition: seeded shuffle then round-robin.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn fold(&self, i: usize) -> &[String] {
        &self.folds[i]
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }

    /// Everything not in fold `i` (the training split).
    pub fn complement(&self, i: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

pub fn kfold_splits(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 || k > ids.len() {
        return Err(Error::Contract(format!(
            "k-fold: k = {k} must be in 1..={}",
            ids.len()
        )));
    }
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, id) in shuffled.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldPlan { k, seed, folds })
}

/// CSV with one row per record: `image_id,y,y_hat,abs_error`.
pub fn metrics_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("image_id,y,y_hat,abs_error\n");
    for r in records {
        out.push_str(&format!("{},{},{},{}\n", r.image_id, r.y, r.y_hat, (r.y - r.y_hat).abs()));
    }
    out
}

/// Fixed-width text table with per-image rows and summary metrics.
pub fn metrics_table(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:<20} {:>10} {:>12} {:>10}\n", "image", "truth", "predicted", "abs err"));
    for r in records {
        out.push_str(&format!(
            "{:<20} {:>10.2} {:>12.2} {:>10.2}\n",
            r.image_id,
            r.y,
            r.y_hat,
            (r.y - r.y_hat).abs()
        ));
    }
    out.push_str(&format!(
        "MAE {:.4}  RMSE {:.4}  ({} images)\n",
        mae(records),
        rmse(records),
        records.len()
    ));
    out
}
