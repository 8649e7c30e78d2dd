use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("cannot sample {requested} of {available} entries")]
    SampleTooLarge { requested: usize, available: usize },
    #[error("sample size must be at least 1")]
    EmptySample,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldError {
    #[error("k must be at least 1")]
    ZeroFolds,
    #[error("cannot split {entries} entries into {k} folds")]
    TooFewEntries { entries: usize, k: usize },
}

/// Seeded uniform sample of `n` indices out of `len`, without replacement,
/// in ascending order.
pub fn sample_indices(len: usize, n: usize, seed: u64) -> Result<Vec<usize>, SampleError> {
    if n == 0 {
        return Err(SampleError::EmptySample);
    }
    if n > len {
        return Err(SampleError::SampleTooLarge {
            requested: n,
            available: len,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, len, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

/// Seeded sample keeping the original dataset order.
pub fn sample<T: Clone>(entries: &[T], n: usize, seed: u64) -> Result<Vec<T>, SampleError> {
    Ok(sample_indices(entries.len(), n, seed)?
        .into_iter()
        .map(|i| entries[i].clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(Vec::len).collect()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }
}

/// Seeded shuffle, then contiguous chunks; the first `n % k` folds take one
/// extra entry.
pub fn split_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldPlan, FoldError> {
    if k == 0 {
        return Err(FoldError::ZeroFolds);
    }
    if ids.len() < k {
        return Err(FoldError::TooFewEntries { entries: ids.len(), k });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = ids.len() / k;
    let extra = ids.len() % k;
    let mut rest = shuffled.as_slice();
    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let (fold, tail) = rest.split_at(base + usize::from(i < extra));
        folds.push(fold.to_vec());
        rest = tail;
    }
    Ok(FoldPlan { seed, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample standard deviation (divisor k - 1); zero for a single fold.
    pub std: f64,
    pub mean_runtime: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no fold accuracies to aggregate")]
pub struct NoFolds;

/// Mean and sample std over fold accuracies, plus mean runtime per entry.
/// Sums run over sorted values so the result does not depend on fold order.
pub fn aggregate(fold_accuracies: &[f64], runtimes: &[f64]) -> Result<Aggregate, NoFolds> {
    if fold_accuracies.is_empty() {
        return Err(NoFolds);
    }
    let mut sorted = fold_accuracies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let k = sorted.len() as f64;

    let (mean, std) = if min == max {
        (min, 0.0)
    } else {
        let mean = (sorted.iter().sum::<f64>() / k).clamp(min, max);
        let mut squares: Vec<f64> = sorted.iter().map(|a| (a - mean).powi(2)).collect();
        squares.sort_by(f64::total_cmp);
        (mean, (squares.iter().sum::<f64>() / (k - 1.0)).sqrt())
    };

    let mean_runtime = if runtimes.is_empty() {
        0.0
    } else {
        let mut r = runtimes.to_vec();
        r.sort_by(f64::total_cmp);
        r.iter().sum::<f64>() / r.len() as f64
    };
    Ok(Aggregate { mean, std, mean_runtime })
}
