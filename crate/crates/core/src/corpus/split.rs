use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Corpus;

/// Disjoint train / validation / test sample indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl CorpusSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }

    /// Training and validation indices merged, for models that need no
    /// held-out data.
    pub fn train_and_validation(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }
}

pub(crate) fn split_sizes(n: usize, ratios: (f64, f64, f64)) -> Result<(usize, usize, usize)> {
    let (a, b, c) = ratios;
    let valid =
        [a, b, c].iter().all(|r| r.is_finite() && *r > 0.0) && (a + b + c - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(Error::InvalidRatios(ratios));
    }
    // The tiny slack keeps products like 10 * 0.6 = 6.000000000000001 and
    // 100 * 0.29 = 28.999999999999996 on the intended side of the floor.
    let floor = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let train = floor(a);
    let validation = floor(b).min(n - train);
    Ok((train, validation, n - train - validation))
}

/// Uniform random partition; sizes are `floor(N * r)` for train and
/// validation and the remainder goes to test.
pub fn split_corpus(corpus: &Corpus, ratios: (f64, f64, f64), seed: u64) -> Result<CorpusSplit> {
    let n = corpus.len();
    let (n_train, n_val, _) = split_sizes(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(CorpusSplit {
        train,
        validation,
        test,
    })
}
