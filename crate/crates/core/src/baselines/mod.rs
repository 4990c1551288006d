//! Non-episodic models: the majority ranking, the seen-label oracle bound,
//! the nearest-neighbour app-profile classifier and a feedforward network.

mod ffnn;
mod nn;

use std::cmp::Reverse;
use std::collections::BTreeSet;

use crate::corpus::LabelVocab;
use crate::error::{Error, Result};

pub use ffnn::{ffnn_forward, ffnn_threshold_predict, FfnnConfig, FfnnModel, OutputMode};
pub use nn::{
    nn_add_example, nn_index_build, nn_predict, AppProfileIndex, NnAggregate, NnDistance, NnOptions,
};

/// Apps ordered by descending training frequency, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MajorityModel {
    pub ranked: Vec<usize>,
}

impl MajorityModel {
    pub fn top(&self, n: usize) -> Vec<usize> {
        self.ranked.iter().take(n).copied().collect()
    }

    /// Appends majority-ranked apps not yet present until `ranking` holds
    /// `n` entries.
    pub fn pad(&self, ranking: &mut Vec<usize>, n: usize) {
        for &app in &self.ranked {
            if ranking.len() >= n {
                break;
            }
            if !ranking.contains(&app) {
                ranking.push(app);
            }
        }
    }
}

/// Frequency = number of training samples whose label set contains the app.
pub fn majority_rank<'a, I>(train_labels: I, vocab: &LabelVocab) -> Result<MajorityModel>
where
    I: IntoIterator<Item = &'a [usize]>,
{
    let mut freq = vec![0usize; vocab.len()];
    let mut n = 0;
    for labels in train_labels {
        n += 1;
        for &l in labels {
            freq[l] += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "majority baseline needs a non-empty training set".into(),
        ));
    }
    let mut ranked: Vec<usize> = (0..vocab.len()).collect();
    ranked.sort_by(|&a, &b| {
        (Reverse(freq[a]), vocab.name(a)).cmp(&(Reverse(freq[b]), vocab.name(b)))
    });
    Ok(MajorityModel { ranked })
}

/// The semi-perfect bound: the sample's own labels that occurred in
/// training (in majority order), padded from the majority list to `n`.
pub fn oracle_predict(
    actual: &[usize],
    train_label_set: &BTreeSet<usize>,
    majority: &MajorityModel,
    n: usize,
) -> Vec<usize> {
    let mut out: Vec<usize> = majority
        .ranked
        .iter()
        .filter(|a| actual.contains(a) && train_label_set.contains(a))
        .take(n)
        .copied()
        .collect();
    majority.pad(&mut out, n);
    out
}
