use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{SentenceEncoder, SentenceVector};
use crate::error::{Error, Result};
use crate::numerics::{cosine, euclidean_distance};

/// Added to distances before inversion so exact matches score `1 / EPS`.
pub const SCORE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NnDistance {
    #[default]
    Euclidean,
    /// `1 - cosine similarity`.
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NnAggregate {
    #[default]
    Min,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NnOptions {
    pub distance: NnDistance,
    pub aggregate: NnAggregate,
}

/// Per-app profiles: the sentence vectors of every example mentioning the
/// app. `apps` lists every rankable app, including ones without a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct AppProfileIndex {
    pub dim: usize,
    pub options: NnOptions,
    pub apps: Vec<String>,
    pub profiles: BTreeMap<String, Vec<Vec<f64>>>,
}

impl AppProfileIndex {
    pub fn new<I, S>(dim: usize, apps: I, options: NnOptions) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut apps: Vec<String> = apps.into_iter().map(Into::into).collect();
        apps.sort();
        apps.dedup();
        Self {
            dim,
            options,
            apps,
            profiles: BTreeMap::new(),
        }
    }

    pub fn profile(&self, app: &str) -> Option<&[Vec<f64>]> {
        self.profiles.get(app).map(Vec::as_slice)
    }

    pub(crate) fn insert(&mut self, vector: &[f64], labels: &[String]) {
        for app in labels {
            if let Err(pos) = self.apps.binary_search(app) {
                self.apps.insert(pos, app.clone());
            }
            self.profiles
                .entry(app.clone())
                .or_default()
                .push(vector.to_vec());
        }
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self.options.distance {
            NnDistance::Euclidean => euclidean_distance(a, b),
            NnDistance::Cosine => 1.0 - cosine(a, b),
        }
    }

    fn app_score(&self, app: &str, query: &[f64]) -> f64 {
        let Some(profile) = self.profiles.get(app) else {
            return 0.0;
        };
        let dists = profile.iter().map(|v| self.distance(query, v));
        let d = match self.options.aggregate {
            NnAggregate::Min => dists.fold(f64::INFINITY, f64::min),
            NnAggregate::Mean => dists.sum::<f64>() / profile.len() as f64,
        };
        1.0 / (d + SCORE_EPS)
    }
}

/// One profile entry per (example, app) pair.
pub fn nn_index_build<'a, E, I>(
    encoder: &E,
    known_apps: &[String],
    examples: I,
    options: NnOptions,
) -> AppProfileIndex
where
    E: SentenceEncoder + ?Sized,
    I: IntoIterator<Item = (&'a str, &'a [String])>,
{
    let mut index = AppProfileIndex::new(encoder.dim(), known_apps.iter().cloned(), options);
    for (text, labels) in examples {
        index.insert(&encoder.encode(text).values, labels);
    }
    index
}

pub fn nn_add_example<E: SentenceEncoder + ?Sized>(
    index: &mut AppProfileIndex,
    encoder: &E,
    text: &str,
    labels: &[String],
) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::EmptyLabelSet(text.to_string()));
    }
    if encoder.dim() != index.dim {
        return Err(Error::shape(index.dim, encoder.dim()));
    }
    index.insert(&encoder.encode(text).values, labels);
    Ok(())
}

/// Top-`n` apps by inverse aggregated distance; apps without a profile
/// score 0 and ties go to the smaller id.
pub fn nn_predict(
    index: &AppProfileIndex,
    query: &SentenceVector,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    if query.values.len() != index.dim {
        return Err(Error::shape(index.dim, query.values.len()));
    }
    let mut scored: Vec<(String, f64)> = index
        .apps
        .iter()
        .map(|a| (a.clone(), index.app_score(a, &query.values)))
        .collect();
    // `apps` is sorted, so a stable sort keeps id order among equal scores.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored.truncate(n);
    Ok(scored)
}
