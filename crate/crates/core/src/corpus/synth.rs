//! Keyword-compositional synthetic corpora.
//!
//! Every app owns a private set of keyword tokens, the first of which
//! always appears when the app is chosen. A sample picks a label set with
//! Zipf-skewed app popularity and writes 1-3 of each chosen app's keywords
//! plus shared filler words.
//!
//! The defaults give a separable corpus: one keyword per app, no filler
//! and uniform popularity. Extra keywords, filler and skew each make
//! nearest-neighbour and matching readouts noticeably harder.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Corpus, LabelVocab, Record};

const FILLER: &[&str] = &[
    "the", "a", "with", "for", "to", "my", "and", "some", "please", "today", "need", "want",
    "help", "me", "get", "on", "at", "this", "later", "quick", "find", "new", "our", "then",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_apps: usize,
    pub n_samples: usize,
    /// 0 gives uniform app popularity.
    pub zipf_exponent: f64,
    pub keywords_per_app: usize,
    /// Relative weight of label-set size `k = i + 1`.
    pub labels_per_sample: Vec<f64>,
    pub min_filler: usize,
    pub max_filler: usize,
    /// Probability that each label is swapped for a random other app after
    /// the text has been written.
    pub label_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_apps: 12,
            n_samples: 200,
            zipf_exponent: 0.0,
            keywords_per_app: 1,
            labels_per_sample: vec![0.4, 0.45, 0.1, 0.05],
            min_filler: 0,
            max_filler: 0,
            label_noise: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_apps < 2 {
            return bad("synth: n_apps must be at least 2");
        }
        if self.n_samples < self.n_apps {
            return Err(Error::InvalidConfig(format!(
                "synth: {} samples cannot cover {} apps",
                self.n_samples, self.n_apps
            )));
        }
        if self.keywords_per_app == 0 {
            return bad("synth: keywords_per_app must be positive");
        }
        if !(self.zipf_exponent.is_finite() && self.zipf_exponent >= 0.0) {
            return bad("synth: zipf_exponent must be finite and non-negative");
        }
        let w = &self.labels_per_sample;
        if w.is_empty()
            || w.iter().any(|x| !x.is_finite() || *x < 0.0)
            || w.iter().sum::<f64>() <= 0.0
        {
            return bad("synth: labels_per_sample needs non-negative weights with a positive sum");
        }
        let max_k = w.iter().rposition(|x| *x > 0.0).map_or(0, |i| i + 1);
        if max_k > self.n_apps {
            return bad("synth: label sets larger than n_apps");
        }
        if self.min_filler > self.max_filler {
            return bad("synth: min_filler exceeds max_filler");
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad("synth: label_noise must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn app_name(&self, app: usize) -> String {
        let width = (self.n_apps - 1).to_string().len().max(2);
        format!("app{app:0width$}")
    }

    pub fn keyword(&self, app: usize, j: usize) -> String {
        format!("{}k{j}", self.app_name(app))
    }
}

fn weighted_pick<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zipf rank of each app; decoupled from id order.
    let mut rank: Vec<usize> = (0..config.n_apps).collect();
    rank.shuffle(&mut rng);
    let popularity: Vec<f64> = rank
        .iter()
        .map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent))
        .collect();

    let mut records = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        let k = weighted_pick(&config.labels_per_sample, &mut rng) + 1;
        let mut weights = popularity.clone();
        let mut apps = Vec::with_capacity(k);
        // The first n_apps samples each seed one app so that every app occurs.
        if i < config.n_apps {
            apps.push(i);
            weights[i] = 0.0;
        }
        while apps.len() < k {
            let a = weighted_pick(&weights, &mut rng);
            weights[a] = 0.0;
            apps.push(a);
        }

        let mut tokens: Vec<String> = Vec::new();
        for &a in &apps {
            // Keyword 0 anchors the app; up to two more are drawn from the rest.
            let mut kw: Vec<usize> = (1..config.keywords_per_app).collect();
            kw.shuffle(&mut rng);
            let extra = rng.gen_range(0..=2usize.min(kw.len()));
            tokens.push(config.keyword(a, 0));
            tokens.extend(kw[..extra].iter().map(|&j| config.keyword(a, j)));
        }
        let n_filler = rng.gen_range(config.min_filler..=config.max_filler);
        for _ in 0..n_filler {
            tokens.push(FILLER[rng.gen_range(0..FILLER.len())].to_string());
        }
        tokens.shuffle(&mut rng);

        if config.label_noise > 0.0 {
            for slot in 0..apps.len() {
                if rng.gen::<f64>() < config.label_noise {
                    let others: Vec<usize> =
                        (0..config.n_apps).filter(|a| !apps.contains(a)).collect();
                    if let Some(&other) = others.choose(&mut rng) {
                        apps[slot] = other;
                    }
                }
            }
        }
        apps.sort_unstable();

        records.push(Record {
            id: format!("s{i:05}"),
            text: tokens.join(" "),
            apps: apps.iter().map(|&a| config.app_name(a)).collect(),
        });
    }
    // Noise may drop an app; the vocabulary still lists every app.
    let vocab = LabelVocab::from_names((0..config.n_apps).map(|a| config.app_name(a)));
    Corpus::with_vocab(records, vocab)
}
