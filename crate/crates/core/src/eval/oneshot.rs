use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{nn_index_build, nn_predict, AppProfileIndex, NnOptions};
use crate::corpus::Corpus;
use crate::embedding::SentenceEncoder;
use crate::error::{Error, Result};
use crate::model::{EpisodicModel, SupportSet};
use crate::numerics::Matrix;
use crate::trainer::{train_with_support, EncodedSet, TrainConfig, TrainOutcome};

use super::metrics::rank_scores;

pub const MAX_SPLIT_ATTEMPTS: u64 = 100;

/// A single-label sample decomposed from a multi-label utterance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotPair {
    pub utterance_id: String,
    pub text: String,
    pub app: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneShotSplit {
    /// Seed of the attempt that produced this split.
    pub seed: u64,
    pub l1: Vec<String>,
    pub l2: Vec<String>,
    pub s1_support: Vec<OneShotPair>,
    pub s1_train: Vec<OneShotPair>,
    pub s2_support: Vec<OneShotPair>,
    pub s2_test: Vec<OneShotPair>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Support,
    Held,
}

/// Builds a split meeting the one-shot constraints, retrying with
/// `seed + 1`, `seed + 2`, ... when an attempt fails verification.
pub fn build_one_shot_split(
    corpus: &Corpus,
    seed: u64,
    min_hlis_per_app: usize,
) -> Result<OneShotSplit> {
    let mut counts = vec![0usize; corpus.vocab().len()];
    for s in corpus.samples() {
        for &l in &s.labels {
            counts[l] += 1;
        }
    }
    let eligible: Vec<usize> = (0..counts.len())
        .filter(|&l| counts[l] >= min_hlis_per_app.max(1))
        .collect();
    if eligible.len() < 2 {
        return Err(Error::Split(format!(
            "{} apps have at least {min_hlis_per_app} utterances; need 2",
            eligible.len()
        )));
    }
    let mut last = Vec::new();
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        let split = attempt_split(corpus, &eligible, s);
        last = verify_one_shot_split(&split, corpus);
        if last.is_empty() {
            return Ok(split);
        }
    }
    Err(Error::Split(format!(
        "no valid split after {MAX_SPLIT_ATTEMPTS} attempts; last violation: {}",
        last.first().map_or("", String::as_str)
    )))
}

fn attempt_split(corpus: &Corpus, eligible: &[usize], seed: u64) -> OneShotSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = eligible.to_vec();
    labels.shuffle(&mut rng);
    // side[l]: Some(0) for L1, Some(1) for L2
    let mut side = vec![None; corpus.vocab().len()];
    for (i, &l) in labels.iter().enumerate() {
        side[l] = Some(i % 2);
    }

    // Whole utterances go to the side holding most of their eligible labels.
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (u, s) in corpus.samples().iter().enumerate() {
        let mut per_side = [0usize; 2];
        for &l in &s.labels {
            if let Some(k) = side[l] {
                per_side[k] += 1;
            }
        }
        if per_side[0] + per_side[1] > 0 {
            members[usize::from(per_side[1] > per_side[0])].push(u);
        }
    }

    let mut pairs: [[Vec<OneShotPair>; 2]; 2] = Default::default();
    for k in 0..2 {
        let side_labels: Vec<usize> = labels
            .iter()
            .copied()
            .filter(|&l| side[l] == Some(k))
            .collect();
        let mut utts = members[k].clone();
        utts.shuffle(&mut rng);
        let roles = assign_roles(corpus, &side_labels, &utts);

        let mut seen_support = HashSet::new();
        let mut seen_held = HashSet::new();
        for &u in &utts {
            for &l in corpus.labels(u) {
                if side[l] != Some(k) {
                    continue;
                }
                let pair = || OneShotPair {
                    utterance_id: corpus.id(u).to_string(),
                    text: corpus.text(u).to_string(),
                    app: corpus.vocab().name(l).to_string(),
                };
                match roles.get(&u) {
                    Some(Role::Support) => {
                        if seen_support.insert(l) {
                            pairs[k][0].push(pair());
                        }
                    }
                    Some(Role::Held) => {
                        if seen_held.insert(l) || k == 0 {
                            pairs[k][1].push(pair());
                        }
                    }
                    // Side 1 trains on everything left; side 2 stays one-shot.
                    None if k == 0 => pairs[k][1].push(pair()),
                    None => {}
                }
            }
        }
    }

    let names = |k: usize| {
        let mut v: Vec<String> = labels
            .iter()
            .filter(|&&l| side[l] == Some(k))
            .map(|&l| corpus.vocab().name(l).to_string())
            .collect();
        v.sort();
        v
    };
    let [[s1_support, s1_train], [s2_support, s2_test]] = pairs;
    OneShotSplit {
        seed,
        l1: names(0),
        l2: names(1),
        s1_support,
        s1_train,
        s2_support,
        s2_test,
    }
}

/// Greedily gives each label one support utterance and one held-out
/// utterance, scarcest labels first.
fn assign_roles(corpus: &Corpus, side_labels: &[usize], utts: &[usize]) -> HashMap<usize, Role> {
    let mut by_label: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &u in utts {
        for &l in corpus.labels(u) {
            by_label.entry(l).or_default().push(u);
        }
    }
    let mut order = side_labels.to_vec();
    order.sort_by_key(|l| by_label.get(l).map_or(0, Vec::len));

    let mut roles: HashMap<usize, Role> = HashMap::new();
    let mut covered: HashSet<(usize, bool)> = HashSet::new();
    for l in order {
        let candidates = by_label.get(&l).map_or(&[][..], Vec::as_slice);
        for (role, key) in [(Role::Support, true), (Role::Held, false)] {
            if covered.contains(&(l, key)) {
                continue;
            }
            // Prefer utterances carrying few labels so they block little.
            let pick = candidates
                .iter()
                .filter(|u| !roles.contains_key(u))
                .min_by_key(|&&u| corpus.labels(u).len());
            if let Some(&u) = pick {
                roles.insert(u, role);
                for &other in corpus.labels(u) {
                    covered.insert((other, key));
                }
            }
        }
    }
    roles
}

/// Every broken constraint, as a readable message; empty when valid.
pub fn verify_one_shot_split(split: &OneShotSplit, corpus: &Corpus) -> Vec<String> {
    let mut v = Vec::new();
    let l1: BTreeSet<&str> = split.l1.iter().map(String::as_str).collect();
    let l2: BTreeSet<&str> = split.l2.iter().map(String::as_str).collect();
    for l in l1.intersection(&l2) {
        v.push(format!("label {l} is in both L1 and L2"));
    }

    let index: HashMap<&str, usize> = (0..corpus.len()).map(|i| (corpus.id(i), i)).collect();
    let sets = [
        ("S1_support", &split.s1_support, &l1),
        ("S1_train", &split.s1_train, &l1),
        ("S2_support", &split.s2_support, &l2),
        ("S2_test", &split.s2_test, &l2),
    ];
    for (name, pairs, allowed) in sets {
        for p in pairs {
            if !allowed.contains(p.app.as_str()) {
                v.push(format!(
                    "{name} pair ({}, {}) uses a label outside its side",
                    p.utterance_id, p.app
                ));
            }
            match index.get(p.utterance_id.as_str()) {
                None => v.push(format!(
                    "{name} references unknown utterance {}",
                    p.utterance_id
                )),
                Some(&i) => {
                    let has = corpus
                        .vocab()
                        .get(&p.app)
                        .is_some_and(|a| corpus.labels(i).contains(&a));
                    if !has || corpus.text(i) != p.text {
                        v.push(format!(
                            "{name} pair ({}, {}) does not match the corpus",
                            p.utterance_id, p.app
                        ));
                    }
                }
            }
        }
    }

    let ids = |pairs: &[OneShotPair]| -> BTreeSet<String> {
        pairs.iter().map(|p| p.utterance_id.clone()).collect()
    };
    let s1: BTreeSet<String> = ids(&split.s1_support)
        .union(&ids(&split.s1_train))
        .cloned()
        .collect();
    let s2: BTreeSet<String> = ids(&split.s2_support)
        .union(&ids(&split.s2_test))
        .cloned()
        .collect();
    for u in s1.intersection(&s2) {
        v.push(format!("utterance {u} appears on both sides"));
    }
    for u in ids(&split.s1_support).intersection(&ids(&split.s1_train)) {
        v.push(format!("utterance {u} is in both S1_support and S1_train"));
    }
    for u in ids(&split.s2_support).intersection(&ids(&split.s2_test)) {
        v.push(format!("utterance {u} is in both S2_support and S2_test"));
    }

    let count = |pairs: &[OneShotPair], app: &str| pairs.iter().filter(|p| p.app == app).count();
    for l in &split.l1 {
        for (name, pairs) in [
            ("S1_support", &split.s1_support),
            ("S1_train", &split.s1_train),
        ] {
            if count(pairs, l) == 0 {
                v.push(format!("L1 label {l} is missing from {name}"));
            }
        }
    }
    for l in &split.l2 {
        for (name, pairs) in [
            ("S2_support", &split.s2_support),
            ("S2_test", &split.s2_test),
        ] {
            let c = count(pairs, l);
            if c != 1 {
                v.push(format!(
                    "L2 label {l} appears {c} times in {name}, expected once"
                ));
            }
        }
    }
    v
}

/// A model ranking app names against an explicit support set.
pub trait SupportRanker {
    /// `(utterance id, app)` of every active support pair.
    fn support_pairs(&self) -> Vec<(String, String)>;

    /// App names, best first.
    fn rank(&self, text: &str) -> Result<Vec<String>>;
}

fn pair_keys(pairs: &[OneShotPair]) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|p| (p.utterance_id.clone(), p.app.clone()))
        .collect()
}

/// Fraction of `S2_test` pairs whose app is in the model's top-n, for
/// n = 1..=n_max. Rankings are restricted to labels present in the
/// support set.
pub fn one_shot_evaluate<R: SupportRanker + ?Sized>(
    model: &R,
    split: &OneShotSplit,
    n_max: usize,
) -> Result<Vec<f64>> {
    let active: BTreeSet<(String, String)> = model.support_pairs().into_iter().collect();
    if active != pair_keys(&split.s2_support) {
        return Err(Error::Split("model support is not S2_support".into()));
    }
    if split.s2_test.is_empty() {
        return Err(Error::Split("S2_test is empty".into()));
    }
    let support_labels: HashSet<&str> = split.s2_support.iter().map(|p| p.app.as_str()).collect();
    let mut hits = vec![0usize; n_max];
    for pair in &split.s2_test {
        let ranked: Vec<String> = model
            .rank(&pair.text)?
            .into_iter()
            .filter(|a| support_labels.contains(a.as_str()))
            .collect();
        if let Some(pos) = ranked.iter().position(|a| *a == pair.app) {
            for h in hits.iter_mut().skip(pos) {
                *h += 1;
            }
        }
    }
    let total = split.s2_test.len() as f64;
    Ok(hits.into_iter().map(|h| h as f64 / total).collect())
}

/// The nearest-neighbour profile model over a pair list.
pub struct NnRanker<'a> {
    pub index: AppProfileIndex,
    pub encoder: &'a dyn SentenceEncoder,
    pairs: Vec<(String, String)>,
}

impl<'a> NnRanker<'a> {
    pub fn new(
        encoder: &'a dyn SentenceEncoder,
        support: &[OneShotPair],
        options: NnOptions,
    ) -> Self {
        let labels: Vec<Vec<String>> = support.iter().map(|p| vec![p.app.clone()]).collect();
        let apps: Vec<String> = support.iter().map(|p| p.app.clone()).collect();
        let index = nn_index_build(
            encoder,
            &apps,
            support
                .iter()
                .zip(&labels)
                .map(|(p, l)| (p.text.as_str(), l.as_slice())),
            options,
        );
        Self {
            index,
            encoder,
            pairs: support
                .iter()
                .map(|p| (p.utterance_id.clone(), p.app.clone()))
                .collect(),
        }
    }
}

impl SupportRanker for NnRanker<'_> {
    fn support_pairs(&self) -> Vec<(String, String)> {
        self.pairs.clone()
    }

    fn rank(&self, text: &str) -> Result<Vec<String>> {
        let q = self.encoder.encode(text);
        Ok(nn_predict(&self.index, &q, self.index.apps.len())?
            .into_iter()
            .map(|(a, _)| a)
            .collect())
    }
}

/// A trained episodic model reading from a pair list as its support.
/// Label columns are the sorted distinct apps of the pairs.
pub struct EpisodicRanker<'a, M: EpisodicModel> {
    pub model: &'a M,
    pub params: &'a M::Params,
    pub encoder: &'a dyn SentenceEncoder,
    pub support: SupportSet,
    pub labels: Vec<String>,
    pairs: Vec<(String, String)>,
}

impl<'a, M: EpisodicModel> EpisodicRanker<'a, M> {
    pub fn new(
        model: &'a M,
        params: &'a M::Params,
        encoder: &'a dyn SentenceEncoder,
        support: &[OneShotPair],
    ) -> Result<Self> {
        let (set, labels) = encode_pairs(encoder, support)?;
        Ok(Self {
            model,
            params,
            encoder,
            support: set,
            labels,
            pairs: support
                .iter()
                .map(|p| (p.utterance_id.clone(), p.app.clone()))
                .collect(),
        })
    }
}

/// Encodes single-label pairs into a support set whose label columns are
/// the sorted distinct apps.
pub fn encode_pairs(
    encoder: &dyn SentenceEncoder,
    pairs: &[OneShotPair],
) -> Result<(SupportSet, Vec<String>)> {
    let labels: Vec<String> = pairs
        .iter()
        .map(|p| p.app.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let set = encode_pair_set(encoder, pairs, &labels)?;
    Ok((set.to_support()?, labels))
}

/// Encodes pairs against fixed label columns `labels` (sorted). Row ids
/// are positions in `pairs`.
pub fn encode_pair_set(
    encoder: &dyn SentenceEncoder,
    pairs: &[OneShotPair],
    labels: &[String],
) -> Result<EncodedSet> {
    let rows: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| encoder.encode(&p.text).values)
        .collect();
    let x = Matrix::from_rows(&rows, encoder.dim())?;
    let mut y = Matrix::zeros(pairs.len(), labels.len());
    for (i, p) in pairs.iter().enumerate() {
        let j = labels
            .binary_search(&p.app)
            .map_err(|_| Error::UnknownLabel(p.app.clone()))?;
        y.set(i, j, 1.0);
    }
    Ok(EncodedSet {
        x,
        y,
        ids: (0..pairs.len()).collect(),
    })
}

impl<M: EpisodicModel> SupportRanker for EpisodicRanker<'_, M> {
    fn support_pairs(&self) -> Vec<(String, String)> {
        self.pairs.clone()
    }

    fn rank(&self, text: &str) -> Result<Vec<String>> {
        let q = self.encoder.encode(text);
        let scores = self.model.scores(self.params, &self.support, &q.values)?;
        Ok(rank_scores(&scores)
            .into_iter()
            .map(|i| self.labels[i].clone())
            .collect())
    }
}

/// Splits pairs into (train, validation) by utterance, so no utterance
/// lands on both sides. At least one utterance stays in each part.
pub fn holdout_by_utterance(
    pairs: &[OneShotPair],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<OneShotPair>, Vec<OneShotPair>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "validation fraction {fraction} not in (0, 1)"
        )));
    }
    let mut ids: Vec<&str> = pairs
        .iter()
        .map(|p| p.utterance_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if ids.len() < 2 {
        return Err(Error::Split(
            "need two utterances to hold out validation".into(),
        ));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((ids.len() as f64 * fraction).round() as usize).clamp(1, ids.len() - 1);
    let held: HashSet<&str> = ids[..n_val].iter().copied().collect();
    let (val, train): (Vec<OneShotPair>, Vec<OneShotPair>) = pairs
        .iter()
        .cloned()
        .partition(|p| held.contains(p.utterance_id.as_str()));
    Ok((train, val))
}

/// Trains an episodic model for the one-shot protocol: `S1_support` is the
/// fixed support, `S1_train` pairs (minus a held-out validation share) are
/// the queries, and label columns are the sorted `L1` apps.
pub fn train_one_shot<M: EpisodicModel>(
    model: &M,
    encoder: &dyn SentenceEncoder,
    split: &OneShotSplit,
    validation_fraction: f64,
    config: &TrainConfig,
) -> Result<TrainOutcome<M::Params>> {
    let mut labels = split.l1.clone();
    labels.sort();
    let support = encode_pair_set(encoder, &split.s1_support, &labels)?.to_support()?;
    let (train_pairs, val_pairs) =
        holdout_by_utterance(&split.s1_train, validation_fraction, config.seed)?;
    let train = encode_pair_set(encoder, &train_pairs, &labels)?;
    let validation = encode_pair_set(encoder, &val_pairs, &labels)?;
    train_with_support(model, &support, &train, &validation, config)
}

/// Ranks the support labels in a fresh random order for every query.
pub struct RandomRanker {
    pairs: Vec<(String, String)>,
    labels: Vec<String>,
    rng: Mutex<ChaCha8Rng>,
}

impl RandomRanker {
    pub fn new(support: &[OneShotPair], seed: u64) -> Self {
        let labels: BTreeSet<String> = support.iter().map(|p| p.app.clone()).collect();
        Self {
            pairs: support
                .iter()
                .map(|p| (p.utterance_id.clone(), p.app.clone()))
                .collect(),
            labels: labels.into_iter().collect(),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }
}

impl SupportRanker for RandomRanker {
    fn support_pairs(&self) -> Vec<(String, String)> {
        self.pairs.clone()
    }

    fn rank(&self, _text: &str) -> Result<Vec<String>> {
        let mut out = self.labels.clone();
        out.shuffle(&mut *self.rng.lock().expect("rng lock"));
        Ok(out)
    }
}
