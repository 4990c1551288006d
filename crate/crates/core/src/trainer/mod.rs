//! Episodic training: each step samples a query batch `B` from the
//! training set `T` and lets the model attend over `T - B`. Epochs are
//! followed by a validation pass with the whole training set as support;
//! training stops early after `patience` epochs without improvement and is
//! repeated from several random starts.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::SentenceEncoder;
use crate::error::{Error, Result};
use crate::eval::rank_scores;
use crate::model::{Episode, EpisodicModel, SupportSet};
use crate::numerics::{AdamConfig, AdamState, Matrix, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorMetric {
    Top1Purity,
    #[default]
    Top3Purity,
    ValidationLoss,
}

impl MonitorMetric {
    pub fn higher_is_better(self) -> bool {
        self != MonitorMetric::ValidationLoss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub n_restarts: usize,
    /// Restart `r` is initialised from `seed + r`.
    pub seed: u64,
    pub monitor: MonitorMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 10,
            n_restarts: 5,
            seed: 0,
            monitor: MonitorMetric::Top3Purity,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("train: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.n_restarts == 0 {
            return bad("n_restarts must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Encoded utterances with multi-hot label rows; `ids` are corpus sample
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub x: Matrix,
    pub y: Matrix,
    pub ids: Vec<usize>,
}

impl EncodedSet {
    pub fn from_corpus(
        corpus: &Corpus,
        indices: &[usize],
        encoder: &dyn SentenceEncoder,
    ) -> Result<Self> {
        let rows: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| encoder.encode(corpus.text(i)).values)
            .collect();
        let x = Matrix::from_rows(&rows, encoder.dim())?;
        let mut y = Matrix::zeros(indices.len(), corpus.vocab().len());
        for (r, &i) in indices.iter().enumerate() {
            for &l in corpus.labels(i) {
                y.set(r, l, 1.0);
            }
        }
        Ok(Self {
            x,
            y,
            ids: indices.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Rows at `positions`, in that order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        let take = |m: &Matrix| {
            let mut out = Matrix::zeros(positions.len(), m.cols());
            for (r, &p) in positions.iter().enumerate() {
                out.row_mut(r).copy_from_slice(m.row(p));
            }
            out
        };
        Self {
            x: take(&self.x),
            y: take(&self.y),
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
        }
    }

    pub fn to_support(&self) -> Result<SupportSet> {
        SupportSet::new(self.x.clone(), self.y.clone())
    }

    /// Label indices of row `r`.
    pub fn labels(&self, r: usize) -> Vec<usize> {
        self.y
            .row(r)
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Draws `batch_size` queries uniformly without replacement; every other
/// training sample forms the support.
pub fn sample_episode(
    train: &EncodedSet,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Episode> {
    let n = train.len();
    if n <= batch_size || batch_size == 0 {
        return Err(Error::TrainingSetTooSmall {
            size: n,
            batch_size,
        });
    }
    let batch: Vec<usize> = index::sample(rng, n, batch_size).into_vec();
    let mut in_batch = vec![false; n];
    for &b in &batch {
        in_batch[b] = true;
    }
    let rest: Vec<usize> = (0..n).filter(|&i| !in_batch[i]).collect();
    let q = train.subset(&batch);
    let s = train.subset(&rest);
    Episode::new(s.to_support()?, s.ids, q.x, q.y, q.ids)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub restart: usize,
    pub seed: u64,
    pub train_loss: Vec<f64>,
    pub val_metric: Vec<f64>,
    /// 1-based epoch of the best validation value.
    pub best_epoch: Option<usize>,
    pub best_value: Option<f64>,
    /// Why the restart was abandoned, if it diverged.
    pub diverged: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<P> {
    pub params: P,
    pub best_restart: usize,
    pub histories: Vec<RunHistory>,
}

/// Tracks the best monitored value and when to stop.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    higher_is_better: bool,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, higher_is_better: bool) -> Self {
        Self {
            patience,
            higher_is_better,
            best: None,
            since_best: 0,
        }
    }

    /// Records `value` for `epoch` and returns whether it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        let better = match self.best {
            None => true,
            Some((_, b)) if self.higher_is_better => value > b,
            Some((_, b)) => value < b,
        };
        if better {
            self.best = Some((epoch, value));
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        better
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// Mean top-k purity of `scores` against multi-hot rows of `y`, as a
/// fraction.
fn top_k_purity(scores: &[Vec<f64>], y: &Matrix, k: usize) -> f64 {
    let total: f64 = scores
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let ranked = rank_scores(s);
            let k = k.min(ranked.len());
            let hits = ranked[..k].iter().filter(|&&l| y.get(r, l) != 0.0).count();
            hits as f64 / k as f64
        })
        .sum();
    total / scores.len() as f64
}

enum Support<'a> {
    /// `T - B` for each sampled batch.
    Episodic,
    /// A fixed labelled set; queries come from the training set in
    /// shuffled mini-batches.
    Fixed(&'a SupportSet),
}

struct Data<'a> {
    train: &'a EncodedSet,
    validation: &'a EncodedSet,
    support: Support<'a>,
    eval_support: SupportSet,
}

fn validation_value<M: EpisodicModel>(
    model: &M,
    params: &M::Params,
    data: &Data,
    metric: MonitorMetric,
) -> Result<f64> {
    let v = data.validation;
    match metric {
        MonitorMetric::ValidationLoss => model.loss(params, &data.eval_support, &v.x, &v.y),
        MonitorMetric::Top1Purity | MonitorMetric::Top3Purity => {
            let k = if metric == MonitorMetric::Top1Purity {
                1
            } else {
                3
            };
            let scores = model.score_batch(params, &data.eval_support, &v.x)?;
            Ok(top_k_purity(&scores, &v.y, k))
        }
    }
}

fn divergence(e: &Error) -> Option<String> {
    match e {
        Error::NonFinite(what) => Some(format!("non-finite value in {what}")),
        _ => None,
    }
}

fn run_restart<M: EpisodicModel>(
    model: &M,
    data: &Data,
    config: &TrainConfig,
    restart: usize,
) -> Result<(RunHistory, Option<M::Params>)> {
    let seed = config.seed.wrapping_add(restart as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.init_params(&mut rng);
    let mut adam = AdamState::new(
        AdamConfig::default().with_learning_rate(config.learning_rate),
        &params,
    );
    let mut stopper = EarlyStopping::new(config.patience, config.monitor.higher_is_better());
    let mut history = RunHistory {
        restart,
        seed,
        train_loss: Vec::new(),
        val_metric: Vec::new(),
        best_epoch: None,
        best_value: None,
        diverged: None,
    };
    let mut best_params = None;
    let n = data.train.len();
    let steps = n.div_ceil(config.batch_size);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.max_epochs {
        let mut epoch_loss = 0.0;
        if matches!(data.support, Support::Fixed(_)) {
            order.shuffle(&mut rng);
        }
        for step in 0..steps {
            let result = match data.support {
                Support::Episodic => {
                    let ep = sample_episode(data.train, config.batch_size, &mut rng)?;
                    model.loss_and_grads(&params, &ep.support, &ep.queries, &ep.targets)
                }
                Support::Fixed(s) => {
                    let end = ((step + 1) * config.batch_size).min(n);
                    let q = data.train.subset(&order[step * config.batch_size..end]);
                    model.loss_and_grads(&params, s, &q.x, &q.y)
                }
            };
            let (loss, grads) = match result {
                Ok(v) => v,
                Err(e) => match divergence(&e) {
                    Some(why) => {
                        history.diverged = Some(format!("epoch {epoch}: {why}"));
                        return Ok((history, None));
                    }
                    None => return Err(e),
                },
            };
            adam.step(&mut params, &grads)?;
            if !params.all_finite() {
                history.diverged = Some(format!("epoch {epoch}: non-finite parameters"));
                return Ok((history, None));
            }
            epoch_loss += loss;
        }
        history.train_loss.push(epoch_loss / steps as f64);

        let value = match validation_value(model, &params, data, config.monitor) {
            Ok(v) if v.is_finite() => v,
            Ok(_) => {
                history.diverged = Some(format!("epoch {epoch}: non-finite validation value"));
                return Ok((history, None));
            }
            Err(e) => match divergence(&e) {
                Some(why) => {
                    history.diverged = Some(format!("epoch {epoch}: {why}"));
                    return Ok((history, None));
                }
                None => return Err(e),
            },
        };
        history.val_metric.push(value);
        if stopper.observe(epoch, value) {
            best_params = Some(params.clone());
        }
        if stopper.should_stop() {
            break;
        }
    }
    if let Some((e, v)) = stopper.best() {
        history.best_epoch = Some(e);
        history.best_value = Some(v);
    }
    Ok((history, best_params))
}

fn run_all<M: EpisodicModel>(
    model: &M,
    data: &Data,
    config: &TrainConfig,
) -> Result<TrainOutcome<M::Params>> {
    config.validate()?;
    if data.validation.is_empty() {
        return Err(Error::InvalidConfig("validation set is empty".into()));
    }
    let runs: Vec<(RunHistory, Option<M::Params>)> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| run_restart(model, data, config, r))
        .collect::<Result<_>>()?;

    let higher = config.monitor.higher_is_better();
    let mut best: Option<(usize, f64)> = None;
    for (r, (h, p)) in runs.iter().enumerate() {
        let (Some(v), Some(_)) = (h.best_value, p) else {
            continue;
        };
        let better = match best {
            None => true,
            Some((_, b)) if higher => v > b,
            Some((_, b)) => v < b,
        };
        if better {
            best = Some((r, v));
        }
    }
    let Some((best_restart, _)) = best else {
        return Err(Error::AllRestartsDiverged(config.n_restarts));
    };
    let mut histories = Vec::with_capacity(runs.len());
    let mut chosen = None;
    for (r, (h, p)) in runs.into_iter().enumerate() {
        if r == best_restart {
            chosen = p;
        }
        histories.push(h);
    }
    Ok(TrainOutcome {
        params: chosen.expect("best restart has parameters"),
        best_restart,
        histories,
    })
}

/// Trains with episodes drawn from `train`; validation uses all of
/// `train` as support.
pub fn train<M: EpisodicModel>(
    model: &M,
    train: &EncodedSet,
    validation: &EncodedSet,
    config: &TrainConfig,
) -> Result<TrainOutcome<M::Params>> {
    if train.len() <= config.batch_size {
        return Err(Error::TrainingSetTooSmall {
            size: train.len(),
            batch_size: config.batch_size,
        });
    }
    let data = Data {
        train,
        validation,
        support: Support::Episodic,
        eval_support: train.to_support()?,
    };
    run_all(model, &data, config)
}

/// Trains with a fixed support set: queries from `train` in shuffled
/// mini-batches always attend over `support`, also at validation.
pub fn train_with_support<M: EpisodicModel>(
    model: &M,
    support: &SupportSet,
    train: &EncodedSet,
    validation: &EncodedSet,
    config: &TrainConfig,
) -> Result<TrainOutcome<M::Params>> {
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let data = Data {
        train,
        validation,
        support: Support::Fixed(support),
        eval_support: support.clone(),
    };
    run_all(model, &data, config)
}

/// `restart,epoch,train_loss,val_metric`, one row per completed epoch.
pub fn history_csv(histories: &[RunHistory]) -> String {
    let mut s = String::from("restart,epoch,train_loss,val_metric\n");
    for h in histories {
        for (e, (l, v)) in h.train_loss.iter().zip(&h.val_metric).enumerate() {
            writeln!(s, "{},{},{l},{v}", h.restart, e + 1).unwrap();
        }
    }
    s
}
