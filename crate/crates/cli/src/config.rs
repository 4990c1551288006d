//! Experiment configuration: a TOML file whose keys may be written dotted
//! (`model.kind = "nn"`) or as tables. Every field is checked before any
//! command does work.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use appmatch::baselines::{FfnnConfig, NnAggregate, NnDistance, NnOptions, OutputMode};
use appmatch::corpus::{generate_synthetic, load_corpus, Corpus, SynthConfig};
use appmatch::embedding::{load_embeddings, tokenize, RandomEncoder, SentenceEncoder};
use appmatch::eval::DEFAULT_N_MAX;
use appmatch::matchnet::MatchNetConfig;
use appmatch::memnet::MemNetConfig;
use appmatch::trainer::{MonitorMetric, TrainConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    n_max: Option<usize>,
    embeddings: Option<String>,
    corpus: Option<CorpusSection>,
    synth: Option<SynthConfig>,
    split: Option<SplitSection>,
    model: Option<ModelSection>,
    train: Option<TrainSection>,
    oneshot: Option<OneShotSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusSection {
    path: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SplitSection {
    ratios: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Majority,
    Oracle,
    Nn,
    Ffnn,
    Memnet,
    Matchnet,
    Hybrid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: ModelKind,
    distance: Option<NnDistance>,
    aggregate: Option<NnAggregate>,
    layers: Option<Vec<usize>>,
    output: Option<OutputMode>,
    hops: Option<usize>,
    share_ab: Option<bool>,
    nonlinear: Option<bool>,
    head_layers: Option<usize>,
    hidden: Option<usize>,
    shared: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    max_epochs: Option<usize>,
    patience: Option<usize>,
    n_restarts: Option<usize>,
    monitor: Option<MonitorMetric>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OneShotSection {
    min_hlis_per_app: Option<usize>,
    hidden: Option<usize>,
    shared: Option<bool>,
    validation_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    File(PathBuf),
    Synthetic(SynthConfig),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbeddingSource {
    Random { dim: usize, seed: u64 },
    File(PathBuf),
}

/// Model selection with its hyperparameters; dims are filled in from the
/// encoder and corpus at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Majority,
    Oracle,
    Nn(NnOptions),
    Ffnn {
        layers: Vec<usize>,
        output: OutputMode,
    },
    Memnet {
        hops: usize,
        share_ab: bool,
        nonlinear: bool,
        head_layers: usize,
    },
    Matchnet {
        hidden: usize,
        hops: usize,
        shared: bool,
    },
}

impl ModelSpec {
    pub fn is_baseline(&self) -> bool {
        matches!(
            self,
            ModelSpec::Majority | ModelSpec::Oracle | ModelSpec::Nn(_)
        )
    }

    pub fn ffnn(&self, dim: usize, n_labels: usize) -> Option<FfnnConfig> {
        match self {
            ModelSpec::Ffnn { layers, output } => Some(FfnnConfig {
                input: dim,
                hidden: layers.clone(),
                n_labels,
                output_mode: *output,
            }),
            _ => None,
        }
    }

    pub fn memnet(&self, dim: usize, n_labels: usize) -> Option<MemNetConfig> {
        match *self {
            ModelSpec::Memnet {
                hops,
                share_ab,
                nonlinear,
                head_layers,
            } => Some(MemNetConfig {
                hops,
                dim,
                n_labels,
                share_ab,
                nonlinear,
                head_layers,
            }),
            _ => None,
        }
    }

    pub fn matchnet(&self, dim: usize) -> Option<MatchNetConfig> {
        match *self {
            ModelSpec::Matchnet {
                hidden,
                hops,
                shared,
            } => Some(MatchNetConfig {
                dim,
                hidden,
                hops,
                shared,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneShotSettings {
    pub min_hlis_per_app: usize,
    pub hidden: usize,
    pub shared: bool,
    pub validation_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_max: usize,
    pub corpus: Option<CorpusSource>,
    pub embeddings: EmbeddingSource,
    pub ratios: (f64, f64, f64),
    pub model: Option<ModelSpec>,
    pub train: TrainConfig,
    pub oneshot: OneShotSettings,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn parse_embeddings(spec: &str, base: &Path) -> Result<EmbeddingSource, CliError> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [dim, seed] = parts[..] else {
            return Err(invalid(format!(
                "embeddings `{spec}`: expected random:<dim>:<seed>"
            )));
        };
        let dim: usize = dim
            .parse()
            .map_err(|_| invalid(format!("embeddings `{spec}`: bad dimension")))?;
        let seed: u64 = seed
            .parse()
            .map_err(|_| invalid(format!("embeddings `{spec}`: bad seed")))?;
        if dim == 0 {
            return Err(invalid("embeddings: dimension must be positive"));
        }
        return Ok(EmbeddingSource::Random { dim, seed });
    }
    Ok(EmbeddingSource::File(base.join(spec)))
}

/// Rejects hyperparameters that do not belong to the chosen model.
fn model_spec(m: ModelSection) -> Result<ModelSpec, CliError> {
    let name = format!("{:?}", m.kind).to_lowercase();
    let given: Vec<(&str, bool)> = vec![
        ("distance", m.distance.is_some()),
        ("aggregate", m.aggregate.is_some()),
        ("layers", m.layers.is_some()),
        ("output", m.output.is_some()),
        ("hops", m.hops.is_some()),
        ("share_ab", m.share_ab.is_some()),
        ("nonlinear", m.nonlinear.is_some()),
        ("head_layers", m.head_layers.is_some()),
        ("hidden", m.hidden.is_some()),
        ("shared", m.shared.is_some()),
    ];
    let allowed: &[&str] = match m.kind {
        ModelKind::Majority | ModelKind::Oracle => &[],
        ModelKind::Nn => &["distance", "aggregate"],
        ModelKind::Ffnn => &["layers", "output"],
        ModelKind::Memnet => &["hops", "share_ab", "nonlinear", "head_layers"],
        ModelKind::Matchnet => &["hidden", "shared"],
        ModelKind::Hybrid => &["hidden", "shared", "hops"],
    };
    if let Some((key, _)) = given.iter().find(|(k, set)| *set && !allowed.contains(k)) {
        return Err(invalid(format!(
            "model.{key} does not apply to model `{name}`"
        )));
    }

    let spec = match m.kind {
        ModelKind::Majority => ModelSpec::Majority,
        ModelKind::Oracle => ModelSpec::Oracle,
        ModelKind::Nn => ModelSpec::Nn(NnOptions {
            distance: m.distance.unwrap_or_default(),
            aggregate: m.aggregate.unwrap_or_default(),
        }),
        ModelKind::Ffnn => {
            let layers = m.layers.unwrap_or_else(|| vec![100, 100]);
            if layers.contains(&0) {
                return Err(invalid("model.layers: widths must be positive"));
            }
            ModelSpec::Ffnn {
                layers,
                output: m.output.unwrap_or_default(),
            }
        }
        ModelKind::Memnet => {
            let head_layers = m.head_layers.unwrap_or(1);
            let hops = m.hops.unwrap_or(1);
            if hops == 0 {
                return Err(invalid("model.hops must be at least 1"));
            }
            if !(1..=2).contains(&head_layers) {
                return Err(invalid("model.head_layers must be 1 or 2"));
            }
            ModelSpec::Memnet {
                hops,
                share_ab: m.share_ab.unwrap_or(false),
                nonlinear: m.nonlinear.unwrap_or(true),
                head_layers,
            }
        }
        ModelKind::Matchnet | ModelKind::Hybrid => {
            let hops = if m.kind == ModelKind::Matchnet {
                1
            } else {
                m.hops.unwrap_or(2)
            };
            let hidden = m.hidden.unwrap_or(300);
            if hops == 0 || hidden == 0 {
                return Err(invalid("model.hops and model.hidden must be positive"));
            }
            ModelSpec::Matchnet {
                hidden,
                hops,
                shared: m.shared.unwrap_or(true),
            }
        }
    };
    Ok(spec)
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        let seed = seed_override.or(raw.seed).unwrap_or(0);

        let corpus = match (raw.corpus, raw.synth) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "give either corpus.path or a [synth] section, not both",
                ))
            }
            (Some(c), None) => Some(CorpusSource::File(base.join(c.path))),
            (None, Some(s)) => {
                s.validate().map_err(|e| invalid(e.to_string()))?;
                Some(CorpusSource::Synthetic(s))
            }
            (None, None) => None,
        };

        let n_max = raw.n_max.unwrap_or(DEFAULT_N_MAX);
        if n_max == 0 {
            return Err(invalid("n_max must be at least 1"));
        }
        let embeddings =
            parse_embeddings(raw.embeddings.as_deref().unwrap_or("random:50:1"), base)?;

        let [a, b, c] = raw.split.map_or([0.6, 0.15, 0.25], |s| s.ratios);
        if [a, b, c].iter().any(|r| !r.is_finite() || *r <= 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(invalid(format!(
                "split.ratios {:?} must be positive and sum to 1",
                [a, b, c]
            )));
        }

        let model = raw.model.map(model_spec).transpose()?;

        let t = raw.train.unwrap_or_default();
        let defaults = TrainConfig::default();
        let train = TrainConfig {
            batch_size: t.batch_size.unwrap_or(defaults.batch_size),
            learning_rate: t.learning_rate.unwrap_or(defaults.learning_rate),
            max_epochs: t.max_epochs.unwrap_or(defaults.max_epochs),
            patience: t.patience.unwrap_or(defaults.patience),
            n_restarts: t.n_restarts.unwrap_or(defaults.n_restarts),
            seed,
            monitor: t.monitor.unwrap_or(defaults.monitor),
        };
        train.validate().map_err(|e| invalid(e.to_string()))?;

        let o = raw.oneshot.unwrap_or_default();
        let oneshot = OneShotSettings {
            min_hlis_per_app: o.min_hlis_per_app.unwrap_or(3),
            hidden: o.hidden.unwrap_or(300),
            shared: o.shared.unwrap_or(true),
            validation_fraction: o.validation_fraction.unwrap_or(0.2),
        };
        if oneshot.hidden == 0 || oneshot.min_hlis_per_app == 0 {
            return Err(invalid(
                "oneshot.hidden and oneshot.min_hlis_per_app must be positive",
            ));
        }
        if !(oneshot.validation_fraction > 0.0 && oneshot.validation_fraction < 1.0) {
            return Err(invalid(
                "oneshot.validation_fraction must lie strictly between 0 and 1",
            ));
        }

        Ok(Self {
            seed,
            n_max,
            corpus,
            embeddings,
            ratios: (a, b, c),
            model,
            train,
            oneshot,
        })
    }

    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, seed_override)
    }

    pub fn require_corpus(&self) -> Result<&CorpusSource, CliError> {
        self.corpus
            .as_ref()
            .ok_or_else(|| invalid("no corpus: set corpus.path or add a [synth] section"))
    }

    pub fn require_model(&self) -> Result<&ModelSpec, CliError> {
        self.model
            .as_ref()
            .ok_or_else(|| invalid("no model: set model.kind"))
    }

    pub fn load_corpus(&self) -> Result<Corpus, CliError> {
        match self.require_corpus()? {
            CorpusSource::File(p) => Ok(load_corpus(p)?),
            CorpusSource::Synthetic(s) => Ok(generate_synthetic(s, self.seed)?),
        }
    }

    /// Word vectors are only read for tokens that occur in `corpus`.
    pub fn encoder(&self, corpus: &Corpus) -> Result<Box<dyn SentenceEncoder>, CliError> {
        match &self.embeddings {
            EmbeddingSource::Random { dim, seed } => Ok(Box::new(RandomEncoder::new(*dim, *seed))),
            EmbeddingSource::File(p) => {
                let vocab: HashSet<String> = corpus
                    .utterances()
                    .iter()
                    .flat_map(|u| tokenize(&u.text))
                    .collect();
                Ok(Box::new(load_embeddings(p, Some(&vocab))?))
            }
        }
    }
}
