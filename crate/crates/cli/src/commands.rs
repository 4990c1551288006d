use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use appmatch::baselines::{majority_rank, nn_index_build, nn_predict, oracle_predict, NnOptions};
use appmatch::corpus::{corpus_stats, split_corpus, Corpus, CorpusSplit};
use appmatch::embedding::SentenceEncoder;
use appmatch::eval::{
    build_one_shot_split, evaluate_rankings, one_shot_evaluate, rank_scores, train_one_shot,
    verify_one_shot_split, EpisodicRanker, MetricsReport, NnRanker, OneShotSplit,
};
use appmatch::matchnet::MatchNetConfig;
use appmatch::model::EpisodicModel;
use appmatch::numerics::Checkpoint;
use appmatch::trainer::{history_csv, train, EncodedSet, RunHistory, TrainConfig};
use serde::Serialize;

use crate::config::{CorpusSource, ExperimentConfig, ModelSpec};
use crate::output::OutDir;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    GenData,
    Stats,
    Run,
    Oneshot,
}

/// Command-specific requirements, checked before the output directory is
/// touched.
pub fn precheck(kind: &Kind, cfg: &ExperimentConfig) -> Result<(), CliError> {
    match kind {
        Kind::GenData => match cfg.require_corpus()? {
            CorpusSource::Synthetic(_) => Ok(()),
            CorpusSource::File(_) => {
                Err(CliError::Config("gen-data needs a [synth] section".into()))
            }
        },
        Kind::Stats | Kind::Oneshot => cfg.require_corpus().map(|_| ()),
        Kind::Run => {
            cfg.require_corpus()?;
            cfg.require_model().map(|_| ())
        }
    }
}

pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let dir = OutDir::create(out)?;
    dir.write("corpus.jsonl", corpus.to_jsonl().as_bytes())?;
    dir.write("stats.csv", corpus_stats(&corpus).to_csv().as_bytes())?;
    Ok(())
}

pub fn stats(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let dir = OutDir::create(out)?;
    dir.write("stats.csv", corpus_stats(&corpus).to_csv().as_bytes())?;
    Ok(())
}

/// Everything `run` writes, before it touches the disk.
pub struct RunArtifacts {
    pub report: MetricsReport,
    pub histories: Vec<RunHistory>,
    pub checkpoint: Option<Checkpoint>,
}

pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let spec = cfg.require_model()?;
    let art = run_experiment(cfg, spec, &corpus)?;

    let dir = OutDir::create(out)?;
    dir.write("report.csv", art.report.to_csv().as_bytes())?;
    let title = format!(
        "{} (test, {} samples)",
        model_label(spec),
        art.report.n_samples
    );
    dir.write("report.txt", art.report.to_table(&title).as_bytes())?;
    dir.write("history.csv", history_csv(&art.histories).as_bytes())?;
    if let Some(c) = &art.checkpoint {
        dir.write("checkpoint.bin", &c.to_bytes())?;
    }
    Ok(())
}

fn model_label(spec: &ModelSpec) -> String {
    match spec {
        ModelSpec::Majority => "majority".into(),
        ModelSpec::Oracle => "oracle".into(),
        ModelSpec::Nn(_) => "nn".into(),
        ModelSpec::Ffnn { .. } => "ffnn".into(),
        ModelSpec::Memnet { hops, .. } => format!("memnet, {hops} hop(s)"),
        ModelSpec::Matchnet { hops: 1, .. } => "matchnet".into(),
        ModelSpec::Matchnet { hops, .. } => format!("hybrid, {hops} hops"),
    }
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    spec: &ModelSpec,
    corpus: &Corpus,
) -> Result<RunArtifacts, CliError> {
    let split = split_corpus(corpus, cfg.ratios, cfg.seed)?;
    let actuals: Vec<&[usize]> = split.test.iter().map(|&i| corpus.labels(i)).collect();

    if spec.is_baseline() {
        // Baselines have nothing to tune, so validation joins training.
        let seen = split.train_and_validation();
        let majority = majority_rank(seen.iter().map(|&i| corpus.labels(i)), corpus.vocab())?;
        let rankings: Vec<Vec<usize>> = match spec {
            ModelSpec::Majority => vec![majority.top(cfg.n_max); split.test.len()],
            ModelSpec::Oracle => {
                let seen_labels: BTreeSet<usize> = seen
                    .iter()
                    .flat_map(|&i| corpus.labels(i))
                    .copied()
                    .collect();
                actuals
                    .iter()
                    .map(|a| oracle_predict(a, &seen_labels, &majority, cfg.n_max))
                    .collect()
            }
            ModelSpec::Nn(options) => nn_rankings(cfg, *options, corpus, &seen, &split.test)?,
            _ => unreachable!("trained models handled below"),
        };
        let report = evaluate_rankings(&rankings, &actuals, Some(&majority), cfg.n_max)?;
        return Ok(RunArtifacts {
            report,
            histories: Vec::new(),
            checkpoint: None,
        });
    }

    let encoder = cfg.encoder(corpus)?;
    let dim = encoder.dim();
    let n_labels = corpus.vocab().len();
    let data = Encoded::new(corpus, &split, encoder.as_ref())?;
    if let Some(m) = spec.ffnn(dim, n_labels) {
        m.validate()?;
        data.train_and_test(&m, &cfg.train, &actuals, cfg.n_max)
    } else if let Some(m) = spec.memnet(dim, n_labels) {
        m.validate()?;
        data.train_and_test(&m, &cfg.train, &actuals, cfg.n_max)
    } else if let Some(m) = spec.matchnet(dim) {
        m.validate()?;
        data.train_and_test(&m, &cfg.train, &actuals, cfg.n_max)
    } else {
        unreachable!("every model spec is either a baseline or trained")
    }
}

fn nn_rankings(
    cfg: &ExperimentConfig,
    options: NnOptions,
    corpus: &Corpus,
    seen: &[usize],
    test: &[usize],
) -> Result<Vec<Vec<usize>>, CliError> {
    let encoder = cfg.encoder(corpus)?;
    let vocab = corpus.vocab();
    let names: Vec<Vec<String>> = seen
        .iter()
        .map(|&i| {
            corpus
                .labels(i)
                .iter()
                .map(|&l| vocab.name(l).to_string())
                .collect()
        })
        .collect();
    let index = nn_index_build(
        encoder.as_ref(),
        vocab.names(),
        seen.iter()
            .zip(&names)
            .map(|(&i, n)| (corpus.text(i), n.as_slice())),
        options,
    );
    test.iter()
        .map(|&i| {
            let q = encoder.encode(corpus.text(i));
            let ranked = nn_predict(&index, &q, vocab.len())?;
            Ok(ranked
                .into_iter()
                .filter_map(|(app, _)| vocab.get(&app))
                .collect())
        })
        .collect()
}

struct Encoded {
    train: EncodedSet,
    validation: EncodedSet,
    test: EncodedSet,
}

impl Encoded {
    fn new(
        corpus: &Corpus,
        split: &CorpusSplit,
        enc: &dyn SentenceEncoder,
    ) -> Result<Self, CliError> {
        Ok(Self {
            train: EncodedSet::from_corpus(corpus, &split.train, enc)?,
            validation: EncodedSet::from_corpus(corpus, &split.validation, enc)?,
            test: EncodedSet::from_corpus(corpus, &split.test, enc)?,
        })
    }

    /// Test queries attend over the whole training set.
    fn train_and_test<M: EpisodicModel>(
        &self,
        model: &M,
        config: &TrainConfig,
        actuals: &[&[usize]],
        n_max: usize,
    ) -> Result<RunArtifacts, CliError> {
        let outcome = train(model, &self.train, &self.validation, config)?;
        let support = self.train.to_support()?;
        let rankings: Vec<Vec<usize>> = model
            .score_batch(&outcome.params, &support, &self.test.x)?
            .iter()
            .map(|s| rank_scores(s))
            .collect();
        let report = evaluate_rankings(&rankings, actuals, None, n_max)?;
        let checkpoint = Checkpoint::from_params(&outcome.params)
            .with_meta("model", model.name())
            .with_meta("best_restart", outcome.best_restart.to_string());
        Ok(RunArtifacts {
            report,
            histories: outcome.histories,
            checkpoint: Some(checkpoint),
        })
    }
}

#[derive(Serialize)]
struct SplitManifest<'a> {
    split: &'a OneShotSplit,
    violations: &'a [String],
}

pub struct OneShotArtifacts {
    pub split: OneShotSplit,
    pub violations: Vec<String>,
    /// Accuracy@1..n_max as fractions.
    pub nn: Vec<f64>,
    pub matchnet: Vec<f64>,
    pub histories: Vec<RunHistory>,
    pub checkpoint: Checkpoint,
}

pub fn oneshot(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let corpus = cfg.load_corpus()?;
    let art = oneshot_experiment(cfg, &corpus)?;

    let manifest = SplitManifest {
        split: &art.split,
        violations: &art.violations,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(appmatch::Error::from)?;
    json.push('\n');

    let dir = OutDir::create(out)?;
    dir.write("split.json", json.as_bytes())?;
    dir.write("report.csv", oneshot_csv(&art, cfg.n_max).as_bytes())?;
    dir.write("report.txt", oneshot_table(&art, cfg.n_max).as_bytes())?;
    dir.write("history.csv", history_csv(&art.histories).as_bytes())?;
    dir.write("checkpoint.bin", &art.checkpoint.to_bytes())?;
    Ok(())
}

pub fn oneshot_experiment(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
) -> Result<OneShotArtifacts, CliError> {
    let split = build_one_shot_split(corpus, cfg.seed, cfg.oneshot.min_hlis_per_app)?;
    let violations = verify_one_shot_split(&split, corpus);
    let encoder = cfg.encoder(corpus)?;
    let enc = encoder.as_ref();

    let options = match cfg.model {
        Some(ModelSpec::Nn(o)) => o,
        _ => NnOptions::default(),
    };
    let nn = one_shot_evaluate(
        &NnRanker::new(enc, &split.s2_support, options),
        &split,
        cfg.n_max,
    )?;

    let model = MatchNetConfig {
        dim: enc.dim(),
        hidden: cfg.oneshot.hidden,
        hops: 1,
        shared: cfg.oneshot.shared,
    };
    model.validate()?;
    let outcome = train_one_shot(
        &model,
        enc,
        &split,
        cfg.oneshot.validation_fraction,
        &cfg.train,
    )?;
    let ranker = EpisodicRanker::new(&model, &outcome.params, enc, &split.s2_support)?;
    let matchnet = one_shot_evaluate(&ranker, &split, cfg.n_max)?;
    let checkpoint = Checkpoint::from_params(&outcome.params)
        .with_meta("model", model.name())
        .with_meta("best_restart", outcome.best_restart.to_string());

    Ok(OneShotArtifacts {
        split,
        violations,
        nn,
        matchnet,
        histories: outcome.histories,
        checkpoint,
    })
}

fn oneshot_rows(art: &OneShotArtifacts) -> [(&'static str, &[f64]); 2] {
    [("nn", &art.nn), ("matchnet", &art.matchnet)]
}

/// `model,top1,...,topN` with accuracies in percent.
fn oneshot_csv(art: &OneShotArtifacts, n_max: usize) -> String {
    let mut s = String::from("model");
    for n in 1..=n_max {
        write!(s, ",top{n}").unwrap();
    }
    s.push('\n');
    for (name, acc) in oneshot_rows(art) {
        s.push_str(name);
        for a in acc {
            write!(s, ",{:.2}", 100.0 * a).unwrap();
        }
        s.push('\n');
    }
    s
}

fn oneshot_table(art: &OneShotArtifacts, n_max: usize) -> String {
    let mut s = format!(
        "one-shot accuracy on {} unseen apps ({} test pairs)\n{:<8}",
        art.split.l2.len(),
        art.split.s2_test.len(),
        ""
    );
    for n in 1..=n_max {
        write!(s, "{:>8}", format!("top-{n}")).unwrap();
    }
    s.push('\n');
    for (name, acc) in oneshot_rows(art) {
        write!(s, "{name:<8}").unwrap();
        for a in acc {
            write!(s, "{:>8.2}", 100.0 * a).unwrap();
        }
        s.push('\n');
    }
    if art.violations.is_empty() {
        s.push_str("split verified: no violations\n");
    } else {
        writeln!(s, "split violations: {}", art.violations.len()).unwrap();
        for v in &art.violations {
            writeln!(s, "  {v}").unwrap();
        }
    }
    s
}
