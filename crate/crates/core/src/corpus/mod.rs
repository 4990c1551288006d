//! The multi-label intent corpus: utterances paired with sets of apps.

mod split;
mod stats;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{split_corpus, CorpusSplit};
pub use stats::{corpus_stats, StatsReport};
pub use synth::{generate_synthetic, SynthConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub id: String,
    pub text: String,
}

/// Label set of one utterance, as sorted dense vocabulary indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub utterance_id: String,
    pub labels: Vec<usize>,
}

/// Bijection between app ids and `0..len()`. Indices follow the ascending
/// order of the ids, so comparing indices is the same as comparing ids.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVocab {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl LabelVocab {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = names.into_iter().map(Into::into).collect();
        let names: Vec<String> = set.into_iter().collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        Self { names, index }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub id: String,
    pub text: String,
    pub apps: Vec<String>,
}

/// Utterances and their label sets; `samples[i]` belongs to `utterances[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    samples: Vec<Sample>,
    vocab: LabelVocab,
}

impl Corpus {
    /// Validates records and builds the vocabulary from every app mentioned.
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let vocab = LabelVocab::from_names(records.iter().flat_map(|r| r.apps.iter().cloned()));
        Self::with_vocab(records, vocab)
    }

    /// Like [`Corpus::from_records`] but against a fixed vocabulary; labels
    /// outside it are rejected.
    pub fn with_vocab(records: Vec<Record>, vocab: LabelVocab) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut utterances = Vec::with_capacity(records.len());
        let mut samples = Vec::with_capacity(records.len());
        for r in records {
            if !seen.insert(r.id.clone()) {
                return Err(Error::DuplicateId(r.id));
            }
            if r.text.trim().is_empty() {
                return Err(Error::EmptyText(r.id));
            }
            if r.apps.is_empty() {
                return Err(Error::EmptyLabelSet(r.id));
            }
            let mut labels = r
                .apps
                .iter()
                .map(|a| vocab.get(a).ok_or_else(|| Error::UnknownLabel(a.clone())))
                .collect::<Result<Vec<_>>>()?;
            labels.sort_unstable();
            labels.dedup();
            samples.push(Sample {
                utterance_id: r.id.clone(),
                labels,
            });
            utterances.push(Utterance {
                id: r.id,
                text: r.text,
            });
        }
        Ok(Self {
            utterances,
            samples,
            vocab,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn vocab(&self) -> &LabelVocab {
        &self.vocab
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn text(&self, i: usize) -> &str {
        &self.utterances[i].text
    }

    pub fn id(&self, i: usize) -> &str {
        &self.utterances[i].id
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        &self.samples[i].labels
    }

    pub fn records(&self) -> Vec<Record> {
        self.utterances
            .iter()
            .zip(&self.samples)
            .map(|(u, s)| Record {
                id: u.id.clone(),
                text: u.text.clone(),
                apps: s
                    .labels
                    .iter()
                    .map(|&l| self.vocab.name(l).to_string())
                    .collect(),
            })
            .collect()
    }

    /// Serialises to the line-delimited JSON format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("records always serialise"));
            out.push('\n');
        }
        out
    }
}

pub fn parse_corpus<R: BufRead>(reader: R, path: &Path) -> Result<Corpus> {
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Corpus::from_records(records)
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    parse_corpus(BufReader::new(file), path)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(corpus.to_jsonl().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Corpus> {
        parse_corpus(s.as_bytes(), Path::new("test.jsonl"))
    }

    #[test]
    fn two_valid_lines() {
        let c = parse(concat!(
            r#"{"id":"h001","text":"plan dinner with friends","apps":["yelp","maps"]}"#,
            "\n\n",
            r#"{"id":"h002","text":"book a cab","apps":["uber"]}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.vocab().names(), &["maps", "uber", "yelp"]);
        assert_eq!(c.labels(0), &[0, 2]);
    }

    #[test]
    fn empty_label_set_is_rejected() {
        let err = parse(r#"{"id":"h1","text":"x","apps":[]}"#).unwrap_err();
        assert!(matches!(err, Error::EmptyLabelSet(_)));
        assert!(err.to_string().contains("empty label set"));
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let err = parse(concat!(
            r#"{"id":"a","text":"x","apps":["p"]}"#,
            "\n",
            r#"{"id":"a","text":"y","apps":["q"]}"#
        ))
        .unwrap_err();
        assert!(matches!(err, Error::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn parse_error_reports_line() {
        let err = parse(concat!(
            r#"{"id":"a","text":"x","apps":["p"]}"#,
            "\n",
            r#"{"id":"b","text":"y"}"#
        ))
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse(r#"{"id":"b","text":"y","apps":["p"],"extra":1}"#).is_err());
        assert!(parse("not json").is_err());
    }

    #[test]
    fn blank_text_is_rejected() {
        assert!(matches!(
            parse(r#"{"id":"a","text":"   ","apps":["p"]}"#),
            Err(Error::EmptyText(_))
        ));
    }

    #[test]
    fn jsonl_round_trip() {
        let c = generate_synthetic(&SynthConfig::default(), 3).unwrap();
        let back = parse(&c.to_jsonl()).unwrap();
        assert_eq!(back, c);
    }
}
