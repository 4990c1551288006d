//! Tokenisation, word-vector tables and mean-pooled sentence encoding.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Lowercased maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    /// Share of tokens without an embedding; 1.0 for an empty sentence.
    pub oov_fraction: f64,
}

/// Maps an utterance to a fixed-width vector.
pub trait SentenceEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> SentenceVector;
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: HashMap::new(),
        }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::shape(self.dim, vector.len()));
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|x| x * s).collect()))
                .collect(),
        }
    }
}

impl SentenceEncoder for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> SentenceVector {
        encode_sentence(self, text)
    }
}

/// Mean of the embeddings of in-vocabulary tokens. Out-of-vocabulary tokens
/// are skipped; with none left the zero vector is returned.
pub fn encode_sentence(table: &EmbeddingTable, text: &str) -> SentenceVector {
    mean_pool(table.dim, &tokenize(text), |t| {
        table.get(t).map(<[f64]>::to_vec)
    })
}

fn mean_pool<F>(dim: usize, tokens: &[String], mut lookup: F) -> SentenceVector
where
    F: FnMut(&str) -> Option<Vec<f64>>,
{
    let mut values = vec![0.0; dim];
    let mut known = 0usize;
    for t in tokens {
        if let Some(v) = lookup(t) {
            for (acc, x) in values.iter_mut().zip(&v) {
                *acc += x;
            }
            known += 1;
        }
    }
    if known > 0 {
        let n = known as f64;
        values.iter_mut().for_each(|x| *x /= n);
    }
    let oov_fraction = if tokens.is_empty() {
        1.0
    } else {
        (tokens.len() - known) as f64 / tokens.len() as f64
    };
    SentenceVector {
        values,
        oov_fraction,
    }
}

pub fn parse_embeddings<R: BufRead>(
    reader: R,
    path: &Path,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut dim: Option<usize> = None;
    let mut table: Option<EmbeddingTable> = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if n == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        let token = fields[0];
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(n + 1, format!("non-numeric field `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let d = *dim.get_or_insert(values.len());
        if d == 0 {
            return Err(err(n + 1, "vector has no components".into()));
        }
        if values.len() != d {
            return Err(err(
                n + 1,
                format!("dimension mismatch: expected {d}, found {}", values.len()),
            ));
        }
        let table = table.get_or_insert_with(|| EmbeddingTable::new(d));
        if vocab_filter.is_none_or(|f| f.contains(token)) {
            table.insert(token, values)?;
        }
    }
    table.ok_or_else(|| err(0, "no vectors found".into()))
}

pub fn load_embeddings(
    path: &Path,
    vocab_filter: Option<&HashSet<String>>,
) -> Result<EmbeddingTable> {
    let file = std::fs::File::open(path)?;
    parse_embeddings(BufReader::new(file), path, vocab_filter)
}

/// Deterministic stand-in for a pretrained table: each token gets a vector
/// drawn uniformly from `[-1, 1]^dim`, seeded by a hash of the token and
/// the table seed. Every token is therefore in vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl RandomEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }

    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()) ^ self.seed.rotate_left(17));
        (0..self.dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
    }
}

impl SentenceEncoder for RandomEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, text: &str) -> SentenceVector {
        mean_pool(self.dim, &tokenize(text), |t| Some(self.token_vector(t)))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(s: &str, filter: Option<&HashSet<String>>) -> Result<EmbeddingTable> {
        parse_embeddings(s.as_bytes(), Path::new("emb.txt"), filter)
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(
            tokenize("Plan dinner, with friends!"),
            ["plan", "dinner", "with", "friends"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("uber2airport"), ["uber2airport"]);
        assert_eq!(tokenize("--a__B  "), ["a", "b"]);
    }

    #[test]
    fn load_small_table() {
        let t = parse(
            "3 4\nplan 1 0 0 0\ndinner 0 1 0 0\nfriends 0 0 1e-1 -2.5E0\n",
            None,
        )
        .unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get("friends").unwrap(), &[0.0, 0.0, 0.1, -2.5]);
    }

    #[test]
    fn dimension_mismatch() {
        let e = parse("plan 1 0 0 0\ndinner 0 1 0\n", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(parse("plan 1 x 0\n", None).is_err());
    }

    #[test]
    fn vocab_filter() {
        let f: HashSet<String> = ["plan".to_string()].into();
        let t = parse("plan 1 0\ndinner 0 1\nfriends 1 1\n", Some(&f)).unwrap();
        assert_eq!(t.len(), 1);
    }

    fn two_d() -> EmbeddingTable {
        let mut t = EmbeddingTable::new(2);
        t.insert("a", vec![1.0, 0.0]).unwrap();
        t.insert("b", vec![0.0, 1.0]).unwrap();
        t
    }

    #[test]
    fn mean_pooling() {
        let t = two_d();
        assert_eq!(encode_sentence(&t, "a b").values, vec![0.5, 0.5]);
        let single = encode_sentence(&t, "a zzz");
        assert_eq!(single.values, vec![1.0, 0.0]);
        assert_eq!(single.oov_fraction, 0.5);
        let mut t3 = EmbeddingTable::new(3);
        t3.insert("x", vec![1.0, 1.0, 1.0]).unwrap();
        let oov = encode_sentence(&t3, "nothing known here");
        assert_eq!(oov.values, vec![0.0; 3]);
        assert_eq!(oov.oov_fraction, 1.0);
        assert_eq!(encode_sentence(&t3, "").oov_fraction, 1.0);
    }

    #[test]
    fn random_encoder_is_deterministic() {
        let e = RandomEncoder::new(8, 3);
        assert_eq!(e.encode("book a cab"), e.encode("book a cab"));
        assert_ne!(
            e.token_vector("cab"),
            RandomEncoder::new(8, 4).token_vector("cab")
        );
        assert!(e.token_vector("cab").iter().all(|x| x.abs() <= 1.0));
    }

    fn small_table() -> impl Strategy<Value = (EmbeddingTable, Vec<String>)> {
        (
            1usize..5,
            proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 4), 1..6),
        )
            .prop_map(|(dim, rows)| {
                let mut t = EmbeddingTable::new(dim);
                let mut toks = Vec::new();
                for (i, r) in rows.into_iter().enumerate() {
                    let tok = format!("t{i}");
                    t.insert(tok.clone(), r[..dim].to_vec()).unwrap();
                    toks.push(tok);
                }
                toks.push("unknown".into());
                (t, toks)
            })
    }

    proptest! {
        #[test]
        fn pooling_properties(
            (table, toks) in small_table(),
            picks in proptest::collection::vec(0usize..6, 0..8),
            scale in -3.0f64..3.0,
        ) {
            let words: Vec<&str> = picks.iter().map(|&i| toks[i % toks.len()].as_str()).collect();
            let text = words.join(" ");
            let mut rev = words.clone();
            rev.reverse();
            let a = encode_sentence(&table, &text);
            let b = encode_sentence(&table, &rev.join(" "));
            prop_assert_eq!(a.values.len(), table.dim());
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            let s = encode_sentence(&table.scaled(scale), &text);
            for (x, y) in a.values.iter().zip(&s.values) {
                prop_assert!((x * scale - y).abs() < 1e-9);
            }
        }
    }
}
