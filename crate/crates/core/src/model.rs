//! Common surface of the trainable architectures.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Params};

/// Labelled examples a model attends over: encoded utterances `x` (M x d)
/// and their multi-hot label rows `y` (M x L).
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub x: Matrix,
    pub y: Matrix,
}

impl SupportSet {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::shape(format!("{} label rows", x.rows()), y.rows()));
        }
        if x.rows() == 0 {
            return Err(Error::EmptySupport);
        }
        if y.row_iter().any(|r| r.iter().all(|v| *v == 0.0)) {
            return Err(Error::InvalidTarget("support label row is all zero".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_labels(&self) -> usize {
        self.y.cols()
    }
}

/// An architecture trained on episodes of (support, query batch).
///
/// Implementors are configurations; parameters live in `Self::Params` so
/// the same configuration can be trained from several random starts.
pub trait EpisodicModel: Sync {
    type Params: Params;

    fn name(&self) -> String;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Self::Params;

    /// Per-label scores for one query.
    fn scores(
        &self,
        params: &Self::Params,
        support: &SupportSet,
        query: &[f64],
    ) -> Result<Vec<f64>>;

    /// Mean loss over the batch rows of `queries` / `targets` and its
    /// gradient.
    fn loss_and_grads(
        &self,
        params: &Self::Params,
        support: &SupportSet,
        queries: &Matrix,
        targets: &Matrix,
    ) -> Result<(f64, Self::Params)>;

    /// Scores for every row of `queries`; architectures override this to
    /// share support-side work across queries.
    fn score_batch(
        &self,
        params: &Self::Params,
        support: &SupportSet,
        queries: &Matrix,
    ) -> Result<Vec<Vec<f64>>> {
        queries
            .row_iter()
            .map(|q| self.scores(params, support, q))
            .collect()
    }

    fn loss(
        &self,
        params: &Self::Params,
        support: &SupportSet,
        queries: &Matrix,
        targets: &Matrix,
    ) -> Result<f64> {
        Ok(self.loss_and_grads(params, support, queries, targets)?.0)
    }
}

pub(crate) fn check_batch(
    queries: &Matrix,
    targets: &Matrix,
    dim: usize,
    labels: usize,
) -> Result<()> {
    if queries.cols() != dim {
        return Err(Error::shape(format!("query dim {dim}"), queries.cols()));
    }
    if targets.cols() != labels {
        return Err(Error::shape(
            format!("target width {labels}"),
            targets.cols(),
        ));
    }
    if queries.rows() != targets.rows() {
        return Err(Error::shape(
            format!("{} targets", queries.rows()),
            targets.rows(),
        ));
    }
    if queries.rows() == 0 {
        return Err(Error::InvalidConfig("empty query batch".into()));
    }
    Ok(())
}

/// One training step: a query batch and the support it attends over.
/// Ids are corpus sample indices; no query may also sit in the support.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: SupportSet,
    pub support_ids: Vec<usize>,
    pub queries: Matrix,
    pub targets: Matrix,
    pub query_ids: Vec<usize>,
}

impl Episode {
    pub fn new(
        support: SupportSet,
        support_ids: Vec<usize>,
        queries: Matrix,
        targets: Matrix,
        query_ids: Vec<usize>,
    ) -> Result<Self> {
        if support_ids.len() != support.len() || query_ids.len() != queries.rows() {
            return Err(Error::shape("one id per row", "mismatched id list"));
        }
        let in_support: std::collections::HashSet<usize> = support_ids.iter().copied().collect();
        if let Some(id) = query_ids.iter().find(|id| in_support.contains(id)) {
            return Err(Error::InvalidConfig(format!(
                "query sample {id} is also in the support set"
            )));
        }
        check_batch(&queries, &targets, support.dim(), support.n_labels())?;
        Ok(Self {
            support,
            support_ids,
            queries,
            targets,
            query_ids,
        })
    }
}
