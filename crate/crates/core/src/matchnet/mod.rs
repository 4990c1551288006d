//! Matching networks over a labelled support set, and the hybrid whose
//! first `K - 1` hops are query augmentation and whose last hop is a
//! matching readout.
//!
//! ```text
//! a_i = softmax_i( cos(f(x), g(x_i)) )      f(v) = tanh(F v + b_F)
//! y   = sum_i a_i y_i                       g(v) = tanh(G v + b_G)
//! ```
//!
//! With `shared` set, `g` is `f` and the hybrid prefix ties each hop's
//! query projection to its memory projection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memnet::{
    backward_hops, backward_memory, run_hops, HopParams, MemoryForms, MemoryGrads, Projection,
};
use crate::model::{check_batch, EpisodicModel, SupportSet};
use crate::numerics::{
    cosine, cosine_backward, softmax_backward_in_place, softmax_in_place, sse_loss, Matrix, Params,
};

pub use crate::model::Episode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchNetConfig {
    pub dim: usize,
    /// Width of the f/g tanh layer.
    pub hidden: usize,
    /// Total hops `K`; `K - 1` query-augmentation hops precede the match.
    pub hops: usize,
    pub shared: bool,
}

impl MatchNetConfig {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            hidden: 300,
            hops: 1,
            shared: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::InvalidConfig(
                "matchnet: hops must be at least 1".into(),
            ));
        }
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::InvalidConfig(
                "matchnet: dim and hidden must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchNetParams {
    pub f: Projection,
    /// `None` when tied to `f`.
    pub g: Option<Projection>,
    /// Query-augmentation hops (always the nonlinear variant).
    pub prefix: Vec<HopParams>,
}

impl MatchNetParams {
    pub fn init<R: Rng + ?Sized>(config: &MatchNetConfig, rng: &mut R) -> Self {
        let f = Projection::with_shape(config.dim, config.hidden, true, rng);
        let g =
            (!config.shared).then(|| Projection::with_shape(config.dim, config.hidden, true, rng));
        let prefix = (1..config.hops)
            .map(|_| HopParams::new(config.dim, config.shared, true, rng))
            .collect();
        Self { f, g, prefix }
    }

    /// The support-side embedding, which is `f` when tied.
    pub fn support_projection(&self) -> &Projection {
        self.g.as_ref().unwrap_or(&self.f)
    }

    pub fn embed_query(&self, v: &[f64]) -> Vec<f64> {
        self.f.apply(v, true)
    }

    pub fn embed_support(&self, v: &[f64]) -> Vec<f64> {
        self.support_projection().apply(v, true)
    }

    fn check(&self, dim: usize) -> Result<()> {
        let f = self.f.weight.shape();
        let g_ok = self.g.as_ref().is_none_or(|g| g.weight.shape() == f);
        let prefix_ok = self.prefix.iter().all(|h| h.a.weight.shape() == (dim, dim));
        if f.1 == dim && g_ok && prefix_ok {
            Ok(())
        } else {
            Err(Error::shape(
                format!("matchnet parameters for dim {dim}"),
                format!("f {f:?}"),
            ))
        }
    }
}

impl Params for MatchNetParams {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (k, h) in self.prefix.iter().enumerate() {
            h.push_tensors(&format!("hop{k}"), &mut out);
        }
        out.push(("f.W".into(), &self.f.weight));
        if let Some(b) = &self.f.bias {
            out.push(("f.bias".into(), b));
        }
        if let Some(g) = &self.g {
            out.push(("g.W".into(), &g.weight));
            if let Some(b) = &g.bias {
                out.push(("g.bias".into(), b));
            }
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for h in &mut self.prefix {
            h.push_tensors_mut(&mut out);
        }
        for p in [Some(&mut self.f), self.g.as_mut()].into_iter().flatten() {
            out.push(&mut p.weight);
            if let Some(b) = &mut p.bias {
                out.push(b);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    pub y_hat: Vec<f64>,
    /// Simplex over support rows.
    pub attention: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridDiagnostics {
    /// Query after the augmentation hops (the input to the matching hop).
    pub augmented_query: Vec<f64>,
    pub prefix_attention: Vec<Vec<f64>>,
    pub attention: Vec<f64>,
}

fn check_support(support: &SupportSet, dim: usize, query: &[f64]) -> Result<()> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if support.dim() != dim {
        return Err(Error::shape(format!("support dim {dim}"), support.dim()));
    }
    if query.len() != dim {
        return Err(Error::shape(format!("query dim {dim}"), query.len()));
    }
    Ok(())
}

fn read_out(support_embedded: &Matrix, y: &Matrix, fx: &[f64]) -> MatchOutput {
    let mut attention: Vec<f64> = support_embedded
        .row_iter()
        .map(|gx| cosine(fx, gx))
        .collect();
    softmax_in_place(&mut attention);
    let y_hat = y.matvec_t(&attention);
    MatchOutput { y_hat, attention }
}

/// Plain matching-network readout of `query` (no augmentation hops).
pub fn matchnet_forward(
    params: &MatchNetParams,
    support: &SupportSet,
    query: &[f64],
) -> Result<MatchOutput> {
    let dim = params.f.weight.cols();
    params.check(dim)?;
    check_support(support, dim, query)?;
    let g = params.support_projection().apply_rows(&support.x, true);
    Ok(read_out(&g, &support.y, &params.embed_query(query)))
}

/// Runs the `K - 1` prefix hops over the support utterances, then the
/// matching readout. With no prefix hops this is exactly
/// [`matchnet_forward`].
pub fn hybrid_forward(
    params: &MatchNetParams,
    support: &SupportSet,
    query: &[f64],
) -> Result<(Vec<f64>, HybridDiagnostics)> {
    if params.prefix.is_empty() {
        let out = matchnet_forward(params, support, query)?;
        return Ok((
            out.y_hat,
            HybridDiagnostics {
                augmented_query: query.to_vec(),
                prefix_attention: Vec::new(),
                attention: out.attention,
            },
        ));
    }
    let dim = params.f.weight.cols();
    params.check(dim)?;
    check_support(support, dim, query)?;
    let forms = MemoryForms::new(&params.prefix, &support.x, true);
    let (augmented, traces) = run_hops(&params.prefix, &forms, true, query);
    let out = matchnet_forward(params, support, &augmented)?;
    Ok((
        out.y_hat,
        HybridDiagnostics {
            augmented_query: augmented,
            prefix_attention: traces.into_iter().map(|t| t.attention).collect(),
            attention: out.attention,
        },
    ))
}

/// Mean squared error between `y_hat` and each query's multi-hot target,
/// averaged over the episode's queries.
pub fn matchnet_grads(params: &MatchNetParams, episode: &Episode) -> Result<(f64, MatchNetParams)> {
    batch_grads(params, &episode.support, &episode.queries, &episode.targets)
}

fn batch_grads(
    params: &MatchNetParams,
    support: &SupportSet,
    queries: &Matrix,
    targets: &Matrix,
) -> Result<(f64, MatchNetParams)> {
    let dim = params.f.weight.cols();
    params.check(dim)?;
    check_batch(queries, targets, dim, support.n_labels())?;
    check_support(support, dim, queries.row(0))?;

    let x = &support.x;
    let y = &support.y;
    let forms = MemoryForms::new(&params.prefix, x, true);
    let mut mem_grads = MemoryGrads::zeros(&forms);
    let g_proj = params.support_projection();
    let gx = g_proj.apply_rows(x, true);
    let mut grad_gx = Matrix::zeros(gx.rows(), gx.cols());
    let mut grads = params.zeros_like();
    let batch = queries.rows() as f64;
    let mut total = 0.0;

    for (q, t) in queries.row_iter().zip(targets.row_iter()) {
        let (x_hat, traces) = run_hops(&params.prefix, &forms, true, q);
        let fx = params.embed_query(&x_hat);
        let out = read_out(&gx, y, &fx);
        let (loss, mut g_y) = sse_loss(&out.y_hat, t)?;
        total += loss;
        g_y.iter_mut().for_each(|v| *v /= batch);

        // y_hat = Y^T a
        let mut g_att = y.matvec(&g_y);
        softmax_backward_in_place(&out.attention, &mut g_att);
        let mut g_fx = vec![0.0; fx.len()];
        for (i, gs) in g_att.iter().enumerate() {
            cosine_backward(&fx, gx.row(i), *gs, &mut g_fx, grad_gx.row_mut(i));
        }
        let g_x_hat = params.f.backward(&x_hat, &fx, &g_fx, true, &mut grads.f);
        if !params.prefix.is_empty() {
            backward_hops(
                &params.prefix,
                &forms,
                &traces,
                true,
                g_x_hat,
                &mut grads.prefix,
                &mut mem_grads,
            );
        }
    }

    let grads_g = grads.g.as_mut().unwrap_or(&mut grads.f);
    g_proj.backward_rows(x, &gx, &grad_gx, true, grads_g);
    backward_memory(
        &params.prefix,
        x,
        &forms,
        &mem_grads,
        true,
        &mut grads.prefix,
    );

    let loss = total / batch;
    if !loss.is_finite() {
        return Err(Error::NonFinite("matchnet loss"));
    }
    Ok((loss, grads))
}

impl EpisodicModel for MatchNetConfig {
    type Params = MatchNetParams;

    fn name(&self) -> String {
        let kind = if self.hops == 1 { "matchnet" } else { "hybrid" };
        format!(
            "{kind}(hops={}, hidden={}, shared={})",
            self.hops, self.hidden, self.shared
        )
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> MatchNetParams {
        MatchNetParams::init(self, rng)
    }

    fn scores(
        &self,
        params: &MatchNetParams,
        support: &SupportSet,
        query: &[f64],
    ) -> Result<Vec<f64>> {
        Ok(hybrid_forward(params, support, query)?.0)
    }

    fn score_batch(
        &self,
        params: &MatchNetParams,
        support: &SupportSet,
        queries: &Matrix,
    ) -> Result<Vec<Vec<f64>>> {
        if queries.rows() == 0 {
            return Ok(Vec::new());
        }
        params.check(self.dim)?;
        check_support(support, self.dim, queries.row(0))?;
        let forms = MemoryForms::new(&params.prefix, &support.x, true);
        let gx = params.support_projection().apply_rows(&support.x, true);
        Ok(queries
            .row_iter()
            .map(|q| {
                let (x_hat, _) = run_hops(&params.prefix, &forms, true, q);
                read_out(&gx, &support.y, &params.embed_query(&x_hat)).y_hat
            })
            .collect())
    }

    fn loss_and_grads(
        &self,
        params: &MatchNetParams,
        support: &SupportSet,
        queries: &Matrix,
        targets: &Matrix,
    ) -> Result<(f64, MatchNetParams)> {
        batch_grads(params, support, queries, targets)
    }
}

#[cfg(test)]
mod tests;
