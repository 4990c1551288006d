//! Query-augmentation memory network: `K` hops of attention-weighted memory
//! readout added into the query, then a softmax prediction head.

mod hops;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_batch, EpisodicModel, SupportSet};
use crate::numerics::{sse_loss, Activation, DenseLayer, Matrix, Params};

pub(crate) use hops::{backward_hops, backward_memory, run_hops, MemoryForms, MemoryGrads};
pub use hops::{HopParams, Projection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemNetConfig {
    pub hops: usize,
    pub dim: usize,
    pub n_labels: usize,
    pub share_ab: bool,
    pub nonlinear: bool,
    /// 1: softmax(W h); 2: softmax(W tanh(H h)).
    pub head_layers: usize,
}

impl MemNetConfig {
    pub fn new(dim: usize, n_labels: usize) -> Self {
        Self {
            hops: 1,
            dim,
            n_labels,
            share_ab: false,
            nonlinear: true,
            head_layers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hops == 0 {
            return Err(Error::InvalidConfig(
                "memnet: hops must be at least 1".into(),
            ));
        }
        if !(1..=2).contains(&self.head_layers) {
            return Err(Error::InvalidConfig(
                "memnet: head_layers must be 1 or 2".into(),
            ));
        }
        if self.dim == 0 || self.n_labels == 0 {
            return Err(Error::InvalidConfig(
                "memnet: dim and n_labels must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemNetParams {
    pub hops: Vec<HopParams>,
    pub head_hidden: Option<DenseLayer>,
    pub head: DenseLayer,
}

impl MemNetParams {
    pub fn init(config: &MemNetConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = config.dim;
        Self {
            hops: (0..config.hops)
                .map(|_| HopParams::new(d, config.share_ab, config.nonlinear, rng))
                .collect(),
            head_hidden: (config.head_layers == 2)
                .then(|| DenseLayer::new(d, d, Activation::Tanh, rng)),
            head: DenseLayer::new(d, config.n_labels, Activation::Softmax, rng),
        }
    }

    pub fn zeros(config: &MemNetConfig) -> Self {
        let d = config.dim;
        Self {
            hops: (0..config.hops)
                .map(|_| HopParams::zeros(d, config.share_ab, config.nonlinear))
                .collect(),
            head_hidden: (config.head_layers == 2)
                .then(|| DenseLayer::zeros(d, d, Activation::Tanh)),
            head: DenseLayer::zeros(d, config.n_labels, Activation::Softmax),
        }
    }

    fn check(&self, config: &MemNetConfig) -> Result<()> {
        let shape_ok = self.hops.len() == config.hops
            && self.hops.iter().all(|h| {
                h.a.weight.shape() == (config.dim, config.dim) && h.is_shared() == config.share_ab
            })
            && self.head_hidden.is_some() == (config.head_layers == 2)
            && self.head.weight.shape() == (config.n_labels, config.dim);
        if shape_ok {
            Ok(())
        } else {
            Err(Error::shape(format!("{config:?}"), "memnet parameters"))
        }
    }
}

impl Params for MemNetParams {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (k, h) in self.hops.iter().enumerate() {
            h.push_tensors(&format!("hop{k}"), &mut out);
        }
        if let Some(h) = &self.head_hidden {
            out.push(("head.H".into(), &h.weight));
            out.push(("head.bias_H".into(), &h.bias));
        }
        out.push(("head.W".into(), &self.head.weight));
        out.push(("head.bias_W".into(), &self.head.bias));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for h in &mut self.hops {
            h.push_tensors_mut(&mut out);
        }
        if let Some(h) = &mut self.head_hidden {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }
}

/// Encoded memory vectors, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank(Matrix);

impl MemoryBank {
    pub fn new(x: Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::EmptySupport);
        }
        Ok(Self(x))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemNetOutput {
    pub scores: Vec<f64>,
    /// One simplex vector over memory rows per hop.
    pub attention: Vec<Vec<f64>>,
}

struct HeadTrace {
    input: Vec<f64>,
    hidden: Option<Vec<f64>>,
    scores: Vec<f64>,
}

fn head_forward(params: &MemNetParams, input: Vec<f64>) -> HeadTrace {
    let hidden = params.head_hidden.as_ref().map(|h| h.forward(&input));
    let scores = params.head.forward(hidden.as_deref().unwrap_or(&input));
    HeadTrace {
        input,
        hidden,
        scores,
    }
}

fn check_dims(config: &MemNetConfig, memory: &Matrix, query: &[f64]) -> Result<()> {
    if memory.rows() == 0 {
        return Err(Error::EmptySupport);
    }
    if memory.cols() != config.dim {
        return Err(Error::shape(
            format!("memory dim {}", config.dim),
            memory.cols(),
        ));
    }
    if query.len() != config.dim {
        return Err(Error::shape(
            format!("query dim {}", config.dim),
            query.len(),
        ));
    }
    Ok(())
}

pub fn memnet_forward(
    params: &MemNetParams,
    config: &MemNetConfig,
    memory: &MemoryBank,
    query: &[f64],
) -> Result<MemNetOutput> {
    config.validate()?;
    params.check(config)?;
    check_dims(config, memory.matrix(), query)?;
    let forms = MemoryForms::new(&params.hops, memory.matrix(), config.nonlinear);
    let (augmented, traces) = run_hops(&params.hops, &forms, config.nonlinear, query);
    let head = head_forward(params, augmented);
    Ok(MemNetOutput {
        scores: head.scores,
        attention: traces.into_iter().map(|t| t.attention).collect(),
    })
}

/// Mean squared error against multi-hot `targets`, averaged over the batch.
pub fn memnet_grads(
    params: &MemNetParams,
    config: &MemNetConfig,
    memory: &MemoryBank,
    queries: &Matrix,
    targets: &Matrix,
) -> Result<(f64, MemNetParams)> {
    config.validate()?;
    params.check(config)?;
    check_batch(queries, targets, config.dim, config.n_labels)?;
    check_dims(config, memory.matrix(), queries.row(0))?;

    let x = memory.matrix();
    let nonlinear = config.nonlinear;
    let forms = MemoryForms::new(&params.hops, x, nonlinear);
    let mut mem_grads = MemoryGrads::zeros(&forms);
    let mut grads = params.zeros_like();
    let batch = queries.rows() as f64;
    let mut total = 0.0;

    for (q, t) in queries.row_iter().zip(targets.row_iter()) {
        let (augmented, traces) = run_hops(&params.hops, &forms, nonlinear, q);
        let head = head_forward(params, augmented);
        let (loss, mut g) = sse_loss(&head.scores, t)?;
        total += loss;
        g.iter_mut().for_each(|v| *v /= batch);

        let head_in = head.hidden.as_deref().unwrap_or(&head.input);
        let mut g_in = params
            .head
            .backward(head_in, &head.scores, &g, &mut grads.head);
        if let (Some(h), Some(gh), Some(hidden)) =
            (&params.head_hidden, &mut grads.head_hidden, &head.hidden)
        {
            g_in = h.backward(&head.input, hidden, &g_in, gh);
        }
        backward_hops(
            &params.hops,
            &forms,
            &traces,
            nonlinear,
            g_in,
            &mut grads.hops,
            &mut mem_grads,
        );
    }
    backward_memory(
        &params.hops,
        x,
        &forms,
        &mem_grads,
        nonlinear,
        &mut grads.hops,
    );

    let loss = total / batch;
    if !loss.is_finite() {
        return Err(Error::NonFinite("memnet loss"));
    }
    Ok((loss, grads))
}

impl EpisodicModel for MemNetConfig {
    type Params = MemNetParams;

    fn name(&self) -> String {
        format!(
            "memnet(hops={}, share_ab={}, nonlinear={}, head_layers={})",
            self.hops, self.share_ab, self.nonlinear, self.head_layers
        )
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> MemNetParams {
        MemNetParams::init(self, rng)
    }

    fn scores(
        &self,
        params: &MemNetParams,
        support: &SupportSet,
        query: &[f64],
    ) -> Result<Vec<f64>> {
        let memory = MemoryBank::new(support.x.clone())?;
        Ok(memnet_forward(params, self, &memory, query)?.scores)
    }

    fn loss_and_grads(
        &self,
        params: &MemNetParams,
        support: &SupportSet,
        queries: &Matrix,
        targets: &Matrix,
    ) -> Result<(f64, MemNetParams)> {
        memnet_grads(
            params,
            self,
            &MemoryBank::new(support.x.clone())?,
            queries,
            targets,
        )
    }

    fn score_batch(
        &self,
        params: &MemNetParams,
        support: &SupportSet,
        queries: &Matrix,
    ) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        params.check(self)?;
        if queries.rows() == 0 {
            return Ok(Vec::new());
        }
        check_dims(self, &support.x, queries.row(0))?;
        let forms = MemoryForms::new(&params.hops, &support.x, self.nonlinear);
        Ok(queries
            .row_iter()
            .map(|q| {
                let (aug, _) = run_hops(&params.hops, &forms, self.nonlinear, q);
                head_forward(params, aug).scores
            })
            .collect())
    }
}
