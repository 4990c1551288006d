use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_batch, EpisodicModel, SupportSet};
use crate::numerics::{softmax_cross_entropy, sse_loss, Activation, DenseLayer, Matrix, Params};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Independent sigmoid per app, trained with squared error.
    #[default]
    Sigmoid,
    /// Softmax over apps, trained with cross entropy against the
    /// normalised multi-hot target.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FfnnConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub n_labels: usize,
    pub output_mode: OutputMode,
}

impl FfnnConfig {
    pub fn new(input: usize, n_labels: usize) -> Self {
        Self {
            input,
            hidden: vec![100, 100],
            n_labels,
            output_mode: OutputMode::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.n_labels == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "ffnn: layer widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sigmoid hidden layers followed by an output layer of width `|vocab|`.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnnModel {
    pub layers: Vec<DenseLayer>,
    pub output_mode: OutputMode,
}

impl FfnnModel {
    pub fn init<R: Rng + ?Sized>(config: &FfnnConfig, rng: &mut R) -> Self {
        let mut widths = vec![config.input];
        widths.extend(&config.hidden);
        let mut layers: Vec<DenseLayer> = widths
            .windows(2)
            .map(|w| DenseLayer::new(w[0], w[1], Activation::Sigmoid, rng))
            .collect();
        let out_act = match config.output_mode {
            OutputMode::Sigmoid => Activation::Sigmoid,
            OutputMode::Softmax => Activation::Softmax,
        };
        layers.push(DenseLayer::new(
            *widths.last().unwrap(),
            config.n_labels,
            out_act,
            rng,
        ));
        Self {
            layers,
            output_mode: config.output_mode,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn n_labels(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_dim)
    }

    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for layer in &self.layers {
            let next = layer.forward(acts.last().unwrap());
            acts.push(next);
        }
        acts
    }

    fn example_grads(
        &self,
        x: &[f64],
        target: &[f64],
        weight: f64,
        grads: &mut FfnnModel,
    ) -> Result<f64> {
        let acts = self.activations(x);
        let out = acts.last().unwrap();
        let last = self.layers.len() - 1;
        let (loss, mut g) = match self.output_mode {
            OutputMode::Sigmoid => sse_loss(out, target)?,
            OutputMode::Softmax => {
                let total: f64 = target.iter().sum();
                if total <= 0.0 {
                    return Err(Error::InvalidTarget("all-zero label row".into()));
                }
                let t: Vec<f64> = target.iter().map(|v| v / total).collect();
                // Logits of the output layer.
                let logits = pre_activation(&self.layers[last], &acts[last]);
                softmax_cross_entropy(&logits, &t)?
            }
        };
        g.iter_mut().for_each(|v| *v *= weight);

        let mut g_x = match self.output_mode {
            OutputMode::Sigmoid => {
                self.layers[last].backward(&acts[last], out, &g, &mut grads.layers[last])
            }
            // `g` is already the gradient w.r.t. the logits.
            OutputMode::Softmax => {
                linear_backward(&self.layers[last], &acts[last], &g, &mut grads.layers[last])
            }
        };
        for i in (0..last).rev() {
            g_x = self.layers[i].backward(&acts[i], &acts[i + 1], &g_x, &mut grads.layers[i]);
        }
        Ok(loss)
    }
}

fn pre_activation(layer: &DenseLayer, x: &[f64]) -> Vec<f64> {
    let mut z = layer.weight.matvec(x);
    for (o, b) in z.iter_mut().zip(layer.bias.as_slice()) {
        *o += b;
    }
    z
}

fn linear_backward(layer: &DenseLayer, x: &[f64], g: &[f64], grads: &mut DenseLayer) -> Vec<f64> {
    grads.weight.add_outer(g, x);
    for (gb, gi) in grads.bias.as_mut_slice().iter_mut().zip(g) {
        *gb += gi;
    }
    layer.weight.matvec_t(g)
}

impl Params for FfnnModel {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.W"), &l.weight),
                    (format!("layer{i}.bias"), &l.bias),
                ]
            })
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }
}

/// Per-app output scores for one encoded utterance.
pub fn ffnn_forward(model: &FfnnModel, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() {
        return Err(Error::shape(model.input_dim(), x.len()));
    }
    let out = model.activations(x).pop().unwrap();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ffnn output"));
    }
    Ok(out)
}

/// Apps whose sigmoid output is strictly above `threshold`.
pub fn ffnn_threshold_predict(model: &FfnnModel, x: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if model.output_mode != OutputMode::Sigmoid {
        return Err(Error::WrongOutputMode);
    }
    Ok(ffnn_forward(model, x)?
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > threshold)
        .map(|(i, _)| i)
        .collect())
}

/// The support set is ignored: the network maps each query directly.
impl EpisodicModel for FfnnConfig {
    type Params = FfnnModel;

    fn name(&self) -> String {
        let mode = match self.output_mode {
            OutputMode::Sigmoid => "sigmoid",
            OutputMode::Softmax => "softmax",
        };
        format!("ffnn(hidden={:?}, output={mode})", self.hidden)
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> FfnnModel {
        FfnnModel::init(self, rng)
    }

    fn scores(&self, params: &FfnnModel, _support: &SupportSet, query: &[f64]) -> Result<Vec<f64>> {
        ffnn_forward(params, query)
    }

    fn loss_and_grads(
        &self,
        params: &FfnnModel,
        _support: &SupportSet,
        queries: &Matrix,
        targets: &Matrix,
    ) -> Result<(f64, FfnnModel)> {
        check_batch(queries, targets, params.input_dim(), params.n_labels())?;
        let mut grads = params.zeros_like();
        let w = 1.0 / queries.rows() as f64;
        let mut total = 0.0;
        for (x, t) in queries.row_iter().zip(targets.row_iter()) {
            total += params.example_grads(x, t, w, &mut grads)?;
        }
        let loss = total * w;
        if !loss.is_finite() {
            return Err(Error::NonFinite("ffnn loss"));
        }
        Ok((loss, grads))
    }
}
