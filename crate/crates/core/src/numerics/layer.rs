use rand::Rng;

use super::matrix::Matrix;
use super::ops::Activation;

/// Fully connected layer `act(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Matrix::glorot(output, input, rng),
            bias: Matrix::zeros(output, 1),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Matrix::zeros(output, input),
            bias: Matrix::zeros(output, 1),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.weight.matvec(x);
        for (o, b) in out.iter_mut().zip(self.bias.as_slice()) {
            *o += b;
        }
        self.activation.apply(&mut out);
        out
    }

    /// Back-propagates `grad_out` (w.r.t. the activated output `out` produced
    /// from input `x`), accumulating parameter gradients into `grads` and
    /// returning the gradient w.r.t. `x`.
    pub fn backward(
        &self,
        x: &[f64],
        out: &[f64],
        grad_out: &[f64],
        grads: &mut DenseLayer,
    ) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        self.activation.backward(out, &mut g);
        grads.weight.add_outer(&g, x);
        for (gb, gi) in grads.bias.as_mut_slice().iter_mut().zip(&g) {
            *gb += gi;
        }
        self.weight.matvec_t(&g)
    }
}
