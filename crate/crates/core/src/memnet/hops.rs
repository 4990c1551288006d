//! Query-augmentation hops shared by the memory network and the hybrid
//! matching network prefix.
//!
//! Hop `k` with query `q`:
//!
//! ```text
//! u   = phi(B q + b_B)
//! m_i = phi(A x_i + b_A)        c_i = phi(C x_i + b_C)
//! p   = softmax_i(u . m_i)
//! q'  = u + sum_i p_i c_i
//! ```
//!
//! `phi` is tanh in the nonlinear variant and the identity (without
//! biases) in the linear one.

use rand::Rng;

use crate::numerics::{axpy, dot, softmax_backward_in_place, softmax_in_place, Activation, Matrix};

/// `phi(W x + b)`; `bias` is absent in the linear variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weight: Matrix,
    pub bias: Option<Matrix>,
}

impl Projection {
    pub fn new<R: Rng + ?Sized>(dim: usize, with_bias: bool, rng: &mut R) -> Self {
        Self {
            weight: Matrix::glorot(dim, dim, rng),
            bias: with_bias.then(|| Matrix::zeros(dim, 1)),
        }
    }

    /// Rectangular `output x input` projection.
    pub fn with_shape<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        with_bias: bool,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Matrix::glorot(output, input, rng),
            bias: with_bias.then(|| Matrix::zeros(output, 1)),
        }
    }

    pub fn zeros(dim: usize, with_bias: bool) -> Self {
        Self {
            weight: Matrix::zeros(dim, dim),
            bias: with_bias.then(|| Matrix::zeros(dim, 1)),
        }
    }

    fn activation(&self, nonlinear: bool) -> Activation {
        if nonlinear {
            Activation::Tanh
        } else {
            Activation::Identity
        }
    }

    pub fn apply(&self, x: &[f64], nonlinear: bool) -> Vec<f64> {
        let mut out = self.weight.matvec(x);
        if let Some(b) = &self.bias {
            axpy(1.0, b.as_slice(), &mut out);
        }
        self.activation(nonlinear).apply(&mut out);
        out
    }

    /// Applies the projection to every row of `x`.
    pub fn apply_rows(&self, x: &Matrix, nonlinear: bool) -> Matrix {
        let mut out = x.mul_transpose(&self.weight);
        let act = self.activation(nonlinear);
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            if let Some(b) = &self.bias {
                axpy(1.0, b.as_slice(), row);
            }
            act.apply(row);
        }
        out
    }

    /// Given the gradient w.r.t. the output `y = apply(x)`, accumulates
    /// parameter gradients and returns the gradient w.r.t. `x`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        grad_y: &[f64],
        nonlinear: bool,
        grads: &mut Projection,
    ) -> Vec<f64> {
        let mut g = grad_y.to_vec();
        self.activation(nonlinear).backward(y, &mut g);
        grads.weight.add_outer(&g, x);
        if let Some(b) = &mut grads.bias {
            axpy(1.0, &g, b.as_mut_slice());
        }
        self.weight.matvec_t(&g)
    }

    /// Batched parameter gradient for [`Projection::apply_rows`]; `x`
    /// itself is constant so no input gradient is returned.
    pub(crate) fn backward_rows(
        &self,
        x: &Matrix,
        y: &Matrix,
        grad_y: &Matrix,
        nonlinear: bool,
        grads: &mut Projection,
    ) {
        let mut g = grad_y.clone();
        let act = self.activation(nonlinear);
        for r in 0..g.rows() {
            act.backward(y.row(r), g.row_mut(r));
        }
        grads.weight.add_assign(&g.transpose_mul(x));
        if let Some(b) = &mut grads.bias {
            for row in g.row_iter() {
                axpy(1.0, row, b.as_mut_slice());
            }
        }
    }
}

/// One hop's embeddings. With `b == None` the query projection is tied to
/// `a` (same storage).
#[derive(Debug, Clone, PartialEq)]
pub struct HopParams {
    pub a: Projection,
    pub b: Option<Projection>,
    pub c: Projection,
}

impl HopParams {
    pub fn new<R: Rng + ?Sized>(dim: usize, share_ab: bool, nonlinear: bool, rng: &mut R) -> Self {
        let a = Projection::new(dim, nonlinear, rng);
        let b = (!share_ab).then(|| Projection::new(dim, nonlinear, rng));
        let c = Projection::new(dim, nonlinear, rng);
        Self { a, b, c }
    }

    pub fn zeros(dim: usize, share_ab: bool, nonlinear: bool) -> Self {
        Self {
            a: Projection::zeros(dim, nonlinear),
            b: (!share_ab).then(|| Projection::zeros(dim, nonlinear)),
            c: Projection::zeros(dim, nonlinear),
        }
    }

    /// The query projection, which is `a` when tied.
    pub fn query_projection(&self) -> &Projection {
        self.b.as_ref().unwrap_or(&self.a)
    }

    pub fn is_shared(&self) -> bool {
        self.b.is_none()
    }

    pub(crate) fn push_tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        let mut push = |role: &str, p: &'a Projection| {
            out.push((format!("{prefix}.{role}"), &p.weight));
            if let Some(b) = &p.bias {
                out.push((format!("{prefix}.bias_{role}"), b));
            }
        };
        push("A", &self.a);
        if let Some(b) = &self.b {
            push("B", b);
        }
        push("C", &self.c);
    }

    pub(crate) fn push_tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        let HopParams { a, b, c } = self;
        for p in [Some(a), b.as_mut(), Some(c)].into_iter().flatten() {
            out.push(&mut p.weight);
            if let Some(bias) = &mut p.bias {
                out.push(bias);
            }
        }
    }
}

/// Query-independent memory transforms for every hop.
pub(crate) struct MemoryForms {
    pub m: Vec<Matrix>,
    pub c: Vec<Matrix>,
}

impl MemoryForms {
    pub fn new(hops: &[HopParams], memory: &Matrix, nonlinear: bool) -> Self {
        Self {
            m: hops
                .iter()
                .map(|h| h.a.apply_rows(memory, nonlinear))
                .collect(),
            c: hops
                .iter()
                .map(|h| h.c.apply_rows(memory, nonlinear))
                .collect(),
        }
    }
}

/// Accumulated gradients w.r.t. the memory forms, one matrix per hop.
pub(crate) struct MemoryGrads {
    pub m: Vec<Matrix>,
    pub c: Vec<Matrix>,
}

impl MemoryGrads {
    pub fn zeros(forms: &MemoryForms) -> Self {
        let z = |v: &Vec<Matrix>| {
            v.iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect()
        };
        Self {
            m: z(&forms.m),
            c: z(&forms.c),
        }
    }
}

pub(crate) struct HopTrace {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub attention: Vec<f64>,
}

/// Runs every hop; returns the final augmented query and per-hop traces.
pub(crate) fn run_hops(
    hops: &[HopParams],
    forms: &MemoryForms,
    nonlinear: bool,
    query: &[f64],
) -> (Vec<f64>, Vec<HopTrace>) {
    let mut q = query.to_vec();
    let mut traces = Vec::with_capacity(hops.len());
    for (k, hop) in hops.iter().enumerate() {
        let u = hop.query_projection().apply(&q, nonlinear);
        let m = &forms.m[k];
        let mut p: Vec<f64> = m.row_iter().map(|mi| dot(&u, mi)).collect();
        softmax_in_place(&mut p);
        let mut next = u.clone();
        for (pi, ci) in p.iter().zip(forms.c[k].row_iter()) {
            axpy(*pi, ci, &mut next);
        }
        traces.push(HopTrace {
            q: std::mem::replace(&mut q, next),
            u,
            attention: p,
        });
    }
    (q, traces)
}

/// Back-propagates `grad_out` (w.r.t. the output of [`run_hops`]) through
/// all hops. Query-projection gradients go straight into `grads`; memory
/// form gradients accumulate in `mem_grads` and are folded into the
/// parameters by [`backward_memory`] once per batch. Returns the gradient
/// w.r.t. the input query.
pub(crate) fn backward_hops(
    hops: &[HopParams],
    forms: &MemoryForms,
    traces: &[HopTrace],
    nonlinear: bool,
    grad_out: Vec<f64>,
    grads: &mut [HopParams],
    mem_grads: &mut MemoryGrads,
) -> Vec<f64> {
    let mut g_next = grad_out;
    for k in (0..hops.len()).rev() {
        let trace = &traces[k];
        let m = &forms.m[k];
        let c = &forms.c[k];
        let p = &trace.attention;

        // q' = u + o, so both receive g_next.
        let mut g_u = g_next.clone();
        let g_o = &g_next;
        let mut g_p: Vec<f64> = c.row_iter().map(|ci| dot(g_o, ci)).collect();
        for (i, pi) in p.iter().enumerate() {
            axpy(*pi, g_o, mem_grads.c[k].row_mut(i));
        }
        softmax_backward_in_place(p, &mut g_p);
        for (i, gs) in g_p.iter().enumerate() {
            if *gs != 0.0 {
                axpy(*gs, m.row(i), &mut g_u);
                axpy(*gs, &trace.u, mem_grads.m[k].row_mut(i));
            }
        }

        let hop = &hops[k];
        let grad_hop = &mut grads[k];
        g_next = match (&hop.b, &mut grad_hop.b) {
            (Some(b), Some(gb)) => b.backward(&trace.q, &trace.u, &g_u, nonlinear, gb),
            _ => hop
                .a
                .backward(&trace.q, &trace.u, &g_u, nonlinear, &mut grad_hop.a),
        };
    }
    g_next
}

pub(crate) fn backward_memory(
    hops: &[HopParams],
    memory: &Matrix,
    forms: &MemoryForms,
    mem_grads: &MemoryGrads,
    nonlinear: bool,
    grads: &mut [HopParams],
) {
    for (k, hop) in hops.iter().enumerate() {
        hop.a.backward_rows(
            memory,
            &forms.m[k],
            &mem_grads.m[k],
            nonlinear,
            &mut grads[k].a,
        );
        hop.c.backward_rows(
            memory,
            &forms.c[k],
            &mem_grads.c[k],
            nonlinear,
            &mut grads[k].c,
        );
    }
}
