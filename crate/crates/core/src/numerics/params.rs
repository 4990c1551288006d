use crate::error::{Error, Result};

use super::matrix::Matrix;

/// A named, ordered collection of trainable tensors.
///
/// Gradients use the same type as the parameters they belong to, so a
/// gradient set always mirrors parameter shapes. Tied weights are modelled
/// by omitting the tied tensor entirely: the owner reads the same storage
/// for both roles and the gradient of both roles lands in one buffer.
pub trait Params: Clone + Send + Sync {
    fn tensors(&self) -> Vec<(String, &Matrix)>;

    /// Same order as [`Params::tensors`].
    fn tensors_mut(&mut self) -> Vec<&mut Matrix>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    fn accumulate(&mut self, other: &Self) {
        let src: Vec<Matrix> = other
            .tensors()
            .into_iter()
            .map(|(_, t)| t.clone())
            .collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(&src) {
            dst.add_assign(src);
        }
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }
}

pub(crate) fn check_mirror<P: Params>(params: &P, other: &P) -> Result<()> {
    let a = params.tensors();
    let b = other.tensors();
    if a.len() != b.len() {
        return Err(Error::shape(
            format!("{} tensors", a.len()),
            format!("{} tensors", b.len()),
        ));
    }
    for ((na, ta), (_, tb)) in a.iter().zip(&b) {
        if ta.shape() != tb.shape() {
            return Err(Error::shape(
                format!("{na} {:?}", ta.shape()),
                format!("{:?}", tb.shape()),
            ));
        }
    }
    Ok(())
}

/// A plain list of named tensors; handy for tests and generic tooling.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorList(pub Vec<(String, Matrix)>);

impl Params for TensorList {
    fn tensors(&self) -> Vec<(String, &Matrix)> {
        self.0.iter().map(|(n, t)| (n.clone(), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.0.iter_mut().map(|(_, t)| t).collect()
    }
}
