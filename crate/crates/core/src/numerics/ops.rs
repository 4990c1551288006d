use crate::error::{Error, Result};

use super::matrix::{dot, norm};

/// Norms below this make cosine similarity zero by convention.
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Sigmoid => v.iter_mut().for_each(|x| *x = sigmoid(*x)),
            Activation::Softmax => softmax_in_place(v),
            Activation::Identity => {}
        }
    }

    /// Back-propagates `grad` (w.r.t. the activation output `out`) to the
    /// pre-activation, in place.
    pub fn backward(self, out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Tanh => {
                for (g, y) in grad.iter_mut().zip(out) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Sigmoid => {
                for (g, y) in grad.iter_mut().zip(out) {
                    *g *= y * (1.0 - y);
                }
            }
            Activation::Softmax => softmax_backward_in_place(out, grad),
            Activation::Identity => {}
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    let mut out = v.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub fn softmax_in_place(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Jacobian-vector product of softmax: `g <- p * (g - <p, g>)`.
pub fn softmax_backward_in_place(p: &[f64], g: &mut [f64]) {
    let inner = dot(p, g);
    for (gi, pi) in g.iter_mut().zip(p) {
        *gi = pi * (*gi - inner);
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    Ok(cosine(a, b))
}

#[inline]
pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na < COSINE_NORM_FLOOR || nb < COSINE_NORM_FLOOR {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Accumulates `scale * d cos(a, b) / da` into `ga` and `scale * d/db` into `gb`.
pub(crate) fn cosine_backward(a: &[f64], b: &[f64], scale: f64, ga: &mut [f64], gb: &mut [f64]) {
    let na = norm(a);
    let nb = norm(b);
    if na < COSINE_NORM_FLOOR || nb < COSINE_NORM_FLOOR || scale == 0.0 {
        return;
    }
    let inv = 1.0 / (na * nb);
    let c = dot(a, b) * inv;
    let ca = c / (na * na);
    let cb = c / (nb * nb);
    for i in 0..a.len() {
        ga[i] += scale * (b[i] * inv - ca * a[i]);
        gb[i] += scale * (a[i] * inv - cb * b[i]);
    }
}

/// Mean squared error `(1/N) * sum (p - t)^2` and its gradient `(2/N)(p - t)`.
pub fn sse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape(target.len(), pred.len()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Cross entropy of `softmax(logits)` against a distribution `target`.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::shape(target.len(), logits.len()));
    }
    let total: f64 = target.iter().sum();
    if target.iter().any(|t| *t < 0.0 || !t.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidTarget(
            "entries must be non-negative and sum to 1".into(),
        ));
    }
    let p = softmax(logits)?;
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    let loss = target
        .iter()
        .zip(logits)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, l)| -t * (l - log_z))
        .sum();
    let grad = p.iter().zip(target).map(|(p, t)| p - t).collect();
    Ok((loss, grad))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn softmax_uniform_and_stable() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for x in p {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert_eq!(softmax(&[1000.0, 1000.0]).unwrap(), vec![0.5, 0.5]);
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // exp(k) / (e + e^2 + e^3), evaluated with mpmath at 30 digits.
        let want = [
            0.090030573170380462,
            0.24472847105479767,
            0.66524095577482190,
        ];
        let got = softmax(&[1.0, 2.0, 3.0]).unwrap();
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-8);
        }
    }

    #[test]
    fn cosine_conventions() {
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sse_examples() {
        let (l, g) = sse_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
        let (l, g) = sse_loss(&[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![1.0, 0.0]);
        assert!(sse_loss(&[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let k = 5;
        let mut t = vec![0.0; k];
        t[2] = 1.0;
        let (l, _) = softmax_cross_entropy(&[0.7; 5], &t).unwrap();
        assert_abs_diff_eq!(l, (k as f64).ln(), epsilon = 1e-12);

        let logits = [0.1, -1.0, 2.0];
        let p = softmax(&logits).unwrap();
        let (_, g) = softmax_cross_entropy(&logits, &p).unwrap();
        for x in g {
            assert_abs_diff_eq!(x, 0.0, epsilon = 1e-15);
        }
        assert!(softmax_cross_entropy(&logits, &[1.0, 1.0, 0.0]).is_err());
        assert!(softmax_cross_entropy(&logits, &[1.5, -0.5, 0.0]).is_err());
    }
}
