use super::params::Params;

/// Compares `analytic` gradients against central finite differences of
/// `loss_fn` around `params`.
///
/// Returns the maximum over all coordinates of
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<P, F>(loss_fn: F, params: &P, analytic: &P, epsilon: f64) -> f64
where
    P: Params,
    F: Fn(&P) -> f64,
{
    let analytic: Vec<Vec<f64>> = analytic
        .tensors()
        .iter()
        .map(|(_, t)| t.as_slice().to_vec())
        .collect();
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (ti, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let original = probe.tensors_mut()[ti].as_slice()[j];

            probe.tensors_mut()[ti].as_mut_slice()[j] = original + epsilon;
            let plus = loss_fn(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[j] = original - epsilon;
            let minus = loss_fn(&probe);
            probe.tensors_mut()[ti].as_mut_slice()[j] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}
