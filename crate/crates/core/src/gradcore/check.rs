use super::{Graph, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradCheckError {
    #[error("function value is not finite near coordinate {leaf}[{index}]")]
    NonFinite { leaf: usize, index: usize },
    #[error("one-sided differences disagree at {leaf}[{index}]: the function has a kink there")]
    NonSmooth { leaf: usize, index: usize },
    #[error("function output is not a single element")]
    NotScalar,
}

fn evaluate<F>(f: &F, points: &[Tensor]) -> f64
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = points.iter().map(|p| g.constant(p)).collect();
    let out = f(&g, &leaves);
    let v = out.value_ref();
    if v.len() == 1 {
        v.data()[0]
    } else {
        f64::NAN
    }
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps`, over every coordinate of every input.
///
/// Returns `max |g_ad − g_fd| / max(1, |g_ad|)`. Coordinates where the forward
/// and backward one-sided differences disagree are reported as kinks rather
/// than compared.
pub fn finite_diff_check<F>(f: F, points: &[Tensor], eps: f64) -> Result<f64, GradCheckError>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Var<'g>,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let g = Graph::new();
    let leaves: Vec<Var<'_>> = points.iter().map(|p| g.param(p)).collect();
    let out = f(&g, &leaves);
    if out.value_ref().len() != 1 {
        return Err(GradCheckError::NotScalar);
    }
    let f0 = out.item();
    if !f0.is_finite() {
        return Err(GradCheckError::NonFinite { leaf: 0, index: 0 });
    }
    g.backward(out).map_err(|_| GradCheckError::NotScalar)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| g.grad_or_zeros(l)).collect();

    let mut worst = 0.0_f64;
    let mut shifted: Vec<Tensor> = points.to_vec();
    for (leaf, point) in points.iter().enumerate() {
        for index in 0..point.len() {
            let base = point.data()[index];
            shifted[leaf].data_mut()[index] = base + eps;
            let up = evaluate(&f, &shifted);
            shifted[leaf].data_mut()[index] = base - eps;
            let down = evaluate(&f, &shifted);
            shifted[leaf].data_mut()[index] = base;
            if !up.is_finite() || !down.is_finite() {
                return Err(GradCheckError::NonFinite { leaf, index });
            }
            let central = (up - down) / (2.0 * eps);
            let forward = (up - f0) / eps;
            let backward = (f0 - down) / eps;
            if (forward - backward).abs() > 1e-2 * central.abs().max(1.0) {
                return Err(GradCheckError::NonSmooth { leaf, index });
            }
            let ad = analytic[leaf].data()[index];
            worst = worst.max((ad - central).abs() / ad.abs().max(1.0));
        }
    }
    Ok(worst)
}
