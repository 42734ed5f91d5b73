//! Ground-truth gradients: an explicit reverse sweep through the MLP and a
//! central-difference checker for the sweep itself.

use crate::error::{ArError, Result};
use crate::math::{
    cosine_similarity, matvec_transposed, mean_squared_difference, mse_grad, mse_loss, outer,
    Matrix, Vector,
};
use crate::network::{forward, ForwardTrace, NetworkParams};
use crate::relaxation::GradientEstimate;

/// `activation_grads[l]` is `∂L/∂x^l` for `l` in `0..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleGradients {
    pub activation_grads: Vec<Vector>,
    pub weight_grads: Vec<Matrix>,
}

/// Reverse-mode chain rule for `L = ½‖x^L − T‖²`.
pub fn backprop(
    trace: &ForwardTrace,
    params: &NetworkParams,
    target: &Vector,
) -> Result<OracleGradients> {
    if trace.depth() != params.depth() {
        return Err(ArError::shape(
            "backprop",
            format!("trace depth {}", trace.depth()),
            format!("network depth {}", params.depth()),
        ));
    }
    let depth = params.depth();
    let mut activation_grads = vec![Vector::default(); depth + 1];
    let mut weight_grads = vec![Matrix::zeros(0, 0); depth];
    activation_grads[depth] = mse_grad(trace.output(), target)?;
    for l in (0..depth).rev() {
        let spec = params.layers()[l];
        let delta = activation_grads[l + 1]
            .hadamard(&spec.activation.derivative(&trace.preactivations[l]))?;
        weight_grads[l] = outer(&delta, &trace.activations[l]);
        activation_grads[l] = matvec_transposed(&params.weights()[l], &delta)?;
    }
    Ok(OracleGradients {
        activation_grads,
        weight_grads,
    })
}

/// Central differences of the loss with respect to every weight entry.
pub fn finite_diff_weight_grads(
    params: &NetworkParams,
    input: &Vector,
    target: &Vector,
    step: f64,
) -> Result<Vec<Matrix>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(ArError::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let loss = |p: &NetworkParams| -> Result<f64> { mse_loss(forward(p, input)?.output(), target) };
    let mut work = params.clone();
    let mut grads = Vec::with_capacity(params.depth());
    for l in 0..params.depth() {
        let (rows, cols) = (params.weights()[l].rows(), params.weights()[l].cols());
        let mut g = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let w0 = params.weights()[l].get(i, j);
                work.weights_mut()[l].set(i, j, w0 + step);
                let up = loss(&work)?;
                work.weights_mut()[l].set(i, j, w0 - step);
                let down = loss(&work)?;
                work.weights_mut()[l].set(i, j, w0);
                g.set(i, j, (up - down) / (2.0 * step));
            }
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Discrepancy between relaxed activations and oracle gradients, layers `1..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientReport {
    pub per_layer_mse: Vec<f64>,
    pub per_layer_cosine: Vec<f64>,
    /// Largest absolute entry difference over all weight gradients.
    pub max_abs_diff: f64,
}

impl GradientReport {
    pub fn max_mse(&self) -> f64 {
        self.per_layer_mse.iter().copied().fold(0.0, f64::max)
    }
}

pub fn compare(ar: &GradientEstimate, oracle: &OracleGradients) -> Result<GradientReport> {
    if oracle.activation_grads.is_empty() {
        return Err(ArError::shape("compare", "relaxed layers", "empty oracle"));
    }
    compare_layers(
        &ar.activation_grads,
        &ar.weight_grads,
        &oracle.activation_grads[1..],
        &oracle.weight_grads,
    )
}

/// Layerwise comparison of two gradient sets with matching shapes.
pub fn compare_layers(
    acts_a: &[Vector],
    weights_a: &[Matrix],
    acts_b: &[Vector],
    weights_b: &[Matrix],
) -> Result<GradientReport> {
    if acts_a.len() != acts_b.len() || weights_a.len() != weights_b.len() {
        return Err(ArError::shape(
            "compare",
            format!("{} layers / {} weights", acts_a.len(), weights_a.len()),
            format!("{} layers / {} weights", acts_b.len(), weights_b.len()),
        ));
    }
    let mut per_layer_mse = Vec::with_capacity(acts_a.len());
    let mut per_layer_cosine = Vec::with_capacity(acts_a.len());
    for (a, b) in acts_a.iter().zip(acts_b) {
        per_layer_mse.push(mean_squared_difference(a, b)?);
        per_layer_cosine.push(cosine_similarity(a, b)?);
    }
    let mut max_abs_diff: f64 = 0.0;
    for (a, b) in weights_a.iter().zip(weights_b) {
        max_abs_diff = max_abs_diff.max(a.max_abs_diff(b)?);
    }
    Ok(GradientReport {
        per_layer_mse,
        per_layer_cosine,
        max_abs_diff,
    })
}

/// Agreement between two sets of weight gradients, e.g. backprop against
/// finite differences.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightGradCheck {
    pub per_layer_cosine: Vec<f64>,
    /// Largest `|a − b| / |b|` over entries with `|b| > floor`.
    pub max_relative_error: f64,
}

impl WeightGradCheck {
    /// Layers whose gradient direction disagrees (cosine below `threshold`).
    pub fn flagged_layers(&self, threshold: f64) -> Vec<usize> {
        self.per_layer_cosine
            .iter()
            .enumerate()
            .filter(|(_, &c)| c < threshold)
            .map(|(l, _)| l)
            .collect()
    }
}

pub fn check_weight_grads(
    candidate: &[Matrix],
    reference: &[Matrix],
    floor: f64,
) -> Result<WeightGradCheck> {
    if candidate.len() != reference.len() {
        return Err(ArError::shape(
            "check_weight_grads",
            format!("{} layers", candidate.len()),
            format!("{} layers", reference.len()),
        ));
    }
    let mut per_layer_cosine = Vec::with_capacity(candidate.len());
    let mut max_relative_error: f64 = 0.0;
    for (a, b) in candidate.iter().zip(reference) {
        if a.shape() != b.shape() {
            return Err(ArError::shape("check_weight_grads", a.shape(), b.shape()));
        }
        let av = Vector::new(a.as_slice().to_vec());
        let bv = Vector::new(b.as_slice().to_vec());
        per_layer_cosine.push(cosine_similarity(&av, &bv)?);
        for (x, y) in av.iter().zip(bv.iter()) {
            if y.abs() > floor {
                max_relative_error = max_relative_error.max((x - y).abs() / y.abs());
            }
        }
    }
    Ok(WeightGradCheck {
        per_layer_cosine,
        max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_params, mlp_specs, Activation, FeedbackInit, LayerSpec};

    fn scalar_net() -> NetworkParams {
        NetworkParams::new(
            vec![
                LayerSpec::new(1, 1, Activation::Linear),
                LayerSpec::new(1, 1, Activation::Linear),
            ],
            vec![
                Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                Matrix::from_vec(1, 1, vec![3.0]).unwrap(),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn scalar_chain() {
        let p = scalar_net();
        let x = Vector::new(vec![1.0]);
        let t = Vector::new(vec![0.0]);
        let o = backprop(&forward(&p, &x).unwrap(), &p, &t).unwrap();
        assert_eq!(o.activation_grads[2][0], 6.0);
        assert_eq!(o.activation_grads[1][0], 18.0);
        assert_eq!(o.weight_grads[1].get(0, 0), 12.0);
        assert_eq!(o.weight_grads[0].get(0, 0), 18.0);

        let fd = finite_diff_weight_grads(&p, &x, &t, 1e-5).unwrap();
        for (a, b) in fd.iter().zip(&o.weight_grads) {
            assert!(a.max_abs_diff(b).unwrap() < 1e-8);
        }
    }

    #[test]
    fn zero_error_gives_zero_gradients() {
        let specs = mlp_specs(&[3, 4, 2]).unwrap();
        let p = init_params(&specs, 4, FeedbackInit::None).unwrap();
        let x = Vector::new(vec![0.4, -0.1, 0.7]);
        let trace = forward(&p, &x).unwrap();
        let t = trace.output().clone();
        let o = backprop(&trace, &p, &t).unwrap();
        assert!(o.activation_grads.iter().all(|g| g.max_abs() == 0.0));
        assert!(o.weight_grads.iter().all(|w| w.frobenius_norm() == 0.0));
        let fd = finite_diff_weight_grads(&p, &x, &t, 1e-5).unwrap();
        assert!(fd
            .iter()
            .all(|w| w.as_slice().iter().all(|v| v.abs() < 1e-10)));
    }

    #[test]
    fn linear_regression_closed_form() {
        let w = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.3, 0.0, 1.0]]).unwrap();
        let p = NetworkParams::new(
            vec![LayerSpec::new(3, 2, Activation::Linear)],
            vec![w.clone()],
            None,
        )
        .unwrap();
        let x = Vector::new(vec![2.0, 1.0, -1.0]);
        let t = Vector::new(vec![0.5, -0.5]);
        let o = backprop(&forward(&p, &x).unwrap(), &p, &t).unwrap();
        // Wx = (−0.5, −0.4); residual (−1.0, 0.1).
        let expected = outer(&Vector::new(vec![-1.0, 0.1]), &x);
        assert!(o.weight_grads[0].max_abs_diff(&expected).unwrap() < 1e-15);
    }

    #[test]
    fn sign_flip_is_flagged() {
        let specs = mlp_specs(&[3, 4, 2]).unwrap();
        let p = init_params(&specs, 8, FeedbackInit::None).unwrap();
        let x = Vector::new(vec![0.9, 0.4, -0.3]);
        let t = Vector::new(vec![1.0, 0.0]);
        let o = backprop(&forward(&p, &x).unwrap(), &p, &t).unwrap();
        let fd = finite_diff_weight_grads(&p, &x, &t, 1e-5).unwrap();
        let clean = check_weight_grads(&o.weight_grads, &fd, 1e-8).unwrap();
        assert!(clean.flagged_layers(0.99).is_empty());

        let mut corrupted = o.weight_grads.clone();
        corrupted[1] = corrupted[1].scale(-1.0);
        let bad = check_weight_grads(&corrupted, &fd, 1e-8).unwrap();
        assert_eq!(bad.flagged_layers(0.99), vec![1]);
    }

    #[test]
    fn compare_identical_and_scaled() {
        let a = vec![Vector::new(vec![1.0, -2.0]), Vector::new(vec![0.5])];
        let w = vec![Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap()];
        let same = compare_layers(&a, &w, &a, &w).unwrap();
        assert_eq!(same.per_layer_mse, vec![0.0, 0.0]);
        assert_eq!(same.per_layer_cosine, vec![1.0, 1.0]);
        assert_eq!(same.max_abs_diff, 0.0);

        let doubled: Vec<Vector> = a.iter().map(|v| v.scale(2.0)).collect();
        let r = compare_layers(&doubled, &w, &a, &w).unwrap();
        assert!((r.per_layer_cosine[0] - 1.0).abs() < 1e-15);
        assert_eq!(r.per_layer_mse, vec![2.5, 0.25]);
    }

    #[test]
    fn compare_shape_mismatch() {
        let a = vec![Vector::new(vec![1.0])];
        let b = vec![Vector::new(vec![1.0, 2.0])];
        assert!(compare_layers(&a, &[], &b, &[]).is_err());
        assert!(compare_layers(&a, &[], &[], &[]).is_err());
    }

    #[test]
    fn finite_diff_rejects_bad_step() {
        let p = scalar_net();
        let x = Vector::new(vec![1.0]);
        assert!(finite_diff_weight_grads(&p, &x, &x, 0.0).is_err());
    }
}
