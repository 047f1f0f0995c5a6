//! Central-finite-difference verification of the analytic gradients.
//!
//! Runs in double precision: the forward pass is evaluated at `p +- h` for a
//! random subset of parameter coordinates and compared against the
//! backpropagated gradient of the squared loss `0.5 * |out - target|^2`.

use rand::Rng;

use super::net::Network;
use super::tensor::Tensor;
use super::NnError;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn squared_loss(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, t)| 0.5 * (o - t) * (o - t)).sum()
}

/// Relative error with a floor so vanishing gradients compare absolutely.
pub fn gradient_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Compare analytic and numeric gradients over `n_coords` randomly chosen
/// parameter coordinates (all coordinates when the net is smaller than that).
pub fn grad_check<R: Rng>(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    target: &[f64],
    n_coords: usize,
    tolerance: f64,
    rng: &mut R,
) -> Result<GradCheckReport, NnError> {
    let (cache, out) = net.forward_cached(input)?;
    let batch = input.shape()[0];
    let out_dim = net.output_dim();
    if target.len() != batch * out_dim {
        return Err(NnError::ShapeMismatch {
            context: "grad_check target".into(),
            expected: vec![batch * out_dim],
            got: vec![target.len()],
        });
    }
    let dy: Vec<f64> = out.data().iter().zip(target).map(|(o, t)| o - t).collect();
    let analytic = net.backward(&cache, &Tensor::from_vec(&[batch, out_dim], dy)?)?;
    let analytic_flat: Vec<f64> = analytic.iter().flat_map(|t| t.data().iter().copied()).collect();

    let total = net.n_param_scalars();
    let coords: Vec<usize> = if total <= n_coords {
        (0..total).collect()
    } else {
        (0..n_coords).map(|_| rng.random_range(0..total)).collect()
    };

    let mut flat = net.flat_params();
    let mut max_rel_err = 0.0f64;
    for &idx in &coords {
        let orig = flat[idx];
        flat[idx] = orig + FD_STEP;
        net.load_flat_params(&flat)?;
        let loss_plus = squared_loss(net.forward(input)?.data(), target);
        flat[idx] = orig - FD_STEP;
        net.load_flat_params(&flat)?;
        let loss_minus = squared_loss(net.forward(input)?.data(), target);
        flat[idx] = orig;
        let numeric = (loss_plus - loss_minus) / (2.0 * FD_STEP);
        max_rel_err = max_rel_err.max(gradient_rel_err(analytic_flat[idx], numeric));
    }
    net.load_flat_params(&flat)?;

    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_err,
        tolerance,
        pass: max_rel_err < tolerance,
    })
}
