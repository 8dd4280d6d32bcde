//! Finite-difference audit of the analytic GAN gradients.

use embalign_core::gan::{discriminator_loss_and_grads, generator_loss_and_grad, DiscriminatorParams};
use embalign_core::linalg::gaussian_matrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
/// Below this magnitude the error is measured against the floor instead of
/// the gradient itself; rounding in the loss alone is about 1e-10 here.
pub const FLOOR: f64 = 1e-5;

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

struct Case {
    params: DiscriminatorParams,
    x: Array2<f64>,
    labels: Array1<f64>,
    omega: Array2<f64>,
    smoothing: f64,
    slope: f64,
}

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(2..9);
    let hidden = rng.random_range(2..12);
    let batch = rng.random_range(1..10);
    let mut params = DiscriminatorParams::init(dim, hidden, &mut rng);
    // Larger than the default init so that the sigmoids are not all near 1/2.
    params.w3.mapv_inplace(|v| v * 3.0);
    params.b3 = rng.random_range(-1.0..1.0);
    let smoothing = rng.random_range(0.0..0.3);
    let labels = Array1::from_shape_fn(batch, |i| if i % 2 == 0 { 1.0 - smoothing } else { smoothing });
    let omega = gaussian_matrix(dim, dim, &mut rng);
    Case {
        params,
        x: gaussian_matrix(batch, dim, &mut rng),
        labels,
        omega,
        smoothing,
        slope: rng.random_range(0.01..0.5),
    }
}

/// Worst relative error over every discriminator parameter of one case.
pub fn discriminator_worst(seed: u64) -> f64 {
    let c = random_case(seed);
    let (_, grads) = discriminator_loss_and_grads(&c.params, c.x.view(), c.labels.view(), c.slope);
    let analytic = grads.flatten();
    assert_eq!(analytic.len(), c.params.n_params());
    let mut worst: f64 = 0.0;
    for i in 0..c.params.n_params() {
        let mut p = c.params.clone();
        *p.param_mut(i) += STEP;
        let (up, _) = discriminator_loss_and_grads(&p, c.x.view(), c.labels.view(), c.slope);
        *p.param_mut(i) -= 2.0 * STEP;
        let (down, _) = discriminator_loss_and_grads(&p, c.x.view(), c.labels.view(), c.slope);
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(rel_error(analytic[i], numeric));
    }
    worst
}

/// Worst relative error over every entry of the generator gradient.
pub fn generator_worst(seed: u64) -> f64 {
    let c = random_case(seed);
    let (_, grad) = generator_loss_and_grad(&c.params, c.omega.view(), c.x.view(), c.smoothing, c.slope);
    let mut worst: f64 = 0.0;
    for ((i, j), &a) in grad.indexed_iter() {
        let mut w = c.omega.clone();
        w[[i, j]] += STEP;
        let (up, _) = generator_loss_and_grad(&c.params, w.view(), c.x.view(), c.smoothing, c.slope);
        w[[i, j]] -= 2.0 * STEP;
        let (down, _) = generator_loss_and_grad(&c.params, w.view(), c.x.view(), c.smoothing, c.slope);
        worst = worst.max(rel_error(a, (up - down) / (2.0 * STEP)));
    }
    worst
}
