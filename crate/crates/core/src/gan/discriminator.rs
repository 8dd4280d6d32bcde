//! Two-hidden-layer feed-forward discriminator with manual backpropagation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

/// Weights of `x -> s(w3 . a(W2 a(W1 x + b1) + b2) + b3)` with `a` a leaky
/// ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: f64,
}

/// Gradients with the same layout as [`DiscriminatorParams`].
pub type DiscriminatorGrads = DiscriminatorParams;

impl DiscriminatorParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        DiscriminatorParams {
            w1: Array2::zeros((hidden, input_dim)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w3: Array1::zeros(hidden),
            b3: 0.0,
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per layer.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let fill = |a: &mut [f64], fan_in: usize, rng: &mut R| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for x in a {
                *x = rng.random_range(-bound..bound);
            }
        };
        fill(p.w1.as_slice_mut().unwrap(), input_dim, rng);
        fill(p.b1.as_slice_mut().unwrap(), input_dim, rng);
        fill(p.w2.as_slice_mut().unwrap(), hidden, rng);
        fill(p.b2.as_slice_mut().unwrap(), hidden, rng);
        fill(p.w3.as_slice_mut().unwrap(), hidden, rng);
        let mut b3 = [0.0];
        fill(&mut b3, hidden, rng);
        p.b3 = b3[0];
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden();
        let ok = self.b1.len() == h
            && self.w2.dim() == (h, h)
            && self.b2.len() == h
            && self.w3.len() == h;
        if !ok {
            return Err(Error::InvalidConfig("inconsistent discriminator shapes".into()));
        }
        let finite = self
            .w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.w3.iter())
            .all(|x| x.is_finite())
            && self.b3.is_finite();
        if !finite {
            return Err(Error::Degenerate("non-finite discriminator parameter".into()));
        }
        Ok(())
    }

    /// `self -= lr * grads`.
    pub fn sgd_update(&mut self, grads: &DiscriminatorGrads, lr: f64) {
        self.w1.scaled_add(-lr, &grads.w1);
        self.b1.scaled_add(-lr, &grads.b1);
        self.w2.scaled_add(-lr, &grads.w2);
        self.b2.scaled_add(-lr, &grads.b2);
        self.w3.scaled_add(-lr, &grads.w3);
        self.b3 -= lr * grads.b3;
    }

    /// Every scalar parameter in a fixed order, for gradient checks.
    pub fn flatten(&self) -> Vec<f64> {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .chain(self.w3.iter())
            .copied()
            .chain(std::iter::once(self.b3))
            .collect()
    }

    /// Mutable access to the `i`-th scalar in [`flatten`](Self::flatten) order.
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        macro_rules! step {
            ($a:expr) => {
                if i < $a.len() {
                    return $a.as_slice_mut().unwrap().get_mut(i).unwrap();
                }
                i -= $a.len();
            };
        }
        step!(self.w1);
        step!(self.b1);
        step!(self.w2);
        step!(self.b2);
        step!(self.w3);
        assert_eq!(i, 0, "parameter index out of range");
        &mut self.b3
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + 1
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediate values of a batched forward pass.
pub struct ForwardCache {
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// Inverted input dropout: each coordinate is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 - p)`.
pub struct Dropout<'a, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl DiscriminatorParams {
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<'_, f64>,
        slope: f64,
        dropout: Option<Dropout<'_, R>>,
    ) -> ForwardCache {
        let (input, mask) = match dropout {
            Some(Dropout { rate, rng }) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let mask = Array2::from_shape_simple_fn(x.dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&x * &mask, Some(mask))
            }
            _ => (x.to_owned(), None),
        };
        let z1 = input.dot(&self.w1.t()) + &self.b1;
        let h1 = z1.mapv(|v| leaky_relu(v, slope));
        let z2 = h1.dot(&self.w2.t()) + &self.b2;
        let h2 = z2.mapv(|v| leaky_relu(v, slope));
        let logits = h2.dot(&self.w3) + self.b3;
        let probs = logits.mapv(sigmoid);
        ForwardCache {
            input,
            mask,
            z1,
            h1,
            z2,
            h2,
            logits,
            probs,
        }
    }

    /// Backpropagates `d loss / d logits` through a cached pass. Returns
    /// parameter gradients and `d loss / d x` (through the dropout mask).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: ArrayView1<'_, f64>,
        slope: f64,
    ) -> (DiscriminatorGrads, Array2<f64>) {
        let w3 = cache.h2.t().dot(&dlogits);
        let b3 = dlogits.sum();
        let mut dz2 = dlogits
            .insert_axis(Axis(1))
            .dot(&self.w3.view().insert_axis(Axis(0)));
        Zip::from(&mut dz2)
            .and(&cache.z2)
            .for_each(|g, &z| *g *= leaky_relu_grad(z, slope));
        let w2 = dz2.t().dot(&cache.h1);
        let b2 = dz2.sum_axis(Axis(0));
        let mut dz1 = dz2.dot(&self.w2);
        Zip::from(&mut dz1)
            .and(&cache.z1)
            .for_each(|g, &z| *g *= leaky_relu_grad(z, slope));
        let w1 = dz1.t().dot(&cache.input);
        let b1 = dz1.sum_axis(Axis(0));
        let mut dx = dz1.dot(&self.w1);
        if let Some(mask) = &cache.mask {
            dx *= mask;
        }
        (
            DiscriminatorParams {
                w1,
                b1,
                w2,
                b2,
                w3,
                b3,
            },
            dx,
        )
    }
}

/// Probability that `x` is a target-space vector.
pub fn discriminator_forward<R: Rng + ?Sized>(
    params: &DiscriminatorParams,
    x: ArrayView1<'_, f64>,
    train_mode: bool,
    input_dropout: f64,
    slope: f64,
    rng: &mut R,
) -> Result<f64> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: params.input_dim(),
            found: x.len(),
        });
    }
    let batch = x.insert_axis(Axis(0));
    let dropout = train_mode.then_some(Dropout {
        rate: input_dropout,
        rng,
    });
    Ok(params.forward_batch(batch, slope, dropout).probs[0])
}

const PROB_FLOOR: f64 = 1e-12;

/// Mean binary cross-entropy and its gradient with respect to the logits.
/// Probabilities are clamped to `[1e-12, 1 - 1e-12]` inside the logs.
pub fn bce_with_grad(probs: ArrayView1<'_, f64>, labels: ArrayView1<'_, f64>) -> (f64, Array1<f64>) {
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(probs.len());
    for i in 0..probs.len() {
        let p = probs[i].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let y = labels[i];
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad[i] = (probs[i] - y) / n;
    }
    (loss / n, grad)
}

/// Loss and parameter gradients of the discriminator on a labelled batch
/// (no dropout).
pub fn discriminator_loss_and_grads(
    params: &DiscriminatorParams,
    x: ArrayView2<'_, f64>,
    labels: ArrayView1<'_, f64>,
    slope: f64,
) -> (f64, DiscriminatorGrads) {
    let cache = params.forward_batch::<rand_chacha::ChaCha8Rng>(x, slope, None);
    let (loss, dlogits) = bce_with_grad(cache.probs.view(), labels);
    let (grads, _) = params.backward(&cache, dlogits.view(), slope);
    (loss, grads)
}

/// Generator loss `BCE(D(z W^T), 1 - s)` and its gradient with respect to
/// `W`, with the discriminator frozen and dropout off.
pub fn generator_loss_and_grad(
    params: &DiscriminatorParams,
    omega: ArrayView2<'_, f64>,
    z: ArrayView2<'_, f64>,
    label_smoothing: f64,
    slope: f64,
) -> (f64, Array2<f64>) {
    let mapped = z.dot(&omega.t());
    let cache = params.forward_batch::<rand_chacha::ChaCha8Rng>(mapped.view(), slope, None);
    let labels = Array1::from_elem(z.nrows(), 1.0 - label_smoothing);
    let (loss, dlogits) = bce_with_grad(cache.probs.view(), labels.view());
    let (_, dmapped) = params.backward(&cache, dlogits.view(), slope);
    (loss, dmapped.t().dot(&z))
}
