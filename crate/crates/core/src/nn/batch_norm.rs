use crate::error::{Error, Result};
use crate::nn::{Parameter, Scalar, Tensor};

pub const BATCH_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

/// Batch normalisation over the rows of a `b×d` input.
///
/// `gamma`/`beta` are trainable. The moving mean and variance are
/// non-trainable state updated from batch statistics in training mode and
/// used for normalisation in eval mode.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub moving_mean: Parameter<T>,
    pub moving_var: Parameter<T>,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    normalized: Tensor<T>,
    inv_std: Vec<T>,
    batch_mean: Vec<T>,
    batch_var: Vec<T>,
    training: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Parameter::filled(&[dim], T::one(), true),
            beta: Parameter::zeros(&[dim], true),
            moving_mean: Parameter::zeros(&[dim], false),
            moving_var: Parameter::filled(&[dim], T::one(), false),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Tensor<T>, training: bool) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        let d = self.dim();
        match x.shape() {
            [_, c] if *c == d => {}
            s => {
                return Err(Error::Shape(format!(
                    "batch norm over {d} features got input {s:?}"
                )))
            }
        }
        let b = x.rows();
        let eps = T::of(BATCH_NORM_EPS);
        let (mean, var) = if training {
            if b < 2 {
                return Err(Error::Batch(format!(
                    "batch norm needs at least 2 rows in training mode, got {b}"
                )));
            }
            column_moments(x)
        } else {
            (
                self.moving_mean.value.data().to_vec(),
                self.moving_var.value.data().to_vec(),
            )
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut normalized = Tensor::zeros(x.shape());
        let mut y = Tensor::zeros(x.shape());
        let (gamma, beta) = (self.gamma.value.data(), self.beta.value.data());
        for r in 0..b {
            let xr = x.row(r);
            let nr = normalized.row_mut(r);
            for j in 0..d {
                nr[j] = (xr[j] - mean[j]) * inv_std[j];
            }
            let nr = normalized.row(r).to_vec();
            let yr = y.row_mut(r);
            for j in 0..d {
                yr[j] = gamma[j] * nr[j] + beta[j];
            }
        }
        Ok((
            y,
            BatchNormCache {
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                training,
            },
        ))
    }

    /// Folds the batch statistics of a training-mode forward into the
    /// moving averages.
    pub fn update_moving_stats(&mut self, cache: &BatchNormCache<T>) {
        if !cache.training {
            return;
        }
        let m = T::of(BATCH_NORM_MOMENTUM);
        let one_minus = T::one() - m;
        for (s, &v) in self.moving_mean.value.data_mut().iter_mut().zip(&cache.batch_mean) {
            *s = m * *s + one_minus * v;
        }
        for (s, &v) in self.moving_var.value.data_mut().iter_mut().zip(&cache.batch_var) {
            *s = m * *s + one_minus * v;
        }
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        dy.expect_shape(cache.normalized.shape())?;
        let (b, d) = (dy.rows(), self.dim());
        let mut sum_dy = vec![T::zero(); d];
        let mut sum_dy_xhat = vec![T::zero(); d];
        for r in 0..b {
            let (g, n) = (dy.row(r), cache.normalized.row(r));
            for j in 0..d {
                sum_dy[j] += g[j];
                sum_dy_xhat[j] += g[j] * n[j];
            }
        }
        for j in 0..d {
            self.gamma.grad.data_mut()[j] += sum_dy_xhat[j];
            self.beta.grad.data_mut()[j] += sum_dy[j];
        }
        let gamma = self.gamma.value.data();
        let mut dx = Tensor::zeros(dy.shape());
        let bn = T::of(b as f64);
        for r in 0..b {
            let (g, n) = (dy.row(r), cache.normalized.row(r));
            let out = dx.row_mut(r);
            for j in 0..d {
                let scale = gamma[j] * cache.inv_std[j];
                out[j] = if cache.training {
                    scale * (g[j] - sum_dy[j] / bn - n[j] * sum_dy_xhat[j] / bn)
                } else {
                    scale * g[j]
                };
            }
        }
        Ok(dx)
    }

    pub fn params(&self) -> [(&'static str, &Parameter<T>); 4] {
        [
            ("gamma", &self.gamma),
            ("beta", &self.beta),
            ("moving_mean", &self.moving_mean),
            ("moving_var", &self.moving_var),
        ]
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Parameter<T>); 4] {
        [
            ("gamma", &mut self.gamma),
            ("beta", &mut self.beta),
            ("moving_mean", &mut self.moving_mean),
            ("moving_var", &mut self.moving_var),
        ]
    }
}

/// Per-column mean and biased variance.
fn column_moments<T: Scalar>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let (b, d) = (x.rows(), x.last_dim());
    let bn = T::of(b as f64);
    let mut mean = vec![T::zero(); d];
    for r in 0..b {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= bn);
    let mut var = vec![T::zero(); d];
    for r in 0..b {
        for ((s, &v), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= bn);
    (mean, var)
}
