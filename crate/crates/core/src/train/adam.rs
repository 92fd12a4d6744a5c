use crate::error::{Error, Result};
use crate::nn::{Parameter, Scalar, Tensor};
use crate::train::AdamConfig;

/// First and second moment estimates, one pair per parameter in the order
/// they are passed to [`Adam::step`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    steps: u64,
    moments: Vec<(Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One bias-corrected update. Non-trainable parameters and pinned rows
    /// are left exactly as they are.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Parameter<T>>,
    {
        self.steps += 1;
        let c = self.config;
        let t = self.steps as i32;
        let lr = T::of(c.lr);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let corr1 = T::of(1.0 - c.beta1.powi(t));
        let corr2 = T::of(1.0 - c.beta2.powi(t));
        let eps = T::of(c.eps);
        for (k, p) in params.into_iter().enumerate() {
            if k == self.moments.len() {
                self.moments.push((Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
            }
            let (m, v) = &mut self.moments[k];
            if m.shape() != p.shape() {
                return Err(Error::Shape(format!(
                    "optimizer state {:?} does not match parameter {:?}",
                    m.shape(),
                    p.shape()
                )));
            }
            if !p.trainable {
                continue;
            }
            let width = p.value.last_dim();
            let pinned = p.pinned_rows().to_vec();
            let (value, grad) = (p.value.data_mut(), p.grad.data());
            let (m, v) = (m.data_mut(), v.data_mut());
            for i in 0..value.len() {
                if !pinned.is_empty() && pinned.contains(&(i / width)) {
                    continue;
                }
                let g = grad[i];
                m[i] = b1 * m[i] + one_b1 * g;
                v[i] = b2 * v[i] + one_b2 * g * g;
                let m_hat = m[i] / corr1;
                let v_hat = v[i] / corr2;
                value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
