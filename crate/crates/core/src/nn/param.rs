use crate::nn::{Scalar, SeededRng, Tensor};

/// A tensor of learnable (or frozen) values and its gradient buffer.
#[derive(Clone, Debug)]
pub struct Parameter<T> {
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
    /// Rows (along the first axis) that must never change, e.g. the padding
    /// row of an embedding table.
    pinned_rows: Vec<usize>,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(value: Tensor<T>, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            trainable,
            pinned_rows: Vec::new(),
        }
    }

    pub fn zeros(shape: &[usize], trainable: bool) -> Self {
        Self::new(Tensor::zeros(shape), trainable)
    }

    pub fn filled(shape: &[usize], value: T, trainable: bool) -> Self {
        Self::new(Tensor::filled(shape, value), trainable)
    }

    /// Uniform(-limit, limit) initialisation.
    pub fn uniform(shape: &[usize], limit: f64, rng: &mut SeededRng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.uniform(-limit, limit))).collect();
        Self::new(Tensor::new(shape, data).expect("valid shape"), true)
    }

    /// Glorot/Xavier uniform for a `fan_in × fan_out` matrix.
    pub fn glorot(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self::uniform(&[fan_in, fan_out], limit, rng)
    }

    pub fn pin_row(&mut self, row: usize) {
        if !self.pinned_rows.contains(&row) {
            self.pinned_rows.push(row);
            self.pinned_rows.sort_unstable();
        }
    }

    pub fn pinned_rows(&self) -> &[usize] {
        &self.pinned_rows
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// Enforce the gradient invariants: frozen parameters and pinned rows
    /// carry zero gradient.
    pub fn settle_grad(&mut self) {
        if !self.trainable {
            self.grad.fill(T::zero());
            return;
        }
        if self.pinned_rows.is_empty() {
            return;
        }
        let row_len = self.grad.len() / self.value.shape()[0];
        for &r in &self.pinned_rows {
            self.grad.data_mut()[r * row_len..(r + 1) * row_len].fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> Parameter<U> {
        Parameter {
            value: self.value.cast(),
            grad: self.grad.cast(),
            trainable: self.trainable,
            pinned_rows: self.pinned_rows.clone(),
        }
    }
}
