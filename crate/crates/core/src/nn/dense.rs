use crate::error::{Error, Result};
use crate::nn::ops::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::nn::{Parameter, Scalar, SeededRng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

/// Fully connected layer `y = act(x W + b)`.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub activation: Activation,
}

/// What backward needs from a forward call.
#[derive(Clone, Debug)]
pub struct DenseCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

impl<T> DenseCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Dense<T> {
    pub fn new(weight: Parameter<T>, bias: Parameter<T>, activation: Activation) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            ([_, d_out], [b]) if d_out == b => Ok(Dense {
                weight,
                bias,
                activation,
            }),
            (w, b) => Err(Error::Shape(format!(
                "dense weight {w:?} and bias {b:?} disagree"
            ))),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init(d_in: usize, d_out: usize, activation: Activation, rng: &mut SeededRng) -> Self {
        Dense {
            weight: Parameter::glorot(d_in, d_out, rng),
            bias: Parameter::zeros(&[d_out], true),
            activation,
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Applies the layer to every row of `x` (any shape whose last axis is
    /// `d_in`); the output keeps the leading axes.
    pub fn forward(&self, x: &Tensor<T>) -> Result<DenseCache<T>> {
        let (d_in, d_out) = (self.d_in(), self.d_out());
        if x.last_dim() != d_in {
            return Err(Error::Shape(format!(
                "dense expects last dimension {d_in}, got input {:?}",
                x.shape()
            )));
        }
        let rows = x.rows();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        let mut out = Tensor::zeros(&shape);
        let bias = self.bias.value.data();
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(bias);
        }
        gemm_acc(x.data(), self.weight.value.data(), out.data_mut(), rows, d_in, d_out);
        if self.activation == Activation::Relu {
            out.data_mut()
                .iter_mut()
                .for_each(|v| *v = v.max(T::zero()));
        }
        Ok(DenseCache {
            input: x.clone(),
            output: out,
        })
    }

    /// Accumulates into the weight and bias gradients and returns `dx`.
    pub fn backward(&mut self, cache: &DenseCache<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        dy.expect_shape(cache.output.shape())?;
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let rows = dy.rows();
        let dz = match self.activation {
            Activation::None => dy.clone(),
            Activation::Relu => {
                let mut dz = dy.clone();
                for (g, &y) in dz.data_mut().iter_mut().zip(cache.output.data()) {
                    if y <= T::zero() {
                        *g = T::zero();
                    }
                }
                dz
            }
        };
        gemm_tn_acc(
            cache.input.data(),
            dz.data(),
            self.weight.grad.data_mut(),
            rows,
            d_in,
            d_out,
        );
        let bgrad = self.bias.grad.data_mut();
        for r in 0..rows {
            for (g, &d) in bgrad.iter_mut().zip(dz.row(r)) {
                *g += d;
            }
        }
        let mut dx = Tensor::zeros(cache.input.shape());
        gemm_nt_acc(dz.data(), self.weight.value.data(), dx.data_mut(), rows, d_out, d_in);
        Ok(dx)
    }

    pub fn params(&self) -> [(&'static str, &Parameter<T>); 2] {
        [("weight", &self.weight), ("bias", &self.bias)]
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Parameter<T>); 2] {
        [("weight", &mut self.weight), ("bias", &mut self.bias)]
    }
}

/// Dense applied independently at every time step of a `b×T×d_in` input.
pub fn time_distributed_dense<T: Scalar>(layer: &Dense<T>, x: &Tensor<T>) -> Result<DenseCache<T>> {
    if x.shape().len() != 3 {
        return Err(Error::Shape(format!(
            "time-distributed input must be b×T×d, got {:?}",
            x.shape()
        )));
    }
    layer.forward(x)
}
