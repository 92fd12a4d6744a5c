use crate::error::{Error, Result};
use crate::nn::{Scalar, SeededRng, Tensor};

/// Per-element scale applied by a training-mode dropout call: 0 for dropped
/// elements, `1/(1-rate)` for kept ones.
#[derive(Clone, Debug)]
pub struct DropoutMask<T> {
    scale: Vec<T>,
}

impl<T: Scalar> DropoutMask<T> {
    pub fn backward(&self, dy: &Tensor<T>) -> Tensor<T> {
        let mut dx = dy.clone();
        for (g, &s) in dx.data_mut().iter_mut().zip(&self.scale) {
            *g *= s;
        }
        dx
    }

    pub fn kept(&self) -> usize {
        self.scale.iter().filter(|&&s| s != T::zero()).count()
    }
}

/// Inverted dropout. Eval mode, and rate 0, return the input unchanged and
/// no mask.
pub fn dropout<T: Scalar>(
    x: &Tensor<T>,
    rate: f64,
    training: bool,
    rng: &mut SeededRng,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..x.len())
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, &s) in y.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((y, Some(DropoutMask { scale })))
}
