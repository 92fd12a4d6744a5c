//! Finite-difference verification of hand-derived gradients.

use crate::error::{Error, Result};
use crate::nn::{Parameter, SeededRng};

/// One evaluation of the loss.
#[derive(Clone, Copy, Debug)]
pub struct Evaluation {
    pub loss: f64,
    /// Fingerprint of every non-smooth branch taken (ReLU on/off, sign of
    /// an absolute difference). Central differences are only meaningful
    /// when the fingerprint is the same at both perturbed points.
    pub branches: u64,
}

/// A deterministic 64-bit computation whose trainable parameters can be
/// perturbed in place.
pub trait Differentiable {
    fn param_count(&self) -> usize;
    fn param_name(&self, index: usize) -> String;
    fn param(&mut self, index: usize) -> &mut Parameter<f64>;
    fn evaluate(&mut self) -> Result<Evaluation>;
    /// Zeroes gradients, then runs forward and backward, leaving analytic
    /// gradients in every parameter's `grad`.
    fn loss_and_grad(&mut self) -> Result<f64>;
}

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// central-difference step
    pub step: f64,
    /// coordinates sampled per parameter (all of them when fewer)
    pub samples_per_param: usize,
    /// lower bound on the relative-error denominator, so that coordinates
    /// whose true gradient is ~0 are judged by absolute error
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            samples_per_param: 200,
            denominator_floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<Mismatch>,
    pub checked: usize,
    /// coordinates whose perturbation crossed a non-differentiable point
    pub skipped_at_kinks: usize,
    pub per_param: Vec<(String, f64)>,
}

fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric(format!("{what} is not finite ({v})")))
    }
}

fn sample_indices(p: &Parameter<f64>, count: usize, rng: &mut SeededRng) -> Vec<usize> {
    let row_len = p.len() / p.shape()[0];
    let pinned = p.pinned_rows();
    let mut candidates: Vec<usize> = (0..p.len())
        .filter(|i| !pinned.contains(&(i / row_len)))
        .collect();
    if candidates.len() > count {
        for k in 0..count {
            let j = k + rng.below(candidates.len() - k);
            candidates.swap(k, j);
        }
        candidates.truncate(count);
        candidates.sort_unstable();
    }
    candidates
}

/// Compares analytic gradients with central finite differences over a
/// sample of coordinates of every trainable parameter.
pub fn grad_check<D: Differentiable>(model: &mut D, config: &GradCheckConfig) -> Result<GradCheckReport> {
    finite(model.loss_and_grad()?, "loss")?;
    let analytic: Vec<Vec<f64>> = (0..model.param_count())
        .map(|i| model.param(i).grad.data().to_vec())
        .collect();
    for (i, g) in analytic.iter().enumerate() {
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "gradient of {} contains {v}",
                model.param_name(i)
            )));
        }
    }
    let base = model.evaluate()?;
    let mut rng = SeededRng::new(config.seed);
    let mut report = GradCheckReport::default();
    let h = config.step;

    for p in 0..model.param_count() {
        if !model.param(p).trainable {
            continue;
        }
        let name = model.param_name(p);
        let indices = sample_indices(model.param(p), config.samples_per_param, &mut rng);
        let mut worst_here: f64 = 0.0;
        for j in indices {
            let original = model.param(p).value.data()[j];
            model.param(p).value.data_mut()[j] = original + h;
            let plus = model.evaluate()?;
            model.param(p).value.data_mut()[j] = original - h;
            let minus = model.evaluate()?;
            model.param(p).value.data_mut()[j] = original;
            finite(plus.loss, "perturbed loss")?;
            finite(minus.loss, "perturbed loss")?;
            if plus.branches != base.branches || minus.branches != base.branches {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * h);
            let a = analytic[p][j];
            let err = relative_error(a, numeric, config.denominator_floor);
            report.checked += 1;
            worst_here = worst_here.max(err);
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some(Mismatch {
                    param: name.clone(),
                    index: j,
                    analytic: a,
                    numeric,
                });
            }
        }
        report.per_param.push((name, worst_here));
    }
    Ok(report)
}

/// Mixes a branch decision into a running fingerprint.
#[inline]
pub fn mix_branch(state: &mut u64, taken: bool) {
    *state = state.rotate_left(1) ^ (taken as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0x2545_F491_4F6C_DD1D;
    *state = state.wrapping_mul(0x1000_0000_01B3);
}
