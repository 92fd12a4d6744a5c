//! LSTM cell, masked sequence runner and bidirectional wrapper.
//!
//! Gate layout along the `4u` axis is `[input, forget, candidate, output]`.

use crate::error::{Error, Result};
use crate::nn::ops::{gemm_acc, gemm_tn_acc, sigmoid, transpose_raw};
use crate::nn::{Parameter, Scalar, SeededRng, Tensor};

#[derive(Clone, Debug)]
pub struct LstmWeights<T> {
    /// `d × 4u`
    pub input_weight: Parameter<T>,
    /// `u × 4u`
    pub recurrent_weight: Parameter<T>,
    /// `4u`
    pub bias: Parameter<T>,
}

impl<T: Scalar> LstmWeights<T> {
    /// Uniform(-1/sqrt(u), 1/sqrt(u)) weights, forget-gate bias 1.
    pub fn init(input_dim: usize, units: usize, rng: &mut SeededRng) -> Self {
        let s = 1.0 / (units as f64).sqrt();
        let mut bias = Parameter::zeros(&[4 * units], true);
        bias.value.data_mut()[units..2 * units].fill(T::one());
        LstmWeights {
            input_weight: Parameter::uniform(&[input_dim, 4 * units], s, rng),
            recurrent_weight: Parameter::uniform(&[units, 4 * units], s, rng),
            bias,
        }
    }

    pub fn zeros(input_dim: usize, units: usize) -> Self {
        LstmWeights {
            input_weight: Parameter::zeros(&[input_dim, 4 * units], true),
            recurrent_weight: Parameter::zeros(&[units, 4 * units], true),
            bias: Parameter::zeros(&[4 * units], true),
        }
    }

    pub fn units(&self) -> usize {
        self.recurrent_weight.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.input_weight.shape()[0]
    }

    pub fn params(&self) -> [(&'static str, &Parameter<T>); 3] {
        [
            ("input_weight", &self.input_weight),
            ("recurrent_weight", &self.recurrent_weight),
            ("bias", &self.bias),
        ]
    }

    pub fn params_mut(&mut self) -> [(&'static str, &mut Parameter<T>); 3] {
        [
            ("input_weight", &mut self.input_weight),
            ("recurrent_weight", &mut self.recurrent_weight),
            ("bias", &mut self.bias),
        ]
    }
}

/// Applies the gate nonlinearities to pre-activations `z` (one row, `4u`)
/// and advances the state in place. Returns nothing; `z` holds the
/// activated gates afterwards.
#[inline]
fn cell_update<T: Scalar>(z: &mut [T], c: &mut [T], h: &mut [T]) {
    let u = c.len();
    for j in 0..u {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[u + j]);
        let g = z[2 * u + j].tanh();
        let o = sigmoid(z[3 * u + j]);
        z[j] = i;
        z[u + j] = f;
        z[2 * u + j] = g;
        z[3 * u + j] = o;
        c[j] = f * c[j] + i * g;
        h[j] = o * c[j].tanh();
    }
}

/// One LSTM step over a batch: returns `(h_t, c_t)`.
pub fn lstm_step<T: Scalar>(
    x_t: &Tensor<T>,
    h_prev: &Tensor<T>,
    c_prev: &Tensor<T>,
    weights: &LstmWeights<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (d, u) = (weights.input_dim(), weights.units());
    let b = x_t.rows();
    if x_t.shape() != [b, d] || h_prev.shape() != [b, u] || c_prev.shape() != [b, u] {
        return Err(Error::Shape(format!(
            "lstm step expects x {:?}, h/c {:?}; got x {:?}, h {:?}, c {:?}",
            [b, d],
            [b, u],
            x_t.shape(),
            h_prev.shape(),
            c_prev.shape()
        )));
    }
    let mut z = Tensor::zeros(&[b, 4 * u]);
    for r in 0..b {
        z.row_mut(r).copy_from_slice(weights.bias.value.data());
    }
    gemm_acc(x_t.data(), weights.input_weight.value.data(), z.data_mut(), b, d, 4 * u);
    gemm_acc(
        h_prev.data(),
        weights.recurrent_weight.value.data(),
        z.data_mut(),
        b,
        u,
        4 * u,
    );
    let mut c = c_prev.clone();
    let mut h = Tensor::zeros(&[b, u]);
    for r in 0..b {
        cell_update(z.row_mut(r), c.row_mut(r), h.row_mut(r));
    }
    Ok((h, c))
}

fn check_lengths(lengths: &[usize], b: usize, t: usize) -> Result<()> {
    if lengths.len() != b {
        return Err(Error::Shape(format!("{} lengths for batch of {b}", lengths.len())));
    }
    for (i, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::Data(format!("sequence {i} has length 0")));
        }
        if len > t {
            return Err(Error::Data(format!(
                "sequence {i} has length {len} beyond {t} steps"
            )));
        }
    }
    Ok(())
}

fn seq_dims<T: Scalar>(x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, t, d] => Ok((*b, *t, *d)),
        s => Err(Error::Shape(format!("sequence input must be b×T×d, got {s:?}"))),
    }
}

/// Cached state of a masked sequence run.
#[derive(Clone, Debug)]
pub struct LstmSeqCache<T> {
    batch: usize,
    steps: usize,
    lengths: Vec<usize>,
    /// `b·T × d`, row `i·T + t`
    input: Vec<T>,
    /// activated gates, `b·T × 4u`
    gates: Vec<T>,
    /// state entering each step, `b·T × u`
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// cell state after each step, `b·T × u`
    c_out: Vec<T>,
    /// `b × T × u`, zero at steps beyond each length
    pub outputs: Tensor<T>,
    /// hidden state after each sequence's last valid step, `b × u`
    pub final_h: Tensor<T>,
}

/// Runs one direction over `x` (`b×T×d`). Steps at or beyond `lengths[i]`
/// leave row `i`'s state untouched and emit zeros.
pub fn lstm_sequence<T: Scalar>(
    weights: &LstmWeights<T>,
    x: &Tensor<T>,
    lengths: &[usize],
) -> Result<LstmSeqCache<T>> {
    let (b, steps, d) = seq_dims(x)?;
    if d != weights.input_dim() {
        return Err(Error::Shape(format!(
            "lstm expects input width {}, got {d}",
            weights.input_dim()
        )));
    }
    check_lengths(lengths, b, steps)?;
    let u = weights.units();
    let g4 = 4 * u;

    let mut gates = vec![T::zero(); b * steps * g4];
    for r in 0..b * steps {
        gates[r * g4..(r + 1) * g4].copy_from_slice(weights.bias.value.data());
    }
    gemm_acc(x.data(), weights.input_weight.value.data(), &mut gates, b * steps, d, g4);

    let mut h_prev = vec![T::zero(); b * steps * u];
    let mut c_prev = vec![T::zero(); b * steps * u];
    let mut c_out = vec![T::zero(); b * steps * u];
    let mut outputs = Tensor::zeros(&[b, steps, u]);
    let mut h = vec![T::zero(); b * u];
    let mut c = vec![T::zero(); b * u];
    let mut rec = vec![T::zero(); b * g4];
    let w_h = weights.recurrent_weight.value.data();

    for t in 0..steps {
        rec.fill(T::zero());
        gemm_acc(&h, w_h, &mut rec, b, u, g4);
        for i in 0..b {
            let row = i * steps + t;
            h_prev[row * u..(row + 1) * u].copy_from_slice(&h[i * u..(i + 1) * u]);
            c_prev[row * u..(row + 1) * u].copy_from_slice(&c[i * u..(i + 1) * u]);
            if t >= lengths[i] {
                c_out[row * u..(row + 1) * u].copy_from_slice(&c[i * u..(i + 1) * u]);
                continue;
            }
            let z = &mut gates[row * g4..(row + 1) * g4];
            for (zv, &rv) in z.iter_mut().zip(&rec[i * g4..(i + 1) * g4]) {
                *zv += rv;
            }
            cell_update(z, &mut c[i * u..(i + 1) * u], &mut h[i * u..(i + 1) * u]);
            c_out[row * u..(row + 1) * u].copy_from_slice(&c[i * u..(i + 1) * u]);
            outputs.row_mut(row).copy_from_slice(&h[i * u..(i + 1) * u]);
        }
    }

    Ok(LstmSeqCache {
        batch: b,
        steps,
        lengths: lengths.to_vec(),
        input: x.data().to_vec(),
        gates,
        h_prev,
        c_prev,
        c_out,
        outputs,
        final_h: Tensor::new(&[b, u], h)?,
    })
}

/// Backpropagates through a sequence run. `d_outputs` (`b×T×u`) and
/// `d_final` (`b×u`) are both optional upstream gradients. Returns `dx`.
pub fn lstm_sequence_backward<T: Scalar>(
    weights: &mut LstmWeights<T>,
    cache: &LstmSeqCache<T>,
    d_outputs: Option<&Tensor<T>>,
    d_final: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (b, steps) = (cache.batch, cache.steps);
    let (d, u) = (weights.input_dim(), weights.units());
    let g4 = 4 * u;
    if let Some(g) = d_outputs {
        g.expect_shape(&[b, steps, u])?;
    }
    let mut dh = match d_final {
        Some(g) => {
            g.expect_shape(&[b, u])?;
            g.data().to_vec()
        }
        None => vec![T::zero(); b * u],
    };
    let mut dc = vec![T::zero(); b * u];
    let mut dz_all = vec![T::zero(); b * steps * g4];
    let w_h_t = transpose_raw(weights.recurrent_weight.value.data(), u, g4);
    let mut dh_prev = vec![T::zero(); b * u];

    for t in (0..steps).rev() {
        for i in 0..b {
            if t >= cache.lengths[i] {
                continue;
            }
            let row = i * steps + t;
            let gates = &cache.gates[row * g4..(row + 1) * g4];
            let dz = &mut dz_all[row * g4..(row + 1) * g4];
            for j in 0..u {
                let (ig, fg, gg, og) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
                let mut dh_j = dh[i * u + j];
                if let Some(g) = d_outputs {
                    dh_j += g.data()[row * u + j];
                }
                let tc = cache.c_out[row * u + j].tanh();
                let d_o = dh_j * tc;
                let dc_j = dc[i * u + j] + dh_j * og * (T::one() - tc * tc);
                let d_i = dc_j * gg;
                let d_g = dc_j * ig;
                let d_f = dc_j * cache.c_prev[row * u + j];
                dz[j] = d_i * ig * (T::one() - ig);
                dz[u + j] = d_f * fg * (T::one() - fg);
                dz[2 * u + j] = d_g * (T::one() - gg * gg);
                dz[3 * u + j] = d_o * og * (T::one() - og);
                dc[i * u + j] = dc_j * fg;
            }
        }
        // dh_prev = dz_t · W_hᵀ for active rows; inactive rows pass dh through
        dh_prev.fill(T::zero());
        for i in 0..b {
            if t >= cache.lengths[i] {
                dh_prev[i * u..(i + 1) * u].copy_from_slice(&dh[i * u..(i + 1) * u]);
                continue;
            }
            let row = i * steps + t;
            gemm_acc(
                &dz_all[row * g4..(row + 1) * g4],
                &w_h_t,
                &mut dh_prev[i * u..(i + 1) * u],
                1,
                g4,
                u,
            );
        }
        std::mem::swap(&mut dh, &mut dh_prev);
    }

    gemm_tn_acc(
        &cache.input,
        &dz_all,
        weights.input_weight.grad.data_mut(),
        b * steps,
        d,
        g4,
    );
    gemm_tn_acc(
        &cache.h_prev,
        &dz_all,
        weights.recurrent_weight.grad.data_mut(),
        b * steps,
        u,
        g4,
    );
    let bgrad = weights.bias.grad.data_mut();
    for r in 0..b * steps {
        for (g, &v) in bgrad.iter_mut().zip(&dz_all[r * g4..(r + 1) * g4]) {
            *g += v;
        }
    }
    let w_x_t = transpose_raw(weights.input_weight.value.data(), d, g4);
    let mut dx = Tensor::zeros(&[b, steps, d]);
    gemm_acc(&dz_all, &w_x_t, dx.data_mut(), b * steps, g4, d);
    Ok(dx)
}

/// Bidirectional LSTM with separate weights per direction.
#[derive(Clone, Debug)]
pub struct BiLstm<T> {
    pub forward: LstmWeights<T>,
    pub backward: LstmWeights<T>,
}

#[derive(Clone, Debug)]
pub struct BiLstmCache<T> {
    lengths: Vec<usize>,
    fwd: LstmSeqCache<T>,
    bwd: LstmSeqCache<T>,
    /// `b × T × 2u`: forward half then backward half, zero beyond length
    pub outputs: Tensor<T>,
    /// `b × 2u`: last forward state and the backward state at step 0
    pub final_state: Tensor<T>,
}

/// Reverses the valid prefix of every sequence; padding stays at the end.
pub fn reverse_valid<T: Scalar>(x: &Tensor<T>, lengths: &[usize]) -> Result<Tensor<T>> {
    let (b, steps, _) = seq_dims(x)?;
    check_lengths(lengths, b, steps)?;
    let mut out = Tensor::zeros(x.shape());
    for (i, &len) in lengths.iter().enumerate() {
        for t in 0..len {
            out.row_mut(i * steps + t)
                .copy_from_slice(x.row(i * steps + len - 1 - t));
        }
    }
    Ok(out)
}

impl<T: Scalar> BiLstm<T> {
    pub fn init(input_dim: usize, units: usize, rng: &mut SeededRng) -> Self {
        BiLstm {
            forward: LstmWeights::init(input_dim, units, rng),
            backward: LstmWeights::init(input_dim, units, rng),
        }
    }

    pub fn units(&self) -> usize {
        self.forward.units()
    }

    pub fn forward(&self, x: &Tensor<T>, lengths: &[usize]) -> Result<BiLstmCache<T>> {
        let (b, steps, _) = seq_dims(x)?;
        let u = self.units();
        let fwd = lstm_sequence(&self.forward, x, lengths)?;
        let rev = reverse_valid(x, lengths)?;
        let bwd = lstm_sequence(&self.backward, &rev, lengths)?;
        let mut outputs = Tensor::zeros(&[b, steps, 2 * u]);
        let mut final_state = Tensor::zeros(&[b, 2 * u]);
        for (i, &len) in lengths.iter().enumerate() {
            for t in 0..len {
                let row = outputs.row_mut(i * steps + t);
                row[..u].copy_from_slice(fwd.outputs.row(i * steps + t));
                row[u..].copy_from_slice(bwd.outputs.row(i * steps + len - 1 - t));
            }
            let fs = final_state.row_mut(i);
            fs[..u].copy_from_slice(fwd.final_h.row(i));
            fs[u..].copy_from_slice(bwd.final_h.row(i));
        }
        Ok(BiLstmCache {
            lengths: lengths.to_vec(),
            fwd,
            bwd,
            outputs,
            final_state,
        })
    }

    pub fn backward(
        &mut self,
        cache: &BiLstmCache<T>,
        d_outputs: Option<&Tensor<T>>,
        d_final: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        let u = self.units();
        let (b, steps) = (cache.fwd.batch, cache.fwd.steps);
        let (mut dof, mut dob) = (None, None);
        if let Some(g) = d_outputs {
            g.expect_shape(&[b, steps, 2 * u])?;
            let mut f = Tensor::zeros(&[b, steps, u]);
            let mut r = Tensor::zeros(&[b, steps, u]);
            for (i, &len) in cache.lengths.iter().enumerate() {
                for t in 0..len {
                    let src = g.row(i * steps + t);
                    f.row_mut(i * steps + t).copy_from_slice(&src[..u]);
                    r.row_mut(i * steps + len - 1 - t).copy_from_slice(&src[u..]);
                }
            }
            dof = Some(f);
            dob = Some(r);
        }
        let (mut dff, mut dfb) = (None, None);
        if let Some(g) = d_final {
            g.expect_shape(&[b, 2 * u])?;
            let mut f = Tensor::zeros(&[b, u]);
            let mut r = Tensor::zeros(&[b, u]);
            for i in 0..b {
                f.row_mut(i).copy_from_slice(&g.row(i)[..u]);
                r.row_mut(i).copy_from_slice(&g.row(i)[u..]);
            }
            dff = Some(f);
            dfb = Some(r);
        }
        let mut dx = lstm_sequence_backward(&mut self.forward, &cache.fwd, dof.as_ref(), dff.as_ref())?;
        let dx_rev =
            lstm_sequence_backward(&mut self.backward, &cache.bwd, dob.as_ref(), dfb.as_ref())?;
        let back = reverse_valid(&dx_rev, &cache.lengths)?;
        dx.add_assign(&back)?;
        Ok(dx)
    }

    pub fn params(&self) -> Vec<(String, &Parameter<T>)> {
        let mut out = Vec::new();
        for (dir, w) in [("forward", &self.forward), ("backward", &self.backward)] {
            for (name, p) in w.params() {
                out.push((format!("{dir}.{name}"), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Parameter<T>)> {
        let mut out = Vec::new();
        for (dir, w) in [("forward", &mut self.forward), ("backward", &mut self.backward)] {
            for (name, p) in w.params_mut() {
                out.push((format!("{dir}.{name}"), p));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    /// Scalar-loop reference for one cell step, written independently of
    /// the batched kernel.
    fn reference_step(
        w: &LstmWeights<f64>,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let (d, u) = (w.input_dim(), w.units());
        let wx = w.input_weight.value.data();
        let wh = w.recurrent_weight.value.data();
        let bias = w.bias.value.data();
        let pre = |gate: usize, j: usize| {
            let col = gate * u + j;
            let mut s = bias[col];
            for k in 0..d {
                s += x[k] * wx[k * 4 * u + col];
            }
            for k in 0..u {
                s += h[k] * wh[k * 4 * u + col];
            }
            s
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h_new = vec![0.0; u];
        let mut c_new = vec![0.0; u];
        for j in 0..u {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c_new[j] = f * c[j] + i * g;
            h_new[j] = o * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let w = LstmWeights::<f64>::zeros(3, 4);
        let x = Tensor::zeros(&[2, 3]);
        let (h, c) = lstm_step(&x, &Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2, 4]), &w).unwrap();
        assert!(h.data().iter().chain(c.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_keep_cell() {
        let mut rng = SeededRng::new(5);
        let mut w = LstmWeights::<f64>::init(3, 4, &mut rng);
        let u = 4;
        w.bias.value.data_mut()[..u].fill(-50.0);
        w.bias.value.data_mut()[u..2 * u].fill(50.0);
        let x = random(&mut rng, &[2, 3]).map(|v| v * 0.1);
        let h = random(&mut rng, &[2, 4]).map(|v| v * 0.1);
        let c = random(&mut rng, &[2, 4]);
        let (_, c_new) = lstm_step(&x, &h, &c, &w).unwrap();
        for (a, b) in c_new.data().iter().zip(c.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn step_matches_scalar_reference() {
        let mut rng = SeededRng::new(6);
        let w = LstmWeights::<f64>::init(5, 3, &mut rng);
        let x = random(&mut rng, &[4, 5]);
        let h = random(&mut rng, &[4, 3]);
        let c = random(&mut rng, &[4, 3]);
        let (hn, cn) = lstm_step(&x, &h, &c, &w).unwrap();
        for r in 0..4 {
            let (rh, rc) = reference_step(&w, x.row(r), h.row(r), c.row(r));
            for j in 0..3 {
                assert!((hn.row(r)[j] - rh[j]).abs() < 1e-10);
                assert!((cn.row(r)[j] - rc[j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn step_shape_mismatch() {
        let w = LstmWeights::<f64>::zeros(3, 2);
        let err = lstm_step(&Tensor::zeros(&[1, 4]), &Tensor::zeros(&[1, 2]), &Tensor::zeros(&[1, 2]), &w);
        assert!(matches!(err, Err(Error::Shape(_))));
    }

    #[test]
    fn zero_length_is_rejected() {
        let mut rng = SeededRng::new(1);
        let bi = BiLstm::<f64>::init(2, 2, &mut rng);
        let x = Tensor::zeros(&[2, 3, 2]);
        assert!(matches!(bi.forward(&x, &[2, 0]), Err(Error::Data(_))));
        assert!(matches!(bi.forward(&x, &[4, 1]), Err(Error::Data(_))));
    }

    #[test]
    fn single_step_both_directions_see_same_input() {
        let mut rng = SeededRng::new(2);
        let mut bi = BiLstm::<f64>::init(3, 2, &mut rng);
        bi.backward = bi.forward.clone();
        let x = random(&mut rng, &[2, 1, 3]);
        let out = bi.forward(&x, &[1, 1]).unwrap();
        for i in 0..2 {
            let row = out.final_state.row(i);
            assert_eq!(row[..2], row[2..]);
        }
    }

    #[test]
    fn padding_steps_are_zero_and_inert() {
        let mut rng = SeededRng::new(3);
        let bi = BiLstm::<f64>::init(3, 2, &mut rng);
        let x = random(&mut rng, &[2, 4, 3]);
        let lengths = [2, 4];
        let out = bi.forward(&x, &lengths).unwrap();
        assert!(out.outputs.row(2).iter().chain(out.outputs.row(3)).all(|&v| v == 0.0));

        let mut padded = Tensor::zeros(&[2, 7, 3]);
        for i in 0..2 {
            for t in 0..4 {
                padded.row_mut(i * 7 + t).copy_from_slice(x.row(i * 4 + t));
            }
        }
        let longer = bi.forward(&padded, &lengths).unwrap();
        assert_eq!(longer.final_state, out.final_state);
        for i in 0..2 {
            for t in 0..lengths[i] {
                assert_eq!(longer.outputs.row(i * 7 + t), out.outputs.row(i * 4 + t));
            }
        }
    }
}
