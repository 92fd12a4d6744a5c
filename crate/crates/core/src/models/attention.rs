//! Scaled dot-product attention within a sentence and across the pair.
//!
//! Inputs are `b×T×d` tensors with per-example valid lengths; only the
//! valid prefix of each sequence takes part, and positions past the length
//! produce zero outputs.

use crate::error::{Error, Result};
use crate::nn::ops::{gemm_acc, gemm_nt_acc, gemm_tn_acc, softmax_in_place};
use crate::nn::{Scalar, Tensor};

fn dims<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [b, t, d] => Ok((*b, *t, *d)),
        s => Err(Error::Shape(format!("{what} must be b×T×d, got {s:?}"))),
    }
}

fn check_lengths(lengths: &[usize], b: usize, t: usize, what: &str) -> Result<()> {
    if lengths.len() != b {
        return Err(Error::Shape(format!("{what}: {} lengths for batch {b}", lengths.len())));
    }
    for (i, &len) in lengths.iter().enumerate() {
        if len == 0 {
            return Err(Error::Data(format!("{what}: example {i} has no valid position")));
        }
        if len > t {
            return Err(Error::Data(format!("{what}: length {len} exceeds {t}")));
        }
    }
    Ok(())
}

#[inline]
fn block<T>(x: &[T], i: usize, steps: usize, width: usize, len: usize) -> &[T] {
    &x[i * steps * width..(i * steps + len) * width]
}

#[inline]
fn block_mut<T>(x: &mut [T], i: usize, steps: usize, width: usize, len: usize) -> &mut [T] {
    &mut x[i * steps * width..(i * steps + len) * width]
}

/// `dS = A ⊙ (dA - rowsum(dA ⊙ A))` for a row-softmax `A` (`rows×cols`).
fn softmax_backward<T: Scalar>(a: &[T], da: &[T], cols: usize) -> Vec<T> {
    let mut ds = vec![T::zero(); a.len()];
    for r in 0..a.len() / cols {
        let (ar, dar) = (&a[r * cols..(r + 1) * cols], &da[r * cols..(r + 1) * cols]);
        let dot: T = ar.iter().zip(dar).map(|(&x, &y)| x * y).sum();
        for c in 0..cols {
            ds[r * cols + c] = ar[c] * (dar[c] - dot);
        }
    }
    ds
}

fn row_softmax<T: Scalar>(scores: &mut [T], cols: usize) {
    for row in scores.chunks_mut(cols) {
        softmax_in_place(row);
    }
}

#[derive(Clone, Debug)]
pub struct IntraAttentionCache<T> {
    lengths: Vec<usize>,
    /// per example, `len×len` attention weights
    weights: Vec<Vec<T>>,
}

impl<T> IntraAttentionCache<T> {
    pub fn weights(&self, example: usize) -> &[T] {
        &self.weights[example]
    }
}

/// `out_i = tokens_i + Σ_j softmax_j(keys_i·keys_j / √k) tokens_j`.
pub fn intra_attention<T: Scalar>(
    tokens: &Tensor<T>,
    keys: &Tensor<T>,
    lengths: &[usize],
) -> Result<(Tensor<T>, IntraAttentionCache<T>)> {
    let (b, steps, d) = dims(tokens, "intra-attention tokens")?;
    let (kb, kt, k) = dims(keys, "intra-attention keys")?;
    if (kb, kt) != (b, steps) {
        return Err(Error::Shape(format!(
            "keys {:?} do not align with tokens {:?}",
            keys.shape(),
            tokens.shape()
        )));
    }
    check_lengths(lengths, b, steps, "intra-attention")?;
    let scale = T::one() / T::of(k as f64).sqrt();
    let mut out = Tensor::zeros(tokens.shape());
    let mut weights = Vec::with_capacity(b);
    for (i, &len) in lengths.iter().enumerate() {
        let kx = block(keys.data(), i, steps, k, len);
        let tx = block(tokens.data(), i, steps, d, len);
        let mut s = vec![T::zero(); len * len];
        gemm_nt_acc(kx, kx, &mut s, len, k, len);
        s.iter_mut().for_each(|v| *v *= scale);
        row_softmax(&mut s, len);
        let o = block_mut(out.data_mut(), i, steps, d, len);
        o.copy_from_slice(tx);
        gemm_acc(&s, tx, o, len, len, d);
        weights.push(s);
    }
    Ok((
        out,
        IntraAttentionCache {
            lengths: lengths.to_vec(),
            weights,
        },
    ))
}

/// Returns `(d_tokens, d_keys)`.
pub fn intra_attention_backward<T: Scalar>(
    tokens: &Tensor<T>,
    keys: &Tensor<T>,
    cache: &IntraAttentionCache<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (_, steps, d) = dims(tokens, "intra-attention tokens")?;
    let k = keys.last_dim();
    d_out.expect_shape(tokens.shape())?;
    let scale = T::one() / T::of(k as f64).sqrt();
    let mut d_tokens = Tensor::zeros(tokens.shape());
    let mut d_keys = Tensor::zeros(keys.shape());
    for (i, &len) in cache.lengths.iter().enumerate() {
        let a = &cache.weights[i];
        let tx = block(tokens.data(), i, steps, d, len);
        let kx = block(keys.data(), i, steps, k, len);
        let g = block(d_out.data(), i, steps, d, len);
        {
            let dt = block_mut(d_tokens.data_mut(), i, steps, d, len);
            dt.copy_from_slice(g);
            gemm_tn_acc(a, g, dt, len, len, d);
        }
        let mut da = vec![T::zero(); len * len];
        gemm_nt_acc(g, tx, &mut da, len, d, len);
        let ds = softmax_backward(a, &da, len);
        // scores are symmetric in the keys: dK = scale·(dS + dSᵀ)·K
        let mut sym = vec![T::zero(); len * len];
        for r in 0..len {
            for c in 0..len {
                sym[r * len + c] = (ds[r * len + c] + ds[c * len + r]) * scale;
            }
        }
        gemm_acc(&sym, kx, block_mut(d_keys.data_mut(), i, steps, k, len), len, len, k);
    }
    Ok((d_tokens, d_keys))
}

#[derive(Clone, Debug)]
pub struct InterAttentionCache<T> {
    premise_lengths: Vec<usize>,
    hypothesis_lengths: Vec<usize>,
    /// per example, `Lp×Lh` premise-to-hypothesis weights
    premise_weights: Vec<Vec<T>>,
    /// per example, `Lh×Lp` hypothesis-to-premise weights
    hypothesis_weights: Vec<Vec<T>>,
}

pub struct InterAttentionOutput<T> {
    /// hypothesis context aligned to each premise position
    pub premise_context: Tensor<T>,
    /// premise context aligned to each hypothesis position
    pub hypothesis_context: Tensor<T>,
    pub cache: InterAttentionCache<T>,
}

/// `e_ij = keys_p_i · keys_h_j / √k`; premise positions attend over the
/// hypothesis (softmax over j) and hypothesis positions over the premise
/// (softmax over i).
pub fn inter_attention<T: Scalar>(
    premise: &Tensor<T>,
    hypothesis: &Tensor<T>,
    keys_p: &Tensor<T>,
    keys_h: &Tensor<T>,
    premise_lengths: &[usize],
    hypothesis_lengths: &[usize],
) -> Result<InterAttentionOutput<T>> {
    let (b, tp, d) = dims(premise, "premise")?;
    let (bh, th, dh) = dims(hypothesis, "hypothesis")?;
    let k = keys_p.last_dim();
    if bh != b || dh != d {
        return Err(Error::Shape(format!(
            "premise {:?} and hypothesis {:?} disagree",
            premise.shape(),
            hypothesis.shape()
        )));
    }
    if keys_p.shape() != [b, tp, k] || keys_h.shape() != [b, th, k] {
        return Err(Error::Shape(format!(
            "keys {:?} / {:?} do not align with inputs",
            keys_p.shape(),
            keys_h.shape()
        )));
    }
    check_lengths(premise_lengths, b, tp, "premise attention")?;
    check_lengths(hypothesis_lengths, b, th, "hypothesis attention")?;
    let scale = T::one() / T::of(k as f64).sqrt();
    let mut p_ctx = Tensor::zeros(premise.shape());
    let mut h_ctx = Tensor::zeros(hypothesis.shape());
    let mut pw = Vec::with_capacity(b);
    let mut hw = Vec::with_capacity(b);
    for i in 0..b {
        let (lp, lh) = (premise_lengths[i], hypothesis_lengths[i]);
        let kp = block(keys_p.data(), i, tp, k, lp);
        let kh = block(keys_h.data(), i, th, k, lh);
        let mut e = vec![T::zero(); lp * lh];
        gemm_nt_acc(kp, kh, &mut e, lp, k, lh);
        e.iter_mut().for_each(|v| *v *= scale);
        let mut et = vec![T::zero(); lh * lp];
        for r in 0..lp {
            for c in 0..lh {
                et[c * lp + r] = e[r * lh + c];
            }
        }
        row_softmax(&mut e, lh);
        row_softmax(&mut et, lp);
        gemm_acc(
            &e,
            block(hypothesis.data(), i, th, d, lh),
            block_mut(p_ctx.data_mut(), i, tp, d, lp),
            lp,
            lh,
            d,
        );
        gemm_acc(
            &et,
            block(premise.data(), i, tp, d, lp),
            block_mut(h_ctx.data_mut(), i, th, d, lh),
            lh,
            lp,
            d,
        );
        pw.push(e);
        hw.push(et);
    }
    Ok(InterAttentionOutput {
        premise_context: p_ctx,
        hypothesis_context: h_ctx,
        cache: InterAttentionCache {
            premise_lengths: premise_lengths.to_vec(),
            hypothesis_lengths: hypothesis_lengths.to_vec(),
            premise_weights: pw,
            hypothesis_weights: hw,
        },
    })
}

pub struct InterAttentionGrads<T> {
    pub premise: Tensor<T>,
    pub hypothesis: Tensor<T>,
    pub keys_p: Tensor<T>,
    pub keys_h: Tensor<T>,
}

pub fn inter_attention_backward<T: Scalar>(
    premise: &Tensor<T>,
    hypothesis: &Tensor<T>,
    keys_p: &Tensor<T>,
    keys_h: &Tensor<T>,
    cache: &InterAttentionCache<T>,
    d_premise_context: &Tensor<T>,
    d_hypothesis_context: &Tensor<T>,
) -> Result<InterAttentionGrads<T>> {
    let (_, tp, d) = dims(premise, "premise")?;
    let (_, th, _) = dims(hypothesis, "hypothesis")?;
    let k = keys_p.last_dim();
    d_premise_context.expect_shape(premise.shape())?;
    d_hypothesis_context.expect_shape(hypothesis.shape())?;
    let scale = T::one() / T::of(k as f64).sqrt();
    let mut g = InterAttentionGrads {
        premise: Tensor::zeros(premise.shape()),
        hypothesis: Tensor::zeros(hypothesis.shape()),
        keys_p: Tensor::zeros(keys_p.shape()),
        keys_h: Tensor::zeros(keys_h.shape()),
    };
    for i in 0..cache.premise_lengths.len() {
        let (lp, lh) = (cache.premise_lengths[i], cache.hypothesis_lengths[i]);
        let (a, bw) = (&cache.premise_weights[i], &cache.hypothesis_weights[i]);
        let p = block(premise.data(), i, tp, d, lp);
        let h = block(hypothesis.data(), i, th, d, lh);
        let gp = block(d_premise_context.data(), i, tp, d, lp);
        let gh = block(d_hypothesis_context.data(), i, th, d, lh);

        let mut da = vec![T::zero(); lp * lh];
        gemm_nt_acc(gp, h, &mut da, lp, d, lh);
        gemm_tn_acc(a, gp, block_mut(g.hypothesis.data_mut(), i, th, d, lh), lp, lh, d);
        let mut db = vec![T::zero(); lh * lp];
        gemm_nt_acc(gh, p, &mut db, lh, d, lp);
        gemm_tn_acc(bw, gh, block_mut(g.premise.data_mut(), i, tp, d, lp), lh, lp, d);

        let mut de = softmax_backward(a, &da, lh);
        let deb = softmax_backward(bw, &db, lp);
        for r in 0..lp {
            for c in 0..lh {
                de[r * lh + c] = (de[r * lh + c] + deb[c * lp + r]) * scale;
            }
        }
        let kp = block(keys_p.data(), i, tp, k, lp);
        let kh = block(keys_h.data(), i, th, k, lh);
        gemm_acc(&de, kh, block_mut(g.keys_p.data_mut(), i, tp, k, lp), lp, lh, k);
        gemm_tn_acc(&de, kp, block_mut(g.keys_h.data_mut(), i, th, k, lh), lp, lh, k);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::SeededRng;

    fn random(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    }

    /// Brute-force double loop, no shared helpers.
    fn attend(
        queries: &[Vec<f64>],
        keys: &[Vec<f64>],
        values: &[Vec<f64>],
    ) -> Vec<Vec<f64>> {
        let k = queries[0].len() as f64;
        queries
            .iter()
            .map(|q| {
                let scores: Vec<f64> = keys
                    .iter()
                    .map(|kk| q.iter().zip(kk).map(|(a, b)| a * b).sum::<f64>() / k.sqrt())
                    .collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let w: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
                let z: f64 = w.iter().sum();
                let mut out = vec![0.0; values[0].len()];
                for (wj, v) in w.iter().zip(values) {
                    for (o, x) in out.iter_mut().zip(v) {
                        *o += wj / z * x;
                    }
                }
                out
            })
            .collect()
    }

    fn rows(t: &Tensor<f64>, i: usize, steps: usize, len: usize) -> Vec<Vec<f64>> {
        (0..len).map(|s| t.row(i * steps + s).to_vec()).collect()
    }

    #[test]
    fn single_position_doubles_token() {
        let mut rng = SeededRng::new(1);
        let x = random(&mut rng, &[2, 1, 4]);
        let k = random(&mut rng, &[2, 1, 3]);
        let (out, cache) = intra_attention(&x, &k, &[1, 1]).unwrap();
        assert_eq!(cache.weights(0), &[1.0]);
        for (o, v) in out.data().iter().zip(x.data()) {
            assert_eq!(*o, 2.0 * v);
        }
    }

    #[test]
    fn identical_tokens_double() {
        let mut rng = SeededRng::new(2);
        let token: Vec<f64> = (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = Tensor::new(&[1, 3, 4], token.repeat(3)).unwrap();
        let k = random(&mut rng, &[1, 3, 5]);
        let (out, _) = intra_attention(&x, &k, &[3]).unwrap();
        for s in 0..3 {
            for (o, v) in out.row(s).iter().zip(&token) {
                assert!((o - 2.0 * v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn intra_matches_double_loop() {
        let mut rng = SeededRng::new(3);
        let (b, t, d, k) = (3, 6, 5, 4);
        let x = random(&mut rng, &[b, t, d]);
        let keys = random(&mut rng, &[b, t, k]);
        let lengths = [6, 2, 4];
        let (out, _) = intra_attention(&x, &keys, &lengths).unwrap();
        for (i, &len) in lengths.iter().enumerate() {
            let kx = rows(&keys, i, t, len);
            let ctx = attend(&kx, &kx, &rows(&x, i, t, len));
            for s in 0..t {
                for j in 0..d {
                    let expected = if s < len { x.row(i * t + s)[j] + ctx[s][j] } else { 0.0 };
                    assert!((out.row(i * t + s)[j] - expected).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn all_masked_row_is_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 2, 2]);
        assert!(matches!(intra_attention(&x, &x, &[0]), Err(Error::Data(_))));
        assert!(matches!(
            inter_attention(&x, &x, &x, &x, &[1], &[0]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn inter_matches_double_loop() {
        let mut rng = SeededRng::new(4);
        let (b, tp, th, d, k) = (2, 5, 3, 4, 6);
        let p = random(&mut rng, &[b, tp, d]);
        let h = random(&mut rng, &[b, th, d]);
        let kp = random(&mut rng, &[b, tp, k]);
        let kh = random(&mut rng, &[b, th, k]);
        let (lp, lh) = ([5, 2], [1, 3]);
        let out = inter_attention(&p, &h, &kp, &kh, &lp, &lh).unwrap();
        for i in 0..b {
            let pc = attend(&rows(&kp, i, tp, lp[i]), &rows(&kh, i, th, lh[i]), &rows(&h, i, th, lh[i]));
            let hc = attend(&rows(&kh, i, th, lh[i]), &rows(&kp, i, tp, lp[i]), &rows(&p, i, tp, lp[i]));
            for s in 0..lp[i] {
                for j in 0..d {
                    assert!((out.premise_context.row(i * tp + s)[j] - pc[s][j]).abs() < 1e-6);
                }
            }
            for s in 0..lh[i] {
                for j in 0..d {
                    assert!((out.hypothesis_context.row(i * th + s)[j] - hc[s][j]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_hypothesis_token_is_copied() {
        let mut rng = SeededRng::new(5);
        let p = random(&mut rng, &[1, 4, 3]);
        let h = random(&mut rng, &[1, 1, 3]);
        let kp = random(&mut rng, &[1, 4, 2]);
        let kh = random(&mut rng, &[1, 1, 2]);
        let out = inter_attention(&p, &h, &kp, &kh, &[4], &[1]).unwrap();
        for s in 0..4 {
            assert_eq!(out.premise_context.row(s), h.row(0));
        }
    }

    #[test]
    fn swapping_arguments_swaps_contexts() {
        let mut rng = SeededRng::new(6);
        let p = random(&mut rng, &[2, 4, 3]);
        let h = random(&mut rng, &[2, 5, 3]);
        let kp = random(&mut rng, &[2, 4, 2]);
        let kh = random(&mut rng, &[2, 5, 2]);
        let (lp, lh) = ([4, 3], [2, 5]);
        let a = inter_attention(&p, &h, &kp, &kh, &lp, &lh).unwrap();
        let b = inter_attention(&h, &p, &kh, &kp, &lh, &lp).unwrap();
        assert_eq!(a.premise_context, b.hypothesis_context);
        assert_eq!(a.hypothesis_context, b.premise_context);
    }
}
