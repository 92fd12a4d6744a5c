//! Matrix products, softmax and the classification loss.

use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor};

fn as_matrix<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::Shape(format!("{what} must be 2-D, got {s:?}"))),
    }
}

/// `c += a * b` on raw row-major slices, `a` is m×k, `b` is k×n.
///
/// Every output row depends only on the matching row of `a`, and the sum for
/// each element runs over `t = 0..k` in order, so results are independent
/// of how many other rows share the call.
pub(crate) fn gemm_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += aᵀ * b`, `a` is m×k, `b` is m×n, `c` is k×n.
pub(crate) fn gemm_tn_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (t, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let crow = &mut c[t * n..(t + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c += a * bᵀ`, `a` is m×n, `b` is k×n, `c` is m×k.
pub(crate) fn gemm_nt_acc<T: Scalar>(a: &[T], b: &[T], c: &mut [T], m: usize, n: usize, k: usize) {
    let bt = transpose_raw(b, k, n);
    gemm_acc(a, &bt, c, m, n, k);
}

pub(crate) fn transpose_raw<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = as_matrix(a, "left operand")?;
    let (k2, n) = as_matrix(b, "right operand")?;
    if k != k2 {
        return Err(Error::Shape(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut c = Tensor::zeros(&[m, n]);
    gemm_acc(a.data(), b.data(), c.data_mut(), m, k, n);
    Ok(c)
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, n) = as_matrix(a, "operand")?;
    Tensor::new(&[n, m], transpose_raw(a.data(), m, n))
}

/// Softmax of one row in place, with max subtraction.
pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Row-wise softmax over the last axis.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.data().iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    let mut out = logits.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

/// Mean negative log-likelihood of `labels` under `probs` (b×c), and its
/// gradient with respect to the logits that produced `probs` through
/// softmax: `(p - onehot) / b`.
pub fn cross_entropy<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (b, c) = as_matrix(probs, "probabilities")?;
    if labels.len() != b {
        return Err(Error::Shape(format!(
            "{} labels for {b} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::Data(format!("label {bad} out of range for {c} classes")));
    }
    let inv_b = T::one() / T::of(b as f64);
    let mut loss = T::zero();
    let mut grad = probs.clone();
    for (i, &label) in labels.iter().enumerate() {
        let p = probs.at2(i, label).max(T::min_positive_value());
        loss -= p.ln();
        let row = grad.row_mut(i);
        row[label] -= T::one();
        row.iter_mut().for_each(|g| *g *= inv_b);
    }
    Ok((loss * inv_b, grad))
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    // first maximum wins, which breaks ties toward the lower index
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::SeededRng;

    fn random(rng: &mut SeededRng, shape: &[usize]) -> Tensor<f32> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.uniform(-1.0, 1.0) as f32).collect()).unwrap()
    }

    fn naive(a: &Tensor<f32>, b: &Tensor<f32>) -> Vec<f64> {
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for t in 0..k {
                    c[i * n + j] += a.at2(i, t) as f64 * b.at2(t, j) as f64;
                }
            }
        }
        c
    }

    #[test]
    fn identity_and_scalar() {
        let eye = Tensor::<f32>::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let mut rng = SeededRng::new(1);
        let b = random(&mut rng, &[3, 4]);
        assert_eq!(matmul(&eye, &b).unwrap(), b);
        let two = Tensor::new(&[1, 1], vec![2.0f32]).unwrap();
        let three = Tensor::new(&[1, 1], vec![3.0f32]).unwrap();
        assert_eq!(matmul(&two, &three).unwrap().data(), &[6.0]);
    }

    #[test]
    fn matches_triple_loop() {
        let mut rng = SeededRng::new(2);
        let a = random(&mut rng, &[7, 5]);
        let b = random(&mut rng, &[5, 4]);
        let c = matmul(&a, &b).unwrap();
        for (x, y) in c.data().iter().zip(naive(&a, &b)) {
            assert!((*x as f64 - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatch_names_both_shapes() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[4, 5]);
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn transposed_products_agree_with_plain() {
        let mut rng = SeededRng::new(3);
        let a = random(&mut rng, &[6, 4]);
        let b = random(&mut rng, &[6, 5]);
        let mut c = vec![0.0; 20];
        gemm_tn_acc(a.data(), b.data(), &mut c, 6, 4, 5);
        let expected = matmul(&transpose(&a).unwrap(), &b).unwrap();
        assert_eq!(c, expected.data());

        let d = random(&mut rng, &[3, 5]);
        let mut e = vec![0.0; 18];
        gemm_nt_acc(b.data(), d.data(), &mut e, 6, 5, 3);
        let expected = matmul(&b, &transpose(&d).unwrap()).unwrap();
        assert_eq!(e, expected.data());
    }

    #[test]
    fn softmax_cases() {
        let u = softmax(&Tensor::new(&[1, 3], vec![0.0f64, 0.0, 0.0]).unwrap()).unwrap();
        for &p in u.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        let s = softmax(&Tensor::new(&[1, 3], vec![1000.0f32, 0.0, -1000.0]).unwrap()).unwrap();
        assert!((s.data()[0] - 1.0).abs() < 1e-7);
        assert!(s.data()[1] < 1e-30 && s.data()[2] < 1e-30);
        assert!(softmax(&Tensor::new(&[1, 2], vec![f32::NAN, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn softmax_matches_f64_reference() {
        let mut rng = SeededRng::new(4);
        for _ in 0..50 {
            let v: Vec<f64> = (0..3).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let s = softmax(&Tensor::new(&[1, 3], v.iter().map(|&x| x as f32).collect()).unwrap())
                .unwrap();
            // independent evaluation without max subtraction, in f64
            let z: f64 = v.iter().map(|x| (*x as f32 as f64).exp()).sum();
            for (p, x) in s.data().iter().zip(&v) {
                let reference = (*x as f32 as f64).exp() / z;
                assert!((*p as f64 - reference).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let onehot = Tensor::new(&[1, 3], vec![0.0f64, 1.0, 0.0]).unwrap();
        let (loss, _) = cross_entropy(&onehot, &[1]).unwrap();
        assert_eq!(loss, 0.0);
        let uniform = Tensor::new(&[2, 3], vec![1.0 / 3.0; 6]).unwrap();
        let (loss, _) = cross_entropy(&uniform, &[0, 2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            cross_entropy(&uniform, &[0, 3]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = SeededRng::new(5);
        let b = 4;
        let logits: Vec<f64> = (0..b * 3).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.below(3)).collect();
        let loss_of = |l: &[f64]| {
            let p = softmax(&Tensor::new(&[b, 3], l.to_vec()).unwrap()).unwrap();
            cross_entropy(&p, &labels).unwrap().0
        };
        let probs = softmax(&Tensor::new(&[b, 3], logits.clone()).unwrap()).unwrap();
        let (_, grad) = cross_entropy(&probs, &labels).unwrap();
        let h = 1e-5;
        for j in 0..logits.len() {
            let mut plus = logits.clone();
            plus[j] += h;
            let mut minus = logits.clone();
            minus[j] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = grad.data()[j];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
            assert!(rel < 1e-4, "coordinate {j}: {analytic} vs {numeric}");
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.4f32, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1f32, 0.2, 0.7]), 2);
    }
}
