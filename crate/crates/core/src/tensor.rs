//! Dense row-major `f64` tensors and the small set of primitives the rest
//! of the crate is built from: matrix products, the elementwise
//! nonlinearities of the architecture, stable softmax, cosine similarity,
//! and the central-difference gradient oracle used to validate every
//! analytic backward pass.
//!
//! No broadcasting, no views: a `Tensor` is a shape plus a flat buffer,
//! and every operation checks conformance explicitly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::rng::Rng;

/// Dense row-major tensor of 64-bit reals.
///
/// Invariant: `data.len() == shape.iter().product()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the buffer length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// Rank-1 tensor over an existing buffer.
    pub fn vector(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    /// Rank-2 tensor; `data` is laid out row-major.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Tensor with i.i.d. zero-mean normal entries of the given standard
    /// deviation, drawn from `rng`.
    pub fn randn(shape: &[usize], std_dev: f64, rng: &mut Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.normal_scaled(std_dev)).collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn set2(&mut self, i: usize, j: usize, value: f64) {
        let cols = self.shape[1];
        self.data[i * cols + j] = value;
    }

    fn check_same_shape(&self, other: &Tensor, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "add")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "sub")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Tensor) -> Result<Tensor> {
        self.check_same_shape(other, "hadamard")?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        let data = self.data.iter().map(|v| v * factor).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Tensor { shape: self.shape.clone(), data }
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(fmath::sigmoid)
    }

    /// Elementwise `max(x, 0)^2`.
    pub fn squared_relu(&self) -> Tensor {
        self.map(|x| {
            let r = x.max(0.0);
            r * r
        })
    }

    /// Largest absolute entry; 0 for an empty tensor.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, &v| m.max(fmath::abs(v)))
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max(fmath::abs(a - b)))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_l2(&self) -> f64 {
        fmath::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// `a[m×k] · b[k×n]`, standard 64-bit matrix product.
///
/// The accumulation order (fixed `i`, then `l`, then `j`) is part of the
/// determinism contract: single-row products performed one row at a time
/// sum in exactly the same order as a full batched product.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension(format!(
            "matmul expects rank-2 operands, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner dimensions disagree: {:?} x {:?}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let brow = &b.data[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a[m×k] · b[n×k]ᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[1] {
        return Err(Error::Dimension(format!(
            "matmul_nt shapes disagree: {:?} x {:?}^T",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = b.shape[0];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a[m×k]ᵀ · b[m×n]` without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[0] != b.shape[0] {
        return Err(Error::Dimension(format!(
            "matmul_tn shapes disagree: {:?}^T x {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let n = b.shape[1];
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        let brow = &b.data[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            let orow = &mut out[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![k, n], out)
}

/// Stable softmax over the whole (rank-1) tensor.
///
/// Subtracts the maximum before exponentiating, so entries of magnitude
/// several hundred stay finite and the output always sums to 1.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    if x.is_empty() {
        return Err(Error::Dimension(format!(
            "softmax of empty tensor (shape {:?})",
            x.shape
        )));
    }
    let mut out = x.clone();
    softmax_slice(out.data_mut());
    Ok(out)
}

/// Stable softmax applied independently to each row of a rank-2 tensor.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 || x.is_empty() {
        return Err(Error::Dimension(format!(
            "softmax_rows expects a non-empty rank-2 tensor, got shape {:?}",
            x.shape
        )));
    }
    let cols = x.shape[1];
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(cols) {
        softmax_slice(row);
    }
    Ok(out)
}

pub(crate) fn softmax_slice(row: &mut [f64]) {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = fmath::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `u·v / (‖u‖ ‖v‖)`, in [-1, 1]. Errors on zero-norm input.
pub fn cosine_similarity(u: &Tensor, v: &Tensor) -> Result<f64> {
    u.check_same_shape(v, "cosine_similarity")?;
    let dot: f64 = u.data.iter().zip(&v.data).map(|(a, b)| a * b).sum();
    let nu = u.norm_l2();
    let nv = v.norm_l2();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateInput(
            "cosine_similarity of a zero-norm vector".into(),
        ));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Central-difference gradient of a scalar function: per coordinate,
/// `(f(x + h e_i) - f(x - h e_i)) / 2h`.
///
/// This is the independent oracle every analytic backward pass in the
/// crate is checked against; it must not share code with any of them.
pub fn finite_diff_grad(
    f: &mut dyn FnMut(&Tensor) -> f64,
    x: &Tensor,
    h: f64,
) -> Result<Tensor> {
    if h <= 0.0 {
        return Err(Error::Parameter(format!("finite difference step {h} must be positive")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let up = f(&probe);
        probe.data[i] = orig - h;
        let down = f(&probe);
        probe.data[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "finite_diff_grad: non-finite evaluation at coordinate {i}"
            )));
        }
        grad.data[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}

/// Relative disagreement between two gradients:
/// `max|a - b| / max(max|a|, max|b|, 1)`.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(1.0);
    a.max_abs_diff(b) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
        Tensor::randn(shape, 1.0, rng)
    }

    #[test]
    fn new_rejects_mismatched_buffer() {
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn matmul_identity_is_noop() {
        let mut rng = Rng::new(1);
        let a = random_tensor(&[3, 3], &mut rng);
        let out = matmul(&Tensor::identity(3), &a).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_row_sums() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let ones = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let out = matmul(&a, &ones).unwrap();
        assert_eq!(out.data(), &[3.0, 7.0]);
    }

    /// Independent triple-loop reference for the matrix product.
    fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k, n) = (a.dim(0), a.dim(1), b.dim(1));
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += a.get2(i, l) * b.get2(l, j);
                }
                out.set2(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::new(2);
        let a = random_tensor(&[5, 7], &mut rng);
        let b = random_tensor(&[7, 3], &mut rng);
        let fast = matmul(&a, &b).unwrap();
        let slow = matmul_oracle(&a, &b);
        assert!(fast.max_abs_diff(&slow) < 1e-12);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        assert!(matches!(matmul(&a, &b), Err(Error::Dimension(_))));
    }

    #[test]
    fn matmul_transposed_variants_match_explicit_transpose() {
        let mut rng = Rng::new(3);
        let a = random_tensor(&[4, 6], &mut rng);
        let b = random_tensor(&[5, 6], &mut rng);
        let nt = matmul_nt(&a, &b).unwrap();
        // b^T materialized by hand
        let mut bt = Tensor::zeros(&[6, 5]);
        for i in 0..5 {
            for j in 0..6 {
                bt.set2(j, i, b.get2(i, j));
            }
        }
        let expect = matmul(&a, &bt).unwrap();
        assert!(nt.max_abs_diff(&expect) < 1e-12);

        let c = random_tensor(&[4, 5], &mut rng);
        let tn = matmul_tn(&a, &c).unwrap();
        let mut at = Tensor::zeros(&[6, 4]);
        for i in 0..4 {
            for j in 0..6 {
                at.set2(j, i, a.get2(i, j));
            }
        }
        let expect = matmul(&at, &c).unwrap();
        assert!(tn.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn matmul_associativity_on_random_triples() {
        let mut rng = Rng::new(4);
        for _ in 0..10 {
            let a = random_tensor(&[4, 5], &mut rng);
            let b = random_tensor(&[5, 6], &mut rng);
            let c = random_tensor(&[6, 3], &mut rng);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let scale = left.max_abs().max(1.0);
            assert!(left.max_abs_diff(&right) / scale < 1e-9);
        }
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let out = Tensor::vector(vec![0.0]).sigmoid();
        assert_eq!(out.data()[0], 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        let out = Tensor::vector(vec![50.0, -50.0, 1e6, -1e6]).sigmoid();
        assert!((out.data()[0] - 1.0).abs() < 1e-15);
        assert!(out.data()[1] < 1e-15);
        assert!(out.all_finite());
        for &v in out.data() {
            assert!(v > 0.0 || v == 0.0); // saturation may round to exactly 0
            assert!(v <= 1.0);
        }
    }

    #[test]
    fn sigmoid_symmetry_sums_to_one() {
        let mut rng = Rng::new(5);
        let x = random_tensor(&[32], &mut rng);
        let pos = x.sigmoid();
        let neg = x.scale(-1.0).sigmoid();
        let sum = pos.add(&neg).unwrap();
        for &v in sum.data() {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn squared_relu_cases() {
        let out = Tensor::vector(vec![-3.0, 2.0, 0.0]).squared_relu();
        assert_eq!(out.data(), &[0.0, 4.0, 0.0]);
    }

    #[test]
    fn softmax_uniform_input() {
        let out = softmax(&Tensor::vector(vec![2.5, 2.5, 2.5])).unwrap();
        for &v in out.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_extreme_logits_stay_finite() {
        let out = softmax(&Tensor::vector(vec![1000.0, 0.0])).unwrap();
        assert!(out.all_finite());
        assert!(out.data()[0] >= 1.0 - 1e-12);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let out = softmax(&x).unwrap();
        // direct exp/sum, no max subtraction
        let exps: Vec<f64> = x.data().iter().map(|&v| libm::exp(v)).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in out.data().iter().zip(&exps) {
            assert!((o - e / total).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(
            softmax(&Tensor::vector(vec![])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn softmax_is_probability_vector_for_large_entries() {
        let mut rng = Rng::new(6);
        for _ in 0..20 {
            let x = Tensor::vector((0..16).map(|_| rng.uniform(-500.0, 500.0)).collect());
            let out = softmax(&x).unwrap();
            assert!(out.all_finite());
            let sum: f64 = out.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(out.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn cosine_similarity_cases() {
        let u = Tensor::vector(vec![1.0, 2.0, -3.0]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        let neg = u.scale(-1.0);
        assert!((cosine_similarity(&u, &neg).unwrap() + 1.0).abs() < 1e-15);
        let e1 = Tensor::vector(vec![1.0, 0.0]);
        let e2 = Tensor::vector(vec![0.0, 1.0]);
        assert_eq!(cosine_similarity(&e1, &e2).unwrap(), 0.0);
    }

    #[test]
    fn cosine_similarity_rejects_zero_norm() {
        let z = Tensor::vector(vec![0.0, 0.0]);
        let u = Tensor::vector(vec![1.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&z, &u),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn finite_diff_quadratic_norm() {
        let mut rng = Rng::new(7);
        let x = random_tensor(&[6], &mut rng);
        let grad = finite_diff_grad(
            &mut |t: &Tensor| t.data().iter().map(|v| v * v).sum(),
            &x,
            1e-5,
        )
        .unwrap();
        let expect = x.scale(2.0);
        assert!(grad.max_abs_diff(&expect) < 1e-9);
    }

    #[test]
    fn finite_diff_constant_is_zero() {
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let grad = finite_diff_grad(&mut |_| 4.25, &x, 1e-5).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn finite_diff_sum_of_sigmoid_at_zero() {
        let x = Tensor::zeros(&[5]);
        let grad = finite_diff_grad(
            &mut |t: &Tensor| t.sigmoid().data().iter().sum(),
            &x,
            1e-5,
        )
        .unwrap();
        for &g in grad.data() {
            assert!((g - 0.25).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_diff_rejects_non_finite_objective() {
        let x = Tensor::vector(vec![1.0]);
        let err = finite_diff_grad(&mut |_| f64::NAN, &x, 1e-5);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn finite_diff_matches_closed_form_on_analytic_functions() {
        let mut rng = Rng::new(8);
        // f(x) = sum(sigmoid(x)) + 0.5 * ||x||^2, grad = sigmoid'(x) + x
        for _ in 0..5 {
            let x = random_tensor(&[8], &mut rng);
            let grad = finite_diff_grad(
                &mut |t: &Tensor| {
                    let s: f64 = t.sigmoid().data().iter().sum();
                    let q: f64 = t.data().iter().map(|v| 0.5 * v * v).sum();
                    s + q
                },
                &x,
                1e-5,
            )
            .unwrap();
            let closed = x.map(|v| {
                let s = crate::fmath::sigmoid(v);
                s * (1.0 - s) + v
            });
            assert!(relative_error(&grad, &closed) < 1e-6);
        }
    }
}
