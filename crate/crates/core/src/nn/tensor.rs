//! Dense row-major tensors with an optional gradient accumulator.

use crate::error::{Error, Result};
use rand::Rng;

/// Dense tensor of `f64` values in row-major order.
///
/// The gradient buffer, when allocated, always has the same length as `data`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch {
                expected: shape.clone(),
                got: vec![data.len()],
                context: "tensor construction".into(),
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    /// Fill with uniform values in `[-bound, bound]`.
    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self {
            shape,
            data,
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    /// Allocate (or keep) the gradient buffer, zero-filled.
    pub fn alloc_grad(&mut self) {
        match &mut self.grad {
            Some(g) => g.iter_mut().for_each(|x| *x = 0.0),
            None => self.grad = Some(vec![0.0; self.data.len()]),
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    /// Add `src` into the gradient buffer, allocating it if missing.
    pub fn accumulate_grad(&mut self, src: &[f64]) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
        let g = self.grad.as_mut().unwrap();
        debug_assert_eq!(g.len(), src.len());
        for (gi, si) in g.iter_mut().zip(src) {
            *gi += si;
        }
    }
}

/// Dot product with four accumulators; the unroll keeps the FP pipeline busy.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut rest = 0.0;
    for j in chunks * 4..n {
        rest += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + rest
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity. Either vector with norm below `1e-12` yields 0 so that
/// padding-only encodings rank below any real match instead of producing NaN.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![u.len()],
            got: vec![v.len()],
            context: "cosine".into(),
        });
    }
    let nu = norm(u);
    let nv = norm(v);
    if nu < 1e-12 || nv < 1e-12 {
        return Ok(0.0);
    }
    Ok(dot(u, v) / (nu * nv))
}

/// Gradients of `g_out * cosine(u, v)` with respect to `u` and `v`.
/// Mirrors the zero-norm rule of [`cosine`]: degenerate inputs get zero gradient.
pub fn cosine_backward(u: &[f64], v: &[f64], g_out: f64) -> (Vec<f64>, Vec<f64>) {
    let nu = norm(u);
    let nv = norm(v);
    if nu < 1e-12 || nv < 1e-12 {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    let c = dot(u, v) / (nu * nv);
    let mut du = vec![0.0; u.len()];
    let mut dv = vec![0.0; v.len()];
    let inv = 1.0 / (nu * nv);
    for i in 0..u.len() {
        du[i] = g_out * (v[i] * inv - c * u[i] / (nu * nu));
        dv[i] = g_out * (u[i] * inv - c * v[i] / (nv * nv));
    }
    (du, dv)
}
