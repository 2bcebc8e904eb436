//! Forward/backward pairs for the five model operations.
//!
//! Everything is explicit: each forward returns whatever the matching
//! backward needs, there is no graph or tape.

use crate::error::{Error, Result};
use crate::nn::tensor::{dot, Tensor};
use rand::Rng;

/// Valid 1-D convolution over a token matrix.
///
/// `input` is `n x k` (one row per token), `filters` is `[f, m, k]` and
/// `bias` has length `f`. Output is `(n - m + 1) x f`: row `t`, column `j`
/// is the window starting at token `t` convolved with filter `j`.
pub fn conv_text(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, k) = (input.shape()[0], input.shape()[1]);
    if filters.shape().len() != 3 || filters.shape()[2] != k {
        return Err(Error::ShapeMismatch {
            expected: vec![n, k],
            got: filters.shape().to_vec(),
            context: "conv_text: filter width must equal input columns".into(),
        });
    }
    let (f, m) = (filters.shape()[0], filters.shape()[1]);
    if m > n {
        return Err(Error::ShapeMismatch {
            expected: vec![n, k],
            got: filters.shape().to_vec(),
            context: "conv_text: region size exceeds input length".into(),
        });
    }
    let window = m * k;
    let out_h = n - m + 1;
    let mut out = vec![0.0; out_h * f];
    let x = input.data();
    let w = filters.data();
    let b = bias.data();
    for t in 0..out_h {
        // Window rows are contiguous in row-major storage.
        let win = &x[t * k..t * k + window];
        let row = &mut out[t * f..(t + 1) * f];
        for j in 0..f {
            row[j] = b[j] + dot(win, &w[j * window..(j + 1) * window]);
        }
    }
    Tensor::new(vec![out_h, f], out)
}

/// Gradients of `conv_text` given `g_out` of shape `(n - m + 1) x f`.
/// Returns `(d_input, d_filters, d_bias)`.
pub fn conv_text_backward(
    input: &Tensor,
    filters: &Tensor,
    g_out: &Tensor,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = input.shape()[1];
    let (f, m) = (filters.shape()[0], filters.shape()[1]);
    let out_h = g_out.shape()[0];
    let window = m * k;
    let x = input.data();
    let w = filters.data();
    let g = g_out.data();

    let mut dx = vec![0.0; input.numel()];
    let mut dw = vec![0.0; filters.numel()];
    let mut db = vec![0.0; f];

    for t in 0..out_h {
        let win = &x[t * k..t * k + window];
        let dwin = &mut dx[t * k..t * k + window];
        let grow = &g[t * f..(t + 1) * f];
        for j in 0..f {
            let gj = grow[j];
            if gj == 0.0 {
                continue;
            }
            db[j] += gj;
            let wj = &w[j * window..(j + 1) * window];
            let dwj = &mut dw[j * window..(j + 1) * window];
            for i in 0..window {
                dwj[i] += gj * win[i];
                dwin[i] += gj * wj[i];
            }
        }
    }
    (dx, dw, db)
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Backward of relu: gradient passes only where the input was strictly
/// positive (the kink at 0 gets gradient 0).
pub fn relu_backward(input: &Tensor, g_out: &[f64]) -> Vec<f64> {
    input
        .data()
        .iter()
        .zip(g_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// 1-max pooling: the maximum of a feature map.
pub fn max_pool_1max(feature_map: &[f64]) -> Result<f64> {
    if feature_map.is_empty() {
        return Err(Error::EmptyInput("max_pool_1max on empty feature map".into()));
    }
    Ok(feature_map.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

/// Index of the first-occurring maximum; ties route the whole gradient here.
pub fn argmax_first(feature_map: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in feature_map.iter().enumerate().skip(1) {
        if v > feature_map[best] {
            best = i;
        }
    }
    best
}

/// Pool every column of an `h x f` map to its maximum.
/// Returns the pooled vector and, per column, the row of the first maximum.
pub fn max_pool_columns(map: &Tensor) -> (Vec<f64>, Vec<usize>) {
    let (h, f) = (map.shape()[0], map.shape()[1]);
    let data = map.data();
    let mut pooled = data[..f].to_vec();
    let mut arg = vec![0usize; f];
    for t in 1..h {
        let row = &data[t * f..(t + 1) * f];
        for j in 0..f {
            if row[j] > pooled[j] {
                pooled[j] = row[j];
                arg[j] = t;
            }
        }
    }
    (pooled, arg)
}

/// `x W + b` for a single row vector `x`.
pub fn linear(x: &[f64], w: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    if x.len() != rows || b.len() != cols {
        return Err(Error::ShapeMismatch {
            expected: vec![rows, cols],
            got: vec![x.len(), b.len()],
            context: "linear".into(),
        });
    }
    let mut out = b.to_vec();
    let wd = w.data();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let wrow = &wd[i * cols..(i + 1) * cols];
        for j in 0..cols {
            out[j] += xi * wrow[j];
        }
    }
    Ok(out)
}

/// Backward of [`linear`]: returns `(d_x, d_w, d_b)`.
pub fn linear_backward(x: &[f64], w: &Tensor, g_out: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    let mut dx = vec![0.0; rows];
    let mut dw = vec![0.0; rows * cols];
    for i in 0..rows {
        let wrow = &wd[i * cols..(i + 1) * cols];
        dx[i] = dot(wrow, g_out);
        let xi = x[i];
        if xi != 0.0 {
            let drow = &mut dw[i * cols..(i + 1) * cols];
            for j in 0..cols {
                drow[j] = xi * g_out[j];
            }
        }
    }
    (dx, dw, g_out.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Train mode keeps each element with probability
/// `1 - rate` and scales survivors by `1/(1 - rate)`; eval mode is the
/// identity. The keep mask is returned for the backward pass.
pub fn dropout_apply(
    x: &[f64],
    rate: f64,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Option<Vec<bool>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.to_vec(), None));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut out = Vec::with_capacity(x.len());
    let mut mask = Vec::with_capacity(x.len());
    for &v in x {
        let keep = rng.gen_range(0.0..1.0) >= rate;
        mask.push(keep);
        out.push(if keep { v * scale } else { 0.0 });
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(g_out: &[f64], rate: f64, mask: Option<&[bool]>) -> Vec<f64> {
    match mask {
        None => g_out.to_vec(),
        Some(mask) => {
            let scale = 1.0 / (1.0 - rate);
            g_out
                .iter()
                .zip(mask)
                .map(|(&g, &keep)| if keep { g * scale } else { 0.0 })
                .collect()
        }
    }
}
