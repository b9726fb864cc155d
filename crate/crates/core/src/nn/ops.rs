//! Forward and backward kernels. Each op is a pure function of its inputs;
//! layers own parameters and cached activations and call into these.

use rand::Rng;

use super::{par_map, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// `c = a·b + beta·c` for row-major `a: m×k`, `b: k×n`, either operand optionally transposed in place.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slice lengths cover every index reachable through these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_size(&self) -> Result<(usize, usize)> {
        let span = |len: usize| -> Result<usize> {
            let padded = len + 2 * self.padding;
            if self.stride == 0 || padded < self.kernel {
                return Err(Error::Shape(format!(
                    "kernel {} stride {} does not fit extent {len} with padding {}",
                    self.kernel, self.stride, self.padding
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((span(self.height)?, span(self.width)?))
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }
}

/// Unfolds one sample `(C, H, W)` into `(C·k·k, Ho·Wo)` columns, zero padded.
fn im2col(x: &[f64], g: &ConvGeometry, ho: usize, wo: usize) -> Vec<f64> {
    let p = ho * wo;
    let mut cols = vec![0.0; g.patch_len() * p];
    for c in 0..g.in_ch {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for u in 0..g.kernel {
            for v in 0..g.kernel {
                let row = &mut cols[((c * g.kernel + u) * g.kernel + v) * p..][..p];
                for y in 0..ho {
                    let iy = (y * g.stride + u) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..][..g.width];
                    for xo in 0..wo {
                        let ix = (xo * g.stride + v) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            row[y * wo + xo] = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Folds column gradients back onto the `(C, H, W)` input, summing overlaps.
fn col2im(cols: &[f64], g: &ConvGeometry, ho: usize, wo: usize) -> Vec<f64> {
    let p = ho * wo;
    let mut x = vec![0.0; g.in_ch * g.height * g.width];
    for c in 0..g.in_ch {
        let plane = &mut x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for u in 0..g.kernel {
            for v in 0..g.kernel {
                let row = &cols[((c * g.kernel + u) * g.kernel + v) * p..][..p];
                for y in 0..ho {
                    let iy = (y * g.stride + u) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    for xo in 0..wo {
                        let ix = (xo * g.stride + v) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            plane[iy as usize * g.width + ix as usize] += row[y * wo + xo];
                        }
                    }
                }
            }
        }
    }
    x
}

fn conv_geometry(input: &Tensor, weight: &Tensor, stride: usize, padding: usize) -> Result<(ConvGeometry, usize)> {
    let (_, c, h, w) = input.dims4()?;
    let (o, wc, kh, kw) = weight.dims4()?;
    if wc != c || kh != kw {
        return Err(Error::Shape(format!(
            "weight {:?} does not fit input {:?}",
            weight.shape(),
            input.shape()
        )));
    }
    let g = ConvGeometry {
        in_ch: c,
        height: h,
        width: w,
        kernel: kh,
        stride,
        padding,
    };
    g.out_size()?;
    Ok((g, o))
}

/// `out[n,o,y,x] = b[o] + Σ W[o,c,u,v]·in[n,c,y·s−p+u,x·s−p+v]`, zero padded.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &[f64], stride: usize, padding: usize) -> Result<Tensor> {
    let (g, o) = conv_geometry(input, weight, stride, padding)?;
    if bias.len() != o {
        return Err(Error::Shape(format!("bias length {} for {o} filters", bias.len())));
    }
    let (ho, wo) = g.out_size()?;
    let n = input.batch();
    let in_len = g.in_ch * g.height * g.width;
    let p = ho * wo;
    let outs = par_map(n, |i| {
        let cols = im2col(&input.data()[i * in_len..(i + 1) * in_len], &g, ho, wo);
        let mut out = vec![0.0; o * p];
        gemm(o, g.patch_len(), p, weight.data(), false, &cols, false, 0.0, &mut out);
        for (row, b) in out.chunks_exact_mut(p).zip(bias) {
            row.iter_mut().for_each(|v| *v += b);
        }
        out
    });
    Tensor::new(vec![n, o, ho, wo], outs.concat())
}

pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

/// Per-sample weight gradients are summed in batch order, so the result does not
/// depend on how many threads computed them.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let (g, o) = conv_geometry(input, weight, stride, padding)?;
    let (ho, wo) = g.out_size()?;
    let n = input.batch();
    if grad_out.shape() != [n, o, ho, wo] {
        return Err(Error::Shape(format!("conv gradient shape {:?}", grad_out.shape())));
    }
    let in_len = g.in_ch * g.height * g.width;
    let p = ho * wo;
    let kl = g.patch_len();
    let per_sample = par_map(n, |i| {
        let cols = im2col(&input.data()[i * in_len..(i + 1) * in_len], &g, ho, wo);
        let dy = &grad_out.data()[i * o * p..(i + 1) * o * p];
        let mut dw = vec![0.0; o * kl];
        gemm(o, p, kl, dy, false, &cols, true, 0.0, &mut dw);
        let mut dcols = vec![0.0; kl * p];
        gemm(kl, o, p, weight.data(), true, dy, false, 0.0, &mut dcols);
        (col2im(&dcols, &g, ho, wo), dw)
    });
    let mut dx = Vec::with_capacity(n * in_len);
    let mut dw = vec![0.0; o * kl];
    for (x, w) in per_sample {
        dx.extend_from_slice(&x);
        dw.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
    }
    let mut db = vec![0.0; o];
    for i in 0..n {
        for (oc, b) in db.iter_mut().enumerate() {
            *b += grad_out.data()[(i * o + oc) * p..][..p].iter().sum::<f64>();
        }
    }
    Ok(ConvGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        weight: Tensor::new(weight.shape().to_vec(), dw)?,
        bias: db,
    })
}

/// 2×2 max pooling with stride 2. Returns the output and, per output cell, the flat
/// input index that won (first in row-major block order on ties).
pub fn maxpool2d(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!("max pooling needs even extents, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut arg = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = base + 2 * y * w + 2 * xo;
                for idx in [best + 1, best + w, best + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, arg))
}

pub fn maxpool2d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(Error::Shape("pooling gradient does not match its argmax table".into()));
    }
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(dx)
}

/// `out = input·Wᵀ + b` with `W: (out, in)`. Each row is an independent dot-product
/// loop, so results do not depend on the batch a row arrives in.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, f) = input.dims2()?;
    let (o, wf) = weight.dims2()?;
    if wf != f || bias.len() != o {
        return Err(Error::Shape(format!(
            "linear weight {:?} / bias {} does not fit input {:?}",
            weight.shape(),
            bias.len(),
            input.shape()
        )));
    }
    let rows = par_map(n, |i| {
        let x = &input.data()[i * f..(i + 1) * f];
        (0..o)
            .map(|j| {
                let w = &weight.data()[j * f..(j + 1) * f];
                x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + bias[j]
            })
            .collect::<Vec<f64>>()
    });
    Tensor::new(vec![n, o], rows.concat())
}

pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn linear_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<LinearGrads> {
    let (n, f) = input.dims2()?;
    let (o, _) = weight.dims2()?;
    if grad_out.shape() != [n, o] {
        return Err(Error::Shape(format!("linear gradient shape {:?}", grad_out.shape())));
    }
    let mut dx = vec![0.0; n * f];
    gemm(n, o, f, grad_out.data(), false, weight.data(), false, 0.0, &mut dx);
    let mut dw = vec![0.0; o * f];
    gemm(o, n, f, grad_out.data(), true, input.data(), false, 0.0, &mut dw);
    let mut db = vec![0.0; o];
    for row in grad_out.data().chunks_exact(o) {
        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
    }
    Ok(LinearGrads {
        input: Tensor::new(vec![n, f], dx)?,
        weight: Tensor::new(vec![o, f], dw)?,
        bias: db,
    })
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Gradient of relu given its output: passes where the output is positive.
pub fn relu_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    output.zip_map(grad_out, |y, g| if y > 0.0 { g } else { 0.0 })
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(input: &Tensor) -> Tensor {
    input.map(sigmoid_scalar)
}

pub fn sigmoid_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    output.zip_map(grad_out, |y, g| g * y * (1.0 - y))
}

/// Row-wise softmax over `(N, K)` with max subtraction.
pub fn softmax(input: &Tensor) -> Result<Tensor> {
    let (_, k) = input.dims2()?;
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.iter_mut().for_each(|v| *v = (*v - m).exp());
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(out)
}

pub fn softmax_backward(output: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    let (_, k) = output.dims2()?;
    let mut dx = grad_out.clone();
    for (d, y) in dx.data_mut().chunks_exact_mut(k).zip(output.data().chunks_exact(k)) {
        let dot: f64 = d.iter().zip(y).map(|(g, y)| g * y).sum();
        d.iter_mut().zip(y).for_each(|(g, y)| *g = y * (*g - dot));
    }
    Ok(dx)
}

/// Saved by train-mode batch norm for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub x_hat: Tensor,
    pub inv_std: Vec<f64>,
}

pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (divide by count) variance, as used for normalization.
    pub var: Vec<f64>,
    /// Values per channel, `N·H·W`.
    pub count: usize,
}

fn channel_planes(shape: (usize, usize, usize, usize)) -> impl Fn(usize) -> Vec<std::ops::Range<usize>> {
    let (n, c, h, w) = shape;
    move |ch| (0..n).map(|i| (i * c + ch) * h * w..(i * c + ch + 1) * h * w).collect()
}

pub fn batchnorm2d_train(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    eps: f64,
) -> Result<(Tensor, BatchNormCache, BatchStats)> {
    let dims = input.dims4()?;
    let (n, c, h, w) = dims;
    if n < 2 {
        return Err(Error::Shape("train-mode batch norm needs a batch of at least 2".into()));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input {c}",
            gamma.len()
        )));
    }
    let planes = channel_planes(dims);
    let count = n * h * w;
    let x = input.data();
    let mut out = vec![0.0; x.len()];
    let mut x_hat = vec![0.0; x.len()];
    let mut stats = BatchStats {
        mean: vec![0.0; c],
        var: vec![0.0; c],
        count,
    };
    let mut inv_std = vec![0.0; c];
    for ch in 0..c {
        let ranges = planes(ch);
        let mean = ranges.iter().flat_map(|r| &x[r.clone()]).sum::<f64>() / count as f64;
        let var = ranges
            .iter()
            .flat_map(|r| &x[r.clone()])
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / count as f64;
        let is = 1.0 / (var + eps).sqrt();
        for r in ranges {
            for i in r {
                x_hat[i] = (x[i] - mean) * is;
                out[i] = gamma[ch] * x_hat[i] + beta[ch];
            }
        }
        stats.mean[ch] = mean;
        stats.var[ch] = var;
        inv_std[ch] = is;
    }
    let shape = input.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), out)?,
        BatchNormCache {
            x_hat: Tensor::new(shape, x_hat)?,
            inv_std,
        },
        stats,
    ))
}

pub fn batchnorm2d_eval(
    input: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
) -> Result<Tensor> {
    let dims = input.dims4()?;
    let (_, c, h, w) = dims;
    if gamma.len() != c {
        return Err(Error::Shape(format!(
            "batch norm has {} channels, input {c}",
            gamma.len()
        )));
    }
    let mut out = input.clone();
    let plane = h * w;
    for (i, chunk) in out.data_mut().chunks_exact_mut(plane).enumerate() {
        let ch = i % c;
        let is = 1.0 / (running_var[ch] + eps).sqrt();
        chunk
            .iter_mut()
            .for_each(|v| *v = gamma[ch] * ((*v - running_mean[ch]) * is) + beta[ch]);
    }
    Ok(out)
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

pub fn batchnorm2d_backward(cache: &BatchNormCache, gamma: &[f64], grad_out: &Tensor) -> Result<BatchNormGrads> {
    let dims = cache.x_hat.dims4()?;
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(Error::Shape(format!(
            "batch norm gradient shape {:?}",
            grad_out.shape()
        )));
    }
    let (n, c, h, w) = dims;
    let m = (n * h * w) as f64;
    let planes = channel_planes(dims);
    let g = grad_out.data();
    let xh = cache.x_hat.data();
    let mut dx = vec![0.0; g.len()];
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for ch in 0..c {
        let ranges = planes(ch);
        let (mut sg, mut sgx) = (0.0, 0.0);
        for r in &ranges {
            for i in r.clone() {
                sg += g[i];
                sgx += g[i] * xh[i];
            }
        }
        let k = gamma[ch] * cache.inv_std[ch] / m;
        for r in ranges {
            for i in r {
                dx[i] = k * (m * g[i] - sg - xh[i] * sgx);
            }
        }
        dgamma[ch] = sgx;
        dbeta[ch] = sg;
    }
    Ok(BatchNormGrads {
        input: Tensor::new(cache.x_hat.shape().to_vec(), dx)?,
        gamma: dgamma,
        beta: dbeta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl LrnParams {
    /// Channels `c − size/2 ..= c + (size−1)/2`, clipped to the valid range.
    fn window(&self, c: usize, channels: usize) -> std::ops::Range<usize> {
        c.saturating_sub(self.size / 2)..(c + (self.size - 1) / 2 + 1).min(channels)
    }
}

/// Cross-channel local response normalization:
/// `out = in / (k + alpha/size · Σ_window in²)^beta`. Also returns the bracketed
/// denominator base for each cell.
pub fn lrn(input: &Tensor, p: &LrnParams) -> Result<(Tensor, Vec<f64>)> {
    let (n, c, h, w) = input.dims4()?;
    if p.size == 0 || p.size.is_multiple_of(2) {
        return Err(Error::Shape(format!("LRN size must be odd, got {}", p.size)));
    }
    let plane = h * w;
    let x = input.data();
    let mut base = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for i in 0..n {
        for ch in 0..c {
            for q in 0..plane {
                let mut s = 0.0;
                for j in p.window(ch, c) {
                    let v = x[(i * c + j) * plane + q];
                    s += v * v;
                }
                let idx = (i * c + ch) * plane + q;
                base[idx] = p.k + p.alpha / p.size as f64 * s;
                out[idx] = x[idx] / base[idx].powf(p.beta);
            }
        }
    }
    Ok((Tensor::new(input.shape().to_vec(), out)?, base))
}

pub fn lrn_backward(input: &Tensor, base: &[f64], p: &LrnParams, grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let plane = h * w;
    let x = input.data();
    let g = grad_out.data();
    // t[c] = g[c]·x[c]·base[c]^(−beta−1), the shared term of every neighbour's gradient.
    let t: Vec<f64> = (0..x.len())
        .map(|i| g[i] * x[i] * base[i].powf(-p.beta - 1.0))
        .collect();
    let coef = 2.0 * p.beta * p.alpha / p.size as f64;
    let mut dx = vec![0.0; x.len()];
    for i in 0..n {
        for j in 0..c {
            // Channels whose window contains j.
            let lo = j.saturating_sub((p.size - 1) / 2);
            let hi = (j + p.size / 2 + 1).min(c);
            for q in 0..plane {
                let idx = (i * c + j) * plane + q;
                let s: f64 = (lo..hi).map(|ch| t[(i * c + ch) * plane + q]).sum();
                dx[idx] = g[idx] * base[idx].powf(-p.beta) - coef * x[idx] * s;
            }
        }
    }
    Tensor::new(input.shape().to_vec(), dx)
}

/// Inverted dropout. In train mode each cell is zeroed with probability `rate` and
/// survivors are scaled by `1/(1−rate)`; the returned mask holds those factors.
pub fn dropout(input: &Tensor, rate: f64, mode: Mode, rng: &mut Rng64) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((Tensor::new(input.shape().to_vec(), out)?, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, grad_out: &Tensor) -> Tensor {
    match mask {
        None => grad_out.clone(),
        Some(m) => {
            let mut g = grad_out.clone();
            g.data_mut().iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            g
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = t(&[1, 1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let y = conv2d(&x, &t(&[1, 1, 1, 1], &[1.0]), &[0.0], 1, 0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn padded_conv_by_hand() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = conv2d(&x, &t(&[1, 1, 3, 3], &[1.0; 9]), &[0.5], 1, 1).unwrap();
        assert_eq!(y.data(), &[10.5; 4]);
        let strided = conv2d(&x, &t(&[1, 1, 1, 1], &[2.0]), &[0.0], 2, 0).unwrap();
        assert_eq!(strided.data(), &[2.0]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(vec![1, 2, 4, 4]);
        assert!(conv2d(&x, &Tensor::zeros(vec![1, 1, 3, 3]), &[0.0], 1, 1).is_err());
    }

    #[test]
    fn pool_ties_go_top_left() {
        let x = t(&[1, 1, 2, 2], &[7.0; 4]);
        let (y, arg) = maxpool2d(&x).unwrap();
        assert_eq!(y.data(), &[7.0]);
        let dx = maxpool2d_backward(x.shape(), &arg, &t(&[1, 1, 1, 1], &[1.0])).unwrap();
        assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
        assert!(maxpool2d(&Tensor::zeros(vec![1, 1, 3, 2])).is_err());
    }

    #[test]
    fn linear_by_hand() {
        let y = linear(&t(&[1, 2], &[1.0, 2.0]), &t(&[1, 2], &[3.0, 4.0]), &[5.0]).unwrap();
        assert_eq!(y.data(), &[16.0]);
    }

    #[test]
    fn activations() {
        assert_eq!(relu(&t(&[2], &[-1.0, 2.0])).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let s = softmax(&t(&[1, 3], &[1000.0; 3])).unwrap();
        assert!(s.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn constant_channels_normalize_to_zero() {
        let x = t(&[2, 1, 1, 2], &[3.0; 4]);
        let (y, _, _) = batchnorm2d_train(&x, &[1.0], &[0.0], 1e-5).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        assert!(batchnorm2d_train(&t(&[1, 1, 1, 2], &[1.0, 2.0]), &[1.0], &[0.0], 1e-5).is_err());
    }

    #[test]
    fn lrn_closed_forms() {
        let x = t(&[1, 3, 1, 2], &[0.5, -1.0, 2.0, 3.0, 0.25, 4.0]);
        let id = LrnParams {
            size: 5,
            alpha: 0.0,
            beta: 0.75,
            k: 1.0,
        };
        assert_eq!(lrn(&x, &id).unwrap().0, x);
        let single = t(&[1, 1, 1, 2], &[2.0, 4.0]);
        let inv = LrnParams {
            size: 1,
            alpha: 1.0,
            beta: 1.0,
            k: 0.0,
        };
        assert_eq!(lrn(&single, &inv).unwrap().0.data(), &[0.5, 0.25]);
    }

    #[test]
    fn dropout_modes() {
        let x = Tensor::filled(vec![4, 4], 1.0);
        let mut r = crate::rng::rng(0);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut r).unwrap().0, x);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut r).unwrap().0, x);
        let (y, _) = dropout(&x, 0.5, Mode::Train, &mut r).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
