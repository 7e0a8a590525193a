//! Forward and backward kernels for the fixed layer vocabulary.
//!
//! Convolutions go through im2col plus GEMM; everything else is a direct
//! loop. All kernels are pure functions of (params, input), so callers may
//! evaluate different samples concurrently.

use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_at, matmul_bt, Tensor};

use super::{LayerParams, LayerSpec};

pub fn output_shape(layer: &LayerSpec, input: &[usize]) -> Result<Vec<usize>> {
    let err = |msg: String| Err(Error::ShapeMismatch(msg));
    match layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            if input.len() != 3 || input[0] != *in_ch {
                return err(format!("conv2d expects [{in_ch},h,w], got {input:?}"));
            }
            let (h, w) = (input[1], input[2]);
            if h + 2 * pad < *kernel || w + 2 * pad < *kernel || *stride == 0 {
                return err(format!(
                    "conv2d kernel {kernel} stride {stride} pad {pad} does not fit {input:?}"
                ));
            }
            let oh = (h + 2 * pad - kernel) / stride + 1;
            let ow = (w + 2 * pad - kernel) / stride + 1;
            Ok(vec![*out_ch, oh, ow])
        }
        LayerSpec::Relu => Ok(input.to_vec()),
        LayerSpec::AvgPool { kernel, stride } => {
            if input.len() != 3 {
                return err(format!("avgpool expects [c,h,w], got {input:?}"));
            }
            let (c, h, w) = (input[0], input[1], input[2]);
            if h < *kernel || w < *kernel || *stride == 0 {
                return err(format!("avgpool {kernel}/{stride} does not fit {input:?}"));
            }
            Ok(vec![c, (h - kernel) / stride + 1, (w - kernel) / stride + 1])
        }
        LayerSpec::Upsample { factor } => {
            if input.len() != 3 || *factor == 0 {
                return err(format!("upsample x{factor} expects [c,h,w], got {input:?}"));
            }
            Ok(vec![input[0], input[1] * factor, input[2] * factor])
        }
        LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        LayerSpec::Reshape { shape } => {
            if input.iter().product::<usize>() != shape.iter().product::<usize>() {
                return err(format!("cannot reshape {input:?} into {shape:?}"));
            }
            Ok(shape.to_vec())
        }
        LayerSpec::Dense {
            input: d_in,
            output,
        } => {
            if input.iter().product::<usize>() != *d_in {
                return err(format!("dense expects {d_in} inputs, got {input:?}"));
            }
            Ok(vec![*output])
        }
    }
}

/// Number of columns in the im2col matrix for a conv layer.
fn conv_cols(in_ch: usize, kernel: usize) -> usize {
    in_ch * kernel * kernel
}

thread_local! {
    // scratch for the im2col matrix and its gradient; reused across calls so
    // the hot loop never reallocates
    static COLS: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
    static GRAD_COLS: std::cell::RefCell<Vec<f64>> = const { std::cell::RefCell::new(Vec::new()) };
}

/// Fill `cols` (resized to `oh*ow*q`) with the im2col matrix. Every slot is
/// written, including padding zeros, so the buffer can be reused dirty.
fn im2col_into(
    cols: &mut Vec<f64>,
    input: &Tensor,
    in_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let q = conv_cols(in_ch, kernel);
    cols.resize(oh * ow * q, 0.0);
    let data = input.data();
    for oy in 0..oh {
        for ox in 0..ow {
            let pos = oy * ow + ox;
            let col = &mut cols[pos * q..(pos + 1) * q];
            let ix0 = (ox * stride) as isize - pad as isize;
            // valid kx span maps to one contiguous source run per row
            let kx_lo = (-ix0).max(0) as usize;
            let kx_hi = ((w as isize - ix0).clamp(0, kernel as isize)) as usize;
            let mut qi = 0;
            for ic in 0..in_ch {
                let plane = &data[ic * h * w..(ic + 1) * h * w];
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy >= 0 && iy < h as isize && kx_lo < kx_hi {
                        let base = iy as usize * w;
                        let src_lo = (ix0 + kx_lo as isize) as usize;
                        let src_hi = (ix0 + kx_hi as isize) as usize;
                        col[qi..qi + kx_lo].fill(0.0);
                        col[qi + kx_lo..qi + kx_hi]
                            .copy_from_slice(&plane[base + src_lo..base + src_hi]);
                        col[qi + kx_hi..qi + kernel].fill(0.0);
                    } else {
                        col[qi..qi + kernel].fill(0.0);
                    }
                    qi += kernel;
                }
            }
        }
    }
}

fn col2im(
    grad_cols: &[f64],
    in_shape: &[usize],
    in_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Tensor {
    let (h, w) = (in_shape[1], in_shape[2]);
    let q = conv_cols(in_ch, kernel);
    let mut grad = Tensor::zeros(in_shape);
    let gdata = grad.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let pos = oy * ow + ox;
            let col = &grad_cols[pos * q..(pos + 1) * q];
            let ix0 = (ox * stride) as isize - pad as isize;
            let kx_lo = (-ix0).max(0) as usize;
            let kx_hi = ((w as isize - ix0).clamp(0, kernel as isize)) as usize;
            if kx_lo >= kx_hi {
                continue;
            }
            let dst_lo = (ix0 + kx_lo as isize) as usize;
            let mut qi = 0;
            for ic in 0..in_ch {
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy >= 0 && iy < h as isize {
                        let base = (ic * h + iy as usize) * w + dst_lo;
                        for (dst, src) in gdata[base..base + (kx_hi - kx_lo)]
                            .iter_mut()
                            .zip(&col[qi + kx_lo..qi + kx_hi])
                        {
                            *dst += src;
                        }
                    }
                    qi += kernel;
                }
            }
        }
    }
    grad
}

pub fn forward(layer: &LayerSpec, params: Option<&LayerParams>, input: &Tensor) -> Result<Tensor> {
    let out_shape = output_shape(layer, input.shape())?;
    match layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let p = params.expect("conv2d has parameters");
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let q = conv_cols(*in_ch, *kernel);
            let mut out = Tensor::zeros(&out_shape);
            COLS.with_borrow_mut(|cols| {
                im2col_into(cols, input, *in_ch, *kernel, *stride, *pad, oh, ow);
                // out[oc, pos] = W[oc, :] . cols[pos, :]
                matmul_bt(*out_ch, q, oh * ow, p.weight.data(), cols, out.data_mut(), 0.0);
            });
            let bias = p.bias.data();
            let odata = out.data_mut();
            for oc in 0..*out_ch {
                let b = bias[oc];
                for v in &mut odata[oc * oh * ow..(oc + 1) * oh * ow] {
                    *v += b;
                }
            }
            Ok(out)
        }
        LayerSpec::Relu => {
            let mut out = input.clone();
            for v in out.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            Ok(out)
        }
        LayerSpec::AvgPool { kernel, stride } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let norm = 1.0 / (kernel * kernel) as f64;
            let mut out = Tensor::zeros(&out_shape);
            let idata = input.data();
            let odata = out.data_mut();
            for ch in 0..c {
                let plane = &idata[ch * h * w..(ch + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ky in 0..*kernel {
                            let row = &plane[(oy * stride + ky) * w..];
                            for kx in 0..*kernel {
                                acc += row[ox * stride + kx];
                            }
                        }
                        odata[(ch * oh + oy) * ow + ox] = acc * norm;
                    }
                }
            }
            Ok(out)
        }
        LayerSpec::Upsample { factor } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (h * factor, w * factor);
            let mut out = Tensor::zeros(&out_shape);
            let idata = input.data();
            let odata = out.data_mut();
            for ch in 0..c {
                for oy in 0..oh {
                    let iy = oy / factor;
                    let src = &idata[(ch * h + iy) * w..(ch * h + iy + 1) * w];
                    let dst = &mut odata[(ch * oh + oy) * ow..(ch * oh + oy + 1) * ow];
                    for ox in 0..ow {
                        dst[ox] = src[ox / factor];
                    }
                }
            }
            Ok(out)
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
            Ok(input.clone().reshaped(&out_shape)?)
        }
        LayerSpec::Dense { input: d_in, output } => {
            let p = params.expect("dense has parameters");
            let mut out = Tensor::zeros(&out_shape);
            let x = input.data();
            let wdata = p.weight.data();
            let bias = p.bias.data();
            let odata = out.data_mut();
            for o in 0..*output {
                let row = &wdata[o * d_in..(o + 1) * d_in];
                let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
                odata[o] = dot + bias[o];
            }
            Ok(out)
        }
    }
}

/// Computes the input gradient of one layer. Parameter gradients, when the
/// layer has any, are accumulated into `acc` (pass `None` to skip them;
/// attack loops only need the input path).
pub fn backward(
    layer: &LayerSpec,
    params: Option<&LayerParams>,
    input: &Tensor,
    grad_out: &Tensor,
    acc: Option<&mut LayerParams>,
) -> Result<Tensor> {
    match layer {
        LayerSpec::Conv2d {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => {
            let p = params.expect("conv2d has parameters");
            let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
            let positions = oh * ow;
            let q = conv_cols(*in_ch, *kernel);
            let g = grad_out.data();

            if let Some(acc) = acc {
                COLS.with_borrow_mut(|cols| {
                    im2col_into(cols, input, *in_ch, *kernel, *stride, *pad, oh, ow);
                    // grad_W[oc, q] += sum_pos g[oc, pos] * cols[pos, q]
                    matmul(*out_ch, positions, q, g, cols, acc.weight.data_mut(), 1.0);
                });
                let gb = acc.bias.data_mut();
                for oc in 0..*out_ch {
                    gb[oc] += g[oc * positions..(oc + 1) * positions].iter().sum::<f64>();
                }
            }

            let grad_in = GRAD_COLS.with_borrow_mut(|grad_cols| {
                grad_cols.resize(positions * q, 0.0);
                // grad_cols[pos, q] = sum_oc g[oc, pos] * W[oc, q]; beta = 0
                // overwrites every slot, so the dirty buffer is safe to reuse
                matmul_at(positions, *out_ch, q, g, p.weight.data(), grad_cols, 0.0);
                col2im(grad_cols, input.shape(), *in_ch, *kernel, *stride, *pad, oh, ow)
            });
            Ok(grad_in)
        }
        LayerSpec::Relu => {
            let mut grad_in = grad_out.clone();
            for (g, x) in grad_in.data_mut().iter_mut().zip(input.data()) {
                if *x <= 0.0 {
                    *g = 0.0;
                }
            }
            Ok(grad_in)
        }
        LayerSpec::AvgPool { kernel, stride } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
            let norm = 1.0 / (kernel * kernel) as f64;
            let mut grad_in = Tensor::zeros(input.shape());
            let g = grad_out.data();
            let gi = grad_in.data_mut();
            for ch in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = g[(ch * oh + oy) * ow + ox] * norm;
                        for ky in 0..*kernel {
                            let base = (ch * h + oy * stride + ky) * w;
                            for kx in 0..*kernel {
                                gi[base + ox * stride + kx] += share;
                            }
                        }
                    }
                }
            }
            Ok(grad_in)
        }
        LayerSpec::Upsample { factor } => {
            let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
            let (oh, ow) = (grad_out.shape()[1], grad_out.shape()[2]);
            let mut grad_in = Tensor::zeros(input.shape());
            let g = grad_out.data();
            let gi = grad_in.data_mut();
            for ch in 0..c {
                for oy in 0..oh {
                    let iy = oy / factor;
                    let src = &g[(ch * oh + oy) * ow..(ch * oh + oy + 1) * ow];
                    let dst = &mut gi[(ch * h + iy) * w..(ch * h + iy + 1) * w];
                    for ox in 0..ow {
                        dst[ox / factor] += src[ox];
                    }
                }
            }
            Ok(grad_in)
        }
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => {
            Ok(grad_out.clone().reshaped(input.shape())?)
        }
        LayerSpec::Dense { input: d_in, output } => {
            let p = params.expect("dense has parameters");
            let x = input.data();
            let g = grad_out.data();
            let wdata = p.weight.data();

            let mut grad_in = Tensor::zeros(input.shape());
            let gi = grad_in.data_mut();
            for o in 0..*output {
                let go = g[o];
                if go == 0.0 {
                    continue;
                }
                let row = &wdata[o * d_in..(o + 1) * d_in];
                for (dst, w) in gi.iter_mut().zip(row) {
                    *dst += go * w;
                }
            }

            if let Some(acc) = acc {
                let gw = acc.weight.data_mut();
                for o in 0..*output {
                    let go = g[o];
                    if go == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * d_in..(o + 1) * d_in];
                    for (dst, xv) in row.iter_mut().zip(x) {
                        *dst += go * xv;
                    }
                }
                for (dst, gv) in acc.bias.data_mut().iter_mut().zip(g) {
                    *dst += gv;
                }
            }
            Ok(grad_in)
        }
    }
}
