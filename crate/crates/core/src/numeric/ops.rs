//! Forward kernels and their exact backward rules for every layer the encoder
//! uses. Kernels are free functions so the same code serves both the gradient
//! tape and the tape-free key/inference path.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Smallest norm accepted by [`l2_normalize`].
pub const NORM_EPS: f64 = 1e-12;

/// Saved state of a convolution forward pass.
#[derive(Debug, Clone)]
pub struct Conv2dCache<T> {
    cols: Vec<T>,
    in_shape: (usize, usize, usize),
    out_hw: (usize, usize),
    stride: usize,
    pad: usize,
}

pub fn conv_out_size(size: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if padded < 3 {
        return None;
    }
    Some((padded - 3) / stride + 1)
}

/// 3×3 cross-correlation. `weight` is `[C_out, C_in, 3, 3]`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, Conv2dCache<T>)> {
    let (c_in, h, w) = input.chw()?;
    let &[c_out, wc_in, kh, kw] = weight.shape() else {
        return Err(Error::dim(
            "conv2d",
            format!("weight must be rank 4, got {:?}", weight.shape()),
        ));
    };
    if (kh, kw) != (3, 3) {
        return Err(Error::dim(
            "conv2d",
            format!("kernel axes (2,3) must be 3x3, got {kh}x{kw}"),
        ));
    }
    if wc_in != c_in {
        return Err(Error::dim(
            "conv2d",
            format!("input channels (axis 0) {c_in} != weight axis 1 {wc_in}"),
        ));
    }
    if bias.shape() != [c_out] {
        return Err(Error::dim(
            "conv2d",
            format!("bias shape {:?} != [{c_out}]", bias.shape()),
        ));
    }
    if pad > 1 || !(1..=2).contains(&stride) {
        return Err(Error::Argument(format!(
            "conv2d supports pad in {{0,1}} and stride in {{1,2}}, got pad={pad} stride={stride}"
        )));
    }
    let (Some(ho), Some(wo)) = (conv_out_size(h, stride, pad), conv_out_size(w, stride, pad))
    else {
        return Err(Error::dim(
            "conv2d",
            format!("spatial axes (1,2) {h}x{w} too small for 3x3 kernel with pad {pad}"),
        ));
    };

    let rows = c_in * 9;
    let p = ho * wo;
    let mut cols = vec![T::zero(); rows * p];
    let x = input.data();
    for ci in 0..c_in {
        for ky in 0..3 {
            for kx in 0..3 {
                let r = ci * 9 + ky * 3 + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &x[(ci * h + iy as usize) * w..(ci * h + iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[oy * wo + ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }

    let mut out = vec![T::zero(); c_out * p];
    for (co, &b) in bias.data().iter().enumerate() {
        out[co * p..(co + 1) * p].fill(b);
    }
    T::gemm(c_out, rows, p, weight.data(), false, &cols, false, T::one(), &mut out);

    let out = Tensor::from_vec(&[c_out, ho, wo], out)?;
    let cache = Conv2dCache {
        cols,
        in_shape: (c_in, h, w),
        out_hw: (ho, wo),
        stride,
        pad,
    };
    Ok((out, cache))
}

/// Gradients of a convolution: `(d_input, d_weight, d_bias)`. The input
/// gradient is skipped when `need_input_grad` is false.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    weight: &Tensor<T>,
    cache: &Conv2dCache<T>,
    need_input_grad: bool,
) -> Result<(Option<Tensor<T>>, Tensor<T>, Tensor<T>)> {
    let (c_in, h, w) = cache.in_shape;
    let (ho, wo) = cache.out_hw;
    let c_out = weight.shape()[0];
    if grad_out.shape() != [c_out, ho, wo] {
        return Err(Error::dim(
            "conv2d_backward",
            format!("grad shape {:?} != [{c_out}, {ho}, {wo}]", grad_out.shape()),
        ));
    }
    let rows = c_in * 9;
    let p = ho * wo;
    let g = grad_out.data();

    let mut gw = vec![T::zero(); c_out * rows];
    T::gemm(c_out, p, rows, g, false, &cache.cols, true, T::zero(), &mut gw);
    let gb: Vec<T> = (0..c_out)
        .map(|co| g[co * p..(co + 1) * p].iter().copied().sum())
        .collect();

    let gx = if need_input_grad {
        let mut gcols = vec![T::zero(); rows * p];
        T::gemm(rows, c_out, p, weight.data(), true, g, false, T::zero(), &mut gcols);
        let mut gx = vec![T::zero(); c_in * h * w];
        let (stride, pad) = (cache.stride, cache.pad);
        for ci in 0..c_in {
            for ky in 0..3 {
                for kx in 0..3 {
                    let r = ci * 9 + ky * 3 + kx;
                    let src = &gcols[r * p..(r + 1) * p];
                    for oy in 0..ho {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let base = (ci * h + iy as usize) * w;
                        for ox in 0..wo {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix >= 0 && ix < w as isize {
                                gx[base + ix as usize] += src[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        Some(Tensor::from_vec(&[c_in, h, w], gx)?)
    } else {
        None
    };

    Ok((
        gx,
        Tensor::from_vec(weight.shape(), gw)?,
        Tensor::from_vec(&[c_out], gb)?,
    ))
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

pub fn relu_backward<T: Scalar>(grad: &Tensor<T>, input: &Tensor<T>) -> Tensor<T> {
    let mut g = grad.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    g
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat input index it was taken from (first maximum wins).
pub fn maxpool2<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let (c, h, w) = x.chw()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::dim(
            "maxpool2",
            format!("spatial axes (1,2) must be even, got {h}x{w}"),
        ));
    }
    let (ho, wo) = (h / 2, w / 2);
    let d = x.data();
    let mut out = Vec::with_capacity(c * ho * wo);
    let mut arg = Vec::with_capacity(c * ho * wo);
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best_i = (ch * h + 2 * oy) * w + 2 * ox;
                let mut best = d[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                    if d[i] > best {
                        best = d[i];
                        best_i = i;
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, ho, wo], out)?, arg))
}

pub fn maxpool2_backward<T: Scalar>(
    grad: &Tensor<T>,
    argmax: &[u32],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let mut gx = Tensor::zeros(input_shape);
    let gd = gx.data_mut();
    for (&g, &i) in grad.data().iter().zip(argmax) {
        gd[i as usize] += g;
    }
    Ok(gx)
}

pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    let hw = h * w;
    let inv = T::one() / T::from_usize(hw).unwrap();
    let out = x
        .data()
        .chunks_exact(hw)
        .map(|plane| plane.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor::from_vec(&[c], out)
}

pub fn global_avg_pool_backward<T: Scalar>(
    grad: &Tensor<T>,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    let &[c, h, w] = input_shape else {
        return Err(Error::dim("global_avg_pool_backward", "input must be rank 3"));
    };
    if grad.shape() != [c] {
        return Err(Error::dim(
            "global_avg_pool_backward",
            format!("grad shape {:?} != [{c}]", grad.shape()),
        ));
    }
    let inv = T::one() / T::from_usize(h * w).unwrap();
    let mut out = Vec::with_capacity(c * h * w);
    for &g in grad.data() {
        out.extend(std::iter::repeat_n(g * inv, h * w));
    }
    Tensor::from_vec(input_shape, out)
}

/// `y = W·x + b` with `W: [D_out, D_in]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let &[d_out, d_in] = weight.shape() else {
        return Err(Error::dim("linear", format!("weight must be rank 2, got {:?}", weight.shape())));
    };
    if x.shape() != [d_in] || bias.shape() != [d_out] {
        return Err(Error::dim(
            "linear",
            format!(
                "x {:?} / bias {:?} incompatible with weight [{d_out}, {d_in}]",
                x.shape(),
                bias.shape()
            ),
        ));
    }
    let mut y = bias.data().to_vec();
    T::gemm(d_out, d_in, 1, weight.data(), false, x.data(), false, T::one(), &mut y);
    Tensor::from_vec(&[d_out], y)
}

/// `(d_x, d_W, d_b)` for [`linear`].
pub fn linear_backward<T: Scalar>(
    grad: &Tensor<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (d_out, d_in) = (weight.shape()[0], weight.shape()[1]);
    let g = grad.data();
    let mut gx = vec![T::zero(); d_in];
    T::gemm(d_in, d_out, 1, weight.data(), true, g, false, T::zero(), &mut gx);
    let mut gw = vec![T::zero(); d_out * d_in];
    T::gemm(d_out, 1, d_in, g, false, x.data(), false, T::zero(), &mut gw);
    Ok((
        Tensor::from_vec(&[d_in], gx)?,
        Tensor::from_vec(&[d_out, d_in], gw)?,
        grad.clone(),
    ))
}

/// `x / ||x||₂`, returning the norm for the backward pass.
pub fn l2_normalize<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, T)> {
    let norm = x.norm();
    if !(norm > T::lit(NORM_EPS)) {
        return Err(Error::DegenerateInput(format!(
            "cannot normalize vector with norm {:?}",
            norm
        )));
    }
    let mut y = x.clone();
    y.scale(T::one() / norm);
    Ok((y, norm))
}

/// Jacobian-vector product of [`l2_normalize`]: `(g − y·(y·g)) / ||x||`.
pub fn l2_normalize_backward<T: Scalar>(grad: &Tensor<T>, y: &Tensor<T>, norm: T) -> Tensor<T> {
    let proj = y.dot(grad);
    let inv = T::one() / norm;
    let data = grad
        .data()
        .iter()
        .zip(y.data())
        .map(|(&g, &yv)| (g - yv * proj) * inv)
        .collect();
    Tensor::from_vec(grad.shape(), data).expect("same shape as grad")
}
