//! Convolution kernels (im2col + GEMM) and their vector-Jacobian products.

use super::linalg::{gemm, MatMut, MatRef};
use super::{Scalar, Tensor};
use crate::error::{config_err, Result};

/// Geometry of a 2-D cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (&[batch, cin, h, w], &[cout, wcin, kh, kw]) = (input, weight) else {
            return config_err(format!(
                "conv2d expects rank-4 input and weight, got {input:?} and {weight:?}"
            ));
        };
        if cin != wcin {
            return config_err(format!(
                "conv2d input has {cin} channels but weight expects {wcin}"
            ));
        }
        if stride == 0 {
            return config_err("conv2d stride must be positive");
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return config_err(format!(
                "conv2d kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            ));
        }
        Ok(ConvGeometry {
            batch,
            in_channels: cin,
            out_channels: cout,
            height: h,
            width: w,
            kernel_h: kh,
            kernel_w: kw,
            stride,
            padding,
            out_h: (h + 2 * padding - kh) / stride + 1,
            out_w: (w + 2 * padding - kw) / stride + 1,
        })
    }

    fn is_pointwise(&self) -> bool {
        self.kernel_h == 1 && self.kernel_w == 1 && self.stride == 1 && self.padding == 0
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Multiply-accumulate count of the forward pass.
    pub fn macs(&self) -> u64 {
        (self.batch * self.out_channels * self.patch_len() * self.out_pixels()) as u64
    }
}

fn im2col<T: Scalar>(g: &ConvGeometry, x: &[T], cols: &mut [T]) {
    let (h, w, s, p) = (g.height as isize, g.width as isize, g.stride as isize, g.padding as isize);
    let (oh, ow) = (g.out_h, g.out_w);
    let mut row = 0;
    for ci in 0..g.in_channels {
        let plane = &x[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..g.kernel_h as isize {
            for kj in 0..g.kernel_w as isize {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize * s + ki - p;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize * s + kj - p;
                        *v = if ix < 0 || ix >= w { T::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im<T: Scalar>(g: &ConvGeometry, cols: &[T], dx: &mut [T]) {
    let (h, w, s, p) = (g.height as isize, g.width as isize, g.stride as isize, g.padding as isize);
    let (oh, ow) = (g.out_h, g.out_w);
    let mut row = 0;
    for ci in 0..g.in_channels {
        let plane = &mut dx[ci * g.height * g.width..(ci + 1) * g.height * g.width];
        for ki in 0..g.kernel_h as isize {
            for kj in 0..g.kernel_w as isize {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize * s + ki - p;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let line = &src[oy * ow..(oy + 1) * ow];
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, &v) in line.iter().enumerate() {
                        let ix = ox as isize * s + kj - p;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] = dst[ix as usize] + v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    if bias.len() != g.out_channels {
        return config_err(format!(
            "conv2d bias has {} entries, expected {}",
            bias.len(),
            g.out_channels
        ));
    }
    let (np, pl) = (g.out_pixels(), g.patch_len());
    let in_plane = g.in_channels * g.height * g.width;
    let mut out = vec![T::zero(); g.batch * g.out_channels * np];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); pl * np] };
    for b in 0..g.batch {
        let xb = &input.data()[b * in_plane..(b + 1) * in_plane];
        let ob = &mut out[b * g.out_channels * np..(b + 1) * g.out_channels * np];
        for (co, chunk) in ob.chunks_mut(np).enumerate() {
            chunk.fill(bias.data()[co]);
        }
        let cols_ref: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(&g, xb, &mut cols);
            &cols
        };
        gemm(
            T::one(),
            MatRef::new(weight.data(), g.out_channels, pl),
            MatRef::new(cols_ref, pl, np),
            T::one(),
            MatMut::new(ob, g.out_channels, np),
        );
    }
    Ok(Tensor::from_parts(vec![g.batch, g.out_channels, g.out_h, g.out_w], out))
}

/// Gradients of a conv2d with respect to its input, weight and bias.
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input.shape(), weight.shape(), stride, padding)?;
    let (np, pl) = (g.out_pixels(), g.patch_len());
    let in_plane = g.in_channels * g.height * g.width;
    let mut dx = need[0].then(|| vec![T::zero(); input.len()]);
    let mut dw = need[1].then(|| vec![T::zero(); weight.len()]);
    let mut cols = vec![T::zero(); if g.is_pointwise() { 0 } else { pl * np }];
    let mut dcols = vec![T::zero(); if need[0] && !g.is_pointwise() { pl * np } else { 0 }];
    for b in 0..g.batch {
        let gb = &grad_out.data()[b * g.out_channels * np..(b + 1) * g.out_channels * np];
        let xb = &input.data()[b * in_plane..(b + 1) * in_plane];
        if let Some(dw) = dw.as_mut() {
            let cols_ref: &[T] = if g.is_pointwise() {
                xb
            } else {
                im2col(&g, xb, &mut cols);
                &cols
            };
            gemm(
                T::one(),
                MatRef::new(gb, g.out_channels, np),
                MatRef::new(cols_ref, pl, np).t(),
                T::one(),
                MatMut::new(dw, g.out_channels, pl),
            );
        }
        if let Some(dx) = dx.as_mut() {
            let dxb = &mut dx[b * in_plane..(b + 1) * in_plane];
            if g.is_pointwise() {
                gemm(
                    T::one(),
                    MatRef::new(weight.data(), g.out_channels, pl).t(),
                    MatRef::new(gb, g.out_channels, np),
                    T::zero(),
                    MatMut::new(dxb, pl, np),
                );
            } else {
                gemm(
                    T::one(),
                    MatRef::new(weight.data(), g.out_channels, pl).t(),
                    MatRef::new(gb, g.out_channels, np),
                    T::zero(),
                    MatMut::new(&mut dcols, pl, np),
                );
                col2im(&g, &dcols, dxb);
            }
        }
    }
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.out_channels];
        for b in 0..g.batch {
            for (co, acc) in db.iter_mut().enumerate() {
                let start = (b * g.out_channels + co) * np;
                *acc = *acc + grad_out.data()[start..start + np].iter().copied().sum::<T>();
            }
        }
        Tensor::from_parts(vec![g.out_channels], db)
    });
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        weight: dw.map(|d| Tensor::from_parts(weight.shape().to_vec(), d)),
        bias: db,
    })
}

/// Geometry of a transposed convolution whose kernel equals its stride.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TransposedGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub stride: usize,
}

impl TransposedGeometry {
    pub fn new(input: &[usize], weight: &[usize], stride: usize) -> Result<Self> {
        let (&[batch, cin, h, w], &[wcin, cout, kh, kw]) = (input, weight) else {
            return config_err(format!(
                "conv_transpose2d expects rank-4 input and weight, got {input:?} and {weight:?}"
            ));
        };
        if cin != wcin {
            return config_err(format!(
                "conv_transpose2d input has {cin} channels but weight expects {wcin}"
            ));
        }
        if kh != kw || kh != stride || stride == 0 {
            return config_err(format!(
                "conv_transpose2d supports only kernel == stride, got {kh}x{kw} stride {stride}"
            ));
        }
        Ok(TransposedGeometry { batch, in_channels: cin, out_channels: cout, height: h, width: w, stride })
    }

    fn taps(&self) -> usize {
        self.out_channels * self.stride * self.stride
    }

    pub fn macs(&self) -> u64 {
        (self.batch * self.in_channels * self.taps() * self.height * self.width) as u64
    }
}

pub fn conv_transpose2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = TransposedGeometry::new(input.shape(), weight.shape(), stride)?;
    if bias.len() != g.out_channels {
        return config_err(format!(
            "conv_transpose2d bias has {} entries, expected {}",
            bias.len(),
            g.out_channels
        ));
    }
    let (s, hw) = (g.stride, g.height * g.width);
    let (oh, ow) = (g.height * s, g.width * s);
    let in_plane = g.in_channels * hw;
    let mut tmp = vec![T::zero(); g.taps() * hw];
    let mut out = vec![T::zero(); g.batch * g.out_channels * oh * ow];
    for b in 0..g.batch {
        gemm(
            T::one(),
            MatRef::new(weight.data(), g.in_channels, g.taps()).t(),
            MatRef::new(&input.data()[b * in_plane..(b + 1) * in_plane], g.in_channels, hw),
            T::zero(),
            MatMut::new(&mut tmp, g.taps(), hw),
        );
        let ob = &mut out[b * g.out_channels * oh * ow..(b + 1) * g.out_channels * oh * ow];
        for co in 0..g.out_channels {
            let bias_v = bias.data()[co];
            for di in 0..s {
                for dj in 0..s {
                    let row = &tmp[((co * s + di) * s + dj) * hw..((co * s + di) * s + dj + 1) * hw];
                    for i in 0..g.height {
                        let dst = &mut ob[co * oh * ow + (i * s + di) * ow..];
                        for j in 0..g.width {
                            dst[j * s + dj] = row[i * g.width + j] + bias_v;
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![g.batch, g.out_channels, oh, ow], out))
}

pub fn conv_transpose2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    need: [bool; 3],
) -> Result<ConvGrads<T>> {
    let g = TransposedGeometry::new(input.shape(), weight.shape(), stride)?;
    let (s, hw) = (g.stride, g.height * g.width);
    let (oh, ow) = (g.height * s, g.width * s);
    let in_plane = g.in_channels * hw;
    let mut gtmp = vec![T::zero(); g.taps() * hw];
    let mut dx = need[0].then(|| vec![T::zero(); input.len()]);
    let mut dw = need[1].then(|| vec![T::zero(); weight.len()]);
    let mut db = need[2].then(|| vec![T::zero(); g.out_channels]);
    for b in 0..g.batch {
        let gb = &grad_out.data()[b * g.out_channels * oh * ow..(b + 1) * g.out_channels * oh * ow];
        for co in 0..g.out_channels {
            for di in 0..s {
                for dj in 0..s {
                    let r = (co * s + di) * s + dj;
                    let row = &mut gtmp[r * hw..(r + 1) * hw];
                    for i in 0..g.height {
                        let src = &gb[co * oh * ow + (i * s + di) * ow..];
                        for j in 0..g.width {
                            row[i * g.width + j] = src[j * s + dj];
                        }
                    }
                }
            }
            if let Some(db) = db.as_mut() {
                db[co] = db[co] + gb[co * oh * ow..(co + 1) * oh * ow].iter().copied().sum::<T>();
            }
        }
        let xb = &input.data()[b * in_plane..(b + 1) * in_plane];
        if let Some(dx) = dx.as_mut() {
            gemm(
                T::one(),
                MatRef::new(weight.data(), g.in_channels, g.taps()),
                MatRef::new(&gtmp, g.taps(), hw),
                T::zero(),
                MatMut::new(&mut dx[b * in_plane..(b + 1) * in_plane], g.in_channels, hw),
            );
        }
        if let Some(dw) = dw.as_mut() {
            gemm(
                T::one(),
                MatRef::new(xb, g.in_channels, hw),
                MatRef::new(&gtmp, g.taps(), hw).t(),
                T::one(),
                MatMut::new(dw, g.in_channels, g.taps()),
            );
        }
    }
    Ok(ConvGrads {
        input: dx.map(|d| Tensor::from_parts(input.shape().to_vec(), d)),
        weight: dw.map(|d| Tensor::from_parts(weight.shape().to_vec(), d)),
        bias: db.map(|d| Tensor::from_parts(vec![g.out_channels], d)),
    })
}
