//! 2-d cross-correlation through patch expansion (im2col) and GEMM.

use crate::element::{matmul, Element, Layout};
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

/// Stride and zero padding of a convolution, as (rows, columns).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2dSpec {
    pub fn new(stride: (usize, usize), padding: (usize, usize)) -> Self {
        Conv2dSpec { stride, padding }
    }

    /// Stride 1 with `(k - 1) / 2` padding on each axis, preserving extents
    /// for odd kernels.
    pub fn same(kernel: (usize, usize)) -> Self {
        Conv2dSpec {
            stride: (1, 1),
            padding: ((kernel.0 - 1) / 2, (kernel.1 - 1) / 2),
        }
    }
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Conv2dSpec::new((1, 1), (0, 0))
    }
}

/// `floor((input + 2 pad - kernel) / stride) + 1`, or `None` when the padded
/// input is narrower than the kernel or the stride is zero.
pub fn output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// 1×1, unit stride, no padding: the input plane already is the patch matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.sh == 1 && self.sw == 1 && self.ph == 0 && self.pw == 0
    }

    fn im2col<T: Element>(&self, image: &[T], col: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        let positions = oh * ow;
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let dst = &mut col[row * positions..(row + 1) * positions];
                    for y in 0..oh {
                        let iy = (y * self.sh + ki) as isize - self.ph as isize;
                        let out_row = &mut dst[y * ow..(y + 1) * ow];
                        if iy < 0 || iy >= self.h as isize {
                            out_row.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (x, v) in out_row.iter_mut().enumerate() {
                            let ix = (x * self.sw + kj) as isize - self.pw as isize;
                            *v = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im<T: Element>(&self, col: &[T], image: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        let positions = oh * ow;
        let mut row = 0;
        for c in 0..self.cin {
            let plane = &mut image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let src = &col[row * positions..(row + 1) * positions];
                    for y in 0..oh {
                        let iy = (y * self.sh + ki) as isize - self.ph as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for x in 0..ow {
                            let ix = (x * self.sw + kj) as isize - self.pw as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += src[y * ow + x];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn geometry(input: &[usize], weight: &[usize], spec: Conv2dSpec) -> Result<ConvGeometry> {
    let (&[n, cin, h, w], &[cout, wcin, kh, kw]) = (input, weight) else {
        return Err(TensorError::structural(
            "conv2d",
            format!("expected [N,C,H,W] input and [Cout,Cin,kH,kW] weights, got {input:?} and {weight:?}"),
        ));
    };
    if cin != wcin {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            expected: vec![cout, cin, kh, kw],
            actual: weight.to_vec(),
        });
    }
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    if kh == 0 || kw == 0 || sh == 0 || sw == 0 {
        return Err(TensorError::structural(
            "conv2d",
            "kernel extents and strides must be at least 1",
        ));
    }
    let oh = output_extent(h, kh, sh, ph);
    let ow = output_extent(w, kw, sw, pw);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(TensorError::NonPositiveExtent {
            op: "conv2d",
            detail: format!("input {h}x{w}, kernel {kh}x{kw}, padding {ph}x{pw}"),
        });
    };
    Ok(ConvGeometry {
        n,
        cin,
        h,
        w,
        cout,
        kh,
        kw,
        sh,
        sw,
        ph,
        pw,
        oh,
        ow,
    })
}

pub(crate) fn forward<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    spec: Conv2dSpec,
) -> Result<(Tensor<T>, ConvGeometry)> {
    let g = geometry(input.shape(), weight.shape(), spec)?;
    if let Some(b) = bias {
        if b.shape() != [g.cout] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![g.cout],
                actual: b.shape().to_vec(),
            });
        }
    }
    let (k, p) = (g.patch_len(), g.positions());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * p;
    let mut out = vec![T::zero(); g.n * out_len];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..g.n {
        let image = &input.data()[b * in_len..(b + 1) * in_len];
        let dst = &mut out[b * out_len..(b + 1) * out_len];
        if let Some(bias) = bias {
            for (plane, &bv) in dst.chunks_mut(p).zip(bias.data()) {
                plane.iter_mut().for_each(|v| *v = bv);
            }
        }
        let patches = if g.is_pointwise() {
            image
        } else {
            g.im2col(image, &mut col);
            &col
        };
        matmul(g.cout, k, p, weight.data(), Layout::Normal, patches, Layout::Normal, dst, bias.is_some());
    }
    Ok((Tensor::new([g.n, g.cout, g.oh, g.ow], out)?, g))
}

pub(crate) fn backward_input<T: Element>(g: &ConvGeometry, weight: &[T], gout: &[T]) -> Vec<T> {
    let (k, p) = (g.patch_len(), g.positions());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * p;
    let mut gin = vec![T::zero(); g.n * in_len];
    let mut col = vec![T::zero(); k * p];
    for b in 0..g.n {
        let go = &gout[b * out_len..(b + 1) * out_len];
        let dst = &mut gin[b * in_len..(b + 1) * in_len];
        if g.is_pointwise() {
            matmul(k, g.cout, p, weight, Layout::Transposed, go, Layout::Normal, dst, false);
        } else {
            matmul(k, g.cout, p, weight, Layout::Transposed, go, Layout::Normal, &mut col, false);
            g.col2im(&col, dst);
        }
    }
    gin
}

pub(crate) fn backward_weight<T: Element>(g: &ConvGeometry, input: &[T], gout: &[T]) -> Vec<T> {
    let (k, p) = (g.patch_len(), g.positions());
    let in_len = g.cin * g.h * g.w;
    let out_len = g.cout * p;
    let mut gw = vec![T::zero(); g.cout * k];
    let mut col = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); k * p] };
    for b in 0..g.n {
        let image = &input[b * in_len..(b + 1) * in_len];
        let patches = if g.is_pointwise() {
            image
        } else {
            g.im2col(image, &mut col);
            &col
        };
        let go = &gout[b * out_len..(b + 1) * out_len];
        matmul(g.cout, p, k, go, Layout::Normal, patches, Layout::Transposed, &mut gw, b > 0);
    }
    gw
}

pub(crate) fn backward_bias<T: Element>(g: &ConvGeometry, gout: &[T]) -> Vec<T> {
    let p = g.positions();
    let mut gb = vec![T::zero(); g.cout];
    for image in gout.chunks(g.cout * p) {
        for (acc, plane) in gb.iter_mut().zip(image.chunks(p)) {
            *acc += plane.iter().copied().sum::<T>();
        }
    }
    gb
}

impl<T: Element> Graph<T> {
    /// Cross-correlates `input [N,Cin,H,W]` with `weight [Cout,Cin,kH,kW]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let (out, geom) = forward(
            self.value(input),
            self.value(weight),
            bias.map(|b| self.value(b)),
            spec,
        )?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            &inputs,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn asymmetric_kernels_keep_extent_with_same_padding() {
        let x = Tensor::<f64>::from_fn([1, 2, 5, 6], |i| i as f64 * 0.1);
        for kernel in [(1, 7), (7, 1), (1, 3), (3, 1)] {
            let w = Tensor::<f64>::full([3, 2, kernel.0, kernel.1], 0.5);
            let (out, _) = forward(&x, &w, None, Conv2dSpec::same(kernel)).unwrap();
            assert_eq!(out.shape(), &[1, 3, 5, 6]);
        }
    }

    #[test]
    fn channel_disagreement_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 2, 4, 4]);
        let w = Tensor::<f32>::zeros([1, 3, 3, 3]);
        assert!(matches!(
            forward(&x, &w, None, Conv2dSpec::default()),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn kernel_larger_than_padded_input_is_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let w = Tensor::<f32>::zeros([1, 1, 3, 3]);
        assert!(matches!(
            forward(&x, &w, None, Conv2dSpec::default()),
            Err(TensorError::NonPositiveExtent { .. })
        ));
        assert!(forward(&x, &w, None, Conv2dSpec::new((1, 1), (1, 1))).is_ok());
    }
}
