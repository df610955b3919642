//! Max, average and global-average pooling.
//!
//! Padded positions never take part in a window: max pooling ignores them and
//! average pooling divides by the number of in-bounds elements.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::ops::conv::output_extent;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pool2dSpec {
    pub window: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Pool2dSpec {
    pub fn new(window: (usize, usize), stride: (usize, usize)) -> Self {
        Pool2dSpec {
            window,
            stride,
            padding: (0, 0),
        }
    }

    pub fn with_padding(mut self, padding: (usize, usize)) -> Self {
        self.padding = padding;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PoolGeometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    spec: Pool2dSpec,
    oh: usize,
    ow: usize,
}

impl PoolGeometry {
    /// In-bounds row and column ranges of the window for output `(y, x)`.
    fn window(&self, y: usize, x: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let Pool2dSpec {
            window: (kh, kw),
            stride: (sh, sw),
            padding: (ph, pw),
        } = self.spec;
        let y0 = (y * sh) as isize - ph as isize;
        let x0 = (x * sw) as isize - pw as isize;
        let rows = y0.max(0) as usize..((y0 + kh as isize).min(self.h as isize)) as usize;
        let cols = x0.max(0) as usize..((x0 + kw as isize).min(self.w as isize)) as usize;
        (rows, cols)
    }
}

fn geometry(op: &'static str, shape: &[usize], spec: Pool2dSpec) -> Result<PoolGeometry> {
    let &[n, c, h, w] = shape else {
        return Err(TensorError::structural(op, format!("expected [N,C,H,W], got {shape:?}")));
    };
    let (kh, kw) = spec.window;
    let (ph, pw) = spec.padding;
    if kh == 0 || kw == 0 || spec.stride.0 == 0 || spec.stride.1 == 0 {
        return Err(TensorError::structural(op, "window and stride must be at least 1"));
    }
    if 2 * ph > kh || 2 * pw > kw {
        return Err(TensorError::structural(
            op,
            format!("padding {ph}x{pw} exceeds half the {kh}x{kw} window"),
        ));
    }
    let oh = output_extent(h, kh, spec.stride.0, ph);
    let ow = output_extent(w, kw, spec.stride.1, pw);
    let (Some(oh), Some(ow)) = (oh, ow) else {
        return Err(TensorError::NonPositiveExtent {
            op,
            detail: format!("input {h}x{w}, window {kh}x{kw}, padding {ph}x{pw}"),
        });
    };
    Ok(PoolGeometry {
        n,
        c,
        h,
        w,
        spec,
        oh,
        ow,
    })
}

/// Per-window maximum; the flat input index of the winner is recorded for
/// backward. Ties go to the first element in row-major scan order.
pub(crate) fn max_forward<T: Element>(input: &Tensor<T>, spec: Pool2dSpec) -> Result<(Tensor<T>, Vec<usize>)> {
    let g = geometry("maxpool2d", input.shape(), spec)?;
    let plane = g.h * g.w;
    let mut out = Vec::with_capacity(g.n * g.c * g.oh * g.ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    for (p, src) in input.data().chunks(plane).enumerate() {
        for y in 0..g.oh {
            for x in 0..g.ow {
                let (rows, cols) = g.window(y, x);
                let mut best = rows.start * g.w + cols.start;
                for r in rows {
                    for c in cols.clone() {
                        let i = r * g.w + c;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                }
                out.push(src[best]);
                argmax.push(p * plane + best);
            }
        }
    }
    Ok((Tensor::new([g.n, g.c, g.oh, g.ow], out)?, argmax))
}

pub(crate) fn avg_forward<T: Element>(input: &Tensor<T>, spec: Pool2dSpec) -> Result<(Tensor<T>, PoolGeometry)> {
    let g = geometry("avgpool2d", input.shape(), spec)?;
    let plane = g.h * g.w;
    let mut out = Vec::with_capacity(g.n * g.c * g.oh * g.ow);
    for src in input.data().chunks(plane) {
        for y in 0..g.oh {
            for x in 0..g.ow {
                let (rows, cols) = g.window(y, x);
                let count = rows.len() * cols.len();
                let mut acc = T::zero();
                for r in rows {
                    for c in cols.clone() {
                        acc += src[r * g.w + c];
                    }
                }
                out.push(acc / T::of(count as f64));
            }
        }
    }
    Ok((Tensor::new([g.n, g.c, g.oh, g.ow], out)?, g))
}

pub(crate) fn avg_backward<T: Element>(g: &PoolGeometry, gout: &[T]) -> Vec<T> {
    let plane = g.h * g.w;
    let mut gin = vec![T::zero(); g.n * g.c * plane];
    for (dst, go) in gin.chunks_mut(plane).zip(gout.chunks(g.oh * g.ow)) {
        for y in 0..g.oh {
            for x in 0..g.ow {
                let (rows, cols) = g.window(y, x);
                let share = go[y * g.ow + x] / T::of((rows.len() * cols.len()) as f64);
                for r in rows {
                    for c in cols.clone() {
                        dst[r * g.w + c] += share;
                    }
                }
            }
        }
    }
    gin
}

impl<T: Element> Graph<T> {
    pub fn max_pool2d(&mut self, input: Var, spec: Pool2dSpec) -> Result<Var> {
        let (out, argmax) = max_forward(self.value(input), spec)?;
        self.push(out, Op::MaxPool { input, argmax }, &[input])
    }

    pub fn avg_pool2d(&mut self, input: Var, spec: Pool2dSpec) -> Result<Var> {
        let (out, geom) = avg_forward(self.value(input), spec)?;
        self.push(out, Op::AvgPool { input, geom }, &[input])
    }

    /// Mean over the spatial axes: `[N,C,H,W] -> [N,C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4("global_avgpool")?;
        if h * w == 0 {
            return Err(TensorError::NonPositiveExtent {
                op: "global_avgpool",
                detail: format!("empty {h}x{w} plane"),
            });
        }
        let scale = T::one() / T::of((h * w) as f64);
        let out: Vec<T> = self
            .value(input)
            .data()
            .chunks(h * w)
            .map(|plane| plane.iter().copied().sum::<T>() * scale)
            .collect();
        self.push(Tensor::new([n, c], out)?, Op::GlobalAvgPool { input }, &[input])
    }
}
