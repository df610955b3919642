use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

impl<T: Element> Graph<T> {
    /// Concatenates `[N,Ci,H,W]` tensors along the channel axis, in argument order.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let Some(&first) = inputs.first() else {
            return Err(TensorError::structural("concat_channels", "no inputs"));
        };
        let [n, _, h, w] = self.value(first).dims4("concat_channels")?;
        let mut channels = 0;
        for &v in inputs {
            let [vn, vc, vh, vw] = self.value(v).dims4("concat_channels")?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    expected: vec![n, vc, h, w],
                    actual: vec![vn, vc, vh, vw],
                });
            }
            channels += vc;
        }
        let area = h * w;
        let mut out = Vec::with_capacity(n * channels * area);
        for b in 0..n {
            for &v in inputs {
                let block = self.value(v).shape()[1] * area;
                out.extend_from_slice(&self.value(v).data()[b * block..(b + 1) * block]);
            }
        }
        self.push(
            Tensor::new([n, channels, h, w], out)?,
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            inputs,
        )
    }
}
