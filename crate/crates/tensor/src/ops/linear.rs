use crate::element::{matmul, Element, Layout};
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

impl<T: Element> Graph<T> {
    /// Affine map `input [N,D] · weight [D,K] + bias [K]`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let [n, d] = self.value(input).dims2("dense")?;
        let [wd, k] = self.value(weight).dims2("dense")?;
        if wd != d {
            return Err(TensorError::ShapeMismatch {
                op: "dense",
                expected: vec![d, k],
                actual: vec![wd, k],
            });
        }
        let mut out = vec![T::zero(); n * k];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [k] {
                return Err(TensorError::ShapeMismatch {
                    op: "dense",
                    expected: vec![k],
                    actual: bv.shape().to_vec(),
                });
            }
            for row in out.chunks_mut(k) {
                row.copy_from_slice(bv.data());
            }
        }
        matmul(
            n,
            d,
            k,
            self.value(input).data(),
            Layout::Normal,
            self.value(weight).data(),
            Layout::Normal,
            &mut out,
            bias.is_some(),
        );
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        self.push(Tensor::new([n, k], out)?, Op::Dense { input, weight, bias }, &inputs)
    }
}
