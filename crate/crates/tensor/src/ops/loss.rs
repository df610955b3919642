use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

impl<T: Element> Graph<T> {
    /// Mean over the batch of `−log softmax(logits)[label]`, computed with
    /// max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let [n, k] = self.value(logits).dims2("softmax_cross_entropy")?;
        if labels.len() != n {
            return Err(TensorError::ShapeMismatch {
                op: "softmax_cross_entropy",
                expected: vec![n],
                actual: vec![labels.len()],
            });
        }
        if n == 0 {
            return Err(TensorError::structural("softmax_cross_entropy", "empty batch"));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= k) {
            return Err(TensorError::LabelOutOfRange { label, classes: k });
        }
        let mut probs = Vec::with_capacity(n * k);
        let mut total = T::zero();
        for (row, &label) in self.value(logits).data().chunks(k).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
            let denom: T = exps.iter().copied().sum();
            total += denom.ln() - (row[label] - max);
            probs.extend(exps.iter().map(|&e| e / denom));
        }
        let loss = total / T::of(n as f64);
        self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                labels: labels.to_vec(),
            },
            &[logits],
        )
    }
}
