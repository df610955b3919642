use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::graph::{Graph, Op, Var};
use crate::tensor::Tensor;

impl<T: Element> Graph<T> {
    /// Records an elementwise map whose output values and local derivatives
    /// were computed by the caller. Backward multiplies by `derivative`.
    pub fn pointwise(&mut self, input: Var, output: Vec<T>, derivative: Vec<T>) -> Result<Var> {
        let numel = self.value(input).numel();
        if output.len() != numel || derivative.len() != numel {
            return Err(TensorError::structural(
                "pointwise",
                format!(
                    "input has {numel} elements, got {} outputs and {} derivatives",
                    output.len(),
                    derivative.len()
                ),
            ));
        }
        let shape = self.value(input).shape().to_vec();
        self.push(
            Tensor::new(shape, output)?,
            Op::Pointwise {
                input,
                deriv: derivative,
            },
            &[input],
        )
    }

    /// Rectified linear unit with derivative 0 at the origin.
    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        let out = x
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let shape = x.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Relu { input }, &[input])
    }

    pub fn mul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul",
                expected: a.shape().to_vec(),
                actual: b.shape().to_vec(),
            });
        }
        let out = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        let shape = a.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Mul { lhs, rhs }, &[lhs, rhs])
    }

    pub fn add(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                expected: a.shape().to_vec(),
                actual: b.shape().to_vec(),
            });
        }
        let out = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
        let shape = a.shape().to_vec();
        self.push(Tensor::new(shape, out)?, Op::Add { lhs, rhs }, &[lhs, rhs])
    }

    /// Sum of all elements as a scalar.
    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total = self.value(input).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum { input }, &[input])
    }
}
