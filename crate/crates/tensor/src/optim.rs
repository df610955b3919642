use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// One momentum-SGD update: `v ← momentum·v + grad; p ← p − lr·v`.
pub fn sgd_step<T: Element>(param: &mut [T], grad: &[T], velocity: &mut [T], lr: T, momentum: T) -> Result<()> {
    if grad.len() != param.len() || velocity.len() != param.len() {
        return Err(TensorError::ShapeMismatch {
            op: "sgd_step",
            expected: vec![param.len()],
            actual: vec![grad.len(), velocity.len()],
        });
    }
    for ((p, &g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum SGD over a fixed, ordered list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    lr: T,
    momentum: T,
    velocities: Vec<Vec<T>>,
}

impl<T: Element> Sgd<T> {
    /// `lr` must be finite and non-negative; `momentum` must lie in `[0, 1)`.
    pub fn new(lr: T, momentum: T) -> Result<Self> {
        if !lr.is_finite() || lr < T::zero() {
            return Err(TensorError::structural("sgd", format!("invalid learning rate {lr}")));
        }
        if !(momentum >= T::zero() && momentum < T::one()) {
            return Err(TensorError::structural("sgd", format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocities: Vec::new(),
        })
    }

    /// Applies one update using each tensor's gradient slot. Tensors without
    /// a gradient are left unchanged. The order of `params` must be stable
    /// across calls since velocities are matched by position.
    pub fn step<'a, I>(&mut self, params: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut Tensor<T>>,
    {
        for (i, param) in params.into_iter().enumerate() {
            if self.velocities.len() <= i {
                self.velocities.push(vec![T::zero(); param.numel()]);
            }
            let Some(grad) = param.take_grad() else { continue };
            sgd_step(param.data_mut(), &grad, &mut self.velocities[i], self.lr, self.momentum)?;
        }
        Ok(())
    }
}
