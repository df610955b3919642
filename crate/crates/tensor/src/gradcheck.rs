//! Central finite-difference verification of reverse-mode gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Perturbation is `rel_step · max(1, |x|)`.
    pub rel_step: f64,
    /// Relative errors are measured against `max(|analytic|, |numeric|, floor)`.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            rel_step: 1e-5,
            floor: 1e-3,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input index, element index, analytic, numeric)` of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }

    fn record(&mut self, input: usize, element: usize, analytic: f64, numeric: f64, floor: f64) {
        let err = relative_error(analytic, numeric, floor);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_rel_error {
            self.max_rel_error = err;
            self.worst = Some((input, element, analytic, numeric));
        }
    }
}

/// Compares the gradient of the scalar built by `loss` with respect to every
/// element of every input against central differences.
///
/// `loss` receives a fresh graph with `inputs` registered as trainable leaves
/// in order, and must be a deterministic function of them.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], opts: GradCheckOptions, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(inputs, &loss)?;
    let mut report = GradCheckReport::default();
    let mut probe = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        for e in 0..inputs[i].numel() {
            let numeric = central_difference(&mut probe, i, e, opts.rel_step, &loss)?;
            report.record(i, e, grad[e], numeric, opts.floor);
        }
    }
    Ok(report)
}

/// Runs one forward/backward pass and returns the gradient of each input.
pub fn analytic_gradients<F>(inputs: &[Tensor<f64>], loss: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.param(t.clone())).collect();
    let out = loss(&mut graph, &vars)?;
    graph.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| graph.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect())
}

/// Central difference of the loss along one element of `probe[input]`,
/// restoring the element afterwards.
pub fn central_difference<F>(probe: &mut [Tensor<f64>], input: usize, element: usize, rel_step: f64, loss: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let x = probe[input].data()[element];
    let h = rel_step * x.abs().max(1.0);
    probe[input].data_mut()[element] = x + h;
    let plus = evaluate(probe, loss)?;
    probe[input].data_mut()[element] = x - h;
    let minus = evaluate(probe, loss)?;
    probe[input].data_mut()[element] = x;
    Ok((plus - minus) / (2.0 * h))
}

fn evaluate<F>(inputs: &[Tensor<f64>], loss: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut graph = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| graph.constant(t.clone())).collect();
    let out = loss(&mut graph, &vars)?;
    Ok(graph.value(out).data()[0])
}
