//! Finite-difference verification of every differentiable op and of whole
//! networks, at 64-bit precision.

use cmi_tensor::gradcheck::{check_gradients, relative_error, GradCheckOptions, GradCheckReport};
use cmi_tensor::{ChannelStats, Conv2dSpec, Graph, NormMode, Pool2dSpec, Tensor, Var};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::activation::{multi_activation_layer, ActivationKind};
use crate::block::{ActivationRoute, BlockVars, ConvBlock};
use crate::error::Result;
use crate::inception::{ArchConfig, Network, Phase};
use crate::sampler::sample_one;

pub const OP_TOLERANCE: f64 = 1e-5;
pub const NETWORK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Description of the case holding the largest error.
    pub worst_case: String,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

struct Suite {
    result: SuiteResult,
}

impl Suite {
    fn new(name: &str, tolerance: f64) -> Self {
        Suite {
            result: SuiteResult {
                name: name.to_string(),
                cases: 0,
                checked: 0,
                max_rel_error: 0.0,
                tolerance,
                worst_case: String::new(),
            },
        }
    }

    fn add(&mut self, case: String, report: GradCheckReport) {
        let r = &mut self.result;
        r.cases += 1;
        r.checked += report.checked;
        if report.max_rel_error > r.max_rel_error || r.worst_case.is_empty() {
            r.max_rel_error = r.max_rel_error.max(report.max_rel_error);
            r.worst_case = case;
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, rng)
}

/// Values in `±[0.1, 1]`, keeping away from the kinks at zero.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1..1.0);
            if rng.gen() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// `sum(y ⊙ r)` for a fixed random `r`.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> cmi_tensor::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.value(y).shape().to_vec();
    let r = g.constant(rand_tensor(&mut rng, &shape));
    let prod = g.mul(y, r)?;
    g.sum(prod)
}

fn opts() -> GradCheckOptions {
    GradCheckOptions::default()
}

/// Runs every op suite on `cases` random shapes each.
pub fn op_suites(cases: usize, seed: u64) -> Result<Vec<SuiteResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut s = Suite::new("conv2d", OP_TOLERANCE);
    for _ in 0..cases {
        let (n, cin, cout) = (rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..4));
        let (kh, kw) = (rng.gen_range(1..5), rng.gen_range(1..5));
        let (sh, sw) = (rng.gen_range(1..3), rng.gen_range(1..3));
        let (ph, pw) = (rng.gen_range(0..kh), rng.gen_range(0..kw));
        let (h, w) = (rng.gen_range(kh.max(2)..8), rng.gen_range(kw.max(2)..8));
        let spec = Conv2dSpec::new((sh, sw), (ph, pw));
        let inputs = vec![
            rand_tensor(&mut rng, &[n, cin, h, w]),
            rand_tensor(&mut rng, &[cout, cin, kh, kw]),
            rand_tensor(&mut rng, &[cout]),
        ];
        let ws = rng.gen();
        let report = check_gradients(&inputs, opts(), |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), spec)?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("x[{n},{cin},{h},{w}] k{kh}x{kw} s{sh}x{sw} p{ph}x{pw}"), report);
    }
    out.push(s.result);

    for (name, max) in [("maxpool2d", true), ("avgpool2d", false)] {
        let mut s = Suite::new(name, OP_TOLERANCE);
        for _ in 0..cases {
            let (kh, kw) = (rng.gen_range(1..4), rng.gen_range(1..4));
            let (sh, sw) = (rng.gen_range(1..3), rng.gen_range(1..3));
            let (ph, pw) = (rng.gen_range(0..=kh / 2), rng.gen_range(0..=kw / 2));
            let shape = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(kh..7), rng.gen_range(kw..7)];
            let spec = Pool2dSpec::new((kh, kw), (sh, sw)).with_padding((ph, pw));
            let ws = rng.gen();
            let report = check_gradients(&[rand_tensor(&mut rng, &shape)], opts(), |g, v| {
                let y = if max { g.max_pool2d(v[0], spec)? } else { g.avg_pool2d(v[0], spec)? };
                weighted_sum(g, y, ws)
            })?;
            s.add(format!("{shape:?} {spec:?}"), report);
        }
        out.push(s.result);
    }

    let mut s = Suite::new("global_avg_pool", OP_TOLERANCE);
    for _ in 0..cases {
        let shape = [rng.gen_range(1..3), rng.gen_range(1..4), rng.gen_range(1..6), rng.gen_range(1..6)];
        let ws = rng.gen();
        let report = check_gradients(&[rand_tensor(&mut rng, &shape)], opts(), |g, v| {
            let y = g.global_avg_pool(v[0])?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{shape:?}"), report);
    }
    out.push(s.result);

    let mut s = Suite::new("concat_channels", OP_TOLERANCE);
    for _ in 0..cases {
        let (n, h, w) = (rng.gen_range(1..3), rng.gen_range(1..5), rng.gen_range(1..5));
        let parts: Vec<_> = (0..rng.gen_range(1..4))
            .map(|_| {
                let c = rng.gen_range(1..4);
                rand_tensor(&mut rng, &[n, c, h, w])
            })
            .collect();
        let ws = rng.gen();
        let report = check_gradients(&parts, opts(), |g, v| {
            let y = g.concat_channels(v)?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{} parts", parts.len()), report);
    }
    out.push(s.result);

    let mut s = Suite::new("dense", OP_TOLERANCE);
    for _ in 0..cases {
        let (n, d, k) = (rng.gen_range(1..5), rng.gen_range(1..8), rng.gen_range(1..5));
        let inputs = vec![rand_tensor(&mut rng, &[n, d]), rand_tensor(&mut rng, &[d, k]), rand_tensor(&mut rng, &[k])];
        let ws = rng.gen();
        let report = check_gradients(&inputs, opts(), |g, v| {
            let y = g.dense(v[0], v[1], Some(v[2]))?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{n}x{d} -> {k}"), report);
    }
    out.push(s.result);

    let mut s = Suite::new("batchnorm", OP_TOLERANCE);
    for i in 0..cases {
        let shape = [rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(1..4), rng.gen_range(2..5)];
        let c = shape[1];
        let running = ChannelStats {
            mean: (0..c).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            var: (0..c).map(|_| rng.gen_range(0.5..2.0)).collect(),
        };
        let mode = if i % 4 == 3 { NormMode::Eval } else { NormMode::Train };
        let inputs = vec![
            rand_tensor(&mut rng, &shape),
            Tensor::uniform([c], 0.5, 1.5, &mut rng),
            rand_tensor(&mut rng, &[c]),
        ];
        let ws = rng.gen();
        let report = check_gradients(&inputs, opts(), |g, v| {
            let (y, _) = g.batch_norm(v[0], v[1], v[2], &running, mode, 1e-3)?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{shape:?} {mode:?}"), report);
    }
    out.push(s.result);

    let mut s = Suite::new("softmax_cross_entropy", OP_TOLERANCE);
    for _ in 0..cases {
        let (n, k) = (rng.gen_range(1..6), rng.gen_range(2..7));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let logits = Tensor::uniform([n, k], -3.0, 3.0, &mut rng);
        let report = check_gradients(&[logits], opts(), |g, v| g.softmax_cross_entropy(v[0], &labels))?;
        s.add(format!("{n}x{k}"), report);
    }
    out.push(s.result);

    let mut s = Suite::new("activation_layer", OP_TOLERANCE);
    for i in 0..cases {
        let shape = [rng.gen_range(1..3), rng.gen_range(1..5), rng.gen_range(1..4), rng.gen_range(1..4)];
        let kinds: Vec<ActivationKind> = if i % 2 == 0 {
            vec![ActivationKind::STANDARD_SET[i / 2 % 4]]
        } else {
            (0..shape[1]).map(|_| ActivationKind::STANDARD_SET[rng.gen_range(0..4)]).collect()
        };
        let ws = rng.gen();
        let report = check_gradients(&[off_zero(&mut rng, &shape)], opts(), |g, v| {
            let y = multi_activation_layer(g, &kinds, v[0]).map_err(tensor_error)?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{shape:?} {kinds:?}"), report);
    }
    out.push(s.result);

    let mut s = Suite::new("convolutional_block", OP_TOLERANCE);
    for _ in 0..cases {
        let (cin, cout) = (rng.gen_range(1..4), rng.gen_range(1..4));
        let kernel = [(1, 1), (3, 3), (1, 3), (3, 1)][rng.gen_range(0..4)];
        let shape = [2, cin, rng.gen_range(3..6), rng.gen_range(3..6)];
        let block = ConvBlock::<f64>::init(&mut rng, cin, cout, kernel, Conv2dSpec::same(kernel), true);
        let kind = [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::elu()][rng.gen_range(0..3)];
        let norm = block.norm.clone().expect("batch norm enabled");
        let inputs = vec![rand_tensor(&mut rng, &shape), block.weight.clone(), norm.gamma, norm.beta];
        let ws = rng.gen();
        let report = check_gradients(&inputs, opts(), |g, v| {
            let vars = BlockVars {
                weight: v[1],
                bias: None,
                gamma: Some(v[2]),
                beta: Some(v[3]),
            };
            let (y, _) = block
                .forward(g, &vars, ActivationRoute::Assigned(&[kind]), v[0], NormMode::Train)
                .map_err(tensor_error)?;
            weighted_sum(g, y, ws)
        })?;
        s.add(format!("{shape:?} k{kernel:?} {kind}"), report);
    }
    out.push(s.result);

    Ok(out)
}

fn tensor_error(e: crate::error::Error) -> cmi_tensor::TensorError {
    match e {
        crate::error::Error::Tensor(t) => t,
        other => cmi_tensor::TensorError::Structural {
            op: "activation_layer",
            reason: other.to_string(),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkCheck {
    pub blocks: Vec<usize>,
    pub result: SuiteResult,
    /// Elements whose first step straddled a kink (a rectifier or max-pool
    /// switch) and were rechecked with a smaller step.
    pub refined: usize,
}

/// Smallest step tried when a difference straddles a kink.
pub const MIN_NETWORK_STEP: f64 = 1e-7;

/// Checks the gradient of the training loss of a 2-image batch with respect
/// to every parameter of `num_blocks` randomly chosen blocks (and the
/// classifier when `include_head`), in the training phase with a fixed
/// dropout mask.
///
/// A whole network is piecewise smooth, so a finite-difference step can
/// cross a kink. An element that misses the tolerance is rechecked with
/// steps ten times smaller, down to [`MIN_NETWORK_STEP`]; its recorded
/// error is the one at the first step that passes, or at the smallest step.
/// A wrong gradient fails at every step, since small steps converge to the
/// true derivative.
pub fn network_check(config: &ArchConfig, num_blocks: usize, include_head: bool, seed: u64) -> Result<NetworkCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignment = sample_one(config.cb_count(), &ActivationKind::STANDARD_SET, rng.gen())?;
    let mut net = Network::<f64>::build(config, assignment, rng.gen())?;
    let (h, w) = config.input_resolution;
    let images = Tensor::<f64>::uniform([2, config.channels_in, h, w], 0.0, 1.0, &mut rng);
    let labels: Vec<usize> = (0..2).map(|_| rng.gen_range(0..config.num_classes)).collect();
    let dropout_seed = rng.gen();
    let mut blocks = sample(&mut rng, net.blocks.len(), num_blocks.min(net.blocks.len())).into_vec();
    blocks.sort_unstable();

    let loss = |net: &Network<f64>| -> Result<(f64, Graph<f64>, crate::inception::Forward<f64>, Var)> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let fwd = net.forward(&mut g, x, Phase::Train { dropout_seed })?;
        let l = g.softmax_cross_entropy(fwd.logits, &labels)?;
        Ok((g.value(l).data()[0], g, fwd, l))
    };
    let (_, mut g, fwd, l) = loss(&net)?;
    g.backward(l)?;

    let mut starts = Vec::with_capacity(net.blocks.len() + 1);
    let mut next = 0;
    for b in &net.blocks {
        starts.push(next);
        next += b.trainable().count();
    }
    starts.push(next);
    let mut params: Vec<usize> = blocks.iter().flat_map(|&b| starts[b]..starts[b + 1]).collect();
    if include_head {
        params.extend([next, next + 1]);
    }

    let mut suite = Suite::new("network", NETWORK_TOLERANCE);
    let opts = opts();
    let mut refined = 0;
    for p in params {
        let analytic = g.grad(fwd.params[p]).expect("parameter reached").to_vec();
        let mut report = GradCheckReport::default();
        for (e, &a) in analytic.iter().enumerate() {
            let x = net.parameters().nth(p).expect("index in range").data()[e];
            let mut rel_step = opts.rel_step;
            let (numeric, err) = loop {
                let step = rel_step * x.abs().max(1.0);
                set_param(&mut net, p, e, x + step);
                let plus = loss(&net)?.0;
                set_param(&mut net, p, e, x - step);
                let minus = loss(&net)?.0;
                set_param(&mut net, p, e, x);
                let numeric = (plus - minus) / (2.0 * step);
                let err = relative_error(a, numeric, opts.floor);
                if err <= NETWORK_TOLERANCE || rel_step / 10.0 < MIN_NETWORK_STEP * (1.0 - 1e-9) {
                    break (numeric, err);
                }
                if rel_step == opts.rel_step {
                    refined += 1;
                }
                rel_step /= 10.0;
            };
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p, e, a, numeric));
            }
        }
        suite.add(format!("parameter {p} {:?}", report.worst), report);
    }
    Ok(NetworkCheck {
        blocks,
        result: suite.result,
        refined,
    })
}

fn set_param(net: &mut Network<f64>, p: usize, e: usize, value: f64) {
    net.parameters_mut().nth(p).expect("index in range").data_mut()[e] = value;
}
