//! Binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! | bytes | field |
//! |-------|-------|
//! | 4 | magic `CMIW` |
//! | 2 | format version |
//! | 1 | element bytes (4) |
//! | 1 | flags: bit 0 full mode, bit 1 batch norm, bit 2 per-feature-map, bit 3 assignment seed present |
//! | 3+1 | k, m, n, reserved |
//! | 8 | width multiplier (f64) |
//! | 4+4 | input height, width |
//! | 4 | input channels |
//! | 4 | classes |
//! | 8 | initialization seed |
//! | 8 | assignment seed |
//! | 4 | assignment entry count |
//! | 8 | stored value count |
//! | 9 per entry | kind code (u8), ELU alpha (f64) |
//! | 4 per value | f32 values |
//!
//! Values are written block by block (weight, bias, scale, shift, running
//! mean, running variance, whichever exist), then the classifier weight and
//! bias.

use std::path::Path;

use cmi_tensor::{ChannelStats, Tensor};

use super::config::{ArchConfig, Mode};
use super::network::Network;
use super::plan::NetworkPlan;
use crate::activation::{ActivationAssignment, ActivationKind, Granularity};
use crate::block::{BatchNormParams, ConvBlock};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CMIW";
pub const FORMAT_VERSION: u16 = 1;
pub const PRELUDE_BYTES: usize = 64;
pub const ENTRY_BYTES: usize = 9;

pub fn header_bytes(entries: usize) -> usize {
    PRELUDE_BYTES + ENTRY_BYTES * entries
}

pub fn serialize_model(net: &Network<f32>) -> Vec<u8> {
    let c = net.config();
    let a = net.assignment();
    let count = net.stored_count();
    let mut out = Vec::with_capacity(header_bytes(a.len()) + 4 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(4);
    let mut flags = 0u8;
    if c.mode == Mode::Full {
        flags |= 1;
    }
    if c.batchnorm {
        flags |= 2;
    }
    if a.granularity == Granularity::PerFeatureMap {
        flags |= 4;
    }
    if a.seed.is_some() {
        flags |= 8;
    }
    out.push(flags);
    out.extend([c.k as u8, c.m as u8, c.n as u8, 0]);
    out.extend_from_slice(&c.width_multiplier.to_le_bytes());
    out.extend_from_slice(&(c.input_resolution.0 as u32).to_le_bytes());
    out.extend_from_slice(&(c.input_resolution.1 as u32).to_le_bytes());
    out.extend_from_slice(&(c.channels_in as u32).to_le_bytes());
    out.extend_from_slice(&(c.num_classes as u32).to_le_bytes());
    out.extend_from_slice(&net.init_seed().to_le_bytes());
    out.extend_from_slice(&a.seed.unwrap_or(0).to_le_bytes());
    out.extend_from_slice(&(a.len() as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    debug_assert_eq!(out.len(), PRELUDE_BYTES);
    for kind in &a.entries {
        let (code, alpha) = match *kind {
            ActivationKind::Relu => (0u8, 0.0),
            ActivationKind::Sigmoid => (1, 0.0),
            ActivationKind::Tanh => (2, 0.0),
            ActivationKind::Elu { alpha } => (3, alpha),
        };
        out.push(code);
        out.extend_from_slice(&alpha.to_le_bytes());
    }
    let mut put = |values: &[f32]| {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    for block in &net.blocks {
        put(block.weight.data());
        if let Some(b) = &block.bias {
            put(b.data());
        }
        if let Some(n) = &block.norm {
            put(n.gamma.data());
            put(n.beta.data());
            put(&n.running.mean);
            put(&n.running.var);
        }
    }
    put(net.dense_weight.data());
    put(net.dense_bias.data());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} while reading {what} ({} bytes total)",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.array(what)?) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let raw = self.take(4 * n, what)?;
        Ok(raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    fn tensor(&mut self, shape: &[usize], what: &str) -> Result<Tensor<f32>> {
        let n = shape.iter().product();
        Ok(Tensor::new(shape.to_vec(), self.f32s(n, what)?)?)
    }
}

pub fn deserialize_model(bytes: &[u8]) -> Result<Network<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes(r.array("version")?);
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let elem = r.u8("element width")?;
    if elem != 4 {
        return Err(Error::Checkpoint(format!("element width {elem} is not supported")));
    }
    let flags = r.u8("flags")?;
    let [k, m, n, _] = r.array::<4>("block counts")?;
    let width_multiplier = r.f64("width multiplier")?;
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    let channels_in = r.u32("input channels")?;
    let num_classes = r.u32("classes")?;
    let init_seed = r.u64("initialization seed")?;
    let seed = r.u64("assignment seed")?;
    let entries = r.u32("entry count")?;
    let count = r.u64("value count")? as usize;

    let config = ArchConfig {
        k: k as usize,
        m: m as usize,
        n: n as usize,
        mode: if flags & 1 != 0 { Mode::Full } else { Mode::Compressed },
        width_multiplier,
        input_resolution: (h, w),
        channels_in,
        num_classes,
        batchnorm: flags & 2 != 0,
    };
    let plan = NetworkPlan::build(&config)?;
    let mut kinds = Vec::with_capacity(entries.min(bytes.len()));
    for i in 0..entries {
        let code = r.u8("assignment entry")?;
        let alpha = r.f64("assignment entry")?;
        kinds.push(match code {
            0 => ActivationKind::Relu,
            1 => ActivationKind::Sigmoid,
            2 => ActivationKind::Tanh,
            3 if alpha > 0.0 && alpha.is_finite() => ActivationKind::Elu { alpha },
            _ => return Err(Error::Checkpoint(format!("assignment entry {i} is invalid (code {code})"))),
        });
    }
    let assignment = ActivationAssignment {
        granularity: if flags & 4 != 0 {
            Granularity::PerFeatureMap
        } else {
            Granularity::PerBlock
        },
        seed: (flags & 8 != 0).then_some(seed),
        entries: kinds,
    };
    assignment.block_slices(&plan.block_channels())?;

    let expected = super::stats::arch_stats(&plan).parameter_count;
    if count != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {count} values but the architecture needs {expected}"
        )));
    }
    let mut blocks = Vec::new();
    for node in plan.convs() {
        let co = node.out_channels;
        let weight = r.tensor(&[co, node.in_channels, node.kernel.0, node.kernel.1], "weights")?;
        let bias = if config.batchnorm { None } else { Some(r.tensor(&[co], "bias")?) };
        let norm = if config.batchnorm {
            Some(BatchNormParams {
                gamma: r.tensor(&[co], "scale")?,
                beta: r.tensor(&[co], "shift")?,
                running: ChannelStats {
                    mean: r.f32s(co, "running mean")?,
                    var: r.f32s(co, "running variance")?,
                },
            })
        } else {
            None
        };
        blocks.push(ConvBlock {
            weight,
            bias,
            norm,
            spec: node.spec,
        });
    }
    let dense_weight = r.tensor(&[plan.feature_channels, num_classes], "classifier weights")?;
    let dense_bias = r.tensor(&[num_classes], "classifier bias")?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Network::from_parts(plan, assignment, init_seed, blocks, dense_weight, dense_bias))
}

pub fn save_model(net: &Network<f32>, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_model(net)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize_model(&bytes)
}
