//! Elaboration of an [`ArchConfig`] into the Inception-V4 layer tree.
//!
//! Channel table (reference widths before scaling; `a×b/2` is a stride-2
//! convolution, branches are listed in concatenation order):
//!
//! | segment     | branches |
//! |-------------|----------|
//! | stem        | 3×3/2 32, 3×3 32, 3×3 64; [maxpool/2 \| 3×3/2 96]; [1×1 64, 3×3 96 \| 1×1 64, 7×1 64, 1×7 64, 3×3 96]; [3×3/2 192 \| maxpool/2] |
//! | Inception-A | [avgpool, 1×1 96] \| [1×1 96] \| [1×1 64, 3×3 96] \| [1×1 64, 3×3 96, 3×3 96] |
//! | Reduction-A | [maxpool/2] \| [3×3/2 384] \| [1×1 192, 3×3 224, 3×3/2 256] |
//! | Inception-B | [avgpool, 1×1 128] \| [1×1 384] \| [1×1 192, 1×7 224, 7×1 256] \| [1×1 192, 1×7 192, 7×1 224, 1×7 224, 7×1 256] |
//! | Reduction-B | [maxpool/2] \| [1×1 192, 3×3/2 192] \| [1×1 256, 1×7 256, 7×1 320, 3×3/2 320] |
//! | Inception-C | [avgpool, 1×1 256] \| [1×1 256] \| [1×1 384, [1×3 256 \| 3×1 256]] \| [1×1 384, 1×3 448, 3×1 512, [1×3 256 \| 3×1 256]] |
//!
//! Every convolution and pool uses "same" padding (`kernel / 2`), so a
//! stride-2 stage maps an extent `e` to `ceil(e / 2)`. Pools are 3×3; average
//! pools have stride 1. Convolutional blocks are numbered depth-first in the
//! order above.

use std::fmt;

use cmi_tensor::{output_extent, Conv2dSpec, Pool2dSpec};
use serde::Serialize;

use super::config::{ensure_valid, ArchConfig};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SegmentKind {
    Stem,
    InceptionA,
    ReductionA,
    InceptionB,
    ReductionB,
    InceptionC,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 6] = [
        SegmentKind::Stem,
        SegmentKind::InceptionA,
        SegmentKind::ReductionA,
        SegmentKind::InceptionB,
        SegmentKind::ReductionB,
        SegmentKind::InceptionC,
    ];

    /// Convolutional blocks in one copy of the segment.
    pub fn cb_count(self) -> usize {
        match self {
            SegmentKind::Stem => 11,
            SegmentKind::InceptionA => 7,
            SegmentKind::ReductionA => 4,
            SegmentKind::InceptionB => 10,
            SegmentKind::ReductionB => 6,
            SegmentKind::InceptionC => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentKind::Stem => "stem",
            SegmentKind::InceptionA => "inception_a",
            SegmentKind::ReductionA => "reduction_a",
            SegmentKind::InceptionB => "inception_b",
            SegmentKind::ReductionB => "reduction_b",
            SegmentKind::InceptionC => "inception_c",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One convolutional block of the plan.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvNode {
    pub cb_index: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub spec: Conv2dSpec,
    pub in_hw: (usize, usize),
    pub out_hw: (usize, usize),
}

impl ConvNode {
    /// Multiply-accumulates for one image.
    pub fn macs(&self) -> u64 {
        (self.out_hw.0 * self.out_hw.1 * self.out_channels * self.in_channels * self.kernel.0 * self.kernel.1) as u64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvNode),
    Pool {
        kind: PoolKind,
        spec: Pool2dSpec,
        channels: usize,
        out_hw: (usize, usize),
    },
    /// Parallel branches over the same input, concatenated along channels in
    /// order.
    Branches(Vec<Vec<Layer>>),
}

impl Layer {
    /// Visits every convolution in block index order.
    pub fn for_each_conv<'a>(&'a self, f: &mut impl FnMut(&'a ConvNode)) {
        match self {
            Layer::Conv(c) => f(c),
            Layer::Pool { .. } => {}
            Layer::Branches(branches) => branches.iter().flatten().for_each(|l| l.for_each_conv(f)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Position among segments of the same kind.
    pub copy: usize,
    pub layers: Vec<Layer>,
    pub out_channels: usize,
    pub out_hw: (usize, usize),
}

impl Segment {
    pub fn convs(&self) -> Vec<&ConvNode> {
        let mut out = Vec::new();
        for layer in &self.layers {
            layer.for_each_conv(&mut |c| out.push(c));
        }
        out
    }
}

/// The fully elaborated layer graph of one architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkPlan {
    pub config: ArchConfig,
    pub segments: Vec<Segment>,
    /// Width of the pooled feature vector fed to the classifier.
    pub feature_channels: usize,
    pub dropout: f64,
}

pub const HEAD_DROPOUT: f64 = 0.2;

impl NetworkPlan {
    pub fn build(config: &ArchConfig) -> Result<Self> {
        ensure_valid(config)?;
        let (h, w) = config.input_resolution;
        let mut b = Builder {
            config,
            next_cb: 0,
        };
        let mut cursor = Cursor {
            channels: config.channels_in,
            hw: (h, w),
        };
        let mut segments = Vec::new();
        let mut push = |kind: SegmentKind, copy: usize, cursor: &mut Cursor, b: &mut Builder| {
            let layers = b.segment(kind, cursor);
            segments.push(Segment {
                kind,
                copy,
                layers,
                out_channels: cursor.channels,
                out_hw: cursor.hw,
            });
        };
        push(SegmentKind::Stem, 0, &mut cursor, &mut b);
        for i in 0..config.k {
            push(SegmentKind::InceptionA, i, &mut cursor, &mut b);
        }
        push(SegmentKind::ReductionA, 0, &mut cursor, &mut b);
        for i in 0..config.m {
            push(SegmentKind::InceptionB, i, &mut cursor, &mut b);
        }
        push(SegmentKind::ReductionB, 0, &mut cursor, &mut b);
        for i in 0..config.n {
            push(SegmentKind::InceptionC, i, &mut cursor, &mut b);
        }
        debug_assert_eq!(b.next_cb, config.cb_count());
        Ok(NetworkPlan {
            config: config.clone(),
            segments,
            feature_channels: cursor.channels,
            dropout: HEAD_DROPOUT,
        })
    }

    /// All convolutional blocks in index order.
    pub fn convs(&self) -> Vec<&ConvNode> {
        self.segments.iter().flat_map(Segment::convs).collect()
    }

    pub fn cb_count(&self) -> usize {
        self.convs().len()
    }

    /// Output channels of each block, in index order.
    pub fn block_channels(&self) -> Vec<usize> {
        self.convs().iter().map(|c| c.out_channels).collect()
    }

    /// `(segment kind, block count)` summed over copies, in network order.
    pub fn per_segment_cb_counts(&self) -> Vec<(SegmentKind, usize)> {
        SegmentKind::ALL
            .iter()
            .map(|&kind| {
                let count = self.segments.iter().filter(|s| s.kind == kind).map(|s| s.convs().len()).sum();
                (kind, count)
            })
            .collect()
    }

    /// Index of the segment holding block `cb`.
    pub fn segment_of(&self, cb: usize) -> Option<usize> {
        let mut start = 0;
        for (i, s) in self.segments.iter().enumerate() {
            let count = s.convs().len();
            if cb < start + count {
                return Some(i);
            }
            start += count;
        }
        None
    }
}

#[derive(Clone, Copy, Debug)]
struct Cursor {
    channels: usize,
    hw: (usize, usize),
}

struct Builder<'a> {
    config: &'a ArchConfig,
    next_cb: usize,
}

/// One step of a branch description.
#[derive(Clone, Copy)]
enum Step {
    /// `(kh, kw, stride, reference channels)`
    Conv(usize, usize, usize, usize),
    MaxPool2,
    AvgPool1,
}

use Step::{AvgPool1, Conv, MaxPool2};

impl Builder<'_> {
    fn conv(&mut self, cursor: &mut Cursor, kh: usize, kw: usize, stride: usize, reference: usize) -> Layer {
        let out_channels = self.config.scale_channels(reference);
        let spec = Conv2dSpec::new((stride, stride), (kh / 2, kw / 2));
        let out_hw = extent(cursor.hw, (kh, kw), stride, (kh / 2, kw / 2));
        let node = ConvNode {
            cb_index: self.next_cb,
            in_channels: cursor.channels,
            out_channels,
            kernel: (kh, kw),
            spec,
            in_hw: cursor.hw,
            out_hw,
        };
        self.next_cb += 1;
        *cursor = Cursor {
            channels: out_channels,
            hw: out_hw,
        };
        Layer::Conv(node)
    }

    fn step(&mut self, cursor: &mut Cursor, step: Step) -> Layer {
        match step {
            Conv(kh, kw, s, c) => self.conv(cursor, kh, kw, s, c),
            MaxPool2 | AvgPool1 => {
                let (kind, stride) = if matches!(step, MaxPool2) {
                    (PoolKind::Max, 2)
                } else {
                    (PoolKind::Avg, 1)
                };
                let spec = Pool2dSpec::new((3, 3), (stride, stride)).with_padding((1, 1));
                cursor.hw = extent(cursor.hw, (3, 3), stride, (1, 1));
                Layer::Pool {
                    kind,
                    spec,
                    channels: cursor.channels,
                    out_hw: cursor.hw,
                }
            }
        }
    }

    fn chain(&mut self, cursor: &mut Cursor, steps: &[Step]) -> Vec<Layer> {
        steps.iter().map(|&s| self.step(cursor, s)).collect()
    }

    /// Parallel branches from `cursor`, leaving it at the concatenated output.
    fn fork(&mut self, cursor: &mut Cursor, branches: &[&[Step]]) -> Layer {
        let start = *cursor;
        let mut channels = 0;
        let mut hw = start.hw;
        let built = branches
            .iter()
            .map(|steps| {
                let mut c = start;
                let layers = self.chain(&mut c, steps);
                channels += c.channels;
                hw = c.hw;
                layers
            })
            .collect();
        *cursor = Cursor { channels, hw };
        Layer::Branches(built)
    }

    /// Branches whose last member itself forks into a 1×3 and a 3×1 head.
    fn fork_c(&mut self, cursor: &mut Cursor, plain: &[&[Step]], split: &[&[Step]]) -> Layer {
        let start = *cursor;
        let mut channels = 0;
        let mut built = Vec::new();
        for steps in plain {
            let mut c = start;
            built.push(self.chain(&mut c, steps));
            channels += c.channels;
        }
        for steps in split {
            let mut c = start;
            let mut layers = self.chain(&mut c, steps);
            layers.push(self.fork(&mut c, &[&[Conv(1, 3, 1, 256)], &[Conv(3, 1, 1, 256)]]));
            built.push(layers);
            channels += c.channels;
        }
        *cursor = Cursor {
            channels,
            hw: start.hw,
        };
        Layer::Branches(built)
    }

    fn segment(&mut self, kind: SegmentKind, cursor: &mut Cursor) -> Vec<Layer> {
        match kind {
            SegmentKind::Stem => {
                let mut layers = self.chain(cursor, &[Conv(3, 3, 2, 32), Conv(3, 3, 1, 32), Conv(3, 3, 1, 64)]);
                layers.push(self.fork(cursor, &[&[MaxPool2], &[Conv(3, 3, 2, 96)]]));
                layers.push(self.fork(
                    cursor,
                    &[
                        &[Conv(1, 1, 1, 64), Conv(3, 3, 1, 96)],
                        &[Conv(1, 1, 1, 64), Conv(7, 1, 1, 64), Conv(1, 7, 1, 64), Conv(3, 3, 1, 96)],
                    ],
                ));
                layers.push(self.fork(cursor, &[&[Conv(3, 3, 2, 192)], &[MaxPool2]]));
                layers
            }
            SegmentKind::InceptionA => vec![self.fork(
                cursor,
                &[
                    &[AvgPool1, Conv(1, 1, 1, 96)],
                    &[Conv(1, 1, 1, 96)],
                    &[Conv(1, 1, 1, 64), Conv(3, 3, 1, 96)],
                    &[Conv(1, 1, 1, 64), Conv(3, 3, 1, 96), Conv(3, 3, 1, 96)],
                ],
            )],
            SegmentKind::ReductionA => vec![self.fork(
                cursor,
                &[
                    &[MaxPool2],
                    &[Conv(3, 3, 2, 384)],
                    &[Conv(1, 1, 1, 192), Conv(3, 3, 1, 224), Conv(3, 3, 2, 256)],
                ],
            )],
            SegmentKind::InceptionB => vec![self.fork(
                cursor,
                &[
                    &[AvgPool1, Conv(1, 1, 1, 128)],
                    &[Conv(1, 1, 1, 384)],
                    &[Conv(1, 1, 1, 192), Conv(1, 7, 1, 224), Conv(7, 1, 1, 256)],
                    &[
                        Conv(1, 1, 1, 192),
                        Conv(1, 7, 1, 192),
                        Conv(7, 1, 1, 224),
                        Conv(1, 7, 1, 224),
                        Conv(7, 1, 1, 256),
                    ],
                ],
            )],
            SegmentKind::ReductionB => vec![self.fork(
                cursor,
                &[
                    &[MaxPool2],
                    &[Conv(1, 1, 1, 192), Conv(3, 3, 2, 192)],
                    &[Conv(1, 1, 1, 256), Conv(1, 7, 1, 256), Conv(7, 1, 1, 320), Conv(3, 3, 2, 320)],
                ],
            )],
            SegmentKind::InceptionC => vec![self.fork_c(
                cursor,
                &[&[AvgPool1, Conv(1, 1, 1, 256)], &[Conv(1, 1, 1, 256)]],
                &[
                    &[Conv(1, 1, 1, 384)],
                    &[Conv(1, 1, 1, 384), Conv(1, 3, 1, 448), Conv(3, 1, 1, 512)],
                ],
            )],
        }
    }
}

fn extent(hw: (usize, usize), kernel: (usize, usize), stride: usize, pad: (usize, usize)) -> (usize, usize) {
    let h = output_extent(hw.0, kernel.0, stride, pad.0).expect("same padding never empties a plane");
    let w = output_extent(hw.1, kernel.1, stride, pad.1).expect("same padding never empties a plane");
    (h, w)
}
