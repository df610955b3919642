//! Activation layers whose neurons may each use a different function.
//!
//! A convolutional block owns one slot of an [`ActivationAssignment`]. In
//! per-block granularity the slot holds a single kind applied to every
//! feature map; in per-feature-map granularity it holds one kind per output
//! channel.

use std::fmt;
use std::str::FromStr;

use cmi_tensor::{Element, Graph, Var};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActivationKind {
    Relu,
    Sigmoid,
    Tanh,
    Elu { alpha: f64 },
}

impl ActivationKind {
    /// `{RELU, SIG, TANH, ELU}` with ELU's alpha at 1.
    pub const STANDARD_SET: [ActivationKind; 4] = [
        ActivationKind::Relu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Elu { alpha: 1.0 },
    ];

    pub const fn elu() -> Self {
        ActivationKind::Elu { alpha: 1.0 }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Relu => "RELU",
            ActivationKind::Sigmoid => "SIG",
            ActivationKind::Tanh => "TANH",
            ActivationKind::Elu { .. } => "ELU",
        }
    }

    /// Value and derivative at `x`. RELU's derivative at 0 is 0.
    #[inline]
    pub fn eval<T: Element>(self, x: T) -> (T, T) {
        let zero = T::zero();
        let one = T::one();
        match self {
            ActivationKind::Relu => {
                if x > zero {
                    (x, one)
                } else {
                    (zero, zero)
                }
            }
            ActivationKind::Sigmoid => {
                let s = if x >= zero {
                    one / (one + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (one + e)
                };
                (s, s * (one - s))
            }
            ActivationKind::Tanh => {
                let t = x.tanh();
                (t, one - t * t)
            }
            ActivationKind::Elu { alpha } => {
                if x > zero {
                    (x, one)
                } else {
                    let a = T::of(alpha);
                    let e = x.exp();
                    (a * (e - one), a * e)
                }
            }
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ActivationKind::Elu { alpha } if alpha != 1.0 => write!(f, "ELU({alpha})"),
            kind => f.write_str(kind.name()),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let kind = match upper.as_str() {
            "RELU" => ActivationKind::Relu,
            "SIG" | "SIGMOID" => ActivationKind::Sigmoid,
            "TANH" => ActivationKind::Tanh,
            "ELU" => ActivationKind::elu(),
            other => {
                let alpha = other
                    .strip_prefix("ELU(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .and_then(|a| a.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Assignment(format!("unknown activation {s:?}")))?;
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::Assignment(format!("ELU alpha must be positive, got {alpha}")));
                }
                ActivationKind::Elu { alpha }
            }
        };
        Ok(kind)
    }
}

impl Serialize for ActivationKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActivationKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated list such as `RELU,SIG,TANH,ELU`.
pub fn parse_activation_set(list: &str) -> Result<Vec<ActivationKind>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    #[default]
    PerBlock,
    PerFeatureMap,
}

/// Activation kinds for every convolutional block of a network, in block
/// index order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationAssignment {
    pub granularity: Granularity,
    /// Seed that produced the entries, when they were sampled.
    #[serde(default)]
    pub seed: Option<u64>,
    pub entries: Vec<ActivationKind>,
}

impl ActivationAssignment {
    pub fn per_block(entries: Vec<ActivationKind>) -> Self {
        ActivationAssignment {
            granularity: Granularity::PerBlock,
            seed: None,
            entries,
        }
    }

    /// The same kind on every one of `slots` entries.
    pub fn uniform(kind: ActivationKind, granularity: Granularity, slots: usize) -> Self {
        ActivationAssignment {
            granularity,
            seed: None,
            entries: vec![kind; slots],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Splits the entries into one slice per block, given each block's output
    /// channel count.
    pub fn block_slices(&self, channels_per_block: &[usize]) -> Result<Vec<&[ActivationKind]>> {
        let expected = match self.granularity {
            Granularity::PerBlock => channels_per_block.len(),
            Granularity::PerFeatureMap => channels_per_block.iter().sum(),
        };
        if self.entries.len() != expected {
            return Err(Error::Assignment(format!(
                "{} entries for a network needing {expected} ({:?})",
                self.entries.len(),
                self.granularity
            )));
        }
        Ok(match self.granularity {
            Granularity::PerBlock => self.entries.chunks(1).collect(),
            Granularity::PerFeatureMap => {
                let mut rest = self.entries.as_slice();
                channels_per_block
                    .iter()
                    .map(|&c| {
                        let (head, tail) = rest.split_at(c);
                        rest = tail;
                        head
                    })
                    .collect()
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// How many entries use each kind of `set`, in set order.
    pub fn histogram(&self, set: &[ActivationKind]) -> Vec<usize> {
        set.iter().map(|k| self.entries.iter().filter(|e| *e == k).count()).collect()
    }
}

/// Applies one activation function to every element of `x`.
pub fn apply_activation<T: Element>(g: &mut Graph<T>, kind: ActivationKind, x: Var) -> Result<Var> {
    multi_activation_layer(g, &[kind], x)
}

/// Activation layer over `[N, C, H, W]` feature maps: a single kind is applied
/// uniformly, `C` kinds are applied channel by channel.
pub fn multi_activation_layer<T: Element>(g: &mut Graph<T>, kinds: &[ActivationKind], x: Var) -> Result<Var> {
    let value = g.value(x);
    let (out, deriv): (Vec<T>, Vec<T>) = match kinds {
        [] => return Err(Error::Assignment("empty activation slot".into())),
        [kind] => value.data().iter().map(|&v| kind.eval(v)).unzip(),
        _ => {
            let [_, c, h, w] = value.dims4("activation_layer")?;
            if kinds.len() != c {
                return Err(Error::Assignment(format!(
                    "slot holds {} kinds for {c} feature maps",
                    kinds.len()
                )));
            }
            let area = h * w;
            value
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| kinds[(i / area) % c].eval(v))
                .unzip()
        }
    };
    Ok(g.pointwise(x, out, deriv)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for kind in ActivationKind::STANDARD_SET.into_iter().chain([ActivationKind::Elu { alpha: 0.5 }]) {
            assert_eq!(kind.to_string().parse::<ActivationKind>().unwrap(), kind);
        }
        assert_eq!("sigmoid".parse::<ActivationKind>().unwrap(), ActivationKind::Sigmoid);
        assert!("SOFTPLUS".parse::<ActivationKind>().is_err());
        assert!("ELU(-1)".parse::<ActivationKind>().is_err());
    }

    #[test]
    fn fixed_points() {
        assert_eq!(ActivationKind::Sigmoid.eval(0.0f64).0, 0.5);
        assert_eq!(ActivationKind::Tanh.eval(0.0f64).0, 0.0);
        assert_eq!(ActivationKind::Relu.eval(-3.0f64).0, 0.0);
        assert_eq!(ActivationKind::elu().eval(0.0f64).0, 0.0);
        assert_eq!(ActivationKind::Relu.eval(0.0f64).1, 0.0);
    }

    #[test]
    fn elu_negative_branch() {
        let (y, _) = ActivationKind::elu().eval(-1.0f64);
        assert!((y - (-1f64).exp_m1()).abs() < 1e-15);
        assert!((y + 0.6321).abs() < 1e-4);
    }

    #[test]
    fn per_feature_map_slices_follow_channel_counts() {
        let kinds = vec![ActivationKind::Relu, ActivationKind::Tanh, ActivationKind::Sigmoid];
        let a = ActivationAssignment {
            granularity: Granularity::PerFeatureMap,
            seed: None,
            entries: kinds.clone(),
        };
        let slices = a.block_slices(&[1, 2]).unwrap();
        assert_eq!(slices, vec![&kinds[..1], &kinds[1..]]);
        assert!(a.block_slices(&[2, 2]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let a = ActivationAssignment {
            granularity: Granularity::PerBlock,
            seed: Some(17),
            entries: vec![ActivationKind::Relu, ActivationKind::Elu { alpha: 0.25 }, ActivationKind::Sigmoid],
        };
        let text = a.to_json().unwrap();
        assert!(text.contains("\"per-block\""));
        assert!(text.contains("\"SIG\""));
        assert_eq!(ActivationAssignment::from_json(&text).unwrap(), a);
    }
}
