//! The Inception-V4 family: configuration, plan elaboration, initialized
//! networks, accounting and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod network;
pub mod plan;
pub mod stats;

pub use checkpoint::{deserialize_model, load_model, save_model, serialize_model};
pub use config::{cb_count, cmi_preset, ensure_valid, preset, validate_config, ArchConfig, Mode, Violation};
pub use network::{relu_assignment, Forward, Network, Phase};
pub use plan::{ConvNode, Layer, NetworkPlan, SegmentKind};
pub use stats::{arch_stats, summarize, ArchStats, ArchSummary};
