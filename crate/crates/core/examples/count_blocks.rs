//! Block, parameter, FLOP and size accounting for the preset architectures.
//!
//! ```text
//! cargo run --example count_blocks -- [width]
//! ```

use cmi::inception::{arch_stats, cmi_preset, ArchConfig, NetworkPlan};

fn main() -> cmi::Result<()> {
    let width: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1.0);
    let archs = [cmi_preset(1)?, cmi_preset(2)?, cmi_preset(3)?, ArchConfig::full()];
    println!("{:<6} {:>4} {:>12} {:>14} {:>10}", "arch", "CBs", "params", "MACs/image", "MB");
    for arch in archs {
        let plan = NetworkPlan::build(&arch.with_width(width))?;
        let s = arch_stats(&plan);
        println!(
            "{:<6} {:>4} {:>12} {:>14} {:>10.2}",
            plan.config.label(true),
            s.cb_count,
            s.parameter_count,
            s.flops_per_image,
            s.serialized_bytes as f64 / 1e6
        );
    }
    Ok(())
}
