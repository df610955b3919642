//! A small resumable sweep over two architectures, then the result tables.
//!
//! ```text
//! cargo run --release --example sweep_report -- <out-dir>
//! ```

use std::path::PathBuf;

use cmi::sweep::{run_sweep, SweepConfig};
use cmi::train::report::{read_reports, render_tables};

fn main() -> cmi::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep_runs".into()));
    let config = SweepConfig::from_json(&format!(
        r#"{{
            "architectures": ["cmi1", "cmi2"],
            "num_models": 2,
            "width_multiplier": 0.125,
            "resolution": [64, 64],
            "train": {{"epochs": 15}},
            "dataset": {{"kind": "synthetic", "per_class": 15}},
            "output_dir": {:?}
        }}"#,
        dir.display().to_string()
    ))?;
    let summary = run_sweep(&config)?;
    println!("{} runs, {} reused", summary.ran.len(), summary.skipped.len());
    let (md, _, _) = render_tables(&read_reports(&dir)?)?;
    print!("{md}");
    Ok(())
}
