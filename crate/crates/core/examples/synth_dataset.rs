//! Writes a synthetic 4-class image set with its manifest, then reloads it.
//!
//! ```text
//! cargo run --example synth_dataset -- <out-dir> [per-class]
//! ```

use std::path::PathBuf;

use cmi::data::{generate_synthetic, load_manifest, write_synthetic, ManifestOptions, SynthSpec};

fn main() -> cmi::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let per_class = args.next().and_then(|a| a.parse().ok()).unwrap_or(30);
    let spec = SynthSpec {
        per_class,
        ..SynthSpec::default()
    };
    let data = generate_synthetic(&spec)?;
    let manifest = write_synthetic(&data, &dir)?;
    let back = load_manifest(&manifest, &ManifestOptions::new(spec.resolution))?;
    println!("wrote {} images to {}", back.len(), manifest.display());
    for (name, n) in back.class_names.iter().zip(back.class_counts()) {
        println!("  {name}: {n}");
    }
    Ok(())
}
