//! Draws per-block activation assignments and prints their histograms.
//!
//! ```text
//! cargo run --example sample_assignments -- [models] [seed]
//! ```

use cmi::activation::ActivationKind;
use cmi::inception::cmi_preset;
use cmi::sampler::{sample_assignments, SamplePlan};

fn main() -> cmi::Result<()> {
    let mut args = std::env::args().skip(1);
    let models = args.next().and_then(|a| a.parse().ok()).unwrap_or(5);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let set = ActivationKind::STANDARD_SET;
    let plan = SamplePlan::new(cmi_preset(1)?, models, seed);
    for (j, a) in sample_assignments(&plan)?.iter().enumerate() {
        let counts: Vec<String> = set.iter().zip(a.histogram(&set)).map(|(k, n)| format!("{k} {n}")).collect();
        let head: Vec<String> = a.entries.iter().take(8).map(|k| k.to_string()).collect();
        println!("model {j:02} seed {:>20}: {}  first {}", a.seed.unwrap_or(0), counts.join(", "), head.join(" "));
    }
    Ok(())
}
