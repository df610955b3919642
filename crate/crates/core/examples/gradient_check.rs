//! Finite-difference checks of every op and of a width-1/8 CMI_1 network.
//!
//! ```text
//! cargo run --release --example gradient_check -- [blocks] [seed]
//! ```

use std::time::Instant;

use cmi::gradcheck::{network_check, op_suites};
use cmi::inception::cmi_preset;

fn main() -> cmi::Result<()> {
    let mut args = std::env::args().skip(1);
    let blocks = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let start = Instant::now();
    for suite in op_suites(20, seed)? {
        println!(
            "{:<24} {:>3} cases {:>6} elements  max rel. error {:.2e}  {}",
            suite.name,
            suite.cases,
            suite.checked,
            suite.max_rel_error,
            if suite.passed() { "ok" } else { "FAILED" }
        );
    }
    println!("op suites took {:.1}s", start.elapsed().as_secs_f64());

    let start = Instant::now();
    let arch = cmi_preset(1)?.with_width(0.125).with_resolution(64, 64);
    let check = network_check(&arch, blocks, true, seed)?;
    println!(
        "network blocks {:?}: {} elements ({} rechecked past a kink), max rel. error {:.2e} ({}), {:.1}s",
        check.blocks,
        check.result.checked,
        check.refined,
        check.result.max_rel_error,
        if check.result.passed() { "ok" } else { "FAILED" },
        start.elapsed().as_secs_f64()
    );
    println!("worst: {}", check.result.worst_case);
    Ok(())
}
