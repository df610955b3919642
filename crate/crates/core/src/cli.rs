//! The `cmi` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::activation::parse_activation_set;
use crate::data::{generate_synthetic, write_synthetic, SynthSpec};
use crate::error::{Error, Result};
use crate::gradcheck::{network_check, op_suites};
use crate::inception::{cmi_preset, preset, summarize, validate_config, ArchConfig, Mode, NetworkPlan};
use crate::sampler::{sample_assignments, write_assignments, SamplePlan};
use crate::sweep::{run_sweep, SweepConfig};
use crate::train::{read_reports, render_tables};

#[derive(Debug, Parser)]
#[command(name = "cmi", version, about = "Compressed multi-function Inception-V4 toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the architecture summary as JSON.
    Count(ArchArgs),
    /// Sample random activation assignments, one JSON file per model.
    Sample(SampleArgs),
    /// Write a synthetic PNG dataset and its manifest.
    Synth(SynthArgs),
    /// Run a sweep described by a JSON config.
    Train(TrainArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
    /// Render best-model and average tables from a report directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Compressed,
    Full,
}

#[derive(Debug, Args)]
pub struct ArchArgs {
    /// `cmi1`, `cmi2`, `cmi3` or `mi`.
    #[arg(long, conflicts_with_all = ["k", "m", "n"])]
    pub preset: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum, default_value = "compressed")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1.0)]
    pub width: f64,
    /// `HxW` or a single extent.
    #[arg(long, default_value = "299x299", value_parser = parse_resolution)]
    pub resolution: (usize, usize),
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long)]
    pub no_batchnorm: bool,
}

impl ArchArgs {
    fn config(&self) -> Result<ArchConfig> {
        let base = match (&self.preset, self.k, self.m, self.n) {
            (Some(p), ..) => preset(p)?,
            (None, Some(k), Some(m), Some(n)) => ArchConfig {
                k,
                m,
                n,
                mode: match self.mode {
                    ModeArg::Compressed => Mode::Compressed,
                    ModeArg::Full => Mode::Full,
                },
                ..ArchConfig::default()
            },
            (None, None, None, None) => cmi_preset(1)?,
            _ => return Err(Error::Invalid("give --preset or all of --k, --m and --n".into())),
        };
        Ok(base
            .with_width(self.width)
            .with_resolution(self.resolution.0, self.resolution.1)
            .with_classes(self.classes)
            .with_batchnorm(!self.no_batchnorm))
    }
}

pub fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|e| (e, e)),
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub arch: ArchArgs,
    #[arg(long, default_value_t = 10)]
    pub num: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated activation kinds.
    #[arg(long, default_value = "RELU,SIG,TANH,ELU")]
    pub set: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 30)]
    pub per_class: usize,
    #[arg(long, default_value = "64x64", value_parser = parse_resolution)]
    pub resolution: (usize, usize),
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Sweep configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's worker count.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random shapes per op.
    #[arg(long, default_value_t = 20)]
    pub cases: usize,
    /// Randomly chosen network blocks to check; 0 skips the network check.
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of run reports.
    #[arg(long)]
    pub dir: PathBuf,
    /// Where to write `tables.md`, `best.csv` and `mean.csv`; defaults to `--dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

fn io(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Count(args) => {
            let config = args.config()?;
            let violations = validate_config(&config);
            if !violations.is_empty() {
                for v in violations {
                    writeln!(err, "{v}").map_err(io)?;
                }
                return Ok(2);
            }
            let plan = NetworkPlan::build(&config)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&summarize(&plan))?).map_err(io)?;
            Ok(0)
        }
        Command::Sample(args) => {
            let arch = args.arch.config()?;
            let plan = SamplePlan::new(arch.clone(), args.num, args.seed).with_set(parse_activation_set(&args.set)?);
            let assignments = sample_assignments(&plan)?;
            for path in write_assignments(&args.out, &arch, &assignments)? {
                writeln!(out, "{}", path.display()).map_err(io)?;
            }
            Ok(0)
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                num_classes: args.classes,
                per_class: args.per_class,
                resolution: args.resolution,
                channels: 1,
                noise: args.noise,
                seed: args.seed,
            };
            let data = generate_synthetic(&spec)?;
            let manifest = write_synthetic(&data, &args.out)?;
            writeln!(out, "{}", manifest.display()).map_err(io)?;
            Ok(0)
        }
        Command::Train(args) => {
            let mut config = SweepConfig::load(&args.config)?;
            if let Some(w) = args.workers {
                config.workers = w;
            }
            let summary = run_sweep(&config)?;
            writeln!(
                out,
                "{} runs written, {} already present in {}",
                summary.ran.len(),
                summary.skipped.len(),
                config.output_dir.display()
            )
            .map_err(io)?;
            Ok(0)
        }
        Command::Gradcheck(args) => {
            let mut ok = true;
            for s in op_suites(args.cases, args.seed)? {
                writeln!(
                    out,
                    "{:<24} {:>4} cases  max rel. error {:.3e} (tol {:.0e})  {}",
                    s.name,
                    s.cases,
                    s.max_rel_error,
                    s.tolerance,
                    if s.passed() { "ok" } else { "FAILED" }
                )
                .map_err(io)?;
                ok &= s.passed();
            }
            if args.blocks > 0 {
                let arch = cmi_preset(1)?.with_width(0.125).with_resolution(64, 64);
                let check = network_check(&arch, args.blocks, true, args.seed)?;
                writeln!(
                    out,
                    "{:<24} blocks {:?}  {} rechecked past a kink  max rel. error {:.3e} (tol {:.0e})  {}",
                    "network (CMI_1, w=1/8)",
                    check.blocks,
                    check.refined,
                    check.result.max_rel_error,
                    check.result.tolerance,
                    if check.result.passed() { "ok" } else { "FAILED" }
                )
                .map_err(io)?;
                ok &= check.result.passed();
            }
            Ok(if ok { 0 } else { 1 })
        }
        Command::Report(args) => {
            let reports = read_reports(&args.dir)?;
            if reports.is_empty() {
                return Err(Error::Invalid(format!("no reports in {}", args.dir.display())));
            }
            let (md, best, mean) = render_tables(&reports)?;
            let dest = args.out.unwrap_or(args.dir);
            std::fs::create_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
            for (name, text) in [("tables.md", &md), ("best.csv", &best), ("mean.csv", &mean)] {
                let path = dest.join(name);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            write!(out, "{md}").map_err(io)?;
            Ok(0)
        }
    }
}
