use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use seedbank::io::{commands, parse_config, to_toml, Emitter, Resolve, RunManifest};
use seedbank::io::{CriteriaConfig, DualConfig, ForwardConfig, FssConfig, RenewalConfig};
use seedbank::parallel::Workers;
use seedbank::Error;

#[derive(Debug, Parser)]
#[command(name = "seedbank-lab", version, about = "Batch experiments for spatial seed-bank diffusions and their duals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// TOML configuration of the run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the forward system and record macroscopic paths.
    Forward(Common),
    /// Simulate the coalescing dual and its joint-activity hazard.
    Dual(Common),
    /// Classify examples and return-probability integrals.
    Criteria(Common),
    /// Finite-systems ladder, with optional F g, trapping and clustering runs.
    Fss(Common),
    /// Intersection exponent of two independent renewal processes.
    Renewal(Common),
}

fn load<T: DeserializeOwned + Serialize + Resolve>(args: &Common) -> Result<(T, String), Error> {
    let mut cfg: T = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let resolved = to_toml(&cfg)?;
    Ok((cfg, resolved))
}

fn run(cli: Cli) -> Result<Emitter, Error> {
    macro_rules! drive {
        ($args:expr, $ty:ty, $name:literal, |$cfg:ident, $out:ident, $workers:ident| $body:expr) => {{
            let args = $args;
            let ($cfg, resolved) = load::<$ty>(&args)?;
            let $workers = args.threads.map(Workers::fixed).unwrap_or_default();
            let manifest = RunManifest::new($name, $cfg.seed(), &resolved);
            let mut $out = Emitter::new(&args.out, $cfg.output.clone())?;
            $body?;
            $out.run_files(&resolved, &manifest)?;
            Ok($out)
        }};
    }
    match cli.command {
        Command::Forward(a) => drive!(a, ForwardConfig, "forward", |c, o, w| commands::run_forward(&c, &mut o, &w)),
        Command::Dual(a) => drive!(a, DualConfig, "dual", |c, o, w| commands::run_dual(&c, &mut o, &w)),
        Command::Criteria(a) => drive!(a, CriteriaConfig, "criteria", |c, o, _w| commands::run_criteria(&c, &mut o)),
        Command::Fss(a) => drive!(a, FssConfig, "fss", |c, o, w| commands::run_fss(&c, &mut o, &w)),
        Command::Renewal(a) => drive!(a, RenewalConfig, "renewal", |c, o, w| commands::run_renewal(&c, &mut o, &w)),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            for path in out.written() {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
