use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use monompc_cli::{cmd_compare, cmd_simulate, cmd_verify, write_atomic, Failure, EXIT_FAILURE, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "monompc", version, about = "Closed-loop MPC experiments built on monotone operator splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the config's closed-loop driver and write the trajectory CSV and a summary.
    Simulate { config: PathBuf },
    /// Run two drivers on the same config and report their largest deviation.
    Compare {
        config: PathBuf,
        scheme_a: String,
        scheme_b: String,
    },
    /// Run a property suite: operators, ocp, flows or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for the JSON report (defaults to $MONOMPC_OUTPUT_DIR, else stdout only).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Swap in a plant that is not monotone. Negative control for the probes.
        #[arg(long, hide = true)]
        inject_nonmonotone_plant: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, Failure> {
    match cmd {
        Command::Simulate { config } => {
            for path in cmd_simulate(&config)? {
                println!("wrote {}", path.display());
            }
            Ok(0)
        }
        Command::Compare {
            config,
            scheme_a,
            scheme_b,
        } => {
            let (rep, path) = cmd_compare(&config, &scheme_a, &scheme_b)?;
            println!(
                "{} vs {}: max_state_dev {:e}, max_control_dev {:e} (tolerance {:e})",
                rep.scheme_a, rep.scheme_b, rep.max_state_dev, rep.max_control_dev, rep.tolerance
            );
            println!("wrote {}", path.display());
            if rep.pass {
                Ok(0)
            } else {
                eprintln!("error: deviation {:e} exceeds tolerance {:e}", rep.max_dev, rep.tolerance);
                Ok(EXIT_FAILURE)
            }
        }
        Command::Verify {
            suite,
            seed,
            output_dir,
            inject_nonmonotone_plant,
        } => {
            let (rep, json) = cmd_verify(&suite, seed, inject_nonmonotone_plant)?;
            print!("{json}");
            let dir = output_dir.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from));
            if let Some(dir) = dir {
                write_atomic(&dir.join(format!("verify_{suite}_seed{seed}.json")), json.as_bytes())?;
            }
            for p in rep.properties.iter().filter(|p| !p.pass) {
                eprintln!("FAIL {} (worst {:e})", p.name, p.worst);
            }
            Ok(if rep.pass { 0 } else { EXIT_FAILURE })
        }
    }
}
