use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relay_game_cli::{run, Command, ExperimentSpec, Override};

/// Equilibrium solvers and forwarding experiments for the two-forwarder
/// relay selection game. Results are written as CSV with a manifest.
#[derive(Parser, Debug)]
#[command(name = "relay-game", version)]
struct Args {
    #[command(subcommand)]
    command: Cmd,

    /// Scenario file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Single simulator seed, replacing the seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// `key=value` with a dotted scenario key or an alias (theta, eta, a,
    /// nu1, tau, family, variant, gamma, lambda, seeds). Repeatable.
    #[arg(long = "override", short = 'o', global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Completely observable equilibrium of the configured family.
    SolveCo,
    /// Partially observable equilibrium of the configured variant.
    SolvePo,
    /// Cooperative optimum for every weight.
    SolveCoop,
    /// Costs of the pair of lone-forwarder thresholds.
    EvalSimple,
    /// All equilibrium points and the cooperative frontier per separation.
    OnehopSweep,
    /// Multi-hop forwarding simulation over the rate by seed grid.
    Netsim,
    /// Solve and certify every completely observable family.
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::SolveCo => Command::SolveCo,
            Cmd::SolvePo => Command::SolvePo,
            Cmd::SolveCoop => Command::SolveCoop,
            Cmd::EvalSimple => Command::EvalSimple,
            Cmd::OnehopSweep => Command::OnehopSweep,
            Cmd::Netsim => Command::Netsim,
            Cmd::Verify => Command::Verify,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let overrides: Result<Vec<Override>, _> = args.overrides.iter().map(|s| s.parse()).collect();
    let overrides = match overrides {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let spec = ExperimentSpec {
        command: args.command.into(),
        scenario: args.scenario,
        overrides,
        seed: args.seed,
        out: args.out,
    };
    match run(&spec) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            if report.is_partial() {
                eprintln!("finished with {} recorded failure(s); see manifest.json", report.issues.len());
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
