use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paip::harness::commands::{oracle_command, CommandError};
use paip::harness::{check_summary, evaluate_command, load_config, run_command, write_run, OracleOptions};
use paip::par::{with_workers, Exec};

#[derive(Parser)]
#[command(name = "paip", version, about = "Perception-action loop agents: runs, value dumps and oracle checks")]
struct Cli {
    /// Run the oracle suite with default settings (same as `paip oracle`).
    #[arg(long)]
    check: bool,

    /// Worker threads for episodes and enumeration.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured episodes and write a JSON-lines log plus CSV summary.
    Run {
        #[command(flatten)]
        common: Common,
        /// Log path; the summary goes next to it with a .csv extension.
        /// Without it the log is printed.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the action value of every sequence after a history.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// History literal "s0 a1 s1 a2 s2 ...".
        #[arg(long)]
        history: String,
    },
    /// Check the main computations against brute-force oracles.
    #[command(alias = "check")]
    Oracle(OracleArgs),
    /// Validate a config, or re-derive a log's CSV summary and compare.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Default)]
struct OracleArgs {
    /// Use this config's prior for the enumeration checks.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated suites (exact_grid, polya_closed_form, capacity_grid,
    /// information); all by default.
    #[arg(long)]
    suites: Option<String>,
    /// Longest history, in sensor values, for the enumeration checks.
    #[arg(long, default_value_t = 4)]
    max_t: usize,
    /// Negative control: corrupt the prior seen by the main implementation.
    #[arg(long)]
    corrupt_prior: bool,
}

fn load(common: &Common) -> Result<paip::harness::ExperimentConfig, CommandError> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    Ok(cfg)
}

fn oracle(args: OracleArgs) -> Result<(), CommandError> {
    let cfg = args.config.as_ref().map(load_config).transpose()?;
    let opts = OracleOptions {
        suites: args
            .suites
            .map(|s| s.split(',').map(str::trim).filter(|n| !n.is_empty()).map(String::from).collect()),
        max_t: args.max_t,
        corrupt_prior: args.corrupt_prior,
        exec: Exec::default(),
    };
    let report = oracle_command(cfg.as_ref(), &opts)?;
    println!("{report}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CommandError> {
    let command = match (cli.command, cli.check) {
        (Some(c), _) => c,
        (None, true) => Command::Oracle(OracleArgs {
            max_t: 4,
            ..OracleArgs::default()
        }),
        (None, false) => {
            eprintln!("no command given; see `paip --help`");
            return Err(CommandError::Mismatch("no command".into()));
        }
    };
    match command {
        Command::Run { common, out } => {
            let cfg = load(&common)?;
            log::info!("config digest {} seed {}", cfg.digest, cfg.run.seed);
            let output = run_command(&cfg, Exec::default())?;
            match out {
                Some(path) => write_run(&path, &output)?,
                None => print!("{}", output.log),
            }
        }
        Command::Evaluate { common, history } => {
            let cfg = load(&common)?;
            print!("{}", evaluate_command(&cfg, &history)?);
        }
        Command::Oracle(args) => oracle(args)?,
        Command::Validate { config, log } => {
            if config.is_none() && log.is_none() {
                return Err(CommandError::Mismatch("validate needs --config or --log".into()));
            }
            if let Some(path) = config {
                let cfg = load_config(&path)?;
                println!("{}: ok (digest {})", path.display(), cfg.digest);
            }
            if let Some(path) = log {
                check_summary(&path)?;
                println!("{}: summary matches", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PAIP_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    let workers = cli.workers;
    match with_workers(workers, || dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
