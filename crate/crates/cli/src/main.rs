use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unirag::commands::{self, OUTPUT_DIR_ENV};
use unirag::config::{RunConfig, Suite};
use unirag::error::{CliError, EXIT_USAGE};

#[derive(Parser)]
#[command(
    name = "unirag",
    version,
    about = "Unified vs split retrieval stack benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus and write it as JSON lines.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run benchmark suites and write reports.
    #[command(after_help = format!(
        "The output directory can be overridden with {OUTPUT_DIR_ENV}.\n\
         Exit status: 0 on success, 1 on usage/config/I-O errors, 2 when an invariant fails."
    ))]
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run only these suites (repeatable); defaults to the config's list.
        #[arg(long = "suite", value_enum)]
        suites: Vec<Suite>,
    },
    /// Check filter soundness and recall of the unified store on a corpus file.
    Verify {
        #[arg(long)]
        corpus: PathBuf,
        /// Search beam width; defaults to the index default.
        #[arg(long)]
        ef: Option<usize>,
        #[arg(long, default_value_t = 200)]
        queries: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the default configuration as TOML.
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = RunConfig::load_or_default(config.as_deref())?;
            let summary = commands::generate(&cfg, &out)?;
            println!("wrote {}", out.display());
            print!("{summary}");
        }
        Command::Bench { config, suites } => {
            let mut cfg = RunConfig::load_or_default(config.as_deref())?;
            if !suites.is_empty() {
                cfg.suites = suites.into_iter().collect();
            }
            let report = commands::run_bench(&cfg)?;
            let dir = commands::output_dir(&cfg);
            for path in commands::write_reports(&report, &cfg, &dir)? {
                eprintln!("wrote {}", path.display());
            }
            print!("{}", report.to_markdown());
            let failures = report.invariant_failures();
            if !failures.is_empty() {
                return Err(CliError::Invariant(failures));
            }
        }
        Command::Verify {
            corpus,
            ef,
            queries,
            seed,
        } => {
            let report = commands::verify(&corpus, ef, queries, seed)?;
            println!("{report}");
            if !report.passed() {
                return Err(CliError::Verification(format!(
                    "{} violations, mean recall {:.4} (floor {})",
                    report.violations,
                    report.mean_recall,
                    commands::RECALL_FLOOR
                )));
            }
        }
        Command::Config => print!("{}", RunConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
