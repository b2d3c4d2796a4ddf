use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dualrail::analysis::PostselectionPolicy;
use dualrail_cli::config::{schema_json, PRESETS};
use dualrail_cli::{report_records, run_config, Analysis, CliError, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(
    name = "dualrail",
    version,
    about = "Dual-rail erasure qubit simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Lift the desk-scale limits on depth and shot counts.
        #[arg(long)]
        allow_large: bool,
    },
    /// Analyze an existing record file.
    Report {
        records: PathBuf,
        /// Postselection policy (repeatable): none, final_readout_only, mid_checks_only, both.
        #[arg(long = "policy", value_parser = parse_policy)]
        policies: Vec<PostselectionPolicy>,
        /// Summary table path; defaults to <stem>.summary.tsv next to the records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Device presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Configuration schema.
    Schema {
        #[command(subcommand)]
        action: SchemaAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
}

#[derive(Subcommand)]
enum SchemaAction {
    Print,
}

fn parse_policy(s: &str) -> Result<PostselectionPolicy, String> {
    PostselectionPolicy::parse(s).ok_or_else(|| format!("unknown policy '{s}'"))
}

fn print_analysis(a: &Analysis) {
    print!("{}", a.summary_tsv());
    eprint!("{}", a.notes_text());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<(), CliError> = match cli.command {
        Command::Run {
            config,
            allow_large,
        } => ExperimentConfig::load(&config).and_then(|cfg| {
            let base = config
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."));
            let art = run_config(&cfg, base, RunOptions { allow_large })?;
            print_analysis(&art.analysis);
            eprintln!("records: {}", art.records.display());
            Ok(())
        }),
        Command::Report {
            records,
            policies,
            out,
        } => {
            let p = (!policies.is_empty()).then_some(policies.as_slice());
            report_records(&records, p, out.as_deref()).map(|(a, path)| {
                print_analysis(&a);
                eprintln!("table: {}", path.display());
            })
        }
        Command::Presets {
            action: PresetAction::List,
        } => {
            for (name, about) in PRESETS {
                println!("{name}\t{about}");
            }
            Ok(())
        }
        Command::Schema {
            action: SchemaAction::Print,
        } => {
            println!("{}", schema_json());
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
