//! `semrec`: data preparation, profile generation, training, evaluation
//! and reporting for graph recommenders aligned with semantic profiles.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Bad flags, flag combinations or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_SERVICE: u8 = 4;
pub const EXIT_DIVERGENCE: u8 = 5;

#[derive(Parser)]
#[command(name = "semrec", version = env!("SEMREC_VERSION"), about)]
struct Cli {
    /// TOML configuration; flags override it, it overrides built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load interactions, k-core filter and split 3:1:1 per user.
    Prepare(commands::prepare::Args),
    /// Generate a planted-latent synthetic corpus with semantic vectors.
    Synth(commands::synth::Args),
    /// Generate item then user profiles through a chat-completion service.
    GenProfiles(commands::profiles::GenArgs),
    /// Embed profiles into a semantic vector file.
    Embed(commands::profiles::EmbedArgs),
    /// Train a backbone in base, contrastive or generative mode.
    Train(commands::train::Args),
    /// Re-evaluate a trained run, or rank by semantic similarity alone.
    Evaluate(commands::evaluate::Args),
    /// Aggregate multi-seed runs into a mean ± std table.
    Report(commands::report::Args),
    /// Serve a scripted OpenAI-compatible mock for offline runs.
    MockServer(commands::mock::Args),
}

/// Maps an error to its exit code by the first recognizable cause.
fn exit_code(err: &anyhow::Error) -> u8 {
    use semrec_core::Error as Core;
    use semrec_profilegen::Error as Prof;
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<Core>() {
            return match e {
                Core::Divergence(_) => EXIT_DIVERGENCE,
                _ => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<Prof>() {
            return match e {
                Prof::Core(Core::Divergence(_)) => EXIT_DIVERGENCE,
                e if e.is_service_error() => EXIT_SERVICE,
                _ => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_DATA;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = config::FileConfig::load(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Prepare(a) => commands::prepare::run(a, file),
        Command::Synth(a) => commands::synth::run(a, file),
        Command::GenProfiles(a) => commands::profiles::run_gen(a, file),
        Command::Embed(a) => commands::profiles::run_embed(a, file),
        Command::Train(a) => commands::train::run(a, file),
        Command::Evaluate(a) => commands::evaluate::run(a, file),
        Command::Report(a) => commands::report::run(a),
        Command::MockServer(a) => commands::mock::run(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_cause() {
        let usage = anyhow::Error::new(UsageError("x".into()));
        assert_eq!(exit_code(&usage), EXIT_USAGE);
        let div = anyhow::Error::new(semrec_core::Error::Divergence("nan".into())).context("training");
        assert_eq!(exit_code(&div), EXIT_DIVERGENCE);
        let data = anyhow::Error::new(semrec_core::Error::Empty("none".into()));
        assert_eq!(exit_code(&data), EXIT_DATA);
        let svc = anyhow::Error::new(semrec_profilegen::Error::Http {
            endpoint: "e".into(),
            status: 500,
            body: String::new(),
        });
        assert_eq!(exit_code(&svc), EXIT_SERVICE);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
