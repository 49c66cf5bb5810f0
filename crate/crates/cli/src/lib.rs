//! The `ia` command-line tool.

pub mod args;
pub mod commands;
pub mod config;
pub mod metadata;
pub mod plot;

use std::ffi::OsString;

use clap::Parser;
use ia_core::IaError;

use args::Cli;
use metadata::RunMetadata;

/// Scalar type used by every subcommand.
pub type F = f32;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum Failure {
    /// Bad input: flags, config, manifests, splits.
    Validation(String),
    /// The run itself failed.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => EXIT_VALIDATION,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<IaError> for Failure {
    fn from(e: IaError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    if cli.global.verbose {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    } else {
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    }

    let started_at = metadata::now();
    let config = config::load(&cli.global);
    let outcome = match &config {
        Ok(cfg) => {
            let cx = commands::Context {
                global: &cli.global,
                config: cfg,
            };
            commands::run(&cx, &cli.command)
        }
        Err(Failure::Validation(m)) => Err(Failure::Validation(m.clone())),
        Err(Failure::Runtime(m)) => Err(Failure::Runtime(m.clone())),
    };
    let exit_code = match &outcome {
        Ok(_) => EXIT_OK,
        Err(f) => f.exit_code(),
    };
    let meta = RunMetadata {
        command_line: argv.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
        subcommand: cli.command.name().into(),
        status: match exit_code {
            EXIT_OK => "ok",
            EXIT_VALIDATION => "validation_error",
            _ => "runtime_error",
        }
        .into(),
        exit_code,
        error: outcome.as_ref().err().map(|f| f.message().to_owned()),
        config_hash: config.as_ref().ok().map(|c| c.hash()),
        config: config.as_ref().ok().map(|c| serde_json::to_value(c).expect("config serializes")),
        seed: config.as_ref().ok().map(|c| c.seed),
        encoder: config.as_ref().ok().map(|c| c.encoder.backend.as_str().to_owned()),
        git_describe: metadata::git_describe(),
        started_at,
        finished_at: metadata::now(),
        artifacts: outcome.as_ref().map(Clone::clone).unwrap_or_default(),
    };
    if let Err(e) = meta.write(&cli.global.out) {
        eprintln!("error: could not write run metadata: {e}");
    }
    match outcome {
        Ok(_) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            exit_code
        }
    }
}
