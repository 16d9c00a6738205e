//! Command-line front end: scenario configs in, result tables out.
//!
//! Exit codes are 0 when every check passes, 1 when a check fails and 2 for
//! config or usage errors. The seed comes from `--seed`, then the
//! `TXDECOH_SEED` environment variable, then `dynamics.seed` in the config,
//! then 0.

pub mod commands;
pub mod config;
pub mod table;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use commands::CommandOutcome;
pub use config::{ConfigError, ScenarioConfig};
pub use table::{Cell, ResultTable};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const SEED_ENV: &str = "TXDECOH_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    /// A single JSON object.
    Structured,
}

#[derive(Clone, Debug, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML). Defaults describe the balanced d² = 0.8 case.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long, value_name = "N", env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Write output here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Clone, Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Also check N seeded random scenarios.
    #[arg(long, value_name = "N")]
    pub random_sweep: Option<usize>,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Epistemic mixture vs partial trace of the entangled state.
    Identity(SweepArgs),
    /// Ensemble coherence decay against the exponential law.
    Decay(CommonArgs),
    /// Two-slit screen distribution, sampled hits and visibility.
    Screen(CommonArgs),
    /// System purity through entangle, recohere and actualization.
    Recohere(CommonArgs),
    /// Full invariant suite.
    Validate(SweepArgs),
}

#[derive(Clone, Debug, Parser)]
#[command(
    name = "txdecoh",
    version,
    about = "Measurement, decoherence and recoherence simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Identity(_) => "identity",
            Command::Decay(_) => "decay",
            Command::Screen(_) => "screen",
            Command::Recohere(_) => "recohere",
            Command::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Identity(a) | Command::Validate(a) => &a.common,
            Command::Decay(a) | Command::Screen(a) | Command::Recohere(a) => a,
        }
    }

    fn sweep(&self) -> Option<usize> {
        match self {
            Command::Identity(a) | Command::Validate(a) => a.random_sweep,
            _ => None,
        }
    }
}

pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, ConfigError> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?;
            ScenarioConfig::from_toml_str(&text)
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(crate::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            CliError::Run(e) if commands::is_config_error(e) => EXIT_USAGE,
            CliError::Run(_) | CliError::Output { .. } => EXIT_CHECK_FAILED,
        }
    }
}

/// Runs a parsed command, returning the rendered output and the outcome.
pub fn run(command: &Command) -> Result<(String, CommandOutcome), CliError> {
    let common = command.common();
    let mut cfg = load_config(common.config.as_deref())?;
    let seed = common.seed.or(cfg.dynamics.seed).unwrap_or(0);
    cfg.dynamics.seed = Some(seed);

    let outcome = match command {
        Command::Identity(_) => commands::cmd_identity(&cfg, seed, command.sweep()),
        Command::Decay(_) => commands::cmd_decay(&cfg, seed),
        Command::Screen(_) => commands::cmd_screen(&cfg, seed),
        Command::Recohere(_) => commands::cmd_recohere(&cfg, seed),
        Command::Validate(_) => commands::cmd_validate(&cfg, seed, command.sweep()),
    }
    .map_err(CliError::Run)?;

    let mut header = vec![
        ("tool".to_string(), "txdecoh".to_string()),
        ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ("command".into(), command.name().into()),
        ("seed".into(), seed.to_string()),
        ("config_hash".into(), cfg.hash()),
    ];
    if let Some(n) = command.sweep() {
        header.push(("random_sweep".into(), n.to_string()));
    }
    header.push(("passed".into(), outcome.passed.to_string()));
    let mut table = outcome.table;
    table.prepend_meta(header);

    let text = match common.format {
        OutputFormat::Csv => table.to_csv(),
        OutputFormat::Structured => table.to_json(),
    };
    Ok((
        text,
        CommandOutcome {
            table,
            passed: outcome.passed,
        },
    ))
}

/// Parses `args`, runs the command, writes its output and returns the exit
/// code.
pub fn execute<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = run(&cli.command).and_then(|(text, outcome)| {
        write_output(cli.command.common().out.as_deref(), &text)?;
        Ok(outcome.passed)
    });
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("txdecoh {}: check failed", cli.command.name());
            EXIT_CHECK_FAILED
        }
        Err(e) => {
            eprintln!("txdecoh: {e}");
            e.exit_code()
        }
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let res = match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    res.map_err(|source| CliError::Output {
        path: path.map_or("stdout".into(), |p| p.display().to_string()),
        source,
    })
}
