use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use trudinger_cli::commands::{self, Command, EXIT_CHECK_FAILED, EXIT_CONFIG};
use trudinger_cli::config::{self, OutputFormat, RunConfig};

#[derive(Parser)]
#[command(name = "trudinger", version, about = "Solver and verification experiments for Trudinger's equation")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed, overriding `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand, Clone)]
enum Cmd {
    /// March the scheme and check the energy estimate.
    Solve,
    /// Check a stored or fresh solution against the order principles and estimates.
    Verify,
    /// Solve with shifted data and measure the squeeze gaps.
    Squeeze,
    /// Refinement study along the configured ladder.
    Convergence,
    /// Seeded sweep of the vector inequalities.
    Ineq,
    /// Check docs/math_to_code.md against the library sources.
    DocLint {
        #[arg(long, default_value = ".")]
        root: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy)]
enum Format {
    Csv,
    Json,
    Both,
}

fn resolve(cli: &Cli) -> Result<RunConfig, config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => config::load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.to_string_lossy().into_owned();
    }
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = Some(seed);
    }
    if let Some(f) = cli.format {
        cfg.output.formats = match f {
            Format::Csv => vec![OutputFormat::Csv],
            Format::Json => vec![OutputFormat::Json],
            Format::Both => vec![OutputFormat::Csv, OutputFormat::Json],
        };
    }
    // Overrides must still leave a valid config.
    config::parse_config(&config::to_toml(&cfg))
}

fn doc_lint(root: &std::path::Path) -> ExitCode {
    match trudinger::docs::doc_coverage_lint(root) {
        Ok(report) if report.is_clean() => {
            println!("doc-lint: table complete");
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for r in &report.missing_rows {
                println!("missing row: {r}");
            }
            for r in &report.stale_rows {
                println!("stale row: {r}");
            }
            for r in &report.missing_sources {
                println!("missing source: {r}");
            }
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
        Err(e) => {
            eprintln!("doc-lint: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match cli.command.clone() {
        Cmd::Solve => Command::Solve,
        Cmd::Verify => Command::Verify,
        Cmd::Squeeze => Command::Squeeze,
        Cmd::Convergence => Command::Convergence,
        Cmd::Ineq => Command::Ineq,
        Cmd::DocLint { root } => return doc_lint(&root),
    };
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            if let Some(dir) = &cli.out {
                if let Err(io) = commands::write_manifest(dir, command.name(), EXIT_CONFIG, "", Vec::new(), &[]) {
                    eprintln!("cannot write manifest: {io}");
                }
            }
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let summary = commands::run(command, &cfg);
    if let Some(m) = &summary.message {
        eprintln!("{}: {m}", command.name());
    }
    println!(
        "{}: exit {} ({} files in {})",
        command.name(),
        summary.exit_code,
        summary.files.len(),
        summary.out_dir.display()
    );
    ExitCode::from(summary.exit_code as u8)
}
