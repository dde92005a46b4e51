//! `polychar`: analyse operator tuples stored as fixture files, run the
//! verification batteries and generate fixtures.

mod commands;
mod exit;
mod fixture_file;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use polychar::fixtures::FixtureSpec;
use polychar::verify::Suite;

use exit::CliError;
use report::{digest, Report, REPORT_FORMAT};

#[derive(Parser, Debug)]
#[command(name = "polychar", version, about = "Characteristic functions of commuting row contractions")]
struct Cli {
    /// Rank and residual tolerance.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Degree scan horizon (default 2·n·dim).
    #[arg(long, global = true)]
    horizon: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Output {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Diagnostics, classification, degree, φ and annotation check.
    Analyze { file: PathBuf },
    /// Canonical three-block decomposition.
    Decompose { file: PathBuf },
    /// Two- or three-block factorization certificate.
    Factorize {
        file: PathBuf,
        /// Block boundaries, e.g. `2,5`; defaults to the recorded block sizes.
        #[arg(long)]
        split: Option<String>,
        #[arg(long, default_value_t = 4)]
        fock_order: usize,
        /// Reduce a three-block certificate to the constant-sandwich form.
        #[arg(long)]
        g_form: bool,
    },
    /// Run verification batteries.
    Verify {
        #[arg(long, default_value = "all", value_parser = parse_suite)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// Run every applicable check on one fixture instead.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
    /// Generate a fixture file.
    Example {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Nilpotency order (nilpotent-poly, jordan).
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Dimension (spherical-coiso, random-commuting, random-noncommuting).
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 8)]
        top_degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noncommuting variant (spherical-coiso, block-composite).
        #[arg(long)]
        noncommuting: bool,
        /// Diagonal blocks, e.g. `nil2,zero1,comm2` (kinds nil, zero, comm, coiso, rand).
        #[arg(long)]
        blocks: Option<String>,
        #[arg(long, default_value_t = 0.8)]
        corner_scale: f64,
        /// Destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    NilpotentPoly,
    SphericalCoiso,
    BlockComposite,
    Section7,
    RandomCommuting,
    RandomNoncommuting,
    Jordan,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse()
}

fn emit(cli: &Cli, command: &str, outcome: commands::Outcome, start: Instant) -> Result<u8, CliError> {
    let inputs: Vec<&[u8]> = outcome.inputs.iter().map(Vec::as_slice).collect();
    let report = Report {
        format: REPORT_FORMAT,
        command: command.into(),
        inputs_digest: digest(&inputs),
        tolerances: outcome.tolerances,
        results: outcome.results,
        passed: outcome.passed,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    match cli.output {
        Output::Json => println!("{}", report.to_json()),
        Output::Text => {
            let mut r = report.to_text();
            if command == "verify" {
                r = strip_check_list(&r);
            }
            print!("{r}");
        }
    }
    if let Some(path) = &cli.report {
        write(path, &report.to_json())?;
    }
    Ok(match (outcome.code, report.passed) {
        (Some(code), _) => code,
        (None, true) => exit::OK,
        (None, false) => exit::VERIFICATION,
    })
}

/// The per-check list is kept in JSON only; text shows the summary table.
fn strip_check_list(text: &str) -> String {
    let mut out = String::new();
    let mut skipping = false;
    for line in text.lines() {
        if line == "checks:" {
            skipping = true;
            continue;
        }
        if skipping && line.starts_with(' ') {
            continue;
        }
        skipping = false;
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::new(exit::IO, format!("cannot write {}: {e}", path.display())))
}

/// The fixture spec named by an `example` invocation.
fn spec_of(cmd: &Command) -> Result<FixtureSpec, CliError> {
    let Command::Example { kind, n, m, d, top_degree, seed, noncommuting, blocks, corner_scale, .. } = cmd else {
        unreachable!("spec_of is only called for example");
    };
    let (n, m, d, seed) = (*n, *m, *d, *seed);
    Ok(match kind {
        Kind::NilpotentPoly => FixtureSpec::NilpotentPoly { n, m },
        Kind::SphericalCoiso => FixtureSpec::SphericalCoiso { n, d, commuting: !noncommuting, seed },
        Kind::BlockComposite => FixtureSpec::BlockComposite {
            n,
            blocks: commands::parse_blocks(blocks.as_deref().ok_or_else(|| CliError::parse("block-composite needs --blocks"))?)?,
            corner_scale: *corner_scale,
            commuting: !noncommuting,
            seed,
        },
        Kind::Section7 => FixtureSpec::Section7 { top_degree: *top_degree },
        Kind::RandomCommuting => FixtureSpec::RandomCommuting { n, d, seed },
        Kind::RandomNoncommuting => FixtureSpec::RandomNoncommuting { n, d, seed },
        Kind::Jordan => FixtureSpec::Jordan1d { m },
    })
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let start = Instant::now();
    match &cli.command {
        Command::Analyze { file } => emit(cli, "analyze", commands::analyze(file, cli.tol, cli.horizon)?, start),
        Command::Decompose { file } => emit(cli, "decompose", commands::decompose(file, cli.tol, cli.horizon)?, start),
        Command::Factorize { file, split, fock_order, g_form } => emit(
            cli,
            "factorize",
            commands::factorize(file, cli.tol, split.as_deref(), *fock_order, *g_form)?,
            start,
        ),
        Command::Verify { suite, seed, count, fixture } => {
            emit(cli, "verify", commands::verify(*suite, *seed, *count, fixture.as_deref(), cli.tol)?, start)
        }
        cmd @ Command::Example { out, .. } => {
            let spec = spec_of(cmd)?;
            let file = commands::example(&spec)?;
            match out {
                Some(path) => {
                    write(path, &file.to_json())?;
                    eprintln!("wrote {} (n = {}, dim = {})", path.display(), file.n, file.dim);
                }
                None => println!("{}", file.to_json()),
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
