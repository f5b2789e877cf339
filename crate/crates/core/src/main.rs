use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use readout_codesign::cli_io::{self, OUT_DIR_ENV};
use readout_codesign::Error;

#[derive(Parser, Debug)]
#[command(name = "readout-codesign", version, about = "Readout co-design: JPA modes, dynamics, planning, receiver budget")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON config document.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Seed for randomized search (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stamp the JPA circuit and solve its normal modes.
    JpaModes(RunArgs),
    /// Tabulate the cell's nonlinear potential and Taylor coefficients.
    JpaPotential(RunArgs),
    /// Synthesize (or load) a gain profile.
    GainSynth(RunArgs),
    /// Locate gain maxima and minima.
    GainExtrema(RunArgs),
    /// Evolve the qubit–bus–qubit system and classify its spectrum.
    DynSimulate(RunArgs),
    /// Spectrum and peaks of a probe-current trace.
    SpecFft(RunArgs),
    /// Spectrum, peaks and entanglement verdict of a trace.
    SpecClassify(RunArgs),
    /// Place qubits and resonators on the gain profile.
    Plan(RunArgs),
    /// Receiver gain, noise figure, power and capacity.
    ChainBudget(RunArgs),
    /// Behavioral down-conversion of a test tone.
    ChainSimulate(RunArgs),
}

impl Command {
    fn split(self) -> (&'static str, RunArgs) {
        match self {
            Command::JpaModes(a) => ("jpa-modes", a),
            Command::JpaPotential(a) => ("jpa-potential", a),
            Command::GainSynth(a) => ("gain-synth", a),
            Command::GainExtrema(a) => ("gain-extrema", a),
            Command::DynSimulate(a) => ("dyn-simulate", a),
            Command::SpecFft(a) => ("spec-fft", a),
            Command::SpecClassify(a) => ("spec-classify", a),
            Command::Plan(a) => ("plan", a),
            Command::ChainBudget(a) => ("chain-budget", a),
            Command::ChainSimulate(a) => ("chain-simulate", a),
        }
    }
}

fn run(name: &str, args: RunArgs) -> Result<(), Error> {
    let mut config = cli_io::load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let report = cli_io::run_subcommand(name, &config, &out)?;
    let summary = format!(
        "{name}: wrote {} files to {}\n{}",
        report.files.len(),
        out.display(),
        serde_json::to_string_pretty(&report.derived)?
    );
    // A closed pipe (`| head`) is not a failure of the run.
    let _ = writeln!(std::io::stdout().lock(), "{summary}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, args) = cli.command.split();
    match run(name, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
