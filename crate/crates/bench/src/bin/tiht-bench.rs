use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tensor_iht_bench::config::ExperimentKind;
use tensor_iht_bench::runner::{prepare_output_dir, run_recovery, run_survey, run_witness, write_recovery_outputs};
use tensor_iht_bench::output::{save_survey, save_witness};
use tensor_iht_bench::tnsr::{load_tensor, load_tensor_csv, save_tensor, save_tensor_csv};
use tensor_iht_bench::{BenchError, ExperimentSpec, Result};

/// Low-rank tensor recovery experiments.
#[derive(Parser)]
#[command(name = "tiht-bench", version)]
struct Cli {
    /// Override the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory of the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Write zeros in the seconds column so outputs are reproducible byte for byte.
    #[arg(long, global = true)]
    no_timing: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a phase-transition or convergence experiment (any kind is accepted).
    Run { config: PathBuf },
    /// Run a distortion survey.
    Survey { config: PathBuf },
    /// Run a RIP-failure witness scan.
    Witness { config: PathBuf },
    /// Convert a tensor between TNSR (`.tnsr`) and CSV (`.csv`).
    Convert { input: PathBuf, output: PathBuf },
}

fn is_csv(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn convert(input: &Path, output: &Path) -> Result<()> {
    let t = if is_csv(input) { load_tensor_csv(input)? } else { load_tensor(input)? };
    if is_csv(output) {
        save_tensor_csv(output, &t)
    } else {
        save_tensor(output, &t)
    }
}

fn load_spec(cli: &Cli, path: &Path, want: Option<ExperimentKind>) -> Result<(ExperimentSpec, PathBuf)> {
    let mut spec = ExperimentSpec::from_path(path)?;
    if let Some(kind) = want {
        if spec.kind != kind {
            return Err(BenchError::Config(format!("config kind {:?} does not match the subcommand", spec.kind)));
        }
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if cli.no_timing {
        spec.timing = false;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| spec.output.clone())
        .ok_or_else(|| BenchError::Config("no output directory: set `output` or pass --out".into()))?;
    spec.output = Some(out.clone());
    Ok((spec, out))
}

fn execute(cli: &Cli) -> Result<()> {
    let (path, want) = match &cli.command {
        Command::Convert { input, output } => return convert(input, output),
        Command::Run { config } => (config, None),
        Command::Survey { config } => (config, Some(ExperimentKind::DistortionSurvey)),
        Command::Witness { config } => (config, Some(ExperimentKind::WitnessScan)),
    };
    let (spec, out) = load_spec(cli, path, want)?;
    prepare_output_dir(&out)?;
    std::fs::write(out.join("config.toml"), spec.to_toml_string()).map_err(|e| BenchError::io(out.join("config.toml"), e))?;
    match spec.kind {
        ExperimentKind::PhaseTransition | ExperimentKind::Convergence => {
            let outcome = run_recovery(&spec)?;
            write_recovery_outputs(&spec, &outcome, &out)?;
            for f in outcome.table.fractions() {
                log::info!("{:<10} m_trim={:<3} m={:<6} recovered {}/{}", f.algo, f.m_trim, f.m, f.recovered, f.trials);
            }
        }
        ExperimentKind::DistortionSurvey => {
            let rows = run_survey(&spec)?;
            save_survey(out.join("survey.csv"), &rows)?;
            for r in &rows {
                log::info!("m={:<6} m_trim={:<3} rep={:<4} max={:.4} mean={:.4}", r.m, r.m_trim, r.rep, r.max, r.mean);
            }
        }
        ExperimentKind::WitnessScan => {
            let rows = run_witness(&spec)?;
            save_witness(out.join("witness.csv"), &rows)?;
            log::info!("{} witness pairs written", rows.len());
        }
    }
    log::info!("outputs in {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(4);
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
