use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spma_lab::verify::{render_table, run_suite, Suite};
use spma_lab::{emit_report, load_results, run_experiment, ExperimentConfig, Sweep};

#[derive(Debug, Parser)]
#[command(name = "spma", version, about = "Policy mirror ascent experiments and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for results (overrides the config's `output_dir`).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Skip the SVG chart.
    #[arg(long, global = true)]
    no_svg: bool,
    /// Added to every configured seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every method and seed at the first step size and inner budget.
    Run { config: PathBuf },
    /// Run the full step-size and inner-budget grid.
    Grid { config: PathBuf },
    /// Run acceptance checks: bandit, tabular, fa or all.
    Verify { suite: Suite },
    /// Rebuild the summary and chart of an existing results directory.
    Report { results_dir: PathBuf },
}

fn experiment(cli: &Cli, config: &Path, sweep: Sweep) -> Result<ExitCode, String> {
    let cfg = ExperimentConfig::load(config).map_err(|e| e.to_string())?;
    let dir = cli.output_dir.clone().unwrap_or_else(|| cfg.output_dir());
    let results = run_experiment(&cfg, sweep, cli.seed_offset);
    emit_report(&results, &dir, !cli.no_svg).map_err(|e| e.to_string())?;
    let failed = results.cells.iter().filter(|c| c.outcome.is_err()).count();
    println!(
        "{} cells written to {} ({} failed)",
        results.cells.len(),
        dir.display(),
        failed
    );
    for c in results.cells.iter().filter(|c| c.outcome.is_err()) {
        eprintln!("cell {} failed: {}", c.key.file_stem(), c.outcome.as_ref().unwrap_err());
    }
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn execute(cli: &Cli) -> Result<ExitCode, String> {
    match &cli.command {
        Command::Run { config } => experiment(cli, config, Sweep::Single),
        Command::Grid { config } => experiment(cli, config, Sweep::Full),
        Command::Verify { suite } => {
            let outcomes = run_suite(*suite, |o| println!("{o}"));
            println!();
            print!("{}", render_table(&outcomes));
            Ok(if outcomes.iter().all(|o| o.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Report { results_dir } => {
            let results = load_results(results_dir).map_err(|e| e.to_string())?;
            let dir = cli.output_dir.as_ref().unwrap_or(results_dir);
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            spma_lab::report::write_summaries(&results, dir, !cli.no_svg).map_err(|e| e.to_string())?;
            println!("summary written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(&cli)),
        Err(e) => Err(format!("cannot start thread pool: {e}")),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
