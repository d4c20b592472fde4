//! Thin CLI over the library pipeline: ingest, embed, grid, report.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use headline_forecast::commands::{self, GridSummary};
use headline_forecast::config::RunConfigFile;
use headline_forecast::runner::{RunFilter, SortKey};
use headline_forecast::Error;

#[derive(Parser)]
#[command(
    name = "headline-forecast",
    about = "Quantify whether news-headline embeddings improve next-day return forecasts",
    version
)]
struct Cli {
    /// Run configuration file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the grid seed from the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load headlines and market data, align calendars, prune correlated
    /// columns, normalize, and persist the frame.
    Ingest,
    /// Populate the embedding cache for every whitelisted headline.
    Embed,
    /// Enumerate and execute the experiment grid.
    Grid {
        /// Resume from completed run ids (this is also the default
        /// behavior; the flag documents intent).
        #[arg(long)]
        resume: bool,
        /// Print the descriptor count and exit.
        #[arg(long)]
        dry_run: bool,
        /// Axis selector like arch=FFNN or transform=LOG_RETURN,LINEAR_DIFF
        /// (repeatable).
        #[arg(long = "filter", value_name = "KEY=VALUES")]
        filter: Vec<String>,
    },
    /// Emit leaderboard, min-SMAPE-per-dimension and uplift CSVs.
    Report {
        /// Results directory (defaults to the config's results_dir).
        #[arg(long)]
        results_dir: Option<PathBuf>,
        /// Sort column: test_smape, test_mse or test_r2.
        #[arg(long, default_value = "test_smape")]
        sort: String,
        /// Keep only the best N rows.
        #[arg(long)]
        top: Option<usize>,
        /// Where to write the CSVs (defaults to the results directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfigFile, Error> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this command".into()))?;
    RunConfigFile::load(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Ingest => {
            let config = load_config(&cli)?;
            let summary = commands::cmd_ingest(&config)?;
            println!(
                "headlines: {} retained over {} days",
                summary.headlines_loaded, summary.headline_days
            );
            println!(
                "frame: {} rows x {} columns -> {}",
                summary.rows,
                summary.columns_kept,
                summary.frame_path.display()
            );
            for d in &summary.prune.dropped {
                println!(
                    "dropped {}: |corr| {:.4} with {}",
                    d.column,
                    d.correlation.abs(),
                    d.partner
                );
            }
            for c in &summary.prune.zero_variance {
                println!("dropped {c}: zero variance");
            }
            Ok(())
        }
        Command::Embed => {
            let config = load_config(&cli)?;
            for (model, report) in commands::cmd_embed(&config)? {
                let secs = report.wall.as_secs_f64();
                let rate = if secs > 0.0 {
                    report.fetched as f64 / secs
                } else {
                    0.0
                };
                println!(
                    "{model}: {} fetched, {} cached, {} flushes in {:.2}s ({:.0}/s)",
                    report.fetched, report.cached, report.flushes, secs, rate
                );
            }
            Ok(())
        }
        Command::Grid {
            resume: _,
            dry_run,
            filter,
        } => {
            let config = load_config(&cli)?;
            let filter = RunFilter::parse(filter)?;
            match commands::cmd_grid(&config, *dry_run, &filter, cli.seed)? {
                GridSummary::DryRun { descriptors } => {
                    println!("{descriptors}");
                }
                GridSummary::Executed {
                    descriptors,
                    executed,
                    reused,
                    failed,
                    results_dir,
                } => {
                    println!(
                        "grid: {descriptors} runs ({executed} executed, {reused} reused, \
                         {failed} failed) -> {}",
                        results_dir.display()
                    );
                }
            }
            Ok(())
        }
        Command::Report {
            results_dir,
            sort,
            top,
            out_dir,
        } => {
            let dir = match results_dir {
                Some(d) => d.clone(),
                None => load_config(&cli)?.paths.results_dir,
            };
            let sort: SortKey = sort.parse()?;
            let summary = commands::cmd_report(&dir, out_dir.as_deref(), sort, *top)?;
            println!(
                "{} runs ({} failed) -> {}",
                summary.runs,
                summary.failures,
                summary.leaderboard_path.display()
            );
            println!("min smape by dim -> {}", summary.min_smape_path.display());
            println!("uplift -> {}", summary.uplift_path.display());
            for row in &summary.uplift.rows {
                println!(
                    "uplift {}/{}: {:.1}% (none {:.3} -> best {:.3})",
                    row.arch,
                    row.transform,
                    100.0 * row.uplift,
                    row.smape_none,
                    row.smape_best_embedding
                );
            }
            if let Some(mean) = summary.uplift.mean_uplift {
                println!("mean uplift: {:.1}%", 100.0 * mean);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
