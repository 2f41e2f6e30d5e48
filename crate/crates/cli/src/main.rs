use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use clvq_cli::{
    bounds_table, export_plot_data, run_comparison, run_design, run_genetic_trace, ExperimentConfig, ExportOptions,
    ReportInput, RunOptions,
};

#[derive(Parser)]
#[command(name = "clvq", version, about = "Comparison-limited vector quantizer design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Concurrent restarts.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<(ExperimentConfig, RunOptions)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let opts = RunOptions {
            out: self.out.clone().unwrap_or_else(|| cfg.outputs.clone()),
            jobs: self.jobs.max(1),
        };
        Ok((cfg, opts))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Multi-restart design for every k in the config.
    Design(RunArgs),
    /// Proposed design against both LBG baselines; appends to sweep.csv.
    Compare(RunArgs),
    /// Genetic initialization traces.
    GeneticTrace(RunArgs),
    /// Sample points, boundaries and region graph of a design report.
    ExportPlots {
        /// Report JSON written by `design`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5_000)]
        points: usize,
        /// Coordinates exported as x and y.
        #[arg(long, num_args = 2, default_values_t = [0, 1])]
        coords: Vec<usize>,
    },
    /// Region-count bound tables.
    Bounds {
        #[arg(long, default_value_t = 6)]
        max_d: usize,
        #[arg(long, default_value_t = 10)]
        max_k: usize,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Design(args) => {
            let (cfg, opts) = args.load()?;
            for f in run_design(&cfg, &opts)? {
                println!(
                    "k={} best_mse={:.6} mean_mse={:.6} regions={}",
                    f.k,
                    f.best_mse,
                    f.mean_mse,
                    f.best().region_count
                );
            }
            println!("wrote {}", opts.out.display());
        }
        Command::Compare(args) => {
            let (cfg, opts) = args.load()?;
            for r in run_comparison(&cfg, &opts)? {
                println!(
                    "k_or_regions={} method={:?} best={:.6} mean={:.6} regions={}",
                    r.k_or_regions, r.method, r.distortion_best, r.distortion_mean, r.region_count
                );
            }
            println!("appended to {}", opts.out.join("sweep.csv").display());
        }
        Command::GeneticTrace(args) => {
            let (cfg, opts) = args.load()?;
            for g in run_genetic_trace(&cfg, &opts)? {
                if let Some((b, m)) = g.average.last() {
                    println!("k={} final average best={b:.6} mean={m:.6}", g.k);
                }
            }
            println!("wrote {}", opts.out.display());
        }
        Command::ExportPlots {
            report,
            out,
            seed,
            points,
            coords,
        } => {
            let rep = ReportInput::load(&report)?;
            let opts = ExportOptions {
                points,
                seed,
                coords: (coords[0], coords[1]),
            };
            let s = export_plot_data(&rep, &out, &opts).context("exporting plot data")?;
            println!("points: {}", s.points);
            match s.boundaries {
                Some(n) => println!("boundaries: {n}"),
                None => eprintln!("boundaries skipped: design is not planar"),
            }
            if let Some(v) = s.graph_vertices {
                println!("region graph vertices: {v}");
            }
        }
        Command::Bounds { max_d, max_k } => print!("{}", bounds_table(max_d, max_k)),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
