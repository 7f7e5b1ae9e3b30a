//! Thin command-line wrapper around the library drivers.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use epimix::data::{CumulativePolicy, PipelineConfig, TimeScale};
use epimix::report::{run_classify, run_fit, run_report, FitOptions};
use epimix::selection::BicMode;
use epimix::EmConfig;

#[derive(Parser)]
#[command(name = "epimix", version, about = "Clustering of regional epidemic trends")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the mixture over a range of orders and write all artifacts.
    Fit(FitArgs),
    /// Classify regions under a frozen model, without refitting.
    Classify(ClassifyArgs),
    /// Emit the parameter table, curve samples and inflection summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BicArg {
    Points,
    Blocks,
}

#[derive(Clone, Copy, ValueEnum)]
enum CumulativeArg {
    Clamp,
    Strict,
}

fn parse_time_scale(s: &str) -> Result<TimeScale, String> {
    if s == "auto" {
        Ok(TimeScale::Auto)
    } else {
        s.parse::<f64>()
            .map(TimeScale::Fixed)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s == "auto" {
        Ok(Threads(None))
    } else {
        s.parse::<usize>()
            .map(|n| Threads(Some(n)))
            .map_err(|_| format!("expected `auto` or an integer, got `{s}`"))
    }
}

#[derive(Clone, Copy)]
struct Threads(Option<usize>);

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    population: PathBuf,
    #[arg(long, default_value_t = 1)]
    kmin: usize,
    #[arg(long, default_value_t = 7)]
    kmax: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    max_iter: usize,
    #[arg(long = "onset-threshold", default_value_t = 1.0)]
    onset_threshold: f64,
    #[arg(long, default_value_t = 100_000.0)]
    per: f64,
    /// `auto` (scale so aligned time spans [0, 1]) or days per time unit.
    #[arg(long = "time-scale", default_value = "auto", value_parser = parse_time_scale)]
    time_scale: TimeScale,
    /// Sample size used in the BIC penalty.
    #[arg(long = "bic-n", value_enum, default_value_t = BicArg::Points)]
    bic_n: BicArg,
    #[arg(long)]
    out: PathBuf,
    /// `auto` or a fixed number of worker threads.
    #[arg(long, default_value = "auto", value_parser = parse_threads)]
    threads: Threads,
    /// Policy for decreasing cumulative counts.
    #[arg(long, value_enum, default_value_t = CumulativeArg::Clamp)]
    cumulative: CumulativeArg,
    /// Keep pre-onset observations at negative aligned times.
    #[arg(long = "keep-pre-onset")]
    keep_pre_onset: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    series: PathBuf,
    #[arg(long)]
    population: PathBuf,
    #[arg(long = "onset-threshold", default_value_t = 1.0)]
    onset_threshold: f64,
    #[arg(long, default_value_t = 100_000.0)]
    per: f64,
    #[arg(long, value_enum, default_value_t = CumulativeArg::Clamp)]
    cumulative: CumulativeArg,
    /// Assignments CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    model: PathBuf,
    /// Exported blocks JSON (written by `fit`), sets the curve time range.
    #[arg(long)]
    blocks: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> Result<(), epimix::Error> {
    match cli.command {
        Command::Fit(args) => {
            let opts = FitOptions {
                series_path: args.series,
                population_path: args.population,
                pipeline: PipelineConfig {
                    onset_threshold: args.onset_threshold,
                    per: args.per,
                    time_scale: args.time_scale,
                    truncate_pre_onset: !args.keep_pre_onset,
                    cumulative: match args.cumulative {
                        CumulativeArg::Clamp => CumulativePolicy::Clamp,
                        CumulativeArg::Strict => CumulativePolicy::Strict,
                    },
                },
                k_min: args.kmin,
                k_max: args.kmax,
                seed: args.seed,
                bic_mode: match args.bic_n {
                    BicArg::Points => BicMode::TotalPoints,
                    BicArg::Blocks => BicMode::Blocks,
                },
                em: EmConfig {
                    tol: args.tol,
                    max_iter: args.max_iter,
                    ..EmConfig::default()
                },
                threads: args.threads.0,
                out_dir: args.out.clone(),
            };
            let summary = run_fit(&opts)?;
            for region in &summary.excluded_regions {
                eprintln!("note: region {region} never reaches the onset threshold; excluded");
            }
            for region in &summary.clamped_regions {
                eprintln!("note: region {region} had decreasing cumulative counts; clamped");
            }
            println!(
                "chosen K = {} (loglik {:.6}); artifacts in {}",
                summary.chosen_k,
                summary.loglik,
                args.out.display()
            );
            Ok(())
        }
        Command::Classify(args) => {
            let output = run_classify(
                &args.model,
                &args.series,
                &args.population,
                args.onset_threshold,
                args.per,
                match args.cumulative {
                    CumulativeArg::Clamp => CumulativePolicy::Clamp,
                    CumulativeArg::Strict => CumulativePolicy::Strict,
                },
            )?;
            for region in &output.unassignable {
                eprintln!("note: region {region} never reaches the onset threshold; unassignable");
            }
            match args.out {
                Some(path) => std::fs::write(&path, output.csv)
                    .map_err(|source| epimix::Error::FileIo { path, source })?,
                None => print!("{}", output.csv),
            }
            Ok(())
        }
        Command::Report(args) => run_report(&args.model, &args.blocks, &args.out),
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
