use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opto_cli::{dump_report, run, BackendChoice, CliError, Demo, RunConfig};

#[derive(Parser)]
#[command(name = "opto")]
#[command(about = "Execution-trace optimization demos and diagnostics")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Args)]
struct DemoArgs {
    /// Demo to run: fig4 | numopt | binmatch | battleship
    demo: String,

    /// Optimizer backend: scripted | adam | llm
    #[arg(long, default_value = "scripted")]
    backend: String,

    /// Optimization iterations per seed
    #[arg(long, default_value_t = 30)]
    steps: usize,

    /// Number of seeds (runs seeds 0..N-1)
    #[arg(long, default_value_t = 1)]
    seeds: u64,

    /// Bits for the binmatch demo
    #[arg(long, default_value_t = 8)]
    bits: usize,

    /// Board width for the battleship demo
    #[arg(long, default_value_t = 8)]
    width: usize,

    /// Board height for the battleship demo
    #[arg(long, default_value_t = 8)]
    height: usize,

    /// Output directory for steps.jsonl, curve.csv and graph.dot
    #[arg(long)]
    out: Option<PathBuf>,

    /// Blank the trace sections of the report (ablation)
    #[arg(long)]
    masked: bool,

    /// Model override for the llm backend
    #[arg(long)]
    model: Option<String>,

    /// Base URL override for the llm backend
    #[arg(long)]
    base_url: Option<String>,
}

#[derive(Subcommand)]
enum Commands {
    /// Run an optimization demo and write its artifacts
    Demo(DemoArgs),
    /// Print the iteration-0 problem report for a demo
    DumpReport {
        /// Demo name: fig4 | numopt | binmatch | battleship
        demo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        bits: usize,
        #[arg(long, default_value_t = 8)]
        width: usize,
        #[arg(long, default_value_t = 8)]
        height: usize,
    },
}

fn config_from(args: &DemoArgs) -> Result<RunConfig, CliError> {
    let demo = Demo::parse(&args.demo)
        .ok_or_else(|| CliError::Config(format!("unknown demo '{}'", args.demo)))?;
    let backend = BackendChoice::parse(&args.backend)
        .ok_or_else(|| CliError::Config(format!("unknown backend '{}'", args.backend)))?;
    let mut config = RunConfig::new(demo, backend);
    config.steps = args.steps;
    config.seeds = (0..args.seeds).collect();
    config.bits = args.bits;
    config.width = args.width;
    config.height = args.height;
    config.out_dir = args.out.clone();
    config.masked = args.masked;
    config.model = args.model.clone();
    config.base_url = args.base_url.clone();
    Ok(config)
}

fn exit_code_for(error: &CliError) -> ExitCode {
    match error {
        CliError::Config(_) => ExitCode::from(2),
        CliError::Backend(_) => ExitCode::from(3),
        CliError::Io(_) => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Commands::Demo(args) => {
            let config = match config_from(&args) {
                Ok(config) => config,
                Err(error) => {
                    eprintln!("{error}");
                    return exit_code_for(&error);
                }
            };
            match run(&config) {
                Ok(summary) => {
                    for seed_run in &summary.runs {
                        let success = seed_run
                            .success_iteration
                            .map(|i| format!(", success at iteration {i}"))
                            .unwrap_or_default();
                        println!(
                            "seed {}: final metric {:.6}{}",
                            seed_run.seed, seed_run.final_metric, success
                        );
                    }
                    println!(
                        "final metric over {} seed(s): {:.6} +/- {:.6}",
                        summary.runs.len(),
                        summary.mean_final,
                        summary.stderr_final
                    );
                    if let Some(dir) = &config.out_dir {
                        println!("artifacts written to {}", dir.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(error) => {
                    eprintln!("{error}");
                    exit_code_for(&error)
                }
            }
        }
        Commands::DumpReport {
            demo,
            seed,
            bits,
            width,
            height,
        } => {
            let Some(demo) = Demo::parse(&demo) else {
                eprintln!("configuration error: unknown demo '{demo}'");
                return ExitCode::from(2);
            };
            let mut config = RunConfig::new(demo, BackendChoice::Scripted);
            config.bits = bits;
            config.width = width;
            config.height = height;
            match dump_report(&config, seed) {
                Ok(report) => {
                    println!("{report}");
                    ExitCode::SUCCESS
                }
                Err(error) => {
                    eprintln!("{error}");
                    exit_code_for(&error)
                }
            }
        }
    }
}
