use std::path::PathBuf;
use std::process::ExitCode;

use cayley_core::experiments::{concat, run_suite, ExperimentConfig, Format, SUITES};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

/// Run Cayley deformation experiments and write result tables.
#[derive(Debug, Parser)]
#[command(name = "cayley", version)]
struct Cli {
    /// Experiment suite to run.
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    experiment: String,
    /// JSON configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scaffold parameter k in 0..=4.
    #[arg(long)]
    k: Option<usize>,
    /// Sites per direction.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the algebra and Newton tolerances.
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
}

fn load_config(cli: &Cli) -> cayley_core::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.k.is_some() {
        cfg.k = cli.k;
    }
    if cli.grid.is_some() {
        cfg.grid.n = cli.grid;
    }
    if cli.eps.is_some() {
        cfg.eps = cli.eps;
    }
    if cli.trials.is_some() {
        cfg.trials = cli.trials;
    }
    if let Some(t) = cli.tol {
        cfg.tolerances.algebra = t;
        cfg.tolerances.newton = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> cayley_core::Result<bool> {
    let cfg = load_config(cli)?;
    let table = concat(&run_suite(&cli.experiment, &cfg)?);
    let format = match cli.format {
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };
    let text = table.render(format)?;
    match &cli.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    let failed = table.rows.iter().filter(|r| !r.pass).count();
    eprintln!(
        "{}: {} rows, {} failed, config {}, {:.2} s",
        table.experiment,
        table.rows.len(),
        failed,
        &table.config_digest[..12],
        table.wall_time_s
    );
    Ok(table.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
