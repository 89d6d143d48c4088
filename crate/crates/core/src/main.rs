use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trio_ion::harness::{self, ConfigFile, Engine, ResultTable, RunConfig, OUT_DIR_ENV};
use trio_ion::Error;

#[derive(Parser, Debug)]
#[command(name = "trio-ion", version, about = "Trio coherent state generation in a trapped ion")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the integration engine (lindblad, mcwf, both).
    #[arg(long, global = true)]
    engine: Option<String>,
    /// Output file; `-` writes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Omit the generation timestamp from table headers.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fock coefficients of the target state.
    Coeffs,
    /// Time series of inversion, fidelity and ladder populations.
    Simulate,
    /// Fidelity curves for several alpha values.
    Fidelity {
        /// Comma separated alpha values (default from config).
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Generation time over a grid of alpha values.
    SweepAlpha {
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Generation times of the eight- and five-laser schemes over a xi grid.
    CompareSchemes {
        #[arg(long, value_delimiter = ',')]
        xis: Option<Vec<f64>>,
    },
    /// Run the invariant checks and print a report.
    Verify,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Unstable { .. } => 3,
        _ => 2,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    if let Some(seed) = cli.seed {
        file.run.master_seed = seed;
    }
    if let Some(engine) = &cli.engine {
        file.run.engine = engine.parse::<Engine>()?;
    }
    if cli.no_timestamp {
        file.output.no_timestamp = true;
    }
    RunConfig::from_file(file)
}

fn output_path(cli: &Cli, cfg: &RunConfig, name: &str) -> Option<PathBuf> {
    if let Some(p) = &cli.out {
        return (p != Path::new("-")).then(|| p.clone());
    }
    if let Some(p) = &cfg.file.output.path {
        return Some(PathBuf::from(p));
    }
    std::env::var_os(OUT_DIR_ENV).map(|dir| PathBuf::from(dir).join(format!("{name}.csv")))
}

fn emit(cli: &Cli, cfg: &RunConfig, name: &str, table: &ResultTable) -> Result<(), Error> {
    let timestamp = (!cfg.file.output.no_timestamp).then(|| {
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    });
    let csv = table.to_csv(timestamp);
    match output_path(cli, cfg, name) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, csv)?;
            log::info!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<u8, Error> {
    let cfg = load(cli)?;
    let (name, table) = match &cli.command {
        Command::Coeffs => ("coeffs", harness::cmd_coeffs(&cfg)?),
        Command::Simulate => ("simulate", harness::cmd_simulate(&cfg)?),
        Command::Fidelity { alphas } => {
            let alphas = alphas.clone().unwrap_or_else(|| cfg.run().alphas.clone());
            ("fidelity", harness::cmd_fidelity(&cfg, &alphas)?)
        }
        Command::SweepAlpha { alphas } => {
            let grid = alphas.clone().unwrap_or_else(|| cfg.run().alpha_grid.clone());
            ("sweep-alpha", harness::cmd_sweep_alpha(&cfg, &grid)?)
        }
        Command::CompareSchemes { xis } => {
            let grid = xis.clone().unwrap_or_else(|| cfg.run().xi_grid.clone());
            ("compare-schemes", harness::cmd_compare_schemes(&cfg, &grid)?)
        }
        Command::Verify => {
            let report = harness::cmd_verify(&cfg)?;
            print!("{}", report.render());
            return Ok(if report.passed() { 0 } else { 1 });
        }
    };
    emit(cli, &cfg, name, &table)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
