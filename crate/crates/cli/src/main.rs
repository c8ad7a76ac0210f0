use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcp_mmwave::analytical::Evaluator;
use pcp_mmwave::model::AssociationModel;
use pcp_mmwave_cli::config::{parse_config, RunConfig};
use pcp_mmwave_cli::presets::{figure, FIGURES};
use pcp_mmwave_cli::sweep::{
    format_sig, parse_spec_str, run_sweep, write_csv, Axis, Engine, Quantity, RunOptions, SweepSpec,
};
use pcp_mmwave_cli::validate::validate;
use pcp_mmwave_cli::CliError;

/// Coverage and area spectral efficiency of clustered D2D mmWave networks.
#[derive(Parser)]
#[command(name = "pcp-mmwave", version)]
struct Cli {
    /// Network configuration file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every Monte Carlo estimate.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Monte Carlo trials per estimate [default: 100000, validate: 20000].
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file [default: stdout].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PointArgs {
    /// Comma-separated association models.
    #[arg(long, value_delimiter = ',', default_values_t = AssociationModel::ALL)]
    models: Vec<AssociationModel>,
    /// Comma-separated engines.
    #[arg(long, value_delimiter = ',', default_value = "analytical")]
    engines: Vec<String>,
    /// SINR threshold in dB [default: from the configuration].
    #[arg(long, allow_hyphen_values = true)]
    gamma_db: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// SINR coverage probability at one threshold.
    Coverage(PointArgs),
    /// Area spectral efficiency at one threshold, in bit/s/Hz/m².
    Ase(PointArgs),
    /// Parameter sweep written as CSV.
    Sweep {
        /// Built-in figure preset.
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        figure: Option<String>,
        /// Sweep description file.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Run the self-checks; exits with 1 if any fails.
    Validate {
        /// Multiplies every tolerance.
        #[arg(long, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
    /// Mean number of active transmitters that maximizes the ASE.
    OptimizeS {
        #[arg(long, value_delimiter = ',', default_values_t = AssociationModel::ALL)]
        models: Vec<AssociationModel>,
        /// Analytical engine to optimize.
        #[arg(long, default_value = "analytical")]
        engine: String,
        #[arg(long, allow_hyphen_values = true)]
        gamma_db: Option<f64>,
    },
}

const DEFAULT_TRIALS: u64 = 100_000;
const DEFAULT_VALIDATE_TRIALS: u64 = 20_000;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_error(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn write_all(cli: &Cli, text: &[u8]) -> Result<(), CliError> {
    let target = cli.out.as_deref().unwrap_or(Path::new("<stdout>"));
    let mut w = output(cli.out.as_deref())?;
    w.write_all(text).and_then(|_| w.flush()).map_err(|e| io_error(target, e))
}

fn parse_engines(names: &[String]) -> Result<Vec<Engine>, CliError> {
    names.iter().map(|s| s.trim().parse()).collect()
}

fn run_rows(cli: &Cli, spec: &SweepSpec, trials: u64) -> Result<ExitCode, CliError> {
    let ev = Evaluator::default();
    let rows = run_sweep(spec, &RunOptions { seed: cli.seed, trials }, &ev)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).expect("writing to memory");
    write_all(cli, &buf)?;
    let failed: Vec<_> = rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        eprintln!(
            "warning: {} {} at {}: {}",
            r.model,
            r.engine,
            format_sig(r.axis_value),
            r.error.as_deref().unwrap_or("")
        );
    }
    if failed.iter().any(|r| r.non_convergent) {
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    let base = match &cli.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    let trials = cli.trials.unwrap_or(DEFAULT_TRIALS);
    match &cli.command {
        Command::Coverage(a) | Command::Ase(a) => {
            let quantity = if matches!(cli.command, Command::Ase(_)) {
                Quantity::Ase
            } else {
                Quantity::Coverage
            };
            let gamma = a.gamma_db.unwrap_or(base.gamma_th_db);
            let mut spec =
                SweepSpec::new(Axis::GammaThDb, vec![gamma], a.models.clone(), parse_engines(&a.engines)?).with_quantity(quantity);
            spec.base = base;
            run_rows(cli, &spec, trials)
        }
        Command::Sweep { figure: id, spec } => {
            let spec = match (id, spec) {
                (Some(id), _) => figure(id, &base).ok_or_else(|| {
                    CliError::Usage(format!("unknown figure `{id}`; available: {}", FIGURES.join(", ")))
                })?,
                (None, Some(path)) => {
                    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
                    parse_spec_str(&text, &base)?
                }
                (None, None) => return Err(CliError::Usage("give --figure or --spec".into())),
            };
            run_rows(cli, &spec, trials)
        }
        Command::Validate { tolerance_scale } => {
            let report = validate(&base, cli.seed, cli.trials.unwrap_or(DEFAULT_VALIDATE_TRIALS), *tolerance_scale)?;
            write_all(cli, report.render().as_bytes())?;
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::OptimizeS {
            models,
            engine,
            gamma_db,
        } => {
            let engine: Engine = engine.parse()?;
            if !engine.is_upper_bound() {
                return Err(CliError::Usage(format!(
                    "optimize-s needs an analytical engine, got `{engine}`"
                )));
            }
            let gamma_db = gamma_db.unwrap_or(base.gamma_th_db);
            let ev = Evaluator::default();
            let mut text = String::from("model,engine,gamma_th_db,mean_active_opt,ase\n");
            for &model in models {
                // The single-point spec reuses the sweep's engine dispatch.
                let mut spec = SweepSpec::new(Axis::MeanActive, vec![1.0], vec![model], vec![engine])
                    .with_quantity(Quantity::Ase);
                spec.base = base;
                spec.base.gamma_th_db = gamma_db;
                let mut best: Option<(u32, f64)> = None;
                for s in 1..=base.network.cluster_tx_count {
                    spec.values = vec![s as f64];
                    let row = run_sweep(&spec, &RunOptions { seed: cli.seed, trials: 1 }, &ev)?.remove(0);
                    if let Some(e) = row.error {
                        return Err(CliError::Usage(format!("{model} at mean_active = {s}: {e}")));
                    }
                    if best.is_none_or(|(_, a)| row.value > a) {
                        best = Some((s, row.value));
                    }
                }
                let (s, a) = best.expect("at least one candidate");
                text.push_str(&format!("{model},{engine},{},{s},{}\n", format_sig(gamma_db), format_sig(a)));
            }
            write_all(cli, text.as_bytes())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
