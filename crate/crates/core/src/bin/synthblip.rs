use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use synthblip::harness::{
    self, EstimatorKind, ExperimentConfig, HarnessError, WeightsKind,
};
use synthblip::io;
use synthblip::oracle::DEFAULT_ENUMERATION_CAP;

#[derive(Parser)]
#[command(name = "synthblip", version, about = "Synthetic blip effects: simulate, estimate, sweep, validate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). Defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long, global = true, value_enum)]
    weights: Option<WeightsArg>,
    /// Largest `|A|^T` the oracle and SI census will enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_ENUMERATION_CAP)]
    max_enum: usize,
    /// Read an existing panel directory instead of simulating one.
    #[arg(long, global = true)]
    panel: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a panel and write it with its factors and noise log.
    Simulate,
    /// Fit an estimator and score its answers against the oracle.
    Estimate,
    /// Sweep donor multiplicity and noise; writes tidy CSV.
    Sweep,
    /// Check a panel and list its donor sets.
    Validate,
    /// Enumerate ground-truth counterfactuals for every unit and sequence.
    Oracle,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Si,
    Ltv,
    Lti,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightsArg {
    Pcr,
    Oracle,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = Some(out.clone());
    }
    if let Some(e) = cli.estimator {
        cfg.estimator.kind = Some(match e {
            EstimatorArg::Si => EstimatorKind::Si,
            EstimatorArg::Ltv => EstimatorKind::Ltv,
            EstimatorArg::Lti => EstimatorKind::Lti,
        });
    }
    if let Some(w) = cli.weights {
        cfg.estimator.weights = match w {
            WeightsArg::Pcr => WeightsKind::Pcr,
            WeightsArg::Oracle => WeightsKind::Oracle,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load_config(cli)?;
    let out = cfg.output.dir.as_deref();
    let panel_dir = cli.panel.as_deref();
    match cli.command {
        Command::Simulate => {
            let s = harness::run_simulate(&cfg, out)?;
            println!(
                "simulated {} units, T={}, T_obs={}",
                s.panel.n_units(),
                s.panel.horizon(),
                s.panel.obs_horizon()
            );
        }
        Command::Estimate => {
            let loaded = harness::panel_for(&cfg, panel_dir)?;
            let outcome = harness::estimate_loaded(&cfg, &loaded, cli.max_enum)?;
            let r = &outcome.report;
            println!(
                "{} with {} weights: {} queries, {} scored, mean |err| {:.3e}, rmse {:.3e}, max {:.3e}, {} deficits",
                r.estimator,
                r.weights,
                r.rows.len(),
                r.aggregates.count,
                r.aggregates.mean_abs,
                r.aggregates.rmse,
                r.aggregates.max_abs,
                r.deficits.len()
            );
            if let Some(dir) = out {
                harness::write_estimate(dir, &cfg, &loaded, &outcome)?;
            }
        }
        Command::Sweep => {
            let report = harness::run_sweep(&cfg)?;
            for c in &report.cells {
                println!(
                    "{:>4} M={:<5} sigma={:<6} rmse={:.4e} reps={} failures={}",
                    c.estimator,
                    c.multiplicity,
                    c.sigma,
                    c.rmse(),
                    c.replications,
                    c.failures.len()
                );
            }
            if let Some(dir) = out {
                harness::write_sweep(dir, &report)?;
            }
        }
        Command::Validate => {
            let loaded = harness::panel_for(&cfg, panel_dir)?;
            let p = &loaded.panel;
            println!("panel valid: {} units, T={}, T_obs={}", p.n_units(), p.horizon(), p.obs_horizon());
            let listing = harness::donor_listing(p, cli.max_enum);
            match out {
                Some(dir) => {
                    io::create_dir(dir)?;
                    io::write_text(&dir.join("donors.txt"), &listing)?;
                }
                None => print!("{listing}"),
            }
        }
        Command::Oracle => {
            let loaded = harness::panel_for(&cfg, panel_dir)?;
            let table = harness::oracle_table(&loaded, cli.max_enum)?;
            match out {
                Some(dir) => write_oracle(dir, &table)?,
                None => table
                    .write_csv(std::io::stdout().lock())
                    .map_err(|e| HarnessError::Usage(e.to_string()))?,
            }
        }
    }
    Ok(())
}

fn write_oracle(dir: &Path, table: &synthblip::oracle::OracleTable) -> Result<(), HarnessError> {
    io::create_dir(dir)?;
    let path = dir.join("oracle.csv");
    let file = std::fs::File::create(&path).map_err(|source| io::IoError::File {
        path: path.clone(),
        source,
    })?;
    table
        .write_csv(file)
        .map_err(|source| io::IoError::Csv { path, source })?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
