use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotctl::config::PipelineConfig;
use rotctl::pipeline::{Pipeline, StageManifest};
use rotctl::Error;

#[derive(Parser, Debug)]
#[command(name = "rotctl", version, about = "Offline model-based RL pipeline for rotation-profile control")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker thread cap (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Artifact root.
    #[arg(long, global = true, default_value = "artifacts")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the shot corpus and its session split.
    GenData,
    /// Fit the profile PCA bases on training frames.
    FitPca,
    /// Train the dynamics ensemble.
    TrainDynamics,
    /// Train one policy (ppo, gcil or td3bc).
    TrainPolicy {
        #[arg(long, default_value = "ppo")]
        algo: String,
    },
    /// Evaluate the configured algorithms on held-out shots.
    Benchmark,
    /// Two-switch tracking experiments.
    SimExperiment,
    /// Export the policy bundle, C source and parity cases.
    Export,
    /// Write the report tables and traces.
    Report,
    /// Every stage in order.
    RunAll,
    /// Print the effective configuration.
    ShowConfig,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Missing(_) => 3,
        Error::Member { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<Option<StageManifest>, Error> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the worker pool: {e}")))?;
    }
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml());
        return Ok(None);
    }
    let p = Pipeline::new(cfg, cli.out);
    let m = match cli.command {
        Command::GenData => p.gen_data()?,
        Command::FitPca => p.fit_pca()?,
        Command::TrainDynamics => p.train_dynamics()?,
        Command::TrainPolicy { algo } => p.train_policy(&algo)?,
        Command::Benchmark => p.benchmark()?,
        Command::SimExperiment => p.sim_experiment()?,
        Command::Export => p.export()?,
        Command::Report => p.report()?,
        Command::RunAll => p.run_all()?,
        Command::ShowConfig => unreachable!(),
    };
    Ok(Some(m))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok(Some(m)) => {
            println!("{}", out.join(format!("{}-{}", m.stage, m.key)).display());
            if !m.summary.is_null() {
                println!("{}", m.summary);
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rotctl: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
