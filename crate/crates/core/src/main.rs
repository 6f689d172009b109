use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use playbook::error::Result;
use playbook::runner::{parse_pairs, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "playbook",
    version,
    about = "Simulated asynchronous batch Bayesian optimisation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all seeds and write per-seed CSVs plus aggregate.json.
    Run(ConfigArgs),
    /// Print the fully resolved config without running anything.
    ShowConfig(ConfigArgs),
}

/// Flags override values read from `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    /// sync or async.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Idle workers required before an asynchronous selection.
    #[arg(long)]
    c: Option<usize>,
    /// Post-design completions per seed.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    max_sim_time: Option<f64>,
    /// Seeds, e.g. `0-29` or `1,3,5-7`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    #[arg(long)]
    ts_samples: Option<usize>,
    /// `half-normal[:scale]`, `constant:<v>` or `replay:<v1>/<v2>/...`.
    #[arg(long)]
    runtime: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| playbook::error::Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                parse_pairs(&text)?
            }
            None => BTreeMap::new(),
        };
        let mut set = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.insert(key.to_string(), v);
            }
        };
        let show = |v: Option<f64>| v.map(|x| x.to_string());
        set("problem", self.problem.clone());
        set("strategy", self.strategy.clone());
        set("mode", self.mode.clone());
        set("k", self.k.map(|v| v.to_string()));
        set("c", self.c.map(|v| v.to_string()));
        set("n_steps", self.steps.map(|v| v.to_string()));
        set("max_sim_time", show(self.max_sim_time));
        set("seeds", self.seeds.clone());
        set("kappa", show(self.kappa));
        set("gamma", show(self.gamma));
        set("p", show(self.p));
        set("ts_samples", self.ts_samples.map(|v| v.to_string()));
        set("runtime", self.runtime.clone());
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        ExperimentConfig::from_pairs(pairs)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::ShowConfig(args) => args.resolve().map(|c| print!("{}", c.to_config_string())),
        Command::Run(args) => args.resolve().and_then(|c| {
            let out = run_experiment(&c)?;
            for cp in &out.aggregate.checkpoints {
                log::info!(
                    "step {}: mean log10 regret {:.3} (std {:.3}, {} seeds)",
                    cp.step,
                    cp.mean,
                    cp.std,
                    cp.n_seeds
                );
            }
            log::info!(
                "wrote {} seed files and {}",
                out.csv_paths.len(),
                out.aggregate_path.display()
            );
            Ok(())
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
