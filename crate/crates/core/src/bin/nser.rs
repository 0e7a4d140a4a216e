use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nser_core::envs::{EnvId, EnvSpec};
use nser_core::harness::{
    comparison_table, run_dir, run_experiment, summarize, sweep, write_run, AgentKind, Budget, ExperimentConfig, Strategy,
};
use nser_core::llm_client::ProposerKind;
use nser_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nser", version, about = "Replay strategy experiments with rule-guided trajectory sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment for each selected seed.
    Run(Overrides),
    /// Run every strategy for every seed and print a comparison table.
    Sweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated strategies; all five when absent.
        #[arg(long, value_delimiter = ',')]
        strategies: Vec<Strategy>,
        /// Concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-run an NSER experiment answering proposer queries from a transcript.
    ReplayTranscript {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        transcript: PathBuf,
    },
    /// Parse and validate a configuration file, then print it normalized.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    env: Option<EnvId>,
    #[arg(long)]
    agent: Option<AgentKind>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, conflicts_with = "steps")]
    episodes: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.env) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(env)) => ExperimentConfig::new(EnvSpec::new(env), Strategy::Uer, Budget::EnvSteps(20_000)),
            (None, None) => return Err(Error::Config("either --config or --env is required".into())),
        };
        if let Some(env) = self.env {
            if env != cfg.env.env_id {
                cfg.env = EnvSpec::new(env);
            }
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        if let Some(a) = self.agent {
            cfg.agent_kind = a;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(n) = self.episodes {
            cfg.total_episodes = Some(n);
            cfg.total_env_steps = None;
        }
        if let Some(n) = self.steps {
            cfg.total_env_steps = Some(n);
            cfg.total_episodes = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run_all(cfg: &ExperimentConfig) -> Result<()> {
    for &seed in &cfg.seeds {
        let out = run_experiment(cfg, seed)?;
        let dir = run_dir(&cfg.output_dir, &out.result);
        write_run(&out, &dir)?;
        let r = &out.result;
        println!(
            "{} {} {} seed {}: final return {:.4} ± {:.4}, AUC {:.2}, steps-to-tau {}, N_conv {}, {:.1}s -> {}",
            r.env,
            r.agent_kind,
            r.strategy,
            r.seed,
            r.final_return_mean,
            r.final_return_std,
            r.auc,
            r.steps_to_tau,
            r.n_conv,
            r.wall_clock_total,
            dir.display()
        );
    }
    Ok(())
}

fn run_sweep(cfg: &ExperimentConfig, strategies: &[Strategy], jobs: usize) -> Result<()> {
    let strategies = if strategies.is_empty() { Strategy::ALL.to_vec() } else { strategies.to_vec() };
    let results = sweep(cfg, &strategies, &cfg.output_dir, jobs)?;
    let summaries = summarize(&results);
    let table = comparison_table(&summaries);
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("comparison.md"), &table)?;
    std::fs::write(cfg.output_dir.join("comparison.json"), serde_json::to_string_pretty(&summaries)?)?;
    print!("{table}");
    Ok(())
}

fn replay_transcript(overrides: &Overrides, transcript: &Path) -> Result<()> {
    let mut cfg = overrides.resolve()?;
    cfg.strategy = Strategy::Nser;
    let mut nser = cfg.nser_settings();
    nser.proposer.kind = ProposerKind::Transcript;
    nser.proposer.transcript_path = Some(transcript.to_path_buf());
    cfg.nser = Some(nser);
    cfg.validate()?;
    run_all(&cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(o) => run_all(&o.resolve()?),
        Command::Sweep { overrides, strategies, jobs } => run_sweep(&overrides.resolve()?, &strategies, jobs),
        Command::ReplayTranscript { overrides, transcript } => replay_transcript(&overrides, &transcript),
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            cfg.validate()?;
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
