use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use icnn_cli::{cmd_check, cmd_complete, cmd_export_lp, cmd_multilabel, cmd_rl};
use icnn_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "icnn",
    about = "Input-convex neural networks: experiments, checks, and exports",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key = value config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (mandatory here or in the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for metrics.csv, config.resolved, checkpoint.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inference solver for reported predictions.
    #[arg(long, value_parser = ["bundle", "gradient"])]
    solver: Option<String>,
    /// Bundle iterations K.
    #[arg(long)]
    k: Option<usize>,
    /// Extra config overrides as KEY=VALUE.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the seeded property suite; exit 0 iff every check passes.
    Check {
        /// Only run checks whose name contains this substring.
        #[arg(long, default_value = "")]
        filter: String,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
    /// Multi-label classification: feedforward baseline vs PICNN.
    Multilabel {
        #[command(flatten)]
        common: CommonArgs,
        /// ARFF dataset path (labels last); alternative to --synthetic.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of trailing label attributes in the ARFF file.
        #[arg(long)]
        label_count: Option<usize>,
        /// Use the built-in separable synthetic dataset.
        #[arg(long)]
        synthetic: bool,
    },
    /// Image completion: predict right image halves from left halves.
    Complete {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of PGM files or an image CSV.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Q-learning on a built-in toy environment.
    Rl {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = ["pointmass", "bandit"])]
        env: Option<String>,
    },
    /// Export the exact-inference LP of a relu FICNN checkpoint.
    ExportLp {
        /// Checkpoint JSON to export.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for model.lp.
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::new(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set needs KEY=VALUE, got '{kv}'")))?;
        cfg.set(k.trim(), v.trim());
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(out) = &common.out {
        cfg.set("out", out.display().to_string());
    }
    if let Some(solver) = &common.solver {
        cfg.set("solver", solver.clone());
    }
    if let Some(k) = common.k {
        cfg.set("k", k.to_string());
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    match Cli::parse().cmd {
        Cmd::Check { filter, seed } => cmd_check(&filter, seed),
        Cmd::Multilabel {
            common,
            data,
            label_count,
            synthetic,
        } => {
            let mut cfg = build_config(&common)?;
            if let Some(data) = data {
                cfg.set("data", data.display().to_string());
            }
            if let Some(c) = label_count {
                cfg.set("label_count", c.to_string());
            }
            if synthetic {
                cfg.set("synthetic", "true");
            }
            cmd_multilabel(&cfg)
        }
        Cmd::Complete { common, data } => {
            let mut cfg = build_config(&common)?;
            if let Some(data) = data {
                cfg.set("data", data.display().to_string());
            }
            cmd_complete(&cfg)
        }
        Cmd::Rl { common, env } => {
            let mut cfg = build_config(&common)?;
            if let Some(env) = env {
                cfg.set("env", env);
            }
            cmd_rl(&cfg)
        }
        Cmd::ExportLp { checkpoint, out } => {
            let mut cfg = RunConfig::new();
            cfg.set("checkpoint", checkpoint.display().to_string());
            cfg.set("out", out.display().to_string());
            cmd_export_lp(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("icnn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
