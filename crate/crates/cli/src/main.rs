use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pinnsformer::config::{preset, RunConfig, SweepAxis, PRESETS};
use pinnsformer::experiment::{evaluate_checkpoint, landscape_analysis, setup, sweep, train_with, Checkpoint};
use pinnsformer::{Execution, Result};

#[derive(Parser)]
#[command(name = "pinnsformer", version, about = "Train and analyse transformer-based physics-informed models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write report, metrics, error grid and checkpoint.
    Train(Common),
    /// Score a checkpoint on the config's test mesh.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Loss landscape along the top two Hessian eigenvectors of a checkpoint.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// One training per combination of axis values.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `axis=v1,v2,...` with axis one of activation, k, dt, arch, seed.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
    },
    /// List the built-in presets, or print one as TOML.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// Run configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; defaults to the config's `out`, else `runs/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the optimizer iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Run batched evaluations on one thread.
    #[arg(long)]
    sequential: bool,
}

impl Common {
    fn load(&self) -> Result<(RunConfig, PathBuf, Execution)> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => unreachable!("clap requires one of them"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.iterations {
            cfg.optimizer.iterations = n;
        }
        cfg.validate()?;
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .unwrap_or_else(|| Path::new("runs").join(&cfg.name));
        let exec = if self.sequential { Execution::Sequential } else { Execution::default() };
        Ok((cfg, out, exec))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let (cfg, out, exec) = common.load()?;
            let s = setup(&cfg)?;
            let report = train_with(&cfg, &s, exec)?;
            report.write(&out, &s.problem)?;
            println!(
                "{}: {} after {} iterations, loss {:.6e}, rMAE {:.6e}, rRMSE {:.6e}, {:.1}s",
                cfg.name,
                report.status.name(),
                report.history.len() - 1,
                report.final_loss(),
                report.rmae(),
                report.rrmse(),
                report.seconds
            );
            println!("wrote {}", out.display());
        }
        Command::Eval { common, checkpoint } => {
            let (cfg, out, exec) = common.load()?;
            let result = evaluate_checkpoint(&cfg, &Checkpoint::load(&checkpoint)?, exec)?;
            result.write(&out)?;
            for m in &result.metrics {
                println!("{}: rMAE {:.6e}, rRMSE {:.6e}", m.field, m.rmae, m.rrmse);
            }
            println!("wrote {} error-grid rows to {}", result.rows, out.display());
        }
        Command::Landscape { common, checkpoint } => {
            let (cfg, out, exec) = common.load()?;
            let report = landscape_analysis(&cfg, &Checkpoint::load(&checkpoint)?, exec)?;
            report.write(&out)?;
            println!(
                "eigenvalues {:.6e}, {:.6e}; center loss {:.6e}; Lipschitz estimate {:.6e}",
                report.grid.eigenvalues[0], report.grid.eigenvalues[1], report.center_loss, report.lipschitz
            );
            println!("wrote {}", out.display());
        }
        Command::Sweep { common, axes } => {
            let (cfg, out, exec) = common.load()?;
            let axes = axes.iter().map(|a| parse_axis(a)).collect::<Result<Vec<_>>>()?;
            let table = sweep(&cfg, &axes, exec)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("sweep.csv"), table.to_csv())?;
            std::fs::write(out.join("config.toml"), cfg.to_toml())?;
            print!("{}", table.to_csv());
            println!("wrote {}", out.display());
        }
        Command::Presets { name: None } => PRESETS.iter().for_each(|p| println!("{p}")),
        Command::Presets { name: Some(name) } => print!("{}", preset(&name)?.to_toml()),
    }
    Ok(())
}

fn parse_axis(spec: &str) -> Result<(SweepAxis, Vec<String>)> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| pinnsformer::Error::Config(format!("axis `{spec}` should look like name=v1,v2")))?;
    let values: Vec<String> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
    Ok((name.trim().parse()?, values))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
