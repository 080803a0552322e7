use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use serpentine_cli::{commands, ExperimentConfig, Profile};
use serpentine_prc::estimators::Method;
use serpentine_prc::{Error, Result};

#[derive(Parser)]
#[command(name = "serpentine", version, about = "Reservoir-computing pose estimation for a simulated cable-driven arm")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON file merged over the profile preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Master seed for sessions and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Window length H, overriding the config.
    #[arg(long, global = true)]
    window: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the sessions and write their logs.
    Generate,
    /// Train estimators and write checkpoints.
    Train {
        /// prc-mlp, no-load, prc-lin, lstm or all; repeatable or comma separated.
        #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_method)]
        method: Vec<MethodArg>,
        /// Fit the linear readout in closed form with this ridge penalty.
        #[arg(long)]
        ridge: Option<f64>,
    },
    /// Score the analytical baseline and trained checkpoints on the test split.
    Evaluate {
        /// Methods to report (default: all five).
        #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_method)]
        method: Vec<MethodArg>,
    },
    /// Validation loss of the reservoir MLP for several window lengths.
    Sweep {
        /// Window lengths, comma separated (default: from the config).
        #[arg(long = "windows", value_delimiter = ',')]
        windows: Vec<usize>,
    },
}

#[derive(Clone, Copy)]
enum MethodArg {
    All,
    One(Method),
}

fn parse_method(s: &str) -> std::result::Result<MethodArg, String> {
    if s == "all" {
        return Ok(MethodArg::All);
    }
    Method::from_name(s).map(MethodArg::One).ok_or_else(|| {
        let valid: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method '{s}'; valid methods: all, {}", valid.join(", "))
    })
}

fn expand(args: &[MethodArg], all: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = args
        .iter()
        .flat_map(|a| match a {
            MethodArg::All => all.to_vec(),
            MethodArg::One(m) => vec![*m],
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref(), common.profile)?;
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(h) = common.window {
        cfg.dataset.window = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Generate => {
            let summary = commands::generate(&cfg)?;
            for s in &summary.sessions {
                println!("session {:2}  {} steps  {}", s.session, s.steps, s.path.display());
            }
            println!("data hash {}", summary.data_hash);
            Ok(())
        }
        Command::Train { method, ridge } => {
            let methods = expand(&method, &Method::TRAINABLE);
            for s in commands::train(&cfg, &methods, ridge)? {
                let loss = s.best_val_loss.map_or("closed form".to_string(), |l| format!("best val loss {l:.6e}"));
                println!(
                    "{:<8} H={} input dim {}  {} epochs  {}  -> {}",
                    s.method.name(),
                    s.window,
                    s.input_dim,
                    s.epochs,
                    loss,
                    s.checkpoint.display()
                );
            }
            Ok(())
        }
        Command::Evaluate { method } => {
            let methods = expand(&method, &Method::ALL);
            let report = commands::evaluate(&cfg, &methods)?;
            print!("{}", report.table.to_text());
            println!("report hash {}", report.report_hash);
            Ok(())
        }
        Command::Sweep { windows } => {
            let windows = if windows.is_empty() { cfg.sweep_windows.clone() } else { windows };
            let summary = commands::sweep(&cfg, &windows)?;
            print!("{}", summary.result.to_csv());
            for p in summary.result.points.iter().filter(|p| p.diverged) {
                println!("H={} diverged", p.window);
            }
            match summary.result.best_window {
                Some(h) => println!("best H = {h}"),
                None => println!("no window trained successfully"),
            }
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
