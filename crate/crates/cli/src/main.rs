use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rsma360::experiment::{
    load_checkpoints, run_eval, run_fit_quality, run_metrics, run_trace_synth, run_train, write_metric_csv,
    ExperimentConfig, ExperimentError, SweepKind,
};
use rsma360::rl::Checkpoint;
use rsma360::rsma::Scheme;

#[derive(Parser)]
#[command(name = "rsma360", version, about = "RSMA panoramic video semantic-stream simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these schemes (repeatable).
    #[arg(long)]
    scheme: Vec<Scheme>,
    #[arg(long)]
    workers: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, ExperimentError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if !self.scheme.is_empty() {
            cfg.schemes = self.scheme.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy per scheme; writes checkpoints, logs and a manifest.
    Train(RunArgs),
    /// Deterministic evaluation of trained checkpoints at the configured settings.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint files; defaults to `checkpoint_<scheme>.json` in the output directory.
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
    },
    /// Evaluate checkpoints across parameter sweeps.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// kappa, t_max, q_min or bandwidth (repeatable); all when omitted.
        #[arg(long)]
        sweep: Vec<SweepKind>,
    },
    /// WS-PSNR / WS-SSIM for two images or two directories of same-named images.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a polynomial quality surrogate to a sample CSV.
    FitQuality {
        samples: PathBuf,
        #[arg(long, default_value_t = 2)]
        degree: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic head-movement traces.
    TraceSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[arg(long, default_value_t = 60.0)]
        duration: f64,
        #[arg(long, default_value_t = 1.0 / 30.0)]
        dt: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Print the default experiment configuration.
    Defaults,
}

fn checkpoints(cfg: &ExperimentConfig, paths: &[PathBuf]) -> Result<Vec<Checkpoint>, ExperimentError> {
    if paths.is_empty() {
        return load_checkpoints(cfg, &cfg.out_dir);
    }
    paths
        .iter()
        .map(|p| Checkpoint::load(p).map_err(|e| ExperimentError::Data(format!("{}: {e}", p.display()))))
        .collect()
}

fn write_out(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), ExperimentError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| ExperimentError::Data(e.to_string()))?;
    std::fs::write(path, buf).map_err(|e| ExperimentError::Data(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Train(args) => {
            let cfg = args.resolve()?;
            let every = (cfg.ppo.epochs / 10).max(1);
            let arts = run_train(&cfg, &cfg.out_dir, |scheme, row| {
                if (row.episode + 1) % every == 0 {
                    eprintln!("[{scheme}] episode {:>5}  mean reward {:.4}", row.episode, row.mean_reward);
                }
            })?;
            for a in arts {
                println!("{}: {} / {}", a.scheme, a.checkpoint.display(), a.log.display());
            }
        }
        Command::Eval { run, checkpoint } => {
            let cfg = run.resolve()?;
            let cks = checkpoints(&cfg, &checkpoint)?;
            for p in run_eval(&cfg, &cks, &[None], &cfg.out_dir)? {
                println!(
                    "{}: reward {:.4}  delay {:.4}  quality {:.4}",
                    p.scheme,
                    p.summary.mean_reward,
                    p.summary.mean_delay_score(),
                    p.summary.mean_quality_score()
                );
            }
        }
        Command::Sweep { run, checkpoint, sweep } => {
            let cfg = run.resolve()?;
            let cks = checkpoints(&cfg, &checkpoint)?;
            let kinds: Vec<Option<SweepKind>> = if sweep.is_empty() {
                SweepKind::ALL.iter().copied().map(Some).collect()
            } else {
                sweep.into_iter().map(Some).collect()
            };
            for p in run_eval(&cfg, &cks, &kinds, &cfg.out_dir)? {
                let kind = p.sweep.map(|k| k.key()).unwrap_or("base");
                println!("{} {kind}={}: total {:.4}", p.scheme, p.value, p.summary.mean_total());
            }
        }
        Command::Metrics { a, b, out } => {
            let rows = run_metrics(&a, &b)?;
            match out {
                Some(p) => write_out(&p, |w| write_metric_csv(w, &rows))?,
                None => write_metric_csv(std::io::stdout().lock(), &rows)
                    .map_err(|e| ExperimentError::Data(e.to_string()))?,
            }
        }
        Command::FitQuality { samples, degree, out } => {
            let model = run_fit_quality(&samples, degree)?;
            model
                .save(&out)
                .map_err(|e| ExperimentError::Data(format!("{}: {e}", out.display())))?;
            if let Some(r) = model.fit_residual() {
                println!("fitted {} surrogate, degree {degree}, rms residual {r:.4} dB", model.kind);
            }
        }
        Command::TraceSynth {
            out,
            users,
            duration,
            dt,
            seed,
        } => {
            for p in run_trace_synth(&out, users, duration, dt, seed)? {
                println!("{}", p.display());
            }
        }
        Command::Defaults => {
            let text = serde_json::to_string_pretty(&ExperimentConfig::default()).expect("config serialises");
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
