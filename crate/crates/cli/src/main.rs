//! `qssl`: contrastive training with quantum or classical representation
//! networks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qssl::classical_nn::RepresentationKind;
use qssl::data_io::write_synthetic_cifar;
use qssl::qnn::{AnsatzKind, ExecutionMode};
use qssl::run::{
    cmd_ablate, cmd_eval, cmd_probe, cmd_train_ssl, Overrides, Profile, RunConfig, Sweep,
};
use qssl::{Error, Result};

#[derive(Parser)]
#[command(name = "qssl", version, about = "Hybrid quantum-classical contrastive learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Contrastive training; writes checkpoints and metrics.tsv.
    TrainSsl {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from this training checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Print one line per batch.
        #[arg(long)]
        verbose: bool,
    },
    /// Linear probe on one or more checkpoints.
    Probe {
        #[command(flatten)]
        run: RunArgs,
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Classify sampled test images and write a confusion matrix.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        /// Number of test images (default: `eval_images` from the config).
        #[arg(long)]
        n: Option<usize>,
    },
    /// One train + probe run per width or ansatz.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated widths, e.g. 2,4,8.
        #[arg(long, value_delimiter = ',', conflicts_with = "ansatzes")]
        widths: Option<Vec<usize>>,
        /// Comma-separated ansatz kinds, e.g. ring,all.
        #[arg(long, value_delimiter = ',')]
        ansatzes: Option<Vec<String>>,
    },
    /// Write procedurally generated images in the CIFAR-10 binary format.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Records in each of the six files.
        #[arg(long, default_value_t = 10000)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile when no config file is given: desk or paper.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory with the CIFAR-10 binary files.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// exact or shots:N
    #[arg(long)]
    mode: Option<String>,
    /// classical or quantum
    #[arg(long)]
    representation: Option<String>,
    /// ring or all
    #[arg(long)]
    ansatz: Option<String>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    batches: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut config = match (&self.config, &self.profile) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "use either --config or --profile (set `profile` inside the file)".into(),
                ))
            }
            (Some(path), None) => RunConfig::load(path)?,
            (None, Some(p)) => RunConfig::profile(p.parse::<Profile>()?),
            (None, None) => RunConfig::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            dataset: self.dataset.clone(),
            out: self.out.clone(),
            mode: self.mode.as_deref().map(str::parse::<ExecutionMode>).transpose()?,
            representation: self
                .representation
                .as_deref()
                .map(str::parse::<RepresentationKind>)
                .transpose()?,
            ansatz: self.ansatz.as_deref().map(str::parse::<AnsatzKind>).transpose()?,
            width: self.width,
            layers: self.layers,
            batches: self.batches,
        };
        overrides.apply(&mut config)?;
        Ok(config)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| format!("{x:.6}"))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainSsl { run, resume, verbose } => {
            let config = run.resolve()?;
            let out = cmd_train_ssl(&config, resume.as_deref(), &mut |r| {
                if verbose {
                    eprintln!("batch {:>5}  loss {:.6}  mean_hs {}", r.batch, r.loss, opt(r.mean_hs));
                }
            })?;
            if let (Some(first), Some(last)) = (out.records.first(), out.records.last()) {
                println!(
                    "trained {} batches: loss {} -> {}, mean_hs {} -> {}",
                    last.batch,
                    opt(first.loss),
                    opt(last.loss),
                    opt(first.mean_hs),
                    opt(last.mean_hs)
                );
            }
            println!("metrics: {}", out.metrics_path.display());
            println!("checkpoint: {}", out.final_checkpoint.display());
        }
        Command::Probe { run, checkpoints } => {
            let config = run.resolve()?;
            for r in cmd_probe(&config, &checkpoints)? {
                println!(
                    "batch {:>5}  train_acc {:.4}  test_acc {:.4}  encoder {}  probe {}",
                    r.batch,
                    r.train_accuracy,
                    r.test_accuracy,
                    if r.encoder_hash_before == r.encoder_hash_after { "unchanged" } else { "CHANGED" },
                    r.probe_path.display()
                );
            }
        }
        Command::Eval { run, checkpoint, probe, n } => {
            let config = run.resolve()?;
            let n = n.unwrap_or(config.eval_images);
            let ev = cmd_eval(&config, &checkpoint, &probe, n, config.seed)?;
            println!("accuracy {:.4} on {} images", ev.accuracy, ev.confusion.total());
            for c in 0..ev.confusion.classes() {
                println!("  class {c} recall {}", opt(ev.confusion.recall(c)));
            }
        }
        Command::Ablate { run, widths, ansatzes } => {
            let config = run.resolve()?;
            let sweep = match (widths, ansatzes) {
                (Some(w), None) => Sweep::Widths(w),
                (None, Some(a)) => Sweep::Ansatz(
                    a.iter().map(|s| s.parse::<AnsatzKind>()).collect::<Result<_>>()?,
                ),
                _ => return Err(Error::InvalidArgument("give --widths or --ansatzes".into())),
            };
            for r in cmd_ablate(&config, &sweep)? {
                println!(
                    "{:<16} params {:>4}  final_loss {}  final_mean_hs {}  probe_acc {:.4}",
                    r.label,
                    r.representation_params,
                    opt(r.final_loss),
                    opt(r.final_mean_hs),
                    r.probe_accuracy
                );
            }
        }
        Command::MakeSynthetic { out, records, seed } => {
            write_synthetic_cifar(&out, records, seed)?;
            println!("wrote 6 files with {records} records each to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error [{}]: {e}", cat.label());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}
