use std::path::PathBuf;
use std::process::ExitCode;

use bep_core::data::PrototypeTaskConfig;
use bep_core::frames::FrameSearchConfig;
use bep_core::run::{self, AxisSpec, RunConfig, SplitName};
use bep_core::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Binary error propagation: train and evaluate integer-only binary networks.
#[derive(Parser, Debug)]
#[command(name = "bep", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model from a TOML run configuration.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on the configured data.
    Eval {
        /// Checkpoint written by `train`.
        checkpoint: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Print the confusion matrix.
        #[arg(long)]
        confusion: bool,
    },
    /// Train over a grid of one or two axes and several seeds; writes CSV.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// `name=v1,v2,...`; names: nu, r, p_r, bits, gamma0, window, horizon.
        #[arg(long = "axis", required = true)]
        axes: Vec<String>,
        /// Seeds per grid point, counted up from the run seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        /// CSV destination; stdout if absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Search a prototype frame and write it to a file.
    MakeFrame {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u32,
        #[arg(long, default_value_t = FrameSearchConfig::DEFAULT_ALPHA)]
        alpha: f64,
        /// Proposal budget; defaults to 200·C·D.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Write the random-prototypes task as train.csv and test.csv.
    GenData {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration; built-in defaults if absent.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `hyper.nu=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    p_r: Option<f64>,
    /// Weight precision B.
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory for metrics and checkpoints.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut o = self.set.clone();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push(format!("{k}={v}"));
            }
        };
        push("seed", self.seed.map(|v| v.to_string()));
        push("hyper.epochs", self.epochs.map(|v| v.to_string()));
        push("hyper.nu", self.nu.map(|v| format!("{v:?}")));
        push("hyper.r", self.r.map(|v| format!("{v:?}")));
        push("hyper.p_r", self.p_r.map(|v| format!("{v:?}")));
        push("hyper.bits", self.bits.map(|v| v.to_string()));
        push("hyper.batch_size", self.batch_size.map(|v| v.to_string()));
        push("hyper.horizon", self.horizon.map(|v| v.to_string()));
        let mut cfg = RunConfig::load(self.config.as_deref(), &o)?;
        if let Some(d) = &self.out {
            cfg.out_dir = Some(d.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct TaskArgs {
    #[arg(long, default_value_t = 20_000)]
    n_train: usize,
    #[arg(long, default_value_t = 3_000)]
    n_test: usize,
    #[arg(long, default_value_t = 1000)]
    input_dim: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 0.46)]
    flip_p: f64,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Validation,
    Test,
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Validation => SplitName::Validation,
            SplitArg::Test => SplitName::Test,
        }
    }
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("BEP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| Error::Config(format!("BEP_THREADS={v:?} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Train { run } => {
            let cfg = run.resolve()?;
            let s = run::cmd_train(&cfg)?;
            for r in &s.records {
                println!(
                    "epoch {:>3}  train_error {}  validation {:.4}  test {:.4}  groups {:?}",
                    r.epoch,
                    r.train_error.map_or("-".to_string(), |e| format!("{e:.4}")),
                    r.validation_accuracy,
                    r.test_accuracy,
                    r.group_sizes
                );
            }
            let (c, t, e) = s.best_validation;
            println!("best validation {c}/{t} at epoch {e}");
            println!("final test accuracy {:.4}", s.final_test.accuracy());
        }
        Command::Eval {
            checkpoint,
            run,
            split,
            confusion,
        } => {
            let cfg = run.resolve()?;
            let rep = run::cmd_eval(&checkpoint, &cfg, split.into())?;
            println!(
                "accuracy {:.4} ({}/{})",
                rep.accuracy(),
                rep.correct,
                rep.total
            );
            println!("mean margin {:.4}", rep.mean_margin());
            if confusion {
                for row in &rep.confusion {
                    let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
                    println!("{}", cells.join(""));
                }
            }
        }
        Command::Sweep {
            run,
            axes,
            seeds,
            csv,
        } => {
            let cfg = run.resolve()?;
            let axes = axes
                .iter()
                .map(|a| a.parse())
                .collect::<Result<Vec<AxisSpec>>>()?;
            let rows = run::cmd_sweep(&cfg, &axes, seeds)?;
            match csv {
                Some(p) => {
                    let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
                    run::write_sweep_csv(f, &axes, &rows)?;
                }
                None => run::write_sweep_csv(std::io::stdout().lock(), &axes, &rows)?,
            }
        }
        Command::MakeFrame {
            classes,
            dim,
            seed,
            alpha,
            iterations,
            out,
        } => {
            let mut fc = FrameSearchConfig::with_defaults(classes, dim, seed);
            fc.alpha = alpha;
            if let Some(it) = iterations {
                fc.iterations = it;
            }
            let frame = run::cmd_make_frame(&fc, &out)?;
            let max_off = frame.off_diagonal().into_iter().max().unwrap_or(0);
            println!(
                "wrote {}×{} frame, max off-diagonal {max_off}",
                classes, dim
            );
        }
        Command::GenData { task, out } => {
            let cfg = PrototypeTaskConfig {
                n_train: task.n_train,
                n_test: task.n_test,
                input_dim: task.input_dim,
                classes: task.classes,
                flip_p: task.flip_p,
                steps: task.steps,
                seed: task.seed,
            };
            let (a, b) = run::cmd_gen_data(&cfg, &out)?;
            println!("wrote {} and {}", a.display(), b.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
