use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nornet::model::{LayerFamily, Task};
use nornet_cli::config::RunConfig;
use nornet_cli::{
    cmd_budget, cmd_budget_table, cmd_eval, cmd_gradcheck, cmd_sweep, cmd_train, exit, CheckHead, CliError, CliResult,
    EvalSplit, GradCheckSpec, RunSpec,
};

#[derive(Parser)]
#[command(name = "nornet", version, about = "Train and inspect network-of-recurrent-neuron models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write checkpoint, metrics and resolved config.
    Train(RunArgs),
    /// Evaluate the checkpoint of a finished run directory.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Solve the hidden size that meets a parameter budget.
    Budget {
        #[arg(long, value_parser = parse_task, required_unless_present = "table")]
        task: Option<Task>,
        #[arg(long, value_parser = parse_family, required_unless_present = "table")]
        family: Option<LayerFamily>,
        #[arg(long, required_unless_present = "table")]
        budget: Option<usize>,
        /// Print the sizing table of every task, budget and family.
        #[arg(long)]
        table: bool,
        /// With --table, print comma-separated rows.
        #[arg(long, requires = "table")]
        csv: bool,
    },
    /// Compare tape gradients with finite differences on a small instance.
    Gradcheck {
        #[arg(long, value_parser = parse_family, default_value = "ma")]
        family: LayerFamily,
        #[arg(long, default_value_t = 4)]
        input_dim: usize,
        #[arg(long, default_value_t = 4)]
        hidden: usize,
        #[arg(long, default_value_t = 3)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "none")]
        head: HeadArg,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Train over several seeds (and families) and report mean and std.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Comma-separated families; defaults to the configured one.
        #[arg(long, value_delimiter = ',', value_parser = parse_family)]
        families: Vec<LayerFamily>,
        /// Runs trained at the same time.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long, value_parser = parse_family)]
    family: Option<LayerFamily>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl RunArgs {
    fn spec(&self) -> CliResult<RunSpec> {
        let (mut cfg, origin) = match &self.config {
            Some(path) => (RunConfig::load(path)?, path.clone()),
            None => (RunConfig::default(), PathBuf::from("command line")),
        };
        cfg.task = self.task.or(cfg.task);
        if let Some(f) = self.family {
            cfg.model.layer = Some(f);
        }
        if let Some(b) = self.budget {
            cfg.model.budget = Some(b);
            cfg.model.hidden = None;
        }
        cfg.model.hidden = self.hidden.or(cfg.model.hidden);
        cfg.train.seed = self.seed.or(cfg.train.seed);
        cfg.train.max_epochs = self.epochs.or(cfg.train.max_epochs);
        cfg.train.threads = self.threads.or(cfg.train.threads);
        let d = &mut cfg.data;
        for (slot, flag) in [
            (&mut d.train, &self.train),
            (&mut d.dev, &self.dev),
            (&mut d.test, &self.test),
            (&mut d.embeddings, &self.embeddings),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        if self.train.is_some() {
            d.synthetic = None;
        }
        RunSpec::new(&cfg, origin, &self.out)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    None,
    Softmax,
    Crf,
}

fn parse_task(s: &str) -> Result<Task, String> {
    Task::from_name(s).ok_or_else(|| format!("unknown task {s:?} (sst, trec, conll)"))
}

fn parse_family(s: &str) -> Result<LayerFamily, String> {
    LayerFamily::from_name(s).ok_or_else(|| format!("unknown family {s:?} (irnn, gru, lstm, ma, ma2, ms, ss, gate)"))
}

fn run(cli: Cli) -> CliResult<i32> {
    match cli.command {
        Command::Train(args) => {
            let spec = args.spec()?;
            let report = cmd_train(&spec)?;
            let o = &report.outcome;
            for r in &o.log {
                println!("epoch {:>3}  loss {:.6}  dev {:.4}  lr {:.6}", r.epoch, r.train_loss, r.dev_metric, r.lr);
            }
            if let Some(p) = o.pad_len {
                println!("pad_len {p}");
            }
            println!("params {}  best epoch {}  dev {:.4}", report.param_count, o.best_epoch, o.best_metric);
            if let Some(t) = report.test_metric {
                println!("test {t:.4}");
            }
            println!("wrote {}", spec.out_dir.display());
        }
        Command::Eval { run, split } => {
            let split = match split {
                SplitArg::Train => EvalSplit::Train,
                SplitArg::Dev => EvalSplit::Dev,
                SplitArg::Test => EvalSplit::Test,
            };
            println!("{:.6}", cmd_eval(&run, split)?);
        }
        Command::Budget {
            task,
            family,
            budget,
            table,
            csv,
        } => {
            if table {
                let t = cmd_budget_table()?;
                if csv {
                    print!("{}", t.to_csv());
                } else {
                    print!("{t}");
                }
            } else {
                let s = cmd_budget(task.expect("required"), family.expect("required"), budget.expect("required"))?;
                println!("{s}");
            }
        }
        Command::Gradcheck {
            family,
            input_dim,
            hidden,
            steps,
            seed,
            head,
            inject_fault,
        } => {
            let head = match head {
                HeadArg::None => CheckHead::None,
                HeadArg::Softmax => CheckHead::Softmax,
                HeadArg::Crf => CheckHead::Crf,
            };
            let spec = GradCheckSpec {
                family,
                input_dim,
                hidden,
                steps,
                seed,
                head,
                inject_fault,
            };
            let run = cmd_gradcheck(&spec)?;
            println!("{} d={input_dim} h={hidden} T={steps} seed={}", family.label(), run.seed);
            println!("{}", run.report);
            if !run.report.passed() {
                return Err(CliError::GradCheckFailed(run.report.max_error()));
            }
        }
        Command::Sweep {
            run,
            seeds,
            families,
            jobs,
        } => {
            let spec = run.spec()?;
            let table = cmd_sweep(&spec, &seeds, &families, jobs)?;
            print!("{table}");
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
