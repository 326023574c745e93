mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmbrec::dataset::PerturbationMode;
use rmbrec::gradcheck::GradPath;
use rmbrec::objectives::{IrmVariant, OrmScope, RrmDenominator};
use rmbrec::{Error, ErrorKind};

use config::RunConfig;

/// Robust multi-behavior recommendation: diagnostics, training, evaluation
/// and robustness experiments.
#[derive(Debug, Parser)]
#[command(name = "rmbrec", version)]
struct Cli {
    /// Seed for every random stream (initialization, sampling, perturbation).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation (default: all cores). Results do not
    /// depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report counts, BAR per behavior and the direct-target ratio.
    Diagnose {
        dataset: PathBuf,
        /// Restrict the per-behavior entries to these behaviors.
        #[arg(long, value_delimiter = ',')]
        behaviors: Option<Vec<String>>,
    },
    /// Leave-one-out split of the target behavior.
    Split { dataset: PathBuf },
    /// Add or remove a share of auxiliary edges.
    Perturb {
        dataset: PathBuf,
        #[arg(long)]
        mode: PerturbationMode,
        /// Share of each behavior's edges, in (0, 1].
        #[arg(long)]
        ratio: f64,
        /// Behaviors to perturb (default: every auxiliary behavior).
        #[arg(long, value_delimiter = ',')]
        behaviors: Option<Vec<String>>,
    },
    /// Train a model and write checkpoint, log and validation report.
    Train(RunArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
        /// Rank against all items, including the user's training items.
        #[arg(long)]
        no_exclusion: bool,
        /// Include each user's rank in the report.
        #[arg(long)]
        record_ranks: bool,
    },
    /// Retrain under each perturbation and report relative drops.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<PerturbationMode>>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Dataset directory, raw or produced by `split`.
    dataset: Option<PathBuf>,
    /// Flat TOML configuration; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda_reg: Option<f64>,
    #[arg(long)]
    irm_variant: Option<IrmVariant>,
    #[arg(long)]
    orm_scope: Option<OrmScope>,
    #[arg(long)]
    rrm_denominator: Option<RrmDenominator>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Rank validation items against all items.
    #[arg(long)]
    no_exclusion: bool,
    /// Train without the contrastive alignment term.
    #[arg(long)]
    disable_rrm: bool,
    /// Train without the invariance term.
    #[arg(long)]
    disable_orm: bool,
    /// Auxiliary behaviors to leave out.
    #[arg(long, value_delimiter = ',')]
    drop_behaviors: Option<Vec<String>>,
    /// Write 0 in the log's `seconds` column so logs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    users: usize,
    #[arg(long, default_value_t = 6)]
    items: usize,
    #[arg(long, default_value_t = 3)]
    behaviors: usize,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// Keep only variants having all of these parts (e.g. `literal`,
    /// `irm_v1`, `aux_only`).
    #[arg(long, value_delimiter = ',')]
    variant: Vec<String>,
    #[arg(long, hide = true)]
    corrupt_path: Option<GradPath>,
}

impl RunArgs {
    fn resolve(&self, cli: &Cli) -> rmbrec::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),+) => {$(
                if let Some(v) = &self.$field {
                    cfg.$field = v.clone();
                }
            )+};
        }
        set!(dim, layers, tau, lambda1, lambda2, lambda_reg, irm_variant, orm_scope, rrm_denominator);
        set!(lr, batch_size, max_epochs, patience, eval_every, ks, drop_behaviors);
        if let Some(d) = &self.dataset {
            cfg.dataset = Some(d.clone());
        }
        if let Some(o) = &cli.out {
            cfg.out = Some(o.clone());
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        cfg.exclude_train &= !self.no_exclusion;
        cfg.disable_rrm |= self.disable_rrm;
        cfg.disable_orm |= self.disable_orm;
        cfg.record_timing &= !self.no_timing;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

fn run(cli: &Cli) -> rmbrec::Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Diagnose { dataset, behaviors } => commands::diagnose(cli, dataset, behaviors.as_deref()),
        Command::Split { dataset } => commands::split(cli, dataset),
        Command::Perturb { dataset, mode, ratio, behaviors } => {
            commands::perturb(cli, dataset, *mode, *ratio, behaviors.as_deref())
        }
        Command::Train(args) => commands::train(&args.resolve(cli)?),
        Command::Evaluate { dataset, checkpoint, ks, no_exclusion, record_ranks } => {
            commands::evaluate(cli, dataset, checkpoint, ks.as_deref(), !no_exclusion, *record_ranks)
        }
        Command::Sweep { run, ratios, modes } => {
            let mut cfg = run.resolve(cli)?;
            if let Some(r) = ratios {
                cfg.ratios = r.clone();
            }
            if let Some(m) = modes {
                cfg.modes = m.clone();
            }
            commands::sweep(&cfg)
        }
        Command::Gradcheck(args) => commands::gradcheck(cli, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
