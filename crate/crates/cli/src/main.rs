use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskdial::Error;
use maskdial_cli::commands::{cmd_chat, cmd_eval, cmd_generate, cmd_report, cmd_train};
use maskdial_cli::RunConfig;

/// Mask-memN2N dialog experiments: corpus generation, training, evaluation
/// and an interactive chat.
#[derive(Parser)]
#[command(name = "maskdial", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. `--set lr=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test/test_oov corpora, the candidate list and the KB.
    Generate {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: Option<String>,
        /// Dialogs per split in the full corpora.
        #[arg(long)]
        n_dialogs: Option<usize>,
        #[arg(long)]
        subset_size: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write checkpoints plus a run log to the run directory.
    Train {
        #[arg(long)]
        data: Option<String>,
        /// `full` or the subset size.
        #[arg(long)]
        subset: Option<String>,
        /// memn2n, memn2n_all_answers or mask_memn2n.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        match_type: bool,
        #[arg(long)]
        run_dir: Option<String>,
        /// Continue from the run directory's last checkpoint.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        sl_epochs: Option<usize>,
        #[arg(long)]
        rl_epochs: Option<usize>,
        #[arg(long)]
        no_entropy: bool,
        #[arg(long)]
        no_l2_pretrain: bool,
        #[arg(long)]
        rl_only: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint and append the rows to the results CSV.
    Eval {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        run_dir: Option<String>,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        subset: Option<String>,
        /// Comma-separated, e.g. `val,test,test_oov`.
        #[arg(long)]
        splits: Option<String>,
        #[arg(long)]
        results: Option<String>,
        #[arg(long)]
        dataset: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Select runs by validation accuracy and print the results grid.
    Report {
        #[arg(long)]
        results: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Talk to a trained model.
    Chat {
        #[arg(long)]
        checkpoint: Option<String>,
        #[arg(long)]
        run_dir: Option<String>,
        #[arg(long)]
        kb: Option<String>,
        #[arg(long)]
        data: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn flag(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

fn build_config(common: &Common, overrides: Vec<(&str, Option<String>)>) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    for (k, v) in overrides {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {kv}` is not KEY=VALUE")))?;
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Generate { mode, out: dir, n_dialogs, subset_size, common } => {
            let cfg = build_config(
                &common,
                vec![
                    ("mode", mode),
                    ("out", dir),
                    ("n_dialogs", n_dialogs.map(|n| n.to_string())),
                    ("subset_size", subset_size.map(|n| n.to_string())),
                ],
            )?;
            cmd_generate(&cfg, &mut out)
        }
        Command::Train {
            data,
            subset,
            model,
            match_type,
            run_dir,
            resume,
            sl_epochs,
            rl_epochs,
            no_entropy,
            no_l2_pretrain,
            rl_only,
            common,
        } => {
            let cfg = build_config(
                &common,
                vec![
                    ("data", data),
                    ("subset", subset),
                    ("model", model),
                    ("match_type", flag(match_type)),
                    ("run_dir", run_dir),
                    ("resume", flag(resume)),
                    ("sl_epochs", sl_epochs.map(|n| n.to_string())),
                    ("rl_epochs", rl_epochs.map(|n| n.to_string())),
                    ("no_entropy", flag(no_entropy)),
                    ("no_l2_pretrain", flag(no_l2_pretrain)),
                    ("rl_only", flag(rl_only)),
                ],
            )?;
            cmd_train(&cfg, &mut out)
        }
        Command::Eval { checkpoint, run_dir, data, subset, splits, results, dataset, common } => {
            let cfg = build_config(
                &common,
                vec![
                    ("checkpoint", checkpoint),
                    ("run_dir", run_dir),
                    ("data", data),
                    ("subset", subset),
                    ("splits", splits),
                    ("results", results),
                    ("dataset", dataset),
                ],
            )?;
            cmd_eval(&cfg, &mut out)
        }
        Command::Report { results, common } => {
            let cfg = build_config(&common, vec![("results", results)])?;
            cmd_report(&cfg, &mut out)
        }
        Command::Chat { checkpoint, run_dir, kb, data, common } => {
            let cfg = build_config(
                &common,
                vec![("checkpoint", checkpoint), ("run_dir", run_dir), ("kb", kb), ("data", data)],
            )?;
            let stdin = io::stdin();
            cmd_chat(&cfg, &mut stdin.lock(), &mut out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => {
            let _ = io::stdout().flush();
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
        Err(_) => ExitCode::from(2),
    }
}
