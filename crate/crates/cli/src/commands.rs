//! The five subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use maskdial::chat::ChatSession;
use maskdial::checkpoint::Checkpoint;
use maskdial::data::{CandidateSet, Vocabulary};
use maskdial::eval::{append_csv, evaluate, read_csv, render_grid, select_runs, write_csv, ResultRow};
use maskdial::generator::corpus::SUBSET_SEED;
use maskdial::generator::format::{emit_candidates, parse_candidates};
use maskdial::generator::{
    emit_corpus_file, generate_corpus, parse_dialog_file, AnnotatedDialog, Kb, Mode, Patterns, Split, SplitSizes,
};
use maskdial::model::Model;
use maskdial::pipeline::{build_lexicon, eval_split, Prepared};
use maskdial::train::{BestModel, LogEntry, ModelKind, TrainState, Trainer};
use maskdial::{Error, Result};

use crate::config::RunConfig;

pub const CANDIDATES_FILE: &str = "candidates.txt";
pub const KB_FILE: &str = "kb.txt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const LOG_FILE: &str = "train.log";
pub const CONFIG_FILE: &str = "config.txt";

/// `<dir>/<split>_<subset>.txt`, where `subset` is `full` or a size.
pub fn corpus_file(dir: &Path, split: Split, subset: &str) -> PathBuf {
    dir.join(format!("{}_{subset}.txt", split.name()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn say(out: &mut dyn Write, msg: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(msg)
        .and_then(|_| out.write_all(b"\n"))
        .map_err(|e| Error::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { say($out, format_args!($($arg)*)) };
}

pub fn cmd_generate(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpora = generate_corpus(
        &cfg.corpus_config(),
        SplitSizes::uniform(cfg.n_dialogs),
        cfg.seed,
        &Patterns::default(),
    )?;
    if cfg.mode == Mode::Original {
        for split in Split::ALL {
            let multi = corpora.split(split).iter().flat_map(|d| d.turns()).filter(|t| t.answers.len() != 1).count();
            if multi > 0 {
                return Err(Error::Consistency(format!(
                    "original-mode {} split has {multi} turns with more than one answer",
                    split.name()
                )));
            }
        }
    }
    let subset = corpora.subsample(cfg.subset_size, SUBSET_SEED)?;
    create_dir(&cfg.out)?;
    let size = cfg.subset_size.to_string();
    for split in Split::ALL {
        emit_corpus_file(corpora.split(split), &corpus_file(&cfg.out, split, "full"))?;
        emit_corpus_file(subset.split(split), &corpus_file(&cfg.out, split, &size))?;
    }
    let candidates = CandidateSet::from_dialogs([&corpora.train[..], &corpora.val[..], &corpora.test[..]]);
    write_file(&cfg.out.join(CANDIDATES_FILE), &emit_candidates(candidates.utterances()))?;
    write_file(&cfg.out.join(KB_FILE), &corpora.kb.to_text())?;
    say!(
        out,
        "wrote {} {} dialogs per split ({} in the subsets), {} candidates, {} restaurants to {}",
        cfg.n_dialogs,
        cfg.mode,
        subset.train.len(),
        candidates.len(),
        corpora.kb.restaurants().len(),
        cfg.out.display()
    )
}

fn load_kb(cfg: &RunConfig) -> Result<Kb> {
    let path = cfg.kb.clone().unwrap_or_else(|| cfg.data.join(KB_FILE));
    Kb::from_text(&read_file(&path)?)
}

fn load_split(cfg: &RunConfig, split: Split) -> Result<Vec<AnnotatedDialog>> {
    parse_dialog_file(&corpus_file(&cfg.data, split, &cfg.subset))
}

/// Featurized train/val/test of the configured corpus.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let kb = load_kb(cfg)?;
    let candidates = CandidateSet::new(parse_candidates(&read_file(&cfg.data.join(CANDIDATES_FILE))?))?;
    let train = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    let test = load_split(cfg, Split::Test)?;
    let vocab = Vocabulary::build(&train, candidates.utterances().iter().map(String::as_str));
    let lexicon = build_lexicon(Some(&kb), &[&train, &val, &test]);
    Prepared::with_vocabulary(vocab, candidates, lexicon, &train, &val, &test)
}

fn checkpoint_meta(cfg: &RunConfig) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("model".to_string(), cfg.model.name().to_string());
    meta.insert("model_label".to_string(), cfg.model_label());
    meta.insert("dataset".to_string(), cfg.dataset_label());
    meta.insert("seed".to_string(), cfg.seed.to_string());
    meta
}

fn meta_value<T: std::str::FromStr>(ck: &Checkpoint, key: &str) -> Result<T> {
    ck.meta(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("missing or malformed `{key}` entry")))
}

fn save_progress(cfg: &RunConfig, prep: &Prepared, state: &TrainState, best_changed: bool) -> Result<()> {
    let mut meta = checkpoint_meta(cfg);
    meta.insert("phase".into(), state.phase.to_string());
    meta.insert("epoch".into(), state.epoch.to_string());
    meta.insert("finished".into(), state.finished.to_string());
    meta.insert("log_len".into(), state.log.len().to_string());
    if let Some(b) = &state.best {
        meta.insert("best_phase".into(), b.phase.to_string());
        meta.insert("best_epoch".into(), b.epoch.to_string());
        meta.insert("best_val_per_turn".into(), b.val.per_turn.to_string());
        meta.insert("best_val_per_dialog".into(), b.val.per_dialog.to_string());
        meta.insert("best_val_turns".into(), b.val.n_turns.to_string());
        meta.insert("best_val_dialogs".into(), b.val.n_dialogs.to_string());
        if best_changed {
            let mut best_meta = checkpoint_meta(cfg);
            best_meta.insert("phase".into(), b.phase.to_string());
            best_meta.insert("epoch".into(), b.epoch.to_string());
            best_meta.insert("val_per_turn".into(), b.val.per_turn.to_string());
            best_meta.insert("val_per_dialog".into(), b.val.per_dialog.to_string());
            Checkpoint {
                config: state.model.config.clone(),
                params: b.params.clone(),
                vocab: prep.vocab.clone(),
                candidates: prep.candidates.clone(),
                meta: best_meta,
            }
            .save(&cfg.run_dir.join(BEST_CHECKPOINT))?;
        }
    }
    Checkpoint {
        config: state.model.config.clone(),
        params: state.model.params.clone(),
        vocab: prep.vocab.clone(),
        candidates: prep.candidates.clone(),
        meta,
    }
    .save(&cfg.run_dir.join(LAST_CHECKPOINT))
}

fn write_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut text = String::from(LogEntry::HEADER);
    text.push('\n');
    for e in log {
        text.push_str(&e.to_string());
        text.push('\n');
    }
    write_file(path, &text)
}

fn append_log(path: &Path, e: &LogEntry) -> Result<()> {
    let mut f = fs::OpenOptions::new().append(true).open(path).map_err(|err| Error::io(path, err))?;
    writeln!(f, "{e}").map_err(|err| Error::io(path, err))
}

/// Rebuilds the trainer state saved in `run_dir`.
fn restore(cfg: &RunConfig, prep: &Prepared) -> Result<TrainState> {
    let last = Checkpoint::load(&cfg.run_dir.join(LAST_CHECKPOINT))?;
    let model: ModelKind = meta_value(&last, "model")?;
    if model != cfg.model || last.config != cfg.model_config() {
        return Err(Error::Compatibility("saved run was trained with a different model configuration".into()));
    }
    if last.meta("seed") != Some(cfg.seed.to_string().as_str()) {
        return Err(Error::Compatibility("saved run used a different seed".into()));
    }
    if last.vocab != prep.vocab || last.candidates != prep.candidates {
        return Err(Error::Compatibility("saved run used a different corpus".into()));
    }
    let log_len: usize = meta_value(&last, "log_len")?;
    let log_text = read_file(&cfg.run_dir.join(LOG_FILE))?;
    let log = log_text
        .lines()
        .skip(1)
        .take(log_len)
        .map(str::parse)
        .collect::<Result<Vec<LogEntry>>>()?;
    if log.len() != log_len {
        return Err(Error::Checkpoint("run log is shorter than the checkpoint records".into()));
    }
    let best = match last.meta("best_epoch") {
        None => None,
        Some(_) => {
            let ck = Checkpoint::load(&cfg.run_dir.join(BEST_CHECKPOINT))?;
            Some(BestModel {
                params: ck.params,
                phase: meta_value(&last, "best_phase")?,
                epoch: meta_value(&last, "best_epoch")?,
                val: maskdial::eval::Metrics {
                    per_turn: meta_value(&last, "best_val_per_turn")?,
                    per_dialog: meta_value(&last, "best_val_per_dialog")?,
                    n_turns: meta_value(&last, "best_val_turns")?,
                    n_dialogs: meta_value(&last, "best_val_dialogs")?,
                },
            })
        }
    };
    let phase = meta_value(&last, "phase")?;
    let epoch = meta_value(&last, "epoch")?;
    let finished = meta_value(&last, "finished")?;
    Ok(TrainState {
        model: Model::new(last.config, last.params)?,
        phase,
        epoch,
        best,
        log,
        finished,
    })
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let prep = prepare(cfg)?;
    say!(
        out,
        "{}: {} training turns, vocabulary {}, {} candidates",
        cfg.dataset_label(),
        prep.train.n_examples(),
        prep.vocab.len(),
        prep.candidates.len()
    )?;
    create_dir(&cfg.run_dir)?;
    let log_path = cfg.run_dir.join(LOG_FILE);
    let resuming = cfg.resume && cfg.run_dir.join(LAST_CHECKPOINT).exists();
    let mut trainer = if resuming {
        let state = restore(cfg, &prep)?;
        write_log(&log_path, &state.log)?;
        say!(out, "resuming at {} epoch {}", state.phase, state.epoch)?;
        Trainer::resume(cfg.train_config(), prep.data(), state)?
    } else {
        write_log(&log_path, &[])?;
        Trainer::new(cfg.train_config(), prep.data())?
    };
    write_file(&cfg.run_dir.join(CONFIG_FILE), &cfg.to_text())?;
    trainer.run(|state| {
        let e = state.log.last().expect("an epoch just finished");
        append_log(&log_path, e)?;
        let best_changed = state.best.as_ref().is_some_and(|b| b.phase == e.phase && b.epoch == e.epoch);
        save_progress(cfg, &prep, state, best_changed)?;
        say!(
            out,
            "{} {:>3}  loss {:.4}  val turn {:.2}  dialog {:.2}{}",
            e.phase,
            e.epoch,
            e.train_loss,
            e.val_per_turn,
            e.val_per_dialog,
            if best_changed { "  *" } else { "" }
        )
    })?;
    match &trainer.state.best {
        Some(b) => say!(
            out,
            "best: {} epoch {} (val turn {:.2}, dialog {:.2}) saved to {}",
            b.phase,
            b.epoch,
            b.val.per_turn,
            b.val.per_dialog,
            cfg.run_dir.join(BEST_CHECKPOINT).display()
        ),
        None => say!(out, "nothing to train"),
    }
}

fn checkpoint_path(cfg: &RunConfig) -> PathBuf {
    cfg.checkpoint.clone().unwrap_or_else(|| cfg.run_dir.join(BEST_CHECKPOINT))
}

fn load_model(cfg: &RunConfig) -> Result<(Checkpoint, Model, ModelKind)> {
    let ck = Checkpoint::load(&checkpoint_path(cfg))?;
    let kind: ModelKind = meta_value(&ck, "model")?;
    let model = Model::new(ck.config.clone(), ck.params.clone())?;
    Ok((ck, model, kind))
}

/// Scores the checkpoint on every configured split.
pub fn evaluate_splits(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let (ck, model, kind) = load_model(cfg)?;
    let kb = load_kb(cfg)?;
    let path = checkpoint_path(cfg);
    let mut rows = Vec::new();
    for name in &cfg.splits {
        let split = Split::parse(name)?;
        let dialogs = load_split(cfg, split)?;
        let lexicon = build_lexicon(Some(&kb), &[&dialogs]);
        let es = eval_split(&ck.vocab, &ck.candidates, &lexicon, &dialogs, None)?;
        let m = evaluate(&model, &es.data, &es.features, kind.eval_mask())?.metrics;
        rows.push(ResultRow {
            dataset: cfg.dataset.clone().or_else(|| ck.meta("dataset").map(String::from)).unwrap_or_else(|| cfg.dataset_label()),
            model: ck.meta("model_label").unwrap_or(kind.name()).to_string(),
            match_type: ck.config.match_type,
            split: split.name().to_string(),
            per_turn: m.per_turn,
            per_dialog: m.per_dialog,
            seed: meta_value(&ck, "seed")?,
            checkpoint_path: path.display().to_string(),
        });
    }
    Ok(rows)
}

pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let rows = evaluate_splits(cfg)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf, true).map_err(|e| Error::Contract(e.to_string()))?;
    out.write_all(&buf).map_err(|e| Error::io("<stdout>", e))?;
    append_csv(&cfg.results, &rows)
}

pub fn cmd_report(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let rows = read_csv(&cfg.results)?;
    if rows.is_empty() {
        return Err(Error::Argument(format!("{} has no results", cfg.results.display())));
    }
    let selected = select_runs(&rows);
    let grid = render_grid(&selected);
    let csv_path = cfg.results.with_file_name("report.csv");
    let txt_path = cfg.results.with_file_name("report.txt");
    let mut buf = Vec::new();
    write_csv(&selected, &mut buf, true).map_err(|e| Error::Contract(e.to_string()))?;
    fs::write(&csv_path, buf).map_err(|e| Error::io(&csv_path, e))?;
    write_file(&txt_path, &grid)?;
    out.write_all(grid.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

const MAX_KB_LINES: usize = 35;

pub const CHAT_HELP: &str = "commands: /reset clears the dialog memory, /kb <words> looks up restaurants, /quit exits";

/// Serial read-eval-print loop over `input`. Ends on `/quit` or end of input.
pub fn cmd_chat(cfg: &RunConfig, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<()> {
    let (ck, model, kind) = load_model(cfg)?;
    let kb = load_kb(cfg)?;
    let mut session = ChatSession::new(&model, &ck.vocab, &ck.candidates, &kb, kind.eval_mask())?;
    say!(out, "{} loaded. {CHAT_HELP}", kind.name())?;
    let mut line = String::new();
    loop {
        write!(out, "> ").and_then(|_| out.flush()).map_err(|e| Error::io("<stdout>", e))?;
        line.clear();
        if input.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            break;
        }
        let text = line.trim();
        if let Some(cmd) = text.strip_prefix('/') {
            let (name, arg) = cmd.split_once(char::is_whitespace).unwrap_or((cmd, ""));
            match name {
                "quit" => break,
                "reset" => {
                    session.reset();
                    say!(out, "memory cleared")?;
                }
                "kb" => {
                    let facts = session.kb_lookup(arg);
                    if facts.is_empty() {
                        say!(out, "no matching restaurant")?;
                    }
                    for f in facts.iter().take(MAX_KB_LINES) {
                        say!(out, "{f}")?;
                    }
                    if facts.len() > MAX_KB_LINES {
                        say!(out, "... {} more facts, narrow the query", facts.len() - MAX_KB_LINES)?;
                    }
                }
                _ => say!(out, "unknown command `/{name}`. {CHAT_HELP}")?,
            }
            continue;
        }
        let reply = session.respond(text)?;
        say!(out, "{}", reply.text)?;
        for f in &reply.facts {
            say!(out, "  {f}")?;
        }
    }
    Ok(())
}
