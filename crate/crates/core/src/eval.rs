//! Multi-answer accuracy, model selection and result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::data::{CandidateFeatures, Dataset};
use crate::error::{Error, Result};
use crate::model::{argmax, MaskMode, Model};

const EVAL_BATCH: usize = 32;

/// A prediction is correct when it is any of the valid next utterances.
pub fn is_correct(predicted: u32, valid: &[u32]) -> bool {
    valid.contains(&predicted)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Percentage of system turns answered correctly.
    pub per_turn: f64,
    /// Percentage of dialogs with every turn correct.
    pub per_dialog: f64,
    pub n_turns: usize,
    pub n_dialogs: usize,
}

/// `predictions[d][t]` against `answers[d][t]`.
pub fn compute_metrics(predictions: &[Vec<u32>], answers: &[Vec<&[u32]>]) -> Result<Metrics> {
    if predictions.len() != answers.len() {
        return Err(Error::Contract(format!(
            "{} predicted dialogs for {} dialogs",
            predictions.len(),
            answers.len()
        )));
    }
    let mut turns = 0;
    let mut correct = 0;
    let mut perfect = 0;
    for (d, (preds, sets)) in predictions.iter().zip(answers).enumerate() {
        if preds.len() != sets.len() {
            return Err(Error::Contract(format!(
                "dialog {d}: {} predictions for {} turns",
                preds.len(),
                sets.len()
            )));
        }
        let ok = preds.iter().zip(sets).filter(|(p, v)| is_correct(**p, v)).count();
        turns += sets.len();
        correct += ok;
        if ok == sets.len() {
            perfect += 1;
        }
    }
    if turns == 0 {
        return Err(Error::Contract("no turns to score".into()));
    }
    Ok(Metrics {
        per_turn: 100.0 * correct as f64 / turns as f64,
        per_dialog: 100.0 * perfect as f64 / answers.len() as f64,
        n_turns: turns,
        n_dialogs: answers.len(),
    })
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub predictions: Vec<Vec<u32>>,
}

/// Greedy predictions with gold history, scored against the answer sets.
pub fn evaluate(model: &Model, data: &Dataset, features: &CandidateFeatures, mask: MaskMode) -> Result<Evaluation> {
    if features.is_empty() {
        return Err(Error::Argument("empty candidate set".into()));
    }
    let y = model.candidate_matrix(features);
    let cap = model.config.memory_capacity;
    let mut predictions: Vec<Vec<u32>> = data.dialogs.iter().map(|d| Vec::with_capacity(d.examples.len())).collect();
    let all: Vec<usize> = (0..data.n_examples()).collect();
    for chunk in all.chunks(EVAL_BATCH) {
        let views: Vec<_> = chunk.iter().map(|&i| data.view(i, cap)).collect();
        let traces = model.forward_batch(&views, features, &y, mask, false)?;
        for (&i, t) in chunk.iter().zip(&traces) {
            predictions[data.locate(i).0].push(argmax(&t.logits) as u32);
        }
    }
    let metrics = compute_metrics(&predictions, &data.answer_sets())?;
    Ok(Evaluation { metrics, predictions })
}

/// Index of the run with the highest validation per-turn accuracy; ties go
/// to the lower seed.
pub fn select_best(runs: &[(u64, Metrics)]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, (seed, m)) in runs.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bs, bm) = &runs[b];
                if m.per_turn > bm.per_turn || (m.per_turn == bm.per_turn && seed < bs) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

pub const CSV_HEADER: [&str; 8] = [
    "dataset",
    "model",
    "match_type",
    "split",
    "per_turn",
    "per_dialog",
    "seed",
    "checkpoint_path",
];

/// One line of the results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub match_type: bool,
    pub split: String,
    pub per_turn: f64,
    pub per_dialog: f64,
    pub seed: u64,
    pub checkpoint_path: String,
}

impl ResultRow {
    fn record(&self) -> [String; 8] {
        [
            self.dataset.clone(),
            self.model.clone(),
            self.match_type.to_string(),
            self.split.clone(),
            format!("{:.1}", self.per_turn),
            format!("{:.1}", self.per_dialog),
            self.seed.to_string(),
            self.checkpoint_path.clone(),
        ]
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}

pub fn write_csv<W: io::Write>(rows: &[ResultRow], out: W, header: bool) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        w.write_record(CSV_HEADER)?;
    }
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

/// Appends rows, writing the header when the file is new or empty.
pub fn append_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    write_csv(rows, file, fresh).map_err(|e| csv_err(path, e))
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(CSV_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "unexpected header".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 2,
            msg: msg.to_string(),
        };
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad("bad number"));
        rows.push(ResultRow {
            dataset: rec[0].to_string(),
            model: rec[1].to_string(),
            match_type: rec[2].parse().map_err(|_| bad("bad match_type"))?,
            split: rec[3].to_string(),
            per_turn: num(4)?,
            per_dialog: num(5)?,
            seed: rec[6].parse().map_err(|_| bad("bad seed"))?,
            checkpoint_path: rec[7].to_string(),
        });
    }
    Ok(rows)
}

/// Keeps, for every (dataset, model, match type) group, the non-validation
/// rows of the seed with the best validation per-turn accuracy. Groups
/// without validation rows are kept whole.
pub fn select_runs(rows: &[ResultRow]) -> Vec<ResultRow> {
    let group = |r: &ResultRow| (r.dataset.clone(), r.model.clone(), r.match_type);
    let mut chosen: BTreeMap<(String, String, bool), u64> = BTreeMap::new();
    let mut vals: BTreeMap<(String, String, bool), Vec<(u64, Metrics)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.split == "val") {
        let m = Metrics {
            per_turn: r.per_turn,
            per_dialog: r.per_dialog,
            n_turns: 0,
            n_dialogs: 0,
        };
        vals.entry(group(r)).or_default().push((r.seed, m));
    }
    for (g, runs) in vals {
        if let Some(i) = select_best(&runs) {
            chosen.insert(g, runs[i].0);
        }
    }
    rows.iter()
        .filter(|r| r.split != "val")
        .filter(|r| chosen.get(&group(r)).is_none_or(|&s| s == r.seed))
        .cloned()
        .collect()
}

/// Row and column labels of a result.
fn cell_key(r: &ResultRow) -> (String, String) {
    let row = if r.split == "test" {
        r.dataset.clone()
    } else {
        format!("{} [{}]", r.dataset, r.split)
    };
    let col = format!("{}{}", r.model, if r.match_type { " +match" } else { "" });
    (row, col)
}

/// Plain-text grid: one row per dataset and split, one column pair
/// (per-turn, per-dialog) per model and match-type setting. Missing cells
/// are shown as "-". Duplicate cells keep the lowest seed, so callers should
/// select runs before reporting.
pub fn render_grid(rows: &[ResultRow]) -> String {
    let mut row_keys: Vec<String> = Vec::new();
    let mut col_keys: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), &ResultRow> = BTreeMap::new();
    for r in rows {
        let (rk, ck) = cell_key(r);
        if !row_keys.contains(&rk) {
            row_keys.push(rk.clone());
        }
        if !col_keys.contains(&ck) {
            col_keys.push(ck.clone());
        }
        cells
            .entry((rk, ck))
            .and_modify(|old| {
                if r.seed < old.seed {
                    *old = r;
                }
            })
            .or_insert(r);
    }
    let mut header = vec!["".to_string()];
    for c in &col_keys {
        header.push(format!("{c} turn"));
        header.push(format!("{c} dialog"));
    }
    let mut table = vec![header];
    for rk in &row_keys {
        let mut line = vec![rk.clone()];
        for ck in &col_keys {
            match cells.get(&(rk.clone(), ck.clone())) {
                Some(r) => {
                    line.push(format!("{:.1}", r.per_turn));
                    line.push(format!("{:.1}", r.per_dialog));
                }
                None => {
                    line.push("-".into());
                    line.push("-".into());
                }
            }
        }
        table.push(line);
    }
    let n_cols = table[0].len();
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| table.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for line in &table {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, &w))| {
                let pad = w - s.chars().count();
                if i == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
