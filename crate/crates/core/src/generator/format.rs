//! Corpus text format.
//!
//! One line per turn, `<index> <user>\t<gold>|<alt>|...`. KB result lines
//! are `<index> <restaurant> <relation> <value>` with no tab. Dialogs are
//! separated by a blank line and indices restart at 1 in each dialog.

use std::fs;
use std::path::Path;

use super::dialog::{AnnotatedDialog, Line, Turn};
use super::kb::{KbFact, Relation};
use crate::error::{Error, Result};

pub fn emit_corpus(dialogs: &[AnnotatedDialog]) -> String {
    let mut out = String::new();
    for d in dialogs {
        for (i, line) in d.lines.iter().enumerate() {
            match line {
                Line::Exchange(t) => {
                    out.push_str(&format!("{} {}\t{}\n", i + 1, t.user, t.answers.join("|")))
                }
                Line::Fact(f) => out.push_str(&format!("{} {}\n", i + 1, f)),
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_corpus_file(dialogs: &[AnnotatedDialog], path: &Path) -> Result<()> {
    fs::write(path, emit_corpus(dialogs)).map_err(|e| Error::io(path, e))
}

pub fn parse_corpus(text: &str, source: &Path) -> Result<Vec<AnnotatedDialog>> {
    let err = |line: usize, msg: &str| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg: msg.to_string(),
    };
    let mut dialogs = Vec::new();
    let mut current = AnnotatedDialog::default();
    for (n, raw) in text.split_terminator('\n').enumerate() {
        let lineno = n + 1;
        if raw.is_empty() {
            if current.lines.is_empty() {
                return Err(err(lineno, "empty dialog"));
            }
            dialogs.push(std::mem::take(&mut current));
            continue;
        }
        let (index, rest) = raw.split_once(' ').ok_or_else(|| err(lineno, "missing line index"))?;
        let index: usize = index.parse().map_err(|_| err(lineno, "bad line index"))?;
        if index != current.lines.len() + 1 {
            return Err(err(lineno, &format!("expected index {}", current.lines.len() + 1)));
        }
        let line = match rest.split_once('\t') {
            Some((user, system)) => {
                let answers: Vec<String> = system.split('|').map(str::to_string).collect();
                if answers.iter().any(|a| a.is_empty()) {
                    return Err(err(lineno, "empty system utterance"));
                }
                let mut seen = answers.clone();
                seen.sort();
                seen.dedup();
                if seen.len() != answers.len() {
                    return Err(err(lineno, "duplicate alternative in answer set"));
                }
                Line::Exchange(Turn {
                    user: user.to_string(),
                    answers,
                })
            }
            None => {
                let parts: Vec<&str> = rest.split(' ').collect();
                let relation = (parts.len() == 3)
                    .then(|| Relation::from_token(parts[1]))
                    .flatten()
                    .ok_or_else(|| err(lineno, "expected `<restaurant> <relation> <value>`"))?;
                Line::Fact(KbFact {
                    entity: parts[0].to_string(),
                    relation,
                    value: parts[2].to_string(),
                })
            }
        };
        current.lines.push(line);
    }
    if !current.lines.is_empty() {
        dialogs.push(current);
    }
    Ok(dialogs)
}

pub fn parse_dialog_file(path: &Path) -> Result<Vec<AnnotatedDialog>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text, path)
}

/// Candidate list: one utterance per line.
pub fn emit_candidates(candidates: &[String]) -> String {
    let mut out = candidates.join("\n");
    out.push('\n');
    out
}

pub fn parse_candidates(text: &str) -> Vec<String> {
    text.lines().filter(|l| !l.is_empty()).map(str::to_string).collect()
}
