use std::fmt;
use std::str::FromStr;

use super::kb::KbFact;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Fixed question order and distinct ratings: one valid answer per turn.
    Original,
    /// Free question order and tied ratings: several valid answers.
    Permuted,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Original => "original",
            Mode::Permuted => "permuted",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Mode::Original),
            "permuted" => Ok(Mode::Permuted),
            _ => Err(Error::Argument(format!("unknown mode `{s}`"))),
        }
    }
}

/// A user utterance and the system's reply.
///
/// `answers[0]` is the gold reply; the remaining entries are the other
/// replies valid at this point, sorted and without duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub user: String,
    pub answers: Vec<String>,
}

impl Turn {
    pub fn gold(&self) -> &str {
        &self.answers[0]
    }

    pub fn is_valid(&self, utterance: &str) -> bool {
        self.answers.iter().any(|a| a == utterance)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Line {
    Exchange(Turn),
    Fact(KbFact),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AnnotatedDialog {
    pub lines: Vec<Line>,
}

impl AnnotatedDialog {
    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.lines.iter().filter_map(|l| match l {
            Line::Exchange(t) => Some(t),
            Line::Fact(_) => None,
        })
    }

    pub fn kb_results(&self) -> impl Iterator<Item = &KbFact> {
        self.lines.iter().filter_map(|l| match l {
            Line::Fact(f) => Some(f),
            Line::Exchange(_) => None,
        })
    }

    pub fn n_turns(&self) -> usize {
        self.turns().count()
    }

    pub fn max_answer_set(&self) -> usize {
        self.turns().map(|t| t.answers.len()).max().unwrap_or(0)
    }
}
