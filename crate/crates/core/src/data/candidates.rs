use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::generator::AnnotatedDialog;

/// The retrieval action space: every system utterance the model may pick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    utterances: Vec<String>,
    index: HashMap<String, u32>,
}

impl CandidateSet {
    pub fn new(utterances: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            if u.trim().is_empty() {
                return Err(Error::Consistency("empty candidate utterance".into()));
            }
            if index.insert(u.clone(), i as u32).is_some() {
                return Err(Error::Consistency(format!("duplicate candidate `{u}`")));
            }
        }
        Ok(CandidateSet { utterances, index })
    }

    /// Every alternative of every system turn, sorted.
    pub fn from_dialogs<'a>(corpora: impl IntoIterator<Item = &'a [AnnotatedDialog]>) -> Self {
        let mut all = BTreeSet::new();
        for dialogs in corpora {
            for d in dialogs {
                for t in d.turns() {
                    all.extend(t.answers.iter().cloned());
                }
            }
        }
        CandidateSet::new(all.into_iter().collect()).expect("deduplicated")
    }

    /// Appends utterances of `dialogs` not yet present; existing ids are kept.
    pub fn extended(&self, dialogs: &[AnnotatedDialog]) -> Self {
        let mut out = self.clone();
        let mut extra = BTreeSet::new();
        for d in dialogs {
            for t in d.turns() {
                extra.extend(t.answers.iter().filter(|a| !self.index.contains_key(*a)).cloned());
            }
        }
        for u in extra {
            out.index.insert(u.clone(), out.utterances.len() as u32);
            out.utterances.push(u);
        }
        out
    }

    pub fn id(&self, utterance: &str) -> Option<u32> {
        self.index.get(utterance).copied()
    }

    pub fn utterance(&self, id: u32) -> &str {
        &self.utterances[id as usize]
    }

    pub fn utterances(&self) -> &[String] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }
}
