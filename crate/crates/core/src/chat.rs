//! Turn-by-turn dialog with a trained model.

use std::collections::HashSet;

use crate::data::{CandidateFeatures, CandidateSet, EntityLexicon, ExampleView, Vocabulary, AGENT_TOKEN, USER_TOKEN};
use crate::error::{Error, Result};
use crate::generator::{Kb, KbFact};
use crate::model::{argmax, MaskMode, Matrix, Model};

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub candidate: u32,
    pub text: String,
    /// KB results injected into memory after an api call.
    pub facts: Vec<KbFact>,
}

pub struct ChatSession<'a> {
    model: &'a Model,
    vocab: &'a Vocabulary,
    candidates: &'a CandidateSet,
    kb: &'a Kb,
    mask: MaskMode,
    features: CandidateFeatures,
    y: Matrix,
    memories: Vec<Vec<u32>>,
    context: Vec<u32>,
    seen: HashSet<u32>,
}

impl<'a> ChatSession<'a> {
    pub fn new(model: &'a Model, vocab: &'a Vocabulary, candidates: &'a CandidateSet, kb: &'a Kb, mask: MaskMode) -> Result<Self> {
        if model.params.vocab_size() != vocab.len() {
            return Err(Error::Compatibility("vocabulary does not match the model".into()));
        }
        let features = CandidateFeatures::new(candidates, vocab, &EntityLexicon::from_kb(kb));
        let y = model.candidate_matrix(&features);
        Ok(ChatSession {
            model,
            vocab,
            candidates,
            kb,
            mask,
            features,
            y,
            memories: Vec::new(),
            context: Vec::new(),
            seen: HashSet::new(),
        })
    }

    pub fn reset(&mut self) {
        self.memories.clear();
        self.context.clear();
        self.seen.clear();
    }

    pub fn n_memories(&self) -> usize {
        self.memories.len()
    }

    fn remember(&mut self, text: &str, speaker: &str) {
        for w in text.split_whitespace() {
            if let Some(k) = self.features.entity_key(w) {
                if self.seen.insert(k) {
                    self.context.push(k);
                }
            }
        }
        let mut ids = self.vocab.ids(text);
        ids.push(self.vocab.id(speaker));
        self.memories.push(ids);
    }

    /// Retrieves the best candidate for `user` and appends both sides of
    /// the exchange to memory.
    pub fn respond(&mut self, user: &str) -> Result<Reply> {
        let user = user.trim();
        let user = if user.is_empty() { "<silence>" } else { user };
        for w in user.split_whitespace() {
            if let Some(k) = self.features.entity_key(w) {
                if self.seen.insert(k) {
                    self.context.push(k);
                }
            }
        }
        let query = self.vocab.ids(user);
        let cap = self.model.config.memory_capacity;
        let start = self.memories.len().saturating_sub(cap);
        let view = ExampleView {
            memories: &self.memories[start..],
            query: &query,
            gold: 0,
            valid: &[],
            context: &self.context,
        };
        let trace = self.model.forward(&view, &self.features, &self.y, self.mask, false)?;
        let candidate = argmax(&trace.logits) as u32;
        let text = self.candidates.utterance(candidate).to_string();
        self.remember(user, USER_TOKEN);
        self.remember(&text, AGENT_TOKEN);
        let facts = match api_call_slots(&text) {
            Some((cuisine, location, price)) => match self.kb.query(cuisine, location, price) {
                Ok(ids) => ids.iter().flat_map(|&r| self.kb.restaurant(r).facts()).collect(),
                Err(_) => Vec::new(),
            },
            None => Vec::new(),
        };
        for f in &facts {
            self.remember(&f.to_string(), AGENT_TOKEN);
        }
        Ok(Reply { candidate, text, facts })
    }

    /// Facts of every restaurant whose name or values match all words of
    /// `query`.
    pub fn kb_lookup(&self, query: &str) -> Vec<KbFact> {
        let words: Vec<&str> = query.split_whitespace().collect();
        self.kb
            .restaurants()
            .iter()
            .filter(|r| {
                !words.is_empty()
                    && words.iter().all(|w| {
                        r.name.contains(w) || r.facts().any(|f| f.value == *w)
                    })
            })
            .flat_map(|r| r.facts())
            .collect()
    }
}

/// `(cuisine, location, price)` of an `api_call cuisine location people price`.
pub fn api_call_slots(text: &str) -> Option<(&str, &str, &str)> {
    let mut it = text.split_whitespace();
    if it.next()? != "api_call" {
        return None;
    }
    let args: Vec<&str> = it.collect();
    match args.as_slice() {
        [cuisine, location, _people, price] => Some((cuisine, location, price)),
        _ => None,
    }
}
