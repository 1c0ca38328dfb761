//! Sentence encodings and per-turn training examples.

use std::collections::{HashMap, HashSet};

use super::candidates::CandidateSet;
use super::lexicon::EntityLexicon;
use super::vocab::{Vocabulary, AGENT_TOKEN, USER_TOKEN};
use crate::error::{Error, Result};
use crate::generator::{AnnotatedDialog, Line, Relation};

pub const DEFAULT_MEMORY_CAPACITY: usize = 250;

/// Word weight for word `j` (1-based) of a `len`-word sentence at
/// component `k` (1-based) of a `d`-dimensional embedding.
pub fn position_weight(j: usize, len: usize, k: usize, d: usize) -> f64 {
    let (j, len, k, d) = (j as f64, len as f64, k as f64, d as f64);
    (1.0 - j / len) - (k / d) * (1.0 - 2.0 * j / len)
}

/// Row-major `len x d` table of word weights. All ones when `bag_of_words`.
pub fn position_encode(len: usize, d: usize, bag_of_words: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(len * d);
    for j in 1..=len {
        for k in 1..=d {
            out.push(if bag_of_words { 1.0 } else { position_weight(j, len, k, d) });
        }
    }
    out
}

/// Cached weight tables per sentence length.
#[derive(Debug, Clone)]
pub struct PositionEncoder {
    d: usize,
    bag_of_words: bool,
    tables: Vec<Vec<f64>>,
}

impl PositionEncoder {
    const CACHED: usize = 48;

    pub fn new(d: usize, bag_of_words: bool) -> Self {
        let tables = (0..=Self::CACHED).map(|len| position_encode(len, d, bag_of_words)).collect();
        PositionEncoder { d, bag_of_words, tables }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weights(&self, len: usize) -> std::borrow::Cow<'_, [f64]> {
        match self.tables.get(len) {
            Some(t) => std::borrow::Cow::Borrowed(t),
            None => std::borrow::Cow::Owned(position_encode(len, self.d, self.bag_of_words)),
        }
    }
}

/// Relations of the words of `candidate` that also occur in `context`.
pub fn match_types(candidate: &str, context: &HashSet<&str>, lexicon: &EntityLexicon) -> Vec<Relation> {
    let mut out: Vec<Relation> = candidate
        .split_whitespace()
        .filter(|w| context.contains(w))
        .filter_map(|w| lexicon.type_of(w))
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Token ids of every candidate plus an index from typed entity words to
/// the candidates containing them.
#[derive(Debug, Clone)]
pub struct CandidateFeatures {
    pub tokens: Vec<Vec<u32>>,
    entity_words: HashMap<String, u32>,
    postings: Vec<Vec<(u32, Relation)>>,
}

impl CandidateFeatures {
    pub fn new(candidates: &CandidateSet, vocab: &Vocabulary, lexicon: &EntityLexicon) -> Self {
        let mut entity_words = HashMap::new();
        let mut postings: Vec<Vec<(u32, Relation)>> = Vec::new();
        let mut tokens = Vec::with_capacity(candidates.len());
        for (c, utt) in candidates.utterances().iter().enumerate() {
            tokens.push(vocab.ids(utt));
            for w in utt.split_whitespace() {
                if let Some(rel) = lexicon.type_of(w) {
                    let key = *entity_words.entry(w.to_string()).or_insert_with(|| {
                        postings.push(Vec::new());
                        postings.len() as u32 - 1
                    });
                    let list = &mut postings[key as usize];
                    if !list.contains(&(c as u32, rel)) {
                        list.push((c as u32, rel));
                    }
                }
            }
        }
        CandidateFeatures {
            tokens,
            entity_words,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn entity_key(&self, word: &str) -> Option<u32> {
        self.entity_words.get(word).copied()
    }

    /// `(candidate, relation)` pairs that fire given the context entity keys.
    pub fn matches<'a>(&'a self, context: &'a [u32]) -> impl Iterator<Item = (u32, Relation)> + 'a {
        context.iter().flat_map(move |&k| self.postings[k as usize].iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    /// Number of dialog memories (oldest first) preceding this turn.
    pub n_memories: usize,
    pub query: Vec<u32>,
    pub gold: u32,
    pub valid: Vec<u32>,
    /// Number of context entity keys preceding this turn.
    pub n_context: usize,
}

/// All examples of one dialog, sharing its memory sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeaturizedDialog {
    pub memories: Vec<Vec<u32>>,
    pub context: Vec<u32>,
    pub examples: Vec<Example>,
}

/// A single turn's inputs.
#[derive(Debug, Clone, Copy)]
pub struct ExampleView<'a> {
    /// Oldest first, at most the memory capacity.
    pub memories: &'a [Vec<u32>],
    pub query: &'a [u32],
    pub gold: u32,
    pub valid: &'a [u32],
    pub context: &'a [u32],
}

impl FeaturizedDialog {
    pub fn view(&self, i: usize, capacity: usize) -> ExampleView<'_> {
        let ex = &self.examples[i];
        let start = ex.n_memories.saturating_sub(capacity);
        ExampleView {
            memories: &self.memories[start..ex.n_memories],
            query: &ex.query,
            gold: ex.gold,
            valid: &ex.valid,
            context: &self.context[..ex.n_context],
        }
    }
}

fn with_speaker(vocab: &Vocabulary, text: &str, speaker: &str) -> Vec<u32> {
    let mut ids = vocab.ids(text);
    ids.push(vocab.id(speaker));
    ids
}

/// One example per system turn. Memories hold every earlier user and
/// system utterance and every KB result line, tagged with a speaker token.
pub fn make_examples(
    dialog: &AnnotatedDialog,
    vocab: &Vocabulary,
    candidates: &CandidateSet,
    features: &CandidateFeatures,
) -> Result<FeaturizedDialog> {
    let mut out = FeaturizedDialog {
        memories: Vec::new(),
        context: Vec::new(),
        examples: Vec::new(),
    };
    let mut seen = HashSet::new();
    let mut note_context = |text: &str, ctx: &mut Vec<u32>| {
        for w in text.split_whitespace() {
            if let Some(k) = features.entity_key(w) {
                if seen.insert(k) {
                    ctx.push(k);
                }
            }
        }
    };
    let resolve = |utt: &str| {
        candidates
            .id(utt)
            .ok_or_else(|| Error::Consistency(format!("system utterance `{utt}` is not a candidate")))
    };
    for line in &dialog.lines {
        match line {
            Line::Exchange(turn) => {
                note_context(&turn.user, &mut out.context);
                let gold = resolve(turn.gold())?;
                let valid = turn.answers.iter().map(|a| resolve(a)).collect::<Result<Vec<_>>>()?;
                out.examples.push(Example {
                    n_memories: out.memories.len(),
                    query: vocab.ids(&turn.user),
                    gold,
                    valid,
                    n_context: out.context.len(),
                });
                out.memories.push(with_speaker(vocab, &turn.user, USER_TOKEN));
                out.memories.push(with_speaker(vocab, turn.gold(), AGENT_TOKEN));
                note_context(turn.gold(), &mut out.context);
            }
            Line::Fact(fact) => {
                let text = fact.to_string();
                out.memories.push(with_speaker(vocab, &text, AGENT_TOKEN));
                note_context(&text, &mut out.context);
            }
        }
    }
    Ok(out)
}

pub fn featurize_corpus(
    dialogs: &[AnnotatedDialog],
    vocab: &Vocabulary,
    candidates: &CandidateSet,
    features: &CandidateFeatures,
) -> Result<Vec<FeaturizedDialog>> {
    dialogs
        .iter()
        .map(|d| make_examples(d, vocab, candidates, features))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::format::parse_corpus;
    use crate::generator::{KbFact, Relation};

    #[test]
    fn single_word_weights() {
        let d = 5;
        let w = position_encode(1, d, false);
        for k in 1..=d {
            assert!((w[k - 1] - k as f64 / d as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn two_word_sentence_last_component() {
        assert!((position_weight(1, 2, 7, 7) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bag_of_words_is_all_ones() {
        assert!(position_encode(4, 3, true).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn weights_are_linear_in_position() {
        for len in 1..9 {
            for k in 1..=6 {
                let slope = -1.0 / len as f64 + 2.0 * k as f64 / (6.0 * len as f64);
                for j in 1..len {
                    let diff = position_weight(j + 1, len, k, 6) - position_weight(j, len, k, 6);
                    assert!((diff - slope).abs() < 1e-12);
                }
            }
        }
    }

    fn lexicon() -> EntityLexicon {
        let fact = |relation, value: &str| KbFact {
            entity: "r".into(),
            relation,
            value: value.into(),
        };
        EntityLexicon::from_facts(&[
            fact(Relation::Cuisine, "french"),
            fact(Relation::Location, "bombay"),
            fact(Relation::Number, "six"),
            fact(Relation::Price, "cheap"),
        ])
    }

    #[test]
    fn api_call_fires_four_types() {
        let ctx: HashSet<&str> = "i want french food in bombay for six in a cheap price range"
            .split_whitespace()
            .collect();
        let types = match_types("api_call french bombay six cheap", &ctx, &lexicon());
        // Expected set from intersecting the candidate's words with the
        // context and looking each survivor up in the lexicon by hand.
        assert_eq!(
            types,
            vec![Relation::Cuisine, Relation::Location, Relation::Price, Relation::Number]
        );
        assert!(match_types("you're welcome", &ctx, &lexicon()).is_empty());
    }

    #[test]
    fn oov_phone_fires_by_surface_form() {
        let ctx: HashSet<&str> = ["resto_oslo_phone"].into_iter().collect();
        let types = match_types("here it is resto_oslo_phone", &ctx, &EntityLexicon::default());
        assert_eq!(types, vec![Relation::Phone]);
    }

    fn toy() -> (Vec<AnnotatedDialog>, Vocabulary, CandidateSet) {
        let text = "1 hello\thi\n2 book french\tok|sure\n3 r1 R_cuisine french\n4 <silence>\tsure\n5 thanks\tbye\n\n";
        let d = parse_corpus(text, "t".as_ref()).unwrap();
        let c = CandidateSet::from_dialogs([d.as_slice()]);
        let v = Vocabulary::build(&d, c.utterances().iter().map(String::as_str));
        (d, v, c)
    }

    #[test]
    fn examples_per_system_turn_and_memory_layout() {
        let (d, v, c) = toy();
        let f = CandidateFeatures::new(&c, &v, &lexicon());
        let fd = make_examples(&d[0], &v, &c, &f).unwrap();
        assert_eq!(fd.examples.len(), 4);
        let first = fd.view(0, DEFAULT_MEMORY_CAPACITY);
        assert!(first.memories.is_empty());
        assert_eq!(first.query, v.ids("hello").as_slice());
        let third = fd.view(2, DEFAULT_MEMORY_CAPACITY);
        // hello, hi, book french, ok, fact line
        assert_eq!(third.memories.len(), 5);
        assert_eq!(third.memories[4], v.ids("r1 R_cuisine french $agent"));
        assert_eq!(third.memories[0], v.ids("hello $user"));
        let second = fd.view(1, DEFAULT_MEMORY_CAPACITY);
        assert!(second.valid.contains(&second.gold));
        assert_eq!(second.valid.len(), 2);
        let capped = fd.view(3, 2);
        assert_eq!(capped.memories.len(), 2);
        assert_eq!(capped.memories[1], v.ids("sure $agent"));
    }

    #[test]
    fn unknown_system_utterance_is_a_consistency_error() {
        let (d, v, _) = toy();
        let c = CandidateSet::new(vec!["hi".into()]).unwrap();
        let f = CandidateFeatures::new(&c, &v, &lexicon());
        assert!(matches!(make_examples(&d[0], &v, &c, &f), Err(Error::Consistency(_))));
    }
}
