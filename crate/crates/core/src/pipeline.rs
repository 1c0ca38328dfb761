//! From generated corpora to datasets a model can train and be scored on.

use crate::data::{featurize_corpus, CandidateFeatures, CandidateSet, Dataset, EntityLexicon, Vocabulary};
use crate::error::Result;
use crate::generator::{AnnotatedDialog, Kb};
use crate::train::TrainData;

/// Vocabulary, candidates and featurized train/val/test splits.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub candidates: CandidateSet,
    pub lexicon: EntityLexicon,
    pub features: CandidateFeatures,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// A split scored against its own (possibly extended) candidate list.
#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub candidates: CandidateSet,
    pub features: CandidateFeatures,
    pub data: Dataset,
}

/// Lexicon from the KB result lines of `splits`, plus the KB when given.
pub fn build_lexicon(kb: Option<&Kb>, splits: &[&[AnnotatedDialog]]) -> EntityLexicon {
    let mut lexicon = kb.map(EntityLexicon::from_kb).unwrap_or_default();
    for s in splits {
        lexicon.add_dialogs(s);
    }
    lexicon
}

impl Prepared {
    /// Candidates come from all three splits; the vocabulary from the
    /// training dialogs and the candidates.
    pub fn new(train: &[AnnotatedDialog], val: &[AnnotatedDialog], test: &[AnnotatedDialog], kb: Option<&Kb>) -> Result<Self> {
        let candidates = CandidateSet::from_dialogs([train, val, test]);
        let vocab = Vocabulary::build(train, candidates.utterances().iter().map(String::as_str));
        let lexicon = build_lexicon(kb, &[train, val, test]);
        Prepared::with_vocabulary(vocab, candidates, lexicon, train, val, test)
    }

    pub fn with_vocabulary(
        vocab: Vocabulary,
        candidates: CandidateSet,
        lexicon: EntityLexicon,
        train: &[AnnotatedDialog],
        val: &[AnnotatedDialog],
        test: &[AnnotatedDialog],
    ) -> Result<Self> {
        let features = CandidateFeatures::new(&candidates, &vocab, &lexicon);
        let split = |d: &[AnnotatedDialog]| -> Result<Dataset> {
            Ok(Dataset::new(featurize_corpus(d, &vocab, &candidates, &features)?))
        };
        Ok(Prepared {
            train: split(train)?,
            val: split(val)?,
            test: split(test)?,
            vocab,
            candidates,
            lexicon,
            features,
        })
    }

    pub fn data(&self) -> TrainData<'_> {
        TrainData {
            features: &self.features,
            train: &self.train,
            val: &self.val,
            vocab_size: self.vocab.len(),
        }
    }

    /// Featurizes another split, e.g. the OOV test set. See [`eval_split`].
    pub fn eval_split(&self, dialogs: &[AnnotatedDialog], kb: Option<&Kb>) -> Result<EvalSplit> {
        eval_split(&self.vocab, &self.candidates, &self.lexicon, dialogs, kb)
    }
}

/// Featurizes `dialogs` for scoring. Utterances not in `candidates` are
/// appended to a copy of it, and the lexicon learns the entities of the
/// split's KB results, so match types fire on unseen entities. Words
/// outside the vocabulary map to the unknown token.
pub fn eval_split(
    vocab: &Vocabulary,
    candidates: &CandidateSet,
    lexicon: &EntityLexicon,
    dialogs: &[AnnotatedDialog],
    kb: Option<&Kb>,
) -> Result<EvalSplit> {
    let candidates = candidates.extended(dialogs);
    let mut lexicon = lexicon.clone();
    if let Some(kb) = kb {
        lexicon.add_facts(&kb.facts().collect::<Vec<_>>());
    }
    lexicon.add_dialogs(dialogs);
    let features = CandidateFeatures::new(&candidates, vocab, &lexicon);
    let data = Dataset::new(featurize_corpus(dialogs, vocab, &candidates, &features)?);
    Ok(EvalSplit {
        candidates,
        features,
        data,
    })
}
