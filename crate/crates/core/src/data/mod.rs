//! Turning corpora into memory-network inputs.

pub mod candidates;
pub mod dataset;
pub mod features;
pub mod lexicon;
pub mod vocab;

pub use candidates::CandidateSet;
pub use dataset::Dataset;
pub use features::{
    featurize_corpus, make_examples, match_types, position_encode, CandidateFeatures, Example,
    ExampleView, FeaturizedDialog, PositionEncoder, DEFAULT_MEMORY_CAPACITY,
};
pub use lexicon::EntityLexicon;
pub use vocab::{type_token, Vocabulary, AGENT_TOKEN, PAD, TYPE_BASE, TYPE_TOKENS, UNK, USER_TOKEN};
