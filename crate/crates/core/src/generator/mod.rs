//! Restaurant-reservation dialog simulation and corpus files.

pub mod corpus;
pub mod dialog;
pub mod format;
pub mod goal;
pub mod kb;
pub mod patterns;
pub mod simulator;

pub use corpus::{generate_corpus, sample_subset, Corpora, CorpusConfig, Split, SplitSizes};
pub use dialog::{AnnotatedDialog, Line, Mode, Turn};
pub use format::{emit_corpus, emit_corpus_file, parse_corpus, parse_dialog_file};
pub use goal::{sample_goal, Goal, Slot};
pub use kb::{Kb, KbConfig, KbFact, Relation, Restaurant};
pub use patterns::Patterns;
pub use simulator::{enumerate_valid_next, simulate_dialog, valid_utterances, DialogState, Phase, SystemAct};
