use std::collections::HashMap;

use crate::generator::{AnnotatedDialog, Kb, KbFact, Relation};

/// Maps entity words to their KB relation, for match-type features.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityLexicon {
    types: HashMap<String, Relation>,
}

impl EntityLexicon {
    pub fn from_facts<'a>(facts: impl IntoIterator<Item = &'a KbFact>) -> Self {
        let mut lex = EntityLexicon::default();
        lex.add_facts(facts);
        lex
    }

    pub fn from_kb(kb: &Kb) -> Self {
        let facts: Vec<KbFact> = kb.facts().collect();
        EntityLexicon::from_facts(&facts)
    }

    pub fn add_facts<'a>(&mut self, facts: impl IntoIterator<Item = &'a KbFact>) {
        for f in facts {
            self.types.entry(f.value.clone()).or_insert(f.relation);
        }
    }

    /// Adds the values of every KB result line in `dialogs`.
    pub fn add_dialogs(&mut self, dialogs: &[AnnotatedDialog]) {
        for d in dialogs {
            self.add_facts(d.kb_results());
        }
    }

    /// Type of `word`, from the KB or from the phone/address surface form.
    pub fn type_of(&self, word: &str) -> Option<Relation> {
        if let Some(&r) = self.types.get(word) {
            return Some(r);
        }
        if word.ends_with("_phone") {
            Some(Relation::Phone)
        } else if word.ends_with("_address") {
            Some(Relation::Address)
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }
}
