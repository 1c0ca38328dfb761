use std::collections::{BTreeSet, HashMap};

use crate::generator::{AnnotatedDialog, Line, Relation};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const USER_TOKEN: &str = "$user";
pub const AGENT_TOKEN: &str = "$agent";

/// Id of the first type token; the rest follow in [`Relation::ALL`] order.
pub const TYPE_BASE: u32 = 4;

/// Type token for each KB relation, in [`Relation::ALL`] order.
pub const TYPE_TOKENS: [&str; 7] = [
    "#cuisine", "#location", "#price", "#rating", "#phone", "#address", "#number",
];

pub fn type_token(relation: Relation) -> &'static str {
    TYPE_TOKENS[relation.index()]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Specials and reserved tokens first, then every token of the training
    /// corpus and of the candidate list in sorted order.
    pub fn build<'a>(train: &[AnnotatedDialog], candidates: impl IntoIterator<Item = &'a str>) -> Self {
        let mut words = BTreeSet::new();
        for d in train {
            for line in &d.lines {
                match line {
                    Line::Exchange(t) => {
                        words.extend(t.user.split_whitespace().map(str::to_string));
                        for a in &t.answers {
                            words.extend(a.split_whitespace().map(str::to_string));
                        }
                    }
                    Line::Fact(f) => {
                        words.insert(f.entity.clone());
                        words.insert(f.relation.token().to_string());
                        words.insert(f.value.clone());
                    }
                }
            }
        }
        for c in candidates {
            words.extend(c.split_whitespace().map(str::to_string));
        }
        let reserved = [PAD_TOKEN, UNK_TOKEN, USER_TOKEN, AGENT_TOKEN]
            .into_iter()
            .chain(TYPE_TOKENS)
            .map(str::to_string);
        let mut tokens: Vec<String> = reserved.collect();
        let rest: Vec<String> = words.into_iter().filter(|w| !tokens.contains(w)).collect();
        tokens.extend(rest);
        Vocabulary::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id order, as stored in checkpoints.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.len() < 4 || tokens[TYPE_BASE as usize] == TYPE_TOKENS[0]);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn ids(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(|w| self.id(w)).collect()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Turn;

    const N_SPECIAL: usize = 4 + 7;

    fn dialog(user: &str, system: &str) -> AnnotatedDialog {
        AnnotatedDialog {
            lines: vec![Line::Exchange(Turn {
                user: user.into(),
                answers: vec![system.into()],
            })],
        }
    }

    #[test]
    fn size_is_distinct_tokens_plus_specials() {
        // 12 distinct tokens
        let d = dialog("a b c d e f", "g h i j k l a b");
        let v = Vocabulary::build(&[d], []);
        assert_eq!(v.len(), 12 + N_SPECIAL);
        assert_eq!(v.id(PAD_TOKEN), PAD);
        assert_eq!(v.id("never-seen"), UNK);
    }

    #[test]
    fn candidates_contribute_tokens_and_ids_are_stable() {
        let d = dialog("hello", "hi");
        let v1 = Vocabulary::build(std::slice::from_ref(&d), ["here it is x_phone"]);
        let v2 = Vocabulary::build(&[d], ["here it is x_phone"]);
        assert_eq!(v1, v2);
        assert!(v1.contains("x_phone"));
        assert_eq!(Vocabulary::from_tokens(v1.tokens().to_vec()), v1);
    }
}
