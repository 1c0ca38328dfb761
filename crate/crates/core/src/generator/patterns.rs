//! Utterance pattern sets loaded from a small sectioned key/value file.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_PATTERNS: &str = include_str!("../../data/patterns.txt");

const SYSTEM_KEYS: &[&str] = &[
    "greet",
    "on_it",
    "ask_cuisine",
    "ask_location",
    "ask_people",
    "ask_price",
    "looking",
    "api_call",
    "update_more",
    "propose",
    "other_option",
    "reserve",
    "give_phone",
    "give_address",
    "anything_else",
    "welcome",
];

const USER_KEYS: &[&str] = &[
    "silence",
    "greet",
    "request",
    "slot_cuisine",
    "slot_location",
    "slot_people",
    "slot_price",
    "answer_cuisine",
    "answer_location",
    "answer_people",
    "answer_price",
    "update_cuisine",
    "update_location",
    "update_people",
    "update_price",
    "no_update",
    "reject",
    "accept",
    "ask_phone",
    "ask_address",
    "thanks",
    "goodbye",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patterns {
    system: BTreeMap<String, String>,
    user: BTreeMap<String, Vec<String>>,
}

impl Default for Patterns {
    fn default() -> Self {
        Patterns::parse(DEFAULT_PATTERNS).expect("bundled pattern file is valid")
    }
}

impl Patterns {
    pub fn parse(text: &str) -> Result<Self> {
        let mut system = BTreeMap::new();
        let mut user: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut section = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[system]" || line == "[user]" {
                section = Some(&line[1..line.len() - 1]);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("pattern line {}: missing '='", n + 1)))?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if value.is_empty() || value.contains('|') || value.contains('\t') {
                return Err(Error::Config(format!(
                    "pattern line {}: empty value or reserved character",
                    n + 1
                )));
            }
            match section {
                Some("system") => {
                    if system.insert(key.clone(), value).is_some() {
                        return Err(Error::Config(format!("duplicate system pattern `{key}`")));
                    }
                }
                Some(_) => user.entry(key).or_default().push(value),
                None => {
                    return Err(Error::Config(format!(
                        "pattern line {}: outside of a section",
                        n + 1
                    )))
                }
            }
        }
        for key in SYSTEM_KEYS {
            if !system.contains_key(*key) {
                return Err(Error::Config(format!("missing system pattern `{key}`")));
            }
        }
        for key in USER_KEYS {
            if !user.contains_key(*key) {
                return Err(Error::Config(format!("missing user pattern `{key}`")));
            }
        }
        Ok(Patterns { system, user })
    }

    pub fn system(&self, key: &str) -> &str {
        &self.system[key]
    }

    pub fn user_variants(&self, key: &str) -> &[String] {
        &self.user[key]
    }

    pub fn pick_user<R: Rng + ?Sized>(&self, key: &str, rng: &mut R) -> &str {
        self.user[key].choose(rng).expect("nonempty")
    }

    pub fn n_system(&self) -> usize {
        self.system.len()
    }

    pub fn n_user(&self) -> usize {
        self.user.values().map(Vec::len).sum()
    }
}

/// Substitutes `{name}` placeholders.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_patterns_parse() {
        let p = Patterns::default();
        assert_eq!(p.n_system(), SYSTEM_KEYS.len());
        assert!(p.n_user() >= 40, "only {} user patterns", p.n_user());
        assert_eq!(p.system("ask_location"), "where should it be");
        assert_eq!(p.system("ask_price"), "which price range are you looking for");
        assert_eq!(p.system("looking"), "ok let me look into some options for you");
    }

    #[test]
    fn missing_key_rejected() {
        let err = Patterns::parse("[system]\ngreet = hi\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn fill_replaces_all() {
        assert_eq!(
            fill("api_call {cuisine} {location}", &[("cuisine", "thai"), ("location", "rome")]),
            "api_call thai rome"
        );
    }
}
