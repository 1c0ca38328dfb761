use rand::seq::index;

use super::dialog::{AnnotatedDialog, Mode};
use super::goal::sample_goal;
use super::kb::{Kb, KbConfig};
use super::patterns::Patterns;
use super::simulator::simulate_dialog;
use crate::error::{Error, Result};
use crate::rng::{self, streams};

/// Seed used for drawing the 1000-dialog subsets.
pub const SUBSET_SEED: u64 = 599;
pub const SUBSET_SIZE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    TestOov,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::TestOov];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::TestOov => "test_oov",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown split `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub kb: KbConfig,
    pub mode: Mode,
    pub update_prob: f64,
}

impl CorpusConfig {
    pub fn new(mode: Mode) -> Self {
        CorpusConfig {
            kb: KbConfig::default(),
            mode,
            update_prob: 0.5,
        }
    }

    /// KB settings actually used for `mode`: ties only in permuted mode.
    pub fn kb_config(&self, oov: bool) -> KbConfig {
        KbConfig {
            allow_rating_ties: self.mode == Mode::Permuted,
            oov_mode: oov,
            ..self.kb.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub test_oov: usize,
}

impl SplitSizes {
    pub fn uniform(n: usize) -> Self {
        SplitSizes {
            train: n,
            val: n,
            test: n,
            test_oov: n,
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
            Split::TestOov => self.test_oov,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpora {
    pub kb: Kb,
    pub oov_kb: Kb,
    pub train: Vec<AnnotatedDialog>,
    pub val: Vec<AnnotatedDialog>,
    pub test: Vec<AnnotatedDialog>,
    pub test_oov: Vec<AnnotatedDialog>,
}

impl Corpora {
    pub fn split(&self, split: Split) -> &[AnnotatedDialog] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
            Split::TestOov => &self.test_oov,
        }
    }

    /// The 1000-dialog release subsets (or fewer when a split is smaller).
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Corpora> {
        let take = |d: &[AnnotatedDialog]| sample_subset(d, n.min(d.len()), seed);
        Ok(Corpora {
            kb: self.kb.clone(),
            oov_kb: self.oov_kb.clone(),
            train: take(&self.train)?,
            val: take(&self.val)?,
            test: take(&self.test)?,
            test_oov: take(&self.test_oov)?,
        })
    }
}

/// Generates the dialogs of one split. Dialog `i` draws from its own
/// stream, so the output does not depend on generation order.
pub fn generate_split(
    config: &CorpusConfig,
    kb: &Kb,
    split: Split,
    n: usize,
    seed: u64,
    patterns: &Patterns,
) -> Result<Vec<AnnotatedDialog>> {
    let label = format!("{}/{}", streams::DIALOG, split.name());
    (0..n as u64)
        .map(|i| {
            let mut r = rng::stream(seed, &label, i);
            let goal = sample_goal(kb, config.update_prob, &mut r);
            simulate_dialog(&goal, kb, config.mode, patterns, &mut r)
        })
        .collect()
}

pub fn generate_corpus(
    config: &CorpusConfig,
    sizes: SplitSizes,
    seed: u64,
    patterns: &Patterns,
) -> Result<Corpora> {
    if Split::ALL.iter().any(|&s| sizes.get(s) == 0) {
        return Err(Error::Argument("every split needs at least one dialog".into()));
    }
    if !(0.0..=1.0).contains(&config.update_prob) {
        return Err(Error::Config("update_prob must lie in [0, 1]".into()));
    }
    let kb = Kb::generate(&config.kb_config(false), seed)?;
    let oov_kb = Kb::generate(&config.kb_config(true), seed)?;
    let gen = |split: Split, kb: &Kb| generate_split(config, kb, split, sizes.get(split), seed, patterns);
    Ok(Corpora {
        train: gen(Split::Train, &kb)?,
        val: gen(Split::Val, &kb)?,
        test: gen(Split::Test, &kb)?,
        test_oov: gen(Split::TestOov, &oov_kb)?,
        kb,
        oov_kb,
    })
}

/// Uniform sample of `n` dialogs without replacement, kept in corpus order.
pub fn sample_subset<T: Clone>(dialogs: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > dialogs.len() {
        return Err(Error::Argument(format!(
            "cannot sample {n} dialogs from {}",
            dialogs.len()
        )));
    }
    let mut r = rng::stream(seed, streams::SUBSET, 0);
    let mut picked = index::sample(&mut r, dialogs.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| dialogs[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_contracts() {
        let items: Vec<u32> = (0..11_000).collect();
        let a = sample_subset(&items, 1000, SUBSET_SEED).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, sample_subset(&items, 1000, SUBSET_SEED).unwrap());
        assert_ne!(a, sample_subset(&items, 1000, 600).unwrap());
        assert_eq!(sample_subset(&items[..50], 50, 1).unwrap(), items[..50].to_vec());
        assert!(matches!(sample_subset(&items[..5], 6, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn corpus_is_pure_in_seed() {
        let p = Patterns::default();
        let c = CorpusConfig::new(Mode::Permuted);
        let a = generate_corpus(&c, SplitSizes::uniform(20), 4, &p).unwrap();
        let b = generate_corpus(&c, SplitSizes::uniform(20), 4, &p).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test_oov, b.test_oov);
        // Dialog i does not depend on how many dialogs are generated.
        let small = generate_corpus(&c, SplitSizes::uniform(5), 4, &p).unwrap();
        assert_eq!(small.train[..], a.train[..5]);
    }

    #[test]
    fn original_corpus_is_singleton() {
        let p = Patterns::default();
        let c = CorpusConfig::new(Mode::Original);
        let a = generate_corpus(&c, SplitSizes::uniform(50), 8, &p).unwrap();
        for split in Split::ALL {
            assert!(a.split(split).iter().all(|d| d.max_answer_set() == 1));
        }
    }

    #[test]
    fn zero_size_rejected() {
        let p = Patterns::default();
        let c = CorpusConfig::new(Mode::Original);
        let mut sizes = SplitSizes::uniform(3);
        sizes.val = 0;
        assert!(generate_corpus(&c, sizes, 0, &p).is_err());
    }
}
