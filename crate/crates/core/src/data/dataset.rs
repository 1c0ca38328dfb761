use super::features::{ExampleView, FeaturizedDialog};

/// Featurized dialogs with a flat index over their system turns.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub dialogs: Vec<FeaturizedDialog>,
    index: Vec<(u32, u32)>,
}

impl Dataset {
    pub fn new(dialogs: Vec<FeaturizedDialog>) -> Self {
        let index = dialogs
            .iter()
            .enumerate()
            .flat_map(|(d, fd)| (0..fd.examples.len()).map(move |t| (d as u32, t as u32)))
            .collect();
        Dataset { dialogs, index }
    }

    pub fn n_examples(&self) -> usize {
        self.index.len()
    }

    pub fn n_dialogs(&self) -> usize {
        self.dialogs.len()
    }

    /// `(dialog, turn)` of flat example `i`.
    pub fn locate(&self, i: usize) -> (usize, usize) {
        let (d, t) = self.index[i];
        (d as usize, t as usize)
    }

    pub fn view(&self, i: usize, capacity: usize) -> ExampleView<'_> {
        let (d, t) = self.locate(i);
        self.dialogs[d].view(t, capacity)
    }

    /// Valid answer ids per dialog, per turn.
    pub fn answer_sets(&self) -> Vec<Vec<&[u32]>> {
        self.dialogs
            .iter()
            .map(|d| d.examples.iter().map(|e| e.valid.as_slice()).collect())
            .collect()
    }
}
