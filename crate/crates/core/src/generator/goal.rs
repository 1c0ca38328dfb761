use std::fmt;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

use super::kb::Kb;

/// The four fields an api call needs, in api-call argument order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slot {
    Cuisine,
    Location,
    People,
    Price,
}

impl Slot {
    /// Also the fixed question order of the original tasks.
    pub const ALL: [Slot; 4] = [Slot::Cuisine, Slot::Location, Slot::People, Slot::Price];

    pub fn name(self) -> &'static str {
        match self {
            Slot::Cuisine => "cuisine",
            Slot::Location => "location",
            Slot::People => "people",
            Slot::Price => "price",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn values(self, kb: &Kb) -> &[String] {
        match self {
            Slot::Cuisine => &kb.cuisines,
            Slot::Location => &kb.locations,
            Slot::People => &kb.party_sizes,
            Slot::Price => &kb.prices,
        }
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Goal {
    /// Indexed by [`Slot::index`].
    pub values: [String; 4],
    /// Slots the user states in the opening request.
    pub initially_given: Vec<Slot>,
    /// Revision made after the first api call.
    pub update: Option<(Slot, String)>,
}

impl Goal {
    pub fn value(&self, slot: Slot) -> &str {
        &self.values[slot.index()]
    }

    pub fn missing(&self) -> Vec<Slot> {
        Slot::ALL
            .into_iter()
            .filter(|s| !self.initially_given.contains(s))
            .collect()
    }

    pub fn is_given(&self, slot: Slot) -> bool {
        self.initially_given.contains(&slot)
    }
}

/// Draws a goal: slot values uniform over the KB vocabularies, the number
/// of initially given slots uniform over 0..=4, and a revision with
/// probability `update_prob`.
pub fn sample_goal<R: Rng + ?Sized>(kb: &Kb, update_prob: f64, rng: &mut R) -> Goal {
    let values = Slot::ALL.map(|s| s.values(kb).choose(rng).expect("nonempty KB").clone());
    let n_given = rng.gen_range(0..=4);
    let mut initially_given = Slot::ALL.into_iter().choose_multiple(rng, n_given);
    initially_given.sort();
    let update = if rng.gen_bool(update_prob) {
        let slot = *Slot::ALL.choose(rng).expect("nonempty");
        let current = &values[slot.index()];
        let alternatives: Vec<&String> = slot.values(kb).iter().filter(|v| *v != current).collect();
        alternatives.choose(rng).map(|v| (slot, (*v).clone()))
    } else {
        None
    };
    Goal {
        values,
        initially_given,
        update,
    }
}
