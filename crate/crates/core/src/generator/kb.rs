//! The simulated restaurant knowledge base.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, streams};

const CUISINES: &[&str] = &[
    "british", "cantonese", "french", "indian", "italian", "japanese", "korean", "spanish",
    "thai", "vietnamese",
];
const OOV_CUISINES: &[&str] = &[
    "brazilian", "ethiopian", "german", "greek", "mexican", "moroccan", "peruvian", "polish",
    "russian", "turkish",
];
const LOCATIONS: &[&str] = &[
    "bangkok", "beijing", "bombay", "hanoi", "london", "madrid", "paris", "rome", "seoul",
    "tokyo",
];
const OOV_LOCATIONS: &[&str] = &[
    "berlin", "cairo", "dublin", "lima", "moscow", "oslo", "prague", "sydney", "toronto",
    "vienna",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Cuisine,
    Location,
    Price,
    Rating,
    Phone,
    Address,
    Number,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Cuisine,
        Relation::Location,
        Relation::Price,
        Relation::Rating,
        Relation::Phone,
        Relation::Address,
        Relation::Number,
    ];

    /// Order in which a restaurant's facts are listed after an api call.
    pub const LISTING_ORDER: [Relation; 7] = [
        Relation::Phone,
        Relation::Cuisine,
        Relation::Address,
        Relation::Location,
        Relation::Number,
        Relation::Price,
        Relation::Rating,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Relation::Cuisine => "cuisine",
            Relation::Location => "location",
            Relation::Price => "price",
            Relation::Rating => "rating",
            Relation::Phone => "phone",
            Relation::Address => "address",
            Relation::Number => "number",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Token used for the relation in corpus files.
    pub fn token(self) -> &'static str {
        match self {
            Relation::Cuisine => "R_cuisine",
            Relation::Location => "R_location",
            Relation::Price => "R_price",
            Relation::Rating => "R_rating",
            Relation::Phone => "R_phone",
            Relation::Address => "R_address",
            Relation::Number => "R_number",
        }
    }

    pub fn from_token(token: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.token() == token)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.name() == s || r.token() == s)
            .ok_or_else(|| Error::Argument(format!("unknown relation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KbFact {
    pub entity: String,
    pub relation: Relation,
    pub value: String,
}

impl fmt::Display for KbFact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.entity, self.relation.token(), self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KbConfig {
    pub n_cuisines: usize,
    pub n_locations: usize,
    pub price_ranges: Vec<String>,
    /// Inclusive rating interval.
    pub rating_range: (u32, u32),
    pub party_sizes: Vec<String>,
    /// Restaurants in each (cuisine, location, price) cell.
    pub restaurants_per_cell: usize,
    pub allow_rating_ties: bool,
    /// Probability that a cell's two best restaurants share their rating,
    /// when ties are allowed. Otherwise the tie is placed lower down.
    pub top_tie_prob: f64,
    pub oov_mode: bool,
}

impl Default for KbConfig {
    fn default() -> Self {
        KbConfig {
            n_cuisines: 10,
            n_locations: 10,
            price_ranges: ["cheap", "moderate", "expensive"].map(String::from).to_vec(),
            rating_range: (1, 8),
            party_sizes: ["two", "four", "six", "eight"].map(String::from).to_vec(),
            restaurants_per_cell: 4,
            allow_rating_ties: false,
            top_tie_prob: 0.5,
            oov_mode: false,
        }
    }
}

impl KbConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_cuisines == 0 || self.n_locations == 0 {
            return bad("n_cuisines and n_locations must be at least 1");
        }
        if self.price_ranges.is_empty() || self.party_sizes.is_empty() {
            return bad("price_ranges and party_sizes must be nonempty");
        }
        if self.rating_range.0 > self.rating_range.1 {
            return bad("rating range is empty");
        }
        if self.restaurants_per_cell == 0 {
            return bad("restaurants_per_cell must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.top_tie_prob) {
            return bad("top_tie_prob must lie in [0, 1]");
        }
        let n_ratings = (self.rating_range.1 - self.rating_range.0 + 1) as usize;
        let distinct_needed = if self.allow_rating_ties {
            if self.restaurants_per_cell < 2 {
                return bad("rating ties need at least 2 restaurants per cell");
            }
            self.restaurants_per_cell - 1
        } else {
            self.restaurants_per_cell
        };
        if distinct_needed > n_ratings {
            return bad("rating range too small for restaurants_per_cell");
        }
        let tokens = self.price_ranges.iter().chain(&self.party_sizes);
        for t in tokens {
            if t.is_empty() || t.contains(char::is_whitespace) || t.contains('|') {
                return Err(Error::Config(format!("value `{t}` is not a single token")));
            }
        }
        Ok(())
    }

    pub fn cuisines(&self) -> Vec<String> {
        value_names(if self.oov_mode { OOV_CUISINES } else { CUISINES }, self.n_cuisines, self.oov_mode, "cuisine")
    }

    pub fn locations(&self) -> Vec<String> {
        value_names(if self.oov_mode { OOV_LOCATIONS } else { LOCATIONS }, self.n_locations, self.oov_mode, "location")
    }
}

fn value_names(base: &[&str], n: usize, oov: bool, kind: &str) -> Vec<String> {
    (0..n)
        .map(|i| match base.get(i) {
            Some(v) => v.to_string(),
            None if oov => format!("{kind}x{i}"),
            None => format!("{kind}{i}"),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Restaurant {
    pub name: String,
    pub cuisine: String,
    pub location: String,
    pub price: String,
    pub rating: u32,
    pub phone: String,
    pub address: String,
    pub number: String,
}

impl Restaurant {
    pub fn value(&self, relation: Relation) -> String {
        match relation {
            Relation::Cuisine => self.cuisine.clone(),
            Relation::Location => self.location.clone(),
            Relation::Price => self.price.clone(),
            Relation::Rating => self.rating.to_string(),
            Relation::Phone => self.phone.clone(),
            Relation::Address => self.address.clone(),
            Relation::Number => self.number.clone(),
        }
    }

    pub fn facts(&self) -> impl Iterator<Item = KbFact> + '_ {
        Relation::LISTING_ORDER.into_iter().map(move |relation| KbFact {
            entity: self.name.clone(),
            relation,
            value: self.value(relation),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kb {
    pub cuisines: Vec<String>,
    pub locations: Vec<String>,
    pub prices: Vec<String>,
    pub party_sizes: Vec<String>,
    restaurants: Vec<Restaurant>,
    cells: BTreeMap<(usize, usize, usize), Vec<usize>>,
    by_name: HashMap<String, usize>,
}

impl Kb {
    /// Builds one restaurant per rating slot of every (cuisine, location,
    /// price) cell. Deterministic in `(config, seed)`.
    pub fn generate(config: &KbConfig, seed: u64) -> Result<Kb> {
        config.validate()?;
        let label = if config.oov_mode { streams::OOV_KB } else { streams::KB };
        let mut rng = rng::stream(seed, label, 0);
        let cuisines = config.cuisines();
        let locations = config.locations();
        let (lo, hi) = config.rating_range;
        let per_cell = config.restaurants_per_cell;

        let mut restaurants = Vec::new();
        let mut cells = BTreeMap::new();
        let mut by_name = HashMap::new();
        for (ci, cuisine) in cuisines.iter().enumerate() {
            for (li, location) in locations.iter().enumerate() {
                for (pi, price) in config.price_ranges.iter().enumerate() {
                    let ratings = cell_ratings(lo, hi, per_cell, config, &mut rng);
                    let mut members = Vec::with_capacity(per_cell);
                    for rating in ratings {
                        let base = format!("resto_{location}_{price}_{cuisine}_{rating}stars");
                        let mut name = base.clone();
                        let mut k = 2;
                        while by_name.contains_key(&name) {
                            name = format!("{base}_{k}");
                            k += 1;
                        }
                        let number = config.party_sizes.choose(&mut rng).expect("nonempty").clone();
                        let r = Restaurant {
                            phone: format!("{name}_phone"),
                            address: format!("{name}_address"),
                            name: name.clone(),
                            cuisine: cuisine.clone(),
                            location: location.clone(),
                            price: price.clone(),
                            rating,
                            number,
                        };
                        by_name.insert(name, restaurants.len());
                        members.push(restaurants.len());
                        restaurants.push(r);
                    }
                    cells.insert((ci, li, pi), members);
                }
            }
        }
        Ok(Kb {
            cuisines,
            locations,
            prices: config.price_ranges.clone(),
            party_sizes: config.party_sizes.clone(),
            restaurants,
            cells,
            by_name,
        })
    }

    pub fn restaurants(&self) -> &[Restaurant] {
        &self.restaurants
    }

    pub fn restaurant(&self, id: usize) -> &Restaurant {
        &self.restaurants[id]
    }

    pub fn find(&self, name: &str) -> Option<&Restaurant> {
        self.by_name.get(name).map(|&i| &self.restaurants[i])
    }

    pub fn facts(&self) -> impl Iterator<Item = KbFact> + '_ {
        self.restaurants.iter().flat_map(Restaurant::facts)
    }

    /// Restaurant ids matching an api call, in KB order. `people` does not
    /// filter: every cell serves every party size.
    pub fn query(&self, cuisine: &str, location: &str, price: &str) -> Result<&[usize]> {
        let pos = |list: &[String], v: &str, what: &str| {
            list.iter()
                .position(|x| x == v)
                .ok_or_else(|| Error::Generation(format!("unknown {what} `{v}`")))
        };
        let key = (
            pos(&self.cuisines, cuisine, "cuisine")?,
            pos(&self.locations, location, "location")?,
            pos(&self.prices, price, "price")?,
        );
        Ok(self.cells[&key].as_slice())
    }

    /// Entity vocabulary: names, phones, addresses, cuisines and locations.
    pub fn entity_vocabulary(&self) -> impl Iterator<Item = &str> {
        self.restaurants
            .iter()
            .flat_map(|r| [r.name.as_str(), r.phone.as_str(), r.address.as_str()])
            .chain(self.cuisines.iter().map(String::as_str))
            .chain(self.locations.iter().map(String::as_str))
    }

    /// Text form: one fact per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for fact in self.facts() {
            out.push_str(&fact.to_string());
            out.push('\n');
        }
        out
    }

    /// Rebuilds a KB from [`Kb::to_text`] output.
    pub fn from_text(text: &str) -> Result<Kb> {
        let mut partial: Vec<(String, BTreeMap<Relation, String>)> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(' ').collect();
            let relation = (parts.len() == 3).then(|| Relation::from_token(parts[1])).flatten();
            let Some(relation) = relation else {
                return Err(Error::Parse {
                    path: "<kb>".into(),
                    line: n + 1,
                    msg: "expected `<restaurant> <relation> <value>`".into(),
                });
            };
            let slot = *index.entry(parts[0].to_string()).or_insert_with(|| {
                partial.push((parts[0].to_string(), BTreeMap::new()));
                partial.len() - 1
            });
            partial[slot].1.insert(relation, parts[2].to_string());
        }
        let mut restaurants = Vec::with_capacity(partial.len());
        for (name, rel) in partial {
            let get = |r: Relation| {
                rel.get(&r).cloned().ok_or_else(|| {
                    Error::Consistency(format!("restaurant `{name}` lacks relation {r}"))
                })
            };
            let rating = get(Relation::Rating)?
                .parse()
                .map_err(|_| Error::Consistency(format!("bad rating for `{name}`")))?;
            restaurants.push(Restaurant {
                cuisine: get(Relation::Cuisine)?,
                location: get(Relation::Location)?,
                price: get(Relation::Price)?,
                rating,
                phone: get(Relation::Phone)?,
                address: get(Relation::Address)?,
                number: get(Relation::Number)?,
                name,
            });
        }
        Ok(Kb::from_restaurants(restaurants))
    }

    pub fn from_restaurants(restaurants: Vec<Restaurant>) -> Kb {
        fn ordered(values: impl Iterator<Item = String>) -> Vec<String> {
            let mut out: Vec<String> = Vec::new();
            for v in values {
                if !out.contains(&v) {
                    out.push(v);
                }
            }
            out
        }
        let cuisines = ordered(restaurants.iter().map(|r| r.cuisine.clone()));
        let locations = ordered(restaurants.iter().map(|r| r.location.clone()));
        let prices = ordered(restaurants.iter().map(|r| r.price.clone()));
        let party_sizes = ordered(restaurants.iter().map(|r| r.number.clone()));
        let mut cells: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        let mut by_name = HashMap::new();
        for (i, r) in restaurants.iter().enumerate() {
            let key = (
                cuisines.iter().position(|c| *c == r.cuisine).unwrap(),
                locations.iter().position(|c| *c == r.location).unwrap(),
                prices.iter().position(|c| *c == r.price).unwrap(),
            );
            cells.entry(key).or_default().push(i);
            by_name.insert(r.name.clone(), i);
        }
        Kb {
            cuisines,
            locations,
            prices,
            party_sizes,
            restaurants,
            cells,
            by_name,
        }
    }
}

fn cell_ratings<R: Rng + ?Sized>(
    lo: u32,
    hi: u32,
    per_cell: usize,
    config: &KbConfig,
    rng: &mut R,
) -> Vec<u32> {
    if !config.allow_rating_ties {
        let mut r = (lo..=hi).choose_multiple(rng, per_cell);
        r.sort_unstable_by(|a, b| b.cmp(a));
        return r;
    }
    let mut distinct = (lo..=hi).choose_multiple(rng, per_cell - 1);
    distinct.sort_unstable_by(|a, b| b.cmp(a));
    let tie = if distinct.len() == 1 || rng.gen_bool(config.top_tie_prob) {
        distinct[0]
    } else {
        distinct[rng.gen_range(1..distinct.len())]
    };
    distinct.push(tie);
    distinct.sort_unstable_by(|a, b| b.cmp(a));
    distinct
}
