//! Synthetic planted-facts corpus with matching word embeddings.
//!
//! Each article states one fact (who did what to which object, where) next
//! to a distractor fact, followed by a sentence that opens with the landmark
//! of the fact's city. The one-sentence summary restates the fact in one of
//! two word orders, so its city is what predicts the sentence after the
//! oracle.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::Document;
use crate::embed::EmbeddingTable;

const PERSONS: &[&str] = &[
    "alvarez",
    "brennan",
    "castillo",
    "dimitrov",
    "eriksen",
    "fontaine",
    "gallagher",
    "haddad",
    "ivanova",
    "jensen",
    "kowalski",
    "lindqvist",
    "moreau",
    "nakamura",
    "okafor",
    "petrova",
    "quintero",
    "rasmussen",
    "sato",
    "tanaka",
    "ulrich",
    "varga",
    "weber",
    "xu",
    "yilmaz",
    "zhang",
    "abara",
    "bianchi",
    "costa",
    "dubois",
];

const ORGS: &[&str] = &[
    "acme",
    "borealis",
    "cobalt",
    "dynacorp",
    "evergreen",
    "fulcrum",
    "granite",
    "helix",
    "ironwood",
    "juniper",
    "keystone",
    "lumen",
    "meridian",
    "northwind",
    "orion",
    "pinnacle",
];

/// Cities paired with a landmark unique to each.
const CITIES: &[(&str, &str)] = &[
    ("lisbon", "belem"),
    ("oslo", "fram"),
    ("cairo", "giza"),
    ("lima", "miraflores"),
    ("quito", "panecillo"),
    ("dublin", "liffey"),
    ("vienna", "prater"),
    ("prague", "vltava"),
    ("madrid", "retiro"),
    ("athens", "acropolis"),
    ("nairobi", "karura"),
    ("hanoi", "hoankiem"),
    ("seoul", "namsan"),
    ("manila", "intramuros"),
    ("bogota", "monserrate"),
    ("havana", "malecon"),
    ("krakow", "wawel"),
    ("porto", "ribeira"),
    ("zurich", "limmat"),
    ("riga", "daugava"),
];

const OBJECTS: &[&str] = &[
    "factory",
    "warehouse",
    "bridge",
    "stadium",
    "laboratory",
    "hospital",
    "terminal",
    "refinery",
    "museum",
    "library",
    "depot",
    "tower",
    "harbor",
    "campus",
    "pipeline",
    "reactor",
    "observatory",
    "brewery",
    "clinic",
    "foundry",
];

const VERBS: &[&str] = &[
    "opened",
    "closed",
    "sold",
    "bought",
    "inspected",
    "expanded",
    "renovated",
    "designed",
    "funded",
    "demolished",
    "audited",
    "relocated",
];

const FILLER: &[&str] = &[
    "shares",
    "rose",
    "fell",
    "monday",
    "tuesday",
    "analysts",
    "officials",
    "welcomed",
    "criticized",
    "news",
    "decision",
    "year",
    "last",
    "week",
    "reported",
    "quarter",
    "profits",
    "investors",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub docs: usize,
    pub seed: u64,
    pub embed_dim: usize,
    /// Standard deviation of per-word noise around its category centroid.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            docs: 200,
            seed: 0,
            embed_dim: 16,
            noise: 0.35,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: Vec<Document>,
    pub embeddings: EmbeddingTable,
}

fn pick_other<'a, R: Rng>(pool: &[&'a str], not: &str, rng: &mut R) -> &'a str {
    loop {
        let w = pool.choose(rng).expect("nonempty pool");
        if *w != not {
            return w;
        }
    }
}

/// Generates `config.docs` documents with ids `doc0000`, `doc0001`, ...
pub fn generate(config: &SynthConfig) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cities: Vec<&str> = CITIES.iter().map(|c| c.0).collect();
    let mut docs = Vec::with_capacity(config.docs);
    for i in 0..config.docs {
        let person = *PERSONS.choose(&mut rng).unwrap();
        let verb = *VERBS.choose(&mut rng).unwrap();
        let object = *OBJECTS.choose(&mut rng).unwrap();
        let org = *ORGS.choose(&mut rng).unwrap();
        let &(city, landmark) = CITIES.choose(&mut rng).unwrap();
        let person2 = pick_other(PERSONS, person, &mut rng);
        let verb2 = pick_other(VERBS, verb, &mut rng);
        let object2 = pick_other(OBJECTS, object, &mut rng);
        let city2 = pick_other(&cities, city, &mut rng);
        let day = ["monday", "tuesday"].choose(&mut rng).unwrap();
        let article = [
            format!("{person2} {verb2} a {object2} in {city2} last year ."),
            format!("{person} {verb} the {object} in {city} ."),
            format!("{landmark} officials welcomed the decision on {day} ."),
            format!("{org} shares rose as analysts reported the news ."),
        ];
        let summary = if rng.random_bool(0.5) {
            [format!("{person} {verb} the {object} in {city} , {org} said .")]
        } else {
            [format!("in {city} , {person} {verb} the {object} .")]
        };
        docs.push(Document::from_sentences(&format!("doc{i:04}"), &article, &summary).expect("nonempty text"));
    }
    SynthCorpus {
        docs,
        embeddings: embeddings(config, &mut rng),
    }
}

fn embeddings<R: Rng>(config: &SynthConfig, rng: &mut R) -> EmbeddingTable {
    let unit = Normal::new(0.0, 1.0).expect("valid");
    let noise = Normal::new(0.0, config.noise).expect("valid noise");
    let landmarks: Vec<&str> = CITIES.iter().map(|c| c.1).collect();
    let cities: Vec<&str> = CITIES.iter().map(|c| c.0).collect();
    let groups: [&[&str]; 7] = [PERSONS, ORGS, &cities, &landmarks, OBJECTS, VERBS, FILLER];
    let mut entries = Vec::new();
    for group in groups {
        let centroid: Vec<f64> = (0..config.embed_dim).map(|_| unit.sample(rng)).collect();
        for w in group {
            let v = centroid.iter().map(|c| c + noise.sample(rng)).collect();
            entries.push((w.to_string(), v));
        }
    }
    EmbeddingTable::from_entries("synthetic", entries).expect("nonempty table")
}
