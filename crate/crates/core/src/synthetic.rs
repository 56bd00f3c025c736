//! Small generated corpora for smoke tests and sanity runs.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{conll2003_tags, trec_labels, LabeledCorpus, TaggedCorpus, TaggedSentence};

/// Each sentence is filler words with one class keyword inserted at a random
/// position; the keyword determines the label.
pub fn keyword_task(n: usize, classes: usize, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fillers: Vec<String> = (0..24).map(|i| format!("w{i}")).collect();
    let mut corpus = LabeledCorpus {
        sentences: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        fine: vec![None; n],
        label_names: (0..classes).map(|c| c.to_string()).collect(),
    };
    for i in 0..n {
        let label = i % classes;
        let len = rng.random_range(3..=7);
        let mut s: Vec<String> = (0..len).map(|_| fillers.choose(&mut rng).expect("fillers").clone()).collect();
        let at = rng.random_range(0..=len);
        s.insert(at, format!("key{label}"));
        corpus.sentences.push(s);
        corpus.labels.push(label);
    }
    corpus
}

const ABBR: &[&str] = &["what does {x} stand for ?", "what is the abbreviation for {x} ?", "what is {x} short for ?"];
const DESC: &[&str] = &["what is {x} ?", "why do {x} {v} ?", "how does {x} {v} ?", "what does {x} mean ?"];
const ENTY: &[&str] = &["what {n} did {x} {v} ?", "which {n} is used for {x} ?", "what kind of {n} is {x} ?"];
const HUM: &[&str] = &["who {v} {x} ?", "who was {x} ?", "what person {v} {x} ?", "name the {n} who {v} {x} ."];
const LOC: &[&str] = &["where is {x} ?", "where did {x} {v} ?", "what country has {x} ?", "in what city is {x} ?"];
const NUM: &[&str] = &["how many {n} does {x} have ?", "when did {x} {v} ?", "how far is {x} ?", "how much does {x} cost ?"];

const NAMES: &[&str] = &[
    "nasa", "the eiffel tower", "mars", "penicillin", "the bible", "tokyo", "jazz", "the amazon", "shakespeare", "bitcoin",
    "the moon", "the titanic", "chess", "einstein", "coffee", "the nile", "dna", "rome", "the internet", "gold",
    "the beatles", "everest", "the euro", "sushi", "a volcano", "the opera", "oxygen", "the pyramids", "baseball", "a comet",
];
const VERBS: &[&str] = &["invent", "build", "discover", "visit", "win", "found", "paint", "write", "sink", "grow"];
const NOUNS: &[&str] = &["people", "islands", "books", "animals", "colors", "songs", "planets", "cars", "players", "languages"];

/// Question-like sentences over the six coarse question categories, written
/// from per-category templates.
pub fn question_task(n: usize, seed: u64) -> LabeledCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates = [ABBR, DESC, ENTY, HUM, LOC, NUM];
    let mut corpus = LabeledCorpus {
        sentences: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        fine: Vec::with_capacity(n),
        label_names: trec_labels(),
    };
    for _ in 0..n {
        let label = rng.random_range(0..templates.len());
        let t = templates[label].choose(&mut rng).expect("templates");
        let text = t
            .replace("{x}", NAMES.choose(&mut rng).expect("names"))
            .replace("{v}", VERBS.choose(&mut rng).expect("verbs"))
            .replace("{n}", NOUNS.choose(&mut rng).expect("nouns"));
        corpus.sentences.push(text.split_whitespace().map(str::to_string).collect());
        corpus.labels.push(label);
        corpus.fine.push(Some("gen".to_string()));
    }
    corpus
}

const PERSONS: &[(&str, &str)] = &[("John", "Smith"), ("Maria", "Lopez"), ("Wei", "Chen"), ("Anna", "Berg")];
const ORGS: &[&str] = &["Reuters", "Siemens", "UNESCO", "Fiat"];
const PLACES: &[&str] = &["Paris", "Kenya", "Ohio", "Lima"];
const WORDS: &[&str] = &["said", "the", "on", "in", "talks", "with", "visited", "reported", "today", "shares"];

/// Sentences of lowercase filler with capitalized persons (two tokens),
/// organizations and locations, tagged in IOB2.
pub fn entity_task(n: usize, seed: u64) -> TaggedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tag_names = conll2003_tags();
    let id = |t: &str| tag_names.iter().position(|n| n == t).expect("standard tag");
    let mut sentences = Vec::with_capacity(n);
    for _ in 0..n {
        let mut tokens = Vec::new();
        let mut tags = Vec::new();
        let parts = rng.random_range(3..=6);
        for _ in 0..parts {
            match rng.random_range(0..5) {
                0 => {
                    let (first, last) = PERSONS.choose(&mut rng).expect("persons");
                    tokens.extend([first.to_string(), last.to_string()]);
                    tags.extend([id("B-PER"), id("I-PER")]);
                }
                1 => {
                    tokens.push(ORGS.choose(&mut rng).expect("orgs").to_string());
                    tags.push(id("B-ORG"));
                }
                2 => {
                    tokens.push(PLACES.choose(&mut rng).expect("places").to_string());
                    tags.push(id("B-LOC"));
                }
                _ => {
                    tokens.push(WORDS.choose(&mut rng).expect("words").to_string());
                    tags.push(id("O"));
                }
            }
        }
        let features = vec![Vec::new(); tokens.len()];
        sentences.push(TaggedSentence { tokens, features, tags });
    }
    TaggedCorpus { sentences, tag_names }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_labels_match_keywords() {
        let c = keyword_task(64, 4, 1);
        assert_eq!(c.len(), 64);
        for (s, &l) in c.sentences.iter().zip(&c.labels) {
            let keys: Vec<&String> = s.iter().filter(|t| t.starts_with("key")).collect();
            assert_eq!(keys, vec![&format!("key{l}")]);
        }
        assert_eq!(keyword_task(64, 4, 1), c);
    }

    #[test]
    fn question_task_covers_all_classes() {
        let c = question_task(300, 2);
        for k in 0..6 {
            assert!(c.labels.contains(&k));
        }
    }

    #[test]
    fn entity_task_is_valid_iob2() {
        let c = entity_task(50, 3);
        for s in &c.sentences {
            let tags = c.tag_strings(&s.tags);
            crate::data::extract_spans(&tags, false).unwrap();
            assert_eq!(tags.len(), s.tokens.len());
        }
    }
}
