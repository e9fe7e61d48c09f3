//! Synthetic corpora shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rhs_core::corpus::{AnnotatedSentence, Review, Sentence};
use rhs_core::helpfulness::{train_tfidf_ridge, RidgeModel};
use rhs_core::textvec::{TokenizerConfig, VocabularyConfig};

pub const POSITIVE_CONSENSUS: &str = "The battery life is excellent and easily lasts a full week of daily use.";
pub const NEGATIVE_CONSENSUS: &str = "The charging port broke after two weeks and the seller ignored my emails.";

const PARTS: &[&str] = &[
    "strap", "screen", "buckle", "clasp", "speaker", "menu", "charger", "case",
];
const POS_ADJ: &[&str] = &["sturdy", "sleek", "responsive", "comfortable", "crisp", "lightweight"];
const NEG_ADJ: &[&str] = &["flimsy", "noisy", "sticky", "clunky", "fragile", "confusing"];
const DEVICES: &[&str] = &["phone", "tablet", "laptop", "camera", "radio", "watch"];
const PEOPLE: &[&str] = &["sister", "father", "neighbor", "coworker", "nephew", "roommate"];
const DAYS: &[&str] = &["Monday", "Tuesday", "Thursday", "Friday", "weekend", "holiday"];
const COLORS: &[&str] = &["blue", "silver", "green", "black", "orange", "white"];

/// Surface variants with identical tokens.
fn near_duplicate(text: &str, k: usize) -> String {
    match k % 4 {
        0 => text.to_string(),
        1 => text.trim_end_matches('.').to_string() + "!",
        2 => text.to_uppercase(),
        _ => format!("{}...", text.trim_end_matches('.')),
    }
}

pub struct PlantedCorpus {
    pub reviews: Vec<Review>,
    pub training: Vec<AnnotatedSentence>,
    pub references: Vec<String>,
}

fn annotated(i: usize, text: &str, gold: f64) -> AnnotatedSentence {
    AnnotatedSentence {
        sentence: Sentence::new(&format!("train{i}"), None, 0, text),
        ratings: Vec::new(),
        helpfulness: gold,
    }
}

/// One product whose reviews repeat a helpful positive sentence
/// `pos_copies` times and a helpful negative one `neg_copies` times, mixed
/// with unique helpful opinions and unhelpful filler.
pub fn planted_corpus(seed: u64, pos_copies: usize, neg_copies: usize) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences: Vec<String> = Vec::new();
    let mut training = Vec::new();
    for k in 0..pos_copies {
        sentences.push(near_duplicate(POSITIVE_CONSENSUS, k));
    }
    for k in 0..neg_copies {
        sentences.push(near_duplicate(NEGATIVE_CONSENSUS, k));
    }
    training.push(annotated(0, POSITIVE_CONSENSUS, 1.8));
    training.push(annotated(1, NEGATIVE_CONSENSUS, 1.75));

    for (i, part) in PARTS.iter().enumerate() {
        let pos = format!(
            "The {part} is {} compared to the one on my old {}.",
            POS_ADJ[i % POS_ADJ.len()],
            DEVICES[i % DEVICES.len()]
        );
        let neg = format!(
            "Sadly my {} {part} felt {} within a month.",
            COLORS[i % COLORS.len()],
            NEG_ADJ[(i + 2) % NEG_ADJ.len()]
        );
        training.push(annotated(training.len(), &pos, 1.3));
        training.push(annotated(training.len(), &neg, 1.25));
        sentences.push(pos);
        sentences.push(neg);
    }
    for (i, person) in PEOPLE.iter().enumerate() {
        let filler = [
            format!("I ordered this for my {person} on a {} afternoon.", DAYS[i]),
            format!(
                "It came in a {} box along with a paper manual.",
                COLORS[(i + 3) % COLORS.len()]
            ),
        ];
        for f in filler {
            training.push(annotated(training.len(), &f, 0.3));
            sentences.push(f);
        }
    }
    sentences.shuffle(&mut rng);

    let mut reviews = Vec::new();
    let mut rest = sentences.as_slice();
    while !rest.is_empty() {
        let take = rng.random_range(1..=3).min(rest.len());
        let (chunk, tail) = rest.split_at(take);
        reviews.push(Review {
            review_id: format!("r{:03}", reviews.len()),
            product_id: "P1".to_string(),
            text: chunk.join(" "),
            helpful_votes: None,
            star_rating: None,
        });
        rest = tail;
    }
    PlantedCorpus {
        reviews,
        training,
        references: vec![
            "Battery life is excellent and lasts a full week.".to_string(),
            "Reviewers say the battery easily lasts a week of daily use.".to_string(),
            "Excellent battery life, a full week per charge.".to_string(),
        ],
    }
}

pub fn planted_model(corpus: &PlantedCorpus) -> RidgeModel {
    train_tfidf_ridge(
        &corpus.training,
        0.01,
        TokenizerConfig::default(),
        &VocabularyConfig::default(),
    )
    .expect("training on the planted corpus")
}

pub fn write_jsonl<T: serde::Serialize>(path: &std::path::Path, rows: &[T]) {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).unwrap();
}

/// Annotated records in the on-disk dataset layout.
pub fn training_records(data: &[AnnotatedSentence]) -> Vec<serde_json::Value> {
    data.iter()
        .map(|a| {
            serde_json::json!({
                "sentence_id": a.sentence.sentence_id,
                "sentence": a.sentence.text,
                "helpfulness": a.helpfulness,
            })
        })
        .collect()
}

fn normalized(s: &str) -> String {
    s.trim().trim_end_matches(['.', '!']).to_lowercase()
}

/// Removes near-duplicates of `text` from the reviews so that only `keep`
/// copies remain; reviews left empty are dropped.
pub fn drop_copies(reviews: &[Review], text: &str, keep: usize) -> Vec<Review> {
    let target = normalized(text);
    let mut seen = 0;
    reviews
        .iter()
        .filter_map(|r| {
            let kept: Vec<String> = rhs_core::corpus::split_sentences(&r.text)
                .into_iter()
                .filter(|s| {
                    if normalized(s) != target {
                        return true;
                    }
                    seen += 1;
                    seen <= keep
                })
                .collect();
            (!kept.is_empty()).then(|| Review {
                text: kept.join(" "),
                ..r.clone()
            })
        })
        .collect()
}

/// Number of near-duplicates of `text` in the reviews.
pub fn count_copies(reviews: &[Review], text: &str) -> usize {
    let target = normalized(text);
    reviews
        .iter()
        .flat_map(|r| rhs_core::corpus::split_sentences(&r.text))
        .filter(|s| normalized(s) == target)
        .count()
}
