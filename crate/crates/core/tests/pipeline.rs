mod common;

use common::{planted_corpus, planted_model, NEGATIVE_CONSENSUS, POSITIVE_CONSENSUS};
use rhs_core::corpus::Review;
use rhs_core::helpfulness::train_tfidf_ridge;
use rhs_core::rhs::{select_rhs, Pipeline, PipelineConfig, SelectionConfig, SimilaritySpace, SupportConfig};
use rhs_core::sentiment::{LexiconProvider, SentimentLabel};
use rhs_core::textvec::{EmbeddingStore, TokenizerConfig, VocabularyConfig};
use rhs_core::Error;

fn same_tokens(a: &str, b: &str) -> bool {
    let norm = |s: &str| {
        s.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    };
    norm(a) == norm(b)
}

#[test]
fn planted_consensus_is_selected() {
    let corpus = planted_corpus(1, 8, 6);
    let model = planted_model(&corpus);
    let lex = LexiconProvider::default();
    let out = select_rhs(
        &corpus.reviews,
        &model,
        &lex,
        SimilaritySpace::IdfBowPerProduct,
        SupportConfig::default(),
        SelectionConfig::default(),
    )
    .unwrap();
    let pos = out.positive.as_ref().expect("positive pick");
    let neg = out.negative.as_ref().expect("negative pick");
    assert!(
        same_tokens(&pos.sentence.text, POSITIVE_CONSENSUS),
        "{}",
        pos.sentence.text
    );
    assert!(
        same_tokens(&neg.sentence.text, NEGATIVE_CONSENSUS),
        "{}",
        neg.sentence.text
    );
    assert_eq!((pos.support, neg.support), (7, 5));
    assert_eq!(pos.sentiment.label, SentimentLabel::Positive);
    assert_eq!(neg.sentiment.label, SentimentLabel::Negative);
    assert!(pos.helpfulness >= 1.0 && neg.helpfulness >= 1.0);
    assert_eq!(pos.supporters.len(), 5);
    assert!(pos.supporters.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    let d = out.diagnostics;
    assert_eq!(d.positive_supported, 8);
    assert_eq!(d.negative_supported, 6);
    assert!(d.input_sentences >= d.after_length_gate && d.after_length_gate >= d.after_helpfulness_gate);
    assert_eq!(
        d.after_helpfulness_gate,
        d.positive_pool + d.negative_pool + d.neutral_discarded + d.mixed_discarded
    );
}

#[test]
fn too_few_duplicates_gives_no_pick() {
    let corpus = planted_corpus(1, 5, 5);
    let model = planted_model(&corpus);
    let out = select_rhs(
        &corpus.reviews,
        &model,
        &LexiconProvider::default(),
        SimilaritySpace::IdfBowPerProduct,
        SupportConfig::default(),
        SelectionConfig::default(),
    )
    .unwrap();
    assert!(out.positive.is_none() && out.negative.is_none());
    assert_eq!(
        out.diagnostics.positive_supported + out.diagnostics.negative_supported,
        0
    );

    // the relaxed configuration still picks something from the same pools
    let relaxed = select_rhs(
        &corpus.reviews,
        &model,
        &LexiconProvider::default(),
        SimilaritySpace::IdfBowPerProduct,
        SupportConfig::relaxed(),
        SelectionConfig::default(),
    )
    .unwrap();
    assert!(relaxed.positive.is_some() && relaxed.negative.is_some());
}

#[test]
fn nothing_helpful_means_no_pick() {
    let corpus = planted_corpus(2, 8, 6);
    let mut training = corpus.training.clone();
    for t in &mut training {
        t.helpfulness = 0.4;
    }
    let model = train_tfidf_ridge(&training, 1.0, TokenizerConfig::default(), &VocabularyConfig::default()).unwrap();
    let out = select_rhs(
        &corpus.reviews,
        &model,
        &LexiconProvider::default(),
        SimilaritySpace::IdfBowPerProduct,
        SupportConfig::default(),
        SelectionConfig::default(),
    )
    .unwrap();
    assert!(out.positive.is_none() && out.negative.is_none());
    assert_eq!(out.diagnostics.after_helpfulness_gate, 0);
}

#[test]
fn selection_is_deterministic() {
    let corpus = planted_corpus(3, 8, 6);
    let model = planted_model(&corpus);
    let lex = LexiconProvider::default();
    let run = || {
        serde_json::to_string(
            &select_rhs(
                &corpus.reviews,
                &model,
                &lex,
                SimilaritySpace::IdfBowPerProduct,
                SupportConfig::default(),
                SelectionConfig::default(),
            )
            .unwrap(),
        )
        .unwrap()
    };
    let first = run();
    for _ in 0..5 {
        assert_eq!(run(), first);
    }
}

#[test]
fn model_space_similarity_also_finds_consensus() {
    let corpus = planted_corpus(4, 8, 6);
    let model = planted_model(&corpus);
    let tfidf = model.tfidf.clone().unwrap();
    let out = Pipeline {
        model: &model,
        features: None,
        provider: &LexiconProvider::default(),
        similarity: SimilaritySpace::Embedder(&tfidf),
        config: PipelineConfig::default(),
    }
    .select(&corpus.reviews)
    .unwrap();
    assert!(same_tokens(&out.positive.unwrap().sentence.text, POSITIVE_CONSENSUS));
}

#[test]
fn errors_carry_stage_labels() {
    let corpus = planted_corpus(5, 8, 6);
    let mut model = planted_model(&corpus);
    model.tfidf = None;
    model.feature_space = "external:enc".into();
    let store = EmbeddingStore::new("enc", model.dim());
    let err = Pipeline {
        model: &model,
        features: Some(&store),
        provider: &LexiconProvider::default(),
        similarity: SimilaritySpace::IdfBowPerProduct,
        config: PipelineConfig::default(),
    }
    .select(&corpus.reviews)
    .unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "predict", .. }), "{err}");
}

#[test]
fn mixed_products_and_empty_input() {
    let corpus = planted_corpus(6, 8, 6);
    let model = planted_model(&corpus);
    let lex = LexiconProvider::default();
    let mut reviews = corpus.reviews.clone();
    reviews.push(Review {
        review_id: "x".into(),
        product_id: "P2".into(),
        text: "Another product entirely, and that is fine by me.".into(),
        helpful_votes: None,
        star_rating: None,
    });
    let sel = |r: &[Review]| {
        select_rhs(
            r,
            &model,
            &lex,
            SimilaritySpace::IdfBowPerProduct,
            SupportConfig::default(),
            SelectionConfig::default(),
        )
    };
    assert!(matches!(sel(&reviews), Err(Error::InvalidInput(_))));
    let empty = sel(&[]).unwrap();
    assert_eq!(empty.product_id, "");
    assert!(empty.positive.is_none() && empty.negative.is_none());
}
