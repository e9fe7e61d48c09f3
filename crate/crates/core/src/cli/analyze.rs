use std::collections::HashMap;
use std::path::Path;

use anyhow::{bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use rhs_core::annostats::{
    annotator_vs_rest_agreement, contrast_sets, internal_consistency, length_helpfulness_correlation,
    random_annotator_distribution, score_distribution, sentiment_helpfulness_probs, split_half_agreement,
    vote_convergence_curve, ContrastConfig, ReviewScores, ScoreHistogram, VoteMatrix,
};
use rhs_core::corpus::{load_reviews, preprocess_review, AnnotatedSentence};
use rhs_core::helpfulness::{HelpfulnessPrediction, RidgeModel};
use rhs_core::sentiment::sentiment_neutral_correlation;
use rhs_core::textvec::{build_idf_bow_embedder, EmbeddingStore, SentenceEmbedding};

use super::input::{self, field_map, warn_record_errors};
use super::output::sibling;
use super::{AnalyzeArgs, AnalyzeKind, GlobalArgs, Run, UsageError};

#[derive(Serialize)]
struct Correlation {
    pearson: f64,
    n: usize,
}

#[derive(Serialize)]
struct Distribution {
    #[serde(flatten)]
    histogram: ScoreHistogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    random: Option<RandomCurve>,
}

#[derive(Serialize)]
struct RandomCurve {
    votes: usize,
    probabilities: Vec<f64>,
}

pub fn run(run: &mut Run, g: &GlobalArgs, a: &AnalyzeArgs) -> Result<()> {
    let out = a.io.output.as_deref();
    match a.kind {
        AnalyzeKind::Contrast => return contrast(run, g, a),
        AnalyzeKind::VoteCurve => return vote_curve(run, g, a),
        _ => {}
    }
    let data = input::annotated(run, g, &a.io.input)?;
    match a.kind {
        AnalyzeKind::Agreement => {
            let votes = VoteMatrix::from_annotated(&data)?;
            run.emit_json(out, &annotator_vs_rest_agreement(&votes, a.trim)?)
        }
        AnalyzeKind::SplitHalf => {
            let votes = VoteMatrix::from_annotated(&data)?;
            run.emit_json(out, &split_half_agreement(&votes, g.seed)?)
        }
        AnalyzeKind::Consistency => {
            let embeddings = embed_dataset(run, &data, a.embeddings.as_deref())?;
            let gold: Vec<f64> = data.iter().map(|d| d.helpfulness).collect();
            run.emit_json(out, &internal_consistency(&embeddings, &gold, a.sigma, g.seed)?)
        }
        AnalyzeKind::Length => {
            let items: Vec<(usize, f64)> = data.iter().map(|d| (d.sentence.char_len, d.helpfulness)).collect();
            let pearson = length_helpfulness_correlation(&items)?;
            run.emit_json(
                out,
                &Correlation {
                    pearson,
                    n: items.len(),
                },
            )
        }
        AnalyzeKind::SentimentProbs => {
            let provider = input::provider(run, &a.provider)?;
            let items = text_gold(&data);
            run.emit_json(
                out,
                &sentiment_helpfulness_probs(&items, provider.as_ref(), a.helpful_floor)?,
            )
        }
        AnalyzeKind::NeutralCorrelation => {
            let provider = input::provider(run, &a.provider)?;
            let items = text_gold(&data);
            let pearson = sentiment_neutral_correlation(&items, provider.as_ref())?;
            run.emit_json(
                out,
                &Correlation {
                    pearson,
                    n: items.len(),
                },
            )
        }
        AnalyzeKind::Distribution => {
            let scores: Vec<f64> = data.iter().map(|d| d.helpfulness).collect();
            let histogram = score_distribution(&scores, a.bin_width)?;
            let random = a
                .random_votes
                .map(|votes| -> Result<RandomCurve> {
                    Ok(RandomCurve {
                        votes,
                        probabilities: random_annotator_distribution(votes, a.bin_width)?,
                    })
                })
                .transpose()?;
            if let Some(path) = out {
                run.emit(Some(&sibling(path, ".csv")), histogram.to_csv().as_bytes())?;
            }
            run.emit_json(out, &Distribution { histogram, random })
        }
        AnalyzeKind::Contrast | AnalyzeKind::VoteCurve => unreachable!(),
    }
}

fn text_gold(data: &[AnnotatedSentence]) -> Vec<(&str, f64)> {
    data.iter().map(|d| (d.sentence.text.as_str(), d.helpfulness)).collect()
}

fn embed_dataset(run: &mut Run, data: &[AnnotatedSentence], path: Option<&Path>) -> Result<Vec<SentenceEmbedding>> {
    match path {
        Some(p) => {
            run.input(p)?;
            let store = EmbeddingStore::load(p)?;
            data.iter()
                .map(|d| {
                    let id = &d.sentence.sentence_id;
                    let v = store
                        .get(id)
                        .ok_or_else(|| anyhow::anyhow!("no embedding for sentence `{id}`"))?;
                    Ok(SentenceEmbedding::dense(
                        id.as_str(),
                        store.space_id.clone(),
                        v.to_vec(),
                    ))
                })
                .collect()
        }
        None => {
            let embedder = build_idf_bow_embedder(data.iter().map(|d| d.sentence.text.as_str()))?;
            Ok(data
                .par_iter()
                .map(|d| embedder.vectorize(&d.sentence.sentence_id, &d.sentence.text))
                .collect())
        }
    }
}

fn vote_curve(run: &mut Run, g: &GlobalArgs, a: &AnalyzeArgs) -> Result<()> {
    let data = input::annotated(run, g, &a.io.input)?;
    let votes = VoteMatrix::from_annotated(&data)?;
    let predictions: Vec<f64> = match &a.predictions {
        Some(path) => {
            let rows: Vec<HelpfulnessPrediction> = input::jsonl(run, path)?;
            let by_id: HashMap<&str, f64> = rows.iter().map(|p| (p.sentence_id.as_str(), p.raw_score)).collect();
            votes
                .row_ids()
                .iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| anyhow::anyhow!("no prediction for sentence `{id}`"))
                })
                .collect::<Result<_>>()?
        }
        None => (0..votes.n_rows())
            .map(|r| votes.row_mean(r).unwrap_or(f64::NAN))
            .collect(),
    };
    if a.resamples == 0 {
        return Err(UsageError("--resamples must be >= 1".into()).into());
    }
    let curve = vote_convergence_curve(&votes, &predictions, &a.votes, a.resamples, g.seed)?;
    if let Some(path) = a.io.output.as_deref() {
        run.emit(Some(&sibling(path, ".csv")), curve.to_csv().as_bytes())?;
    }
    run.emit_json(a.io.output.as_deref(), &curve)
}

fn contrast(run: &mut Run, g: &GlobalArgs, a: &AnalyzeArgs) -> Result<()> {
    let model_path = a
        .model
        .as_deref()
        .ok_or_else(|| UsageError("analyze contrast requires --model".into()))?;
    run.input(model_path)?;
    let model = RidgeModel::load(model_path)?;
    let bounds = input::bounds(a.gate)?;
    run.input(&a.io.input)?;
    let report = load_reviews(&a.io.input, &field_map(g)?)?;
    warn_record_errors(&a.io.input, &report.errors);
    if report.records.is_empty() {
        bail!("{}: no reviews", a.io.input.display());
    }
    let reviews: Vec<ReviewScores> = report
        .records
        .par_iter()
        .map(|r| {
            let sentences = preprocess_review(r, &bounds);
            let scores = sentences
                .iter()
                .map(|s| model.score(&s.sentence_id, &s.text, None).map(|p| p.score))
                .collect::<rhs_core::Result<Vec<f64>>>()?;
            Ok(ReviewScores {
                review_id: r.review_id.clone(),
                helpful_votes: r.helpful_votes,
                n_sentences: sentences.len(),
                scores,
            })
        })
        .collect::<rhs_core::Result<_>>()?;
    let cfg = ContrastConfig {
        helpful_floor: a.vote_floor,
        sample_size: a.sample_size,
        thresholds: a.thresholds.clone(),
        seed: g.seed,
    };
    run.emit_json(a.io.output.as_deref(), &contrast_sets(&reviews, &cfg)?)
}
