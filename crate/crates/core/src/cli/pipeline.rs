use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rayon::prelude::*;

use rhs_core::corpus::{load_reviews, load_sentence_records, preprocess_review, LengthBounds, Sentence};
use rhs_core::helpfulness::{train_embedding_ridge, train_tfidf_ridge, HelpfulnessPrediction, RidgeModel};
use rhs_core::rhs::{
    group_by_product, Pipeline, PipelineConfig, RhsResult, SelectedSentence, SelectionConfig, SimilaritySpace,
    SupportConfig,
};
use rhs_core::sentiment::SentimentLabel;
use rhs_core::textvec::{EmbeddingStore, TokenizerConfig, VocabularyConfig, SPACE_IDF_BOW, SPACE_TFIDF};

use super::input::{self, field_map, warn_record_errors};
use super::output::sibling;
use super::{GateArgs, GlobalArgs, InvariantViolation, IoArgs, ProviderArgs, Run, SelectionArgs, UsageError};

pub fn ingest(run: &mut Run, g: &GlobalArgs, io: &IoArgs, gate: GateArgs) -> Result<()> {
    let bounds = input::bounds(gate)?;
    run.input(&io.input)?;
    let report = load_reviews(&io.input, &field_map(g)?)?;
    let sentences: Vec<Sentence> = report
        .records
        .par_iter()
        .flat_map_iter(|r| preprocess_review(r, &bounds))
        .collect();
    info!(
        "{} reviews, {} sentences kept, {} bad records",
        report.records.len(),
        sentences.len(),
        report.errors.len()
    );
    if !report.errors.is_empty() {
        match &io.output {
            Some(out) => run.emit_jsonl(Some(&sibling(out, ".errors.jsonl")), &report.errors)?,
            None => warn_record_errors(&io.input, &report.errors),
        }
    }
    run.emit_jsonl(io.output.as_deref(), &sentences)
}

fn model_timestamp() -> Option<String> {
    std::env::var("SOURCE_DATE_EPOCH").ok().filter(|s| !s.trim().is_empty())
}

pub fn train(
    run: &mut Run,
    g: &GlobalArgs,
    io: &IoArgs,
    lambda: f64,
    embeddings: Option<&Path>,
    min_df: u64,
    max_features: Option<usize>,
) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(UsageError(format!("--lambda must be a finite value >= 0, got {lambda}")).into());
    }
    let data = input::annotated(run, g, &io.input)?;
    let mut model = match embeddings {
        Some(path) => {
            run.input(path)?;
            let store = EmbeddingStore::load(path)?;
            train_embedding_ridge(&data, &store, lambda)?
        }
        None => {
            let vocab = VocabularyConfig { min_df, max_features };
            train_tfidf_ridge(&data, lambda, TokenizerConfig::default(), &vocab)?
        }
    };
    model.metadata.trained_on = io
        .input
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    model.metadata.timestamp = model_timestamp();
    info!("trained on {} sentences, {} features", data.len(), model.dim());
    run.emit_json(io.output.as_deref(), &model.to_file())
}

fn load_model(run: &mut Run, path: &Path) -> Result<RidgeModel> {
    run.input(path)?;
    RidgeModel::load(path).with_context(|| format!("cannot load model {}", path.display()))
}

pub fn score(run: &mut Run, g: &GlobalArgs, io: &IoArgs, model: &Path, embeddings: Option<&Path>) -> Result<()> {
    let model = load_model(run, model)?;
    let store = match embeddings {
        Some(p) => {
            run.input(p)?;
            Some(EmbeddingStore::load(p)?)
        }
        None => None,
    };
    run.input(&io.input)?;
    let report = load_sentence_records(&io.input, &field_map(g)?)?;
    warn_record_errors(&io.input, &report.errors);
    let predictions: Vec<HelpfulnessPrediction> = report
        .records
        .par_iter()
        .map(|s| model.score(&s.sentence_id, &s.text, store.as_ref()))
        .collect::<rhs_core::Result<_>>()?;
    run.emit_jsonl(io.output.as_deref(), &predictions)
}

pub struct ExtractOptions {
    pub model: PathBuf,
    pub gate: GateArgs,
    pub selection: SelectionArgs,
    pub helpful_floor: f64,
    pub provider: ProviderArgs,
    pub embeddings: String,
}

impl ExtractOptions {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let s = &self.selection;
        let mut support = if s.relaxed {
            SupportConfig::relaxed()
        } else {
            SupportConfig::default()
        };
        if let Some(sigma) = s.sigma {
            support.sigma = sigma;
        }
        if let Some(m) = s.min_support {
            support.min_support = m;
        }
        let selection = SelectionConfig {
            alpha: s.alpha,
            top_k_supporters: s.top_k,
        };
        support.validate().map_err(|e| UsageError(e.to_string()))?;
        selection.validate().map_err(|e| UsageError(e.to_string()))?;
        if !self.helpful_floor.is_finite() {
            return Err(UsageError("--helpful-floor must be finite".into()).into());
        }
        Ok(PipelineConfig {
            bounds: input::bounds(self.gate)?,
            helpful_floor: self.helpful_floor,
            support,
            selection,
        })
    }
}

pub fn extract(run: &mut Run, g: &GlobalArgs, io: &IoArgs, opts: &ExtractOptions) -> Result<()> {
    let config = opts.pipeline_config()?;
    let model = load_model(run, &opts.model)?;
    let provider = input::provider(run, &opts.provider)?;
    let store = match opts.embeddings.as_str() {
        SPACE_IDF_BOW | SPACE_TFIDF => None,
        path => {
            let path = Path::new(path);
            run.input(path)?;
            Some(EmbeddingStore::load(path)?)
        }
    };
    let similarity = match (opts.embeddings.as_str(), &store) {
        (_, Some(s)) => SimilaritySpace::Embedder(s),
        (SPACE_TFIDF, None) => match &model.tfidf {
            Some(t) => SimilaritySpace::Embedder(t),
            None => {
                return Err(UsageError("--embeddings tfidf needs a model trained on TF-IDF features".into()).into())
            }
        },
        _ => SimilaritySpace::IdfBowPerProduct,
    };
    // models over an external space read their features from the same file
    let features = store.as_ref().filter(|s| s.space_id == model.feature_space);

    run.input(&io.input)?;
    let report = load_reviews(&io.input, &field_map(g)?)?;
    warn_record_errors(&io.input, &report.errors);
    let pipeline = Pipeline {
        model: &model,
        features,
        provider: provider.as_ref(),
        similarity,
        config,
    };
    let groups = group_by_product(report.records);
    let results: Vec<RhsResult> = if groups.is_empty() {
        vec![pipeline.select(&[])?]
    } else {
        groups
            .par_iter()
            .map(|(pid, reviews)| pipeline.select(reviews).with_context(|| format!("product {pid}")))
            .collect::<Result<_>>()?
    };
    for r in &results {
        check_result(r, &config).map_err(|m| InvariantViolation(format!("product {}: {m}", r.product_id)))?;
        if r.positive.is_none() && r.negative.is_none() && r.diagnostics.after_length_gate > 0 {
            warn!("product {}: no supported sentence in either slot", r.product_id);
        }
    }
    run.emit_json(io.output.as_deref(), &results)
}

fn check_pick(s: &SelectedSentence, label: SentimentLabel, cfg: &PipelineConfig) -> Result<(), String> {
    if s.sentiment.label != label || !s.sentiment.is_valid() {
        return Err(format!("{label} slot holds a {} sentence", s.sentiment.label));
    }
    if s.support < cfg.support.min_support {
        return Err(format!(
            "{label} pick has support {} < {}",
            s.support, cfg.support.min_support
        ));
    }
    if !(s.helpfulness >= cfg.helpful_floor) {
        return Err(format!(
            "{label} pick has helpfulness {} below the floor",
            s.helpfulness
        ));
    }
    if !LengthBounds::contains(&cfg.bounds, s.sentence.char_len) {
        return Err(format!(
            "{label} pick has length {} outside the gate",
            s.sentence.char_len
        ));
    }
    if s.supporters.len() > s.support || s.supporters.iter().any(|n| !(n.similarity > cfg.support.sigma)) {
        return Err(format!("{label} pick lists a supporter below the threshold"));
    }
    Ok(())
}

fn check_result(r: &RhsResult, cfg: &PipelineConfig) -> Result<(), String> {
    let d = &r.diagnostics;
    if d.after_length_gate > d.input_sentences || d.after_helpfulness_gate > d.after_length_gate {
        return Err("gate counts are not monotone".into());
    }
    if d.positive_pool + d.negative_pool + d.neutral_discarded + d.mixed_discarded != d.after_helpfulness_gate {
        return Err("sentiment partition does not cover the helpful sentences".into());
    }
    if d.positive_supported > d.positive_pool || d.negative_supported > d.negative_pool {
        return Err("more supported sentences than pooled".into());
    }
    for (pick, label, supported) in [
        (&r.positive, SentimentLabel::Positive, d.positive_supported),
        (&r.negative, SentimentLabel::Negative, d.negative_supported),
    ] {
        match pick {
            Some(s) => check_pick(s, label, cfg)?,
            None if supported > 0 => return Err(format!("{label} slot empty with {supported} candidates")),
            None => {}
        }
    }
    Ok(())
}
