//! Similarity support, the `support × helpfulness^α` ranking, and selection
//! of one positive and one negative representative sentence per product.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{preprocess_review, split_review, LengthBounds, Review, Sentence};
use crate::error::{Error, Result};
use crate::helpfulness::{HelpfulnessPrediction, RidgeModel, DEFAULT_HELPFUL_FLOOR};
use crate::sentiment::{partition_by_sentiment, SentimentProvider, SentimentResult};
use crate::textvec::{build_idf_bow_embedder, cosine_unchecked, Embedder, EmbeddingStore, SentenceEmbedding};

pub const DEFAULT_SIGMA: f64 = 0.876;
pub const RELAXED_SIGMA: f64 = 0.75;
pub const DEFAULT_MIN_SUPPORT: usize = 5;
pub const DEFAULT_ALPHA: f64 = 38.8;
pub const DEFAULT_TOP_K_SUPPORTERS: usize = 5;
pub const ALPHA_RANGE: (f64, f64) = (0.1, 200.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub sigma: f64,
    pub min_support: usize,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig {
            sigma: DEFAULT_SIGMA,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

impl SupportConfig {
    pub fn relaxed() -> Self {
        SupportConfig {
            sigma: RELAXED_SIGMA,
            min_support: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.sigma) {
            return Err(Error::InvalidInput(format!("sigma {} outside [-1, 1]", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub alpha: f64,
    pub top_k_supporters: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            alpha: DEFAULT_ALPHA,
            top_k_supporters: DEFAULT_TOP_K_SUPPORTERS,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Support
// ---------------------------------------------------------------------------

/// Sentences whose similarity to a given sentence exceeds sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    /// `(index, similarity)` in ascending index order.
    pub neighbors: Vec<(usize, f64)>,
}

impl Support {
    pub fn count(&self) -> usize {
        self.neighbors.len()
    }
}

fn check_space(embeddings: &[SentenceEmbedding]) -> Result<()> {
    if let Some(first) = embeddings.first() {
        for e in &embeddings[1..] {
            first.check_compatible(e)?;
        }
    }
    Ok(())
}

/// Exact all-pairs support with strict `sim > sigma`; rows run in parallel.
pub fn compute_support(embeddings: &[SentenceEmbedding], sigma: f64) -> Result<Vec<Support>> {
    check_space(embeddings)?;
    Ok(embeddings
        .par_iter()
        .enumerate()
        .map(|(i, a)| Support {
            neighbors: embeddings
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, b)| (j, cosine_unchecked(a, b)))
                .filter(|&(_, s)| s > sigma)
                .collect(),
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Ranking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub sentence_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub sentence: Sentence,
    pub helpfulness: HelpfulnessPrediction,
    pub sentiment: SentimentResult,
    pub support: usize,
    pub neighbors: Vec<Neighbor>,
    pub rank_score: f64,
}

/// `ln(support) + α ln(helpfulness)`; the ordering key behind
/// `support × helpfulness^α`, finite where the product would overflow.
pub fn log_rank_score(support: usize, helpfulness: f64, alpha: f64) -> f64 {
    if support == 0 || helpfulness <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (support as f64).ln() + alpha * helpfulness.ln()
}

pub fn rank_score(support: usize, helpfulness: f64, alpha: f64) -> f64 {
    support as f64 * helpfulness.powf(alpha)
}

/// Descending rank order: score, then support, then helpfulness, then
/// ascending sentence id.
pub fn rank_order(a: (usize, f64, &str), b: (usize, f64, &str), alpha: f64) -> Ordering {
    log_rank_score(b.0, b.1, alpha)
        .total_cmp(&log_rank_score(a.0, a.1, alpha))
        .then(b.0.cmp(&a.0))
        .then(b.1.total_cmp(&a.1))
        .then(a.2.cmp(b.2))
}

/// Drop candidates below `min_support`, score the rest and sort best first.
pub fn rank_candidates(
    pool: Vec<ScoredCandidate>,
    support_cfg: &SupportConfig,
    selection_cfg: &SelectionConfig,
) -> Vec<ScoredCandidate> {
    let alpha = selection_cfg.alpha;
    let mut kept: Vec<ScoredCandidate> = pool
        .into_iter()
        .filter(|c| c.support >= support_cfg.min_support)
        .map(|mut c| {
            c.rank_score = rank_score(c.support, c.helpfulness.score, alpha);
            c
        })
        .collect();
    kept.sort_by(|a, b| {
        rank_order(
            (a.support, a.helpfulness.score, &a.sentence.sentence_id),
            (b.support, b.helpfulness.score, &b.sentence.sentence_id),
            alpha,
        )
    });
    kept
}

/// Indices (ascending) of points not dominated by any other point, where
/// `q` dominates `p` if it is at least as good in both coordinates and
/// strictly better in one. Points tied on both coordinates are all kept.
pub fn pareto_front(points: &[(usize, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].0.cmp(&points[a].0).then(points[b].1.total_cmp(&points[a].1)));
    let mut front = Vec::new();
    let mut best_higher_support = f64::NEG_INFINITY;
    let mut start = 0;
    while start < order.len() {
        let support = points[order[start]].0;
        let mut end = start;
        while end < order.len() && points[order[end]].0 == support {
            end += 1;
        }
        // sorted by helpfulness descending within the group
        let group_best = points[order[start]].1;
        for &i in &order[start..end] {
            let h = points[i].1;
            if h == group_best && h > best_higher_support {
                front.push(i);
            }
        }
        best_higher_support = best_higher_support.max(group_best);
        start = end;
    }
    front.sort_unstable();
    front
}

// ---------------------------------------------------------------------------
// Alpha fitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaObservation {
    pub support: usize,
    pub helpfulness: f64,
    pub annotated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaFit {
    pub alpha: f64,
    pub kl: f64,
    pub groups_used: usize,
    pub groups_skipped: usize,
}

fn log_softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

struct PreparedGroup {
    log_p: Vec<f64>,
    ln_support: Vec<f64>,
    ln_help: Vec<f64>,
}

impl PreparedGroup {
    fn kl(&self, alpha: f64) -> f64 {
        let logits: Vec<f64> = self
            .ln_support
            .iter()
            .zip(&self.ln_help)
            .map(|(s, h)| s + alpha * h)
            .collect();
        let log_q = log_softmax(&logits);
        self.log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * (lp - lq)).sum()
    }
}

/// Total KL(softmax(annotated) ‖ softmax(ln support + α ln helpfulness))
/// over groups with at least two candidates.
pub fn alpha_objective(groups: &[Vec<AlphaObservation>], alpha: f64) -> Result<f64> {
    let prepared = prepare_groups(groups)?.0;
    Ok(prepared.iter().map(|g| g.kl(alpha)).sum())
}

fn prepare_groups(groups: &[Vec<AlphaObservation>]) -> Result<(Vec<PreparedGroup>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for g in groups {
        if g.len() < 2 {
            skipped += 1;
            continue;
        }
        if let Some(bad) = g
            .iter()
            .find(|o| o.support == 0 || !(o.helpfulness > 0.0) || !o.annotated.is_finite())
        {
            return Err(Error::InvalidInput(format!(
                "alpha fit needs support >= 1, helpfulness > 0 and finite annotations, got {bad:?}"
            )));
        }
        let annotated: Vec<f64> = g.iter().map(|o| o.annotated).collect();
        out.push(PreparedGroup {
            log_p: log_softmax(&annotated),
            ln_support: g.iter().map(|o| (o.support as f64).ln()).collect(),
            ln_help: g.iter().map(|o| o.helpfulness.ln()).collect(),
        });
    }
    if out.is_empty() {
        return Err(Error::Degenerate("no group has at least two candidates".into()));
    }
    Ok((out, skipped))
}

/// Grid search over [0.1, 200] with step 0.5, then golden-section
/// refinement around the best grid point to a bracket below 1e-3.
pub fn fit_alpha(groups: &[Vec<AlphaObservation>]) -> Result<AlphaFit> {
    let (prepared, skipped) = prepare_groups(groups)?;
    let f = |a: f64| prepared.iter().map(|g| g.kl(a)).sum::<f64>();
    let (lo, hi) = ALPHA_RANGE;
    let mut grid: Vec<f64> = (0..).map(|i| lo + 0.5 * i as f64).take_while(|&a| a < hi).collect();
    grid.push(hi);
    let values: Vec<f64> = grid.par_iter().map(|&a| f(a)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("grid is nonempty");
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() >= 1e-3 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / 2.0;
    // keep the grid point if refinement did not improve on it
    let (alpha, kl) = if f(mid) <= values[best] {
        (mid, f(mid))
    } else {
        (grid[best], values[best])
    };
    Ok(AlphaFit {
        alpha,
        kl,
        groups_used: prepared.len(),
        groups_skipped: skipped,
    })
}

// ---------------------------------------------------------------------------
// Selection pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedSentence {
    pub sentence: Sentence,
    pub helpfulness: f64,
    pub sentiment: SentimentResult,
    pub support: usize,
    pub rank_score: f64,
    pub supporters: Vec<Neighbor>,
}

impl SelectedSentence {
    pub fn from_candidate(c: &ScoredCandidate, top_k: usize) -> Self {
        let mut supporters = c.neighbors.clone();
        supporters.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.sentence_id.cmp(&b.sentence_id))
        });
        supporters.truncate(top_k);
        SelectedSentence {
            sentence: c.sentence.clone(),
            helpfulness: c.helpfulness.score,
            sentiment: c.sentiment,
            support: c.support,
            rank_score: c.rank_score,
            supporters,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub reviews: usize,
    pub input_sentences: usize,
    pub after_length_gate: usize,
    pub after_helpfulness_gate: usize,
    pub positive_pool: usize,
    pub negative_pool: usize,
    pub neutral_discarded: usize,
    pub mixed_discarded: usize,
    pub positive_supported: usize,
    pub negative_supported: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsResult {
    pub product_id: String,
    pub positive: Option<SelectedSentence>,
    pub negative: Option<SelectedSentence>,
    pub diagnostics: Diagnostics,
}

/// Where support similarities come from.
#[derive(Clone, Copy)]
pub enum SimilaritySpace<'a> {
    /// An idf-bow embedder fitted on each product's gated sentences.
    IdfBowPerProduct,
    Embedder(&'a dyn Embedder),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub bounds: LengthBounds,
    pub helpful_floor: f64,
    pub support: SupportConfig,
    pub selection: SelectionConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            bounds: LengthBounds::default(),
            helpful_floor: DEFAULT_HELPFUL_FLOOR,
            support: SupportConfig::default(),
            selection: SelectionConfig::default(),
        }
    }
}

pub struct Pipeline<'a> {
    pub model: &'a RidgeModel,
    /// Feature vectors for models trained on an external embedding space.
    pub features: Option<&'a EmbeddingStore>,
    pub provider: &'a dyn SentimentProvider,
    pub similarity: SimilaritySpace<'a>,
    pub config: PipelineConfig,
}

struct Helpful {
    sentence: Sentence,
    prediction: HelpfulnessPrediction,
}

impl Pipeline<'_> {
    /// Run the selection for the reviews of one product.
    pub fn select(&self, reviews: &[Review]) -> Result<RhsResult> {
        self.config.support.validate()?;
        self.config.selection.validate()?;
        let product_id = reviews.first().map(|r| r.product_id.clone()).unwrap_or_default();
        if let Some(other) = reviews.iter().find(|r| r.product_id != product_id) {
            return Err(Error::InvalidInput(format!(
                "reviews span several products ({product_id}, {})",
                other.product_id
            )));
        }
        let mut diag = Diagnostics {
            reviews: reviews.len(),
            ..Default::default()
        };
        diag.input_sentences = reviews.iter().map(|r| split_review(r).len()).sum();
        let sentences: Vec<Sentence> = reviews
            .iter()
            .flat_map(|r| preprocess_review(r, &self.config.bounds))
            .collect();
        diag.after_length_gate = sentences.len();

        let predictions: Vec<HelpfulnessPrediction> = sentences
            .par_iter()
            .map(|s| self.model.score(&s.sentence_id, &s.text, self.features))
            .collect::<Result<_>>()
            .map_err(|e| e.at_stage("predict"))?;
        let helpful: Vec<Helpful> = sentences
            .iter()
            .zip(predictions)
            .filter(|(_, p)| p.score >= self.config.helpful_floor)
            .map(|(s, p)| Helpful {
                sentence: s.clone(),
                prediction: p,
            })
            .collect();
        diag.after_helpfulness_gate = helpful.len();

        let split = partition_by_sentiment(helpful, |h| h.sentence.text.as_str(), self.provider)
            .map_err(|e| e.at_stage("sentiment"))?;
        diag.positive_pool = split.positive.len();
        diag.negative_pool = split.negative.len();
        diag.neutral_discarded = split.neutral_discarded;
        diag.mixed_discarded = split.mixed_discarded;

        let local;
        let embedder: &dyn Embedder = match self.similarity {
            SimilaritySpace::Embedder(e) => e,
            SimilaritySpace::IdfBowPerProduct => {
                if split.positive.is_empty() && split.negative.is_empty() {
                    return Ok(RhsResult {
                        product_id,
                        positive: None,
                        negative: None,
                        diagnostics: diag,
                    });
                }
                local = build_idf_bow_embedder(sentences.iter().map(|s| s.text.as_str()))
                    .map_err(|e| e.at_stage("embed"))?;
                &local
            }
        };

        let mut picks = [None, None];
        let mut supported = [0, 0];
        for (slot, pool) in [split.positive, split.negative].into_iter().enumerate() {
            let ranked = self.rank_pool(pool, embedder)?;
            supported[slot] = ranked.len();
            picks[slot] = ranked
                .first()
                .map(|c| SelectedSentence::from_candidate(c, self.config.selection.top_k_supporters));
        }
        diag.positive_supported = supported[0];
        diag.negative_supported = supported[1];
        let [positive, negative] = picks;
        Ok(RhsResult {
            product_id,
            positive,
            negative,
            diagnostics: diag,
        })
    }

    fn rank_pool(
        &self,
        pool: Vec<(Helpful, SentimentResult)>,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ScoredCandidate>> {
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let embeddings: Vec<SentenceEmbedding> = pool
            .iter()
            .map(|(h, _)| embedder.embed(&h.sentence.sentence_id, &h.sentence.text))
            .collect::<Result<_>>()
            .map_err(|e| e.at_stage("embed"))?;
        let supports = compute_support(&embeddings, self.config.support.sigma).map_err(|e| e.at_stage("support"))?;
        let ids: Vec<String> = pool.iter().map(|(h, _)| h.sentence.sentence_id.clone()).collect();
        let candidates: Vec<ScoredCandidate> = pool
            .into_iter()
            .zip(supports)
            .map(|((h, sentiment), sup)| ScoredCandidate {
                support: sup.count(),
                neighbors: sup
                    .neighbors
                    .iter()
                    .map(|&(j, similarity)| Neighbor {
                        sentence_id: ids[j].clone(),
                        similarity,
                    })
                    .collect(),
                rank_score: 0.0,
                sentence: h.sentence,
                helpfulness: h.prediction,
                sentiment,
            })
            .collect();
        Ok(rank_candidates(
            candidates,
            &self.config.support,
            &self.config.selection,
        ))
    }
}

/// Default length bounds and helpfulness floor; see [`Pipeline`] for full control.
pub fn select_rhs(
    reviews: &[Review],
    model: &RidgeModel,
    provider: &dyn SentimentProvider,
    similarity: SimilaritySpace<'_>,
    support_cfg: SupportConfig,
    selection_cfg: SelectionConfig,
) -> Result<RhsResult> {
    Pipeline {
        model,
        features: None,
        provider,
        similarity,
        config: PipelineConfig {
            support: support_cfg,
            selection: selection_cfg,
            ..Default::default()
        },
    }
    .select(reviews)
}

/// Group reviews by product, keeping first-appearance order.
pub fn group_by_product(reviews: Vec<Review>) -> Vec<(String, Vec<Review>)> {
    let mut groups: Vec<(String, Vec<Review>)> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for r in reviews {
        let i = *index.entry(r.product_id.clone()).or_insert_with(|| {
            groups.push((r.product_id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(r);
    }
    groups
}
