use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::{bail, Result};
use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize};

use rhs_core::evalmetrics::{
    evaluate_helpfulness, mean_ndcg_by_group, precision_at_k_curve, rouge, Gain, MetricReport, MultiReference, Prf,
    RougeScores, ScoredItem,
};
use rhs_core::helpfulness::HelpfulnessPrediction;
use rhs_core::rhs::{fit_alpha, AlphaObservation};
use rhs_core::textvec::{build_idf_bow_embedder, cosine_similarity, EmbeddingStore, SentenceEmbedding, SPACE_IDF_BOW};

use super::input;
use super::{GainKind, GlobalArgs, IoArgs, Run, UsageError};

#[allow(clippy::too_many_arguments)]
pub fn helpfulness(
    run: &mut Run,
    g: &GlobalArgs,
    predictions: Option<&Path>,
    gold: &Path,
    output: Option<&Path>,
    random: bool,
    clamped: bool,
    resamples: usize,
) -> Result<()> {
    let gold = input::annotated(run, g, gold)?;
    let predicted: Vec<f64> = if random {
        let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
        gold.iter().map(|_| rng.random_range(0.0..=2.0)).collect()
    } else {
        let path = predictions.ok_or_else(|| UsageError("either --input or --random is required".into()))?;
        let rows: Vec<HelpfulnessPrediction> = input::jsonl(run, path)?;
        let n_rows = rows.len();
        let by_id: HashMap<String, f64> = rows
            .into_iter()
            .map(|p| (p.sentence_id, if clamped { p.score } else { p.raw_score }))
            .collect();
        if by_id.len() != n_rows {
            bail!("{}: duplicate sentence ids", path.display());
        }
        let joined: Vec<Option<f64>> = gold
            .iter()
            .map(|a| by_id.get(&a.sentence.sentence_id).copied())
            .collect();
        let missing = joined.iter().filter(|p| p.is_none()).count();
        if missing > 0 {
            bail!("{missing} gold sentence(s) have no prediction");
        }
        if by_id.len() > gold.len() {
            warn!("{} prediction(s) have no gold score", by_id.len() - gold.len());
        }
        joined.into_iter().flatten().collect()
    };
    let items: Vec<ScoredItem> = gold
        .iter()
        .zip(predicted)
        .map(|(a, p)| ScoredItem {
            group: a.sentence.product_id.clone().unwrap_or_default(),
            predicted: p,
            gold: a.helpfulness,
        })
        .collect();
    let reports = evaluate_helpfulness(&items, resamples, g.seed)?;
    run.emit_json(output, &reports)
}

#[derive(Deserialize)]
struct RankRow {
    #[serde(alias = "product_id")]
    group: String,
    #[serde(alias = "predicted")]
    score: f64,
    #[serde(alias = "gold")]
    relevance: f64,
}

pub fn ranking(run: &mut Run, io: &IoArgs, ks: &[usize], gain: GainKind) -> Result<()> {
    let rows: Vec<RankRow> = input::jsonl(run, &io.input)?;
    let rows: Vec<(String, f64, f64)> = rows.into_iter().map(|r| (r.group, r.score, r.relevance)).collect();
    let gain = match gain {
        GainKind::Exponential => Gain::Exponential,
        GainKind::Linear => Gain::Linear,
    };
    let mut reports = Vec::new();
    for &k in ks {
        if k == 0 {
            return Err(UsageError("--k values must be >= 1".into()).into());
        }
        let (mean, per_group) = mean_ndcg_by_group(&rows, k, gain)?;
        reports.push(MetricReport::new("ndcg", mean, per_group.len()).with_k(k));
    }
    run.emit_json(io.output.as_deref(), &reports)
}

#[derive(Deserialize)]
struct RougeRow {
    #[serde(default)]
    id: Option<String>,
    candidate: String,
    references: Vec<String>,
}

#[derive(Serialize)]
struct RougeItem {
    id: String,
    scores: RougeScores,
}

#[derive(Serialize)]
struct RougeOutput {
    mode: MultiReference,
    n: usize,
    mean: RougeScores,
    items: Vec<RougeItem>,
}

fn mean_prf(xs: impl Iterator<Item = Prf> + Clone) -> Prf {
    let n = xs.clone().count().max(1) as f64;
    let (p, r, f) = xs.fold((0.0, 0.0, 0.0), |(p, r, f), x| {
        (p + x.precision, r + x.recall, f + x.f1)
    });
    Prf {
        precision: p / n,
        recall: r / n,
        f1: f / n,
    }
}

pub fn rouge_cmd(run: &mut Run, io: &IoArgs, average: bool) -> Result<()> {
    let rows: Vec<RougeRow> = input::jsonl(run, &io.input)?;
    let mode = if average {
        MultiReference::Average
    } else {
        MultiReference::Max
    };
    let mut items = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let refs: Vec<&str> = r.references.iter().map(String::as_str).collect();
        let report = rouge(&r.candidate, &refs, mode)?;
        items.push(RougeItem {
            id: r.id.clone().unwrap_or_else(|| format!("line-{}", i + 1)),
            scores: report.scores,
        });
    }
    let scores = items.iter().map(|i| i.scores);
    let mean = RougeScores {
        rouge1: mean_prf(scores.clone().map(|s| s.rouge1)),
        rouge2: mean_prf(scores.clone().map(|s| s.rouge2)),
        rouge_l: mean_prf(scores.map(|s| s.rouge_l)),
    };
    run.emit_json(
        io.output.as_deref(),
        &RougeOutput {
            mode,
            n: items.len(),
            mean,
            items,
        },
    )
}

fn label_from_json<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    use serde::de::Error;
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::Bool(b) => Ok(b),
        serde_json::Value::Number(n) if n.as_f64() == Some(1.0) => Ok(true),
        serde_json::Value::Number(n) if n.as_f64() == Some(0.0) => Ok(false),
        other => Err(D::Error::custom(format!("label must be a boolean or 0/1, got {other}"))),
    }
}

/// A labeled sentence pair: `label` says whether the two sentences say the
/// same thing.
#[derive(Deserialize)]
pub struct PairRow {
    #[serde(deserialize_with = "label_from_json")]
    label: bool,
    #[serde(default)]
    scores: BTreeMap<String, f64>,
    #[serde(default)]
    text_a: Option<String>,
    #[serde(default)]
    text_b: Option<String>,
    #[serde(default)]
    id_a: Option<String>,
    #[serde(default)]
    id_b: Option<String>,
}

fn column(rows: &[PairRow], name: &str) -> Result<Vec<f64>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            r.scores
                .get(name)
                .copied()
                .filter(|v| v.is_finite())
                .ok_or_else(|| anyhow::anyhow!("pair {}: missing or non-finite score `{name}`", i + 1))
        })
        .collect()
}

fn idf_bow_similarities(rows: &[PairRow]) -> Result<Option<Vec<f64>>> {
    let texts: Option<Vec<(&str, &str)>> = rows
        .iter()
        .map(|r| Some((r.text_a.as_deref()?, r.text_b.as_deref()?)))
        .collect();
    let Some(texts) = texts else {
        return Ok(None);
    };
    let embedder = build_idf_bow_embedder(texts.iter().flat_map(|(a, b)| [*a, *b]))?;
    let sims = texts
        .iter()
        .map(|(a, b)| cosine_similarity(&embedder.vectorize("a", a), &embedder.vectorize("b", b)))
        .collect::<rhs_core::Result<_>>()?;
    Ok(Some(sims))
}

fn store_similarities(rows: &[PairRow], store: &EmbeddingStore) -> Result<Vec<f64>> {
    let lookup = |id: Option<&str>, i: usize| -> Result<SentenceEmbedding> {
        let id = id.ok_or_else(|| anyhow::anyhow!("pair {}: embedding lookup needs id_a and id_b", i + 1))?;
        let v = store
            .get(id)
            .ok_or_else(|| anyhow::anyhow!("pair {}: no embedding for `{id}`", i + 1))?;
        Ok(SentenceEmbedding::dense(id, store.space_id.clone(), v.to_vec()))
    };
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(cosine_similarity(
                &lookup(r.id_a.as_deref(), i)?,
                &lookup(r.id_b.as_deref(), i)?,
            )?)
        })
        .collect()
}

fn load_store(run: &mut Run, path: Option<&Path>) -> Result<Option<EmbeddingStore>> {
    path.map(|p| {
        run.input(p)?;
        Ok(EmbeddingStore::load(p)?)
    })
    .transpose()
}

pub fn similarity(run: &mut Run, io: &IoArgs, k_max: Option<usize>, embeddings: Option<&Path>) -> Result<()> {
    let rows: Vec<PairRow> = input::jsonl(run, &io.input)?;
    if rows.is_empty() {
        bail!("{}: no pairs", io.input.display());
    }
    let store = load_store(run, embeddings)?;
    let names: Vec<String> = rows[0].scores.keys().cloned().collect();
    let mut methods = Vec::new();
    for name in names {
        methods.push((name.clone(), column(&rows, &name)?));
    }
    if let Some(sims) = idf_bow_similarities(&rows)? {
        methods.push((SPACE_IDF_BOW.to_string(), sims));
    }
    if let Some(store) = &store {
        methods.push((store.space_id.clone(), store_similarities(&rows, store)?));
    }
    if methods.is_empty() {
        bail!("pairs carry no scores and no texts; nothing to evaluate");
    }
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let k_max = k_max.unwrap_or(labels.len());
    let curves = precision_at_k_curve(&labels, &methods, k_max)?;
    run.emit(io.output.as_deref(), curves.to_csv().as_bytes())
}

#[derive(Deserialize)]
struct AlphaRow {
    #[serde(alias = "product_id")]
    group: String,
    support: usize,
    helpfulness: f64,
    annotated: f64,
}

pub fn alpha(run: &mut Run, io: &IoArgs) -> Result<()> {
    let rows: Vec<AlphaRow> = input::jsonl(run, &io.input)?;
    let mut groups: Vec<Vec<AlphaObservation>> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in rows {
        let i = *index.entry(r.group).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[i].push(AlphaObservation {
            support: r.support,
            helpfulness: r.helpfulness,
            annotated: r.annotated,
        });
    }
    let fit = fit_alpha(&groups)?;
    info!("alpha {:.4} (kl {:.6}, {} groups)", fit.alpha, fit.kl, fit.groups_used);
    run.emit_json(io.output.as_deref(), &fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdStats {
    pub n: usize,
    pub positives: usize,
    pub predicted_positive: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl ThresholdStats {
    fn at(pairs: &[(f64, bool)], threshold: f64) -> Self {
        let positives = pairs.iter().filter(|p| p.1).count();
        let predicted: Vec<bool> = pairs.iter().filter(|p| p.0 > threshold).map(|p| p.1).collect();
        let tp = predicted.iter().filter(|&&l| l).count();
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        ThresholdStats {
            n: pairs.len(),
            positives,
            predicted_positive: predicted.len(),
            precision: ratio(tp, predicted.len()),
            recall: ratio(tp, positives),
        }
    }
}

/// Lowest threshold `t` such that pairs with similarity `> t` reach the
/// target precision. Candidates sit halfway between consecutive distinct
/// similarities, so every achievable prediction set is considered.
pub fn calibrate_threshold(pairs: &[(f64, bool)], target: f64) -> Option<f64> {
    let mut sorted: Vec<(f64, bool)> = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut taken, mut best) = (0usize, 0usize, None);
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == v {
            tp += usize::from(sorted[i].1);
            taken += 1;
            i += 1;
        }
        let next = sorted.get(i).map_or(v - 1e-9, |p| (v + p.0) / 2.0);
        if tp as f64 / taken as f64 >= target {
            best = Some(next);
        }
    }
    best
}

#[derive(Serialize)]
struct Calibration {
    method: String,
    target_precision: f64,
    threshold: f64,
    calibration: ThresholdStats,
    held_out: ThresholdStats,
    target_met_on_held_out: bool,
}

pub fn calibrate_sigma(
    run: &mut Run,
    g: &GlobalArgs,
    io: &IoArgs,
    target: f64,
    holdout: f64,
    method: Option<&str>,
    embeddings: Option<&Path>,
) -> Result<()> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(UsageError(format!("--target-precision must lie in (0, 1], got {target}")).into());
    }
    if !(holdout > 0.0 && holdout < 1.0) {
        return Err(UsageError(format!("--holdout must lie in (0, 1), got {holdout}")).into());
    }
    let rows: Vec<PairRow> = input::jsonl(run, &io.input)?;
    if rows.len() < 2 {
        bail!("{}: need at least 2 pairs", io.input.display());
    }
    let store = load_store(run, embeddings)?;
    let (name, sims) = match (method, &store) {
        (Some(m), _) => (m.to_string(), column(&rows, m)?),
        (None, Some(s)) => (s.space_id.clone(), store_similarities(&rows, s)?),
        (None, None) => (
            SPACE_IDF_BOW.to_string(),
            idf_bow_similarities(&rows)?.ok_or_else(|| anyhow::anyhow!("pairs need text_a and text_b"))?,
        ),
    };
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(g.seed));
    let n_held = ((rows.len() as f64 * holdout).round() as usize).clamp(1, rows.len() - 1);
    let pick = |idx: &[usize]| -> Vec<(f64, bool)> { idx.iter().map(|&i| (sims[i], rows[i].label)).collect() };
    let held = pick(&order[..n_held]);
    let calib = pick(&order[n_held..]);
    let threshold = calibrate_threshold(&calib, target)
        .ok_or_else(|| anyhow::anyhow!("no threshold reaches precision {target} on the calibration split"))?;
    let held_out = ThresholdStats::at(&held, threshold);
    let met = held_out.precision.is_some_and(|p| p >= target);
    if !met {
        warn!("threshold {threshold} misses the target on the held-out split");
    }
    run.emit_json(
        io.output.as_deref(),
        &Calibration {
            method: name,
            target_precision: target,
            threshold,
            calibration: ThresholdStats::at(&calib, threshold),
            held_out,
            target_met_on_held_out: met,
        },
    )
}
