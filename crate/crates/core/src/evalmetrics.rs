//! Evaluation metrics: MSE, Pearson, NDCG@K, ROUGE-1/2/L, precision@K
//! curves and percentile-bootstrap confidence intervals.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_halfwidth: Option<f64>,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "metric,k,value,ci,n";

    pub fn new(metric: impl Into<String>, value: f64, n: usize) -> Self {
        MetricReport {
            metric: metric.into(),
            value,
            k: None,
            n,
            ci_halfwidth: None,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_ci(mut self, halfwidth: f64) -> Self {
        self.ci_halfwidth = Some(halfwidth);
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.metric,
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            self.value,
            self.ci_halfwidth.map(|c| c.to_string()).unwrap_or_default(),
            self.n
        )
    }
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from(MetricReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn check_paired(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

pub fn mse(pred: &[f64], gold: &[f64]) -> Result<f64> {
    check_paired(pred, gold)?;
    if pred.is_empty() {
        return Err(Error::InvalidInput("mse of empty series".into()));
    }
    Ok(pred.iter().zip(gold).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_paired(x, y)?;
    if x.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "pearson needs at least 3 points, got {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::Degenerate("zero variance in pearson input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^rel − 1`
    #[default]
    Exponential,
    Linear,
}

impl Gain {
    fn apply(self, rel: f64) -> f64 {
        match self {
            Gain::Exponential => rel.exp2() - 1.0,
            Gain::Linear => rel,
        }
    }
}

fn dcg(rels: impl Iterator<Item = f64>, k: usize, gain: Gain) -> f64 {
    rels.take(k)
        .enumerate()
        .map(|(i, r)| gain.apply(r) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k for gold relevances listed in predicted rank order.
pub fn ndcg_at_k_ranked(relevance_in_rank_order: &[f64], k: usize, gain: Gain) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if !relevance_in_rank_order.iter().any(|&r| r > 0.0) {
        return Err(Error::Degenerate("no positive relevance; ideal DCG is zero".into()));
    }
    let mut ideal = relevance_in_rank_order.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(ideal.into_iter(), k, gain);
    let actual = dcg(relevance_in_rank_order.iter().copied(), k, gain);
    Ok((actual / idcg).clamp(0.0, 1.0))
}

/// NDCG@k for `(predicted score, gold relevance)` pairs; items are ranked by
/// predicted score descending, ties kept in input order.
pub fn ndcg_at_k(scored: &[(f64, f64)], k: usize, gain: Gain) -> Result<f64> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));
    let rels: Vec<f64> = order.iter().map(|&i| scored[i].1).collect();
    ndcg_at_k_ranked(&rels, k, gain)
}

/// Mean NDCG@k over groups; groups without any positive relevance are
/// skipped. Returns the mean and the per-group values.
pub fn mean_ndcg_by_group(rows: &[(String, f64, f64)], k: usize, gain: Gain) -> Result<(f64, Vec<(String, f64)>)> {
    let mut groups: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (g, p, r) in rows {
        let i = *index.entry(g.as_str()).or_insert_with(|| {
            groups.push((g.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push((*p, *r));
    }
    let mut per_group = Vec::new();
    for (g, items) in groups {
        match ndcg_at_k(&items, k, gain) {
            Ok(v) => per_group.push((g, v)),
            Err(Error::Degenerate(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    if per_group.is_empty() {
        return Err(Error::Degenerate("no group has a positive relevance".into()));
    }
    let mean = per_group.iter().map(|(_, v)| v).sum::<f64>() / per_group.len() as f64;
    Ok((mean, per_group))
}

// ---------------------------------------------------------------------------
// ROUGE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self::from_pr(ratio(overlap, candidate_total), ratio(overlap, reference_total))
    }

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiReference {
    /// Per variant, the reference with the highest F1.
    #[default]
    Max,
    /// Per variant, precision, recall and F1 each averaged over references.
    Average,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub scores: RougeScores,
    pub per_reference: Vec<RougeScores>,
}

/// Lowercase, split on non-alphanumeric runs; no stemming, no stopwords.
pub fn rouge_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Prf {
    let c = ngram_counts(candidate, n);
    let r = ngram_counts(reference, n);
    let overlap: usize = c.iter().map(|(g, &k)| k.min(*r.get(g).unwrap_or(&0))).sum();
    Prf::from_counts(
        overlap,
        candidate.len().saturating_sub(n - 1),
        reference.len().saturating_sub(n - 1),
    )
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_single(candidate: &str, reference: &str) -> RougeScores {
    let c = rouge_tokens(candidate);
    let r = rouge_tokens(reference);
    RougeScores {
        rouge1: rouge_n(&c, &r, 1),
        rouge2: rouge_n(&c, &r, 2),
        rouge_l: Prf::from_counts(lcs_len(&c, &r), c.len(), r.len()),
    }
}

pub fn rouge(candidate: &str, references: &[&str], mode: MultiReference) -> Result<RougeReport> {
    let refs: Vec<&str> = references
        .iter()
        .copied()
        .filter(|r| !rouge_tokens(r).is_empty())
        .collect();
    if refs.is_empty() {
        return Err(Error::InvalidInput(
            "rouge needs at least one nonempty reference".into(),
        ));
    }
    let per_reference: Vec<RougeScores> = refs.iter().map(|r| rouge_single(candidate, r)).collect();
    let pick = |f: fn(&RougeScores) -> Prf| -> Prf {
        match mode {
            MultiReference::Max => per_reference
                .iter()
                .map(f)
                .fold(None, |best: Option<Prf>, x| match best {
                    Some(b) if b.f1 >= x.f1 => Some(b),
                    _ => Some(x),
                })
                .unwrap_or_default(),
            MultiReference::Average => {
                let n = per_reference.len() as f64;
                let sum = per_reference.iter().map(f).fold((0.0, 0.0, 0.0), |acc, x| {
                    (acc.0 + x.precision, acc.1 + x.recall, acc.2 + x.f1)
                });
                Prf {
                    precision: sum.0 / n,
                    recall: sum.1 / n,
                    f1: sum.2 / n,
                }
            }
        }
    };
    let scores = RougeScores {
        rouge1: pick(|s| s.rouge1),
        rouge2: pick(|s| s.rouge2),
        rouge_l: pick(|s| s.rouge_l),
    };
    Ok(RougeReport { scores, per_reference })
}

// ---------------------------------------------------------------------------
// Precision@K
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionCurves {
    pub k_max: usize,
    pub series: Vec<(String, Vec<f64>)>,
}

impl PrecisionCurves {
    /// `k,<method1>,<method2>,...` rows for K = 1..=k_max.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k");
        for (name, _) in &self.series {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for k in 0..self.k_max {
            let _ = write!(out, "{}", k + 1);
            for (_, s) in &self.series {
                let _ = write!(out, ",{}", s[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// For each method, precision among the top-K pairs by that method's score
/// for K = 1..=k_max. Ties keep input order.
pub fn precision_at_k_curve(labels: &[bool], methods: &[(String, Vec<f64>)], k_max: usize) -> Result<PrecisionCurves> {
    if k_max > labels.len() {
        return Err(Error::InvalidInput(format!(
            "k_max {k_max} exceeds pair count {}",
            labels.len()
        )));
    }
    let mut series = Vec::with_capacity(methods.len());
    for (name, scores) in methods {
        if scores.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: scores.len(),
            });
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut hits = 0usize;
        let curve = order
            .iter()
            .take(k_max)
            .enumerate()
            .map(|(i, &idx)| {
                hits += usize::from(labels[idx]);
                hits as f64 / (i + 1) as f64
            })
            .collect();
        series.push((name.clone(), curve));
    }
    Ok(PrecisionCurves { k_max, series })
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile-bootstrap half-width of `metric` over `data`. Resample `i`
/// draws from its own ChaCha stream, so results do not depend on thread
/// scheduling.
pub fn bootstrap_ci<T, F>(data: &[T], metric: F, n_resamples: usize, level: f64, seed: u64) -> Result<f64>
where
    T: Clone + Sync,
    F: Fn(&[T]) -> Option<f64> + Sync,
{
    if data.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "bootstrap needs at least 10 observations, got {}",
            data.len()
        )));
    }
    if !(0.0 < level && level < 1.0) || n_resamples < 2 {
        return Err(Error::InvalidInput("bad bootstrap level or resample count".into()));
    }
    let mut values: Vec<f64> = (0..n_resamples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let sample: Vec<T> = (0..data.len())
                .map(|_| data[rng.random_range(0..data.len())].clone())
                .collect();
            metric(&sample).filter(|v| v.is_finite())
        })
        .collect();
    if values.len() < 2 {
        return Err(Error::Degenerate("metric undefined on almost every resample".into()));
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&values, 1.0 - tail) - quantile(&values, tail)) / 2.0)
}

/// One row of helpfulness evaluation input.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItem {
    pub group: String,
    pub predicted: f64,
    pub gold: f64,
}

/// MSE, Pearson and mean per-group NDCG@1 with bootstrap half-widths.
pub fn evaluate_helpfulness(items: &[ScoredItem], n_resamples: usize, seed: u64) -> Result<Vec<MetricReport>> {
    let pred: Vec<f64> = items.iter().map(|i| i.predicted).collect();
    let gold: Vec<f64> = items.iter().map(|i| i.gold).collect();
    let n = items.len();
    let pairs: Vec<(f64, f64)> = pred.iter().copied().zip(gold.iter().copied()).collect();
    let mse_of = |s: &[(f64, f64)]| {
        let (p, g): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
        mse(&p, &g).ok()
    };
    let pearson_of = |s: &[(f64, f64)]| {
        let (p, g): (Vec<f64>, Vec<f64>) = s.iter().copied().unzip();
        pearson(&p, &g).ok()
    };
    let mut out = vec![
        MetricReport::new("mse", mse(&pred, &gold)?, n),
        MetricReport::new("pearson", pearson(&pred, &gold)?, n),
    ];
    if n >= 10 {
        out[0] = out[0]
            .clone()
            .with_ci(bootstrap_ci(&pairs, mse_of, n_resamples, DEFAULT_LEVEL, seed)?);
        out[1] = out[1]
            .clone()
            .with_ci(bootstrap_ci(&pairs, pearson_of, n_resamples, DEFAULT_LEVEL, seed)?);
    }
    let rows: Vec<(String, f64, f64)> = items.iter().map(|i| (i.group.clone(), i.predicted, i.gold)).collect();
    let (ndcg1, per_group) = mean_ndcg_by_group(&rows, 1, Gain::Exponential)?;
    let mut report = MetricReport::new("ndcg", ndcg1, per_group.len()).with_k(1);
    let group_values: Vec<f64> = per_group.iter().map(|(_, v)| *v).collect();
    if group_values.len() >= 10 {
        let mean_of = |s: &[f64]| Some(s.iter().sum::<f64>() / s.len() as f64);
        report = report.with_ci(bootstrap_ci(&group_values, mean_of, n_resamples, DEFAULT_LEVEL, seed)?);
    }
    out.push(report);
    Ok(out)
}
