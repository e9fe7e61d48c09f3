//! Annotation reliability and data analyses: annotator agreement,
//! split-half reliability, vote convergence, internal consistency,
//! helpful/unhelpful review contrast, length and sentiment relationships,
//! and score histograms.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::evalmetrics::pearson;
use crate::sentiment::{SentimentLabel, SentimentProvider};
use crate::textvec::{cosine_similarity, SentenceEmbedding};

// ---------------------------------------------------------------------------
// Student-t distribution
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    const MAX_ITER: usize = 20_000;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let fix = |v: f64| if v.abs() < TINY { TINY } else { v };
    let mut c = 1.0;
    let mut d = 1.0 / fix(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / fix(1.0 + aa * d);
        c = fix(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / fix(1.0 + aa * d);
        c = fix(1.0 + aa / c);
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

/// Two-tailed p-value P(|T| ≥ |t|) for Student's t with `dof` degrees of freedom.
pub fn student_t_two_tailed(t: f64, dof: f64) -> f64 {
    if t.is_nan() || dof.is_nan() || dof <= 0.0 {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TTestKind {
    Student,
    Welch,
    PairedTwoTailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub kind: TTestKind,
    pub dof: f64,
    /// Standard error was zero; the statistic is 0 or ±∞.
    pub degenerate: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn finish(diff: f64, se: f64, dof: f64, kind: TTestKind) -> TTestResult {
    if se == 0.0 || !se.is_finite() {
        let (statistic, p_value) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(diff), 0.0)
        };
        return TTestResult {
            statistic,
            p_value,
            kind,
            dof,
            degenerate: true,
        };
    }
    let statistic = diff / se;
    TTestResult {
        statistic,
        p_value: student_t_two_tailed(statistic, dof),
        kind,
        dof,
        degenerate: false,
    }
}

/// Two-sample or paired t-test; the statistic has the sign of mean(a) − mean(b).
pub fn t_test(a: &[f64], b: &[f64], kind: TTestKind) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "t-test needs at least 2 observations per sample, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("t-test input contains non-finite values".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    match kind {
        TTestKind::Student => {
            let (ma, va) = mean_var(a);
            let (mb, vb) = mean_var(b);
            let dof = na + nb - 2.0;
            let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / dof;
            Ok(finish(ma - mb, (pooled * (1.0 / na + 1.0 / nb)).sqrt(), dof, kind))
        }
        TTestKind::Welch => {
            let (ma, va) = mean_var(a);
            let (mb, vb) = mean_var(b);
            let (sa, sb) = (va / na, vb / nb);
            let dof = if sa + sb > 0.0 {
                (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0))
            } else {
                na + nb - 2.0
            };
            Ok(finish(ma - mb, (sa + sb).sqrt(), dof, kind))
        }
        TTestKind::PairedTwoTailed => {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch {
                    expected: a.len(),
                    actual: b.len(),
                });
            }
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let (md, vd) = mean_var(&d);
            Ok(finish(md, (vd / na).sqrt(), na - 1.0, kind))
        }
    }
}

// ---------------------------------------------------------------------------
// Vote matrix
// ---------------------------------------------------------------------------

/// Sparse sentence × annotator rating matrix.
#[derive(Debug, Clone, Default)]
pub struct VoteMatrix {
    rows: Vec<String>,
    annotators: Vec<String>,
    annotator_index: HashMap<String, usize>,
    votes: Vec<Vec<(usize, u8)>>,
}

impl VoteMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a row. A repeated annotator within the row keeps the last rating.
    pub fn push_row<S: AsRef<str>>(&mut self, row_id: impl Into<String>, ratings: &[(S, u8)]) -> Result<()> {
        let row_id = row_id.into();
        if let Some((_, bad)) = ratings.iter().find(|(_, r)| *r > 2) {
            return Err(Error::InvalidInput(format!(
                "row {row_id}: rating {bad} outside {{0,1,2}}"
            )));
        }
        let mut row: Vec<(usize, u8)> = Vec::with_capacity(ratings.len());
        for (annotator, rating) in ratings {
            let key = annotator.as_ref();
            let idx = match self.annotator_index.get(key) {
                Some(&i) => i,
                None => {
                    self.annotators.push(key.to_string());
                    self.annotator_index.insert(key.to_string(), self.annotators.len() - 1);
                    self.annotators.len() - 1
                }
            };
            match row.iter_mut().find(|(a, _)| *a == idx) {
                Some(slot) => slot.1 = *rating,
                None => row.push((idx, *rating)),
            }
        }
        self.rows.push(row_id);
        self.votes.push(row);
        Ok(())
    }

    pub fn from_annotated(data: &[AnnotatedSentence]) -> Result<Self> {
        let mut m = VoteMatrix::new();
        for s in data {
            let ratings: Vec<(&str, u8)> = s.ratings.iter().map(|r| (r.annotator_id.as_str(), r.rating)).collect();
            m.push_row(s.sentence.sentence_id.clone(), &ratings)?;
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_annotators(&self) -> usize {
        self.annotators.len()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.rows
    }

    pub fn annotator_ids(&self) -> &[String] {
        &self.annotators
    }

    pub fn vote_count(&self, row: usize) -> usize {
        self.votes[row].len()
    }

    /// `(annotator index, rating)` pairs for a row.
    pub fn row(&self, row: usize) -> &[(usize, u8)] {
        &self.votes[row]
    }

    pub fn row_mean(&self, row: usize) -> Option<f64> {
        let v = &self.votes[row];
        if v.is_empty() {
            return None;
        }
        Some(v.iter().map(|&(_, r)| u32::from(r)).sum::<u32>() as f64 / v.len() as f64)
    }
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

pub const DEFAULT_TRIM_FRACTION: f64 = 0.10;
const MIN_SHARED_ROWS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub mean_pearson: f64,
    pub retained: usize,
    pub trimmed: usize,
    pub per_annotator: Vec<(String, f64)>,
    pub excluded: Vec<String>,
}

/// Per annotator, Pearson between their ratings and the mean of the other
/// annotators on the same rows; the worst `trim_fraction` are dropped before
/// averaging.
pub fn annotator_vs_rest_agreement(votes: &VoteMatrix, trim_fraction: f64) -> Result<AgreementReport> {
    if votes.n_annotators() < 2 {
        return Err(Error::InvalidInput("agreement needs at least 2 annotators".into()));
    }
    if !(0.0..1.0).contains(&trim_fraction) {
        return Err(Error::InvalidInput(format!(
            "trim fraction {trim_fraction} outside [0,1)"
        )));
    }
    let mut own: Vec<Vec<f64>> = vec![Vec::new(); votes.n_annotators()];
    let mut rest: Vec<Vec<f64>> = vec![Vec::new(); votes.n_annotators()];
    for row in &votes.votes {
        if row.len() < 2 {
            continue;
        }
        let total: u32 = row.iter().map(|&(_, r)| u32::from(r)).sum();
        for &(a, r) in row {
            own[a].push(f64::from(r));
            rest[a].push(f64::from(total - u32::from(r)) / (row.len() - 1) as f64);
        }
    }
    let mut per_annotator = Vec::new();
    let mut excluded = Vec::new();
    for (a, id) in votes.annotators.iter().enumerate() {
        if own[a].len() < MIN_SHARED_ROWS {
            log::warn!("annotator {id}: only {} shared rows; excluded", own[a].len());
            excluded.push(id.clone());
            continue;
        }
        match pearson(&own[a], &rest[a]) {
            Ok(r) => per_annotator.push((id.clone(), r)),
            Err(Error::Degenerate(_)) => {
                log::warn!("annotator {id}: zero rating variance; excluded");
                excluded.push(id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    if per_annotator.is_empty() {
        return Err(Error::Degenerate("no annotator has a defined agreement score".into()));
    }
    let mut ranked: Vec<f64> = per_annotator.iter().map(|(_, r)| *r).collect();
    ranked.sort_by(|a, b| b.total_cmp(a));
    let trimmed = ((ranked.len() as f64) * trim_fraction).floor() as usize;
    let kept = &ranked[..ranked.len() - trimmed];
    Ok(AgreementReport {
        mean_pearson: kept.iter().sum::<f64>() / kept.len() as f64,
        retained: kept.len(),
        trimmed,
        per_annotator,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHalfReport {
    pub pearson: f64,
    pub rows_used: usize,
    pub half_sizes: (usize, usize),
}

/// Bisect the annotator pool at random, then correlate per-row means of the
/// two halves over rows rated by both.
pub fn split_half_agreement(votes: &VoteMatrix, seed: u64) -> Result<SplitHalfReport> {
    let n = votes.n_annotators();
    if n < 2 {
        return Err(Error::InvalidInput("split-half needs at least 2 annotators".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_first = vec![false; n];
    for &a in &order[..n / 2] {
        in_first[a] = true;
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for row in &votes.votes {
        let (mut s1, mut c1, mut s2, mut c2) = (0u32, 0u32, 0u32, 0u32);
        for &(a, r) in row {
            if in_first[a] {
                s1 += u32::from(r);
                c1 += 1;
            } else {
                s2 += u32::from(r);
                c2 += 1;
            }
        }
        if c1 > 0 && c2 > 0 {
            xs.push(f64::from(s1) / f64::from(c1));
            ys.push(f64::from(s2) / f64::from(c2));
        }
    }
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!(
            "only {} rows are covered by both halves",
            xs.len()
        )));
    }
    Ok(SplitHalfReport {
        pearson: pearson(&xs, &ys)?,
        rows_used: xs.len(),
        half_sizes: (n / 2, n - n / 2),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub points: Vec<(usize, f64)>,
    pub rows_used: usize,
    pub rows_excluded: usize,
}

impl ConvergenceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("votes,pearson\n");
        for (v, r) in &self.points {
            let _ = writeln!(out, "{v},{r}");
        }
        out
    }
}

/// Pearson between fixed per-row predictions and the mean of `v` votes
/// sampled without replacement, averaged over resamples, for each `v`.
pub fn vote_convergence_curve(
    votes: &VoteMatrix,
    predictions: &[f64],
    vote_counts: &[usize],
    resamples: usize,
    seed: u64,
) -> Result<ConvergenceCurve> {
    if predictions.len() != votes.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: votes.n_rows(),
            actual: predictions.len(),
        });
    }
    if resamples == 0 || vote_counts.is_empty() || vote_counts.contains(&0) {
        return Err(Error::InvalidInput(
            "need resamples >= 1 and positive vote counts".into(),
        ));
    }
    let need = *vote_counts.iter().max().expect("nonempty");
    let kept: Vec<usize> = (0..votes.n_rows()).filter(|&r| votes.vote_count(r) >= need).collect();
    let excluded = votes.n_rows() - kept.len();
    if excluded > 0 {
        log::warn!("{excluded} rows have fewer than {need} votes; excluded");
    }
    if kept.len() < 3 {
        return Err(Error::Degenerate(format!("only {} rows have {need} votes", kept.len())));
    }
    let preds: Vec<f64> = kept.iter().map(|&r| predictions[r]).collect();
    let mut points = Vec::with_capacity(vote_counts.len());
    for (vi, &v) in vote_counts.iter().enumerate() {
        let values: Vec<f64> = (0..resamples)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((vi * resamples + i) as u64);
                let means: Vec<f64> = kept
                    .iter()
                    .map(|&r| {
                        let row = votes.row(r);
                        let sum: u32 = row.choose_multiple(&mut rng, v).map(|&(_, x)| u32::from(x)).sum();
                        f64::from(sum) / v as f64
                    })
                    .collect();
                pearson(&preds, &means)
            })
            .collect::<Result<_>>()?;
        // identical resamples (every row fully used) keep their exact value
        let value = if values.iter().all(|x| x.to_bits() == values[0].to_bits()) {
            values[0]
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        points.push((v, value));
    }
    Ok(ConvergenceCurve {
        points,
        rows_used: kept.len(),
        rows_excluded: excluded,
    })
}

// ---------------------------------------------------------------------------
// Internal consistency
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n_groups: usize,
    pub mean_group_std: f64,
    pub mean_random_std: f64,
    /// Absent with a single group.
    pub t_test: Option<TTestResult>,
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let m = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Greedy similarity neighborhoods: each ungrouped sentence, in input
/// order, seeds a group with every later ungrouped sentence whose cosine
/// similarity to it exceeds `group_sigma`.
pub fn greedy_groups(embeddings: &[SentenceEmbedding], group_sigma: f64) -> Result<Vec<Vec<usize>>> {
    let mut assigned = vec![false; embeddings.len()];
    let mut groups = Vec::new();
    for i in 0..embeddings.len() {
        if assigned[i] {
            continue;
        }
        assigned[i] = true;
        let mut group = vec![i];
        for j in i + 1..embeddings.len() {
            if !assigned[j] && cosine_similarity(&embeddings[i], &embeddings[j])? > group_sigma {
                assigned[j] = true;
                group.push(j);
            }
        }
        groups.push(group);
    }
    Ok(groups)
}

/// Compare gold-score spread inside similarity groups with equal-size random
/// groups using a paired two-tailed t-test.
pub fn internal_consistency(
    embeddings: &[SentenceEmbedding],
    gold: &[f64],
    group_sigma: f64,
    seed: u64,
) -> Result<ConsistencyReport> {
    if embeddings.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: embeddings.len(),
            actual: gold.len(),
        });
    }
    if gold.len() < 2 {
        return Err(Error::InvalidInput(
            "internal consistency needs at least 2 sentences".into(),
        ));
    }
    let groups: Vec<Vec<usize>> = greedy_groups(embeddings, group_sigma)?
        .into_iter()
        .filter(|g| g.len() > 1)
        .collect();
    if groups.is_empty() {
        return Err(Error::Degenerate(format!(
            "no two sentences have similarity above {group_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let all: Vec<usize> = (0..gold.len()).collect();
    let mut group_std = Vec::with_capacity(groups.len());
    let mut random_std = Vec::with_capacity(groups.len());
    for g in &groups {
        group_std.push(population_std(g.iter().map(|&i| gold[i])));
        let sample: Vec<usize> = all.choose_multiple(&mut rng, g.len()).copied().collect();
        random_std.push(population_std(sample.iter().map(|&i| gold[i])));
    }
    let n = groups.len() as f64;
    let t_test = if groups.len() >= 2 {
        Some(t_test(&group_std, &random_std, TTestKind::PairedTwoTailed)?)
    } else {
        None
    };
    Ok(ConsistencyReport {
        n_groups: groups.len(),
        mean_group_std: group_std.iter().sum::<f64>() / n,
        mean_random_std: random_std.iter().sum::<f64>() / n,
        t_test,
    })
}

// ---------------------------------------------------------------------------
// Contrast sets
// ---------------------------------------------------------------------------

/// Scores for the sentences of one review.
#[derive(Debug, Clone, PartialEq)]
pub struct ReviewScores {
    pub review_id: String,
    pub helpful_votes: Option<u64>,
    pub n_sentences: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ContrastConfig {
    pub helpful_floor: u64,
    pub sample_size: usize,
    pub thresholds: Vec<f64>,
    pub seed: u64,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        ContrastConfig {
            helpful_floor: 50,
            sample_size: 500,
            thresholds: vec![1.0, 1.5],
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSet {
    pub name: String,
    pub n_reviews: usize,
    pub n_scores: usize,
    pub mean_score: f64,
    /// `(threshold, fraction of scores strictly above it)`
    pub ratio_above: Vec<(f64, f64)>,
    pub mean_sentences_per_review: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTable {
    pub helpful: ContrastSet,
    pub unhelpful: ContrastSet,
    pub student: TTestResult,
    pub welch: TTestResult,
}

fn summarize_set(name: &str, reviews: &[&ReviewScores], thresholds: &[f64]) -> Result<(ContrastSet, Vec<f64>)> {
    let scores: Vec<f64> = reviews.iter().flat_map(|r| r.scores.iter().copied()).collect();
    if scores.is_empty() {
        return Err(Error::Degenerate(format!("{name} set has no scored sentences")));
    }
    let n = scores.len() as f64;
    let set = ContrastSet {
        name: name.to_string(),
        n_reviews: reviews.len(),
        n_scores: scores.len(),
        mean_score: scores.iter().sum::<f64>() / n,
        ratio_above: thresholds
            .iter()
            .map(|&t| (t, scores.iter().filter(|&&s| s > t).count() as f64 / n))
            .collect(),
        mean_sentences_per_review: reviews.iter().map(|r| r.n_sentences).sum::<usize>() as f64 / reviews.len() as f64,
    };
    Ok((set, scores))
}

fn sample_reviews<'a>(set: Vec<&'a ReviewScores>, size: usize, rng: &mut ChaCha8Rng) -> Vec<&'a ReviewScores> {
    if set.len() <= size {
        set
    } else {
        set.choose_multiple(rng, size).copied().collect()
    }
}

/// Reviews with at least `helpful_floor` helpful votes against reviews with
/// none; reviews without a vote count belong to neither set.
pub fn contrast_sets(reviews: &[ReviewScores], cfg: &ContrastConfig) -> Result<ContrastTable> {
    let helpful: Vec<&ReviewScores> = reviews
        .iter()
        .filter(|r| r.helpful_votes.is_some_and(|v| v >= cfg.helpful_floor))
        .collect();
    let unhelpful: Vec<&ReviewScores> = reviews.iter().filter(|r| r.helpful_votes == Some(0)).collect();
    if helpful.is_empty() || unhelpful.is_empty() {
        return Err(Error::Degenerate(format!(
            "contrast needs both sets nonempty (helpful {}, unhelpful {})",
            helpful.len(),
            unhelpful.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let helpful = sample_reviews(helpful, cfg.sample_size, &mut rng);
    let unhelpful = sample_reviews(unhelpful, cfg.sample_size, &mut rng);
    let (h, hs) = summarize_set("helpful", &helpful, &cfg.thresholds)?;
    let (u, us) = summarize_set("unhelpful", &unhelpful, &cfg.thresholds)?;
    Ok(ContrastTable {
        student: t_test(&hs, &us, TTestKind::Student)?,
        welch: t_test(&hs, &us, TTestKind::Welch)?,
        helpful: h,
        unhelpful: u,
    })
}

// ---------------------------------------------------------------------------
// Length, sentiment, distribution
// ---------------------------------------------------------------------------

/// Pearson between sentence length in characters and gold score.
pub fn length_helpfulness_correlation(items: &[(usize, f64)]) -> Result<f64> {
    let len: Vec<f64> = items.iter().map(|(l, _)| *l as f64).collect();
    let score: Vec<f64> = items.iter().map(|(_, s)| *s).collect();
    pearson(&len, &score)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentProbs {
    pub n: usize,
    pub helpful: usize,
    pub with_sentiment: usize,
    pub helpful_with_sentiment: usize,
    /// None when no sentence carries sentiment.
    pub p_helpful_given_sentiment: Option<f64>,
    /// None when no sentence is helpful.
    pub p_sentiment_given_helpful: Option<f64>,
}

impl SentimentProbs {
    pub fn from_counts(n: usize, helpful: usize, with_sentiment: usize, both: usize) -> Self {
        let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
        SentimentProbs {
            n,
            helpful,
            with_sentiment,
            helpful_with_sentiment: both,
            p_helpful_given_sentiment: ratio(both, with_sentiment),
            p_sentiment_given_helpful: ratio(both, helpful),
        }
    }
}

/// Helpful means gold ≥ `helpful_floor`; having sentiment means any label
/// other than neutral.
pub fn sentiment_helpfulness_probs(
    items: &[(&str, f64)],
    provider: &dyn SentimentProvider,
    helpful_floor: f64,
) -> Result<SentimentProbs> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no sentences".into()));
    }
    let texts: Vec<&str> = items.iter().map(|(t, _)| *t).collect();
    let labels = provider.classify_batch(&texts)?;
    let (mut helpful, mut sent, mut both) = (0, 0, 0);
    for ((_, g), r) in items.iter().zip(&labels) {
        let h = *g >= helpful_floor;
        let s = r.label != SentimentLabel::Neutral;
        helpful += usize::from(h);
        sent += usize::from(s);
        both += usize::from(h && s);
    }
    Ok(SentimentProbs::from_counts(items.len(), helpful, sent, both))
}

pub const DEFAULT_BIN_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub bin_width: f64,
    /// `(bin center, count)` for centers 0, w, 2w, … 2.
    pub bins: Vec<(f64, usize)>,
    pub mode: f64,
    pub n: usize,
}

impl ScoreHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,count\n");
        for (b, c) in &self.bins {
            let _ = writeln!(out, "{b:.3},{c}");
        }
        out
    }
}

fn n_bins(bin_width: f64) -> Result<usize> {
    let steps = 2.0 / bin_width;
    if !(bin_width > 0.0) || (steps - steps.round()).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("bin width {bin_width} must divide 2")));
    }
    Ok(steps.round() as usize + 1)
}

fn bin_of(score: f64, bin_width: f64, bins: usize) -> usize {
    ((score.clamp(0.0, 2.0) / bin_width).round() as usize).min(bins - 1)
}

/// Histogram over [0, 2]; each score goes to the nearest bin center. The
/// mode is the lowest bin with the largest count.
pub fn score_distribution(scores: &[f64], bin_width: f64) -> Result<ScoreHistogram> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores".into()));
    }
    let nb = n_bins(bin_width)?;
    let mut counts = vec![0usize; nb];
    for &s in scores {
        if !s.is_finite() {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        counts[bin_of(s, bin_width, nb)] += 1;
    }
    let mut mode = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[mode] {
            mode = i;
        }
    }
    Ok(ScoreHistogram {
        bin_width,
        bins: counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 * bin_width, c))
            .collect(),
        mode: mode as f64 * bin_width,
        n: scores.len(),
    })
}

/// Bin probabilities for the mean of `votes` independent uniform ratings
/// in {0, 1, 2}.
pub fn random_annotator_distribution(votes: usize, bin_width: f64) -> Result<Vec<f64>> {
    if votes == 0 {
        return Err(Error::InvalidInput("votes must be >= 1".into()));
    }
    let nb = n_bins(bin_width)?;
    // distribution of the vote sum by repeated convolution
    let mut sum = vec![1.0f64];
    for _ in 0..votes {
        let mut next = vec![0.0; sum.len() + 2];
        for (s, p) in sum.iter().enumerate() {
            for r in 0..3 {
                next[s + r] += p / 3.0;
            }
        }
        sum = next;
    }
    let mut bins = vec![0.0; nb];
    for (s, p) in sum.iter().enumerate() {
        bins[bin_of(s as f64 / votes as f64, bin_width, nb)] += p;
    }
    Ok(bins)
}
